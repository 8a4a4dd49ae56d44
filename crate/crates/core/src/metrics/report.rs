use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub quantile: f64,
    pub error_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositioningStats {
    pub mean_error_m: f64,
    pub rmse_m: f64,
    pub cdf: Vec<CdfPoint>,
}

/// One evaluation result. Field order here is the order on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub regime: String,
    pub source_scenario: String,
    pub target_scenario: String,
    pub sample_count: usize,
    pub nmse_linear: Option<f64>,
    pub nmse_db: Option<f64>,
    /// Present iff the task is positioning.
    pub positioning: Option<PositioningStats>,
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
    /// Free-form run facts, e.g. parameter checksums or compression ratio.
    pub notes: BTreeMap<String, String>,
}

/// Key of a report in a comparison table.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReportKey {
    pub task: String,
    pub regime: String,
    pub scenario: String,
}

impl MetricsReport {
    pub fn key(&self) -> ReportKey {
        ReportKey {
            task: self.task.clone(),
            regime: self.regime.clone(),
            scenario: if self.source_scenario == self.target_scenario {
                self.target_scenario.clone()
            } else {
                format!("{}->{}", self.source_scenario, self.target_scenario)
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, report.to_json()).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetricsReport::from_json(path, &text)
}

/// Plain-text table of reports keyed by (task, regime, scenario). Later
/// reports with a duplicate key replace earlier ones.
pub fn comparison_table(reports: &[MetricsReport]) -> String {
    let rows: BTreeMap<ReportKey, &MetricsReport> = reports.iter().map(|r| (r.key(), r)).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<12} {:<20} {:>8} {:>12} {:>10}",
        "task", "regime", "scenario", "samples", "nmse_db", "rmse_m"
    );
    for (k, r) in rows {
        let nmse = r.nmse_db.map_or("-".into(), |v| format!("{v:.3}"));
        let rmse = r.positioning.as_ref().map_or("-".into(), |p| format!("{:.3}", p.rmse_m));
        let _ = writeln!(
            out,
            "{:<24} {:<12} {:<20} {:>8} {:>12} {:>10}",
            k.task, k.regime, k.scenario, r.sample_count, nmse, rmse
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_report() -> MetricsReport {
        MetricsReport {
            task: "positioning".into(),
            regime: "finetune".into(),
            source_scenario: "UMi-3.5".into(),
            target_scenario: "UMi-3.5".into(),
            sample_count: 400,
            nmse_linear: None,
            nmse_db: None,
            positioning: Some(PositioningStats {
                mean_error_m: 1.0 / 3.0,
                rmse_m: 0.1 + 0.2,
                cdf: vec![
                    CdfPoint {
                        quantile: 0.5,
                        error_m: 1e-300,
                    },
                    CdfPoint {
                        quantile: 0.9,
                        error_m: 12345.678901234567,
                    },
                ],
            }),
            seeds: [("train".to_string(), u64::MAX), ("data".to_string(), 7)].into(),
            config_hash: "ab".repeat(32),
            notes: [("encoder_checksum".to_string(), "x".to_string())].into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let r = sample_report();
        write_report(&path, &r).unwrap();
        assert_eq!(read_report(&path).unwrap(), r);
        let first = fs::read(&path).unwrap();
        write_report(&path, &read_report(&path).unwrap()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn missing_field_is_a_named_parse_error() {
        let text = sample_report().to_json().replace("\"config_hash\"", "\"renamed\"");
        match MetricsReport::from_json(Path::new("r.json"), &text) {
            Err(Error::Parse { message, location, .. }) => {
                assert!(message.contains("config_hash"), "{message}");
                assert!(location.starts_with("line"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn table_keys_by_task_regime_scenario() {
        let a = sample_report();
        let mut b = sample_report();
        b.regime = "frozen".into();
        let mut c = sample_report();
        c.target_scenario = "UMi-5".into();
        let table = comparison_table(&[a.clone(), b, c, a]);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("UMi-3.5->UMi-5"));
        let frozen = table.lines().position(|l| l.contains("frozen")).unwrap();
        let finetune = table.lines().position(|l| l.contains("finetune")).unwrap();
        assert!(finetune < frozen);
    }
}
