//! Downstream tasks (extrapolation, feedback, positioning) and the three
//! training regimes.

mod heads;
mod train;

use std::fmt;
use std::str::FromStr;

pub use heads::{
    extrapolate, extrapolate_with_plan, feedback_roundtrip, position_predict, FeedbackBottleneck, PositionHead,
    TaskHead, TaskModel, DEFAULT_CODE_LEN,
};
pub use train::{evaluate, train_task, zero_shot_eval, Evaluation, TrainConfig, TrainHistory, ValPoint};

use crate::error::{Error, Result};
use crate::model::MaskDomain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// Random initialization, everything trained.
    Supervised,
    /// Pretrained encoder held fixed; only the task decoder or head trains.
    Frozen,
    /// Pretrained weights, everything trained.
    Finetune,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Supervised, Regime::Frozen, Regime::Finetune];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Supervised => "supervised",
            Regime::Frozen => "frozen",
            Regime::Finetune => "finetune",
        }
    }

    pub fn needs_checkpoint(self) -> bool {
        self != Regime::Supervised
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?} (supervised|frozen|finetune)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    ExtrapolationAntenna,
    ExtrapolationSubcarrier,
    Feedback,
    Positioning,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::ExtrapolationAntenna,
        TaskKind::ExtrapolationSubcarrier,
        TaskKind::Feedback,
        TaskKind::Positioning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ExtrapolationAntenna => "extrapolation-antenna",
            TaskKind::ExtrapolationSubcarrier => "extrapolation-subcarrier",
            TaskKind::Feedback => "feedback",
            TaskKind::Positioning => "positioning",
        }
    }

    /// Masked axis for the extrapolation tasks.
    pub fn mask_domain(self) -> Option<MaskDomain> {
        match self {
            TaskKind::ExtrapolationAntenna => Some(MaskDomain::Antenna),
            TaskKind::ExtrapolationSubcarrier => Some(MaskDomain::Subcarrier),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown task {s:?} (extrapolation-antenna|extrapolation-subcarrier|feedback|positioning)"
            ))
        })
    }
}
