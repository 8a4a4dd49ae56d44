//! Finite-difference verification of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error `|a − n| / max(|a|, |n|, floor)`.
/// Entries whose true gradient is below the floor are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Maximum relative error per checked tensor.
    pub max_rel_err: Vec<f64>,
    /// Analytic gradients as returned by the reverse sweep.
    pub analytic: Vec<Tensor>,
    /// Names of the checked tensors (parameter names, or `input{i}`).
    pub names: Vec<String>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Checks the gradient of a scalar function of free input tensors.
pub fn grad_check<F>(f: F, inputs: &[Tensor]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let empty = ParamStore::new();
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new(&empty);
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new(&empty);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_err: Vec::new(),
        analytic: Vec::new(),
        names: Vec::new(),
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .input(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let mut worst = 0.0f64;
        for j in 0..inputs[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
        report.max_rel_err.push(worst);
        report.analytic.push(analytic);
        report.names.push(format!("input{i}"));
    }
    Ok(report)
}

/// Checks the gradient of a scalar function of every trainable parameter in
/// `store`. The closure builds the forward pass on the supplied graph.
pub fn grad_check_params<F>(store: &ParamStore, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let out = f(&mut g)?;
    let grads = g.backward(out)?;
    drop(g);

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: Vec::new(),
        analytic: Vec::new(),
        names: Vec::new(),
    };
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let shape = store.get(id).value.shape().to_vec();
        let analytic = grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(&shape));
        let mut worst = 0.0f64;
        for j in 0..analytic.numel() {
            let orig = work.get(id).value.data()[j];
            work.get_mut(id).value.data_mut()[j] = orig + FD_STEP;
            let plus = eval_store(&work, &f)?;
            work.get_mut(id).value.data_mut()[j] = orig - FD_STEP;
            let minus = eval_store(&work, &f)?;
            work.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
        report.max_rel_err.push(worst);
        report.analytic.push(analytic);
        report.names.push(store.get(id).name.clone());
    }
    Ok(report)
}

fn eval_store<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let out = f(&mut g)?;
    Ok(g.value(out).data()[0])
}
