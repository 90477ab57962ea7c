//! Central finite-difference gradient checking.

use crate::graph::{Graph, Mode, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub analytic_norm: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error < tol || (self.analytic_norm < 1e-12 && self.max_abs_error < 1e-9)
    }
}

/// Checks the gradients of `f` with respect to every input. `f` builds a
/// scalar from leaves already placed on a fresh graph.
pub fn check_gradients(
    inputs: &[Tensor],
    step: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Var,
) -> Vec<GradCheckReport> {
    check_gradients_in(Mode::Train, inputs, step, f)
}

/// [`check_gradients`] on graphs built in the given mode.
pub fn check_gradients_in(
    mode: Mode,
    inputs: &[Tensor],
    step: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Var,
) -> Vec<GradCheckReport> {
    let mut g = Graph::new(mode);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars);
    let grads = g.backward(out);
    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::new(mode);
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };
    let mut reports = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        let mut work: Vec<Tensor> = inputs.to_vec();
        let mut numeric = Tensor::zeros(input.shape());
        for i in 0..input.numel() {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + step;
            let fp = eval(&work);
            work[k].data_mut()[i] = orig - step;
            let fm = eval(&work);
            work[k].data_mut()[i] = orig;
            numeric.data_mut()[i] = (fp - fm) / (2.0 * step);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let na = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        reports.push(GradCheckReport {
            rel_error: if denom > 0.0 { diff / denom } else { 0.0 },
            max_abs_error: analytic.max_abs_diff(&numeric),
            analytic_norm: na,
        });
    }
    reports
}
