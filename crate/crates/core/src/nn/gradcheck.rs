use super::params::{Grads, ParamSet};
use crate::error::{IlbError, Result};

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over parameter tensors of `‖g_a - g_n‖ / max(‖g_a‖ + ‖g_n‖, 1e-12)`.
    pub max_relative_error: f64,
    pub worst_tensor: String,
    /// Same ratio taken entry by entry; dominated by entries whose true
    /// gradient is near zero, where central differences only see round-off.
    pub max_entry_relative_error: f64,
    pub worst_entry: (String, usize, usize),
    pub worst_entry_values: (f64, f64),
}

fn ratio(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1e-12)
}

/// Relative disagreement between analytic gradients and central finite
/// differences; see [`GradCheckReport::max_relative_error`].
pub fn max_relative_error(
    params: &ParamSet,
    epsilon: f64,
    loss_and_grads: impl Fn(&ParamSet) -> Result<(f64, Grads)>,
    loss: impl Fn(&ParamSet) -> Result<f64>,
) -> Result<f64> {
    Ok(check_gradients(params, epsilon, loss_and_grads, loss)?.max_relative_error)
}

pub fn check_gradients(
    params: &ParamSet,
    epsilon: f64,
    loss_and_grads: impl Fn(&ParamSet) -> Result<(f64, Grads)>,
    loss: impl Fn(&ParamSet) -> Result<f64>,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(IlbError::Domain(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    let (_, analytic) = loss_and_grads(params)?;
    if !analytic.all_finite() {
        return Err(IlbError::Numerical("non-finite analytic gradient".into()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        max_entry_relative_error: 0.0,
        worst_entry: (String::new(), 0, 0),
        worst_entry_values: (0.0, 0.0),
    };
    let mut probe = params.clone();
    for id in params.ids() {
        let (rows, cols) = params.get(id).dim();
        let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let orig = params.get(id)[[r, c]];
                probe.get_mut(id)[[r, c]] = orig + epsilon;
                let up = loss(&probe)?;
                probe.get_mut(id)[[r, c]] = orig - epsilon;
                let down = loss(&probe)?;
                probe.get_mut(id)[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * epsilon);
                if !numeric.is_finite() {
                    return Err(IlbError::Numerical(format!(
                        "non-finite numeric gradient for {}",
                        params.name(id)
                    )));
                }
                let a = analytic.get(id)[[r, c]];
                diff_sq += (a - numeric).powi(2);
                a_sq += a * a;
                n_sq += numeric * numeric;
                let err = ratio((a - numeric).abs(), a.abs() + numeric.abs());
                if err > report.max_entry_relative_error || report.worst_entry.0.is_empty() {
                    report.max_entry_relative_error = err;
                    report.worst_entry = (params.name(id).to_string(), r, c);
                    report.worst_entry_values = (a, numeric);
                }
            }
        }
        let err = ratio(diff_sq.sqrt(), a_sq.sqrt() + n_sq.sqrt());
        if err > report.max_relative_error || report.worst_tensor.is_empty() {
            report.max_relative_error = err;
            report.worst_tensor = params.name(id).to_string();
        }
    }
    Ok(report)
}
