//! Finite-difference gradient checks.

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};

/// Denominator floor for the relative error, so near-zero gradients are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare analytic gradients of the scalar built by `f` against central
/// differences for every entry of the parameters in `ids`.
pub fn check_gradients<F>(store: &mut ParamStore, ids: &[ParamId], step: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        Ok(g.value(loss).scalar())
    };

    let mut report = GradReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for &id in ids {
        for i in 0..store.values(id).len() {
            let orig = store.values(id).data()[i];
            store.values_mut(id).data_mut()[i] = orig + step;
            let plus = eval(store)?;
            store.values_mut(id).data_mut()[i] = orig - step;
            let minus = eval(store)?;
            store.values_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.get(id).name.clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
