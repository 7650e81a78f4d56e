use super::{ParamStore, Result, Tensor, TensorError};

/// Gradient magnitudes below this are compared on an absolute scale, since
/// central differences carry roughly `1e-16 * |loss| / eps` of round-off.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    /// Parameters whose worst coordinate exceeds the tolerance.
    pub fn flagged(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.max_rel_err >= self.tolerance)
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

/// Compares `analytic` gradients against central differences of `loss`,
/// perturbing every scalar of every parameter in `store` by `±eps`.
pub fn finite_difference_check<F>(
    mut loss: F,
    store: &ParamStore,
    analytic: &[Tensor],
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if analytic.len() != store.len() {
        return Err(TensorError::Contract(format!(
            "{} gradients for {} parameters",
            analytic.len(),
            store.len()
        )));
    }
    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (id, name, tensor) in store.iter() {
        if analytic[id.0].shape() != tensor.shape() {
            return Err(TensorError::Shape {
                op: "finite_difference_check",
                lhs: tensor.shape().to_vec(),
                rhs: analytic[id.0].shape().to_vec(),
            });
        }
        let mut check = ParamCheck {
            name: name.to_string(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = loss(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = loss(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(TensorError::NonFinite {
                    op: "finite_difference_check",
                });
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[id.0].data()[i];
            let err = relative_error(a, numeric);
            if err > check.max_rel_err || i == 0 {
                check.max_rel_err = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport { params, tolerance })
}
