//! Central finite-difference gradient checking.

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Fault injection: add 1.0 to the first analytic gradient component of
    /// the named parameter before comparing.
    pub corrupt_param: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            corrupt_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub components: usize,
    pub max_rel_error: f64,
    pub worst_component: usize,
    /// Components whose perturbation moved some ReLU across its kink.
    pub non_comparable: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(move |p| p.max_rel_error >= self.tolerance)
    }

    pub fn compared_components(&self) -> usize {
        self.params.iter().map(|p| p.components - p.non_comparable).sum()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of `forward` against central differences
/// for every scalar component of every parameter in `store`. `forward` must
/// be deterministic: no dropout, no sampling.
pub fn grad_check<F>(store: &mut ParamStore, mut forward: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var>,
{
    let (grads, base_signature) = {
        let mut tape = Tape::new(store);
        let loss = forward(&mut tape)?;
        if !tape.value(loss).is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let sig = tape.relu_signature();
        (tape.backward(loss)?, sig)
    };

    let mut eval = |store: &ParamStore| -> Result<(f64, u64)> {
        let mut tape = Tape::new(store);
        let loss = forward(&mut tape)?;
        Ok((tape.value(loss).item(), tape.relu_signature()))
    };

    let ids: Vec<ParamId> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let name = store.get(id).name.clone();
        let n = store.value(id).len();
        let mut analytic: Vec<f64> = match grads.get(id) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; n],
        };
        if analytic.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        if config.corrupt_param.as_deref() == Some(name.as_str()) && n > 0 {
            analytic[0] += 1.0;
        }

        let mut check = ParamCheck {
            name: name.clone(),
            components: n,
            max_rel_error: 0.0,
            worst_component: 0,
            non_comparable: 0,
        };
        for (k, &a) in analytic.iter().enumerate() {
            let original = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = original + config.epsilon;
            let (f_plus, sig_plus) = eval(store)?;
            store.value_mut(id).data_mut()[k] = original - config.epsilon;
            let (f_minus, sig_minus) = eval(store)?;
            store.value_mut(id).data_mut()[k] = original;

            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing `{name}`[{k}]")));
            }
            if sig_plus != base_signature || sig_minus != base_signature {
                check.non_comparable += 1;
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * config.epsilon);
            let err = relative_error(a, numeric);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_component = k;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        params,
        tolerance: config.tolerance,
    })
}
