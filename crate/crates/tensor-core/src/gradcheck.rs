//! Finite-difference gradient checker. Runs the supplied forward builder
//! once for the analytic gradients, then perturbs every parameter component
//! by +-h and compares against the central difference, all in f64.

use std::fmt;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tape::{Tape, Val};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Acceptance threshold on the worst per-component relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }

    /// Parameter with the worst error, for diagnostics.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} parameters, max rel err {:.3e} (tol {:.1e}): {}",
            self.checks.len(),
            self.max_rel_err(),
            self.tol,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        for c in &self.checks {
            writeln!(f, "  {:-40} {:.3e}", c.name, c.max_rel_err)?;
        }
        Ok(())
    }
}

/// Compare analytic gradients of a scalar loss against central finite
/// differences for every component of every parameter in `store`.
///
/// `forward` must rebuild the same graph from the store's current values on
/// each call; batch-norm running-state updates during the probe runs are
/// harmless because train-mode outputs depend only on batch statistics.
pub fn gradcheck<F>(
    store: &mut ParamStore<f64>,
    mut forward: F,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore<f64>, &mut Tape<f64>) -> Result<Val>,
{
    store.zero_grads();
    let mut tape = Tape::with_finite_checks();
    let loss = forward(store, &mut tape)?;
    if tape.value(loss).len() != 1 {
        return Err(TensorError::Contract(format!(
            "gradcheck requires a scalar loss, got shape {:?}",
            tape.value(loss).shape()
        )));
    }
    tape.backward(loss, store)?;

    let analytic: Vec<Vec<f64>> = store.params().iter().map(|p| p.grad.data().to_vec()).collect();
    let names: Vec<String> = store.params().iter().map(|p| p.name.clone()).collect();
    let ids: Vec<_> = store.param_ids().collect();

    let mut checks = Vec::with_capacity(ids.len());
    for (slot, &pid) in ids.iter().enumerate() {
        let comps = store.value(pid).len();
        let mut worst = 0.0f64;
        for i in 0..comps {
            let orig = store.value(pid).data()[i];

            store.value_mut(pid).data_mut()[i] = orig + step;
            let mut t = Tape::with_finite_checks();
            let l = forward(store, &mut t)?;
            let loss_plus = t.value(l).item()?;

            store.value_mut(pid).data_mut()[i] = orig - step;
            let mut t = Tape::with_finite_checks();
            let l = forward(store, &mut t)?;
            let loss_minus = t.value(l).item()?;

            store.value_mut(pid).data_mut()[i] = orig;

            let fd = (loss_plus - loss_minus) / (2.0 * step);
            let a = analytic[slot][i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
        checks.push(ParamCheck {
            name: names[slot].clone(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport { checks, tol })
}
