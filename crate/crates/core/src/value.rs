//! The value-function abstraction consumed by validation, the PDE residual
//! and the planner.

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};

/// `V(t, x)` with its exact time derivative and costate `grad_x V`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    pub dv_dt: f64,
    pub grad_x: Vec<f64>,
}

pub trait ValueFunction: Send + Sync {
    fn system(&self) -> &SystemSpec;

    fn evaluate(&self, t: f64, x: &[f64]) -> Result<EvalResult>;

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.evaluate(t, x).map(|e| e.value)
    }
}

pub(crate) fn check_time(sys: &SystemSpec, t: f64) -> Result<()> {
    if (0.0..=sys.horizon).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange { t, horizon: sys.horizon })
    }
}

/// `V = l`, the exact value for systems whose boundary function is already
/// stationary (the Particle system).
#[derive(Clone, Debug)]
pub struct BoundaryValue {
    pub system: SystemSpec,
}

impl BoundaryValue {
    pub fn new(system: SystemSpec) -> Self {
        Self { system }
    }
}

impl ValueFunction for BoundaryValue {
    fn system(&self) -> &SystemSpec {
        &self.system
    }

    fn evaluate(&self, t: f64, x: &[f64]) -> Result<EvalResult> {
        check_time(&self.system, t)?;
        let (value, grad_x) = self.system.boundary_value_and_gradient(x);
        Ok(EvalResult { value, dv_dt: 0.0, grad_x })
    }
}

/// Pointwise residual `|dV/dt + min{H(x, grad V), 0}|` of any value function.
pub fn pde_residual_at(value: &dyn ValueFunction, t: f64, x: &[f64]) -> Result<f64> {
    let e = value.evaluate(t, x)?;
    let h = value.system().hamiltonian(x, &e.grad_x);
    Ok((e.dv_dt + h.min(0.0)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_value_is_stationary_for_particles() {
        let v = BoundaryValue::new(SystemSpec::particle());
        let x = [0.1, 0.2, -0.4, 0.5];
        let e = v.evaluate(0.3, &x).unwrap();
        assert_eq!(e.value, v.system().boundary_value(&x));
        assert!(pde_residual_at(&v, 0.3, &x).unwrap() < 1e-15);
        assert!(matches!(v.evaluate(1.5, &x), Err(Error::TimeOutOfRange { .. })));
    }
}
