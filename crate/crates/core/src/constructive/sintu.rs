use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};

/// Below this `|cos s|` the SinTU kink is treated as smooth and the
/// second-order construction is used.
pub const COS_ZERO_TOL: f64 = 1e-12;

/// `φ_ε(x) = Σ u_j·SinTU_s(v_j·x + w_j) + offset`, an approximation of
/// ReLU on bounded intervals that sharpens as `ε → 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SintuRelu {
    pub s: f64,
    pub eps: f64,
    /// Difference-quotient step, present only when `cos s = 0`.
    pub eta: Option<f64>,
    pub neurons: Vec<(f64, f64, f64)>,
    pub offset: f64,
}

impl SintuRelu {
    pub fn eval(&self, x: f64) -> f64 {
        let rho = ActivationKind::SinTU(self.s);
        let mut acc = 0.0;
        for &(u, v, w) in &self.neurons {
            acc += u * rho.value(v * x + w);
        }
        acc + self.offset
    }

    pub fn width(&self) -> usize {
        self.neurons.len()
    }

    /// Max of `|φ_ε − ReLU|` over `n` evenly spaced points of `[−b, b]`.
    pub fn sup_relu_error(&self, b: f64, n: usize) -> f64 {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = -b + 2.0 * b * i as f64 / (n - 1) as f64;
                (self.eval(x) - x.max(0.0)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds `φ_ε` from SinTU_s neurons.
///
/// With `L = cos s ≠ 0` one neuron suffices:
/// `φ_ε(x) = (ρ(s + εx) − ρ(s)) / (Lε)`.
/// When `cos s = 0` the first-order term vanishes, so the construction
/// differentiates once more: with `L̃ = −sin s` and `η = ε²`,
/// `φ_ε(x) = (ρ(s + εx + η) − ρ(s + εx)) / (ηL̃ε)` using two neurons
/// (the `−η·ρ′(s)` correction is zero here).
pub fn sintu_relu_approx(s: f64, eps: f64) -> Result<SintuRelu> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    if !s.is_finite() {
        return Err(Error::Numeric(format!("SinTU threshold {s}")));
    }
    let rho_s = s.sin();
    let lead = s.cos();
    if lead.abs() > COS_ZERO_TOL {
        let u = 1.0 / (lead * eps);
        // Written as −(u·ρ(s)) so the flat branch cancels exactly.
        return Ok(SintuRelu {
            s,
            eps,
            eta: None,
            neurons: vec![(u, eps, s)],
            offset: -(u * rho_s),
        });
    }
    let eta = eps * eps;
    let l_tilde = -rho_s;
    let u = 1.0 / (eta * l_tilde * eps);
    Ok(SintuRelu {
        s,
        eps,
        eta: Some(eta),
        neurons: vec![(u, eps, s + eta), (-u, eps, s)],
        offset: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn flat_branch_is_exactly_zero() {
        let phi = sintu_relu_approx(0.0, 1e-3).unwrap();
        assert_eq!(phi.eval(-1.0), 0.0);
        assert_eq!(phi.eval(-1e-9), 0.0);
        assert_eq!(phi.width(), 1);
        let phi = sintu_relu_approx(-PI, 1e-2).unwrap();
        assert_eq!(phi.eval(-0.5), 0.0);
    }

    #[test]
    fn value_at_one() {
        let phi = sintu_relu_approx(0.0, 1e-3).unwrap();
        let want = (1e-3f64).sin() / 1e-3;
        assert!((phi.eval(1.0) - want).abs() < 1e-15);
        assert!((phi.eval(1.0) - 0.99999983).abs() < 1e-8);
    }

    #[test]
    fn taylor_bound_at_s_zero() {
        for eps in [1e-1, 1e-2, 1e-3] {
            let phi = sintu_relu_approx(0.0, eps).unwrap();
            assert!(
                phi.sup_relu_error(1.0, 10_000) <= eps * eps / 6.0 + 1e-12,
                "eps = {eps}"
            );
        }
    }

    #[test]
    fn error_shrinks_with_eps() {
        for s in [0.0, -PI, 1.0, FRAC_PI_2, -FRAC_PI_2] {
            for eps in [1e-1, 1e-2, 1e-3] {
                let e1 = sintu_relu_approx(s, eps)
                    .unwrap()
                    .sup_relu_error(1.0, 10_000);
                let e2 = sintu_relu_approx(s, eps / 2.0)
                    .unwrap()
                    .sup_relu_error(1.0, 10_000);
                assert!(e2 < e1, "s = {s}, eps = {eps}: {e2} !< {e1}");
            }
        }
    }

    #[test]
    fn smooth_kink_uses_two_neurons() {
        let phi = sintu_relu_approx(FRAC_PI_2, 1e-2).unwrap();
        assert_eq!(phi.eta, Some(1e-4));
        assert_eq!(phi.width(), 2);
        assert_eq!(phi.eval(-1.0), 0.0);
        assert!(phi.sup_relu_error(1.0, 2000) < 1e-2);
    }

    #[test]
    fn rejects_eps_outside_unit_interval() {
        assert!(sintu_relu_approx(0.0, 0.0).is_err());
        assert!(sintu_relu_approx(0.0, 1.0).is_err());
    }
}
