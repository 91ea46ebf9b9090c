//! Spectral constants of the source.
//!
//! `λ(s)` is the dominant eigenvalue of `P(s) = (p_ij^{-s})`. At `s = -1`
//! the matrix is the transition matrix itself, so `λ(-1) = 1`, and the first
//! derivative there equals the entropy rate. The variance constant
//!
//! ```text
//! σ² = (λ̈(-1) - λ̇(-1)²) / λ̇(-1)³
//! ```
//!
//! is also available in closed form through the per-state entropies; the two
//! routes are computed independently so each certifies the other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{MarkovChain, Symbol};

/// Entries of `P(s)` and their first two derivatives in `s`.
struct Powers {
    a: [f64; 3],
    d: [f64; 3],
    bc: [f64; 3],
}

impl Powers {
    fn new(chain: &MarkovChain, s: f64) -> Self {
        let term = |p: f64| {
            let l = p.ln();
            let v = (-s * l).exp();
            [v, -l * v, l * l * v]
        };
        let lbc = chain.p01().ln() + chain.p10().ln();
        let bc = (-s * lbc).exp();
        Powers {
            a: term(chain.p00()),
            d: term(chain.p11()),
            bc: [bc, -lbc * bc, lbc * lbc * bc],
        }
    }
}

/// Dominant eigenvalue of `(p_ij^{-s})`.
pub fn lambda_of_s(chain: &MarkovChain, s: f64) -> f64 {
    let Powers { a, d, bc } = Powers::new(chain, s);
    // Discriminant written as a sum of non-negative terms.
    let disc = (a[0] - d[0]).powi(2) + 4.0 * bc[0];
    0.5 * (a[0] + d[0] + disc.sqrt())
}

/// `(λ(s), λ'(s), λ''(s))` from the closed 2×2 form.
pub fn lambda_jet(chain: &MarkovChain, s: f64) -> [f64; 3] {
    let Powers { a, d, bc } = Powers::new(chain, s);
    let diff = [a[0] - d[0], a[1] - d[1], a[2] - d[2]];
    let disc = diff[0] * diff[0] + 4.0 * bc[0];
    let disc1 = 2.0 * diff[0] * diff[1] + 4.0 * bc[1];
    let disc2 = 2.0 * diff[1] * diff[1] + 2.0 * diff[0] * diff[2] + 4.0 * bc[2];
    let r = disc.sqrt();
    let r1 = disc1 / (2.0 * r);
    let r2 = disc2 / (2.0 * r) - disc1 * disc1 / (4.0 * r * r * r);
    [
        0.5 * (a[0] + d[0] + r),
        0.5 * (a[1] + d[1] + r1),
        0.5 * (a[2] + d[2] + r2),
    ]
}

/// `(λ̇(-1), λ̈(-1))`.
pub fn lambda_derivatives(chain: &MarkovChain) -> (f64, f64) {
    let [_, d1, d2] = lambda_jet(chain, -1.0);
    (d1, d2)
}

/// Central differences of `λ` at `s = -1` with two Richardson levels
/// (steps `h`, `h/2`, `h/4`).
pub fn lambda_derivatives_numeric(chain: &MarkovChain, h: f64) -> (f64, f64) {
    let lam = |s: f64| lambda_of_s(chain, s);
    let centre = lam(-1.0);
    let first = |h: f64| (lam(-1.0 + h) - lam(-1.0 - h)) / (2.0 * h);
    let second = |h: f64| (lam(-1.0 + h) - 2.0 * centre + lam(-1.0 - h)) / (h * h);
    let richardson = |f: &dyn Fn(f64) -> f64| {
        let d = [f(h), f(h / 2.0), f(h / 4.0)];
        let r1 = [(4.0 * d[1] - d[0]) / 3.0, (4.0 * d[2] - d[1]) / 3.0];
        (16.0 * r1[1] - r1[0]) / 15.0
    };
    (richardson(&first), richardson(&second))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSquared {
    /// From the derivatives of `λ`.
    pub eigen: f64,
    /// From the per-state entropies.
    pub explicit: f64,
}

impl SigmaSquared {
    pub fn relative_gap(&self) -> f64 {
        (self.eigen - self.explicit).abs() / self.explicit.abs().max(f64::MIN_POSITIVE)
    }
}

/// Variance constant of `Var(L_n) ~ σ² n log n`, both routes.
pub fn sigma_squared(chain: &MarkovChain) -> Result<SigmaSquared> {
    if !chain.is_asymmetric() {
        return Err(Error::SymmetricChain);
    }
    let (l1, l2) = lambda_derivatives(chain);
    Ok(SigmaSquared {
        eigen: (l2 - l1 * l1) / (l1 * l1 * l1),
        explicit: sigma_squared_explicit(chain),
    })
}

fn sigma_squared_explicit(chain: &MarkovChain) -> f64 {
    let e = chain.entropy_rate();
    let (pi0, pi1) = chain.stationary_distribution();
    let (p00, p01, p10, p11) = (chain.p00(), chain.p01(), chain.p10(), chain.p11());
    let shift = (e.h1 - e.h0) / (p01 + p10);
    let t0 = pi0 * p00 * p01 * ((p00 / p01).ln() + shift).powi(2);
    let t1 = pi1 * p10 * p11 * ((p10 / p11).ln() + shift).powi(2);
    (t0 + t1) / e.h.powi(3)
}

/// `ξ(s) = max_i (p_ii^{s/2} + (1 - p_ii)^{s/2})`, the Lipschitz constant of
/// the limiting map in the Zolotarev metric of order `s`.
pub fn contraction_factor(chain: &MarkovChain, s: f64) -> Result<f64> {
    if !(s > 2.0 && s <= 3.0) {
        return Err(Error::BadExponent(s));
    }
    let half = s / 2.0;
    Ok(Symbol::BOTH
        .iter()
        .map(|&i| {
            let p = chain.stay(i);
            p.powf(half) + (1.0 - p).powf(half)
        })
        .fold(f64::MIN, f64::max))
}

/// Sufficient condition for the bivariate (matrix) formulation to contract:
/// `(p00 ∨ p11)^{3/2} + (1 - p00 ∧ p11)^{3/2} < 1`.
pub fn multivariate_condition_holds(chain: &MarkovChain) -> bool {
    let hi = chain.p00().max(chain.p11());
    let lo = chain.p00().min(chain.p11());
    hi.powf(1.5) + (1.0 - lo).powf(1.5) < 1.0
}

/// Everything the `analyze` report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    #[serde(rename = "H")]
    pub h: f64,
    pub pi0: f64,
    pub pi1: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H1")]
    pub h1: f64,
    pub lambda_at_minus_one: f64,
    pub lambda_dot: f64,
    pub lambda_ddot: f64,
    pub sigma2: f64,
    pub sigma2_eigen: f64,
    pub sigma2_explicit: f64,
    pub xi_s3: f64,
    pub cond39: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl SpectralConstants {
    /// Report mode: the symmetric chain yields `σ² = 0` with a warning
    /// instead of an error.
    pub fn compute(chain: &MarkovChain) -> Self {
        let e = chain.entropy_rate();
        let (pi0, pi1) = chain.stationary_distribution();
        let (lambda_dot, lambda_ddot) = lambda_derivatives(chain);
        let (sigma2, sigma2_eigen, sigma2_explicit, warning) = match sigma_squared(chain) {
            Ok(s) => (s.explicit, s.eigen, s.explicit, None),
            Err(err) => (0.0, 0.0, 0.0, Some(err.to_string())),
        };
        SpectralConstants {
            h: e.h,
            pi0,
            pi1,
            h0: e.h0,
            h1: e.h1,
            lambda_at_minus_one: lambda_of_s(chain, -1.0),
            lambda_dot,
            lambda_ddot,
            sigma2,
            sigma2_eigen,
            sigma2_explicit,
            xi_s3: contraction_factor(chain, 3.0).expect("s = 3 is admissible"),
            cond39: multivariate_condition_holds(chain),
            warning,
        }
    }

    pub fn lambda_at(chain: &MarkovChain, s: f64) -> f64 {
        lambda_of_s(chain, s)
    }

    pub fn xi(chain: &MarkovChain, s: f64) -> Result<f64> {
        contraction_factor(chain, s)
    }
}
