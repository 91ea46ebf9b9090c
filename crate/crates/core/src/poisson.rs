//! Poissonized moments.
//!
//! With `N_λ ~ Poisson(λ)` independent of the strings,
//! `ν̃_i(λ) = E[L^i_{N_λ}]` and `ṽ_i(λ) = Var(L^i_{N_λ})` are computed from
//! the exact moment table by truncated summation over
//! `[λ - 12√λ - 12, λ + 12√λ + 12]`. Thinning makes the two subtree counts
//! independent Poisson variables, which yields exact identities such as
//!
//! ```text
//! ν̃_i(λ) = ν̃_0(λ p_i0) + ν̃_1(λ p_i1) + λ(1 - e^{-λ}).
//! ```

use serde::{Deserialize, Serialize};

use crate::binomial::PoissonWindow;
use crate::error::{Error, Result};
use crate::moments::MomentTable;
use crate::source::Symbol;

/// Half-width of the summation window in standard deviations.
const WINDOW_SDS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonizedValue {
    pub lambda: f64,
    pub value: f64,
    pub lo: usize,
    pub hi: usize,
    /// Bound on the mass-weighted moments left outside `[lo, hi]`.
    pub error_bound: f64,
}

/// Summation window for intensity `lambda`.
pub fn window(lambda: f64) -> (usize, usize) {
    let spread = WINDOW_SDS * lambda.sqrt() + WINDOW_SDS;
    let lo = (lambda - spread).floor().max(0.0) as usize;
    let hi = (lambda + spread).ceil() as usize;
    (lo, hi)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "Poisson intensity must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// Weights over the window, after checking the table reaches `hi + extra`.
fn weights(table: &MomentTable, lambda: f64, extra: usize) -> Result<PoissonWindow> {
    check_lambda(lambda)?;
    let (lo, hi) = window(lambda);
    if hi + extra > table.horizon() {
        return Err(Error::HorizonTooSmall {
            needed: hi + extra,
            horizon: table.horizon(),
        });
    }
    Ok(PoissonWindow::new(lambda, lo, hi))
}

/// Growth constant `C` with `E[L^i_n] <= C n log n` on the tabulated range,
/// doubled for extrapolation beyond it.
fn growth_constant(table: &MomentTable) -> f64 {
    let mut c: f64 = 1.0;
    for i in Symbol::BOTH {
        for (n, &v) in table.nu_slice(i).iter().enumerate().skip(2) {
            c = c.max(v / (n as f64 * (n as f64).ln()));
        }
    }
    2.0 * c
}

/// Bound on `Σ_{n ∉ [lo, hi]} P(N = n) g(n)` for `g(n) = (C n log n)^power`.
fn tail_bound(table: &MomentTable, lambda: f64, lo: usize, hi: usize, power: i32) -> f64 {
    let c = growth_constant(table);
    let g = |n: f64| (c * n * n.max(2.0).ln()).powi(power);
    // Upper tail: successive pmf ratios are at most r < 1 past hi, and g
    // grows by at most rho per step.
    let n1 = (hi + 1) as f64;
    let r = lambda / (n1 + 1.0);
    let rho = g(n1 + 1.0) / g(n1);
    let upper = PoissonWindow::pmf(lambda, hi + 1) * g(n1) / (1.0 - r * rho).max(1e-300);
    // Lower tail: g is increasing, so bound by g(lo) times the lower mass,
    // itself bounded geometrically below the window.
    let lower = if lo == 0 {
        0.0
    } else {
        let r = (lo as f64) / lambda;
        PoissonWindow::pmf(lambda, lo - 1) / (1.0 - r).max(1e-300) * g(lo as f64)
    };
    upper + lower
}

/// `ν̃_i(λ) = Σ e^{-λ} λⁿ/n! E[L^i_n]`.
pub fn poissonized_mean(table: &MomentTable, i: Symbol, lambda: f64) -> Result<PoissonizedValue> {
    let w = weights(table, lambda, 0)?;
    let nu = table.nu_slice(i);
    let value = w.iter().map(|(n, p)| p * nu[n]).sum();
    Ok(PoissonizedValue {
        lambda,
        value,
        lo: w.lo(),
        hi: w.hi(),
        error_bound: tail_bound(table, lambda, w.lo(), w.hi(), 1),
    })
}

/// `ν̃_i'(z) = Σ_{n>=1} e^{-z} z^{n-1}/(n-1)! E[L^i_n] - ν̃_i(z)`.
pub fn poissonized_mean_derivative(table: &MomentTable, i: Symbol, z: f64) -> Result<f64> {
    let w = weights(table, z, 1)?;
    let nu = table.nu_slice(i);
    let shifted: f64 = w.iter().map(|(m, p)| p * nu[m + 1]).sum();
    let plain: f64 = w.iter().map(|(m, p)| p * nu[m]).sum();
    Ok(shifted - plain)
}

/// `ṽ_i(λ) = Var(L^i_{N_λ})` as a Poisson mixture of the exact laws.
pub fn poissonized_variance(
    table: &MomentTable,
    i: Symbol,
    lambda: f64,
) -> Result<PoissonizedValue> {
    let mean = poissonized_mean(table, i, lambda)?;
    let w = weights(table, lambda, 0)?;
    let (nu, var) = (table.nu_slice(i), table.var_slice(i));
    let value = w
        .iter()
        .map(|(n, p)| {
            let d = nu[n] - mean.value;
            p * (var[n] + d * d)
        })
        .sum();
    Ok(PoissonizedValue {
        value,
        error_bound: tail_bound(table, lambda, w.lo(), w.hi(), 2),
        ..mean
    })
}

/// `ṽ_i(λ) - λ ν̃_i'(λ)²`, the Poisson variance with the count fluctuation
/// removed; it tracks the fixed-`n` variance at `n = λ`.
pub fn depoissonized_variance(table: &MomentTable, i: Symbol, lambda: f64) -> Result<f64> {
    let v = poissonized_variance(table, i, lambda)?.value;
    let d = poissonized_mean_derivative(table, i, lambda)?;
    Ok(v - lambda * d * d)
}

fn split_intensities(table: &MomentTable, i: Symbol, lambda: f64) -> [f64; 2] {
    Symbol::BOTH.map(|j| lambda * table.chain().p(i, j))
}

/// Relative residual of the Poisson functional equation for the mean.
pub fn functional_equation_residual(table: &MomentTable, i: Symbol, lambda: f64) -> Result<f64> {
    let lhs = poissonized_mean(table, i, lambda)?.value;
    let [l0, l1] = split_intensities(table, i, lambda);
    let rhs = poissonized_mean(table, Symbol::Zero, l0)?.value
        + poissonized_mean(table, Symbol::One, l1)?.value
        - lambda * (-lambda).exp_m1();
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

/// Both sides of the Poisson variance decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// `ṽ_i(λ)` computed directly from the mixture.
    pub direct: f64,
    /// The recursive right-hand side.
    pub recursive: f64,
}

impl VarianceDecomposition {
    pub fn residual(&self) -> f64 {
        (self.direct - self.recursive).abs() / self.direct.abs().max(1.0)
    }
}

pub fn variance_decomposition(
    table: &MomentTable,
    i: Symbol,
    lambda: f64,
) -> Result<VarianceDecomposition> {
    let direct = poissonized_variance(table, i, lambda)?.value;
    let [l0, l1] = split_intensities(table, i, lambda);
    let mut recursive = 0.0;
    let mut means = 0.0;
    for (j, lj) in [(Symbol::Zero, l0), (Symbol::One, l1)] {
        recursive += poissonized_variance(table, j, lj)?.value;
        recursive += 2.0 * lj * poissonized_mean_derivative(table, j, lj)?;
        means += poissonized_mean(table, j, lj)?.value;
    }
    let e = (-lambda).exp();
    recursive += 2.0 * lambda * e * means;
    recursive += -lambda * (-lambda).exp_m1();
    recursive += lambda * lambda * e * (2.0 - e);
    Ok(VarianceDecomposition { direct, recursive })
}

/// Relative residual of the variance decomposition.
pub fn check_variance_decomposition(table: &MomentTable, i: Symbol, lambda: f64) -> Result<f64> {
    Ok(variance_decomposition(table, i, lambda)?.residual())
}

/// Least-squares fit `ṽ(λ) ≈ a λ log²λ + b λ log λ + c λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonVarianceFit {
    pub log2_coef: f64,
    pub log_coef: f64,
    pub linear_coef: f64,
}

pub fn fit_poisson_variance(
    table: &MomentTable,
    i: Symbol,
    grid: &[f64],
) -> Result<PoissonVarianceFit> {
    if grid.len() < 4 {
        return Err(Error::SingularFit { points: grid.len() });
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &l in grid {
        let v = poissonized_variance(table, i, l)?.value;
        let ll = l.ln();
        rows.push(([l * ll * ll, l * ll, l], v));
    }
    let c = least_squares3(&rows).ok_or(Error::SingularFit { points: grid.len() })?;
    Ok(PoissonVarianceFit {
        log2_coef: c[0],
        log_coef: c[1],
        linear_coef: c[2],
    })
}

/// Column-scaled normal equations solved by Gaussian elimination.
fn least_squares3(rows: &[([f64; 3], f64)]) -> Option<[f64; 3]> {
    let mut scale = [0.0f64; 3];
    for (x, _) in rows {
        for j in 0..3 {
            scale[j] += x[j] * x[j];
        }
    }
    let scale = scale.map(f64::sqrt);
    let mut a = [[0.0f64; 4]; 3];
    for (x, y) in rows {
        let xs = [x[0] / scale[0], x[1] / scale[1], x[2] / scale[2]];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += xs[r] * xs[c];
            }
            a[r][3] += xs[r] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..4 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some([0, 1, 2].map(|j| a[j][3] / a[j][j] / scale[j]))
}
