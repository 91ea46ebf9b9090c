//! Exact moments of the path length by dynamic programming.
//!
//! With `L^i_n` the path length of `n` strings whose chain is in state `i`
//! just before their first split, the split recurrences are
//!
//! ```text
//! L^0_n = n + L^0_I + L^1_{n-I},   I ~ B(n, p00)
//! L^1_n = n + L^0_{n-J} + L^1_J,   J ~ B(n, p11)
//! ```
//!
//! for `n >= 2`, with `L_0 = L_1 = 0` and the two subtrees independent given
//! the split. The terms `k = n` and `k = 0` refer back to level `n`, so each
//! level solves a 2×2 linear system, once for the means, once for the raw
//! second moments and once for the variances (central form).
//!
//! For an arbitrary initial law the first symbol splits the strings into
//! `K ~ B(n, mu0)` and `n - K` and `L^μ_n = L^0_K + L^1_{n-K}`.

use serde::{Deserialize, Serialize};

use crate::binomial::BinomialWindow;
use crate::error::{Error, Result};
use crate::source::{MarkovChain, Symbol};

pub const DEFAULT_HORIZON: usize = 8192;

/// Largest horizon accepted by [`compute_moment_table`].
pub const DEFAULT_BUDGET: usize = 1 << 17;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentTable {
    chain: MarkovChain,
    horizon: usize,
    nu: [Vec<f64>; 2],
    m2: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

pub fn compute_moment_table(chain: &MarkovChain, horizon: usize) -> Result<MomentTable> {
    compute_moment_table_with_budget(chain, horizon, DEFAULT_BUDGET)
}

/// Solve `[[a00, a01], [a10, a11]] x = r` by elimination.
fn solve2(a: [[f64; 2]; 2], r: [f64; 2]) -> [f64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        (r[0] * a[1][1] - a[0][1] * r[1]) / det,
        (a[0][0] * r[1] - a[1][0] * r[0]) / det,
    ]
}

pub fn compute_moment_table_with_budget(
    chain: &MarkovChain,
    horizon: usize,
    budget: usize,
) -> Result<MomentTable> {
    if horizon > budget {
        return Err(Error::HorizonTooLarge {
            requested: horizon,
            budget,
        });
    }
    let len = horizon + 1;
    let mut nu = [vec![0.0; len], vec![0.0; len]];
    let mut m2 = [vec![0.0; len], vec![0.0; len]];
    let mut var = [vec![0.0; len], vec![0.0; len]];

    for n in 2..=horizon {
        let nf = n as f64;
        // State i keeps its own successor symbol with probability p_ii; the
        // split count `stay` goes to the subtree of state i.
        let splits = Symbol::BOTH.map(|i| BinomialWindow::new(n, chain.stay(i)));
        // Self-referencing weights: all strings go to the i-subtree (stay = n)
        // or all to the other subtree (stay = 0).
        let own = |i: usize| splits[i].get(n);
        let other = |i: usize| splits[i].get(0);
        let a = [[1.0 - own(0), -other(0)], [-other(1), 1.0 - own(1)]];

        // Conditional mean contribution of a split sending `stay` strings to
        // the i-subtree and the rest to the other one.
        let split_mean =
            |nu: &[Vec<f64>; 2], i: usize, stay: usize| nu[i][stay] + nu[1 - i][n - stay];

        let mut r = [nf, nf];
        for i in 0..2 {
            for (k, w) in splits[i].iter() {
                if k != 0 && k != n {
                    r[i] += w * split_mean(&nu, i, k);
                }
            }
        }
        let level = solve2(a, r);
        nu[0][n] = level[0];
        nu[1][n] = level[1];

        let mut r2 = [0.0, 0.0];
        let mut rv = [0.0, 0.0];
        for i in 0..2 {
            for (k, w) in splits[i].iter() {
                let (x, y) = (nu[i][k], nu[1 - i][n - k]);
                let c = nf + x + y;
                // n² + 2n(x + y) + 2xy: cross terms of E[(n + A + B)²].
                r2[i] += w * (nf * nf + 2.0 * nf * (x + y) + 2.0 * x * y);
                rv[i] += w * (c - nu[i][n]) * (c - nu[i][n]);
                if k != 0 && k != n {
                    r2[i] += w * (m2[i][k] + m2[1 - i][n - k]);
                    rv[i] += w * (var[i][k] + var[1 - i][n - k]);
                }
            }
        }
        let level = solve2(a, r2);
        m2[0][n] = level[0];
        m2[1][n] = level[1];
        let level = solve2(a, rv);
        var[0][n] = level[0].max(0.0);
        var[1][n] = level[1].max(0.0);
    }

    Ok(MomentTable {
        chain: *chain,
        horizon,
        nu,
        m2,
        var,
    })
}

impl MomentTable {
    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `E[L^i_n]`.
    pub fn nu(&self, i: Symbol, n: usize) -> f64 {
        self.nu[i.index()][n]
    }

    /// `E[(L^i_n)²]`.
    pub fn m2(&self, i: Symbol, n: usize) -> f64 {
        self.m2[i.index()][n]
    }

    /// `Var(L^i_n)` from the central recurrence.
    pub fn var(&self, i: Symbol, n: usize) -> f64 {
        self.var[i.index()][n]
    }

    pub fn sd(&self, i: Symbol, n: usize) -> f64 {
        self.var(i, n).sqrt()
    }

    /// `m2 - nu²` with a single rounding (fused multiply-add).
    pub fn var_from_raw(&self, i: Symbol, n: usize) -> f64 {
        let m = self.nu(i, n);
        (-m).mul_add(m, self.m2(i, n))
    }

    pub fn nu_slice(&self, i: Symbol) -> &[f64] {
        &self.nu[i.index()]
    }

    pub fn var_slice(&self, i: Symbol) -> &[f64] {
        &self.var[i.index()]
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.horizon {
            return Err(Error::HorizonTooSmall {
                needed: n,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// `E[L^μ_n] = Σ_k b(n, mu0, k) (nu_0[k] + nu_1[n-k])`.
    pub fn mean_for_initial(&self, mu0: f64, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(BinomialWindow::new(n, mu0)
            .iter()
            .map(|(k, w)| w * (self.nu[0][k] + self.nu[1][n - k]))
            .sum())
    }

    /// `Var(L^μ_n)`: expected conditional variance plus variance of the
    /// conditional mean over `K ~ B(n, mu0)`.
    pub fn variance_for_initial(&self, mu0: f64, n: usize) -> Result<f64> {
        let mean = self.mean_for_initial(mu0, n)?;
        Ok(BinomialWindow::new(n, mu0)
            .iter()
            .map(|(k, w)| {
                let c = self.nu[0][k] + self.nu[1][n - k] - mean;
                w * (self.var[0][k] + self.var[1][n - k] + c * c)
            })
            .sum())
    }
}

/// `f_i(n) = E[L^i_n] - n log n / H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorTermTable {
    entropy: f64,
    f: [Vec<f64>; 2],
}

pub fn error_term_table(table: &MomentTable) -> Result<ErrorTermTable> {
    if !table.chain.is_asymmetric() {
        return Err(Error::SymmetricChain);
    }
    let h = table.chain.entropy_rate().h;
    let f = Symbol::BOTH.map(|i| {
        table
            .nu_slice(i)
            .iter()
            .enumerate()
            .map(|(n, &v)| {
                let nlogn = if n <= 1 {
                    0.0
                } else {
                    n as f64 * (n as f64).ln()
                };
                v - nlogn / h
            })
            .collect()
    });
    Ok(ErrorTermTable { entropy: h, f })
}

impl ErrorTermTable {
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn f(&self, i: Symbol, n: usize) -> f64 {
        self.f[i.index()][n]
    }

    pub fn slice(&self, i: Symbol) -> &[f64] {
        &self.f[i.index()]
    }

    /// `max |f_i(n+1) - f_i(n)|` over `lo <= n < hi`.
    pub fn max_increment(&self, i: Symbol, lo: usize, hi: usize) -> f64 {
        let f = &self.f[i.index()];
        let hi = hi.min(f.len() - 1);
        (lo..hi)
            .map(|n| (f[n + 1] - f[n]).abs())
            .fold(0.0, f64::max)
    }

    /// `max |f_i(n)| / n` over `lo <= n <= hi`.
    pub fn max_relative(&self, i: Symbol, lo: usize, hi: usize) -> f64 {
        let f = &self.f[i.index()];
        let hi = hi.min(f.len() - 1);
        (lo.max(1)..=hi)
            .map(|n| f[n].abs() / n as f64)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p00: f64, p11: f64) -> MarkovChain {
        MarkovChain::new(0.5, p00, p11).unwrap()
    }

    #[test]
    fn boundary_values() {
        let t = compute_moment_table(&chain(0.6, 0.7), 10).unwrap();
        for i in Symbol::BOTH {
            for n in 0..2 {
                assert_eq!((t.nu(i, n), t.m2(i, n), t.var(i, n)), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn fair_chain_level_two() {
        // E = 2 + E/4 + E/4 gives E = 4.
        let t = compute_moment_table(&chain(0.5, 0.5), 4).unwrap();
        assert!((t.nu(Symbol::Zero, 2) - 4.0).abs() < 1e-14);
        assert!((t.nu(Symbol::One, 2) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_level_two_by_elimination() {
        // (1 - p00²) x - p01² y = 2,  -p10² x + (1 - p11²) y = 2.
        let (p00, p11) = (0.6f64, 0.7f64);
        let (p01, p10) = (1.0 - p00, 1.0 - p11);
        let (a, b, c, d) = (1.0 - p00 * p00, -p01 * p01, -p10 * p10, 1.0 - p11 * p11);
        let y = (2.0 - c * 2.0 / a) / (d - c * b / a);
        let x = (2.0 - b * y) / a;
        let t = compute_moment_table(&chain(p00, p11), 4).unwrap();
        assert!((t.nu(Symbol::Zero, 2) - x).abs() < 1e-13);
        assert!((t.nu(Symbol::One, 2) - y).abs() < 1e-13);
        assert!((x - 4.2949).abs() < 1e-4 && (y - 4.6795).abs() < 1e-4);
    }

    /// Two strings from state `i` travel together until they separate; the
    /// path length is `2k` when they separate at the `k`-th split.
    fn two_string_moments(c: &MarkovChain, i: Symbol, depth: usize) -> (f64, f64) {
        let mut alive = [0.0; 2];
        alive[i.index()] = 1.0;
        let (mut e1, mut e2) = (0.0, 0.0);
        for k in 1..=depth {
            let mut next = [0.0; 2];
            let mut split = 0.0;
            for s in Symbol::BOTH {
                let p0 = c.p(s, Symbol::Zero);
                let p1 = 1.0 - p0;
                split += alive[s.index()] * 2.0 * p0 * p1;
                next[0] += alive[s.index()] * p0 * p0;
                next[1] += alive[s.index()] * p1 * p1;
            }
            let l = 2.0 * k as f64;
            e1 += split * l;
            e2 += split * l * l;
            alive = next;
        }
        (e1, e2)
    }

    #[test]
    fn level_two_second_moment_by_enumeration() {
        for &(p00, p11) in &[(0.6, 0.7), (0.3, 0.8), (0.5, 0.5)] {
            let c = chain(p00, p11);
            let t = compute_moment_table(&c, 4).unwrap();
            for i in Symbol::BOTH {
                let (e1, e2) = two_string_moments(&c, i, 200);
                assert!(
                    (t.nu(i, 2) - e1).abs() < 1e-10,
                    "{p00} {p11} {i:?} {} {e1}",
                    t.nu(i, 2)
                );
                assert!((t.m2(i, 2) - e2).abs() < 1e-10);
                assert!((t.var(i, 2) - (e2 - e1 * e1)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn raw_and_central_variances_agree() {
        let t = compute_moment_table(&chain(0.6, 0.7), 4096).unwrap();
        for i in Symbol::BOTH {
            for n in [2usize, 10, 100, 1000, 4096] {
                let gap = (t.var_from_raw(i, n) - t.var(i, n)).abs();
                assert!(gap <= 1e-10 * t.m2(i, n), "n={n} gap={gap}");
                assert!(t.var(i, n) >= 0.0);
            }
        }
    }

    #[test]
    fn mixtures() {
        let c = chain(0.6, 0.7);
        let t = compute_moment_table(&c, 600).unwrap();
        for n in [0usize, 1, 2, 37, 512] {
            assert_eq!(t.mean_for_initial(1.0, n).unwrap(), t.nu(Symbol::Zero, n));
            assert_eq!(t.mean_for_initial(0.0, n).unwrap(), t.nu(Symbol::One, n));
            assert_eq!(
                t.variance_for_initial(1.0, n).unwrap(),
                t.var(Symbol::Zero, n)
            );
        }
        for n in 0..2 {
            assert_eq!(t.variance_for_initial(0.4, n).unwrap(), 0.0);
        }
        let m = t.mean_for_initial(0.5, 512).unwrap();
        let lo = t.nu(Symbol::Zero, 512).min(t.nu(Symbol::One, 512));
        // The root split alone does not lengthen paths: the mixture sits
        // below both pure means by roughly n.
        assert!(m < lo && m > lo - 2.0 * 512.0);
        assert!(matches!(
            t.mean_for_initial(0.5, 601),
            Err(Error::HorizonTooSmall {
                needed: 601,
                horizon: 600
            })
        ));
    }

    #[test]
    fn budget_guard() {
        assert_eq!(
            compute_moment_table_with_budget(&chain(0.6, 0.7), 100, 50).unwrap_err(),
            Error::HorizonTooLarge {
                requested: 100,
                budget: 50
            }
        );
    }

    #[test]
    fn error_terms() {
        let t = compute_moment_table(&chain(0.6, 0.7), 4096).unwrap();
        let f = error_term_table(&t).unwrap();
        for i in Symbol::BOTH {
            assert_eq!(f.f(i, 0), 0.0);
            assert_eq!(f.f(i, 1), 0.0);
            let short = f.max_increment(i, 64, 2048);
            let long = f.max_increment(i, 64, 4096);
            assert!(long <= 1.25 * short, "{long} vs {short}");
            // |f_i(n)|/n settles to the linear-order constant of the mean.
            let dyadic: Vec<f64> = (4..=12)
                .map(|j| f.f(i, 1 << j).abs() / (1 << j) as f64)
                .collect();
            assert!(dyadic.iter().all(|v| v.is_finite()));
            let last = dyadic[dyadic.len() - 1];
            assert!(f.max_relative(i, 2, 4096) <= 1.1 * last, "{dyadic:?}");
            assert!(
                (last - dyadic[dyadic.len() - 3]).abs() <= 0.01 * last,
                "{dyadic:?}"
            );
        }
        let sym = compute_moment_table(&chain(0.5, 0.5), 8).unwrap();
        assert_eq!(error_term_table(&sym).unwrap_err(), Error::SymmetricChain);
    }
}
