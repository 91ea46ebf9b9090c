//! Truncated probability mass functions computed by multiplicative
//! recurrence outward from the mode.

/// Relative weight (w.r.t. the mode) below which tail terms are dropped.
const TAIL_CUTOFF: f64 = 1e-20;

/// The mass of Binomial(n, p) on a contiguous window `[lo, lo + len)`,
/// renormalized to sum to one.
#[derive(Debug, Clone)]
pub struct BinomialWindow {
    lo: usize,
    weights: Vec<f64>,
}

impl BinomialWindow {
    pub fn new(n: usize, p: f64) -> Self {
        if p <= 0.0 {
            return BinomialWindow {
                lo: 0,
                weights: vec![1.0],
            };
        }
        if p >= 1.0 {
            return BinomialWindow {
                lo: n,
                weights: vec![1.0],
            };
        }
        let q = 1.0 - p;
        let odds = p / q;
        let mode = (((n + 1) as f64 * p).floor() as usize).min(n);

        let mut upper = vec![1.0];
        let mut w = 1.0;
        for k in mode..n {
            w *= (n - k) as f64 / (k + 1) as f64 * odds;
            if w < TAIL_CUTOFF {
                break;
            }
            upper.push(w);
        }
        let mut lower = Vec::new();
        let mut w = 1.0;
        for k in (1..=mode).rev() {
            // b(k-1) / b(k) = k / (n - k + 1) * q / p
            w *= k as f64 / (n - k + 1) as f64 / odds;
            if w < TAIL_CUTOFF {
                break;
            }
            lower.push(w);
        }
        let lo = mode - lower.len();
        lower.reverse();
        lower.extend(upper);
        let total: f64 = lower.iter().sum();
        for w in &mut lower {
            *w /= total;
        }
        BinomialWindow { lo, weights: lower }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    /// Inclusive upper end of the window.
    pub fn hi(&self) -> usize {
        self.lo + self.weights.len() - 1
    }

    /// Probability of `k`; zero outside the window.
    pub fn get(&self, k: usize) -> f64 {
        k.checked_sub(self.lo)
            .and_then(|i| self.weights.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(k, P(K = k))` over the window.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.lo + i, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Absolute Poisson(λ) probabilities over an explicit window `[lo, hi]`,
/// anchored at the mode through `ln Γ` and extended by recurrence.
#[derive(Debug, Clone)]
pub struct PoissonWindow {
    lambda: f64,
    lo: usize,
    weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn new(lambda: f64, lo: usize, hi: usize) -> Self {
        assert!(lambda > 0.0 && lo <= hi);
        let mode = (lambda.floor() as usize).clamp(lo, hi);
        let anchor = (-lambda + mode as f64 * lambda.ln() - libm::lgamma(mode as f64 + 1.0)).exp();
        let mut weights = vec![0.0; hi - lo + 1];
        weights[mode - lo] = anchor;
        let mut w = anchor;
        for k in mode..hi {
            w *= lambda / (k + 1) as f64;
            weights[k + 1 - lo] = w;
        }
        let mut w = anchor;
        for k in (lo + 1..=mode).rev() {
            w *= k as f64 / lambda;
            weights[k - 1 - lo] = w;
        }
        PoissonWindow {
            lambda,
            lo,
            weights,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.lo + self.weights.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.lo + i, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Point probability at `k` computed independently of the window.
    pub fn pmf(lambda: f64, k: usize) -> f64 {
        (-lambda + k as f64 * lambda.ln() - libm::lgamma(k as f64 + 1.0)).exp()
    }
}
