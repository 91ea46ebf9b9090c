//! Monte Carlo harness for the central limit behaviour of the path length.
//!
//! Replicate `r` of a simulation builds one trie over `n` fresh streams keyed
//! by `(derive_seed(seed, r), j)`, so every replicate is a pure function of
//! the configuration and its index and the cloud is independent of the
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentTable;
use crate::source::{derive_seed, BitStream, MarkovChain, Symbol};
use crate::spectral::sigma_squared;
use crate::trie::{build_trie, default_max_depth};

/// Law of the first symbol of every string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Every string starts with the given symbol.
    Delta(Symbol),
    /// First symbols drawn from the chain's `mu0`.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Exact mean and exact standard deviation from the moment table.
    Oracle,
    /// Exact mean, scale `√(σ² n log n)`.
    #[default]
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub chain: MarkovChain,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub initial: Initial,
    pub standardization: Standardization,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl SimulationConfig {
    pub fn new(chain: MarkovChain, n: usize, m: usize, seed: u64) -> Self {
        SimulationConfig {
            chain,
            n,
            m,
            seed,
            initial: Initial::Chain,
            standardization: Standardization::default(),
            threads: 0,
        }
    }

    pub fn with_initial(mut self, initial: Initial) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_standardization(mut self, standardization: Standardization) -> Self {
        self.standardization = standardization;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 replicates, got {}",
                self.m
            )));
        }
        Ok(())
    }

    /// Probability that a string starts with `0`.
    pub fn mu0(&self) -> f64 {
        match self.initial {
            Initial::Delta(Symbol::Zero) => 1.0,
            Initial::Delta(Symbol::One) => 0.0,
            Initial::Chain => self.chain.mu0(),
        }
    }

    fn forced(&self) -> Option<Symbol> {
        match self.initial {
            Initial::Delta(s) => Some(s),
            Initial::Chain => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSummary {
    pub size: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov–Smirnov distance to the standard normal.
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCloud {
    samples: Vec<f64>,
}

impl EmpiricalCloud {
    pub fn new(samples: Vec<f64>) -> Self {
        EmpiricalCloud { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.samples.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        let m = self.samples.len();
        if m < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    }

    pub fn summary(&self) -> Result<CloudSummary> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let m = self.len() as f64;
        let mean = self.mean();
        let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
        for x in &self.samples {
            let d = x - mean;
            let d2 = d * d;
            c2 += d2;
            c3 += d2 * d;
            c4 += d2 * d2;
        }
        let (c2, c3, c4) = (c2 / m, c3 / m, c4 / m);
        let (skewness, excess_kurtosis) = if c2 > 0.0 {
            (c3 / c2.powf(1.5), c4 / (c2 * c2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Ok(CloudSummary {
            size: self.len(),
            mean,
            variance: self.variance(),
            skewness,
            excess_kurtosis,
            ks: ks_distance(self)?,
        })
    }
}

fn with_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn replicate_path_length(
    chain: MarkovChain,
    n: usize,
    seed: u64,
    forced: Option<Symbol>,
    r: usize,
) -> Result<f64> {
    let sub = derive_seed(seed, r as u64);
    let mut streams: Vec<BitStream> = (0..n as u64)
        .map(|j| BitStream::new(chain, sub, j, forced))
        .collect();
    let trie = build_trie(&mut streams, default_max_depth(n)).map_err(|e| e.in_replicate(r))?;
    Ok(trie.split_path_length() as f64)
}

/// Raw path lengths of `m` independent tries.
///
/// The path length of a replicate is the sum of the path lengths of the two
/// root subtries, so with `Initial::Delta(i)` its mean is `ν_i(n)` and with
/// `Initial::Chain` it is the mixture `ν_μ(n)`.
pub fn simulate_epl(config: &SimulationConfig) -> Result<EmpiricalCloud> {
    config.validate()?;
    let chain = config.chain.with_mu0(config.mu0());
    let (n, seed, forced) = (config.n, config.seed, config.forced());
    let samples = with_pool(config.threads, || {
        (0..config.m)
            .into_par_iter()
            .map(|r| replicate_path_length(chain, n, seed, forced, r))
            .collect::<Result<Vec<f64>>>()
    })??;
    Ok(EmpiricalCloud::new(samples))
}

/// Path lengths over a Poisson(λ) number of strings; `config.n` is ignored.
pub fn simulate_poissonized_epl(config: &SimulationConfig, lambda: f64) -> Result<EmpiricalCloud> {
    config.validate()?;
    let poisson = Poisson::new(lambda)
        .map_err(|e| Error::InvalidConfig(format!("Poisson intensity {lambda}: {e}")))?;
    let chain = config.chain.with_mu0(config.mu0());
    let (seed, forced) = (config.seed, config.forced());
    let samples = with_pool(config.threads, || {
        (0..config.m)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
                rng.set_stream(u64::MAX);
                let n = poisson.sample(&mut rng) as usize;
                replicate_path_length(chain, n, seed, forced, r)
            })
            .collect::<Result<Vec<f64>>>()
    })??;
    Ok(EmpiricalCloud::new(samples))
}

pub fn standardize(cloud: &EmpiricalCloud, center: f64, scale: f64) -> Result<EmpiricalCloud> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::BadScale(scale));
    }
    Ok(EmpiricalCloud::new(
        cloud.samples.iter().map(|x| (x - center) / scale).collect(),
    ))
}

/// Soft checks on an oracle-standardized cloud: `|mean| <= 4/√m` and
/// `|var - 1| <= 8/√m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentFlags {
    pub mean_ok: bool,
    pub variance_ok: bool,
}

impl MomentFlags {
    pub fn check(summary: &CloudSummary) -> Self {
        let root = (summary.size as f64).sqrt();
        MomentFlags {
            mean_ok: summary.mean.abs() <= 4.0 / root,
            variance_ok: (summary.variance - 1.0).abs() <= 8.0 / root,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedRun {
    pub config: SimulationConfig,
    pub center: f64,
    pub scale: f64,
    /// Exact standard deviation, reported for either standardization.
    pub oracle_sd: f64,
    pub raw: EmpiricalCloud,
    pub standardized: EmpiricalCloud,
    pub summary: CloudSummary,
    /// Present only for oracle standardization.
    pub flags: Option<MomentFlags>,
}

/// Simulates and standardizes with the exact mean from `table` and either
/// the exact or the asymptotic scale.
pub fn run_standardized(config: &SimulationConfig, table: &MomentTable) -> Result<StandardizedRun> {
    if config.n < 2 {
        return Err(Error::InvalidConfig(format!(
            "standardized runs need n >= 2, got {}",
            config.n
        )));
    }
    let mu0 = config.mu0();
    let center = table.mean_for_initial(mu0, config.n)?;
    let oracle_sd = table.variance_for_initial(mu0, config.n)?.sqrt();
    let scale = match config.standardization {
        Standardization::Oracle => oracle_sd,
        Standardization::Asymptotic => {
            let n = config.n as f64;
            (sigma_squared(&config.chain)?.explicit * n * n.ln()).sqrt()
        }
    };
    let raw = simulate_epl(config)?;
    let standardized = standardize(&raw, center, scale)?;
    let summary = standardized.summary()?;
    let flags =
        (config.standardization == Standardization::Oracle).then(|| MomentFlags::check(&summary));
    Ok(StandardizedRun {
        config: *config,
        center,
        scale,
        oracle_sd,
        raw,
        standardized,
        summary,
        flags,
    })
}

/// `Φ(x)` through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `sup_x |F_m(x) - Φ(x)|`, attained at a sample point.
pub fn ks_distance(cloud: &EmpiricalCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let xs = cloud.sorted();
    let m = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = normal_cdf(x);
            (f - k as f64 / m).max((k + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (xa, xb) = (a.sorted(), b.sorted());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One resampling realization of the limiting map
/// `T(τ0, τ1) = (L(√p00 W⁰ + √p01 W¹), L(√p10 W⁰ + √p11 W¹))`
/// with `W⁰ ~ τ0` and `W¹ ~ τ1` independent.
#[allow(non_snake_case)]
pub fn apply_T(
    cloud0: &EmpiricalCloud,
    cloud1: &EmpiricalCloud,
    chain: &MarkovChain,
    seed: u64,
) -> Result<(EmpiricalCloud, EmpiricalCloud)> {
    if cloud0.is_empty() || cloud1.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s0, s1) = (cloud0.samples(), cloud1.samples());
    let draw = |a: f64, b: f64, rng: &mut ChaCha8Rng| {
        a * s0[rng.random_range(0..s0.len())] + b * s1[rng.random_range(0..s1.len())]
    };
    let row0 = [chain.p00().sqrt(), chain.p01().sqrt()];
    let row1 = [chain.p10().sqrt(), chain.p11().sqrt()];
    let out0 = (0..s0.len())
        .map(|_| draw(row0[0], row0[1], &mut rng))
        .collect();
    let out1 = (0..s1.len())
        .map(|_| draw(row1[0], row1[1], &mut rng))
        .collect();
    Ok((EmpiricalCloud::new(out0), EmpiricalCloud::new(out1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionStep {
    pub iteration: usize,
    pub ks0: f64,
    pub ks1: f64,
}

/// Shifts a cloud to sample mean zero.
pub fn recenter(cloud: &EmpiricalCloud) -> EmpiricalCloud {
    let mean = cloud.mean();
    EmpiricalCloud::new(cloud.samples.iter().map(|x| x - mean).collect())
}

/// KS distances to the normal before and after each of `iters` applications
/// of [`apply_T`]; iteration `t` uses seed `derive_seed(seed, t)`.
///
/// The map contracts only on centered laws: its coefficients in each row sum
/// to more than one, so a nonzero sample mean left by resampling would grow
/// geometrically. Both clouds are therefore recentered before the first
/// step and after every step.
pub fn contraction_iterate(
    cloud0: EmpiricalCloud,
    cloud1: EmpiricalCloud,
    chain: &MarkovChain,
    iters: usize,
    seed: u64,
) -> Result<(Vec<ContractionStep>, EmpiricalCloud, EmpiricalCloud)> {
    let (mut c0, mut c1) = (recenter(&cloud0), recenter(&cloud1));
    let mut steps = vec![ContractionStep {
        iteration: 0,
        ks0: ks_distance(&c0)?,
        ks1: ks_distance(&c1)?,
    }];
    for t in 1..=iters {
        let (a, b) = apply_T(&c0, &c1, chain, derive_seed(seed, t as u64))?;
        (c0, c1) = (recenter(&a), recenter(&b));
        steps.push(ContractionStep {
            iteration: t,
            ks0: ks_distance(&c0)?,
            ks1: ks_distance(&c1)?,
        });
    }
    Ok((steps, c0, c1))
}

/// `m` draws from the uniform law on `[-√3, √3]` (mean 0, variance 1).
pub fn standardized_uniform_cloud(m: usize, seed: u64) -> EmpiricalCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 3f64.sqrt();
    EmpiricalCloud::new((0..m).map(|_| rng.random_range(-r..r)).collect())
}

/// Least-squares fit `Var(n) ≈ slope · n log n + linear · n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    pub slope: f64,
    pub linear: f64,
    pub residual_norm: f64,
    pub points: usize,
}

pub fn fit_growth(points: &[(f64, f64)]) -> Result<VarianceFit> {
    let singular = Error::SingularFit {
        points: points.len(),
    };
    if points.len() < 4 {
        return Err(singular);
    }
    let cols: Vec<[f64; 2]> = points.iter().map(|&(n, _)| [n * n.ln(), n]).collect();
    let scale = [0, 1].map(|j| cols.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt());
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(singular);
    }
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (c, &(_, y)) in cols.iter().zip(points) {
        let (x1, x2) = (c[0] / scale[0], c[1] / scale[1]);
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        b1 += x1 * y;
        b2 += x2 * y;
    }
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-12 {
        return Err(singular);
    }
    let slope = (a22 * b1 - a12 * b2) / det / scale[0];
    let linear = (a11 * b2 - a12 * b1) / det / scale[1];
    let residual_norm = cols
        .iter()
        .zip(points)
        .map(|(c, &(_, y))| (y - slope * c[0] - linear * c[1]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(VarianceFit {
        slope,
        linear,
        residual_norm,
        points: points.len(),
    })
}

/// Fits the exact variance under first-symbol law `mu0` over `grid`.
pub fn fit_variance_growth(table: &MomentTable, mu0: f64, grid: &[usize]) -> Result<VarianceFit> {
    let points = grid
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::InvalidConfig(format!(
                    "fit grid points must be >= 2, got {n}"
                )));
            }
            Ok((n as f64, table.variance_for_initial(mu0, n)?))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_growth(&points)
}

/// Dyadic grid `2^lo, ..., 2^hi`.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|j| 1usize << j).collect()
}

/// `E|n + L^0 + L^1 split means - ν_i(n)| / σ_i(n)`: the mean absolute
/// deviation of the conditional mean given the root split, relative to
/// the exact standard deviation.
pub fn normalization_drift(table: &MomentTable, i: Symbol, n: usize) -> Result<f64> {
    if n > table.horizon() {
        return Err(Error::HorizonTooSmall {
            needed: n,
            horizon: table.horizon(),
        });
    }
    let sd = table.sd(i, n);
    if sd == 0.0 {
        return Ok(0.0);
    }
    let w = crate::binomial::BinomialWindow::new(n, table.chain().stay(i));
    let target = table.nu(i, n);
    let dev: f64 = w
        .iter()
        .map(|(k, p)| p * (n as f64 + table.nu(i, k) + table.nu(i.flip(), n - k) - target).abs())
        .sum();
    Ok(dev / sd)
}
