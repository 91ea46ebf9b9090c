//! The binary Markov source.
//!
//! A chain is fixed by the initial mass `mu0` on symbol 0 and the two
//! diagonal transition probabilities `p00`, `p11`; the off-diagonal entries
//! are their complements, so rows sum to one by construction.
//!
//! Bit streams are counter-based: stream `j` under seed `s` is the ChaCha8
//! key stream with key derived from `s` and stream id `j`. Any stream can be
//! regenerated independently of the others, from any thread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible transition probability; `1 - P_MIN` is the largest.
pub const P_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Zero,
    One,
}

impl Symbol {
    pub const BOTH: [Symbol; 2] = [Symbol::Zero, Symbol::One];

    pub fn index(self) -> usize {
        match self {
            Symbol::Zero => 0,
            Symbol::One => 1,
        }
    }

    pub fn flip(self) -> Symbol {
        match self {
            Symbol::Zero => Symbol::One,
            Symbol::One => Symbol::Zero,
        }
    }

    pub fn from_index(i: usize) -> Option<Symbol> {
        match i {
            0 => Some(Symbol::Zero),
            1 => Some(Symbol::One),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainParams", into = "ChainParams")]
pub struct MarkovChain {
    mu0: f64,
    p00: f64,
    p11: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ChainParams {
    mu0: f64,
    p00: f64,
    p11: f64,
}

impl TryFrom<ChainParams> for MarkovChain {
    type Error = Error;

    fn try_from(c: ChainParams) -> Result<Self> {
        MarkovChain::new(c.mu0, c.p00, c.p11)
    }
}

impl From<MarkovChain> for ChainParams {
    fn from(c: MarkovChain) -> Self {
        ChainParams {
            mu0: c.mu0,
            p00: c.p00,
            p11: c.p11,
        }
    }
}

/// Per-state transition entropies and the entropy rate, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entropy {
    pub h: f64,
    pub h0: f64,
    pub h1: f64,
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl MarkovChain {
    pub fn new(mu0: f64, p00: f64, p11: f64) -> Result<Self> {
        if !mu0.is_finite() || !(0.0..=1.0).contains(&mu0) {
            return Err(Error::InvalidChain {
                name: "mu0",
                value: mu0,
                reason: "must lie in [0, 1]",
            });
        }
        for (name, value) in [("p00", p00), ("p11", p11)] {
            if !value.is_finite() || !(P_MIN..=1.0 - P_MIN).contains(&value) {
                return Err(Error::InvalidChain {
                    name,
                    value,
                    reason: "must lie in [1e-9, 1 - 1e-9]",
                });
            }
        }
        Ok(MarkovChain { mu0, p00, p11 })
    }

    /// Chain started in its stationary distribution.
    pub fn stationary(p00: f64, p11: f64) -> Result<Self> {
        let c = MarkovChain::new(0.5, p00, p11)?;
        Ok(c.with_mu0(c.stationary_distribution().0))
    }

    /// Same transitions, different initial law. `mu0` is clamped to [0, 1].
    pub fn with_mu0(self, mu0: f64) -> Self {
        MarkovChain {
            mu0: mu0.clamp(0.0, 1.0),
            ..self
        }
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn mu1(&self) -> f64 {
        1.0 - self.mu0
    }

    pub fn p00(&self) -> f64 {
        self.p00
    }

    pub fn p11(&self) -> f64 {
        self.p11
    }

    pub fn p01(&self) -> f64 {
        1.0 - self.p00
    }

    pub fn p10(&self) -> f64 {
        1.0 - self.p11
    }

    /// Transition probability from `from` to `to`.
    pub fn p(&self, from: Symbol, to: Symbol) -> f64 {
        match (from, to) {
            (Symbol::Zero, Symbol::Zero) => self.p00,
            (Symbol::Zero, Symbol::One) => 1.0 - self.p00,
            (Symbol::One, Symbol::Zero) => 1.0 - self.p11,
            (Symbol::One, Symbol::One) => self.p11,
        }
    }

    /// Probability of staying in `state`.
    pub fn stay(&self, state: Symbol) -> f64 {
        self.p(state, state)
    }

    /// Row-major transition matrix.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.p00, self.p01()], [self.p10(), self.p11]]
    }

    /// False only for the symmetric Bernoulli chain, where every `p_ij = 1/2`.
    pub fn is_asymmetric(&self) -> bool {
        self.p00 != 0.5 || self.p11 != 0.5
    }

    pub fn stationary_distribution(&self) -> (f64, f64) {
        let (p01, p10) = (self.p01(), self.p10());
        let total = p01 + p10;
        (p10 / total, p01 / total)
    }

    pub fn entropy_rate(&self) -> Entropy {
        let h0 = -(xlogx(self.p00) + xlogx(self.p01()));
        let h1 = -(xlogx(self.p10()) + xlogx(self.p11));
        let (pi0, pi1) = self.stationary_distribution();
        Entropy {
            h: pi0 * h0 + pi1 * h1,
            h0,
            h1,
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for task `index` under a master seed. Pure and collision-averse,
/// so replicates can be scheduled in any order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// A lazily extended, reproducible string of symbols from a Markov source.
#[derive(Debug, Clone)]
pub struct BitStream {
    chain: MarkovChain,
    forced_initial: Option<Symbol>,
    seed: u64,
    index: u64,
    rng: ChaCha8Rng,
    words: Vec<u64>,
    len: usize,
    last: Option<Symbol>,
}

impl BitStream {
    pub fn new(chain: MarkovChain, seed: u64, index: u64, forced_initial: Option<Symbol>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        BitStream {
            chain,
            forced_initial,
            seed,
            index,
            rng,
            words: Vec::new(),
            len: 0,
            last: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Number of symbols emitted so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Last emitted symbol, the current state of the chain.
    pub fn state(&self) -> Option<Symbol> {
        self.last
    }

    fn emit(&mut self) -> Symbol {
        let u: f64 = self.rng.random();
        let sym = match self.last {
            None => match self.forced_initial {
                Some(s) => s,
                None if u < self.chain.mu0() => Symbol::Zero,
                None => Symbol::One,
            },
            Some(prev) => {
                if u < self.chain.p(prev, Symbol::Zero) {
                    Symbol::Zero
                } else {
                    Symbol::One
                }
            }
        };
        let (word, bit) = (self.len / 64, self.len % 64);
        if bit == 0 {
            self.words.push(0);
        }
        if sym == Symbol::One {
            self.words[word] |= 1 << bit;
        }
        self.len += 1;
        self.last = Some(sym);
        sym
    }

    /// Symbol at position `pos` (0-based), extending the stream as needed.
    pub fn bit(&mut self, pos: usize) -> Symbol {
        while self.len <= pos {
            self.emit();
        }
        if (self.words[pos / 64] >> (pos % 64)) & 1 == 1 {
            Symbol::One
        } else {
            Symbol::Zero
        }
    }

    /// The first `len` symbols as 0/1 bytes.
    pub fn prefix(&mut self, len: usize) -> Vec<u8> {
        (0..len).map(|i| self.bit(i).index() as u8).collect()
    }
}

/// `n` independent strings; stream `j` depends only on `(seed, j)`.
pub fn generate_strings(
    chain: &MarkovChain,
    n: usize,
    seed: u64,
    forced_initial: Option<Symbol>,
) -> Vec<BitStream> {
    (0..n as u64)
        .map(|j| BitStream::new(*chain, seed, j, forced_initial))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(p00: f64, p11: f64) -> MarkovChain {
        MarkovChain::new(0.5, p00, p11).unwrap()
    }

    #[test]
    fn stationary_examples() {
        let (a, b) = chain(0.5, 0.5).stationary_distribution();
        assert_eq!((a, b), (0.5, 0.5));
        let (a, b) = chain(0.9, 0.9).stationary_distribution();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_solves_linear_system() {
        // Oracle: pi P = pi with pi0 + pi1 = 1, i.e. pi0 * p01 = pi1 * p10.
        let c = chain(0.6, 0.7);
        let (p01, p10) = (0.4, 0.3);
        let pi0 = p10 / (p01 + p10);
        let (a, b) = c.stationary_distribution();
        assert!((a - pi0).abs() < 1e-15);
        assert!((a - 0.428571428571).abs() < 1e-9);
        assert!((b - 0.571428571429).abs() < 1e-9);
        let m = c.matrix();
        let left = [a * m[0][0] + b * m[1][0], a * m[0][1] + b * m[1][1]];
        assert!((left[0] - a).abs() < 1e-14 && (left[1] - b).abs() < 1e-14);
    }

    #[test]
    fn entropy_examples() {
        let e = chain(0.5, 0.5).entropy_rate();
        let l2 = std::f64::consts::LN_2;
        assert!((e.h - l2).abs() < 1e-15 && (e.h0 - l2).abs() < 1e-15 && (e.h1 - l2).abs() < 1e-15);

        let e = chain(0.6, 0.7).entropy_rate();
        assert!((e.h0 - 0.673012).abs() < 1e-6);
        assert!((e.h1 - 0.610864).abs() < 1e-6);
        assert!((e.h - 0.637499).abs() < 1e-6);

        assert!(chain(0.999, 0.999).entropy_rate().h < 0.01);
    }

    #[test]
    fn validation() {
        assert!(MarkovChain::new(0.5, 1.0, 0.5).is_err());
        assert!(MarkovChain::new(0.5, 0.0, 0.5).is_err());
        assert!(MarkovChain::new(1.2, 0.5, 0.5).is_err());
        assert!(MarkovChain::new(0.5, 0.5, f64::NAN).is_err());
        assert!(MarkovChain::new(0.0, P_MIN, 1.0 - P_MIN).is_ok());
        assert!(!chain(0.5, 0.5).is_asymmetric());
        assert!(chain(0.5, 0.5 + 1e-12).is_asymmetric());
    }

    #[test]
    fn serde_validates() {
        let c: MarkovChain = serde_json::from_str(r#"{"mu0":0.25,"p00":0.6,"p11":0.7}"#).unwrap();
        assert_eq!(c, MarkovChain::new(0.25, 0.6, 0.7).unwrap());
        assert!(
            serde_json::from_str::<MarkovChain>(r#"{"mu0":0.25,"p00":1.0,"p11":0.7}"#).is_err()
        );
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"mu0":0.25,"p00":0.6,"p11":0.7}"#
        );
    }

    #[test]
    fn generate_empty_and_degenerate() {
        assert!(generate_strings(&chain(0.6, 0.7), 0, 1, None).is_empty());
        let c = MarkovChain::new(1.0, 0.6, 0.7).unwrap();
        for mut s in generate_strings(&c, 200, 9, None) {
            assert_eq!(s.bit(0), Symbol::Zero);
        }
        for mut s in generate_strings(&c, 50, 9, Some(Symbol::One)) {
            assert_eq!(s.bit(0), Symbol::One);
        }
    }

    #[test]
    fn first_bit_frequency_within_binomial_interval() {
        let c = MarkovChain::new(0.5, 0.6, 0.7).unwrap();
        let n = 100_000;
        let zeros = generate_strings(&c, n, 2024, None)
            .into_iter()
            .filter_map(|mut s| (s.bit(0) == Symbol::Zero).then_some(()))
            .count();
        let freq = zeros as f64 / n as f64;
        let tol = 3.0 * (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= tol, "freq {freq}");
    }

    #[test]
    fn transition_frequencies_on_long_stream() {
        let c = MarkovChain::new(0.5, 0.6, 0.7).unwrap();
        let mut s = BitStream::new(c, 77, 0, None);
        let len = 1_000_000;
        let mut counts = [[0u64; 2]; 2];
        let mut prev = s.bit(0);
        for pos in 1..len {
            let cur = s.bit(pos);
            counts[prev.index()][cur.index()] += 1;
            prev = cur;
        }
        for from in Symbol::BOTH {
            let row = counts[from.index()];
            let total = (row[0] + row[1]) as f64;
            let p = c.p(from, Symbol::Zero);
            let se = (p * (1.0 - p) / total).sqrt();
            let freq = row[0] as f64 / total;
            assert!(
                (freq - p).abs() <= 4.0 * se,
                "state {from:?}: {freq} vs {p}"
            );
        }
    }

    #[test]
    fn stream_tracks_state_and_length() {
        let mut s = BitStream::new(chain(0.6, 0.7), 3, 4, None);
        assert!(s.is_empty() && s.state().is_none());
        let b = s.bit(99);
        assert_eq!(s.len(), 100);
        assert_eq!(s.state(), Some(b));
        s.bit(10);
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> =
            (0..10_000).map(|r| derive_seed(5, r)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(5, 0), derive_seed(6, 0));
    }

    proptest! {
        #[test]
        fn streams_are_reproducible(seed in any::<u64>(), n in 1usize..20, len in 1usize..300) {
            let c = chain(0.3, 0.8);
            let mut a = generate_strings(&c, n, seed, None);
            let mut b = generate_strings(&c, n, seed, None);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                prop_assert_eq!(x.prefix(len), y.prefix(len));
            }
            // Index-addressed: a stream regenerated alone matches its slot.
            let mut lone = BitStream::new(c, seed, (n - 1) as u64, None);
            prop_assert_eq!(lone.prefix(len), a[n - 1].prefix(len));
        }

        #[test]
        fn entropy_is_convex_combination(p00 in 0.001f64..0.999, p11 in 0.001f64..0.999) {
            let c = chain(p00, p11);
            let e = c.entropy_rate();
            let (pi0, pi1) = c.stationary_distribution();
            prop_assert!((e.h - (pi0 * e.h0 + pi1 * e.h1)).abs() <= 1e-15);
            prop_assert!(e.h > 0.0 && e.h <= std::f64::consts::LN_2 + 1e-15);
            let m = c.matrix();
            prop_assert!((pi0 * m[0][0] + pi1 * m[1][0] - pi0).abs() < 1e-14);
        }
    }
}
