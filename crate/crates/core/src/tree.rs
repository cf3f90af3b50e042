//! Exact and closed-form analysis of probabilistic forwarding on complete
//! rooted trees with the root as source and silent leaves.
//!
//! On a tree there is one path to every node, so a node on level `l >= 1`
//! gets a given packet with probability `p^(l-1)` and holds at least `k` of
//! `n` packets with probability `P(Bin(n, p^(l-1)) >= k)`. Everything below
//! follows from that, with the binary tree as the default shape.

use crate::engine::check_probability;
use crate::error::{Error, Result};

/// `P(Bin(n, p) >= k)`, summed in log space with a single normalisation.
///
/// The shorter side of the distribution is summed: the upper tail directly
/// when `k` is above the mean, otherwise one minus the lower tail. Stable for
/// `n` up to at least `10^5`.
pub fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if k as f64 > n as f64 * p {
        log_sum_range(n, p, k, n)
    } else {
        1.0 - log_sum_range(n, p, 0, k - 1)
    }
}

/// `sum_{i=lo..=hi} P(Bin(n, p) = i)`, walking away from the end nearer the
/// mean so the first term is the largest.
fn log_sum_range(n: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_odds = ln_p - ln_q;
    let log_pmf = |i: u64| ln_choose(n, i) + i as f64 * ln_p + (n - i) as f64 * ln_q;
    let mut logs = Vec::with_capacity((hi - lo + 1) as usize);
    if lo as f64 >= n as f64 * p {
        let mut l = log_pmf(lo);
        logs.push(l);
        for i in lo..hi {
            l += ((n - i) as f64 / (i + 1) as f64).ln() + ln_odds;
            logs.push(l);
        }
    } else {
        let mut l = log_pmf(hi);
        logs.push(l);
        for i in (lo + 1..=hi).rev() {
            l += (i as f64 / (n - i + 1) as f64).ln() - ln_odds;
            logs.push(l);
        }
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return 0.0;
    }
    let scaled: f64 = logs.iter().map(|&l| (l - peak).exp()).sum();
    (peak + scaled.ln()).exp().clamp(0.0, 1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Relative entropy `D(r || s)` between Bernoulli laws, in nats.
///
/// Returns `+inf` when `s` is 0 or 1 and `r` differs from it.
pub fn relative_entropy(r: f64, s: f64) -> Result<f64> {
    check_probability(r)?;
    check_probability(s)?;
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    Ok(term(r, s) + term(1.0 - r, 1.0 - s))
}

/// Parameters of the tree analysis: a complete `degree`-ary tree of
/// `height` levels below the root and an `(n, k)` code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeAnalysisInput {
    pub height: usize,
    pub k: u64,
    pub n: u64,
    pub delta: f64,
    pub degree: usize,
}

impl TreeAnalysisInput {
    pub fn binary(height: usize, k: u64, n: u64, delta: f64) -> Result<Self> {
        let input = TreeAnalysisInput { height, k, n, delta, degree: 2 };
        input.validate()?;
        Ok(input)
    }

    /// Binary tree input with `n = round(k (1 + rho))`.
    pub fn binary_with_redundancy(height: usize, k: u64, rho: f64, delta: f64) -> Result<Self> {
        let coding = crate::engine::CodingConfig::from_redundancy(k as usize, rho)?;
        Self::binary(height, k, coding.n() as u64, delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 1 {
            return Err(Error::InvalidParameter("tree height must be at least 1".into()));
        }
        if self.degree < 2 {
            return Err(Error::InvalidParameter("tree degree must be at least 2".into()));
        }
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidParameter(format!("need 1 <= k <= n, got k = {}, n = {}", self.k, self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        Ok(())
    }

    pub fn redundancy(&self) -> f64 {
        (self.n - self.k) as f64 / self.k as f64
    }

    /// Total node count `(d^(H+1) - 1) / (d - 1)`.
    pub fn node_count(&self) -> f64 {
        let d = self.degree as f64;
        (0..=self.height).map(|l| d.powi(l as i32)).sum()
    }
}

/// `E[R] = 1 + sum_{l=1..H} d^l P(Bin(n, p^(l-1)) >= k)`.
pub fn tree_expected_receivers(input: &TreeAnalysisInput, p: f64) -> Result<f64> {
    input.validate()?;
    check_probability(p)?;
    Ok(expected_receivers_unchecked(input, p))
}

fn expected_receivers_unchecked(input: &TreeAnalysisInput, p: f64) -> f64 {
    let d = input.degree as f64;
    let mut total = 1.0;
    let mut width = 1.0;
    let mut reach = 1.0;
    for _ in 1..=input.height {
        width *= d;
        total += width * binomial_tail(input.n, reach, input.k);
        reach *= p;
    }
    total
}

/// Expected fraction of nodes that decode, `E[R] / N`.
pub fn tree_coverage(input: &TreeAnalysisInput, p: f64) -> Result<f64> {
    Ok(tree_expected_receivers(input, p)? / input.node_count())
}

/// `E[T] = n ((dp)^H - 1) / (dp - 1)`, or `n H` at `dp = 1`.
pub fn tree_expected_transmissions(input: &TreeAnalysisInput, p: f64) -> Result<f64> {
    input.validate()?;
    check_probability(p)?;
    let n = input.n as f64;
    let dp = input.degree as f64 * p;
    if (dp - 1.0).abs() < 1e-9 {
        return Ok(n * input.height as f64);
    }
    Ok(n * (dp.powi(input.height as i32) - 1.0) / (dp - 1.0))
}

/// Least `p` whose expected coverage reaches `1 - delta`, found by bisection
/// to within `1e-9` on the exact (monotone, continuous) coverage curve.
pub fn tree_min_p_exact(input: &TreeAnalysisInput) -> Result<f64> {
    input.validate()?;
    let n_nodes = input.node_count();
    let target = 1.0 - input.delta;
    let covers = |p: f64| expected_receivers_unchecked(input, p) / n_nodes >= target;
    if covers(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if covers(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Large-`k` approximation `(1 / (1 + rho))^(1 / (H - 1))` of the minimum
/// forwarding probability.
pub fn tree_min_p_closedform(height: usize, rho: f64) -> Result<f64> {
    if height < 2 {
        return Err(Error::InvalidParameter("closed form needs height >= 2".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("redundancy {rho} must be >= 0")));
    }
    Ok((1.0 / (1.0 + rho)).powf(1.0 / (height - 1) as f64))
}

/// Expected transmissions at the closed-form minimum probability on a
/// binary tree: `k (2^H p - (1 + rho)) / (2 p - 1)`.
pub fn tree_tau_closedform(height: usize, k: u64, rho: f64) -> Result<f64> {
    tree_tau_closedform_dary(2, height, k, rho)
}

/// [`tree_tau_closedform`] with `2` replaced by the branching degree.
pub fn tree_tau_closedform_dary(degree: usize, height: usize, k: u64, rho: f64) -> Result<f64> {
    let p = tree_min_p_closedform(height, rho)?;
    let d = degree as f64;
    let denom = d * p - 1.0;
    if denom <= 0.0 {
        return Err(Error::OutOfRange(format!("d p - 1 = {denom} is not positive at rho = {rho}")));
    }
    Ok(k as f64 * (d.powi(height as i32) * p - (1.0 + rho)) / denom)
}

/// `floor(ln(1 / (1 + rho)) / ln p)`: the deepest level whose reach
/// probability `p^l` still exceeds `k / n`. `None` when it is unbounded
/// (`p = 1`) or undefined (`p = 0`).
pub fn threshold_level(p: f64, rho: f64) -> Option<i64> {
    if p <= 0.0 || p >= 1.0 {
        return None;
    }
    Some(((1.0 / (1.0 + rho)).ln() / p.ln()).floor() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailRegime {
    /// `p^l > 1/(1+rho)`: the mean `n p^l` exceeds `k`.
    AboveMean,
    /// `p^l < 1/(1+rho)`: the mean falls short of `k`.
    BelowMean,
}

/// Chernoff bounds on `P(Z_l >= k)` with `Z_l ~ Bin(n, p^l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower: f64,
    pub upper: f64,
    pub regime: TailRegime,
    pub threshold_level: Option<i64>,
}

/// Applicable Chernoff bound for level `l`; the other side is the trivial
/// bound 0 or 1.
///
/// With `t = 1/(1+rho) = k/n` and `e = exp(-n D(t || p^l))`: when `p^l > t`
/// the lower bound is `1 - e`, and when `p^l < t` the upper bound is `e`.
/// `p^l == t` puts the mean exactly on `k` (tail close to 1/2) and is
/// reported as [`Error::Boundary`].
pub fn chernoff_tail_bounds(input: &TreeAnalysisInput, p: f64, level: u32) -> Result<TailBounds> {
    input.validate()?;
    check_probability(p)?;
    let t = input.k as f64 / input.n as f64;
    let reach = p.powi(level as i32);
    let rho = input.redundancy();
    if (reach - t).abs() <= 1e-12 * t {
        return Err(Error::Boundary(format!(
            "p^l = 1/(1+rho) = {t} at level {level}: mean equals k, tail is about 1/2"
        )));
    }
    let exponent = input.n as f64 * relative_entropy(t, reach)?;
    let e = (-exponent).exp();
    let (lower, upper, regime) =
        if reach > t { (1.0 - e, 1.0, TailRegime::AboveMean) } else { (0.0, e, TailRegime::BelowMean) };
    Ok(TailBounds { lower, upper, regime, threshold_level: threshold_level(p, rho) })
}
