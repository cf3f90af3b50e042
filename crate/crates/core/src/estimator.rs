//! Monte Carlo estimation of coverage `E[R/N]` and load `E[T]`, the search
//! for the minimum forwarding probability, and redundancy sweeps.
//!
//! Trials draw their uniforms from a [`RandomStream`] indexed by trial,
//! packet and node, so every probe of `p` and every code length in a sweep
//! sees the same random numbers. Coverage is then monotone in `p` for the
//! sample as a whole, which is what makes bisection sound.
//!
//! The search does not rerun the simulation at each probe. For every trial
//! and node it records the smallest `p` at which that node would decode (the
//! `k`-th smallest per-packet reach threshold); probing coverage at `p` is a
//! count over those thresholds and gives exactly what a coupled rerun at `p`
//! would.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::engine::{
    reach_thresholds, run_trial, transmit_threshold, CodingConfig, ProtocolParams, RandomStream, ThresholdScratch,
};
use crate::error::{Error, Result};
use crate::graph::{largest_component, Graph};

pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_P_TOLERANCE: f64 = 0.01;
pub const DEFAULT_SEED: u64 = 0x5eed_2019;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl Estimate {
    /// Uses the `n - 1` sample variance; a single sample has zero error.
    pub fn from_samples(samples: &[f64]) -> Self {
        let trials = samples.len();
        assert!(trials > 0, "an estimate needs at least one sample");
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let std_error = if trials > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            (var / trials as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_error, trials }
    }

    /// `|mean - value| <= z * std_error`, with a little room for rounding
    /// when the sample has no spread.
    pub fn agrees_with(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error + 1e-9 * value.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageLoad {
    /// Fraction of nodes that decode, `R / N`.
    pub coverage: Estimate,
    /// Total transmissions `T`.
    pub load: Estimate,
}

/// Upper bound `n + (N - 1) n p` on expected transmissions.
pub fn transmission_upper_bound(n: usize, nodes: usize, p: f64) -> f64 {
    n as f64 + (nodes as f64 - 1.0) * n as f64 * p
}

/// Runs `trials` independent trials at `proto.p`. Trial `i` uses stream
/// index `i` of `seed`.
pub fn estimate(
    g: &Graph,
    coding: &CodingConfig,
    proto: &ProtocolParams,
    trials: usize,
    seed: u64,
) -> Result<CoverageLoad> {
    proto.validate(g)?;
    check_trials(trials)?;
    let stream = RandomStream::new(seed);
    let n_nodes = g.node_count();
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(g, coding, proto, &stream.table(trial, coding.n(), n_nodes)))
        .collect::<Result<Vec<_>>>()?;
    let coverage: Vec<f64> = outcomes.iter().map(|o| o.receivers as f64 / n_nodes as f64).collect();
    let load: Vec<f64> = outcomes.iter().map(|o| o.transmissions as f64).collect();
    Ok(CoverageLoad { coverage: Estimate::from_samples(&coverage), load: Estimate::from_samples(&load) })
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    Ok(())
}

/// How the minimum forwarding probability is located.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    /// Halve `[0, 1]` until the bracket is no wider than the tolerance.
    Bisection,
    /// Walk down from `p = 1` in fixed steps and stop at the first failure.
    Linear { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub trials: usize,
    pub p_tolerance: f64,
    pub seed: u64,
    pub mode: SearchMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            trials: DEFAULT_TRIALS,
            p_tolerance: DEFAULT_P_TOLERANCE,
            seed: DEFAULT_SEED,
            mode: SearchMode::Bisection,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        if !(self.p_tolerance > 0.0) {
            return Err(Error::InvalidParameter("p tolerance must be positive".into()));
        }
        if let SearchMode::Linear { step } = self.mode {
            if !(step > 0.0 && step <= 1.0) {
                return Err(Error::InvalidParameter(format!("linear step {step} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinProbability {
    Feasible {
        p_min: f64,
        /// Estimated coverage at `p_min`.
        coverage: f64,
    },
    Infeasible {
        /// Best achievable estimated coverage (at `p = 1`), or the source
        /// component's share of the nodes when the pre-check fails.
        max_coverage: f64,
    },
}

impl MinProbability {
    pub fn p_min(&self) -> Option<f64> {
        match *self {
            MinProbability::Feasible { p_min, .. } => Some(p_min),
            MinProbability::Infeasible { .. } => None,
        }
    }
}

/// One row of a redundancy sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub rho: f64,
    pub n: usize,
    pub delta: f64,
    pub p_min: Option<f64>,
    /// Load estimate at `p_min`.
    pub tau: Option<Estimate>,
    /// Estimated coverage at `p_min`.
    pub coverage: Option<f64>,
}

impl SweepPoint {
    pub fn feasible(&self) -> bool {
        self.p_min.is_some()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta {delta} must lie in (0, 1)")))
    }
}

/// Smallest `p` whose estimated coverage is at least `1 - delta`.
pub fn min_forwarding_probability(
    g: &Graph,
    coding: &CodingConfig,
    source: usize,
    delta: f64,
    config: &SearchConfig,
) -> Result<MinProbability> {
    check_delta(delta)?;
    let profile = DecodeProfile::collect(g, source, coding.k(), &[coding.n()], config)?;
    Ok(search(&profile, 0, delta, config))
}

/// For each `rho`, `n = round(k (1 + rho))`, the minimum forwarding
/// probability and the load estimate there. Rows follow `rho_list`; an
/// infeasible row does not stop the sweep.
pub fn sweep_redundancy(
    g: &Graph,
    source: usize,
    k: usize,
    rho_list: &[f64],
    delta: f64,
    config: &SearchConfig,
) -> Result<Vec<SweepPoint>> {
    check_delta(delta)?;
    config.validate()?;
    g.check_node(source)?;
    let codings = rho_list.iter().map(|&rho| CodingConfig::from_redundancy(k, rho)).collect::<Result<Vec<_>>>()?;
    if codings.is_empty() {
        return Ok(Vec::new());
    }
    let mut lengths: Vec<usize> = codings.iter().map(CodingConfig::n).collect();
    lengths.sort_unstable();
    lengths.dedup();

    let profile = DecodeProfile::collect(g, source, k, &lengths, config)?;
    let found: Vec<MinProbability> = (0..lengths.len()).map(|i| search(&profile, i, delta, config)).collect();
    let targets: Vec<Option<f64>> = found.iter().map(MinProbability::p_min).collect();
    let loads = coupled_loads(g, source, &lengths, &targets, config)?;

    Ok(rho_list
        .iter()
        .zip(&codings)
        .map(|(&rho, coding)| {
            let i = lengths.binary_search(&coding.n()).expect("length was collected");
            let (p_min, coverage) = match found[i] {
                MinProbability::Feasible { p_min, coverage } => (Some(p_min), Some(coverage)),
                MinProbability::Infeasible { .. } => (None, None),
            };
            SweepPoint { rho, n: coding.n(), delta, p_min, tau: loads[i], coverage }
        })
        .collect())
}

/// Per-node decode thresholds pooled over all trials, one sorted list per
/// code length.
struct DecodeProfile {
    sorted: Vec<Vec<f64>>,
    samples: usize,
    /// Share of nodes in the source's component.
    reachable: f64,
}

impl DecodeProfile {
    fn collect(g: &Graph, source: usize, k: usize, lengths: &[usize], config: &SearchConfig) -> Result<Self> {
        config.validate()?;
        g.check_node(source)?;
        if lengths.iter().any(|&n| n < k) || k == 0 {
            return Err(Error::InvalidParameter("every code length must be at least k >= 1".into()));
        }
        let n_nodes = g.node_count();
        let reachable = largest_component(g, source)?.size as f64 / n_nodes as f64;
        let stream = RandomStream::new(config.seed);
        let per_trial: Vec<Vec<Vec<f64>>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| trial_decode_thresholds(g, source, k, lengths, &stream, trial))
            .collect();
        let mut sorted = vec![Vec::with_capacity(config.trials * n_nodes); lengths.len()];
        for trial in per_trial {
            for (pool, values) in sorted.iter_mut().zip(trial) {
                pool.extend(values);
            }
        }
        for pool in &mut sorted {
            pool.sort_unstable_by(f64::total_cmp);
        }
        Ok(DecodeProfile { sorted, samples: config.trials * n_nodes, reachable })
    }

    /// Estimated coverage at `p` for code length index `i`.
    fn coverage(&self, i: usize, p: f64) -> f64 {
        self.sorted[i].partition_point(|&t| t <= p) as f64 / self.samples as f64
    }
}

#[derive(Clone, Copy, PartialEq)]
struct MaxKey(f64);

impl Eq for MaxKey {}

impl PartialOrd for MaxKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MaxKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// For each code length in `lengths` (ascending), the smallest `p` at which
/// each node holds `k` packets: the `k`-th smallest reach threshold over
/// the first `n` packets.
fn trial_decode_thresholds(
    g: &Graph,
    source: usize,
    k: usize,
    lengths: &[usize],
    stream: &RandomStream,
    trial: u64,
) -> Vec<Vec<f64>> {
    let n_nodes = g.node_count();
    let n_max = *lengths.last().expect("at least one code length");
    let mut row = vec![0.0; n_nodes];
    let mut thr = vec![0.0; n_nodes];
    let mut scratch = ThresholdScratch::default();
    // k smallest thresholds seen so far, per node
    let mut smallest: Vec<BinaryHeap<MaxKey>> = (0..n_nodes).map(|_| BinaryHeap::with_capacity(k + 1)).collect();
    let mut out = Vec::with_capacity(lengths.len());
    let mut next = 0;
    for j in 0..n_max {
        stream.fill_packet(trial, j, &mut row);
        reach_thresholds(g, source, &row, &mut thr, &mut scratch);
        for (heap, &t) in smallest.iter_mut().zip(&thr) {
            if heap.len() < k {
                heap.push(MaxKey(t));
            } else if t < heap.peek().expect("heap holds k items").0 {
                heap.pop();
                heap.push(MaxKey(t));
            }
        }
        while next < lengths.len() && lengths[next] == j + 1 {
            out.push(
                smallest
                    .iter()
                    .map(|h| if h.len() == k { h.peek().expect("non-empty").0 } else { f64::INFINITY })
                    .collect(),
            );
            next += 1;
        }
    }
    out
}

fn search(profile: &DecodeProfile, i: usize, delta: f64, config: &SearchConfig) -> MinProbability {
    let target = 1.0 - delta;
    if profile.reachable < target {
        return MinProbability::Infeasible { max_coverage: profile.reachable };
    }
    let at_one = profile.coverage(i, 1.0);
    if at_one < target {
        return MinProbability::Infeasible { max_coverage: at_one };
    }
    let covers = |p: f64| profile.coverage(i, p) >= target;
    let p_min = match config.mode {
        SearchMode::Bisection => {
            if covers(0.0) {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while hi - lo > config.p_tolerance {
                    let mid = 0.5 * (lo + hi);
                    if covers(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
        SearchMode::Linear { step } => {
            let mut best = 1.0;
            let mut i = 1u32;
            loop {
                let p = (1.0 - i as f64 * step).max(0.0);
                if !covers(p) {
                    break;
                }
                best = p;
                if p == 0.0 {
                    break;
                }
                i += 1;
            }
            best
        }
    };
    MinProbability::Feasible { p_min, coverage: profile.coverage(i, p_min) }
}

/// Load estimate for each code length at its own target probability, from
/// the same uniforms as the search.
fn coupled_loads(
    g: &Graph,
    source: usize,
    lengths: &[usize],
    targets: &[Option<f64>],
    config: &SearchConfig,
) -> Result<Vec<Option<Estimate>>> {
    let n_nodes = g.node_count();
    let n_max = lengths.iter().zip(targets).filter(|(_, t)| t.is_some()).map(|(&n, _)| n).max();
    let Some(n_max) = n_max else {
        return Ok(vec![None; lengths.len()]);
    };
    let stream = RandomStream::new(config.seed);
    let per_trial: Vec<Vec<u64>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut row = vec![0.0; n_nodes];
            let mut thr = vec![0.0; n_nodes];
            let mut scratch = ThresholdScratch::default();
            let mut totals = vec![0u64; lengths.len()];
            for j in 0..n_max {
                stream.fill_packet(trial, j, &mut row);
                reach_thresholds(g, source, &row, &mut thr, &mut scratch);
                for ((total, &n), target) in totals.iter_mut().zip(lengths).zip(targets) {
                    let Some(p) = *target else { continue };
                    if j >= n {
                        continue;
                    }
                    *total += 1;
                    *total += (0..n_nodes)
                        .filter(|&v| v != source && transmit_threshold(g, v, thr[v], row[v]) <= p)
                        .count() as u64;
                }
            }
            totals
        })
        .collect();
    Ok((0..lengths.len())
        .map(|i| {
            targets[i].map(|_| {
                let samples: Vec<f64> = per_trial.iter().map(|t| t[i] as f64).collect();
                Estimate::from_samples(&samples)
            })
        })
        .collect())
}
