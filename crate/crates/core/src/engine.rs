//! One trial of probabilistic forwarding for `n` coded packets.
//!
//! Each packet is simulated as site percolation: every non-source node draws
//! one uniform per packet and is *active* when that uniform is at most `p`.
//! A node receives the packet when some path from the source reaches it
//! through active, forward-permitted intermediate nodes. Because a node's
//! forwarding decision is a single Bernoulli(p) draw that does not depend on
//! when or from whom the packet arrived, this has the same law as the
//! event-driven protocol, and it lets several values of `p` share one set of
//! uniforms (quantile coupling).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// `k` message packets MDS-coded into `n >= k` packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodingConfig {
    k: usize,
    n: usize,
}

impl CodingConfig {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if n < k {
            return Err(Error::InvalidParameter(format!("n = {n} is smaller than k = {k}")));
        }
        Ok(CodingConfig { k, n })
    }

    /// `n = round(k (1 + rho))`, rounding halves up.
    pub fn from_redundancy(k: usize, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("redundancy {rho} must be a finite value >= 0")));
        }
        let n = (k as f64 * (1.0 + rho) + 0.5 + 1e-9).floor() as usize;
        Self::new(k, n)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(n - k) / k`.
    pub fn redundancy(&self) -> f64 {
        (self.n - self.k) as f64 / self.k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub p: f64,
    pub source: usize,
}

impl ProtocolParams {
    pub fn new(p: f64, source: usize) -> Result<Self> {
        check_probability(p)?;
        Ok(ProtocolParams { p, source })
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        check_probability(self.p)?;
        g.check_node(self.source)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability {p} is outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Nodes, source included, holding at least `k` of the `n` packets.
    pub receivers: usize,
    /// Packet broadcasts summed over all nodes and packets.
    pub transmissions: u64,
}

/// Seeded source of per-trial, per-packet, per-node uniforms.
///
/// The uniform for `(trial, packet, node)` is fixed by the seed and the graph
/// size alone, so trials can run in any order or in parallel and a longer
/// code (larger `n`) extends a shorter one packet-for-packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the uniforms of `packet` in `trial` into `out` (one per node).
    pub fn fill_packet(&self, trial: u64, packet: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        // one f64 consumes two 32-bit words
        rng.set_word_pos(2 * (packet as u128) * (out.len() as u128));
        for u in out.iter_mut() {
            *u = rng.gen::<f64>();
        }
    }

    pub fn table(&self, trial: u64, packets: usize, nodes: usize) -> UniformTable {
        let mut values = vec![0.0; packets * nodes];
        if nodes > 0 {
            for (j, row) in values.chunks_mut(nodes).enumerate() {
                self.fill_packet(trial, j, row);
            }
        }
        UniformTable { packets, nodes, values }
    }
}

/// Dense `packets x nodes` table of uniforms on `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformTable {
    packets: usize,
    nodes: usize,
    values: Vec<f64>,
}

impl UniformTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::InvalidParameter("uniform rows differ in length".into()));
        }
        let packets = rows.len();
        Ok(UniformTable { packets, nodes, values: rows.into_iter().flatten().collect() })
    }

    pub fn packets(&self) -> usize {
        self.packets
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn row(&self, packet: usize) -> &[f64] {
        &self.values[packet * self.nodes..(packet + 1) * self.nodes]
    }

    fn check(&self, g: &Graph, coding: &CodingConfig) -> Result<()> {
        if self.nodes != g.node_count() || self.packets < coding.n() {
            return Err(Error::InvalidParameter(format!(
                "uniform table is {}x{} but the trial needs {}x{}",
                self.packets,
                self.nodes,
                coding.n(),
                g.node_count()
            )));
        }
        Ok(())
    }
}

/// Nodes reached by one packet when exactly the nodes flagged in `active`
/// (and permitted by the forwarding mask) relay it. The source always
/// broadcasts, so it and its neighbours are always reached.
pub fn packet_reach(g: &Graph, source: usize, active: &[bool]) -> Result<Vec<bool>> {
    g.check_node(source)?;
    if active.len() != g.node_count() {
        return Err(Error::InvalidParameter(format!(
            "activation vector has length {} for {} nodes",
            active.len(),
            g.node_count()
        )));
    }
    let mut reached = vec![false; g.node_count()];
    let mut queue = VecDeque::new();
    reach_into(g, source, |v| active[v], &mut reached, &mut queue);
    Ok(reached)
}

fn reach_into(
    g: &Graph,
    source: usize,
    relays: impl Fn(usize) -> bool,
    reached: &mut [bool],
    queue: &mut VecDeque<usize>,
) {
    reached.fill(false);
    queue.clear();
    reached[source] = true;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        if u != source && !(g.can_forward(u) && relays(u)) {
            continue;
        }
        for &v in g.neighbors(u) {
            if !reached[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
}

/// Runs one trial at forwarding probability `proto.p`, using packet rows
/// `0..n` of `uniforms`.
pub fn run_trial(
    g: &Graph,
    coding: &CodingConfig,
    proto: &ProtocolParams,
    uniforms: &UniformTable,
) -> Result<TrialOutcome> {
    proto.validate(g)?;
    uniforms.check(g, coding)?;
    let n_nodes = g.node_count();
    let mut counts = vec![0usize; n_nodes];
    let mut reached = vec![false; n_nodes];
    let mut queue = VecDeque::with_capacity(n_nodes);
    let mut transmissions = 0u64;
    for j in 0..coding.n() {
        let row = uniforms.row(j);
        reach_into(g, proto.source, |v| row[v] <= proto.p, &mut reached, &mut queue);
        transmissions += 1;
        for v in 0..n_nodes {
            if reached[v] {
                counts[v] += 1;
                if v != proto.source && g.can_forward(v) && row[v] <= proto.p {
                    transmissions += 1;
                }
            }
        }
    }
    let receivers = counts.iter().filter(|&&c| c >= coding.k()).count();
    Ok(TrialOutcome { receivers, transmissions })
}

/// Min-heap entry ordered by threshold, then node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MinKey(f64, usize);

impl Eq for MinKey {}

impl Ord for MinKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for MinKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable buffers for [`reach_thresholds`].
#[derive(Debug, Default)]
pub struct ThresholdScratch {
    heap: BinaryHeap<MinKey>,
}

/// Smallest `p` at which each node receives the packet whose uniforms are
/// `row`: the minimum over source paths of the largest uniform among the
/// path's intermediate nodes. The source and its neighbours get `-inf`;
/// unreachable nodes get `+inf`. Node `v` is in `packet_reach` at `p` iff
/// `out[v] <= p`.
pub fn reach_thresholds(g: &Graph, source: usize, row: &[f64], out: &mut [f64], scratch: &mut ThresholdScratch) {
    out.fill(f64::INFINITY);
    let heap = &mut scratch.heap;
    heap.clear();
    out[source] = f64::NEG_INFINITY;
    heap.push(MinKey(f64::NEG_INFINITY, source));
    while let Some(MinKey(d, u)) = heap.pop() {
        if d > out[u] {
            continue;
        }
        let relay = if u == source {
            f64::NEG_INFINITY
        } else if g.can_forward(u) {
            d.max(row[u])
        } else {
            continue;
        };
        for &w in g.neighbors(u) {
            if relay < out[w] {
                out[w] = relay;
                heap.push(MinKey(relay, w));
            }
        }
    }
}

/// Smallest `p` at which non-source node `v` both receives and rebroadcasts
/// a packet; `+inf` when it may not forward.
pub fn transmit_threshold(g: &Graph, v: usize, reach: f64, uniform: f64) -> f64 {
    if g.can_forward(v) {
        reach.max(uniform)
    } else {
        f64::INFINITY
    }
}

/// Runs one trial for every `p` in `p_list` from the same uniforms. Under
/// this coupling receivers and transmissions are non-decreasing in `p`
/// trial by trial.
pub fn run_trial_coupled(
    g: &Graph,
    coding: &CodingConfig,
    source: usize,
    p_list: &[f64],
    uniforms: &UniformTable,
) -> Result<Vec<TrialOutcome>> {
    g.check_node(source)?;
    uniforms.check(g, coding)?;
    for &p in p_list {
        check_probability(p)?;
    }
    if p_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("p_list must be ascending".into()));
    }
    let n_nodes = g.node_count();
    let mut counts = vec![vec![0usize; n_nodes]; p_list.len()];
    let mut transmissions = vec![coding.n() as u64; p_list.len()];
    let mut thr = vec![0.0; n_nodes];
    let mut scratch = ThresholdScratch::default();
    for j in 0..coding.n() {
        let row = uniforms.row(j);
        reach_thresholds(g, source, row, &mut thr, &mut scratch);
        for v in 0..n_nodes {
            let tx = if v == source { f64::INFINITY } else { transmit_threshold(g, v, thr[v], row[v]) };
            for (i, &p) in p_list.iter().enumerate() {
                if thr[v] <= p {
                    counts[i][v] += 1;
                }
                if tx <= p {
                    transmissions[i] += 1;
                }
            }
        }
    }
    Ok(counts
        .iter()
        .zip(transmissions)
        .map(|(c, t)| TrialOutcome { receivers: c.iter().filter(|&&x| x >= coding.k()).count(), transmissions: t })
        .collect())
}
