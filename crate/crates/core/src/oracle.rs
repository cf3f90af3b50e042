//! Exact per-node reach probabilities on small graphs by enumerating every
//! activation pattern of the nodes that may relay.
//!
//! For each pattern the reached set is fixed, so the number of patterns with
//! `a` active relays that reach node `v` is an integer independent of `p`.
//! Those counts are accumulated once; `q_v(p)` is then the short sum
//! `sum_a count[v][a] p^a (1-p)^(m-a)` over `m` free relays.

use crate::engine::{check_probability, CodingConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tree::binomial_tail;

/// Default cap on the number of enumerated relays (`2^20` patterns).
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

/// Probability that each node receives one fixed packet at forwarding
/// probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachProfile {
    pub p: f64,
    pub source: usize,
    pub q: Vec<f64>,
}

/// Pattern counts per node and per number of active relays.
#[derive(Debug, Clone)]
pub struct ReachPolynomial {
    source: usize,
    relays: usize,
    counts: Vec<Vec<u64>>,
}

impl ReachPolynomial {
    pub fn build(g: &Graph, source: usize, limit: usize) -> Result<Self> {
        g.check_node(source)?;
        let n = g.node_count();
        if n > 64 {
            return Err(Error::GraphTooLarge { nodes: n, limit: 64 });
        }
        let free: Vec<usize> = (0..n).filter(|&v| v != source && g.can_forward(v)).collect();
        if free.len() > limit {
            return Err(Error::GraphTooLarge { nodes: free.len(), limit });
        }
        let nbr_bits: Vec<u64> = (0..n).map(|u| g.neighbors(u).iter().fold(0u64, |acc, &v| acc | 1 << v)).collect();
        let m = free.len();
        let mut counts = vec![vec![0u64; m + 1]; n];
        for pattern in 0u64..(1u64 << m) {
            let mut active = 0u64;
            for (bit, &v) in free.iter().enumerate() {
                if pattern >> bit & 1 == 1 {
                    active |= 1 << v;
                }
            }
            let reached = reach_bits(&nbr_bits, source, active);
            let a = pattern.count_ones() as usize;
            let mut rest = reached;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                counts[v][a] += 1;
                rest &= rest - 1;
            }
        }
        Ok(ReachPolynomial { source, relays: m, counts })
    }

    pub fn evaluate(&self, p: f64) -> Result<ReachProfile> {
        check_probability(p)?;
        let m = self.relays;
        let patterns = 1u64 << m;
        let weights: Vec<f64> = (0..=m).map(|a| p.powi(a as i32) * (1.0 - p).powi((m - a) as i32)).collect();
        let q = self
            .counts
            .iter()
            .map(|row| {
                if row.iter().sum::<u64>() == patterns {
                    1.0
                } else {
                    row.iter().zip(&weights).map(|(&c, &w)| c as f64 * w).sum::<f64>().min(1.0)
                }
            })
            .collect();
        Ok(ReachProfile { p, source: self.source, q })
    }
}

fn reach_bits(nbr_bits: &[u64], source: usize, active: u64) -> u64 {
    let mut reached = 1u64 << source;
    let mut frontier = reached;
    let mut relayed = 0u64;
    loop {
        let relaying = frontier & !relayed & (active | 1 << source);
        if relaying == 0 {
            return reached;
        }
        relayed |= relaying;
        let mut next = 0u64;
        let mut rest = relaying;
        while rest != 0 {
            next |= nbr_bits[rest.trailing_zeros() as usize];
            rest &= rest - 1;
        }
        frontier = next & !reached;
        reached |= next;
    }
}

/// Exact reach probabilities, enumerating at most
/// [`DEFAULT_ENUMERATION_LIMIT`] free relays.
pub fn exact_reach_probabilities(g: &Graph, source: usize, p: f64) -> Result<ReachProfile> {
    exact_reach_probabilities_with_limit(g, source, p, DEFAULT_ENUMERATION_LIMIT)
}

pub fn exact_reach_probabilities_with_limit(g: &Graph, source: usize, p: f64, limit: usize) -> Result<ReachProfile> {
    check_probability(p)?;
    ReachPolynomial::build(g, source, limit)?.evaluate(p)
}

/// Exact `(E[R], E[T])`. Packets are independent, so each node's reception
/// count is `Bin(n, q_v)` and a reached relay forwards with probability `p`
/// independently of having been reached.
pub fn exact_expectations(profile: &ReachProfile, coding: &CodingConfig, g: &Graph) -> Result<(f64, f64)> {
    if profile.q.len() != g.node_count() {
        return Err(Error::InvalidParameter("reach profile does not match the graph".into()));
    }
    let n = coding.n() as u64;
    let k = coding.k() as u64;
    let receivers = profile.q.iter().map(|&q| binomial_tail(n, q, k)).sum();
    let relayed: f64 = (0..g.node_count())
        .filter(|&v| v != profile.source && g.can_forward(v))
        .map(|v| profile.p * profile.q[v])
        .sum();
    Ok((receivers, coding.n() as f64 * (1.0 + relayed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_grid, gen_tree, GridSpec, TreeSpec};
    use crate::tree::{tree_expected_receivers, tree_expected_transmissions, TreeAnalysisInput};

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn small_graph_examples() {
        for p in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let prof = exact_reach_probabilities(&path3(), 0, p).unwrap();
            assert_eq!(prof.q[0], 1.0);
            assert_eq!(prof.q[1], 1.0);
            assert!((prof.q[2] - p).abs() < 1e-15);

            let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
            assert_eq!(exact_reach_probabilities(&tri, 0, p).unwrap().q, vec![1.0, 1.0, 1.0]);

            let cycle = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
            let q = exact_reach_probabilities(&cycle, 0, p).unwrap().q;
            assert!((q[2] - (2.0 * p - p * p)).abs() < 1e-15);
        }
    }

    #[test]
    fn path_expectations() {
        let g = path3();
        let coding = CodingConfig::new(1, 1).unwrap();
        for p in [0.1, 0.4, 0.8] {
            let prof = exact_reach_probabilities(&g, 0, p).unwrap();
            let (r, t) = exact_expectations(&prof, &coding, &g).unwrap();
            assert!((r - (2.0 + p)).abs() < 1e-15);
            assert!((t - (1.0 + p + p * p)).abs() < 1e-15);
        }
    }

    #[test]
    fn flooding_expectations() {
        let g = gen_grid(&GridSpec::new(3, 4)).unwrap();
        let coding = CodingConfig::new(2, 5).unwrap();
        let prof = exact_reach_probabilities(&g, 5, 1.0).unwrap();
        let (r, t) = exact_expectations(&prof, &coding, &g).unwrap();
        assert!((r - 12.0).abs() < 1e-12);
        assert!((t - 60.0).abs() < 1e-12);
    }

    #[test]
    fn tree_reach_is_power_of_p() {
        for h in 1..=4 {
            let spec = TreeSpec::binary(h);
            let g = gen_tree(&spec).unwrap();
            let poly = ReachPolynomial::build(&g, 0, DEFAULT_ENUMERATION_LIMIT).unwrap();
            for p in [0.13, 0.5, 0.77, 0.95] {
                let prof = poly.evaluate(p).unwrap();
                for v in 1..g.node_count() {
                    let expected = p.powi(spec.level_of(v) as i32 - 1);
                    assert!((prof.q[v] - expected).abs() < 1e-12, "h={h} v={v}");
                }
            }
        }
    }

    #[test]
    fn tree_expectations_match_closed_forms() {
        for h in 1..=4 {
            let g = gen_tree(&TreeSpec::binary(h)).unwrap();
            for (k, n) in [(1, 1), (2, 3), (3, 7)] {
                let coding = CodingConfig::new(k, n).unwrap();
                let input = TreeAnalysisInput::binary(h, k as u64, n as u64, 0.1).unwrap();
                for p in [0.2, 0.5, 0.9] {
                    let prof = exact_reach_probabilities(&g, 0, p).unwrap();
                    let (r, t) = exact_expectations(&prof, &coding, &g).unwrap();
                    assert!((r - tree_expected_receivers(&input, p).unwrap()).abs() < 1e-12);
                    assert!((t - tree_expected_transmissions(&input, p).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn profile_monotone_in_p() {
        let g = gen_grid(&GridSpec::new(3, 4).with_row_period(2)).unwrap();
        let poly = ReachPolynomial::build(&g, 5, DEFAULT_ENUMERATION_LIMIT).unwrap();
        let ps: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for w in ps.windows(2) {
            let a = poly.evaluate(w[0]).unwrap();
            let b = poly.evaluate(w[1]).unwrap();
            for v in 0..g.node_count() {
                assert!(a.q[v] <= b.q[v] + 1e-12);
            }
        }
        let prof = poly.evaluate(0.3).unwrap();
        assert_eq!(prof.q[5], 1.0);
        for &v in g.neighbors(5) {
            assert!((prof.q[v] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_nodes_do_not_relay() {
        let g = Graph::with_mask(4, &[(0, 1), (1, 2), (2, 3)], vec![true, true, false, true]).unwrap();
        let q = exact_reach_probabilities(&g, 0, 0.7).unwrap().q;
        assert!((q[2] - 0.7).abs() < 1e-15);
        assert_eq!(q[3], 0.0);
    }

    #[test]
    fn enumeration_cap() {
        let g = gen_grid(&GridSpec::new(5, 5)).unwrap();
        assert!(matches!(exact_reach_probabilities(&g, 0, 0.5), Err(Error::GraphTooLarge { nodes: 24, limit: 20 })));
        let g = gen_grid(&GridSpec::new(2, 4)).unwrap();
        assert!(exact_reach_probabilities_with_limit(&g, 0, 0.5, 3).is_err());
        assert!(exact_reach_probabilities_with_limit(&g, 0, 0.5, 7).is_ok());
    }
}
