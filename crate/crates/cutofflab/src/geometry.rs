//! Hop-count geometry of the transition diagram: all-pairs distances,
//! diameter, sparsity parameter, and the Lipschitz seminorm.

use crate::chain::Chain;
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::VecDeque;

/// Entries at or below this threshold are treated as absent when reading off
/// the support graph, so numerical dust cannot create edges or inflate `d`.
pub const SUPPORT_THRESHOLD: f64 = 1e-15;

/// All-pairs hop distances plus the derived geometric parameters.
#[derive(Debug, Clone)]
pub struct MetricData {
    n: usize,
    dist: Vec<u32>,
    diameter: u32,
    d_sparsity: f64,
    adj: Vec<Vec<u32>>,
}

impl MetricData {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dist(&self, x: usize, y: usize) -> u32 {
        self.dist[x * self.n + y]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    /// `d = max 1/T(x,y)` over distinct support pairs.
    pub fn d_sparsity(&self) -> f64 {
        self.d_sparsity
    }

    /// Neighbors of `x` in the (symmetric) support graph, ascending.
    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.adj[x]
    }
}

/// Breadth-first distances from every state over the support graph.
/// Requires weak reversibility (symmetric support); the support graph of an
/// irreducible weakly reversible chain is connected, so unreachable pairs
/// are a hard error rather than infinity.
pub fn hop_metric(chain: &Chain) -> Result<MetricData> {
    let n = chain.n();
    let cap = chain.dense_cap();
    if n > cap {
        return Err(Error::TooLargeForDense { n, cap });
    }
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut d_sparsity = 0.0f64;
    for x in 0..n {
        let (cols, vals) = chain.t().row(x);
        for (c, p) in cols.iter().zip(vals) {
            let y = *c as usize;
            if y == x || *p <= SUPPORT_THRESHOLD {
                continue;
            }
            if chain.t().entry(y, x) <= SUPPORT_THRESHOLD {
                return Err(Error::NotWeaklyReversible { x, y });
            }
            adj[x].push(*c);
            d_sparsity = d_sparsity.max(1.0 / p);
        }
    }
    let rows: Vec<Result<Vec<u32>>> = (0..n)
        .into_par_iter()
        .map(|s| bfs_row(&adj, n, s))
        .collect();
    let mut dist = Vec::with_capacity(n * n);
    let mut diameter = 0u32;
    for row in rows {
        let row = row?;
        for &d in &row {
            diameter = diameter.max(d);
        }
        dist.extend_from_slice(&row);
    }
    Ok(MetricData {
        n,
        dist,
        diameter,
        d_sparsity,
        adj,
    })
}

fn bfs_row(adj: &[Vec<u32>], n: usize, source: usize) -> Result<Vec<u32>> {
    let mut dist = vec![u32::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(source);
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            let y = y as usize;
            if dist[y] == u32::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    if let Some(y) = dist.iter().position(|d| *d == u32::MAX) {
        return Err(Error::NotIrreducible { witness: y });
    }
    Ok(dist)
}

/// Edge form of the Lipschitz seminorm: `max |f(x)-f(y)|` over support
/// edges. Equals the pairwise form `max |f(x)-f(y)|/dist(x,y)`.
pub fn lipschitz_seminorm(metric: &MetricData, f: &[f64]) -> f64 {
    let mut lip = 0.0f64;
    for x in 0..metric.n() {
        for &y in metric.neighbors(x) {
            lip = lip.max((f[x] - f[y as usize]).abs());
        }
    }
    lip
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, TransitionMatrix};

    fn cycle_chain(n: usize) -> Chain {
        let mut triplets = Vec::new();
        for x in 0..n {
            triplets.push((x, (x + 1) % n, 0.5));
            triplets.push((x, (x + n - 1) % n, 0.5));
        }
        build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap()
    }

    fn cube_chain(n_dims: usize) -> Chain {
        let n = 1usize << n_dims;
        let mut triplets = Vec::new();
        for x in 0..n {
            for i in 0..n_dims {
                triplets.push((x, x ^ (1 << i), 1.0 / n_dims as f64));
            }
        }
        build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap()
    }

    #[test]
    fn cycle_diameter() {
        let m = hop_metric(&cycle_chain(8)).unwrap();
        assert_eq!(m.diameter(), 4);
        assert_eq!(m.dist(0, 4), 4);
        assert_eq!(m.dist(0, 5), 3);
        assert!((m.d_sparsity() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cube_diameter_and_sparsity() {
        let m = hop_metric(&cube_chain(5)).unwrap();
        assert_eq!(m.diameter(), 5);
        assert!((m.d_sparsity() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_geometry() {
        let pi0 = vec![0.1, 0.2, 0.3, 0.15, 0.15, 0.1];
        let n = pi0.len();
        let mut triplets = Vec::new();
        for x in 0..n {
            for (y, p) in pi0.iter().enumerate() {
                triplets.push((x, y, *p));
            }
        }
        let chain = build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap();
        let m = hop_metric(&chain).unwrap();
        assert_eq!(m.diameter(), 1);
        assert!((m.d_sparsity() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn one_way_cycle_is_rejected() {
        let n = 4;
        let mut triplets = Vec::new();
        for x in 0..n {
            triplets.push((x, (x + 1) % n, 1.0));
        }
        let chain = build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap();
        assert!(matches!(
            hop_metric(&chain),
            Err(Error::NotWeaklyReversible { .. })
        ));
    }

    #[test]
    fn metric_axioms_hold() {
        let m = hop_metric(&cube_chain(4)).unwrap();
        let n = m.n();
        for x in 0..n {
            assert_eq!(m.dist(x, x), 0);
            for y in 0..n {
                assert_eq!(m.dist(x, y), m.dist(y, x));
                for z in 0..n {
                    assert!(m.dist(x, z) <= m.dist(x, y) + m.dist(y, z));
                }
            }
        }
    }

    #[test]
    fn lipschitz_edge_form_matches_pairwise_form() {
        let chain = cycle_chain(6);
        let m = hop_metric(&chain).unwrap();
        assert_eq!(lipschitz_seminorm(&m, &[3.0; 6]), 0.0);
        let geodesic: Vec<f64> = (0..6).map(|y| m.dist(0, y) as f64).collect();
        assert!((lipschitz_seminorm(&m, &geodesic) - 1.0).abs() < 1e-15);
        let f: Vec<f64> = vec![0.3, -1.2, 2.5, 0.0, 1.1, -0.7];
        let mut pairwise = 0.0f64;
        for x in 0..6 {
            for y in 0..6 {
                if x != y {
                    pairwise = pairwise.max((f[x] - f[y]).abs() / m.dist(x, y) as f64);
                }
            }
        }
        assert!((lipschitz_seminorm(&m, &f) - pairwise).abs() < 1e-15);
    }
}
