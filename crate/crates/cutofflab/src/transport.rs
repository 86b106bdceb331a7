//! Exact optimal transport on the finite metric space: W1 by successive
//! shortest paths with Johnson potentials (integer hop costs, so path
//! arithmetic is exact), W-infinity by binary search over achievable
//! distances with max-flow feasibility, and TV as transport under the
//! trivial metric.

use crate::error::{Error, Result};
use crate::geometry::MetricData;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Masses at or below this threshold are dropped before building flow
/// networks; kernel rows keep their support tiny this way.
pub const MASS_THRESHOLD: f64 = 1e-15;

const SATURATION_TOL: f64 = 1e-12;

/// An optimal coupling with its dual certificate. `pairs` hold state ids;
/// `dual_potentials` is a 1-Lipschitz function on the full space whose
/// mu-vs-nu gap reproduces the primal cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub pairs: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub dual_potentials: Vec<f64>,
}

fn validate_distribution(mu: &[f64]) -> Result<()> {
    let mut total = 0.0;
    for &v in mu {
        if !v.is_finite() || v < -1e-15 {
            return Err(Error::InvalidParameters {
                message: format!("distribution entry {v} is not a nonnegative real"),
            });
        }
        total += v.max(0.0);
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized { total });
    }
    Ok(())
}

fn support(mu: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut states = Vec::new();
    let mut masses = Vec::new();
    for (x, &v) in mu.iter().enumerate() {
        if v > MASS_THRESHOLD {
            states.push(x);
            masses.push(v);
        }
    }
    (states, masses)
}

struct W1Solution {
    cost: f64,
    flows: Vec<(usize, usize, f64)>,
    v_pot: Vec<i64>,
}

/// Min-cost flow on the bipartite support graph. Costs are integers, so
/// shortest-path labels and potentials stay exact; only masses are floats.
/// Shortest-path ties break toward the lowest node index for determinism.
fn solve_w1(
    a_states: &[usize],
    a_mass: &[f64],
    b_states: &[usize],
    b_mass: &[f64],
    dist: &dyn Fn(usize, usize) -> u32,
) -> W1Solution {
    let na = a_states.len();
    let nb = b_states.len();
    let nodes = na + nb;
    let mut cost_ab = vec![0i64; na * nb];
    for i in 0..na {
        for j in 0..nb {
            cost_ab[i * nb + j] = dist(a_states[i], b_states[j]) as i64;
        }
    }
    let mut flow = vec![0.0f64; na * nb];
    let mut pot = vec![0i64; nodes];
    let mut ra = a_mass.to_vec();
    let mut rb = b_mass.to_vec();
    let mut total_rem: f64 = ra.iter().sum();
    let max_augments = 8 * (nodes + 8);
    const INF: i64 = i64::MAX / 4;

    for _ in 0..max_augments {
        if total_rem <= 1e-13 {
            break;
        }
        let mut dist_lbl = vec![INF; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut heap: BinaryHeap<Reverse<(i64, u32)>> = BinaryHeap::new();
        for i in 0..na {
            if ra[i] > MASS_THRESHOLD {
                dist_lbl[i] = 0;
                heap.push(Reverse((0, i as u32)));
            }
        }
        while let Some(Reverse((d, node))) = heap.pop() {
            let node = node as usize;
            if d > dist_lbl[node] {
                continue;
            }
            if node < na {
                for j in 0..nb {
                    let rc = cost_ab[node * nb + j] + pot[node] - pot[na + j];
                    let nd = d + rc;
                    if nd < dist_lbl[na + j] {
                        dist_lbl[na + j] = nd;
                        parent[na + j] = node;
                        heap.push(Reverse((nd, (na + j) as u32)));
                    }
                }
            } else {
                let j = node - na;
                for i in 0..na {
                    if flow[i * nb + j] > MASS_THRESHOLD {
                        let rc = -cost_ab[i * nb + j] + pot[na + j] - pot[i];
                        let nd = d + rc;
                        if nd < dist_lbl[i] {
                            dist_lbl[i] = nd;
                            parent[i] = node;
                            heap.push(Reverse((nd, i as u32)));
                        }
                    }
                }
            }
        }
        let mut target = usize::MAX;
        for j in 0..nb {
            if rb[j] > MASS_THRESHOLD && dist_lbl[na + j] < INF {
                if target == usize::MAX || dist_lbl[na + j] < dist_lbl[na + target] {
                    target = j;
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let dt = dist_lbl[na + target];
        for v in 0..nodes {
            if dist_lbl[v] < INF {
                pot[v] += dist_lbl[v].min(dt);
            }
        }
        // Trace the augmenting path and find its bottleneck.
        let mut bottleneck = rb[target];
        let mut node = na + target;
        loop {
            let prev = parent[node];
            if node >= na {
                // Forward edge prev(A) -> node(B); bottleneck set by supply.
                if parent[prev] == usize::MAX {
                    bottleneck = bottleneck.min(ra[prev]);
                    break;
                }
            } else {
                // Backward edge prev(B) -> node(A) cancels existing flow.
                bottleneck = bottleneck.min(flow[node * nb + (prev - na)]);
            }
            node = prev;
        }
        let mut node = na + target;
        loop {
            let prev = parent[node];
            if node >= na {
                flow[prev * nb + (node - na)] += bottleneck;
                if parent[prev] == usize::MAX {
                    ra[prev] -= bottleneck;
                    break;
                }
            } else {
                flow[node * nb + (prev - na)] -= bottleneck;
            }
            node = prev;
        }
        rb[target] -= bottleneck;
        total_rem -= bottleneck;
    }

    let mut cost = 0.0;
    let mut flows = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            let f = flow[i * nb + j];
            if f > 0.0 {
                cost += f * cost_ab[i * nb + j] as f64;
                flows.push((i, j, f));
            }
        }
    }
    W1Solution {
        cost,
        flows,
        v_pot: pot[na..].to_vec(),
    }
}

/// Exact W1 between two probability vectors under the hop metric, with the
/// optimal coupling and a 1-Lipschitz dual potential.
pub fn wasserstein_1(mu: &[f64], nu: &[f64], metric: &MetricData) -> Result<(f64, TransportPlan)> {
    validate_distribution(mu)?;
    validate_distribution(nu)?;
    let (ai, am) = support(mu);
    let (bi, bm) = support(nu);
    let sol = solve_w1(&ai, &am, &bi, &bm, &|x, y| metric.dist(x, y));
    let n = mu.len();
    let mut phi = vec![0.0f64; n];
    for (x, slot) in phi.iter_mut().enumerate() {
        let mut best = f64::INFINITY;
        for (b, v) in bi.iter().zip(&sol.v_pot) {
            best = best.min(metric.dist(x, *b) as f64 - *v as f64);
        }
        *slot = best;
    }
    let pairs = sol
        .flows
        .iter()
        .map(|&(i, j, m)| (ai[i], bi[j], m))
        .collect();
    let cost = sol.cost;
    Ok((
        cost,
        TransportPlan {
            pairs,
            cost,
            dual_potentials: phi,
        },
    ))
}

/// W1 cost between sparse nonnegative mass lists of equal total (typically
/// kernel rows); no normalization check.
pub fn wasserstein_1_sparse(
    a: &[(usize, f64)],
    b: &[(usize, f64)],
    dist: impl Fn(usize, usize) -> u32,
) -> f64 {
    let (ai, am): (Vec<usize>, Vec<f64>) = a
        .iter()
        .filter(|(_, m)| *m > MASS_THRESHOLD)
        .map(|&(x, m)| (x, m))
        .unzip();
    let (bi, bm): (Vec<usize>, Vec<f64>) = b
        .iter()
        .filter(|(_, m)| *m > MASS_THRESHOLD)
        .map(|&(x, m)| (x, m))
        .unzip();
    solve_w1(&ai, &am, &bi, &bm, &dist).cost
}

/// TV distance as transport cost under the trivial metric; equals half the
/// l1 distance.
pub fn tv_via_transport(mu: &[f64], nu: &[f64]) -> Result<f64> {
    validate_distribution(mu)?;
    validate_distribution(nu)?;
    let (ai, am) = support(mu);
    let (bi, bm) = support(nu);
    let sol = solve_w1(&ai, &am, &bi, &bm, &|x, y| u32::from(x != y));
    Ok(sol.cost)
}

/// Smallest distance D such that a coupling supported on pairs within
/// distance D exists; binary search over the achievable distances with
/// max-flow feasibility at each candidate.
pub fn wasserstein_inf(mu: &[f64], nu: &[f64], metric: &MetricData) -> Result<f64> {
    validate_distribution(mu)?;
    validate_distribution(nu)?;
    let (ai, am) = support(mu);
    let (bi, bm) = support(nu);
    Ok(winf_core(&ai, &am, &bi, &bm, &|x, y| metric.dist(x, y)))
}

/// W-infinity between sparse mass lists; no normalization check.
pub fn wasserstein_inf_sparse(
    a: &[(usize, f64)],
    b: &[(usize, f64)],
    dist: impl Fn(usize, usize) -> u32,
) -> f64 {
    let (ai, am): (Vec<usize>, Vec<f64>) = a
        .iter()
        .filter(|(_, m)| *m > MASS_THRESHOLD)
        .map(|&(x, m)| (x, m))
        .unzip();
    let (bi, bm): (Vec<usize>, Vec<f64>) = b
        .iter()
        .filter(|(_, m)| *m > MASS_THRESHOLD)
        .map(|&(x, m)| (x, m))
        .unzip();
    winf_core(&ai, &am, &bi, &bm, &dist)
}

fn winf_core(
    ai: &[usize],
    am: &[f64],
    bi: &[usize],
    bm: &[f64],
    dist: &dyn Fn(usize, usize) -> u32,
) -> f64 {
    let mut levels: Vec<u32> = Vec::new();
    for &x in ai {
        for &y in bi {
            levels.push(dist(x, y));
        }
    }
    levels.sort_unstable();
    levels.dedup();
    let mut lo = 0usize;
    let mut hi = levels.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if coupling_feasible(ai, am, bi, bm, dist, levels[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    levels[lo] as f64
}

/// Max-flow feasibility of a coupling restricted to pairs within distance
/// `limit`: Edmonds-Karp on the bipartite network, saturation within 1e-12.
pub(crate) fn coupling_feasible(
    ai: &[usize],
    am: &[f64],
    bi: &[usize],
    bm: &[f64],
    dist: &dyn Fn(usize, usize) -> u32,
    limit: u32,
) -> bool {
    let na = ai.len();
    let nb = bi.len();
    let nodes = na + nb + 2;
    let source = na + nb;
    let sink = na + nb + 1;
    let need: f64 = am.iter().sum::<f64>().min(bm.iter().sum());
    let mut cap = vec![0.0f64; nodes * nodes];
    for i in 0..na {
        cap[source * nodes + i] = am[i];
        for j in 0..nb {
            if dist(ai[i], bi[j]) <= limit {
                cap[i * nodes + (na + j)] = 2.0;
            }
        }
    }
    for j in 0..nb {
        cap[(na + j) * nodes + sink] = bm[j];
    }
    let mut flow_total = 0.0;
    loop {
        // BFS augmenting path.
        let mut parent = vec![usize::MAX; nodes];
        parent[source] = source;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for v in 0..nodes {
                if parent[v] == usize::MAX && cap[u * nodes + v] > MASS_THRESHOLD {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u * nodes + v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            cap[u * nodes + v] -= bottleneck;
            cap[v * nodes + u] += bottleneck;
            v = u;
        }
        flow_total += bottleneck;
        if flow_total >= need - SATURATION_TOL {
            return true;
        }
    }
    flow_total >= need - SATURATION_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, lazify, Chain, TransitionMatrix};
    use crate::geometry::hop_metric;
    use rand::Rng;

    fn cycle_chain(n: usize) -> Chain {
        let mut triplets = Vec::new();
        for x in 0..n {
            triplets.push((x, (x + 1) % n, 0.5));
            triplets.push((x, (x + n - 1) % n, 0.5));
        }
        build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap()
    }

    fn dirac(n: usize, x: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[x] = 1.0;
        v
    }

    /// Brute-force Kantorovich dual: maximize mu.phi - nu.phi over integer
    /// 1-Lipschitz potentials with values in 0..=diam. Total unimodularity
    /// of the transportation polytope makes this exact for integer costs.
    fn dual_oracle(mu: &[f64], nu: &[f64], m: &MetricData) -> f64 {
        let n = mu.len();
        let diam = m.diameter() as usize;
        let mut best = f64::NEG_INFINITY;
        let mut phi = vec![0usize; n];
        'outer: loop {
            let lip_ok = (0..n).all(|x| {
                (0..n).all(|y| {
                    phi[x].abs_diff(phi[y]) <= m.dist(x, y) as usize
                })
            });
            if lip_ok {
                let val: f64 = (0..n).map(|x| (mu[x] - nu[x]) * phi[x] as f64).sum();
                best = best.max(val);
            }
            for slot in phi.iter_mut() {
                if *slot < diam {
                    *slot += 1;
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
        best
    }

    #[test]
    fn dirac_pair_costs_distance() {
        let chain = cycle_chain(8);
        let m = hop_metric(&chain).unwrap();
        let (w, plan) = wasserstein_1(&dirac(8, 0), &dirac(8, 3), &m).unwrap();
        assert_eq!(w, 3.0);
        assert_eq!(plan.pairs, vec![(0, 3, 1.0)]);
    }

    #[test]
    fn identical_distributions_cost_nothing() {
        let chain = cycle_chain(6);
        let m = hop_metric(&chain).unwrap();
        let mu = vec![0.25, 0.25, 0.1, 0.1, 0.15, 0.15];
        let (w, _) = wasserstein_1(&mu, &mu, &m).unwrap();
        assert!(w.abs() < 1e-13);
        assert!(wasserstein_inf(&mu, &mu, &m).unwrap() == 0.0);
    }

    #[test]
    fn cycle6_two_point_uniforms() {
        // Optimal plan 0->4 and 1->3 (cost 2+2 halves = 2.0); brute-force
        // enumeration over couplings of the 2x2 support confirms it.
        let chain = cycle_chain(6);
        let m = hop_metric(&chain).unwrap();
        let mut mu = vec![0.0; 6];
        mu[0] = 0.5;
        mu[1] = 0.5;
        let mut nu = vec![0.0; 6];
        nu[3] = 0.5;
        nu[4] = 0.5;
        let (w, _) = wasserstein_1(&mu, &nu, &m).unwrap();
        assert!((w - 2.0).abs() < 1e-12);
        let mut brute = f64::INFINITY;
        let steps = 1000;
        for k in 0..=steps {
            // Mass a on the (0,3)/(1,4) pairing, 0.5 - a on (0,4)/(1,3).
            let a = 0.5 * k as f64 / steps as f64;
            let cost = a * (3 + 3) as f64 + (0.5 - a) * (2 + 2) as f64;
            brute = brute.min(cost);
        }
        assert!((w - brute).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_inputs_are_rejected() {
        let chain = cycle_chain(4);
        let m = hop_metric(&chain).unwrap();
        let bad = vec![0.5, 0.2, 0.1, 0.1];
        assert!(matches!(
            wasserstein_1(&bad, &dirac(4, 0), &m),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            tv_via_transport(&dirac(4, 1), &bad),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn tv_equals_half_l1() {
        let mut rng = crate::rng::stream(11, 0);
        for _ in 0..40 {
            let n = 7;
            let mut mu: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut nu: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let ms: f64 = mu.iter().sum();
            let ns: f64 = nu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= ms);
            nu.iter_mut().for_each(|v| *v /= ns);
            let tv = tv_via_transport(&mu, &nu).unwrap();
            let half_l1: f64 = 0.5
                * mu.iter()
                    .zip(&nu)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            assert!((tv - half_l1).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_certificate_is_lipschitz_and_tight() {
        let chain = cycle_chain(7);
        let m = hop_metric(&chain).unwrap();
        let mut rng = crate::rng::stream(13, 0);
        for _ in 0..30 {
            let mut mu: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let mut nu: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let ms: f64 = mu.iter().sum();
            let ns: f64 = nu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= ms);
            nu.iter_mut().for_each(|v| *v /= ns);
            let (w, plan) = wasserstein_1(&mu, &nu, &m).unwrap();
            for x in 0..7 {
                for y in 0..7 {
                    assert!(
                        (plan.dual_potentials[x] - plan.dual_potentials[y]).abs()
                            <= m.dist(x, y) as f64 + 1e-12
                    );
                }
            }
            let dual: f64 = (0..7)
                .map(|x| (mu[x] - nu[x]) * plan.dual_potentials[x])
                .sum();
            assert!((dual - w).abs() < 1e-9, "gap {}", (dual - w).abs());
            // Marginals of the returned plan.
            let mut row = vec![0.0; 7];
            let mut col = vec![0.0; 7];
            for &(x, y, mass) in &plan.pairs {
                assert!(mass >= 0.0);
                row[x] += mass;
                col[y] += mass;
            }
            for x in 0..7 {
                assert!((row[x] - mu[x]).abs() < 1e-10);
                assert!((col[x] - nu[x]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solver_matches_integer_dual_enumeration() {
        let chain = cycle_chain(6);
        let m = hop_metric(&chain).unwrap();
        let mut rng = crate::rng::stream(17, 0);
        for _ in 0..12 {
            let mut mu: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let mut nu: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let ms: f64 = mu.iter().sum();
            let ns: f64 = nu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= ms);
            nu.iter_mut().for_each(|v| *v /= ns);
            let (w, _) = wasserstein_1(&mu, &nu, &m).unwrap();
            let oracle = dual_oracle(&mu, &nu, &m);
            assert!((w - oracle).abs() < 1e-10, "{w} vs {oracle}");
        }
    }

    #[test]
    fn winf_dominates_w1() {
        let chain = cycle_chain(9);
        let m = hop_metric(&chain).unwrap();
        let mut rng = crate::rng::stream(19, 0);
        for _ in 0..20 {
            let mut mu: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let mut nu: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let ms: f64 = mu.iter().sum();
            let ns: f64 = nu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= ms);
            nu.iter_mut().for_each(|v| *v /= ns);
            let (w1, _) = wasserstein_1(&mu, &nu, &m).unwrap();
            let winf = wasserstein_inf(&mu, &nu, &m).unwrap();
            assert!(w1 <= winf + 1e-10);
            let tv = tv_via_transport(&mu, &nu).unwrap();
            assert!(tv <= w1 + 1e-10);
        }
    }

    #[test]
    fn winf_on_dirac_pair() {
        let chain = cycle_chain(8);
        let m = hop_metric(&chain).unwrap();
        assert_eq!(wasserstein_inf(&dirac(8, 1), &dirac(8, 6), &m).unwrap(), 3.0);
    }

    #[test]
    fn winf_detects_infeasible_unit_step() {
        // Adjacent lazy rows can still force a two-hop move when one side
        // concentrates mass a neighborhood away.
        let t = TransitionMatrix::from_dense(&[
            vec![0.9, 0.1, 0.0],
            vec![0.05, 0.05, 0.9],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        let chain = build_chain(t).unwrap();
        let lazy = lazify(&chain);
        let m = hop_metric(&chain).unwrap();
        let row = |x: usize| -> Vec<(usize, f64)> {
            let (cols, vals) = lazy.t().row(x);
            cols.iter().map(|c| *c as usize).zip(vals.iter().copied()).collect()
        };
        let w = wasserstein_inf_sparse(&row(0), &row(1), |x, y| m.dist(x, y));
        assert_eq!(w, 2.0);
    }

    #[test]
    fn w1_metric_axioms_on_random_triples() {
        let chain = cycle_chain(7);
        let m = hop_metric(&chain).unwrap();
        let mut rng = crate::rng::stream(23, 0);
        let mut draw = || -> Vec<f64> {
            let mut v: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        for _ in 0..10 {
            let a = draw();
            let b = draw();
            let c = draw();
            let wab = wasserstein_1(&a, &b, &m).unwrap().0;
            let wba = wasserstein_1(&b, &a, &m).unwrap().0;
            let wac = wasserstein_1(&a, &c, &m).unwrap().0;
            let wcb = wasserstein_1(&c, &b, &m).unwrap().0;
            assert!((wab - wba).abs() < 1e-10);
            assert!(wab <= wac + wcb + 1e-10);
        }
    }
}
