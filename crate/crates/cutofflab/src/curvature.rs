//! Curvature of finite chains: coarse Ricci curvature from pairwise
//! transport between lazified kernel rows, sectional non-negativity
//! certificates via bounded-displacement couplings, the Bakry-Emery
//! constant from per-state quadratic-form eigenproblems, and analytic
//! coupling certificates for structured models (spin systems, group
//! walks, particle systems).

use crate::chain::{Chain, Direction, TransitionMatrix};
use crate::error::{Error, Result};
use crate::geometry::MetricData;
use crate::numeric::jacobi_min_eigenvalue;
use crate::transport::{coupling_feasible, wasserstein_1_sparse, MASS_THRESHOLD};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Curvature summary for one chain. `analytic_lower_bounds` carries
/// model-level certificates keyed by the constant they bound ("kappa1",
/// "alpha", "rho", "sectional"); a "sectional" entry of 0 records a
/// bounded-displacement coupling guarantee.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub kappa1: f64,
    pub kappa1_argmin_edge: (usize, usize),
    pub sectional_nonneg: bool,
    pub sectional_nonneg_adjoint: bool,
    pub rho: f64,
    pub rho_argmin_state: usize,
    pub analytic_lower_bounds: BTreeMap<String, f64>,
    pub d_sparsity: f64,
}

fn half_lazy_row(t: &TransitionMatrix, x: usize) -> Vec<(usize, f64)> {
    let (cols, vals) = t.row(x);
    let mut out = Vec::with_capacity(cols.len() + 1);
    let mut self_mass = 0.5;
    for (&c, &v) in cols.iter().zip(vals) {
        if c as usize == x {
            self_mass += 0.5 * v;
        } else {
            out.push((c as usize, 0.5 * v));
        }
    }
    out.push((x, self_mass));
    out
}

fn support_edges(metric: &MetricData) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for x in 0..metric.n() {
        for &y in metric.neighbors(x) {
            let y = y as usize;
            if x < y {
                edges.push((x, y));
            }
        }
    }
    edges
}

/// Worst-edge coarse Ricci curvature: kappa1 = 2(1 - max over support
/// edges of W1 between the half-lazy rows at the edge endpoints). The
/// returned edge attains the max (ties break to the lexicographically
/// smallest edge).
pub fn ollivier_kappa1(chain: &Chain, metric: &MetricData) -> Result<(f64, (usize, usize))> {
    let edges = support_edges(metric);
    if edges.is_empty() {
        return Ok((2.0, (0, 0)));
    }
    let (w_max, edge) = edges
        .par_iter()
        .map(|&(x, y)| {
            let a = half_lazy_row(chain.t(), x);
            let b = half_lazy_row(chain.t(), y);
            let w = wasserstein_1_sparse(&a, &b, |p, q| metric.dist(p, q));
            (w, (x, y))
        })
        .reduce(
            || (f64::NEG_INFINITY, (usize::MAX, usize::MAX)),
            |best, cand| {
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    cand
                } else {
                    best
                }
            },
        );
    Ok((2.0 * (1.0 - w_max), edge))
}

/// True iff every support edge admits a coupling of the half-lazy rows
/// that never moves mass further than distance 1; this certifies that
/// the sectional (infinity-type) curvature is >= 0 for the selected
/// kernel (forward or adjoint).
pub fn sectional_nonneg_certificate(
    chain: &Chain,
    metric: &MetricData,
    direction: Direction,
) -> bool {
    let t = match direction {
        Direction::Forward => chain.t(),
        Direction::Adjoint => chain.adjoint(),
    };
    let edges = support_edges(metric);
    edges.par_iter().all(|&(x, y)| {
        let (ai, am): (Vec<usize>, Vec<f64>) = half_lazy_row(t, x)
            .into_iter()
            .filter(|&(_, m)| m > MASS_THRESHOLD)
            .unzip();
        let (bi, bm): (Vec<usize>, Vec<f64>) = half_lazy_row(t, y)
            .into_iter()
            .filter(|&(_, m)| m > MASS_THRESHOLD)
            .unzip();
        coupling_feasible(&ai, &am, &bi, &bm, &|p, q| metric.dist(p, q), 1)
    })
}

/// Per-state pair of quadratic forms over the coordinates of the directed
/// 2-out-ball: `a` represents f -> Gamma f(x), `b` represents
/// f -> Gamma_2 f(x); both are row-major m x m symmetric matrices.
struct LocalForms {
    coords: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn out_ball_2(t: &TransitionMatrix, x: usize) -> Vec<usize> {
    let mut coords = vec![x];
    let (cols, _) = t.row(x);
    for &c in cols {
        coords.push(c as usize);
    }
    for &c in cols {
        let (cols2, _) = t.row(c as usize);
        for &c2 in cols2 {
            coords.push(c2 as usize);
        }
    }
    coords.sort_unstable();
    coords.dedup();
    coords
}

/// Gamma_2 f(x) evaluated from a scratch full-length vector; only entries
/// within the 2-out-ball of x are ever read.
fn gamma2_at(t: &TransitionMatrix, x: usize, f: &[f64]) -> f64 {
    let gamma_at = |z: usize| -> f64 {
        let (cols, vals) = t.row(z);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            let d = f[z] - f[c as usize];
            acc += v * d * d;
        }
        0.5 * acc
    };
    let l_at = |z: usize| -> f64 {
        let (cols, vals) = t.row(z);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * (f[c as usize] - f[z]);
        }
        acc
    };
    let gx = gamma_at(x);
    let lx = l_at(x);
    let (cols, vals) = t.row(x);
    let mut acc = 0.0;
    for (&c, &v) in cols.iter().zip(vals) {
        let y = c as usize;
        acc += v * (gamma_at(y) - gx);
        acc -= v * (f[x] - f[y]) * (lx - l_at(y));
    }
    0.5 * acc
}

fn assemble_local_forms(chain: &Chain, x: usize, scratch: &mut [f64]) -> LocalForms {
    let t = chain.t();
    let coords = out_ball_2(t, x);
    let m = coords.len();
    let pos = |state: usize| coords.binary_search(&state).unwrap();
    let mut a = vec![0.0; m * m];
    let (cols, vals) = t.row(x);
    let ix = pos(x);
    for (&c, &v) in cols.iter().zip(vals) {
        let iy = pos(c as usize);
        if iy == ix {
            continue;
        }
        // Gamma f(x) = 1/2 sum_y T(x,y)(f(x)-f(y))^2 as a sum of rank-one
        // terms on (e_x - e_y).
        let w = 0.5 * v;
        a[ix * m + ix] += w;
        a[iy * m + iy] += w;
        a[ix * m + iy] -= w;
        a[iy * m + ix] -= w;
    }
    let mut q = |v: &[(usize, f64)]| -> f64 {
        for &(i, val) in v {
            scratch[coords[i]] = val;
        }
        let out = gamma2_at(t, x, scratch);
        for &(i, _) in v {
            scratch[coords[i]] = 0.0;
        }
        out
    };
    let mut b = vec![0.0; m * m];
    let mut diag = vec![0.0; m];
    for i in 0..m {
        diag[i] = q(&[(i, 1.0)]);
        b[i * m + i] = diag[i];
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let plus = q(&[(i, 1.0), (j, 1.0)]);
            let minus = q(&[(i, 1.0), (j, -1.0)]);
            let bij = 0.25 * (plus - minus);
            b[i * m + j] = bij;
            b[j * m + i] = bij;
        }
    }
    LocalForms { coords, a, b }
}

const RHO_FEASIBILITY_FLOOR: f64 = -1e-12;
const FORMS_BUDGET: usize = 150_000_000;

fn min_eig_shifted(forms: &LocalForms, r: f64, scratch: &mut Vec<f64>) -> f64 {
    let m = forms.coords.len();
    scratch.clear();
    scratch.extend(forms.b.iter().zip(&forms.a).map(|(&b, &a)| b - r * a));
    jacobi_min_eigenvalue(scratch, m)
}

/// Largest r with Gamma_2 >= r Gamma as quadratic forms at every state,
/// by bisection against per-state minimum-eigenvalue oracles; also
/// returns the binding state just past the optimum.
pub fn bakry_emery_rho(chain: &Chain) -> Result<(f64, usize)> {
    let n = chain.n();
    let budget: usize = (0..n).map(|x| out_ball_2(chain.t(), x).len().pow(2)).sum();
    if 2 * budget > FORMS_BUDGET {
        return Err(Error::TooLarge {
            requested: 2 * budget,
            cap: FORMS_BUDGET,
        });
    }
    let forms: Vec<LocalForms> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut scratch = vec![0.0; n];
            assemble_local_forms(chain, x, &mut scratch)
        })
        .collect();
    let feasible = |r: f64| -> bool {
        forms
            .par_iter()
            .all(|lf| min_eig_shifted(lf, r, &mut Vec::new()) >= RHO_FEASIBILITY_FLOOR)
    };
    let mut lo = -8.0f64;
    let mut hi = 8.0f64;
    while feasible(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 512.0 {
            return Err(Error::BracketExhausted { lo, hi });
        }
    }
    while !feasible(lo) {
        hi = lo;
        lo *= 2.0;
        if lo < -512.0 {
            return Err(Error::BracketExhausted { lo, hi });
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = lo;
    let mut argmin = 0usize;
    let mut worst = f64::INFINITY;
    let mut scratch = Vec::new();
    for (x, lf) in forms.iter().enumerate() {
        let e = min_eig_shifted(lf, rho + 1e-6, &mut scratch);
        if e < worst {
            worst = e;
            argmin = x;
        }
    }
    Ok((rho, argmin))
}

/// Full curvature summary. `analytic` carries model-level certificate
/// bounds to embed in the report.
pub fn curvature_report(
    chain: &Chain,
    metric: &MetricData,
    analytic: BTreeMap<String, f64>,
) -> Result<CurvatureReport> {
    let (kappa1, edge) = ollivier_kappa1(chain, metric)?;
    let sectional_nonneg = sectional_nonneg_certificate(chain, metric, Direction::Forward);
    let sectional_nonneg_adjoint = if chain.reversible() {
        sectional_nonneg
    } else {
        sectional_nonneg_certificate(chain, metric, Direction::Adjoint)
    };
    let (rho, rho_argmin_state) = bakry_emery_rho(chain)?;
    Ok(CurvatureReport {
        kappa1,
        kappa1_argmin_edge: edge,
        sectional_nonneg,
        sectional_nonneg_adjoint,
        rho,
        rho_argmin_state,
        analytic_lower_bounds: analytic,
        d_sparsity: metric.d_sparsity(),
    })
}

/// Single-site heat-bath dynamics in raw (unnormalized) rates. `flip`
/// maps (state, site) to the flipped state's index, `u32::MAX` where the
/// flip leaves the support; such pairs carry rate 0. The chain kernel is
/// rates / normalization with the complement as holding probability.
#[derive(Debug, Clone)]
pub struct GlauberData {
    pub sites: usize,
    pub states: usize,
    pub flip: Vec<u32>,
    pub rates: Vec<f64>,
    pub normalization: f64,
    pub sqrt_rule: bool,
}

/// Certified curvature bounds from the one-site coupling argument, in
/// chain time units.
#[derive(Debug, Clone, Copy)]
pub struct DeltaBoundReport {
    pub min_delta: f64,
    pub kappa1: f64,
    pub alpha: f64,
    pub rho: Option<f64>,
}

/// delta_i(x) = c_i(x) - sum_{j != i} (c_j(x^i) - c_j(x))_+ over pairs
/// whose flip stays in the support. All deltas nonnegative certifies a
/// distance-nonincreasing coupling; the certified rate is the minimum of
/// delta_i(x) + delta_i(x^i).
pub fn glauber_delta_bound(data: &GlauberData) -> Result<DeltaBoundReport> {
    let sites = data.sites;
    let mut delta = vec![f64::NAN; data.states * sites];
    let mut min_delta = f64::INFINITY;
    for x in 0..data.states {
        for i in 0..sites {
            let xi = data.flip[x * sites + i];
            if xi == u32::MAX {
                continue;
            }
            let xi = xi as usize;
            let mut influence = 0.0;
            for j in 0..sites {
                if j == i {
                    continue;
                }
                influence += (data.rates[xi * sites + j] - data.rates[x * sites + j]).max(0.0);
            }
            let d = data.rates[x * sites + i] - influence;
            if d < -1e-12 {
                return Err(Error::NegativeDelta {
                    state: x,
                    site: i,
                    delta: d,
                });
            }
            let d = d.max(0.0);
            delta[x * sites + i] = d;
            min_delta = min_delta.min(d);
        }
    }
    let mut min_pair = f64::INFINITY;
    for x in 0..data.states {
        for i in 0..sites {
            let xi = data.flip[x * sites + i];
            if xi == u32::MAX {
                continue;
            }
            min_pair = min_pair.min(delta[x * sites + i] + delta[xi as usize * sites + i]);
        }
    }
    if !min_pair.is_finite() || !min_delta.is_finite() {
        return Err(Error::InvalidParameters {
            message: "dynamics has no feasible single-site move".to_string(),
        });
    }
    let c = data.normalization;
    let kappa1 = min_pair / c;
    Ok(DeltaBoundReport {
        min_delta,
        kappa1,
        alpha: kappa1,
        rho: data.sqrt_rule.then_some((min_delta + 0.5 * min_pair) / c),
    })
}

/// Random walk on a finite group: `mul` is the row-major multiplication
/// table g*h, `step_law` the increment distribution.
#[derive(Debug, Clone)]
pub struct GroupWalkData {
    pub order: usize,
    pub mul: Vec<u32>,
    pub step_law: Vec<f64>,
}

fn validate_group(data: &GroupWalkData) -> Result<(usize, Vec<usize>)> {
    let o = data.order;
    let fail = |reason: &str| Error::NotAGroupWalk {
        reason: reason.to_string(),
    };
    if o == 0 || data.mul.len() != o * o || data.step_law.len() != o {
        return Err(fail("multiplication table or step law has the wrong size"));
    }
    if data.mul.iter().any(|&v| v as usize >= o) {
        return Err(fail("multiplication table entry out of range"));
    }
    let mul = |a: usize, b: usize| data.mul[a * o + b] as usize;
    let mut identity = None;
    for e in 0..o {
        if (0..o).all(|g| mul(e, g) == g && mul(g, e) == g) {
            identity = Some(e);
            break;
        }
    }
    let e = identity.ok_or_else(|| fail("no identity element"))?;
    let mut inv = vec![usize::MAX; o];
    for g in 0..o {
        for h in 0..o {
            if mul(g, h) == e && mul(h, g) == e {
                inv[g] = h;
                break;
            }
        }
        if inv[g] == usize::MAX {
            return Err(fail("an element has no two-sided inverse"));
        }
    }
    for a in 0..o {
        for b in 0..o {
            for c in 0..o {
                if mul(mul(a, b), c) != mul(a, mul(b, c)) {
                    return Err(fail("multiplication is not associative"));
                }
            }
        }
    }
    let total: f64 = data.step_law.iter().sum();
    if data.step_law.iter().any(|&v| !v.is_finite() || v < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(fail("step law is not a probability vector"));
    }
    Ok((e, inv))
}

/// Structural certificates for a group walk, keyed like
/// `CurvatureReport::analytic_lower_bounds`. Commuting supports give the
/// sectional certificate; a fully commuting step law gives rho >= 0; a
/// self-inverse support upgrades both rho and kappa1 to twice the
/// smallest step probability.
pub fn group_walk_certificates(data: &GroupWalkData) -> Result<BTreeMap<String, f64>> {
    let (_, inv) = validate_group(data)?;
    let o = data.order;
    let mul = |a: usize, b: usize| data.mul[a * o + b] as usize;
    let nu = &data.step_law;
    let mut support_commutes = true;
    let mut law_commutes = true;
    for x in 0..o {
        for y in 0..o {
            let fwd = nu[mul(x, y)];
            let bwd = nu[mul(y, x)];
            if (fwd > 0.0) != (bwd > 0.0) {
                support_commutes = false;
            }
            if (fwd - bwd).abs() > 1e-12 {
                law_commutes = false;
            }
        }
    }
    let mut out = BTreeMap::new();
    if support_commutes {
        out.insert("sectional".to_string(), 0.0);
    }
    if law_commutes {
        out.insert("rho".to_string(), 0.0);
        let support: Vec<usize> = (0..o).filter(|&s| nu[s] > 0.0).collect();
        if !support.is_empty() && support.iter().all(|&s| inv[s] == s) {
            let nu_star = support.iter().map(|&s| nu[s]).fold(f64::INFINITY, f64::min);
            out.insert("rho".to_string(), 2.0 * nu_star);
            out.insert("kappa1".to_string(), 2.0 * nu_star);
        }
    }
    Ok(out)
}

/// Certificates for mean-field particle exchange with per-site jump rates
/// whose increments are all at least `min_increment`; bounds are in chain
/// time units for a kernel normalized by `normalization`.
pub fn zero_range_certificates(
    min_increment: f64,
    sites: usize,
    normalization: f64,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if min_increment >= 0.0 && sites > 0 && normalization > 0.0 {
        out.insert("sectional".to_string(), 0.0);
        out.insert(
            "kappa1".to_string(),
            min_increment / (sites as f64 * normalization),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, evolve_density, semigroup_apply, carre_du_champ, Density};
    use crate::functionals::{poincare_constant, spectral_gap};
    use crate::geometry::{hop_metric, lipschitz_seminorm};
    use rand::Rng;

    fn cycle_chain(n: usize) -> Chain {
        let mut triplets = Vec::new();
        for x in 0..n {
            triplets.push((x, (x + 1) % n, 0.5));
            triplets.push((x, (x + n - 1) % n, 0.5));
        }
        build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap()
    }

    fn cube_chain(sites: usize) -> Chain {
        let n = 1usize << sites;
        let mut triplets = Vec::new();
        for x in 0..n {
            for i in 0..sites {
                triplets.push((x, x ^ (1 << i), 1.0 / sites as f64));
            }
        }
        build_chain(TransitionMatrix::from_triplets(n, &triplets).unwrap()).unwrap()
    }

    fn rank_one_chain(pi: &[f64]) -> Chain {
        let rows: Vec<Vec<f64>> = (0..pi.len()).map(|_| pi.to_vec()).collect();
        build_chain(TransitionMatrix::from_dense(&rows).unwrap()).unwrap()
    }

    /// Exhaustive integer dual enumeration of W1 on a small metric space:
    /// maximize sum (mu - nu) phi over 1-Lipschitz integer potentials.
    fn w1_dual_oracle(mu: &[f64], nu: &[f64], metric: &MetricData) -> f64 {
        let n = metric.n();
        let diam = metric.diameter() as i64;
        let mut best = 0.0f64;
        let levels = (diam + 1) as usize;
        let total = levels.pow(n as u32);
        for code in 0..total {
            let mut phi = vec![0i64; n];
            let mut c = code;
            for slot in phi.iter_mut() {
                *slot = (c % levels) as i64;
                c /= levels;
            }
            let lip_ok = (0..n).all(|x| {
                (0..n).all(|y| (phi[x] - phi[y]).abs() <= metric.dist(x, y) as i64)
            });
            if !lip_ok {
                continue;
            }
            let value: f64 = (0..n).map(|x| (mu[x] - nu[x]) * phi[x] as f64).sum();
            best = best.max(value);
        }
        best
    }

    #[test]
    fn cube_kappa1_is_two_over_sites() {
        let chain = cube_chain(4);
        let metric = hop_metric(&chain).unwrap();
        let (kappa, edge) = ollivier_kappa1(&chain, &metric).unwrap();
        assert!((kappa - 0.5).abs() < 1e-12, "{kappa}");
        assert_eq!(metric.dist(edge.0, edge.1), 1);
    }

    #[test]
    fn rank_one_kappa1_is_one() {
        let chain = rank_one_chain(&[0.1, 0.18, 0.18, 0.18, 0.18, 0.18]);
        let metric = hop_metric(&chain).unwrap();
        let (kappa, _) = ollivier_kappa1(&chain, &metric).unwrap();
        assert!((kappa - 1.0).abs() < 1e-12, "{kappa}");
    }

    #[test]
    fn cycle_kappa1_is_zero_and_matches_dual_enumeration() {
        let chain = cycle_chain(6);
        let metric = hop_metric(&chain).unwrap();
        let (kappa, edge) = ollivier_kappa1(&chain, &metric).unwrap();
        let mut mu = vec![0.0; 6];
        let mut nu = vec![0.0; 6];
        for (s, m) in half_lazy_row(chain.t(), edge.0) {
            mu[s] = m;
        }
        for (s, m) in half_lazy_row(chain.t(), edge.1) {
            nu[s] = m;
        }
        let w_oracle = w1_dual_oracle(&mu, &nu, &metric).max(w1_dual_oracle(&nu, &mu, &metric));
        assert!((kappa - 2.0 * (1.0 - w_oracle)).abs() < 1e-12);
        assert!(kappa.abs() < 1e-12, "{kappa}");
    }

    #[test]
    fn sectional_certificates_on_nonnegative_models() {
        for chain in [cube_chain(3), cycle_chain(6), rank_one_chain(&[0.2, 0.3, 0.5])] {
            let metric = hop_metric(&chain).unwrap();
            assert!(sectional_nonneg_certificate(&chain, &metric, Direction::Forward));
            assert!(sectional_nonneg_certificate(&chain, &metric, Direction::Adjoint));
        }
    }

    #[test]
    fn sectional_certificate_detects_forced_long_moves() {
        let t = TransitionMatrix::from_dense(&[
            vec![0.9, 0.1, 0.0],
            vec![0.05, 0.05, 0.9],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap();
        let chain = build_chain(t).unwrap();
        let metric = hop_metric(&chain).unwrap();
        assert!(!sectional_nonneg_certificate(&chain, &metric, Direction::Forward));
    }

    #[test]
    fn cube_rho_is_two_over_sites() {
        let (rho, _) = bakry_emery_rho(&cube_chain(4)).unwrap();
        assert!((rho - 0.5).abs() < 1e-6, "{rho}");
    }

    #[test]
    fn rank_one_rho_closed_form() {
        // For T(x,y) = pi(y) and f with mean 0 and variance 1 one checks
        // Gamma f = (1 + f^2)/2 and Gamma_2 f = (3 + f^2)/4 pointwise, so
        // the optimal ratio is (3 + u)/(2 + 2u) at u = max f(x)^2. The
        // standardized indicator of the lightest state attains the largest
        // value u = (1 - pi_min)/pi_min, giving rho = 1/2 + pi_min.
        let pi = [0.1, 0.18, 0.18, 0.18, 0.18, 0.18];
        let chain = rank_one_chain(&pi);
        let a = ((1.0 - pi[0]) / pi[0]).sqrt();
        let b = -a * pi[0] / (1.0 - pi[0]);
        let f: Vec<f64> = (0..6).map(|x| if x == 0 { a } else { b }).collect();
        assert!(chain.expectation(&f).abs() < 1e-12);
        assert!((chain.inner(&f, &f) - 1.0).abs() < 1e-12);
        let gamma = crate::chain::carre_du_champ(&chain, &f);
        let gamma2 = crate::chain::carre_du_champ_2(&chain, &f);
        for x in 0..6 {
            assert!((gamma[x] - 0.5 * (1.0 + f[x] * f[x])).abs() < 1e-12);
            assert!((gamma2[x] - 0.25 * (3.0 + f[x] * f[x])).abs() < 1e-12);
        }
        // The witness caps rho at gamma2/gamma evaluated at the lightest
        // state; the search must attain that cap.
        let cap = gamma2[0] / gamma[0];
        assert!((cap - (0.5 + pi[0])).abs() < 1e-12);
        let (rho, argmin) = bakry_emery_rho(&chain).unwrap();
        assert!((rho - cap).abs() < 1e-6, "{rho}");
        assert_eq!(argmin, 0);
    }

    #[test]
    fn cycle_rho_between_zero_and_gap() {
        let chain = cycle_chain(6);
        let (rho, _) = bakry_emery_rho(&chain).unwrap();
        let gamma = poincare_constant(&chain).unwrap();
        assert!(rho >= -1e-9, "{rho}");
        assert!(rho <= gamma + 1e-9, "{rho} vs {gamma}");
    }

    #[test]
    fn reported_rho_is_tight_at_its_tolerance() {
        let chain = cube_chain(3);
        let (rho, argmin) = bakry_emery_rho(&chain).unwrap();
        let n = chain.n();
        let mut scratch = vec![0.0; n];
        let forms: Vec<LocalForms> = (0..n)
            .map(|x| assemble_local_forms(&chain, x, &mut scratch))
            .collect();
        let mut buf = Vec::new();
        let at = |r: f64, buf: &mut Vec<f64>| {
            forms
                .iter()
                .map(|lf| min_eig_shifted(lf, r, buf))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(at(rho, &mut buf) >= -1e-9);
        assert!(at(rho + 1e-6, &mut buf) < -1e-9);
        let e = min_eig_shifted(&forms[argmin], rho + 1e-6, &mut buf);
        assert!(e < -1e-9);
    }

    #[test]
    fn lichnerowicz_pair_on_small_models() {
        for chain in [cube_chain(3), cycle_chain(6), rank_one_chain(&[0.1, 0.4, 0.5])] {
            let metric = hop_metric(&chain).unwrap();
            let (kappa, _) = ollivier_kappa1(&chain, &metric).unwrap();
            let (rho, _) = bakry_emery_rho(&chain).unwrap();
            let lambda = spectral_gap(&chain).unwrap().gap;
            let gamma = poincare_constant(&chain).unwrap();
            assert!(lambda >= kappa - 1e-9, "{lambda} vs {kappa}");
            assert!(gamma >= rho - 1e-9, "{gamma} vs {rho}");
            assert!(kappa * metric.diameter() as f64 <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn lipschitz_and_wasserstein_decay_at_kappa1_rate() {
        let chain = cube_chain(3);
        let metric = hop_metric(&chain).unwrap();
        let (kappa, _) = ollivier_kappa1(&chain, &metric).unwrap();
        let mut rng = crate::rng::stream(21, 0);
        for _ in 0..5 {
            let f: Vec<f64> = (0..chain.n()).map(|_| rng.random::<f64>()).collect();
            let lip0 = lipschitz_seminorm(&metric, &f);
            for t in [0.3, 1.0, 3.0] {
                let ft = semigroup_apply(&chain, &f, t, Direction::Forward).unwrap();
                let lip_t = lipschitz_seminorm(&metric, &ft);
                assert!(lip_t <= (-kappa * t).exp() * lip0 + 1e-10);
            }
            let x = rng.random_range(0..chain.n());
            let y = rng.random_range(0..chain.n());
            let mu = Density::dirac(&chain, x);
            let nu = Density::dirac(&chain, y);
            let w0 = metric.dist(x, y) as f64;
            for t in [0.5, 2.0] {
                let mu_t = evolve_density(&chain, &mu, t).unwrap().to_measure(&chain);
                let nu_t = evolve_density(&chain, &nu, t).unwrap().to_measure(&chain);
                let (w, _) = crate::transport::wasserstein_1(&mu_t, &nu_t, &metric).unwrap();
                assert!(w <= (-kappa * t).exp() * w0 + 1e-9);
            }
        }
    }

    #[test]
    fn subcommutation_at_rho_rate() {
        let chain = cube_chain(3);
        let (rho, _) = bakry_emery_rho(&chain).unwrap();
        let mut rng = crate::rng::stream(22, 0);
        for _ in 0..5 {
            let f: Vec<f64> = (0..chain.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            for t in [0.2, 1.0, 2.5] {
                let ft = semigroup_apply(&chain, &f, t, Direction::Forward).unwrap();
                let lhs = carre_du_champ(&chain, &ft);
                let gamma_f = carre_du_champ(&chain, &f);
                let rhs = semigroup_apply(&chain, &gamma_f, t, Direction::Forward).unwrap();
                for x in 0..chain.n() {
                    assert!(lhs[x] <= (-2.0 * rho * t).exp() * rhs[x] + 1e-9);
                }
            }
        }
    }

    fn independent_spin_data(sites: usize) -> GlauberData {
        let states = 1usize << sites;
        GlauberData {
            sites,
            states,
            flip: (0..states * sites)
                .map(|k| {
                    let (x, i) = (k / sites, k % sites);
                    (x ^ (1 << i)) as u32
                })
                .collect(),
            rates: vec![0.5; states * sites],
            normalization: sites as f64 * 0.5,
            sqrt_rule: false,
        }
    }

    #[test]
    fn independent_spins_delta_bound_matches_cube() {
        for sites in [2, 3, 4] {
            let data = independent_spin_data(sites);
            let report = glauber_delta_bound(&data).unwrap();
            assert!((report.min_delta - 0.5).abs() < 1e-15);
            assert!((report.kappa1 - 2.0 / sites as f64).abs() < 1e-12);
            assert_eq!(report.rho, None);
        }
    }

    #[test]
    fn strongly_coupled_rates_void_the_certificate() {
        let sites = 2;
        let states = 4;
        let mut data = independent_spin_data(sites);
        for x in 0..states {
            let bit = |i: usize| (x >> i) & 1;
            data.rates[x * sites] = 0.1 + 0.8 * bit(1) as f64;
            data.rates[x * sites + 1] = 0.1 + 0.8 * bit(0) as f64;
        }
        assert!(matches!(
            glauber_delta_bound(&data),
            Err(Error::NegativeDelta { .. })
        ));
    }

    fn cyclic_group(n: usize) -> Vec<u32> {
        let mut mul = vec![0u32; n * n];
        for a in 0..n {
            for b in 0..n {
                mul[a * n + b] = ((a + b) % n) as u32;
            }
        }
        mul
    }

    fn xor_group(bits: usize) -> Vec<u32> {
        let n = 1usize << bits;
        let mut mul = vec![0u32; n * n];
        for a in 0..n {
            for b in 0..n {
                mul[a * n + b] = (a ^ b) as u32;
            }
        }
        mul
    }

    #[test]
    fn self_inverse_generators_certify_rates() {
        let data = GroupWalkData {
            order: 4,
            mul: xor_group(2),
            step_law: vec![0.0, 0.5, 0.5, 0.0],
        };
        let certs = group_walk_certificates(&data).unwrap();
        assert_eq!(certs.get("sectional"), Some(&0.0));
        assert_eq!(certs.get("rho"), Some(&1.0));
        assert_eq!(certs.get("kappa1"), Some(&1.0));
    }

    #[test]
    fn cyclic_steps_only_certify_nonnegativity() {
        let data = GroupWalkData {
            order: 6,
            mul: cyclic_group(6),
            step_law: vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.5],
        };
        let certs = group_walk_certificates(&data).unwrap();
        assert_eq!(certs.get("sectional"), Some(&0.0));
        assert_eq!(certs.get("rho"), Some(&0.0));
        assert_eq!(certs.get("kappa1"), None);
    }

    #[test]
    fn broken_tables_are_rejected() {
        let mut mul = cyclic_group(4);
        mul[5] = 3;
        let data = GroupWalkData {
            order: 4,
            mul,
            step_law: vec![0.25; 4],
        };
        assert!(matches!(
            group_walk_certificates(&data),
            Err(Error::NotAGroupWalk { .. })
        ));
    }

    #[test]
    fn zero_range_certificate_units() {
        let certs = zero_range_certificates(1.0, 3, 4.0 / 3.0);
        assert!((certs["kappa1"] - 0.25).abs() < 1e-15);
        assert_eq!(certs["sectional"], 0.0);
        assert!(zero_range_certificates(-0.5, 3, 1.0).is_empty());
    }

    #[test]
    fn report_collects_everything() {
        let chain = cube_chain(3);
        let metric = hop_metric(&chain).unwrap();
        let mut analytic = BTreeMap::new();
        analytic.insert("kappa1".to_string(), 2.0 / 3.0);
        let report = curvature_report(&chain, &metric, analytic).unwrap();
        assert!((report.kappa1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(report.sectional_nonneg && report.sectional_nonneg_adjoint);
        assert!((report.rho - 2.0 / 3.0).abs() < 1e-6);
        assert_eq!(report.d_sparsity, 3.0);
        assert!(report.kappa1 <= report.analytic_lower_bounds["kappa1"] + 1e-9);
    }
}
