//! Statistical functionals of densities, spectral constants, mixing times,
//! witness-based Sobolev estimates with certificate-backed lower bounds,
//! and sub-Gaussian concentration checks.

use crate::chain::{self, dirichlet_form, evolve_density, Chain, Density, Observable};
use crate::curvature::CurvatureReport;
use crate::error::{Error, Result};
use crate::geometry::{hop_metric, lipschitz_seminorm};
use crate::numeric::{xlogx, KahanSum};
use rand::Rng;
use rayon::prelude::*;

/// Entropy, variance, varentropy and TV distance of a density against the
/// stationary law.
#[derive(Debug, Clone, Copy)]
pub struct EntropyStats {
    pub entropy: f64,
    pub variance: f64,
    pub varentropy: f64,
    pub tv_to_equilibrium: f64,
}

/// All moments in one pass; 0 log 0 = 0 throughout, so Dirac-like densities
/// are handled without clipping.
pub fn stats(chain: &Chain, f: &Density) -> EntropyStats {
    let mut ent = KahanSum::default();
    let mut second = KahanSum::default();
    let mut log2_moment = KahanSum::default();
    let mut l1 = KahanSum::default();
    for (&p, &v) in chain.pi().iter().zip(f.values()) {
        ent.add(p * xlogx(v));
        second.add(p * v * v);
        if v > 0.0 {
            let lv = v.ln();
            log2_moment.add(p * v * lv * lv);
        }
        l1.add(p * (v - 1.0).abs());
    }
    let entropy = ent.value().max(0.0);
    EntropyStats {
        entropy,
        variance: (second.value() - 1.0).max(0.0),
        varentropy: (log2_moment.value() - entropy * entropy).max(0.0),
        tv_to_equilibrium: (0.5 * l1.value()).clamp(0.0, 1.0),
    }
}

/// Spectrum of the transition matrix (as (re, im) pairs, sorted by
/// decreasing real part) together with the gap 1 - max Re over the
/// nontrivial spectrum.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<(f64, f64)>,
    pub gap: f64,
}

/// Symmetric eigenvalues of D^{1/2} M D^{-1/2} for a kernel M reversible
/// w.r.t. pi, sorted decreasing.
fn weighted_symmetric_eigenvalues(pi: &[f64], m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = pi.len();
    let mut s = m.clone();
    for x in 0..n {
        for y in 0..n {
            s[(x, y)] *= (pi[x] / pi[y]).sqrt();
        }
    }
    let sym = (&s + s.transpose()) * 0.5;
    let mut eigs: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eigs
}

fn check_unit_eigenvalue(top: f64) -> Result<()> {
    if (top - 1.0).abs() > 1e-8 {
        return Err(Error::Numeric {
            message: format!("leading eigenvalue {top} is not 1"),
        });
    }
    Ok(())
}

/// Spectral gap: symmetric eigendecomposition in the pi-weighted space when
/// reversible, real Schur form otherwise.
pub fn spectral_gap(chain: &Chain) -> Result<SpectralData> {
    let n = chain.n();
    if n > chain.dense_cap() {
        return Err(Error::TooLargeForDense {
            n,
            cap: chain.dense_cap(),
        });
    }
    if chain.reversible() {
        let eigs = weighted_symmetric_eigenvalues(chain.pi(), &chain.t().to_dense());
        check_unit_eigenvalue(eigs[0])?;
        let gap = if n > 1 { 1.0 - eigs[1] } else { 1.0 };
        return Ok(SpectralData {
            eigenvalues: eigs.into_iter().map(|v| (v, 0.0)).collect(),
            gap,
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(chain.t().to_dense(), 1e-12, 1_000_000).ok_or(
        Error::NotConverged {
            what: "Schur iteration for the spectrum".to_string(),
        },
    )?;
    let mut eigs: Vec<(f64, f64)> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let trivial = (0..eigs.len())
        .min_by(|&i, &j| {
            let di = (eigs[i].0 - 1.0).hypot(eigs[i].1);
            let dj = (eigs[j].0 - 1.0).hypot(eigs[j].1);
            di.partial_cmp(&dj).unwrap()
        })
        .unwrap();
    check_unit_eigenvalue(eigs[trivial].0)?;
    let gap = eigs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != trivial)
        .map(|(_, &(re, _))| 1.0 - re)
        .fold(1.0, f64::min);
    Ok(SpectralData { eigenvalues: eigs, gap })
}

/// Poincare constant: spectral gap of the additive symmetrization
/// (T + T*)/2, which is always reversible w.r.t. pi.
pub fn poincare_constant(chain: &Chain) -> Result<f64> {
    let n = chain.n();
    if n > chain.dense_cap() {
        return Err(Error::TooLargeForDense {
            n,
            cap: chain.dense_cap(),
        });
    }
    let m = (chain.t().to_dense() + chain.adjoint().to_dense()) * 0.5;
    let eigs = weighted_symmetric_eigenvalues(chain.pi(), &m);
    check_unit_eigenvalue(eigs[0])?;
    Ok(if n > 1 { 1.0 - eigs[1] } else { 1.0 })
}

/// Centered Dirac density g = f^x - 1. The semigroup fixes constants, so
/// evolving g tracks f_t - 1 exactly and keeps precision when f_t - 1 is
/// far below machine epsilon relative to 1.
pub(crate) fn centered_dirac(chain: &Chain, x: usize) -> Vec<f64> {
    let mut g = vec![-1.0; chain.n()];
    g[x] = 1.0 / chain.pi()[x] - 1.0;
    g
}

/// Evolves the centered vector of every Dirac start to time t and reduces
/// the per-start statistics columnwise by max.
pub(crate) fn worst_case_columns<const K: usize>(
    chain: &Chain,
    t: f64,
    eval: impl Fn(&[f64]) -> [f64; K] + Sync,
) -> Result<[f64; K]> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::NegativeTime { t });
    }
    let weights = chain::poisson_weights(t)?;
    let columns = (0..chain.n())
        .into_par_iter()
        .map(|x| {
            let g = chain::apply_with_weights(chain.adjoint(), &centered_dirac(chain, x), &weights);
            eval(&g)
        })
        .reduce(
            || [f64::NEG_INFINITY; K],
            |mut a, b| {
                for k in 0..K {
                    a[k] = a[k].max(b[k]);
                }
                a
            },
        );
    Ok(columns)
}

/// Worst-case TV distance to equilibrium at time t over all Dirac starts.
pub fn worst_case_tv(chain: &Chain, t: f64) -> Result<f64> {
    let pi = chain.pi();
    let [tv] = worst_case_columns(chain, t, |g| {
        let mut acc = KahanSum::default();
        for (&p, &v) in pi.iter().zip(g) {
            acc.add(p * v.abs());
        }
        [0.5 * acc.value()]
    })?;
    Ok(tv.clamp(0.0, 1.0))
}

/// Worst-case L2 distance d_2(t) over all Dirac starts.
pub fn worst_case_l2(chain: &Chain, t: f64) -> Result<f64> {
    let pi = chain.pi();
    let [l2] = worst_case_columns(chain, t, |g| {
        let mut acc = KahanSum::default();
        for (&p, &v) in pi.iter().zip(g) {
            acc.add(p * v * v);
        }
        [acc.value().max(0.0).sqrt()]
    })?;
    Ok(l2)
}

/// Start selector for TV-based quantities.
#[derive(Clone, Copy)]
pub enum TvFrom<'a> {
    Worst,
    Start(&'a Density),
}

fn tv_at(chain: &Chain, from: TvFrom<'_>, t: f64) -> Result<f64> {
    match from {
        TvFrom::Worst => worst_case_tv(chain, t),
        TvFrom::Start(f0) => {
            let ft = evolve_density(chain, f0, t)?;
            Ok(stats(chain, &ft).tv_to_equilibrium)
        }
    }
}

/// First time the TV distance drops to epsilon: bracket by doubling from
/// t = 1, then bisect the nonincreasing map t -> d(t).
pub fn mixing_time(chain: &Chain, epsilon: f64, from: TvFrom<'_>) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::EpsilonOutOfRange { eps: epsilon });
    }
    if tv_at(chain, from, 0.0)? <= epsilon {
        return Ok(0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while tv_at(chain, from, hi)? > epsilon {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NotConverged {
                what: format!("mixing-time bracket for epsilon {epsilon}"),
            });
        }
    }
    let tol = 1e-8 * hi.max(1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if tv_at(chain, from, mid)? > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Width of the mixing window, t_mix(eps) - t_mix(1 - eps), worst case.
pub fn mixing_window(chain: &Chain, epsilon: f64) -> Result<f64> {
    let hi = mixing_time(chain, epsilon, TvFrom::Worst)?;
    let lo = mixing_time(chain, 1.0 - epsilon, TvFrom::Worst)?;
    Ok(hi - lo)
}

/// Which Sobolev-type ratio to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolevKind {
    /// E(f, log f) / Ent(f): the modified log-Sobolev ratio.
    Mlsi,
    /// E(sqrt f, sqrt f) / Ent(f): the log-Sobolev ratio.
    Lsi,
}

/// Two-sided report for a functional constant. `upper` always comes from an
/// explicit witness density; `lower` is filled by a certificate when one is
/// available (0 otherwise, which is trivially valid).
#[derive(Debug, Clone)]
pub struct ConstantBracket {
    pub exact: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub witness: Density,
    pub residual: f64,
    pub converged: bool,
}

struct RatioEval {
    value: f64,
    grad: Vec<f64>,
    grad_norm2: f64,
}

/// Ratio and pi-weighted gradient at log-coordinates g (f = e^g / Z).
/// Returns None when the denominator Ent(f) vanishes (f constant).
fn eval_ratio(chain: &Chain, kind: SobolevKind, g: &[f64], want_grad: bool) -> Option<RatioEval> {
    let n = chain.n();
    let pi = chain.pi();
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut f = vec![0.0; n];
    let mut z = KahanSum::default();
    for x in 0..n {
        f[x] = (g[x] - gmax).exp();
        z.add(pi[x] * f[x]);
    }
    let z = z.value();
    for v in f.iter_mut() {
        *v /= z;
    }
    // log f is affine in g, so generator applications may use either.
    let logf: Vec<f64> = f.iter().map(|&v| v.max(1e-300).ln()).collect();
    let mut ent = KahanSum::default();
    for x in 0..n {
        ent.add(pi[x] * f[x] * logf[x]);
    }
    let ent = ent.value();
    if ent <= 0.0 {
        return None;
    }
    let (num, grad_num): (f64, Vec<f64>) = match kind {
        SobolevKind::Mlsi => {
            let l_logf = chain.apply_generator(&logf);
            let mut num = KahanSum::default();
            for x in 0..n {
                num.add(-pi[x] * f[x] * l_logf[x]);
            }
            let num = num.value();
            if !want_grad {
                (num, Vec::new())
            } else {
                let lstar_f = chain.apply_adjoint_generator(&f);
                let grad = (0..n)
                    .map(|x| -f[x] * l_logf[x] - lstar_f[x] - num * f[x])
                    .collect();
                (num, grad)
            }
        }
        SobolevKind::Lsi => {
            let u: Vec<f64> = f.iter().map(|&v| v.sqrt()).collect();
            let num = dirichlet_form(chain, &u, &u);
            if !want_grad {
                (num, Vec::new())
            } else {
                let mut tu = vec![0.0; n];
                chain.t().matvec(&u, &mut tu);
                let mut tstar_u = vec![0.0; n];
                chain.adjoint().matvec(&u, &mut tstar_u);
                let grad = (0..n)
                    .map(|x| 0.5 * u[x] * (2.0 * u[x] - tu[x] - tstar_u[x]) - num * f[x])
                    .collect();
                (num, grad)
            }
        }
    };
    let value = num / ent;
    if !value.is_finite() {
        return None;
    }
    if !want_grad {
        return Some(RatioEval {
            value,
            grad: Vec::new(),
            grad_norm2: 0.0,
        });
    }
    let mut grad = vec![0.0; n];
    let mut norm2 = KahanSum::default();
    for x in 0..n {
        let grad_den = f[x] * (logf[x] - ent);
        grad[x] = (grad_num[x] - value * grad_den) / ent;
        norm2.add(pi[x] * grad[x] * grad[x]);
    }
    Some(RatioEval {
        value,
        grad,
        grad_norm2: norm2.value().max(0.0),
    })
}

/// Gradient descent in log-coordinates with backtracking line search.
/// Returns (best value, best g, converged).
fn descend(chain: &Chain, kind: SobolevKind, g0: Vec<f64>, budget: usize) -> (f64, Vec<f64>, bool) {
    let mut g = g0;
    let mut converged = false;
    let Some(mut cur) = eval_ratio(chain, kind, &g, true) else {
        return (f64::INFINITY, g, false);
    };
    for _ in 0..budget {
        if cur.grad_norm2 < 1e-24 {
            converged = true;
            break;
        }
        let mut step = 1.0f64;
        let mut moved = false;
        while step > 1e-18 {
            let trial: Vec<f64> = g
                .iter()
                .zip(&cur.grad)
                .map(|(&gv, &dv)| gv - step * dv)
                .collect();
            if let Some(te) = eval_ratio(chain, kind, &trial, false) {
                if te.value <= cur.value - 1e-4 * step * cur.grad_norm2 {
                    let rel = (cur.value - te.value).abs() / cur.value.abs().max(1.0);
                    g = trial;
                    cur = eval_ratio(chain, kind, &g, true).unwrap();
                    moved = true;
                    if rel < 1e-10 {
                        converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
        let shift = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in g.iter_mut() {
            *v -= shift;
        }
    }
    (cur.value, g, converged)
}

fn normalized_density_from_positive(chain: &Chain, raw: &[f64]) -> Vec<f64> {
    let mass = chain.expectation(raw);
    raw.iter().map(|&v| v / mass).collect()
}

/// Multi-start list: exponential draws (smooth and spiky), one-lazy-step
/// Dirac neighborhoods, and near-constant probes along the slowest mode.
fn start_points(chain: &Chain, kind: SobolevKind, seed: u64) -> Vec<Vec<f64>> {
    let n = chain.n();
    let pi = chain.pi();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut rng = crate::rng::stream(seed, match kind {
        SobolevKind::Mlsi => 0x4d4c5349,
        SobolevKind::Lsi => 0x4c5349,
    });
    for round in 0..28usize {
        let power = if round % 2 == 0 { 1.0 } else { 4.0 };
        let raw: Vec<f64> = (0..n)
            .map(|_| (-(rng.random::<f64>()).ln()).powf(power).max(1e-12))
            .collect();
        let f = normalized_density_from_positive(chain, &raw);
        starts.push(f.iter().map(|&v| v.ln()).collect());
    }
    let num_dirac = n.min(32);
    for k in 0..num_dirac {
        let x = k * n / num_dirac;
        // Half-lazy step out of x, then a uniform floor to stay strictly
        // positive everywhere.
        let mut raw = vec![0.1; n];
        raw[x] += 0.45 / pi[x];
        let (cols, vals) = chain.t().row(x);
        for (&c, &v) in cols.iter().zip(vals) {
            raw[c as usize] += 0.45 * v / pi[c as usize];
        }
        let f = normalized_density_from_positive(chain, &raw);
        starts.push(f.iter().map(|&v| v.ln()).collect());
    }
    if chain.reversible() && n <= chain.dense_cap() && n > 1 {
        let mut s = chain.t().to_dense();
        for x in 0..n {
            for y in 0..n {
                s[(x, y)] *= (pi[x] / pi[y]).sqrt();
            }
        }
        let sym = (&s + s.transpose()) * 0.5;
        let eig = nalgebra::linalg::SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
        let col = eig.eigenvectors.column(order[1]);
        let phi: Vec<f64> = (0..n).map(|x| col[x] / pi[x].sqrt()).collect();
        let amp = phi.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
        for &eps in &[1e-2f64, 1e-4] {
            let scale = eps.min(0.5 / amp);
            for sign in [1.0, -1.0] {
                let f: Vec<f64> = phi.iter().map(|&v| 1.0 + sign * scale * v).collect();
                let f = normalized_density_from_positive(chain, &f);
                starts.push(f.iter().map(|&v| v.ln()).collect());
            }
        }
    }
    starts
}

/// Witness-based upper estimate of the MLSI constant alpha or LSI constant
/// beta: minimize the defining ratio over strictly positive densities by
/// multi-start projected gradient descent in log-coordinates. The reported
/// upper bound is exact for its witness; `lower` stays 0 here and is
/// supplied by `certified_lower_bounds`.
pub fn sobolev_upper_estimate(
    chain: &Chain,
    kind: SobolevKind,
    seed: u64,
    budget: usize,
) -> Result<ConstantBracket> {
    if kind == SobolevKind::Lsi && !chain.reversible() {
        return Err(Error::NonReversibleForLSI);
    }
    let starts = start_points(chain, kind, seed);
    let runs: Vec<(f64, Vec<f64>, bool)> = starts
        .into_par_iter()
        .map(|g0| descend(chain, kind, g0, budget))
        .collect();
    let mut best: Option<(f64, &Vec<f64>, bool)> = None;
    for (value, g, conv) in &runs {
        let better = match best {
            None => true,
            Some((bv, _, _)) => *value < bv,
        };
        if better && value.is_finite() {
            best = Some((*value, g, *conv));
        }
    }
    let (upper, g, converged) = best.ok_or(Error::NotConverged {
        what: "every Sobolev descent start degenerated".to_string(),
    })?;
    let n = chain.n();
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = g.iter().map(|&v| (v - gmax).exp()).collect();
    let witness_values = normalized_density_from_positive(chain, &raw);
    let residual = match kind {
        SobolevKind::Mlsi => eval_ratio(chain, kind, g, true)
            .map(|e| e.grad_norm2.sqrt())
            .unwrap_or(f64::INFINITY),
        SobolevKind::Lsi => {
            // Euler-Lagrange residual of the extremizer equation
            // L sqrt(f) + beta sqrt(f) log f = 0 in L2(pi).
            let u: Vec<f64> = witness_values.iter().map(|&v| v.sqrt()).collect();
            let lu = chain.apply_generator(&u);
            let mut acc = KahanSum::default();
            for x in 0..n {
                let logf = witness_values[x].max(1e-300).ln();
                let r = lu[x] + upper * u[x] * logf;
                acc.add(chain.pi()[x] * r * r);
            }
            acc.value().max(0.0).sqrt()
        }
    };
    Ok(ConstantBracket {
        exact: None,
        lower: 0.0,
        upper,
        witness: Density::new(chain, witness_values)?,
        residual,
        converged,
    })
}

/// Certificate-backed lower bounds (alpha, beta) from a curvature report.
/// Alpha needs the adjoint sectional certificate; beta additionally needs
/// reversibility and combines the Bakry-Emery and alpha routes.
pub fn certified_lower_bounds(
    chain: &Chain,
    report: &CurvatureReport,
) -> (Option<f64>, Option<f64>) {
    let alpha = if report.sectional_nonneg_adjoint {
        Some(report.kappa1)
    } else {
        None
    };
    let log_d = report.d_sparsity.ln();
    let mut beta: Option<f64> = None;
    if chain.reversible() && log_d > 0.0 {
        if report.rho > 0.0 {
            beta = Some(report.rho / (33.0 * log_d));
        }
        if let Some(a) = alpha {
            if a > 0.0 {
                let via_alpha = a / (15.0 * log_d);
                beta = Some(beta.map_or(via_alpha, |b: f64| b.max(via_alpha)));
            }
        }
    }
    (alpha, beta)
}

/// Outcome of the sub-Gaussian concentration checks. Slacks are the minimum
/// of bound minus observed value; negative means violation.
#[derive(Debug, Clone, Copy)]
pub struct HerbstReport {
    pub holds: bool,
    pub min_mgf_slack: f64,
    pub min_tail_slack: f64,
}

/// Checks log E[e^{theta f}] <= theta E[f] + theta^2/(2 alpha) on the given
/// theta grid and the induced Gaussian tail bound on an r grid, for a
/// 1-Lipschitz observable and a certified alpha.
pub fn herbst_check(
    chain: &Chain,
    f: &Observable,
    alpha_used: f64,
    theta_grid: &[f64],
) -> Result<HerbstReport> {
    if !chain.reversible() {
        return Err(Error::InvalidParameters {
            message: "concentration check requires a reversible chain".to_string(),
        });
    }
    if !alpha_used.is_finite() || alpha_used <= 0.0 {
        return Err(Error::InvalidParameters {
            message: format!("certified rate {alpha_used} must be positive"),
        });
    }
    let metric = hop_metric(chain)?;
    let lip = lipschitz_seminorm(&metric, f.values());
    if lip > 1.0 + 1e-12 {
        return Err(Error::NotLipschitz { seminorm: lip });
    }
    let pi = chain.pi();
    let vals = f.values();
    let mean = chain.expectation(vals);
    let mut min_mgf_slack = f64::INFINITY;
    for &theta in theta_grid {
        let m = vals
            .iter()
            .map(|&v| theta * v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut acc = KahanSum::default();
        for (&p, &v) in pi.iter().zip(vals) {
            acc.add(p * (theta * v - m).exp());
        }
        let log_mgf = m + acc.value().ln();
        let slack = theta * mean + theta * theta / (2.0 * alpha_used) - log_mgf;
        min_mgf_slack = min_mgf_slack.min(slack);
    }
    let fmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut min_tail_slack = f64::INFINITY;
    for k in 1..=16 {
        let r = (fmax - mean).max(0.0) * k as f64 / 16.0;
        let mut tail = KahanSum::default();
        for (&p, &v) in pi.iter().zip(vals) {
            if v >= mean + r - 1e-12 {
                tail.add(p);
            }
        }
        let slack = (-alpha_used * r * r / 2.0).exp() - tail.value();
        min_tail_slack = min_tail_slack.min(slack);
    }
    Ok(HerbstReport {
        holds: min_mgf_slack >= -1e-9 && min_tail_slack >= -1e-9,
        min_mgf_slack,
        min_tail_slack,
    })
}
