//! Entropy and varentropy along the evolution, mixing-window width bounds,
//! cutoff trend diagnostics, roughness bounds on log-densities, and the
//! differential inequality tying varentropy to entropy production.

use crate::chain::{self, evolve_density, semigroup_apply, Chain, Density, Direction};
use crate::error::{Error, Result};
use crate::functionals::{
    self, mixing_time, poincare_constant, spectral_gap, stats, EntropyStats, TvFrom,
};
use crate::geometry::{hop_metric, lipschitz_seminorm, MetricData};
use crate::numeric::KahanSum;
use rayon::prelude::*;

/// Entropy statistics of the evolved density along a time grid, with the
/// analytic entropy-production rate and the Lipschitz seminorm of the
/// log-density at each time.
#[derive(Debug, Clone)]
pub struct VarentropyCurve {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub varentropy: Vec<f64>,
    pub tv: Vec<f64>,
    pub entropy_slope: Vec<f64>,
    pub roughness: Vec<f64>,
}

fn validate_grid(times: &[f64]) -> Result<()> {
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NegativeTime { t });
        }
        if i > 0 && t <= times[i - 1] {
            return Err(Error::InvalidParameters {
                message: format!("time grid is not strictly increasing at index {i}"),
            });
        }
    }
    Ok(())
}

fn clipped_log(v: f64) -> f64 {
    v.max(1e-300).ln()
}

/// Entropy production rate -dEnt(f_t)/dt evaluated directly from the
/// generator: the inner product of -L*f with log f.
fn entropy_production(chain: &Chain, f: &[f64]) -> f64 {
    let lstar = chain.apply_adjoint_generator(f);
    let mut acc = KahanSum::default();
    for (x, &p) in chain.pi().iter().enumerate() {
        acc.add(-p * lstar[x] * clipped_log(f[x]));
    }
    acc.value()
}

/// Evolves f0 to every grid time and records entropy, varentropy, TV,
/// the analytic entropy slope, and Lip log f_t.
pub fn varentropy_curve(chain: &Chain, f0: &Density, times: &[f64]) -> Result<VarentropyCurve> {
    validate_grid(times)?;
    let metric = hop_metric(chain)?;
    let rows: Result<Vec<(EntropyStats, f64, f64)>> = times
        .par_iter()
        .map(|&t| {
            let ft = evolve_density(chain, f0, t)?;
            let s = stats(chain, &ft);
            let slope = entropy_production(chain, ft.values());
            let logf: Vec<f64> = ft.values().iter().map(|&v| clipped_log(v)).collect();
            let rough = lipschitz_seminorm(&metric, &logf);
            Ok((s, slope, rough))
        })
        .collect();
    let rows = rows?;
    Ok(VarentropyCurve {
        times: times.to_vec(),
        entropy: rows.iter().map(|r| r.0.entropy).collect(),
        varentropy: rows.iter().map(|r| r.0.varentropy).collect(),
        tv: rows.iter().map(|r| r.0.tv_to_equilibrium).collect(),
        entropy_slope: rows.iter().map(|r| r.1).collect(),
        roughness: rows.iter().map(|r| r.2).collect(),
    })
}

/// Slack of the reversed Pinsker comparison: (1 + sqrt(Varent))/(1 - TV)
/// minus the entropy; nonnegative for every density.
pub fn reverse_pinsker_gap(s: &EntropyStats) -> Result<f64> {
    if s.tv_to_equilibrium >= 1.0 {
        return Err(Error::TVEqualsOne);
    }
    Ok((1.0 + s.varentropy.sqrt()) / (1.0 - s.tv_to_equilibrium) - s.entropy)
}

/// Upper bound (1 + Ent(f))/(gamma * epsilon) on the time needed to bring
/// the TV distance from the given start below epsilon.
pub fn fast_mixing_bound(chain: &Chain, f: &Density, epsilon: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::EpsilonOutOfRange { eps: epsilon });
    }
    let gamma = poincare_constant(chain)?;
    Ok((1.0 + stats(chain, f).entropy) / (gamma * epsilon))
}

/// Varentropy of the centered evolution g = f - 1 of one start, computed
/// with log1p so that values far below machine epsilon relative to 1 keep
/// full relative precision.
fn varent_from_centered(pi: &[f64], g: &[f64]) -> f64 {
    let mut first = KahanSum::default();
    let mut second = KahanSum::default();
    for (&p, &gv) in pi.iter().zip(g) {
        let f = 1.0 + gv;
        if f <= 0.0 {
            continue;
        }
        let lf = if gv.abs() < 0.5 { gv.ln_1p() } else { f.ln() };
        first.add(p * f * lf);
        second.add(p * f * lf * lf);
    }
    let ent = first.value().max(0.0);
    (second.value() - ent * ent).max(0.0)
}

const MAX_EXHAUSTIVE_STARTS: usize = 4096;

fn start_list(n: usize) -> (Vec<usize>, bool) {
    if n <= MAX_EXHAUSTIVE_STARTS {
        ((0..n).collect(), false)
    } else {
        let stride = n.div_ceil(MAX_EXHAUSTIVE_STARTS);
        ((0..n).step_by(stride).collect(), true)
    }
}

fn worst_varent_at(chain: &Chain, t: f64) -> Result<f64> {
    let weights = chain::poisson_weights(t)?;
    let (starts, _) = start_list(chain.n());
    Ok(starts
        .into_par_iter()
        .map(|x| {
            let g = chain::apply_with_weights(
                chain.adjoint(),
                &functionals::centered_dirac(chain, x),
                &weights,
            );
            varent_from_centered(chain.pi(), &g)
        })
        .reduce(|| 0.0, f64::max))
}

/// Varentropy at the entrance of the mixing window: evaluates the evolved
/// density at t = t_mix(1 - epsilon) and returns the worst varentropy over
/// Dirac starts, or the single-start value.
pub fn varentropy_correction(chain: &Chain, epsilon: f64, from: TvFrom<'_>) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 0.5 {
        return Err(Error::EpsilonOutOfRange { eps: epsilon });
    }
    let t = mixing_time(chain, 1.0 - epsilon, from)?;
    match from {
        TvFrom::Worst => worst_varent_at(chain, t),
        TvFrom::Start(f0) => {
            let ft = evolve_density(chain, f0, t)?;
            Ok(stats(chain, &ft).varentropy)
        }
    }
}

fn log_plus(u: f64) -> f64 {
    if u > 1.0 {
        u.ln()
    } else {
        0.0
    }
}

/// psi(t) = 16 t log d + 4 t log_+(diam / t).
fn psi(t: f64, log_d: f64, diam: f64) -> f64 {
    16.0 * t * log_d + 4.0 * t * log_plus(diam / t)
}

/// Sup of psi over [t_lo, t_hi]: the linear part peaks at the right
/// endpoint, the log_+ part at diam/e; checking both endpoints and the
/// interior stationary point covers every case.
fn psi_window_sup(log_d: f64, diam: f64, t_lo: f64, t_hi: f64) -> f64 {
    let mut m = psi(t_lo, log_d, diam).max(psi(t_hi, log_d, diam));
    let t_star = diam / std::f64::consts::E;
    if t_lo < t_star && t_star < t_hi {
        m = m.max(psi(t_star, log_d, diam));
    }
    m
}

/// Mixing-window diagnostics at one epsilon. The two differential-
/// inequality bounds are present only when a nonnegative-curvature
/// certificate was supplied (and, for the second, a positive certified
/// entropy-decay rate).
#[derive(Debug, Clone)]
pub struct CutoffDiagnostics {
    pub t_mix_table: Vec<(f64, f64)>,
    pub width: f64,
    pub varentropy_correction: f64,
    pub width_bound_thm_main: f64,
    pub width_bound_idi_gamma: Option<f64>,
    pub width_bound_idi_alpha: Option<f64>,
    pub criterion_ratio: f64,
    pub product_condition: f64,
    pub sampled_starts: bool,
}

/// Precomputed quantities the width diagnostics depend on.
#[derive(Clone, Copy)]
pub struct DiagnosticsInputs<'a> {
    pub gamma: f64,
    pub lambda: f64,
    pub metric: &'a MetricData,
    pub rho_nonneg_certified: bool,
    pub alpha_lower: Option<f64>,
    pub epsilons: &'a [f64],
}

/// Measures the mixing window at epsilon and fills every bound that its
/// certificates allow.
pub fn width_bounds(
    chain: &Chain,
    epsilon: f64,
    from: TvFrom<'_>,
    inputs: &DiagnosticsInputs<'_>,
) -> Result<CutoffDiagnostics> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 0.5 {
        return Err(Error::EpsilonOutOfRange { eps: epsilon });
    }
    let t_hi = mixing_time(chain, epsilon, from)?;
    let t_lo = mixing_time(chain, 1.0 - epsilon, from)?;
    let width = t_hi - t_lo;
    let v_eps = varentropy_correction(chain, epsilon, from)?;
    let gamma = inputs.gamma;
    let width_bound_thm_main = 2.0 / (gamma * epsilon * epsilon) * (1.0 + v_eps.sqrt());
    let log_d = inputs.metric.d_sparsity().ln().max(0.0);
    let diam = inputs.metric.diameter() as f64;
    let m_eps = psi_window_sup(log_d, diam, t_lo, t_hi);
    let e3 = epsilon.powi(3);
    let width_bound_idi_gamma = inputs
        .rho_nonneg_certified
        .then(|| 1.0 / (gamma * e3) + (4.0 * m_eps / (gamma * e3)).sqrt());
    let width_bound_idi_alpha = match inputs.alpha_lower {
        Some(alpha) if inputs.rho_nonneg_certified && alpha > 0.0 => Some(
            (1.0 / alpha)
                * (std::f64::consts::E * alpha * (1.0 + m_eps) / (2.0 * epsilon.powi(4))).ln(),
        ),
        _ => None,
    };
    let mut t_mix_table = Vec::with_capacity(inputs.epsilons.len());
    for &e in inputs.epsilons {
        t_mix_table.push((e, mixing_time(chain, e, from)?));
    }
    Ok(CutoffDiagnostics {
        t_mix_table,
        width,
        varentropy_correction: v_eps,
        width_bound_thm_main,
        width_bound_idi_gamma,
        width_bound_idi_alpha,
        criterion_ratio: gamma * t_hi / (1.0 + v_eps.sqrt()),
        product_condition: inputs.lambda * t_hi,
        sampled_starts: chain.n() > MAX_EXHAUSTIVE_STARTS,
    })
}

/// Outcome of the log-density Lipschitz bounds along a grid. Slacks are
/// bound minus measured seminorm; the minimum over the grid is reported.
#[derive(Debug, Clone, Copy)]
pub struct RoughnessReport {
    pub holds: bool,
    pub min_slack_forward: f64,
    pub min_slack_adjoint: f64,
}

/// Checks Lip log P_t f <= 3 log d + 2 log_+(diam/t) for the forward
/// semigroup and the same bound with 6 log d for the adjoint (density)
/// evolution, at every grid time.
pub fn roughness_check(chain: &Chain, f0: &Density, times: &[f64]) -> Result<RoughnessReport> {
    validate_grid(times)?;
    let metric = hop_metric(chain)?;
    let log_d = metric.d_sparsity().ln().max(0.0);
    let diam = metric.diameter() as f64;
    let mut min_fwd = f64::INFINITY;
    let mut min_adj = f64::INFINITY;
    for &t in times {
        let (bound_fwd, bound_adj) = if t > 0.0 {
            let tail = 2.0 * log_plus(diam / t);
            (3.0 * log_d + tail, 6.0 * log_d + tail)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let fwd = semigroup_apply(chain, f0.values(), t, Direction::Forward)?;
        let log_fwd: Vec<f64> = fwd.iter().map(|&v| clipped_log(v)).collect();
        min_fwd = min_fwd.min(bound_fwd - lipschitz_seminorm(&metric, &log_fwd));
        let adj = evolve_density(chain, f0, t)?;
        let log_adj: Vec<f64> = adj.values().iter().map(|&v| clipped_log(v)).collect();
        min_adj = min_adj.min(bound_adj - lipschitz_seminorm(&metric, &log_adj));
    }
    Ok(RoughnessReport {
        holds: min_fwd >= -1e-9 && min_adj >= -1e-9,
        min_slack_forward: min_fwd,
        min_slack_adjoint: min_adj,
    })
}

/// Outcome of the varentropy-vs-entropy-production inequality along a
/// grid: Varent(f_t) <= psi(t) * (-dEnt/dt) with psi as above.
#[derive(Debug, Clone, Copy)]
pub struct IdiReport {
    pub holds: bool,
    pub min_slack: f64,
}

/// Verifies the differential inequality at every grid time; meaningful as
/// a certificate only when nonnegative curvature is certified for the
/// chain, informational otherwise.
pub fn idi_check(chain: &Chain, f0: &Density, times: &[f64]) -> Result<IdiReport> {
    let curve = varentropy_curve(chain, f0, times)?;
    let metric = hop_metric(chain)?;
    let log_d = metric.d_sparsity().ln().max(0.0);
    let diam = metric.diameter() as f64;
    let mut min_slack = f64::INFINITY;
    for (i, &t) in curve.times.iter().enumerate() {
        let bound = psi(t, log_d, diam) * curve.entropy_slope[i];
        min_slack = min_slack.min(bound - curve.varentropy[i]);
    }
    Ok(IdiReport {
        holds: min_slack >= -1e-9,
        min_slack,
    })
}

/// One row of the cutoff trend table.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub n: usize,
    pub tmix_lo: f64,
    pub tmix_hi: f64,
    pub ratio: f64,
    pub product_condition: f64,
    pub criterion_ratio: f64,
}

/// Builds the family member at each size and measures the quantities
/// whose trends signal or rule out an abrupt mixing transition:
/// t_mix(1-eps), t_mix(eps), their ratio, lambda * t_mix, and the
/// criterion ratio gamma * t_mix / (1 + sqrt(V_eps)). Per-size failures
/// are reported in the corresponding row.
pub fn cutoff_sweep(
    build: impl Fn(usize) -> Result<Chain>,
    sizes: &[usize],
    epsilon: f64,
) -> Vec<(usize, Result<SweepRow>)> {
    sizes
        .iter()
        .map(|&size| {
            let row = (|| {
                if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 0.5 {
                    return Err(Error::EpsilonOutOfRange { eps: epsilon });
                }
                let chain = build(size)?;
                let gamma = poincare_constant(&chain)?;
                let lambda = spectral_gap(&chain)?.gap;
                let t_hi = mixing_time(&chain, epsilon, TvFrom::Worst)?;
                let t_lo = mixing_time(&chain, 1.0 - epsilon, TvFrom::Worst)?;
                let v_eps = varentropy_correction(&chain, epsilon, TvFrom::Worst)?;
                Ok(SweepRow {
                    n: chain.n(),
                    tmix_lo: t_lo,
                    tmix_hi: t_hi,
                    ratio: t_lo / t_hi,
                    product_condition: lambda * t_hi,
                    criterion_ratio: gamma * t_hi / (1.0 + v_eps.sqrt()),
                })
            })();
            (size, row)
        })
        .collect()
}

/// Worst case over Dirac starts of (tv, entropy, varentropy,
/// entropy_slope, roughness) at time t, each column maximized
/// independently. Evolution is carried out on the centered vector so the
/// tail of each column keeps relative precision near equilibrium.
pub fn worst_case_profile(chain: &Chain, metric: &MetricData, t: f64) -> Result<[f64; 5]> {
    let pi = chain.pi();
    functionals::worst_case_columns(chain, t, |g| {
        let mut tv = KahanSum::default();
        let mut first = KahanSum::default();
        let mut second = KahanSum::default();
        let mut logf = vec![0.0; g.len()];
        for (x, (&p, &gv)) in pi.iter().zip(g).enumerate() {
            tv.add(p * gv.abs());
            let f = 1.0 + gv;
            if f <= 0.0 {
                logf[x] = clipped_log(0.0);
                continue;
            }
            let lf = if gv.abs() < 0.5 { gv.ln_1p() } else { f.ln() };
            logf[x] = lf;
            first.add(p * f * lf);
            second.add(p * f * lf * lf);
        }
        let ent = first.value().max(0.0);
        let varent = (second.value() - ent * ent).max(0.0);
        let lstar_g = chain.apply_adjoint_generator(g);
        let mut slope = KahanSum::default();
        for (x, &p) in pi.iter().enumerate() {
            slope.add(-p * lstar_g[x] * logf[x]);
        }
        let rough = lipschitz_seminorm(metric, &logf);
        [
            (0.5 * tv.value()).clamp(0.0, 1.0),
            ent,
            varent,
            slope.value(),
            rough,
        ]
    })
}
