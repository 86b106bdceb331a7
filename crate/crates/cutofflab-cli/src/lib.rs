//! Plumbing behind the `cutofflab` binary: config ingestion, report
//! assembly, curve serialization, and the verification battery. Command
//! entry points return process exit codes instead of aborting so the
//! whole surface stays testable in-process.

use cutofflab::chain::{semigroup_apply, Direction};
use cutofflab::cutoff::DiagnosticsInputs;
use cutofflab::functionals::{SobolevKind, TvFrom};
use cutofflab::geometry::lipschitz_seminorm;
use cutofflab::{
    build_chain_with_cap, build_model, carre_du_champ, curvature_report, cutoff_sweep,
    dirichlet_form, hop_metric, idi_check, mixing_time, parse_model_spec, poincare_constant,
    roughness_check, sobolev_upper_estimate, spectral_gap, width_bounds, worst_case_profile,
    worst_case_tv, Chain, ConstantBracket, CurvatureReport, CutoffDiagnostics, Density, Error,
    MetricData, Model, ModelSpec, Observable, varentropy_curve,
};
use rand::Rng;
use std::fmt;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// The designated default precision for scalar mixing diagnostics.
pub const DEFAULT_PRECISION: f64 = 0.5 / std::f64::consts::E;

/// Default precision grid for mixing-time tables.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.4, 0.25, 0.1, DEFAULT_PRECISION];

const SOBOLEV_BUDGET: usize = 4000;

/// Errors split by the exit code they map to: bad input (2) versus
/// exhausted size or budget caps (3).
#[derive(Debug, Clone)]
pub enum CliError {
    Input(String),
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Resource(_) => EXIT_RESOURCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Resource(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::TooLarge { .. } | Error::TooLargeForDense { .. } => {
                CliError::Resource(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn input(message: impl Into<String>) -> CliError {
    CliError::Input(message.into())
}

/// A parsed and validated run configuration.
pub struct Config {
    pub spec: ModelSpec,
    pub model_echo: serde_json::Value,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub scalar_epsilon: f64,
    pub start_state: Option<usize>,
    pub dense_cap: Option<usize>,
}

/// Parses the config document {"model": {...}, "seed": int, "epsilons":
/// [real], "start_state": int, "dense_cap": int}; only "model" is
/// required.
pub fn parse_config(text: &str) -> CliResult<Config> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| input(format!("malformed config JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| input("config must be a JSON object"))?;
    let model_echo = obj
        .get("model")
        .ok_or_else(|| input("missing \"model\" object"))?
        .clone();
    let model_text = serde_json::to_string(&model_echo)
        .map_err(|e| input(format!("cannot re-serialize model: {e}")))?;
    let spec = parse_model_spec(&model_text)?;
    let seed = match obj.get("seed") {
        None => 0,
        Some(s) => s
            .as_u64()
            .ok_or_else(|| input("\"seed\" must be a nonnegative integer"))?,
    };
    let epsilons = match obj.get("epsilons") {
        None => DEFAULT_EPSILONS.to_vec(),
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| input("\"epsilons\" must be an array"))?;
            if arr.is_empty() {
                return Err(input("\"epsilons\" must be nonempty"));
            }
            let mut out = Vec::with_capacity(arr.len());
            for e in arr {
                let x = e
                    .as_f64()
                    .ok_or_else(|| input("non-numeric entry in \"epsilons\""))?;
                if !x.is_finite() || x <= 0.0 || x >= 1.0 {
                    return Err(input(format!("precision {x} outside (0, 1)")));
                }
                out.push(x);
            }
            out
        }
    };
    let scalar_epsilon = if obj.contains_key("epsilons") {
        epsilons
            .iter()
            .copied()
            .find(|&e| e < 0.5)
            .unwrap_or(DEFAULT_PRECISION)
    } else {
        DEFAULT_PRECISION
    };
    let start_state = match obj.get("start_state") {
        None => None,
        Some(s) => Some(
            s.as_u64()
                .and_then(|x| usize::try_from(x).ok())
                .ok_or_else(|| input("\"start_state\" must be a nonnegative integer"))?,
        ),
    };
    let dense_cap = match obj.get("dense_cap") {
        None => None,
        Some(s) => {
            let cap = s
                .as_u64()
                .and_then(|x| usize::try_from(x).ok())
                .ok_or_else(|| input("\"dense_cap\" must be a nonnegative integer"))?;
            if cap == 0 {
                return Err(input("\"dense_cap\" must be positive"));
            }
            Some(cap)
        }
    };
    Ok(Config {
        spec,
        model_echo,
        seed,
        epsilons,
        scalar_epsilon,
        start_state,
        dense_cap,
    })
}

pub fn read_config(path: &Path) -> CliResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Builds the configured model, applying the dense-cap override and
/// validating the start state against the realized state count.
pub fn load_model(config: &Config) -> CliResult<Model> {
    let mut model = build_model(&config.spec)?;
    if let Some(cap) = config.dense_cap {
        let t = model.chain.t().clone();
        model.chain = build_chain_with_cap(t, cap)?;
    }
    if let Some(s) = config.start_state {
        if s >= model.chain.n() {
            return Err(input(format!(
                "start state {s} outside the {}-state space",
                model.chain.n()
            )));
        }
    }
    Ok(model)
}

fn start_density(config: &Config, chain: &Chain) -> Option<Density> {
    config.start_state.map(|s| Density::dirac(chain, s))
}

fn tv_from<'a>(start: &'a Option<Density>) -> TvFrom<'a> {
    match start {
        Some(f0) => TvFrom::Start(f0),
        None => TvFrom::Worst,
    }
}

/// Every quantity the report and the battery draw on, each recorded
/// with the reason it is unavailable when it is.
pub struct Pieces {
    pub metric: CliResult<MetricData>,
    pub lambda: CliResult<f64>,
    pub gamma: CliResult<f64>,
    pub curvature: CliResult<CurvatureReport>,
    pub alpha_upper: CliResult<ConstantBracket>,
    pub beta_upper: CliResult<ConstantBracket>,
    pub alpha_lower: Option<f64>,
    pub beta_lower: Option<f64>,
    pub width: CliResult<CutoffDiagnostics>,
    pub t_ref: CliResult<f64>,
}

pub fn compute_pieces(model: &Model, config: &Config) -> Pieces {
    let chain = &model.chain;
    let start = start_density(config, chain);
    let metric = hop_metric(chain).map_err(CliError::from);
    let lambda = spectral_gap(chain).map(|s| s.gap).map_err(CliError::from);
    let gamma = poincare_constant(chain).map_err(CliError::from);
    let curvature = metric.as_ref().map_err(Clone::clone).and_then(|m| {
        curvature_report(chain, m, model.certificates.clone()).map_err(CliError::from)
    });
    let alpha_upper = sobolev_upper_estimate(chain, SobolevKind::Mlsi, config.seed, SOBOLEV_BUDGET)
        .map_err(CliError::from);
    let beta_upper = sobolev_upper_estimate(chain, SobolevKind::Lsi, config.seed, SOBOLEV_BUDGET)
        .map_err(CliError::from);
    let (alpha_lower, beta_lower) = match &curvature {
        Ok(rep) => cutofflab::certified_lower_bounds(chain, rep),
        Err(_) => (None, None),
    };
    let rho_nonneg_certified = model
        .certificates
        .get("rho")
        .is_some_and(|&r| r >= 0.0);
    let width = match (&gamma, &lambda, &metric) {
        (Ok(g), Ok(l), Ok(m)) => {
            let inputs = DiagnosticsInputs {
                gamma: *g,
                lambda: *l,
                metric: m,
                rho_nonneg_certified,
                alpha_lower,
                epsilons: &config.epsilons,
            };
            width_bounds(chain, config.scalar_epsilon, tv_from(&start), &inputs)
                .map_err(CliError::from)
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e.clone()),
    };
    let t_ref = mixing_time(chain, 0.25, tv_from(&start)).map_err(CliError::from);
    Pieces {
        metric,
        lambda,
        gamma,
        curvature,
        alpha_upper,
        beta_upper,
        alpha_lower,
        beta_lower,
        width,
        t_ref,
    }
}

/// Outcome of one verification-battery check.
#[derive(Debug, Clone)]
pub enum CheckOutcome {
    Pass { slack: f64 },
    Fail { slack: f64 },
    Skipped { reason: String },
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub outcome: CheckOutcome,
}

impl Check {
    fn graded(name: &'static str, slack: f64, tol: f64) -> Self {
        let outcome = if slack >= -tol {
            CheckOutcome::Pass { slack }
        } else {
            CheckOutcome::Fail { slack }
        };
        Check { name, outcome }
    }

    fn skipped(name: &'static str, reason: impl Into<String>) -> Self {
        Check {
            name,
            outcome: CheckOutcome::Skipped {
                reason: reason.into(),
            },
        }
    }
}

fn phi_lsi(r: f64) -> f64 {
    if r < 1e-8 {
        4.0
    } else {
        r / (r / 4.0).tanh()
    }
}

fn phi_chain(r: f64) -> f64 {
    if r.abs() < 1e-6 {
        1.0 + r / 3.0
    } else {
        let denom = 2.0 * (r + (-r).exp_m1());
        r * r / denom
    }
}

fn random_observable(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Back-off applied to the measured Bakry-Emery constant before it is
/// used inside an exponential: the bisection locates it to 1e-6, so a
/// slightly smaller value is guaranteed feasible.
const RHO_BACKOFF: f64 = 2e-6;

fn run_tv_checks(chain: &Chain, start: &Option<Density>, t_ref: f64, lambda: &CliResult<f64>, out: &mut Vec<Check>) {
    let d = |t: f64| -> CliResult<f64> {
        match start {
            Some(f0) => {
                let ft = cutofflab::evolve_density(chain, f0, t)?;
                Ok(cutofflab::stats(chain, &ft).tv_to_equilibrium)
            }
            None => Ok(worst_case_tv(chain, t)?),
        }
    };
    let pairs = [
        (0.5 * t_ref, 0.5 * t_ref),
        (0.5 * t_ref, t_ref),
        (t_ref, t_ref),
        (t_ref, 2.0 * t_ref),
    ];
    let sub = (|| -> CliResult<f64> {
        let mut min_slack = f64::INFINITY;
        for &(s, t) in &pairs {
            let slack = 4.0 * d(s)? * d(t)? - 2.0 * d(s + t)?;
            min_slack = min_slack.min(slack);
        }
        Ok(min_slack)
    })();
    out.push(match sub {
        Ok(slack) => Check::graded("tv-submultiplicative", slack, 1e-12),
        Err(e) => Check::skipped("tv-submultiplicative", e.to_string()),
    });
    if !chain.reversible() {
        out.push(Check::skipped("tv-spectral-floor", "chain is not reversible"));
    } else {
        let floor = (|| -> CliResult<f64> {
            let lambda = lambda.as_ref().map_err(Clone::clone)?;
            let mut min_slack = f64::INFINITY;
            for &t in &[0.5 * t_ref, t_ref, 2.0 * t_ref, 4.0 * t_ref] {
                min_slack = min_slack.min(worst_case_tv(chain, t)? - 0.5 * (-lambda * t).exp());
            }
            Ok(min_slack)
        })();
        out.push(match floor {
            Ok(slack) => Check::graded("tv-spectral-floor", slack, 1e-10),
            Err(e) => Check::skipped("tv-spectral-floor", e.to_string()),
        });
    }
}

fn run_constant_comparisons(chain: &Chain, pieces: &Pieces, out: &mut Vec<Check>) {
    match (&pieces.lambda, &pieces.curvature) {
        (Ok(lambda), Ok(rep)) => {
            out.push(Check::graded("gap-dominates-kappa1", lambda - rep.kappa1, 1e-9));
        }
        (Err(e), _) | (_, Err(e)) => {
            out.push(Check::skipped("gap-dominates-kappa1", e.to_string()));
        }
    }
    match (&pieces.gamma, &pieces.curvature) {
        (Ok(gamma), Ok(rep)) => {
            out.push(Check::graded("gamma-dominates-rho", gamma - rep.rho, 1e-9));
        }
        (Err(e), _) | (_, Err(e)) => {
            out.push(Check::skipped("gamma-dominates-rho", e.to_string()));
        }
    }
    match (&pieces.curvature, &pieces.metric) {
        (Ok(rep), Ok(metric)) => {
            let slack = 2.0 - rep.kappa1 * metric.diameter() as f64;
            out.push(Check::graded("kappa1-diameter-bound", slack, 1e-9));
        }
        (Err(e), _) | (_, Err(e)) => {
            out.push(Check::skipped("kappa1-diameter-bound", e.to_string()));
        }
    }
    if !chain.reversible() {
        out.push(Check::skipped("lsi-mlsi-comparison", "chain is not reversible"));
        out.push(Check::skipped("rho-lsi-log-degree", "chain is not reversible"));
    } else {
        match (&pieces.alpha_upper, &pieces.beta_upper) {
            (Ok(a), Ok(b)) => {
                let slack = a.upper + 2e-3 - 4.0 * b.upper;
                out.push(Check::graded("lsi-mlsi-comparison", slack, 0.0));
            }
            (Err(e), _) | (_, Err(e)) => {
                out.push(Check::skipped("lsi-mlsi-comparison", e.to_string()));
            }
        }
        match (&pieces.beta_upper, &pieces.curvature) {
            (Ok(b), Ok(rep)) => {
                let log_d = rep.d_sparsity.ln();
                if log_d > 0.0 {
                    let slack = 33.0 * b.upper * log_d + 1e-6 - rep.rho;
                    out.push(Check::graded("rho-lsi-log-degree", slack, 0.0));
                } else {
                    out.push(Check::skipped("rho-lsi-log-degree", "degree bound is trivial"));
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                out.push(Check::skipped("rho-lsi-log-degree", e.to_string()));
            }
        }
    }
    match (&pieces.alpha_upper, pieces.alpha_lower) {
        (Ok(a), Some(lower)) => {
            out.push(Check::graded("alpha-upper-above-certified", a.upper - lower, 1e-9));
        }
        (Err(e), _) => out.push(Check::skipped("alpha-upper-above-certified", e.to_string())),
        (_, None) => out.push(Check::skipped(
            "alpha-upper-above-certified",
            "no certified lower bound",
        )),
    }
}

fn run_semigroup_checks(
    chain: &Chain,
    pieces: &Pieces,
    seed: u64,
    out: &mut Vec<Check>,
) {
    let rep = match &pieces.curvature {
        Ok(rep) => rep,
        Err(e) => {
            out.push(Check::skipped("gamma-sub-commutation", e.to_string()));
            out.push(Check::skipped("local-poincare", e.to_string()));
            return;
        }
    };
    let rho_used = rep.rho - RHO_BACKOFF;
    let n = chain.n();
    let mut rng = cutofflab::rng::stream(seed, 0x0b5ec0de);
    let times = [0.2, 1.0, 5.0];
    let result = (|| -> CliResult<(f64, f64)> {
        let mut sub_slack = f64::INFINITY;
        let mut lp_slack = f64::INFINITY;
        for _ in 0..6 {
            let f = random_observable(&mut rng, n);
            let gamma_f = carre_du_champ(chain, &f);
            let f_sq: Vec<f64> = f.iter().map(|&v| v * v).collect();
            let scale = gamma_f.iter().cloned().fold(0.0, f64::max) + 1.0;
            for &t in &times {
                let ptf = semigroup_apply(chain, &f, t, Direction::Forward)?;
                let pt_gamma = semigroup_apply(chain, &gamma_f, t, Direction::Forward)?;
                let gamma_ptf = carre_du_champ(chain, &ptf);
                let decay = (-2.0 * rho_used * t).exp();
                let pt_fsq = semigroup_apply(chain, &f_sq, t, Direction::Forward)?;
                let window = if rho_used.abs() < 1e-12 {
                    2.0 * t
                } else {
                    -(-2.0 * rho_used * t).exp_m1() / rho_used
                };
                for x in 0..n {
                    sub_slack = sub_slack.min((decay * pt_gamma[x] - gamma_ptf[x]) / scale);
                    let var = pt_fsq[x] - ptf[x] * ptf[x];
                    lp_slack = lp_slack.min((window * pt_gamma[x] - var) / scale);
                }
            }
        }
        Ok((sub_slack, lp_slack))
    })();
    match result {
        Ok((sub, lp)) => {
            out.push(Check::graded("gamma-sub-commutation", sub, 1e-9));
            out.push(Check::graded("local-poincare", lp, 1e-9));
        }
        Err(e) => {
            out.push(Check::skipped("gamma-sub-commutation", e.to_string()));
            out.push(Check::skipped("local-poincare", e.to_string()));
        }
    }
}

fn run_herbst_check(chain: &Chain, pieces: &Pieces, out: &mut Vec<Check>) {
    if !chain.reversible() {
        out.push(Check::skipped("herbst-concentration", "chain is not reversible"));
        return;
    }
    let (metric, alpha) = match (&pieces.metric, pieces.alpha_lower) {
        (Ok(m), Some(a)) if a > 0.0 => (m, a),
        (Err(e), _) => {
            out.push(Check::skipped("herbst-concentration", e.to_string()));
            return;
        }
        _ => {
            out.push(Check::skipped("herbst-concentration", "no certified positive rate"));
            return;
        }
    };
    let values: Vec<f64> = (0..chain.n()).map(|x| metric.dist(0, x) as f64).collect();
    let result = Observable::new(values).map_err(CliError::from).and_then(|obs| {
        let grid = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        cutofflab::herbst_check(chain, &obs, alpha, &grid).map_err(CliError::from)
    });
    match result {
        Ok(report) => {
            let slack = report.min_mgf_slack.min(report.min_tail_slack);
            out.push(Check::graded("herbst-concentration", slack, 1e-9));
        }
        Err(e) => out.push(Check::skipped("herbst-concentration", e.to_string())),
    }
}

fn run_chain_rule_check(chain: &Chain, pieces: &Pieces, seed: u64, out: &mut Vec<Check>) {
    let metric = match &pieces.metric {
        Ok(m) => m,
        Err(e) => {
            out.push(Check::skipped("chain-rule-sandwich", e.to_string()));
            return;
        }
    };
    let n = chain.n();
    let mut rng = cutofflab::rng::stream(seed, 0xc4a17);
    let mut min_slack = f64::INFINITY;
    for _ in 0..100 {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let f: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
        let sqrt_f: Vec<f64> = u.iter().map(|&v| (0.5 * v).exp()).collect();
        let r = lipschitz_seminorm(metric, &u);
        let e_sqrt = dirichlet_form(chain, &sqrt_f, &sqrt_f);
        let e_flog = dirichlet_form(chain, &f, &u);
        let dirichlet_scale = 1e-10 * (1.0 + e_flog.abs() + 4.0 * e_sqrt.abs());
        min_slack = min_slack.min((e_flog - 4.0 * e_sqrt) + dirichlet_scale);
        min_slack = min_slack.min((phi_lsi(r) * e_sqrt - e_flog) + dirichlet_scale);
        let lf = chain.apply_generator(&f);
        let llog = chain.apply_generator(&u);
        let gamma_log = carre_du_champ(chain, &u);
        let (lo, hi) = (phi_chain(-r), phi_chain(r));
        let mut fg = vec![0.0; n];
        for x in 0..n {
            let base = lf[x] / f[x] - llog[x];
            let scale = 1e-10 * (1.0 + hi * base.abs() + gamma_log[x].abs());
            min_slack = min_slack.min(hi * base - gamma_log[x] + scale);
            min_slack = min_slack.min(gamma_log[x] - lo * base + scale);
            fg[x] = f[x] * gamma_log[x];
        }
        let expected = chain.expectation(&fg);
        let integral_scale = 1e-10 * (1.0 + expected.abs());
        min_slack = min_slack.min((1.0 + r) * e_flog - expected + integral_scale);
    }
    out.push(Check::graded("chain-rule-sandwich", min_slack, 0.0));
}

fn run_certificate_check(model: &Model, pieces: &Pieces, out: &mut Vec<Check>) {
    if model.certificates.is_empty() {
        out.push(Check::skipped("certificates-below-measured", "no analytic certificates"));
        return;
    }
    let rep = match &pieces.curvature {
        Ok(rep) => rep,
        Err(e) => {
            out.push(Check::skipped("certificates-below-measured", e.to_string()));
            return;
        }
    };
    let mut min_slack = f64::INFINITY;
    for (key, &cert) in &model.certificates {
        match key.as_str() {
            "kappa1" => min_slack = min_slack.min(rep.kappa1 + 1e-9 - cert),
            "rho" => min_slack = min_slack.min(rep.rho + RHO_BACKOFF - cert),
            "sectional" => {
                min_slack = min_slack.min(if rep.sectional_nonneg { 0.0 } else { -1.0 });
            }
            _ => {}
        }
    }
    out.push(Check::graded("certificates-below-measured", min_slack, 0.0));
}

fn run_balance_check(chain: &Chain, out: &mut Vec<Check>) {
    if !chain.reversible() {
        out.push(Check::skipped("detailed-balance", "chain is not reversible"));
        return;
    }
    let pi = chain.pi();
    let n = chain.n();
    let mut dense = vec![0.0; n * n];
    for x in 0..n {
        let (cols, vals) = chain.t().row(x);
        for (&c, &v) in cols.iter().zip(vals) {
            dense[x * n + c as usize] = v;
        }
    }
    let mut max_violation = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            max_violation = max_violation.max((pi[x] * dense[x * n + y] - pi[y] * dense[y * n + x]).abs());
        }
    }
    out.push(Check::graded("detailed-balance", 1e-12 - max_violation, 0.0));
}

fn run_cutoff_checks(
    chain: &Chain,
    model: &Model,
    pieces: &Pieces,
    start: &Option<Density>,
    out: &mut Vec<Check>,
) {
    match &pieces.width {
        Ok(diag) => {
            let slack = diag.width_bound_thm_main + 1e-9 - diag.width;
            out.push(Check::graded("mixing-width-bound", slack, 0.0));
        }
        Err(e) => out.push(Check::skipped("mixing-width-bound", e.to_string())),
    }
    let t_ref = match &pieces.t_ref {
        Ok(t) => *t,
        Err(e) => {
            out.push(Check::skipped("varentropy-differential-inequality", e.to_string()));
            out.push(Check::skipped("log-gradient-roughness", e.to_string()));
            return;
        }
    };
    let f0 = match start {
        Some(f0) => f0.clone(),
        None => Density::dirac(chain, 0),
    };
    let grid = [0.25 * t_ref, 0.5 * t_ref, t_ref, 1.5 * t_ref];
    let rho_certified = model.certificates.get("rho").is_some_and(|&r| r >= 0.0);
    if rho_certified {
        match idi_check(chain, &f0, &grid) {
            Ok(report) => out.push(Check::graded(
                "varentropy-differential-inequality",
                report.min_slack,
                if report.holds { f64::INFINITY } else { 0.0 },
            )),
            Err(e) => out.push(Check::skipped(
                "varentropy-differential-inequality",
                e.to_string(),
            )),
        }
    } else {
        out.push(Check::skipped(
            "varentropy-differential-inequality",
            "no nonnegative curvature certificate",
        ));
    }
    match roughness_check(chain, &f0, &grid) {
        Ok(report) => {
            let slack = report.min_slack_forward.min(report.min_slack_adjoint);
            out.push(Check::graded(
                "log-gradient-roughness",
                slack,
                if report.holds { f64::INFINITY } else { 0.0 },
            ));
        }
        Err(e) => out.push(Check::skipped("log-gradient-roughness", e.to_string())),
    }
}

/// Runs the whole verification battery; checks whose prerequisites are
/// unavailable come back as `Skipped` with the reason.
pub fn run_battery(model: &Model, config: &Config, pieces: &Pieces) -> Vec<Check> {
    let chain = &model.chain;
    let start = start_density(config, chain);
    let mut out = Vec::new();
    match &pieces.t_ref {
        Ok(t_ref) => run_tv_checks(chain, &start, *t_ref, &pieces.lambda, &mut out),
        Err(e) => {
            out.push(Check::skipped("tv-submultiplicative", e.to_string()));
            out.push(Check::skipped("tv-spectral-floor", e.to_string()));
        }
    }
    run_constant_comparisons(chain, pieces, &mut out);
    run_semigroup_checks(chain, pieces, config.seed, &mut out);
    run_herbst_check(chain, pieces, &mut out);
    run_chain_rule_check(chain, pieces, config.seed, &mut out);
    run_certificate_check(model, pieces, &mut out);
    run_balance_check(chain, &mut out);
    run_cutoff_checks(chain, model, pieces, &start, &mut out);
    out
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_float(v),
        None => "null".to_string(),
    }
}

/// Renders the analysis report with a fixed key order and 17
/// significant digits so reruns are byte-identical.
pub fn render_report(
    config: &Config,
    model: &Model,
    pieces: &Pieces,
    checks: &[Check],
) -> CliResult<String> {
    let chain = &model.chain;
    let metric = pieces.metric.as_ref().map_err(Clone::clone)?;
    let lambda = *pieces.lambda.as_ref().map_err(Clone::clone)?;
    let gamma = *pieces.gamma.as_ref().map_err(Clone::clone)?;
    let rep = pieces.curvature.as_ref().map_err(Clone::clone)?;
    let alpha_upper = pieces.alpha_upper.as_ref().map_err(Clone::clone)?;
    let beta_upper = pieces.beta_upper.as_ref().map_err(Clone::clone)?;
    let diag = pieces.width.as_ref().map_err(Clone::clone)?;
    let model_json = serde_json::to_string(&config.model_echo)
        .map_err(|e| input(format!("cannot serialize model echo: {e}")))?;
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str(&format!("  \"model\": {model_json},\n"));
    s.push_str(&format!("  \"n\": {},\n", chain.n()));
    s.push_str(&format!("  \"pi_min\": {},\n", fmt_float(chain.pi_min())));
    s.push_str(&format!("  \"diameter\": {},\n", metric.diameter()));
    s.push_str(&format!("  \"d_sparsity\": {},\n", fmt_float(metric.d_sparsity())));
    s.push_str(&format!("  \"lambda\": {},\n", fmt_float(lambda)));
    s.push_str(&format!("  \"gamma\": {},\n", fmt_float(gamma)));
    s.push_str(&format!(
        "  \"alpha_bracket\": {{\"lower\": {}, \"upper\": {}}},\n",
        fmt_opt(pieces.alpha_lower),
        fmt_float(alpha_upper.upper)
    ));
    s.push_str(&format!(
        "  \"beta_bracket\": {{\"lower\": {}, \"upper\": {}}},\n",
        fmt_opt(pieces.beta_lower),
        fmt_float(beta_upper.upper)
    ));
    s.push_str(&format!("  \"kappa1\": {},\n", fmt_float(rep.kappa1)));
    s.push_str(&format!(
        "  \"sectional_nonneg\": {{\"forward\": {}, \"adjoint\": {}}},\n",
        rep.sectional_nonneg, rep.sectional_nonneg_adjoint
    ));
    s.push_str(&format!("  \"rho\": {},\n", fmt_float(rep.rho)));
    s.push_str("  \"t_mix\": [");
    for (i, (eps, t)) in diag.t_mix_table.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&format!(
            "{{\"epsilon\": {}, \"t\": {}}}",
            fmt_float(*eps),
            fmt_float(*t)
        ));
    }
    s.push_str("],\n");
    s.push_str(&format!("  \"w_mix\": {},\n", fmt_float(diag.width)));
    s.push_str(&format!("  \"v_eps\": {},\n", fmt_float(diag.varentropy_correction)));
    s.push_str(&format!(
        "  \"criterion_ratio\": {},\n",
        fmt_float(diag.criterion_ratio)
    ));
    s.push_str(&format!(
        "  \"product_condition\": {},\n",
        fmt_float(diag.product_condition)
    ));
    s.push_str("  \"inequality_checks\": {");
    let mut first = true;
    for check in checks {
        let (holds, slack) = match check.outcome {
            CheckOutcome::Pass { slack } => (true, slack),
            CheckOutcome::Fail { slack } => (false, slack),
            CheckOutcome::Skipped { .. } => continue,
        };
        if !first {
            s.push_str(", ");
        }
        first = false;
        s.push_str(&format!(
            "\"{}\": {{\"holds\": {holds}, \"slack\": {}}}",
            check.name,
            fmt_float(slack)
        ));
    }
    s.push_str("}\n");
    s.push_str("}\n");
    Ok(s)
}

/// Full analysis: builds the model, computes every report field, runs
/// the battery, and writes the JSON report.
pub fn cmd_analyze(config_path: &Path, out_path: &Path) -> i32 {
    let result = (|| -> CliResult<()> {
        let config = read_config(config_path)?;
        let model = load_model(&config)?;
        let pieces = compute_pieces(&model, &config);
        let checks = run_battery(&model, &config, &pieces);
        let report = render_report(&config, &model, &pieces, &checks)?;
        std::fs::write(out_path, report)
            .map_err(|e| input(format!("cannot write {}: {e}", out_path.display())))
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("analyze: {e}");
            e.exit_code()
        }
    }
}

/// Writes the TV/entropy/varentropy/slope/roughness curve over an
/// equispaced time grid, worst case over starts unless one is pinned.
pub fn cmd_profile(config_path: &Path, t0: f64, t1: f64, steps: usize, out_csv: &Path) -> i32 {
    let result = (|| -> CliResult<()> {
        if !(t0.is_finite() && t1.is_finite()) || t0 < 0.0 || t0 >= t1 || steps < 2 {
            return Err(input(format!(
                "need 0 <= t0 < t1 and steps >= 2, got t0={t0}, t1={t1}, steps={steps}"
            )));
        }
        let config = read_config(config_path)?;
        let model = load_model(&config)?;
        let chain = &model.chain;
        let times: Vec<f64> = (0..steps)
            .map(|i| t0 + (t1 - t0) * i as f64 / (steps - 1) as f64)
            .collect();
        let mut csv = String::from("t,dtv,entropy,varentropy,entropy_slope,roughness\n");
        match start_density(&config, chain) {
            Some(f0) => {
                let curve = varentropy_curve(chain, &f0, &times)?;
                for i in 0..times.len() {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        fmt_float(curve.times[i]),
                        fmt_float(curve.tv[i]),
                        fmt_float(curve.entropy[i]),
                        fmt_float(curve.varentropy[i]),
                        fmt_float(curve.entropy_slope[i]),
                        fmt_float(curve.roughness[i])
                    ));
                }
            }
            None => {
                let metric = hop_metric(chain)?;
                for &t in &times {
                    let row = worst_case_profile(chain, &metric, t)?;
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        fmt_float(t),
                        fmt_float(row[0]),
                        fmt_float(row[1]),
                        fmt_float(row[2]),
                        fmt_float(row[3]),
                        fmt_float(row[4])
                    ));
                }
            }
        }
        std::fs::write(out_csv, csv)
            .map_err(|e| input(format!("cannot write {}: {e}", out_csv.display())))
    })();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("profile: {e}");
            e.exit_code()
        }
    }
}

/// Builds one family member per size and tabulates the mixing-time
/// trend; unknown families and empty size lists are input errors.
pub fn cmd_sweep(family: &str, sizes: &[usize], epsilon: f64, out_csv: &Path) -> i32 {
    let build: Box<dyn Fn(usize) -> cutofflab::Result<Chain> + Sync> = match family {
        "cycle" => Box::new(|n| build_model(&ModelSpec::Cycle { n }).map(|m| m.chain)),
        "cube" | "hypercube" => {
            Box::new(|n| build_model(&ModelSpec::Hypercube { n }).map(|m| m.chain))
        }
        other => {
            eprintln!("sweep: unknown family {other:?} (expected cycle or cube)");
            return EXIT_INPUT;
        }
    };
    if sizes.is_empty() {
        eprintln!("sweep: empty size list");
        return EXIT_INPUT;
    }
    let rows = cutoff_sweep(&build, sizes, epsilon);
    let mut csv = String::from("n,tmix_lo,tmix_hi,ratio,product_condition,criterion_ratio\n");
    let mut wrote = 0usize;
    for (size, row) in &rows {
        match row {
            Ok(r) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.n,
                    fmt_float(r.tmix_lo),
                    fmt_float(r.tmix_hi),
                    fmt_float(r.ratio),
                    fmt_float(r.product_condition),
                    fmt_float(r.criterion_ratio)
                ));
                wrote += 1;
            }
            Err(e) => eprintln!("sweep: size {size} failed: {e}"),
        }
    }
    if wrote == 0 {
        eprintln!("sweep: no size succeeded");
        return EXIT_INPUT;
    }
    match std::fs::write(out_csv, csv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sweep: cannot write {}: {e}", out_csv.display());
            EXIT_INPUT
        }
    }
}

/// Runs the verification battery and prints one line per check; exit 0
/// iff nothing failed (skipped checks do not fail the run).
pub fn cmd_verify(config_path: &Path) -> i32 {
    let loaded = (|| -> CliResult<(Config, Model)> {
        let config = read_config(config_path)?;
        let model = load_model(&config)?;
        Ok((config, model))
    })();
    let (config, model) = match loaded {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("verify: {e}");
            return e.exit_code();
        }
    };
    let pieces = compute_pieces(&model, &config);
    let checks = run_battery(&model, &config, &pieces);
    let mut failed = false;
    for check in &checks {
        match &check.outcome {
            CheckOutcome::Pass { slack } => {
                println!("{} PASS slack={}", check.name, fmt_float(*slack));
            }
            CheckOutcome::Fail { slack } => {
                failed = true;
                println!("{} FAIL slack={}", check.name, fmt_float(*slack));
            }
            CheckOutcome::Skipped { reason } => {
                println!("{} SKIPPED ({reason})", check.name);
            }
        }
    }
    if failed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}
