//! Concrete model constructors: cycles, hypercubes, Cayley walks on
//! finite abelian groups, rank-one kernels, single-site spin samplers
//! (Ising and hardcore), mean-field zero-range, simple exclusion, and
//! matrices loaded from files, together with closed-form reference
//! constants and limiting mixing profiles where known.

use crate::chain::{build_chain, Chain, TransitionMatrix};
use crate::curvature::{zero_range_certificates, GlauberData, GroupWalkData};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, KahanSum};
use crate::rng;
use rand::seq::index::sample;
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;

/// Cap on the number of single-site coordinates (spin models, hypercube).
pub const SITES_CAP: usize = 16;
/// Cap on the enumerated state-space size of any constructed model.
pub const STATE_CAP: usize = 200_000;

/// Group multiplication tables are materialized only up to this order;
/// larger groups still build and carry their analytic certificates.
const GROUP_TABLE_CAP: usize = 1024;

/// Single-site flip-rate rules. Each prescribes the flip rate as a
/// function of the target/current stationary-weight ratio; all three are
/// reversible by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRule {
    Gibbs,
    Metropolis,
    Sqrt,
}

impl RateRule {
    fn apply(self, ratio: f64) -> f64 {
        match self {
            RateRule::Gibbs => ratio / (1.0 + ratio),
            RateRule::Metropolis => ratio.min(1.0),
            RateRule::Sqrt => ratio.sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateRule::Gibbs => "gibbs",
            RateRule::Metropolis => "metropolis",
            RateRule::Sqrt => "sqrt",
        }
    }
}

/// A validated model description. Parsed from the JSON document
/// {"kind": "...", "params": {...}, "seed": int}.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Cycle {
        n: usize,
    },
    Hypercube {
        n: usize,
    },
    AbelianCayley {
        moduli: Vec<u32>,
        generators: Vec<Vec<u32>>,
    },
    RandomCayley {
        moduli: Vec<u32>,
        count: usize,
        seed: u64,
    },
    RankOne {
        pi: Vec<f64>,
    },
    GlauberIsing {
        n: usize,
        beta: f64,
        edges: Vec<(u32, u32)>,
        complete: bool,
        rate_rule: RateRule,
    },
    GlauberHardcore {
        n: usize,
        zeta: f64,
        edges: Vec<(u32, u32)>,
        rate_rule: RateRule,
    },
    ZeroRangeMf {
        sites: usize,
        particles: usize,
        rates: Vec<f64>,
    },
    Exclusion {
        n: usize,
        particles: usize,
    },
    MatrixFile {
        path: String,
    },
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Cycle { .. } => "cycle",
            ModelSpec::Hypercube { .. } => "hypercube",
            ModelSpec::AbelianCayley { .. } => "abelian_cayley",
            ModelSpec::RandomCayley { .. } => "random_cayley",
            ModelSpec::RankOne { .. } => "rank_one",
            ModelSpec::GlauberIsing { .. } => "glauber_ising",
            ModelSpec::GlauberHardcore { .. } => "glauber_hardcore",
            ModelSpec::ZeroRangeMf { .. } => "zero_range_mf",
            ModelSpec::Exclusion { .. } => "exclusion",
            ModelSpec::MatrixFile { .. } => "matrix_file",
        }
    }
}

fn inv(message: impl Into<String>) -> Error {
    Error::InvalidParameters {
        message: message.into(),
    }
}

fn req_u64(params: &Map<String, Value>, key: &str) -> Result<u64> {
    params
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| inv(format!("missing or non-integer field \"{key}\"")))
}

fn req_usize(params: &Map<String, Value>, key: &str) -> Result<usize> {
    usize::try_from(req_u64(params, key)?)
        .map_err(|_| inv(format!("field \"{key}\" does not fit in usize")))
}

fn req_f64(params: &Map<String, Value>, key: &str) -> Result<f64> {
    let v = params
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| inv(format!("missing or non-numeric field \"{key}\"")))?;
    if !v.is_finite() {
        return Err(inv(format!("field \"{key}\" must be finite")));
    }
    Ok(v)
}

fn req_f64_vec(params: &Map<String, Value>, key: &str) -> Result<Vec<f64>> {
    let arr = params
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| inv(format!("missing or non-array field \"{key}\"")))?;
    arr.iter()
        .map(|v| {
            let x = v
                .as_f64()
                .ok_or_else(|| inv(format!("non-numeric entry in \"{key}\"")))?;
            if !x.is_finite() {
                return Err(inv(format!("non-finite entry in \"{key}\"")));
            }
            Ok(x)
        })
        .collect()
}

fn req_u32_vec(value: &Value, key: &str) -> Result<Vec<u32>> {
    let arr = value
        .as_array()
        .ok_or_else(|| inv(format!("entries of \"{key}\" must be arrays")))?;
    arr.iter()
        .map(|v| {
            v.as_u64()
                .and_then(|x| u32::try_from(x).ok())
                .ok_or_else(|| inv(format!("non-integer entry in \"{key}\"")))
        })
        .collect()
}

fn req_edges(params: &Map<String, Value>, key: &str, n: usize) -> Result<Vec<(u32, u32)>> {
    let arr = params
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| inv(format!("missing or non-array field \"{key}\"")))?;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(arr.len());
    for e in arr {
        let pair = req_u32_vec(e, key)?;
        if pair.len() != 2 {
            return Err(inv("each edge must be a pair of vertex indices"));
        }
        let (a, b) = (pair[0], pair[1]);
        if a == b || a as usize >= n || b as usize >= n {
            return Err(inv(format!("edge ({a}, {b}) is not a valid pair below {n}")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(inv(format!("duplicate edge ({a}, {b})")));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn rate_rule(params: &Map<String, Value>) -> Result<RateRule> {
    match params.get("rate_rule") {
        None => Ok(RateRule::Gibbs),
        Some(v) => match v.as_str() {
            Some("gibbs") => Ok(RateRule::Gibbs),
            Some("metropolis") => Ok(RateRule::Metropolis),
            Some("sqrt") => Ok(RateRule::Sqrt),
            _ => Err(inv("rate_rule must be one of gibbs, metropolis, sqrt")),
        },
    }
}

fn validated_moduli(params: &Map<String, Value>) -> Result<(Vec<u32>, usize)> {
    let raw = params
        .get("moduli")
        .ok_or_else(|| inv("missing field \"moduli\""))?;
    let moduli = req_u32_vec(raw, "moduli")?;
    if moduli.is_empty() {
        return Err(inv("moduli must be nonempty"));
    }
    let mut order: u128 = 1;
    for &m in &moduli {
        if m < 2 {
            return Err(inv("each modulus must be at least 2"));
        }
        order = order.saturating_mul(m as u128);
        if order > STATE_CAP as u128 {
            return Err(Error::TooLarge {
                requested: order.min(usize::MAX as u128) as usize,
                cap: STATE_CAP,
            });
        }
    }
    Ok((moduli, order as usize))
}

fn binomial_count(n: u64, k: u64) -> Result<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > STATE_CAP as u128 {
            return Err(Error::TooLarge {
                requested: acc.min(usize::MAX as u128) as usize,
                cap: STATE_CAP,
            });
        }
    }
    Ok(acc as usize)
}

/// Parses and validates a model description from its JSON document.
/// Performs no filesystem access and never panics on malformed input.
pub fn parse_model_spec(json: &str) -> Result<ModelSpec> {
    let v: Value = serde_json::from_str(json)
        .map_err(|e| inv(format!("malformed model JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| inv("model document must be a JSON object"))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| inv("missing string field \"kind\""))?;
    let empty = Map::new();
    let params = match obj.get("params") {
        None => &empty,
        Some(p) => p
            .as_object()
            .ok_or_else(|| inv("\"params\" must be an object"))?,
    };
    let seed = match obj.get("seed") {
        None => 0,
        Some(s) => s
            .as_u64()
            .ok_or_else(|| inv("\"seed\" must be a nonnegative integer"))?,
    };
    match kind {
        "cycle" => {
            let n = req_usize(params, "n")?;
            if n < 2 || n > STATE_CAP {
                return Err(inv("cycle length must lie in [2, state cap]"));
            }
            Ok(ModelSpec::Cycle { n })
        }
        "hypercube" => {
            let n = req_usize(params, "n")?;
            if n == 0 || n > SITES_CAP {
                return Err(inv(format!("hypercube dimension must lie in [1, {SITES_CAP}]")));
            }
            Ok(ModelSpec::Hypercube { n })
        }
        "abelian_cayley" => {
            let (moduli, _) = validated_moduli(params)?;
            let raw = params
                .get("generators")
                .and_then(Value::as_array)
                .ok_or_else(|| inv("missing or non-array field \"generators\""))?;
            if raw.is_empty() {
                return Err(inv("generators must be nonempty"));
            }
            let mut generators = Vec::with_capacity(raw.len());
            for g in raw {
                let mut v = req_u32_vec(g, "generators")?;
                if v.len() != moduli.len() {
                    return Err(inv("each generator must have one entry per modulus"));
                }
                for (x, &m) in v.iter_mut().zip(&moduli) {
                    *x %= m;
                }
                if v.iter().all(|&x| x == 0) {
                    return Err(inv("generators must differ from the identity"));
                }
                generators.push(v);
            }
            Ok(ModelSpec::AbelianCayley { moduli, generators })
        }
        "random_cayley" => {
            let (moduli, order) = validated_moduli(params)?;
            let count = req_usize(params, "count")?;
            if count == 0 || count >= order {
                return Err(inv("generator count must lie in [1, order - 1]"));
            }
            Ok(ModelSpec::RandomCayley { moduli, count, seed })
        }
        "rank_one" => {
            let pi = req_f64_vec(params, "pi")?;
            if pi.len() < 2 || pi.len() > STATE_CAP {
                return Err(inv("pi must have between 2 and state-cap entries"));
            }
            if pi.iter().any(|&p| p <= 0.0) {
                return Err(inv("pi entries must be strictly positive"));
            }
            Ok(ModelSpec::RankOne { pi })
        }
        "glauber_ising" => {
            let n = req_usize(params, "n")?;
            if n == 0 || n > SITES_CAP {
                return Err(inv(format!("site count must lie in [1, {SITES_CAP}]")));
            }
            let beta = req_f64(params, "beta")?;
            if beta < 0.0 {
                return Err(inv("beta must be nonnegative"));
            }
            let complete = params
                .get("complete")
                .map(|v| v.as_bool().ok_or_else(|| inv("\"complete\" must be a boolean")))
                .transpose()?
                .unwrap_or(false);
            let edges = if complete {
                if params.contains_key("edges") {
                    return Err(inv("give either \"edges\" or \"complete\", not both"));
                }
                Vec::new()
            } else if params.contains_key("edges") {
                req_edges(params, "edges", n)?
            } else {
                Vec::new()
            };
            Ok(ModelSpec::GlauberIsing {
                n,
                beta,
                edges,
                complete,
                rate_rule: rate_rule(params)?,
            })
        }
        "glauber_hardcore" => {
            let n = req_usize(params, "n")?;
            if n == 0 || n > SITES_CAP {
                return Err(inv(format!("site count must lie in [1, {SITES_CAP}]")));
            }
            let zeta = req_f64(params, "zeta")?;
            if zeta <= 0.0 {
                return Err(inv("zeta must be strictly positive"));
            }
            Ok(ModelSpec::GlauberHardcore {
                n,
                zeta,
                edges: req_edges(params, "edges", n)?,
                rate_rule: rate_rule(params)?,
            })
        }
        "zero_range_mf" => {
            let sites = req_usize(params, "sites")?;
            let particles = req_usize(params, "particles")?;
            if sites < 2 {
                return Err(inv("zero-range needs at least 2 sites"));
            }
            if particles == 0 {
                return Err(inv("zero-range needs at least 1 particle"));
            }
            binomial_count((sites + particles - 1) as u64, (sites - 1) as u64)?;
            let rates = req_f64_vec(params, "rates")?;
            if rates.len() < particles {
                return Err(inv("rates must list a value for every occupancy up to the particle count"));
            }
            if rates.iter().any(|&r| r <= 0.0) {
                return Err(inv("jump rates must be strictly positive"));
            }
            Ok(ModelSpec::ZeroRangeMf {
                sites,
                particles,
                rates,
            })
        }
        "exclusion" => {
            let n = req_usize(params, "n")?;
            let particles = req_usize(params, "particles")?;
            if n < 2 || n > STATE_CAP {
                return Err(inv("ring length must lie in [2, state cap]"));
            }
            if particles == 0 || particles >= n {
                return Err(inv("particle count must lie strictly between 0 and the ring length"));
            }
            binomial_count(n as u64, particles as u64)?;
            Ok(ModelSpec::Exclusion { n, particles })
        }
        "matrix_file" => {
            let path = params
                .get("path")
                .and_then(Value::as_str)
                .ok_or_else(|| inv("missing string field \"path\""))?;
            if path.is_empty() {
                return Err(inv("path must be nonempty"));
            }
            Ok(ModelSpec::MatrixFile {
                path: path.to_string(),
            })
        }
        other => Err(inv(format!("unknown model kind \"{other}\""))),
    }
}

/// Single-site sampler handle: the flip table with raw rates, the
/// uniform normalization constant, and the declared stationary law.
#[derive(Debug, Clone)]
pub struct GlauberHandle {
    pub data: GlauberData,
    pub pi: Vec<f64>,
}

/// Exclusion-process handle: the single-particle jump kernel, the
/// enumerated configurations as bitmasks, and the normalization.
#[derive(Debug, Clone)]
pub struct ExclusionHandle {
    pub sites: usize,
    pub particles: usize,
    pub kernel: Vec<Vec<f64>>,
    pub configs: Vec<u32>,
    pub normalization: f64,
}

/// Zero-range handle: occupancy-dependent rates, the enumerated
/// occupation vectors, the normalization, and the smallest rate
/// increment (feeding the curvature certificate).
#[derive(Debug, Clone)]
pub struct ZeroRangeHandle {
    pub sites: usize,
    pub particles: usize,
    pub rates: Vec<f64>,
    pub configs: Vec<Vec<u16>>,
    pub normalization: f64,
    pub min_increment: f64,
}

/// Extra structure a model carries beyond its transition matrix.
#[derive(Debug, Clone)]
pub enum ModelStructure {
    Plain,
    Group(GroupWalkData),
    Glauber(GlauberHandle),
    Exclusion(ExclusionHandle),
    ZeroRange(ZeroRangeHandle),
}

/// A built model: the chain, any structural handle, and analytic
/// curvature certificates valid for it (keys kappa1, rho, sectional).
pub struct Model {
    pub chain: Chain,
    pub structure: ModelStructure,
    pub certificates: BTreeMap<String, f64>,
}

fn element_to_vec(id: usize, moduli: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(moduli.len());
    let mut rest = id;
    for &m in moduli {
        v.push((rest % m as usize) as u32);
        rest /= m as usize;
    }
    v
}

fn vec_to_element(v: &[u32], moduli: &[u32]) -> usize {
    let mut id = 0usize;
    let mut radix = 1usize;
    for (&x, &m) in v.iter().zip(moduli) {
        id += x as usize * radix;
        radix *= m as usize;
    }
    id
}

fn negate(v: &[u32], moduli: &[u32]) -> Vec<u32> {
    v.iter()
        .zip(moduli)
        .map(|(&x, &m)| (m - x) % m)
        .collect()
}

fn add_mod(a: &[u32], b: &[u32], moduli: &[u32]) -> Vec<u32> {
    a.iter()
        .zip(b)
        .zip(moduli)
        .map(|((&x, &y), &m)| (x + y) % m)
        .collect()
}

/// Certificates valid for any walk on an abelian group: vanishing
/// sectional and entropic curvature always, upgraded to twice the
/// smallest step weight when every support element is its own inverse.
fn abelian_certificates(support: &[(Vec<u32>, f64)], moduli: &[u32]) -> BTreeMap<String, f64> {
    let mut certs = BTreeMap::new();
    certs.insert("sectional".to_string(), 0.0);
    certs.insert("rho".to_string(), 0.0);
    let self_inverse = support.iter().all(|(g, _)| negate(g, moduli) == *g);
    if self_inverse {
        let nu_star = support.iter().map(|&(_, w)| w).fold(f64::INFINITY, f64::min);
        certs.insert("rho".to_string(), 2.0 * nu_star);
        certs.insert("kappa1".to_string(), 2.0 * nu_star);
    }
    certs
}

/// Builds the walk with step law `support` on the product of cyclic
/// groups given by `moduli`.
fn build_abelian_walk(moduli: &[u32], support: Vec<(Vec<u32>, f64)>) -> Result<Model> {
    let order: usize = moduli.iter().map(|&m| m as usize).product();
    let mut triplets = Vec::with_capacity(order * support.len());
    for x in 0..order {
        let xv = element_to_vec(x, moduli);
        for (g, w) in &support {
            triplets.push((x, vec_to_element(&add_mod(&xv, g, moduli), moduli), *w));
        }
    }
    let chain = build_chain(TransitionMatrix::from_triplets(order, &triplets)?)?;
    let certificates = abelian_certificates(&support, moduli);
    let structure = if order <= GROUP_TABLE_CAP {
        let mut mul = vec![0u32; order * order];
        for a in 0..order {
            let av = element_to_vec(a, moduli);
            for b in 0..order {
                let bv = element_to_vec(b, moduli);
                mul[a * order + b] = vec_to_element(&add_mod(&av, &bv, moduli), moduli) as u32;
            }
        }
        let mut step_law = vec![0.0; order];
        for (g, w) in &support {
            step_law[vec_to_element(g, moduli)] += *w;
        }
        ModelStructure::Group(GroupWalkData {
            order,
            mul,
            step_law,
        })
    } else {
        ModelStructure::Plain
    };
    Ok(Model {
        chain,
        structure,
        certificates,
    })
}

/// Symmetrizes a generator list into a step-law support: the union of
/// the set with its inverses, each element weighted uniformly.
fn symmetrized_support(generators: &[Vec<u32>], moduli: &[u32]) -> Vec<(Vec<u32>, f64)> {
    let mut set: BTreeSet<Vec<u32>> = BTreeSet::new();
    for g in generators {
        set.insert(g.clone());
        set.insert(negate(g, moduli));
    }
    let w = 1.0 / set.len() as f64;
    set.into_iter().map(|g| (g, w)).collect()
}

fn build_glauber(
    sites: usize,
    rule: RateRule,
    log_weight: impl Fn(u32) -> f64,
) -> Result<(Chain, GlauberHandle)> {
    let full = 1usize << sites;
    let mut index = vec![u32::MAX; full];
    let mut states: Vec<u32> = Vec::new();
    let mut logw: Vec<f64> = Vec::new();
    for s in 0..full as u32 {
        let lw = log_weight(s);
        if lw.is_finite() {
            index[s as usize] = states.len() as u32;
            states.push(s);
            logw.push(lw);
        } else if !lw.is_infinite() || lw > 0.0 {
            return Err(inv("state weights must be finite or zero"));
        }
    }
    let m = states.len();
    if m < 2 {
        return Err(inv("the support must contain at least two states"));
    }
    let mut flip = vec![u32::MAX; m * sites];
    let mut rates = vec![0.0; m * sites];
    let mut c = 0.0f64;
    for (si, &s) in states.iter().enumerate() {
        let mut row = KahanSum::default();
        for i in 0..sites {
            let t = s ^ (1 << i);
            let ti = index[t as usize];
            if ti == u32::MAX {
                continue;
            }
            let rate = rule.apply((logw[ti as usize] - logw[si]).exp());
            if !rate.is_finite() {
                return Err(inv("flip rate overflow; reduce the interaction strength"));
            }
            flip[si * sites + i] = ti;
            rates[si * sites + i] = rate;
            row.add(rate);
        }
        c = c.max(row.value());
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(inv("no feasible single-site move"));
    }
    let mut triplets = Vec::new();
    for si in 0..m {
        let mut off = KahanSum::default();
        for i in 0..sites {
            let ti = flip[si * sites + i];
            let rate = rates[si * sites + i];
            if ti != u32::MAX && rate > 0.0 {
                triplets.push((si, ti as usize, rate / c));
                off.add(rate / c);
            }
        }
        let diag = 1.0 - off.value();
        if diag > 0.0 {
            triplets.push((si, si, diag));
        }
    }
    let chain = build_chain(TransitionMatrix::from_triplets(m, &triplets)?)?;
    let wmax = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = KahanSum::default();
    let weights: Vec<f64> = logw.iter().map(|&lw| (lw - wmax).exp()).collect();
    for &w in &weights {
        z.add(w);
    }
    let z = z.value();
    let pi = weights.into_iter().map(|w| w / z).collect();
    Ok((
        chain,
        GlauberHandle {
            data: GlauberData {
                sites,
                states: m,
                flip,
                rates,
                normalization: c,
                sqrt_rule: rule == RateRule::Sqrt,
            },
            pi,
        },
    ))
}

fn spin(s: u32, i: usize) -> f64 {
    if s >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn compositions(sites: usize, particles: usize) -> Vec<Vec<u16>> {
    fn rec(out: &mut Vec<Vec<u16>>, prefix: &mut Vec<u16>, left: usize, remaining: usize) {
        if left == 1 {
            prefix.push(remaining as u16);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k as u16);
            rec(out, prefix, left - 1, remaining - k);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut out, &mut Vec::new(), sites, particles);
    out
}

fn build_zero_range(sites: usize, particles: usize, rates: &[f64]) -> Result<Model> {
    let configs = compositions(sites, particles);
    let m = configs.len();
    let index: HashMap<&[u16], usize> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_slice(), i))
        .collect();
    let n = sites as f64;
    let mut c_norm = 1.0f64;
    for cfg in &configs {
        let total: f64 = cfg
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| rates[k as usize - 1])
            .sum();
        c_norm = c_norm.max(total);
    }
    let mut triplets = Vec::new();
    let mut scratch = vec![0u16; sites];
    for (xi, cfg) in configs.iter().enumerate() {
        let mut off = KahanSum::default();
        for i in 0..sites {
            if cfg[i] == 0 {
                continue;
            }
            let per_dest = rates[cfg[i] as usize - 1] / (n * c_norm);
            for j in 0..sites {
                if j == i {
                    continue;
                }
                scratch.copy_from_slice(cfg);
                scratch[i] -= 1;
                scratch[j] += 1;
                triplets.push((xi, index[scratch.as_slice()], per_dest));
                off.add(per_dest);
            }
        }
        let diag = 1.0 - off.value();
        if diag > 0.0 {
            triplets.push((xi, xi, diag));
        }
    }
    let chain = build_chain(TransitionMatrix::from_triplets(m, &triplets)?)?;
    let mut min_increment = rates[0];
    for w in rates.windows(2).take(particles.saturating_sub(1)) {
        min_increment = min_increment.min(w[1] - w[0]);
    }
    let certificates = zero_range_certificates(min_increment, sites, c_norm);
    Ok(Model {
        chain,
        structure: ModelStructure::ZeroRange(ZeroRangeHandle {
            sites,
            particles,
            rates: rates[..particles].to_vec(),
            configs,
            normalization: c_norm,
            min_increment,
        }),
        certificates,
    })
}

fn build_exclusion(n: usize, particles: usize) -> Result<Model> {
    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        kernel[i][(i + 1) % n] += 0.5;
        kernel[i][(i + n - 1) % n] += 0.5;
    }
    let mut configs: Vec<u32> = Vec::new();
    fn rec(out: &mut Vec<u32>, mask: u32, site: usize, n: usize, left: usize) {
        if n - site < left {
            return;
        }
        if site == n {
            out.push(mask);
            return;
        }
        rec(out, mask, site + 1, n, left);
        if left > 0 {
            rec(out, mask | 1 << site, site + 1, n, left - 1);
        }
    }
    rec(&mut configs, 0, 0, n, particles);
    let m = configs.len();
    let index: HashMap<u32, usize> = configs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut c_norm = 1.0f64;
    for &mask in &configs {
        let mut total = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            for (j, row) in kernel[i].iter().enumerate() {
                if *row > 0.0 && mask >> j & 1 == 0 {
                    total += row;
                }
            }
        }
        c_norm = c_norm.max(total);
    }
    let mut triplets = Vec::new();
    for (xi, &mask) in configs.iter().enumerate() {
        let mut off = KahanSum::default();
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            for (j, &g) in kernel[i].iter().enumerate() {
                if g > 0.0 && mask >> j & 1 == 0 {
                    let dest = mask & !(1 << i) | 1 << j;
                    triplets.push((xi, index[&dest], g / c_norm));
                    off.add(g / c_norm);
                }
            }
        }
        let diag = 1.0 - off.value();
        if diag > 0.0 {
            triplets.push((xi, xi, diag));
        }
    }
    let chain = build_chain(TransitionMatrix::from_triplets(m, &triplets)?)?;
    Ok(Model {
        chain,
        structure: ModelStructure::Exclusion(ExclusionHandle {
            sites: n,
            particles,
            kernel,
            configs,
            normalization: c_norm,
        }),
        certificates: BTreeMap::new(),
    })
}

/// Materializes the chain described by a validated spec, along with any
/// structural handle and analytic certificates the construction carries.
pub fn build_model(spec: &ModelSpec) -> Result<Model> {
    match spec {
        ModelSpec::Cycle { n } => {
            let moduli = vec![*n as u32];
            let support = symmetrized_support(&[vec![1]], &moduli);
            build_abelian_walk(&moduli, support)
        }
        ModelSpec::Hypercube { n } => {
            let moduli = vec![2u32; *n];
            let generators: Vec<Vec<u32>> = (0..*n)
                .map(|i| {
                    let mut g = vec![0u32; *n];
                    g[i] = 1;
                    g
                })
                .collect();
            build_abelian_walk(&moduli, symmetrized_support(&generators, &moduli))
        }
        ModelSpec::AbelianCayley { moduli, generators } => {
            build_abelian_walk(moduli, symmetrized_support(generators, moduli))
        }
        ModelSpec::RandomCayley {
            moduli,
            count,
            seed,
        } => {
            let order: usize = moduli.iter().map(|&m| m as usize).product();
            let mut stream = rng::stream(*seed, 0x4341594c);
            let ids = sample(&mut stream, order - 1, *count);
            let generators: Vec<Vec<u32>> = ids
                .iter()
                .map(|i| element_to_vec(i + 1, moduli))
                .collect();
            build_abelian_walk(moduli, symmetrized_support(&generators, moduli))
        }
        ModelSpec::RankOne { pi } => {
            let total: f64 = pi.iter().sum();
            let row: Vec<f64> = pi.iter().map(|&p| p / total).collect();
            let rows: Vec<Vec<f64>> = (0..pi.len()).map(|_| row.clone()).collect();
            let chain = build_chain(TransitionMatrix::from_dense(&rows)?)?;
            Ok(Model {
                chain,
                structure: ModelStructure::Plain,
                certificates: BTreeMap::new(),
            })
        }
        ModelSpec::GlauberIsing {
            n,
            beta,
            edges,
            complete,
            rate_rule,
        } => {
            let n = *n;
            let beta = *beta;
            let edges = edges.clone();
            let complete = *complete;
            let (chain, handle) = build_glauber(n, *rate_rule, move |s| {
                if complete {
                    let total: f64 = (0..n).map(|i| spin(s, i)).sum();
                    beta * total * total / (2.0 * n as f64)
                } else {
                    edges
                        .iter()
                        .map(|&(a, b)| beta * spin(s, a as usize) * spin(s, b as usize))
                        .sum()
                }
            })?;
            Ok(Model {
                chain,
                structure: ModelStructure::Glauber(handle),
                certificates: BTreeMap::new(),
            })
        }
        ModelSpec::GlauberHardcore {
            n,
            zeta,
            edges,
            rate_rule,
        } => {
            let log_zeta = zeta.ln();
            let edges = edges.clone();
            let (chain, handle) = build_glauber(*n, *rate_rule, move |s| {
                for &(a, b) in &edges {
                    if s >> a & 1 == 1 && s >> b & 1 == 1 {
                        return f64::NEG_INFINITY;
                    }
                }
                s.count_ones() as f64 * log_zeta
            })?;
            Ok(Model {
                chain,
                structure: ModelStructure::Glauber(handle),
                certificates: BTreeMap::new(),
            })
        }
        ModelSpec::ZeroRangeMf {
            sites,
            particles,
            rates,
        } => build_zero_range(*sites, *particles, rates),
        ModelSpec::Exclusion { n, particles } => build_exclusion(*n, *particles),
        ModelSpec::MatrixFile { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| inv(format!("cannot read {path}: {e}")))?;
            let chain = build_chain(TransitionMatrix::parse(&text)?)?;
            Ok(Model {
                chain,
                structure: ModelStructure::Plain,
                certificates: BTreeMap::new(),
            })
        }
    }
}

/// Exactly known constants for a model, keyed by name (lambda, gamma,
/// alpha, beta, kappa1, rho, diam, d, alpha_lower, alpha_upper).
#[derive(Debug, Clone)]
pub struct ReferenceValues {
    pub constants: BTreeMap<String, f64>,
}

/// Closed-form constants for the kinds that have them.
pub fn reference_values(spec: &ModelSpec) -> Result<ReferenceValues> {
    let mut constants = BTreeMap::new();
    match spec {
        ModelSpec::Cycle { n } => {
            let n = *n;
            let gap = 1.0 - (2.0 * PI / n as f64).cos();
            constants.insert("lambda".into(), gap);
            constants.insert("gamma".into(), gap);
            constants.insert("diam".into(), (n / 2) as f64);
            constants.insert("d".into(), if n == 2 { 1.0 } else { 2.0 });
            if n % 2 == 0 {
                constants.insert("alpha".into(), 2.0 * gap);
                constants.insert("beta".into(), gap / 2.0);
            }
            if n >= 6 {
                constants.insert("kappa1".into(), 0.0);
            }
        }
        ModelSpec::Hypercube { n } => {
            let n = *n as f64;
            constants.insert("lambda".into(), 2.0 / n);
            constants.insert("gamma".into(), 2.0 / n);
            constants.insert("alpha".into(), 4.0 / n);
            constants.insert("beta".into(), 1.0 / n);
            constants.insert("kappa1".into(), 2.0 / n);
            constants.insert("rho".into(), 2.0 / n);
            constants.insert("diam".into(), n);
            constants.insert("d".into(), n);
        }
        ModelSpec::RankOne { pi } => {
            let total: f64 = pi.iter().sum();
            let p_star = pi.iter().cloned().fold(f64::INFINITY, f64::min) / total;
            constants.insert("lambda".into(), 1.0);
            constants.insert("gamma".into(), 1.0);
            constants.insert("kappa1".into(), 1.0);
            constants.insert("alpha_lower".into(), 1.0);
            constants.insert("alpha_upper".into(), 2.0);
            constants.insert("rho".into(), 0.5 + p_star / (1.0 + p_star));
            constants.insert("diam".into(), 1.0);
            constants.insert("d".into(), 1.0 / p_star);
        }
        other => {
            return Err(Error::NoKnownValues {
                kind: other.kind_name().to_string(),
            })
        }
    }
    Ok(ReferenceValues { constants })
}

/// Exact worst-case TV distance to equilibrium for the single-flip walk
/// on n coordinates at time t, as a binomial sum in the log domain; n
/// may be large since no state enumeration is involved.
pub fn cube_exact_tv(n: usize, t: f64) -> f64 {
    let t = t.max(0.0);
    let nf = n as f64;
    let u = (-2.0 * t / nf).exp();
    let lp = (1.0 + u).ln();
    let lm = (1.0 - u).ln();
    let ln2 = std::f64::consts::LN_2;
    let lgn = statrs::function::gamma::ln_gamma(nf + 1.0);
    let mut acc = KahanSum::default();
    for k in 0..=n {
        let kf = k as f64;
        let a = (nf - kf) * lp + if k == 0 { 0.0 } else { kf * lm };
        if a >= 0.0 {
            continue;
        }
        let ln_c = lgn
            - statrs::function::gamma::ln_gamma(kf + 1.0)
            - statrs::function::gamma::ln_gamma(nf - kf + 1.0);
        acc.add((ln_c - nf * ln2).exp() * (-a.exp_m1()));
    }
    acc.value().clamp(0.0, 1.0)
}

/// Limiting mixing profile of the coordinate-flip walk inside its
/// window: F(s) = erf(e^{-2s} / (2 sqrt 2)).
#[allow(non_snake_case)]
pub fn cube_profile_F(s: f64) -> f64 {
    statrs::function::erf::erf((-2.0 * s).exp() / (2.0 * 2.0f64.sqrt()))
}

fn wrapped_gaussian(z: f64, t: f64) -> f64 {
    let radius = (2.0 * t * 37.0).sqrt();
    let lo = (z - radius).floor() as i64;
    let hi = (z + radius).ceil() as i64;
    let mut acc = KahanSum::default();
    for k in lo..=hi {
        let d = z - k as f64;
        acc.add((-d * d / (2.0 * t)).exp());
    }
    acc.value() / (2.0 * PI * t).sqrt()
}

/// Limiting TV profile of the nearest-neighbour ring walk in diffusive
/// time units: the positive part of one minus the wrapped heat kernel,
/// integrated over the unit circle.
#[allow(non_snake_case)]
pub fn cycle_profile_F(t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::NonpositiveTime { t });
    }
    let value = adaptive_simpson(
        &|z| (1.0 - wrapped_gaussian(z, t)).max(0.0),
        0.0,
        1.0,
        1e-9,
    );
    Ok(value.clamp(0.0, 1.0))
}

/// Varentropy of the coordinate-flip walk started from a corner, exact
/// for every n and t by coordinate additivity; +infinity at t = 0.
pub fn cube_varentropy_closed_form(n: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let e = (-2.0 * t / nf).exp();
    nf / 4.0 * (1.0 - e * e) * ((1.0 + e) / (1.0 - e)).ln().powi(2)
}

/// The standard small-instance catalog exercised by the verification
/// battery: every kind except matrix_file, at sizes where every
/// diagnostic completes quickly.
pub fn standard_catalog() -> Vec<(String, ModelSpec)> {
    let path_edges = vec![(0, 1), (1, 2), (2, 3)];
    vec![
        ("cycle-12".into(), ModelSpec::Cycle { n: 12 }),
        ("cycle-9".into(), ModelSpec::Cycle { n: 9 }),
        ("cycle-64".into(), ModelSpec::Cycle { n: 64 }),
        ("hypercube-6".into(), ModelSpec::Hypercube { n: 6 }),
        ("hypercube-8".into(), ModelSpec::Hypercube { n: 8 }),
        (
            "abelian-cayley-z36".into(),
            ModelSpec::AbelianCayley {
                moduli: vec![36],
                generators: vec![vec![1], vec![6]],
            },
        ),
        (
            "random-cayley-z2x7".into(),
            ModelSpec::RandomCayley {
                moduli: vec![2; 7],
                count: 9,
                seed: 11,
            },
        ),
        (
            "rank-one-6".into(),
            ModelSpec::RankOne {
                pi: vec![0.1, 0.12, 0.15, 0.18, 0.2, 0.25],
            },
        ),
        (
            "ising-path4-gibbs".into(),
            ModelSpec::GlauberIsing {
                n: 4,
                beta: 0.05,
                edges: path_edges.clone(),
                complete: false,
                rate_rule: RateRule::Gibbs,
            },
        ),
        (
            "ising-path4-sqrt".into(),
            ModelSpec::GlauberIsing {
                n: 4,
                beta: 0.05,
                edges: path_edges.clone(),
                complete: false,
                rate_rule: RateRule::Sqrt,
            },
        ),
        (
            "curie-weiss-5".into(),
            ModelSpec::GlauberIsing {
                n: 5,
                beta: 0.4,
                edges: Vec::new(),
                complete: true,
                rate_rule: RateRule::Gibbs,
            },
        ),
        (
            "hardcore-path4".into(),
            ModelSpec::GlauberHardcore {
                n: 4,
                zeta: 0.4,
                edges: path_edges,
                rate_rule: RateRule::Gibbs,
            },
        ),
        (
            "zero-range-3x4".into(),
            ModelSpec::ZeroRangeMf {
                sites: 3,
                particles: 4,
                rates: vec![1.0, 2.0, 3.0, 4.0],
            },
        ),
        (
            "exclusion-6-3".into(),
            ModelSpec::Exclusion { n: 6, particles: 3 },
        ),
    ]
}
