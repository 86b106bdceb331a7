//! Finite Markov chains in continuous time: sparse transition matrices,
//! stationary laws, adjoints, rank-one perturbations, the uniformized
//! semigroup, and the Dirichlet / carré-du-champ calculus.

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

/// Dense eigenvalue / direct-solve routines refuse above this state count.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Matrix files may not address states at or beyond this index.
pub const MAX_FILE_STATES: usize = 1 << 20;

const ROW_SUM_TOL: f64 = 1e-9;
const REVERSIBILITY_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const POWER_ITERATION_TOL: f64 = 1e-13;
const UNIFORMIZATION_TAIL: f64 = 1e-14;

/// Row-stochastic sparse matrix in CSR form. Rows are normalized on
/// construction, so stored row sums are exact to machine precision.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from `(row, col, prob)` triplets. Duplicate coordinates are
    /// summed. Each row must sum to 1 within 1e-9 and is then renormalized.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameters {
                message: "state count must be positive".into(),
            });
        }
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::InvalidParameters {
                    message: format!("entry ({r}, {c}) outside the {n}-state space"),
                });
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameters {
                    message: format!("entry ({r}, {c}) has inadmissible probability {v}"),
                });
            }
            per_row[r].push((c as u32, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (r, row) in per_row.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut sum = KahanSum::default();
            for &(_, v) in row.iter() {
                sum.add(v);
            }
            let sum = sum.value();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSumError { row: r, sum });
            }
            let mut last: Option<u32> = None;
            for &(c, v) in row.iter() {
                let v = v / sum;
                if v == 0.0 {
                    continue;
                }
                if last == Some(c) {
                    let k = vals.len() - 1;
                    vals[k] += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { n, row_ptr, cols, vals })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameters {
                    message: format!("row {r} has length {}, expected {n}", row.len()),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    /// Parses the text format: one `row col prob` triplet per line,
    /// whitespace-separated and 0-indexed; `#` starts a comment. The state
    /// count is one more than the largest index mentioned.
    pub fn parse(text: &str) -> Result<Self> {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut max_index = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse_idx = |field: Option<&str>, what: &str| -> Result<usize> {
                let s = field.ok_or(Error::MatrixParse {
                    line: lineno + 1,
                    message: format!("missing {what}"),
                })?;
                let v: usize = s.parse().map_err(|_| Error::MatrixParse {
                    line: lineno + 1,
                    message: format!("unreadable {what} {s:?}"),
                })?;
                Ok(v)
            };
            let r = parse_idx(fields.next(), "row index")?;
            let c = parse_idx(fields.next(), "column index")?;
            let p_str = fields.next().ok_or(Error::MatrixParse {
                line: lineno + 1,
                message: "missing probability".into(),
            })?;
            let p: f64 = p_str.parse().map_err(|_| Error::MatrixParse {
                line: lineno + 1,
                message: format!("unreadable probability {p_str:?}"),
            })?;
            if fields.next().is_some() {
                return Err(Error::MatrixParse {
                    line: lineno + 1,
                    message: "trailing fields after triplet".into(),
                });
            }
            if r >= MAX_FILE_STATES || c >= MAX_FILE_STATES {
                return Err(Error::TooLarge {
                    requested: r.max(c) + 1,
                    cap: MAX_FILE_STATES,
                });
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::MatrixParse {
                    line: lineno + 1,
                    message: format!("inadmissible probability {p}"),
                });
            }
            max_index = max_index.max(r).max(c);
            triplets.push((r, c, p));
        }
        if triplets.is_empty() {
            return Err(Error::InvalidParameters {
                message: "matrix file contains no entries".into(),
            });
        }
        Self::from_triplets(max_index + 1, &triplets)
    }

    /// CSR from pre-sorted rows that are already known stochastic; used for
    /// derived matrices (adjoints, lazifications) whose row sums are exact
    /// by construction up to roundoff.
    fn from_rows_unchecked(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, x: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[x];
        let hi = self.row_ptr[x + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        let (cols, vals) = self.row(x);
        match cols.binary_search(&(y as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `out = M v` (rows act on `v`).
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for x in 0..self.n {
            let (cols, vals) = self.row(x);
            let mut acc = 0.0;
            for (c, p) in cols.iter().zip(vals) {
                acc += p * v[*c as usize];
            }
            out[x] = acc;
        }
    }

    /// `out = μ M` (left action on a measure).
    pub fn left_mul(&self, mu: &[f64], out: &mut [f64]) {
        debug_assert_eq!(mu.len(), self.n);
        out.fill(0.0);
        for x in 0..self.n {
            let m = mu[x];
            if m == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(x);
            for (c, p) in cols.iter().zip(vals) {
                out[*c as usize] += m * p;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for x in 0..self.n {
            let (cols, vals) = self.row(x);
            for (c, p) in cols.iter().zip(vals) {
                a[(x, *c as usize)] = *p;
            }
        }
        a
    }

    fn out_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for x in 0..self.n {
            let (cols, _) = self.row(x);
            adj[x] = cols.to_vec();
        }
        adj
    }

    fn in_neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for x in 0..self.n {
            let (cols, _) = self.row(x);
            for c in cols {
                adj[*c as usize].push(x as u32);
            }
        }
        adj
    }
}

/// A validated chain: transition matrix, stationary law, adjoint, and the
/// reversibility tag. Immutable after construction; safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct Chain {
    t: TransitionMatrix,
    adjoint: TransitionMatrix,
    pi: Vec<f64>,
    pi_min: f64,
    reversible: bool,
    dense_cap: usize,
}

impl Chain {
    pub fn n(&self) -> usize {
        self.t.n()
    }

    pub fn t(&self) -> &TransitionMatrix {
        &self.t
    }

    pub fn adjoint(&self) -> &TransitionMatrix {
        &self.adjoint
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_min(&self) -> f64 {
        self.pi_min
    }

    pub fn reversible(&self) -> bool {
        self.reversible
    }

    pub fn dense_cap(&self) -> usize {
        self.dense_cap
    }

    /// `E_pi[f]`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        let mut s = KahanSum::default();
        for (p, v) in self.pi.iter().zip(f) {
            s.add(p * v);
        }
        s.value()
    }

    /// `<f, g>_pi`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut s = KahanSum::default();
        for ((p, a), b) in self.pi.iter().zip(f).zip(g) {
            s.add(p * a * b);
        }
        s.value()
    }

    /// `Lf = Tf - f`.
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.t.matvec(f, &mut out);
        for (o, v) in out.iter_mut().zip(f) {
            *o -= v;
        }
        out
    }

    /// `L*f = T*f - f`.
    pub fn apply_adjoint_generator(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.adjoint.matvec(f, &mut out);
        for (o, v) in out.iter_mut().zip(f) {
            *o -= v;
        }
        out
    }
}

/// Validates `T` (row sums, irreducibility), solves the stationary law,
/// builds the adjoint, and tags reversibility.
pub fn build_chain(t: TransitionMatrix) -> Result<Chain> {
    build_chain_with_cap(t, DEFAULT_DENSE_CAP)
}

/// As [`build_chain`], with an explicit cap on dense direct solves. Above the
/// cap the stationary law comes from power iteration on the lazy chain.
pub fn build_chain_with_cap(t: TransitionMatrix, dense_cap: usize) -> Result<Chain> {
    let n = t.n();
    check_irreducible(&t)?;
    let pi = if n <= dense_cap {
        stationary_direct(&t)?
    } else {
        stationary_power(&t)?
    };
    let mut pi_min = f64::INFINITY;
    for &p in &pi {
        if !(p > 0.0) {
            return Err(Error::Numeric {
                message: "stationary solve produced a nonpositive mass".into(),
            });
        }
        pi_min = pi_min.min(p);
    }
    // pi T = pi within 1e-10 per coordinate.
    let mut pit = vec![0.0; n];
    t.left_mul(&pi, &mut pit);
    for x in 0..n {
        if (pit[x] - pi[x]).abs() > STATIONARY_RESIDUAL_TOL {
            return Err(Error::Numeric {
                message: format!(
                    "stationary residual {:.3e} at state {x} exceeds 1e-10",
                    (pit[x] - pi[x]).abs()
                ),
            });
        }
    }
    let adjoint = build_adjoint(&t, &pi)?;
    let reversible = is_reversible(&t, &adjoint, &pi);
    Ok(Chain {
        t,
        adjoint,
        pi,
        pi_min,
        reversible,
        dense_cap,
    })
}

fn check_irreducible(t: &TransitionMatrix) -> Result<()> {
    let fwd = reachable_from_zero(&t.out_neighbors(), t.n());
    if let Some(x) = fwd.iter().position(|r| !r) {
        return Err(Error::NotIrreducible { witness: x });
    }
    let bwd = reachable_from_zero(&t.in_neighbors(), t.n());
    if let Some(x) = bwd.iter().position(|r| !r) {
        return Err(Error::NotIrreducible { witness: x });
    }
    Ok(())
}

fn reachable_from_zero(adj: &[Vec<u32>], n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            let y = y as usize;
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen
}

/// Bordered direct solve: replace the last stationarity equation by the
/// normalization. Dropping any single row of `T' - Id` keeps full rank for
/// an irreducible chain, so partial-pivot LU suffices.
fn stationary_direct(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = t.n();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        let (cols, vals) = t.row(x);
        for (c, p) in cols.iter().zip(vals) {
            a[(*c as usize, x)] += *p;
        }
        a[(x, x)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let sol = lu.solve(&b).ok_or(Error::Numeric {
        message: "singular bordered stationary system".into(),
    })?;
    Ok(sol.iter().copied().collect())
}

fn stationary_power(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = t.n();
    let mut mu = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let max_iters = 5_000_000usize;
    for _ in 0..max_iters {
        // One step of the lazy chain: mu (T + Id)/2.
        t.left_mul(&mu, &mut next);
        let mut delta = 0.0;
        for (nx, m) in next.iter_mut().zip(mu.iter()) {
            *nx = 0.5 * (*nx + m);
            delta += (*nx - m).abs();
        }
        std::mem::swap(&mut mu, &mut next);
        if delta < POWER_ITERATION_TOL {
            let total: f64 = mu.iter().sum();
            for m in &mut mu {
                *m /= total;
            }
            return Ok(mu);
        }
    }
    Err(Error::NotConverged {
        what: "stationary power iteration on the lazy chain".into(),
    })
}

fn build_adjoint(t: &TransitionMatrix, pi: &[f64]) -> Result<TransitionMatrix> {
    let n = t.n();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for y in 0..n {
        let (cols, vals) = t.row(y);
        for (c, p) in cols.iter().zip(vals) {
            let x = *c as usize;
            rows[x].push((y as u32, pi[y] * p / pi[x]));
        }
    }
    for (x, row) in rows.iter().enumerate() {
        let mut sum = KahanSum::default();
        for &(_, v) in row {
            sum.add(v);
        }
        if (sum.value() - 1.0).abs() > 1e-8 {
            return Err(Error::Numeric {
                message: format!("adjoint row {x} sums to {:.17e}", sum.value()),
            });
        }
    }
    Ok(TransitionMatrix::from_rows_unchecked(n, rows))
}

/// Detailed balance within 1e-12 absolute: equivalent to `T* = T` after
/// weighting by pi, checked on the union of the supports.
fn is_reversible(t: &TransitionMatrix, adjoint: &TransitionMatrix, pi: &[f64]) -> bool {
    for x in 0..t.n() {
        let (tc, tv) = t.row(x);
        let (ac, av) = adjoint.row(x);
        let mut i = 0;
        let mut j = 0;
        while i < tc.len() || j < ac.len() {
            let (tval, aval) = match (tc.get(i), ac.get(j)) {
                (Some(&c1), Some(&c2)) if c1 == c2 => {
                    let pair = (tv[i], av[j]);
                    i += 1;
                    j += 1;
                    pair
                }
                (Some(&c1), Some(&c2)) if c1 < c2 => {
                    let pair = (tv[i], 0.0);
                    i += 1;
                    pair
                }
                (Some(_), Some(_)) => {
                    let pair = (0.0, av[j]);
                    j += 1;
                    pair
                }
                (Some(_), None) => {
                    let pair = (tv[i], 0.0);
                    i += 1;
                    pair
                }
                (None, Some(_)) => {
                    let pair = (0.0, av[j]);
                    j += 1;
                    pair
                }
                (None, None) => break,
            };
            // pi(x) T(x,y) - pi(y) T(y,x) = pi(x) (T(x,y) - T*(x,y)).
            if (pi[x] * (tval - aval)).abs() > REVERSIBILITY_TOL {
                return false;
            }
        }
    }
    true
}

/// Replaces `T` by `(T + Id)/2`. The stationary law is unchanged and the
/// lazified semigroup satisfies `P^lazy_t = P_{t/2}`.
pub fn lazify(chain: &Chain) -> Chain {
    let lazy = lazify_matrix(&chain.t);
    let lazy_adj = lazify_matrix(&chain.adjoint);
    Chain {
        t: lazy,
        adjoint: lazy_adj,
        pi: chain.pi.clone(),
        pi_min: chain.pi_min,
        reversible: chain.reversible,
        dense_cap: chain.dense_cap,
    }
}

pub(crate) fn lazify_matrix(t: &TransitionMatrix) -> TransitionMatrix {
    let n = t.n();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    for x in 0..n {
        let (cols, vals) = t.row(x);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(cols.len() + 1);
        let mut has_diag = false;
        for (c, p) in cols.iter().zip(vals) {
            if *c as usize == x {
                row.push((*c, 0.5 * p + 0.5));
                has_diag = true;
            } else {
                row.push((*c, 0.5 * p));
            }
        }
        if !has_diag {
            row.push((x as u32, 0.5));
        }
        rows.push(row);
    }
    TransitionMatrix::from_rows_unchecked(n, rows)
}

/// `T~ = (1-θ) T + θ Π`, the mixture with the rank-one projector onto pi.
/// The stationary law is preserved; total-variation curves contract as
/// `d~(t) = e^{-θt} d((1-θ)t)`.
pub fn rank_one_perturb(chain: &Chain, theta: f64) -> Result<Chain> {
    if !(0.0..=1.0).contains(&theta) || !theta.is_finite() {
        return Err(Error::ThetaOutOfRange { theta });
    }
    let n = chain.n();
    let mix = |m: &TransitionMatrix| -> TransitionMatrix {
        let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        for x in 0..n {
            let mut dense = vec![0.0; n];
            for (y, p) in chain.pi.iter().enumerate() {
                dense[y] = theta * p;
            }
            let (cols, vals) = m.row(x);
            for (c, p) in cols.iter().zip(vals) {
                dense[*c as usize] += (1.0 - theta) * p;
            }
            rows.push(
                dense
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(y, v)| (y as u32, *v))
                    .collect(),
            );
        }
        TransitionMatrix::from_rows_unchecked(n, rows)
    };
    Ok(Chain {
        t: mix(&chain.t),
        adjoint: mix(&chain.adjoint),
        pi: chain.pi.clone(),
        pi_min: chain.pi_min,
        reversible: chain.reversible,
        dense_cap: chain.dense_cap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// Poisson(t) weights truncated once the neglected tail is below 1e-14,
/// then renormalized to unit sum. The cumulative-sum test alone is not a
/// safe stopping rule: rounding in the log-domain terms can leave the
/// computed total a few ulps short of 1 forever, so the right tail is also
/// cut once the terms are negligible relative to the accumulated mass.
pub(crate) fn poisson_weights(t: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(vec![1.0]);
    }
    let log_t = t.ln();
    let mut weights = Vec::new();
    let mut cum = KahanSum::default();
    let mut k = 0usize;
    loop {
        let lw = -t + (k as f64) * log_t - ln_gamma(k as f64 + 1.0);
        let w = lw.exp();
        weights.push(w);
        cum.add(w);
        if (k as f64) >= t
            && (1.0 - cum.value() < UNIFORMIZATION_TAIL || w < 1e-18 * cum.value())
        {
            break;
        }
        k += 1;
        if k > 20_000_000 {
            return Err(Error::InvalidParameters {
                message: format!("time {t} too large for uniformization"),
            });
        }
    }
    let total = cum.value();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// `P_t v` (forward) or `P*_t v` (adjoint) by uniformization:
/// `e^{-t} Σ_k (t^k / k!) M^k v` truncated at tail mass 1e-14.
pub fn semigroup_apply(chain: &Chain, v: &[f64], t: f64, direction: Direction) -> Result<Vec<f64>> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::NegativeTime { t });
    }
    let weights = poisson_weights(t)?;
    let m = match direction {
        Direction::Forward => &chain.t,
        Direction::Adjoint => &chain.adjoint,
    };
    Ok(apply_with_weights(m, v, &weights))
}

pub(crate) fn apply_with_weights(m: &TransitionMatrix, v: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = m.n();
    debug_assert_eq!(v.len(), n);
    let mut acc: Vec<f64> = v.iter().map(|x| x * weights[0]).collect();
    if weights.len() == 1 {
        return acc;
    }
    let mut cur = v.to_vec();
    let mut next = vec![0.0; n];
    for &w in &weights[1..] {
        m.matvec(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        if w != 0.0 {
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += w * c;
            }
        }
    }
    acc
}

/// A probability density relative to pi: nonnegative with unit pi-mean.
#[derive(Debug, Clone)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    pub fn new(chain: &Chain, values: Vec<f64>) -> Result<Self> {
        if values.len() != chain.n() {
            return Err(Error::InvalidParameters {
                message: format!(
                    "density has {} entries for a {}-state chain",
                    values.len(),
                    chain.n()
                ),
            });
        }
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameters {
                    message: format!("density entry {v} is not a nonnegative real"),
                });
            }
        }
        let mass = chain.expectation(&values);
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { total: mass });
        }
        Ok(Self { values })
    }

    /// The Dirac density `f^x = 1_x / pi(x)`.
    pub fn dirac(chain: &Chain, x: usize) -> Self {
        let mut values = vec![0.0; chain.n()];
        values[x] = 1.0 / chain.pi()[x];
        Self { values }
    }

    /// From a probability measure `mu`: `f = dmu/dpi`.
    pub fn from_measure(chain: &Chain, mu: &[f64]) -> Result<Self> {
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { total });
        }
        let values = mu
            .iter()
            .zip(chain.pi())
            .map(|(m, p)| m / p)
            .collect();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The measure `mu(x) = f(x) pi(x)`.
    pub fn to_measure(&self, chain: &Chain) -> Vec<f64> {
        self.values
            .iter()
            .zip(chain.pi())
            .map(|(f, p)| f * p)
            .collect()
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Evolves a density by the adjoint semigroup (the Fokker-Planck flow).
pub fn evolve_density(chain: &Chain, f: &Density, t: f64) -> Result<Density> {
    let values = semigroup_apply(chain, f.values(), t, Direction::Adjoint)?;
    Ok(Density::from_values_unchecked(values))
}

/// An observable: any real function on states.
#[derive(Debug, Clone)]
pub struct Observable {
    values: Vec<f64>,
}

impl Observable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::InvalidParameters {
                    message: format!("observable entry {v} is not finite"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// `<f, -Lg>_pi`. For reversible chains, and always when `f = g`, this
/// equals the symmetrized half-sum `½ Σ pi(x) T(x,y) (f(x)-f(y))(g(x)-g(y))`,
/// which is the better-conditioned form used in that case.
pub fn dirichlet_form(chain: &Chain, f: &[f64], g: &[f64]) -> f64 {
    if chain.reversible() || f == g {
        return dirichlet_form_symmetrized(chain, f, g);
    }
    let lg = chain.apply_generator(g);
    let mut s = KahanSum::default();
    for x in 0..chain.n() {
        s.add(-chain.pi()[x] * f[x] * lg[x]);
    }
    s.value()
}

pub fn dirichlet_form_symmetrized(chain: &Chain, f: &[f64], g: &[f64]) -> f64 {
    let mut s = KahanSum::default();
    for x in 0..chain.n() {
        let (cols, vals) = chain.t().row(x);
        let px = chain.pi()[x];
        for (c, p) in cols.iter().zip(vals) {
            let y = *c as usize;
            s.add(0.5 * px * p * (f[x] - f[y]) * (g[x] - g[y]));
        }
    }
    s.value()
}

/// `Γf(x) = ½ Σ_y T(x,y) (f(x) - f(y))²`.
pub fn carre_du_champ(chain: &Chain, f: &[f64]) -> Vec<f64> {
    let n = chain.n();
    let mut out = vec![0.0; n];
    for x in 0..n {
        let (cols, vals) = chain.t().row(x);
        let mut acc = 0.0;
        for (c, p) in cols.iter().zip(vals) {
            let d = f[x] - f[*c as usize];
            acc += p * d * d;
        }
        out[x] = 0.5 * acc;
    }
    out
}

/// Bilinear form `Γ(f,g)(x) = ½ Σ_y T(x,y)(f(x)-f(y))(g(x)-g(y))`.
pub fn carre_du_champ_bilinear(chain: &Chain, f: &[f64], g: &[f64]) -> Vec<f64> {
    let n = chain.n();
    let mut out = vec![0.0; n];
    for x in 0..n {
        let (cols, vals) = chain.t().row(x);
        let mut acc = 0.0;
        for (c, p) in cols.iter().zip(vals) {
            let y = *c as usize;
            acc += p * (f[x] - f[y]) * (g[x] - g[y]);
        }
        out[x] = 0.5 * acc;
    }
    out
}

/// `Γ₂f = ½ (L Γf - 2 Γ(f, Lf))`.
pub fn carre_du_champ_2(chain: &Chain, f: &[f64]) -> Vec<f64> {
    let gamma = carre_du_champ(chain, f);
    let l_gamma = chain.apply_generator(&gamma);
    let lf = chain.apply_generator(f);
    let cross = carre_du_champ_bilinear(chain, f, &lf);
    l_gamma
        .iter()
        .zip(&cross)
        .map(|(a, b)| 0.5 * (a - 2.0 * b))
        .collect()
}
