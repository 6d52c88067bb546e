//! Entry-wise deviations, the resampled maximum statistic and its centering,
//! the plain maximum-deviation baseline, and the disparity diagnostic.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, Membership};
use crate::sbm::BlockProbabilityMatrix;
use crate::scalar::Scalar;
use crate::seed;

/// `n × K0` matrix of standardized residual sums `ρ̂_iv`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationMatrix<T> {
    n: usize,
    k: usize,
    values: Vec<T>,
    skipped: Vec<u64>,
}

impl<T: Scalar> DeviationMatrix<T> {
    /// Builds a matrix directly from row-major values (no dropped terms).
    pub fn from_values(n: usize, k: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * k || n == 0 || k == 0 {
            return Err(Error::InvalidArgument("deviation matrix must be n × k, non-empty".into()));
        }
        Ok(Self { n, k, values, skipped: vec![0; k * k] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, v: usize) -> T {
        self.values[i * self.k + v]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Terms dropped because `Q̂_uv ∈ {0, 1}`, summed over rows in block `u`.
    pub fn skipped(&self, u: usize, v: usize) -> u64 {
        self.skipped[u * self.k + v]
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// `ρ̂_iv = Σ_{j ∈ g0⁻¹(v)∖{i}} (a_ij − Q̂) / sqrt(Q̂(1 − Q̂))`, divided by the
/// square root of the number of retained terms.
///
/// All terms of a cell share `Q̂_{g0(i) v}`; when it is 0 or 1 they are all
/// dropped and the entry is 0.
pub fn entrywise_deviations<T: Scalar>(
    a: &AdjacencyMatrix,
    g0: &Membership,
    qhat: &BlockProbabilityMatrix<T>,
) -> Result<DeviationMatrix<T>> {
    g0.check_len(a)?;
    let k = g0.k();
    if qhat.k() != k {
        return Err(Error::InvalidArgument("qhat and g0 disagree on K".into()));
    }
    let n = a.n();
    let sizes = g0.sizes();
    let mut values = vec![T::zero(); n * k];
    values.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        let u = g0.label(i);
        let mut hits = vec![0usize; k];
        for &j in a.neighbors(i) {
            hits[g0.label(j)] += 1;
        }
        for v in 0..k {
            let terms = sizes[v] - usize::from(u == v);
            let q = *qhat.get(u, v);
            row[v] = if terms == 0 || q <= T::zero() || q >= T::one() {
                T::zero()
            } else {
                let t = T::of_usize(terms);
                (T::of_usize(hits[v]) - t * q) / (t * q * (T::one() - q)).sqrt()
            };
        }
    });
    let mut skipped = vec![0u64; k * k];
    for u in 0..k {
        for v in 0..k {
            let q = *qhat.get(u, v);
            if q <= T::zero() || q >= T::one() {
                let terms = sizes[v] - usize::from(u == v);
                skipped[u * k + v] = (sizes[u] * terms) as u64;
            }
        }
    }
    Ok(DeviationMatrix { n, k, values, skipped })
}

/// `M × K0` matrix of resampled sums `ψ̂_mv = Σ_h ρ̂_{m_h v} / sqrt(B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiMatrix<T> {
    m: usize,
    k: usize,
    b: usize,
    seed: u64,
    values: Vec<T>,
}

impl<T: Scalar> PsiMatrix<T> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, m: usize, v: usize) -> T {
        self.values[m * self.k + v]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Row indices drawn (uniformly, with replacement) for cell `(m, v)`.
pub fn psi_indices(seed: u64, m: usize, v: usize, b: usize, n: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::PSI, m as u64, v as u64]));
    (0..b).map(|_| rng.random_range(0..n)).collect()
}

/// Each cell `(m, v)` draws its `B` rows from its own stream, so the first
/// `M'` rows for a given seed do not depend on `M`.
pub fn sample_psi<T: Scalar>(d: &DeviationMatrix<T>, b: usize, m: usize, seed: u64) -> Result<PsiMatrix<T>> {
    if b == 0 || m == 0 {
        return Err(Error::InvalidArgument("B and M must be at least 1".into()));
    }
    let k = d.k();
    let scale = T::of_usize(b).sqrt();
    let values: Vec<T> = (0..m * k)
        .into_par_iter()
        .map(|cell| {
            let (mm, v) = (cell / k, cell % k);
            psi_indices(seed, mm, v, b, d.n())
                .into_iter()
                .fold(T::zero(), |acc, i| acc + d.get(i, v))
                / scale
        })
        .collect();
    Ok(PsiMatrix { m, k, b, seed, values })
}

/// `Γ = max_{m,v} |ψ̂_mv|`.
pub fn gamma_max<T: Scalar>(psi: &PsiMatrix<T>) -> T {
    psi.values.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `x² − 2 log(c) + log log(c)` for a count `c` that must exceed e.
fn center<T: Scalar>(x: T, c: usize, what: &str) -> Result<T> {
    let c = T::of_usize(c);
    if c <= T::E() {
        return Err(Error::InvalidArgument(format!("{what} = {c} must exceed e")));
    }
    let l = c.ln();
    Ok(x * x - T::of_usize(2) * l + l.ln())
}

/// `Θ = Γ² − 2 log(M K0) + log log(M K0)`.
pub fn theta<T: Scalar>(gamma: T, m: usize, k0: usize) -> Result<T> {
    center(gamma, m * k0, "M·K0")
}

/// Baseline `L² − 2 log(K0 n) + log log(K0 n)` with `L = max_{i,v} |ρ̂_iv|`.
pub fn entrywise_max_statistic<T: Scalar>(d: &DeviationMatrix<T>) -> Result<T> {
    center(d.max_abs(), d.k() * d.n(), "K0·n")
}

/// Default number of resampled rows, `ceil(density^{-1/2} (n / log n)^{1/3})`.
pub fn default_b<T: Scalar>(density: T, n: usize) -> Result<usize> {
    if density <= T::zero() {
        return Err(Error::EmptyGraph);
    }
    if n < 3 {
        return Err(Error::InvalidArgument("default B needs n >= 3".into()));
    }
    let nf = T::of_usize(n);
    let b = (density.powf(T::of_f64(-0.5)) * (nf / nf.ln()).cbrt()).ceil();
    b.to_usize()
        .ok_or_else(|| Error::InvalidArgument(format!("B = {b} is not representable")))
}

/// Disparity between a true model and its block average under `g0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityVector<T> {
    /// `q_v` for each hypothesized community.
    pub qv: Vec<T>,
    /// `sqrt(B) max_v q_v / sqrt(log(M K0))`.
    pub scaled: T,
    /// The block-averaged probability matrix `Q^{g0}`.
    pub q_g0: BlockProbabilityMatrix<T>,
}

/// Averages `q_true` over the cells of `g0`.
pub fn block_average<T: Scalar>(
    q_true: &BlockProbabilityMatrix<T>,
    g_true: &Membership,
    g0: &Membership,
) -> Result<BlockProbabilityMatrix<T>> {
    let (k, k0) = (g_true.k(), g0.k());
    let overlap = overlap_counts(g_true, g0);
    let s0 = g0.sizes();
    let mut p = vec![T::zero(); k0 * k0];
    for a in 0..k0 {
        for b in 0..k0 {
            let mut sum = T::zero();
            let mut common: Option<T> = None;
            let mut uniform = true;
            for u in 0..k {
                for w in 0..k {
                    let mut pairs = overlap[a * k + u] * overlap[b * k + w];
                    if a == b && u == w {
                        pairs -= overlap[a * k + u];
                    }
                    if pairs == 0 {
                        continue;
                    }
                    let q = *q_true.get(u, w);
                    sum = sum + T::of_usize(pairs) * q;
                    match common {
                        None => common = Some(q),
                        Some(c) if c != q => uniform = false,
                        _ => {}
                    }
                }
            }
            let total = if a == b { s0[a] * (s0[a] - 1) } else { s0[a] * s0[b] };
            if total == 0 {
                return Err(Error::SingletonBlock(a));
            }
            // An average of identical values is that value; keep it exact.
            p[a * k0 + b] = match (uniform, common) {
                (true, Some(c)) => c,
                _ => sum / T::of_usize(total),
            };
        }
    }
    Ok(BlockProbabilityMatrix::from_raw(k0, p))
}

/// `overlap[a * K + u]` = number of nodes with `g0 = a` and `g = u`.
fn overlap_counts(g_true: &Membership, g0: &Membership) -> Vec<usize> {
    let k = g_true.k();
    let mut c = vec![0usize; g0.k() * k];
    for (&u, &a) in g_true.labels().iter().zip(g0.labels()) {
        c[a * k + u] += 1;
    }
    c
}

/// Disparity `q_v = Σ_{u*} (|g⁻¹(u*)| / n) q_{v u*}` and its scaled maximum.
///
/// `q_{v u*}` is evaluated once per combination of true block `u*` and
/// hypothesized block `g0(i)`; an error is returned if these disagree within
/// a true block, since the measure is then not a function of `u*` alone.
pub fn disparity<T: Scalar>(
    q_true: &BlockProbabilityMatrix<T>,
    g_true: &Membership,
    g0: &Membership,
    b: usize,
    m: usize,
) -> Result<DisparityVector<T>> {
    if g_true.n() != g0.n() {
        return Err(Error::LengthMismatch { labels: g0.n(), nodes: g_true.n() });
    }
    if q_true.k() != g_true.k() {
        return Err(Error::InvalidArgument("q_true and g_true disagree on K".into()));
    }
    let (k, k0, n) = (g_true.k(), g0.k(), g_true.n());
    let log_mk = T::of_usize(m * k0).ln();
    if log_mk <= T::zero() {
        return Err(Error::InvalidArgument("M·K0 must exceed 1".into()));
    }
    let q_g0 = block_average(q_true, g_true, g0)?;
    let overlap = overlap_counts(g_true, g0);
    let true_sizes = g_true.sizes();

    let mut qv = vec![T::zero(); k0];
    for v in 0..k0 {
        for u_star in 0..k {
            let mut value: Option<T> = None;
            for a in (0..k0).filter(|&a| overlap[a * k + u_star] > 0) {
                let p0 = *q_g0.get(a, v);
                let mut terms = 0usize;
                let mut sum = T::zero();
                for w in 0..k {
                    let cnt = overlap[v * k + w] - usize::from(v == a && w == u_star);
                    terms += cnt;
                    sum = sum + T::of_usize(cnt) * (*q_true.get(u_star, w) - p0);
                }
                let q = if terms == 0 || p0 <= T::zero() || p0 >= T::one() {
                    T::zero()
                } else {
                    (sum / (T::of_usize(terms) * p0 * (T::one() - p0)).sqrt()).abs()
                };
                match value {
                    None => value = Some(q),
                    Some(prev) => {
                        let tol = T::of_f64(1e-12) * prev.abs().max(q.abs()).max(T::one());
                        if (prev - q).abs() > tol {
                            return Err(Error::DisparityAmbiguous(format!(
                                "true block {u_star} gives {prev} and {q} for community {v}"
                            )));
                        }
                    }
                }
            }
            let weight = T::of_usize(true_sizes[u_star]) / T::of_usize(n);
            qv[v] = qv[v] + weight * value.unwrap_or(T::zero());
        }
    }
    let max_q = qv.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let scaled = T::of_usize(b).sqrt() * max_q / log_mk.sqrt();
    Ok(DisparityVector { qv, scaled, q_g0 })
}
