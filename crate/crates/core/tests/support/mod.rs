//! Random small instances and independent double-loop oracles.
//!
//! Shared by the integration tests and the acceptance target, so it only
//! depends on `sbmgof` and `rand`.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use sbmgof::deviation::{disparity, entrywise_deviations, gamma_max, sample_psi, theta};
use sbmgof::estimation::estimate_q;
use sbmgof::graph::block_counts;
use sbmgof::gumbel::GumbelParams;
use sbmgof::sbm::BlockProbabilityMatrix;
use sbmgof::{seed, AdjacencyMatrix, Error, Membership};

pub struct Instance {
    pub a: AdjacencyMatrix,
    pub g: Membership,
    pub q: Vec<Vec<f64>>,
}

/// Random labels on `n` nodes with every one of `k` blocks holding at least two.
pub fn random_labels<R: Rng>(rng: &mut R, n: usize, k: usize) -> Membership {
    assert!(n >= 2 * k);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < 2 * k { i % k } else { rng.random_range(0..k) }).collect();
    labels.shuffle(rng);
    Membership::new(labels, k).unwrap()
}

/// Symmetric block probabilities; a few cells are pinned to 0 or 1 so the
/// degenerate-term rule gets exercised.
pub fn random_q<R: Rng>(rng: &mut R, k: usize) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; k]; k];
    for u in 0..k {
        for v in u..k {
            let p = match rng.random_range(0..12) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.02..0.95),
            };
            q[u][v] = p;
            q[v][u] = p;
        }
    }
    q
}

/// A graph with `n` in `[lo, hi]` drawn pair by pair from a random SBM.
pub fn random_instance(seed: u64, lo: usize, hi: usize) -> Instance {
    let mut rng = seed::rng(seed);
    let n = rng.random_range(lo..=hi);
    let k = rng.random_range(1..=4.min(n / 2));
    let g = random_labels(&mut rng, n, k);
    let q = random_q(&mut rng, k);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < q[g.label(i)][g.label(j)] {
                edges.push((i, j));
            }
        }
    }
    Instance { a: AdjacencyMatrix::from_edges(n, edges).unwrap(), g, q }
}

pub fn dense(a: &AdjacencyMatrix) -> Vec<Vec<u8>> {
    let n = a.n();
    let mut m = vec![vec![0u8; n]; n];
    for (i, j) in a.edges() {
        m[i][j] = 1;
        m[j][i] = 1;
    }
    m
}

pub fn brute_q(a: &AdjacencyMatrix, g: &Membership) -> Vec<Vec<f64>> {
    let adj = dense(a);
    let k = g.k();
    let mut hits = vec![vec![0.0; k]; k];
    let mut pairs = vec![vec![0.0; k]; k];
    for i in 0..a.n() {
        for j in 0..a.n() {
            if i != j {
                hits[g.label(i)][g.label(j)] += f64::from(adj[i][j]);
                pairs[g.label(i)][g.label(j)] += 1.0;
            }
        }
    }
    (0..k).map(|u| (0..k).map(|v| hits[u][v] / pairs[u][v]).collect()).collect()
}

/// One term per `j`, each standardized on its own, dropped when degenerate.
pub fn brute_rho(a: &AdjacencyMatrix, g: &Membership, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let adj = dense(a);
    let n = a.n();
    (0..n)
        .map(|i| {
            (0..g.k())
                .map(|v| {
                    let mut sum = 0.0;
                    let mut kept = 0usize;
                    for j in (0..n).filter(|&j| j != i && g.label(j) == v) {
                        let p = q[g.label(i)][g.label(j)];
                        if p > 0.0 && p < 1.0 {
                            sum += (f64::from(adj[i][j]) - p) / (p * (1.0 - p)).sqrt();
                            kept += 1;
                        }
                    }
                    if kept == 0 {
                        0.0
                    } else {
                        sum / (kept as f64).sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

/// `q_v` by looping over every node; `None` when nodes of one true block disagree.
pub fn brute_disparity(q: &[Vec<f64>], g: &Membership, g0: &Membership) -> Option<Vec<f64>> {
    let n = g.n();
    let k0 = g0.k();
    let mut avg = vec![vec![0.0; k0]; k0];
    let mut cnt = vec![vec![0.0; k0]; k0];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                avg[g0.label(i)][g0.label(j)] += q[g.label(i)][g.label(j)];
                cnt[g0.label(i)][g0.label(j)] += 1.0;
            }
        }
    }
    for a in 0..k0 {
        for b in 0..k0 {
            avg[a][b] /= cnt[a][b];
        }
    }
    let mut per_block: Vec<Vec<Option<f64>>> = vec![vec![None; g.k()]; k0];
    let mut qv = vec![0.0; k0];
    for i in 0..n {
        for v in 0..k0 {
            let p0 = avg[g0.label(i)][v];
            let members: Vec<usize> = (0..n).filter(|&j| j != i && g0.label(j) == v).collect();
            let val = if members.is_empty() || p0 <= 0.0 || p0 >= 1.0 {
                0.0
            } else {
                let s: f64 = members.iter().map(|&j| q[g.label(i)][g.label(j)] - p0).sum();
                s.abs() / (members.len() as f64 * p0 * (1.0 - p0)).sqrt()
            };
            let slot = &mut per_block[v][g.label(i)];
            match *slot {
                None => *slot = Some(val),
                Some(prev) if (prev - val).abs() > 1e-9 * prev.abs().max(val.abs()).max(1.0) => return None,
                _ => {}
            }
            qv[v] += val / n as f64;
        }
    }
    Some(qv)
}

/// The six exact identities on one random 20 to 60 node instance.
pub fn exact_algebra(seed: u64) -> Result<(), String> {
    let Instance { a, g, .. } = random_instance(seed, 20, 60);
    let mut rng = seed::rng(seed::derive(seed, &[99]));
    let counts = block_counts(&a, &g).map_err(|e| e.to_string())?;
    let qhat = estimate_q::<f64>(&a, &g).map_err(|e| e.to_string())?;
    let k = g.k();

    for u in 0..k {
        for v in 0..k {
            let m = counts.m(u, v) as f64;
            let back = *qhat.get(u, v) * counts.n_pairs(u, v) as f64;
            if (back - m).abs() > 1e-12 * m.max(1.0) {
                return Err(format!("m[{u}][{v}] = {m} but Q̂·nPairs = {back}"));
            }
        }
    }

    let d = entrywise_deviations(&a, &g, &qhat).map_err(|e| e.to_string())?;
    for u in 0..k {
        for v in 0..k {
            let q = *qhat.get(u, v);
            if q > 0.0 && q < 1.0 {
                let s: f64 = (0..a.n()).filter(|&i| g.label(i) == u).map(|i| d.get(i, v)).sum();
                if s.abs() > 1e-9 {
                    return Err(format!("block ({u}, {v}) deviations sum to {s}"));
                }
            }
        }
    }

    let b = rng.random_range(1..=25);
    let m = rng.random_range(2..=40);
    let psi = sample_psi(&d, b, m, seed).map_err(|e| e.to_string())?;
    let gamma = gamma_max(&psi);
    let bound = (b as f64).sqrt() * d.max_abs();
    if gamma > bound * (1.0 + 1e-12) + 1e-300 {
        return Err(format!("Γ = {gamma} exceeds √B·max|ρ̂| = {bound}"));
    }

    let law = GumbelParams::<f64>::null_limit();
    for _ in 0..20 {
        let p: f64 = rng.random_range(0.001..0.999);
        let back = law.cdf(law.quantile(p));
        if (back - p).abs() > 1e-12 {
            return Err(format!("cdf(quantile({p})) = {back}"));
        }
    }

    let mk = (m * k) as f64;
    if mk > std::f64::consts::E {
        let g0 = (2.0 * mk.ln() - mk.ln().ln()).sqrt();
        let t = theta(g0, m, k).map_err(|e| e.to_string())?;
        if t.abs() > 1e-12 * mk.ln() {
            return Err(format!("Θ at the centering point is {t}"));
        }
    }

    let dv = disparity(&qhat, &g, &g, b, m).map_err(|e| e.to_string())?;
    if dv.qv.iter().any(|&x| x != 0.0) || dv.scaled != 0.0 {
        return Err(format!("disparity under the null is {:?}", dv.qv));
    }
    Ok(())
}

/// Library against the double loops on one random instance with `n <= 30`.
pub fn oracle_agreement(seed: u64) -> Result<(), String> {
    const TOL: f64 = 1e-10;
    let Instance { a, g, q } = random_instance(seed, 8, 30);
    let mut rng = seed::rng(seed::derive(seed, &[98]));

    let qhat = estimate_q::<f64>(&a, &g).map_err(|e| e.to_string())?;
    let bq = brute_q(&a, &g);
    for u in 0..g.k() {
        for v in 0..g.k() {
            if (*qhat.get(u, v) - bq[u][v]).abs() > TOL {
                return Err(format!("Q̂[{u}][{v}]: {} vs {}", qhat.get(u, v), bq[u][v]));
            }
        }
    }

    let d = entrywise_deviations(&a, &g, &qhat).map_err(|e| e.to_string())?;
    let rho = brute_rho(&a, &g, &bq);
    for (i, row) in rho.iter().enumerate() {
        for (v, &x) in row.iter().enumerate() {
            if (d.get(i, v) - x).abs() > TOL {
                return Err(format!("ρ̂[{i}][{v}]: {} vs {x}", d.get(i, v)));
            }
        }
    }

    // Hypothesized memberships: the truth, a coarsening, a refinement and a
    // random relabelling (usually ambiguous, which both sides must agree on).
    let n = a.n();
    let q_true = BlockProbabilityMatrix::new(q.clone()).map_err(|e| e.to_string())?;
    let mut candidates = vec![g.clone()];
    if g.k() >= 2 {
        let merged: Vec<usize> = g.labels().iter().map(|&u| u / 2).collect();
        candidates.push(Membership::from_labels(merged).map_err(|e| e.to_string())?);
    }
    let split: Vec<usize> = (0..n).map(|i| 2 * g.label(i) + usize::from(i % 4 >= 2)).collect();
    if let Ok(s) = Membership::from_labels(split) {
        if s.sizes().iter().all(|&c| c >= 2) {
            candidates.push(s);
        }
    }
    let k0 = rng.random_range(1..=3.min(n / 2));
    candidates.push(random_labels(&mut rng, n, k0));

    let (b, m) = (rng.random_range(1..=30), rng.random_range(2..=50));
    for g0 in &candidates {
        let lib = disparity(&q_true, &g, g0, b, m);
        match (brute_disparity(&q, &g, g0), lib) {
            (Some(expect), Ok(got)) => {
                for (v, (&x, &y)) in expect.iter().zip(&got.qv).enumerate() {
                    if (x - y).abs() > TOL {
                        return Err(format!("q_{v}: {y} vs {x}"));
                    }
                }
                let max = expect.iter().fold(0.0f64, |m, &x| m.max(x));
                let scaled = (b as f64).sqrt() * max / ((m * g0.k()) as f64).ln().sqrt();
                if (scaled - got.scaled).abs() > TOL * scaled.max(1.0) {
                    return Err(format!("scaled: {} vs {scaled}", got.scaled));
                }
            }
            (None, Err(Error::DisparityAmbiguous(_))) => {}
            (expect, got) => return Err(format!("disparity: oracle {expect:?}, library {got:?}")),
        }
    }
    Ok(())
}
