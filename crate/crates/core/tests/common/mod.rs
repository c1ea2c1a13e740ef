//! Independent reference implementations used as test oracles. None of them
//! call into the library's numeric code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// `|a − b| ≤ tol · max(|a|, |b|)`, with a 1e-15 absolute floor so exact
/// zeros compare equal to rounding noise.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) + 1e-15
}

pub fn mean_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d)
        .map(|j| {
            let mut s = 0.0;
            for r in rows {
                s += r[j];
            }
            s / rows.len() as f64
        })
        .collect()
}

fn gauss(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let mut sq = 0.0;
    for k in 0..x.len() {
        sq += (x[k] - y[k]).powi(2);
    }
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Unbiased MMD² by explicit double loops.
pub fn mmd_oracle(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64) -> f64 {
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut kxx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                kxx += gauss(&x[i], &x[j], sigma);
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if i != j {
                kyy += gauss(&y[i], &y[j], sigma);
            }
        }
    }
    let mut kxy = 0.0;
    for xi in x {
        for yj in y {
            kxy += gauss(xi, yj, sigma);
        }
    }
    kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n)
}

/// Median of all pooled pairwise Euclidean distances.
pub fn median_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in 0..i {
            let s: f64 = pooled[i].iter().zip(pooled[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = d.len() / 2;
    if d.len() % 2 == 1 {
        d[h]
    } else {
        (d[h - 1] + d[h]) / 2.0
    }
}

fn cov_entry(rows: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let n = rows.len() as f64;
    let mi: f64 = rows.iter().map(|r| r[i]).sum::<f64>() / n;
    let mj: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / (n - 1.0)
}

/// CORAL distance computed one covariance entry at a time.
pub fn coral_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let d = x[0].len();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            total += (cov_entry(x, i, j) - cov_entry(y, i, j)).powi(2);
        }
    }
    total / (4.0 * (d * d) as f64)
}

pub fn l2_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let (a, b) = (mean_oracle(x), mean_oracle(y));
    a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// `min over opposite-label / min over same-label`, each clamped at 1e-12.
pub fn sim_score_oracle<F>(site: (&[Vec<f64>], u8), train: &[(Vec<Vec<f64>>, u8)], dist: F) -> f64
where
    F: Fn(&[Vec<f64>], &[Vec<f64>]) -> f64,
{
    let all: Vec<(f64, bool)> = train.iter().map(|(rows, l)| (dist(site.0, rows), *l == site.1)).collect();
    let min_of = |same: bool| {
        all.iter()
            .filter(|(_, s)| *s == same)
            .map(|(d, _)| *d)
            .fold(f64::INFINITY, f64::min)
    };
    min_of(false).max(1e-12) / min_of(true).max(1e-12)
}

/// Document-presence PMI for one token, counting directly from token sets.
/// Returns `(pmi_positive, pmi_negative, docs containing token)`.
pub fn pmi_oracle(docs: &[BTreeSet<String>], outcomes: &[bool], token: &str) -> (f64, f64, usize) {
    let n = docs.len() as f64;
    let mut c_w = 0.0;
    let mut c_wpos = 0.0;
    let mut n_pos = 0.0;
    for (d, &o) in docs.iter().zip(outcomes) {
        if o {
            n_pos += 1.0;
        }
        if d.contains(token) {
            c_w += 1.0;
            if o {
                c_wpos += 1.0;
            }
        }
    }
    let n_neg = n - n_pos;
    let c_wneg = c_w - c_wpos;
    // add-one on each of the four cells of the token/outcome table
    let p_wy = |c: f64| (c + 1.0) / (n + 4.0);
    let p_w = (c_w + 2.0) / (n + 4.0);
    let p_y = |c: f64| (c + 2.0) / (n + 4.0);
    let pos = (p_wy(c_wpos) / (p_w * p_y(n_pos))).ln();
    let neg = (p_wy(c_wneg) / (p_w * p_y(n_neg))).ln();
    (pos, neg, c_w as usize)
}

/// Regularized mean logistic loss on dense rows, params `[w.., b]`.
pub fn logistic_loss(xs: &[Vec<f64>], ys: &[f64], l2: f64, params: &[f64]) -> f64 {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = (0..d).map(|k| x[k] * params[k]).sum::<f64>() + params[d];
        // log(1 + e^{-z}) for y = 1, log(1 + e^{z}) for y = 0
        let t = if y > 0.5 { -z } else { z };
        total += if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    }
    let sq: f64 = params[..d].iter().map(|w| w * w).sum();
    total / n + l2 * sq / (2.0 * n)
}

pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut plus = at.to_vec();
            let mut minus = at.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Damped Newton on the same objective, to machine precision.
pub fn newton_reference(xs: &[Vec<f64>], ys: &[f64], l2: f64) -> Vec<f64> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut theta = vec![0.0; d + 1];
    for _ in 0..200 {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for (x, &y) in xs.iter().zip(ys) {
            let mut xt = x.clone();
            xt.push(1.0);
            let z: f64 = xt.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for i in 0..=d {
                grad[i] += (p - y) * xt[i] / n;
                for j in 0..=d {
                    hess[i][j] += p * (1.0 - p) * xt[i] * xt[j] / n;
                }
            }
        }
        for i in 0..d {
            grad[i] += l2 * theta[i] / n;
            hess[i][i] += l2 / n;
        }
        let step = solve(hess, grad.clone());
        let f0 = logistic_loss(xs, ys, l2, &theta);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if logistic_loss(xs, ys, l2, &cand) <= f0 || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| s * s).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
    }
    theta
}

/// Replays the greedy site assignment one step at a time, recomputing every
/// set's article count from the full assignment history at each step.
pub fn greedy_trace_oracle(sizes: &[usize], ratios: [f64; 3]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut assigned: Vec<usize> = Vec::new();
    for _ in sizes {
        let count = |k: usize| -> usize {
            assigned
                .iter()
                .zip(sizes)
                .filter(|(a, _)| **a == k)
                .map(|(_, s)| *s)
                .sum()
        };
        // deficit in articles; the first maximum wins, near-equal values tie
        let deficits: Vec<f64> = (0..3).map(|k| ratios[k] * total as f64 - count(k) as f64).collect();
        let mut best = 0;
        for k in 1..3 {
            if deficits[k] > deficits[best] + 1e-9 * total as f64 {
                best = k;
            }
        }
        assigned.push(best);
    }
    assigned
}
