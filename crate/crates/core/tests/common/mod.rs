//! Test-side oracles built from first principles: dense transition
//! matrices, full conditionals by enumeration and divergences by direct
//! summation. They only rely on state encoding and `conditional_row`.

#![allow(dead_code)]

use depnet::datagen::sample_exact;
use depnet::{Dataset, DenseDistribution, DependencyNetwork, VariableSpace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_joint(rng: &mut ChaCha8Rng, cards: &[usize], floor: f64) -> DenseDistribution {
    let sp = VariableSpace::new(cards.to_vec()).unwrap();
    let len = sp.dense_len().unwrap();
    let w = (0..len).map(|_| floor + rng.gen::<f64>()).collect();
    DenseDistribution::from_weights(sp, w).unwrap()
}

/// A joint with a sparse, peaked shape so learned sources are non-trivial.
pub fn peaked_joint(rng: &mut ChaCha8Rng, cards: &[usize]) -> DenseDistribution {
    let sp = VariableSpace::new(cards.to_vec()).unwrap();
    let len = sp.dense_len().unwrap();
    let w = (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            (4.0 * u).exp() - 0.9
        })
        .map(|v: f64| v.max(0.0))
        .collect::<Vec<_>>();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return random_joint(rng, cards, 0.1);
    }
    DenseDistribution::from_weights(sp, w).unwrap()
}

pub fn random_data(rng: &mut ChaCha8Rng, cards: &[usize], n: usize) -> Dataset {
    let p = peaked_joint(rng, cards);
    sample_exact(&p, n, rng.gen()).unwrap()
}

/// `p(x_i = v | x_{-i})` for every state `x` and value `v`, or `None`
/// where the context has no mass.
pub fn conditional(p: &DenseDistribution, i: usize, x: usize, v: usize) -> Option<f64> {
    let sp = p.space();
    let mut s = sp.decode(x).unwrap().0;
    let mut mass = 0.0;
    let mut target = 0.0;
    for w in 0..sp.card(i) {
        s[i] = w;
        let q = p.probs()[sp.encode(&s).unwrap()];
        mass += q;
        if w == v {
            target = q;
        }
    }
    (mass > 0.0).then(|| target / mass)
}

/// `Σ_x p log p/q`, `None` for `+∞`.
pub fn kl(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b == 0.0 {
                return None;
            }
            acc += a * (a / b).ln();
        }
    }
    Some(acc)
}

/// `Σ_i c_i Σ_x p(x) log p(x_i|x_{-i}) / q(x_i|x_{-i})`.
pub fn fc(p: &DenseDistribution, q: &DenseDistribution, c: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        for (x, &px) in p.probs().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let v = p.space().decode(x).unwrap()[i];
            let a = conditional(p, i, x, v).unwrap();
            let b = conditional(q, i, x, v)?;
            if b == 0.0 {
                return None;
            }
            acc += ci * px * (a / b).ln();
        }
    }
    Some(acc)
}

/// `KL(p‖E(θ_i))` for every node.
pub fn manifold_kl(p: &DenseDistribution, net: &DependencyNetwork) -> Vec<Option<f64>> {
    (0..p.space().n())
        .map(|i| {
            let mut acc = 0.0;
            for (x, &px) in p.probs().iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                let s = p.space().decode(x).unwrap();
                let a = conditional(p, i, x, s[i]).unwrap();
                let b = net.conditional_row(i, &s)[s[i]];
                if b == 0.0 {
                    return None;
                }
                acc += px * (a / b).ln();
            }
            Some(acc)
        })
        .collect()
}

pub fn fc_limit(p: &DenseDistribution, net: &DependencyNetwork) -> Option<f64> {
    let mut acc = 0.0;
    for (t, &c) in manifold_kl(p, net)
        .into_iter()
        .zip(net.weights().as_slice())
    {
        acc += c * t?;
    }
    Some(acc)
}

/// Row-stochastic matrix of one node update: `T_i[x][x']`.
pub fn node_matrix(net: &DependencyNetwork, i: usize) -> Vec<Vec<f64>> {
    let sp = net.space();
    let len = sp.dense_len().unwrap();
    let mut t = vec![vec![0.0; len]; len];
    for (x, row) in t.iter_mut().enumerate() {
        let mut s = sp.decode(x).unwrap().0;
        let theta = net.conditional_row(i, &s).to_vec();
        for (v, &th) in theta.iter().enumerate() {
            s[i] = v;
            row[sp.encode(&s).unwrap()] += th;
        }
    }
    t
}

/// `Σ_i c_i T_i`.
pub fn random_scan_matrix(net: &DependencyNetwork) -> Vec<Vec<f64>> {
    let len = net.space().dense_len().unwrap();
    let mut t = vec![vec![0.0; len]; len];
    for (i, &c) in net.weights().as_slice().iter().enumerate() {
        let ti = node_matrix(net, i);
        for (row, ri) in t.iter_mut().zip(&ti) {
            for (a, b) in row.iter_mut().zip(ri) {
                *a += c * b;
            }
        }
    }
    t
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for (r, row) in a.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if v != 0.0 {
                for (o, &w) in out[r].iter_mut().zip(&b[k]) {
                    *o += v * w;
                }
            }
        }
    }
    out
}

pub fn vec_mat(p: &[f64], t: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (x, &px) in p.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(&t[x]) {
            *o += px * v;
        }
    }
    out
}

/// Stationary distribution by repeated squaring of `(I + T)/2` (aperiodic,
/// same fixed points), then power-polished.
pub fn stationary(t: &[Vec<f64>]) -> Vec<f64> {
    let n = t.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| 0.5 * t[r][c] + if r == c { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..60 {
        m = mat_mul(&m, &m);
    }
    let mut p = vec![1.0 / n as f64; n];
    p = vec_mat(&p, &m);
    for _ in 0..200 {
        p = vec_mat(&p, t);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|v| v / total).collect()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
