//! Synthetic generators: small Ising lattices and random binary Bayesian
//! networks, both returned as exact dense joints.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Dataset, DenseDistribution, VariableSpace};

/// Largest lattice with an exact joint.
pub const ISING_MAX_CELLS: usize = 20;

/// Largest Bayesian network with an exact joint.
pub const BAYESNET_MAX_NODES: usize = 14;

/// Default coupling of the Ising generator.
pub const DEFAULT_COUPLING: f64 = 1.0;

/// CPT entries are drawn from `U(CPT_LOW, CPT_HIGH)`.
pub const CPT_LOW: f64 = 0.05;
pub const CPT_HIGH: f64 = 0.95;

/// Grid Ising model with free boundary. Value 0 is spin −1, value 1 is +1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub rows: usize,
    pub cols: usize,
    pub coupling: f64,
    pub field: f64,
}

impl IsingSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            coupling: DEFAULT_COUPLING,
            field: 0.0,
        }
    }

    /// Cell index `r * cols + c`.
    pub fn cell(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Horizontal and vertical neighbour pairs, no wraparound.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    out.push((self.cell(r, c), self.cell(r, c + 1)));
                }
                if r + 1 < self.rows {
                    out.push((self.cell(r, c), self.cell(r + 1, c)));
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain("lattice needs at least one row and column"));
        }
        let cells = self.rows as u128 * self.cols as u128;
        if cells > ISING_MAX_CELLS as u128 {
            return Err(Error::Capacity {
                what: "Ising lattice cells",
                needed: cells,
                cap: ISING_MAX_CELLS,
            });
        }
        if !self.coupling.is_finite() || !self.field.is_finite() {
            return Err(Error::domain("coupling and field must be finite"));
        }
        Ok(())
    }
}

/// `p(x) ∝ exp(J Σ_{u~v} s_u s_v + h Σ_u s_u)`.
pub fn ising_distribution(spec: &IsingSpec) -> Result<DenseDistribution> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let space = VariableSpace::binary(n)?;
    let len = space.dense_len()?;
    let edges = spec.edges();
    let spin = |x: usize, k: usize| if (x >> k) & 1 == 1 { 1.0 } else { -1.0 };
    let energies: Vec<f64> = crate::par::map_range(len, |x| {
        let pair: f64 = edges.iter().map(|&(u, v)| spin(x, u) * spin(x, v)).sum();
        let single: f64 = (0..n).map(|k| spin(x, k)).sum();
        spec.coupling * pair + spec.field * single
    });
    // shift by the maximum before exponentiating
    let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = energies.into_iter().map(|e| (e - top).exp()).collect();
    DenseDistribution::from_weights(space, weights)
}

/// Random binary Bayesian network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BayesNetSpec {
    pub nodes: usize,
    pub edges: usize,
    pub seed: u64,
}

/// Structure and parameters of a generated Bayesian network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesNetDescription {
    pub spec: BayesNetSpec,
    /// Topological order of the variables.
    pub order: Vec<usize>,
    /// Parents of each variable, ascending.
    pub parents: Vec<Vec<usize>>,
    /// `P(X_v = 1 | parents)` for each parent configuration, first parent
    /// least significant.
    pub cpt: Vec<Vec<f64>>,
}

/// Draw a DAG with exactly `edges` edges and its joint.
pub fn random_bayesnet(spec: &BayesNetSpec) -> Result<(DenseDistribution, BayesNetDescription)> {
    let n = spec.nodes;
    if n == 0 {
        return Err(Error::domain("Bayesian network needs at least one node"));
    }
    if n > BAYESNET_MAX_NODES {
        return Err(Error::Capacity {
            what: "Bayesian network nodes",
            needed: n as u128,
            cap: BAYESNET_MAX_NODES,
        });
    }
    let max_edges = n * (n - 1) / 2;
    if spec.edges > max_edges {
        return Err(Error::domain(format!(
            "{} edges infeasible for {n} nodes (at most {max_edges})",
            spec.edges
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let mut parents = vec![Vec::new(); n];
    for &(a, b) in pairs.choose_multiple(&mut rng, spec.edges) {
        parents[order[b]].push(order[a]);
    }
    for p in &mut parents {
        p.sort_unstable();
    }
    let cpt: Vec<Vec<f64>> = parents
        .iter()
        .map(|p| {
            (0..1usize << p.len())
                .map(|_| {
                    let a = rng.gen_range(CPT_LOW..CPT_HIGH);
                    let b = rng.gen_range(CPT_LOW..CPT_HIGH);
                    b / (a + b)
                })
                .collect()
        })
        .collect();
    let space = VariableSpace::binary(n)?;
    let len = space.dense_len()?;
    let probs = crate::par::map_range(len, |x| {
        (0..n)
            .map(|v| {
                let cfg = parents[v]
                    .iter()
                    .enumerate()
                    .fold(0, |acc, (k, &u)| acc | (((x >> u) & 1) << k));
                let one = cpt[v][cfg];
                if (x >> v) & 1 == 1 {
                    one
                } else {
                    1.0 - one
                }
            })
            .product()
    });
    let joint = DenseDistribution::from_weights(space, probs)?;
    Ok((
        joint,
        BayesNetDescription {
            spec: *spec,
            order,
            parents,
            cpt,
        },
    ))
}

/// `count` i.i.d. draws from `p` by inverse CDF over flat indices.
pub fn sample_exact(p: &DenseDistribution, count: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cdf = Vec::with_capacity(p.probs().len());
    let mut acc = 0.0;
    for &q in p.probs() {
        acc += q;
        cdf.push(acc);
    }
    let space = p.space().clone();
    let n = space.n();
    let mut flat = vec![0; count * n];
    for row in flat.chunks_mut(n.max(1)).take(count) {
        let u: f64 = rng.gen::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        // skip zero-mass states that share a CDF value
        let idx = (idx..cdf.len())
            .find(|&k| p.probs()[k] > 0.0)
            .unwrap_or(idx);
        row.copy_from_slice(&space.decode(idx)?);
    }
    Dataset::from_flat(space, flat)
}
