//! Pseudo-Gibbs sampling, plain and clamped.
//!
//! Reproducibility contract: the generator is `ChaCha8Rng::seed_from_u64(seed)`
//! and every uniform is `rng.gen::<f64>()` (53-bit, `[0, 1)`). Draws happen in
//! this order:
//!
//! 1. uniform-random initialization: one draw per unclamped variable, in
//!    index order, value `⌊u·|X_i|⌋`;
//! 2. per step, random scan: one draw selecting the node by inverse CDF over
//!    the weights in index order (sequential scan consumes none);
//! 3. per step: one draw selecting the new value by inverse CDF over the
//!    `θ_i` row in index order.
//!
//! The state is recorded before each update, so the first recorded state is
//! the initial state.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::ScanWeights;
use crate::network::DependencyNetwork;
use crate::space::{Dataset, DenseDistribution, JointState, VariableSpace};

/// Node-selection policy.
#[derive(Clone, Debug, PartialEq)]
pub enum ScanPolicy {
    /// Select node `i` with probability `c_i`.
    Random(ScanWeights),
    /// Cycle through the given order.
    Sequential(Vec<usize>),
}

impl ScanPolicy {
    /// Random scan with `c_i = 1/n`.
    pub fn uniform(n: usize) -> Self {
        ScanPolicy::Random(ScanWeights::uniform(n))
    }

    /// Sequential scan in index order.
    pub fn in_order(n: usize) -> Self {
        ScanPolicy::Sequential((0..n).collect())
    }
}

/// Variables held fixed during conditional sampling.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClampSet(BTreeMap<usize, usize>);

impl ClampSet {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (v, val) in pairs {
            if map.insert(v, val).is_some() {
                return Err(Error::domain(format!("variable {v} clamped twice")));
            }
        }
        Ok(Self(map))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.0.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.0.iter().map(|(&k, &v)| (k, v)).collect()
    }

    fn validate(&self, space: &VariableSpace) -> Result<()> {
        for (&v, &val) in &self.0 {
            if v >= space.n() {
                return Err(Error::domain(format!("clamped variable {v} not in space")));
            }
            if val >= space.card(v) {
                return Err(Error::domain(format!(
                    "clamp value {val} out of range for variable {v}"
                )));
            }
        }
        if self.0.len() >= space.n() {
            return Err(Error::domain(
                "every variable is clamped; nothing to sample",
            ));
        }
        Ok(())
    }
}

/// Starting point of a run.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Uniform over each unclamped variable, drawn from the run's seed.
    UniformRandom,
    Fixed(JointState),
}

/// Output of a sampling run: `N^o` recorded states.
#[derive(Clone, Debug)]
pub struct SampleRun {
    space: VariableSpace,
    states: Vec<usize>,
    selected: Vec<usize>,
    pub seed: u64,
    pub policy: ScanPolicy,
    pub clamp: ClampSet,
}

impl SampleRun {
    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    /// `N^o`.
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// `X^t`.
    pub fn state(&self, t: usize) -> &[usize] {
        let n = self.space.n();
        &self.states[t * n..(t + 1) * n]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.states.chunks(self.space.n())
    }

    /// Node updated right after `X^t` was recorded.
    pub fn selected(&self, t: usize) -> usize {
        self.selected[t]
    }

    /// `N^o_x / N^o`.
    pub fn frequencies(&self) -> Result<DenseDistribution> {
        self.frequencies_where(|_| true)
    }

    /// Frequencies over the steps `t` accepted by `keep`.
    pub fn frequencies_where(&self, keep: impl Fn(usize) -> bool) -> Result<DenseDistribution> {
        let len = self.space.dense_len()?;
        let mut counts = vec![0u64; len];
        let mut total = 0u64;
        for (t, s) in self.states().enumerate() {
            if keep(t) {
                counts[self.space.encode_unchecked(s)] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::domain("frequencies of an empty run"));
        }
        DenseDistribution::new(
            self.space.clone(),
            counts
                .into_iter()
                .map(|c| c as f64 / total as f64)
                .collect(),
        )
    }

    /// Drop the first `burn_in` states and keep every `thin`-th after that.
    pub fn to_dataset(&self, burn_in: usize, thin: usize, names: Vec<String>) -> Result<Dataset> {
        if thin == 0 {
            return Err(Error::domain("thinning interval must be >= 1"));
        }
        let values: Vec<usize> = self
            .states()
            .skip(burn_in)
            .step_by(thin)
            .flat_map(|s| s.iter().copied())
            .collect();
        Dataset::from_flat(self.space.clone(), values)?.with_names(names)
    }
}

/// `frequencies(run)`.
pub fn frequencies(run: &SampleRun) -> Result<DenseDistribution> {
    run.frequencies()
}

/// Pseudo-Gibbs sampling of the whole network.
pub fn pseudo_gibbs(
    network: &DependencyNetwork,
    policy: &ScanPolicy,
    n_steps: usize,
    seed: u64,
    init: &InitialState,
) -> Result<SampleRun> {
    conditional_pseudo_gibbs(network, &ClampSet::empty(), policy, n_steps, seed, init)
}

/// Pseudo-Gibbs sampling with the clamped variables held fixed. Random scan
/// restricts the weights to unclamped nodes and renormalizes them (uniform
/// weights become `1/(n − |C|)`); a sequential order may list clamped nodes,
/// which are skipped.
pub fn conditional_pseudo_gibbs(
    network: &DependencyNetwork,
    clamp: &ClampSet,
    policy: &ScanPolicy,
    n_steps: usize,
    seed: u64,
    init: &InitialState,
) -> Result<SampleRun> {
    let space = network.space().clone();
    let n = space.n();
    clamp.validate(&space)?;
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be >= 1"));
    }
    let free: Vec<usize> = (0..n).filter(|&v| clamp.get(v).is_none()).collect();

    enum Selector {
        Random { nodes: Vec<usize>, cdf: Vec<f64> },
        Cycle(Vec<usize>),
    }
    let selector = match policy {
        ScanPolicy::Random(w) => {
            if w.len() != n {
                return Err(Error::domain("one scan weight per node required"));
            }
            let total: f64 = free.iter().map(|&i| w.get(i)).sum();
            if total <= 0.0 {
                return Err(Error::domain("no unclamped node has positive weight"));
            }
            let mut acc = 0.0;
            let cdf = free
                .iter()
                .map(|&i| {
                    acc += w.get(i) / total;
                    acc
                })
                .collect();
            Selector::Random {
                nodes: free.clone(),
                cdf,
            }
        }
        ScanPolicy::Sequential(order) => {
            let mut seen = vec![false; n];
            for &i in order {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::domain(format!("bad sequential order {order:?}")));
                }
            }
            if free.iter().any(|&i| !seen[i]) {
                return Err(Error::domain(
                    "sequential order must visit every unclamped node once",
                ));
            }
            Selector::Cycle(
                order
                    .iter()
                    .copied()
                    .filter(|&i| clamp.get(i).is_none())
                    .collect(),
            )
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = match init {
        InitialState::Fixed(s) => {
            space.check_state(s)?;
            let mut s = s.0.clone();
            for (v, val) in clamp.pairs() {
                s[v] = val;
            }
            s
        }
        InitialState::UniformRandom => (0..n)
            .map(|v| match clamp.get(v) {
                Some(val) => val,
                None => {
                    let u: f64 = rng.gen();
                    ((u * space.card(v) as f64) as usize).min(space.card(v) - 1)
                }
            })
            .collect(),
    };

    let mut states = Vec::with_capacity(n_steps * n);
    let mut selected = Vec::with_capacity(n_steps);
    for t in 0..n_steps {
        states.extend_from_slice(&x);
        let i = match &selector {
            Selector::Random { nodes, cdf } => nodes[inverse_cdf(cdf, rng.gen())],
            Selector::Cycle(order) => order[t % order.len()],
        };
        selected.push(i);
        let row = network.conditional_row(i, &x);
        x[i] = draw_from_row(row, rng.gen());
    }

    Ok(SampleRun {
        space,
        states,
        selected,
        seed,
        policy: policy.clone(),
        clamp: clamp.clone(),
    })
}

/// First index with `u < cdf[k]`; the last index absorbs rounding.
fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Inverse-CDF draw over an unnormalized-by-rounding row.
fn draw_from_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (v, &t) in row.iter().enumerate() {
        if t > 0.0 {
            acc += t;
            last_positive = v;
            if u < acc {
                return v;
            }
        }
    }
    last_positive
}
