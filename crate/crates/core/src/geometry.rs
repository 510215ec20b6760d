//! Divergences and full-conditional manifolds.
//!
//! `E(θ_i)` is the set of joints whose full conditional at node `i` equals
//! `θ_i(X_i | Y_i(X_{-i}))`. One pseudo-Gibbs update of node `i` is the
//! m-projection onto `E(θ_i)`: keep the `X_{-i}` marginal, replace the
//! conditional by `θ_i`. All quantities are in nats, with `0 log 0 = 0` and
//! `p > 0, q = 0` giving `+∞`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::network::{ConditionalTable, DependencyNetwork, InformationSource, Kernels, NodeKernel};
use crate::space::{Dataset, DenseDistribution};

/// A non-negative real or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// `f64` view with `+∞` for the infinite case. For reporting only.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::Infinite) => Some(Ordering::Less),
            (ExtReal::Infinite, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::Infinite, ExtReal::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

/// Scaling by a weight; `0 · ∞ = 0` (a node that is never selected
/// contributes nothing).
impl Mul<ExtReal> for f64 {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        match rhs {
            ExtReal::Finite(v) => ExtReal::Finite(self * v),
            ExtReal::Infinite if self == 0.0 => ExtReal::ZERO,
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, Add::add)
    }
}

/// Finite values serialize as numbers, `+∞` as the string `"inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ExtReal::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(ExtReal::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v:.6e}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

/// Random-scan selection probabilities `c_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanWeights(Vec<f64>);

impl ScanWeights {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::domain("scan weights need at least one node"));
        }
        if c.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::domain(
                "scan weights must be finite and non-negative",
            ));
        }
        let s: f64 = c.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("scan weights sum to {s:.17}")));
        }
        Ok(Self(c))
    }

    /// `c_i = 1/n`.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// How `X_{-i}` is summarized when conditioning `X_i`.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    /// The full context `X_{-i}`.
    AllOthers,
    /// An information source `Y_i(X_{-i})`.
    Source(&'a InformationSource),
}

/// `H(p) = −Σ p log p`.
pub fn entropy(p: &DenseDistribution) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// `H(p(X_i | Y))`, with `Y` either all of `X_{-i}` or a source.
pub fn conditional_entropy(
    p: &DenseDistribution,
    i: usize,
    given: Conditioning<'_>,
) -> Result<f64> {
    let space = p.space();
    check_node(space.n(), i)?;
    let ctx_len = space.context_len(i)?;
    let card = space.card(i);
    let groups: Vec<usize>;
    let (group_of, n_groups): (&dyn Fn(usize) -> usize, usize) = match given {
        Conditioning::AllOthers => (&|ctx| ctx, ctx_len),
        Conditioning::Source(src) => {
            if src.owner() != i {
                return Err(Error::domain("source belongs to another node"));
            }
            groups = src.materialize(space)?;
            (&|ctx| groups[ctx], src.leaf_count())
        }
    };
    let probs = p.probs();
    let mut joint = vec![0.0; n_groups * card];
    for ctx in 0..ctx_len {
        let g = group_of(ctx);
        for v in 0..card {
            joint[g * card + v] += probs[space.state_of(ctx, i, v)];
        }
    }
    let mut h = 0.0;
    for row in joint.chunks(card) {
        let mass: f64 = row.iter().sum();
        for &pv in row {
            if pv > 0.0 {
                h -= pv * (pv / mass).ln();
            }
        }
    }
    Ok(h)
}

/// `KL(p‖q) = ⟨log p/q⟩_p`.
pub fn kl_divergence(p: &DenseDistribution, q: &DenseDistribution) -> Result<ExtReal> {
    same_space(p, q)?;
    let mut acc = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(ExtReal::Infinite);
            }
            acc += a * (a / b).ln();
        }
    }
    Ok(ExtReal::Finite(acc))
}

/// `KL(p‖E(θ_i)) = ⟨log p(X_i|X_{-i}) / θ_i(X_i|Y_i)⟩_p`.
pub fn kl_to_full_conditional_manifold(
    p: &DenseDistribution,
    i: usize,
    theta: &ConditionalTable,
    source: &InformationSource,
) -> Result<ExtReal> {
    let kernel = node_kernel(p, i, theta, source)?;
    kl_to_kernel(p, &kernel)
}

/// `KL(p‖E(θ))` for a materialized node.
pub fn kl_to_kernel(p: &DenseDistribution, kernel: &NodeKernel) -> Result<ExtReal> {
    let space = p.space();
    let i = kernel.var;
    let card = space.card(i);
    let probs = p.probs();
    let mut acc = 0.0;
    for ctx in 0..space.context_len(i)? {
        let row = kernel.row(ctx);
        let mass: f64 = (0..card).map(|v| probs[space.state_of(ctx, i, v)]).sum();
        if mass == 0.0 {
            continue;
        }
        for (v, &t) in row.iter().enumerate() {
            let pv = probs[space.state_of(ctx, i, v)];
            if pv > 0.0 {
                if t == 0.0 {
                    return Ok(ExtReal::Infinite);
                }
                acc += pv * (pv / (mass * t)).ln();
            }
        }
    }
    Ok(ExtReal::Finite(acc))
}

/// m-projection of `p` onto `E(θ_i)`: `p(X_{-i}) · θ_i(X_i | Y_i)`.
pub fn m_project(
    p: &DenseDistribution,
    i: usize,
    theta: &ConditionalTable,
    source: &InformationSource,
) -> Result<DenseDistribution> {
    let kernel = node_kernel(p, i, theta, source)?;
    let mut out = vec![0.0; p.probs().len()];
    project_into(p.space(), &kernel, p.probs(), &mut out);
    DenseDistribution::from_weights(p.space().clone(), out)
}

/// Raw projection on probability vectors; `out` is overwritten.
pub(crate) fn project_into(
    space: &crate::space::VariableSpace,
    kernel: &NodeKernel,
    p: &[f64],
    out: &mut [f64],
) {
    let i = kernel.var;
    let card = space.card(i);
    let stride = space.stride(i);
    let block = stride * card;
    // Blocks of `block` states share the high-order digits; within a block
    // contexts are `hi * stride + lo`.
    crate::par::for_each_chunk_mut(out, block, |hi, chunk| {
        let base = hi * block;
        for lo in 0..stride {
            let ctx = hi * stride + lo;
            let mut mass = 0.0;
            for v in 0..card {
                mass += p[base + lo + v * stride];
            }
            let row = kernel.row(ctx);
            for v in 0..card {
                chunk[lo + v * stride] = mass * row[v];
            }
        }
    });
}

/// `FC(p‖q) = Σ_i c_i KL(p‖E_i(q))`.
///
/// Contexts where `q(x_{-i}) = 0` are unconstrained: they contribute 0 when
/// `p(x_{-i}) = 0` and `+∞` otherwise.
pub fn fc_divergence(
    p: &DenseDistribution,
    q: &DenseDistribution,
    weights: &ScanWeights,
) -> Result<ExtReal> {
    Ok(fc_terms(p, q, weights)?
        .into_iter()
        .zip(weights.as_slice())
        .map(|(t, &c)| c * t)
        .sum())
}

/// Per-node `KL(p‖E_i(q))`.
pub fn fc_terms(
    p: &DenseDistribution,
    q: &DenseDistribution,
    weights: &ScanWeights,
) -> Result<Vec<ExtReal>> {
    same_space(p, q)?;
    let space = p.space();
    if weights.len() != space.n() {
        return Err(Error::domain("one scan weight per variable required"));
    }
    let (pp, qq) = (p.probs(), q.probs());
    crate::par::map_range(space.n(), |i| -> Result<ExtReal> {
        let card = space.card(i);
        let mut acc = 0.0;
        for ctx in 0..space.context_len(i)? {
            let (mut pm, mut qm) = (0.0, 0.0);
            for v in 0..card {
                let x = space.state_of(ctx, i, v);
                pm += pp[x];
                qm += qq[x];
            }
            if pm == 0.0 {
                continue;
            }
            if qm == 0.0 {
                return Ok(ExtReal::Infinite);
            }
            for v in 0..card {
                let x = space.state_of(ctx, i, v);
                let (a, b) = (pp[x], qq[x]);
                if a > 0.0 {
                    if b == 0.0 {
                        return Ok(ExtReal::Infinite);
                    }
                    acc += a * ((a / pm) / (b / qm)).ln();
                }
            }
        }
        Ok(ExtReal::Finite(acc))
    })
    .into_iter()
    .collect()
}

/// `FC(p‖q)` as a difference of pseudo-log-likelihoods:
/// `⟨Σ c_i log p(X_i|X_{-i})⟩_p − ⟨Σ c_i log q(X_i|X_{-i})⟩_p`.
///
/// Same value as [`fc_divergence`] via a different summation order.
pub fn fc_divergence_pseudo_likelihood(
    p: &DenseDistribution,
    q: &DenseDistribution,
    weights: &ScanWeights,
) -> Result<ExtReal> {
    same_space(p, q)?;
    let space = p.space();
    let n = space.n();
    let c = weights.as_slice();
    let context_mass = |probs: &[f64], i: usize| -> Result<Vec<f64>> {
        let mut m = vec![0.0; space.context_len(i)?];
        for (x, &v) in probs.iter().enumerate() {
            m[space.context_of(x, i)] += v;
        }
        Ok(m)
    };
    let mut pm = Vec::with_capacity(n);
    let mut qm = Vec::with_capacity(n);
    for i in 0..n {
        pm.push(context_mass(p.probs(), i)?);
        qm.push(context_mass(q.probs(), i)?);
    }
    let (mut self_pll, mut cross_pll) = (0.0, 0.0);
    for (x, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a == 0.0 {
            continue;
        }
        for i in 0..n {
            if c[i] == 0.0 {
                continue;
            }
            let ctx = space.context_of(x, i);
            if b == 0.0 || qm[i][ctx] == 0.0 {
                return Ok(ExtReal::Infinite);
            }
            self_pll += a * c[i] * (a / pm[i][ctx]).ln();
            cross_pll += a * c[i] * (b / qm[i][ctx]).ln();
        }
    }
    Ok(ExtReal::Finite(self_pll - cross_pll))
}

/// `FC_lim(p) = Σ_i c_i KL(p‖E(θ_i))`.
pub fn fc_limit(p: &DenseDistribution, network: &DependencyNetwork) -> Result<ExtReal> {
    if p.space() != network.space() {
        return Err(Error::domain(
            "distribution and network on different spaces",
        ));
    }
    let kernels = network.kernels()?;
    fc_limit_kernels(p, &kernels)
}

/// Per-node `KL(p‖E(θ_i))` over materialized kernels.
pub fn manifold_terms(p: &DenseDistribution, kernels: &Kernels) -> Result<Vec<ExtReal>> {
    if p.space() != &kernels.space {
        return Err(Error::domain(
            "distribution and kernels on different spaces",
        ));
    }
    crate::par::map_slice(&kernels.nodes, |k| kl_to_kernel(p, k))
        .into_iter()
        .collect()
}

pub fn fc_limit_kernels(p: &DenseDistribution, kernels: &Kernels) -> Result<ExtReal> {
    Ok(manifold_terms(p, kernels)?
        .into_iter()
        .zip(kernels.weights.as_slice())
        .map(|(t, &c)| c * t)
        .sum())
}

/// Per-node `KL(p^D‖E(θ_i))` straight from samples, without a dense joint.
/// Works at any scale; agrees with [`manifold_terms`] on `p^D`.
pub fn manifold_terms_from_data(
    data: &Dataset,
    network: &DependencyNetwork,
) -> Result<Vec<ExtReal>> {
    if data.space() != network.space() {
        return Err(Error::domain("data and network on different spaces"));
    }
    if data.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    let n = data.space().n();
    let total = data.len() as f64;
    Ok(crate::par::map_range(n, |i| {
        let card = data.space().card(i);
        let mut counts: HashMap<Vec<usize>, Vec<u64>> = HashMap::new();
        for s in data.samples() {
            let mut key = s.to_vec();
            key[i] = 0;
            counts.entry(key).or_insert_with(|| vec![0; card])[s[i]] += 1;
        }
        let mut acc = 0.0;
        for (key, row) in &counts {
            let ctx_total: u64 = row.iter().sum();
            let theta = network.conditional_row(i, key);
            for (v, &cnt) in row.iter().enumerate() {
                if cnt == 0 {
                    continue;
                }
                if theta[v] == 0.0 {
                    return ExtReal::Infinite;
                }
                let pv = cnt as f64 / ctx_total as f64;
                acc += (cnt as f64 / total) * (pv / theta[v]).ln();
            }
        }
        ExtReal::Finite(acc)
    }))
}

/// `p(X_i | x_{-i})` at flat context `ctx`, or `None` if the context has no mass.
pub fn full_conditional(p: &DenseDistribution, i: usize, ctx: usize) -> Option<Vec<f64>> {
    let space = p.space();
    let row: Vec<f64> = (0..space.card(i))
        .map(|v| p.probs()[space.state_of(ctx, i, v)])
        .collect();
    let mass: f64 = row.iter().sum();
    (mass > 0.0).then(|| row.into_iter().map(|v| v / mass).collect())
}

/// `(1−λ) p0 + λ p1`.
pub fn m_mixture(
    p0: &DenseDistribution,
    p1: &DenseDistribution,
    lambda: f64,
) -> Result<DenseDistribution> {
    same_space(p0, p1)?;
    let w = p0
        .probs()
        .iter()
        .zip(p1.probs())
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect::<Vec<_>>();
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::domain(format!(
            "m-mixture at λ = {lambda} leaves the simplex"
        )));
    }
    DenseDistribution::from_weights(p0.space().clone(), w)
}

/// `p0^{1−λ} p1^λ`, renormalized. Both inputs need full support.
pub fn e_mixture(
    p0: &DenseDistribution,
    p1: &DenseDistribution,
    lambda: f64,
) -> Result<DenseDistribution> {
    same_space(p0, p1)?;
    if p0.probs().iter().chain(p1.probs()).any(|&v| v <= 0.0) {
        return Err(Error::domain("e-mixture needs full support"));
    }
    let logs: Vec<f64> = p0
        .probs()
        .iter()
        .zip(p1.probs())
        .map(|(a, b)| (1.0 - lambda) * a.ln() + lambda * b.ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DenseDistribution::from_weights(
        p0.space().clone(),
        logs.into_iter().map(|l| (l - top).exp()).collect(),
    )
}

fn node_kernel(
    p: &DenseDistribution,
    i: usize,
    theta: &ConditionalTable,
    source: &InformationSource,
) -> Result<NodeKernel> {
    let space = p.space();
    check_node(space.n(), i)?;
    if source.owner() != i || theta.owner() != i {
        return Err(Error::domain(format!(
            "table or source not owned by node {i}"
        )));
    }
    if theta.card() != space.card(i) || theta.leaf_count() != source.leaf_count() {
        return Err(Error::domain("table shape does not match source and space"));
    }
    Ok(NodeKernel {
        var: i,
        leaf_of_ctx: source.materialize(space)?,
        table: theta.clone(),
    })
}

fn check_node(n: usize, i: usize) -> Result<()> {
    if i >= n {
        return Err(Error::domain(format!(
            "node {i} not in a space of {n} variables"
        )));
    }
    Ok(())
}

fn same_space(p: &DenseDistribution, q: &DenseDistribution) -> Result<()> {
    if p.space() != q.space() {
        return Err(Error::domain("distributions live on different spaces"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{genuine_gibbs_network, SourceOp};
    use crate::space::VariableSpace;
    use approx::assert_abs_diff_eq;

    fn sp(c: &[usize]) -> VariableSpace {
        VariableSpace::new(c.to_vec()).unwrap()
    }

    fn dist(c: &[usize], probs: &[f64]) -> DenseDistribution {
        DenseDistribution::new(sp(c), probs.to_vec()).unwrap()
    }

    fn fin(x: ExtReal) -> f64 {
        x.finite().expect("finite")
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&dist(&[2, 2], &[0.0, 1.0, 0.0, 0.0])), 0.0);
        assert_abs_diff_eq!(
            entropy(&dist(&[2, 2], &[0.25; 4])),
            4f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            entropy(&dist(&[2, 2], &[0.5, 0.0, 0.25, 0.25])),
            1.5 * 2f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn conditional_entropy_examples() {
        let space = sp(&[2, 2]);
        let y =
            InformationSource::from_ops(1, &space, &[SourceOp::Split { leaf: 0, var: 0 }]).unwrap();
        // independent: p(x0) = (0.3, 0.7), p(x1) = (0.6, 0.4)
        let p = dist(&[2, 2], &[0.18, 0.42, 0.12, 0.28]);
        let h1 = entropy(&p.marginal(&[1]).unwrap());
        assert_abs_diff_eq!(
            conditional_entropy(&p, 1, Conditioning::Source(&y)).unwrap(),
            h1,
            epsilon = 1e-14
        );
        let det = dist(&[2, 2], &[0.4, 0.0, 0.0, 0.6]);
        assert_eq!(
            conditional_entropy(&det, 1, Conditioning::Source(&y)).unwrap(),
            0.0
        );
        let p = dist(&[2, 2], &[0.25, 0.0, 0.25, 0.5]);
        assert_abs_diff_eq!(
            conditional_entropy(&p, 1, Conditioning::Source(&y)).unwrap(),
            0.5 * 2f64.ln(),
            epsilon = 1e-15
        );
        // constant source gives the marginal entropy, which is larger
        let c = InformationSource::constant(1, &space).unwrap();
        let hc = conditional_entropy(&p, 1, Conditioning::Source(&c)).unwrap();
        let ha = conditional_entropy(&p, 1, Conditioning::AllOthers).unwrap();
        assert!(hc >= ha);
        assert_abs_diff_eq!(
            hc,
            -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[2], &[0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), ExtReal::ZERO);
        let q = dist(&[2], &[0.25, 0.75]);
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(fin(kl_divergence(&p, &q).unwrap()), want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.143841, epsilon = 1e-6);
        let a = dist(&[2], &[1.0, 0.0]);
        let b = dist(&[2], &[0.0, 1.0]);
        assert_eq!(kl_divergence(&a, &b).unwrap(), ExtReal::Infinite);
    }

    fn theta_08() -> (InformationSource, ConditionalTable) {
        let space = sp(&[2, 2]);
        (
            InformationSource::constant(0, &space).unwrap(),
            ConditionalTable::new(0, 2, vec![0.2, 0.8]).unwrap(),
        )
    }

    #[test]
    fn manifold_kl_and_projection_examples() {
        let u = dist(&[2, 2], &[0.25; 4]);
        let (src, th) = theta_08();
        let kl = fin(kl_to_full_conditional_manifold(&u, 0, &th, &src).unwrap());
        let want = 0.5 * (0.5f64 / 0.2).ln() + 0.5 * (0.5f64 / 0.8).ln();
        assert_abs_diff_eq!(kl, want, epsilon = 1e-15);
        assert_abs_diff_eq!(want, 0.223144, epsilon = 1e-6);

        let q = m_project(&u, 0, &th, &src).unwrap();
        for (a, b) in q.probs().iter().zip(&[0.1, 0.4, 0.1, 0.4]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(fin(kl_divergence(&u, &q).unwrap()), kl, epsilon = 1e-15);
        // fixed point
        let qq = m_project(&q, 0, &th, &src).unwrap();
        for (a, b) in q.probs().iter().zip(qq.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-16);
        }
        assert_abs_diff_eq!(
            fin(kl_to_full_conditional_manifold(&q, 0, &th, &src).unwrap()),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_theta_gives_infinite_manifold_kl() {
        let u = dist(&[2, 2], &[0.25; 4]);
        let space = sp(&[2, 2]);
        let src = InformationSource::constant(0, &space).unwrap();
        let th = ConditionalTable::new(0, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(
            kl_to_full_conditional_manifold(&u, 0, &th, &src).unwrap(),
            ExtReal::Infinite
        );
    }

    #[test]
    fn fc_of_products_is_weighted_marginal_kl() {
        let prod = |a: f64, b: f64| {
            dist(
                &[2, 2],
                &[(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b],
            )
        };
        let p = prod(0.3, 0.6);
        let q = prod(0.55, 0.2);
        let w = ScanWeights::uniform(2);
        let fc = fin(fc_divergence(&p, &q, &w).unwrap());
        let k0 =
            fin(kl_divergence(&p.marginal(&[0]).unwrap(), &q.marginal(&[0]).unwrap()).unwrap());
        let k1 =
            fin(kl_divergence(&p.marginal(&[1]).unwrap(), &q.marginal(&[1]).unwrap()).unwrap());
        assert_abs_diff_eq!(fc, 0.5 * k0 + 0.5 * k1, epsilon = 1e-14);
        assert_eq!(fc_divergence(&p, &p, &w).unwrap(), ExtReal::ZERO);
        let pll = fin(fc_divergence_pseudo_likelihood(&p, &q, &w).unwrap());
        assert_abs_diff_eq!(fc, pll, epsilon = 1e-14);
    }

    #[test]
    fn fc_support_conventions() {
        let w = ScanWeights::uniform(2);
        // q(x_{-0} = 1) = 0 while p puts mass there
        let p = dist(&[2, 2], &[0.25; 4]);
        let q = dist(&[2, 2], &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(fc_divergence(&p, &q, &w).unwrap(), ExtReal::Infinite);
        assert_eq!(
            fc_divergence_pseudo_likelihood(&p, &q, &w).unwrap(),
            ExtReal::Infinite
        );
        // both vanish on the context: unconstrained, contributes 0
        let p = dist(&[2, 2], &[0.5, 0.5, 0.0, 0.0]);
        let q = dist(&[2, 2], &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(fc_divergence(&p, &q, &w).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn fc_limit_of_genuine_gibbs_is_zero() {
        let p = dist(&[2, 3], &[0.1, 0.2, 0.05, 0.15, 0.3, 0.2]);
        let g = genuine_gibbs_network(&p).unwrap();
        assert_abs_diff_eq!(fin(fc_limit(&p, &g.network).unwrap()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_node_fc_limit() {
        let space = sp(&[3]);
        let p = dist(&[3], &[0.2, 0.3, 0.5]);
        let src = InformationSource::constant(0, &space).unwrap();
        let th = ConditionalTable::new(0, 3, vec![0.3, 0.3, 0.4]).unwrap();
        let net = DependencyNetwork::new(
            space,
            vec![crate::network::Node {
                source: src.clone(),
                table: th.clone(),
            }],
            ScanWeights::uniform(1),
        )
        .unwrap();
        assert_eq!(
            fc_limit(&p, &net).unwrap(),
            kl_to_full_conditional_manifold(&p, 0, &th, &src).unwrap()
        );
    }

    #[test]
    fn ext_real_arithmetic() {
        let a = ExtReal::Finite(1.0);
        assert_eq!(a + ExtReal::Finite(2.0), ExtReal::Finite(3.0));
        assert_eq!(a + ExtReal::Infinite, ExtReal::Infinite);
        assert_eq!(0.0 * ExtReal::Infinite, ExtReal::ZERO);
        assert!(ExtReal::Finite(1e300) < ExtReal::Infinite);
        assert_eq!(ExtReal::Infinite.to_f64(), f64::INFINITY);
    }

    #[test]
    fn scan_weights_validation() {
        assert!(ScanWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(ScanWeights::new(vec![0.5, 0.4]).is_err());
        assert!(ScanWeights::new(vec![1.5, -0.5]).is_err());
        assert!(ScanWeights::new(vec![]).is_err());
    }
}
