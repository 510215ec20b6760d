//! The dependency-network model.
//!
//! Each node `i` owns an information source `Y_i(X_{-i})`, stored as the log
//! of split/merge operations that built it, and a conditional table
//! `θ_i(X_i | Y_i)` with one row per leaf.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScanWeights;
use crate::space::{default_names, DenseDistribution, VariableSpace};

/// Row-sum tolerance for conditional tables.
pub const ROW_TOL: f64 = 1e-12;

/// Current model file version.
pub const MODEL_VERSION: u32 = 1;

/// One edit of a leaf partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceOp {
    /// Replace leaf `leaf` by one leaf per value of variable `var`; the new
    /// leaves are appended in ascending value order.
    Split { leaf: usize, var: usize },
    /// Fold leaf `remove` into leaf `keep` (`keep < remove`).
    Merge { keep: usize, remove: usize },
}

impl std::fmt::Display for SourceOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            SourceOp::Split { leaf, var } => write!(f, "split({leaf},{var})"),
            SourceOp::Merge { keep, remove } => write!(f, "merge({keep},{remove})"),
        }
    }
}

/// Node `i`'s function `Y_i(X_{-i})` as a replayable op log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InformationSource {
    owner: usize,
    cards: Vec<usize>,
    ops: Vec<SourceOp>,
    /// Leaf count before each op.
    before: Vec<usize>,
    leaf_count: usize,
}

impl InformationSource {
    /// The identically-zero source: a single leaf.
    pub fn constant(owner: usize, space: &VariableSpace) -> Result<Self> {
        if owner >= space.n() {
            return Err(Error::domain(format!("node {owner} not in space")));
        }
        Ok(Self {
            owner,
            cards: space.cardinalities().to_vec(),
            ops: Vec::new(),
            before: Vec::new(),
            leaf_count: 1,
        })
    }

    /// Replay `ops` from the constant source, rejecting malformed logs.
    pub fn from_ops(owner: usize, space: &VariableSpace, ops: &[SourceOp]) -> Result<Self> {
        let mut src = Self::constant(owner, space)?;
        for (k, &op) in ops.iter().enumerate() {
            src.push(op)
                .map_err(|e| Error::ModelCorruption(format!("node {owner}, op {k}: {e}")))?;
        }
        Ok(src)
    }

    /// A one-to-one source: split every leaf on every `j ≠ i`, in index order.
    pub fn lossless(owner: usize, space: &VariableSpace) -> Result<Self> {
        let mut src = Self::constant(owner, space)?;
        for j in (0..space.n()).filter(|&j| j != owner) {
            for _ in 0..src.leaf_count {
                // leaf 0 is always the oldest leaf not yet split on j
                src.push(SourceOp::Split { leaf: 0, var: j })?;
            }
        }
        Ok(src)
    }

    /// Append one op after validating it against the current leaf set.
    pub fn push(&mut self, op: SourceOp) -> Result<()> {
        let count = self.leaf_count;
        let next = match op {
            SourceOp::Split { leaf, var } => {
                if var == self.owner {
                    return Err(Error::domain(format!(
                        "node {} cannot split on its own variable",
                        self.owner
                    )));
                }
                if var >= self.cards.len() {
                    return Err(Error::domain(format!("split variable {var} not in space")));
                }
                if leaf >= count {
                    return Err(Error::domain(format!(
                        "split of leaf {leaf}, only {count} leaves"
                    )));
                }
                count - 1 + self.cards[var]
            }
            SourceOp::Merge { keep, remove } => {
                if keep >= remove {
                    return Err(Error::domain(format!(
                        "merge({keep},{remove}) requires keep < remove"
                    )));
                }
                if remove >= count {
                    return Err(Error::domain(format!(
                        "merge of leaf {remove}, only {count} leaves"
                    )));
                }
                count - 1
            }
        };
        self.ops.push(op);
        self.before.push(count);
        self.leaf_count = next;
        Ok(())
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn ops(&self) -> &[SourceOp] {
        &self.ops
    }

    /// `|Y_i|`.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Leaf index of `state`. Component `owner` is ignored.
    pub fn evaluate(&self, state: &[usize]) -> usize {
        let mut y = 0;
        for (op, &count) in self.ops.iter().zip(&self.before) {
            y = apply_op(*op, count, y, state);
        }
        y
    }

    /// Leaf index of every `X_{-i}` assignment, in context order.
    pub fn materialize(&self, space: &VariableSpace) -> Result<Vec<usize>> {
        self.check_space(space)?;
        let ctx_len = space.context_len(self.owner)?;
        let mut state = vec![0; space.n()];
        Ok((0..ctx_len)
            .map(|ctx| {
                space.decode_into(space.state_of(ctx, self.owner, 0), &mut state);
                self.evaluate(&state)
            })
            .collect())
    }

    pub(crate) fn check_space(&self, space: &VariableSpace) -> Result<()> {
        if space.cardinalities() != self.cards.as_slice() {
            return Err(Error::domain(format!(
                "source for node {} built over {:?}, used with {space}",
                self.owner, self.cards
            )));
        }
        Ok(())
    }
}

/// Leaf re-indexing for one op; `count` is the leaf count before it.
#[inline]
pub(crate) fn apply_op(op: SourceOp, count: usize, y: usize, state: &[usize]) -> usize {
    match op {
        SourceOp::Split { leaf, var } => {
            if y == leaf {
                count - 1 + state[var]
            } else if y > leaf {
                y - 1
            } else {
                y
            }
        }
        SourceOp::Merge { keep, remove } => {
            if y == remove {
                keep
            } else if y > remove {
                y - 1
            } else {
                y
            }
        }
    }
}

/// `θ_i(X_i | Y_i)`: a row-stochastic `leaf_count × |X_i|` table.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    owner: usize,
    card: usize,
    rows: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(owner: usize, card: usize, rows: Vec<f64>) -> Result<Self> {
        if card < 2 || rows.is_empty() || !rows.len().is_multiple_of(card) {
            return Err(Error::domain(format!(
                "table of {} entries is not a whole number of rows of width {card}",
                rows.len()
            )));
        }
        for (y, row) in rows.chunks(card).enumerate() {
            if row.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
                return Err(Error::domain(format!(
                    "node {owner} row {y} has an invalid entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::domain(format!(
                    "node {owner} row {y} sums to {s:.17}"
                )));
            }
        }
        Ok(Self { owner, card, rows })
    }

    /// Every row uniform.
    pub fn uniform(owner: usize, card: usize, leaves: usize) -> Result<Self> {
        Self::new(owner, card, vec![1.0 / card as f64; card * leaves.max(1)])
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn card(&self) -> usize {
        self.card
    }

    pub fn leaf_count(&self) -> usize {
        self.rows.len() / self.card
    }

    pub fn row(&self, leaf: usize) -> &[f64] {
        &self.rows[leaf * self.card..(leaf + 1) * self.card]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Smallest entry; used as the sufficient ergodicity check.
    pub fn min_entry(&self) -> f64 {
        self.rows.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One node of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub source: InformationSource,
    pub table: ConditionalTable,
}

/// `n` nodes `(Y_i, θ_i)` plus scan weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyNetwork {
    space: VariableSpace,
    names: Vec<String>,
    nodes: Vec<Node>,
    weights: ScanWeights,
}

impl DependencyNetwork {
    pub fn new(space: VariableSpace, nodes: Vec<Node>, weights: ScanWeights) -> Result<Self> {
        let n = space.n();
        if nodes.len() != n {
            return Err(Error::domain(format!(
                "{} nodes for {n} variables",
                nodes.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::domain("one scan weight per node required"));
        }
        for (i, node) in nodes.iter().enumerate() {
            node.source.check_space(&space)?;
            if node.source.owner() != i || node.table.owner() != i {
                return Err(Error::domain(format!("node {i} has mismatched owner")));
            }
            if node.table.card() != space.card(i) {
                return Err(Error::domain(format!(
                    "node {i} table width {} != |X_{i}| = {}",
                    node.table.card(),
                    space.card(i)
                )));
            }
            if node.table.leaf_count() != node.source.leaf_count() {
                return Err(Error::domain(format!(
                    "node {i}: table has {} rows, source has {} leaves",
                    node.table.leaf_count(),
                    node.source.leaf_count()
                )));
            }
        }
        let names = default_names(n);
        Ok(Self {
            space,
            names,
            nodes,
            weights,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.space.n() {
            return Err(Error::domain("one name per variable required"));
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: ScanWeights) -> Result<Self> {
        if weights.len() != self.space.n() {
            return Err(Error::domain("one scan weight per node required"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn weights(&self) -> &ScanWeights {
        &self.weights
    }

    /// `θ_i(· | Y_i(state))`.
    pub fn conditional_row(&self, i: usize, state: &[usize]) -> &[f64] {
        let node = &self.nodes[i];
        node.table.row(node.source.evaluate(state))
    }

    /// Minimum table entry over all nodes. Positive ⇒ the single-site chain
    /// is irreducible and aperiodic.
    pub fn min_entry(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.table.min_entry())
            .fold(f64::INFINITY, f64::min)
    }

    /// Materialize every source as a dense context → leaf map.
    pub fn kernels(&self) -> Result<Kernels> {
        let nodes = crate::par::map_range(self.space.n(), |i| -> Result<NodeKernel> {
            let node = &self.nodes[i];
            Ok(NodeKernel {
                var: i,
                leaf_of_ctx: node.source.materialize(&self.space)?,
                table: node.table.clone(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Kernels {
            space: self.space.clone(),
            nodes,
            weights: self.weights.clone(),
        })
    }

    /// Kernels of the clamped chain: only unclamped nodes, over the space of
    /// the unclamped variables (ascending index order), with each source
    /// evaluated at the clamped values and weights `1/(n − |C|)`.
    pub fn clamped_kernels(&self, clamp: &[(usize, usize)]) -> Result<(Kernels, Vec<usize>)> {
        let n = self.space.n();
        let mut fixed: Vec<Option<usize>> = vec![None; n];
        for &(v, val) in clamp {
            if v >= n || val >= self.space.card(v) {
                return Err(Error::domain(format!("clamp {v}={val} out of range")));
            }
            if fixed[v].replace(val).is_some() {
                return Err(Error::domain(format!("variable {v} clamped twice")));
            }
        }
        let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
        if free.is_empty() {
            return Err(Error::domain("every variable is clamped"));
        }
        let sub = self.space.subspace(&free)?;
        let mut base = vec![0; n];
        for (v, f) in fixed.iter().enumerate() {
            if let Some(val) = f {
                base[v] = *val;
            }
        }
        let mut nodes = Vec::with_capacity(free.len());
        for (k, &i) in free.iter().enumerate() {
            let node = &self.nodes[i];
            let ctx_len = sub.context_len(k)?;
            let mut full = base.clone();
            let mut substate = vec![0; free.len()];
            let leaf_of_ctx = (0..ctx_len)
                .map(|ctx| {
                    sub.decode_into(sub.state_of(ctx, k, 0), &mut substate);
                    for (&v, &val) in free.iter().zip(&substate) {
                        full[v] = val;
                    }
                    node.source.evaluate(&full)
                })
                .collect();
            nodes.push(NodeKernel {
                var: k,
                leaf_of_ctx,
                table: node.table.clone(),
            });
        }
        let weights = ScanWeights::uniform(free.len());
        Ok((
            Kernels {
                space: sub,
                nodes,
                weights,
            },
            free,
        ))
    }

    /// Serialize to the versioned JSON model format. Table entries are
    /// written with 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let wire = ModelOut {
            version: MODEL_VERSION,
            cardinalities: self.space.cardinalities(),
            names: &self.names,
            weights: self.weights.as_slice().iter().map(|&w| Sig17(w)).collect(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, node)| NodeOut {
                    i,
                    ops: node.source.ops(),
                    table: node
                        .table
                        .rows()
                        .chunks(node.table.card())
                        .map(|r| r.iter().map(|&t| Sig17(t)).collect())
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_json()?.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Parse and validate a model file.
    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ModelIn = serde_json::from_str(text)?;
        if wire.version != MODEL_VERSION {
            return Err(Error::Version {
                found: wire.version,
                expected: MODEL_VERSION,
            });
        }
        let corrupt = |e: Error| match e {
            Error::ModelCorruption(_) => e,
            other => Error::ModelCorruption(other.to_string()),
        };
        let space = VariableSpace::new(wire.cardinalities).map_err(corrupt)?;
        let weights = ScanWeights::new(wire.weights).map_err(corrupt)?;
        let mut nodes: Vec<Option<Node>> = vec![None; space.n()];
        for node in wire.nodes {
            let i = node.i;
            if i >= space.n() || nodes[i].is_some() {
                return Err(Error::ModelCorruption(format!(
                    "bad or repeated node index {i}"
                )));
            }
            let source = InformationSource::from_ops(i, &space, &node.ops)?;
            let card = space.card(i);
            if node.table.iter().any(|r| r.len() != card) {
                return Err(Error::ModelCorruption(format!(
                    "node {i} table rows must have {card} entries"
                )));
            }
            let table = ConditionalTable::new(i, card, node.table.concat()).map_err(corrupt)?;
            nodes[i] = Some(Node { source, table });
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| n.ok_or_else(|| Error::ModelCorruption(format!("node {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        let net = DependencyNetwork::new(space, nodes, weights).map_err(corrupt)?;
        match wire.names {
            Some(names) => net.with_names(names).map_err(corrupt),
            None => Ok(net),
        }
    }

    pub fn read_json<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

/// Float written with 17 significant digits.
struct Sig17(f64);

impl Serialize for Sig17 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Serialize)]
struct ModelOut<'a> {
    version: u32,
    cardinalities: &'a [usize],
    names: &'a [String],
    weights: Vec<Sig17>,
    nodes: Vec<NodeOut<'a>>,
}

#[derive(Serialize)]
struct NodeOut<'a> {
    i: usize,
    ops: &'a [SourceOp],
    table: Vec<Vec<Sig17>>,
}

#[derive(Deserialize)]
struct ModelIn {
    version: u32,
    cardinalities: Vec<usize>,
    #[serde(default)]
    names: Option<Vec<String>>,
    weights: Vec<f64>,
    nodes: Vec<NodeIn>,
}

#[derive(Deserialize)]
struct NodeIn {
    i: usize,
    ops: Vec<SourceOp>,
    table: Vec<Vec<f64>>,
}

/// A node with its source materialized over the contexts of `X_{-var}`.
#[derive(Clone, Debug)]
pub struct NodeKernel {
    /// Variable index within the kernel's space.
    pub var: usize,
    pub leaf_of_ctx: Vec<usize>,
    pub table: ConditionalTable,
}

impl NodeKernel {
    /// `θ(· | context)`.
    #[inline]
    pub fn row(&self, ctx: usize) -> &[f64] {
        self.table.row(self.leaf_of_ctx[ctx])
    }
}

/// Dense view of a network (or a clamped restriction of one) for exact
/// computation.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub space: VariableSpace,
    pub nodes: Vec<NodeKernel>,
    pub weights: ScanWeights,
}

/// Result of [`genuine_gibbs_network`].
#[derive(Clone, Debug)]
pub struct GenuineGibbs {
    pub network: DependencyNetwork,
    /// Per node, the `X_{-i}` contexts with zero mass whose rows were set
    /// uniform.
    pub uniform_contexts: Vec<Vec<usize>>,
}

/// The network whose every table is a full conditional of `p`, with
/// lossless sources and uniform scan weights.
pub fn genuine_gibbs_network(p: &DenseDistribution) -> Result<GenuineGibbs> {
    let space = p.space().clone();
    let probs = p.probs();
    let built = crate::par::map_range(space.n(), |i| -> Result<(Node, Vec<usize>)> {
        let source = InformationSource::lossless(i, &space)?;
        let leaf_of_ctx = source.materialize(&space)?;
        let card = space.card(i);
        let mut rows = vec![0.0; source.leaf_count() * card];
        let mut flagged = Vec::new();
        for (ctx, &leaf) in leaf_of_ctx.iter().enumerate() {
            let row = &mut rows[leaf * card..(leaf + 1) * card];
            let mass: f64 = (0..card).map(|v| probs[space.state_of(ctx, i, v)]).sum();
            if mass > 0.0 {
                for (v, r) in row.iter_mut().enumerate() {
                    *r = probs[space.state_of(ctx, i, v)] / mass;
                }
            } else {
                row.fill(1.0 / card as f64);
                flagged.push(ctx);
            }
        }
        let table = ConditionalTable::new(i, card, rows)?;
        Ok((Node { source, table }, flagged))
    });
    let mut nodes = Vec::with_capacity(space.n());
    let mut uniform_contexts = Vec::with_capacity(space.n());
    for r in built {
        let (node, flagged) = r?;
        nodes.push(node);
        uniform_contexts.push(flagged);
    }
    let weights = ScanWeights::uniform(space.n());
    Ok(GenuineGibbs {
        network: DependencyNetwork::new(space, nodes, weights)?,
        uniform_contexts,
    })
}
