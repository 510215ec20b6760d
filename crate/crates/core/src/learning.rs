//! Parameter and structure learning.
//!
//! Each node is learned independently. For a fixed source the optimal table
//! is the empirical conditional `p^D(X_i | Y_i)`, and the reduced cost of a
//! source is `H(p^D(X_i | Y_i)) + R(k_i, N)`, which splits into per-leaf
//! costs. The greedy learner starts from a single leaf and repeatedly
//! applies the split or merge with the most negative cost change.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ScanWeights;
use crate::network::{
    apply_op, ConditionalTable, DependencyNetwork, InformationSource, Node, SourceOp,
};
use crate::space::Dataset;

/// A cost change must be below `-ACCEPT_TOL` to be applied. Absorbs
/// round-off in Δ for candidates that leave the cost unchanged.
pub const ACCEPT_TOL: f64 = 1e-13;

/// `R(k, N) = k ln N / (2N)`.
pub fn mdl_penalty(k: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("MDL penalty needs N >= 1"));
    }
    Ok(k as f64 * (n as f64).ln() / (2.0 * n as f64))
}

/// Complexity penalty `R(k, N)`.
#[derive(Clone, Default)]
pub enum PenaltySpec {
    #[default]
    Mdl,
    None,
    /// Any non-negative `R(k, N)`.
    Custom(Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>),
}

impl PenaltySpec {
    pub fn eval(&self, k: usize, n: usize) -> f64 {
        match self {
            PenaltySpec::Mdl => k as f64 * (n.max(1) as f64).ln() / (2.0 * n.max(1) as f64),
            PenaltySpec::None => 0.0,
            PenaltySpec::Custom(f) => f(k, n).max(0.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PenaltySpec::Mdl => "mdl",
            PenaltySpec::None => "none",
            PenaltySpec::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning knobs.
#[derive(Clone, Debug, Default)]
pub struct LearnConfig {
    pub penalty: PenaltySpec,
    /// Additive smoothing `α_s` of the sampling tables; `None` means `1/N`.
    pub sampling_smoothing: Option<f64>,
    /// At most this many merge candidates per iteration, taken in
    /// lexicographic `(y0, y1)` order. `Some(0)` learns trees.
    pub merge_candidate_cap: Option<usize>,
}

impl LearnConfig {
    fn alpha(&self, n: usize) -> Result<f64> {
        let a = self.sampling_smoothing.unwrap_or(1.0 / n as f64);
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::domain(format!(
                "sampling smoothing {a} must be >= 0"
            )));
        }
        Ok(a)
    }
}

/// Counts of one leaf: `N_y` and `N_{y,x_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafStats {
    pub counts: Vec<u64>,
}

impl LeafStats {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    /// `N_y`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn merged(&self, other: &LeafStats) -> LeafStats {
        LeafStats {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// `Lcost(L_y) = −(1/N) Σ_x N_{y,x} ln(N_{y,x}/N_y) + R(|X_i| − 1, N)`.
pub fn leaf_cost(stats: &LeafStats, n: usize, card_i: usize, penalty: &PenaltySpec) -> f64 {
    let n_y = stats.total();
    let mut h = 0.0;
    if n_y > 0 {
        for &c in &stats.counts {
            if c > 0 {
                h -= c as f64 * (c as f64 / n_y as f64).ln();
            }
        }
    }
    h / n as f64 + penalty.eval(card_i - 1, n)
}

/// Sufficient statistics of node `i` under the current leaf assignment.
#[derive(Clone, Debug)]
pub struct NodeStats {
    node: usize,
    card: usize,
    cards: Vec<usize>,
    n: usize,
    leaves: Vec<LeafStats>,
    /// `[leaf][j][x_j][x_i]`, flattened per leaf with `offsets[j]`.
    split: Vec<Vec<u64>>,
    offsets: Vec<usize>,
}

impl NodeStats {
    pub fn compute(data: &Dataset, i: usize, leaf_of_sample: &[usize], leaf_count: usize) -> Self {
        let cards = data.space().cardinalities().to_vec();
        let card = cards[i];
        let mut offsets = Vec::with_capacity(cards.len());
        let mut width = 0;
        for &c in &cards {
            offsets.push(width);
            width += c * card;
        }
        let mut leaves = vec![LeafStats::new(vec![0; card]); leaf_count];
        let mut split = vec![vec![0u64; width]; leaf_count];
        for (s, &y) in data.samples().zip(leaf_of_sample) {
            let xi = s[i];
            leaves[y].counts[xi] += 1;
            let row = &mut split[y];
            for (j, &xj) in s.iter().enumerate() {
                row[offsets[j] + xj * card + xi] += 1;
            }
        }
        Self {
            node: i,
            card,
            cards,
            n: data.len(),
            leaves,
            split,
            offsets,
        }
    }

    pub fn leaf(&self, y: usize) -> &LeafStats {
        &self.leaves[y]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Stats of the child `L_{y, x_j = v}`.
    pub fn child(&self, y: usize, j: usize, v: usize) -> LeafStats {
        let start = self.offsets[j] + v * self.card;
        LeafStats::new(self.split[y][start..start + self.card].to_vec())
    }

    /// `Σ_y Lcost(L_y)`.
    pub fn cost(&self, penalty: &PenaltySpec) -> f64 {
        self.leaves
            .iter()
            .map(|l| leaf_cost(l, self.n, self.card, penalty))
            .sum()
    }

    /// A split that cannot change the partition: empty leaf, or `X_j`
    /// constant within it.
    pub fn is_redundant_split(&self, y: usize, j: usize) -> bool {
        let present = (0..self.cards[j])
            .filter(|&v| self.child(y, j, v).total() > 0)
            .count();
        present <= 1
    }
}

/// `Σ_{x_j} Lcost(L_{y,x_j}) − Lcost(L_y)`.
pub fn delta_split(stats: &NodeStats, y: usize, j: usize, penalty: &PenaltySpec) -> Result<f64> {
    if j == stats.node || j >= stats.cards.len() {
        return Err(Error::domain(format!(
            "cannot split node {} on variable {j}",
            stats.node
        )));
    }
    if y >= stats.leaf_count() {
        return Err(Error::domain(format!("leaf {y} does not exist")));
    }
    let children: f64 = (0..stats.cards[j])
        .map(|v| leaf_cost(&stats.child(y, j, v), stats.n, stats.card, penalty))
        .sum();
    Ok(children - leaf_cost(stats.leaf(y), stats.n, stats.card, penalty))
}

/// `Lcost(L_{y0} ∪ L_{y1}) − Lcost(L_{y0}) − Lcost(L_{y1})`.
pub fn delta_merge(stats: &NodeStats, y0: usize, y1: usize, penalty: &PenaltySpec) -> Result<f64> {
    if y0 >= y1 || y1 >= stats.leaf_count() {
        return Err(Error::domain(format!("invalid merge({y0},{y1})")));
    }
    let (a, b) = (stats.leaf(y0), stats.leaf(y1));
    let (n, c) = (stats.n, stats.card);
    Ok(leaf_cost(&a.merged(b), n, c, penalty)
        - leaf_cost(a, n, c, penalty)
        - leaf_cost(b, n, c, penalty))
}

/// `θ_i = p^D(X_i | Y_i)`; empty leaves get uniform rows.
pub fn learn_parameters(
    data: &Dataset,
    i: usize,
    source: &InformationSource,
) -> Result<ConditionalTable> {
    smoothed_table(data, i, source, 0.0)
}

/// `(N_{y,x} + α) / (N_y + α|X_i|)`, uniform for empty unsmoothed leaves.
pub fn sampling_table(
    data: &Dataset,
    i: usize,
    source: &InformationSource,
    alpha: f64,
) -> Result<ConditionalTable> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("smoothing {alpha} must be >= 0")));
    }
    smoothed_table(data, i, source, alpha)
}

fn smoothed_table(
    data: &Dataset,
    i: usize,
    source: &InformationSource,
    alpha: f64,
) -> Result<ConditionalTable> {
    if source.owner() != i {
        return Err(Error::domain("source belongs to another node"));
    }
    source.check_space(data.space())?;
    let card = data.space().card(i);
    let leaves = source.leaf_count();
    let mut counts = vec![0u64; leaves * card];
    for s in data.samples() {
        counts[source.evaluate(s) * card + s[i]] += 1;
    }
    let mut rows = vec![0.0; leaves * card];
    for (row, cnt) in rows.chunks_mut(card).zip(counts.chunks(card)) {
        let total: u64 = cnt.iter().sum();
        let denom = total as f64 + alpha * card as f64;
        if denom > 0.0 {
            for (r, &c) in row.iter_mut().zip(cnt) {
                *r = (c as f64 + alpha) / denom;
            }
        } else {
            row.fill(1.0 / card as f64);
        }
    }
    ConditionalTable::new(i, card, rows)
}

/// A scored candidate edit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub op: SourceOp,
    pub delta: f64,
}

impl Candidate {
    /// Total order: Δ, then splits before merges, then lexicographic indices.
    fn cmp_key(&self, other: &Candidate) -> Ordering {
        let rank = |op: &SourceOp| match *op {
            SourceOp::Split { leaf, var } => (0, leaf, var),
            SourceOp::Merge { keep, remove } => (1, keep, remove),
        };
        self.delta
            .partial_cmp(&other.delta)
            .unwrap_or(Ordering::Equal)
            .then_with(|| rank(&self.op).cmp(&rank(&other.op)))
    }
}

/// One row of a cost trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `None` for the initial single-leaf source.
    pub op: Option<SourceOp>,
    pub delta: f64,
    /// `cost′` after this iteration.
    pub cost: f64,
    pub leaf_count: usize,
}

/// Write per-node cost traces as CSV:
/// `node,iteration,op,delta,cost,leaf_count`.
pub fn write_trace_csv<'t, W: Write>(
    traces: impl IntoIterator<Item = (usize, &'t [TraceEntry])>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "iteration", "op", "delta", "cost", "leaf_count"])?;
    for (node, e) in traces
        .into_iter()
        .flat_map(|(i, t)| t.iter().map(move |e| (i, e)))
    {
        w.write_record([
            node.to_string(),
            e.iteration.to_string(),
            e.op.map_or_else(|| "init".to_string(), |op| op.to_string()),
            format!("{:.17e}", e.delta),
            format!("{:.17e}", e.cost),
            e.leaf_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Greedy split/merge search for one node, exposed step by step.
pub struct StructureLearner<'a> {
    data: &'a Dataset,
    node: usize,
    penalty: PenaltySpec,
    merge_cap: Option<usize>,
    source: InformationSource,
    leaf_of_sample: Vec<usize>,
    stats: NodeStats,
    trace: Vec<TraceEntry>,
}

impl<'a> StructureLearner<'a> {
    pub fn new(data: &'a Dataset, i: usize, config: &LearnConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::domain("structure learning needs N >= 1"));
        }
        let source = InformationSource::constant(i, data.space())?;
        let leaf_of_sample = vec![0; data.len()];
        let stats = NodeStats::compute(data, i, &leaf_of_sample, 1);
        let cost = stats.cost(&config.penalty);
        Ok(Self {
            data,
            node: i,
            penalty: config.penalty.clone(),
            merge_cap: config.merge_candidate_cap,
            source,
            leaf_of_sample,
            stats,
            trace: vec![TraceEntry {
                iteration: 0,
                op: None,
                delta: 0.0,
                cost,
                leaf_count: 1,
            }],
        })
    }

    pub fn source(&self) -> &InformationSource {
        &self.source
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    /// Current `cost′`.
    pub fn cost(&self) -> f64 {
        self.trace.last().map_or(0.0, |e| e.cost)
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Every non-redundant split and the (capped) merges, with their Δ.
    pub fn candidates(&self) -> Vec<Candidate> {
        let leaves = self.stats.leaf_count();
        let n_vars = self.data.space().n();
        let mut ops = Vec::new();
        for y in 0..leaves {
            for j in (0..n_vars).filter(|&j| j != self.node) {
                if !self.stats.is_redundant_split(y, j) {
                    ops.push(SourceOp::Split { leaf: y, var: j });
                }
            }
        }
        let cap = self.merge_cap.unwrap_or(usize::MAX);
        let merges = (0..leaves)
            .flat_map(|a| (a + 1..leaves).map(move |b| SourceOp::Merge { keep: a, remove: b }))
            .take(cap);
        ops.extend(merges);
        crate::par::map_slice(&ops, |&op| Candidate {
            op,
            delta: match op {
                SourceOp::Split { leaf, var } => delta_split(&self.stats, leaf, var, &self.penalty),
                SourceOp::Merge { keep, remove } => {
                    delta_merge(&self.stats, keep, remove, &self.penalty)
                }
            }
            .expect("candidate built from valid leaves"),
        })
    }

    /// The minimum-Δ candidate under the fixed tie-break order.
    pub fn best_candidate(&self) -> Option<Candidate> {
        self.candidates().into_iter().min_by(|a, b| a.cmp_key(b))
    }

    /// Apply an edit regardless of its Δ.
    pub fn apply(&mut self, op: SourceOp) -> Result<()> {
        let count = self.source.leaf_count();
        self.source.push(op)?;
        for (y, s) in self.leaf_of_sample.iter_mut().zip(self.data.samples()) {
            *y = apply_op(op, count, *y, s);
        }
        self.stats = NodeStats::compute(
            self.data,
            self.node,
            &self.leaf_of_sample,
            self.source.leaf_count(),
        );
        Ok(())
    }

    /// One greedy iteration; `None` once no candidate lowers the cost.
    pub fn step(&mut self) -> Result<Option<TraceEntry>> {
        let Some(best) = self.best_candidate() else {
            return Ok(None);
        };
        if best.delta >= -ACCEPT_TOL {
            return Ok(None);
        }
        self.apply(best.op)?;
        let entry = TraceEntry {
            iteration: self.trace.len(),
            op: Some(best.op),
            delta: best.delta,
            cost: self.stats.cost(&self.penalty),
            leaf_count: self.source.leaf_count(),
        };
        self.trace.push(entry.clone());
        Ok(Some(entry))
    }

    /// Run to termination.
    pub fn run(mut self) -> Result<(InformationSource, Vec<TraceEntry>)> {
        while self.step()?.is_some() {}
        Ok((self.source, self.trace))
    }
}

/// Result of learning one node.
#[derive(Clone, Debug)]
pub struct LearnedNode {
    pub source: InformationSource,
    /// Unsmoothed `p^D(X_i | Y_i)`.
    pub table: ConditionalTable,
    pub trace: Vec<TraceEntry>,
}

/// Greedy structure learning of node `i` plus its empirical table.
pub fn structure_learn_node(data: &Dataset, i: usize, config: &LearnConfig) -> Result<LearnedNode> {
    let (source, trace) = StructureLearner::new(data, i, config)?.run()?;
    let table = learn_parameters(data, i, &source)?;
    Ok(LearnedNode {
        source,
        table,
        trace,
    })
}

/// A learned network plus per-node learning output.
#[derive(Clone, Debug)]
pub struct LearnedNetwork {
    /// Uniform weights, smoothed sampling tables.
    pub network: DependencyNetwork,
    pub nodes: Vec<LearnedNode>,
    pub alpha: f64,
}

/// Learn every node independently and assemble the sampling network.
pub fn learn_network(data: &Dataset, config: &LearnConfig) -> Result<LearnedNetwork> {
    if data.is_empty() {
        return Err(Error::domain("learning needs N >= 1"));
    }
    let alpha = config.alpha(data.len())?;
    let n = data.space().n();
    let learned = crate::par::map_range(n, |i| -> Result<(LearnedNode, ConditionalTable)> {
        let node = structure_learn_node(data, i, config)?;
        let sampling = sampling_table(data, i, &node.source, alpha)?;
        Ok((node, sampling))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut nodes = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for (node, table) in learned {
        nodes.push(Node {
            source: node.source.clone(),
            table,
        });
        out.push(node);
    }
    let network = DependencyNetwork::new(data.space().clone(), nodes, ScanWeights::uniform(n))?
        .with_names(data.names().to_vec())?;
    Ok(LearnedNetwork {
        network,
        nodes: out,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::VariableSpace;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn counting_example() -> Dataset {
        let sp = VariableSpace::binary(2).unwrap();
        Dataset::new(
            sp,
            vec![
                vec![0, 0].into(),
                vec![0, 0].into(),
                vec![1, 1].into(),
                vec![0, 1].into(),
            ],
        )
        .unwrap()
    }

    /// Reference `cost′` from scratch: replay the source on every sample.
    fn global_cost(data: &Dataset, src: &InformationSource, pen: &PenaltySpec) -> f64 {
        let i = src.owner();
        let card = data.space().card(i);
        let mut counts = vec![vec![0u64; card]; src.leaf_count()];
        for s in data.samples() {
            counts[src.evaluate(s)][s[i]] += 1;
        }
        let n = data.len() as f64;
        let mut cost = 0.0;
        for row in &counts {
            let ny: u64 = row.iter().sum();
            for &c in row {
                if c > 0 {
                    cost -= (c as f64 / n) * (c as f64 / ny as f64).ln();
                }
            }
            cost += pen.eval(card - 1, data.len());
        }
        cost
    }

    #[test]
    fn mdl_examples() {
        assert_eq!(mdl_penalty(0, 10).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mdl_penalty(1, 100).unwrap(),
            100f64.ln() / 200.0,
            epsilon = 1e-16
        );
        assert_abs_diff_eq!(mdl_penalty(1, 100).unwrap(), 0.0230259, epsilon = 1e-7);
        assert_abs_diff_eq!(mdl_penalty(12, 100_000).unwrap(), 6.9078e-4, epsilon = 1e-8);
        assert!(mdl_penalty(1, 0).is_err());
    }

    #[test]
    fn parameters_are_empirical_conditionals() {
        let d = counting_example();
        let src = InformationSource::from_ops(1, d.space(), &[SourceOp::Split { leaf: 0, var: 0 }])
            .unwrap();
        let t = learn_parameters(&d, 1, &src).unwrap();
        assert_abs_diff_eq!(t.row(0)[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.row(0)[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(t.row(1), &[0.0, 1.0]);

        let c = InformationSource::constant(1, d.space()).unwrap();
        assert_eq!(learn_parameters(&d, 1, &c).unwrap().row(0), &[0.5, 0.5]);

        let s = sampling_table(&d, 1, &src, 1.0).unwrap();
        assert_abs_diff_eq!(s.row(1)[0], 1.0 / 3.0, epsilon = 1e-15);
        assert!(s.min_entry() > 0.0);
    }

    #[test]
    fn empty_leaf_rows_are_uniform() {
        let sp = VariableSpace::new(vec![2, 3]).unwrap();
        let d = Dataset::new(sp, vec![vec![0, 0].into(), vec![1, 1].into()]).unwrap();
        let src = InformationSource::from_ops(0, d.space(), &[SourceOp::Split { leaf: 0, var: 1 }])
            .unwrap();
        let t = learn_parameters(&d, 0, &src).unwrap();
        assert_eq!(t.row(2), &[0.5, 0.5]);
    }

    #[test]
    fn leaf_cost_examples() {
        let pure = LeafStats::new(vec![50, 0]);
        assert_abs_diff_eq!(
            leaf_cost(&pure, 100, 2, &PenaltySpec::Mdl),
            100f64.ln() / 200.0,
            epsilon = 1e-16
        );
        let even = LeafStats::new(vec![2, 2]);
        assert_abs_diff_eq!(
            leaf_cost(&even, 4, 2, &PenaltySpec::None),
            2f64.ln(),
            epsilon = 1e-15
        );
        let empty = LeafStats::new(vec![0, 0]);
        assert_eq!(
            leaf_cost(&empty, 10, 2, &PenaltySpec::Mdl),
            mdl_penalty(1, 10).unwrap()
        );
    }

    fn random_data(n_vars: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = VariableSpace::new((0..n_vars).map(|k| 2 + k % 2).collect()).unwrap();
        let rows = (0..n)
            .map(|_| {
                let a = rng.gen_range(0..2);
                let mut s = vec![a];
                for k in 1..n_vars {
                    let card = sp.card(k);
                    // mostly copy the previous variable to create structure
                    let v = if rng.gen_bool(0.7) {
                        s[k - 1] % card
                    } else {
                        rng.gen_range(0..card)
                    };
                    s.push(v);
                }
                s.into()
            })
            .collect();
        Dataset::new(sp, rows).unwrap()
    }

    #[test]
    fn deltas_match_global_recomputation() {
        let d = random_data(4, 300, 5);
        for pen in [PenaltySpec::Mdl, PenaltySpec::None] {
            let cfg = LearnConfig {
                penalty: pen.clone(),
                ..Default::default()
            };
            for i in 0..4 {
                let mut learner = StructureLearner::new(&d, i, &cfg).unwrap();
                for _ in 0..6 {
                    let before = global_cost(&d, learner.source(), &pen);
                    assert_abs_diff_eq!(before, learner.cost(), epsilon = 1e-12);
                    for c in learner.candidates() {
                        let mut src = learner.source().clone();
                        src.push(c.op).unwrap();
                        let after = global_cost(&d, &src, &pen);
                        assert_abs_diff_eq!(after - before, c.delta, epsilon = 1e-12);
                    }
                    if learner.step().unwrap().is_none() {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn split_and_merge_deltas() {
        // leaf is pure in X_i: splitting only adds penalty
        let sp = VariableSpace::new(vec![2, 3]).unwrap();
        let d = Dataset::new(sp, (0..30).map(|k| vec![0, k % 3].into()).collect()).unwrap();
        let stats = NodeStats::compute(&d, 0, &vec![0; 30], 1);
        let ds = delta_split(&stats, 0, 1, &PenaltySpec::Mdl).unwrap();
        assert_abs_diff_eq!(ds, 2.0 * mdl_penalty(1, 30).unwrap(), epsilon = 1e-15);
        assert!(delta_split(&stats, 0, 0, &PenaltySpec::Mdl).is_err());

        // identical conditionals: merging saves one penalty unit
        let leaf = vec![0, 0, 1, 1];
        let d = Dataset::new(
            VariableSpace::binary(2).unwrap(),
            vec![
                vec![0, 0].into(),
                vec![1, 0].into(),
                vec![0, 1].into(),
                vec![1, 1].into(),
            ],
        )
        .unwrap();
        let stats = NodeStats::compute(&d, 0, &leaf, 2);
        let dm = delta_merge(&stats, 0, 1, &PenaltySpec::Mdl).unwrap();
        assert_abs_diff_eq!(dm, -(4f64).ln() / 8.0, epsilon = 1e-15);
        assert!(delta_merge(&stats, 1, 1, &PenaltySpec::Mdl).is_err());

        // two pure leaves with different values: merging raises the entropy
        let d = Dataset::new(
            VariableSpace::binary(2).unwrap(),
            vec![
                vec![0, 0].into(),
                vec![0, 0].into(),
                vec![1, 1].into(),
                vec![1, 1].into(),
            ],
        )
        .unwrap();
        let stats = NodeStats::compute(&d, 0, &[0, 0, 1, 1], 2);
        assert!(delta_merge(&stats, 0, 1, &PenaltySpec::None).unwrap() > 0.5);
        // inverse of the binary split that created them
        let parent = NodeStats::compute(&d, 0, &[0; 4], 1);
        let s = delta_split(&parent, 0, 1, &PenaltySpec::Mdl).unwrap();
        let m = delta_merge(&stats, 0, 1, &PenaltySpec::Mdl).unwrap();
        assert_abs_diff_eq!(s, -m, epsilon = 1e-15);
    }

    #[test]
    fn copy_variable_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sp = VariableSpace::binary(3).unwrap();
        let rows = (0..1000)
            .map(|_| {
                let a = rng.gen_range(0..2);
                vec![a, a, rng.gen_range(0..2)].into()
            })
            .collect();
        let d = Dataset::new(sp, rows).unwrap();
        let node = structure_learn_node(&d, 1, &LearnConfig::default()).unwrap();
        assert_eq!(node.source.ops(), &[SourceOp::Split { leaf: 0, var: 0 }]);
        assert_eq!(node.table.row(0), &[1.0, 0.0]);
        assert_eq!(node.table.row(1), &[0.0, 1.0]);
        for w in node.trace.windows(2) {
            assert!(w[1].cost < w[0].cost);
        }
    }

    #[test]
    fn independent_variable_stays_single_leaf() {
        let mut ok = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let sp = VariableSpace::binary(4).unwrap();
            let rows = (0..10_000)
                .map(|_| {
                    (0..4)
                        .map(|_| rng.gen_range(0..2))
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect();
            let d = Dataset::new(sp, rows).unwrap();
            let node = structure_learn_node(&d, 2, &LearnConfig::default()).unwrap();
            if node.source.leaf_count() == 1 {
                ok += 1;
            }
        }
        assert!(ok >= 18, "{ok}/20 single-leaf");
    }

    #[test]
    fn constant_data_gives_single_leaves() {
        let sp = VariableSpace::binary(3).unwrap();
        let d = Dataset::new(sp, vec![vec![1, 0, 1].into(); 50]).unwrap();
        let learned = learn_network(&d, &LearnConfig::default()).unwrap();
        for (node, l) in learned.network.nodes().iter().zip(&learned.nodes) {
            assert_eq!(node.source.leaf_count(), 1);
            assert!(node.table.min_entry() > 0.0);
            assert!(node.table.row(0).iter().any(|&t| t > 0.99));
            assert_eq!(l.trace.len(), 1);
        }
    }

    #[test]
    fn tree_mode_never_merges() {
        let d = random_data(4, 500, 8);
        let cfg = LearnConfig {
            merge_candidate_cap: Some(0),
            ..Default::default()
        };
        for i in 0..4 {
            let node = structure_learn_node(&d, i, &cfg).unwrap();
            assert!(node
                .source
                .ops()
                .iter()
                .all(|op| matches!(op, SourceOp::Split { .. })));
        }
    }

    #[test]
    fn per_node_learning_is_order_free() {
        let d = random_data(4, 400, 9);
        let net = learn_network(&d, &LearnConfig::default()).unwrap();
        for i in 0..4 {
            let alone = structure_learn_node(&d, i, &LearnConfig::default()).unwrap();
            assert_eq!(alone.source, net.nodes[i].source);
        }
    }

    #[test]
    fn trace_csv_shape() {
        let d = random_data(3, 200, 2);
        let node = structure_learn_node(&d, 1, &LearnConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv([(1, node.trace.as_slice())], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,iteration,op,delta,cost,leaf_count\n1,0,init,"));
        assert_eq!(text.lines().count(), node.trace.len() + 1);
    }
}
