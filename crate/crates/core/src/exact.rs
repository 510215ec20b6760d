//! Exact stationary distributions of pseudo-Gibbs chains at desk scale.
//!
//! Node operators are never stored as matrices for iteration: applying `T_i`
//! to a distribution is the m-projection (marginalize coordinate `i`, then
//! multiply by the `θ_i` row), `O(|X|·|X_i|)` per application. The direct
//! method assembles the dense `|X|×|X|` system only up to [`DIRECT_LIMIT`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{fc_divergence, fc_limit_kernels, manifold_terms, project_into, ExtReal};
use crate::network::{DependencyNetwork, Kernels};
use crate::space::DenseDistribution;

/// Largest state space solved by dense LU; larger spaces use power iteration.
pub const DIRECT_LIMIT: usize = 4096;

/// Required fixed-point residual `‖πT − π‖₁` of returned distributions.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Stationary-distribution solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// `(Tᵀ − I)π = 0` with one row replaced by `Σπ = 1`, dense LU.
    Direct,
    /// `π ← πT` until the L1 change is at most `tol`.
    Power { tol: f64, max_iter: usize },
}

impl Method {
    pub const DEFAULT_POWER: Method = Method::Power {
        tol: 1e-12,
        max_iter: 1_000_000,
    };
}

/// A stationary distribution with its diagnostics.
#[derive(Clone, Debug)]
pub struct Stationary {
    pub distribution: DenseDistribution,
    /// `‖πT − π‖₁` of the returned distribution.
    pub residual: f64,
    /// Power iterations used (0 for a direct solve without polishing).
    pub iterations: usize,
}

/// The single-site transition operators `T_i` of a (possibly clamped)
/// network and their random-scan and sequential combinations.
#[derive(Clone, Debug)]
pub struct TransitionOperator {
    kernels: Kernels,
    len: usize,
}

impl TransitionOperator {
    pub fn new(kernels: Kernels) -> Result<Self> {
        let len = kernels.space.dense_len()?;
        Ok(Self { kernels, len })
    }

    pub fn from_network(network: &DependencyNetwork) -> Result<Self> {
        network.space().dense_len()?;
        Self::new(network.kernels()?)
    }

    pub fn kernels(&self) -> &Kernels {
        &self.kernels
    }

    /// `|X|`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_count(&self) -> usize {
        self.kernels.nodes.len()
    }

    /// `out = p · T_i`.
    pub fn apply_node(&self, i: usize, p: &[f64], out: &mut [f64]) {
        project_into(&self.kernels.space, &self.kernels.nodes[i], p, out);
    }

    /// `out = p · Σ_i c_i T_i`; `scratch` has length `|X|`.
    pub fn apply_random_scan(&self, p: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.fill(0.0);
        for (i, &c) in self.kernels.weights.as_slice().iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            self.apply_node(i, p, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += c * s;
            }
        }
    }

    /// `out = p · T_{order[0]} · T_{order[1]} ⋯`.
    pub fn apply_sequence(&self, order: &[usize], p: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.copy_from_slice(p);
        for &i in order {
            self.apply_node(i, out, scratch);
            out.copy_from_slice(scratch);
        }
    }

    /// Row `x` of `T_i` as `(x', T_i[x][x'])` pairs.
    pub fn node_row(&self, i: usize, x: usize) -> Vec<(usize, f64)> {
        let space = &self.kernels.space;
        let k = &self.kernels.nodes[i];
        let ctx = space.context_of(x, k.var);
        k.row(ctx)
            .iter()
            .enumerate()
            .map(|(v, &t)| (space.state_of(ctx, k.var, v), t))
            .collect()
    }

    /// Largest `|Σ_x' T_i[x][x'] − 1|` over all nodes and rows.
    pub fn max_row_sum_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.node_count() {
            for x in 0..self.len {
                let s: f64 = self.node_row(i, x).iter().map(|(_, t)| t).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    fn validate_order(&self, order: &[usize]) -> Result<()> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        for &i in order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::domain(format!(
                    "scan order {order:?} is not a permutation"
                )));
            }
        }
        if order.len() != n {
            return Err(Error::domain(format!(
                "scan order {order:?} is not a permutation"
            )));
        }
        Ok(())
    }
}

/// `‖p·T − p‖₁` for an operator given as a closure.
fn residual_of(p: &[f64], apply: &dyn Fn(&[f64], &mut [f64])) -> f64 {
    let mut next = vec![0.0; p.len()];
    apply(p, &mut next);
    l1(&next, p)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn power_iterate(
    len: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let mut cur = start;
    let mut next = vec![0.0; len];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&cur, &mut next);
        residual = l1(&next, &cur);
        std::mem::swap(&mut cur, &mut next);
        if residual <= tol {
            let total: f64 = cur.iter().sum();
            cur.iter_mut().for_each(|v| *v /= total);
            return Ok((cur, it));
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Dense direct solve of `πA = π` for the operator `apply`.
fn direct_solve(len: usize, apply: &(dyn Fn(&[f64], &mut [f64]) + Sync)) -> Result<Vec<f64>> {
    // Column x of Aᵀ is row x of A, i.e. e_x · A.
    let mut m = DMatrix::<f64>::zeros(len, len);
    crate::par::for_each_chunk_mut(m.as_mut_slice(), len, |x, col| {
        let mut e = vec![0.0; len];
        e[x] = 1.0;
        apply(&e, col);
    });
    for d in 0..len {
        m[(d, d)] -= 1.0;
    }
    for c in 0..len {
        m[(len - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(len);
    b[len - 1] = 1.0;

    let lu = m.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let scale = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if smallest.is_nan() || smallest <= 1e-13 * scale.max(1.0) {
        return Err(Error::Degeneracy(format!(
            "stationary system is singular (pivot {smallest:e}); the chain has more than one closed class"
        )));
    }
    let sol = lu
        .solve(&b)
        .ok_or_else(|| Error::Degeneracy("stationary system is singular".into()))?;
    let mut pi: Vec<f64> = sol.iter().copied().collect();
    let most_negative = pi.iter().copied().fold(0.0f64, f64::min);
    if most_negative < -1e-9 {
        return Err(Error::Degeneracy(format!(
            "direct solution has a negative entry {most_negative:e}"
        )));
    }
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// Solve for the fixed point of `apply`, then certify the residual.
fn solve(
    op: &TransitionOperator,
    apply: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    method: Method,
) -> Result<Stationary> {
    let len = op.len();
    let space = op.kernels.space.clone();
    let uniform = vec![1.0 / len as f64; len];
    let (mut pi, mut iterations) = match method {
        Method::Direct if len <= DIRECT_LIMIT => (direct_solve(len, apply)?, 0),
        Method::Direct => match Method::DEFAULT_POWER {
            Method::Power { tol, max_iter } => power_iterate(len, apply, uniform, tol, max_iter)?,
            Method::Direct => unreachable!(),
        },
        Method::Power { tol, max_iter } => power_iterate(len, apply, uniform, tol, max_iter)?,
    };
    let mut residual = residual_of(&pi, apply);
    if residual > RESIDUAL_TOL {
        // polish a direct solution that lost a few digits
        let (polished, extra) = power_iterate(len, apply, pi, RESIDUAL_TOL * 1e-2, 10_000)?;
        pi = polished;
        iterations += extra;
        residual = residual_of(&pi, apply);
        if residual > RESIDUAL_TOL {
            return Err(Error::Convergence {
                iterations,
                residual,
            });
        }
    }
    Ok(Stationary {
        distribution: DenseDistribution::from_weights(space, pi)?,
        residual,
        iterations,
    })
}

/// Stationary distribution `π` of random-scan pseudo-Gibbs sampling.
pub fn stationary_random_scan(op: &TransitionOperator, method: Method) -> Result<Stationary> {
    let apply = |p: &[f64], out: &mut [f64]| {
        let mut scratch = vec![0.0; p.len()];
        op.apply_random_scan(p, out, &mut scratch);
    };
    solve(op, &apply, method)
}

/// Phase stationaries of sequential-scan sampling.
#[derive(Clone, Debug)]
pub struct SequentialStationary {
    /// `π^r`: distribution of `X^t` for `t ≡ r (mod n)` in the long run.
    pub phases: Vec<DenseDistribution>,
    /// `(π^0 + ⋯ + π^{n−1}) / n`.
    pub mean: DenseDistribution,
    /// `‖π^0 · (full cycle) − π^0‖₁`.
    pub cycle_residual: f64,
}

/// `π^0` is stationary for the cycle `T_{order[0]} ⋯ T_{order[n−1]}`, and
/// `π^{r+1} = π^r T_{order[r]}`.
pub fn stationary_sequential_scan(
    op: &TransitionOperator,
    order: &[usize],
    method: Method,
) -> Result<SequentialStationary> {
    op.validate_order(order)?;
    let apply = |p: &[f64], out: &mut [f64]| {
        let mut scratch = vec![0.0; p.len()];
        op.apply_sequence(order, p, out, &mut scratch);
    };
    let st = solve(op, &apply, method)?;
    let space = op.kernels.space.clone();
    let mut phases = Vec::with_capacity(order.len());
    let mut cur = st.distribution.into_probs();
    let mut next = vec![0.0; cur.len()];
    let mut mean = vec![0.0; cur.len()];
    for &i in order {
        for (m, v) in mean.iter_mut().zip(&cur) {
            *m += v / order.len() as f64;
        }
        op.apply_node(i, &cur, &mut next);
        phases.push(DenseDistribution::from_weights(space.clone(), cur.clone())?);
        std::mem::swap(&mut cur, &mut next);
    }
    let cycle_residual = l1(&cur, phases[0].probs());
    Ok(SequentialStationary {
        phases,
        mean: DenseDistribution::from_weights(space, mean)?,
        cycle_residual,
    })
}

/// Stationary distribution of the clamped chain over the unclamped
/// variables (returned in ascending index order alongside the distribution).
pub fn stationary_clamped(
    network: &DependencyNetwork,
    clamp: &[(usize, usize)],
    method: Method,
) -> Result<(Stationary, Vec<usize>)> {
    let (kernels, free) = network.clamped_kernels(clamp)?;
    let op = TransitionOperator::new(kernels)?;
    Ok((stationary_random_scan(&op, method)?, free))
}

/// Sufficient ergodicity check: every table entry is at least `eps`.
pub fn is_positive(network: &DependencyNetwork, eps: f64) -> bool {
    network.min_entry() >= eps
}

/// `FC(p‖π)` against the FC-limit.
#[derive(Clone, Debug)]
pub struct FcLimitReport {
    pub fc: ExtReal,
    pub fc_limit: ExtReal,
    /// `fc_limit − fc`.
    pub slack: f64,
    /// `KL(p‖E(θ_i))` per node.
    pub per_node: Vec<ExtReal>,
    pub kl: ExtReal,
    pub stationary: DenseDistribution,
}

/// Compute `π` exactly and compare `FC(p‖π)` with `Σ_i c_i KL(p‖E(θ_i))`.
pub fn verify_fc_limit(
    p: &DenseDistribution,
    network: &DependencyNetwork,
    method: Method,
) -> Result<FcLimitReport> {
    if p.space() != network.space() {
        return Err(Error::domain(
            "distribution and network on different spaces",
        ));
    }
    let op = TransitionOperator::from_network(network)?;
    let pi = stationary_random_scan(&op, method)?.distribution;
    let fc = fc_divergence(p, &pi, network.weights())?;
    let per_node = manifold_terms(p, op.kernels())?;
    let fc_limit = fc_limit_kernels(p, op.kernels())?;
    let slack = match (fc_limit, fc) {
        (ExtReal::Finite(l), ExtReal::Finite(f)) => l - f,
        (ExtReal::Infinite, _) => f64::INFINITY,
        (ExtReal::Finite(_), ExtReal::Infinite) => f64::NEG_INFINITY,
    };
    let kl = crate::geometry::kl_divergence(p, &pi)?;
    Ok(FcLimitReport {
        fc,
        fc_limit,
        slack,
        per_node,
        kl,
        stationary: pi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{m_project, ScanWeights};
    use crate::network::{
        genuine_gibbs_network, ConditionalTable, InformationSource, Node, SourceOp,
    };
    use crate::space::VariableSpace;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(cards: &[usize], rng: &mut ChaCha8Rng) -> DenseDistribution {
        let sp = VariableSpace::new(cards.to_vec()).unwrap();
        let len = sp.dense_len().unwrap();
        DenseDistribution::from_weights(sp, (0..len).map(|_| rng.gen_range(0.05..1.0)).collect())
            .unwrap()
    }

    /// Two binary nodes that disagree: X0 copies X1 w.p. 0.9, X1 anti-copies X0 w.p. 0.8.
    fn conflicting_pair() -> DependencyNetwork {
        let sp = VariableSpace::binary(2).unwrap();
        let s0 =
            InformationSource::from_ops(0, &sp, &[SourceOp::Split { leaf: 0, var: 1 }]).unwrap();
        let s1 =
            InformationSource::from_ops(1, &sp, &[SourceOp::Split { leaf: 0, var: 0 }]).unwrap();
        let t0 = ConditionalTable::new(0, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        let t1 = ConditionalTable::new(1, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        DependencyNetwork::new(
            sp,
            vec![
                Node {
                    source: s0,
                    table: t0,
                },
                Node {
                    source: s1,
                    table: t1,
                },
            ],
            ScanWeights::uniform(2),
        )
        .unwrap()
    }

    #[test]
    fn node_operator_is_m_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_dist(&[2, 3, 2], &mut rng);
        let g = genuine_gibbs_network(&random_dist(&[2, 3, 2], &mut rng)).unwrap();
        let op = TransitionOperator::from_network(&g.network).unwrap();
        for i in 0..3 {
            let node = g.network.node(i);
            let want = m_project(&p, i, &node.table, &node.source).unwrap();
            let mut out = vec![0.0; 12];
            op.apply_node(i, p.probs(), &mut out);
            for (a, b) in out.iter().zip(want.probs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
            let mut twice = vec![0.0; 12];
            op.apply_node(i, &out, &mut twice);
            for (a, b) in out.iter().zip(&twice) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
        assert!(op.max_row_sum_error() <= 1e-12);
    }

    #[test]
    fn point_mass_table_collapses_slice() {
        let sp = VariableSpace::binary(2).unwrap();
        let s0 = InformationSource::constant(0, &sp).unwrap();
        let s1 = InformationSource::constant(1, &sp).unwrap();
        let net = DependencyNetwork::new(
            sp.clone(),
            vec![
                Node {
                    source: s0,
                    table: ConditionalTable::new(0, 2, vec![1.0, 0.0]).unwrap(),
                },
                Node {
                    source: s1,
                    table: ConditionalTable::new(1, 2, vec![0.5, 0.5]).unwrap(),
                },
            ],
            ScanWeights::uniform(2),
        )
        .unwrap();
        let op = TransitionOperator::from_network(&net).unwrap();
        let mut out = vec![0.0; 4];
        op.apply_node(0, &[0.1, 0.2, 0.3, 0.4], &mut out);
        for (a, b) in out.iter().zip(&[0.3, 0.0, 0.7, 0.0]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let st = stationary_random_scan(&op, Method::Direct).unwrap();
        assert_abs_diff_eq!(st.distribution.probs()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(st.distribution.probs()[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn genuine_gibbs_stationary_is_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_dist(&[2, 3, 2], &mut rng);
        let g = genuine_gibbs_network(&p).unwrap();
        let op = TransitionOperator::from_network(&g.network).unwrap();
        let d = stationary_random_scan(&op, Method::Direct).unwrap();
        let pw = stationary_random_scan(&op, Method::DEFAULT_POWER).unwrap();
        for ((a, b), c) in d
            .distribution
            .probs()
            .iter()
            .zip(pw.distribution.probs())
            .zip(p.probs())
        {
            assert_abs_diff_eq!(a, c, epsilon = 1e-10);
            assert_abs_diff_eq!(b, c, epsilon = 1e-9);
        }
        assert!(d.residual <= RESIDUAL_TOL && pw.residual <= RESIDUAL_TOL);
        let seq = stationary_sequential_scan(&op, &[0, 1, 2], Method::Direct).unwrap();
        for ph in seq.phases.iter().chain(std::iter::once(&seq.mean)) {
            assert!(ph.total_variation(&p).unwrap() < 1e-10);
        }
    }

    #[test]
    fn single_variable_network() {
        let sp = VariableSpace::new(vec![3]).unwrap();
        let net = DependencyNetwork::new(
            sp.clone(),
            vec![Node {
                source: InformationSource::constant(0, &sp).unwrap(),
                table: ConditionalTable::new(0, 3, vec![0.2, 0.5, 0.3]).unwrap(),
            }],
            ScanWeights::uniform(1),
        )
        .unwrap();
        let op = TransitionOperator::from_network(&net).unwrap();
        let st = stationary_random_scan(&op, Method::Direct).unwrap();
        for (a, b) in st.distribution.probs().iter().zip(&[0.2, 0.5, 0.3]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sequential_phases_cycle() {
        let net = conflicting_pair();
        let op = TransitionOperator::from_network(&net).unwrap();
        let seq = stationary_sequential_scan(&op, &[0, 1], Method::Direct).unwrap();
        assert!(seq.cycle_residual < 1e-10);
        let seq_p = stationary_sequential_scan(&op, &[0, 1], Method::DEFAULT_POWER).unwrap();
        assert!(seq.mean.total_variation(&seq_p.mean).unwrap() < 1e-8);
        // the two phases differ for a conflicting pair
        assert!(seq.phases[0].total_variation(&seq.phases[1]).unwrap() > 1e-3);
        assert!(stationary_sequential_scan(&op, &[0, 0], Method::Direct).is_err());
    }

    #[test]
    fn reducible_chain_is_degenerate() {
        // X0 copies X1 and X1 copies X0: both all-0 and all-1 are absorbing.
        let sp = VariableSpace::binary(2).unwrap();
        let s0 =
            InformationSource::from_ops(0, &sp, &[SourceOp::Split { leaf: 0, var: 1 }]).unwrap();
        let s1 =
            InformationSource::from_ops(1, &sp, &[SourceOp::Split { leaf: 0, var: 0 }]).unwrap();
        let t = |i| ConditionalTable::new(i, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let net = DependencyNetwork::new(
            sp,
            vec![
                Node {
                    source: s0,
                    table: t(0),
                },
                Node {
                    source: s1,
                    table: t(1),
                },
            ],
            ScanWeights::uniform(2),
        )
        .unwrap();
        let op = TransitionOperator::from_network(&net).unwrap();
        assert!(matches!(
            stationary_random_scan(&op, Method::Direct),
            Err(Error::Degeneracy(_))
        ));
        assert!(!is_positive(&net, 1e-12));
    }

    #[test]
    fn power_reports_non_convergence() {
        let net = conflicting_pair();
        let op = TransitionOperator::from_network(&net).unwrap();
        let e = stationary_random_scan(
            &op,
            Method::Power {
                tol: 1e-15,
                max_iter: 3,
            },
        )
        .unwrap_err();
        assert!(matches!(e, Error::Convergence { iterations: 3, .. }));
    }

    #[test]
    fn fc_limit_bound_on_conflicting_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = conflicting_pair();
        for _ in 0..20 {
            let p = random_dist(&[2, 2], &mut rng);
            let r = verify_fc_limit(&p, &net, Method::Direct).unwrap();
            assert!(r.slack >= -1e-9, "slack {}", r.slack);
        }
        let p = DenseDistribution::uniform(VariableSpace::binary(2).unwrap()).unwrap();
        let g = genuine_gibbs_network(&p).unwrap();
        let r = verify_fc_limit(&p, &g.network, Method::Direct).unwrap();
        assert_abs_diff_eq!(r.fc.to_f64(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fc_limit.to_f64(), 0.0, epsilon = 1e-12);
    }
}
