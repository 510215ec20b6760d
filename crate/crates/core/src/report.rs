//! Evaluation reports: FC against the FC-limit, the clamped decomposition
//! of `KL(p‖E(θ_i))`, and the four benchmark protocols.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::{ising_distribution, random_bayesnet, sample_exact, BayesNetSpec, IsingSpec};
use crate::error::{Error, Result};
use crate::exact::{verify_fc_limit, Method};
use crate::geometry::{kl_to_kernel, manifold_terms_from_data, ExtReal};
use crate::learning::{learn_network, LearnConfig};
use crate::network::DependencyNetwork;
use crate::space::{Dataset, DenseDistribution};

/// Nats per bit.
pub const LN_2: f64 = std::f64::consts::LN_2;

/// Output of [`evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub exact: bool,
    /// `FC(p^D‖π)`; exact mode only.
    pub fc: Option<ExtReal>,
    /// `FC_lim(p^D) = Σ_i c_i KL(p^D‖E(θ_i))`.
    pub fc_limit: ExtReal,
    /// `FC_lim − FC`; exact mode only.
    pub slack: Option<f64>,
    /// `KL(p^D‖π)`; exact mode only.
    pub kl: Option<ExtReal>,
    pub per_node: Vec<NodeTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTerm {
    pub name: String,
    pub weight: f64,
    pub kl: ExtReal,
}

/// Evaluate `network` against the empirical distribution of `data`.
///
/// Exact mode builds `p^D` densely and solves for `π`; otherwise only the
/// FC-limit terms are computed, straight from the samples.
pub fn evaluate(
    network: &DependencyNetwork,
    data: &Dataset,
    exact: bool,
    method: Method,
) -> Result<EvalReport> {
    if data.space() != network.space() {
        return Err(Error::domain(format!(
            "data space {} does not match model space {}",
            data.space(),
            network.space()
        )));
    }
    let weights = network.weights().as_slice();
    let terms = |kl: Vec<ExtReal>| -> Vec<NodeTerm> {
        kl.into_iter()
            .enumerate()
            .map(|(i, kl)| NodeTerm {
                name: network.names()[i].clone(),
                weight: weights[i],
                kl,
            })
            .collect()
    };
    if exact {
        let p = data.empirical_distribution()?;
        let r = verify_fc_limit(&p, network, method)?;
        Ok(EvalReport {
            samples: data.len(),
            exact: true,
            fc: Some(r.fc),
            fc_limit: r.fc_limit,
            slack: Some(r.slack),
            kl: Some(r.kl),
            per_node: terms(r.per_node),
        })
    } else {
        let per = manifold_terms_from_data(data, network)?;
        let fc_limit = per.iter().zip(weights).map(|(&t, &c)| c * t).sum();
        Ok(EvalReport {
            samples: data.len(),
            exact: false,
            fc: None,
            fc_limit,
            slack: None,
            kl: None,
            per_node: terms(per),
        })
    }
}

fn cell(v: Option<ExtReal>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table, values in nats.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples      {}", self.samples);
        let _ = writeln!(
            s,
            "mode         {}",
            if self.exact { "exact" } else { "from data" }
        );
        let _ = writeln!(s, "FC(pD||pi)   {}", cell(self.fc));
        let _ = writeln!(s, "FC_lim(pD)   {}", self.fc_limit);
        let _ = writeln!(
            s,
            "slack        {}",
            self.slack
                .map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
        );
        let _ = writeln!(s, "KL(pD||pi)   {}", cell(self.kl));
        let _ = writeln!(s, "\n{:<12} {:>10} {:>14}", "node", "weight", "KL(pD||E_i)");
        for t in &self.per_node {
            let _ = writeln!(
                s,
                "{:<12} {:>10.4} {:>14}",
                t.name,
                t.weight,
                t.kl.to_string()
            );
        }
        let _ = writeln!(s, "\nunit: nat (divide by {LN_2:.6} for bits)");
        s
    }
}

/// Both sides of `KL(p‖E(θ_i)) = Σ_{x_C} p(x_C) KL(p(·|x_C)‖E(θ_i(·;x_C)))`
/// for each unclamped node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampDecomposition {
    pub clamp_vars: Vec<usize>,
    pub nodes: Vec<DecompositionTerm>,
    pub max_abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerm {
    pub node: usize,
    pub full: ExtReal,
    pub averaged: ExtReal,
}

/// Compute both sides of the clamped decomposition independently.
pub fn clamp_decomposition(
    p: &DenseDistribution,
    network: &DependencyNetwork,
    clamp_vars: &[usize],
) -> Result<ClampDecomposition> {
    let space = p.space();
    if space != network.space() {
        return Err(Error::domain(
            "distribution and network on different spaces",
        ));
    }
    let mut vars = clamp_vars.to_vec();
    vars.sort_unstable();
    vars.dedup();
    if vars.len() != clamp_vars.len() || vars.iter().any(|&v| v >= space.n()) {
        return Err(Error::domain(
            "clamp variables must be distinct and in range",
        ));
    }
    if vars.len() >= space.n() {
        return Err(Error::domain("every variable is clamped"));
    }
    let full_kernels = network.kernels()?;
    let marg = p.marginal(&vars)?;
    let free: Vec<usize> = (0..space.n()).filter(|v| !vars.contains(v)).collect();
    let mut averaged = vec![ExtReal::ZERO; free.len()];
    for (idx, &mass) in marg.probs().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let values = marg.space().decode(idx)?;
        let clamp: Vec<(usize, usize)> = vars.iter().copied().zip(values.iter().copied()).collect();
        let (cond, _) = p.condition(&clamp)?.expect("context has mass");
        let (kernels, _) = network.clamped_kernels(&clamp)?;
        for (k, node) in kernels.nodes.iter().enumerate() {
            averaged[k] = averaged[k] + mass * kl_to_kernel(&cond, node)?;
        }
    }
    let mut nodes = Vec::with_capacity(free.len());
    let mut max_abs_diff: f64 = 0.0;
    for (k, &i) in free.iter().enumerate() {
        let full = kl_to_kernel(p, &full_kernels.nodes[i])?;
        let diff = match (full, averaged[k]) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
            (ExtReal::Infinite, ExtReal::Infinite) => 0.0,
            _ => f64::INFINITY,
        };
        max_abs_diff = max_abs_diff.max(diff);
        nodes.push(DecompositionTerm {
            node: i,
            full,
            averaged: averaged[k],
        });
    }
    Ok(ClampDecomposition {
        clamp_vars: vars,
        nodes,
        max_abs_diff,
    })
}

/// The four benchmark datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    IsingSmall,
    IsingLarge,
    BayesNetSmall,
    BayesNetLarge,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::IsingSmall,
        Protocol::IsingLarge,
        Protocol::BayesNetSmall,
        Protocol::BayesNetLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::IsingSmall => "Ising4x3S",
            Protocol::IsingLarge => "Ising4x3L",
            Protocol::BayesNetSmall => "RB12-21S",
            Protocol::BayesNetLarge => "RB12-21L",
        }
    }

    pub fn samples(self) -> usize {
        match self {
            Protocol::IsingSmall | Protocol::BayesNetSmall => 1_000,
            Protocol::IsingLarge | Protocol::BayesNetLarge => 100_000,
        }
    }

    /// Published `(FC, FC_lim)` in nats.
    pub fn reference(self) -> (f64, f64) {
        match self {
            Protocol::IsingSmall => (4.0e-3, 5.3e-3),
            Protocol::IsingLarge => (1.1e-3, 1.1e-3),
            Protocol::BayesNetSmall => (1.5e-1, 1.6e-1),
            Protocol::BayesNetLarge => (6.8e-3, 7.4e-3),
        }
    }
}

/// Generator settings shared by the protocols.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub seed: u64,
    pub ising: IsingSpec,
    pub bn_nodes: usize,
    pub bn_edges: usize,
}

impl ProtocolOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ising: IsingSpec::new(4, 3),
            bn_nodes: 12,
            bn_edges: 21,
        }
    }

    /// Generating joint and dataset for a protocol. Small and large
    /// datasets share the joint; the small one is a prefix of the large.
    pub fn dataset(&self, protocol: Protocol) -> Result<(DenseDistribution, Dataset)> {
        let joint = match protocol {
            Protocol::IsingSmall | Protocol::IsingLarge => ising_distribution(&self.ising)?,
            Protocol::BayesNetSmall | Protocol::BayesNetLarge => {
                random_bayesnet(&BayesNetSpec {
                    nodes: self.bn_nodes,
                    edges: self.bn_edges,
                    seed: self.seed,
                })?
                .0
            }
        };
        let data = sample_exact(&joint, protocol.samples(), self.seed.wrapping_add(1))?;
        Ok((joint, data))
    }
}

/// One measured row next to its published counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub dataset: String,
    pub samples: usize,
    pub published_fc: f64,
    pub published_fc_limit: f64,
    pub fc: ExtReal,
    pub fc_limit: ExtReal,
    pub slack: f64,
    pub kl: ExtReal,
    pub leaves: Vec<usize>,
}

impl ProtocolRow {
    pub fn bound_holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }

    /// `(FC_lim − FC) / FC_lim`.
    pub fn relative_slack(&self) -> f64 {
        self.slack / self.fc_limit.to_f64()
    }
}

/// Generate, learn and evaluate one protocol.
pub fn run_protocol(
    protocol: Protocol,
    options: &ProtocolOptions,
    config: &LearnConfig,
    method: Method,
) -> Result<ProtocolRow> {
    let (_, data) = options.dataset(protocol)?;
    let learned = learn_network(&data, config)?;
    let report = evaluate(&learned.network, &data, true, method)?;
    let (published_fc, published_fc_limit) = protocol.reference();
    Ok(ProtocolRow {
        dataset: protocol.name().to_string(),
        samples: data.len(),
        published_fc,
        published_fc_limit,
        fc: report.fc.expect("exact report"),
        fc_limit: report.fc_limit,
        slack: report.slack.expect("exact report"),
        kl: report.kl.expect("exact report"),
        leaves: learned
            .nodes
            .iter()
            .map(|n| n.source.leaf_count())
            .collect(),
    })
}

/// All four protocols, run concurrently.
pub fn reproduce_table(
    options: &ProtocolOptions,
    config: &LearnConfig,
    method: Method,
) -> Result<Vec<ProtocolRow>> {
    crate::par::map_slice(&Protocol::ALL, |&p| {
        run_protocol(p, options, config, method)
    })
    .into_iter()
    .collect()
}

/// Plain-text comparison table.
pub fn render_table(rows: &[ProtocolRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>10} {:>10} {:>12} {:>12} {:>10}",
        "dataset", "N", "ref FC", "ref FC_lim", "FC", "FC_lim", "rel slack"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>10.1e} {:>10.1e} {:>12} {:>12} {:>10.3}",
            r.dataset,
            r.samples,
            r.published_fc,
            r.published_fc_limit,
            r.fc.to_string(),
            r.fc_limit.to_string(),
            r.relative_slack()
        );
    }
    let _ = writeln!(s, "\nunit: nat (divide by {LN_2:.6} for bits)");
    s
}
