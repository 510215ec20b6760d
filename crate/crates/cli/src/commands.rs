//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Parser;
use depnet::datagen::{ising_distribution, random_bayesnet, sample_exact, BayesNetSpec, IsingSpec};
use depnet::exact::{stationary_clamped, stationary_random_scan, stationary_sequential_scan};
use depnet::learning::write_trace_csv;
use depnet::report::{
    clamp_decomposition, evaluate, render_table, reproduce_table, ClampDecomposition, EvalReport,
    ProtocolOptions,
};
use depnet::{
    ClampSet, Dataset, DependencyNetwork, Error, InitialState, LearnConfig, Method, PenaltySpec,
    Result, ScanPolicy, TransitionOperator,
};
use serde::Serialize;

use crate::manifest::{sha256_file, sibling, Manifest, Recorder};
use crate::{
    Cli, Command, EvalArgs, Generator, IsingArgs, Penalty, RandbnArgs, RerunArgs, SampleArgs, Scan,
    SolveArgs, SolveMethod, TableArgs, TrainArgs,
};

pub fn run(command: Command, argv: Vec<String>) -> Result<()> {
    if let Command::Rerun(args) = &command {
        return rerun(args);
    }
    let parameters = serde_json::to_value(&command)?;
    let name = command_name(&command);
    let mut rec = Recorder::new(name, argv, parameters);
    match command {
        Command::Gen(Generator::Ising(a)) => gen_ising(&a, &mut rec)?,
        Command::Gen(Generator::Randbn(a)) => gen_randbn(&a, &mut rec)?,
        Command::Train(a) => train(&a, &mut rec)?,
        Command::Sample(a) => sample(&a, &mut rec)?,
        Command::Eval(a) => eval(&a, &mut rec)?,
        Command::ReproduceTable1(a) => table(&a, &mut rec)?,
        Command::Solve(a) => solve(&a, &mut rec)?,
        Command::Rerun(_) => unreachable!(),
    }
    if let Some(path) = rec.finish()? {
        eprintln!("manifest: {}", path.display());
    }
    Ok(())
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Gen(Generator::Ising(_)) => "gen ising",
        Command::Gen(Generator::Randbn(_)) => "gen randbn",
        Command::Train(_) => "train",
        Command::Sample(_) => "sample",
        Command::Eval(_) => "eval",
        Command::ReproduceTable1(_) => "reproduce-table1",
        Command::Solve(_) => "solve",
        Command::Rerun(_) => "rerun",
    }
}

fn method(m: SolveMethod) -> Method {
    match m {
        SolveMethod::Direct => Method::Direct,
        SolveMethod::Power => Method::DEFAULT_POWER,
    }
}

fn read_data(path: &Path, rec: &mut Recorder) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let data = Dataset::read_csv(BufReader::new(file))?;
    rec.input(path);
    Ok(data)
}

fn read_model(path: &Path, rec: &mut Recorder) -> Result<DependencyNetwork> {
    let file = File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let net = DependencyNetwork::read_json(BufReader::new(file))?;
    rec.input(path);
    Ok(net)
}

fn var_index(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Domain(format!("unknown variable {name:?}")))
}

/// Parse `A=1,B=0` against the model's variable names.
fn parse_clamp(spec: &str, names: &[String]) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("clamp entry {item:?} is not NAME=VALUE")))?;
            let v = value
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Domain(format!("clamp value {value:?} is not an integer")))?;
            Ok((var_index(names, name.trim())?, v))
        })
        .collect()
}

fn parse_vars(spec: &str, names: &[String]) -> Result<Vec<usize>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|name| var_index(names, name.trim()))
        .collect()
}

fn dataset_bytes(data: &Dataset, comments: &[String]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf, comments)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn gen_ising(a: &IsingArgs, rec: &mut Recorder) -> Result<()> {
    let spec = IsingSpec {
        rows: a.rows,
        cols: a.cols,
        coupling: a.coupling,
        field: a.field,
    };
    let joint = ising_distribution(&spec)?;
    rec.seed(a.seed);
    let data = sample_exact(&joint, a.n, a.seed)?;
    let comments = vec![format!(
        "ising rows={} cols={} coupling={} field={} seed={}",
        a.rows, a.cols, a.coupling, a.field, a.seed
    )];
    rec.output(&a.out, &dataset_bytes(&data, &comments)?)?;
    rec.output(&sibling(&a.out, ".gen.json"), &json_bytes(&spec)?)?;
    let mut joint_csv = Vec::new();
    joint.write_csv(data.names(), &mut joint_csv)?;
    rec.output(&sibling(&a.out, ".joint.csv"), &joint_csv)?;
    eprintln!(
        "wrote {} samples over {} variables",
        data.len(),
        data.space().n()
    );
    Ok(())
}

fn gen_randbn(a: &RandbnArgs, rec: &mut Recorder) -> Result<()> {
    let spec = BayesNetSpec {
        nodes: a.nodes,
        edges: a.edges,
        seed: a.seed,
    };
    let (joint, description) = random_bayesnet(&spec)?;
    let sample_seed = a.seed.wrapping_add(1);
    rec.seed(a.seed);
    rec.seed(sample_seed);
    let data = sample_exact(&joint, a.n, sample_seed)?;
    let comments = vec![format!(
        "randbn nodes={} edges={} seed={}",
        a.nodes, a.edges, a.seed
    )];
    rec.output(&a.out, &dataset_bytes(&data, &comments)?)?;
    rec.output(&sibling(&a.out, ".gen.json"), &json_bytes(&description)?)?;
    let mut joint_csv = Vec::new();
    joint.write_csv(data.names(), &mut joint_csv)?;
    rec.output(&sibling(&a.out, ".joint.csv"), &joint_csv)?;
    eprintln!(
        "wrote {} samples over {} variables",
        data.len(),
        data.space().n()
    );
    Ok(())
}

fn train(a: &TrainArgs, rec: &mut Recorder) -> Result<()> {
    let data = read_data(&a.data, rec)?;
    for i in 0..data.space().n() {
        let first = data.samples().next().map(|s| s[i]);
        if data.samples().all(|s| Some(s[i]) == first) {
            eprintln!(
                "warning: column {} is constant; its node keeps a single leaf",
                data.names()[i]
            );
        }
    }
    let config = LearnConfig {
        penalty: match a.penalty {
            Penalty::Mdl => PenaltySpec::Mdl,
            Penalty::None => PenaltySpec::None,
        },
        sampling_smoothing: a.alpha_s,
        merge_candidate_cap: a.merge_cap,
    };
    let learned = depnet::learn_network(&data, &config)?;
    let mut model = Vec::new();
    learned.network.write_json(&mut model)?;
    rec.output(&a.out, &model)?;
    let mut trace = Vec::new();
    write_trace_csv(
        learned
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, n.trace.as_slice())),
        &mut trace,
    )?;
    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".trace.csv"));
    rec.output(&trace_path, &trace)?;
    println!("{:<12} {:>8}", "node", "leaves");
    for (name, node) in data.names().iter().zip(&learned.nodes) {
        println!("{:<12} {:>8}", name, node.source.leaf_count());
    }
    println!("sampling smoothing {:e}", learned.alpha);
    Ok(())
}

/// `10 · n · max_i(leaves_i · card_i)`.
fn default_burn_in(net: &DependencyNetwork) -> usize {
    let widest = net
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| node.source.leaf_count() * net.space().card(i))
        .max()
        .unwrap_or(1);
    10 * net.space().n() * widest
}

fn scan_policy(scan: Scan, net: &DependencyNetwork) -> ScanPolicy {
    match scan {
        Scan::Random => ScanPolicy::Random(net.weights().clone()),
        Scan::Sequential => ScanPolicy::in_order(net.space().n()),
    }
}

fn sample(a: &SampleArgs, rec: &mut Recorder) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Domain("--n must be >= 1".into()));
    }
    if a.thin == 0 {
        return Err(Error::Domain("--thin must be >= 1".into()));
    }
    let net = read_model(&a.model, rec)?;
    let clamp = match &a.clamp {
        Some(spec) => ClampSet::new(parse_clamp(spec, net.names())?)?,
        None => ClampSet::empty(),
    };
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(&net));
    let steps = burn_in + (a.n - 1) * a.thin + 1;
    rec.seed(a.seed);
    let run = depnet::sampler::conditional_pseudo_gibbs(
        &net,
        &clamp,
        &scan_policy(a.scan, &net),
        steps,
        a.seed,
        &InitialState::UniformRandom,
    )?;
    let data = run.to_dataset(burn_in, a.thin, net.names().to_vec())?;
    let comments = vec![format!(
        "sample seed={} burn_in={} thin={} steps={}",
        a.seed, burn_in, a.thin, steps
    )];
    rec.output(&a.out, &dataset_bytes(&data, &comments)?)?;
    eprintln!(
        "wrote {} samples after {} burn-in steps",
        data.len(),
        burn_in
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<ClampDecomposition>,
}

fn eval(a: &EvalArgs, rec: &mut Recorder) -> Result<()> {
    let net = read_model(&a.model, rec)?;
    let data = read_data(&a.data, rec)?;
    if data.names() != net.names() {
        return Err(Error::Domain(format!(
            "data columns [{}] do not match model variables [{}]",
            data.names().join(","),
            net.names().join(",")
        )));
    }
    let report = evaluate(&net, &data, a.exact, method(a.method)).inspect_err(|e| {
        if matches!(e, Error::Capacity { .. }) && a.exact {
            eprintln!("hint: drop --exact to compute the FC limit from the samples alone");
        }
    })?;
    print!("{}", report.to_table());
    let decomposition = match &a.clamp_vars {
        Some(spec) => {
            let vars = parse_vars(spec, net.names())?;
            let p = data.empirical_distribution()?;
            let d = clamp_decomposition(&p, &net, &vars)?;
            println!("\nclamped decomposition over [{spec}]");
            println!("{:<12} {:>22} {:>22}", "node", "full", "averaged");
            for t in &d.nodes {
                println!(
                    "{:<12} {:>22} {:>22}",
                    net.names()[t.node],
                    t.full.to_string(),
                    t.averaged.to_string()
                );
            }
            println!("max |full - averaged| {:e}", d.max_abs_diff);
            Some(d)
        }
        None => None,
    };
    if let Some(out) = &a.out {
        let output = EvalOutput {
            report,
            decomposition,
        };
        rec.output(out, &json_bytes(&output)?)?;
    }
    Ok(())
}

fn table(a: &TableArgs, rec: &mut Recorder) -> Result<()> {
    let mut options = ProtocolOptions::new(a.seed);
    options.ising.coupling = a.coupling;
    rec.seed(a.seed);
    rec.seed(a.seed.wrapping_add(1));
    let rows = reproduce_table(&options, &LearnConfig::default(), method(a.method))?;
    print!("{}", render_table(&rows));
    if let Some(out) = &a.out {
        rec.output(out, &json_bytes(&rows)?)?;
    }
    Ok(())
}

fn solve(a: &SolveArgs, rec: &mut Recorder) -> Result<()> {
    let net = read_model(&a.model, rec)?;
    let m = method(a.method);
    let (dist, names, residual) = match (&a.clamp, a.scan) {
        (Some(spec), Scan::Random) => {
            let clamp = parse_clamp(spec, net.names())?;
            let (st, free) = stationary_clamped(&net, &clamp, m)?;
            let names: Vec<String> = free.iter().map(|&v| net.names()[v].clone()).collect();
            (st.distribution, names, st.residual)
        }
        (Some(_), Scan::Sequential) => {
            return Err(Error::Domain(
                "--clamp is only supported with --scan random".into(),
            ))
        }
        (None, Scan::Random) => {
            let op = TransitionOperator::from_network(&net)?;
            let st = stationary_random_scan(&op, m)?;
            (st.distribution, net.names().to_vec(), st.residual)
        }
        (None, Scan::Sequential) => {
            let op = TransitionOperator::from_network(&net)?;
            let order: Vec<usize> = (0..net.space().n()).collect();
            let st = stationary_sequential_scan(&op, &order, m)?;
            (st.mean, net.names().to_vec(), st.cycle_residual)
        }
    };
    let mut buf = Vec::new();
    dist.write_csv(&names, &mut buf)?;
    rec.output(&a.out, &buf)?;
    eprintln!("residual {residual:e}");
    Ok(())
}

fn rerun(a: &RerunArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let cli = Cli::try_parse_from(&manifest.argv)
        .map_err(|e| Error::Parse(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Error::Parse("manifest records a rerun".into()));
    }
    std::env::set_current_dir(&manifest.cwd)
        .map_err(|e| Error::Parse(format!("cannot enter {}: {e}", manifest.cwd)))?;
    for input in &manifest.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            eprintln!(
                "warning: input {} changed since the recorded run",
                input.path
            );
        }
    }
    run(cli.command, manifest.argv.clone())?;
    let mut mismatched = BTreeMap::new();
    for output in &manifest.outputs {
        let now = sha256_file(&PathBuf::from(&output.path))?;
        let same = now == output.sha256;
        println!(
            "{} {}",
            if same { "identical" } else { "differs  " },
            output.path
        );
        if !same {
            mismatched.insert(output.path.clone(), now);
        }
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{} output(s) differ from the manifest",
            mismatched.len()
        )))
    }
}
