//! `iesim`: run ensembles, verify against the oracle, and analyse the output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use iesim::analysis::{
    aggregate, aggregate_records, curves, estimate_crossing, fit_collapse, read_aggregate_csv,
    write_aggregate, AggregatePoint, CollapseOptions,
};
use iesim::ensemble::{read_data_file, run_ensemble, run_ensemble_records, EnsembleSpec};
use iesim::oracle::DEFAULT_QUBIT_CAP;
use iesim::verify::{run_verification, VerifyOptions};
use iesim::{CircuitConfig, InitialState, Observable};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "iesim", version, about = "Noisy-transduction brickwork circuits on stabilizer states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of trajectories and write JSON-lines rows.
    Simulate(SimulateArgs),
    /// Compare the compressed simulator with the full oracle and check the symmetries.
    Verify(VerifyArgs),
    /// Reduce trajectory files to per-point means and standard errors (CSV).
    Aggregate(AggregateArgs),
    /// Pairwise crossings of one observable between sizes.
    Crossing(CrossingArgs),
    /// Finite-size scaling collapse for (p_c, nu).
    Collapse(CollapseArgs),
    /// Ensemble-mean S(P_x | A) against x.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct CircuitArgs {
    /// JSON circuit config; flags given here override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Site counts; repeat or separate with commas.
    #[arg(long = "L", value_name = "L", value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Transduction probabilities; repeat or separate with commas.
    #[arg(long = "p", value_name = "P", value_delimiter = ',')]
    ps: Vec<f64>,
    /// Layers per trajectory (default 4L).
    #[arg(long = "T", value_name = "T")]
    layers: Option<usize>,
    /// Trajectories per (L, p) point.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// product, mixed or bell.
    #[arg(long)]
    init: Option<InitialState>,
    #[arg(long, value_name = "N")]
    record_every: Option<usize>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl CircuitArgs {
    fn template(&self) -> Result<CircuitConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => CircuitConfig::new(0, 0.0),
        };
        if let Some(t) = self.layers {
            config.layers = Some(t);
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(init) = self.init {
            config.initial_state = init;
        }
        if let Some(every) = self.record_every {
            config.record_every = every;
        }
        Ok(config)
    }

    fn grid(&self, template: &CircuitConfig) -> Result<(Vec<usize>, Vec<f64>)> {
        let sizes = if self.sizes.is_empty() && self.config.is_some() { vec![template.sites] } else { self.sizes.clone() };
        let ps = if self.ps.is_empty() && self.config.is_some() { vec![template.p] } else { self.ps.clone() };
        if sizes.is_empty() {
            bail!("give at least one --L (or a --config with L)");
        }
        if ps.is_empty() {
            bail!("give at least one --p (or a --config with p)");
        }
        Ok((sizes, ps))
    }

    fn spec(&self, observables: impl Fn(usize, &[Observable]) -> Result<Vec<Observable>>) -> Result<Vec<EnsembleSpec>> {
        let template = self.template()?;
        let (sizes, ps) = self.grid(&template)?;
        // Observables can depend on L, so each size gets its own template.
        sizes
            .iter()
            .map(|&l| {
                let mut t = template.clone();
                t.sites = l;
                t.observables = observables(l, &template.observables)?;
                Ok(EnsembleSpec::product(t, &[(l, self.samples)], &ps).with_workers(self.workers))
            })
            .collect()
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Comma-separated: I3, cond_entropy_quarter, coherent_info, profile:x, profile:all.
    /// Defaults to the config's list, else `I3,cond_entropy_quarter`.
    #[arg(long)]
    observables: Option<String>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "L", value_name = "L", value_delimiter = ',', default_values_t = [4usize, 6, 8])]
    sizes: Vec<usize>,
    #[arg(long, value_name = "P,P,...", value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    p_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    /// Oracle qubit cap.
    #[arg(long, default_value_t = DEFAULT_QUBIT_CAP)]
    cap: usize,
    /// Random regions per snapshot for the symmetry checks.
    #[arg(long, default_value_t = 50)]
    regions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Report path; stdout if absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    /// Trajectory files written by `simulate`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// CSV path; stdout if absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossingArgs {
    /// Aggregate CSV.
    input: PathBuf,
    #[arg(long, default_value = "I3")]
    observable: String,
}

#[derive(Args)]
struct CollapseArgs {
    /// Aggregate CSV.
    input: PathBuf,
    #[arg(long, default_value = "I3")]
    observable: String,
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', num_args = 2, default_values_t = [0.40, 0.62])]
    p_window: Vec<f64>,
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', num_args = 2, default_values_t = [0.5, 2.5])]
    nu_window: Vec<f64>,
    /// Hold nu fixed and fit p_c only.
    #[arg(long)]
    fixed_nu: Option<f64>,
    #[arg(long, default_value_t = 41)]
    grid: usize,
    #[arg(long, default_value_t = 0.5)]
    min_overlap: f64,
    /// Bootstrap replicas for the intervals.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the search trace in the output.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// CSV path; stdout if absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

const DEFAULT_OBSERVABLES: &str = "I3,cond_entropy_quarter";

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let specs = args.circuit.spec(|l, from_config| match args.observables.as_deref() {
        Some(list) => Ok(Observable::parse_list(list, l)?),
        None if !from_config.is_empty() => Ok(from_config.to_vec()),
        None => Ok(Observable::parse_list(DEFAULT_OBSERVABLES, l)?),
    })?;
    if specs.iter().all(|s| s.template.observables == specs[0].template.observables) {
        // One file; trajectory indices run on across sizes.
        let mut spec = specs[0].clone();
        spec.grid = specs.iter().flat_map(|s| s.grid.clone()).collect();
        report_run(run_ensemble(&spec.with_output(&args.out))?);
    } else {
        // Size-dependent lists such as profile:all get one file per size.
        let stem = args.out.with_extension("");
        for s in specs {
            let path = PathBuf::from(format!("{}.L{}.jsonl", stem.display(), s.template.sites));
            report_run(run_ensemble(&s.with_output(&path))?);
        }
    }
    Ok(())
}

fn report_run(summary: iesim::ensemble::EnsembleSummary) {
    eprintln!(
        "wrote {} rows from {} trajectories to {} in {:.2} s",
        summary.manifest.records,
        summary.manifest.trajectories,
        summary.path.display(),
        summary.manifest.elapsed_s
    );
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let opts = VerifyOptions {
        sizes: args.sizes.clone(),
        ps: args.p_grid.clone(),
        seeds: args.seeds,
        regions: args.regions,
        cap: args.cap,
        master_seed: args.seed,
        workers: args.workers,
        ..VerifyOptions::default()
    };
    let report = run_verification(&opts)?;
    for c in &report.checks {
        eprintln!(
            "{} {}: {} checks, {} violations",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.checks,
            c.violations
        );
    }
    emit_json(&report, args.out.as_deref())?;
    Ok(report.passed)
}

fn aggregate_files(args: &AggregateArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.files {
        let file = read_data_file(path)?;
        match &file.manifest {
            Some(m) if !m.complete => eprintln!("warning: {} is marked incomplete", path.display()),
            None => eprintln!("warning: {} has no manifest line", path.display()),
            _ => {}
        }
        rows.extend(file.rows);
    }
    write_points(&aggregate(&rows), args.out.as_deref())
}

fn write_points(points: &[AggregatePoint], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => iesim::analysis::write_aggregate_csv(path, points)?,
        None => write_aggregate(io::stdout().lock(), Path::new("<stdout>"), points)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct Crossing {
    small: usize,
    large: usize,
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn crossing(args: &CrossingArgs) -> Result<bool> {
    let points = read_aggregate_csv(&args.input)?;
    let cs = curves(&points, &args.observable);
    if cs.len() < 2 {
        bail!("{} has {} sizes for {}; need at least 2", args.input.display(), cs.len(), args.observable);
    }
    let mut out = Vec::new();
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let r = estimate_crossing(&cs[i], &cs[j]);
            out.push(Crossing {
                small: cs[i].sites,
                large: cs[j].sites,
                p: r.as_ref().ok().copied(),
                error: r.err().map(|e| e.to_string()),
            });
        }
    }
    emit_json(&out, None)?;
    Ok(out.iter().all(|c| c.p.is_some()))
}

fn collapse(args: &CollapseArgs) -> Result<()> {
    let points = read_aggregate_csv(&args.input)?;
    let opts = CollapseOptions {
        p_window: (args.p_window[0], args.p_window[1]),
        nu_window: (args.nu_window[0], args.nu_window[1]),
        grid: args.grid,
        fixed_nu: args.fixed_nu,
        min_overlap: args.min_overlap,
        bootstrap: args.bootstrap,
        seed: args.seed,
    };
    let mut fit = fit_collapse(&curves(&points, &args.observable), &opts)?;
    if !args.trace {
        fit.trace.clear();
    }
    emit_json(&fit, None)
}

#[derive(Serialize)]
struct ProfileRow {
    #[serde(rename = "L")]
    sites: usize,
    p: f64,
    x: usize,
    mean: f64,
    stderr: Option<f64>,
    count: usize,
}

fn profile(args: &ProfileArgs) -> Result<()> {
    let specs = args.circuit.spec(|l, _| Ok((0..=l).map(Observable::Profile).collect()))?;
    let mut rows = Vec::new();
    for spec in specs {
        let records = run_ensemble_records(&spec)?;
        let final_layer = spec.template.layers();
        for pt in aggregate_records(&records).into_iter().filter(|pt| pt.layer == final_layer) {
            let x = match pt.observable.parse::<Observable>()? {
                Observable::Profile(x) => x,
                _ => continue,
            };
            rows.push(ProfileRow { sites: pt.sites, p: pt.p, x, mean: pt.mean, stderr: pt.stderr, count: pt.count });
        }
    }
    rows.sort_by(|a, b| a.sites.cmp(&b.sites).then(a.p.total_cmp(&b.p)).then(a.x.cmp(&b.x)));
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate(a) => simulate(a).map(|()| true),
        Command::Verify(a) => verify(a),
        Command::Aggregate(a) => aggregate_files(a).map(|()| true),
        Command::Crossing(a) => crossing(a),
        Command::Collapse(a) => collapse(a).map(|()| true),
        Command::Profile(a) => profile(a).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
