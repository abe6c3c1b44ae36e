//! Oracle verification suite: the compressed simulator against the full
//! tableau, the exchange symmetries, positivity, and the two routes to the
//! coherent information.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{take_snapshot, trajectory_rng, BrickSymmetry, CircuitConfig, Trajectory};
use crate::error::{Error, Result};
use crate::observables::{EntropyQueries, Observable, Region};
use crate::oracle::{check_complement_symmetry, check_ie_symmetry, Block, OracleRun, DEFAULT_QUBIT_CAP};
use crate::tableau::InitialState;

/// Separates the region-sampling streams from the circuit streams.
const REGION_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
/// Violation messages kept per check.
const MAX_DETAILS: usize = 10;
/// Negative-control seeds that must show a violation.
pub const NEGATIVE_CONTROL_FRACTION: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub sizes: Vec<usize>,
    pub ps: Vec<f64>,
    pub seeds: usize,
    pub regions: usize,
    pub cap: usize,
    /// Snapshot stride in layers; `0` checks the final layer only.
    pub record_every: usize,
    pub master_seed: u64,
    /// Transduction probability of the negative-control runs.
    pub control_p: f64,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            sizes: vec![4, 6, 8],
            ps: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: 100,
            regions: 50,
            cap: DEFAULT_QUBIT_CAP,
            record_every: 1,
            master_seed: 0,
            control_p: 0.5,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    pub details: Vec<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.details.len() < MAX_DETAILS {
                self.details.push(detail());
            }
        }
    }

    /// Count a violation among checks already tallied.
    fn violation(&mut self, detail: String) {
        self.violations += 1;
        if self.details.len() < MAX_DETAILS {
            self.details.push(detail);
        }
    }

    fn merge(&mut self, other: CheckResult) {
        self.checks += other.checks;
        self.violations += other.violations;
        for d in other.details {
            if self.details.len() < MAX_DETAILS {
                self.details.push(d);
            }
        }
    }

    fn finish_exact(mut self) -> Self {
        self.passed = self.violations == 0 && self.checks > 0;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub elapsed_s: f64,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const ORACLE_EQUIVALENCE: &str = "oracle_equivalence";
pub const IE_SYMMETRY: &str = "ie_symmetry";
pub const IE_NEGATIVE_CONTROL: &str = "ie_negative_control";
pub const COMPLEMENT_SYMMETRY: &str = "complement_symmetry";
pub const POSITIVITY: &str = "positivity";
pub const COHERENT_INFO_IDENTITY: &str = "coherent_info_identity";

/// Everything the suite compares for one geometry and start.
pub fn observables_for(sites: usize, init: InitialState) -> Vec<Observable> {
    let mut obs = vec![Observable::CondEntropyQuarter];
    if sites % 4 == 0 {
        obs.push(Observable::I3);
    }
    if init != InitialState::PureProduct {
        obs.push(Observable::CoherentInfo);
    }
    obs.extend((0..=sites).map(Observable::Profile));
    obs
}

fn is_conditional_entropy(o: &Observable) -> bool {
    matches!(o, Observable::CondEntropyQuarter | Observable::Profile(_))
}

#[derive(Clone, Copy, Debug)]
struct Job {
    sites: usize,
    p: f64,
    init: InitialState,
    seed: u64,
    brick: BrickSymmetry,
}

#[derive(Default)]
struct JobOutcome {
    equivalence: CheckResult,
    ie: CheckResult,
    complement: CheckResult,
    positivity: CheckResult,
    /// Coherent information by recorded layer.
    coherent: Vec<(usize, i64)>,
}

fn job_config(job: &Job, opts: &VerifyOptions) -> CircuitConfig {
    let mut config = CircuitConfig::new(job.sites, job.p)
        .with_init(job.init)
        .with_seed(opts.master_seed)
        .with_record_every(opts.record_every)
        .with_observables(observables_for(job.sites, job.init));
    config.brick = job.brick;
    config
}

fn label(job: &Job, layer: usize) -> String {
    format!("L={} p={} init={} seed={} layer={}", job.sites, job.p, job.init, job.seed, layer)
}

fn run_job(job: &Job, opts: &VerifyOptions, region_stream: u64) -> Result<JobOutcome> {
    let config = job_config(job, opts);
    let mut traj = Trajectory::new(&config, job.seed)?;
    let mut oracle = OracleRun::new(&config, job.seed, opts.cap)?;
    let mut rng = trajectory_rng(opts.master_seed ^ REGION_SEED_MIX, region_stream);
    let mut out = JobOutcome::default();
    let mut layer = 0;
    loop {
        if config.is_recorded(layer) {
            let fast = take_snapshot(traj.tableau(), layer, &config.observables)?;
            let full = oracle.tableau();
            let view = full.block_view(Block::Apparatus);
            let slow = take_snapshot(&view, layer, &config.observables)?;
            for ((o, a), (_, b)) in fast.values.iter().zip(&slow.values) {
                out.equivalence.record(a == b, || format!("{} {o}: compressed {a} oracle {b}", label(job, layer)));
                if is_conditional_entropy(o) {
                    out.positivity.record(*a >= 0, || format!("{} {o} = {a}", label(job, layer)));
                }
            }
            let system = Region::system(traj.tableau().n_system());
            let whole = traj.tableau().conditional(&system)?;
            out.positivity.record(whole >= 0, || format!("{} S(S|A) = {whole}", label(job, layer)));
            if let Some(c) = fast.value(&Observable::CoherentInfo) {
                out.coherent.push((layer, c));
            }
            let ie = check_ie_symmetry(full, opts.regions, &mut rng)?;
            out.ie.checks += ie.checks;
            for v in &ie.violations {
                out.ie.violation(format!(
                    "{} region {:?}: S(P+A)={} S(P+E)={}",
                    label(job, layer),
                    v.region,
                    v.lhs,
                    v.rhs
                ));
            }
            if job.init.has_reference() {
                let comp = check_complement_symmetry(full, opts.regions, &mut rng)?;
                out.complement.checks += comp.checks;
                for v in &comp.violations {
                    out.complement.violation(format!(
                        "{} region {:?}: {} vs {}",
                        label(job, layer),
                        v.region,
                        v.lhs,
                        v.rhs
                    ));
                }
            }
        }
        if traj.is_done() {
            break;
        }
        traj.step()?;
        layer = oracle.step()?;
    }
    Ok(out)
}

/// A negative-control trajectory: whether any recorded layer breaks the
/// exchange symmetry.
fn control_job(job: &Job, opts: &VerifyOptions, region_stream: u64) -> Result<bool> {
    let mut config = job_config(job, opts);
    config.observables.clear();
    let mut oracle = OracleRun::new(&config, job.seed, opts.cap)?;
    let mut rng = trajectory_rng(opts.master_seed ^ REGION_SEED_MIX, region_stream);
    while !oracle.is_done() {
        let layer = oracle.step()?;
        if config.is_recorded(layer) && !check_ie_symmetry(oracle.tableau(), opts.regions, &mut rng)?.is_clean() {
            return Ok(true);
        }
    }
    Ok(false)
}

fn validate(opts: &VerifyOptions) -> Result<()> {
    if opts.sizes.is_empty() || opts.ps.is_empty() || opts.seeds == 0 {
        return Err(Error::InvalidConfig("verify needs at least one size, one p and one seed".into()));
    }
    for &l in &opts.sizes {
        CircuitConfig::new(l, 0.5).validate()?;
    }
    for &p in &opts.ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("p must lie in [0, 1], got {p}")));
        }
    }
    Ok(())
}

/// Run the whole suite.
pub fn run_verification(opts: &VerifyOptions) -> Result<VerifyReport> {
    validate(opts)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;

    let inits = [InitialState::PureProduct, InitialState::MaximallyMixed, InitialState::BellReference];
    let mut jobs = Vec::new();
    for &sites in &opts.sizes {
        for &p in &opts.ps {
            for init in inits {
                for seed in 0..opts.seeds as u64 {
                    jobs.push(Job { sites, p, init, seed, brick: BrickSymmetry::Symmetric });
                }
            }
        }
    }
    let outcomes: Vec<JobOutcome> =
        pool.install(|| jobs.par_iter().enumerate().map(|(i, j)| run_job(j, opts, i as u64)).collect::<Result<_>>())?;

    let mut equivalence = CheckResult::new(ORACLE_EQUIVALENCE);
    let mut ie = CheckResult::new(IE_SYMMETRY);
    let mut complement = CheckResult::new(COMPLEMENT_SYMMETRY);
    let mut positivity = CheckResult::new(POSITIVITY);
    let mut identity = CheckResult::new(COHERENT_INFO_IDENTITY);
    let mut coherent: BTreeMap<(usize, u64, u64), [Vec<(usize, i64)>; 2]> = BTreeMap::new();
    for (job, out) in jobs.iter().zip(outcomes) {
        equivalence.merge(out.equivalence);
        ie.merge(out.ie);
        complement.merge(out.complement);
        positivity.merge(out.positivity);
        let slot = match job.init {
            InitialState::MaximallyMixed => 0,
            InitialState::BellReference => 1,
            InitialState::PureProduct => continue,
        };
        coherent.entry((job.sites, job.p.to_bits(), job.seed)).or_default()[slot] = out.coherent;
    }
    for ((sites, p, seed), [mixed, bell]) in &coherent {
        identity.record(mixed.len() == bell.len(), || format!("L={sites} seed={seed}: snapshot counts differ"));
        for (&(layer, m), &(_, b)) in mixed.iter().zip(bell) {
            identity.record(m == b, || {
                format!("L={sites} p={} seed={seed} layer={layer}: mixed {m} bell {b}", f64::from_bits(*p))
            });
        }
    }

    let control_jobs: Vec<Job> = opts
        .sizes
        .iter()
        .flat_map(|&sites| {
            (0..opts.seeds as u64).map(move |seed| Job {
                sites,
                p: opts.control_p,
                init: InitialState::PureProduct,
                seed,
                brick: BrickSymmetry::Broken,
            })
        })
        .collect();
    let offset = jobs.len() as u64;
    let broken: Vec<bool> = pool.install(|| {
        control_jobs
            .par_iter()
            .enumerate()
            .map(|(i, j)| control_job(j, opts, offset + i as u64))
            .collect::<Result<_>>()
    })?;
    let mut control = CheckResult::new(IE_NEGATIVE_CONTROL);
    control.checks = broken.len();
    control.violations = broken.iter().filter(|&&b| !b).count();
    for (job, _) in control_jobs.iter().zip(&broken).filter(|(_, &b)| !b).take(MAX_DETAILS) {
        control.details.push(format!("L={} seed={}: no violation found", job.sites, job.seed));
    }
    let hit_fraction = 1.0 - control.violations as f64 / control.checks as f64;
    control.passed = hit_fraction >= NEGATIVE_CONTROL_FRACTION;

    let checks = vec![
        equivalence.finish_exact(),
        ie.finish_exact(),
        control,
        if complement.checks > 0 { complement.finish_exact() } else { complement },
        positivity.finish_exact(),
        if identity.checks > 0 { identity.finish_exact() } else { identity },
    ];
    Ok(VerifyReport {
        options: opts.clone(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
