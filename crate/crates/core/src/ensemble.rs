//! Ensembles of independent trajectories and their JSON-lines files.
//!
//! Trajectory indices run sequentially over the grid points in order, then
//! over samples, so the data is fixed by the spec and `master_seed` alone.
//! The worker count only changes the wall-clock time.
//!
//! File format (`iesim-jsonl/1`): one JSON object per trajectory snapshot,
//!
//! ```text
//! {"L":16,"p":0.5,"T":64,"init":"product","seed":7,"trajectory":3,"layer":64,"obs":{"I3":-2}}
//! ```
//!
//! followed by one manifest line `{"manifest":{...}}` whose `complete` field
//! is false when the run stopped early.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{run_trajectory, CircuitConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::tableau::InitialState;

pub const FORMAT: &str = "iesim-jsonl/1";

/// Trajectories handed to the pool at a time; bounds memory between writes.
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "L")]
    pub sites: usize,
    pub p: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub template: CircuitConfig,
    pub grid: Vec<GridPoint>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Pool size; `0` uses the rayon default.
    #[serde(default)]
    pub workers: usize,
}

impl EnsembleSpec {
    /// Every `(L, samples)` pair crossed with every `p`, sizes outermost.
    pub fn product(template: CircuitConfig, sizes: &[(usize, usize)], ps: &[f64]) -> Self {
        let grid = sizes
            .iter()
            .flat_map(|&(sites, samples)| ps.iter().map(move |&p| GridPoint { sites, p, samples }))
            .collect();
        Self { template, grid, output: None, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_output(mut self, path: impl Into<PathBuf>) -> Self {
        self.output = Some(path.into());
        self
    }

    pub fn config_for(&self, point: &GridPoint) -> CircuitConfig {
        let mut config = self.template.clone();
        config.sites = point.sites;
        config.p = point.p;
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("ensemble grid is empty".into()));
        }
        for point in &self.grid {
            if point.samples == 0 {
                return Err(Error::InvalidConfig(format!(
                    "grid point L={} p={} has zero samples",
                    point.sites, point.p
                )));
            }
            self.config_for(point).validate()?;
        }
        Ok(())
    }

    pub fn trajectory_count(&self) -> usize {
        self.grid.iter().map(|g| g.samples).sum()
    }

    /// `(config, trajectory_index)` for every trajectory, in index order.
    pub fn jobs(&self) -> Vec<(CircuitConfig, u64)> {
        let mut index = 0u64;
        let mut out = Vec::with_capacity(self.trajectory_count());
        for point in &self.grid {
            let config = self.config_for(point);
            for _ in 0..point.samples {
                out.push((config.clone(), index));
                index += 1;
            }
        }
        out
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
    }
}

fn run_chunk(pool: &rayon::ThreadPool, jobs: &[(CircuitConfig, u64)]) -> Result<Vec<TrajectoryRecord>> {
    pool.install(|| jobs.par_iter().map(|(c, i)| run_trajectory(c, *i)).collect())
}

/// Run every trajectory and return the records in index order.
pub fn run_ensemble_records(spec: &EnsembleSpec) -> Result<Vec<TrajectoryRecord>> {
    spec.validate()?;
    let pool = spec.pool()?;
    let jobs = spec.jobs();
    let mut out = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(CHUNK) {
        out.extend(run_chunk(&pool, chunk)?);
    }
    Ok(out)
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRow {
    #[serde(rename = "L")]
    pub sites: usize,
    pub p: f64,
    #[serde(rename = "T")]
    pub layers: usize,
    pub init: InitialState,
    pub seed: u64,
    pub trajectory: u64,
    pub layer: usize,
    pub obs: BTreeMap<String, i64>,
}

impl DataRow {
    pub fn from_record(record: &TrajectoryRecord) -> Vec<DataRow> {
        let c = &record.config;
        record
            .snapshots
            .iter()
            .map(|s| DataRow {
                sites: c.sites,
                p: c.p,
                layers: c.layers(),
                init: c.initial_state,
                seed: c.master_seed,
                trajectory: record.trajectory_index,
                layer: s.layer,
                obs: s.values.iter().map(|(o, v)| (o.name(), *v)).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub complete: bool,
    pub trajectories: usize,
    pub records: usize,
    pub elapsed_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    manifest: Manifest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub path: PathBuf,
    pub manifest: Manifest,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

/// Run the ensemble and stream its rows to `spec.output`.
///
/// On a failed trajectory the rows written so far stay in place, followed by
/// a manifest with `complete: false`, and the error is returned.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleSummary> {
    spec.validate()?;
    let path = spec
        .output
        .clone()
        .ok_or_else(|| Error::InvalidConfig("ensemble spec has no output path".into()))?;
    let start = Instant::now();
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let pool = spec.pool()?;
    let jobs = spec.jobs();
    let (mut trajectories, mut records) = (0, 0);
    let mut failure = None;
    for chunk in jobs.chunks(CHUNK) {
        match run_chunk(&pool, chunk) {
            Ok(done) => {
                for record in &done {
                    for row in DataRow::from_record(record) {
                        write_line(&mut w, &row).map_err(|e| Error::io(&path, e))?;
                        records += 1;
                    }
                }
                trajectories += done.len();
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        complete: failure.is_none(),
        trajectories,
        records,
        elapsed_s: start.elapsed().as_secs_f64(),
        error: failure.as_ref().map(|e| e.to_string()),
    };
    write_line(&mut w, &ManifestLine { manifest: manifest.clone() }).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(EnsembleSummary { path, manifest }),
    }
}

/// Rows and manifest of one file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataFile {
    pub rows: Vec<DataRow>,
    pub manifest: Option<Manifest>,
}

pub fn read_data_file(path: &Path) -> Result<DataFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = DataFile::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        };
        if text.starts_with("{\"manifest\"") {
            let m: ManifestLine = serde_json::from_str(text).map_err(parse_err)?;
            out.manifest = Some(m.manifest);
        } else {
            out.rows.push(serde_json::from_str(text).map_err(parse_err)?);
        }
    }
    Ok(out)
}
