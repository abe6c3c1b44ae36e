//! Aggregation, crossing estimates and finite-size scaling collapse.
//!
//! Aggregate CSV columns: `L,p,observable,layer,mean,stderr,count`, with an
//! empty `stderr` for single-sample groups.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::{trajectory_rng, TrajectoryRecord};
use crate::ensemble::DataRow;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    #[serde(rename = "L")]
    pub sites: usize,
    pub p: f64,
    pub observable: String,
    pub layer: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; absent for one sample.
    pub stderr: Option<f64>,
    pub count: usize,
}

/// Mean and standard error of integer samples.
pub fn mean_stderr(values: &[i64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

fn p_order(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Group rows by `(L, p, observable, layer)` and reduce each group.
pub fn aggregate<'a, I: IntoIterator<Item = &'a DataRow>>(rows: I) -> Vec<AggregatePoint> {
    let mut groups: BTreeMap<(usize, u64, String, usize), Vec<i64>> = BTreeMap::new();
    for row in rows {
        for (name, &v) in &row.obs {
            groups.entry((row.sites, row.p.to_bits(), name.clone(), row.layer)).or_default().push(v);
        }
    }
    let mut out: Vec<AggregatePoint> = groups
        .into_iter()
        .map(|((sites, p, observable, layer), values)| {
            let (mean, stderr) = mean_stderr(&values);
            AggregatePoint { sites, p: f64::from_bits(p), observable, layer, mean, stderr, count: values.len() }
        })
        .collect();
    out.sort_by(|a, b| {
        a.sites
            .cmp(&b.sites)
            .then(p_order(a.p, b.p))
            .then(a.observable.cmp(&b.observable))
            .then(a.layer.cmp(&b.layer))
    });
    out
}

pub fn aggregate_records(records: &[TrajectoryRecord]) -> Vec<AggregatePoint> {
    let rows: Vec<DataRow> = records.iter().flat_map(DataRow::from_record).collect();
    aggregate(&rows)
}

pub fn write_aggregate_csv(path: &Path, points: &[AggregatePoint]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_aggregate(file, path, points)
}

/// Write aggregate CSV to any writer; `label` names it in errors.
pub fn write_aggregate<W: std::io::Write>(writer: W, label: &Path, points: &[AggregatePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(|e| csv_error(label, e))?;
    }
    w.flush().map_err(|e| Error::io(label, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregatePoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            // Header is line 1.
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), line: 0, message: format!("{other:?}") },
    }
}

/// One observable versus `p` at a fixed size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    #[serde(rename = "L")]
    pub sites: usize,
    pub p: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Curves for `observable`, one per size, each at its latest recorded layer.
pub fn curves(points: &[AggregatePoint], observable: &str) -> Vec<Curve> {
    let mut last_layer: BTreeMap<usize, usize> = BTreeMap::new();
    for pt in points.iter().filter(|pt| pt.observable == observable) {
        let e = last_layer.entry(pt.sites).or_insert(pt.layer);
        *e = (*e).max(pt.layer);
    }
    last_layer
        .into_iter()
        .map(|(sites, layer)| {
            let mut sel: Vec<&AggregatePoint> = points
                .iter()
                .filter(|pt| pt.observable == observable && pt.sites == sites && pt.layer == layer)
                .collect();
            sel.sort_by(|a, b| p_order(a.p, b.p));
            Curve {
                sites,
                p: sel.iter().map(|pt| pt.p).collect(),
                mean: sel.iter().map(|pt| pt.mean).collect(),
                stderr: sel.iter().map(|pt| pt.stderr.unwrap_or(0.0)).collect(),
            }
        })
        .collect()
}

const P_MATCH: f64 = 1e-9;

/// Root of the linear interpolation of `large - small` in `p`, taking the
/// first sign change from the low-`p` end of the shared grid.
pub fn estimate_crossing(small: &Curve, large: &Curve) -> Result<f64> {
    let diff: Vec<(f64, f64)> = small
        .p
        .iter()
        .zip(&small.mean)
        .filter_map(|(&p, &m1)| {
            let j = large.p.iter().position(|&q| (q - p).abs() < P_MATCH)?;
            Some((p, large.mean[j] - m1))
        })
        .collect();
    if diff.len() < 3 {
        return Err(Error::NoCrossing(format!(
            "L={} and L={} share {} p values, need at least 3",
            small.sites,
            large.sites,
            diff.len()
        )));
    }
    for w in diff.windows(2) {
        let ((p0, d0), (p1, d1)) = (w[0], w[1]);
        if d0 == 0.0 {
            return Ok(p0);
        }
        if d0.signum() != d1.signum() || d1 == 0.0 {
            return Ok(p0 + (p1 - p0) * d0 / (d0 - d1));
        }
    }
    Err(Error::NoCrossing(format!(
        "L={} and L={} do not cross in p in [{}, {}]",
        small.sites,
        large.sites,
        diff[0].0,
        diff[diff.len() - 1].0
    )))
}

/// Search settings for [`fit_collapse`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseOptions {
    /// Data with `p` outside this window is ignored; `p_c` is searched in it.
    pub p_window: (f64, f64),
    pub nu_window: (f64, f64),
    /// Grid points per axis of the coarse scan.
    pub grid: usize,
    /// Fit `p_c` only, holding `nu` here.
    pub fixed_nu: Option<f64>,
    /// Fraction of points that must fall inside the other sizes' range.
    pub min_overlap: f64,
    /// Parametric bootstrap replicas for the intervals; `0` skips them.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self {
            p_window: (0.40, 0.62),
            nu_window: (0.5, 2.5),
            grid: 41,
            fixed_nu: None,
            min_overlap: 0.5,
            bootstrap: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub p_c: f64,
    pub nu: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseFit {
    pub p_c: f64,
    pub nu: f64,
    pub cost: f64,
    /// Coarse grid first, then every accepted refinement step.
    pub trace: Vec<TracePoint>,
    /// 16th to 84th percentile of the bootstrap replicas.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_c_interval: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_interval: Option<Interval>,
}

/// Collapse input: the chosen observable's curves, restricted to the window.
#[derive(Clone, Debug)]
struct CollapseData {
    /// `(L, p, y, sigma)` grouped by size.
    sizes: Vec<(usize, Vec<(f64, f64, f64)>)>,
}

impl CollapseData {
    fn new(curves: &[Curve], window: (f64, f64)) -> Result<Self> {
        let sizes: Vec<_> = curves
            .iter()
            .map(|c| {
                let pts = (0..c.p.len())
                    .filter(|&i| c.p[i] >= window.0 - P_MATCH && c.p[i] <= window.1 + P_MATCH)
                    .map(|i| (c.p[i], c.mean[i], c.stderr[i]))
                    .collect::<Vec<_>>();
                (c.sites, pts)
            })
            .collect();
        if sizes.len() < 3 {
            return Err(Error::Collapse(format!("need at least 3 sizes, got {}", sizes.len())));
        }
        for (l, pts) in &sizes {
            if pts.len() < 5 {
                return Err(Error::Collapse(format!(
                    "L={l} has {} points inside p in [{}, {}], need at least 5",
                    pts.len(),
                    window.0,
                    window.1
                )));
            }
        }
        Ok(Self { sizes })
    }

    fn n_points(&self) -> usize {
        self.sizes.iter().map(|(_, pts)| pts.len()).sum()
    }

    /// Normalized cost, or `None` when too few points overlap.
    fn cost(&self, p_c: f64, nu: f64, min_overlap: f64) -> Option<f64> {
        // Rescaled (x, y, sigma) per size, sorted by x.
        let scaled: Vec<Vec<(f64, f64, f64)>> = self
            .sizes
            .iter()
            .map(|(l, pts)| {
                let s = (*l as f64).powf(1.0 / nu);
                let mut v: Vec<_> = pts.iter().map(|&(p, y, e)| ((p - p_c) * s, y, e)).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v
            })
            .collect();
        let mut total = 0.0;
        let mut used = 0usize;
        for (k, own) in scaled.iter().enumerate() {
            let mut others: Vec<(f64, f64, f64)> =
                scaled.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, v)| v.iter().copied()).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (lo, hi) = (others[0].0, others[others.len() - 1].0);
            for &(x, y, e) in own {
                if x < lo || x > hi {
                    continue;
                }
                let j = others.partition_point(|o| o.0 < x).clamp(1, others.len() - 1);
                let (a, b) = (others[j - 1], others[j]);
                let w = if b.0 > a.0 { (x - a.0) / (b.0 - a.0) } else { 0.5 };
                let master = a.1 + w * (b.1 - a.1);
                let var_master = (1.0 - w).powi(2) * a.2 * a.2 + w * w * b.2 * b.2;
                let var = (e * e + var_master).max(1e-8);
                total += (y - master).powi(2) / var;
                used += 1;
            }
        }
        let needed = ((self.n_points() as f64) * min_overlap).ceil() as usize;
        (used >= needed.max(1)).then(|| total / used as f64)
    }

    fn with_values(&self, values: &[Vec<f64>]) -> Self {
        let sizes = self
            .sizes
            .iter()
            .zip(values)
            .map(|((l, pts), ys)| (*l, pts.iter().zip(ys).map(|(&(p, _, e), &y)| (p, y, e)).collect()))
            .collect();
        Self { sizes }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn fit_once(data: &CollapseData, opts: &CollapseOptions, keep_trace: bool) -> Result<CollapseFit> {
    let (plo, phi) = opts.p_window;
    let (nlo, nhi) = match opts.fixed_nu {
        Some(nu) => (nu, nu),
        None => opts.nu_window,
    };
    if !(plo < phi) || !(nlo > 0.0 && nlo <= nhi) {
        return Err(Error::Collapse(format!("bad windows p={:?} nu={:?}", opts.p_window, (nlo, nhi))));
    }
    let ps = linspace(plo, phi, opts.grid.max(2));
    let nus = if opts.fixed_nu.is_some() { vec![nlo] } else { linspace(nlo, nhi, opts.grid.max(2)) };
    let mut trace = Vec::new();
    let mut best: Option<TracePoint> = None;
    for &nu in &nus {
        for &p_c in &ps {
            let Some(cost) = data.cost(p_c, nu, opts.min_overlap) else { continue };
            let point = TracePoint { p_c, nu, cost };
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(point.clone());
            }
            if keep_trace {
                trace.push(point);
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::Collapse("no (p_c, nu) in the windows gives enough overlap between sizes".into())
    })?;

    // Coordinate refinement: try +-step on each axis, halve on no progress.
    let mut step_p = (phi - plo) / (ps.len() - 1) as f64;
    let mut step_nu = if nus.len() > 1 { (nhi - nlo) / (nus.len() - 1) as f64 } else { 0.0 };
    let tol = 1e-6 * (phi - plo);
    while step_p > tol {
        let mut improved = false;
        let mut moves = vec![(step_p, 0.0), (-step_p, 0.0)];
        if step_nu > 0.0 {
            moves.extend([(0.0, step_nu), (0.0, -step_nu)]);
        }
        for (dp, dn) in moves {
            let (p_c, nu) = (best.p_c + dp, best.nu + dn);
            if p_c < plo || p_c > phi || nu < nlo || nu > nhi {
                continue;
            }
            if let Some(cost) = data.cost(p_c, nu, opts.min_overlap) {
                if cost < best.cost {
                    best = TracePoint { p_c, nu, cost };
                    if keep_trace {
                        trace.push(best.clone());
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            step_p /= 2.0;
            step_nu /= 2.0;
        }
    }
    Ok(CollapseFit {
        p_c: best.p_c,
        nu: best.nu,
        cost: best.cost,
        trace,
        p_c_interval: None,
        nu_interval: None,
    })
}

fn percentile_interval(mut v: Vec<f64>) -> Option<Interval> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    Some(Interval { lo: at(0.16), hi: at(0.84) })
}

/// Fit `(p_c, nu)` so that `y` against `(p - p_c) L^(1/nu)` falls on one
/// curve.
///
/// Each point is compared with the piecewise-linear curve through the points
/// of all other sizes, where its rescaled `x` lies inside their range. The
/// cost is the mean of `(y - master)^2 / (sigma^2 + sigma_master^2)` over those
/// points. A grid scan over the windows is followed by coordinate refinement
/// that only accepts improvements.
pub fn fit_collapse(curves: &[Curve], opts: &CollapseOptions) -> Result<CollapseFit> {
    let data = CollapseData::new(curves, opts.p_window)?;
    let mut fit = fit_once(&data, opts, true)?;
    if opts.bootstrap > 0 {
        let mut rng = trajectory_rng(opts.seed, 0);
        let (mut pcs, mut nus) = (Vec::new(), Vec::new());
        for _ in 0..opts.bootstrap {
            let values: Vec<Vec<f64>> = data
                .sizes
                .iter()
                .map(|(_, pts)| pts.iter().map(|&(_, y, e)| gaussian(&mut rng, y, e)).collect())
                .collect();
            if let Ok(f) = fit_once(&data.with_values(&values), opts, false) {
                pcs.push(f.p_c);
                nus.push(f.nu);
            }
        }
        fit.p_c_interval = percentile_interval(pcs);
        if opts.fixed_nu.is_none() {
            fit.nu_interval = percentile_interval(nus);
        }
    }
    Ok(fit)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    } else {
        mean
    }
}

/// Scaling function used by the synthetic fixture: `-(1 - tanh(2x))`, which
/// is `-1` at the critical point, `-2` deep in the small-`p` phase and `0` deep
/// in the large-`p` phase.
pub fn synthetic_scaling_function(x: f64) -> f64 {
    -(1.0 - (2.0 * x).tanh())
}

/// Exact-scaling data `f((p - p_c) L^(1/nu))` plus Gaussian noise of width
/// `noise`, reported as the standard error.
pub fn synthetic_collapse_points(
    sizes: &[usize],
    ps: &[f64],
    p_c: f64,
    nu: f64,
    noise: f64,
    seed: u64,
) -> Vec<AggregatePoint> {
    let mut rng = trajectory_rng(seed, 0);
    let mut out = Vec::new();
    for &l in sizes {
        for &p in ps {
            let x = (p - p_c) * (l as f64).powf(1.0 / nu);
            out.push(AggregatePoint {
                sites: l,
                p,
                observable: "I3".into(),
                layer: 4 * l,
                mean: gaussian(&mut rng, synthetic_scaling_function(x), noise),
                stderr: Some(noise),
                count: 1000,
            });
        }
    }
    out
}

/// The `p` grid `lo, lo + step, ..., hi`.
pub fn p_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + step * i as f64) * 1e9).round() / 1e9).collect()
}
