//! Parameter sweeps, method dispatch, dynamics export and the resonance
//! overlay.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Axis, Config, Method, SweepSection};
use crate::dynamics::{default_horizon, periods_in, IntegratorConfig, Propagator};
use crate::entanglement::{averaged_concurrence_numeric, concurrence, AveragingConfig};
use crate::error::{ConfigError, DynamicsError, RunError};
use crate::floquet::{averaged_concurrence_nonres, nearest_integer, ResonanceInfo, ResonanceKind, SeriesConfig};
use crate::model::{DensityMatrix, Physicality, SystemParams};
use crate::rwa::{applicability, concurrence_resonant, Applicability};

/// Which oracle produced `cbar_analytic`, or `numeric` for numeric-only runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Nonres,
    Rwa,
    Numeric,
    /// A single-qubit resonance is within the guard: no analytic value.
    OutOfTheory,
}

impl MethodTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Nonres => "nonres",
            MethodTag::Rwa => "rwa",
            MethodTag::Numeric => "numeric",
            MethodTag::OutOfTheory => "out_of_theory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub coords: Vec<f64>,
    pub cbar_numeric: Option<f64>,
    pub cbar_analytic: Option<f64>,
    pub tag: MethodTag,
    /// Closest resonance condition of all five.
    pub nearest: ResonanceInfo,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Parameter names of the coordinate columns.
    pub axes: Vec<String>,
    /// Relaxation rate applied from `noise.rate_sets`, if any.
    pub rate: Option<f64>,
    /// Row-major: the last axis varies fastest.
    pub points: Vec<SweepPoint>,
}

/// Parameters at one grid point, linked values included.
pub fn point_params(base: &SystemParams, sw: &SweepSection, coords: &[f64]) -> SystemParams {
    let mut p = *base;
    let axes = sw.axes();
    for (axis, &v) in axes.iter().zip(coords) {
        axis.param.apply(&mut p, v);
    }
    for l in &sw.linked {
        let src = axes.iter().position(|a| a.param == l.source).expect("validated source");
        l.param.apply(&mut p, l.scale * coords[src] + l.offset);
    }
    p
}

/// Grid coordinates in row-major order.
pub fn grid(sw: &SweepSection) -> Vec<Vec<f64>> {
    let xs = sw.axis1.values();
    match &sw.axis2 {
        None => xs.into_iter().map(|x| vec![x]).collect(),
        Some(a2) => {
            let ys = a2.values();
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
                .collect()
        }
    }
}

fn nearest_resonance(p: &SystemParams) -> ResonanceInfo {
    ResonanceKind::ALL
        .iter()
        .map(|&k| ResonanceInfo::nearest(k, p))
        .min_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()))
        .expect("five conditions")
}

/// Evaluates one grid point. Failures end up in `diagnostics`.
pub fn evaluate_point(
    p: &SystemParams,
    method: Method,
    icfg: &IntegratorConfig,
    acfg: &AveragingConfig,
    scfg: &SeriesConfig,
) -> (Option<f64>, Option<f64>, MethodTag, Vec<String>) {
    let mut diagnostics = Vec::new();
    let numeric = if method.numeric() {
        match averaged_concurrence_numeric(p, icfg, acfg) {
            Ok(v) => Some(v),
            Err(e) => {
                diagnostics.push(format!("numeric: {e}"));
                None
            }
        }
    } else {
        None
    };
    let (analytic, tag) = if method.analytic() {
        match applicability(p, scfg) {
            Applicability::NonResonant => match averaged_concurrence_nonres(p, scfg) {
                Ok(v) => (Some(v), MethodTag::Nonres),
                Err(e) => {
                    diagnostics.push(format!("nonres: {e}"));
                    (None, MethodTag::Nonres)
                }
            },
            Applicability::Resonant { .. } => match concurrence_resonant(p, scfg) {
                Ok(v) => (Some(v), MethodTag::Rwa),
                Err(e) => {
                    diagnostics.push(format!("rwa: {e}"));
                    (None, MethodTag::Rwa)
                }
            },
            Applicability::OutOfTheory(r) => {
                diagnostics.push(format!("out of theory: {r}"));
                (None, MethodTag::OutOfTheory)
            }
        }
    } else {
        (None, MethodTag::Numeric)
    };
    (numeric, analytic, tag, diagnostics)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| RunError::Io {
        context: "worker pool".into(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Evaluates the grid of `cfg.sweep` for every rate set. Results are
/// assembled in grid order regardless of the worker count.
pub fn run_sweep(cfg: &Config, method: Option<Method>, workers: Option<usize>) -> Result<Vec<SweepResult>, RunError> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| ConfigError::Invalid {
        field: "sweep".into(),
        message: "missing [sweep] section".into(),
    })?;
    let method = method.unwrap_or(sw.method);
    let acfg = sw.averaging();
    let coords = grid(sw);
    let pool = pool(workers)?;
    let mut out = Vec::new();
    for (rate, base) in cfg.rate_variants()? {
        let points = pool.install(|| {
            coords
                .par_iter()
                .map(|c| {
                    let p = point_params(&base, sw, c);
                    let nearest = nearest_resonance(&p);
                    let (cbar_numeric, cbar_analytic, tag, mut diagnostics) = match p.validate() {
                        Ok(()) => evaluate_point(&p, method, &cfg.integrator, &acfg, &cfg.series),
                        Err(e) => (None, None, MethodTag::Numeric, vec![format!("invalid point: {e}")]),
                    };
                    diagnostics.extend(p.perturbative_warnings());
                    SweepPoint {
                        coords: c.clone(),
                        cbar_numeric,
                        cbar_analytic,
                        tag,
                        nearest,
                        diagnostics,
                    }
                })
                .collect()
        });
        out.push(SweepResult {
            axes: sw.axes().iter().map(|a| a.param.name().to_string()).collect(),
            rate,
            points,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// CSV columns: one per axis, then
/// `cbar_numeric,cbar_analytic,tag,nearest,k,detuning,diagnostics`.
/// Missing values are empty fields; diagnostics are `;`-separated.
pub fn write_sweep_csv(result: &SweepResult, w: impl std::io::Write) -> Result<(), RunError> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = result.axes.iter().map(String::as_str).collect();
    header.extend([
        "cbar_numeric",
        "cbar_analytic",
        "tag",
        "nearest",
        "k",
        "detuning",
        "diagnostics",
    ]);
    csv.write_record(&header)?;
    for pt in &result.points {
        let mut row: Vec<String> = pt.coords.iter().map(f64::to_string).collect();
        row.extend([
            opt(pt.cbar_numeric),
            opt(pt.cbar_analytic),
            pt.tag.as_str().to_string(),
            pt.nearest.kind.label(),
            pt.nearest.k.to_string(),
            pt.nearest.detuning.to_string(),
            pt.diagnostics.join(";"),
        ]);
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| RunError::Io {
        context: "writing sweep CSV".into(),
        source: e,
    })?;
    Ok(())
}

/// One point of a resonance line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayPoint {
    pub condition: String,
    /// `standard` or `extended` (the `−g` single-qubit branch).
    pub branch: &'static str,
    pub k: i64,
    pub x: f64,
    pub y: Option<f64>,
}

fn branch_name(kind: ResonanceKind) -> &'static str {
    if kind.is_extended() {
        "extended"
    } else {
        "standard"
    }
}

/// Zeros of `f` on the samples `xs`, by sign change and linear interpolation.
fn roots(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..xs.len() {
        if vals[i] == 0.0 {
            out.push(xs[i]);
        } else if i + 1 < xs.len() && vals[i] * vals[i + 1] < 0.0 {
            let t = vals[i] / (vals[i] - vals[i + 1]);
            out.push(xs[i] + t * (xs[i + 1] - xs[i]));
        }
    }
    out
}

fn photon_range(kind: ResonanceKind, base: &SystemParams, sw: &SweepSection) -> std::ops::RangeInclusive<i64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in grid(sw) {
        let p = point_params(base, sw, &c);
        let v = -kind.offset(&p) / p.drive.omega;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (nearest_integer(lo) - 1)..=(nearest_integer(hi) + 1)
}

/// Resonance lines of all five conditions across the sweep window. In 2D the
/// crossings are located along both grid directions, so lines parallel to
/// either axis are found.
pub fn resonance_overlay(cfg: &Config) -> Result<Vec<OverlayPoint>, RunError> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| ConfigError::Invalid {
        field: "sweep".into(),
        message: "missing [sweep] section".into(),
    })?;
    let base = cfg.params()?;
    let mut out = Vec::new();
    let fine = |a: &Axis| -> Vec<f64> {
        let n = (a.n - 1) * 8 + 1;
        (0..n)
            .map(|i| a.min + (a.max - a.min) * i as f64 / (n - 1) as f64)
            .collect()
    };
    for kind in ResonanceKind::ALL {
        for k in photon_range(kind, &base, sw) {
            let detuning = |c: &[f64]| {
                let p = point_params(&base, sw, c);
                kind.offset(&p) + k as f64 * p.drive.omega
            };
            let mut push = |x: f64, y: Option<f64>| {
                out.push(OverlayPoint {
                    condition: kind.label(),
                    branch: branch_name(kind),
                    k,
                    x,
                    y,
                })
            };
            match &sw.axis2 {
                None => {
                    for x in roots(&fine(&sw.axis1), |x| detuning(&[x])) {
                        push(x, None);
                    }
                }
                Some(a2) => {
                    for y in a2.values() {
                        for x in roots(&fine(&sw.axis1), |x| detuning(&[x, y])) {
                            push(x, Some(y));
                        }
                    }
                    for x in sw.axis1.values() {
                        for y in roots(&fine(a2), |y| detuning(&[x, y])) {
                            push(x, Some(y));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Columns `condition,branch,k,x,y` (`y` empty for 1D sweeps).
pub fn write_overlay_csv(points: &[OverlayPoint], w: impl std::io::Write) -> Result<(), RunError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["condition", "branch", "k", "x", "y"])?;
    for p in points {
        csv.write_record([
            p.condition.clone(),
            p.branch.to_string(),
            p.k.to_string(),
            p.x.to_string(),
            opt(p.y),
        ])?;
    }
    csv.flush().map_err(|e| RunError::Io {
        context: "writing overlay CSV".into(),
        source: e,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsRow {
    pub t_ns: f64,
    pub concurrence: f64,
    pub trace: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsResult {
    pub rate: Option<f64>,
    /// First period with `‖ρ((n+1)T) − ρ(nT)‖_F < entry_tol`, and its time.
    pub entry_period: Option<usize>,
    pub entry_time_ns: Option<f64>,
    pub worst: Physicality,
    pub rows: Vec<DynamicsRow>,
}

/// `C(t)`, `tr ρ` and the smallest eigenvalue from the ground state, one run
/// per rate set.
pub fn run_dynamics(cfg: &Config) -> Result<Vec<DynamicsResult>, RunError> {
    let d = &cfg.dynamics;
    let mut out = Vec::new();
    for (rate, p) in cfg.rate_variants()? {
        let t_max = match d.t_max.or_else(|| default_horizon(&p)) {
            Some(t) => t,
            None => return Err(DynamicsError::NoDissipation.into()),
        };
        if !p.rates().is_dissipative() {
            return Err(DynamicsError::NoDissipation.into());
        }
        let samples = d.samples_per_period;
        let steps = cfg.integrator.steps_for(&p).div_ceil(samples) * samples;
        let icfg = IntegratorConfig {
            steps_per_period: Some(steps),
            ..cfg.integrator
        };
        let prop = Propagator::new(&p, &icfg)?;
        let rho0 = DensityMatrix::ground();
        let entry_period = prop.steady_entry(&rho0, d.entry_tol, cfg.integrator.max_periods);
        // without an explicit t_max, run on until two periods past the entry
        let mut periods = periods_in(&p, t_max);
        if d.t_max.is_none() {
            periods = periods.max(entry_period.map_or(0, |n| n + 2));
        }
        let traj = prop.stroboscopic(&rho0, periods, samples);
        let mut rows = Vec::with_capacity(traj.len());
        for (t, m) in traj.times.iter().zip(&traj.states) {
            let phys = m.physicality();
            rows.push(DynamicsRow {
                t_ns: *t,
                concurrence: concurrence(m)?,
                trace: m.trace().re,
                min_eig: phys.min_eigenvalue,
            });
        }
        out.push(DynamicsResult {
            rate,
            entry_period,
            entry_time_ns: entry_period.map(|n| p.drive.cycle_start() + n as f64 * prop.period()),
            worst: traj.worst_physicality(),
            rows,
        });
    }
    Ok(out)
}

/// Columns `t_ns,C,trace,min_eig`. The steady-state entry time goes to the
/// manifest (`entry_time_ns`).
pub fn write_dynamics_csv(result: &DynamicsResult, w: impl std::io::Write) -> Result<(), RunError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t_ns", "C", "trace", "min_eig"])?;
    for r in &result.rows {
        csv.write_record([
            r.t_ns.to_string(),
            r.concurrence.to_string(),
            r.trace.to_string(),
            r.min_eig.to_string(),
        ])?;
    }
    csv.flush().map_err(|e| RunError::Io {
        context: "writing dynamics CSV".into(),
        source: e,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_time_ns: Option<f64>,
}

/// JSON run manifest written next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config_sha256: String,
    pub workers: usize,
    pub method: Option<Method>,
    pub elapsed_s: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File name for one rate set: `stem.csv` or `stem_gamma<rate>.csv`.
pub fn output_name(stem: &str, rate: Option<f64>) -> String {
    match rate {
        None => format!("{stem}.csv"),
        Some(r) => format!("{stem}_gamma{r:e}.csv"),
    }
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> RunError {
    move |source| RunError::Io { context, source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String, RunError> {
    fs::write(path, bytes).map_err(io_err(format!("writing {}", path.display())))?;
    Ok(sha256_hex(bytes))
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, RunError> {
    let path = dir.join(format!("{}_manifest.json", manifest.command));
    let text = serde_json::to_string_pretty(manifest)?;
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

/// Runs the sweep and writes its CSVs, the overlay and the manifest.
pub fn sweep_to_dir(
    cfg: &Config,
    config_text: &str,
    dir: &Path,
    method: Option<Method>,
    workers: Option<usize>,
) -> Result<Manifest, RunError> {
    ensure_dir(dir)?;
    let start = Instant::now();
    let results = run_sweep(cfg, method, workers)?;
    let sw = cfg.sweep.as_ref().expect("run_sweep checked");
    let mut outputs = Vec::new();
    for r in &results {
        let mut buf = Vec::new();
        write_sweep_csv(r, &mut buf)?;
        let path = dir.join(output_name(&sw.output, r.rate));
        outputs.push(OutputFile {
            sha256: write_file(&path, &buf)?,
            path: path.display().to_string(),
            rate: r.rate,
            entry_time_ns: None,
        });
    }
    let mut buf = Vec::new();
    write_overlay_csv(&resonance_overlay(cfg)?, &mut buf)?;
    let path = dir.join(format!("{}_overlay.csv", sw.output));
    outputs.push(OutputFile {
        sha256: write_file(&path, &buf)?,
        path: path.display().to_string(),
        rate: None,
        entry_time_ns: None,
    });
    let manifest = Manifest {
        command: "sweep".into(),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(config_text.as_bytes()),
        workers: workers.unwrap_or_else(rayon::current_num_threads),
        method: Some(method.unwrap_or(sw.method)),
        elapsed_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Runs the dynamics and writes one CSV per rate set plus the manifest.
pub fn dynamics_to_dir(cfg: &Config, config_text: &str, dir: &Path) -> Result<Manifest, RunError> {
    ensure_dir(dir)?;
    let start = Instant::now();
    let mut outputs = Vec::new();
    for r in run_dynamics(cfg)? {
        let mut buf = Vec::new();
        write_dynamics_csv(&r, &mut buf)?;
        let path = dir.join(output_name("dynamics", r.rate));
        outputs.push(OutputFile {
            sha256: write_file(&path, &buf)?,
            path: path.display().to_string(),
            rate: r.rate,
            entry_time_ns: r.entry_time_ns,
        });
    }
    let manifest = Manifest {
        command: "dynamics".into(),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(config_text.as_bytes()),
        workers: 1,
        method: None,
        elapsed_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Human-readable listing of the resonance conditions at the base
/// parameters, closest first.
pub fn describe_resonances(cfg: &Config) -> Result<String, RunError> {
    let p = cfg.params()?;
    let guard = cfg.series.guard_for(&p);
    let mut all: Vec<ResonanceInfo> = ResonanceKind::ALL
        .iter()
        .map(|&k| ResonanceInfo::nearest(k, &p))
        .collect();
    all.sort_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()));
    let mut s = String::from("condition,branch,k,detuning,within_guard\n");
    for r in all {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.kind.label(),
            branch_name(r.kind),
            r.k,
            r.detuning,
            r.detuning.abs() <= guard
        );
    }
    Ok(s)
}
