//! Running configured experiments and writing their artifacts.
//!
//! A run directory holds `report.json`, `trajectory.csv`, `slice.csv` and
//! `net.bin`. Both CSV files start with a `# idrm-<kind> v<version>` line;
//! readers reject any other version.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ErrorProbe, ExperimentConfig, Method};
use crate::idrm::{
    compute_exponents, make_batch, run_idrm, run_time_marching, streams, IdrmOutcome, OuterSummary, TrajectoryRow,
};
use crate::loss::PinnLoss;
use crate::mlp::MlpNet;
use crate::problems::{DiscreteField, HeatFamily, ProblemSpec};
use crate::quadrature::{derive_seed, rng_from_seed, PRNG_ID};
use crate::trainer::{minimize, AdamConfig};
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "# idrm-trajectory v1";
pub const SLICE_HEADER: &str = "# idrm-slice v1";
pub const SLICE_NODES: usize = 101;

/// One optimizer step. Surrogate terms are empty for the residual baseline,
/// whose `interior` column holds the residual sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub level: usize,
    pub outer: usize,
    pub step: usize,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub i3: Option<f64>,
    pub interior: f64,
    pub boundary: f64,
    pub total: f64,
    pub grad_norm: f64,
}

impl TrajectoryRecord {
    fn from_idrm(row: &TrajectoryRow, level: usize, iter: usize) -> Self {
        Self {
            iter,
            level,
            outer: row.outer,
            step: row.step,
            i1: Some(row.loss.i1),
            i2: Some(row.loss.i2),
            i3: Some(row.loss.i3),
            interior: row.loss.interior,
            boundary: row.loss.boundary,
            total: row.loss.total,
            grad_norm: row.grad_norm,
        }
    }
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRecord]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{TRAJECTORY_HEADER}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(reader: &mut impl BufRead, expected: &str, path: &Path) -> Result<()> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let first = first.trim_end();
    if first != expected {
        return Err(Error::Format(format!(
            "{}: expected schema line `{expected}`, found `{first}`",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    check_header(&mut reader, TRAJECTORY_HEADER, path)?;
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Nodes of the `SLICE_NODES x SLICE_NODES` grid over `(x1, x2)` with the
/// remaining coordinates at the centre of the domain.
pub fn slice_points(spec: &ProblemSpec) -> Array2<f64> {
    let d = spec.dim();
    let dom = &spec.domain;
    let n = SLICE_NODES;
    let mut pts = Array2::zeros((n * n, d));
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 2..d {
                pts[[row, k]] = dom.lower()[k] + 0.5 * dom.edge(k);
            }
            pts[[row, 0]] = dom.lower()[0] + dom.edge(0) * i as f64 / (n - 1) as f64;
            pts[[row, 1]] = dom.lower()[1] + dom.edge(1) * j as f64 / (n - 1) as f64;
        }
    }
    pts
}

/// Writes `x1, x2, u_c..., exact_c...` on the slice grid.
pub fn write_slice(path: &Path, spec: &ProblemSpec, field: &DiscreteField) -> Result<()> {
    let pts = slice_points(spec);
    let nc = spec.n_components;
    let approx = field.values(pts.view())?;
    let mut file = fs::File::create(path)?;
    writeln!(file, "{SLICE_HEADER}")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["x1".to_string(), "x2".to_string()];
    header.extend((0..nc).map(|c| format!("u{c}")));
    if spec.exact.is_some() {
        header.extend((0..nc).map(|c| format!("exact{c}")));
    }
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for (i, x) in pts.outer_iter().enumerate() {
        let mut rec = vec![x[0].to_string(), x[1].to_string()];
        rec.extend(approx[i * nc..(i + 1) * nc].iter().map(|v| v.to_string()));
        if let Some(ex) = &spec.exact {
            rec.extend((ex.value)(x.as_slice().expect("standard layout")).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a slice file back as `(header, rows)`.
pub fn read_slice(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    check_header(&mut reader, SLICE_HEADER, path)?;
    let mut r = csv::Reader::from_reader(reader);
    let header = r
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse).collect();
        rows.push(row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub init: u64,
    pub test_set: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentInfo {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub rate_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub t: f64,
    pub summaries: Vec<OuterSummary>,
    pub relative_l2_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub truncated: bool,
    pub batch_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// Per component, at the last iteration.
    pub relative_l2_error: Vec<f64>,
    pub wallclock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub trajectory: String,
    pub slice: String,
    pub net: String,
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub method: Method,
    pub problem: String,
    pub seed: u64,
    pub prng: String,
    pub derived_seeds: DerivedSeeds,
    pub test_set: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentInfo>,
    pub summaries: Vec<OuterSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub levels: Vec<LevelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinn: Option<PinnSummary>,
    pub final_metrics: FinalMetrics,
    pub aborted: Option<String>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<Artifacts>,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Results of one run kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trajectory: Vec<TrajectoryRecord>,
    pub net: MlpNet,
}

fn init_net(cfg: &ExperimentConfig, spec: &ProblemSpec, seed: u64, method: Method) -> Result<MlpNet> {
    let arch = match method {
        Method::Pinn => cfg.pinn_arch(spec)?,
        _ => cfg.network.arch(spec)?,
    };
    MlpNet::glorot(arch, &mut rng_from_seed(derive_seed(seed, streams::INIT)))
}

fn exponent_info(spec: &ProblemSpec, alpha: f64) -> ExponentInfo {
    match compute_exponents(spec.p_exponent, spec.rho_exponent) {
        Ok(e) => ExponentInfo {
            alpha,
            beta: Some(e.beta),
            rate_condition: e.rate_condition,
        },
        Err(_) => ExponentInfo {
            alpha,
            beta: None,
            rate_condition: false,
        },
    }
}

fn idrm_rows(outcome: &IdrmOutcome, level: usize, offset: usize) -> Vec<TrajectoryRecord> {
    outcome
        .trajectory
        .iter()
        .enumerate()
        .map(|(i, r)| TrajectoryRecord::from_idrm(r, level, offset + i))
        .collect()
}

/// Runs `cfg.experiment.method` with `cfg.experiment.seed` and writes the
/// artifacts to `out` when given. The configuration is validated before any
/// compute.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    if let Some(reason) = cfg.incompatibility(cfg.experiment.method) {
        return Err(Error::Config(vec![reason]));
    }
    let started = Instant::now();
    let seed = cfg.experiment.seed;
    let method = cfg.experiment.method;
    let spec = cfg.problem.build()?;
    let test_set = cfg.test_set(&spec);
    let net = init_net(cfg, &spec, seed, method)?;
    let test_seed = derive_seed(seed, streams::TEST_SET);

    let mut report = RunReport {
        config: cfg.clone(),
        method,
        problem: cfg.problem.name.clone(),
        seed,
        prng: PRNG_ID.to_string(),
        derived_seeds: DerivedSeeds {
            init: derive_seed(seed, streams::INIT),
            test_set: test_seed,
        },
        test_set: format!("{test_set:?}"),
        exponents: None,
        summaries: Vec::new(),
        levels: Vec::new(),
        pinn: None,
        final_metrics: FinalMetrics {
            relative_l2_error: Vec::new(),
            wallclock_seconds: 0.0,
        },
        aborted: None,
        converged: false,
        artifacts: None,
    };

    let (trajectory, net, final_spec) = match method {
        Method::Idrm => {
            let probe = ErrorProbe::new(&spec, test_set, seed)?;
            let mut p = |n: &MlpNet| probe.errors(n);
            let outcome = run_idrm(&spec, &cfg.idrm, &cfg.adam, seed, net, Some(&mut p))?;
            report.exponents = Some(exponent_info(&spec, outcome.alpha));
            report.final_metrics.relative_l2_error = probe.errors(&outcome.net)?;
            report.aborted = outcome.aborted.clone();
            report.converged = outcome.converged;
            let rows = idrm_rows(&outcome, 0, 0);
            report.summaries = outcome.summaries;
            (rows, outcome.net, spec)
        }
        Method::TimeMarching => {
            let family = HeatFamily::new(spec.dim());
            let mut p = |s: &ProblemSpec, n: &MlpNet| ErrorProbe::new(s, test_set, seed)?.errors(n);
            let levels = run_time_marching(
                &family,
                cfg.marching.steps,
                cfg.marching.t_final,
                &cfg.idrm,
                &cfg.adam,
                seed,
                net,
                Some(&mut p),
            )?;
            let mut rows = Vec::new();
            let mut last_spec = spec;
            let mut last_net = None;
            let dt = cfg.marching.t_final / cfg.marching.steps as f64;
            for lv in levels {
                rows.extend(idrm_rows(&lv.outcome, lv.level, rows.len()));
                let level_spec = family.step(dt, lv.t, family.initial());
                let err = ErrorProbe::new(&level_spec, test_set, seed)?.errors(&lv.outcome.net)?;
                report.exponents = Some(exponent_info(&level_spec, lv.outcome.alpha));
                report.converged = lv.outcome.converged;
                report.final_metrics.relative_l2_error = err.clone();
                report.levels.push(LevelReport {
                    level: lv.level,
                    t: lv.t,
                    summaries: lv.outcome.summaries,
                    relative_l2_error: err,
                });
                last_net = Some(lv.outcome.net);
                last_spec = level_spec;
            }
            (rows, last_net.expect("at least one level"), last_spec)
        }
        Method::Pinn => {
            let probe = ErrorProbe::new(&spec, test_set, seed)?;
            let batch = make_batch(&spec, &cfg.idrm, seed, 0, false)?;
            let loss = PinnLoss::new(&spec, &batch, cfg.pinn.sigma, cfg.pinn.eps)?;
            let adam = AdamConfig {
                learning_rate: cfg.pinn.learning_rate,
                max_steps: cfg.pinn.steps,
                ..cfg.adam
            };
            let trace = minimize(|n: &MlpNet| loss.evaluate_with_grad(n), net, &adam)?;
            let rows: Vec<TrajectoryRecord> = trace
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| TrajectoryRecord {
                    iter: i,
                    level: 0,
                    outer: 0,
                    step: r.step,
                    i1: None,
                    i2: None,
                    i3: None,
                    interior: r.loss.1,
                    boundary: r.loss.2,
                    total: r.loss.0,
                    grad_norm: r.grad_norm,
                })
                .collect();
            report.pinn = Some(PinnSummary {
                steps: trace.records.len(),
                final_loss: trace.records.last().map_or(f64::NAN, |r| r.loss.0),
                truncated: trace.truncated,
                batch_seed: batch.seed,
            });
            if trace.truncated {
                report.aborted = Some("non-finite residual loss, training truncated".into());
            }
            report.final_metrics.relative_l2_error = probe.errors(&trace.net)?;
            (rows, trace.net, spec)
        }
    };
    report.final_metrics.wallclock_seconds = started.elapsed().as_secs_f64();

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_trajectory(&dir.join("trajectory.csv"), &trajectory)?;
        write_slice(&dir.join("slice.csv"), &final_spec, &DiscreteField::from_net(&net, final_spec.ansatz))?;
        net.save(&dir.join("net.bin"))?;
        report.artifacts = Some(Artifacts {
            trajectory: "trajectory.csv".into(),
            slice: "slice.csv".into(),
            net: "net.bin".into(),
        });
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("report.json"), json + "\n")?;
    }
    Ok(RunOutput { report, trajectory, net })
}

/// Runs every seed of `seeds` on up to `threads` worker threads; seed `s`
/// writes to `out/seed-s`. Results keep the order of `seeds`.
pub fn run_seed_sweep(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    threads: usize,
    out: Option<&Path>,
) -> Vec<(u64, Result<RunOutput>)> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, seeds.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let mut c = cfg.clone();
                c.experiment.seed = seeds[i];
                let dir: Option<PathBuf> = out.map(|o| o.join(format!("seed-{}", seeds[i])));
                let r = run_experiment(&c, dir.as_deref());
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    seeds
        .iter()
        .copied()
        .zip(results.into_inner().expect("workers joined"))
        .map(|(s, r)| (s, r.expect("every seed ran")))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One method's row of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub seeds: Vec<u64>,
    /// `errors[s][c]`: final error of component `c` for seed `s`.
    pub errors: Vec<Vec<f64>>,
    /// Per-component median over seeds.
    pub median: Vec<f64>,
    pub wallclock_seconds: f64,
    /// Set when the method was not run or failed.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub problem: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    fn compared(&self) -> bool {
        self.rows.iter().filter(|r| r.skipped.is_none()).count() > 1
    }

    fn best(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.skipped.is_none())
            .filter_map(|r| r.median.iter().copied().reduce(f64::max))
            .reduce(f64::min)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let compared = self.compared();
        let mut header = vec!["method", "seeds", "median_error", "wallclock_seconds", "skipped"];
        if compared {
            header.push("ratio_to_best");
        }
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        let best = self.best();
        for r in &self.rows {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            let med: Vec<String> = r.median.iter().map(f64::to_string).collect();
            let mut rec = vec![
                r.method.name().to_string(),
                seeds.join(" "),
                med.join(" "),
                r.wallclock_seconds.to_string(),
                r.skipped.clone().unwrap_or_default(),
            ];
            if compared {
                let worst = r.median.iter().copied().reduce(f64::max);
                rec.push(match (worst, best, &r.skipped) {
                    (Some(m), Some(b), None) if b > 0.0 => (m / b).to_string(),
                    _ => String::new(),
                });
            }
            w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let compared = self.compared();
        let best = self.best();
        writeln!(f, "{}", self.problem)?;
        write!(f, "{:<14} {:>28} {:>10}", "method", "median rel. L2 error", "time [s]")?;
        if compared {
            write!(f, " {:>9}", "vs best")?;
        }
        writeln!(f)?;
        for r in &self.rows {
            if let Some(reason) = &r.skipped {
                writeln!(f, "{:<14} skipped: {reason}", r.method.name())?;
                continue;
            }
            let med: Vec<String> = r.median.iter().map(|v| format!("{v:.3e}")).collect();
            write!(f, "{:<14} {:>28} {:>10.1}", r.method.name(), med.join(" "), r.wallclock_seconds)?;
            if compared {
                let worst = r.median.iter().copied().reduce(f64::max).unwrap_or(f64::NAN);
                write!(f, " {:>9.2}", worst / best.unwrap_or(f64::NAN))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Runs each of `cfg.experiment.methods` over `cfg.experiment.seeds` and
/// reports per-method medians. Incompatible methods are skipped with the
/// reason recorded; run directories go to `out/<method>/seed-<s>`.
pub fn compare_methods(cfg: &ExperimentConfig, threads: usize, out: Option<&Path>) -> Result<Comparison> {
    cfg.validate()?;
    cfg.problem.build()?;
    let mut rows = Vec::new();
    for &method in &cfg.experiment.methods {
        let seeds = cfg.experiment.seeds.clone();
        if let Some(reason) = cfg.incompatibility(method) {
            rows.push(ComparisonRow {
                method,
                seeds,
                errors: Vec::new(),
                median: Vec::new(),
                wallclock_seconds: 0.0,
                skipped: Some(reason),
            });
            continue;
        }
        let mut c = cfg.clone();
        c.experiment.method = method;
        let dir = out.map(|o| o.join(method.name()));
        let results = run_seed_sweep(&c, &seeds, threads, dir.as_deref());
        let mut errors = Vec::new();
        let mut failures = Vec::new();
        let mut wall = 0.0;
        for (s, r) in results {
            match r {
                Ok(o) => {
                    wall += o.report.final_metrics.wallclock_seconds;
                    errors.push(o.report.final_metrics.relative_l2_error);
                }
                Err(e) => failures.push(format!("seed {s}: {e}")),
            }
        }
        let components = errors.first().map_or(0, Vec::len);
        let median_err = (0..components)
            .map(|c| median(&errors.iter().map(|e| e[c]).collect::<Vec<_>>()))
            .collect();
        rows.push(ComparisonRow {
            method,
            seeds,
            errors,
            median: median_err,
            wallclock_seconds: wall,
            skipped: (!failures.is_empty()).then(|| failures.join("; ")),
        });
    }
    let cmp = Comparison {
        problem: cfg.problem.name.clone(),
        rows,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.csv"), cmp.to_csv()?)?;
        fs::write(dir.join("comparison.txt"), cmp.to_string())?;
    }
    Ok(cmp)
}
