//! Monte-Carlo orchestration and output files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dasf::engine::{
    dasf_run, BatchSource, ConvergenceRecord, EngineError, FilterState, FixedBatch, Reference, RunConfig,
    StreamingBatches, UpdateScheme,
};
use dasf::network::{make_erdos_renyi, make_fully_connected, make_path, make_random_tree, NetworkError};
use dasf::sfo::Statistics;
use dasf::signals::{sample_adaptive, sample_stationary, Drift, LambdaSchedule, SignalModel};
use dasf::{Mat, NetworkGraph, SfoProblem, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, Family, Mode, Scheme, Topology, Variant};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("run {run} of {variant}: {message}")]
    Run { variant: String, run: usize, message: String },
    #[error("tracking study without a [tracking] section")]
    MissingDrift,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Independent random streams of one Monte-Carlo run. Every variant of a
/// study sees the same streams for the same run index, so topology and `Q`
/// comparisons use common random numbers.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    Graph = 0,
    Params = 1,
    Data = 2,
    Init = 3,
}

fn stream(seed: u64, run: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64 * 4 + purpose as u64);
    rng
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> Mat {
    let sd = var.sqrt();
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

fn build_graph(topology: Topology, channels: Vec<usize>, seed: u64) -> Result<NetworkGraph, NetworkError> {
    match topology {
        Topology::FullyConnected => make_fully_connected(channels),
        Topology::ErdosRenyi(p) => make_erdos_renyi(channels, p, seed),
        Topology::RandomTree => make_random_tree(channels, seed),
        Topology::Path => make_path(channels),
    }
}

/// QCQP terms: Gaussian `A`, `c`, `d`, and `α² = ‖d‖²/min_k ‖c_k‖² · (1 + U)`
/// so that every node's local problem is feasible from the first iteration.
fn qcqp_problem<R: Rng>(rng: &mut R, channels: &[usize], q: usize) -> Result<SfoProblem, String> {
    let m: usize = channels.iter().sum();
    let a = gaussian(rng, m, q, 1.0);
    let c = Vector::from_iterator(m, gaussian(rng, m, 1, 1.0).iter().copied());
    let d = Vector::from_iterator(q, gaussian(rng, q, 1, 1.0).iter().copied());
    let mut offset = 0;
    let mut min_c = f64::INFINITY;
    for &mk in channels {
        min_c = min_c.min(c.rows(offset, mk).norm_squared());
        offset += mk;
    }
    let alpha = (d.norm_squared() / min_c * (1.0 + rng.random::<f64>())).sqrt();
    SfoProblem::qcqp(channels.to_vec(), a, c, d, alpha).map_err(|e| e.to_string())
}

/// Everything a single run needs, drawn from that run's streams.
pub struct RunSetup {
    pub graph: NetworkGraph,
    pub problem: SfoProblem,
    pub model: SignalModel,
    pub initial: FilterState,
}

pub fn setup_run(cfg: &ExperimentConfig, variant: &Variant, run: usize) -> Result<RunSetup, String> {
    let channels = variant.channels.clone();
    let m: usize = channels.iter().sum();
    let q = variant.q;
    let graph_seed = stream(cfg.seed, run, Purpose::Graph).random::<u64>();
    let graph = build_graph(variant.topology, channels.clone(), graph_seed).map_err(|e| e.to_string())?;

    let mut params = stream(cfg.seed, run, Purpose::Params);
    let (sv, nv) = (cfg.source_variance, cfg.noise_variance);
    let model = match &cfg.tracking {
        Some(t) => {
            let p0 = Vector::from_iterator(m, gaussian(&mut params, m, 1, 1.0).iter().copied());
            let delta = Vector::from_iterator(m, gaussian(&mut params, m, 1, t.drift_variance).iter().copied());
            let n = cfg.samples as f64;
            let knots = t.schedule.iter().map(|&(i, l)| (i * n, l)).collect();
            let schedule = LambdaSchedule::new(knots).map_err(|e| e.to_string())?;
            SignalModel::tracking(Drift { p0, delta, schedule }, sv, nv)
        }
        None => {
            let r_sources = (cfg.family == Family::Tro).then_some(q);
            SignalModel::random_uniform(&mut params, m, q, r_sources, sv, nv)
        }
    }
    .map_err(|e| e.to_string())?;
    let problem = match cfg.family {
        Family::Mmse => SfoProblem::mmse(channels.clone(), q).map_err(|e| e.to_string())?,
        Family::Tro => SfoProblem::tro(channels.clone(), q).map_err(|e| e.to_string())?,
        Family::Scqp => SfoProblem::scqp(channels.clone(), gaussian(&mut params, m, q, 1.0)).map_err(|e| e.to_string())?,
        Family::Qcqp => qcqp_problem(&mut params, &channels, q)?,
    };
    let initial = FilterState::random(&channels, q, &mut stream(cfg.seed, run, Purpose::Init));
    Ok(RunSetup { graph, problem, model, initial })
}

/// Centralized optimum from the model's analytic statistics.
fn analytic_optimum(problem: &SfoProblem, model: &SignalModel) -> Result<Mat, String> {
    let q = problem.q();
    let stats = Statistics {
        r_yy: model.covariance_y(),
        r_vv: problem.uses_v().then(|| model.covariance_v()).flatten(),
        r_ys: problem.uses_target().then(|| model.cross_ys().columns(0, q).into_owned()),
        target_power: problem.uses_target().then_some(q as f64 * model.source_var),
    };
    let instance = problem.central_instance_from_statistics(stats).map_err(|e| e.to_string())?;
    problem.solve(&instance).map(|o| o.x).map_err(|e| e.to_string())
}

/// Executes one Monte-Carlo run of one variant.
pub fn execute_run(cfg: &ExperimentConfig, variant: &Variant, run: usize) -> Result<ConvergenceRecord, String> {
    let setup = setup_run(cfg, variant, run)?;
    let channels = variant.channels.clone();
    let n = cfg.samples;
    let model = setup.model.clone();
    let mut data = stream(cfg.seed, run, Purpose::Data);
    let draw = move |model: &SignalModel, t: u64, rng: &mut ChaCha8Rng| {
        if model.drift.is_some() {
            sample_adaptive(model, &channels, t, n, rng)
        } else {
            sample_stationary(model, &channels, t, n, rng)
        }
    };

    let mut run_config = RunConfig::new(cfg.iterations);
    run_config.scheme = match cfg.scheme {
        Scheme::TopologyIndependent => UpdateScheme::TopologyIndependent,
        Scheme::FullyConnected => UpdateScheme::FullyConnected,
    };
    let mut source: Box<dyn BatchSource> = match cfg.mode {
        Mode::Batch => {
            run_config.reference = Reference::Central;
            let batch = draw(&model, 0, &mut data).map_err(|e| e.to_string())?;
            Box::new(FixedBatch(batch.into()))
        }
        Mode::Adaptive => {
            run_config.reference = if cfg.tracking.is_some() {
                Reference::PerBatch
            } else {
                Reference::Fixed(analytic_optimum(&setup.problem, &model)?)
            };
            Box::new(StreamingBatches(move |i: usize| {
                draw(&model, (i * n) as u64, &mut data)
                    .map_err(|e| EngineError::Source { iteration: i, message: e.to_string() })
            }))
        }
    };
    dasf_run(&setup.problem, &setup.graph, setup.initial, source.as_mut(), &run_config).map_err(|e| e.to_string())
}

/// Per-iteration statistics of ε over completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub sem: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub fn aggregate(records: &[ConvergenceRecord]) -> Vec<AggregateRow> {
    let iters = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    (0..iters)
        .map(|i| {
            let values: Vec<f64> = records.iter().filter_map(|r| r.rows[i].epsilon).filter(|e| !e.is_nan()).collect();
            let k = values.len();
            let mean = values.iter().sum::<f64>() / k as f64;
            let sem = if k > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow { iter: i, runs: k, mean, median: median(&values), sem }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    /// Completed runs, ordered by run index.
    pub runs: Vec<(usize, ConvergenceRecord)>,
    pub failed: Vec<(usize, String)>,
    pub aggregate: Vec<AggregateRow>,
}

impl VariantResult {
    pub fn records(&self) -> Vec<ConvergenceRecord> {
        self.runs.iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn median_at(&self, iter: usize) -> f64 {
        self.aggregate[iter].median
    }

    pub fn final_median(&self) -> f64 {
        self.aggregate.last().map_or(f64::NAN, |r| r.median)
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub variants: Vec<VariantResult>,
    /// λ per iteration for tracking studies.
    pub lambda: Option<Vec<f64>>,
}

fn execute_all(cfg: &ExperimentConfig) -> Result<Vec<VariantResult>, StudyError> {
    let variants = cfg.variants();
    let jobs: Vec<(usize, usize)> =
        (0..variants.len()).flat_map(|v| (0..cfg.runs).map(move |r| (v, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))?;
    // The ordered collect makes the reduction independent of scheduling.
    let outcomes: Vec<Result<ConvergenceRecord, String>> =
        pool.install(|| jobs.par_iter().map(|&(v, r)| execute_run(cfg, &variants[v], r)).collect());
    let mut results: Vec<VariantResult> = variants
        .into_iter()
        .map(|variant| VariantResult { variant, runs: Vec::new(), failed: Vec::new(), aggregate: Vec::new() })
        .collect();
    for (&(v, r), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(record) => results[v].runs.push((r, record)),
            Err(message) => {
                log::warn!("run {r} of {} failed: {message}", results[v].variant.label());
                results[v].failed.push((r, message));
            }
        }
    }
    for res in &mut results {
        if res.runs.is_empty() {
            let (run, message) = res.failed.first().cloned().unwrap_or((0, "no runs".into()));
            return Err(StudyError::Run { variant: res.variant.label(), run, message });
        }
        res.aggregate = aggregate(&res.records());
    }
    Ok(results)
}

/// Monte-Carlo study over every variant of the config. Writes the output
/// files when `output_dir` is set.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult, StudyError> {
    if cfg.tracking.is_some() {
        return run_tracking(cfg);
    }
    let result = StudyResult { variants: execute_all(cfg)?, lambda: None };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(cfg, &result, dir)?;
    }
    Ok(result)
}

/// Tracking study: ε against the per-batch optimum, with λ reported per
/// iteration (evaluated at the start of each batch).
pub fn run_tracking(cfg: &ExperimentConfig) -> Result<StudyResult, StudyError> {
    let spec = cfg.tracking.as_ref().ok_or(StudyError::MissingDrift)?;
    let schedule = LambdaSchedule::new(spec.schedule.clone()).map_err(|_| StudyError::MissingDrift)?;
    let lambda = (0..=cfg.iterations).map(|i| schedule.value(i as f64)).collect();
    let result = StudyResult { variants: execute_all(cfg)?, lambda: Some(lambda) };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(cfg, &result, dir)?;
    }
    Ok(result)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StudyError + '_ {
    move |source| StudyError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), StudyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// `variant,topology,nodes,q,iter,runs,mean,median,sem[,lambda]`.
pub fn write_aggregate<W: Write>(result: &StudyResult, mut out: W) -> io::Result<()> {
    let lambda = result.lambda.as_ref();
    write!(out, "variant,topology,nodes,q,iter,runs,mean,median,sem")?;
    writeln!(out, "{}", if lambda.is_some() { ",lambda" } else { "" })?;
    for v in &result.variants {
        for row in &v.aggregate {
            write!(
                out,
                "{},{},{},{},{},{},{:e},{:e},{:e}",
                v.variant.label(),
                v.variant.topology,
                v.variant.nodes(),
                v.variant.q,
                row.iter,
                row.runs,
                row.mean,
                row.median,
                row.sem
            )?;
            match lambda {
                Some(l) => writeln!(out, ",{}", l[row.iter])?,
                None => writeln!(out)?,
            }
        }
    }
    Ok(())
}

/// gnuplot data: one indexed block per variant with columns
/// `iter mean median mean-sem mean+sem [lambda]`.
fn write_dat<W: Write>(result: &StudyResult, mut out: W) -> io::Result<()> {
    for (b, v) in result.variants.iter().enumerate() {
        if b > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# {}", v.variant.label())?;
        for row in &v.aggregate {
            write!(out, "{} {:e} {:e} {:e} {:e}", row.iter, row.mean, row.median, row.mean - row.sem, row.mean + row.sem)?;
            match &result.lambda {
                Some(l) => writeln!(out, " {}", l[row.iter])?,
                None => writeln!(out)?,
            }
        }
    }
    Ok(())
}

fn plot_script(cfg: &ExperimentConfig, result: &StudyResult) -> String {
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{}.png'\n", cfg.name));
    s.push_str("set logscale y\nset format y '10^{%L}'\nset xlabel 'iteration'\nset ylabel 'epsilon'\n");
    let y_col = if cfg.tracking.is_some() { 3 } else { 2 };
    let mut parts = Vec::new();
    if result.lambda.is_some() {
        s.push_str("set y2range [0:1.05]\nset y2tics\nset y2label 'lambda'\n");
    }
    for (b, v) in result.variants.iter().enumerate() {
        if result.lambda.is_none() {
            parts.push(format!("'epsilon.dat' index {b} using 1:4:5 with filledcurves fs transparent solid 0.2 notitle"));
        }
        parts.push(format!("'epsilon.dat' index {b} using 1:{y_col} with lines lw 2 title '{}'", v.variant.label()));
    }
    if result.lambda.is_some() {
        parts.push("'epsilon.dat' index 0 using 1:6 axes x1y2 with lines title 'lambda'".into());
    }
    s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
    s
}

/// Writes `run_<idx>.csv` (one directory per variant when sweeping),
/// `aggregate.csv`, `epsilon.dat`, `plot.gp` and `study.meta`.
pub fn write_outputs(cfg: &ExperimentConfig, result: &StudyResult, dir: &Path) -> Result<(), StudyError> {
    let nested = result.variants.len() > 1;
    for v in &result.variants {
        let vdir = if nested { dir.join(v.variant.label()) } else { dir.to_path_buf() };
        for (run, record) in &v.runs {
            let mut buf = Vec::new();
            record.write_csv(*run, &mut buf).expect("writing to memory");
            write_file(&vdir.join(format!("run_{run}.csv")), &buf)?;
        }
    }
    let mut buf = Vec::new();
    write_aggregate(result, &mut buf).expect("writing to memory");
    write_file(&dir.join("aggregate.csv"), &buf)?;
    let mut buf = Vec::new();
    write_dat(result, &mut buf).expect("writing to memory");
    write_file(&dir.join("epsilon.dat"), &buf)?;
    write_file(&dir.join("plot.gp"), plot_script(cfg, result).as_bytes())?;

    let mut meta = cfg.to_toml();
    meta.push('\n');
    for v in &result.variants {
        meta.push_str(&format!("# {}: {} of {} runs completed\n", v.variant.label(), v.runs.len(), cfg.runs));
        for (run, msg) in &v.failed {
            meta.push_str(&format!("#   run {run} failed: {msg}\n"));
        }
    }
    write_file(&dir.join("study.meta"), meta.as_bytes())
}
