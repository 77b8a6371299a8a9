//! The DASF iteration.
//!
//! Each iteration `i`:
//!
//! 1. picks the updating node `q = i mod K`;
//! 2. prunes the graph into a tree rooted at `q` (a star for the fully
//!    connected scheme);
//! 3. lets every other node compress its batch with its current filter
//!    block and sum-and-forward towards `q`;
//! 4. solves the compressed problem at `q`, picking the solution closest to
//!    the anchor `[X_q; I_Q; …]`;
//! 5. sends one `Q × Q` matrix `G_n` into every branch, after which every
//!    node `k ∈ B_nq` updates `X_k ← X_k G_n`.

mod fusion;
pub mod transport;

use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{split_rows, vstack};
use crate::network::{prune_to_tree, star_at, NetworkError, NetworkGraph, PrunedTree};
use crate::sfo::{SfoError, SfoProblem, SolveOutcome};
use crate::signals::SampleBatch;
use crate::Mat;

pub use fusion::{
    apply_local_solution, assemble_local_instance, build_transition_matrix, compress, compress_gamma,
    fuse_and_forward, FusionPlan, LocalView, Payload, Segment, SegmentKind, TransitionMatrix,
};
pub use transport::{AuditViolation, IterationTransport, PayloadKind, Stream, Transmission, TransportLog};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("solver failed at iteration {iteration} (node {node}): {source}")]
    Solver {
        iteration: usize,
        node: usize,
        #[source]
        source: SfoError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("the fully connected scheme requires a complete graph")]
    NotComplete,
    #[error("batch source failed at iteration {iteration}: {message}")]
    Source { iteration: usize, message: String },
}

/// Network-wide filter `X = [X_1; …; X_K]` at iteration `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    blocks: Vec<Mat>,
    iteration: usize,
}

impl FilterState {
    pub fn from_blocks(blocks: Vec<Mat>, iteration: usize) -> Self {
        assert!(!blocks.is_empty(), "filter state needs at least one node");
        let q = blocks[0].ncols();
        assert!(blocks.iter().all(|b| b.ncols() == q), "all blocks need Q columns");
        Self { blocks, iteration }
    }

    pub fn from_stacked(x: &Mat, channels: &[usize]) -> Self {
        Self::from_blocks(split_rows(x, channels), 0)
    }

    /// i.i.d. standard normal entries.
    pub fn random<R: Rng>(channels: &[usize], q: usize, rng: &mut R) -> Self {
        let blocks = channels
            .iter()
            .map(|&m| Mat::from_fn(m, q, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::from_blocks(blocks, 0)
    }

    pub fn block(&self, k: usize) -> &Mat {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn q(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn stacked(&self) -> Mat {
        vstack(&self.blocks.iter().collect::<Vec<_>>())
    }
}

/// How the updating node gathers data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScheme {
    /// Every node reaches `q` directly; requires a complete graph.
    FullyConnected,
    /// Prune to a tree rooted at `q` and sum-and-forward.
    TopologyIndependent,
}

/// `q = i mod K` (0-based).
pub fn select_updating_node(i: usize, k: usize) -> usize {
    assert!(k > 0, "network has no nodes");
    i % k
}

/// Everything produced by one iteration.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: FilterState,
    pub updating_node: usize,
    pub tree: PrunedTree,
    pub plan: FusionPlan,
    pub local: LocalView,
    /// Local solution after tie-breaking.
    pub x_tilde: Mat,
    pub outcome: SolveOutcome,
    pub g_blocks: Vec<(usize, Mat)>,
    pub transport: IterationTransport,
}

fn tree_for(
    graph: &NetworkGraph,
    q: usize,
    scheme: UpdateScheme,
    tie_seed: Option<u64>,
) -> Result<PrunedTree, EngineError> {
    match scheme {
        UpdateScheme::FullyConnected => {
            if !graph.is_complete() {
                return Err(EngineError::NotComplete);
            }
            Ok(star_at(graph.node_count(), q))
        }
        UpdateScheme::TopologyIndependent => Ok(prune_to_tree(graph, q, tie_seed)?),
    }
}

/// Runs one DASF iteration on `batch`. On failure the caller's state is
/// untouched.
pub fn dasf_step(
    problem: &SfoProblem,
    state: &FilterState,
    graph: &NetworkGraph,
    batch: &SampleBatch,
    scheme: UpdateScheme,
    tie_seed: Option<u64>,
) -> Result<StepOutput, EngineError> {
    let k = graph.node_count();
    if state.channels() != graph.channels() || problem.channels() != graph.channels() {
        return Err(EngineError::Shape("filter, problem and graph disagree on channel counts".into()));
    }
    if batch.node_count() != k {
        return Err(EngineError::Shape(format!("batch has {} nodes, graph {k}", batch.node_count())));
    }
    let i = state.iteration();
    let q = select_updating_node(i, k);
    let tree = tree_for(graph, q, scheme, tie_seed)?;
    let plan = FusionPlan::new(&tree, graph.channels(), state.q());
    let mut entries = Vec::new();
    let arrivals = fuse_and_forward(problem, &tree, &plan, state, batch, &mut entries)?;
    let local = assemble_local_instance(problem, &plan, state, batch, &arrivals)?;
    let outcome =
        problem.solve(&local.instance).map_err(|source| EngineError::Solver { iteration: i, node: q, source })?;
    let x_tilde = problem.symmetry().align(&outcome.x, &local.anchor);
    let (next, g_blocks) = apply_local_solution(state, &tree, &plan, &x_tilde);
    let qd = state.q();
    for seg in &plan.segments[1..] {
        let n = seg.branch.expect("branch segment");
        let (kind, channels) = match seg.kind {
            SegmentKind::Raw(_) => (PayloadKind::FilterBlock, seg.width),
            _ => (PayloadKind::GMatrix, qd),
        };
        entries.push(Transmission { sender: q, receiver: n, kind, stream: Stream::Control, channels, samples: qd });
    }
    let transport = IterationTransport {
        iteration: i,
        updating_node: q,
        fallback: plan.fallback_nodes(),
        q: qd,
        channels: graph.channels().to_vec(),
        neighbors: tree.branches().to_vec(),
        entries,
    };
    Ok(StepOutput { state: next, updating_node: q, tree, plan, local, x_tilde, outcome, g_blocks, transport })
}

/// Supplies the batch used at each iteration.
pub trait BatchSource {
    fn batch(&mut self, iteration: usize) -> Result<Arc<SampleBatch>, EngineError>;
}

/// Batch mode: the same batch every iteration.
#[derive(Debug, Clone)]
pub struct FixedBatch(pub Arc<SampleBatch>);

impl BatchSource for FixedBatch {
    fn batch(&mut self, _iteration: usize) -> Result<Arc<SampleBatch>, EngineError> {
        Ok(Arc::clone(&self.0))
    }
}

/// Adaptive mode: a fresh batch per iteration from a generator closure.
pub struct StreamingBatches<F>(pub F);

impl<F> BatchSource for StreamingBatches<F>
where
    F: FnMut(usize) -> Result<SampleBatch, EngineError>,
{
    fn batch(&mut self, iteration: usize) -> Result<Arc<SampleBatch>, EngineError> {
        (self.0)(iteration).map(Arc::new)
    }
}

/// Ground truth for the error metric `ε(X) = ‖X − X*‖²/‖X*‖²`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// No error metric.
    None,
    /// A supplied optimum, aligned once to the final iterate.
    Fixed(Mat),
    /// Solve the centralized problem on the first batch; aligned once to
    /// the final iterate.
    Central,
    /// Solve the centralized problem on every iteration's batch and align to
    /// that iteration's filter (tracking).
    PerBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub scheme: UpdateScheme,
    /// Seed for randomized tie-breaking during pruning; `None` keeps the
    /// lowest-index rule.
    pub tie_seed: Option<u64>,
    pub reference: Reference,
    /// Keep the full transport ledger in the record.
    pub keep_transport: bool,
}

impl RunConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            scheme: UpdateScheme::TopologyIndependent,
            tie_seed: None,
            reference: Reference::Central,
            keep_transport: false,
        }
    }
}

/// Metrics of `X^i`. Row 0 is the initial filter; row `i > 0` is the filter
/// produced by the step at iteration `i − 1`, whose updating node and
/// traffic are reported alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub q: Option<usize>,
    pub objective: f64,
    pub epsilon: Option<f64>,
    pub max_residual: f64,
    pub tx_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<IterationRecord>,
    pub final_state: FilterState,
    /// The reference each row was measured against (the aligned one for
    /// fixed references).
    pub reference: Option<Mat>,
    pub transport: TransportLog,
    /// Per-step solver traces (ratio history for TRO).
    pub solver_histories: Vec<Vec<f64>>,
}

/// `‖X − X*‖²/‖X*‖²`.
pub fn normalized_error(x: &Mat, reference: &Mat) -> f64 {
    (x - reference).norm_squared() / reference.norm_squared()
}

impl ConvergenceRecord {
    pub fn epsilons(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.epsilon.unwrap_or(f64::NAN)).collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    /// CSV with header `run,iter,q,objective,epsilon,max_residual,tx_samples`.
    /// Node indices are written 1-based; the initial row has an empty `q`.
    pub fn write_csv<W: Write>(&self, run: usize, mut out: W) -> io::Result<()> {
        writeln!(out, "run,iter,q,objective,epsilon,max_residual,tx_samples")?;
        for r in &self.rows {
            let q = r.q.map(|q| (q + 1).to_string()).unwrap_or_default();
            let eps = r.epsilon.map(|e| format!("{e:e}")).unwrap_or_default();
            writeln!(
                out,
                "{run},{},{q},{:e},{eps},{:e},{}",
                r.iter, r.objective, r.max_residual, r.tx_samples
            )?;
        }
        Ok(())
    }
}

fn central_solution(problem: &SfoProblem, batch: &SampleBatch, iteration: usize) -> Result<Mat, EngineError> {
    let instance = problem
        .central_instance(batch)
        .map_err(|source| EngineError::Solver { iteration, node: usize::MAX, source })?;
    let out = problem.solve(&instance).map_err(|source| EngineError::Solver { iteration, node: usize::MAX, source })?;
    Ok(out.x)
}

fn iteration_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs `config.iterations` steps from `initial`. Row `i` of the record is
/// measured on the batch of iteration `i`, which is also the batch the step
/// at iteration `i` consumes.
pub fn dasf_run(
    problem: &SfoProblem,
    graph: &NetworkGraph,
    initial: FilterState,
    source: &mut dyn BatchSource,
    config: &RunConfig,
) -> Result<ConvergenceRecord, EngineError> {
    let mut state = initial;
    let mut rows = Vec::with_capacity(config.iterations + 1);
    let mut transport = TransportLog::default();
    let mut histories = Vec::new();
    let mut fixed_reference = match &config.reference {
        Reference::Fixed(x) => Some(x.clone()),
        _ => None,
    };
    let mut last_step: Option<(usize, u64)> = None;
    let mut iterates = Vec::new();
    for i in 0..=config.iterations {
        let batch = source.batch(i)?;
        let x = state.stacked();
        if fixed_reference.is_some() || config.reference == Reference::Central {
            iterates.push(x.clone());
        }
        let objective =
            problem.evaluate_objective(&x, &batch).map_err(|e| EngineError::Shape(e.to_string()))?;
        let max_residual = problem.residuals(&x).into_iter().fold(0.0, f64::max);
        if i == 0 && config.reference == Reference::Central {
            fixed_reference = Some(central_solution(problem, &batch, i)?);
        }
        let epsilon = if config.reference == Reference::PerBatch {
            let x_star = problem.symmetry().align(&central_solution(problem, &batch, i)?, &x);
            Some(normalized_error(&x, &x_star))
        } else {
            None
        };
        rows.push(IterationRecord {
            iter: i,
            q: last_step.map(|(q, _)| q),
            objective,
            epsilon,
            max_residual,
            tx_samples: last_step.map_or(0, |(_, tx)| tx),
        });
        if i == config.iterations {
            break;
        }
        let tie = config.tie_seed.map(|s| iteration_seed(s, i));
        let step = dasf_step(problem, &state, graph, &batch, config.scheme, tie)?;
        last_step = Some((step.updating_node, step.transport.signal_samples()));
        if config.keep_transport {
            transport.push(step.transport);
        }
        if !step.outcome.history.is_empty() {
            histories.push(step.outcome.history);
        }
        state = step.state;
    }
    let reference = fixed_reference.map(|x_star| problem.symmetry().align(&x_star, &state.stacked()));
    if let Some(x_star) = &reference {
        for (row, x) in rows.iter_mut().zip(&iterates) {
            row.epsilon = Some(normalized_error(x, x_star));
        }
    }
    Ok(ConvergenceRecord { rows, final_state: state, reference, transport, solver_histories: histories })
}
