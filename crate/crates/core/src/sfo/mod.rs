//! Signal fusion optimization problems.
//!
//! A problem is `min φ(Xᵀy, XᵀB)` subject to constraints `η_j(Xᵀy, XᵀB)`,
//! where `X` only ever appears inside inner products with the signals or
//! with the deterministic terms. Four instances are shipped:
//!
//! | kind | objective | constraints |
//! |------|-----------|-------------|
//! | MMSE | `E‖s − Xᵀy‖²` | none |
//! | QCQP | `½E‖Xᵀy‖² − tr(XᵀA)` | `tr(XᵀX) ≤ α²`, `Xᵀc = d` |
//! | TRO  | `−E‖Xᵀv‖² / E‖Xᵀy‖²` | `XᵀX = I_Q` |
//! | SCQP | `½E‖Xᵀy‖² + tr(XᵀA)` | `tr(XᵀX) = 1` |
//!
//! Every solver works on a [`CompressedInstance`]: second-order statistics
//! of whatever signals are available plus the deterministic terms and the
//! quadratic metric `Γ̃`. The centralized problem is the special case with
//! full data and `Γ̃ = I`, so the same solver runs at the updating node and
//! at a fusion centre.

mod mmse;
mod qcqp;
mod scqp;
mod secular;
mod tro;

use thiserror::Error;

use crate::linalg::{block_diag, procrustes_rotation, vstack};
use crate::network::NetworkGraph;
use crate::signals::{estimate_covariance, estimate_cross, SampleBatch};
use crate::{Mat, Vector};

use mmse::solve_mmse;
use qcqp::solve_qcqp;
use scqp::solve_scqp;
use tro::solve_tro;

pub use mmse::MMSE_CONDITION_LIMIT;
pub use tro::{TRO_MAX_ITERATIONS, TRO_TOLERANCE};

/// Feasibility tolerance solvers guarantee on success.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfoError {
    #[error("infeasible: α² = {alpha_sq} < ‖d‖²/‖c‖² = {bound}")]
    Infeasible { alpha_sq: f64, bound: f64 },
    #[error("equality vector c is zero")]
    ZeroEquality,
    #[error("covariance matrix is singular after regularization")]
    SingularCovariance,
    #[error("quadratic metric is not positive definite")]
    NonPdMetric,
    #[error("no convergence within {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("secular equation has no root in the expanded bracket")]
    NoRoot,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("instance is missing {0}")]
    Missing(&'static str),
}

/// Problem family and its scalar parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// `min E‖s − Xᵀy‖²`.
    Mmse,
    /// `min ½E‖Xᵀy‖² − tr(XᵀA)` s.t. `tr(XᵀX) ≤ α²`, `Xᵀc = d`.
    Qcqp { alpha: f64, d: Vector },
    /// `max E‖Xᵀv‖² / E‖Xᵀy‖²` s.t. `XᵀX = I_Q`, minimized as its negative.
    Tro,
    /// `min ½E‖Xᵀy‖² + tr(XᵀA)` s.t. `tr(XᵀX) = 1`.
    Scqp,
}

/// Ambiguity of the solution set that callers may need to resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Solutions are unique.
    None,
    /// Each column is determined up to sign.
    ColumnSigns,
    /// Determined up to right-multiplication by a `Q × Q` orthogonal matrix.
    Orthogonal,
}

impl Symmetry {
    /// Element of the symmetry orbit of `x` closest to `target` in
    /// Frobenius norm.
    pub fn align(self, x: &Mat, target: &Mat) -> Mat {
        match self {
            Symmetry::None => x.clone(),
            Symmetry::ColumnSigns => {
                let mut out = x.clone();
                for j in 0..x.ncols() {
                    if x.column(j).dot(&target.column(j)) < 0.0 {
                        out.column_mut(j).neg_mut();
                    }
                }
                out
            }
            Symmetry::Orthogonal => x * procrustes_rotation(x, target),
        }
    }
}

/// A signal fusion optimization problem on a partitioned channel set.
#[derive(Debug, Clone, PartialEq)]
pub struct SfoProblem {
    kind: ProblemKind,
    q: usize,
    channels: Vec<usize>,
    /// `A` (`M × Q`) for QCQP and SCQP.
    linear: Option<Mat>,
    /// `c` (`M`) for QCQP.
    equality: Option<Vector>,
    /// `Γ_k` blocks when the problem contains `XᵀΓX` terms.
    gamma: Option<Vec<Mat>>,
}

/// Whether the problem declares a constraint bound check result.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBound {
    /// Single-node network: the bound does not apply.
    NotApplicable,
    Checked { constraints: usize, bound: f64, ok: bool },
}

/// Compressed (or centralized) data seen by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedInstance {
    pub q: usize,
    /// `R_ỹỹ`.
    pub r_yy: Mat,
    /// `R_ṽṽ` (TRO).
    pub r_vv: Option<Mat>,
    /// `E[ỹ sᵀ]`, `M̃ × Q` (MMSE).
    pub r_ys: Option<Mat>,
    /// `E‖s‖²` (MMSE).
    pub target_power: Option<f64>,
    /// `Ã`, `M̃ × Q`.
    pub linear: Option<Mat>,
    /// `c̃`, `M̃`.
    pub equality: Option<Vector>,
    /// `Γ̃ = CᵀΓC`; identity for the centralized problem.
    pub metric: Mat,
    /// Point used to break ties among equally good solutions.
    pub anchor: Option<Mat>,
}

impl CompressedInstance {
    pub fn dimension(&self) -> usize {
        self.r_yy.nrows()
    }
}

/// Solver result.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Mat,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Solver-specific trace (the ratio sequence for TRO).
    pub history: Vec<f64>,
}

impl SolveOutcome {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m: f64, r| m.max(*r))
    }
}

/// Sample statistics of the signals a problem consumes, used to build an
/// instance without going through a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub r_yy: Mat,
    pub r_vv: Option<Mat>,
    pub r_ys: Option<Mat>,
    pub target_power: Option<f64>,
}

fn trace_of_product(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

impl SfoProblem {
    fn base(kind: ProblemKind, q: usize, channels: Vec<usize>) -> Result<Self, SfoError> {
        if q == 0 {
            return Err(SfoError::Shape("Q must be positive".into()));
        }
        if channels.is_empty() || channels.contains(&0) {
            return Err(SfoError::Shape("every node needs at least one channel".into()));
        }
        Ok(Self { kind, q, channels, linear: None, equality: None, gamma: None })
    }

    fn identity_gamma(channels: &[usize]) -> Vec<Mat> {
        channels.iter().map(|&m| Mat::identity(m, m)).collect()
    }

    fn check_rows(&self, rows: usize, what: &str) -> Result<(), SfoError> {
        if rows != self.total_channels() {
            return Err(SfoError::Shape(format!("{what} has {rows} rows, expected {}", self.total_channels())));
        }
        Ok(())
    }

    /// MMSE estimation of a `Q`-channel target.
    pub fn mmse(channels: Vec<usize>, q: usize) -> Result<Self, SfoError> {
        Self::base(ProblemKind::Mmse, q, channels)
    }

    pub fn qcqp(channels: Vec<usize>, a: Mat, c: Vector, d: Vector, alpha: f64) -> Result<Self, SfoError> {
        let q = a.ncols();
        let mut p = Self::base(ProblemKind::Qcqp { alpha, d: d.clone() }, q, channels)?;
        p.check_rows(a.nrows(), "A")?;
        p.check_rows(c.len(), "c")?;
        if d.len() != q {
            return Err(SfoError::Shape(format!("d has {} entries, Q = {q}", d.len())));
        }
        let c_sq = c.norm_squared();
        if c_sq == 0.0 {
            return Err(SfoError::ZeroEquality);
        }
        let bound = d.norm_squared() / c_sq;
        if alpha * alpha < bound {
            return Err(SfoError::Infeasible { alpha_sq: alpha * alpha, bound });
        }
        p.gamma = Some(Self::identity_gamma(&p.channels));
        p.linear = Some(a);
        p.equality = Some(c);
        Ok(p)
    }

    pub fn tro(channels: Vec<usize>, q: usize) -> Result<Self, SfoError> {
        let mut p = Self::base(ProblemKind::Tro, q, channels)?;
        if q > p.total_channels() {
            return Err(SfoError::Shape(format!("Q = {q} exceeds M = {}", p.total_channels())));
        }
        p.gamma = Some(Self::identity_gamma(&p.channels));
        Ok(p)
    }

    pub fn scqp(channels: Vec<usize>, a: Mat) -> Result<Self, SfoError> {
        let q = a.ncols();
        let mut p = Self::base(ProblemKind::Scqp, q, channels)?;
        p.check_rows(a.nrows(), "A")?;
        p.gamma = Some(Self::identity_gamma(&p.channels));
        p.linear = Some(a);
        Ok(p)
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn total_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn linear(&self) -> Option<&Mat> {
        self.linear.as_ref()
    }

    pub fn equality(&self) -> Option<&Vector> {
        self.equality.as_ref()
    }

    pub fn gamma_blocks(&self) -> Option<&[Mat]> {
        self.gamma.as_deref()
    }

    /// Whether the problem consumes the second signal `v`.
    pub fn uses_v(&self) -> bool {
        matches!(self.kind, ProblemKind::Tro)
    }

    /// Whether the problem consumes the target signal `s`.
    pub fn uses_target(&self) -> bool {
        matches!(self.kind, ProblemKind::Mmse)
    }

    pub fn symmetry(&self) -> Symmetry {
        match self.kind {
            ProblemKind::Tro => Symmetry::Orthogonal,
            _ => Symmetry::None,
        }
    }

    /// Number of scalar constraint functions `J`.
    pub fn constraint_count(&self) -> usize {
        match &self.kind {
            ProblemKind::Mmse => 0,
            ProblemKind::Qcqp { .. } => 1 + self.q,
            ProblemKind::Tro => self.q * self.q,
            ProblemKind::Scqp => 1,
        }
    }

    /// Deterministic terms `B` in a fixed order (`A` first, then `c`), each
    /// `M × L`.
    pub fn deterministic_terms(&self) -> Vec<Mat> {
        let mut out = Vec::new();
        if let Some(a) = &self.linear {
            out.push(a.clone());
        }
        if let Some(c) = &self.equality {
            out.push(Mat::from_column_slice(c.len(), 1, c.as_slice()));
        }
        out
    }

    /// Row blocks `B_k` of every deterministic term for node `k`.
    pub fn deterministic_blocks(&self, node: usize) -> Vec<Mat> {
        let offset: usize = self.channels[..node].iter().sum();
        let rows = self.channels[node];
        self.deterministic_terms().iter().map(|b| b.rows(offset, rows).into_owned()).collect()
    }

    /// Builds an instance from the data available at a node: stacked
    /// signals, stacked deterministic terms (same order as
    /// [`Self::deterministic_terms`]) and the metric `Γ̃`.
    pub fn instance_from_data(
        &self,
        y: &Mat,
        v: Option<&Mat>,
        target: Option<&Mat>,
        terms: &[Mat],
        metric: Mat,
        anchor: Option<Mat>,
    ) -> Result<CompressedInstance, SfoError> {
        let r_vv = match (self.uses_v(), v) {
            (true, Some(v)) => Some(estimate_covariance(v)),
            (true, None) => return Err(SfoError::Missing("v samples")),
            (false, _) => None,
        };
        let (r_ys, target_power) = match (self.uses_target(), target) {
            (true, Some(s)) => {
                let r = estimate_cross(y, s).map_err(|e| SfoError::Shape(e.to_string()))?;
                (Some(r), Some(s.norm_squared() / s.ncols() as f64))
            }
            (true, None) => return Err(SfoError::Missing("target samples")),
            (false, _) => (None, None),
        };
        let stats = Statistics { r_yy: estimate_covariance(y), r_vv, r_ys, target_power };
        self.instance_from_statistics(stats, terms, metric, anchor)
    }

    /// Builds an instance from precomputed statistics.
    pub fn instance_from_statistics(
        &self,
        stats: Statistics,
        terms: &[Mat],
        metric: Mat,
        anchor: Option<Mat>,
    ) -> Result<CompressedInstance, SfoError> {
        let dim = stats.r_yy.nrows();
        let mut terms = terms.iter();
        let linear = self.linear.as_ref().and_then(|_| terms.next().cloned());
        let equality = self
            .equality
            .as_ref()
            .and_then(|_| terms.next().map(|c| Vector::from_column_slice(c.column(0).as_slice())));
        if self.linear.is_some() && linear.is_none() || self.equality.is_some() && equality.is_none() {
            return Err(SfoError::Missing("deterministic terms"));
        }
        if metric.nrows() != dim || linear.as_ref().is_some_and(|a| a.nrows() != dim) {
            return Err(SfoError::Shape("instance blocks disagree on dimension".into()));
        }
        Ok(CompressedInstance {
            q: self.q,
            r_yy: stats.r_yy,
            r_vv: stats.r_vv,
            r_ys: stats.r_ys,
            target_power: stats.target_power,
            linear,
            equality,
            metric,
            anchor,
        })
    }

    /// The full-data problem on a batch (`C = I`).
    pub fn central_instance(&self, batch: &SampleBatch) -> Result<CompressedInstance, SfoError> {
        let y = batch.stacked_y();
        self.check_rows(y.nrows(), "Y")?;
        let v = batch.stacked_v();
        let target = self.uses_target().then(|| batch.s.rows(0, self.q).into_owned());
        if self.uses_target() && batch.s.nrows() < self.q {
            return Err(SfoError::Missing("target rows"));
        }
        self.instance_from_data(&y, v.as_ref(), target.as_ref(), &self.deterministic_terms(), self.global_metric(), None)
    }

    /// Centralized instance from analytic statistics.
    pub fn central_instance_from_statistics(&self, stats: Statistics) -> Result<CompressedInstance, SfoError> {
        self.instance_from_statistics(stats, &self.deterministic_terms(), self.global_metric(), None)
    }

    /// `Γ = BlkDiag(Γ_1, …, Γ_K)`, or the identity when the problem has no
    /// quadratic term.
    pub fn global_metric(&self) -> Mat {
        match &self.gamma {
            Some(blocks) => block_diag(blocks),
            None => {
                let m = self.total_channels();
                Mat::identity(m, m)
            }
        }
    }

    /// Runs the problem's solver on an instance.
    pub fn solve(&self, instance: &CompressedInstance) -> Result<SolveOutcome, SfoError> {
        let mut out = match &self.kind {
            ProblemKind::Mmse => solve_mmse(instance)?,
            ProblemKind::Qcqp { alpha, d } => solve_qcqp(instance, *alpha, d)?,
            ProblemKind::Tro => solve_tro(instance)?,
            ProblemKind::Scqp => solve_scqp(instance)?,
        };
        out.objective = self.instance_objective(instance, &out.x);
        out.residuals = self.instance_residuals(instance, &out.x);
        Ok(out)
    }

    /// Objective of `X̃` on an instance.
    pub fn instance_objective(&self, inst: &CompressedInstance, x: &Mat) -> f64 {
        let quad = || trace_of_product(x, &(&inst.r_yy * x));
        match &self.kind {
            ProblemKind::Mmse => {
                let r = inst.r_ys.as_ref().expect("MMSE instance has r_ys");
                inst.target_power.unwrap_or(0.0) - 2.0 * trace_of_product(x, r) + quad()
            }
            ProblemKind::Qcqp { .. } => {
                0.5 * quad() - trace_of_product(x, inst.linear.as_ref().expect("QCQP has A"))
            }
            ProblemKind::Tro => {
                let rvv = inst.r_vv.as_ref().expect("TRO instance has r_vv");
                -trace_of_product(x, &(rvv * x)) / quad()
            }
            ProblemKind::Scqp => {
                0.5 * quad() + trace_of_product(x, inst.linear.as_ref().expect("SCQP has A"))
            }
        }
    }

    /// Constraint violations of `X̃` on an instance: `max(0, h)` for
    /// inequalities and `|h|` for equalities, one entry per scalar
    /// constraint.
    pub fn instance_residuals(&self, inst: &CompressedInstance, x: &Mat) -> Vec<f64> {
        let gram = x.transpose() * &inst.metric * x;
        let lin = inst.equality.as_ref().map(|c| x.transpose() * c);
        self.residuals_from(&gram, lin.as_ref())
    }

    fn residuals_from(&self, gram: &Mat, xc: Option<&Vector>) -> Vec<f64> {
        match &self.kind {
            ProblemKind::Mmse => Vec::new(),
            ProblemKind::Qcqp { alpha, d } => {
                let mut out = vec![(gram.trace() - alpha * alpha).max(0.0)];
                let xc = xc.expect("QCQP has c");
                out.extend((xc - d).iter().map(|e| e.abs()));
                out
            }
            ProblemKind::Tro => {
                let dev = gram - Mat::identity(self.q, self.q);
                dev.iter().map(|e| e.abs()).collect()
            }
            ProblemKind::Scqp => vec![(gram.trace() - 1.0).abs()],
        }
    }

    fn check_x(&self, x: &Mat) -> Result<(), SfoError> {
        if x.shape() != (self.total_channels(), self.q) {
            return Err(SfoError::Shape(format!(
                "X is {}×{}, expected {}×{}",
                x.nrows(),
                x.ncols(),
                self.total_channels(),
                self.q
            )));
        }
        Ok(())
    }

    /// Objective `f(X)` on a batch, using the sample-average estimators.
    pub fn evaluate_objective(&self, x: &Mat, batch: &SampleBatch) -> Result<f64, SfoError> {
        self.check_x(x)?;
        let z = self.filter_output(x, &batch.y)?;
        let n = batch.len.max(1) as f64;
        let power = |z: &Mat| z.norm_squared() / n;
        Ok(match &self.kind {
            ProblemKind::Mmse => {
                if batch.s.nrows() < self.q {
                    return Err(SfoError::Missing("target rows"));
                }
                (batch.s.rows(0, self.q) - z).norm_squared() / n
            }
            ProblemKind::Qcqp { .. } => 0.5 * power(&z) - trace_of_product(x, self.linear.as_ref().expect("A")),
            ProblemKind::Tro => {
                let v = batch.v.as_ref().ok_or(SfoError::Missing("v samples"))?;
                -power(&self.filter_output(x, v)?) / power(&z)
            }
            ProblemKind::Scqp => 0.5 * power(&z) + trace_of_product(x, self.linear.as_ref().expect("A")),
        })
    }

    /// `XᵀY = Σ_k X_kᵀ Y_k`, accumulated per node block.
    fn filter_output(&self, x: &Mat, blocks: &[Mat]) -> Result<Mat, SfoError> {
        self.check_rows(blocks.iter().map(|b| b.nrows()).sum(), "Y")?;
        let cols = blocks.first().map_or(0, |b| b.ncols());
        let mut z = Mat::zeros(self.q, cols);
        let mut r = 0;
        for b in blocks {
            let xk_t = x.rows(r, b.nrows()).transpose();
            z.gemm(1.0, &xk_t, b, 1.0);
            r += b.nrows();
        }
        Ok(z)
    }

    /// Constraint violations `h_j(X)`; see [`Self::instance_residuals`].
    /// None of the shipped constraints involve signal statistics, so the
    /// batch is only used for shape checks.
    pub fn constraint_residuals(&self, x: &Mat, batch: &SampleBatch) -> Result<Vec<f64>, SfoError> {
        self.check_x(x)?;
        self.check_rows(batch.y.iter().map(|b| b.nrows()).sum(), "Y")?;
        Ok(self.residuals(x))
    }

    /// Constraint violations of a network-wide `X`.
    pub fn residuals(&self, x: &Mat) -> Vec<f64> {
        let gram = match &self.gamma {
            Some(blocks) => {
                let mut g = Mat::zeros(self.q, self.q);
                let mut r = 0;
                for b in blocks {
                    let xk = x.rows(r, b.nrows());
                    g += xk.transpose() * b * xk;
                    r += b.nrows();
                }
                g
            }
            None => x.transpose() * x,
        };
        let xc = self.equality.as_ref().map(|c| x.transpose() * c);
        self.residuals_from(&gram, xc.as_ref())
    }

    /// Compares `J` with the bound
    /// `min(Q²/(K−1)·Σ|N_k|, (1 + min|N_k|)·Q²)`; logs a warning when it is
    /// exceeded.
    pub fn check_constraint_bound(&self, graph: &NetworkGraph) -> ConstraintBound {
        let k = graph.node_count();
        if k < 2 {
            return ConstraintBound::NotApplicable;
        }
        let q2 = (self.q * self.q) as f64;
        let degree_sum: usize = (0..k).map(|n| graph.degree(n)).sum();
        let min_degree = (0..k).map(|n| graph.degree(n)).min().unwrap_or(0);
        let bound = (q2 / (k - 1) as f64 * degree_sum as f64).min((1 + min_degree) as f64 * q2);
        let constraints = self.constraint_count();
        let ok = constraints as f64 <= bound;
        if !ok {
            log::warn!("problem has J = {constraints} constraints, above the convergence bound {bound}");
        }
        ConstraintBound::Checked { constraints, bound, ok }
    }
}

/// Stacks per-node blocks in node order.
pub fn stack_blocks(blocks: &[Mat]) -> Mat {
    vstack(&blocks.iter().collect::<Vec<_>>())
}
