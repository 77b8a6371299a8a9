//! Mixture-model sensor signals and sample-average statistics.
//!
//! The stationary model is
//!
//! ```text
//! y(t) = Π_s s(t) + n(t)
//! v(t) = Π_r r(t) + y(t)
//! ```
//!
//! with i.i.d. Gaussian sources of variance `source_var` and noise of
//! variance `noise_var`. The drifting model used for tracking replaces `Π_s`
//! with a steering vector `p(t) = p₀ + λ(t)·Δ`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::{Mat, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("variance must be strictly positive, got {name} = {value}")]
    Variance { name: &'static str, value: f64 },
    #[error("drift requires a single source, mixing matrix has {0} columns")]
    DriftSources(usize),
    #[error("model has a drift schedule; use the adaptive sampler")]
    DriftPresent,
    #[error("model has no drift schedule")]
    NoDrift,
    #[error("channel partition sums to {partition}, model has {model} channels")]
    Partition { partition: usize, model: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("λ schedule needs at least one knot with non-decreasing times")]
    Schedule,
}

/// Piecewise-linear schedule `t ↦ λ(t) ∈ [0, 1]` over sample time.
///
/// Knots are `(time, value)` pairs with non-decreasing times. Between knots
/// the value is interpolated linearly; two knots at the same time produce a
/// jump (the later knot wins from that time on). Outside the knot range the
/// nearest end value holds.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    knots: Vec<(f64, f64)>,
}

impl LambdaSchedule {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, SignalError> {
        if knots.is_empty() || knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(SignalError::Schedule);
        }
        Ok(Self { knots })
    }

    pub fn constant(value: f64) -> Self {
        Self { knots: vec![(0.0, value)] }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        // Index of the last knot with time ≤ t.
        let idx = k.partition_point(|&(kt, _)| kt <= t);
        let v = if idx == 0 {
            k[0].1
        } else if idx == k.len() {
            k[k.len() - 1].1
        } else {
            let (t0, v0) = k[idx - 1];
            let (t1, v1) = k[idx];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        };
        v.clamp(0.0, 1.0)
    }
}

/// Time-varying steering vector for the tracking scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub p0: Vector,
    pub delta: Vector,
    pub schedule: LambdaSchedule,
}

impl Drift {
    pub fn steering(&self, t: f64) -> Vector {
        &self.p0 + &self.delta * self.schedule.value(t)
    }
}

/// Generative model for the network-wide signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    /// `Π_s`, `M × S`.
    pub mixing_s: Mat,
    /// `Π_r`, `M × R`; present when the problem consumes `v`.
    pub mixing_r: Option<Mat>,
    /// Variance of every entry of `s` and `r`.
    pub source_var: f64,
    pub noise_var: f64,
    pub drift: Option<Drift>,
}

impl SignalModel {
    pub fn new(mixing_s: Mat, mixing_r: Option<Mat>, source_var: f64, noise_var: f64) -> Result<Self, SignalError> {
        let model = Self { mixing_s, mixing_r, source_var, noise_var, drift: None };
        model.validate()?;
        Ok(model)
    }

    /// Tracking model: a single unit source steered by `p(t)`.
    pub fn tracking(drift: Drift, source_var: f64, noise_var: f64) -> Result<Self, SignalError> {
        let model = Self {
            mixing_s: Mat::from_column_slice(drift.p0.len(), 1, drift.p0.as_slice()),
            mixing_r: None,
            source_var,
            noise_var,
            drift: Some(drift),
        };
        model.validate()?;
        Ok(model)
    }

    /// Mixing matrices with entries drawn uniformly on `[−0.5, 0.5]`.
    pub fn random_uniform<R: Rng>(
        rng: &mut R,
        channels: usize,
        s_sources: usize,
        r_sources: Option<usize>,
        source_var: f64,
        noise_var: f64,
    ) -> Result<Self, SignalError> {
        let u = Uniform::new_inclusive(-0.5, 0.5).expect("valid range");
        let mixing_s = Mat::from_fn(channels, s_sources, |_, _| u.sample(rng));
        let mixing_r = r_sources.map(|r| Mat::from_fn(channels, r, |_, _| u.sample(rng)));
        Self::new(mixing_s, mixing_r, source_var, noise_var)
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), SignalError> {
        if !(self.source_var > 0.0) {
            return Err(SignalError::Variance { name: "source_var", value: self.source_var });
        }
        if !(self.noise_var > 0.0) {
            return Err(SignalError::Variance { name: "noise_var", value: self.noise_var });
        }
        if let Some(r) = &self.mixing_r {
            if r.nrows() != self.mixing_s.nrows() {
                return Err(SignalError::Shape(format!(
                    "Π_r has {} rows, Π_s has {}",
                    r.nrows(),
                    self.mixing_s.nrows()
                )));
            }
        }
        if let Some(d) = &self.drift {
            if self.mixing_s.ncols() != 1 {
                return Err(SignalError::DriftSources(self.mixing_s.ncols()));
            }
            if d.p0.len() != self.mixing_s.nrows() || d.delta.len() != d.p0.len() {
                return Err(SignalError::Shape("drift vectors do not match channel count".into()));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.mixing_s.nrows()
    }

    /// Analytic `E[y yᵀ] = σ_r² Π_s Π_sᵀ + σ_n² I` (stationary models).
    pub fn covariance_y(&self) -> Mat {
        let m = self.channels();
        &self.mixing_s * self.mixing_s.transpose() * self.source_var + Mat::identity(m, m) * self.noise_var
    }

    /// Analytic `E[v vᵀ] = σ_r² Π_r Π_rᵀ + E[y yᵀ]`, if `v` is modelled.
    pub fn covariance_v(&self) -> Option<Mat> {
        self.mixing_r
            .as_ref()
            .map(|r| r * r.transpose() * self.source_var + self.covariance_y())
    }

    /// Analytic `E[y sᵀ] = σ_r² Π_s`.
    pub fn cross_ys(&self) -> Mat {
        &self.mixing_s * self.source_var
    }
}

/// `N` consecutive samples of every node's signals, starting at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub start: u64,
    pub len: usize,
    /// `Y_k`, `M_k × N`, in node order.
    pub y: Vec<Mat>,
    /// `V_k`, `M_k × N`, when the model has `Π_r`.
    pub v: Option<Vec<Mat>>,
    /// Source samples `s(τ)`, `S × N`.
    pub s: Mat,
}

impl SampleBatch {
    /// Partitions network-wide matrices by rows according to `channels`.
    pub fn from_network(start: u64, channels: &[usize], y: &Mat, v: Option<&Mat>, s: Mat) -> Self {
        let y_blocks = crate::linalg::split_rows(y, channels);
        let v_blocks = v.map(|v| crate::linalg::split_rows(v, channels));
        Self { start, len: y.ncols(), y: y_blocks, v: v_blocks, s }
    }

    pub fn node_count(&self) -> usize {
        self.y.len()
    }

    /// Network-wide `Y(t)`: node blocks stacked in node order.
    pub fn stacked_y(&self) -> Mat {
        crate::linalg::vstack(&self.y.iter().collect::<Vec<_>>())
    }

    pub fn stacked_v(&self) -> Option<Mat> {
        self.v.as_ref().map(|v| crate::linalg::vstack(&v.iter().collect::<Vec<_>>()))
    }

    /// Debug dump of the stacked `Y`: one row per channel, one column per
    /// sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let y = self.stacked_y();
        for r in 0..y.nrows() {
            let row: Vec<String> = (0..y.ncols()).map(|c| format!("{:e}", y[(r, c)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> Mat {
    let sd = var.sqrt();
    // Column-major fill: sample τ is drawn as one contiguous column.
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

fn check_partition(model: &SignalModel, channels: &[usize]) -> Result<(), SignalError> {
    let total: usize = channels.iter().sum();
    if total != model.channels() {
        return Err(SignalError::Partition { partition: total, model: model.channels() });
    }
    Ok(())
}

/// Draws `n` samples starting at time `t` from a stationary model.
pub fn sample_stationary<R: Rng>(
    model: &SignalModel,
    channels: &[usize],
    t: u64,
    n: usize,
    rng: &mut R,
) -> Result<SampleBatch, SignalError> {
    if model.drift.is_some() {
        return Err(SignalError::DriftPresent);
    }
    check_partition(model, channels)?;
    let m = model.channels();
    let s = gaussian(rng, model.mixing_s.ncols(), n, model.source_var);
    let r = model.mixing_r.as_ref().map(|pr| gaussian(rng, pr.ncols(), n, model.source_var));
    let noise = gaussian(rng, m, n, model.noise_var);
    let y = &model.mixing_s * &s + noise;
    let v = match (&model.mixing_r, r) {
        (Some(pr), Some(r)) => Some(pr * r + &y),
        _ => None,
    };
    Ok(SampleBatch::from_network(t, channels, &y, v.as_ref(), s))
}

/// Draws `n` samples starting at time `t` from a drifting single-source
/// model: `y(τ) = p(τ) s(τ) + n(τ)`.
pub fn sample_adaptive<R: Rng>(
    model: &SignalModel,
    channels: &[usize],
    t: u64,
    n: usize,
    rng: &mut R,
) -> Result<SampleBatch, SignalError> {
    let drift = model.drift.as_ref().ok_or(SignalError::NoDrift)?;
    check_partition(model, channels)?;
    let m = model.channels();
    let s = gaussian(rng, 1, n, model.source_var);
    let mut y = gaussian(rng, m, n, model.noise_var);
    for tau in 0..n {
        let p = drift.steering((t + tau as u64) as f64);
        let mut col = y.column_mut(tau);
        col.axpy(s[(0, tau)], &p, 1.0);
    }
    Ok(SampleBatch::from_network(t, channels, &y, None, s))
}

/// Sample covariance `Y Yᵀ / N`.
pub fn estimate_covariance(y: &Mat) -> Mat {
    let n = y.ncols().max(1) as f64;
    let mut r = y * y.transpose();
    r /= n;
    r
}

/// Sample cross-correlation `Y Sᵀ / N` (one column per row of `S`).
pub fn estimate_cross(y: &Mat, s: &Mat) -> Result<Mat, SignalError> {
    if y.ncols() != s.ncols() {
        return Err(SignalError::Shape(format!("Y has {} samples, s has {}", y.ncols(), s.ncols())));
    }
    let n = y.ncols().max(1) as f64;
    let mut r = y * s.transpose();
    r /= n;
    Ok(r)
}

/// Sample-average estimators for common expectations of filtered signals.
pub mod estimators {
    use crate::Mat;

    /// `E‖Xᵀy‖² ≈ ‖XᵀY‖_F² / N`.
    pub fn output_power(x: &Mat, y: &Mat) -> f64 {
        (x.transpose() * y).norm_squared() / y.ncols() as f64
    }

    /// `E[Xᵀy yᵀX] ≈ XᵀY YᵀX / N`.
    pub fn output_covariance(x: &Mat, y: &Mat) -> Mat {
        let z = x.transpose() * y;
        &z * z.transpose() / y.ncols() as f64
    }

    /// `E‖d − Xᵀy‖² ≈ ‖D − XᵀY‖_F² / N`.
    pub fn mean_squared_error(d: &Mat, x: &Mat, y: &Mat) -> f64 {
        (d - x.transpose() * y).norm_squared() / y.ncols() as f64
    }

    /// `E[tr(Xᵀy vᵀW)] ≈ tr(XᵀY VᵀW) / N`.
    pub fn cross_trace(x: &Mat, y: &Mat, v: &Mat, w: &Mat) -> f64 {
        ((x.transpose() * y) * (v.transpose() * w)).trace() / y.ncols() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_covariance(y: &Mat) -> Mat {
        let (m, n) = y.shape();
        let mut r = Mat::zeros(m, m);
        for tau in 0..n {
            for i in 0..m {
                for j in 0..m {
                    r[(i, j)] += y[(i, tau)] * y[(j, tau)];
                }
            }
        }
        r / n as f64
    }

    #[test]
    fn zero_mixing_and_tiny_noise_gives_near_zero() {
        let model = SignalModel::new(Mat::zeros(3, 1), None, 1.0, 1e-300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_stationary(&model, &[1, 2], 0, 50, &mut rng).unwrap();
        assert!(b.stacked_y().amax() < 1e-140);
    }

    #[test]
    fn zero_variance_rejected() {
        assert!(SignalModel::new(Mat::zeros(3, 1), None, 1.0, 0.0).is_err());
        assert!(SignalModel::new(Mat::zeros(3, 1), None, 0.0, 1.0).is_err());
    }

    #[test]
    fn sample_covariance_matches_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = SignalModel::random_uniform(&mut rng, 6, 2, Some(2), 0.5, 0.1).unwrap();
        let b = sample_stationary(&model, &[2, 2, 2], 0, 100_000, &mut rng).unwrap();
        let r = estimate_covariance(&b.stacked_y());
        assert!((r - model.covariance_y()).amax() < 5e-2);
        let rv = estimate_covariance(&b.stacked_v().unwrap());
        assert!((rv - model.covariance_v().unwrap()).amax() < 5e-2);
    }

    #[test]
    fn stacking_is_exact_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = SignalModel::random_uniform(&mut rng, 5, 1, None, 1.0, 1.0).unwrap();
        let a = sample_stationary(&model, &[2, 3], 10, 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_stationary(&model, &[2, 3], 10, 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        let y = a.stacked_y();
        assert_eq!(y.rows(0, 2), a.y[0]);
        assert_eq!(y.rows(2, 3), a.y[1]);
        assert_eq!(a.start, 10);
        assert!(sample_stationary(&model, &[2, 2], 0, 5, &mut rng).is_err());
    }

    #[test]
    fn covariance_estimator_cases() {
        assert_eq!(estimate_covariance(&Mat::zeros(3, 4)), Mat::zeros(3, 3));
        assert_eq!(estimate_covariance(&Mat::identity(4, 4)), Mat::identity(4, 4) / 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = gaussian(&mut rng, 4, 1000, 1.0);
        let fast = estimate_covariance(&y);
        assert!((&fast - brute_covariance(&y)).amax() < 1e-12);
        let (vals, _) = crate::linalg::sym_eigen_ascending(&fast);
        assert!(vals[0] >= -1e-10 * vals[3]);
    }

    #[test]
    fn cross_estimator_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = gaussian(&mut rng, 3, 200, 1.0);
        let zero = Mat::zeros(1, 200);
        assert_eq!(estimate_cross(&y, &zero).unwrap(), Mat::zeros(3, 1));
        let s = gaussian(&mut rng, 1, 200, 1.0);
        let mut y1 = Mat::zeros(3, 200);
        y1.set_row(0, &s.row(0));
        let r = estimate_cross(&y1, &s).unwrap();
        let expect = s.norm_squared() / 200.0;
        assert!((r[(0, 0)] - expect).abs() < 1e-14);
        assert_eq!(r[(1, 0)], 0.0);
        assert!(estimate_cross(&y, &Mat::zeros(1, 10)).is_err());
    }

    #[test]
    fn mmse_on_synthetic_data_recovers_steering_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Vector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let drift = Drift { p0: p.clone(), delta: Vector::zeros(6), schedule: LambdaSchedule::constant(0.0) };
        let model = SignalModel::tracking(drift, 1.0, 0.1).unwrap();
        let b = sample_adaptive(&model, &[3, 3], 0, 50_000, &mut rng).unwrap();
        let y = b.stacked_y();
        let r = estimate_covariance(&y);
        let rs = estimate_cross(&y, &b.s).unwrap();
        let x = r.lu().solve(&rs).unwrap();
        // Closed form for y = p s + n: x* = p / (σ_n² + ‖p‖²).
        let x_star = &p / (0.1 + p.norm_squared());
        let rel = (x.column(0) - &x_star).norm() / x_star.norm();
        assert!(rel < 2e-2, "relative error {rel}");
    }

    #[test]
    fn constant_schedule_matches_stationary_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Vector::from_vec(vec![0.5, -0.3, 0.2, 0.1]);
        let drift = Drift { p0: p.clone(), delta: Vector::from_element(4, 1.0), schedule: LambdaSchedule::constant(0.0) };
        let model = SignalModel::tracking(drift, 1.0, 0.1).unwrap();
        assert!(matches!(sample_stationary(&model, &[4], 0, 1, &mut rng), Err(SignalError::DriftPresent)));
        let b = sample_adaptive(&model, &[2, 2], 0, 100_000, &mut rng).unwrap();
        let r = estimate_covariance(&b.stacked_y());
        let expect = &p * p.transpose() + Mat::identity(4, 4) * 0.1;
        assert!((r - expect).amax() < 2e-2);
    }

    #[test]
    fn step_schedule_changes_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 8;
        let p0 = Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let delta = Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let schedule = LambdaSchedule::new(vec![(0.0, 0.0), (10_000.0, 0.0), (10_000.0, 1.0)]).unwrap();
        assert_eq!(schedule.value(9_999.0), 0.0);
        assert_eq!(schedule.value(10_000.0), 1.0);
        let model = SignalModel::tracking(Drift { p0, delta, schedule }, 1.0, 0.1).unwrap();
        let before = sample_adaptive(&model, &[4, 4], 0, 10_000, &mut rng).unwrap();
        let before2 = sample_adaptive(&model, &[4, 4], 0, 10_000, &mut rng).unwrap();
        let after = sample_adaptive(&model, &[4, 4], 10_000, 10_000, &mut rng).unwrap();
        let r0 = estimate_covariance(&before.stacked_y());
        let r0b = estimate_covariance(&before2.stacked_y());
        let r1 = estimate_covariance(&after.stacked_y());
        let same = (&r0 - &r0b).norm();
        let diff = (&r0 - &r1).norm();
        assert!(diff > 10.0 * same, "diff {diff} vs same {same}");
    }

    #[test]
    fn ramp_schedule_interpolates() {
        let s = LambdaSchedule::new(vec![(0.0, 0.0), (10.0, 1.0)]).unwrap();
        assert_eq!(s.value(-1.0), 0.0);
        assert!((s.value(2.5) - 0.25).abs() < 1e-15);
        assert_eq!(s.value(100.0), 1.0);
        assert!(LambdaSchedule::new(vec![]).is_err());
        assert!(LambdaSchedule::new(vec![(2.0, 0.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn estimators_equal_direct_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y = gaussian(&mut rng, 5, 300, 1.0);
        let v = gaussian(&mut rng, 5, 300, 1.0);
        let x = gaussian(&mut rng, 5, 2, 1.0);
        let w = gaussian(&mut rng, 5, 2, 1.0);
        let d = gaussian(&mut rng, 2, 300, 1.0);
        let n = 300.0;
        let xy = x.transpose() * &y;
        assert_eq!(estimators::output_power(&x, &y), xy.norm_squared() / n);
        assert_eq!(estimators::output_covariance(&x, &y), &xy * xy.transpose() / n);
        assert_eq!(estimators::mean_squared_error(&d, &x, &y), (&d - &xy).norm_squared() / n);
        assert_eq!(
            estimators::cross_trace(&x, &y, &v, &w),
            (&xy * (v.transpose() * &w)).trace() / n
        );
    }

    #[test]
    fn csv_dump_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = SignalModel::random_uniform(&mut rng, 3, 1, None, 1.0, 1.0).unwrap();
        let b = sample_stationary(&model, &[3], 0, 4, &mut rng).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}
