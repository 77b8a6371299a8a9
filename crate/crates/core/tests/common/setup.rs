#![allow(dead_code)]

use std::sync::Arc;

use dasf::engine::{FilterState, FixedBatch};
use dasf::signals::{sample_stationary, SignalModel};
use dasf::{Mat, SampleBatch, SfoProblem, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::gaussian;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stationary_batch(channels: &[usize], q: usize, n: usize, seed: u64) -> SampleBatch {
    let mut r = rng(seed);
    let m: usize = channels.iter().sum();
    let model = SignalModel::random_uniform(&mut r, m, q, Some(q), 0.5, 0.1).unwrap();
    sample_stationary(&model, channels, 0, n, &mut r).unwrap()
}

pub fn fixed(batch: SampleBatch) -> FixedBatch {
    FixedBatch(Arc::new(batch))
}

/// Problem of the named family with random deterministic terms. The QCQP
/// radius keeps every local problem feasible.
pub fn problem(kind: &str, channels: &[usize], q: usize, seed: u64) -> SfoProblem {
    let mut r = rng(seed ^ 0xABCD);
    let m: usize = channels.iter().sum();
    match kind {
        "mmse" => SfoProblem::mmse(channels.to_vec(), q).unwrap(),
        "tro" => SfoProblem::tro(channels.to_vec(), q).unwrap(),
        "scqp" => SfoProblem::scqp(channels.to_vec(), gaussian(&mut r, m, q)).unwrap(),
        "qcqp" => {
            let a = gaussian(&mut r, m, q);
            let c = Vector::from_iterator(m, gaussian(&mut r, m, 1).iter().copied());
            let d = Vector::from_iterator(q, gaussian(&mut r, q, 1).iter().copied());
            let mut offset = 0;
            let mut min_c = f64::INFINITY;
            for &mk in channels {
                min_c = min_c.min(c.rows(offset, mk).norm_squared());
                offset += mk;
            }
            let alpha = (d.norm_squared() / min_c * (1.0 + r.random::<f64>())).sqrt();
            SfoProblem::qcqp(channels.to_vec(), a, c, d, alpha).unwrap()
        }
        other => panic!("unknown problem {other}"),
    }
}

pub fn random_state(channels: &[usize], q: usize, seed: u64) -> FilterState {
    FilterState::random(channels, q, &mut rng(seed))
}

pub fn stacked(blocks: &[Mat]) -> Mat {
    dasf::linalg::vstack(&blocks.iter().collect::<Vec<_>>())
}
