//! Synthetic test volumes: a separable trigonometric signal plus uniform
//! noise, observed through a random Bernoulli mask.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_map::{GridShape, RealSignal};
use crate::masked_operator::MaskSet;

/// Frequency multiplier of each axis.
pub const AXIS_MULTIPLIERS: [f64; 3] = [1.0, 2.0, 3.0];

pub const DEFAULT_MISSING_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dims: Vec<usize>,
    pub noise_seed: u64,
    pub missing_fraction: f64,
    pub missing_seed: u64,
}

impl SyntheticSpec {
    /// Cube of edge `edge` with the default missing fraction.
    pub fn cube(edge: usize, seed: u64) -> Self {
        Self {
            dims: vec![edge; 3],
            noise_seed: seed,
            missing_fraction: DEFAULT_MISSING_FRACTION,
            missing_seed: seed.wrapping_add(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub noisy: RealSignal,
    pub mask: MaskSet,
    pub truth: RealSignal,
}

/// `x[t] = prod_d (cos(2 pi m_d t_d / N_d) + 2 sin(2 pi m_d t_d / N_d))`.
pub fn truth_signal(shape: &GridShape) -> Vec<f64> {
    let factors: Vec<Vec<f64>> = shape
        .dims()
        .iter()
        .zip(AXIS_MULTIPLIERS)
        .map(|(&len, m)| {
            (0..len)
                .map(|t| {
                    let w = TAU * m * t as f64 / len as f64;
                    w.cos() + 2.0 * w.sin()
                })
                .collect()
        })
        .collect();
    let strides = shape.strides();
    (0..shape.len())
        .map(|idx| {
            factors
                .iter()
                .zip(shape.dims().iter().zip(&strides))
                .map(|(f, (&len, &stride))| f[(idx / stride) % len])
                .product()
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    if !(0.0..1.0).contains(&spec.missing_fraction) {
        return Err(Error::InvalidConfig(format!(
            "missing fraction {} outside [0, 1)",
            spec.missing_fraction
        )));
    }
    let shape = GridShape::new(&spec.dims)?;
    let truth = truth_signal(&shape);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noisy: Vec<f64> = truth
        .iter()
        .map(|t| t + noise_rng.random::<f64>())
        .collect();

    let mut mask_rng = ChaCha8Rng::seed_from_u64(spec.missing_seed);
    let flags = loop {
        let flags: Vec<bool> = (0..shape.len())
            .map(|_| mask_rng.random_bool(spec.missing_fraction))
            .collect();
        if flags.iter().any(|&f| !f) {
            break flags;
        }
    };
    let mask = MaskSet::from_flags(&flags, shape.clone())?;

    Ok(SyntheticProblem {
        noisy: RealSignal::new(noisy, shape.clone())?,
        mask,
        truth: RealSignal::new(truth, shape)?,
    })
}
