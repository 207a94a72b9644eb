//! Fixture settings and pass/fail thresholds for the desk-scale experiments.
//!
//! Every number the acceptance suite and the CLI defaults depend on lives
//! here, with the reason it has the value it has.

use crate::error::Result;
use crate::inversion::{EpsilonSearch, EpsilonSchedule, InversionConfig};
use crate::model::{build_convnet, build_from_specs, build_mlp_on, mlp_specs, ConvNetSpec, LayerSpec, Model};
use crate::pattern::target_image;
use crate::tensor::{Precision, Tensor};

// Thresholds.

/// Finite-difference step for gradient checks.
pub const FD_STEP: f64 = 1e-5;
pub const INPUT_GRAD_REL_TOL: f64 = 1e-6;
pub const PARAM_GRAD_REL_TOL: f64 = 1e-5;
/// Coordinates sampled per layer kind in the gradient checks.
pub const FD_COORDS: usize = 50;
/// Relative error of the exact linear round trip at 64-bit.
pub const ROUNDTRIP_REL_TOL: f64 = 1e-6;
/// Final `m_i` of the overcomplete fixture, as a fraction of `||a||`.
pub const OVERCOMPLETE_MI_FRACTION: f64 = 0.01;
/// Undercomplete signature: `m_g` must fall by at least this factor, i.e.
/// the embedding is matched to two orders of magnitude...
pub const M_G_DROP_MIN: f64 = 100.0;
/// ...while the input stays at least this fraction of its starting distance
/// from the target (a converging inversion would head to zero).
pub const M_I_FLOOR: f64 = 0.2;
/// Iterations excluded before correlating `m_g` and `m_i`; the first steps
/// move both quantities together regardless of invertibility.
pub const WARMUP: usize = 10;
/// Desk-scale conditioning gate on the median probe ratio.
pub const CONDITIONING_MIN_RATIO: f64 = 1e3;
pub const ZERO_FRACTION_TOL: f64 = 0.05;
/// Width of the zero-fraction fixture. Past the first layer a unit's inputs
/// are non-negative, so each unit's sign is biased one way for a given draw;
/// the layer fraction only concentrates at 0.5 when there are many units
/// (worst deviation over 20 draws: 0.098 at width 64, 0.021 at 512).
pub const ZERO_FRACTION_WIDTH: usize = 512;

// Shared inputs.

/// Inversion fixtures use a `[3, 8, 8]` image (192 values) so the blur can
/// be applied, and the MLPs flatten it.
pub const INVERSION_SHAPE: [usize; 3] = [3, 8, 8];
pub const INPUT_ELEMS: usize = 192;
/// Training fixtures use `[3, 16, 16]`.
pub const TRAIN_SHAPE: [usize; 3] = [3, 16, 16];
pub const TARGET_SEED: u64 = 0;
pub const MODEL_SEED: u64 = 0;
pub const RUN_SEED: u64 = 0;

pub fn inversion_target() -> Tensor {
    target_image(&INVERSION_SHAPE, TARGET_SEED)
}

pub fn training_target() -> Tensor {
    target_image(&TRAIN_SHAPE, TARGET_SEED)
}

/// Random line search used wherever a fixture picks its own step constant.
pub fn epsilon_search(seed: u64) -> EpsilonSearch {
    EpsilonSearch {
        candidates: 12,
        lo: 1e-4,
        hi: 1e-1,
        iterations: 200,
        seed,
    }
}

// Overcomplete convergence.

pub const OVERCOMPLETE_WIDTHS: [usize; 3] = [192, 192, 192];
/// Base budget `F`; the gate compares `F` against `4F`.
pub const OVERCOMPLETE_F: usize = 2000;

pub fn overcomplete_mlp(seed: u64) -> Result<Model> {
    build_mlp_on(&INVERSION_SHAPE, &OVERCOMPLETE_WIDTHS, false, false, Precision::F32, seed)
}

// Undercomplete non-uniqueness.

/// The 96-wide linear embedding sits on a 768-unit ReLU layer. A purely
/// linear 192 -> 96 map cannot show the signature: its null-space error is
/// fixed and the remaining error shrinks with `m_g`, so `m_i` falls with it.
pub const UNDERCOMPLETE_EXPANSION: usize = 768;
pub const UNDERCOMPLETE_WIDTH: usize = 96;
/// Large steps: the regime where descent drifts along the preimage set.
pub const UNDERCOMPLETE_C: f64 = 0.1;
pub const UNDERCOMPLETE_F: usize = 2000;

pub fn undercomplete_model(seed: u64) -> Result<Model> {
    let stages = vec![
        vec![
            LayerSpec::Dense { out: UNDERCOMPLETE_EXPANSION, bias: false },
            LayerSpec::Relu,
        ],
        vec![LayerSpec::Dense { out: UNDERCOMPLETE_WIDTH, bias: false }],
    ];
    build_from_specs(&INVERSION_SHAPE, &stages, Precision::F32, seed)
}

pub fn undercomplete_config(seed: u64) -> InversionConfig {
    let mut cfg = InversionConfig::new(2, UNDERCOMPLETE_F, EpsilonSchedule::LinearDecay(UNDERCOMPLETE_C));
    cfg.seed = seed;
    cfg
}

// Sweeps.

pub const SWEEP_DEPTHS: [usize; 4] = [1, 3, 5, 7];
pub const SWEEP_DEPTH_WIDTH: usize = 192;
pub const SWEEP_WIDTHS: [usize; 3] = [96, 192, 384];
/// Fixed budget for every grid point of the depth and width sweeps.
pub const SWEEP_F: usize = 1000;

/// `depth` equal-width linear layers on the inversion input.
pub fn depth_model(depth: usize, seed: u64) -> Result<Model> {
    build_mlp_on(&INVERSION_SHAPE, &vec![SWEEP_DEPTH_WIDTH; depth], false, false, Precision::F32, seed)
}

/// One linear hidden layer of `width` units on the inversion input.
pub fn width_model(width: usize, seed: u64) -> Result<Model> {
    build_mlp_on(&INVERSION_SHAPE, &[width], false, false, Precision::F32, seed)
}

// Conditioning.

pub const PROBE_WIDTH: usize = 192;
pub const PROBE_DEPTH: usize = 3;
pub const PROBE_SIGMA_OUT: f64 = 1.0 / 1000.0;
pub const PROBE_SIGMA_IN: f64 = 1.0 / 20.0;
pub const PROBE_SEEDS: u64 = 10;

// Training.

pub const NOISE_COUNT: usize = 200;
pub const NOISE_CLASSES: usize = 10;
pub const STRUCTURED_CLASSES: usize = 8;
pub const MLP_HIDDEN: usize = 64;
pub const MLP_EPOCHS: usize = 40;
pub const CONV_CHANNELS: [usize; 3] = [8, 16, 32];
pub const CONV_EPOCHS: usize = 20;
pub const LEARNING_RATE: f64 = 0.02;
pub const BATCH: usize = 20;

/// ReLU hidden layer and a linear logit layer.
pub fn classifier_mlp(classes: usize, seed: u64) -> Result<Model> {
    let mut specs = mlp_specs(&[MLP_HIDDEN, classes], true, true);
    specs.last_mut().expect("two stages").pop();
    build_from_specs(&TRAIN_SHAPE, &specs, Precision::F64, seed)
}

pub fn noise_mlp(seed: u64) -> Result<Model> {
    classifier_mlp(NOISE_CLASSES, seed)
}

/// Three `[conv s2 -> relu -> residual]` blocks and a dense head.
pub fn convnet(classes: usize, seed: u64) -> Result<Model> {
    let spec = ConvNetSpec {
        head_classes: Some(classes),
        ..ConvNetSpec::small(&CONV_CHANNELS, true)
    };
    build_convnet(&TRAIN_SHAPE, &spec, Precision::F64, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_documented_shapes() {
        assert_eq!(overcomplete_mlp(0).unwrap().input_len(), INPUT_ELEMS);
        let u = undercomplete_model(0).unwrap();
        assert_eq!(u.embedding_shape(2).unwrap(), &[UNDERCOMPLETE_WIDTH]);
        assert!(u.is_non_invertible());
        assert_eq!(depth_model(7, 0).unwrap().depth(), 7);
        assert_eq!(width_model(384, 0).unwrap().embedding_shape(1).unwrap(), &[384]);
        assert_eq!(noise_mlp(0).unwrap().embedding_shape(2).unwrap(), &[NOISE_CLASSES]);
        let c = convnet(NOISE_CLASSES, 0).unwrap();
        assert_eq!(c.depth(), CONV_CHANNELS.len() + 1);
        assert_eq!(c.embedding_shape(3).unwrap(), &[32, 2, 2]);
        assert_eq!(inversion_target().shape(), &INVERSION_SHAPE);
    }
}
