use reprobe_core::analytic::{invert_linear, roundtrip_error, unit_input, LinearModel};
use reprobe_core::gates;
use reprobe_core::inversion::{invert, EpsilonSchedule, InversionConfig};
use reprobe_core::trainer::{first_layer_filters, make_structured_dataset, train, TrainConfig};
use reprobe_core::{Model, Precision};

#[test]
fn trained_model_survives_manifest_and_blob() {
    let data = make_structured_dataset(24, 4, &gates::TRAIN_SHAPE, true, 1).unwrap();
    let model = gates::convnet(4, 1).unwrap();
    let cfg = TrainConfig { epochs: 1, lr: 0.02, batch: 8, seed: 1 };
    let trained = train(&model, &data, &cfg).unwrap().model;

    let mut reloaded = Model::from_manifest(&trained.to_manifest()).unwrap();
    assert_ne!(reloaded.to_param_blob(), trained.to_param_blob());
    reloaded.load_param_blob(&trained.to_param_blob()).unwrap();
    for x in &data.inputs[..4] {
        assert_eq!(reloaded.forward(x).unwrap(), trained.forward(x).unwrap());
    }
    let filters = first_layer_filters(&reloaded).unwrap();
    assert_eq!(filters.shape(), &[gates::CONV_CHANNELS[0], 3, 3, 3]);
}

#[test]
fn inverting_a_reloaded_model_matches_the_original() {
    let m = gates::undercomplete_model(3).unwrap();
    let back = Model::from_manifest(&m.to_manifest()).unwrap();
    let target = gates::inversion_target();
    let cfg = InversionConfig::new(2, 25, EpsilonSchedule::LinearDecay(0.05));
    assert_eq!(invert(&m, &target, &cfg).unwrap().trace, invert(&back, &target, &cfg).unwrap().trace);
}

#[test]
fn linear_manifest_feeds_the_exact_inverse() {
    let lm = LinearModel::random(24, 3, true, Precision::F64, 8).unwrap();
    let mut model = Model::from_manifest(&lm.to_model().to_manifest()).unwrap();
    model.load_param_blob(&lm.to_model().to_param_blob()).unwrap();
    let again = LinearModel::from_model(&model).unwrap();
    assert_eq!(again, lm);
    let x = unit_input(24, 2);
    assert!(roundtrip_error(&again, &x).unwrap().error < gates::ROUNDTRIP_REL_TOL);
    let o = model.forward(&x).unwrap();
    let back = invert_linear(&again, &o).unwrap().input;
    assert!(back.sub(&x).unwrap().l2_norm() < 1e-9);
}
