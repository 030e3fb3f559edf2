//! Finite-difference checks for every layer kind and every full model.

use aidetect_nn::gradcheck::{check_layer, check_softmax_ce, grad_check, GradCheckConfig};
use aidetect_nn::layers::{BasicBlock, LayerSpec};
use aidetect_nn::models::build_fusion;
use aidetect_nn::{Architecture, Model, ModelSpec, Tensor};
use aidetect_nn::suite::{random_series, random_tensor, run_suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(shape, seed)
}

fn check_spec(spec: LayerSpec, input: Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut layer = spec.build::<f64>("layer", &mut rng).unwrap();
    let report = check_layer(layer.as_mut(), &input, &GradCheckConfig::default()).unwrap();
    assert!(report.entries_checked > 0);
    assert!(report.max_rel_error < TOL, "{spec:?}: {report:?}");
    assert_eq!(report.unresolved_kinks, 0, "{spec:?}: {report:?}");
}

#[test]
fn conv2d_gradients() {
    check_spec(
        LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1, bias: true },
        random(&[2, 2, 7, 7], 1),
    );
    check_spec(
        LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 5, stride: 1, padding: 0, bias: false },
        random(&[2, 3, 8, 8], 2),
    );
}

#[test]
fn maxpool_gradients() {
    check_spec(LayerSpec::MaxPool { kernel: 2, stride: 2, padding: 0 }, random(&[2, 3, 6, 6], 3));
    check_spec(LayerSpec::MaxPool { kernel: 3, stride: 2, padding: 1 }, random(&[2, 2, 7, 7], 4));
}

#[test]
fn global_avgpool_gradients() {
    check_spec(LayerSpec::GlobalAvgPool, random(&[3, 4, 3, 3], 5));
}

#[test]
fn batchnorm_gradients() {
    check_spec(LayerSpec::BatchNorm2d { channels: 3, momentum: 0.1, epsilon: 1e-5 }, random(&[2, 3, 4, 4], 6));
    check_spec(LayerSpec::BatchNorm2d { channels: 2, momentum: 0.1, epsilon: 1e-5 }, random(&[4, 2, 1, 1], 7));
}

#[test]
fn linear_gradients() {
    check_spec(LayerSpec::Linear { in_features: 7, out_features: 4, bias: true }, random(&[3, 7], 8));
}

#[test]
fn relu_gradients() {
    check_spec(LayerSpec::Relu, random(&[4, 10], 9));
}

#[test]
fn dropout_gradients() {
    check_spec(LayerSpec::Dropout { rate: 0.4 }, random(&[4, 10], 10));
}

#[test]
fn lstm_gradients() {
    check_spec(LayerSpec::Lstm { input_size: 1, hidden_size: 5 }, random(&[2, 12], 11));
    check_spec(LayerSpec::Lstm { input_size: 3, hidden_size: 4 }, random(&[2, 6, 3], 12));
}

#[test]
fn flatten_gradients() {
    check_spec(LayerSpec::Flatten, random(&[2, 3, 2, 2], 13));
}

#[test]
fn basic_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (cin, cout, stride) in [(3, 3, 1), (2, 4, 2)] {
        let mut block = BasicBlock::<f64>::new("block", cin, cout, stride, &mut rng);
        let report = check_layer(&mut block, &random(&[2, cin, 5, 5], 15), &GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error < TOL, "{report:?}");
    }
}

#[test]
fn softmax_ce_gradients() {
    let logits = random(&[5, 2], 16);
    let report = check_softmax_ce(&logits, &[0, 1, 1, 0, 1], 1e-5).unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn lenet5_full_model() {
    let mut model = Model::<f64>::build(&ModelSpec::new(Architecture::LENET5, 3), 21).unwrap();
    let images = random(&[2, 3, 24, 24], 22);
    let report = grad_check(&mut model, Some(&images), None, &[0, 1], &GradCheckConfig::default()).unwrap();
    assert_eq!(report.entries_checked, 59_084);
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn sb_resnet18_full_model() {
    let mut model = Model::<f64>::build(&ModelSpec::new(Architecture::SB_RESNET18, 5), 23).unwrap();
    let images = random(&[2, 5, 24, 24], 24);
    let cfg = GradCheckConfig { max_entries_per_param: Some(48), ..Default::default() };
    let report = grad_check(&mut model, Some(&images), None, &[1, 0], &cfg).unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn lstm_branch_full_model() {
    let mut model = Model::<f64>::build(&ModelSpec::new(Architecture::LSTM_ONLY, 1), 25).unwrap();
    let series = random_series(2, 126, 26);
    let report = grad_check(&mut model, None, Some(&series), &[0, 1], &GradCheckConfig::default()).unwrap();
    assert_eq!(report.entries_checked, model.param_count());
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn fusion_head_full_model() {
    let image = ModelSpec::new(Architecture::SB_RESNET18, 3);
    let lstm = ModelSpec::new(Architecture::LSTM_ONLY, 1).with_dropout(0.3);
    let mut model = build_fusion::<f64>(&image, &lstm, 27).unwrap();
    let images = random(&[3, 3, 24, 24], 28);
    let series = random_series(3, 126, 29);
    let cfg = GradCheckConfig { max_entries_per_param: Some(32), ..Default::default() };
    let report = grad_check(&mut model, Some(&images), Some(&series), &[1, 0, 1], &cfg).unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
    assert_eq!(report.unresolved_kinks, 0);
}

#[test]
fn frozen_parameters_do_not_change_the_check() {
    // The check never consults an optimizer, so running it twice on the same
    // untouched model reports the same error.
    let mut model = Model::<f64>::build(&ModelSpec::new(Architecture::LSTM_ONLY, 1), 30).unwrap();
    let series = random_series(2, 20, 31);
    let cfg = GradCheckConfig::default();
    let a = grad_check(&mut model, None, Some(&series), &[1, 0], &cfg).unwrap();
    let b = grad_check(&mut model, None, Some(&series), &[1, 0], &cfg).unwrap();
    assert_eq!(a.max_rel_error, b.max_rel_error);
}

#[test]
fn sampled_suite_passes() {
    for entry in run_suite(Some(64)).unwrap() {
        assert!(entry.report.entries_checked > 0, "{}", entry.name);
        assert!(entry.report.max_rel_error < TOL, "{}: {:?}", entry.name, entry.report);
        assert_eq!(entry.report.unresolved_kinks, 0, "{}", entry.name);
    }
}
