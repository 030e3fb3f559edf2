//! A fixed battery of gradient checks covering every layer kind and every
//! full model family, shared by the test suite and the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{check_layer, check_softmax_ce, grad_check, GradCheckConfig, GradCheckReport};
use crate::layers::{BasicBlock, LayerSpec};
use crate::models::{build_fusion, Architecture, Model, ModelSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// ±1 series with a zero-padded tail of five steps.
pub fn random_series(batch: usize, len: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..batch * len)
        .map(|i| if i % len >= len.saturating_sub(5) { 0.0 } else if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Tensor::from_vec(&[batch, len], data).expect("shape matches data")
}

fn layer_cases() -> Vec<(LayerSpec, Vec<usize>)> {
    vec![
        (LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, padding: 1, bias: true }, vec![2, 2, 7, 7]),
        (LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 5, stride: 1, padding: 0, bias: false }, vec![2, 3, 8, 8]),
        (LayerSpec::MaxPool { kernel: 2, stride: 2, padding: 0 }, vec![2, 3, 6, 6]),
        (LayerSpec::MaxPool { kernel: 3, stride: 2, padding: 1 }, vec![2, 2, 7, 7]),
        (LayerSpec::GlobalAvgPool, vec![3, 4, 3, 3]),
        (LayerSpec::BatchNorm2d { channels: 3, momentum: 0.1, epsilon: 1e-5 }, vec![2, 3, 4, 4]),
        (LayerSpec::Linear { in_features: 7, out_features: 4, bias: true }, vec![3, 7]),
        (LayerSpec::Relu, vec![4, 10]),
        (LayerSpec::Dropout { rate: 0.4 }, vec![4, 10]),
        (LayerSpec::Lstm { input_size: 1, hidden_size: 5 }, vec![2, 12]),
        (LayerSpec::Lstm { input_size: 3, hidden_size: 4 }, vec![2, 6, 3]),
        (LayerSpec::Flatten, vec![2, 3, 2, 2]),
    ]
}

/// Run the whole battery. Full models check at most `model_entries` entries
/// per parameter tensor (every entry when `None`); single layers are always
/// checked exhaustively.
pub fn run_suite(model_entries: Option<usize>) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    let exhaustive = GradCheckConfig::default();
    let sampled = GradCheckConfig { max_entries_per_param: model_entries, ..Default::default() };

    for (i, (spec, shape)) in layer_cases().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17 + i as u64);
        let mut layer = spec.build::<f64>("layer", &mut rng)?;
        let report = check_layer(layer.as_mut(), &random_tensor(&shape, 100 + i as u64), &exhaustive)?;
        out.push(SuiteEntry { name: format!("{:?} {shape:?}", spec.kind()), report });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (cin, cout, stride) in [(3, 3, 1), (2, 4, 2)] {
        let mut block = BasicBlock::<f64>::new("block", cin, cout, stride, &mut rng);
        let report = check_layer(&mut block, &random_tensor(&[2, cin, 5, 5], 15), &exhaustive)?;
        out.push(SuiteEntry { name: format!("BasicBlock {cin}->{cout}/{stride}"), report });
    }

    let report = check_softmax_ce(&random_tensor(&[5, 2], 16), &[0, 1, 1, 0, 1], exhaustive.step)?;
    out.push(SuiteEntry { name: "SoftmaxCrossEntropy".into(), report });

    let mut lenet = Model::<f64>::build(&ModelSpec::new(Architecture::LENET5, 3), 21)?;
    let report = grad_check(&mut lenet, Some(&random_tensor(&[2, 3, 24, 24], 22)), None, &[0, 1], &sampled)?;
    out.push(SuiteEntry { name: "lenet5".into(), report });

    let mut sb = Model::<f64>::build(&ModelSpec::new(Architecture::SB_RESNET18, 5), 23)?;
    let cfg = GradCheckConfig { max_entries_per_param: Some(model_entries.unwrap_or(48).min(48)), ..Default::default() };
    let report = grad_check(&mut sb, Some(&random_tensor(&[2, 5, 24, 24], 24)), None, &[1, 0], &cfg)?;
    out.push(SuiteEntry { name: "sb-resnet18".into(), report });

    let mut lstm = Model::<f64>::build(&ModelSpec::new(Architecture::LSTM_ONLY, 1), 25)?;
    let report = grad_check(&mut lstm, None, Some(&random_series(2, 126, 26)), &[0, 1], &sampled)?;
    out.push(SuiteEntry { name: "lstm".into(), report });

    let image = ModelSpec::new(Architecture::SB_RESNET18, 3);
    let branch = ModelSpec::new(Architecture::LSTM_ONLY, 1).with_dropout(0.3);
    let mut fusion = build_fusion::<f64>(&image, &branch, 27)?;
    let cfg = GradCheckConfig { max_entries_per_param: Some(model_entries.unwrap_or(32).min(32)), ..Default::default() };
    let report = grad_check(
        &mut fusion,
        Some(&random_tensor(&[3, 3, 24, 24], 28)),
        Some(&random_series(3, 126, 29)),
        &[1, 0, 1],
        &cfg,
    )?;
    out.push(SuiteEntry { name: "sb-resnet18+lstm".into(), report });
    Ok(out)
}
