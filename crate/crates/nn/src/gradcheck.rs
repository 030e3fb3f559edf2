//! Central finite-difference gradient checks in double precision.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{Context, Layer};
use crate::loss::softmax_cross_entropy;
use crate::models::Model;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Check at most this many entries per parameter tensor (sampled
    /// without replacement); `None` checks every entry.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
    /// Smallest step tried when a perturbation crosses a ReLU or max-pool
    /// boundary.
    pub min_step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, max_entries_per_param: None, seed: 0, min_step: 1e-8 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    /// Entries whose default step crossed a kink and were re-measured with a
    /// smaller step.
    pub refined_entries: usize,
    /// Entries that still crossed a kink at `min_step`.
    pub unresolved_kinks: usize,
    /// `(tensor name, flat index, analytic, numeric)` for the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.entries_checked += 1;
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = Some((name.to_string(), index, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.entries_checked += other.entries_checked;
        self.refined_entries += other.refined_entries;
        self.unresolved_kinks += other.unresolved_kinks;
        if other.max_rel_error >= self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.or(self.worst.take());
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

fn entries(len: usize, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cfg.max_entries_per_param {
        Some(k) if k < len => {
            let mut idx = sample(rng, len, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

/// Central difference that shrinks the step until neither side changes the
/// activation pattern. `eval(delta)` returns the objective and pattern with
/// the probed entry offset by `delta`.
fn central_difference(
    cfg: &GradCheckConfig,
    baseline: u64,
    report: &mut GradCheckReport,
    mut eval: impl FnMut(f64) -> Result<(f64, u64)>,
) -> Result<f64> {
    let mut h = cfg.step;
    let mut refined = false;
    loop {
        let (plus, p_plus) = eval(h)?;
        let (minus, p_minus) = eval(-h)?;
        let clean = p_plus == baseline && p_minus == baseline;
        if clean || h / 10.0 < cfg.min_step {
            if refined {
                report.refined_entries += 1;
            }
            if !clean {
                report.unresolved_kinks += 1;
            }
            return Ok((plus - minus) / (2.0 * h));
        }
        refined = true;
        h /= 10.0;
    }
}

/// Compare every parameter gradient of `model` against central differences of
/// the mean softmax cross-entropy on one batch. Each loss evaluation reseeds
/// the forward context, so dropout masks are identical across evaluations.
pub fn grad_check(
    model: &mut Model<f64>,
    images: Option<&Tensor<f64>>,
    series: Option<&Tensor<f64>>,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let ctx_seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
    let loss_at = |m: &mut Model<f64>| -> Result<(f64, u64)> {
        let logits = m.forward(images, series, &mut Context::train(ctx_seed))?;
        Ok((softmax_cross_entropy(&logits, labels)?.loss, m.activation_pattern()))
    };

    model.zero_grad();
    let logits = model.forward(images, series, &mut Context::train(ctx_seed))?;
    let baseline = model.activation_pattern();
    let ce = softmax_cross_entropy(&logits, labels)?;
    model.backward(&ce.grad)?;
    let analytic: Vec<(String, Vec<f64>)> =
        model.params().iter().map(|p| (p.name.clone(), p.grad.data().to_vec())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for i in entries(grads.len(), cfg, &mut rng) {
            let orig = model.params()[pi].value.data()[i];
            let numeric = central_difference(cfg, baseline, &mut report, |delta| {
                model.params_mut()[pi].value.data_mut()[i] = orig + delta;
                let r = loss_at(model);
                model.params_mut()[pi].value.data_mut()[i] = orig;
                r
            })?;
            report.record(name, i, grads[i], numeric);
        }
    }
    Ok(report)
}

/// Check a single layer's input and parameter gradients using the scalar
/// objective `sum(output * R)` for a fixed random `R`.
pub fn check_layer(layer: &mut dyn Layer<f64>, input: &Tensor<f64>, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let ctx_seed = cfg.seed ^ 0x5851_f42d_4c95_7f2d;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = layer.forward(input, &mut Context::train(ctx_seed))?;
    let baseline = pattern_of(layer);
    let weights: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream = Tensor::from_vec(out.shape(), weights.clone())?;

    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&upstream)?;
    let param_grads: Vec<(String, Vec<f64>)> =
        layer.params().iter().map(|p| (p.name.clone(), p.grad.data().to_vec())).collect();

    let objective = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> Result<(f64, u64)> {
        let y = layer.forward(x, &mut Context::train(ctx_seed))?;
        Ok((y.data().iter().zip(&weights).map(|(a, b)| a * b).sum(), pattern_of(layer)))
    };

    let mut report = GradCheckReport::default();
    let mut x = input.clone();
    for i in entries(x.len(), cfg, &mut rng) {
        let orig = x.data()[i];
        let numeric = central_difference(cfg, baseline, &mut report, |delta| {
            x.data_mut()[i] = orig + delta;
            let r = objective(layer, &x);
            x.data_mut()[i] = orig;
            r
        })?;
        report.record("input", i, dx.data()[i], numeric);
    }
    for (pi, (name, grads)) in param_grads.iter().enumerate() {
        for i in entries(grads.len(), cfg, &mut rng) {
            let orig = layer.params()[pi].value.data()[i];
            let numeric = central_difference(cfg, baseline, &mut report, |delta| {
                layer.params_mut()[pi].value.data_mut()[i] = orig + delta;
                let r = objective(layer, input);
                layer.params_mut()[pi].value.data_mut()[i] = orig;
                r
            })?;
            report.record(name, i, grads[i], numeric);
        }
    }
    Ok(report)
}

fn pattern_of(layer: &dyn Layer<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    layer.activation_pattern(&mut h);
    h.finish()
}

/// Check d(mean cross-entropy)/d(logits) of the fused softmax loss.
pub fn check_softmax_ce(logits: &Tensor<f64>, labels: &[usize], step: f64) -> Result<GradCheckReport> {
    let analytic = softmax_cross_entropy(logits, labels)?.grad;
    let mut report = GradCheckReport::default();
    let mut x = logits.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let plus = softmax_cross_entropy(&x, labels)?.loss;
        x.data_mut()[i] = orig - step;
        let minus = softmax_cross_entropy(&x, labels)?.loss;
        x.data_mut()[i] = orig;
        report.record("logits", i, analytic.data()[i], (plus - minus) / (2.0 * step));
    }
    Ok(report)
}
