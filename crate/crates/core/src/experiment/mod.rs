//! Training, the repeated-split protocol, grid search and reports.

mod grid;
mod protocol;
mod report;

pub use grid::{grid_search, CellScore, GridResult, HpGrid};
pub use protocol::{run_protocol, summarize, CurveStats, ProtocolReport, ReportConfig};
pub use report::{emit_report, load_summary, table_columns, ReportFiles};

use aidetect_nn::{
    predict, softmax_cross_entropy, Adam, Architecture, Backbone, Context, LrSchedule, Mode, Model, ModelSpec, Tensor,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, SplitSpec};
use crate::encoding::{ChannelStats, SERIES_LEN};
use crate::error::{CoreError, Result};
use crate::seed::derive_seed;
use crate::torus::GRID;

pub const DEFAULT_BATCH: usize = 32;
const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lr: f64,
    pub weight_decay: f64,
    /// Linear decay of the learning rate to zero over the epochs.
    pub scheduler: bool,
    /// Dropout on the series features; fusion models only.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Hyperparams {
    pub fn default_epochs(arch: Architecture) -> usize {
        match arch.backbone {
            Some(Backbone::Resnet18) => 25,
            Some(Backbone::SbResnet18) | None => 45,
            Some(Backbone::Lenet5) => 110,
        }
    }

    /// Settings found best by grid search for each image backbone; fusion
    /// models inherit those of their backbone.
    pub fn tuned(arch: Architecture) -> Self {
        let epochs = Self::default_epochs(arch);
        let (lr, weight_decay, scheduler) = match arch.backbone {
            Some(Backbone::Resnet18) | None => (1e-3, 0.0, true),
            Some(Backbone::SbResnet18) => (1e-3, 5e-6, true),
            Some(Backbone::Lenet5) => (1e-4, 5e-6, false),
        };
        Self { lr, weight_decay, scheduler, dropout: 0.0, epochs, batch_size: DEFAULT_BATCH }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..=0.9).contains(&self.dropout)
            && self.epochs >= 1
            && self.batch_size >= 2;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Invalid(format!("bad hyperparameters {self:?}")))
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        if self.scheduler {
            LrSchedule::linear(self.lr, self.epochs)
        } else {
            LrSchedule::constant(self.lr, self.epochs)
        }
    }
}

/// Model spec for a corpus: channel count from the formulation, dropout from
/// the hyperparameters when the model has a series branch.
pub fn model_spec(arch: Architecture, corpus: &Corpus, hp: &Hyperparams) -> ModelSpec {
    let spec = ModelSpec::new(arch, corpus.channels());
    if arch.series {
        spec.with_dropout(hp.dropout)
    } else {
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub test_accuracy: Vec<f64>,
    pub test_loss: Vec<f64>,
    /// Accuracy on the training side after the last epoch, in eval mode.
    pub train_accuracy: f64,
    pub seed: u64,
    pub split_seed: u64,
    /// Number of samples the normalization statistics came from; always the
    /// size of the training side.
    pub norm_samples: usize,
}

/// Normalized, flattened tensors for one split.
pub struct Prepared {
    channels: usize,
    images: Vec<f32>,
    series: Vec<f32>,
    labels: Vec<usize>,
    pub stats: ChannelStats,
}

impl Prepared {
    /// Standardize every sample with statistics from the training indices.
    pub fn new(corpus: &Corpus, train: &[usize]) -> Result<Self> {
        let channels = corpus.channels();
        let stats = ChannelStats::compute(train.iter().map(|&i| &corpus.samples[i]), channels)?;
        let mut images = Vec::with_capacity(corpus.len() * channels * GRID * GRID);
        let mut series = Vec::with_capacity(corpus.len() * SERIES_LEN);
        for s in &corpus.samples {
            images.extend(stats.apply(&s.image));
            series.extend_from_slice(&s.series);
        }
        Ok(Self { channels, images, series, labels: corpus.labels(), stats })
    }

    fn image_len(&self) -> usize {
        self.channels * GRID * GRID
    }

    pub fn batch(&self, idx: &[usize], spec: &ModelSpec) -> Result<(Option<Tensor<f32>>, Option<Tensor<f32>>, Vec<usize>)> {
        let images = if spec.arch.backbone.is_some() {
            let n = self.image_len();
            let mut data = Vec::with_capacity(idx.len() * n);
            for &i in idx {
                data.extend_from_slice(&self.images[i * n..(i + 1) * n]);
            }
            Some(Tensor::from_vec(&[idx.len(), self.channels, GRID, GRID], data)?)
        } else {
            None
        };
        let series = if spec.arch.series {
            let mut data = Vec::with_capacity(idx.len() * SERIES_LEN);
            for &i in idx {
                data.extend_from_slice(&self.series[i * SERIES_LEN..(i + 1) * SERIES_LEN]);
            }
            Some(Tensor::from_vec(&[idx.len(), SERIES_LEN], data)?)
        } else {
            None
        };
        Ok((images, series, idx.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Accuracy and mean cross-entropy over `idx` in eval mode.
pub fn evaluate(model: &mut Model<f32>, data: &Prepared, idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Err(CoreError::Invalid("cannot evaluate on an empty index set".into()));
    }
    let spec = model.spec().clone();
    let mut correct = 0usize;
    let mut loss_sum = 0.0f64;
    let mut ctx = Context::eval();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (images, series, labels) = data.batch(chunk, &spec)?;
        let logits = model.forward(images.as_ref(), series.as_ref(), &mut ctx)?;
        let ce = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += ce.loss as f64 * chunk.len() as f64;
        correct += predict(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok((correct as f64 / idx.len() as f64, loss_sum / idx.len() as f64))
}

/// Train a fresh model on the split's training side, evaluating the test
/// side after every epoch.
pub fn train_once(spec: &ModelSpec, corpus: &Corpus, split: &SplitSpec, hp: &Hyperparams, seed: u64) -> Result<TrialResult> {
    fit(spec, corpus, split, hp, seed).map(|(r, _)| r)
}

/// [`train_once`], also returning the trained model.
pub fn fit(
    spec: &ModelSpec,
    corpus: &Corpus,
    split: &SplitSpec,
    hp: &Hyperparams,
    seed: u64,
) -> Result<(TrialResult, Model<f32>)> {
    hp.validate()?;
    if spec.in_channels != corpus.channels() && spec.arch.backbone.is_some() {
        return Err(CoreError::Invalid(format!(
            "model expects {} channels, corpus has {}",
            spec.in_channels,
            corpus.channels()
        )));
    }
    if split.train.len() < 2 || split.test.is_empty() {
        return Err(CoreError::Invalid("split needs at least two training and one test sample".into()));
    }
    let data = Prepared::new(corpus, &split.train)?;
    let mut model = Model::<f32>::build(spec, derive_seed(seed, "init", 0))?;
    let mut adam = Adam::new(hp.lr, hp.weight_decay);
    let schedule = hp.schedule();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle", 0));
    let mut order = split.train.clone();
    let mut step = 0u64;
    let mut result = TrialResult {
        test_accuracy: Vec::with_capacity(hp.epochs),
        test_loss: Vec::with_capacity(hp.epochs),
        train_accuracy: 0.0,
        seed,
        split_seed: split.seed,
        norm_samples: data.stats.samples,
    };

    for epoch in 0..hp.epochs {
        adam.lr = schedule.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(hp.batch_size) {
            // Batch statistics need at least two samples.
            if chunk.len() < 2 {
                continue;
            }
            let (images, series, labels) = data.batch(chunk, spec)?;
            let mut ctx = Context::new(Mode::Train, derive_seed(seed, "dropout", step));
            model.zero_grad();
            let logits = model.forward(images.as_ref(), series.as_ref(), &mut ctx)?;
            let ce = softmax_cross_entropy(&logits, &labels)?;
            model.backward(&ce.grad)?;
            adam.step(&mut model.params_mut())?;
            step += 1;
        }
        let (acc, loss) = evaluate(&mut model, &data, &split.test)?;
        result.test_accuracy.push(acc);
        result.test_loss.push(loss);
    }
    result.train_accuracy = evaluate(&mut model, &data, &split.train)?.0;
    Ok((result, model))
}

/// Run `f` on a pool of `jobs` workers (all cores when `None`).
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| CoreError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
