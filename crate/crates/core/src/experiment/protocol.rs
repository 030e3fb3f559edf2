use aidetect_nn::ModelSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_once, with_jobs, Hyperparams, TrialResult};
use crate::dataset::{split_80_20, Corpus, Subset};
use crate::encoding::Formulation;
use crate::error::{CoreError, Result};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub arch: String,
    pub formulation: Formulation,
    pub subset: Subset,
    pub hyperparams: Hyperparams,
    pub trials: usize,
    pub seed: u64,
    pub samples: usize,
    /// Labels were permuted before splitting (a leakage control run).
    pub shuffled_labels: bool,
}

/// Epoch-wise statistics across trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub mean_accuracy: Vec<f64>,
    pub std_accuracy: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub std_loss: Vec<f64>,
    /// Index of the best averaged accuracy (earliest on ties).
    pub best_epoch: usize,
    pub best_accuracy: f64,
    /// Across-trial standard deviation at the best epoch.
    pub best_std: f64,
    /// Highest accuracy any single trial reached at any epoch.
    pub best_single_trial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub config: ReportConfig,
    pub curves: CurveStats,
    pub trials: Vec<TrialResult>,
}

fn mean_std(columns: &[&[f64]], epoch: usize) -> (f64, f64) {
    let t = columns.len() as f64;
    let mean = columns.iter().map(|c| c[epoch]).sum::<f64>() / t;
    if columns.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = columns.iter().map(|c| (c[epoch] - mean).powi(2)).sum();
    (mean, (ss / (t - 1.0)).sqrt())
}

/// Elementwise mean and sample standard deviation of the trial curves.
pub fn summarize(trials: &[TrialResult]) -> Result<CurveStats> {
    let first = trials.first().ok_or_else(|| CoreError::Invalid("no trials to summarize".into()))?;
    let epochs = first.test_accuracy.len();
    if epochs == 0 || trials.iter().any(|t| t.test_accuracy.len() != epochs || t.test_loss.len() != epochs) {
        return Err(CoreError::Invalid("trial curves differ in length".into()));
    }
    let acc: Vec<&[f64]> = trials.iter().map(|t| t.test_accuracy.as_slice()).collect();
    let loss: Vec<&[f64]> = trials.iter().map(|t| t.test_loss.as_slice()).collect();
    let (mean_accuracy, std_accuracy): (Vec<f64>, Vec<f64>) = (0..epochs).map(|e| mean_std(&acc, e)).unzip();
    let (mean_loss, std_loss): (Vec<f64>, Vec<f64>) = (0..epochs).map(|e| mean_std(&loss, e)).unzip();
    let best_epoch = (0..epochs).fold(0, |b, e| if mean_accuracy[e] > mean_accuracy[b] { e } else { b });
    let best_single_trial = acc.iter().flat_map(|c| c.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    Ok(CurveStats {
        best_accuracy: mean_accuracy[best_epoch],
        best_std: std_accuracy[best_epoch],
        best_epoch,
        mean_accuracy,
        std_accuracy,
        mean_loss,
        std_loss,
        best_single_trial,
    })
}

/// Train `trials` models on independent random 80/20 splits and average
/// their test curves epoch by epoch. Results do not depend on `jobs`.
pub fn run_protocol(
    spec: &ModelSpec,
    corpus: &Corpus,
    trials: usize,
    hp: &Hyperparams,
    seed: u64,
    jobs: Option<usize>,
) -> Result<ProtocolReport> {
    if trials == 0 {
        return Err(CoreError::Invalid("need at least one trial".into()));
    }
    hp.validate()?;
    let results: Vec<TrialResult> = with_jobs(jobs, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let split = split_80_20(corpus.len(), derive_seed(seed, "split", t as u64))?;
                train_once(spec, corpus, &split, hp, derive_seed(seed, "trial", t as u64))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ProtocolReport {
        config: ReportConfig {
            arch: spec.arch.to_string(),
            formulation: corpus.formulation,
            subset: corpus.subset,
            hyperparams: hp.clone(),
            trials,
            seed,
            samples: corpus.len(),
            shuffled_labels: false,
        },
        curves: summarize(&results)?,
        trials: results,
    })
}
