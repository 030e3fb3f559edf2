use std::cmp::Ordering;

use aidetect_nn::{Architecture, ModelSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{model_spec, train_once, with_jobs, Hyperparams};
use crate::dataset::{kfold, Corpus, SplitSpec};
use crate::error::{CoreError, Result};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpGrid {
    pub lrs: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub schedulers: Vec<bool>,
    /// Swept after the other settings are fixed, for fusion models only.
    pub dropouts: Vec<f64>,
}

impl Default for HpGrid {
    fn default() -> Self {
        Self {
            lrs: vec![1e-5, 1e-4, 1e-3],
            weight_decays: vec![0.0, 5e-6, 5e-5],
            schedulers: vec![true, false],
            dropouts: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

impl HpGrid {
    pub fn cells(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &weight_decay in &self.weight_decays {
            for &lr in &self.lrs {
                for &scheduler in &self.schedulers {
                    out.push(Hyperparams { lr, weight_decay, scheduler, ..base.clone() });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub hyperparams: Hyperparams,
    /// Best-epoch validation accuracy of each fold.
    pub fold_best: Vec<f64>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub cells: Vec<CellScore>,
    pub dropout_cells: Vec<CellScore>,
    pub runs: usize,
}

/// Higher score first; ties go to lower lr, lower weight decay, scheduler
/// off, then lower dropout.
fn preference(a: &CellScore, b: &CellScore) -> Ordering {
    let (x, y) = (&a.hyperparams, &b.hyperparams);
    b.score
        .total_cmp(&a.score)
        .then(x.lr.total_cmp(&y.lr))
        .then(x.weight_decay.total_cmp(&y.weight_decay))
        .then(x.scheduler.cmp(&y.scheduler))
        .then(x.dropout.total_cmp(&y.dropout))
}

fn score_cells(
    arch: Architecture,
    corpus: &Corpus,
    cells: &[Hyperparams],
    folds: &[SplitSpec],
    seed: u64,
) -> Result<Vec<CellScore>> {
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let bests: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let hp = &cells[c];
            let spec: ModelSpec = model_spec(arch, corpus, hp);
            let r = train_once(&spec, corpus, &folds[f], hp, derive_seed(seed, "grid-fold", f as u64))?;
            Ok(r.test_accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, hp)| {
            let fold_best = bests[c * folds.len()..(c + 1) * folds.len()].to_vec();
            let score = fold_best.iter().sum::<f64>() / fold_best.len() as f64;
            CellScore { hyperparams: hp.clone(), fold_best, score }
        })
        .collect())
}

/// Score every grid cell by its mean best-epoch accuracy over `k` folds and
/// return the preferred one. Fusion models then get a dropout sweep with the
/// other settings fixed. Every cell sees the same folds and initial weights.
pub fn grid_search(
    arch: Architecture,
    corpus: &Corpus,
    grid: &HpGrid,
    base: &Hyperparams,
    k: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<GridResult> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(CoreError::EmptyGrid);
    }
    for c in &cells {
        c.validate()?;
    }
    let folds = kfold(corpus.len(), k, derive_seed(seed, "folds", 0))?;
    with_jobs(jobs, || {
        let scored = score_cells(arch, corpus, &cells, &folds, seed)?;
        let mut runs = cells.len() * k;
        let mut ranked = scored.clone();
        ranked.sort_by(preference);
        let mut best = ranked[0].hyperparams.clone();

        let mut dropout_cells = Vec::new();
        if arch.is_fusion() && !grid.dropouts.is_empty() {
            let sweep: Vec<Hyperparams> = grid.dropouts.iter().map(|&d| Hyperparams { dropout: d, ..best.clone() }).collect();
            for c in &sweep {
                c.validate()?;
            }
            dropout_cells = score_cells(arch, corpus, &sweep, &folds, seed)?;
            runs += sweep.len() * k;
            let mut ranked = dropout_cells.clone();
            ranked.sort_by(preference);
            best = ranked[0].hyperparams.clone();
        }
        Ok(GridResult { best, cells: scored, dropout_cells, runs })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Formulation;
    use crate::experiment::tests::toy_corpus;

    fn cell(lr: f64, wd: f64, sched: bool, score: f64) -> CellScore {
        let hp = Hyperparams { lr, weight_decay: wd, scheduler: sched, ..Hyperparams::tuned(Architecture::LENET5) };
        CellScore { hyperparams: hp, fold_best: vec![score], score }
    }

    #[test]
    fn tie_break_order() {
        let mut v = vec![
            cell(1e-3, 0.0, false, 0.8),
            cell(1e-4, 5e-6, true, 0.8),
            cell(1e-4, 5e-6, false, 0.8),
            cell(1e-4, 0.0, true, 0.8),
            cell(1e-5, 0.0, false, 0.7),
        ];
        v.sort_by(preference);
        let h = &v[0].hyperparams;
        assert_eq!((h.lr, h.weight_decay, h.scheduler), (1e-4, 0.0, true));
        let h = &v[1].hyperparams;
        assert_eq!((h.lr, h.weight_decay, h.scheduler), (1e-4, 5e-6, false));
        assert_eq!(v[4].score, 0.7);
    }

    #[test]
    fn default_grid_has_eighteen_cells_and_runs_each_fold() {
        let base = Hyperparams { epochs: 1, ..Hyperparams::tuned(Architecture::LENET5) };
        assert_eq!(HpGrid::default().cells(&base).len(), 18);
        let corpus = toy_corpus(20, Formulation::Sharp, 1);
        let r = grid_search(Architecture::LENET5, &corpus, &HpGrid::default(), &base, 10, 1, Some(1)).unwrap();
        assert_eq!(r.runs, 180);
        assert_eq!(r.cells.len(), 18);
        assert!(r.cells.iter().all(|c| c.fold_best.len() == 10));
        assert!(r.dropout_cells.is_empty());
    }

    #[test]
    fn single_cell_and_empty_grid() {
        let base = Hyperparams { epochs: 1, ..Hyperparams::tuned(Architecture::LENET5) };
        let grid = HpGrid { lrs: vec![1e-3], weight_decays: vec![0.0], schedulers: vec![false], dropouts: vec![] };
        let corpus = toy_corpus(12, Formulation::Sharp, 2);
        let r = grid_search(Architecture::LENET5, &corpus, &grid, &base, 3, 1, Some(1)).unwrap();
        assert_eq!((r.best.lr, r.runs), (1e-3, 3));
        let empty = HpGrid { lrs: vec![], ..grid };
        assert!(matches!(
            grid_search(Architecture::LENET5, &corpus, &empty, &base, 3, 1, Some(1)),
            Err(CoreError::EmptyGrid)
        ));
    }

    #[test]
    fn planted_optimum_wins() {
        // A learning rate too small to move the weights cannot compete with a
        // workable one on an easy problem.
        let base = Hyperparams { epochs: 8, ..Hyperparams::tuned(Architecture::LENET5) };
        let grid = HpGrid { lrs: vec![1e-9, 1e-3], weight_decays: vec![0.0], schedulers: vec![false], dropouts: vec![] };
        let corpus = toy_corpus(60, Formulation::Sharp, 3);
        let r = grid_search(Architecture::LENET5, &corpus, &grid, &base, 3, 4, Some(1)).unwrap();
        assert_eq!(r.best.lr, 1e-3);
        assert!(r.cells[1].score > 0.95, "{:?}", r.cells);
    }

    #[test]
    fn fusion_sweeps_dropout() {
        let base = Hyperparams { epochs: 1, ..Hyperparams::tuned(Architecture::SB_RESNET18_LSTM) };
        let grid = HpGrid { lrs: vec![1e-3], weight_decays: vec![0.0], schedulers: vec![true], dropouts: vec![0.0, 0.5] };
        let corpus = toy_corpus(12, Formulation::Cmc, 5);
        let r = grid_search(Architecture::SB_RESNET18_LSTM, &corpus, &grid, &base, 2, 1, Some(1)).unwrap();
        assert_eq!(r.dropout_cells.len(), 2);
        assert_eq!(r.runs, 2 + 4);
    }
}
