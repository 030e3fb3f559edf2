use std::fs;
use std::path::{Path, PathBuf};

use super::ProtocolReport;
use crate::dataset::Subset;
use crate::encoding::Formulation;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub curves: Vec<PathBuf>,
    pub summary: PathBuf,
}

/// Data column names of the accuracy table, formulation-major.
pub fn table_columns() -> Vec<String> {
    Formulation::ALL
        .iter()
        .flat_map(|f| Subset::ALL.iter().map(move |s| format!("{f}/{s}")))
        .collect()
}

fn cell_text(r: &ProtocolReport) -> String {
    format!("{:.2} ({:.2})", 100.0 * r.curves.best_accuracy, 100.0 * r.curves.best_std)
}

fn curve_name(r: &ProtocolReport) -> String {
    let arch = r.config.arch.replace('+', "-");
    let suffix = if r.config.shuffled_labels { "_shuffled" } else { "" };
    format!("{arch}_{}_{}{suffix}.csv", r.config.formulation, r.config.subset)
}

/// Write the architecture × (formulation, subset) accuracy table, one
/// per-epoch curve file per report, and a JSON summary of everything.
/// Label-shuffled control runs appear in the curves and summary only.
pub fn emit_report(reports: &[ProtocolReport], dir: &Path) -> Result<ReportFiles> {
    if reports.is_empty() {
        return Err(CoreError::Invalid("no reports to emit".into()));
    }
    fs::create_dir_all(dir.join("curves"))?;

    let columns = table_columns();
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for r in reports.iter().filter(|r| !r.config.shuffled_labels) {
        let col = format!("{}/{}", r.config.formulation, r.config.subset);
        let c = columns.iter().position(|x| *x == col).expect("every formulation/subset pair is a column");
        let row = match rows.iter().position(|(a, _)| *a == r.config.arch) {
            Some(i) => i,
            None => {
                rows.push((r.config.arch.clone(), vec![String::new(); columns.len()]));
                rows.len() - 1
            }
        };
        rows[row].1[c] = cell_text(r);
    }
    let table = dir.join("table.csv");
    let mut w = csv::Writer::from_path(&table)?;
    w.write_record(std::iter::once("architecture".to_string()).chain(columns.iter().cloned()))?;
    for (arch, cells) in &rows {
        w.write_record(std::iter::once(arch.clone()).chain(cells.iter().cloned()))?;
    }
    w.flush()?;

    let mut curves = Vec::new();
    for r in reports {
        let path = dir.join("curves").join(curve_name(r));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["epoch", "mean_acc", "std_acc", "mean_loss", "std_loss"])?;
        let c = &r.curves;
        for e in 0..c.mean_accuracy.len() {
            w.write_record([
                (e + 1).to_string(),
                c.mean_accuracy[e].to_string(),
                c.std_accuracy[e].to_string(),
                c.mean_loss[e].to_string(),
                c.std_loss[e].to_string(),
            ])?;
        }
        w.flush()?;
        curves.push(path);
    }

    let summary = dir.join("summary.json");
    fs::write(&summary, serde_json::to_vec_pretty(reports)?)?;
    Ok(ReportFiles { table, curves, summary })
}

pub fn load_summary(path: &Path) -> Result<Vec<ProtocolReport>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{summarize, Hyperparams, ReportConfig, TrialResult};
    use aidetect_nn::Architecture;

    fn report(arch: &str, f: Formulation, s: Subset, curves: &[Vec<f64>]) -> ProtocolReport {
        let trials: Vec<TrialResult> = curves
            .iter()
            .enumerate()
            .map(|(i, c)| TrialResult {
                test_accuracy: c.clone(),
                test_loss: c.iter().map(|a| 1.0 - a + 0.1 * i as f64).collect(),
                train_accuracy: 0.99,
                seed: i as u64,
                split_seed: 7 + i as u64,
                norm_samples: 100,
            })
            .collect();
        ProtocolReport {
            config: ReportConfig {
                arch: arch.into(),
                formulation: f,
                subset: s,
                hyperparams: Hyperparams::tuned(Architecture::LENET5),
                trials: trials.len(),
                seed: 3,
                samples: 125,
                shuffled_labels: false,
            },
            curves: summarize(&trials).unwrap(),
            trials,
        }
    }

    #[test]
    fn single_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = report("lenet5", Formulation::Sharp, Subset::All, &[vec![0.5, 0.6, 0.75]]);
        let files = emit_report(std::slice::from_ref(&r), dir.path()).unwrap();

        let mut rd = csv::Reader::from_path(&files.table).unwrap();
        assert_eq!(rd.headers().unwrap().len(), 13);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 1);
        let filled: Vec<&str> = rows[0].iter().skip(1).filter(|c| !c.is_empty()).collect();
        assert_eq!(filled, vec!["75.00 (0.00)"]);

        let mut rd = csv::Reader::from_path(&files.curves[0]).unwrap();
        assert_eq!(rd.records().count(), 3);

        assert_eq!(load_summary(&files.summary).unwrap(), vec![r]);
    }

    #[test]
    fn table_has_twelve_data_columns_and_mean_std_cells() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![
            report("lenet5", Formulation::Sharp, Subset::X1, &[vec![0.6, 0.7], vec![0.8, 0.75]]),
            report("lenet5", Formulation::Cmc, Subset::All, &[vec![0.55, 0.65], vec![0.6, 0.62]]),
            report("sb-resnet18+lstm", Formulation::Cmc, Subset::All, &[vec![0.7, 0.9], vec![0.72, 0.8]]),
        ];
        let files = emit_report(&reports, dir.path()).unwrap();
        assert_eq!(table_columns().len(), 12);
        let mut rd = csv::Reader::from_path(&files.table).unwrap();
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        let pattern = |c: &str| {
            let (m, rest) = c.split_once(" (").unwrap();
            m.parse::<f64>().is_ok() && rest.strip_suffix(')').unwrap().parse::<f64>().is_ok()
        };
        for row in &rows {
            assert_eq!(row.len(), 13);
            assert!(row.iter().skip(1).filter(|c| !c.is_empty()).all(pattern));
        }
        assert_eq!(&rows[1][12], "85.00 (7.07)");
        assert!(files.curves.iter().any(|p| p.ends_with("sb-resnet18-lstm_cmc_all.csv")));
    }
}
