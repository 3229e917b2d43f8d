//! Hyper-parameter grids with validation-only model selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalResult;
use crate::pipeline::Variant;

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, RunOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config_index: usize,
    pub dataset: String,
    pub pred_len: usize,
    pub variant: Variant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda_k: f64,
    pub lambda_j: f64,
    pub val_mse: f64,
    pub test: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub entries: Vec<GridEntry>,
    /// Index into `entries` of the winner per (dataset, horizon).
    pub selected: Vec<usize>,
}

/// Index of the smallest validation error; earlier entries win ties.
pub fn select_by_validation(val_mse: &[f64]) -> Option<usize> {
    val_mse
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// Groups finished runs by (dataset, horizon) and keeps the best-validation
/// entry of each group.
pub fn collate(outcomes: &[(usize, RunOutcome)]) -> GridReport {
    let mut entries = Vec::new();
    for (index, outcome) in outcomes {
        let c = &outcome.report.config;
        for h in &outcome.report.horizons {
            entries.push(GridEntry {
                config_index: *index,
                dataset: c.name(),
                pred_len: h.pred_len,
                variant: c.variant,
                learning_rate: c.learning_rate,
                batch_size: c.batch_size,
                lambda_k: c.lambda_k,
                lambda_j: c.lambda_j,
                val_mse: h.train.best_val_mse,
                test: h.test,
            });
        }
    }
    let mut groups: Vec<(String, usize)> = entries.iter().map(|e| (e.dataset.clone(), e.pred_len)).collect();
    groups.sort();
    groups.dedup();
    let selected = groups
        .iter()
        .filter_map(|(dataset, pred_len)| {
            let members: Vec<usize> = (0..entries.len())
                .filter(|&i| &entries[i].dataset == dataset && entries[i].pred_len == *pred_len)
                .collect();
            let vals: Vec<f64> = members.iter().map(|&i| entries[i].val_mse).collect();
            select_by_validation(&vals).map(|k| members[k])
        })
        .collect();
    GridReport { entries, selected }
}

/// Runs every config; a run that diverges is skipped rather than fatal.
pub fn grid_search(configs: &[ExperimentConfig]) -> Result<GridReport> {
    if configs.is_empty() {
        return Err(Error::Config("grid search needs at least one config".into()));
    }
    let mut outcomes = Vec::new();
    for (i, config) in configs.iter().enumerate() {
        match run_experiment(config) {
            Ok(o) => outcomes.push((i, o)),
            Err(Error::TrainingAborted { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(collate(&outcomes))
}

/// Expands `base` over the cross product of the given lists.
pub fn expand(
    base: &ExperimentConfig,
    learning_rates: &[f64],
    batch_sizes: &[usize],
    lambda_ks: &[f64],
    lambda_js: &[f64],
) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &learning_rate in learning_rates {
        for &batch_size in batch_sizes {
            for &lambda_k in lambda_ks {
                for &lambda_j in lambda_js {
                    out.push(ExperimentConfig {
                        learning_rate,
                        batch_size,
                        lambda_k,
                        lambda_j,
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}

/// CSV rows of regularizer weights against validation and test MSE.
pub fn regularization_table(report: &GridReport) -> String {
    let mut out = String::from("dataset,pred_len,lambda_k,lambda_j,learning_rate,batch_size,val_mse,test_mse,selected\n");
    for (i, e) in report.entries.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.dataset,
            e.pred_len,
            e.lambda_k,
            e.lambda_j,
            e.learning_rate,
            e.batch_size,
            e.val_mse,
            e.test.mse,
            report.selected.contains(&i)
        ));
    }
    out
}
