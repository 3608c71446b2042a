use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::effects::MAX_DROPPED_SHARE;
use super::model::{fit, FitConfig, MultinomialModel};
use crate::credibility::Group;
use crate::stats::{empirical_p, shuffle_ensemble, Direction, ShuffleEnsemble};
use crate::{Error, Result};

/// Most probable class; ties go to the earlier of (Low, Middle, High).
pub fn predict_class(model: &MultinomialModel, row: &[f64]) -> Group {
    let p = model.proba_unchecked(row);
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    Group::ALL[best]
}

/// In-sample share of rows whose most probable class is the label.
pub fn prediction_accuracy(model: &MultinomialModel, design: &DesignMatrix, labels: &[Group]) -> Result<f64> {
    if design.n_cols() != model.n_cols() {
        return Err(Error::Dimension {
            expected: model.n_cols(),
            got: design.n_cols(),
        });
    }
    if labels.len() != design.n_rows() {
        return Err(Error::Dimension {
            expected: design.n_rows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = design
        .rows()
        .zip(labels)
        .filter(|(row, y)| predict_class(model, row) == **y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTest {
    pub observed: f64,
    /// Accuracies of refits on label-shuffled data; failed refits are left out.
    pub ensemble: ShuffleEnsemble,
    pub dropped: usize,
    pub empirical_p: f64,
}

/// Compares in-sample accuracy with refits on label-shuffled copies of the
/// data.
pub fn accuracy_vs_shuffled(
    design: &DesignMatrix,
    labels: &[Group],
    fit_config: &FitConfig,
    n_shuffles: usize,
    master_seed: u64,
) -> Result<AccuracyTest> {
    let model = fit(design, labels, fit_config)?;
    if !model.converged {
        return Err(Error::NotConverged);
    }
    let observed = prediction_accuracy(&model, design, labels)?;
    let dataset: Vec<(usize, Group)> = labels.iter().copied().enumerate().collect();
    let raw = shuffle_ensemble(&dataset, n_shuffles, master_seed, |shuffled| {
        let permuted: Vec<Group> = shuffled.iter().map(|(_, g)| *g).collect();
        match fit(design, &permuted, fit_config) {
            Ok(m) if m.converged => prediction_accuracy(&m, design, &permuted).unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    })?;
    let statistics: Vec<f64> = raw.statistics.into_iter().filter(|s| !s.is_nan()).collect();
    let dropped = n_shuffles - statistics.len();
    if dropped as f64 > MAX_DROPPED_SHARE * n_shuffles as f64 {
        return Err(Error::TooManyDropped {
            dropped,
            total: n_shuffles,
        });
    }
    let ensemble = ShuffleEnsemble {
        master_seed,
        count: statistics.len(),
        statistics,
    };
    let p = empirical_p(observed, &ensemble, Direction::FirstGreater);
    Ok(AccuracyTest {
        observed,
        ensemble,
        dropped,
        empirical_p: p,
    })
}
