//! Three-class multinomial regression of factuality group on the
//! standardised account metrics, and the effect summaries built on it.

mod accuracy;
mod design;
mod effects;
mod model;

pub use accuracy::{accuracy_vs_shuffled, predict_class, prediction_accuracy, AccuracyTest};
pub use design::{
    build_design, column_names, expand_row, DesignMatrix, MetricRow, Standardization, Variable,
    INTERACTION_PAIRS, N_MAINS,
};
pub use effects::{
    ame, analytic_ame, bootstrap_ame, median_split_effects, quantile_sorted, AmeReport,
    BootstrapConfig, Effect, MedianSplitReport, SplitEffect, SplitHalf, VariableEffects, FD_STEP,
    MAX_DROPPED_SHARE,
};
pub use model::{fit, log_likelihood_and_gradient, predict_proba, FitConfig, MultinomialModel, MODELLED};
