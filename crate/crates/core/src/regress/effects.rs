use serde::{Deserialize, Serialize};

use super::design::{expand_row, DesignMatrix, Variable, N_MAINS};
use super::model::{fit, FitConfig, MultinomialModel};
use crate::credibility::Group;
use crate::{exec, seed, Error, Result};

/// Central-difference step in standardised units.
pub const FD_STEP: f64 = 1e-5;

/// Largest share of failed resampling replicates tolerated.
pub const MAX_DROPPED_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub estimate: f64,
    /// Percentile interval, present after bootstrapping.
    pub ci: Option<[f64; 2]>,
    /// Whether the interval excludes zero.
    pub significant: Option<bool>,
}

impl Effect {
    fn point(estimate: f64) -> Self {
        Effect {
            estimate,
            ci: None,
            significant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableEffects {
    pub variable: Variable,
    pub low: Effect,
    pub middle: Effect,
    pub high: Effect,
    pub low_minus_high: Effect,
}

impl VariableEffects {
    pub fn class(&self, g: Group) -> &Effect {
        match g {
            Group::Low => &self.low,
            Group::Middle => &self.middle,
            Group::High => &self.high,
        }
    }
}

/// Average change in class probabilities per one-sd increase of each metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmeReport {
    pub interactions: bool,
    pub effects: Vec<VariableEffects>,
    pub level: Option<f64>,
    pub replicates: usize,
    pub dropped: usize,
}

impl AmeReport {
    fn from_estimates(interactions: bool, est: &[[f64; 3]; N_MAINS]) -> Self {
        let effects = Variable::ALL
            .iter()
            .map(|&v| {
                let e = est[v.index()];
                VariableEffects {
                    variable: v,
                    low: Effect::point(e[0]),
                    middle: Effect::point(e[1]),
                    high: Effect::point(e[2]),
                    low_minus_high: Effect::point(e[0] - e[2]),
                }
            })
            .collect();
        AmeReport {
            interactions,
            effects,
            level: None,
            replicates: 0,
            dropped: 0,
        }
    }

    pub fn get(&self, v: Variable) -> &VariableEffects {
        &self.effects[v.index()]
    }

    pub fn estimate(&self, v: Variable, g: Group) -> f64 {
        self.get(v).class(g).estimate
    }
}

/// Derivative of the class probabilities with respect to main variable `k`
/// at the standardised point `mains`, interaction columns recomputed.
fn gradient_at(
    model: &MultinomialModel,
    mains: &[f64; N_MAINS],
    k: usize,
    buf: &mut Vec<f64>,
) -> [f64; 3] {
    let mut up = *mains;
    let mut down = *mains;
    up[k] += FD_STEP;
    down[k] -= FD_STEP;
    expand_row(&up, model.interactions, buf);
    let pu = model.proba_unchecked(buf);
    expand_row(&down, model.interactions, buf);
    let pd = model.proba_unchecked(buf);
    [0, 1, 2].map(|c| (pu[c] - pd[c]) / (2.0 * FD_STEP))
}

fn check_model(model: &MultinomialModel, design: &DesignMatrix) -> Result<()> {
    if !model.converged {
        return Err(Error::NotConverged);
    }
    if model.n_cols() != design.n_cols() || model.interactions != design.interactions {
        return Err(Error::Dimension {
            expected: model.n_cols(),
            got: design.n_cols(),
        });
    }
    Ok(())
}

fn ame_estimates(model: &MultinomialModel, design: &DesignMatrix) -> [[f64; 3]; N_MAINS] {
    let mut sums = [[0.0; 3]; N_MAINS];
    let mut buf = Vec::with_capacity(design.n_cols());
    for i in 0..design.n_rows() {
        let mains = design.mains(i);
        for (k, sum) in sums.iter_mut().enumerate() {
            let d = gradient_at(model, &mains, k, &mut buf);
            for c in 0..3 {
                sum[c] += d[c];
            }
        }
    }
    let n = design.n_rows().max(1) as f64;
    sums.map(|s| s.map(|x| x / n))
}

/// Finite-difference AMEs that move each metric together with every
/// interaction column containing it.
pub fn ame(model: &MultinomialModel, design: &DesignMatrix) -> Result<AmeReport> {
    check_model(model, design)?;
    Ok(AmeReport::from_estimates(design.interactions, &ame_estimates(model, design)))
}

/// Closed-form AMEs `mean[P_c (β_ck - Σ_j P_j β_jk)]`, valid only without
/// interaction columns.
pub fn analytic_ame(model: &MultinomialModel, design: &DesignMatrix) -> Result<AmeReport> {
    check_model(model, design)?;
    if design.interactions {
        return Err(Error::Design("closed-form AMEs need a model without interactions".into()));
    }
    let mut sums = [[0.0; 3]; N_MAINS];
    for row in design.rows() {
        let p = model.proba_unchecked(row);
        for (k, sum) in sums.iter_mut().enumerate() {
            let beta = [model.coefficients[0][k], 0.0, model.coefficients[1][k]];
            let mean_beta: f64 = (0..3).map(|j| p[j] * beta[j]).sum();
            for c in 0..3 {
                sum[c] += p[c] * (beta[c] - mean_beta);
            }
        }
    }
    let n = design.n_rows().max(1) as f64;
    Ok(AmeReport::from_estimates(false, &sums.map(|s| s.map(|x| x / n))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub master_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 500,
            level: 0.95,
            master_seed: 0,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn percentile_ci(mut values: Vec<f64>, level: f64) -> [f64; 2] {
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    [quantile_sorted(&values, alpha), quantile_sorted(&values, 1.0 - alpha)]
}

fn with_interval(effect: &mut Effect, values: Vec<f64>, level: f64) {
    let ci = percentile_ci(values, level);
    effect.significant = Some(ci[0] > 0.0 || ci[1] < 0.0);
    effect.ci = Some(ci);
}

/// Point AMEs plus percentile intervals from row-resampling refits.
pub fn bootstrap_ame(
    design: &DesignMatrix,
    labels: &[Group],
    fit_config: &FitConfig,
    config: &BootstrapConfig,
) -> Result<AmeReport> {
    if config.replicates < 100 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 100 replicates (got {})",
            config.replicates
        )));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Config(format!("level must be in (0, 1) (got {})", config.level)));
    }
    let model = fit(design, labels, fit_config)?;
    let mut report = ame(&model, design)?;
    let n = design.n_rows();
    let draws = exec::map_indexed(config.replicates, |b| {
        use rand::Rng;
        let mut rng = seed::rng(seed::derive(config.master_seed, b as u64));
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let sample = design.select(&idx);
        let sample_labels: Vec<Group> = idx.iter().map(|&i| labels[i]).collect();
        match fit(&sample, &sample_labels, fit_config) {
            Ok(m) if m.converged => Some(ame_estimates(&m, &sample)),
            _ => None,
        }
    });
    let kept: Vec<[[f64; 3]; N_MAINS]> = draws.iter().flatten().copied().collect();
    let dropped = config.replicates - kept.len();
    if dropped as f64 > MAX_DROPPED_SHARE * config.replicates as f64 {
        return Err(Error::TooManyDropped {
            dropped,
            total: config.replicates,
        });
    }
    for eff in &mut report.effects {
        let k = eff.variable.index();
        with_interval(&mut eff.low, kept.iter().map(|e| e[k][0]).collect(), config.level);
        with_interval(&mut eff.middle, kept.iter().map(|e| e[k][1]).collect(), config.level);
        with_interval(&mut eff.high, kept.iter().map(|e| e[k][2]).collect(), config.level);
        with_interval(
            &mut eff.low_minus_high,
            kept.iter().map(|e| e[k][0] - e[k][2]).collect(),
            config.level,
        );
    }
    report.level = Some(config.level);
    report.replicates = kept.len();
    report.dropped = dropped;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEffect {
    pub variable: Variable,
    /// Indexed like (Low, Middle, High).
    pub effects: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub size: usize,
    /// Componentwise median of the standardised mains within the half.
    pub representative: [f64; N_MAINS],
    pub effects: Vec<SplitEffect>,
}

impl SplitHalf {
    pub fn effect(&self, v: Variable, g: Group) -> Option<f64> {
        self.effects
            .iter()
            .find(|e| e.variable == v)
            .map(|e| e.effects[g.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSplitReport {
    pub split_variable: Variable,
    pub below: SplitHalf,
    pub above: SplitHalf,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Marginal effects of the other metrics at the median point of each half
/// of the sample, split on `split_variable`.
pub fn median_split_effects(
    model: &MultinomialModel,
    design: &DesignMatrix,
    split_variable: &str,
) -> Result<MedianSplitReport> {
    let split: Variable = split_variable.parse()?;
    if !design.column_names.iter().any(|c| c == split.as_str()) {
        return Err(Error::UnknownVariable(split_variable.to_string()));
    }
    check_model(model, design)?;
    let n = design.n_rows();
    if n < 2 {
        return Err(Error::Design("median split needs at least 2 rows".into()));
    }
    let k = split.index();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        design.row(a)[k]
            .total_cmp(&design.row(b)[k])
            .then_with(|| design.row_ids[a].cmp(&design.row_ids[b]))
    });
    let cut = n.div_ceil(2);
    let half = |rows: &[usize]| {
        let mut rep = [0.0; N_MAINS];
        for (j, r) in rep.iter_mut().enumerate() {
            let mut col: Vec<f64> = rows.iter().map(|&i| design.row(i)[j]).collect();
            *r = median(&mut col);
        }
        let mut buf = Vec::new();
        let effects = Variable::ALL
            .into_iter()
            .filter(|v| *v != split)
            .map(|v| SplitEffect {
                variable: v,
                effects: gradient_at(model, &rep, v.index(), &mut buf),
            })
            .collect();
        SplitHalf {
            size: rows.len(),
            representative: rep,
            effects,
        }
    };
    Ok(MedianSplitReport {
        split_variable: split,
        below: half(&order[..cut]),
        above: half(&order[cut..]),
    })
}
