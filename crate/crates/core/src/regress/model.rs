use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use crate::credibility::Group;
use crate::{Error, Result};

/// Non-reference classes in coefficient-row order.
pub const MODELLED: [Group; 2] = [Group::Low, Group::High];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Converged once the gradient max-norm drops below this.
    pub grad_tol: f64,
    /// L2 penalty on non-intercept coefficients.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 100,
            grad_tol: 1e-8,
            ridge: 0.0,
        }
    }
}

const REL_LL_TOL: f64 = 1e-12;

/// Three-class multinomial logit with Middle as the reference class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialModel {
    pub column_names: Vec<String>,
    pub interactions: bool,
    /// Low row then High row; each has one slope per column, intercept last.
    pub coefficients: [Vec<f64>; 2],
    pub converged: bool,
    pub final_log_likelihood: f64,
    pub iterations: usize,
}

impl MultinomialModel {
    /// Model with every coefficient zero, shaped for `design`.
    pub fn zeros(design: &DesignMatrix) -> Self {
        let q = design.n_cols() + 1;
        MultinomialModel {
            column_names: design.column_names.clone(),
            interactions: design.interactions,
            coefficients: [vec![0.0; q], vec![0.0; q]],
            converged: false,
            final_log_likelihood: f64::NAN,
            iterations: 0,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.coefficients[0].len() - 1
    }

    pub fn intercepts(&self) -> [f64; 2] {
        let p = self.n_cols();
        [self.coefficients[0][p], self.coefficients[1][p]]
    }

    /// Coefficients flattened as `[Low..., High...]`.
    pub fn parameters(&self) -> Vec<f64> {
        self.coefficients.concat()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) {
        let q = self.coefficients[0].len();
        self.coefficients[0].copy_from_slice(&theta[..q]);
        self.coefficients[1].copy_from_slice(&theta[q..2 * q]);
    }

    fn linear(&self, c: usize, row: &[f64]) -> f64 {
        let beta = &self.coefficients[c];
        let p = row.len();
        beta[p] + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
    }

    /// `(P(Low), P(Middle), P(High))` without a length check.
    pub(crate) fn proba_unchecked(&self, row: &[f64]) -> [f64; 3] {
        let eta_low = self.linear(0, row);
        let eta_high = self.linear(1, row);
        let m = eta_low.max(eta_high).max(0.0);
        let el = (eta_low - m).exp();
        let em = (-m).exp();
        let eh = (eta_high - m).exp();
        let total = el + em + eh;
        [el / total, em / total, eh / total]
    }
}

pub fn predict_proba(model: &MultinomialModel, row: &[f64]) -> Result<[f64; 3]> {
    if row.len() != model.n_cols() {
        return Err(Error::Dimension {
            expected: model.n_cols(),
            got: row.len(),
        });
    }
    Ok(model.proba_unchecked(row))
}

fn check_dims(model: &MultinomialModel, design: &DesignMatrix, labels: &[Group]) -> Result<()> {
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
    Ok(())
}

/// Log-likelihood and its exact gradient, laid out like
/// [`MultinomialModel::parameters`].
pub fn log_likelihood_and_gradient(
    model: &MultinomialModel,
    design: &DesignMatrix,
    labels: &[Group],
) -> Result<(f64, Vec<f64>)> {
    check_dims(model, design, labels)?;
    let q = model.n_cols() + 1;
    let mut ll = 0.0;
    let mut grad = vec![0.0; 2 * q];
    for (row, &y) in design.rows().zip(labels) {
        let prob = model.proba_unchecked(row);
        ll += prob[y.index()].ln();
        for (c, class) in MODELLED.iter().enumerate() {
            let resid = f64::from(u8::from(y == *class)) - prob[class.index()];
            let g = &mut grad[c * q..(c + 1) * q];
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += resid * x;
            }
            g[q - 1] += resid;
        }
    }
    Ok((ll, grad))
}

/// Penalised log-likelihood, gradient and negated Hessian.
fn objective(
    model: &MultinomialModel,
    design: &DesignMatrix,
    labels: &[Group],
    ridge: f64,
    want_hessian: bool,
) -> (f64, Vec<f64>, Vec<f64>) {
    let q = model.n_cols() + 1;
    let dim = 2 * q;
    let mut ll = 0.0;
    let mut grad = vec![0.0; dim];
    let mut neg_hess = if want_hessian { vec![0.0; dim * dim] } else { Vec::new() };
    let mut xt = vec![0.0; q];
    for (row, &y) in design.rows().zip(labels) {
        xt[..q - 1].copy_from_slice(row);
        xt[q - 1] = 1.0;
        let prob = model.proba_unchecked(row);
        ll += prob[y.index()].ln();
        let pm = [prob[0], prob[2]];
        for c in 0..2 {
            let resid = f64::from(u8::from(y == MODELLED[c])) - pm[c];
            for j in 0..q {
                grad[c * q + j] += resid * xt[j];
            }
        }
        if want_hessian {
            for c in 0..2 {
                for d in c..2 {
                    let w = if c == d { pm[c] * (1.0 - pm[c]) } else { -pm[c] * pm[d] };
                    for j in 0..q {
                        let wx = w * xt[j];
                        let base = (c * q + j) * dim + d * q;
                        for k in 0..q {
                            neg_hess[base + k] += wx * xt[k];
                        }
                    }
                }
            }
        }
    }
    if want_hessian {
        // fill the lower block from the upper one
        for j in 0..q {
            for k in 0..q {
                neg_hess[(q + j) * dim + k] = neg_hess[k * dim + q + j];
            }
        }
    }
    if ridge > 0.0 {
        for c in 0..2 {
            for j in 0..q - 1 {
                let b = model.coefficients[c][j];
                ll -= 0.5 * ridge * b * b;
                grad[c * q + j] -= ridge * b;
                if want_hessian {
                    neg_hess[(c * q + j) * dim + c * q + j] += ridge;
                }
            }
        }
    }
    (ll, grad, neg_hess)
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, `n x n`).
/// Returns `None` when `a` is not numerically positive definite.
fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

fn class_counts(labels: &[Group]) -> [usize; 3] {
    let mut counts = [0; 3];
    for g in labels {
        counts[g.index()] += 1;
    }
    counts
}

/// Maximum-likelihood fit by damped Newton iteration.
pub fn fit(design: &DesignMatrix, labels: &[Group], config: &FitConfig) -> Result<MultinomialModel> {
    let mut model = MultinomialModel::zeros(design);
    check_dims(&model, design, labels)?;
    let counts = class_counts(labels);
    for g in Group::ALL {
        if counts[g.index()] == 0 {
            return Err(Error::MissingClass(g.as_str()));
        }
    }
    let q = design.n_cols() + 1;
    let dim = 2 * q;
    // start from the intercept-only optimum
    let middle = counts[Group::Middle.index()] as f64;
    model.coefficients[0][q - 1] = (counts[Group::Low.index()] as f64 / middle).ln();
    model.coefficients[1][q - 1] = (counts[Group::High.index()] as f64 / middle).ln();

    let (mut ll, mut grad, mut neg_hess) = objective(&model, design, labels, config.ridge, true);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        if max_abs(&grad) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let step = newton_step(&neg_hess, dim, &grad);
        let theta = model.parameters();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + scale * s).collect();
            let mut candidate = model.clone();
            candidate.set_parameters(&trial);
            let (trial_ll, _, _) = objective(&candidate, design, labels, config.ridge, false);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs() {
                accepted = Some((candidate, trial_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            break;
        };
        let rel_change = (next_ll - ll).abs() / ll.abs().max(1e-300);
        model = next;
        let (new_ll, new_grad, new_hess) = objective(&model, design, labels, config.ridge, true);
        ll = new_ll;
        grad = new_grad;
        neg_hess = new_hess;
        if max_abs(&grad) < config.grad_tol || rel_change < REL_LL_TOL {
            converged = true;
            break;
        }
    }
    model.converged = converged;
    model.iterations = iterations;
    model.final_log_likelihood = ll;
    Ok(model)
}

fn newton_step(neg_hess: &[f64], dim: usize, grad: &[f64]) -> Vec<f64> {
    if let Some(s) = cholesky_solve(neg_hess, dim, grad) {
        return s;
    }
    // Levenberg-style damping when the Hessian is singular (e.g. separable data).
    let trace: f64 = (0..dim).map(|i| neg_hess[i * dim + i]).sum::<f64>() / dim as f64;
    let mut jitter = 1e-10 * trace.max(1e-10);
    loop {
        let mut damped = neg_hess.to_vec();
        for i in 0..dim {
            damped[i * dim + i] += jitter;
        }
        if let Some(s) = cholesky_solve(&damped, dim, grad) {
            return s;
        }
        jitter *= 10.0;
        if !jitter.is_finite() {
            return grad.to_vec();
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::design::DesignMatrix;

    fn intercept_only(low: f64, high: f64) -> MultinomialModel {
        let d = DesignMatrix::from_rows(vec![vec![0.0; 4]], false).unwrap();
        let mut m = MultinomialModel::zeros(&d);
        m.coefficients[0][4] = low;
        m.coefficients[1][4] = high;
        m
    }

    #[test]
    fn proba_examples() {
        let row = [0.3, -1.0, 2.0, 0.0];
        let p = predict_proba(&intercept_only(0.0, 0.0), &row).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = predict_proba(&intercept_only(2f64.ln(), 0.0), &row).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
        assert!((p[2] - 0.25).abs() < 1e-15);
        assert!(matches!(
            predict_proba(&intercept_only(0.0, 0.0), &[1.0, 2.0]),
            Err(Error::Dimension { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn extreme_linear_predictors_stay_finite() {
        let p = predict_proba(&intercept_only(800.0, -800.0), &[0.0; 4]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_give_uniform_likelihood() {
        let d = DesignMatrix::from_rows(vec![vec![0.0; 4]; 9], false).unwrap();
        let labels = [Group::Low, Group::Middle, Group::High].repeat(3);
        let (ll, g) = log_likelihood_and_gradient(&MultinomialModel::zeros(&d), &d, &labels).unwrap();
        assert!((ll - 9.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn intercept_only_mle_is_log_share_ratio() {
        // Features carry no information: all rows identical.
        let d = DesignMatrix::from_rows(vec![vec![0.0; 4]; 10], false).unwrap();
        let mut labels = vec![Group::Low; 2];
        labels.extend([Group::Middle; 5]);
        labels.extend([Group::High; 3]);
        let m = fit(&d, &labels, &FitConfig { ridge: 1e-6, ..FitConfig::default() }).unwrap();
        assert!(m.converged);
        let [low, high] = m.intercepts();
        assert!((low - (2.0f64 / 5.0).ln()).abs() < 1e-6);
        assert!((high - (3.0f64 / 5.0).ln()).abs() < 1e-6);
    }

    #[test]
    fn missing_class_is_an_error() {
        let d = DesignMatrix::from_rows(vec![vec![0.0; 4]; 4], false).unwrap();
        let labels = [Group::Low, Group::Middle, Group::Low, Group::Middle];
        assert!(matches!(
            fit(&d, &labels, &FitConfig::default()),
            Err(Error::MissingClass("High"))
        ));
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 / 7.0).sin(), (i % 5) as f64, (i % 3) as f64, i as f64 / 30.0]).collect();
        let d = DesignMatrix::from_rows(rows, false).unwrap();
        let labels: Vec<Group> = (0..30).map(|i| Group::ALL[(i * 7) % 3]).collect();
        let m = fit(&d, &labels, &FitConfig { max_iter: 1, ..FitConfig::default() }).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    #[test]
    fn cholesky_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, 2, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }
}
