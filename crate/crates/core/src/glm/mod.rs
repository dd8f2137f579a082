mod link;
mod lpm;
mod rank;

pub use link::{log_norm_cdf, logistic, mills, norm_cdf, norm_pdf, norm_quantile, Link};
pub use lpm::{demean, fe_lpm};
pub use rank::{dependent_sets, RANK_TOL};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per accumulation block. Blocks are reduced left to right, so sums do
/// not depend on how many threads evaluated them.
pub const BLOCK: usize = 2048;

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub nrows: usize,
    pub ncols: usize,
    /// Row-major.
    pub data: Vec<f64>,
    pub clusters: Vec<u32>,
    pub weights: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let ncols = names.len();
        if ncols == 0 || data.len() % ncols != 0 {
            return Err(Error::Validation(format!(
                "design data of length {} does not fit {} columns",
                data.len(),
                ncols
            )));
        }
        let nrows = data.len() / ncols;
        Ok(DesignMatrix { names, nrows, ncols, data, clusters: (0..nrows as u32).collect(), weights: vec![1.0; nrows] })
    }

    pub fn with_clusters(mut self, clusters: Vec<u32>) -> Self {
        self.clusters = clusters;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.len() != self.nrows || self.weights.len() != self.nrows {
            return Err(Error::Validation("cluster or weight vector length differs from row count".into()));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at row {}, column `{}`",
                pos / self.ncols,
                self.names[pos % self.ncols]
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation("weights must be finite and nonnegative".into()));
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Validation("all weights are zero".into()));
        }
        Ok(())
    }

    pub fn check_rank(&self) -> Result<()> {
        let sets = dependent_sets(self);
        if sets.is_empty() {
            Ok(())
        } else {
            Err(Error::Collinear {
                sets: sets.into_iter().map(|s| s.into_iter().map(|j| self.names[j].clone()).collect()).collect(),
            })
        }
    }

    fn intercept_column(&self) -> Option<usize> {
        (0..self.ncols).find(|&j| (0..self.nrows).all(|i| self.get(i, j) == 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct Convergence {
    pub iterations: usize,
    pub grad_max: f64,
    pub step_underflow: bool,
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub link: Link,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub loglik: Option<f64>,
    pub loglik_null: Option<f64>,
    pub pseudo_r2: Option<f64>,
    pub nobs: usize,
    pub nclusters: usize,
    pub convergence: Convergence,
    pub warnings: Vec<String>,
}

impl FittedModel {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.coef[j])
    }

    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.se(j))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    pub tol: f64,
    pub small_sample: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 50, max_halvings: 30, tol: 1e-8, small_sample: false }
    }
}

struct Block {
    ll: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn eta_of(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(a, b)| a * b).sum()
}

fn check_inputs(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Result<()> {
    if y.len() != x.nrows || beta.len() != x.ncols {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} rows, {} responses, {} columns, {} coefficients",
            x.nrows,
            y.len(),
            x.ncols,
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Weighted log-likelihood, gradient and (optionally) the negative Hessian,
/// packed upper-triangular.
fn accumulate(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link, want_hess: bool) -> Block {
    let p = x.ncols;
    let blocks: Vec<Block> = (0..x.nrows)
        .into_par_iter()
        .step_by(BLOCK)
        .map(|start| {
            let end = (start + BLOCK).min(x.nrows);
            let mut b = Block {
                ll: 0.0,
                grad: vec![0.0; p],
                hess: if want_hess { vec![0.0; p * (p + 1) / 2] } else { Vec::new() },
            };
            for i in start..end {
                let w = x.weights[i];
                if w == 0.0 {
                    continue;
                }
                let row = x.row(i);
                let (ll, s, h) = link.obs_terms(y[i], eta_of(row, beta));
                b.ll += w * ll;
                let ws = w * s;
                for (g, v) in b.grad.iter_mut().zip(row) {
                    *g += ws * v;
                }
                if want_hess {
                    let wh = w * h;
                    let mut k = 0;
                    for a in 0..p {
                        let ra = wh * row[a];
                        for c in a..p {
                            b.hess[k] += ra * row[c];
                            k += 1;
                        }
                    }
                }
            }
            b
        })
        .collect();
    let mut out =
        Block { ll: 0.0, grad: vec![0.0; p], hess: if want_hess { vec![0.0; p * (p + 1) / 2] } else { Vec::new() } };
    for b in blocks {
        out.ll += b.ll;
        out.grad.iter_mut().zip(&b.grad).for_each(|(a, v)| *a += v);
        out.hess.iter_mut().zip(&b.hess).for_each(|(a, v)| *a += v);
    }
    out
}

fn unpack(p: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for a in 0..p {
        for c in a..p {
            m[(a, c)] = packed[k];
            m[(c, a)] = packed[k];
            k += 1;
        }
    }
    m
}

pub fn loglik_and_gradient(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link) -> Result<(f64, Vec<f64>)> {
    check_inputs(x, y, beta)?;
    let b = accumulate(x, y, beta, link, false);
    Ok((b.ll, b.grad))
}

/// Observed Hessian of the weighted log-likelihood (negative definite at an interior optimum).
pub fn hessian(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link) -> Result<DMatrix<f64>> {
    check_inputs(x, y, beta)?;
    let b = accumulate(x, y, beta, link, true);
    Ok(-unpack(x.ncols, &b.hess))
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => m.clone().try_inverse()?,
    };
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, e| m.max(e.abs()))
}

fn check_binary(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Validation(format!("response at row {i} is {} (must be 0 or 1)", y[i])));
    }
    Ok(())
}

/// Flags binary regressors whose indicator cell has no variation in y.
fn separation_check(x: &DesignMatrix, y: &[f64], intercept: Option<usize>) -> Result<()> {
    for j in 0..x.ncols {
        if Some(j) == intercept {
            continue;
        }
        let mut binary = true;
        let mut cells = [[0usize; 2]; 2];
        for i in 0..x.nrows {
            if x.weights[i] == 0.0 {
                continue;
            }
            let v = x.get(i, j);
            if v != 0.0 && v != 1.0 {
                binary = false;
                break;
            }
            cells[v as usize][y[i] as usize] += 1;
        }
        if !binary {
            continue;
        }
        let degenerate = |c: [usize; 2]| c[0] + c[1] > 0 && (c[0] == 0 || c[1] == 0);
        if degenerate(cells[1]) || (intercept.is_some() && degenerate(cells[0])) {
            return Err(Error::Separation { column: x.names[j].clone() });
        }
    }
    Ok(())
}

/// Weighted maximum likelihood for a binary response by Newton-Raphson with
/// step halving, followed by the cluster-robust covariance.
pub fn fit_glm(x: &DesignMatrix, y: &[f64], link: Link, opts: &FitOptions) -> Result<FittedModel> {
    if link == Link::Identity {
        return Err(Error::Config("fit_glm needs a probit or logit link".into()));
    }
    x.validate()?;
    if y.len() != x.nrows {
        return Err(Error::Validation("response length differs from row count".into()));
    }
    check_binary(y)?;
    x.check_rank()?;
    let intercept = x.intercept_column();
    separation_check(x, y, intercept)?;

    let wsum: f64 = x.weights.iter().sum();
    let ybar = x.weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / wsum;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(Error::Separation { column: "(response has no variation)".into() });
    }
    let mut beta = vec![0.0; x.ncols];
    if let Some(j) = intercept {
        beta[j] = link.quantile(ybar);
    }

    let p = x.ncols;
    let mut trace = Vec::new();
    let mut step_underflow = false;
    let mut iterations = 0;
    let mut cur = accumulate(x, y, &beta, link, true);
    trace.push(cur.ll);
    loop {
        let gmax = max_abs(&cur.grad);
        if gmax < opts.tol || step_underflow {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, grad_max: gmax, trace });
        }
        iterations += 1;
        let neg_h = unpack(p, &cur.hess);
        let delta = solve_spd(&neg_h, &DVector::from_column_slice(&cur.grad)).ok_or(Error::SingularHessian)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let ll = accumulate(x, y, &cand, link, false).ll;
            if ll.is_finite() && ll >= cur.ll - 1e-12 * cur.ll.abs() {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(b) => {
                beta = b;
                cur = accumulate(x, y, &beta, link, true);
                trace.push(cur.ll);
            }
            None => step_underflow = true,
        }
        if let Some(j) = diverging(&beta, link) {
            return Err(Error::Separation { column: x.names[j].clone() });
        }
    }

    let neg_h = unpack(p, &cur.hess);
    let cov = sandwich_from(x, y, &beta, link, &neg_h, opts.small_sample)?;
    let ll0 = null_loglik(x, y, ybar);
    let mut warnings = Vec::new();
    if link == Link::Probit {
        let big = (0..x.nrows).filter(|&i| x.weights[i] > 0.0 && eta_of(x.row(i), &beta).abs() > 8.0).count();
        if big > 0 {
            warnings.push(format!("{big} rows have |linear predictor| > 8 at the optimum"));
        }
    }
    if step_underflow {
        warnings.push(format!("step size underflow with max |gradient| {:e}", max_abs(&cur.grad)));
    }
    Ok(FittedModel {
        link,
        names: x.names.clone(),
        coef: beta,
        cov,
        loglik: Some(cur.ll),
        loglik_null: Some(ll0),
        pseudo_r2: (ll0 < 0.0).then(|| 1.0 - cur.ll / ll0),
        nobs: x.weights.iter().filter(|w| **w > 0.0).count(),
        nclusters: count_clusters(x),
        convergence: Convergence { iterations, grad_max: max_abs(&cur.grad), step_underflow, loglik_trace: trace },
        warnings,
    })
}

fn diverging(beta: &[f64], link: Link) -> Option<usize> {
    let limit = match link {
        Link::Probit => 25.0,
        _ => 60.0,
    };
    let (j, v) = beta.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    (v.abs() > limit).then_some(j)
}

fn null_loglik(x: &DesignMatrix, y: &[f64], ybar: f64) -> f64 {
    let (l1, l0) = (ybar.ln(), (1.0 - ybar).ln());
    x.weights.iter().zip(y).map(|(w, v)| w * if *v == 1.0 { l1 } else { l0 }).sum()
}

fn count_clusters(x: &DesignMatrix) -> usize {
    let mut ids: Vec<u32> = (0..x.nrows).filter(|&i| x.weights[i] > 0.0).map(|i| x.clusters[i]).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Summed weighted scores per cluster, clusters in ascending id order.
pub fn cluster_scores(x: &DesignMatrix, y: &[f64], beta: &[f64], link: Link) -> Vec<Vec<f64>> {
    let p = x.ncols;
    let mut order: Vec<usize> = (0..x.nrows).collect();
    order.sort_by_key(|&i| (x.clusters[i], i));
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut last = None;
    for i in order {
        if last != Some(x.clusters[i]) {
            out.push(vec![0.0; p]);
            last = Some(x.clusters[i]);
        }
        let w = x.weights[i];
        if w == 0.0 {
            continue;
        }
        let row = x.row(i);
        let eta = eta_of(row, beta);
        let s = match link {
            Link::Identity => y[i] - eta,
            _ => link.obs_terms(y[i], eta).1,
        };
        let acc = out.last_mut().unwrap();
        for (a, v) in acc.iter_mut().zip(row) {
            *a += w * s * v;
        }
    }
    out
}

pub(crate) fn meat(scores: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(p, p);
    for s in scores {
        for a in 0..p {
            if s[a] == 0.0 {
                continue;
            }
            for c in 0..p {
                b[(a, c)] += s[a] * s[c];
            }
        }
    }
    b
}

fn sandwich_from(
    x: &DesignMatrix,
    y: &[f64],
    beta: &[f64],
    link: Link,
    neg_h: &DMatrix<f64>,
    small_sample: bool,
) -> Result<DMatrix<f64>> {
    let hinv = invert(neg_h).ok_or(Error::SingularHessian)?;
    let scores = cluster_scores(x, y, beta, link);
    let mut b = meat(&scores, x.ncols);
    if small_sample {
        let g = count_clusters(x) as f64;
        if g > 1.0 {
            b *= g / (g - 1.0);
        }
    }
    let v = &hinv * b * &hinv;
    Ok((&v + v.transpose()) * 0.5)
}

/// H^-1 B H^-1 with H the observed Hessian and B the sum of outer products of
/// per-cluster score sums.
pub fn cluster_sandwich(
    x: &DesignMatrix,
    y: &[f64],
    beta: &[f64],
    link: Link,
    small_sample: bool,
) -> Result<DMatrix<f64>> {
    check_inputs(x, y, beta)?;
    let neg_h = unpack(x.ncols, &accumulate(x, y, beta, link, true).hess);
    sandwich_from(x, y, beta, link, &neg_h, small_sample)
}
