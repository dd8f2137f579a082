use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::design::{Formula, Frame};
use crate::error::{Error, Result};
use crate::glm::{dependent_sets, DesignMatrix, FittedModel, BLOCK};

/// Counterfactual settings that define one treatment contrast.
#[derive(Debug, Clone)]
pub struct ApeTarget {
    pub treatment: String,
    pub on: Vec<(String, f64)>,
    pub off: Vec<(String, f64)>,
}

impl ApeTarget {
    /// `treatment` switched 0 -> 1 with the `others` held at 0.
    pub fn switch(treatment: &str, others: &[&str]) -> ApeTarget {
        let zeros: Vec<(String, f64)> = others.iter().map(|o| (o.to_string(), 0.0)).collect();
        let mut on = zeros.clone();
        on.push((treatment.to_string(), 1.0));
        let mut off = zeros;
        off.push((treatment.to_string(), 0.0));
        ApeTarget { treatment: treatment.to_string(), on, off }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApePoint {
    pub label: String,
    pub at: f64,
    pub value: f64,
    pub se: f64,
    pub outside_support: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApeBlock {
    pub treatment: String,
    pub value: f64,
    pub se: f64,
    /// "weighted" or "unweighted" averaging over the estimation sample.
    pub convention: String,
    pub grid: Vec<ApePoint>,
}

/// Weighted average of F(x1'b) - F(x0'b) with its delta-method standard error.
pub fn ape(
    model: &FittedModel,
    formula: &Formula,
    frame: &Frame,
    weights: &[f64],
    target: &ApeTarget,
    fixed: &[(&str, f64)],
) -> Result<ApeBlock> {
    let p = model.coef.len();
    if formula.ncols() != p || weights.len() != frame.n {
        return Err(Error::Validation("APE inputs do not match the fitted model".into()));
    }
    formula.check(frame)?;
    let mut on: Vec<(&str, f64)> = fixed.to_vec();
    on.extend(target.on.iter().map(|(n, x)| (n.as_str(), *x)));
    let mut off: Vec<(&str, f64)> = fixed.to_vec();
    off.extend(target.off.iter().map(|(n, x)| (n.as_str(), *x)));
    let link = model.link;
    let beta = &model.coef;

    let starts: Vec<usize> = (0..frame.n).step_by(BLOCK).collect();
    let partial: Vec<(f64, f64, Vec<f64>)> = starts
        .par_iter()
        .map(|&s| {
            let (mut x1, mut x0) = (Vec::with_capacity(p), Vec::with_capacity(p));
            let (mut sw, mut sd) = (0.0, 0.0);
            let mut g = vec![0.0; p];
            for i in s..(s + BLOCK).min(frame.n) {
                let w = weights[i];
                if w == 0.0 {
                    continue;
                }
                formula.row_into(frame, i, &on, &mut x1);
                formula.row_into(frame, i, &off, &mut x0);
                let e1: f64 = x1.iter().zip(beta).map(|(a, b)| a * b).sum();
                let e0: f64 = x0.iter().zip(beta).map(|(a, b)| a * b).sum();
                sw += w;
                sd += w * (link.cdf(e1) - link.cdf(e0));
                let (d1, d0) = (link.pdf(e1), link.pdf(e0));
                for j in 0..p {
                    g[j] += w * (d1 * x1[j] - d0 * x0[j]);
                }
            }
            (sw, sd, g)
        })
        .collect();
    let (mut sw, mut sd, mut g) = (0.0, 0.0, vec![0.0; p]);
    for (a, b, c) in partial {
        sw += a;
        sd += b;
        g.iter_mut().zip(c).for_each(|(x, y)| *x += y);
    }
    if sw <= 0.0 {
        return Err(Error::Validation("APE weights sum to zero".into()));
    }
    let g = DVector::from_iterator(p, g.into_iter().map(|v| v / sw));
    let var = (g.transpose() * &model.cov * &g)[(0, 0)];
    Ok(ApeBlock {
        treatment: target.treatment.clone(),
        value: sd / sw,
        se: var.max(0.0).sqrt(),
        convention: String::new(),
        grid: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefRow {
    pub term: String,
    pub coefficient: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

pub fn coefficient_table(model: &FittedModel) -> Vec<CoefRow> {
    (0..model.coef.len())
        .map(|j| {
            let se = model.se(j);
            let z = model.coef[j] / se;
            CoefRow { term: model.names[j].clone(), coefficient: model.coef[j], se, z, p: two_sided_p(z) }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldTest {
    pub label: String,
    pub stat: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald test of R b = q using the model's covariance.
pub fn wald(model: &FittedModel, r: &DMatrix<f64>, q: &DVector<f64>, label: &str) -> Result<WaldTest> {
    let (m, p) = r.shape();
    if p != model.coef.len() || q.len() != m || m == 0 {
        return Err(Error::Validation("restriction matrix does not match the model".into()));
    }
    // restrictions as columns, so the column rank check applies to rows of R
    let data: Vec<f64> = (0..p).flat_map(|k| (0..m).map(move |j| r[(j, k)])).collect();
    let names = (0..m).map(|j| format!("row{j}")).collect();
    let sets = dependent_sets(&DesignMatrix::new(names, data)?);
    if !sets.is_empty() {
        let mut rows: Vec<usize> = sets.into_iter().flatten().collect();
        rows.sort_unstable();
        rows.dedup();
        return Err(Error::DependentRestrictions { rows });
    }
    let b = DVector::from_column_slice(&model.coef);
    let d = r * b - q;
    let v = r * &model.cov * r.transpose();
    let vinv = v.try_inverse().ok_or(Error::SingularHessian)?;
    let stat = (d.transpose() * vinv * &d)[(0, 0)];
    let chi = ChiSquared::new(m as f64).expect("positive degrees of freedom");
    Ok(WaldTest { label: label.to_string(), stat, df: m, p_value: chi.sf(stat.max(0.0)) })
}

fn selector(model: &FittedModel, name: &str) -> Result<usize> {
    model.index(name).ok_or_else(|| Error::Config(format!("term `{name}` is not in the model")))
}

/// Joint test that the named coefficients are all zero.
pub fn wald_zero(model: &FittedModel, names: &[String], label: &str) -> Result<WaldTest> {
    let p = model.coef.len();
    let mut r = DMatrix::zeros(names.len(), p);
    for (k, n) in names.iter().enumerate() {
        r[(k, selector(model, n)?)] = 1.0;
    }
    wald(model, &r, &DVector::zeros(names.len()), label)
}

/// Test that two coefficients are equal.
pub fn wald_equal(model: &FittedModel, a: &str, b: &str, label: &str) -> Result<WaldTest> {
    let mut r = DMatrix::zeros(1, model.coef.len());
    r[(0, selector(model, a)?)] = 1.0;
    r[(0, selector(model, b)?)] = -1.0;
    wald(model, &r, &DVector::zeros(1), label)
}
