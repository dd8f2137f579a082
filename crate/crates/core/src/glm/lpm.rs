use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{cluster_scores, meat, Convergence, DesignMatrix, FittedModel, Link};
use crate::error::{Error, Result};

/// Subtracts the weighted unit mean from every value.
pub fn demean(values: &[f64], units: &[u32], weights: &[f64]) -> Vec<f64> {
    let mut sums: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for ((v, u), w) in values.iter().zip(units).zip(weights) {
        let e = sums.entry(*u).or_insert((0.0, 0.0));
        e.0 += w * v;
        e.1 += w;
    }
    values
        .iter()
        .zip(units)
        .map(|(v, u)| {
            let (s, w) = sums[u];
            if w > 0.0 {
                v - s / w
            } else {
                *v
            }
        })
        .collect()
}

/// Within-unit demeaning followed by weighted least squares, clustered by unit.
/// `x` must not contain an intercept; its cluster ids are replaced by `units`.
pub fn fe_lpm(x: &DesignMatrix, y: &[f64], units: &[u32]) -> Result<FittedModel> {
    x.validate()?;
    if y.len() != x.nrows || units.len() != x.nrows {
        return Err(Error::Validation("response or unit vector length differs from row count".into()));
    }
    let p = x.ncols;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        groups.entry(*u).or_default().push(i);
    }
    if groups.values().all(|g| g.len() < 2) {
        return Err(Error::NotIdentified("every unit has a single observation".into()));
    }

    let mut xd = x.data.clone();
    let mut yd = y.to_vec();
    for rows in groups.values() {
        let wsum: f64 = rows.iter().map(|&i| x.weights[i]).sum();
        if wsum == 0.0 {
            continue;
        }
        let ym = rows.iter().map(|&i| x.weights[i] * y[i]).sum::<f64>() / wsum;
        rows.iter().for_each(|&i| yd[i] -= ym);
        for j in 0..p {
            let m = rows.iter().map(|&i| x.weights[i] * x.get(i, j)).sum::<f64>() / wsum;
            rows.iter().for_each(|&i| xd[i * p + j] -= m);
        }
    }
    let within = DesignMatrix {
        names: x.names.clone(),
        nrows: x.nrows,
        ncols: p,
        data: xd,
        clusters: units.to_vec(),
        weights: x.weights.clone(),
    };
    within.check_rank()?;

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for i in 0..within.nrows {
        let w = within.weights[i];
        if w == 0.0 {
            continue;
        }
        let r = within.row(i);
        for a in 0..p {
            xty[a] += w * r[a] * yd[i];
            for c in a..p {
                xtx[(a, c)] += w * r[a] * r[c];
            }
        }
    }
    for a in 0..p {
        for c in 0..a {
            xtx[(a, c)] = xtx[(c, a)];
        }
    }
    let inv = xtx.clone().cholesky().ok_or(Error::SingularHessian)?.inverse();
    let beta: Vec<f64> = (&inv * xty).iter().copied().collect();
    let scores = cluster_scores(&within, &yd, &beta, Link::Identity);
    let b = meat(&scores, p);
    let cov = &inv * b * &inv;
    let cov = (&cov + cov.transpose()) * 0.5;

    Ok(FittedModel {
        link: Link::Identity,
        names: x.names.clone(),
        coef: beta,
        cov,
        loglik: None,
        loglik_null: None,
        pseudo_r2: None,
        nobs: x.weights.iter().filter(|w| **w > 0.0).count(),
        nclusters: groups.len(),
        convergence: Convergence { iterations: 0, grad_max: 0.0, step_underflow: false, loglik_trace: Vec::new() },
        warnings: Vec::new(),
    })
}
