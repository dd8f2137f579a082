use super::DesignMatrix;

pub const RANK_TOL: f64 = 1e-10;

/// Column-order Gram-Schmidt on the sqrt(w)-scaled, unit-normalized columns.
/// Every column that is (numerically) spanned by the columns kept before it is
/// reported together with the kept columns that its representation uses.
pub fn dependent_sets(x: &DesignMatrix) -> Vec<Vec<usize>> {
    let n = x.nrows;
    let p = x.ncols;
    let sw: Vec<f64> = x.weights.iter().map(|w| w.sqrt()).collect();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    // r[k] holds column k of the triangular factor for kept columns
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut sets = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = (0..n).map(|i| x.get(i, j) * sw[i]).collect();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            sets.push(vec![j]);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= norm0);
        let mut coef = vec![0.0; q.len()];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = dot(qk, &v);
                coef[k] += c;
                v.iter_mut().zip(qk).for_each(|(e, b)| *e -= c * b);
            }
        }
        let rn = dot(&v, &v).sqrt();
        if rn < RANK_TOL {
            // solve R a = coef for the representation in kept columns
            let m = kept.len();
            let mut a = coef.clone();
            for k in (0..m).rev() {
                let mut s = a[k];
                for l in k + 1..m {
                    s -= r[l][k] * a[l];
                }
                a[k] = s / r[k][k];
            }
            let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let mut set: Vec<usize> = a
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > 1e-7 * scale.max(1e-300))
                .map(|(k, _)| kept[k])
                .collect();
            set.push(j);
            sets.push(set);
        } else {
            v.iter_mut().for_each(|e| *e /= rn);
            let mut col = coef;
            col.push(rn);
            r.push(col);
            q.push(v);
            kept.push(j);
        }
    }
    sets
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
