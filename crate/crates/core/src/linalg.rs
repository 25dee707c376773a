use ndarray::{Array1, Array2, ArrayView1};

pub(crate) fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub(crate) fn dist2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn sum_norm2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt()
}

/// Largest algebraic eigenpair of a symmetric matrix by shifted power
/// iteration. The shift comes from a Gershgorin lower bound so that the
/// dominant eigenvalue of the shifted matrix is the top one of `m`.
pub(crate) fn top_eigenpair(m: &Array2<f64>, max_iter: usize, rel_tol: f64) -> (f64, Array1<f64>) {
    let n = m.nrows();
    let lower = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[[i, j]].abs()).sum();
            m[[i, i]] - off
        })
        .fold(f64::INFINITY, f64::min);
    let shift = if lower < 0.0 { -lower } else { 0.0 };

    // Deterministic start: weight coordinates by their diagonal mass.
    let mut v: Array1<f64> = (0..n).map(|i| (m[[i, i]] + shift).max(0.0).sqrt() + 1e-3).collect();
    let nv = norm2(v.view());
    v /= nv;

    let mut lambda = f64::NAN;
    for _ in 0..max_iter {
        let mut w = m.dot(&v);
        w.scaled_add(shift, &v);
        let nw = norm2(w.view());
        if nw == 0.0 {
            return (-shift, v);
        }
        let next = v.dot(&w) - shift;
        v = w / nw;
        let done = lambda.is_finite() && (next - lambda).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    let lambda = v.dot(&m.dot(&v));
    (lambda, v)
}

/// Solves `h x = g` for a small symmetric positive definite `h`.
/// Returns `None` when the factorization meets a nonpositive pivot.
pub(crate) fn cholesky_solve(h: &Array2<f64>, g: &Array1<f64>) -> Option<Array1<f64>> {
    let n = h.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[[i, k]] * z[k]).sum();
        z[i] = (g[i] - s) / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[[k, i]] * x[k]).sum();
        x[i] = (z[i] - s) / l[[i, i]];
    }
    Some(x)
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Median of the finite values; `NaN` when there are none.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
