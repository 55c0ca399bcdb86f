#![allow(dead_code)]

use fisgan_core::Tensor2;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with denominator max(|a|, |b|, 1e-8).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central difference of `f` with respect to each coordinate of `x`.
pub fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let plus = f(&probe);
            probe[i] = orig - FD_STEP;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Numerical Jacobian of a vector map (rows = outputs).
pub fn numeric_jacobian(x: &[f64], outputs: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Tensor2 {
    let mut jac = Tensor2::zeros(outputs, x.len());
    let mut probe = x.to_vec();
    for c in 0..x.len() {
        let orig = probe[c];
        probe[c] = orig + FD_STEP;
        let plus = f(&probe);
        probe[c] = orig - FD_STEP;
        let minus = f(&probe);
        probe[c] = orig;
        for r in 0..outputs {
            jac.set(r, c, (plus[r] - minus[r]) / (2.0 * FD_STEP));
        }
    }
    jac
}

/// log|det| by Gaussian elimination with partial pivoting.
pub fn log_abs_det(m: &Tensor2) -> f64 {
    let n = m.rows();
    let mut a = m.clone();
    let mut acc = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                let tmp = a.get(col, k);
                a.set(col, k, a.get(pivot, k));
                a.set(pivot, k, tmp);
            }
        }
        let p = a.get(col, col);
        acc += p.abs().ln();
        for r in col + 1..n {
            let f = a.get(r, col) / p;
            for k in col..n {
                let v = a.get(r, k) - f * a.get(col, k);
                a.set(r, k, v);
            }
        }
    }
    acc
}
