//! Row-major dense products backed by `matrixmultiply`.

/// `c = a · b (+ c if accumulate)` with `a: m×k`, `b: k×n`, `c: m×n`.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: lengths are checked above and strides describe dense row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a · bᵀ (+ c)` with `a: m×k`, `b: n×k`, `c: m×n`.
pub fn matmul_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: see `matmul`; `b` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = aᵀ · b (+ c)` with `a: k×m`, `b: k×n`, `c: m×n`.
pub fn matmul_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, accumulate: bool) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: see `matmul`; `a` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Below this norm the normalization denominator is padded by the same amount.
pub const NORM_EPS: f64 = 1e-8;

/// Scales `v` onto the unit sphere in place; returns the original norm.
pub fn l2_normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    let denom = if n < NORM_EPS { n + NORM_EPS } else { n };
    v.iter_mut().for_each(|x| *x /= denom);
    n
}

/// Vector-Jacobian product of [`l2_normalize`]: given the pre-normalization
/// vector `v`, its normalized image `z` and `∂L/∂z`, returns `∂L/∂v`.
pub fn l2_normalize_backward(v: &[f64], z: &[f64], grad_z: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n >= NORM_EPS {
        // (I - z zᵀ) g / |v|
        let zg = dot(z, grad_z);
        z.iter().zip(grad_z).map(|(zi, gi)| (gi - zi * zg) / n).collect()
    } else {
        let denom = n + NORM_EPS;
        let vg = dot(v, grad_z);
        v.iter()
            .zip(grad_z)
            .map(|(vi, gi)| {
                let radial = if n > 0.0 { vi * vg / (n * denom * denom) } else { 0.0 };
                gi / denom - radial
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive_loops() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut naive = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                naive[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        let mut c = vec![0.0; m * n];
        matmul(&a, &b, &mut c, m, k, n, false);
        assert_eq!(c, naive);

        // bᵀ stored explicitly
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        matmul_nt(&a, &bt, &mut c2, m, k, n, false);
        assert_eq!(c2, naive);

        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c3 = vec![1.0; m * n];
        matmul_tn(&at, &b, &mut c3, m, k, n, true);
        for (x, y) in c3.iter().zip(&naive) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}
