//! Row-major `f64` matrix products for the convolution kernels.
//!
//! Every output element accumulates its products in ascending order of the
//! inner index, starting from its initial value, whichever code path
//! computes it. Blocking therefore never changes a result bit.

const NR: usize = 16;

/// `c[m x n] += a[m x k] * b[k x n]`.
pub(crate) fn gemm(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let full = n - n % NR;
    for j0 in (0..full).step_by(NR) {
        let mut i0 = 0;
        while i0 + 4 <= m {
            panel::<4>(i0, j0, n, k, a, b, c);
            i0 += 4;
        }
        match m - i0 {
            3 => panel::<3>(i0, j0, n, k, a, b, c),
            2 => panel::<2>(i0, j0, n, k, a, b, c),
            1 => panel::<1>(i0, j0, n, k, a, b, c),
            _ => {}
        }
    }
    if full < n {
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in full..n {
                let mut s = c[i * n + j];
                for (p, &av) in arow.iter().enumerate() {
                    s += av * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
    }
}

/// `R` rows by `NR` columns held in registers across the whole inner loop.
#[inline(always)]
fn panel<const R: usize>(
    i0: usize,
    j0: usize,
    n: usize,
    k: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
) {
    let mut acc = [[0f64; NR]; R];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR]);
    }
    for p in 0..k {
        let brow: &[f64; NR] = b[p * n + j0..p * n + j0 + NR].try_into().expect("NR wide");
        for (r, row) in acc.iter_mut().enumerate() {
            let av = a[(i0 + r) * k + p];
            for (x, &bv) in row.iter_mut().zip(brow) {
                *x += av * bv;
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR].copy_from_slice(row);
    }
}

/// Row-major transpose of an `rows x cols` matrix.
pub(crate) fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

pub(crate) fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
