// Dense helpers over row-major f64 slices.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// y += alpha * x
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// out += W x, with W `rows x cols`.
pub(crate) fn matvec(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// dx += W^T dy
pub(crate) fn matvec_t(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(dx.len(), cols);
    for (&d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if d != 0.0 {
            axpy(d, row, dx);
        }
    }
}

/// G += dy x^T
pub(crate) fn outer_acc(g: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&d, row) in dy.iter().zip(g.chunks_exact_mut(cols)) {
        if d != 0.0 {
            axpy(d, x, row);
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = vec![0.0; 2];
        matvec(&w, 3, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut dx = vec![0.0; 3];
        matvec_t(&w, 3, &[1.0, 1.0], &mut dx);
        assert_eq!(dx, [5.0, 7.0, 9.0]);
        let mut g = vec![0.0; 6];
        outer_acc(&mut g, &[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g, [1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert_eq!(dot(&[1.0; 9], &[2.0; 9]), 18.0);
    }

    #[test]
    fn softmax_is_stable() {
        let mut v = vec![1000.0, 1000.0];
        softmax_in_place(&mut v);
        assert_eq!(v, [0.5, 0.5]);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(800.0) == 1.0);
    }
}
