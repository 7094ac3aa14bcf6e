//! Forward and backward loops on raw row-major slices.

use alloc::vec;
use alloc::vec::Vec;

/// Logistic function in the sign-split form that never exponentiates a
/// positive argument.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row, written back into `row`.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Softmax restricted to `mask`; masked-out entries become exactly zero.
pub(crate) fn masked_softmax_row(row: &mut [f64], mask: &[bool]) {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (v, &m) in row.iter_mut().zip(mask) {
        *v = if m { libm::exp(*v - max) } else { 0.0 };
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (o, a_row) in out.iter_mut().zip(a.chunks_exact(k)) {
            *o += dot(a_row, b);
        }
        return;
    }
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · bᵀ` where `b` is `k×n`.
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        // outer product g·bᵀ
        for (out_row, &gv) in out.chunks_exact_mut(k).zip(g) {
            for (o, &bv) in out_row.iter_mut().zip(b) {
                *o += gv * bv;
            }
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(g_row, b_row);
        }
    }
}

/// Dot product with four interleaved accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (a_row, &gv) in a.chunks_exact(k).zip(g) {
            for (o, &av) in out.iter_mut().zip(a_row) {
                *o += av * gv;
            }
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// Order of the inner axis of `a[m×k] · b[k×n]` fixed by the operand
/// values: index `p` is keyed by the bits of row `p` of `b`, then of
/// column `p` of `a`. Permuting the inner axis of both operands permutes
/// the keys along with it, so the resulting order visits the same pairs.
fn canonical_inner_order(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&p, &q| {
        let row = |r: usize| b[r * n..(r + 1) * n].iter().map(|v| v.to_bits());
        let col = |c: usize| (0..m).map(move |i| a[i * k + c].to_bits());
        row(p).cmp(row(q)).then_with(|| col(p).cmp(col(q)))
    });
    order
}

/// `out[m×n] = a[m×k] · b[k×n]` summed over the inner axis in canonical
/// order. Ties in the key are identical terms, so the rounded result is a
/// symmetric function of the `k` inner pairs.
pub(crate) fn matmul_canonical(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let order = canonical_inner_order(a, b, m, k, n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for &p in &order {
            let av = a[i * k + p];
            for (o, &bv) in out_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    /// Output positions `o` with `0 <= o*stride + k - pad < extent`.
    fn valid_range(&self, k: usize, extent: usize, out_extent: usize) -> core::ops::Range<usize> {
        let lo = if k >= self.pad { 0 } else { (self.pad - k).div_ceil(self.stride) };
        // largest o with o*stride + k - pad <= extent - 1
        let limit = extent + self.pad;
        let hi = if limit > k { ((limit - k - 1) / self.stride + 1).min(out_extent) } else { 0 };
        lo.min(hi)..hi
    }

    /// Unfolds `x` into a `(cin·kh·kw)×(ho·wo)` matrix, zero where the
    /// window hangs over the padding.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let g = *self;
        let hw = g.ho * g.wo;
        let mut cols = vec![0.0; g.cin * g.kh * g.kw * hw];
        for ci in 0..g.cin {
            let x_c = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                let ys = g.valid_range(ky, g.h, g.ho);
                for kx in 0..g.kw {
                    let xs = g.valid_range(kx, g.w, g.wo);
                    let row = ((ci * g.kh + ky) * g.kw + kx) * hw;
                    for oy in ys.clone() {
                        let iy = oy * g.stride + ky - g.pad;
                        let dst = &mut cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                        for ox in xs.clone() {
                            dst[ox] = x_c[iy * g.w + ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adds an unfolded gradient back onto the input positions it came from.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let g = *self;
        let hw = g.ho * g.wo;
        for ci in 0..g.cin {
            let dx_c = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                let ys = g.valid_range(ky, g.h, g.ho);
                for kx in 0..g.kw {
                    let xs = g.valid_range(kx, g.w, g.wo);
                    let row = ((ci * g.kh + ky) * g.kw + kx) * hw;
                    for oy in ys.clone() {
                        let iy = oy * g.stride + ky - g.pad;
                        let src = &cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                        for ox in xs.clone() {
                            dx_c[iy * g.w + ox * g.stride + kx - g.pad] += src[ox];
                        }
                    }
                }
            }
        }
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn forward(&self, x: &[f64], k: &[f64], out: &mut [f64]) {
        let cols = self.im2col(x);
        matmul_acc(k, &cols, out, self.cout, self.patch_len(), self.ho * self.wo);
    }

    /// Accumulates input and kernel gradients for upstream gradient `dy`.
    pub fn backward(
        &self,
        x: &[f64],
        k: &[f64],
        dy: &[f64],
        dx: Option<&mut [f64]>,
        dk: Option<&mut [f64]>,
    ) {
        let (kl, hw) = (self.patch_len(), self.ho * self.wo);
        if let Some(dk) = dk {
            let cols = self.im2col(x);
            matmul_bt_acc(dy, &cols, dk, self.cout, kl, hw);
        }
        if let Some(dx) = dx {
            let mut dcols = vec![0.0; kl * hw];
            matmul_at_acc(k, dy, &mut dcols, self.cout, kl, hw);
            self.col2im(&dcols, dx);
        }
    }
}
