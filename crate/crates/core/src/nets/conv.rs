//! 3x3, padding-1 convolution kernels on channel-major buffers.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.in_h - 1) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - 1) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_spatial(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Patch matrix of the zero-padded input: row `(i·3 + ky)·3 + kx`,
    /// column `y·out_w + x` holds `input[i, y·stride + ky − 1, x·stride + kx − 1]`.
    fn im2col(&self, input: &[f64]) -> Array2<f64> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut cols = Array2::zeros((self.in_c * 9, oh * ow));
        let in_sp = self.in_h * self.in_w;
        for i in 0..self.in_c {
            let in_i = &input[i * in_sp..(i + 1) * in_sp];
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut row = cols.row_mut((i * 3 + ky) * 3 + kx);
                    let row = row.as_slice_mut().expect("standard layout");
                    self.for_each_tap(ky, kx, |oi, ii| row[oi] = in_i[ii]);
                }
            }
        }
        cols
    }

    /// Scatter-adds a patch-matrix gradient back onto the input.
    fn col2im(&self, cols: &Array2<f64>, d_input: &mut [f64]) {
        let in_sp = self.in_h * self.in_w;
        for i in 0..self.in_c {
            let d_i = &mut d_input[i * in_sp..(i + 1) * in_sp];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = cols.row((i * 3 + ky) * 3 + kx);
                    let row = row.as_slice().expect("standard layout");
                    self.for_each_tap(ky, kx, |oi, ii| d_i[ii] += row[oi]);
                }
            }
        }
    }

    #[inline]
    fn for_each_tap(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        for y in 0..oh {
            let iy = (y * self.stride + ky) as isize - 1;
            if iy < 0 || iy >= self.in_h as isize {
                continue;
            }
            let iy = iy as usize;
            for x in 0..ow {
                let ix = (x * self.stride + kx) as isize - 1;
                if ix < 0 || ix >= self.in_w as isize {
                    continue;
                }
                f(y * ow + x, iy * self.in_w + ix as usize);
            }
        }
    }

    fn weight_view<'a>(&self, weight: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.out_c, self.in_c * 9), weight).expect("weight length matches shape")
    }
}

/// out[o] = bias[o] + Σ_i w[o,i] ⋆ input[i]
pub(crate) fn forward(shape: &ConvShape, weight: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let cols = shape.im2col(input);
    let mut out = ArrayViewMut2::from_shape((shape.out_c, shape.out_spatial()), out).expect("output length matches shape");
    for (mut row, &b) in out.rows_mut().into_iter().zip(bias) {
        row.fill(b);
    }
    general_mat_mul(1.0, &shape.weight_view(weight), &cols, 1.0, &mut out);
}

/// Accumulates weight/bias gradients and, when requested, the gradient with
/// respect to the input.
pub(crate) fn backward(
    shape: &ConvShape,
    weight: &[f64],
    input: &[f64],
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    d_input: Option<&mut [f64]>,
) {
    let out_sp = shape.out_spatial();
    let d_out = ArrayView2::from_shape((shape.out_c, out_sp), d_out).expect("gradient length matches shape");
    for (db, row) in d_bias.iter_mut().zip(d_out.rows()) {
        *db += row.sum();
    }
    let cols = shape.im2col(input);
    let mut dw = ArrayViewMut2::from_shape((shape.out_c, shape.in_c * 9), d_weight).expect("weight length matches shape");
    general_mat_mul(1.0, &d_out, &cols.t(), 1.0, &mut dw);
    if let Some(d_in) = d_input {
        let d_cols = shape.weight_view(weight).t().dot(&d_out);
        shape.col2im(&d_cols, d_in);
    }
}
