//! 2D convolution and transposed convolution.
//!
//! Forward passes run as blocked im2col + gemm so peak memory stays bounded
//! on 512x512 inputs. Backward-data reuses the forward path on a
//! zero-dilated gradient with a flipped kernel; backward-weights accumulates
//! per-block gemms over the same im2col buffers. Transposed convolution is
//! the dilate-then-convolve composition, so it inherits all of that.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array4, ArrayView3, ArrayView4, Ix1, Ix4};
use rand_chacha::ChaCha8Rng;

use super::{randn_init, Param, Real};

/// Cap on im2col buffer elements per block (~16 MB in f32).
const COL_BLOCK_ELEMS: usize = 1 << 22;

/// Standard convolution output size, floor semantics.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

fn im2col<F: Real>(
    x: &ArrayView3<'_, F>,
    kernel: usize,
    stride: usize,
    pad: usize,
    row_start: usize,
    row_end: usize,
    w_out: usize,
) -> Array2<F> {
    let (c_in, h_in, w_in) = x.dim();
    let rows = (row_end - row_start) * w_out;
    let patch = c_in * kernel * kernel;
    let mut col = Array2::zeros((rows, patch));
    for r in row_start..row_end {
        let base = (r - row_start) * w_out;
        for c in 0..c_in {
            for kh in 0..kernel {
                let iy = (r * stride + kh) as isize - pad as isize;
                if iy < 0 || iy >= h_in as isize {
                    continue;
                }
                for kw in 0..kernel {
                    let col_idx = (c * kernel + kh) * kernel + kw;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix < 0 || ix >= w_in as isize {
                            continue;
                        }
                        col[[base + ox, col_idx]] = x[[c, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    col
}

fn rows_per_block(w_out: usize, patch: usize) -> usize {
    (COL_BLOCK_ELEMS / (w_out * patch).max(1)).max(1)
}

/// Convolution forward. `w` is `[c_out, c_in, k, k]`.
pub fn conv2d<F: Real>(
    x: &ArrayView4<'_, F>,
    w: &ArrayView4<'_, F>,
    bias: Option<&Array1<F>>,
    stride: usize,
    pad: usize,
) -> Array4<F> {
    let (n, c_in, h_in, w_in) = x.dim();
    let (c_out, c_in_w, k, _) = w.dim();
    assert_eq!(c_in, c_in_w, "input channels must match kernel");
    let h_out = conv_output_size(h_in, k, stride, pad);
    let w_out = conv_output_size(w_in, k, stride, pad);
    let patch = c_in * k * k;
    let w_mat = w
        .to_shape((c_out, patch))
        .expect("kernel is standard layout");
    let mut y = Array4::zeros((n, c_out, h_out, w_out));
    let block = rows_per_block(w_out, patch);
    for b in 0..n {
        let xb = x.index_axis(ndarray::Axis(0), b);
        let mut r0 = 0;
        while r0 < h_out {
            let r1 = (r0 + block).min(h_out);
            let col = im2col(&xb, k, stride, pad, r0, r1, w_out);
            // [c_out, rows] = [c_out, patch] . [patch, rows]
            let prod = w_mat.dot(&col.t());
            let shaped = prod
                .into_shape_with_order((c_out, r1 - r0, w_out))
                .expect("gemm result is standard layout");
            y.slice_mut(s![b, .., r0..r1, ..]).assign(&shaped);
            r0 = r1;
        }
    }
    if let Some(bias) = bias {
        for c in 0..c_out {
            y.slice_mut(s![.., c, .., ..]).mapv_inplace(|v| v + bias[c]);
        }
    }
    y
}

/// Insert `stride - 1` zeros between neighboring elements, plus an optional
/// zero tail on the bottom/right (the stride division remainder in
/// backward-data).
fn dilate<F: Real>(x: &ArrayView4<'_, F>, stride: usize, tail_h: usize, tail_w: usize) -> Array4<F> {
    if stride == 1 && tail_h == 0 && tail_w == 0 {
        return x.to_owned();
    }
    let (n, c, h, w) = x.dim();
    let mut out = Array4::zeros((
        n,
        c,
        (h - 1) * stride + 1 + tail_h,
        (w - 1) * stride + 1 + tail_w,
    ));
    out.slice_mut(s![.., .., ..;stride, ..;stride])
        .slice_mut(s![.., .., ..h, ..w])
        .assign(x);
    out
}

/// Swap in/out channel axes and flip the kernel window.
fn flip_transpose<F: Real>(w: &ArrayView4<'_, F>) -> Array4<F> {
    let flipped = w.slice(s![.., .., ..;-1, ..;-1]);
    let mut out = flipped.permuted_axes([1, 0, 2, 3]).to_owned();
    out = out.as_standard_layout().to_owned();
    out
}

/// Gradients of [`conv2d`]: returns (dx, dw, db).
pub fn conv2d_grads<F: Real>(
    x: &ArrayView4<'_, F>,
    w: &ArrayView4<'_, F>,
    dy: &ArrayView4<'_, F>,
    stride: usize,
    pad: usize,
) -> (Array4<F>, Array4<F>, Array1<F>) {
    let (n, c_in, h_in, w_in) = x.dim();
    let (c_out, _, k, _) = w.dim();
    let (_, _, h_out, w_out) = dy.dim();
    let patch = c_in * k * k;

    // Bias gradient: plain sums per output channel.
    let mut db = Array1::zeros(c_out);
    for c in 0..c_out {
        db[c] = dy.slice(s![.., c, .., ..]).sum();
    }

    // Weight gradient: accumulate blockwise dy_mat . col.
    let mut dw_mat = Array2::<F>::zeros((c_out, patch));
    let block = rows_per_block(w_out, patch);
    for b in 0..n {
        let xb = x.index_axis(ndarray::Axis(0), b);
        let mut r0 = 0;
        while r0 < h_out {
            let r1 = (r0 + block).min(h_out);
            let col = im2col(&xb, k, stride, pad, r0, r1, w_out);
            let dy_block = dy
                .slice(s![b, .., r0..r1, ..])
                .to_owned()
                .into_shape_with_order((c_out, (r1 - r0) * w_out))
                .expect("contiguous block");
            general_mat_mul(F::one(), &dy_block, &col, F::one(), &mut dw_mat);
            r0 = r1;
        }
    }
    let dw = dw_mat
        .into_shape_with_order((c_out, c_in, k, k))
        .expect("weight gradient shape");

    // Data gradient: full correlation of the dilated dy with the flipped
    // kernel. The dilation carries a zero tail equal to the stride division
    // remainder so overlapping windows at the bottom/right edge still
    // contribute.
    debug_assert!(pad < k, "backward-data assumes pad < kernel");
    let tail_h = (h_in + 2 * pad - k) - (h_out - 1) * stride;
    let tail_w = (w_in + 2 * pad - k) - (w_out - 1) * stride;
    let dy_dilated = dilate(dy, stride, tail_h, tail_w);
    let w_flipped = flip_transpose(w);
    let dx = conv2d(&dy_dilated.view(), &w_flipped.view(), None, 1, k - 1 - pad);
    debug_assert_eq!(dx.dim(), (n, c_in, h_in, w_in));
    (dx, dw, db)
}

/// A convolution layer. Bias is optional because a following instance norm
/// cancels it exactly.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub stride: usize,
    pub pad: usize,
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = Param::new(randn_init(
            &[out_channels, in_channels, kernel, kernel],
            0.02,
            rng,
        ));
        let bias = bias.then(|| Param::new(ndarray::ArrayD::zeros(vec![out_channels])));
        Conv2d {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("conv weight is 4-d");
        let bias = self.bias.as_ref().map(|b| {
            b.value
                .view()
                .into_dimensionality::<Ix1>()
                .expect("bias is 1-d")
                .to_owned()
        });
        conv2d(&x.view(), &w, bias.as_ref(), self.stride, self.pad)
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&mut self, x: &Array4<F>, dy: &Array4<F>) -> Array4<F> {
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("conv weight is 4-d");
        let (dx, dw, db) = conv2d_grads(&x.view(), &w, &dy.view(), self.stride, self.pad);
        self.weight.grad += &dw.into_dyn();
        if let Some(bias) = &mut self.bias {
            bias.grad += &db.into_dyn();
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = vec![&self.weight];
        if let Some(b) = &self.bias {
            out.push(b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        out
    }
}

/// Transposed convolution (stride-s upsampling). Weight layout is
/// `[c_in, c_out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
    pub stride: usize,
}

impl<F: Real> ConvTranspose2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = Param::new(randn_init(
            &[in_channels, out_channels, kernel, kernel],
            0.02,
            rng,
        ));
        let bias = bias.then(|| Param::new(ndarray::ArrayD::zeros(vec![out_channels])));
        ConvTranspose2d {
            weight,
            bias,
            stride,
        }
    }

    fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("tconv weight is 4-d");
        let k = self.kernel();
        let x_dilated = dilate(&x.view(), self.stride);
        let w_conv = flip_transpose(&w.view());
        let bias = self.bias.as_ref().map(|b| {
            b.value
                .view()
                .into_dimensionality::<Ix1>()
                .expect("bias is 1-d")
                .to_owned()
        });
        conv2d(&x_dilated.view(), &w_conv.view(), bias.as_ref(), 1, k - 1)
    }

    pub fn backward(&mut self, x: &Array4<F>, dy: &Array4<F>) -> Array4<F> {
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("tconv weight is 4-d");
        let k = self.kernel();
        let x_dilated = dilate(&x.view(), self.stride);
        let w_conv = flip_transpose(&w.view());
        let (dx_dilated, dw_conv, db) =
            conv2d_grads(&x_dilated.view(), &w_conv.view(), &dy.view(), 1, k - 1);
        // Undo the dilation on the data gradient, and the flip/transpose on
        // the weight gradient.
        let dx = dx_dilated
            .slice(s![.., .., ..;self.stride, ..;self.stride])
            .to_owned();
        let dw = flip_transpose(&dw_conv.view());
        self.weight.grad += &dw.into_dyn();
        if let Some(bias) = &mut self.bias {
            bias.grad += &db.into_dyn();
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = vec![&self.weight];
        if let Some(b) = &self.bias {
            out.push(b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        out
    }
}
