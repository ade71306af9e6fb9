//! Dense H×W×C tensors and the same-size convolution substrate.
//!
//! Layout is row-major, channel-minor: index (y, x, c) maps to
//! `(y * width + x) * channels + c`. All convolutions are stride-1 with
//! zero padding of `(k - 1) / 2` per side, so spatial dimensions are
//! preserved exactly.

use crate::error::{Error, Result};

/// Dense H×W×C array of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::contract(
                "Tensor::from_vec",
                format!(
                    "data length {} does not match {}x{}x{}",
                    data.len(),
                    height,
                    width,
                    channels
                ),
            ));
        }
        Ok(Tensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Tensor {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if !self.same_shape(other) {
            return Err(Error::contract(
                "Tensor::zip_map",
                format!("shape {:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs)
    }

    /// Elementwise maximum of two tensors.
    pub fn maximum(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Count of entries that are exactly zero.
    pub fn exact_zero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0.0).count()
    }

    /// Swaps the two spatial axes; channels stay in place.
    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.width, self.height, self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(x, y, c, self.get(y, x, c));
                }
            }
        }
        out
    }

    /// Extracts a single channel as an H×W×1 tensor.
    pub fn slice_channel(&self, c: usize) -> Result<Tensor> {
        if c >= self.channels {
            return Err(Error::contract(
                "Tensor::slice_channel",
                format!("channel {} out of {}", c, self.channels),
            ));
        }
        let mut data = Vec::with_capacity(self.height * self.width);
        for px in 0..self.height * self.width {
            data.push(self.data[px * self.channels + c]);
        }
        Ok(Tensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        })
    }

    /// Per-pixel maximum over channels, as H×W×1. Used to project feature
    /// stacks down to a displayable map.
    pub fn channel_max_projection(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.height * self.width);
        for px in 0..self.height * self.width {
            let s = &self.data[px * self.channels..(px + 1) * self.channels];
            data.push(s.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        Tensor {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Crops `margin` pixels from every spatial border.
    pub fn crop_border(&self, margin: usize) -> Result<Tensor> {
        if self.height <= 2 * margin || self.width <= 2 * margin {
            return Err(Error::contract(
                "Tensor::crop_border",
                format!("{}x{} too small for margin {}", self.height, self.width, margin),
            ));
        }
        let (h, w, c) = (self.height - 2 * margin, self.width - 2 * margin, self.channels);
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            let src = ((y + margin) * self.width + margin) * c;
            data.extend_from_slice(&self.data[src..src + w * c]);
        }
        Ok(Tensor {
            height: h,
            width: w,
            channels: c,
            data,
        })
    }

    /// Spatial sub-window of size `ch`×`cw` with top-left corner (y0, x0).
    pub fn crop(&self, y0: usize, x0: usize, ch: usize, cw: usize) -> Result<Tensor> {
        if y0 + ch > self.height || x0 + cw > self.width {
            return Err(Error::contract(
                "Tensor::crop",
                format!(
                    "window {}x{} at ({}, {}) exceeds {}x{}",
                    ch, cw, y0, x0, self.height, self.width
                ),
            ));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(ch * cw * c);
        for y in 0..ch {
            let src = ((y + y0) * self.width + x0) * c;
            data.extend_from_slice(&self.data[src..src + cw * c]);
        }
        Ok(Tensor {
            height: ch,
            width: cw,
            channels: c,
            data,
        })
    }

    pub fn flip_horizontal(&self) -> Tensor {
        Tensor::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(y, self.width - 1 - x, c)
        })
    }

    pub fn flip_vertical(&self) -> Tensor {
        Tensor::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.get(self.height - 1 - y, x, c)
        })
    }
}

/// Convolution kernel mapping `in_channels` to `out_channels` with an odd
/// spatial extent. Weight layout is `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        if kernel_h.is_multiple_of(2) || kernel_w.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "kernel size {}x{} must be odd",
                kernel_h, kernel_w
            )));
        }
        Ok(ConvKernel {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights: vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
        })
    }

    pub fn from_vec(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut k = ConvKernel::zeros(out_channels, in_channels, kernel_h, kernel_w)?;
        if weights.len() != k.weights.len() {
            return Err(Error::contract(
                "ConvKernel::from_vec",
                format!("weights length {} != {}", weights.len(), k.weights.len()),
            ));
        }
        k.weights = weights;
        Ok(k)
    }

    /// Identity kernel: center weight 1 on the diagonal channel map.
    /// Requires `out_channels == in_channels`.
    pub fn identity(channels: usize, kernel: usize) -> Result<Self> {
        let mut k = ConvKernel::zeros(channels, channels, kernel, kernel)?;
        for c in 0..channels {
            let idx = k.weight_index(c, c, kernel / 2, kernel / 2);
            k.weights[idx] = 1.0;
        }
        Ok(k)
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }

    #[inline]
    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[self.weight_index(o, i, ky, kx)]
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// The adjoint kernel: spatially flipped and transposed in channels.
    /// `conv2d_same(·, k.adjoint())` is the adjoint map of `conv2d_same(·, k)`.
    pub fn adjoint(&self) -> ConvKernel {
        let mut adj = ConvKernel {
            out_channels: self.in_channels,
            in_channels: self.out_channels,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            weights: vec![0.0; self.weights.len()],
        };
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let idx = adj.weight_index(i, o, self.kernel_h - 1 - ky, self.kernel_w - 1 - kx);
                        adj.weights[idx] = self.weight(o, i, ky, kx);
                    }
                }
            }
        }
        adj
    }

    pub fn scale(&self, factor: f64) -> ConvKernel {
        let mut k = self.clone();
        for w in &mut k.weights {
            *w *= factor;
        }
        k
    }
}

/// y += a * x over two equal-length slices; the contiguous inner loop of
/// every convolution here.
#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, xv) in out.iter_mut().zip(x) {
        *o += a * *xv;
    }
}

/// Input copied into per-channel planes with `pw` columns of zero padding
/// on each side, so convolution inner loops run over contiguous rows with
/// no horizontal bounds checks.
struct PaddedPlanes {
    data: Vec<f64>,
    wp: usize,
    h: usize,
}

impl PaddedPlanes {
    fn build(input: &Tensor, pw: usize) -> Self {
        let (h, w, c) = (input.height, input.width, input.channels);
        let wp = w + 2 * pw;
        let mut data = vec![0.0; c * h * wp];
        for (px, pixel) in input.data.chunks_exact(c).enumerate() {
            let (y, x) = (px / w, px % w);
            for (ch, &v) in pixel.iter().enumerate() {
                data[(ch * h + y) * wp + pw + x] = v;
            }
        }
        PaddedPlanes { data, wp, h }
    }

    #[inline]
    fn row(&self, channel: usize, y: usize) -> &[f64] {
        let base = (channel * self.h + y) * self.wp;
        &self.data[base..base + self.wp]
    }
}

/// Computes the given output rows (planar layout `[o][y][x]`) of the
/// same-size convolution. One writer per row keeps the result identical
/// across scheduling strategies.
fn conv_rows_planar(
    rows: std::ops::Range<usize>,
    out: &mut [f64],
    planes: &PaddedPlanes,
    k: &ConvKernel,
    h: usize,
    w: usize,
) {
    let (ci, co) = (k.in_channels, k.out_channels);
    let (kh, kw) = (k.kernel_h, k.kernel_w);
    let ph = kh / 2;
    for (row_idx, y) in rows.enumerate() {
        let ky_lo = ph.saturating_sub(y);
        let ky_hi = kh.min(h + ph - y);
        for o in 0..co {
            let out_row = &mut out[(row_idx * co + o) * w..(row_idx * co + o + 1) * w];
            out_row.fill(0.0);
            for i in 0..ci {
                for ky in ky_lo..ky_hi {
                    let in_row = planes.row(i, y + ky - ph);
                    let wbase = k.weight_index(o, i, ky, 0);
                    for kx in 0..kw {
                        axpy(out_row, k.weights[wbase + kx], &in_row[kx..kx + w]);
                    }
                }
            }
        }
    }
}

/// Interleaves planar rows `[y-chunk][o][x]` back into channel-minor
/// layout.
fn interleave_rows(row_count: usize, planar: &[f64], out: &mut [f64], w: usize, co: usize) {
    for row_idx in 0..row_count {
        let dst = &mut out[row_idx * w * co..(row_idx + 1) * w * co];
        for o in 0..co {
            let src = &planar[(row_idx * co + o) * w..(row_idx * co + o + 1) * w];
            for (x, &v) in src.iter().enumerate() {
                dst[x * co + o] = v;
            }
        }
    }
}

fn conv2d_same_checked(input: &Tensor, kernel: &ConvKernel) -> Result<()> {
    if input.channels != kernel.in_channels {
        return Err(Error::contract(
            "conv2d_same",
            format!(
                "input has {} channels, kernel expects {}",
                input.channels, kernel.in_channels
            ),
        ));
    }
    Ok(())
}

fn conv2d_same_impl(input: &Tensor, kernel: &ConvKernel, parallel: bool) -> Result<Tensor> {
    conv2d_same_checked(input, kernel)?;
    let (h, w) = (input.height, input.width);
    let co = kernel.out_channels;
    let planes = PaddedPlanes::build(input, kernel.kernel_w / 2);
    let mut out = vec![0.0; h * w * co];

    let chunk_body = |chunk_idx: usize, chunk_rows: usize, out_chunk: &mut [f64]| {
        let y0 = chunk_idx * chunk_rows;
        let y1 = (y0 + chunk_rows).min(h);
        let mut planar = vec![0.0; (y1 - y0) * co * w];
        conv_rows_planar(y0..y1, &mut planar, &planes, kernel, h, w);
        interleave_rows(y1 - y0, &planar, out_chunk, w, co);
    };

    #[cfg(feature = "parallel")]
    if parallel && h * w * co >= 1 << 15 && h >= 8 {
        use rayon::prelude::*;
        let chunk_rows = h.div_ceil(rayon::current_num_threads().max(1)).max(4);
        out.par_chunks_mut(chunk_rows * w * co)
            .enumerate()
            .for_each(|(ci_, chunk)| chunk_body(ci_, chunk_rows, chunk));
        return Tensor::from_vec(h, w, co, out);
    }
    let _ = parallel;
    chunk_body(0, h, &mut out);
    Tensor::from_vec(h, w, co, out)
}

/// Same-size 2-D convolution: stride 1, zero padding of `(k - 1) / 2`.
pub fn conv2d_same(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    conv2d_same_impl(input, kernel, true)
}

/// Sequential variant of [`conv2d_same`]; bitwise identical output. Kept
/// public so benches can compare scheduling strategies directly.
pub fn conv2d_same_seq(input: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    conv2d_same_impl(input, kernel, false)
}

/// Gradient of `conv2d_same` with respect to its input: the correlation of
/// `output_grad` with the kernel flipped spatially and transposed in
/// channels.
pub fn conv2d_grad_input(output_grad: &Tensor, kernel: &ConvKernel) -> Result<Tensor> {
    if output_grad.channels != kernel.out_channels {
        return Err(Error::contract(
            "conv2d_grad_input",
            format!(
                "output_grad has {} channels, kernel produces {}",
                output_grad.channels, kernel.out_channels
            ),
        ));
    }
    conv2d_same(output_grad, &kernel.adjoint())
}

/// Eight-way unrolled dot product; fixed accumulation order keeps results
/// reproducible run to run.
fn dot8(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let (ra, rb) = (ac.remainder(), bc.remainder());
    for (ca, cb) in ac.zip(bc) {
        for j in 0..8 {
            acc[j] += ca[j] * cb[j];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// Gradient of `conv2d_same` with respect to the kernel weights,
/// accumulated over all spatial positions.
pub fn conv2d_grad_weights(
    input: &Tensor,
    output_grad: &Tensor,
    shape: (usize, usize, usize, usize),
) -> Result<ConvKernel> {
    let (co, ci, kh, kw) = shape;
    if input.channels != ci || output_grad.channels != co {
        return Err(Error::contract(
            "conv2d_grad_weights",
            format!(
                "input {} / grad {} channels vs kernel shape {}->{}",
                input.channels, output_grad.channels, ci, co
            ),
        ));
    }
    if input.height != output_grad.height || input.width != output_grad.width {
        return Err(Error::contract(
            "conv2d_grad_weights",
            format!(
                "input {}x{} vs output_grad {}x{}",
                input.height, input.width, output_grad.height, output_grad.width
            ),
        ));
    }
    let (h, w) = (input.height, input.width);
    let (ph, pw) = (kh / 2, kw / 2);

    // Padded per-channel input planes turn each weight gradient into a
    // sum of full-row dot products with a fixed shift.
    let in_planes = PaddedPlanes::build(input, pw);
    let g_planes: Vec<Tensor> = (0..co)
        .map(|c| output_grad.slice_channel(c).unwrap())
        .collect();

    let mut kernel = ConvKernel::zeros(co, ci, kh, kw)?;
    let weight_count = kernel.weights.len();
    let compute = |widx: usize| -> f64 {
        let kx = widx % kw;
        let ky = (widx / kw) % kh;
        let i = (widx / (kw * kh)) % ci;
        let o = widx / (kw * kh * ci);
        let gp = g_planes[o].data();
        // sum over y, x of g[y][x] * in[y + ky - ph][x + kx - pw]
        let y_lo = ph.saturating_sub(ky);
        let y_hi = h.min(h + ph - ky);
        let mut total = 0.0;
        for y in y_lo..y_hi {
            let g_row = &gp[y * w..(y + 1) * w];
            let i_row = in_planes.row(i, y + ky - ph);
            total += dot8(g_row, &i_row[kx..kx + w]);
        }
        total
    };

    #[cfg(feature = "parallel")]
    {
        if h * w >= 1 << 12 && weight_count >= 16 {
            use rayon::prelude::*;
            let grads: Vec<f64> = (0..weight_count).into_par_iter().map(compute).collect();
            kernel.weights = grads;
            return Ok(kernel);
        }
    }
    for widx in 0..weight_count {
        kernel.weights[widx] = compute(widx);
    }
    Ok(kernel)
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

pub fn sobel_kernel_x() -> ConvKernel {
    ConvKernel::from_vec(1, 1, 3, 3, SOBEL_X.to_vec()).unwrap()
}

pub fn sobel_kernel_y() -> ConvKernel {
    ConvKernel::from_vec(1, 1, 3, 3, SOBEL_Y.to_vec()).unwrap()
}

/// Horizontal and vertical Sobel responses of a single-channel image.
pub fn sobel_components(image: &Tensor) -> Result<(Tensor, Tensor)> {
    if image.channels != 1 {
        return Err(Error::contract(
            "sobel_components",
            format!("expected single channel, got {}", image.channels),
        ));
    }
    let gx = conv2d_same(image, &sobel_kernel_x())?;
    let gy = conv2d_same(image, &sobel_kernel_y())?;
    Ok((gx, gy))
}

/// Sobel gradient magnitude |∂x| + |∂y|, same size, zero padding.
pub fn sobel_gradient(image: &Tensor) -> Result<Tensor> {
    let (gx, gy) = sobel_components(image)?;
    gx.abs().add(&gy.abs())
}

/// Concatenates two tensors along the channel axis; `a`'s channels first.
pub fn channel_concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::contract(
            "channel_concat",
            format!(
                "spatial mismatch {}x{} vs {}x{}",
                a.height, a.width, b.height, b.width
            ),
        ));
    }
    let (ca, cb) = (a.channels, b.channels);
    let mut data = Vec::with_capacity(a.height * a.width * (ca + cb));
    for px in 0..a.height * a.width {
        data.extend_from_slice(&a.data[px * ca..(px + 1) * ca]);
        data.extend_from_slice(&b.data[px * cb..(px + 1) * cb]);
    }
    Tensor::from_vec(a.height, a.width, ca + cb, data)
}

/// Splits a tensor into two channel groups; inverse of [`channel_concat`].
pub fn channel_split(t: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    if first > t.channels {
        return Err(Error::contract(
            "channel_split",
            format!("cannot take {} of {} channels", first, t.channels),
        ));
    }
    let second = t.channels - first;
    let mut a = Vec::with_capacity(t.height * t.width * first);
    let mut b = Vec::with_capacity(t.height * t.width * second);
    for px in 0..t.height * t.width {
        let s = &t.data[px * t.channels..(px + 1) * t.channels];
        a.extend_from_slice(&s[..first]);
        b.extend_from_slice(&s[first..]);
    }
    Ok((
        Tensor::from_vec(t.height, t.width, first, a)?,
        Tensor::from_vec(t.height, t.width, second, b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent quadruple-loop transcription of the same-size
    /// convolution, used as the oracle for the fast path.
    fn naive_conv(input: &Tensor, k: &ConvKernel) -> Tensor {
        let (h, w, ci) = input.shape();
        let co = k.out_channels();
        let (ph, pw) = (k.kernel_h() / 2, k.kernel_w() / 2);
        let mut out = Tensor::zeros(h, w, co);
        for y in 0..h {
            for x in 0..w {
                for o in 0..co {
                    let mut acc = 0.0;
                    for i in 0..ci {
                        for ky in 0..k.kernel_h() {
                            for kx in 0..k.kernel_w() {
                                let iy = y as isize + ky as isize - ph as isize;
                                let ix = x as isize + kx as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += input.get(iy as usize, ix as usize, i) * k.weight(o, i, ky, kx);
                            }
                        }
                    }
                    out.set(y, x, o, acc);
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor {
        Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut ChaCha8Rng, co: usize, ci: usize, k: usize) -> ConvKernel {
        let data = (0..co * ci * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ConvKernel::from_vec(co, ci, k, k, data).unwrap()
    }

    fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn inner(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, 5, 5, 1);
        let k = ConvKernel::identity(1, 3).unwrap();
        let y = conv2d_same(&x, &k).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, 3, 2, 3);
        let y = conv2d_same(&Tensor::zeros(4, 6, 2), &k).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 6, 6, 2);
        let k = random_kernel(&mut rng, 3, 2, 3);
        let fast = conv2d_same(&x, &k).unwrap();
        let slow = naive_conv(&x, &k);
        assert!(max_abs_diff(&fast, &slow) < 1e-12);
    }

    #[test]
    fn conv_matches_naive_oracle_across_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (h, w, ci, co, ks) in [(5, 7, 1, 4, 5), (4, 4, 3, 1, 3), (9, 3, 2, 2, 3), (8, 8, 4, 4, 5)] {
            let x = random_tensor(&mut rng, h, w, ci);
            let k = random_kernel(&mut rng, co, ci, ks);
            let fast = conv2d_same(&x, &k).unwrap();
            let slow = naive_conv(&x, &k);
            assert!(max_abs_diff(&fast, &slow) < 1e-12, "shape {:?}", (h, w, ci, co, ks));
        }
    }

    #[test]
    fn seq_and_parallel_paths_are_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 64, 64, 3);
        let k = random_kernel(&mut rng, 8, 3, 5);
        let a = conv2d_same(&x, &k).unwrap();
        let b = conv2d_same_seq(&x, &k).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn conv_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_tensor(&mut rng, 6, 5, 2);
        let y = random_tensor(&mut rng, 6, 5, 2);
        let k = random_kernel(&mut rng, 3, 2, 3);
        let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lhs = conv2d_same(&x.scale(alpha).add(&y.scale(beta)).unwrap(), &k).unwrap();
        let rhs = conv2d_same(&x, &k)
            .unwrap()
            .scale(alpha)
            .add(&conv2d_same(&y, &k).unwrap().scale(beta))
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn channel_mismatch_is_contract_violation() {
        let x = Tensor::zeros(4, 4, 2);
        let k = ConvKernel::zeros(3, 1, 3, 3).unwrap();
        assert!(matches!(conv2d_same(&x, &k), Err(Error::Contract { .. })));
        assert!(matches!(conv2d_grad_input(&x, &k), Err(Error::Contract { .. })));
    }

    #[test]
    fn grad_input_identity_kernel_passes_grad_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_tensor(&mut rng, 5, 5, 1);
        let k = ConvKernel::identity(1, 3).unwrap();
        let gi = conv2d_grad_input(&g, &k).unwrap();
        assert_eq!(g.data(), gi.data());
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (h, w, ci, co, ks) in [(6, 6, 2, 3, 3), (8, 5, 1, 8, 5), (7, 7, 4, 1, 3)] {
            let x = random_tensor(&mut rng, h, w, ci);
            let y = random_tensor(&mut rng, h, w, co);
            let k = random_kernel(&mut rng, co, ci, ks);
            let lhs = inner(&conv2d_same(&x, &k).unwrap(), &y);
            let rhs = inner(&x, &conv2d_grad_input(&y, &k).unwrap());
            assert!((lhs - rhs).abs() < 1e-10, "adjoint diff {}", (lhs - rhs).abs());
        }
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        // Central differences of conv2d_same wrt each input entry on a
        // 4x4x1 input.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, 4, 4, 1);
        let k = random_kernel(&mut rng, 2, 1, 3);
        let g = random_tensor(&mut rng, 4, 4, 2);
        let analytic = conv2d_grad_input(&g, &k).unwrap();
        let h = 1e-5;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let lp = inner(&conv2d_same(&xp, &k).unwrap(), &g);
            let lm = inner(&conv2d_same(&xm, &k).unwrap(), &g);
            let fd = (lp - lm) / (2.0 * h);
            let an = analytic.data()[idx];
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                (fd - an).abs() / denom < 1e-6,
                "entry {}: fd {} vs analytic {}",
                idx,
                fd,
                an
            );
        }
    }

    #[test]
    fn grad_weights_zero_grad_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor(&mut rng, 4, 4, 2);
        let g = Tensor::zeros(4, 4, 3);
        let gw = conv2d_grad_weights(&x, &g, (3, 2, 3, 3)).unwrap();
        assert!(gw.weights().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_weights_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, 4, 4, 1);
        let k = random_kernel(&mut rng, 1, 1, 3);
        let g = random_tensor(&mut rng, 4, 4, 1);
        let analytic = conv2d_grad_weights(&x, &g, (1, 1, 3, 3)).unwrap();
        let h = 1e-5;
        for idx in 0..k.weights().len() {
            let mut kp = k.clone();
            kp.weights_mut()[idx] += h;
            let mut km = k.clone();
            km.weights_mut()[idx] -= h;
            let lp = inner(&conv2d_same(&x, &kp).unwrap(), &g);
            let lm = inner(&conv2d_same(&x, &km).unwrap(), &g);
            let fd = (lp - lm) / (2.0 * h);
            let an = analytic.weights()[idx];
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!((fd - an).abs() / denom < 1e-6);
        }
    }

    #[test]
    fn grad_weights_is_linear_in_output_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_tensor(&mut rng, 5, 5, 2);
        let g1 = random_tensor(&mut rng, 5, 5, 3);
        let g2 = random_tensor(&mut rng, 5, 5, 3);
        let sum = conv2d_grad_weights(&x, &g1.add(&g2).unwrap(), (3, 2, 3, 3)).unwrap();
        let a = conv2d_grad_weights(&x, &g1, (3, 2, 3, 3)).unwrap();
        let b = conv2d_grad_weights(&x, &g2, (3, 2, 3, 3)).unwrap();
        for i in 0..sum.weights().len() {
            assert!((sum.weights()[i] - a.weights()[i] - b.weights()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sobel_constant_image_is_zero_inside() {
        let img = Tensor::from_fn(6, 6, 1, |_, _, _| 0.7);
        let m = sobel_gradient(&img).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert!(m.get(y, x, 0).abs() < 1e-12);
            }
        }
        // Border values come from the zero padding.
        assert!(m.get(0, 2, 0) > 0.0);
    }

    #[test]
    fn sobel_step_edge_magnitude_is_four() {
        // Vertical step of height 1: columns >= 4 are 1.0. Interior pixels
        // adjacent to the step see +-1, +-2, +-1 across it, summing to 4.
        let img = Tensor::from_fn(8, 8, 1, |_, x, _| if x >= 4 { 1.0 } else { 0.0 });
        let m = sobel_gradient(&img).unwrap();
        for y in 1..7 {
            assert!((m.get(y, 3, 0) - 4.0).abs() < 1e-12);
            assert!((m.get(y, 4, 0) - 4.0).abs() < 1e-12);
            assert!(m.get(y, 1, 0).abs() < 1e-12);
            assert!(m.get(y, 6, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn sobel_transpose_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let img = random_tensor(&mut rng, 7, 5, 1);
        let m_t = sobel_gradient(&img.transpose()).unwrap();
        let t_m = sobel_gradient(&img).unwrap().transpose();
        assert!(max_abs_diff(&m_t, &t_m) < 1e-12);
    }

    #[test]
    fn sobel_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let img = random_tensor(&mut rng, 9, 9, 1);
        assert!(sobel_gradient(&img).unwrap().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sobel_rejects_multichannel() {
        assert!(sobel_gradient(&Tensor::zeros(4, 4, 2)).is_err());
    }

    #[test]
    fn concat_shapes_and_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = random_tensor(&mut rng, 3, 4, 1);
        let b = random_tensor(&mut rng, 3, 4, 1);
        let ab = channel_concat(&a, &b).unwrap();
        assert_eq!(ab.shape(), (3, 4, 2));
        let zeros = Tensor::zeros(3, 4, 1);
        let az = channel_concat(&a, &zeros).unwrap();
        assert_eq!(az.slice_channel(0).unwrap().data(), a.data());
    }

    #[test]
    fn concat_is_associative_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = random_tensor(&mut rng, 3, 3, 1);
        let b = random_tensor(&mut rng, 3, 3, 2);
        let c = random_tensor(&mut rng, 3, 3, 1);
        let left = channel_concat(&channel_concat(&a, &b).unwrap(), &c).unwrap();
        let right = channel_concat(&a, &channel_concat(&b, &c).unwrap()).unwrap();
        assert_eq!(left.data(), right.data());
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(3, 3, 1);
        let b = Tensor::zeros(4, 3, 1);
        assert!(channel_concat(&a, &b).is_err());
    }

    #[test]
    fn split_inverts_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_tensor(&mut rng, 4, 4, 2);
        let b = random_tensor(&mut rng, 4, 4, 3);
        let (a2, b2) = channel_split(&channel_concat(&a, &b).unwrap(), 2).unwrap();
        assert_eq!(a.data(), a2.data());
        assert_eq!(b.data(), b2.data());
    }

    #[test]
    fn even_kernel_is_rejected() {
        assert!(ConvKernel::zeros(1, 1, 2, 3).is_err());
        assert!(ConvKernel::zeros(1, 1, 3, 4).is_err());
    }

    #[test]
    fn crop_and_border_ops() {
        let t = Tensor::from_fn(5, 5, 1, |y, x, _| (y * 5 + x) as f64);
        let c = t.crop_border(1).unwrap();
        assert_eq!(c.shape(), (3, 3, 1));
        assert_eq!(c.get(0, 0, 0), 6.0);
        let w = t.crop(1, 2, 2, 3).unwrap();
        assert_eq!(w.get(0, 0, 0), 7.0);
        assert_eq!(w.shape(), (2, 3, 1));
    }
}
