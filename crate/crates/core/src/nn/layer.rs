use super::gemm::{gemm, transpose, widen};
use super::{NnError, Tensor};

/// One stage of a feed-forward network.
///
/// Convolution weights are `[out, in, k, k]`; transposed-convolution
/// weights are `[in, out, k, k]`; dense weights are `[out, in]`. Dense
/// layers flatten whatever per-sample shape they receive.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TransposedConv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    LeakyRelu {
        slope: f32,
    },
    Tanh,
}

impl LayerSpec {
    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn transposed_conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec::TransposedConv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn leaky_relu(slope: f32) -> Self {
        LayerSpec::LeakyRelu { slope }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::IncompatibleSpec(msg));
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
                    return bad(format!("degenerate convolution {self:?}"));
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return bad(format!("degenerate dense layer {self:?}"));
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                if !(slope > 0.0 && slope < 1.0) {
                    return bad(format!("leaky slope {slope} outside (0, 1)"));
                }
            }
            LayerSpec::Tanh => {}
        }
        Ok(())
    }

    /// Shapes of the weight and bias tensors, empty for activations.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![in_channels, out_channels, kernel, kernel],
                vec![out_channels],
            ],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` of the weight tensor, for Glorot bounds.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                in_channels * kernel * kernel,
                out_channels * kernel * kernel,
            )),
            LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = || {
            Err(NnError::ShapeMismatch(format!(
                "{self:?} cannot take per-sample shape {input:?}"
            )))
        };
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = input else { return mismatch() };
                if *c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return mismatch();
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = input else { return mismatch() };
                if *c != in_channels || *h == 0 || *w == 0 {
                    return mismatch();
                }
                let full_h = (h - 1) * stride + kernel;
                let full_w = (w - 1) * stride + kernel;
                if full_h <= 2 * padding || full_w <= 2 * padding {
                    return mismatch();
                }
                Ok(vec![
                    out_channels,
                    full_h - 2 * padding,
                    full_w - 2 * padding,
                ])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if input.iter().product::<usize>() != inputs {
                    return mismatch();
                }
                Ok(vec![outputs])
            }
            LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh => Ok(input.to_vec()),
        }
    }

    pub(crate) fn forward(&self, params: &[Tensor], x: &Tensor) -> Result<Tensor, NnError> {
        let sample = &x.shape()[1..];
        let out_sample = self.output_shape(sample)?;
        let n = x.batch();
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&out_sample);
        let data = match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let g = Geometry::new(kernel, stride, padding, &out_sample[1..], &sample[1..]);
                conv_forward(
                    x.data(),
                    &params[0],
                    &params[1],
                    n,
                    in_channels,
                    out_channels,
                    &g,
                )
            }
            LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let g = Geometry::new(kernel, stride, padding, &sample[1..], &out_sample[1..]);
                tconv_forward(
                    x.data(),
                    &params[0],
                    &params[1],
                    n,
                    in_channels,
                    out_channels,
                    &g,
                )
            }
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = (params[0].data(), params[1].data());
                let mut out = Vec::with_capacity(n * outputs);
                for xs in x.data().chunks_exact(inputs) {
                    for (o, wrow) in w.chunks_exact(inputs).enumerate() {
                        out.push((b[o] as f64 + dot(wrow, xs)) as f32);
                    }
                }
                out
            }
            LayerSpec::LeakyRelu { slope } => x
                .data()
                .iter()
                .map(|&v| if v > 0.0 { v } else { slope * v })
                .collect(),
            LayerSpec::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
        };
        Tensor::new(out_shape, data)
    }

    /// Returns parameter gradients (empty for activations) and, when asked,
    /// the gradient with respect to the layer input.
    pub(crate) fn backward(
        &self,
        params: &[Tensor],
        x: &Tensor,
        y: &Tensor,
        gy: &Tensor,
        need_input: bool,
    ) -> (Vec<Tensor>, Option<Tensor>) {
        let n = x.batch();
        let sample = &x.shape()[1..];
        let out_sample = &y.shape()[1..];
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let g = Geometry::new(kernel, stride, padding, &out_sample[1..], &sample[1..]);
                let (gw, gb, gx) = conv_backward(
                    x.data(),
                    gy.data(),
                    &params[0],
                    n,
                    in_channels,
                    out_channels,
                    &g,
                    need_input,
                );
                let gx = gx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("input shape"));
                (vec![gw, gb], gx)
            }
            LayerSpec::TransposedConv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let g = Geometry::new(kernel, stride, padding, &sample[1..], &out_sample[1..]);
                let (gw, gb, gx) = tconv_backward(
                    x.data(),
                    gy.data(),
                    &params[0],
                    n,
                    in_channels,
                    out_channels,
                    &g,
                    need_input,
                );
                let gx = gx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("input shape"));
                (vec![gw, gb], gx)
            }
            LayerSpec::Dense { inputs, outputs } => {
                let w = params[0].data();
                let mut gw = vec![0f64; outputs * inputs];
                let mut gb = vec![0f64; outputs];
                for (xs, gs) in x
                    .data()
                    .chunks_exact(inputs)
                    .zip(gy.data().chunks_exact(outputs))
                {
                    for (o, &go) in gs.iter().enumerate() {
                        let go = go as f64;
                        gb[o] += go;
                        for (acc, &xi) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(xs) {
                            *acc += go * xi as f64;
                        }
                    }
                }
                let gx = need_input.then(|| {
                    let mut gx = Vec::with_capacity(n * inputs);
                    let mut acc = vec![0f64; inputs];
                    for gs in gy.data().chunks_exact(outputs) {
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for (wrow, &go) in w.chunks_exact(inputs).zip(gs) {
                            axpy(&mut acc, go as f64, wrow);
                        }
                        gx.extend(acc.iter().map(|&a| a as f32));
                    }
                    Tensor::new(x.shape().to_vec(), gx).expect("input shape")
                });
                (
                    vec![
                        to_tensor(params[0].shape(), &gw),
                        to_tensor(params[1].shape(), &gb),
                    ],
                    gx,
                )
            }
            LayerSpec::LeakyRelu { slope } => {
                let gx = need_input.then(|| {
                    let d = x
                        .data()
                        .iter()
                        .zip(gy.data())
                        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                        .collect();
                    Tensor::new(x.shape().to_vec(), d).expect("input shape")
                });
                (Vec::new(), gx)
            }
            LayerSpec::Tanh => {
                let gx = need_input.then(|| {
                    let d = y
                        .data()
                        .iter()
                        .zip(gy.data())
                        .map(|(&t, &g)| ((1.0 - t as f64 * t as f64) * g as f64) as f32)
                        .collect();
                    Tensor::new(x.shape().to_vec(), d).expect("input shape")
                });
                (Vec::new(), gx)
            }
        }
    }
}

fn to_tensor(shape: &[usize], acc: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), acc.iter().map(|&v| v as f32).collect()).expect("param shape")
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn axpy(acc: &mut [f64], alpha: f64, x: &[f32]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += alpha * v as f64;
    }
}

/// Index relation shared by convolution and its transpose: a position `i`
/// on the "small" grid touches `i * stride + k - padding` on the "big"
/// grid. For a convolution the output is small; for a transposed
/// convolution the input is.
struct Geometry {
    kernel: usize,
    stride: usize,
    padding: usize,
    small: (usize, usize),
    big: (usize, usize),
}

impl Geometry {
    fn new(kernel: usize, stride: usize, padding: usize, small: &[usize], big: &[usize]) -> Self {
        Self {
            kernel,
            stride,
            padding,
            small: (small[0], small[1]),
            big: (big[0], big[1]),
        }
    }

    fn small_len(&self) -> usize {
        self.small.0 * self.small.1
    }

    fn big_len(&self) -> usize {
        self.big.0 * self.big.1
    }

    /// Small indices `i` with `0 <= i * stride + k - padding < big`.
    fn span(&self, k: usize, small: usize, big: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if big + p > k {
            ((big + p - k - 1) / s + 1).min(small)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Visits every aligned row segment for kernel tap `(ky, kx)`:
    /// `f(small_offset, big_offset, len)` where consecutive small elements
    /// map to big elements `stride` apart.
    fn rows(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (ylo, yhi) = self.span(ky, self.small.0, self.big.0);
        let (xlo, xhi) = self.span(kx, self.small.1, self.big.1);
        if xhi == xlo {
            return;
        }
        for sy in ylo..yhi {
            let by = sy * self.stride + ky - self.padding;
            let bx = xlo * self.stride + kx - self.padding;
            f(sy * self.small.1 + xlo, by * self.big.1 + bx, xhi - xlo);
        }
    }

    /// Unfolds `channels` big-grid planes into a `[channels * k * k, small]`
    /// matrix; entries that fall in the padding are zero.
    fn im2col(&self, channels: usize, big: &[f32]) -> Vec<f64> {
        let (k, s) = (self.kernel, self.stride);
        let (blen, slen) = (self.big_len(), self.small_len());
        let mut col = vec![0f64; channels * k * k * slen];
        for c in 0..channels {
            let plane = &big[c * blen..(c + 1) * blen];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((c * k + ky) * k + kx) * slen..][..slen];
                    self.rows(ky, kx, |so, bo, len| {
                        for (j, dst) in row[so..so + len].iter_mut().enumerate() {
                            *dst = plane[bo + j * s] as f64;
                        }
                    });
                }
            }
        }
        col
    }

    /// Adjoint of [`Geometry::im2col`]: folds the matrix back onto the big
    /// grid, summing overlaps in a fixed order.
    fn col2im(&self, channels: usize, col: &[f64], big: &mut [f64]) {
        let (k, s) = (self.kernel, self.stride);
        let (blen, slen) = (self.big_len(), self.small_len());
        for c in 0..channels {
            let plane = &mut big[c * blen..(c + 1) * blen];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((c * k + ky) * k + kx) * slen..][..slen];
                    self.rows(ky, kx, |so, bo, len| {
                        for (j, &v) in row[so..so + len].iter().enumerate() {
                            plane[bo + j * s] += v;
                        }
                    });
                }
            }
        }
    }
}

fn narrow(v: &[f64]) -> impl Iterator<Item = f32> + '_ {
    v.iter().map(|&a| a as f32)
}

fn channel_sums(gy: &[f32], channels: usize, len: usize, acc: &mut [f64]) {
    for (c, a) in acc.iter_mut().enumerate().take(channels) {
        *a += gy[c * len..(c + 1) * len]
            .iter()
            .map(|&v| v as f64)
            .sum::<f64>();
    }
}

fn conv_forward(
    x: &[f32],
    weight: &Tensor,
    bias: &Tensor,
    n: usize,
    cin: usize,
    cout: usize,
    g: &Geometry,
) -> Vec<f32> {
    let r = cin * g.kernel * g.kernel;
    let (ilen, olen) = (g.big_len(), g.small_len());
    let w = widen(weight.data());
    let mut out = Vec::with_capacity(n * cout * olen);
    for xs in x.chunks_exact(cin * ilen).take(n) {
        let col = g.im2col(cin, xs);
        let mut acc: Vec<f64> = bias
            .data()
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b as f64, olen))
            .collect();
        gemm(cout, olen, r, &w, &col, &mut acc);
        out.extend(narrow(&acc));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f32],
    gy: &[f32],
    weight: &Tensor,
    n: usize,
    cin: usize,
    cout: usize,
    g: &Geometry,
    need_input: bool,
) -> (Tensor, Tensor, Option<Vec<f32>>) {
    let r = cin * g.kernel * g.kernel;
    let (ilen, olen) = (g.big_len(), g.small_len());
    let wt = need_input.then(|| transpose(cout, r, &widen(weight.data())));
    let mut gw = vec![0f64; cout * r];
    let mut gb = vec![0f64; cout];
    let mut gx = need_input.then(|| Vec::with_capacity(n * cin * ilen));
    for s in 0..n {
        let xs = &x[s * cin * ilen..(s + 1) * cin * ilen];
        let gs = widen(&gy[s * cout * olen..(s + 1) * cout * olen]);
        channel_sums(&gy[s * cout * olen..], cout, olen, &mut gb);
        let col = g.im2col(cin, xs);
        gemm(cout, r, olen, &gs, &transpose(r, olen, &col), &mut gw);
        if let (Some(gx), Some(wt)) = (gx.as_mut(), wt.as_ref()) {
            let mut dcol = vec![0f64; r * olen];
            gemm(r, olen, cout, wt, &gs, &mut dcol);
            let mut acc = vec![0f64; cin * ilen];
            g.col2im(cin, &dcol, &mut acc);
            gx.extend(narrow(&acc));
        }
    }
    (to_tensor(weight.shape(), &gw), to_tensor(&[cout], &gb), gx)
}

fn tconv_forward(
    x: &[f32],
    weight: &Tensor,
    bias: &Tensor,
    n: usize,
    cin: usize,
    cout: usize,
    g: &Geometry,
) -> Vec<f32> {
    let r = cout * g.kernel * g.kernel;
    let (ilen, olen) = (g.small_len(), g.big_len());
    let wt = transpose(cin, r, &widen(weight.data()));
    let mut out = Vec::with_capacity(n * cout * olen);
    for xs in x.chunks_exact(cin * ilen).take(n) {
        let mut col = vec![0f64; r * ilen];
        gemm(r, ilen, cin, &wt, &widen(xs), &mut col);
        let mut acc: Vec<f64> = bias
            .data()
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b as f64, olen))
            .collect();
        g.col2im(cout, &col, &mut acc);
        out.extend(narrow(&acc));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn tconv_backward(
    x: &[f32],
    gy: &[f32],
    weight: &Tensor,
    n: usize,
    cin: usize,
    cout: usize,
    g: &Geometry,
    need_input: bool,
) -> (Tensor, Tensor, Option<Vec<f32>>) {
    let r = cout * g.kernel * g.kernel;
    let (ilen, olen) = (g.small_len(), g.big_len());
    let w = widen(weight.data());
    let mut gw = vec![0f64; cin * r];
    let mut gb = vec![0f64; cout];
    let mut gx = need_input.then(|| Vec::with_capacity(n * cin * ilen));
    for s in 0..n {
        let xs = widen(&x[s * cin * ilen..(s + 1) * cin * ilen]);
        let gs = &gy[s * cout * olen..(s + 1) * cout * olen];
        channel_sums(gs, cout, olen, &mut gb);
        let col = g.im2col(cout, gs);
        gemm(cin, r, ilen, &xs, &transpose(r, ilen, &col), &mut gw);
        if let Some(gx) = gx.as_mut() {
            let mut acc = vec![0f64; cin * ilen];
            gemm(cin, ilen, r, &w, &col, &mut acc);
            gx.extend(narrow(&acc));
        }
    }
    (to_tensor(weight.shape(), &gw), to_tensor(&[cout], &gb), gx)
}
