//! Primitive layers: convolution (via im2col), batch normalization,
//! ReLU, pooling, and the dense layer. Each stores its own backward
//! caches; gradients accumulate into the owning [`Tensor`]s so a batch can
//! be split into several backward passes if needed.

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{he_uniform, Layer, Tensor};

/// Lowers one padded sample into a (channels·kh·kw, oh·ow) patch matrix so
/// convolution becomes a single matrix product.
pub fn im2col(
    x: &[f64],
    (channels, height, width): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
) -> Array2<f64> {
    let oh = (height + 2 * ph - kh) / sh + 1;
    let ow = (width + 2 * pw - kw) / sw + 1;
    let mut col = Array2::zeros((channels * kh * kw, oh * ow));
    for c in 0..channels {
        let plane = &x[c * height * width..(c + 1) * height * width];
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                for oy in 0..oh {
                    let iy = (oy * sh + i) as isize - ph as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * sw + j) as isize - pw as isize;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        col[(row, oy * ow + ox)] = plane[iy as usize * width + ix as usize];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: accumulates patch-matrix gradients back onto the
/// input plane.
pub fn col2im(
    col: &Array2<f64>,
    out: &mut [f64],
    (channels, height, width): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
) {
    let oh = (height + 2 * ph - kh) / sh + 1;
    let ow = (width + 2 * pw - kw) / sw + 1;
    for c in 0..channels {
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                for oy in 0..oh {
                    let iy = (oy * sh + i) as isize - ph as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * sw + j) as isize - pw as isize;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        out[(c * height + iy as usize) * width + ix as usize] +=
                            col[(row, oy * ow + ox)];
                    }
                }
            }
        }
    }
}

/// 2D convolution. Kernels, strides, and padding may differ per axis,
/// which the 1×7/7×1 factorized stages need.
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    cache: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Tensor::new(he_uniform(
                &[out_channels, in_channels, kernel.0, kernel.1],
                fan_in,
                rng,
            )),
            bias: bias.then(|| Tensor::new(ArrayD::zeros(vec![out_channels]))),
            cache: None,
        }
    }

    pub fn out_size(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (
            (h + 2 * self.padding.0 - self.kernel.0) / self.stride.0 + 1,
            (w + 2 * self.padding.1 - self.kernel.1) / self.stride.1 + 1,
        )
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "convolution channel mismatch");
        let (oh, ow) = self.out_size((h, w));
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, k))
            .expect("contiguous weights");
        let mut out = Array4::zeros((n, self.out_channels, oh, ow));
        for s in 0..n {
            let sample = x.index_axis(Axis(0), s);
            let col = im2col(
                sample.as_slice().expect("standard layout"),
                (c, h, w),
                self.kernel,
                self.stride,
                self.padding,
            );
            let mut prod = w2.dot(&col);
            if let Some(b) = &self.bias {
                let b = b.value.view().into_dimensionality::<Ix1>().expect("1d bias");
                for (o, mut row) in prod.rows_mut().into_iter().enumerate() {
                    row += b[o];
                }
            }
            out.index_axis_mut(Axis(0), s)
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(prod.as_slice().expect("standard layout"));
        }
        self.cache = train.then_some(x);
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let x = self.cache.take().expect("backward without train forward");
        let (n, c, h, w) = x.dim();
        let (_, oc, oh, ow) = grad.dim();
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, k))
            .expect("contiguous weights")
            .to_owned();
        let mut gx = Array4::zeros((n, c, h, w));
        let mut gw = Array2::<f64>::zeros((self.out_channels, k));
        let mut gb = Array1::<f64>::zeros(self.out_channels);
        for s in 0..n {
            let sample = x.index_axis(Axis(0), s);
            // The patch matrix is cheaper to rebuild than to keep for every
            // sample of the batch.
            let col = im2col(
                sample.as_slice().expect("standard layout"),
                (c, h, w),
                self.kernel,
                self.stride,
                self.padding,
            );
            let g2 = grad
                .index_axis(Axis(0), s)
                .into_shape_with_order((oc, oh * ow))
                .expect("standard layout");
            gw += &g2.dot(&col.t());
            if self.bias.is_some() {
                gb += &g2.sum_axis(Axis(1));
            }
            let gcol = w2.t().dot(&g2);
            col2im(
                &gcol,
                gx.index_axis_mut(Axis(0), s)
                    .as_slice_mut()
                    .expect("standard layout"),
                (c, h, w),
                self.kernel,
                self.stride,
                self.padding,
            );
        }
        let mut wgrad = self.weight.grad_mut().view_mut();
        wgrad += &gw
            .into_shape_with_order(vec![
                self.out_channels,
                self.in_channels,
                self.kernel.0,
                self.kernel.1,
            ])
            .expect("contiguous")
            .into_dyn();
        if let Some(b) = &mut self.bias {
            let mut bgrad = b.grad_mut().view_mut();
            bgrad += &gb.into_dyn();
        }
        gx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Per-channel batch normalization. Training uses batch statistics and
/// maintains running estimates; evaluation applies the running estimates,
/// which keeps inference deterministic sample by sample.
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: ArrayD<f64>,
    pub running_var: ArrayD<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

struct BnCache {
    x_hat: Array4<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Tensor::new(ArrayD::ones(vec![channels])),
            beta: Tensor::new(ArrayD::zeros(vec![channels])),
            running_mean: ArrayD::zeros(vec![channels]),
            running_var: ArrayD::ones(vec![channels]),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "batch norm channel mismatch");
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().expect("1d");
        let beta = self.beta.value.view().into_dimensionality::<Ix1>().expect("1d");
        let count = (n * h * w) as f64;
        let mut out = Array4::zeros((n, c, h, w));
        if train {
            let mut x_hat = Array4::zeros((n, c, h, w));
            let mut inv_std = Array1::zeros(c);
            for ch in 0..c {
                let plane = x.index_axis(Axis(1), ch);
                let mean = plane.sum() / count;
                let var = plane.mapv(|v| (v - mean) * (v - mean)).sum() / count;
                let istd = 1.0 / (var + self.eps).sqrt();
                inv_std[ch] = istd;
                let mut xh = x_hat.index_axis_mut(Axis(1), ch);
                xh.assign(&plane.mapv(|v| (v - mean) * istd));
                let mut o = out.index_axis_mut(Axis(1), ch);
                o.assign(&xh.mapv(|v| gamma[ch] * v + beta[ch]));
                // Running estimates follow the convention of unbiased
                // variance for the eval path.
                let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                self.running_mean[ch] =
                    (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
                self.running_var[ch] =
                    (1.0 - self.momentum) * self.running_var[ch] + self.momentum * unbiased;
            }
            self.cache = Some(BnCache { x_hat, inv_std });
        } else {
            for ch in 0..c {
                let mean = self.running_mean[ch];
                let istd = 1.0 / (self.running_var[ch] + self.eps).sqrt();
                let plane = x.index_axis(Axis(1), ch);
                let mut o = out.index_axis_mut(Axis(1), ch);
                o.assign(&plane.mapv(|v| gamma[ch] * ((v - mean) * istd) + beta[ch]));
            }
        }
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let BnCache { x_hat, inv_std } =
            self.cache.take().expect("backward without train forward");
        let (n, c, h, w) = grad.dim();
        let count = (n * h * w) as f64;
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned();
        let mut gx = Array4::zeros((n, c, h, w));
        let mut dgamma = Array1::<f64>::zeros(c);
        let mut dbeta = Array1::<f64>::zeros(c);
        for ch in 0..c {
            let g = grad.index_axis(Axis(1), ch);
            let xh = x_hat.index_axis(Axis(1), ch);
            let dg: f64 = (&g * &xh).sum();
            let db: f64 = g.sum();
            dgamma[ch] = dg;
            dbeta[ch] = db;
            // Batch statistics depend on every element, so the gradient
            // carries the two mean-removal terms.
            let scale = gamma[ch] * inv_std[ch];
            let mut o = gx.index_axis_mut(Axis(1), ch);
            o.assign(&(&g - &(xh.mapv(|v| v * dg / count)) - db / count).mapv(|v| v * scale));
        }
        let mut gg = self.gamma.grad_mut().view_mut();
        gg += &dgamma.into_dyn();
        let mut gb = self.beta.grad_mut().view_mut();
        gb += &dbeta.into_dyn();
        gx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Rectifier.
#[derive(Default)]
pub struct ReLU {
    mask: Option<Array4<f64>>,
}

impl ReLU {
    pub fn new() -> Self {
        ReLU { mask: None }
    }
}

impl Layer for ReLU {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        if train {
            self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        }
        x.mapv(|v| v.max(0.0))
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let mask = self.mask.take().expect("backward without train forward");
        grad * &mask
    }
}

/// Max pooling; padded positions never win the window.
pub struct MaxPool2d {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    cache: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        MaxPool2d {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    fn out_size(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (
            (h + 2 * self.padding.0 - self.kernel.0) / self.stride.0 + 1,
            (w + 2 * self.padding.1 - self.kernel.1) / self.stride.1 + 1,
        )
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.out_size((h, w));
        let mut out = Array4::zeros((n, c, oh, ow));
        let mut argmax = vec![0usize; n * c * oh * ow];
        for s in 0..n {
            for ch in 0..c {
                let plane = x.index_axis(Axis(0), s);
                let plane = plane.index_axis(Axis(0), ch);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = 0usize;
                        for i in 0..self.kernel.0 {
                            let iy = (oy * self.stride.0 + i) as isize - self.padding.0 as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..self.kernel.1 {
                                let ix =
                                    (ox * self.stride.1 + j) as isize - self.padding.1 as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let v = plane[(iy as usize, ix as usize)];
                                if v > best {
                                    best = v;
                                    best_at = iy as usize * w + ix as usize;
                                }
                            }
                        }
                        out[(s, ch, oy, ox)] = best;
                        argmax[((s * c + ch) * oh + oy) * ow + ox] = best_at;
                    }
                }
            }
        }
        self.cache = train.then_some((argmax, (n, c, h, w)));
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let (argmax, (n, c, h, w)) = self.cache.take().expect("backward without train forward");
        let (_, _, oh, ow) = grad.dim();
        let mut gx = Array4::zeros((n, c, h, w));
        for s in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let at = argmax[((s * c + ch) * oh + oy) * ow + ox];
                        gx[(s, ch, at / w, at % w)] += grad[(s, ch, oy, ox)];
                    }
                }
            }
        }
        gx
    }
}

/// Average pooling; the divisor is the full window area, so padded
/// positions count as zeros.
pub struct AvgPool2d {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    cache: Option<(usize, usize, usize, usize)>,
}

impl AvgPool2d {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        AvgPool2d {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    fn out_size(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (
            (h + 2 * self.padding.0 - self.kernel.0) / self.stride.0 + 1,
            (w + 2 * self.padding.1 - self.kernel.1) / self.stride.1 + 1,
        )
    }
}

impl Layer for AvgPool2d {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.out_size((h, w));
        let area = (self.kernel.0 * self.kernel.1) as f64;
        let mut out = Array4::zeros((n, c, oh, ow));
        for s in 0..n {
            for ch in 0..c {
                let plane = x.index_axis(Axis(0), s);
                let plane = plane.index_axis(Axis(0), ch);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut sum = 0.0;
                        for i in 0..self.kernel.0 {
                            let iy = (oy * self.stride.0 + i) as isize - self.padding.0 as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..self.kernel.1 {
                                let ix =
                                    (ox * self.stride.1 + j) as isize - self.padding.1 as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                sum += plane[(iy as usize, ix as usize)];
                            }
                        }
                        out[(s, ch, oy, ox)] = sum / area;
                    }
                }
            }
        }
        self.cache = train.then_some((n, c, h, w));
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = self.cache.take().expect("backward without train forward");
        let (_, _, oh, ow) = grad.dim();
        let area = (self.kernel.0 * self.kernel.1) as f64;
        let mut gx = Array4::zeros((n, c, h, w));
        for s in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = grad[(s, ch, oy, ox)] / area;
                        for i in 0..self.kernel.0 {
                            let iy = (oy * self.stride.0 + i) as isize - self.padding.0 as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for j in 0..self.kernel.1 {
                                let ix =
                                    (ox * self.stride.1 + j) as isize - self.padding.1 as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                gx[(s, ch, iy as usize, ix as usize)] += share;
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

/// Collapses each channel plane to its mean, the step from feature maps to
/// an embedding vector.
#[derive(Default)]
pub struct GlobalAvgPool {
    cache: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { cache: None }
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let mut out = Array4::zeros((n, c, 1, 1));
        for s in 0..n {
            for ch in 0..c {
                let plane = x.index_axis(Axis(0), s);
                out[(s, ch, 0, 0)] = plane.index_axis(Axis(0), ch).mean().expect("nonempty plane");
            }
        }
        self.cache = train.then_some((h, w));
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let (h, w) = self.cache.take().expect("backward without train forward");
        let (n, c, _, _) = grad.dim();
        let share = 1.0 / (h * w) as f64;
        let mut gx = Array4::zeros((n, c, h, w));
        for s in 0..n {
            for ch in 0..c {
                let g = grad[(s, ch, 0, 0)] * share;
                gx.index_axis_mut(Axis(0), s)
                    .index_axis_mut(Axis(0), ch)
                    .fill(g);
            }
        }
        gx
    }
}

/// Fully connected layer over row vectors: y = x·Wᵀ + b. Not part of the
/// NCHW [`Layer`] chain; heads and the transformer drive it directly.
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Tensor,
    pub bias: Tensor,
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            in_features,
            out_features,
            weight: Tensor::new(he_uniform(&[out_features, in_features], in_features, rng)),
            bias: Tensor::new(ArrayD::zeros(vec![out_features])),
            cache: None,
        }
    }

    pub fn zeroed(in_features: usize, out_features: usize) -> Self {
        Linear {
            in_features,
            out_features,
            weight: Tensor::new(ArrayD::zeros(vec![out_features, in_features])),
            bias: Tensor::new(ArrayD::zeros(vec![out_features])),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2d");
        let b = self.bias.value.view().into_dimensionality::<Ix1>().expect("1d");
        let mut out = x.dot(&w.t());
        for mut row in out.rows_mut() {
            row += &b;
        }
        if train {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.take().expect("backward without train forward");
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("2d").to_owned();
        {
            let gw = grad.t().dot(&x);
            let mut acc = self.weight.grad_mut().view_mut();
            acc += &gw.into_dyn();
            let gb = grad.sum_axis(Axis(0));
            let mut acc = self.bias.grad_mut().view_mut();
            acc += &gb.into_dyn();
        }
        grad.dot(&w)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{fd_grad, relative_gap};
    use ndarray::{array, Array};
    use rand::Rng;
    use rand::SeedableRng;

    fn rand4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
        Array4::from_shape_simple_fn(shape, || rng.random_range(-1.0..=1.0))
    }

    fn readout(out: &Array4<f64>, probe: &Array4<f64>) -> f64 {
        (out * probe).sum()
    }

    #[test]
    fn im2col_reproduces_hand_built_patches() {
        // 1 channel, 3x3 input, 2x2 kernel, stride 1, no padding.
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let col = im2col(&x, (1, 3, 3), (2, 2), (1, 1), (0, 0));
        let expected = array![
            [1.0, 2.0, 4.0, 5.0],
            [2.0, 3.0, 5.0, 6.0],
            [4.0, 5.0, 7.0, 8.0],
            [5.0, 6.0, 8.0, 9.0],
        ];
        assert_eq!(col, expected);
    }

    #[test]
    fn im2col_pads_with_zeros() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let col = im2col(&x, (1, 2, 2), (2, 2), (2, 2), (1, 1));
        // Four windows, each seeing one real value in one corner.
        assert_eq!(col.shape(), &[4, 4]);
        assert_eq!(col.column(0).to_vec(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(col.column(3).to_vec(), vec![4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_forward_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(1, 1, (2, 2), (1, 1), (0, 0), true, &mut rng);
        conv.weight.value.assign(
            &array![[[[1.0, 0.0], [0.0, -1.0]]]].into_dyn(),
        );
        conv.bias.as_mut().unwrap().value.assign(&array![0.5].into_dyn());
        let x = Array4::from_shape_vec((1, 1, 2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = conv.forward(x, false);
        // Window [a b; d e] maps to a - e + 0.5.
        assert_eq!(out, Array4::from_shape_vec((1, 1, 1, 2), vec![-3.5, -3.5]).unwrap());
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut conv = Conv2d::new(2, 3, (3, 3), (2, 2), (1, 1), true, &mut rng);
        let x = rand4((2, 2, 5, 5), &mut rng);
        let probe = rand4((2, 3, 3, 3), &mut rng);

        let out = conv.forward(x.clone(), true);
        let _loss0 = readout(&out, &probe);
        let gx = conv.backward(probe.clone());

        let h = 1e-6;
        // Input gradient at a few positions.
        for &(s, c, i, j) in &[(0, 0, 0, 0), (1, 1, 2, 3), (0, 1, 4, 4)] {
            let mut xp = x.clone();
            let orig = xp[(s, c, i, j)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(s, c, i, j)] = v;
                    readout(&conv.forward(xp.clone(), false), &probe)
                },
                h,
            );
            assert!(relative_gap(gx[(s, c, i, j)], num) < 1e-6);
        }
        // Weight gradient spot checks.
        for &flat in &[0usize, 10, 53] {
            let orig = conv.weight.value.as_slice().unwrap()[flat];
            let analytic = conv.weight.grad().unwrap().as_slice().unwrap()[flat];
            let num = fd_grad(
                orig,
                |v| {
                    conv.weight.value.as_slice_mut().unwrap()[flat] = v;
                    readout(&conv.forward(x.clone(), false), &probe)
                },
                h,
            );
            assert!(relative_gap(analytic, num) < 1e-6);
        }
        // Bias gradient equals the probe sum per output channel.
        let gb = conv.bias.as_ref().unwrap().grad().unwrap().clone();
        for o in 0..3 {
            let expected: f64 = probe.index_axis(Axis(1), o).sum();
            assert!((gb.as_slice().unwrap()[o] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_kernel_shapes_work() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::new(4, 6, (1, 7), (1, 1), (0, 3), false, &mut rng);
        let out = conv.forward(rand4((1, 4, 9, 9), &mut rng), false);
        assert_eq!(out.dim(), (1, 6, 9, 9));
        let mut conv = Conv2d::new(4, 6, (7, 1), (1, 1), (3, 0), false, &mut rng);
        let out = conv.forward(rand4((1, 4, 9, 9), &mut rng), false);
        assert_eq!(out.dim(), (1, 6, 9, 9));
    }

    #[test]
    fn batchnorm_normalizes_batch_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new(2);
        let x = rand4((4, 2, 3, 3), &mut rng) * 5.0 + 2.0;
        let out = bn.forward(x, true);
        for ch in 0..2 {
            let plane = out.index_axis(Axis(1), ch);
            let mean = plane.mean().unwrap();
            let var = plane.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-12);
            // The eps in the denominator shaves a hair off unit variance.
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_statistics() {
        let mut bn = BatchNorm2d::new(1);
        bn.running_mean[0] = 10.0;
        bn.running_var[0] = 4.0;
        let x = Array4::from_elem((1, 1, 1, 2), 12.0);
        let out = bn.forward(x, false);
        // (12 - 10) / sqrt(4 + eps) ~= 1.
        assert!((out[(0, 0, 0, 0)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bn = BatchNorm2d::new(2);
        bn.gamma.value.as_slice_mut().unwrap()[0] = 1.3;
        bn.beta.value.as_slice_mut().unwrap()[1] = -0.4;
        let x = rand4((3, 2, 2, 2), &mut rng);
        let probe = rand4((3, 2, 2, 2), &mut rng);

        let out = bn.forward(x.clone(), true);
        let _ = readout(&out, &probe);
        let gx = bn.backward(probe.clone());

        let h = 1e-6;
        for &(s, c, i, j) in &[(0, 0, 0, 0), (1, 1, 1, 0), (2, 0, 1, 1)] {
            let mut xp = x.clone();
            let orig = xp[(s, c, i, j)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(s, c, i, j)] = v;
                    readout(&bn.forward(xp.clone(), true), &probe)
                },
                h,
            );
            assert!(
                relative_gap(gx[(s, c, i, j)], num) < 1e-5,
                "bn input grad mismatch at {:?}: {} vs {}",
                (s, c, i, j),
                gx[(s, c, i, j)],
                num
            );
        }
        for ch in 0..2 {
            let analytic = bn.gamma.grad().unwrap().as_slice().unwrap()[ch];
            let orig = bn.gamma.value.as_slice().unwrap()[ch];
            let num = fd_grad(
                orig,
                |v| {
                    bn.gamma.value.as_slice_mut().unwrap()[ch] = v;
                    readout(&bn.forward(x.clone(), true), &probe)
                },
                h,
            );
            assert!(relative_gap(analytic, num) < 1e-6);
        }
    }

    #[test]
    fn relu_masks_gradient() {
        let mut relu = ReLU::new();
        let x = Array4::from_shape_vec((1, 1, 1, 4), vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
        let out = relu.forward(x, true);
        assert_eq!(out.as_slice().unwrap(), &[0.0, 0.0, 0.5, 2.0]);
        let g = relu.backward(Array4::from_elem((1, 1, 1, 4), 1.0));
        assert_eq!(g.as_slice().unwrap(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn maxpool_picks_window_maxima() {
        let mut pool = MaxPool2d::new((2, 2), (2, 2), (0, 0));
        let x = Array4::from_shape_vec(
            (1, 1, 4, 4),
            vec![
                1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0, 9.0, 10.0, 13.0, 14.0, 11.0, 12.0, 15.0,
                16.0,
            ],
        )
        .unwrap();
        let out = pool.forward(x, false);
        assert_eq!(out.as_slice().unwrap(), &[4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let mut pool = MaxPool2d::new((3, 3), (2, 2), (1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand4((2, 2, 5, 5), &mut rng);
        let out = pool.forward(x.clone(), true);
        let probe = rand4((2, 2, out.dim().2, out.dim().3), &mut rng);
        let gx = pool.backward(probe.clone());

        let h = 1e-6;
        for &(s, c, i, j) in &[(0, 0, 0, 0), (1, 1, 2, 2), (0, 1, 4, 3)] {
            let mut xp = x.clone();
            let orig = xp[(s, c, i, j)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(s, c, i, j)] = v;
                    readout(&pool.forward(xp.clone(), false), &probe)
                },
                h,
            );
            assert!(relative_gap(gx[(s, c, i, j)], num) < 1e-6);
        }
    }

    #[test]
    fn avgpool_counts_padding_in_divisor() {
        let mut pool = AvgPool2d::new((3, 3), (1, 1), (1, 1));
        let x = Array4::from_elem((1, 1, 3, 3), 9.0);
        let out = pool.forward(x, false);
        // Corner window covers 4 real cells of value 9 over an area of 9.
        assert!((out[(0, 0, 0, 0)] - 4.0).abs() < 1e-12);
        // Center window covers all 9 cells.
        assert!((out[(0, 0, 1, 1)] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn avgpool_gradients_match_finite_differences() {
        let mut pool = AvgPool2d::new((2, 2), (2, 2), (0, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = rand4((1, 2, 4, 4), &mut rng);
        let out = pool.forward(x.clone(), true);
        let probe = rand4((1, 2, out.dim().2, out.dim().3), &mut rng);
        let gx = pool.backward(probe.clone());
        let h = 1e-6;
        for &(i, j) in &[(0, 0), (3, 2)] {
            let mut xp = x.clone();
            let orig = xp[(0, 0, i, j)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(0, 0, i, j)] = v;
                    readout(&pool.forward(xp.clone(), false), &probe)
                },
                h,
            );
            assert!(relative_gap(gx[(0, 0, i, j)], num) < 1e-6);
        }
    }

    #[test]
    fn global_pool_averages_each_plane() {
        let mut pool = GlobalAvgPool::new();
        let x = Array4::from_shape_vec((1, 2, 2, 2), vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0])
            .unwrap();
        let out = pool.forward(x, true);
        assert_eq!(out.dim(), (1, 2, 1, 1));
        assert!((out[(0, 0, 0, 0)] - 2.5).abs() < 1e-12);
        assert!((out[(0, 1, 0, 0)] - 10.0).abs() < 1e-12);
        let gx = pool.backward(Array4::from_shape_vec((1, 2, 1, 1), vec![4.0, 8.0]).unwrap());
        assert!(gx.index_axis(Axis(1), 0).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(gx.index_axis(Axis(1), 1).iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn linear_matches_hand_arithmetic_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut lin = Linear::new(3, 2, &mut rng);
        lin.weight
            .value
            .assign(&array![[1.0, 0.0, 2.0], [0.0, -1.0, 1.0]].into_dyn());
        lin.bias.value.assign(&array![0.5, -0.5].into_dyn());
        let x = array![[1.0, 2.0, 3.0]];
        let out = lin.forward(&x, true);
        assert_eq!(out, array![[7.5, 0.5]]);

        let probe = Array::from_shape_simple_fn((1, 2), || rng.random_range(-1.0..=1.0));
        let _ = lin.forward(&x, true);
        let gx = lin.backward(&probe);
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x.clone();
            let orig = xp[(0, j)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(0, j)] = v;
                    (&lin.forward(&xp, false) * &probe).sum()
                },
                h,
            );
            assert!(relative_gap(gx[(0, j)], num) < 1e-8);
        }
    }
}
