//! Vision transformer feature extractor: patch embedding, a class token, a
//! stack of pre-norm attention/MLP blocks, and a final layer norm whose
//! class-token row is the embedding. Activations flow as (batch, tokens,
//! dim).

use ndarray::{Array2, Array3, Array4, ArrayD, Ix1};
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv2d, Linear};
use super::{xavier_uniform, FeatureExtractor, Layer, Tensor};
use rand::Rng;

/// Per-token normalization over the feature dimension.
pub struct LayerNorm {
    pub dim: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
    cache: Option<(Array3<f64>, Array2<f64>)>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            dim,
            gamma: Tensor::new(ArrayD::ones(vec![dim])),
            beta: Tensor::new(ArrayD::zeros(vec![dim])),
            eps: 1e-6,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let (n, t, d) = x.dim();
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().expect("1d");
        let beta = self.beta.value.view().into_dimensionality::<Ix1>().expect("1d");
        let mut out = Array3::zeros((n, t, d));
        let mut x_hat = Array3::zeros((n, t, d));
        let mut inv_std = Array2::zeros((n, t));
        for s in 0..n {
            for tok in 0..t {
                let row = x.slice(ndarray::s![s, tok, ..]);
                let mean = row.mean().expect("nonempty");
                let var = row.mapv(|v| (v - mean) * (v - mean)).mean().expect("nonempty");
                let istd = 1.0 / (var + self.eps).sqrt();
                inv_std[(s, tok)] = istd;
                for f in 0..d {
                    let xh = (row[f] - mean) * istd;
                    x_hat[(s, tok, f)] = xh;
                    out[(s, tok, f)] = gamma[f] * xh + beta[f];
                }
            }
        }
        if train {
            self.cache = Some((x_hat, inv_std));
        }
        out
    }

    pub fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (x_hat, inv_std) = self.cache.take().expect("backward without train forward");
        let (n, t, d) = grad.dim();
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned();
        let mut gx = Array3::zeros((n, t, d));
        let mut dgamma = vec![0.0f64; d];
        let mut dbeta = vec![0.0f64; d];
        for s in 0..n {
            for tok in 0..t {
                let mut mean_gy = 0.0;
                let mut mean_gy_xh = 0.0;
                for f in 0..d {
                    let gy = grad[(s, tok, f)] * gamma[f];
                    mean_gy += gy;
                    mean_gy_xh += gy * x_hat[(s, tok, f)];
                    dgamma[f] += grad[(s, tok, f)] * x_hat[(s, tok, f)];
                    dbeta[f] += grad[(s, tok, f)];
                }
                mean_gy /= d as f64;
                mean_gy_xh /= d as f64;
                let istd = inv_std[(s, tok)];
                for f in 0..d {
                    let gy = grad[(s, tok, f)] * gamma[f];
                    gx[(s, tok, f)] = (gy - mean_gy - x_hat[(s, tok, f)] * mean_gy_xh) * istd;
                }
            }
        }
        for (f, (&dg, &db)) in dgamma.iter().zip(&dbeta).enumerate() {
            self.gamma.grad_mut()[f] += dg;
            self.beta.grad_mut()[f] += db;
        }
        gx
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Gaussian error linear unit, tanh approximation. The derivative
/// differentiates the same approximation, so gradient checks close.
pub struct Gelu {
    cache: Option<Array2<f64>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

impl Gelu {
    pub fn new() -> Self {
        Gelu { cache: None }
    }

    fn value(x: f64) -> f64 {
        0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
    }

    fn derivative(x: f64) -> f64 {
        let u = GELU_C * (x + GELU_A * x * x * x);
        let t = u.tanh();
        let sech2 = 1.0 - t * t;
        0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    }

    pub fn forward(&mut self, x: Array2<f64>, train: bool) -> Array2<f64> {
        let out = x.mapv(Self::value);
        if train {
            self.cache = Some(x);
        }
        out
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.take().expect("backward without train forward");
        grad * &x.mapv(Self::derivative)
    }
}

impl Default for Gelu {
    fn default() -> Self {
        Self::new()
    }
}

/// Scaled dot-product attention over all heads of one block.
pub struct MultiHeadAttention {
    pub dim: usize,
    pub heads: usize,
    qkv: Linear,
    proj: Linear,
    cache: Option<AttnCache>,
}

struct AttnCache {
    q: Vec<Array2<f64>>,
    k: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    attn: Vec<Array2<f64>>,
    tokens: usize,
    batch: usize,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(dim % heads, 0, "head count must divide the model dim");
        let mut qkv = Linear::new(dim, 3 * dim, rng);
        qkv.weight.value = xavier_uniform(&[3 * dim, dim], dim, 3 * dim, rng);
        let mut proj = Linear::new(dim, dim, rng);
        proj.weight.value = xavier_uniform(&[dim, dim], dim, dim, rng);
        MultiHeadAttention {
            dim,
            heads,
            qkv,
            proj,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let (n, t, d) = x.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let flat = x
            .view()
            .into_shape_with_order((n * t, d))
            .expect("standard layout")
            .to_owned();
        let qkv = self.qkv.forward(&flat, train);

        let mut q_all = Vec::with_capacity(n * self.heads);
        let mut k_all = Vec::with_capacity(n * self.heads);
        let mut v_all = Vec::with_capacity(n * self.heads);
        let mut attn_all = Vec::with_capacity(n * self.heads);
        let mut merged = Array2::zeros((n * t, d));
        for s in 0..n {
            for head in 0..self.heads {
                let mut q = Array2::zeros((t, dh));
                let mut k = Array2::zeros((t, dh));
                let mut v = Array2::zeros((t, dh));
                for tok in 0..t {
                    for f in 0..dh {
                        let col = head * dh + f;
                        q[(tok, f)] = qkv[(s * t + tok, col)];
                        k[(tok, f)] = qkv[(s * t + tok, d + col)];
                        v[(tok, f)] = qkv[(s * t + tok, 2 * d + col)];
                    }
                }
                let mut scores = q.dot(&k.t());
                scores.mapv_inplace(|v| v * scale);
                // Row-wise softmax, stabilized by the row max.
                for mut row in scores.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                let out = scores.dot(&v);
                for tok in 0..t {
                    for f in 0..dh {
                        merged[(s * t + tok, head * dh + f)] = out[(tok, f)];
                    }
                }
                q_all.push(q);
                k_all.push(k);
                v_all.push(v);
                attn_all.push(scores);
            }
        }
        let projected = self.proj.forward(&merged, train);
        if train {
            self.cache = Some(AttnCache {
                q: q_all,
                k: k_all,
                v: v_all,
                attn: attn_all,
                tokens: t,
                batch: n,
            });
        }
        projected
            .into_shape_with_order((n, t, d))
            .expect("standard layout")
    }

    pub fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("backward without train forward");
        let (n, t, d) = grad.dim();
        debug_assert_eq!((cache.batch, cache.tokens), (n, t));
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let flat = grad
            .view()
            .into_shape_with_order((n * t, d))
            .expect("standard layout")
            .to_owned();
        let g_merged = self.proj.backward(&flat);

        let mut g_qkv = Array2::zeros((n * t, 3 * d));
        for s in 0..n {
            for head in 0..self.heads {
                let idx = s * self.heads + head;
                let attn = &cache.attn[idx];
                let q = &cache.q[idx];
                let k = &cache.k[idx];
                let v = &cache.v[idx];
                let mut g_out = Array2::zeros((t, dh));
                for tok in 0..t {
                    for f in 0..dh {
                        g_out[(tok, f)] = g_merged[(s * t + tok, head * dh + f)];
                    }
                }
                let g_attn = g_out.dot(&v.t());
                let g_v = attn.t().dot(&g_out);
                // Softmax backward per row: a ⊙ (g − <g, a>).
                let mut g_scores = Array2::zeros((t, t));
                for tok in 0..t {
                    let a = attn.row(tok);
                    let g = g_attn.row(tok);
                    let dot: f64 = a.iter().zip(g.iter()).map(|(&ai, &gi)| ai * gi).sum();
                    for j in 0..t {
                        g_scores[(tok, j)] = a[j] * (g[j] - dot);
                    }
                }
                g_scores.mapv_inplace(|v| v * scale);
                let g_q = g_scores.dot(k);
                let g_k = g_scores.t().dot(q);
                for tok in 0..t {
                    for f in 0..dh {
                        let col = head * dh + f;
                        g_qkv[(s * t + tok, col)] = g_q[(tok, f)];
                        g_qkv[(s * t + tok, d + col)] = g_k[(tok, f)];
                        g_qkv[(s * t + tok, 2 * d + col)] = g_v[(tok, f)];
                    }
                }
            }
        }
        let gx = self.qkv.backward(&g_qkv);
        gx.into_shape_with_order((n, t, d))
            .expect("standard layout")
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.qkv.visit_params(f);
        self.proj.visit_params(f);
    }
}

/// Pre-norm transformer block: x + attn(ln(x)), then + mlp(ln(·)).
pub struct TransformerBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    fc1: Linear,
    act: Gelu,
    fc2: Linear,
    dims: (usize, usize),
}

impl TransformerBlock {
    pub fn new(dim: usize, heads: usize, mlp_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln2: LayerNorm::new(dim),
            fc1: Linear::new(dim, mlp_dim, rng),
            act: Gelu::new(),
            fc2: Linear::new(mlp_dim, dim, rng),
            dims: (dim, mlp_dim),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let normed = self.ln1.forward(x, train);
        let a = x + &self.attn.forward(&normed, train);
        let (n, t, d) = a.dim();
        let normed2 = self.ln2.forward(&a, train);
        let flat = normed2
            .view()
            .into_shape_with_order((n * t, d))
            .expect("standard layout")
            .to_owned();
        let hidden = self.act.forward(self.fc1.forward(&flat, train), train);
        let mlp_out = self.fc2.forward(&hidden, train);
        &a + &mlp_out
            .into_shape_with_order((n, t, d))
            .expect("standard layout")
    }

    pub fn backward(&mut self, grad: &Array3<f64>) -> Array3<f64> {
        let (n, t, d) = grad.dim();
        let flat = grad
            .view()
            .into_shape_with_order((n * t, d))
            .expect("standard layout")
            .to_owned();
        let g_hidden = self.fc2.backward(&flat);
        let g_fc1 = self.act.backward(&g_hidden);
        let g_norm2 = self.fc1.backward(&g_fc1);
        let g_norm2 = g_norm2
            .into_shape_with_order((n, t, d))
            .expect("standard layout");
        let g_a = grad + &self.ln2.backward(&g_norm2);
        let g_norm1 = self.attn.backward(&g_a);
        &g_a + &self.ln1.backward(&g_norm1)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.ln1.visit_params(f);
        self.attn.visit_params(f);
        self.ln2.visit_params(f);
        self.fc1.visit_params(f);
        self.fc2.visit_params(f);
    }

    pub fn mlp_dim(&self) -> usize {
        self.dims.1
    }
}

/// The full extractor. Embedding = final-norm class token.
pub struct VisionTransformer {
    pub dim: usize,
    pub patch: usize,
    pub side: usize,
    channels: usize,
    patch_embed: Conv2d,
    cls: Tensor,
    pos: Tensor,
    blocks: Vec<TransformerBlock>,
    final_ln: LayerNorm,
    cache_batch: usize,
}

impl VisionTransformer {
    pub fn new(
        channels: usize,
        side: usize,
        patch: usize,
        dim: usize,
        depth: usize,
        heads: usize,
        mlp_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert_eq!(side % patch, 0, "patch size must tile the input side");
        let tokens = (side / patch) * (side / patch);
        let patch_embed = Conv2d::new(channels, dim, (patch, patch), (patch, patch), (0, 0), true, rng);
        let cls = Tensor::new(ArrayD::from_shape_simple_fn(vec![dim], || {
            rng.random_range(-0.02..=0.02)
        }));
        let pos = Tensor::new(ArrayD::from_shape_simple_fn(vec![tokens + 1, dim], || {
            rng.random_range(-0.02..=0.02)
        }));
        let blocks = (0..depth)
            .map(|_| TransformerBlock::new(dim, heads, mlp_dim, rng))
            .collect();
        VisionTransformer {
            dim,
            patch,
            side,
            channels,
            patch_embed,
            cls,
            pos,
            blocks,
            final_ln: LayerNorm::new(dim),
            cache_batch: 0,
        }
    }

    fn tokens(&self) -> usize {
        (self.side / self.patch) * (self.side / self.patch)
    }
}

impl FeatureExtractor for VisionTransformer {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn in_channels(&self) -> usize {
        self.channels
    }

    fn input_side(&self) -> usize {
        self.side
    }

    fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array2<f64> {
        let (n, _, h, w) = x.dim();
        assert_eq!((h, w), (self.side, self.side), "transformer input side");
        let grid = self.patch_embed.forward(x.clone(), train);
        let (_, d, gh, gw) = grid.dim();
        let t = gh * gw;
        let mut seq = Array3::zeros((n, t + 1, d));
        for s in 0..n {
            for f in 0..d {
                seq[(s, 0, f)] = self.cls.value[f];
            }
            for tok in 0..t {
                for f in 0..d {
                    seq[(s, tok + 1, f)] = grid[(s, f, tok / gw, tok % gw)];
                }
            }
            for tok in 0..=t {
                for f in 0..d {
                    seq[(s, tok, f)] += self.pos.value[[tok, f]];
                }
            }
        }
        let mut h = seq;
        for block in &mut self.blocks {
            h = block.forward(&h, train);
        }
        let normed = self.final_ln.forward(&h, train);
        self.cache_batch = n;
        let mut out = Array2::zeros((n, d));
        for s in 0..n {
            for f in 0..d {
                out[(s, f)] = normed[(s, 0, f)];
            }
        }
        out
    }

    fn backward(&mut self, grad: &Array2<f64>) {
        let n = self.cache_batch;
        let t = self.tokens();
        let d = self.dim;
        let mut g_seq = Array3::zeros((n, t + 1, d));
        for s in 0..n {
            for f in 0..d {
                g_seq[(s, 0, f)] = grad[(s, f)];
            }
        }
        let mut g = self.final_ln.backward(&g_seq);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        let gw = self.side / self.patch;
        let mut g_grid = Array4::zeros((n, d, gw, gw));
        for s in 0..n {
            for tok in 0..=t {
                for f in 0..d {
                    self.pos.grad_mut()[[tok, f]] += g[(s, tok, f)];
                }
            }
            for f in 0..d {
                self.cls.grad_mut()[f] += g[(s, 0, f)];
            }
            for tok in 0..t {
                for f in 0..d {
                    g_grid[(s, f, tok / gw, tok % gw)] = g[(s, tok + 1, f)];
                }
            }
        }
        let _ = self.patch_embed.backward(g_grid);
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.patch_embed.visit_params(f);
        f(&mut self.cls);
        f(&mut self.pos);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.final_ln.visit_params(f);
    }

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut ArrayD<f64>)) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{fd_grad, relative_gap};
    use rand::SeedableRng;

    fn rand3(shape: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Array3<f64> {
        Array3::from_shape_simple_fn(shape, || rng.random_range(-1.0..=1.0))
    }

    #[test]
    fn layernorm_rows_have_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ln = LayerNorm::new(6);
        let x = rand3((2, 3, 6), &mut rng) * 4.0 + 1.5;
        let out = ln.forward(&x, false);
        for s in 0..2 {
            for t in 0..3 {
                let row = out.slice(ndarray::s![s, t, ..]);
                let mean = row.mean().unwrap();
                let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
                assert!(mean.abs() < 1e-10);
                assert!((var - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn layernorm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ln = LayerNorm::new(5);
        let x = rand3((1, 2, 5), &mut rng);
        let probe = rand3((1, 2, 5), &mut rng);
        let _ = ln.forward(&x, true);
        let gx = ln.backward(&probe);
        let h = 1e-6;
        for &(t, f) in &[(0, 0), (1, 3), (0, 4)] {
            let mut xp = x.clone();
            let orig = xp[(0, t, f)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(0, t, f)] = v;
                    (&ln.forward(&xp, false) * &probe).sum()
                },
                h,
            );
            assert!(
                relative_gap(gx[(0, t, f)], num) < 1e-5,
                "layernorm grad {} vs {}",
                gx[(0, t, f)],
                num
            );
        }
    }

    #[test]
    fn gelu_matches_reference_values() {
        // Published values of the tanh-approximation at a few points.
        assert!((Gelu::value(0.0) - 0.0).abs() < 1e-12);
        assert!((Gelu::value(1.0) - 0.841192).abs() < 1e-5);
        assert!((Gelu::value(-1.0) - (-0.158808)).abs() < 1e-5);
    }

    #[test]
    fn gelu_derivative_matches_finite_differences() {
        for &x in &[-2.0, -0.3, 0.4, 1.7] {
            let h = 1e-6;
            let num = (Gelu::value(x + h) - Gelu::value(x - h)) / (2.0 * h);
            assert!(relative_gap(Gelu::derivative(x), num) < 1e-8);
        }
    }

    #[test]
    fn attention_rows_mix_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut attn = MultiHeadAttention::new(8, 2, &mut rng);
        let x = rand3((2, 4, 8), &mut rng);
        let out = attn.forward(&x, false);
        assert_eq!(out.dim(), (2, 4, 8));
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut attn = MultiHeadAttention::new(4, 2, &mut rng);
        let x = rand3((1, 3, 4), &mut rng);
        let probe = rand3((1, 3, 4), &mut rng);
        let _ = attn.forward(&x, true);
        let gx = attn.backward(&probe);
        let h = 1e-6;
        for &(t, f) in &[(0, 0), (1, 2), (2, 3)] {
            let mut xp = x.clone();
            let orig = xp[(0, t, f)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(0, t, f)] = v;
                    (&attn.forward(&xp, false) * &probe).sum()
                },
                h,
            );
            assert!(
                relative_gap(gx[(0, t, f)], num) < 1e-5,
                "attention grad {} vs {}",
                gx[(0, t, f)],
                num
            );
        }
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut block = TransformerBlock::new(4, 2, 8, &mut rng);
        let x = rand3((1, 3, 4), &mut rng);
        let probe = rand3((1, 3, 4), &mut rng);
        let _ = block.forward(&x, true);
        let gx = block.backward(&probe);
        let h = 1e-5;
        for &(t, f) in &[(0, 1), (2, 0)] {
            let mut xp = x.clone();
            let orig = xp[(0, t, f)];
            let num = fd_grad(
                orig,
                |v| {
                    xp[(0, t, f)] = v;
                    (&block.forward(&xp, false) * &probe).sum()
                },
                h,
            );
            assert!(
                relative_gap(gx[(0, t, f)], num) < 1e-4,
                "block grad {} vs {}",
                gx[(0, t, f)],
                num
            );
        }
    }

    #[test]
    fn tiny_transformer_runs_and_backpropagates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut vit = VisionTransformer::new(1, 8, 4, 8, 1, 2, 16, &mut rng);
        let x = Array4::from_shape_simple_fn((2, 1, 8, 8), || rng.random_range(0.0..=1.0));
        let emb = vit.forward(&x, true);
        assert_eq!(emb.dim(), (2, 8));
        vit.backward(&Array2::ones((2, 8)));
        let mut count = 0;
        vit.visit_params(&mut |t| {
            if t.grad().is_some() {
                count += 1;
            }
        });
        assert!(count > 0, "backward must populate gradients");

        // Deterministic in eval mode.
        let a = vit.forward(&x, false);
        let b = vit.forward(&x, false);
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_transformer_end_to_end_gradcheck_on_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut vit = VisionTransformer::new(1, 8, 4, 8, 1, 2, 16, &mut rng);
        let x = Array4::from_shape_simple_fn((1, 1, 8, 8), || rng.random_range(-1.0..=1.0));
        let probe = Array2::from_shape_simple_fn((1, 8), || rng.random_range(-1.0..=1.0));

        // Check a weight inside the patch embedding through the whole stack.
        let _ = vit.forward(&x, true);
        vit.backward(&probe);
        let analytic = vit.patch_embed.weight.grad().unwrap().as_slice().unwrap()[5];
        let orig = vit.patch_embed.weight.value.as_slice().unwrap()[5];
        let num = fd_grad(
            orig,
            |v| {
                vit.patch_embed.weight.value.as_slice_mut().unwrap()[5] = v;
                (&vit.forward(&x, false) * &probe).sum()
            },
            1e-5,
        );
        assert!(
            relative_gap(analytic, num) < 1e-4,
            "patch-embed weight grad {} vs {}",
            analytic,
            num
        );
    }
}
