//! Backbone registry. Every entry maps image batches to a fixed-width
//! embedding: classic convolutional stacks (VGG19, Inception v3,
//! DenseNet121, ResNet152), a vision transformer, the domain-adapted
//! ResNet152 variant that expects externally supplied weights, and a small
//! three-block network for desk-scale runs.
//!
//! Single-channel variants differ from their three-channel siblings only
//! in the first convolution, mirroring how pretrained models get adapted
//! to new channel counts at the input and to a scalar at the output.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array4, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{Branches, ConcatGrow, Residual};
use super::layers::{AvgPool2d, BatchNorm2d, Conv2d, GlobalAvgPool, MaxPool2d, ReLU};
use super::vit::VisionTransformer;
use super::{FeatureExtractor, Layer, Sequential, Tensor};
use crate::error::{Error, Result};

/// Names accepted by the experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneName {
    Vgg19,
    InceptionV3,
    Densenet121,
    Resnet152,
    Vit,
    DsResnet152,
    ToyCnn,
}

impl BackboneName {
    pub const ALL: [BackboneName; 7] = [
        BackboneName::Vgg19,
        BackboneName::InceptionV3,
        BackboneName::Densenet121,
        BackboneName::Resnet152,
        BackboneName::Vit,
        BackboneName::DsResnet152,
        BackboneName::ToyCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneName::Vgg19 => "vgg19",
            BackboneName::InceptionV3 => "inception_v3",
            BackboneName::Densenet121 => "densenet121",
            BackboneName::Resnet152 => "resnet152",
            BackboneName::Vit => "vit",
            BackboneName::DsResnet152 => "ds_resnet152",
            BackboneName::ToyCnn => "toy_cnn",
        }
    }

    /// Side length of the square input each architecture expects.
    pub fn input_side(self) -> usize {
        match self {
            BackboneName::InceptionV3 => 299,
            _ => 224,
        }
    }

    pub fn embedding_dim(self) -> usize {
        match self {
            BackboneName::Vgg19 => 512,
            BackboneName::InceptionV3 => 2048,
            BackboneName::Densenet121 => 1024,
            BackboneName::Resnet152 | BackboneName::DsResnet152 => 2048,
            BackboneName::Vit => 768,
            BackboneName::ToyCnn => 64,
        }
    }
}

impl fmt::Display for BackboneName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackboneName::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::UnknownBackbone(s.to_string()))
    }
}

/// Convolutional stacks share this wrapper: a layer chain ending in global
/// average pooling, squeezed to embedding rows.
pub struct CnnExtractor {
    stack: Sequential,
    embedding_dim: usize,
    in_channels: usize,
    side: usize,
    /// Architectures built around a fixed geometry insist on their side;
    /// the small network tolerates any side its strides can divide down.
    strict_side: bool,
    cache_batch: usize,
}

impl FeatureExtractor for CnnExtractor {
    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn in_channels(&self) -> usize {
        self.in_channels
    }

    fn input_side(&self) -> usize {
        self.side
    }

    fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array2<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "input channel mismatch");
        if self.strict_side {
            assert_eq!((h, w), (self.side, self.side), "input side mismatch");
        }
        let out = self.stack.forward(x.clone(), train);
        let (_, e, oh, ow) = out.dim();
        debug_assert_eq!((oh, ow), (1, 1));
        self.cache_batch = n;
        out.into_shape_with_order((n, e))
            .expect("pooled to a vector")
    }

    fn backward(&mut self, grad: &Array2<f64>) {
        let (n, e) = grad.dim();
        debug_assert_eq!(n, self.cache_batch);
        let g = grad
            .view()
            .into_shape_with_order((n, e, 1, 1))
            .expect("standard layout")
            .to_owned();
        let _ = self.stack.backward(g);
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.stack.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.stack.visit_buffers(f);
    }
}

/// Builds the named extractor with seeded initialization.
pub fn build_extractor(
    name: BackboneName,
    in_channels: usize,
    seed: u64,
) -> Box<dyn FeatureExtractor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match name {
        BackboneName::ToyCnn => Box::new(toy_cnn(in_channels, &mut rng)),
        BackboneName::Vgg19 => Box::new(vgg19(in_channels, &mut rng)),
        BackboneName::InceptionV3 => Box::new(inception_v3(in_channels, &mut rng)),
        BackboneName::Densenet121 => Box::new(densenet121(in_channels, &mut rng)),
        BackboneName::Resnet152 | BackboneName::DsResnet152 => {
            Box::new(resnet152(in_channels, &mut rng))
        }
        BackboneName::Vit => Box::new(VisionTransformer::new(
            in_channels,
            224,
            16,
            768,
            12,
            12,
            3072,
            &mut rng,
        )),
    }
}

fn conv_bn_relu(
    in_ch: usize,
    out_ch: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Vec<Box<dyn Layer>> {
    vec![
        Box::new(Conv2d::new(in_ch, out_ch, kernel, stride, padding, false, rng)),
        Box::new(BatchNorm2d::new(out_ch)),
        Box::new(ReLU::new()),
    ]
}

fn seq(layers: Vec<Box<dyn Layer>>) -> Sequential {
    Sequential::new(layers)
}

/// Three strided conv/norm/relu stages and a pooled 64-wide embedding.
/// Cheap enough to train for dozens of epochs on a laptop core while still
/// exercising every layer type the big stacks use.
fn toy_cnn(in_channels: usize, rng: &mut ChaCha8Rng) -> CnnExtractor {
    let mut layers = Vec::new();
    layers.extend(conv_bn_relu(in_channels, 16, (3, 3), (4, 4), (1, 1), rng));
    layers.extend(conv_bn_relu(16, 32, (3, 3), (2, 2), (1, 1), rng));
    layers.extend(conv_bn_relu(32, 64, (3, 3), (2, 2), (1, 1), rng));
    layers.push(Box::new(GlobalAvgPool::new()));
    CnnExtractor {
        stack: seq(layers),
        embedding_dim: 64,
        in_channels,
        side: 224,
        strict_side: false,
        cache_batch: 0,
    }
}

/// Sixteen 3×3 convolutions in five pooled stages, feature width 512.
fn vgg19(in_channels: usize, rng: &mut ChaCha8Rng) -> CnnExtractor {
    let plan: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)];
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut ch = in_channels;
    for (width, convs) in plan {
        for _ in 0..convs {
            layers.push(Box::new(Conv2d::new(ch, width, (3, 3), (1, 1), (1, 1), true, rng)));
            layers.push(Box::new(ReLU::new()));
            ch = width;
        }
        layers.push(Box::new(MaxPool2d::new((2, 2), (2, 2), (0, 0))));
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    CnnExtractor {
        stack: seq(layers),
        embedding_dim: 512,
        in_channels,
        side: 224,
        strict_side: true,
        cache_batch: 0,
    }
}

fn bottleneck(in_ch: usize, mid: usize, stride: usize, rng: &mut ChaCha8Rng) -> Residual {
    let out_ch = mid * 4;
    let mut main: Vec<Box<dyn Layer>> = Vec::new();
    main.extend(conv_bn_relu(in_ch, mid, (1, 1), (1, 1), (0, 0), rng));
    main.extend(conv_bn_relu(mid, mid, (3, 3), (stride, stride), (1, 1), rng));
    main.push(Box::new(Conv2d::new(mid, out_ch, (1, 1), (1, 1), (0, 0), false, rng)));
    main.push(Box::new(BatchNorm2d::new(out_ch)));
    let shortcut = (in_ch != out_ch || stride != 1).then(|| {
        seq(vec![
            Box::new(Conv2d::new(in_ch, out_ch, (1, 1), (stride, stride), (0, 0), false, rng))
                as Box<dyn Layer>,
            Box::new(BatchNorm2d::new(out_ch)),
        ])
    });
    Residual::new(seq(main), shortcut, true)
}

/// Bottleneck residual stack, 3/8/36/3 blocks per stage.
fn resnet152(in_channels: usize, rng: &mut ChaCha8Rng) -> CnnExtractor {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    layers.extend(conv_bn_relu(in_channels, 64, (7, 7), (2, 2), (3, 3), rng));
    layers.push(Box::new(MaxPool2d::new((3, 3), (2, 2), (1, 1))));
    let stages: [(usize, usize, usize); 4] =
        [(64, 3, 1), (128, 8, 2), (256, 36, 2), (512, 3, 2)];
    let mut ch = 64;
    for (mid, blocks, stride) in stages {
        for b in 0..blocks {
            let s = if b == 0 { stride } else { 1 };
            layers.push(Box::new(bottleneck(ch, mid, s, rng)));
            ch = mid * 4;
        }
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    CnnExtractor {
        stack: seq(layers),
        embedding_dim: 2048,
        in_channels,
        side: 224,
        strict_side: true,
        cache_batch: 0,
    }
}

/// Densely connected stack, 6/12/24/16 layers per block, growth 32.
fn densenet121(in_channels: usize, rng: &mut ChaCha8Rng) -> CnnExtractor {
    const GROWTH: usize = 32;
    const BN_SIZE: usize = 4;
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    layers.extend(conv_bn_relu(in_channels, 64, (7, 7), (2, 2), (3, 3), rng));
    layers.push(Box::new(MaxPool2d::new((3, 3), (2, 2), (1, 1))));
    let mut ch = 64;
    let blocks = [6usize, 12, 24, 16];
    for (i, &n_layers) in blocks.iter().enumerate() {
        for _ in 0..n_layers {
            let mut f: Vec<Box<dyn Layer>> = Vec::new();
            f.push(Box::new(BatchNorm2d::new(ch)));
            f.push(Box::new(ReLU::new()));
            f.push(Box::new(Conv2d::new(ch, BN_SIZE * GROWTH, (1, 1), (1, 1), (0, 0), false, rng)));
            f.push(Box::new(BatchNorm2d::new(BN_SIZE * GROWTH)));
            f.push(Box::new(ReLU::new()));
            f.push(Box::new(Conv2d::new(BN_SIZE * GROWTH, GROWTH, (3, 3), (1, 1), (1, 1), false, rng)));
            layers.push(Box::new(ConcatGrow::new(seq(f))));
            ch += GROWTH;
        }
        if i + 1 < blocks.len() {
            layers.push(Box::new(BatchNorm2d::new(ch)));
            layers.push(Box::new(ReLU::new()));
            layers.push(Box::new(Conv2d::new(ch, ch / 2, (1, 1), (1, 1), (0, 0), false, rng)));
            layers.push(Box::new(AvgPool2d::new((2, 2), (2, 2), (0, 0))));
            ch /= 2;
        }
    }
    layers.push(Box::new(BatchNorm2d::new(ch)));
    layers.push(Box::new(ReLU::new()));
    layers.push(Box::new(GlobalAvgPool::new()));
    CnnExtractor {
        stack: seq(layers),
        embedding_dim: ch,
        in_channels,
        side: 224,
        strict_side: true,
        cache_batch: 0,
    }
}

fn inception_a(in_ch: usize, pool_features: usize, rng: &mut ChaCha8Rng) -> Branches {
    let b1 = seq(conv_bn_relu(in_ch, 64, (1, 1), (1, 1), (0, 0), rng));
    let mut b5 = conv_bn_relu(in_ch, 48, (1, 1), (1, 1), (0, 0), rng);
    b5.extend(conv_bn_relu(48, 64, (5, 5), (1, 1), (2, 2), rng));
    let mut b3 = conv_bn_relu(in_ch, 64, (1, 1), (1, 1), (0, 0), rng);
    b3.extend(conv_bn_relu(64, 96, (3, 3), (1, 1), (1, 1), rng));
    b3.extend(conv_bn_relu(96, 96, (3, 3), (1, 1), (1, 1), rng));
    let mut bp: Vec<Box<dyn Layer>> = vec![Box::new(AvgPool2d::new((3, 3), (1, 1), (1, 1)))];
    bp.extend(conv_bn_relu(in_ch, pool_features, (1, 1), (1, 1), (0, 0), rng));
    Branches::new(vec![b1, seq(b5), seq(b3), seq(bp)])
}

fn inception_b(in_ch: usize, rng: &mut ChaCha8Rng) -> Branches {
    let b3 = seq(conv_bn_relu(in_ch, 384, (3, 3), (2, 2), (0, 0), rng));
    let mut bd = conv_bn_relu(in_ch, 64, (1, 1), (1, 1), (0, 0), rng);
    bd.extend(conv_bn_relu(64, 96, (3, 3), (1, 1), (1, 1), rng));
    bd.extend(conv_bn_relu(96, 96, (3, 3), (2, 2), (0, 0), rng));
    let pool = seq(vec![
        Box::new(MaxPool2d::new((3, 3), (2, 2), (0, 0))) as Box<dyn Layer>,
    ]);
    Branches::new(vec![b3, seq(bd), pool])
}

fn inception_c(in_ch: usize, c7: usize, rng: &mut ChaCha8Rng) -> Branches {
    let b1 = seq(conv_bn_relu(in_ch, 192, (1, 1), (1, 1), (0, 0), rng));
    let mut b7 = conv_bn_relu(in_ch, c7, (1, 1), (1, 1), (0, 0), rng);
    b7.extend(conv_bn_relu(c7, c7, (1, 7), (1, 1), (0, 3), rng));
    b7.extend(conv_bn_relu(c7, 192, (7, 1), (1, 1), (3, 0), rng));
    let mut bd = conv_bn_relu(in_ch, c7, (1, 1), (1, 1), (0, 0), rng);
    bd.extend(conv_bn_relu(c7, c7, (7, 1), (1, 1), (3, 0), rng));
    bd.extend(conv_bn_relu(c7, c7, (1, 7), (1, 1), (0, 3), rng));
    bd.extend(conv_bn_relu(c7, c7, (7, 1), (1, 1), (3, 0), rng));
    bd.extend(conv_bn_relu(c7, 192, (1, 7), (1, 1), (0, 3), rng));
    let mut bp: Vec<Box<dyn Layer>> = vec![Box::new(AvgPool2d::new((3, 3), (1, 1), (1, 1)))];
    bp.extend(conv_bn_relu(in_ch, 192, (1, 1), (1, 1), (0, 0), rng));
    Branches::new(vec![b1, seq(b7), seq(bd), seq(bp)])
}

fn inception_d(in_ch: usize, rng: &mut ChaCha8Rng) -> Branches {
    let mut b3 = conv_bn_relu(in_ch, 192, (1, 1), (1, 1), (0, 0), rng);
    b3.extend(conv_bn_relu(192, 320, (3, 3), (2, 2), (0, 0), rng));
    let mut b7 = conv_bn_relu(in_ch, 192, (1, 1), (1, 1), (0, 0), rng);
    b7.extend(conv_bn_relu(192, 192, (1, 7), (1, 1), (0, 3), rng));
    b7.extend(conv_bn_relu(192, 192, (7, 1), (1, 1), (3, 0), rng));
    b7.extend(conv_bn_relu(192, 192, (3, 3), (2, 2), (0, 0), rng));
    let pool = seq(vec![
        Box::new(MaxPool2d::new((3, 3), (2, 2), (0, 0))) as Box<dyn Layer>,
    ]);
    Branches::new(vec![seq(b3), seq(b7), pool])
}

fn inception_e(in_ch: usize, rng: &mut ChaCha8Rng) -> Branches {
    let b1 = seq(conv_bn_relu(in_ch, 320, (1, 1), (1, 1), (0, 0), rng));
    // 3x3 branch forks into 1x3 and 3x1 halves that concatenate.
    let mut b3_stem = conv_bn_relu(in_ch, 384, (1, 1), (1, 1), (0, 0), rng);
    let fork = Branches::new(vec![
        seq(conv_bn_relu(384, 384, (1, 3), (1, 1), (0, 1), rng)),
        seq(conv_bn_relu(384, 384, (3, 1), (1, 1), (1, 0), rng)),
    ]);
    b3_stem.push(Box::new(fork));
    let mut bd_stem = conv_bn_relu(in_ch, 448, (1, 1), (1, 1), (0, 0), rng);
    bd_stem.extend(conv_bn_relu(448, 384, (3, 3), (1, 1), (1, 1), rng));
    let fork2 = Branches::new(vec![
        seq(conv_bn_relu(384, 384, (1, 3), (1, 1), (0, 1), rng)),
        seq(conv_bn_relu(384, 384, (3, 1), (1, 1), (1, 0), rng)),
    ]);
    bd_stem.push(Box::new(fork2));
    let mut bp: Vec<Box<dyn Layer>> = vec![Box::new(AvgPool2d::new((3, 3), (1, 1), (1, 1)))];
    bp.extend(conv_bn_relu(in_ch, 192, (1, 1), (1, 1), (0, 0), rng));
    Branches::new(vec![b1, seq(b3_stem), seq(bd_stem), seq(bp)])
}

/// Factorized-convolution stack over 299×299 inputs, feature width 2048.
fn inception_v3(in_channels: usize, rng: &mut ChaCha8Rng) -> CnnExtractor {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    layers.extend(conv_bn_relu(in_channels, 32, (3, 3), (2, 2), (0, 0), rng));
    layers.extend(conv_bn_relu(32, 32, (3, 3), (1, 1), (0, 0), rng));
    layers.extend(conv_bn_relu(32, 64, (3, 3), (1, 1), (1, 1), rng));
    layers.push(Box::new(MaxPool2d::new((3, 3), (2, 2), (0, 0))));
    layers.extend(conv_bn_relu(64, 80, (1, 1), (1, 1), (0, 0), rng));
    layers.extend(conv_bn_relu(80, 192, (3, 3), (1, 1), (0, 0), rng));
    layers.push(Box::new(MaxPool2d::new((3, 3), (2, 2), (0, 0))));
    layers.push(Box::new(inception_a(192, 32, rng)));
    layers.push(Box::new(inception_a(256, 64, rng)));
    layers.push(Box::new(inception_a(288, 64, rng)));
    layers.push(Box::new(inception_b(288, rng)));
    layers.push(Box::new(inception_c(768, 128, rng)));
    layers.push(Box::new(inception_c(768, 160, rng)));
    layers.push(Box::new(inception_c(768, 160, rng)));
    layers.push(Box::new(inception_c(768, 192, rng)));
    layers.push(Box::new(inception_d(768, rng)));
    layers.push(Box::new(inception_e(1280, rng)));
    layers.push(Box::new(inception_e(2048, rng)));
    layers.push(Box::new(GlobalAvgPool::new()));
    CnnExtractor {
        stack: seq(layers),
        embedding_dim: 2048,
        in_channels,
        side: 299,
        strict_side: true,
        cache_batch: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;
    use rand::Rng;

    fn image(n: usize, c: usize, side: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_simple_fn((n, c, side, side), || rng.random_range(0.0..=1.0))
    }

    #[test]
    fn names_round_trip() {
        for name in BackboneName::ALL {
            assert_eq!(name.as_str().parse::<BackboneName>().unwrap(), name);
        }
        assert!(matches!(
            "alexnet".parse::<BackboneName>(),
            Err(Error::UnknownBackbone(_))
        ));
    }

    #[test]
    fn toy_cnn_embeds_and_trains_gradients() {
        let mut ext = build_extractor(BackboneName::ToyCnn, 1, 0);
        let x = image(3, 1, 224, 1);
        let emb = ext.forward(&x, true);
        assert_eq!(emb.dim(), (3, 64));
        ext.backward(&Array2::ones((3, 64)));
        let mut grads = 0;
        ext.visit_params(&mut |t| {
            if t.grad().map(|g| g.iter().any(|&v| v != 0.0)).unwrap_or(false) {
                grads += 1;
            }
        });
        assert!(grads > 0);
    }

    #[test]
    fn toy_cnn_eval_is_deterministic_and_batch_consistent() {
        let mut ext = build_extractor(BackboneName::ToyCnn, 1, 7);
        let x = image(2, 1, 64, 2);
        let a = ext.forward(&x, false);
        let b = ext.forward(&x, false);
        assert_eq!(a, b);

        // Permuting the batch permutes the embeddings.
        let mut swapped = x.clone();
        let (first, second) = (x.index_axis(Axis(0), 0), x.index_axis(Axis(0), 1));
        swapped.index_axis_mut(Axis(0), 0).assign(&second);
        swapped.index_axis_mut(Axis(0), 1).assign(&first);
        let c = ext.forward(&swapped, false);
        assert_eq!(c.row(0), b.row(1));
        assert_eq!(c.row(1), b.row(0));
    }

    #[test]
    fn vgg19_shapes() {
        let mut ext = build_extractor(BackboneName::Vgg19, 3, 0);
        assert_eq!(ext.embedding_dim(), 512);
        let emb = ext.forward(&image(1, 3, 224, 3), false);
        assert_eq!(emb.dim(), (1, 512));
    }

    #[test]
    fn resnet152_shapes() {
        let mut ext = build_extractor(BackboneName::Resnet152, 1, 0);
        assert_eq!(ext.embedding_dim(), 2048);
        let emb = ext.forward(&image(1, 1, 224, 4), false);
        assert_eq!(emb.dim(), (1, 2048));
    }

    #[test]
    fn densenet121_shapes() {
        let mut ext = build_extractor(BackboneName::Densenet121, 3, 0);
        assert_eq!(ext.embedding_dim(), 1024);
        let emb = ext.forward(&image(1, 3, 224, 5), false);
        assert_eq!(emb.dim(), (1, 1024));
    }

    #[test]
    fn inception_v3_shapes_at_299() {
        let mut ext = build_extractor(BackboneName::InceptionV3, 3, 0);
        assert_eq!(ext.embedding_dim(), 2048);
        assert_eq!(ext.input_side(), 299);
        let emb = ext.forward(&image(1, 3, 299, 6), false);
        assert_eq!(emb.dim(), (1, 2048));
    }

    #[test]
    fn vit_shapes() {
        let mut ext = build_extractor(BackboneName::Vit, 1, 0);
        assert_eq!(ext.embedding_dim(), 768);
        let emb = ext.forward(&image(1, 1, 224, 7), false);
        assert_eq!(emb.dim(), (1, 768));
    }

    #[test]
    fn same_seed_rebuilds_identical_extractors() {
        let mut a = build_extractor(BackboneName::ToyCnn, 1, 42);
        let mut b = build_extractor(BackboneName::ToyCnn, 1, 42);
        let x = image(1, 1, 32, 8);
        assert_eq!(a.forward(&x, false), b.forward(&x, false));

        let mut c = build_extractor(BackboneName::ToyCnn, 1, 43);
        assert_ne!(a.forward(&x, false), c.forward(&x, false));
    }
}
