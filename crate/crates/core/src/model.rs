//! Regression models over iris imagery. A narrow-band model is one
//! backbone plus a scalar head; a multispectral model runs a backbone per
//! band and fuses the two embeddings with a small two-layer perceptron:
//!
//! ŷ = W2 · ReLU(W1 · (e_NIR ⊕ e_RGB) + b1) + b2
//!
//! where ⊕ concatenates the embeddings. Checkpoints carry the architecture
//! name, band, and every parameter shape, and the loader refuses files
//! that disagree with the model being restored.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix1, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::nn::backbones::BackboneName;
use crate::error::{Error, Result};
use crate::manifest::Band;
use crate::nn::backbones::build_extractor;
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, FORMAT_VERSION};
use crate::nn::layers::Linear;
use crate::nn::{he_uniform, xavier_uniform, FeatureExtractor, Tensor};

/// Width of the fusion perceptron's hidden layer unless overridden.
pub const DEFAULT_FUSION_HIDDEN: usize = 512;

/// Which backbone to build, for which band, and optionally which weights
/// to start from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: BackboneName,
    pub band: Band,
    pub pretrained_weights: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl BackboneSpec {
    pub fn new(name: BackboneName, band: Band) -> Self {
        BackboneSpec {
            name,
            band,
            pretrained_weights: None,
            embedding_dim: name.embedding_dim(),
        }
    }

    pub fn with_weights(mut self, path: impl Into<PathBuf>) -> Self {
        self.pretrained_weights = Some(path.into());
        self
    }

    pub fn input_side(&self) -> usize {
        self.name.input_side()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim != self.name.embedding_dim() {
            return Err(Error::InvalidConfig(format!(
                "{} produces {}-wide embeddings, spec says {}",
                self.name,
                self.name.embedding_dim(),
                self.embedding_dim
            )));
        }
        if self.name == BackboneName::DsResnet152 && self.pretrained_weights.is_none() {
            return Err(Error::InvalidConfig(
                "ds_resnet152 is defined by externally supplied weights; none given".to_string(),
            ));
        }
        Ok(())
    }
}

/// One backbone feeding a scalar regression head.
pub struct NarrowBandModel {
    pub spec: BackboneSpec,
    features: Box<dyn FeatureExtractor>,
    head: Linear,
}

impl std::fmt::Debug for NarrowBandModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NarrowBandModel")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

/// Builds the model with seeded initialization and, if the backbone spec
/// names a weights file, restores parameters from it.
pub fn build_narrowband_model(spec: &BackboneSpec, seed: u64) -> Result<NarrowBandModel> {
    spec.validate()?;
    let channels = spec.band.channels();
    let features = build_extractor(spec.name, channels, seed);
    let mut head_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let head = Linear::new(spec.embedding_dim, 1, &mut head_rng);
    let mut model = NarrowBandModel {
        spec: spec.clone(),
        features,
        head,
    };
    if let Some(path) = &spec.pretrained_weights {
        let path = path.clone();
        model.load_weights(&path)?;
    }
    Ok(model)
}

impl NarrowBandModel {
    pub fn embedding_dim(&self) -> usize {
        self.features.embedding_dim()
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.spec.band.channels() {
            return Err(Error::ShapeMismatch(format!(
                "{} band expects {} channels, batch has {c}",
                self.spec.band.name(),
                self.spec.band.channels()
            )));
        }
        // The small network divides any side down to a usable map; the
        // fixed-geometry architectures insist on their native side.
        if self.spec.name != BackboneName::ToyCnn {
            let side = self.spec.input_side();
            if (h, w) != (side, side) {
                return Err(Error::ShapeMismatch(format!(
                    "{} expects {side}x{side} input, batch is {h}x{w}",
                    self.spec.name
                )));
            }
        }
        Ok(())
    }

    /// (batch, channels, side, side) -> (batch, 1) PMI estimates in hours.
    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let emb = self.features.forward(x, train);
        Ok(self.head.forward(&emb, train))
    }

    pub fn backward(&mut self, grad: &Array2<f64>) {
        let g_emb = self.head.backward(grad);
        self.features.backward(&g_emb);
    }

    /// Backbone output without the head, eval mode.
    pub fn extract_embedding(&mut self, x: &Array4<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.features.forward(x, false))
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.features.visit_params(f);
        self.head.visit_params(f);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.features.visit_buffers(f);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |t| t.zero_grad());
    }

    fn snapshot(&mut self) -> (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>) {
        let mut params = Vec::new();
        self.visit_params(&mut |t| params.push(t.value.clone()));
        let mut buffers = Vec::new();
        self.visit_buffers(&mut |b| buffers.push(b.clone()));
        (params, buffers)
    }

    pub fn save(&mut self, path: &Path, train_config: Option<serde_json::Value>) -> Result<()> {
        let (params, buffers) = self.snapshot();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            backbone: self.spec.name.as_str().to_string(),
            band: self.spec.band.name().to_string(),
            embedding_dim: self.spec.embedding_dim,
            input_side: self.spec.input_side(),
            param_shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
            buffer_shapes: buffers.iter().map(|b| b.shape().to_vec()).collect(),
            train_config,
        };
        save_checkpoint(
            path,
            &header,
            &params.iter().collect::<Vec<_>>(),
            &buffers.iter().collect::<Vec<_>>(),
        )
    }

    /// Restores parameters from a checkpoint, refusing any architecture
    /// drift. A ds_resnet152 spec accepts resnet152 checkpoints since the
    /// two share one architecture.
    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        let (header, params, buffers) = load_checkpoint(path)?;
        let mut accepted = vec![self.spec.name.as_str()];
        if self.spec.name == BackboneName::DsResnet152 {
            accepted.push(BackboneName::Resnet152.as_str());
        }
        if !accepted.contains(&header.backbone.as_str()) {
            return Err(Error::ArchitectureMismatch {
                path: path.to_path_buf(),
                message: format!(
                    "checkpoint holds {}, model is {}",
                    header.backbone, self.spec.name
                ),
            });
        }
        if header.band != self.spec.band.name() {
            return Err(Error::ArchitectureMismatch {
                path: path.to_path_buf(),
                message: format!(
                    "checkpoint band {} does not match model band {}",
                    header.band,
                    self.spec.band.name()
                ),
            });
        }
        let mut idx = 0usize;
        let mut mismatch: Option<String> = None;
        self.visit_params(&mut |t| {
            if mismatch.is_some() {
                return;
            }
            match params.get(idx) {
                Some(p) if p.shape() == t.value.shape() => t.value.assign(p),
                Some(p) => {
                    mismatch = Some(format!(
                        "parameter {idx} has shape {:?}, checkpoint holds {:?}",
                        t.value.shape(),
                        p.shape()
                    ))
                }
                None => mismatch = Some(format!("checkpoint is short: no parameter {idx}")),
            }
            idx += 1;
        });
        if mismatch.is_none() && idx != params.len() {
            mismatch = Some(format!(
                "checkpoint holds {} parameters, model has {idx}",
                params.len()
            ));
        }
        if let Some(message) = mismatch {
            return Err(Error::ArchitectureMismatch {
                path: path.to_path_buf(),
                message,
            });
        }
        let mut idx = 0usize;
        let mut mismatch: Option<String> = None;
        self.visit_buffers(&mut |b| {
            if mismatch.is_some() {
                return;
            }
            match buffers.get(idx) {
                Some(l) if l.shape() == b.shape() => b.assign(l),
                Some(l) => {
                    mismatch = Some(format!(
                        "buffer {idx} has shape {:?}, checkpoint holds {:?}",
                        b.shape(),
                        l.shape()
                    ))
                }
                None => mismatch = Some(format!("checkpoint is short: no buffer {idx}")),
            }
            idx += 1;
        });
        if mismatch.is_none() && idx != buffers.len() {
            mismatch = Some(format!(
                "checkpoint holds {} buffers, model has {idx}",
                buffers.len()
            ));
        }
        if let Some(message) = mismatch {
            return Err(Error::ArchitectureMismatch {
                path: path.to_path_buf(),
                message,
            });
        }
        Ok(())
    }
}

/// Loads a narrow-band checkpoint standalone, rebuilding the model the
/// header describes.
pub fn load_narrowband_model(path: &Path) -> Result<NarrowBandModel> {
    let (header, _, _) = load_checkpoint(path)?;
    let name: BackboneName = header.backbone.parse()?;
    let band: Band = header.band.parse().map_err(Error::InvalidValue)?;
    let mut spec = BackboneSpec::new(name, band);
    // The weights come from the file itself; skip the external-weights
    // requirement that applies when building fresh.
    spec.pretrained_weights = Some(path.to_path_buf());
    let channels = band.channels();
    let features = build_extractor(name, channels, 0);
    let mut head_rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let head = Linear::new(spec.embedding_dim, 1, &mut head_rng);
    let mut model = NarrowBandModel {
        spec,
        features,
        head,
    };
    model.load_weights(path)?;
    Ok(model)
}

/// The fusion perceptron's parameters in plain array form.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionHeadParams {
    /// hidden_dim × (d_nir + d_rgb).
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// hidden_dim.
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl FusionHeadParams {
    pub fn hidden_dim(&self) -> usize {
        self.w1.dim().0
    }

    pub fn input_dim(&self) -> usize {
        self.w1.dim().1
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = self.w1.dim();
        if h == 0 || d == 0 {
            return Err(Error::ShapeMismatch(
                "fusion head needs nonzero hidden and input dims".to_string(),
            ));
        }
        if self.b1.len() != h || self.w2.len() != h {
            return Err(Error::ShapeMismatch(format!(
                "fusion head shapes disagree: W1 is {h}x{d}, b1 has {}, W2 has {}",
                self.b1.len(),
                self.w2.len()
            )));
        }
        Ok(())
    }
}

/// ŷ = W2 · ReLU(W1 · (e_nir ⊕ e_rgb) + b1) + b2, evaluated exactly.
pub fn fuse_forward(
    e_nir: &Array1<f64>,
    e_rgb: &Array1<f64>,
    params: &FusionHeadParams,
) -> Result<f64> {
    params.validate()?;
    if e_nir.len() + e_rgb.len() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "fusion head takes {} inputs, embeddings concatenate to {}",
            params.input_dim(),
            e_nir.len() + e_rgb.len()
        )));
    }
    let concat: Array1<f64> = e_nir.iter().chain(e_rgb.iter()).copied().collect();
    let hidden = params.w1.dot(&concat) + &params.b1;
    let rectified = hidden.mapv(|v| v.max(0.0));
    Ok(params.w2.dot(&rectified) + params.b2)
}

/// Trainable form of the fusion perceptron.
pub struct FusionHead {
    pub hidden_dim: usize,
    pub input_dim: usize,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    cache: Option<(Array2<f64>, Array2<f64>)>,
}

impl FusionHead {
    pub fn new(d_nir: usize, d_rgb: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let input_dim = d_nir + d_rgb;
        FusionHead {
            hidden_dim,
            input_dim,
            w1: Tensor::new(he_uniform(&[hidden_dim, input_dim], input_dim, rng)),
            b1: Tensor::new(ArrayD::zeros(vec![hidden_dim])),
            w2: Tensor::new(xavier_uniform(&[hidden_dim], hidden_dim, 1, rng)),
            b2: Tensor::new(ArrayD::zeros(vec![1])),
            cache: None,
        }
    }

    pub fn params(&self) -> FusionHeadParams {
        FusionHeadParams {
            w1: self.w1.value.view().into_dimensionality::<Ix2>().expect("2d").to_owned(),
            b1: self.b1.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned(),
            w2: self.w2.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned(),
            b2: self.b2.value[0],
        }
    }

    pub fn set_params(&mut self, params: &FusionHeadParams) -> Result<()> {
        params.validate()?;
        if params.hidden_dim() != self.hidden_dim || params.input_dim() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "head is {}x{}, params are {}x{}",
                self.hidden_dim,
                self.input_dim,
                params.hidden_dim(),
                params.input_dim()
            )));
        }
        self.w1.value.assign(&params.w1.clone().into_dyn());
        self.b1.value.assign(&params.b1.clone().into_dyn());
        self.w2.value.assign(&params.w2.clone().into_dyn());
        self.b2.value[0] = params.b2;
        Ok(())
    }

    /// (batch, d_nir + d_rgb) -> (batch, 1).
    pub fn forward(&mut self, concat: &Array2<f64>, train: bool) -> Array2<f64> {
        let w1 = self.w1.value.view().into_dimensionality::<Ix2>().expect("2d");
        let b1 = self.b1.value.view().into_dimensionality::<Ix1>().expect("1d");
        let w2 = self.w2.value.view().into_dimensionality::<Ix1>().expect("1d");
        let mut z = concat.dot(&w1.t());
        for mut row in z.rows_mut() {
            row += &b1;
        }
        let h = z.mapv(|v| v.max(0.0));
        let n = concat.dim().0;
        let mut out = Array2::zeros((n, 1));
        for i in 0..n {
            out[(i, 0)] = h.row(i).dot(&w2) + self.b2.value[0];
        }
        if train {
            self.cache = Some((concat.clone(), z));
        }
        out
    }

    /// Returns the gradient with respect to the concatenated embeddings.
    pub fn backward(&mut self, grad: &Array2<f64>) -> Array2<f64> {
        let (concat, z) = self.cache.take().expect("backward without train forward");
        let n = concat.dim().0;
        let w1 = self.w1.value.view().into_dimensionality::<Ix2>().expect("2d").to_owned();
        let w2 = self.w2.value.view().into_dimensionality::<Ix1>().expect("1d").to_owned();
        let h = z.mapv(|v| v.max(0.0));

        let mut g_w2 = Array1::<f64>::zeros(self.hidden_dim);
        let mut g_b2 = 0.0;
        let mut g_h = Array2::<f64>::zeros((n, self.hidden_dim));
        for i in 0..n {
            let g = grad[(i, 0)];
            g_b2 += g;
            g_w2.scaled_add(g, &h.row(i));
            g_h.row_mut(i).scaled_add(g, &w2);
        }
        let g_z = &g_h * &z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let g_w1 = g_z.t().dot(&concat);
        let g_b1 = g_z.sum_axis(Axis(0));
        {
            let mut acc = self.w1.grad_mut().view_mut();
            acc += &g_w1.into_dyn();
            let mut acc = self.b1.grad_mut().view_mut();
            acc += &g_b1.into_dyn();
            let mut acc = self.w2.grad_mut().view_mut();
            acc += &g_w2.into_dyn();
            self.b2.grad_mut()[0] += g_b2;
        }
        g_z.dot(&w1)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.w1);
        f(&mut self.b1);
        f(&mut self.w2);
        f(&mut self.b2);
    }
}

/// Two band-specific backbones fused by the perceptron head.
pub struct MultispectralModel {
    pub nir_spec: BackboneSpec,
    pub rgb_spec: BackboneSpec,
    nir: Box<dyn FeatureExtractor>,
    rgb: Box<dyn FeatureExtractor>,
    pub head: FusionHead,
}

impl std::fmt::Debug for MultispectralModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultispectralModel")
            .field("nir_spec", &self.nir_spec)
            .field("rgb_spec", &self.rgb_spec)
            .finish_non_exhaustive()
    }
}

pub fn build_multispectral_model(
    name: BackboneName,
    hidden_dim: usize,
    seed: u64,
) -> Result<MultispectralModel> {
    if hidden_dim == 0 {
        return Err(Error::InvalidConfig(
            "fusion hidden_dim must be positive".to_string(),
        ));
    }
    let nir_spec = BackboneSpec::new(name, Band::Nir);
    let rgb_spec = BackboneSpec::new(name, Band::Rgb);
    nir_spec.validate()?;
    rgb_spec.validate()?;
    let nir = build_extractor(name, 1, seed);
    let rgb = build_extractor(name, 3, seed.wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed_2701_89ab_cdef);
    let head = FusionHead::new(
        nir_spec.embedding_dim,
        rgb_spec.embedding_dim,
        hidden_dim,
        &mut rng,
    );
    Ok(MultispectralModel {
        nir_spec,
        rgb_spec,
        nir,
        rgb,
        head,
    })
}

impl MultispectralModel {
    /// Paired batches, band order (NIR, RGB) -> (batch, 1).
    pub fn forward(
        &mut self,
        x_nir: &Array4<f64>,
        x_rgb: &Array4<f64>,
        train: bool,
    ) -> Result<Array2<f64>> {
        if x_nir.dim().0 != x_rgb.dim().0 {
            return Err(Error::ShapeMismatch(format!(
                "paired batches must agree in length: {} vs {}",
                x_nir.dim().0,
                x_rgb.dim().0
            )));
        }
        let e_nir = self.nir.forward(x_nir, train);
        let e_rgb = self.rgb.forward(x_rgb, train);
        let concat = ndarray::concatenate(Axis(1), &[e_nir.view(), e_rgb.view()])
            .expect("embedding rows align");
        Ok(self.head.forward(&concat, train))
    }

    pub fn backward(&mut self, grad: &Array2<f64>) {
        let g_concat = self.head.backward(grad);
        let d_nir = self.nir.embedding_dim();
        let g_nir = g_concat
            .slice_axis(Axis(1), ndarray::Slice::from(..d_nir))
            .to_owned();
        let g_rgb = g_concat
            .slice_axis(Axis(1), ndarray::Slice::from(d_nir..))
            .to_owned();
        self.nir.backward(&g_nir);
        self.rgb.backward(&g_rgb);
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.nir.visit_params(f);
        self.rgb.visit_params(f);
        self.head.visit_params(f);
    }

    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.nir.visit_buffers(f);
        self.rgb.visit_buffers(f);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |t| t.zero_grad());
    }

    fn snapshot(&mut self) -> (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>) {
        let mut params = Vec::new();
        self.visit_params(&mut |t| params.push(t.value.clone()));
        let mut buffers = Vec::new();
        self.visit_buffers(&mut |b| buffers.push(b.clone()));
        (params, buffers)
    }

    /// Writes both extractors and the fusion head as one checkpoint. The
    /// band field carries the two-band tag; the head's hidden width is
    /// recovered from the parameter shapes on load.
    pub fn save(&mut self, path: &Path, train_config: Option<serde_json::Value>) -> Result<()> {
        let (params, buffers) = self.snapshot();
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            backbone: self.nir_spec.name.as_str().to_string(),
            band: MULTISPECTRAL_BAND_TAG.to_string(),
            embedding_dim: self.nir_spec.embedding_dim + self.rgb_spec.embedding_dim,
            input_side: self.nir_spec.input_side(),
            param_shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
            buffer_shapes: buffers.iter().map(|b| b.shape().to_vec()).collect(),
            train_config,
        };
        save_checkpoint(
            path,
            &header,
            &params.iter().collect::<Vec<_>>(),
            &buffers.iter().collect::<Vec<_>>(),
        )
    }
}

/// Band tag marking a checkpoint that holds both extractors plus the
/// fusion head, as opposed to a single narrow-band model.
pub const MULTISPECTRAL_BAND_TAG: &str = "NIR+RGB";

/// Loads a two-band fusion checkpoint, rebuilding the model the header
/// describes.
pub fn load_multispectral_model(path: &Path) -> Result<MultispectralModel> {
    let (header, params, buffers) = load_checkpoint(path)?;
    if header.band != MULTISPECTRAL_BAND_TAG {
        return Err(Error::ArchitectureMismatch {
            path: path.to_path_buf(),
            message: format!(
                "checkpoint band {} is a single-band model, expected {MULTISPECTRAL_BAND_TAG}",
                header.band
            ),
        });
    }
    let name: BackboneName = header.backbone.parse()?;
    // Head parameters sit last in visitation order: W1, b1, W2, b2; W1's
    // leading dimension is the hidden width.
    let w1_shape = params
        .len()
        .checked_sub(4)
        .and_then(|i| params.get(i))
        .map(|p| p.shape().to_vec())
        .ok_or_else(|| Error::Checkpoint {
            path: path.to_path_buf(),
            message: "too few parameter arrays for a fusion model".to_string(),
        })?;
    if w1_shape.len() != 2 {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("fusion W1 must be a matrix, found shape {w1_shape:?}"),
        });
    }
    let mut model = build_multispectral_model(name, w1_shape[0], 0)?;

    let mut idx = 0usize;
    let mut mismatch: Option<String> = None;
    model.visit_params(&mut |t| {
        if mismatch.is_some() {
            return;
        }
        match params.get(idx) {
            Some(p) if p.shape() == t.value.shape() => t.value.assign(p),
            Some(p) => {
                mismatch = Some(format!(
                    "parameter {idx} has shape {:?}, checkpoint holds {:?}",
                    t.value.shape(),
                    p.shape()
                ))
            }
            None => mismatch = Some(format!("checkpoint is short: no parameter {idx}")),
        }
        idx += 1;
    });
    if mismatch.is_none() && idx != params.len() {
        mismatch = Some(format!(
            "checkpoint holds {} parameters, model has {idx}",
            params.len()
        ));
    }
    let mut idx = 0usize;
    model.visit_buffers(&mut |b| {
        if mismatch.is_some() {
            return;
        }
        match buffers.get(idx) {
            Some(l) if l.shape() == b.shape() => b.assign(l),
            Some(l) => {
                mismatch = Some(format!(
                    "buffer {idx} has shape {:?}, checkpoint holds {:?}",
                    b.shape(),
                    l.shape()
                ))
            }
            None => mismatch = Some(format!("checkpoint is short: no buffer {idx}")),
        }
        idx += 1;
    });
    if mismatch.is_none() && idx != buffers.len() {
        mismatch = Some(format!(
            "checkpoint holds {} buffers, model has {idx}",
            buffers.len()
        ));
    }
    if let Some(message) = mismatch {
        return Err(Error::ArchitectureMismatch {
            path: path.to_path_buf(),
            message,
        });
    }
    Ok(model)
}
