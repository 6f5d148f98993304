//! Model-ready crops around the iris outer boundary, plus training-time
//! augmentation.
//!
//! Iris localization is deliberately not performed here: crops require the
//! manifest's circle annotation, and anything that can find circles can be
//! plugged in through [`IrisLocator`]. Synthetic images carry no circle and
//! are resized whole, since their texture already fills the frame.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::IrisCircle;
use crate::raster::Raster;

/// Geometry of the model input crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropSpec {
    /// Side of the square model input, 224 or 299 pixels.
    pub target_side: usize,
    /// Crop window side as a multiple of the iris diameter (≥ 1), leaving a
    /// small sclera margin around the boundary.
    pub margin_factor: f64,
}

impl CropSpec {
    pub fn new(target_side: usize, margin_factor: f64) -> Result<Self> {
        if target_side != 224 && target_side != 299 {
            return Err(Error::InvalidConfig(format!(
                "target_side must be 224 or 299, got {target_side}"
            )));
        }
        if !(margin_factor >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "margin_factor must be ≥ 1, got {margin_factor}"
            )));
        }
        Ok(CropSpec {
            target_side,
            margin_factor,
        })
    }

    pub fn with_target(target_side: usize) -> Result<Self> {
        CropSpec::new(target_side, 1.1)
    }
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec {
            target_side: 224,
            margin_factor: 1.1,
        }
    }
}

/// Anything that can produce an iris circle for an un-annotated image.
/// No detector ships with the pipeline; manifests are expected to carry
/// annotations.
pub trait IrisLocator {
    fn locate(&self, image: &Raster) -> Option<IrisCircle>;
}

/// Copies a `side` × `side` window whose top-left corner is at
/// (`left`, `top`) in source coordinates. Pixels outside the source
/// replicate the nearest edge pixel, so windows may legally overrun the
/// image bounds.
pub fn extract_window(image: &Raster, left: i64, top: i64, side: usize) -> Raster {
    assert!(side > 0);
    Raster::from_fn(side, side, image.channels, |x, y, c| {
        image.get_clamped(left + x as i64, top + y as i64, c)
    })
}

/// Crops a square window of side `margin_factor × 2r` centered on the iris
/// circle and resizes it to `target_side`. Channel count is preserved.
pub fn crop_iris(image: &Raster, circle: IrisCircle, spec: &CropSpec) -> Result<Raster> {
    if circle.r <= 0.0 {
        return Err(Error::InvalidValue(format!(
            "iris radius must be positive, got {}",
            circle.r
        )));
    }
    if circle.cx < 0.0
        || circle.cy < 0.0
        || circle.cx >= image.width as f64
        || circle.cy >= image.height as f64
    {
        return Err(Error::InvalidValue(format!(
            "iris center ({}, {}) lies outside the {}x{} image",
            circle.cx, circle.cy, image.width, image.height
        )));
    }
    let side_f = spec.margin_factor * 2.0 * circle.r;
    let side = (side_f.round() as i64).max(1) as usize;
    let left = (circle.cx - side_f / 2.0).round() as i64;
    let top = (circle.cy - side_f / 2.0).round() as i64;
    let window = extract_window(image, left, top, side);
    Ok(window.resize_bilinear(spec.target_side, spec.target_side))
}

/// Produces the model input for one record: annotated images are cropped
/// around the iris, synthetic images are resized whole, and a real image
/// without an annotation is an error.
pub fn preprocess_image(
    image: &Raster,
    circle: Option<IrisCircle>,
    is_synthetic: bool,
    sample_id: &str,
    spec: &CropSpec,
) -> Result<Raster> {
    match (circle, is_synthetic) {
        (Some(c), _) => crop_iris(image, c, spec),
        (None, true) => Ok(image.resize_bilinear(spec.target_side, spec.target_side)),
        (None, false) => Err(Error::MissingIrisCircle {
            sample_id: sample_id.to_string(),
        }),
    }
}

/// Training-time augmentation parameters. Jitters are half-widths of
/// uniform factor ranges: 0.2 draws factors in [0.8, 1.2].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentPolicy {
    pub hflip_prob: f64,
    pub rotation_range_deg: f64,
    pub brightness_jitter: f64,
    pub contrast_jitter: f64,
    pub sharpness_jitter: f64,
    pub seed: u64,
}

impl AugmentPolicy {
    /// No-op policy; augmented output equals the input.
    pub fn identity(seed: u64) -> Self {
        AugmentPolicy {
            hflip_prob: 0.0,
            rotation_range_deg: 0.0,
            brightness_jitter: 0.0,
            contrast_jitter: 0.0,
            sharpness_jitter: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::InvalidConfig(format!(
                "hflip_prob must be in [0, 1], got {}",
                self.hflip_prob
            )));
        }
        if self.rotation_range_deg < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rotation_range_deg must be ≥ 0, got {}",
                self.rotation_range_deg
            )));
        }
        for (name, j) in [
            ("brightness_jitter", self.brightness_jitter),
            ("contrast_jitter", self.contrast_jitter),
            ("sharpness_jitter", self.sharpness_jitter),
        ] {
            if !(0.0..1.0).contains(&j) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {j}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            hflip_prob: 0.5,
            rotation_range_deg: 30.0,
            brightness_jitter: 0.2,
            contrast_jitter: 0.2,
            sharpness_jitter: 0.2,
            seed: 0,
        }
    }
}

/// RNG stream for one (sample, epoch) cell, derived as a hash of the global
/// seed, the sample id, and the epoch. Data loaders can then run in any
/// order (or in parallel) and still reproduce single-threaded draws.
pub fn sample_rng(global_seed: u64, sample_id: &str, epoch: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(sample_id.as_bytes());
    hasher.update(epoch.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Applies flip, rotation, and brightness/contrast/sharpness jitter in a
/// fixed order. Every random draw is consumed whether or not its step fires,
/// so the RNG stream position never depends on the policy's thresholds.
pub fn augment<R: Rng>(image: &Raster, policy: &AugmentPolicy, rng: &mut R) -> Raster {
    let flip = rng.random::<f64>() < policy.hflip_prob;
    let angle = rng.random_range(-policy.rotation_range_deg..=policy.rotation_range_deg);
    let brightness = jitter_factor(rng, policy.brightness_jitter);
    let contrast = jitter_factor(rng, policy.contrast_jitter);
    let sharpness = jitter_factor(rng, policy.sharpness_jitter);

    let mut out = if flip {
        image.flip_horizontal()
    } else {
        image.clone()
    };
    out = out.rotate(angle);
    out = out.adjust_brightness(brightness);
    out = out.adjust_contrast(contrast);
    out.adjust_sharpness(sharpness)
}

fn jitter_factor<R: Rng>(rng: &mut R, jitter: f64) -> f64 {
    rng.random_range(1.0 - jitter..=1.0 + jitter)
}
