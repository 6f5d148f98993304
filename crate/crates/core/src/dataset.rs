//! Materialized training and evaluation sets. A dataset eagerly loads and
//! crops every image it covers, then serves f64 CHW batches. Augmentation
//! happens per batch request and is counted, so evaluation paths can prove
//! they never touched it.

use std::collections::HashSet;

use ndarray::{Array1, Array4};

use crate::balance::{BalancingPlan, PlanEntry};
use crate::error::{Error, Result};
use crate::manifest::{Band, Manifest, MultispectralPair};
use crate::preprocess::{augment, preprocess_image, sample_rng, AugmentPolicy, CropSpec};
use crate::raster::Raster;

/// One ready-to-batch item: a cropped image and its PMI target in hours.
#[derive(Debug, Clone)]
pub struct DataItem {
    /// Identifier carried into predictions (sample or synthetic id).
    pub id: String,
    /// Key for the per-sample augmentation stream. Equal to `id` except
    /// for up-sampled duplicates, which get an occurrence suffix so the
    /// copies draw distinct jitter.
    pub rng_key: String,
    pub target_hours: f64,
    pub image: Raster,
}

/// Single-band image set, already cropped to the model input side.
#[derive(Debug)]
pub struct Dataset {
    pub band: Band,
    pub side: usize,
    items: Vec<DataItem>,
    augment_calls: u64,
}

impl Dataset {
    pub fn from_items(band: Band, side: usize, items: Vec<DataItem>) -> Result<Self> {
        for item in &items {
            if item.image.channels != band.channels()
                || item.image.width != side
                || item.image.height != side
            {
                return Err(Error::ShapeMismatch(format!(
                    "item {} is {}x{}x{}, dataset wants {}x{side}x{side}",
                    item.id, item.image.channels, item.image.height, item.image.width,
                    band.channels()
                )));
            }
        }
        Ok(Dataset {
            band,
            side,
            items,
            augment_calls: 0,
        })
    }

    /// Loads the given sample ids from a manifest. Records of the other
    /// band are rejected; pass only ids of the band being modeled.
    pub fn from_manifest(
        manifest: &Manifest,
        ids: &[String],
        band: Band,
        crop: &CropSpec,
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(ids.len());
        for id in ids {
            let record = manifest
                .record_by_id(id)
                .ok_or_else(|| Error::InvalidValue(format!("unknown sample id `{id}`")))?;
            if record.band != band {
                return Err(Error::InvalidValue(format!(
                    "sample `{id}` is {} but the dataset is {}",
                    record.band.name(),
                    band.name()
                )));
            }
            let path = manifest.resolve_image_path(record);
            let raw = Raster::load(&path, band.channels())?;
            let image = preprocess_image(
                &raw,
                record.iris_circle,
                record.is_synthetic,
                &record.sample_id,
                crop,
            )?;
            items.push(DataItem {
                id: record.sample_id.clone(),
                rng_key: record.sample_id.clone(),
                target_hours: record.pmi_hours,
                image,
            });
        }
        Dataset::from_items(band, crop.target_side, items)
    }

    /// Expands a balancing plan into a training set. Real references keep
    /// their manifest image and label; synthetic inserts load the planned
    /// image and carry the assigned label.
    pub fn from_plan(
        manifest: &Manifest,
        plan: &BalancingPlan,
        band: Band,
        crop: &CropSpec,
    ) -> Result<Self> {
        let mut items = Vec::new();
        let mut seen = std::collections::HashMap::<String, usize>::new();
        for entry in plan.entries() {
            match entry {
                PlanEntry::RealRef {
                    sample_id,
                    assigned_pmi,
                } => {
                    let record = manifest.record_by_id(sample_id).ok_or_else(|| {
                        Error::InvalidValue(format!(
                            "balancing plan references unknown sample `{sample_id}`"
                        ))
                    })?;
                    if record.band != band {
                        return Err(Error::InvalidValue(format!(
                            "plan entry `{sample_id}` is {} but the dataset is {}",
                            record.band.name(),
                            band.name()
                        )));
                    }
                    let path = manifest.resolve_image_path(record);
                    let raw = Raster::load(&path, band.channels())?;
                    let image = preprocess_image(
                        &raw,
                        record.iris_circle,
                        record.is_synthetic,
                        sample_id,
                        crop,
                    )?;
                    let occurrence = seen.entry(sample_id.clone()).or_insert(0);
                    let rng_key = if *occurrence == 0 {
                        sample_id.clone()
                    } else {
                        format!("{sample_id}#{occurrence}")
                    };
                    *occurrence += 1;
                    items.push(DataItem {
                        id: sample_id.clone(),
                        rng_key,
                        target_hours: *assigned_pmi,
                        image,
                    });
                }
                PlanEntry::SyntheticInsert {
                    synthetic_id,
                    band: entry_band,
                    image_path,
                    assigned_pmi,
                } => {
                    if *entry_band != band {
                        return Err(Error::InvalidValue(format!(
                            "plan inserts {} image `{synthetic_id}` into a {} dataset",
                            entry_band.name(),
                            band.name()
                        )));
                    }
                    let raw =
                        Raster::load(std::path::Path::new(image_path), band.channels())?;
                    let image = preprocess_image(&raw, None, true, synthetic_id, crop)?;
                    items.push(DataItem {
                        id: synthetic_id.clone(),
                        rng_key: synthetic_id.clone(),
                        target_hours: *assigned_pmi,
                        image,
                    });
                }
            }
        }
        Dataset::from_items(band, crop.target_side, items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn targets(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.target_hours).collect()
    }

    /// How many times an image has been augmented since construction.
    /// Prediction paths assert this stays put.
    pub fn augment_calls(&self) -> u64 {
        self.augment_calls
    }

    /// Assembles a batch. With a policy, each image is jittered by its
    /// own (seed, key, epoch) stream; without one, pixels pass through
    /// untouched.
    pub fn batch(
        &mut self,
        indices: &[usize],
        policy: Option<&AugmentPolicy>,
        epoch: u64,
    ) -> (Array4<f64>, Array1<f64>) {
        let c = self.band.channels();
        let mut x = Array4::zeros((indices.len(), c, self.side, self.side));
        let mut y = Array1::zeros(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            let item = &self.items[idx];
            let chw = match policy {
                Some(p) => {
                    let mut rng = sample_rng(p.seed, &item.rng_key, epoch);
                    let jittered = augment(&item.image, p, &mut rng);
                    self.augment_calls += 1;
                    jittered.to_chw_f64()
                }
                None => item.image.to_chw_f64(),
            };
            x.index_axis_mut(ndarray::Axis(0), row).assign(&chw);
            y[row] = self.items[idx].target_hours;
        }
        (x, y)
    }
}

/// One multispectral pair ready for the fusion model.
#[derive(Debug, Clone)]
pub struct PairedItem {
    /// Pair identity in predictions; the NIR member's sample id.
    pub id: String,
    pub target_hours: f64,
    pub nir_key: String,
    pub rgb_key: String,
    pub nir: Raster,
    pub rgb: Raster,
}

/// Paired NIR and RGB crops served in lockstep.
#[derive(Debug)]
pub struct PairedDataset {
    pub side: usize,
    items: Vec<PairedItem>,
    augment_calls: u64,
}

impl PairedDataset {
    /// Loads every pair whose members both sit in `fold_ids`. A pair with
    /// exactly one member in the fold means the split was not pair-atomic
    /// and is rejected.
    pub fn from_pairs(
        manifest: &Manifest,
        pairs: &[MultispectralPair],
        fold_ids: &[String],
        crop: &CropSpec,
    ) -> Result<Self> {
        let fold: HashSet<&str> = fold_ids.iter().map(|s| s.as_str()).collect();
        let mut items = Vec::new();
        for pair in pairs {
            let nir_in = fold.contains(pair.nir.sample_id.as_str());
            let rgb_in = fold.contains(pair.rgb.sample_id.as_str());
            match (nir_in, rgb_in) {
                (true, true) => {}
                (false, false) => continue,
                _ => {
                    return Err(Error::InvalidValue(format!(
                        "pair ({}, {}) straddles the fold boundary",
                        pair.nir.sample_id, pair.rgb.sample_id
                    )))
                }
            }
            let load = |record: &crate::manifest::SampleRecord| -> Result<Raster> {
                let path = manifest.resolve_image_path(record);
                let raw = Raster::load(&path, record.band.channels())?;
                preprocess_image(
                    &raw,
                    record.iris_circle,
                    record.is_synthetic,
                    &record.sample_id,
                    crop,
                )
            };
            items.push(PairedItem {
                id: pair.nir.sample_id.clone(),
                target_hours: pair.pmi_hours,
                nir_key: pair.nir.sample_id.clone(),
                rgb_key: pair.rgb.sample_id.clone(),
                nir: load(&pair.nir)?,
                rgb: load(&pair.rgb)?,
            });
        }
        Ok(PairedDataset {
            side: crop.target_side,
            items,
            augment_calls: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[PairedItem] {
        &self.items
    }

    pub fn targets(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.target_hours).collect()
    }

    pub fn augment_calls(&self) -> u64 {
        self.augment_calls
    }

    /// Batches both bands; each member jitters under its own stream.
    pub fn batch(
        &mut self,
        indices: &[usize],
        policy: Option<&AugmentPolicy>,
        epoch: u64,
    ) -> (Array4<f64>, Array4<f64>, Array1<f64>) {
        let mut x_nir = Array4::zeros((indices.len(), 1, self.side, self.side));
        let mut x_rgb = Array4::zeros((indices.len(), 3, self.side, self.side));
        let mut y = Array1::zeros(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            let item = &self.items[idx];
            let (nir, rgb) = match policy {
                Some(p) => {
                    let mut rng_n = sample_rng(p.seed, &item.nir_key, epoch);
                    let mut rng_r = sample_rng(p.seed, &item.rgb_key, epoch);
                    let out = (
                        augment(&item.nir, p, &mut rng_n).to_chw_f64(),
                        augment(&item.rgb, p, &mut rng_r).to_chw_f64(),
                    );
                    self.augment_calls += 2;
                    out
                }
                None => (item.nir.to_chw_f64(), item.rgb.to_chw_f64()),
            };
            x_nir.index_axis_mut(ndarray::Axis(0), row).assign(&nir);
            x_rgb.index_axis_mut(ndarray::Axis(0), row).assign(&rgb);
            y[row] = item.target_hours;
        }
        (x_nir, x_rgb, y)
    }
}
