//! Synthetic iris images: an inventory provider that serves pre-generated
//! images by (band, PMI class) from a directory with a CSV sidecar, and a
//! procedural stub generator for desk-scale experiments.
//!
//! The stub encodes the post-mortem progression as contrast collapse plus
//! blur over a concentric annulus texture: class 1 renders a crisp,
//! high-contrast iris pattern, class 18 a faded, smeared one. The speckle
//! and phase fields depend only on the seed, never the class, so images of
//! different classes at the same seed differ in degradation alone. That
//! makes the degradation statistic ([`radial_edge_contrast`]) monotone in
//! class, which in turn gives toy training runs a real signal to learn.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::balance::{sample_pmi_within_class, SyntheticProvider, SyntheticRef, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::manifest::{Band, Eye, IrisCircle, Manifest, SampleRecord};
use crate::raster::{clamp_u8, Raster};

/// Name of the index CSV inside an inventory directory.
pub const SIDECAR_NAME: &str = "inventory.csv";

/// Pre-generated synthetic images indexed by (band, class). Buckets are
/// sorted by synthetic_id, so draws depend only on (arguments, seed).
#[derive(Debug)]
pub struct SyntheticInventory {
    pub root: PathBuf,
    index: BTreeMap<(Band, u8), Vec<SyntheticRef>>,
}

impl SyntheticInventory {
    pub fn total(&self) -> usize {
        self.index.values().map(Vec::len).sum()
    }

    pub fn bucket(&self, band: Band, class_index: u8) -> &[SyntheticRef] {
        self.index
            .get(&(band, class_index))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Reads `root/inventory.csv` (columns `synthetic_id,band,pmi_class,image_path`)
/// and indexes the images it lists. Relative image paths resolve against
/// `root`; a listed file that does not exist fails the load.
pub fn load_inventory(root: &Path) -> Result<SyntheticInventory> {
    let sidecar = root.join(SIDECAR_NAME);
    let mut reader = csv::Reader::from_path(&sidecar).map_err(|e| Error::ManifestFormat {
        path: sidecar.clone(),
        message: e.to_string(),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ManifestFormat {
            path: sidecar.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = ["synthetic_id", "band", "pmi_class", "image_path"];
    if headers != expected {
        return Err(Error::ManifestFormat {
            path: sidecar.clone(),
            message: format!("expected columns {expected:?}, found {headers:?}"),
        });
    }

    let mut index: BTreeMap<(Band, u8), Vec<SyntheticRef>> = BTreeMap::new();
    let mut seen_ids: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let row_num = idx + 1;
        let row_err = |message: String| Error::ManifestRow {
            path: sidecar.clone(),
            row: row_num,
            message,
        };
        let row = row.map_err(|e| row_err(e.to_string()))?;
        let synthetic_id = row.get(0).unwrap_or("").to_string();
        if synthetic_id.is_empty() {
            return Err(row_err("synthetic_id must not be empty".to_string()));
        }
        if let Some(first) = seen_ids.insert(synthetic_id.clone(), row_num) {
            return Err(row_err(format!(
                "duplicate synthetic_id `{synthetic_id}` (first at row {first})"
            )));
        }
        let band: Band = row.get(1).unwrap_or("").parse().map_err(&row_err)?;
        let class_raw = row.get(2).unwrap_or("");
        let pmi_class: u8 = class_raw
            .parse()
            .map_err(|_| row_err(format!("pmi_class `{class_raw}` is not an integer")))?;
        if !(1..=NUM_CLASSES).contains(&pmi_class) {
            return Err(row_err(format!(
                "pmi_class must be 1..=18, got {pmi_class}"
            )));
        }
        let image_path = row.get(3).unwrap_or("").to_string();
        if image_path.is_empty() {
            return Err(row_err("image_path must not be empty".to_string()));
        }
        let resolved = if Path::new(&image_path).is_absolute() {
            PathBuf::from(&image_path)
        } else {
            root.join(&image_path)
        };
        if !resolved.exists() {
            return Err(Error::ManifestRow {
                path: sidecar.clone(),
                row: row_num,
                message: format!("listed image does not exist: {}", resolved.display()),
            });
        }
        index.entry((band, pmi_class)).or_default().push(SyntheticRef {
            synthetic_id,
            band,
            image_path: resolved.to_string_lossy().into_owned(),
        });
    }
    for bucket in index.values_mut() {
        bucket.sort_by(|a, b| a.synthetic_id.cmp(&b.synthetic_id));
    }
    Ok(SyntheticInventory {
        root: root.to_path_buf(),
        index,
    })
}

impl SyntheticProvider for SyntheticInventory {
    fn available(&self, band: Band, class_index: u8) -> usize {
        self.bucket(band, class_index).len()
    }

    fn draw(
        &self,
        band: Band,
        class_index: u8,
        count: usize,
        seed: u64,
    ) -> Result<Vec<SyntheticRef>> {
        let bucket = self.bucket(band, class_index);
        if bucket.is_empty() {
            return Err(Error::ProviderShortfall {
                band: band.name(),
                class_index,
                message: format!("no synthetic images under {}", self.root.display()),
            });
        }
        let mut order: Vec<usize> = (0..bucket.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let pick = if i < order.len() {
                order[i]
            } else {
                // Inventory exhausted; keep drawing with replacement.
                rng.random_range(0..bucket.len())
            };
            out.push(bucket[pick].clone());
        }
        Ok(out)
    }
}

/// Identity of one generated stub image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubDescriptor {
    pub synthetic_id: String,
    pub band: Band,
    pub pmi_class: u8,
}

const STUB_SIDE: usize = 128;
const PUPIL_R: f64 = 0.22;
const IRIS_R: f64 = 0.95;
// Ring wavelength must stay well above the widest blur kernel, or the box
// filter's frequency response stops being monotone in the radius.
const RINGS: f64 = 4.0;

/// Renders one procedural iris-like image. Deterministic in all arguments.
pub fn stub_generate(band: Band, class_index: u8, seed: u64) -> Result<(Raster, StubDescriptor)> {
    if !(1..=NUM_CLASSES).contains(&class_index) {
        return Err(Error::InvalidValue(format!(
            "class index must be 1..=18, got {class_index}"
        )));
    }
    let image = render_stub(band, class_index, seed);
    let descriptor = StubDescriptor {
        synthetic_id: format!("stub_{}_{class_index:02}_{seed:016x}", band.name()),
        band,
        pmi_class: class_index,
    };
    Ok((image, descriptor))
}

fn render_stub(band: Band, class_index: u8, seed: u64) -> Raster {
    let degradation = (class_index - 1) as f64 / 17.0;
    // Contrast collapses and blur grows with the interval; the texture
    // fields below never see the class.
    let amplitude = 90.0 * (1.0 - 0.85 * degradation);
    let fade = 1.0 - 0.45 * degradation;
    let blur_radius = (degradation * 4.0).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..TAU);
    let speckle: Vec<f64> = (0..STUB_SIDE * STUB_SIDE)
        .map(|_| rng.random_range(-12.0..=12.0))
        .collect();

    let center = (STUB_SIDE as f64 - 1.0) / 2.0;
    let r_max = STUB_SIDE as f64 / 2.0;
    let mut field = vec![0.0f64; STUB_SIDE * STUB_SIDE];
    for y in 0..STUB_SIDE {
        for x in 0..STUB_SIDE {
            let dx = x as f64 - center;
            let dy = y as f64 - center;
            let r = (dx * dx + dy * dy).sqrt() / r_max;
            let theta = dy.atan2(dx);
            let v = if r < PUPIL_R {
                35.0
            } else if r > IRIS_R {
                205.0
            } else {
                let t = (r - PUPIL_R) / (IRIS_R - PUPIL_R);
                let ring = (t * RINGS * TAU).sin();
                let filaments = (theta * 24.0 + phase + t * 3.0).sin();
                128.0 + amplitude * (0.62 * ring + 0.38 * filaments)
            };
            field[y * STUB_SIDE + x] = v + speckle[y * STUB_SIDE + x];
        }
    }

    let blurred = box_blur(&field, STUB_SIDE, STUB_SIDE, blur_radius);
    Raster::from_fn(STUB_SIDE, STUB_SIDE, band.channels(), |x, y, c| {
        let v = 128.0 + (blurred[y * STUB_SIDE + x] - 128.0) * fade;
        let tinted = match (band, c) {
            (Band::Nir, _) => v,
            (Band::Rgb, 0) => v,
            (Band::Rgb, 1) => 0.86 * v + 8.0,
            (Band::Rgb, 2) => 0.68 * v + 6.0,
            _ => unreachable!(),
        };
        clamp_u8(tinted)
    })
}

fn box_blur(field: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return field.to_vec();
    }
    let r = radius as i64;
    let clamp_at = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    // Separable box filter with edge clamping, horizontal then vertical.
    let mut horizontal = vec![0.0f64; field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            for dx in -r..=r {
                sum += field[y * width + clamp_at(x as i64 + dx, width)];
            }
            horizontal[y * width + x] = sum / (2 * r + 1) as f64;
        }
    }
    let mut out = vec![0.0f64; field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            for dy in -r..=r {
                sum += horizontal[clamp_at(y as i64 + dy, height) * width + x];
            }
            out[y * width + x] = sum / (2 * r + 1) as f64;
        }
    }
    out
}

/// Degradation statistic: mean absolute difference between the mean
/// intensities of adjacent concentric rings across the central iris
/// annulus (first channel), kept clear of the pupil and sclera transitions
/// so their fixed steps cannot bleed in under blur. Sharp, high-contrast
/// ring texture scores high; faded, blurred texture scores low.
pub fn radial_edge_contrast(image: &Raster) -> f64 {
    const BANDS: usize = 16;
    const MEAS_LO: f64 = 0.35;
    const MEAS_HI: f64 = 0.82;
    let center_x = (image.width as f64 - 1.0) / 2.0;
    let center_y = (image.height as f64 - 1.0) / 2.0;
    let r_max = image.width.min(image.height) as f64 / 2.0;
    let mut sums = [0.0f64; BANDS];
    let mut counts = [0usize; BANDS];
    for y in 0..image.height {
        for x in 0..image.width {
            let dx = x as f64 - center_x;
            let dy = y as f64 - center_y;
            let r = (dx * dx + dy * dy).sqrt() / r_max;
            if r < MEAS_LO || r >= MEAS_HI {
                continue;
            }
            let band = (((r - MEAS_LO) / (MEAS_HI - MEAS_LO)) * BANDS as f64) as usize;
            let band = band.min(BANDS - 1);
            sums[band] += image.get(x, y, 0) as f64;
            counts[band] += 1;
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(counts)
        .map(|(&s, c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let diffs: Vec<f64> = means.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

/// Writes a stub inventory under `root`: `per_class` images for every band
/// in `bands` and every class 1..=18, plus the CSV sidecar, then loads it
/// back.
pub fn write_stub_inventory(
    root: &Path,
    bands: &[Band],
    per_class: usize,
    seed: u64,
) -> Result<SyntheticInventory> {
    let images_dir = root.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let sidecar = root.join(SIDECAR_NAME);
    let mut writer = csv::Writer::from_path(&sidecar).map_err(|e| Error::ManifestFormat {
        path: sidecar.clone(),
        message: e.to_string(),
    })?;
    writer
        .write_record(["synthetic_id", "band", "pmi_class", "image_path"])
        .map_err(|e| Error::ManifestFormat {
            path: sidecar.clone(),
            message: e.to_string(),
        })?;
    for &band in bands {
        for class_index in 1..=NUM_CLASSES {
            for i in 0..per_class {
                let image_seed = derive_seed(seed, &format!("{}/{class_index}/{i}", band.name()));
                let (image, descriptor) = stub_generate(band, class_index, image_seed)?;
                let file_name = format!("{}.png", descriptor.synthetic_id);
                image.save_png(&images_dir.join(&file_name))?;
                writer
                    .write_record([
                        descriptor.synthetic_id.as_str(),
                        band.name(),
                        &class_index.to_string(),
                        &format!("images/{file_name}"),
                    ])
                    .map_err(|e| Error::ManifestFormat {
                        path: sidecar.clone(),
                        message: e.to_string(),
                    })?;
            }
        }
    }
    writer.flush().map_err(|e| Error::io(&sidecar, e))?;
    drop(writer);
    load_inventory(root)
}

/// Layout of a procedurally generated labeled corpus (a stand-in for a real
/// collection in end-to-end toy runs).
#[derive(Debug, Clone, PartialEq)]
pub struct StubCorpusSpec {
    pub band: Band,
    /// Samples to generate per PMI class; slot 0 is class 1.
    pub class_counts: [usize; NUM_CLASSES as usize],
    /// Samples sharing one synthetic subject (its sessions).
    pub samples_per_subject: usize,
    pub dataset_id: String,
    pub seed: u64,
}

impl StubCorpusSpec {
    pub fn uniform(band: Band, per_class: usize, samples_per_subject: usize, dataset_id: &str, seed: u64) -> Self {
        StubCorpusSpec {
            band,
            class_counts: [per_class; NUM_CLASSES as usize],
            samples_per_subject,
            dataset_id: dataset_id.to_string(),
            seed,
        }
    }
}

fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Generates a labeled stub corpus: images under `dir/images`, manifest at
/// `dir/manifest.csv`. Every sample gets a PMI drawn uniformly within its
/// class and an image whose degradation encodes that class. Records carry
/// the synthetic flag, so preprocessing resizes them whole instead of
/// demanding an iris annotation.
pub fn write_stub_corpus(dir: &Path, spec: &StubCorpusSpec) -> Result<Manifest> {
    if spec.samples_per_subject == 0 {
        return Err(Error::InvalidConfig(
            "samples_per_subject must be ≥ 1".to_string(),
        ));
    }
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for (slot, &count) in spec.class_counts.iter().enumerate() {
        let class_index = slot as u8 + 1;
        for i in 0..count {
            let subject_idx = i / spec.samples_per_subject;
            let session_idx = i % spec.samples_per_subject;
            let subject_id = format!("{}_c{class_index:02}s{subject_idx:02}", spec.dataset_id);
            let sample_id = format!("{subject_id}_k{session_idx}");
            let pmi_hours = sample_pmi_within_class(
                class_index,
                crate::balance::DEFAULT_CLASS18_CAP,
                &mut rng,
            )?;
            let image_seed = derive_seed(spec.seed, &sample_id);
            let (image, _) = stub_generate(spec.band, class_index, image_seed)?;
            let file_name = format!("{sample_id}.png");
            image.save_png(&images_dir.join(&file_name))?;
            records.push(SampleRecord {
                sample_id,
                dataset_id: spec.dataset_id.clone(),
                subject_id,
                eye: Eye::Left,
                session_id: session_idx.to_string(),
                band: spec.band,
                pmi_hours,
                image_path: format!("images/{file_name}"),
                iris_circle: None::<IrisCircle>,
                is_synthetic: true,
                extra: Default::default(),
            });
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "stub corpus spec generates no samples".to_string(),
        ));
    }

    let manifest_path = dir.join("manifest.csv");
    let manifest = Manifest {
        records,
        source_path: manifest_path.clone(),
    };
    manifest.save_csv(&manifest_path)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::pmi_to_class;

    #[test]
    fn stub_is_deterministic_per_arguments() {
        let (a, da) = stub_generate(Band::Nir, 5, 99).unwrap();
        let (b, db) = stub_generate(Band::Nir, 5, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(da, db);

        let (c, _) = stub_generate(Band::Nir, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stub_channel_counts_follow_band() {
        let (nir, _) = stub_generate(Band::Nir, 1, 3).unwrap();
        assert_eq!(nir.channels, 1);
        let (rgb, _) = stub_generate(Band::Rgb, 1, 3).unwrap();
        assert_eq!(rgb.channels, 3);
        assert!(stub_generate(Band::Nir, 0, 3).is_err());
        assert!(stub_generate(Band::Nir, 19, 3).is_err());
    }

    #[test]
    fn degradation_statistic_decreases_from_class_1_to_18() {
        for seed in [0, 7, 123] {
            let (first, _) = stub_generate(Band::Nir, 1, seed).unwrap();
            let (last, _) = stub_generate(Band::Nir, 18, seed).unwrap();
            let c1 = radial_edge_contrast(&first);
            let c18 = radial_edge_contrast(&last);
            assert!(
                c18 < c1,
                "seed {seed}: class 18 contrast {c18} not below class 1 {c1}"
            );
        }
    }

    #[test]
    fn degradation_statistic_is_monotone_across_all_classes() {
        for seed in [11, 42] {
            let contrasts: Vec<f64> = (1..=NUM_CLASSES)
                .map(|c| radial_edge_contrast(&stub_generate(Band::Nir, c, seed).unwrap().0))
                .collect();
            for w in contrasts.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "seed {seed}: contrast sequence not non-increasing: {contrasts:?}"
                );
            }
        }
    }

    #[test]
    fn inventory_counts_two_bands_times_18_classes() {
        let dir = tempfile::tempdir().unwrap();
        let inv = write_stub_inventory(dir.path(), &[Band::Nir, Band::Rgb], 1, 5).unwrap();
        assert_eq!(inv.total(), 36);
        assert_eq!(inv.available(Band::Nir, 7), 1);
        assert_eq!(inv.available(Band::Rgb, 18), 1);
    }

    #[test]
    fn inventory_missing_file_is_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        write_stub_inventory(dir.path(), &[Band::Nir], 1, 5).unwrap();
        // Break one listed file.
        let victim = std::fs::read_dir(dir.path().join("images"))
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path();
        std::fs::remove_file(&victim).unwrap();
        let err = load_inventory(dir.path()).unwrap_err().to_string();
        assert!(
            err.contains(victim.file_name().unwrap().to_str().unwrap()),
            "error was: {err}"
        );
    }

    #[test]
    fn inventory_count_matches_sidecar_rows_on_100_row_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (image, _) = stub_generate(Band::Rgb, 1, 0).unwrap();
        image.save_png(&dir.path().join("shared.png")).unwrap();
        let mut sidecar = String::from("synthetic_id,band,pmi_class,image_path\n");
        for i in 0..100 {
            let class = i % 18 + 1;
            sidecar.push_str(&format!("syn{i:03},RGB,{class},shared.png\n"));
        }
        std::fs::write(dir.path().join(SIDECAR_NAME), sidecar).unwrap();
        let inv = load_inventory(dir.path()).unwrap();
        assert_eq!(inv.total(), 100);
    }

    #[test]
    fn inventory_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (image, _) = stub_generate(Band::Rgb, 1, 0).unwrap();
        image.save_png(&dir.path().join("a.png")).unwrap();
        for bad_row in [
            "syn1,RGB,0,a.png",      // class below range
            "syn1,RGB,19,a.png",     // class above range
            "syn1,XYZ,3,a.png",      // unknown band
            "syn1,RGB,three,a.png",  // class not an integer
        ] {
            std::fs::write(
                dir.path().join(SIDECAR_NAME),
                format!("synthetic_id,band,pmi_class,image_path\n{bad_row}\n"),
            )
            .unwrap();
            assert!(load_inventory(dir.path()).is_err(), "accepted: {bad_row}");
        }
    }

    #[test]
    fn draw_without_then_with_replacement() {
        let dir = tempfile::tempdir().unwrap();
        let inv = write_stub_inventory(dir.path(), &[Band::Nir], 5, 1).unwrap();

        let three = inv.draw(Band::Nir, 4, 3, 17).unwrap();
        let distinct: std::collections::BTreeSet<&str> =
            three.iter().map(|r| r.synthetic_id.as_str()).collect();
        assert_eq!(distinct.len(), 3, "bucket of 5 serves 3 distinct draws");

        let dir2 = tempfile::tempdir().unwrap();
        let small = write_stub_inventory(dir2.path(), &[Band::Nir], 2, 1).unwrap();
        let five = small.draw(Band::Nir, 4, 5, 17).unwrap();
        assert_eq!(five.len(), 5);
        let distinct: std::collections::BTreeSet<&str> =
            five.iter().map(|r| r.synthetic_id.as_str()).collect();
        assert_eq!(distinct.len(), 2, "bucket of 2 must repeat across 5 draws");
    }

    #[test]
    fn draw_is_deterministic_and_class_faithful() {
        let dir = tempfile::tempdir().unwrap();
        let inv = write_stub_inventory(dir.path(), &[Band::Rgb], 4, 9).unwrap();
        let a = inv.draw(Band::Rgb, 11, 7, 3).unwrap();
        let b = inv.draw(Band::Rgb, 11, 7, 3).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.synthetic_id.contains("_11_"), "id: {}", r.synthetic_id);
        }

        // Empty bucket: a band the inventory never held.
        assert!(inv.draw(Band::Nir, 11, 1, 3).is_err());
    }

    #[test]
    fn stub_corpus_writes_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut counts = [0usize; 18];
        counts[0] = 4;
        counts[4] = 2;
        let spec = StubCorpusSpec {
            band: Band::Nir,
            class_counts: counts,
            samples_per_subject: 2,
            dataset_id: "toy".to_string(),
            seed: 3,
        };
        let manifest = write_stub_corpus(dir.path(), &spec).unwrap();
        assert_eq!(manifest.records.len(), 6);

        let reloaded = crate::manifest::load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(reloaded.records, manifest.records);

        for record in &reloaded.records {
            assert!(record.is_synthetic);
            let image = Raster::load(&reloaded.resolve_image_path(record), 1).unwrap();
            assert_eq!((image.width, image.height), (STUB_SIDE, STUB_SIDE));
        }
        // Class assignment follows the drawn PMI: 4 subjects' samples in
        // class 1, 2 in class 5.
        let classes: Vec<u8> = reloaded
            .records
            .iter()
            .map(|r| pmi_to_class(r.pmi_hours).unwrap())
            .collect();
        assert_eq!(classes.iter().filter(|&&c| c == 1).count(), 4);
        assert_eq!(classes.iter().filter(|&&c| c == 5).count(), 2);

        // Two samples per subject, grouped under shared subject ids.
        let subjects: std::collections::BTreeSet<&str> = reloaded
            .records
            .iter()
            .map(|r| r.subject_id.as_str())
            .collect();
        assert_eq!(subjects.len(), 3);
    }

    #[test]
    fn stub_corpus_is_deterministic() {
        let spec = StubCorpusSpec::uniform(Band::Nir, 2, 2, "toy", 8);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = write_stub_corpus(dir_a.path(), &spec).unwrap();
        let b = write_stub_corpus(dir_b.path(), &spec).unwrap();
        assert_eq!(a.records, b.records);
        let bytes_a = std::fs::read(dir_a.path().join("images").join(&a.records[0].image_path.trim_start_matches("images/"))).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join("images").join(&b.records[0].image_path.trim_start_matches("images/"))).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }
}
