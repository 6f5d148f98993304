//! 18-class PMI binning and the two training-set balancing strategies:
//! up-sampling real records with replacement, and supplementing every class
//! with synthetic images up to a common count.
//!
//! Class edges follow the day-granular labeling: class 1 is 0-24h, class 2
//! is 25h-48h, and so on, with class 18 starting at 409h. Fractional PMIs
//! (which the labels alone leave unassigned) bin as
//! `c = ceil((h − 24) / 24) + 1`, clamped to 18, so the hour line is tiled
//! with no gaps: (408, 409) belongs to class 18.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{Band, SampleRecord};

pub const NUM_CLASSES: u8 = 18;

/// Upper PMI bound used when drawing synthetic labels for the open-ended
/// class 18; the largest observed post-mortem interval in the corpora this
/// pipeline targets.
pub const DEFAULT_CLASS18_CAP: f64 = 1674.0;

/// Class index (1..=18) for a PMI in hours.
pub fn pmi_to_class(pmi_hours: f64) -> Result<u8> {
    if !pmi_hours.is_finite() || pmi_hours < 0.0 {
        return Err(Error::InvalidValue(format!(
            "pmi_hours must be finite and ≥ 0, got {pmi_hours}"
        )));
    }
    Ok(if pmi_hours <= 24.0 {
        1
    } else if pmi_hours >= 409.0 {
        18
    } else {
        let c = ((pmi_hours - 24.0) / 24.0).ceil() as u32 + 1;
        c.min(18) as u8
    })
}

/// Inclusive labeled PMI range of a class, used when assigning PMI values
/// to synthetic samples. Class 18 is open-ended and uses `class18_cap` as
/// its upper bound.
pub fn pmi_class_range(class_index: u8, class18_cap: f64) -> Result<(f64, f64)> {
    match class_index {
        1 => Ok((0.0, 24.0)),
        2..=17 => {
            let c = class_index as f64;
            Ok((24.0 * (c - 1.0) + 1.0, 24.0 * c))
        }
        18 => {
            if !(class18_cap >= 409.0) {
                return Err(Error::InvalidConfig(format!(
                    "class-18 PMI cap must be ≥ 409, got {class18_cap}"
                )));
            }
            Ok((409.0, class18_cap))
        }
        other => Err(Error::InvalidValue(format!(
            "class index must be 1..=18, got {other}"
        ))),
    }
}

/// Uniform PMI draw from a class's labeled range.
pub fn sample_pmi_within_class<R: Rng>(
    class_index: u8,
    class18_cap: f64,
    rng: &mut R,
) -> Result<f64> {
    let (lo, hi) = pmi_class_range(class_index, class18_cap)?;
    Ok(rng.random_range(lo..=hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancingStrategy {
    None,
    RealUpsample,
    SyntheticSupplement,
}

impl std::fmt::Display for BalancingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BalancingStrategy::None => "none",
            BalancingStrategy::RealUpsample => "real_upsample",
            BalancingStrategy::SyntheticSupplement => "synthetic_supplement",
        })
    }
}

impl std::str::FromStr for BalancingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BalancingStrategy::None),
            "real_upsample" => Ok(BalancingStrategy::RealUpsample),
            "synthetic_supplement" => Ok(BalancingStrategy::SyntheticSupplement),
            other => Err(Error::InvalidValue(format!(
                "unknown balancing strategy `{other}` \
                 (expected none, real_upsample, or synthetic_supplement)"
            ))),
        }
    }
}

/// One training item in a balanced class: either a reference to a real
/// record (possibly repeated under up-sampling) or a synthetic image with
/// a freshly assigned PMI label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanEntry {
    RealRef {
        sample_id: String,
        assigned_pmi: f64,
    },
    SyntheticInsert {
        synthetic_id: String,
        band: Band,
        image_path: String,
        assigned_pmi: f64,
    },
}

impl PlanEntry {
    pub fn assigned_pmi(&self) -> f64 {
        match self {
            PlanEntry::RealRef { assigned_pmi, .. } => *assigned_pmi,
            PlanEntry::SyntheticInsert { assigned_pmi, .. } => *assigned_pmi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntries {
    pub class_index: u8,
    pub entries: Vec<PlanEntry>,
}

/// The balanced training multiset, one entry list per PMI class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingPlan {
    pub strategy: BalancingStrategy,
    pub target_count: usize,
    pub seed: u64,
    pub classes: Vec<ClassEntries>,
}

impl BalancingPlan {
    pub fn class_counts(&self) -> [usize; NUM_CLASSES as usize] {
        let mut counts = [0usize; NUM_CLASSES as usize];
        for class in &self.classes {
            counts[class.class_index as usize - 1] = class.entries.len();
        }
        counts
    }

    /// Every entry across all classes, in class order.
    pub fn entries(&self) -> impl Iterator<Item = &PlanEntry> {
        self.classes.iter().flat_map(|c| c.entries.iter())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidValue(format!("balancing plan {}: {e}", path.display())))
    }
}

/// A source of pre-generated synthetic iris images, addressed by band and
/// PMI class. Implementations must be deterministic: equal arguments must
/// return equal draws.
pub trait SyntheticProvider {
    /// Distinct synthetic images available for this band and class.
    fn available(&self, band: Band, class_index: u8) -> usize;

    /// Selects `count` synthetic images for this band and class: without
    /// replacement while the inventory lasts, then with replacement. Fails
    /// only when the bucket is empty.
    fn draw(&self, band: Band, class_index: u8, count: usize, seed: u64)
        -> Result<Vec<SyntheticRef>>;
}

/// A provider's handle to one synthetic image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRef {
    pub synthetic_id: String,
    pub band: Band,
    pub image_path: String,
}

fn group_by_class(records: &[SampleRecord]) -> Result<Vec<Vec<usize>>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES as usize];
    for (i, record) in records.iter().enumerate() {
        let class = pmi_to_class(record.pmi_hours)?;
        by_class[class as usize - 1].push(i);
    }
    Ok(by_class)
}

/// Brings every non-empty class up to the size of the largest class by
/// drawing uniformly with replacement from the class's own records. Classes
/// with no real samples stay empty: there is nothing to resample from.
pub fn plan_real_upsampling(records: &[SampleRecord], seed: u64) -> Result<BalancingPlan> {
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "real up-sampling needs at least one training record".to_string(),
        ));
    }
    let by_class = group_by_class(records)?;
    let target_count = by_class.iter().map(Vec::len).max().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = Vec::with_capacity(NUM_CLASSES as usize);
    for (slot, members) in by_class.iter().enumerate() {
        let class_index = slot as u8 + 1;
        let mut entries: Vec<PlanEntry> = members
            .iter()
            .map(|&i| PlanEntry::RealRef {
                sample_id: records[i].sample_id.clone(),
                assigned_pmi: records[i].pmi_hours,
            })
            .collect();
        if !members.is_empty() {
            for _ in members.len()..target_count {
                let pick = members[rng.random_range(0..members.len())];
                entries.push(PlanEntry::RealRef {
                    sample_id: records[pick].sample_id.clone(),
                    assigned_pmi: records[pick].pmi_hours,
                });
            }
        }
        classes.push(ClassEntries {
            class_index,
            entries,
        });
    }
    Ok(BalancingPlan {
        strategy: BalancingStrategy::RealUpsample,
        target_count,
        seed,
        classes,
    })
}

/// Knobs for synthetic supplementation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplementConfig {
    /// Per-class size to reach. Defaults to the largest real class count;
    /// override to emulate a fixed per-class synthesis budget.
    pub target_count: Option<usize>,
    /// Upper bound for class-18 synthetic PMI labels.
    pub class18_cap: f64,
}

impl Default for SupplementConfig {
    fn default() -> Self {
        SupplementConfig {
            target_count: None,
            class18_cap: DEFAULT_CLASS18_CAP,
        }
    }
}

/// Tops every one of the 18 classes up to a common count with synthetic
/// images. Real records appear exactly once; inserts get PMI labels drawn
/// uniformly from their class range.
pub fn plan_synthetic_supplement(
    records: &[SampleRecord],
    provider: &dyn SyntheticProvider,
    seed: u64,
    config: &SupplementConfig,
) -> Result<BalancingPlan> {
    if records.is_empty() {
        return Err(Error::EmptyInput(
            "synthetic supplementation needs at least one training record".to_string(),
        ));
    }
    let band = records[0].band;
    if records.iter().any(|r| r.band != band) {
        return Err(Error::InvalidConfig(
            "synthetic supplementation operates on a single band's training records"
                .to_string(),
        ));
    }

    let by_class = group_by_class(records)?;
    let max_real = by_class.iter().map(Vec::len).max().unwrap();
    let target_count = config.target_count.unwrap_or(max_real);
    if target_count < max_real {
        return Err(Error::InvalidConfig(format!(
            "target_count {target_count} is below the largest real class count {max_real}; \
             real records are never dropped or duplicated by supplementation"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = Vec::with_capacity(NUM_CLASSES as usize);
    for (slot, members) in by_class.iter().enumerate() {
        let class_index = slot as u8 + 1;
        let mut entries: Vec<PlanEntry> = members
            .iter()
            .map(|&i| PlanEntry::RealRef {
                sample_id: records[i].sample_id.clone(),
                assigned_pmi: records[i].pmi_hours,
            })
            .collect();
        let need = target_count - members.len();
        if need > 0 {
            let draw_seed = rng.random::<u64>();
            let refs = provider.draw(band, class_index, need, draw_seed)?;
            debug_assert_eq!(refs.len(), need);
            for r in refs {
                let assigned_pmi =
                    sample_pmi_within_class(class_index, config.class18_cap, &mut rng)?;
                entries.push(PlanEntry::SyntheticInsert {
                    synthetic_id: r.synthetic_id,
                    band: r.band,
                    image_path: r.image_path,
                    assigned_pmi,
                });
            }
        }
        classes.push(ClassEntries {
            class_index,
            entries,
        });
    }
    Ok(BalancingPlan {
        strategy: BalancingStrategy::SyntheticSupplement,
        target_count,
        seed,
        classes,
    })
}
