//! Deterministic train/test split plans for the three evaluation scenarios:
//! sample-disjoint k-fold (S1), subject-disjoint k-fold (S2), and
//! cross-dataset (S3), plus an auditor that re-checks every scenario
//! invariant against the manifest a plan claims to cover.
//!
//! Multispectral experiments split by pair, not by sample: both members of
//! a pair always land on the same side of every fold. The `_paired`
//! constructors take the pairs and the paired-subset manifest (see
//! [`paired_subset`]) so the plan's fingerprint matches what the trainer
//! will be handed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, MultispectralPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "S1_sample_disjoint")]
    S1SampleDisjoint,
    #[serde(rename = "S2_subject_disjoint")]
    S2SubjectDisjoint,
    #[serde(rename = "S3_cross_dataset")]
    S3CrossDataset,
}

impl Scenario {
    /// Compact tag used in artifact file names.
    pub fn short(&self) -> &'static str {
        match self {
            Scenario::S1SampleDisjoint => "S1",
            Scenario::S2SubjectDisjoint => "S2",
            Scenario::S3CrossDataset => "S3",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::S1SampleDisjoint => "S1_sample_disjoint",
            Scenario::S2SubjectDisjoint => "S2_subject_disjoint",
            Scenario::S3CrossDataset => "S3_cross_dataset",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" | "S1_sample_disjoint" => Ok(Scenario::S1SampleDisjoint),
            "S2" | "S2_subject_disjoint" => Ok(Scenario::S2SubjectDisjoint),
            "S3" | "S3_cross_dataset" => Ok(Scenario::S3CrossDataset),
            other => Err(Error::InvalidValue(format!(
                "unknown scenario `{other}` (expected S1, S2, or S3)"
            ))),
        }
    }
}

/// One train/test assignment. Id lists are sorted, so equal plans are
/// byte-equal when serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scenario: Scenario,
    /// Shuffle seed; 0 for S3, which involves no randomness.
    pub seed: u64,
    /// Fingerprint of the covered manifest, checked again at use time.
    pub fingerprint: String,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
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
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidValue(format!("split plan {}: {e}", path.display()))
        })
    }
}

/// The atomic unit a split shuffles: one sample, or one NIR/RGB pair.
struct Unit {
    /// Sort key; the lexicographically smallest member id.
    key: String,
    subject_id: String,
    sample_ids: Vec<String>,
}

fn sample_units(manifest: &Manifest) -> Vec<Unit> {
    let mut units: Vec<Unit> = manifest
        .records
        .iter()
        .map(|r| Unit {
            key: r.sample_id.clone(),
            subject_id: r.subject_id.clone(),
            sample_ids: vec![r.sample_id.clone()],
        })
        .collect();
    units.sort_by(|a, b| a.key.cmp(&b.key));
    units
}

fn pair_units(pairs: &[MultispectralPair]) -> Vec<Unit> {
    let mut units: Vec<Unit> = pairs
        .iter()
        .map(|p| {
            let key = p.nir.sample_id.clone().min(p.rgb.sample_id.clone());
            Unit {
                key,
                subject_id: p.nir.subject_id.clone(),
                sample_ids: vec![p.nir.sample_id.clone(), p.rgb.sample_id.clone()],
            }
        })
        .collect();
    units.sort_by(|a, b| a.key.cmp(&b.key));
    units
}

/// The manifest restricted to records that belong to some pair, in original
/// order. Split plans for multispectral experiments are computed over (and
/// fingerprinted against) this subset.
pub fn paired_subset(manifest: &Manifest, pairs: &[MultispectralPair]) -> Manifest {
    let member_ids: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.nir.sample_id.as_str(), p.rgb.sample_id.as_str()])
        .collect();
    Manifest {
        records: manifest
            .records
            .iter()
            .filter(|r| member_ids.contains(r.sample_id.as_str()))
            .cloned()
            .collect(),
        source_path: manifest.source_path.clone(),
    }
}

fn check_pairs_cover_manifest(manifest: &Manifest, pairs: &[MultispectralPair]) -> Result<()> {
    let member_ids: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.nir.sample_id.as_str(), p.rgb.sample_id.as_str()])
        .collect();
    let manifest_ids: BTreeSet<&str> =
        manifest.records.iter().map(|r| r.sample_id.as_str()).collect();
    if member_ids != manifest_ids {
        return Err(Error::InvalidConfig(
            "paired splits expect the paired-subset manifest: every record must \
             belong to exactly one pair (see paired_subset)"
                .to_string(),
        ));
    }
    Ok(())
}

fn build_folds(units: &[Unit], test_groups: Vec<Vec<usize>>) -> Vec<Fold> {
    test_groups
        .into_iter()
        .map(|group| {
            let in_test: BTreeSet<usize> = group.iter().copied().collect();
            let mut test: Vec<String> = group
                .iter()
                .flat_map(|&i| units[i].sample_ids.iter().cloned())
                .collect();
            let mut train: Vec<String> = units
                .iter()
                .enumerate()
                .filter(|(i, _)| !in_test.contains(i))
                .flat_map(|(_, u)| u.sample_ids.iter().cloned())
                .collect();
            test.sort_unstable();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect()
}

/// Shuffles units with the seeded generator and deals them round-robin into
/// `k` test groups, so group sizes differ by at most one.
fn deal_groups(n_units: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut groups = vec![Vec::new(); k];
    for (pos, unit) in order.into_iter().enumerate() {
        groups[pos % k].push(unit);
    }
    groups
}

fn validate_k(k: usize, units: usize, what: &str) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold count must be ≥ 2, got {k}"
        )));
    }
    if k > units {
        return Err(Error::InvalidConfig(format!(
            "fold count {k} exceeds the number of {what} ({units})"
        )));
    }
    Ok(())
}

fn sample_disjoint_plan(units: &[Unit], fingerprint: String, k: usize, seed: u64) -> Result<SplitPlan> {
    validate_k(k, units.len(), "samples")?;
    let groups = deal_groups(units.len(), k, seed);
    Ok(SplitPlan {
        scenario: Scenario::S1SampleDisjoint,
        seed,
        fingerprint,
        folds: build_folds(units, groups),
    })
}

/// Subjects shuffled, then placed largest-first into the currently smallest
/// fold, which keeps per-fold sample counts comparable even when subjects
/// contribute very different session counts.
fn subject_disjoint_plan(units: &[Unit], fingerprint: String, k: usize, seed: u64) -> Result<SplitPlan> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, unit) in units.iter().enumerate() {
        by_subject.entry(unit.subject_id.as_str()).or_default().push(i);
    }
    validate_k(k, by_subject.len(), "subjects")?;

    let mut subjects: Vec<(&str, Vec<usize>)> = by_subject.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    // Stable sort: equal-sized subjects keep their shuffled order.
    subjects.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut loads = vec![0usize; k];
    for (_, unit_idxs) in subjects {
        let target = (0..k).min_by_key(|&f| (loads[f], f)).expect("k ≥ 2");
        loads[target] += unit_idxs.len();
        groups[target].extend(unit_idxs);
    }
    Ok(SplitPlan {
        scenario: Scenario::S2SubjectDisjoint,
        seed,
        fingerprint,
        folds: build_folds(units, groups),
    })
}

pub fn make_sample_disjoint_folds(manifest: &Manifest, k: usize, seed: u64) -> Result<SplitPlan> {
    sample_disjoint_plan(&sample_units(manifest), manifest.fingerprint(), k, seed)
}

pub fn make_subject_disjoint_folds(manifest: &Manifest, k: usize, seed: u64) -> Result<SplitPlan> {
    subject_disjoint_plan(&sample_units(manifest), manifest.fingerprint(), k, seed)
}

/// Pair-atomic S1: pairs are shuffled and dealt, and both members of each
/// pair land in the same fold side. `manifest` must be the paired subset.
pub fn make_sample_disjoint_folds_paired(
    manifest: &Manifest,
    pairs: &[MultispectralPair],
    k: usize,
    seed: u64,
) -> Result<SplitPlan> {
    check_pairs_cover_manifest(manifest, pairs)?;
    sample_disjoint_plan(&pair_units(pairs), manifest.fingerprint(), k, seed)
}

/// Pair-atomic S2; see [`make_sample_disjoint_folds_paired`].
pub fn make_subject_disjoint_folds_paired(
    manifest: &Manifest,
    pairs: &[MultispectralPair],
    k: usize,
    seed: u64,
) -> Result<SplitPlan> {
    check_pairs_cover_manifest(manifest, pairs)?;
    subject_disjoint_plan(&pair_units(pairs), manifest.fingerprint(), k, seed)
}

/// Single-fold S3: train on one dataset, test on the other. Pairs need no
/// special handling here because both members share their dataset_id.
pub fn make_cross_dataset_split(
    manifest: &Manifest,
    train_dataset_id: &str,
    test_dataset_id: &str,
) -> Result<SplitPlan> {
    if train_dataset_id == test_dataset_id {
        return Err(Error::InvalidConfig(format!(
            "cross-dataset split needs two distinct datasets, got `{train_dataset_id}` twice"
        )));
    }
    let known = manifest.dataset_ids();
    for id in [train_dataset_id, test_dataset_id] {
        if !known.iter().any(|k| k == id) {
            return Err(Error::UnknownDataset(id.to_string()));
        }
    }
    let collect = |dataset: &str| -> Vec<String> {
        let mut ids: Vec<String> = manifest
            .records
            .iter()
            .filter(|r| r.dataset_id == dataset)
            .map(|r| r.sample_id.clone())
            .collect();
        ids.sort_unstable();
        ids
    };
    Ok(SplitPlan {
        scenario: Scenario::S3CrossDataset,
        seed: 0,
        fingerprint: manifest.fingerprint(),
        folds: vec![Fold {
            train: collect(train_dataset_id),
            test: collect(test_dataset_id),
        }],
    })
}

/// One audited invariant: name, verdict, and (on failure) counterexamples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub scenario: Scenario,
    pub checks: Vec<SplitCheck>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&SplitCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn list_examples<T: fmt::Display>(items: &[T]) -> String {
    const SHOW: usize = 5;
    let shown: Vec<String> = items.iter().take(SHOW).map(|i| i.to_string()).collect();
    if items.len() > SHOW {
        format!("{} (+{} more)", shown.join(", "), items.len() - SHOW)
    } else {
        shown.join(", ")
    }
}

/// Re-checks every invariant of the plan's scenario against `manifest`
/// (which must hash to the plan's fingerprint). Pass the pairs of a
/// multispectral experiment to also audit pair atomicity.
pub fn verify_split(
    plan: &SplitPlan,
    manifest: &Manifest,
    pairs: Option<&[MultispectralPair]>,
) -> Result<AuditReport> {
    let actual = manifest.fingerprint();
    if actual != plan.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: plan.fingerprint.clone(),
            actual,
        });
    }

    let manifest_ids: BTreeSet<&str> =
        manifest.records.iter().map(|r| r.sample_id.as_str()).collect();
    let subject_of: BTreeMap<&str, &str> = manifest
        .records
        .iter()
        .map(|r| (r.sample_id.as_str(), r.subject_id.as_str()))
        .collect();
    let dataset_of: BTreeMap<&str, &str> = manifest
        .records
        .iter()
        .map(|r| (r.sample_id.as_str(), r.dataset_id.as_str()))
        .collect();

    let mut checks = Vec::new();

    // Ids referenced by the plan must exist in the manifest.
    let mut unknown: Vec<&str> = Vec::new();
    for fold in &plan.folds {
        for id in fold.train.iter().chain(&fold.test) {
            if !manifest_ids.contains(id.as_str()) {
                unknown.push(id);
            }
        }
    }
    unknown.sort_unstable();
    unknown.dedup();
    checks.push(SplitCheck {
        name: "known_ids".to_string(),
        passed: unknown.is_empty(),
        detail: if unknown.is_empty() {
            String::new()
        } else {
            format!("ids not in manifest: {}", list_examples(&unknown))
        },
    });

    // Per fold: train and test never overlap.
    let mut overlaps: Vec<String> = Vec::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        let train: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
        for id in &fold.test {
            if train.contains(id.as_str()) {
                overlaps.push(format!("fold {i}: {id}"));
            }
        }
    }
    checks.push(SplitCheck {
        name: "train_test_disjoint".to_string(),
        passed: overlaps.is_empty(),
        detail: if overlaps.is_empty() {
            String::new()
        } else {
            list_examples(&overlaps)
        },
    });

    match plan.scenario {
        Scenario::S1SampleDisjoint | Scenario::S2SubjectDisjoint => {
            // Test sets partition the manifest: full coverage, no repeats.
            let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
            for fold in &plan.folds {
                for id in &fold.test {
                    *seen.entry(id.as_str()).or_insert(0) += 1;
                }
            }
            let missing: Vec<&&str> =
                manifest_ids.iter().filter(|id| !seen.contains_key(**id)).collect();
            checks.push(SplitCheck {
                name: "test_coverage".to_string(),
                passed: missing.is_empty(),
                detail: if missing.is_empty() {
                    String::new()
                } else {
                    format!("never tested: {}", list_examples(&missing))
                },
            });
            let repeated: Vec<&str> = seen
                .iter()
                .filter(|(_, &count)| count > 1)
                .map(|(&id, _)| id)
                .collect();
            checks.push(SplitCheck {
                name: "test_unique".to_string(),
                passed: repeated.is_empty(),
                detail: if repeated.is_empty() {
                    String::new()
                } else {
                    format!("tested in multiple folds: {}", list_examples(&repeated))
                },
            });
        }
        Scenario::S3CrossDataset => {
            checks.push(SplitCheck {
                name: "single_fold".to_string(),
                passed: plan.folds.len() == 1,
                detail: if plan.folds.len() == 1 {
                    String::new()
                } else {
                    format!("expected 1 fold, found {}", plan.folds.len())
                },
            });
            let mut shared: Vec<&str> = Vec::new();
            if let Some(fold) = plan.folds.first() {
                let train_ds: BTreeSet<&str> = fold
                    .train
                    .iter()
                    .filter_map(|id| dataset_of.get(id.as_str()).copied())
                    .collect();
                let test_ds: BTreeSet<&str> = fold
                    .test
                    .iter()
                    .filter_map(|id| dataset_of.get(id.as_str()).copied())
                    .collect();
                shared = train_ds.intersection(&test_ds).copied().collect();
            }
            checks.push(SplitCheck {
                name: "dataset_disjoint".to_string(),
                passed: shared.is_empty(),
                detail: if shared.is_empty() {
                    String::new()
                } else {
                    format!("datasets on both sides: {}", list_examples(&shared))
                },
            });
        }
    }

    if plan.scenario == Scenario::S2SubjectDisjoint {
        let mut leaks: Vec<String> = Vec::new();
        for (i, fold) in plan.folds.iter().enumerate() {
            let train_subjects: BTreeSet<&str> = fold
                .train
                .iter()
                .filter_map(|id| subject_of.get(id.as_str()).copied())
                .collect();
            let test_subjects: BTreeSet<&str> = fold
                .test
                .iter()
                .filter_map(|id| subject_of.get(id.as_str()).copied())
                .collect();
            for s in train_subjects.intersection(&test_subjects) {
                leaks.push(format!("fold {i}: subject {s}"));
            }
        }
        checks.push(SplitCheck {
            name: "subject_disjoint".to_string(),
            passed: leaks.is_empty(),
            detail: if leaks.is_empty() {
                String::new()
            } else {
                list_examples(&leaks)
            },
        });
    }

    if let Some(pairs) = pairs {
        let mut split_pairs: Vec<String> = Vec::new();
        for (i, fold) in plan.folds.iter().enumerate() {
            let train: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
            let test: BTreeSet<&str> = fold.test.iter().map(String::as_str).collect();
            for p in pairs {
                let nir = p.nir.sample_id.as_str();
                let rgb = p.rgb.sample_id.as_str();
                let together = (train.contains(nir) && train.contains(rgb))
                    || (test.contains(nir) && test.contains(rgb))
                    || (!train.contains(nir)
                        && !test.contains(nir)
                        && !train.contains(rgb)
                        && !test.contains(rgb));
                if !together {
                    split_pairs.push(format!("fold {i}: {nir}/{rgb}"));
                }
            }
        }
        checks.push(SplitCheck {
            name: "pair_atomic".to_string(),
            passed: split_pairs.is_empty(),
            detail: if split_pairs.is_empty() {
                String::new()
            } else {
                list_examples(&split_pairs)
            },
        });
    }

    Ok(AuditReport {
        scenario: plan.scenario,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{pair_multispectral, Band, Eye, SampleRecord};
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn record(sample_id: &str, dataset_id: &str, subject_id: &str, band: Band, pmi: f64) -> SampleRecord {
        SampleRecord {
            sample_id: sample_id.to_string(),
            dataset_id: dataset_id.to_string(),
            subject_id: subject_id.to_string(),
            eye: Eye::Left,
            session_id: "1".to_string(),
            band,
            pmi_hours: pmi,
            image_path: format!("img/{sample_id}.png"),
            iris_circle: None,
            is_synthetic: false,
            extra: Default::default(),
        }
    }

    fn manifest_of(records: Vec<SampleRecord>) -> Manifest {
        Manifest {
            records,
            source_path: PathBuf::from("in-memory"),
        }
    }

    fn simple_manifest(n: usize) -> Manifest {
        manifest_of(
            (0..n)
                .map(|i| record(&format!("s{i:03}"), "warsaw", &format!("subj{i:03}"), Band::Nir, i as f64))
                .collect(),
        )
    }

    #[test]
    fn ten_samples_ten_folds_tests_one_each() {
        let manifest = simple_manifest(10);
        let plan = make_sample_disjoint_folds(&manifest, 10, 42).unwrap();
        assert_eq!(plan.folds.len(), 10);
        for fold in &plan.folds {
            assert_eq!(fold.test.len(), 1);
            assert_eq!(fold.train.len(), 9);
        }
    }

    #[test]
    fn twenty_three_samples_ten_folds_sizes() {
        // 23 = 7·2 + 3·3: seven folds of 2 and three folds of 3.
        let manifest = simple_manifest(23);
        let plan = make_sample_disjoint_folds(&manifest, 10, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 2, 2, 3, 3, 3]);
    }

    #[test]
    fn same_seed_reproduces_different_seeds_vary() {
        let manifest = simple_manifest(23);
        let a = make_sample_disjoint_folds(&manifest, 10, 7).unwrap();
        let b = make_sample_disjoint_folds(&manifest, 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());

        let serialized: std::collections::BTreeSet<String> = (0..20)
            .map(|seed| make_sample_disjoint_folds(&manifest, 10, seed).unwrap().to_json())
            .collect();
        assert_eq!(serialized.len(), 20, "20 seeds should give 20 distinct plans");
    }

    #[test]
    fn fold_count_bounds_are_enforced() {
        let manifest = simple_manifest(5);
        assert!(make_sample_disjoint_folds(&manifest, 1, 0).is_err());
        assert!(make_sample_disjoint_folds(&manifest, 6, 0).is_err());
        assert!(make_sample_disjoint_folds(&manifest, 5, 0).is_ok());
    }

    #[test]
    fn subject_folds_one_subject_each() {
        let records = (0..10)
            .flat_map(|s| {
                (0..3).map(move |i| {
                    record(
                        &format!("s{s}_{i}"),
                        "warsaw",
                        &format!("subj{s}"),
                        Band::Nir,
                        s as f64,
                    )
                })
            })
            .collect();
        let manifest = manifest_of(records);
        let plan = make_subject_disjoint_folds(&manifest, 10, 3).unwrap();
        for fold in &plan.folds {
            let subjects: BTreeSet<&str> = fold
                .test
                .iter()
                .map(|id| {
                    manifest
                        .record_by_id(id)
                        .map(|r| r.subject_id.as_str())
                        .unwrap()
                })
                .collect();
            assert_eq!(subjects.len(), 1);
            assert_eq!(fold.test.len(), 3);
        }
    }

    #[test]
    fn greedy_packing_isolates_the_large_subject() {
        // Subjects contribute 8, 1, and 1 samples. Largest-first greedy puts
        // the 8-sample subject alone in one fold, the two singletons in the
        // other.
        let mut records: Vec<SampleRecord> = (0..8)
            .map(|i| record(&format!("big{i}"), "warsaw", "subjA", Band::Nir, i as f64))
            .collect();
        records.push(record("x0", "warsaw", "subjB", Band::Nir, 1.0));
        records.push(record("y0", "warsaw", "subjC", Band::Nir, 2.0));
        let manifest = manifest_of(records);
        let plan = make_subject_disjoint_folds(&manifest, 2, 99).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 8]);
    }

    #[test]
    fn subject_fold_count_bound() {
        let manifest = simple_manifest(4); // 4 subjects
        assert!(make_subject_disjoint_folds(&manifest, 5, 0).is_err());
        assert!(make_subject_disjoint_folds(&manifest, 4, 0).is_ok());
    }

    fn two_dataset_manifest() -> Manifest {
        manifest_of(vec![
            record("n1", "nij", "a", Band::Nir, 10.0),
            record("n2", "nij", "b", Band::Nir, 20.0),
            record("w1", "warsaw", "c", Band::Nir, 30.0),
            record("w2", "warsaw", "d", Band::Nir, 40.0),
            record("w3", "warsaw", "e", Band::Nir, 50.0),
        ])
    }

    #[test]
    fn cross_dataset_nij_to_warsaw() {
        let manifest = two_dataset_manifest();
        let plan = make_cross_dataset_split(&manifest, "nij", "warsaw").unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].train, vec!["n1", "n2"]);
        assert_eq!(plan.folds[0].test, vec!["w1", "w2", "w3"]);
    }

    #[test]
    fn cross_dataset_warsaw_to_nij() {
        let manifest = two_dataset_manifest();
        let plan = make_cross_dataset_split(&manifest, "warsaw", "nij").unwrap();
        assert_eq!(plan.folds[0].train.len(), 3);
        assert_eq!(plan.folds[0].test.len(), 2);
    }

    #[test]
    fn cross_dataset_rejects_same_or_unknown_ids() {
        let manifest = two_dataset_manifest();
        assert!(matches!(
            make_cross_dataset_split(&manifest, "nij", "nij").unwrap_err(),
            Error::InvalidConfig(_)
        ));
        assert!(matches!(
            make_cross_dataset_split(&manifest, "nij", "tokyo").unwrap_err(),
            Error::UnknownDataset(_)
        ));
    }

    #[test]
    fn verify_passes_a_valid_s2_plan_including_s1_checks() {
        let records = (0..6)
            .flat_map(|s| {
                (0..2).map(move |i| {
                    record(
                        &format!("s{s}_{i}"),
                        "warsaw",
                        &format!("subj{s}"),
                        Band::Nir,
                        (s * 10 + i) as f64,
                    )
                })
            })
            .collect();
        let manifest = manifest_of(records);
        let plan = make_subject_disjoint_folds(&manifest, 3, 5).unwrap();
        let report = verify_split(&plan, &manifest, None).unwrap();
        assert!(report.all_passed(), "failures: {:?}", report.failures());
        // The S1 partition checks ran too.
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"test_coverage"));
        assert!(names.contains(&"test_unique"));
        assert!(names.contains(&"subject_disjoint"));
    }

    #[test]
    fn verify_names_a_leaked_subject() {
        let manifest = manifest_of(vec![
            record("a0", "warsaw", "subjA", Band::Nir, 1.0),
            record("a1", "warsaw", "subjA", Band::Nir, 2.0),
            record("b0", "warsaw", "subjB", Band::Nir, 3.0),
            record("b1", "warsaw", "subjB", Band::Nir, 4.0),
        ]);
        let plan = SplitPlan {
            scenario: Scenario::S2SubjectDisjoint,
            seed: 0,
            fingerprint: manifest.fingerprint(),
            folds: vec![
                Fold {
                    // subjA appears on both sides of fold 0.
                    train: vec!["a1".into(), "b0".into(), "b1".into()],
                    test: vec!["a0".into()],
                },
                Fold {
                    train: vec!["a0".into()],
                    test: vec!["a1".into(), "b0".into(), "b1".into()],
                },
            ],
        };
        let report = verify_split(&plan, &manifest, None).unwrap();
        assert!(!report.all_passed());
        let leak = report
            .checks
            .iter()
            .find(|c| c.name == "subject_disjoint")
            .unwrap();
        assert!(!leak.passed);
        assert!(leak.detail.contains("subjA"), "detail: {}", leak.detail);
    }

    #[test]
    fn verify_flags_a_sample_missing_from_every_test_set() {
        let manifest = simple_manifest(4);
        let mut plan = make_sample_disjoint_folds(&manifest, 2, 0).unwrap();
        // Drop one id from its test set.
        let dropped = plan.folds[0].test.pop().unwrap();
        let report = verify_split(&plan, &manifest, None).unwrap();
        let coverage = report
            .checks
            .iter()
            .find(|c| c.name == "test_coverage")
            .unwrap();
        assert!(!coverage.passed);
        assert!(coverage.detail.contains(&dropped));
    }

    #[test]
    fn verify_rejects_fingerprint_mismatch() {
        let manifest = simple_manifest(4);
        let mut plan = make_sample_disjoint_folds(&manifest, 2, 0).unwrap();
        plan.fingerprint = "0000".to_string();
        assert!(matches!(
            verify_split(&plan, &manifest, None).unwrap_err(),
            Error::FingerprintMismatch { .. }
        ));
    }

    #[test]
    fn plan_json_round_trips_through_disk() {
        let manifest = simple_manifest(7);
        let plan = make_sample_disjoint_folds(&manifest, 3, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save_json(&path).unwrap();
        let loaded = SplitPlan::load_json(&path).unwrap();
        assert_eq!(plan, loaded);

        // The wire format is stable: spot-check the scenario string.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"S1_sample_disjoint\""));
    }

    fn paired_manifest(n_subjects: usize) -> (Manifest, Vec<MultispectralPair>) {
        let mut records = Vec::new();
        for s in 0..n_subjects {
            for sess in 0..2 {
                for band in [Band::Nir, Band::Rgb] {
                    let mut r = record(
                        &format!("s{s}_{sess}_{band}"),
                        "warsaw",
                        &format!("subj{s}"),
                        band,
                        (s * 24 + sess) as f64,
                    );
                    r.session_id = sess.to_string();
                    records.push(r);
                }
            }
        }
        let manifest = manifest_of(records);
        let pairs = pair_multispectral(&manifest, 1.0).pairs;
        (manifest, pairs)
    }

    #[test]
    fn paired_folds_keep_members_together() {
        let (manifest, pairs) = paired_manifest(6);
        assert_eq!(pairs.len(), 12);
        let subset = paired_subset(&manifest, &pairs);
        assert_eq!(subset.records.len(), manifest.records.len());

        for plan in [
            make_sample_disjoint_folds_paired(&subset, &pairs, 4, 3).unwrap(),
            make_subject_disjoint_folds_paired(&subset, &pairs, 3, 3).unwrap(),
        ] {
            let report = verify_split(&plan, &subset, Some(&pairs)).unwrap();
            assert!(report.all_passed(), "failures: {:?}", report.failures());
            assert!(report.checks.iter().any(|c| c.name == "pair_atomic"));
        }
    }

    #[test]
    fn paired_split_rejects_manifest_with_unpaired_records() {
        let (mut manifest, pairs) = paired_manifest(3);
        manifest
            .records
            .push(record("odd", "warsaw", "subj9", Band::Nir, 5.0));
        assert!(make_sample_disjoint_folds_paired(&manifest, &pairs, 2, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_s1_plans_audit_clean(n in 4usize..40, k in 2usize..4, seed in 0u64..1000) {
            let manifest = simple_manifest(n);
            let plan = make_sample_disjoint_folds(&manifest, k, seed).unwrap();
            let report = verify_split(&plan, &manifest, None).unwrap();
            prop_assert!(report.all_passed());

            // Near-equal fold sizes: max and min differ by at most 1.
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn random_s2_plans_audit_clean(
            subject_sizes in proptest::collection::vec(1usize..6, 3..12),
            seed in 0u64..1000,
        ) {
            let records: Vec<SampleRecord> = subject_sizes
                .iter()
                .enumerate()
                .flat_map(|(s, &count)| {
                    (0..count).map(move |i| {
                        record(
                            &format!("s{s}_{i}"),
                            "warsaw",
                            &format!("subj{s}"),
                            Band::Nir,
                            (s * 7 + i) as f64,
                        )
                    })
                })
                .collect();
            let manifest = manifest_of(records);
            let k = 3.min(subject_sizes.len());
            let plan = make_subject_disjoint_folds(&manifest, k, seed).unwrap();
            let report = verify_split(&plan, &manifest, None).unwrap();
            prop_assert!(report.all_passed(), "failures: {:?}", report.failures());
        }
    }
}
