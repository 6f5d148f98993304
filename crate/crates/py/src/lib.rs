//! Python bindings for the data and protocol layer: load manifests, freeze
//! and audit split plans, bin PMI values into classes, draw balancing
//! plans, and score predictions. Heavier work (training, checkpointing,
//! full reports) stays behind the `pmiris` binary; these bindings cover
//! what a notebook needs to inspect a corpus and check a protocol.
//!
//! Structured results cross the boundary as JSON strings rather than
//! nested Python objects, so Python sees exactly what the pipeline writes
//! to disk.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pmiris_core::balance::{
    self, plan_real_upsampling, BalancingPlan, DEFAULT_CLASS18_CAP, NUM_CLASSES,
};
use pmiris_core::evaluate;
use pmiris_core::manifest::{load_manifest, pair_multispectral, summarize, Band, Manifest};
use pmiris_core::protocol::{
    make_cross_dataset_split, make_sample_disjoint_folds, make_subject_disjoint_folds,
    verify_split, SplitPlan,
};
use pmiris_core::synth::{write_stub_corpus, StubCorpusSpec};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated sample manifest. Loading runs every ingest check; an
/// instance that exists is one the pipeline would accept.
#[pyclass(name = "Manifest", module = "pmiris_py")]
struct PyManifest {
    inner: Manifest,
}

#[pymethods]
impl PyManifest {
    /// Loads and validates a manifest CSV.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyManifest {
            inner: load_manifest(&path).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifest({} records, datasets {:?})",
            self.inner.records.len(),
            self.inner.dataset_ids()
        )
    }

    /// Distinct dataset ids, sorted.
    fn dataset_ids(&self) -> Vec<String> {
        self.inner.dataset_ids()
    }

    /// Content hash over (sample_id, pmi_hours); split plans pin this.
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    /// Per dataset × band PMI distribution, as JSON.
    fn summary_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&summarize(&self.inner)).map_err(err)
    }

    /// Count of NIR/RGB pairs at the given PMI tolerance in hours.
    #[pyo3(signature = (pmi_tolerance = 0.0))]
    fn pair_count(&self, pmi_tolerance: f64) -> usize {
        pair_multispectral(&self.inner, pmi_tolerance).pairs.len()
    }

    /// K-fold plan where only samples are disjoint across folds.
    fn sample_disjoint_folds(&self, k: usize, seed: u64) -> PyResult<PySplitPlan> {
        Ok(PySplitPlan {
            inner: make_sample_disjoint_folds(&self.inner, k, seed).map_err(err)?,
        })
    }

    /// K-fold plan where no subject appears on both sides of any fold.
    fn subject_disjoint_folds(&self, k: usize, seed: u64) -> PyResult<PySplitPlan> {
        Ok(PySplitPlan {
            inner: make_subject_disjoint_folds(&self.inner, k, seed).map_err(err)?,
        })
    }

    /// Single-fold plan: train on one dataset, test on the other.
    fn cross_dataset_split(&self, train_dataset: &str, test_dataset: &str) -> PyResult<PySplitPlan> {
        Ok(PySplitPlan {
            inner: make_cross_dataset_split(&self.inner, train_dataset, test_dataset)
                .map_err(err)?,
        })
    }

    /// Plans real-image upsampling over the given training samples; returns
    /// the plan as JSON.
    fn real_upsampling_plan_json(&self, train_ids: Vec<String>, seed: u64) -> PyResult<String> {
        let records = train_ids
            .iter()
            .map(|id| {
                self.inner
                    .record_by_id(id)
                    .cloned()
                    .ok_or_else(|| err(format!("unknown sample id `{id}`")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let plan: BalancingPlan = plan_real_upsampling(&records, seed).map_err(err)?;
        Ok(plan.to_json())
    }
}

/// A frozen cross-validation split: fold membership by sample id, pinned
/// to one manifest fingerprint.
#[pyclass(name = "SplitPlan", module = "pmiris_py")]
struct PySplitPlan {
    inner: SplitPlan,
}

#[pymethods]
impl PySplitPlan {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySplitPlan {
            inner: SplitPlan::load_json(&path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("SplitPlan({}, {} folds)", self.inner.scenario, self.inner.folds.len())
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario.to_string()
    }

    #[getter]
    fn num_folds(&self) -> usize {
        self.inner.folds.len()
    }

    fn fold_train(&self, fold: usize) -> PyResult<Vec<String>> {
        self.inner
            .folds
            .get(fold)
            .map(|f| f.train.clone())
            .ok_or_else(|| err(format!("fold {fold} out of range")))
    }

    fn fold_test(&self, fold: usize) -> PyResult<Vec<String>> {
        self.inner
            .folds
            .get(fold)
            .map(|f| f.test.clone())
            .ok_or_else(|| err(format!("fold {fold} out of range")))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_json(&path).map_err(err)
    }

    /// Re-audits this plan against a manifest; returns the full check list
    /// as JSON.
    fn audit_json(&self, manifest: &PyManifest) -> PyResult<String> {
        let report = verify_split(&self.inner, &manifest.inner, None).map_err(err)?;
        serde_json::to_string_pretty(&report).map_err(err)
    }

    /// True when every audit check passes against the manifest.
    fn audit_passes(&self, manifest: &PyManifest) -> PyResult<bool> {
        Ok(verify_split(&self.inner, &manifest.inner, None)
            .map_err(err)?
            .all_passed())
    }
}

/// Maps a PMI in hours to its class index (1..=18).
#[pyfunction]
fn pmi_to_class(pmi_hours: f64) -> PyResult<u8> {
    balance::pmi_to_class(pmi_hours).map_err(err)
}

/// The labeled PMI range (lo, hi) of one class; `class18_cap` bounds the
/// open-ended last class.
#[pyfunction]
#[pyo3(signature = (class_index, class18_cap = DEFAULT_CLASS18_CAP))]
fn pmi_class_range(class_index: u8, class18_cap: f64) -> PyResult<(f64, f64)> {
    balance::pmi_class_range(class_index, class18_cap).map_err(err)
}

/// Root-mean-square error in hours.
#[pyfunction]
fn rmse(predictions: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    evaluate::rmse(&predictions, &targets).map_err(err)
}

/// Mean absolute error in hours.
#[pyfunction]
fn mae(predictions: Vec<f64>, targets: Vec<f64>) -> PyResult<f64> {
    evaluate::mae(&predictions, &targets).map_err(err)
}

/// Generates a labeled stub corpus (images plus manifest) and returns the
/// loaded manifest.
#[pyfunction]
#[pyo3(signature = (dir, band = "NIR", per_class = 2, samples_per_subject = 1, dataset_id = "stubset", seed = 0))]
fn stub_corpus(
    dir: PathBuf,
    band: &str,
    per_class: usize,
    samples_per_subject: usize,
    dataset_id: &str,
    seed: u64,
) -> PyResult<PyManifest> {
    let band: Band = band.to_ascii_uppercase().parse().map_err(err)?;
    let spec = StubCorpusSpec::uniform(band, per_class, samples_per_subject, dataset_id, seed);
    Ok(PyManifest {
        inner: write_stub_corpus(&dir, &spec).map_err(err)?,
    })
}

#[pymodule]
fn pmiris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifest>()?;
    m.add_class::<PySplitPlan>()?;
    m.add_function(wrap_pyfunction!(pmi_to_class, m)?)?;
    m.add_function(wrap_pyfunction!(pmi_class_range, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(stub_corpus, m)?)?;
    m.add("NUM_CLASSES", NUM_CLASSES)?;
    m.add("DEFAULT_CLASS18_CAP", DEFAULT_CLASS18_CAP)?;
    Ok(())
}
