//! Dataset manifests: the sample record model, CSV/JSON parsing and
//! serialization, NIR/RGB pairing into multispectral records, and
//! per-dataset PMI distribution summaries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{box_stats, BoxStats};

/// Canonical column order for manifest CSV files. The last four are optional
/// and may be empty per row.
pub const MANIFEST_COLUMNS: [&str; 12] = [
    "sample_id",
    "dataset_id",
    "subject_id",
    "eye",
    "session_id",
    "band",
    "pmi_hours",
    "image_path",
    "iris_cx",
    "iris_cy",
    "iris_r",
    "is_synthetic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Eye {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "L",
            Eye::Right => "R",
        })
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "L" => Ok(Eye::Left),
            "R" => Ok(Eye::Right),
            other => Err(format!("eye must be `L` or `R`, got `{other}`")),
        }
    }
}

/// Capture band. NIR images carry one channel, RGB three; the distinction
/// drives both model input shape and which member of a pair labels its PMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "RGB")]
    Rgb,
}

impl Band {
    pub fn channels(self) -> usize {
        match self {
            Band::Nir => 1,
            Band::Rgb => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Nir => "NIR",
            Band::Rgb => "RGB",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Nir => "NIR",
            Band::Rgb => "RGB",
        })
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "NIR" => Ok(Band::Nir),
            "RGB" => Ok(Band::Rgb),
            other => Err(format!("band must be `NIR` or `RGB`, got `{other}`")),
        }
    }
}

/// Iris outer-boundary annotation in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrisCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// One iris image with its capture metadata and regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub dataset_id: String,
    pub subject_id: String,
    pub eye: Eye,
    pub session_id: String,
    pub band: Band,
    /// Hours since death. Non-negative.
    pub pmi_hours: f64,
    pub image_path: String,
    pub iris_circle: Option<IrisCircle>,
    pub is_synthetic: bool,
    /// Columns beyond the canonical twelve, preserved verbatim so that
    /// free-form metadata (age, cause of death, ...) survives a round trip.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// A parsed manifest: the record sequence in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub source_path: PathBuf,
}

impl Manifest {
    /// Content hash over (sample_id, pmi_hours), sorted by id. Identifies
    /// the population a split or balancing plan was computed for, so stale
    /// plans are rejected instead of silently misapplied.
    pub fn fingerprint(&self) -> String {
        let mut keyed: Vec<(&str, f64)> = self
            .records
            .iter()
            .map(|r| (r.sample_id.as_str(), r.pmi_hours))
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(b.0));
        let mut hasher = Sha256::new();
        for (id, pmi) in keyed {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
            hasher.update(pmi.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Writes the manifest as CSV in canonical column order, followed by any
    /// extra columns (sorted by name, union across records).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut extra_cols: Vec<&str> = self
            .records
            .iter()
            .flat_map(|r| r.extra.keys().map(String::as_str))
            .collect();
        extra_cols.sort_unstable();
        extra_cols.dedup();

        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let header: Vec<&str> = MANIFEST_COLUMNS.iter().copied().chain(extra_cols.iter().copied()).collect();
        writer
            .write_record(&header)
            .map_err(|e| Error::ManifestFormat {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        for record in &self.records {
            let mut row: Vec<String> = vec![
                record.sample_id.clone(),
                record.dataset_id.clone(),
                record.subject_id.clone(),
                record.eye.to_string(),
                record.session_id.clone(),
                record.band.to_string(),
                format!("{}", record.pmi_hours),
                record.image_path.clone(),
            ];
            match record.iris_circle {
                Some(c) => {
                    row.push(format!("{}", c.cx));
                    row.push(format!("{}", c.cy));
                    row.push(format!("{}", c.r));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            row.push(if record.is_synthetic { "1" } else { "0" }.to_string());
            for col in &extra_cols {
                row.push(record.extra.get(*col).cloned().unwrap_or_default());
            }
            writer.write_record(&row).map_err(|e| Error::ManifestFormat {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(path.to_path_buf(), e))?;
        Ok(())
    }

    /// Distinct dataset_id values, sorted.
    pub fn dataset_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.dataset_id.clone()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn record_by_id(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    /// Image location of a record: absolute paths pass through, relative
    /// paths resolve against the manifest file's directory.
    pub fn resolve_image_path(&self, record: &SampleRecord) -> PathBuf {
        let p = Path::new(&record.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.source_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

/// Loads a manifest from CSV (default) or JSON (by `.json` extension).
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let rows = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        read_json_rows(path)?
    } else {
        read_csv_rows(path)?
    };
    build_manifest(path, rows)
}

/// (header, per-row field values) as raw strings; one vec entry per data row.
type RawRows = (Vec<String>, Vec<Vec<String>>);

fn read_csv_rows(path: &Path) -> Result<RawRows> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path.to_path_buf(),
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => Error::ManifestFormat {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ManifestRow {
            path: path.to_path_buf(),
            row: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn read_json_rows(path: &Path) -> Result<RawRows> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ManifestFormat {
            path: path.to_path_buf(),
            message: format!("invalid JSON: {e}"),
        })?;
    let array = value.as_array().ok_or_else(|| Error::ManifestFormat {
        path: path.to_path_buf(),
        message: "expected a JSON array of record objects".to_string(),
    })?;

    // Header = union of keys, canonical columns first so downstream row
    // parsing is format-agnostic.
    let mut extra_keys: Vec<String> = Vec::new();
    for item in array {
        if let Some(obj) = item.as_object() {
            for key in obj.keys() {
                if !MANIFEST_COLUMNS.contains(&key.as_str()) && !extra_keys.contains(key) {
                    extra_keys.push(key.clone());
                }
            }
        }
    }
    extra_keys.sort_unstable();
    let header: Vec<String> = MANIFEST_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(extra_keys.iter().cloned())
        .collect();

    let mut rows = Vec::new();
    for (idx, item) in array.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| Error::ManifestRow {
            path: path.to_path_buf(),
            row: idx + 1,
            message: "expected a JSON object".to_string(),
        })?;
        let mut row = Vec::with_capacity(header.len());
        for key in &header {
            let cell = match obj.get(key) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(serde_json::Value::Bool(b)) => if *b { "1" } else { "0" }.to_string(),
                Some(other) => other.to_string(),
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn build_manifest(path: &Path, (header, rows): RawRows) -> Result<Manifest> {
    let mut col_index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        col_index.insert(name.as_str(), i);
    }
    for required in &MANIFEST_COLUMNS[..8] {
        if !col_index.contains_key(required) {
            return Err(Error::ManifestFormat {
                path: path.to_path_buf(),
                message: format!("missing required column `{required}`"),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "manifest {} has no data rows",
            path.display()
        )));
    }

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    for (idx, fields) in rows.iter().enumerate() {
        let row = idx + 1;
        let record = parse_row(path, row, &header, &col_index, fields)?;
        if let Some(&first_row) = seen.get(&record.sample_id) {
            return Err(Error::DuplicateSampleId {
                path: path.to_path_buf(),
                sample_id: record.sample_id,
                first_row,
                second_row: row,
            });
        }
        seen.insert(record.sample_id.clone(), row);
        records.push(record);
    }
    Ok(Manifest {
        records,
        source_path: path.to_path_buf(),
    })
}

fn parse_row(
    path: &Path,
    row: usize,
    header: &[String],
    col_index: &HashMap<&str, usize>,
    fields: &[String],
) -> Result<SampleRecord> {
    let row_err = |message: String| Error::ManifestRow {
        path: path.to_path_buf(),
        row,
        message,
    };
    let get = |name: &str| -> &str {
        col_index
            .get(name)
            .and_then(|&i| fields.get(i))
            .map(String::as_str)
            .unwrap_or("")
    };
    let require = |name: &'static str| -> Result<&str> {
        let v = get(name);
        if v.is_empty() {
            Err(row_err(format!("column `{name}` must not be empty")))
        } else {
            Ok(v)
        }
    };

    let sample_id = require("sample_id")?.to_string();
    let dataset_id = require("dataset_id")?.to_string();
    let subject_id = require("subject_id")?.to_string();
    let eye: Eye = require("eye")?.parse().map_err(&row_err)?;
    let session_id = require("session_id")?.to_string();
    let band: Band = require("band")?.parse().map_err(&row_err)?;
    let pmi_raw = require("pmi_hours")?;
    let pmi_hours: f64 = pmi_raw
        .parse()
        .map_err(|_| row_err(format!("pmi_hours `{pmi_raw}` is not a number")))?;
    if !pmi_hours.is_finite() || pmi_hours < 0.0 {
        return Err(row_err(format!(
            "pmi_hours must be a finite non-negative number of hours, got {pmi_raw}"
        )));
    }
    let image_path = require("image_path")?.to_string();

    let circle_fields = ["iris_cx", "iris_cy", "iris_r"];
    let present = circle_fields.iter().filter(|c| !get(c).is_empty()).count();
    let iris_circle = match present {
        0 => None,
        3 => {
            let mut vals = [0.0f64; 3];
            for (slot, name) in vals.iter_mut().zip(circle_fields) {
                let raw = get(name);
                *slot = raw
                    .parse()
                    .map_err(|_| row_err(format!("{name} `{raw}` is not a number")))?;
                if !slot.is_finite() {
                    return Err(row_err(format!("{name} must be finite")));
                }
            }
            if vals[2] <= 0.0 {
                return Err(row_err(format!("iris_r must be > 0, got {}", vals[2])));
            }
            Some(IrisCircle {
                cx: vals[0],
                cy: vals[1],
                r: vals[2],
            })
        }
        _ => {
            return Err(row_err(
                "iris circle needs all of iris_cx, iris_cy, iris_r (or none)".to_string(),
            ))
        }
    };

    let is_synthetic = match get("is_synthetic") {
        "" | "0" => false,
        "1" => true,
        other => return Err(row_err(format!("is_synthetic must be 0 or 1, got `{other}`"))),
    };

    let mut extra = BTreeMap::new();
    for (i, name) in header.iter().enumerate() {
        if !MANIFEST_COLUMNS.contains(&name.as_str()) {
            if let Some(value) = fields.get(i) {
                if !value.is_empty() {
                    extra.insert(name.clone(), value.clone());
                }
            }
        }
    }

    Ok(SampleRecord {
        sample_id,
        dataset_id,
        subject_id,
        eye,
        session_id,
        band,
        pmi_hours,
        image_path,
        iris_circle,
        is_synthetic,
        extra,
    })
}

/// NIR and RGB captures of the same eye in the same session, labeled with
/// the NIR member's PMI (the ISO-compliant biometric capture; same-session
/// captures are minutes apart, so the members' PMIs agree to within noise).
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralPair {
    pub nir: SampleRecord,
    pub rgb: SampleRecord,
    pub pmi_hours: f64,
}

/// Result of pairing: the pairs plus every record that found no partner.
#[derive(Debug, Clone, Default)]
pub struct PairingOutcome {
    pub pairs: Vec<MultispectralPair>,
    pub unpaired: Vec<String>,
}

/// Matches NIR records with RGB records that share (dataset, subject, eye,
/// session), greedily by smallest PMI gap within `pmi_tolerance` hours,
/// tie-broken by sample_id order. Unpaired records are reported, not an
/// error: single-band acquisitions are normal in forensic collections.
pub fn pair_multispectral(manifest: &Manifest, pmi_tolerance: f64) -> PairingOutcome {
    assert!(pmi_tolerance >= 0.0, "pmi_tolerance must be non-negative");
    type GroupKey<'a> = (&'a str, &'a str, Eye, &'a str);
    let mut groups: BTreeMap<GroupKey, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (idx, record) in manifest.records.iter().enumerate() {
        let key = (
            record.dataset_id.as_str(),
            record.subject_id.as_str(),
            record.eye,
            record.session_id.as_str(),
        );
        let entry = groups.entry(key).or_default();
        match record.band {
            Band::Nir => entry.0.push(idx),
            Band::Rgb => entry.1.push(idx),
        }
    }

    let mut pairs = Vec::new();
    let mut paired = vec![false; manifest.records.len()];
    for (nir_idxs, rgb_idxs) in groups.values() {
        // Candidate edges within tolerance, cheapest gap first.
        let mut edges: Vec<(f64, usize, usize)> = Vec::new();
        for &n in nir_idxs {
            for &r in rgb_idxs {
                let gap =
                    (manifest.records[n].pmi_hours - manifest.records[r].pmi_hours).abs();
                if gap <= pmi_tolerance {
                    edges.push((gap, n, r));
                }
            }
        }
        edges.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite PMI")
                .then_with(|| manifest.records[a.1].sample_id.cmp(&manifest.records[b.1].sample_id))
                .then_with(|| manifest.records[a.2].sample_id.cmp(&manifest.records[b.2].sample_id))
        });
        for (_, n, r) in edges {
            if !paired[n] && !paired[r] {
                paired[n] = true;
                paired[r] = true;
                pairs.push(MultispectralPair {
                    nir: manifest.records[n].clone(),
                    rgb: manifest.records[r].clone(),
                    pmi_hours: manifest.records[n].pmi_hours,
                });
            }
        }
    }

    let unpaired = manifest
        .records
        .iter()
        .zip(&paired)
        .filter(|(_, &p)| !p)
        .map(|(r, _)| r.sample_id.clone())
        .collect();
    PairingOutcome { pairs, unpaired }
}

/// PMI distribution of one dataset_id × band cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub dataset_id: String,
    pub band: Band,
    pub subjects: usize,
    pub pmi: BoxStats,
}

/// Per dataset_id × band PMI distribution, the numbers behind the dataset
/// box plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub groups: Vec<GroupSummary>,
}

impl DatasetSummary {
    pub fn dataset_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.groups.iter().map(|g| g.dataset_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub fn summarize(manifest: &Manifest) -> DatasetSummary {
    let mut cells: BTreeMap<(&str, Band), (Vec<f64>, Vec<&str>)> = BTreeMap::new();
    for record in &manifest.records {
        let cell = cells
            .entry((record.dataset_id.as_str(), record.band))
            .or_default();
        cell.0.push(record.pmi_hours);
        cell.1.push(record.subject_id.as_str());
    }
    let groups = cells
        .into_iter()
        .map(|((dataset_id, band), (pmis, mut subjects))| {
            subjects.sort_unstable();
            subjects.dedup();
            GroupSummary {
                dataset_id: dataset_id.to_string(),
                band,
                subjects: subjects.len(),
                pmi: box_stats(&pmis),
            }
        })
        .collect();
    DatasetSummary { groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(
        sample_id: &str,
        dataset_id: &str,
        subject_id: &str,
        eye: Eye,
        session_id: &str,
        band: Band,
        pmi_hours: f64,
    ) -> SampleRecord {
        SampleRecord {
            sample_id: sample_id.to_string(),
            dataset_id: dataset_id.to_string(),
            subject_id: subject_id.to_string(),
            eye,
            session_id: session_id.to_string(),
            band,
            pmi_hours,
            image_path: format!("images/{sample_id}.png"),
            iris_circle: None,
            is_synthetic: false,
            extra: BTreeMap::new(),
        }
    }

    fn manifest_of(records: Vec<SampleRecord>) -> Manifest {
        Manifest {
            records,
            source_path: PathBuf::from("in-memory"),
        }
    }

    fn write_temp_csv(contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, contents).unwrap();
        (dir, path)
    }

    const HEADER: &str =
        "sample_id,dataset_id,subject_id,eye,session_id,band,pmi_hours,image_path,iris_cx,iris_cy,iris_r,is_synthetic";

    #[test]
    fn parses_three_rows() {
        let csv = format!(
            "{HEADER}\n\
             a1,warsaw,s01,L,1,NIR,12.5,img/a1.png,320,240,110,0\n\
             a2,warsaw,s01,L,1,RGB,12.5,img/a2.png,,,,\n\
             a3,nij,s02,R,1,NIR,300,img/a3.png,300,250,95,1\n"
        );
        let (_dir, path) = write_temp_csv(&csv);
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.records.len(), 3);
        assert_eq!(manifest.records[0].sample_id, "a1");
        assert_eq!(manifest.records[0].eye, Eye::Left);
        assert_eq!(manifest.records[0].band, Band::Nir);
        assert_eq!(
            manifest.records[0].iris_circle,
            Some(IrisCircle {
                cx: 320.0,
                cy: 240.0,
                r: 110.0
            })
        );
        assert!(!manifest.records[1].is_synthetic);
        assert_eq!(manifest.records[1].iris_circle, None);
        assert!(manifest.records[2].is_synthetic);
        assert_eq!(manifest.records[2].pmi_hours, 300.0);
    }

    #[test]
    fn negative_pmi_names_row_and_constraint() {
        let csv = format!(
            "{HEADER}\n\
             a1,warsaw,s01,L,1,NIR,5,img/a1.png,,,,\n\
             a2,warsaw,s01,L,1,NIR,-5,img/a2.png,,,,\n"
        );
        let (_dir, path) = write_temp_csv(&csv);
        let err = load_manifest(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("row 2"), "error was: {text}");
        assert!(text.contains("pmi_hours"), "error was: {text}");
    }

    #[test]
    fn duplicate_sample_id_reports_both_rows() {
        let csv = format!(
            "{HEADER}\n\
             a1,warsaw,s01,L,1,NIR,5,img/a1.png,,,,\n\
             a2,warsaw,s01,L,1,NIR,6,img/a2.png,,,,\n\
             a1,warsaw,s01,R,1,NIR,7,img/a3.png,,,,\n"
        );
        let (_dir, path) = write_temp_csv(&csv);
        match load_manifest(&path).unwrap_err() {
            Error::DuplicateSampleId {
                sample_id,
                first_row,
                second_row,
                ..
            } => {
                assert_eq!(sample_id, "a1");
                assert_eq!(first_row, 1);
                assert_eq!(second_row, 3);
            }
            other => panic!("expected duplicate error, got {other}"),
        }
    }

    #[test]
    fn partial_circle_is_rejected() {
        let csv = format!(
            "{HEADER}\n\
             a1,warsaw,s01,L,1,NIR,5,img/a1.png,320,,110,0\n"
        );
        let (_dir, path) = write_temp_csv(&csv);
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("iris_cx"), "error was: {err}");
    }

    #[test]
    fn missing_column_is_a_format_error() {
        let csv = "sample_id,dataset_id\n a1,warsaw\n";
        let (_dir, path) = write_temp_csv(csv);
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("subject_id"), "error was: {err}");
    }

    #[test]
    fn unknown_columns_survive_round_trip() {
        let csv = format!(
            "sample_id,dataset_id,subject_id,eye,session_id,band,pmi_hours,image_path,age,cause\n\
             a1,warsaw,s01,L,1,NIR,5,img/a1.png,63,\"drowning, presumed\"\n"
        );
        let (_dir, path) = write_temp_csv(&csv);
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.records[0].extra["age"], "63");
        assert_eq!(manifest.records[0].extra["cause"], "drowning, presumed");

        let out = path.with_file_name("copy.csv");
        manifest.save_csv(&out).unwrap();
        let reloaded = load_manifest(&out).unwrap();
        assert_eq!(manifest.records, reloaded.records);
    }

    #[test]
    fn json_manifest_loads_like_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(
            &path,
            r#"[
              {"sample_id":"a1","dataset_id":"warsaw","subject_id":"s01","eye":"L",
               "session_id":"1","band":"NIR","pmi_hours":12.5,"image_path":"img/a1.png",
               "iris_cx":320,"iris_cy":240,"iris_r":110,"is_synthetic":0}
            ]"#,
        )
        .unwrap();
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.records.len(), 1);
        assert_eq!(manifest.records[0].pmi_hours, 12.5);
        assert_eq!(
            manifest.records[0].iris_circle,
            Some(IrisCircle {
                cx: 320.0,
                cy: 240.0,
                r: 110.0
            })
        );
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let (_dir, path) = write_temp_csv(&format!("{HEADER}\n"));
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            Error::EmptyInput(_)
        ));
    }

    #[test]
    fn summarize_counts_datasets_and_subjects() {
        let manifest = manifest_of(vec![
            record("a1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 5.0),
            record("a2", "warsaw", "s01", Eye::Right, "1", Band::Nir, 10.0),
            record("a3", "warsaw", "s02", Eye::Left, "1", Band::Nir, 15.0),
            record("a4", "nij", "n01", Eye::Left, "1", Band::Nir, 100.0),
            record("a5", "nij", "n02", Eye::Left, "1", Band::Rgb, 200.0),
            record("a6", "nij", "n03", Eye::Left, "1", Band::Rgb, 300.0),
        ]);
        let summary = summarize(&manifest);
        assert_eq!(summary.dataset_ids(), vec!["nij", "warsaw"]);

        let warsaw_nir = summary
            .groups
            .iter()
            .find(|g| g.dataset_id == "warsaw" && g.band == Band::Nir)
            .unwrap();
        assert_eq!(warsaw_nir.pmi.n, 3);
        assert_eq!(warsaw_nir.pmi.median, 10.0);
        assert_eq!(warsaw_nir.subjects, 2);
    }

    #[test]
    fn summarize_single_record_degenerates() {
        let manifest = manifest_of(vec![record(
            "a1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 42.0,
        )]);
        let summary = summarize(&manifest);
        let g = &summary.groups[0];
        assert_eq!(g.pmi.min, 42.0);
        assert_eq!(g.pmi.median, 42.0);
        assert_eq!(g.pmi.max, 42.0);
    }

    #[test]
    fn summarize_quartiles_match_order_statistics_oracle() {
        // Sorted PMIs 1,2,4,7,11,16,22: positions p*(n-1) give
        // q1 = 2 + 0.5*(4-2) = 3, median = 7, q3 = 11 + 0.5*(16-11) = 13.5.
        let pmis = [22.0, 1.0, 7.0, 2.0, 16.0, 4.0, 11.0];
        let records = pmis
            .iter()
            .enumerate()
            .map(|(i, &p)| record(&format!("a{i}"), "warsaw", "s01", Eye::Left, "1", Band::Nir, p))
            .collect();
        let summary = summarize(&manifest_of(records));
        let g = &summary.groups[0];
        assert_eq!(g.pmi.q1, 3.0);
        assert_eq!(g.pmi.median, 7.0);
        assert_eq!(g.pmi.q3, 13.5);
    }

    #[test]
    fn pairing_same_session_equal_pmi() {
        let manifest = manifest_of(vec![
            record("n1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 12.0),
            record("r1", "warsaw", "s01", Eye::Left, "1", Band::Rgb, 12.0),
        ]);
        let outcome = pair_multispectral(&manifest, 1.0);
        assert_eq!(outcome.pairs.len(), 1);
        assert!(outcome.unpaired.is_empty());
        assert_eq!(outcome.pairs[0].pmi_hours, 12.0);
        assert_eq!(outcome.pairs[0].nir.sample_id, "n1");
    }

    #[test]
    fn nir_only_record_is_reported_unpaired() {
        let manifest = manifest_of(vec![record(
            "n1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 12.0,
        )]);
        let outcome = pair_multispectral(&manifest, 1.0);
        assert!(outcome.pairs.is_empty());
        assert_eq!(outcome.unpaired, vec!["n1".to_string()]);
    }

    #[test]
    fn pair_pmi_comes_from_nir_member() {
        let manifest = manifest_of(vec![
            record("n1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 12.0),
            record("r1", "warsaw", "s01", Eye::Left, "1", Band::Rgb, 12.7),
        ]);
        let outcome = pair_multispectral(&manifest, 1.0);
        assert_eq!(outcome.pairs[0].pmi_hours, 12.0);
    }

    #[test]
    fn mismatched_session_does_not_pair() {
        let manifest = manifest_of(vec![
            record("n1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 12.0),
            record("r1", "warsaw", "s01", Eye::Left, "2", Band::Rgb, 12.0),
        ]);
        let outcome = pair_multispectral(&manifest, 1.0);
        assert!(outcome.pairs.is_empty());
        assert_eq!(outcome.unpaired.len(), 2);
    }

    /// Total PMI gap of the greedy 2x2 matching equals the minimum over all
    /// exhaustive matchings.
    #[test]
    fn greedy_two_by_two_matches_brute_force() {
        let manifest = manifest_of(vec![
            record("n1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 10.0),
            record("n2", "warsaw", "s01", Eye::Left, "1", Band::Nir, 12.0),
            record("r1", "warsaw", "s01", Eye::Left, "1", Band::Rgb, 11.0),
            record("r2", "warsaw", "s01", Eye::Left, "1", Band::Rgb, 12.0),
        ]);
        let outcome = pair_multispectral(&manifest, 5.0);
        assert_eq!(outcome.pairs.len(), 2);
        let greedy_total: f64 = outcome
            .pairs
            .iter()
            .map(|p| (p.nir.pmi_hours - p.rgb.pmi_hours).abs())
            .sum();

        // Both complete matchings of {n1,n2} x {r1,r2}.
        let nir = [10.0f64, 12.0];
        let rgb = [11.0f64, 12.0];
        let matching_a = (nir[0] - rgb[0]).abs() + (nir[1] - rgb[1]).abs();
        let matching_b = (nir[0] - rgb[1]).abs() + (nir[1] - rgb[0]).abs();
        let best = matching_a.min(matching_b);
        assert_eq!(greedy_total, best);
    }

    #[test]
    fn fingerprint_ignores_record_order() {
        let a = manifest_of(vec![
            record("a1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 5.0),
            record("a2", "warsaw", "s02", Eye::Left, "1", Band::Nir, 6.0),
        ]);
        let b = manifest_of(vec![
            record("a2", "warsaw", "s02", Eye::Left, "1", Band::Nir, 6.0),
            record("a1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 5.0),
        ]);
        assert_eq!(a.fingerprint(), b.fingerprint());

        let c = manifest_of(vec![
            record("a1", "warsaw", "s01", Eye::Left, "1", Band::Nir, 5.5),
            record("a2", "warsaw", "s02", Eye::Left, "1", Band::Nir, 6.0),
        ]);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    fn arb_records() -> impl Strategy<Value = Vec<SampleRecord>> {
        let one = (
            0usize..3,
            0usize..6,
            any::<bool>(),
            0usize..3,
            any::<bool>(),
            0.0f64..1674.0,
            proptest::option::of((1.0f64..640.0, 1.0f64..480.0, 1.0f64..200.0)),
            any::<bool>(),
        );
        proptest::collection::vec(one, 1..24).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(
                    |(i, (ds, subj, eye, sess, band, pmi, circle, synth))| SampleRecord {
                        sample_id: format!("s{i:03}"),
                        dataset_id: ["warsaw", "nij", "lab"][ds].to_string(),
                        subject_id: format!("subj{subj}"),
                        eye: if eye { Eye::Left } else { Eye::Right },
                        session_id: format!("{sess}"),
                        band: if band { Band::Nir } else { Band::Rgb },
                        pmi_hours: pmi,
                        image_path: format!("img/s{i:03}.png"),
                        iris_circle: circle.map(|(cx, cy, r)| IrisCircle { cx, cy, r }),
                        is_synthetic: synth,
                        extra: BTreeMap::new(),
                    },
                )
                .collect()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_preserves_records(records in arb_records()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            let manifest = Manifest { records, source_path: path.clone() };
            manifest.save_csv(&path).unwrap();
            let reloaded = load_manifest(&path).unwrap();
            prop_assert_eq!(manifest.records, reloaded.records);
        }

        #[test]
        fn pair_count_bounded_by_smaller_band(records in arb_records()) {
            let manifest = manifest_of(records);
            let outcome = pair_multispectral(&manifest, 1.0);

            let mut per_group: BTreeMap<(String, String, Eye, String), (usize, usize, usize)> =
                BTreeMap::new();
            for r in &manifest.records {
                let key = (
                    r.dataset_id.clone(),
                    r.subject_id.clone(),
                    r.eye,
                    r.session_id.clone(),
                );
                let cell = per_group.entry(key).or_default();
                match r.band {
                    Band::Nir => cell.0 += 1,
                    Band::Rgb => cell.1 += 1,
                }
            }
            for p in &outcome.pairs {
                let key = (
                    p.nir.dataset_id.clone(),
                    p.nir.subject_id.clone(),
                    p.nir.eye,
                    p.nir.session_id.clone(),
                );
                per_group.get_mut(&key).unwrap().2 += 1;
            }
            for (_, (nir, rgb, pairs)) in per_group {
                prop_assert!(pairs <= nir.min(rgb));
            }

            // Every record lands in exactly one bucket.
            prop_assert_eq!(
                outcome.pairs.len() * 2 + outcome.unpaired.len(),
                manifest.records.len()
            );
        }
    }
}
