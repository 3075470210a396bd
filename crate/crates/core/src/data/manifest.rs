use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image_io::read_image;
use super::preprocess::{prepare_map, preprocess};
use super::sample::AugmentedSample;
use crate::error::{bail, Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_HEADER: [&str; 6] = ["id", "image", "map", "label", "patient", "split"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => bail!(Input, "unknown split {s:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub image: String,
    pub map: Option<String>,
    pub label: usize,
    pub patient: Option<String>,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        Manifest { records }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_owned).collect();
        if header != MANIFEST_HEADER {
            bail!(Input, "{}: manifest header must be {:?}, found {header:?}", path.display(), MANIFEST_HEADER.join(","));
        }
        let records = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestRecord>, _>>()
            .map_err(|e| csv_error(path, e))?;
        let m = Manifest { records };
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(MANIFEST_HEADER).map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Unique ids, binary labels, and no patient spanning two splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut patients: HashMap<&str, Option<Split>> = HashMap::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                bail!(Input, "duplicate manifest id {:?}", r.id);
            }
            if r.label > 1 {
                bail!(Input, "record {:?}: label {} is not 0 or 1", r.id, r.label);
            }
            if let Some(p) = &r.patient {
                if let Some(prev) = patients.insert(p.as_str(), r.split) {
                    if prev != r.split {
                        bail!(Input, "patient {p:?} appears in more than one split");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    pub fn count(&self, split: Option<Split>, label: usize) -> usize {
        self.records.iter().filter(|r| r.split == split && r.label == label).count()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads and preprocesses the records of one split. Every failing record is
/// reported, not just the first. With `use_maps` false the map column is
/// ignored and zero maps are stacked instead.
pub fn load_samples<'a>(
    records: impl IntoIterator<Item = &'a ManifestRecord>,
    base: &Path,
    size: usize,
    use_maps: bool,
) -> Result<Vec<AugmentedSample>> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for r in records {
        match load_record(r, base, size, use_maps) {
            Ok(s) => samples.push(s),
            Err(e) => errors.push(format!("{}: {e}", r.id)),
        }
    }
    if !errors.is_empty() {
        bail!(Input, "{} record(s) failed to load:\n  {}", errors.len(), errors.join("\n  "));
    }
    Ok(samples)
}

pub fn load_record(r: &ManifestRecord, base: &Path, size: usize, use_maps: bool) -> Result<AugmentedSample> {
    let raw = read_image(&resolve(base, &r.image))?;
    if !matches!(raw.shape().c(), 1 | 3) {
        bail!(Input, "image has {} channels", raw.shape().c());
    }
    let image = preprocess(&raw, size)?;
    let map = if use_maps {
        let Some(path) = &r.map else {
            bail!(Input, "no attention map listed; run make-maps or select the zero_map policy");
        };
        prepare_map(&read_image(&resolve(base, path))?, size)?
    } else {
        Tensor::zeros([1, 1, size, size])
    };
    AugmentedSample::new(image, map, r.label, r.id.clone(), r.patient.clone())
}
