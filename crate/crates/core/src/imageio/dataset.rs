use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{load_pgm, normalize, save_pgm, GrayImage};
use crate::error::{Error, Result};

/// Class label. Malignant is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Benign, Label::Malignant];

    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malignant => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malignant),
            _ => Err(Error::invalid(format!("class index {i} is not 0 or 1"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" | "0" => Ok(Label::Benign),
            "malignant" | "1" => Ok(Label::Malignant),
            other => Err(Error::invalid(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub image: GrayImage,
    pub label: Label,
    /// Identifier of the original image this item derives from.
    pub source_id: String,
    /// False for augmented variants.
    pub original: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<DatasetItem>,
}

impl LabeledDataset {
    pub fn new(items: Vec<DatasetItem>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(benign, malignant)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let m = self.items.iter().filter(|i| i.label == Label::Malignant).count();
        (self.items.len() - m, m)
    }

    pub fn originals(&self) -> impl Iterator<Item = &DatasetItem> {
        self.items.iter().filter(|i| i.original)
    }

    /// Distinct `(source_id, label)` pairs of the original items, in first-seen order.
    pub fn sources(&self) -> Vec<(String, Label)> {
        let mut seen = std::collections::HashSet::new();
        self.originals()
            .filter(|i| seen.insert(i.source_id.clone()))
            .map(|i| (i.source_id.clone(), i.label))
            .collect()
    }

    /// Shape shared by every image, or an error if shapes differ.
    pub fn image_shape(&self) -> Result<(usize, usize)> {
        let first = self
            .items
            .first()
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        let shape = (first.image.height(), first.image.width());
        if let Some(bad) = self
            .items
            .iter()
            .find(|i| (i.image.height(), i.image.width()) != shape)
        {
            return Err(Error::invalid(format!(
                "item from {} has shape {}x{}, expected {}x{}",
                bad.source_id,
                bad.image.height(),
                bad.image.width(),
                shape.0,
                shape.1
            )));
        }
        Ok(shape)
    }
}

/// One manifest line: `path,label,source_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: Label,
    pub source_id: String,
}

impl ManifestRow {
    /// Originals are stored as `<source_id>.pgm`.
    pub fn is_original(&self) -> bool {
        Path::new(&self.path)
            .file_stem()
            .is_some_and(|s| s.to_string_lossy() == self.source_id)
    }
}

fn file_name(item: &DatasetItem, index: usize) -> String {
    if item.original {
        format!("{}.pgm", item.source_id)
    } else {
        format!("aug{index:05}_{}.pgm", item.source_id)
    }
}

/// Writes each item as a P5 file into `dir` and a `manifest.csv` listing
/// them with paths relative to `dir`. Returns the manifest path.
pub fn save_dataset(dataset: &LabeledDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    for (i, item) in dataset.items.iter().enumerate() {
        let name = file_name(item, i);
        save_pgm(&dir.join(&name), &item.image)?;
        w.serialize(ManifestRow {
            path: name,
            label: item.label,
            source_id: item.source_id.clone(),
        })?;
    }
    w.flush()?;
    Ok(manifest)
}

/// Reads a manifest and its images (normalized). Relative paths resolve
/// against the manifest's directory.
pub fn load_manifest(manifest: &Path) -> Result<(Vec<ManifestRow>, LabeledDataset)> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| Error::from(e).at_path(manifest))?;
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row.map_err(|e| Error::from(e).at_path(manifest))?;
        let image = normalize(&load_pgm(&base.join(&row.path))?)?;
        items.push(DatasetItem {
            image,
            label: row.label,
            source_id: row.source_id.clone(),
            original: row.is_original(),
        });
        rows.push(row);
    }
    Ok((rows, LabeledDataset::new(items)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing() {
        assert_eq!("Malignant".parse::<Label>().unwrap(), Label::Malignant);
        assert_eq!("0".parse::<Label>().unwrap(), Label::Benign);
        assert!("cyst".parse::<Label>().is_err());
        assert!(Label::from_index(2).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_normalized(2, 2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let ds = LabeledDataset::new(vec![
            DatasetItem { image: img.clone(), label: Label::Benign, source_id: "b0".into(), original: true },
            DatasetItem { image: img.flip_horizontal(), label: Label::Benign, source_id: "b0".into(), original: false },
        ]);
        let manifest = save_dataset(&ds, dir.path()).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        assert_eq!(text, "path,label,source_id\nb0.pgm,benign,b0\naug00001_b0.pgm,benign,b0\n");
        let (rows, back) = load_manifest(&manifest).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(back.items[0].original && !back.items[1].original);
        assert_eq!(back.class_counts(), (2, 0));
    }
}
