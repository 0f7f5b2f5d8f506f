use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_nifti, write_nifti, Dims3, SegVolume, Spacing, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    T1,
    T1ce,
    T2,
    Flair,
}

impl Modality {
    /// Canonical order; also the channel order of four-modality tensors.
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T1ce, Modality::T2, Modality::Flair];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// File-name suffix in the case directory layout.
    pub const fn suffix(self) -> &'static str {
        match self {
            Modality::T1 => "t1",
            Modality::T1ce => "t1ce",
            Modality::T2 => "t2",
            Modality::Flair => "flair",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Modality::T1 => "T1",
            Modality::T1ce => "T1ce",
            Modality::T2 => "T2",
            Modality::Flair => "Flair",
        };
        f.write_str(s)
    }
}

/// Four co-registered float modality volumes plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalCase {
    pub case_id: String,
    modalities: [Volume; 4],
    labels: Option<SegVolume>,
}

impl MultiModalCase {
    /// Assembles a case; modalities are indexed by [`Modality::index`] and
    /// converted to float32.
    pub fn new(
        case_id: impl Into<String>,
        modalities: [Volume; 4],
        labels: Option<SegVolume>,
    ) -> Result<Self> {
        let case_id = case_id.into();
        let dims = modalities[0].dims();
        for m in Modality::ALL {
            let d = modalities[m.index()].dims();
            if d != dims {
                return Err(Error::DimensionMismatch(format!(
                    "case {case_id}: {m} has dims {d}, T1 has {dims}"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "case {case_id}: labels have dims {}, modalities {dims}",
                    l.dims()
                )));
            }
        }
        let modalities = modalities.map(|v| v.to_f32());
        Ok(MultiModalCase {
            case_id,
            modalities,
            labels,
        })
    }

    pub fn dims(&self) -> Dims3 {
        self.modalities[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.modalities[0].spacing()
    }

    pub fn modality(&self, m: Modality) -> &Volume {
        &self.modalities[m.index()]
    }

    /// Float data of one modality.
    pub fn channel(&self, m: Modality) -> &[f32] {
        self.modalities[m.index()]
            .as_f32()
            .expect("case modalities are float32")
    }

    pub fn modalities(&self) -> &[Volume; 4] {
        &self.modalities
    }

    pub fn labels(&self) -> Option<&SegVolume> {
        self.labels.as_ref()
    }

    pub fn with_labels(mut self, labels: Option<SegVolume>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.dims() != self.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "labels {} vs case {}",
                    l.dims(),
                    self.dims()
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Writes the case as `<dir>/<id>/<id>_<suffix>.nii.gz`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let case_dir = dir.as_ref().join(&self.case_id);
        std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
        for m in Modality::ALL {
            let p = case_dir.join(format!("{}_{}.nii.gz", self.case_id, m.suffix()));
            write_nifti(self.modality(m), p)?;
        }
        if let Some(l) = &self.labels {
            let p = case_dir.join(format!("{}_seg.nii.gz", self.case_id));
            write_nifti(l.volume(), p)?;
        }
        Ok(case_dir)
    }
}

/// Locates `<stem>.nii.gz` or `<stem>.nii` inside `dir`.
pub fn find_nifti(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["nii.gz", "nii"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads `<dir>/<id>/<id>_{t1,t1ce,t2,flair}.nii[.gz]` plus an optional `_seg` file.
pub fn load_case(dir: impl AsRef<Path>, case_id: &str) -> Result<MultiModalCase> {
    let case_dir = dir.as_ref().join(case_id);
    let mut vols = Vec::with_capacity(4);
    for m in Modality::ALL {
        let path = find_nifti(&case_dir, &format!("{case_id}_{}", m.suffix())).ok_or_else(|| {
            Error::MissingModality {
                case_id: case_id.to_string(),
                modality: m.to_string(),
            }
        })?;
        vols.push(read_nifti(path)?);
    }
    let labels = find_nifti(&case_dir, &format!("{case_id}_seg"))
        .map(|p| read_nifti(p).and_then(SegVolume::try_from))
        .transpose()?;
    let modalities: [Volume; 4] = vols.try_into().expect("four modalities");
    MultiModalCase::new(case_id, modalities, labels)
}

/// Case ids under `dir`: subdirectories that contain a T1 file, sorted.
pub fn list_cases(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        if find_nifti(&entry.path(), &format!("{id}_t1")).is_some() {
            ids.push(id);
        }
    }
    ids.sort();
    Ok(ids)
}
