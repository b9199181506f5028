//! Volume/mask container: raw little-endian f32 voxel file plus a JSON
//! sidecar `{dims, spacing, hu_offset}`, and the long-format feature CSV.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomics::{FeatureCategory, LesionMask, Volume};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// added to every raw voxel value on load
    pub hu_offset: f64,
}

fn raw_path_for(json_path: &Path) -> PathBuf {
    json_path.with_extension("raw")
}

/// Write `volume` as `<stem>.raw` + `<stem>.json`.
pub fn write_volume(volume: &Volume, json_path: impl AsRef<Path>) -> Result<()> {
    let json_path = json_path.as_ref();
    let sidecar = VolumeSidecar {
        dims: [volume.dims.0, volume.dims.1, volume.dims.2],
        spacing: [volume.spacing.0, volume.spacing.1, volume.spacing.2],
        hu_offset: 0.0,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))?;
    let mut bytes = Vec::with_capacity(volume.voxels.len() * 4);
    for &v in &volume.voxels {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let raw = raw_path_for(json_path);
    std::fs::write(&raw, bytes).map_err(|e| Error::io(raw, e))
}

/// Load a volume from its JSON sidecar; the voxel file sits next to it
/// with the `.raw` extension.
pub fn read_volume(json_path: impl AsRef<Path>) -> Result<Volume> {
    let json_path = json_path.as_ref();
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let sidecar: VolumeSidecar =
        serde_json::from_str(&text).map_err(|e| Error::json(json_path, e))?;
    let raw = raw_path_for(json_path);
    let bytes = std::fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let expected = sidecar.dims.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Invalid(format!(
            "`{}` holds {} bytes, expected {expected} for dims {:?}",
            raw.display(),
            bytes.len(),
            sidecar.dims
        )));
    }
    let voxels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 + sidecar.hu_offset)
        .collect();
    Volume::new(
        (sidecar.dims[0], sidecar.dims[1], sidecar.dims[2]),
        (sidecar.spacing[0], sidecar.spacing[1], sidecar.spacing[2]),
        voxels,
    )
}

/// Load a mask from the same container; voxels must be exactly 0 or 1.
pub fn read_mask(json_path: impl AsRef<Path>, lesion_id: &str) -> Result<LesionMask> {
    let volume = read_volume(&json_path)?;
    let mut voxels = Vec::with_capacity(volume.voxels.len());
    for &v in &volume.voxels {
        if v == 0.0 {
            voxels.push(false);
        } else if v == 1.0 {
            voxels.push(true);
        } else {
            return Err(Error::Invalid(format!(
                "mask `{}` holds value {v}, expected 0 or 1",
                json_path.as_ref().display()
            )));
        }
    }
    LesionMask::new(volume.dims, voxels, lesion_id)
}

/// Write a mask using the shared container (voxels 0.0/1.0).
pub fn write_mask(mask: &LesionMask, spacing: (f64, f64, f64), json_path: impl AsRef<Path>) -> Result<()> {
    let volume = Volume::new(
        mask.dims,
        spacing,
        mask.voxels.iter().map(|&b| b as u8 as f64).collect(),
    )?;
    write_volume(&volume, json_path)
}

/// One row of the long-format feature CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRow {
    pub patient_id: String,
    pub lesion_id: String,
    pub feature: String,
    pub value: f64,
    pub category: FeatureCategory,
}

/// Emit `(patient_id, lesion_id, feature, value, category)` rows.
pub fn write_features_csv(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["patient_id", "lesion_id", "feature", "value", "category"])
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        writer
            .write_record([
                row.patient_id.as_str(),
                row.lesion_id.as_str(),
                row.feature.as_str(),
                &format!("{}", row.value),
                &row.category.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn volume_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.json");
        let volume = Volume::new(
            (2, 2, 1),
            (0.7, 0.7, 1.5),
            vec![10.5, -30.25, 42.0, 100.0],
        )
        .unwrap();
        write_volume(&volume, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(volume, back);
    }

    #[test]
    fn mask_rejects_non_binary() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mask.json");
        let volume = Volume::new((2, 1, 1), (1.0, 1.0, 1.0), vec![0.0, 0.5]).unwrap();
        write_volume(&volume, &path).unwrap();
        assert!(read_mask(&path, "L1").is_err());
    }
}
