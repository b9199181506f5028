//! 3D radiomic feature extraction over Hounsfield-unit volumes and binary
//! lesion masks: first-order statistics, shape descriptors and the GLCM,
//! GLRLM and GLSZM texture families, plus multi-lesion aggregation and
//! concordance-based reproducibility filtering.
//!
//! Per-lesion extraction is pure; callers may extract lesions and patients
//! concurrently.

pub mod io;
pub mod texture;

pub use texture::{glcm_features, glcm_matrix, glrlm_features, glrlm_matrix, glszm_features};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::FeatureMatrix;

/// 3D scalar grid in row-major order (x fastest, then y, then z).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: (usize, usize, usize),
    /// voxel spacing in mm
    pub spacing: (f64, f64, f64),
    pub voxels: Vec<f64>,
}

impl Volume {
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), voxels: Vec<f64>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidParameter("volume dims must be positive".into()));
        }
        if spacing.0 <= 0.0 || spacing.1 <= 0.0 || spacing.2 <= 0.0 {
            return Err(Error::InvalidParameter("voxel spacing must be positive".into()));
        }
        if voxels.len() != nx * ny * nz {
            return Err(Error::LengthMismatch(voxels.len(), nx * ny * nz));
        }
        Ok(Volume { dims, spacing, voxels })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }
}

/// Binary lesion mask paired with a volume of identical dims.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionMask {
    pub dims: (usize, usize, usize),
    pub voxels: Vec<bool>,
    pub lesion_id: String,
}

impl LesionMask {
    pub fn new(dims: (usize, usize, usize), voxels: Vec<bool>, lesion_id: impl Into<String>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if voxels.len() != nx * ny * nz {
            return Err(Error::LengthMismatch(voxels.len(), nx * ny * nz));
        }
        if !voxels.iter().any(|&v| v) {
            return Err(Error::EmptyMask);
        }
        Ok(LesionMask {
            dims,
            voxels,
            lesion_id: lesion_id.into(),
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[self.index(x, y, z)]
    }

    pub fn foreground_count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }

    fn check_dims(&self, volume: &Volume) -> Result<()> {
        if self.dims != volume.dims {
            return Err(Error::DimMismatch(volume.dims, self.dims));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureCategory {
    FirstOrder,
    Shape,
    Glcm,
    Glrlm,
    Glszm,
}

impl std::fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureCategory::FirstOrder => "firstorder",
            FeatureCategory::Shape => "shape",
            FeatureCategory::Glcm => "glcm",
            FeatureCategory::Glrlm => "glrlm",
            FeatureCategory::Glszm => "glszm",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub name: String,
    pub category: FeatureCategory,
    pub value: f64,
}

/// Named feature values for one lesion. Names are stable across runs and
/// all values are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiomicFeatureSet {
    pub lesion_id: String,
    pub features: Vec<FeatureValue>,
}

impl RadiomicFeatureSet {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.value)
    }

    pub fn push(&mut self, name: impl Into<String>, category: FeatureCategory, value: f64) {
        debug_assert!(value.is_finite());
        self.features.push(FeatureValue {
            name: name.into(),
            category,
            value,
        });
    }

    /// Concatenate feature lists from the same lesion.
    pub fn merge(mut self, other: RadiomicFeatureSet) -> RadiomicFeatureSet {
        self.features.extend(other.features);
        self
    }
}

/// Gray-level discretization mode: fixed bin width in HU, or a fixed
/// number of equal-width bins over the masked intensity range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscretizationSpec {
    FixedBinWidth { bin_width: f64 },
    FixedBinCount { n_bins: u32 },
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        // 25 HU keeps bins physically meaningful on CT
        DiscretizationSpec::FixedBinWidth { bin_width: 25.0 }
    }
}

/// Discretized masked region: level 0 marks voxels outside the mask,
/// in-mask voxels carry levels 1..=ng.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayLevelGrid {
    pub dims: (usize, usize, usize),
    pub levels: Vec<u32>,
    pub ng: u32,
    pub lesion_id: String,
    /// constant region discretized with a fixed bin count collapses to a
    /// single level
    pub constant_region: bool,
}

impl GrayLevelGrid {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    pub fn level(&self, x: usize, y: usize, z: usize) -> u32 {
        self.levels[self.index(x, y, z)]
    }

    pub fn masked_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

/// Map masked voxel intensities to gray levels 1..=Ng.
pub fn discretize(volume: &Volume, mask: &LesionMask, spec: &DiscretizationSpec) -> Result<GrayLevelGrid> {
    mask.check_dims(volume)?;
    match spec {
        DiscretizationSpec::FixedBinWidth { bin_width } if *bin_width <= 0.0 => {
            return Err(Error::InvalidParameter("bin width must be positive".into()))
        }
        DiscretizationSpec::FixedBinCount { n_bins } if *n_bins == 0 => {
            return Err(Error::InvalidParameter("bin count must be positive".into()))
        }
        _ => {}
    }
    let masked: Vec<f64> = mask
        .voxels
        .iter()
        .zip(&volume.voxels)
        .filter_map(|(&m, &v)| m.then_some(v))
        .collect();
    if masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    let min = masked.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = masked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut constant_region = false;

    let level_of: Box<dyn Fn(f64) -> u32> = match spec {
        DiscretizationSpec::FixedBinWidth { bin_width } => {
            let w = *bin_width;
            Box::new(move |x: f64| ((x - min) / w).floor() as u32 + 1)
        }
        DiscretizationSpec::FixedBinCount { n_bins } => {
            let n = *n_bins;
            if max == min {
                constant_region = true;
                Box::new(move |_x: f64| 1)
            } else {
                let range = max - min;
                Box::new(move |x: f64| {
                    let raw = ((x - min) / range * n as f64).floor() as u32;
                    raw.min(n - 1) + 1
                })
            }
        }
    };

    let mut levels = vec![0u32; volume.voxels.len()];
    let mut ng = 0;
    for (i, (&m, &v)) in mask.voxels.iter().zip(&volume.voxels).enumerate() {
        if m {
            let l = level_of(v);
            ng = ng.max(l);
            levels[i] = l;
        }
    }
    Ok(GrayLevelGrid {
        dims: volume.dims,
        levels,
        ng,
        lesion_id: mask.lesion_id.clone(),
        constant_region,
    })
}

/// First-order statistics over the masked voxels. Entropy is computed over
/// the discretized histogram in log base 2; variance is the population
/// variance; skewness and excess kurtosis of a constant region are 0.
pub fn firstorder_features(
    volume: &Volume,
    mask: &LesionMask,
    spec: &DiscretizationSpec,
) -> Result<RadiomicFeatureSet> {
    mask.check_dims(volume)?;
    let xs: Vec<f64> = mask
        .voxels
        .iter()
        .zip(&volume.voxels)
        .filter_map(|(&m, &v)| m.then_some(v))
        .collect();
    if xs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = xs.len() as f64;
    let mean = math::mean(&xs);
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let energy = xs.iter().map(|x| x * x).sum::<f64>();
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let grid = discretize(volume, mask, spec)?;
    let mut hist = vec![0usize; grid.ng as usize];
    for &l in &grid.levels {
        if l > 0 {
            hist[(l - 1) as usize] += 1;
        }
    }
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>();

    let mut set = RadiomicFeatureSet {
        lesion_id: mask.lesion_id.clone(),
        features: Vec::new(),
    };
    let c = FeatureCategory::FirstOrder;
    set.push("firstorder_mean", c, mean);
    set.push("firstorder_variance", c, m2);
    set.push("firstorder_skewness", c, skewness);
    set.push("firstorder_kurtosis", c, kurtosis);
    set.push("firstorder_energy", c, energy);
    set.push("firstorder_entropy", c, entropy);
    set.push("firstorder_minimum", c, min);
    set.push("firstorder_maximum", c, max);
    set.push("firstorder_range", c, max - min);
    Ok(set)
}

const SIX_NEIGHBORS: [(i64, i64, i64); 6] = [
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
];

/// Shape descriptors in physical units. The maximum 3D diameter is the
/// largest center-to-center distance between surface voxels (foreground
/// voxels with at least one six-connected background or out-of-bounds
/// neighbor); the surface area sums exposed voxel faces.
pub fn shape_features(mask: &LesionMask, spacing: (f64, f64, f64)) -> Result<RadiomicFeatureSet> {
    let (nx, ny, nz) = mask.dims;
    let (sx, sy, sz) = spacing;
    if sx <= 0.0 || sy <= 0.0 || sz <= 0.0 {
        return Err(Error::InvalidParameter("voxel spacing must be positive".into()));
    }
    let count = mask.foreground_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let voxel_volume = count as f64 * sx * sy * sz;

    let inside = |x: i64, y: i64, z: i64| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && mask.get(x as usize, y as usize, z as usize)
    };

    let mut surface_area = 0.0;
    let mut surface_voxels: Vec<(f64, f64, f64)> = Vec::new();
    let face_area = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let mut exposed = false;
                for (k, (dx, dy, dz)) in SIX_NEIGHBORS.iter().enumerate() {
                    if !inside(x as i64 + dx, y as i64 + dy, z as i64 + dz) {
                        surface_area += face_area[k];
                        exposed = true;
                    }
                }
                if exposed {
                    surface_voxels.push((x as f64 * sx, y as f64 * sy, z as f64 * sz));
                }
            }
        }
    }

    let mut max_diameter: f64 = 0.0;
    for i in 0..surface_voxels.len() {
        for j in (i + 1)..surface_voxels.len() {
            let (ax, ay, az) = surface_voxels[i];
            let (bx, by, bz) = surface_voxels[j];
            let d2 = (ax - bx).powi(2) + (ay - by).powi(2) + (az - bz).powi(2);
            max_diameter = max_diameter.max(d2);
        }
    }
    let max_diameter = max_diameter.sqrt();
    let sphericity = (std::f64::consts::PI.powf(1.0 / 3.0)
        * (6.0 * voxel_volume).powf(2.0 / 3.0))
        / surface_area;

    let mut set = RadiomicFeatureSet {
        lesion_id: mask.lesion_id.clone(),
        features: Vec::new(),
    };
    let c = FeatureCategory::Shape;
    set.push("shape_voxel_volume_mm3", c, voxel_volume);
    set.push("shape_surface_area_mm2", c, surface_area);
    set.push("shape_max_3d_diameter_mm", c, max_diameter);
    set.push("shape_sphericity", c, sphericity);
    Ok(set)
}

/// Largest-lesion and volume-weighted aggregates over per-lesion feature
/// sets. Volume ties resolve to the lexicographically smallest lesion id.
pub fn aggregate_lesions(
    per_lesion: &[RadiomicFeatureSet],
    volumes_mm3: &[f64],
) -> Result<(RadiomicFeatureSet, RadiomicFeatureSet)> {
    if per_lesion.is_empty() {
        return Err(Error::EmptySample);
    }
    if per_lesion.len() != volumes_mm3.len() {
        return Err(Error::LengthMismatch(per_lesion.len(), volumes_mm3.len()));
    }
    let largest_idx = (0..per_lesion.len())
        .max_by(|&i, &j| {
            volumes_mm3[i]
                .partial_cmp(&volumes_mm3[j])
                .unwrap()
                .then_with(|| per_lesion[j].lesion_id.cmp(&per_lesion[i].lesion_id))
        })
        .unwrap();
    let largest = per_lesion[largest_idx].clone();

    let total: f64 = volumes_mm3.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("lesion volumes must be positive".into()));
    }
    let reference = &per_lesion[0];
    let mut weighted = RadiomicFeatureSet {
        lesion_id: "volume_weighted".into(),
        features: Vec::new(),
    };
    for feat in &reference.features {
        let mut acc = 0.0;
        for (set, &v) in per_lesion.iter().zip(volumes_mm3) {
            let x = set.get(&feat.name).ok_or_else(|| {
                Error::Invalid(format!(
                    "lesion `{}` lacks feature `{}`",
                    set.lesion_id, feat.name
                ))
            })?;
            acc += v * x;
        }
        weighted.push(feat.name.clone(), feat.category, acc / total);
    }
    Ok((largest, weighted))
}

/// Concordance correlation coefficient with population moments:
/// `2 cov(a,b) / (var a + var b + (mean a - mean b)^2)`.
/// Two identical constant columns are perfectly concordant.
pub fn concordance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let ma = math::mean(a);
    let mb = math::mean(b);
    let n = a.len() as f64;
    let var_a = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let var_b = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    let denom = var_a + var_b + (ma - mb).powi(2);
    if denom == 0.0 {
        // both constant with equal means: identical columns
        return Ok(1.0);
    }
    Ok(2.0 * cov / denom)
}

/// Per-feature reproducibility report from the CCC filter.
#[derive(Debug, Clone, Serialize)]
pub struct CccReport {
    pub threshold: f64,
    /// (feature, ccc, retained)
    pub features: Vec<(String, f64, bool)>,
}

impl CccReport {
    pub fn retained(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|(_, _, keep)| *keep)
            .map(|(name, _, _)| name.clone())
            .collect()
    }
}

/// Keep features whose CCC between the two aligned extraction arms reaches
/// the threshold. Columns are matched by name.
pub fn ccc_filter(
    features_a: &FeatureMatrix,
    features_b: &FeatureMatrix,
    threshold: f64,
) -> Result<CccReport> {
    if features_a.n_rows != features_b.n_rows {
        return Err(Error::LengthMismatch(features_a.n_rows, features_b.n_rows));
    }
    let mut features = Vec::new();
    for (ca, col_a) in features_a.columns.iter().enumerate() {
        let cb = features_b
            .column_index(&col_a.name)
            .ok_or_else(|| Error::MissingColumn(col_a.name.clone()))?;
        let ccc = concordance_correlation(&features_a.column(ca), &features_b.column(cb))?;
        features.push((col_a.name.clone(), ccc, ccc >= threshold));
    }
    Ok(CccReport {
        threshold,
        features,
    })
}

/// Six-connected morphological erosion, the default perturbation arm for
/// reproducibility checks. Returns the original mask unchanged (flagged
/// `false`) when erosion would empty it.
pub fn erode_mask(mask: &LesionMask) -> (LesionMask, bool) {
    let (nx, ny, nz) = mask.dims;
    let inside = |x: i64, y: i64, z: i64| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && mask.get(x as usize, y as usize, z as usize)
    };
    let mut voxels = vec![false; mask.voxels.len()];
    let mut any = false;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let keep = SIX_NEIGHBORS
                    .iter()
                    .all(|(dx, dy, dz)| inside(x as i64 + dx, y as i64 + dy, z as i64 + dz));
                if keep {
                    voxels[mask.index(x, y, z)] = true;
                    any = true;
                }
            }
        }
    }
    if any {
        (
            LesionMask {
                dims: mask.dims,
                voxels,
                lesion_id: mask.lesion_id.clone(),
            },
            true,
        )
    } else {
        (mask.clone(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn volume_from(dims: (usize, usize, usize), voxels: Vec<f64>) -> Volume {
        Volume::new(dims, (1.0, 1.0, 1.0), voxels).unwrap()
    }

    pub(crate) fn full_mask(dims: (usize, usize, usize)) -> LesionMask {
        LesionMask::new(dims, vec![true; dims.0 * dims.1 * dims.2], "L1").unwrap()
    }

    #[test]
    fn fixed_bin_width_levels() {
        let v = volume_from((4, 1, 1), vec![0.0, 10.0, 20.0, 30.0]);
        let g = discretize(&v, &full_mask((4, 1, 1)), &DiscretizationSpec::FixedBinWidth { bin_width: 10.0 }).unwrap();
        assert_eq!(g.levels, vec![1, 2, 3, 4]);
        assert_eq!(g.ng, 4);
    }

    #[test]
    fn constant_region_single_level() {
        let v = volume_from((3, 1, 1), vec![7.0; 3]);
        let g = discretize(&v, &full_mask((3, 1, 1)), &DiscretizationSpec::FixedBinWidth { bin_width: 25.0 }).unwrap();
        assert!(g.levels.iter().all(|&l| l == 1));
        assert!(!g.constant_region);
        let g = discretize(&v, &full_mask((3, 1, 1)), &DiscretizationSpec::FixedBinCount { n_bins: 4 }).unwrap();
        assert!(g.levels.iter().all(|&l| l == 1));
        assert!(g.constant_region);
    }

    #[test]
    fn fixed_bin_count_quartiles() {
        let v = volume_from((100, 1, 1), (0..100).map(|i| i as f64).collect());
        let g = discretize(&v, &full_mask((100, 1, 1)), &DiscretizationSpec::FixedBinCount { n_bins: 4 }).unwrap();
        assert_eq!(g.ng, 4);
        assert_eq!(g.levels[0], 1);
        assert_eq!(g.levels[24], 1);
        assert_eq!(g.levels[25], 2);
        assert_eq!(g.levels[99], 4);
    }

    #[test]
    fn firstorder_hand_values() {
        let dims = (4, 1, 1);
        let v = volume_from(dims, vec![1.0, 2.0, 3.0, 4.0]);
        let f = firstorder_features(&v, &full_mask(dims), &DiscretizationSpec::default()).unwrap();
        assert_relative_eq!(f.get("firstorder_mean").unwrap(), 2.5, epsilon = 1e-12);
        assert_relative_eq!(f.get("firstorder_variance").unwrap(), 1.25, epsilon = 1e-12);
        assert_relative_eq!(f.get("firstorder_range").unwrap(), 3.0, epsilon = 1e-12);

        let dims = (3, 1, 1);
        let c = volume_from(dims, vec![5.0; 3]);
        let f = firstorder_features(&c, &full_mask(dims), &DiscretizationSpec::default()).unwrap();
        assert_eq!(f.get("firstorder_mean").unwrap(), 5.0);
        assert_eq!(f.get("firstorder_variance").unwrap(), 0.0);
        assert_eq!(f.get("firstorder_energy").unwrap(), 75.0);
        assert_eq!(f.get("firstorder_entropy").unwrap(), 0.0);

        let sym = volume_from(dims, vec![-2.0, 0.0, 2.0]);
        let f = firstorder_features(&sym, &full_mask(dims), &DiscretizationSpec::default()).unwrap();
        assert_relative_eq!(f.get("firstorder_skewness").unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_hand_geometry() {
        let single = full_mask((1, 1, 1));
        let f = shape_features(&single, (1.0, 1.0, 1.0)).unwrap();
        assert_eq!(f.get("shape_voxel_volume_mm3").unwrap(), 1.0);
        assert_eq!(f.get("shape_max_3d_diameter_mm").unwrap(), 0.0);
        assert_eq!(f.get("shape_surface_area_mm2").unwrap(), 6.0);

        let pair = full_mask((1, 1, 2));
        let f = shape_features(&pair, (1.0, 1.0, 1.0)).unwrap();
        assert_eq!(f.get("shape_voxel_volume_mm3").unwrap(), 2.0);
        assert_eq!(f.get("shape_max_3d_diameter_mm").unwrap(), 1.0);
        assert_eq!(f.get("shape_surface_area_mm2").unwrap(), 10.0);

        let cube = full_mask((2, 2, 2));
        let f = shape_features(&cube, (2.0, 2.0, 2.0)).unwrap();
        assert_eq!(f.get("shape_voxel_volume_mm3").unwrap(), 64.0);
    }

    #[test]
    fn aggregate_weighted_and_largest() {
        let mk = |id: &str, value: f64| RadiomicFeatureSet {
            lesion_id: id.into(),
            features: vec![FeatureValue {
                name: "f".into(),
                category: FeatureCategory::FirstOrder,
                value,
            }],
        };
        let (largest, weighted) =
            aggregate_lesions(&[mk("a", 0.0), mk("b", 4.0)], &[1.0, 3.0]).unwrap();
        assert_eq!(largest.lesion_id, "b");
        assert_relative_eq!(weighted.get("f").unwrap(), 3.0, epsilon = 1e-12);

        let (_, weighted) = aggregate_lesions(&[mk("a", 1.0), mk("b", 3.0)], &[2.0, 2.0]).unwrap();
        assert_relative_eq!(weighted.get("f").unwrap(), 2.0, epsilon = 1e-12);

        let single = aggregate_lesions(&[mk("only", 7.0)], &[5.0]).unwrap();
        assert_eq!(single.0.get("f"), Some(7.0));
        assert_eq!(single.1.get("f"), Some(7.0));
    }

    #[test]
    fn ccc_formula_cases() {
        let a = [1.0, 2.0, 3.0];
        assert_relative_eq!(concordance_correlation(&a, &a).unwrap(), 1.0, epsilon = 1e-12);

        // large constant shift kills concordance
        let shifted: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
        assert!(concordance_correlation(&a, &shifted).unwrap() < 0.85);

        let near = [1.0, 2.0, 3.0001];
        assert!(concordance_correlation(&a, &near).unwrap() > 0.9999);

        // both constant, equal means
        assert_eq!(concordance_correlation(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn erosion_shrinks_or_falls_back() {
        let cube = full_mask((3, 3, 3));
        let (eroded, changed) = erode_mask(&cube);
        assert!(changed);
        assert_eq!(eroded.foreground_count(), 1);
        assert!(eroded.get(1, 1, 1));

        let thin = full_mask((3, 1, 1));
        let (same, changed) = erode_mask(&thin);
        assert!(!changed);
        assert_eq!(same, thin);
    }
}
