//! Gray-level texture matrices: co-occurrence (GLCM), run length (GLRLM)
//! and size zone (GLSZM).
//!
//! GLCM and GLRLM accumulate counts over the 13 unique 3D direction
//! offsets; GLSZM zones are 26-connected components of equal level. Only
//! in-mask voxels (level > 0) participate.

use crate::error::{Error, Result};
use crate::radiomics::{FeatureCategory, GrayLevelGrid, RadiomicFeatureSet};

/// The 13 unique direction offsets of a 3D neighborhood (one per
/// opposite-direction pair).
pub const DIRECTIONS_13: [(i32, i32, i32); 13] = [
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
];

fn level_at(grid: &GrayLevelGrid, x: i64, y: i64, z: i64) -> u32 {
    let (nx, ny, nz) = grid.dims;
    if x < 0 || y < 0 || z < 0 || x as usize >= nx || y as usize >= ny || z as usize >= nz {
        0
    } else {
        grid.level(x as usize, y as usize, z as usize)
    }
}

/// Normalized co-occurrence matrix accumulated over the given directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    pub ng: usize,
    /// row-major ng x ng probabilities summing to 1
    pub probs: Vec<f64>,
    pub total_pairs: u64,
}

impl GlcmMatrix {
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.ng + j]
    }
}

/// Accumulate co-occurrence counts at the given voxel distance over
/// `directions`, between pairs that both lie inside the mask.
pub fn glcm_matrix(
    grid: &GrayLevelGrid,
    distance: usize,
    symmetric: bool,
    directions: &[(i32, i32, i32)],
) -> Result<GlcmMatrix> {
    if distance == 0 {
        return Err(Error::InvalidParameter("GLCM distance must be >= 1".into()));
    }
    let ng = grid.ng as usize;
    let (nx, ny, nz) = grid.dims;
    let mut counts = vec![0u64; ng * ng];
    let d = distance as i64;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let a = grid.level(x, y, z);
                if a == 0 {
                    continue;
                }
                for &(dx, dy, dz) in directions {
                    let b = level_at(
                        grid,
                        x as i64 + dx as i64 * d,
                        y as i64 + dy as i64 * d,
                        z as i64 + dz as i64 * d,
                    );
                    if b == 0 {
                        continue;
                    }
                    counts[(a as usize - 1) * ng + (b as usize - 1)] += 1;
                    if symmetric {
                        counts[(b as usize - 1) * ng + (a as usize - 1)] += 1;
                    }
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoPairs);
    }
    let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(GlcmMatrix {
        ng,
        probs,
        total_pairs: total,
    })
}

/// Features from a normalized co-occurrence matrix. The correlation of a
/// single-level region is defined as 1.
pub fn glcm_features_from(matrix: &GlcmMatrix, lesion_id: &str) -> RadiomicFeatureSet {
    let ng = matrix.ng;
    let mut contrast = 0.0;
    let mut entropy = 0.0;
    let mut homogeneity = 0.0;
    let mut energy = 0.0;
    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut exy = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let p = matrix.p(i, j);
            let (li, lj) = ((i + 1) as f64, (j + 1) as f64);
            contrast += p * (li - lj) * (li - lj);
            homogeneity += p / (1.0 + (li - lj).abs());
            energy += p * p;
            if p > 0.0 {
                entropy -= p * p.log2();
            }
            px[i] += p;
            py[j] += p;
            exy += p * li * lj;
        }
    }
    let mu_x: f64 = px.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let mu_y: f64 = py.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum();
    let var_x: f64 = px
        .iter()
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64 - mu_x).powi(2) * p)
        .sum();
    let var_y: f64 = py
        .iter()
        .enumerate()
        .map(|(j, p)| ((j + 1) as f64 - mu_y).powi(2) * p)
        .sum();
    let correlation = if var_x > 0.0 && var_y > 0.0 {
        (exy - mu_x * mu_y) / (var_x * var_y).sqrt()
    } else {
        1.0
    };

    let mut set = RadiomicFeatureSet {
        lesion_id: lesion_id.to_string(),
        features: Vec::new(),
    };
    let c = FeatureCategory::Glcm;
    set.push("glcm_contrast", c, contrast);
    set.push("glcm_correlation", c, correlation);
    set.push("glcm_joint_entropy", c, entropy);
    set.push("glcm_homogeneity", c, homogeneity);
    set.push("glcm_energy", c, energy);
    set
}

/// GLCM features over the 13 unique directions, symmetric, distance in
/// voxels.
pub fn glcm_features(
    grid: &GrayLevelGrid,
    distance: usize,
    symmetric: bool,
) -> Result<RadiomicFeatureSet> {
    let matrix = glcm_matrix(grid, distance, symmetric, &DIRECTIONS_13)?;
    Ok(glcm_features_from(&matrix, &grid.lesion_id))
}

/// Run-length counts accumulated over a direction set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthMatrix {
    pub ng: usize,
    pub max_run: usize,
    /// counts\[level-1\]\[run-1\], row-major ng x max_run
    pub counts: Vec<f64>,
    pub n_runs: f64,
    pub n_voxels: usize,
    pub n_directions: usize,
}

impl RunLengthMatrix {
    pub fn count(&self, level: usize, run: usize) -> f64 {
        self.counts[level * self.max_run + run]
    }
}

/// Decompose the masked grid into maximal equal-level runs along each
/// direction. A line is a maximal sequence of consecutive in-mask voxels;
/// out-of-mask voxels break both lines and runs.
pub fn glrlm_matrix(grid: &GrayLevelGrid, directions: &[(i32, i32, i32)]) -> RunLengthMatrix {
    let ng = grid.ng as usize;
    let (nx, ny, nz) = grid.dims;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut max_run = 1;
    for &(dx, dy, dz) in directions {
        let (dx, dy, dz) = (dx as i64, dy as i64, dz as i64);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let level = grid.level(x, y, z);
                    if level == 0 {
                        continue;
                    }
                    // only start walking at the head of an in-mask line
                    if level_at(grid, x as i64 - dx, y as i64 - dy, z as i64 - dz) != 0 {
                        continue;
                    }
                    let (mut cx, mut cy, mut cz) = (x as i64, y as i64, z as i64);
                    let mut current = level;
                    let mut length = 0usize;
                    loop {
                        let l = level_at(grid, cx, cy, cz);
                        if l == 0 {
                            break;
                        }
                        if l == current {
                            length += 1;
                        } else {
                            runs.push((current as usize, length));
                            max_run = max_run.max(length);
                            current = l;
                            length = 1;
                        }
                        cx += dx;
                        cy += dy;
                        cz += dz;
                    }
                    runs.push((current as usize, length));
                    max_run = max_run.max(length);
                }
            }
        }
    }
    let mut counts = vec![0.0; ng * max_run];
    for (level, length) in &runs {
        counts[(level - 1) * max_run + (length - 1)] += 1.0;
    }
    RunLengthMatrix {
        ng,
        max_run,
        counts,
        n_runs: runs.len() as f64,
        n_voxels: grid.masked_count(),
        n_directions: directions.len(),
    }
}

/// Features from a run-length matrix. Run percentage is the run count per
/// masked voxel and direction.
pub fn glrlm_features_from(matrix: &RunLengthMatrix, lesion_id: &str) -> RadiomicFeatureSet {
    let nr = matrix.n_runs;
    let mut sre = 0.0;
    let mut lre = 0.0;
    for level in 0..matrix.ng {
        for run in 0..matrix.max_run {
            let p = matrix.count(level, run) / nr;
            let j = (run + 1) as f64;
            sre += p / (j * j);
            lre += p * j * j;
        }
    }
    let mut gln = 0.0;
    for level in 0..matrix.ng {
        let g: f64 = (0..matrix.max_run).map(|r| matrix.count(level, r)).sum();
        gln += g * g;
    }
    gln /= nr;
    let mut rln = 0.0;
    for run in 0..matrix.max_run {
        let r: f64 = (0..matrix.ng).map(|l| matrix.count(l, run)).sum();
        rln += r * r;
    }
    rln /= nr;
    let run_percentage = nr / (matrix.n_directions as f64 * matrix.n_voxels as f64);

    let mut set = RadiomicFeatureSet {
        lesion_id: lesion_id.to_string(),
        features: Vec::new(),
    };
    let c = FeatureCategory::Glrlm;
    set.push("glrlm_short_run_emphasis", c, sre);
    set.push("glrlm_long_run_emphasis", c, lre);
    set.push("glrlm_run_length_nonuniformity", c, rln);
    set.push("glrlm_gray_level_nonuniformity", c, gln);
    set.push("glrlm_run_percentage", c, run_percentage);
    set
}

/// GLRLM features over the 13 unique directions.
pub fn glrlm_features(grid: &GrayLevelGrid) -> Result<RadiomicFeatureSet> {
    if grid.masked_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let matrix = glrlm_matrix(grid, &DIRECTIONS_13);
    Ok(glrlm_features_from(&matrix, &grid.lesion_id))
}

const NEIGHBORS_26: [(i64, i64, i64); 26] = {
    let mut out = [(0i64, 0i64, 0i64); 26];
    let mut idx = 0;
    let mut dx = -1i64;
    while dx <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dz = -1i64;
            while dz <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[idx] = (dx, dy, dz);
                    idx += 1;
                }
                dz += 1;
            }
            dy += 1;
        }
        dx += 1;
    }
    out
};

/// 26-connected zones of equal level: (level, size) per zone.
pub fn glszm_zones(grid: &GrayLevelGrid) -> Vec<(u32, usize)> {
    let (nx, ny, nz) = grid.dims;
    let mut visited = vec![false; grid.levels.len()];
    let mut zones = Vec::new();
    let mut stack = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let start = grid.index(x, y, z);
                let level = grid.levels[start];
                if level == 0 || visited[start] {
                    continue;
                }
                visited[start] = true;
                stack.push((x as i64, y as i64, z as i64));
                let mut size = 0usize;
                while let Some((cx, cy, cz)) = stack.pop() {
                    size += 1;
                    for (dx, dy, dz) in NEIGHBORS_26 {
                        let (px, py, pz) = (cx + dx, cy + dy, cz + dz);
                        if level_at(grid, px, py, pz) == level {
                            let idx = grid.index(px as usize, py as usize, pz as usize);
                            if !visited[idx] {
                                visited[idx] = true;
                                stack.push((px, py, pz));
                            }
                        }
                    }
                }
                zones.push((level, size));
            }
        }
    }
    zones
}

/// Size-zone features; zone percentage is zones per masked voxel.
pub fn glszm_features(grid: &GrayLevelGrid) -> Result<RadiomicFeatureSet> {
    let n_voxels = grid.masked_count();
    if n_voxels == 0 {
        return Err(Error::EmptyMask);
    }
    let zones = glszm_zones(grid);
    let nz = zones.len() as f64;
    let mut sae = 0.0;
    let mut lae = 0.0;
    let mut entropy = 0.0;
    // zones with the same (level, size) share probability mass; iterating
    // zone by zone with p = 1/nz accumulates the same sums
    for &(_, size) in &zones {
        let s = size as f64;
        sae += 1.0 / (nz * s * s);
        lae += s * s / nz;
    }
    let mut grouped: std::collections::BTreeMap<(u32, usize), usize> = Default::default();
    for &(level, size) in &zones {
        *grouped.entry((level, size)).or_insert(0) += 1;
    }
    for (_, count) in grouped {
        let p = count as f64 / nz;
        entropy -= p * p.log2();
    }

    let mut set = RadiomicFeatureSet {
        lesion_id: grid.lesion_id.clone(),
        features: Vec::new(),
    };
    let c = FeatureCategory::Glszm;
    set.push("glszm_small_area_emphasis", c, sae);
    set.push("glszm_large_area_emphasis", c, lae);
    set.push("glszm_zone_entropy", c, entropy);
    set.push("glszm_zone_percentage", c, nz / n_voxels as f64);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomics::{discretize, DiscretizationSpec, LesionMask, Volume};
    use approx::assert_relative_eq;

    fn grid_1d(levels: Vec<u32>) -> GrayLevelGrid {
        let ng = levels.iter().copied().max().unwrap();
        GrayLevelGrid {
            dims: (levels.len(), 1, 1),
            levels,
            ng,
            lesion_id: "L1".into(),
            constant_region: false,
        }
    }

    #[test]
    fn glcm_uniform_region() {
        let g = grid_1d(vec![1, 1, 1, 1]);
        let f = glcm_features(&g, 1, true).unwrap();
        assert_eq!(f.get("glcm_contrast").unwrap(), 0.0);
        assert_eq!(f.get("glcm_energy").unwrap(), 1.0);
        assert_eq!(f.get("glcm_joint_entropy").unwrap(), 0.0);
        assert_eq!(f.get("glcm_correlation").unwrap(), 1.0);
    }

    #[test]
    fn glcm_alternating_line() {
        // [1,2,1,2] at distance 1: three pairs, all cross-level
        let g = grid_1d(vec![1, 2, 1, 2]);
        let f = glcm_features(&g, 1, true).unwrap();
        assert_relative_eq!(f.get("glcm_contrast").unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.get("glcm_energy").unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.get("glcm_correlation").unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn glcm_matrix_sums_to_one_and_is_symmetric() {
        let g = grid_1d(vec![1, 2, 3, 1, 2, 2, 3, 1]);
        let m = glcm_matrix(&g, 1, true, &DIRECTIONS_13).unwrap();
        let total: f64 = m.probs.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for i in 0..m.ng {
            for j in 0..m.ng {
                assert_eq!(m.p(i, j), m.p(j, i));
            }
        }
    }

    #[test]
    fn glcm_single_voxel_has_no_pairs() {
        let g = grid_1d(vec![1]);
        assert!(matches!(glcm_features(&g, 1, true), Err(Error::NoPairs)));
    }

    #[test]
    fn glrlm_single_direction_runs() {
        // one run of length 3 along the only extended direction
        let g = grid_1d(vec![1, 1, 1]);
        let m = glrlm_matrix(&g, &[(1, 0, 0)]);
        assert_eq!(m.n_runs, 1.0);
        let f = glrlm_features_from(&m, "L1");
        assert_relative_eq!(f.get("glrlm_long_run_emphasis").unwrap(), 9.0, epsilon = 1e-12);
        assert_relative_eq!(f.get("glrlm_short_run_emphasis").unwrap(), 1.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(f.get("glrlm_run_percentage").unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn glrlm_alternating_runs() {
        let g = grid_1d(vec![1, 2, 1, 2]);
        let m = glrlm_matrix(&g, &[(1, 0, 0)]);
        assert_eq!(m.n_runs, 4.0);
        let f = glrlm_features_from(&m, "L1");
        assert_relative_eq!(f.get("glrlm_short_run_emphasis").unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.get("glrlm_run_percentage").unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn glrlm_masked_gap_breaks_run() {
        let mut g = grid_1d(vec![1, 1, 1, 1, 1]);
        g.levels[2] = 0; // carve a gap
        let m = glrlm_matrix(&g, &[(1, 0, 0)]);
        assert_eq!(m.n_runs, 2.0);
        assert_eq!(m.count(0, 1), 2.0); // two runs of length 2
    }

    #[test]
    fn glszm_zone_cases() {
        // constant region: one zone covering everything
        let g = grid_1d(vec![1, 1, 1, 1]);
        let f = glszm_features(&g).unwrap();
        assert_relative_eq!(f.get("glszm_zone_percentage").unwrap(), 0.25, epsilon = 1e-12);

        // two disjoint single voxels of the same level
        let mut g = grid_1d(vec![1, 0, 1]);
        g.ng = 1;
        let zones = glszm_zones(&g);
        assert_eq!(zones, vec![(1, 1), (1, 1)]);

        // L-shaped 3-voxel blob is one 26-connected zone
        let volume = Volume::new(
            (2, 2, 1),
            (1.0, 1.0, 1.0),
            vec![10.0, 10.0, 10.0, 80.0],
        )
        .unwrap();
        let mask = LesionMask::new((2, 2, 1), vec![true, true, true, false], "L").unwrap();
        let grid = discretize(&volume, &mask, &DiscretizationSpec::FixedBinWidth { bin_width: 25.0 }).unwrap();
        let zones = glszm_zones(&grid);
        assert_eq!(zones, vec![(1, 3)]);
    }
}
