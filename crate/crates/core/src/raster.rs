//! In-memory covariance rasters, segmentations, labels and classification
//! maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

/// Row-major grid of multilook covariance matrices sharing one number of
/// looks.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceRaster {
    width: usize,
    height: usize,
    looks: f64,
    pixels: Vec<HermitianMatrix>,
}

impl CovarianceRaster {
    pub fn new(width: usize, height: usize, looks: f64, pixels: Vec<HermitianMatrix>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if !(looks > 0.0 && looks.is_finite()) {
            return Err(Error::InvalidLooks(looks));
        }
        if pixels.iter().any(|p| p.diag().iter().any(|&d| d < 0.0)) {
            return Err(Error::InvalidData("negative intensity on a diagonal".into()));
        }
        Ok(Self {
            width,
            height,
            looks,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn looks(&self) -> f64 {
        self.looks
    }

    pub fn pixels(&self) -> &[HermitianMatrix] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> &HermitianMatrix {
        &self.pixels[y * self.width + x]
    }
}

/// Region id per pixel; ids cover `0..region_count` without gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    region_count: usize,
}

impl SegmentationMap {
    pub fn new(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: ids.len(),
            });
        }
        let region_count = ids.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; region_count];
        for &id in &ids {
            seen[id as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidData(format!(
                "region ids are not contiguous: {missing} is unused"
            )));
        }
        Ok(Self {
            width,
            height,
            ids,
            region_count,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    /// Pixel indices of every region, in raster order.
    pub fn region_pixels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.region_count];
        for (p, &id) in self.ids.iter().enumerate() {
            out[id as usize].push(p);
        }
        out
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.region_count];
        for &id in &self.ids {
            out[id as usize] += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
    None,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
            Role::None => "none",
        })
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            "none" => Ok(Role::None),
            _ => Err(Error::Format(format!("unknown role {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub region_id: u32,
    pub class_id: u32,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    entries: Vec<LabelEntry>,
}

impl LabeledDataset {
    /// Entries sorted by region id; a region may appear once.
    pub fn new(mut entries: Vec<LabelEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.region_id);
        for w in entries.windows(2) {
            if w[0].region_id == w[1].region_id {
                return Err(Error::InvalidData(format!(
                    "region {} is labelled twice",
                    w[0].region_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn get(&self, region_id: u32) -> Option<&LabelEntry> {
        self.entries
            .binary_search_by_key(&region_id, |e| e.region_id)
            .ok()
            .map(|k| &self.entries[k])
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &LabelEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Sorted class ids with at least one training region.
    pub fn training_classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.with_role(Role::Train).map(|e| e.class_id).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Every labelled class must have a training region.
    pub fn validate(&self) -> Result<()> {
        let trained = self.training_classes();
        for e in &self.entries {
            if trained.binary_search(&e.class_id).is_err() {
                return Err(Error::EmptyClass(e.class_id));
            }
        }
        Ok(())
    }

    /// Copy with `role` replaced for the given regions.
    pub fn reassign(&self, regions: &[u32], role: Role) -> Self {
        let mut entries = self.entries.clone();
        for e in &mut entries {
            if regions.contains(&e.region_id) {
                e.role = role;
            }
        }
        Self { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionStatus {
    Ok,
    Degenerate,
    Unclassifiable,
}

impl fmt::Display for RegionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionStatus::Ok => "ok",
            RegionStatus::Degenerate => "degenerate",
            RegionStatus::Unclassifiable => "unclassifiable",
        })
    }
}

impl FromStr for RegionStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RegionStatus::Ok),
            "degenerate" => Ok(RegionStatus::Degenerate),
            "unclassifiable" => Ok(RegionStatus::Unclassifiable),
            _ => Err(Error::Format(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub region_id: u32,
    pub class_id: Option<u32>,
    pub status: RegionStatus,
}

/// One entry per region, indexed by region id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassificationMap {
    entries: Vec<MapEntry>,
}

impl ClassificationMap {
    pub fn new(entries: Vec<MapEntry>) -> Result<Self> {
        for (k, e) in entries.iter().enumerate() {
            if e.region_id as usize != k {
                return Err(Error::InvalidData(format!(
                    "map entry {k} has region id {}",
                    e.region_id
                )));
            }
            if (e.status == RegionStatus::Ok) != e.class_id.is_some() {
                return Err(Error::InvalidData(format!(
                    "region {k}: status {} with class {:?}",
                    e.status, e.class_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn class_of(&self, region_id: u32) -> Option<u32> {
        self.entries.get(region_id as usize).and_then(|e| e.class_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Class per pixel through the segmentation.
    pub fn render(&self, seg: &SegmentationMap) -> Result<Vec<Option<u32>>> {
        if seg.region_count() != self.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: seg.region_count(),
                got: self.entries.len(),
            });
        }
        Ok(seg.ids().iter().map(|&id| self.entries[id as usize].class_id).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmentation_requires_contiguous_ids() {
        assert!(SegmentationMap::new(2, 2, vec![0, 1, 1, 0]).is_ok());
        assert!(matches!(
            SegmentationMap::new(2, 2, vec![0, 2, 2, 0]),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(
            SegmentationMap::new(2, 2, vec![0, 1, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn region_pixels_follow_raster_order() {
        let s = SegmentationMap::new(3, 2, vec![1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(s.region_pixels(), vec![vec![1, 3, 4], vec![0, 2, 5]]);
        assert_eq!(s.region_sizes(), vec![3, 3]);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let e = |r| LabelEntry {
            region_id: r,
            class_id: 0,
            role: Role::Train,
        };
        assert!(LabeledDataset::new(vec![e(1), e(0)]).is_ok());
        assert!(LabeledDataset::new(vec![e(1), e(1)]).is_err());
    }

    #[test]
    fn classes_without_training_fail_validation() {
        let d = LabeledDataset::new(vec![
            LabelEntry {
                region_id: 0,
                class_id: 0,
                role: Role::Train,
            },
            LabelEntry {
                region_id: 1,
                class_id: 1,
                role: Role::Test,
            },
        ])
        .unwrap();
        assert!(matches!(d.validate(), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn map_status_must_match_class() {
        let bad = MapEntry {
            region_id: 0,
            class_id: None,
            status: RegionStatus::Ok,
        };
        assert!(ClassificationMap::new(vec![bad]).is_err());
    }
}
