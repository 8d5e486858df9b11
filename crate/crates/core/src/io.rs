//! File formats: covariance rasters, segmentations, label and map CSVs, and
//! indexed PNG renders of classification maps.
//!
//! Binary formats are little-endian.
//!
//! ```text
//! PCOV: "PCOV" u8 version u32 width u32 height f64 looks
//!       then per pixel 9 × f64 [Z_hh Z_hv Z_vv Re Z_hhhv Im Z_hhhv
//!                               Re Z_hhvv Im Z_hhvv Re Z_hvvv Im Z_hvvv]
//! PSEG: "PSEG" u32 width u32 height then per pixel u32 region id
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::kernels::{read_f64, read_u32};
use crate::raster::{
    ClassificationMap, CovarianceRaster, LabelEntry, LabeledDataset, MapEntry, RegionStatus, Role,
    SegmentationMap,
};

const RASTER_MAGIC: &[u8; 4] = b"PCOV";
const RASTER_VERSION: u8 = 1;
const SEGMENTATION_MAGIC: &[u8; 4] = b"PSEG";
pub const RASTER_HEADER_LEN: usize = 21;
pub const BYTES_PER_PIXEL: usize = 72;

/// RGB colours of classes 0..; class ids wrap around. The last palette
/// entry marks regions without a class.
pub const PALETTE: [[u8; 3]; 9] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [0, 0, 0],
];

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn dims(width: usize, height: usize) -> Result<(u32, u32)> {
    let w = u32::try_from(width).map_err(|_| Error::Format("width exceeds u32".into()))?;
    let h = u32::try_from(height).map_err(|_| Error::Format("height exceeds u32".into()))?;
    Ok((w, h))
}

pub fn write_raster<W: Write>(raster: &CovarianceRaster, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let (width, height) = dims(raster.width(), raster.height())?;
    w.write_all(RASTER_MAGIC)?;
    w.write_all(&[RASTER_VERSION])?;
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    w.write_all(&raster.looks().to_le_bytes())?;
    for p in raster.pixels() {
        for v in p.to_packed() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_raster<R: Read>(r: R) -> Result<CovarianceRaster> {
    let mut r = BufReader::new(r);
    check_magic(&mut r, RASTER_MAGIC)?;
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != RASTER_VERSION {
        return Err(Error::Format(format!("unsupported raster version {}", version[0])));
    }
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let looks = read_f64(&mut r)?;
    let mut pixels = Vec::with_capacity(width * height);
    let mut buf = vec![0u8; BYTES_PER_PIXEL];
    for _ in 0..width * height {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("raster file is truncated".into()))?;
        let mut packed = [0.0; 9];
        for (k, v) in packed.iter_mut().enumerate() {
            *v = f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        }
        pixels.push(HermitianMatrix::from_packed(&packed)?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after raster".into()));
    }
    CovarianceRaster::new(width, height, looks, pixels)
}

pub fn write_segmentation<W: Write>(seg: &SegmentationMap, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let (width, height) = dims(seg.width(), seg.height())?;
    w.write_all(SEGMENTATION_MAGIC)?;
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    for id in seg.ids() {
        w.write_all(&id.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_segmentation<R: Read>(r: R) -> Result<SegmentationMap> {
    let mut r = BufReader::new(r);
    check_magic(&mut r, SEGMENTATION_MAGIC)?;
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let mut ids = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        ids.push(read_u32(&mut r).map_err(|_| Error::Format("segmentation file is truncated".into()))?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after segmentation".into()));
    }
    SegmentationMap::new(width, height, ids)
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    region_id: u32,
    class_id: u32,
    role: String,
}

pub fn write_labels<W: Write>(data: &LabeledDataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in data.entries() {
        out.serialize(LabelRow {
            region_id: e.region_id,
            class_id: e.class_id,
            role: e.role.to_string(),
        })
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(r: R) -> Result<LabeledDataset> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["region_id", "class_id", "role"])?;
    let mut entries = Vec::new();
    for row in rd.deserialize::<LabelRow>() {
        let row = row.map_err(csv_error)?;
        entries.push(LabelEntry {
            region_id: row.region_id,
            class_id: row.class_id,
            role: row.role.parse::<Role>()?,
        });
    }
    LabeledDataset::new(entries)
}

#[derive(Serialize, Deserialize)]
struct MapRow {
    region_id: u32,
    class_id: Option<u32>,
    status: String,
}

pub fn write_map<W: Write>(map: &ClassificationMap, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in map.entries() {
        out.serialize(MapRow {
            region_id: e.region_id,
            class_id: e.class_id,
            status: e.status.to_string(),
        })
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_map<R: Read>(r: R) -> Result<ClassificationMap> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rd, &["region_id", "class_id", "status"])?;
    let mut entries = Vec::new();
    for row in rd.deserialize::<MapRow>() {
        let row = row.map_err(csv_error)?;
        entries.push(MapEntry {
            region_id: row.region_id,
            class_id: row.class_id,
            status: row.status.parse::<RegionStatus>()?,
        });
    }
    ClassificationMap::new(entries)
}

fn check_header<R: Read>(rd: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rd.headers().map_err(csv_error)?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header {}, got {}",
            expected.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// 8-bit indexed PNG with one palette entry per class colour.
pub fn write_map_png<W: Write>(map: &ClassificationMap, seg: &SegmentationMap, w: W) -> Result<()> {
    let (width, height) = dims(seg.width(), seg.height())?;
    let pixels = map.render(seg)?;
    let unknown = (PALETTE.len() - 1) as u8;
    let classes = unknown as u32;
    let data: Vec<u8> = pixels
        .iter()
        .map(|c| c.map_or(unknown, |c| (c % classes) as u8))
        .collect();
    let mut enc = png::Encoder::new(BufWriter::new(w), width, height);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(PALETTE.concat());
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Format(e.to_string()))?;
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Format(e.to_string()))?;
    writer.finish().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn save<T>(path: &Path, value: &T, write: impl Fn(&T, File) -> Result<()>) -> Result<()> {
    write(value, File::create(path)?)
}

pub fn load<T>(path: &Path, read: impl Fn(File) -> Result<T>) -> Result<T> {
    read(File::open(path)?)
}
