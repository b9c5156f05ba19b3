//! Flat raster files.
//!
//! ```text
//! "NLRAST1"        7 bytes
//! width  u32 LE
//! height u32 LE
//! width*height cells, row-major: f32 LE (brightness) or u8 0/1 (mask)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::LightsError;

pub const RASTER_MAGIC: &[u8; 7] = b"NLRAST1";

#[derive(Debug, Clone, PartialEq)]
pub struct BrightnessGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryMask {
    pub country: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BrightnessGrid {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, LightsError> {
        if width * height != values.len() {
            return Err(LightsError::Format(format!(
                "{width}x{height} grid with {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(LightsError::Format(format!(
                "cell {i} has invalid brightness {}",
                values[i]
            )));
        }
        Ok(Self { width, height, values })
    }
}

impl CountryMask {
    pub fn new(country: impl Into<String>, width: usize, height: usize, cells: Vec<bool>) -> Result<Self, LightsError> {
        if width * height != cells.len() {
            return Err(LightsError::Format(format!(
                "{width}x{height} mask with {} cells",
                cells.len()
            )));
        }
        Ok(Self {
            country: country.into(),
            width,
            height,
            cells,
        })
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

fn read_header(r: &mut impl Read) -> Result<(usize, usize), LightsError> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| LightsError::Format("truncated header".into()))?;
    if &magic != RASTER_MAGIC {
        return Err(LightsError::Format("bad magic".into()));
    }
    let mut dims = [0u8; 8];
    r.read_exact(&mut dims)
        .map_err(|_| LightsError::Format("truncated header".into()))?;
    let w = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
    Ok((w, h))
}

fn read_payload(r: &mut impl Read, len: usize) -> Result<Vec<u8>, LightsError> {
    let mut buf = Vec::with_capacity(len);
    r.take(len as u64 + 1).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(LightsError::Format(format!(
            "payload has {} bytes, header implies {len}",
            buf.len()
        )));
    }
    Ok(buf)
}

fn write_header(w: &mut impl Write, width: usize, height: usize) -> Result<(), LightsError> {
    w.write_all(RASTER_MAGIC)?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    Ok(())
}

pub fn read_raster(mut r: impl Read) -> Result<BrightnessGrid, LightsError> {
    let (w, h) = read_header(&mut r)?;
    let bytes = read_payload(&mut r, w * h * 4)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    BrightnessGrid::new(w, h, values)
}

pub fn write_raster(mut w: impl Write, grid: &BrightnessGrid) -> Result<(), LightsError> {
    write_header(&mut w, grid.width, grid.height)?;
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mask(mut r: impl Read, country: &str) -> Result<CountryMask, LightsError> {
    let (w, h) = read_header(&mut r)?;
    let bytes = read_payload(&mut r, w * h)?;
    let cells = bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(LightsError::Format(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<_, _>>()?;
    CountryMask::new(country, w, h, cells)
}

pub fn write_mask(mut w: impl Write, mask: &CountryMask) -> Result<(), LightsError> {
    write_header(&mut w, mask.width, mask.height)?;
    let bytes: Vec<u8> = mask.cells.iter().map(|&c| c as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, LightsError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| LightsError::Path(path.display().to_string(), e))
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<BrightnessGrid, LightsError> {
    let path = path.as_ref();
    read_raster(open(path)?).map_err(|e| e.at(path))
}

pub fn save_raster(path: impl AsRef<Path>, grid: &BrightnessGrid) -> Result<(), LightsError> {
    let mut buf = Vec::with_capacity(15 + grid.values.len() * 4);
    write_raster(&mut buf, grid)?;
    std::fs::write(path.as_ref(), buf).map_err(|e| LightsError::Path(path.as_ref().display().to_string(), e))
}

/// Loads a mask; the country code is the file stem.
pub fn load_mask(path: impl AsRef<Path>) -> Result<CountryMask, LightsError> {
    let path = path.as_ref();
    let country = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| LightsError::Format(format!("{}: no country code in file name", path.display())))?;
    read_mask(open(path)?, country).map_err(|e| e.at(path))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &CountryMask) -> Result<(), LightsError> {
    let mut buf = Vec::new();
    write_mask(&mut buf, mask)?;
    std::fs::write(path.as_ref(), buf).map_err(|e| LightsError::Path(path.as_ref().display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(grid: &BrightnessGrid) -> Vec<u8> {
        let mut b = Vec::new();
        write_raster(&mut b, grid).unwrap();
        b
    }

    #[test]
    fn two_by_two_round_trip() {
        let g = BrightnessGrid::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = bytes(&g);
        assert_eq!(&b[..7], b"NLRAST1");
        assert_eq!(b.len(), 7 + 8 + 16);
        let back = read_raster(&b[..]).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.values.iter().map(|&v| v as f64).sum::<f64>(), 10.0);
    }

    #[test]
    fn truncated_and_trailing_payloads_fail() {
        let b = bytes(&BrightnessGrid::new(2, 2, vec![1.0; 4]).unwrap());
        assert!(read_raster(&b[..b.len() - 1]).is_err());
        let mut longer = b.clone();
        longer.push(0);
        assert!(read_raster(&longer[..]).is_err());
        let mut bad = b;
        bad[0] = b'X';
        assert!(read_raster(&bad[..]).is_err());
    }

    #[test]
    fn negative_values_rejected() {
        let mut b = bytes(&BrightnessGrid::new(1, 1, vec![1.0]).unwrap());
        b[15..19].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(read_raster(&b[..]), Err(LightsError::Format(_))));
    }

    #[test]
    fn mask_round_trip_and_bad_byte() {
        let m = CountryMask::new("USA", 3, 1, vec![true, false, true]).unwrap();
        let mut b = Vec::new();
        write_mask(&mut b, &m).unwrap();
        assert_eq!(read_mask(&b[..], "USA").unwrap(), m);
        *b.last_mut().unwrap() = 2;
        assert!(read_mask(&b[..], "USA").is_err());
    }
}
