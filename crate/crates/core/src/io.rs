//! Output helpers: atomic writes, CSV tables and portable pixmaps.

use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Scientific notation used in every CSV field.
pub fn sci(v: f64) -> String {
    format!("{v:.10e}")
}

/// Comma-separated table with a header row.
pub fn csv_bytes<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// q-th percentile (0–100) by nearest rank of the finite values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

fn encode_pnm(width: usize, height: usize, data: &[u8], color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let subtype = match color {
        ExtendedColorType::L8 => PnmSubtype::Graymap(SampleEncoding::Binary),
        _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
    };
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(out)
}

/// 8-bit graymap of `values` (row-major, first row on top), linear from 0
/// to the given saturation percentile.
pub fn gray_pixmap(width: usize, height: usize, values: &[f64], saturation: f64) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::InvalidInput(format!(
            "{} values for a {width}×{height} image",
            values.len()
        )));
    }
    let top = percentile(values, saturation).max(1e-300);
    let data: Vec<u8> = values
        .iter()
        .map(|v| ((v / top).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_pnm(width, height, &data, ExtendedColorType::L8)
}

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Colour of t ∈ [0, 1] on a five-stop viridis ramp.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let k = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - k as f64;
    let mut c = [0u8; 3];
    for (ch, out) in c.iter_mut().enumerate() {
        *out = (VIRIDIS[k][ch] * (1.0 - f) + VIRIDIS[k + 1][ch] * f).round() as u8;
    }
    c
}

/// Colour scale of a map raster.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColorScale {
    pub min: f64,
    pub max: f64,
    /// Maps t ↦ 1 − (1 − t)^{1/4} before colouring, stretching the top end.
    pub nonlinear: bool,
}

impl ColorScale {
    pub fn position(&self, v: f64) -> f64 {
        let t = ((v - self.min) / (self.max - self.min).max(1e-300)).clamp(0.0, 1.0);
        if self.nonlinear {
            1.0 - (1.0 - t).powf(0.25)
        } else {
            t
        }
    }
}

/// RGB pixmap of a cell map, `None` cells white; each cell is drawn as a
/// `zoom × zoom` block and `contours` (level, rgb) mark cell edges where the
/// map crosses the level.
pub fn color_pixmap(
    width: usize,
    height: usize,
    values: &[Option<f64>],
    scale: &ColorScale,
    zoom: usize,
    contours: &[(f64, [u8; 3])],
) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::InvalidInput(format!(
            "{} values for a {width}×{height} map",
            values.len()
        )));
    }
    let z = zoom.max(1);
    let (w, h) = (width * z, height * z);
    let mut data = vec![255u8; w * h * 3];
    let at = |x: usize, y: usize| values[y * width + x];
    for y in 0..height {
        for x in 0..width {
            let Some(v) = at(x, y) else { continue };
            let c = viridis(scale.position(v));
            for dy in 0..z {
                for dx in 0..z {
                    let p = ((y * z + dy) * w + x * z + dx) * 3;
                    data[p..p + 3].copy_from_slice(&c);
                }
            }
        }
    }
    for &(level, rgb) in contours {
        for y in 0..height {
            for x in 0..width {
                let Some(v) = at(x, y) else { continue };
                let right = (x + 1 < width).then(|| at(x + 1, y)).flatten();
                let below = (y + 1 < height).then(|| at(x, y + 1)).flatten();
                if let Some(r) = right {
                    if (v - level) * (r - level) < 0.0 {
                        for dy in 0..z {
                            let p = ((y * z + dy) * w + (x + 1) * z - 1) * 3;
                            data[p..p + 3].copy_from_slice(&rgb);
                        }
                    }
                }
                if let Some(b) = below {
                    if (v - level) * (b - level) < 0.0 {
                        for dx in 0..z {
                            let p = (((y + 1) * z - 1) * w + x * z + dx) * 3;
                            data[p..p + 3].copy_from_slice(&rgb);
                        }
                    }
                }
            }
        }
    }
    encode_pnm(w, h, &data, ExtendedColorType::Rgb8)
}
