//! Image and report output: 16-bit binary PGM, CSV, JSON sidecars, and
//! atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::FringeImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Csv,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Csv => "csv",
        }
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Pixel values scaled so the brightest pixel is 65535.
pub fn quantize(img: &FringeImage) -> Vec<u16> {
    let max = img.max();
    img.intensities
        .iter()
        .map(|v| if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 })
        .collect()
}

/// Binary P5 graymap, maxval 65535, big-endian samples, row-major.
pub fn pgm_bytes(img: &FringeImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for v in quantize(img) {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Parses a 16-bit P5 graymap into `(width, height, samples)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let bad = || Error::Domain("not a 16-bit P5 graymap".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let body = bytes.get(pos..).ok_or_else(bad)?;
    if body.len() != 2 * w * h {
        return Err(bad());
    }
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// Raw intensities, one image row per line.
pub fn csv_string(img: &FringeImage) -> String {
    let mut out = String::new();
    for row in 0..img.height() {
        let line: Vec<String> = (0..img.width()).map(|col| format!("{:e}", img.get(row, col))).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes `<dir>/<stem>.<ext>` and `<dir>/<stem>.json`; returns both paths.
pub fn write_image<S: Serialize>(dir: &Path, stem: &str, img: &FringeImage, format: ImageFormat, sidecar: &S) -> Result<Vec<PathBuf>> {
    let image_path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        ImageFormat::Pgm => atomic_write(&image_path, &pgm_bytes(img))?,
        ImageFormat::Csv => atomic_write(&image_path, csv_string(img).as_bytes())?,
    }
    let json_path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_string_pretty(sidecar)?;
    json.push('\n');
    atomic_write(&json_path, json.as_bytes())?;
    Ok(vec![image_path, json_path])
}
