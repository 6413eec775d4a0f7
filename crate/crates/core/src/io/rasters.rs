use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::geometry::DepthRaster;
use crate::raster::{BinaryMask, RgbImage};

/// Reads a portable float map. Greyscale (`Pf`) maps are read as they are,
/// colour (`PF`) maps keep their first channel. Either byte order is
/// accepted; rows are stored bottom to top.
pub fn read_pfm(path: impl AsRef<Path>, scaled: bool) -> Result<DepthRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::ingest(path, e))?;
    decode_pfm(&bytes, scaled).map_err(|m| Error::ingest(path, m))
}

fn header_token(bytes: &[u8], pos: &mut usize) -> std::result::Result<String, String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err("truncated PFM header".into());
    }
    String::from_utf8(bytes[start..*pos].to_vec()).map_err(|_| "non-ASCII PFM header".into())
}

fn decode_pfm(bytes: &[u8], scaled: bool) -> std::result::Result<DepthRaster, String> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("not a PFM file (magic `{other}`)")),
    };
    let width: usize = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| format!("PFM width: {e}"))?;
    let height: usize = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| format!("PFM height: {e}"))?;
    let scale: f64 = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|e| format!("PFM scale: {e}"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("PFM scale {scale} is not a byte-order marker"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let little = scale < 0.0;
    let expected = width * height * channels * 4;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != expected {
        return Err(format!(
            "PFM {width}x{height}x{channels} needs {expected} sample bytes, found {}",
            data.len()
        ));
    }
    let mut values = vec![0.0; width * height];
    for (i, chunk) in data.chunks_exact(4 * channels).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, row) = (i % width, i / width);
        values[(height - 1 - row) * width + x] = v as f64;
    }
    DepthRaster::new(width, height, values, scaled).map_err(|e| e.to_string())
}

/// Writes a little-endian greyscale PFM. Invalid depths are written as 0.
pub fn write_pfm(path: impl AsRef<Path>, depth: &DepthRaster) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (depth.width(), depth.height());
    let mut out = Vec::with_capacity(32 + w * h * 4);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if depth.is_valid(x, y) {
                depth.get(x, y) as f32
            } else {
                0.0
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::ingest(path, e))
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::ingest(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::ingest(path, e))?
        .decode()
        .map_err(|e| Error::ingest(path, e))
}

/// Reads a PNG or PNM colour image; greyscale files are expanded to RGB.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = open_image(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, data).map_err(|e| Error::ingest(path, e))
}

/// Reads an 8-bit PGM or PNG mask; nonzero samples are set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = open_image(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_raw().iter().map(|&v| v != 0).collect();
    BinaryMask::new(w, h, data).map_err(|e| Error::ingest(path, e))
}

/// Output format from the extension: `pgm`/`ppm`/`pnm` or PNG otherwise.
fn format_for(path: &Path) -> ImageFormat {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pgm" | "ppm" | "pnm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    }
}

fn save(path: &Path, img: image::DynamicImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::ingest(path, e))?;
    let mut w = BufWriter::new(file);
    img.write_to(&mut w, format_for(path))
        .map_err(|e| Error::ingest(path, e))?;
    w.flush().map_err(|e| Error::ingest(path, e))
}

pub fn write_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let raw: Vec<u8> = img.data().iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path.as_ref(), buf.into())
}

/// Writes a mask as 0/255 greyscale.
pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let raw: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer length matches dimensions");
    save(path.as_ref(), buf.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let values = vec![1.5, 2.0, -1.0, f64::NAN, 8.25, 0.0];
        let depth = DepthRaster::new(3, 2, values, false).unwrap();
        write_pfm(&p, &depth).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // The first stored row is the bottom image row.
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 0.0);
        let back = read_pfm(&p, true).unwrap();
        assert!(back.scaled);
        assert_eq!(back.values(), &[1.5, 2.0, 0.0, 0.0, 8.25, 0.0]);
    }

    #[test]
    fn big_endian_and_colour_pfm() {
        let mut bytes = b"PF\n1 2\n1.0\n".to_vec();
        for v in [1.0f32, 9.0, 9.0, 2.0, 9.0, 9.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let d = decode_pfm(&bytes, false).unwrap();
        assert_eq!(d.values(), &[2.0, 1.0]);
        assert!(decode_pfm(&bytes[..bytes.len() - 1], false).is_err());
        assert!(decode_pfm(b"P5\n1 1\n255\n\0", false).is_err());
    }

    #[test]
    fn masks_and_images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = BinaryMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        for name in ["m.png", "m.pgm"] {
            let p = dir.path().join(name);
            write_mask(&p, &mask).unwrap();
            assert_eq!(read_mask(&p).unwrap(), mask);
        }
        let img = RgbImage::from_fn(4, 3, |x, y| [x as u8 * 40, y as u8 * 70, 9]);
        let p = dir.path().join("i.png");
        write_rgb(&p, &img).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), img);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_mask("/nonexistent/road.png").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/road.png"), "{err}");
    }
}
