//! Binary PGM (P5) reading and writing, 8- and 16-bit.

use std::io::Cursor;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("not a binary PGM (P5) image")]
    NotP5,
    #[error("PGM decode failed: {0}")]
    Decode(String),
    #[error("expected {expected} samples for {width}x{height}, got {actual}")]
    Size {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgmSamples {
    Eight(Vec<u8>),
    Sixteen(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub samples: PgmSamples,
}

fn check_magic(bytes: &[u8]) -> Result<(), PgmError> {
    if bytes.len() < 3 || &bytes[..2] != b"P5" || !bytes[2].is_ascii_whitespace() {
        return Err(PgmError::NotP5);
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Pgm, PgmError> {
    check_magic(bytes)?;
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| PgmError::Decode(e.to_string()))?;
    let (width, height) = (img.width(), img.height());
    let samples = match img {
        DynamicImage::ImageLuma8(b) => PgmSamples::Eight(b.into_raw()),
        DynamicImage::ImageLuma16(b) => PgmSamples::Sixteen(b.into_raw()),
        other => return Err(PgmError::Decode(format!("unexpected color type {:?}", other.color()))),
    };
    Ok(Pgm {
        width,
        height,
        samples,
    })
}

/// Decodes and widens to 8 bits (16-bit samples are scaled down).
pub fn decode_u8(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), PgmError> {
    let p = decode(bytes)?;
    let px = match p.samples {
        PgmSamples::Eight(v) => v,
        PgmSamples::Sixteen(v) => v.into_iter().map(|s| (s >> 8) as u8).collect(),
    };
    Ok((p.width, p.height, px))
}

/// Decodes to 16-bit samples, as written (8-bit samples are not rescaled).
pub fn decode_u16(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>), PgmError> {
    let p = decode(bytes)?;
    let px = match p.samples {
        PgmSamples::Eight(v) => v.into_iter().map(u16::from).collect(),
        PgmSamples::Sixteen(v) => v,
    };
    Ok((p.width, p.height, px))
}

fn check_len(width: u32, height: u32, len: usize) -> Result<(), PgmError> {
    let expected = width as usize * height as usize;
    if expected != len {
        return Err(PgmError::Size {
            width,
            height,
            expected,
            actual: len,
        });
    }
    Ok(())
}

pub fn encode_u8(width: u32, height: u32, pixels: &[u8]) -> Result<Vec<u8>, PgmError> {
    check_len(width, height, pixels.len())?;
    let mut out = Cursor::new(Vec::new());
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width, height, ExtendedColorType::L8)
        .map_err(|e| PgmError::Decode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn encode_u16(width: u32, height: u32, samples: &[u16]) -> Result<Vec<u8>, PgmError> {
    check_len(width, height, samples.len())?;
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.extend(samples.iter().flat_map(|s| s.to_be_bytes()));
    Ok(out)
}
