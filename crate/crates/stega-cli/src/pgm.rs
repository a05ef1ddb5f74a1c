//! PGM (P2/P5) reading, P5 writing, and the change-map byte encoding.
//!
//! Reads accept `#` comment lines in the header; writes never emit them, so
//! a comment-free P5 file round-trips byte for byte.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use stega_core::image::GrayImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a PGM file: magic {0:?} (expected P2 or P5)")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("maxval {0} exceeds the 8-bit limit of 255")]
    MaxvalTooLarge(u32),
    #[error("truncated payload: expected {expected} pixels, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("pixel value {value} exceeds maxval {maxval}")]
    ValueAboveMaxval { value: u32, maxval: u32 },
    #[error("byte {value} at index {index} is not a change-map code (0, 127, or 255)")]
    BadChangeCode { value: u8, index: usize },
}

/// Pulls the next whitespace-delimited token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], PgmError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::BadHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8], what: &str) -> Result<u32, PgmError> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| {
            PgmError::BadHeader(format!(
                "{what} is not a number: {:?}",
                String::from_utf8_lossy(token)
            ))
        })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into())),
    };
    let width = parse_number(next_token(bytes, &mut pos)?, "width")? as usize;
    let height = parse_number(next_token(bytes, &mut pos)?, "height")? as usize;
    let maxval = parse_number(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval > 255 {
        return Err(PgmError::MaxvalTooLarge(maxval));
    }
    if maxval == 0 {
        return Err(PgmError::BadHeader("maxval 0".into()));
    }
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader(format!("degenerate size {width}x{height}")));
    }
    let expected = width * height;
    let mut pixels = Vec::with_capacity(expected);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(PgmError::BadHeader("missing raster separator".into()));
        }
        pos += 1;
        let raster = &bytes[pos..];
        if raster.len() < expected {
            return Err(PgmError::Truncated {
                expected,
                got: raster.len(),
            });
        }
        pixels.extend_from_slice(&raster[..expected]);
    } else {
        for _ in 0..expected {
            let token = match next_token(bytes, &mut pos) {
                Ok(t) => t,
                Err(_) => {
                    return Err(PgmError::Truncated {
                        expected,
                        got: pixels.len(),
                    })
                }
            };
            let v = parse_number(token, "pixel")?;
            if v > maxval {
                return Err(PgmError::ValueAboveMaxval { value: v, maxval });
            }
            pixels.push(v as u8);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    decode_pgm(&fs::read(path)?)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), PgmError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pgm(img))?;
    Ok(())
}

/// Change maps ride in PGM bodies with -1 -> 0, 0 -> 127, +1 -> 255.
pub fn change_map_to_image(changes: &[i8], width: usize, height: usize) -> GrayImage {
    assert_eq!(changes.len(), width * height);
    let pixels = changes
        .iter()
        .map(|&c| match c.signum() {
            -1 => 0u8,
            0 => 127,
            _ => 255,
        })
        .collect();
    GrayImage {
        width,
        height,
        pixels,
    }
}

pub fn image_to_change_map(img: &GrayImage) -> Result<Vec<i8>, PgmError> {
    img.pixels
        .iter()
        .enumerate()
        .map(|(index, &value)| match value {
            0 => Ok(-1i8),
            127 => Ok(0),
            255 => Ok(1),
            _ => Err(PgmError::BadChangeCode { value, index }),
        })
        .collect()
}

pub fn write_change_map(
    path: &Path,
    changes: &[i8],
    width: usize,
    height: usize,
) -> Result<(), PgmError> {
    write_pgm(path, &change_map_to_image(changes, width, height))
}

pub fn read_change_map(path: &Path) -> Result<(Vec<i8>, usize, usize), PgmError> {
    let img = read_pgm(path)?;
    let changes = image_to_change_map(&img)?;
    Ok((changes, img.width, img.height))
}
