//! Binary PNM (P5 grayscale / P6 RGB) load and save.
//!
//! The one lossless interchange format every other module relies on; a
//! saved buffer reloads bitwise-equal.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ImageBuffer, ImagingError};

pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<(), ImagingError> {
    match extension(path) {
        Some("pgm") | Some("ppm") | Some("pnm") => save_pnm(img, path),
        _ => Err(ImagingError::UnsupportedFormat {
            path: path.display().to_string(),
        }),
    }
}

pub fn load_image(path: &Path) -> Result<ImageBuffer, ImagingError> {
    match extension(path) {
        Some("pgm") | Some("ppm") | Some("pnm") => load_pnm(path),
        _ => Err(ImagingError::UnsupportedFormat {
            path: path.display().to_string(),
        }),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

fn save_pnm(img: &ImageBuffer, path: &Path) -> Result<(), ImagingError> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut file = fs::File::create(path)?;
    write!(file, "{}\n{} {}\n255\n", magic, img.width(), img.height())?;
    file.write_all(img.data())?;
    Ok(())
}

fn load_pnm(path: &Path) -> Result<ImageBuffer, ImagingError> {
    let bytes = fs::read(path)?;
    let fail = |reason: &str| ImagingError::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };

    let mut pos = 0usize;
    let magic = take_token(&bytes, &mut pos).ok_or_else(|| fail("missing magic"))?;
    let channels = match magic {
        b"P5" => 1u8,
        b"P6" => 3u8,
        _ => return Err(fail("magic is not P5 or P6")),
    };
    let width = parse_number(&bytes, &mut pos).ok_or_else(|| fail("bad width"))?;
    let height = parse_number(&bytes, &mut pos).ok_or_else(|| fail("bad height"))?;
    let maxval = parse_number(&bytes, &mut pos).ok_or_else(|| fail("bad maxval"))?;
    if maxval > 255 {
        return Err(ImagingError::UnsupportedBitDepth {
            path: path.display().to_string(),
            maxval,
        });
    }
    if maxval == 0 {
        return Err(fail("maxval is zero"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail("missing raster separator"));
    }
    pos += 1;

    let expected = width as usize * height as usize * channels as usize;
    if bytes.len() - pos < expected {
        return Err(fail("truncated raster"));
    }
    ImageBuffer::new(width, height, channels, bytes[pos..pos + expected].to_vec())
}

/// Skip whitespace and `#` comment lines, then return the next token.
fn take_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

fn parse_number(bytes: &[u8], pos: &mut usize) -> Option<u32> {
    let token = take_token(bytes, pos)?;
    std::str::from_utf8(token).ok()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("faunalens-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_is_bitwise_equal() {
        let data: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 11 % 256) as u8).collect();
        let img = ImageBuffer::new(5, 4, 3, data).unwrap();
        let path = temp_path("rt.ppm");
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(img, back);

        let gray = ImageBuffer::new(3, 3, 1, (0..9).collect()).unwrap();
        let path = temp_path("rt.pgm");
        save_image(&gray, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), gray);
    }

    #[test]
    fn truncated_file_is_a_decode_error() {
        let img = ImageBuffer::filled(8, 8, 3, 50).unwrap();
        let path = temp_path("trunc.ppm");
        save_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match load_image(&path) {
            Err(ImagingError::Format { .. }) => {}
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn header_dimensions_are_width_then_height() {
        // A wide landscape frame must load with the header's first number
        // as width, not transposed.
        let img = ImageBuffer::filled(40, 30, 3, 10).unwrap();
        let path = temp_path("orient.ppm");
        save_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n40 30\n255\n"));
        let back = load_image(&path).unwrap();
        assert_eq!((back.width(), back.height()), (40, 30));
    }

    #[test]
    fn comments_and_whitespace_in_header() {
        let mut bytes = b"P5 # comment\n# another\n 4\n2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let path = temp_path("comment.pgm");
        fs::write(&path, &bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (4, 2));
        assert_eq!(img.data(), &[1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn sixteen_bit_maxval_is_rejected() {
        let path = temp_path("deep.pgm");
        fs::write(&path, b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").unwrap();
        match load_image(&path) {
            Err(ImagingError::UnsupportedBitDepth { maxval: 65535, .. }) => {}
            other => panic!("expected UnsupportedBitDepth, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        match load_image(Path::new("/nonexistent/nowhere.ppm")) {
            Err(ImagingError::Io(_)) => {}
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let img = ImageBuffer::filled(2, 2, 1, 0).unwrap();
        assert!(save_image(&img, Path::new("/tmp/x.jpeg")).is_err());
        assert!(load_image(Path::new("/tmp/x.jpeg")).is_err());
    }
}
