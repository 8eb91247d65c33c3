//! Binary PPM (`P6`, maxval 255) reading and writing.
//!
//! Bytes map to `b / 255`; writing rounds `v·255` half away from zero, so a
//! quantized image survives a round trip bit for bit.

use blockvit_core::image::{level_to_value, value_to_level};
use blockvit_core::Image;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpmError {
    #[error("unsupported format: expected magic P6, found {0:?}")]
    BadMagic(String),
    #[error("unsupported maxval {0}: only 255 is accepted")]
    BadMaxval(u32),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("PPM stores 3 channels, image has {0}")]
    Channels(usize),
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

// Whitespace-separated header fields; `#` starts a comment that runs to the
// end of the line. Exactly one whitespace byte separates maxval from data.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
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
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_header(bytes: &[u8]) -> Result<Header, PpmError> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    if magic != b"P6" {
        return Err(PpmError::BadMagic(String::from_utf8_lossy(magic).into_owned()));
    }
    let mut pos = 2;
    let mut field = |name: &str| -> Result<u32, PpmError> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| PpmError::BadHeader(format!("missing {name}")))?;
        tok.parse::<u32>()
            .map_err(|_| PpmError::BadHeader(format!("{name} is not a number: {tok:?}")))
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::BadHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(PpmError::BadMaxval(maxval));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok(Header {
            width,
            height,
            maxval,
            data_start: pos + 1,
        }),
        _ => Err(PpmError::BadHeader("missing whitespace after maxval".into())),
    }
}

pub fn read_ppm(bytes: &[u8]) -> Result<Image, PpmError> {
    let h = parse_header(bytes)?;
    debug_assert_eq!(h.maxval, 255);
    let n = h.width * h.height * 3;
    let data = &bytes[h.data_start..];
    if data.len() < n {
        return Err(PpmError::Truncated {
            expected: n,
            got: data.len(),
        });
    }
    // interleaved RGB to planar C×H×W
    let plane = h.width * h.height;
    let mut px = vec![0.0f32; n];
    for (i, rgb) in data[..n].chunks_exact(3).enumerate() {
        for c in 0..3 {
            px[c * plane + i] = level_to_value(rgb[c]);
        }
    }
    Ok(Image::new(h.width, h.height, 3, px).expect("dimensions checked above"))
}

pub fn write_ppm(img: &Image) -> Result<Vec<u8>, PpmError> {
    if img.channels() != 3 {
        return Err(PpmError::Channels(img.channels()));
    }
    let (w, h) = (img.width(), img.height());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    let plane = w * h;
    let src = img.data();
    for i in 0..plane {
        for c in 0..3 {
            out.push(value_to_level(src[c * plane + i]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_pixel() {
        let img = read_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!(img.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn red_then_blue() {
        let img = read_ppm(b"P6 2 1 255\n\xff\x00\x00\x00\x00\xff").unwrap();
        assert_eq!((img.get(0, 0, 0), img.get(1, 0, 0), img.get(2, 0, 0)), (1.0, 0.0, 0.0));
        assert_eq!((img.get(0, 0, 1), img.get(1, 0, 1), img.get(2, 0, 1)), (0.0, 0.0, 1.0));
    }

    #[test]
    fn comments_in_header() {
        let img = read_ppm(b"P6\n# made by hand\n1 # width\n1\n255\n\x00\x80\xff").unwrap();
        assert_eq!(img.to_levels(), vec![0, 128, 255]);
    }

    #[test]
    fn distinct_errors() {
        assert_eq!(read_ppm(b"P5\n1 1\n255\n\x00"), Err(PpmError::BadMagic("P5".into())));
        assert_eq!(read_ppm(b"P6\n1 1\n65535\n\x00\x00"), Err(PpmError::BadMaxval(65535)));
        assert_eq!(
            read_ppm(b"P6\n2 1\n255\n\x00\x00\x00"),
            Err(PpmError::Truncated { expected: 6, got: 3 })
        );
        assert!(matches!(read_ppm(b"P6\n1\n"), Err(PpmError::BadHeader(_))));
        assert!(matches!(read_ppm(b""), Err(PpmError::BadMagic(_))));
    }

    #[test]
    fn half_rounds_up() {
        let img = Image::filled(2, 2, 3, 0.5).unwrap();
        let bytes = write_ppm(&img).unwrap();
        assert!(bytes[bytes.len() - 12..].iter().all(|&b| b == 128));
    }

    #[test]
    fn grayscale_is_rejected() {
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        assert_eq!(write_ppm(&img), Err(PpmError::Channels(1)));
    }
}
