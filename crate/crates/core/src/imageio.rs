//! 8-bit image files to and from planar float tensors.
//!
//! Reads binary PPM (`P6`, maxval 255) and 8-bit RGB/RGBA PNG, writes either
//! depending on the file extension. Files are interleaved RGB; tensors are
//! `3×H×W` in `[0, 1]`. The conversion happens in [`ImageBuffer`] and nowhere
//! else.

use std::io::{self, Read};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    /// Format for writing, from the extension (case-insensitive).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// Interleaved 8-bit RGB pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::size(
                "image_buffer",
                format!("{} bytes for {width}x{height} RGB", pixels.len()),
            ));
        }
        Ok(Self { width, height, pixels })
    }

    /// `v / 255` per channel, planar.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        Tensor::new([3, self.height, self.width], data).expect("3·H·W elements")
    }

    /// Quantizes with `floor(v·255 + 0.5)`. Values outside `[0, 1]` (or NaN)
    /// are a usage error; clamp first.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if c != 3 {
            return Err(Error::shape("save_image", format!("expected 3 channels, got {c}")));
        }
        if let Some((i, v)) = t.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Usage(format!(
                "pixel value {v} at element {i} is outside [0, 1]; clamp before saving"
            )));
        }
        let plane = h * w;
        let mut pixels = vec![0u8; 3 * plane];
        for (i, px) in pixels.chunks_exact_mut(3).enumerate() {
            for (ch, out) in px.iter_mut().enumerate() {
                *out = quantize(t.data()[ch * plane + i]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }
}

/// Round-half-up to a byte; `v` must already lie in `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    ((v as f64) * 255.0 + 0.5).floor() as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(read_image(path)?.to_tensor())
}

pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    write_image(&ImageBuffer::from_tensor(t)?, path)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| with_path(e, path))?;
    decode(&bytes, path)
}

pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        Error::Usage(format!("{}: output extension must be .ppm or .png", path.display()))
    })?;
    let bytes = match format {
        ImageFormat::Ppm => encode_ppm(img),
        ImageFormat::Png => encode_png(img)?,
    };
    std::fs::write(path, bytes).map_err(|e| with_path(e, path))?;
    Ok(())
}

fn with_path(e: io::Error, path: &Path) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Decodes by content; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<ImageBuffer> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes, origin)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes, origin)
    } else {
        Err(parse_error(origin, 0, "unrecognised format (expected binary PPM or PNG)"))
    }
}

fn parse_error(origin: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::ImageParse {
        path: origin.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_ppm(bytes: &[u8], origin: &Path) -> Result<ImageBuffer> {
    let mut pos = 0;
    if !bytes.starts_with(b"P6") {
        return Err(parse_error(origin, 0, "missing P6 magic"));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        skip_space_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            let msg = if pos >= bytes.len() {
                format!("truncated header: missing {name}")
            } else {
                format!("expected {name}, found byte {:#04x}", bytes[pos])
            };
            return Err(parse_error(origin, pos, msg));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ASCII digits");
        fields[k] = text
            .parse()
            .map_err(|_| parse_error(origin, start, format!("{name} {text} is too large")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(parse_error(origin, pos, format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(parse_error(origin, pos, "zero image dimension"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_error(origin, pos, "expected one whitespace byte after maxval"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| parse_error(origin, pos, "image dimensions overflow"))?;
    let available = bytes.len() - pos;
    if available < need {
        return Err(parse_error(
            origin,
            bytes.len(),
            format!("truncated pixel data: {need} bytes expected, {available} present"),
        ));
    }
    ImageBuffer::new(width, height, bytes[pos..pos + need].to_vec())
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b if b.is_ascii_whitespace() => *pos += 1,
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_io)?;
        writer.write_image_data(&img.pixels).map_err(png_io)?;
        writer.finish().map_err(png_io)?;
    }
    Ok(out)
}

fn png_io(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(e) => Error::Io(e),
        other => Error::Io(io::Error::new(io::ErrorKind::Other, other.to_string())),
    }
}

/// Tracks how far the decoder has read, for error offsets.
struct Counting<'a> {
    inner: &'a [u8],
    pos: usize,
}

impl Read for Counting<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = (&self.inner[self.pos..]).read(buf)?;
        self.pos += n;
        Ok(n)
    }
}

pub fn decode_png(bytes: &[u8], origin: &Path) -> Result<ImageBuffer> {
    // IHDR layout: signature (8), chunk length (4), type (4), width (4),
    // height (4), bit depth at 24, colour type at 25.
    if bytes.len() >= 26 {
        let depth = bytes[24];
        if depth != 8 {
            return Err(parse_error(origin, 24, format!("unsupported PNG bit depth {depth} (only 8)")));
        }
        let color = bytes[25];
        if color != 2 && color != 6 {
            return Err(parse_error(
                origin,
                25,
                format!("unsupported PNG colour type {color} (only RGB and RGBA)"),
            ));
        }
    }
    let mut reader = Counting { inner: bytes, pos: 0 };
    let result = (|| {
        let decoder = png::Decoder::new(&mut reader);
        let mut r = decoder.read_info()?;
        let mut buf = vec![0; r.output_buffer_size()];
        let info = r.next_frame(&mut buf)?;
        buf.truncate(info.buffer_size());
        Ok::<_, png::DecodingError>((info, buf))
    })();
    let (info, buf) = result.map_err(|e| parse_error(origin, reader.pos, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let pixels = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        other => return Err(parse_error(origin, 25, format!("unsupported PNG colour type {other:?}"))),
    };
    ImageBuffer::new(w, h, pixels)
}

/// Path labelled for errors on in-memory data.
pub fn memory_origin() -> PathBuf {
    PathBuf::from("<memory>")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> PathBuf {
        memory_origin()
    }

    #[test]
    fn single_red_pixel() {
        let img = decode(b"P6\n1 1\n255\n\xff\x00\x00", &origin()).unwrap();
        assert_eq!(img.to_tensor().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalization() {
        let img = decode(b"P6 2 1 255 \x00\x00\x00\x80\x80\x80", &origin()).unwrap();
        let t = img.to_tensor();
        for c in 0..3 {
            assert!((t.channel(c)[1] - 0.50196).abs() < 1e-5);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03", &origin()).unwrap();
        assert_eq!(img.pixels, [1, 2, 3]);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
    }

    #[test]
    fn ppm_header_is_exact() {
        let img = ImageBuffer::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(encode_ppm(&img), b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06");
    }

    #[test]
    fn truncated_pixels_report_offset() {
        let err = decode(b"P6\n2 2\n255\n\x00\x00\x00", &origin()).unwrap_err();
        assert!(matches!(err, Error::ImageParse { offset: 14, .. }), "{err}");
    }

    #[test]
    fn maxval_other_than_255_rejected() {
        let err = decode(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", &origin()).unwrap_err();
        assert!(matches!(err, Error::ImageParse { offset: 12, .. }), "{err}");
    }

    #[test]
    fn unknown_magic_rejected() {
        let err = decode(b"P3\n1 1\n255\n0 0 0", &origin()).unwrap_err();
        assert!(matches!(err, Error::ImageParse { offset: 0, .. }));
    }

    #[test]
    fn out_of_range_is_usage_error() {
        let t = Tensor::new([3, 1, 1], vec![0.0, 1.5, 0.0]).unwrap();
        assert!(matches!(ImageBuffer::from_tensor(&t), Err(Error::Usage(_))));
        let t = Tensor::new([3, 1, 1], vec![f32::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(ImageBuffer::from_tensor(&t), Err(Error::Usage(_))));
    }

    #[test]
    fn png_roundtrip_and_rgba() {
        let img = ImageBuffer::new(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let bytes = encode_png(&img).unwrap();
        assert_eq!(decode(&bytes, &origin()).unwrap(), img);

        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[9, 8, 7, 6]).unwrap();
        }
        assert_eq!(decode(&out, &origin()).unwrap().pixels, [9, 8, 7]);
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0; 6]).unwrap();
        }
        let err = decode(&out, &origin()).unwrap_err();
        assert!(matches!(err, Error::ImageParse { offset: 24, .. }), "{err}");
    }
}
