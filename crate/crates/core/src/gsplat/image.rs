//! Float RGB image buffer plus PPM (P6) and PNG i/o.

use super::GsplatError;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

/// Row-major H×W×3 image with channels in [0, 1] (not clamped internally).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Image::new(width, height);
        for px in img.data.chunks_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * 3, "image buffer size");
        Image {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Self {
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Image {
            width,
            height,
            data,
        }
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), GsplatError> {
        let io_err = |e: std::io::Error| GsplatError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        write!(w, "P6\n{} {}\n255\n", self.width, self.height).map_err(io_err)?;
        w.write_all(&self.to_rgb8()).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn read_ppm(path: &Path) -> Result<Self, GsplatError> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| GsplatError::Io {
                path: path.display().to_string(),
                what: e.to_string(),
            })?;
        parse_ppm(&bytes).map_err(|(offset, what)| GsplatError::Parse {
            path: path.display().to_string(),
            offset,
            what,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), GsplatError> {
        let io_err = |what: String| GsplatError::Io {
            path: path.display().to_string(),
            what,
        };
        let file = File::create(path).map_err(|e| io_err(e.to_string()))?;
        let mut encoder =
            png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| io_err(e.to_string()))?;
        writer
            .write_image_data(&self.to_rgb8())
            .map_err(|e| io_err(e.to_string()))
    }

    pub fn read_png(path: &Path) -> Result<Self, GsplatError> {
        let io_err = |what: String| GsplatError::Io {
            path: path.display().to_string(),
            what,
        };
        let file = File::open(path).map_err(|e| io_err(e.to_string()))?;
        let decoder = png::Decoder::new(std::io::BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| io_err(e.to_string()))?;
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| io_err(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(io_err(format!(
                "unsupported PNG layout {:?}/{:?}, expected 8-bit RGB",
                info.color_type, info.bit_depth
            )));
        }
        Ok(Image::from_rgb8(
            info.width as usize,
            info.height as usize,
            &buf[..info.buffer_size()],
        ))
    }

    /// Load by extension: `.png` or anything PPM otherwise.
    pub fn read(path: &Path) -> Result<Self, GsplatError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Image::read_png(path),
            _ => Image::read_ppm(path),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), GsplatError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => self.write_png(path),
            _ => self.write_ppm(path),
        }
    }
}

fn parse_ppm(bytes: &[u8]) -> Result<Image, (usize, String)> {
    let mut pos = 0usize;
    let expect_token = |pos: &mut usize| -> Result<String, (usize, String)> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err((start, "unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = expect_token(&mut pos)?;
    if magic != "P6" {
        return Err((0, format!("expected P6 magic, got {magic:?}")));
    }
    let width: usize = expect_token(&mut pos)?
        .parse()
        .map_err(|e| (pos, format!("bad width: {e}")))?;
    let height: usize = expect_token(&mut pos)?
        .parse()
        .map_err(|e| (pos, format!("bad height: {e}")))?;
    let maxval: usize = expect_token(&mut pos)?
        .parse()
        .map_err(|e| (pos, format!("bad maxval: {e}")))?;
    if maxval != 255 {
        return Err((pos, format!("only maxval 255 supported, got {maxval}")));
    }
    // exactly one whitespace byte separates header and payload
    pos += 1;
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err((
            bytes.len(),
            format!(
                "truncated pixel data: need {need} bytes, have {}",
                bytes.len() - pos
            ),
        ));
    }
    Ok(Image::from_rgb8(width, height, &bytes[pos..pos + need]))
}
