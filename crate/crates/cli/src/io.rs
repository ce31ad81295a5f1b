//! Raster input and output.
//!
//! Label maps are written as 8-bit indexed-color PNG files whose palette
//! index equals the label. The palette is [`PALETTE`] repeated.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{ImageDecoder, ImageReader};
use ndarray::{Array2, ArrayView2};

use crate::config::Intensity;
use crate::error::CliError;

/// Label colors: black background, then high-contrast hues.
pub const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [70, 240, 240],
    [245, 130, 48],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
    [128, 0, 0],
    [128, 128, 128],
    [255, 255, 255],
];

/// Header information of an input raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    /// `(rows, columns)`
    pub dims: (usize, usize),
    /// Color channels, alpha excluded.
    pub channels: usize,
}

fn open_reader(path: &Path) -> Result<ImageReader<BufReader<File>>, CliError> {
    ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| CliError::io(path, e))
}

pub fn probe_image(path: &Path) -> Result<Probe, CliError> {
    let decoder = open_reader(path)?
        .into_decoder()
        .map_err(|e| CliError::io(path, e))?;
    let (w, h) = decoder.dimensions();
    let ct = decoder.color_type();
    let channels = ct.channel_count() as usize - usize::from(ct.has_alpha());
    Ok(Probe {
        dims: (h as usize, w as usize),
        channels,
    })
}

/// Channels of one image as `(rows, columns)` arrays.
pub fn load_channels(
    path: &Path,
    intensity: Intensity,
    grayscale: bool,
) -> Result<Vec<Array2<f64>>, CliError> {
    let img = open_reader(path)?
        .decode()
        .map_err(|e| CliError::io(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color().has_color() && !grayscale;
    let wide = img.color().bytes_per_pixel() / img.color().channel_count() > 1;

    let (samples, max, nc): (Vec<f64>, f64, usize) = match (wide, color) {
        (false, false) => (to_f64(img.to_luma8().into_raw()), 255.0, 1),
        (false, true) => (to_f64(img.to_rgb8().into_raw()), 255.0, 3),
        (true, false) => (to_f64(img.to_luma16().into_raw()), 65535.0, 1),
        (true, true) => (to_f64(img.to_rgb16().into_raw()), 65535.0, 3),
    };
    let scale = match intensity {
        Intensity::Unit => 1.0 / max,
        Intensity::Raw => 1.0,
    };
    Ok((0..nc)
        .map(|c| Array2::from_shape_fn((h, w), |(r, col)| samples[(r * w + col) * nc + c] * scale))
        .collect())
}

fn to_f64<T: Into<f64> + Copy>(v: Vec<T>) -> Vec<f64> {
    v.into_iter().map(Into::into).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn encoder<'a>(
    path: &Path,
    dims: (usize, usize),
) -> Result<png::Encoder<'a, BufWriter<File>>, CliError> {
    let mut enc = png::Encoder::new(create(path)?, dims.1 as u32, dims.0 as u32);
    enc.set_depth(png::BitDepth::Eight);
    Ok(enc)
}

fn finish(
    path: &Path,
    enc: png::Encoder<'_, BufWriter<File>>,
    data: &[u8],
) -> Result<(), CliError> {
    let mut writer = enc.write_header().map_err(|e| CliError::io(path, e))?;
    writer
        .write_image_data(data)
        .map_err(|e| CliError::io(path, e))?;
    writer.finish().map_err(|e| CliError::io(path, e))
}

/// 8-bit grayscale PNG of `round(255 · clamp(v, 0, 1))`.
pub fn write_mask(path: &Path, mask: ArrayView2<f64>) -> Result<(), CliError> {
    let data: Vec<u8> = mask
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut enc = encoder(path, mask.dim())?;
    enc.set_color(png::ColorType::Grayscale);
    finish(path, enc, &data)
}

/// Indexed-color PNG, one palette index per label.
pub fn write_labels(path: &Path, labels: &Array2<u16>) -> Result<(), CliError> {
    let data = labels
        .iter()
        .map(|&l| {
            u8::try_from(l)
                .map_err(|_| CliError::Config(format!("label {l} exceeds the 8-bit palette")))
        })
        .collect::<Result<Vec<u8>, _>>()?;
    let palette: Vec<u8> = (0..256).flat_map(|i| PALETTE[i % PALETTE.len()]).collect();
    let mut enc = encoder(path, labels.dim())?;
    enc.set_color(png::ColorType::Indexed);
    enc.set_palette(palette);
    finish(path, enc, &data)
}

fn label_reader(path: &Path) -> Result<png::Reader<BufReader<File>>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let reader = dec.read_info().map_err(|e| CliError::io(path, e))?;
    match reader.info().color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => Ok(reader),
        other => Err(CliError::Config(format!(
            "{}: ground truth must be a grayscale or indexed-color PNG, found {other:?}",
            path.display()
        ))),
    }
}

/// `(rows, columns)` of a label PNG.
pub fn probe_labels(path: &Path) -> Result<(usize, usize), CliError> {
    let reader = label_reader(path)?;
    let info = reader.info();
    Ok((info.height as usize, info.width as usize))
}

/// Reads stored sample values (palette indices for indexed images) and
/// maps them through `values` if given.
pub fn read_labels(path: &Path, values: Option<&[u16]>) -> Result<Array2<u16>, CliError> {
    let mut reader = label_reader(path)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CliError::io(path, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| CliError::io(path, e))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let depth = frame.bit_depth as usize;
    let stride = frame.line_size;
    let sample = |r: usize, c: usize| -> u16 {
        let row = &buf[r * stride..(r + 1) * stride];
        match depth {
            16 => u16::from_be_bytes([row[2 * c], row[2 * c + 1]]),
            8 => row[c] as u16,
            d => {
                let per_byte = 8 / d;
                let byte = row[c / per_byte];
                let shift = 8 - d * (c % per_byte + 1);
                ((byte >> shift) & ((1 << d) - 1) as u8) as u16
            }
        }
    };
    let raw = Array2::from_shape_fn((h, w), |(r, c)| sample(r, c));
    match values {
        None => Ok(raw),
        Some(values) => {
            let mut unknown = None;
            let mapped = raw.mapv(|v| match values.iter().position(|&x| x == v) {
                Some(i) => i as u16,
                None => {
                    unknown.get_or_insert(v);
                    0
                }
            });
            match unknown {
                Some(v) => Err(CliError::Config(format!(
                    "{}: stored value {v} is not listed in evaluation.values",
                    path.display()
                ))),
                None => Ok(mapped),
            }
        }
    }
}
