//! Grayscale images, synthetic corruption, rendering of networks and error metrics.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gridops::{Boundary, Field, Grid};
use crate::netgrad::{self, NetworkSpec, ParamVector};
use crate::rng::{self, Stream};

/// Row-major intensities in `[0, 1]`; row 0 is the top of the picture.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Image {
    /// Values are clamped into `[0, 1]`.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, actual: values.len() });
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Image { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// The image on `[0,1]^2`: grid axis 0 runs over rows, axis 1 over columns.
    pub fn to_field(&self, bc: Boundary) -> Result<Field> {
        let grid = Grid::unit_square(self.height, self.width, bc)?;
        Field::new(grid, self.values.clone())
    }

    /// A 2D field as an image (a 1D field becomes a single row), clamped to `[0, 1]`.
    pub fn from_field(field: &Field) -> Result<Self> {
        let (height, width) = match field.grid().dim() {
            1 => (1, field.len()),
            _ => (field.grid().axis(0).nodes, field.grid().axis(1).nodes),
        };
        Image::new(width, height, field.values().to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
            return parse_pgm(&bytes);
        }
        let img = image::load_from_memory(&bytes)?;
        let color = img.color();
        if color.has_color() {
            return Err(Error::Unsupported(format!("{} is not a grayscale image", path.display())));
        }
        let luma = img.into_luma16();
        let (w, h) = luma.dimensions();
        let values = luma.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        Image::new(w as usize, h as usize, values)
    }

    /// Format from the extension: `.pgm` writes 16-bit binary PGM, `.png` 16-bit PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pgm") => {
                let mut w = BufWriter::new(fs::File::create(path)?);
                write_pgm(&mut w, self.width, self.height, &self.values, 65535)?;
                w.flush()?;
                Ok(())
            }
            Some("png") => {
                let data: Vec<u16> = self.values.iter().map(|&v| quantize(v, 65535) as u16).collect();
                let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width as u32, self.height as u32, data)
                    .expect("buffer size matches dimensions");
                buf.save(path)?;
                Ok(())
            }
            _ => Err(Error::Unsupported(format!("unknown image extension for {}", path.display()))),
        }
    }
}

fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

/// Binary PGM (P5) of values in `[0, 1]`; 8-bit if `maxval < 256`, else 16-bit big-endian.
pub fn write_pgm(mut w: impl Write, width: usize, height: usize, values: &[f64], maxval: u32) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch { expected: width * height, actual: values.len() });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::invalid(format!("PGM maxval {maxval} out of range")));
    }
    write!(w, "P5\n{width} {height}\n{maxval}\n")?;
    let mut data = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let q = quantize(v, maxval);
        if maxval < 256 {
            data.push(q as u8);
        } else {
            data.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    w.write_all(&data)?;
    Ok(())
}

fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in &mut header {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let values: Vec<f64> = if bytes[1] == b'2' {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| Error::Format("PGM body is not text".into()))?;
        let v: Vec<f64> = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| t.parse::<u32>().map(|x| x as f64 / scale))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format("malformed PGM sample".into()))?;
        v
    } else {
        pos += 1; // single whitespace after maxval
        let bpp = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(pos..pos + n * bpp).ok_or_else(|| Error::Format("truncated PGM".into()))?;
        if bpp == 1 {
            body.iter().map(|&b| b as f64 / scale).collect()
        } else {
            body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
        }
    };
    if values.len() != n {
        return Err(Error::Format("truncated PGM".into()));
    }
    Image::new(width, height, values)
}

/// Gaussian noise samples `sigma * N(0,1)`, one per pixel, from the seed's noise stream.
pub fn gaussian_noise(len: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = rng::stream(seed, Stream::GaussianNoise);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    let noise = gaussian_noise(img.values.len(), sigma, seed)?;
    let values = img.values.iter().zip(noise).map(|(v, n)| v + n).collect();
    Image::new(img.width, img.height, values)
}

/// Each pixel becomes 0 with probability `s/2`, 1 with probability `s/2`.
pub fn add_salt_pepper(img: &Image, s: f64, seed: u64) -> Result<Image> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid(format!("salt-and-pepper probability must lie in [0, 1), got {s}")));
    }
    let mut rng = rng::stream(seed, Stream::SaltPepper);
    let values = img
        .values
        .iter()
        .map(|&v| {
            let u: f64 = rng.random();
            if u < s / 2.0 {
                0.0
            } else if u < s {
                1.0
            } else {
                v
            }
        })
        .collect();
    Image::new(img.width, img.height, values)
}

/// Gaussian noise, clamp, then salt-and-pepper.
pub fn corrupt(img: &Image, sigma: f64, s: f64, seed: u64) -> Result<Image> {
    add_salt_pepper(&add_gaussian_noise(img, sigma, seed)?, s, seed)
}

/// Evaluates the network on the `factor`-times refined lattice of `grid`.
pub fn render_fine(net: &NetworkSpec, theta: &ParamVector, grid: &Grid, factor: usize) -> Result<Field> {
    let fine = grid.refine(factor)?;
    let y = netgrad::forward(net, theta, fine.nodes().view())?;
    Field::new(fine, y.into_raw_vec_and_offset().0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `(1/N) sum |u - v|`
    pub mean_l1: f64,
    /// `sqrt(w sum (u - v)^2)`
    pub l2: f64,
}

pub fn metrics(u: &Field, v: &Field) -> Result<Metrics> {
    u.grid().ensure_same(v.grid())?;
    let n = u.len() as f64;
    let l1: f64 = u.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).sum();
    let sq: f64 = u.values().iter().zip(v.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Metrics { mean_l1: l1 / n, l2: (u.grid().weight() * sq).sqrt() })
}
