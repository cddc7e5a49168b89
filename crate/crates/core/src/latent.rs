//! Invertible block embedding of images into a grid of super-pixel vectors.
//!
//! Each `f x f` block of the (edge-padded) image becomes one `f * f * c`
//! dimensional vector, either copied verbatim ([`Transform::Flatten`]) or
//! passed through a separable orthonormal 2-D DCT-II per channel
//! ([`Transform::Dct`]). Both embeddings are exactly invertible, so every bit
//! of reconstruction error downstream comes from quantization and masking.

use rayon::prelude::*;

use crate::image::Image;
use crate::{Error, Result};

/// Pixel dimensions of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Flatten,
    Dct,
}

impl Transform {
    pub fn code(self) -> u8 {
        match self {
            Transform::Flatten => 0,
            Transform::Dct => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Transform::Flatten),
            1 => Some(Transform::Dct),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedConfig {
    pub patch_size: usize,
    pub transform: Transform,
}

impl EmbedConfig {
    pub fn new(patch_size: usize, transform: Transform) -> Result<Self> {
        if patch_size == 0 || patch_size > u8::MAX as usize {
            return Err(Error::invalid(format!("patch size {patch_size} must be in 1..=255")));
        }
        Ok(EmbedConfig { patch_size, transform })
    }

    /// Latent vector dimension for images with `channels` channels.
    pub fn dim(&self, channels: usize) -> usize {
        self.patch_size * self.patch_size * channels
    }

    /// Super-pixel grid size `(rows, cols)` for an image of the given size.
    pub fn grid_size(&self, width: usize, height: usize) -> (usize, usize) {
        (height.div_ceil(self.patch_size), width.div_ceil(self.patch_size))
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig { patch_size: 8, transform: Transform::Flatten }
    }
}

/// A `rows x cols` grid of `dim`-dimensional vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f64>,
}

/// A grid whose vectors are all codewords of one codebook.
pub type QuantizedGrid = LatentGrid;

impl LatentGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::invalid("latent grid dimensions must be non-zero"));
        }
        if data.len() != rows * cols * dim {
            return Err(Error::invalid(format!(
                "latent grid {rows}x{cols}x{dim} needs {} values, got {}",
                rows * cols * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent entries must be finite"));
        }
        Ok(LatentGrid { rows, cols, dim, data })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols * dim);
        LatentGrid { rows, cols, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of super-pixels.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vector(&self, l: usize) -> &[f64] {
        &self.data[l * self.dim..(l + 1) * self.dim]
    }

    pub fn vectors(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Euclidean (Frobenius) distance to another grid of the same shape.
    pub fn distance(&self, other: &LatentGrid) -> Result<f64> {
        if (self.rows, self.cols, self.dim) != (other.rows, other.cols, other.dim) {
            return Err(Error::invalid("latent grid shapes differ"));
        }
        let sq: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sq.sqrt())
    }
}

/// Orthonormal DCT-II matrix, `m[k][n]` stored at `k * size + n`.
pub fn dct_matrix(size: usize) -> Vec<f64> {
    let n = size as f64;
    let mut m = vec![0.0; size * size];
    for k in 0..size {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..size {
            m[k * size + i] = scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
        }
    }
    m
}

// Applies `out = T * block * T^T` (forward) or `T^T * block * T` (inverse) to
// one channel of an interleaved f x f x c block.
fn block_dct(block: &mut [f64], t: &[f64], f: usize, c: usize, inverse: bool) {
    let coeff = |k: usize, i: usize| if inverse { t[i * f + k] } else { t[k * f + i] };
    let mut tmp = vec![0.0; f * f];
    for ch in 0..c {
        // rows: tmp[y][p] = sum_x coeff(p, x) * block[y][x]
        for y in 0..f {
            for p in 0..f {
                let mut acc = 0.0;
                for x in 0..f {
                    acc += coeff(p, x) * block[(y * f + x) * c + ch];
                }
                tmp[y * f + p] = acc;
            }
        }
        // columns: block[q][p] = sum_y coeff(q, y) * tmp[y][p]
        for q in 0..f {
            for p in 0..f {
                let mut acc = 0.0;
                for y in 0..f {
                    acc += coeff(q, y) * tmp[y * f + p];
                }
                block[(q * f + p) * c + ch] = acc;
            }
        }
    }
}

/// Embeds `image` into a latent grid, edge-replicating the right and bottom
/// borders when the image size is not a multiple of the patch size.
pub fn patchify(image: &Image, cfg: &EmbedConfig) -> Result<LatentGrid> {
    let f = cfg.patch_size;
    if f == 0 {
        return Err(Error::invalid("patch size must be at least 1"));
    }
    let (w, h, c) = (image.width(), image.height(), image.channels());
    if w == 0 || h == 0 {
        return Err(Error::invalid("cannot embed an empty image"));
    }
    let (rows, cols) = cfg.grid_size(w, h);
    let dim = cfg.dim(c);
    let t = (cfg.transform == Transform::Dct).then(|| dct_matrix(f));

    let mut data = vec![0.0; rows * cols * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(l, block)| {
        let (bu, bv) = (l / cols, l % cols);
        for y in 0..f {
            let sy = (bu * f + y).min(h - 1);
            for x in 0..f {
                let sx = (bv * f + x).min(w - 1);
                for ch in 0..c {
                    block[(y * f + x) * c + ch] = image.sample(sx, sy, ch);
                }
            }
        }
        if let Some(t) = &t {
            block_dct(block, t, f, c, false);
        }
    });
    Ok(LatentGrid::from_parts(rows, cols, dim, data))
}

/// Inverts [`patchify`], cropping to `dims` and clamping samples to `[0, 1]`.
pub fn unpatchify(grid: &LatentGrid, dims: Dims, cfg: &EmbedConfig) -> Result<Image> {
    let f = cfg.patch_size;
    if f == 0 {
        return Err(Error::invalid("patch size must be at least 1"));
    }
    let Dims { width: w, height: h, channels: c } = dims;
    if w == 0 || h == 0 {
        return Err(Error::invalid("cannot reconstruct an empty image"));
    }
    let (rows, cols) = cfg.grid_size(w, h);
    if (grid.rows(), grid.cols(), grid.dim()) != (rows, cols, cfg.dim(c)) {
        return Err(Error::invalid(format!(
            "grid {}x{}x{} does not match {w}x{h}x{c} image with patch size {f}",
            grid.rows(),
            grid.cols(),
            grid.dim()
        )));
    }
    let t = (cfg.transform == Transform::Dct).then(|| dct_matrix(f));

    let mut samples = vec![0.0; w * h * c];
    // One output row of blocks at a time so every sample has exactly one writer.
    samples.par_chunks_mut(w * c * f).enumerate().for_each(|(bu, band)| {
        let band_rows = band.len() / (w * c);
        let mut block = vec![0.0; cfg.dim(c)];
        for bv in 0..cols {
            block.copy_from_slice(grid.vector(bu * cols + bv));
            if let Some(t) = &t {
                block_dct(&mut block, t, f, c, true);
            }
            for y in 0..f.min(band_rows) {
                for x in 0..f {
                    let sx = bv * f + x;
                    if sx >= w {
                        break;
                    }
                    for ch in 0..c {
                        let v = block[(y * f + x) * c + ch];
                        band[(y * w + sx) * c + ch] = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                    }
                }
            }
        }
    });
    Image::new(w, h, c, samples)
}
