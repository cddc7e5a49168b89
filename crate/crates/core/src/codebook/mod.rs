//! Basis codebooks and exact nearest-codeword quantization.
//!
//! Distances are squared Euclidean, accumulated in `f64` in coordinate order.
//! Ties always resolve to the lowest codeword index.

mod file;
mod train;

pub use file::{read_codebooks, write_codebooks, CODEBOOK_MAGIC, CODEBOOK_VERSION};
pub use train::{train_codebooks, TrainConfig};

use rayon::prelude::*;

use crate::latent::{LatentGrid, QuantizedGrid};
use crate::{Error, Result};

/// `n` codewords of dimension `dim`, stored codeword-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    codewords: Vec<f32>,
}

impl Codebook {
    pub fn new(dim: usize, codewords: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("codeword dimension must be non-zero"));
        }
        if codewords.is_empty() || !codewords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form a whole number of {dim}-dimensional codewords",
                codewords.len()
            )));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codewords must be finite"));
        }
        Ok(Codebook { dim, codewords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of codewords.
    pub fn len(&self) -> usize {
        self.codewords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn codeword(&self, index: usize) -> &[f32] {
        &self.codewords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn codewords(&self) -> std::slice::ChunksExact<'_, f32> {
        self.codewords.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.codewords
    }

    /// Index and squared distance of the codeword closest to `y`.
    pub fn nearest(&self, y: &[f64]) -> Result<(usize, f64)> {
        if y.len() != self.dim {
            return Err(Error::invalid(format!("vector has dimension {}, codebook has {}", y.len(), self.dim)));
        }
        Ok(self.nearest_unchecked(y))
    }

    pub(crate) fn nearest_unchecked(&self, y: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.codewords().enumerate() {
            let d = sq_dist_f32(y, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[inline]
pub(crate) fn sq_dist_f32(a: &[f64], b: &[f32]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - f64::from(*y);
        acc += d * d;
    }
    acc
}

/// Index of the codeword in `book` closest to `y`, and its squared distance.
pub fn nearest_codeword(book: &Codebook, y: &[f64]) -> Result<(usize, f64)> {
    book.nearest(y)
}

/// The `K` basis codebooks. `K` and every codebook size are powers of two so
/// that fixed-width fields address them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisCodebooks {
    books: Vec<Codebook>,
}

impl BasisCodebooks {
    pub fn new(books: Vec<Codebook>) -> Result<Self> {
        if books.is_empty() || !books.len().is_power_of_two() {
            return Err(Error::invalid(format!("number of codebooks must be a power of two, got {}", books.len())));
        }
        if books.len() > 128 {
            return Err(Error::invalid("at most 128 codebooks are supported"));
        }
        let dim = books[0].dim();
        for (k, b) in books.iter().enumerate() {
            if b.dim() != dim {
                return Err(Error::invalid(format!("codebook {k} has dimension {}, expected {dim}", b.dim())));
            }
            if !b.len().is_power_of_two() || b.len() > 1 << 16 {
                return Err(Error::invalid(format!(
                    "codebook {k} size {} must be a power of two no larger than 65536",
                    b.len()
                )));
            }
        }
        Ok(BasisCodebooks { books })
    }

    /// Number of codebooks, `K`.
    pub fn count(&self) -> usize {
        self.books.len()
    }

    pub fn dim(&self) -> usize {
        self.books[0].dim()
    }

    pub fn books(&self) -> &[Codebook] {
        &self.books
    }

    pub fn book(&self, k: usize) -> &Codebook {
        &self.books[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.books.iter().map(Codebook::len).collect()
    }
}

/// One codeword index per super-pixel for a single codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexPlane {
    rows: usize,
    cols: usize,
    indices: Vec<u32>,
}

impl IndexPlane {
    pub fn new(rows: usize, cols: usize, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != rows * cols {
            return Err(Error::invalid(format!(
                "index plane {rows}x{cols} needs {} indices, got {}",
                rows * cols,
                indices.len()
            )));
        }
        Ok(IndexPlane { rows, cols, indices })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Per-super-pixel nearest indices and squared distances.
pub(crate) fn quantize_with_errors(book: &Codebook, grid: &LatentGrid) -> Result<(IndexPlane, Vec<f64>)> {
    if grid.dim() != book.dim() {
        return Err(Error::invalid(format!(
            "latent dimension {} does not match codebook dimension {}",
            grid.dim(),
            book.dim()
        )));
    }
    let (indices, errors): (Vec<u32>, Vec<f64>) = grid
        .as_slice()
        .par_chunks(grid.dim())
        .map(|y| {
            let (i, d) = book.nearest_unchecked(y);
            (i as u32, d)
        })
        .unzip();
    Ok((IndexPlane { rows: grid.rows(), cols: grid.cols(), indices }, errors))
}

pub fn quantize_plane(book: &Codebook, grid: &LatentGrid) -> Result<IndexPlane> {
    quantize_with_errors(book, grid).map(|(plane, _)| plane)
}

/// Looks up every index of `plane` in `book`.
pub fn retrieve_plane(book: &Codebook, plane: &IndexPlane) -> Result<QuantizedGrid> {
    let n = book.len();
    let mut data = Vec::with_capacity(plane.indices.len() * book.dim());
    for &i in &plane.indices {
        let i = i as usize;
        if i >= n {
            return Err(Error::corrupt(format!("codeword index {i} out of range for codebook of {n}")));
        }
        data.extend(book.codeword(i).iter().map(|&v| f64::from(v)));
    }
    Ok(LatentGrid::from_parts(plane.rows, plane.cols, book.dim(), data))
}
