//! Per-super-pixel combination weights over the basis codebooks.
//!
//! The predictor scores each codebook by how well it quantizes a super-pixel
//! and turns the scores into a distribution with a temperature softmax over
//! negative squared quantization errors. The decoder-side filler is the same
//! function applied to the degraded latent.

use rayon::prelude::*;

use crate::codebook::{quantize_with_errors, BasisCodebooks};
use crate::latent::{LatentGrid, QuantizedGrid};
use crate::{Error, Result};

/// Softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive and finite, got {tau}")));
        }
        Ok(Temperature(tau))
    }

    /// One tenth of the mean quantization error; `1.0` when that error is zero.
    pub fn from_mean_error(mean_sq_error: f64) -> Self {
        let tau = 0.1 * mean_sq_error;
        if tau > 0.0 && tau.is_finite() {
            Temperature(tau)
        } else {
            Temperature(1.0)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Dense `rows x cols x K` weight map, row-major with `K` weights per super-pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    rows: usize,
    cols: usize,
    books: usize,
    data: Vec<f64>,
}

impl WeightMap {
    pub fn new(rows: usize, cols: usize, books: usize, data: Vec<f64>) -> Result<Self> {
        if books == 0 || data.len() != rows * cols * books {
            return Err(Error::invalid(format!(
                "weight map {rows}x{cols}x{books} needs {} weights, got {}",
                rows * cols * books,
                data.len()
            )));
        }
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(WeightMap { rows, cols, books, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn books(&self) -> usize {
        self.books
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.books..(l + 1) * self.books]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    pub book: usize,
    pub weight: f64,
}

/// `m` (book, weight) pairs per super-pixel, sorted by book index.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedWeightMap {
    rows: usize,
    cols: usize,
    books: usize,
    kept: usize,
    single: bool,
    entries: Vec<WeightEntry>,
}

impl MaskedWeightMap {
    pub fn new(
        rows: usize,
        cols: usize,
        books: usize,
        kept: usize,
        single: bool,
        entries: Vec<WeightEntry>,
    ) -> Result<Self> {
        if kept == 0 || kept > books || (single && kept != 1) {
            return Err(Error::invalid(format!("cannot keep {kept} of {books} weights")));
        }
        if entries.len() != rows * cols * kept {
            return Err(Error::invalid("masked weight map has the wrong number of entries"));
        }
        for row in entries.chunks_exact(kept) {
            if row.iter().any(|e| e.book >= books || !e.weight.is_finite()) {
                return Err(Error::invalid("masked weight entry out of range"));
            }
            if row.windows(2).any(|p| p[0].book >= p[1].book) {
                return Err(Error::invalid("codebook indices must increase within a super-pixel"));
            }
        }
        Ok(MaskedWeightMap { rows, cols, books, kept, single, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn books(&self) -> usize {
        self.books
    }

    /// Entries kept per super-pixel, `m`.
    pub fn kept(&self) -> usize {
        self.kept
    }

    /// Whether this map came from single-codebook selection, whose weights
    /// are implicitly 1 and never transmitted.
    pub fn is_single(&self) -> bool {
        self.single
    }

    pub fn row(&self, l: usize) -> &[WeightEntry] {
        &self.entries[l * self.kept..(l + 1) * self.kept]
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    /// Applies `f` to every kept weight.
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let entries = self.entries.iter().map(|e| WeightEntry { book: e.book, weight: f(e.weight) }).collect();
        MaskedWeightMap::new(self.rows, self.cols, self.books, self.kept, self.single, entries)
    }

    /// Total absolute weight of `full` that this map leaves out.
    pub fn dropped_weight(&self, full: &WeightMap) -> Result<f64> {
        if (full.rows, full.cols, full.books) != (self.rows, self.cols, self.books) {
            return Err(Error::invalid("weight map shapes differ"));
        }
        let mut dropped = 0.0;
        for l in 0..self.rows * self.cols {
            let kept = self.row(l);
            for (k, w) in full.row(l).iter().enumerate() {
                if !kept.iter().any(|e| e.book == k) {
                    dropped += w.abs();
                }
            }
        }
        Ok(dropped)
    }
}

/// Anything that can drive the weighted combination.
pub trait CombineWeights: Sync {
    fn shape(&self) -> (usize, usize, usize);

    /// Calls `f(book, weight)` for every contributing codebook of super-pixel
    /// `l`, in increasing book order.
    fn for_each_term(&self, l: usize, f: impl FnMut(usize, f64));
}

impl CombineWeights for WeightMap {
    fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.books)
    }

    fn for_each_term(&self, l: usize, mut f: impl FnMut(usize, f64)) {
        for (k, &w) in self.row(l).iter().enumerate() {
            f(k, w);
        }
    }
}

impl CombineWeights for MaskedWeightMap {
    fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.books)
    }

    fn for_each_term(&self, l: usize, mut f: impl FnMut(usize, f64)) {
        for e in self.row(l) {
            f(e.book, e.weight);
        }
    }
}

/// Weighted sum of the quantized planes at every super-pixel.
pub fn combine<W: CombineWeights>(weights: &W, planes: &[QuantizedGrid]) -> Result<LatentGrid> {
    let (rows, cols, books) = weights.shape();
    if planes.len() != books {
        return Err(Error::invalid(format!("{} planes for {books} codebooks", planes.len())));
    }
    let dim = planes[0].dim();
    if planes.iter().any(|p| (p.rows(), p.cols(), p.dim()) != (rows, cols, dim)) {
        return Err(Error::invalid("quantized planes do not match the weight map"));
    }
    let mut data = vec![0.0; rows * cols * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(l, out)| {
        weights.for_each_term(l, |k, w| {
            for (o, y) in out.iter_mut().zip(planes[k].vector(l)) {
                *o += w * y;
            }
        });
    });
    Ok(LatentGrid::from_parts(rows, cols, dim, data))
}

fn softmax_row(errors: impl Iterator<Item = f64> + Clone, tau: Temperature, out: &mut [f64]) {
    let min = errors.clone().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (o, e) in out.iter_mut().zip(errors) {
        *o = ((min - e) / tau.0).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Weight map from per-codebook squared quantization errors, `errors[k][l]`.
pub(crate) fn weights_from_errors(rows: usize, cols: usize, errors: &[Vec<f64>], tau: Temperature) -> WeightMap {
    let books = errors.len();
    let mut data = vec![0.0; rows * cols * books];
    data.par_chunks_mut(books).enumerate().for_each(|(l, row)| {
        softmax_row(errors.iter().map(|e| e[l]), tau, row);
    });
    WeightMap { rows, cols, books, data }
}

/// Squared distance from every super-pixel to its nearest codeword in each book.
pub(crate) fn quantization_errors(grid: &LatentGrid, books: &BasisCodebooks) -> Result<Vec<Vec<f64>>> {
    books.books().iter().map(|b| quantize_with_errors(b, grid).map(|(_, e)| e)).collect()
}

/// Softmax over negative per-codebook quantization errors at temperature `tau`.
pub fn predict_weights(grid: &LatentGrid, books: &BasisCodebooks, tau: Temperature) -> Result<WeightMap> {
    let errors = quantization_errors(grid, books)?;
    Ok(weights_from_errors(grid.rows(), grid.cols(), &errors, tau))
}

/// Decoder-side refill of a full weight map from the degraded latent.
pub fn refill_weights(degraded: &LatentGrid, books: &BasisCodebooks, tau: Temperature) -> Result<WeightMap> {
    predict_weights(degraded, books, tau)
}

/// Keeps the `m` largest-magnitude weights of every super-pixel, ties going
/// to the lower codebook index. Kept weights are not renormalised.
pub fn mask_weights(weights: &WeightMap, m: usize) -> Result<MaskedWeightMap> {
    let k = weights.books;
    if m == 0 || m > k {
        return Err(Error::invalid(format!("m = {m} outside 1..={k}")));
    }
    let mut entries = Vec::with_capacity(weights.rows * weights.cols * m);
    let mut order: Vec<usize> = Vec::with_capacity(k);
    for row in weights.data.chunks_exact(k) {
        order.clear();
        order.extend(0..k);
        // stable: equal magnitudes keep ascending index order
        order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()));
        order.truncate(m);
        order.sort_unstable();
        entries.extend(order.iter().map(|&b| WeightEntry { book: b, weight: row[b] }));
    }
    Ok(MaskedWeightMap { rows: weights.rows, cols: weights.cols, books: k, kept: m, single: false, entries })
}

/// One-hot selection of the highest-weight codebook per super-pixel.
pub fn select_single(weights: &WeightMap) -> MaskedWeightMap {
    let entries = weights
        .data
        .chunks_exact(weights.books)
        .map(|row| {
            let mut best = 0;
            for (k, w) in row.iter().enumerate() {
                if *w > row[best] {
                    best = k;
                }
            }
            WeightEntry { book: best, weight: 1.0 }
        })
        .collect();
    MaskedWeightMap { rows: weights.rows, cols: weights.cols, books: weights.books, kept: 1, single: true, entries }
}
