use super::Mode;
use crate::{Error, Result};

/// Bits spent on one encoded image.
///
/// Header bytes are not counted; only codeword indices and the sparse
/// weight map contribute to `total_bits` and `bpp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitReport {
    /// Fixed-width index planes: `u * v * sum_k floor(log2 n_k)`.
    pub index_bits: u64,
    /// Size of the deflated index planes, when the post-pass is enabled.
    pub compressed_index_bits: Option<u64>,
    pub weight_bits: u64,
    /// Index bits actually used (compressed if available) plus weight bits.
    pub total_bits: u64,
    pub bpp: f64,
}

impl BitReport {
    /// The index bit count that enters `total_bits`.
    pub fn chosen_index_bits(&self) -> u64 {
        self.compressed_index_bits.unwrap_or(self.index_bits)
    }

    /// `index_bits / compressed_index_bits`, if compressed.
    pub fn compression_ratio(&self) -> Option<f64> {
        self.compressed_index_bits.map(|c| self.index_bits as f64 / c as f64)
    }
}

pub(crate) fn floor_log2(n: usize) -> u64 {
    u64::from(n.max(1).ilog2())
}

/// Weight-map bits per super-pixel: `floor(log2 K)` for single-codebook
/// mode, `(16 + floor(log2 K)) * m` for masked mode with `m < K`, and the
/// dense `16 * K` when every weight is kept (the indices are then implicit).
pub fn weight_bits_per_superpixel(books: usize, mode: Mode) -> u64 {
    let selector = floor_log2(books);
    match mode {
        Mode::Single => selector,
        Mode::Masked(m) if m == books => 16 * books as u64,
        Mode::Masked(m) => (16 + selector) * m as u64,
    }
}

/// Bit accounting for a `rows x cols` grid coded against codebooks of the
/// given sizes, for a `width x height` image.
pub fn bit_report(
    rows: usize,
    cols: usize,
    book_sizes: &[usize],
    mode: Mode,
    width: usize,
    height: usize,
    compressed_index_bits: Option<u64>,
) -> Result<BitReport> {
    let books = book_sizes.len();
    if books == 0 || book_sizes.contains(&0) {
        return Err(Error::invalid("bit accounting needs at least one non-empty codebook"));
    }
    if let Mode::Masked(m) = mode {
        if m == 0 || m > books {
            return Err(Error::invalid(format!("m = {m} outside 1..={books}")));
        }
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("image must have non-zero size"));
    }
    let cells = (rows * cols) as u64;
    let index_bits = cells * book_sizes.iter().map(|&n| floor_log2(n)).sum::<u64>();
    let weight_bits = cells * weight_bits_per_superpixel(books, mode);
    let total_bits = compressed_index_bits.unwrap_or(index_bits) + weight_bits;
    Ok(BitReport {
        index_bits,
        compressed_index_bits,
        weight_bits,
        total_bits,
        bpp: total_bits as f64 / (width * height) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_and_single_examples() {
        let r = bit_report(8, 8, &[512; 4], Mode::Masked(2), 64, 64, None).unwrap();
        assert_eq!((r.index_bits, r.weight_bits, r.total_bits), (2304, 2304, 4608));
        assert_eq!(r.bpp, 1.125);

        let s = bit_report(8, 8, &[512; 4], Mode::Single, 64, 64, None).unwrap();
        assert_eq!((s.weight_bits, s.total_bits), (128, 2432));
        assert_eq!(s.bpp, 0.59375);
    }

    #[test]
    fn compressed_bits_replace_naive_bits() {
        let r = bit_report(8, 8, &[512; 4], Mode::Single, 64, 64, Some(1000)).unwrap();
        assert_eq!(r.chosen_index_bits(), 1000);
        assert_eq!(r.total_bits, 1128);
        assert!((r.compression_ratio().unwrap() - 2.304).abs() < 1e-12);
    }

    #[test]
    fn per_superpixel_weight_bits_range() {
        let all: Vec<u64> = std::iter::once(Mode::Single)
            .chain((1..=4).map(Mode::Masked))
            .map(|mode| weight_bits_per_superpixel(4, mode))
            .collect();
        assert_eq!(all, vec![2, 18, 36, 54, 64]);
        assert_eq!(weight_bits_per_superpixel(1, Mode::Single), 0);
        assert_eq!(weight_bits_per_superpixel(1, Mode::Masked(1)), 16);
        assert_eq!(weight_bits_per_superpixel(8, Mode::Masked(8)), 128);
        assert_eq!(floor_log2(1024), 10);
        assert_eq!(floor_log2(1023), 9);
    }

    #[test]
    fn weight_bits_grow_with_m() {
        for k in [1usize, 2, 4, 8] {
            let single = weight_bits_per_superpixel(k, Mode::Single);
            let mut prev = single;
            for m in 1..k {
                let b = weight_bits_per_superpixel(k, Mode::Masked(m));
                assert!(b > prev);
                prev = b;
            }
            let dense = weight_bits_per_superpixel(k, Mode::Masked(k));
            assert!(dense > single);
            // with 8 books, 7 indexed weights (133 bits) cost more than 8 dense ones
            assert_eq!(dense > prev, k <= 4, "k = {k}");
        }
    }

    #[test]
    fn rejects_bad_mode() {
        assert!(bit_report(1, 1, &[2; 2], Mode::Masked(3), 1, 1, None).is_err());
        assert!(bit_report(1, 1, &[2; 2], Mode::Masked(0), 1, 1, None).is_err());
        assert!(bit_report(1, 1, &[], Mode::Single, 1, 1, None).is_err());
    }
}
