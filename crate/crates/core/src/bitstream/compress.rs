//! Lossless deflate post-pass over the index planes.
//!
//! Planes are byte-serialized before compression: each index is split into
//! `ceil(log2 n / 8)` little-endian bytes and the bytes are grouped into
//! byte planes (all low bytes of a plane, then all next bytes), which keeps
//! the mostly-constant high bytes together.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::codebook::IndexPlane;
use crate::{Error, Result};

fn index_bytes(log2_size: u8) -> usize {
    usize::from(log2_size).div_ceil(8)
}

fn serialize_planes(planes: &[IndexPlane], log2_sizes: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for (plane, &bits) in planes.iter().zip(log2_sizes) {
        for byte in 0..index_bytes(bits) {
            out.extend(plane.indices().iter().map(|&i| (i >> (8 * byte)) as u8));
        }
    }
    out
}

/// Deflates the byte-serialized `planes`, where plane `k` indexes a codebook
/// of `2^log2_sizes[k]` codewords.
pub fn compress_index_planes(planes: &[IndexPlane], log2_sizes: &[u8]) -> Result<Vec<u8>> {
    if planes.len() != log2_sizes.len() {
        return Err(Error::invalid("one codebook size is needed per plane"));
    }
    for (plane, &bits) in planes.iter().zip(log2_sizes) {
        if bits > 16 || plane.indices().iter().any(|&i| u64::from(i) >> bits != 0) {
            return Err(Error::invalid("index out of range for its codebook"));
        }
    }
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(&serialize_planes(planes, log2_sizes))?;
    Ok(enc.finish()?)
}

/// Inverse of [`compress_index_planes`] for `rows x cols` planes.
pub fn decompress_index_planes(data: &[u8], rows: usize, cols: usize, log2_sizes: &[u8]) -> Result<Vec<IndexPlane>> {
    let count = rows * cols;
    let expected: usize = log2_sizes.iter().map(|&b| index_bytes(b) * count).sum();
    let mut raw = Vec::with_capacity(expected);
    DeflateDecoder::new(data)
        .take(expected as u64 + 1)
        .read_to_end(&mut raw)
        .map_err(|e| Error::corrupt(format!("index planes do not inflate: {e}")))?;
    if raw.len() != expected {
        return Err(Error::corrupt(format!("inflated index planes hold {} bytes, expected {expected}", raw.len())));
    }
    let mut planes = Vec::with_capacity(log2_sizes.len());
    let mut pos = 0;
    for &bits in log2_sizes {
        let mut indices = vec![0u32; count];
        for byte in 0..index_bytes(bits) {
            for (i, &b) in indices.iter_mut().zip(&raw[pos..pos + count]) {
                *i |= u32::from(b) << (8 * byte);
            }
            pos += count;
        }
        if indices.iter().any(|&i| u64::from(i) >> bits != 0) {
            return Err(Error::corrupt("codeword index out of range"));
        }
        planes.push(IndexPlane::new(rows, cols, indices)?);
    }
    Ok(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_plane_compresses_below_naive() {
        let plane = IndexPlane::new(32, 32, vec![300; 1024]).unwrap();
        let data = compress_index_planes(std::slice::from_ref(&plane), &[9]).unwrap();
        assert!(data.len() * 8 < 1024 * 9);
        assert_eq!(decompress_index_planes(&data, 32, 32, &[9]).unwrap(), vec![plane]);
    }

    #[test]
    fn damaged_data_is_corrupt() {
        let plane = IndexPlane::new(4, 4, (0..16).collect()).unwrap();
        let data = compress_index_planes(&[plane], &[4]).unwrap();
        assert!(matches!(decompress_index_planes(&data, 4, 5, &[4]), Err(Error::CorruptStream(_))));
        assert!(matches!(decompress_index_planes(&[0xFF, 0xFF, 0xFF], 4, 4, &[4]), Err(Error::CorruptStream(_))));
        // a 5-bit index cannot be declared as a 4-bit plane
        let wide = IndexPlane::new(1, 1, vec![17]).unwrap();
        let data = compress_index_planes(&[wide], &[5]).unwrap();
        assert!(matches!(decompress_index_planes(&data, 1, 1, &[4]), Err(Error::CorruptStream(_))));
    }

    proptest! {
        #[test]
        fn lossless(rows in 1usize..10, cols in 1usize..10, sizes in prop::collection::vec(0u8..=16, 1..5), seed in any::<u64>()) {
            let planes: Vec<IndexPlane> = sizes
                .iter()
                .enumerate()
                .map(|(k, &bits)| {
                    let idx = (0..rows * cols)
                        .map(|i| ((seed.wrapping_mul(i as u64 + 1).wrapping_add(k as u64) >> 7) as u32) & ((1u64 << bits) - 1) as u32)
                        .collect();
                    IndexPlane::new(rows, cols, idx).unwrap()
                })
                .collect();
            let data = compress_index_planes(&planes, &sizes).unwrap();
            prop_assert_eq!(decompress_index_planes(&data, rows, cols, &sizes).unwrap(), planes);
        }
    }
}
