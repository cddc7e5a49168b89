//! Codebook file format.
//!
//! ```text
//! "MSVC" | version u8 | K u16 | d u32 | n_1..n_K u32 | codewords f32...
//! ```
//!
//! Integers and floats are little-endian; codewords are written book-major,
//! then codeword-major.

use super::{BasisCodebooks, Codebook};
use crate::{Error, Result};

pub const CODEBOOK_MAGIC: [u8; 4] = *b"MSVC";
pub const CODEBOOK_VERSION: u8 = 1;

pub fn write_codebooks(books: &BasisCodebooks, out: &mut Vec<u8>) {
    out.extend_from_slice(&CODEBOOK_MAGIC);
    out.push(CODEBOOK_VERSION);
    out.extend_from_slice(&(books.count() as u16).to_le_bytes());
    out.extend_from_slice(&(books.dim() as u32).to_le_bytes());
    for b in books.books() {
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    }
    for b in books.books() {
        for v in b.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::corrupt("codebook file is truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a codebook file, returning the books and the number of bytes read.
pub fn read_codebooks(bytes: &[u8]) -> Result<(BasisCodebooks, usize)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).ok() != Some(&CODEBOOK_MAGIC[..]) {
        return Err(Error::corrupt("not a codebook file"));
    }
    let version = cur.take(1)?[0];
    if version != CODEBOOK_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
    let dim = cur.u32()? as usize;
    if count == 0 || dim == 0 {
        return Err(Error::corrupt("codebook file declares no codebooks or zero dimension"));
    }
    let sizes = (0..count).map(|_| cur.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
    let mut books = Vec::with_capacity(count);
    for n in sizes {
        let len = n.checked_mul(dim).and_then(|l| l.checked_mul(4));
        let raw = cur.take(len.ok_or_else(|| Error::corrupt("codebook size overflows"))?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        books.push(Codebook::new(dim, values).map_err(|e| Error::corrupt(e.to_string()))?);
    }
    let books = BasisCodebooks::new(books).map_err(|e| Error::corrupt(e.to_string()))?;
    Ok((books, cur.pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BasisCodebooks {
        let a = Codebook::new(2, vec![0.0, 1.0, -2.5, 3.25]).unwrap();
        let b = Codebook::new(2, vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0]).unwrap();
        BasisCodebooks::new(vec![a, b]).unwrap()
    }

    #[test]
    fn layout_is_exact() {
        let mut out = Vec::new();
        write_codebooks(&sample(), &mut out);
        assert_eq!(&out[..4], b"MSVC");
        assert_eq!(out[4], 1);
        assert_eq!(&out[5..7], &[2, 0]);
        assert_eq!(&out[7..11], &[2, 0, 0, 0]);
        assert_eq!(&out[11..19], &[2, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(&out[19..23], &0.0f32.to_le_bytes());
        assert_eq!(&out[27..31], &(-2.5f32).to_le_bytes());
        assert_eq!(out.len(), 19 + (4 + 8) * 4);
    }

    #[test]
    fn roundtrip_and_trailing_bytes() {
        let mut out = Vec::new();
        write_codebooks(&sample(), &mut out);
        let len = out.len();
        out.extend_from_slice(b"extra");
        let (books, used) = read_codebooks(&out).unwrap();
        assert_eq!(books, sample());
        assert_eq!(used, len);
    }

    #[test]
    fn rejects_damage() {
        let mut out = Vec::new();
        write_codebooks(&sample(), &mut out);
        assert!(matches!(read_codebooks(&out[..out.len() - 1]), Err(Error::CorruptStream(_))));
        assert!(matches!(read_codebooks(b"MSVR"), Err(Error::CorruptStream(_))));
        let mut v = out.clone();
        v[4] = 9;
        assert!(matches!(read_codebooks(&v), Err(Error::UnsupportedVersion(9))));
        let mut k3 = out.clone();
        k3[5] = 3;
        assert!(read_codebooks(&k3).is_err());
    }
}
