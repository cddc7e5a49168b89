//! The encoded-image container.
//!
//! ```text
//! "MSVR" | version u8 (=1) | w u32le | h u32le | c u8 | f u8 | transform u8
//!        | mode u8 (0 masked, 1 single) | m u8 | K u8 | log2 n_k u8 x K
//!        | compression flag u8
//!        | compressed: length u32le, deflate payload | raw: packed planes
//!        | weight payload
//! ```
//!
//! Raw planes and the weight payload form one continuous MSB-first bit
//! sequence, zero-padded to a byte only at the very end, so the payload
//! carries exactly the bits counted by [`bit_report`]. With compression the
//! weight payload starts on the byte after the deflate block.
//!
//! Masked payload: per super-pixel, `m` times `[floor(log2 K)`-bit book index,
//! 16-bit binary16 weight]`; when `m = K` the book indices are implicit and
//! only the `K` weights are written. Single payload: one `floor(log2 K)`-bit
//! book index per super-pixel.

mod bits;
mod compress;
mod report;
mod weight16;

pub use bits::{pack_uints, unpack_uints, BitReader, BitWriter};
pub use compress::{compress_index_planes, decompress_index_planes};
pub use report::{bit_report, weight_bits_per_superpixel, BitReport};
pub use weight16::{dequantize_weight16, quantize_weight16, round_weight16};

use crate::codebook::IndexPlane;
use crate::latent::Transform;
use crate::{Error, Result};

pub const STREAM_MAGIC: [u8; 4] = *b"MSVR";
pub const STREAM_VERSION: u8 = 1;

/// How the weight map is transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Keep the `m` largest-magnitude weights per super-pixel.
    Masked(usize),
    /// One codebook per super-pixel with implicit weight 1.
    Single,
}

impl Mode {
    /// Weights kept per super-pixel.
    pub fn kept(self) -> usize {
        match self {
            Mode::Masked(m) => m,
            Mode::Single => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Masked(_) => "masked",
            Mode::Single => "single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub patch_size: u8,
    pub transform: Transform,
    pub mode: Mode,
    /// `log2 n_k` for each of the `K` codebooks.
    pub log2_sizes: Vec<u8>,
    pub compress_indices: bool,
}

impl Header {
    pub fn books(&self) -> usize {
        self.log2_sizes.len()
    }

    pub fn book_sizes(&self) -> Vec<usize> {
        self.log2_sizes.iter().map(|&b| 1usize << b).collect()
    }

    /// Super-pixel grid `(rows, cols)`.
    pub fn grid_size(&self) -> (usize, usize) {
        let f = u32::from(self.patch_size.max(1));
        (self.height.div_ceil(f) as usize, self.width.div_ceil(f) as usize)
    }

    fn selector_bits(&self) -> u32 {
        self.books().max(1).ilog2()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("image size must be non-zero".into());
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(format!("unsupported channel count {}", self.channels));
        }
        if self.patch_size == 0 {
            return Err("patch size must be non-zero".into());
        }
        let k = self.books();
        if k == 0 || !k.is_power_of_two() || k > 128 {
            return Err(format!("codebook count {k} must be a power of two <= 128"));
        }
        if let Some(b) = self.log2_sizes.iter().find(|&&b| b > 16) {
            return Err(format!("codebook of 2^{b} codewords is too large"));
        }
        if let Mode::Masked(m) = self.mode {
            if m == 0 || m > k {
                return Err(format!("m = {m} outside 1..={k}"));
            }
        }
        Ok(())
    }
}

/// One transmitted weight: codebook index plus binary16 code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodedWeight {
    pub book: u8,
    pub code: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightPayload {
    /// `m` entries per super-pixel, book indices increasing within each.
    Masked(Vec<CodedWeight>),
    /// Selected codebook per super-pixel.
    Single(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub header: Header,
    pub planes: Vec<IndexPlane>,
    pub weights: WeightPayload,
}

/// What a serialized stream spent, measured while writing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamStats {
    pub header_bytes: usize,
    /// Packed plane bits, or eight times the deflate block length.
    pub index_bits: u64,
    pub weight_bits: u64,
    pub total_bytes: usize,
}

impl EncodedImage {
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(Error::InvalidArgument)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let h = &self.header;
        h.validate()?;
        let (rows, cols) = h.grid_size();
        let k = h.books();
        if self.planes.len() != k {
            return Err(format!("{} index planes for {k} codebooks", self.planes.len()));
        }
        for (plane, &bits) in self.planes.iter().zip(&h.log2_sizes) {
            if (plane.rows(), plane.cols()) != (rows, cols) {
                return Err("index plane does not match the grid size".into());
            }
            if plane.indices().iter().any(|&i| u64::from(i) >> bits != 0) {
                return Err("codeword index out of range".into());
            }
        }
        let cells = rows * cols;
        match (&self.weights, h.mode) {
            (WeightPayload::Masked(entries), Mode::Masked(m)) => {
                if entries.len() != cells * m {
                    return Err("masked weight payload has the wrong length".into());
                }
                for row in entries.chunks_exact(m) {
                    if row.iter().any(|e| usize::from(e.book) >= k) {
                        return Err("weight entry names a missing codebook".into());
                    }
                    if row.windows(2).any(|p| p[0].book >= p[1].book) {
                        return Err("weight entries must have increasing codebook indices".into());
                    }
                    if row.iter().any(|e| !dequantize_weight16(e.code).is_finite()) {
                        return Err("weight code is not finite".into());
                    }
                }
            }
            (WeightPayload::Single(sel), Mode::Single) => {
                if sel.len() != cells {
                    return Err("single-codebook payload has the wrong length".into());
                }
                if sel.iter().any(|&b| usize::from(b) >= k) {
                    return Err("selector names a missing codebook".into());
                }
            }
            _ => return Err("weight payload does not match the header mode".into()),
        }
        Ok(())
    }

    /// Bit accounting for this image; compresses the planes when flagged.
    pub fn bit_report(&self) -> Result<BitReport> {
        self.validate()?;
        let h = &self.header;
        let (rows, cols) = h.grid_size();
        let compressed = if h.compress_indices {
            Some(compress_index_planes(&self.planes, &h.log2_sizes)?.len() as u64 * 8)
        } else {
            None
        };
        bit_report(rows, cols, &h.book_sizes(), h.mode, h.width as usize, h.height as usize, compressed)
    }
}

fn write_weights(w: &mut BitWriter, enc: &EncodedImage) {
    let sel = enc.header.selector_bits();
    match &enc.weights {
        WeightPayload::Masked(entries) => {
            let dense = enc.header.mode.kept() == enc.header.books();
            for e in entries {
                if !dense {
                    w.write(u32::from(e.book), sel);
                }
                w.write(u32::from(e.code), 16);
            }
        }
        WeightPayload::Single(books) => {
            for &b in books {
                w.write(u32::from(b), sel);
            }
        }
    }
}

pub fn serialize(enc: &EncodedImage) -> Result<Vec<u8>> {
    serialize_with_stats(enc).map(|(bytes, _)| bytes)
}

pub fn serialize_with_stats(enc: &EncodedImage) -> Result<(Vec<u8>, StreamStats)> {
    enc.validate()?;
    let h = &enc.header;
    let mut out = Vec::new();
    out.extend_from_slice(&STREAM_MAGIC);
    out.push(STREAM_VERSION);
    out.extend_from_slice(&h.width.to_le_bytes());
    out.extend_from_slice(&h.height.to_le_bytes());
    out.push(h.channels);
    out.push(h.patch_size);
    out.push(h.transform.code());
    out.push(match h.mode {
        Mode::Masked(_) => 0,
        Mode::Single => 1,
    });
    out.push(h.mode.kept() as u8);
    out.push(h.books() as u8);
    out.extend_from_slice(&h.log2_sizes);
    out.push(u8::from(h.compress_indices));
    let header_bytes = out.len();

    let mut w = BitWriter::new();
    let index_bits = if h.compress_indices {
        let data = compress_index_planes(&enc.planes, &h.log2_sizes)?;
        let len = u32::try_from(data.len()).map_err(|_| Error::invalid("index planes too large"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&data);
        data.len() as u64 * 8
    } else {
        for (plane, &bits) in enc.planes.iter().zip(&h.log2_sizes) {
            for &i in plane.indices() {
                w.write(i, u32::from(bits));
            }
        }
        w.bits_written()
    };
    write_weights(&mut w, enc);
    let weight_bits = w.bits_written() - if h.compress_indices { 0 } else { index_bits };
    out.extend_from_slice(&w.finish());

    let stats = StreamStats { header_bytes, index_bits, weight_bits, total_bytes: out.len() };
    Ok((out, stats))
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::corrupt("stream is truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_header(cur: &mut ByteCursor<'_>) -> Result<Header> {
    let width = cur.u32()?;
    let height = cur.u32()?;
    let channels = cur.u8()?;
    let patch_size = cur.u8()?;
    let transform_code = cur.u8()?;
    let transform = Transform::from_code(transform_code)
        .ok_or_else(|| Error::corrupt(format!("unknown transform {transform_code}")))?;
    let mode_code = cur.u8()?;
    let m = cur.u8()?;
    let mode = match mode_code {
        0 => Mode::Masked(usize::from(m)),
        1 if m == 1 => Mode::Single,
        1 => return Err(Error::corrupt("single-codebook stream must keep one weight")),
        _ => return Err(Error::corrupt(format!("unknown mode {mode_code}"))),
    };
    let k = cur.u8()?;
    let log2_sizes = cur.take(usize::from(k))?.to_vec();
    let compress_indices = match cur.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::corrupt(format!("bad compression flag {other}"))),
    };
    let header = Header { width, height, channels, patch_size, transform, mode, log2_sizes, compress_indices };
    header.validate().map_err(Error::CorruptStream)?;
    Ok(header)
}

fn read_weights(r: &mut BitReader<'_>, h: &Header, cells: usize) -> Result<WeightPayload> {
    let sel = h.selector_bits();
    Ok(match h.mode {
        Mode::Masked(m) => {
            let dense = m == h.books();
            let mut entries = Vec::with_capacity(cells * m);
            for i in 0..cells * m {
                let book = if dense { (i % m) as u8 } else { r.read(sel)? as u8 };
                let code = r.read(16)? as u16;
                entries.push(CodedWeight { book, code });
            }
            WeightPayload::Masked(entries)
        }
        Mode::Single => WeightPayload::Single((0..cells).map(|_| r.read(sel).map(|b| b as u8)).collect::<Result<_>>()?),
    })
}

pub fn deserialize(bytes: &[u8]) -> Result<EncodedImage> {
    if bytes.len() < 4 || bytes[..4] != STREAM_MAGIC {
        return Err(Error::NotABitstream);
    }
    let mut cur = ByteCursor { bytes, pos: 4 };
    let version = cur.u8()?;
    if version != STREAM_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header = read_header(&mut cur)?;
    let (rows, cols) = header.grid_size();
    let cells = rows as u128 * cols as u128;
    let weight_bits = cells * u128::from(weight_bits_per_superpixel(header.books(), header.mode));

    let (planes, rest) = if header.compress_indices {
        let len = cur.u32()? as usize;
        let data = cur.take(len)?;
        let rest = &cur.bytes[cur.pos..];
        if weight_bits > rest.len() as u128 * 8 {
            return Err(Error::corrupt("weight payload is truncated"));
        }
        (Some(decompress_index_planes(data, rows, cols, &header.log2_sizes)?), rest)
    } else {
        let rest = &cur.bytes[cur.pos..];
        let index_bits = cells * header.log2_sizes.iter().map(|&b| u128::from(b)).sum::<u128>();
        if index_bits + weight_bits > rest.len() as u128 * 8 {
            return Err(Error::corrupt("payload is truncated"));
        }
        (None, rest)
    };

    // both size checks above bound `cells` by the stream length
    let cells = cells as usize;
    let mut r = BitReader::new(rest);
    let planes = match planes {
        Some(p) => p,
        None => header
            .log2_sizes
            .iter()
            .map(|&bits| {
                let indices = (0..cells).map(|_| r.read(u32::from(bits))).collect::<Result<Vec<_>>>()?;
                IndexPlane::new(rows, cols, indices)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let weights = read_weights(&mut r, &header, cells)?;
    if r.bytes_consumed() != rest.len() {
        return Err(Error::corrupt("trailing bytes after payload"));
    }
    let enc = EncodedImage { header, planes, weights };
    enc.check().map_err(Error::CorruptStream)?;
    Ok(enc)
}
