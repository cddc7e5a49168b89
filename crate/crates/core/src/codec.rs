//! Encoder and decoder.
//!
//! Encoder: embed, quantize against every basis codebook, predict weights,
//! mask (or select one codebook), round kept weights to binary16, serialize.
//! Decoder: retrieve the quantized planes, combine them with the received
//! sparse weights into the degraded latent, refill a full weight map from
//! it, combine again and invert the embedding.
//!
//! The encoder runs the decoder's latent pipeline on the exact weights it
//! transmits, so its reported reconstruction matches the decoder bit for bit.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::bitstream::{
    bit_report, dequantize_weight16, deserialize, quantize_weight16, serialize_with_stats, BitReport, CodedWeight,
    EncodedImage, Header, Mode, StreamStats, WeightPayload,
};
use crate::codebook::{
    quantize_with_errors, read_codebooks, retrieve_plane, train_codebooks, write_codebooks, BasisCodebooks, TrainConfig,
};
use crate::image::Image;
use crate::latent::{patchify, unpatchify, Dims, EmbedConfig, LatentGrid, QuantizedGrid, Transform};
use crate::weights::{
    combine, mask_weights, refill_weights, select_single, weights_from_errors, MaskedWeightMap, Temperature,
    WeightEntry,
};
use crate::{Error, Result};

/// Everything encoder and decoder share out of band.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub books: BasisCodebooks,
    pub embed: EmbedConfig,
    pub tau: Temperature,
}

impl Model {
    pub fn new(books: BasisCodebooks, embed: EmbedConfig, tau: Temperature) -> Result<Self> {
        let area = embed.patch_size * embed.patch_size;
        let channels = books.dim() / area;
        if !books.dim().is_multiple_of(area) || (channels != 1 && channels != 3) {
            return Err(Error::invalid(format!(
                "codeword dimension {} does not fit {}x{} patches of 1 or 3 channels",
                books.dim(),
                embed.patch_size,
                embed.patch_size
            )));
        }
        Ok(Model { books, embed, tau })
    }

    /// Image channel count the codebooks were trained for.
    pub fn channels(&self) -> usize {
        self.books.dim() / (self.embed.patch_size * self.embed.patch_size)
    }

    /// Trains codebooks on every patch of `corpus`. Without an explicit
    /// temperature, uses one tenth of the mean squared quantization error of
    /// the training patches, averaged over all codebooks.
    pub fn train(corpus: &[Image], embed: EmbedConfig, cfg: &TrainConfig, tau: Option<Temperature>) -> Result<Self> {
        let first = corpus.first().ok_or_else(|| Error::invalid("training corpus is empty"))?;
        let channels = first.channels();
        let mut data = Vec::new();
        for img in corpus {
            if img.channels() != channels {
                return Err(Error::invalid("training images must share a channel count"));
            }
            data.extend_from_slice(patchify(img, &embed)?.as_slice());
        }
        let dim = embed.dim(channels);
        let books = train_codebooks(&data, dim, cfg)?;
        let tau = match tau {
            Some(t) => t,
            None => {
                let grid = LatentGrid::new(1, data.len() / dim, dim, data)?;
                let mut total = 0.0;
                for book in books.books() {
                    let (_, errors) = quantize_with_errors(book, &grid)?;
                    total += errors.iter().sum::<f64>();
                }
                Temperature::from_mean_error(total / (grid.len() * books.count()) as f64)
            }
        };
        Model::new(books, embed, tau)
    }

    /// Codebook file followed by `patch size u8 | transform u8 | tau f64le`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_codebooks(&self.books, &mut out);
        out.push(self.embed.patch_size as u8);
        out.push(self.embed.transform.code());
        out.extend_from_slice(&self.tau.value().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (books, used) = read_codebooks(bytes)?;
        let tail = &bytes[used..];
        if tail.len() != 10 {
            return Err(Error::corrupt("model file has a malformed trailer"));
        }
        let transform =
            Transform::from_code(tail[1]).ok_or_else(|| Error::corrupt(format!("unknown transform {}", tail[1])))?;
        let embed = EmbedConfig::new(usize::from(tail[0]), transform).map_err(|e| Error::corrupt(e.to_string()))?;
        let tau = Temperature::new(f64::from_le_bytes(tail[2..10].try_into().unwrap()))
            .map_err(|e| Error::corrupt(e.to_string()))?;
        Model::new(books, embed, tau).map_err(|e| Error::corrupt(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_bytes(&std::fs::read(path)?)
    }

    fn check_stream(&self, h: &Header) -> Result<()> {
        let mismatch = |what: &str| Err(Error::IncompatibleModel(what.to_string()));
        if h.books() != self.books.count() {
            return mismatch(&format!("stream uses {} codebooks, model has {}", h.books(), self.books.count()));
        }
        if h.book_sizes() != self.books.sizes() {
            return mismatch("codebook sizes differ");
        }
        if usize::from(h.patch_size) != self.embed.patch_size || h.transform != self.embed.transform {
            return mismatch("embedding configuration differs");
        }
        if usize::from(h.channels) != self.channels() {
            return mismatch("channel count differs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeSettings {
    pub mode: Mode,
    pub compress_indices: bool,
    /// Whether the simulated decoder refills the weight map.
    pub filler: bool,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        EncodeSettings { mode: Mode::Masked(2), compress_indices: true, filler: true }
    }
}

impl EncodeSettings {
    pub fn new(mode: Mode) -> Self {
        EncodeSettings { mode, ..Default::default() }
    }

    /// Single-codebook mode followed by masked `m = 1..=books`.
    pub fn sweep(books: usize) -> Vec<Self> {
        std::iter::once(Mode::Single).chain((1..=books).map(Mode::Masked)).map(EncodeSettings::new).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Refill the weight map; when off, reconstruct from the degraded latent.
    pub filler: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { filler: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub embed: Duration,
    pub quantize: Duration,
    pub weights: Duration,
    pub serialize: Duration,
    pub simulate: Duration,
}

#[derive(Debug, Clone)]
pub struct EncodeStats {
    pub report: BitReport,
    pub stream: StreamStats,
    pub timings: StageTimings,
    /// `||Y~ - Y||`, degraded latent against the embedded input.
    pub degraded_distance: f64,
    /// `||Y^ - Y||`, recovered latent against the embedded input.
    pub recovered_distance: f64,
    /// Total absolute predicted weight left out of the stream.
    pub dropped_weight: f64,
    /// What the decoder will output for this stream.
    pub reconstruction: Image,
}

/// Decoder output together with its intermediate latents.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub image: Image,
    pub degraded: LatentGrid,
    pub recovered: LatentGrid,
}

fn coded(weights: &MaskedWeightMap) -> Result<Vec<CodedWeight>> {
    weights
        .entries()
        .iter()
        .map(|e| Ok(CodedWeight { book: e.book as u8, code: quantize_weight16(e.weight)? }))
        .collect()
}

/// The sparse weight map a decoder sees for `enc`.
fn received_weights(enc: &EncodedImage) -> Result<MaskedWeightMap> {
    let (rows, cols) = enc.header.grid_size();
    let k = enc.header.books();
    match &enc.weights {
        WeightPayload::Masked(entries) => {
            let entries = entries
                .iter()
                .map(|c| WeightEntry { book: usize::from(c.book), weight: dequantize_weight16(c.code) })
                .collect();
            MaskedWeightMap::new(rows, cols, k, enc.header.mode.kept(), false, entries)
        }
        WeightPayload::Single(books) => {
            let entries = books.iter().map(|&b| WeightEntry { book: usize::from(b), weight: 1.0 }).collect();
            MaskedWeightMap::new(rows, cols, k, 1, true, entries)
        }
    }
}

/// Degraded and recovered latents from the quantized planes and the received weights.
fn reconstruct_latent(
    planes: &[QuantizedGrid],
    received: &MaskedWeightMap,
    model: &Model,
    filler: bool,
) -> Result<(LatentGrid, LatentGrid)> {
    let degraded = combine(received, planes)?;
    let recovered = if filler {
        let refilled = refill_weights(&degraded, &model.books, model.tau)?;
        combine(&refilled, planes)?
    } else {
        degraded.clone()
    };
    Ok((degraded, recovered))
}

fn check_image(image: &Image, model: &Model) -> Result<()> {
    if image.channels() != model.channels() {
        return Err(Error::invalid(format!(
            "image has {} channels, model expects {}",
            image.channels(),
            model.channels()
        )));
    }
    if image.width() > u32::MAX as usize || image.height() > u32::MAX as usize {
        return Err(Error::invalid("image is too large"));
    }
    Ok(())
}

pub fn encode(image: &Image, model: &Model, settings: &EncodeSettings) -> Result<(Vec<u8>, EncodeStats)> {
    check_image(image, model)?;
    let books = &model.books;
    let k = books.count();
    if let Mode::Masked(m) = settings.mode {
        if m == 0 || m > k {
            return Err(Error::invalid(format!("m = {m} outside 1..={k}")));
        }
    }
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let latent = patchify(image, &model.embed)?;
    timings.embed = t.elapsed();

    let t = Instant::now();
    let (index_planes, errors): (Vec<_>, Vec<_>) =
        books.books().iter().map(|b| quantize_with_errors(b, &latent)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    timings.quantize = t.elapsed();

    let t = Instant::now();
    let full = weights_from_errors(latent.rows(), latent.cols(), &errors, model.tau);
    let (sparse, payload) = match settings.mode {
        Mode::Masked(m) => {
            let sparse = mask_weights(&full, m)?;
            let payload = WeightPayload::Masked(coded(&sparse)?);
            (sparse, payload)
        }
        Mode::Single => {
            let sparse = select_single(&full);
            let payload = WeightPayload::Single(sparse.entries().iter().map(|e| e.book as u8).collect());
            (sparse, payload)
        }
    };
    let dropped_weight = sparse.dropped_weight(&full)?;
    timings.weights = t.elapsed();

    let t = Instant::now();
    let header = Header {
        width: image.width() as u32,
        height: image.height() as u32,
        channels: image.channels() as u8,
        patch_size: model.embed.patch_size as u8,
        transform: model.embed.transform,
        mode: settings.mode,
        log2_sizes: books.sizes().iter().map(|n| n.ilog2() as u8).collect(),
        compress_indices: settings.compress_indices,
    };
    let enc = EncodedImage { header, planes: index_planes, weights: payload };
    let (bytes, stream) = serialize_with_stats(&enc)?;
    let report = bit_report(
        latent.rows(),
        latent.cols(),
        &books.sizes(),
        settings.mode,
        image.width(),
        image.height(),
        settings.compress_indices.then_some(stream.index_bits),
    )?;
    timings.serialize = t.elapsed();

    let t = Instant::now();
    let planes = enc.planes.iter().zip(books.books()).map(|(p, b)| retrieve_plane(b, p)).collect::<Result<Vec<_>>>()?;
    let received = received_weights(&enc)?;
    let (degraded, recovered) = reconstruct_latent(&planes, &received, model, settings.filler)?;
    let reconstruction = unpatchify(&recovered, image.dims(), &model.embed)?;
    timings.simulate = t.elapsed();

    let stats = EncodeStats {
        report,
        stream,
        timings,
        degraded_distance: degraded.distance(&latent)?,
        recovered_distance: recovered.distance(&latent)?,
        dropped_weight,
        reconstruction,
    };
    Ok((bytes, stats))
}

pub fn decode(bytes: &[u8], model: &Model) -> Result<Image> {
    decode_with(bytes, model, &DecodeOptions::default()).map(|d| d.image)
}

pub fn decode_with(bytes: &[u8], model: &Model, opts: &DecodeOptions) -> Result<Decoded> {
    let enc = deserialize(bytes)?;
    model.check_stream(&enc.header)?;
    let planes =
        enc.planes.iter().zip(model.books.books()).map(|(p, b)| retrieve_plane(b, p)).collect::<Result<Vec<_>>>()?;
    let received = received_weights(&enc)?;
    let (degraded, recovered) = reconstruct_latent(&planes, &received, model, opts.filler)?;
    let dims = Dims {
        width: enc.header.width as usize,
        height: enc.header.height as usize,
        channels: usize::from(enc.header.channels),
    };
    let image = unpatchify(&recovered, dims, &model.embed)?;
    Ok(Decoded { image, degraded, recovered })
}

/// Reconstruction from the full weight map at 16 bits per weight with no
/// masking and no refilling: the reference the masked path reduces to at `m = K`.
pub fn reconstruct_unmasked(image: &Image, model: &Model) -> Result<Image> {
    check_image(image, model)?;
    let latent = patchify(image, &model.embed)?;
    let mut planes = Vec::with_capacity(model.books.count());
    let mut errors = Vec::with_capacity(model.books.count());
    for book in model.books.books() {
        let (plane, e) = quantize_with_errors(book, &latent)?;
        planes.push(retrieve_plane(book, &plane)?);
        errors.push(e);
    }
    let full = weights_from_errors(latent.rows(), latent.cols(), &errors, model.tau);
    let rounded =
        full.as_slice().iter().map(|&w| quantize_weight16(w).map(dequantize_weight16)).collect::<Result<Vec<_>>>()?;
    let rounded = crate::weights::WeightMap::new(full.rows(), full.cols(), full.books(), rounded)?;
    unpatchify(&combine(&rounded, &planes)?, image.dims(), &model.embed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Codebook;

    fn textured(w: usize, h: usize, c: usize) -> Image {
        let s = (0..w * h * c)
            .map(|i| {
                let (x, y) = ((i / c) % w, (i / c) / w);
                (((x * 3 + y * 5 + (i % c) * 11) % 17) as f64 / 16.0 * 0.8 + 0.1).clamp(0.0, 1.0)
            })
            .collect();
        Image::new(w, h, c, s).unwrap()
    }

    fn small_model(k: usize, n: usize, f: usize, transform: Transform) -> Model {
        let corpus = vec![textured(32, 24, 3), textured(24, 32, 3)];
        let embed = EmbedConfig::new(f, transform).unwrap();
        Model::train(&corpus, embed, &TrainConfig::new(k, n, 5), None).unwrap()
    }

    #[test]
    fn model_bytes_roundtrip() {
        let model = small_model(2, 4, 4, Transform::Dct);
        let back = Model::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
        let bytes = model.to_bytes();
        assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn decoder_matches_encoder_simulation() {
        let model = small_model(4, 8, 4, Transform::Flatten);
        let img = textured(30, 22, 3);
        for mode in [Mode::Single, Mode::Masked(1), Mode::Masked(3), Mode::Masked(4)] {
            for filler in [true, false] {
                let settings = EncodeSettings { mode, compress_indices: mode == Mode::Masked(3), filler };
                let (bytes, stats) = encode(&img, &model, &settings).unwrap();
                let out = decode_with(&bytes, &model, &DecodeOptions { filler }).unwrap();
                assert_eq!(out.image, stats.reconstruction);
                assert_eq!((out.image.width(), out.image.height()), (30, 22));
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let model = small_model(4, 8, 4, Transform::Dct);
        let img = textured(16, 16, 3);
        let a = encode(&img, &model, &EncodeSettings::default()).unwrap().0;
        let b = encode(&img, &model, &EncodeSettings::default()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn incompatible_model_is_rejected() {
        let k4 = small_model(4, 8, 4, Transform::Flatten);
        let k2 = small_model(2, 8, 4, Transform::Flatten);
        let (bytes, _) = encode(&textured(16, 16, 3), &k4, &EncodeSettings::default()).unwrap();
        assert!(matches!(decode(&bytes, &k2), Err(Error::IncompatibleModel(_))));
        let dct = small_model(4, 8, 4, Transform::Dct);
        assert!(matches!(decode(&bytes, &dct), Err(Error::IncompatibleModel(_))));
    }

    #[test]
    fn encode_rejects_bad_settings() {
        let model = small_model(2, 4, 4, Transform::Flatten);
        let img = textured(8, 8, 3);
        assert!(encode(&img, &model, &EncodeSettings::new(Mode::Masked(3))).is_err());
        assert!(encode(&img, &model, &EncodeSettings::new(Mode::Masked(0))).is_err());
        let gray = Image::filled(8, 8, 1, 0.5).unwrap();
        assert!(encode(&gray, &model, &EncodeSettings::default()).is_err());
    }

    #[test]
    fn lossless_when_codebook_holds_every_patch() {
        // 4 distinct 2x2 patches, one codebook of exactly those patches
        let img =
            Image::from_u8(4, 4, 1, &[0, 10, 200, 210, 20, 30, 220, 230, 40, 50, 90, 91, 60, 70, 92, 93]).unwrap();
        let embed = EmbedConfig::new(2, Transform::Flatten).unwrap();
        let grid = patchify(&img, &embed).unwrap();
        let words = grid.as_slice().iter().map(|&v| v as f32).collect();
        let books = BasisCodebooks::new(vec![Codebook::new(4, words).unwrap()]).unwrap();
        let model = Model::new(books, embed, Temperature::from_mean_error(0.0)).unwrap();
        let (bytes, _) = encode(&img, &model, &EncodeSettings::new(Mode::Masked(1))).unwrap();
        let out = decode(&bytes, &model).unwrap();
        for (a, b) in img.samples().iter().zip(out.samples()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
