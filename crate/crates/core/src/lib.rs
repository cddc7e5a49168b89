//! A vector-quantization image codec with masked adaptive codebook weights.
//!
//! Images are embedded into a grid of super-pixel vectors, quantized against
//! `K` basis codebooks and transmitted as integer index planes plus a sparse
//! weight map that keeps `m` of the `K` combination weights per super-pixel.
//! The decoder rebuilds a degraded latent from the sparse weights, refills a
//! full weight map from it and reconstructs the image.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] and [`latent`]: raster images and the invertible block embedding.
//! * [`codebook`]: codebook training, nearest-codeword quantization, model files.
//! * [`weights`]: weight prediction, top-`m` masking, single-codebook selection,
//!   refilling and the weighted combination.
//! * [`bitstream`]: bit packing, binary16 weights, deflate post-pass, the stream
//!   container and bit accounting.
//! * [`codec`]: encoder and decoder orchestration.
//! * [`metrics`]: PSNR, SSIM and rate-distortion sweeps.

pub mod bitstream;
pub mod codebook;
pub mod codec;
mod error;
pub mod image;
pub mod latent;
pub mod metrics;
pub mod parallel;
pub mod weights;

pub use bitstream::{BitReport, EncodedImage, Mode};
pub use codebook::{BasisCodebooks, Codebook, IndexPlane};
pub use codec::{decode, encode, DecodeOptions, EncodeSettings, EncodeStats, Model};
pub use error::{Error, Result};
pub use image::Image;
pub use latent::{Dims, EmbedConfig, LatentGrid, Transform};
pub use metrics::{psnr, rd_sweep, ssim, RDPoint, RDTable};
pub use weights::{MaskedWeightMap, Temperature, WeightMap};
