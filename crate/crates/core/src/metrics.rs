//! Distortion metrics and rate-distortion sweeps.
//!
//! Both metrics work on the 8-bit scale (samples times 255). SSIM uses
//! 8x8 uniform windows at every position, population statistics,
//! `C1 = (0.01 * 255)^2`, `C2 = (0.03 * 255)^2`, and BT.601 luma for RGB.

use std::io::Write;

use rayon::prelude::*;

use crate::bitstream::Mode;
use crate::codec::{decode_with, encode, DecodeOptions, EncodeSettings, Model};
use crate::image::Image;
use crate::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 8;
const PEAK: f64 = 255.0;
pub const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
pub const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("image dimensions differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Mean squared error on the 8-bit scale.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a.samples().iter().zip(b.samples()).map(|(x, y)| ((x - y) * PEAK).powi(2)).sum();
    Ok(sum / a.samples().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

/// Luma plane on the 8-bit scale.
pub fn luma(img: &Image) -> Vec<f64> {
    match img.channels() {
        1 => img.samples().iter().map(|s| s * PEAK).collect(),
        _ => img.samples().chunks_exact(3).map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) * PEAK).collect(),
    }
}

// (w + 1) x (h + 1) summed-area table
fn integral(values: impl Iterator<Item = f64>, w: usize, h: usize) -> Vec<f64> {
    let mut table = vec![0.0; (w + 1) * (h + 1)];
    let mut values = values;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values.next().unwrap();
            table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
        }
    }
    table
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let (la, lb) = (luma(a), luma(b));
    let sa = integral(la.iter().copied(), w, h);
    let sb = integral(lb.iter().copied(), w, h);
    let saa = integral(la.iter().map(|v| v * v), w, h);
    let sbb = integral(lb.iter().map(|v| v * v), w, h);
    let sab = integral(la.iter().zip(&lb).map(|(x, y)| x * y), w, h);

    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let stride = w + 1;
    let window_sum = |t: &[f64], x: usize, y: usize| {
        let (x1, y1) = (x + SSIM_WINDOW, y + SSIM_WINDOW);
        t[y1 * stride + x1] - t[y * stride + x1] - t[y1 * stride + x] + t[y * stride + x]
    };
    let (nx, ny) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let total: f64 = (0..ny)
        .map(|y| {
            let mut row = 0.0;
            for x in 0..nx {
                let ma = window_sum(&sa, x, y) / n;
                let mb = window_sum(&sb, x, y) / n;
                let va = (window_sum(&saa, x, y) / n - ma * ma).max(0.0);
                let vb = (window_sum(&sbb, x, y) / n - mb * mb).max(0.0);
                let cov = window_sum(&sab, x, y) / n - ma * mb;
                row += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
            row
        })
        .sum();
    Ok(total / (nx * ny) as f64)
}

/// One (image, setting) operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RDPoint {
    pub image: String,
    pub mode: Mode,
    pub bpp: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Sweep results: one row per (image, setting) in input order, then one
/// corpus-mean row per setting.
#[derive(Debug, Clone, PartialEq)]
pub struct RDTable {
    pub rows: Vec<RDPoint>,
    pub means: Vec<RDPoint>,
    /// The bitstream behind each entry of `rows`.
    pub streams: Vec<Vec<u8>>,
}

pub const MEAN_LABEL: &str = "MEAN";

impl RDTable {
    /// Writes `image,mode,m,bpp,psnr_db,ssim` rows, means last.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["image", "mode", "m", "bpp", "psnr_db", "ssim"]).map_err(io)?;
        for p in self.rows.iter().chain(&self.means) {
            w.write_record([
                p.image.clone(),
                p.mode.name().to_string(),
                p.mode.kept().to_string(),
                p.bpp.to_string(),
                p.psnr.to_string(),
                p.ssim.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }
}

/// Encodes and decodes every image under every setting.
pub fn rd_sweep(corpus: &[(String, Image)], model: &Model, settings: &[EncodeSettings]) -> Result<RDTable> {
    if corpus.is_empty() || settings.is_empty() {
        return Err(Error::invalid("sweep needs at least one image and one setting"));
    }
    let jobs: Vec<(usize, usize)> = (0..corpus.len()).flat_map(|i| (0..settings.len()).map(move |s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, s)| {
            let (name, img) = &corpus[i];
            let setting = &settings[s];
            let (bytes, stats) = encode(img, model, setting)?;
            let out = decode_with(&bytes, model, &DecodeOptions { filler: setting.filler })?.image;
            let point = RDPoint {
                image: name.clone(),
                mode: setting.mode,
                bpp: stats.report.bpp,
                psnr: psnr(img, &out)?,
                ssim: ssim(img, &out)?,
            };
            Ok((point, bytes))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, streams): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let count = corpus.len() as f64;
    let means = settings
        .iter()
        .enumerate()
        .map(|(s, setting)| {
            let pick = rows.iter().skip(s).step_by(settings.len());
            let (mut bpp, mut p, mut q) = (0.0, 0.0, 0.0);
            for r in pick {
                bpp += r.bpp;
                p += r.psnr;
                q += r.ssim;
            }
            RDPoint {
                image: MEAN_LABEL.to_string(),
                mode: setting.mode,
                bpp: bpp / count,
                psnr: p / count,
                ssim: q / count,
            }
        })
        .collect();
    Ok(RDTable { rows, means, streams })
}
