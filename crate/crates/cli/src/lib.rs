//! Command-line front end: `train-codebooks`, `encode`, `decode`, `eval`, `sweep`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on I/O, format or stream
//! errors. Output files are written to a temporary sibling and renamed into
//! place, so a failed command never leaves a partial file behind.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use msvr::codebook::TrainConfig;
use msvr::codec::{decode_with, encode, DecodeOptions, EncodeSettings, Model};
use msvr::{parallel, psnr, rd_sweep, ssim, EmbedConfig, Error, Image, Mode, Temperature, Transform};

#[derive(Debug, Parser)]
#[command(name = "msvr", version, about = "Masked adaptive-codebook image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train basis codebooks on a directory of PPM/PGM images
    TrainCodebooks(TrainArgs),
    /// Encode an image into a bitstream
    Encode(EncodeArgs),
    /// Decode a bitstream into an image
    Decode(DecodeArgs),
    /// Print PSNR and SSIM between two images
    Eval(EvalArgs),
    /// Encode and decode a corpus at every masking setting and write a CSV
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TransformArg {
    Flatten,
    Dct,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Masked,
    Single,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of basis codebooks (power of two)
    #[arg(long = "K", default_value_t = 4)]
    books: usize,
    /// Codewords per codebook (power of two)
    #[arg(long = "n", default_value_t = 512)]
    size: usize,
    /// Patch size in pixels
    #[arg(long = "f", default_value_t = 8)]
    patch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TransformArg::Flatten)]
    transform: TransformArg,
    /// Weight softmax temperature; defaults to a tenth of the mean quantization error
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Masked)]
    mode: ModeArg,
    /// Weights kept per super-pixel in masked mode
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long)]
    no_compress_indices: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reconstruct from the degraded latent without refilling the weights
    #[arg(long)]
    no_filler: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    orig: PathBuf,
    #[arg(long)]
    recon: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_compress_indices: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path) -> CmdResult {
    if !path.is_file() {
        return Err(Failure::Runtime(format!("{}: no such file", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path) -> CmdResult {
    if !path.is_dir() {
        return Err(Failure::Runtime(format!("{}: no such directory", path.display())));
    }
    Ok(())
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(())
}

/// PPM/PGM files of `dir`, sorted by file name.
fn read_corpus(dir: &Path) -> Result<Vec<(String, Image)>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm" | "pnm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Runtime(format!("{}: no PPM/PGM images found", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let img = Image::read_pnm(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            Ok((name, img))
        })
        .collect()
}

fn read_model(path: &Path) -> Result<Model, Failure> {
    require_file(path)?;
    Model::read(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn train(args: TrainArgs) -> CmdResult {
    require_dir(&args.corpus)?;
    let transform = match args.transform {
        TransformArg::Flatten => Transform::Flatten,
        TransformArg::Dct => Transform::Dct,
    };
    let embed = EmbedConfig::new(args.patch, transform)?;
    let tau = args.tau.map(Temperature::new).transpose()?;
    let cfg = TrainConfig::new(args.books, args.size, args.seed);
    let corpus: Vec<Image> = read_corpus(&args.corpus)?.into_iter().map(|(_, img)| img).collect();
    let model = Model::train(&corpus, embed, &cfg, tau)?;
    write_atomic(&args.out, &model.to_bytes())?;
    eprintln!(
        "trained {} codebooks of {} codewords (d = {}) on {} images, tau = {}",
        model.books.count(),
        args.size,
        model.books.dim(),
        corpus.len(),
        model.tau.value()
    );
    Ok(())
}

fn encode_cmd(args: EncodeArgs) -> CmdResult {
    let model = read_model(&args.model)?;
    require_file(&args.input)?;
    let img = Image::read_pnm(&args.input)?;
    let mode = match args.mode {
        ModeArg::Masked => Mode::Masked(args.m),
        ModeArg::Single => Mode::Single,
    };
    let settings = EncodeSettings { mode, compress_indices: !args.no_compress_indices, filler: true };
    let (bytes, stats) = encode(&img, &model, &settings)?;
    write_atomic(&args.out, &bytes)?;
    let r = &stats.report;
    eprintln!(
        "b_c = {} naive{}, b_w = {}, B = {} bits, bpp = {:.5}, header = {} bytes, stream = {} bytes",
        r.index_bits,
        r.compressed_index_bits.map(|c| format!(" / {c} compressed")).unwrap_or_default(),
        r.weight_bits,
        r.total_bits,
        r.bpp,
        stats.stream.header_bytes,
        bytes.len()
    );
    Ok(())
}

fn decode_cmd(args: DecodeArgs) -> CmdResult {
    let model = read_model(&args.model)?;
    require_file(&args.input)?;
    let bytes = std::fs::read(&args.input)?;
    let decoded = decode_with(&bytes, &model, &DecodeOptions { filler: !args.no_filler })?;
    write_atomic(&args.out, &decoded.image.to_pnm_bytes()?)?;
    Ok(())
}

fn eval(args: EvalArgs) -> CmdResult {
    require_file(&args.orig)?;
    require_file(&args.recon)?;
    let a = Image::read_pnm(&args.orig)?;
    let b = Image::read_pnm(&args.recon)?;
    println!("psnr_db={}", psnr(&a, &b)?);
    println!("ssim={}", ssim(&a, &b)?);
    Ok(())
}

fn sweep(args: SweepArgs) -> CmdResult {
    let model = read_model(&args.model)?;
    require_dir(&args.corpus)?;
    let corpus = read_corpus(&args.corpus)?;
    let settings: Vec<EncodeSettings> = EncodeSettings::sweep(model.books.count())
        .into_iter()
        .map(|s| EncodeSettings { compress_indices: !args.no_compress_indices, ..s })
        .collect();
    let table = rd_sweep(&corpus, &model, &settings)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_atomic(&args.out, &csv)?;
    for p in &table.means {
        eprintln!("{:>6} m={} bpp={:.4} psnr={:.3} ssim={:.4}", p.mode.name(), p.mode.kept(), p.bpp, p.psnr, p.ssim);
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = parallel::install(|| match cli.command {
        Command::TrainCodebooks(a) => train(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    });
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
