use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msvr::Image;

fn msvr(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msvr"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MSVR_THREADS", t),
        None => cmd.env_remove("MSVR_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three small RGB images with smooth structure.
fn write_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for k in 0..3usize {
        let (w, h) = (32, 24);
        let bytes: Vec<u8> = (0..w * h * 3)
            .map(|i| {
                let (x, y, c) = ((i / 3) % w, (i / 3) / w, i % 3);
                ((x * (k + 2) + y * (3 - k) + c * 40) % 256) as u8
            })
            .collect();
        let img = Image::from_u8(w, h, 3, &bytes).unwrap();
        std::fs::write(dir.join(format!("img{k}.ppm")), img.to_pnm_bytes().unwrap()).unwrap();
    }
}

struct Setup {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    model: PathBuf,
}

fn trained() -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let corpus = root.join("corpus");
    write_corpus(&corpus);
    let model = root.join("model.msvc");
    ok(&msvr(
        &[
            "train-codebooks",
            "--corpus",
            s(&corpus),
            "--K",
            "2",
            "--n",
            "8",
            "--f",
            "4",
            "--seed",
            "1",
            "--out",
            s(&model),
        ],
        None,
    ));
    Setup { _tmp: tmp, root, corpus, model }
}

#[test]
fn help_exits_zero() {
    let out = msvr(&["encode", "--help"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--model"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(msvr(&["encode", "--bogus"], None).status.code(), Some(1));
}

#[test]
fn train_encode_decode_eval() {
    let t = trained();
    let input = t.corpus.join("img1.ppm");
    let bits = t.root.join("img1.msvr");
    let recon = t.root.join("img1_rec.ppm");
    let enc = msvr(
        &["encode", "--model", s(&t.model), "--in", s(&input), "--mode", "masked", "--m", "1", "--out", s(&bits)],
        None,
    );
    ok(&enc);
    assert!(String::from_utf8_lossy(&enc.stderr).contains("bpp"));
    ok(&msvr(&["decode", "--model", s(&t.model), "--in", s(&bits), "--out", s(&recon)], None));
    let decoded = Image::read_pnm(&recon).unwrap();
    assert_eq!((decoded.width(), decoded.height(), decoded.channels()), (32, 24, 3));

    let eval = msvr(&["eval", "--orig", s(&input), "--recon", s(&recon)], None);
    ok(&eval);
    let text = String::from_utf8(eval.stdout).unwrap();
    let psnr: f64 = text.lines().find_map(|l| l.strip_prefix("psnr_db=")).unwrap().parse().unwrap();
    let ssim: f64 = text.lines().find_map(|l| l.strip_prefix("ssim=")).unwrap().parse().unwrap();
    assert!(psnr.is_finite() && psnr >= 0.0);
    assert!((-1.0..=1.0).contains(&ssim));
}

#[test]
fn single_mode_and_uncompressed_indices() {
    let t = trained();
    let input = t.corpus.join("img0.ppm");
    let a = t.root.join("a.msvr");
    let b = t.root.join("b.msvr");
    ok(&msvr(&["encode", "--model", s(&t.model), "--in", s(&input), "--mode", "single", "--out", s(&a)], None));
    ok(&msvr(
        &[
            "encode",
            "--model",
            s(&t.model),
            "--in",
            s(&input),
            "--mode",
            "single",
            "--no-compress-indices",
            "--out",
            s(&b),
        ],
        None,
    ));
    // 8 x 6 cells, 2 planes of 3 bits, 1 selector bit each
    assert_eq!(std::fs::read(&b).unwrap().len(), 22 + (48 * 7usize).div_ceil(8));
    let out = t.root.join("b.ppm");
    ok(&msvr(&["decode", "--model", s(&t.model), "--in", s(&b), "--out", s(&out), "--no-filler"], None));
    assert!(out.is_file());
}

#[test]
fn bad_m_is_a_usage_error() {
    let t = trained();
    let out = t.root.join("x.msvr");
    let res = msvr(
        &["encode", "--model", s(&t.model), "--in", s(&t.corpus.join("img0.ppm")), "--m", "3", "--out", s(&out)],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn missing_input_exits_two_without_output() {
    let t = trained();
    let out = t.root.join("missing.msvr");
    let res = msvr(&["encode", "--model", s(&t.model), "--in", s(&t.root.join("nope.ppm")), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn corrupt_stream_exits_two() {
    let t = trained();
    let bad = t.root.join("bad.msvr");
    std::fs::write(&bad, b"not a stream").unwrap();
    let out = t.root.join("bad.ppm");
    let res = msvr(&["decode", "--model", s(&t.model), "--in", s(&bad), "--out", s(&out)], None);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let t = trained();
    let model2 = t.root.join("model2.msvc");
    ok(&msvr(
        &[
            "train-codebooks",
            "--corpus",
            s(&t.corpus),
            "--K",
            "2",
            "--n",
            "8",
            "--f",
            "4",
            "--seed",
            "1",
            "--out",
            s(&model2),
        ],
        Some("1"),
    ));
    assert_eq!(std::fs::read(&t.model).unwrap(), std::fs::read(&model2).unwrap());

    let input = t.corpus.join("img2.ppm");
    let mut outputs = Vec::new();
    for (i, threads) in [Some("1"), Some("4"), None].into_iter().enumerate() {
        let bits = t.root.join(format!("run{i}.msvr"));
        let img = t.root.join(format!("run{i}.ppm"));
        ok(&msvr(&["encode", "--model", s(&t.model), "--in", s(&input), "--out", s(&bits)], threads));
        ok(&msvr(&["decode", "--model", s(&t.model), "--in", s(&bits), "--out", s(&img)], threads));
        outputs.push((std::fs::read(&bits).unwrap(), std::fs::read(&img).unwrap()));
    }
    assert!(outputs.windows(2).all(|p| p[0] == p[1]));
}

#[test]
fn sweep_writes_csv_independent_of_threads() {
    let t = trained();
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let csv = t.root.join(format!("rd{threads}.csv"));
        ok(&msvr(&["sweep", "--model", s(&t.model), "--corpus", s(&t.corpus), "--out", s(&csv)], Some(threads)));
        csvs.push(std::fs::read_to_string(&csv).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let lines: Vec<&str> = csvs[0].lines().collect();
    assert_eq!(lines[0], "image,mode,m,bpp,psnr_db,ssim");
    // 3 images x (single, m=1, m=2) plus 3 mean rows
    assert_eq!(lines.len(), 1 + 9 + 3);
    assert!(lines[1].starts_with("img0,single,1,"));
    assert!(lines.last().unwrap().starts_with("MEAN,masked,2,"));
}

#[test]
fn eval_rejects_mismatched_images() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.pgm");
    let b = tmp.path().join("b.pgm");
    std::fs::write(&a, Image::filled(4, 4, 1, 0.5).unwrap().to_pnm_bytes().unwrap()).unwrap();
    std::fs::write(&b, Image::filled(5, 4, 1, 0.5).unwrap().to_pnm_bytes().unwrap()).unwrap();
    let res = msvr(&["eval", "--orig", s(&a), "--recon", s(&b)], None);
    assert_ne!(res.status.code(), Some(0));
}
