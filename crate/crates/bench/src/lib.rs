//! Fixtures shared by the codec benchmarks.

use msvr::codebook::TrainConfig;
use msvr::codec::Model;
use msvr::{EmbedConfig, Image, Transform};

/// A deterministic `w x h` RGB image with smooth gradients and fine texture.
pub fn test_image(w: usize, h: usize) -> Image {
    let bytes: Vec<u8> = (0..w * h * 3)
        .map(|i| {
            let (x, y, c) = ((i / 3) % w, (i / 3) / w, i % 3);
            let smooth = (x + 2 * y + 60 * c) as f64 * 255.0 / (3 * w + 120) as f64;
            let texture = ((x * 7 + y * 13) % 23) as f64;
            (smooth + texture).min(255.0) as u8
        })
        .collect();
    Image::from_u8(w, h, 3, &bytes).expect("valid image")
}

/// A model trained on two test images (1984 super-pixels at f = 8).
pub fn test_model(books: usize, size: usize, patch: usize) -> Model {
    let corpus = vec![test_image(256, 256), test_image(192, 320)];
    let embed = EmbedConfig::new(patch, Transform::Flatten).expect("valid patch size");
    Model::train(&corpus, embed, &TrainConfig::new(books, size, 0), None).expect("training succeeds")
}
