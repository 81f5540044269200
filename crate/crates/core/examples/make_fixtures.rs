//! Regenerates the demo fixture pack: images, fixtures.json and catalog.csv.
//!
//!     cargo run -p iris-core --example make_fixtures -- fixtures

use std::path::{Path, PathBuf};

use iris_core::barcode::{render_symbol, DigitString};
use iris_core::gateway::{frame_digest, FixtureEntry, FixtureSet};
use iris_core::imaging::{save_pgm, ImageFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const W: usize = 160;
const H: usize = 120;

/// Seeded texture so every image has a distinct digest.
fn texture(seed: u64) -> ImageFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..W * H)
        .map(|i| {
            let (x, y) = (i % W, i / W);
            let base = (x * 255 / W + y * 64 / H) as i32;
            (base + rng.random_range(-24..=24)).clamp(0, 255) as u8
        })
        .collect();
    ImageFrame::new(W, H, px).unwrap()
}

fn embedding(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..128).map(|_| rng.random_range(-0.15..0.15)).collect()
}

/// `base` moved by at most `step` per dimension.
fn nearby(base: &[f64], seed: u64, step: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.iter().map(|v| v + rng.random_range(-step..step)).collect()
}

struct Out {
    dir: PathBuf,
    entries: Vec<FixtureEntry>,
}

impl Out {
    fn image(&mut self, name: &str, frame: &ImageFrame, results: &[(&str, Value)]) {
        std::fs::write(self.dir.join("images").join(name), save_pgm(frame)).unwrap();
        for (kind, result) in results {
            self.entries.push(FixtureEntry {
                kind: kind.to_string(),
                digest: frame_digest(frame),
                result: result.clone(),
                latency_ms: None,
            });
        }
    }
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut out = Out {
        dir: dir.clone(),
        entries: Vec::new(),
    };

    out.image(
        "scene.pgm",
        &texture(1),
        &[("scene", json!({"caption": "A man sitting at a table."}))],
    );
    out.image(
        "objects.pgm",
        &texture(2),
        &[(
            "objects",
            json!({"detections": [
                {"label": "chair", "confidence": 0.81, "bbox": [0.02, 0.45, 0.22, 0.95]},
                {"label": "person", "confidence": 0.92, "bbox": [0.40, 0.10, 0.62, 0.90]},
                {"label": "chair", "confidence": 0.77, "bbox": [0.10, 0.50, 0.30, 0.98]},
                {"label": "cup", "confidence": 0.31, "bbox": [0.80, 0.60, 0.86, 0.70]}
            ]}),
        )],
    );
    out.image(
        "sign.pgm",
        &texture(3),
        &[(
            "ocr",
            json!({"lines": [
                {"text": "Trains to the city", "confidence": 0.88, "bbox": [0.10, 0.45, 0.90, 0.60]},
                {"text": "PLATFORM 4", "confidence": 0.95, "bbox": [0.25, 0.10, 0.75, 0.30]},
                {"text": "~~", "confidence": 0.12, "bbox": [0.05, 0.85, 0.10, 0.90]}
            ]}),
        )],
    );
    out.image(
        "money.pgm",
        &texture(4),
        &[(
            "ocr",
            json!({"lines": [
                {"text": "20 EURO", "confidence": 0.93, "bbox": [0.05, 0.10, 0.45, 0.30]},
                {"text": "5 EURO", "confidence": 0.90, "bbox": [0.55, 0.12, 0.95, 0.32]},
                {"text": "BCE ECB EZB", "confidence": 0.71, "bbox": [0.05, 0.50, 0.45, 0.60]}
            ]}),
        )],
    );
    let maria = embedding(10);
    out.image("face_maria.pgm", &texture(5), &[("face", json!({"embedding": maria}))]);
    out.image(
        "face_maria_again.pgm",
        &texture(6),
        &[("face", json!({"embedding": nearby(&maria, 11, 0.02)}))],
    );
    out.image(
        "face_stranger.pgm",
        &texture(7),
        &[("face", json!({"embedding": embedding(12)}))],
    );

    let known: DigitString = "4006381333931".parse().unwrap();
    let unknown: DigitString = "5901234123457".parse().unwrap();
    out.image("barcode.pgm", &render_symbol(&known, 3, 30, 90, 20..70).unwrap(), &[]);
    out.image("barcode_unknown.pgm", &render_symbol(&unknown, 2, 20, 60, 10..50).unwrap(), &[]);

    let set = FixtureSet::new(out.entries).expect("generated fixtures validate");
    std::fs::write(dir.join("fixtures.json"), set.to_json() + "\n").unwrap();
    write_catalog(&dir.join("catalog.csv"), &known);
    println!("wrote {} fixtures to {}", set.entries().len(), dir.display());
}

fn write_catalog(path: &Path, known: &DigitString) {
    let rows = [
        format!("{known},Ballpoint pen,249,EUR"),
        "0012345678905,Oat milk 1 l,189,EUR".to_string(),
        "4012345678901,Rye bread,,".to_string(),
    ];
    let text = format!("gtin,name,price_minor,currency\n{}\n", rows.join("\n"));
    std::fs::write(path, text).unwrap();
}
