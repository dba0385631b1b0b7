//! Build a small toy study, train the fused detector at setting d and score
//! the held-out protocol.
//!
//! ```text
//! cargo run --release --example train_toy [OUT_DIR]
//! ```

use std::path::PathBuf;

use smad::geometry;
use smad::model::Variant;
use smad::nn::ConvNetConfig;
use smad::pipeline::{self, SweepConfig, ToyStudyConfig};
use smad::training::{TrainConfig, TrainLog};

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/train"));
    let study = pipeline::build_toy_study(
        &out.join("study"),
        &ToyStudyConfig {
            identities: 16,
            per_identity: 12,
            holdout: 4,
            pairs_per_identity: 8,
            train_bona_fide_per_identity: Some(12),
            test_bona_fide_per_identity: 6,
            test_pairs_per_identity: 4,
            ..ToyStudyConfig::default()
        },
    )?;
    let cfg = SweepConfig {
        source_root: study.source.clone(),
        manifest: study.manifest.clone(),
        train_manifest: study.train_manifest.clone(),
        protocol_index: study.protocol_index.clone(),
        output_dir: out.join("work"),
        settings: vec!['d'],
        train: TrainConfig {
            epochs: 12,
            variant: Variant::Fused,
            backbone: ConvNetConfig {
                channels: vec![8, 16, 16, 16],
                feature_dim: 32,
                ..ConvNetConfig::default()
            },
            ..TrainConfig::default()
        },
        force: false,
    };
    let run = pipeline::run_setting(&cfg, &geometry::setting('d')?)?;

    let log_text = std::fs::read_to_string(run.dir.join(pipeline::files::TRAIN_LOG)).map_err(|e| smad::Error::Io {
        path: run.dir.clone(),
        source: e,
    })?;
    let log = TrainLog::from_csv(&log_text)?;
    if let Some((head, tail)) = log.head_tail_means(5) {
        println!("{} steps, total loss {head:.3} -> {tail:.3}", log.rows.len());
    }
    print!("{}", run.report.to_csv());
    println!("run directory {}", run.dir.display());
    Ok(())
}
