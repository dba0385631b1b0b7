//! Resumable sweep over several alignment settings with a small model; the
//! second call is served from the content-addressed cache.
//!
//! ```text
//! cargo run --release --example alignment_sweep [OUT_DIR] [SETTINGS]
//! ```

use std::path::PathBuf;

use smad::nn::ConvNetConfig;
use smad::pipeline::{self, SweepConfig, ToyStudyConfig};
use smad::training::TrainConfig;

fn main() -> smad::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/sweep"));
    let settings = args.next().unwrap_or_else(|| "a,d,g,k".into());

    let study = pipeline::build_toy_study(
        &out.join("study"),
        &ToyStudyConfig {
            identities: 10,
            per_identity: 8,
            holdout: 3,
            pairs_per_identity: 4,
            train_bona_fide_per_identity: Some(8),
            test_pairs_per_identity: 3,
            ..ToyStudyConfig::default()
        },
    )?;
    let cfg = SweepConfig {
        source_root: study.source.clone(),
        manifest: study.manifest.clone(),
        train_manifest: study.train_manifest.clone(),
        protocol_index: study.protocol_index.clone(),
        output_dir: out.join("sweep"),
        settings: smad::geometry::parse_setting_list(&settings)?.iter().map(|s| s.id).collect(),
        train: TrainConfig {
            epochs: 2,
            backbone: ConvNetConfig {
                channels: vec![4, 8, 8, 8],
                feature_dim: 16,
                ..ConvNetConfig::default()
            },
            ..TrainConfig::default()
        },
        force: false,
    };
    let first = pipeline::run_sweep(&cfg)?;
    if let Some(table) = &first.table {
        print!("{}", table.to_text());
    }
    for (id, e) in &first.failures {
        println!("setting {id} failed: {e}");
    }
    let second = pipeline::run_sweep(&cfg)?;
    println!("second pass served {} of {} settings from cache", second.cache_hits.len(), cfg.settings.len());
    println!("tables and DET plots in {}", cfg.output_dir.display());
    Ok(())
}
