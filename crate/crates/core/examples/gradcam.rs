//! Grad-CAM maps of a briefly trained fused detector on held-out morphs,
//! their mean and the face/background intensity ratio.
//!
//! ```text
//! cargo run --release --example gradcam [OUT_DIR]
//! ```

use std::path::PathBuf;

use smad::dataprep::{Authenticity, Manifest};
use smad::geometry;
use smad::model::{Checkpoint, Variant};
use smad::pipeline::{self, SweepConfig, ToyStudyConfig};
use smad::training::TrainConfig;

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/gradcam"));
    let study = pipeline::build_toy_study(
        &out.join("study"),
        &ToyStudyConfig {
            identities: 24,
            per_identity: 24,
            holdout: 4,
            pairs_per_identity: 16,
            train_bona_fide_per_identity: Some(24),
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
            epochs: 10,
            variant: Variant::Fused,
            ..TrainConfig::default()
        },
        force: false,
    };
    let run = pipeline::run_setting(&cfg, &geometry::setting('d')?)?;
    let ck = Checkpoint::load(&run.dir.join(pipeline::files::CHECKPOINT))?;
    let test = Manifest::load(&study.test_manifest)?;

    for class in [Authenticity::Morph, Authenticity::BonaFide] {
        let set = pipeline::heatmaps_for_class(&ck.model, &run.aligned_root, &test, class, Some(12))?;
        let dir = out.join("maps").join(class.as_str());
        pipeline::save_heatmap_set(&set, &dir, ck.header.variant, ck.header.alignment)?;
        println!(
            "{:>9}: {} maps, AGIR {:.3}, face pixels {} of {}",
            class.as_str(),
            set.per_image.len(),
            set.agir,
            set.masks.foreground_count(),
            set.mean.h * set.mean.w
        );
    }
    println!("heatmaps in {}", out.join("maps").display());
    Ok(())
}
