//! Align one toy face to all eleven settings and print the face occupancy of
//! each crop next to its nominal value.
//!
//! ```text
//! cargo run --example align_settings [OUT_DIR]
//! ```

use std::path::PathBuf;

use smad::{geometry, imageio, synth};

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/align"));
    let face = synth::render(&synth::IdentityParams::canonical(), 0);

    println!("setting  scale  occupancy  nominal");
    for s in geometry::canonical_settings() {
        let (img, t) = geometry::warp_to_setting(&face.image, &face.lm5, &s)?;
        let occ = geometry::occupancy_ratio(&face.lm68.map(&t), s.output_size);
        println!("{:>7}  {:>5.2}  {:>9.3}  {:>7.2}", s.id, s.scale_factor, occ, s.nominal_ratio);
        imageio::save_png(&img, &out.join(format!("setting_{}.png", s.id)))?;
    }

    // a similarity fit recovers a known transform from five points
    let truth = geometry::SimilarityTransform::new(0.8, 0.3, 12.0, -5.0)?;
    let moved: Vec<_> = face.lm5.to_array().iter().map(|&p| truth.apply(p)).collect();
    let fit = geometry::fit_similarity_points(&face.lm5.to_array(), &moved)?;
    println!("recovered scale {:.6}, rotation {:.6}", fit.scale, fit.rotation);
    println!("crops in {}", out.display());
    Ok(())
}
