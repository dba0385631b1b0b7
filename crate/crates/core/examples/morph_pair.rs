//! Landmark-based morphs of two toy identities at several blend weights,
//! plus a self-morph of one identity.
//!
//! ```text
//! cargo run --example morph_pair [OUT_DIR]
//! ```

use std::path::PathBuf;

use smad::{imageio, morph, synth};

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/morph"));
    let a = synth::render(&synth::make_identity(1), 10);
    let b = synth::render(&synth::make_identity(2), 20);
    imageio::save_png(&a.image, &out.join("source_a.png"))?;
    imageio::save_png(&b.image, &out.join("source_b.png"))?;

    for alpha in [0.3, 0.5, 0.7] {
        let (img, lm) = morph::morph(&a.image, &a.lm68, &b.image, &b.lm68, alpha)?;
        let nose = lm.points()[30];
        println!("alpha {alpha}: nose tip at ({:.1}, {:.1})", nose.x, nose.y);
        imageio::save_png(&img, &out.join(format!("morph_{:02}.png", (alpha * 100.0) as u32)))?;
    }

    // two captures of the same person: blending artifacts, one identity
    let a2 = synth::render(&synth::make_identity(1), 11);
    let (selfmorph, _) = morph::morph(&a.image, &a.lm68, &a2.image, &a2.lm68, 0.5)?;
    imageio::save_png(&selfmorph, &out.join("selfmorph.png"))?;

    let tris = morph::triangulate(a.lm68.points())?;
    println!("{} Delaunay triangles over the 68 landmarks", tris.len());
    println!("images in {}", out.display());
    Ok(())
}
