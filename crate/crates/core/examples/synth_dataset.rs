//! Generate a small synthetic face dataset and look at what was written.
//!
//! ```text
//! cargo run --example synth_dataset [OUT_DIR]
//! ```

use std::path::PathBuf;

use smad::dataprep::Authenticity;
use smad::synth;

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/synth"));
    let manifest = synth::make_dataset(&out, 6, 5, 42)?;

    println!("{} identities, {} bona fide images", manifest.num_classes(), manifest.count(Authenticity::BonaFide));
    for id in manifest.identities().iter().take(3) {
        let imgs = manifest.bona_fides_of(id);
        println!("  {id}: {} images, first {}", imgs.len(), imgs[0].path);
    }

    // same seed, same pixels
    let again = synth::render(&synth::make_identity(0), 7);
    let twice = synth::render(&synth::make_identity(0), 7);
    assert_eq!(again.image, twice.image);
    println!("five-point landmarks of one render: {:?}", again.lm5.to_array());
    println!("dataset under {}", out.display());
    Ok(())
}
