//! Operating points, EER and a DET plot for two synthetic score
//! distributions, plus a score file round trip.
//!
//! ```text
//! cargo run --example benchmark_metrics [OUT_DIR]
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smad::benchmark::{self, ProtocolSpec, ScoreRecord};

fn main() -> smad::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smad-examples/benchmark"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // higher score = more bona fide
    let bf: Vec<f64> = (0..500).map(|_| rng.gen_range(0.3..1.0)).collect();
    let morph: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..0.6)).collect();

    for delta in benchmark::DELTAS {
        let (bpcer, t) = benchmark::apcer_bpcer_at(&bf, &morph, delta)?;
        println!("BPCER@APCER={delta}: {bpcer:.4} (threshold {t:.4})");
    }
    let det = benchmark::det_curve(&bf, &morph)?;
    println!("EER {:.4}, AUC {:.4}", benchmark::eer(&det), benchmark::roc_auc(&bf, &morph)?);
    smad::pipeline::write_text(&out.join("det.svg"), &benchmark::det_plot_svg("uniform toy scores", &[("toy".into(), det)]))?;

    // the same numbers through protocol and score files
    let name = |k: &str, i: usize| format!("{k}/{i:04}.png");
    let spec = ProtocolSpec::new(
        "toy",
        (0..bf.len()).map(|i| name("bf", i)).collect(),
        (0..morph.len()).map(|i| name("morph", i)).collect(),
    )?;
    let records: Vec<ScoreRecord> = bf
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoreRecord { path: name("bf", i), score: s })
        .chain(morph.iter().enumerate().map(|(i, &s)| ScoreRecord { path: name("morph", i), score: s }))
        .collect();
    benchmark::write_scores(&out.join("scores.csv"), &records)?;
    let report = benchmark::evaluate(&[spec], &benchmark::read_scores(&out.join("scores.csv"))?)?;
    print!("{}", report.to_csv());
    println!("plot and scores in {}", out.display());
    Ok(())
}
