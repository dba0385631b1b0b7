//! The two detector variants on a handful of random inputs: loss components,
//! detection scores and one plain SGD step.
//!
//! ```text
//! cargo run --example detector_losses
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smad::dataprep::TrainingLabels;
use smad::model::{DetectionModel, Example, LossWeights, Model, Variant};
use smad::nn::{ConvNetConfig, Tensor3};
use smad::training;

fn main() -> smad::Result<()> {
    let cfg = ConvNetConfig {
        input: (3, 16, 16),
        channels: vec![4, 8],
        feature_dim: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<Tensor3> = (0..4)
        .map(|_| Tensor3::from_vec(3, 16, 16, (0..768).map(|_| rng.gen_range(0.0..1.0)).collect()))
        .collect();
    // two bona fides of classes 0 and 1, a morph of 0 and 2, a self-morph of 1
    let labels = [(0, 0, 1.0), (1, 1, 1.0), (0, 2, 0.0), (1, 1, 1.0)];
    let batch: Vec<Example> = inputs
        .iter()
        .zip(labels)
        .map(|(x, (a, b, t))| Example {
            input: x,
            labels: TrainingLabels { first_class: a, second_class: b, target: t },
        })
        .collect();

    for variant in [Variant::Fused, Variant::Binary] {
        let mut model = Model::new(variant, &cfg, 3, 1)?;
        let w = LossWeights::CANONICAL;
        let mut grads = vec![0.0; model.num_params()];
        let before = model.loss(&batch, &w, Some(&mut grads))?;
        println!(
            "{variant}: {} params, L1 {:.4} L2 {:.4} L3 {:.4} total {:.4}",
            model.num_params(),
            before.l1,
            before.l2,
            before.l3,
            before.total
        );
        let mut params = model.flat_params();
        let mut velocity = vec![0.0; params.len()];
        training::sgd_step(&mut params, &grads, &mut velocity, 0.05, 0.9, false)?;
        model.set_flat_params(&params)?;
        let after = model.loss(&batch, &w, None)?;
        let scores = model.score_batch(&inputs)?;
        println!("  after one step total {:.4}; scores {:?}", after.total, scores.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
