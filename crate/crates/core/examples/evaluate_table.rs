//! Scores the physics baseline on a small synthetic dataset and prints the
//! per-object table.
//!
//! cargo run --release --example evaluate_table -- [scenes]

use sfpnet::eval::{evaluate, PolicyChoice, Predictor};
use sfpnet::fresnel::Material;
use sfpnet::synth::{dataset_scenes, DatasetOptions, RenderConfig};

fn main() -> sfpnet::Result<()> {
    let scenes: usize = std::env::args().nth(1).map_or(12, |v| v.parse().expect("scene count"));
    let render = RenderConfig::new(128, 128).with_noise(0.01);
    let samples = dataset_scenes(scenes, &render, 5, &DatasetOptions::default())
        .iter()
        .map(|s| s.render())
        .collect::<sfpnet::Result<Vec<_>>>()?;
    for policy in [PolicyChoice::Oracle, PolicyChoice::Convexity] {
        let predictor = Predictor::Physics {
            material: Material::diffuse(1.5)?,
            policy,
        };
        let report = evaluate(&samples, &predictor)?;
        println!("{}", report.to_table(&predictor.describe()));
    }
    Ok(())
}
