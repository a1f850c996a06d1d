//! Classical reconstruction of a rendered sphere under each
//! disambiguation policy, with and without sensor noise.
//!
//! cargo run --release --example physics_reconstruct

use sfpnet::eval::mae;
use sfpnet::fresnel::Material;
use sfpnet::physics::{reconstruct_physics, DisambiguationPolicy};
use sfpnet::synth::{ground_truth, render, RenderConfig, Scene};

fn main() -> sfpnet::Result<()> {
    let material = Material::diffuse(1.5)?;
    let scene = Scene::centered_sphere(256, 256, 110.0, material);
    for sigma in [0.0, 0.01, 0.03] {
        let config = RenderConfig::new(256, 256).with_noise(sigma).with_seed(11);
        let stack = render(&scene, &config)?;
        let (truth, mask) = ground_truth(&scene, &config)?;
        let policies = [
            (
                "oracle",
                DisambiguationPolicy::Oracle {
                    reference: truth.clone(),
                },
            ),
            ("convexity", DisambiguationPolicy::convexity_from_mask(&mask)?),
            ("fixed:0", DisambiguationPolicy::FixedBranch { index: 0 }),
        ];
        for (name, policy) in &policies {
            let report = reconstruct_physics(&stack, &mask, &material, policy)?;
            println!(
                "noise {sigma:<5} {name:<10} MAE {:>7.3} deg  clamped {:.4}  invalid {:.4}",
                mae(&report.normal_map, &truth, &mask)?,
                report.clamped_fraction,
                report.invalid_fraction
            );
        }
    }
    Ok(())
}
