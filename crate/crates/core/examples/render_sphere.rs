//! Renders a diffuse sphere, writes it as a sample directory and reads it
//! back.
//!
//! cargo run --example render_sphere -- [out_dir]

use std::path::PathBuf;

use sfpnet::data::sample::{load_sample, write_sample, Condition, SampleRecord, View};
use sfpnet::fresnel::Material;
use sfpnet::synth::{ground_truth, render, RenderConfig, Scene};

fn main() -> sfpnet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("sfpnet_sphere"), PathBuf::from);
    let config = RenderConfig::new(128, 128).with_noise(0.005).with_seed(3);
    let scene = Scene::centered_sphere(128, 128, 50.0, Material::diffuse(1.5)?);
    let stack = render(&scene, &config)?;
    let (normals, mask) = ground_truth(&scene, &config)?;
    println!("{} foreground pixels of {}", mask.count(), 128 * 128);
    let centre = stack.pixel(64, 64);
    let rim = stack.pixel(64, 110);
    println!("centre intensities {centre:.4?}");
    println!("rim intensities    {rim:.4?}");

    let sample = SampleRecord {
        object_id: "sphere".into(),
        condition: Condition::Indoor,
        view: View::Front,
        stack,
        normals,
        mask,
    };
    let dir = sample.dir_in(&out);
    write_sample(&sample, &dir)?;
    let back = load_sample(&dir)?;
    let drift = back
        .normals
        .data()
        .iter()
        .zip(sample.normals.data())
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    println!(
        "wrote {}; largest normal change from f32 storage {drift:.1e}",
        dir.display()
    );
    println!("mask survives unchanged: {}", back.mask == sample.mask);
    Ok(())
}
