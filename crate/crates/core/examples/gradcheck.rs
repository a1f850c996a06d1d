//! Compares reverse-mode gradients of the desk U-Net with central finite
//! differences on a random subset of parameters.
//!
//! cargo run --release --example gradcheck -- [entries]

use sfpnet::net::gradcheck::{check_gradients_sampled, random_tensor};
use sfpnet::net::{UNet, UNetConfig};

fn main() -> sfpnet::Result<()> {
    let entries: usize = std::env::args().nth(1).map_or(200, |v| v.parse().expect("entry count"));
    for seed in 0..3 {
        let net = UNet::new(UNetConfig {
            seed,
            ..Default::default()
        })?;
        let mut inputs = net.params().to_vec();
        inputs.push(random_tensor(&[1, 4, 8, 8], 100 + seed));
        let target: Vec<f64> = (0..3 * 64).map(|i| [0.36, -0.48, 0.8][i / 64]).collect();
        let report = check_gradients_sampled(&inputs, entries, seed, |g, v| {
            let (params, x) = v.split_at(v.len() - 1);
            let y = net.forward(g, params, x[0])?;
            let data = g.cosine_loss(y, &target, &[true; 64])?;
            match net.l2_penalty(g, params)? {
                Some(p) => g.add(data, p),
                None => Ok(data),
            }
        })?;
        println!(
            "seed {seed}: {} parameters, {} checked, max relative error {:.2e}, {} entries straddle a rectifier kink",
            net.param_count(),
            report.checked,
            report.max_error,
            report.kinks
        );
    }
    Ok(())
}
