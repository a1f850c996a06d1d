//! Trains the desk-scale U-Net on freshly rendered synthetic scenes and
//! compares it with the constant frontal predictor on held-out objects.
//!
//! cargo run --release --example train_unet -- [scenes] [epochs]

use std::time::Instant;

use sfpnet::net::desk::{held_out_mae, DeskRecipe};

fn main() -> sfpnet::Result<()> {
    let mut recipe = DeskRecipe::default();
    let mut args = std::env::args().skip(1);
    if let Some(v) = args.next() {
        recipe.scenes = v.parse().expect("scene count");
    }
    if let Some(v) = args.next() {
        recipe.train.epochs = v.parse().expect("epoch count");
    }

    let data = recipe.data()?;
    println!(
        "{} training patches, {} test samples",
        data.train.len(),
        data.test.len()
    );

    let start = Instant::now();
    let outcome = recipe.run(data.train, |e| {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  ({:.0} s)",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    })?;
    println!(
        "val loss {:.4} -> {:.4}",
        outcome.history.initial_val_loss.unwrap_or(f64::NAN),
        outcome.history.final_val_loss().unwrap_or(f64::NAN)
    );

    let held = held_out_mae(&outcome.net, &data.test)?;
    println!(
        "held-out MAE over {} pixels: network {:.2} deg, constant frontal {:.2} deg",
        held.pixels, held.network_deg, held.frontal_deg
    );
    Ok(())
}
