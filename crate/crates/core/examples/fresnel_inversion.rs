//! Degree of polarization against zenith for diffuse and specular
//! reflection, and the zenith candidates recovered from each value.
//!
//! cargo run --example fresnel_inversion -- [eta]

use sfpnet::fresnel::{dop_diffuse, dop_specular, invert_dop, specular_peak, Material};

fn main() -> sfpnet::Result<()> {
    let eta: f64 = std::env::args()
        .nth(1)
        .map_or(1.5, |v| v.parse().expect("refractive index"));
    let (peak_zenith, peak_dop) = specular_peak(eta)?;
    println!(
        "eta {eta}: specular peak {:.6} at {:.4} deg (Brewster {:.4} deg)",
        peak_dop,
        peak_zenith.to_degrees(),
        eta.atan().to_degrees()
    );

    let diffuse = Material::diffuse(eta)?;
    let specular = Material::specular(eta)?;
    println!(
        "{:>7} {:>9} {:>10} {:>9} {:>22}",
        "zenith", "diffuse", "inverted", "specular", "candidates"
    );
    for deg in (5..=85).step_by(10) {
        let theta = (deg as f64).to_radians();
        let rd = dop_diffuse(eta, theta)?;
        let rs = dop_specular(eta, theta)?;
        let back = invert_dop(&diffuse, rd)?.candidates[0].to_degrees();
        let cands: Vec<String> = invert_dop(&specular, rs)?
            .candidates
            .iter()
            .map(|c| format!("{:.3}", c.to_degrees()))
            .collect();
        println!("{deg:>7} {rd:>9.5} {back:>10.5} {rs:>9.5} {:>22}", cands.join(", "));
    }
    Ok(())
}
