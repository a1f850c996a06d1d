//! Recovers sinusoid parameters from polarizer samples with the closed-form
//! Stokes combination and with least squares over arbitrary angles.
//!
//! cargo run --example fit_stokes

use sfpnet::polar::{eval_sinusoid, fit_sinusoid, FitMethod, PolarizerAngle, SinusoidParams};

fn main() -> sfpnet::Result<()> {
    let truth = SinusoidParams::new(0.6, 0.15, 1.1)?;
    println!(
        "truth: mean {:.6}  amplitude {:.6}  phase {:.6} rad  dop {:.6}",
        truth.i_mean,
        truth.amplitude,
        truth.phase,
        truth.degree_of_polarization()
    );

    let canonical: Vec<_> = PolarizerAngle::canonical()
        .into_iter()
        .map(|a| (a, eval_sinusoid(&truth, a)))
        .collect();
    for method in [FitMethod::ClosedFormQuad, FitMethod::LeastSquares] {
        report(
            &format!("{method:?} on 0/45/90/135"),
            &fit_sinusoid(&canonical, method)?,
            &truth,
        );
    }

    let uneven: Vec<_> = [3.0, 31.0, 64.0, 100.0, 152.0]
        .into_iter()
        .map(|d| PolarizerAngle::from_degrees(d).map(|a| (a, eval_sinusoid(&truth, a))))
        .collect::<sfpnet::Result<_>>()?;
    report(
        "LeastSquares on five uneven angles",
        &fit_sinusoid(&uneven, FitMethod::LeastSquares)?,
        &truth,
    );
    Ok(())
}

fn report(label: &str, fit: &SinusoidParams, truth: &SinusoidParams) {
    println!(
        "{label}: mean {:.6}  amplitude {:.6}  phase {:.6} rad  (phase error {:.1e})",
        fit.i_mean,
        fit.amplitude,
        fit.phase,
        sfpnet::polar::phase_distance(fit.phase, truth.phase)
    );
}
