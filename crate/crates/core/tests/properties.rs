use proptest::prelude::*;

use sfpnet::eval::mae;
use sfpnet::fresnel::{dop_diffuse, SphericalNormal};
use sfpnet::net::{Graph, Tensor, UNet, UNetConfig};
use sfpnet::normals::{norm, NormalMap, Vec3};
use sfpnet::polar::{
    eval_sinusoid, fit_sinusoid, phase_distance, FitMethod, Mask, PolarizerAngle, SinusoidFitter, SinusoidParams,
};

fn sinusoid() -> impl Strategy<Value = SinusoidParams> {
    (0.01f64..10.0, 0.0f64..1.0, 0.0f64..std::f64::consts::PI)
        .prop_map(|(mean, frac, phase)| SinusoidParams::new(mean, mean * frac, phase).unwrap())
}

fn samples(p: &SinusoidParams, angles: &[PolarizerAngle]) -> Vec<(PolarizerAngle, f64)> {
    angles.iter().map(|&a| (a, eval_sinusoid(p, a))).collect()
}

fn unit() -> impl Strategy<Value = Vec3> {
    (0.0f64..std::f64::consts::TAU, -1.0f64..1.0).prop_map(|(az, z)| {
        let r = (1.0 - z * z).sqrt();
        [r * az.cos(), r * az.sin(), z]
    })
}

/// Rotation matrix from a unit axis and an angle.
fn rotation(axis: Vec3, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sinusoid_has_period_pi(p in sinusoid(), deg in 0.0f64..180.0) {
        let shifted = SinusoidParams::new(p.i_mean, p.amplitude, p.phase + std::f64::consts::PI).unwrap();
        let a = PolarizerAngle::from_degrees(deg).unwrap();
        prop_assert!((eval_sinusoid(&p, a) - eval_sinusoid(&shifted, a)).abs() <= 1e-12 * p.i_mean.max(1.0));
    }

    #[test]
    fn fit_is_idempotent(p in sinusoid()) {
        let angles = PolarizerAngle::canonical();
        let once = fit_sinusoid(&samples(&p, &angles), FitMethod::LeastSquares).unwrap();
        let twice = fit_sinusoid(&samples(&once, &angles), FitMethod::LeastSquares).unwrap();
        prop_assert!((once.i_mean - twice.i_mean).abs() <= 1e-12 * p.i_mean);
        prop_assert!((once.amplitude - twice.amplitude).abs() <= 1e-12 * p.i_mean);
        if once.amplitude > 1e-6 * once.i_mean {
            prop_assert!(phase_distance(once.phase, twice.phase) < 1e-9);
        }
    }

    #[test]
    fn least_squares_matches_closed_form(p in sinusoid(), noise in prop::array::uniform4(-0.05f64..0.05)) {
        let angles = PolarizerAngle::canonical();
        let intensities: Vec<f64> = angles.iter().zip(noise).map(|(&a, n)| eval_sinusoid(&p, a) + n * p.i_mean).collect();
        let ls = SinusoidFitter::new(&angles, FitMethod::LeastSquares).unwrap().fit(&intensities);
        let cf = SinusoidFitter::new(&angles, FitMethod::ClosedFormQuad).unwrap().fit(&intensities);
        prop_assert!((ls.i_mean - cf.i_mean).abs() <= 1e-12 * p.i_mean);
        prop_assert!((ls.amplitude - cf.amplitude).abs() <= 1e-12 * p.i_mean);
        if ls.amplitude > 1e-6 * p.i_mean {
            prop_assert!(phase_distance(ls.phase, cf.phase) < 1e-9);
        }
    }

    #[test]
    fn mean_moves_at_most_by_the_perturbation(p in sinusoid(), noise in prop::array::uniform4(-1.0f64..1.0), eps in 0.0f64..0.1) {
        let angles = PolarizerAngle::canonical();
        let fitter = SinusoidFitter::new(&angles, FitMethod::LeastSquares).unwrap();
        let clean: Vec<f64> = angles.iter().map(|&a| eval_sinusoid(&p, a)).collect();
        let noisy: Vec<f64> = clean.iter().zip(noise).map(|(c, n)| c + eps * n).collect();
        let (a, b) = (fitter.fit(&clean), fitter.fit(&noisy));
        prop_assert!((a.i_mean - b.i_mean).abs() <= eps + 1e-12);
        prop_assert!((a.amplitude - b.amplitude).abs() <= std::f64::consts::SQRT_2 * eps + 1e-12);
    }

    #[test]
    fn diffuse_dop_increases_with_zenith(eta in 1.05f64..2.5, a in 0.0f64..1.5, b in 0.0f64..1.5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        prop_assert!(dop_diffuse(eta, lo).unwrap() < dop_diffuse(eta, hi).unwrap());
    }

    #[test]
    fn spherical_normals_are_unit(az in 0.0f64..std::f64::consts::TAU, zen in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let n = SphericalNormal::new(az, zen).unwrap().to_vector();
        prop_assert!((norm(&n) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mae_is_symmetric_and_rotation_invariant(
        pairs in prop::collection::vec((unit(), unit()), 1..40),
        axis in unit(),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let n = pairs.len();
        let a = NormalMap::new(1, n, pairs.iter().map(|p| p.0).collect()).unwrap();
        let b = NormalMap::new(1, n, pairs.iter().map(|p| p.1).collect()).unwrap();
        let mask = Mask::full(1, n);
        let ab = mae(&a, &b, &mask).unwrap();
        prop_assert_eq!(ab, mae(&b, &a, &mask).unwrap());
        let r = rotation(axis, angle);
        let rotated = mae(&a.map(|v| apply(&r, v)), &b.map(|v| apply(&r, v)), &mask).unwrap();
        prop_assert!((ab - rotated).abs() < 1e-9, "{ab} vs {rotated}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unet_output_matches_input_shape(
        depth in 2usize..=4,
        width in 1usize..=4,
        blocks in 1usize..=2,
        batch in 1usize..=2,
        rows in 1usize..=2,
        cols in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let config = UNetConfig { depth, base_width: width, blocks_per_stage: blocks, seed, ..Default::default() };
        let net = UNet::new(config).unwrap();
        let m = 1 << depth;
        let x = Tensor::filled(&[batch, 4, rows * m, cols * m], 0.25);
        let y = net.predict(x).unwrap();
        prop_assert_eq!(y.shape(), &[batch, 3, rows * m, cols * m]);
    }

    #[test]
    fn cosine_loss_ignores_positive_scale(values in prop::collection::vec(-1.0f64..1.0, 3 * 12), targets in prop::collection::vec(unit(), 12)) {
        let target: Vec<f64> = (0..3).flat_map(|k| targets.iter().map(move |t| t[k])).collect();
        let mask: Vec<bool> = (0..12).map(|i| i % 5 != 0).collect();
        let loss = |c: f64| {
            let mut g = Graph::new();
            let p = g.input(Tensor::new(vec![1, 3, 3, 4], values.iter().map(|v| c * v).collect()).unwrap());
            let l = g.cosine_loss(p, &target, &mask).unwrap();
            g.value(l).item()
        };
        let base = loss(1.0);
        for c in [0.1, 1.0, 10.0] {
            prop_assert!((loss(c) - base).abs() <= 1e-12, "c={c}: {} vs {base}", loss(c));
        }
    }
}
