//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::net::graph::{Graph, Var};
use crate::net::tensor::Tensor;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which errors are measured absolutely.
pub const ERROR_FLOOR: f64 = 1e-6;

/// One-sided agreement needed to attribute a central-difference miss to a
/// rectifier kink inside the step.
pub const ONE_SIDED_TOLERANCE: f64 = 1e-3;

/// Result of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    /// Largest relative error over the smooth entries.
    pub max_error: f64,
    pub checked: usize,
    /// Entries whose two one-sided differences disagree, with the analytic
    /// value matching one of them: a kink lies within one step.
    pub kinks: usize,
}

/// Uniform entries in `[-1, 1)` from a seeded stream.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Largest relative error over every entry of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let picks: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    check_entries(inputs, &picks, &f)
}

/// Largest relative error over `count` entries drawn uniformly from all inputs.
pub fn check_gradients_sampled<F>(inputs: &[Tensor], count: usize, seed: u64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let flat: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, flat.len(), count.min(flat.len())).into_vec();
    idx.sort_unstable();
    let picks: Vec<_> = idx.into_iter().map(|k| flat[k]).collect();
    check_entries(inputs, &picks, &f)
}

fn check_entries<F>(inputs: &[Tensor], picks: &[(usize, usize)], f: &F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let centre = g.value(out).item();
    let grads = g.backward(out)?;
    let mut report = GradCheck::default();
    let mut probe = inputs.to_vec();
    for &(i, j) in picks {
        let analytic = grads.get(vars[i]).map_or(0.0, |t| t.data()[j]);
        let original = probe[i].data()[j];
        probe[i].data_mut()[j] = original + FD_STEP;
        let up = evaluate(&probe, f)?;
        probe[i].data_mut()[j] = original - FD_STEP;
        let down = evaluate(&probe, f)?;
        probe[i].data_mut()[j] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        let forward = (up - centre) / FD_STEP;
        let backward = (centre - down) / FD_STEP;
        let one_sided = relative_error(analytic, forward).min(relative_error(analytic, backward));
        if err > ONE_SIDED_TOLERANCE
            && relative_error(forward, backward) > ONE_SIDED_TOLERANCE
            && one_sided < ONE_SIDED_TOLERANCE
        {
            report.kinks += 1;
        } else {
            report.max_error = report.max_error.max(err);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kink_inside_the_step_is_reported_not_scored() {
        let x = Tensor::new(vec![3], vec![0.4 * FD_STEP, -0.7, 0.9]).unwrap();
        let report = check_gradients(&[x], |g, v| {
            let r = g.relu(v[0]);
            Ok(g.sum(r))
        })
        .unwrap();
        assert_eq!((report.checked, report.kinks), (3, 1));
        assert!(report.max_error < 1e-9);
    }

    #[test]
    fn smooth_function_has_no_kinks() {
        let x = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let report = check_gradients(&[x], |g, v| {
            let s = g.sum_squares(v[0]);
            let t = g.scale(s, 0.5);
            Ok(t)
        })
        .unwrap();
        assert_eq!(report.kinks, 0);
        assert!(report.max_error < 1e-9);
    }
}
