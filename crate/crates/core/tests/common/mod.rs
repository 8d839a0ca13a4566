//! Test fixtures shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use gauduchon_core::grid_field::{GridSpec, HermitianTensorField, Metric, ScalarField};
use gauduchon_core::linalg::{self, CMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(n: usize, len: usize) -> GridSpec {
    GridSpec::new(n, len).unwrap()
}

/// `I + eps H(x)`: every entry carries one random low mode, so the metric is
/// not conformal to a constant one and has nonzero torsion.
pub fn perturbed_metric(g: GridSpec, rng: &mut ChaCha8Rng, eps: f64) -> Metric {
    let n = g.n();
    let axes = 2 * n;
    let entries: Vec<(Vec<i32>, f64, Complex64)> = (0..n * n)
        .map(|_| {
            let k: Vec<i32> = (0..axes).map(|_| rng.random_range(-1..=1)).collect();
            let phase = rng.random_range(0.0..2.0 * PI);
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (k, phase, c)
        })
        .collect();
    Metric::new(HermitianTensorField::from_fn(g, move |x| {
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let (k, phase, c) = &entries[i * n + j];
                let arg: f64 = k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>() * 2.0 * PI + phase;
                let v = if i == j { Complex64::new(c.re * arg.cos(), 0.0) } else { *c * arg.cos() };
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        linalg::identity(n) + h * Complex64::new(eps, 0.0)
    }))
    .unwrap()
}

/// `e^phi I` with a random low-mode `phi`.
pub fn conformal_metric(g: GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> Metric {
    let phi = low_mode_field(g, rng, amp);
    let n = g.n();
    Metric::new(HermitianTensorField::from_point_fn(g, move |p| {
        linalg::identity(n) * Complex64::new(phi.values()[p].re.exp(), 0.0)
    }))
    .unwrap()
}

/// Sum of one cosine per real axis with random amplitude and phase, each
/// coupling the axis to its neighbour.
pub fn low_mode_field(g: GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let axes = g.real_axes();
    let c: Vec<f64> = (0..axes).map(|_| rng.random_range(-amp..amp)).collect();
    let ph: Vec<f64> = (0..axes).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    ScalarField::from_real_fn(g, move |x| {
        (0..axes)
            .map(|a| c[a] * (2.0 * PI * (x[a] + x[(a + 1) % axes]) + ph[a]).cos())
            .sum()
    })
}

pub fn cos_mode(g: GridSpec, amp: f64, freq: &[i32]) -> ScalarField {
    let freq = freq.to_vec();
    ScalarField::from_real_fn(g, move |x| {
        amp * (2.0 * PI * freq.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>()).cos()
    })
}

pub fn sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}

pub fn centered(u: &ScalarField) -> ScalarField {
    u.shift(-u.mean().re)
}

/// Prints the one-line verdict for a measured quantity against its bound.
pub fn verdict(criterion: &str, name: &str, value: f64, tol: f64) -> bool {
    let pass = value.is_finite() && value <= tol;
    println!(
        "{} {criterion} {name}: {value:.3e} (bound {tol:.0e})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
