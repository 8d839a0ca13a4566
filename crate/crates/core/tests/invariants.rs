//! Structural properties of the equation and of converged solves.

mod common;

use common::*;
use gauduchon_core::exterior::Form;
use gauduchon_core::gauduchon_ma::{assemble_gtilde, omega_from_u, z_tensor, EquationData};
use gauduchon_core::grid_field::{hessian, Metric, ScalarField, Spectrum};
use gauduchon_core::hermitian_geometry::{chern_ricci, gauduchon_defect_field, MetricSpectra};
use gauduchon_core::linalg::CMatrix;
use gauduchon_core::solver::{continuation_solve_logged, SolverConfig, SolverState};
use num_complex::Complex64;
use rand::Rng;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn quick_config() -> SolverConfig {
    SolverConfig {
        continuation_steps: 2,
        ..SolverConfig::default()
    }
}

fn solved_n2() -> (EquationData, SolverState, Vec<gauduchon_core::solver::TelemetryRecord>) {
    let g = grid(2, 16);
    let mut rng = rng(21);
    let alpha = perturbed_metric(g, &mut rng, 0.2);
    let f = low_mode_field(g, &mut rng, 0.3);
    let data = EquationData::new(alpha.clone(), alpha, f, 1.0).unwrap();
    let mut log = Vec::new();
    let s = continuation_solve_logged(&data, &quick_config(), &mut log).unwrap();
    (data, s, log)
}

#[test]
fn exactness_identity_at_random_points() {
    // i ddbar u ^ A + Re(i du ^ dbar A) = d gamma + dbar conj(gamma),
    // gamma = (i/2) dbar u ^ A, A = alpha^(n-2)
    let n = 3;
    let g = grid(n, 8);
    let mut rng = rng(22);
    let alpha = perturbed_metric(g, &mut rng, 0.3);
    let u = low_mode_field(g, &mut rng, 0.5);
    let jets = MetricSpectra::of(alpha.field());
    let spec = Spectrum::of(&u);
    let zero = Complex64::new(0.0, 0.0);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let p = rng.random_range(0..g.len());
        let jet = jets.jet_at(p);
        let mut du = vec![zero; n];
        let mut dbu = vec![zero; n];
        let mut hess = CMatrix::zeros(n, n);
        spec.visit_at(p, |m, w| {
            for a in 0..n {
                du[a] += w * m.dz(a);
                dbu[a] += w * m.dzbar(a);
                for b in 0..n {
                    hess[(a, b)] += w * m.hess(a, b);
                }
            }
        });
        let base = Form::from_hermitian(&jet.alpha);
        let a_form = base.power(n - 2);
        let lower = base.power(n - 3).scale(Complex64::new((n - 2) as f64, 0.0));
        // d A = sum_a dz^a ^ (n-2) alpha^(n-3) ^ d_a alpha, likewise for dbar
        let mut d_a = Form::zero(n);
        let mut dbar_a = Form::zero(n);
        for a in 0..n {
            let mut e = vec![zero; n];
            e[a] = Complex64::new(1.0, 0.0);
            let dz = Form::one_form(&e, &vec![zero; n]);
            let dzbar = Form::one_form(&vec![zero; n], &e);
            d_a = d_a.add(&dz.wedge(&lower.wedge(&Form::from_hermitian(&jet.d[a]))));
            dbar_a = dbar_a.add(&dzbar.wedge(&lower.wedge(&Form::from_hermitian(&jet.dbar[a]))));
        }
        let ddbar_u = Form::from_hermitian(&hess).scale(-I);
        let d_u = Form::one_form(&du, &vec![zero; n]);
        let dbar_u = Form::one_form(&vec![zero; n], &dbu);

        let lhs = ddbar_u
            .scale(I)
            .wedge(&a_form)
            .add(&d_u.wedge(&dbar_a).scale(I).real_part());
        // d gamma = (i/2)(ddbar u ^ A - dbar u ^ dA)
        let d_gamma = ddbar_u
            .wedge(&a_form)
            .sub(&dbar_u.wedge(&d_a))
            .scale(I * 0.5);
        let rhs = d_gamma.add(&d_gamma.conj());
        worst = worst.max(lhs.sub(&rhs).max_abs() / lhs.max_abs());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn gauduchon_defect_transfers_from_alpha0() {
    // band-limited alpha, alpha0 and u keep every product resolved on the grid
    let g = grid(3, 8);
    let mut rng = rng(23);
    let alpha = perturbed_metric(g, &mut rng, 0.2);
    let alpha0 = perturbed_metric(g, &mut rng, 0.2);
    let data = EquationData::new(alpha.clone(), alpha0.clone(), ScalarField::zeros(g), 1.0).unwrap();
    let u = low_mode_field(g, &mut rng, 0.01);
    let omega = omega_from_u(&u, &data).unwrap();
    let want = gauduchon_defect_field(&alpha0, &alpha).unwrap();
    let got = gauduchon_defect_field(&omega, &alpha).unwrap();
    assert!(want.sup_abs() > 1e-2, "alpha0 should not be Gauduchon");
    assert!(sup_diff(&got, &want) < 1e-8, "{}", sup_diff(&got, &want));
}

#[test]
fn z_is_linear_in_the_gradient() {
    let g = grid(3, 8);
    let mut rng = rng(24);
    let alpha = perturbed_metric(g, &mut rng, 0.2);
    let data = EquationData::new(alpha.clone(), alpha, ScalarField::zeros(g), 1.0).unwrap();
    let u = low_mode_field(g, &mut rng, 0.3);
    let v = low_mode_field(g, &mut rng, 0.3);
    let (a, b) = (1.7, -0.6);
    let combo = u.scale(a).zip_map(&v.scale(b), |x, y| x + y).unwrap();
    let lhs = z_tensor(&combo, &data).unwrap();
    let rhs = z_tensor(&u, &data).unwrap().combine(a, &z_tensor(&v, &data).unwrap(), b).unwrap();
    let scale = lhs.sup_abs();
    assert!(scale > 1e-3);
    assert!(lhs.sub(&rhs).unwrap().sup_abs() < 1e-12 * scale.max(1.0));
}

#[test]
fn z_vanishes_in_two_dimensions() {
    let g = grid(2, 8);
    let mut rng = rng(25);
    let alpha = perturbed_metric(g, &mut rng, 0.3);
    let data = EquationData::new(alpha.clone(), alpha, ScalarField::zeros(g), 1.0).unwrap();
    assert!(data.torsion().sup_abs() > 1e-2);
    assert!(z_tensor(&low_mode_field(g, &mut rng, 0.3), &data).unwrap().sup_abs() == 0.0);
}

#[test]
fn converged_solve_invariants() {
    let (data, s, log) = solved_n2();
    let n = data.n() as f64;

    // Ricci prescription
    let omega = omega_from_u(&s.u, &data).unwrap();
    let want = chern_ricci(data.alpha()).sub(&hessian(data.f()).unwrap()).unwrap();
    let ricci = chern_ricci(&omega).sub(&want).unwrap().sup_abs();
    assert!(ricci < 1e-6, "Ricci prescription off by {ricci}");

    // b-consistency: mean((n-1) F + log(det alpha / det gtilde)) = -(n-1) b
    let gt = Metric::new(assemble_gtilde(&s.u, &data).unwrap()).unwrap();
    let lg = gt.log_det();
    let la = data.alpha().log_det();
    let mean = (0..lg.len())
        .map(|p| (n - 1.0) * data.f().values()[p].re + la[p] - lg[p])
        .sum::<f64>()
        / lg.len() as f64;
    assert!((mean + (n - 1.0) * s.b).abs() < 1e-8);

    // normalizations differ by a constant
    let shifted = s.sup_normalized_u();
    assert!(shifted.real_range().1.abs() < 1e-15);
    let gap = shifted.zip_map(&s.u, |a, b| a - b).unwrap();
    let (lo, hi) = gap.real_range();
    assert!(hi - lo < 1e-14);
    assert!(s.u.mean().norm() < 1e-12);

    // residual strictly decreases within each continuation step, and every
    // accepted state lies in the cone
    for w in log.windows(2) {
        if w[1].iteration > 0 && w[1].t == w[0].t {
            assert!(w[1].sup_residual < w[0].sup_residual, "{} then {}", w[0].line(), w[1].line());
        }
    }
    let accepted: Vec<_> = log.iter().filter_map(|r| r.diagnostics).collect();
    assert!(accepted.len() >= 3);
    assert!(accepted.iter().all(|d| d.min_nu > 0.0 && d.ratio.is_finite()));
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let (_, a, log_a) = solved_n2();
    let (_, b, log_b) = solved_n2();
    assert_eq!(a.b.to_bits(), b.b.to_bits());
    assert!(a.u.values().iter().zip(b.u.values()).all(|(x, y)| x.re.to_bits() == y.re.to_bits()));
    let lines = |l: &[gauduchon_core::solver::TelemetryRecord]| l.iter().map(|r| r.line()).collect::<Vec<_>>();
    assert_eq!(lines(&log_a), lines(&log_b));
}
