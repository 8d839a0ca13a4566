//! Generalized eigenvalues, the map `lambda -> mu`, the log-product symmetric
//! function and its derivatives, and subsolution diagnostics.

use crate::error::{Error, Result, WorstPoint};
use crate::grid_field::{HermitianTensorField, Metric};
use crate::linalg::{self, CMatrix};

/// Eigenvalues of `alpha^{-1} g` (descending) with `alpha`-orthonormal
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn generalized_eigen_matrix(g: &CMatrix, alpha: &CMatrix) -> Result<EigenPair> {
    let (lambda, vectors) = linalg::generalized_eigen(g, alpha)?;
    Ok(EigenPair { lambda, vectors })
}

pub fn generalized_eigen(g: &HermitianTensorField, alpha: &Metric, point: usize) -> Result<EigenPair> {
    if g.grid() != alpha.grid() {
        return Err(Error::GridMismatch);
    }
    generalized_eigen_matrix(&g.get(point), &alpha.get(point))
}

/// `mu_k = (1/(n-1)) sum_{i != k} lambda_i`.
pub fn p_map(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let total: f64 = lambda.iter().sum();
    lambda.iter().map(|l| (total - l) / (n - 1) as f64).collect()
}

/// Inverse of [`p_map`]: `lambda_k = sum(mu) - (n-1) mu_k`.
pub fn p_map_inverse(mu: &[f64]) -> Vec<f64> {
    let n = mu.len();
    let total: f64 = mu.iter().sum();
    mu.iter().map(|m| total - (n - 1) as f64 * m).collect()
}

/// Symmetric functions of `lambda` usable as the equation's operator.
/// Only the log-product is wired to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetricFunction {
    /// `log(mu_1 ... mu_n)` on the cone where every `mu_i > 0`.
    #[default]
    LogProduct,
}

impl SymmetricFunction {
    pub fn value(&self, lambda: &[f64]) -> Result<f64> {
        match self {
            SymmetricFunction::LogProduct => f_log(lambda),
        }
    }

    pub fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        match self {
            SymmetricFunction::LogProduct => f_log_gradient(lambda),
        }
    }

    pub fn in_cone(&self, lambda: &[f64]) -> bool {
        match self {
            SymmetricFunction::LogProduct => checked_mu(lambda).is_ok(),
        }
    }
}

fn checked_mu(lambda: &[f64]) -> Result<Vec<f64>> {
    let mu = p_map(lambda);
    let size = mu.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * (1.0 + size);
    for (k, &m) in mu.iter().enumerate() {
        if !(m > tol) {
            return Err(Error::ConeViolation(WorstPoint { index: k, value: m }));
        }
    }
    Ok(mu)
}

/// `log prod mu_i` with `mu = p_map(lambda)`.
pub fn f_log(lambda: &[f64]) -> Result<f64> {
    Ok(checked_mu(lambda)?.iter().map(|m| m.ln()).sum())
}

/// `f_k = (1/(n-1)) sum_{i != k} 1/mu_i`.
pub fn f_log_gradient(lambda: &[f64]) -> Result<Vec<f64>> {
    let mu = checked_mu(lambda)?;
    let n = mu.len();
    let total: f64 = mu.iter().map(|m| 1.0 / m).sum();
    Ok(mu.iter().map(|m| (total - 1.0 / m) / (n - 1) as f64).collect())
}

/// Derivative of `F(g) = f_log(lambda(alpha^{-1} g))` as the Hermitian matrix
/// `H = V diag(f) V^dagger`, so that `dF[delta g] = tr(H delta g)`.
pub fn f_first_derivative_matrix(g: &CMatrix, alpha: &CMatrix) -> Result<CMatrix> {
    let pair = generalized_eigen_matrix(g, alpha)?;
    let f = f_log_gradient(&pair.lambda)?;
    let v = &pair.vectors;
    let weighted = CMatrix::from_fn(v.nrows(), v.ncols(), |i, k| v[(i, k)] * f[k]);
    Ok(weighted * v.adjoint())
}

#[allow(non_snake_case)]
pub fn F_first_derivative(g: &HermitianTensorField, alpha: &Metric, point: usize) -> Result<CMatrix> {
    if g.grid() != alpha.grid() {
        return Err(Error::GridMismatch);
    }
    f_first_derivative_matrix(&g.get(point), &alpha.get(point))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolutionReport {
    pub holds: bool,
    /// Smallest eigenvalue of `gtilde` relative to `alpha` over the grid.
    pub min_eigenvalue: f64,
    pub worst_point: usize,
}

/// In the log case the subsolution condition is `gtilde > 0` pointwise.
pub fn c_subsolution_check(gtilde: &HermitianTensorField, alpha: &Metric) -> Result<SubsolutionReport> {
    if gtilde.grid() != alpha.grid() {
        return Err(Error::GridMismatch);
    }
    let points = if gtilde.is_uniform() && alpha.is_uniform() {
        1
    } else {
        gtilde.grid().len()
    };
    let mut report = SubsolutionReport {
        holds: true,
        min_eigenvalue: f64::INFINITY,
        worst_point: 0,
    };
    for p in 0..points {
        let eig = linalg::generalized_eigenvalues(&gtilde.get(p), &alpha.get(p))?;
        let low = *eig.last().expect("nonempty");
        if low < report.min_eigenvalue {
            report.min_eigenvalue = low;
            report.worst_point = p;
        }
    }
    report.holds = report.min_eigenvalue > 0.0;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DichotomyCase {
    /// `sum_k f_k (chi_kk - lambda_k) > kappa sum_k f_k`
    CaseA,
    /// `f_k > kappa sum_i f_i` for every `k`
    CaseB,
    /// Neither alternative holds, which is only possible for bounded `lambda`.
    BelowR,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DichotomyProbe {
    pub case: DichotomyCase,
    pub case_a: bool,
    pub case_b: bool,
    pub sum_f: f64,
    /// `n exp(-h/n)`, a lower bound for `sum_f` when `f_log(lambda) = h`.
    pub sum_f_lower_bound: f64,
    pub sum_f_bound_holds: bool,
    /// Whether `sum_f > kappa`.
    pub sum_f_exceeds_kappa: bool,
}

/// Classifies an eigenvalue vector against a diagonal subsolution `chi`.
pub fn subsolution_dichotomy_probe(lambda: &[f64], chi_diag: &[f64], h: f64, kappa: f64) -> Result<DichotomyProbe> {
    if lambda.len() != chi_diag.len() || lambda.len() < 2 {
        return Err(Error::InvalidArgument("lambda and chi must have the same length n >= 2".into()));
    }
    let f = f_log_gradient(lambda)?;
    let n = lambda.len() as f64;
    let sum_f: f64 = f.iter().sum();
    let drift: f64 = f.iter().zip(chi_diag.iter().zip(lambda)).map(|(fk, (c, l))| fk * (c - l)).sum();
    let case_a = drift > kappa * sum_f;
    let case_b = f.iter().all(|fk| *fk > kappa * sum_f);
    let bound = n * (-h / n).exp();
    Ok(DichotomyProbe {
        case: if case_a {
            DichotomyCase::CaseA
        } else if case_b {
            DichotomyCase::CaseB
        } else {
            DichotomyCase::BelowR
        },
        case_a,
        case_b,
        sum_f,
        sum_f_lower_bound: bound,
        sum_f_bound_holds: sum_f >= bound * (1.0 - 1e-12),
        sum_f_exceeds_kappa: sum_f > kappa,
    })
}

/// Real part of `tr(a b)`.
pub fn trace_pairing(a: &CMatrix, b: &CMatrix) -> f64 {
    (a * b).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_field::GridSpec;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn eigen_examples() {
        let alpha = linalg::identity(3);
        let e = generalized_eigen_matrix(&alpha, &alpha).unwrap();
        assert!(e.lambda.iter().all(|l| close(*l, 1.0, 1e-14)));
        let g = linalg::diag(&[2.0, 0.0, 4.0]);
        let e = generalized_eigen_matrix(&g, &alpha).unwrap();
        assert!(close(e.lambda[0], 4.0, 1e-14) && close(e.lambda[1], 2.0, 1e-14) && e.lambda[2].abs() < 1e-14);
    }

    #[test]
    fn p_map_examples() {
        assert_eq!(p_map(&[1.0, 1.0, 1.0]), vec![1.0, 1.0, 1.0]);
        assert_eq!(p_map(&[4.0, 2.0, 0.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(p_map_inverse(&[1.0, 2.0, 3.0]), vec![4.0, 2.0, 0.0]);
    }

    #[test]
    fn f_log_examples() {
        assert!(f_log(&[1.0, 1.0, 1.0]).unwrap().abs() < 1e-15);
        assert_eq!(f_log_gradient(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        let l = [4.0, 2.0, 0.0];
        assert!(close(f_log(&l).unwrap(), 6.0_f64.ln(), 1e-15));
        let g = f_log_gradient(&l).unwrap();
        for (a, b) in g.iter().zip([5.0 / 12.0, 2.0 / 3.0, 3.0 / 4.0]) {
            assert!(close(*a, b, 1e-15));
        }
        assert!(matches!(f_log(&[1.0, -3.0, -3.0]), Err(Error::ConeViolation(_))));
    }

    #[test]
    fn first_derivative_examples() {
        let alpha = linalg::identity(3);
        let h = f_first_derivative_matrix(&alpha, &alpha).unwrap();
        assert!((h - linalg::identity(3)).norm() < 1e-14);
        let h = f_first_derivative_matrix(&linalg::diag(&[4.0, 2.0, 0.0]), &alpha).unwrap();
        assert!((h - linalg::diag(&[5.0 / 12.0, 2.0 / 3.0, 3.0 / 4.0])).norm() < 1e-14);
    }

    #[test]
    fn subsolution_checks() {
        let grid = GridSpec::new(3, 8).unwrap();
        let flat = Metric::flat(grid);
        let r = c_subsolution_check(&flat, &flat).unwrap();
        assert!(r.holds && close(r.min_eigenvalue, 1.0, 1e-14));
        let gt = HermitianTensorField::uniform(grid, &linalg::diag(&[1.0, 2.0, 3.0]));
        assert!(c_subsolution_check(&gt, &flat).unwrap().holds);
        let spike = HermitianTensorField::from_point_fn(grid, |p| {
            let mut m = linalg::identity(3);
            if p == 321 {
                m[(1, 1)] -= num_complex::Complex64::new(2.0, 0.0);
            }
            m
        });
        let r = c_subsolution_check(&spike, &flat).unwrap();
        assert!(!r.holds);
        assert_eq!(r.worst_point, 321);
        assert!(close(r.min_eigenvalue, -1.0, 1e-14));
    }

    #[test]
    fn dichotomy_examples() {
        let p = subsolution_dichotomy_probe(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0.0, 0.1).unwrap();
        assert!(close(p.sum_f, 3.0, 1e-15) && p.sum_f_bound_holds);
        // all f_k equal: f_k = sum_f / n, so case b needs kappa < 1/n
        assert_eq!(p.case, DichotomyCase::CaseB);
        let p = subsolution_dichotomy_probe(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0.0, 0.34).unwrap();
        assert!(!p.case_b);
        // one large eigenvalue, chi = 2 I: the drift sum f_k (2 - lambda_k) is positive
        let lambda = [100.0, 0.01, 0.01];
        let p = subsolution_dichotomy_probe(&lambda, &[2.0, 2.0, 2.0], f_log(&lambda).unwrap(), 0.05).unwrap();
        assert_eq!(p.case, DichotomyCase::CaseA);
        assert!(p.sum_f_bound_holds);
    }

    fn cone_lambda(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..5.0, n).prop_map(|mu| p_map_inverse(&mu))
    }

    proptest! {
        #[test]
        fn homogeneity(lambda in cone_lambda(4), t in 0.1f64..10.0) {
            let scaled: Vec<f64> = lambda.iter().map(|l| l * t).collect();
            let lhs = f_log(&scaled).unwrap();
            let rhs = f_log(&lambda).unwrap() + 4.0 * t.ln();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn concavity(a in cone_lambda(3), b in cone_lambda(3), t in 0.0f64..1.0) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = f_log(&mix).unwrap();
            let rhs = t * f_log(&a).unwrap() + (1.0 - t) * f_log(&b).unwrap();
            prop_assert!(lhs >= rhs - 1e-10);
        }

        #[test]
        fn gradient_order(lambda in cone_lambda(5)) {
            let mut sorted = lambda.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let f = f_log_gradient(&sorted).unwrap();
            prop_assert!(f.iter().all(|x| *x > 0.0));
            prop_assert!(f.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12)));
            // f_tilde_i <= (n-1) f_1 where f_tilde_i = 1/mu_i
            let mu = p_map(&sorted);
            for m in &mu[1..] {
                prop_assert!(1.0 / m <= 4.0 * f[0] * (1.0 + 1e-12));
            }
            let f1_tilde = 1.0 / mu[0];
            for fk in &f[1..] {
                prop_assert!(f1_tilde / 4.0 <= fk * (1.0 + 1e-12) && *fk <= f1_tilde * (1.0 + 1e-12));
            }
        }

        #[test]
        fn monotonicity(lambda in cone_lambda(3), i in 0usize..3, t in 0.01f64..3.0) {
            let mut up = lambda.clone();
            up[i] += t;
            prop_assert!(f_log(&up).unwrap() > f_log(&lambda).unwrap());
        }
    }
}
