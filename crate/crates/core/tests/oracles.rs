use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use darcy_spectral::expr::{parse, Env};
use darcy_spectral::quad::{discrete_inner_product, legendre_with_derivative, lgl_nodes_weights};
use darcy_spectral::space::gradient;
use darcy_spectral::{NodalField, TensorGrid};

/// Interior LGL nodes as eigenvalues of the Jacobi matrix of the (1,1)
/// Jacobi polynomials, whose zeros are those of L_N'.
fn golub_welsch_interior(n: usize) -> Vec<f64> {
    let m = n - 1;
    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let b = (kf * (kf + 2.0) / ((2.0 * kf + 1.0) * (2.0 * kf + 3.0))).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn nodes_match_golub_welsch() {
    for n in 2..=40 {
        let rule = lgl_nodes_weights(n).unwrap();
        let nodes = rule.nodes();
        assert_eq!(nodes[0], -1.0);
        assert_eq!(nodes[n], 1.0);
        for (a, b) in nodes[1..n].iter().zip(golub_welsch_interior(n)) {
            assert!((a - b).abs() < 1e-13, "N = {n}: {a} vs {b}");
        }
    }
}

/// Weights recovered from the moment conditions Σ_j w_j L_k(x_j) = 2 δ_k0.
#[test]
fn weights_match_moment_solve() {
    for n in 1..=20 {
        let rule = lgl_nodes_weights(n).unwrap();
        let x = rule.nodes();
        let a = DMatrix::from_fn(n + 1, n + 1, |k, j| legendre_with_derivative(k, x[j]).0);
        let mut rhs = DVector::zeros(n + 1);
        rhs[0] = 2.0;
        let w = a.lu().solve(&rhs).unwrap();
        for (got, want) in rule.weights().iter().zip(w.iter()) {
            assert!((got - want).abs() < 1e-12, "N = {n}: {got} vs {want}");
        }
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn horner_prime(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, a)| acc * x + k as f64 * a)
}

fn coeffs(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_exact_on_tensor_polynomials(cx in coeffs(9), cy in coeffs(9)) {
        let n = 8;
        let grid = Arc::new(TensorGrid::new(2, n, &[0.0, -1.0], &[2.0, 0.5]).unwrap());
        let f = NodalField::from_fn(grid.clone(), |x| horner(&cx, x[0]) * horner(&cy, x[1]));
        let g = gradient(&f);
        for i in 0..grid.len() {
            let x = grid.point(i);
            let dx = horner_prime(&cx, x[0]) * horner(&cy, x[1]);
            let dy = horner(&cx, x[0]) * horner_prime(&cy, x[1]);
            prop_assert!((g.component(0)[i] - dx).abs() < 1e-10);
            prop_assert!((g.component(1)[i] - dy).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolant_reproduces_polynomials_off_grid(
        c in coeffs(7), x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
    ) {
        let grid = Arc::new(TensorGrid::reference(3, 6).unwrap());
        let f = NodalField::from_fn(grid, |p| horner(&c, p[0]) * horner(&c, p[1] * 0.5) + p[2]);
        let got = f.evaluate_at(&[x, y, z])[0];
        let want = horner(&c, x) * horner(&c, y * 0.5) + z;
        prop_assert!((got - want).abs() < 1e-11, "{} vs {}", got, want);
    }

    #[test]
    fn discrete_product_is_exact_below_degree_2n(n in 2usize..12, cx in coeffs(12), cy in coeffs(12)) {
        // degree per axis of the product must stay ≤ 2N − 1
        let cx = &cx[..cx.len().min(n)];
        let cy = &cy[..cy.len().min(n)];
        let grid = Arc::new(TensorGrid::reference(2, n).unwrap());
        let u = NodalField::from_fn(grid.clone(), |p| horner(cx, p[0]));
        let v = NodalField::from_fn(grid.clone(), |p| horner(cy, p[1]) * p[0].powi(n as i32 - 1));
        let got = discrete_inner_product(&u, &v, &grid).unwrap();
        let mono = |k: usize| if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        let ix: f64 = cx.iter().enumerate().map(|(k, a)| a * mono(k + n - 1)).sum();
        let iy: f64 = cy.iter().enumerate().map(|(k, a)| a * mono(k)).sum();
        prop_assert!((got - ix * iy).abs() < 1e-12, "{} vs {}", got, ix * iy);
        let back = discrete_inner_product(&v, &u, &grid).unwrap();
        prop_assert_eq!(got, back);
    }

    #[test]
    fn parsed_expressions_differentiate_like_finite_differences(a in 0.1..3.0f64, x in -1.0..1.0f64) {
        let e = parse(&format!("exp({a}*x)*sin(x^2) / (2 + cos(x))")).unwrap();
        let d = e.diff(darcy_spectral::Var::X);
        let h = 1e-6;
        let at = |s: f64| e.eval(&Env::at(&[s], 0.0)).unwrap();
        let fd = (at(x + h) - at(x - h)) / (2.0 * h);
        let sym = d.eval(&Env::at(&[x], 0.0)).unwrap();
        prop_assert!((sym - fd).abs() <= 1e-6 * sym.abs().max(1.0));
    }
}
