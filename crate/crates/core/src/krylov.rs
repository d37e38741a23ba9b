//! Matrix-free Krylov solvers: restarted GMRES with right preconditioning
//! and a projected conjugate gradient for semidefinite systems whose kernel
//! is the constants.

/// A linear map on ℝⁿ given by its action.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Adapts a closure into a [`LinearOp`].
pub struct FnOp<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOp<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub struct Identity(pub usize);

impl LinearOp for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Multiplication by the inverse of a stored diagonal.
#[derive(Debug, Clone)]
pub struct DiagonalInverse {
    inv: Vec<f64>,
}

impl DiagonalInverse {
    /// Zero diagonal entries are left unscaled.
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv: diag
                .iter()
                .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl LinearOp for DiagonalInverse {
    fn dim(&self) -> usize {
        self.inv.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.inv) {
            *yi = xi * di;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 50,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub restarts: usize,
    /// Relative residual estimate after each iteration.
    pub history: Vec<f64>,
}

impl SolveReport {
    fn trivial() -> Self {
        Self {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            restarts: 0,
            history: Vec::new(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn residual(a: &dyn LinearOp, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Restarted GMRES(m) with right preconditioning and modified Gram-Schmidt.
///
/// Starts from `x0` (zero when `None`). On return `converged` holds exactly
/// when the recomputed relative residual ‖b − Ax‖/‖b‖ is within `cfg.tol`;
/// otherwise the last iterate is returned.
pub fn gmres(
    a: &dyn LinearOp,
    b: &[f64],
    m: &dyn LinearOp,
    x0: Option<&[f64]>,
    cfg: &GmresConfig,
) -> (Vec<f64>, SolveReport) {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    assert_eq!(m.dim(), n, "preconditioner dimension");
    let restart = cfg.restart.max(1);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (vec![0.0; n], SolveReport::trivial());
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut report = SolveReport {
        iterations: 0,
        relative_residual: f64::INFINITY,
        converged: false,
        restarts: 0,
        history: Vec::new(),
    };
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];

    loop {
        residual(a, b, &x, &mut r);
        let beta = norm(&r);
        report.relative_residual = beta / b_norm;
        if report.relative_residual <= cfg.tol {
            report.converged = true;
            return (x, report);
        }
        if report.iterations >= cfg.max_iter {
            return (x, report);
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, each of length j + 2
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<f64> = Vec::with_capacity(restart);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        let mut breakdown = false;

        while k < restart && report.iterations < cfg.max_iter {
            m.apply(&basis[k], &mut z);
            a.apply(&z, &mut w);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                axpy(-hij, v, &mut w);
            }
            let h_next = norm(&w);
            col[k + 1] = h_next;
            for i in 0..k {
                let tmp = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = tmp;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[k] / rho, col[k + 1] / rho) };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            k += 1;
            report.iterations += 1;
            let est = g[k].abs() / b_norm;
            report.history.push(est);
            if h_next <= 1e-14 * beta {
                breakdown = true;
                break;
            }
            if est <= cfg.tol {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // back substitution for the small triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().skip(i + 1) {
                s -= h[j][i] * yj;
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut update);
        }
        m.apply(&update, &mut z);
        axpy(1.0, &z, &mut x);

        if breakdown {
            residual(a, b, &x, &mut r);
            report.relative_residual = norm(&r) / b_norm;
            report.converged = report.relative_residual <= cfg.tol;
            if report.converged {
                return (x, report);
            }
        }
        report.restarts += 1;
    }
}

/// Projection onto the admissible subspace of a semidefinite solve, and its
/// transpose for residuals.
pub trait Projector {
    fn project(&self, x: &mut [f64]);
    fn project_residual(&self, r: &mut [f64]);
}

/// Removes the weighted mean: x ↦ x − (w·x / Σw) 1. The residual projection
/// is the transpose, r ↦ r − w (1·r) / Σw.
#[derive(Debug, Clone)]
pub struct ZeroMean {
    weights: Vec<f64>,
    total: f64,
}

impl ZeroMean {
    pub fn new(weights: Vec<f64>) -> Self {
        let total = weights.iter().sum();
        Self { weights, total }
    }

    pub fn unweighted(n: usize) -> Self {
        Self::new(vec![1.0; n])
    }
}

impl Projector for ZeroMean {
    fn project(&self, x: &mut [f64]) {
        let mean = dot(&self.weights, x) / self.total;
        x.iter_mut().for_each(|v| *v -= mean);
    }

    fn project_residual(&self, r: &mut [f64]) {
        let s: f64 = r.iter().sum::<f64>() / self.total;
        for (ri, wi) in r.iter_mut().zip(&self.weights) {
            *ri -= wi * s;
        }
    }
}

/// Leaves vectors unchanged; turns [`cg_semidefinite`] into plain PCG.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProjection;

impl Projector for NoProjection {
    fn project(&self, _x: &mut [f64]) {}

    fn project_residual(&self, _r: &mut [f64]) {}
}

/// Extra passes restarted from the true residual when round-off leaves the
/// recurrence residual below tolerance but the true one above it.
const CG_REFINEMENTS: usize = 3;

/// Preconditioned conjugate gradient for a symmetric positive semidefinite
/// operator restricted to the range of `projector`.
///
/// `restarts` in the report counts refinement passes.
pub fn cg_semidefinite(
    s: &dyn LinearOp,
    b: &[f64],
    precond: &dyn LinearOp,
    projector: &dyn Projector,
    cfg: &CgConfig,
) -> (Vec<f64>, SolveReport) {
    let n = s.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let mut r = b.to_vec();
    projector.project_residual(&mut r);
    let b_norm = norm(&r);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return (x, SolveReport::trivial());
    }
    let mut report = SolveReport {
        iterations: 0,
        relative_residual: 1.0,
        converged: false,
        restarts: 0,
        history: Vec::new(),
    };
    for pass in 0..=CG_REFINEMENTS {
        let budget = cfg.max_iter - report.iterations;
        let done = cg_pass(s, &mut r, &mut x, precond, projector, cfg.tol, b_norm, budget, &mut report.history);
        report.iterations += done;
        report.restarts = pass;
        projector.project(&mut x);
        residual(s, b, &x, &mut r);
        projector.project_residual(&mut r);
        report.relative_residual = norm(&r) / b_norm;
        report.converged = report.relative_residual <= cfg.tol;
        if report.converged || done == 0 || report.iterations >= cfg.max_iter {
            break;
        }
    }
    (x, report)
}

/// One CG pass on the correction equation with residual `r` until
/// ‖r‖ ≤ tol·b_norm; updates `x` and `r` in place and returns the number of iterations taken.
#[allow(clippy::too_many_arguments)]
fn cg_pass(
    s: &dyn LinearOp,
    r: &mut [f64],
    x: &mut [f64],
    precond: &dyn LinearOp,
    projector: &dyn Projector,
    tol: f64,
    b_norm: f64,
    max_iter: usize,
    history: &mut Vec<f64>,
) -> usize {
    let n = r.len();
    let abs_tol = tol * b_norm;
    if norm(r) <= abs_tol {
        return 0;
    }
    let mut z = vec![0.0; n];
    precond.apply(r, &mut z);
    projector.project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(r, &z);
    let mut q = vec![0.0; n];
    let mut its = 0;
    while its < max_iter {
        s.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, r);
        projector.project_residual(r);
        its += 1;
        let rn = norm(r);
        history.push(rn / b_norm);
        if rn <= abs_tol {
            break;
        }
        precond.apply(r, &mut z);
        projector.project(&mut z);
        let rz_new = dot(r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    its
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<f64>,
    }

    impl LinearOp for Dense {
        fn dim(&self) -> usize {
            self.n
        }

        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum();
            }
        }
    }

    fn nonsymmetric(n: usize) -> Dense {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 4.0 + i as f64 * 0.1;
            if i + 1 < n {
                a[i * n + i + 1] = -1.3;
                a[(i + 1) * n + i] = -0.4;
            }
            a[i * n + (i * 7) % n] += 0.25;
        }
        Dense { n, a }
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        let (x, rep) = gmres(&Identity(10), &b, &Identity(10), None, &GmresConfig::default());
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_system_matches_inverse() {
        let n = 40;
        let op = FnOp::new(n, |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = (i + 1) as f64 * x[i];
            }
        });
        let b = vec![1.0; n];
        let cfg = GmresConfig { tol: 1e-12, ..Default::default() };
        let (x, rep) = gmres(&op, &b, &Identity(n), None, &cfg);
        assert!(rep.converged);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn restarted_gmres_true_residual_and_monotone_history() {
        let a = nonsymmetric(60);
        let b: Vec<f64> = (0..60).map(|i| ((i * 13) % 7) as f64 - 2.5).collect();
        let diag: Vec<f64> = (0..60).map(|i| a.a[i * 60 + i]).collect();
        let m = DiagonalInverse::new(&diag);
        let cfg = GmresConfig { tol: 1e-10, restart: 5, max_iter: 500 };
        let (x, rep) = gmres(&a, &b, &m, None, &cfg);
        assert!(rep.converged);
        assert!(rep.restarts > 0);
        let mut r = vec![0.0; 60];
        residual(&a, &b, &x, &mut r);
        assert!(norm(&r) <= 2.0 * cfg.tol * norm(&b));
        // within each cycle the estimate never increases
        for cycle in rep.history.chunks(cfg.restart) {
            assert!(cycle.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
        let (x2, rep2) = gmres(&a, &b, &m, None, &cfg);
        assert_eq!(x, x2);
        assert_eq!(rep, rep2);
    }

    #[test]
    fn max_iterations_reported() {
        let a = nonsymmetric(30);
        let b = vec![1.0; 30];
        let cfg = GmresConfig { tol: 1e-14, restart: 2, max_iter: 3 };
        let (_, rep) = gmres(&a, &b, &Identity(30), None, &cfg);
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn cg_zero_rhs() {
        let (x, rep) = cg_semidefinite(
            &Identity(5),
            &[0.0; 5],
            &Identity(5),
            &ZeroMean::unweighted(5),
            &CgConfig::default(),
        );
        assert_eq!(x, vec![0.0; 5]);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn cg_projected_identity() {
        let n = 7;
        let proj = ZeroMean::unweighted(n);
        let op = FnOp::new(n, |x: &[f64], y: &mut [f64]| {
            y.copy_from_slice(x);
            ZeroMean::unweighted(x.len()).project(y);
        });
        let b: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let (x, rep) = cg_semidefinite(&op, &b, &Identity(n), &proj, &CgConfig::default());
        assert!(rep.converged);
        let mut want = b.clone();
        proj.project(&mut want);
        for (xi, wi) in x.iter().zip(&want) {
            assert!((xi - wi).abs() < 1e-13);
        }
    }
}
