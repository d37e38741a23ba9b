//! Legendre Gauss-Lobatto quadrature, tensor grids on axis-aligned boxes, and
//! the discrete inner products built from them.
//!
//! The 1D rule on [-1, 1] has N+1 nodes, the endpoints included, and is exact
//! for polynomials of degree at most 2N-1. Tensor weights are never stored:
//! they are formed on the fly from the 1D weights and the per-axis Jacobians.

use std::f64::consts::PI;
use std::fmt;

use crate::space::NodalField;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("polynomial degree must be at least 1, got {0}")]
    ZeroDegree(usize),
    #[error("LGL root finding did not converge for N = {degree} (node {node}, last step {step:e})")]
    NoConvergence { degree: usize, node: usize, step: f64 },
    #[error("grid dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: box bounds [{lower}, {upper}] are not increasing")]
    DegenerateBox { axis: usize, lower: f64, upper: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("fields have different component counts ({0} vs {1})")]
    ComponentMismatch(usize, usize),
    #[error("face axis {axis} out of range for a {dim}D grid")]
    InvalidFace { axis: usize, dim: usize },
}

/// Legendre polynomial L_n and its first derivative at `x`.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        // L'_{k+1} = L'_{k-1} + (2k+1) L_k
        let d_next = d_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// One-dimensional Legendre Gauss-Lobatto rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Lgl1D {
    degree: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Lgl1D {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f` on [-1, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Computes the degree-`n` LGL rule.
///
/// Interior nodes are the roots of (1-x²)L'_N(x), found by damped Newton
/// iteration seeded with the Chebyshev-Lobatto points. Using the Legendre
/// equation, the derivative of (1-x²)L'_N is -N(N+1)L_N, so each Newton step
/// only needs L_N and L'_N.
pub fn lgl_nodes_weights(n: usize) -> Result<Lgl1D, QuadError> {
    if n == 0 {
        return Err(QuadError::ZeroDegree(n));
    }
    let nf = n as f64;
    let lambda = nf * (nf + 1.0);
    let mut nodes = vec![0.0; n + 1];
    nodes[0] = -1.0;
    nodes[n] = 1.0;

    // Only the lower half is iterated; the rule is symmetric.
    for j in 1..=n / 2 {
        let mut x = -(PI * j as f64 / nf).cos();
        let mut converged = false;
        let mut last_step = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(n, x);
            let q = (1.0 - x * x) * dp;
            let dq = -lambda * p;
            let mut step = q / dq;
            // Damping keeps the iterate strictly inside (-1, 1) and in its
            // own bracket between neighbouring seeds.
            let max_step = 0.5 * (PI / nf).sin().powi(2);
            if step.abs() > max_step {
                step = step.signum() * max_step;
            }
            x -= step;
            last_step = step;
            if step.abs() <= NEWTON_TOL * (1.0 + x.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(QuadError::NoConvergence {
                degree: n,
                node: j,
                step: last_step,
            });
        }
        nodes[j] = x;
    }
    for j in n / 2 + 1..n {
        nodes[j] = -nodes[n - j];
    }
    if n % 2 == 0 {
        nodes[n / 2] = 0.0;
    }

    let weights = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre_with_derivative(n, x);
            2.0 / (lambda * p * p)
        })
        .collect();

    Ok(Lgl1D {
        degree: n,
        nodes,
        weights,
    })
}

/// Low or high end of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Low,
    High,
}

/// One of the 2d faces of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId {
    pub axis: usize,
    pub side: Side,
}

impl FaceId {
    pub fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    /// All faces of a `dim`-dimensional box, ordered x-, x+, y-, y+, ...
    pub fn all(dim: usize) -> Vec<FaceId> {
        (0..dim)
            .flat_map(|axis| [FaceId::new(axis, Side::Low), FaceId::new(axis, Side::High)])
            .collect()
    }

    /// Outward unit normal component along the face axis.
    pub fn normal_sign(&self) -> f64 {
        match self.side {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }

    /// Parses names of the form `x-`, `y+`, `z-`.
    pub fn parse(name: &str) -> Option<FaceId> {
        let mut chars = name.trim().chars();
        let axis = match chars.next()? {
            'x' => 0,
            'y' => 1,
            'z' => 2,
            _ => return None,
        };
        let side = match chars.next()? {
            '-' => Side::Low,
            '+' => Side::High,
            _ => return None,
        };
        if chars.next().is_some() {
            return None;
        }
        Some(FaceId::new(axis, side))
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = ["x", "y", "z"].get(self.axis).copied().unwrap_or("?");
        let side = match self.side {
            Side::Low => '-',
            Side::High => '+',
        };
        write!(f, "{axis}{side}")
    }
}

/// Tensor LGL grid mapped affinely onto an axis-aligned box.
///
/// Node (i_0, .., i_{d-1}) has flat index i_0 + (N+1) i_1 + (N+1)² i_2.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    dim: usize,
    rule: Lgl1D,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TensorGrid {
    pub fn new(dim: usize, degree: usize, lower: &[f64], upper: &[f64]) -> Result<Self, QuadError> {
        if !(2..=3).contains(&dim) || lower.len() != dim || upper.len() != dim {
            return Err(QuadError::BadDimension(dim));
        }
        for axis in 0..dim {
            // also rejects NaN bounds
            if !(upper[axis] > lower[axis]) {
                return Err(QuadError::DegenerateBox {
                    axis,
                    lower: lower[axis],
                    upper: upper[axis],
                });
            }
        }
        Ok(Self {
            dim,
            rule: lgl_nodes_weights(degree)?,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    /// The reference box (-1, 1)^d.
    pub fn reference(dim: usize, degree: usize) -> Result<Self, QuadError> {
        Self::new(dim, degree, &vec![-1.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.rule.degree
    }

    pub fn rule(&self) -> &Lgl1D {
        &self.rule
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Nodes per axis, N+1.
    pub fn n1d(&self) -> usize {
        self.rule.len()
    }

    /// Total node count (N+1)^d.
    pub fn len(&self) -> usize {
        self.n1d().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-length of the box along `axis`, the derivative of the affine map.
    pub fn jacobian(&self, axis: usize) -> f64 {
        0.5 * (self.upper[axis] - self.lower[axis])
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Maps a reference coordinate in [-1, 1] to the physical axis.
    pub fn map_coord(&self, axis: usize, xi: f64) -> f64 {
        self.lower[axis] + (xi + 1.0) * self.jacobian(axis)
    }

    /// Physical coordinate of 1D node `i` along `axis`.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        // Exact endpoints, independent of rounding in the map.
        if i == 0 {
            self.lower[axis]
        } else if i + 1 == self.n1d() {
            self.upper[axis]
        } else {
            self.map_coord(axis, self.rule.nodes[i])
        }
    }

    /// Scaled 1D weight of node `i` along `axis`.
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        self.rule.weights[i] * self.jacobian(axis)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let n1 = self.n1d();
        let mut idx = [0; 3];
        let mut rest = flat;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % n1;
            rest /= n1;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n1 = self.n1d();
        idx.iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &i| acc * n1 + i)
    }

    /// Stride of `axis` in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        self.n1d().pow(axis as u32)
    }

    /// Physical coordinates of node `flat` (unused trailing entries are 0).
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.axis_coord(axis, idx[axis]);
        }
        p
    }

    /// Volume quadrature weight of node `flat`, including Jacobians.
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        (0..self.dim).map(|a| self.axis_weight(a, idx[a])).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    pub fn check_face(&self, face: FaceId) -> Result<(), QuadError> {
        if face.axis >= self.dim {
            return Err(QuadError::InvalidFace {
                axis: face.axis,
                dim: self.dim,
            });
        }
        Ok(())
    }

    /// Whether node `flat` lies on the closed face.
    pub fn on_face(&self, flat: usize, face: FaceId) -> bool {
        let i = self.multi_index(flat)[face.axis];
        match face.side {
            Side::Low => i == 0,
            Side::High => i + 1 == self.n1d(),
        }
    }

    /// Flat indices of the nodes on a face, with their face quadrature
    /// weights (tensor product of the tangential scaled weights).
    pub fn face_nodes(&self, face: FaceId) -> Result<Vec<(usize, f64)>, QuadError> {
        self.check_face(face)?;
        let fixed = match face.side {
            Side::Low => 0,
            Side::High => self.n1d() - 1,
        };
        let tangential: Vec<usize> = (0..self.dim).filter(|&a| a != face.axis).collect();
        let n1 = self.n1d();
        let count = n1.pow(tangential.len() as u32);
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let mut idx = [0usize; 3];
            idx[face.axis] = fixed;
            let mut rest = k;
            let mut w = 1.0;
            for &a in &tangential {
                idx[a] = rest % n1;
                rest /= n1;
                w *= self.axis_weight(a, idx[a]);
            }
            out.push((self.flat_index(&idx[..self.dim]), w));
        }
        Ok(out)
    }
}

fn check_pair(u: &NodalField, v: &NodalField) -> Result<(), QuadError> {
    if !u.same_grid(v) {
        return Err(QuadError::GridMismatch);
    }
    if u.components() != v.components() {
        return Err(QuadError::ComponentMismatch(u.components(), v.components()));
    }
    Ok(())
}

/// Volume product (u, v)_N; vector fields are summed componentwise.
pub fn discrete_inner_product(u: &NodalField, v: &NodalField, g: &TensorGrid) -> Result<f64, QuadError> {
    check_pair(u, v)?;
    if u.grid() != g {
        return Err(QuadError::GridMismatch);
    }
    let n = g.len();
    let mut sum = 0.0;
    for node in 0..n {
        let w = g.weight(node);
        let mut s = 0.0;
        for c in 0..u.components() {
            s += u.values()[c * n + node] * v.values()[c * n + node];
        }
        sum += w * s;
    }
    Ok(sum)
}

/// Face product (u, v)_N^{Γ_ℓ}.
pub fn face_discrete_product(
    u: &NodalField,
    v: &NodalField,
    face: FaceId,
    g: &TensorGrid,
) -> Result<f64, QuadError> {
    check_pair(u, v)?;
    if u.grid() != g {
        return Err(QuadError::GridMismatch);
    }
    let n = g.len();
    let mut sum = 0.0;
    for (node, w) in g.face_nodes(face)? {
        for c in 0..u.components() {
            sum += w * u.values()[c * n + node] * v.values()[c * n + node];
        }
    }
    Ok(sum)
}

/// Sum of face products over the given faces.
pub fn gamma_n_product(
    u: &NodalField,
    v: &NodalField,
    faces: &[FaceId],
    g: &TensorGrid,
) -> Result<f64, QuadError> {
    faces
        .iter()
        .map(|&face| face_discrete_product(u, v, face, g))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn degree_one_is_trapezoid() {
        let r = lgl_nodes_weights(1).unwrap();
        assert_eq!(r.nodes(), &[-1.0, 1.0]);
        assert_eq!(r.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn degree_two_is_simpson() {
        let r = lgl_nodes_weights(2).unwrap();
        let expect_w = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
        for (got, want) in r.nodes().iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in r.weights().iter().zip(expect_w) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_degree_rejected() {
        assert_eq!(lgl_nodes_weights(0), Err(QuadError::ZeroDegree(0)));
    }

    #[test]
    fn rules_are_symmetric_and_sum_to_two() {
        for n in 1..=128 {
            let r = lgl_nodes_weights(n).unwrap();
            let s: f64 = r.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "N={n}: sum {s}");
            for i in 0..=n {
                assert!((r.nodes()[i] + r.nodes()[n - i]).abs() < 1e-15);
                assert!((r.weights()[i] - r.weights()[n - i]).abs() < 1e-14);
                assert!(r.weights()[i] > 0.0);
            }
            assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn odd_monomial_integrates_to_zero() {
        for n in 1..=64 {
            let r = lgl_nodes_weights(n).unwrap();
            let k = 2 * n as i32 - 1;
            assert!(r.integrate(|x| x.powi(k)).abs() <= 1e-12);
        }
    }

    #[test]
    fn nodes_are_roots_of_lobatto_polynomial() {
        let r = lgl_nodes_weights(17).unwrap();
        for &x in &r.nodes()[1..17] {
            let (_, d) = legendre_with_derivative(17, x);
            assert!(d.abs() < 1e-10, "L'_17({x}) = {d}");
        }
    }

    #[test]
    fn face_parse_display() {
        for f in FaceId::all(3) {
            assert_eq!(FaceId::parse(&f.to_string()), Some(f));
        }
        assert_eq!(FaceId::parse("w+"), None);
        assert_eq!(FaceId::parse("x"), None);
        assert_eq!(FaceId::parse("x+-"), None);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            TensorGrid::new(2, 3, &[0.0, 0.0], &[1.0, 0.0]),
            Err(QuadError::DegenerateBox { axis: 1, .. })
        ));
        assert!(matches!(TensorGrid::new(4, 3, &[0.0; 4], &[1.0; 4]), Err(QuadError::BadDimension(4))));
    }

    #[test]
    fn index_roundtrip() {
        let g = TensorGrid::reference(3, 4).unwrap();
        for k in 0..g.len() {
            let idx = g.multi_index(k);
            assert_eq!(g.flat_index(&idx[..3]), k);
        }
    }

    fn ones(g: &Arc<TensorGrid>) -> NodalField {
        NodalField::constant(g.clone(), 1, 1.0)
    }

    #[test]
    fn products_of_constants() {
        let g2 = Arc::new(TensorGrid::reference(2, 6).unwrap());
        let one = ones(&g2);
        assert!((discrete_inner_product(&one, &one, &g2).unwrap() - 4.0).abs() < 1e-13);
        let f = FaceId::new(0, Side::Low);
        assert!((face_discrete_product(&one, &one, f, &g2).unwrap() - 2.0).abs() < 1e-13);
        assert_eq!(gamma_n_product(&one, &one, &[], &g2).unwrap(), 0.0);
        let all = gamma_n_product(&one, &one, &FaceId::all(2), &g2).unwrap();
        assert!((all - 8.0).abs() < 1e-13);
        let single = gamma_n_product(&one, &one, &[f], &g2).unwrap();
        assert_eq!(single, face_discrete_product(&one, &one, f, &g2).unwrap());

        let g3 = Arc::new(TensorGrid::reference(3, 4).unwrap());
        let one = ones(&g3);
        let face = FaceId::new(2, Side::High);
        assert!((face_discrete_product(&one, &one, face, &g3).unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn odd_function_has_zero_mean() {
        let g = Arc::new(TensorGrid::reference(2, 5).unwrap());
        let x = NodalField::from_fn(g.clone(), |p| p[0]);
        let one = ones(&g);
        assert!(discrete_inner_product(&x, &one, &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = Arc::new(TensorGrid::reference(2, 5).unwrap());
        let b = Arc::new(TensorGrid::reference(2, 6).unwrap());
        let u = ones(&a);
        let v = ones(&b);
        assert_eq!(discrete_inner_product(&u, &v, &a), Err(QuadError::GridMismatch));
        let bad = FaceId::new(2, Side::Low);
        assert!(matches!(
            face_discrete_product(&u, &u, bad, &a),
            Err(QuadError::InvalidFace { .. })
        ));
    }

    #[test]
    fn physical_box_scales_weights() {
        let g = Arc::new(TensorGrid::new(3, 5, &[0.0; 3], &[1.0, 2.0, 0.5]).unwrap());
        let one = ones(&g);
        let vol = discrete_inner_product(&one, &one, &g).unwrap();
        assert!((vol - 1.0).abs() < 1e-13);
        let face = face_discrete_product(&one, &one, FaceId::new(0, Side::High), &g).unwrap();
        assert!((face - 1.0).abs() < 1e-13);
        assert_eq!(g.point(g.len() - 1), [1.0, 2.0, 0.5]);
    }
}
