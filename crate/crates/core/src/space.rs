//! Nodal representation of ℙ_N(Ω) on a tensor LGL grid.
//!
//! A field is stored by its values at the grid nodes, which is the same as its
//! coefficients in the tensor Lagrange basis. Derivatives are taken with dense
//! 1D differentiation matrices applied along one axis at a time, and off-grid
//! evaluation uses the barycentric form of the Lagrange interpolant.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::quad::{FaceId, QuadError, TensorGrid};

/// Scalar or vector field sampled at the nodes of a grid.
///
/// Values are component-major: component `c` of node `k` sits at
/// `c * grid.len() + k`.
#[derive(Debug, Clone)]
pub struct NodalField {
    grid: Arc<TensorGrid>,
    components: usize,
    values: Vec<f64>,
}

impl PartialEq for NodalField {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.components == other.components && self.values == other.values
    }
}

impl NodalField {
    pub fn zeros(grid: Arc<TensorGrid>, components: usize) -> Self {
        let values = vec![0.0; components * grid.len()];
        Self { grid, components, values }
    }

    pub fn constant(grid: Arc<TensorGrid>, components: usize, c: f64) -> Self {
        let values = vec![c; components * grid.len()];
        Self { grid, components, values }
    }

    /// Wraps raw values. Panics if the length does not match the grid.
    pub fn from_values(grid: Arc<TensorGrid>, components: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), components * grid.len(), "nodal value count");
        Self { grid, components, values }
    }

    /// Scalar field from an infallible function of the physical point.
    pub fn from_fn(grid: Arc<TensorGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len()).map(|k| f(&grid.point(k)[..dim])).collect();
        Self { grid, components: 1, values }
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TensorGrid> {
        &self.grid
    }

    pub fn same_grid(&self, other: &NodalField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Component `c` as a scalar field.
    pub fn component_field(&self, c: usize) -> NodalField {
        NodalField::from_values(self.grid.clone(), 1, self.component(c).to_vec())
    }

    /// Stacks scalar fields into a vector field.
    pub fn stack(parts: &[NodalField]) -> NodalField {
        let grid = parts[0].grid.clone();
        let mut values = Vec::with_capacity(parts.len() * grid.len());
        for p in parts {
            assert!(p.same_grid(&parts[0]) && p.components == 1);
            values.extend_from_slice(&p.values);
        }
        NodalField::from_values(grid, parts.len(), values)
    }

    /// `self - other`, same grid and shape required.
    pub fn sub(&self, other: &NodalField) -> NodalField {
        assert!(self.same_grid(other) && self.components == other.components);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        NodalField::from_values(self.grid.clone(), self.components, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete mean (f, 1)_N / |Ω| of each component.
    pub fn discrete_mean(&self) -> Vec<f64> {
        let vol = self.grid.volume();
        (0..self.components)
            .map(|c| {
                self.component(c)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| self.grid.weight(k) * v)
                    .sum::<f64>()
                    / vol
            })
            .collect()
    }

    /// Evaluates the interpolating polynomial of every component at `x`.
    pub fn evaluate_at(&self, x: &[f64]) -> Vec<f64> {
        let basis = LagrangeBasisAt::new(&self.grid, x);
        (0..self.components)
            .map(|c| basis.contract(&self.grid, self.component(c)))
            .collect()
    }
}

/// Barycentric weights of the 1D Lagrange basis on `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                w[j] /= nodes[j] - nodes[k];
            }
        }
    }
    // Rescale to keep the weights O(1); the ratios are what matter.
    let scale = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    w.iter_mut().for_each(|v| *v /= scale);
    w
}

/// Values of all 1D Lagrange basis polynomials at `x`.
pub fn lagrange_basis_values(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&xj| x == xj) {
        let mut out = vec![0.0; nodes.len()];
        out[j] = 1.0;
        return out;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&xj, &wj)| wj / (x - xj)).collect();
    let denom: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / denom).collect()
}

struct LagrangeBasisAt {
    per_axis: Vec<Vec<f64>>,
}

impl LagrangeBasisAt {
    fn new(grid: &TensorGrid, x: &[f64]) -> Self {
        let nodes = grid.rule().nodes();
        let bary = barycentric_weights(nodes);
        let per_axis = (0..grid.dim())
            .map(|a| {
                // back to reference coordinates
                let xi = (x[a] - grid.lower()[a]) / grid.jacobian(a) - 1.0;
                let xi = if x[a] == grid.lower()[a] {
                    -1.0
                } else if x[a] == grid.upper()[a] {
                    1.0
                } else {
                    xi
                };
                lagrange_basis_values(nodes, &bary, xi)
            })
            .collect();
        Self { per_axis }
    }

    fn contract(&self, grid: &TensorGrid, values: &[f64]) -> f64 {
        let n1 = grid.n1d();
        match grid.dim() {
            2 => {
                let (bx, by) = (&self.per_axis[0], &self.per_axis[1]);
                (0..n1)
                    .map(|j| by[j] * (0..n1).map(|i| bx[i] * values[i + n1 * j]).sum::<f64>())
                    .sum()
            }
            _ => {
                let (bx, by, bz) = (&self.per_axis[0], &self.per_axis[1], &self.per_axis[2]);
                let mut s = 0.0;
                for k in 0..n1 {
                    for j in 0..n1 {
                        let row = &values[n1 * (j + n1 * k)..n1 * (j + n1 * k) + n1];
                        let inner: f64 = row.iter().zip(bx).map(|(v, b)| v * b).sum();
                        s += bz[k] * by[j] * inner;
                    }
                }
                s
            }
        }
    }
}

/// Dense derivative matrix of the Lagrange basis along one axis, scaled to
/// physical coordinates. `entry(i, j)` is ℓ_j'(x_i).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    axis: usize,
    n: usize,
    data: Vec<f64>,
}

impl DiffMatrix {
    pub fn new(grid: &TensorGrid, axis: usize) -> Self {
        let nodes = grid.rule().nodes();
        let n = nodes.len();
        let bary = barycentric_weights(nodes);
        let scale = 1.0 / grid.jacobian(axis);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    data[i * n + j] = d * scale;
                    diag -= d;
                }
            }
            // negative sum trick: rows annihilate constants
            data[i * n + i] = diag * scale;
        }
        Self { axis, n, data }
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `out = D f` along this matrix's axis for a scalar nodal array.
    pub fn apply(&self, grid: &TensorGrid, f: &[f64], out: &mut [f64]) {
        self.apply_impl(grid, f, out, false)
    }

    /// `out = Dᵀ f` along this matrix's axis.
    pub fn apply_transpose(&self, grid: &TensorGrid, f: &[f64], out: &mut [f64]) {
        self.apply_impl(grid, f, out, true)
    }

    fn apply_impl(&self, grid: &TensorGrid, f: &[f64], out: &mut [f64], transpose: bool) {
        let n1 = self.n;
        let stride = grid.stride(self.axis);
        let total = grid.len();
        let outer = total / (stride * n1);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * stride * n1 + s;
                for i in 0..n1 {
                    let mut acc = 0.0;
                    for j in 0..n1 {
                        let a = if transpose { self.data[j * n1 + i] } else { self.data[i * n1 + j] };
                        acc += a * f[base + j * stride];
                    }
                    out[base + i * stride] = acc;
                }
            }
        }
    }
}

/// Per-axis differentiation matrices for a grid.
#[derive(Debug, Clone)]
pub struct Differentiator {
    mats: Vec<DiffMatrix>,
}

impl Differentiator {
    pub fn new(grid: &TensorGrid) -> Self {
        Self {
            mats: (0..grid.dim()).map(|a| DiffMatrix::new(grid, a)).collect(),
        }
    }

    pub fn axis(&self, a: usize) -> &DiffMatrix {
        &self.mats[a]
    }
}

/// Node classification for one scalar unknown: nodes on a closed Dirichlet
/// face are Dirichlet; remaining nodes on a Neumann face are Neumann; the rest
/// are interior.
#[derive(Debug, Clone, PartialEq)]
pub struct DofPartition {
    pub interior: Vec<usize>,
    pub dirichlet: Vec<usize>,
    pub neumann: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("face {0} assigned to both the Dirichlet and the Neumann part")]
    Overlap(FaceId),
    #[error("face {0} assigned to neither boundary part")]
    Unassigned(FaceId),
    #[error("the Dirichlet boundary is empty")]
    EmptyDirichlet,
}

impl DofPartition {
    pub fn new(grid: &TensorGrid, dirichlet: &[FaceId], neumann: &[FaceId]) -> Result<Self, PartitionError> {
        for &f in dirichlet.iter().chain(neumann) {
            grid.check_face(f)?;
        }
        let d: BTreeSet<FaceId> = dirichlet.iter().copied().collect();
        let n: BTreeSet<FaceId> = neumann.iter().copied().collect();
        if let Some(&f) = d.intersection(&n).next() {
            return Err(PartitionError::Overlap(f));
        }
        for f in FaceId::all(grid.dim()) {
            if !d.contains(&f) && !n.contains(&f) {
                return Err(PartitionError::Unassigned(f));
            }
        }
        if d.is_empty() {
            return Err(PartitionError::EmptyDirichlet);
        }
        let mut part = DofPartition {
            interior: Vec::new(),
            dirichlet: Vec::new(),
            neumann: Vec::new(),
        };
        for k in 0..grid.len() {
            if d.iter().any(|&f| grid.on_face(k, f)) {
                part.dirichlet.push(k);
            } else if n.iter().any(|&f| grid.on_face(k, f)) {
                part.neumann.push(k);
            } else {
                part.interior.push(k);
            }
        }
        Ok(part)
    }

    /// Interior and Neumann nodes in increasing order.
    pub fn free(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.interior.iter().chain(&self.neumann).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Nodal values of the Dirichlet data, aligned with `DofPartition::dirichlet`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

/// 𝓘_N f: samples a scalar function at every node.
pub fn interpolate<E>(
    grid: &Arc<TensorGrid>,
    f: impl Fn(&[f64]) -> Result<f64, E>,
) -> Result<NodalField, E> {
    let dim = grid.dim();
    let values = (0..grid.len())
        .map(|k| f(&grid.point(k)[..dim]))
        .collect::<Result<Vec<_>, E>>()?;
    Ok(NodalField::from_values(grid.clone(), 1, values))
}

/// i_N^{Γ_D} f: samples `f` at the Dirichlet nodes of `partition`.
pub fn boundary_interpolate<E>(
    grid: &TensorGrid,
    partition: &DofPartition,
    f: impl Fn(&[f64]) -> Result<f64, E>,
) -> Result<BoundaryValues, E> {
    let dim = grid.dim();
    let values = partition
        .dirichlet
        .iter()
        .map(|&k| f(&grid.point(k)[..dim]))
        .collect::<Result<Vec<_>, E>>()?;
    Ok(BoundaryValues {
        nodes: partition.dirichlet.clone(),
        values,
    })
}

/// Nodal gradient of a scalar field.
pub fn gradient(f: &NodalField) -> NodalField {
    gradient_with(f, &Differentiator::new(f.grid()))
}

pub fn gradient_with(f: &NodalField, diff: &Differentiator) -> NodalField {
    assert_eq!(f.components(), 1, "gradient of a scalar field");
    let g = f.grid();
    let n = g.len();
    let mut values = vec![0.0; g.dim() * n];
    for a in 0..g.dim() {
        diff.axis(a).apply(g, f.values(), &mut values[a * n..(a + 1) * n]);
    }
    NodalField::from_values(f.grid_arc().clone(), g.dim(), values)
}

/// Quadrature L² norm of all components.
pub fn l2_norm(f: &NodalField) -> f64 {
    let g = f.grid();
    let n = g.len();
    let mut s = 0.0;
    for k in 0..n {
        let w = g.weight(k);
        for c in 0..f.components() {
            let v = f.values()[c * n + k];
            s += w * v * v;
        }
    }
    s.sqrt()
}

/// Quadrature H¹ norm (‖f‖² + ‖∇f‖²)^{1/2} of a scalar field.
pub fn h1_norm(f: &NodalField) -> f64 {
    let l2 = l2_norm(f);
    let grad = l2_norm(&gradient(f));
    (l2 * l2 + grad * grad).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Side;
    use std::convert::Infallible;

    fn grid(dim: usize, n: usize) -> Arc<TensorGrid> {
        Arc::new(TensorGrid::reference(dim, n).unwrap())
    }

    fn ok(v: f64) -> Result<f64, Infallible> {
        Ok(v)
    }

    #[test]
    fn diff_matrix_rows_sum_to_zero_and_differentiate_x() {
        let g = TensorGrid::new(2, 9, &[0.0, -2.0], &[3.0, 5.0]).unwrap();
        for axis in 0..2 {
            let d = DiffMatrix::new(&g, axis);
            for i in 0..d.size() {
                let row: f64 = (0..d.size()).map(|j| d.entry(i, j)).sum();
                assert!(row.abs() < 1e-12);
                let dx: f64 = (0..d.size()).map(|j| d.entry(i, j) * g.axis_coord(axis, j)).sum();
                assert!((dx - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolate_constant_and_bounded() {
        let g = grid(2, 10);
        let one = interpolate(&g, |_| ok(1.0)).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let s = interpolate(&g, |p| ok((std::f64::consts::PI * p[0]).sin())).unwrap();
        assert!(s.max_abs() <= 1.0);
    }

    #[test]
    fn interpolant_reproduces_quadratic_off_grid() {
        let g = grid(2, 4);
        let f = interpolate(&g, |p| ok(p[0] * p[0])).unwrap();
        for &x in &[-0.93, -0.2, 0.31, 0.777] {
            let v = f.evaluate_at(&[x, 0.123])[0];
            assert!((v - x * x).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_examples() {
        let g = grid(2, 6);
        let c = NodalField::constant(g.clone(), 1, 3.5);
        assert!(gradient(&c).max_abs() < 1e-12);

        let sq = NodalField::from_fn(g.clone(), |p| p[0] * p[0]);
        let gr = gradient(&sq);
        for k in 0..g.len() {
            let p = g.point(k);
            assert!((gr.component(0)[k] - 2.0 * p[0]).abs() < 1e-12);
            assert!(gr.component(1)[k].abs() < 1e-12);
        }

        let xy = NodalField::from_fn(g.clone(), |p| p[0] * p[1]);
        let gr = gradient(&xy);
        for k in 0..g.len() {
            let p = g.point(k);
            assert!((gr.component(0)[k] - p[1]).abs() < 1e-12);
            assert!((gr.component(1)[k] - p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_3d_along_z() {
        let g = Arc::new(TensorGrid::new(3, 5, &[0.0; 3], &[1.0; 3]).unwrap());
        let f = NodalField::from_fn(g.clone(), |p| p[0] * p[2] * p[2] + p[1]);
        let gr = gradient(&f);
        for k in 0..g.len() {
            let p = g.point(k);
            assert!((gr.component(0)[k] - p[2] * p[2]).abs() < 1e-11);
            assert!((gr.component(1)[k] - 1.0).abs() < 1e-11);
            assert!((gr.component(2)[k] - 2.0 * p[0] * p[2]).abs() < 1e-11);
        }
    }

    #[test]
    fn norm_examples() {
        let g = grid(2, 5);
        let zero = NodalField::zeros(g.clone(), 1);
        assert_eq!(l2_norm(&zero), 0.0);
        assert_eq!(h1_norm(&zero), 0.0);
        let one = NodalField::constant(g.clone(), 1, 1.0);
        assert!((l2_norm(&one) - 2.0).abs() < 1e-13);
        assert!((h1_norm(&one) - 2.0).abs() < 1e-12);
        let x = NodalField::from_fn(g.clone(), |p| p[0]);
        assert!((l2_norm(&x) - (4.0f64 / 3.0).sqrt()).abs() < 1e-13);
        assert!((h1_norm(&x) - (4.0f64 / 3.0 + 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn partition_dirichlet_wins_at_corners() {
        let g = TensorGrid::reference(2, 4).unwrap();
        let d = [FaceId::new(0, Side::Low)];
        let n = [FaceId::new(0, Side::High), FaceId::new(1, Side::Low), FaceId::new(1, Side::High)];
        let p = DofPartition::new(&g, &d, &n).unwrap();
        assert_eq!(p.dirichlet.len(), 5);
        assert_eq!(p.neumann.len(), 16 - 5);
        assert_eq!(p.interior.len(), 9);
        let mut all: Vec<usize> = p.interior.iter().chain(&p.dirichlet).chain(&p.neumann).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..g.len()).collect::<Vec<_>>());
        // corner (x=-1, y=-1) belongs to both closures
        assert!(p.dirichlet.contains(&0));
    }

    #[test]
    fn partition_errors() {
        let g = TensorGrid::reference(2, 3).unwrap();
        let all = FaceId::all(2);
        assert_eq!(DofPartition::new(&g, &[], &all), Err(PartitionError::EmptyDirichlet));
        assert_eq!(
            DofPartition::new(&g, &all, &all[..1]),
            Err(PartitionError::Overlap(all[0]))
        );
        assert_eq!(
            DofPartition::new(&g, &all[1..], &[]),
            Err(PartitionError::Unassigned(all[0]))
        );
    }

    #[test]
    fn boundary_interpolation_matches_volume_interpolation() {
        let g = grid(2, 6);
        let part = DofPartition::new(&g, &FaceId::all(2), &[]).unwrap();
        let phi = |p: &[f64]| ok(p[0].powi(3) - 2.0 * p[1] * p[0] + 0.5);
        let vol = interpolate(&g, phi).unwrap();
        let bnd = boundary_interpolate(&g, &part, phi).unwrap();
        for (k, v) in bnd.nodes.iter().zip(&bnd.values) {
            assert_eq!(vol.values()[*k], *v);
        }
        let c = boundary_interpolate(&g, &part, |_| ok(2.5)).unwrap();
        assert!(c.values.iter().all(|&v| v == 2.5));
        assert_eq!(c.nodes.len(), 4 * 6);
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = TensorGrid::reference(3, 3).unwrap();
        let d = DiffMatrix::new(&g, 1);
        let a: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let mut da = vec![0.0; g.len()];
        let mut dtb = vec![0.0; g.len()];
        d.apply(&g, &a, &mut da);
        d.apply_transpose(&g, &b, &mut dtb);
        let lhs: f64 = da.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&dtb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0));
    }
}
