//! Uniform tensor-product Q1 meshes on the periodic unit cell and on
//! axis-aligned Dirichlet boxes.
//!
//! Points and matrices are stored in fixed-size arrays sized for the maximum
//! supported dimension (2); only the first `dim` entries are meaningful.

use crate::error::{Error, Result};

/// A spatial point. For `dim == 1` the second entry is zero and ignored.
pub type Point = [f64; 2];

/// A symmetric coefficient matrix. For `dim == 1` only `m[0][0]` is used.
pub type Matrix = [[f64; 2]; 2];

/// Identity matrix padded to the storage size.
pub const IDENTITY: Matrix = [[1.0, 0.0], [0.0, 1.0]];

/// Maps x to the half-open unit interval [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Wraps every used component of a point into [0, 1)^dim.
pub fn wrap_point(x: Point, dim: usize) -> Point {
    let mut y = [0.0; 2];
    for d in 0..dim {
        y[d] = wrap_unit(x[d]);
    }
    y
}

/// Q1 shape function values at a local point in \[0,1\]^dim, in the local node
/// order (0,0), (1,0), (1,1), (0,1) (first two for dim 1).
pub fn shape_values(dim: usize, xi: Point) -> [f64; 4] {
    match dim {
        1 => [1.0 - xi[0], xi[0], 0.0, 0.0],
        2 => [
            (1.0 - xi[0]) * (1.0 - xi[1]),
            xi[0] * (1.0 - xi[1]),
            xi[0] * xi[1],
            (1.0 - xi[0]) * xi[1],
        ],
        _ => unreachable!(),
    }
}

/// Local-coordinate gradients of the Q1 shape functions at a local point.
pub fn shape_grads(dim: usize, xi: Point) -> [[f64; 2]; 4] {
    match dim {
        1 => [[-1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        2 => [
            [-(1.0 - xi[1]), -(1.0 - xi[0])],
            [1.0 - xi[1], -xi[0]],
            [xi[1], xi[0]],
            [-xi[1], 1.0 - xi[0]],
        ],
        _ => unreachable!(),
    }
}

/// Axis-aligned box domain with homogeneous Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub dim: usize,
    pub min: Point,
    pub max: Point,
}

impl BoxDomain {
    pub fn new(dim: usize, min: Point, max: Point) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("unsupported dimension {dim}")));
        }
        for d in 0..dim {
            if !(max[d] > min[d]) || !min[d].is_finite() || !max[d].is_finite() {
                return Err(Error::Config(format!(
                    "degenerate domain on axis {d}: [{}, {}]",
                    min[d], max[d]
                )));
            }
        }
        Ok(Self { dim, min, max })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            dim,
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        }
    }

    pub fn side(&self, d: usize) -> f64 {
        self.max[d] - self.min[d]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|d| self.side(d)).product()
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..self.dim).all(|d| x[d] >= self.min[d] - 1e-12 && x[d] <= self.max[d] + 1e-12)
    }
}

/// Uniform mesh of the periodic unit cell (0,1)^dim with wrapped indexing.
/// Node and element counts are both n^dim; spacing h = 1/n.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    pub dim: usize,
    pub n: usize,
}

impl PeriodicMesh {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("unsupported dimension {dim}")));
        }
        if n < 2 {
            return Err(Error::Config(format!("periodic mesh needs n >= 2, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn n_elements(&self) -> usize {
        self.n_nodes()
    }

    pub fn corners_per_element(&self) -> usize {
        1 << self.dim
    }

    fn node_id(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    pub fn node_coord(&self, id: usize) -> Point {
        let h = self.h();
        match self.dim {
            1 => [id as f64 * h, 0.0],
            _ => [(id % self.n) as f64 * h, (id / self.n) as f64 * h],
        }
    }

    /// Global node ids of an element's corners, wrapped across the seam,
    /// in the local Q1 order.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let n = self.n;
        match self.dim {
            1 => {
                let i = e;
                [i, (i + 1) % n, usize::MAX, usize::MAX]
            }
            _ => {
                let i = e % n;
                let j = e / n;
                let ip = (i + 1) % n;
                let jp = (j + 1) % n;
                [
                    self.node_id(i, j),
                    self.node_id(ip, j),
                    self.node_id(ip, jp),
                    self.node_id(i, jp),
                ]
            }
        }
    }

    /// Lower corner of an element in physical coordinates.
    pub fn element_origin(&self, e: usize) -> Point {
        let h = self.h();
        match self.dim {
            1 => [e as f64 * h, 0.0],
            _ => [(e % self.n) as f64 * h, (e / self.n) as f64 * h],
        }
    }

    /// Element containing a wrapped point, with local coordinates in \[0,1\]^dim.
    pub fn locate(&self, y: Point) -> (usize, Point) {
        let n = self.n as f64;
        let mut idx = [0usize; 2];
        let mut xi = [0.0; 2];
        for d in 0..self.dim {
            let s = wrap_unit(y[d]) * n;
            let mut i = s.floor() as usize;
            if i >= self.n {
                i = self.n - 1;
            }
            idx[d] = i;
            xi[d] = s - i as f64;
        }
        let e = match self.dim {
            1 => idx[0],
            _ => idx[0] + self.n * idx[1],
        };
        (e, xi)
    }

    /// Mean of a nodal field; equals the L2(cell) mean exactly on the
    /// uniform mesh (partition of unity).
    pub fn nodal_mean(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Evaluates the Q1 interpolant of a nodal field at a wrapped point.
    pub fn eval(&self, values: &[f64], y: Point) -> f64 {
        let (e, xi) = self.locate(y);
        let nodes = self.element_nodes(e);
        let shapes = shape_values(self.dim, xi);
        let mut acc = 0.0;
        for c in 0..self.corners_per_element() {
            acc += shapes[c] * values[nodes[c]];
        }
        acc
    }

    /// Gradient of the Q1 interpolant inside the element containing `y`.
    pub fn eval_element_gradient(&self, values: &[f64], y: Point) -> Point {
        let (e, xi) = self.locate(y);
        let nodes = self.element_nodes(e);
        let grads = shape_grads(self.dim, xi);
        let inv_h = self.n as f64;
        let mut g = [0.0; 2];
        for c in 0..self.corners_per_element() {
            for d in 0..self.dim {
                g[d] += values[nodes[c]] * grads[c][d] * inv_h;
            }
        }
        g
    }

    /// Recovered nodal gradients: each node averages the gradients of its
    /// 2^dim adjacent elements evaluated at their centers. Second-order
    /// accurate on the uniform periodic mesh. Returns one Point per node.
    pub fn recovered_gradients(&self, values: &[f64]) -> Vec<Point> {
        let n = self.n;
        let inv_h = n as f64;
        // Per-element gradient at the element center.
        let center = [0.5, 0.5];
        let grads_ref = shape_grads(self.dim, center);
        let mut elem_grad = vec![[0.0; 2]; self.n_elements()];
        for e in 0..self.n_elements() {
            let nodes = self.element_nodes(e);
            let mut g = [0.0; 2];
            for c in 0..self.corners_per_element() {
                for d in 0..self.dim {
                    g[d] += values[nodes[c]] * grads_ref[c][d] * inv_h;
                }
            }
            elem_grad[e] = g;
        }
        let mut out = vec![[0.0; 2]; self.n_nodes()];
        match self.dim {
            1 => {
                for i in 0..n {
                    let left = (i + n - 1) % n;
                    out[i][0] = 0.5 * (elem_grad[left][0] + elem_grad[i][0]);
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..n {
                        let im = (i + n - 1) % n;
                        let jm = (j + n - 1) % n;
                        let elems = [
                            im + n * jm,
                            i + n * jm,
                            im + n * j,
                            i + n * j,
                        ];
                        let mut g = [0.0; 2];
                        for e in elems {
                            g[0] += elem_grad[e][0];
                            g[1] += elem_grad[e][1];
                        }
                        out[self.node_id(i, j)] = [0.25 * g[0], 0.25 * g[1]];
                    }
                }
            }
        }
        out
    }

    /// Q1-interpolates a recovered nodal gradient field at a wrapped point.
    pub fn eval_recovered(&self, nodal_grads: &[Point], y: Point) -> Point {
        let (e, xi) = self.locate(y);
        let nodes = self.element_nodes(e);
        let shapes = shape_values(self.dim, xi);
        let mut g = [0.0; 2];
        for c in 0..self.corners_per_element() {
            for d in 0..self.dim {
                g[d] += shapes[c] * nodal_grads[nodes[c]][d];
            }
        }
        g
    }
}

/// Uniform mesh of a Dirichlet box. Boundary nodes carry no unknowns; the
/// interior numbering is row-major over interior grid points.
#[derive(Debug, Clone)]
pub struct DirichletMesh {
    pub domain: BoxDomain,
    /// Elements per axis.
    pub n: [usize; 2],
}

impl DirichletMesh {
    pub fn new(domain: BoxDomain, n_per_axis: [usize; 2]) -> Result<Self> {
        for d in 0..domain.dim {
            if n_per_axis[d] < 2 {
                return Err(Error::Config(format!(
                    "Dirichlet mesh needs at least 2 elements per axis, got {}",
                    n_per_axis[d]
                )));
            }
        }
        Ok(Self {
            domain,
            n: n_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.domain.side(d) / self.n[d] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|d| self.spacing(d)).fold(f64::MAX, f64::min)
    }

    /// Grid points per axis including both boundaries.
    fn points(&self, d: usize) -> usize {
        self.n[d] + 1
    }

    pub fn n_full_nodes(&self) -> usize {
        match self.dim() {
            1 => self.points(0),
            _ => self.points(0) * self.points(1),
        }
    }

    pub fn n_interior(&self) -> usize {
        match self.dim() {
            1 => self.n[0] - 1,
            _ => (self.n[0] - 1) * (self.n[1] - 1),
        }
    }

    pub fn full_node_coord(&self, id: usize) -> Point {
        let (i, j) = match self.dim() {
            1 => (id, 0),
            _ => (id % self.points(0), id / self.points(0)),
        };
        let mut p = [0.0; 2];
        p[0] = self.domain.min[0] + i as f64 * self.spacing(0);
        if self.dim() == 2 {
            p[1] = self.domain.min[1] + j as f64 * self.spacing(1);
        }
        p
    }

    /// Interior unknown index of a full node id, or None on the boundary.
    pub fn interior_index(&self, full_id: usize) -> Option<usize> {
        match self.dim() {
            1 => {
                let i = full_id;
                if i == 0 || i == self.n[0] {
                    None
                } else {
                    Some(i - 1)
                }
            }
            _ => {
                let i = full_id % self.points(0);
                let j = full_id / self.points(0);
                if i == 0 || i == self.n[0] || j == 0 || j == self.n[1] {
                    None
                } else {
                    Some((i - 1) + (self.n[0] - 1) * (j - 1))
                }
            }
        }
    }

    pub fn interior_coord(&self, interior_id: usize) -> Point {
        let (i, j) = match self.dim() {
            1 => (interior_id + 1, 0),
            _ => (
                interior_id % (self.n[0] - 1) + 1,
                interior_id / (self.n[0] - 1) + 1,
            ),
        };
        let mut p = [0.0; 2];
        p[0] = self.domain.min[0] + i as f64 * self.spacing(0);
        if self.dim() == 2 {
            p[1] = self.domain.min[1] + j as f64 * self.spacing(1);
        }
        p
    }

    pub fn n_elements(&self) -> usize {
        match self.dim() {
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    pub fn corners_per_element(&self) -> usize {
        1 << self.dim()
    }

    /// Full node ids of an element's corners in local Q1 order.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        match self.dim() {
            1 => [e, e + 1, usize::MAX, usize::MAX],
            _ => {
                let nx = self.points(0);
                let i = e % self.n[0];
                let j = e / self.n[0];
                [
                    i + nx * j,
                    (i + 1) + nx * j,
                    (i + 1) + nx * (j + 1),
                    i + nx * (j + 1),
                ]
            }
        }
    }

    pub fn element_origin(&self, e: usize) -> Point {
        let (i, j) = match self.dim() {
            1 => (e, 0),
            _ => (e % self.n[0], e / self.n[0]),
        };
        let mut p = [0.0; 2];
        p[0] = self.domain.min[0] + i as f64 * self.spacing(0);
        if self.dim() == 2 {
            p[1] = self.domain.min[1] + j as f64 * self.spacing(1);
        }
        p
    }

    /// Element containing `x` (clamped to the box), with local coordinates.
    pub fn locate(&self, x: Point) -> (usize, Point) {
        let mut idx = [0usize; 2];
        let mut xi = [0.0; 2];
        for d in 0..self.dim() {
            let s = (x[d] - self.domain.min[d]) / self.spacing(d);
            let mut i = s.floor() as usize as isize;
            if s < 0.0 {
                i = 0;
            }
            let mut i = i as usize;
            if i >= self.n[d] {
                i = self.n[d] - 1;
            }
            idx[d] = i;
            xi[d] = (s - i as f64).clamp(0.0, 1.0);
        }
        let e = match self.dim() {
            1 => idx[0],
            _ => idx[0] + self.n[0] * idx[1],
        };
        (e, xi)
    }

    /// Nodal interpolation of a callable onto interior unknowns.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.n_interior())
            .map(|k| f(self.interior_coord(k)))
            .collect()
    }

    /// Expands an interior vector to the full grid with zero boundary values.
    pub fn expand(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full_nodes()];
        for id in 0..self.n_full_nodes() {
            if let Some(k) = self.interior_index(id) {
                full[id] = interior[k];
            }
        }
        full
    }

    /// Evaluates the Q1 interpolant of a full nodal vector at a point.
    pub fn eval_full(&self, full_values: &[f64], x: Point) -> f64 {
        let (e, xi) = self.locate(x);
        let nodes = self.element_nodes(e);
        let shapes = shape_values(self.dim(), xi);
        let mut acc = 0.0;
        for c in 0..self.corners_per_element() {
            acc += shapes[c] * full_values[nodes[c]];
        }
        acc
    }

    /// Gradient of the Q1 interpolant of a full nodal vector at a point
    /// (the element gradient).
    pub fn eval_full_gradient(&self, full_values: &[f64], x: Point) -> Point {
        let (e, xi) = self.locate(x);
        let nodes = self.element_nodes(e);
        let grads = shape_grads(self.dim(), xi);
        let mut g = [0.0; 2];
        for c in 0..self.corners_per_element() {
            for d in 0..self.dim() {
                g[d] += full_values[nodes[c]] * grads[c][d] / self.spacing(d);
            }
        }
        g
    }

    /// Recovered nodal gradients of a full nodal vector: each grid node
    /// averages the center gradients of its adjacent elements (one-sided on
    /// the boundary). Second order at interior points.
    pub fn recovered_gradients(&self, full_values: &[f64]) -> Vec<Point> {
        let dim = self.dim();
        let center = [0.5, 0.5];
        let grads_ref = shape_grads(dim, center);
        let mut elem_grad = vec![[0.0; 2]; self.n_elements()];
        for e in 0..self.n_elements() {
            let nodes = self.element_nodes(e);
            let mut g = [0.0; 2];
            for c in 0..self.corners_per_element() {
                for d in 0..dim {
                    g[d] += full_values[nodes[c]] * grads_ref[c][d] / self.spacing(d);
                }
            }
            elem_grad[e] = g;
        }
        let mut out = vec![[0.0; 2]; self.n_full_nodes()];
        match dim {
            1 => {
                for i in 0..=self.n[0] {
                    let mut g = 0.0;
                    let mut count = 0.0;
                    if i > 0 {
                        g += elem_grad[i - 1][0];
                        count += 1.0;
                    }
                    if i < self.n[0] {
                        g += elem_grad[i][0];
                        count += 1.0;
                    }
                    out[i][0] = g / count;
                }
            }
            _ => {
                for j in 0..=self.n[1] {
                    for i in 0..=self.n[0] {
                        let mut g = [0.0; 2];
                        let mut count = 0.0;
                        for (ei, ej) in [
                            (i.wrapping_sub(1), j.wrapping_sub(1)),
                            (i, j.wrapping_sub(1)),
                            (i.wrapping_sub(1), j),
                            (i, j),
                        ] {
                            if ei < self.n[0] && ej < self.n[1] {
                                let e = ei + self.n[0] * ej;
                                g[0] += elem_grad[e][0];
                                g[1] += elem_grad[e][1];
                                count += 1.0;
                            }
                        }
                        out[i + (self.n[0] + 1) * j] = [g[0] / count, g[1] / count];
                    }
                }
            }
        }
        out
    }

    /// Q1-interpolates a recovered nodal gradient field at a point.
    pub fn eval_recovered(&self, nodal_grads: &[Point], x: Point) -> Point {
        let (e, xi) = self.locate(x);
        let nodes = self.element_nodes(e);
        let shapes = shape_values(self.dim(), xi);
        let mut g = [0.0; 2];
        for c in 0..self.corners_per_element() {
            for d in 0..self.dim() {
                g[d] += shapes[c] * nodal_grads[nodes[c]][d];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_unit_interval() {
        for &x in &[-2.3, -1.0, -1e-17, 0.0, 0.4, 1.0, 1.7, 1e9 + 0.25] {
            let w = wrap_unit(x);
            assert!((0.0..1.0).contains(&w), "wrap({x}) = {w}");
        }
        assert!((wrap_unit(1.25) - 0.25).abs() < 1e-12);
        assert!((wrap_unit(-0.25) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn periodic_mesh_counts_and_wrapped_elements() {
        let mesh = PeriodicMesh::new(2, 4).unwrap();
        assert_eq!(mesh.n_nodes(), 16);
        assert_eq!(mesh.n_elements(), 16);
        // Element in the far corner wraps both axes.
        let nodes = mesh.element_nodes(15);
        assert_eq!(nodes, [15, 12, 0, 3]);
        for e in 0..mesh.n_elements() {
            for c in 0..4 {
                assert!(mesh.element_nodes(e)[c] < 16);
            }
        }
    }

    #[test]
    fn periodic_eval_is_consistent_across_seam() {
        let mesh = PeriodicMesh::new(1, 8).unwrap();
        let values: Vec<f64> = (0..8)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 8.0).cos())
            .collect();
        let a = mesh.eval(&values, [0.999_999_999_9, 0.0]);
        let b = mesh.eval(&values, [-1e-10, 0.0]);
        assert!((a - b).abs() < 1e-8);
        let exact_seam = mesh.eval(&values, [0.0, 0.0]);
        let wrapped_seam = mesh.eval(&values, [1.0, 0.0]);
        assert_eq!(exact_seam, wrapped_seam);
    }

    #[test]
    fn recovered_gradient_is_second_order() {
        // Gradient of cos(2 pi y) recovered on meshes n and 2n: error drops ~4x.
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let mesh = PeriodicMesh::new(1, n).unwrap();
                let values: Vec<f64> = (0..n)
                    .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                    .collect();
                let grads = mesh.recovered_gradients(&values);
                let mut max_err: f64 = 0.0;
                for k in 0..200 {
                    let y = k as f64 / 200.0;
                    let g = mesh.eval_recovered(&grads, [y, 0.0])[0];
                    let exact = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * y).sin();
                    max_err = max_err.max((g - exact).abs());
                }
                max_err
            })
            .collect();
        assert!(errs[1] < errs[0] / 2.5, "errors {errs:?}");
    }

    #[test]
    fn dirichlet_interior_numbering() {
        let domain = BoxDomain::unit(2);
        let mesh = DirichletMesh::new(domain, [4, 3]).unwrap();
        assert_eq!(mesh.n_interior(), 3 * 2);
        assert_eq!(mesh.n_full_nodes(), 5 * 4);
        let mut seen = vec![false; mesh.n_interior()];
        for id in 0..mesh.n_full_nodes() {
            if let Some(k) = mesh.interior_index(id) {
                assert!(!seen[k]);
                seen[k] = true;
                let c = mesh.interior_coord(k);
                let full = mesh.full_node_coord(id);
                assert!((c[0] - full[0]).abs() < 1e-14);
                assert!((c[1] - full[1]).abs() < 1e-14);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn dirichlet_eval_reproduces_bilinear() {
        let domain = BoxDomain::new(2, [0.0, -1.0], [2.0, 1.0]).unwrap();
        let mesh = DirichletMesh::new(domain, [5, 7]).unwrap();
        let f = |p: Point| 0.3 + 1.2 * p[0] - 0.7 * p[1] + 0.25 * p[0] * p[1];
        let full: Vec<f64> = (0..mesh.n_full_nodes())
            .map(|id| f(mesh.full_node_coord(id)))
            .collect();
        let probe = [1.234, 0.456];
        assert!((mesh.eval_full(&full, probe) - f(probe)).abs() < 1e-12);
        let g = mesh.eval_full_gradient(&full, probe);
        assert!((g[0] - (1.2 + 0.25 * probe[1])).abs() < 1e-12);
        assert!((g[1] - (-0.7 + 0.25 * probe[0])).abs() < 1e-12);
    }
}
