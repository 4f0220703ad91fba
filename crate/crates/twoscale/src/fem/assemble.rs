//! Q1 matrix and vector assembly on periodic and Dirichlet meshes.
//!
//! Coefficients are sampled at the 2-point Gauss nodes of each element; the
//! element traversal order is fixed, so assembly is bit-deterministic.

use super::mesh::{shape_grads, shape_values, DirichletMesh, Matrix, PeriodicMesh, Point};
use super::quad::reference_rule;
use super::sparse::SparseOperator;
use crate::error::{Error, Result};

fn check_sample(a: &Matrix, dim: usize, at: Point) -> Result<()> {
    for r in 0..dim {
        for c in 0..dim {
            if !a[r][c].is_finite() {
                return Err(Error::Data(format!(
                    "non-finite coefficient sample at y = ({}, {})",
                    at[0], at[1]
                )));
            }
        }
    }
    if dim == 2 && (a[0][1] - a[1][0]).abs() > 1e-12 {
        return Err(Error::Data(format!(
            "non-symmetric coefficient sample at y = ({}, {}): |a01 - a10| = {:.3e}",
            at[0],
            at[1],
            (a[0][1] - a[1][0]).abs()
        )));
    }
    Ok(())
}

struct ElementRule {
    /// Per quadrature node: (local coords, physical weight, shape values,
    /// physical shape gradients).
    nodes: Vec<(Point, f64, [f64; 4], [[f64; 2]; 4])>,
}

fn element_rule(dim: usize, spacing: Point) -> ElementRule {
    let vol: f64 = (0..dim).map(|d| spacing[d]).product();
    let nodes = reference_rule(dim)
        .into_iter()
        .map(|(xi, w)| {
            let shapes = shape_values(dim, xi);
            let mut grads = shape_grads(dim, xi);
            for g in &mut grads {
                for d in 0..dim {
                    g[d] /= spacing[d];
                }
            }
            (xi, w * vol, shapes, grads)
        })
        .collect();
    ElementRule { nodes }
}

fn stiffness_local(
    dim: usize,
    rule: &ElementRule,
    origin: Point,
    spacing: Point,
    sampler: &dyn Fn(Point) -> Matrix,
) -> Result<[[f64; 4]; 4]> {
    let nc = 1 << dim;
    let mut local = [[0.0; 4]; 4];
    for (xi, w, _, grads) in &rule.nodes {
        let mut x = [0.0; 2];
        for d in 0..dim {
            x[d] = origin[d] + xi[d] * spacing[d];
        }
        let a = sampler(x);
        check_sample(&a, dim, x)?;
        for i in 0..nc {
            for j in 0..nc {
                let mut flux = [0.0; 2];
                for d1 in 0..dim {
                    for d2 in 0..dim {
                        flux[d1] += a[d1][d2] * grads[j][d2];
                    }
                }
                let mut v = 0.0;
                for d in 0..dim {
                    v += flux[d] * grads[i][d];
                }
                local[i][j] += w * v;
            }
        }
    }
    Ok(local)
}

fn mass_local(
    dim: usize,
    rule: &ElementRule,
    origin: Point,
    spacing: Point,
    weight: &dyn Fn(Point) -> f64,
) -> Result<[[f64; 4]; 4]> {
    let nc = 1 << dim;
    let mut local = [[0.0; 4]; 4];
    for (xi, w, shapes, _) in &rule.nodes {
        let mut x = [0.0; 2];
        for d in 0..dim {
            x[d] = origin[d] + xi[d] * spacing[d];
        }
        let rho = weight(x);
        if !rho.is_finite() {
            return Err(Error::Data(format!(
                "non-finite mass weight at ({}, {})",
                x[0], x[1]
            )));
        }
        if rho <= 0.0 {
            return Err(Error::Data(format!(
                "nonpositive mass weight {rho} at ({}, {})",
                x[0], x[1]
            )));
        }
        for i in 0..nc {
            for j in 0..nc {
                local[i][j] += w * rho * shapes[i] * shapes[j];
            }
        }
    }
    Ok(local)
}

/// Stiffness matrix on the periodic cell: K_ij = int a grad(phi_j) . grad(phi_i).
/// Singular with the constants in its nullspace.
pub fn assemble_stiffness_periodic(
    mesh: &PeriodicMesh,
    sampler: &dyn Fn(Point) -> Matrix,
) -> Result<SparseOperator> {
    let dim = mesh.dim;
    let h = mesh.h();
    let spacing = [h, h];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nc * nc);
    for e in 0..mesh.n_elements() {
        let local = stiffness_local(dim, &rule, mesh.element_origin(e), spacing, sampler)?;
        let nodes = mesh.element_nodes(e);
        for i in 0..nc {
            for j in 0..nc {
                triplets.push((nodes[i] as u32, nodes[j] as u32, local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_nodes(), mesh.n_nodes(), triplets, true)
}

/// Weighted mass matrix on the periodic cell.
pub fn assemble_mass_periodic(
    mesh: &PeriodicMesh,
    weight: &dyn Fn(Point) -> f64,
) -> Result<SparseOperator> {
    let dim = mesh.dim;
    let h = mesh.h();
    let spacing = [h, h];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nc * nc);
    for e in 0..mesh.n_elements() {
        let local = mass_local(dim, &rule, mesh.element_origin(e), spacing, weight)?;
        let nodes = mesh.element_nodes(e);
        for i in 0..nc {
            for j in 0..nc {
                triplets.push((nodes[i] as u32, nodes[j] as u32, local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_nodes(), mesh.n_nodes(), triplets, true)
}

/// Cell-problem right-hand side F_i = int (a(y) e_k) . grad(phi_i) dy.
/// The discrete cell problem reads K Phi = -F.
pub fn assemble_cell_rhs(
    mesh: &PeriodicMesh,
    sampler: &dyn Fn(Point) -> Matrix,
    direction: usize,
) -> Result<Vec<f64>> {
    let dim = mesh.dim;
    let h = mesh.h();
    let spacing = [h, h];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let origin = mesh.element_origin(e);
        let nodes = mesh.element_nodes(e);
        for (xi, w, _, grads) in &rule.nodes {
            let mut x = [0.0; 2];
            for d in 0..dim {
                x[d] = origin[d] + xi[d] * spacing[d];
            }
            let a = sampler(x);
            check_sample(&a, dim, x)?;
            for i in 0..nc {
                let mut v = 0.0;
                for d in 0..dim {
                    v += a[d][direction] * grads[i][d];
                }
                rhs[nodes[i]] += w * v;
            }
        }
    }
    Ok(rhs)
}

/// Interior stiffness matrix and the interior-boundary coupling block on a
/// Dirichlet mesh. The coupling block has one column per full grid node.
pub fn assemble_stiffness_dirichlet(
    mesh: &DirichletMesh,
    sampler: &dyn Fn(Point) -> Matrix,
) -> Result<(SparseOperator, SparseOperator)> {
    let dim = mesh.dim();
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut interior = Vec::with_capacity(mesh.n_elements() * nc * nc);
    let mut coupling = Vec::new();
    for e in 0..mesh.n_elements() {
        let local = stiffness_local(dim, &rule, mesh.element_origin(e), spacing, sampler)?;
        let nodes = mesh.element_nodes(e);
        for i in 0..nc {
            let Some(row) = mesh.interior_index(nodes[i]) else {
                continue;
            };
            for j in 0..nc {
                match mesh.interior_index(nodes[j]) {
                    Some(col) => interior.push((row as u32, col as u32, local[i][j])),
                    None => coupling.push((row as u32, nodes[j] as u32, local[i][j])),
                }
            }
        }
    }
    let kii = SparseOperator::from_triplets(mesh.n_interior(), mesh.n_interior(), interior, true)?;
    let kib =
        SparseOperator::from_triplets(mesh.n_interior(), mesh.n_full_nodes(), coupling, false)?;
    Ok((kii, kib))
}

/// Interior weighted mass matrix on a Dirichlet mesh.
pub fn assemble_mass_dirichlet(
    mesh: &DirichletMesh,
    weight: &dyn Fn(Point) -> f64,
) -> Result<SparseOperator> {
    let dim = mesh.dim();
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nc * nc);
    for e in 0..mesh.n_elements() {
        let local = mass_local(dim, &rule, mesh.element_origin(e), spacing, weight)?;
        let nodes = mesh.element_nodes(e);
        for i in 0..nc {
            let Some(row) = mesh.interior_index(nodes[i]) else {
                continue;
            };
            for j in 0..nc {
                if let Some(col) = mesh.interior_index(nodes[j]) {
                    triplets.push((row as u32, col as u32, local[i][j]));
                }
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_interior(), mesh.n_interior(), triplets, true)
}

/// Interior load vector F_i = int f phi_i dx on a Dirichlet mesh.
pub fn assemble_load_dirichlet(mesh: &DirichletMesh, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let dim = mesh.dim();
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let rule = element_rule(dim, spacing);
    let nc = mesh.corners_per_element();
    let mut rhs = vec![0.0; mesh.n_interior()];
    for e in 0..mesh.n_elements() {
        let origin = mesh.element_origin(e);
        let nodes = mesh.element_nodes(e);
        for (xi, w, shapes, _) in &rule.nodes {
            let mut x = [0.0; 2];
            for d in 0..dim {
                x[d] = origin[d] + xi[d] * spacing[d];
            }
            let fv = f(x);
            for i in 0..nc {
                if let Some(row) = mesh.interior_index(nodes[i]) {
                    rhs[row] += w * fv * shapes[i];
                }
            }
        }
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{BoxDomain, IDENTITY};
    use crate::fem::sparse::{solve_spd, SolveOptions};

    const PI: f64 = std::f64::consts::PI;

    fn identity_sampler(_: Point) -> Matrix {
        IDENTITY
    }

    #[test]
    fn periodic_1d_laplacian_stencil() {
        // a = 1, n = 4: rows are (1/h) [-1, 2, -1] with wraparound.
        let mesh = PeriodicMesh::new(1, 4).unwrap();
        let k = assemble_stiffness_periodic(&mesh, &identity_sampler).unwrap();
        let inv_h = 4.0;
        for i in 0..4 {
            let mut row = [0.0; 4];
            for kk in k.row_ptr[i]..k.row_ptr[i + 1] {
                row[k.col_idx[kk]] = k.values[kk];
            }
            assert!((row[i] - 2.0 * inv_h).abs() < 1e-12);
            assert!((row[(i + 1) % 4] + inv_h).abs() < 1e-12);
            assert!((row[(i + 3) % 4] + inv_h).abs() < 1e-12);
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_constants_in_nullspace_for_any_coefficient() {
        let field = |y: Point| {
            let a = 1.0 / (2.0 + (2.0 * PI * y[0]).cos());
            [[a, 0.0], [0.0, a]]
        };
        for (dim, n) in [(1usize, 16usize), (2, 8)] {
            let mesh = PeriodicMesh::new(dim, n).unwrap();
            let k = assemble_stiffness_periodic(&mesh, &field).unwrap();
            let ones = vec![1.0; mesh.n_nodes()];
            let out = k.apply(&ones);
            assert!(out.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn hand_computed_single_element_matrices() {
        // 1D element of length h: K = (1/h) [[1,-1],[-1,1]], M = (h/6) [[2,1],[1,2]].
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [2, 0]).unwrap();
        let (kii, _) = assemble_stiffness_dirichlet(&mesh, &identity_sampler).unwrap();
        // Single interior node, two elements of h = 1/2: diagonal = 2/h = 4.
        assert!((kii.values[0] - 4.0).abs() < 1e-13);

        // 2D reference element on the unit square (h = 1): classic matrices.
        let mesh2 = PeriodicMesh::new(2, 2).unwrap();
        // Use one element's local matrix via a 2x2 mesh of h=1/2 and rescale:
        // rather check the assembled global row sums to zero and the known
        // diagonal 4 * (4/6) for h=1/2 (scale-invariant in 2D).
        let k2 = assemble_stiffness_periodic(&mesh2, &identity_sampler).unwrap();
        // In 2D stiffness is scale invariant: diagonal of the assembled
        // operator = 4 elements * 4/6 = 8/3.
        let diag = k2.diagonal();
        for d in diag {
            assert!((d - 8.0 / 3.0).abs() < 1e-12);
        }

        let m2 = assemble_mass_periodic(&mesh2, &|_| 1.0).unwrap();
        // Mass diagonal: 4 elements * 4/36 * h^2 with h = 1/2.
        let diag = m2.diagonal();
        for d in diag {
            assert!((d - 4.0 * (4.0 / 36.0) * 0.25).abs() < 1e-13);
        }
    }

    #[test]
    fn dirichlet_smallest_eigenvalue_near_pi_squared() {
        // Rayleigh quotient of the interpolated first eigenfunction.
        let n = 64;
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [n, 0]).unwrap();
        let (kii, _) = assemble_stiffness_dirichlet(&mesh, &identity_sampler).unwrap();
        let m = assemble_mass_dirichlet(&mesh, &|_| 1.0).unwrap();
        let s: Vec<f64> = (0..mesh.n_interior())
            .map(|k| (PI * mesh.interior_coord(k)[0]).sin())
            .collect();
        let q = kii.quadratic_form(&s) / m.quadratic_form(&s);
        let h = 1.0 / n as f64;
        assert!((q - PI * PI).abs() < 2.0 * PI.powi(4) * h * h, "q = {q}");
    }

    #[test]
    fn mass_totals_match_volume_and_moments() {
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [16, 0]).unwrap();
        // Total mass = sum of ALL entries including boundary rows; easier on
        // the periodic mesh where partition of unity is exact.
        let pmesh = PeriodicMesh::new(1, 16).unwrap();
        let m1 = assemble_mass_periodic(&pmesh, &|_| 1.0).unwrap();
        let total: f64 = m1.values.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let m2 = assemble_mass_periodic(&pmesh, &|_| 2.0).unwrap();
        let total2: f64 = m2.values.iter().sum();
        assert!((total2 - 2.0).abs() < 1e-12);

        // weight(x) = x on (0,1): total mass = 1/2 up to quadrature error.
        let mx = assemble_mass_periodic(&pmesh, &|p: Point| p[0] + 1e-300).unwrap();
        let totalx: f64 = mx.values.iter().sum();
        assert!((totalx - 0.5).abs() < 1e-10);
        drop(mesh);
    }

    #[test]
    fn nonpositive_weight_is_rejected() {
        let pmesh = PeriodicMesh::new(1, 8).unwrap();
        let err = assemble_mass_periodic(&pmesh, &|p: Point| p[0] - 0.5).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn nonfinite_coefficient_is_rejected_with_location() {
        let pmesh = PeriodicMesh::new(1, 8).unwrap();
        let err = assemble_stiffness_periodic(&pmesh, &|p: Point| {
            let v = if p[0] > 0.5 { f64::NAN } else { 1.0 };
            [[v, 0.0], [0.0, v]]
        })
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("non-finite"), "{msg}");
    }

    #[test]
    fn discrete_harmonicity_of_linears() {
        // a = 1, u linear: interior rows of the full operator vanish.
        for (dim, n) in [(1usize, [9usize, 0usize]), (2, [6, 5])] {
            let domain = BoxDomain::new(dim, [0.0, 0.0], [1.5, 1.0]).unwrap();
            let mesh = DirichletMesh::new(domain, n).unwrap();
            let (kii, kib) = assemble_stiffness_dirichlet(&mesh, &identity_sampler).unwrap();
            let lin = |p: Point| 0.7 + 0.3 * p[0] - 1.1 * p[1];
            let u_int: Vec<f64> = (0..mesh.n_interior())
                .map(|k| lin(mesh.interior_coord(k)))
                .collect();
            let u_full: Vec<f64> = (0..mesh.n_full_nodes())
                .map(|id| lin(mesh.full_node_coord(id)))
                .collect();
            let mut r = kii.apply(&u_int);
            let rb = kib.apply(&u_full);
            for i in 0..r.len() {
                r[i] += rb[i];
            }
            // kib columns include interior nodes with zero entries only; the
            // expanded product double counts nothing because interior columns
            // were never pushed into the coupling block.
            assert!(r.iter().all(|v| v.abs() < 1e-12), "dim {dim}");
        }
    }

    #[test]
    fn periodic_poisson_recovers_cosine() {
        // -u'' = cos(2 pi y) => u = cos(2 pi y) / (4 pi^2), mean zero.
        let n = 64;
        let mesh = PeriodicMesh::new(1, n).unwrap();
        let k = assemble_stiffness_periodic(&mesh, &identity_sampler).unwrap();
        let mut rhs = vec![0.0; mesh.n_nodes()];
        // Load vector of cos against the basis via element quadrature.
        let spacing = [mesh.h(), mesh.h()];
        let rule = element_rule(1, spacing);
        for e in 0..mesh.n_elements() {
            let origin = mesh.element_origin(e);
            let nodes = mesh.element_nodes(e);
            for (xi, w, shapes, _) in &rule.nodes {
                let x = origin[0] + xi[0] * spacing[0];
                let fv = (2.0 * PI * x).cos();
                for i in 0..2 {
                    rhs[nodes[i]] += w * fv * shapes[i];
                }
            }
        }
        let u = solve_spd(
            &k,
            &rhs,
            SolveOptions {
                tol: 1e-12,
                project_constants: true,
                ..Default::default()
            },
        )
        .unwrap();
        let mean: f64 = u.iter().sum::<f64>() / u.len() as f64;
        assert!(mean.abs() < 1e-12);
        let h = mesh.h();
        for (i, &ui) in u.iter().enumerate() {
            let exact = (2.0 * PI * i as f64 * h).cos() / (4.0 * PI * PI);
            assert!((ui - exact).abs() < 5.0 * h * h, "node {i}");
        }
    }

    #[test]
    fn assembly_is_bit_deterministic() {
        let field = |y: Point| {
            let a = 0.3 + 0.2 * (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos();
            [[a, 0.1 * a], [0.1 * a, a]]
        };
        let mesh = PeriodicMesh::new(2, 12).unwrap();
        let k1 = assemble_stiffness_periodic(&mesh, &field).unwrap();
        let k2 = assemble_stiffness_periodic(&mesh, &field).unwrap();
        assert_eq!(k1.values.len(), k2.values.len());
        for (a, b) in k1.values.iter().zip(&k2.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
