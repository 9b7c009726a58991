//! Element kernels and dense assembly over the free degrees of freedom.
//!
//! Scalar unknowns are numbered `2 d + c` for dof `d` and component `c`.
//! Inside a cell the local numbering is `2 k + c` for corner `k`.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::crack::components;
use crate::energy::density::flatten;
use crate::energy::field::{gauss_points, shape_gradients, DofMap, Vec2};
use crate::energy::{Density, ElasticTensor, Mat2, ModelParams};
use crate::mesh::Mesh;

pub type Mat8 = SMatrix<f64, 8, 8>;
type Vec8 = SVector<f64, 8>;
type Mat48 = SMatrix<f64, 4, 8>;
type Mat38 = SMatrix<f64, 3, 8>;

/// Maps scalar unknowns to positions in the reduced (free) system.
#[derive(Clone, Debug)]
pub struct Layout {
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
}

impl Layout {
    pub fn new(dofs: &DofMap) -> Self {
        let mut free_index = vec![None; 2 * dofs.n_dofs()];
        let mut n_free = 0;
        for (d, fixed) in dofs.fixed.iter().enumerate() {
            if !fixed {
                for c in 0..2 {
                    free_index[2 * d + c] = Some(n_free);
                    n_free += 1;
                }
            }
        }
        Layout { free_index, n_free }
    }

    pub fn gather(&self, values: &[Vec2]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_free);
        for (s, idx) in self.free_index.iter().enumerate() {
            if let Some(i) = idx {
                x[*i] = values[s / 2][s % 2];
            }
        }
        x
    }

    pub fn scatter(&self, x: &DVector<f64>, values: &mut [Vec2]) {
        for (s, idx) in self.free_index.iter().enumerate() {
            if let Some(i) = idx {
                values[s / 2][s % 2] = x[*i];
            }
        }
    }
}

/// Global scalar indices of a cell's 8 local unknowns.
pub fn cell_scalars(dofs: &DofMap, cell: usize) -> [usize; 8] {
    let d = dofs.corner_dof[cell];
    std::array::from_fn(|l| 2 * d[l / 2] + l % 2)
}

/// `d flatten(grad v) / d v_local` for the given shape gradients.
fn gradient_operator(grads: &[Vec2; 4]) -> Mat48 {
    let mut b = Mat48::zeros();
    for (k, g) in grads.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                b[(2 * i + j, 2 * k + i)] = g[j];
            }
        }
    }
    b
}

/// Maps flattened gradients to strain vectors in the `(e11, e22, sqrt2 e12)` basis.
fn strain_operator() -> SMatrix<f64, 3, 4> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    SMatrix::<f64, 3, 4>::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, s, s, 0.0)
}

/// Quadrature points of one cell as (gradient operator, weight times area).
pub fn cell_rule(dx: f64) -> Vec<(Mat48, f64)> {
    gauss_points()
        .iter()
        .map(|&(xi, eta, w)| (gradient_operator(&shape_gradients(xi, eta, dx)), w * dx * dx))
        .collect()
}

/// Stiffness of `u -> int_cell 1/2 Q(e(u))`, identical for every cell.
pub fn element_stiffness(dx: f64, tensor: &ElasticTensor) -> Mat8 {
    let s = strain_operator();
    let mut k = Mat8::zeros();
    for (b, w) in cell_rule(dx) {
        let sb: Mat38 = s * b;
        k += w * sb.transpose() * tensor.c3 * sb;
    }
    0.5 * (k + k.transpose())
}

/// Rigid-motion directions of the pieces not attached to the frame, as
/// orthonormal vectors over the free unknowns. `positions` supplies the point
/// about which each dof rotates.
pub fn floating_modes(mesh: &Mesh, dofs: &DofMap, layout: &Layout, positions: &[Vec2]) -> Vec<DVector<f64>> {
    let partition = components(mesh, &dofs.ties);
    let mut modes = Vec::new();
    for (_, comp) in partition.interior_components() {
        let mut members: Vec<usize> = comp.cells.iter().flat_map(|&c| dofs.corner_dof[c]).collect();
        members.sort_unstable();
        members.dedup();
        let centre = members.iter().map(|&d| positions[d]).sum::<Vec2>() / members.len() as f64;
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(3);
        for mode in 0..3 {
            let mut r = DVector::zeros(layout.n_free);
            for &d in &members {
                let p = positions[d] - centre;
                let v = match mode {
                    0 => Vec2::new(1.0, 0.0),
                    1 => Vec2::new(0.0, 1.0),
                    _ => Vec2::new(-p.y, p.x),
                };
                for c in 0..2 {
                    if let Some(i) = layout.free_index[2 * d + c] {
                        r[i] = v[c];
                    }
                }
            }
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
            let norm = r.norm();
            if norm > 1e-12 {
                basis.push(r / norm);
            }
        }
        modes.extend(basis);
    }
    modes
}

/// Adds `alpha * sum r r^T` to `k`.
pub fn add_modes(k: &mut DMatrix<f64>, modes: &[DVector<f64>], alpha: f64) {
    for r in modes {
        k.ger(alpha, r, r, 1.0);
    }
}

/// Reduced linear system `K_FF u_F = b` with `b = -K_FD u_D`.
pub fn assemble_linear(
    mesh: &Mesh,
    dofs: &DofMap,
    layout: &Layout,
    ke: &Mat8,
    values: &[Vec2],
) -> (DMatrix<f64>, DVector<f64>) {
    let n = layout.n_free;
    let mut k = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for c in 0..mesh.n_cells() {
        let s = cell_scalars(dofs, c);
        for a in 0..8 {
            let Some(fa) = layout.free_index[s[a]] else { continue };
            for bb in 0..8 {
                match layout.free_index[s[bb]] {
                    Some(fb) => k[(fa, fb)] += ke[(a, bb)],
                    None => b[fa] -= ke[(a, bb)] * values[s[bb] / 2][s[bb] % 2],
                }
            }
        }
    }
    (k, b)
}

/// Centroid-gradient jump across one intact interface: 8 dofs (4 of each
/// cell) and the coefficient vectors of the two spatial derivatives.
#[derive(Clone, Debug)]
struct JumpStencil {
    weight: f64,
    dofs: [usize; 8],
    coeff: [[f64; 8]; 2],
}

fn jump_stencils(mesh: &Mesh, dofs: &DofMap) -> Vec<JumpStencil> {
    let g = shape_gradients(0.5, 0.5, mesh.dx);
    mesh.interfaces
        .iter()
        .enumerate()
        .filter(|(i, _)| !dofs.ties.is_broken(*i))
        .map(|(_, f)| {
            let [lo, hi] = f.cells;
            let (dl, dh) = (dofs.corner_dof[lo], dofs.corner_dof[hi]);
            let ids = std::array::from_fn(|l| if l < 4 { dh[l] } else { dl[l - 4] });
            let coeff = std::array::from_fn(|j| std::array::from_fn(|l| if l < 4 { g[l][j] } else { -g[l - 4][j] }));
            JumpStencil {
                weight: f.length / mesh.dx,
                dofs: ids,
                coeff,
            }
        })
        .collect()
}

/// Elastic and second-gradient parts of the nonlinear energy with derivatives
/// with respect to the free unknowns.
pub struct NonlinearSystem<'a> {
    mesh: &'a Mesh,
    dofs: &'a DofMap,
    pub layout: Layout,
    density: Density,
    elastic_weight: f64,
    hessian_weight: f64,
    rule: Vec<(Mat48, f64)>,
    stencils: Vec<JumpStencil>,
}

pub struct Evaluation {
    pub elastic: f64,
    pub hessian: f64,
    pub gradient: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl Evaluation {
    pub fn energy(&self) -> f64 {
        self.elastic + self.hessian
    }
}

impl<'a> NonlinearSystem<'a> {
    pub fn new(mesh: &'a Mesh, dofs: &'a DofMap, density: Density, p: &ModelParams) -> Self {
        NonlinearSystem {
            mesh,
            dofs,
            layout: Layout::new(dofs),
            density,
            elastic_weight: 1.0 / (p.epsilon * p.epsilon),
            hessian_weight: p.hessian_weight(),
            rule: cell_rule(mesh.dx),
            stencils: jump_stencils(mesh, dofs),
        }
    }

    fn local(&self, values: &[Vec2], cell: usize) -> Vec8 {
        let s = cell_scalars(self.dofs, cell);
        Vec8::from_fn(|l, _| values[s[l] / 2][s[l] % 2])
    }

    /// `(elastic, hessian)` energy values only.
    pub fn energy(&self, values: &[Vec2]) -> (f64, f64) {
        let mut elastic = 0.0;
        for c in 0..self.mesh.n_cells() {
            let v = self.local(values, c);
            for (b, w) in &self.rule {
                let f = b * v;
                elastic += w * self.density.value(&Mat2::new(f[0], f[1], f[2], f[3]));
            }
        }
        let mut hessian = 0.0;
        for st in &self.stencils {
            for comp in 0..2 {
                for coeff in &st.coeff {
                    let jump: f64 = (0..8).map(|l| coeff[l] * values[st.dofs[l]][comp]).sum();
                    hessian += st.weight * jump * jump;
                }
            }
        }
        (self.elastic_weight * elastic, self.hessian_weight * hessian)
    }

    pub fn evaluate(&self, values: &[Vec2]) -> Evaluation {
        let n = self.layout.n_free;
        let mut gradient = DVector::zeros(n);
        let mut matrix = DMatrix::zeros(n, n);
        let mut elastic = 0.0;
        for c in 0..self.mesh.n_cells() {
            let v = self.local(values, c);
            let mut ge = Vec8::zeros();
            let mut he = Mat8::zeros();
            for (b, w) in &self.rule {
                let fv = b * v;
                let f = Mat2::new(fv[0], fv[1], fv[2], fv[3]);
                elastic += w * self.density.value(&f);
                ge += *w * b.transpose() * flatten(&self.density.gradient(&f));
                he += *w * b.transpose() * self.density.second_derivative(&f) * b;
            }
            let s = cell_scalars(self.dofs, c);
            for a in 0..8 {
                let Some(fa) = self.layout.free_index[s[a]] else { continue };
                gradient[fa] += self.elastic_weight * ge[a];
                for bb in 0..8 {
                    if let Some(fb) = self.layout.free_index[s[bb]] {
                        matrix[(fa, fb)] += self.elastic_weight * he[(a, bb)];
                    }
                }
            }
        }
        let mut hessian = 0.0;
        for st in &self.stencils {
            let w = self.hessian_weight * st.weight;
            for comp in 0..2 {
                let idx: [Option<usize>; 8] = std::array::from_fn(|l| self.layout.free_index[2 * st.dofs[l] + comp]);
                for coeff in &st.coeff {
                    let jump: f64 = (0..8).map(|l| coeff[l] * values[st.dofs[l]][comp]).sum();
                    hessian += st.weight * jump * jump;
                    for a in 0..8 {
                        let Some(fa) = idx[a] else { continue };
                        gradient[fa] += 2.0 * w * jump * coeff[a];
                        for bb in 0..8 {
                            if let Some(fb) = idx[bb] {
                                matrix[(fa, fb)] += 2.0 * w * coeff[a] * coeff[bb];
                            }
                        }
                    }
                }
            }
        }
        Evaluation {
            elastic: self.elastic_weight * elastic,
            hessian: self.hessian_weight * hessian,
            gradient,
            matrix,
        }
    }
}
