//! Per-corner vector fields with node duplication across broken interfaces.

use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::density::Mat2;
use crate::crack::CrackState;
use crate::mesh::Mesh;

pub type Vec2 = Vector2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Deformation,
    Displacement,
}

/// Degrees of freedom induced by a crack: corners of neighbouring cells share
/// a dof exactly when they are connected through intact interfaces around
/// their common node.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub corner_dof: Vec<[usize; 4]>,
    /// Geometric node of each dof.
    pub dof_node: Vec<usize>,
    /// Dofs carried by at least one frame cell; prescribed by boundary data.
    pub fixed: Vec<bool>,
    pub ties: CrackState,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

impl DofMap {
    pub fn build(mesh: &Mesh, crack: &CrackState) -> Self {
        let n = mesh.n_cells();
        let mut uf = UnionFind((0..4 * n).collect());
        for (i, f) in mesh.interfaces.iter().enumerate() {
            if crack.is_broken(i) {
                continue;
            }
            let [a, b] = f.cells;
            // corner pairs sharing a node across the facet
            let pairs = match f.orientation {
                crate::mesh::Orientation::Vertical => [(1, 0), (2, 3)],
                crate::mesh::Orientation::Horizontal => [(3, 0), (2, 1)],
            };
            for (ca, cb) in pairs {
                uf.union(4 * a + ca, 4 * b + cb);
            }
        }
        let mut label = vec![usize::MAX; 4 * n];
        let mut dof_node = Vec::new();
        let mut fixed = Vec::new();
        let mut corner_dof = vec![[0usize; 4]; n];
        for c in 0..n {
            let nodes = mesh.cell_nodes(c);
            for k in 0..4 {
                let root = uf.find(4 * c + k);
                if label[root] == usize::MAX {
                    label[root] = dof_node.len();
                    dof_node.push(nodes[k]);
                    fixed.push(false);
                }
                let d = label[root];
                corner_dof[c][k] = d;
                fixed[d] |= mesh.cells[c].in_frame;
            }
        }
        DofMap {
            corner_dof,
            dof_node,
            fixed,
            ties: crack.clone(),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_node.len()
    }

    pub fn position(&self, mesh: &Mesh, dof: usize) -> Vec2 {
        let p = mesh.nodes[self.dof_node[dof]];
        Vec2::new(p[0], p[1])
    }
}

/// Nodal vector values over a [`DofMap`]: a deformation `y` or a
/// displacement `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub kind: FieldKind,
    pub dofs: Arc<DofMap>,
    pub values: Vec<Vec2>,
}

impl Field {
    pub fn from_fn(mesh: &Mesh, dofs: Arc<DofMap>, kind: FieldKind, f: impl Fn(Vec2) -> Vec2) -> Self {
        let values = (0..dofs.n_dofs()).map(|d| f(dofs.position(mesh, d))).collect();
        Field { kind, dofs, values }
    }

    pub fn zeros(dofs: Arc<DofMap>, kind: FieldKind) -> Self {
        let values = vec![Vec2::zeros(); dofs.n_dofs()];
        Field { kind, dofs, values }
    }

    pub fn identity(mesh: &Mesh, crack: &CrackState) -> Self {
        Field::from_fn(mesh, Arc::new(DofMap::build(mesh, crack)), FieldKind::Deformation, |x| x)
    }

    pub fn ties(&self) -> &CrackState {
        &self.dofs.ties
    }

    pub fn corner_values(&self, cell: usize) -> [Vec2; 4] {
        self.dofs.corner_dof[cell].map(|d| self.values[d])
    }

    /// Re-expresses the field on the dofs of another crack. Each new dof
    /// takes the mean of the old values at its corners, which is exact when
    /// the new crack contains the old one.
    pub fn transfer(&self, mesh: &Mesh, dofs: Arc<DofMap>) -> Field {
        let mut sum = vec![Vec2::zeros(); dofs.n_dofs()];
        let mut count = vec![0u32; dofs.n_dofs()];
        for c in 0..mesh.n_cells() {
            for k in 0..4 {
                let d = dofs.corner_dof[c][k];
                sum[d] += self.values[self.dofs.corner_dof[c][k]];
                count[d] += 1;
            }
        }
        let values = sum.into_iter().zip(count).map(|(s, n)| s / n as f64).collect();
        Field {
            kind: self.kind,
            dofs,
            values,
        }
    }

    /// Cell-corner values flattened as `[cell][corner][component]`.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dofs.corner_dof.len() * 8);
        for corners in &self.dofs.corner_dof {
            for &d in corners {
                out.push(self.values[d].x);
                out.push(self.values[d].y);
            }
        }
        out
    }

    pub fn map(&self, kind: FieldKind, f: impl Fn(usize, Vec2) -> Vec2) -> Field {
        Field {
            kind,
            dofs: self.dofs.clone(),
            values: self.values.iter().enumerate().map(|(d, v)| f(d, *v)).collect(),
        }
    }
}

/// Gradients of the bilinear shape functions at reference point
/// `(xi, eta)` in `[0, 1]^2`, for a square cell of side `dx`.
pub fn shape_gradients(xi: f64, eta: f64, dx: f64) -> [Vec2; 4] {
    [
        Vec2::new(-(1.0 - eta), -(1.0 - xi)) / dx,
        Vec2::new(1.0 - eta, -xi) / dx,
        Vec2::new(eta, xi) / dx,
        Vec2::new(-eta, 1.0 - xi) / dx,
    ]
}

pub fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// `sum_a v_a (x) grad N_a`.
pub fn interpolate_gradient(values: &[Vec2; 4], grads: &[Vec2; 4]) -> Mat2 {
    let mut g = Mat2::zeros();
    for (v, n) in values.iter().zip(grads) {
        g += v * n.transpose();
    }
    g
}

/// 2x2 Gauss rule on the reference square: points and weights (summing to 1).
pub fn gauss_points() -> [(f64, f64, f64); 4] {
    let a = 0.5 - 0.5 / 3f64.sqrt();
    let b = 0.5 + 0.5 / 3f64.sqrt();
    [(a, a, 0.25), (b, a, 0.25), (b, b, 0.25), (a, b, 0.25)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crack::ring_around;
    use crate::mesh::{build_mesh, GridSpec, Orientation};

    #[test]
    fn uncracked_mesh_has_one_dof_per_node() {
        let mesh = build_mesh(&GridSpec::unit_cells(5, 4, 1)).unwrap();
        let dofs = DofMap::build(&mesh, &CrackState::empty());
        assert_eq!(dofs.n_dofs(), mesh.nodes.len());
        // interior nodes of a 5x4 grid with one frame ring: (5-2-1) x (4-2-1)
        assert_eq!(dofs.fixed.iter().filter(|f| !**f).count(), 2);
    }

    #[test]
    fn crack_splits_nodes_but_not_tips() {
        let mesh = build_mesh(&GridSpec::unit_cells(8, 8, 1)).unwrap();
        // horizontal run of two facets on line 4: one interior node splits,
        // both tips stay shared
        let cut: CrackState = [3, 4]
            .into_iter()
            .map(|col| mesh.interface_on_line(Orientation::Horizontal, 4, col).unwrap())
            .collect();
        let dofs = DofMap::build(&mesh, &cut);
        assert_eq!(dofs.n_dofs(), mesh.nodes.len() + 1);

        let ring = ring_around(&mesh, 3, 5, 3, 5);
        let dofs = DofMap::build(&mesh, &ring);
        // the 8 outline nodes of the 2x2 block split, its centre node does not
        assert_eq!(dofs.n_dofs(), mesh.nodes.len() + 8);
    }

    #[test]
    fn transfer_is_exact_onto_finer_ties() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let y = Field::identity(&mesh, &CrackState::empty());
        let ring = ring_around(&mesh, 2, 4, 2, 4);
        let split = y.transfer(&mesh, Arc::new(DofMap::build(&mesh, &ring)));
        assert_eq!(split.flattened(), y.flattened());
    }

    #[test]
    fn gauss_weights_and_shape_partition_of_unity() {
        let w: f64 = gauss_points().iter().map(|p| p.2).sum();
        assert_eq!(w, 1.0);
        for (xi, eta, _) in gauss_points() {
            let s: f64 = shape_values(xi, eta).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
            let g: Vec2 = shape_gradients(xi, eta, 0.5).iter().sum();
            assert!(g.norm() < 1e-15);
        }
    }
}
