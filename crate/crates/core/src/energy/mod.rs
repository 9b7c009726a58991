//! Densities, the linearized tensor, discrete gradients and the energies of
//! the nonlinear and linear models.
//!
//! Bulk integrals use the 2x2 Gauss rule on each cell. The one-point
//! (centroid) rule leaves the bilinear hourglass modes without stiffness, so
//! it is used only where a single gradient per cell is wanted: the
//! second-gradient term and the per-cell diagnostics.

pub mod density;
pub mod field;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use density::{Density, Mat2};
pub use field::{DofMap, Field, FieldKind, Vec2};
pub use tensor::{linearized_tensor, ElasticTensor};

use crate::crack::{crack_measure, CrackState};
use crate::mesh::Mesh;
use crate::{Error, Result};
use field::{gauss_points, interpolate_gradient, shape_gradients};

/// Scaling and material constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub epsilon: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Radius of the neighbourhood of SO(2) on which the density is C^3.
    pub r: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            epsilon: 0.1,
            beta: 0.9,
            gamma: 0.7,
            kappa: 1.0,
            r: 0.5,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let two_thirds = 2.0 / 3.0;
        if !(two_thirds < self.gamma && self.gamma < self.beta && self.beta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "need 2/3 < gamma < beta < 1 (gamma = {}, beta = {})",
                self.gamma, self.beta
            )));
        }
        for (name, v) in [("epsilon", self.epsilon), ("kappa", self.kappa), ("r", self.r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        ModelParams { epsilon, ..self }
    }

    /// Weight `eps^(-2 beta)` of the second-gradient term.
    pub fn hessian_weight(&self) -> f64 {
        self.epsilon.powf(-2.0 * self.beta)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub hessian: f64,
    pub surface: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(elastic: f64, hessian: f64, surface: f64) -> Self {
        EnergyBreakdown {
            elastic,
            hessian,
            surface,
            total: elastic + hessian + surface,
        }
    }

    /// Bulk part, the energy a break can at most release.
    pub fn bulk(&self) -> f64 {
        self.elastic + self.hessian
    }
}

/// Gradient of the bilinear interpolant at the cell centroid.
pub fn cell_gradient(mesh: &Mesh, field: &Field, cell: usize) -> Mat2 {
    interpolate_gradient(&field.corner_values(cell), &shape_gradients(0.5, 0.5, mesh.dx))
}

/// Quadrature of `|grad^2 y|^2` from gradient jumps across intact interfaces:
/// each interface contributes `(length / dx) |G+ - G-|^2` with `G` the
/// centroid gradients of its two cells. Broken interfaces contribute nothing.
pub fn discrete_hessian_term(mesh: &Mesh, crack: &CrackState, field: &Field) -> f64 {
    let grads: Vec<Mat2> = (0..mesh.n_cells()).map(|c| cell_gradient(mesh, field, c)).collect();
    mesh.interfaces
        .iter()
        .enumerate()
        .filter(|(i, _)| !crack.is_broken(*i))
        .map(|(_, f)| f.length / mesh.dx * (grads[f.cells[1]] - grads[f.cells[0]]).norm_squared())
        .sum()
}

/// `sum_cells int_cell g(grad v)` with the 2x2 Gauss rule.
pub fn integrate_gradient(mesh: &Mesh, field: &Field, mut g: impl FnMut(usize, &Mat2) -> f64) -> f64 {
    let area = mesh.cell_area();
    let rule: Vec<_> = gauss_points()
        .iter()
        .map(|&(xi, eta, w)| (shape_gradients(xi, eta, mesh.dx), w * area))
        .collect();
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let v = field.corner_values(c);
        for (grads, w) in &rule {
            total += w * g(c, &interpolate_gradient(&v, grads));
        }
    }
    total
}

fn check_ties(field: &Field, crack: &CrackState, new_broken: &CrackState) -> Result<()> {
    let expected = crack.union(new_broken);
    if field.ties() != &expected {
        return Err(Error::InconsistentTie(format!(
            "field built for {:?}, energy asked for {:?}",
            field.ties().broken,
            expected.broken
        )));
    }
    Ok(())
}

/// Incremental nonlinear energy: bulk terms of `y` plus `kappa` times the
/// length of `new_broken` outside the already existing `crack`.
pub fn nonlinear_energy(
    mesh: &Mesh,
    crack: &CrackState,
    new_broken: &CrackState,
    y: &Field,
    density: &Density,
    p: &ModelParams,
) -> Result<EnergyBreakdown> {
    check_ties(y, crack, new_broken)?;
    let elastic = integrate_gradient(mesh, y, |_, g| density.value(g)) / (p.epsilon * p.epsilon);
    let hessian = p.hessian_weight() * discrete_hessian_term(mesh, y.ties(), y);
    let surface = p.kappa * crack_measure(mesh, &new_broken.difference(crack));
    Ok(EnergyBreakdown::new(elastic, hessian, surface))
}

/// Incremental linear Griffith energy `int 1/2 Q(e(u)) + kappa H^1(new)`.
pub fn linear_energy(
    mesh: &Mesh,
    crack: &CrackState,
    new_broken: &CrackState,
    u: &Field,
    tensor: &ElasticTensor,
    p: &ModelParams,
) -> Result<EnergyBreakdown> {
    check_ties(u, crack, new_broken)?;
    let elastic = 0.5 * integrate_gradient(mesh, u, |_, g| tensor.q(g));
    let surface = p.kappa * crack_measure(mesh, &new_broken.difference(crack));
    Ok(EnergyBreakdown::new(elastic, 0.0, surface))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, crackable_interfaces, GridSpec};
    use std::sync::Arc;

    fn params() -> ModelParams {
        ModelParams {
            epsilon: 0.1,
            beta: 0.9,
            gamma: 0.7,
            kappa: 2.0,
            r: 0.5,
        }
    }

    #[test]
    fn parameter_window() {
        assert!(params().validate().is_ok());
        let bad = ModelParams { gamma: 0.5, ..params() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("2/3 < gamma < beta < 1"));
        assert!(ModelParams { beta: 1.0, ..params() }.validate().is_err());
        assert!(ModelParams { gamma: 0.95, ..params() }.validate().is_err());
        assert!(ModelParams { kappa: 0.0, ..params() }.validate().is_err());
    }

    #[test]
    fn affine_fields_have_exact_cell_gradients() {
        let mesh = build_mesh(&GridSpec::square(2.0, 6, 1)).unwrap();
        let crack = CrackState::empty();
        let id = Field::identity(&mesh, &crack);
        let a = Mat2::new(0.0, 1.0, 0.0, 0.0);
        let u = Field::from_fn(&mesh, id.dofs.clone(), FieldKind::Displacement, |x| a * x);
        for c in 0..mesh.n_cells() {
            assert!((cell_gradient(&mesh, &id, c) - Mat2::identity()).norm() < 1e-14);
            assert!((cell_gradient(&mesh, &u, c) - a).norm() < 1e-14);
        }
    }

    #[test]
    fn perturbing_one_corner_changes_only_its_cells() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let mut y = Field::identity(&mesh, &CrackState::empty());
        let node = 3 * 7 + 3;
        let d = y.dofs.dof_node.iter().position(|&n| n == node).unwrap();
        let delta = 1e-3;
        y.values[d].x += delta;
        for c in 0..mesh.n_cells() {
            let g = cell_gradient(&mesh, &y, c);
            let corner = mesh.cell_nodes(c).iter().position(|&n| n == node);
            match corner {
                None => assert!((g - Mat2::identity()).norm() < 1e-14),
                Some(k) => {
                    // direct evaluation of the bilinear form at the centroid
                    let grad_n = shape_gradients(0.5, 0.5, mesh.dx)[k];
                    let expected = Mat2::identity() + Mat2::new(delta * grad_n.x, delta * grad_n.y, 0.0, 0.0);
                    assert!((g - expected).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hessian_term_vanishes_on_affine_fields_and_across_cracks() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let crack: CrackState = crackable_interfaces(&mesh).into_iter().step_by(3).collect();
        let y = Field::from_fn(
            &mesh,
            Arc::new(DofMap::build(&mesh, &crack)),
            FieldKind::Deformation,
            |x| Mat2::new(1.2, 0.3, -0.1, 0.9) * x + Vec2::new(0.5, 2.0),
        );
        assert!(discrete_hessian_term(&mesh, &crack, &y) < 1e-26);

        // two affine pieces with different gradients, separated by a full cut
        let cut: CrackState = (0..mesh.spec.cells_y)
            .filter_map(|row| mesh.interface_on_line(crate::mesh::Orientation::Vertical, 3, row))
            .collect();
        let dofs = Arc::new(DofMap::build(&mesh, &cut));
        let y = Field::from_fn(&mesh, dofs, FieldKind::Deformation, |x| x);
        let mut y2 = y.clone();
        for c in 0..mesh.n_cells() {
            if mesh.cells[c].ix >= 3 {
                for d in y.dofs.corner_dof[c] {
                    let p = y.dofs.position(&mesh, d);
                    y2.values[d] = Vec2::new(2.0 * p.x, p.y);
                }
            }
        }
        assert!(discrete_hessian_term(&mesh, &cut, &y2) < 1e-26);
        assert!(discrete_hessian_term(&mesh, &CrackState::empty(), &y2.transfer(&mesh, Arc::new(DofMap::build(&mesh, &CrackState::empty())))) > 0.1);
    }

    #[test]
    fn hessian_term_of_quadratic_field() {
        // y = (x1^2, 0): centroid gradients jump by 2 dx across vertical
        // facets, so the sum is 4 dx^2 (nx - 1) ny = 4 area (1 - 1/nx).
        let mut values = Vec::new();
        for n in [8usize, 16, 32] {
            let mesh = build_mesh(&GridSpec::square(1.0, n, 1)).unwrap();
            let crack = CrackState::empty();
            let y = Field::from_fn(
                &mesh,
                Arc::new(DofMap::build(&mesh, &crack)),
                FieldKind::Deformation,
                |x| Vec2::new(x.x * x.x, 0.0),
            );
            let h = discrete_hessian_term(&mesh, &crack, &y);
            let exact = 4.0 * mesh.area() * (1.0 - 1.0 / n as f64);
            assert!((h - exact).abs() < 1e-10, "{h} vs {exact}");
            values.push(h);
        }
        // Richardson extrapolation with the observed first-order rate
        let extrapolated = 2.0 * values[2] - values[1];
        assert!((extrapolated - 4.0).abs() < 1e-10);
    }

    #[test]
    fn nonlinear_energy_examples() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let p = params();
        let none = CrackState::empty();
        let y = Field::identity(&mesh, &none);
        let e = nonlinear_energy(&mesh, &none, &none, &y, &Density::DistSo2, &p).unwrap();
        assert!(e.total < 1e-24);

        let grad_h = Mat2::new(0.4, -0.2, 0.3, 0.1);
        let y = Field::from_fn(&mesh, y.dofs.clone(), FieldKind::Deformation, |x| x + p.epsilon * grad_h * x);
        let e = nonlinear_energy(&mesh, &none, &none, &y, &Density::DistSo2, &p).unwrap();
        let direct = mesh.area() * Density::DistSo2.value(&(Mat2::identity() + p.epsilon * grad_h)) / p.epsilon.powi(2);
        assert!((e.elastic - direct).abs() < 1e-12 * direct);
        assert!(e.hessian < 1e-20);
        assert_eq!(e.total, e.elastic + e.hessian + e.surface);

        let f = crackable_interfaces(&mesh)[4];
        let broken: CrackState = [f].into_iter().collect();
        let y = Field::identity(&mesh, &broken);
        let e = nonlinear_energy(&mesh, &none, &broken, &y, &Density::DistSo2, &p).unwrap();
        assert!((e.total - p.kappa * mesh.dx).abs() < 1e-14);
        // already broken interfaces are free
        let e = nonlinear_energy(&mesh, &broken, &broken, &y, &Density::DistSo2, &p).unwrap();
        assert!(e.total < 1e-24);
    }

    #[test]
    fn mismatched_ties_are_rejected() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let none = CrackState::empty();
        let y = Field::identity(&mesh, &none);
        let broken: CrackState = [crackable_interfaces(&mesh)[0]].into_iter().collect();
        let err = nonlinear_energy(&mesh, &none, &broken, &y, &Density::DistSo2, &params()).unwrap_err();
        assert!(matches!(err, Error::InconsistentTie(_)));
        let t = ElasticTensor::isotropic_dist_so2();
        assert!(linear_energy(&mesh, &broken, &none, &y, &t, &params()).is_err());
    }

    #[test]
    fn linear_energy_examples() {
        let mesh = build_mesh(&GridSpec::square(3.0, 6, 1)).unwrap();
        let p = params();
        let none = CrackState::empty();
        let t = linearized_tensor(&Density::DistSo2).unwrap();
        let dofs = Arc::new(DofMap::build(&mesh, &none));
        let zero = Field::zeros(dofs.clone(), FieldKind::Displacement);
        assert_eq!(linear_energy(&mesh, &none, &none, &zero, &t, &p).unwrap().total, 0.0);

        let skew = Mat2::new(0.0, 0.7, -0.7, 0.0);
        let u = Field::from_fn(&mesh, dofs.clone(), FieldKind::Displacement, |x| skew * x);
        assert!(linear_energy(&mesh, &none, &none, &u, &t, &p).unwrap().elastic.abs() < 1e-14);

        let a = 0.3;
        let u = Field::from_fn(&mesh, dofs, FieldKind::Displacement, |x| Vec2::new(a * x.x, 0.0));
        let e = linear_energy(&mesh, &none, &none, &u, &t, &p).unwrap();
        assert!((e.elastic - mesh.area() * a * a).abs() < 1e-7);
        assert_eq!(e.hessian, 0.0);
    }
}
