//! The linearized elasticity tensor `C = D^2 W(Id)` and its quadratic form.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::density::{basis, Density, Mat2};
use crate::{Error, Result};

/// Finite-difference step used to linearize a density at the identity.
pub const LINEARIZATION_STEP: f64 = 1e-4;

/// Symmetric fourth-order tensor stored on the symmetric-strain basis
/// `(e11, e22, sqrt(2) e12)`, in which `|A|^2` is the Euclidean norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor {
    pub c3: Matrix3<f64>,
}

/// Symmetric part of `a` as a vector in the `(e11, e22, sqrt(2) e12)` basis.
pub fn strain_vector(a: &Mat2) -> Vector3<f64> {
    let off = 0.5 * (a[(0, 1)] + a[(1, 0)]);
    Vector3::new(a[(0, 0)], a[(1, 1)], std::f64::consts::SQRT_2 * off)
}

pub fn strain_matrix(v: &Vector3<f64>) -> Mat2 {
    let off = v[2] / std::f64::consts::SQRT_2;
    Mat2::new(v[0], off, off, v[1])
}

pub fn sym(a: &Mat2) -> Mat2 {
    0.5 * (a + a.transpose())
}

impl ElasticTensor {
    /// `2 |sym A|^2`, the linearization of the default density.
    pub fn isotropic_dist_so2() -> Self {
        ElasticTensor {
            c3: Matrix3::identity() * 2.0,
        }
    }

    /// `Q(A) = C A : A`; depends on `sym A` only.
    pub fn q(&self, a: &Mat2) -> f64 {
        let v = strain_vector(a);
        v.dot(&(self.c3 * v))
    }

    /// `C A : B`.
    pub fn contract(&self, a: &Mat2, b: &Mat2) -> f64 {
        strain_vector(a).dot(&(self.c3 * strain_vector(b)))
    }

    /// The stress `C A` as a symmetric matrix.
    pub fn stress(&self, a: &Mat2) -> Mat2 {
        strain_matrix(&(self.c3 * strain_vector(a)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.c3).eigenvalues.min()
    }
}

/// `D^2 W(Id)` on flattened matrices from second-order central differences
/// of `W` along all ten direction pairs, symmetrized.
pub fn hessian_at_identity_fd(density: &Density, step: f64) -> Matrix4<f64> {
    let id = Mat2::identity();
    let w = |m: Mat2| density.value(&m);
    let mut out = Matrix4::zeros();
    for i in 0..4 {
        for j in i..4 {
            let (ei, ej) = (basis(i) * step, basis(j) * step);
            let v = if i == j {
                (w(id + ei) - 2.0 * w(id) + w(id - ei)) / (step * step)
            } else {
                (w(id + ei + ej) - w(id + ei - ej) - w(id - ei + ej) + w(id - ei - ej)) / (4.0 * step * step)
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Restriction of a flattened fourth-order tensor to the symmetric basis.
pub fn restrict_to_symmetric(full: &Matrix4<f64>) -> Matrix3<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // basis matrices E11, E22, (E12 + E21)/sqrt(2) as flattened vectors
    let b = [
        nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
        nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0),
        nalgebra::Vector4::new(0.0, s, s, 0.0),
    ];
    Matrix3::from_fn(|k, l| b[k].dot(&(full * b[l])))
}

pub fn linearized_tensor(density: &Density) -> Result<ElasticTensor> {
    let full = hessian_at_identity_fd(density, LINEARIZATION_STEP);
    let c3 = restrict_to_symmetric(&full);
    let tensor = ElasticTensor {
        c3: 0.5 * (c3 + c3.transpose()),
    };
    let min = tensor.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::NonPositiveDefinite(min));
    }
    Ok(tensor)
}
