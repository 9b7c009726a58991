//! Stored-energy densities on 2x2 matrices.
//!
//! Matrices are flattened row-major, `(F11, F12, F21, F22)`, wherever a
//! fourth-order object is represented as a 4x4 matrix.

use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub type Mat2 = Matrix2<f64>;

/// Built-in densities.
///
/// `DistSo2` is the squared distance to SO(2) in closed form,
/// `|F|^2 + 2 - 2 sqrt(|F|^2 + 2 det F)`. It is frame indifferent, vanishes
/// exactly on rotations, has a gradient of linear growth and is smooth away
/// from the set `|F|^2 + 2 det F = 0`, where the root is clamped at zero.
///
/// `StVenantLike` is `|F^T F - I|^2 / 8 + (det F - 1)^2 / 2`. It grows
/// quartically, so it does not have the Lipschitz bound of the default and
/// is meant for experiments only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    #[default]
    DistSo2,
    StVenantLike,
}

pub fn cofactor(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}

/// Rotation by `theta`, renormalized until its column norm evaluates to
/// exactly one.
pub fn rotation(theta: f64) -> Mat2 {
    let (mut s, mut c) = theta.sin_cos();
    for _ in 0..4 {
        let n = c.hypot(s);
        if n == 1.0 {
            break;
        }
        c /= n;
        s /= n;
    }
    Mat2::new(c, -s, s, c)
}

/// Closest rotation to `f` in the Frobenius norm, `None` when
/// `|F|^2 + 2 det F = 0` and every rotation is equally close.
pub fn nearest_rotation(f: &Mat2) -> Option<Mat2> {
    let cos = f[(0, 0)] + f[(1, 1)];
    let sin = f[(1, 0)] - f[(0, 1)];
    let norm = cos.hypot(sin);
    if norm == 0.0 {
        return None;
    }
    Some(Mat2::new(cos / norm, -sin / norm, sin / norm, cos / norm))
}

pub fn flatten(m: &Mat2) -> Vector4<f64> {
    Vector4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

pub fn unflatten(v: &Vector4<f64>) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

/// Basis matrix `E_k` of the flattened representation.
pub fn basis(k: usize) -> Mat2 {
    let mut m = Mat2::zeros();
    m[(k / 2, k % 2)] = 1.0;
    m
}

impl Density {
    pub fn value(&self, f: &Mat2) -> f64 {
        match self {
            Density::DistSo2 => {
                // F = lambda R* + B with B anticonformal and orthogonal to every
                // rotation, so dist^2 = |B|^2 + 2 (lambda - 1)^2 without cancellation
                let (a, b, c, d) = (f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]);
                let lambda = 0.5 * (a + d).hypot(c - b);
                let anti = 0.5 * ((a - d) * (a - d) + (b + c) * (b + c));
                anti + 2.0 * (lambda - 1.0) * (lambda - 1.0)
            }
            Density::StVenantLike => {
                let c = f.transpose() * f - Mat2::identity();
                let j = f.determinant() - 1.0;
                c.norm_squared() / 8.0 + 0.5 * j * j
            }
        }
    }

    pub fn gradient(&self, f: &Mat2) -> Mat2 {
        match self {
            Density::DistSo2 => match nearest_rotation(f) {
                Some(r) => 2.0 * (f - r),
                None => 2.0 * f,
            },
            Density::StVenantLike => {
                let c = f.transpose() * f - Mat2::identity();
                0.5 * f * c + (f.determinant() - 1.0) * cofactor(f)
            }
        }
    }

    /// Second derivative as a symmetric 4x4 matrix on flattened matrices.
    pub fn second_derivative(&self, f: &Mat2) -> Matrix4<f64> {
        let mut out = Matrix4::zeros();
        for k in 0..4 {
            let h = basis(k);
            out.set_column(k, &flatten(&self.second_derivative_along(f, &h)));
        }
        out
    }

    /// `D^2 W(F)[H]` as a matrix.
    pub fn second_derivative_along(&self, f: &Mat2, h: &Mat2) -> Mat2 {
        match self {
            Density::DistSo2 => {
                let s = f.norm_squared() + 2.0 * f.determinant();
                // below this the clamped branch is used; the curvature there is 2 Id
                if s <= 1e-24 {
                    return 2.0 * h;
                }
                let root = s.sqrt();
                let r = nearest_rotation(f).expect("s > 0");
                2.0 * h - (2.0 / root) * (h + cofactor(h)) + (2.0 / root) * r * r.dot(h)
            }
            Density::StVenantLike => {
                let c = f.transpose() * f - Mat2::identity();
                let dc = h.transpose() * f + f.transpose() * h;
                let cof = cofactor(f);
                0.5 * (h * c + f * dc) + cof.dot(h) * cof + (f.determinant() - 1.0) * cofactor(h)
            }
        }
    }

    /// Whether the density has the linear-growth Lipschitz bound assumed by
    /// the convergence theory.
    pub fn has_linear_growth(&self) -> bool {
        matches!(self, Density::DistSo2)
    }
}
