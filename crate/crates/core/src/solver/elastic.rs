//! Elastic minimization with the crack held fixed.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::assembly::{add_modes, assemble_linear, element_stiffness, floating_modes, Layout, NonlinearSystem};
use super::{stream_seed, BoundarySnapshot, SolveOptions};
use crate::crack::CrackState;
use crate::energy::{Density, DofMap, ElasticTensor, Field, FieldKind, ModelParams, Vec2};
use crate::mesh::Mesh;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub field: Field,
    /// Euclidean norm of the Euler-Lagrange residual over the free unknowns,
    /// relative to the load vector `K_FD u_D` (absolute when the load is zero).
    pub residual: f64,
    pub load_norm: f64,
}

/// Minimizes `int 1/2 Q(e(u))` over fields tied according to `crack`, with
/// `u = h` on the frame. Pieces cut off from the frame carry no load; their
/// rigid motions are fixed by zero mean displacement and zero mean rotation.
pub fn elastic_solve_linear(
    mesh: &Mesh,
    crack: &CrackState,
    h: &BoundarySnapshot,
    tensor: &ElasticTensor,
) -> Result<LinearSolution> {
    solve_linear(mesh, Arc::new(DofMap::build(mesh, crack)), h, tensor)
}

pub(crate) fn solve_linear(
    mesh: &Mesh,
    dofs: Arc<DofMap>,
    h: &BoundarySnapshot,
    tensor: &ElasticTensor,
) -> Result<LinearSolution> {
    let layout = Layout::new(&dofs);
    let positions: Vec<Vec2> = (0..dofs.n_dofs()).map(|d| dofs.position(mesh, d)).collect();
    let mut field = Field::zeros(dofs.clone(), FieldKind::Displacement);
    for (d, x) in positions.iter().enumerate() {
        if dofs.fixed[d] {
            field.values[d] = h.eval(*x);
        }
    }
    if layout.n_free == 0 {
        return Ok(LinearSolution {
            field,
            residual: 0.0,
            load_norm: 0.0,
        });
    }
    let ke = element_stiffness(mesh.dx, tensor);
    let (mut k, b) = assemble_linear(mesh, &dofs, &layout, &ke, &field.values);
    let modes = floating_modes(mesh, &dofs, &layout, &positions);
    let alpha = k.diagonal().max();
    add_modes(&mut k, &modes, alpha);
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(format!("{} free unknowns, {} rigid modes pinned", layout.n_free, modes.len())))?;
    // residual of the unregularized system
    let residual_of = |x: &DVector<f64>| {
        let mut r = &k * x - &b;
        for m in &modes {
            r.axpy(-alpha * m.dot(x), m, 1.0);
        }
        r
    };
    let load_norm = b.norm();
    let mut x = chol.solve(&b);
    let mut r = residual_of(&x);
    for _ in 0..3 {
        if r.norm() <= 1e-14 * load_norm {
            break;
        }
        x -= chol.solve(&r);
        r = residual_of(&x);
    }
    layout.scatter(&x, &mut field.values);
    let residual = if load_norm > 0.0 { r.norm() / load_norm } else { r.norm() };
    Ok(LinearSolution {
        field,
        residual,
        load_norm,
    })
}

#[derive(Clone, Debug)]
pub struct NonlinearSolution {
    pub field: Field,
    pub elastic: f64,
    pub hessian: f64,
    /// Max-norm of the energy gradient over the free unknowns, taken with
    /// respect to the rescaled displacement `(y - id) / eps`.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Index of the start that produced the returned field (0 = warm start).
    pub start: usize,
}

impl NonlinearSolution {
    pub fn bulk(&self) -> f64 {
        self.elastic + self.hessian
    }
}

/// Critical point of the elastic and second-gradient energy with the crack
/// fixed and `y = id + eps h` on the frame. Newton's method with a shifted
/// Cholesky factorization and Armijo backtracking is run from the warm start
/// and from `opts.multistart` random perturbations of it; the lowest-energy
/// converged result wins.
#[allow(clippy::too_many_arguments)]
pub fn elastic_solve_nonlinear(
    mesh: &Mesh,
    crack: &CrackState,
    h: &BoundarySnapshot,
    density: &Density,
    p: &ModelParams,
    warm_start: &Field,
    opts: &SolveOptions,
    stream: u64,
) -> Result<NonlinearSolution> {
    let dofs = if warm_start.ties() == crack {
        warm_start.dofs.clone()
    } else {
        Arc::new(DofMap::build(mesh, crack))
    };
    solve_nonlinear(mesh, dofs, h, density, p, warm_start, opts, opts.multistart, stream)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_nonlinear(
    mesh: &Mesh,
    dofs: Arc<DofMap>,
    h: &BoundarySnapshot,
    density: &Density,
    p: &ModelParams,
    warm_start: &Field,
    opts: &SolveOptions,
    restarts: usize,
    stream: u64,
) -> Result<NonlinearSolution> {
    let mut start = if Arc::ptr_eq(&warm_start.dofs, &dofs) {
        warm_start.clone()
    } else {
        warm_start.transfer(mesh, dofs.clone())
    };
    start.kind = FieldKind::Deformation;
    for d in 0..dofs.n_dofs() {
        if dofs.fixed[d] {
            let x = dofs.position(mesh, d);
            start.values[d] = x + p.epsilon * h.eval(x);
        }
    }
    let system = NonlinearSystem::new(mesh, &dofs, *density, p);
    let amplitude = p.epsilon * mesh.dx;
    let results: Vec<Result<NonlinearSolution>> = (0..=restarts)
        .into_par_iter()
        .map(|i| {
            let mut values = start.values.clone();
            if i > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.rng_seed, &[stream, i as u64]));
                for d in 0..dofs.n_dofs() {
                    if !dofs.fixed[d] {
                        values[d] += amplitude * Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
            }
            let (values, elastic, hessian, gradient_norm, iterations) = newton(mesh, &dofs, &system, values, p.epsilon, opts)?;
            Ok(NonlinearSolution {
                field: Field {
                    kind: FieldKind::Deformation,
                    dofs: dofs.clone(),
                    values,
                },
                elastic,
                hessian,
                gradient_norm,
                iterations,
                start: i,
            })
        })
        .collect();
    let mut best: Option<NonlinearSolution> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.bulk() < b.bulk()) {
                    best = Some(sol);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

type NewtonResult = (Vec<Vec2>, f64, f64, f64, usize);

/// Stops when `eps |grad E|_inf <= elastic_tol`, the gradient with respect to
/// the rescaled displacement, or when the Newton update is below the
/// floating-point resolution of the iterate.
fn newton(
    mesh: &Mesh,
    dofs: &DofMap,
    system: &NonlinearSystem,
    mut values: Vec<Vec2>,
    eps: f64,
    opts: &SolveOptions,
) -> Result<NewtonResult> {
    let layout = &system.layout;
    let residual = |g: &DVector<f64>| if layout.n_free == 0 { 0.0 } else { eps * g.amax() };
    for it in 0..opts.max_newton_iters {
        let ev = system.evaluate(&values);
        let gnorm = residual(&ev.gradient);
        if gnorm <= opts.elastic_tol {
            return Ok((values, ev.elastic, ev.hessian, gnorm, it));
        }
        let e0 = ev.energy();
        let x0 = layout.gather(&values);
        let modes = floating_modes(mesh, dofs, layout, &values);
        let (direction, slope) = match newton_direction(ev.matrix, &ev.gradient, &modes) {
            Some(d) if d.dot(&ev.gradient) < 0.0 => {
                if d.amax() <= 8.0 * f64::EPSILON * x0.amax().max(1.0) {
                    return Ok((values, ev.elastic, ev.hessian, gnorm, it));
                }
                let s = d.dot(&ev.gradient);
                (d, s)
            }
            _ => (-ev.gradient.clone(), -ev.gradient.norm_squared()),
        };
        let slack = 1e-14 * e0.abs();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = values.clone();
            layout.scatter(&(&x0 + step * &direction), &mut trial);
            let (el, he) = system.energy(&trial);
            let e = el + he;
            if e.is_finite() && e <= e0 + 1e-4 * step * slope + slack {
                values = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence(format!(
                "line search failed at iteration {it} with gradient norm {gnorm:e}"
            )));
        }
    }
    let ev = system.evaluate(&values);
    let gnorm = residual(&ev.gradient);
    if gnorm <= opts.elastic_tol {
        return Ok((values, ev.elastic, ev.hessian, gnorm, opts.max_newton_iters));
    }
    Err(Error::NoConvergence(format!(
        "gradient norm {gnorm:e} after {} Newton iterations",
        opts.max_newton_iters
    )))
}

/// Solves `(H + alpha sum r r^T + mu I) d = -g`, raising `mu` until the
/// factorization succeeds.
fn newton_direction(mut hmat: DMatrix<f64>, g: &DVector<f64>, modes: &[DVector<f64>]) -> Option<DVector<f64>> {
    let scale = hmat.diagonal().amax().max(f64::MIN_POSITIVE);
    add_modes(&mut hmat, modes, scale);
    let mut mu = 0.0;
    while mu <= 1e6 * scale {
        let mut shifted = hmat.clone();
        if mu > 0.0 {
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += mu;
            }
        }
        if let Some(chol) = shifted.cholesky() {
            return Some(-chol.solve(g));
        }
        mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
    }
    None
}
