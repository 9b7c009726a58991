//! Post-processing of nonlinear runs towards the linear model: rescaled
//! displacements, per-piece rotation fits, the small-gradient cutoff region,
//! energy-balance residuals, the work done on cut-off pieces, a reflection
//! extension across a straight boundary, and ladder reports.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crack::{bad_set_from_partition, DomainPartition};
use crate::energy::density::{nearest_rotation, Density};
use crate::energy::field::{gauss_points, shape_values};
use crate::energy::tensor::sym;
use crate::energy::{cell_gradient, integrate_gradient, DofMap, Field, FieldKind, Mat2, ModelParams, Vec2};
use crate::mesh::Mesh;
use crate::solver::{work_integral, Model, Trajectory};
use crate::{Error, Result};

/// `(y - id) / eps` with the tie structure of `y`.
pub fn rescale(mesh: &Mesh, y: &Field, eps: f64) -> Result<Field> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("rescaling needs eps > 0 (got {eps})")));
    }
    Ok(y.map(FieldKind::Displacement, |d, v| (v - y.dofs.position(mesh, d)) / eps))
}

/// One rotation per component of a partition; frame-touching pieces keep the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationAssignment {
    pub rotations: Vec<Mat2>,
}

#[derive(Clone, Debug)]
pub struct RotationFit {
    pub assignment: RotationAssignment,
    pub y_rot: Field,
    /// `|| e(y_rot) - Id ||_L2` over the whole rectangle.
    pub sym_defect: f64,
    /// `|| grad y_rot - Id ||_L2` over the whole rectangle.
    pub grad_defect: f64,
}

/// Fits `R_j` to the area-mean gradient of every piece cut off from the
/// frame and undoes it: `y_rot = R_j^T y` on piece `j`.
pub fn component_rotations(mesh: &Mesh, partition: &DomainPartition, y: &Field) -> Result<RotationFit> {
    let mut rotations = vec![Mat2::identity(); partition.len()];
    for (j, comp) in partition.interior_components() {
        let mean = comp.cells.iter().map(|&c| cell_gradient(mesh, y, c)).sum::<Mat2>() / comp.cells.len() as f64;
        let det = mean.determinant();
        if !(det > 0.0) {
            return Err(Error::DegenerateMeanGradient { component: j, det });
        }
        rotations[j] = nearest_rotation(&mean).expect("positive determinant");
    }
    let mut owner = vec![usize::MAX; y.dofs.n_dofs()];
    for (c, dofs) in y.dofs.corner_dof.iter().enumerate() {
        for &d in dofs {
            owner[d] = partition.component_of[c];
        }
    }
    let y_rot = y.map(FieldKind::Deformation, |d, v| rotations[owner[d]].transpose() * v);
    let id = Mat2::identity();
    let sym_defect = integrate_gradient(mesh, &y_rot, |_, g| (sym(g) - id).norm_squared()).sqrt();
    let grad_defect = integrate_gradient(mesh, &y_rot, |_, g| (g - id).norm_squared()).sqrt();
    Ok(RotationFit {
        assignment: RotationAssignment { rotations },
        y_rot,
        sym_defect,
        grad_defect,
    })
}

/// `(theta_minus, eta, theta_plus)` for given `eps` and `gamma`; `eta` is the
/// geometric midpoint of the window.
pub fn cutoff_window(eps: f64, gamma: f64) -> (f64, f64, f64) {
    (
        eps.powf((9.0 * gamma - 10.0) / 12.0),
        eps.powf((3.0 * gamma - 4.0) / 6.0),
        eps.powf((gamma - 2.0) / 4.0),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffRegion {
    pub eta: f64,
    pub theta_minus: f64,
    pub theta_plus: f64,
    pub inside: Vec<bool>,
    /// Intact interfaces between kept and excised cells.
    pub excised_boundary: usize,
}

/// Keeps the cells where `max |grad u_aux|_ij < eta` and zeroes the rest.
/// The returned field is discontinuous across the boundary of the kept
/// region, so its ties include those interfaces.
pub fn cutoff(mesh: &Mesh, u_aux: &Field, p: &ModelParams) -> Result<(CutoffRegion, Field)> {
    let (theta_minus, eta, theta_plus) = cutoff_window(p.epsilon, p.gamma);
    let inside: Vec<bool> = (0..mesh.n_cells()).map(|c| cell_gradient(mesh, u_aux, c).amax() < eta).collect();
    if let Some(c) = mesh.frame_cells().find(|&c| !inside[c]) {
        return Err(Error::FrameExcised(c));
    }
    let boundary: Vec<usize> = mesh
        .interfaces
        .iter()
        .enumerate()
        .filter(|(_, f)| inside[f.cells[0]] != inside[f.cells[1]])
        .map(|(i, _)| i)
        .collect();
    let excised_boundary = boundary.iter().filter(|f| !u_aux.ties().is_broken(**f)).count();
    let ties = u_aux.ties().with(boundary);
    let dofs = Arc::new(DofMap::build(mesh, &ties));
    let mut values = vec![Vec2::zeros(); dofs.n_dofs()];
    for c in 0..mesh.n_cells() {
        if inside[c] {
            for k in 0..4 {
                values[dofs.corner_dof[c][k]] = u_aux.values[u_aux.dofs.corner_dof[c][k]];
            }
        }
    }
    Ok((
        CutoffRegion {
            eta,
            theta_minus,
            theta_plus,
            inside,
            excised_boundary,
        },
        Field {
            kind: FieldKind::Displacement,
            dofs,
            values,
        },
    ))
}

/// Balance residuals `sigma(s, t) = E_tot(t) - E_tot(s) - work(s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceSeries {
    pub times: Vec<f64>,
    /// `sigma(t_n, t_{n+1})`, one per step pair.
    pub consecutive: Vec<f64>,
    /// `sigma(t_0, t_n)`, one per node.
    pub from_start: Vec<f64>,
}

impl BalanceSeries {
    pub fn max_positive(&self) -> f64 {
        self.consecutive.iter().fold(0.0, |m, &s| m.max(s))
    }
}

pub fn balance_residual(traj: &Trajectory) -> Result<BalanceSeries> {
    let times: Vec<f64> = traj.steps.iter().map(|s| s.time).collect();
    let mut consecutive = Vec::with_capacity(times.len().saturating_sub(1));
    let mut from_start = vec![0.0; times.len()];
    for n in 0..times.len().saturating_sub(1) {
        let w = work_integral(traj, times[n], times[n + 1])?;
        let sigma = traj.steps[n + 1].energy.total - traj.steps[n].energy.total - w;
        consecutive.push(sigma);
        from_start[n + 1] = from_start[n] + sigma;
    }
    Ok(BalanceSeries {
        times,
        consecutive,
        from_start,
    })
}

/// Displacement used for the interior work at step `n`: `(y_rot - id) / eps`
/// for nonlinear runs, the displacement itself otherwise.
fn aligned_displacement(traj: &Trajectory, n: usize, rotations: &RotationAssignment) -> Result<Field> {
    let step = &traj.steps[n];
    match traj.model {
        Model::Linear => Ok(step.field.clone()),
        Model::Nonlinear => {
            let mut owner = vec![0; step.field.dofs.n_dofs()];
            for (c, dofs) in step.field.dofs.corner_dof.iter().enumerate() {
                for &d in dofs {
                    owner[d] = step.partition.component_of[c];
                }
            }
            let y_rot = step.field.map(FieldKind::Deformation, |d, v| rotations.rotations[owner[d]].transpose() * v);
            rescale(&traj.mesh, &y_rot, traj.params.epsilon)
        }
    }
}

/// Rotation fits for every step of a nonlinear trajectory (identities for a
/// linear one).
pub fn trajectory_rotations(traj: &Trajectory) -> Result<Vec<RotationAssignment>> {
    traj.steps
        .iter()
        .map(|s| match traj.model {
            Model::Linear => Ok(RotationAssignment {
                rotations: vec![Mat2::identity(); s.partition.len()],
            }),
            Model::Nonlinear => component_rotations(&traj.mesh, &s.partition, &s.field).map(|f| f.assignment),
        })
        .collect()
}

/// Left-endpoint time integral over `[0, t_end]` of
/// `sum_j int_{P_j} C e(u) : e(R_j d_t h)` over the pieces `P_j` cut off from
/// the frame.
pub fn interior_work(traj: &Trajectory, rotations: &[RotationAssignment], t_end: f64) -> Result<f64> {
    if rotations.len() != traj.steps.len() {
        return Err(Error::MismatchedConfigs(format!(
            "{} rotation assignments for {} steps",
            rotations.len(),
            traj.steps.len()
        )));
    }
    let mesh = &traj.mesh;
    let mut total = 0.0;
    for n in 0..traj.steps.len().saturating_sub(1) {
        let (t0, t1) = (traj.steps[n].time, traj.steps[n + 1].time.min(t_end));
        if t1 <= t0 {
            continue;
        }
        let step = &traj.steps[n];
        if step.partition.interior_components().next().is_none() {
            continue;
        }
        let u = aligned_displacement(traj, n, &rotations[n])?;
        let rate = traj.program.rate(t0);
        let mut integrand = 0.0;
        for (j, comp) in step.partition.interior_components() {
            let load = rotations[n].rotations[j] * rate;
            let mean: Mat2 = comp.cells.iter().map(|&c| cell_gradient(mesh, &u, c)).sum::<Mat2>() * mesh.cell_area();
            integrand += traj.tensor.contract(&mean, &load);
        }
        total += (t1 - t0) * integrand;
    }
    Ok(total)
}

/// Node samples of a vector field on the upper rectangle `[0, r1] x [0, r2]`
/// with spacing `h`: `values[j * (n1 + 1) + i]` at `(i h, j h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperSamples {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub values: Vec<Vec2>,
}

impl UpperSamples {
    pub fn from_fn(n1: usize, n2: usize, h: f64, f: impl Fn(f64, f64) -> Vec2) -> Self {
        let values = (0..=n2)
            .flat_map(|j| (0..=n1).map(move |i| (i, j)))
            .map(|(i, j)| f(i as f64 * h, j as f64 * h))
            .collect();
        UpperSamples { n1, n2, h, values }
    }

    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        self.values[j * (self.n1 + 1) + i]
    }
}

/// Samples of the extension on `[0, r1] x [-r2/2, r2]`, rows `j = -n2/2..=n2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSamples {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    lower_rows: usize,
    values: Vec<Vec2>,
}

impl ExtendedSamples {
    pub fn lower_rows(&self) -> usize {
        self.lower_rows
    }

    pub fn at(&self, i: usize, j: isize) -> Vec2 {
        let row = (j + self.lower_rows as isize) as usize;
        self.values[row * (self.n1 + 1) + i]
    }

    /// Largest difference of the one-sided second-order normal derivatives
    /// at `x2 = 0` taken from above and from below.
    pub fn normal_derivative_mismatch(&self) -> f64 {
        (0..=self.n1)
            .map(|i| {
                let up = (-3.0 * self.at(i, 0) + 4.0 * self.at(i, 1) - self.at(i, 2)) / (2.0 * self.h);
                let down = (3.0 * self.at(i, 0) - 4.0 * self.at(i, -1) + self.at(i, -2)) / (2.0 * self.h);
                (up - down).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Largest first difference over all rows and columns, divided by `h`.
    pub fn max_difference_quotient(&self, rows: std::ops::RangeInclusive<isize>) -> f64 {
        let mut m: f64 = 0.0;
        for j in rows.clone() {
            for i in 0..=self.n1 {
                if i < self.n1 {
                    m = m.max((self.at(i + 1, j) - self.at(i, j)).amax() / self.h);
                }
                if j < *rows.end() {
                    m = m.max((self.at(i, j + 1) - self.at(i, j)).amax() / self.h);
                }
            }
        }
        m
    }
}

/// Extends samples across `x2 = 0` by `phi(x1, -s) = 3 phi(x1, s) - 2 phi(x1, 2 s)`
/// onto a lower rectangle of half the height. The formula is evaluated as
/// `a + 2 (a - b)`, so the trace at `x2 = 0` is reproduced bit for bit.
pub fn reflection_extend(upper: &UpperSamples) -> Result<ExtendedSamples> {
    if upper.values.len() != (upper.n1 + 1) * (upper.n2 + 1) {
        return Err(Error::InsufficientSamples(format!(
            "expected {} samples, got {}",
            (upper.n1 + 1) * (upper.n2 + 1),
            upper.values.len()
        )));
    }
    if upper.n2 < 2 || !upper.n2.is_multiple_of(2) {
        return Err(Error::InsufficientSamples(format!(
            "need an even number of rows >= 2 above the line (got {})",
            upper.n2
        )));
    }
    let lower_rows = upper.n2 / 2;
    let mut values = Vec::with_capacity((upper.n1 + 1) * (lower_rows + upper.n2 + 1));
    for s in (1..=lower_rows).rev() {
        for i in 0..=upper.n1 {
            let (a, b) = (upper.at(i, s), upper.at(i, 2 * s));
            values.push(a + 2.0 * (a - b));
        }
    }
    values.extend_from_slice(&upper.values);
    Ok(ExtendedSamples {
        n1: upper.n1,
        n2: upper.n2,
        h: upper.h,
        lower_rows,
        values,
    })
}

/// One row of a ladder report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub time: f64,
    pub total_gap: f64,
    pub elastic_gap: f64,
    pub hessian_term: f64,
    pub displacement_error: f64,
    pub measure_above_1e_1: f64,
    pub measure_above_1e_2: f64,
    pub bad_set_energy: f64,
    pub balance_residual: f64,
    pub interior_work: f64,
    pub crack_length: f64,
    pub reference_crack_length: f64,
    pub excised_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl ConvergenceReport {
    /// Rows for one `eps`, in time order.
    pub fn series(&self, eps: f64) -> Vec<&ConvergenceRow> {
        self.rows.iter().filter(|r| r.epsilon == eps).collect()
    }

    pub fn row(&self, eps: f64, t: f64) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.epsilon == eps && (r.time - t).abs() < 1e-12)
    }

    /// CSV with a leading `# schema_version` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema_version: {REPORT_SCHEMA_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `int |a - b|^2` and the measures of `{|a - b| > delta}` over a cell set,
/// with the 2x2 Gauss rule on each cell's bilinear interpolants.
fn compare_fields(mesh: &Mesh, a: &Field, b: &Field, cells: &[usize], deltas: [f64; 2]) -> (f64, [f64; 2]) {
    let area = mesh.cell_area();
    let mut l2 = 0.0;
    let mut measure = [0.0; 2];
    for &c in cells {
        let (va, vb) = (a.corner_values(c), b.corner_values(c));
        for (xi, eta, w) in gauss_points() {
            let n = shape_values(xi, eta);
            let diff: Vec2 = (0..4).map(|k| n[k] * (va[k] - vb[k])).sum();
            let d = diff.norm();
            l2 += w * area * d * d;
            for (m, delta) in measure.iter_mut().zip(deltas) {
                if d > delta {
                    *m += w * area;
                }
            }
        }
    }
    (l2.sqrt(), measure)
}

fn same_setup(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.mesh.spec != b.mesh.spec {
        return Err(Error::MismatchedConfigs("runs use different grids".into()));
    }
    if a.program != b.program {
        return Err(Error::MismatchedConfigs("runs use different boundary programs".into()));
    }
    if a.initial_crack != b.initial_crack {
        return Err(Error::MismatchedConfigs("runs start from different cracks".into()));
    }
    if (a.tensor.c3 - b.tensor.c3).amax() > 1e-12 {
        return Err(Error::MismatchedConfigs("runs use different elasticity tensors".into()));
    }
    Ok(())
}

fn step_index(traj: &Trajectory, t: f64) -> Result<usize> {
    traj.steps
        .iter()
        .position(|s| (s.time - t).abs() < 1e-12)
        .ok_or_else(|| Error::MismatchedConfigs(format!("time {t} is not a node of the run")))
}

/// Compares each run with the linear reference at the sampled times.
/// Displacements of nonlinear runs are rescaled, rotated piecewise and cut
/// off before they are compared on the good set of the run.
pub fn convergence_report(runs: &[Trajectory], linear_ref: &Trajectory, times: &[f64]) -> Result<ConvergenceReport> {
    if linear_ref.model != Model::Linear {
        return Err(Error::MismatchedConfigs("reference run must use the linear model".into()));
    }
    let mut rows = Vec::new();
    for run in runs {
        same_setup(run, linear_ref)?;
        let mesh = &run.mesh;
        let balance = balance_residual(run)?;
        let rotations = trajectory_rotations(run)?;
        for &t in times {
            let (n, m) = (step_index(run, t)?, step_index(linear_ref, t)?);
            let step = &run.steps[n];
            let reference = &linear_ref.steps[m];
            let (u_eps, excised) = match run.model {
                Model::Linear => (step.field.clone(), 0),
                Model::Nonlinear => {
                    let fit = component_rotations(mesh, &step.partition, &step.field)?;
                    let u_aux = rescale(mesh, &fit.y_rot, run.params.epsilon)?;
                    let (region, u_cut) = cutoff(mesh, &u_aux, &run.params)?;
                    (u_cut, region.inside.iter().filter(|i| !**i).count())
                }
            };
            let split = bad_set_from_partition(mesh, &step.partition);
            let (err, measure) = compare_fields(mesh, &u_eps, &reference.field, &split.good, [1e-1, 1e-2]);
            let bad_set_energy = match run.model {
                Model::Linear => 0.0,
                Model::Nonlinear => {
                    let bad: Vec<bool> = (0..mesh.n_cells()).map(|c| split.bad.binary_search(&c).is_ok()).collect();
                    integrate_gradient(mesh, &step.field, |c, g| if bad[c] { Density::DistSo2.value(g) } else { 0.0 })
                        / (run.params.epsilon * run.params.epsilon)
                }
            };
            rows.push(ConvergenceRow {
                epsilon: run.params.epsilon,
                time: t,
                total_gap: (step.energy.total - reference.energy.total).abs(),
                elastic_gap: (step.energy.elastic - reference.energy.elastic).abs(),
                hessian_term: step.energy.hessian,
                displacement_error: err,
                measure_above_1e_1: measure[0],
                measure_above_1e_2: measure[1],
                bad_set_energy,
                balance_residual: balance.from_start[n],
                interior_work: interior_work(run, &rotations, t)?,
                crack_length: step.energy.surface / run.params.kappa,
                reference_crack_length: reference.energy.surface / linear_ref.params.kappa,
                excised_cells: excised,
            });
        }
    }
    Ok(ConvergenceReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crack::{components, ring_around, CrackState};
    use crate::energy::density::rotation;
    use crate::mesh::{build_mesh, GridSpec};
    use proptest::prelude::*;

    fn mesh() -> Mesh {
        build_mesh(&GridSpec::square(1.0, 8, 1)).unwrap()
    }

    #[test]
    fn rescale_examples() {
        let mesh = mesh();
        let crack = CrackState::empty();
        let id = Field::identity(&mesh, &crack);
        let u = rescale(&mesh, &id, 0.1).unwrap();
        assert!(u.values.iter().all(|v| v.norm() < 1e-15));
        assert!(rescale(&mesh, &id, 0.0).is_err());

        let eps = 0.05;
        let r = rotation(eps);
        let y = Field::from_fn(&mesh, id.dofs.clone(), FieldKind::Deformation, |x| r * x);
        let u = rescale(&mesh, &y, eps).unwrap();
        let diam = 2f64.sqrt();
        for v in &u.values {
            assert!(v.norm() <= diam);
        }
        for c in 0..mesh.n_cells() {
            // sym((R - I)/eps) = (cos eps - 1)/eps I
            assert!((sym(&cell_gradient(&mesh, &u, c))).amax() <= eps);
        }
    }

    proptest! {
        #[test]
        fn rescale_round_trip(a in -1.0f64..1.0, b in -1.0f64..1.0, eps in 0.001f64..0.5) {
            let mesh = build_mesh(&GridSpec::square(1.0, 4, 1)).unwrap();
            let id = Field::identity(&mesh, &CrackState::empty());
            let u0 = Field::from_fn(&mesh, id.dofs.clone(), FieldKind::Displacement, |x| Vec2::new(a * x.y * x.y, b * x.x));
            let y = u0.map(FieldKind::Deformation, |d, v| id.values[d] + eps * v);
            let u = rescale(&mesh, &y, eps).unwrap();
            for (p, q) in u.values.iter().zip(&u0.values) {
                prop_assert!((p - q).norm() < 1e-12 / eps);
            }
        }

        #[test]
        fn reflection_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, s in 0.0f64..3.0) {
            let phi = UpperSamples::from_fn(6, 8, 0.125, |x, y| Vec2::new((s * x).sin() + y * y, x * y));
            let psi = UpperSamples::from_fn(6, 8, 0.125, |x, y| Vec2::new(y.exp(), (x - s).cos()));
            let comb = UpperSamples {
                values: phi.values.iter().zip(&psi.values).map(|(p, q)| a * p + b * q).collect(),
                ..phi.clone()
            };
            let (ep, eq, ec) = (reflection_extend(&phi).unwrap(), reflection_extend(&psi).unwrap(), reflection_extend(&comb).unwrap());
            for j in -4..=8isize {
                for i in 0..=6 {
                    let lin = a * ep.at(i, j) + b * eq.at(i, j);
                    prop_assert!((ec.at(i, j) - lin).amax() <= 1e-12 * (1.0 + lin.amax()));
                }
            }
        }
    }

    #[test]
    fn rotations_undo_rigid_pieces() {
        let mesh = mesh();
        let crack = ring_around(&mesh, 2, 5, 3, 6);
        let part = components(&mesh, &crack);
        let r = rotation(0.3);
        let id = Field::identity(&mesh, &crack);
        let mut moved = vec![false; id.dofs.n_dofs()];
        for c in 0..mesh.n_cells() {
            if !part.components[part.component_of[c]].touches_frame {
                for d in id.dofs.corner_dof[c] {
                    moved[d] = true;
                }
            }
        }
        let y = id.map(FieldKind::Deformation, |d, v| if moved[d] { r * v + Vec2::new(0.1, -0.2) } else { v });
        let fit = component_rotations(&mesh, &part, &y).unwrap();
        for (j, comp) in part.components.iter().enumerate() {
            let rj = fit.assignment.rotations[j];
            if comp.touches_frame {
                assert_eq!(rj, Mat2::identity());
            } else {
                assert!((rj - r).norm() < 1e-12);
                assert!((rj.transpose() * rj - Mat2::identity()).norm() < 1e-12);
                assert!((rj.determinant() - 1.0).abs() < 1e-12);
            }
        }
        assert!(fit.grad_defect < 1e-12);

        let plain = Field::identity(&mesh, &CrackState::empty());
        let fit = component_rotations(&mesh, &components(&mesh, &CrackState::empty()), &plain).unwrap();
        assert_eq!(fit.y_rot, plain.map(FieldKind::Deformation, |_, v| v));
    }

    #[test]
    fn rotation_fit_matches_grid_search_and_perturbation_theory() {
        let mesh = mesh();
        let crack = ring_around(&mesh, 2, 6, 2, 6);
        let part = components(&mesh, &crack);
        let eps = 1e-3;
        let r = rotation(-0.7);
        let grad_u0 = Mat2::new(0.4, -0.3, 0.2, 0.1);
        let id = Field::identity(&mesh, &crack);
        let mut moved = vec![false; id.dofs.n_dofs()];
        for c in 0..mesh.n_cells() {
            if !part.components[part.component_of[c]].touches_frame {
                for d in id.dofs.corner_dof[c] {
                    moved[d] = true;
                }
            }
        }
        let y = id.map(FieldKind::Deformation, |d, x| if moved[d] { r * (x + eps * grad_u0 * x) } else { x });
        let fit = component_rotations(&mesh, &part, &y).unwrap();
        let (j, comp) = part.interior_components().next().unwrap();
        let mean = comp.cells.iter().map(|&c| cell_gradient(&mesh, &y, c)).sum::<Mat2>() / comp.cells.len() as f64;
        let best = (0..10_000)
            .map(|k| (mean - rotation(k as f64 * std::f64::consts::TAU / 10_000.0)).norm_squared())
            .fold(f64::INFINITY, f64::min);
        let fitted = (mean - fit.assignment.rotations[j]).norm_squared();
        assert!(fitted <= best + 1e-8);
        // the fit removes R and the skew part of eps grad u0
        let skew = 0.5 * (grad_u0 - grad_u0.transpose());
        let expected = (eps * (sym(&grad_u0))).norm() * (comp.cells.len() as f64 * mesh.cell_area()).sqrt();
        let interior_defect = comp
            .cells
            .iter()
            .map(|&c| (cell_gradient(&mesh, &fit.y_rot, c) - Mat2::identity()).norm_squared() * mesh.cell_area())
            .sum::<f64>()
            .sqrt();
        assert!(skew.norm() > 0.1);
        assert!((interior_defect - expected).abs() < 10.0 * eps * eps, "{interior_defect} vs {expected}");
    }

    #[test]
    fn degenerate_mean_gradient_is_reported() {
        let mesh = mesh();
        let crack = ring_around(&mesh, 3, 5, 3, 5);
        let part = components(&mesh, &crack);
        let y = Field::from_fn(&mesh, Arc::new(DofMap::build(&mesh, &crack)), FieldKind::Deformation, |x| Vec2::new(-x.x, x.y));
        assert!(matches!(component_rotations(&mesh, &part, &y), Err(Error::DegenerateMeanGradient { .. })));
    }

    #[test]
    fn cutoff_window_example() {
        let (tm, eta, tp) = cutoff_window(0.1, 0.7);
        assert!((tm - 0.1f64.powf(-0.3083333333333333)).abs() < 1e-14);
        assert!((tp - 0.1f64.powf(-0.325)).abs() < 1e-14);
        assert!((eta - 0.1f64.powf(-0.31666666666666665)).abs() < 1e-14);
        assert!(tm <= eta && eta <= tp);
        assert!((eta - (tm * tp).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cutoff_keeps_small_gradients_and_excises_large_ones() {
        let mesh = mesh();
        let p = ModelParams { epsilon: 1e-4, ..ModelParams::default() };
        let crack = CrackState::empty();
        let dofs = Arc::new(DofMap::build(&mesh, &crack));
        let u = Field::from_fn(&mesh, dofs.clone(), FieldKind::Displacement, |x| Vec2::new(0.5 * x.y, x.x.sin()));
        let (region, u_cut) = cutoff(&mesh, &u, &p).unwrap();
        assert!(region.inside.iter().all(|i| *i));
        assert_eq!(u_cut.flattened(), u.flattened());

        // one interior corner lifted so that the four cells around it have |grad u| of order 2 eta
        let p = ModelParams { epsilon: 0.1, ..ModelParams::default() };
        let (_, eta, _) = cutoff_window(p.epsilon, p.gamma);
        let mut u = Field::zeros(dofs, FieldKind::Displacement);
        let centre = mesh.cell_nodes(mesh.cell_at(4, 4))[0];
        let d = u.dofs.dof_node.iter().position(|&n| n == centre).unwrap();
        u.values[d] = Vec2::new(4.0 * eta * mesh.dx, 0.0);
        let (region, u_cut) = cutoff(&mesh, &u, &p).unwrap();
        let excised: Vec<usize> = (0..mesh.n_cells()).filter(|&c| !region.inside[c]).collect();
        assert_eq!(excised.len(), 4);
        assert_eq!(region.excised_boundary, 8);
        for c in excised {
            assert!(u_cut.corner_values(c).iter().all(|v| *v == Vec2::zeros()));
        }
    }

    #[test]
    fn cutoff_rejects_excised_frame() {
        let mesh = mesh();
        let p = ModelParams { epsilon: 0.5, ..ModelParams::default() };
        let u = Field::from_fn(&mesh, Arc::new(DofMap::build(&mesh, &CrackState::empty())), FieldKind::Displacement, |x| {
            Vec2::new(10.0 * x.x, 0.0)
        });
        assert!(matches!(cutoff(&mesh, &u, &p), Err(Error::FrameExcised(_))));
    }

    #[test]
    fn reflection_examples() {
        let c = UpperSamples::from_fn(4, 4, 0.25, |_, _| Vec2::new(2.5, -1.0));
        let e = reflection_extend(&c).unwrap();
        for j in -2..=4 {
            for i in 0..=4 {
                assert_eq!(e.at(i, j), Vec2::new(2.5, -1.0));
            }
        }
        let lin = UpperSamples::from_fn(4, 8, 0.125, |x, y| Vec2::new(y, 2.0 * x - y));
        let e = reflection_extend(&lin).unwrap();
        for j in -4..=8isize {
            for i in 0..=4 {
                let (x, y) = (i as f64 * 0.125, j as f64 * 0.125);
                assert!((e.at(i, j) - Vec2::new(y, 2.0 * x - y)).amax() < 1e-15);
            }
        }
        assert!(reflection_extend(&UpperSamples::from_fn(4, 3, 0.25, |_, _| Vec2::zeros())).is_err());
        let mut short = lin.clone();
        short.values.pop();
        assert!(matches!(reflection_extend(&short), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn reflection_of_smooth_field() {
        let phi = |x: f64, y: f64| Vec2::new(x.sin() * y.exp(), x.cos());
        let mut mismatch = Vec::new();
        for n in [32usize, 64] {
            let h = 1.0 / n as f64;
            let up = UpperSamples::from_fn(n, n, h, phi);
            let e = reflection_extend(&up).unwrap();
            for i in 0..=n {
                assert_eq!(e.at(i, 0), up.at(i, 0));
            }
            let m = e.normal_derivative_mismatch();
            assert!(m <= 8.0 * h * h, "{m} > 8 h^2");
            mismatch.push(m);
            let ratio = e.max_difference_quotient(-(n as isize / 2)..=n as isize) / e.max_difference_quotient(0..=n as isize);
            assert!(ratio <= 7.0);
        }
        assert!((mismatch[0] / mismatch[1]).log2() >= 1.9);
    }
}
