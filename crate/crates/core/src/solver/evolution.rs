//! The evolution loop over a time partition and quantities derived from a
//! finished trajectory.

use std::sync::Arc;

use super::step::{incremental_step, StepContext};
use super::{BoundaryProgram, Model, SolveOptions, TimePartition};
use crate::crack::{components, crack_measure, CrackHistory, CrackState, DomainPartition};
use crate::energy::{
    cell_gradient, linearized_tensor, Density, DofMap, ElasticTensor, EnergyBreakdown, Field, FieldKind, Mat2,
    ModelParams,
};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// A complete run description.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub mesh: Mesh,
    pub model: Model,
    pub params: ModelParams,
    pub density: Density,
    pub program: BoundaryProgram,
    pub partition: TimePartition,
    pub options: SolveOptions,
    /// Crack present before `t = 0`; it is never charged again.
    pub initial_crack: CrackState,
}

#[derive(Clone, Debug)]
pub struct TrajectoryStep {
    pub time: f64,
    /// Deformation `y` for the nonlinear model, displacement `u` otherwise.
    pub field: Field,
    pub increment: CrackState,
    pub cumulative: CrackState,
    /// Total energy: bulk terms plus `kappa` times the cumulative crack length.
    pub energy: EnergyBreakdown,
    /// The incremental functional minimized at this step.
    pub incremental: EnergyBreakdown,
    pub partition: DomainPartition,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mesh: Arc<Mesh>,
    pub model: Model,
    pub params: ModelParams,
    pub density: Density,
    pub tensor: ElasticTensor,
    pub program: BoundaryProgram,
    pub partition: TimePartition,
    pub initial_crack: CrackState,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn history(&self) -> CrackHistory {
        let mut h = CrackHistory::with_base(self.initial_crack.clone());
        for s in &self.steps {
            h.accumulate(s.time, s.increment.clone()).expect("trajectory times increase");
        }
        h
    }

    /// Index of the step in force at time `t` (piecewise constant from the left node).
    pub fn step_at(&self, t: f64) -> Option<usize> {
        self.steps.iter().rposition(|s| s.time <= t + 1e-12)
    }

    /// Displacement at step `n`: the field itself for the linear model,
    /// `(y - id) / eps` for the nonlinear one.
    pub fn displacement(&self, n: usize) -> Field {
        let field = &self.steps[n].field;
        match self.model {
            Model::Linear => field.clone(),
            Model::Nonlinear => {
                let eps = self.params.epsilon;
                field.map(FieldKind::Displacement, |d, v| (v - field.dofs.position(&self.mesh, d)) / eps)
            }
        }
    }
}

impl Evolution {
    /// Field the first step is warm-started from: `id + eps h(0)` or zero.
    pub fn initial_field(&self) -> Field {
        let dofs = Arc::new(DofMap::build(&self.mesh, &self.initial_crack));
        match self.model {
            Model::Nonlinear => {
                let g0 = self.program.gradient(0.0);
                let eps = self.params.epsilon;
                Field::from_fn(&self.mesh, dofs, FieldKind::Deformation, |x| x + eps * g0 * x)
            }
            Model::Linear => Field::zeros(dofs, FieldKind::Displacement),
        }
    }
}

pub fn run_evolution(evo: &Evolution) -> Result<Trajectory> {
    evo.params.validate()?;
    evo.program.validate()?;
    evo.options.validate()?;
    evo.initial_crack.validate(&evo.mesh)?;
    let tensor = linearized_tensor(&evo.density)?;
    let ctx = StepContext {
        mesh: &evo.mesh,
        model: evo.model,
        params: &evo.params,
        density: &evo.density,
        tensor: &tensor,
        program: &evo.program,
        options: &evo.options,
    };
    let mut prev = evo.initial_field();
    let mut history = CrackHistory::with_base(evo.initial_crack.clone());
    let mut steps = Vec::with_capacity(evo.partition.n_steps() + 1);
    for t in evo.partition.times() {
        let out = incremental_step(&ctx, &history, t, &prev)?;
        let increment = out.crack.difference(history.cumulative());
        history.accumulate(t, increment.clone())?;
        let cumulative = history.cumulative().clone();
        let surface = evo.params.kappa * crack_measure(&evo.mesh, &cumulative);
        steps.push(TrajectoryStep {
            time: t,
            increment,
            energy: EnergyBreakdown::new(out.energy.elastic, out.energy.hessian, surface),
            incremental: out.energy,
            partition: components(&evo.mesh, &cumulative),
            cumulative,
            max_residual: out.max_residual,
            field: out.field.clone(),
        });
        prev = out.field;
    }
    Ok(Trajectory {
        mesh: Arc::new(evo.mesh.clone()),
        model: evo.model,
        params: evo.params,
        density: evo.density,
        tensor,
        program: evo.program.clone(),
        partition: evo.partition,
        initial_crack: evo.initial_crack.clone(),
        steps,
    })
}

/// `int C e(u) : e(G)` over the whole rectangle for a constant gradient `G`.
pub(crate) fn stress_work(mesh: &Mesh, tensor: &ElasticTensor, u: &Field, g: &Mat2) -> f64 {
    // the centroid gradient of a bilinear field is its cell average
    let mean: Mat2 = (0..mesh.n_cells()).map(|c| cell_gradient(mesh, u, c)).sum::<Mat2>() * mesh.cell_area();
    tensor.contract(&mean, g)
}

/// Work of the boundary loading over `[t_a, t_b]`: the integral of
/// `int C e(u(s)) : e(d_t h(s))` with `u` and `d_t h` frozen at the left node
/// of each time step. Nonlinear trajectories use the rescaled displacement.
pub fn work_integral(traj: &Trajectory, t_a: f64, t_b: f64) -> Result<f64> {
    let (first, last) = match (traj.steps.first(), traj.steps.last()) {
        (Some(f), Some(l)) => (f.time, l.time),
        _ => return Err(Error::OutOfRange(t_a, t_b)),
    };
    if !(t_a <= t_b) || t_a < first || t_b > last {
        return Err(Error::OutOfRange(t_a, t_b));
    }
    let mut work = 0.0;
    for n in 0..traj.steps.len() - 1 {
        let (s0, s1) = (traj.steps[n].time, traj.steps[n + 1].time);
        let overlap = s1.min(t_b) - s0.max(t_a);
        if overlap <= 0.0 {
            continue;
        }
        let rate = traj.program.rate(s0);
        if rate == Mat2::zeros() {
            continue;
        }
        work += overlap * stress_work(&traj.mesh, &traj.tensor, &traj.displacement(n), &rate);
    }
    Ok(work)
}

/// Largest total energy along the run and the a priori bound
/// `kappa |initial crack| + sum_n A_n`, where `A_n` is the energy of the
/// uncracked affine competitor (`id + eps h(t_n)` or `h(t_n)`) at every node.
pub fn apriori_bound(traj: &Trajectory) -> (f64, f64) {
    let area = traj.mesh.area();
    let p = &traj.params;
    let competitor = |t: f64| {
        let g = traj.program.gradient(t);
        match traj.model {
            Model::Nonlinear => area * traj.density.value(&(Mat2::identity() + p.epsilon * g)) / (p.epsilon * p.epsilon),
            Model::Linear => area * 0.5 * traj.tensor.q(&g),
        }
    };
    let sup = traj.steps.iter().map(|s| s.energy.total).fold(0.0, f64::max);
    let bound = p.kappa * crack_measure(&traj.mesh, &traj.initial_crack)
        + traj.steps.iter().map(|s| competitor(s.time)).sum::<f64>();
    (sup, bound)
}
