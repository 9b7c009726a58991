//! Built-in fixtures used by the CLI and the acceptance checks, and the
//! orchestration of ladders and oracle audits.

use rayon::prelude::*;
use serde::Serialize;

use crate::crack::{CrackHistory, CrackState};
use crate::energy::{linearized_tensor, Density, ModelParams};
use crate::mesh::{build_mesh, GridSpec, Mesh, Orientation};
use crate::solver::{
    brute_force_step, run_evolution, BoundaryProgram, Evolution, Model, SolveOptions, StepContext, TimePartition,
    Trajectory,
};
use crate::Result;

pub const LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const SAMPLE_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

/// Vertical slit of `length` facets on the middle grid line, centred in height.
pub fn notch(mesh: &Mesh, length: usize) -> CrackState {
    let (nx, ny) = (mesh.spec.cells_x, mesh.spec.cells_y);
    let start = (ny - length.min(ny)) / 2;
    (start..start + length.min(ny))
        .filter_map(|row| mesh.interface_on_line(Orientation::Vertical, nx / 2, row))
        .filter(|&f| mesh.interfaces[f].cells.iter().all(|&c| !mesh.cells[c].in_frame))
        .collect()
}

fn evolution(spec: GridSpec, model: Model, params: ModelParams, program: BoundaryProgram, level: u32) -> Evolution {
    Evolution {
        mesh: build_mesh(&spec).expect("fixture grids are valid"),
        model,
        params,
        density: Density::DistSo2,
        program,
        partition: TimePartition::new(level),
        options: SolveOptions::default(),
        initial_crack: CrackState::empty(),
    }
}

/// 4 x 4 unit cells with a one-ring frame: 12 crackable facets, small enough
/// for the brute-force oracle. Uniaxial stretch that breaks the 2 x 2 core
/// before `t = 1`.
pub fn oracle_evolution(model: Model) -> Evolution {
    let params = ModelParams { kappa: 0.25, ..ModelParams::default() };
    evolution(
        GridSpec::unit_cells(4, 4, 1),
        model,
        params,
        BoundaryProgram::UniaxialStretch { amplitude: 1.0 },
        3,
    )
}

/// Notched square of 16 x 16 cells of side 4 under a stretch far below the
/// fracture threshold. The cells are large compared with the internal length
/// `eps^(1 - beta)` of the second-gradient term over the whole ladder.
pub fn ladder_evolution(model: Model, epsilon: f64) -> Evolution {
    let params = ModelParams { epsilon, kappa: 1000.0, ..ModelParams::default() };
    let mut evo = evolution(
        GridSpec::square(64.0, 16, 1),
        model,
        params,
        BoundaryProgram::UniaxialStretch { amplitude: 0.3 },
        2,
    );
    evo.initial_crack = notch(&evo.mesh, 4);
    evo
}

/// 8 x 4 unit cells stretched along the long side until the core breaks off.
pub fn strip_evolution(model: Model, level: u32, epsilon: f64) -> Evolution {
    let params = ModelParams { epsilon, kappa: 1.0, ..ModelParams::default() };
    evolution(
        GridSpec::unit_cells(8, 4, 1),
        model,
        params,
        BoundaryProgram::UniaxialStretch { amplitude: 2.0 },
        level,
    )
}

/// Crack-free linear shear of an 8 x 8 square, with a toughness no load
/// reaches.
pub fn balance_evolution(level: u32) -> Evolution {
    let params = ModelParams { kappa: 1e6, ..ModelParams::default() };
    evolution(
        GridSpec::square(1.0, 8, 1),
        Model::Linear,
        params,
        BoundaryProgram::SimpleShear { amplitude: 0.5 },
        level,
    )
}

/// Energy of the uncracked affine competitor at `t = 1`: the energy scale of
/// the loading.
pub fn loading_scale(evo: &Evolution) -> Result<f64> {
    let g = evo.program.gradient(1.0);
    let area = evo.mesh.area();
    Ok(match evo.model {
        Model::Nonlinear => {
            let eps = evo.params.epsilon;
            area * evo.density.value(&(crate::energy::Mat2::identity() + eps * g)) / (eps * eps)
        }
        Model::Linear => area * 0.5 * linearized_tensor(&evo.density)?.q(&g),
    })
}

/// Runs the linear reference and one nonlinear run per `eps`, concurrently.
pub fn run_ladder(base: &Evolution, ladder: &[f64]) -> Result<(Vec<Trajectory>, Trajectory)> {
    let mut reference = base.clone();
    reference.model = Model::Linear;
    let (runs, reference) = rayon::join(
        || {
            ladder
                .par_iter()
                .map(|&eps| {
                    let mut evo = base.clone();
                    evo.model = Model::Nonlinear;
                    evo.params.epsilon = eps;
                    run_evolution(&evo)
                })
                .collect::<Vec<_>>()
        },
        || run_evolution(&reference),
    );
    Ok((runs.into_iter().collect::<Result<Vec<_>>>()?, reference?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleStep {
    pub time: f64,
    pub greedy: f64,
    pub brute_force: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug)]
pub struct OracleAudit {
    pub steps: Vec<OracleStep>,
    pub max_relative_gap: f64,
    pub trajectory: Trajectory,
}

/// Runs the greedy evolution and, at every step, the brute-force minimizer
/// of the same incremental problem (same history and warm start).
pub fn oracle_audit(evo: &Evolution) -> Result<OracleAudit> {
    let trajectory = run_evolution(evo)?;
    let ctx = StepContext {
        mesh: &evo.mesh,
        model: evo.model,
        params: &evo.params,
        density: &evo.density,
        tensor: &trajectory.tensor,
        program: &evo.program,
        options: &evo.options,
    };
    let mut history = CrackHistory::with_base(evo.initial_crack.clone());
    let mut prev = evo.initial_field();
    let mut steps = Vec::with_capacity(trajectory.steps.len());
    for s in &trajectory.steps {
        let brute = brute_force_step(&ctx, &history, s.time, &prev)?;
        let (greedy, brute) = (s.incremental.total, brute.energy.total);
        steps.push(OracleStep {
            time: s.time,
            greedy,
            brute_force: brute,
            relative_gap: (greedy - brute).abs() / (1.0 + brute.abs()),
        });
        history.accumulate(s.time, s.increment.clone())?;
        prev = s.field.clone();
    }
    let max_relative_gap = steps.iter().map(|s| s.relative_gap).fold(0.0, f64::max);
    Ok(OracleAudit {
        steps,
        max_relative_gap,
        trajectory,
    })
}
