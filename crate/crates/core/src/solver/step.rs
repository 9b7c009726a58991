//! One time step of the incremental scheme: greedy crack growth and the
//! exhaustive oracle it is checked against.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::elastic::{solve_linear, solve_nonlinear};
use super::{BoundaryProgram, Model, SolveOptions};
use crate::crack::{crack_measure, ring_around, CrackHistory, CrackState};
use crate::energy::{linear_energy, Density, DofMap, ElasticTensor, EnergyBreakdown, Field, FieldKind, ModelParams};
use crate::mesh::{crackable_interfaces, Mesh, Orientation};
use crate::{Error, Result};

/// Largest number of free interfaces the brute-force oracle enumerates.
pub const BRUTE_FORCE_LIMIT: usize = 16;

/// Everything a step needs besides the history and the previous field.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub mesh: &'a Mesh,
    pub model: Model,
    pub params: &'a ModelParams,
    pub density: &'a Density,
    pub tensor: &'a ElasticTensor,
    pub program: &'a BoundaryProgram,
    pub options: &'a SolveOptions,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub field: Field,
    /// Cumulative crack after the step, a superset of the history's.
    pub crack: CrackState,
    /// Incremental functional: bulk terms plus `kappa` times the length
    /// broken in this step.
    pub energy: EnergyBreakdown,
    /// Largest relative Euler-Lagrange residual over the linear solves of the
    /// step (zero for the nonlinear model).
    pub max_residual: f64,
    pub accepted_moves: usize,
    pub elastic_solves: usize,
}

struct Solved {
    field: Field,
    elastic: f64,
    hessian: f64,
    residual: f64,
}

impl Solved {
    fn bulk(&self) -> f64 {
        self.elastic + self.hessian
    }
}

impl StepContext<'_> {
    fn solve(&self, crack: &CrackState, t: f64, warm: &Field, restarts: usize, stream: u64) -> Result<Solved> {
        let dofs = Arc::new(DofMap::build(self.mesh, crack));
        let h = self.program.at(t);
        match self.model {
            Model::Linear => {
                let sol = solve_linear(self.mesh, dofs, &h, self.tensor)?;
                let e = linear_energy(self.mesh, crack, &CrackState::empty(), &sol.field, self.tensor, self.params)?;
                Ok(Solved {
                    field: sol.field,
                    elastic: e.elastic,
                    hessian: 0.0,
                    residual: sol.residual,
                })
            }
            Model::Nonlinear => {
                let sol = solve_nonlinear(self.mesh, dofs, &h, self.density, self.params, warm, self.options, restarts, stream)?;
                Ok(Solved {
                    elastic: sol.elastic,
                    hessian: sol.hessian,
                    field: sol.field,
                    residual: 0.0,
                })
            }
        }
    }

    fn surface(&self, crack: &CrackState, base: &CrackState) -> f64 {
        self.params.kappa * crack_measure(self.mesh, &crack.difference(base))
    }

    fn tolerance(&self, energy: f64) -> f64 {
        self.options.break_threshold_tol * energy.max(self.params.kappa * self.mesh.dx)
    }

    /// Warm start for time `t`: the previous deformation shifted by the
    /// change of the boundary datum.
    fn predictor(&self, history: &CrackHistory, t: f64, prev: &Field) -> Field {
        if prev.kind != FieldKind::Deformation {
            return Field::identity(self.mesh, prev.ties());
        }
        let t_prev = history.last_time().unwrap_or(t);
        let dg = self.params.epsilon * (self.program.gradient(t) - self.program.gradient(t_prev));
        prev.map(FieldKind::Deformation, |d, v| v + dg * prev.dofs.position(self.mesh, d))
    }

    fn check_time(&self, history: &CrackHistory, t: f64) -> Result<()> {
        match history.last_time() {
            Some(last) if !(t > last) => Err(Error::TimeOrder { last, got: t }),
            _ => Ok(()),
        }
    }
}

/// Moves offered to the greedy search: every intact crackable interface,
/// straight runs of crackable interfaces along grid lines, and optionally the
/// outlines of rectangles of interior cells. Each move lists only the intact
/// interfaces it would break; duplicates are removed.
pub fn candidate_moves(mesh: &Mesh, crack: &CrackState, opts: &SolveOptions) -> Vec<CrackState> {
    let crackable: BTreeSet<usize> = crackable_interfaces(mesh).into_iter().collect();
    let intact = |f: &usize| !crack.is_broken(*f);
    let mut moves: BTreeSet<CrackState> = crackable.iter().filter(|f| intact(f)).map(|&f| [f].into_iter().collect()).collect();

    let (nx, ny) = (mesh.spec.cells_x, mesh.spec.cells_y);
    let max_len = opts.chain_length.unwrap_or(nx.max(ny));
    for (orientation, lines, len) in [(Orientation::Vertical, nx, ny), (Orientation::Horizontal, ny, nx)] {
        for line in 1..lines {
            let facets: Vec<Option<usize>> = (0..len)
                .map(|o| mesh.interface_on_line(orientation, line, o).filter(|f| crackable.contains(f)))
                .collect();
            for start in 0..len {
                if facets[start].is_none() {
                    continue;
                }
                for end in (start + 2)..=(start + max_len).min(len) {
                    if facets[end - 1].is_none() {
                        break;
                    }
                    let run: CrackState = facets[start..end].iter().flatten().copied().filter(intact).collect();
                    if run.len() >= 2 {
                        moves.insert(run);
                    }
                }
            }
        }
    }

    if opts.rectangle_cuts {
        let rings = mesh.spec.frame_rings();
        for x0 in rings..nx - rings {
            for x1 in (x0 + 1)..=(nx - rings) {
                for y0 in rings..ny - rings {
                    for y1 in (y0 + 1)..=(ny - rings) {
                        let outline = ring_around(mesh, x0, x1, y0, y1).difference(crack);
                        if outline.len() >= 2 {
                            moves.insert(outline);
                        }
                    }
                }
            }
        }
    }
    moves.into_iter().collect()
}

/// Picks the lowest total; totals within `tol` of it tie and go to the
/// lexicographically smallest crack set.
fn select_best<T>(items: Vec<(f64, CrackState, T)>, tol: f64) -> Option<(f64, CrackState, T)> {
    let min = items.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
    items
        .into_iter()
        .filter(|i| i.0 <= min + tol)
        .min_by(|a, b| a.1.cmp(&b.1))
}

/// Alternating minimization at time `t`: elastic solve, then repeatedly the
/// single best strictly energy-decreasing move among [`candidate_moves`],
/// until no move helps or `greedy_passes` moves were accepted. Moves whose
/// surface cost alone exceeds the current bulk energy are skipped; this
/// cannot discard an improving move. For the nonlinear model candidates are
/// solved from the current state only and the final state is re-solved with
/// the randomized restarts.
pub fn incremental_step(ctx: &StepContext, history: &CrackHistory, t: f64, prev_field: &Field) -> Result<StepOutcome> {
    ctx.check_time(history, t)?;
    let base = history.cumulative().clone();
    let stream = t.to_bits();
    let warm = ctx.predictor(history, t, prev_field);
    let mut crack = base.clone();
    let mut current = ctx.solve(&crack, t, &warm, 0, stream)?;
    let mut max_residual = current.residual;
    let mut solves = 1;
    let mut accepted = 0;
    let kappa = ctx.params.kappa;

    for _ in 0..ctx.options.greedy_passes {
        let total = current.bulk() + ctx.surface(&crack, &base);
        let tol = ctx.tolerance(total);
        let moves: Vec<CrackState> = candidate_moves(ctx.mesh, &crack, ctx.options)
            .into_iter()
            .filter(|m| kappa * crack_measure(ctx.mesh, m) < current.bulk() - tol)
            .collect();
        if moves.is_empty() {
            break;
        }
        solves += moves.len();
        let results: Vec<Result<(f64, CrackState, Solved)>> = moves
            .par_iter()
            .map(|m| {
                let trial = crack.union(m);
                let sol = ctx.solve(&trial, t, &current.field, 0, stream)?;
                Ok((sol.bulk() + ctx.surface(&trial, &base), trial, sol))
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        max_residual = results.iter().map(|r| r.2.residual).fold(max_residual, f64::max);
        match select_best(results, tol) {
            Some((best, trial, sol)) if total - best > tol => {
                crack = trial;
                current = sol;
                accepted += 1;
            }
            _ => break,
        }
    }

    if ctx.model == Model::Nonlinear && ctx.options.multistart > 0 {
        let refined = ctx.solve(&crack, t, &current.field, ctx.options.multistart, stream)?;
        solves += 1;
        if refined.bulk() < current.bulk() {
            current = refined;
        }
    }
    let surface = ctx.surface(&crack, &base);
    Ok(StepOutcome {
        energy: EnergyBreakdown::new(current.elastic, current.hessian, surface),
        field: current.field,
        crack,
        max_residual,
        accepted_moves: accepted,
        elastic_solves: solves,
    })
}

/// Global minimizer of the incremental functional at time `t` over every
/// subset of the intact crackable interfaces. Nonlinear solves use at least
/// five randomized restarts.
pub fn brute_force_step(ctx: &StepContext, history: &CrackHistory, t: f64, prev_field: &Field) -> Result<StepOutcome> {
    ctx.check_time(history, t)?;
    let base = history.cumulative().clone();
    let free: Vec<usize> = crackable_interfaces(ctx.mesh).into_iter().filter(|f| !base.is_broken(*f)).collect();
    if free.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(free.len(), BRUTE_FORCE_LIMIT));
    }
    let warm = ctx.predictor(history, t, prev_field);
    let restarts = ctx.options.multistart.max(5);
    let results: Vec<Result<(f64, CrackState, Solved)>> = (0u64..1 << free.len())
        .into_par_iter()
        .map(|mask| {
            let trial = base.with(free.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, f)| *f));
            let sol = ctx.solve(&trial, t, &warm, restarts, super::stream_seed(t.to_bits(), &[mask]))?;
            Ok((sol.bulk() + ctx.surface(&trial, &base), trial, sol))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let solves = results.len();
    let max_residual = results.iter().map(|r| r.2.residual).fold(0.0, f64::max);
    let min = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let (_, crack, sol) = select_best(results, ctx.tolerance(min)).expect("at least the empty subset");
    let surface = ctx.surface(&crack, &base);
    Ok(StepOutcome {
        energy: EnergyBreakdown::new(sol.elastic, sol.hessian, surface),
        field: sol.field,
        accepted_moves: crack.len() - base.len(),
        crack,
        max_residual,
        elastic_solves: solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::linearized_tensor;
    use crate::mesh::{build_mesh, GridSpec};

    fn linear_ctx<'a>(
        mesh: &'a Mesh,
        params: &'a ModelParams,
        tensor: &'a ElasticTensor,
        program: &'a BoundaryProgram,
        options: &'a SolveOptions,
    ) -> StepContext<'a> {
        StepContext {
            mesh,
            model: Model::Linear,
            params,
            density: &Density::DistSo2,
            tensor,
            program,
            options,
        }
    }

    #[test]
    fn moves_are_intact_and_unique() {
        let mesh = build_mesh(&GridSpec::unit_cells(6, 6, 1)).unwrap();
        let crack = ring_around(&mesh, 2, 3, 2, 3);
        let moves = candidate_moves(&mesh, &crack, &SolveOptions::default());
        let crackable: BTreeSet<usize> = crackable_interfaces(&mesh).into_iter().collect();
        let unique: BTreeSet<&CrackState> = moves.iter().collect();
        assert_eq!(unique.len(), moves.len());
        for m in &moves {
            assert!(!m.is_empty());
            assert!(m.broken.iter().all(|f| crackable.contains(f) && !crack.is_broken(*f)));
        }
        // every full transverse cut of the interior is offered
        for line in 1..6 {
            let cut: CrackState = (0..6).filter_map(|o| mesh.interface_on_line(Orientation::Vertical, line, o)).filter(|f| crackable.contains(f) && !crack.is_broken(*f)).collect();
            assert!(moves.contains(&cut), "line {line}");
        }
    }

    #[test]
    fn no_breaks_below_threshold() {
        let mesh = build_mesh(&GridSpec::unit_cells(5, 5, 1)).unwrap();
        let params = ModelParams { kappa: 10.0, ..ModelParams::default() };
        let tensor = linearized_tensor(&Density::DistSo2).unwrap();
        let program = BoundaryProgram::UniaxialStretch { amplitude: 0.1 };
        let options = SolveOptions::default();
        let ctx = linear_ctx(&mesh, &params, &tensor, &program, &options);
        let history = CrackHistory::new();
        let prev = Field::zeros(Arc::new(DofMap::build(&mesh, &CrackState::empty())), FieldKind::Displacement);
        let out = incremental_step(&ctx, &history, 1.0, &prev).unwrap();
        assert!(out.crack.is_empty());
        assert_eq!(out.elastic_solves, 1);
        assert!(out.energy.elastic > 0.0);
    }

    #[test]
    fn greedy_agrees_with_brute_force_and_is_bounded_by_it() {
        let mesh = build_mesh(&GridSpec::unit_cells(4, 4, 1)).unwrap();
        let params = ModelParams { kappa: 0.05, ..ModelParams::default() };
        let tensor = linearized_tensor(&Density::DistSo2).unwrap();
        let options = SolveOptions::default();
        let prev = Field::zeros(Arc::new(DofMap::build(&mesh, &CrackState::empty())), FieldKind::Displacement);
        for program in [
            BoundaryProgram::UniaxialStretch { amplitude: 0.3 },
            BoundaryProgram::SimpleShear { amplitude: 0.3 },
        ] {
            let ctx = linear_ctx(&mesh, &params, &tensor, &program, &options);
            for t in [0.25, 0.5, 1.0] {
                let history = CrackHistory::new();
                let g = incremental_step(&ctx, &history, t, &prev).unwrap();
                let b = brute_force_step(&ctx, &history, t, &prev).unwrap();
                assert_eq!(b.elastic_solves, 1 << 12);
                assert!(b.energy.total <= g.energy.total + 1e-9);
                assert!((g.energy.total - b.energy.total).abs() <= 1e-6 * (1.0 + b.energy.total), "{program:?} t={t}");
            }
        }
    }

    #[test]
    fn brute_force_rejects_large_meshes() {
        let mesh = build_mesh(&GridSpec::unit_cells(5, 5, 1)).unwrap();
        let params = ModelParams::default();
        let tensor = linearized_tensor(&Density::DistSo2).unwrap();
        let program = BoundaryProgram::default();
        let options = SolveOptions::default();
        let ctx = linear_ctx(&mesh, &params, &tensor, &program, &options);
        let prev = Field::zeros(Arc::new(DofMap::build(&mesh, &CrackState::empty())), FieldKind::Displacement);
        let err = brute_force_step(&ctx, &CrackHistory::new(), 0.5, &prev).unwrap_err();
        assert!(matches!(err, Error::TooLarge(24, 16)));
    }

    #[test]
    fn time_must_advance() {
        let mesh = build_mesh(&GridSpec::unit_cells(4, 4, 1)).unwrap();
        let params = ModelParams::default();
        let tensor = linearized_tensor(&Density::DistSo2).unwrap();
        let program = BoundaryProgram::default();
        let options = SolveOptions::default();
        let ctx = linear_ctx(&mesh, &params, &tensor, &program, &options);
        let prev = Field::zeros(Arc::new(DofMap::build(&mesh, &CrackState::empty())), FieldKind::Displacement);
        let mut history = CrackHistory::new();
        history.accumulate(0.5, CrackState::empty()).unwrap();
        assert!(matches!(incremental_step(&ctx, &history, 0.5, &prev), Err(Error::TimeOrder { .. })));
    }
}
