//! The acceptance suite: one function per criterion, each returning whether
//! it passed and the measured numbers behind the verdict.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenarios::{
    balance_evolution, ladder_evolution, loading_scale, notch, oracle_audit, oracle_evolution, run_ladder,
    strip_evolution, LADDER, SAMPLE_TIMES,
};
use crate::crack::{bad_set, components, ring_around, CrackState, DomainPartition};
use crate::energy::density::{rotation, Density};
use crate::energy::tensor::{hessian_at_identity_fd, sym, LINEARIZATION_STEP};
use crate::energy::{linearized_tensor, Mat2, ModelParams, Vec2};
use crate::linearize::{
    balance_residual, convergence_report, cutoff_window, interior_work, reflection_extend, trajectory_rotations,
    UpperSamples,
};
use crate::mesh::{build_mesh, crackable_interfaces, GridSpec, Mesh};
use crate::solver::{elastic_solve_linear, run_evolution, BoundarySnapshot, Model, Trajectory};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(u32, &str, Check); 11] = [
    (1, "oracle equivalence", oracle_equivalence),
    (2, "irreversibility", irreversibility),
    (3, "density contract", density_contract),
    (4, "linearized tensor", linearized_tensor_check),
    (5, "elastic-solve optimality", elastic_solve_optimality),
    (6, "energy balance", energy_balance),
    (7, "linearization ladder", linearization_ladder),
    (8, "bad set", bad_set_check),
    (9, "cutoff window", cutoff_window_check),
    (10, "reflection extension", reflection_check),
    (11, "interior work", interior_work_check),
];

pub fn run_check(id: u32) -> Option<CheckOutcome> {
    let (id, name, check) = CRITERIA.iter().copied().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<CheckOutcome> {
    CRITERIA.iter().filter_map(|c| run_check(c.0)).collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_series(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn oracle_equivalence() -> Result<(bool, String)> {
    let start = Instant::now();
    let evo = oracle_evolution(Model::Linear);
    let audit = oracle_audit(&evo)?;
    let secs = start.elapsed().as_secs_f64();
    let facets = crackable_interfaces(&evo.mesh).len();
    let broke = audit.trajectory.steps.last().map_or(0, |s| s.cumulative.len());
    let passed = audit.max_relative_gap <= 1e-6 && facets <= 12 && audit.steps.len() == 9 && broke > 0 && secs <= 60.0;
    Ok((
        passed,
        format!(
            "max relative gap {:.2e} <= 1e-6 over {} steps, {facets} crackable facets, {broke} broken at t = 1, {secs:.1} s",
            audit.max_relative_gap,
            audit.steps.len() - 1
        ),
    ))
}

fn nested(traj: &Trajectory) -> bool {
    let lengths: Vec<f64> = traj.steps.iter().map(|s| s.energy.surface).collect();
    traj.history().is_monotone()
        && traj.steps.windows(2).all(|w| w[0].cumulative.is_subset(&w[1].cumulative))
        && traj.steps.iter().all(|s| traj.initial_crack.is_subset(&s.cumulative))
        && lengths.windows(2).all(|w| w[1] >= w[0])
}

fn irreversibility() -> Result<(bool, String)> {
    let mut runs = vec![
        run_evolution(&oracle_evolution(Model::Linear))?,
        run_evolution(&oracle_evolution(Model::Nonlinear))?,
        run_evolution(&strip_evolution(Model::Linear, 4, 0.1))?,
    ];
    for eps in LADDER {
        runs.push(run_evolution(&strip_evolution(Model::Nonlinear, 3, eps))?);
    }
    let broken: Vec<usize> = runs.iter().map(|t| t.steps.last().map_or(0, |s| s.cumulative.len())).collect();
    let failures = runs.iter().filter(|t| !nested(t)).count();
    Ok((
        failures == 0 && broken.iter().all(|&b| b > 0),
        format!("{} runs, {failures} with non-nested cracks; final crack sizes {broken:?}", runs.len()),
    ))
}

fn density_contract() -> Result<(bool, String)> {
    let w = Density::DistSo2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut frame = 0.0f64;
    let mut grad = 0.0f64;
    for _ in 0..1000 {
        let f = Mat2::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let r = rotation(rng.gen_range(0.0..std::f64::consts::TAU));
        frame = frame.max((w.value(&(r * f)) - w.value(&f)).abs() / (1.0 + f.norm_squared()));
        let g = w.gradient(&f);
        let h = 1e-6;
        let fd = Mat2::from_fn(|i, j| {
            let mut e = Mat2::zeros();
            e[(i, j)] = h;
            (w.value(&(f + e)) - w.value(&(f - e))) / (2.0 * h)
        });
        grad = grad.max((g - fd).norm() / g.norm().max(1e-12));
    }
    let zero_on_rotations = (0..100).all(|_| w.value(&rotation(rng.gen_range(0.0..std::f64::consts::TAU))) == 0.0);
    let at_identity = w.gradient(&Mat2::identity()).norm();
    let passed = frame <= 1e-12 && zero_on_rotations && grad <= 1e-5 && at_identity <= 1e-12;
    Ok((
        passed,
        format!(
            "frame indifference {frame:.1e} <= 1e-12, W(R) = 0 on 100 rotations: {zero_on_rotations}, \
             DW vs central differences {grad:.1e} <= 1e-5, |DW(Id)| = {at_identity:.1e}"
        ),
    ))
}

fn linearized_tensor_check() -> Result<(bool, String)> {
    let density = Density::DistSo2;
    let tensor = linearized_tensor(&density)?;
    let full = hessian_at_identity_fd(&density, LINEARIZATION_STEP);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sym_gap = 0.0f64;
    for _ in 0..200 {
        let a = Mat2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let v = crate::energy::density::flatten(&a);
        let q_full = (v.transpose() * full * v)[(0, 0)];
        sym_gap = sym_gap.max((q_full - tensor.q(&sym(&a))).abs()).max((tensor.q(&a) - tensor.q(&sym(&a))).abs());
    }
    let min_eig = tensor.min_eigenvalue();
    let a = Mat2::new(0.3, 1.0, 0.2, -0.5);
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| (density.value(&(Mat2::identity() + e * a)) / (e * e) - 0.5 * tensor.q(&a)).abs())
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log10()).collect();
    let passed = sym_gap <= 1e-8 && min_eig > 0.1 && orders.iter().all(|&o| o >= 0.9);
    Ok((
        passed,
        format!(
            "|Q(A) - Q(sym A)| {sym_gap:.1e} <= 1e-8, min eigenvalue {min_eig:.3} > 0.1, \
             Taylor gaps {} with orders {}",
            fmt_series(&errs),
            fmt_series(&orders)
        ),
    ))
}

fn elastic_solve_optimality() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut solves = 0usize;
    let mut runs = vec![
        run_evolution(&oracle_evolution(Model::Linear))?,
        run_evolution(&strip_evolution(Model::Linear, 4, 0.1))?,
        run_evolution(&balance_evolution(4))?,
        run_evolution(&ladder_evolution(Model::Linear, 0.1))?,
    ];
    for traj in runs.drain(..) {
        for s in &traj.steps {
            worst = worst.max(s.max_residual);
            solves += 1;
        }
    }
    // random crack sets and data on the strip mesh
    let mesh = build_mesh(&GridSpec::unit_cells(8, 4, 1))?;
    let tensor = linearized_tensor(&Density::DistSo2)?;
    let facets = crackable_interfaces(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let crack: CrackState = facets.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let h = BoundarySnapshot {
            gradient: Mat2::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        };
        let sol = elastic_solve_linear(&mesh, &crack, &h, &tensor)?;
        worst = worst.max(sol.residual);
        solves += 1;
    }
    Ok((
        worst <= 1e-10,
        format!("largest relative Euler-Lagrange residual {worst:.1e} <= 1e-10 over {solves} steps and solves"),
    ))
}

fn energy_balance() -> Result<(bool, String)> {
    // crack-free: sigma(0, 1) against the step size
    let mut sigmas = Vec::new();
    let mut bound_ok = true;
    for level in 3..=6 {
        let evo = balance_evolution(level);
        let traj = run_evolution(&evo)?;
        let sigma = balance_residual(&traj)?.from_start.last().copied().unwrap_or(0.0).abs();
        bound_ok &= sigma <= loading_scale(&evo)? * evo.partition.delta() * (1.0 + 1e-9);
        sigmas.push(sigma);
    }
    let orders: Vec<f64> = sigmas.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let first_order = orders.iter().all(|&o| o >= 0.9);

    // strip fracture: positive part of the pairwise residuals
    let evo = strip_evolution(Model::Linear, 10, 0.1);
    let scale = loading_scale(&evo)?;
    let traj = run_evolution(&evo)?;
    let worst = balance_residual(&traj)?.max_positive();
    let broke = traj.steps.last().map_or(0, |s| s.cumulative.len());
    let passed = bound_ok && first_order && worst <= 1e-6 * scale && broke > 0;
    Ok((
        passed,
        format!(
            "crack-free |sigma| {} <= C dt: {bound_ok}, orders {}; strip (k = 10, {broke} facets broken) \
             max sigma+ / scale = {:.3e} <= 1e-6",
            fmt_series(&sigmas),
            fmt_series(&orders),
            worst / scale
        ),
    ))
}

fn linearization_ladder() -> Result<(bool, String)> {
    let start = Instant::now();
    let base = ladder_evolution(Model::Linear, LADDER[0]);
    let (runs, reference) = run_ladder(&base, &LADDER)?;
    let report = convergence_report(&runs, &reference, &SAMPLE_TIMES)?;
    let secs = start.elapsed().as_secs_f64();
    let mut passed = secs <= 600.0;
    let mut detail = Vec::new();
    for t in SAMPLE_TIMES {
        let rows: Vec<_> = LADDER.iter().filter_map(|&e| report.row(e, t)).collect();
        let gap: Vec<f64> = rows.iter().map(|r| r.total_gap).collect();
        let hess: Vec<f64> = rows.iter().map(|r| r.hessian_term).collect();
        let err: Vec<f64> = rows.iter().map(|r| r.displacement_error).collect();
        let cracked = rows.iter().any(|r| r.crack_length != r.reference_crack_length);
        let ok = rows.len() == LADDER.len()
            && strictly_decreasing(&gap)
            && strictly_decreasing(&hess)
            && strictly_decreasing(&err)
            && !cracked;
        passed &= ok;
        detail.push(format!(
            "t = {t}: gap {} hessian {} error {}",
            fmt_series(&gap),
            fmt_series(&hess),
            fmt_series(&err)
        ));
    }
    Ok((passed, format!("{}; {secs:.1} s", detail.join("; "))))
}

/// Every union of components that avoids the frame and whose boundary is
/// cracked, by enumeration.
fn enclosed_unions(mesh: &Mesh, crack: &CrackState, part: &DomainPartition) -> Vec<Vec<usize>> {
    let n = part.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let chosen = |c: usize| mask >> part.component_of[c] & 1 == 1;
        let cells: Vec<usize> = (0..mesh.n_cells()).filter(|&c| chosen(c)).collect();
        let frame_free = cells.iter().all(|&c| !mesh.cells[c].in_frame);
        let sealed = mesh
            .interfaces
            .iter()
            .enumerate()
            .all(|(i, f)| chosen(f.cells[0]) == chosen(f.cells[1]) || crack.is_broken(i));
        if frame_free && sealed {
            out.push(cells);
        }
    }
    out
}

fn bad_set_check() -> Result<(bool, String)> {
    let mesh = build_mesh(&GridSpec::square(1.0, 8, 1))?;
    let ring = ring_around(&mesh, 2, 5, 3, 6);
    let block: Vec<usize> = (0..mesh.n_cells())
        .filter(|&c| (2..5).contains(&mesh.cells[c].ix) && (3..6).contains(&mesh.cells[c].iy))
        .collect();
    let ring_ok = bad_set(&mesh, &ring).bad == block;

    let mut open = ring.clone();
    let first = *open.broken.iter().next().expect("ring is not empty");
    open.broken.remove(&first);
    let cut_ok = bad_set(&mesh, &notch(&mesh, 4)).bad.is_empty() && bad_set(&mesh, &open).bad.is_empty();

    // frame part, annulus and core: three components
    let nested = ring_around(&mesh, 1, 7, 1, 7).union(&ring_around(&mesh, 3, 5, 3, 5));
    let part = components(&mesh, &nested);
    let unions = enclosed_unions(&mesh, &nested, &part);
    let bad = bad_set(&mesh, &nested).bad;
    let mut all: Vec<usize> = unions.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    let maximal = part.len() == 3 && unions.contains(&bad) && all == bad;
    Ok((
        ring_ok && cut_ok && maximal,
        format!(
            "ring block exact: {ring_ok}, open cuts give empty set: {cut_ok}, \
             maximal over {} enclosed unions of {} components: {maximal}",
            unions.len(),
            part.len()
        ),
    ))
}

fn cutoff_window_check() -> Result<(bool, String)> {
    let gamma = 0.7;
    let eps: Vec<f64> = (1..=20).map(|k| 0.5f64.powi(k)).collect();
    let windows: Vec<(f64, f64, f64)> = eps.iter().map(|&e| cutoff_window(e, gamma)).collect();
    let ordered = windows.iter().all(|&(lo, eta, hi)| lo <= eta && eta <= hi);
    let small: Vec<f64> = eps.iter().zip(&windows).map(|(e, w)| e * w.1.powi(3)).collect();
    let large: Vec<f64> = eps.iter().zip(&windows).map(|(e, w)| e.powf(1.0 - gamma) * w.1).collect();
    let small_ok = strictly_decreasing(&small);
    let large_ok = large.windows(2).all(|w| w[1] > w[0]);
    let sampled = [0.68, 0.7, 0.8, 0.9 * ModelParams::default().beta]
        .iter()
        .all(|&g| eps.iter().all(|&e| {
            let (lo, eta, hi) = cutoff_window(e, g);
            lo < eta && eta < hi
        }));
    Ok((
        ordered && small_ok && large_ok && sampled,
        format!(
            "ordering over eps = 2^-1..2^-20: {ordered} (other gammas: {sampled}), \
             eps eta^3 decreasing: {small_ok}, eps^(1-gamma) eta increasing: {large_ok}"
        ),
    ))
}

fn reflection_check() -> Result<(bool, String)> {
    let phi = |x: f64, y: f64| Vec2::new(x.sin() * y.exp(), x.cos());
    let mut mismatch = Vec::new();
    let mut trace_exact = true;
    let mut bounded = true;
    for n in [32usize, 64] {
        let h = 1.0 / n as f64;
        let up = UpperSamples::from_fn(n, n, h, phi);
        let ext = reflection_extend(&up)?;
        trace_exact &= (0..=n).all(|i| ext.at(i, 0) == up.at(i, 0));
        let m = ext.normal_derivative_mismatch();
        bounded &= m <= 8.0 * h * h;
        mismatch.push(m);
    }
    let order = (mismatch[0] / mismatch[1]).log2();

    let constant = UpperSamples::from_fn(8, 8, 0.125, |_, _| Vec2::new(1.5, -2.0));
    let linear = UpperSamples::from_fn(8, 8, 0.125, |x, y| Vec2::new(2.0 * x - y, y));
    let (ec, el) = (reflection_extend(&constant)?, reflection_extend(&linear)?);
    let mut reproduced = true;
    for j in -4..=8isize {
        for i in 0..=8 {
            let (x, y) = (i as f64 * 0.125, j as f64 * 0.125);
            reproduced &= ec.at(i, j) == Vec2::new(1.5, -2.0) && el.at(i, j) == Vec2::new(2.0 * x - y, y);
        }
    }
    Ok((
        trace_exact && bounded && order >= 1.9 && reproduced,
        format!(
            "value trace exact: {trace_exact}, normal-derivative mismatch {} <= 8 h^2: {bounded}, \
             order {order:.2} >= 1.9, constant and linear reproduced: {reproduced}",
            fmt_series(&mismatch)
        ),
    ))
}

fn interior_work_check() -> Result<(bool, String)> {
    let runs: Vec<Trajectory> = LADDER
        .iter()
        .map(|&eps| run_evolution(&strip_evolution(Model::Nonlinear, 3, eps)))
        .collect::<Result<_>>()?;
    let scale = loading_scale(&strip_evolution(Model::Nonlinear, 3, LADDER[0]))?;
    let mut values = Vec::new();
    let mut pieces = 0;
    for traj in &runs {
        let rotations = trajectory_rotations(traj)?;
        values.push(interior_work(traj, &rotations, 1.0)?.abs());
        pieces += traj.steps.iter().filter(|s| s.partition.interior_components().next().is_some()).count();
    }
    // magnitudes below the solver resolution count as zero
    let floor = 1e-9 * scale;
    let violations = values.windows(2).filter(|w| w[1] > 1.1 * w[0] + floor).count();
    Ok((
        violations <= 1 && pieces > 0,
        format!(
            "|interior work| {} across eps = {:?} ({violations} increases beyond 10% + {floor:.1e}); \
             {pieces} steps with detached pieces",
            fmt_series(&values),
            LADDER
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        for id in [3, 4, 8, 9, 10] {
            let out = run_check(id).unwrap();
            assert!(out.passed, "{}", out.line());
        }
        assert!(run_check(99).is_none());
    }

    #[test]
    fn enumeration_finds_only_sealed_frame_free_unions() {
        let mesh = build_mesh(&GridSpec::square(1.0, 6, 1)).unwrap();
        let crack = ring_around(&mesh, 2, 4, 2, 4);
        let part = components(&mesh, &crack);
        let unions = enclosed_unions(&mesh, &crack, &part);
        assert_eq!(unions.len(), 1);
        assert_eq!(unions[0].len(), 4);
        assert!(enclosed_unions(&mesh, &CrackState::empty(), &components(&mesh, &CrackState::empty())).is_empty());
    }
}
