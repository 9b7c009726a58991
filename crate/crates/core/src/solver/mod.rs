//! Time-incremental minimization: elastic solves with the crack fixed, greedy
//! crack updates, a brute-force oracle for small meshes, the evolution loop
//! over dyadic time partitions and the work of the boundary loading.

pub mod assembly;
mod elastic;
mod evolution;
mod step;

use serde::{Deserialize, Serialize};

use crate::energy::{Mat2, Vec2};
use crate::{Error, Result};

pub use elastic::{elastic_solve_linear, elastic_solve_nonlinear, LinearSolution, NonlinearSolution};
pub use evolution::{apriori_bound, run_evolution, work_integral, Evolution, Trajectory, TrajectoryStep};
pub use step::{brute_force_step, candidate_moves, incremental_step, StepContext, StepOutcome, BRUTE_FORCE_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Nonlinear,
    Linear,
}

/// Dyadic partition `t_n = n / 2^k` of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimePartition {
    pub level: u32,
}

impl TimePartition {
    pub fn new(level: u32) -> Self {
        TimePartition { level }
    }

    pub fn n_steps(&self) -> usize {
        1usize << self.level
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n_steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.n_steps() as f64
    }

    /// All `2^k + 1` nodes including both endpoints.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|n| self.time(n)).collect()
    }

    /// Whether every node of `self` is a node of `finer`.
    pub fn is_refined_by(&self, finer: &TimePartition) -> bool {
        finer.level >= self.level
    }
}

/// Affine boundary datum at one instant, `h(x) = G x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySnapshot {
    pub gradient: Mat2,
}

impl BoundarySnapshot {
    pub fn zero() -> Self {
        BoundarySnapshot { gradient: Mat2::zeros() }
    }

    pub fn eval(&self, x: Vec2) -> Vec2 {
        self.gradient * x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    pub t: f64,
    /// Row-major gradient of the datum at time `t`.
    pub gradient: [[f64; 2]; 2],
}

/// Loading program `h(t, x) = G(t) x`, affine in `x` and piecewise linear in `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryProgram {
    /// `h = (a t x1, 0)`.
    UniaxialStretch { amplitude: f64 },
    /// `h = (a t x2, 0)`.
    SimpleShear { amplitude: f64 },
    /// Linear interpolation between knots; constant outside their span.
    PiecewiseLinear { knots: Vec<Knot> },
}

impl Default for BoundaryProgram {
    fn default() -> Self {
        BoundaryProgram::UniaxialStretch { amplitude: 0.1 }
    }
}

fn knot_matrix(k: &Knot) -> Mat2 {
    Mat2::new(k.gradient[0][0], k.gradient[0][1], k.gradient[1][0], k.gradient[1][1])
}

impl BoundaryProgram {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryProgram::UniaxialStretch { amplitude } | BoundaryProgram::SimpleShear { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(Error::ConfigValidation("boundary amplitude must be finite".into()));
                }
            }
            BoundaryProgram::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::ConfigValidation("piecewise_linear needs at least one knot".into()));
                }
                if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(Error::ConfigValidation("knot times must be strictly increasing".into()));
                }
                if knots.iter().any(|k| !k.t.is_finite() || k.gradient.iter().flatten().any(|v| !v.is_finite())) {
                    return Err(Error::ConfigValidation("knots must be finite".into()));
                }
            }
        }
        Ok(())
    }

    fn unit(&self) -> Option<Mat2> {
        match *self {
            BoundaryProgram::UniaxialStretch { amplitude } => Some(Mat2::new(amplitude, 0.0, 0.0, 0.0)),
            BoundaryProgram::SimpleShear { amplitude } => Some(Mat2::new(0.0, amplitude, 0.0, 0.0)),
            BoundaryProgram::PiecewiseLinear { .. } => None,
        }
    }

    /// `grad h(t)`.
    pub fn gradient(&self, t: f64) -> Mat2 {
        if let Some(g) = self.unit() {
            return g * t;
        }
        let BoundaryProgram::PiecewiseLinear { knots } = self else { unreachable!() };
        let first = &knots[0];
        if t <= first.t {
            return knot_matrix(first);
        }
        for w in knots.windows(2) {
            if t <= w[1].t {
                let s = (t - w[0].t) / (w[1].t - w[0].t);
                return knot_matrix(&w[0]) * (1.0 - s) + knot_matrix(&w[1]) * s;
            }
        }
        knot_matrix(knots.last().unwrap())
    }

    /// `grad d_t h(t)`, taken from the right so that it matches
    /// left-endpoint quadrature on each time step.
    pub fn rate(&self, t: f64) -> Mat2 {
        if let Some(g) = self.unit() {
            return g;
        }
        let BoundaryProgram::PiecewiseLinear { knots } = self else { unreachable!() };
        for w in knots.windows(2) {
            if t >= w[0].t && t < w[1].t {
                return (knot_matrix(&w[1]) - knot_matrix(&w[0])) / (w[1].t - w[0].t);
            }
        }
        Mat2::zeros()
    }

    pub fn at(&self, t: f64) -> BoundarySnapshot {
        BoundarySnapshot { gradient: self.gradient(t) }
    }

    pub fn h(&self, t: f64, x: Vec2) -> Vec2 {
        self.gradient(t) * x
    }

    pub fn dt_h(&self, t: f64, x: Vec2) -> Vec2 {
        self.rate(t) * x
    }
}

/// Tolerances and search controls of the solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stopping tolerance on the max-norm of the nonlinear energy gradient
    /// with respect to the rescaled displacement.
    pub elastic_tol: f64,
    pub max_newton_iters: usize,
    /// Randomized restarts of the nonlinear solve besides the warm start.
    pub multistart: usize,
    pub greedy_passes: usize,
    /// Relative tolerance: a move is accepted when it lowers the energy by
    /// more than this times `max(E, kappa dx)`.
    pub break_threshold_tol: f64,
    pub rng_seed: u64,
    /// Longest straight run of interfaces offered as one move; defaults to
    /// the larger grid dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<usize>,
    /// Also offer the outline of every rectangle of interior cells.
    pub rectangle_cuts: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            elastic_tol: 1e-10,
            max_newton_iters: 100,
            multistart: 3,
            greedy_passes: 10,
            break_threshold_tol: 1e-12,
            rng_seed: 0,
            chain_length: None,
            rectangle_cuts: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.elastic_tol > 0.0) || !(self.break_threshold_tol > 0.0) {
            return Err(Error::ConfigValidation("solver tolerances must be positive".into()));
        }
        if self.max_newton_iters == 0 || self.greedy_passes == 0 {
            return Err(Error::ConfigValidation("max_newton_iters and greedy_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic seed for one random stream, mixed from the run seed and
/// stream identifiers.
pub(crate) fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}
