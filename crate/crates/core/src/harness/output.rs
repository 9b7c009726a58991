//! Versioned output files: trajectories as JSON, ladder reports as CSV, and
//! the acceptance summary as JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checks::CheckOutcome;
use super::scenarios::OracleStep;
use crate::energy::{Density, ModelParams};
use crate::linearize::{ConvergenceReport, ConvergenceRow, REPORT_SCHEMA_VERSION};
use crate::mesh::GridSpec;
use crate::solver::{BoundaryProgram, Model, Trajectory};
use crate::{Error, Result};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One time step. `field` lists, cell by cell, the four corner values
/// `(x, y)` in the order lower-left, lower-right, upper-right, upper-left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub elastic: f64,
    pub hessian: f64,
    pub surface: f64,
    pub total: f64,
    pub incremental_total: f64,
    pub crack_length: f64,
    pub increment: Vec<usize>,
    pub broken: Vec<usize>,
    pub components: usize,
    pub max_residual: f64,
    pub field: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub schema_version: u32,
    pub model: Model,
    pub density: Density,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub program: BoundaryProgram,
    pub partition_level: u32,
    pub initial_crack: Vec<usize>,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let steps = traj
            .steps
            .iter()
            .map(|s| StepRecord {
                time: s.time,
                elastic: s.energy.elastic,
                hessian: s.energy.hessian,
                surface: s.energy.surface,
                total: s.energy.total,
                incremental_total: s.incremental.total,
                crack_length: s.energy.surface / traj.params.kappa,
                increment: s.increment.broken.iter().copied().collect(),
                broken: s.cumulative.broken.iter().copied().collect(),
                components: s.partition.len(),
                max_residual: s.max_residual,
                field: s.field.flattened(),
            })
            .collect();
        TrajectoryFile {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            model: traj.model,
            density: traj.density,
            params: traj.params,
            grid: traj.mesh.spec.clone(),
            program: traj.program.clone(),
            partition_level: traj.partition.level,
            initial_crack: traj.initial_crack.broken.iter().copied().collect(),
            steps,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_json(path, &TrajectoryFile::from_trajectory(traj))
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let file: TrajectoryFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if file.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(Error::ConfigParse(format!(
            "{}: unsupported trajectory schema version {}",
            path.display(),
            file.schema_version
        )));
    }
    Ok(file)
}

pub fn write_report(path: &Path, report: &ConvergenceReport) -> Result<()> {
    report.write_csv(create(path)?)
}

pub fn read_report(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let version = first.trim().strip_prefix("# schema_version:").map(|v| v.trim().parse::<u32>());
    if version != Some(Ok(REPORT_SCHEMA_VERSION)) {
        return Err(Error::ConfigParse(format!(
            "{}: missing or unsupported schema version line {:?}",
            path.display(),
            first.trim()
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    Ok(csv.deserialize().collect::<std::result::Result<Vec<ConvergenceRow>, _>>()?)
}

#[derive(Serialize)]
struct OracleFile<'a> {
    schema_version: u32,
    max_relative_gap: f64,
    steps: &'a [OracleStep],
}

pub fn write_oracle(path: &Path, steps: &[OracleStep], max_relative_gap: f64) -> Result<()> {
    write_json(
        path,
        &OracleFile {
            schema_version: SUMMARY_SCHEMA_VERSION,
            max_relative_gap,
            steps,
        },
    )
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    schema_version: u32,
    all_passed: bool,
    criteria: &'a [CheckOutcome],
}

pub fn write_check_summary(path: &Path, outcomes: &[CheckOutcome]) -> Result<()> {
    write_json(
        path,
        &CheckSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            all_passed: outcomes.iter().all(|o| o.passed),
            criteria: outcomes,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios::strip_evolution;
    use crate::linearize::convergence_report;
    use crate::solver::run_evolution;

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = run_evolution(&strip_evolution(Model::Linear, 2, 0.1)).unwrap();
        let path = dir.path().join("sub/run.json");
        write_trajectory(&path, &traj).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back, TrajectoryFile::from_trajectory(&traj));
        assert_eq!(back.steps.len(), 5);
        assert_eq!(back.steps[0].field.len(), 8 * traj.mesh.n_cells());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.trim_start().starts_with("{\n  \"schema_version\": 1"));
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = run_evolution(&strip_evolution(Model::Linear, 2, 0.1)).unwrap();
        let report = convergence_report(std::slice::from_ref(&traj), &traj, &[0.5, 1.0]).unwrap();
        for row in &report.rows {
            assert_eq!(row.total_gap, 0.0);
            assert_eq!(row.elastic_gap, 0.0);
            assert_eq!(row.displacement_error, 0.0);
        }
        let path = dir.path().join("report.csv");
        write_report(&path, &report).unwrap();
        assert_eq!(read_report(&path).unwrap(), report.rows);
        std::fs::write(&path, "epsilon,time\n").unwrap();
        assert!(read_report(&path).is_err());
    }
}
