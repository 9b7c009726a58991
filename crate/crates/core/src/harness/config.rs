//! Run configuration: one TOML file, parsed strictly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crack::CrackState;
use crate::energy::{Density, ModelParams};
use crate::harness::scenarios::notch;
use crate::mesh::{build_mesh, GridSpec, Mesh};
use crate::solver::{BoundaryProgram, Evolution, Model, SolveOptions, TimePartition};
use crate::{Error, Result};

/// Deepest time partition a config may ask for.
pub const MAX_PARTITION_LEVEL: u32 = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Nonlinear,
    Linear,
    Both,
}

impl ModelChoice {
    pub fn models(self) -> Vec<Model> {
        match self {
            ModelChoice::Nonlinear => vec![Model::Nonlinear],
            ModelChoice::Linear => vec![Model::Linear],
            ModelChoice::Both => vec![Model::Nonlinear, Model::Linear],
        }
    }
}

/// Crack present before the first step: explicit interface ids and/or a
/// centred vertical notch of `notch` facets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCrack {
    pub interfaces: Vec<usize>,
    pub notch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
    pub trajectory: bool,
    pub report: bool,
    pub oracle_check: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            dir: PathBuf::from("out"),
            trajectory: true,
            report: true,
            oracle_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    /// Time partition level `k`: steps at `t = n / 2^k`.
    pub partition_level: u32,
    /// Strictly decreasing `eps` values for `ladder`.
    pub ladder: Vec<f64>,
    /// Times at which the ladder report compares runs.
    pub report_times: Vec<f64>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub density: Density,
    pub grid: GridSpec,
    pub params: ModelParams,
    pub boundary: BoundaryProgram,
    pub initial_crack: InitialCrack,
    pub solve: SolveOptions,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelChoice::default(),
            partition_level: 3,
            ladder: vec![0.2, 0.1, 0.05, 0.025],
            report_times: vec![0.25, 0.5, 1.0],
            workers: 0,
            density: Density::default(),
            grid: GridSpec::square(1.0, 8, 1),
            params: ModelParams::default(),
            boundary: BoundaryProgram::default(),
            initial_crack: InitialCrack::default(),
            solve: SolveOptions::default(),
            outputs: Outputs::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The defaults as a TOML document.
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&RunConfig::default()).expect("defaults serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.params.validate()?;
        self.boundary.validate()?;
        self.solve.validate()?;
        if self.partition_level > MAX_PARTITION_LEVEL {
            return Err(Error::ConfigValidation(format!(
                "partition_level must be at most {MAX_PARTITION_LEVEL} (got {})",
                self.partition_level
            )));
        }
        if self.ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::ConfigValidation("ladder values must lie in (0, 1)".into()));
        }
        if self.ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::ConfigValidation("ladder must be strictly decreasing".into()));
        }
        let partition = TimePartition::new(self.partition_level);
        let scale = partition.n_steps() as f64;
        for &t in &self.report_times {
            let n = t * scale;
            if !(0.0..=1.0).contains(&t) || (n - n.round()).abs() > 1e-9 {
                return Err(Error::ConfigValidation(format!(
                    "report time {t} is not a node of the level-{} partition",
                    self.partition_level
                )));
            }
        }
        let mesh = build_mesh(&self.grid)?;
        self.crack(&mesh)?;
        Ok(())
    }

    fn crack(&self, mesh: &Mesh) -> Result<CrackState> {
        let crack = notch(mesh, self.initial_crack.notch).with(self.initial_crack.interfaces.iter().copied());
        crack.validate(mesh)?;
        Ok(crack)
    }

    /// Run description for one model, with `eps` overridden when given.
    pub fn evolution(&self, model: Model, epsilon: Option<f64>) -> Result<Evolution> {
        let mesh = build_mesh(&self.grid)?;
        let initial_crack = self.crack(&mesh)?;
        let mut params = self.params;
        if let Some(eps) = epsilon {
            params.epsilon = eps;
        }
        Ok(Evolution {
            mesh,
            model,
            params,
            density: self.density,
            program: self.boundary.clone(),
            partition: TimePartition::new(self.partition_level),
            options: self.solve.clone(),
            initial_crack,
        })
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = RunConfig::from_toml("partition_level = 2\n").unwrap();
        assert_eq!(cfg.partition_level, 2);
        assert_eq!(cfg.params, ModelParams::default());
        assert_eq!(cfg.solve, SolveOptions::default());
        let cfg = RunConfig::from_toml("[params]\nkappa = 3.0\n").unwrap();
        assert_eq!(cfg.params.kappa, 3.0);
        assert_eq!(cfg.params.beta, 0.9);
    }

    #[test]
    fn defaults_round_trip() {
        let text = RunConfig::defaults_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_gamma_is_a_validation_error() {
        let err = RunConfig::from_toml("[params]\ngamma = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("2/3 < gamma < beta"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parse_errors() {
        for text in ["partition_level = 2\npartition_level = 3\n", "bogus = 1\n", "[solve]\nelastic_tol = \"x\"\n"] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, Error::ConfigParse(_)), "{text}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
        let err = RunConfig::from_toml("partition_level = 2\npartition_level = 3\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn validation_errors() {
        let small = "[grid]\nwidth = 2.0\nheight = 2.0\ncells_x = 2\ncells_y = 2\nmargin = 1.0\n";
        let err = RunConfig::from_toml(small).unwrap_err();
        assert!(err.to_string().contains("cells_x"), "{err}");
        for text in ["ladder = [0.1, 0.2]\n", "report_times = [0.3]\n", "partition_level = 40\n"] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::ConfigValidation(_))), "{text}");
        }
    }

    #[test]
    fn notch_and_ids_combine() {
        let cfg = RunConfig::from_toml("[initial_crack]\nnotch = 2\n").unwrap();
        let evo = cfg.evolution(Model::Linear, None).unwrap();
        assert_eq!(evo.initial_crack.len(), 2);
        assert!(RunConfig::from_toml("[initial_crack]\ninterfaces = [100000]\n").is_err());
    }
}
