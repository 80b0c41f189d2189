//! Run configuration: one JSON document with a section per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::montecarlo::MCConfig;
use crate::solver::SolverConfig;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub body: Option<BodyConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: MCConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Checks every section that is present. Sections filled from defaults
    /// are checked too, so a bad default override fails here.
    pub fn validate(&self) -> Result<()> {
        Kernel::new(self.kernel.clone())?;
        if let Some(body) = &self.body {
            body.validate()?;
        }
        self.solver.validate()?;
        self.mc.validate()?;
        Ok(())
    }

    pub fn body(&self) -> Result<&BodyConfig> {
        self.body.as_ref().ok_or_else(|| Error::Config("missing section `body`".into()))
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self.kernel.clone())
    }

    /// Seed for the particle simulation; `mc.seed` wins over the top-level one.
    pub fn mc_seed(&self) -> u64 {
        self.mc.seed.unwrap_or(self.seed)
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::Config(e.inner().to_string())
        } else {
            Error::Config(format!("at `{path}`: {}", e.inner()))
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str(r#"{"kernel": {"family": "gaussian_flux"}}"#).unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.mc, MCConfig::default());
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert!(cfg.body.is_none());
        assert!(cfg.body().is_err());
        assert_eq!(cfg.kernel.dim, 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str(r#"{"kernell": {"family": "gaussian_flux"}}"#).unwrap_err();
        assert!(err.to_string().contains("kernell"), "{err}");
        let err = parse_config_str(r#"{"kernel": {"family": "gaussian_flux", "alpah": 1}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpah") && msg.contains("kernel"), "{msg}");
    }

    #[test]
    fn gamma_out_of_range() {
        let err = parse_config_str(r#"{"kernel": {"family": "gaussian_flux"}, "body": {"gamma": 1.5}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn mc_seed_precedence() {
        let cfg = parse_config_str(r#"{"kernel": {"family": "gaussian_flux"}, "seed": 7}"#).unwrap();
        assert_eq!(cfg.mc_seed(), 7);
        let cfg =
            parse_config_str(r#"{"kernel": {"family": "gaussian_flux"}, "seed": 7, "mc": {"seed": 9}}"#).unwrap();
        assert_eq!(cfg.mc_seed(), 9);
    }

    #[test]
    fn bad_mc_section_rejected() {
        assert!(parse_config_str(r#"{"kernel": {"family": "gaussian_flux"}, "mc": {"n_particles": 0}}"#).is_err());
    }
}
