use std::fs;
use std::path::{Path, PathBuf};

use cellbuck_core::element::BaseMaterial;
use cellbuck_core::homogenize::LoadCase;
use cellbuck_core::shape::{ShapeOptConfig, ShapeParams};
use cellbuck_core::topopt::OptConfig;
use cellbuck_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Largest grid accepted without `allow_large`; about 4 GB of solver state.
pub const MAX_GRID: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Homogenize,
    Bands,
    Optimize,
    ShapeOptimize,
    Generate,
}

/// Geometry produced by `generate` when no feature set is given.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereShell {
    pub r_inner: f64,
    pub r_outer: f64,
}

/// One run of the tool, as read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub n: Option<usize>,
    #[serde(default)]
    pub material: BaseMaterial,
    #[serde(default = "default_load")]
    pub load: LoadCase,
    /// Density file (`.bin` with a `.hdr` sidecar).
    pub input: Option<PathBuf>,
    /// Shape parameter file.
    pub featureset: Option<PathBuf>,
    pub sphere: Option<SphereShell>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_bands")]
    pub bands: usize,
    #[serde(default)]
    pub allow_large: bool,
    pub optimize: Option<OptConfig>,
    pub shape: Option<ShapeOptConfig>,
}

fn default_load() -> LoadCase {
    LoadCase::Uniaxial
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_threads() -> usize {
    1
}
fn default_samples() -> usize {
    8
}
fn default_bands() -> usize {
    3
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            n: None,
            material: BaseMaterial::default(),
            load: default_load(),
            input: None,
            featureset: None,
            sphere: None,
            out_dir: default_out(),
            threads: 1,
            seed: 0,
            samples: default_samples(),
            bands: default_bands(),
            allow_large: false,
            optimize: None,
            shape: None,
        }
    }

    /// Checks the fields a command needs and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.load.validate()?;
        if self.threads == 0 {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        if self.samples == 0 || self.bands == 0 {
            return Err(Error::InvalidInput("samples and bands must be positive".into()));
        }
        for p in [&self.input, &self.featureset].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("{} does not exist", p.display())));
            }
        }
        let sources = self.input.is_some() as u8 + self.featureset.is_some() as u8 + self.sphere.is_some() as u8;
        match self.command {
            Command::Homogenize | Command::Bands if sources != 1 => {
                return Err(Error::InvalidInput("give exactly one of input, featureset or sphere".into()))
            }
            Command::Generate if self.input.is_some() || sources != 1 => {
                return Err(Error::InvalidInput("generate needs exactly one of featureset or sphere".into()))
            }
            Command::ShapeOptimize if self.featureset.is_none() => {
                return Err(Error::InvalidInput("shape-optimize needs an initial featureset".into()))
            }
            _ => {}
        }
        if (matches!(self.command, Command::Generate) || (self.input.is_none() && sources == 1))
            && self.n.is_none() {
                return Err(Error::InvalidInput("grid size n is required".into()));
            }
        let n = self
            .n
            .or(self.optimize.as_ref().map(|o| o.n))
            .or(self.shape.as_ref().map(|s| s.n));
        if let Some(n) = n {
            if n > MAX_GRID && !self.allow_large {
                return Err(Error::InvalidInput(format!(
                    "n = {n} exceeds the memory guard of {MAX_GRID}; set allow_large to override"
                )));
            }
        }
        if let Some(o) = &self.optimize {
            o.validate()?;
        }
        Ok(())
    }
}

/// Parses TOML, reporting syntax and schema errors with a byte offset.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        offset: e.span().map(|s| s.start).unwrap_or(0),
        message: e.message().to_string(),
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Reads a feature set: the fourteen named parameters.
pub fn load_featureset(path: &Path) -> Result<ShapeParams> {
    let p: ShapeParams = load_toml(path)?;
    p.validate()?;
    Ok(p)
}
