mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use cellbuck_core::homogenize::LoadCase;
use cellbuck_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

use config::{Command, RunConfig, SphereShell};

#[derive(Parser)]
#[command(name = "cellbuck", version, about = "Homogenization, Bloch buckling analysis and optimization of periodic voxel cells")]
struct Cli {
    /// Worker threads; the solvers currently run serially.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Source {
    /// Density file (.bin with a .hdr sidecar).
    #[arg(long, group = "src")]
    input: Option<PathBuf>,
    /// Shape parameter file (TOML).
    #[arg(long, group = "src")]
    featureset: Option<PathBuf>,
    /// Hollow sphere with the given inner and outer radii.
    #[arg(long, group = "src", value_delimiter = ',')]
    sphere: Option<Vec<f64>>,
    /// Grid size for feature sets and spheres.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    e1: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    nu: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Sub {
    /// Execute a run described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Effective elasticity of a cell.
    Homogenize {
        #[command(flatten)]
        source: Source,
    },
    /// Band diagram and critical buckling stress.
    Bands {
        #[command(flatten)]
        source: Source,
        /// uniaxial, hydrostatic, or six comma-separated stress components.
        #[arg(long, default_value = "uniaxial")]
        load: String,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        bands: usize,
    },
    /// Robust density-based optimization.
    Optimize {
        /// Optimization settings (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Initial density; defaults to the hollow-sphere seed.
        #[arg(long)]
        seed_density: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Feature-based shape optimization.
    ShapeOptimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Writes a density file from a feature set or a sphere shell.
    Generate {
        #[command(flatten)]
        source: Source,
    },
    /// Least-squares fit of shape parameters to a density file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        /// Output feature set.
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_load(s: &str) -> Result<LoadCase> {
    match s.trim().to_ascii_lowercase().as_str() {
        "uniaxial" => Ok(LoadCase::Uniaxial),
        "hydrostatic" => Ok(LoadCase::Hydrostatic),
        other => {
            let v: Vec<f64> = other
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidInput(format!("unrecognized load '{s}'")))?;
            let a: [f64; 6] = v
                .try_into()
                .map_err(|_| Error::InvalidInput("a custom load needs six stress components".into()))?;
            let l = LoadCase::Custom(a);
            l.validate()?;
            Ok(l)
        }
    }
}

fn source_config(command: Command, s: Source, threads: usize) -> Result<RunConfig> {
    let mut c = RunConfig::new(command);
    c.input = s.input;
    c.featureset = s.featureset;
    c.sphere = match s.sphere.as_deref() {
        None => None,
        Some(&[r_inner, r_outer]) => Some(SphereShell { r_inner, r_outer }),
        Some(_) => return Err(Error::InvalidInput("--sphere takes two radii".into())),
    };
    c.n = s.n;
    c.material = cellbuck_core::element::BaseMaterial::new(s.e1, s.nu);
    c.out_dir = s.out;
    c.threads = threads;
    Ok(c)
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Sub::Run { config } => {
            let mut c: RunConfig = config::load_toml(&config)?;
            c.threads = c.threads.max(threads);
            commands::execute(&c, Some(&config))
        }
        Sub::Homogenize { source } => commands::execute(&source_config(Command::Homogenize, source, threads)?, None),
        Sub::Bands {
            source,
            load,
            samples,
            bands,
        } => {
            let mut c = source_config(Command::Bands, source, threads)?;
            c.load = parse_load(&load)?;
            c.samples = samples;
            c.bands = bands;
            commands::execute(&c, None)
        }
        Sub::Optimize {
            config,
            seed_density,
            out,
        } => {
            let mut c = RunConfig::new(Command::Optimize);
            c.optimize = Some(config::load_toml(&config)?);
            c.input = seed_density;
            c.out_dir = out;
            c.threads = threads;
            commands::execute(&c, Some(&config))
        }
        Sub::ShapeOptimize { config, init, out } => {
            let mut c = RunConfig::new(Command::ShapeOptimize);
            c.shape = Some(config::load_toml(&config)?);
            c.featureset = Some(init);
            c.out_dir = out;
            c.threads = threads;
            commands::execute(&c, Some(&config))
        }
        Sub::Generate { source } => commands::execute(&source_config(Command::Generate, source, threads)?, None),
        Sub::Fit {
            input,
            init,
            iterations,
            output,
        } => commands::fit(&input, init.as_deref(), iterations, &output),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        Error::Iteration { source, .. } => exit_code(source),
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
