use std::fs;
use std::path::Path;
use std::time::Instant;

use cellbuck_core::bloch::{sweep_band_diagram, BucklingSetup, IbzPath};
use cellbuck_core::design::{hollow_sphere, volume_fraction, Realization, HOLLOW_SPHERE_RADII};
use cellbuck_core::grid::{CubicOp, VoxelGrid};
use cellbuck_core::homogenize::{Homogenization, SolveSettings};
use cellbuck_core::io::{fmt6, read_density, vti_cells, vti_mode, write_atomic, write_density};
use cellbuck_core::shape::{
    fit_to_density, run_shape_optimization, ShapeIterationLog, ShapeModel, ShapeModelConfig, ShapeOptConfig,
    ShapeParams, PARAM_NAMES,
};
use cellbuck_core::solver::EigenSettings;
use cellbuck_core::topopt::{IterationLog, Observer, OptState, Optimizer};
use cellbuck_core::{Error, Result};

use crate::config::{self, Command, RunConfig};
use crate::output::{csv_error, csv_writer, write_bands, write_manifest, Report};

fn settings(c: &RunConfig) -> SolveSettings {
    SolveSettings {
        eigen: EigenSettings {
            seed: c.seed,
            ..EigenSettings::default()
        },
        ..SolveSettings::default()
    }
}

/// The physical density field a command operates on.
fn load_design(c: &RunConfig) -> Result<(VoxelGrid, Vec<f64>)> {
    if let Some(p) = &c.input {
        return read_density(p);
    }
    let grid = VoxelGrid::new(c.n.ok_or(Error::InvalidInput("grid size n is required".into()))?)?;
    if let Some(p) = &c.featureset {
        let params = config::load_featureset(p)?;
        let model = ShapeModel::new(grid, ShapeModelConfig::default())?;
        return Ok((grid, model.compose(&params)?.rho_bar));
    }
    if let Some(s) = &c.sphere {
        if !(0.0 <= s.r_inner && s.r_inner < s.r_outer) {
            return Err(Error::InvalidInput("sphere radii need 0 <= r_inner < r_outer".into()));
        }
        return Ok((grid, hollow_sphere(&grid, s.r_inner, s.r_outer)));
    }
    Err(Error::InvalidInput("no input density, featureset or sphere given".into()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs one configured command and writes its manifest.
pub fn execute(c: &RunConfig, config_file: Option<&Path>) -> Result<()> {
    c.validate()?;
    let start = Instant::now();
    create_dir(&c.out_dir)?;
    let name = match c.command {
        Command::Homogenize => {
            homogenize(c)?;
            "homogenize"
        }
        Command::Bands => {
            bands(c)?;
            "bands"
        }
        Command::Generate => {
            generate(c)?;
            "generate"
        }
        Command::Optimize => {
            optimize(c)?;
            "optimize"
        }
        Command::ShapeOptimize => {
            shape_optimize(c)?;
            "shape-optimize"
        }
    };
    let mut inputs: Vec<&Path> = [&c.input, &c.featureset].into_iter().flatten().map(|p| p.as_path()).collect();
    if let Some(f) = config_file {
        inputs.push(f);
    }
    write_manifest(&c.out_dir, name, &config::to_toml(c)?, &inputs, start.elapsed())
}

fn homogenize(c: &RunConfig) -> Result<()> {
    let (grid, rho) = load_design(c)?;
    let h = Homogenization::new(grid, c.material, &rho, &settings(c))?;
    let mut r = Report::default();
    r.text("n", grid.n()).properties(&h.props, volume_fraction(&rho));
    r.write(&c.out_dir.join("properties.txt"))?;
    println!(
        "e_bar = {}\nkappa_bar = {}\nzener = {}\nvolume_fraction = {}",
        fmt6(h.props.e_bar),
        fmt6(h.props.kappa_bar),
        fmt6(h.props.zener),
        fmt6(volume_fraction(&rho))
    );
    Ok(())
}

fn bands(c: &RunConfig) -> Result<()> {
    let (grid, rho) = load_design(c)?;
    let s = settings(c);
    let h = Homogenization::new(grid, c.material, &rho, &s)?;
    let setup = BucklingSetup::new(&h, c.load.stress())?;
    let b = sweep_band_diagram(&setup, &IbzPath::for_load(&c.load, c.samples), c.bands, &s)?;
    write_bands(&c.out_dir.join("bands.csv"), &b)?;
    let k = b.critical_k();
    write_atomic(
        &c.out_dir.join("critical_mode.vti"),
        vti_mode(&grid, &rho, &k, &b.critical_mode)?.as_bytes(),
    )?;
    let label = b.samples[b.critical_index].label.clone().unwrap_or_default();
    let mut r = Report::default();
    r.text("load", c.load.name())
        .num("sigma_cri", b.sigma_cri)
        .vec3("critical_k", k.0)
        .text("critical_label", &label);
    r.write(&c.out_dir.join("buckling.txt"))?;
    println!("sigma_cri = {}\ncritical_k = [{}, {}, {}] {label}", fmt6(b.sigma_cri), fmt6(k.0[0]), fmt6(k.0[1]), fmt6(k.0[2]));
    Ok(())
}

fn cubic_symmetric(grid: &VoxelGrid, rho: &[f64]) -> bool {
    CubicOp::all()
        .iter()
        .all(|op| (0..grid.num_elements()).all(|e| (rho[e] - rho[op.apply_element(grid, e)]).abs() <= 1e-12))
}

fn generate(c: &RunConfig) -> Result<()> {
    let (grid, rho) = load_design(c)?;
    let sym = cubic_symmetric(&grid, &rho);
    if !sym {
        return Err(Error::InvalidInput("generated field is not cubic symmetric".into()));
    }
    write_density(&c.out_dir.join("cell.bin"), &grid, &rho)?;
    write_atomic(&c.out_dir.join("cell.vti"), vti_cells(&grid, &[("density", &rho)])?.as_bytes())?;
    let mut r = Report::default();
    r.text("n", grid.n())
        .num("volume_fraction", volume_fraction(&rho))
        .text("cubic_symmetric", sym);
    r.write(&c.out_dir.join("generate.txt"))?;
    println!("volume_fraction = {}\ncubic_symmetric = {sym}", fmt6(volume_fraction(&rho)));
    Ok(())
}

struct OptLogger<'a> {
    log: csv::Writer<fs::File>,
    log_path: std::path::PathBuf,
    dir: &'a Path,
    opt: &'a Optimizer,
    header: bool,
}

impl Observer for OptLogger<'_> {
    fn on_iteration(&mut self, st: &OptState, l: &IterationLog, checkpoint: bool) -> Result<()> {
        let p = self.log_path.clone();
        if !self.header {
            let mut h: Vec<String> = [
                "iter", "beta", "objective", "ks", "max_tau", "zeta", "e_bar", "kappa_bar", "zener", "f_eroded",
                "f_intermediate", "f_dilated", "f_dilated_bound", "g_isotropy", "g_volume", "change", "grayness",
                "infeasible_subproblem",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            h.extend((1..=l.max_tau_per_k.len()).map(|i| format!("max_tau_k{i}")));
            self.log.write_record(&h).map_err(|e| csv_error(&p, e))?;
            self.header = true;
        }
        let mut row = vec![l.iter.to_string()];
        row.extend(
            [
                l.beta,
                l.objective,
                l.ks,
                l.max_tau,
                l.zeta,
                l.e_bar,
                l.kappa_bar,
                l.zener,
                l.f_eroded,
                l.f_intermediate,
                l.f_dilated,
                l.f_dilated_bound,
                l.g_isotropy,
                l.g_volume,
                l.change,
                l.grayness,
            ]
            .iter()
            .map(|v| fmt6(*v)),
        );
        row.push((l.infeasible_subproblem as u8).to_string());
        row.extend(l.max_tau_per_k.iter().map(|v| fmt6(*v)));
        self.log.write_record(&row).map_err(|e| csv_error(&p, e))?;
        self.log.flush().map_err(|e| Error::io(&p, e))?;
        log::info!("iter {} objective {} max_tau {}", l.iter, fmt6(l.objective), fmt6(l.max_tau));
        if checkpoint {
            let d = self.dir.join("checkpoints");
            create_dir(&d)?;
            let path = d.join(format!("iter_{:05}.bin", st.iter));
            write_density(&path, &self.opt.grid, &st.rho(&self.opt.sym))?;
        }
        Ok(())
    }
}

fn optimize(c: &RunConfig) -> Result<()> {
    let cfg = c
        .optimize
        .clone()
        .ok_or(Error::InvalidInput("optimize needs an [optimize] table".into()))?;
    let opt = Optimizer::new(cfg)?;
    let seed = match &c.input {
        Some(p) => {
            let (g, rho) = read_density(p)?;
            if g.n() != opt.grid.n() {
                return Err(Error::InvalidInput(format!("seed has n = {}, config has n = {}", g.n(), opt.grid.n())));
            }
            rho
        }
        None => hollow_sphere(&opt.grid, HOLLOW_SPHERE_RADII.0, HOLLOW_SPHERE_RADII.1),
    };
    let mut st = opt.initial_state(&seed)?;
    let log_path = c.out_dir.join("log.csv");
    let mut logger = OptLogger {
        log: csv_writer(&log_path)?,
        log_path,
        dir: &c.out_dir,
        opt: &opt,
        header: false,
    };
    opt.run(&mut st, &mut logger)?;
    let (real, rep, bands) = opt.report(&st, true)?;
    let g = opt.grid;
    write_density(&c.out_dir.join("design_raw.bin"), &g, &st.rho(&opt.sym))?;
    for r in Realization::ALL {
        write_density(&c.out_dir.join(format!("design_{}.bin", r.as_str())), &g, real.get(r))?;
    }
    write_atomic(
        &c.out_dir.join("design.vti"),
        vti_cells(
            &g,
            &[
                ("intermediate", &real.intermediate),
                ("eroded", &real.eroded),
                ("dilated", &real.dilated),
            ],
        )?
        .as_bytes(),
    )?;
    if let Some(b) = &bands {
        write_bands(&c.out_dir.join("bands.csv"), b)?;
    }
    let mut r = Report::default();
    r.text("iterations", rep.iterations)
        .num("e_bar", rep.e_bar)
        .num("kappa_bar", rep.kappa_bar)
        .num("zener", rep.zener)
        .num("f_eroded", rep.f_eroded)
        .num("f_intermediate", rep.f_intermediate)
        .num("f_dilated", rep.f_dilated)
        .num("grayness", rep.grayness)
        .num("sigma_cri", rep.sigma_cri)
        .vec3("critical_k", rep.critical_k)
        .num("eroded_e_bar", rep.eroded_e_bar)
        .num("eroded_zener", rep.eroded_zener);
    r.write(&c.out_dir.join("report.txt"))?;
    print!("{}", r.render());
    Ok(())
}

fn shape_optimize(c: &RunConfig) -> Result<()> {
    let cfg: ShapeOptConfig = c.shape.clone().unwrap_or_default();
    let init = config::load_featureset(c.featureset.as_ref().expect("validated"))?;
    let log_path = c.out_dir.join("log.csv");
    let mut w = csv_writer(&log_path)?;
    let mut header: Vec<String> = ["iter", "objective", "ks", "max_tau", "e_bar", "kappa_bar", "zener", "volume"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(PARAM_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_error(&log_path, e))?;
    let mut failure = None;
    let mut obs = |l: &ShapeIterationLog| {
        let mut row = vec![l.iter.to_string()];
        row.extend(
            [l.objective, l.ks, l.max_tau, l.e_bar, l.kappa_bar, l.zener, l.volume]
                .iter()
                .chain(l.params.iter())
                .map(|v| fmt6(*v)),
        );
        if let Err(e) = w.write_record(&row).and_then(|_| w.flush().map_err(csv::Error::from)) {
            failure.get_or_insert(e);
        }
    };
    let (rep, rho) = run_shape_optimization(&init, &cfg, &mut obs)?;
    if let Some(e) = failure {
        return Err(csv_error(&log_path, e));
    }
    let grid = VoxelGrid::new(cfg.n)?;
    write_atomic(&c.out_dir.join("featureset.toml"), config::to_toml(&rep.params)?.as_bytes())?;
    write_density(&c.out_dir.join("design.bin"), &grid, &rho)?;
    write_atomic(&c.out_dir.join("design.vti"), vti_cells(&grid, &[("density", &rho)])?.as_bytes())?;
    let mut r = Report::default();
    r.text("iterations", rep.history.len())
        .num("e_bar", rep.e_bar)
        .num("kappa_bar", rep.kappa_bar)
        .num("zener", rep.zener)
        .num("volume_fraction", rep.volume)
        .num("sigma_cri", rep.sigma_cri)
        .vec3("critical_k", rep.critical_k);
    r.write(&c.out_dir.join("report.txt"))?;
    print!("{}", r.render());
    Ok(())
}

/// Fits shape parameters to a density file and writes them as a feature set.
pub fn fit(input: &Path, init: Option<&Path>, iterations: usize, output: &Path) -> Result<()> {
    let (grid, target) = read_density(input)?;
    let start = match init {
        Some(p) => config::load_featureset(p)?,
        None => ShapeParams::default(),
    };
    let model = ShapeModel::new(grid, ShapeModelConfig::default())?;
    let (p, err) = fit_to_density(&model, &target, &start, iterations)?;
    write_atomic(output, config::to_toml(&p)?.as_bytes())?;
    println!("mean_squared_misfit = {}", fmt6(err));
    Ok(())
}
