//! Command-line front end. One binary, four subcommands:
//!
//! * `run <config> [--set k=v]…` steps the coupled system to t_end and
//!   writes the ledger, snapshots, and a manifest;
//! * `verify <suite>` runs estimate checks on built-in desk-scale configs;
//! * `galerkin <config> --modes … --lambdas …` sweeps the spectral solver;
//! * `stability <config> --eps …` measures response to initial perturbations.
//!
//! Exit codes: 0 success (all checks passing where applicable), 2 config or
//! usage error, 3 numerical abort with a last-good snapshot on disk, 1 other
//! failures (including failed estimates). Stdout stays human-readable; CSV,
//! JSON, and raw snapshots go to the configured output directory, each file
//! inventoried in that invocation's manifest.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{self, SimConfig};
use crate::coupling::{
    advance, init_state, step_count, KineticState, SimState, StepParams, LEDGER_HEADER,
};
use crate::error::{Error, Result};
use crate::fluid::PoissonWorkspace;
use crate::galerkin::{
    fixed_point_solve, lambda_sweep, mode_sweep, GalerkinSystem, PicardOptions,
    LAMBDA_SWEEP_HEADER, MODE_SWEEP_HEADER, PICARD_HEADER,
};
use crate::io::{self, CsvWriter, RunManifest};
use crate::verify::{
    check_energy_inequality, check_mass_conservation, check_maximum_principle,
    check_moment_interpolation, stability_experiment, table, EstimateReport, STABILITY_HEADER,
};

#[derive(Parser)]
#[command(name = "nsv", version, about = "coupled fluid/kinetic simulator and estimate checker")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a coupled simulation from a TOML config
    Run {
        config: PathBuf,
        /// Override a config value: section.key=value (repeatable)
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check named a priori estimates on built-in desk-scale runs
    Verify {
        /// energy | maxprinciple | moments | mass | stability | all
        suite: String,
    },
    /// Sweep spectral mode counts and drag-truncation levels
    Galerkin {
        config: PathBuf,
        /// Mode counts, strictly increasing (e.g. 4,8,16)
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<usize>,
        /// Truncation levels, strictly increasing; "inf" allowed (e.g. 2,4,inf)
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<String>,
        /// Picard convergence threshold
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Picard iteration cap
        #[arg(long, default_value_t = 40)]
        max_iter: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Perturb the initial velocity by ε·δu and fit deviation against ε
    Stability {
        config: PathBuf,
        /// Perturbation sizes (e.g. 1e-2,5e-3,2.5e-3)
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

/// Parses, dispatches, and maps errors to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { config, set } => cmd_run(&config, &set),
        Cmd::Verify { suite } => cmd_verify(&suite),
        Cmd::Galerkin {
            config,
            modes,
            lambdas,
            tol,
            max_iter,
            set,
        } => cmd_galerkin(&config, &modes, &lambdas, tol, max_iter, &set),
        Cmd::Stability { config, eps, set } => cmd_stability(&config, &eps, &set),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) | Error::UnsupportedDimension(_) => 2,
                Error::NumericalAbort { .. } => 3,
                _ => 1,
            }
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<(String, SimConfig)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = config::from_str_with_overrides(&text, overrides)?;
    Ok((text, cfg))
}

fn out_dir(cfg: &SimConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn write_snapshots(
    cfg: &SimConfig,
    state: &SimState,
    out: &Path,
    tag: &str,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if cfg.output.write_fields {
        files.extend(io::write_velocity_snapshot(
            out,
            &format!("u_{tag}"),
            &state.u,
            state.time,
        )?);
        files.extend(io::write_scalar_snapshot(
            out,
            &format!("p_{tag}"),
            "p",
            &state.p.p,
            (state.p.hx, state.p.hy),
            state.time,
        )?);
    }
    if cfg.output.write_particles {
        match &state.kinetic {
            KineticState::Particles(e) => {
                files.extend(io::write_ensemble_snapshot(out, &format!("particles_{tag}"), e)?)
            }
            KineticState::PhaseGrid(f) => {
                files.extend(io::write_phase_snapshot(out, &format!("f_{tag}"), f, state.time)?)
            }
        }
    }
    Ok(files)
}

fn cmd_run(path: &Path, overrides: &[String]) -> Result<i32> {
    let (text, cfg) = load(path, overrides)?;
    let out = out_dir(&cfg)?;
    let mut manifest = RunManifest::begin("run", &text, overrides, cfg.sim.seed);
    let pool = thread_pool(cfg.sim.threads)?;

    let result = pool.install(|| -> Result<i32> {
        let mut state = init_state(&cfg)?;
        let params = StepParams::from_config(&cfg);
        let mut ws = PoissonWorkspace::new(&state.grid);
        let ledger_path = out.join(&cfg.output.ledger);
        let mut ledger = CsvWriter::create(ledger_path.clone(), LEDGER_HEADER)?;
        manifest.add(&[ledger_path]);

        let n = step_count(&cfg);
        let every = cfg.output.snapshot_every;
        let mut abort: Option<Error> = None;
        for _ in 0..n {
            match advance(&mut state, &params, &mut ws) {
                Ok(row) => {
                    ledger.row(&row.csv_line())?;
                    if every > 0 && state.step % every == 0 && state.step < n as u64 {
                        let files = write_snapshots(&cfg, &state, &out, &format!("{:06}", state.step))?;
                        manifest.add(&files);
                    }
                }
                // a particle outrunning the reflection cap is the same
                // disease as a NaN: the step blew up, keep the last good state
                Err(e)
                    if matches!(
                        e,
                        Error::NumericalAbort { .. } | Error::ParticleEscaped { .. }
                    ) =>
                {
                    abort = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        ledger.finish()?;
        // on abort the state still holds the last finite step
        let files = write_snapshots(&cfg, &state, &out, "final")?;
        manifest.add(&files);
        match abort {
            Some(e) => {
                eprintln!("{e}");
                eprintln!(
                    "wrote last-good state (step {}, t = {}) to {}",
                    state.step,
                    state.time,
                    out.display()
                );
                Ok(3)
            }
            None => {
                println!(
                    "ran {n} steps to t = {}; E_fluid = {:.6e}, kinetic mass = {:.6e}",
                    state.time,
                    0.5 * state.u.l2_sq(),
                    state.kinetic.mass()
                );
                println!("ledger and snapshots in {}", out.display());
                Ok(0)
            }
        }
    });

    // inventory whatever made it to disk, even when the run died early
    let wrote = manifest.write(&out);
    let code = result?;
    wrote?;
    Ok(code)
}

/// Fixed desk-scale base for the verification suites: a coupled eddy over a
/// Maxwellian cloud on a 16² box, one time unit, both backends affordable.
const DESK_BASE: &str = r#"
[domain]
dim = 2
lx = 1.0
ly = 1.0
nx = 16
ny = 16
bc_fluid = "no-slip"
bc_kinetic = "specular"

[sim]
dt = 2e-3
t_end = 1.0
seed = 1001

[fluid]
initial = "stream-eddy"
amplitude = 0.5

[kinetic]
particles = 20000
rho = 0.5
theta = 0.25
phase_nx = 16
phase_ny = 16
phase_nv = 16
vmax = 3.0
"#;

fn desk_cfg(overrides: &[&str]) -> Result<SimConfig> {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    config::from_str_with_overrides(DESK_BASE, &ov)
}

fn cmd_verify(suite: &str) -> Result<i32> {
    const KNOWN: [&str; 6] = ["energy", "maxprinciple", "moments", "mass", "stability", "all"];
    if !KNOWN.contains(&suite) {
        eprintln!("unknown suite {suite:?}; expected one of {}", KNOWN.join(", "));
        return Ok(2);
    }
    let want = |name: &str| suite == name || suite == "all";

    let mut manifest = RunManifest::begin(&format!("verify {suite}"), DESK_BASE, &[], 0);
    let out = PathBuf::from("out");
    fs::create_dir_all(&out)?;
    let mut reports: Vec<EstimateReport> = Vec::new();

    if want("energy") {
        let cfg = desk_cfg(&[
            "domain.nx=32",
            "domain.ny=32",
            "sim.dt=1e-3",
            "sim.t_end=0.1",
            "kinetic.particles=10000",
            "sim.seed=1002",
        ])?;
        reports.push(check_energy_inequality(&cfg)?);
    }
    if want("maxprinciple") {
        // forced onto the phase-grid backend by the checker
        reports.push(check_maximum_principle(&desk_cfg(&["sim.seed=1003"])?)?);
    }
    if want("moments") {
        reports.push(check_moment_interpolation(&desk_cfg(&[
            "sim.t_end=0.5",
            "sim.seed=1004",
        ])?)?);
    }
    if want("mass") {
        reports.push(check_mass_conservation(&desk_cfg(&["sim.seed=1005"])?)?);
        reports.push(check_mass_conservation(&desk_cfg(&[
            "sim.backend=phase-grid",
            "sim.seed=1006",
        ])?)?);
    }
    if want("stability") {
        let cfg = desk_cfg(&[
            "domain.nx=32",
            "domain.ny=32",
            "sim.t_end=0.25",
            "kinetic.particles=2000",
            "sim.seed=1007",
        ])?;
        let sr = stability_experiment(&cfg, &[1e-2, 5e-3, 2.5e-3])?;
        let csv = io::write_csv(
            out.join("stability.csv"),
            STABILITY_HEADER,
            sr.rows.iter().map(|r| r.csv_line()),
        )?;
        manifest.add(&[csv]);
        reports.push(sr.report);
    }

    let json_path = out.join(format!("verify_{suite}.json"));
    io::write_json_file(json_path.clone(), &reports)?;
    manifest.add(&[json_path]);
    manifest.write(&out)?;

    print!("{}", table(&reports));
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} estimate(s) failed");
        return Ok(1);
    }
    Ok(0)
}

fn parse_level(s: &str) -> Result<f64> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("truncation level must be a number or \"inf\", got {s:?}")))
}

fn cmd_galerkin(
    path: &Path,
    modes: &[usize],
    lambdas_raw: &[String],
    tol: f64,
    max_iter: usize,
    overrides: &[String],
) -> Result<i32> {
    let (text, cfg) = load(path, overrides)?;
    let lambdas = lambdas_raw
        .iter()
        .map(|s| parse_level(s))
        .collect::<Result<Vec<f64>>>()?;
    let out = out_dir(&cfg)?;
    let mut manifest = RunManifest::begin("galerkin", &text, overrides, cfg.sim.seed);
    let pool = thread_pool(cfg.sim.threads)?;

    pool.install(|| -> Result<()> {
        let sweep = lambda_sweep(&cfg, &lambdas)?;
        let csv = io::write_csv(
            out.join("lambda_sweep.csv"),
            LAMBDA_SWEEP_HEADER,
            sweep.rows.iter().map(|r| r.csv_line()),
        )?;
        manifest.add(&[csv]);
        println!(
            "lambda sweep: {} levels against the untruncated run; reference max speed {:.6}, sup |u|_L2^2 {:.6}",
            sweep.rows.len(),
            sweep.max_speed,
            sweep.max_l2_sq
        );

        // the Picard map needs a finite clipping level: take the largest
        // finite one from the sweep, or an inactive level above the flow
        let finite_max = lambdas
            .iter()
            .copied()
            .filter(|l| l.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let lam = if finite_max > 0.0 {
            finite_max
        } else {
            2.0 * sweep.max_speed.max(0.5)
        };
        let opt = PicardOptions {
            lambda: lam,
            tol,
            max_iter,
        };

        let rows = mode_sweep(&cfg, modes, &opt)?;
        let csv = io::write_csv(
            out.join("mode_sweep.csv"),
            MODE_SWEEP_HEADER,
            rows.iter().map(|r| r.csv_line()),
        )?;
        manifest.add(&[csv]);
        for r in &rows {
            println!(
                "m = {:>3}: distance to direct solver {:.6e} ({} Picard iterations)",
                r.m, r.error, r.iterations
            );
        }

        let grid = cfg.grid()?;
        let sys = GalerkinSystem::build(&grid, *modes.last().unwrap(), cfg.sim.viscosity)?;
        let run = fixed_point_solve(&cfg, &sys, &opt)?;
        let csv = io::write_csv(
            out.join("picard.csv"),
            PICARD_HEADER,
            run.log.iter().map(|r| r.csv_line()),
        )?;
        manifest.add(&[csv]);
        let last = run.log.last().expect("a converged run has at least one iteration");
        println!(
            "picard at m = {}, lambda = {lam}: {} iterations, final delta {:.3e}",
            sys.m(),
            run.log.len(),
            last.delta_l2
        );
        println!(
            "coefficient energy check: lhs {:.9e} <= rhs {:.9e}",
            run.energy_lhs, run.energy_rhs
        );
        Ok(())
    })?;

    manifest.write(&out)?;
    println!("tables in {}", out.display());
    Ok(0)
}

fn cmd_stability(path: &Path, eps: &[f64], overrides: &[String]) -> Result<i32> {
    let (text, cfg) = load(path, overrides)?;
    let out = out_dir(&cfg)?;
    let mut manifest = RunManifest::begin("stability", &text, overrides, cfg.sim.seed);
    let pool = thread_pool(cfg.sim.threads)?;

    let sr = pool.install(|| stability_experiment(&cfg, eps))?;
    let csv = io::write_csv(
        out.join("stability.csv"),
        STABILITY_HEADER,
        sr.rows.iter().map(|r| r.csv_line()),
    )?;
    manifest.add(&[csv]);
    let json_path = out.join("stability_report.json");
    io::write_json_file(json_path.clone(), &sr)?;
    manifest.add(&[json_path]);
    manifest.write(&out)?;

    print!("{}", table(&[sr.report.clone()]));
    println!("rows in {}", out.display());
    Ok(if sr.report.pass { 0 } else { 1 })
}
