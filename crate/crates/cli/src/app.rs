//! Command execution behind the CLI: single runs, sweeps, the adaptive
//! refinement loop, and oracle history export.

use crate::config::{self, ConfigError, Mode, RunConfig};
use crate::output::{self, OutputError};
use delam_core::{run_adaptive, sweep_grid, DriverConfig, Simulation, SliderOracle, SliderParams};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl AppError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Output(_) => 1,
        }
    }
}

pub enum Command {
    Run,
    Sweep,
    Adaptive,
    Oracle,
}

impl Command {
    fn check_mode(&self, mode: Mode) -> Result<(), ConfigError> {
        let (ok, subcommand, expected) = match self {
            Command::Run => (
                matches!(mode, Mode::Slider | Mode::Mesh2d),
                "run",
                "slider or mesh2d",
            ),
            Command::Sweep => (matches!(mode, Mode::Sweep), "sweep", "sweep"),
            Command::Adaptive => (matches!(mode, Mode::Adaptive), "adaptive", "adaptive"),
            Command::Oracle => (matches!(mode, Mode::Oracle), "oracle", "oracle"),
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::ModeMismatch {
                actual: mode.to_string(),
                subcommand: subcommand.to_string(),
                expected: expected.to_string(),
            })
        }
    }
}

pub fn execute(command: Command, config_path: &str, overrides: &[String]) -> Result<(), AppError> {
    let (cfg, tree) = config::parse_config(config_path, overrides)?;
    command.check_mode(cfg.mode)?;
    let out_dir = PathBuf::from(&cfg.output.directory);
    output::write_config_echo(&tree, &out_dir.join("config_echo.toml"))?;
    match command {
        Command::Run => cmd_run(&cfg, &out_dir),
        Command::Sweep => cmd_sweep(&cfg, &out_dir),
        Command::Adaptive => cmd_adaptive(&cfg, &out_dir),
        Command::Oracle => cmd_oracle(&cfg, &out_dir),
    }
}

fn slider_params(cfg: &RunConfig) -> Result<SliderParams, AppError> {
    let v = cfg.loading.velocity;
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    SliderParams::new(
        cfg.material.young,
        cfg.geometry.length,
        cfg.adhesive.k_n,
        cfg.adhesive.alpha,
        speed,
        cfg.material.chi,
    )
    .map_err(|e| AppError::Numerical(e.to_string()))
}

fn check_energy(cfg: &RunConfig, sim: &Simulation) -> Result<(), AppError> {
    let scale = sim
        .ledger()
        .rows()
        .iter()
        .fold(1.0f64, |m, r| m.max(r.stored.abs()));
    let worst = sim.ledger().max_certified_residual();
    if worst > cfg.numerics.energy_tol * scale {
        return Err(AppError::Numerical(format!(
            "certified energy residual {worst:e} exceeds {:e} x stored-energy scale {scale:e}",
            cfg.numerics.energy_tol
        )));
    }
    Ok(())
}

fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let problem = cfg.build_problem().map_err(AppError::Numerical)?;
    output::write_mesh(&problem.mesh, &out_dir.join("mesh.txt"))?;
    let mut sim = Simulation::new(&problem, cfg.numerics.tau, cfg.material.chi, cfg.qp_options())
        .map_err(|e| AppError::Numerical(e.to_string()))?;
    let stride = cfg.output.snapshot_stride;
    loop {
        match sim.advance() {
            Ok(Some(report)) => {
                if stride > 0 && report.k % stride == 0 {
                    output::write_field_snapshot(
                        &problem.mesh,
                        sim.ledger().defect_density(),
                        &report.z,
                        report.k,
                        &out_dir.join(format!("snapshots/step_{:06}.vtk", report.k)),
                    )?;
                }
            }
            Ok(None) => break,
            Err(e) => return Err(AppError::Numerical(e.to_string())),
        }
    }
    output::write_timeseries(sim.ledger().rows(), &out_dir.join("timeseries.csv"))?;
    output::write_field_snapshot(
        &problem.mesh,
        sim.ledger().defect_density(),
        &sim.state().z,
        sim.n_steps(),
        &out_dir.join("final_field.vtk"),
    )?;
    if cfg.mode == Mode::Slider && cfg.material.chi > 0.0 {
        let oracle = SliderOracle::new(slider_params(cfg)?)
            .map_err(|e| AppError::Numerical(e.to_string()))?;
        output::write_oracle_history(
            &oracle,
            cfg.loading.horizon,
            cfg.numerics.tau,
            &out_dir.join("oracle.csv"),
        )?;
    }
    check_energy(cfg, &sim)?;
    let (l1, linf) = sim.ledger().residual_norms();
    let last = sim.ledger().last();
    println!(
        "run complete: {} steps, bonded fraction {:.3}, |E|_L1 = {l1:.6e}, |E|_Linf = {linf:.6e}",
        sim.n_steps(),
        last.bonded_fraction
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let problem = cfg.build_problem().map_err(AppError::Numerical)?;
    let sweep = cfg.sweep.as_ref().expect("validated");
    let rows = sweep_grid(&sweep.chis, &sweep.taus, &problem, cfg.qp_options());
    output::write_sweep_table(&rows, &out_dir.join("sweep.csv"))?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "sweep entry chi={} tau={} failed: {}",
            row.chi,
            row.tau,
            row.error.as_deref().unwrap_or("")
        );
    }
    println!(
        "sweep complete: {} runs, {failures} failures -> {}",
        rows.len(),
        out_dir.join("sweep.csv").display()
    );
    if failures == rows.len() {
        return Err(AppError::Numerical("every sweep run failed".into()));
    }
    Ok(())
}

fn cmd_adaptive(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let problem = cfg.build_problem().map_err(AppError::Numerical)?;
    let d = cfg.driver.as_ref().expect("validated");
    let driver = DriverConfig {
        chi0: d.chi0,
        tau0: d.tau0,
        chi_final: d.chi_final,
        gate_c: d.gate_c,
        gamma: d.gamma,
        max_tau_halvings: d.max_tau_halvings,
    };
    let outcome = run_adaptive(&driver, &problem, cfg.qp_options())
        .map_err(|e| AppError::Numerical(e.to_string()))?;
    output::write_adaptive_trace(&outcome.trace, outcome.gate_c, &out_dir.join("adaptive_trace.txt"))?;
    for decision in &outcome.trace {
        println!(
            "chi={:.6e} tau={:.6e} |E|_L1={:.6e} gate={:.6e} {}",
            decision.chi,
            decision.tau,
            decision.l1,
            decision.gate,
            if decision.accepted { "accept" } else { "halve tau" }
        );
    }
    let mut accepted_csv = String::from("chi,tau,tau_halvings,steps,residual_l1,residual_linf,rupture_time\n");
    for run in &outcome.accepted {
        accepted_csv.push_str(&format!(
            "{:.17e},{:.17e},{},{},{:.17e},{:.17e},{}\n",
            run.chi,
            run.tau,
            run.tau_halvings,
            run.steps,
            run.residual_l1,
            run.residual_linf,
            run.complete_rupture_time
                .map(|t| format!("{t:.17e}"))
                .unwrap_or_default()
        ));
    }
    std::fs::create_dir_all(out_dir).ok();
    std::fs::write(out_dir.join("accepted.csv"), accepted_csv).map_err(|source| {
        OutputError::Io {
            path: out_dir.join("accepted.csv").display().to_string(),
            source,
        }
    })?;
    if let Some(last) = outcome.accepted.last() {
        output::write_timeseries(last.ledger.rows(), &out_dir.join("timeseries_final.csv"))?;
        output::write_field_snapshot(
            &problem.mesh,
            &last.defect_density,
            &last.final_bond,
            last.steps,
            &out_dir.join("final_field.vtk"),
        )?;
        println!(
            "adaptive complete: {} accepted levels, final chi = {:.6e}, tau = {:.6e}",
            outcome.accepted.len(),
            last.chi,
            last.tau
        );
    } else {
        println!("adaptive complete: no levels accepted (chi_final >= chi0)");
    }
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig, out_dir: &Path) -> Result<(), AppError> {
    let params = slider_params(cfg)?;
    let mut summary = String::new();
    let (t_limit, magnitude) = delam_core::oracle::defect_measure_slider(&params);
    summary.push_str(&format!("rupture_time_limit_s = {t_limit:.17e}\n"));
    summary.push_str(&format!("defect_density_J_per_m3 = {magnitude:.17e}\n"));
    if params.chi > 0.0 {
        let oracle = SliderOracle::new(params).map_err(|e| AppError::Numerical(e.to_string()))?;
        summary.push_str(&format!(
            "rupture_time_s = {:.17e}\n",
            oracle.rupture_time
        ));
        output::write_oracle_history(
            &oracle,
            cfg.loading.horizon,
            cfg.numerics.tau,
            &out_dir.join("oracle.csv"),
        )?;
    }
    std::fs::create_dir_all(out_dir).ok();
    std::fs::write(out_dir.join("oracle_summary.txt"), &summary).map_err(|source| {
        OutputError::Io {
            path: out_dir.join("oracle_summary.txt").display().to_string(),
            source,
        }
    })?;
    print!("{summary}");
    Ok(())
}
