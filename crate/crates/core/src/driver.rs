//! Joint refinement of viscosity and time step under the L1 residual gate,
//! plus full-factorial (chi, tau) sweeps of the residual norms.

use crate::energy::EnergyLedger;
use crate::stepper::{Problem, QpOptions, SimError, Simulation};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("driver config: {0}")]
    Config(String),
    #[error(
        "residual gate not met at chi = {chi:e} after {halvings} time-step halvings (last tau = {tau:e}, |E|_L1 = {l1:e}, gate = {gate:e})"
    )]
    GateUnreachable {
        chi: f64,
        tau: f64,
        halvings: usize,
        l1: f64,
        gate: f64,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Control parameters of the refinement loop.
#[derive(Debug, Clone, Copy)]
pub struct DriverConfig {
    /// Starting viscosity, s.
    pub chi0: f64,
    /// Starting time step, s.
    pub tau0: f64,
    /// Loop ends once the accepted viscosity is at or below this value.
    pub chi_final: f64,
    /// Gate constant C; `None` calibrates it from a pilot run at
    /// (chi0, tau0) as twice the pilot L1 norm divided by chi0^gamma.
    pub gate_c: Option<f64>,
    /// Gate exponent: a run is accepted when |E|_L1 <= C chi^gamma.
    pub gamma: f64,
    /// Abort bound on time-step halvings within one viscosity level.
    pub max_tau_halvings: usize,
}

impl DriverConfig {
    fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: String| Err(DriverError::Config(m));
        if !(self.chi0 > 0.0) {
            return bad(format!("chi0 must be positive, got {}", self.chi0));
        }
        if !(self.tau0 > 0.0) {
            return bad(format!("tau0 must be positive, got {}", self.tau0));
        }
        if !(self.chi_final > 0.0) {
            return bad(format!("chi_final must be positive, got {}", self.chi_final));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if let Some(c) = self.gate_c {
            if !(c > 0.0) {
                return bad(format!("gate_c must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// One accepted (chi, tau) pair with its run artifacts.
pub struct AcceptedRun {
    pub chi: f64,
    pub tau: f64,
    /// Halvings spent below this viscosity level before the gate passed.
    pub tau_halvings: usize,
    pub steps: usize,
    pub residual_l1: f64,
    pub residual_linf: f64,
    pub complete_rupture_time: Option<f64>,
    pub ledger: EnergyLedger,
    /// Final cumulative dissipation density per element, J/m^3.
    pub defect_density: Vec<f64>,
    /// Final per-element bond state.
    pub final_bond: Vec<f64>,
}

/// One gate decision, for the trace log.
#[derive(Debug, Clone, Copy)]
pub struct GateDecision {
    pub chi: f64,
    pub tau: f64,
    pub l1: f64,
    pub gate: f64,
    pub accepted: bool,
}

pub struct AdaptiveOutcome {
    pub accepted: Vec<AcceptedRun>,
    pub trace: Vec<GateDecision>,
    /// The gate constant actually used (calibrated or configured).
    pub gate_c: f64,
}

fn run_once(
    problem: &Problem,
    tau: f64,
    chi: f64,
    qp: QpOptions,
) -> Result<(Simulation<'_>, crate::stepper::RunSummary), SimError> {
    let mut sim = Simulation::new(problem, tau, chi, qp)?;
    let summary = sim.run()?;
    Ok((sim, summary))
}

/// The refinement loop: run at (chi, tau); while the L1 residual norm
/// exceeds C chi^gamma halve tau and rerun; on acceptance halve both chi
/// and tau; stop once a viscosity at or below `chi_final` has been
/// accepted. Returns every accepted run in order. A `chi_final` at or
/// above `chi0` yields an empty sequence.
pub fn run_adaptive(
    cfg: &DriverConfig,
    problem: &Problem,
    qp: QpOptions,
) -> Result<AdaptiveOutcome, DriverError> {
    cfg.validate()?;
    let mut accepted = Vec::new();
    let mut trace = Vec::new();
    if cfg.chi_final >= cfg.chi0 {
        return Ok(AdaptiveOutcome {
            accepted,
            trace,
            gate_c: cfg.gate_c.unwrap_or(0.0),
        });
    }

    let mut chi = cfg.chi0;
    let mut tau = cfg.tau0;
    let mut gate_c = cfg.gate_c;
    loop {
        let mut halvings = 0usize;
        loop {
            let (sim, summary) = run_once(problem, tau, chi, qp)?;
            let l1 = summary.residual_l1;
            let c = *gate_c.get_or_insert_with(|| 2.0 * l1 / cfg.chi0.powf(cfg.gamma));
            let gate = c * chi.powf(cfg.gamma);
            let pass = l1 <= gate;
            trace.push(GateDecision {
                chi,
                tau,
                l1,
                gate,
                accepted: pass,
            });
            if pass {
                accepted.push(AcceptedRun {
                    chi,
                    tau,
                    tau_halvings: halvings,
                    steps: summary.steps,
                    residual_l1: l1,
                    residual_linf: summary.residual_linf,
                    complete_rupture_time: summary.complete_rupture_time,
                    defect_density: sim.ledger().defect_density().to_vec(),
                    final_bond: sim.state().z.clone(),
                    ledger: sim.ledger().clone(),
                });
                break;
            }
            halvings += 1;
            if halvings > cfg.max_tau_halvings {
                return Err(DriverError::GateUnreachable {
                    chi,
                    tau,
                    halvings,
                    l1,
                    gate,
                });
            }
            tau *= 0.5;
        }
        if chi <= cfg.chi_final {
            break;
        }
        chi *= 0.5;
        tau *= 0.5;
    }
    Ok(AdaptiveOutcome {
        accepted,
        trace,
        gate_c: gate_c.unwrap_or(0.0),
    })
}

/// One row of a (chi, tau) sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub chi: f64,
    pub tau: f64,
    pub residual_l1: f64,
    pub residual_linf: f64,
    pub error: Option<String>,
}

/// Full-factorial residual-norm table over the given viscosities (zero
/// allowed) and time steps. Runs execute concurrently; failures are
/// recorded per row and the sweep continues.
pub fn sweep_grid(
    chis: &[f64],
    taus: &[f64],
    problem: &Problem,
    qp: QpOptions,
) -> Vec<SweepRow> {
    let mut pairs = Vec::new();
    for &chi in chis {
        for &tau in taus {
            pairs.push((chi, tau));
        }
    }
    pairs
        .into_par_iter()
        .map(|(chi, tau)| match run_once(problem, tau, chi, qp) {
            Ok((_, summary)) => SweepRow {
                chi,
                tau,
                residual_l1: summary.residual_l1,
                residual_linf: summary.residual_linf,
                error: None,
            },
            Err(e) => SweepRow {
                chi,
                tau,
                residual_l1: f64::NAN,
                residual_linf: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect()
}
