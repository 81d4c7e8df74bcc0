//! The semi-implicit time loop: a convex QP for the displacement with the
//! delamination variable frozen, then a closed-form local update of the
//! delamination variable with the new displacement.

use crate::energy::{self, EnergyLedger};
use crate::fem::{
    self, AssembledOperators, ContactKernel, FemError, KvSystem, Reactions,
};
use crate::model::{AdhesiveLaw, LoadProgram, MaterialKV, Mesh2D, ModelError, SimState};
use crate::qp::{self, KktDiagnostics, QpError};
use crate::sparse::Csr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("time step {tau} must be positive and at most the horizon {horizon}")]
    BadTimeStep { tau: f64, horizon: f64 },
}

/// Immutable description of one delamination problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh2D,
    pub material: MaterialKV,
    pub adhesive: AdhesiveLaw,
    pub load: LoadProgram,
}

impl Problem {
    pub fn new(
        mesh: Mesh2D,
        material: MaterialKV,
        adhesive: AdhesiveLaw,
        load: LoadProgram,
    ) -> Result<Self, SimError> {
        adhesive.validate(mesh.n_contact_edges())?;
        Ok(Self {
            mesh,
            material,
            adhesive,
            load,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Residual tolerance as a fraction of the system scale.
    pub tol: f64,
    /// Cap on active-set changes per solve.
    pub max_iterations: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 100,
        }
    }
}

/// What happened in one accepted step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub k: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    /// Adhesive driving energy per contact element, J/m^2.
    pub driving: Vec<f64>,
    /// Contact elements newly set to z = 0 in this step.
    pub ruptured: Vec<usize>,
    pub qp_iterations: usize,
}

/// Closed-form delamination update: with the new displacement fixed, the
/// per-element objective is linear in z, so each element either keeps its
/// bond or drops to zero. Ties (driving energy exactly at the threshold)
/// keep the bond.
pub fn z_step(
    u_new: &[f64],
    z_prev: &[f64],
    contact: &[ContactKernel],
) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut z_new = Vec::with_capacity(z_prev.len());
    let mut driving = Vec::with_capacity(z_prev.len());
    let mut ruptured = Vec::new();
    for (e, (kernel, &zp)) in contact.iter().zip(z_prev).enumerate() {
        let d = kernel.driving_energy(u_new);
        driving.push(d);
        if d > kernel.alpha && zp > 0.0 {
            z_new.push(0.0);
            ruptured.push(e);
        } else {
            z_new.push(zp);
        }
    }
    (z_new, driving, ruptured)
}

/// Summary of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    /// Time of the step after which no bonded element remained.
    pub complete_rupture_time: Option<f64>,
    pub residual_l1: f64,
    pub residual_linf: f64,
}

/// One simulation instance: owns the assembled operators, the evolving
/// state, and the energy ledger.
pub struct Simulation<'p> {
    problem: &'p Problem,
    ops: AssembledOperators,
    tau: f64,
    chi: f64,
    qp_options: QpOptions,
    state: SimState,
    adhesive_matrix: Csr,
    load_vector: Vec<f64>,
    ledger: EnergyLedger,
    warm_active: Vec<usize>,
    last_kkt: Option<KktDiagnostics>,
    k: usize,
    n_steps: usize,
    complete_rupture_time: Option<f64>,
}

impl<'p> Simulation<'p> {
    /// Sets up a run with time step `tau` and relaxation time `chi`
    /// (overriding the material default, so viscosity sweeps reuse one
    /// problem).
    pub fn new(problem: &'p Problem, tau: f64, chi: f64, qp_options: QpOptions) -> Result<Self, SimError> {
        let horizon = problem.load.horizon;
        if !(tau > 0.0) || tau > horizon * (1.0 + 1e-12) {
            return Err(SimError::BadTimeStep { tau, horizon });
        }
        let ops = AssembledOperators::new(&problem.mesh, &problem.material, &problem.adhesive)?;
        let state = SimState::initial(&problem.mesh);
        let adhesive_matrix = ops.adhesive_matrix(&state.z)?;
        let load_vector = ops.load_vector(&problem.mesh, &problem.load);
        // initial reactions from the static residual at t = 0
        let sys0 = fem::kv_substituted_system(
            &ops,
            &adhesive_matrix,
            &load_vector,
            &state.u,
            tau,
            0.0,
            0.0,
            &problem.load,
        )?;
        let reaction0 = fem::reaction_forces(&sys0, &ops, &state.u).total;

        let stored0 = energy::stored_energy(&state.u, &ops.stiffness, &adhesive_matrix);
        let bonded0 = state.bonded_fraction(&problem.mesh);
        let ledger = EnergyLedger::new(&ops, &state.z, stored0, reaction0, bonded0);

        // guard against T/tau landing a hair above an integer
        let n_steps = (horizon / tau - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            problem,
            ops,
            tau,
            chi,
            qp_options,
            state,
            adhesive_matrix,
            load_vector,
            ledger,
            warm_active: Vec::new(),
            last_kkt: None,
            k: 0,
            n_steps,
            complete_rupture_time: None,
        })
    }

    /// KKT diagnostics of the most recent displacement solve.
    pub fn last_kkt(&self) -> Option<KktDiagnostics> {
        self.last_kkt
    }

    /// Replaces the initial bond state; only valid before the first step.
    pub fn set_initial_bond(&mut self, z: &[f64]) -> Result<(), SimError> {
        assert_eq!(self.k, 0, "initial bond can only be set before stepping");
        if z.len() != self.state.z.len() {
            return Err(SimError::Model(ModelError::AdhesiveLengthMismatch {
                name: "z",
                got: z.len(),
                expected: self.state.z.len(),
            }));
        }
        if let Some(&bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SimError::Model(ModelError::BondOutOfRange(bad)));
        }
        self.state.z.copy_from_slice(z);
        self.adhesive_matrix = self.ops.adhesive_matrix(&self.state.z)?;
        let stored0 = energy::stored_energy(&self.state.u, &self.ops.stiffness, &self.adhesive_matrix);
        let bonded0 = self.state.bonded_fraction(&self.problem.mesh);
        let reaction0 = self.ledger.rows()[0].reaction;
        self.ledger = EnergyLedger::new(&self.ops, &self.state.z, stored0, reaction0, bonded0);
        Ok(())
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn operators(&self) -> &AssembledOperators {
        &self.ops
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn step_time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.problem.load.horizon
        } else {
            k as f64 * self.tau
        }
    }

    /// The one-step linear system at `t_k` with the current state frozen.
    fn build_system(&self, t_k: f64, dt: f64) -> Result<KvSystem, SimError> {
        Ok(fem::kv_substituted_system(
            &self.ops,
            &self.adhesive_matrix,
            &self.load_vector,
            &self.state.u,
            dt,
            self.chi,
            t_k,
            &self.problem.load,
        )?)
    }

    /// Displacement step: minimizes the one-step quadratic subject to the
    /// prescribed boundary displacement and nonnegative opening.
    pub fn u_step(&mut self, t_k: f64, dt: f64) -> Result<(Vec<f64>, Reactions, usize), SimError> {
        let system = self.build_system(t_k, dt)?;
        let qp_problem = qp::rotate_contact_dofs(&self.problem.mesh, &system)?;
        let warm = if self.warm_active.is_empty() {
            None
        } else {
            Some(self.warm_active.as_slice())
        };
        let solution = qp::solve_qp(
            &qp_problem,
            self.qp_options.tol,
            warm,
            self.qp_options.max_iterations,
        )?;
        let u_new = qp_problem.recover_full(&solution.x);
        let reactions = fem::reaction_forces(&system, &self.ops, &u_new);
        self.warm_active = solution.active_set;
        self.last_kkt = Some(solution.kkt);
        Ok((u_new, reactions, solution.iterations))
    }

    /// Advances one step; returns `None` once the horizon has been reached.
    pub fn advance(&mut self) -> Result<Option<StepReport>, SimError> {
        if self.k >= self.n_steps {
            return Ok(None);
        }
        let k = self.k + 1;
        let t_k = self.step_time(k);
        let dt = t_k - self.state.t;

        let (u_new, reactions, qp_iterations) = self.u_step(t_k, dt)?;
        let (z_new, driving, ruptured) = z_step(&u_new, &self.state.z, &self.ops.contact);

        if !ruptured.is_empty() {
            self.adhesive_matrix = self.ops.adhesive_matrix(&z_new)?;
        }

        let rate_field = energy::viscous_rate_field(
            &u_new,
            &self.state.u,
            dt,
            self.chi,
            &self.ops.elements,
            &self.ops.moduli,
        );
        let stored = energy::stored_energy(&u_new, &self.ops.stiffness, &self.adhesive_matrix);
        let w_new = self.problem.load.dirichlet_value(t_k);
        let w_old = self.problem.load.dirichlet_value(self.state.t);
        let dw = [w_new[0] - w_old[0], w_new[1] - w_old[1]];
        let prev_reaction = self.ledger.last().reaction;
        let work_inc = energy::external_work_increment(
            reactions.total,
            prev_reaction,
            dw,
            &self.load_vector,
            &self.load_vector,
            &u_new,
            &self.state.u,
        );
        let endpoint_work_inc = energy::endpoint_work_increment(
            reactions.total,
            dw,
            &self.load_vector,
            &u_new,
            &self.state.u,
        );

        self.state.u_prev = std::mem::replace(&mut self.state.u, u_new);
        self.state.z.copy_from_slice(&z_new);
        self.state.t = t_k;
        self.k = k;

        let bonded = self.state.bonded_fraction(&self.problem.mesh);
        if bonded == 0.0 && self.complete_rupture_time.is_none() {
            self.complete_rupture_time = Some(t_k);
        }
        self.ledger.push_step(
            t_k,
            dt,
            stored,
            &rate_field,
            &z_new,
            work_inc,
            endpoint_work_inc,
            reactions.total,
            bonded,
        );

        Ok(Some(StepReport {
            k,
            t: t_k,
            u: self.state.u.clone(),
            z: z_new,
            driving,
            ruptured,
            qp_iterations,
        }))
    }

    /// Runs to the horizon, feeding every report to the callback.
    pub fn run_with(
        &mut self,
        mut on_step: impl FnMut(&StepReport),
    ) -> Result<RunSummary, SimError> {
        while let Some(report) = self.advance()? {
            on_step(&report);
        }
        let (l1, linf) = self.ledger.residual_norms();
        Ok(RunSummary {
            steps: self.k,
            complete_rupture_time: self.complete_rupture_time,
            residual_l1: l1,
            residual_linf: linf,
        })
    }

    pub fn run(&mut self) -> Result<RunSummary, SimError> {
        self.run_with(|_| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_rect_mesh, MeshLayout};
    use crate::oracle;

    fn slider_problem(chi: f64) -> Problem {
        let mesh = build_rect_mesh(0.1, 0.0125, 0.0125, 1, 1, MeshLayout::Slider).unwrap();
        let material = MaterialKV::new(70e9, 0.0, chi).unwrap();
        let adhesive = AdhesiveLaw::uniform(150e9, 150e9, 375.0).unwrap();
        let load = LoadProgram::dirichlet_ramp([267e-6, 0.0], 0.375).unwrap();
        Problem::new(mesh, material, adhesive, load).unwrap()
    }

    /// Opening of the slider state: x-displacement of the glued side.
    fn opening(problem: &Problem, state: &SimState) -> f64 {
        let (_, nodes, _) = problem.mesh.contact_edge_iter().next().unwrap();
        0.5 * (state.u[2 * nodes[0]] + state.u[2 * nodes[1]])
    }

    #[test]
    fn quiescent_problem_stays_at_rest() {
        let mesh = build_rect_mesh(0.1, 0.0125, 0.0125, 1, 1, MeshLayout::Slider).unwrap();
        let material = MaterialKV::new(70e9, 0.0, 6.25e-3).unwrap();
        let adhesive = AdhesiveLaw::uniform(150e9, 150e9, 375.0).unwrap();
        let load = LoadProgram::dirichlet_ramp([0.0, 0.0], 0.375).unwrap();
        let problem = Problem::new(mesh, material, adhesive, load).unwrap();
        let mut sim = Simulation::new(&problem, 0.375 / 8.0, 6.25e-3, QpOptions::default()).unwrap();
        sim.run().unwrap();
        assert!(sim.state().u.iter().all(|&v| v == 0.0));
        assert!(sim.state().z.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn inviscid_slider_tracks_static_share() {
        // chi = 0: the opening is the static share of the ramp at every step
        let problem = slider_problem(0.0);
        let mut sim = Simulation::new(&problem, 0.375 / 40.0, 0.0, QpOptions::default()).unwrap();
        let p = oracle::reference_params(0.0);
        let c = oracle::coefficients(&p);
        for _ in 0..10 {
            sim.advance().unwrap().unwrap();
            let t = sim.state().t;
            let w = opening(&problem, sim.state());
            let expect = c.gap_rate * t;
            assert!(
                (w - expect).abs() <= 1e-10 * expect,
                "t = {t}: {w} vs {expect}"
            );
        }
    }

    #[test]
    fn u_step_is_idempotent() {
        let problem = slider_problem(6.25e-3);
        let mut sim = Simulation::new(&problem, 0.375 / 40.0, 6.25e-3, QpOptions::default()).unwrap();
        sim.advance().unwrap().unwrap();
        let t_k = sim.state().t + sim.tau();
        let (u1, _, _) = sim.u_step(t_k, sim.tau()).unwrap();
        let (u2, _, _) = sim.u_step(t_k, sim.tau()).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn z_step_thresholding() {
        let problem = slider_problem(0.0);
        let ops = AssembledOperators::new(
            &problem.mesh,
            &problem.material,
            &problem.adhesive,
        )
        .unwrap();
        let n = problem.mesh.n_dofs();

        // zero displacement: z unchanged
        let (z, d, ruptured) = z_step(&vec![0.0; n], &[1.0], &ops.contact);
        assert_eq!(z, vec![1.0]);
        assert_eq!(d, vec![0.0]);
        assert!(ruptured.is_empty());

        // opening with driving energy 2 alpha: rupture
        let w = (4.0 * 375.0 / 150e9_f64).sqrt();
        let mut u = vec![0.0; n];
        for (_, nodes, _) in problem.mesh.contact_edge_iter() {
            for node in nodes {
                u[2 * node] = w;
            }
        }
        let (z, d, ruptured) = z_step(&u, &[1.0], &ops.contact);
        assert_eq!(z, vec![0.0]);
        assert!((d[0] - 750.0).abs() < 1e-9);
        assert_eq!(ruptured, vec![0]);

        // already ruptured element stays at zero without re-reporting
        let (z, _, ruptured) = z_step(&u, &[0.0], &ops.contact);
        assert_eq!(z, vec![0.0]);
        assert!(ruptured.is_empty());
    }

    #[test]
    fn slider_ruptures_within_one_step_of_the_oracle() {
        let chi = 6.25e-3;
        let problem = slider_problem(chi);
        let tau = 0.375 / 800.0;
        let mut sim = Simulation::new(&problem, tau, chi, QpOptions::default()).unwrap();
        let summary = sim.run().unwrap();
        let t_rup = oracle::rupture_time(&oracle::reference_params(chi), 1e-12).unwrap();
        let flip = summary.complete_rupture_time.expect("slider must rupture");
        assert!(
            flip >= t_rup - 1e-12 && flip <= t_rup + tau,
            "flip at {flip}, oracle {t_rup}, tau {tau}"
        );
    }

    #[test]
    fn bond_evolution_is_monotone_and_semistable() {
        let problem = slider_problem(6.25e-3);
        let mut sim = Simulation::new(&problem, 0.375 / 100.0, 6.25e-3, QpOptions::default()).unwrap();
        let mut prev_z = sim.state().z.clone();
        while let Some(report) = sim.advance().unwrap() {
            for (e, (&znew, &zold)) in report.z.iter().zip(&prev_z).enumerate() {
                assert!(znew <= zold, "element {e} rebonded");
                assert!((0.0..=1.0).contains(&znew));
                let alpha = 375.0;
                assert!(
                    report.driving[e] <= alpha * (1.0 + 1e-9) || znew == 0.0,
                    "semistability violated at step {}",
                    report.k
                );
            }
            prev_z = report.z.clone();
        }
    }

    #[test]
    fn fully_debonded_run_is_pure_contact() {
        // z = 0 from the start: no adhesive traction, free lift-off
        let problem = slider_problem(0.0);
        let mut sim = Simulation::new(&problem, 0.375 / 20.0, 0.0, QpOptions::default()).unwrap();
        sim.set_initial_bond(&[0.0]).unwrap();
        sim.run().unwrap();
        // opening follows the pull exactly: zero stress, zero reaction,
        // and the rigid translation does no work
        let r = sim.ledger().last().reaction;
        assert!(r[0].abs() < 1e-6);
        let w = opening(&problem, sim.state());
        assert!((w - 267e-6 * 0.375).abs() < 1e-12);
        assert!(sim.ledger().last().work_cum.abs() < 1e-9);
    }

    #[test]
    fn identical_runs_produce_identical_reports() {
        let problem = slider_problem(6.25e-3);
        let run = || {
            let mut sim =
                Simulation::new(&problem, 0.375 / 50.0, 6.25e-3, QpOptions::default()).unwrap();
            let mut log = Vec::new();
            while let Some(r) = sim.advance().unwrap() {
                log.push((r.k, r.t, r.u, r.z));
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn final_short_step_lands_on_horizon() {
        let problem = slider_problem(0.0);
        // tau does not divide T = 0.375
        let mut sim = Simulation::new(&problem, 0.1, 0.0, QpOptions::default()).unwrap();
        let summary = sim.run().unwrap();
        assert_eq!(summary.steps, 4);
        assert_eq!(sim.state().t, 0.375);
    }

    #[test]
    fn dirichlet_values_are_exact_after_each_step() {
        let problem = slider_problem(6.25e-3);
        let mut sim = Simulation::new(&problem, 0.375 / 16.0, 6.25e-3, QpOptions::default()).unwrap();
        while let Some(report) = sim.advance().unwrap() {
            let w = problem.load.dirichlet_value(report.t);
            for &node in &problem.mesh.dirichlet_nodes() {
                assert_eq!(report.u[2 * node], w[0]);
                assert_eq!(report.u[2 * node + 1], w[1]);
            }
        }
    }
}
