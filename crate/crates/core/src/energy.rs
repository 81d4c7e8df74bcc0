//! Energy bookkeeping: stored energy, viscous and adhesive dissipation,
//! external work through the moving Dirichlet boundary, the per-step energy
//! residual, and the per-element cumulative dissipation density that
//! approximates the defect measure.

use crate::fem::{AssembledOperators, ContactKernel, ElementKernel};
use crate::sparse::{self, Csr};

/// Per-step scalars of the energy balance.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow {
    pub k: usize,
    pub t: f64,
    /// Length of the step ending at `t`; zero on the initial row.
    pub dt: f64,
    pub stored: f64,
    pub viscous_cum: f64,
    pub adhesive_cum: f64,
    /// Trapezoidal work account.
    pub work_cum: f64,
    /// Energy residual with the trapezoidal work account: the convergence
    /// diagnostic used for the norms and the refinement gate.
    pub residual: f64,
    /// Energy residual with the work forces taken at the step end. The
    /// one-step estimate makes this account nonpositive at any step size,
    /// so it certifies the sign of the energy error.
    pub certified_residual: f64,
    pub reaction: [f64; 2],
    pub bonded_fraction: f64,
}

/// Running energy account of one simulation.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    rows: Vec<LedgerRow>,
    /// Cumulative viscous dissipation density per element, J/m^3.
    defect: Vec<f64>,
    areas: Vec<f64>,
    contact_lengths: Vec<f64>,
    alphas: Vec<f64>,
    z0: Vec<f64>,
    stored0: f64,
}

impl EnergyLedger {
    pub fn new(
        ops: &AssembledOperators,
        z0: &[f64],
        stored0: f64,
        reaction0: [f64; 2],
        bonded_fraction: f64,
    ) -> Self {
        let areas = ops.elements.iter().map(|e| e.area).collect();
        let contact_lengths = ops.contact.iter().map(|c| c.length).collect();
        let alphas = ops.contact.iter().map(|c| c.alpha).collect();
        let rows = vec![LedgerRow {
            k: 0,
            t: 0.0,
            dt: 0.0,
            stored: stored0,
            viscous_cum: 0.0,
            adhesive_cum: 0.0,
            work_cum: 0.0,
            residual: 0.0,
            certified_residual: 0.0,
            reaction: reaction0,
            bonded_fraction,
        }];
        Self {
            rows,
            defect: vec![0.0; ops.elements.len()],
            areas,
            contact_lengths,
            alphas,
            z0: z0.to_vec(),
            stored0,
        }
    }

    /// Appends the completed step k. The viscous account is recomputed from
    /// the defect field so that sum(defect * area) equals `viscous_cum`
    /// identically; the adhesive account is recomputed from z so it cannot
    /// drift.
    #[allow(clippy::too_many_arguments)]
    pub fn push_step(
        &mut self,
        t: f64,
        dt: f64,
        stored: f64,
        rate_field: &[f64],
        z: &[f64],
        work_increment: f64,
        endpoint_work_increment: f64,
        reaction: [f64; 2],
        bonded_fraction: f64,
    ) {
        let prev = *self.rows.last().expect("ledger always has the initial row");
        for (d, &r) in self.defect.iter_mut().zip(rate_field) {
            *d += r * dt;
        }
        let viscous_cum = self
            .defect
            .iter()
            .zip(&self.areas)
            .map(|(d, a)| d * a)
            .sum::<f64>();
        let adhesive_cum = self
            .alphas
            .iter()
            .zip(&self.contact_lengths)
            .zip(self.z0.iter().zip(z))
            .map(|((alpha, len), (&z0, &zk))| alpha * len * (z0 - zk))
            .sum::<f64>();
        let work_cum = prev.work_cum + work_increment;
        // residual maintained incrementally; `residual_recomputed` rebuilds
        // it from the columns
        let balance_increment = (stored - prev.stored)
            + (viscous_cum - prev.viscous_cum)
            + (adhesive_cum - prev.adhesive_cum);
        let residual = prev.residual + balance_increment - work_increment;
        let certified_residual =
            prev.certified_residual + balance_increment - endpoint_work_increment;
        self.rows.push(LedgerRow {
            k: prev.k + 1,
            t,
            dt,
            stored,
            viscous_cum,
            adhesive_cum,
            work_cum,
            residual,
            certified_residual,
            reaction,
            bonded_fraction,
        });
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn last(&self) -> &LedgerRow {
        self.rows.last().expect("ledger always has the initial row")
    }

    /// Energy residual at step k, maintained incrementally.
    pub fn residual(&self, k: usize) -> f64 {
        self.rows[k].residual
    }

    /// Energy residual at step k rebuilt from the stored columns.
    pub fn residual_recomputed(&self, k: usize) -> f64 {
        let row = &self.rows[k];
        row.stored - self.stored0 + row.viscous_cum + row.adhesive_cum - row.work_cum
    }

    /// (L1, Linf) norms of the residual over the run: the L1 norm integrates
    /// the piecewise-constant residual with the actual step lengths, the
    /// Linf norm is reported but not used for step control.
    pub fn residual_norms(&self) -> (f64, f64) {
        let mut l1 = 0.0;
        let mut linf = 0.0f64;
        for row in &self.rows {
            l1 += row.residual.abs() * row.dt;
            linf = linf.max(row.residual.abs());
        }
        (l1, linf)
    }

    /// Largest certified residual over the run; at most solver precision
    /// above zero when the accounting is intact.
    pub fn max_certified_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.certified_residual)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cumulative viscous dissipation density per element, J/m^3.
    pub fn defect_density(&self) -> &[f64] {
        &self.defect
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.areas
    }
}

/// Stored energy 1/2 u^T K u + 1/2 u^T M(z) u. The external load potential
/// is tracked separately as work.
pub fn stored_energy(u: &[f64], stiffness: &Csr, adhesive: &Csr) -> f64 {
    0.5 * sparse::quad_form(stiffness, u, u) + 0.5 * sparse::quad_form(adhesive, u, u)
}

/// Per-element viscous dissipation rate density chi C e(du/dt) : e(du/dt),
/// J/(m^3 s); constant per constant-strain triangle.
pub fn viscous_rate_field(
    u_new: &[f64],
    u_prev: &[f64],
    dt: f64,
    chi: f64,
    elements: &[ElementKernel],
    moduli: &[[f64; 3]; 3],
) -> Vec<f64> {
    assert!(dt > 0.0);
    if chi == 0.0 {
        return vec![0.0; elements.len()];
    }
    let mut out = Vec::with_capacity(elements.len());
    let inv_dt = 1.0 / dt;
    for kernel in elements {
        let mut du = [0.0; 6];
        for (i, &d) in kernel.dofs.iter().enumerate() {
            du[i] = (u_new[d] - u_prev[d]) * inv_dt;
        }
        let rate = kernel.strain(&du);
        let mut acc = 0.0;
        for r in 0..3 {
            for s in 0..3 {
                acc += rate[r] * moduli[r][s] * rate[s];
            }
        }
        out.push(chi * acc);
    }
    out
}

/// Trapezoidal work increment over one step: boundary work of the Dirichlet
/// reactions through the ramp increment plus bulk/surface load work through
/// the displacement increment. Second-order accurate, but its sign error is
/// O(tau^2) either way; the ledger uses `endpoint_work_increment` instead,
/// which keeps the energy residual nonpositive exactly.
pub fn external_work_increment(
    reaction_new: [f64; 2],
    reaction_old: [f64; 2],
    dirichlet_increment: [f64; 2],
    load_new: &[f64],
    load_old: &[f64],
    u_new: &[f64],
    u_prev: &[f64],
) -> f64 {
    let boundary = 0.5
        * ((reaction_new[0] + reaction_old[0]) * dirichlet_increment[0]
            + (reaction_new[1] + reaction_old[1]) * dirichlet_increment[1]);
    let mut volume = 0.0;
    for i in 0..u_new.len() {
        volume += 0.5 * (load_new[i] + load_old[i]) * (u_new[i] - u_prev[i]);
    }
    boundary + volume
}

/// Work increment with forces taken at the end of the step. Testing the
/// one-step equilibrium against the displacement increment shows that with
/// this pairing the energy residual picks up only nonpositive terms
/// (squared-increment dissipation, complementarity, and the rupture
/// overshoot), so it stays nonpositive to solver precision at any step
/// size.
pub fn endpoint_work_increment(
    reaction_new: [f64; 2],
    dirichlet_increment: [f64; 2],
    load_new: &[f64],
    u_new: &[f64],
    u_prev: &[f64],
) -> f64 {
    let boundary = reaction_new[0] * dirichlet_increment[0]
        + reaction_new[1] * dirichlet_increment[1];
    let mut volume = 0.0;
    for i in 0..u_new.len() {
        volume += load_new[i] * (u_new[i] - u_prev[i]);
    }
    boundary + volume
}

/// Per-element adhesive driving energies (J/m^2) at the edge midpoints.
pub fn driving_energies(contact: &[ContactKernel], u: &[f64]) -> Vec<f64> {
    contact.iter().map(|k| k.driving_energy(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::AssembledOperators;
    use crate::model::{build_rect_mesh, AdhesiveLaw, MaterialKV, MeshLayout};

    fn slider_ops() -> (crate::model::Mesh2D, AssembledOperators, MaterialKV) {
        let mesh = build_rect_mesh(0.1, 0.0125, 0.0125, 1, 1, MeshLayout::Slider).unwrap();
        let material = MaterialKV::new(70e9, 0.0, 6.25e-3).unwrap();
        let adhesive = AdhesiveLaw::uniform(150e9, 150e9, 375.0).unwrap();
        let ops = AssembledOperators::new(&mesh, &material, &adhesive).unwrap();
        (mesh, ops, material)
    }

    /// Uniaxial slider field: opening w at the glued side, end displacement
    /// w_end at the loaded side, linear in between, no vertical motion.
    fn uniaxial_field(mesh: &crate::model::Mesh2D, w: f64, w_end: f64, length: f64) -> Vec<f64> {
        let mut u = vec![0.0; mesh.n_dofs()];
        for (n, p) in mesh.nodes().iter().enumerate() {
            u[2 * n] = w + (w_end - w) * p[0] / length;
        }
        u
    }

    #[test]
    fn stored_energy_zero_and_quadratic_scaling() {
        let (mesh, ops, _) = slider_ops();
        let z = vec![1.0; mesh.n_contact_edges()];
        let m = ops.adhesive_matrix(&z).unwrap();
        let zero = vec![0.0; mesh.n_dofs()];
        assert_eq!(stored_energy(&zero, &ops.stiffness, &m), 0.0);

        let u = uniaxial_field(&mesh, 1e-5, 9e-5, 0.1);
        let e1 = stored_energy(&u, &ops.stiffness, &m);
        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let e2 = stored_energy(&u2, &ops.stiffness, &m);
        assert!((e2 - 4.0 * e1).abs() < 1e-9 * e1);
    }

    #[test]
    fn stored_energy_matches_hand_evaluation() {
        // slider at stretch: bulk 1/2 E ((w_end - w)/L)^2 * (L H), adhesive
        // 1/2 K w^2 * H per unit thickness
        let (mesh, ops, _) = slider_ops();
        let z = vec![1.0; mesh.n_contact_edges()];
        let m = ops.adhesive_matrix(&z).unwrap();
        let (l, h) = (0.1, 0.0125);
        let (w, w_end) = (2e-5, 9e-5);
        let u = uniaxial_field(&mesh, w, w_end, l);
        let expect = 0.5 * 70e9 * ((w_end - w) / l).powi(2) * (l * h) + 0.5 * 150e9 * w * w * h;
        let got = stored_energy(&u, &ops.stiffness, &m);
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn viscous_rate_zero_cases() {
        let (mesh, ops, _) = slider_ops();
        let u = uniaxial_field(&mesh, 1e-5, 9e-5, 0.1);
        let same = viscous_rate_field(&u, &u, 1e-3, 6.25e-3, &ops.elements, &ops.moduli);
        assert!(same.iter().all(|&r| r == 0.0));
        let zero = vec![0.0; mesh.n_dofs()];
        let inviscid = viscous_rate_field(&u, &zero, 1e-3, 0.0, &ops.elements, &ops.moduli);
        assert!(inviscid.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn viscous_rate_uniform_for_uniaxial_motion() {
        let (mesh, ops, _) = slider_ops();
        let u0 = uniaxial_field(&mesh, 0.0, 0.0, 0.1);
        let u1 = uniaxial_field(&mesh, 1e-6, 5e-6, 0.1);
        let dt = 1e-3;
        let chi = 6.25e-3;
        let rates = viscous_rate_field(&u1, &u0, dt, chi, &ops.elements, &ops.moduli);
        let strain_rate = (5e-6 - 1e-6) / 0.1 / dt;
        let expect = chi * 70e9 * strain_rate * strain_rate;
        for r in &rates {
            assert!((r - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn work_increment_zero_without_loading() {
        let zero_load = vec![0.0; 8];
        let w = external_work_increment(
            [0.0, 0.0],
            [0.0, 0.0],
            [1e-6, 0.0],
            &zero_load,
            &zero_load,
            &vec![1.0; 8],
            &vec![0.0; 8],
        );
        assert_eq!(w, 0.0);
    }

    #[test]
    fn ledger_accounts_are_consistent() {
        let (mesh, ops, _) = slider_ops();
        let z0 = vec![1.0; mesh.n_contact_edges()];
        let mut ledger = EnergyLedger::new(&ops, &z0, 0.0, [0.0, 0.0], 1.0);
        let rate = vec![2.0; ops.elements.len()];
        ledger.push_step(0.1, 0.1, 5.0, &rate, &z0, 1.0, 1.0, [1.0, 0.0], 1.0);
        let z1 = vec![0.0; mesh.n_contact_edges()];
        ledger.push_step(0.2, 0.1, 1.0, &rate, &z1, 2.0, 2.0, [0.5, 0.0], 0.0);

        let area: f64 = ops.elements.iter().map(|e| e.area).sum();
        let row = ledger.last();
        assert!((row.viscous_cum - 2.0 * 0.2 * area).abs() < 1e-15);
        assert!((row.adhesive_cum - 375.0 * 0.0125).abs() < 1e-12);
        assert!((row.work_cum - 3.0).abs() < 1e-15);

        // bookkeeping identity: sum(defect * area) == viscous_cum exactly
        let total: f64 = ledger
            .defect_density()
            .iter()
            .zip(ledger.element_areas())
            .map(|(d, a)| d * a)
            .sum();
        assert_eq!(total, row.viscous_cum);

        for k in 0..ledger.rows().len() {
            let inc = ledger.residual(k);
            let rec = ledger.residual_recomputed(k);
            assert!((inc - rec).abs() <= 1e-12 * rec.abs().max(1.0));
        }
    }

    #[test]
    fn residual_norm_of_constant_residual() {
        let (mesh, ops, _) = slider_ops();
        let z0 = vec![1.0; mesh.n_contact_edges()];
        let mut ledger = EnergyLedger::new(&ops, &z0, 0.0, [0.0, 0.0], 1.0);
        let rate = vec![0.0; ops.elements.len()];
        // manufacture a constant residual c = -1 via unmatched work
        let n = 10;
        let dt = 0.1;
        for k in 1..=n {
            let work = if k == 1 { 1.0 } else { 0.0 };
            ledger.push_step(k as f64 * dt, dt, 0.0, &rate, &z0, work, work, [0.0, 0.0], 1.0);
        }
        let (l1, linf) = ledger.residual_norms();
        assert!((l1 - 1.0).abs() < 1e-12); // |c| * T = 1 * 1.0
        assert!((linf - 1.0).abs() < 1e-12);
    }
}
