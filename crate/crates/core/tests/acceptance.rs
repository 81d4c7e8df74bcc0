//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantities. Tolerances are pinned here
//! and are not calibration knobs.

use delam_core::*;
use std::sync::OnceLock;

const HORIZON: f64 = 0.375;
const RUPTURE_TIME_LIMIT: f64 = 0.322;
const DEFECT_DENSITY_LIMIT: f64 = 803.5714285714286;

fn slider_problem() -> Problem {
    let mesh = build_rect_mesh(0.1, 0.0125, 0.0125, 1, 1, MeshLayout::Slider).unwrap();
    let material = MaterialKV::new(70e9, 0.0, 6.25e-3).unwrap();
    let adhesive = AdhesiveLaw::uniform(150e9, 150e9, 375.0).unwrap();
    let load = LoadProgram::dirichlet_ramp([267e-6, 0.0], HORIZON).unwrap();
    Problem::new(mesh, material, adhesive, load).unwrap()
}

fn exp2d_problem() -> Problem {
    let mesh = build_rect_mesh(0.25, 0.025, 0.225, 50, 5, MeshLayout::Exp2d).unwrap();
    let material = MaterialKV::new(70e9, 0.35, 0.01).unwrap();
    let adhesive = AdhesiveLaw::uniform(150e9, 75e9, 187.5).unwrap();
    let load = LoadProgram::dirichlet_ramp([333.3e-6, 0.0], 1.5).unwrap();
    Problem::new(mesh, material, adhesive, load).unwrap()
}

/// Vanishing-viscosity run shared by criteria 1 and 2: viscosity halved
/// from 25 ms down to 0.195 ms under the L1 residual gate. The gate
/// constant is set so that the accepted time step at the final viscosity
/// keeps the one-step dissipation deficit (~tau / 2 chi) below the 0.5%
/// defect tolerance.
fn adaptive_outcome() -> &'static AdaptiveOutcome {
    static OUTCOME: OnceLock<AdaptiveOutcome> = OnceLock::new();
    OUTCOME.get_or_init(|| {
        let problem = slider_problem();
        let cfg = DriverConfig {
            chi0: 25e-3,
            tau0: HORIZON / 25.0,
            chi_final: 0.2e-3,
            gate_c: Some(1.6),
            gamma: 1.0,
            max_tau_halvings: 40,
        };
        run_adaptive(&cfg, &problem, QpOptions::default()).unwrap()
    })
}

fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}

#[test]
fn criterion_1_slider_rupture_time() {
    let out = adaptive_outcome();
    let last = out.accepted.last().expect("adaptive path produced runs");
    assert!(last.chi <= 0.2e-3);
    let rupture = last
        .complete_rupture_time
        .expect("slider ruptures before the horizon");
    let err = rel_err(rupture, RUPTURE_TIME_LIMIT);
    assert!(
        err <= 0.01,
        "ACCEPTANCE 1 slider-rupture-time: FAIL (t_rup = {rupture:.6}, err {:.3}%)",
        err * 100.0
    );
    println!(
        "ACCEPTANCE 1 slider-rupture-time: PASS (chi_final = {:.3e} s, t_rup = {rupture:.6} s vs {RUPTURE_TIME_LIMIT} s, err {:.3}% <= 1%)",
        last.chi,
        err * 100.0
    );
}

#[test]
fn criterion_2_defect_measure_magnitude() {
    let out = adaptive_outcome();
    let last = out.accepted.last().unwrap();
    let areas = last.ledger.element_areas();
    let total_area: f64 = areas.iter().sum();
    let density = last
        .defect_density
        .iter()
        .zip(areas)
        .map(|(d, a)| d * a)
        .sum::<f64>()
        / total_area;
    let err = rel_err(density, DEFECT_DENSITY_LIMIT);
    assert!(
        err <= 0.005,
        "ACCEPTANCE 2 defect-magnitude: FAIL (density = {density:.3} J/m^3, err {:.3}%)",
        err * 100.0
    );
    println!(
        "ACCEPTANCE 2 defect-magnitude: PASS (density = {density:.3} J/m^3 vs {DEFECT_DENSITY_LIMIT:.3}, err {:.3}% <= 0.5% at chi = {:.3e} s, tau = T/{:.0})",
        err * 100.0,
        last.chi,
        HORIZON / last.tau
    );
}

#[test]
fn criterion_3_residual_decays_with_time_step() {
    let problem = slider_problem();
    let chi = 6.25e-3;
    let l1_coarse = {
        let mut sim = Simulation::new(&problem, HORIZON / 25.0, chi, QpOptions::default()).unwrap();
        sim.run().unwrap().residual_l1
    };
    let l1_fine = {
        let mut sim =
            Simulation::new(&problem, HORIZON / 800.0, chi, QpOptions::default()).unwrap();
        sim.run().unwrap().residual_l1
    };
    let ratio = l1_coarse / l1_fine;
    assert!(
        ratio >= 4.0,
        "ACCEPTANCE 3 residual-convergence: FAIL (ratio {ratio:.2})"
    );
    println!(
        "ACCEPTANCE 3 residual-convergence: PASS (|E|_L1: T/25 = {l1_coarse:.3e}, T/800 = {l1_fine:.3e}, ratio {ratio:.1} >= 4)"
    );
}

#[test]
fn criterion_4_inviscid_residual_stagnates() {
    let problem = slider_problem();
    let l1_coarse = {
        let mut sim = Simulation::new(&problem, HORIZON / 25.0, 0.0, QpOptions::default()).unwrap();
        sim.run().unwrap().residual_l1
    };
    let l1_fine = {
        let mut sim =
            Simulation::new(&problem, HORIZON / 800.0, 0.0, QpOptions::default()).unwrap();
        sim.run().unwrap().residual_l1
    };
    let ratio = l1_fine / l1_coarse;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "ACCEPTANCE 4 inviscid-stagnation: FAIL (ratio {ratio:.2})"
    );
    println!(
        "ACCEPTANCE 4 inviscid-stagnation: PASS (|E|_L1: T/25 = {l1_coarse:.3e}, T/800 = {l1_fine:.3e}, ratio {ratio:.2} within 2x)"
    );
}

#[test]
fn criterion_5_monotone_rupture_times() {
    let mut prev = 0.0;
    let mut values = Vec::new();
    for chi in [25e-3, 12.5e-3, 6.25e-3, 3.125e-3] {
        let p = oracle::reference_params(chi);
        let t = oracle::rupture_time(&p, 1e-12).unwrap();
        let limit = oracle::rupture_time_limit(&p);
        assert!(
            t > prev && t < limit,
            "ACCEPTANCE 5 monotone-rupture-times: FAIL at chi = {chi} (t = {t})"
        );
        values.push(t);
        prev = t;
    }
    println!(
        "ACCEPTANCE 5 monotone-rupture-times: PASS ({:?} strictly increasing, all below {:.6})",
        values,
        oracle::rupture_time_limit(&oracle::reference_params(0.0))
    );
}

#[test]
fn criterion_6_histories_match_oracle() {
    let chi = 6.25e-3;
    let tau = HORIZON / 3200.0;
    let problem = slider_problem();
    let oracle = SliderOracle::new(oracle::reference_params(chi)).unwrap();
    let mut sim = Simulation::new(&problem, tau, chi, QpOptions::default()).unwrap();
    let (_, nodes, _) = problem.mesh.contact_edge_iter().next().unwrap();
    let window_end = oracle.rupture_time - 2.0 * tau;
    let height = 0.0125;

    let mut w_sup: f64 = 0.0;
    let mut s_sup: f64 = 0.0;
    let mut w_err: f64 = 0.0;
    let mut s_err: f64 = 0.0;
    while let Some(report) = sim.advance().unwrap() {
        if report.t > window_end {
            break;
        }
        let sample = oracle.sample(report.t).unwrap();
        let w_sim = 0.5 * (report.u[2 * nodes[0]] + report.u[2 * nodes[1]]);
        let s_sim = sim.ledger().last().reaction[0] / height;
        w_sup = w_sup.max(sample.opening.abs());
        s_sup = s_sup.max(sample.stress.abs());
        w_err = w_err.max((w_sim - sample.opening).abs());
        s_err = s_err.max((s_sim - sample.stress).abs());
    }
    let (w_rel, s_rel) = (w_err / w_sup, s_err / s_sup);
    assert!(
        w_rel <= 1e-3 && s_rel <= 1e-3,
        "ACCEPTANCE 6 oracle-histories: FAIL (w {w_rel:.2e}, sigma {s_rel:.2e})"
    );
    println!(
        "ACCEPTANCE 6 oracle-histories: PASS (max rel err over [0, t_rup - 2 tau]: w {w_rel:.2e}, sigma {s_rel:.2e}, both <= 1e-3)"
    );
}

#[test]
fn criterion_7_exp2d_horizontal_delamination() {
    let problem = exp2d_problem();
    let mut sim = Simulation::new(&problem, 5e-3, 0.01, QpOptions::default()).unwrap();
    assert_eq!(sim.n_steps(), 300);
    let alpha = 187.5;
    let mut complete_at = None;
    let mut first_peak_x: Option<f64> = None;
    let mut last_peak_x: Option<f64> = None;
    let contact_mid_x: Vec<f64> = problem
        .mesh
        .contact_edge_iter()
        .map(|(e, _, _)| problem.mesh.edge_midpoint(&problem.mesh.boundary_edges()[e])[0])
        .collect();

    while let Some(report) = sim.advance().unwrap() {
        // ruptured set must stay a contiguous suffix in x order
        if let Some(first_zero) = report.z.iter().position(|&z| z == 0.0) {
            assert!(
                report.z[first_zero..].iter().all(|&z| z == 0.0),
                "ACCEPTANCE 7 exp2d: FAIL (non-suffix rupture pattern at step {})",
                report.k
            );
        }
        // discrete semistability after every step
        for (e, (&z, &d)) in report.z.iter().zip(&report.driving).enumerate() {
            assert!(
                d <= alpha * (1.0 + 1e-9) || z == 0.0,
                "ACCEPTANCE 7 exp2d: FAIL (semistability violated at step {}, element {e})",
                report.k
            );
        }
        // location of the strongest adhesive traction while partially bonded
        let bonded = report.z.iter().filter(|&&z| z > 0.0).count();
        if bonded > 0 && bonded < report.z.len() {
            let tractions =
                fem::contact_tractions(sim.operators(), &report.u, &report.z);
            let peak = tractions
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    let na = (a.1[0] * a.1[0] + a.1[1] * a.1[1]).sqrt();
                    let nb = (b.1[0] * b.1[0] + b.1[1] * b.1[1]).sqrt();
                    na.partial_cmp(&nb).unwrap()
                })
                .map(|(e, _)| contact_mid_x[e])
                .unwrap();
            if first_peak_x.is_none() {
                first_peak_x = Some(peak);
            }
            last_peak_x = Some(peak);
        }
        if complete_at.is_none() && report.z.iter().all(|&z| z == 0.0) {
            complete_at = Some(report.t);
        }
    }
    let complete_at = complete_at.expect("ACCEPTANCE 7 exp2d: FAIL (no complete delamination)");
    assert!(complete_at < 1.5);
    // traction peak migrates toward the far (left) end as the front advances
    let (x0, x1) = (first_peak_x.unwrap(), last_peak_x.unwrap());
    assert!(
        x1 < x0,
        "ACCEPTANCE 7 exp2d: FAIL (traction peak did not migrate left: {x0} -> {x1})"
    );
    // localization report (not asserted): is the dissipated energy
    // concentrated next to the contact surface or spread through the bulk?
    let defect = sim.ledger().defect_density();
    let mut max_all: f64 = 0.0;
    let mut max_near_contact: f64 = 0.0;
    let mut half_sums = [0.0f64; 2]; // area-weighted, left and right half
    let mut half_areas = [0.0f64; 2];
    for (e, kernel) in sim.operators().elements.iter().enumerate() {
        let touches_contact = kernel
            .nodes
            .iter()
            .any(|&n| problem.mesh.nodes()[n][1] == 0.0);
        max_all = max_all.max(defect[e]);
        if touches_contact {
            max_near_contact = max_near_contact.max(defect[e]);
        }
        let cx = kernel
            .nodes
            .iter()
            .map(|&n| problem.mesh.nodes()[n][0])
            .sum::<f64>()
            / 3.0;
        let half = usize::from(cx > 0.125);
        half_sums[half] += defect[e] * kernel.area;
        half_areas[half] += kernel.area;
    }
    // the stretched right-hand part dissipates more
    let mean_left = half_sums[0] / half_areas[0];
    let mean_right = half_sums[1] / half_areas[1];
    assert!(
        mean_right > mean_left,
        "ACCEPTANCE 7 exp2d: FAIL (dissipation not biased to the loaded side: {mean_left} vs {mean_right})"
    );
    println!(
        "ACCEPTANCE 7 exp2d-horizontal: PASS (complete at t = {complete_at} s < 1.5 s, right-to-left suffix rupture, semistable every step, traction peak {x0:.3} m -> {x1:.3} m; dissipation max {max_all:.1} J/m^3 vs {max_near_contact:.1} next to the interface -> {} localized at the interface; half means left {mean_left:.1} / right {mean_right:.1} J/m^3)",
        if max_near_contact < max_all { "NOT" } else { "possibly" }
    );
}

#[test]
fn criterion_8_property_suite() {
    // z-monotonicity, complementarity, and ledger identities on a slider run
    let problem = slider_problem();
    let mut sim = Simulation::new(&problem, HORIZON / 200.0, 6.25e-3, QpOptions::default()).unwrap();
    let mut prev_z = sim.state().z.clone();
    while let Some(report) = sim.advance().unwrap() {
        for (&znew, &zold) in report.z.iter().zip(&prev_z) {
            assert!(znew <= zold && (0.0..=1.0).contains(&znew));
        }
        prev_z = report.z.clone();
        let kkt = sim.last_kkt().unwrap();
        assert!(kkt.complementarity <= 1e-8 * kkt_scale_bound(&sim));
        assert!(kkt.primal_violation >= -1e-9 * opening_scale(&sim));
    }
    let ledger = sim.ledger();
    for k in 0..ledger.rows().len() {
        let inc = ledger.residual(k);
        let rec = ledger.residual_recomputed(k);
        assert!(
            (inc - rec).abs() <= 1e-12 * rec.abs().max(1.0),
            "ledger identity failed at k = {k}"
        );
    }
    let total: f64 = ledger
        .defect_density()
        .iter()
        .zip(ledger.element_areas())
        .map(|(d, a)| d * a)
        .sum();
    assert_eq!(total, ledger.last().viscous_cum, "bookkeeping exactness");

    // the certified energy residual never goes positive beyond solver noise
    let scale_e = ledger
        .rows()
        .iter()
        .fold(1.0f64, |m, r| m.max(r.stored.abs()));
    assert!(
        ledger.max_certified_residual() <= 1e-8 * scale_e,
        "energy residual sign certificate violated: {:e}",
        ledger.max_certified_residual()
    );

    // stiffness rigid-body kernel
    let mesh = build_rect_mesh(0.25, 0.025, 0.225, 8, 3, MeshLayout::Exp2d).unwrap();
    let material = MaterialKV::new(70e9, 0.35, 0.0).unwrap();
    let k = fem::assemble_stiffness(&mesh, &material).unwrap();
    let scale: f64 = k.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = mesh.n_nodes();
    let mut modes = vec![vec![0.0; 2 * n]; 3];
    for i in 0..n {
        let p = mesh.nodes()[i];
        modes[0][2 * i] = 1.0;
        modes[1][2 * i + 1] = 1.0;
        modes[2][2 * i] = -p[1];
        modes[2][2 * i + 1] = p[0];
    }
    for mode in &modes {
        let r = sparse::matvec(&k, mode);
        assert!(r.iter().all(|v| v.abs() < 1e-10 * scale), "rigid kernel");
    }

    // patch test to 1e-10
    let affine = |p: [f64; 2]| [2e-4 * p[0] - 5e-5 * p[1], 7e-5 * p[0] + 1e-4 * p[1]];
    let mut constrained = Vec::new();
    let mut boundary = std::collections::BTreeSet::new();
    for be in mesh.boundary_edges() {
        boundary.insert(be.nodes[0]);
        boundary.insert(be.nodes[1]);
    }
    for &node in &boundary {
        let v = affine(mesh.nodes()[node]);
        constrained.push((2 * node, v[0]));
        constrained.push((2 * node + 1, v[1]));
    }
    let rhs = vec![0.0; mesh.n_dofs()];
    let u = fem::solve_constrained(&k, &rhs, &constrained).unwrap();
    let uscale = 2e-4 * 0.25;
    for (node, p) in mesh.nodes().iter().enumerate() {
        let v = affine(*p);
        assert!((u[2 * node] - v[0]).abs() <= 1e-10 * uscale, "patch test");
        assert!((u[2 * node + 1] - v[1]).abs() <= 1e-10 * uscale, "patch test");
    }

    // QP variational inequality against 100 random feasible directions
    variational_inequality_probe();

    println!(
        "ACCEPTANCE 8 property-suite: PASS (z-monotone, complementarity <= 1e-8 scale, ledger identity <= 1e-12, bookkeeping exact, rigid kernel, patch test 1e-10, variational inequality x100)"
    );
}

fn kkt_scale_bound(sim: &Simulation) -> f64 {
    let h_max = sim
        .operators()
        .stiffness
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let x_max = sim.state().u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (h_max * x_max * x_max).max(1.0)
}

fn opening_scale(sim: &Simulation) -> f64 {
    sim.state().u.iter().fold(1e-9f64, |m, v| m.max(v.abs()))
}

fn variational_inequality_probe() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);

    let problem = exp2d_problem();
    let mut sim = Simulation::new(&problem, 5e-3, 0.01, QpOptions::default()).unwrap();
    for _ in 0..60 {
        sim.advance().unwrap();
    }
    // rebuild the step QP at the current state through the public API
    let ops = sim.operators();
    let m = ops.adhesive_matrix(&sim.state().z).unwrap();
    let b = ops.load_vector(&problem.mesh, &problem.load);
    let t_k = sim.state().t + 5e-3;
    let sys = fem::kv_substituted_system(
        ops,
        &m,
        &b,
        &sim.state().u,
        5e-3,
        0.01,
        t_k,
        &problem.load,
    )
    .unwrap();
    let qp_problem = qp::rotate_contact_dofs(&problem.mesh, &sys).unwrap();
    let sol = qp::solve_qp(&qp_problem, 1e-10, None, 100).unwrap();

    // (H x + c) . (v - x) >= -tol ||v - x|| for feasible v
    let mut grad = sparse::matvec(&qp_problem.h, &sol.x);
    for (g, c) in grad.iter_mut().zip(&qp_problem.c) {
        *g += c;
    }
    let scale = qp_problem
        .h
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        * sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let x_norm = sol.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..100 {
        let mut v: Vec<f64> = sol
            .x
            .iter()
            .map(|&xi| xi + rng.random_range(-1.0..1.0) * 1e-3 * x_norm)
            .collect();
        for &i in &qp_problem.bound_dofs {
            v[i] = v[i].abs();
        }
        let diff: Vec<f64> = v.iter().zip(&sol.x).map(|(a, b)| a - b).collect();
        let inner: f64 = grad.iter().zip(&diff).map(|(g, d)| g * d).sum();
        let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(
            inner >= -1e-10 * scale.max(1.0) * norm,
            "variational inequality violated: {inner:e}"
        );
    }
}

#[test]
fn criterion_9_inviscid_force_response_match() {
    let problem = slider_problem();
    let tau = HORIZON / 25.0;
    let mut histories: Vec<Vec<f64>> = Vec::new();
    let mut ruptures = Vec::new();
    for chi in [0.0, 3.125e-3] {
        let mut sim = Simulation::new(&problem, tau, chi, QpOptions::default()).unwrap();
        let summary = sim.run().unwrap();
        ruptures.push(summary.complete_rupture_time.unwrap());
        histories.push(sim.ledger().rows().iter().map(|r| r.reaction[0]).collect());
    }
    let window_lo = ruptures.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * tau;
    let window_hi = ruptures.iter().cloned().fold(0.0f64, f64::max) + 2.0 * tau;
    let peak = histories[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for k in 0..histories[0].len() {
        let t = k as f64 * tau;
        if t > window_lo && t < window_hi {
            continue;
        }
        let denom = histories[0][k].abs().max(1e-3 * peak);
        worst = worst.max((histories[0][k] - histories[1][k]).abs() / denom);
    }
    assert!(
        worst <= 0.05,
        "ACCEPTANCE 9 inviscid-force-match: FAIL (max rel dev {worst:.3})"
    );
    println!(
        "ACCEPTANCE 9 inviscid-force-match: PASS (chi = 0 vs 3.125 ms, max rel deviation {:.2}% <= 5% outside [{:.4}, {:.4}] s; energy mismatch shown by criterion 4)",
        worst * 100.0,
        window_lo,
        window_hi
    );
}
