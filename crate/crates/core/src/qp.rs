//! Bound-constrained convex QP for the displacement step: contact DOFs are
//! rotated into their (normal, tangent) frame so the unilateral constraint
//! u.n >= 0 becomes a simple lower bound, then a primal-dual active-set
//! iteration solves the KKT system with finite termination.

use crate::fem::KvSystem;
use crate::model::Mesh2D;
use crate::sparse::{self, Csr, SparseError, Triplets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("contact node {node} carries conflicting normals {a:?} and {b:?}; only flat contact boundaries are supported")]
    ConflictingNormals {
        node: usize,
        a: [f64; 2],
        b: [f64; 2],
    },
    #[error("active-set iteration exceeded {max_iterations} changes; last iterate had {active} active bounds, primal violation {primal:e}, dual violation {dual:e}")]
    IterationCap {
        max_iterations: usize,
        active: usize,
        primal: f64,
        dual: f64,
    },
    #[error("converged point violates KKT beyond tolerance: stationarity {stationarity:e} > {allowed:e}")]
    KktViolation { stationarity: f64, allowed: f64 },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Per-node 2x2 rotation taking global components to (normal, tangent).
#[derive(Debug, Clone, Copy)]
struct NodeFrame {
    node: usize,
    /// Rows of the rotation: first the normal, then the tangent.
    q: [[f64; 2]; 2],
}

/// Bound-constrained QP in reduced (Dirichlet-eliminated, contact-rotated)
/// coordinates: minimize 1/2 x^T H x + c^T x subject to x_i >= 0 on
/// `bound_dofs`.
pub struct QpProblem {
    pub h: Csr,
    pub c: Vec<f64>,
    /// Reduced indices carrying the lower bound 0 (rotated normal components).
    pub bound_dofs: Vec<usize>,
    /// Kept global DOF per reduced index.
    kept: Vec<usize>,
    /// Full-length prescribed values on eliminated DOFs.
    dirichlet_values: Vec<f64>,
    frames: Vec<NodeFrame>,
    n_dofs: usize,
}

fn node_frames(mesh: &Mesh2D) -> Result<Vec<NodeFrame>, QpError> {
    let mut frames = Vec::new();
    for (node, normals) in mesh.contact_nodes() {
        let first = normals[0];
        for other in &normals[1..] {
            let misfit = (first[0] - other[0]).abs() + (first[1] - other[1]).abs();
            if misfit > 1e-12 {
                return Err(QpError::ConflictingNormals {
                    node,
                    a: first,
                    b: *other,
                });
            }
        }
        frames.push(NodeFrame {
            node,
            q: [[first[0], first[1]], [-first[1], first[0]]],
        });
    }
    Ok(frames)
}

/// Applies the per-node frames to a full-length vector (global -> rotated).
fn rotate_vec(frames: &[NodeFrame], v: &mut [f64]) {
    for f in frames {
        let x = v[2 * f.node];
        let y = v[2 * f.node + 1];
        v[2 * f.node] = f.q[0][0] * x + f.q[0][1] * y;
        v[2 * f.node + 1] = f.q[1][0] * x + f.q[1][1] * y;
    }
}

/// Inverse transform (rotated -> global); the frames are orthonormal.
fn unrotate_vec(frames: &[NodeFrame], v: &mut [f64]) {
    for f in frames {
        let n = v[2 * f.node];
        let t = v[2 * f.node + 1];
        v[2 * f.node] = f.q[0][0] * n + f.q[1][0] * t;
        v[2 * f.node + 1] = f.q[0][1] * n + f.q[1][1] * t;
    }
}

/// Conjugation H -> R H R^T by the block-diagonal contact rotation. Entries
/// touching non-contact nodes pass through unchanged, so the transform is
/// exact for axis-aligned normals.
fn rotate_matrix(frames: &[NodeFrame], h: &Csr) -> Csr {
    let n = h.rows();
    let mut frame_of_node: Vec<Option<usize>> = vec![None; n / 2];
    for (i, f) in frames.iter().enumerate() {
        frame_of_node[f.node] = Some(i);
    }
    let mut trips = Triplets::new(n);
    for (row, vec) in h.outer_iterator().enumerate() {
        let (rn, ra) = (row / 2, row % 2);
        let rframe = frame_of_node[rn].map(|i| frames[i].q);
        for (col, &v) in vec.iter() {
            let (cn, cb) = (col / 2, col % 2);
            let cframe = frame_of_node[cn].map(|i| frames[i].q);
            match (rframe, cframe) {
                (None, None) => trips.push(row, col, v),
                (Some(qr), None) => {
                    for alpha in 0..2 {
                        let w = qr[alpha][ra];
                        if w != 0.0 {
                            trips.push(2 * rn + alpha, col, w * v);
                        }
                    }
                }
                (None, Some(qc)) => {
                    for beta in 0..2 {
                        let w = qc[beta][cb];
                        if w != 0.0 {
                            trips.push(row, 2 * cn + beta, w * v);
                        }
                    }
                }
                (Some(qr), Some(qc)) => {
                    for alpha in 0..2 {
                        for beta in 0..2 {
                            let w = qr[alpha][ra] * qc[beta][cb];
                            if w != 0.0 {
                                trips.push(2 * rn + alpha, 2 * cn + beta, w * v);
                            }
                        }
                    }
                }
            }
        }
    }
    trips.into_csr()
}

/// Builds the bound-constrained QP from the one-step linear system:
/// rotates contact DOFs, eliminates Dirichlet DOFs, and records the
/// recovery data. Only flat contact boundaries (one normal per node) are
/// supported.
pub fn rotate_contact_dofs(mesh: &Mesh2D, system: &KvSystem) -> Result<QpProblem, QpError> {
    let frames = node_frames(mesh)?;
    let n = system.matrix.rows();

    let h_rot = rotate_matrix(&frames, &system.matrix);
    let mut rhs_rot = system.rhs.clone();
    rotate_vec(&frames, &mut rhs_rot);

    // Dirichlet nodes are disjoint from contact nodes, so their prescribed
    // values are unaffected by the rotation.
    let keep: Vec<bool> = system.dirichlet_mask.iter().map(|d| !d).collect();
    let (h_red, kept) = sparse::restrict(&h_rot, &keep);
    let coupling = sparse::matvec(&h_rot, &system.dirichlet_values);
    // minimize 1/2 x^T H x + c^T x  with  c = H_fd u_d - rhs_f
    let c: Vec<f64> = kept
        .iter()
        .map(|&i| coupling[i] - rhs_rot[i])
        .collect();

    let mut reduced_of_global = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        reduced_of_global[old] = new;
    }
    let bound_dofs: Vec<usize> = frames
        .iter()
        .map(|f| reduced_of_global[2 * f.node])
        .collect();

    Ok(QpProblem {
        h: h_red,
        c,
        bound_dofs,
        kept,
        dirichlet_values: system.dirichlet_values.clone(),
        frames,
        n_dofs: n,
    })
}

impl QpProblem {
    /// Expands a reduced solution back to a full global-frame vector,
    /// restoring prescribed Dirichlet values.
    pub fn recover_full(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.dirichlet_values.clone();
        for (new, &old) in self.kept.iter().enumerate() {
            full[old] = x[new];
        }
        unrotate_vec(&self.frames, &mut full);
        full
    }

    pub fn n_reduced(&self) -> usize {
        self.kept.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy)]
pub struct KktDiagnostics {
    /// Most negative bound value min_i x_i (0 if no bounds).
    pub primal_violation: f64,
    /// Most negative multiplier min_i lambda_i (0 if no bounds).
    pub dual_violation: f64,
    /// Largest |x_i lambda_i| over the bounds.
    pub complementarity: f64,
    /// Largest |(H x + c)_i| over unbounded DOFs.
    pub stationarity: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Reduced rotated solution.
    pub x: Vec<f64>,
    /// Multipliers on the bound DOFs (same indexing as `x`).
    pub multipliers: Vec<f64>,
    /// Reduced indices of the active bounds at the solution.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub kkt: KktDiagnostics,
}

/// Primal-dual active-set solve of the bound-constrained QP. Warm start
/// with the previous step's active set; the iteration terminates when the
/// active set repeats, which for strictly convex problems is finite.
pub fn solve_qp(
    problem: &QpProblem,
    tol: f64,
    warm_start: Option<&[usize]>,
    max_iterations: usize,
) -> Result<QpSolution, QpError> {
    let n = problem.c.len();
    let mut is_bound = vec![false; n];
    for &i in &problem.bound_dofs {
        is_bound[i] = true;
    }
    let mut active = vec![false; n];
    if let Some(ws) = warm_start {
        for &i in ws {
            if i < n && is_bound[i] {
                active[i] = true;
            }
        }
    }

    let h_scale = problem.h.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c_scale = problem.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut x = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        // Solve with the active DOFs pinned to the bound.
        let mut keep: Vec<bool> = active.iter().map(|a| !a).collect();
        if n == 0 {
            keep.clear();
        }
        let (h_red, kept) = sparse::restrict(&problem.h, &keep);
        let rhs: Vec<f64> = kept.iter().map(|&i| -problem.c[i]).collect();
        let solver = sparse::SpdSolver::new(&h_red)?;
        let sol = solver.solve(&rhs)?;
        x.iter_mut().for_each(|v| *v = 0.0);
        for (new, &old) in kept.iter().enumerate() {
            x[old] = sol[new];
        }
        // Multipliers on the active set from the full gradient.
        let grad = {
            let mut g = sparse::matvec(&problem.h, &x);
            for (gi, ci) in g.iter_mut().zip(&problem.c) {
                *gi += ci;
            }
            g
        };
        lambda.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            if active[i] {
                lambda[i] = grad[i];
            }
        }

        // Scaled thresholds keep roundoff-level multipliers from releasing
        // a marginally active bound (and re-activating it next iteration);
        // the returned KKT point then satisfies x >= -eps_x, lambda >= -eps_l.
        let x_scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eps_x = tol.max(1e-14) * x_scale;
        let eps_l = tol.max(1e-14) * (h_scale * x_scale + c_scale);
        let mut changed = false;
        for &i in &problem.bound_dofs {
            let next = if active[i] {
                lambda[i] > -eps_l
            } else {
                x[i] < -eps_x
            };
            if next != active[i] {
                active[i] = next;
                changed = true;
            }
        }
        if !changed {
            let kkt = kkt_diagnostics(problem, &x, &lambda, &is_bound);
            let scale = kkt_scale(problem, &x);
            let allowed = tol.max(1e-14) * scale;
            if kkt.stationarity > allowed {
                return Err(QpError::KktViolation {
                    stationarity: kkt.stationarity,
                    allowed,
                });
            }
            let active_set: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
            return Ok(QpSolution {
                x,
                multipliers: lambda,
                active_set,
                iterations,
                kkt,
            });
        }
        if iterations >= max_iterations {
            let kkt = kkt_diagnostics(problem, &x, &lambda, &is_bound);
            return Err(QpError::IterationCap {
                max_iterations,
                active: active.iter().filter(|&&a| a).count(),
                primal: kkt.primal_violation,
                dual: kkt.dual_violation,
            });
        }
    }
}

/// Magnitude against which KKT residuals are judged.
fn kkt_scale(problem: &QpProblem, x: &[f64]) -> f64 {
    let h_max = problem.h.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let x_max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c_max = problem.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (h_max * x_max + c_max).max(1.0)
}

fn kkt_diagnostics(
    problem: &QpProblem,
    x: &[f64],
    lambda: &[f64],
    is_bound: &[bool],
) -> KktDiagnostics {
    let mut grad = sparse::matvec(&problem.h, x);
    for (gi, ci) in grad.iter_mut().zip(&problem.c) {
        *gi += ci;
    }
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;
    let mut stat = 0.0f64;
    for i in 0..x.len() {
        if is_bound[i] {
            primal = primal.min(x[i]);
            dual = dual.min(lambda[i]);
            comp = comp.max((x[i] * lambda[i]).abs());
            stat = stat.max((grad[i] - lambda[i]).abs());
        } else {
            stat = stat.max(grad[i].abs());
        }
    }
    KktDiagnostics {
        primal_violation: primal,
        dual_violation: dual,
        complementarity: comp,
        stationarity: stat,
    }
}
