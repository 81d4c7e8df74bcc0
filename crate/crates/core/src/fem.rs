//! Plane-strain (optionally plane-stress) linear FEM with constant-strain
//! triangles: stiffness assembly, adhesive boundary coupling, the
//! Kelvin-Voigt one-step system, and traction/reaction recovery.

use crate::model::{AdhesiveLaw, BoundaryTag, LoadProgram, MaterialKV, Mesh2D, ModelError};
use crate::sparse::{self, Csr, SparseError, Triplets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("triangle {index} is degenerate: area {area:e} <= {tol:e} * h^2")]
    DegenerateTriangle { index: usize, area: f64, tol: f64 },
    #[error("bond vector has {got} entries, expected {expected}")]
    BondLengthMismatch { got: usize, expected: usize },
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
    #[error("relaxation time must be nonnegative, got {0}")]
    NegativeRelaxationTime(f64),
    #[error("Dirichlet part is empty; the elastic operator is singular")]
    EmptyDirichlet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

const DEGENERACY_TOL: f64 = 1e-12;

/// Voigt elastic moduli (stress = D . strain with engineering shear).
pub fn elastic_matrix(material: &MaterialKV) -> [[f64; 3]; 3] {
    let e = material.young;
    let nu = material.poisson;
    if material.plane_stress {
        let f = e / (1.0 - nu * nu);
        [
            [f, f * nu, 0.0],
            [f * nu, f, 0.0],
            [0.0, 0.0, 0.5 * f * (1.0 - nu)],
        ]
    } else {
        let f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        [
            [f * (1.0 - nu), f * nu, 0.0],
            [f * nu, f * (1.0 - nu), 0.0],
            [0.0, 0.0, 0.5 * e / (1.0 + nu)],
        ]
    }
}

/// Geometry of one triangle: strain-displacement matrix and area.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub nodes: [usize; 3],
    pub dofs: [usize; 6],
    /// 3x6 strain-displacement matrix (engineering shear row).
    pub b: [[f64; 6]; 3],
    pub area: f64,
}

impl ElementKernel {
    /// Voigt strain of an element-local displacement vector.
    pub fn strain(&self, u_e: &[f64; 6]) -> [f64; 3] {
        let mut eps = [0.0; 3];
        for r in 0..3 {
            for c in 0..6 {
                eps[r] += self.b[r][c] * u_e[c];
            }
        }
        eps
    }

    pub fn gather(&self, u: &[f64]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (i, &d) in self.dofs.iter().enumerate() {
            out[i] = u[d];
        }
        out
    }
}

pub fn element_kernels(mesh: &Mesh2D) -> Result<Vec<ElementKernel>, FemError> {
    let mut kernels = Vec::with_capacity(mesh.triangles().len());
    for (index, tri) in mesh.triangles().iter().enumerate() {
        let p: Vec<[f64; 2]> = tri.iter().map(|&n| mesh.nodes()[n]).collect();
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let h = (0..3)
            .map(|i| {
                let j = (i + 1) % 3;
                ((p[j][0] - p[i][0]).powi(2) + (p[j][1] - p[i][1]).powi(2)).sqrt()
            })
            .fold(0.0f64, f64::max);
        if area <= DEGENERACY_TOL * h * h {
            return Err(FemError::DegenerateTriangle {
                index,
                area,
                tol: DEGENERACY_TOL,
            });
        }
        let bb = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let cc = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let mut b = [[0.0; 6]; 3];
        let inv = 1.0 / (2.0 * area);
        for i in 0..3 {
            b[0][2 * i] = bb[i] * inv;
            b[1][2 * i + 1] = cc[i] * inv;
            b[2][2 * i] = cc[i] * inv;
            b[2][2 * i + 1] = bb[i] * inv;
        }
        let dofs = [
            2 * tri[0],
            2 * tri[0] + 1,
            2 * tri[1],
            2 * tri[1] + 1,
            2 * tri[2],
            2 * tri[2] + 1,
        ];
        kernels.push(ElementKernel {
            nodes: *tri,
            dofs,
            b,
            area,
        });
    }
    Ok(kernels)
}

/// 6x6 element stiffness area * B^T D B, mirrored for exact symmetry.
fn element_stiffness(kernel: &ElementKernel, d: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
    let mut ke = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in i..6 {
            let mut acc = 0.0;
            for r in 0..3 {
                for s in 0..3 {
                    acc += kernel.b[r][i] * d[r][s] * kernel.b[s][j];
                }
            }
            let v = kernel.area * acc;
            ke[i][j] = v;
            ke[j][i] = v;
        }
    }
    ke
}

/// Global elastic stiffness from the constant-strain-triangle elements.
pub fn assemble_stiffness(mesh: &Mesh2D, material: &MaterialKV) -> Result<Csr, FemError> {
    let kernels = element_kernels(mesh)?;
    let d = elastic_matrix(material);
    let mut trips = Triplets::new(mesh.n_dofs());
    for kernel in &kernels {
        let ke = element_stiffness(kernel, &d);
        for i in 0..6 {
            for j in 0..6 {
                trips.push(kernel.dofs[i], kernel.dofs[j], ke[i][j]);
            }
        }
    }
    Ok(trips.into_csr())
}

/// Geometry and material of one adhesive contact element.
#[derive(Debug, Clone)]
pub struct ContactKernel {
    /// Index into the mesh boundary edge list.
    pub boundary_edge: usize,
    pub nodes: [usize; 2],
    pub length: f64,
    /// Opening direction (unit).
    pub normal: [f64; 2],
    /// Unit tangent, normal rotated by +90 degrees.
    pub tangent: [f64; 2],
    pub k_n: f64,
    pub k_t: f64,
    pub alpha: f64,
}

impl ContactKernel {
    /// Midpoint displacement in the (normal, tangent) frame.
    pub fn midpoint_opening(&self, u: &[f64]) -> [f64; 2] {
        let a = [u[2 * self.nodes[0]], u[2 * self.nodes[0] + 1]];
        let b = [u[2 * self.nodes[1]], u[2 * self.nodes[1] + 1]];
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        [
            m[0] * self.normal[0] + m[1] * self.normal[1],
            m[0] * self.tangent[0] + m[1] * self.tangent[1],
        ]
    }

    /// Driving energy density for delamination, J/m^2, at the edge midpoint.
    pub fn driving_energy(&self, u: &[f64]) -> f64 {
        let [un, ut] = self.midpoint_opening(u);
        0.5 * (self.k_n * un * un + self.k_t * ut * ut)
    }
}

pub fn contact_kernels(mesh: &Mesh2D, adhesive: &AdhesiveLaw) -> Result<Vec<ContactKernel>, FemError> {
    adhesive.validate(mesh.n_contact_edges())?;
    let mut kernels = Vec::with_capacity(mesh.n_contact_edges());
    for (i, (edge, nodes, normal)) in mesh.contact_edge_iter().enumerate() {
        let length = mesh.edge_length(&mesh.boundary_edges()[edge]);
        kernels.push(ContactKernel {
            boundary_edge: edge,
            nodes,
            length,
            normal,
            tangent: [-normal[1], normal[0]],
            k_n: adhesive.k_n.get(i),
            k_t: adhesive.k_t.get(i),
            alpha: adhesive.alpha.get(i),
        });
    }
    Ok(kernels)
}

/// Adhesive boundary matrix: exact per-edge integration of
/// z (K_n (u.n)(v.n) + K_t (u.t)(v.t)) over each contact edge.
pub fn assemble_adhesive_kernels(
    kernels: &[ContactKernel],
    z: &[f64],
    n_dofs: usize,
) -> Result<Csr, FemError> {
    if z.len() != kernels.len() {
        return Err(FemError::BondLengthMismatch {
            got: z.len(),
            expected: kernels.len(),
        });
    }
    let mut trips = Triplets::new(n_dofs);
    for (kernel, &ze) in kernels.iter().zip(z) {
        if ze == 0.0 {
            continue;
        }
        // 2x2 traction map in global components.
        let mut p = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                p[a][b] = kernel.k_n * kernel.normal[a] * kernel.normal[b]
                    + kernel.k_t * kernel.tangent[a] * kernel.tangent[b];
            }
        }
        // Affine interpolation on the edge: weights 1/3 diagonal, 1/6 cross.
        let w = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                let scale = ze * kernel.length * w[i][j];
                for a in 0..2 {
                    for b in 0..2 {
                        trips.push(
                            2 * kernel.nodes[i] + a,
                            2 * kernel.nodes[j] + b,
                            scale * p[a][b],
                        );
                    }
                }
            }
        }
    }
    Ok(trips.into_csr())
}

pub fn assemble_adhesive(mesh: &Mesh2D, adhesive: &AdhesiveLaw, z: &[f64]) -> Result<Csr, FemError> {
    let kernels = contact_kernels(mesh, adhesive)?;
    assemble_adhesive_kernels(&kernels, z, mesh.n_dofs())
}

/// Node/component to index map with the Dirichlet partition.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_dofs: usize,
    pub dirichlet_nodes: Vec<usize>,
    pub is_dirichlet: Vec<bool>,
}

impl DofMap {
    pub fn from_mesh(mesh: &Mesh2D) -> Result<Self, FemError> {
        let dirichlet_nodes = mesh.dirichlet_nodes();
        if dirichlet_nodes.is_empty() {
            return Err(FemError::EmptyDirichlet);
        }
        Ok(Self::with_dirichlet_nodes(mesh.n_dofs(), dirichlet_nodes))
    }

    pub fn with_dirichlet_nodes(n_dofs: usize, dirichlet_nodes: Vec<usize>) -> Self {
        let mut is_dirichlet = vec![false; n_dofs];
        for &n in &dirichlet_nodes {
            is_dirichlet[2 * n] = true;
            is_dirichlet[2 * n + 1] = true;
        }
        Self {
            n_dofs,
            dirichlet_nodes,
            is_dirichlet,
        }
    }
}

/// Everything assembled once per problem: elastic stiffness, element and
/// contact kernels, moduli, and the DOF partition.
pub struct AssembledOperators {
    pub stiffness: Csr,
    pub dof_map: DofMap,
    pub elements: Vec<ElementKernel>,
    pub contact: Vec<ContactKernel>,
    pub moduli: [[f64; 3]; 3],
    pub n_dofs: usize,
}

impl AssembledOperators {
    pub fn new(
        mesh: &Mesh2D,
        material: &MaterialKV,
        adhesive: &AdhesiveLaw,
    ) -> Result<Self, FemError> {
        let elements = element_kernels(mesh)?;
        let contact = contact_kernels(mesh, adhesive)?;
        let moduli = elastic_matrix(material);
        let mut trips = Triplets::new(mesh.n_dofs());
        for kernel in &elements {
            let ke = element_stiffness(kernel, &moduli);
            for i in 0..6 {
                for j in 0..6 {
                    trips.push(kernel.dofs[i], kernel.dofs[j], ke[i][j]);
                }
            }
        }
        Ok(Self {
            stiffness: trips.into_csr(),
            dof_map: DofMap::from_mesh(mesh)?,
            elements,
            contact,
            moduli,
            n_dofs: mesh.n_dofs(),
        })
    }

    pub fn adhesive_matrix(&self, z: &[f64]) -> Result<Csr, FemError> {
        assemble_adhesive_kernels(&self.contact, z, self.n_dofs)
    }

    /// Consistent load vector of the constant bulk force and Neumann traction.
    pub fn load_vector(&self, mesh: &Mesh2D, load: &LoadProgram) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dofs];
        let f = load.bulk_force;
        if f != [0.0, 0.0] {
            for kernel in &self.elements {
                let share = kernel.area / 3.0;
                for &n in &kernel.nodes {
                    b[2 * n] += share * f[0];
                    b[2 * n + 1] += share * f[1];
                }
            }
        }
        let g = load.surface_force;
        if g != [0.0, 0.0] {
            for edge in mesh.boundary_edges() {
                if edge.tag != BoundaryTag::Neumann {
                    continue;
                }
                let share = 0.5 * mesh.edge_length(edge);
                for &n in &edge.nodes {
                    b[2 * n] += share * g[0];
                    b[2 * n + 1] += share * g[1];
                }
            }
        }
        b
    }
}

/// The one-step linear operator of the semi-implicit scheme, before the
/// unilateral constraint is applied: for time step tau and relaxation time
/// chi the u-step quadratic has matrix (1 + chi/tau) K + M(z_prev) and
/// right-hand side b(t_k) + (chi/tau) K u_prev, with u = w_D(t_k) on the
/// Dirichlet part. chi = 0 reduces to the static elastic system.
pub struct KvSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    /// Prescribed value for every DOF flagged in `dirichlet_mask`.
    pub dirichlet_values: Vec<f64>,
    pub dirichlet_mask: Vec<bool>,
    pub tau: f64,
    pub chi: f64,
}

pub fn kv_substituted_system(
    ops: &AssembledOperators,
    m_adh: &Csr,
    load_vector: &[f64],
    u_prev: &[f64],
    tau: f64,
    chi: f64,
    t_k: f64,
    load: &LoadProgram,
) -> Result<KvSystem, FemError> {
    if !(tau > 0.0) {
        return Err(FemError::NonPositiveTimeStep(tau));
    }
    if !(chi >= 0.0) {
        return Err(FemError::NegativeRelaxationTime(chi));
    }
    let ratio = chi / tau;
    let matrix = sparse::add_scaled(1.0 + ratio, &ops.stiffness, m_adh);
    let mut rhs = load_vector.to_vec();
    if ratio != 0.0 {
        let ku = sparse::matvec(&ops.stiffness, u_prev);
        for (r, k) in rhs.iter_mut().zip(&ku) {
            *r += ratio * k;
        }
    }
    let w = load.dirichlet_value(t_k);
    let mut dirichlet_values = vec![0.0; ops.n_dofs];
    for &n in &ops.dof_map.dirichlet_nodes {
        dirichlet_values[2 * n] = w[0];
        dirichlet_values[2 * n + 1] = w[1];
    }
    Ok(KvSystem {
        matrix,
        rhs,
        dirichlet_values,
        dirichlet_mask: ops.dof_map.is_dirichlet.clone(),
        tau,
        chi,
    })
}

/// Reactions on the Dirichlet part: residual of the unconstrained one-step
/// equilibrium restricted to Dirichlet DOFs. Sign convention: force exerted
/// by the support on the body.
#[derive(Debug, Clone)]
pub struct Reactions {
    pub per_node: Vec<(usize, [f64; 2])>,
    pub total: [f64; 2],
}

pub fn reaction_forces(system: &KvSystem, ops: &AssembledOperators, u: &[f64]) -> Reactions {
    let au = sparse::matvec(&system.matrix, u);
    let mut per_node = Vec::with_capacity(ops.dof_map.dirichlet_nodes.len());
    let mut total = [0.0, 0.0];
    for &n in &ops.dof_map.dirichlet_nodes {
        let r = [
            au[2 * n] - system.rhs[2 * n],
            au[2 * n + 1] - system.rhs[2 * n + 1],
        ];
        total[0] += r[0];
        total[1] += r[1];
        per_node.push((n, r));
    }
    Reactions { per_node, total }
}

/// Adhesive tractions per contact element, evaluated at the edge midpoint:
/// (z K_n u.n, z K_t u.t).
pub fn contact_tractions(ops: &AssembledOperators, u: &[f64], z: &[f64]) -> Vec<[f64; 2]> {
    ops.contact
        .iter()
        .zip(z)
        .map(|(kernel, &ze)| {
            let [un, ut] = kernel.midpoint_opening(u);
            [ze * kernel.k_n * un, ze * kernel.k_t * ut]
        })
        .collect()
}

/// Solves `matrix u = rhs` with the given values pinned, eliminating the
/// constrained rows and columns symmetrically.
pub fn solve_constrained(
    matrix: &Csr,
    rhs: &[f64],
    constrained: &[(usize, f64)],
) -> Result<Vec<f64>, FemError> {
    let n = matrix.rows();
    let mut keep = vec![true; n];
    let mut values = vec![0.0; n];
    for &(dof, v) in constrained {
        keep[dof] = false;
        values[dof] = v;
    }
    let (reduced, kept) = sparse::restrict(matrix, &keep);
    let coupling = sparse::matvec(matrix, &values);
    let reduced_rhs: Vec<f64> = kept.iter().map(|&i| rhs[i] - coupling[i]).collect();
    let solver = sparse::SpdSolver::new(&reduced)?;
    let x = solver.solve(&reduced_rhs)?;
    let mut full = values;
    for (new, &old) in kept.iter().enumerate() {
        full[old] = x[new];
    }
    Ok(full)
}
