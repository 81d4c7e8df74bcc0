//! Domain types shared by all modules: geometry, material, adhesive law,
//! loading program, and simulation state.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("geometry dimension must be positive, got {0}")]
    NonPositiveDimension(f64),
    #[error("contact length {contact} exceeds body length {length}")]
    ContactTooLong { contact: f64, length: f64 },
    #[error("slider layout requires contact_length = height ({contact} vs {height})")]
    SliderContactMismatch { contact: f64, height: f64 },
    #[error("grid subdivision counts must be at least 1")]
    EmptyGrid,
    #[error("triangle {0} has non-positive signed area {1:e}")]
    DegenerateTriangle(usize, f64),
    #[error("boundary edge ({0}, {1}) is not an edge of the triangulation boundary")]
    NotABoundaryEdge(usize, usize),
    #[error("boundary tags do not cover triangulation boundary edge ({0}, {1})")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("contact and Dirichlet boundaries share node {0}")]
    ContactTouchesDirichlet(usize),
    #[error("contact normal {0:?} is not a unit vector")]
    NonUnitNormal([f64; 2]),
    #[error("contact normal count {normals} does not match contact edge count {edges}")]
    NormalCountMismatch { normals: usize, edges: usize },
    #[error("material: Young modulus must be positive, got {0}")]
    NonPositiveYoung(f64),
    #[error("material: Poisson ratio must lie in [0, 0.5), got {0}")]
    PoissonOutOfRange(f64),
    #[error("material: relaxation time must be nonnegative, got {0}")]
    NegativeRelaxationTime(f64),
    #[error("adhesive: {name} must be positive, got {value}")]
    NonPositiveAdhesive { name: &'static str, value: f64 },
    #[error("adhesive: per-element field {name} has {got} values, expected {expected}")]
    AdhesiveLengthMismatch {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("load program: horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("bond value {0} outside [0, 1]")]
    BondOutOfRange(f64),
    #[error("mesh text format: {0}")]
    Format(String),
}

/// Role of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Contact,
    Free,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::Dirichlet => "DIRICHLET",
            BoundaryTag::Neumann => "NEUMANN",
            BoundaryTag::Contact => "CONTACT",
            BoundaryTag::Free => "FREE",
        };
        write!(f, "{s}")
    }
}

impl BoundaryTag {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "DIRICHLET" => Some(BoundaryTag::Dirichlet),
            "NEUMANN" => Some(BoundaryTag::Neumann),
            "CONTACT" => Some(BoundaryTag::Contact),
            "FREE" => Some(BoundaryTag::Free),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Planar triangulation with tagged boundary parts.
///
/// `contact_normals` stores, per CONTACT edge, the unit normal of the contact
/// plane oriented from the rigid obstacle into the body, i.e. the direction in
/// which the adhesive gap opens. The unilateral constraint is u . n >= 0 in
/// this orientation.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Indices into `boundary_edges` carrying the CONTACT tag, in build order.
    contact_edges: Vec<usize>,
    contact_normals: Vec<[f64; 2]>,
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

impl Mesh2D {
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        contact_normals: Vec<[f64; 2]>,
    ) -> Result<Self, ModelError> {
        for (t, tri) in triangles.iter().enumerate() {
            let a = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if a <= 0.0 {
                return Err(ModelError::DegenerateTriangle(t, a));
            }
        }

        // The tagged edges must partition the triangulation boundary.
        let mut edge_count = std::collections::HashMap::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0usize) += 1;
            }
        }
        let mut boundary_set: std::collections::HashSet<(usize, usize)> = edge_count
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&k, _)| k)
            .collect();
        for be in &boundary_edges {
            let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
            if !boundary_set.remove(&key) {
                return Err(ModelError::NotABoundaryEdge(be.nodes[0], be.nodes[1]));
            }
        }
        if let Some(&(a, b)) = boundary_set.iter().next() {
            return Err(ModelError::UntaggedBoundaryEdge(a, b));
        }

        // Contact and Dirichlet parts must not touch.
        let mut dirichlet_nodes = std::collections::HashSet::new();
        for be in &boundary_edges {
            if be.tag == BoundaryTag::Dirichlet {
                dirichlet_nodes.insert(be.nodes[0]);
                dirichlet_nodes.insert(be.nodes[1]);
            }
        }
        let contact_edges: Vec<usize> = boundary_edges
            .iter()
            .enumerate()
            .filter(|(_, be)| be.tag == BoundaryTag::Contact)
            .map(|(i, _)| i)
            .collect();
        for &e in &contact_edges {
            for &n in &boundary_edges[e].nodes {
                if dirichlet_nodes.contains(&n) {
                    return Err(ModelError::ContactTouchesDirichlet(n));
                }
            }
        }

        if contact_normals.len() != contact_edges.len() {
            return Err(ModelError::NormalCountMismatch {
                normals: contact_normals.len(),
                edges: contact_edges.len(),
            });
        }
        for n in &contact_normals {
            let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
            if (len - 1.0).abs() > 1e-12 {
                return Err(ModelError::NonUnitNormal(*n));
            }
        }

        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
            contact_edges,
            contact_normals,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_contact_edges(&self) -> usize {
        self.contact_edges.len()
    }

    /// Contact edges in build order: (boundary edge index, node pair, opening normal).
    pub fn contact_edge_iter(&self) -> impl Iterator<Item = (usize, [usize; 2], [f64; 2])> + '_ {
        self.contact_edges
            .iter()
            .zip(&self.contact_normals)
            .map(|(&e, &n)| (e, self.boundary_edges[e].nodes, n))
    }

    pub fn edge_length(&self, edge: &BoundaryEdge) -> f64 {
        let a = self.nodes[edge.nodes[0]];
        let b = self.nodes[edge.nodes[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn edge_midpoint(&self, edge: &BoundaryEdge) -> [f64; 2] {
        let a = self.nodes[edge.nodes[0]];
        let b = self.nodes[edge.nodes[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let tri = self.triangles[t];
        signed_area(self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]])
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        let mut set = std::collections::BTreeSet::new();
        for be in &self.boundary_edges {
            if be.tag == BoundaryTag::Dirichlet {
                set.insert(be.nodes[0]);
                set.insert(be.nodes[1]);
            }
        }
        set.into_iter().collect()
    }

    /// Contact nodes with their opening normals, deduplicated in ascending
    /// node order. Nodes shared by two contact edges must carry the same
    /// normal; the caller decides how to treat conflicts.
    pub fn contact_nodes(&self) -> Vec<(usize, Vec<[f64; 2]>)> {
        let mut map: std::collections::BTreeMap<usize, Vec<[f64; 2]>> =
            std::collections::BTreeMap::new();
        for (_, nodes, normal) in self.contact_edge_iter() {
            for n in nodes {
                map.entry(n).or_default().push(normal);
            }
        }
        map.into_iter().collect()
    }

    /// Plain-text serialization used for regression fixtures.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("delam mesh v1\n");
        s.push_str(&format!("nodes {}\n", self.nodes.len()));
        for p in &self.nodes {
            s.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1]));
        }
        s.push_str(&format!("triangles {}\n", self.triangles.len()));
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s.push_str(&format!("edges {}\n", self.boundary_edges.len()));
        let mut contact_seq = 0usize;
        for be in &self.boundary_edges {
            if be.tag == BoundaryTag::Contact {
                let n = self.contact_normals[contact_seq];
                contact_seq += 1;
                s.push_str(&format!(
                    "{} {} {} {:.17e} {:.17e}\n",
                    be.nodes[0], be.nodes[1], be.tag, n[0], n[1]
                ));
            } else {
                s.push_str(&format!("{} {} {}\n", be.nodes[0], be.nodes[1], be.tag));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines();
        let bad = |m: &str| ModelError::Format(m.to_string());
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        if header.trim() != "delam mesh v1" {
            return Err(bad("missing 'delam mesh v1' header"));
        }
        fn section_count(line: Option<&str>, name: &str) -> Result<usize, ModelError> {
            let line = line.ok_or_else(|| ModelError::Format(format!("missing {name} section")))?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next()) {
                (Some(n), Some(c)) if n == name => c
                    .parse()
                    .map_err(|_| ModelError::Format(format!("bad {name} count"))),
                _ => Err(ModelError::Format(format!("expected '{name} <count>'"))),
            }
        }
        let n_nodes = section_count(lines.next(), "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| bad("truncated node list"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad node coordinate")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 2 {
                return Err(bad("node line must have two coordinates"));
            }
            nodes.push([vals[0], vals[1]]);
        }
        let n_tri = section_count(lines.next(), "triangles")?;
        let mut triangles = Vec::with_capacity(n_tri);
        for _ in 0..n_tri {
            let line = lines.next().ok_or_else(|| bad("truncated triangle list"))?;
            let vals: Vec<usize> = line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad triangle index")))
                .collect::<Result<_, _>>()?;
            if vals.len() != 3 {
                return Err(bad("triangle line must have three indices"));
            }
            triangles.push([vals[0], vals[1], vals[2]]);
        }
        let n_edges = section_count(lines.next(), "edges")?;
        let mut boundary_edges = Vec::with_capacity(n_edges);
        let mut normals = Vec::new();
        for _ in 0..n_edges {
            let line = lines.next().ok_or_else(|| bad("truncated edge list"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 3 {
                return Err(bad("edge line must have two indices and a tag"));
            }
            let a: usize = parts[0].parse().map_err(|_| bad("bad edge index"))?;
            let b: usize = parts[1].parse().map_err(|_| bad("bad edge index"))?;
            let tag = BoundaryTag::parse(parts[2]).ok_or_else(|| bad("unknown edge tag"))?;
            if tag == BoundaryTag::Contact {
                if parts.len() != 5 {
                    return Err(bad("contact edge line must carry a normal"));
                }
                let nx: f64 = parts[3].parse().map_err(|_| bad("bad normal"))?;
                let ny: f64 = parts[4].parse().map_err(|_| bad("bad normal"))?;
                normals.push([nx, ny]);
            }
            boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
        }
        Mesh2D::new(nodes, triangles, boundary_edges, normals)
    }
}

/// Which experiment geometry a rectangular mesh realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshLayout {
    /// Adhesive over the full left side, Dirichlet loading on the right side.
    Slider,
    /// Adhesive on the leading bottom segment, Dirichlet on the right side.
    Exp2d,
}

/// Structured triangulation of a `length x height` rectangle with `nx x ny`
/// cells, each split into two triangles. Node ordering is column-major so
/// identical inputs yield bit-identical meshes.
pub fn build_rect_mesh(
    length: f64,
    height: f64,
    contact_length: f64,
    nx: usize,
    ny: usize,
    layout: MeshLayout,
) -> Result<Mesh2D, ModelError> {
    for &d in &[length, height, contact_length] {
        if !(d > 0.0) {
            return Err(ModelError::NonPositiveDimension(d));
        }
    }
    if contact_length > length {
        return Err(ModelError::ContactTooLong {
            contact: contact_length,
            length,
        });
    }
    if nx == 0 || ny == 0 {
        return Err(ModelError::EmptyGrid);
    }
    if layout == MeshLayout::Slider && (contact_length - height).abs() > 1e-12 * height {
        return Err(ModelError::SliderContactMismatch {
            contact: contact_length,
            height,
        });
    }

    let dx = length / nx as f64;
    let dy = height / ny as f64;
    let id = |ix: usize, iy: usize| ix * (ny + 1) + iy;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for ix in 0..=nx {
        for iy in 0..=ny {
            nodes.push([ix as f64 * dx, iy as f64 * dy]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let (n00, n10) = (id(ix, iy), id(ix + 1, iy));
            let (n01, n11) = (id(ix, iy + 1), id(ix + 1, iy + 1));
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }

    let mut boundary_edges = Vec::new();
    let mut normals = Vec::new();
    let tol = 1e-9 * length;

    // Bottom, right, top, left in that order.
    for ix in 0..nx {
        let tag = match layout {
            MeshLayout::Exp2d if (ix + 1) as f64 * dx <= contact_length + tol => {
                normals.push([0.0, 1.0]);
                BoundaryTag::Contact
            }
            _ => BoundaryTag::Neumann,
        };
        boundary_edges.push(BoundaryEdge {
            nodes: [id(ix, 0), id(ix + 1, 0)],
            tag,
        });
    }
    for iy in 0..ny {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(nx, iy), id(nx, iy + 1)],
            tag: BoundaryTag::Dirichlet,
        });
    }
    for ix in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(ix + 1, ny), id(ix, ny)],
            tag: BoundaryTag::Neumann,
        });
    }
    for iy in (0..ny).rev() {
        let tag = match layout {
            MeshLayout::Slider => {
                normals.push([1.0, 0.0]);
                BoundaryTag::Contact
            }
            MeshLayout::Exp2d => BoundaryTag::Neumann,
        };
        boundary_edges.push(BoundaryEdge {
            nodes: [id(0, iy + 1), id(0, iy)],
            tag,
        });
    }

    Mesh2D::new(nodes, triangles, boundary_edges, normals)
}

/// Isotropic Kelvin-Voigt material: elastic moduli from (E, nu), viscous
/// moduli are chi times the elastic ones.
#[derive(Debug, Clone, Copy)]
pub struct MaterialKV {
    pub young: f64,
    pub poisson: f64,
    /// Relaxation time, seconds; zero gives the purely elastic material.
    pub chi: f64,
    pub plane_stress: bool,
}

impl MaterialKV {
    pub fn new(young: f64, poisson: f64, chi: f64) -> Result<Self, ModelError> {
        if !(young > 0.0) {
            return Err(ModelError::NonPositiveYoung(young));
        }
        if !(0.0..0.5).contains(&poisson) {
            return Err(ModelError::PoissonOutOfRange(poisson));
        }
        if !(chi >= 0.0) {
            return Err(ModelError::NegativeRelaxationTime(chi));
        }
        Ok(Self {
            young,
            poisson,
            chi,
            plane_stress: false,
        })
    }

    pub fn with_plane_stress(mut self, plane_stress: bool) -> Self {
        self.plane_stress = plane_stress;
        self
    }
}

/// Uniform or per-contact-element scalar parameter.
#[derive(Debug, Clone)]
pub enum ElementField {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl ElementField {
    pub fn get(&self, e: usize) -> f64 {
        match self {
            ElementField::Uniform(v) => *v,
            ElementField::PerElement(v) => v[e],
        }
    }

    fn validate(
        &self,
        name: &'static str,
        n_elements: usize,
        positive: bool,
    ) -> Result<(), ModelError> {
        let check = |v: f64| {
            if positive && !(v > 0.0) {
                Err(ModelError::NonPositiveAdhesive { name, value: v })
            } else {
                Ok(())
            }
        };
        match self {
            ElementField::Uniform(v) => check(*v),
            ElementField::PerElement(vals) => {
                if vals.len() != n_elements {
                    return Err(ModelError::AdhesiveLengthMismatch {
                        name,
                        got: vals.len(),
                        expected: n_elements,
                    });
                }
                vals.iter().try_for_each(|&v| check(v))
            }
        }
    }
}

/// Interface stiffness (normal, tangential) and fracture toughness, each
/// optionally varying per contact element.
#[derive(Debug, Clone)]
pub struct AdhesiveLaw {
    pub k_n: ElementField,
    pub k_t: ElementField,
    pub alpha: ElementField,
}

impl AdhesiveLaw {
    pub fn uniform(k_n: f64, k_t: f64, alpha: f64) -> Result<Self, ModelError> {
        let law = Self {
            k_n: ElementField::Uniform(k_n),
            k_t: ElementField::Uniform(k_t),
            alpha: ElementField::Uniform(alpha),
        };
        law.validate(1)?;
        Ok(law)
    }

    pub fn validate(&self, n_contact_elements: usize) -> Result<(), ModelError> {
        self.k_n.validate("k_n", n_contact_elements, true)?;
        self.k_t.validate("k_t", n_contact_elements, true)?;
        self.alpha.validate("alpha", n_contact_elements, true)
    }
}

/// Time-dependent loading: hard displacement ramp w_D(t) = v_D t on the
/// Dirichlet part plus constant bulk and surface force densities.
#[derive(Debug, Clone, Copy)]
pub struct LoadProgram {
    /// Dirichlet ramp velocity, m/s.
    pub dirichlet_velocity: [f64; 2],
    /// Constant body force density on the domain, N/m^3 (may be zero).
    pub bulk_force: [f64; 2],
    /// Constant traction on the Neumann part, N/m^2 (may be zero).
    pub surface_force: [f64; 2],
    /// Time horizon T, seconds.
    pub horizon: f64,
}

impl LoadProgram {
    pub fn dirichlet_ramp(velocity: [f64; 2], horizon: f64) -> Result<Self, ModelError> {
        if !(horizon > 0.0) {
            return Err(ModelError::NonPositiveHorizon(horizon));
        }
        Ok(Self {
            dirichlet_velocity: velocity,
            bulk_force: [0.0, 0.0],
            surface_force: [0.0, 0.0],
            horizon,
        })
    }

    /// Prescribed boundary displacement at time t; w_D(0) = 0.
    pub fn dirichlet_value(&self, t: f64) -> [f64; 2] {
        [self.dirichlet_velocity[0] * t, self.dirichlet_velocity[1] * t]
    }
}

/// Evolving simulation state; everything else is immutable after setup.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    /// Nodal displacements, interleaved (x0, y0, x1, y1, ...).
    pub u: Vec<f64>,
    /// Displacements at the previous accepted step.
    pub u_prev: Vec<f64>,
    /// Per-contact-element delamination variable in [0, 1].
    pub z: Vec<f64>,
}

impl SimState {
    /// Fully bonded zero-displacement state at t = 0.
    pub fn initial(mesh: &Mesh2D) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; mesh.n_dofs()],
            u_prev: vec![0.0; mesh.n_dofs()],
            z: vec![1.0; mesh.n_contact_edges()],
        }
    }

    pub fn bonded_fraction(&self, mesh: &Mesh2D) -> f64 {
        let mut total = 0.0;
        let mut bonded = 0.0;
        for (i, (e, _, _)) in mesh.contact_edge_iter().enumerate() {
            let len = mesh.edge_length(&mesh.boundary_edges()[e]);
            total += len;
            bonded += len * self.z[i];
        }
        if total == 0.0 {
            0.0
        } else {
            bonded / total
        }
    }
}

/// A reported defect of an initial state, from `validate_initial_state`.
#[derive(Debug, Clone, PartialEq)]
pub enum StateViolation {
    /// z outside [0, 1] on a contact element.
    BondOutOfRange { element: usize, z: f64 },
    /// Negative opening u . n at a contact node.
    Penetration { node: usize, gap: f64 },
    /// Driving energy exceeds the threshold while the element is still bonded.
    NotSemistable {
        element: usize,
        driving: f64,
        threshold: f64,
    },
    /// z vector length does not match the contact element count.
    BondLengthMismatch { got: usize, expected: usize },
}

impl fmt::Display for StateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateViolation::BondOutOfRange { element, z } => {
                write!(f, "element {element}: z = {z} outside [0, 1]")
            }
            StateViolation::Penetration { node, gap } => {
                write!(f, "node {node}: contact opening {gap:e} is negative")
            }
            StateViolation::NotSemistable {
                element,
                driving,
                threshold,
            } => write!(
                f,
                "element {element}: K u.u = {driving:e} exceeds 2 alpha = {threshold:e} with z > 0"
            ),
            StateViolation::BondLengthMismatch { got, expected } => {
                write!(f, "z has {got} entries, expected {expected}")
            }
        }
    }
}

/// Diagnostic check of an initial state: nonnegative opening, z within
/// bounds, and per-element semistability. Returns all violations found.
pub fn validate_initial_state(
    state: &SimState,
    mesh: &Mesh2D,
    adhesive: &AdhesiveLaw,
) -> Vec<StateViolation> {
    let mut out = Vec::new();
    if state.z.len() != mesh.n_contact_edges() {
        out.push(StateViolation::BondLengthMismatch {
            got: state.z.len(),
            expected: mesh.n_contact_edges(),
        });
        return out;
    }
    for (i, &z) in state.z.iter().enumerate() {
        if !(0.0..=1.0).contains(&z) {
            out.push(StateViolation::BondOutOfRange { element: i, z });
        }
    }
    for (node, normals) in mesh.contact_nodes() {
        let u = [state.u[2 * node], state.u[2 * node + 1]];
        for n in normals {
            let gap = u[0] * n[0] + u[1] * n[1];
            if gap < 0.0 {
                out.push(StateViolation::Penetration { node, gap });
                break;
            }
        }
    }
    for (i, (e, nodes, normal)) in mesh.contact_edge_iter().enumerate() {
        let _ = e;
        let ua = [state.u[2 * nodes[0]], state.u[2 * nodes[0] + 1]];
        let ub = [state.u[2 * nodes[1]], state.u[2 * nodes[1] + 1]];
        let um = [0.5 * (ua[0] + ub[0]), 0.5 * (ua[1] + ub[1])];
        let tangent = [-normal[1], normal[0]];
        let un = um[0] * normal[0] + um[1] * normal[1];
        let ut = um[0] * tangent[0] + um[1] * tangent[1];
        let driving = adhesive.k_n.get(i) * un * un + adhesive.k_t.get(i) * ut * ut;
        let threshold = 2.0 * adhesive.alpha.get(i);
        if driving > threshold && state.z[i] > 0.0 {
            out.push(StateViolation::NotSemistable {
                element: i,
                driving,
                threshold,
            });
        }
    }
    out
}
