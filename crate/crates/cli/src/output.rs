//! On-disk output formats: the per-step CSV time series, legacy-ASCII
//! unstructured-grid field snapshots with a flat CSV twin, sweep tables,
//! the adaptive trace, and the provenance echo. All writers format floats
//! with 17 significant digits so identical runs produce identical bytes.

use delam_core::driver::{GateDecision, SweepRow};
use delam_core::energy::LedgerRow;
use delam_core::{BoundaryTag, Mesh2D, SliderOracle};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    let io = |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TIMESERIES_HEADER: &str = "k,t,stored_J,viscous_cum_J,adhesive_cum_J,work_cum_J,residual_J,reaction_x_N,reaction_y_N,bonded_fraction";

/// One CSV row per completed step (the k = 0 initial row is not emitted, so
/// a run of zero steps produces a header-only file).
pub fn write_timeseries(rows: &[LedgerRow], path: &Path) -> Result<(), OutputError> {
    let mut out = String::from(TIMESERIES_HEADER);
    out.push('\n');
    for row in rows.iter().filter(|r| r.k > 0) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.k,
            fmt(row.t),
            fmt(row.stored),
            fmt(row.viscous_cum),
            fmt(row.adhesive_cum),
            fmt(row.work_cum),
            fmt(row.residual),
            fmt(row.reaction[0]),
            fmt(row.reaction[1]),
            fmt(row.bonded_fraction),
        ));
    }
    write_file(path, &out)
}

/// Legacy-ASCII unstructured-grid snapshot: triangles carry the cumulative
/// dissipation density (J/m^3), contact edges appear as line cells carrying
/// the bond variable. Cells of the other kind carry -1 in each array.
pub fn write_field_snapshot(
    mesh: &Mesh2D,
    defect_density: &[f64],
    z: &[f64],
    step: usize,
    path: &Path,
) -> Result<(), OutputError> {
    let n_tri = mesh.triangles().len();
    let n_line = mesh.n_contact_edges();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&format!("delamination state at step {step}\n"));
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", mesh.n_nodes()));
    for p in mesh.nodes() {
        out.push_str(&format!("{} {} 0.0\n", fmt(p[0]), fmt(p[1])));
    }
    out.push_str(&format!(
        "CELLS {} {}\n",
        n_tri + n_line,
        4 * n_tri + 3 * n_line
    ));
    for t in mesh.triangles() {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    for (_, nodes, _) in mesh.contact_edge_iter() {
        out.push_str(&format!("2 {} {}\n", nodes[0], nodes[1]));
    }
    out.push_str(&format!("CELL_TYPES {}\n", n_tri + n_line));
    for _ in 0..n_tri {
        out.push_str("5\n");
    }
    for _ in 0..n_line {
        out.push_str("3\n");
    }
    out.push_str(&format!("CELL_DATA {}\n", n_tri + n_line));
    out.push_str("SCALARS dissipated_energy_density double 1\nLOOKUP_TABLE default\n");
    for d in defect_density {
        out.push_str(&fmt(*d));
        out.push('\n');
    }
    for _ in 0..n_line {
        out.push_str("-1\n");
    }
    out.push_str("SCALARS bond double 1\nLOOKUP_TABLE default\n");
    for _ in 0..n_tri {
        out.push_str("-1\n");
    }
    for ze in z {
        out.push_str(&fmt(*ze));
        out.push('\n');
    }
    write_file(path, &out)?;

    // flat CSV twin next to the grid file
    let csv_path = path.with_extension("csv");
    let mut csv = String::from("cell,kind,cx,cy,dissipated_energy_density_J_per_m3,bond\n");
    for (i, t) in mesh.triangles().iter().enumerate() {
        let p: Vec<[f64; 2]> = t.iter().map(|&n| mesh.nodes()[n]).collect();
        let cx = (p[0][0] + p[1][0] + p[2][0]) / 3.0;
        let cy = (p[0][1] + p[1][1] + p[2][1]) / 3.0;
        csv.push_str(&format!(
            "{i},triangle,{},{},{},\n",
            fmt(cx),
            fmt(cy),
            fmt(defect_density[i])
        ));
    }
    for (i, (e, _, _)) in mesh.contact_edge_iter().enumerate() {
        let mid = mesh.edge_midpoint(&mesh.boundary_edges()[e]);
        csv.push_str(&format!(
            "{i},contact_edge,{},{},,{}\n",
            fmt(mid[0]),
            fmt(mid[1]),
            fmt(z[i])
        ));
    }
    write_file(&csv_path, &csv)
}

/// Mesh fixture in the documented plain-text format.
pub fn write_mesh(mesh: &Mesh2D, path: &Path) -> Result<(), OutputError> {
    write_file(path, &mesh.to_text())
}

pub fn write_sweep_table(rows: &[SweepRow], path: &Path) -> Result<(), OutputError> {
    let mut out = String::from("chi,tau,residual_l1,residual_linf,error\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(row.chi),
            fmt(row.tau),
            fmt(row.residual_l1),
            fmt(row.residual_linf),
            row.error.as_deref().unwrap_or("")
        ));
    }
    write_file(path, &out)
}

pub fn write_adaptive_trace(trace: &[GateDecision], gate_c: f64, path: &Path) -> Result<(), OutputError> {
    let mut out = format!("gate_c = {}\n", fmt(gate_c));
    for d in trace {
        out.push_str(&format!(
            "chi={} tau={} l1={} gate={} decision={}\n",
            fmt(d.chi),
            fmt(d.tau),
            fmt(d.l1),
            fmt(d.gate),
            if d.accepted { "accept" } else { "halve-tau" }
        ));
    }
    write_file(path, &out)
}

/// Slider ground-truth history sampled on a uniform grid, for overlay plots.
pub fn write_oracle_history(
    oracle: &SliderOracle,
    horizon: f64,
    dt: f64,
    path: &Path,
) -> Result<(), OutputError> {
    let mut out = String::from("t,opening_m,stress_Pa,dissipation_rate_J_per_m3_s,bond\n");
    let n = (horizon / dt).round() as usize;
    for k in 0..=n {
        let t = if k == n { horizon } else { k as f64 * dt };
        let s = oracle.sample(t).expect("t within [0, horizon]");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(t),
            fmt(s.opening),
            fmt(s.stress),
            fmt(s.dissipation_rate),
            fmt(s.bond)
        ));
    }
    write_file(path, &out)
}

/// Effective configuration plus tool version, stamped into the output
/// directory for provenance.
pub fn write_config_echo(tree: &toml::Value, path: &Path) -> Result<(), OutputError> {
    let body = toml::to_string_pretty(tree).unwrap_or_else(|_| String::from("# unprintable"));
    let out = format!(
        "# delam {} effective configuration\n{body}",
        env!("CARGO_PKG_VERSION")
    );
    write_file(path, &out)
}

/// True if any boundary edge has the given tag; used for output decisions.
pub fn has_tag(mesh: &Mesh2D, tag: BoundaryTag) -> bool {
    mesh.boundary_edges().iter().any(|b| b.tag == tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use delam_core::{build_rect_mesh, MeshLayout};

    #[test]
    fn header_only_for_empty_run() {
        let dir = std::env::temp_dir().join("delam-test-out");
        let path = dir.join("empty.csv");
        write_timeseries(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{TIMESERIES_HEADER}\n"));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn snapshot_cell_counts_are_consistent() {
        let mesh = build_rect_mesh(0.25, 0.025, 0.225, 4, 1, MeshLayout::Exp2d).unwrap();
        let dir = std::env::temp_dir().join("delam-test-out");
        let path = dir.join("snap.vtk");
        let defect = vec![1.5; mesh.triangles().len()];
        let z = vec![0.5; mesh.n_contact_edges()];
        write_field_snapshot(&mesh, &defect, &z, 3, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cells = mesh.triangles().len() + mesh.n_contact_edges();
        assert!(text.contains(&format!("CELL_TYPES {cells}")));
        assert!(text.contains("SCALARS bond double 1"));
        let twin = std::fs::read_to_string(path.with_extension("csv")).unwrap();
        assert_eq!(twin.lines().count(), 1 + cells);
        std::fs::remove_file(&path).ok();
        std::fs::remove_file(path.with_extension("csv")).ok();
    }
}
