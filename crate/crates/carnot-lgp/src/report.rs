//! CSV and JSON artifact writers. Output is byte-stable for identical
//! config and seed: fixed column orders, shortest-roundtrip float
//! formatting, no timestamps.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::domain::{DiscreteDomain, Tag};
use crate::error::Result;
use crate::kernel::WalkKernel;
use crate::limit::zeta::ZetaField;
use crate::limit::SweepEntry;
use crate::solver::{CertificateReport, DualField, NonlocalProblem, SolveReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Neighborhoods, halos and diagnostics all use the box distance; this note
/// is echoed in every report.
pub const DISTANCE_NOTE: &str =
    "all neighborhoods and halos use the box (homogeneous max) distance, not the \
     Carnot-Caratheodory distance";

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

pub fn write_points_csv(dir: &Path, dom: &DiscreteDomain) -> Result<()> {
    let n = dom.dim();
    let mut out = String::from("index");
    for k in 0..n {
        out.push_str(&format!(",x{}", k + 1));
    }
    out.push_str(",tag,measure\n");
    for id in 0..dom.n_points() as u32 {
        out.push_str(&id.to_string());
        for k in 0..n {
            out.push(',');
            out.push_str(&dom.coord(id, k).to_string());
        }
        let tag = match dom.tags[id as usize] {
            Tag::Interior => "interior",
            Tag::Halo => "halo",
        };
        out.push_str(&format!(",{tag},{}\n", dom.cell_measure));
    }
    write_file(&dir.join("points.csv"), &out)
}

pub fn write_edges_csv(dir: &Path, kernel: &WalkKernel) -> Result<()> {
    let mut out = String::from("src,dst,weight\n");
    for r in 0..kernel.n_rows() {
        let src = kernel.row_points[r];
        for e in kernel.row(r) {
            out.push_str(&format!("{src},{},{}\n", e.dst, e.weight));
        }
    }
    write_file(&dir.join("edges.csv"), &out)
}

pub fn write_solution_csv(dir: &Path, dom: &DiscreteDomain, u: &[f64]) -> Result<()> {
    let n = dom.dim();
    let mut out = String::from("index");
    for k in 0..n {
        out.push_str(&format!(",x{}", k + 1));
    }
    out.push_str(",u\n");
    for (slot, &id) in dom.interior_ids.iter().enumerate() {
        out.push_str(&id.to_string());
        for k in 0..n {
            out.push(',');
            out.push_str(&dom.coord(id, k).to_string());
        }
        out.push_str(&format!(",{}\n", u[slot]));
    }
    write_file(&dir.join("solution.csv"), &out)
}

pub fn write_dual_csv(dir: &Path, problem: &NonlocalProblem, dual: &DualField) -> Result<()> {
    let mut out = String::from("src,dst,g\n");
    for (e, &g) in problem.edges.iter().zip(&dual.g) {
        out.push_str(&format!("{},{},{g}\n", e.a, e.b));
    }
    write_file(&dir.join("dual.csv"), &out)
}

pub fn write_zeta_csv(dir: &Path, dom: &DiscreteDomain, zeta: &ZetaField) -> Result<()> {
    let n = dom.dim();
    let mut out = String::from("index");
    for k in 0..n {
        out.push_str(&format!(",x{}", k + 1));
    }
    for j in 0..zeta.m {
        out.push_str(&format!(",zeta{}", j + 1));
    }
    out.push('\n');
    for (slot, &id) in dom.interior_ids.iter().enumerate() {
        out.push_str(&id.to_string());
        for k in 0..n {
            out.push(',');
            out.push_str(&dom.coord(id, k).to_string());
        }
        for &z in zeta.at(slot) {
            out.push(',');
            out.push_str(&z.to_string());
        }
        out.push('\n');
    }
    write_file(&dir.join("zeta.csv"), &out)
}

pub fn write_sweep_csv(dir: &Path, entries: &[SweepEntry]) -> Result<()> {
    let mut out = String::from(
        "eps,h,n_interior,n_rows,energy,rescaled_energy,relative_gap,max_row_residual,\
         max_sign_residual,m_eps,l1_distance,converged\n",
    );
    for e in entries {
        let l1 = e.l1_distance.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            e.eps,
            e.h,
            e.n_interior,
            e.n_rows,
            e.energy,
            e.rescaled_energy,
            e.relative_gap,
            e.max_row_residual,
            e.max_sign_residual,
            e.m_eps,
            l1,
            e.converged
        ));
    }
    write_file(&dir.join("sweep.csv"), &out)
}

#[derive(Serialize)]
pub struct SolveArtifact<'a> {
    pub run_id: String,
    pub tool_version: &'static str,
    pub distance_note: &'static str,
    pub group: String,
    pub eps: f64,
    pub h: f64,
    pub n_points: usize,
    pub n_interior: usize,
    pub n_kernel_rows: usize,
    pub n_edges: usize,
    pub energy: f64,
    pub solve: &'a SolveReport,
    pub certificate: &'a CertificateReport,
    pub config: BTreeMap<String, String>,
}

pub fn write_report_json(dir: &Path, artifact: &SolveArtifact) -> Result<()> {
    let json = serde_json::to_string_pretty(artifact)
        .map_err(|e| crate::error::Error::Numerical(format!("serialization failed: {e}")))?;
    write_file(&dir.join("report.json"), &format!("{json}\n"))
}

pub fn resolved_config(config: &RunConfig) -> BTreeMap<String, String> {
    config.resolved()
}

/// A fixed-width oracle comparison table, also written as CSV.
pub fn write_oracle_csv(dir: &Path, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut out = String::from("method,energy,rel_diff_vs_primal_dual\n");
    for (name, energy, rel) in rows {
        out.push_str(&format!("{name},{energy},{rel}\n"));
    }
    write_file(&dir.join("oracle.csv"), &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_lattice, DomainShape, DomainSpec};
    use crate::group::CarnotGroup;
    use crate::kernel::build_kernel;

    #[test]
    fn csv_files_roundtrip_counts() {
        let g = CarnotGroup::abelian(1).unwrap();
        let spec = DomainSpec {
            shape: DomainShape::Box { lo: vec![0.0], hi: vec![1.0] },
            halo_width: 0.2,
        };
        let dom = build_lattice(&g, &spec, 0.2, 0.05).unwrap();
        let kernel = build_kernel(&dom, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_points_csv(dir.path(), &dom).unwrap();
        write_edges_csv(dir.path(), &kernel).unwrap();
        let pts = std::fs::read_to_string(dir.path().join("points.csv")).unwrap();
        assert_eq!(pts.lines().count(), dom.n_points() + 1);
        let edges = std::fs::read_to_string(dir.path().join("edges.csv")).unwrap();
        assert_eq!(edges.lines().count(), kernel.n_entries() + 1);
        assert!(pts.starts_with("index,x1,tag,measure\n"));
    }
}
