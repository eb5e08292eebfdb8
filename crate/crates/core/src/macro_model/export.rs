use std::fmt::Write as _;
use std::path::Path;

use super::mesh::MacroMesh;
use crate::error::{Error, Result};
use crate::io::{write_file, write_pgm_bytes};

/// Legacy ASCII VTK structured grid with nodal `phi` and element `rho`.
pub fn write_vtk(path: &Path, mesh: &MacroMesh, nodal_phi: &[f64], element_rho: &[f64]) -> Result<()> {
    if nodal_phi.len() != mesh.node_count() || element_rho.len() != mesh.element_count() {
        return Err(Error::Parameter("field sizes do not match the mesh".into()));
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "level-set design");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", mesh.nodes_x(), mesh.nodes_y());
    let _ = writeln!(s, "POINTS {} double", mesh.node_count());
    for n in 0..mesh.node_count() {
        let [x, y] = mesh.node_position(n);
        let _ = writeln!(s, "{x} {y} 0");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.node_count());
    let _ = writeln!(s, "SCALARS phi double 1\nLOOKUP_TABLE default");
    for v in nodal_phi {
        let _ = writeln!(s, "{v:e}");
    }
    let _ = writeln!(s, "CELL_DATA {}", mesh.element_count());
    let _ = writeln!(s, "SCALARS rho double 1\nLOOKUP_TABLE default");
    for v in element_rho {
        let _ = writeln!(s, "{v:e}");
    }
    write_file(path, s.as_bytes())
}

/// Element densities as a binary graymap, one pixel per element, top row at
/// the top of the domain, white = solid.
pub fn write_density_pgm(path: &Path, mesh: &MacroMesh, element_rho: &[f64]) -> Result<()> {
    if element_rho.len() != mesh.element_count() {
        return Err(Error::Parameter("density size does not match the mesh".into()));
    }
    let mut pixels = Vec::with_capacity(element_rho.len());
    for row in (0..mesh.ny).rev() {
        for col in 0..mesh.nx {
            pixels.push((element_rho[col + mesh.nx * row].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    write_pgm_bytes(path, mesh.nx, mesh.ny, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vtk_header_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = MacroMesh::new(3, 2, 0.5).unwrap();
        let p = dir.path().join("d.vtk");
        write_vtk(&p, &m, &[0.0; 12], &[1.0; 6]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DIMENSIONS 4 3 1") && text.contains("POINTS 12 double") && text.contains("CELL_DATA 6"));
        assert!(write_vtk(&p, &m, &[0.0; 11], &[1.0; 6]).is_err());
    }

    #[test]
    fn pgm_rows_flip() {
        let dir = tempfile::tempdir().unwrap();
        let m = MacroMesh::new(2, 2, 1.0).unwrap();
        let p = dir.path().join("d.pgm");
        write_density_pgm(&p, &m, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let body = &bytes[bytes.len() - 4..];
        assert_eq!(body, &[0, 0, 255, 0]);
    }
}
