//! Legacy ASCII VTK unstructured-grid output (cell type 10, vertex data).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{Mesh, Point};

/// Named per-vertex data attached to a VTK file.
pub enum PointData<'a> {
    Vectors(&'a str, &'a [Point]),
    Scalars(&'a str, &'a [f64]),
}

pub fn write_vtk<W: Write>(mesh: &Mesh, title: &str, data: &[PointData<'_>], mut w: W) -> io::Result<()> {
    let nv = mesh.num_vertices();
    let nt = mesh.num_tets();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
    }
    writeln!(w, "CELLS {nt} {}", 5 * nt)?;
    for t in mesh.tets() {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "10")?;
    }
    if data.is_empty() {
        return Ok(());
    }
    writeln!(w, "POINT_DATA {nv}")?;
    for d in data {
        match d {
            PointData::Vectors(name, v) => {
                check_len(name, v.len(), nv)?;
                writeln!(w, "VECTORS {} double", sanitize(name))?;
                for p in v.iter() {
                    writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
                }
            }
            PointData::Scalars(name, s) => {
                check_len(name, s.len(), nv)?;
                writeln!(w, "SCALARS {} double 1\nLOOKUP_TABLE default", sanitize(name))?;
                for x in s.iter() {
                    writeln!(w, "{x:?}")?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_vtk(mesh: &Mesh, title: &str, data: &[PointData<'_>], path: impl AsRef<Path>) -> io::Result<()> {
    let mut buf = Vec::new();
    write_vtk(mesh, title, data, &mut buf)?;
    fs::write(path, buf)
}

fn check_len(name: &str, got: usize, want: usize) -> io::Result<()> {
    if got != want {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("point data `{name}` has {got} entries, mesh has {want} vertices"),
        ));
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_cube_mesh;

    #[test]
    fn writes_cells_and_vectors() {
        let m = generate_cube_mesh(1, 1.0).unwrap();
        let field: Vec<Point> = m.vertices().to_vec();
        let mut buf = Vec::new();
        write_vtk(&m, "cube", &[PointData::Vectors("position", &field)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 8 double"));
        assert!(s.contains("CELLS 6 30"));
        assert_eq!(s.lines().filter(|l| *l == "10").count(), 6);
        assert!(s.contains("POINT_DATA 8\nVECTORS position double"));
    }

    #[test]
    fn rejects_wrong_length() {
        let m = generate_cube_mesh(1, 1.0).unwrap();
        let short = vec![0.0; 3];
        assert!(write_vtk(&m, "x", &[PointData::Scalars("s", &short)], Vec::new()).is_err());
    }
}
