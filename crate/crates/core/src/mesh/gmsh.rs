//! Gmsh MSH 2.2 ASCII reader and writer for linear tetrahedral meshes.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{Mesh, MeshError, Point};

#[derive(Debug, thiserror::Error)]
pub enum GmshError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported MSH version or file type: {0}")]
    UnsupportedVersion(String),
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("unsupported element: element {element} has type {element_type}")]
    UnsupportedElement { element: usize, element_type: usize },
    #[error("element {element} references unknown node {node}")]
    DanglingNode { element: usize, node: usize },
    #[error("no tetrahedra in file")]
    NoTetrahedra,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

const TET4: usize = 4;

/// Node counts of the lower-dimensional linear element types that are skipped.
fn skipped_element_nodes(element_type: usize) -> Option<usize> {
    match element_type {
        15 => Some(1), // point
        1 => Some(2),  // line
        2 => Some(3),  // triangle
        3 => Some(4),  // quadrangle
        _ => None,
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Some(l);
            }
        }
        None
    }

    fn expect_line(&mut self, what: &str) -> Result<&'a str, GmshError> {
        self.next_line().ok_or_else(|| self.err(format!("unexpected end of file while reading {what}")))
    }

    fn err(&self, message: String) -> GmshError {
        GmshError::Parse { line: self.last, message }
    }

    fn parse<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T, GmshError> {
        tok.and_then(|t| t.parse().ok()).ok_or_else(|| self.err(format!("invalid {what}")))
    }
}

pub fn read_gmsh(path: impl AsRef<Path>) -> Result<Mesh, GmshError> {
    parse_gmsh(&fs::read_to_string(path)?)
}

/// Parses MSH 2.x ASCII text. Lower-dimensional elements are ignored; nodes not
/// used by any tet are dropped (order of the remaining nodes is kept).
pub fn parse_gmsh(text: &str) -> Result<Mesh, GmshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let mut have_format = false;
    let mut nodes: Option<(Vec<usize>, Vec<Point>)> = None;
    let mut tets: Option<Vec<(usize, [usize; 4])>> = None;

    while let Some(line) = lines.next_line() {
        match line {
            "$MeshFormat" => {
                let l = lines.expect_line("$MeshFormat")?;
                let mut tok = l.split_whitespace();
                let version = tok.next().unwrap_or("");
                let file_type = tok.next().unwrap_or("");
                if !version.starts_with("2.") || file_type != "0" {
                    return Err(GmshError::UnsupportedVersion(l.to_string()));
                }
                have_format = true;
                skip_to(&mut lines, "$EndMeshFormat")?;
            }
            "$Nodes" => {
                let head = lines.expect_line("node count")?;
                let count: usize = lines.parse(head.split_whitespace().next(), "node count")?;
                let mut ids = Vec::with_capacity(count);
                let mut pts = Vec::with_capacity(count);
                for _ in 0..count {
                    let l = lines.expect_line("$Nodes")?;
                    let mut tok = l.split_whitespace();
                    ids.push(lines.parse(tok.next(), "node id")?);
                    let x = lines.parse(tok.next(), "node coordinate")?;
                    let y = lines.parse(tok.next(), "node coordinate")?;
                    let z = lines.parse(tok.next(), "node coordinate")?;
                    pts.push(Point::new(x, y, z));
                }
                skip_to(&mut lines, "$EndNodes")?;
                nodes = Some((ids, pts));
            }
            "$Elements" => {
                let head = lines.expect_line("element count")?;
                let count: usize = lines.parse(head.split_whitespace().next(), "element count")?;
                let mut found = Vec::new();
                for _ in 0..count {
                    let l = lines.expect_line("$Elements")?;
                    let mut tok = l.split_whitespace();
                    let id: usize = lines.parse(tok.next(), "element id")?;
                    let ty: usize = lines.parse(tok.next(), "element type")?;
                    let ntags: usize = lines.parse(tok.next(), "tag count")?;
                    for _ in 0..ntags {
                        let _: i64 = lines.parse(tok.next(), "element tag")?;
                    }
                    if ty == TET4 {
                        let mut tet = [0usize; 4];
                        for v in tet.iter_mut() {
                            *v = lines.parse(tok.next(), "element node")?;
                        }
                        found.push((id, tet));
                    } else if let Some(k) = skipped_element_nodes(ty) {
                        for _ in 0..k {
                            let _: usize = lines.parse(tok.next(), "element node")?;
                        }
                    } else {
                        return Err(GmshError::UnsupportedElement { element: id, element_type: ty });
                    }
                }
                skip_to(&mut lines, "$EndElements")?;
                tets = Some(found);
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                let end = format!("$End{}", &other[1..]);
                while let Some(l) = lines.next_line() {
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(lines.err(format!("unexpected line `{line}`"))),
        }
    }

    if !have_format {
        return Err(GmshError::MissingSection("$MeshFormat"));
    }
    let (ids, pts) = nodes.ok_or(GmshError::MissingSection("$Nodes"))?;
    let elems = tets.ok_or(GmshError::MissingSection("$Elements"))?;
    if elems.is_empty() {
        return Err(GmshError::NoTetrahedra);
    }

    let by_id: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut used = vec![false; pts.len()];
    let mut raw = Vec::with_capacity(elems.len());
    for (id, tet) in &elems {
        let mut t = [0usize; 4];
        for (slot, node) in t.iter_mut().zip(tet) {
            let i = *by_id.get(node).ok_or(GmshError::DanglingNode { element: *id, node: *node })?;
            used[i] = true;
            *slot = i;
        }
        raw.push(t);
    }
    let mut compact = vec![usize::MAX; pts.len()];
    let mut vertices = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if used[i] {
            compact[i] = vertices.len();
            vertices.push(*p);
        }
    }
    let tets = raw.into_iter().map(|t| t.map(|i| compact[i])).collect();
    Ok(Mesh::from_unoriented(vertices, tets)?)
}

fn skip_to(lines: &mut Lines<'_>, end: &'static str) -> Result<(), GmshError> {
    match lines.next_line() {
        Some(l) if l == end => Ok(()),
        Some(l) => Err(lines.err(format!("expected {end}, found `{l}`"))),
        None => Err(GmshError::MissingSection(end)),
    }
}

/// Writes MSH 2.2 ASCII. Coordinates use the shortest round-trip decimal form,
/// so reading the file back reproduces the mesh exactly.
pub fn write_gmsh<W: Write>(mesh: &Mesh, mut w: W) -> io::Result<()> {
    writeln!(w, "$MeshFormat\n2.2 0 8\n$EndMeshFormat")?;
    writeln!(w, "$Nodes\n{}", mesh.num_vertices())?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        writeln!(w, "{} {:?} {:?} {:?}", i + 1, p.x, p.y, p.z)?;
    }
    writeln!(w, "$EndNodes")?;
    writeln!(w, "$Elements\n{}", mesh.num_tets())?;
    for (i, t) in mesh.tets().iter().enumerate() {
        writeln!(w, "{} 4 2 1 1 {} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1)?;
    }
    writeln!(w, "$EndElements")
}

pub fn save_gmsh(mesh: &Mesh, path: impl AsRef<Path>) -> io::Result<()> {
    let mut buf = Vec::new();
    write_gmsh(mesh, &mut buf)?;
    fs::write(path, buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_ball_mesh, generate_cube_mesh};

    const SINGLE: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n2\n1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4\n$EndElements\n";

    #[test]
    fn single_tet() {
        let m = parse_gmsh(SINGLE).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_tets(), 1);
        assert!((m.volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_tet_is_reordered() {
        let text = SINGLE.replace("2 4 2 0 1 1 2 3 4", "2 4 2 0 1 2 1 3 4");
        let m = parse_gmsh(&text).unwrap();
        assert!(m.tet_volume(0) > 0.0);
    }

    #[test]
    fn unsupported_element() {
        let text = SINGLE.replace("2 4 2 0 1 1 2 3 4", "2 7 2 0 1 1 2 3 4 4");
        let err = parse_gmsh(&text).unwrap_err();
        assert!(matches!(err, GmshError::UnsupportedElement { element_type: 7, .. }));
        assert!(err.to_string().contains("unsupported element"));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            parse_gmsh(&SINGLE.replace("2.2 0 8", "4.1 0 8")),
            Err(GmshError::UnsupportedVersion(_))
        ));
        assert!(matches!(
            parse_gmsh(&SINGLE.replace("2.2 0 8", "2.2 1 8")),
            Err(GmshError::UnsupportedVersion(_))
        ));
        let no_elems = SINGLE.split("$Elements").next().unwrap();
        assert!(matches!(parse_gmsh(no_elems), Err(GmshError::MissingSection("$Elements"))));
        assert!(matches!(
            parse_gmsh(&SINGLE.replace("1 1 2 3 4", "1 1 2 3 9")),
            Err(GmshError::DanglingNode { node: 9, .. })
        ));
        assert!(matches!(parse_gmsh(&SINGLE.replace("\n2 1 0 0", "\n2 x 0 0")), Err(GmshError::Parse { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        for m in [generate_cube_mesh(3, 0.7).unwrap(), generate_ball_mesh(1).unwrap()] {
            let mut buf = Vec::new();
            write_gmsh(&m, &mut buf).unwrap();
            let back = parse_gmsh(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }
}
