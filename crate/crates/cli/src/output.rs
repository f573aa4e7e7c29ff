//! Artifact encoding and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use steklov_core::mesh::vtk::{write_vtk, PointData};
use steklov_core::mesh::{Mesh, Point};

/// Round-trip decimal form used in every CSV cell.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv_bytes<I>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

pub fn vtk_bytes(mesh: &Mesh, title: &str, fields: &[(String, Vec<Point>)]) -> Vec<u8> {
    let data: Vec<PointData<'_>> = fields.iter().map(|(n, v)| PointData::Vectors(n, v)).collect();
    let mut buf = Vec::new();
    write_vtk(mesh, title, &data, &mut buf).expect("field lengths match the mesh");
    buf
}

/// Writes through a temporary sibling and a rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Named output files of one run, written in name order.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn write_all(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            write_atomic(&p, bytes)?;
            out.push(p);
        }
        Ok(out)
    }
}
