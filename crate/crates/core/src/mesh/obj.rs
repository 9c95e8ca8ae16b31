//! Wavefront OBJ subset: `v` and triangular `f` records.

use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn format_obj<T: Real>(mesh: &Mesh<T>) -> String {
    let mut s = String::with_capacity(mesh.num_vertices() * 40 + mesh.num_faces() * 24);
    for v in &mesh.vertices {
        // `{:?}` keeps round-trip precision for floats.
        let _ = writeln!(
            s,
            "v {:?} {:?} {:?}",
            v[0].to_f64_lossy(),
            v[1].to_f64_lossy(),
            v[2].to_f64_lossy()
        );
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn parse_obj<T: Real>(text: &str) -> Result<Mesh<T>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Mesh(format!("OBJ line {}: {what}", lineno + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [T::zero(); 3];
                for c in &mut p {
                    let tok = it.next().ok_or_else(|| bad("short vertex"))?;
                    let x: f64 = tok.parse().map_err(|_| bad("bad coordinate"))?;
                    *c = T::lit(x);
                }
                vertices.push(p);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                        let n = vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        usize::try_from(i).map_err(|_| bad("face index out of range"))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad("only triangles are supported"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn write_obj<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_obj(mesh))?;
    Ok(())
}

pub fn read_obj<T: Real>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    parse_obj(&std::fs::read_to_string(path)?)
}
