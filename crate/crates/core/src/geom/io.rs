//! Mesh and camera-rig file I/O: ASCII OBJ, binary little-endian PLY,
//! and TOML camera rigs with row-major 4x4 world-to-camera matrices.

use super::camera::Camera;
use super::linear::{Mat3, RigidTransform, Vec3};
use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_obj<S: Real>(mesh: &TriMesh<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x.to_f64_(), v.y.to_f64_(), v.z.to_f64_())?;
    }
    if let Some(uvs) = &mesh.uvs {
        for uv in uvs {
            writeln!(w, "vt {} {}", uv[0].to_f64_(), uv[1].to_f64_())?;
        }
    }
    if let Some(ns) = &mesh.normals {
        for n in ns {
            writeln!(w, "vn {} {} {}", n.x.to_f64_(), n.y.to_f64_(), n.z.to_f64_())?;
        }
    }
    let has_uv = mesh.uvs.is_some();
    let has_n = mesh.normals.is_some();
    for f in &mesh.faces {
        let fmt = |i: usize| {
            let v = i + 1;
            match (has_uv, has_n) {
                (false, false) => format!("{v}"),
                (true, false) => format!("{v}/{v}"),
                (false, true) => format!("{v}//{v}"),
                (true, true) => format!("{v}/{v}/{v}"),
            }
        };
        writeln!(w, "f {} {} {}", fmt(f[0]), fmt(f[1]), fmt(f[2]))?;
    }
    Ok(())
}

pub fn read_obj<S: Real>(path: &Path) -> Result<TriMesh<S>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    let perr = |detail: &str| Error::Parse {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    for line in reader.lines() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for x in p.iter_mut() {
                    *x = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr("bad vertex line"))?;
                }
                vertices.push(Vec3::new(
                    S::from_f64_(p[0]),
                    S::from_f64_(p[1]),
                    S::from_f64_(p[2]),
                ));
            }
            Some("vn") => {
                let mut p = [0.0f64; 3];
                for x in p.iter_mut() {
                    *x = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr("bad normal line"))?;
                }
                normals.push(
                    Vec3::new(S::from_f64_(p[0]), S::from_f64_(p[1]), S::from_f64_(p[2]))
                        .normalized(),
                );
            }
            Some("vt") => {
                let mut p = [0.0f64; 2];
                for x in p.iter_mut() {
                    *x = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr("bad uv line"))?;
                }
                uvs.push([S::from_f64_(p[0]), S::from_f64_(p[1])]);
            }
            Some("f") => {
                let mut idx = [0usize; 3];
                for x in idx.iter_mut() {
                    let tok = it.next().ok_or_else(|| perr("face needs 3 vertices"))?;
                    let vi: isize = tok
                        .split('/')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| perr("bad face index"))?;
                    if vi < 1 {
                        return Err(perr("negative face indices unsupported"));
                    }
                    *x = vi as usize - 1;
                }
                if it.next().is_some() {
                    return Err(perr("only triangle faces supported"));
                }
                faces.push(idx);
            }
            _ => {}
        }
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    if !normals.is_empty() {
        mesh.normals = Some(normals);
    }
    if !uvs.is_empty() {
        mesh.uvs = Some(uvs);
    }
    mesh.validate()?;
    Ok(mesh)
}

pub fn write_ply<S: Real>(mesh: &TriMesh<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let has_n = mesh.normals.is_some();
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if has_n {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    writeln!(w, "element face {}", mesh.faces.len())?;
    writeln!(w, "property list uchar uint vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in [v.x, v.y, v.z] {
            w.write_all(&c.to_le_f32_bytes())?;
        }
        if let Some(ns) = &mesh.normals {
            let n = ns[i];
            for c in [n.x, n.y, n.z] {
                w.write_all(&c.to_le_f32_bytes())?;
            }
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as u32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ply<S: Real>(path: &Path) -> Result<TriMesh<S>> {
    let mut file = std::fs::File::open(path)?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;
    let perr = |detail: &str| Error::Parse {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let header_end = data
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| perr("missing end_header"))?
        + 11;
    let header = std::str::from_utf8(&data[..header_end]).map_err(|_| perr("non-utf8 header"))?;
    let mut n_verts = 0usize;
    let mut n_faces = 0usize;
    let mut has_n = false;
    for line in header.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, _] if *fmt != "binary_little_endian" => {
                return Err(perr("only binary_little_endian supported"))
            }
            ["element", "vertex", n] => n_verts = n.parse().map_err(|_| perr("bad vertex count"))?,
            ["element", "face", n] => n_faces = n.parse().map_err(|_| perr("bad face count"))?,
            ["property", "float", "nx"] => has_n = true,
            _ => {}
        }
    }
    let mut off = header_end;
    let take_f32 = |off: &mut usize| -> Result<S> {
        if *off + 4 > data.len() {
            return Err(perr("truncated vertex data"));
        }
        let b: [u8; 4] = data[*off..*off + 4].try_into().unwrap();
        *off += 4;
        Ok(S::from_le_f32_bytes(b))
    };
    let mut vertices = Vec::with_capacity(n_verts);
    let mut normals = if has_n { Some(Vec::with_capacity(n_verts)) } else { None };
    for _ in 0..n_verts {
        let v = Vec3::new(take_f32(&mut off)?, take_f32(&mut off)?, take_f32(&mut off)?);
        vertices.push(v);
        if let Some(ns) = normals.as_mut() {
            let n = Vec3::new(take_f32(&mut off)?, take_f32(&mut off)?, take_f32(&mut off)?);
            ns.push(n.normalized());
        }
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        if off >= data.len() {
            return Err(perr("truncated face data"));
        }
        let cnt = data[off];
        off += 1;
        if cnt != 3 {
            return Err(perr("only triangle faces supported"));
        }
        let mut f = [0usize; 3];
        for x in f.iter_mut() {
            if off + 4 > data.len() {
                return Err(perr("truncated face data"));
            }
            *x = u32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
        }
        faces.push(f);
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    mesh.normals = normals;
    mesh.validate()?;
    Ok(mesh)
}

/// One rig entry as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraEntry {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
    /// Row-major 4x4 world-to-camera matrix (last row 0 0 0 1).
    pub world_to_camera: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<CameraEntry>,
}

impl CameraEntry {
    pub fn from_camera<S: Real>(cam: &Camera<S>) -> Self {
        let r = cam.world_to_camera.rotation;
        let t = cam.world_to_camera.translation;
        let mut m = Vec::with_capacity(16);
        for i in 0..3 {
            for j in 0..3 {
                m.push(r.m[i][j].to_f64_());
            }
            m.push(t[i].to_f64_());
        }
        m.extend_from_slice(&[0.0, 0.0, 0.0, 1.0]);
        CameraEntry {
            width: cam.width,
            height: cam.height,
            fx: cam.fx.to_f64_(),
            fy: cam.fy.to_f64_(),
            cx: cam.cx.to_f64_(),
            cy: cam.cy.to_f64_(),
            near: cam.near.to_f64_(),
            far: cam.far.to_f64_(),
            world_to_camera: m,
        }
    }

    pub fn to_camera<S: Real>(&self) -> Result<Camera<S>> {
        if self.world_to_camera.len() != 16 {
            return Err(Error::invalid("world_to_camera must have 16 entries"));
        }
        let m = &self.world_to_camera;
        let mut rot = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                rot.m[i][j] = S::from_f64_(m[i * 4 + j]);
            }
        }
        let t = Vec3::new(
            S::from_f64_(m[3]),
            S::from_f64_(m[7]),
            S::from_f64_(m[11]),
        );
        Camera::new(
            S::from_f64_(self.fx),
            S::from_f64_(self.fy),
            S::from_f64_(self.cx),
            S::from_f64_(self.cy),
            self.width,
            self.height,
            RigidTransform::new(rot, t),
            S::from_f64_(self.near),
            S::from_f64_(self.far),
        )
    }
}

pub fn write_rig<S: Real>(cameras: &[Camera<S>], path: &Path) -> Result<()> {
    let rig = CameraRig {
        cameras: cameras.iter().map(CameraEntry::from_camera).collect(),
    };
    let text = toml::to_string_pretty(&rig).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_rig<S: Real>(path: &Path) -> Result<Vec<Camera<S>>> {
    let text = std::fs::read_to_string(path)?;
    let rig: CameraRig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    rig.cameras.iter().map(|c| c.to_camera()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::grid::{marching_cubes, ScalarGrid};

    fn sample_mesh() -> TriMesh<f64> {
        let g = ScalarGrid::from_fn(
            [12, 12, 12],
            Vec3::new(-1.0, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.norm() - 0.5,
        );
        marching_cubes(&g, 0.0).unwrap()
    }

    #[test]
    fn obj_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mesh = sample_mesh();
        write_obj(&mesh, &path).unwrap();
        let back: TriMesh<f64> = read_obj(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((*a - *b).norm() < 1e-9);
        }
        assert!(back.normals.is_some());
    }

    #[test]
    fn ply_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = sample_mesh();
        write_ply(&mesh, &path).unwrap();
        let back: TriMesh<f64> = read_ply(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((*a - *b).norm() < 1e-5); // f32 storage
        }
    }

    #[test]
    fn rig_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.toml");
        let cam = Camera::look_at(
            Vec3::new(0.0f64, 0.5, 2.0),
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            120.0,
            120.0,
            128,
            128,
            0.1,
            10.0,
        )
        .unwrap();
        write_rig(&[cam], &path).unwrap();
        let back: Vec<Camera<f64>> = read_rig(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0]
            .world_to_camera
            .rotation
            .frobenius_dist(&cam.world_to_camera.rotation)
            < 1e-12);
        let p = Vec3::new(0.1, -0.2, 0.3);
        let (u0, v0, d0) = cam.project(p);
        let (u1, v1, d1) = back[0].project(p);
        assert!((u0 - u1).abs() < 1e-9 && (v0 - v1).abs() < 1e-9 && (d0 - d1).abs() < 1e-9);
    }
}
