//! Bit-exact file formats for flow fields, depth maps, masks and pose
//! files.
//!
//! The raster containers share one layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes ("FLO1" | "DEP1" | "MSK1")
//! width, height    u32, u32
//! payload          row-major, top row first
//! ```
//!
//! - `FLO1`: `h*w*2` f32 values, u before v per pixel.
//! - `DEP1`: `h*w` f32 values (used for inverse depth).
//! - `MSK1`: `h*w` bytes, strictly 0 or 1.
//!
//! Pose files are text: one frame per line, 12 whitespace-separated
//! numbers forming a row-major 3x4 `[R | t]` camera-to-world matrix.
//! Rotations are checked for orthonormality at an input tolerance of 1e-3
//! and re-orthonormalized through a polar decomposition on load.
//!
//! Readers reject malformed input outright; no partially-read values
//! escape.

use crate::geometry::{FlowField, InverseDepthMap, MaskGrid, Pose, Trajectory};
use nalgebra::{Matrix3, Vector2, Vector3};
use std::io::{BufRead, Read, Write};
use thiserror::Error;

pub const FLOW_MAGIC: &[u8; 4] = b"FLO1";
pub const DEPTH_MAGIC: &[u8; 4] = b"DEP1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

/// Upper bound on pixels per raster; rejects absurd headers before
/// allocating.
const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: &'static str, got: [u8; 4] },
    #[error("zero image dimension")]
    ZeroDimension,
    #[error("dimension overflow: {0} pixels")]
    DimensionOverflow(u64),
    #[error("mask byte must be 0 or 1, got {0}")]
    BadMaskByte(u8),
    #[error("pose file line {line}: {problem}")]
    PoseLine { line: usize, problem: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Nine-significant-digit formatting used for all numeric text output.
pub fn sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

fn write_header(mut w: impl Write, magic: &[u8; 4], width: usize, height: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    Ok(())
}

fn read_header(
    r: &mut impl Read,
    magic: &'static [u8; 4],
    name: &'static str,
) -> Result<(usize, usize), DataIoError> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(DataIoError::BadMagic {
            expected: name,
            got,
        });
    }
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    let width = u32::from_le_bytes(buf) as u64;
    r.read_exact(&mut buf)?;
    let height = u32::from_le_bytes(buf) as u64;
    if width == 0 || height == 0 {
        return Err(DataIoError::ZeroDimension);
    }
    if width * height > MAX_PIXELS {
        return Err(DataIoError::DimensionOverflow(width * height));
    }
    Ok((width as usize, height as usize))
}

fn read_f32(r: &mut impl Read) -> std::io::Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

/// Write a flow field; values are quantized to f32.
pub fn write_flow(mut w: impl Write, field: &FlowField) -> std::io::Result<()> {
    write_header(&mut w, FLOW_MAGIC, field.width(), field.height())?;
    for (_, _, v) in field.iter() {
        w.write_all(&(v.x as f32).to_le_bytes())?;
        w.write_all(&(v.y as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_flow(mut r: impl Read) -> Result<FlowField, DataIoError> {
    let (width, height) = read_header(&mut r, FLOW_MAGIC, "FLO1")?;
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let u = read_f32(&mut r)? as f64;
        let v = read_f32(&mut r)? as f64;
        data.push(Vector2::new(u, v));
    }
    Ok(FlowField::from_vec(width, height, data))
}

/// Write an inverse depth map; values are quantized to f32.
pub fn write_depth(mut w: impl Write, map: &InverseDepthMap) -> std::io::Result<()> {
    write_header(&mut w, DEPTH_MAGIC, map.width(), map.height())?;
    for v in map.as_slice() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_depth(mut r: impl Read) -> Result<InverseDepthMap, DataIoError> {
    let (width, height) = read_header(&mut r, DEPTH_MAGIC, "DEP1")?;
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        data.push(read_f32(&mut r)? as f64);
    }
    Ok(InverseDepthMap::from_vec(width, height, data))
}

pub fn write_mask(mut w: impl Write, mask: &MaskGrid) -> std::io::Result<()> {
    write_header(&mut w, MASK_MAGIC, mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.as_slice().iter().map(|b| *b as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_mask(mut r: impl Read) -> Result<MaskGrid, DataIoError> {
    let (width, height) = read_header(&mut r, MASK_MAGIC, "MSK1")?;
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes)?;
    let mut data = Vec::with_capacity(bytes.len());
    for b in bytes {
        match b {
            0 => data.push(false),
            1 => data.push(true),
            other => return Err(DataIoError::BadMaskByte(other)),
        }
    }
    Ok(MaskGrid::from_vec(width, height, data))
}

/// Closest rotation to `m` in the Frobenius sense (polar factor), with the
/// determinant forced positive.
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = nalgebra::linalg::SVD::new(*m, true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        r = u * flip * vt;
    }
    r
}

pub fn read_pose_file(r: impl Read) -> Result<Trajectory, DataIoError> {
    let reader = std::io::BufReader::new(r);
    let mut poses = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(DataIoError::PoseLine {
                line: lineno,
                problem: format!("expected 12 numbers, got {}", tokens.len()),
            });
        }
        let mut values = [0.0f64; 12];
        for (i, tok) in tokens.iter().enumerate() {
            values[i] = tok.parse().map_err(|_| DataIoError::PoseLine {
                line: lineno,
                problem: format!("token {:?} is not a number", tok),
            })?;
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det_err = (rotation.determinant() - 1.0).abs();
        if ortho_err > 1e-3 || det_err > 1e-3 {
            return Err(DataIoError::PoseLine {
                line: lineno,
                problem: format!("rotation fails orthonormality check ({ortho_err:.2e})"),
            });
        }
        poses.push(Pose::new(
            orthonormalize(&rotation),
            Vector3::new(values[3], values[7], values[11]),
        ));
    }
    Ok(poses)
}

pub fn write_pose_file(mut w: impl Write, trajectory: &[Pose]) -> std::io::Result<()> {
    for pose in trajectory {
        let r = &pose.rotation;
        let t = &pose.translation;
        writeln!(
            w,
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        )?;
    }
    Ok(())
}
