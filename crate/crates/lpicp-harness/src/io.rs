//! File formats: ASCII XYZ and ASCII PLY point clouds, trajectory CSV.
//!
//! XYZ is the golden-file format: one `x y z [ring]` line per point,
//! floats printed with 17 significant digits so rewrites are
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use lpicp::geometry::{wrap_angle, PointCloud, Pose6D};

use crate::metrics::{Trajectory, TrajectorySample};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {what}")]
    Parse {
        path: String,
        line: usize,
        what: String,
    },
    #[error("unsupported file extension for '{0}' (expected .xyz or .ply)")]
    UnsupportedExtension(String),
}

fn parse_err(path: &Path, line: usize, what: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        what: what.into(),
    }
}

/// 17-significant-digit float formatting used by every text emitter.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(path),
        _ => read_xyz(path),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => write_ply(cloud, path),
        Some("xyz") | Some("txt") | None => write_xyz(cloud, path),
        Some(_) => Err(IoError::UnsupportedExtension(path.display().to_string())),
    }
}

pub fn read_xyz(path: &Path) -> Result<PointCloud, IoError> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut rings: Vec<u32> = Vec::new();
    let mut saw_ring = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(parse_err(path, lineno + 1, "expected 'x y z [ring]'"));
        }
        let mut xyz = [0.0f64; 3];
        for (k, f) in fields.iter().take(3).enumerate() {
            xyz[k] = f
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad float '{f}': {e}")))?;
        }
        let has_ring = fields.len() == 4;
        match saw_ring {
            None => saw_ring = Some(has_ring),
            Some(prev) if prev != has_ring => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    "ring column must be present on every line or none",
                ));
            }
            _ => {}
        }
        if has_ring {
            rings.push(fields[3].parse().map_err(|e| {
                parse_err(path, lineno + 1, format!("bad ring '{}': {e}", fields[3]))
            })?);
        }
        points.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(if saw_ring == Some(true) {
        PointCloud::with_rings(points, rings)
    } else {
        PointCloud::new(points)
    })
}

pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    match &cloud.ring {
        Some(rings) => {
            for (p, r) in cloud.points.iter().zip(rings) {
                out.push_str(&format!(
                    "{} {} {} {r}\n",
                    fmt_f64(p.x),
                    fmt_f64(p.y),
                    fmt_f64(p.z)
                ));
            }
        }
        None => {
            for p in &cloud.points {
                out.push_str(&format!("{} {} {}\n", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z)));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", cloud.len())?;
    writeln!(f, "property double x")?;
    writeln!(f, "property double y")?;
    writeln!(f, "property double z")?;
    if cloud.ring.is_some() {
        writeln!(f, "property int ring")?;
    }
    writeln!(f, "end_header")?;
    match &cloud.ring {
        Some(rings) => {
            for (p, r) in cloud.points.iter().zip(rings) {
                writeln!(f, "{} {} {} {r}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z))?;
            }
        }
        None => {
            for p in &cloud.points {
                writeln!(f, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z))?;
            }
        }
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let mut vertex_count = 0usize;
    let mut properties: Vec<String> = Vec::new();
    let mut header_done_at = 0usize;
    for (lineno, line) in lines.by_ref() {
        let line = line.trim();
        if lineno == 0 && line != "ply" {
            return Err(parse_err(path, 1, "missing 'ply' magic"));
        }
        if line.starts_with("format") && !line.contains("ascii") {
            return Err(parse_err(path, lineno + 1, "only ascii format supported"));
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            vertex_count = rest
                .trim()
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad vertex count: {e}")))?;
        }
        if line.starts_with("property") {
            if let Some(name) = line.split_whitespace().last() {
                properties.push(name.to_string());
            }
        }
        if line == "end_header" {
            header_done_at = lineno + 1;
            break;
        }
    }
    let want_ring = properties.iter().any(|p| p == "ring");
    let ix = properties.iter().position(|p| p == "x").ok_or_else(|| {
        parse_err(path, header_done_at, "missing x property")
    })?;
    let iy = properties.iter().position(|p| p == "y").unwrap_or(ix + 1);
    let iz = properties.iter().position(|p| p == "z").unwrap_or(ix + 2);
    let ir = properties.iter().position(|p| p == "ring");

    let mut points = Vec::with_capacity(vertex_count);
    let mut rings = Vec::new();
    for (lineno, line) in lines.take(vertex_count) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(parse_err(path, lineno + 1, "short vertex line"));
        }
        let get = |i: usize| -> Result<f64, IoError> {
            fields[i]
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad float: {e}")))
        };
        points.push(Vector3::new(get(ix)?, get(iy)?, get(iz)?));
        if want_ring {
            let r: f64 = get(ir.unwrap())?;
            rings.push(r as u32);
        }
    }
    Ok(if want_ring {
        PointCloud::with_rings(points, rings)
    } else {
        PointCloud::new(points)
    })
}

pub const TRAJECTORY_HEADER: &str = "t, alpha, beta, gamma, tx, ty, tz";

/// Writes `t, alpha, beta, gamma, tx, ty, tz` rows; angles are wrapped to
/// `(-pi, pi]` at this emission boundary.
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &traj.samples {
        out.push_str(&format!(
            "{}, {}, {}, {}, {}, {}, {}\n",
            fmt_f64(s.t),
            fmt_f64(wrap_angle(s.pose.alpha)),
            fmt_f64(wrap_angle(s.pose.beta)),
            fmt_f64(wrap_angle(s.pose.gamma)),
            fmt_f64(s.pose.tx),
            fmt_f64(s.pose.ty),
            fmt_f64(s.pose.tz)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, IoError> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(parse_err(path, lineno + 1, "expected 7 comma-separated fields"));
        }
        let mut v = [0.0f64; 7];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad float '{f}': {e}")))?;
        }
        samples.push(TrajectorySample {
            t: v[0],
            pose: Pose6D::new(v[1], v[2], v[3], v[4], v[5], v[6]),
        });
    }
    Trajectory::new(samples).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Parses `"alpha,beta,gamma,tx,ty,tz"`.
pub fn parse_pose_arg(arg: &str) -> Result<Pose6D, String> {
    let fields: Vec<&str> = arg.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(format!(
            "expected 6 comma-separated values 'alpha,beta,gamma,tx,ty,tz', got {}",
            fields.len()
        ));
    }
    let mut v = [0.0f64; 6];
    for (k, f) in fields.iter().enumerate() {
        v[k] = f.parse().map_err(|e| format!("bad value '{f}': {e}"))?;
    }
    Ok(Pose6D::new(v[0], v[1], v[2], v[3], v[4], v[5]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn xyz_round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud::with_rings(
            vec![
                Vector3::new(1.0, 2.0, 3.0),
                Vector3::new(-0.1234567890123456, 7.0, 1e-17),
            ],
            vec![0, 5],
        );
        let p1 = dir.path().join("a.xyz");
        let p2 = dir.path().join("b.xyz");
        write_xyz(&cloud, &p1).unwrap();
        let read = read_xyz(&p1).unwrap();
        write_xyz(&read, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(read.ring.as_ref().unwrap(), &vec![0, 5]);
    }

    #[test]
    fn ply_round_trip_preserves_points() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud::new(vec![Vector3::new(0.5, -1.5, 2.25)]);
        let p = dir.path().join("c.ply");
        write_ply(&cloud, &p).unwrap();
        let read = read_ply(&p).unwrap();
        assert_eq!(read.len(), 1);
        assert_eq!(read.points[0], cloud.points[0]);
    }

    #[test]
    fn mixed_ring_columns_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.xyz");
        fs::write(&p, "0 0 0 1\n1 1 1\n").unwrap();
        assert!(matches!(read_xyz(&p), Err(IoError::Parse { .. })));
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempdir().unwrap();
        let traj = Trajectory::new(vec![
            TrajectorySample {
                t: 0.0,
                pose: Pose6D::new(0.1, -0.2, 9.8, 1.0, 2.0, 3.0),
            },
            TrajectorySample {
                t: 0.1,
                pose: Pose6D::new(0.0, 0.0, 0.0, 4.0, 5.0, 6.0),
            },
        ])
        .unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory_csv(&traj, &p).unwrap();
        let read = read_trajectory_csv(&p).unwrap();
        assert_eq!(read.len(), 2);
        // Angles come back wrapped.
        assert!((read.samples[0].pose.gamma - wrap_angle(9.8)).abs() < 1e-12);
        assert_eq!(read.samples[1].pose.tx, 4.0);
    }

    #[test]
    fn pose_arg_parses() {
        let p = parse_pose_arg("0,0,0,0.3,0,0").unwrap();
        assert_eq!(p.tx, 0.3);
        assert!(parse_pose_arg("1,2,3").is_err());
    }
}
