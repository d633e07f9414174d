//! Frame files: CSV and legacy-VTK export, CSV import, run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::Vec3;
use crate::particles::{ParticleFrame, ParticleKind};

pub const CSV_HEADER: [&str; 12] = ["id", "kind", "group", "x", "y", "z", "vx", "vy", "vz", "rho", "p", "mass"];
pub const VTK_MAGIC: &str = "# vtk DataFile Version 3.0";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    VtkLegacyAscii,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::VtkLegacyAscii => "vtk",
            Self::Csv => "csv",
        }
    }
}

/// CSV text of a frame: header row plus one row per particle.
pub fn frame_to_csv(frame: &ParticleFrame) -> String {
    let mut s = CSV_HEADER.join(",");
    s.push('\n');
    for i in 0..frame.len() {
        let (p, v) = (frame.position[i], frame.velocity[i]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            frame.id[i],
            frame.kind[i].as_str(),
            frame.group[i],
            p.x,
            p.y,
            p.z,
            v.x,
            v.y,
            v.z,
            frame.density[i],
            frame.pressure[i],
            frame.mass[i]
        );
    }
    s
}

/// Legacy ASCII VTK polydata: points, one vertex cell per point, and point
/// data for id, kind, group, density, pressure, mass and velocity.
pub fn frame_to_vtk(frame: &ParticleFrame) -> String {
    let n = frame.len();
    let mut s = String::new();
    let _ = writeln!(s, "{VTK_MAGIC}");
    let _ = writeln!(s, "sphflow particles t={}", frame.time);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET POLYDATA");
    let _ = writeln!(s, "POINTS {n} double");
    for p in &frame.position {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "VERTICES {n} {}", 2 * n);
    for i in 0..n {
        let _ = writeln!(s, "1 {i}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let ints: [(&str, Box<dyn Fn(usize) -> u32>); 3] = [
        ("id", Box::new(|i| frame.id[i])),
        ("kind", Box::new(|i| frame.kind[i] as u32)),
        ("group", Box::new(|i| frame.group[i])),
    ];
    for (name, get) in ints {
        let _ = writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default");
        for i in 0..n {
            let _ = writeln!(s, "{}", get(i));
        }
    }
    for (name, col) in [("rho", &frame.density), ("p", &frame.pressure), ("mass", &frame.mass)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in col {
            let _ = writeln!(s, "{v}");
        }
    }
    let _ = writeln!(s, "VECTORS velocity double");
    for v in &frame.velocity {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    s
}

pub fn export_frame(frame: &ParticleFrame, format: ExportFormat, path: &Path) -> Result<(), IoError> {
    let text = match format {
        ExportFormat::Csv => frame_to_csv(frame),
        ExportFormat::VtkLegacyAscii => frame_to_vtk(frame),
    };
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

/// Read a frame CSV written by [`export_frame`]. The time is not stored in
/// the file and has to be supplied.
pub fn read_frame_csv(path: &Path, time: f64) -> Result<ParticleFrame, IoError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IoError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header = rdr.headers().map_err(|e| IoError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(IoError::format(path, 1, format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut frame = ParticleFrame {
        time,
        ..Default::default()
    };
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| IoError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let num = |c: usize| -> Result<f64, IoError> {
            rec[c].parse::<f64>().map_err(|_| IoError::format(path, line, format!("column {} is not a number", CSV_HEADER[c])))
        };
        let int = |c: usize| -> Result<u32, IoError> {
            rec[c].parse::<u32>().map_err(|_| IoError::format(path, line, format!("column {} is not an integer", CSV_HEADER[c])))
        };
        let kind = ParticleKind::parse(&rec[1]).ok_or_else(|| IoError::format(path, line, format!("unknown kind '{}'", &rec[1])))?;
        frame.push(
            int(0)?,
            kind,
            int(2)?,
            Vec3::new(num(3)?, num(4)?, num(5)?),
            Vec3::new(num(6)?, num(7)?, num(8)?),
            num(9)?,
            num(10)?,
            num(11)?,
        );
    }
    Ok(frame)
}

/// One manifest row: frame index, simulated time and file stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub time: f64,
    pub stem: String,
}

pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:04}")
}

/// `index time stem` per line after a `# index time stem` header.
pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut s = String::from("# index time stem\n");
    for e in entries {
        let _ = writeln!(s, "{} {} {}", e.index, e.time, e.stem);
    }
    s
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(IoError::format(path, line_no, "expected 'index time stem'"));
        }
        let index = parts[0].parse().map_err(|_| IoError::format(path, line_no, "bad index"))?;
        let time = parts[1].parse().map_err(|_| IoError::format(path, line_no, "bad time"))?;
        out.push(ManifestEntry {
            index,
            time,
            stem: parts[2].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::particles::generate_particles;

    #[test]
    fn single_particle_csv_has_two_lines() {
        let mut f = ParticleFrame::default();
        f.push(7, ParticleKind::Fluid, 10, Vec3::new(0.1, 0.0, 0.2), Vec3::new(1.0, 0.0, -2.5), 1500.0, 12.5, 0.6);
        let text = frame_to_csv(&f);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), "id,kind,group,x,y,z,vx,vy,vz,rho,p,mass");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut frame = generate_particles(&fixtures::c4_erosion()).unwrap();
        frame.time = 0.3;
        for (k, v) in frame.velocity.iter_mut().enumerate() {
            *v = Vec3::new(k as f64 * 1e-3 / 7.0, 0.0, -(k as f64).sqrt() / 3.0);
        }
        let path = dir.path().join("f.csv");
        export_frame(&frame, ExportFormat::Csv, &path).unwrap();
        assert_eq!(read_frame_csv(&path, 0.3).unwrap(), frame);
    }

    #[test]
    fn vtk_layout() {
        let frame = generate_particles(&fixtures::c1_dam_break()).unwrap();
        let text = frame_to_vtk(&frame);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(VTK_MAGIC));
        assert!(text.contains(&format!("POINTS {} double", frame.len())));
        assert!(text.contains("VECTORS velocity double"));
        assert_eq!(text.matches("LOOKUP_TABLE default").count(), 6);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<ManifestEntry> = (0..3)
            .map(|i| ManifestEntry {
                index: i,
                time: i as f64 * 0.1,
                stem: frame_stem(i),
            })
            .collect();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, manifest_to_string(&entries)).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
        assert_eq!(entries[2].stem, "frame_0002");
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = read_frame_csv(Path::new("/nonexistent/frame.csv"), 0.0).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/frame.csv"));
    }
}
