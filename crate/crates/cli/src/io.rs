//! Point-cloud ingestion (`.xyz` text and ASCII PLY) and atomic output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use shadowpose_core::{PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
}

#[derive(Debug)]
pub enum ParseError {
    Io(PathBuf, std::io::Error),
    Line { line: usize, message: String },
    Format(String),
    Cloud(shadowpose_core::Error),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Io(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ParseError::Line { line, message } => write!(f, "line {line}: {message}"),
            ParseError::Format(m) => f.write_str(m),
            ParseError::Cloud(e) => write!(f, "invalid cloud: {e}"),
        }
    }
}

impl std::error::Error for ParseError {}

/// A parsed input file.
#[derive(Debug, Clone)]
pub struct CloudFile {
    pub path: PathBuf,
    pub format: CloudFormat,
    pub cloud: PointCloud,
}

pub fn read_cloud(path: &Path) -> Result<CloudFile, ParseError> {
    let text = fs::read(path).map_err(|e| ParseError::Io(path.to_path_buf(), e))?;
    let is_ply = text.starts_with(b"ply") || path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let (format, cloud) = if is_ply {
        (CloudFormat::PlyAscii, parse_ply(&text)?)
    } else {
        let text = String::from_utf8(text).map_err(|_| ParseError::Format("xyz input is not UTF-8 text".into()))?;
        (CloudFormat::Xyz, parse_xyz(&text)?)
    };
    Ok(CloudFile { path: path.to_path_buf(), format, cloud })
}

fn parse_numbers(line: &str, lineno: usize) -> Result<Vec<f64>, ParseError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::Line { line: lineno, message: format!("not a finite number: {tok:?}") })
        })
        .collect()
}

fn build(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<PointCloud, ParseError> {
    let cloud = if normals.is_empty() {
        PointCloud::from_points(points)
    } else {
        PointCloud::with_renormalized_normals(points, normals)
    };
    cloud.map_err(ParseError::Cloud)
}

/// Whitespace-separated rows of 3 (position) or 6 (position, normal) numbers. Blank
/// lines and `#` comments are skipped; every row must have the same width.
pub fn parse_xyz(text: &str) -> Result<PointCloud, ParseError> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_numbers(line, lineno)?;
        if v.len() != 3 && v.len() != 6 {
            return Err(ParseError::Line { line: lineno, message: format!("expected 3 or 6 values, found {}", v.len()) });
        }
        if *width.get_or_insert(v.len()) != v.len() {
            return Err(ParseError::Line { line: lineno, message: "row width differs from earlier rows".into() });
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
        if v.len() == 6 {
            normals.push(Vec3::new(v[3], v[4], v[5]));
        }
    }
    build(points, normals)
}

/// The ASCII subset: one `vertex` element with float/double `x y z` and optional
/// `nx ny nz`; other vertex properties are read and ignored, later elements are ignored.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, ParseError> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines().enumerate();
    let mut expect_header = |want: &str| match lines.next() {
        Some((_, l)) if l.trim() == want => Ok(()),
        Some((i, l)) => Err(ParseError::Line { line: i + 1, message: format!("expected {want:?}, found {:?}", l.trim()) }),
        None => Err(ParseError::Format("truncated PLY header".into())),
    };
    expect_header("ply")?;
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_end = None;
    for (i, raw) in lines.by_ref() {
        let lineno = i + 1;
        let tok: Vec<&str> = raw.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(ParseError::Format(format!("{other} PLY is not supported; convert to ascii")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count.parse::<usize>().map_err(|_| ParseError::Line {
                        line: lineno,
                        message: format!("bad vertex count {count:?}"),
                    })?);
                }
            }
            ["property", "list", ..] if !in_vertex => {}
            ["property", ty, name] => {
                if in_vertex {
                    if !matches!(*ty, "float" | "double" | "float32" | "float64") && ["x", "y", "z", "nx", "ny", "nz"].contains(name) {
                        return Err(ParseError::Line { line: lineno, message: format!("property {name} must be float, found {ty}") });
                    }
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_end = Some(lineno);
                break;
            }
            _ => return Err(ParseError::Line { line: lineno, message: format!("unrecognised header line {:?}", raw.trim()) }),
        }
    }
    if header_end.is_none() {
        return Err(ParseError::Format("PLY header has no end_header".into()));
    }
    let n = vertex_count.ok_or_else(|| ParseError::Format("PLY has no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(ParseError::Format("PLY vertex element must declare x, y and z".into()));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        (None, None, None) => None,
        _ => return Err(ParseError::Format("PLY normals need all of nx, ny, nz".into())),
    };
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::new();
    for _ in 0..n {
        let (i, raw) = lines.next().ok_or_else(|| ParseError::Format(format!("PLY declares {n} vertices but the file ends early")))?;
        let v = parse_numbers(raw, i + 1)?;
        if v.len() != props.len() {
            return Err(ParseError::Line { line: i + 1, message: format!("expected {} values, found {}", props.len(), v.len()) });
        }
        points.push(Vec3::new(v[ix], v[iy], v[iz]));
        if let Some([a, b, c]) = normal_cols {
            normals.push(Vec3::new(v[a], v[b], v[c]));
        }
    }
    build(points, normals)
}

/// Fixed 17-significant-digit form; parses back to the identical double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
