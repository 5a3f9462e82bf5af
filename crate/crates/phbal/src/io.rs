//! Matrix Market (array and coordinate, real) files and `.phmanifest`
//! system manifests.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::linalg::Mat;
use crate::ph::{CoEnergyPh, PhSystem};

pub const MANIFEST_VERSION: &str = "phbal-manifest-1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn parse_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_path_buf(), msg: msg.into() }
}

/// Dense array format, column-major, shortest round-trip float formatting.
pub fn format_matrix_market(m: &Mat) -> String {
    let mut s = String::with_capacity(24 * m.len() + 64);
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        let _ = writeln!(s, "{:e}", if *v == 0.0 { 0.0 } else { *v });
    }
    s
}

pub fn parse_matrix_market(text: &str, path: &Path) -> IoResult<Mat> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(parse_err(path, "missing %%MatrixMarket matrix header"));
    }
    let (fmt, field, sym) = (h[2].as_str(), h[3].as_str(), h[4].as_str());
    if field != "real" && field != "integer" {
        return Err(parse_err(path, format!("unsupported field '{field}'")));
    }
    let symmetric = match sym {
        "general" => false,
        "symmetric" => true,
        _ => return Err(parse_err(path, format!("unsupported symmetry '{sym}'"))),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| parse_err(path, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, format!("bad size entry '{t}'"))))
        .collect::<IoResult<_>>()?;
    let num = |t: &str| -> IoResult<f64> {
        let v: f64 = t.parse().map_err(|_| parse_err(path, format!("bad number '{t}'")))?;
        if !v.is_finite() {
            return Err(parse_err(path, "non-finite entry"));
        }
        Ok(v)
    };
    match fmt {
        "array" => {
            if dims.len() != 2 {
                return Err(parse_err(path, "array size line needs rows and cols"));
            }
            let (r, c) = (dims[0], dims[1]);
            let mut m = Mat::zeros(r, c);
            let vals: Vec<f64> = body.flat_map(|l| l.split_whitespace()).map(num).collect::<IoResult<_>>()?;
            if symmetric {
                let need = r * (r + 1) / 2;
                if r != c || vals.len() != need {
                    return Err(parse_err(path, format!("expected {need} entries, found {}", vals.len())));
                }
                let mut k = 0;
                for j in 0..c {
                    for i in j..r {
                        m[(i, j)] = vals[k];
                        m[(j, i)] = vals[k];
                        k += 1;
                    }
                }
            } else {
                if vals.len() != r * c {
                    return Err(parse_err(path, format!("expected {} entries, found {}", r * c, vals.len())));
                }
                m.as_mut_slice().copy_from_slice(&vals);
            }
            Ok(m)
        }
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err(path, "coordinate size line needs rows, cols and nnz"));
            }
            let (r, c, nnz) = (dims[0], dims[1], dims[2]);
            let mut m = Mat::zeros(r, c);
            let mut count = 0;
            for l in body {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(path, format!("bad entry line '{l}'")));
                }
                let i: usize = t[0].parse().map_err(|_| parse_err(path, "bad row index"))?;
                let j: usize = t[1].parse().map_err(|_| parse_err(path, "bad column index"))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(parse_err(path, format!("index ({i},{j}) out of range")));
                }
                let v = num(t[2])?;
                m[(i - 1, j - 1)] = v;
                if symmetric {
                    m[(j - 1, i - 1)] = v;
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(path, format!("expected {nnz} entries, found {count}")));
            }
            Ok(m)
        }
        _ => Err(parse_err(path, format!("unsupported format '{fmt}'"))),
    }
}

pub fn read_matrix_market(path: &Path) -> IoResult<Mat> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e })?;
    parse_matrix_market(&text, path)
}

pub fn write_matrix_market(path: &Path, m: &Mat) -> IoResult<()> {
    fs::write(path, format_matrix_market(m)).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e })
}

/// A system loaded from a manifest, in either form.
#[derive(Clone, Debug)]
pub enum LoadedSystem {
    Energy(PhSystem),
    CoEnergy(CoEnergyPh),
}

impl LoadedSystem {
    pub fn into_energy(self) -> crate::Result<PhSystem> {
        match self {
            LoadedSystem::Energy(s) => Ok(s),
            LoadedSystem::CoEnergy(ce) => crate::ph::from_coenergy(&ce),
        }
    }
}

fn write_text(path: &Path, text: &str) -> IoResult<()> {
    fs::write(path, text).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e })
}

/// Writes `<stem>_{J,R,Q,B}.mtx` next to `manifest` and the manifest itself.
pub fn write_manifest(manifest: &Path, sys: &PhSystem) -> IoResult<()> {
    write_named(manifest, &[("J", &sys.j), ("R", &sys.r), ("Q", &sys.q), ("B", &sys.b)])
}

pub fn write_coenergy_manifest(manifest: &Path, ce: &CoEnergyPh) -> IoResult<()> {
    write_named(manifest, &[("E", &ce.e), ("J", &ce.j), ("R", &ce.r), ("B", &ce.b)])
}

fn write_named(manifest: &Path, mats: &[(&str, &Mat)]) -> IoResult<()> {
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("system");
    let mut text = format!("format={MANIFEST_VERSION}\n");
    for (key, m) in mats {
        let file = format!("{stem}_{key}.mtx");
        write_matrix_market(&dir.join(&file), m)?;
        let _ = writeln!(text, "{key}={file}");
    }
    write_text(manifest, &text)
}

pub fn read_manifest(manifest: &Path) -> IoResult<LoadedSystem> {
    let text = fs::read_to_string(manifest).map_err(|e| IoError::Io { path: manifest.to_path_buf(), source: e })?;
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut entries: Vec<(String, String)> = vec![];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(manifest, format!("expected key=value, got '{line}'")))?;
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }
    let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    match get("format") {
        Some(f) if f == MANIFEST_VERSION => {}
        Some(f) => return Err(parse_err(manifest, format!("unsupported format '{f}'"))),
        None => return Err(parse_err(manifest, "missing format line")),
    }
    let load = |key: &str| -> IoResult<Mat> {
        let file = get(key).ok_or_else(|| parse_err(manifest, format!("missing entry {key}")))?;
        read_matrix_market(&dir.join(file))
    };
    let sys = if get("E").is_some() {
        LoadedSystem::CoEnergy(CoEnergyPh { e: load("E")?, j: load("J")?, r: load("R")?, b: load("B")? })
    } else {
        LoadedSystem::Energy(PhSystem { j: load("J")?, r: load("R")?, q: load("Q")?, b: load("B")? })
    };
    let (n, b) = match &sys {
        LoadedSystem::Energy(s) => (s.j.nrows(), &s.b),
        LoadedSystem::CoEnergy(c) => (c.j.nrows(), &c.b),
    };
    let square: Vec<&Mat> = match &sys {
        LoadedSystem::Energy(s) => vec![&s.j, &s.r, &s.q],
        LoadedSystem::CoEnergy(c) => vec![&c.e, &c.j, &c.r],
    };
    if square.iter().any(|m| m.shape() != (n, n)) || b.nrows() != n {
        return Err(parse_err(manifest, "matrix dimensions disagree"));
    }
    Ok(sys)
}
