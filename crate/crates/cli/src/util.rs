//! Error-to-exit-code mapping and small shared helpers.

use std::fmt::Display;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use artikit_core::artgrid::{read_avox, ArtGridError, ArticulatedVoxelGrid};
use artikit_core::ingest::Category;
use artikit_core::kinematics::ArticulationState;
use artikit_core::models::ModelError;
use artikit_core::splat::SplatError;
use thiserror::Error;

/// One variant per exit code; `main` prints the JSON form to stderr and
/// exits with `code()`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingInput(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.to_string(), "code": self.code() }).to_string()
    }
}

/// Io errors become missing-input when the file is absent, otherwise
/// validation; everything else a core module rejects is validation.
fn from_io(e: &std::io::Error, what: &dyn Display) -> CliError {
    if e.kind() == ErrorKind::NotFound {
        CliError::MissingInput(format!("{what}: not found"))
    } else {
        CliError::Validation(format!("{what}: {e}"))
    }
}

pub fn grid_err(path: &Path, e: ArtGridError) -> CliError {
    match e {
        ArtGridError::Io(ref io) => from_io(io, &path.display()),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    }
}

pub fn splat_err(path: &Path, e: SplatError) -> CliError {
    match e {
        SplatError::Io(ref io) => from_io(io, &path.display()),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    }
}

pub fn model_err(e: ModelError) -> CliError {
    CliError::Validation(e.to_string())
}

pub type Grid = ArticulatedVoxelGrid<f64>;

pub fn load_grid(path: &Path) -> Result<Grid, CliError> {
    let file = fs::File::open(path).map_err(|e| from_io(&e, &path.display()))?;
    read_avox(std::io::BufReader::new(file)).map_err(|e| grid_err(path, e))
}

pub fn save_grid(grid: &Grid, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| from_io(&e, &path.display()))?;
    artikit_core::artgrid::write_avox(grid, std::io::BufWriter::new(file))
        .map_err(|e| grid_err(path, e))
}

/// All `.avox` files in `dir`, sorted by filename so runs are
/// order-stable across platforms.
pub fn grid_dir(dir: &Path) -> Result<Vec<(PathBuf, Grid)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| from_io(&e, &dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "avox"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::MissingInput(format!(
            "{}: no .avox files",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let g = load_grid(&p)?;
        out.push((p, g));
    }
    Ok(out)
}

/// Condition vector for a dataset file: one-hot over categories when the
/// file stem starts with a category name (`cabinet-3.avox`), zero
/// otherwise. Grids do not store their category, so the filename carries
/// it through training.
pub fn cond_of_path(path: &Path) -> Vec<f64> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let mut v = vec![0.0; Category::COUNT];
    for (i, c) in Category::ALL.iter().enumerate() {
        if stem.starts_with(c.name()) {
            v[i] = 1.0;
            return v;
        }
    }
    v
}

pub fn cond_of_category(name: &str) -> Result<Vec<f64>, CliError> {
    let c = Category::parse(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown category {name:?}; expected one of {}",
            Category::ALL.map(|c| c.name()).join(", ")
        ))
    })?;
    let mut v = vec![0.0; Category::COUNT];
    v[c.index()] = 1.0;
    Ok(v)
}

/// Parse `"1:0.3,2:1.57"` into an articulation state. An empty string is
/// the rest state.
pub fn parse_state(s: &str) -> Result<ArticulationState<f64>, CliError> {
    let mut st = ArticulationState::rest();
    if s.trim().is_empty() {
        return Ok(st);
    }
    for piece in s.split(',') {
        let (id, val) = piece.split_once(':').ok_or_else(|| {
            CliError::Usage(format!("bad state entry {piece:?}; expected part:value"))
        })?;
        let id: i32 = id
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad part id {id:?}")))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad joint value {val:?}")))?;
        st.values.insert(id, val);
    }
    Ok(st)
}

pub fn require_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("{name} is not finite ({v})")))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| from_io(&e, &parent.display()))?;
        }
    }
    fs::write(path, text).map_err(|e| from_io(&e, &path.display()))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| from_io(&e, &path.display()))
}

/// One-line machine-readable success summary on stdout.
pub fn emit(summary: serde_json::Value) {
    println!("{summary}");
}
