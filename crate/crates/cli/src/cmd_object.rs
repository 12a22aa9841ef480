//! Object-level subcommands: gen, ingest, articulate, segment, eval.

use std::path::{Path, PathBuf};

use artikit_core::eval::{full_report, uniform_fractions, EvalError, Matching};
use artikit_core::ingest::{
    canonicalize, gen_procedural, parse_object, voxelize, write_object, Category, IngestError,
    ProceduralSpec,
};
use artikit_core::kinematics::articulate_points;
use artikit_core::segment::{aggregate_params, segment_parts};
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::util::{
    emit, load_grid, parse_state, read_text, require_finite, save_grid, write_text, CliError,
};

fn ingest_err(e: IngestError) -> CliError {
    CliError::Validation(e.to_string())
}

pub struct GenArgs {
    pub seed: Option<u64>,
    pub category: String,
    pub drawers: Option<usize>,
    pub doors: Option<usize>,
    pub handles: bool,
    pub jitter: Option<f64>,
    pub out: PathBuf,
}

/// Per-category movable-part defaults; every category articulates out of
/// the box, which `ProceduralSpec::validate` requires anyway.
fn default_counts(c: Category) -> (usize, usize) {
    match c {
        Category::Cabinet => (2, 0),
        Category::Table => (1, 0),
        Category::Dishwasher => (1, 1),
        Category::Microwave => (0, 1),
    }
}

pub fn gen(cfg: &FileConfig, a: GenArgs) -> Result<(), CliError> {
    let seed = pick(a.seed, cfg.seed, 0);
    let category = Category::parse(&a.category).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown category {:?}; expected one of {}",
            a.category,
            Category::ALL.map(|c| c.name()).join(", ")
        ))
    })?;
    let (dr, doors) = default_counts(category);
    let spec = ProceduralSpec {
        category,
        n_drawers: a.drawers.unwrap_or(dr),
        n_doors: a.doors.unwrap_or(doors),
        handle_per_part: a.handles,
        size_jitter: a.jitter.unwrap_or(0.1),
    };
    let obj = gen_procedural::<f64>(seed, &spec).map_err(ingest_err)?;
    write_text(&a.out, &write_object(&obj))?;
    emit(json!({
        "object": a.out,
        "name": obj.name,
        "parts": obj.parts.len(),
        "seed": seed,
    }));
    Ok(())
}

pub fn ingest(
    cfg: &FileConfig,
    obj_path: &Path,
    resolution: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let n = pick(resolution, cfg.voxel.resolution, 64);
    let text = read_text(obj_path)?;
    let obj = parse_object::<f64>(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", obj_path.display())))?;
    let canon = canonicalize(&obj).map_err(ingest_err)?;
    let grid = voxelize(&canon, n).map_err(ingest_err)?;
    save_grid(&grid, out)?;
    emit(json!({
        "grid": out,
        "resolution": n,
        "voxels": grid.active_count(),
        "parts": grid.parts().len(),
    }));
    Ok(())
}

pub fn articulate(grid_path: &Path, state: &str, out: &Path) -> Result<(), CliError> {
    let grid = load_grid(grid_path)?;
    let st = parse_state(state)?;
    let cloud =
        articulate_points(&grid, &st).map_err(|e| CliError::Validation(e.to_string()))?;
    let labels: Vec<&str> = cloud.labels.iter().map(|l| l.name()).collect();
    let doc = json!({
        "points": cloud.points,
        "labels": labels,
        "part_ids": cloud.part_ids,
    });
    write_text(out, &serde_json::to_string(&doc).expect("points serialize"))?;
    emit(json!({ "points": out, "count": cloud.points.len() }));
    Ok(())
}

pub fn segment(
    cfg: &FileConfig,
    grid_path: &Path,
    eps: Option<f64>,
    min_pts: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let eps = pick(eps, cfg.segment.eps, 0.1);
    let min_pts = pick(min_pts, cfg.segment.min_pts, 4);
    let grid = load_grid(grid_path)?;
    let assignment = segment_parts(&grid, eps, min_pts)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let grid = aggregate_params(&grid, &assignment)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    save_grid(&grid, out)?;
    emit(json!({
        "grid": out,
        "parts": assignment.n_parts,
        "noise_merged": assignment.noise.len(),
    }));
    Ok(())
}

pub fn eval(
    cfg: &FileConfig,
    pred_path: &Path,
    gt_path: &Path,
    states: Option<usize>,
    json_out: Option<&Path>,
) -> Result<(), CliError> {
    let states = pick(states, cfg.eval.states, 5);
    let pred = load_grid(pred_path)?;
    let gt = load_grid(gt_path)?;
    let fractions = uniform_fractions(states);
    let report = full_report(&pred, &gt, &fractions, Matching::GreedyBboxCenter)
        .map_err(|e: EvalError| CliError::Validation(e.to_string()))?;
    require_finite("rest-state chamfer", report.rs_cd)?;
    require_finite("articulated chamfer", report.as_cd)?;
    let doc = serde_json::to_value(&report).expect("report serializes");
    if let Some(path) = json_out {
        write_text(path, &serde_json::to_string_pretty(&doc).expect("report"))?;
    }
    emit(doc);
    Ok(())
}
