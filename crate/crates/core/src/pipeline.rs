//! Batch generation over a directory of backgrounds.
//!
//! Output layout:
//!
//! ```text
//! out/
//!   labels/0000.png  labels/0001.png ...
//!   meta/0000.json   meta/0001.json  ...
//!   summary.json
//! ```
//!
//! Image `i` uses background `i mod n` (backgrounds sorted by file name) and
//! seed `derive_seed(master_seed, i)`, so outputs do not depend on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{CellGrid, GridError, GridGeometry};
use crate::metadata::{emit_metadata, ImageContext};
use crate::palette::{
    decode_label_image, decode_label_image_snapped, encode_label_image, is_label_image_path, strip_dynamic,
    ClassPalette, LabelImage, PaletteError,
};
use crate::scene::{compile, SceneSpec};
use crate::seed::derive_seed;
use crate::synth::{generate_object, SynthConfig};
use crate::synthetic::synthetic_background;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: PaletteError },
    #[error("no label images (.png, .ppm) in {0}")]
    NoBackgrounds(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub scene: SceneSpec,
    /// Number of images to generate.
    pub count: usize,
    pub master_seed: u64,
    pub palette: ClassPalette,
    pub block_dim: usize,
    pub sub_dim: usize,
    pub synth: SynthConfig,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    /// Snap off-palette background pixels within this L∞ distance.
    pub snap: Option<u8>,
}

impl RunConfig {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, scene: SceneSpec) -> Self {
        RunConfig {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            scene,
            count: 1,
            master_seed: 0,
            palette: ClassPalette::default(),
            block_dim: 64,
            sub_dim: 8,
            synth: SynthConfig::default(),
            jobs: 1,
            snap: None,
        }
    }
}

/// A background ready for generation.
#[derive(Debug, Clone)]
pub struct Background {
    pub name: String,
    pub sha256: String,
    pub grid: CellGrid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub requested: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failures_by_stage: BTreeMap<String, usize>,
    pub failures: Vec<ImageFailure>,
}

impl BatchSummary {
    /// 0 when every image was produced, 2 for a partial batch, 1 when none was.
    pub fn exit_code(&self) -> i32 {
        match (self.succeeded, self.failed) {
            (_, 0) => 0,
            (0, _) => 1,
            _ => 2,
        }
    }
}

/// Sorted label-image files directly inside `dir`.
pub fn list_label_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && is_label_image_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn decode_file(path: &Path, palette: &ClassPalette, block_dim: usize, sub_dim: usize, snap: Option<u8>) -> Result<(Vec<u8>, CellGrid), PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let wrap = |source| PipelineError::Image { path: path.to_path_buf(), source };
    let img = LabelImage::read(path).map_err(wrap)?;
    let grid = match snap {
        Some(d) => decode_label_image_snapped(&img, palette, block_dim, sub_dim, d),
        None => decode_label_image(&img, palette, block_dim, sub_dim),
    }
    .map_err(wrap)?;
    Ok((bytes, grid))
}

/// Loads every background in `dir`, with dynamic classes stripped.
pub fn load_backgrounds(
    dir: &Path,
    palette: &ClassPalette,
    block_dim: usize,
    sub_dim: usize,
    snap: Option<u8>,
) -> Result<Vec<Background>, PipelineError> {
    let paths = list_label_images(dir)?;
    if paths.is_empty() {
        return Err(PipelineError::NoBackgrounds(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| {
            let (bytes, grid) = decode_file(p, palette, block_dim, sub_dim, snap)?;
            Ok(Background {
                name: p.file_name().expect("listed files have names").to_string_lossy().into_owned(),
                sha256: hex::encode(Sha256::digest(&bytes)),
                grid: strip_dynamic(&grid),
            })
        })
        .collect()
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let name = path.file_name().expect("output paths have names").to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

enum Outcome {
    Done,
    Failed(ImageFailure),
}

fn generate_one(cfg: &RunConfig, backgrounds: &[Background], i: usize) -> Result<Outcome, PipelineError> {
    let bg = &backgrounds[i % backgrounds.len()];
    let image_seed = derive_seed(cfg.master_seed, i as u64);
    let fail = |stage: String, message: String| Ok(Outcome::Failed(ImageFailure { image: i, stage, message }));
    let plan = match compile(&cfg.scene, &bg.grid, image_seed) {
        Ok(p) => p,
        Err(e) => return fail("compile".into(), e.to_string()),
    };
    let mut grid = bg.grid.clone();
    let mut instances = Vec::with_capacity(plan.tasks.len());
    for task in &plan.tasks {
        match generate_object(&mut grid, &task.spec, &cfg.synth, task.seed) {
            Ok(inst) => instances.push(inst),
            Err(e) => return fail(e.stage().to_string(), format!("task {}: {e}", task.index)),
        }
    }
    let stem = format!("{i:04}");
    let label_path = cfg.output_dir.join("labels").join(format!("{stem}.png"));
    let meta_path = cfg.output_dir.join("meta").join(format!("{stem}.json"));
    let image_name = format!("{stem}.png");
    let ctx = ImageContext {
        image: &image_name,
        background: &bg.name,
        background_sha256: &bg.sha256,
        master_seed: cfg.master_seed,
        expected_classes: cfg.scene.expected_classes(),
        geometry: *grid.geometry(),
        config: &cfg.synth,
    };
    let record = emit_metadata(&ctx, &plan, &instances);
    let png = encode_label_image(&grid, &cfg.palette)
        .encode_for(&label_path)
        .map_err(|source| PipelineError::Image { path: label_path.clone(), source })?;
    write_atomic(&label_path, &png)?;
    write_atomic(&meta_path, record.to_json().as_bytes())?;
    Ok(Outcome::Done)
}

/// Generates `cfg.count` images. Individual failures are recorded in the
/// summary; I/O problems abort the batch.
pub fn run_batch(cfg: &RunConfig) -> Result<BatchSummary, PipelineError> {
    if cfg.count == 0 {
        return Err(PipelineError::Config("count must be at least 1".into()));
    }
    let backgrounds = load_backgrounds(&cfg.input_dir, &cfg.palette, cfg.block_dim, cfg.sub_dim, cfg.snap)?;
    run_batch_with(cfg, &backgrounds)
}

/// [`run_batch`] on backgrounds that are already loaded.
pub fn run_batch_with(cfg: &RunConfig, backgrounds: &[Background]) -> Result<BatchSummary, PipelineError> {
    if backgrounds.is_empty() {
        return Err(PipelineError::NoBackgrounds(cfg.input_dir.clone()));
    }
    for sub in ["labels", "meta"] {
        let dir = cfg.output_dir.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let outcomes: Vec<Result<Outcome, PipelineError>> =
        pool.install(|| (0..cfg.count).into_par_iter().map(|i| generate_one(cfg, backgrounds, i)).collect());

    let mut summary = BatchSummary { requested: cfg.count, ..BatchSummary::default() };
    for outcome in outcomes {
        match outcome? {
            Outcome::Done => summary.succeeded += 1,
            Outcome::Failed(f) => {
                summary.failed += 1;
                *summary.failures_by_stage.entry(f.stage.clone()).or_insert(0) += 1;
                summary.failures.push(f);
            }
        }
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary is serializable") + "\n";
    write_atomic(&cfg.output_dir.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}

/// Removes dynamic classes from every label image in `input`, writing the
/// results under the same names in `output`. Returns the number of files.
pub fn strip_dir(
    input: &Path,
    output: &Path,
    palette: &ClassPalette,
    snap: Option<u8>,
) -> Result<usize, PipelineError> {
    let paths = list_label_images(input)?;
    fs::create_dir_all(output).map_err(io_err(output))?;
    for p in &paths {
        // geometry only matters for the tool refill rule
        let wrap = |source| PipelineError::Image { path: p.clone(), source };
        let img = LabelImage::read(p).map_err(wrap)?;
        let block = block_dim_for(img.width, img.height);
        let grid = match snap {
            Some(d) => decode_label_image_snapped(&img, palette, block, 1, d),
            None => decode_label_image(&img, palette, block, 1),
        }
        .map_err(wrap)?;
        let out = output.join(p.file_name().expect("listed files have names"));
        let bytes = encode_label_image(&strip_dynamic(&grid), palette)
            .encode_for(&out)
            .map_err(|source| PipelineError::Image { path: out.clone(), source })?;
        write_atomic(&out, &bytes)?;
    }
    Ok(paths.len())
}

/// Largest power-of-two block side up to 64 that tiles the image.
fn block_dim_for(width: usize, height: usize) -> usize {
    let mut b = 64;
    while b > 1 && (!width.is_multiple_of(b) || !height.is_multiple_of(b)) {
        b /= 2;
    }
    b
}

/// Writes `count` procedural backgrounds as `bg_NNNN.png`.
pub fn write_synthetic_backgrounds(
    dir: &Path,
    count: usize,
    geometry: &GridGeometry,
    seed: u64,
    palette: &ClassPalette,
) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("bg_{i:04}.png"));
            let grid = synthetic_background(geometry, derive_seed(seed, i as u64));
            let bytes = encode_label_image(&grid, palette)
                .encode_for(&path)
                .map_err(|source| PipelineError::Image { path: path.clone(), source })?;
            write_atomic(&path, &bytes)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let s = |succeeded, failed| BatchSummary { succeeded, failed, ..Default::default() };
        assert_eq!(s(3, 0).exit_code(), 0);
        assert_eq!(s(2, 1).exit_code(), 2);
        assert_eq!(s(0, 3).exit_code(), 1);
    }

    #[test]
    fn block_dim_fallback() {
        assert_eq!(block_dim_for(512, 512), 64);
        assert_eq!(block_dim_for(96, 64), 32);
        assert_eq!(block_dim_for(7, 7), 1);
    }
}
