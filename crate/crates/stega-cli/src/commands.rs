//! Subcommand implementations. Results go to stdout, line-oriented
//! key=value logs go to stderr, and per-image work runs on a worker pool
//! with outputs emitted in input order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use stega_core::budget::{self, Convention};
use stega_core::embed::simulate_embedding;
use stega_core::fusion::{evaluate, EvalReport};
use stega_core::image::GrayImage;
use stega_core::model::GsModel;
use stega_core::rng::{self, Stream};
use stega_core::synth::synthetic_cover;
use stega_core::train::{fit_detector, ImagePair};

use crate::config::{ConfigError, RunConfig};
use crate::export;
use crate::manifest::{DatasetManifest, ManifestEntry, ManifestError};
use crate::model_file::{self, ModelFileError};
use crate::pgm::{self, PgmError};

/// Command failures carry the exit-code class with them: usage 1, bad
/// data 2, training 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CmdError {
    Usage(String),
    Data(String),
    Training(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::Training(_) => 3,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(msg) => write!(f, "usage: {msg}"),
            CmdError::Data(msg) => write!(f, "data: {msg}"),
            CmdError::Training(msg) => write!(f, "training: {msg}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Usage(e.to_string())
    }
}

impl From<PgmError> for CmdError {
    fn from(e: PgmError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<ManifestError> for CmdError {
    fn from(e: ManifestError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<ModelFileError> for CmdError {
    fn from(e: ModelFileError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Data(e.to_string())
    }
}

fn log_stage(stage: &str, start: Instant, extra: &str) {
    eprintln!(
        "stage={stage} elapsed_ms={}{}{extra}",
        start.elapsed().as_millis(),
        if extra.is_empty() { "" } else { " " }
    );
}

// ---- embed -------------------------------------------------------------

pub enum EmbedSource {
    Synthetic { count: usize, size: usize },
    CoverDir(PathBuf),
}

pub fn cmd_embed(config: &RunConfig, source: EmbedSource, out: &Path) -> Result<(), CmdError> {
    let start = Instant::now();
    fs::create_dir_all(out)?;

    // Covers: either seeded synthetic textures or every .pgm in a
    // directory, in sorted order.
    let covers: Vec<(PathBuf, GrayImage)> = match source {
        EmbedSource::Synthetic { count, size } => {
            if count == 0 {
                return Err(CmdError::Usage("--synthetic needs a positive count".into()));
            }
            if size < 15 {
                return Err(CmdError::Usage(
                    "--size must be at least 15 for the cost kernels".into(),
                ));
            }
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let img = synthetic_cover(size, size, config.seed, i as u64);
                    let path = out.join(format!("cover_{i:05}.pgm"));
                    pgm::write_pgm(&path, &img)?;
                    Ok((path, img))
                })
                .collect::<Result<_, CmdError>>()?
        }
        EmbedSource::CoverDir(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CmdError::Data(format!(
                    "no .pgm covers under {}",
                    dir.display()
                )));
            }
            paths
                .into_par_iter()
                .map(|p| Ok((p.clone(), pgm::read_pgm(&p)?)))
                .collect::<Result<_, CmdError>>()?
        }
    };
    log_stage("covers", start, &format!("count={}", covers.len()));

    let stage = Instant::now();
    let entries: Vec<ManifestEntry> = covers
        .par_iter()
        .enumerate()
        .map(|(i, (cover_path, cover))| {
            let costs = config
                .scheme
                .cost(cover)
                .map_err(|e| CmdError::Data(format!("{}: {e}", cover_path.display())))?;
            let embed_seed = rng::derive_seed(config.seed, Stream::Embedding, i as u64);
            let result = simulate_embedding(cover, &costs, config.payload, embed_seed)
                .map_err(|e| CmdError::Data(format!("{}: {e:?}", cover_path.display())))?;
            let stego_path = out.join(format!("stego_{i:05}.pgm"));
            let change_path = out.join(format!("change_{i:05}.pgm"));
            pgm::write_pgm(&stego_path, &result.stego)?;
            pgm::write_change_map(&change_path, &result.change_map, cover.width, cover.height)?;
            Ok(ManifestEntry {
                cover: cover_path.clone(),
                stego: stego_path,
                change_map: Some(change_path),
            })
        })
        .collect::<Result<_, CmdError>>()?;
    log_stage("embed", stage, &format!("payload={}", config.payload));

    let manifest = DatasetManifest {
        entries,
        split_seed: config.seed,
        split: config.splits(),
    };
    let manifest_path = out.join("manifest.tsv");
    manifest.write(&manifest_path)?;
    println!("manifest={}", manifest_path.display());
    println!("pairs={}", manifest.entries.len());
    Ok(())
}

// ---- fit ---------------------------------------------------------------

fn load_pair(entry: &ManifestEntry) -> Result<ImagePair, CmdError> {
    let change_path = entry.change_map.as_ref().ok_or_else(|| {
        CmdError::Data(format!(
            "fit needs change maps; entry {} has none",
            entry.cover.display()
        ))
    })?;
    let cover = pgm::read_pgm(&entry.cover)?;
    let stego = pgm::read_pgm(&entry.stego)?;
    let (change_map, w, h) = pgm::read_change_map(change_path)?;
    if (w, h) != (cover.width, cover.height) || (w, h) != (stego.width, stego.height) {
        return Err(CmdError::Data(format!(
            "entry {}: cover/stego/change-map dimensions disagree",
            entry.cover.display()
        )));
    }
    Ok(ImagePair {
        cover,
        stego,
        change_map,
    })
}

pub fn cmd_fit(
    config: &RunConfig,
    manifest_path: &Path,
    model_out: &Path,
    diagnostics_out: Option<&Path>,
) -> Result<(), CmdError> {
    let start = Instant::now();
    let manifest = DatasetManifest::read(manifest_path, config.seed, config.splits())?;
    let fingerprint = manifest.fingerprint();
    let (train_m, val_m, test_m) = manifest.split_three()?;
    if train_m.entries.is_empty() || val_m.entries.is_empty() {
        return Err(CmdError::Data(
            "the split left train or validation empty; adjust fractions or dataset size".into(),
        ));
    }
    if let Some(dir) = diagnostics_out {
        fs::create_dir_all(dir)?;
        train_m.write(&dir.join("split_train.tsv"))?;
        val_m.write(&dir.join("split_val.tsv"))?;
        test_m.write(&dir.join("split_test.tsv"))?;
    }
    log_stage(
        "split",
        start,
        &format!(
            "train={} val={} test={}",
            train_m.entries.len(),
            val_m.entries.len(),
            test_m.entries.len()
        ),
    );

    let stage = Instant::now();
    let train: Vec<ImagePair> = train_m
        .entries
        .par_iter()
        .map(load_pair)
        .collect::<Result<_, _>>()?;
    let val: Vec<ImagePair> = val_m
        .entries
        .par_iter()
        .map(load_pair)
        .collect::<Result<_, _>>()?;
    log_stage("load", stage, "");

    let stage = Instant::now();
    let (model, diagnostics) = fit_detector(
        &train,
        &val,
        config.scheme,
        config.preprocessing,
        &config.train_config(),
        config.seed,
        fingerprint,
        config.snapshot(),
    )
    .map_err(|e| CmdError::Training(e.to_string()))?;
    log_stage("fit", stage, "");

    let stage = Instant::now();
    if let Some(dir) = diagnostics_out {
        export::write_m_curve_csv(&dir.join("m_curve.csv"), &diagnostics.m_curve)?;
        export::write_dft_loss_csv(&dir.join("dft_losses.csv"), &model)?;
    }
    model_file::save_model(model_out, &model)?;
    log_stage("save", stage, "");

    println!("model={}", model_out.display());
    println!(
        "trained_groups={}",
        model
            .group1
            .iter()
            .filter(|s| matches!(s, stega_core::anomaly::Group1Slot::Trained(_)))
            .count()
    );
    println!(
        "m_values={}",
        model
            .fusion
            .m_values
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    for (g, (a1, a2)) in diagnostics
        .round1_val_auc
        .iter()
        .zip(&diagnostics.round2_val_auc)
        .enumerate()
    {
        let fmt = |a: &Option<f64>| a.map_or("na".to_string(), |v| format!("{v:.4}"));
        println!("group={g} round1_auc={} round2_auc={}", fmt(a1), fmt(a2));
    }
    Ok(())
}

// ---- detect ------------------------------------------------------------

pub struct DetectOptions {
    pub export_scores: bool,
    pub export_spots: bool,
    pub out: PathBuf,
}

pub fn cmd_detect(
    model_path: &Path,
    images: &[PathBuf],
    options: &DetectOptions,
) -> Result<(), CmdError> {
    if images.is_empty() {
        return Err(CmdError::Usage("detect needs at least one image".into()));
    }
    let start = Instant::now();
    let model = model_file::load_model(model_path)?;
    let exporting = options.export_scores || options.export_spots;
    if exporting {
        fs::create_dir_all(&options.out)?;
    }

    let lines: Vec<String> = images
        .par_iter()
        .map(|path| {
            let img = pgm::read_pgm(path)?;
            let analysis = model
                .analyze(&img)
                .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            if options.export_scores {
                export::write_score_plane(
                    &options.out.join(format!("{stem}_scores.bin")),
                    &analysis.map,
                )?;
                export::write_heatmap(&options.out.join(format!("{stem}_heat.pgm")), &analysis.map)?;
            }
            if options.export_spots {
                export::write_spot_csv(
                    &options.out.join(format!("{stem}_spots.csv")),
                    &analysis.spots,
                )?;
            }
            let scores = analysis
                .scores
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join("\t");
            Ok(format!(
                "{}\t{}\t{scores}",
                path.display(),
                analysis.stego as u8
            ))
        })
        .collect::<Result<_, CmdError>>()?;
    for line in lines {
        println!("{line}");
    }
    log_stage("detect", start, &format!("images={}", images.len()));
    Ok(())
}

// ---- eval --------------------------------------------------------------

pub fn run_eval(model: &GsModel, manifest: &DatasetManifest) -> Result<EvalReport, CmdError> {
    if manifest.entries.is_empty() {
        return Err(CmdError::Data("empty test manifest".into()));
    }
    let decisions: Vec<(bool, bool)> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let cover = pgm::read_pgm(&entry.cover)?;
            let stego = pgm::read_pgm(&entry.stego)?;
            let c = model
                .analyze(&cover)
                .map_err(|e| CmdError::Data(format!("{}: {e}", entry.cover.display())))?;
            let s = model
                .analyze(&stego)
                .map_err(|e| CmdError::Data(format!("{}: {e}", entry.stego.display())))?;
            Ok([(c.stego, false), (s.stego, true)])
        })
        .collect::<Result<Vec<_>, CmdError>>()?
        .into_iter()
        .flatten()
        .collect();
    evaluate(&decisions).map_err(|e| CmdError::Data(format!("evaluation: {e}")))
}

pub fn cmd_eval(model_path: &Path, manifest_path: &Path) -> Result<(), CmdError> {
    let start = Instant::now();
    let model = model_file::load_model(model_path)?;
    let manifest = DatasetManifest::read(manifest_path, 0, (0.0, 0.0, 1.0))?;
    let report = run_eval(&model, &manifest)?;
    log_stage("eval", start, &format!("pairs={}", manifest.entries.len()));
    println!("n_cover={}", report.n_cover);
    println!("n_stego={}", report.n_stego);
    println!("p_fa={}", report.p_fa);
    println!("p_md={}", report.p_md);
    println!("p_e={}", report.p_e);
    Ok(())
}

// ---- budget ------------------------------------------------------------

pub fn cmd_budget(
    model_path: &Path,
    convention: Convention,
    image_width: usize,
    image_height: usize,
) -> Result<(), CmdError> {
    let model = model_file::load_model(model_path)?;
    if image_width < 7 || image_height < 7 {
        return Err(CmdError::Usage(
            "budget needs an image size of at least 7x7".into(),
        ));
    }
    let interior = (image_width - 6) * (image_height - 6);
    let report = budget::audit(&model, convention, interior);
    let p = &report.params;
    let f = &report.flops;

    println!("convention={}", convention.name());
    println!("interior_pixels={interior}");
    println!("params_saab_selected={}", p.saab_selected);
    println!("params_saab_full={}", p.saab_full);
    println!("params_module1_classifiers={}", p.module1_classifiers);
    println!("params_module1_total={}", p.module1_total);
    println!("params_module2_classifiers={}", p.module2_classifiers);
    println!("params_module3_classifiers={}", p.module3_classifiers);
    println!("params_total={}", p.total);
    println!("flops_patch_cost={}", f.patch_cost);
    println!("flops_saab_selected={}", f.saab_selected);
    println!("flops_saab_full={}", f.saab_full);
    println!("flops_module1_classifiers={}", f.module1_classifiers);
    println!("flops_module1_subtotal={}", f.module1_subtotal);
    println!("flops_module2_matched_filter={}", f.module2_matched_filter);
    println!("flops_module2_classifier={}", f.module2_classifier);
    println!("flops_module2_subtotal={}", f.module2_subtotal);
    println!("flops_module3_amortized={}", f.module3_amortized);
    println!("flops_total={}", f.total);

    println!();
    println!("| Stage | Parameters | FLOPs/pixel |");
    println!("|---|---|---|");
    println!(
        "| Module 1 (transform + classifiers) | {} | {} |",
        p.module1_total, f.module1_subtotal
    );
    println!(
        "| Module 2 (filter + classifier) | {} | {} |",
        p.module2_classifiers, f.module2_subtotal
    );
    println!(
        "| Module 3 (fusion, amortized) | {} | {} |",
        p.module3_classifiers, f.module3_amortized
    );
    println!("| Patch-cost precompute | 0 | {} |", f.patch_cost);
    println!("| Total | {} | {} |", p.total, f.total);
    Ok(())
}
