//! Command-line front end for the auto-vocabulary segmentation pipeline.
//!
//! Every subcommand is a pure function of its flags and input files: all
//! randomness flows through explicit seeds, so reruns produce byte-identical
//! outputs. Summaries go to standard output as JSON; pinned file formats
//! (scene directories, checkpoints, CSVs, PLY) are written behind `--out`
//! flags. Exit codes: 0 success, 1 usage error, 2 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};

use autovoc_core::captioning::{
    caption_to_tags, decode_point_caption, merge_vocabularies, Caption, CaptionSource, Lexicon,
    Vocabulary,
};
use autovoc_core::embedding::SyntheticSpace;
use autovoc_core::geometry::{pillar_masks, sector_masks, visibility_masks, MaskSet};
use autovoc_core::metrics::{
    evaluate, map_vocabulary, remap_predictions, tpss, MappingPair, VocabularyMapping,
};
use autovoc_core::scene::{export_ply, generate_scene, read_scene, write_scene, Scene, SceneSpec};
use autovoc_core::segmenter::{segment_scene, SegmentOptions, SegmentationResult};
use autovoc_core::smap::io::{load_checkpoint, save_checkpoint};
use autovoc_core::smap::{smap_forward, train_smap, SmapBatch, SmapParams, TrainConfig};
use autovoc_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "autovoc",
    version,
    about = "Auto-vocabulary 3D segmentation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// How to partition the cloud into point groups.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskKindArg {
    /// Equal angular sectors around the vertical axis.
    Sector,
    /// Square grid cells in the ground plane.
    Pillar,
    /// One mask of visible points per camera.
    Visibility,
}

/// Flags shared by commands that need the synthetic embedding space.
#[derive(clap::Args)]
struct SpaceArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Seed of the embedding space.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise on oracle point features.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

impl SpaceArgs {
    fn space(&self) -> Result<SyntheticSpace> {
        SyntheticSpace::new(self.dim, self.seed, self.noise_sigma)
    }
}

/// Flags shared by commands that partition a cloud into masks.
#[derive(clap::Args)]
struct MaskArgs {
    /// Partitioning scheme.
    #[arg(long, value_enum, default_value_t = MaskKindArg::Sector)]
    mask_kind: MaskKindArg,
    /// Sector count for `--mask-kind sector`.
    #[arg(long, default_value_t = 12)]
    sectors: usize,
    /// Cell side for `--mask-kind pillar`.
    #[arg(long, default_value_t = 0.5)]
    pillar_side: f64,
}

impl MaskArgs {
    fn build(&self, scene: &Scene) -> Result<MaskSet> {
        match self.mask_kind {
            MaskKindArg::Sector => sector_masks(&scene.cloud, self.sectors),
            MaskKindArg::Pillar => pillar_masks(&scene.cloud, self.pillar_side),
            MaskKindArg::Visibility => Ok(visibility_masks(&scene.cloud, &scene.cameras)),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene directory from a JSON spec.
    GenScene {
        /// Scene spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Output scene directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode per-mask pooled features into point captions (JSON Lines).
    CaptionPoints {
        /// Scene directory or manifest path.
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        masks: MaskArgs,
        #[command(flatten)]
        space: SpaceArgs,
        /// Trained pooler checkpoint; identity pooling when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Tags decoded per mask.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Output JSONL path (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse captions into a merged tag vocabulary.
    Tags {
        /// Captions JSONL file.
        #[arg(long)]
        captions: PathBuf,
        /// Lexicon TSV overriding the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Disable compound-noun tags.
        #[arg(long)]
        no_compounds: bool,
        /// Output vocabulary JSON path (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every point against a vocabulary by embedding similarity.
    Segment {
        /// Scene directory or manifest path.
        #[arg(long)]
        scene: PathBuf,
        /// Vocabulary labels file (one label per line).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Captions JSONL contributing parsed tags.
        #[arg(long)]
        captions: Option<PathBuf>,
        /// Vocabulary JSON contributing tags.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Take the scene's ground-truth label table as vocabulary.
        #[arg(long)]
        vocab_from_gt: bool,
        /// Decode point captions with the pooler and add their tags.
        #[arg(long)]
        use_point_captioner: bool,
        /// Pooler checkpoint for `--use-point-captioner`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        masks: MaskArgs,
        /// Tags decoded per mask for `--use-point-captioner`.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Fuse lifted image features where cameras see points.
        #[arg(long)]
        use_image: bool,
        /// Feature-grid cells per image axis.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[command(flatten)]
        space: SpaceArgs,
        /// Output CSV path; a vocabulary sidecar `<out>.vocab.json` is
        /// written next to it (JSON summary to standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a vocabulary against a scene's point features.
    Tpss {
        /// Scene directory or manifest path.
        #[arg(long)]
        scene: PathBuf,
        /// Vocabulary file (.json array or line-per-label text).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Take the scene's ground-truth label table as vocabulary.
        #[arg(long)]
        vocab_from_gt: bool,
        /// Multiplier applied to the reported score.
        #[arg(long, default_value_t = 1.0)]
        tpss_scale: f64,
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Map an auto vocabulary onto target classes by embedding similarity.
    Map {
        /// Auto vocabulary file (.json array or line-per-label text).
        #[arg(long)]
        auto: PathBuf,
        /// Target classes file (.json array or line-per-label text).
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Take targets from this scene's ground-truth label table.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[command(flatten)]
        space: SpaceArgs,
        /// Output mapping CSV path (JSON to standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate predictions against a scene's ground truth.
    Eval {
        /// Scene directory or manifest path (must carry labels).
        #[arg(long)]
        scene: PathBuf,
        /// Predictions CSV from `segment`.
        #[arg(long)]
        pred: PathBuf,
        /// Mapping CSV from `map`; predictions are remapped through it.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Multiplier applied to the reported similarity score.
        #[arg(long, default_value_t = 1.0)]
        tpss_scale: f64,
        #[command(flatten)]
        space: SpaceArgs,
        /// Output report JSON path (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill the pooler against per-mask anchor-mean targets.
    TrainSmap {
        /// Scene directory or manifest path (must carry labels).
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        masks: MaskArgs,
        #[command(flatten)]
        space: SpaceArgs,
        /// Initial learning rate.
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Training epochs.
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Polynomial decay power.
        #[arg(long, default_value_t = 0.9)]
        poly_power: f64,
        /// Parameter-initialization seed.
        #[arg(long, default_value_t = 0)]
        train_seed: u64,
        /// Attention heads.
        #[arg(long, default_value_t = 4)]
        heads: usize,
        /// Positional-encoding hidden width.
        #[arg(long, default_value_t = 32)]
        pe_hidden: usize,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a colored point cloud as ASCII PLY.
    ExportPly {
        /// Scene directory or manifest path.
        #[arg(long)]
        scene: PathBuf,
        /// Predictions CSV from `segment`; ground truth when omitted.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Output PLY path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("error[usage]: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenScene { spec, out } => {
            let spec = SceneSpec::load(&spec)?;
            let scene = generate_scene(&spec)?;
            write_scene(&scene, &out)?;
            let summary = serde_json::json!({
                "name": scene.name,
                "points": scene.cloud.len(),
                "classes": scene.cloud.label_table,
                "cameras": scene.cameras.len(),
                "captions": scene.captions.len(),
                "out": out,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Cmd::CaptionPoints {
            scene,
            masks,
            space,
            checkpoint,
            k,
            out,
        } => {
            let scene = read_scene(&scene)?;
            let space = space.space()?;
            let mask_set = masks.build(&scene)?;
            let params = pooler_params(checkpoint.as_deref(), space.dim())?;
            let captions = caption_masks(&scene, &mask_set, &space, &params, k)?;
            let mut text = String::new();
            for caption in &captions {
                text.push_str(&serde_json::to_string(caption)?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
        Cmd::Tags {
            captions,
            lexicon,
            no_compounds,
            out,
        } => {
            let lex_owned;
            let lex = match lexicon {
                Some(path) => {
                    lex_owned = Lexicon::load(&path)?;
                    &lex_owned
                }
                None => Lexicon::bundled(),
            };
            let captions = read_captions(&captions)?;
            let vocabs: Vec<Vocabulary> = captions
                .iter()
                .map(|c| caption_to_tags(c, lex, !no_compounds))
                .collect();
            let merged = merge_vocabularies(&vocabs);
            let mut text = serde_json::to_string_pretty(&merged)?;
            text.push('\n');
            emit(out.as_deref(), &text)
        }
        Cmd::Segment {
            scene,
            labels,
            captions,
            vocab,
            vocab_from_gt,
            use_point_captioner,
            checkpoint,
            masks,
            k,
            use_image,
            grid,
            space,
            out,
        } => {
            let scene = read_scene(&scene)?;
            let space = space.space()?;
            let mut parts: Vec<Vocabulary> = Vec::new();
            if let Some(path) = labels {
                parts.push(load_vocab_any(&path)?);
            }
            if let Some(path) = vocab {
                parts.push(load_vocab_any(&path)?);
            }
            if let Some(path) = captions {
                let lex = Lexicon::bundled();
                for caption in read_captions(&path)? {
                    parts.push(caption_to_tags(&caption, lex, true));
                }
            }
            if use_point_captioner {
                let mask_set = masks.build(&scene)?;
                let params = pooler_params(checkpoint.as_deref(), space.dim())?;
                let lex = Lexicon::bundled();
                for caption in caption_masks(&scene, &mask_set, &space, &params, k)? {
                    parts.push(caption_to_tags(&caption, lex, true));
                }
            }
            if vocab_from_gt {
                parts.push(Vocabulary::new(scene.cloud.label_table.iter().cloned())?);
            }
            let vocabulary = merge_vocabularies(&parts);
            let options = SegmentOptions {
                use_image,
                grid_size: (grid, grid),
            };
            let result = segment_scene(&scene, &vocabulary, &space, &options)?;
            match out {
                Some(path) => {
                    write_predictions_csv(&result, &path)?;
                    let sidecar = sidecar_path(&path);
                    let mut text = serde_json::to_string_pretty(&result.vocabulary)?;
                    text.push('\n');
                    std::fs::write(&sidecar, text).map_err(|e| Error::Io {
                        path: sidecar,
                        source: e,
                    })?;
                    Ok(())
                }
                None => {
                    let summary = serde_json::json!({
                        "vocabulary": result.vocabulary,
                        "labels": result.labels,
                        "scores": result.scores,
                    });
                    println!("{}", serde_json::to_string_pretty(&summary)?);
                    Ok(())
                }
            }
        }
        Cmd::Tpss {
            scene,
            labels,
            vocab_from_gt,
            tpss_scale,
            space,
        } => {
            let scene = read_scene(&scene)?;
            let space = space.space()?;
            let vocabulary = match (labels, vocab_from_gt) {
                (Some(path), false) => load_vocab_any(&path)?,
                (None, true) => Vocabulary::new(scene.cloud.label_table.iter().cloned())?,
                (Some(path), true) => {
                    let file_vocab = load_vocab_any(&path)?;
                    let gt = Vocabulary::new(scene.cloud.label_table.iter().cloned())?;
                    merge_vocabularies([&file_vocab, &gt])
                }
                (None, false) => return Err(Error::EmptyVocabulary),
            };
            let feats = space.encode_points_oracle(&scene.cloud)?;
            let score = tpss(&feats, &vocabulary, &space, tpss_scale)?;
            let summary = serde_json::json!({
                "tpss": score,
                "points": feats.len(),
                "labels": vocabulary.len(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Cmd::Map {
            auto,
            targets,
            scene,
            space,
            out,
        } => {
            let space = space.space()?;
            let auto = load_vocab_any(&auto)?;
            let targets = match (targets, scene) {
                (Some(path), None) => load_vocab_any(&path)?,
                (None, Some(path)) => {
                    let scene = read_scene(&path)?;
                    Vocabulary::new(scene.cloud.label_table.iter().cloned())?
                }
                _ => {
                    return Err(Error::Schema {
                        reason: "give exactly one of --targets or --scene".into(),
                    })
                }
            };
            let mapping = map_vocabulary(&auto, &targets, &space)?;
            match out {
                Some(path) => write_mapping_csv(&mapping, &path),
                None => {
                    println!("{}", serde_json::to_string_pretty(&mapping)?);
                    Ok(())
                }
            }
        }
        Cmd::Eval {
            scene,
            pred,
            mapping,
            tpss_scale,
            space,
            out,
        } => {
            let scene = read_scene(&scene)?;
            let space = space.space()?;
            let gt = scene
                .cloud
                .labels
                .clone()
                .ok_or(Error::MissingGroundTruth)?;
            let targets = Vocabulary::new(scene.cloud.label_table.iter().cloned())?;
            let result = read_predictions_csv(&pred)?;
            let mapped = match mapping {
                Some(path) => {
                    let mapping = read_mapping_csv(&path, &targets)?;
                    remap_predictions(&result, &mapping)?
                }
                None => {
                    // Predicted label names must already be target classes.
                    let identity = VocabularyMapping {
                        pairs: targets
                            .tags()
                            .iter()
                            .map(|t| MappingPair {
                                auto_label: t.clone(),
                                target_label: t.clone(),
                                similarity: 1.0,
                            })
                            .collect(),
                        targets: targets.clone(),
                    };
                    remap_predictions(&result, &identity)?
                }
            };
            let mut report = evaluate(&mapped, &gt, targets.len())?;
            let feats = space.encode_points_oracle(&scene.cloud)?;
            report.tpss = Some(tpss(&feats, &result.vocabulary, &space, tpss_scale)?);
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Cmd::TrainSmap {
            scene,
            masks,
            space,
            lr,
            epochs,
            poly_power,
            train_seed,
            heads,
            pe_hidden,
            out,
        } => {
            let scene = read_scene(&scene)?;
            let space = space.space()?;
            let mask_set = masks.build(&scene)?;
            let batch = distillation_batch(&scene, &mask_set, &space)?;
            let config = TrainConfig {
                lr,
                epochs,
                poly_power,
                seed: train_seed,
                heads,
                pe_hidden,
            };
            let (params, report) = train_smap(&[batch], &config)?;
            save_checkpoint(&params, &out)?;
            let summary = serde_json::json!({
                "initial_loss": report.initial_loss,
                "final_loss": report.final_loss,
                "epochs": epochs,
                "out": out,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Cmd::ExportPly { scene, pred, out } => {
            let scene = read_scene(&scene)?;
            let result = match pred {
                Some(path) => read_predictions_csv(&path)?,
                None => {
                    let gt = scene
                        .cloud
                        .labels
                        .clone()
                        .ok_or(Error::MissingGroundTruth)?;
                    SegmentationResult {
                        labels: gt.iter().map(|&g| g as usize).collect(),
                        vocabulary: Vocabulary::new(scene.cloud.label_table.iter().cloned())?,
                        scores: vec![1.0; gt.len()],
                    }
                }
            };
            export_ply(&result, &scene.cloud, &out)
        }
    }
}

/// Loads a checkpoint or falls back to identity pooling parameters.
fn pooler_params(checkpoint: Option<&Path>, dim: usize) -> Result<SmapParams> {
    match checkpoint {
        Some(path) => {
            let params = load_checkpoint(path)?;
            if params.dim() != dim {
                return Err(Error::DimMismatch {
                    what: "checkpoint dimension",
                    expected: dim,
                    found: params.dim(),
                });
            }
            Ok(params)
        }
        None => SmapParams::identity(dim, 32, if dim % 4 == 0 { 4 } else { 1 }),
    }
}

/// Pools every mask and decodes each non-empty one into a point caption.
fn caption_masks(
    scene: &Scene,
    masks: &MaskSet,
    space: &SyntheticSpace,
    params: &SmapParams,
    k: usize,
) -> Result<Vec<Caption>> {
    let feats = space.encode_points_oracle(&scene.cloud)?;
    let batch = SmapBatch::new(
        scene.cloud.points.clone(),
        feats.values.clone(),
        masks.clone(),
        None,
    )?;
    let pooled = smap_forward(&batch, params)?;
    let lex = Lexicon::bundled();
    let mut captions = Vec::new();
    for (j, empty) in pooled.empty.iter().enumerate() {
        if *empty {
            continue;
        }
        let tags = decode_point_caption(pooled.features.values.row(j), false, space, lex, k)?;
        if tags.is_empty() {
            continue;
        }
        captions.push(Caption::new(
            tags.tags().join(", "),
            CaptionSource::Point,
            j,
        )?);
    }
    Ok(captions)
}

/// Builds the distillation batch: targets are normalized per-mask means of
/// the member points' class anchors.
fn distillation_batch(scene: &Scene, masks: &MaskSet, space: &SyntheticSpace) -> Result<SmapBatch> {
    let labels = scene
        .cloud
        .labels
        .as_ref()
        .ok_or(Error::MissingGroundTruth)?;
    let anchors: Vec<Array1<f64>> = scene
        .cloud
        .label_table
        .iter()
        .map(|l| space.encode_text(l))
        .collect::<Result<_>>()?;
    let feats = space.encode_points_oracle(&scene.cloud)?;
    let mut targets = Array2::zeros((masks.len(), space.dim()));
    for (j, mask) in masks.iter().enumerate() {
        if mask.is_empty() {
            continue;
        }
        let mut mean = Array1::<f64>::zeros(space.dim());
        for &i in mask {
            mean = mean + &anchors[labels[i] as usize];
        }
        mean /= mask.len() as f64;
        let norm = mean.dot(&mean).sqrt();
        if norm > 0.0 {
            mean /= norm;
        }
        targets.row_mut(j).assign(&mean);
    }
    SmapBatch::new(
        scene.cloud.points.clone(),
        feats.values.clone(),
        masks.clone(),
        Some(targets),
    )
}

/// Reads captions from a JSON Lines file.
fn read_captions(path: &Path) -> Result<Vec<Caption>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut captions = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        captions.push(serde_json::from_str::<Caption>(line)?);
    }
    Ok(captions)
}

/// Loads a vocabulary from a `.json` array or a line-per-label text file.
fn load_vocab_any(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let vocab: Vocabulary = serde_json::from_str(&text)?;
        Ok(vocab)
    } else {
        Vocabulary::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".vocab.json");
    out.with_file_name(name)
}

fn write_predictions_csv(result: &SegmentationResult, path: &Path) -> Result<()> {
    let mut text = String::from("point_index,label_index,label,score\n");
    for (i, (&l, &s)) in result.labels.iter().zip(&result.scores).enumerate() {
        text.push_str(&format!("{i},{l},{},{s}\n", result.vocabulary.tags()[l]));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Rebuilds a segmentation result from a predictions CSV.
///
/// When the `<path>.vocab.json` sidecar written by `segment` is present it
/// supplies the vocabulary (so labels that were never predicted keep their
/// place). Otherwise the vocabulary is reconstructed from the
/// `label_index,label` columns, in which case indices must be dense and
/// consistently named.
fn read_predictions_csv(path: &Path) -> Result<SegmentationResult> {
    let sidecar = sidecar_path(path);
    let sidecar_vocab = if sidecar.is_file() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::Io {
            path: sidecar.clone(),
            source: e,
        })?;
        let tags: Vec<String> = serde_json::from_str(&text)?;
        Some(Vocabulary::new(tags)?)
    } else {
        None
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some("point_index,label_index,label,score") => {}
        _ => {
            return Err(Error::Schema {
                reason: "predictions CSV must start with point_index,label_index,label,score"
                    .into(),
            })
        }
    }
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    let mut names: Vec<Option<String>> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Schema {
                reason: format!("predictions CSV row {} must have 4 fields", ln + 2),
            });
        }
        let index: usize = fields[0].parse().map_err(|_| Error::Schema {
            reason: format!("bad point index on row {}", ln + 2),
        })?;
        if index != labels.len() {
            return Err(Error::Schema {
                reason: format!("point indices must be dense; row {} breaks the run", ln + 2),
            });
        }
        let label: usize = fields[1].parse().map_err(|_| Error::Schema {
            reason: format!("bad label index on row {}", ln + 2),
        })?;
        let score: f64 = fields[3].parse().map_err(|_| Error::Schema {
            reason: format!("bad score on row {}", ln + 2),
        })?;
        if names.len() <= label {
            names.resize(label + 1, None);
        }
        match &names[label] {
            Some(existing) if existing != fields[2] => {
                return Err(Error::Schema {
                    reason: format!("label index {label} maps to two different names"),
                });
            }
            _ => names[label] = Some(fields[2].to_owned()),
        }
        labels.push(label);
        scores.push(score);
    }
    let vocabulary = match sidecar_vocab {
        Some(vocab) => {
            for (i, name) in names.iter().enumerate() {
                let Some(name) = name else { continue };
                match vocab.tags().get(i) {
                    Some(expected) if expected == name => {}
                    _ => {
                        return Err(Error::Schema {
                            reason: format!(
                                "label index {i} is `{name}` in the CSV but does not \
                                 match the vocabulary sidecar"
                            ),
                        })
                    }
                }
            }
            vocab
        }
        None => {
            let tags: Vec<String> = names
                .into_iter()
                .enumerate()
                .map(|(i, n)| {
                    n.ok_or(Error::Schema {
                        reason: format!("label index {i} never appears in the CSV"),
                    })
                })
                .collect::<Result<_>>()?;
            Vocabulary::new(tags)?
        }
    };
    Ok(SegmentationResult {
        labels,
        vocabulary,
        scores,
    })
}

fn write_mapping_csv(mapping: &VocabularyMapping, path: &Path) -> Result<()> {
    let mut text = String::from("auto_label,target_label,similarity\n");
    for pair in &mapping.pairs {
        text.push_str(&format!(
            "{},{},{}\n",
            pair.auto_label, pair.target_label, pair.similarity
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_mapping_csv(path: &Path, targets: &Vocabulary) -> Result<VocabularyMapping> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some("auto_label,target_label,similarity") => {}
        _ => {
            return Err(Error::Schema {
                reason: "mapping CSV must start with auto_label,target_label,similarity".into(),
            })
        }
    }
    let mut pairs = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Schema {
                reason: format!("mapping CSV row {} must have 3 fields", ln + 2),
            });
        }
        if targets.position(fields[1]).is_none() {
            return Err(Error::UncoveredLabel {
                label: fields[1].to_owned(),
            });
        }
        let similarity: f64 = fields[2].parse().map_err(|_| Error::Schema {
            reason: format!("bad similarity on row {}", ln + 2),
        })?;
        pairs.push(MappingPair {
            auto_label: fields[0].to_owned(),
            target_label: fields[1].to_owned(),
            similarity,
        });
    }
    Ok(VocabularyMapping {
        pairs,
        targets: targets.clone(),
    })
}

/// Writes `text` to `path` or standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
