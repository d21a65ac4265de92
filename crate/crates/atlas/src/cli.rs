use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tilmap_core::concord::{polychoric_ci, polyserial_ci, super_patch_scores, RatingTable, SUPER_PATCH_BLOCK};
use tilmap_core::eval::{confusion, metrics, render_confusion, threshold_sweep, SweepInput};
use tilmap_core::gridmap::{
    aggregate_par, patch_stats_from_raster, threshold, tissue_mask_from_patch_stats, GridGeometry, LabelKind,
    TissueMask,
};
use tilmap_core::patchprep::{
    augment, label_records, sample_training_set, score_slide, truth_label_map, AnnotationSet, BaselineKind,
    PatchLabelRecord, Split,
};

use crate::catalog::Catalog;
use crate::config::Config;
use crate::format::PredictionFile;
use crate::render::{
    binary_fallback, combined_rgb_image, encode_png, encode_png_rgb, render_combined_display, render_map, PairParams,
};
use crate::service::{serve, AppState, RenderQuery};
use crate::stats::pair_stats;
use crate::synth::{synth_slide, HAND_ANNOTATION, SYNTH_SIZE, SYNTH_SLIDE_ID};

#[derive(Debug, Parser)]
#[command(name = "tilmap", version, about = "Tumor and TIL map analysis and atlas service")]
pub struct Cli {
    /// Seed for every random step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic 3500x3500 demo slide and its tumor annotation.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a slide raster with the color-heuristic baseline.
    Score(ScoreArgs),
    /// Add prediction files to a catalog.
    Ingest {
        #[arg(long)]
        data_dir: PathBuf,
        /// Window of an aggregation already applied to these files.
        #[arg(long)]
        agg_w: Option<usize>,
        #[arg(long)]
        agg_f: Option<String>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write a stored map back out as a PredictionFile.
    Export {
        #[arg(long)]
        data_dir: PathBuf,
        map_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Block-aggregate a prediction file.
    Aggregate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        func: Option<String>,
    },
    /// Combine a TIL map and a cancer map.
    Combine {
        #[arg(long)]
        til: PathBuf,
        #[arg(long)]
        cancer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Encoding::Display)]
        encoding: Encoding,
    },
    /// Render a prediction file as a PNG heatmap, one pixel per patch.
    Render {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        colormap: Option<String>,
        /// A number in [0, 1] or "none".
        #[arg(long)]
        threshold: Option<String>,
        /// A window size or "none".
        #[arg(long)]
        agg_w: Option<String>,
        #[arg(long)]
        agg_f: Option<String>,
    },
    /// Threshold sweep and confusion analysis against annotations.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Concordance between raters and the model.
    #[command(subcommand)]
    Concord(ConcordCommand),
    /// Patch labeling, sampling and augmentation.
    #[command(subcommand)]
    Patchprep(PatchprepCommand),
    /// TIL-in-tumor statistics for a map pair.
    Stats {
        #[arg(long)]
        til: PathBuf,
        #[arg(long)]
        cancer: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Encoding {
    Display,
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreKind {
    Til,
    Cancer,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// RGB raster at base magnification.
    #[arg(long)]
    pub slide: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ScoreKind,
    #[arg(long, default_value_t = 100)]
    pub patch: u32,
    #[arg(long, default_value = SYNTH_SLIDE_ID)]
    pub slide_id: String,
    /// Score glass patches too instead of leaving them uncovered.
    #[arg(long)]
    pub no_tissue_filter: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Mean/std F1 over images at 101 thresholds.
    Sweep {
        /// `PRED=ANNOTATION` pairs.
        #[arg(required = true)]
        pairs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confusion counts, metrics and the confusion render at one threshold.
    Confusion {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        png: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConcordCommand {
    /// Rater-rater polychoric correlation with a bootstrap interval.
    Polychoric {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Model-rater polyserial correlation with a bootstrap interval.
    Polyserial {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        rater: String,
    },
    /// Count TIL-positive patches per 8x8 super-patch as CSV.
    Superpatch {
        #[arg(long)]
        til: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PatchprepCommand {
    /// Label every patch of a slide from its annotation.
    Label {
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = 350)]
        patch: u32,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep all positives and sample negatives at a fixed ratio.
    Sample {
        /// JSON lines of labeled patches from `patchprep label`.
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one augmentation draw to a patch image.
    Transform {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        draw: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn read_pred(path: &Path) -> anyhow::Result<PredictionFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    PredictionFile::parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_annotation(path: &Path) -> anyhow::Result<AnnotationSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(AnnotationSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn pair(til: &Path, cancer: &Path) -> anyhow::Result<(PredictionFile, PredictionFile, TissueMask)> {
    let (t, c) = (read_pred(til)?, read_pred(cancer)?);
    let mask = TissueMask::from_coverage(&[&t.map, &c.map])?;
    Ok((t, c, mask))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Synth { out } => {
            fs::create_dir_all(&out)?;
            synth_slide(seed).save(out.join("slide.png"))?;
            write(&out.join("annotation.json"), HAND_ANNOTATION)?;
            print_json(&serde_json::json!({
                "slide_id": SYNTH_SLIDE_ID,
                "width": SYNTH_SIZE,
                "height": SYNTH_SIZE,
                "slide": out.join("slide.png"),
                "annotation": out.join("annotation.json"),
            }))?;
        }
        Command::Score(a) => {
            let raster = image::open(&a.slide)
                .with_context(|| format!("reading {}", a.slide.display()))?
                .to_rgb8();
            let g = GridGeometry::from_slide(raster.width(), raster.height(), a.patch)?;
            let tissue = if a.no_tissue_filter {
                None
            } else {
                let stats = patch_stats_from_raster(&raster, g, &cfg.tissue)?;
                Some(tissue_mask_from_patch_stats(&stats, g, &cfg.tissue)?.0)
            };
            let kind = match a.kind {
                ScoreKind::Til => BaselineKind::Til,
                ScoreKind::Cancer => BaselineKind::Tumor,
            };
            let map = score_slide(&raster, g, kind, tissue.as_ref().map(|t| t.tissue()))?;
            write(&a.out, PredictionFile::from_map(a.slide_id, map).to_bytes())?;
        }
        Command::Ingest {
            data_dir,
            agg_w,
            agg_f,
            files,
        } => {
            let agg = match (agg_w, agg_f) {
                (None, None) => None,
                (w, f) => {
                    let base = cfg.aggregation.get()?;
                    let func = f.map(|f| f.parse()).transpose()?.unwrap_or(base.func);
                    Some(tilmap_core::gridmap::AggregationConfig::new(w.unwrap_or(base.window_w), func)?)
                }
            };
            let catalog = Catalog::open(&data_dir)?;
            for f in files {
                let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
                let out = catalog.ingest(&bytes, agg).with_context(|| format!("ingesting {}", f.display()))?;
                for w in &out.warnings {
                    eprintln!("warning: {}: {w}", f.display());
                }
                print_json(&serde_json::json!({ "created": out.created, "record": out.record }))?;
            }
        }
        Command::Export { data_dir, map_id, out } => {
            write(&out, Catalog::open(&data_dir)?.export(&map_id)?)?;
        }
        Command::Aggregate {
            input,
            out,
            window,
            func,
        } => {
            let base = cfg.aggregation.get()?;
            let func = func.map(|f| f.parse()).transpose()?.unwrap_or(base.func);
            let agg = tilmap_core::gridmap::AggregationConfig::new(window.unwrap_or(base.window_w), func)?;
            let mut file = read_pred(&input)?;
            file.map = aggregate_par(&file.map, agg);
            file.header.model_id = format!("{}+agg{}{}", file.header.model_id, agg.window_w, agg.func.as_str());
            file.map.provenance = file.header.model_id.clone();
            write(&out, file.to_bytes())?;
        }
        Command::Combine {
            til,
            cancer,
            out,
            encoding,
        } => {
            let (t, c, mask) = pair(&til, &cancer)?;
            let png = match encoding {
                Encoding::Display => {
                    encode_png_rgb(&render_combined_display(&t.map, &c.map, &mask, &PairParams::from_config(&cfg)?)?)?
                }
                Encoding::Rgb => encode_png_rgb(&combined_rgb_image(&t.map, &c.map, &mask)?.1)?,
            };
            write(&out, png)?;
        }
        Command::Render {
            input,
            out,
            colormap,
            threshold,
            agg_w,
            agg_f,
        } => {
            let file = read_pred(&input)?;
            let q = RenderQuery {
                colormap,
                threshold,
                agg_w,
                agg_f,
            };
            let kind = file.map.label_kind;
            let img = render_map(&file.map, &q.params(kind, &cfg)?, binary_fallback(kind, &cfg.render))?;
            write(&out, encode_png(&img)?)?;
        }
        Command::Eval(EvalCommand::Sweep { pairs, out }) => {
            let mut loaded = Vec::new();
            for p in &pairs {
                let Some((pred, truth)) = p.split_once('=') else {
                    bail!("expected PRED=ANNOTATION, got {p:?}");
                };
                let file = read_pred(Path::new(pred))?;
                let truth = truth_label_map(file.map.geometry(), &read_annotation(Path::new(truth))?);
                let mask = TissueMask::from_coverage(&[&file.map])?;
                loaded.push((file, truth, mask));
            }
            let inputs: Vec<SweepInput> = loaded
                .iter()
                .map(|(f, t, m)| SweepInput {
                    map: &f.map,
                    truth: t,
                    eval_mask: Some(m),
                })
                .collect();
            let result = threshold_sweep(&inputs)?;
            match out {
                Some(path) => write(&path, result.to_csv())?,
                None => print!("{}", result.to_csv()),
            }
            eprintln!(
                "best threshold: {}",
                result.best_threshold.map_or("undefined".to_string(), |t| format!("{t:.2}"))
            );
        }
        Command::Eval(EvalCommand::Confusion {
            pred,
            truth,
            threshold: t,
            png,
        }) => {
            let file = read_pred(&pred)?;
            let truth = truth_label_map(file.map.geometry(), &read_annotation(&truth)?);
            let mask = TissueMask::from_coverage(&[&file.map])?;
            let labels = threshold(&file.map, t)?;
            let counts = confusion(&labels, &truth, Some(&mask))?;
            if let Some(path) = png {
                let mut bytes = std::io::Cursor::new(Vec::new());
                render_confusion(&labels, &truth, Some(&mask))?.write_to(&mut bytes, image::ImageFormat::Png)?;
                write(&path, bytes.into_inner())?;
            }
            print_json(&serde_json::json!({ "threshold": t, "counts": counts, "metrics": metrics(&counts) }))?;
        }
        Command::Concord(ConcordCommand::Polychoric { ratings, a, b }) => {
            let table = RatingTable::from_csv(fs::File::open(&ratings)?)?;
            let est = polychoric_ci(table.rater(&a)?, table.rater(&b)?, &cfg.bootstrap.with_seed(seed))?;
            print_json(&est)?;
        }
        Command::Concord(ConcordCommand::Polyserial { ratings, model, rater }) => {
            let table = RatingTable::from_csv(fs::File::open(&ratings)?)?;
            let est = polyserial_ci(table.model(&model)?, table.rater(&rater)?, &cfg.bootstrap.with_seed(seed))?;
            print_json(&est)?;
        }
        Command::Concord(ConcordCommand::Superpatch { til, threshold: t, out }) => {
            let file = read_pred(&til)?;
            let labels = threshold(&file.map, t.unwrap_or(cfg.render.til_threshold))?;
            let mut csv = String::from("block_row,block_col,machine_count,cells\n");
            for s in super_patch_scores(&labels, SUPER_PATCH_BLOCK)? {
                csv.push_str(&format!("{},{},{},{}\n", s.row, s.col, s.machine_count, s.cells));
            }
            match out {
                Some(path) => write(&path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Patchprep(PatchprepCommand::Label {
            annotation,
            width,
            height,
            patch,
            split,
            out,
        }) => {
            let ann = read_annotation(&annotation)?;
            ann.check_bounds(width, height)?;
            let g = GridGeometry::from_slide(width, height, patch)?;
            let mut text = String::new();
            for r in label_records(&g, &ann, split.into()) {
                text.push_str(&serde_json::to_string(&r)?);
                text.push('\n');
            }
            write(&out, text)?;
        }
        Command::Patchprep(PatchprepCommand::Sample { labels, ratio, out }) => {
            let mut records: Vec<PatchLabelRecord> = Vec::new();
            for path in &labels {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    records.push(
                        serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), k + 1))?,
                    );
                }
            }
            let outcome = sample_training_set(&records, ratio.unwrap_or(cfg.sampling.neg_pos_ratio), seed)?;
            if let Some(w) = &outcome.warning {
                eprintln!("warning: {w}");
            }
            write(&out, outcome.manifest.to_jsonl())?;
        }
        Command::Patchprep(PatchprepCommand::Transform { input, out, draw }) => {
            let patch = image::open(&input)?.to_rgb8();
            let tcfg = tilmap_core::patchprep::TransformConfig {
                seed,
                ..cfg.transform
            };
            augment(&patch, &tcfg, draw).save(&out)?;
        }
        Command::Stats { til, cancer } => {
            let (t, c, mask) = pair(&til, &cancer)?;
            if t.map.label_kind != LabelKind::Til || c.map.label_kind != LabelKind::Cancer {
                bail!("--til must be a til map and --cancer a cancer map");
            }
            print_json(&pair_stats(&t.map, &c.map, &mask, &PairParams::from_config(&cfg)?)?)?;
        }
        Command::Serve { port, host, data_dir } => {
            let host = host.unwrap_or_else(|| cfg.server.host.clone());
            let port = port.unwrap_or(cfg.server.port);
            let data_dir = data_dir.unwrap_or_else(|| cfg.server.data_dir.clone());
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            let state = AppState {
                catalog: Arc::new(Catalog::open(&data_dir)?),
                config: Arc::new(cfg),
            };
            tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_nested_verbs() {
        let cli = Cli::try_parse_from(["tilmap", "--seed", "7", "concord", "superpatch", "--til", "t.pred"]).unwrap();
        assert_eq!(cli.seed, 7);
        assert!(matches!(cli.command, Command::Concord(ConcordCommand::Superpatch { .. })));
        let cli = Cli::try_parse_from(["tilmap", "serve", "--port", "9001", "--data-dir", "d"]).unwrap();
        assert!(matches!(cli.command, Command::Serve { port: Some(9001), .. }));
    }
}
