//! Command-line driver for the detection workflow.
//!
//! Each subcommand is a thin wrapper over a library call. Flags override the
//! optional `--config` JSON, and an existing output is left alone unless
//! `--force` is given.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smad::benchmark::{self, ProtocolSpec};
use smad::dataprep::{self, Authenticity, Manifest, PairingPlan};
use smad::geometry;
use smad::model::{Checkpoint, Variant};
use smad::morph::{self, MorphOptions};
use smad::pipeline::{self, files, write_text, ExperimentConfig, SweepConfig};
use smad::synth;
use smad::training::TrainConfig;
use smad::{Error, Result};

#[derive(Parser)]
#[command(name = "smad", version, about = "Single-image morphing attack detection toolkit")]
struct Cli {
    /// JSON file with default paths and settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic face dataset.
    Synth {
        #[arg(long, default_value_t = 40)]
        identities: usize,
        #[arg(long = "per-id", default_value_t = 50)]
        per_id: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a complete toy study (faces, morphs, splits, protocols).
    Toy {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align a dataset to one or more settings (`d,e` or `all`).
    Align {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        settings: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split identities and draw a pairing plan.
    Pair {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long = "pairs-per-id", default_value_t = 10)]
        pairs_per_id: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate morphs and self-morphs for a pairing plan.
    Morph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = morph::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long = "selfmorph-fraction", default_value_t = 0.0)]
        selfmorph_fraction: f64,
        #[arg(long, default_value = "morphs")]
        prefix: String,
        /// Output manifest (originals, morphs and self-morphs).
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a protocol built from a manifest's bona fides and morphs.
    Protocols {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        name: String,
        /// Protocol index file (created or extended).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a detector on an aligned dataset.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every image referenced by the protocols.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        protocols: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute BPCER@APCER, EER and DET curves from a score file.
    Eval {
        #[arg(long)]
        protocols: Option<PathBuf>,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grad-CAM maps for one sample class, their mean and AGIR.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// bona_fide, selfmorph or morph.
        #[arg(long, default_value = "morph")]
        class: String,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align, train, score and evaluate for each setting.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "train-manifest")]
        train_manifest: Option<PathBuf>,
        #[arg(long)]
        protocols: Option<PathBuf>,
        #[arg(long)]
        settings: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Directory the manifest's sample paths are relative to.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "lr-start")]
    lr_start: Option<f64>,
    #[arg(long = "lr-end")]
    lr_end: Option<f64>,
    /// Alignment letter recorded in the checkpoint.
    #[arg(long)]
    setting: Option<char>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    force: bool,
}

impl Ctx {
    fn path(&self, flag: Option<PathBuf>, from_cfg: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        flag.or_else(|| from_cfg.clone())
            .ok_or_else(|| Error::Domain(format!("missing --{what} (flag or config)")))
    }

    fn train_config(&self, a: &TrainArgs) -> Result<TrainConfig> {
        let mut t = self.cfg.train.clone().unwrap_or_default();
        t.seed = self.seed;
        if let Some(v) = a.variant.or(self.cfg.variant) {
            t.variant = v;
        }
        if let Some(e) = a.epochs {
            t.epochs = e;
        }
        if let Some(b) = a.batch_size {
            t.batch_size = b;
        }
        if let Some(l) = a.lr_start {
            t.lr_start = l;
        }
        if let Some(l) = a.lr_end {
            t.lr_end = l;
        }
        if let Some(s) = a.setting {
            t.alignment = geometry::setting(s)?.id;
        }
        t.validate()?;
        Ok(t)
    }

    /// True when `out` exists and should be kept.
    fn keep(&self, out: &Path) -> bool {
        if out.exists() && !self.force {
            println!("{} exists, skipping (use --force to redo)", out.display());
            true
        } else {
            false
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.check_paths()?;
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        force: cli.force,
        cfg,
    };
    let c = &ctx.cfg;
    match cli.cmd {
        Cmd::Synth { identities, per_id, out } => {
            let out = ctx.path(out, &c.dataset_root, "out")?;
            if ctx.keep(&out.join(files::MANIFEST)) {
                return Ok(());
            }
            let m = synth::make_dataset(&out, identities, per_id, ctx.seed)?;
            println!("wrote {} images to {}", m.entries.len(), out.display());
        }
        Cmd::Toy { out } => {
            let out = ctx.path(out, &c.output_dir, "out")?;
            if ctx.keep(&out.join("study.json")) {
                return Ok(());
            }
            let mut toy = c.toy.clone().unwrap_or_default();
            if cli.seed.is_some() || c.seed.is_some() {
                toy.seed = ctx.seed;
            }
            let study = pipeline::build_toy_study(&out, &toy)?;
            println!("source:    {}", study.source.display());
            println!("train:     {}", study.train_manifest.display());
            println!("test:      {}", study.test_manifest.display());
            println!("protocols: {}", study.protocol_index.display());
        }
        Cmd::Align { data, settings, out } => {
            let root = ctx.path(data.root, &c.dataset_root, "root")?;
            let manifest = Manifest::load(&ctx.path(data.manifest, &c.manifest, "manifest")?)?;
            let list = settings.or_else(|| c.settings.clone()).unwrap_or_else(|| "d".into());
            let out = ctx.path(out, &c.output_dir, "out")?;
            for s in geometry::parse_setting_list(&list)? {
                let dir = out.join(s.id.to_string());
                if ctx.keep(&dir.join(files::MANIFEST)) {
                    continue;
                }
                pipeline::align_manifest(&root, &manifest, &s, &dir, geometry::DEFAULT_FILL)?;
                println!("setting {}: {} images -> {}", s.id, manifest.entries.len(), dir.display());
            }
        }
        Cmd::Pair { manifest, pairs_per_id, out } => {
            if ctx.keep(&out) {
                return Ok(());
            }
            let m = Manifest::load(&ctx.path(manifest, &c.manifest, "manifest")?)?;
            let plan = dataprep::split_identities(&m, ctx.seed)?;
            let plan = dataprep::make_pairs(&plan, pairs_per_id, ctx.seed)?;
            plan.save(&out)?;
            println!("{} pairs -> {}", plan.pairs.len(), out.display());
        }
        Cmd::Morph { data, plan, alpha, selfmorph_fraction, prefix, out } => {
            if ctx.keep(&out) {
                return Ok(());
            }
            let root = ctx.path(data.root, &c.dataset_root, "root")?;
            let m = Manifest::load(&ctx.path(data.manifest, &c.manifest, "manifest")?)?;
            let plan = PairingPlan::load(&plan)?;
            let opts = MorphOptions {
                alpha,
                selfmorph_fraction,
                seed: ctx.seed,
                prefix,
            };
            let (all, report) = morph::generate_morph_set(&root, &m, &plan, &opts)?;
            all.save(&out)?;
            println!(
                "{} morphs, {} self-morphs ({} identities skipped) -> {}",
                report.morphs,
                report.selfmorphs,
                report.skipped_selfmorphs,
                out.display()
            );
        }
        Cmd::Protocols { manifest, name, out } => {
            let out = ctx.path(out, &c.protocol_index, "out")?;
            let m = Manifest::load(&ctx.path(manifest, &c.manifest, "manifest")?)?;
            let mut specs = if out.exists() { benchmark::read_protocols(&out)? } else { Vec::new() };
            if specs.iter().any(|p| p.name == name) && !ctx.force {
                println!("protocol {name} exists in {}, skipping", out.display());
                return Ok(());
            }
            specs.retain(|p| p.name != name);
            let paths = |a: Authenticity| m.entries.iter().filter(|s| s.authenticity == a).map(|s| s.path.clone()).collect();
            let spec = ProtocolSpec::new(name, paths(Authenticity::BonaFide), paths(Authenticity::Morph))?;
            println!("{}: {} bona fide, {} morph", spec.name, spec.bona_fide.len(), spec.morph.len());
            specs.push(spec);
            benchmark::write_protocols(&out, &specs)?;
        }
        Cmd::Train { data, train, out } => {
            let out = ctx.path(out, &c.output_dir, "out")?;
            if ctx.keep(&out.join(files::CHECKPOINT)) {
                return Ok(());
            }
            let root = ctx.path(data.root, &c.dataset_root, "root")?;
            let m = Manifest::load(&ctx.path(data.manifest, &c.train_manifest.clone().or(c.manifest.clone()), "manifest")?)?;
            let mut t = ctx.train_config(&train)?;
            let first = m.entries.first().ok_or_else(|| Error::Domain("empty training manifest".into()))?;
            let img = smad::imageio::load_rgb(&root.join(&first.path))?;
            t.backbone.input = (3, img.height() as usize, img.width() as usize);
            let (ck, log) = pipeline::train_on_manifest(&root, &m, &t)?;
            log.save(&out.join(files::TRAIN_LOG))?;
            write_text(&out.join(files::TRAIN_CONFIG), &t.to_json()?)?;
            ck.save(&out.join(files::CHECKPOINT))?;
            if let Some((head, tail)) = log.head_tail_means(3) {
                println!("total loss {head:.4} -> {tail:.4}");
            }
            println!("checkpoint -> {}", out.join(files::CHECKPOINT).display());
        }
        Cmd::Score { checkpoint, root, protocols, out } => {
            if ctx.keep(&out) {
                return Ok(());
            }
            let root = ctx.path(root, &c.dataset_root, "root")?;
            let protocols = benchmark::read_protocols(&ctx.path(protocols, &c.protocol_index, "protocols")?)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let scores = pipeline::score_paths(&ck.model, &root, &pipeline::protocol_paths(&protocols))?;
            benchmark::write_scores(&out, &scores)?;
            println!("{} scores -> {}", scores.len(), out.display());
        }
        Cmd::Eval { protocols, scores, out } => {
            if ctx.keep(&out) {
                return Ok(());
            }
            let protocols = benchmark::read_protocols(&ctx.path(protocols, &c.protocol_index, "protocols")?)?;
            let report = benchmark::evaluate(&protocols, &benchmark::read_scores(&scores)?)?;
            write_text(&out, &report.to_json()?)?;
            let csv = report.to_csv();
            write_text(&out.with_extension("csv"), &csv)?;
            print!("{csv}");
        }
        Cmd::Heatmap { checkpoint, data, class, limit, out } => {
            if ctx.keep(&out.join("mean.png")) {
                return Ok(());
            }
            let class = Authenticity::parse(&class)?;
            let root = ctx.path(data.root, &c.dataset_root, "root")?;
            let m = Manifest::load(&ctx.path(data.manifest, &c.manifest, "manifest")?)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let set = pipeline::heatmaps_for_class(&ck.model, &root, &m, class, limit)?;
            pipeline::save_heatmap_set(&set, &out, ck.header.variant, ck.header.alignment)?;
            let row = smad::explain::AgirRow {
                variant: ck.header.variant,
                alignment: ck.header.alignment.unwrap_or('-'),
                sample_class: class,
                agir: set.agir,
            };
            write_text(&out.join("agir.csv"), &smad::explain::agir_csv(&[row]))?;
            println!("{} maps + mean -> {}; AGIR {:.4}", set.per_image.len(), out.display(), set.agir);
        }
        Cmd::Sweep { data, train_manifest, protocols, settings, train, out } => {
            let list = settings.or_else(|| c.settings.clone()).unwrap_or_else(|| "all".into());
            let sweep = SweepConfig {
                source_root: ctx.path(data.root, &c.dataset_root, "root")?,
                manifest: ctx.path(data.manifest, &c.manifest, "manifest")?,
                train_manifest: ctx.path(train_manifest, &c.train_manifest, "train-manifest")?,
                protocol_index: ctx.path(protocols, &c.protocol_index, "protocols")?,
                output_dir: ctx.path(out, &c.output_dir, "out")?,
                settings: geometry::parse_setting_list(&list)?.iter().map(|s| s.id).collect(),
                train: ctx.train_config(&train)?,
                force: ctx.force,
            };
            let outcome = pipeline::run_sweep(&sweep)?;
            if let Some(table) = &outcome.table {
                print!("{}", table.to_text());
            }
            if !outcome.cache_hits.is_empty() {
                let hits: String = outcome.cache_hits.iter().collect();
                println!("cached settings: {hits}");
            }
            for (id, e) in &outcome.failures {
                eprintln!("setting {id} failed: {e}");
            }
            if outcome.reports.is_empty() {
                return Err(Error::Domain("every setting failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
