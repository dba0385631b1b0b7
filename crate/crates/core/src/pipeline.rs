//! End-to-end workflow on top of the individual modules: aligned dataset
//! mirrors, the toy study layout, training and scoring from manifests,
//! heatmap batches and the resumable alignment sweep.
//!
//! Every stage keys its files by relative sample path, so an aligned mirror
//! of a dataset can be scored against the same protocol lists as the source.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{self, MetricsReport, ProtocolSpec, ScoreRecord, SweepTable};
use crate::dataprep::{self, Authenticity, Manifest, Sample};
use crate::error::{Error, Result};
use crate::explain::{self, Heatmap, MaskPair};
use crate::geometry::{self, landmark_csv, AlignmentSetting, Landmarks68, Point};
use crate::imageio::{load_rgb, save_png, ImageBuffer};
use crate::model::{Checkpoint, DetectionModel, Variant};
use crate::morph::{self, MorphOptions};
use crate::nn::image_to_tensor;
use crate::synth;
use crate::training::{self, Inputs, TrainConfig, TrainLog};

/// File names used inside stage directories.
pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const SETTING: &str = "setting.json";
    pub const CHECKPOINT: &str = "checkpoint.bin";
    pub const TRAIN_LOG: &str = "trainlog.csv";
    pub const TRAIN_CONFIG: &str = "train_config.json";
    pub const SCORES: &str = "scores.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_CSV: &str = "report.csv";
}

/// Write `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::imageio::ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Align every sample of `manifest` (paths relative to `src_root`) to
/// `setting`, writing images and mapped landmarks under `out_root` with the
/// same relative paths, plus `manifest.json` and `setting.json`.
pub fn align_manifest(
    src_root: &Path,
    manifest: &Manifest,
    setting: &AlignmentSetting,
    out_root: &Path,
    fill: [u8; 3],
) -> Result<Manifest> {
    for s in &manifest.entries {
        let img = load_rgb(&src_root.join(&s.path))?;
        let lm5 = landmark_csv::read_lm5(&src_root.join(&s.lm5_path), None)?;
        let lm68 = landmark_csv::read_lm68(&src_root.join(&s.lm68_path), None)?;
        let (out, t) = geometry::warp_to_setting_with_fill(&img, &lm5, setting, fill)?;
        save_png(&out, &out_root.join(&s.path))?;
        landmark_csv::write_lm5(&out_root.join(&s.lm5_path), &s.path, &lm5.map(&t))?;
        landmark_csv::write_lm68(&out_root.join(&s.lm68_path), &s.path, &lm68.map(&t))?;
    }
    manifest.save(&out_root.join(files::MANIFEST))?;
    write_text(
        &out_root.join(files::SETTING),
        &geometry::settings_to_json(std::slice::from_ref(setting))?,
    )?;
    Ok(manifest.clone())
}

/// One toy evaluation protocol: held-out morphs built with `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyProtocol {
    pub name: String,
    pub alpha: f64,
}

/// Shape of a generated toy study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyStudyConfig {
    pub identities: usize,
    pub per_identity: usize,
    /// Identities reserved for testing; never seen in training.
    pub holdout: usize,
    pub pairs_per_identity: usize,
    pub selfmorph_fraction: f64,
    pub alpha: f64,
    /// Bona fides per training identity kept for training (all when `None`).
    pub train_bona_fide_per_identity: Option<usize>,
    pub test_pairs_per_identity: usize,
    pub test_selfmorph_fraction: f64,
    pub test_bona_fide_per_identity: usize,
    pub protocols: Vec<ToyProtocol>,
    pub seed: u64,
}

impl Default for ToyStudyConfig {
    fn default() -> Self {
        ToyStudyConfig {
            identities: 40,
            per_identity: 50,
            holdout: 10,
            pairs_per_identity: 27,
            selfmorph_fraction: 0.15,
            alpha: morph::DEFAULT_ALPHA,
            train_bona_fide_per_identity: Some(40),
            test_pairs_per_identity: 8,
            test_selfmorph_fraction: 1.0,
            test_bona_fide_per_identity: 10,
            protocols: vec![
                ToyProtocol {
                    name: "ldm-a50".into(),
                    alpha: 0.5,
                },
                ToyProtocol {
                    name: "ldm-a40".into(),
                    alpha: 0.4,
                },
            ],
            seed: 1,
        }
    }
}

/// Locations of a generated toy study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyStudy {
    pub root: PathBuf,
    /// Directory all sample paths are relative to.
    pub source: PathBuf,
    /// Every sample (train and test).
    pub manifest: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub protocol_index: PathBuf,
}

impl ToyStudy {
    pub fn at(root: &Path) -> Self {
        ToyStudy {
            root: root.to_path_buf(),
            source: root.join("source"),
            manifest: root.join("study.json"),
            train_manifest: root.join("train.json"),
            test_manifest: root.join("test.json"),
            protocol_index: root.join("protocols").join("protocols.json"),
        }
    }
}

fn appended(before: &Manifest, after: Manifest) -> Vec<Sample> {
    after.entries.into_iter().skip(before.entries.len()).collect()
}

/// Generate faces, split identities into train and held-out parts, build
/// training morphs and self-morphs from disjoint subsets, and one morph set
/// per test protocol.
pub fn build_toy_study(root: &Path, cfg: &ToyStudyConfig) -> Result<ToyStudy> {
    if cfg.protocols.is_empty() {
        return Err(Error::Domain("at least one test protocol is required".into()));
    }
    let study = ToyStudy::at(root);
    let faces = synth::make_dataset(&study.source, cfg.identities, cfg.per_identity, cfg.seed)?;
    let (train_faces, test_faces) = dataprep::partition_identities(&faces, cfg.holdout, cfg.seed)?;

    let plan = dataprep::split_identities(&train_faces, cfg.seed)?;
    let plan = dataprep::make_pairs(&plan, cfg.pairs_per_identity, cfg.seed)?;
    plan.save(&root.join("train_plan.json"))?;
    let (with_morphs, report) = morph::generate_morph_set(
        &study.source,
        &train_faces,
        &plan,
        &MorphOptions {
            alpha: cfg.alpha,
            selfmorph_fraction: cfg.selfmorph_fraction,
            seed: cfg.seed,
            prefix: "train_morphs".into(),
        },
    )?;
    log::info!("training morphs: {} morphs, {} self-morphs", report.morphs, report.selfmorphs);
    let train_generated = appended(&train_faces, with_morphs);
    let keep = cfg.train_bona_fide_per_identity.unwrap_or(usize::MAX);
    let mut train_entries: Vec<Sample> = Vec::new();
    for id in train_faces.identities() {
        train_entries.extend(train_faces.bona_fides_of(&id).into_iter().take(keep).cloned());
    }
    train_entries.extend(train_generated);
    let train = Manifest::new(train_entries)?;
    train.save(&study.train_manifest)?;

    let test_plan = dataprep::split_identities(&test_faces, cfg.seed.wrapping_add(1))?;
    let mut test_entries: Vec<Sample> = Vec::new();
    for id in test_faces.identities() {
        test_entries.extend(
            test_faces
                .bona_fides_of(&id)
                .into_iter()
                .take(cfg.test_bona_fide_per_identity)
                .cloned(),
        );
    }
    let bona_fide: Vec<String> = test_entries.iter().map(|s| s.path.clone()).collect();
    let mut protocols = Vec::with_capacity(cfg.protocols.len());
    for (k, proto) in cfg.protocols.iter().enumerate() {
        let pairs = dataprep::make_pairs(&test_plan, cfg.test_pairs_per_identity, cfg.seed.wrapping_add(100 + k as u64))?;
        let fraction = if k == 0 { cfg.test_selfmorph_fraction } else { 0.0 };
        let (m, _) = morph::generate_morph_set(
            &study.source,
            &test_faces,
            &pairs,
            &MorphOptions {
                alpha: proto.alpha,
                selfmorph_fraction: fraction,
                seed: cfg.seed.wrapping_add(7),
                prefix: format!("test_{}", proto.name),
            },
        )?;
        let generated = appended(&test_faces, m);
        let morphs: Vec<String> = generated
            .iter()
            .filter(|s| s.authenticity == Authenticity::Morph)
            .map(|s| s.path.clone())
            .collect();
        protocols.push(ProtocolSpec::new(proto.name.clone(), bona_fide.clone(), morphs)?);
        test_entries.extend(generated);
    }
    let test = Manifest::new(test_entries)?;
    test.save(&study.test_manifest)?;
    benchmark::write_protocols(&study.protocol_index, &protocols)?;

    let mut all = train.entries.clone();
    all.extend(test.entries.iter().cloned());
    Manifest::new(all)?.save(&study.manifest)?;
    write_text(&root.join("study_config.json"), &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    Ok(study)
}

/// Load the images of `manifest` from `root` together with their labels.
pub fn load_training_set(root: &Path, manifest: &Manifest) -> Result<(Vec<ImageBuffer>, Vec<dataprep::TrainingLabels>)> {
    let labels = dataprep::assign_training_labels(manifest)?;
    let images = manifest
        .entries
        .iter()
        .map(|s| load_rgb(&root.join(&s.path)))
        .collect::<Result<Vec<_>>>()?;
    Ok((images, labels))
}

/// Train on aligned images under `root`; the class count is the number of
/// identities in `manifest`.
pub fn train_on_manifest(root: &Path, manifest: &Manifest, cfg: &TrainConfig) -> Result<(Checkpoint, TrainLog)> {
    let (images, labels) = load_training_set(root, manifest)?;
    if let Some(img) = images.first() {
        let (c, h, w) = cfg.backbone.input;
        if (c, h as u32, w as u32) != (3, img.height(), img.width()) {
            return Err(Error::Contract(format!(
                "backbone expects {h}x{w} inputs, images are {}x{}",
                img.height(),
                img.width()
            )));
        }
    }
    training::train(Inputs::Images(&images), &labels, manifest.num_classes(), cfg)
}

/// Score the given relative paths under `root`; output sorted by path.
pub fn score_paths<M: DetectionModel + ?Sized>(model: &M, root: &Path, paths: &[String]) -> Result<Vec<ScoreRecord>> {
    let unique: BTreeSet<&String> = paths.iter().collect();
    unique
        .into_iter()
        .map(|p| {
            let img = load_rgb(&root.join(p))?;
            Ok(ScoreRecord {
                path: p.clone(),
                score: model.detection_score(&image_to_tensor(&img))?,
            })
        })
        .collect()
}

/// Every image path referenced by the protocols.
pub fn protocol_paths(protocols: &[ProtocolSpec]) -> Vec<String> {
    let set: BTreeSet<&String> = protocols.iter().flat_map(|p| p.bona_fide.iter().chain(&p.morph)).collect();
    set.into_iter().cloned().collect()
}

/// Heatmaps of one sample class plus their mean and AGIR.
#[derive(Clone, Debug)]
pub struct HeatmapSet {
    pub class: Authenticity,
    pub per_image: Vec<(String, Heatmap)>,
    pub mean: Heatmap,
    pub masks: MaskPair,
    pub agir: f64,
}

/// Mean of several landmark sets, point by point.
pub fn mean_landmarks(sets: &[Landmarks68]) -> Result<Landmarks68> {
    let first = sets.first().ok_or_else(|| Error::Domain("no landmarks to average".into()))?;
    let n = sets.len() as f64;
    let pts = (0..first.points().len())
        .map(|i| {
            let (sx, sy) = sets
                .iter()
                .fold((0.0, 0.0), |(x, y), l| (x + l.points()[i].x, y + l.points()[i].y));
            Point::new(sx / n, sy / n)
        })
        .collect();
    Landmarks68::new(pts)
}

/// Grad-CAM for every sample of `class` in `manifest` (aligned images under
/// `root`), toward the sample's own ground truth. Masks come from the mean
/// aligned landmarks of those samples.
pub fn heatmaps_for_class<M: DetectionModel + ?Sized>(
    model: &M,
    root: &Path,
    manifest: &Manifest,
    class: Authenticity,
    limit: Option<usize>,
) -> Result<HeatmapSet> {
    let samples: Vec<&Sample> = manifest
        .entries
        .iter()
        .filter(|s| s.authenticity == class)
        .take(limit.unwrap_or(usize::MAX))
        .collect();
    if samples.is_empty() {
        return Err(Error::Domain(format!("no {} samples for heatmaps", class.as_str())));
    }
    let mut per_image = Vec::with_capacity(samples.len());
    let mut lms = Vec::with_capacity(samples.len());
    let mut size = (0, 0);
    for s in &samples {
        let img = load_rgb(&root.join(&s.path))?;
        size = (img.height(), img.width());
        let hm = explain::grad_cam(model, &image_to_tensor(&img), s.authenticity)?;
        per_image.push((s.path.clone(), hm));
        lms.push(landmark_csv::read_lm68(&root.join(&s.lm68_path), None)?);
    }
    let maps: Vec<Heatmap> = per_image.iter().map(|(_, h)| h.clone()).collect();
    let mean = explain::mean_heatmap(&maps)?;
    let masks = explain::face_masks(&mean_landmarks(&lms)?, size);
    let agir = explain::agir(&maps, &masks)?;
    Ok(HeatmapSet {
        class,
        per_image,
        mean,
        masks,
        agir,
    })
}

/// Write one PNG (plus JSON sidecar) per image and `mean.png` into `dir`.
pub fn save_heatmap_set(set: &HeatmapSet, dir: &Path, variant: Variant, alignment: Option<char>) -> Result<()> {
    for (path, hm) in &set.per_image {
        let name = path.trim_end_matches(".png").replace(['/', '\\'], "__");
        hm.save(
            &dir.join(format!("{name}.png")),
            &explain::HeatmapMeta {
                raw_min: hm.raw_min,
                raw_max: hm.raw_max,
                target: set.class,
                alignment,
                variant,
                count: 1,
            },
        )?;
    }
    set.mean.save(
        &dir.join("mean.png"),
        &explain::HeatmapMeta {
            raw_min: set.mean.raw_min,
            raw_max: set.mean.raw_max,
            target: set.class,
            alignment,
            variant,
            count: set.per_image.len(),
        },
    )
}

/// Hex SHA-256 of the concatenated parts, each length-prefixed.
pub fn content_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Directory the manifests' sample paths are relative to.
    pub source_root: PathBuf,
    /// Samples available for alignment (a superset of training and protocol images).
    pub manifest: PathBuf,
    pub train_manifest: PathBuf,
    pub protocol_index: PathBuf,
    pub output_dir: PathBuf,
    pub settings: Vec<char>,
    pub train: TrainConfig,
    #[serde(default)]
    pub force: bool,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutcome {
    pub reports: BTreeMap<char, MetricsReport>,
    pub table: Option<SweepTable>,
    pub failures: Vec<(char, String)>,
    /// Settings whose results came from the cache.
    pub cache_hits: Vec<char>,
    pub run_dirs: BTreeMap<char, PathBuf>,
}

/// Outputs of one trained and scored setting.
#[derive(Clone, Debug)]
pub struct SettingRun {
    pub dir: PathBuf,
    pub aligned_root: PathBuf,
    pub report: MetricsReport,
    pub cached: bool,
}

fn subset_for_alignment(all: &Manifest, train: &Manifest, protocols: &[ProtocolSpec]) -> Result<Manifest> {
    let mut wanted: BTreeSet<String> = train.entries.iter().map(|s| s.path.clone()).collect();
    wanted.extend(protocol_paths(protocols));
    let by_path: BTreeMap<&str, &Sample> = all.entries.iter().map(|s| (s.path.as_str(), s)).collect();
    let mut entries = Vec::with_capacity(wanted.len());
    for p in &wanted {
        match by_path.get(p.as_str()) {
            Some(s) => entries.push((*s).clone()),
            None => return Err(Error::Integrity(format!("{p} is not in the alignment manifest"))),
        }
    }
    Manifest::new(entries)
}

/// Align (cached), train (cached), score and evaluate one setting.
pub fn run_setting(cfg: &SweepConfig, setting: &AlignmentSetting) -> Result<SettingRun> {
    let all = Manifest::load(&cfg.manifest)?;
    let train = Manifest::load(&cfg.train_manifest)?;
    let protocols = benchmark::read_protocols(&cfg.protocol_index)?;
    // every sample is aligned (analysis classes too); this also checks coverage
    subset_for_alignment(&all, &train, &protocols)?;
    let subset = all;

    let subset_json = subset.to_json()?;
    let setting_json = serde_json::to_string(setting)?;
    let align_key = content_hash(&[b"align-v1", setting_json.as_bytes(), subset_json.as_bytes()]);
    let aligned_root = cfg.output_dir.join("aligned").join(format!("{}-{}", setting.id, &align_key[..12]));
    if cfg.force || !aligned_root.join(files::MANIFEST).exists() {
        log::info!("aligning {} samples to setting {}", subset.entries.len(), setting.id);
        align_manifest(&cfg.source_root, &subset, setting, &aligned_root, geometry::DEFAULT_FILL)?;
    }

    let mut train_cfg = cfg.train.clone();
    train_cfg.alignment = setting.id;
    let (h, w) = setting.output_size;
    train_cfg.backbone.input = (3, h as usize, w as usize);
    let protocols_json = serde_json::to_string(&protocols)?;
    let run_key = content_hash(&[
        b"run-v1",
        align_key.as_bytes(),
        serde_json::to_string(&train_cfg)?.as_bytes(),
        train.to_json()?.as_bytes(),
        protocols_json.as_bytes(),
    ]);
    let dir = cfg
        .output_dir
        .join("runs")
        .join(format!("{}-{}-{}", train_cfg.variant, setting.id, &run_key[..12]));
    let report_path = dir.join(files::REPORT_JSON);
    if !cfg.force && report_path.exists() {
        let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        return Ok(SettingRun {
            dir,
            aligned_root,
            report: MetricsReport::from_json(&text)?,
            cached: true,
        });
    }

    let ck_path = dir.join(files::CHECKPOINT);
    let checkpoint = if !cfg.force && ck_path.exists() {
        Checkpoint::load(&ck_path)?
    } else {
        let (ck, log) = train_on_manifest(&aligned_root, &train, &train_cfg)?;
        log.save(&dir.join(files::TRAIN_LOG))?;
        write_text(&dir.join(files::TRAIN_CONFIG), &train_cfg.to_json()?)?;
        ck.save(&ck_path)?;
        ck
    };
    let scores = score_paths(&checkpoint.model, &aligned_root, &protocol_paths(&protocols))?;
    benchmark::write_scores(&dir.join(files::SCORES), &scores)?;
    let report = benchmark::evaluate(&protocols, &scores)?;
    write_text(&dir.join(files::REPORT_CSV), &report.to_csv())?;
    // written last: its presence marks the setting as complete
    write_text(&report_path, &report.to_json()?)?;
    Ok(SettingRun {
        dir,
        aligned_root,
        report,
        cached: false,
    })
}

/// Run every configured setting, continuing past failures, then write the
/// sweep table (CSV and text) and one DET plot per protocol.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    if cfg.settings.is_empty() {
        return Err(Error::Domain("no alignment settings selected".into()));
    }
    cfg.train.validate()?;
    let mut out = SweepOutcome::default();
    for &id in &cfg.settings {
        let setting = geometry::setting(id)?;
        log::info!("sweep: setting {id}");
        match run_setting(cfg, &setting) {
            Ok(run) => {
                if run.cached {
                    out.cache_hits.push(id);
                }
                out.run_dirs.insert(id, run.dir);
                out.reports.insert(id, run.report);
            }
            Err(e) => {
                log::error!("setting {id} failed: {e}");
                out.failures.push((id, e.to_string()));
            }
        }
    }
    if out.reports.is_empty() {
        return Ok(out);
    }
    let table = benchmark::sweep_report(&out.reports)?;
    let variant = cfg.train.variant;
    write_text(&cfg.output_dir.join(format!("sweep_{variant}.csv")), &table.to_csv())?;
    write_text(&cfg.output_dir.join(format!("sweep_{variant}.txt")), &table.to_text())?;
    for proto in &table.protocols {
        let curves: Vec<(String, Vec<benchmark::DetPoint>)> = out
            .reports
            .iter()
            .filter_map(|(id, r)| r.protocols.get(proto).map(|m| (format!("setting {id}"), m.det.clone())))
            .collect();
        let stem = cfg.output_dir.join("det").join(format!("{variant}_{proto}"));
        write_text(
            &stem.with_extension("svg"),
            &benchmark::det_plot_svg(&format!("{variant} / {proto}"), &curves),
        )?;
        let png = benchmark::det_plot_png(&curves);
        save_png(&png, &stem.with_extension("png"))?;
    }
    if !out.failures.is_empty() {
        let mut s = String::from("setting,error\n");
        for (id, e) in &out.failures {
            s.push_str(&format!("{id},{}\n", e.replace(['\n', ','], " ")));
        }
        write_text(&cfg.output_dir.join(format!("sweep_{variant}_failures.csv")), &s)?;
    }
    out.table = Some(table);
    Ok(out)
}

/// Settings and overrides shared by the command-line stages; every field is
/// optional so a config file can hold any subset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub train_manifest: Option<PathBuf>,
    pub protocol_index: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub settings: Option<String>,
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub train: Option<TrainConfig>,
    pub toy: Option<ToyStudyConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Fail early on any referenced input path that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.dataset_root, &self.manifest, &self.train_manifest, &self.protocol_index]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Domain(format!("path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvNetConfig;

    fn tiny_study(root: &Path) -> ToyStudy {
        let cfg = ToyStudyConfig {
            identities: 6,
            per_identity: 3,
            holdout: 2,
            pairs_per_identity: 2,
            selfmorph_fraction: 0.5,
            train_bona_fide_per_identity: Some(2),
            test_pairs_per_identity: 2,
            test_selfmorph_fraction: 0.5,
            test_bona_fide_per_identity: 2,
            ..ToyStudyConfig::default()
        };
        build_toy_study(root, &cfg).unwrap()
    }

    #[test]
    fn toy_study_layout() {
        let dir = tempfile::tempdir().unwrap();
        let study = tiny_study(dir.path());
        let train = Manifest::load(&study.train_manifest).unwrap();
        let test = Manifest::load(&study.test_manifest).unwrap();
        let train_ids: BTreeSet<String> = train.identity_index.iter().cloned().collect();
        let test_ids: BTreeSet<String> = test.identity_index.iter().cloned().collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert_eq!(train_ids.len(), 4);
        assert_eq!(train.count(Authenticity::BonaFide), 8);
        assert_eq!(train.count(Authenticity::Morph), 4);
        assert_eq!(train.count(Authenticity::SelfMorph), 2);
        let protocols = benchmark::read_protocols(&study.protocol_index).unwrap();
        assert_eq!(protocols.len(), 2);
        assert_eq!(protocols[0].bona_fide, protocols[1].bona_fide);
        assert_ne!(protocols[0].morph, protocols[1].morph);
        assert!(test.count(Authenticity::SelfMorph) > 0);
    }

    #[test]
    fn sweep_caches_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let study = tiny_study(&dir.path().join("study"));
        let cfg = SweepConfig {
            source_root: study.source.clone(),
            manifest: study.manifest.clone(),
            train_manifest: study.train_manifest.clone(),
            protocol_index: study.protocol_index.clone(),
            output_dir: dir.path().join("out"),
            settings: vec!['d', 'k'],
            train: TrainConfig {
                epochs: 1,
                batch_size: 4,
                lr_start: 0.01,
                backbone: ConvNetConfig {
                    channels: vec![2, 2, 2, 2],
                    feature_dim: 4,
                    ..ConvNetConfig::default()
                },
                ..TrainConfig::default()
            },
            force: false,
        };
        let first = run_sweep(&cfg).unwrap();
        assert!(first.failures.is_empty(), "{:?}", first.failures);
        assert!(first.cache_hits.is_empty());
        let csv = std::fs::read_to_string(cfg.output_dir.join("sweep_fused.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(cfg.output_dir.join("det/fused_ldm-a50.svg").exists());
        assert!(cfg.output_dir.join("det/fused_ldm-a50.png").exists());

        let second = run_sweep(&cfg).unwrap();
        assert_eq!(second.cache_hits, vec!['d', 'k']);
        assert_eq!(second.reports, first.reports);
        assert_eq!(std::fs::read_to_string(cfg.output_dir.join("sweep_fused.csv")).unwrap(), csv);
    }

    #[test]
    fn failing_setting_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let study = tiny_study(&dir.path().join("study"));
        let cfg = SweepConfig {
            source_root: study.source.clone(),
            manifest: study.manifest.clone(),
            train_manifest: study.train_manifest.clone(),
            protocol_index: study.protocol_index.clone(),
            output_dir: dir.path().join("out"),
            settings: vec!['d'],
            train: TrainConfig {
                epochs: 1,
                batch_size: 4,
                lr_start: 1e200,
                lr_end: 1.0,
                backbone: ConvNetConfig {
                    channels: vec![2, 2, 2, 2],
                    feature_dim: 4,
                    ..ConvNetConfig::default()
                },
                ..TrainConfig::default()
            },
            force: false,
        };
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert!(out.table.is_none());
    }

    #[test]
    fn content_hash_separates_parts() {
        assert_ne!(content_hash(&[b"ab", b"c"]), content_hash(&[b"a", b"bc"]));
        assert_eq!(content_hash(&[b"x"]).len(), 64);
    }

    #[test]
    fn config_paths_checked() {
        let cfg = ExperimentConfig {
            manifest: Some(PathBuf::from("/definitely/not/here.json")),
            ..ExperimentConfig::default()
        };
        assert!(cfg.check_paths().is_err());
        assert!(ExperimentConfig::default().check_paths().is_ok());
    }
}
