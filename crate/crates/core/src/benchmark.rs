//! Protocol files, score files, APCER/BPCER operating points, DET curves and
//! the alignment sweep table.
//!
//! Scores follow one polarity everywhere: higher means more bona fide. A
//! morph is accepted (an attack error) when its score is at or above the
//! threshold; a bona fide is rejected when its score is below it.

mod plot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plot::{det_plot_png, det_plot_svg};

/// Fixed APCER operating points of the report.
pub const DELTAS: [f64; 2] = [0.1, 0.01];

/// First line of every score file.
pub const POLARITY_LINE: &str = "# polarity=bonafide-high";

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Domain(format!("{name} score list is empty")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Domain(format!("non-finite {name} score {s}")));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Number of elements of ascending `s` strictly below `t`.
fn count_below(s: &[f64], t: f64) -> usize {
    s.partition_point(|&x| x < t)
}

/// Ascending candidate thresholds: distinct observed scores between the
/// two infinite sentinels.
fn candidates(bf: &[f64], morph: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = bf.iter().chain(morph).copied().collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    let mut out = Vec::with_capacity(c.len() + 2);
    out.push(f64::NEG_INFINITY);
    out.extend(c);
    out.push(f64::INFINITY);
    out
}

/// `(APCER, BPCER)` at threshold `t` over pre-sorted score lists.
fn rates_sorted(bf: &[f64], morph: &[f64], t: f64) -> (f64, f64) {
    let apcer = (morph.len() - count_below(morph, t)) as f64 / morph.len() as f64;
    let bpcer = count_below(bf, t) as f64 / bf.len() as f64;
    (apcer, bpcer)
}

/// `(APCER, BPCER)` at threshold `t`.
pub fn rates_at(bf: &[f64], morph: &[f64], t: f64) -> (f64, f64) {
    rates_sorted(&sorted(bf), &sorted(morph), t)
}

/// BPCER at the smallest candidate threshold whose APCER does not exceed
/// `delta`, together with that threshold.
pub fn apcer_bpcer_at(bf: &[f64], morph: &[f64], delta: f64) -> Result<(f64, f64)> {
    check_scores("bona fide", bf)?;
    check_scores("morph", morph)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 1)")));
    }
    let (sb, sm) = (sorted(bf), sorted(morph));
    for t in candidates(bf, morph) {
        let (apcer, bpcer) = rates_sorted(&sb, &sm, t);
        if apcer <= delta {
            return Ok((bpcer, t));
        }
    }
    unreachable!("APCER is zero at the +inf sentinel")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    #[serde(with = "ext_f64")]
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

/// One point per candidate threshold, ascending, from `(1, 0)` at `-inf`
/// to `(0, 1)` at `+inf`.
pub fn det_curve(bf: &[f64], morph: &[f64]) -> Result<Vec<DetPoint>> {
    check_scores("bona fide", bf)?;
    check_scores("morph", morph)?;
    let (sb, sm) = (sorted(bf), sorted(morph));
    Ok(candidates(bf, morph)
        .into_iter()
        .map(|t| {
            let (apcer, bpcer) = rates_sorted(&sb, &sm, t);
            DetPoint {
                threshold: t,
                apcer,
                bpcer,
            }
        })
        .collect())
}

/// Equal error rate, linearly interpolated where `APCER - BPCER` changes sign.
pub fn eer(curve: &[DetPoint]) -> f64 {
    for w in curve.windows(2) {
        let d0 = w[0].apcer - w[0].bpcer;
        let d1 = w[1].apcer - w[1].bpcer;
        if d0 == 0.0 {
            return w[0].apcer;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].apcer + t * (w[1].apcer - w[0].apcer);
        }
    }
    curve.last().map(|p| p.apcer).unwrap_or(f64::NAN)
}

/// Area under the ROC curve: probability that a random bona fide outscores a
/// random morph, ties counting half.
pub fn roc_auc(bf: &[f64], morph: &[f64]) -> Result<f64> {
    check_scores("bona fide", bf)?;
    check_scores("morph", morph)?;
    let sm = sorted(morph);
    let mut wins = 0.0;
    for &b in bf {
        let below = count_below(&sm, b);
        let ties = sm.partition_point(|&x| x <= b) - below;
        wins += below as f64 + 0.5 * ties as f64;
    }
    Ok(wins / (bf.len() as f64 * morph.len() as f64))
}

fn median(v: &[f64]) -> f64 {
    let s = sorted(v);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median of a score list (`NaN` when empty).
pub fn median_score(v: &[f64]) -> f64 {
    median(v)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub bona_fide: Vec<String>,
    pub morph: Vec<String>,
}

impl ProtocolSpec {
    pub fn new(name: impl Into<String>, bona_fide: Vec<String>, morph: Vec<String>) -> Result<Self> {
        let p = ProtocolSpec {
            name: name.into(),
            bona_fide,
            morph,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Domain(format!("invalid protocol name {:?}", self.name)));
        }
        if self.bona_fide.is_empty() || self.morph.is_empty() {
            return Err(Error::Domain(format!("protocol {} has an empty list", self.name)));
        }
        let bf: BTreeSet<&String> = self.bona_fide.iter().collect();
        if let Some(p) = self.morph.iter().find(|p| bf.contains(p)) {
            return Err(Error::Integrity(format!("protocol {}: {p} is listed as both classes", self.name)));
        }
        Ok(())
    }
}

/// Protocol index entry: the two list files, relative to the index file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolFiles {
    pub bona_fide: String,
    pub morph: String,
}

fn list_text(paths: &[String]) -> String {
    let mut s = String::new();
    for p in paths {
        s.push_str(p);
        s.push('\n');
    }
    s
}

fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// Write one bona fide and one morph list per protocol next to
/// `index_path`, plus the JSON index itself.
pub fn write_protocols(index_path: &Path, protocols: &[ProtocolSpec]) -> Result<()> {
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let mut index = BTreeMap::new();
    for p in protocols {
        p.validate()?;
        let files = ProtocolFiles {
            bona_fide: format!("{}.bonafide.txt", p.name),
            morph: format!("{}.morph.txt", p.name),
        };
        for (file, list) in [(&files.bona_fide, &p.bona_fide), (&files.morph, &p.morph)] {
            let path = dir.join(file);
            crate::imageio::ensure_parent(&path)?;
            std::fs::write(&path, list_text(list)).map_err(|e| Error::io(&path, e))?;
        }
        if index.insert(p.name.clone(), files).is_some() {
            return Err(Error::Domain(format!("duplicate protocol name {}", p.name)));
        }
    }
    let text = serde_json::to_string_pretty(&index)? + "\n";
    crate::imageio::ensure_parent(index_path)?;
    std::fs::write(index_path, text).map_err(|e| Error::io(index_path, e))
}

/// Read all protocols of an index, in name order.
pub fn read_protocols(index_path: &Path) -> Result<Vec<ProtocolSpec>> {
    let text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let index: BTreeMap<String, ProtocolFiles> =
        serde_json::from_str(&text).map_err(|e| Error::format(index_path, e.to_string()))?;
    let dir = index_path.parent().unwrap_or(Path::new("."));
    index
        .into_iter()
        .map(|(name, files)| {
            let read = |f: &str| -> Result<Vec<String>> {
                let path: PathBuf = dir.join(f);
                let t = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(parse_list(&t))
            };
            let spec = ProtocolSpec {
                name,
                bona_fide: read(&files.bona_fide)?,
                morph: read(&files.morph)?,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub path: String,
    pub score: f64,
}

impl ScoreRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.score.is_finite() && (0.0..=1.0).contains(&self.score)) {
            return Err(Error::Integrity(format!("score {} for {} outside [0, 1]", self.score, self.path)));
        }
        Ok(())
    }
}

pub fn scores_to_string(records: &[ScoreRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        r.validate()?;
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    let mut out = String::from(POLARITY_LINE);
    out.push('\n');
    if records.is_empty() {
        out.push_str("path,score\n");
    }
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn scores_from_str(text: &str) -> Result<Vec<ScoreRecord>> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != POLARITY_LINE {
        return Err(Error::Integrity(format!(
            "score file must start with {POLARITY_LINE:?}, found {first:?}"
        )));
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "score"] {
        return Err(Error::Integrity(format!("unexpected score header {headers:?}")));
    }
    let records = r.deserialize().collect::<std::result::Result<Vec<ScoreRecord>, _>>()?;
    for rec in &records {
        rec.validate()?;
    }
    Ok(records)
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    crate::imageio::ensure_parent(path)?;
    std::fs::write(path, scores_to_string(records)?).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scores_from_str(&text).map_err(|e| match e {
        Error::Integrity(msg) => Error::format(path, msg),
        Error::Csv(err) => Error::format(path, err.to_string()),
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub delta: f64,
    pub bpcer: f64,
    pub apcer: f64,
    #[serde(with = "ext_f64")]
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMetrics {
    pub n_bona_fide: usize,
    pub n_morph: usize,
    pub operating_points: Vec<OperatingPoint>,
    pub eer: f64,
    pub det: Vec<DetPoint>,
}

impl ProtocolMetrics {
    pub fn bpcer_at(&self, delta: f64) -> Option<f64> {
        self.operating_points.iter().find(|o| o.delta == delta).map(|o| o.bpcer)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocols: BTreeMap<String, ProtocolMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per protocol with BPCER at each fixed APCER and the EER.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("protocol");
        for d in DELTAS {
            let _ = write!(s, ",bpcer@apcer={d}");
        }
        s.push_str(",eer\n");
        for (name, m) in &self.protocols {
            s.push_str(name);
            for d in DELTAS {
                let _ = write!(s, ",{:.4}", m.bpcer_at(d).unwrap_or(f64::NAN));
            }
            let _ = writeln!(s, ",{:.4}", m.eer);
        }
        s
    }
}

pub fn protocol_metrics(bf: &[f64], morph: &[f64]) -> Result<ProtocolMetrics> {
    let mut ops = Vec::with_capacity(DELTAS.len());
    for delta in DELTAS {
        let (bpcer, threshold) = apcer_bpcer_at(bf, morph, delta)?;
        let (apcer, _) = rates_at(bf, morph, threshold);
        ops.push(OperatingPoint {
            delta,
            bpcer,
            apcer,
            threshold,
        });
    }
    let det = det_curve(bf, morph)?;
    Ok(ProtocolMetrics {
        n_bona_fide: bf.len(),
        n_morph: morph.len(),
        operating_points: ops,
        eer: eer(&det),
        det,
    })
}

/// Join scores to protocols by path and compute per-protocol metrics.
pub fn evaluate(protocols: &[ProtocolSpec], scores: &[ScoreRecord]) -> Result<MetricsReport> {
    let mut by_path: HashMap<&str, f64> = HashMap::with_capacity(scores.len());
    for r in scores {
        r.validate()?;
        if let Some(prev) = by_path.insert(&r.path, r.score) {
            if prev != r.score {
                return Err(Error::Integrity(format!("conflicting scores for {}", r.path)));
            }
        }
    }
    let mut missing = BTreeSet::new();
    let mut report = MetricsReport::default();
    for p in protocols {
        p.validate()?;
        let mut lookup = |list: &[String]| -> Vec<f64> {
            list.iter()
                .filter_map(|path| {
                    let s = by_path.get(path.as_str()).copied();
                    if s.is_none() {
                        missing.insert(path.clone());
                    }
                    s
                })
                .collect()
        };
        let bf = lookup(&p.bona_fide);
        let morph = lookup(&p.morph);
        if bf.len() == p.bona_fide.len() && morph.len() == p.morph.len() {
            report.protocols.insert(p.name.clone(), protocol_metrics(&bf, &morph)?);
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingScores(missing.into_iter().collect()));
    }
    Ok(report)
}

/// Alignments by protocol-and-delta table of BPCER values with the lowest
/// entry of every column marked.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub alignments: Vec<char>,
    pub protocols: Vec<String>,
    pub deltas: Vec<f64>,
    /// `values[row][protocol * deltas.len() + delta]`; `None` when absent.
    pub values: Vec<Vec<Option<f64>>>,
}

impl SweepTable {
    pub fn columns(&self) -> Vec<String> {
        self.protocols
            .iter()
            .flat_map(|p| self.deltas.iter().map(move |d| format!("{p}@{d}")))
            .collect()
    }

    /// Row indices holding the minimum of each column (all ties marked).
    pub fn best(&self) -> Vec<Vec<usize>> {
        let ncol = self.protocols.len() * self.deltas.len();
        (0..ncol)
            .map(|c| {
                let min = self
                    .values
                    .iter()
                    .filter_map(|r| r[c])
                    .fold(f64::INFINITY, f64::min);
                (0..self.values.len())
                    .filter(|&r| self.values[r][c] == Some(min))
                    .collect()
            })
            .collect()
    }

    fn cells(&self) -> Vec<Vec<String>> {
        let best = self.best();
        self.values
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(|(c, v)| match v {
                        Some(v) if best[c].contains(&r) => format!("{v:.4}*"),
                        Some(v) => format!("{v:.4}"),
                        None => "-".into(),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("alignment");
        for c in self.columns() {
            s.push(',');
            s.push_str(&c);
        }
        s.push('\n');
        for (a, row) in self.alignments.iter().zip(self.cells()) {
            s.push(*a);
            for c in row {
                s.push(',');
                s.push_str(&c);
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width text rendering with `*` marking the best entry per column.
    pub fn to_text(&self) -> String {
        let cols = self.columns();
        let cells = self.cells();
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(c, h)| cells.iter().map(|r| r[c].len()).chain([h.len()]).max().unwrap_or(0))
            .collect();
        let mut s = String::from("align");
        for (h, w) in cols.iter().zip(&widths) {
            let _ = write!(s, "  {h:>w$}");
        }
        s.push('\n');
        for (a, row) in self.alignments.iter().zip(&cells) {
            let _ = write!(s, "{a:<5}");
            for (c, w) in row.iter().zip(&widths) {
                let _ = write!(s, "  {c:>w$}");
            }
            s.push('\n');
        }
        s
    }
}

/// Build the sweep table from per-alignment reports.
pub fn sweep_report(results: &BTreeMap<char, MetricsReport>) -> Result<SweepTable> {
    if results.is_empty() {
        return Err(Error::Domain("sweep report needs at least one alignment".into()));
    }
    let protocols: Vec<String> = results
        .values()
        .flat_map(|r| r.protocols.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let deltas = DELTAS.to_vec();
    let values = results
        .values()
        .map(|r| {
            protocols
                .iter()
                .flat_map(|p| deltas.iter().map(move |&d| r.protocols.get(p).and_then(|m| m.bpcer_at(d))))
                .collect()
        })
        .collect();
    Ok(SweepTable {
        alignments: results.keys().copied().collect(),
        protocols,
        deltas,
        values,
    })
}

/// JSON has no infinities; thresholds at the sentinels are written as strings.
mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive oracle: evaluate every candidate with plain counting loops.
    fn brute(bf: &[f64], morph: &[f64], delta: f64) -> (f64, f64) {
        let mut ts: Vec<f64> = bf.iter().chain(morph).copied().collect();
        ts.push(f64::INFINITY);
        ts.push(f64::NEG_INFINITY);
        let mut best: Option<(f64, f64)> = None;
        for &t in &ts {
            let apcer = morph.iter().filter(|&&m| m >= t).count() as f64 / morph.len() as f64;
            let bpcer = bf.iter().filter(|&&b| b < t).count() as f64 / bf.len() as f64;
            if apcer <= delta && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, bpcer));
            }
        }
        let (t, b) = best.unwrap();
        (b, t)
    }

    #[test]
    fn perfect_separation() {
        let (b, _) = apcer_bpcer_at(&[0.9, 0.8], &[0.1, 0.2], 0.1).unwrap();
        assert_eq!(b, 0.0);
        let det = det_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert!(det.iter().any(|p| p.apcer == 0.0 && p.bpcer == 0.0));
        assert_eq!((det[0].apcer, det[0].bpcer), (1.0, 0.0));
        let last = det.last().unwrap();
        assert_eq!((last.apcer, last.bpcer), (0.0, 1.0));
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn complete_overlap() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let (b, _) = apcer_bpcer_at(&v, &v, 0.1).unwrap();
        assert!(b >= 0.9);
        for p in det_curve(&v, &v).unwrap() {
            assert!((p.apcer + p.bpcer - 1.0).abs() < 1e-12);
        }
        assert_eq!(roc_auc(&v, &v).unwrap(), 0.5);
    }

    #[test]
    fn domain_errors() {
        assert!(apcer_bpcer_at(&[], &[0.1], 0.1).is_err());
        assert!(apcer_bpcer_at(&[0.1], &[0.1], 0.0).is_err());
        assert!(apcer_bpcer_at(&[f64::NAN], &[0.1], 0.1).is_err());
    }

    #[test]
    fn eer_of_symmetric_overlap() {
        let bf = [0.6, 0.7, 0.8, 0.3];
        let morph = [0.2, 0.3, 0.4, 0.7];
        let curve = det_curve(&bf, &morph).unwrap();
        let e = eer(&curve);
        assert!((e - 0.25).abs() < 1e-12, "{e}");
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            bf in prop::collection::vec(0u16..200, 1..60),
            morph in prop::collection::vec(0u16..200, 1..60),
            delta in 0.001f64..0.999,
        ) {
            let bf: Vec<f64> = bf.iter().map(|&v| v as f64 / 200.0).collect();
            let morph: Vec<f64> = morph.iter().map(|&v| v as f64 / 200.0).collect();
            prop_assert_eq!(apcer_bpcer_at(&bf, &morph, delta).unwrap(), brute(&bf, &morph, delta));
        }

        #[test]
        fn monotone_transform_invariant(
            bf in prop::collection::vec(0.0f64..1.0, 1..40),
            morph in prop::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let f = |v: &Vec<f64>| v.iter().map(|x| x.powi(3) * 5.0 - 2.0).collect::<Vec<_>>();
            for d in DELTAS {
                let (a, _) = apcer_bpcer_at(&bf, &morph, d).unwrap();
                let (b, _) = apcer_bpcer_at(&f(&bf), &f(&morph), d).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn duplication_invariant(
            bf in prop::collection::vec(0.0f64..1.0, 1..40),
            morph in prop::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let dup = |v: &Vec<f64>| v.iter().chain(v).copied().collect::<Vec<_>>();
            for d in DELTAS {
                prop_assert_eq!(apcer_bpcer_at(&bf, &morph, d).unwrap(), apcer_bpcer_at(&dup(&bf), &dup(&morph), d).unwrap());
            }
        }

        #[test]
        fn stricter_delta_never_lowers_bpcer(
            bf in prop::collection::vec(0.0f64..1.0, 1..40),
            morph in prop::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let (loose, _) = apcer_bpcer_at(&bf, &morph, 0.1).unwrap();
            let (strict, _) = apcer_bpcer_at(&bf, &morph, 0.01).unwrap();
            prop_assert!(strict >= loose);
        }

        #[test]
        fn det_is_monotone(
            bf in prop::collection::vec(0.0f64..1.0, 1..40),
            morph in prop::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let c = det_curve(&bf, &morph).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[1].apcer <= w[0].apcer && w[1].bpcer >= w[0].bpcer);
            }
        }
    }

    fn protocol(name: &str, n: usize, offset: usize) -> ProtocolSpec {
        ProtocolSpec::new(
            name,
            (0..n).map(|i| format!("bf/{i}.png")).collect(),
            (0..n).map(|i| format!("{name}/m{}.png", i + offset)).collect(),
        )
        .unwrap()
    }

    fn records(p: &[ProtocolSpec]) -> Vec<ScoreRecord> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for spec in p {
            for (i, path) in spec.bona_fide.iter().enumerate() {
                if seen.insert(path.clone()) {
                    out.push(ScoreRecord {
                        path: path.clone(),
                        score: 0.5 + 0.4 * (i as f64 / 10.0).sin().abs(),
                    });
                }
            }
            for (i, path) in spec.morph.iter().enumerate() {
                out.push(ScoreRecord {
                    path: path.clone(),
                    score: 0.55 * (i as f64 / 7.0).cos().abs(),
                });
            }
        }
        out
    }

    #[test]
    fn evaluate_is_order_free_and_partitionable() {
        let ps = vec![protocol("p-one", 12, 0), protocol("p-two", 12, 3)];
        let mut recs = records(&ps);
        let a = evaluate(&ps, &recs).unwrap();
        recs.reverse();
        assert_eq!(evaluate(&ps, &recs).unwrap(), a);
        let one = evaluate(&ps[..1], &recs).unwrap();
        let two = evaluate(&ps[1..], &recs).unwrap();
        let mut merged = one.protocols.clone();
        merged.extend(two.protocols);
        assert_eq!(merged, a.protocols);
    }

    #[test]
    fn missing_scores_listed() {
        let ps = vec![protocol("p", 4, 0)];
        let mut recs = records(&ps);
        recs.retain(|r| r.path != "p/m2.png" && r.path != "bf/1.png");
        match evaluate(&ps, &recs) {
            Err(Error::MissingScores(m)) => assert_eq!(m, vec!["bf/1.png".to_string(), "p/m2.png".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn score_file_round_trip() {
        let recs = vec![
            ScoreRecord {
                path: "a,b.png".into(),
                score: 1.0 / 3.0,
            },
            ScoreRecord {
                path: "c.png".into(),
                score: 1e-17,
            },
        ];
        let text = scores_to_string(&recs).unwrap();
        assert!(text.starts_with("# polarity=bonafide-high\npath,score\n"));
        let back = scores_from_str(&text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(scores_to_string(&back).unwrap(), text);
        assert!(matches!(scores_from_str("path,score\nx,0.5\n"), Err(Error::Integrity(_))));
        assert!(scores_from_str("# polarity=bonafide-high\npath,score\nx,1.5\n").is_err());
    }

    #[test]
    fn protocol_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = dir.path().join("protocols.json");
        let ps = vec![protocol("p-b", 3, 0), protocol("p-a", 2, 1)];
        write_protocols(&idx, &ps).unwrap();
        let back = read_protocols(&idx).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], ps[1]);
        assert_eq!(back[1], ps[0]);
        let first = std::fs::read(&idx).unwrap();
        write_protocols(&idx, &back).unwrap();
        assert_eq!(std::fs::read(&idx).unwrap(), first);
    }

    #[test]
    fn overlapping_lists_rejected() {
        assert!(ProtocolSpec::new("x", vec!["a".into()], vec!["a".into()]).is_err());
        assert!(ProtocolSpec::new("x", vec![], vec!["a".into()]).is_err());
    }

    #[test]
    fn report_json_keeps_infinite_thresholds() {
        let ps = vec![protocol("p", 6, 0)];
        let r = evaluate(&ps, &records(&ps)).unwrap();
        let back = MetricsReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sweep_table_shape_and_marks() {
        let ps = vec![protocol("p-a", 8, 0), protocol("p-b", 8, 2)];
        let recs = records(&ps);
        let mut results = BTreeMap::new();
        for a in ['d', 'e'] {
            results.insert(a, evaluate(&ps, &recs).unwrap());
        }
        let t = sweep_report(&results).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "alignment,p-a@0.1,p-a@0.01,p-b@0.1,p-b@0.01");
        // identical rows: both marked in every column
        assert!(lines[1..].iter().all(|l| l.matches('*').count() == 4));
        assert!(t.to_text().lines().count() == 3);

        let one: BTreeMap<char, MetricsReport> = results.into_iter().take(1).collect();
        assert_eq!(sweep_report(&one).unwrap().to_csv().lines().count(), 2);
        assert!(sweep_report(&BTreeMap::new()).is_err());
    }
}
