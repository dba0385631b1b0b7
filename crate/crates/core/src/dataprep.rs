//! Dataset manifests, the disjoint identity split, cross-subset pairing and
//! the dual-label assignment used by fused classification.
//!
//! Every sample carries two identity labels. Bona fides and self-morphs
//! duplicate their single identity; morphs inherit one label from each
//! source. The first network classifies the first label, the second network
//! the second one.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::ensure_parent;

/// Detection target for samples that count as bona fide (including self-morphs).
/// High detection scores therefore mean "bona fide".
pub const BONA_FIDE_TARGET: f64 = 1.0;
pub const MORPH_TARGET: f64 = 1.0 - BONA_FIDE_TARGET;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Authenticity {
    BonaFide,
    #[serde(rename = "selfmorph")]
    SelfMorph,
    Morph,
}

impl Authenticity {
    pub fn target(self) -> f64 {
        match self {
            Authenticity::BonaFide | Authenticity::SelfMorph => BONA_FIDE_TARGET,
            Authenticity::Morph => MORPH_TARGET,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Authenticity::BonaFide => "bona_fide",
            Authenticity::SelfMorph => "selfmorph",
            Authenticity::Morph => "morph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bona_fide" | "bonafide" => Ok(Authenticity::BonaFide),
            "selfmorph" => Ok(Authenticity::SelfMorph),
            "morph" => Ok(Authenticity::Morph),
            _ => Err(Error::Domain(format!("unknown sample class '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { identity_seed: u64, variation_seed: u64 },
    Morph { source_a: String, source_b: String, alpha: f64 },
    Aligned { source: String, setting: char },
    External { note: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub path: String,
    pub lm5_path: String,
    pub lm68_path: String,
    pub first_label: String,
    pub second_label: String,
    pub authenticity: Authenticity,
    pub provenance: Provenance,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        let same = self.first_label == self.second_label;
        match (self.authenticity, same) {
            (Authenticity::Morph, true) => Err(Error::Integrity(format!(
                "morph {} has equal source labels",
                self.path
            ))),
            (Authenticity::BonaFide | Authenticity::SelfMorph, false) => {
                Err(Error::Integrity(format!(
                    "{} sample {} carries two different labels",
                    self.authenticity.as_str(),
                    self.path
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Samples plus the dense identity index (labels sorted lexicographically).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub identity_index: Vec<String>,
    pub entries: Vec<Sample>,
}

impl Manifest {
    pub fn new(entries: Vec<Sample>) -> Result<Self> {
        let labels: BTreeSet<&str> = entries
            .iter()
            .flat_map(|s| [s.first_label.as_str(), s.second_label.as_str()])
            .collect();
        let m = Manifest {
            identity_index: labels.into_iter().map(str::to_owned).collect(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.identity_index.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Integrity(
                "identity index is not strictly sorted".into(),
            ));
        }
        for s in &self.entries {
            s.validate()?;
            self.class_index(&s.first_label)?;
            self.class_index(&s.second_label)?;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.identity_index.len()
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        self.identity_index
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| Error::Integrity(format!("identity '{label}' is not in the index")))
    }

    /// Identities that own at least one bona fide sample.
    pub fn identities(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|s| s.authenticity == Authenticity::BonaFide)
            .map(|s| s.first_label.as_str())
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Bona fide samples of one identity, in manifest order.
    pub fn bona_fides_of(&self, label: &str) -> Vec<&Sample> {
        self.entries
            .iter()
            .filter(|s| s.authenticity == Authenticity::BonaFide && s.first_label == label)
            .collect()
    }

    pub fn count(&self, class: Authenticity) -> usize {
        self.entries.iter().filter(|s| s.authenticity == class).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }

    /// Keep the samples whose labels all lie in `labels`.
    pub fn restrict_to(&self, labels: &BTreeSet<String>) -> Result<Manifest> {
        Manifest::new(
            self.entries
                .iter()
                .filter(|s| labels.contains(&s.first_label) && labels.contains(&s.second_label))
                .cloned()
                .collect(),
        )
    }
}

/// Split identities into a training part and a held-out part of `holdout` identities.
pub fn partition_identities(
    manifest: &Manifest,
    holdout: usize,
    seed: u64,
) -> Result<(Manifest, Manifest)> {
    let mut ids = manifest.identities();
    if holdout == 0 || holdout >= ids.len() {
        return Err(Error::Domain(format!(
            "cannot hold out {holdout} of {} identities",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x0004_01d0_u64));
    let test: BTreeSet<String> = ids[..holdout].iter().cloned().collect();
    let train: BTreeSet<String> = ids[holdout..].iter().cloned().collect();
    Ok((manifest.restrict_to(&train)?, manifest.restrict_to(&test)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub first: String,
    pub second: String,
    /// Seeds for choosing the source image within each identity.
    pub image_seed_first: u64,
    pub image_seed_second: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub subset_first: Vec<String>,
    pub subset_second: Vec<String>,
    pub pairs: Vec<Pair>,
}

impl PairingPlan {
    pub fn validate(&self) -> Result<()> {
        let first: BTreeSet<&String> = self.subset_first.iter().collect();
        let second: BTreeSet<&String> = self.subset_second.iter().collect();
        if first.intersection(&second).next().is_some() {
            return Err(Error::Integrity("pairing subsets overlap".into()));
        }
        for p in &self.pairs {
            if !first.contains(&p.first) || !second.contains(&p.second) {
                return Err(Error::Integrity(format!(
                    "pair ({}, {}) does not cross the subsets",
                    p.first, p.second
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: PairingPlan =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Balanced random split of the manifest's identities into two disjoint subsets.
pub fn split_identities(manifest: &Manifest, seed: u64) -> Result<PairingPlan> {
    let mut ids = manifest.identities();
    if ids.len() < 2 {
        return Err(Error::Domain(format!(
            "splitting needs at least 2 identities, got {}",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = ids.split_off(ids.len().div_ceil(2));
    let mut first = ids;
    first.sort();
    let mut second = second;
    second.sort();
    Ok(PairingPlan {
        subset_first: first,
        subset_second: second,
        pairs: Vec::new(),
    })
}

/// Draw `pairs_per_identity` partners from the second subset for every
/// identity of the first one.
///
/// Partners are taken from a shuffled cycle over the second subset, so its
/// identities are used evenly and the same partner never follows itself.
pub fn make_pairs(plan: &PairingPlan, pairs_per_identity: usize, seed: u64) -> Result<PairingPlan> {
    if plan.subset_first.is_empty() || plan.subset_second.is_empty() {
        return Err(Error::Domain("both pairing subsets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cycle: Vec<&String> = plan.subset_second.iter().collect();
    cycle.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut pairs = Vec::with_capacity(plan.subset_first.len() * pairs_per_identity);
    for first in &plan.subset_first {
        let mut last: Option<&String> = None;
        for _ in 0..pairs_per_identity {
            let mut partner = cycle[cursor % cycle.len()];
            cursor += 1;
            if cycle.len() > 1 && Some(partner) == last {
                partner = cycle[cursor % cycle.len()];
                cursor += 1;
            }
            last = Some(partner);
            pairs.push(Pair {
                first: first.clone(),
                second: partner.clone(),
                image_seed_first: rng.gen(),
                image_seed_second: rng.gen(),
            });
        }
    }
    let out = PairingPlan {
        subset_first: plan.subset_first.clone(),
        subset_second: plan.subset_second.clone(),
        pairs,
    };
    out.validate()?;
    Ok(out)
}

/// Dense class indices and detection target for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingLabels {
    pub first_class: usize,
    pub second_class: usize,
    pub target: f64,
}

/// Resolve both labels through the manifest's own identity index.
pub fn assign_training_labels(manifest: &Manifest) -> Result<Vec<TrainingLabels>> {
    assign_training_labels_with(manifest, manifest)
}

/// Resolve labels through another manifest's index (e.g. the training set's).
pub fn assign_training_labels_with(
    manifest: &Manifest,
    index: &Manifest,
) -> Result<Vec<TrainingLabels>> {
    manifest
        .entries
        .iter()
        .map(|s| {
            s.validate()?;
            Ok(TrainingLabels {
                first_class: index.class_index(&s.first_label)?,
                second_class: index.class_index(&s.second_label)?,
                target: s.authenticity.target(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(path: &str, a: &str, b: &str, t: Authenticity) -> Sample {
        Sample {
            path: path.into(),
            lm5_path: format!("{path}.lm5.csv"),
            lm68_path: format!("{path}.lm68.csv"),
            first_label: a.into(),
            second_label: b.into(),
            authenticity: t,
            provenance: Provenance::External { note: "test".into() },
        }
    }

    fn bona_fide_manifest(n: usize) -> Manifest {
        Manifest::new(
            (0..n)
                .map(|i| {
                    let l = format!("id_{i:04}");
                    sample(&format!("{l}/0.png"), &l, &l, Authenticity::BonaFide)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sample_invariants() {
        assert!(Manifest::new(vec![sample("m", "a", "a", Authenticity::Morph)]).is_err());
        assert!(Manifest::new(vec![sample("b", "a", "c", Authenticity::BonaFide)]).is_err());
        assert!(Manifest::new(vec![sample("s", "a", "c", Authenticity::SelfMorph)]).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let p = split_identities(&bona_fide_manifest(2), 0).unwrap();
        assert_eq!((p.subset_first.len(), p.subset_second.len()), (1, 1));
        let p = split_identities(&bona_fide_manifest(41), 3).unwrap();
        let mut sizes = [p.subset_first.len(), p.subset_second.len()];
        sizes.sort();
        assert_eq!(sizes, [20, 21]);
        let m = bona_fide_manifest(40);
        assert_eq!(split_identities(&m, 0).unwrap(), split_identities(&m, 0).unwrap());
        assert_ne!(split_identities(&m, 0).unwrap(), split_identities(&m, 1).unwrap());
        assert!(matches!(split_identities(&bona_fide_manifest(1), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn pairs_cross_and_count() {
        let single = PairingPlan {
            subset_first: vec!["A".into()],
            subset_second: vec!["B".into()],
            pairs: vec![],
        };
        let p = make_pairs(&single, 1, 0).unwrap();
        assert_eq!(p.pairs.len(), 1);
        assert_eq!((p.pairs[0].first.as_str(), p.pairs[0].second.as_str()), ("A", "B"));

        let m = bona_fide_manifest(20);
        let plan = make_pairs(&split_identities(&m, 9).unwrap(), 2, 4).unwrap();
        assert!(plan.pairs.len() >= 20);
        for pair in &plan.pairs {
            assert!(plan.subset_first.contains(&pair.first));
            assert!(plan.subset_second.contains(&pair.second));
        }
        for w in plan.pairs.windows(2) {
            if w[0].first == w[1].first {
                assert_ne!(w[0].second, w[1].second);
            }
        }
        assert_eq!(plan, make_pairs(&split_identities(&m, 9).unwrap(), 2, 4).unwrap());
    }

    #[test]
    fn labels() {
        let m = Manifest::new(vec![
            sample("b", "k", "k", Authenticity::BonaFide),
            sample("s", "k", "k", Authenticity::SelfMorph),
            sample("m", "k", "m", Authenticity::Morph),
        ])
        .unwrap();
        let l = assign_training_labels(&m).unwrap();
        let (k, mm) = (m.class_index("k").unwrap(), m.class_index("m").unwrap());
        assert_eq!(l[0], TrainingLabels { first_class: k, second_class: k, target: 1.0 });
        assert_eq!(l[1], TrainingLabels { first_class: k, second_class: k, target: 1.0 });
        assert_eq!(l[2], TrainingLabels { first_class: k, second_class: mm, target: 0.0 });

        let other = bona_fide_manifest(2);
        assert!(matches!(
            assign_training_labels_with(&m, &other),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn json_roundtrip_is_byte_stable() {
        let mut m = bona_fide_manifest(3);
        m.entries.push(Sample {
            provenance: Provenance::Morph {
                source_a: "x.png".into(),
                source_b: "y.png".into(),
                alpha: 0.1 + 0.2,
            },
            ..sample("morph.png", "id_0000", "id_0001", Authenticity::Morph)
        });
        let text = m.to_json().unwrap();
        let back = Manifest::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn unsorted_index_rejected() {
        let mut m = bona_fide_manifest(2);
        m.identity_index.reverse();
        assert!(Manifest::from_json(&serde_json::to_string(&m).unwrap()).is_err());
    }
}
