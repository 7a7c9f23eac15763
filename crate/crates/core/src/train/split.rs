//! Dataset partitioning protocols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng_from_seed;
use crate::skeleton::SkeletonSequence;

/// Training subjects of the NTU RGB+D 60 cross-subject benchmark.
pub const NTU60_TRAIN_SUBJECTS: [u32; 20] = [
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SeventyThirty,
    CrossSubject,
    CrossView,
    CrossSetup,
    CrossTrial,
    CrossFall,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::SeventyThirty,
        Protocol::CrossSubject,
        Protocol::CrossView,
        Protocol::CrossSetup,
        Protocol::CrossTrial,
        Protocol::CrossFall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SeventyThirty => "seventy_thirty",
            Protocol::CrossSubject => "cross_subject",
            Protocol::CrossView => "cross_view",
            Protocol::CrossSetup => "cross_setup",
            Protocol::CrossTrial => "cross_trial",
            Protocol::CrossFall => "cross_fall",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A protocol together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Seeded random split stratified by the fall label.
    SeventyThirty { train_fraction: f64, seed: u64 },
    CrossSubject { train_subjects: BTreeSet<u32> },
    CrossView { train_views: BTreeSet<u32> },
    /// Even setup ids train, odd ones test.
    CrossSetup,
    CrossTrial { train_trials: BTreeSet<u32> },
    /// Leave one fall type out; non-falls are split 70-30 per action label.
    CrossFall { held_out: String, seed: u64 },
}

impl SplitSpec {
    pub fn protocol(&self) -> Protocol {
        match self {
            SplitSpec::SeventyThirty { .. } => Protocol::SeventyThirty,
            SplitSpec::CrossSubject { .. } => Protocol::CrossSubject,
            SplitSpec::CrossView { .. } => Protocol::CrossView,
            SplitSpec::CrossSetup => Protocol::CrossSetup,
            SplitSpec::CrossTrial { .. } => Protocol::CrossTrial,
            SplitSpec::CrossFall { .. } => Protocol::CrossFall,
        }
    }

    pub fn seventy_thirty(seed: u64) -> Self {
        SplitSpec::SeventyThirty { train_fraction: 0.7, seed }
    }

    /// Short label used as the fold column in result tables.
    pub fn fold(&self) -> String {
        match self {
            SplitSpec::CrossFall { held_out, .. } => held_out.clone(),
            _ => "-".into(),
        }
    }

    /// Replaces the seed of seeded protocols.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            SplitSpec::SeventyThirty { seed, .. } | SplitSpec::CrossFall { seed, .. } => *seed = new_seed,
            _ => {}
        }
        self
    }
}

fn join(ids: &BTreeSet<u32>) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSpec::SeventyThirty { train_fraction, seed } => {
                write!(f, "seventy_thirty:{train_fraction}@{seed}")
            }
            SplitSpec::CrossSubject { train_subjects } => write!(f, "cross_subject:{}", join(train_subjects)),
            SplitSpec::CrossView { train_views } => write!(f, "cross_view:{}", join(train_views)),
            SplitSpec::CrossSetup => f.write_str("cross_setup"),
            SplitSpec::CrossTrial { train_trials } => write!(f, "cross_trial:{}", join(train_trials)),
            SplitSpec::CrossFall { held_out, seed } => write!(f, "cross_fall:{held_out}@{seed}"),
        }
    }
}

fn parse_ids(s: &str) -> Result<BTreeSet<u32>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("invalid id `{t}` in split arguments")))
        })
        .collect()
}

/// Parses `name[:args][@seed]`, e.g. `cross_view:2,3`, `cross_fall:sideways@7`,
/// `seventy_thirty@3` or `seventy_thirty:0.8`.
impl FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, seed) = match s.rsplit_once('@') {
            Some((b, seed)) => (
                b,
                seed.parse::<u64>()
                    .map_err(|_| Error::Config(format!("invalid split seed `{seed}`")))?,
            ),
            None => (s, 0),
        };
        let (name, args) = match body.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim()).filter(|a| !a.is_empty())),
            None => (body.trim(), None),
        };
        let spec = match (name, args) {
            ("seventy_thirty", None) => SplitSpec::seventy_thirty(seed),
            ("seventy_thirty", Some(a)) => SplitSpec::SeventyThirty {
                train_fraction: a
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid train fraction `{a}`")))?,
                seed,
            },
            ("cross_subject", a) => SplitSpec::CrossSubject {
                train_subjects: match a {
                    Some(a) => parse_ids(a)?,
                    None => NTU60_TRAIN_SUBJECTS.into_iter().collect(),
                },
            },
            ("cross_view", a) => SplitSpec::CrossView {
                train_views: a.map_or_else(|| Ok([2, 3].into()), parse_ids)?,
            },
            ("cross_setup", None) => SplitSpec::CrossSetup,
            ("cross_trial", a) => SplitSpec::CrossTrial {
                train_trials: a.map_or_else(|| Ok([1, 2].into()), parse_ids)?,
            },
            ("cross_fall", Some(a)) => SplitSpec::CrossFall { held_out: a.to_string(), seed },
            ("cross_fall", None) => {
                return Err(Error::Config("cross_fall needs a held-out fall type".into()))
            }
            _ => return Err(Error::Config(format!("unknown split `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SplitSpec::SeventyThirty { train_fraction, .. }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) =>
            {
                Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_fraction}")))
            }
            SplitSpec::CrossSubject { train_subjects: ids }
            | SplitSpec::CrossView { train_views: ids }
            | SplitSpec::CrossTrial { train_trials: ids }
                if ids.is_empty() =>
            {
                Err(Error::Config(format!("{} needs at least one training id", self.protocol())))
            }
            SplitSpec::CrossFall { held_out, .. } if held_out.is_empty() => {
                Err(Error::Config("empty held-out fall type".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn missing(field: &str, offending: &[usize]) -> Error {
    let shown: Vec<String> = offending.iter().take(20).map(usize::to_string).collect();
    let more = if offending.len() > 20 { ", …" } else { "" };
    Error::Split(format!(
        "{} sample(s) lack {field}: [{}{more}]",
        offending.len(),
        shown.join(", ")
    ))
}

/// Partition by an id field; every sample must carry a nonzero id.
fn by_id(
    dataset: &[SkeletonSequence],
    field: &str,
    id: impl Fn(&SkeletonSequence) -> u32,
    in_train: impl Fn(u32) -> bool,
) -> Result<Split> {
    let offending: Vec<usize> = (0..dataset.len()).filter(|&i| id(&dataset[i]) == 0).collect();
    if !offending.is_empty() {
        return Err(missing(field, &offending));
    }
    let (train, test) = (0..dataset.len()).partition(|&i| in_train(id(&dataset[i])));
    Ok(Split { train, test })
}

/// Seeded per-group shuffle; each group contributes `round(fraction·n)` to
/// train, clamped so that groups of two or more feed both sides.
fn stratified<K: Ord>(
    groups: BTreeMap<K, Vec<usize>>,
    fraction: f64,
    seed: u64,
    split: &mut Split,
) {
    let mut rng = rng_from_seed(seed);
    for (_, mut members) in groups {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        split.train.extend_from_slice(&members[..k]);
        split.test.extend_from_slice(&members[k..]);
    }
}

pub fn make_split(dataset: &[SkeletonSequence], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut split = match spec {
        SplitSpec::SeventyThirty { train_fraction, seed } => {
            let mut groups: BTreeMap<bool, Vec<usize>> = BTreeMap::new();
            for (i, s) in dataset.iter().enumerate() {
                groups.entry(s.meta.is_fall).or_default().push(i);
            }
            let mut split = Split::default();
            stratified(groups, *train_fraction, *seed, &mut split);
            split
        }
        SplitSpec::CrossSubject { train_subjects } => {
            by_id(dataset, "subject_id", |s| s.meta.subject_id, |id| train_subjects.contains(&id))?
        }
        SplitSpec::CrossView { train_views } => {
            by_id(dataset, "view_id", |s| s.meta.view_id, |id| train_views.contains(&id))?
        }
        SplitSpec::CrossSetup => by_id(dataset, "setup_id", |s| s.meta.setup_id, |id| id % 2 == 0)?,
        SplitSpec::CrossTrial { train_trials } => {
            by_id(dataset, "trial_id", |s| s.meta.trial_id, |id| train_trials.contains(&id))?
        }
        SplitSpec::CrossFall { held_out, seed } => {
            let offending: Vec<usize> = (0..dataset.len())
                .filter(|&i| dataset[i].meta.is_fall && dataset[i].meta.fall_type.is_none())
                .collect();
            if !offending.is_empty() {
                return Err(missing("fall_type", &offending));
            }
            let mut split = Split::default();
            let mut adl: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, s) in dataset.iter().enumerate() {
                if s.meta.is_fall {
                    if s.meta.fall_type.as_deref() == Some(held_out.as_str()) {
                        split.test.push(i);
                    } else {
                        split.train.push(i);
                    }
                } else {
                    adl.entry(s.meta.action_label.as_str()).or_default().push(i);
                }
            }
            if split.test.is_empty() {
                return Err(Error::Split(format!("no fall of type `{held_out}` in the dataset")));
            }
            stratified(adl, 0.7, *seed, &mut split);
            split
        }
    };
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Split(format!(
            "{spec} yields {} training and {} test samples",
            split.train.len(),
            split.test.len()
        )));
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// One leave-one-out cross-fall spec per distinct fall type, sorted by name.
pub fn cross_fall_folds(dataset: &[SkeletonSequence], seed: u64) -> Vec<SplitSpec> {
    let types: BTreeSet<&str> = dataset
        .iter()
        .filter(|s| s.meta.is_fall)
        .filter_map(|s| s.meta.fall_type.as_deref())
        .collect();
    types
        .into_iter()
        .map(|t| SplitSpec::CrossFall { held_out: t.to_string(), seed })
        .collect()
}
