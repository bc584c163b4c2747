//! Corpus mixing, sharding and funnel reporting.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{hash_strs, rng_for};
use crate::par::Executor;
use crate::shards::{read_shard, write_shard, ShardEntry, ShardError};
use crate::synth::TrainingSample;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid mix: {0}")]
    InvalidMix(String),
    #[error("{pool} pool has {available} records, {requested} requested")]
    PoolUnderflow {
        pool: Source,
        available: usize,
        requested: usize,
    },
    #[error("shard size must be at least 1")]
    ShardSize,
    #[error("funnel count increases at {stage}: {previous} -> {count}")]
    NonMonotone {
        stage: String,
        previous: u64,
        count: u64,
    },
    #[error(transparent)]
    Shard(#[from] ShardError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Dynamics,
    General,
    Grounding,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Dynamics => "dynamics",
            Source::General => "general",
            Source::Grounding => "grounding",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub ratio_dynamics: f64,
    pub ratio_general: f64,
    pub ratio_grounding: f64,
    pub total: usize,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            ratio_dynamics: 0.7,
            ratio_general: 0.2,
            ratio_grounding: 0.1,
            total: 1000,
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn ratios(&self) -> [f64; 3] {
        [self.ratio_dynamics, self.ratio_general, self.ratio_grounding]
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let r = self.ratios();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CorpusError::InvalidMix(format!("ratios {r:?} must be non-negative")));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidMix(format!("ratios {r:?} do not sum to 1")));
        }
        Ok(())
    }

    /// Per-source counts by largest-remainder apportionment of `total`.
    pub fn counts(&self) -> [usize; 3] {
        apportion(self.total, &self.ratios())
    }
}

/// Largest-remainder apportionment; ties go to the earlier share.
pub fn apportion<const N: usize>(total: usize, ratios: &[f64; N]) -> [usize; N] {
    let sum: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| r / sum * total as f64).collect();
    let mut out = [0usize; N];
    for (o, q) in out.iter_mut().zip(&quotas) {
        *o = q.floor() as usize;
    }
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// A record from a non-dynamics pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub record_id: String,
    pub prompt: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusRecord {
    Dynamics(TrainingSample),
    General(PoolRecord),
    Grounding(PoolRecord),
}

impl CorpusRecord {
    pub fn source(&self) -> Source {
        match self {
            CorpusRecord::Dynamics(_) => Source::Dynamics,
            CorpusRecord::General(_) => Source::General,
            CorpusRecord::Grounding(_) => Source::Grounding,
        }
    }
}

/// Identity of the placeholder pools shipped with the crate.
pub const PLACEHOLDER_POOL_VERSION: &str = "placeholder-v1";

/// Small synthetic stand-in for an external dataset.
pub fn placeholder_pool(source: Source, n: usize, seed: u64) -> Vec<PoolRecord> {
    const THINGS: [&str; 10] = [
        "a red bicycle", "two cups of tea", "a mountain lake", "a city street at night", "a bowl of fruit",
        "an open laptop", "a sleeping cat", "a crowded market", "a wooden bridge", "a snowy field",
    ];
    const ELEMENTS: [&str; 10] = [
        "Search", "Settings", "Back", "Cart", "Profile", "Share", "Menu", "Send", "Save", "Close",
    ];
    let mut rng = rng_for(seed, hash_strs(&["pool", &source.to_string()]));
    (0..n)
        .map(|i| {
            let (prompt, target) = match source {
                Source::Grounding => {
                    let e = ELEMENTS[rng.gen_range(0..ELEMENTS.len())];
                    (
                        format!("<image> Where is the \"{e}\" button? Answer with an action."),
                        format!("click {} {}", rng.gen_range(0..=1000), rng.gen_range(0..=1000)),
                    )
                }
                _ => {
                    let t = THINGS[rng.gen_range(0..THINGS.len())];
                    ("<image> Describe the image in one sentence.".to_string(), format!("The image shows {t}."))
                }
            };
            PoolRecord {
                record_id: format!("{source}-{i:07}"),
                prompt,
                target,
            }
        })
        .collect()
}

fn pick<T: Clone>(pool: &[T], count: usize, which: Source, seed: u64) -> Result<Vec<T>, CorpusError> {
    if pool.len() < count {
        return Err(CorpusError::PoolUnderflow {
            pool: which,
            available: pool.len(),
            requested: count,
        });
    }
    let mut rng = rng_for(seed, hash_strs(&["mix-select", &which.to_string()]));
    let mut idx = sample(&mut rng, pool.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// Samples each pool without replacement at the apportioned counts, then
/// shuffles the union.
pub fn mix(
    dynamics: &[TrainingSample],
    general: &[PoolRecord],
    grounding: &[PoolRecord],
    spec: &MixSpec,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    spec.validate()?;
    let [nd, ng, nu] = spec.counts();
    let mut out: Vec<CorpusRecord> = pick(dynamics, nd, Source::Dynamics, spec.seed)?
        .into_iter()
        .map(CorpusRecord::Dynamics)
        .collect();
    out.extend(pick(general, ng, Source::General, spec.seed)?.into_iter().map(CorpusRecord::General));
    out.extend(pick(grounding, nu, Source::Grounding, spec.seed)?.into_iter().map(CorpusRecord::Grounding));
    out.shuffle(&mut rng_for(spec.seed, hash_strs(&["mix-shuffle"])));
    Ok(out)
}

pub fn source_counts(records: &[CorpusRecord]) -> BTreeMap<Source, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.source()).or_insert(0) += 1;
    }
    m
}

pub fn shard_file_name(index: usize) -> String {
    format!("part-{index:05}.jsonl")
}

/// Writes `records` in chunks of `shard_size`; entries come back in order.
pub fn write_shards<T: Serialize + Sync>(
    dir: &Path,
    records: &[T],
    shard_size: usize,
    exec: &Executor,
) -> Result<Vec<ShardEntry>, CorpusError> {
    if shard_size == 0 {
        return Err(CorpusError::ShardSize);
    }
    std::fs::create_dir_all(dir).map_err(|source| ShardError::Io {
        file: dir.display().to_string(),
        source,
    })?;
    let chunks: Vec<&[T]> = records.chunks(shard_size).collect();
    let indexed: Vec<usize> = (0..chunks.len()).collect();
    Ok(exec.try_map(&indexed, |&i| write_shard(dir, &shard_file_name(i), chunks[i]))?)
}

pub fn read_shards<T: serde::de::DeserializeOwned + Send>(
    dir: &Path,
    entries: &[ShardEntry],
    exec: &Executor,
) -> Result<Vec<T>, CorpusError> {
    let parts = exec.try_map(entries, |e| read_shard::<T>(dir, e))?;
    Ok(parts.into_iter().flatten().collect())
}

/// Stage counts of the filtering funnel.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub raw: u64,
    pub post_structural: u64,
    pub post_visual: u64,
    pub post_semantic: u64,
    pub samples_emitted: u64,
    /// stage → reason → dropped count
    pub rejections: BTreeMap<String, BTreeMap<String, u64>>,
}

impl FunnelReport {
    pub fn new(
        counts: [u64; 4],
        samples_emitted: u64,
        rejections: BTreeMap<String, BTreeMap<String, u64>>,
    ) -> Result<Self, CorpusError> {
        let r = Self {
            raw: counts[0],
            post_structural: counts[1],
            post_visual: counts[2],
            post_semantic: counts[3],
            samples_emitted,
            rejections,
        };
        r.check()?;
        Ok(r)
    }

    pub fn stages(&self) -> [(&'static str, u64); 4] {
        [
            ("raw", self.raw),
            ("post_structural", self.post_structural),
            ("post_visual", self.post_visual),
            ("post_semantic", self.post_semantic),
        ]
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        for w in self.stages().windows(2) {
            if w[1].1 > w[0].1 {
                return Err(CorpusError::NonMonotone {
                    stage: w[1].0.to_string(),
                    previous: w[0].1,
                    count: w[1].1,
                });
            }
        }
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<18}{:>12}{:>10}\n", "stage", "count", "kept");
        let mut prev = None;
        for (name, n) in self.stages() {
            let kept = match prev {
                Some(p) if p > 0 => format!("{:.1}%", 100.0 * n as f64 / p as f64),
                _ => "-".to_string(),
            };
            s.push_str(&format!("{name:<18}{n:>12}{kept:>10}\n"));
            prev = Some(n);
        }
        s.push_str(&format!("{:<18}{:>12}\n", "samples_emitted", self.samples_emitted));
        for (stage, reasons) in &self.rejections {
            for (reason, n) in reasons {
                s.push_str(&format!("  dropped at {stage:<17}{reason:<22}{n:>8}\n"));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportionment_examples() {
        let spec = |total| MixSpec { total, ..Default::default() };
        assert_eq!(spec(1000).counts(), [700, 200, 100]);
        assert_eq!(spec(10).counts(), [7, 2, 1]);
        assert_eq!(apportion(3, &[1.0 / 3.0; 3]), [1, 1, 1]);
        assert_eq!(apportion(2, &[1.0 / 3.0; 3]), [1, 1, 0]);
        assert_eq!(apportion(0, &[0.7, 0.2, 0.1]), [0, 0, 0]);
    }

    #[test]
    fn invalid_ratios() {
        let bad = MixSpec { ratio_dynamics: 0.8, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn underflow() {
        let g = placeholder_pool(Source::General, 5, 1);
        let u = placeholder_pool(Source::Grounding, 5, 1);
        let spec = MixSpec { total: 100, ..Default::default() };
        assert!(matches!(
            mix(&[], &g, &u, &spec),
            Err(CorpusError::PoolUnderflow { pool: Source::Dynamics, .. })
        ));
    }

    #[test]
    fn funnel_checks() {
        assert!(FunnelReport::new([20000, 9000, 5000, 4200], 29400, BTreeMap::new()).is_ok());
        assert!(FunnelReport::new([10, 11, 5, 4], 0, BTreeMap::new()).is_err());
        let z = FunnelReport::new([0; 4], 0, BTreeMap::new()).unwrap();
        assert_eq!(z, FunnelReport::default());
    }

    #[test]
    fn shard_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let recs = placeholder_pool(Source::General, 2500, 3);
        let ex = Executor::new(3);
        let entries = write_shards(dir.path(), &recs, 1000, &ex).unwrap();
        assert_eq!(entries.iter().map(|e| e.records).collect::<Vec<_>>(), vec![1000, 1000, 500]);
        let back: Vec<PoolRecord> = read_shards(dir.path(), &entries, &ex).unwrap();
        assert_eq!(back, recs);
        let one = write_shards(dir.path(), &recs[..1], 1000, &ex).unwrap();
        assert_eq!(one.len(), 1);
        assert!(write_shards(dir.path(), &recs, 0, &ex).is_err());
    }
}
