//! Visual near-duplicate removal over composite perceptual fingerprints.
//!
//! A transition's fingerprint is `pHash(pre) ∥ dHash(pre) ∥ pHash(post) ∥
//! dHash(post)` (256 bits). Transitions whose pre and post halves are within
//! `theta_static` bits are visually static and dropped. The rest are bucketed
//! by seeded bit-sampling projections; same-bucket pairs within
//! `theta_cluster` bits are merged with union-find.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::env::{GraphSet, StateId};
use crate::explore::Transition;
use crate::hashing::rng_for;
use crate::par::Executor;
use crate::raster::Raster;
use crate::unionfind::UnionFind;

use super::imagehash::{dhash, hamming, phash};
use super::{select_representatives, DedupError, DedupOutcome};

pub const FINGERPRINT_BITS: usize = 256;

/// `[pHash(pre), dHash(pre), pHash(post), dHash(post)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VisualFingerprint(pub [u64; 4]);

impl VisualFingerprint {
    pub fn from_halves(pre: (u64, u64), post: (u64, u64)) -> Self {
        Self([pre.0, pre.1, post.0, post.1])
    }

    pub fn of_rasters(pre: &Raster, post: &Raster) -> Option<Self> {
        Some(Self::from_halves(image_pair(pre)?, image_pair(post)?))
    }

    pub fn distance(&self, other: &Self) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| hamming(*a, *b)).sum()
    }

    /// Hamming distance between the pre half and the post half.
    pub fn static_distance(&self) -> u32 {
        hamming(self.0[0], self.0[2]) + hamming(self.0[1], self.0[3])
    }

    /// Bit `i` counted from the most significant bit of the first word.
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut w = [0u64; 4];
        for (i, slot) in w.iter_mut().enumerate() {
            *slot = u64::from_str_radix(&s[i * 16..(i + 1) * 16], 16).ok()?;
        }
        Some(Self(w))
    }
}

impl fmt::Display for VisualFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// `(pHash, dHash)` of one raster.
pub fn image_pair(r: &Raster) -> Option<(u64, u64)> {
    Some((phash(r)?, dhash(r)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualParams {
    pub theta_static: u32,
    pub theta_cluster: u32,
    pub n_bit_samples: usize,
    pub sample_width: usize,
    pub sample_seed: u64,
}

impl Default for VisualParams {
    fn default() -> Self {
        Self {
            theta_static: 4,
            theta_cluster: 10,
            n_bit_samples: 16,
            sample_width: 16,
            sample_seed: 0x5eed_0002,
        }
    }
}

impl VisualParams {
    pub fn validate(&self) -> Result<(), DedupError> {
        if self.n_bit_samples == 0 {
            return Err(DedupError::Config("n_bit_samples must be at least 1".into()));
        }
        if !(1..=64).contains(&self.sample_width) {
            return Err(DedupError::Config("sample_width must lie in [1, 64]".into()));
        }
        Ok(())
    }
}

/// Seeded bit-sampling projections of 256-bit fingerprints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitSampler {
    projections: Vec<Vec<u8>>,
}

impl BitSampler {
    pub fn new(n: usize, width: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 0x6269);
        let projections = (0..n)
            .map(|_| {
                let mut p: Vec<u8> = sample(&mut rng, FINGERPRINT_BITS, width)
                    .into_iter()
                    .map(|i| i as u8)
                    .collect();
                p.sort_unstable();
                p
            })
            .collect();
        Self { projections }
    }

    pub fn from_params(p: &VisualParams) -> Self {
        Self::new(p.n_bit_samples, p.sample_width, p.sample_seed)
    }

    pub fn projections(&self) -> &[Vec<u8>] {
        &self.projections
    }

    pub fn key(&self, projection: usize, fp: &VisualFingerprint) -> u64 {
        self.projections[projection]
            .iter()
            .fold(0u64, |k, &bit| (k << 1) | u64::from(fp.bit(bit as usize)))
    }

    /// Whether `a` and `b` share a bucket under some projection.
    pub fn collide(&self, a: &VisualFingerprint, b: &VisualFingerprint) -> bool {
        (0..self.projections.len()).any(|p| self.key(p, a) == self.key(p, b))
    }
}

/// Clusters fingerprints: bucket by every projection, then union each
/// same-bucket pair within `theta_cluster`. Returns one component label per
/// input (smallest member index). Identical fingerprints are merged before
/// bucketing since they share every bucket at distance 0.
pub fn cluster_fingerprints(
    fps: &[VisualFingerprint],
    params: &VisualParams,
    exec: &Executor,
) -> Result<UnionFind, DedupError> {
    params.validate()?;
    let sampler = BitSampler::from_params(params);
    let mut uf = UnionFind::new(fps.len());

    let mut first_of: BTreeMap<VisualFingerprint, usize> = BTreeMap::new();
    let mut distinct: Vec<usize> = Vec::new();
    for (i, fp) in fps.iter().enumerate() {
        match first_of.get(fp) {
            Some(&f) => {
                uf.union(f, i);
            }
            None => {
                first_of.insert(*fp, i);
                distinct.push(i);
            }
        }
    }

    let per_projection: Vec<Vec<(u32, u32)>> = exec.map_range(params.n_bit_samples, |p| {
        let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
        for (d, &i) in distinct.iter().enumerate() {
            buckets.entry(sampler.key(p, &fps[i])).or_default().push(d as u32);
        }
        let mut pairs = Vec::new();
        for bucket in buckets.values() {
            for (x, &a) in bucket.iter().enumerate() {
                for &b in &bucket[x + 1..] {
                    if fps[distinct[a as usize]].distance(&fps[distinct[b as usize]]) <= params.theta_cluster {
                        pairs.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
        pairs
    });
    let mut pairs: Vec<(u32, u32)> = per_projection.into_iter().flatten().collect();
    pairs.sort_unstable();
    pairs.dedup();
    for (a, b) in pairs {
        uf.union(distinct[a as usize], distinct[b as usize]);
    }
    Ok(uf)
}

/// Per-state `(pHash, dHash)` for every state referenced by `transitions`.
pub fn state_hashes(
    transitions: &[Transition],
    graphs: &GraphSet,
    exec: &Executor,
) -> Result<BTreeMap<(String, StateId), (u64, u64)>, DedupError> {
    let keys: Vec<(String, StateId)> = transitions
        .iter()
        .flat_map(|t| [(t.app_id.clone(), t.pre), (t.app_id.clone(), t.post)])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let hashes = exec.try_map(&keys, |(app, s)| {
        let state = graphs.state(app, *s)?;
        image_pair(&state.raster).ok_or_else(|| DedupError::DegenerateRaster(format!("{app}/{s}")))
    })?;
    Ok(keys.into_iter().zip(hashes).collect())
}

pub fn fingerprint(t: &Transition, graphs: &GraphSet) -> Result<VisualFingerprint, DedupError> {
    let (pre, post) = t.resolve(graphs)?;
    VisualFingerprint::of_rasters(&pre.raster, &post.raster)
        .ok_or_else(|| DedupError::DegenerateRaster(t.transition_id.clone()))
}

pub fn is_static(t: &Transition, graphs: &GraphSet, theta_static: u32) -> Result<bool, DedupError> {
    Ok(fingerprint(t, graphs)?.static_distance() <= theta_static)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisualOutcome {
    pub dedup: DedupOutcome,
    /// Ids of transitions dropped as visually static, in corpus order.
    pub static_dropped: Vec<String>,
    /// `(transition_id, fingerprint)` for every input, in corpus order.
    pub fingerprints: Vec<(String, VisualFingerprint)>,
}

pub fn dedup_visual(
    transitions: &[Transition],
    graphs: &GraphSet,
    params: &VisualParams,
    exec: &Executor,
) -> Result<VisualOutcome, DedupError> {
    params.validate()?;
    let hashes = state_hashes(transitions, graphs, exec)?;
    let fps: Vec<VisualFingerprint> = transitions
        .iter()
        .map(|t| {
            VisualFingerprint::from_halves(
                hashes[&(t.app_id.clone(), t.pre)],
                hashes[&(t.app_id.clone(), t.post)],
            )
        })
        .collect();

    let mut kept: Vec<&Transition> = Vec::new();
    let mut kept_fps: Vec<VisualFingerprint> = Vec::new();
    let mut static_dropped = Vec::new();
    for (t, fp) in transitions.iter().zip(&fps) {
        if fp.static_distance() <= params.theta_static {
            static_dropped.push(t.transition_id.clone());
        } else {
            kept.push(t);
            kept_fps.push(*fp);
        }
    }
    let mut uf = cluster_fingerprints(&kept_fps, params, exec)?;
    let dedup = select_representatives(&kept, &mut uf);
    Ok(VisualOutcome {
        dedup,
        static_dropped,
        fingerprints: transitions
            .iter()
            .map(|t| t.transition_id.clone())
            .zip(fps)
            .collect(),
    })
}
