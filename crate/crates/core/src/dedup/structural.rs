//! Structural near-duplicate removal over accessibility-tree tokens.
//!
//! A transition becomes the set of hashed `(role, attribute)` tokens of the
//! nodes of its pre and post trees, where the attributes are tag, xpath and
//! the event set. Node text is excluded, so screens instantiating the same
//! template collapse. Sets are compressed to MinHash signatures and indexed
//! with LSH banding; colliding pairs whose estimated Jaccard similarity
//! reaches the threshold are merged into clusters.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{AxNode, GraphSet};
use crate::explore::Transition;
use crate::hashing::{hash_strs, hash_u64s, rng_for};
use crate::par::Executor;
use crate::unionfind::UnionFind;

use super::{select_representatives, DedupError, DedupOutcome};

/// 2^61 − 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Sorted, duplicate-free token hashes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSet(Vec<u64>);

impl TokenSet {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Exact Jaccard similarity by sorted merge; two empty sets give 1.
    pub fn jaccard(&self, other: &TokenSet) -> f64 {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = a.len() + b.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl FromIterator<u64> for TokenSet {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut v: Vec<u64> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }
}

fn node_tokens<'a>(role: &'a str, nodes: &'a [AxNode]) -> impl Iterator<Item = u64> + 'a {
    nodes.iter().flat_map(move |n| {
        [
            hash_strs(&[role, "tag", &n.tag]),
            hash_strs(&[role, "xpath", &n.xpath]),
            hash_strs(&[role, "events", &n.events.canonical()]),
        ]
    })
}

pub fn tokenize_transition(t: &Transition, graphs: &GraphSet) -> Result<TokenSet, DedupError> {
    let (pre, post) = t.resolve(graphs)?;
    Ok(node_tokens("pre", pre.tree())
        .chain(node_tokens("post", post.tree()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinHashSignature {
    pub perm_seed: u64,
    pub values: Vec<u64>,
}

impl MinHashSignature {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    // x < 2^122 here, so two folds suffice.
    let p = u128::from(MERSENNE_61);
    let folded = (x & p) + (x >> 61);
    let folded = (folded & p) + (folded >> 61);
    let r = folded as u64;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

/// The `k` permutations `x ↦ (a·x + b) mod p` drawn from `perm_seed`.
#[derive(Clone, Debug)]
pub struct MinHasher {
    perm_seed: u64,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(k: usize, perm_seed: u64) -> Result<Self, DedupError> {
        if k == 0 {
            return Err(DedupError::Config("minhash k must be at least 1".into()));
        }
        let mut rng = rng_for(perm_seed, 0x6d68);
        let coeffs = (0..k)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        Ok(Self { perm_seed, coeffs })
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn sign(&self, tokens: &TokenSet) -> Result<MinHashSignature, DedupError> {
        if tokens.is_empty() {
            return Err(DedupError::EmptyTokenSet);
        }
        let mut values = vec![u64::MAX; self.coeffs.len()];
        for &tok in tokens.as_slice() {
            let x = u128::from(mod_mersenne(u128::from(tok)));
            for (v, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let h = mod_mersenne(u128::from(a) * x + u128::from(b));
                if h < *v {
                    *v = h;
                }
            }
        }
        Ok(MinHashSignature {
            perm_seed: self.perm_seed,
            values,
        })
    }
}

pub fn minhash(tokens: &TokenSet, k: usize, perm_seed: u64) -> Result<MinHashSignature, DedupError> {
    MinHasher::new(k, perm_seed)?.sign(tokens)
}

/// Fraction of agreeing signature positions.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.k() != b.k() || a.perm_seed != b.perm_seed || a.k() == 0 {
        return Err(DedupError::SignatureMismatch(a.k(), b.k(), a.perm_seed, b.perm_seed));
    }
    let agree = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.k() as f64)
}

/// Banded LSH over signatures: `bands` tables keyed by the digest of `rows`
/// consecutive signature values.
#[derive(Clone, Debug)]
pub struct LshIndex {
    bands: usize,
    rows: usize,
    tables: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshIndex {
    pub fn build(signatures: &[MinHashSignature], bands: usize, rows: usize, exec: &Executor) -> Result<Self, DedupError> {
        if bands == 0 || rows == 0 {
            return Err(DedupError::Config("bands and rows must be positive".into()));
        }
        if let Some(s) = signatures.iter().find(|s| s.k() != bands * rows) {
            return Err(DedupError::Config(format!(
                "signature length {} != bands {bands} x rows {rows}",
                s.k()
            )));
        }
        let tables = exec.map_range(bands, |band| {
            let mut table: HashMap<u64, Vec<u32>> = HashMap::new();
            for (i, s) in signatures.iter().enumerate() {
                let key = hash_u64s(&s.values[band * rows..(band + 1) * rows]);
                table.entry(key).or_default().push(i as u32);
            }
            table
        });
        Ok(Self { bands, rows, tables })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Pairs `(i, j)`, `i < j`, sharing at least one bucket; sorted, unique.
    pub fn candidate_pairs(&self) -> Vec<(u32, u32)> {
        let mut pairs = Vec::new();
        for table in &self.tables {
            for bucket in table.values() {
                for (x, &i) in bucket.iter().enumerate() {
                    for &j in &bucket[x + 1..] {
                        pairs.push((i.min(j), i.max(j)));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralParams {
    pub k: usize,
    pub b: usize,
    pub r: usize,
    pub jaccard_threshold: f64,
    pub perm_seed: u64,
}

impl Default for StructuralParams {
    fn default() -> Self {
        Self {
            k: 128,
            b: 32,
            r: 4,
            jaccard_threshold: 0.85,
            perm_seed: 0x5eed_0001,
        }
    }
}

impl StructuralParams {
    pub fn validate(&self) -> Result<(), DedupError> {
        if self.k == 0 || self.b * self.r != self.k {
            return Err(DedupError::Config(format!(
                "b ({}) x r ({}) must equal k ({})",
                self.b, self.r, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return Err(DedupError::Config("jaccard_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Signatures for every transition, in input order.
pub fn sign_transitions(
    transitions: &[Transition],
    graphs: &GraphSet,
    params: &StructuralParams,
    exec: &Executor,
) -> Result<Vec<MinHashSignature>, DedupError> {
    params.validate()?;
    let hasher = MinHasher::new(params.k, params.perm_seed)?;
    exec.try_map(transitions, |t| hasher.sign(&tokenize_transition(t, graphs)?))
}

pub fn dedup_structural(
    transitions: &[Transition],
    graphs: &GraphSet,
    params: &StructuralParams,
    exec: &Executor,
) -> Result<DedupOutcome, DedupError> {
    let signatures = sign_transitions(transitions, graphs, params, exec)?;
    cluster_signatures(transitions, &signatures, params, exec)
}

/// Clusters already-signed transitions.
///
/// Byte-identical signatures agree on every band and estimate 1.0, so they
/// are merged up front and only one copy per distinct signature enters the
/// index. The resulting partition is the same as indexing every copy.
pub fn cluster_signatures(
    transitions: &[Transition],
    signatures: &[MinHashSignature],
    params: &StructuralParams,
    exec: &Executor,
) -> Result<DedupOutcome, DedupError> {
    params.validate()?;
    let n = transitions.len();
    let mut uf = UnionFind::new(n);

    let mut first_of: BTreeMap<&[u64], usize> = BTreeMap::new();
    let mut distinct: Vec<usize> = Vec::new();
    for (i, s) in signatures.iter().enumerate() {
        match first_of.get(s.values.as_slice()) {
            Some(&f) => {
                uf.union(f, i);
            }
            None => {
                first_of.insert(&s.values, i);
                distinct.push(i);
            }
        }
    }

    let distinct_sigs: Vec<MinHashSignature> = distinct.iter().map(|&i| signatures[i].clone()).collect();
    let index = LshIndex::build(&distinct_sigs, params.b, params.r, exec)?;
    let candidates = index.candidate_pairs();
    let verified = exec.map(&candidates, |&(i, j)| {
        estimate_jaccard(&distinct_sigs[i as usize], &distinct_sigs[j as usize])
            .map(|e| e >= params.jaccard_threshold)
    });
    for (&(i, j), ok) in candidates.iter().zip(verified) {
        if ok? {
            uf.union(distinct[i as usize], distinct[j as usize]);
        }
    }

    let items: Vec<&Transition> = transitions.iter().collect();
    Ok(select_representatives(&items, &mut uf))
}
