//! Keypoint transfer by nearest-neighbour search in embedding space.
//!
//! A database holds per-model keypoint embeddings; a dense embedding covers
//! the surface of a predicted model. Each semantic id lands on the dense
//! sample whose embedding is closest to that id's target vector.

mod kdtree;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use kdtree::{brute_force_nearest, KdTree};

use crate::error::{Error, Result};
use crate::json::{read_json, write_json, write_json_compact};
use crate::geometry::Vec3;
use crate::isosurface::SurfaceSample;

/// Normalizes `v` in place. Vectors already unit length to within rounding
/// are left untouched so that saving and reloading is lossless.
fn normalize(v: &mut [f64]) -> bool {
    let sq: f64 = v.iter().map(|x| x * x).sum();
    if !(sq > 0.0 && sq.is_finite()) {
        return false;
    }
    if (sq - 1.0).abs() > 4.0 * f64::EPSILON {
        let norm = sq.sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEntry {
    pub position: Vec3,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelKeypoints {
    pub model_id: String,
    pub keypoints: Vec<(u32, EmbeddingEntry)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDatabase {
    pub dimension: usize,
    pub models: Vec<ModelKeypoints>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbFile {
    dimension: usize,
    models: Vec<DbModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbModel {
    model_id: String,
    keypoints: Vec<DbKeypoint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbKeypoint {
    semantic_id: u32,
    position: [f64; 3],
    embedding: Vec<f64>,
}

impl EmbeddingDatabase {
    /// Checks every invariant and normalizes embeddings. Records are counted
    /// across models in file order for error messages.
    pub fn new(dimension: usize, mut models: Vec<ModelKeypoints>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let mut seen_models = HashSet::new();
        let mut record = 0;
        for model in &mut models {
            if !seen_models.insert(model.model_id.clone()) {
                return Err(Error::Record { index: record, message: format!("model {:?} listed twice", model.model_id) });
            }
            let mut seen_ids = HashSet::new();
            for (id, entry) in &mut model.keypoints {
                let fail = |message: String| Err(Error::Record { index: record, message });
                if entry.embedding.len() != dimension {
                    return fail(format!("embedding has {} values, database dimension is {dimension}", entry.embedding.len()));
                }
                if !seen_ids.insert(*id) {
                    return fail(format!("semantic id {id} repeated in model {:?}", model.model_id));
                }
                if entry.position.iter().any(|c| !c.is_finite()) {
                    return fail("non-finite position".into());
                }
                if !normalize(&mut entry.embedding) {
                    return fail("embedding has zero or non-finite norm".into());
                }
                record += 1;
            }
        }
        Ok(EmbeddingDatabase { dimension, models })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DbFile = serde_json::from_str(text).map_err(|e| Error::parse("embedding database", e))?;
        Self::from_file(file)
    }

    fn from_file(file: DbFile) -> Result<Self> {
        let models = file
            .models
            .into_iter()
            .map(|m| ModelKeypoints {
                model_id: m.model_id,
                keypoints: m
                    .keypoints
                    .into_iter()
                    .map(|k| (k.semantic_id, EmbeddingEntry { position: Vec3::from(k.position), embedding: k.embedding }))
                    .collect(),
            })
            .collect();
        Self::new(file.dimension, models)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("database serializes")
    }

    fn to_file(&self) -> DbFile {
        DbFile {
            dimension: self.dimension,
            models: self
                .models
                .iter()
                .map(|m| DbModel {
                    model_id: m.model_id.clone(),
                    keypoints: m
                        .keypoints
                        .iter()
                        .map(|(id, e)| DbKeypoint { semantic_id: *id, position: e.position.into(), embedding: e.embedding.clone() })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DbFile = read_json(path)?;
        Self::from_file(file).map_err(|e| match e {
            Error::Record { index, message } => Error::Record { index, message: format!("{}: {message}", path.display()) },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_file())
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelKeypoints> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    pub fn is_empty(&self) -> bool {
        self.models.iter().all(|m| m.keypoints.is_empty())
    }

    /// Database restricted to the listed models, in their original order.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> Self {
        EmbeddingDatabase {
            dimension: self.dimension,
            models: self.models.iter().filter(|m| keep(&m.model_id)).cloned().collect(),
        }
    }
}

pub fn load_embedding_db(path: &Path) -> Result<EmbeddingDatabase> {
    EmbeddingDatabase::load(path)
}

/// Per-id targets from [`aggregate_semantic_embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    /// `(semantic_id, unit vector)`, ascending by id.
    pub targets: Vec<(u32, Vec<f64>)>,
    /// Ids whose embeddings cancel out and therefore have no direction.
    pub excluded: Vec<u32>,
}

/// Below this norm a mean embedding is treated as zero.
const DEGENERATE_MEAN: f64 = 1e-9;

/// Normalized mean embedding per semantic id across all models.
pub fn aggregate_semantic_embeddings(db: &EmbeddingDatabase) -> Aggregation {
    let mut sums: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for model in &db.models {
        for (id, entry) in &model.keypoints {
            let acc = sums.entry(*id).or_insert_with(|| vec![0.0; db.dimension]);
            acc.iter_mut().zip(&entry.embedding).for_each(|(a, e)| *a += e);
        }
    }
    let mut agg = Aggregation { targets: Vec::new(), excluded: Vec::new() };
    for (id, mut v) in sums {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < DEGENERATE_MEAN {
            log::warn!("semantic id {id}: embeddings cancel out; id excluded from transfer");
            agg.excluded.push(id);
            continue;
        }
        normalize(&mut v);
        agg.targets.push((id, v));
    }
    agg
}

/// Surface samples with one embedding each.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEmbedding {
    pub dimension: usize,
    pub samples: Vec<SurfaceSample>,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseFile {
    dimension: usize,
    samples: Vec<DenseRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseRecord {
    position: [f64; 3],
    embedding: Vec<f64>,
    face_index: usize,
    barycentric: [f64; 3],
}

impl DenseEmbedding {
    /// Validates lengths and normalizes the embeddings.
    pub fn new(dimension: usize, samples: Vec<SurfaceSample>, mut embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if samples.len() != embeddings.len() {
            return Err(Error::Dimension(format!("{} samples but {} embeddings", samples.len(), embeddings.len())));
        }
        for (i, e) in embeddings.iter_mut().enumerate() {
            if e.len() != dimension {
                return Err(Error::Record { index: i, message: format!("embedding has {} values, expected {dimension}", e.len()) });
            }
            if !normalize(e) {
                return Err(Error::Record { index: i, message: "embedding has zero or non-finite norm".into() });
            }
            if samples[i].position.iter().any(|c| !c.is_finite()) {
                return Err(Error::Record { index: i, message: "non-finite position".into() });
            }
        }
        Ok(DenseEmbedding { dimension, samples, embeddings })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DenseFile = serde_json::from_str(text).map_err(|e| Error::parse("dense embedding", e))?;
        Self::from_file(file)
    }

    fn from_file(file: DenseFile) -> Result<Self> {
        let (samples, embeddings) = file
            .samples
            .into_iter()
            .map(|r| {
                let s = SurfaceSample { position: Vec3::from(r.position), face_index: r.face_index, barycentric: r.barycentric };
                (s, r.embedding)
            })
            .unzip();
        Self::new(file.dimension, samples, embeddings)
    }

    fn to_file(&self) -> DenseFile {
        DenseFile {
            dimension: self.dimension,
            samples: self
                .samples
                .iter()
                .zip(&self.embeddings)
                .map(|(s, e)| DenseRecord {
                    position: s.position.into(),
                    embedding: e.clone(),
                    face_index: s.face_index,
                    barycentric: s.barycentric,
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("dense embedding serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }

    /// Written on one line; these files are mostly numbers.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_compact(path, &self.to_file())
    }

    fn flat(&self) -> Vec<f64> {
        self.embeddings.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub semantic_id: u32,
    pub position3d: [f64; 3],
    pub pixel: Option<[f64; 2]>,
    pub visible: Option<bool>,
}

impl Keypoint {
    pub fn new(semantic_id: u32, position: Vec3) -> Self {
        Keypoint { semantic_id, position3d: position.into(), pixel: None, visible: None }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position3d)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointSet {
    pub keypoints: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(keypoints: Vec<Keypoint>) -> Result<Self> {
        let set = KeypointSet { keypoints };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, k) in self.keypoints.iter().enumerate() {
            if !seen.insert(k.semantic_id) {
                return Err(Error::Record { index: i, message: format!("semantic id {} repeated", k.semantic_id) });
            }
            if k.position3d.iter().chain(k.pixel.iter().flatten()).any(|c| !c.is_finite()) {
                return Err(Error::Record { index: i, message: "non-finite coordinate".into() });
            }
        }
        Ok(())
    }

    pub fn get(&self, semantic_id: u32) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.semantic_id == semantic_id)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let set: KeypointSet = serde_json::from_str(text).map_err(|e| Error::parse("keypoint set", e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("keypoint set serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: KeypointSet = read_json(path)?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Keypoints at `positions` keyed by the given semantic ids.
    pub fn from_model(model: &ModelKeypoints) -> Self {
        KeypointSet { keypoints: model.keypoints.iter().map(|(id, e)| Keypoint::new(*id, e.position)).collect() }
    }
}

/// How database embeddings become search targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NnMode {
    /// One normalized mean vector per semantic id.
    #[default]
    Mean,
    /// Every model's vector is searched; the closest match over all models wins.
    PerModel,
}

/// Exact nearest-neighbour lookups over a dense embedding.
pub struct DenseIndex<'a> {
    dense: &'a DenseEmbedding,
    tree: Option<KdTree>,
    flat: Vec<f64>,
}

impl<'a> DenseIndex<'a> {
    /// `brute_force` skips building the tree and scans every sample per query.
    pub fn new(dense: &'a DenseEmbedding, brute_force: bool) -> Result<Self> {
        if dense.is_empty() {
            return Err(Error::invalid("dense embedding set is empty"));
        }
        let flat = dense.flat();
        let tree = (!brute_force).then(|| KdTree::build(flat.clone(), dense.dimension));
        Ok(DenseIndex { dense, tree, flat })
    }

    /// Sample index and squared distance of the closest embedding.
    pub fn nearest(&self, query: &[f64]) -> Result<(usize, f64)> {
        if query.len() != self.dense.dimension {
            return Err(Error::Dimension(format!(
                "query has {} values, dense embedding dimension is {}",
                query.len(),
                self.dense.dimension
            )));
        }
        let hit = match &self.tree {
            Some(tree) => tree.nearest(query),
            None => brute_force_nearest(&self.flat, self.dense.dimension, query),
        };
        Ok(hit.expect("index is non-empty"))
    }
}

/// Places each target id on the dense sample with the nearest embedding.
pub fn transfer_keypoints(dense: &DenseEmbedding, targets: &[(u32, Vec<f64>)]) -> Result<KeypointSet> {
    transfer_with_index(&DenseIndex::new(dense, false)?, targets)
}

pub fn transfer_with_index(index: &DenseIndex<'_>, targets: &[(u32, Vec<f64>)]) -> Result<KeypointSet> {
    let mut keypoints = Vec::with_capacity(targets.len());
    for (id, target) in targets {
        let (i, _) = index.nearest(target)?;
        keypoints.push(Keypoint::new(*id, index.dense.samples[i].position));
    }
    KeypointSet::new(keypoints)
}

/// Searches with every model's embedding for each id and keeps the closest
/// match; equal distances go to the lower sample index. Ids ascending.
pub fn transfer_keypoints_per_model(index: &DenseIndex<'_>, db: &EmbeddingDatabase) -> Result<KeypointSet> {
    let mut best: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for model in &db.models {
        for (id, entry) in &model.keypoints {
            let (i, d) = index.nearest(&entry.embedding)?;
            let slot = best.entry(*id).or_insert((d, i));
            if d < slot.0 || (d == slot.0 && i < slot.1) {
                *slot = (d, i);
            }
        }
    }
    KeypointSet::new(best.into_iter().map(|(id, (_, i))| Keypoint::new(id, index.dense.samples[i].position)).collect())
}

/// Runs transfer against a whole database in the chosen mode. Returns the
/// keypoints and any ids dropped by aggregation.
pub fn transfer_from_database(
    dense: &DenseEmbedding,
    db: &EmbeddingDatabase,
    mode: NnMode,
    brute_force: bool,
) -> Result<(KeypointSet, Vec<u32>)> {
    if dense.dimension != db.dimension {
        return Err(Error::Dimension(format!(
            "dense embedding dimension {} differs from database dimension {}",
            dense.dimension, db.dimension
        )));
    }
    let index = DenseIndex::new(dense, brute_force)?;
    match mode {
        NnMode::Mean => {
            let agg = aggregate_semantic_embeddings(db);
            Ok((transfer_with_index(&index, &agg.targets)?, agg.excluded))
        }
        NnMode::PerModel => Ok((transfer_keypoints_per_model(&index, db)?, Vec::new())),
    }
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate.
pub fn perturb_points_gaussian(points: &[Vec3], sigma: f64, seed: u64) -> Result<Vec<Vec3>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(points.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(points
        .iter()
        .map(|p| {
            let (x, y, z) = (normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            p + Vec3::new(x, y, z)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn entry(pos: [f64; 3], emb: Vec<f64>) -> EmbeddingEntry {
        EmbeddingEntry { position: Vec3::from(pos), embedding: emb }
    }

    fn sample(i: usize, pos: [f64; 3]) -> SurfaceSample {
        SurfaceSample { position: Vec3::from(pos), face_index: i, barycentric: [1.0, 0.0, 0.0] }
    }

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut v);
        v
    }

    #[test]
    fn empty_database_is_valid() {
        let db = EmbeddingDatabase::from_json_str(r#"{"dimension": 4, "models": []}"#).unwrap();
        assert!(db.is_empty());
    }

    #[test]
    fn load_errors_name_the_record() {
        let zero = r#"{"dimension": 2, "models": [{"model_id": "a", "keypoints": [
            {"semantic_id": 0, "position": [0,0,0], "embedding": [1, 0]},
            {"semantic_id": 1, "position": [0,0,0], "embedding": [0, 0]}]}]}"#;
        assert!(matches!(EmbeddingDatabase::from_json_str(zero), Err(Error::Record { index: 1, .. })));
        let dim = r#"{"dimension": 3, "models": [{"model_id": "a", "keypoints": [
            {"semantic_id": 0, "position": [0,0,0], "embedding": [1, 0]}]}]}"#;
        assert!(matches!(EmbeddingDatabase::from_json_str(dim), Err(Error::Record { index: 0, .. })));
        let dup = r#"{"dimension": 2, "models": [{"model_id": "a", "keypoints": [
            {"semantic_id": 4, "position": [0,0,0], "embedding": [1, 0]},
            {"semantic_id": 4, "position": [0,0,1], "embedding": [0, 1]}]}]}"#;
        assert!(matches!(EmbeddingDatabase::from_json_str(dup), Err(Error::Record { index: 1, .. })));
        assert!(matches!(EmbeddingDatabase::from_json_str("{\"dimension\": 2}"), Err(Error::Parse { .. })));
        assert!(EmbeddingDatabase::from_json_str(r#"{"dimension": 2, "models": [{"model_id": "a", "keypoints": [
            {"semantic_id": -1, "position": [0,0,0], "embedding": [1, 0]}]}]}"#)
        .is_err());
    }

    #[test]
    fn save_load_round_trip_is_bit_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let models = (0..3)
            .map(|m| ModelKeypoints {
                model_id: format!("m{m}"),
                keypoints: (0..5)
                    .map(|k| {
                        let raw: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
                        (k, entry([rng.random(), rng.random(), rng.random()], raw))
                    })
                    .collect(),
            })
            .collect();
        let db = EmbeddingDatabase::new(16, models).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        db.save(&path).unwrap();
        let back = load_embedding_db(&path).unwrap();
        assert_eq!(back, db);
        for m in &back.models {
            for (_, e) in &m.keypoints {
                let n: f64 = e.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn aggregation_examples() {
        let a = vec![(0, entry([0.0; 3], vec![3.0, 4.0])), (2, entry([0.0; 3], vec![0.0, 2.0]))];
        let single = EmbeddingDatabase::new(2, vec![ModelKeypoints { model_id: "a".into(), keypoints: a.clone() }]).unwrap();
        let agg = aggregate_semantic_embeddings(&single);
        assert_eq!(agg.targets, vec![(0, vec![0.6, 0.8]), (2, vec![0.0, 1.0])]);
        let twice = EmbeddingDatabase::new(
            2,
            vec![ModelKeypoints { model_id: "a".into(), keypoints: a.clone() }, ModelKeypoints { model_id: "b".into(), keypoints: a }],
        )
        .unwrap();
        assert_eq!(aggregate_semantic_embeddings(&twice).targets, agg.targets);
        let antipodal = EmbeddingDatabase::new(
            2,
            vec![
                ModelKeypoints { model_id: "a".into(), keypoints: vec![(1, entry([0.0; 3], vec![1.0, 0.0])), (3, entry([0.0; 3], vec![0.0, 1.0]))] },
                ModelKeypoints { model_id: "b".into(), keypoints: vec![(1, entry([0.0; 3], vec![-1.0, 0.0]))] },
            ],
        )
        .unwrap();
        let agg = aggregate_semantic_embeddings(&antipodal);
        assert_eq!(agg.excluded, vec![1]);
        assert_eq!(agg.targets, vec![(3, vec![0.0, 1.0])]);
    }

    #[test]
    fn exact_match_and_tie_rule() {
        let dense = DenseEmbedding::new(
            2,
            vec![sample(0, [0.0, 0.0, 0.0]), sample(1, [1.0, 0.0, 0.0]), sample(2, [2.0, 0.0, 0.0])],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
        )
        .unwrap();
        let out = transfer_keypoints(&dense, &[(5, vec![0.0, 1.0])]).unwrap();
        assert_eq!(out.keypoints[0].position3d, [1.0, 0.0, 0.0]);
        // (-1, 0) is equidistant from samples 1 and 2
        let out = transfer_keypoints(&dense, &[(5, vec![-1.0, 0.0])]).unwrap();
        assert_eq!(out.keypoints[0].position3d, [1.0, 0.0, 0.0]);
        assert!(transfer_keypoints(&dense, &[(1, vec![1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn accelerated_search_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 64;
        let n = 10_000;
        let samples: Vec<_> = (0..n).map(|i| sample(i, [i as f64, 0.0, 0.0])).collect();
        let embeddings: Vec<_> = (0..n).map(|_| random_unit(&mut rng, d)).collect();
        let dense = DenseEmbedding::new(d, samples, embeddings).unwrap();
        let fast = DenseIndex::new(&dense, false).unwrap();
        let slow = DenseIndex::new(&dense, true).unwrap();
        for _ in 0..100 {
            let q = random_unit(&mut rng, d);
            assert_eq!(fast.nearest(&q).unwrap(), slow.nearest(&q).unwrap());
        }
    }

    #[test]
    fn identity_transfer_and_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 8;
        let own: Vec<(u32, EmbeddingEntry)> =
            (0..6).map(|k| (k * 3, entry([rng.random(), rng.random(), rng.random()], random_unit(&mut rng, d)))).collect();
        let db = EmbeddingDatabase::new(d, vec![ModelKeypoints { model_id: "q".into(), keypoints: own.clone() }]).unwrap();
        let mut samples: Vec<_> = (0..200).map(|i| sample(i, [rng.random(), rng.random(), rng.random()])).collect();
        let mut embeddings: Vec<_> = (0..200).map(|_| random_unit(&mut rng, d)).collect();
        for (id, e) in &own {
            samples.push(sample(1000 + *id as usize, e.position.into()));
            embeddings.push(e.embedding.clone());
        }
        let dense = DenseEmbedding::new(d, samples.clone(), embeddings.clone()).unwrap();
        for mode in [NnMode::Mean, NnMode::PerModel] {
            let (kps, _) = transfer_from_database(&dense, &db, mode, false).unwrap();
            for (id, e) in &own {
                assert_eq!(kps.get(*id).unwrap().position(), e.position);
            }
        }
        // duplicating the dense set keeps first occurrences
        let mut dup_s = samples.clone();
        dup_s.extend(samples.iter().copied());
        let mut dup_e = embeddings.clone();
        dup_e.extend(embeddings.iter().cloned());
        let dup = DenseEmbedding::new(d, dup_s, dup_e).unwrap();
        let targets = aggregate_semantic_embeddings(&db).targets;
        assert_eq!(transfer_keypoints(&dup, &targets).unwrap(), transfer_keypoints(&dense, &targets).unwrap());
        // reversing target order gives the same per-id result
        let mut reversed = targets.clone();
        reversed.reverse();
        let a = transfer_keypoints(&dense, &targets).unwrap();
        let b = transfer_keypoints(&dense, &reversed).unwrap();
        for k in &a.keypoints {
            assert_eq!(b.get(k.semantic_id), Some(k));
        }
    }

    #[test]
    fn positive_scaling_before_load_changes_nothing() {
        let text = |s: f64| {
            format!(
                r#"{{"dimension": 2, "models": [{{"model_id": "a", "keypoints": [
                {{"semantic_id": 0, "position": [0,0,0], "embedding": [{}, {}]}}]}}]}}"#,
                0.3 * s,
                -0.7 * s
            )
        };
        let a = EmbeddingDatabase::from_json_str(&text(1.0)).unwrap();
        let b = EmbeddingDatabase::from_json_str(&text(17.5)).unwrap();
        let dense =
            DenseEmbedding::new(2, (0..4).map(|i| sample(i, [i as f64; 3])).collect(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.4, -0.6]])
                .unwrap();
        assert_eq!(
            transfer_from_database(&dense, &a, NnMode::Mean, false).unwrap(),
            transfer_from_database(&dense, &b, NnMode::Mean, false).unwrap()
        );
    }

    #[test]
    fn dense_and_keypoint_json_round_trip() {
        let dense = DenseEmbedding::new(
            3,
            vec![SurfaceSample { position: Vec3::new(0.1, 0.2, 0.3), face_index: 7, barycentric: [0.2, 0.3, 0.5] }],
            vec![vec![1.0, 2.0, 2.0]],
        )
        .unwrap();
        assert_eq!(DenseEmbedding::from_json_str(&dense.to_json_string()).unwrap(), dense);
        let kps = KeypointSet::new(vec![
            Keypoint { semantic_id: 1, position3d: [0.0, 1.0, 2.0], pixel: Some([3.5, 4.0]), visible: Some(true) },
            Keypoint::new(2, Vec3::new(1.0, 1.0, 1.0)),
        ])
        .unwrap();
        let text = kps.to_json_string();
        assert!(text.contains("\"pixel\": null"));
        assert_eq!(KeypointSet::from_json_str(&text).unwrap(), kps);
        assert!(KeypointSet::new(vec![Keypoint::new(1, Vec3::zeros()), Keypoint::new(1, Vec3::zeros())]).is_err());
    }

    #[test]
    fn perturbation_statistics() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0); 10_000];
        assert_eq!(perturb_points_gaussian(&pts, 0.0, 1).unwrap(), pts);
        let a = perturb_points_gaussian(&pts, 0.01, 5).unwrap();
        assert_eq!(a, perturb_points_gaussian(&pts, 0.01, 5).unwrap());
        for axis in 0..3 {
            let offs: Vec<f64> = a.iter().zip(&pts).map(|(p, q)| p[axis] - q[axis]).collect();
            let mean = offs.iter().sum::<f64>() / offs.len() as f64;
            let sd = (offs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (offs.len() - 1) as f64).sqrt();
            assert!((0.0097..=0.0103).contains(&sd), "axis {axis}: {sd}");
        }
        assert!(perturb_points_gaussian(&pts, -1.0, 0).is_err());
    }
}
