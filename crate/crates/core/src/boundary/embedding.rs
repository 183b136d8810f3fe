//! Attribute embeddings trained with an ordinal triplet loss.
//!
//! A sample's embedding is `normalize(xᵀE)`: the sum of the rows of `E` for
//! the attributes present, scaled to unit length. Triplets pair an anchor with
//! a positive of the same maximum level and a negative of a different level;
//! the margin grows with the level gap between anchor and negative.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use super::BoundaryError;
use crate::taxonomy::{SeverityLevel, NUM_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub dim: usize,
    pub base_margin: f64,
    pub ordinal_scale: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Standard deviation of the Gaussian used to initialise `E`.
    pub init_std: f64,
    /// Triplets drawn per epoch; `None` draws one per training sample.
    pub triplets_per_epoch: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 16,
            base_margin: 0.10,
            ordinal_scale: 0.12,
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 64,
            weight_decay: 0.01,
            init_std: 0.1,
            triplets_per_epoch: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), BoundaryError> {
        let bad = |what: &str| Err(BoundaryError::InvalidHyperparams(what.to_string()));
        // Written so that NaN fails every check.
        let positive = |x: f64| x > 0.0;
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !positive(self.base_margin) || !positive(self.ordinal_scale) {
            return bad("margins must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !positive(self.learning_rate) || self.batch_size == 0 {
            return bad("learning rate and batch size must be positive");
        }
        if !(positive(self.weight_decay) || self.weight_decay == 0.0) || !positive(self.init_std) {
            return bad("weight decay must be non-negative and init_std positive");
        }
        if self.triplets_per_epoch == Some(0) {
            return bad("triplets_per_epoch must be positive");
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// A multi-hot attribute vector with its maximum severity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub attributes: Vec<u8>,
    pub max_level: SeverityLevel,
}

/// The learned attribute-embedding matrix `E` (rows × dim, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub rows: usize,
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub triplets_per_epoch: usize,
}

/// Embeddings of a batch of samples with their pre-normalisation norms.
struct Projection {
    z: Vec<f64>,
    norm: f64,
}

impl EmbeddingModel {
    /// Gaussian-initialised model.
    pub fn initialise(
        rows: usize,
        hyperparams: Hyperparams,
        seed: u64,
    ) -> Result<Self, BoundaryError> {
        hyperparams.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::initialise_with(rows, hyperparams, seed, &mut rng))
    }

    fn initialise_with(
        rows: usize,
        hyperparams: Hyperparams,
        seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let normal = Normal::new(0.0, hyperparams.init_std).expect("init_std validated positive");
        let matrix = (0..rows)
            .map(|_| (0..hyperparams.dim).map(|_| normal.sample(rng)).collect())
            .collect();
        Self {
            rows,
            dim: hyperparams.dim,
            matrix,
            hyperparams,
            seed,
        }
    }

    pub fn from_matrix(
        matrix: Vec<Vec<f64>>,
        hyperparams: Hyperparams,
        seed: u64,
    ) -> Result<Self, BoundaryError> {
        let dim = matrix.first().map_or(0, Vec::len);
        if matrix.is_empty() || dim == 0 || matrix.iter().any(|r| r.len() != dim) {
            return Err(BoundaryError::DimensionMismatch {
                expected: dim,
                got: matrix.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(0),
            });
        }
        Ok(Self {
            rows: matrix.len(),
            dim,
            matrix,
            hyperparams: Hyperparams { dim, ..hyperparams },
            seed,
        })
    }

    fn flat(&self) -> Vec<f64> {
        self.matrix.iter().flatten().copied().collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        for (row, chunk) in self.matrix.iter_mut().zip(flat.chunks(self.dim)) {
            row.copy_from_slice(chunk);
        }
    }

    fn project(&self, x: &[u8]) -> Result<Projection, BoundaryError> {
        if x.len() != self.rows {
            return Err(BoundaryError::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut u = vec![0.0; self.dim];
        for (row, &xi) in self.matrix.iter().zip(x) {
            if xi != 0 {
                let w = f64::from(xi);
                for (acc, e) in u.iter_mut().zip(row) {
                    *acc += w * e;
                }
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(BoundaryError::ZeroVector);
        }
        u.iter_mut().for_each(|v| *v /= norm);
        Ok(Projection { z: u, norm })
    }

    /// `normalize(xᵀE)`.
    pub fn embed(&self, x: &[u8]) -> Result<Vec<f64>, BoundaryError> {
        self.project(x).map(|p| p.z)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine distance `1 − cos(u, v)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    1.0 - dot(u, v) / (nu * nv)
}

/// Hinge on the distance gap with margin `m0 + β·|gap|`, where `gap` is the
/// level difference between anchor and negative.
pub fn triplet_loss_from_distances(
    d_ap: f64,
    d_an: f64,
    level_gap: u32,
    base_margin: f64,
    ordinal_scale: f64,
) -> f64 {
    (d_ap - d_an + base_margin + ordinal_scale * f64::from(level_gap)).max(0.0)
}

pub fn triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    anchor_level: SeverityLevel,
    negative_level: SeverityLevel,
    base_margin: f64,
    ordinal_scale: f64,
) -> f64 {
    let gap = anchor_level.number().abs_diff(negative_level.number());
    triplet_loss_from_distances(
        cosine_distance(anchor, positive),
        cosine_distance(anchor, negative),
        u32::from(gap),
        base_margin,
        ordinal_scale,
    )
}

/// Loss of one triplet and, when active, its gradient added into `grad`
/// (same row-major layout as `E`) scaled by `scale`.
fn accumulate_triplet(
    model: &EmbeddingModel,
    samples: &[TrainingSample],
    (a, p, n): (usize, usize, usize),
    scale: f64,
    grad: &mut [f64],
) -> Result<f64, BoundaryError> {
    let hp = &model.hyperparams;
    let pa = model.project(&samples[a].attributes)?;
    let pp = model.project(&samples[p].attributes)?;
    let pn = model.project(&samples[n].attributes)?;
    let gap = samples[a]
        .max_level
        .number()
        .abs_diff(samples[n].max_level.number());
    // With unit vectors, d(a,p) − d(a,n) = z_a·z_n − z_a·z_p.
    let loss = triplet_loss_from_distances(
        1.0 - dot(&pa.z, &pp.z),
        1.0 - dot(&pa.z, &pn.z),
        u32::from(gap),
        hp.base_margin,
        hp.ordinal_scale,
    );
    if loss <= 0.0 {
        return Ok(0.0);
    }
    let dim = model.dim;
    let g_za: Vec<f64> = pn.z.iter().zip(&pp.z).map(|(n, p)| n - p).collect();
    let g_zp: Vec<f64> = pa.z.iter().map(|v| -v).collect();
    let g_zn: Vec<f64> = pa.z.clone();
    for (proj, g_z, idx) in [(&pa, g_za, a), (&pp, g_zp, p), (&pn, g_zn, n)] {
        // d z / d u = (I − z zᵀ) / ‖u‖
        let along = dot(&g_z, &proj.z);
        let g_u: Vec<f64> = g_z
            .iter()
            .zip(&proj.z)
            .map(|(g, z)| (g - along * z) / proj.norm)
            .collect();
        for (row, &xi) in samples[idx].attributes.iter().enumerate() {
            if xi != 0 {
                let w = scale * f64::from(xi);
                let slot = &mut grad[row * dim..(row + 1) * dim];
                for (s, g) in slot.iter_mut().zip(&g_u) {
                    *s += w * g;
                }
            }
        }
    }
    Ok(loss)
}

/// Mean loss over `triplets` and its gradient with respect to `E`.
pub fn batch_loss_and_gradient(
    model: &EmbeddingModel,
    samples: &[TrainingSample],
    triplets: &[(usize, usize, usize)],
) -> Result<(f64, Vec<f64>), BoundaryError> {
    let mut grad = vec![0.0; model.rows * model.dim];
    if triplets.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for &t in triplets {
        total += accumulate_triplet(model, samples, t, scale, &mut grad)?;
    }
    Ok((total * scale, grad))
}

struct TripletSampler {
    by_level: [Vec<usize>; NUM_LEVELS],
    others: [Vec<usize>; NUM_LEVELS],
}

impl TripletSampler {
    fn new(samples: &[TrainingSample]) -> Self {
        let mut by_level: [Vec<usize>; NUM_LEVELS] = Default::default();
        for (i, s) in samples.iter().enumerate() {
            by_level[s.max_level.index()].push(i);
        }
        let others = std::array::from_fn(|l| {
            (0..samples.len())
                .filter(|&i| samples[i].max_level.index() != l)
                .collect()
        });
        Self { by_level, others }
    }

    fn draw(&self, samples: &[TrainingSample], rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
        let a = rng.random_range(0..samples.len());
        let level = samples[a].max_level.index();
        let same = &self.by_level[level];
        let p = if same.len() > 1 {
            loop {
                let p = *same.choose(rng).expect("non-empty");
                if p != a {
                    break p;
                }
            }
        } else {
            a
        };
        let n = *self.others[level]
            .choose(rng)
            .expect("at least two levels present");
        (a, p, n)
    }
}

/// Trains `E` with AdamW on uniformly sampled triplets.
///
/// All randomness (initialisation and triplet draws) comes from one ChaCha8
/// stream seeded with `seed`, so equal inputs give bit-identical models.
pub fn train_embeddings(
    samples: &[TrainingSample],
    hyperparams: Hyperparams,
    seed: u64,
) -> Result<(EmbeddingModel, TrainingReport), BoundaryError> {
    hyperparams.validate()?;
    let rows = samples
        .first()
        .map(|s| s.attributes.len())
        .ok_or(BoundaryError::DegenerateDataset)?;
    for s in samples {
        if s.attributes.len() != rows {
            return Err(BoundaryError::DimensionMismatch {
                expected: rows,
                got: s.attributes.len(),
            });
        }
        if s.attributes.iter().all(|&v| v == 0) {
            return Err(BoundaryError::ZeroVector);
        }
    }
    let levels_present = SeverityLevel::ALL
        .iter()
        .filter(|l| samples.iter().any(|s| s.max_level == **l))
        .count();
    if levels_present < 2 {
        return Err(BoundaryError::DegenerateDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = EmbeddingModel::initialise_with(rows, hyperparams, seed, &mut rng);
    let sampler = TripletSampler::new(samples);
    let per_epoch = hyperparams.triplets_per_epoch.unwrap_or(samples.len());
    let mut opt = AdamW::new(hyperparams.adamw(), rows * hyperparams.dim);
    let mut params = model.flat();
    let mut epoch_losses = Vec::with_capacity(hyperparams.epochs);

    for _ in 0..hyperparams.epochs {
        let triplets: Vec<_> = (0..per_epoch)
            .map(|_| sampler.draw(samples, &mut rng))
            .collect();
        let mut epoch_total = 0.0;
        for batch in triplets.chunks(hyperparams.batch_size) {
            let (mean, grad) = batch_loss_and_gradient(&model, samples, batch)?;
            epoch_total += mean * batch.len() as f64;
            opt.step(&mut params, &grad);
            model.set_flat(&params);
        }
        epoch_losses.push(epoch_total / per_epoch as f64);
    }

    let report = TrainingReport {
        epoch_losses,
        steps: opt.steps_taken() as usize,
        triplets_per_epoch: per_epoch,
    };
    Ok((model, report))
}
