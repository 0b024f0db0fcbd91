//! Motion metrics over a fixed statistical feature: Fréchet distance,
//! diversity, retrieval precision and multimodal distance.
//!
//! The feature of a clip with `J` joints has `7J + 6` entries: per joint the
//! mean position (3), position standard deviation (3) and mean speed (1),
//! then the mean (3) and standard deviation (3) of the root velocity.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::motion::{velocities, Motion3D, Skeleton};

/// Eigenvalues down to this (negative) value are treated as zero.
pub const EIGEN_CLAMP: f64 = 1e-10;

pub fn feature_dim(joints: usize) -> usize {
    7 * joints + 6
}

fn mean_std(values: impl Iterator<Item = [f64; 3]> + Clone) -> ([f64; 3], [f64; 3]) {
    let n = values.clone().count() as f64;
    let mut mean = [0.0; 3];
    for v in values.clone() {
        (0..3).for_each(|i| mean[i] += v[i]);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for v in values {
        (0..3).for_each(|i| var[i] += (v[i] - mean[i]).powi(2));
    }
    (mean, var.map(|x| (x / n).sqrt()))
}

pub fn feature_extract(m: &Motion3D, skel: &Skeleton) -> Result<Vec<f64>> {
    ensure!(m.joints == skel.joint_count(), Shape, "motion has {} joints, skeleton {}", m.joints, skel.joint_count());
    let n = m.frames();
    ensure!(n >= 2, Invalid, "features need at least 2 frames");
    let mut out = Vec::with_capacity(feature_dim(m.joints));
    for j in 0..m.joints {
        let track = (0..n).map(|f| m.at(f, j));
        let (mean, std) = mean_std(track);
        out.extend(mean);
        out.extend(std);
        let speed = (0..n - 1)
            .map(|f| {
                let (a, b) = (m.at(f, j), m.at(f + 1, j));
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / (n - 1) as f64
            * m.fps;
        out.push(speed);
    }
    let root: Vec<[f64; 3]> = (0..n).map(|f| m.at(f, skel.root_index())).collect();
    let vel = velocities(&root, m.fps)?;
    let (mean, std) = mean_std(vel.iter().copied());
    out.extend(mean);
    out.extend(std);
    Ok(out)
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn fit(feats: &[Vec<f64>]) -> Result<Self> {
        ensure!(feats.len() >= 2, Invalid, "need at least 2 features, got {}", feats.len());
        let d = feats[0].len();
        ensure!(d > 0 && feats.iter().all(|f| f.len() == d), Shape, "features differ in length");
        ensure!(feats.iter().flatten().all(|v| v.is_finite()), NonFinite, "feature contains non-finite values");
        let n = feats.len() as f64;
        let mut mean = DVector::zeros(d);
        for f in feats {
            mean += DVector::from_column_slice(f);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for f in feats {
            let c = DVector::from_column_slice(f) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n - 1.0;
        Ok(Self { mean, cov })
    }
}

/// Symmetric eigendecomposition with near-zero negative eigenvalues clamped.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    for l in eig.eigenvalues.iter_mut() {
        if *l < -EIGEN_CLAMP * scale {
            return Err(Error::Invalid(format!("{what} is not positive semidefinite: eigenvalue {l:.3e}")));
        }
        *l = l.max(0.0);
    }
    Ok(eig)
}

fn sqrt_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m, what)?;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * s * eig.eigenvectors.transpose())
}

/// Fréchet distance between two fitted Gaussians. The trace of
/// `(Σa Σb)^{1/2}` is computed as the trace of `(Σa^{1/2} Σb Σa^{1/2})^{1/2}`,
/// which has the same eigenvalues and is symmetric.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    ensure!(a.mean.len() == b.mean.len(), Shape, "feature dimensions differ");
    let dm = (&a.mean - &b.mean).norm_squared();
    let ra = sqrt_psd(&a.cov, "first covariance")?;
    psd_eigen(&b.cov, "second covariance")?;
    let inner = &ra * &b.cov * &ra;
    let cross: f64 = psd_eigen(&inner, "covariance product")?.eigenvalues.iter().map(|l| l.sqrt()).sum();
    Ok(dm + a.cov.trace() + b.cov.trace() - 2.0 * cross)
}

pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    frechet_distance(&GaussianStats::fit(a)?, &GaussianStats::fit(b)?)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean distance over `n_pairs` random pairs of distinct items. When
/// `n_pairs` is at least the number of unordered pairs, every pair is used
/// once and the result is exact.
pub fn diversity(feats: &[Vec<f64>], n_pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    ensure!(n_pairs >= 1, Invalid, "need at least one pair");
    let n = feats.len();
    ensure!(n >= 2, Invalid, "need at least 2 features, got {n}");
    if n_pairs >= n * (n - 1) / 2 {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += dist(&feats[i], &feats[j]);
            }
        }
        return Ok(total / (n * (n - 1) / 2) as f64);
    }
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let pair = sample(rng, n, 2);
        total += dist(&feats[pair.index(0)], &feats[pair.index(1)]);
    }
    Ok(total / n_pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub r_precision: f64,
    pub mm_dist: f64,
    pub batches: usize,
}

/// Text-to-motion retrieval with prompt centroids as text features.
///
/// `gen` holds `(prompt id, feature)`. For each of `rounds` random batches of
/// `batch` items, every item ranks the batch's text features by distance to
/// its motion feature (ties broken by batch position) and counts a hit when
/// its own text is among the `top_k` closest. MM Dist is the mean distance
/// of every item to its own centroid.
pub fn retrieval_metrics(
    centroids: &[Vec<f64>],
    gen: &[(usize, Vec<f64>)],
    batch: usize,
    top_k: usize,
    rounds: usize,
    rng: &mut impl Rng,
) -> Result<Retrieval> {
    ensure!(batch >= 1 && top_k >= 1 && rounds >= 1, Invalid, "batch, top-k and rounds must be positive");
    ensure!(gen.len() >= batch, Invalid, "{} generated items cannot fill a batch of {batch}", gen.len());
    if let Some((p, _)) = gen.iter().find(|(p, _)| *p >= centroids.len()) {
        return Err(Error::Invalid(format!("prompt {p} has no centroid")));
    }
    let mm_dist = gen.iter().map(|(p, f)| dist(f, &centroids[*p])).sum::<f64>() / gen.len() as f64;
    let mut hits = 0usize;
    for _ in 0..rounds {
        let idx = sample(rng, gen.len(), batch).into_vec();
        for (i, &gi) in idx.iter().enumerate() {
            let (own, feat) = &gen[gi];
            let d_own = dist(feat, &centroids[*own]);
            let rank = idx
                .iter()
                .enumerate()
                .filter(|&(j, &gj)| {
                    let d = dist(feat, &centroids[gen[gj].0]);
                    d < d_own || (d == d_own && j < i)
                })
                .count();
            if rank < top_k {
                hits += 1;
            }
        }
    }
    Ok(Retrieval { r_precision: hits as f64 / (rounds * batch) as f64, mm_dist, batches: rounds })
}

/// Per-label feature mean.
pub fn centroids(feats: &[(String, Vec<f64>)]) -> Result<BTreeMap<String, Vec<f64>>> {
    ensure!(!feats.is_empty(), Invalid, "no features");
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (label, f) in feats {
        let e = sums.entry(label.clone()).or_insert_with(|| (vec![0.0; f.len()], 0));
        e.0.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect())).collect())
}

/// Label of the closest centroid (ties go to the first label in order).
pub fn nearest_centroid<'a>(feat: &[f64], centroids: &'a BTreeMap<String, Vec<f64>>) -> Option<&'a str> {
    centroids
        .iter()
        .map(|(k, c)| (k.as_str(), dist(feat, c)))
        .fold(None, |best: Option<(&str, f64)>, (k, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((k, d)),
        })
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidEntry {
    pub generated: String,
    pub reference: String,
    pub fid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub diversity_pairs: usize,
    pub retrieval_batch: usize,
    pub top_k: usize,
    pub retrieval_rounds: usize,
    pub seed: u64,
}

/// Metrics of generated clips against labelled reference clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub generated_count: usize,
    pub reference_count: usize,
    pub feature_dim: usize,
    pub fid: f64,
    /// FID of each generated label against each reference label.
    pub fid_by_label: Vec<FidEntry>,
    pub diversity: f64,
    pub reference_diversity: f64,
    pub r_precision: f64,
    pub mm_dist: f64,
    pub centroid_accuracy: f64,
    pub settings: EvalSettings,
    pub config_fingerprint: Option<String>,
}

impl EvalReport {
    /// True when every generated label is closer (by FID) to its own
    /// reference label than to every other one.
    pub fn same_label_fid_is_lowest(&self) -> bool {
        self.fid_by_label.iter().filter(|e| e.generated == e.reference).all(|same| {
            self.fid_by_label.iter().filter(|e| e.generated == same.generated && e.reference != same.generated).all(|o| same.fid < o.fid)
        })
    }
}

/// A clip with its label.
pub type Labeled<'a> = (&'a Motion3D, &'a str);

pub fn evaluate(generated: &[Labeled<'_>], reference: &[Labeled<'_>], skel: &Skeleton, settings: &EvalSettings, config_fingerprint: Option<String>) -> Result<EvalReport> {
    ensure!(generated.len() >= 2 && reference.len() >= 2, Invalid, "need at least 2 generated and 2 reference clips");
    let feats = |set: &[Labeled<'_>]| -> Result<Vec<(String, Vec<f64>)>> {
        crate::par::try_map(set, |(m, l)| feature_extract(m, skel).map(|f| (l.to_string(), f)))
    };
    let gen = feats(generated)?;
    let refs = feats(reference)?;
    let cents = centroids(&refs)?;
    let labels: Vec<&String> = cents.keys().collect();
    if let Some((l, _)) = gen.iter().find(|(l, _)| !cents.contains_key(l)) {
        return Err(Error::Invalid(format!("generated label {l:?} has no reference clips")));
    }
    let only = |set: &[(String, Vec<f64>)]| set.iter().map(|(_, f)| f.clone()).collect::<Vec<_>>();
    let of = |set: &[(String, Vec<f64>)], l: &str| set.iter().filter(|(k, _)| k == l).map(|(_, f)| f.clone()).collect::<Vec<_>>();

    let mut fid_by_label = Vec::new();
    for g in &labels {
        let gs = of(&gen, g);
        if gs.len() < 2 {
            continue;
        }
        for r in &labels {
            let rs = of(&refs, r);
            if rs.len() >= 2 {
                fid_by_label.push(FidEntry { generated: g.to_string(), reference: r.to_string(), fid: fid(&gs, &rs)? });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let gen_all = only(&gen);
    let diversity_gen = diversity(&gen_all, settings.diversity_pairs, &mut rng)?;
    let diversity_ref = diversity(&only(&refs), settings.diversity_pairs, &mut rng)?;
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let cent_list: Vec<Vec<f64>> = cents.values().cloned().collect();
    let tagged: Vec<(usize, Vec<f64>)> = gen.iter().map(|(l, f)| (index[l.as_str()], f.clone())).collect();
    let batch = settings.retrieval_batch.min(tagged.len());
    let retrieval = retrieval_metrics(&cent_list, &tagged, batch, settings.top_k.min(batch), settings.retrieval_rounds, &mut rng)?;
    let correct = gen.iter().filter(|(l, f)| nearest_centroid(f, &cents) == Some(l.as_str())).count();

    Ok(EvalReport {
        generated_count: gen.len(),
        reference_count: refs.len(),
        feature_dim: feature_dim(skel.joint_count()),
        fid: fid(&gen_all, &only(&refs))?,
        fid_by_label,
        diversity: diversity_gen,
        reference_diversity: diversity_ref,
        r_precision: retrieval.r_precision,
        mm_dist: retrieval.mm_dist,
        centroid_accuracy: correct as f64 / gen.len() as f64,
        settings: settings.clone(),
        config_fingerprint,
    })
}
