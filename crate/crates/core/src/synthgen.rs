//! Seeded clustered-sphere data: labeled "audio" embeddings around random
//! class centres plus one perturbed "text" embedding per class.
//!
//! Centres are uniform on the unit sphere (normalised Gaussian draws).
//! An audio row is `normalize(centre + ε)` with `ε ~ N(0, I / max(kappa, 1e-12))`
//! and a text row is `normalize(centre + η)` with `η ~ N(0, text_noise · I)`,
//! both variances per coordinate. Gaussian-then-normalise stands in for
//! von Mises-Fisher sampling.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::embedding::{ClassVocabulary, EmbeddingSet, SupportSet};
use crate::episodes::{self, EpisodeRng, EvalSetup, Method, MethodConfig};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::metric::ZERO_NORM_THRESHOLD;
use crate::zero_shot::ZeroShotHead;

const KAPPA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Concentration: audio noise variance is `1 / kappa` per coordinate.
    pub kappa: f64,
    /// Text noise variance per coordinate.
    pub text_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 50 classes of 40 clips in 64 dimensions; `text_noise` is the value
    /// that puts 5-way zero-shot accuracy near 0.80 (see
    /// [`calibrate_text_noise`]).
    fn default() -> Self {
        Self {
            n_classes: 50,
            dim: 64,
            per_class: 40,
            kappa: 200.0,
            text_noise: 0.14,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.per_class == 0 {
            return Err(Error::InvalidParameter(
                "need at least one class and one row per class",
            ));
        }
        if self.dim < 2 {
            return Err(Error::InvalidParameter("dim must be at least 2"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(
                "kappa must be finite and non-negative",
            ));
        }
        if !(self.text_noise >= 0.0 && self.text_noise.is_finite()) {
            return Err(Error::InvalidParameter(
                "text_noise must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    /// `n_classes · per_class` rows, class-major.
    pub audio: SupportSet,
    /// One row per class, vocabulary order.
    pub text: EmbeddingSet,
    pub centers: EmbeddingSet,
}

impl SynthData {
    pub fn vocab(&self) -> &ClassVocabulary {
        self.audio.vocab()
    }

    pub fn head(&self, tau: f64) -> Result<ZeroShotHead> {
        ZeroShotHead::new(&self.text, self.vocab().clone(), tau)
    }
}

fn unit_perturbed(rng: &mut EpisodeRng, center: &[f64], std: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = center
            .iter()
            .map(|&c| c + std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = matrix::norm(&v);
        if n >= ZERO_NORM_THRESHOLD && n.is_finite() {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Generates a dataset; identical configs give identical output.
///
/// Draw order is centres, then text, then audio, so changing `text_noise`
/// leaves centres and audio untouched and changing `per_class` leaves
/// centres and text untouched.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = EpisodeRng::seed_from_u64(cfg.seed);
    let origin = alloc::vec![0.0; cfg.dim];
    let centers: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| unit_perturbed(&mut rng, &origin, 1.0))
        .collect();
    let text_std = libm::sqrt(cfg.text_noise);
    let text: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| unit_perturbed(&mut rng, c, text_std))
        .collect();
    let audio_std = 1.0 / libm::sqrt(cfg.kappa.max(KAPPA_FLOOR));
    let mut audio = Vec::with_capacity(cfg.n_classes * cfg.per_class * cfg.dim);
    let mut labels = Vec::with_capacity(cfg.n_classes * cfg.per_class);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..cfg.per_class {
            audio.extend(unit_perturbed(&mut rng, c, audio_std));
            labels.push(label);
        }
    }
    let vocab = ClassVocabulary::numbered(cfg.n_classes);
    Ok(SynthData {
        audio: SupportSet::new(
            EmbeddingSet::new(labels.len(), cfg.dim, audio)?,
            labels,
            vocab,
        )?,
        text: EmbeddingSet::from_matrix(Matrix::from_rows(&text)?)?,
        centers: EmbeddingSet::from_matrix(Matrix::from_rows(&centers)?)?,
    })
}

/// Zero-shot accuracy of `cfg` under `setup` with logit scale `tau`.
pub fn zsl_accuracy(cfg: &SynthConfig, tau: f64, setup: &EvalSetup) -> Result<f64> {
    let data = generate(cfg)?;
    let head = data.head(tau)?;
    Ok(
        episodes::evaluate(&MethodConfig::new(Method::Zsl), &data.audio, &head, setup)?
            .mean_accuracy,
    )
}

/// Sweeps `text_noise` over `grid` and returns the value whose zero-shot
/// accuracy lands closest to `target`, together with that accuracy.
pub fn calibrate_text_noise(
    base: &SynthConfig,
    tau: f64,
    setup: &EvalSetup,
    grid: &[f64],
    target: f64,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &noise in grid {
        let cfg = SynthConfig {
            text_noise: noise,
            ..base.clone()
        };
        let acc = zsl_accuracy(&cfg, tau, setup)?;
        let closer = best.is_none_or(|(_, b)| (acc - target).abs() < (b - target).abs());
        if closer {
            best = Some((noise, acc));
        }
    }
    best.ok_or(Error::InvalidParameter("empty calibration grid"))
}
