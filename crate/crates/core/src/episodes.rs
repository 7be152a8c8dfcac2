//! n-way k-shot episode sampling and episodic evaluation.
//!
//! Every random choice is driven by a [`Xoshiro256PlusPlus`] stream seeded
//! through `seed_from_u64` (SplitMix64 expansion), so identical seeds give
//! identical episodes on every platform. Episode `i` of an evaluation uses
//! seed `base_seed + i`, which makes results independent of the order in
//! which episodes are run.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::baselines::{self, TipCache};
use crate::calm::{AdapterParams, FslScores};
use crate::embedding::SupportSet;
use crate::error::{Error, Result};
use crate::metric::{ScoreMatrix, Sharpness};
use crate::treff::{self, TrainConfig};
use crate::zero_shot::{self, ZeroShotHead};

/// Seedable generator used for all sampling in the crate.
pub type EpisodeRng = Xoshiro256PlusPlus;

/// One sampled task: `k` supports and `q` queries for each of `n` classes.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Episode {
    /// Dataset class ids; local class `c` is `class_ids[c]`.
    pub class_ids: Vec<usize>,
    /// Dataset rows, `k` per class in `class_ids` order.
    pub support_indices: Vec<usize>,
    /// Dataset rows, `q` per class in `class_ids` order.
    pub query_indices: Vec<usize>,
    pub seed: u64,
}

impl Episode {
    /// The support rows relabeled to local class ids.
    pub fn support(&self, dataset: &SupportSet) -> Result<SupportSet> {
        dataset.subset(&self.support_indices, &self.class_ids)
    }

    /// The query rows relabeled to local class ids.
    pub fn queries(&self, dataset: &SupportSet) -> Result<SupportSet> {
        dataset.subset(&self.query_indices, &self.class_ids)
    }
}

/// Samples an episode from a labeled dataset.
///
/// Classes are drawn uniformly among those holding at least `k + q` rows.
/// Each chosen class's rows are shuffled; the first `q` become queries and
/// the next `k` supports. Neither the class draw nor the query rows depend
/// on `k` as long as the eligible classes do not change, so support-free
/// methods score identically across shot counts.
pub fn sample_episode(
    dataset: &SupportSet,
    n_way: usize,
    k_shot: usize,
    queries_per_class: usize,
    seed: u64,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || queries_per_class == 0 {
        return Err(Error::InvalidParameter(
            "n_way, k_shot and queries_per_class must be positive",
        ));
    }
    let groups = dataset.indices_by_class();
    let populated = groups.iter().filter(|g| !g.is_empty()).count();
    if populated < n_way {
        return Err(Error::InsufficientClasses {
            needed: n_way,
            available: populated,
        });
    }
    let needed = k_shot + queries_per_class;
    let eligible = groups.iter().filter(|g| g.len() >= needed).count();
    if eligible < n_way {
        return Err(Error::InsufficientExamples {
            needed,
            eligible,
            classes: n_way,
        });
    }

    let mut rng = EpisodeRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    let class_ids: Vec<usize> = order
        .into_iter()
        .filter(|&c| groups[c].len() >= needed)
        .take(n_way)
        .collect();

    let mut support_indices = Vec::with_capacity(n_way * k_shot);
    let mut query_indices = Vec::with_capacity(n_way * queries_per_class);
    for &c in &class_ids {
        let mut rows = groups[c].clone();
        rows.shuffle(&mut rng);
        query_indices.extend_from_slice(&rows[..queries_per_class]);
        support_indices.extend_from_slice(&rows[queries_per_class..needed]);
    }
    Ok(Episode {
        class_ids,
        support_indices,
        query_indices,
        seed,
    })
}

/// Classification heads the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Zsl,
    TreffFree,
    TreffFt,
    TipFree,
    TipFt,
    Proto,
    Match,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Zsl,
        Method::TreffFree,
        Method::TreffFt,
        Method::TipFree,
        Method::TipFt,
        Method::Proto,
        Method::Match,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Zsl => "zsl",
            Method::TreffFree => "treff-free",
            Method::TreffFt => "treff-ft",
            Method::TipFree => "tip-free",
            Method::TipFt => "tip-ft",
            Method::Proto => "proto",
            Method::Match => "match",
        }
    }

    /// Whether predictions depend on the support set.
    pub fn uses_support(self) -> bool {
        self != Method::Zsl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// A method plus every knob it reads.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MethodConfig {
    pub method: Method,
    /// `φ` for the adapter.
    pub phi: Sharpness,
    /// `φ` for the cache model.
    pub tip_beta: Sharpness,
    pub fsl: FslScores,
    /// Initial fusion weight for both adapters.
    pub alpha: f64,
    pub train: TrainConfig,
    pub proto_normalize: bool,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            phi: Sharpness::default(),
            tip_beta: Sharpness::default(),
            fsl: FslScores::default(),
            alpha: AdapterParams::DEFAULT_ALPHA,
            train: TrainConfig::default(),
            proto_normalize: false,
        }
    }

    /// Class scores for `queries` given an episode's support and head.
    pub fn scores(
        &self,
        head: &ZeroShotHead,
        support: &SupportSet,
        queries: &SupportSet,
    ) -> Result<ScoreMatrix> {
        let q = queries.embeddings();
        let adapter = || {
            let mut p = AdapterParams::identity(support.dim())
                .with_sharpness(self.phi)
                .with_fsl_scores(self.fsl);
            p.alpha = self.alpha;
            p
        };
        let cache = || -> Result<TipCache> {
            let mut c = TipCache::from_support(support, self.tip_beta)?;
            c.alpha = self.alpha;
            Ok(c)
        };
        match self.method {
            Method::Zsl => zero_shot::zsl_logits(head, q),
            Method::TreffFree => treff::treff_predict(&adapter(), head, support, q),
            Method::TreffFt => {
                let fit = treff::finetune_adapter(adapter(), head, support, &self.train)?;
                treff::treff_predict(&fit.final_params, head, support, q)
            }
            Method::TipFree => baselines::tip_predict(&cache()?, head, q),
            Method::TipFt => {
                let fit = baselines::tip_finetune(&cache()?, head, support, &self.train)?;
                baselines::tip_predict(&fit.final_params, head, q)
            }
            Method::Proto => baselines::proto_predict_with(support, q, self.proto_normalize),
            Method::Match => baselines::match_predict(support, q),
        }
    }

    /// Top-1 accuracy on one episode.
    pub fn episode_accuracy(
        &self,
        dataset: &SupportSet,
        head: &ZeroShotHead,
        episode: &Episode,
    ) -> Result<f64> {
        let local_head = head.select(&episode.class_ids)?;
        let support = episode.support(dataset)?;
        let queries = episode.queries(dataset)?;
        let predicted = self.scores(&local_head, &support, &queries)?.argmax_rows();
        Ok(accuracy(&predicted, queries.labels()))
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Shape and seeding of an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSetup {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries_per_class: usize,
    pub episodes: usize,
    pub base_seed: u64,
}

impl EvalSetup {
    pub const DEFAULT_QUERIES_PER_CLASS: usize = 5;

    pub fn new(n_way: usize, k_shot: usize, episodes: usize, base_seed: u64) -> Self {
        Self {
            n_way,
            k_shot,
            queries_per_class: Self::DEFAULT_QUERIES_PER_CLASS,
            episodes,
            base_seed,
        }
    }

    pub fn episode_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }

    pub fn sample(&self, dataset: &SupportSet, index: usize) -> Result<Episode> {
        sample_episode(
            dataset,
            self.n_way,
            self.k_shot,
            self.queries_per_class,
            self.episode_seed(index),
        )
    }
}

/// Accuracy statistics over a batch of episodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSummary {
    pub method: String,
    pub n_way: usize,
    pub k_shot: usize,
    pub queries_per_class: usize,
    pub episodes: usize,
    pub base_seed: u64,
    pub mean_accuracy: f64,
    /// Sample standard deviation over episodes divided by `√episodes`.
    pub std_error: f64,
    pub per_episode: Vec<f64>,
}

impl EvalSummary {
    pub fn from_accuracies(method: Method, setup: &EvalSetup, per_episode: Vec<f64>) -> Self {
        let count = per_episode.len();
        let mean = if count == 0 {
            0.0
        } else {
            per_episode.iter().sum::<f64>() / count as f64
        };
        let std_error = if count < 2 {
            0.0
        } else {
            let var = per_episode
                .iter()
                .map(|a| (a - mean) * (a - mean))
                .sum::<f64>()
                / (count - 1) as f64;
            libm::sqrt(var / count as f64)
        };
        Self {
            method: method.name().to_string(),
            n_way: setup.n_way,
            k_shot: setup.k_shot,
            queries_per_class: setup.queries_per_class,
            episodes: count,
            base_seed: setup.base_seed,
            mean_accuracy: mean,
            std_error,
            per_episode,
        }
    }
}

/// Fails unless `dataset` and `head` share vocabulary and dimension.
pub fn check_head(dataset: &SupportSet, head: &ZeroShotHead) -> Result<()> {
    if dataset.vocab() != head.vocab() {
        return Err(Error::VocabMismatch);
    }
    if dataset.dim() != head.dim() {
        return Err(Error::DimMismatch {
            expected: head.dim(),
            actual: dataset.dim(),
        });
    }
    Ok(())
}

/// Runs `setup.episodes` episodes sequentially.
pub fn evaluate(
    cfg: &MethodConfig,
    dataset: &SupportSet,
    head: &ZeroShotHead,
    setup: &EvalSetup,
) -> Result<EvalSummary> {
    check_head(dataset, head)?;
    let per_episode = (0..setup.episodes)
        .map(|i| cfg.episode_accuracy(dataset, head, &setup.sample(dataset, i)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_accuracies(cfg.method, setup, per_episode))
}

/// [`evaluate`] at each shot count, sharing the base seed; ordered by `k`.
pub fn shot_curve(
    cfg: &MethodConfig,
    dataset: &SupportSet,
    head: &ZeroShotHead,
    setup: &EvalSetup,
    shots: &[usize],
) -> Result<Vec<(usize, EvalSummary)>> {
    let mut shots = shots.to_vec();
    shots.sort_unstable();
    shots.dedup();
    shots
        .into_iter()
        .map(|k| {
            let at_k = EvalSetup {
                k_shot: k,
                ..*setup
            };
            Ok((k, evaluate(cfg, dataset, head, &at_k)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{ClassVocabulary, EmbeddingSet};
    use alloc::vec;

    /// `classes` classes of `per_class` rows each; row `i` points along
    /// axis `label` with a small per-row tilt.
    fn toy(classes: usize, per_class: usize) -> (SupportSet, ZeroShotHead) {
        let dim = classes + 1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                let mut r = vec![0.0; dim];
                r[c] = 1.0;
                r[classes] = 0.01 * i as f64;
                rows.push(r);
                labels.push(c);
            }
        }
        let vocab = ClassVocabulary::numbered(classes);
        let text: Vec<Vec<f64>> = (0..classes)
            .map(|c| (0..dim).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let head = ZeroShotHead::new(
            &EmbeddingSet::from_rows(&text).unwrap(),
            vocab.clone(),
            100.0,
        )
        .unwrap();
        (
            SupportSet::new(EmbeddingSet::from_rows(&rows).unwrap(), labels, vocab).unwrap(),
            head,
        )
    }

    #[test]
    fn exact_fit_uses_every_row() {
        let (data, _) = toy(3, 5);
        let ep = sample_episode(&data, 3, 2, 3, 7).unwrap();
        let mut all: Vec<usize> = ep
            .support_indices
            .iter()
            .chain(&ep.query_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..15).collect::<Vec<_>>());
        assert!(ep
            .support_indices
            .iter()
            .all(|i| !ep.query_indices.contains(i)));
    }

    #[test]
    fn sampling_is_stratified_and_deterministic() {
        let (data, _) = toy(6, 10);
        let a = sample_episode(&data, 4, 3, 2, 99).unwrap();
        assert_eq!(a, sample_episode(&data, 4, 3, 2, 99).unwrap());
        assert_ne!(a, sample_episode(&data, 4, 3, 2, 100).unwrap());
        let support = a.support(&data).unwrap();
        assert_eq!(support.class_counts(), vec![3; 4]);
        assert_eq!(a.queries(&data).unwrap().class_counts(), vec![2; 4]);
        for (c, &global) in a.class_ids.iter().enumerate() {
            for i in 0..3 {
                assert_eq!(data.labels()[a.support_indices[c * 3 + i]], global);
            }
        }
    }

    #[test]
    fn queries_do_not_depend_on_shots() {
        let (data, _) = toy(5, 20);
        let a = sample_episode(&data, 3, 1, 4, 5).unwrap();
        let b = sample_episode(&data, 3, 8, 4, 5).unwrap();
        assert_eq!(a.class_ids, b.class_ids);
        assert_eq!(a.query_indices, b.query_indices);
    }

    #[test]
    fn sampling_errors() {
        let (data, _) = toy(3, 5);
        assert!(matches!(
            sample_episode(&data, 4, 1, 1, 0),
            Err(Error::InsufficientClasses { .. })
        ));
        assert!(matches!(
            sample_episode(&data, 2, 5, 1, 0),
            Err(Error::InsufficientExamples { .. })
        ));
        assert!(sample_episode(&data, 2, 0, 1, 0).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(
            "knn".parse::<Method>(),
            Err(Error::UnknownMethod("knn".into()))
        );
    }

    #[test]
    fn constant_predictor_scores_one_over_n() {
        // every query equidistant from all text rows: zsl ties resolve to class 0
        let classes = 4;
        let rows: Vec<Vec<f64>> = (0..classes * 3).map(|_| vec![1.0, 1.0, 1.0, 1.0]).collect();
        let labels: Vec<usize> = (0..classes * 3).map(|i| i / 3).collect();
        let vocab = ClassVocabulary::numbered(classes);
        let data = SupportSet::new(
            EmbeddingSet::from_rows(&rows).unwrap(),
            labels,
            vocab.clone(),
        )
        .unwrap();
        let text: Vec<Vec<f64>> = (0..classes)
            .map(|c| (0..4).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let head =
            ZeroShotHead::new(&EmbeddingSet::from_rows(&text).unwrap(), vocab, 100.0).unwrap();
        let setup = EvalSetup {
            queries_per_class: 2,
            ..EvalSetup::new(classes, 1, 10, 3)
        };
        let summary = evaluate(&MethodConfig::new(Method::Zsl), &data, &head, &setup).unwrap();
        assert!(summary.per_episode.iter().all(|&a| a == 0.25));
        assert_eq!(summary.std_error, 0.0);
    }

    #[test]
    fn evaluation_summary_statistics() {
        let (data, head) = toy(5, 12);
        let setup = EvalSetup::new(3, 2, 8, 11);
        for m in Method::ALL {
            let s = evaluate(&MethodConfig::new(m), &data, &head, &setup).unwrap();
            assert_eq!(s.episodes, 8);
            let mean = s.per_episode.iter().sum::<f64>() / 8.0;
            assert!((s.mean_accuracy - mean).abs() < 1e-12);
            assert!(s.per_episode.iter().all(|a| (0.0..=1.0).contains(a)));
            assert_eq!(
                s,
                evaluate(&MethodConfig::new(m), &data, &head, &setup).unwrap(),
                "{m}"
            );
        }
    }

    #[test]
    fn zsl_curve_is_flat() {
        let (data, head) = toy(5, 20);
        let setup = EvalSetup::new(3, 1, 6, 2);
        let curve = shot_curve(
            &MethodConfig::new(Method::Zsl),
            &data,
            &head,
            &setup,
            &[4, 1, 2],
        )
        .unwrap();
        assert_eq!(
            curve.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
            vec![1, 2, 4]
        );
        for (_, s) in &curve {
            assert_eq!(s.per_episode, curve[0].1.per_episode);
        }
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let (data, _) = toy(3, 4);
        let (_, other) = toy(4, 4);
        let setup = EvalSetup::new(2, 1, 1, 0);
        assert!(evaluate(&MethodConfig::new(Method::Zsl), &data, &other, &setup).is_err());
    }
}
