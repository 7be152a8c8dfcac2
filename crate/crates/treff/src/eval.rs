//! Episode-parallel evaluation. Each episode derives its own seed, so the
//! result equals the sequential evaluator for any worker count.

use rayon::prelude::*;
use treff_core::episodes::{check_head, EvalSetup, EvalSummary, MethodConfig};
use treff_core::{Result, SupportSet, ZeroShotHead};

pub fn evaluate_parallel(
    cfg: &MethodConfig,
    dataset: &SupportSet,
    head: &ZeroShotHead,
    setup: &EvalSetup,
) -> Result<EvalSummary> {
    check_head(dataset, head)?;
    let per_episode = (0..setup.episodes)
        .into_par_iter()
        .map(|i| cfg.episode_accuracy(dataset, head, &setup.sample(dataset, i)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_accuracies(cfg.method, setup, per_episode))
}

/// [`evaluate_parallel`] at each distinct shot count, ascending.
pub fn shot_curve_parallel(
    cfg: &MethodConfig,
    dataset: &SupportSet,
    head: &ZeroShotHead,
    setup: &EvalSetup,
    shots: &[usize],
) -> Result<Vec<EvalSummary>> {
    let mut shots = shots.to_vec();
    shots.sort_unstable();
    shots.dedup();
    shots
        .into_iter()
        .map(|k| {
            evaluate_parallel(
                cfg,
                dataset,
                head,
                &EvalSetup {
                    k_shot: k,
                    ..*setup
                },
            )
        })
        .collect()
}
