//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use treff::eval::{evaluate_parallel, shot_curve_parallel};
use treff::format::{decode, encode};
use treff_core::baselines::{match_predict, prototypes, tip_predict, TipCache};
use treff_core::episodes::{EvalSetup, Method, MethodConfig};
use treff_core::synthgen::{self, calibrate_text_noise, SynthConfig};
use treff_core::{
    calm_affinity, cosine_matrix, grad_check, identity_init, treff_predict, treff_training_free,
    AdapterParams, ClassVocabulary, EmbeddingSet, FslScores, Matrix, Sharpness, SupportSet,
    TrainConfig, ZeroShotHead,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn gaussian(r: &mut Xoshiro256PlusPlus, rows: usize, dim: usize) -> EmbeddingSet {
    let data = (0..rows * dim).map(|_| r.sample(StandardNormal)).collect();
    EmbeddingSet::new(rows, dim, data).unwrap()
}

/// `n` classes with `k` gaussian supports each, plus random class text.
fn instance(
    r: &mut Xoshiro256PlusPlus,
    n: usize,
    k: usize,
    d: usize,
) -> (SupportSet, ZeroShotHead) {
    let labels = (0..n * k).map(|j| j / k).collect();
    let support =
        SupportSet::new(gaussian(r, n * k, d), labels, ClassVocabulary::numbered(n)).unwrap();
    let head = ZeroShotHead::new(
        &gaussian(r, n, d),
        ClassVocabulary::numbered(n),
        r.random_range(0.5..10.0),
    )
    .unwrap();
    (support, head)
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed < limit {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn identity_reduction() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let mut r = rng(i);
        let d = [2, 8, 64][i as usize % 3];
        let (m, n) = (r.random_range(1..8), r.random_range(1..8));
        let q = gaussian(&mut r, m, d);
        let s = gaussian(&mut r, n, d);
        let a = calm_affinity(&identity_init(d), &q, &s).map_err(|e| e.to_string())?;
        let c = cosine_matrix(&q, &s).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(a.matrix(), c.matrix()));
    }
    let detail = format!("max |diff| = {worst:.1e} over 50 instances");
    if worst > 1e-9 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(1), detail)
}

fn worked_example() -> Outcome {
    let vocab = ClassVocabulary::numbered(2);
    let support = SupportSet::new(
        EmbeddingSet::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
        vec![0, 1],
        vocab.clone(),
    )
    .unwrap();
    let text = EmbeddingSet::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
    let head = ZeroShotHead::new(&text, vocab, 1.0).unwrap();
    let q = EmbeddingSet::from_rows(&[&[0.8, 0.6]]).unwrap();
    let params = identity_init(2).with_sharpness(Sharpness::new(5.5).unwrap());
    let p = treff_predict(&params, &head, &support, &q).map_err(|e| e.to_string())?;
    let expected = [1.132871, 0.710803];
    let err = p
        .row(0)
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "P = [{:.6}, {:.6}], max error {err:.1e}",
        p.get(0, 0),
        p.get(0, 1)
    );
    if err <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (mut w_err, mut a_err): (f64, f64) = (0.0, 0.0);
    for i in 0..20u64 {
        let mut r = rng(100 + i);
        let (support, head) = instance(&mut r, 3, 2, 8);
        let mut w = Matrix::identity(8);
        for x in w.as_mut_slice() {
            *x += 0.3 * r.sample::<f64, _>(StandardNormal);
        }
        let fsl = if i % 2 == 0 {
            FslScores::Logits
        } else {
            FslScores::Probabilities
        };
        let params = AdapterParams::new(
            w,
            Sharpness::new(r.random_range(1.0..8.0)).unwrap(),
            r.random_range(0.1..3.0),
        )
        .unwrap()
        .with_fsl_scores(fsl);
        let cfg = TrainConfig {
            include_self: i % 4 < 2,
            ..TrainConfig::default()
        };
        let check = grad_check(&params, &head, &support, &cfg, 1e-6).map_err(|e| e.to_string())?;
        w_err = w_err.max(check.weight);
        a_err = a_err.max(check.alpha);
    }
    let detail = format!("max relative error W {w_err:.1e}, alpha {a_err:.1e}");
    if w_err >= 1e-4 || a_err >= 1e-4 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(10), detail)
}

fn calibrated_benchmark() -> (SynthConfig, f64) {
    let setup = EvalSetup::new(5, 16, 200, 1000);
    let grid: Vec<f64> = (8..=20).map(|i| i as f64 / 100.0).collect();
    let (noise, acc) = calibrate_text_noise(
        &SynthConfig::default(),
        ZeroShotHead::DEFAULT_TAU,
        &setup,
        &grid,
        0.80,
    )
    .unwrap();
    (
        SynthConfig {
            text_noise: noise,
            ..SynthConfig::default()
        },
        acc,
    )
}

fn table_ordering(cfg: &SynthConfig, calib_acc: f64) -> Outcome {
    let start = Instant::now();
    if !(0.75..=0.85).contains(&calib_acc) {
        return Err(format!(
            "calibration missed: zsl {calib_acc:.3} at text_noise {}",
            cfg.text_noise
        ));
    }
    let data = synthgen::generate(cfg).map_err(|e| e.to_string())?;
    let head = data
        .head(ZeroShotHead::DEFAULT_TAU)
        .map_err(|e| e.to_string())?;
    let setup = EvalSetup::new(5, 16, 200, 0);
    let acc = |m: Method| {
        evaluate_parallel(&MethodConfig::new(m), &data.audio, &head, &setup)
            .map(|s| s.mean_accuracy)
    };
    let (zsl, free, ft) = (
        acc(Method::Zsl).map_err(|e| e.to_string())?,
        acc(Method::TreffFree).map_err(|e| e.to_string())?,
        acc(Method::TreffFt).map_err(|e| e.to_string())?,
    );
    let detail = format!(
        "text_noise {:.2}: treff-ft {ft:.4} >= treff-free {free:.4} >= zsl {zsl:.4} + 0.02",
        cfg.text_noise
    );
    if !(ft >= free && free >= zsl + 0.02) {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(300), detail)
}

fn shot_trend(cfg: &SynthConfig) -> Outcome {
    let start = Instant::now();
    let data = synthgen::generate(cfg).map_err(|e| e.to_string())?;
    let head = data
        .head(ZeroShotHead::DEFAULT_TAU)
        .map_err(|e| e.to_string())?;
    let setup = EvalSetup::new(5, 1, 200, 0);
    let curve = shot_curve_parallel(
        &MethodConfig::new(Method::TreffFree),
        &data.audio,
        &head,
        &setup,
        &[1, 2, 4, 8, 16],
    )
    .map_err(|e| e.to_string())?;
    let points: Vec<String> = curve
        .iter()
        .map(|s| format!("k={}:{:.4}", s.k_shot, s.mean_accuracy))
        .collect();
    let detail = points.join(" ");
    for pair in curve.windows(2) {
        let pooled = (pair[0].std_error.powi(2) + pair[1].std_error.powi(2)).sqrt();
        if pair[1].mean_accuracy < pair[0].mean_accuracy - pooled {
            return Err(format!(
                "drop from k={} to k={} exceeds pooled SE {pooled:.4}: {detail}",
                pair[0].k_shot, pair[1].k_shot
            ));
        }
    }
    within(start.elapsed(), Duration::from_secs(300), detail)
}

fn tip_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let mut r = rng(200 + i);
        let d = r.random_range(2..16);
        let (n, k, m) = (
            r.random_range(2..6),
            r.random_range(1..5),
            r.random_range(1..6),
        );
        let (support, head) = instance(&mut r, n, k, d);
        let q = gaussian(&mut r, m, d);
        let cache =
            TipCache::from_support(&support, Sharpness::default()).map_err(|e| e.to_string())?;
        let tip = tip_predict(&cache, &head, &q).map_err(|e| e.to_string())?;
        let treff = treff_training_free(&head, &support, &q).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(tip.matrix(), treff.matrix()));
    }
    let detail = format!("max |diff| = {worst:.1e} over 50 instances");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_sanity() -> Outcome {
    for i in 0..100u64 {
        let mut r = rng(300 + i);
        let (n, d, m) = (
            r.random_range(2..8),
            r.random_range(2..16),
            r.random_range(1..6),
        );
        let (support, _) = instance(&mut r, n, 1, d);
        let q = gaussian(&mut r, m, d);
        let got = match_predict(&support, &q)
            .map_err(|e| e.to_string())?
            .argmax_rows();
        let cos = cosine_matrix(&q, support.embeddings()).map_err(|e| e.to_string())?;
        for (row, &g) in got.iter().enumerate() {
            let nn = (0..support.len())
                .max_by(|&a, &b| cos.get(row, a).total_cmp(&cos.get(row, b)).then(b.cmp(&a)))
                .unwrap();
            if g != support.labels()[nn] {
                return Err(format!(
                    "instance {i}, query {row}: match {g}, nearest neighbour {}",
                    support.labels()[nn]
                ));
            }
        }
        let protos = prototypes(&support, false).map_err(|e| e.to_string())?;
        for j in 0..support.len() {
            if protos.row(support.labels()[j]) != support.embeddings().row(j) {
                return Err(format!(
                    "instance {i}: prototype {} differs from its support",
                    support.labels()[j]
                ));
            }
        }
    }
    Ok("100 instances: match = nearest neighbour, prototype = lone support".into())
}

fn eval_determinism(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_treff");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&out.stderr).into_owned())
        }
    };
    let d = dir.to_str().unwrap();
    run(&[
        "synth",
        "--classes",
        "10",
        "--dim",
        "16",
        "--per-class",
        "15",
        "--seed",
        "5",
        "--out",
        d,
    ])?;
    let (audio, text) = (dir.join("audio.treff"), dir.join("text.treff"));
    for method in Method::ALL {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.join(format!("{method}-{rep}.json"));
            run(&[
                "eval",
                "--method",
                method.name(),
                "--audio",
                audio.to_str().unwrap(),
                "--text",
                text.to_str().unwrap(),
                "--n-way",
                "5",
                "--k-shot",
                "4",
                "--episodes",
                "8",
                "--seed",
                "3",
                "--epochs",
                "5",
                "--out",
                out.to_str().unwrap(),
            ])?;
            outputs.push(fs::read(out).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{method}: repeated eval differs"));
        }
    }
    Ok(format!(
        "{} methods byte-identical on repeat",
        Method::ALL.len()
    ))
}

fn format_round_trip() -> Outcome {
    let mut r = rng(400);
    for i in 0..1000usize {
        let (rows, dim) = match i {
            0 => (1, 1),
            1 => (1, 4096),
            _ => (r.random_range(1..12), r.random_range(1..48)),
        };
        let data: Vec<f64> = (0..rows * dim)
            .map(|_| loop {
                let v = f32::from_bits(r.random());
                if v.is_finite() {
                    break f64::from(v);
                }
            })
            .collect();
        let set = EmbeddingSet::new(rows, dim, data).unwrap();
        let bytes = if i % 2 == 0 {
            encode(&set, None, None)
        } else {
            let n = r.random_range(1..=rows);
            let labels: Vec<usize> = (0..rows).map(|j| j % n).collect();
            encode(&set, Some(&labels), Some(&ClassVocabulary::numbered(n)))
        }
        .map_err(|e| e.to_string())?;
        let back = decode(&bytes).map_err(|e| e.to_string())?;
        let same = back
            .set
            .matrix()
            .as_slice()
            .iter()
            .zip(set.matrix().as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same || back.set.rows() != rows || back.set.dim() != dim {
            return Err(format!("matrix {i} ({rows}×{dim}) changed on round trip"));
        }
    }
    Ok("1000 matrices bit-exact, including 1×1 and 1×4096".into())
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let (bench, calib_acc) = calibrated_benchmark();
    println!(
        "calibrated text_noise {:.2} (5-way zsl {calib_acc:.4})",
        bench.text_noise
    );

    let criteria: Vec<Criterion> = vec![
        ("identity reduction", Box::new(identity_reduction)),
        ("worked example", Box::new(worked_example)),
        ("gradient correctness", Box::new(gradient_correctness)),
        (
            "method ordering at 16 shots",
            Box::new(|| table_ordering(&bench, calib_acc)),
        ),
        ("accuracy trend over shots", Box::new(|| shot_trend(&bench))),
        ("training-free cache equivalence", Box::new(tip_equivalence)),
        ("baseline sanity", Box::new(baseline_sanity)),
        (
            "eval determinism",
            Box::new(|| eval_determinism(dir.path())),
        ),
        ("format round trip", Box::new(format_round_trip)),
    ];

    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.2?}]", start.elapsed());
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
