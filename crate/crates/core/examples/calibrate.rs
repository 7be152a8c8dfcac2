//! Sweeps the text-noise variance of the default synthetic benchmark and
//! reports 5-way zero-shot accuracy at each grid point.
//!
//! cargo run --release -p treff-core --example calibrate

use treff_core::episodes::EvalSetup;
use treff_core::synthgen::{calibrate_text_noise, zsl_accuracy, SynthConfig};
use treff_core::ZeroShotHead;

fn main() {
    let setup = EvalSetup::new(5, 16, 200, 1000);
    let grid: Vec<f64> = (8..=20).map(|i| i as f64 / 100.0).collect();
    for &noise in &grid {
        let cfg = SynthConfig {
            text_noise: noise,
            ..SynthConfig::default()
        };
        let acc = zsl_accuracy(&cfg, ZeroShotHead::DEFAULT_TAU, &setup).expect("sweep");
        println!("text_noise={noise:.2} zsl={acc:.4}");
    }
    let (noise, acc) = calibrate_text_noise(
        &SynthConfig::default(),
        ZeroShotHead::DEFAULT_TAU,
        &setup,
        &grid,
        0.80,
    )
    .expect("calibration");
    println!("closest to 0.80: text_noise={noise:.2} (zsl={acc:.4})");
}
