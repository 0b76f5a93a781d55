//! Derives the hump amplitudes stored in the presets.
//!
//! For each candidate hump shape this scales the peak so that the mean true
//! overall ATT of the inverted-U set-up is 0.128, then reports the static TWFE
//! relative bias over a handful of replications.
//!
//! Run with `cargo run --release -p didlab --example calibrate`.

use didlab::dgp::{calibrate_amplitude, generate_panel, true_att_overall, EffectShape, ScenarioConfig};
use didlab::fe::twfe_static;

const TARGET_ATT: f64 = 0.128;

fn setup(shape: EffectShape) -> ScenarioConfig {
    let mut c: ScenarioConfig = toml::from_str(
        r#"
        name = "calibration"
        [effect]
        shape = "step"
        amplitude = 1.0
        group_ratio = 0.5
        "#,
    )
    .expect("valid scenario");
    c.effect.shape = shape;
    c
}

fn main() -> didlab::Result<()> {
    let candidates = [
        ("inverted-u", EffectShape::InvertedU { peak_at: 2.0, half_width: 5.0, floor: None }),
        ("inverted-u floored", EffectShape::InvertedU { peak_at: 2.0, half_width: 5.0, floor: Some(0.0) }),
        ("ramp-fade", EffectShape::RampFade { rise: 4.0, decay: 5.0 }),
        ("fade-out", EffectShape::FadeOut { duration: 5.0 }),
    ];
    for (label, shape) in candidates {
        let mut c = setup(shape);
        let amplitude = calibrate_amplitude(&c, TARGET_ATT, 0..50)?;
        c.effect.amplitude = amplitude;
        let (mut est, mut truth) = (0.0, 0.0);
        let reps = 20;
        for seed in 1000..1000 + reps {
            let gp = generate_panel(&c, seed)?;
            est += twfe_static(&gp.panel)?.value;
            truth += true_att_overall(&gp);
        }
        let (est, truth) = (est / reps as f64, truth / reps as f64);
        println!(
            "{label:<20} amplitude {amplitude:.6}  truth {truth:.4}  twfe {est:.4}  rel_bias {:+.1}%  anticipation(0.5x) {:.6}",
            100.0 * (est - truth) / truth,
            0.5 * amplitude
        );
    }
    Ok(())
}
