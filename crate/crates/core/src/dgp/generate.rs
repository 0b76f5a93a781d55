use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{ScenarioConfig, Timing};
use super::effect::{build_effect_path, EffectPath};
use crate::error::{Error, Result};
use crate::panel::{Cohort, PanelDataset};

/// Independent random stream `r` under `base_seed`.
///
/// Replication `r` of every scenario draws from the same stream, so panels
/// differ across scenarios only through the scenario parameters.
pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng
}

/// A simulated panel together with everything needed to score estimators.
#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: PanelDataset,
    /// Row-major true effect `δ_it`; zero outside the effect and anticipation windows.
    pub truth: Vec<f64>,
    pub late: Vec<bool>,
    pub alpha: Vec<f64>,
    pub path: EffectPath,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws `D_i ~ Bernoulli(1/(1+exp(-λ·α_i)))` for each unit.
pub fn assign_treatment<R: Rng + ?Sized>(alpha: &[f64], lambda_scale: f64, rng: &mut R) -> Vec<bool> {
    alpha
        .iter()
        .map(|&a| rng.random::<f64>() < logistic(lambda_scale * a))
        .collect()
}

/// First treated period for every unit with `treated[i]`; `None` for the rest.
///
/// In literal mode a treated unit may fail every per-period draw, in which
/// case it ends up never treated.
pub fn draw_timing<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    treated: &[bool],
    rng: &mut R,
) -> Vec<Option<u32>> {
    let t_max = config.n_periods as u32;
    match config.timing {
        Timing::Distributed { mean, sd, .. } => treated
            .iter()
            .map(|&d| {
                d.then(|| {
                    let z: f64 = rng.sample(StandardNormal);
                    clamp_onset((mean + sd * z).round(), t_max)
                })
            })
            .collect(),
        Timing::TwoTiming { early, late } => {
            let n_treated = treated.iter().filter(|&&d| d).count();
            let n_early = n_treated.div_ceil(2);
            let mut seen = 0;
            treated
                .iter()
                .map(|&d| {
                    d.then(|| {
                        seen += 1;
                        if seen <= n_early {
                            early
                        } else {
                            late
                        }
                    })
                })
                .collect()
        }
        Timing::Literal { mean, sd, .. } => {
            let phi = Normal::new(mean, sd).expect("validated sd");
            let probs: Vec<f64> = (1..=t_max)
                .map(|t| logistic(config.lambda_scale * phi.cdf(t as f64)))
                .collect();
            treated
                .iter()
                .map(|&d| {
                    if !d {
                        return None;
                    }
                    let mut onset = None;
                    for (k, &p) in probs.iter().enumerate() {
                        let hit = rng.random::<f64>() < p;
                        if hit && onset.is_none() {
                            onset = Some(k as u32 + 1);
                        }
                    }
                    onset
                })
                .collect()
        }
    }
}

/// Rounds-and-clamps a continuous onset draw into `[2, T-1]`.
pub fn clamp_onset(draw: f64, n_periods: u32) -> u32 {
    draw.clamp(2.0, (n_periods - 1) as f64) as u32
}

/// Simulates one panel from stream 0 of `seed`.
pub fn generate_panel(config: &ScenarioConfig, seed: u64) -> Result<GeneratedPanel> {
    generate_with_rng(config, &mut stream_rng(seed, 0))
}

/// Simulates one panel, consuming draws in a fixed order: unit effects,
/// treatment, timing, then idiosyncratic errors (row-major).
pub fn generate_with_rng<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<GeneratedPanel> {
    config.validate()?;
    let n = config.n_units;
    let t_max = config.n_periods;
    let alpha: Vec<f64> = (0..n)
        .map(|_| config.sigma_alpha * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let selected = assign_treatment(&alpha, config.lambda_scale, rng);
    let onsets = draw_timing(config, &selected, rng);
    let path = build_effect_path(
        config.effect.shape,
        config.effect.amplitude,
        config.anticipation,
        t_max,
    );
    if onsets.iter().all(Option::is_some) || onsets.iter().all(Option::is_none) {
        return Err(Error::DegenerateScenario);
    }

    let mut outcome = Vec::with_capacity(n * t_max);
    let mut treated = Vec::with_capacity(n * t_max);
    let mut truth = Vec::with_capacity(n * t_max);
    let mut late = Vec::with_capacity(n);
    for i in 0..n {
        let onset = onsets[i];
        let is_late = onset.is_some_and(|g| config.timing.is_late(g));
        let scale = if is_late { config.effect.group_ratio } else { 1.0 };
        let ever = if onset.is_some() { 1.0 } else { 0.0 };
        late.push(is_late);
        for t in 1..=t_max as u32 {
            let delta = onset.map_or(0.0, |g| scale * path.value(t as i32 - g as i32));
            let eps: f64 = rng.sample(StandardNormal);
            let tf = t as f64;
            outcome.push(alpha[i] + config.theta * tf + config.rho * tf * ever + delta + config.sigma_eps * eps);
            treated.push(onset.is_some_and(|g| t >= g));
            truth.push(delta);
        }
    }
    let units = (1..=n as i64).collect();
    let panel = PanelDataset::from_parts(units, t_max, outcome, treated)?;
    Ok(GeneratedPanel {
        panel,
        truth,
        late,
        alpha,
        path,
    })
}

/// Weighting of the true effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthScheme {
    Overall,
    ByEventTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSummary {
    Overall(f64),
    ByEventTime(BTreeMap<i32, f64>),
}

pub fn true_att(gp: &GeneratedPanel, scheme: TruthScheme) -> TruthSummary {
    match scheme {
        TruthScheme::Overall => TruthSummary::Overall(true_att_overall(gp)),
        TruthScheme::ByEventTime => TruthSummary::ByEventTime(true_att_by_event_time(gp)),
    }
}

/// Mean true effect over all treated cells (`e ≥ 0`).
pub fn true_att_overall(gp: &GeneratedPanel) -> f64 {
    let (sum, count) = gp
        .panel
        .treated()
        .iter()
        .zip(&gp.truth)
        .filter(|(&d, _)| d)
        .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
    sum / count as f64
}

/// Mean true effect at each event time over the cells of ever-treated units.
/// Negative event times carry the anticipation effects (zero without them).
pub fn true_att_by_event_time(gp: &GeneratedPanel) -> BTreeMap<i32, f64> {
    let t_max = gp.panel.n_periods();
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for i in 0..gp.panel.n_units() {
        let Cohort::Treated(g) = gp.panel.cohort(i) else {
            continue;
        };
        for t in 1..=t_max as u32 {
            let e = t as i32 - g as i32;
            let slot = acc.entry(e).or_insert((0.0, 0));
            slot.0 += gp.truth[i * t_max + t as usize - 1];
            slot.1 += 1;
        }
    }
    acc.into_iter().map(|(e, (s, c))| (e, s / c as f64)).collect()
}

/// Writes `unit,period,delta_true`.
pub fn write_truth_csv<W: Write>(gp: &GeneratedPanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["unit", "period", "delta_true"])?;
    let t_max = gp.panel.n_periods();
    for (cell, v) in gp.truth.iter().enumerate() {
        wtr.write_record([
            gp.panel.units()[cell / t_max].to_string(),
            (cell % t_max + 1).to_string(),
            v.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<truth csv>", e))?;
    Ok(())
}

/// Amplitude at which the expected overall true ATT equals `target`.
///
/// The true ATT is linear in the amplitude, so one pass at unit amplitude over
/// `seeds` panels fixes the constant.
pub fn calibrate_amplitude(config: &ScenarioConfig, target: f64, seeds: std::ops::Range<u64>) -> Result<f64> {
    let mut unit = config.clone();
    unit.effect.amplitude = 1.0;
    let mut total = 0.0;
    let count = seeds.end - seeds.start;
    for s in seeds {
        total += true_att_overall(&generate_panel(&unit, s)?);
    }
    Ok(target / (total / count as f64))
}
