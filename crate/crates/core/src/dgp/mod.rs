//! Synthetic staggered-adoption panels with known treatment effects.

mod config;
mod effect;
mod generate;

pub use config::{Anticipation, EffectShape, EffectSpec, ScenarioConfig, Timing};
pub use effect::{build_effect_path, EffectPath};
pub use generate::{
    assign_treatment, calibrate_amplitude, clamp_onset, draw_timing, generate_panel, generate_with_rng,
    stream_rng, true_att, true_att_by_event_time, true_att_overall, write_truth_csv, GeneratedPanel,
    TruthScheme, TruthSummary,
};
