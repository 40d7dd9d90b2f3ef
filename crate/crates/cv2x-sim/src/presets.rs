//! Built-in experiment presets: the comparison sets the simulator is
//! typically run with, each a list of mechanism configurations sharing one
//! scenario.
//!
//! The `cbr20`-style presets use the reduced 100-vehicle scenario where the
//! controlled mechanisms settle around 20% channel load; `cbr60` uses the
//! full 0.46 veh/m density where load without control exceeds the adaptive
//! target.

use crate::config::RunConfig;
use crate::congestion::{ControllerKind, RriCrTableKind};

/// Names and one-line descriptions of the available presets.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "fig3",
            "grant-breaking pathology: no_dcc vs reactive with and without grant breaking",
        ),
        (
            "fig4",
            "rate-control variants: no_dcc, reactive, adaptive at 68% and 20% targets",
        ),
        (
            "pdrop",
            "packet dropping tables: no_dcc, drop_etsi, drop_3gpp, drop_aggressive",
        ),
        (
            "cbr20",
            "six-mechanism comparison at ~20% channel load (100 vehicles)",
        ),
        (
            "cbr60",
            "no_dcc, adaptive(68%) and rri_cr_limit in the overloaded channel",
        ),
        (
            "table4",
            "colliding-grant census: the cbr20 set plus the two 60%-load runs",
        ),
    ]
}

/// The full Table-style comparison scenario: 0.46 veh/m over 20 s.
fn dense(base: &RunConfig) -> RunConfig {
    let mut cfg = base.clone();
    cfg.scenario.density = 0.46;
    cfg.scenario.sim_duration_ms = 20_000;
    cfg.scenario.warmup_ms = 5_000;
    cfg
}

/// The overloaded scenario where the standardized tables bind: channel
/// load without control sits near 0.68.
fn overloaded(base: &RunConfig) -> RunConfig {
    let mut cfg = dense(base);
    cfg.scenario.density = 0.6;
    cfg
}

fn with_kind(mut cfg: RunConfig, kind: ControllerKind, label: &str) -> RunConfig {
    cfg.controller.kind = kind;
    cfg.label = label.to_string();
    cfg
}

fn adaptive(cfg: RunConfig, target: f64, label: &str) -> RunConfig {
    let mut cfg = with_kind(cfg, ControllerKind::Adaptive, label);
    cfg.controller.adaptive_target_cbr = target;
    cfg
}

/// The six 20%-load mechanisms of the comparative evaluation. RRI_CR-limit
/// runs on the threshold-shifted table here so its control point matches
/// the other aggressive mechanisms.
/// The adaptive run compares at the load the reactive machine actually
/// settles to in this model (~0.25-0.30), mirroring how the original
/// comparison matched the adaptive target to reactive's measured mean.
const ADAPTIVE_COMPARISON_TARGET: f64 = 0.30;

/// RRI_CR-limit on the shifted table controls against a slightly lower
/// boundary than packet dropping so its equilibrium stays in the 20%
/// band; both shifts remain ordinary config overrides.
const RRI_CR_AGGRESSIVE_SHIFT: f64 = 0.42;

fn cbr20_set(base: &RunConfig) -> Vec<RunConfig> {
    let d = dense(base);
    let mut rri_cr = with_kind(d.clone(), ControllerKind::RriCrLimit, "rri_cr_limit");
    rri_cr.controller.rri_cr_table = RriCrTableKind::Aggressive;
    rri_cr.controller.aggressive_cbr_shift = RRI_CR_AGGRESSIVE_SHIFT;
    vec![
        with_kind(d.clone(), ControllerKind::NoDcc, "no_dcc"),
        adaptive(d.clone(), ADAPTIVE_COMPARISON_TARGET, "adaptive"),
        with_kind(d.clone(), ControllerKind::Reactive, "reactive"),
        with_kind(d.clone(), ControllerKind::DropAggressive, "drop_aggressive"),
        with_kind(d.clone(), ControllerKind::RriLookup, "rri_lookup"),
        rri_cr,
    ]
}

/// The 60%-load trio on the full-density scenario.
fn cbr60_set(base: &RunConfig) -> Vec<RunConfig> {
    let d = overloaded(base);
    vec![
        with_kind(d.clone(), ControllerKind::NoDcc, "no_dcc"),
        adaptive(d.clone(), 0.68, "adaptive_68"),
        with_kind(d, ControllerKind::RriCrLimit, "rri_cr_limit"),
    ]
}

/// Expands a preset name into its run configurations, derived from `base`
/// (which carries seeds, output directory and trace flags).
pub fn build_preset(name: &str, base: &RunConfig) -> Option<Vec<RunConfig>> {
    let runs = match name {
        "fig3" => {
            let d = dense(base);
            let mut gb = with_kind(d.clone(), ControllerKind::Reactive, "reactive_gb");
            gb.controller.grant_breaking = true;
            vec![
                with_kind(d.clone(), ControllerKind::NoDcc, "no_dcc"),
                gb,
                with_kind(d, ControllerKind::Reactive, "reactive_no_gb"),
            ]
        }
        "fig4" => {
            let d = dense(base);
            vec![
                with_kind(d.clone(), ControllerKind::NoDcc, "no_dcc"),
                with_kind(d.clone(), ControllerKind::Reactive, "reactive"),
                adaptive(d.clone(), 0.68, "adaptive_68"),
                adaptive(d, 0.2, "adaptive_20"),
            ]
        }
        "pdrop" => {
            let d = dense(base);
            vec![
                with_kind(d.clone(), ControllerKind::NoDcc, "no_dcc"),
                with_kind(d.clone(), ControllerKind::DropEtsi, "drop_etsi"),
                with_kind(d.clone(), ControllerKind::Drop3gpp, "drop_3gpp"),
                with_kind(d, ControllerKind::DropAggressive, "drop_aggressive"),
            ]
        }
        "cbr20" => cbr20_set(base),
        "cbr60" => cbr60_set(base),
        "table4" => {
            let mut runs = cbr20_set(base);
            let sixty = cbr60_set(base);
            for mut cfg in sixty.into_iter().skip(1) {
                cfg.label = format!("{}_60pc", cfg.label);
                runs.push(cfg);
            }
            runs
        }
        _ => return None,
    };
    Some(runs)
}
