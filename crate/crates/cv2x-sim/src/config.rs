//! Run configuration: defaults, the flat `[section]` / `key = value` file
//! format, and the resolved-config echo.
//!
//! Every field has a default, so an empty document is a valid
//! configuration. Unknown sections and keys are rejected with the
//! offending line number.

use std::path::PathBuf;

use crate::channel::RadioConfig;
use crate::congestion::{ControllerKind, ControllerParams, RriCrTableKind};
use crate::error::SimError;
use crate::scenario::ScenarioConfig;

/// Metric collection parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// PDR distance bin width in meters.
    pub pdr_bin_width_m: f64,
    /// Awareness / CBR series sampling period in milliseconds.
    pub sample_period_ms: u64,
    /// Awareness ring bounds in meters.
    pub awareness_ring_lo_m: f64,
    pub awareness_ring_hi_m: f64,
    /// CAM lifetime before a neighbour is forgotten.
    pub cam_lifetime_ms: u64,
    /// Receivers beyond this distance are not counted for PDR.
    pub pdr_range_cap_m: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            pdr_bin_width_m: 50.0,
            sample_period_ms: 100,
            awareness_ring_lo_m: 200.0,
            awareness_ring_hi_m: 300.0,
            cam_lifetime_ms: 1000,
            pdr_range_cap_m: 600.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.pdr_bin_width_m > 0.0) {
            return Err(SimError::config("pdr_bin_width_m", "must be > 0"));
        }
        if self.sample_period_ms == 0 {
            return Err(SimError::config("sample_period_ms", "must be > 0"));
        }
        if !(self.awareness_ring_lo_m < self.awareness_ring_hi_m) {
            return Err(SimError::config(
                "awareness_ring_lo_m",
                "ring lower bound must be below the upper bound",
            ));
        }
        if !(self.pdr_range_cap_m > 0.0) {
            return Err(SimError::config("pdr_range_cap_m", "must be > 0"));
        }
        Ok(())
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Output label of this mechanism/run (directory name, summary rows).
    pub label: String,
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub controller: ControllerParams,
    pub metrics: MetricsConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Emit the full per-event grant trace into grants.csv.
    pub trace_grants: bool,
    /// Emit the per-subframe channel trace (channel.csv).
    pub trace_channel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            label: String::new(),
            scenario: ScenarioConfig::default(),
            radio: RadioConfig::default(),
            controller: ControllerParams::default(),
            metrics: MetricsConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            trace_grants: false,
            trace_channel: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.scenario.validate()?;
        self.radio.validate()?;
        self.controller.validate()?;
        self.metrics.validate()?;
        if self.seeds.is_empty() {
            return Err(SimError::config("seeds", "need at least one seed"));
        }
        Ok(())
    }

    /// Label to use in outputs: explicit label or the controller kind.
    pub fn effective_label(&self) -> String {
        if self.label.is_empty() {
            self.controller.kind.as_str().to_string()
        } else {
            self.label.clone()
        }
    }

    /// Applies the reduced desk-scale preset: 100 vehicles on the same
    /// road, 20 s simulated, 5 s warmup.
    pub fn apply_desk_scale(&mut self) {
        self.scenario.density = 100.0 / self.scenario.road_length;
        self.scenario.sim_duration_ms = 20_000;
        self.scenario.warmup_ms = 5_000;
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn parse_err(line: usize, message: impl Into<String>) -> SimError {
    SimError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T, SimError> {
    value
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool, SimError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(
            line,
            format!("invalid value `{value}` for `{key}` (expected true/false)"),
        )),
    }
}

/// Parses a configuration document, applying defaults for anything not
/// mentioned, then validates the result.
pub fn parse_config(text: &str) -> Result<RunConfig, SimError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                .trim();
            match name {
                "scenario" | "radio" | "controller" | "metrics" | "run" => {
                    section = name.to_string();
                }
                _ => return Err(parse_err(line_no, format!("unknown section `[{name}]`"))),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, &section, key, value, line_no)?;
    }

    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), SimError> {
    match section {
        "scenario" => {
            let s = &mut cfg.scenario;
            match key {
                "road_length" => s.road_length = parse_num(value, key, line)?,
                "lanes_per_direction" => s.lanes_per_direction = parse_num(value, key, line)?,
                "lane_width" => s.lane_width = parse_num(value, key, line)?,
                "density" => s.density = parse_num(value, key, line)?,
                "speed" => s.speed = parse_num(value, key, line)?,
                "sim_duration_ms" => s.sim_duration_ms = parse_num(value, key, line)?,
                "warmup_ms" => s.warmup_ms = parse_num(value, key, line)?,
                "seed" => s.seed = parse_num(value, key, line)?,
                _ => return Err(parse_err(line, format!("unknown key `{key}` in [scenario]"))),
            }
        }
        "radio" => {
            let r = &mut cfg.radio;
            match key {
                "carrier_ghz" => r.carrier_ghz = parse_num(value, key, line)?,
                "bandwidth_mhz" => r.bandwidth_mhz = parse_num(value, key, line)?,
                "num_subchannels" => r.num_subchannels = parse_num(value, key, line)?,
                "rbs_per_subchannel" => r.rbs_per_subchannel = parse_num(value, key, line)?,
                "tx_power_dbm" => r.tx_power_dbm = parse_num(value, key, line)?,
                "noise_figure_db" => r.noise_figure_db = parse_num(value, key, line)?,
                "shadowing_sigma_db" => r.shadowing_sigma_db = parse_num(value, key, line)?,
                "antenna_height_m" => r.antenna_height_m = parse_num(value, key, line)?,
                "mcs_index" => r.mcs_index = parse_num(value, key, line)?,
                "sinr_threshold_db" => r.sinr_threshold_db = parse_num(value, key, line)?,
                "subchannels_per_tx" => r.subchannels_per_tx = parse_num(value, key, line)?,
                "rsrp_threshold_dbm" => r.rsrp_threshold_dbm = parse_num(value, key, line)?,
                "srssi_threshold_dbm" => r.srssi_threshold_dbm = parse_num(value, key, line)?,
                _ => return Err(parse_err(line, format!("unknown key `{key}` in [radio]"))),
            }
        }
        "controller" => {
            let c = &mut cfg.controller;
            match key {
                "kind" => {
                    c.kind = ControllerKind::parse(value).ok_or_else(|| {
                        parse_err(line, format!("unknown controller kind `{value}`"))
                    })?
                }
                "grant_breaking" => c.grant_breaking = parse_bool(value, key, line)?,
                "keep_probability" => c.keep_probability = parse_num(value, key, line)?,
                "default_rri_ms" => c.default_rri_ms = parse_num(value, key, line)?,
                "adaptive_target_cbr" => c.adaptive_target_cbr = parse_num(value, key, line)?,
                "adaptive_alpha" => c.adaptive_alpha = parse_num(value, key, line)?,
                "adaptive_gain_hz" => c.adaptive_gain_hz = parse_num(value, key, line)?,
                "adaptive_epoch_ms" => c.adaptive_epoch_ms = parse_num(value, key, line)?,
                "adaptive_cbr_smoothing" => {
                    c.adaptive_cbr_smoothing = parse_num(value, key, line)?
                }
                "rate_min_hz" => c.rate_min_hz = parse_num(value, key, line)?,
                "rate_max_hz" => c.rate_max_hz = parse_num(value, key, line)?,
                "etsi_priority" => c.etsi_priority = parse_num(value, key, line)?,
                "aggressive_cbr_shift" => c.aggressive_cbr_shift = parse_num(value, key, line)?,
                "rri_cr_table" => {
                    c.rri_cr_table = RriCrTableKind::parse(value).ok_or_else(|| {
                        parse_err(line, format!("unknown rri_cr_table `{value}`"))
                    })?
                }
                "hysteresis_up_ms" => c.hysteresis_up_ms = parse_num(value, key, line)?,
                "hysteresis_down_ms" => c.hysteresis_down_ms = parse_num(value, key, line)?,
                "hysteresis_down_jitter_ms" => {
                    c.hysteresis_down_jitter_ms = parse_num(value, key, line)?
                }
                "control_period_ms" => c.control_period_ms = parse_num(value, key, line)?,
                _ => {
                    return Err(parse_err(
                        line,
                        format!("unknown key `{key}` in [controller]"),
                    ))
                }
            }
        }
        "metrics" => {
            let m = &mut cfg.metrics;
            match key {
                "pdr_bin_width_m" => m.pdr_bin_width_m = parse_num(value, key, line)?,
                "sample_period_ms" => m.sample_period_ms = parse_num(value, key, line)?,
                "awareness_ring_lo_m" => m.awareness_ring_lo_m = parse_num(value, key, line)?,
                "awareness_ring_hi_m" => m.awareness_ring_hi_m = parse_num(value, key, line)?,
                "cam_lifetime_ms" => m.cam_lifetime_ms = parse_num(value, key, line)?,
                "pdr_range_cap_m" => m.pdr_range_cap_m = parse_num(value, key, line)?,
                _ => return Err(parse_err(line, format!("unknown key `{key}` in [metrics]"))),
            }
        }
        "run" => match key {
            "label" => cfg.label = value.to_string(),
            "seeds" => {
                let mut seeds = Vec::new();
                for part in value.split(',') {
                    seeds.push(parse_num(part.trim(), key, line)?);
                }
                cfg.seeds = seeds;
            }
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "trace_grants" => cfg.trace_grants = parse_bool(value, key, line)?,
            "trace_channel" => cfg.trace_channel = parse_bool(value, key, line)?,
            _ => return Err(parse_err(line, format!("unknown key `{key}` in [run]"))),
        },
        "" => {
            return Err(parse_err(
                line,
                format!("key `{key}` appears before any [section]"),
            ))
        }
        _ => unreachable!("section names validated on entry"),
    }
    Ok(())
}

/// Renders the fully resolved configuration; the output re-parses to an
/// identical `RunConfig`.
pub fn render_config(cfg: &RunConfig) -> String {
    let seeds = cfg
        .seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "# resolved cv2x-sim configuration\n\
         [scenario]\n\
         road_length = {}\n\
         lanes_per_direction = {}\n\
         lane_width = {}\n\
         density = {}\n\
         speed = {}\n\
         sim_duration_ms = {}\n\
         warmup_ms = {}\n\
         seed = {}\n\
         \n\
         [radio]\n\
         carrier_ghz = {}\n\
         bandwidth_mhz = {}\n\
         num_subchannels = {}\n\
         rbs_per_subchannel = {}\n\
         tx_power_dbm = {}\n\
         noise_figure_db = {}\n\
         shadowing_sigma_db = {}\n\
         antenna_height_m = {}\n\
         mcs_index = {}\n\
         sinr_threshold_db = {}\n\
         subchannels_per_tx = {}\n\
         rsrp_threshold_dbm = {}\n\
         srssi_threshold_dbm = {}\n\
         \n\
         [controller]\n\
         kind = {}\n\
         grant_breaking = {}\n\
         keep_probability = {}\n\
         default_rri_ms = {}\n\
         adaptive_target_cbr = {}\n\
         adaptive_alpha = {}\n\
         adaptive_gain_hz = {}\n\
         adaptive_epoch_ms = {}\n\
         adaptive_cbr_smoothing = {}\n\
         rate_min_hz = {}\n\
         rate_max_hz = {}\n\
         etsi_priority = {}\n\
         aggressive_cbr_shift = {}\n\
         rri_cr_table = {}\n\
         hysteresis_up_ms = {}\n\
         hysteresis_down_ms = {}\n\
         hysteresis_down_jitter_ms = {}\n\
         control_period_ms = {}\n\
         \n\
         [metrics]\n\
         pdr_bin_width_m = {}\n\
         sample_period_ms = {}\n\
         awareness_ring_lo_m = {}\n\
         awareness_ring_hi_m = {}\n\
         cam_lifetime_ms = {}\n\
         pdr_range_cap_m = {}\n\
         \n\
         [run]\n\
         label = {}\n\
         seeds = {}\n\
         output_dir = {}\n\
         trace_grants = {}\n\
         trace_channel = {}\n",
        cfg.scenario.road_length,
        cfg.scenario.lanes_per_direction,
        cfg.scenario.lane_width,
        cfg.scenario.density,
        cfg.scenario.speed,
        cfg.scenario.sim_duration_ms,
        cfg.scenario.warmup_ms,
        cfg.scenario.seed,
        cfg.radio.carrier_ghz,
        cfg.radio.bandwidth_mhz,
        cfg.radio.num_subchannels,
        cfg.radio.rbs_per_subchannel,
        cfg.radio.tx_power_dbm,
        cfg.radio.noise_figure_db,
        cfg.radio.shadowing_sigma_db,
        cfg.radio.antenna_height_m,
        cfg.radio.mcs_index,
        cfg.radio.sinr_threshold_db,
        cfg.radio.subchannels_per_tx,
        cfg.radio.rsrp_threshold_dbm,
        cfg.radio.srssi_threshold_dbm,
        cfg.controller.kind.as_str(),
        cfg.controller.grant_breaking,
        cfg.controller.keep_probability,
        cfg.controller.default_rri_ms,
        cfg.controller.adaptive_target_cbr,
        cfg.controller.adaptive_alpha,
        cfg.controller.adaptive_gain_hz,
        cfg.controller.adaptive_epoch_ms,
        cfg.controller.adaptive_cbr_smoothing,
        cfg.controller.rate_min_hz,
        cfg.controller.rate_max_hz,
        cfg.controller.etsi_priority,
        cfg.controller.aggressive_cbr_shift,
        cfg.controller.rri_cr_table.as_str(),
        cfg.controller.hysteresis_up_ms,
        cfg.controller.hysteresis_down_ms,
        cfg.controller.hysteresis_down_jitter_ms,
        cfg.controller.control_period_ms,
        cfg.metrics.pdr_bin_width_m,
        cfg.metrics.sample_period_ms,
        cfg.metrics.awareness_ring_lo_m,
        cfg.metrics.awareness_ring_hi_m,
        cfg.metrics.cam_lifetime_ms,
        cfg.metrics.pdr_range_cap_m,
        cfg.effective_label(),
        seeds,
        cfg.output_dir.display(),
        cfg.trace_grants,
        cfg.trace_channel,
    )
}
