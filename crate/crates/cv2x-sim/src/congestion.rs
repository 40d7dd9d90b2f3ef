//! Congestion control: CBR/CR measurement and the pluggable controller
//! variants that gate or re-time transmissions.
//!
//! Seven mechanisms are implemented behind one state machine: reactive and
//! adaptive rate control, three packet-dropping tables, and the two
//! RRI-adaptive schemes that re-time the SB-SPS grant instead of skipping
//! reserved resources.

use crate::error::SimError;

/// CBR window length in subframes.
pub const CBR_WINDOW: usize = 100;

/// Trailing half of the CR window (own past usage), in subframes.
pub const CR_PAST_WINDOW: usize = 500;

/// Look-ahead half of the CR window (projected grant usage), in subframes.
pub const CR_FUTURE_WINDOW: u64 = 499;

/// Full CR window used as the denominator.
pub const CR_TOTAL_WINDOW: f64 = 1000.0;

/// Resource reservation intervals a grant may use, in milliseconds.
pub const ALLOWED_RRIS: [u64; 10] = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];

pub fn rri_allowed(rri_ms: u64) -> bool {
    ALLOWED_RRIS.contains(&rri_ms)
}

// ---------------------------------------------------------------------------
// Channel busy ratio meter
// ---------------------------------------------------------------------------

/// Sliding-window channel busy ratio over the last [`CBR_WINDOW`] subframes.
///
/// A (subframe, subchannel) cell is busy iff its S-RSSI exceeded the
/// configured threshold. The window starts out quiet.
#[derive(Debug, Clone)]
pub struct CbrMeter {
    ring: Vec<bool>,
    head: usize,
    busy: usize,
    n_subchannels: usize,
}

impl CbrMeter {
    pub fn new(n_subchannels: usize) -> Self {
        Self {
            ring: vec![false; CBR_WINDOW * n_subchannels],
            head: 0,
            busy: 0,
            n_subchannels,
        }
    }

    /// Pushes one subframe worth of per-subchannel busy flags and returns
    /// the updated ratio.
    pub fn update(&mut self, subframe_busy_flags: &[bool]) -> f64 {
        assert_eq!(subframe_busy_flags.len(), self.n_subchannels);
        let base = self.head * self.n_subchannels;
        for (c, &flag) in subframe_busy_flags.iter().enumerate() {
            let cell = &mut self.ring[base + c];
            self.busy -= usize::from(*cell);
            *cell = flag;
            self.busy += usize::from(flag);
        }
        self.head = (self.head + 1) % CBR_WINDOW;
        self.cbr()
    }

    pub fn cbr(&self) -> f64 {
        self.busy as f64 / (CBR_WINDOW * self.n_subchannels) as f64
    }

    /// Raw window contents, oldest first; used by recount oracles.
    pub fn window(&self) -> Vec<Vec<bool>> {
        (0..CBR_WINDOW)
            .map(|i| {
                let idx = (self.head + i) % CBR_WINDOW;
                self.ring[idx * self.n_subchannels..(idx + 1) * self.n_subchannels].to_vec()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Channel occupancy ratio meter
// ---------------------------------------------------------------------------

/// The pieces of a grant the CR projection needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrProjection {
    /// Next reserved opportunity, strictly in the future.
    pub next_opportunity_ms: u64,
    pub rri_ms: u64,
    /// Remaining reserved opportunities.
    pub rrc: u32,
    /// Subchannels occupied per transmission.
    pub subchannels_per_tx: u32,
}

impl CrProjection {
    /// Subchannel uses the grant will make within (now, now + 499].
    pub fn projected_uses(&self, now_ms: u64) -> u64 {
        let horizon = now_ms + CR_FUTURE_WINDOW;
        if self.next_opportunity_ms > horizon || self.rrc == 0 {
            return 0;
        }
        let fits = (horizon - self.next_opportunity_ms) / self.rri_ms + 1;
        fits.min(self.rrc as u64) * self.subchannels_per_tx as u64
    }
}

/// Channel occupancy ratio: own subchannel use over the trailing
/// [`CR_PAST_WINDOW`] subframes plus the projected use of the current grant
/// over the next [`CR_FUTURE_WINDOW`], against the full 1000-subframe window.
#[derive(Debug, Clone)]
pub struct CrMeter {
    usage: Vec<u16>,
    head: usize,
    past_sum: u64,
    n_subchannels: usize,
    cr: f64,
}

impl CrMeter {
    pub fn new(n_subchannels: usize) -> Self {
        Self {
            usage: vec![0; CR_PAST_WINDOW],
            head: 0,
            past_sum: 0,
            n_subchannels,
            cr: 0.0,
        }
    }

    /// Records this subframe's own subchannel use and recomputes CR against
    /// the current grant (if any).
    pub fn update(&mut self, used_now: u32, grant: Option<CrProjection>, now_ms: u64) -> f64 {
        let slot = &mut self.usage[self.head];
        self.past_sum -= *slot as u64;
        *slot = used_now as u16;
        self.past_sum += used_now as u64;
        self.head = (self.head + 1) % CR_PAST_WINDOW;

        let projected = grant.map_or(0, |g| g.projected_uses(now_ms));
        self.cr = (self.past_sum + projected) as f64
            / (CR_TOTAL_WINDOW * self.n_subchannels as f64);
        self.cr
    }

    pub fn cr(&self) -> f64 {
        self.cr
    }

    /// Raw usage window, oldest first; used by recount oracles.
    pub fn window(&self) -> Vec<u16> {
        (0..CR_PAST_WINDOW)
            .map(|i| self.usage[(self.head + i) % CR_PAST_WINDOW])
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Standardized lookup tables
// ---------------------------------------------------------------------------

/// Reactive DCC states, ordered by rising channel load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReactiveState {
    Relaxed,
    Active1,
    Active2,
    Active3,
    Restrictive,
}

impl std::fmt::Display for ReactiveState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ReactiveState::Relaxed => "relaxed",
            ReactiveState::Active1 => "active1",
            ReactiveState::Active2 => "active2",
            ReactiveState::Active3 => "active3",
            ReactiveState::Restrictive => "restrictive",
        };
        f.write_str(s)
    }
}

/// Reactive DCC table: CBR range to (state, T_off). Intervals are
/// half-open [lo, hi), the row lower in the table winning at a shared edge.
pub fn reactive_lookup(cbr: f64) -> (ReactiveState, u64) {
    if cbr < 0.3 {
        (ReactiveState::Relaxed, 100)
    } else if cbr < 0.4 {
        (ReactiveState::Active1, 200)
    } else if cbr < 0.5 {
        (ReactiveState::Active2, 400)
    } else if cbr < 0.6 {
        (ReactiveState::Active3, 500)
    } else {
        (ReactiveState::Restrictive, 1000)
    }
}

/// Which CR-limit table a drop-based or RRI_CR-limit controller consults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrTable {
    /// Per-priority limits; `priority` in 1..=8.
    Etsi { priority: u8 },
    /// The flat working-group table.
    Gpp3,
    /// The flat table with every CBR threshold lowered by `shift`.
    Aggressive { shift: f64 },
}

/// CBR boundaries and the limit that applies above each, for the flat
/// table. A row covers (boundary[i], boundary[i+1]]; below the first
/// boundary there is no limit. The printed table leaves (0.775, 0.8]
/// unassigned; the neighbouring 1.2e-3 limit is carried across the gap.
const GPP3_STEPS: [(f64, f64); 10] = [
    (0.65, 1.6e-3),
    (0.675, 1.5e-3),
    (0.70, 1.4e-3),
    (0.725, 1.3e-3),
    (0.75, 1.2e-3),
    (0.775, 1.2e-3),
    (0.80, 1.1e-3),
    (0.825, 1.1e-3),
    (0.85, 1.0e-3),
    (0.875, 0.8e-3),
];

fn stepped_limit(cbr: f64, shift: f64) -> Option<f64> {
    let mut limit = None;
    for (boundary, value) in GPP3_STEPS {
        if cbr > boundary - shift {
            limit = Some(value);
        }
    }
    limit
}

/// Maximum CR limit for the measured CBR, or `None` when the table imposes
/// no limit. Intervals are half-open (lo, hi].
pub fn cr_limit(table: CrTable, cbr: f64) -> Result<Option<f64>, SimError> {
    match table {
        CrTable::Gpp3 => Ok(stepped_limit(cbr, 0.0)),
        CrTable::Aggressive { shift } => Ok(stepped_limit(cbr, shift)),
        CrTable::Etsi { priority } => {
            let column = match priority {
                1..=2 => 0,
                3..=5 => 1,
                6..=8 => 2,
                _ => {
                    return Err(SimError::config(
                        "etsi_priority",
                        "priority must be in 1..=8",
                    ))
                }
            };
            // Rows as printed, including the 0.8 < CBR <= 1 oddity where the
            // priority 3-5 limit exceeds priority 1-2.
            let row: [Option<f64>; 3] = if cbr <= 0.3 {
                [None, None, None]
            } else if cbr <= 0.65 {
                [None, Some(0.03), Some(0.02)]
            } else if cbr <= 0.8 {
                [Some(0.02), Some(0.006), Some(0.004)]
            } else {
                [Some(0.002), Some(0.003), Some(0.002)]
            };
            Ok(row[column])
        }
    }
}

/// Reactive T_off values reinterpreted as resource reservation intervals.
pub fn rri_lookup_target(cbr: f64) -> u64 {
    if cbr < 0.3 {
        100
    } else if cbr < 0.4 {
        200
    } else if cbr < 0.5 {
        400
    } else if cbr < 0.6 {
        500
    } else {
        1000
    }
}

/// Smallest allowed RRI whose steady-state CR stays within the table limit:
/// s * (1000/RRI) / (1000 * n) <= limit. Without a limit the default RRI
/// applies; an unreachable limit clamps to the largest RRI.
pub fn rri_crlimit_target(
    cbr: f64,
    subchannels_per_tx: u32,
    num_subchannels: u32,
    table: CrTable,
    default_rri_ms: u64,
) -> Result<u64, SimError> {
    let Some(limit) = cr_limit(table, cbr)? else {
        return Ok(default_rri_ms);
    };
    for rri in ALLOWED_RRIS {
        let cr = subchannels_per_tx as f64 * (1000.0 / rri as f64)
            / (1000.0 * num_subchannels as f64);
        if cr <= limit + 1e-12 {
            return Ok(rri);
        }
    }
    Ok(*ALLOWED_RRIS.last().unwrap())
}

// ---------------------------------------------------------------------------
// Controller state machine
// ---------------------------------------------------------------------------

/// Congestion control mechanism selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    NoDcc,
    Reactive,
    Adaptive,
    DropEtsi,
    Drop3gpp,
    DropAggressive,
    RriLookup,
    RriCrLimit,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::NoDcc => "no_dcc",
            ControllerKind::Reactive => "reactive",
            ControllerKind::Adaptive => "adaptive",
            ControllerKind::DropEtsi => "drop_etsi",
            ControllerKind::Drop3gpp => "drop_3gpp",
            ControllerKind::DropAggressive => "drop_aggressive",
            ControllerKind::RriLookup => "rri_lookup",
            ControllerKind::RriCrLimit => "rri_cr_limit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "no_dcc" => ControllerKind::NoDcc,
            "reactive" => ControllerKind::Reactive,
            "adaptive" => ControllerKind::Adaptive,
            "drop_etsi" => ControllerKind::DropEtsi,
            "drop_3gpp" => ControllerKind::Drop3gpp,
            "drop_aggressive" => ControllerKind::DropAggressive,
            "rri_lookup" => ControllerKind::RriLookup,
            "rri_cr_limit" => ControllerKind::RriCrLimit,
            _ => return None,
        })
    }

    /// RRI-adaptive mechanisms re-time the grant and never gate packets.
    pub fn is_rri_adaptive(&self) -> bool {
        matches!(self, ControllerKind::RriLookup | ControllerKind::RriCrLimit)
    }
}

/// Tunables of the controller layer; defaults follow the standardized
/// values where they exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub kind: ControllerKind,
    pub grant_breaking: bool,
    pub keep_probability: f64,
    pub default_rri_ms: u64,
    /// Adaptive rate control.
    pub adaptive_target_cbr: f64,
    pub adaptive_alpha: f64,
    pub adaptive_gain_hz: f64,
    pub adaptive_epoch_ms: u64,
    /// Weight of the previous smoothed CBR in the adaptive controller's
    /// input filter (0 = raw samples).
    pub adaptive_cbr_smoothing: f64,
    pub rate_min_hz: f64,
    pub rate_max_hz: f64,
    /// Packet dropping.
    pub etsi_priority: u8,
    pub aggressive_cbr_shift: f64,
    /// Table consulted by RRI_CR-limit.
    pub rri_cr_table: RriCrTableKind,
    /// RRI hysteresis: raise after 1 s over, lower after 5 s under.
    pub hysteresis_up_ms: u64,
    pub hysteresis_down_ms: u64,
    /// Extra per-vehicle random dwell added to the lowering hysteresis,
    /// drawn fresh each time the timer arms. Staggers RRI descents across
    /// the fleet so the population does not step down in lockstep.
    pub hysteresis_down_jitter_ms: u64,
    /// Controller CBR sampling period.
    pub control_period_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RriCrTableKind {
    Etsi,
    Gpp3,
    Aggressive,
}

impl RriCrTableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RriCrTableKind::Etsi => "etsi",
            RriCrTableKind::Gpp3 => "gpp3",
            RriCrTableKind::Aggressive => "aggressive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "etsi" => RriCrTableKind::Etsi,
            "gpp3" => RriCrTableKind::Gpp3,
            "aggressive" => RriCrTableKind::Aggressive,
            _ => return None,
        })
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            kind: ControllerKind::NoDcc,
            grant_breaking: false,
            keep_probability: 0.0,
            default_rri_ms: 100,
            adaptive_target_cbr: 0.68,
            adaptive_alpha: 0.1,
            adaptive_gain_hz: 50.0,
            adaptive_epoch_ms: 200,
            adaptive_cbr_smoothing: 0.8,
            rate_min_hz: 1.0,
            rate_max_hz: 10.0,
            etsi_priority: 7,
            aggressive_cbr_shift: 0.30,
            rri_cr_table: RriCrTableKind::Gpp3,
            hysteresis_up_ms: 1000,
            hysteresis_down_ms: 5000,
            hysteresis_down_jitter_ms: 5000,
            control_period_ms: 100,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(SimError::config("keep_probability", "must be in [0, 1]"));
        }
        if !rri_allowed(self.default_rri_ms) {
            return Err(SimError::config(
                "default_rri_ms",
                "must be a multiple of 100 in [100, 1000]",
            ));
        }
        if !(0.0..=1.0).contains(&self.adaptive_target_cbr) {
            return Err(SimError::config("adaptive_target_cbr", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.adaptive_alpha) {
            return Err(SimError::config("adaptive_alpha", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adaptive_cbr_smoothing) {
            return Err(SimError::config(
                "adaptive_cbr_smoothing",
                "must be in [0, 1)",
            ));
        }
        if self.rate_min_hz <= 0.0 || self.rate_max_hz < self.rate_min_hz {
            return Err(SimError::config(
                "rate_min_hz",
                "need 0 < rate_min_hz <= rate_max_hz",
            ));
        }
        if !(1..=8).contains(&self.etsi_priority) {
            return Err(SimError::config("etsi_priority", "must be in 1..=8"));
        }
        if !(0.0..1.0).contains(&self.aggressive_cbr_shift) {
            return Err(SimError::config(
                "aggressive_cbr_shift",
                "must be in [0, 1)",
            ));
        }
        if self.control_period_ms == 0 || self.adaptive_epoch_ms == 0 {
            return Err(SimError::config("control_period_ms", "must be > 0"));
        }
        Ok(())
    }

    fn drop_table(&self) -> Option<CrTable> {
        match self.kind {
            ControllerKind::DropEtsi => Some(CrTable::Etsi {
                priority: self.etsi_priority,
            }),
            ControllerKind::Drop3gpp => Some(CrTable::Gpp3),
            ControllerKind::DropAggressive => Some(CrTable::Aggressive {
                shift: self.aggressive_cbr_shift,
            }),
            _ => None,
        }
    }

    fn rri_cr_table(&self) -> CrTable {
        match self.rri_cr_table {
            RriCrTableKind::Etsi => CrTable::Etsi {
                priority: self.etsi_priority,
            },
            RriCrTableKind::Gpp3 => CrTable::Gpp3,
            RriCrTableKind::Aggressive => CrTable::Aggressive {
                shift: self.aggressive_cbr_shift,
            },
        }
    }
}

/// Verdict for a packet that is ready at a reserved opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Transmit,
    /// Rate control: hold the packet until the given time.
    Delay { until_ms: u64 },
    /// Packet dropping: discard it.
    Drop,
}

/// One clamped step of the adaptive rate update.
pub fn adaptive_update(
    rate_hz: f64,
    cbr: f64,
    target: f64,
    alpha: f64,
    gain_hz: f64,
    rate_min: f64,
    rate_max: f64,
) -> f64 {
    ((1.0 - alpha) * rate_hz + gain_hz * (target - cbr)).clamp(rate_min, rate_max)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-vehicle congestion controller state.
#[derive(Debug, Clone)]
pub struct Controller {
    params: ControllerParams,
    subchannels_per_tx: u32,
    num_subchannels: u32,
    /// Decorrelates the per-vehicle hysteresis jitter draws.
    desync_salt: u64,
    /// Reactive machine.
    pub reactive_state: ReactiveState,
    t_off_ms: f64,
    /// Adaptive machine.
    pub adaptive_rate_hz: f64,
    cbr_filtered: Option<f64>,
    last_epoch_ms: Option<u64>,
    /// RRI machine.
    pub current_rri_ms: u64,
    over_threshold_since: Option<u64>,
    /// Arm time and drawn dwell of the lowering timer.
    under_threshold_since: Option<(u64, u64)>,
    /// Shared.
    pub last_tx_ms: Option<u64>,
    sampled_cbr: f64,
    sampled_cr: f64,
}

impl Controller {
    pub fn new(
        params: ControllerParams,
        subchannels_per_tx: u32,
        num_subchannels: u32,
        desync_salt: u64,
    ) -> Self {
        let rate = params.rate_max_hz;
        let rri = params.default_rri_ms;
        Self {
            params,
            subchannels_per_tx,
            num_subchannels,
            desync_salt,
            reactive_state: ReactiveState::Relaxed,
            t_off_ms: 100.0,
            adaptive_rate_hz: rate,
            cbr_filtered: None,
            last_epoch_ms: None,
            current_rri_ms: rri,
            over_threshold_since: None,
            under_threshold_since: None,
            last_tx_ms: None,
            sampled_cbr: 0.0,
            sampled_cr: 0.0,
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.params.kind
    }

    pub fn sampled_cbr(&self) -> f64 {
        self.sampled_cbr
    }

    pub fn sampled_cr(&self) -> f64 {
        self.sampled_cr
    }

    /// Feeds one 100 ms CBR/CR sample into the controller.
    pub fn on_sample(&mut self, cbr: f64, cr: f64, now_ms: u64) -> Result<(), SimError> {
        self.sampled_cbr = cbr;
        self.sampled_cr = cr;
        match self.params.kind {
            ControllerKind::NoDcc
            | ControllerKind::DropEtsi
            | ControllerKind::Drop3gpp
            | ControllerKind::DropAggressive => {}
            ControllerKind::Reactive => {
                let (state, t_off) = reactive_lookup(cbr);
                self.reactive_state = state;
                self.t_off_ms = t_off as f64;
            }
            ControllerKind::Adaptive => {
                let smoothing = self.params.adaptive_cbr_smoothing;
                let filtered = match self.cbr_filtered {
                    Some(prev) => smoothing * prev + (1.0 - smoothing) * cbr,
                    None => cbr,
                };
                self.cbr_filtered = Some(filtered);
                let due = match self.last_epoch_ms {
                    Some(last) => now_ms >= last + self.params.adaptive_epoch_ms,
                    None => true,
                };
                if due {
                    self.adaptive_rate_hz = adaptive_update(
                        self.adaptive_rate_hz,
                        filtered,
                        self.params.adaptive_target_cbr,
                        self.params.adaptive_alpha,
                        self.params.adaptive_gain_hz,
                        self.params.rate_min_hz,
                        self.params.rate_max_hz,
                    );
                    self.last_epoch_ms = Some(now_ms);
                }
            }
            ControllerKind::RriLookup => {
                let desired = rri_lookup_target(cbr);
                self.hysteresis_step(desired, now_ms);
            }
            ControllerKind::RriCrLimit => {
                let desired = rri_crlimit_target(
                    cbr,
                    self.subchannels_per_tx,
                    self.num_subchannels,
                    self.params.rri_cr_table(),
                    self.params.default_rri_ms,
                )?;
                self.hysteresis_step(desired, now_ms);
            }
        }
        Ok(())
    }

    /// Applies the 1 s / 5 s averaging rule to the instantaneous RRI
    /// target. Lowering dwells at least the configured 5 s plus a
    /// per-arming random share of the jitter, so descents spread out
    /// across the fleet instead of happening in lockstep.
    fn hysteresis_step(&mut self, desired_rri_ms: u64, now_ms: u64) -> u64 {
        if desired_rri_ms > self.current_rri_ms {
            self.under_threshold_since = None;
            match self.over_threshold_since {
                None => self.over_threshold_since = Some(now_ms),
                Some(since) if now_ms - since >= self.params.hysteresis_up_ms => {
                    self.current_rri_ms = desired_rri_ms;
                    self.over_threshold_since = None;
                }
                Some(_) => {}
            }
        } else if desired_rri_ms < self.current_rri_ms {
            self.over_threshold_since = None;
            match self.under_threshold_since {
                None => {
                    let dwell = self.params.hysteresis_down_ms
                        + if self.params.hysteresis_down_jitter_ms > 0 {
                            splitmix64(self.desync_salt ^ now_ms)
                                % self.params.hysteresis_down_jitter_ms
                        } else {
                            0
                        };
                    self.under_threshold_since = Some((now_ms, dwell));
                }
                Some((since, dwell)) if now_ms - since >= dwell => {
                    self.current_rri_ms = desired_rri_ms;
                    self.under_threshold_since = None;
                }
                Some(_) => {}
            }
        } else {
            self.over_threshold_since = None;
            self.under_threshold_since = None;
        }
        self.current_rri_ms
    }

    /// Gate decision for a packet ready at a reserved opportunity.
    pub fn gate_packet(&self, now_ms: u64) -> GateDecision {
        match self.params.kind {
            ControllerKind::NoDcc | ControllerKind::RriLookup | ControllerKind::RriCrLimit => {
                GateDecision::Transmit
            }
            ControllerKind::Reactive | ControllerKind::Adaptive => {
                let t_off = if self.params.kind == ControllerKind::Reactive {
                    self.t_off_ms
                } else {
                    1000.0 / self.adaptive_rate_hz
                };
                match self.last_tx_ms {
                    Some(last) if ((now_ms - last) as f64) < t_off => GateDecision::Delay {
                        until_ms: last + t_off.ceil() as u64,
                    },
                    _ => GateDecision::Transmit,
                }
            }
            ControllerKind::DropEtsi | ControllerKind::Drop3gpp | ControllerKind::DropAggressive => {
                let table = self.params.drop_table().expect("drop controller");
                let limit = cr_limit(table, self.sampled_cbr).expect("validated priority");
                match limit {
                    Some(lim) if self.sampled_cr > lim => GateDecision::Drop,
                    _ => GateDecision::Transmit,
                }
            }
        }
    }

    pub fn note_transmission(&mut self, now_ms: u64) {
        self.last_tx_ms = Some(now_ms);
    }

    /// The RRI this controller wants grants to run at.
    pub fn target_rri_ms(&self) -> u64 {
        if self.params.kind.is_rri_adaptive() {
            self.current_rri_ms
        } else {
            self.params.default_rri_ms
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // -- meters ------------------------------------------------------------

    fn brute_force_cbr(window: &[Vec<bool>]) -> f64 {
        let busy: usize = window
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count())
            .sum();
        let cells: usize = window.iter().map(Vec::len).sum();
        busy as f64 / cells as f64
    }

    #[test]
    fn cbr_quiet_and_saturated() {
        let mut m = CbrMeter::new(3);
        for _ in 0..CBR_WINDOW {
            m.update(&[false, false, false]);
        }
        assert_eq!(m.cbr(), 0.0);
        for _ in 0..CBR_WINDOW {
            m.update(&[true, true, true]);
        }
        assert_eq!(m.cbr(), 1.0);
    }

    #[test]
    fn cbr_60_of_300_cells() {
        let mut m = CbrMeter::new(3);
        // 20 subframes with all three subchannels busy, 80 quiet.
        for i in 0..CBR_WINDOW {
            let busy = i < 20;
            m.update(&[busy, busy, busy]);
        }
        assert_abs_diff_eq!(m.cbr(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(brute_force_cbr(&m.window()), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn cbr_incremental_matches_recount_under_random_traffic() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut m = CbrMeter::new(3);
        for step in 0..700 {
            let flags = [rng.gen_bool(0.4), rng.gen_bool(0.1), rng.gen_bool(0.7)];
            let cbr = m.update(&flags);
            if step % 100 == 0 {
                assert_eq!(cbr, brute_force_cbr(&m.window()));
            }
        }
    }

    #[test]
    fn cr_empty_is_zero() {
        let mut m = CrMeter::new(3);
        assert_eq!(m.update(0, None, 0), 0.0);
    }

    fn steady_state_cr(rri: u64) -> f64 {
        let mut m = CrMeter::new(3);
        let mut cr = 0.0;
        // Transmissions on two subchannels at t = 50 (mod rri).
        for t in 0..1500u64 {
            let phase = t % rri;
            let used = if phase == 50 { 2 } else { 0 };
            let next = if phase < 50 {
                t - phase + 50
            } else {
                t - phase + rri + 50
            };
            let grant = CrProjection {
                next_opportunity_ms: next,
                rri_ms: rri,
                rrc: 10,
                subchannels_per_tx: 2,
            };
            cr = m.update(used, Some(grant), t);
        }
        cr
    }

    #[test]
    fn cr_steady_state_closed_form() {
        // s * (1000/RRI) / (1000 * n): 2 subchannels per tx, 3 subchannels.
        assert_abs_diff_eq!(steady_state_cr(100), 20.0 / 3000.0, epsilon = 1e-12);
        assert_abs_diff_eq!(steady_state_cr(500), 4.0 / 3000.0, epsilon = 1e-12);
    }

    #[test]
    fn cr_projection_respects_rrc() {
        let g = CrProjection {
            next_opportunity_ms: 100,
            rri_ms: 100,
            rrc: 2,
            subchannels_per_tx: 2,
        };
        // Window (0, 499] holds 4 opportunities but only 2 remain.
        assert_eq!(g.projected_uses(0), 4);
        let far = CrProjection {
            next_opportunity_ms: 600,
            ..g
        };
        assert_eq!(far.projected_uses(0), 0);
    }

    // -- tables ------------------------------------------------------------

    #[test]
    fn reactive_table_rows() {
        assert_eq!(reactive_lookup(0.25), (ReactiveState::Relaxed, 100));
        assert_eq!(reactive_lookup(0.35), (ReactiveState::Active1, 200));
        assert_eq!(reactive_lookup(0.45), (ReactiveState::Active2, 400));
        assert_eq!(reactive_lookup(0.55), (ReactiveState::Active3, 500));
        assert_eq!(reactive_lookup(0.70), (ReactiveState::Restrictive, 1000));
    }

    #[test]
    fn reactive_table_edges() {
        assert_eq!(reactive_lookup(0.0).0, ReactiveState::Relaxed);
        assert_eq!(reactive_lookup(0.3).0, ReactiveState::Active1);
        assert_eq!(reactive_lookup(0.4).0, ReactiveState::Active2);
        assert_eq!(reactive_lookup(0.5).0, ReactiveState::Active3);
        assert_eq!(reactive_lookup(0.6).0, ReactiveState::Restrictive);
        assert_eq!(reactive_lookup(1.0).0, ReactiveState::Restrictive);
    }

    #[test]
    fn etsi_cr_limits() {
        let p68 = CrTable::Etsi { priority: 7 };
        assert_eq!(cr_limit(p68, 0.2).unwrap(), None);
        assert_eq!(cr_limit(p68, 0.5).unwrap(), Some(0.02));
        assert_eq!(cr_limit(p68, 0.7).unwrap(), Some(0.004));
        assert_eq!(cr_limit(p68, 0.9).unwrap(), Some(0.002));

        let p12 = CrTable::Etsi { priority: 1 };
        assert_eq!(cr_limit(p12, 0.5).unwrap(), None);
        assert_eq!(cr_limit(p12, 0.7).unwrap(), Some(0.02));

        // (lo, hi] edges: 0.3 still unlimited, 0.65 still in the second row.
        assert_eq!(cr_limit(p68, 0.3).unwrap(), None);
        assert_eq!(cr_limit(p68, 0.65).unwrap(), Some(0.02));
        assert_eq!(cr_limit(p68, 0.8).unwrap(), Some(0.004));
    }

    #[test]
    fn gpp3_cr_limits() {
        assert_eq!(cr_limit(CrTable::Gpp3, 0.5).unwrap(), None);
        assert_eq!(cr_limit(CrTable::Gpp3, 0.65).unwrap(), None);
        assert_eq!(cr_limit(CrTable::Gpp3, 0.66).unwrap(), Some(1.6e-3));
        assert_eq!(cr_limit(CrTable::Gpp3, 0.71).unwrap(), Some(1.4e-3));
        assert_eq!(cr_limit(CrTable::Gpp3, 0.79).unwrap(), Some(1.2e-3));
        assert_eq!(cr_limit(CrTable::Gpp3, 0.9).unwrap(), Some(0.8e-3));
    }

    #[test]
    fn aggressive_table_shifts_thresholds() {
        let t = CrTable::Aggressive { shift: 0.45 };
        assert_eq!(cr_limit(t, 0.19).unwrap(), None);
        assert_eq!(cr_limit(t, 0.21).unwrap(), Some(1.6e-3));
        assert_eq!(cr_limit(t, 0.26).unwrap(), Some(1.4e-3));
        assert_eq!(cr_limit(t, 0.45).unwrap(), Some(0.8e-3));
    }

    #[test]
    fn unknown_priority_is_config_error() {
        assert!(cr_limit(CrTable::Etsi { priority: 9 }, 0.5).is_err());
    }

    #[test]
    fn rri_lookup_targets() {
        assert_eq!(rri_lookup_target(0.25), 100);
        assert_eq!(rri_lookup_target(0.35), 200);
        assert_eq!(rri_lookup_target(0.55), 500);
        assert_eq!(rri_lookup_target(0.65), 1000);
    }

    #[test]
    fn rri_crlimit_targets() {
        // 3GPP at cbr 0.71: limit 1.4e-3; with s=2, n=3 the smallest
        // conforming RRI is 500 ms.
        assert_eq!(
            rri_crlimit_target(0.71, 2, 3, CrTable::Gpp3, 100).unwrap(),
            500
        );
        assert_eq!(
            rri_crlimit_target(0.5, 2, 3, CrTable::Gpp3, 100).unwrap(),
            100
        );
        // cbr 0.9: limit 0.8e-3; RRI 900 gives 2 * (1000/900) / 3000 = 7.4e-4.
        assert_eq!(
            rri_crlimit_target(0.9, 2, 3, CrTable::Gpp3, 100).unwrap(),
            900
        );
        // A limit below the CR of even the largest RRI clamps to 1000:
        // with a single subchannel pool, CR at RRI 1000 is 2e-3 > 1.4e-3.
        assert_eq!(
            rri_crlimit_target(0.71, 2, 1, CrTable::Gpp3, 100).unwrap(),
            1000
        );
    }

    // -- adaptive ----------------------------------------------------------

    #[test]
    fn adaptive_rate_decreases_above_target() {
        let next = adaptive_update(5.0, 0.8, 0.68, 0.1, 50.0, 1.0, 10.0);
        assert!(next < 5.0);
        let clamped = adaptive_update(1.0, 0.9, 0.68, 0.1, 50.0, 1.0, 10.0);
        assert_eq!(clamped, 1.0);
    }

    #[test]
    fn adaptive_rate_monotone_in_error() {
        let low = adaptive_update(5.0, 0.6, 0.68, 0.1, 50.0, 1.0, 10.0);
        let high = adaptive_update(5.0, 0.2, 0.68, 0.1, 50.0, 1.0, 10.0);
        assert!(high >= low);
        // Scaling the gain never flips the sign of the change.
        for gain in [1.0, 10.0, 100.0] {
            let r = adaptive_update(5.0, 0.8, 0.68, 0.1, gain, 0.0, 100.0);
            assert!(r <= 5.0 * 0.9 + 1e-12);
        }
    }

    #[test]
    fn adaptive_zero_error_decays_rate() {
        // With cbr == target the update is (1 - alpha) * rate.
        let next = adaptive_update(8.0, 0.68, 0.68, 0.1, 50.0, 1.0, 10.0);
        assert_abs_diff_eq!(next, 7.2, epsilon = 1e-12);
    }

    // -- hysteresis ----------------------------------------------------------

    fn rri_controller() -> Controller {
        let params = ControllerParams {
            kind: ControllerKind::RriLookup,
            hysteresis_down_jitter_ms: 0,
            ..ControllerParams::default()
        };
        Controller::new(params, 2, 3, 0)
    }

    #[test]
    fn hysteresis_needs_full_second_to_increase() {
        let mut c = rri_controller();
        for t in (0..=900).step_by(100) {
            c.hysteresis_step(500, t);
        }
        // 10 samples spanning 900 ms: not yet.
        assert_eq!(c.current_rri_ms, 100);
        c.hysteresis_step(100, 999);
        c.hysteresis_step(500, 1100);
        assert_eq!(c.current_rri_ms, 100);
    }

    #[test]
    fn hysteresis_increase_after_one_second() {
        let mut c = rri_controller();
        for t in (0..=1000).step_by(100) {
            c.hysteresis_step(500, t);
        }
        assert_eq!(c.current_rri_ms, 500);
    }

    #[test]
    fn hysteresis_decrease_after_five_seconds() {
        let mut c = rri_controller();
        for t in (0..=1000).step_by(100) {
            c.hysteresis_step(500, t);
        }
        assert_eq!(c.current_rri_ms, 500);
        for t in (1100..6100).step_by(100) {
            c.hysteresis_step(100, t);
        }
        assert_eq!(c.current_rri_ms, 500);
        c.hysteresis_step(100, 6100);
        assert_eq!(c.current_rri_ms, 100);
    }

    // -- gate --------------------------------------------------------------

    #[test]
    fn reactive_gate_delays_within_t_off() {
        let params = ControllerParams {
            kind: ControllerKind::Reactive,
            ..ControllerParams::default()
        };
        let mut c = Controller::new(params, 2, 3, 0);
        c.on_sample(0.25, 0.0, 0).unwrap(); // Relaxed: T_off = 100 ms
        c.note_transmission(1000);
        assert_eq!(
            c.gate_packet(1050),
            GateDecision::Delay { until_ms: 1100 }
        );
        assert_eq!(c.gate_packet(1100), GateDecision::Transmit);
    }

    #[test]
    fn drop_gate_compares_cr_to_limit() {
        let params = ControllerParams {
            kind: ControllerKind::Drop3gpp,
            ..ControllerParams::default()
        };
        let mut c = Controller::new(params, 2, 3, 0);
        // cbr 0.71 -> limit 1.4e-3; steady 100 ms RRI CR is 6.67e-3.
        c.on_sample(0.71, 20.0 / 3000.0, 0).unwrap();
        assert_eq!(c.gate_packet(100), GateDecision::Drop);
        c.on_sample(0.5, 20.0 / 3000.0, 100).unwrap();
        assert_eq!(c.gate_packet(200), GateDecision::Transmit);
    }

    #[test]
    fn rri_variants_never_gate() {
        for kind in [ControllerKind::RriLookup, ControllerKind::RriCrLimit] {
            let params = ControllerParams {
                kind,
                ..ControllerParams::default()
            };
            let mut c = Controller::new(params, 2, 3, 0);
            c.on_sample(0.95, 0.5, 0).unwrap();
            c.note_transmission(0);
            assert_eq!(c.gate_packet(1), GateDecision::Transmit);
        }
    }

    #[test]
    fn rri_cr_limit_controller_tracks_table() {
        let params = ControllerParams {
            kind: ControllerKind::RriCrLimit,
            ..ControllerParams::default()
        };
        let mut c = Controller::new(params, 2, 3, 0);
        for t in (0..=1000).step_by(100) {
            c.on_sample(0.71, 0.0, t).unwrap();
        }
        assert_eq!(c.target_rri_ms(), 500);
    }

    #[test]
    fn validate_rejects_out_of_range_keep_probability() {
        let params = ControllerParams {
            keep_probability: 1.5,
            ..ControllerParams::default()
        };
        assert!(params.validate().is_err());
    }
}
