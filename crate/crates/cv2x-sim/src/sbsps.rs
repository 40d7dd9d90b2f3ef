//! Sensing-Based Semi-Persistent Scheduling: the sensing window, candidate
//! resource selection, and the grant lifecycle (SCI announcement, grant
//! breaking, missed transmissions, counter expiry, in-place RRI retuning).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::dbm_to_mw;
use crate::congestion::rri_allowed;
use crate::error::SimError;
use crate::scenario::VehicleId;

/// Sensing window depth in subframes.
pub const SENSING_WINDOW: u64 = 1000;

/// Lookback stride when averaging S-RSSI for a candidate resource: the
/// resource pool repeats every 100 subframes.
const SENSING_STRIDE: u64 = 100;

/// Start of the selection window relative to now (processing latency).
pub const SELECTION_T1: u64 = 4;

/// End of the selection window relative to now (latency budget).
pub const SELECTION_T2: u64 = 100;

/// Fraction of candidates that must survive exclusion, and the fraction
/// ranked best among which the resource is drawn.
pub const CANDIDATE_FRACTION: f64 = 0.2;

/// RSRP exclusion threshold step when too few candidates remain.
pub const RSRP_STEP_DB: f64 = 3.0;

/// Bounds of the resource reselection counter draw.
pub const RRC_MIN: u32 = 5;
pub const RRC_MAX: u32 = 15;

// ---------------------------------------------------------------------------
// SCI
// ---------------------------------------------------------------------------

/// Sidelink control information announcing one transmission and the
/// reservation of its future repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sci {
    pub source: VehicleId,
    pub announced_rri_ms: u64,
    pub subchannel_start: u32,
    pub subchannel_count: u32,
    /// Remaining reserved opportunities after this transmission.
    pub rrc_snapshot: u32,
}

impl Sci {
    fn overlaps(&self, start: u32, count: u32) -> bool {
        self.subchannel_start < start + count && start < self.subchannel_start + self.subchannel_count
    }
}

/// A decoded SCI retained in the sensing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedSci {
    pub sci: Sci,
    pub rsrp_dbm: f64,
    pub decoded_at_ms: u64,
}

// ---------------------------------------------------------------------------
// Sensing window
// ---------------------------------------------------------------------------

/// Per-vehicle trailing record of channel state: average S-RSSI per
/// (subframe, subchannel), the latest decoded SCI per neighbour, and the
/// subframes in which the vehicle itself transmitted (and thus sensed
/// nothing).
#[derive(Debug, Clone)]
pub struct SensingWindow {
    n_subchannels: usize,
    /// Linear-domain (mW) S-RSSI ring, `SENSING_WINDOW` subframes deep.
    srssi_mw: Vec<f64>,
    own_tx: Vec<bool>,
    last_recorded: Option<u64>,
    scis: BTreeMap<VehicleId, DecodedSci>,
}

impl SensingWindow {
    pub fn new(n_subchannels: usize) -> Self {
        Self {
            n_subchannels,
            srssi_mw: vec![0.0; SENSING_WINDOW as usize * n_subchannels],
            own_tx: vec![false; SENSING_WINDOW as usize],
            last_recorded: None,
            scis: BTreeMap::new(),
        }
    }

    /// Records one subframe of measurements. `srssi_dbm` must hold one
    /// value per subchannel.
    pub fn record_subframe(&mut self, t_ms: u64, srssi_dbm: &[f64], own_tx: bool) {
        debug_assert_eq!(srssi_dbm.len(), self.n_subchannels);
        let slot = (t_ms % SENSING_WINDOW) as usize;
        for (c, &v) in srssi_dbm.iter().enumerate() {
            self.srssi_mw[slot * self.n_subchannels + c] = dbm_to_mw(v);
        }
        self.own_tx[slot] = own_tx;
        self.last_recorded = Some(t_ms);
        // Evict reservations that have aged out of the window.
        if t_ms % SENSING_WINDOW == 0 {
            self.scis
                .retain(|_, d| d.decoded_at_ms + SENSING_WINDOW > t_ms);
        }
    }

    /// Stores a decoded SCI, superseding any earlier one from the same
    /// source (a retune invalidates the old reservation).
    pub fn record_sci(&mut self, decoded: DecodedSci) {
        self.scis.insert(decoded.sci.source, decoded);
    }

    fn in_window(&self, t_ms: u64) -> bool {
        match self.last_recorded {
            Some(last) => t_ms <= last && t_ms + SENSING_WINDOW > last,
            None => false,
        }
    }

    fn srssi_at(&self, t_ms: u64) -> Option<&[f64]> {
        if !self.in_window(t_ms) {
            return None;
        }
        let slot = (t_ms % SENSING_WINDOW) as usize;
        Some(&self.srssi_mw[slot * self.n_subchannels..(slot + 1) * self.n_subchannels])
    }

    fn own_tx_at(&self, t_ms: u64) -> bool {
        self.in_window(t_ms) && self.own_tx[(t_ms % SENSING_WINDOW) as usize]
    }

    /// Linear-average S-RSSI seen on `start..start+count` at the window
    /// subframes periodically preceding `target_ms`. Subframes the vehicle
    /// spent transmitting are skipped. Returns 0 mW when nothing was
    /// observed, ranking never-sensed resources as quiet.
    pub fn candidate_srssi_mw(&self, target_ms: u64, start: u32, count: u32) -> f64 {
        let mut sum = 0.0;
        let mut samples = 0u32;
        let mut k = 1;
        while SENSING_STRIDE * k <= target_ms {
            let t = target_ms - SENSING_STRIDE * k;
            k += 1;
            if !self.in_window(t) {
                if self.last_recorded.map_or(true, |last| t + SENSING_WINDOW <= last) {
                    break;
                }
                continue;
            }
            if self.own_tx_at(t) {
                continue;
            }
            if let Some(row) = self.srssi_at(t) {
                for c in start..start + count {
                    sum += row[c as usize];
                }
                samples += 1;
            }
        }
        if samples == 0 {
            0.0
        } else {
            sum / samples as f64
        }
    }

    /// Live decoded reservations, newest per source.
    pub fn decoded_scis(&self, now_ms: u64) -> impl Iterator<Item = &DecodedSci> {
        self.scis
            .values()
            .filter(move |d| d.decoded_at_ms + SENSING_WINDOW > now_ms)
    }
}

// ---------------------------------------------------------------------------
// Grant
// ---------------------------------------------------------------------------

/// Whether the owner saw genuinely free candidates when it selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionContext {
    HadFreeCandidates,
    NoFreeCandidates,
}

/// A semi-persistent resource reservation.
#[derive(Debug, Clone, PartialEq)]
pub struct Grant {
    pub id: u64,
    pub owner: VehicleId,
    pub subchannel_start: u32,
    pub subchannel_count: u32,
    pub rri_ms: u64,
    /// Remaining reserved opportunities.
    pub rrc: u32,
    pub created_at_ms: u64,
    pub selection_context: SelectionContext,
    /// The next subframe this grant reserves.
    pub next_opportunity_ms: u64,
    /// Selection or latest retune time; collision classification compares
    /// against the other owner's silence.
    pub last_change_ms: u64,
    /// First reserved opportunity that passed unused (grant kept, no SCI).
    pub first_missed_ms: Option<u64>,
    /// Set when an SCI is emitted: (emission time, announced RRI). The next
    /// reserved opportunity must land exactly there.
    pub pending_sci: Option<(u64, u64)>,
}

impl Grant {
    /// Offset of the reserved subframe within the RRI period.
    pub fn subframe_offset(&self) -> u64 {
        self.next_opportunity_ms % self.rri_ms
    }

    pub fn overlaps_subchannels(&self, other: &Grant) -> bool {
        self.subchannel_start < other.subchannel_start + other.subchannel_count
            && other.subchannel_start < self.subchannel_start + self.subchannel_count
    }

    /// Handles one reserved opportunity. The caller transmits/advances the
    /// reservation according to the returned action.
    pub fn on_reserved_opportunity(
        &mut self,
        has_packet: bool,
        grant_breaking: bool,
        now_ms: u64,
    ) -> OpportunityAction {
        if has_packet {
            self.rrc = self.rrc.saturating_sub(1);
            OpportunityAction::Transmit
        } else if grant_breaking {
            OpportunityAction::Break
        } else {
            self.rrc = self.rrc.saturating_sub(1);
            if self.first_missed_ms.is_none() {
                self.first_missed_ms = Some(now_ms);
            }
            OpportunityAction::Missed
        }
    }

    /// Reselection decision once the counter hits zero.
    pub fn on_rrc_expiry(&mut self, keep_probability: f64, rng: &mut impl Rng) -> ExpiryAction {
        debug_assert_eq!(self.rrc, 0);
        if rng.gen::<f64>() < keep_probability {
            self.rrc = rng.gen_range(RRC_MIN..=RRC_MAX);
            ExpiryAction::Keep
        } else {
            ExpiryAction::Reselect
        }
    }

    /// Re-times the reservation in place, keeping subchannels and counter.
    /// Must be called at a transmission opportunity, immediately before the
    /// SCI is emitted, so neighbours learn the new interval.
    pub fn retune_rri(&mut self, new_rri_ms: u64, now_ms: u64) -> Result<(), SimError> {
        if !rri_allowed(new_rri_ms) {
            return Err(SimError::config(
                "rri",
                format!("{new_rri_ms} ms is not an allowed reservation interval"),
            ));
        }
        if new_rri_ms == self.rri_ms {
            return Ok(());
        }
        self.rri_ms = new_rri_ms;
        self.next_opportunity_ms = now_ms + new_rri_ms;
        self.last_change_ms = now_ms;
        Ok(())
    }

    /// The SCI describing a transmission happening now on this grant.
    pub fn make_sci(&self) -> Sci {
        Sci {
            source: self.owner,
            announced_rri_ms: self.rri_ms,
            subchannel_start: self.subchannel_start,
            subchannel_count: self.subchannel_count,
            rrc_snapshot: self.rrc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpportunityAction {
    /// Send SCI + data, counter already decremented.
    Transmit,
    /// Grant breaking triggered: destroy the grant, reselect at the next
    /// packet arrival.
    Break,
    /// Reserved resource passed unused; grant kept, no SCI sent.
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpiryAction {
    /// Same resource retained with a fresh counter.
    Keep,
    /// Grant dropped; a new selection happens at the next packet arrival.
    Reselect,
}

/// Closed-form worst-case condition under which a packet stream with the
/// given inter-arrival time breaks a grant (sl-reselectAfter = 1): the gap
/// must stay within 2*RRI - 2 ms.
pub fn grant_break_check(inter_arrival_ms: u64, rri_ms: u64) -> bool {
    inter_arrival_ms > 2 * rri_ms - 2
}

// ---------------------------------------------------------------------------
// Resource selection
// ---------------------------------------------------------------------------

/// Parameters the selection procedure needs from the radio and run setup.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub num_subchannels: u32,
    pub subchannels_per_tx: u32,
    pub rsrp_threshold_dbm: f64,
    pub sim_duration_ms: u64,
}

/// Diagnostics of one selection pass, mostly for tests and examples.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub total_candidates: usize,
    pub surviving_candidates: usize,
    pub rsrp_threshold_used_dbm: f64,
    pub context: SelectionContext,
}

#[derive(Clone, Copy)]
struct Candidate {
    subframe_ms: u64,
    start: u32,
    /// Strongest RSRP among decoded reservations covering this resource.
    reserved_rsrp_dbm: Option<f64>,
}

/// Runs the SB-SPS candidate selection over `[now+T1, now+T2]` and returns
/// a fresh grant.
///
/// Reserved resources announced by decoded SCIs are excluded while their
/// RSRP exceeds the threshold; the threshold backs off in +3 dB steps until
/// at least 20% of candidates survive. Survivors are ranked by averaged
/// S-RSSI and the grant resource is drawn uniformly from the best 20%.
pub fn select_resources(
    sw: &SensingWindow,
    rri_ms: u64,
    now_ms: u64,
    owner: VehicleId,
    grant_id: u64,
    cfg: &SelectionConfig,
    rng: &mut impl Rng,
) -> Result<(Grant, SelectionReport), SimError> {
    if cfg.sim_duration_ms < SELECTION_T2 {
        return Err(SimError::Scheduling(format!(
            "selection window needs {SELECTION_T2} ms but the simulation lasts {} ms",
            cfg.sim_duration_ms
        )));
    }
    if !rri_allowed(rri_ms) {
        return Err(SimError::config(
            "rri",
            format!("{rri_ms} ms is not an allowed reservation interval"),
        ));
    }

    let starts = cfg.num_subchannels - cfg.subchannels_per_tx + 1;
    let lo = now_ms + SELECTION_T1;
    let hi = now_ms + SELECTION_T2;
    let mut candidates: Vec<Candidate> = (lo..=hi)
        .flat_map(|t| {
            (0..starts).map(move |s| Candidate {
                subframe_ms: t,
                start: s,
                reserved_rsrp_dbm: None,
            })
        })
        .collect();
    let total = candidates.len();

    // Project every live decoded reservation forward and exclude each
    // candidate whose own repetitions (up to the longest possible grant
    // lifetime) would land on one. Candidates form a dense
    // (subframe, start) grid, so projections index directly.
    let max_own_repeats = (RRC_MAX - 1) as u64;
    for decoded in sw.decoded_scis(now_ms) {
        let sci = &decoded.sci;
        if sci.announced_rri_ms == 0 {
            continue;
        }
        for q in 1..=sci.rrc_snapshot as u64 {
            let reserved = decoded.decoded_at_ms + q * sci.announced_rri_ms;
            if reserved > hi + max_own_repeats * rri_ms {
                break;
            }
            if reserved < lo {
                continue;
            }
            // Candidate subframes t_c with t_c + j * rri == reserved for
            // some own repetition j.
            let j_min = if reserved <= hi {
                0
            } else {
                (reserved - hi).div_ceil(rri_ms)
            };
            let j_max = ((reserved - lo) / rri_ms).min(max_own_repeats);
            if j_min > j_max {
                continue;
            }
            for j in j_min..=j_max {
                let t_c = reserved - j * rri_ms;
                let row = (t_c - lo) as usize * starts as usize;
                for s in 0..starts {
                    if sci.overlaps(s, cfg.subchannels_per_tx) {
                        let cand = &mut candidates[row + s as usize];
                        let best = cand.reserved_rsrp_dbm.get_or_insert(f64::NEG_INFINITY);
                        *best = best.max(decoded.rsrp_dbm);
                    }
                }
            }
        }
    }

    let need = ((total as f64 * CANDIDATE_FRACTION).ceil() as usize).max(1);
    let mut threshold = cfg.rsrp_threshold_dbm;
    let surviving: Vec<&Candidate> = loop {
        let kept: Vec<&Candidate> = candidates
            .iter()
            .filter(|c| c.reserved_rsrp_dbm.map_or(true, |r| r <= threshold))
            .collect();
        if kept.len() >= need {
            break kept;
        }
        threshold += RSRP_STEP_DB;
    };

    let context = if surviving.iter().all(|c| c.reserved_rsrp_dbm.is_some()) {
        SelectionContext::NoFreeCandidates
    } else {
        SelectionContext::HadFreeCandidates
    };

    // Rank by averaged S-RSSI, breaking ties uniformly at random, and draw
    // from the best 20%.
    let mut ranked: Vec<(&Candidate, f64)> = surviving
        .iter()
        .map(|c| {
            (
                *c,
                sw.candidate_srssi_mw(c.subframe_ms, c.start, cfg.subchannels_per_tx),
            )
        })
        .collect();
    ranked.shuffle(rng);
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite srssi"));
    let best = ((ranked.len() as f64 * CANDIDATE_FRACTION).ceil() as usize).max(1);
    let pick = ranked[rng.gen_range(0..best)].0;
    let rrc = rng.gen_range(RRC_MIN..=RRC_MAX);

    let grant = Grant {
        id: grant_id,
        owner,
        subchannel_start: pick.start,
        subchannel_count: cfg.subchannels_per_tx,
        rri_ms,
        rrc,
        created_at_ms: now_ms,
        selection_context: context,
        next_opportunity_ms: pick.subframe_ms,
        last_change_ms: now_ms,
        first_missed_ms: None,
        pending_sci: None,
    };
    let report = SelectionReport {
        total_candidates: total,
        surviving_candidates: surviving.len(),
        rsrp_threshold_used_dbm: threshold,
        context,
    };
    Ok((grant, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sel_cfg() -> SelectionConfig {
        SelectionConfig {
            num_subchannels: 3,
            subchannels_per_tx: 2,
            rsrp_threshold_dbm: -126.0,
            sim_duration_ms: 20_000,
        }
    }

    fn quiet_window(until: u64) -> SensingWindow {
        let mut sw = SensingWindow::new(3);
        for t in 0..=until {
            sw.record_subframe(t, &[-100.4, -100.4, -100.4], false);
        }
        sw
    }

    #[test]
    fn empty_window_selects_uniformly_over_all_candidates() {
        let sw = SensingWindow::new(3);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut seen = std::collections::BTreeMap::new();
        let draws = 6000;
        for i in 0..draws {
            let (g, report) =
                select_resources(&sw, 100, 1000, VehicleId(0), i, &sel_cfg(), &mut rng).unwrap();
            assert_eq!(report.total_candidates, 97 * 2);
            assert_eq!(report.surviving_candidates, 97 * 2);
            assert_eq!(report.context, SelectionContext::HadFreeCandidates);
            *seen
                .entry((g.next_opportunity_ms, g.subchannel_start))
                .or_insert(0u32) += 1;
        }
        assert_eq!(seen.len(), 97 * 2, "every candidate should be reachable");
        let expected = draws as f64 / (97.0 * 2.0);
        for (_, count) in seen {
            assert!(f64::from(count) < 3.0 * expected);
        }
    }

    #[test]
    fn decoded_reservation_above_threshold_is_excluded() {
        let mut sw = quiet_window(999);
        // Reservation repeating at 1100, 1200, ... on subchannels {1, 2}.
        sw.record_sci(DecodedSci {
            sci: Sci {
                source: VehicleId(9),
                announced_rri_ms: 100,
                subchannel_start: 1,
                subchannel_count: 2,
                rrc_snapshot: 10,
            },
            rsrp_dbm: -120.0,
            decoded_at_ms: 1000,
        });
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for i in 0..2000 {
            let (g, report) =
                select_resources(&sw, 100, 1000, VehicleId(0), i, &sel_cfg(), &mut rng).unwrap();
            // The reservation covers subchannels 1-2 of every 100th subframe;
            // both candidate starts overlap it there, so those subframes are
            // fully excluded.
            assert!(g.next_opportunity_ms % 100 != 0, "reserved subframe chosen");
            assert!(report.surviving_candidates < report.total_candidates);
        }
    }

    #[test]
    fn saturated_window_reports_no_free_candidates() {
        let mut sw = quiet_window(999);
        // Louder history on later subframes so the ranking has structure.
        for t in 500..=999u64 {
            let loud = -80.0 + (t % 97) as f64 * 0.1;
            sw.record_subframe(t, &[loud, loud, loud], false);
        }
        // Every subframe offset carries a strong reservation over all
        // subchannels: sources at every offset 0..100.
        for k in 0..100u32 {
            sw.record_sci(DecodedSci {
                sci: Sci {
                    source: VehicleId(100 + k),
                    announced_rri_ms: 100,
                    subchannel_start: 0,
                    subchannel_count: 3,
                    rrc_snapshot: 15,
                },
                rsrp_dbm: -60.0,
                decoded_at_ms: 900 + k as u64,
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (g, report) =
            select_resources(&sw, 100, 1000, VehicleId(0), 0, &sel_cfg(), &mut rng).unwrap();
        assert_eq!(report.context, SelectionContext::NoFreeCandidates);
        assert_eq!(g.selection_context, SelectionContext::NoFreeCandidates);
        // Exclusion never leaves fewer than 20% of candidates.
        assert!(report.surviving_candidates >= (0.2 * report.total_candidates as f64) as usize);
        assert!(report.rsrp_threshold_used_dbm > -126.0);

        // The choice must come from the bottom 20% of surviving S-RSSI.
        let chosen = sw.candidate_srssi_mw(g.next_opportunity_ms, g.subchannel_start, 2);
        let mut all: Vec<f64> = (1004..=1100)
            .flat_map(|t| (0..2).map(move |s| (t, s)))
            .map(|(t, s)| sw.candidate_srssi_mw(t, s, 2))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cutoff = all[(all.len() as f64 * 0.2).ceil() as usize - 1];
        assert!(chosen <= cutoff + 1e-15);
    }

    #[test]
    fn rrc_draw_is_uniform_5_to_15() {
        let sw = SensingWindow::new(3);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut counts = [0u32; 11];
        let draws = 11_000u32;
        for i in 0..draws {
            let (g, _) =
                select_resources(&sw, 100, 0, VehicleId(0), i as u64, &sel_cfg(), &mut rng)
                    .unwrap();
            assert!((RRC_MIN..=RRC_MAX).contains(&g.rrc));
            counts[(g.rrc - RRC_MIN) as usize] += 1;
        }
        // Chi-square against uniform, 10 dof, 1% significance -> 23.209.
        let expected = draws as f64 / 11.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 23.209, "chi-square {chi2} too large");
    }

    #[test]
    fn short_simulation_is_a_scheduling_error() {
        let sw = SensingWindow::new(3);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let cfg = SelectionConfig {
            sim_duration_ms: 50,
            ..sel_cfg()
        };
        let err = select_resources(&sw, 100, 0, VehicleId(0), 0, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, SimError::Scheduling(_)));
    }

    fn grant() -> Grant {
        Grant {
            id: 1,
            owner: VehicleId(3),
            subchannel_start: 0,
            subchannel_count: 2,
            rri_ms: 100,
            rrc: 5,
            created_at_ms: 0,
            selection_context: SelectionContext::HadFreeCandidates,
            next_opportunity_ms: 50,
            last_change_ms: 0,
            first_missed_ms: None,
            pending_sci: None,
        }
    }

    #[test]
    fn transmit_opportunity_decrements_counter() {
        let mut g = grant();
        let action = g.on_reserved_opportunity(true, false, 50);
        assert_eq!(action, OpportunityAction::Transmit);
        assert_eq!(g.rrc, 4);
        assert_eq!(g.first_missed_ms, None);
    }

    #[test]
    fn empty_buffer_breaks_grant_when_enabled() {
        let mut g = grant();
        let action = g.on_reserved_opportunity(false, true, 50);
        assert_eq!(action, OpportunityAction::Break);
        assert_eq!(g.rrc, 5, "a broken grant is destroyed, not decremented");
    }

    #[test]
    fn empty_buffer_without_breaking_records_miss() {
        let mut g = grant();
        let action = g.on_reserved_opportunity(false, false, 50);
        assert_eq!(action, OpportunityAction::Missed);
        assert_eq!(g.rrc, 4);
        assert_eq!(g.first_missed_ms, Some(50));
    }

    #[test]
    fn break_check_boundaries() {
        assert!(!grant_break_check(198, 100), "198 ms keeps a 100 ms grant");
        assert!(grant_break_check(199, 100), "199 ms breaks a 100 ms grant");
        assert!(!grant_break_check(100, 100));
    }

    #[test]
    fn expiry_keep_probability_extremes() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut g = grant();
            g.rrc = 0;
            assert_eq!(g.on_rrc_expiry(0.0, &mut rng), ExpiryAction::Reselect);
            let mut g = grant();
            g.rrc = 0;
            assert_eq!(g.on_rrc_expiry(1.0, &mut rng), ExpiryAction::Keep);
            assert!((RRC_MIN..=RRC_MAX).contains(&g.rrc));
        }
    }

    #[test]
    fn expiry_keep_probability_half_monte_carlo() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let trials = 20_000;
        let mut reselections = 0u32;
        for _ in 0..trials {
            let mut g = grant();
            g.rrc = 0;
            if g.on_rrc_expiry(0.5, &mut rng) == ExpiryAction::Reselect {
                reselections += 1;
            }
        }
        let frac = f64::from(reselections) / f64::from(trials);
        // 0.5 +/- 4 sigma with sigma = 0.5 / sqrt(20000) ~ 0.0035.
        assert!((frac - 0.5).abs() < 0.015, "reselection fraction {frac}");
    }

    #[test]
    fn retune_reschedules_and_announces_new_rri() {
        let mut g = grant();
        g.next_opportunity_ms = 500;
        g.retune_rri(200, 500).unwrap();
        assert_eq!(g.rri_ms, 200);
        assert_eq!(g.next_opportunity_ms, 700);
        assert_eq!(g.rrc, 5, "retuning keeps the counter");
        assert_eq!(g.make_sci().announced_rri_ms, 200);

        // Back down after congestion clears.
        g.retune_rri(100, 700).unwrap();
        assert_eq!(g.next_opportunity_ms, 800);
    }

    #[test]
    fn retune_same_rri_is_identity() {
        let mut g = grant();
        let before = g.clone();
        g.retune_rri(100, 50).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn retune_rejects_disallowed_rri() {
        let mut g = grant();
        assert!(g.retune_rri(250, 50).is_err());
    }

    #[test]
    fn sensing_window_is_1000_deep_and_skips_own_tx() {
        let mut sw = SensingWindow::new(3);
        for t in 0..2500u64 {
            let v = if t % 2 == 0 { -80.0 } else { -90.0 };
            sw.record_subframe(t, &[v, v, v], t % 500 == 499);
        }
        assert!(sw.srssi_at(1499).is_none(), "older than the window");
        assert!(sw.srssi_at(1500).is_some());
        assert!(sw.own_tx_at(1999));

        // Averaging at stride 100 sees only even subframes here.
        let avg = sw.candidate_srssi_mw(2504, 0, 2);
        let expect = 2.0 * dbm_to_mw(-80.0);
        assert!((avg - expect).abs() / expect < 1e-9);
    }
}
