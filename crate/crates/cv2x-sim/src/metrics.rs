//! Reported quantities: distance-binned PDR, inter-packet gap, neighbour
//! awareness, and the colliding-grant taxonomy.

use std::collections::BTreeMap;

use crate::sbsps::{Grant, SelectionContext};
use crate::scenario::VehicleId;

// ---------------------------------------------------------------------------
// Reception bookkeeping
// ---------------------------------------------------------------------------

/// One transmitted packet.
#[derive(Debug, Clone, Copy)]
pub struct TxRecord {
    pub tx_id: u64,
    pub source: VehicleId,
    pub subframe_ms: u64,
    pub subchannel_start: u32,
    pub subchannel_count: u32,
    /// Road position of the transmitter when it sent.
    pub position_m: f64,
}

/// Why a reception failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureCause {
    /// Signal under the threshold with a clean channel.
    Sinr,
    /// Receiver was transmitting in the same subframe.
    HalfDuplex,
    /// At least one other transmission overlapped the subchannels.
    Collision,
}

impl FailureCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureCause::Sinr => "sinr",
            FailureCause::HalfDuplex => "half_duplex",
            FailureCause::Collision => "collision",
        }
    }
}

/// One (transmission, in-range receiver) pair.
#[derive(Debug, Clone, Copy)]
pub struct RxOutcome {
    pub tx_id: u64,
    pub receiver: VehicleId,
    pub distance_m: f64,
    pub decoded: bool,
    pub failure_cause: Option<FailureCause>,
}

// ---------------------------------------------------------------------------
// PDR by distance
// ---------------------------------------------------------------------------

/// One populated distance bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdrBin {
    pub lo_m: f64,
    pub hi_m: f64,
    pub decoded: u64,
    pub total: u64,
}

impl PdrBin {
    pub fn pdr(&self) -> f64 {
        self.decoded as f64 / self.total as f64
    }
}

/// Distance-binned delivery counts over all (tx, receiver) pairs.
#[derive(Debug, Clone)]
pub struct PdrBins {
    bin_width_m: f64,
    decoded: Vec<u64>,
    total: Vec<u64>,
}

impl PdrBins {
    pub fn new(bin_width_m: f64, range_cap_m: f64) -> Self {
        let bins = (range_cap_m / bin_width_m).ceil() as usize;
        Self {
            bin_width_m,
            decoded: vec![0; bins],
            total: vec![0; bins],
        }
    }

    pub fn record(&mut self, distance_m: f64, decoded: bool) {
        let idx = (distance_m / self.bin_width_m) as usize;
        if idx >= self.total.len() {
            return;
        }
        self.total[idx] += 1;
        self.decoded[idx] += u64::from(decoded);
    }

    /// Populated bins in distance order; empty bins are omitted.
    pub fn bins(&self) -> Vec<PdrBin> {
        self.total
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0)
            .map(|(i, &total)| PdrBin {
                lo_m: i as f64 * self.bin_width_m,
                hi_m: (i + 1) as f64 * self.bin_width_m,
                decoded: self.decoded[i],
                total,
            })
            .collect()
    }

    /// Unweighted mean of per-bin PDR over bins intersecting [lo, hi).
    pub fn mean_pdr_over(&self, lo_m: f64, hi_m: f64) -> Option<f64> {
        let values: Vec<f64> = self
            .bins()
            .into_iter()
            .filter(|b| b.lo_m >= lo_m && b.hi_m <= hi_m)
            .map(|b| b.pdr())
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    pub fn totals(&self) -> (u64, u64) {
        (self.decoded.iter().sum(), self.total.iter().sum())
    }
}

// ---------------------------------------------------------------------------
// Inter-packet gap
// ---------------------------------------------------------------------------

/// Distribution of gaps between successive decodes per (receiver, source)
/// pair, kept as a millisecond histogram.
#[derive(Debug, Clone)]
pub struct IpgStats {
    sum_ms: u64,
    count: u64,
    /// Gap counts at 1 ms resolution; the last slot absorbs overflow.
    hist: Vec<u32>,
}

impl IpgStats {
    pub fn new(max_gap_ms: u64) -> Self {
        Self {
            sum_ms: 0,
            count: 0,
            hist: vec![0; max_gap_ms as usize + 1],
        }
    }

    pub fn record(&mut self, gap_ms: u64) {
        self.sum_ms += gap_ms;
        self.count += 1;
        let idx = (gap_ms as usize).min(self.hist.len() - 1);
        self.hist[idx] += 1;
    }

    pub fn mean_ms(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum_ms as f64 / self.count as f64)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Empirical CDF evaluated at each populated gap value.
    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let mut acc = 0u64;
        self.hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(gap, &c)| {
                acc += u64::from(c);
                (gap as u64, acc as f64 / self.count as f64)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Awareness
// ---------------------------------------------------------------------------

/// Running mean/stddev accumulator.
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    pub fn std_dev(&self) -> Option<f64> {
        (self.count > 1).then(|| (self.m2 / (self.count - 1) as f64).sqrt())
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Fraction of ring neighbours heard within the message lifetime.
/// `last_decode_ms` carries the most recent decode time per neighbour.
pub fn awareness_fraction(
    now_ms: u64,
    lifetime_ms: u64,
    neighbours: impl Iterator<Item = Option<u64>>,
) -> Option<f64> {
    let mut total = 0u32;
    let mut aware = 0u32;
    for last in neighbours {
        total += 1;
        if let Some(t) = last {
            if now_ms - t <= lifetime_ms {
                aware += 1;
            }
        }
    }
    (total > 0).then(|| f64::from(aware) / f64::from(total))
}

// ---------------------------------------------------------------------------
// Colliding grants
// ---------------------------------------------------------------------------

/// Why two grants ended up reserving the same resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionCause {
    /// A missed transmission silenced the SCI, so the resource looked free.
    MissedTx,
    /// A collider selected with no genuinely free candidates.
    NoFree,
    /// Simultaneous selection out of highly similar selection windows.
    SimilarWindows,
}

impl CollisionCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            CollisionCause::MissedTx => "missed_tx",
            CollisionCause::NoFree => "no_free",
            CollisionCause::SimilarWindows => "similar_windows",
        }
    }
}

/// Attributes a fresh overlap between two live grants to one cause, with
/// precedence MissedTx > NoFree > SimilarWindows.
///
/// MissedTx applies when either owner went silent on its grant strictly
/// before the other owner's selection or retune, regardless of which side
/// was silent.
pub fn classify_collision(a: &Grant, b: &Grant) -> CollisionCause {
    let a_silent_first = a.first_missed_ms.is_some_and(|m| m < b.last_change_ms);
    let b_silent_first = b.first_missed_ms.is_some_and(|m| m < a.last_change_ms);
    if a_silent_first || b_silent_first {
        CollisionCause::MissedTx
    } else if a.selection_context == SelectionContext::NoFreeCandidates
        || b.selection_context == SelectionContext::NoFreeCandidates
    {
        CollisionCause::NoFree
    } else {
        CollisionCause::SimilarWindows
    }
}

/// One contiguous overlap episode between two grants.
#[derive(Debug, Clone, Copy)]
pub struct CollidingGrantEvent {
    pub grant_a: u64,
    pub grant_b: u64,
    pub owner_a: VehicleId,
    pub owner_b: VehicleId,
    pub first_overlap_ms: u64,
    pub cause: CollisionCause,
    /// Overlapping reserved subframes observed within the episode.
    pub recurrences: u64,
}

/// Episode totals per cause.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GammaTotals {
    pub total: u64,
    pub missed_tx: u64,
    pub no_free: u64,
    pub similar_windows: u64,
}

/// Detects overlap episodes among live grants subframe by subframe.
///
/// An episode opens when a grant pair first reserves the same
/// (subframe, subchannel) cell while both persist; it stays open, counting
/// recurrences, until either grant dies or is retuned.
#[derive(Debug, Default)]
pub struct CollisionTracker {
    open: BTreeMap<(u64, u64), usize>,
    events: Vec<CollidingGrantEvent>,
}

impl CollisionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the grants whose reserved opportunity is the current subframe.
    pub fn on_subframe(&mut self, now_ms: u64, reserved: &[&Grant]) {
        for i in 0..reserved.len() {
            for j in i + 1..reserved.len() {
                let (a, b) = (reserved[i], reserved[j]);
                if !a.overlaps_subchannels(b) {
                    continue;
                }
                let key = (a.id.min(b.id), a.id.max(b.id));
                match self.open.get(&key) {
                    Some(&idx) => self.events[idx].recurrences += 1,
                    None => {
                        let cause = classify_collision(a, b);
                        self.open.insert(key, self.events.len());
                        self.events.push(CollidingGrantEvent {
                            grant_a: key.0,
                            grant_b: key.1,
                            owner_a: if a.id < b.id { a.owner } else { b.owner },
                            owner_b: if a.id < b.id { b.owner } else { a.owner },
                            first_overlap_ms: now_ms,
                            cause,
                            recurrences: 1,
                        });
                    }
                }
            }
        }
    }

    /// Closes every episode the grant takes part in; called when a grant
    /// dies or its pattern changes through a retune.
    pub fn on_grant_closed(&mut self, grant_id: u64) {
        self.open
            .retain(|&(a, b), _| a != grant_id && b != grant_id);
    }

    pub fn events(&self) -> &[CollidingGrantEvent] {
        &self.events
    }

    /// Episode totals, restricted to episodes opening at or after `from_ms`.
    pub fn totals_since(&self, from_ms: u64) -> GammaTotals {
        let mut t = GammaTotals::default();
        for e in &self.events {
            if e.first_overlap_ms < from_ms {
                continue;
            }
            t.total += 1;
            match e.cause {
                CollisionCause::MissedTx => t.missed_tx += 1,
                CollisionCause::NoFree => t.no_free += 1,
                CollisionCause::SimilarWindows => t.similar_windows += 1,
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbsps::SelectionContext;

    fn grant(id: u64, owner: u32) -> Grant {
        Grant {
            id,
            owner: VehicleId(owner),
            subchannel_start: 0,
            subchannel_count: 2,
            rri_ms: 100,
            rrc: 10,
            created_at_ms: 0,
            selection_context: SelectionContext::HadFreeCandidates,
            next_opportunity_ms: 100,
            last_change_ms: 0,
            first_missed_ms: None,
            pending_sci: None,
        }
    }

    #[test]
    fn pdr_bins_count_and_omit_empty() {
        let mut p = PdrBins::new(50.0, 600.0);
        p.record(10.0, true);
        p.record(20.0, false);
        p.record(210.0, true);
        let bins = p.bins();
        assert_eq!(bins.len(), 2, "empty bins omitted");
        assert_eq!(bins[0].lo_m, 0.0);
        assert_eq!(bins[0].pdr(), 0.5);
        assert_eq!(bins[1].lo_m, 200.0);
        assert_eq!(bins[1].pdr(), 1.0);
        assert_eq!(p.totals(), (2, 3));
    }

    #[test]
    fn pdr_bin_sums_equal_global_totals() {
        let mut p = PdrBins::new(50.0, 600.0);
        for i in 0..500u32 {
            p.record(f64::from(i), i % 3 == 0);
        }
        let (d, t): (u64, u64) = p
            .bins()
            .iter()
            .fold((0, 0), |(d, t), b| (d + b.decoded, t + b.total));
        assert_eq!((d, t), p.totals());
    }

    #[test]
    fn pdr_beyond_cap_ignored() {
        let mut p = PdrBins::new(50.0, 600.0);
        p.record(650.0, true);
        assert_eq!(p.totals(), (0, 0));
    }

    #[test]
    fn ipg_perfect_reception_constant_gap() {
        let mut ipg = IpgStats::new(4000);
        for _ in 0..10 {
            ipg.record(100);
        }
        assert_eq!(ipg.mean_ms(), Some(100.0));
        assert_eq!(ipg.cdf(), vec![(100, 1.0)]);
    }

    #[test]
    fn ipg_alternating_decode_doubles_gap() {
        let mut ipg = IpgStats::new(4000);
        for _ in 0..5 {
            ipg.record(200);
        }
        assert_eq!(ipg.mean_ms(), Some(200.0));
    }

    #[test]
    fn awareness_lifetime_boundary() {
        // Heard 1000 ms ago: still aware. 1001 ms ago: not.
        let f = awareness_fraction(5000, 1000, vec![Some(4000)].into_iter());
        assert_eq!(f, Some(1.0));
        let f = awareness_fraction(5000, 1000, vec![Some(3999)].into_iter());
        assert_eq!(f, Some(0.0));
        let f = awareness_fraction(5000, 1000, vec![Some(4500), None].into_iter());
        assert_eq!(f, Some(0.5));
        assert_eq!(awareness_fraction(5000, 1000, std::iter::empty()), None);
    }

    #[test]
    fn running_stats_mean_std() {
        let mut s = RunningStats::default();
        for x in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            s.push(x);
        }
        assert!((s.mean().unwrap() - 5.0).abs() < 1e-12);
        assert!((s.std_dev().unwrap() - 2.138089935).abs() < 1e-6);
    }

    #[test]
    fn classify_missed_transmission_first() {
        // A went silent at t=300; B selected at t=500 believing the
        // resource free.
        let mut a = grant(1, 0);
        a.first_missed_ms = Some(300);
        let mut b = grant(2, 1);
        b.last_change_ms = 500;
        b.selection_context = SelectionContext::NoFreeCandidates;
        assert_eq!(classify_collision(&a, &b), CollisionCause::MissedTx);
    }

    #[test]
    fn classify_no_free_candidates() {
        let a = grant(1, 0);
        let mut b = grant(2, 1);
        b.selection_context = SelectionContext::NoFreeCandidates;
        assert_eq!(classify_collision(&a, &b), CollisionCause::NoFree);
    }

    #[test]
    fn classify_similar_windows_by_default() {
        // Both selected at the same instant, nobody silent, free
        // candidates existed.
        let a = grant(1, 0);
        let b = grant(2, 1);
        assert_eq!(classify_collision(&a, &b), CollisionCause::SimilarWindows);
    }

    #[test]
    fn missed_tx_requires_silence_before_selection() {
        // A's miss happened after B selected: not attributable to silence.
        let mut a = grant(1, 0);
        a.first_missed_ms = Some(700);
        let mut b = grant(2, 1);
        b.last_change_ms = 500;
        assert_eq!(classify_collision(&a, &b), CollisionCause::SimilarWindows);
    }

    #[test]
    fn tracker_counts_episodes_once_with_recurrences() {
        let mut tracker = CollisionTracker::new();
        let a = grant(1, 0);
        let b = grant(2, 1);
        tracker.on_subframe(100, &[&a, &b]);
        tracker.on_subframe(200, &[&a, &b]);
        tracker.on_subframe(300, &[&a, &b]);
        assert_eq!(tracker.events().len(), 1);
        assert_eq!(tracker.events()[0].recurrences, 3);

        // Pattern change re-opens a fresh episode.
        tracker.on_grant_closed(2);
        tracker.on_subframe(400, &[&a, &b]);
        assert_eq!(tracker.events().len(), 2);

        let totals = tracker.totals_since(0);
        assert_eq!(totals.total, 2);
        assert_eq!(
            totals.missed_tx + totals.no_free + totals.similar_windows,
            totals.total
        );
    }

    #[test]
    fn tracker_ignores_disjoint_subchannels() {
        let mut tracker = CollisionTracker::new();
        let mut a = grant(1, 0);
        a.subchannel_count = 1;
        let mut b = grant(2, 1);
        b.subchannel_start = 1;
        b.subchannel_count = 1;
        tracker.on_subframe(100, &[&a, &b]);
        assert!(tracker.events().is_empty());
    }
}
