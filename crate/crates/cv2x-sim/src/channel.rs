//! Radio channel model: WINNER+ B1 LOS path loss, log-normal shadowing,
//! per-subchannel noise, SINR-threshold decoding and S-RSSI measurement.
//!
//! All power additions happen in the linear (mW) domain; quantities cross
//! module boundaries in dB/dBm.

use crate::error::SimError;

/// Distances below this are clamped to it before evaluating path loss.
pub const MIN_PATHLOSS_DISTANCE_M: f64 = 3.0;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const RESOURCE_BLOCK_HZ: f64 = 180_000.0;

/// Radio-layer parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    /// Carrier frequency in GHz.
    pub carrier_ghz: f64,
    /// Channel bandwidth in MHz.
    pub bandwidth_mhz: f64,
    /// Number of subchannels in the resource pool.
    pub num_subchannels: u32,
    /// Resource blocks per subchannel.
    pub rbs_per_subchannel: u32,
    /// Transmit power in dBm.
    pub tx_power_dbm: f64,
    /// Receiver noise figure in dB.
    pub noise_figure_db: f64,
    /// LOS shadowing standard deviation in dB.
    pub shadowing_sigma_db: f64,
    /// Antenna height in meters.
    pub antenna_height_m: f64,
    /// Modulation and coding scheme index (informational).
    pub mcs_index: u32,
    /// SINR decode threshold in dB.
    pub sinr_threshold_db: f64,
    /// Contiguous subchannels occupied by one transmission (SCI + data).
    pub subchannels_per_tx: u32,
    /// RSRP level above which a decoded reservation excludes candidates.
    pub rsrp_threshold_dbm: f64,
    /// S-RSSI level above which a subchannel counts as busy for CBR.
    pub srssi_threshold_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 5.9,
            bandwidth_mhz: 10.0,
            num_subchannels: 3,
            rbs_per_subchannel: 16,
            tx_power_dbm: 23.0,
            noise_figure_db: 9.0,
            shadowing_sigma_db: 3.0,
            antenna_height_m: 1.5,
            mcs_index: 6,
            sinr_threshold_db: 2.8,
            subchannels_per_tx: 1,
            rsrp_threshold_dbm: -126.0,
            srssi_threshold_dbm: -90.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let pool_hz =
            self.num_subchannels as f64 * self.rbs_per_subchannel as f64 * RESOURCE_BLOCK_HZ;
        if pool_hz > self.bandwidth_mhz * 1e6 {
            return Err(SimError::config(
                "num_subchannels",
                "subchannels x RBs x 180 kHz exceeds the channel bandwidth",
            ));
        }
        if self.num_subchannels == 0 || self.rbs_per_subchannel == 0 {
            return Err(SimError::config("num_subchannels", "must be >= 1"));
        }
        if self.subchannels_per_tx == 0 || self.subchannels_per_tx > self.num_subchannels {
            return Err(SimError::config(
                "subchannels_per_tx",
                "must be in [1, num_subchannels]",
            ));
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("sinr_threshold_db", self.sinr_threshold_db),
            ("rsrp_threshold_dbm", self.rsrp_threshold_dbm),
            ("srssi_threshold_dbm", self.srssi_threshold_dbm),
        ] {
            if !v.is_finite() {
                return Err(SimError::config(name, "must be finite"));
            }
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(SimError::config("shadowing_sigma_db", "must be >= 0"));
        }
        if !(self.antenna_height_m > 1.0) {
            return Err(SimError::config(
                "antenna_height_m",
                "must exceed 1 m (effective height h' = h - 1)",
            ));
        }
        Ok(())
    }

    /// First-slope WINNER+ B1 LOS closed form, valid up to the breakpoint.
    pub fn pathloss_first_slope(&self, d: f64) -> f64 {
        22.7 * d.log10() + 41.0 + 20.0 * (self.carrier_ghz / 5.0).log10()
    }

    /// Second-slope WINNER+ B1 LOS closed form, beyond the breakpoint.
    pub fn pathloss_second_slope(&self, d: f64) -> f64 {
        let h_eff = self.antenna_height_m - 1.0;
        40.0 * d.log10() + 9.45 - 2.0 * 17.3 * h_eff.log10()
            + 2.7 * (self.carrier_ghz / 5.0).log10()
    }

    /// Breakpoint distance of the two-slope model, in meters.
    pub fn breakpoint_distance(&self) -> f64 {
        let h_eff = self.antenna_height_m - 1.0;
        4.0 * h_eff * h_eff * (self.carrier_ghz * 1e9) / SPEED_OF_LIGHT
    }

    /// WINNER+ B1 LOS two-slope path loss in dB. Distances below
    /// [`MIN_PATHLOSS_DISTANCE_M`] are clamped, never rejected.
    pub fn pathloss(&self, d: f64) -> f64 {
        let d = d.max(MIN_PATHLOSS_DISTANCE_M);
        if d <= self.breakpoint_distance() {
            self.pathloss_first_slope(d)
        } else {
            self.pathloss_second_slope(d)
        }
    }

    /// Received power in dBm for one link realization.
    pub fn received_power(&self, d: f64, shadow_db: f64) -> f64 {
        self.tx_power_dbm - self.pathloss(d) + shadow_db
    }

    /// Thermal noise per subchannel in dBm: -174 dBm/Hz over the subchannel
    /// bandwidth plus the noise figure.
    pub fn noise_floor_dbm(&self) -> f64 {
        -174.0 + 10.0 * (self.rbs_per_subchannel as f64 * RESOURCE_BLOCK_HZ).log10()
            + self.noise_figure_db
    }

    /// Decode decision for one reception.
    ///
    /// The receiver decodes iff its SINR clears the threshold and it is not
    /// itself transmitting in the same subframe (half-duplex radio).
    pub fn decode(
        &self,
        signal_dbm: f64,
        interferer_powers_dbm: &[f64],
        receiver_transmitting: bool,
    ) -> RxSample {
        let noise_mw = dbm_to_mw(self.noise_floor_dbm());
        let interference_mw: f64 = interferer_powers_dbm.iter().copied().map(dbm_to_mw).sum();
        let sinr_db = signal_dbm - mw_to_dbm(noise_mw + interference_mw);
        let rssi_dbm = mw_to_dbm(dbm_to_mw(signal_dbm) + noise_mw + interference_mw);
        RxSample {
            rsrp_dbm: signal_dbm,
            rssi_dbm,
            sinr_db,
            decoded: !receiver_transmitting && sinr_db >= self.sinr_threshold_db,
        }
    }
}

/// One reception attempt as seen by a receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxSample {
    /// Received power of the wanted signal, dBm.
    pub rsrp_dbm: f64,
    /// Total received power (signal + interference + noise), dBm.
    pub rssi_dbm: f64,
    /// Signal over (noise + interference), dB.
    pub sinr_db: f64,
    pub decoded: bool,
}

/// Sidelink RSSI of one subchannel in one subframe: the linear-domain sum
/// of every received power landing on it, plus thermal noise.
pub fn subchannel_srssi(contributions_dbm: &[f64], noise_floor_dbm: f64) -> f64 {
    let total_mw: f64 = contributions_dbm.iter().copied().map(dbm_to_mw).sum::<f64>()
        + dbm_to_mw(noise_floor_dbm);
    mw_to_dbm(total_mw)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn radio() -> RadioConfig {
        RadioConfig::default()
    }

    #[test]
    fn first_slope_at_100m() {
        // 22.7*log10(100) + 41.0 + 20*log10(5.9/5) = 87.838...
        let pl = radio().pathloss_first_slope(100.0);
        assert_abs_diff_eq!(pl, 87.84, epsilon = 0.005);
    }

    #[test]
    fn two_slope_model_is_continuous_at_breakpoint() {
        let r = radio();
        let d_bp = r.breakpoint_distance();
        assert_abs_diff_eq!(d_bp, 19.68, epsilon = 0.01);
        let first = r.pathloss_first_slope(d_bp);
        let second = r.pathloss_second_slope(d_bp);
        assert_abs_diff_eq!(first, second, epsilon = 0.02);
    }

    #[test]
    fn clamps_below_min_distance() {
        let r = radio();
        assert_eq!(
            r.pathloss(MIN_PATHLOSS_DISTANCE_M),
            r.pathloss(MIN_PATHLOSS_DISTANCE_M / 2.0)
        );
        assert_eq!(r.pathloss(0.0), r.pathloss(MIN_PATHLOSS_DISTANCE_M));
    }

    #[test]
    fn pathloss_monotone_nondecreasing() {
        let r = radio();
        let mut prev = r.pathloss(0.5);
        let mut d = 1.0;
        while d < 2000.0 {
            let pl = r.pathloss(d);
            assert!(
                pl >= prev - 1e-9,
                "pathloss decreased between {} m and previous step",
                d
            );
            prev = pl;
            d *= 1.07;
        }
    }

    #[test]
    fn received_power_arithmetic() {
        let r = radio();
        // 23 dBm - 87.84 dB + 0 = -64.84 dBm, using the first-slope figure.
        let rx = r.tx_power_dbm - 87.84 + 0.0;
        assert_abs_diff_eq!(rx, -64.84, epsilon = 1e-9);
        // Through the model itself: monotone and shadow-linear.
        let at_min = r.received_power(MIN_PATHLOSS_DISTANCE_M, 0.0);
        let farther = r.received_power(50.0, 0.0);
        assert!(at_min > farther);
        let up = r.received_power(100.0, 3.0);
        let down = r.received_power(100.0, -3.0);
        assert_abs_diff_eq!(up - down, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn noise_floor_formula() {
        let r = radio();
        assert_abs_diff_eq!(r.noise_floor_dbm(), -100.4, epsilon = 0.01);

        // Doubling the bandwidth raises the floor by 3.01 dB.
        let doubled = RadioConfig {
            rbs_per_subchannel: 32,
            ..radio()
        };
        assert_abs_diff_eq!(
            doubled.noise_floor_dbm() - r.noise_floor_dbm(),
            3.0103,
            epsilon = 0.001
        );
    }

    #[test]
    fn decode_clean_channel() {
        let r = radio();
        let sample = r.decode(-64.8, &[], false);
        assert_abs_diff_eq!(sample.sinr_db, 35.6, epsilon = 0.01);
        assert!(sample.decoded);
    }

    #[test]
    fn half_duplex_blocks_decode() {
        let r = radio();
        let sample = r.decode(-40.0, &[], true);
        assert!(sample.sinr_db > r.sinr_threshold_db);
        assert!(!sample.decoded);
    }

    #[test]
    fn equal_power_interferer_blocks_decode() {
        let r = radio();
        let sample = r.decode(-64.8, &[-64.8], false);
        assert!(sample.sinr_db < 0.1);
        assert!(sample.sinr_db > -0.1);
        assert!(!sample.decoded);
    }

    #[test]
    fn decode_monotone_in_signal_and_interference() {
        let r = radio();
        let interferers = [-80.0, -85.0];
        let weak = r.decode(-90.0, &interferers, false);
        let strong = r.decode(-60.0, &interferers, false);
        if weak.decoded {
            assert!(strong.decoded);
        }
        let fewer = r.decode(-90.0, &interferers[..1], false);
        if weak.decoded {
            assert!(fewer.decoded);
        }
        assert!(fewer.sinr_db >= weak.sinr_db);
    }

    #[test]
    fn srssi_empty_is_noise_floor() {
        let r = radio();
        assert_abs_diff_eq!(
            subchannel_srssi(&[], r.noise_floor_dbm()),
            r.noise_floor_dbm(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn srssi_dominated_by_strong_contribution() {
        let r = radio();
        let s = subchannel_srssi(&[-60.0], r.noise_floor_dbm());
        assert_abs_diff_eq!(s, -60.0, epsilon = 0.001);
    }

    #[test]
    fn srssi_two_equal_powers_add_3db() {
        let one = subchannel_srssi(&[-70.0], -200.0);
        let two = subchannel_srssi(&[-70.0, -70.0], -200.0);
        assert_abs_diff_eq!(two - one, 3.0103, epsilon = 0.001);
    }

    #[test]
    fn srssi_of_single_power_equals_power_plus_noise() {
        let r = radio();
        for p in [-95.0, -90.0, -70.0] {
            let s = subchannel_srssi(&[p], r.noise_floor_dbm());
            let expect = mw_to_dbm(dbm_to_mw(p) + dbm_to_mw(r.noise_floor_dbm()));
            assert_abs_diff_eq!(s, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn bandwidth_invariant_rejects_oversized_pool() {
        let bad = RadioConfig {
            num_subchannels: 4,
            rbs_per_subchannel: 16,
            ..radio()
        };
        // 4 * 16 * 180 kHz = 11.52 MHz > 10 MHz
        assert!(bad.validate().is_err());
        assert!(radio().validate().is_ok());
    }
}
