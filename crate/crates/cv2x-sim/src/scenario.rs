//! Highway scenario and vehicle kinematics.
//!
//! Vehicles drive at constant speed on a multi-lane road that wraps around
//! as a torus, so the vehicle density seen by the channel stays constant
//! for the whole run.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::SimError;

/// Lateral clearance between the two innermost opposing lanes, expressed
/// in lane widths.
const MEDIAN_LANE_WIDTHS: f64 = 1.0;

/// Scenario parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Road length in meters.
    pub road_length: f64,
    /// Lanes per driving direction (total lanes = 2x this).
    pub lanes_per_direction: u32,
    /// Lane width in meters.
    pub lane_width: f64,
    /// Vehicles per meter of road.
    pub density: f64,
    /// Vehicle speed in meters/second.
    pub speed: f64,
    /// Simulated duration in milliseconds.
    pub sim_duration_ms: u64,
    /// Warmup period excluded from metrics, in milliseconds.
    pub warmup_ms: u64,
    /// Seed for all randomness of the run.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            road_length: 600.0,
            lanes_per_direction: 3,
            lane_width: 3.5,
            density: 0.46,
            speed: 50.0 / 3.6,
            sim_duration_ms: 20_000,
            warmup_ms: 5_000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.road_length > 0.0) {
            return Err(SimError::config("road_length", "must be > 0"));
        }
        if self.lanes_per_direction < 1 {
            return Err(SimError::config("lanes_per_direction", "must be >= 1"));
        }
        if !(self.lane_width > 0.0) {
            return Err(SimError::config("lane_width", "must be > 0"));
        }
        if !(self.density > 0.0) {
            return Err(SimError::config("density", "must be > 0"));
        }
        if !(self.speed >= 0.0) {
            return Err(SimError::config("speed", "must be >= 0"));
        }
        if self.warmup_ms >= self.sim_duration_ms {
            return Err(SimError::config(
                "warmup_ms",
                "must be shorter than sim_duration_ms",
            ));
        }
        Ok(())
    }

    /// Total vehicle count: round(density x road_length).
    pub fn vehicle_count(&self) -> usize {
        (self.density * self.road_length).round() as usize
    }
}

/// Identifier of a vehicle within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vehicle's immutable kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Lane index within the vehicle's direction, 0 = innermost.
    pub lane: u32,
    /// Initial position along the road in meters, in [0, road_length).
    pub initial_position: f64,
    /// Driving direction: +1.0 or -1.0.
    pub direction: f64,
}

impl VehicleState {
    /// Position along the road at time `t_ms`, wrapping around the torus.
    pub fn position_at(&self, t_ms: u64, scenario: &ScenarioConfig) -> f64 {
        let travelled = self.direction * scenario.speed * (t_ms as f64 / 1000.0);
        (self.initial_position + travelled).rem_euclid(scenario.road_length)
    }

    /// Lateral offset from the road median in meters. Positive-direction
    /// lanes sit above the median, the opposing lanes mirror below it.
    pub fn lateral_offset(&self, scenario: &ScenarioConfig) -> f64 {
        let w = scenario.lane_width;
        let off = (self.lane as f64 + 0.5) * w + 0.5 * MEDIAN_LANE_WIDTHS * w;
        self.direction * off
    }
}

/// Builds the vehicle population: `round(density x road_length)` vehicles
/// spread evenly across lanes, uniformly spaced per lane with seeded jitter.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Vec<VehicleState>, SimError> {
    config.validate()?;
    let total = config.vehicle_count();
    let lanes = (config.lanes_per_direction * 2) as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed ^ SCENARIO_STREAM);

    let mut vehicles = Vec::with_capacity(total);
    let mut id = 0u32;
    for lane_slot in 0..lanes {
        // Spread the remainder over the first lanes.
        let count = total / lanes + usize::from(lane_slot < total % lanes);
        if count == 0 {
            continue;
        }
        let direction = if lane_slot < config.lanes_per_direction as usize {
            1.0
        } else {
            -1.0
        };
        let lane = (lane_slot % config.lanes_per_direction as usize) as u32;
        let spacing = config.road_length / count as f64;
        for j in 0..count {
            let jitter: f64 = rng.gen::<f64>() * spacing;
            let pos = (j as f64 * spacing + jitter).rem_euclid(config.road_length);
            vehicles.push(VehicleState {
                id: VehicleId(id),
                lane,
                initial_position: pos,
                direction,
            });
            id += 1;
        }
    }
    Ok(vehicles)
}

/// Keeps the placement stream independent from the other per-run streams.
const SCENARIO_STREAM: u64 = 0x5eed_0001;

/// Euclidean distance between two vehicles at time `t_ms`, wraparound-aware
/// along the road axis and including the lateral lane offset.
pub fn pair_distance(
    a: &VehicleState,
    b: &VehicleState,
    t_ms: u64,
    scenario: &ScenarioConfig,
) -> f64 {
    let xa = a.position_at(t_ms, scenario);
    let xb = b.position_at(t_ms, scenario);
    let along = (xa - xb).abs();
    let along = along.min(scenario.road_length - along);
    let lateral = a.lateral_offset(scenario) - b.lateral_offset(scenario);
    (along * along + lateral * lateral).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn table_density_yields_276_vehicles() {
        let cfg = ScenarioConfig {
            density: 0.46,
            road_length: 600.0,
            ..base()
        };
        assert_eq!(cfg.vehicle_count(), 276);
        assert_eq!(build_scenario(&cfg).unwrap().len(), 276);
    }

    #[test]
    fn even_lane_distribution() {
        let cfg = ScenarioConfig {
            density: 0.1,
            road_length: 100.0,
            lanes_per_direction: 1,
            ..base()
        };
        let vehicles = build_scenario(&cfg).unwrap();
        assert_eq!(vehicles.len(), 10);
        let forward = vehicles.iter().filter(|v| v.direction > 0.0).count();
        assert_eq!(forward, 5);
        assert_eq!(vehicles.len() - forward, 5);
    }

    #[test]
    fn same_seed_reproduces_positions() {
        let cfg = base();
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn positions_in_range_for_any_seed() {
        for seed in 0..20 {
            let cfg = ScenarioConfig { seed, ..base() };
            for v in build_scenario(&cfg).unwrap() {
                assert!(v.initial_position >= 0.0 && v.initial_position < cfg.road_length);
            }
        }
    }

    #[test]
    fn position_advances_at_speed() {
        let cfg = ScenarioConfig {
            speed: 13.89,
            ..base()
        };
        let v = VehicleState {
            id: VehicleId(0),
            lane: 0,
            initial_position: 0.0,
            direction: 1.0,
        };
        assert!((v.position_at(1000, &cfg) - 13.89).abs() < 1e-9);
        assert!((v.position_at(0, &cfg) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn position_wraps_around() {
        let cfg = ScenarioConfig {
            speed: 13.89,
            road_length: 600.0,
            ..base()
        };
        let v = VehicleState {
            id: VehicleId(0),
            lane: 0,
            initial_position: 590.0,
            direction: 1.0,
        };
        assert!((v.position_at(1000, &cfg) - 3.89).abs() < 1e-9);
    }

    #[test]
    fn position_is_periodic() {
        let cfg = ScenarioConfig {
            speed: 15.0,
            road_length: 600.0,
            ..base()
        };
        let v = VehicleState {
            id: VehicleId(0),
            lane: 1,
            initial_position: 123.0,
            direction: -1.0,
        };
        let period_ms = (cfg.road_length / cfg.speed * 1000.0) as u64; // 40 s
        assert!((v.position_at(0, &cfg) - v.position_at(period_ms, &cfg)).abs() < 1e-6);
    }

    #[test]
    fn distance_identity_and_wraparound() {
        let cfg = ScenarioConfig {
            speed: 0.0,
            ..base()
        };
        let mk = |pos: f64| VehicleState {
            id: VehicleId(0),
            lane: 0,
            initial_position: pos,
            direction: 1.0,
        };
        assert_eq!(pair_distance(&mk(10.0), &mk(10.0), 0, &cfg), 0.0);
        assert!((pair_distance(&mk(0.0), &mk(300.0), 0, &cfg) - 300.0).abs() < 1e-9);
        assert!((pair_distance(&mk(10.0), &mk(590.0), 0, &cfg) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn distance_symmetric_and_triangle() {
        let cfg = base();
        let vehicles = build_scenario(&cfg).unwrap();
        for t in [0u64, 777, 5000] {
            for w in vehicles.windows(3).take(40) {
                let (a, b, c) = (&w[0], &w[1], &w[2]);
                let ab = pair_distance(a, b, t, &cfg);
                let ba = pair_distance(b, a, t, &cfg);
                assert!((ab - ba).abs() < 1e-12);
                let bc = pair_distance(b, c, t, &cfg);
                let ac = pair_distance(a, c, t, &cfg);
                assert!(ac <= ab + bc + 1e-9);
            }
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = ScenarioConfig {
            density: 0.0,
            ..base()
        };
        let err = build_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("density"));
    }
}
