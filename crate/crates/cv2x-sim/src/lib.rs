//! Discrete-event simulator of the C-V2X Mode 4 sidelink MAC.
//!
//! Vehicles on a wraparound highway self-schedule periodic broadcast
//! transmissions through Sensing-Based Semi-Persistent Scheduling and run a
//! pluggable congestion-control layer: the standardized reactive and
//! adaptive rate controllers, three packet-dropping tables, and two schemes
//! that adapt the grant's resource reservation interval instead of skipping
//! reserved resources. The full metric suite — distance-binned packet
//! delivery ratio, channel busy/occupancy ratios, inter-packet gap,
//! neighbour awareness, and the colliding-grant taxonomy — is collected per
//! run and written as CSV.
//!
//! Start with the runnable programs in `examples/` (one per capability),
//! or drive a run programmatically:
//!
//! ```no_run
//! use cv2x_sim::{parse_config, simulate, NullSink};
//!
//! let mut cfg = parse_config("[controller]\nkind = rri_cr_limit\n").unwrap();
//! cfg.apply_desk_scale();
//! let out = simulate(&cfg, 1, &mut NullSink).unwrap();
//! println!("mean CBR {:.3}", out.mean_cbr);
//! ```

pub mod app;
pub mod channel;
pub mod config;
pub mod congestion;
pub mod error;
pub mod metrics;
pub mod output;
pub mod presets;
pub mod runner;
pub mod sbsps;
pub mod scenario;

pub use config::{parse_config, render_config, MetricsConfig, RunConfig};
pub use error::SimError;
pub use output::run_campaign;
pub use presets::{build_preset, list_presets};
pub use runner::{simulate, EventSink, NullSink, RunOutput};
