//! Scratch calibration probe: prints the load regimes of candidate
//! comparison scenarios across vehicle densities.

use cv2x_sim::congestion::{ControllerKind, RriCrTableKind};
use cv2x_sim::{simulate, NullSink, RunConfig};

fn probe(tag: &str, cfg: &RunConfig, seed: u64) {
    let out = simulate(cfg, seed, &mut NullSink).unwrap();
    println!(
        "{tag:<28} cbr {:.3} pdr300 {:.3} pdr200+ {} ipg {} aware {} γ {:>5} (mt {:>4} nf {:>4} ts {:>4}) miss {:>6} brk {:>5} ret {:>4} tx {}",
        out.mean_cbr,
        out.pdr.mean_pdr_over(0.0, 300.0).unwrap_or(f64::NAN),
        out.pdr
            .mean_pdr_over(200.0, 10_000.0)
            .map_or("-".into(), |p| format!("{p:.3}")),
        out.ipg.mean_ms().map_or("-".into(), |m| format!("{m:.0}")),
        out.awareness
            .mean()
            .map_or("-".into(), |a| format!("{:.3}", a)),
        out.gamma.total,
        out.gamma.missed_tx,
        out.gamma.no_free,
        out.gamma.similar_windows,
        out.counters.missed_opportunities,
        out.counters.grant_breaks,
        out.counters.retunes,
        out.counters.transmitted,
    );
}

fn base(vehicles: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.density = vehicles / 600.0;
    cfg.scenario.sim_duration_ms = 20_000;
    cfg.scenario.warmup_ms = 5_000;
    if let Ok(s) = std::env::var("SUBCH_PER_TX") {
        cfg.radio.subchannels_per_tx = s.parse().unwrap();
    }
    if let Ok(s) = std::env::var("SMOOTH") {
        cfg.controller.adaptive_cbr_smoothing = s.parse().unwrap();
    }
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("sweep");

    match mode {
        "sweep" => {
            for vehicles in [100.0, 140.0, 180.0, 220.0, 260.0, 300.0] {
                let cfg = base(vehicles);
                probe(&format!("no_dcc/{vehicles}"), &cfg, 1);
            }
        }
        "block20" => {
            let vehicles: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100.0);
            let d = base(vehicles);
            for seed in [1, 2] {
                let mut c = d.clone();
                c.controller.kind = ControllerKind::NoDcc;
                probe(&format!("no_dcc/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::Reactive;
                probe(&format!("reactive/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::Adaptive;
                c.controller.adaptive_target_cbr = std::env::var("TARGET20")
                    .ok()
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0.2);
                probe(&format!("adaptive_20/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::DropAggressive;
                probe(&format!("drop_aggressive/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::RriLookup;
                probe(&format!("rri_lookup/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::RriCrLimit;
                c.controller.rri_cr_table = RriCrTableKind::Aggressive;
                probe(&format!("rri_cr_aggr/{vehicles}"), &c, seed);
            }
        }
        "block60" => {
            let vehicles: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(220.0);
            let d = base(vehicles);
            for seed in [1, 2] {
                let mut c = d.clone();
                c.controller.kind = ControllerKind::NoDcc;
                probe(&format!("no_dcc/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::Adaptive;
                c.controller.adaptive_target_cbr = 0.68;
                probe(&format!("adaptive_68/{vehicles}"), &c, seed);
                let mut c = d.clone();
                c.controller.kind = ControllerKind::RriCrLimit;
                probe(&format!("rri_cr_limit/{vehicles}"), &c, seed);
            }
        }
        "smoothing" => {
            let vehicles: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100.0);
            for smoothing in [0.0, 0.5, 0.8, 0.9] {
                let mut c = base(vehicles);
                c.controller.kind = ControllerKind::Adaptive;
                c.controller.adaptive_target_cbr = 0.2;
                c.controller.adaptive_cbr_smoothing = smoothing;
                probe(&format!("adaptive_20/s={smoothing}"), &c, 1);
            }
        }
        "gb" => {
            let vehicles: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100.0);
            let d = base(vehicles);
            let mut c = d.clone();
            c.controller.kind = ControllerKind::NoDcc;
            probe("no_dcc", &c, 1);
            let mut c = d.clone();
            c.controller.kind = ControllerKind::Reactive;
            c.controller.grant_breaking = true;
            probe("reactive_gb", &c, 1);
            let mut c = d;
            c.controller.kind = ControllerKind::Reactive;
            probe("reactive_no_gb", &c, 1);
        }
        other => eprintln!("unknown mode {other}"),
    }
}
