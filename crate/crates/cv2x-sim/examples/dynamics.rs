//! Scratch probe: prints 500 ms snapshots of population CBR statistics to
//! inspect controller synchronization.

use cv2x_sim::congestion::{ControllerKind, RriCrTableKind};
use cv2x_sim::runner::EventSink;
use cv2x_sim::scenario::VehicleId;
use cv2x_sim::{simulate, RunConfig};

#[derive(Default)]
struct SeriesSink {
    // (time bucket, cbr) samples
    samples: Vec<(u64, f64)>,
}

impl EventSink for SeriesSink {
    fn on_control_sample(
        &mut self,
        t_ms: u64,
        _vehicle: VehicleId,
        cbr: f64,
        _cr: f64,
        _grant: Option<cv2x_sim::congestion::CrProjection>,
    ) {
        self.samples.push((t_ms, cbr));
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(String::as_str).unwrap_or("rri_cr_limit") {
        "reactive" => ControllerKind::Reactive,
        "adaptive" => ControllerKind::Adaptive,
        "rri_lookup" => ControllerKind::RriLookup,
        "no_dcc" => ControllerKind::NoDcc,
        _ => ControllerKind::RriCrLimit,
    };
    let vehicles: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(380.0);
    let target: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.68);

    let mut cfg = RunConfig::default();
    cfg.scenario.density = vehicles / 600.0;
    cfg.scenario.sim_duration_ms = 20_000;
    cfg.scenario.warmup_ms = 5_000;
    cfg.radio.subchannels_per_tx = 1;
    cfg.controller.kind = kind;
    cfg.controller.adaptive_target_cbr = target;
    if let Ok(s) = std::env::var("RRI_TABLE") {
        cfg.controller.rri_cr_table = RriCrTableKind::parse(&s).unwrap();
    }

    let mut sink = SeriesSink::default();
    let out = simulate(&cfg, 1, &mut sink).unwrap();

    let bucket_ms = 500u64;
    let buckets = cfg.scenario.sim_duration_ms / bucket_ms;
    println!("time_s  mean_cbr  std_cbr");
    for b in 0..buckets {
        let lo = b * bucket_ms;
        let hi = lo + bucket_ms;
        let vals: Vec<f64> = sink
            .samples
            .iter()
            .filter(|(t, _)| *t >= lo && *t < hi)
            .map(|(_, c)| *c)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        println!("{:6.1}  {:8.3}  {:7.3}", lo as f64 / 1000.0, mean, var.sqrt());
    }
    println!(
        "mean cbr {:.3}, ipg {:?}, retunes {}, tx {}",
        out.mean_cbr,
        out.ipg.mean_ms(),
        out.counters.retunes,
        out.counters.transmitted
    );
}
