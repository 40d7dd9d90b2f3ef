//! Scratch grid sweep: evaluates the rank-order health of the comparison
//! blocks across candidate scenario parameters.

use rayon::prelude::*;

use cv2x_sim::congestion::{ControllerKind, RriCrTableKind};
use cv2x_sim::{simulate, NullSink, RunConfig, RunOutput};

const SEEDS: [u64; 3] = [1, 2, 3];

fn base(vehicles: f64, smoothing: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.density = vehicles / 600.0;
    cfg.scenario.sim_duration_ms = std::env::var("DUR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(20_000);
    cfg.scenario.warmup_ms = std::env::var("WARM")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(5_000);
    cfg.controller.adaptive_cbr_smoothing = smoothing;
    if let Ok(v) = std::env::var("SHIFT") {
        cfg.controller.aggressive_cbr_shift = v.parse().unwrap();
    }
    cfg
}

fn run_all(cfg: &RunConfig) -> Vec<RunOutput> {
    SEEDS
        .par_iter()
        .map(|&s| simulate(cfg, s, &mut NullSink).unwrap())
        .collect()
}

fn mean(outs: &[RunOutput], f: impl Fn(&RunOutput) -> f64) -> f64 {
    outs.iter().map(&f).sum::<f64>() / outs.len() as f64
}

fn block20(vehicles: f64, target: f64, smoothing: f64) {
    let d = base(vehicles, smoothing);
    let mk = |kind: ControllerKind| {
        let mut c = d.clone();
        c.controller.kind = kind;
        c
    };
    let mut adaptive = mk(ControllerKind::Adaptive);
    adaptive.controller.adaptive_target_cbr = target;
    let mut rri_cr = mk(ControllerKind::RriCrLimit);
    rri_cr.controller.rri_cr_table = RriCrTableKind::Aggressive;
    if let Ok(v) = std::env::var("RRI_SHIFT") {
        rri_cr.controller.aggressive_cbr_shift = v.parse().unwrap();
    }

    let runs: Vec<(&str, Vec<RunOutput>)> = [
        ("no_dcc", mk(ControllerKind::NoDcc)),
        ("reactive", mk(ControllerKind::Reactive)),
        ("adaptive", adaptive),
        ("drop_aggr", mk(ControllerKind::DropAggressive)),
        ("rri_lookup", mk(ControllerKind::RriLookup)),
        ("rri_cr", rri_cr),
    ]
    .into_iter()
    .map(|(n, c)| (n, run_all(&c)))
    .collect();

    let g = |name: &str| {
        let outs = &runs.iter().find(|(n, _)| *n == name).unwrap().1;
        mean(outs, |o| o.gamma.total as f64)
    };
    let aware = |name: &str| {
        let outs = &runs.iter().find(|(n, _)| *n == name).unwrap().1;
        mean(outs, |o| o.awareness.mean().unwrap_or(0.0))
    };
    let pdr200 = |name: &str| {
        let outs = &runs.iter().find(|(n, _)| *n == name).unwrap().1;
        mean(outs, |o| o.pdr.mean_pdr_over(200.0, 1e9).unwrap_or(0.0))
    };
    let cbr = |name: &str| {
        let outs = &runs.iter().find(|(n, _)| *n == name).unwrap().1;
        mean(outs, |o| o.mean_cbr)
    };

    println!(
        "## block20 veh={vehicles} target={target} smooth={smoothing}\n\
         cbr: no_dcc {:.3} reactive {:.3} adaptive {:.3} drop {:.3} lookup {:.3} rri_cr {:.3}",
        cbr("no_dcc"), cbr("reactive"), cbr("adaptive"), cbr("drop_aggr"),
        cbr("rri_lookup"), cbr("rri_cr"),
    );
    println!(
        "gamma: rri_cr {:.0} lookup {:.0} drop {:.0} adaptive {:.0} reactive {:.0}  \
         C5[{}{}{}{}]",
        g("rri_cr"), g("rri_lookup"), g("drop_aggr"), g("adaptive"), g("reactive"),
        u8::from(g("rri_cr") < g("rri_lookup")),
        u8::from(g("rri_lookup") < g("drop_aggr")),
        u8::from(g("drop_aggr") <= g("adaptive")),
        u8::from(g("adaptive") < g("reactive")),
    );
    println!(
        "pdr200: rri_cr {:.3} adaptive {:.3} gap {:+.1} pts C6[{}]",
        pdr200("rri_cr"),
        pdr200("adaptive"),
        (pdr200("rri_cr") - pdr200("adaptive")) * 100.0,
        u8::from(pdr200("rri_cr") - pdr200("adaptive") >= 0.03),
    );
    let awares: Vec<(&str, f64)> = runs.iter().map(|(n, _)| (*n, aware(n))).collect();
    let max = awares.iter().map(|(_, a)| *a).fold(f64::MIN, f64::max);
    let min = awares.iter().map(|(_, a)| *a).fold(f64::MAX, f64::min);
    println!(
        "aware: {}  C10[hi:{} lo:{} abs:{}]\n",
        awares
            .iter()
            .map(|(n, a)| format!("{n} {a:.3}"))
            .collect::<Vec<_>>()
            .join(" "),
        u8::from(aware("rri_cr") == max),
        u8::from(aware("reactive") == min),
        u8::from(aware("rri_cr") >= 0.95),
    );
}

fn block60(vehicles: f64, smoothing: f64) {
    let d = base(vehicles, smoothing);
    let mk = |kind: ControllerKind| {
        let mut c = d.clone();
        c.controller.kind = kind;
        c
    };
    let mut adaptive = mk(ControllerKind::Adaptive);
    adaptive.controller.adaptive_target_cbr = 0.68;

    let no_dcc = run_all(&mk(ControllerKind::NoDcc));
    let adapt = run_all(&adaptive);
    let rri_cr = run_all(&mk(ControllerKind::RriCrLimit));

    let ipg = |outs: &[RunOutput]| mean(outs, |o| o.ipg.mean_ms().unwrap_or(0.0));
    let pdr = |outs: &[RunOutput]| mean(outs, |o| o.pdr.mean_pdr_over(200.0, 1e9).unwrap_or(0.0));
    println!(
        "## block60 veh={vehicles} smooth={smoothing}\n\
         cbr: no_dcc {:.3} adaptive {:.3} rri_cr {:.3}  C8[{}]",
        mean(&no_dcc, |o| o.mean_cbr),
        mean(&adapt, |o| o.mean_cbr),
        mean(&rri_cr, |o| o.mean_cbr),
        u8::from(
            mean(&no_dcc, |o| o.mean_cbr) > 0.68
                && mean(&adapt, |o| o.mean_cbr) >= 0.63
                && mean(&adapt, |o| o.mean_cbr) <= 0.73
        ),
    );
    println!(
        "pdr200: rri_cr {:.3} adaptive {:.3} no_dcc {:.3}  C7[{}]",
        pdr(&rri_cr),
        pdr(&adapt),
        pdr(&no_dcc),
        u8::from(pdr(&rri_cr) > pdr(&adapt) && pdr(&rri_cr) > pdr(&no_dcc)),
    );
    println!(
        "ipg: no_dcc {:.0} rri_cr {:.0} adaptive {:.0}  C11[{}]\n",
        ipg(&no_dcc),
        ipg(&rri_cr),
        ipg(&adapt),
        u8::from(ipg(&no_dcc) < ipg(&rri_cr) && ipg(&rri_cr) < ipg(&adapt)),
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(String::as_str).unwrap_or("") {
        "b20" => {
            let veh: f64 = args[2].parse().unwrap();
            let target: f64 = args[3].parse().unwrap();
            let smooth: f64 = args[4].parse().unwrap();
            block20(veh, target, smooth);
        }
        "b60" => {
            let veh: f64 = args[2].parse().unwrap();
            let smooth: f64 = args[3].parse().unwrap();
            block60(veh, smooth);
        }
        _ => {
            for veh in [276.0, 500.0] {
                for target in [0.2, 0.3] {
                    block20(veh, target, 0.8);
                }
            }
            for veh in [340.0, 380.0] {
                block60(veh, 0.8);
            }
        }
    }
}
