//! CSV output: per-seed result files, the campaign summary, and the
//! resolved-config echo.
//!
//! Layout under the output directory:
//!
//! ```text
//! out/
//!   summary.csv                  one row per (mechanism, seed)
//!   <label>/
//!     config.txt                 resolved configuration echo
//!     seed_<s>/
//!       pdr.csv  cbr.csv  ipg.csv  awareness.csv  grants.csv
//!       channel.csv              only with trace_channel
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{render_config, RunConfig};
use crate::congestion::CrProjection;
use crate::error::SimError;
use crate::runner::{simulate, EventSink, GrantEvent, GrantEventKind, RunOutput};
use crate::scenario::VehicleId;

/// Streams per-event rows into the per-seed CSV files.
struct CsvSink {
    cbr: BufWriter<File>,
    ipg: BufWriter<File>,
    awareness: BufWriter<File>,
    grants: BufWriter<File>,
    channel: Option<BufWriter<File>>,
    trace_grants: bool,
    error: Option<std::io::Error>,
}

impl CsvSink {
    fn create(dir: &Path, trace_grants: bool, trace_channel: bool) -> Result<Self, SimError> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>, SimError> {
            Ok(BufWriter::with_capacity(
                1 << 16,
                File::create(dir.join(name))?,
            ))
        };
        let mut cbr = open("cbr.csv")?;
        writeln!(cbr, "time_ms,vehicle,cbr,cr")?;
        let mut ipg = open("ipg.csv")?;
        writeln!(ipg, "rx,src,gap_ms")?;
        let mut awareness = open("awareness.csv")?;
        writeln!(awareness, "time_ms,vehicle,fraction")?;
        let mut grants = open("grants.csv")?;
        writeln!(
            grants,
            "time_ms,event,vehicle,vehicle_b,grant_id,grant_id_b,rri_ms,rrc,subchannel_start,context,cause,recurrences"
        )?;
        let channel = if trace_channel {
            let mut ch = open("channel.csv")?;
            writeln!(ch, "time_ms,vehicle,subchannel,srssi_dbm,busy,own_used")?;
            Some(ch)
        } else {
            None
        };
        Ok(Self {
            cbr,
            ipg,
            awareness,
            grants,
            channel,
            trace_grants,
            error: None,
        })
    }

    fn finish(mut self, out: &RunOutput) -> Result<(), SimError> {
        // Collision episodes always land in grants.csv.
        for e in &out.collision_events {
            writeln!(
                self.grants,
                "{},collision,{},{},{},{},,,,,{},{}",
                e.first_overlap_ms, e.owner_a, e.owner_b, e.grant_a, e.grant_b,
                e.cause.as_str(), e.recurrences
            )?;
        }
        self.cbr.flush()?;
        self.ipg.flush()?;
        self.awareness.flush()?;
        self.grants.flush()?;
        if let Some(ch) = &mut self.channel {
            ch.flush()?;
        }
        match self.error.take() {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

impl EventSink for CsvSink {
    fn on_control_sample(
        &mut self,
        t_ms: u64,
        vehicle: VehicleId,
        cbr: f64,
        cr: f64,
        _grant: Option<CrProjection>,
    ) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.cbr, "{t_ms},{vehicle},{cbr:.6},{cr:.6}") {
                self.error = Some(e);
            }
        }
    }

    fn on_ipg(&mut self, rx: VehicleId, src: VehicleId, gap_ms: u64) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.ipg, "{rx},{src},{gap_ms}") {
                self.error = Some(e);
            }
        }
    }

    fn on_awareness(&mut self, t_ms: u64, vehicle: VehicleId, fraction: f64) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.awareness, "{t_ms},{vehicle},{fraction:.6}") {
                self.error = Some(e);
            }
        }
    }

    fn on_grant_event(&mut self, event: &GrantEvent) {
        if !self.trace_grants || self.error.is_some() {
            return;
        }
        let e = event;
        let row = match &e.kind {
            GrantEventKind::Created {
                rri_ms,
                rrc,
                subchannel_start,
                first_opportunity_ms,
                context,
            } => format!(
                "{},created,{},,{},,{},{},{},{:?},,{}",
                e.t_ms, e.vehicle, e.grant_id, rri_ms, rrc, subchannel_start, context,
                first_opportunity_ms
            ),
            GrantEventKind::Retuned {
                from_rri_ms,
                to_rri_ms,
            } => format!(
                "{},retuned,{},,{},,{},,,,,{}",
                e.t_ms, e.vehicle, e.grant_id, to_rri_ms, from_rri_ms
            ),
            GrantEventKind::SciSent {
                announced_rri_ms,
                rrc,
            } => format!(
                "{},sci,{},,{},,{},{},,,,",
                e.t_ms, e.vehicle, e.grant_id, announced_rri_ms, rrc
            ),
            kind => format!("{},{},{},,{},,,,,,,", e.t_ms, kind.name(), e.vehicle, e.grant_id),
        };
        if let Err(err) = writeln!(self.grants, "{row}") {
            self.error = Some(err);
        }
    }

    fn on_subframe_channel(
        &mut self,
        t_ms: u64,
        vehicle: VehicleId,
        srssi_dbm: &[f64],
        busy: &[bool],
        own_used: u32,
    ) {
        let Some(ch) = &mut self.channel else { return };
        if self.error.is_some() {
            return;
        }
        for (c, (s, b)) in srssi_dbm.iter().zip(busy).enumerate() {
            if let Err(e) = writeln!(ch, "{t_ms},{vehicle},{c},{s:.3},{},{own_used}", *b as u8) {
                self.error = Some(e);
                return;
            }
        }
    }
}

fn write_pdr_csv(dir: &Path, out: &RunOutput) -> Result<(), SimError> {
    let mut f = BufWriter::new(File::create(dir.join("pdr.csv"))?);
    writeln!(f, "bin_lo_m,bin_hi_m,decoded,total,pdr")?;
    for b in out.pdr.bins() {
        writeln!(
            f,
            "{:.1},{:.1},{},{},{:.6}",
            b.lo_m,
            b.hi_m,
            b.decoded,
            b.total,
            b.pdr()
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Runs one configuration for one seed, writing its per-seed directory.
fn run_one(cfg: &RunConfig, seed: u64) -> Result<RunOutput, SimError> {
    let dir = cfg
        .output_dir
        .join(cfg.effective_label())
        .join(format!("seed_{seed}"));
    let mut sink = CsvSink::create(&dir, cfg.trace_grants, cfg.trace_channel)?;
    let out = simulate(cfg, seed, &mut sink)?;
    sink.finish(&out)?;
    write_pdr_csv(&dir, &out)?;
    Ok(out)
}

fn summary_header(cfg: &RunConfig) -> String {
    let mut cols = vec![
        "mechanism", "seed", "vehicles", "mean_cbr", "mean_cr", "mean_ipg_ms",
        "awareness_mean", "awareness_std", "gamma", "gamma_mt", "gamma_nf", "gamma_tsim",
        "generated", "transmitted", "displaced", "dcc_drops", "missed", "breaks",
        "retunes", "sci_violations",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    let width = cfg.metrics.pdr_bin_width_m;
    let bins = (cfg.metrics.pdr_range_cap_m / width).ceil() as usize;
    for i in 0..bins {
        cols.push(format!(
            "pdr_{}_{}",
            (i as f64 * width) as u64,
            ((i + 1) as f64 * width) as u64
        ));
    }
    cols.join(",")
}

fn summary_row(cfg: &RunConfig, out: &RunOutput) -> String {
    let c = &out.counters;
    let mut row = format!(
        "{},{},{},{:.6},{:.6},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        out.label,
        out.seed,
        out.vehicle_count,
        out.mean_cbr,
        out.mean_cr,
        out.ipg
            .mean_ms()
            .map_or(String::new(), |m| format!("{m:.3}")),
        out.awareness
            .mean()
            .map_or(String::new(), |m| format!("{m:.6}")),
        out.awareness
            .std_dev()
            .map_or(String::new(), |s| format!("{s:.6}")),
        out.gamma.total,
        out.gamma.missed_tx,
        out.gamma.no_free,
        out.gamma.similar_windows,
        c.generated,
        c.transmitted,
        c.displaced,
        c.dcc_drops,
        c.missed_opportunities,
        c.grant_breaks,
        c.retunes,
        out.sci_violations,
    );
    let width = cfg.metrics.pdr_bin_width_m;
    let bins = (cfg.metrics.pdr_range_cap_m / width).ceil() as usize;
    let populated = out.pdr.bins();
    for i in 0..bins {
        let lo = i as f64 * width;
        match populated.iter().find(|b| (b.lo_m - lo).abs() < 1e-9) {
            Some(b) => row.push_str(&format!(",{:.6}", b.pdr())),
            None => row.push(','),
        }
    }
    row
}

/// Runs every (configuration, seed) pair, seeds in parallel, and writes all
/// output files plus one summary.csv in the shared output directory.
pub fn run_campaign(configs: &[RunConfig]) -> Result<Vec<RunOutput>, SimError> {
    if configs.is_empty() {
        return Err(SimError::config("preset", "no run configurations"));
    }
    for cfg in configs {
        cfg.validate()?;
        let label_dir = cfg.output_dir.join(cfg.effective_label());
        fs::create_dir_all(&label_dir)?;
        fs::write(label_dir.join("config.txt"), render_config(cfg))?;
    }

    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let mut outputs: Vec<(usize, u64, RunOutput)> = jobs
        .par_iter()
        .map(|&(i, seed)| run_one(&configs[i], seed).map(|o| (i, seed, o)))
        .collect::<Result<_, _>>()?;
    outputs.sort_by_key(|(i, seed, _)| (*i, *seed));

    let summary_path: PathBuf = configs[0].output_dir.join("summary.csv");
    let mut f = BufWriter::new(File::create(&summary_path)?);
    writeln!(f, "{}", summary_header(&configs[0]))?;
    for (i, _, out) in &outputs {
        writeln!(f, "{}", summary_row(&configs[*i], out))?;
    }
    f.flush()?;

    Ok(outputs.into_iter().map(|(_, _, o)| o).collect())
}
