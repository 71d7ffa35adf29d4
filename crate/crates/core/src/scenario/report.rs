//! Report files: per-block CSV, PAT residual CSV and a key = value summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::run::{BlockRecord, ScenarioReport};
use super::ScenarioError;
use crate::channel::db_to_transmittance;
use crate::pat::write_residual_csv;

pub const BLOCKS_CSV_HEADER: &str = "block_index,time_s,T_est,xi_est,i_ab,chi_be,delta_n,key_rate_bps,clamped";

/// Reference and derived transmittances further apart than this are
/// flagged in the summary.
const TRANSMITTANCE_MISMATCH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFiles {
    pub blocks: PathBuf,
    pub pat: PathBuf,
    pub summary: PathBuf,
}

pub fn write_blocks_csv<W: Write>(blocks: &[BlockRecord], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(BLOCKS_CSV_HEADER.split(','))?;
    for b in blocks {
        w.write_record([
            b.block_index.to_string(),
            b.time_s.to_string(),
            b.t_est.to_string(),
            b.xi_est.to_string(),
            b.i_ab.to_string(),
            b.chi_be.to_string(),
            b.delta_n.to_string(),
            b.key_rate_bps.to_string(),
            b.clamped.to_string(),
        ])?;
    }
    w.flush()
}

pub fn read_blocks_csv<R: BufRead>(input: R) -> io::Result<Vec<BlockRecord>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != BLOCKS_CSV_HEADER {
        return Err(bad("unexpected blocks header".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        let num = |i: usize| -> io::Result<f64> {
            field(i)?
                .parse()
                .map_err(|_| bad(format!("bad number in column {i}")))
        };
        out.push(BlockRecord {
            block_index: field(0)?
                .parse()
                .map_err(|_| bad("bad block_index".into()))?,
            time_s: num(1)?,
            t_est: num(2)?,
            xi_est: num(3)?,
            i_ab: num(4)?,
            chi_be: num(5)?,
            delta_n: num(6)?,
            key_rate_bps: num(7)?,
            clamped: field(8)?
                .parse()
                .map_err(|_| bad("bad clamped flag".into()))?,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn render_summary(report: &ScenarioReport) -> String {
    let cfg = &report.config;
    let c = &report.counters;
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    line("scenario", cfg.name.clone());
    if !cfg.description.is_empty() {
        line("description", cfg.description.clone());
    }
    line("seed", report.seed.to_string());
    line("duration_s", cfg.duration_s.to_string());
    line("block_size", cfg.session.block_size.to_string());
    line("sim_pulses_per_block", report.sim_pulses_per_block.to_string());
    line("stride", report.stride.to_string());
    line("loss_db", cfg.channel.loss_db.to_string());
    line("transmittance_from_loss_db", db_to_transmittance(cfg.channel.loss_db).to_string());
    line("excess_noise", cfg.channel.excess_noise.to_string());
    line("v1", cfg.session.v1.to_string());
    line("detection_efficiency", cfg.receiver.detection_efficiency.to_string());
    line("electronic_noise", cfg.receiver.electronic_noise.to_string());
    line("acquisition", if c.acquisition_failed { "failed" } else { "ok" }.to_string());
    line("link_time_s", opt(report.link_time_s));
    line("blocks", report.blocks.len().to_string());
    line("blocks_attempted", c.blocks_attempted.to_string());
    line("keys_confirmed", c.keys_confirmed.to_string());
    line("scan_failures", c.scan_failures.to_string());
    line("sync_failures", c.sync_failures.to_string());
    for (code, n) in &c.aborts {
        line(&format!("aborts_{code}"), n.to_string());
    }
    line("clamped_blocks", report.blocks.iter().filter(|b| b.clamped).count().to_string());
    line("mean_t_est", opt(report.mean_t_est()));
    line("mean_key_rate_bps", report.mean_key_rate_bps.to_string());
    line("mean_key_rate_kbps", report.mean_key_rate_kbps().to_string());
    line("modulator_saturation_fraction", report.saturation_fraction.to_string());
    line("pat_enabled", cfg.pat.enabled.to_string());
    line("pat_rms_urad", opt(report.pat_stats.map(|p| p.rms)));
    line("pat_p95_urad", opt(report.pat_stats.map(|p| p.p95)));
    line("pat_lock_fraction", opt(report.pat_stats.map(|p| p.lock_fraction)));
    line("pat_gimbal_saturations", report.pat_counters.gimbal_saturations.to_string());
    line("pat_mirror_saturations", report.pat_counters.mirror_saturations.to_string());
    line("pat_regressions", report.pat_counters.regressions.to_string());

    if let Some(r) = &cfg.paper_reference {
        s.push_str(
            "# paper_measured_* are reference values measured in the field trial. They are carried for\n\
             # comparison only and are not reproduced by this simulation, whose noise calibration is assumed.\n",
        );
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("paper_measured_loss_db", opt(r.loss_db));
        line("paper_measured_transmittance", opt(r.transmittance));
        line("paper_measured_key_rate_kbps", opt(r.key_rate_kbps));
        for (i, v) in r.other_loss_db.iter().enumerate() {
            line(&format!("paper_measured_other_loss_db_{}", i + 1), v.to_string());
        }
        for (i, v) in r.other_key_rates_kbps.iter().enumerate() {
            line(&format!("paper_measured_other_key_rate_kbps_{}", i + 1), v.to_string());
        }
        if let (Some(db), Some(t)) = (r.loss_db, r.transmittance) {
            let derived = db_to_transmittance(db);
            if (derived - t).abs() > TRANSMITTANCE_MISMATCH {
                line(
                    "reference_discrepancy",
                    format!(
                        "stated transmittance {t} disagrees with 10^(-{db}/10) = {derived:.5}; \
                         the simulation uses loss_db"
                    ),
                );
            }
        }
    }
    s
}

fn create(path: &Path) -> Result<BufWriter<File>, ScenarioError> {
    File::create(path).map(BufWriter::new).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<name>_blocks.csv`, `<name>_pat.csv` and `<name>_summary.txt`
/// into `out_dir`, creating it if needed.
pub fn emit_report(report: &ScenarioReport, out_dir: impl AsRef<Path>) -> Result<EmittedFiles, ScenarioError> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let name = report.name();
    let files = EmittedFiles {
        blocks: dir.join(format!("{name}_blocks.csv")),
        pat: dir.join(format!("{name}_pat.csv")),
        summary: dir.join(format!("{name}_summary.txt")),
    };
    write_blocks_csv(&report.blocks, create(&files.blocks)?).map_err(io_at(&files.blocks))?;
    write_residual_csv(&report.pat_samples, create(&files.pat)?).map_err(io_at(&files.pat))?;
    let mut w = create(&files.summary)?;
    w.write_all(render_summary(report).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_at(&files.summary))?;
    Ok(files)
}
