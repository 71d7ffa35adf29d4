//! Pointing, acquisition and tracking: synthetic spot imaging, the
//! acquisition sequence and the nested coarse/fine control loops.

pub mod acquisition;
pub mod camera;
pub mod control;
pub mod sim;

use std::io::{self, BufRead, Write};

pub use acquisition::{AcquisitionEvent, AcquisitionState, TrackingPhase};
pub use camera::{centroid, render_spot, CameraModel, Imaging, SpotImage, Window, WindowController};
pub use control::{control_step, tracking_stats, DisturbanceProfile, TrackingStats};
pub use sim::{PatConfig, PatSample, PatSimulator};

pub const RESIDUAL_CSV_HEADER: &str = "time_s,az_urad,el_urad,phase";

/// Writes residual samples as CSV with LF line endings.
pub fn write_residual_csv<W: Write>(samples: &[PatSample], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(RESIDUAL_CSV_HEADER.split(','))?;
    for s in samples {
        w.write_record([
            s.time_s.to_string(),
            s.residual[0].to_string(),
            s.residual[1].to_string(),
            s.phase.name().to_string(),
        ])?;
    }
    w.flush()
}

pub fn read_residual_csv<R: BufRead>(input: R) -> io::Result<Vec<PatSample>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> io::Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad number in column {i}")))
        };
        let phase = rec
            .get(3)
            .and_then(TrackingPhase::from_name)
            .ok_or_else(|| bad("bad phase".into()))?;
        out.push(PatSample {
            time_s: num(0)?,
            residual: [num(1)?, num(2)?],
            phase,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_csv_round_trip() {
        let samples = PatSimulator::new(PatConfig::default(), 5).run(1.0);
        let mut buf = Vec::new();
        write_residual_csv(&samples, &mut buf).unwrap();
        assert!(buf.starts_with(b"time_s,az_urad,el_urad,phase\n"));
        assert!(!buf.contains(&b'\r'));
        assert_eq!(read_residual_csv(&buf[..]).unwrap(), samples);
    }
}
