use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{EnvelopeRow, ExperimentReport, RateFit};
use crate::error::Result;

#[derive(Serialize)]
struct SlopeFile<'a> {
    slope: f64,
    intercept: f64,
    ci: [f64; 2],
    target: [f64; 2],
    in_target: bool,
    checksum: &'a str,
}

/// Accepted slope band for the `n⁻¹` rate.
pub const SLOPE_BAND: (f64, f64) = (-1.2, -0.8);

/// Writes the record, timing, aggregate, slope and envelope files plus
/// whitespace-separated `.dat` tables into `dir`.
pub fn write_report(
    dir: &Path,
    report: &ExperimentReport,
    fit: Option<&RateFit>,
    envelope: &[EnvelopeRow],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.csv"), report.records_csv())?;

    let mut timing = String::from("n,replicate,wall_time_s\n");
    for r in &report.records {
        writeln!(timing, "{},{},{:.6}", r.n, r.replicate, r.wall_time).ok();
    }
    fs::write(dir.join("timing.csv"), timing)?;

    let mut agg = String::from("n,count,mean,q10,q50,q90\n");
    let mut agg_dat = String::from("# n mean q10 q50 q90\n");
    for a in &report.aggregates {
        writeln!(agg, "{},{},{:?},{:?},{:?},{:?}", a.n, a.count, a.mean, a.q10, a.q50, a.q90).ok();
        writeln!(agg_dat, "{} {:e} {:e} {:e} {:e}", a.n, a.mean, a.q10, a.q50, a.q90).ok();
    }
    fs::write(dir.join("aggregates.csv"), agg)?;
    fs::write(dir.join("mean_d2.dat"), agg_dat)?;

    if let Some(f) = fit {
        let file = SlopeFile {
            slope: f.slope,
            intercept: f.intercept,
            ci: [f.ci.0, f.ci.1],
            target: [SLOPE_BAND.0, SLOPE_BAND.1],
            in_target: (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&f.slope),
            checksum: &report.checksum,
        };
        fs::write(dir.join("slope.json"), serde_json::to_string_pretty(&file)? + "\n")?;
        let mut fit_dat = String::from("# n fitted_mean\n");
        for a in &report.aggregates {
            let y = (f.intercept + f.slope * (a.n as f64).ln()).exp();
            writeln!(fit_dat, "{} {:e}", a.n, y).ok();
        }
        fs::write(dir.join("fit.dat"), fit_dat)?;
    }

    let mut env = String::from("n,t,freq,bound,se,ok\n");
    let mut env_dat = String::from("# n t freq bound\n");
    for r in envelope {
        writeln!(env, "{},{:?},{:?},{:?},{:?},{}", r.n, r.t, r.freq, r.bound, r.se, r.ok).ok();
        writeln!(env_dat, "{} {:e} {:e} {:e}", r.n, r.t, r.freq, r.bound).ok();
    }
    fs::write(dir.join("envelope.csv"), env)?;
    fs::write(dir.join("envelope.dat"), env_dat)?;

    let mut cfg = serde_json::to_string_pretty(&report.config)?;
    cfg.push('\n');
    fs::write(dir.join("config.json"), cfg)?;
    Ok(())
}
