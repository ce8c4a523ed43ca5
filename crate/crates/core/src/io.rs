//! CSV and JSON file formats.
//!
//! Floats are written in Rust's shortest round-trip notation, so re-reading
//! a file and writing it again is byte-identical and no precision is lost.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::inference::{Chain, ParameterPoint, PosteriorSummary};
use crate::moments::MomentSeries;
use crate::predict::{BoxStats, QuantileBand};
use crate::reaction::{ObservationSeries, Trajectory};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn open_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|source| IoError::File { path: display(path), source })?;
        }
    }
    let file =
        fs::File::create(path).map_err(|source| IoError::File { path: display(path), source })?;
    Ok(csv::Writer::from_writer(file))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn wrap_csv(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: display(path), source }
}

/// Event history: `time,x1,...,xu`, one row per event.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=traj.species_count()).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(wrap_csv(path))?;
    for (i, &t) in traj.times().iter().enumerate() {
        let mut row = vec![format!("{t}")];
        row.extend(traj.state_at(i).iter().map(|c| c.to_string()));
        w.write_record(&row).map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Observation series: `time,cases`.
pub fn write_observations_csv(path: &Path, series: &ObservationSeries) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["time", "cases"]).map_err(wrap_csv(path))?;
    for (&t, &c) in series.times.iter().zip(&series.counts) {
        w.write_record([format!("{t}"), c.to_string()]).map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Read `time,cases`: strictly increasing times, non-negative integer cases.
pub fn read_observations_csv(path: &Path) -> Result<ObservationSeries, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(wrap_csv(path))?;
    {
        let headers = reader.headers().map_err(wrap_csv(path))?;
        if headers.len() < 2 || &headers[0] != "time" || &headers[1] != "cases" {
            return Err(IoError::Format {
                path: display(path),
                message: format!("expected header time,cases, got {headers:?}"),
            });
        }
    }
    let mut times = Vec::new();
    let mut counts = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(wrap_csv(path))?;
        let line = idx + 2;
        let t: f64 = record[0].parse().map_err(|_| IoError::Parse {
            path: display(path),
            line,
            message: format!("bad time {:?}", &record[0]),
        })?;
        if !t.is_finite() {
            return Err(IoError::Parse {
                path: display(path),
                line,
                message: format!("non-finite time {t}"),
            });
        }
        let c: u64 = record[1].parse().map_err(|_| IoError::Parse {
            path: display(path),
            line,
            message: format!("cases must be a non-negative integer, got {:?}", &record[1]),
        })?;
        times.push(t);
        counts.push(c);
    }
    ObservationSeries::new(times, counts).map_err(|e| IoError::Format {
        path: display(path),
        message: e.to_string(),
    })
}

/// Chain samples: `iter,b0,b1,omega,logpost`.
pub fn write_chain_csv(path: &Path, chain: &Chain) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["iter", "b0", "b1", "omega", "logpost"]).map_err(wrap_csv(path))?;
    for (k, (p, lp)) in chain.samples.iter().enumerate() {
        let iter = chain.burn_in + (k + 1) * chain.thinning - 1;
        w.write_record([
            iter.to_string(),
            format!("{}", p.b0),
            format!("{}", p.b1),
            format!("{}", p.omega),
            format!("{lp}"),
        ])
        .map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Read a chain file back as retained samples (schedule metadata is not
/// stored in the CSV).
pub fn read_chain_csv(path: &Path) -> Result<Chain, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(wrap_csv(path))?;
    {
        let headers = reader.headers().map_err(wrap_csv(path))?;
        let expected = ["iter", "b0", "b1", "omega", "logpost"];
        if headers.iter().ne(expected) {
            return Err(IoError::Format {
                path: display(path),
                message: format!("expected header {expected:?}, got {headers:?}"),
            });
        }
    }
    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(wrap_csv(path))?;
        let line = idx + 2;
        let field = |i: usize| -> Result<f64, IoError> {
            record[i].parse().map_err(|_| IoError::Parse {
                path: display(path),
                line,
                message: format!("bad float {:?}", &record[i]),
            })
        };
        let point = ParameterPoint::new(field(1)?, field(2)?, field(3)?);
        samples.push((point, field(4)?));
    }
    if samples.is_empty() {
        return Err(IoError::Format { path: display(path), message: "chain file has no samples".into() });
    }
    Ok(Chain::from_retained(samples, 0))
}

/// Moment series: `time,m,v,y1,y2,y3`.
pub fn write_moments_csv(path: &Path, series: &MomentSeries) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["time", "m", "v", "y1", "y2", "y3"]).map_err(wrap_csv(path))?;
    for (i, s) in series.states.iter().enumerate() {
        w.write_record([
            format!("{}", series.observation.times[i]),
            format!("{}", series.observation.m[i]),
            format!("{}", series.observation.v[i]),
            format!("{}", s.y[0]),
            format!("{}", s.y[1]),
            format!("{}", s.y[2]),
        ])
        .map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Quantile bands: `time,q05,...` with one column per probability level.
pub fn write_band_csv(path: &Path, band: &QuantileBand) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(band.probs.iter().map(|p| format!("q{:02}", (p * 100.0).round() as u32)));
    w.write_record(&header).map_err(wrap_csv(path))?;
    for (i, &t) in band.times.iter().enumerate() {
        let mut row = vec![format!("{t}")];
        row.extend(band.quantiles.iter().map(|level| format!("{}", level[i])));
        w.write_record(&row).map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Box-plot statistics per forecast time.
pub fn write_box_stats_csv(path: &Path, stats: &[BoxStats]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["time", "min", "q1", "median", "q3", "max", "whisker_low", "whisker_high"])
        .map_err(wrap_csv(path))?;
    for s in stats {
        w.write_record([
            format!("{}", s.time),
            s.min.to_string(),
            format!("{}", s.q1),
            format!("{}", s.median),
            format!("{}", s.q3),
            s.max.to_string(),
            format!("{}", s.whisker_low),
            format!("{}", s.whisker_high),
        ])
        .map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

/// Equal-width histogram of posterior samples: `bin_low,bin_high,count,density`.
pub fn write_histogram_csv(path: &Path, samples: &[f64], bins: usize) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["bin_low", "bin_high", "count", "density"]).map_err(wrap_csv(path))?;
    if samples.is_empty() || bins == 0 {
        return w.flush().map_err(|source| IoError::File { path: display(path), source });
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-300);
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    for (i, &count) in counts.iter().enumerate() {
        let bin_low = lo + i as f64 * width;
        w.write_record([
            format!("{bin_low}"),
            format!("{}", bin_low + width),
            count.to_string(),
            format!("{}", count as f64 / (n * width)),
        ])
        .map_err(wrap_csv(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: display(path), source })
}

pub fn write_summary_json(path: &Path, summary: &PosteriorSummary) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|source| IoError::Json { path: display(path), source })?;
    fs::write(path, text + "\n").map_err(|source| IoError::File { path: display(path), source })
}

pub fn write_resolved_config(path: &Path, config: &crate::config::RunConfig) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|source| IoError::Json { path: display(path), source })?;
    fs::write(path, text + "\n").map_err(|source| IoError::File { path: display(path), source })
}
