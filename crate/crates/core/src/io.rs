//! Plain-text file formats.
//!
//! Every writer takes a list of header lines that are emitted as `#`
//! comments; readers skip comment lines. Floats are written in shortest
//! round-trip form, so identical values give identical bytes.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::estimation::{LandmarkEstimate, MapEstimate};
use crate::model::{MeasurementBatch, Point, SensorPose};
use crate::sampler::{SampleTrace, Snapshot};
use crate::scenario::GroundTruthLandmark;
use crate::undetected::IntensityRaster;

fn write_header<W: Write>(w: &mut W, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn write_measurements<W: Write>(w: &mut W, batch: &MeasurementBatch, header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "scanIndex,x,y")?;
    for m in batch.measurements() {
        writeln!(w, "{},{},{}", m.scan, m.z.x, m.z.y)?;
    }
    Ok(())
}

/// Reads `scanIndex,x,y` rows; rows must be ordered by scan.
pub fn read_measurements<R: Read>(r: R, trajectory: Vec<SensorPose>) -> Result<MeasurementBatch> {
    let mut points = Vec::new();
    for row in csv_reader(r).deserialize::<(usize, f64, f64)>() {
        let (scan, x, y) = row?;
        points.push((scan, Point::new(x, y)));
    }
    MeasurementBatch::from_points(points, trajectory)
}

pub fn write_trajectory<W: Write>(w: &mut W, trajectory: &[SensorPose], header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "scanIndex,x,y,heading")?;
    for p in trajectory {
        writeln!(w, "{},{},{},{}", p.scan, p.x, p.y, p.heading)?;
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Vec<SensorPose>> {
    let mut poses = Vec::new();
    for row in csv_reader(r).deserialize::<(usize, f64, f64, f64)>() {
        let (scan, x, y, heading) = row?;
        if scan != poses.len() + 1 {
            return Err(Error::Format(format!("trajectory scan {scan} out of sequence")));
        }
        poses.push(SensorPose::new(x, y, heading, scan)?);
    }
    Ok(poses)
}

pub fn write_ground_truth<W: Write>(w: &mut W, landmarks: &[GroundTruthLandmark], header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "x,y,sxx,sxy,syy,omega")?;
    for l in landmarks {
        let e = &l.extent;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            l.position.x,
            l.position.y,
            e[(0, 0)],
            e[(0, 1)],
            e[(1, 1)],
            l.omega
        )?;
    }
    Ok(())
}

pub fn read_ground_truth<R: Read>(r: R) -> Result<Vec<GroundTruthLandmark>> {
    let mut out = Vec::new();
    for row in csv_reader(r).deserialize::<(f64, f64, f64, f64, f64, f64)>() {
        let (x, y, sxx, sxy, syy, omega) = row?;
        out.push(GroundTruthLandmark {
            position: Point::new(x, y),
            extent: Matrix2::new(sxx, sxy, sxy, syy),
            omega,
        });
    }
    Ok(out)
}

/// One record per snapshot: `iter;logWeight;id,cellKey;id,cellKey;...`.
pub fn write_trace<W: Write>(w: &mut W, trace: &SampleTrace, header: &[String]) -> Result<()> {
    write_header(w, header)?;
    for s in &trace.snapshots {
        write!(w, "{};{}", s.iteration, s.log_weight)?;
        for (id, key) in s.labels.iter().enumerate() {
            write!(w, ";{id},{key}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<SampleTrace> {
    let mut trace = SampleTrace::default();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("trace line {}: {what}", lineno + 1));
        let mut fields = line.split(';');
        let iteration = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| bad("bad iteration"))?;
        let log_weight = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| bad("bad log weight"))?;
        let mut labels = Vec::new();
        for pair in fields {
            let (id, key) = pair.split_once(',').ok_or_else(|| bad("bad id,cellKey pair"))?;
            let id: usize = id.trim().parse().map_err(|_| bad("bad id"))?;
            let key: usize = key.trim().parse().map_err(|_| bad("bad cell key"))?;
            if id != labels.len() {
                return Err(bad("ids must be listed in order"));
            }
            labels.push(key);
        }
        if let Some(prev) = trace.snapshots.last() {
            if prev.iteration >= iteration {
                return Err(bad("iterations must increase"));
            }
        }
        trace.snapshots.push(Snapshot {
            iteration,
            log_weight,
            labels,
        });
    }
    Ok(trace)
}

pub fn write_map<W: Write>(w: &mut W, map: &MapEstimate, header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "x,y,sxx,sxy,syy,omega,support")?;
    for l in &map.landmarks {
        let e = &l.extent;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            l.position.x,
            l.position.y,
            e[(0, 0)],
            e[(0, 1)],
            e[(1, 1)],
            l.weight,
            l.support
        )?;
    }
    Ok(())
}

pub fn read_map<R: Read>(r: R) -> Result<Vec<LandmarkEstimate>> {
    let mut out = Vec::new();
    for row in csv_reader(r).deserialize::<(f64, f64, f64, f64, f64, f64, f64)>() {
        let (x, y, sxx, sxy, syy, weight, support) = row?;
        out.push(LandmarkEstimate {
            position: Point::new(x, y),
            extent: Matrix2::new(sxx, sxy, sxy, syy),
            weight,
            support,
        });
    }
    Ok(out)
}

pub fn write_map_summary<W: Write>(w: &mut W, map: &MapEstimate, header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "clutterRateEstimate,landmarkCount")?;
    writeln!(w, "{},{}", map.clutter_rate_estimate, map.landmarks.len())?;
    Ok(())
}

/// Grid description as a comment, then one CSV row per grid row, lowest `y`
/// first.
pub fn write_raster<W: Write>(w: &mut W, raster: &IntensityRaster, header: &[String]) -> Result<()> {
    write_header(w, header)?;
    let g = &raster.grid;
    writeln!(
        w,
        "# grid xmin={} xmax={} ymin={} ymax={} resolution={} nx={} ny={}",
        g.aoi.xmin, g.aoi.xmax, g.aoi.ymin, g.aoi.ymax, g.resolution, g.nx, g.ny
    )?;
    for row in raster.values.chunks(g.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Row of the per-snapshot metrics file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub ise: f64,
    pub landmark_count: usize,
}

pub fn write_metrics<W: Write>(w: &mut W, rows: &[MetricsRow], header: &[String]) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "snapshotIter,ise,estLandmarkCount")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.iteration, r.ise, r.landmark_count)?;
    }
    Ok(())
}
