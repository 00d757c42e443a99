//! CSV formats for interferograms, raw counts, JSI matrices, power sweeps and
//! series tables. Lines starting with `#` are comments; writers can emit one
//! comment header line.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{ConcentrationSeries, SeriesInput};
use crate::numeric::{Interferogram, Source};
use crate::spectral::Jsi;
use crate::synth::RawCounts;
use crate::transmittance::PowerSweep;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn write_header<W: Write>(w: &mut W, header: Option<&str>) -> Result<()> {
    if let Some(h) = header {
        for line in h.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    Ok(rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect())
}

fn column(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidData(format!("missing column `{name}`")))
}

fn parse(field: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::InvalidData(format!("line {line}: `{field}` is not a number")))
}

/// Interferogram from either `delay_fs,rate` (already normalised) or
/// `delay_fs,coincidences,duration_s` (raw counts, normalised on ingestion).
pub fn read_interferogram<R: Read>(r: R, source: Source) -> Result<Interferogram> {
    let mut rdr = reader(r);
    let hdr = headers(&mut rdr)?;
    let delay = column(&hdr, "delay_fs")?;
    let rate = hdr.iter().position(|h| h == "rate");
    let mut delays = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let raw = match rate {
        Some(_) => None,
        None => Some((column(&hdr, "coincidences")?, column(&hdr, "duration_s")?)),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |k: usize| parse(rec.get(k).unwrap_or(""), line);
        delays.push(get(delay)?);
        match (rate, raw) {
            (Some(k), _) => a.push(get(k)?),
            (None, Some((c, d))) => {
                a.push(get(c)?);
                b.push(get(d)?);
            }
            _ => unreachable!(),
        }
    }
    match raw {
        None => Interferogram::new(delays, a, true, source),
        Some(_) => Interferogram::from_raw_counts(delays, &a, &b, source),
    }
}

pub fn read_interferogram_path(path: &Path, source: Source) -> Result<Interferogram> {
    read_interferogram(File::open(path)?, source)
}

pub fn write_interferogram<W: Write>(mut w: W, ig: &Interferogram, header: Option<&str>) -> Result<()> {
    write_header(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delay_fs", "rate"])?;
    for (t, r) in ig.delays().iter().zip(ig.rates()) {
        out.write_record([t.to_string(), r.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_raw_counts<W: Write>(mut w: W, raw: &RawCounts, header: Option<&str>) -> Result<()> {
    write_header(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delay_fs", "coincidences", "duration_s"])?;
    for ((t, c), d) in raw.delays.iter().zip(&raw.counts).zip(&raw.durations_s) {
        out.write_record([t.to_string(), c.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Matrix with a header row of ωi values and a first column of ωs values.
pub fn write_jsi<W: Write>(mut w: W, jsi: &Jsi, header: Option<&str>) -> Result<()> {
    write_header(&mut w, header)?;
    let n = jsi.grid.n();
    let mut out = csv::Writer::from_writer(w);
    let mut row = Vec::with_capacity(n + 1);
    row.push("omega_s\\omega_i".to_string());
    row.extend((0..n).map(|i| jsi.grid.omega_i(i).to_string()));
    out.write_record(&row)?;
    for s in 0..n {
        row.clear();
        row.push(jsi.grid.omega_s(s).to_string());
        row.extend((0..n).map(|i| jsi.get(s, i).to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

const SWEEP_COLUMNS: [&str; 5] = ["power_mw", "r_sol_0", "r_sam_0", "r_sol_167", "r_sam_167"];

pub fn read_sweep<R: Read>(r: R) -> Result<PowerSweep> {
    let mut rdr = reader(r);
    let hdr = headers(&mut rdr)?;
    let idx: Vec<usize> = SWEEP_COLUMNS.iter().map(|c| column(&hdr, c)).collect::<Result<_>>()?;
    let mut cols: [Vec<f64>; 5] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, k) in idx.iter().enumerate() {
            cols[c].push(parse(rec.get(*k).unwrap_or(""), line)?);
        }
    }
    let [p, a, b, c, d] = cols;
    PowerSweep::new(p, a, b, c, d)
}

pub fn read_sweep_path(path: &Path) -> Result<PowerSweep> {
    read_sweep(File::open(path)?)
}

pub fn write_sweep<W: Write>(mut w: W, sweep: &PowerSweep, header: Option<&str>) -> Result<()> {
    write_header(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_COLUMNS)?;
    for k in 0..sweep.len() {
        out.write_record([
            sweep.powers_mw()[k].to_string(),
            sweep.r_sol_0()[k].to_string(),
            sweep.r_sam_0()[k].to_string(),
            sweep.r_sol_167()[k].to_string(),
            sweep.r_sam_167()[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Series manifest with columns `label,concentration_molar,path`. Relative
/// paths are resolved against `base`; each file is read with
/// [`read_interferogram`].
pub fn read_series_manifest<R: Read>(r: R, base: &Path, source: Source) -> Result<Vec<SeriesInput>> {
    let mut rdr = reader(r);
    let hdr = headers(&mut rdr)?;
    let (l, c, p) = (
        column(&hdr, "label")?,
        column(&hdr, "concentration_molar")?,
        column(&hdr, "path")?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let path = base.join(rec.get(p).unwrap_or(""));
        let interferogram = read_interferogram_path(&path, source)
            .map_err(|e| Error::InvalidData(format!("line {line}: {}: {e}", path.display())))?;
        out.push(SeriesInput {
            label: rec.get(l).unwrap_or("").to_string(),
            concentration_molar: parse(rec.get(c).unwrap_or(""), line)?,
            interferogram,
        });
    }
    Ok(out)
}

pub fn read_series_manifest_path(path: &Path, source: Source) -> Result<Vec<SeriesInput>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_series_manifest(File::open(path)?, base, source)
}

/// `label,concentration,eta,eta_ci95,visibility,fwhm_fs,residual_rms`.
pub fn write_series_table<W: Write>(mut w: W, series: &ConcentrationSeries, header: Option<&str>) -> Result<()> {
    write_header(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "label",
        "concentration",
        "eta",
        "eta_ci95",
        "visibility",
        "fwhm_fs",
        "residual_rms",
    ])?;
    for e in &series.entries {
        out.write_record([
            e.label.clone(),
            e.concentration_molar.to_string(),
            e.fit.params.eta().to_string(),
            e.fit.ci95.get("eta").copied().unwrap_or(f64::NAN).to_string(),
            e.visibility.to_string(),
            e.fwhm_fs.to_string(),
            e.fit.residual_rms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn with_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{jsi, BiphotonModel, FilterSpec, FrequencyGrid, PhaseMatchSpec, PumpSpec, SampleSpec};

    #[test]
    fn interferogram_roundtrip_with_header() {
        let ig = Interferogram::new(vec![-1.0, 0.0, 1.5], vec![0.9, 0.25, 1.0 / 3.0], true, Source::Numeric).unwrap();
        let mut buf = Vec::new();
        write_interferogram(&mut buf, &ig, Some("config sha256 abc")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config sha256 abc\ndelay_fs,rate\n"));
        let back = read_interferogram(&buf[..], Source::Numeric).unwrap();
        assert_eq!(back, ig);
    }

    #[test]
    fn raw_counts_are_normalised_on_read() {
        let text = "delay_fs,coincidences,duration_s\n-300,4000,4\n-200,4000,4\n0,1000,4\n200,4000,4\n300,4000,4\n";
        let ig = read_interferogram(text.as_bytes(), Source::Measured).unwrap();
        assert_eq!(ig.rates()[2], 0.25);
        assert!(ig.variances().is_some());
    }

    #[test]
    fn bad_inputs() {
        assert!(read_interferogram("delay_fs,foo\n1,2\n".as_bytes(), Source::Measured).is_err());
        assert!(read_interferogram("delay_fs,rate\n1,x\n".as_bytes(), Source::Measured).is_err());
        assert!(read_sweep("power_mw,r_sol_0\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let ig = Interferogram::new(vec![-300.0, 0.0, 300.0], vec![1.0, 0.3, 1.0], true, Source::Measured).unwrap();
        for name in ["sol.csv", "s1.csv"] {
            with_file(&dir.path().join(name), |w| write_interferogram(w, &ig, None)).unwrap();
        }
        let manifest = dir.path().join("series.csv");
        std::fs::write(
            &manifest,
            "label,concentration_molar,path\nsolvent,0,sol.csv\nlow,0.01,s1.csv\n",
        )
        .unwrap();
        let inputs = read_series_manifest_path(&manifest, Source::Measured).unwrap();
        assert_eq!(inputs.len(), 2);
        assert_eq!(inputs[1].label, "low");
        assert_eq!(inputs[1].concentration_molar, 0.01);
        std::fs::write(&manifest, "label,concentration_molar,path\nx,0,missing.csv\n").unwrap();
        assert!(read_series_manifest_path(&manifest, Source::Measured).is_err());
    }

    #[test]
    fn sweep_roundtrip() {
        let s = PowerSweep::new(
            vec![0.25, 1.0],
            vec![10.0, 40.0],
            vec![11.0, 44.0],
            vec![20.0, 80.0],
            vec![19.0, 76.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_sweep(&mut buf, &s, None).unwrap();
        assert_eq!(read_sweep(&buf[..]).unwrap(), s);
    }

    #[test]
    fn jsi_matrix_layout() {
        let m = BiphotonModel::new(
            PumpSpec::new(4.674, 0.005).unwrap(),
            PhaseMatchSpec::new(700.0, 600.0, 0.19).unwrap(),
            FilterSpec::new(2.337, 0.05).unwrap(),
            SampleSpec::transparent(4.674, 0.01).unwrap(),
        );
        let grid = FrequencyGrid::for_model(&m, 16).unwrap();
        let j = jsi(&m, &grid);
        let mut buf = Vec::new();
        write_jsi(&mut buf, &j, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0].split(',').count(), 17);
        let first: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, grid.omega_s(0));
    }
}
