//! File interchange: CSV histograms, event-pair CSV, response JSON,
//! trace CSV, and the run manifest written alongside every output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::histogram::Histogram;
use crate::response::ResponseMatrix;
use crate::unfolder::TracePoint;

pub const HISTOGRAM_CSV_HEADER: &str = "bin_lo,bin_hi,count,error";
pub const PAIRS_CSV_HEADER: &str = "truth,reco";
pub const TRACE_CSV_HEADER: &str = "iteration,ts_per_ndof";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), line, message: message.into() }
}

/// Write a histogram as `bin_lo,bin_hi,count,error` rows with a header.
pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut out = String::with_capacity(32 * (h.n_bins() + 1));
    out.push_str(HISTOGRAM_CSV_HEADER);
    out.push('\n');
    for i in 0..h.n_bins() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.edges()[i],
            h.edges()[i + 1],
            h.counts()[i],
            h.errors()[i]
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a histogram from the CSV interchange format. Bin edges must be
/// contiguous; the header row is required.
pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(format_err(path, 1, "empty file"));
    };
    if header.trim() != HISTOGRAM_CSV_HEADER {
        return Err(format_err(
            path,
            1,
            format!("expected header '{HISTOGRAM_CSV_HEADER}', found '{}'", header.trim()),
        ));
    }
    let mut edges: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(format_err(path, line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format_err(path, line_no, format!("bad {what} value '{s}'")))
        };
        let lo = parse(fields[0], "bin_lo")?;
        let hi = parse(fields[1], "bin_hi")?;
        match edges.last() {
            None => {
                edges.push(lo);
                edges.push(hi);
            }
            Some(&prev_hi) => {
                if lo != prev_hi {
                    return Err(format_err(
                        path,
                        line_no,
                        format!("bin_lo {lo} does not continue the previous bin_hi {prev_hi}"),
                    ));
                }
                edges.push(hi);
            }
        }
        counts.push(parse(fields[2], "count")?);
        errors.push(parse(fields[3], "error")?);
    }
    if counts.is_empty() {
        return Err(format_err(path, 1, "no bin rows"));
    }
    Histogram::new(edges, counts, errors)
}

/// Write event pairs as `truth,reco` rows.
pub fn write_pairs_csv(path: &Path, truth: &[f64], reco: &[f64]) -> Result<()> {
    if truth.len() != reco.len() {
        return Err(Error::PairedInput(format!(
            "{} truth values vs {} reco values",
            truth.len(),
            reco.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{PAIRS_CSV_HEADER}").map_err(|e| io_err(path, e))?;
    for (t, r) in truth.iter().zip(reco) {
        writeln!(w, "{t},{r}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read event pairs written by [`write_pairs_csv`].
pub fn read_pairs_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(format_err(path, 1, "empty file"));
    };
    if header.trim() != PAIRS_CSV_HEADER {
        return Err(format_err(
            path,
            1,
            format!("expected header '{PAIRS_CSV_HEADER}', found '{}'", header.trim()),
        ));
    }
    let mut truth = Vec::new();
    let mut reco = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some((t, r)) = line.split_once(',') else {
            return Err(format_err(path, line_no, "expected 2 fields"));
        };
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format_err(path, line_no, format!("bad value '{s}'")))
        };
        truth.push(parse(t)?);
        reco.push(parse(r)?);
    }
    Ok((truth, reco))
}

/// Write a value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Read a JSON value.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.display().to_string(), source: e })
}

pub fn write_response_json(path: &Path, response: &ResponseMatrix) -> Result<()> {
    write_json(path, response)
}

pub fn read_response_json(path: &Path) -> Result<ResponseMatrix> {
    read_json(path)
}

/// Write a convergence trace as `iteration,ts_per_ndof` rows.
pub fn write_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut out = String::with_capacity(24 * (trace.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for p in trace {
        out.push_str(&format!("{},{}\n", p.iteration, p.ts_per_ndof));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Incremental trace writer that flushes in blocks, so convergence plots can
/// be drawn while a long search is still running.
pub struct TraceWriter {
    writer: BufWriter<fs::File>,
    path: std::path::PathBuf,
    pending: usize,
    flush_every: usize,
}

impl TraceWriter {
    pub fn create(path: &Path, flush_every: usize) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{TRACE_CSV_HEADER}").map_err(|e| io_err(path, e))?;
        Ok(TraceWriter {
            writer,
            path: path.to_path_buf(),
            pending: 0,
            flush_every: flush_every.max(1),
        })
    }

    pub fn record(&mut self, point: &TracePoint) -> Result<()> {
        writeln!(self.writer, "{},{}", point.iteration, point.ts_per_ndof)
            .map_err(|e| io_err(&self.path, e))?;
        self.pending += 1;
        if self.pending >= self.flush_every {
            self.writer.flush().map_err(|e| io_err(&self.path, e))?;
            self.pending = 0;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// SHA-256 digest of an input file, recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written alongside every command's outputs: rerunning the
/// recorded invocation against byte-identical inputs reproduces the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub runtime_seconds: f64,
}

pub fn sha256_of_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, seed: Option<u64>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            argv,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_of_file(path)?,
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn histogram_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = Histogram::with_poisson_errors(vec![0.0, 0.5, 2.0, 3.0], vec![5.0, 0.0, 2.5]).unwrap();
        write_histogram_csv(&path, &h).unwrap();
        let back = read_histogram_csv(&path).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn histogram_csv_rejects_bad_header_and_gaps() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.csv");
        fs::write(&path, "lo,hi,c,e\n0,1,2,1.4\n").unwrap();
        assert!(matches!(read_histogram_csv(&path), Err(Error::Format { line: 1, .. })));

        fs::write(&path, "bin_lo,bin_hi,count,error\n0,1,2,1.4\n2,3,1,1\n").unwrap();
        assert!(matches!(read_histogram_csv(&path), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn pairs_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        let truth = vec![1.0, 2.5, -0.25];
        let reco = vec![1.1, 2.4, 0.0];
        write_pairs_csv(&path, &truth, &reco).unwrap();
        let (t, r) = read_pairs_csv(&path).unwrap();
        assert_eq!(t, truth);
        assert_eq!(r, reco);
    }

    #[test]
    fn trace_writer_streams() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let mut w = TraceWriter::create(&path, 2).unwrap();
        for i in 0..5 {
            w.record(&TracePoint { iteration: i, ts_per_ndof: 10.0 - i as f64 }).unwrap();
        }
        w.finish().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with(TRACE_CSV_HEADER));
    }

    #[test]
    fn manifest_records_digests() {
        let dir = tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "data").unwrap();
        let mut m = RunManifest::new("unfold", vec!["refold".into(), "unfold".into()], Some(42));
        m.add_input(&input).unwrap();
        assert_eq!(m.inputs.len(), 1);
        assert_eq!(m.inputs[0].sha256.len(), 64);
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        let back: RunManifest = read_json(&path).unwrap();
        assert_eq!(back.subcommand, "unfold");
        assert_eq!(back.seed, Some(42));
    }
}
