//! `MCEB-SNAP v1` text format.
//!
//! ```text
//! MCEB-SNAP v1 n_dft=<int> n_rx=<int> n_rb=<int> sample_period=<float>
//! <n> <k> <re> <im>          (N_DFT * N_RX lines, row-major by n then k)
//! ```
//!
//! Values are written with 17 significant digits so that finite samples
//! round-trip bit-exactly. The reader accepts the data lines in any order but
//! rejects duplicated or missing `(n, k)` pairs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{default_sample_period, ChannelConfig, ChannelSnapshot, RB_SIZE};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub const SNAPSHOT_MAGIC: &str = "MCEB-SNAP v1";

pub fn save_snapshot(snapshot: &ChannelSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let config = snapshot.config();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{SNAPSHOT_MAGIC} n_dft={} n_rx={} n_rb={} sample_period={:e}",
        config.n_dft, config.n_rx, config.n_rb, config.sample_period
    )?;
    let samples = snapshot.samples();
    for n in 0..config.n_dft {
        for k in 0..config.n_rx {
            let z = samples[(n, k)];
            writeln!(out, "{n} {k} {:.16e} {:.16e}", z.re, z.im)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ChannelSnapshot> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(parse_err(1, "empty file, expected snapshot header")),
    };
    let config = parse_header(&header)?;

    let mut samples = CMatrix::zeros(config.n_dft, config.n_rx);
    let mut seen = vec![false; config.n_dft * config.n_rx];
    let mut count = 0usize;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            return Err(parse_err(line_no, "blank line in sample block"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected `n k re im`, got {} fields", fields.len()),
            ));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad sample index `{}`", fields[0])))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad antenna index `{}`", fields[1])))?;
        if n >= config.n_dft || k >= config.n_rx {
            return Err(parse_err(
                line_no,
                format!("index ({n}, {k}) outside {}x{}", config.n_dft, config.n_rx),
            ));
        }
        let re = parse_finite(fields[2], line_no)?;
        let im = parse_finite(fields[3], line_no)?;
        let slot = n * config.n_rx + k;
        if seen[slot] {
            return Err(parse_err(line_no, format!("duplicate entry for ({n}, {k})")));
        }
        seen[slot] = true;
        samples[(n, k)] = Complex64::new(re, im);
        count += 1;
    }
    if count != seen.len() {
        let missing = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(parse_err(
            count + 2,
            format!(
                "expected {} sample lines, found {count}; first missing pair is ({}, {})",
                seen.len(),
                missing / config.n_rx,
                missing % config.n_rx
            ),
        ));
    }
    ChannelSnapshot::new(samples, config)
}

fn parse_header(header: &str) -> Result<ChannelConfig> {
    let rest = header
        .strip_prefix(SNAPSHOT_MAGIC)
        .ok_or_else(|| parse_err(1, format!("header must start with `{SNAPSHOT_MAGIC}`")))?;
    let (mut n_dft, mut n_rx, mut n_rb, mut sample_period) = (None, None, None, None);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{token}`")))?;
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| parse_err(1, format!("`{key}` must be a non-negative integer, got `{value}`")))
        };
        let slot_taken = |taken: bool| {
            if taken {
                Err(parse_err(1, format!("duplicate header field `{key}`")))
            } else {
                Ok(())
            }
        };
        match key {
            "n_dft" => {
                slot_taken(n_dft.is_some())?;
                n_dft = Some(int()?);
            }
            "n_rx" => {
                slot_taken(n_rx.is_some())?;
                n_rx = Some(int()?);
            }
            "n_rb" => {
                slot_taken(n_rb.is_some())?;
                n_rb = Some(int()?);
            }
            "sample_period" => {
                slot_taken(sample_period.is_some())?;
                sample_period = Some(parse_finite(value, 1)?);
            }
            other => return Err(parse_err(1, format!("unknown header field `{other}`"))),
        }
    }
    let missing = |name: &str| parse_err(1, format!("header is missing `{name}`"));
    let n_dft = n_dft.ok_or_else(|| missing("n_dft"))?;
    let config = ChannelConfig {
        n_dft,
        n_rx: n_rx.ok_or_else(|| missing("n_rx"))?,
        n_rb: n_rb.ok_or_else(|| missing("n_rb"))?,
        rb_size: RB_SIZE,
        n_pilots: 2,
        sample_period: sample_period.unwrap_or_else(|| default_sample_period(n_dft)),
    };
    config.validate().map_err(|e| parse_err(1, e.to_string()))?;
    Ok(config)
}

fn parse_finite(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("bad number `{token}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{token}`")));
    }
    Ok(v)
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}
