//! Curve files: CSV and JSON with identical row schema.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! every value parses back to the same `f64`. Missing empirical values (closed
//! form only) are empty CSV fields and JSON `null`.

use std::fs;
use std::io;
use std::path::Path;

use mceb_core::harness::BoundCurve;
use mceb_core::BoundModel;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{CliError, CliResult};

pub const CSV_HEADER: &str =
    "snr_db,sigma2,model,theoretical_residual,empirical_residual,std_err,n_trials,degeneracies";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub snr_db: f64,
    pub sigma2: f64,
    pub model: BoundModel,
    pub theoretical_residual: f64,
    pub empirical_residual: Option<f64>,
    pub std_err: Option<f64>,
    pub n_trials: usize,
    pub degeneracies: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_beams: usize,
    pub n_rx: usize,
    pub n_pilots: usize,
    pub signal_power: f64,
}

impl Meta {
    pub fn new(curve: &BoundCurve, config_hash: &str) -> Self {
        Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: curve.master_seed,
            config_hash: config_hash.to_string(),
            n_beams: curve.n_beams,
            n_rx: curve.n_rx,
            n_pilots: curve.n_pilots,
            signal_power: curve.signal_power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDocument {
    pub meta: Meta,
    pub rows: Vec<CurveRow>,
}

/// One row per (SNR point, model), in sweep order.
pub fn curve_rows(curve: &BoundCurve) -> Vec<CurveRow> {
    curve
        .points
        .iter()
        .flat_map(|p| {
            p.results.iter().map(move |r| CurveRow {
                snr_db: p.snr_db,
                sigma2: p.sigma2,
                model: r.model,
                theoretical_residual: r.theoretical_residual,
                empirical_residual: r.empirical.map(|e| e.mean),
                std_err: r.empirical.map(|e| e.std_err),
                n_trials: r.n_trials,
                degeneracies: r.degeneracies,
            })
        })
        .collect()
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.snr_db),
            fmt_f64(r.sigma2),
            r.model.name(),
            fmt_f64(r.theoretical_residual),
            opt(r.empirical_residual),
            opt(r.std_err),
            r.n_trials,
            r.degeneracies
        ));
    }
    out
}

/// Pretty JSON whose floats carry 17 significant digits.
pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter::default());
    value.serialize(&mut ser).expect("in-memory serialisation");
    let mut text = String::from_utf8(buf).expect("utf-8 json");
    text.push('\n');
    text
}

pub fn emit_curve(curve: &BoundCurve, format: OutputFormat, path: &Path, config_hash: &str) -> CliResult<()> {
    let rows = curve_rows(curve);
    let text = match format {
        OutputFormat::Csv => render_csv(&rows),
        OutputFormat::Json => render_json(&CurveDocument {
            meta: Meta::new(curve, config_hash),
            rows,
        }),
    };
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_curve_csv(path: &Path) -> CliResult<Vec<CurveRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_curve_csv(&text)
}

pub fn parse_curve_csv(text: &str) -> CliResult<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::Config("curve CSV: header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| CliError::Config(format!("curve CSV line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(CurveRow {
                snr_db: num(f[0])?,
                sigma2: num(f[1])?,
                model: BoundModel::from_name(f[2]).ok_or_else(|| bad(&format!("unknown model `{}`", f[2])))?,
                theoretical_residual: num(f[3])?,
                empirical_residual: opt(f[4])?,
                std_err: opt(f[5])?,
                n_trials: f[6].parse().map_err(|_| bad("bad n_trials"))?,
                degeneracies: f[7].parse().map_err(|_| bad("bad degeneracies"))?,
            })
        })
        .collect()
}

pub fn read_curve_json(path: &Path) -> CliResult<CurveDocument> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("curve JSON: {e}")))
}

/// Reads curve rows from either format, chosen by file extension (CSV otherwise).
pub fn read_curve_rows(path: &Path) -> CliResult<Vec<CurveRow>> {
    match OutputFormat::from_path(path) {
        Some(OutputFormat::Json) => Ok(read_curve_json(path)?.rows),
        _ => read_curve_csv(path),
    }
}

/// Pretty formatter that writes floats as `{:.16e}`.
#[derive(Default)]
struct SciFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mceb_core::harness::{theoretical_curve, Scenario};

    fn small_curve() -> BoundCurve {
        let mut s = Scenario::default_scenario();
        s.snr_grid_db = vec![-5.0, 0.0, 5.0];
        s.models = vec![BoundModel::Bound1Uncorrelated, BoundModel::CrlbBaseline];
        s.n_trials = 20;
        mceb_core::harness::run_sweep(&s).unwrap()
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let rows = curve_rows(&small_curve());
        let text = render_csv(&rows);
        assert_eq!(text.lines().count(), 7);
        assert!(text.ends_with('\n'));
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(parse_curve_csv(&text).unwrap(), rows);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let curve = small_curve();
        let doc = CurveDocument {
            meta: Meta::new(&curve, "abc"),
            rows: curve_rows(&curve),
        };
        let text = render_json(&doc);
        assert!(text.ends_with("}\n"));
        assert!(text.contains("\"theoretical_residual\": "));
        let back: CurveDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn theoretical_only_rows_have_empty_empirical_fields() {
        let curve = theoretical_curve(&Scenario::default_scenario()).unwrap();
        let text = render_csv(&curve_rows(&curve));
        let first = text.lines().nth(1).unwrap();
        assert!(first.contains(",,,0,0"), "{first}");
        let json = render_json(&curve_rows(&curve));
        assert!(json.contains("\"empirical_residual\": null"));
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
