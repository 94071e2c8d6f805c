//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! snr_grid_db = [-10, -5, 0, 5, 10]   # required, strictly increasing
//! n_trials = 10000                    # default 10000
//! master_seed = 1                     # default 1
//! models = ["bound1", "bound2", "bound3", "crlb"]   # default: all
//! snapshot = "snap.txt"               # ingest only, relative to this file
//!
//! [channel]                           # every key optional
//! n_dft = 256
//! n_rb = 4
//! rb_size = 12
//! n_rx = 64
//! n_pilots = 2
//! sample_period = 1.3e-7              # default 1 / (30 kHz * n_dft)
//!
//! [tap_set]
//! m = 4                               # optional, must match delays
//! delays = [0, 6, 14, 25]
//! powers = [1.0, 0.5, 0.25, 0.125]
//! correlation_model = "uncorrelated"  # | "phase_correlated" | "fully_correlated"
//! signature_mode = "per_beam"         # | "shared"
//! covariance_re = [[...], ...]        # optional M x M, default diag(powers)
//! covariance_im = [[...], ...]        # optional, default zero
//! ```
//!
//! Unknown keys are rejected. `--set a.b=value` overrides are applied to the
//! parsed document before validation; values use TOML syntax and fall back to
//! plain strings.

use std::fs;
use std::path::{Path, PathBuf};

use mceb_core::channel::{default_sample_period, ChannelConfig, CorrelationModel, SignatureMode, TapSet, RB_SIZE};
use mceb_core::harness::{Scenario, MIN_POWERED_TRIALS};
use mceb_core::linalg::CMatrix;
use mceb_core::BoundModel;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_models")]
    pub models: Vec<BoundModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub channel: ChannelSection,
    pub tap_set: TapsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_n_dft")]
    pub n_dft: usize,
    #[serde(default = "default_n_rb")]
    pub n_rb: usize,
    #[serde(default = "default_rb_size")]
    pub rb_size: usize,
    #[serde(default = "default_n_rx")]
    pub n_rx: usize,
    #[serde(default = "default_pilots")]
    pub n_pilots: usize,
    #[serde(default)]
    pub sample_period: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            n_dft: default_n_dft(),
            n_rb: default_n_rb(),
            rb_size: default_rb_size(),
            n_rx: default_n_rx(),
            n_pilots: default_pilots(),
            sample_period: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapsSection {
    #[serde(default)]
    pub m: Option<usize>,
    pub delays: Vec<usize>,
    pub powers: Vec<f64>,
    #[serde(default)]
    pub correlation_model: CorrelationModel,
    #[serde(default)]
    pub signature_mode: SignatureMode,
    #[serde(default)]
    pub covariance_re: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub covariance_im: Option<Vec<Vec<f64>>>,
}

fn default_trials() -> usize {
    MIN_POWERED_TRIALS
}
fn default_seed() -> u64 {
    1
}
fn default_models() -> Vec<BoundModel> {
    BoundModel::ALL.to_vec()
}
fn default_n_dft() -> usize {
    256
}
fn default_n_rb() -> usize {
    4
}
fn default_rb_size() -> usize {
    RB_SIZE
}
fn default_n_rx() -> usize {
    64
}
fn default_pilots() -> usize {
    2
}

/// A parsed, overridden and validated scenario file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    /// Snapshot path resolved against the config file's directory.
    pub snapshot: Option<PathBuf>,
    /// SHA-256 of the resolved scenario, hex encoded.
    pub hash: String,
}

pub fn parse_config(path: &Path) -> CliResult<LoadedConfig> {
    parse_config_with(path, &[], None)
}

pub fn parse_config_with(path: &Path, overrides: &[String], seed: Option<u64>) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base, overrides, seed)
}

pub fn parse_config_str(
    text: &str,
    base_dir: &Path,
    overrides: &[String],
    seed: Option<u64>,
) -> CliResult<LoadedConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    let mut file: ScenarioFile = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if let Some(seed) = seed {
        file.master_seed = seed;
    }
    let scenario = build_scenario(&file)?;
    let snapshot = file.snapshot.as_ref().map(|p| base_dir.join(p));
    let hash = config_hash(&file);
    Ok(LoadedConfig {
        file,
        scenario,
        snapshot,
        hash,
    })
}

/// Sets a dotted `key=value` path in the raw document.
pub fn apply_override(doc: &mut toml::Table, item: &str) -> CliResult<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn build_scenario(file: &ScenarioFile) -> CliResult<Scenario> {
    let ch = &file.channel;
    let config = ChannelConfig {
        n_dft: ch.n_dft,
        n_rb: ch.n_rb,
        rb_size: ch.rb_size,
        n_rx: ch.n_rx,
        n_pilots: ch.n_pilots,
        sample_period: ch.sample_period.unwrap_or_else(|| default_sample_period(ch.n_dft)),
    };
    config.validate()?;
    let taps = &file.tap_set;
    if let Some(m) = taps.m {
        if m != taps.delays.len() {
            return Err(CliError::Config(format!(
                "invalid configuration at `tap_set.m`: {m} taps declared but {} delays given",
                taps.delays.len()
            )));
        }
    }
    let tap_set = TapSet::new(taps.delays.clone(), taps.powers.clone(), taps.correlation_model)?;
    tap_set.validate_for(&config)?;
    let covariance = covariance_from(taps, &tap_set)?;
    Ok(Scenario::new(
        config,
        tap_set,
        covariance,
        taps.signature_mode,
        file.snr_grid_db.clone(),
        file.n_trials,
        file.master_seed,
        file.models.clone(),
    )?)
}

fn covariance_from(taps: &TapsSection, tap_set: &TapSet) -> CliResult<CMatrix> {
    let m = tap_set.len();
    let read = |rows: &Option<Vec<Vec<f64>>>, name: &str| -> CliResult<Option<Vec<Vec<f64>>>> {
        match rows {
            None => Ok(None),
            Some(r) if r.len() == m && r.iter().all(|row| row.len() == m) => Ok(Some(r.clone())),
            Some(_) => Err(CliError::Config(format!(
                "invalid configuration at `tap_set.{name}`: expected a {m}x{m} array"
            ))),
        }
    };
    let re = read(&taps.covariance_re, "covariance_re")?;
    let im = read(&taps.covariance_im, "covariance_im")?;
    Ok(match (re, im) {
        (None, None) => tap_set.diagonal_covariance(),
        (re, im) => CMatrix::from_fn(m, m, |i, k| {
            let r = re
                .as_ref()
                .map_or(if i == k { tap_set.powers[i] } else { 0.0 }, |r| r[i][k]);
            let j = im.as_ref().map_or(0.0, |v| v[i][k]);
            Complex64::new(r, j)
        }),
    })
}

/// Content digest of the resolved scenario.
pub fn config_hash(file: &ScenarioFile) -> String {
    let canonical = serde_json::to_vec(file).expect("scenario serialises");
    hex::encode(Sha256::digest(&canonical))
}

/// The built-in default scenario as a TOML document.
pub const DEFAULT_SCENARIO_TOML: &str = r#"snr_grid_db = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
n_trials = 10000
master_seed = 1

[channel]
n_dft = 256
n_rb = 4
n_rx = 64
n_pilots = 2

[tap_set]
delays = [0, 6, 14, 25]
powers = [1.0, 0.5, 0.25, 0.125]
correlation_model = "uncorrelated"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<LoadedConfig> {
        parse_config_str(text, Path::new("."), &[], None)
    }

    const MINIMAL: &str = "snr_grid_db = [0.0, 10.0]\n[tap_set]\ndelays = [0, 8]\npowers = [1.0, 0.5]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let loaded = parse(MINIMAL).unwrap();
        let s = &loaded.scenario;
        assert_eq!(s.config.n_rx, 64);
        assert_eq!(s.config.rb_size, 12);
        assert_eq!(s.config.n_pilots, 2);
        assert_eq!(s.n_trials, 10_000);
        assert_eq!(s.models, BoundModel::ALL.to_vec());
        assert_eq!(s.beam_covariance, s.tap_set.diagonal_covariance());
    }

    #[test]
    fn default_scenario_text_matches_library_default() {
        let loaded = parse(DEFAULT_SCENARIO_TOML).unwrap();
        let lib = Scenario::default_scenario();
        assert_eq!(loaded.scenario.config, lib.config);
        assert_eq!(loaded.scenario.tap_set, lib.tap_set);
        assert_eq!(loaded.scenario.snr_grid_db, lib.snr_grid_db);
        assert_eq!(loaded.scenario.master_seed, lib.master_seed);
    }

    #[test]
    fn field_path_errors() {
        let err = parse("snr_grid_db = [0.0]\n[tap_set]\ndelays = [5, 2]\npowers = [1.0, 1.0]\n").unwrap_err();
        assert!(err.to_string().contains("tap_set.delays"), "{err}");
        let err = parse(&format!("{MINIMAL}[channel]\nn_dft = 24\nn_rb = 3\n")).unwrap_err();
        assert!(err.to_string().contains("band-limit"), "{err}");
        let err = parse(&MINIMAL.replace("[0.0, 10.0]", "[10.0, 0.0]")).unwrap_err();
        assert!(err.to_string().contains("snr_grid_db"), "{err}");
        let err = parse(&format!("{MINIMAL}m = 3\n")).unwrap_err();
        assert!(err.to_string().contains("tap_set.m"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(&format!("colour = 1\n{MINIMAL}")).is_err());
        assert!(parse(&format!("{MINIMAL}bogus = 2\n")).is_err());
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let text = format!("{MINIMAL}covariance_re = [[1.0, 2.0], [2.0, 0.5]]\n");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("tap_set.covariance"), "{err}");
        let ok =
            format!("{MINIMAL}covariance_re = [[1.0, 0.2], [0.2, 0.5]]\ncovariance_im = [[0.0, 0.1], [-0.1, 0.0]]\n");
        let loaded = parse(&ok).unwrap();
        assert_eq!(loaded.scenario.beam_covariance[(0, 1)], Complex64::new(0.2, 0.1));
    }

    #[test]
    fn overrides_and_seed() {
        let dir = Path::new("/tmp");
        let sets = vec![
            "channel.n_rx=8".to_string(),
            "n_trials=12".to_string(),
            "tap_set.correlation_model=fully_correlated".to_string(),
            "snapshot=snap.txt".to_string(),
        ];
        let loaded = parse_config_str(MINIMAL, dir, &sets, Some(99)).unwrap();
        assert_eq!(loaded.scenario.config.n_rx, 8);
        assert_eq!(loaded.scenario.n_trials, 12);
        assert_eq!(loaded.scenario.master_seed, 99);
        assert_eq!(
            loaded.scenario.tap_set.correlation_model,
            CorrelationModel::FullyCorrelated
        );
        assert_eq!(loaded.snapshot, Some(PathBuf::from("/tmp/snap.txt")));
        assert!(parse_config_str(MINIMAL, dir, &["channel.bogus=1".into()], None).is_err());
        assert!(parse_config_str(MINIMAL, dir, &["novalue".into()], None).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse(MINIMAL).unwrap().hash;
        let b = parse(MINIMAL).unwrap().hash;
        let c = parse_config_str(MINIMAL, Path::new("."), &[], Some(5)).unwrap().hash;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }
}
