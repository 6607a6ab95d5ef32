//! One structured config file drives every subcommand. Unknown keys are
//! rejected by name, defaults fill everything else, and `--set key=value`
//! overrides patch the parsed document before validation.

use std::fmt;
use std::path::Path;

use gamestock_core::game::GameSpec;
use gamestock_core::graph::NormMode;
use gamestock_core::model::ModelConfig;
use gamestock_core::panel::{SplitSpec, CHANNELS, DEFAULT_MIN_PRESENCE};
use gamestock_core::synth::SyntheticSpec;
use gamestock_core::wavelet::{BoundaryMode, WaveletKind};
use serde::{Deserialize, Serialize};

/// Errors split by exit code: config problems (bad keys, bad values,
/// missing files) exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Wraps a core error (which only implements Display) as a runtime failure.
pub fn runtime<E: fmt::Display>(e: E) -> CliError {
    CliError::Runtime(anyhow::anyhow!("{e}"))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub wavelet: WaveletSection,
    pub model: ModelSection,
    pub game: GameSection,
    pub train: TrainSection,
    pub synth: SynthSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    pub predict: PredictSection,
    pub evaluate: EvalSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Directory with panel.csv, industry.csv, holdings.csv, events.csv and
    /// optionally oracle.json. Unset: the newest generated dataset under the
    /// output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Minimum fraction of observed days for a stock to be kept.
    pub min_presence: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dir: None,
            min_presence: DEFAULT_MIN_PRESENCE,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletSection {
    /// db1, db2, or db4.
    pub kind: String,
    pub level: usize,
    /// periodization or symmetric.
    pub boundary: String,
}

impl Default for WaveletSection {
    fn default() -> Self {
        WaveletSection {
            kind: "db4".into(),
            level: 3,
            boundary: "symmetric".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lookback: usize,
    pub embed_dim: usize,
    pub graph_hidden: usize,
    pub graph_layers: usize,
    /// degree or one.
    pub graph_norm: String,
    pub lambda_eq: f64,
    pub use_mdwt: bool,
    pub use_hgcn: bool,
    pub use_gre: bool,
    pub alpha_decay: f64,
    pub pos_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            lookback: d.lookback,
            embed_dim: d.embed_dim,
            graph_hidden: d.graph_hidden,
            graph_layers: d.graph_layers,
            graph_norm: "degree".into(),
            lambda_eq: d.lambda_eq,
            use_mdwt: d.use_mdwt,
            use_hgcn: d.use_hgcn,
            use_gre: d.use_gre,
            alpha_decay: d.alpha_decay,
            pos_dim: d.pos_dim,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    pub lambda_follow: f64,
    /// Follow weights, rows and columns in (ins, hot, ret) order.
    pub beta: [[f64; 3]; 3],
}

impl Default for GameSection {
    fn default() -> Self {
        let d = GameSpec::default();
        GameSection {
            lambda_follow: d.lambda_follow,
            beta: d.beta,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            max_epochs: d.max_epochs,
            patience: d.patience,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_stocks: usize,
    pub n_industries: usize,
    pub n_days: usize,
    pub noise: f64,
    pub event_rate: f64,
    pub event_amplitude: f64,
    pub event_decay: f64,
    pub industry_scale: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        SynthSection {
            n_stocks: d.n_stocks,
            n_industries: d.n_industries,
            n_days: d.n_days,
            noise: d.noise,
            event_rate: d.event_rate,
            event_amplitude: d.event_amplitude,
            event_decay: d.event_decay,
            industry_scale: d.industry_scale,
            seed: d.seed,
        }
    }
}

/// Inclusive date ranges; all three are required together. Absent entirely,
/// the panel is split 70/15/15 by calendar day.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: (String, String),
    pub valid: (String, String),
    pub test: (String, String),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    /// Checkpoint file; unset: the newest checkpoint under the output dir.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    /// Inclusive date range to score; unset: the test split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<(String, String)>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Run directories are created under this path.
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "runs".into() }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let wavelet = WaveletKind::from_name(&self.wavelet.kind)
            .map_err(|e| CliError::Config(format!("wavelet.kind: {e}")))?;
        let boundary = BoundaryMode::from_name(&self.wavelet.boundary)
            .map_err(|e| CliError::Config(format!("wavelet.boundary: {e}")))?;
        let graph_norm = NormMode::from_name(&self.model.graph_norm).ok_or_else(|| {
            CliError::Config(format!(
                "model.graph_norm: unknown mode {:?}, expected \"degree\" or \"one\"",
                self.model.graph_norm
            ))
        })?;
        let config = ModelConfig {
            lookback: self.model.lookback,
            level: self.wavelet.level,
            wavelet,
            boundary,
            channels: CHANNELS,
            embed_dim: self.model.embed_dim,
            graph_hidden: self.model.graph_hidden,
            graph_layers: self.model.graph_layers,
            graph_norm,
            lambda_eq: self.model.lambda_eq,
            use_mdwt: self.model.use_mdwt,
            use_hgcn: self.model.use_hgcn,
            use_gre: self.model.use_gre,
            alpha_decay: self.model.alpha_decay,
            pos_dim: self.model.pos_dim,
            game: GameSpec {
                lambda_follow: self.game.lambda_follow,
                beta: self.game.beta,
            },
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.train.seed,
        };
        config
            .validate()
            .map_err(|e| CliError::Config(format!("{e}")))?;
        Ok(config)
    }

    pub fn synth_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_stocks: self.synth.n_stocks,
            n_industries: self.synth.n_industries,
            n_days: self.synth.n_days,
            noise: self.synth.noise,
            event_rate: self.synth.event_rate,
            event_amplitude: self.synth.event_amplitude,
            event_decay: self.synth.event_decay,
            industry_scale: self.synth.industry_scale,
            seed: self.synth.seed,
        }
    }

    /// The configured split, or a 70/15/15 calendar-day split of the panel.
    pub fn split_spec(&self, dates: &[String]) -> CliResult<SplitSpec> {
        if let Some(s) = &self.split {
            return Ok(SplitSpec {
                train: s.train.clone(),
                valid: s.valid.clone(),
                test: s.test.clone(),
            });
        }
        let t = dates.len();
        let train_end = t * 7 / 10;
        let valid_end = t * 85 / 100;
        if train_end == 0 || valid_end <= train_end || valid_end >= t {
            return Err(CliError::Config(format!(
                "panel has only {t} days; too short for the default 70/15/15 split — set [split] explicitly"
            )));
        }
        Ok(SplitSpec {
            train: (dates[0].clone(), dates[train_end - 1].clone()),
            valid: (dates[train_end].clone(), dates[valid_end - 1].clone()),
            test: (dates[valid_end].clone(), dates[t - 1].clone()),
        })
    }
}

/// Reads the file, applies `--set` overrides onto the raw document, then
/// deserializes strictly (unknown keys are named in the error).
pub fn load_config(path: &Path, overrides: &[String]) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut table: toml::Table = text.parse().map_err(|e| {
        CliError::Config(format!("config file {} does not parse: {e}", path.display()))
    })?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("config error: {e}")))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!(
            "override {spec:?} must look like section.key=value"
        ))
    })?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override {spec:?} has an empty key")));
    }
    let value = parse_override_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("override {key:?}: {part:?} is not a table"))
            })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Values parse with document syntax (numbers, booleans, arrays, quoted
/// strings); anything that does not parse is taken as a bare string, so
/// `--set wavelet.kind=db2` works without shell-quoted quotes.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed table has the key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// The post-defaults config as document text, for echoing into run logs.
pub fn effective_toml(config: &RunConfig) -> String {
    toml::to_string_pretty(config).unwrap_or_else(|e| format!("<unserializable config: {e}>"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_config_gets_full_defaults() {
        let f = write_temp("");
        let c = load_config(f.path(), &[]).unwrap();
        assert_eq!(c.model.lookback, 20);
        assert_eq!(c.wavelet.kind, "db4");
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.synth.n_stocks, 60);
        assert!(c.split.is_none());
        let mc = c.model_config().unwrap();
        assert_eq!(mc, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let f = write_temp("[wavelet]\nlvel = 3\n");
        let err = load_config(f.path(), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = format!("{err}");
        assert!(msg.contains("lvel"), "message should name the key: {msg}");
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = load_config(Path::new("/nonexistent/config.toml"), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides_patch_values_and_types() {
        let f = write_temp("[train]\nseed = 1\n");
        let c = load_config(
            f.path(),
            &[
                "train.seed=9".into(),
                "wavelet.kind=db2".into(),
                "model.use_gre=false".into(),
                "split.train=[\"2020-01-02\",\"2020-06-01\"]".into(),
                "split.valid=[\"2020-06-02\",\"2020-08-01\"]".into(),
                "split.test=[\"2020-08-02\",\"2020-12-31\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.wavelet.kind, "db2");
        assert!(!c.model.use_gre);
        let split = c.split.unwrap();
        assert_eq!(split.train.0, "2020-01-02");
        assert_eq!(split.test.1, "2020-12-31");
    }

    #[test]
    fn override_with_unknown_key_is_rejected() {
        let f = write_temp("");
        let err = load_config(f.path(), &["train.sede=9".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(format!("{err}").contains("sede"));
    }

    #[test]
    fn bad_enum_values_error_with_the_value() {
        let f = write_temp("[wavelet]\nkind = \"db3\"\n");
        let c = load_config(f.path(), &[]).unwrap();
        let err = c.model_config().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(format!("{err}").contains("db3"));
    }

    #[test]
    fn default_split_covers_the_panel_in_order() {
        let dates: Vec<String> = (0..40)
            .map(|i| format!("2024-{:02}-{:02}", 1 + i / 28, 1 + i % 28))
            .collect();
        let c = RunConfig::default();
        let split = c.split_spec(&dates).unwrap();
        assert_eq!(split.train.0, dates[0]);
        assert_eq!(split.train.1, dates[27]);
        assert_eq!(split.valid.0, dates[28]);
        assert_eq!(split.valid.1, dates[33]);
        assert_eq!(split.test.0, dates[34]);
        assert_eq!(split.test.1, dates[39]);
    }

    #[test]
    fn effective_toml_round_trips() {
        let c = RunConfig::default();
        let text = effective_toml(&c);
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.model.embed_dim, c.model.embed_dim);
        assert_eq!(parsed.synth.n_days, c.synth.n_days);
    }
}
