//! Experiment configuration and its `key=value` text form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{MatrixModel, NoiseSpec};
use crate::sketch::SketchSpec;
use crate::solver::StopRule;

/// Where the system matrix comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Builtin(MatrixModel),
    Csv(PathBuf),
}

impl ModelSpec {
    pub fn tag(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Builtin(m) => f.write_str(m.as_str()),
            ModelSpec::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("csv:") {
            Some("") => Err(Error::Parameter("csv model needs a path".into())),
            Some(path) => Ok(ModelSpec::Csv(PathBuf::from(path))),
            None => Ok(ModelSpec::Builtin(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Scale CSV rows to unit length.
    pub normalize_rows: bool,
    pub m: usize,
    pub n: usize,
    pub methods: Vec<SketchSpec>,
    /// Overrides the block size of every method that has one.
    pub block_size: Option<usize>,
    pub noise: NoiseSpec,
    pub trials: u64,
    pub stop: StopRule,
    pub master_seed: u64,
    /// No files are written when absent.
    pub output_dir: Option<PathBuf>,
    /// Trace recording stride.
    pub stride: u64,
    /// Ratio `s/n` allowed by the fresh-Gaussian noise horizon.
    pub horizon_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Builtin(MatrixModel::Gaussian),
            normalize_rows: false,
            m: 2000,
            n: 100,
            methods: vec![
                SketchSpec::block_partition(50).expect("valid"),
                SketchSpec::gaussian_block(50).expect("valid"),
            ],
            block_size: None,
            noise: NoiseSpec::None,
            trials: 35,
            stop: StopRule::default(),
            master_seed: 0,
            output_dir: None,
            stride: 1,
            horizon_alpha: 0.5,
        }
    }
}

/// Keys accepted in config files, in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "normalize_rows",
    "m",
    "n",
    "methods",
    "s",
    "noise",
    "trials",
    "threshold",
    "max_iterations",
    "max_seconds",
    "seed",
    "output_dir",
    "stride",
    "horizon_alpha",
];

fn parse_field<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(field, format!("expected a boolean, got `{other}`"))),
    }
}

fn rename(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    }
}

impl ExperimentConfig {
    /// Sets one field from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model" => self.model = v.parse().map_err(rename("model"))?,
            "normalize_rows" => self.normalize_rows = parse_bool(key, v)?,
            "m" => self.m = parse_field(key, v)?,
            "n" => self.n = parse_field(key, v)?,
            "methods" | "method" => {
                self.methods = v
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<SketchSpec>>>()
                    .map_err(rename("methods"))?
            }
            "s" => self.block_size = if v.is_empty() { None } else { Some(parse_field(key, v)?) },
            "noise" => self.noise = v.parse().map_err(rename("noise"))?,
            "trials" => self.trials = parse_field(key, v)?,
            "threshold" => self.stop.rel_error_threshold = parse_field(key, v)?,
            "max_iterations" => self.stop.max_iterations = parse_field(key, v)?,
            "max_seconds" => self.stop.max_seconds = parse_field(key, v)?,
            "seed" => self.master_seed = parse_field(key, v)?,
            "output_dir" => self.output_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "stride" => self.stride = parse_field(key, v)?,
            "horizon_alpha" => self.horizon_alpha = parse_field(key, v)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` text (one per line, `#` comments) on top of
    /// `self`.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                source_name: source_name.to_string(),
                line: i as u64 + 1,
                reason: format!("expected key=value, got `{line}`"),
            })?;
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, "<config>")?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Serializes every field; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let methods: Vec<String> = self.methods.iter().map(SketchSpec::label).collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("model", self.model.to_string());
        put("normalize_rows", self.normalize_rows.to_string());
        put("m", self.m.to_string());
        put("n", self.n.to_string());
        put("methods", methods.join(","));
        put("s", self.block_size.map(|s| s.to_string()).unwrap_or_default());
        put("noise", self.noise.to_string());
        put("trials", self.trials.to_string());
        put("threshold", format!("{:?}", self.stop.rel_error_threshold));
        put("max_iterations", self.stop.max_iterations.to_string());
        put("max_seconds", format!("{:?}", self.stop.max_seconds));
        put("seed", self.master_seed.to_string());
        put(
            "output_dir",
            self.output_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("stride", self.stride.to_string());
        put("horizon_alpha", format!("{:?}", self.horizon_alpha));
        out
    }

    /// Methods with the block-size override applied.
    pub fn resolved_methods(&self) -> Result<Vec<SketchSpec>> {
        self.methods
            .iter()
            .map(|spec| match self.block_size {
                Some(s) => spec.with_block_size(s),
                None => Ok(*spec),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(rename("s"))
    }

    /// Checks every field; `m` is the actual row count (it differs from
    /// `self.m` for CSV models).
    pub fn validate_for_rows(&self, m: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        self.stop.validate().map_err(rename("threshold"))?;
        self.noise.validate(m).map_err(rename("noise"))?;
        if !(self.horizon_alpha > 0.0 && self.horizon_alpha < 1.0) {
            return Err(Error::config("horizon_alpha", "must lie in (0, 1)"));
        }
        for spec in self.resolved_methods()? {
            if spec.block_size > m {
                return Err(Error::config(
                    "methods",
                    format!("`{}` has block size above m = {m}", spec.label()),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelSpec::Builtin(model) = self.model {
            if self.m == 0 || self.n == 0 {
                return Err(Error::config("m", "dimensions must be at least 1"));
            }
            if model != MatrixModel::Coherent && self.m < self.n {
                return Err(Error::config("n", format!("model `{model}` needs m >= n")));
            }
        }
        self.validate_for_rows(self.m)
    }
}
