//! Run configuration: defaults, key=value config files, and flag merging.
//!
//! Precedence, lowest to highest: built-in defaults, config file entries,
//! explicit command-line flags.

use std::collections::HashMap;
use std::path::PathBuf;

use dualtv::ModelKind;

use crate::synthetic::SyntheticKind;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    File(PathBuf),
    Synthetic {
        kind: SyntheticKind,
        width: usize,
        height: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Fista,
    Schwarz,
}

impl SolverChoice {
    pub fn parse(text: &str) -> CliResult<Self> {
        match text {
            "fista" => Ok(SolverChoice::Fista),
            "schwarz" => Ok(SolverChoice::Schwarz),
            other => Err(CliError::Config(format!(
                "unknown solver {other:?} (expected fista or schwarz)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverChoice::Fista => "fista",
            SolverChoice::Schwarz => "schwarz",
        }
    }
}

pub fn parse_model_kind(text: &str) -> CliResult<ModelKind> {
    match text {
        "rof" => Ok(ModelKind::Rof),
        "tvh1" => Ok(ModelKind::TvH1),
        other => Err(CliError::Config(format!(
            "unknown model {other:?} (expected rof or tvh1)"
        ))),
    }
}

pub fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Rof => "rof",
        ModelKind::TvH1 => "tvh1",
    }
}

/// `N1xN2` subdomain grid spec.
pub fn parse_domains(text: &str) -> CliResult<(usize, usize)> {
    let mut parts = text.split('x');
    let err = || CliError::Config(format!("invalid subdomain grid {text:?} (expected e.g. 2x2)"));
    let n1 = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
    let n2 = parts.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
    if parts.next().is_some() {
        return Err(err());
    }
    Ok((n1, n2))
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub lambda: f64,
    pub image: ImageSource,
    pub noise_variance: f64,
    pub seed: u64,
    pub solver: SolverChoice,
    pub n1: usize,
    pub n2: usize,
    pub delta: usize,
    pub tau: f64,
    pub outer_iterations: usize,
    pub local_max_iterations: usize,
    pub local_tolerance: f64,
    pub warm_start: bool,
    pub fista_iterations: usize,
    pub fista_tolerance: f64,
    pub reference_iterations: usize,
    pub log_every: usize,
    pub out_image: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    /// Output quantization depth; defaults to the source depth.
    pub out_maxval: Option<u16>,
    /// Write zeros in the wall-time column so output bytes are reproducible.
    pub omit_wall_time: bool,
    /// Worker count (0 = library default). Affects speed only, never
    /// results.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Rof,
            lambda: 10.0,
            image: ImageSource::Synthetic {
                kind: SyntheticKind::Blocks,
                width: 64,
                height: 64,
            },
            noise_variance: 0.05,
            seed: 1,
            solver: SolverChoice::Schwarz,
            n1: 2,
            n2: 2,
            delta: 8,
            tau: 0.25,
            outer_iterations: 300,
            local_max_iterations: 1000,
            local_tolerance: 1e-18,
            warm_start: false,
            fista_iterations: 5000,
            fista_tolerance: 1e-18,
            reference_iterations: 100_000,
            log_every: 10,
            out_image: None,
            out_csv: None,
            out_maxval: None,
            omit_wall_time: false,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(CliError::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.noise_variance < 0.0 || !self.noise_variance.is_finite() {
            return Err(CliError::Config(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        if let ImageSource::Synthetic { width, height, .. } = self.image {
            if width == 0 || height == 0 {
                return Err(CliError::Config(format!(
                    "synthetic image size {width}x{height} is degenerate"
                )));
            }
        }
        if self.solver == SolverChoice::Schwarz {
            if self.n1 == 0 || self.n2 == 0 {
                return Err(CliError::Config("subdomain grid must be at least 1x1".into()));
            }
            let colors = match (self.n1 > 1, self.n2 > 1) {
                (true, true) => 4,
                (false, false) => 1,
                _ => 2,
            };
            if !(self.tau > 0.0 && self.tau <= 1.0 / colors as f64) {
                return Err(CliError::Config(format!(
                    "tau must lie in (0, 1/{colors}], got {}",
                    self.tau
                )));
            }
            if self.local_max_iterations == 0 {
                return Err(CliError::Config(
                    "local solver needs at least one iteration".into(),
                ));
            }
            if self.local_tolerance.is_nan() || self.local_tolerance < 0.0 {
                return Err(CliError::Config("local tolerance must be nonnegative".into()));
            }
        }
        if self.solver == SolverChoice::Fista && self.fista_iterations == 0 {
            return Err(CliError::Config("fista needs at least one iteration".into()));
        }
        if self.reference_iterations == 0 {
            return Err(CliError::Config(
                "reference solve needs at least one iteration".into(),
            ));
        }
        if matches!(self.out_maxval, Some(0)) {
            return Err(CliError::Config("output maxval must be positive".into()));
        }
        Ok(())
    }
}

/// One optional entry per configurable field; merged over defaults.
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub model: Option<String>,
    pub lambda: Option<f64>,
    pub image: Option<PathBuf>,
    pub synthetic: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub noise_variance: Option<f64>,
    pub seed: Option<u64>,
    pub solver: Option<String>,
    pub domains: Option<String>,
    pub delta: Option<usize>,
    pub tau: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub local_max_iterations: Option<usize>,
    pub local_tolerance: Option<f64>,
    pub warm_start: Option<bool>,
    pub fista_iterations: Option<usize>,
    pub fista_tolerance: Option<f64>,
    pub reference_iterations: Option<usize>,
    pub log_every: Option<usize>,
    pub out_image: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    pub out_maxval: Option<u16>,
    pub omit_wall_time: Option<bool>,
    pub threads: Option<usize>,
}

impl PartialConfig {
    /// Fill unset fields from a lower-precedence source.
    pub fn or(mut self, lower: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($field:ident) => {
                if self.$field.is_none() {
                    self.$field = lower.$field;
                }
            };
        }
        take!(model);
        take!(lambda);
        take!(image);
        take!(synthetic);
        take!(width);
        take!(height);
        take!(noise_variance);
        take!(seed);
        take!(solver);
        take!(domains);
        take!(delta);
        take!(tau);
        take!(outer_iterations);
        take!(local_max_iterations);
        take!(local_tolerance);
        take!(warm_start);
        take!(fista_iterations);
        take!(fista_tolerance);
        take!(reference_iterations);
        take!(log_every);
        take!(out_image);
        take!(out_csv);
        take!(out_maxval);
        take!(omit_wall_time);
        take!(threads);
        self
    }

    pub fn resolve(self) -> CliResult<RunConfig> {
        let defaults = RunConfig::default();
        let image = match (&self.image, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either an image path or a synthetic spec, not both".into(),
                ))
            }
            (Some(path), None) => ImageSource::File(path.clone()),
            (None, spec) => {
                let kind = match spec {
                    Some(text) => SyntheticKind::parse(text)?,
                    None => SyntheticKind::Blocks,
                };
                ImageSource::Synthetic {
                    kind,
                    width: self.width.unwrap_or(64),
                    height: self.height.unwrap_or(64),
                }
            }
        };
        if self.image.is_some() && (self.width.is_some() || self.height.is_some()) {
            return Err(CliError::Config(
                "width/height apply to synthetic images only".into(),
            ));
        }

        let (n1, n2) = match &self.domains {
            Some(text) => parse_domains(text)?,
            None => (defaults.n1, defaults.n2),
        };
        let config = RunConfig {
            model: match &self.model {
                Some(text) => parse_model_kind(text)?,
                None => defaults.model,
            },
            lambda: self.lambda.unwrap_or(defaults.lambda),
            image,
            noise_variance: self.noise_variance.unwrap_or(defaults.noise_variance),
            seed: self.seed.unwrap_or(defaults.seed),
            solver: match &self.solver {
                Some(text) => SolverChoice::parse(text)?,
                None => defaults.solver,
            },
            n1,
            n2,
            delta: self.delta.unwrap_or(defaults.delta),
            tau: self.tau.unwrap_or(defaults.tau),
            outer_iterations: self.outer_iterations.unwrap_or(defaults.outer_iterations),
            local_max_iterations: self
                .local_max_iterations
                .unwrap_or(defaults.local_max_iterations),
            local_tolerance: self.local_tolerance.unwrap_or(defaults.local_tolerance),
            warm_start: self.warm_start.unwrap_or(defaults.warm_start),
            fista_iterations: self.fista_iterations.unwrap_or(defaults.fista_iterations),
            fista_tolerance: self.fista_tolerance.unwrap_or(defaults.fista_tolerance),
            reference_iterations: self
                .reference_iterations
                .unwrap_or(defaults.reference_iterations),
            log_every: self.log_every.unwrap_or(defaults.log_every),
            out_image: self.out_image,
            out_csv: self.out_csv,
            out_maxval: self.out_maxval,
            omit_wall_time: self.omit_wall_time.unwrap_or(defaults.omit_wall_time),
            threads: self.threads.unwrap_or(defaults.threads),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parse a `key = value` config file (one entry per line, `#` comments).
/// Keys use the long flag names; dashes and underscores are equivalent.
pub fn parse_config_text(text: &str) -> CliResult<PartialConfig> {
    let mut map: HashMap<String, String> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("config line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        map.insert(key, value.trim().to_string());
    }

    let mut partial = PartialConfig::default();
    let parse_num = |key: &str, value: &str| -> CliResult<f64> {
        value
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("config key {key}: invalid number {value:?}")))
    };
    let parse_usize = |key: &str, value: &str| -> CliResult<usize> {
        value
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("config key {key}: invalid count {value:?}")))
    };
    let parse_bool = |key: &str, value: &str| -> CliResult<bool> {
        match value {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(CliError::Config(format!(
                "config key {key}: invalid boolean {value:?}"
            ))),
        }
    };
    for (key, value) in map {
        match key.as_str() {
            "model" => partial.model = Some(value),
            "lambda" => partial.lambda = Some(parse_num("lambda", &value)?),
            "image" => partial.image = Some(PathBuf::from(value)),
            "synthetic" => partial.synthetic = Some(value),
            "width" => partial.width = Some(parse_usize("width", &value)?),
            "height" => partial.height = Some(parse_usize("height", &value)?),
            "noise_variance" => {
                partial.noise_variance = Some(parse_num("noise-variance", &value)?)
            }
            "seed" => {
                partial.seed = Some(value.parse::<u64>().map_err(|_| {
                    CliError::Config(format!("config key seed: invalid value {value:?}"))
                })?)
            }
            "solver" => partial.solver = Some(value),
            "domains" => partial.domains = Some(value),
            "delta" => partial.delta = Some(parse_usize("delta", &value)?),
            "tau" => partial.tau = Some(parse_num("tau", &value)?),
            "outer_iterations" => {
                partial.outer_iterations = Some(parse_usize("outer-iterations", &value)?)
            }
            "local_max_iterations" => {
                partial.local_max_iterations = Some(parse_usize("local-max-iterations", &value)?)
            }
            "local_tolerance" => {
                partial.local_tolerance = Some(parse_num("local-tolerance", &value)?)
            }
            "warm_start" => partial.warm_start = Some(parse_bool("warm-start", &value)?),
            "fista_iterations" => {
                partial.fista_iterations = Some(parse_usize("fista-iterations", &value)?)
            }
            "fista_tolerance" => {
                partial.fista_tolerance = Some(parse_num("fista-tolerance", &value)?)
            }
            "reference_iterations" => {
                partial.reference_iterations = Some(parse_usize("reference-iterations", &value)?)
            }
            "log_every" => partial.log_every = Some(parse_usize("log-every", &value)?),
            "out_image" => partial.out_image = Some(PathBuf::from(value)),
            "out_csv" => partial.out_csv = Some(PathBuf::from(value)),
            "out_maxval" => {
                partial.out_maxval = Some(value.parse::<u16>().map_err(|_| {
                    CliError::Config(format!("config key out-maxval: invalid value {value:?}"))
                })?)
            }
            "omit_wall_time" => {
                partial.omit_wall_time = Some(parse_bool("omit-wall-time", &value)?)
            }
            "threads" => partial.threads = Some(parse_usize("threads", &value)?),
            other => {
                return Err(CliError::Config(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(partial)
}

pub fn load_config_file(path: &std::path::Path) -> CliResult<PartialConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}
