//! Run and grid configuration files, in TOML or (by `.json` extension) JSON.
//!
//! A run config; every key is optional:
//!
//! ```toml
//! threads = 4
//! [chordify]
//! tau_ioi = 0.05
//! tau_chord = 0.30
//! [align]
//! alpha = 0.5
//! max_cells = 33554432
//! [features]
//! weights = [0.75, 0.0, 0.0, 0.25]   # cost, warp_opt, warp_mean, len
//! normalize = true
//! cost_norm = "path_length"          # or "max_length", "none"
//! [cluster]
//! method = "average"
//! threshold = 0.35
//! ```
//!
//! A grid config takes `objective`, `averaging`, `weights` (a list of weight
//! vectors) or `weight_step`, `methods`, `thresholds` or `threshold_range =
//! {start, stop, step}`, `alphas`, and the `chordify`, `align` and `features`
//! tables above for the settings held fixed during the search. An empty file
//! is the default grid.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use structura_core::align::AlignParams;
use structura_core::chordify::ChordifyParams;
use structura_core::cluster::LinkageMethod;
use structura_core::features::{CostNorm, FeatureWeights};
use structura_core::metrics::Averaging;
use structura_core::tune::{Objective, ParamGrid, PipelineConfig, PipelineParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostNormName {
    PathLength,
    MaxLength,
    None,
}

impl From<CostNormName> for CostNorm {
    fn from(n: CostNormName) -> Self {
        match n {
            CostNormName::PathLength => CostNorm::PathLength,
            CostNormName::MaxLength => CostNorm::MaxLength,
            CostNormName::None => CostNorm::None,
        }
    }
}

impl From<CostNorm> for CostNormName {
    fn from(n: CostNorm) -> Self {
        match n {
            CostNorm::PathLength => CostNormName::PathLength,
            CostNorm::MaxLength => CostNormName::MaxLength,
            CostNorm::None => CostNormName::None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChordifySection {
    pub tau_ioi: Option<f64>,
    pub tau_chord: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignSection {
    pub alpha: Option<f64>,
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub weights: Option<[f64; 4]>,
    pub normalize: Option<bool>,
    pub cost_norm: Option<CostNormName>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub method: Option<String>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub threads: Option<usize>,
    #[serde(default)]
    pub chordify: ChordifySection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub cluster: ClusterSection,
}

/// Fully resolved settings for a `cluster` or `align` run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub params: PipelineParams,
    pub threads: usize,
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

fn pipeline_config(
    chordify: &ChordifySection,
    align: &AlignSection,
    features: &FeaturesSection,
) -> Result<PipelineConfig, ConfigError> {
    let mut p = PipelineConfig::default();
    let defaults = ChordifyParams::default();
    p.chordify = ChordifyParams::new(
        chordify.tau_ioi.unwrap_or(defaults.tau_ioi()),
        chordify.tau_chord.unwrap_or(defaults.tau_chord()),
    )
    .map_err(invalid)?;
    if let Some(m) = align.max_cells {
        p.max_cells = m;
    }
    if let Some(n) = features.normalize {
        p.normalize = n;
    }
    if let Some(c) = features.cost_norm {
        p.cost_norm = c.into();
    }
    Ok(p)
}

impl RunConfigFile {
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let pipeline = pipeline_config(&self.chordify, &self.align, &self.features)?;
        let mut params = PipelineParams::default();
        if let Some(w) = self.features.weights {
            params.weights = FeatureWeights::from_array(w).map_err(invalid)?;
        }
        if let Some(m) = &self.cluster.method {
            params.method = m.parse().map_err(invalid)?;
        }
        if let Some(t) = self.cluster.threshold {
            if !(t >= 0.0) {
                return Err(ConfigError::Invalid(format!("threshold must be non-negative, got {t}")));
            }
            params.threshold = t;
        }
        if let Some(a) = self.align.alpha {
            AlignParams::new(a).map_err(invalid)?;
            params.alpha = a;
        }
        let threads = self.threads.unwrap_or_else(default_threads);
        if threads == 0 {
            return Err(ConfigError::Invalid("threads must be at least 1".into()));
        }
        Ok(RunConfig {
            pipeline,
            params,
            threads,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    /// `start, start + step, ...` up to and including `stop` (with a small
    /// tolerance), each value rounded to nine decimals so `0.15` prints as
    /// `0.15`.
    pub fn values(&self) -> Result<Vec<f64>, ConfigError> {
        if !(self.step > 0.0 && self.start.is_finite() && self.stop >= self.start) {
            return Err(ConfigError::Invalid(format!(
                "range needs step > 0 and start <= stop, got {:?}",
                self
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    Homogeneity,
    Completeness,
    VMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingName {
    Macro,
    Micro,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfigFile {
    pub objective: Option<ObjectiveName>,
    pub averaging: Option<AveragingName>,
    pub weights: Option<Vec<[f64; 4]>>,
    pub weight_step: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub thresholds: Option<Vec<f64>>,
    pub threshold_range: Option<RangeSpec>,
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub chordify: ChordifySection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub features: FeaturesSection,
}

impl GridConfigFile {
    pub fn resolve(&self) -> Result<(PipelineConfig, ParamGrid), ConfigError> {
        if self.align.alpha.is_some() {
            return Err(ConfigError::Invalid("set `alphas` in a grid config, not `align.alpha`".into()));
        }
        if self.features.weights.is_some() {
            return Err(ConfigError::Invalid("set `weights` in a grid config, not `features.weights`".into()));
        }
        let mut config = pipeline_config(&self.chordify, &self.align, &self.features)?;
        if let Some(a) = self.averaging {
            config.averaging = match a {
                AveragingName::Macro => Averaging::Macro,
                AveragingName::Micro => Averaging::Micro,
            };
        }
        let mut grid = ParamGrid::default();
        if let Some(o) = self.objective {
            grid.objective = match o {
                ObjectiveName::Homogeneity => Objective::Homogeneity,
                ObjectiveName::Completeness => Objective::Completeness,
                ObjectiveName::VMeasure => Objective::VMeasure,
            };
        }
        match (&self.weights, self.weight_step) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either `weights` or `weight_step`".into())),
            (Some(ws), None) => {
                grid.weight_candidates = ws
                    .iter()
                    .map(|w| FeatureWeights::from_array(*w))
                    .collect::<Result<_, _>>()
                    .map_err(invalid)?;
            }
            (None, Some(step)) => {
                let divisions = (1.0 / step).round();
                if !(step > 0.0 && step <= 1.0 && (divisions * step - 1.0).abs() < 1e-9) {
                    return Err(ConfigError::Invalid(format!("weight_step must divide 1, got {step}")));
                }
                grid.weight_candidates = FeatureWeights::simplex_lattice(divisions as u32);
            }
            (None, None) => {}
        }
        if let Some(ms) = &self.methods {
            grid.methods = ms
                .iter()
                .map(|m| m.parse::<LinkageMethod>())
                .collect::<Result<_, _>>()
                .map_err(invalid)?;
        }
        match (&self.thresholds, &self.threshold_range) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid("give either `thresholds` or `threshold_range`".into()))
            }
            (Some(ts), None) => grid.thresholds = ts.clone(),
            (None, Some(r)) => grid.thresholds = r.values()?,
            (None, None) => {}
        }
        if let Some(a) = &self.alphas {
            grid.alpha_candidates = a.clone();
        }
        grid.validate().map_err(invalid)?;
        Ok((config, grid))
    }
}

fn parse_file<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text, path)
}

/// Parses `text` as JSON when `path` ends in `.json`, TOML otherwise.
pub fn parse_str<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parse_err = |reason: String| ConfigError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    if is_json {
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| parse_err(e.to_string()))
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfigFile, ConfigError> {
    parse_file(path)
}

pub fn load_grid_config(path: &Path) -> Result<GridConfigFile, ConfigError> {
    parse_file(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_config_is_default() {
        let f: RunConfigFile = parse_str("", Path::new("c.toml")).unwrap();
        let c = f.resolve().unwrap();
        assert_eq!(c.params, PipelineParams::default());
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert!(c.threads >= 1);
    }

    #[test]
    fn run_config_sections() {
        let text = r#"
            threads = 3
            [chordify]
            tau_ioi = 0.04
            [align]
            alpha = 0.25
            [features]
            weights = [2, 2, 0, 0]
            cost_norm = "max_length"
            normalize = false
            [cluster]
            method = "complete"
            threshold = 0.7
        "#;
        let c = parse_str::<RunConfigFile>(text, Path::new("c.toml")).unwrap().resolve().unwrap();
        assert_eq!(c.threads, 3);
        assert_eq!(c.pipeline.chordify.tau_ioi(), 0.04);
        assert_eq!(c.pipeline.chordify.tau_chord(), 0.30);
        assert_eq!(c.pipeline.cost_norm, CostNorm::MaxLength);
        assert!(!c.pipeline.normalize);
        assert_eq!(c.params.weights.as_array(), [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(c.params.method, LinkageMethod::Complete);
        assert_eq!((c.params.threshold, c.params.alpha), (0.7, 0.25));
    }

    #[test]
    fn json_run_config() {
        let c = parse_str::<RunConfigFile>(r#"{"cluster": {"method": "single"}}"#, Path::new("c.json"))
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.params.method, LinkageMethod::Single);
    }

    #[test]
    fn bad_run_configs() {
        for text in [
            "threads = 0",
            "[cluster]\nmethod = \"ward\"",
            "[cluster]\nthreshold = -1",
            "[align]\nalpha = 2",
            "[features]\nweights = [0, 0, 0, 0]",
            "[chordify]\ntau_ioi = -0.1",
        ] {
            let parsed = parse_str::<RunConfigFile>(text, Path::new("c.toml")).unwrap();
            assert!(parsed.resolve().is_err(), "{text}");
        }
        assert!(parse_str::<RunConfigFile>("colour = 1", Path::new("c.toml")).is_err());
    }

    #[test]
    fn empty_grid_is_default() {
        let (config, grid) = parse_str::<GridConfigFile>("", Path::new("g.toml")).unwrap().resolve().unwrap();
        assert_eq!(config, PipelineConfig::default());
        assert_eq!(grid, ParamGrid::default());
        assert_eq!(grid.len(), 35 * 4 * 19 * 4);
    }

    #[test]
    fn grid_fields() {
        let text = r#"
            objective = "v_measure"
            averaging = "micro"
            weight_step = 0.5
            methods = ["single", "average"]
            threshold_range = { start = 0.1, stop = 0.3, step = 0.1 }
            alphas = [0.5]
        "#;
        let (config, grid) = parse_str::<GridConfigFile>(text, Path::new("g.toml")).unwrap().resolve().unwrap();
        assert_eq!(config.averaging, Averaging::Micro);
        assert_eq!(grid.objective, Objective::VMeasure);
        assert_eq!(grid.weight_candidates.len(), 10);
        assert_eq!(grid.methods, vec![LinkageMethod::Single, LinkageMethod::Average]);
        assert_eq!(grid.thresholds, vec![0.1, 0.2, 0.3]);
        assert_eq!(grid.alpha_candidates, vec![0.5]);
    }

    #[test]
    fn bad_grids() {
        for text in [
            "weight_step = 0.3",
            "weights = [[1, 0, 0, 0]]\nweight_step = 0.5",
            "methods = []",
            "thresholds = [-0.5]",
            "alphas = [1.5]",
            "threshold_range = { start = 0.5, stop = 0.1, step = 0.1 }",
            "[align]\nalpha = 0.5",
        ] {
            let parsed = parse_str::<GridConfigFile>(text, Path::new("g.toml")).unwrap();
            assert!(parsed.resolve().is_err(), "{text}");
        }
    }
}
