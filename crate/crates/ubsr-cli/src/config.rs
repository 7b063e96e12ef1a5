//! TOML run configuration. Unknown keys are rejected, and every tolerance
//! must be positive.

use serde::Deserialize;
use ubsr::admm::AdmmOptions;
use ubsr::backtest::R0Rule;
use ubsr::data::IngestPolicy;
use ubsr::LossFunction;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub loss: LossSection,
    pub optimize: Option<OptimizeSection>,
    pub backtest: Option<BacktestSection>,
    #[serde(default)]
    pub admm: AdmmSection,
    #[serde(default)]
    pub ingest: IngestSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub kind: String,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub lambda: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Either a number or the string "auto" (equal-weight expected return).
    #[serde(default)]
    pub r0: Option<toml::Value>,
    pub input: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub lambda: f64,
    #[serde(default = "default_backtest_alpha")]
    pub alpha: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// "one_over_n", "full_sample_mean", or a number.
    #[serde(default)]
    pub r0_rule: Option<toml::Value>,
}

fn default_backtest_alpha() -> f64 {
    0.3
}

fn default_window() -> usize {
    250
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmSection {
    pub sigma0: Option<f64>,
    pub tau: Option<f64>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub max_iter: Option<usize>,
    pub wt_tol: Option<f64>,
    pub wt_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub outlier_zscore_cutoff: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {path}: {e}")))?;
        let cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: Option<f64>| -> Result<(), CliError> {
            match v {
                Some(x) if !(x > 0.0) => Err(CliError::Usage(format!(
                    "config: {name} must be positive, got {x}"
                ))),
                _ => Ok(()),
            }
        };
        positive("admm.sigma0", self.admm.sigma0)?;
        positive("admm.tau", self.admm.tau)?;
        positive("admm.tol_abs", self.admm.tol_abs)?;
        positive("admm.tol_rel", self.admm.tol_rel)?;
        positive("admm.wt_tol", self.admm.wt_tol)?;
        positive(
            "ingest.outlier_zscore_cutoff",
            self.ingest.outlier_zscore_cutoff,
        )?;
        Ok(())
    }

    pub fn loss(&self) -> Result<LossFunction, CliError> {
        match self.loss.kind.as_str() {
            "exp" => {
                let beta = self.loss.beta.ok_or_else(|| {
                    CliError::Usage("config: loss.kind = \"exp\" needs beta".into())
                })?;
                LossFunction::exponential(beta).map_err(|e| CliError::Usage(e.to_string()))
            }
            "poly" => {
                let eta = self.loss.eta.ok_or_else(|| {
                    CliError::Usage("config: loss.kind = \"poly\" needs eta".into())
                })?;
                LossFunction::piecewise_polynomial(eta).map_err(|e| CliError::Usage(e.to_string()))
            }
            other => Err(CliError::Usage(format!(
                "config: unknown loss kind {other:?}"
            ))),
        }
    }

    pub fn admm_options(&self) -> AdmmOptions {
        let mut opts = AdmmOptions::default();
        if let Some(v) = self.admm.sigma0 {
            opts.sigma0 = v;
        }
        if let Some(v) = self.admm.tau {
            opts.tau = v;
        }
        if let Some(v) = self.admm.tol_abs {
            opts.tol_abs = v;
        }
        if let Some(v) = self.admm.tol_rel {
            opts.tol_rel = v;
        }
        if let Some(v) = self.admm.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = self.admm.wt_tol {
            opts.wt_tol = v;
        }
        if let Some(v) = self.admm.wt_max_iter {
            opts.wt_max_iter = v;
        }
        opts
    }

    pub fn ingest_policy(&self) -> IngestPolicy {
        let mut p = IngestPolicy::default();
        if let Some(c) = self.ingest.outlier_zscore_cutoff {
            p.outlier_zscore_cutoff = c;
        }
        p
    }
}

/// Parses an `r0`-style value: absent or "auto" means the 1/n rule.
pub fn parse_r0(value: &Option<toml::Value>) -> Result<Option<f64>, CliError> {
    match value {
        None => Ok(None),
        Some(toml::Value::String(s)) if s == "auto" => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(*f)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(CliError::Usage(format!(
            "config: r0 must be a number or \"auto\", got {other:?}"
        ))),
    }
}

pub fn parse_r0_rule(value: &Option<toml::Value>) -> Result<R0Rule, CliError> {
    match value {
        None => Ok(R0Rule::OneOverN),
        Some(toml::Value::String(s)) => match s.as_str() {
            "one_over_n" => Ok(R0Rule::OneOverN),
            "full_sample_mean" => Ok(R0Rule::FullSampleMean),
            other => Err(CliError::Usage(format!(
                "config: unknown r0_rule {other:?}"
            ))),
        },
        Some(toml::Value::Float(f)) => Ok(R0Rule::Fixed(*f)),
        Some(toml::Value::Integer(i)) => Ok(R0Rule::Fixed(*i as f64)),
        Some(other) => Err(CliError::Usage(format!(
            "config: r0_rule must be a string or number, got {other:?}"
        ))),
    }
}
