//! Flat `key=value` experiment configuration.

use crate::error::CliError;
use dfa_core::consensus::{FilterRule, MergePrior, ResampleMode, SplitStrategy};
use dfa_core::mf::{CvGrid, MfParams};
use dfa_core::sampler::{ChainConfig, Init, NewFeatureRate};
use dfa_core::simulate::{HoldoutMode, SimParams};
use dfa_core::{Hyperparams, PbPrior, RhoPrior};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Keys naming files or resources; they do not enter the config hash.
const PATH_KEYS: &[&str] = &["out", "data", "model", "predictions", "truth", "queries", "jobs"];

/// Every recognised key with its default (empty: no default).
const KEYS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("out", "out"),
    ("data", ""),
    ("model", ""),
    ("predictions", ""),
    ("truth", ""),
    ("queries", ""),
    ("jobs", ""),
    ("top_items", ""),
    ("min_user_ratings", ""),
    ("holdout", "global:0.2"),
    ("iterations", "10000"),
    ("burn_in", ""),
    ("thin", "5"),
    ("lambda", "3"),
    ("pb", "beta:1,9"),
    ("theta_sd", "2"),
    ("tau_shape", "5"),
    ("tau_scale", "1"),
    ("rho_prior", "flat"),
    ("b0", "2.5"),
    ("init", "mf"),
    ("new_feature_rate", "per-user"),
    ("shards", "4"),
    ("split", "round-robin"),
    ("filter", "keep:0.2"),
    ("resample", "per-draw"),
    ("merge_prior", "flat"),
    ("merge", "true"),
    ("shard", "0"),
    ("mf_rank", "auto"),
    ("mf_lambda", "0.05"),
    ("mf_lr", "0.01"),
    ("mf_epochs", "200"),
    ("mf_folds", "5"),
    ("sim_users", "100"),
    ("sim_items", "150"),
    ("sim_lambda", "3"),
    ("sim_pb", "0.2"),
    ("sim_theta_sd", "2"),
    ("sim_tau", "0.25"),
    ("sim_b0", "2.5"),
    ("sim_rho_sd", "none"),
    ("sim_observed", "1"),
    ("tradeoff_users", "6000"),
    ("tradeoff_items", "200"),
    ("tradeoff_shards", "1,5,10,15,20,30"),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", idx + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| CliError::Usage(format!("config line {}: {e}", idx + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `other` on top of `self`.
    pub fn overlay(&mut self, other: &Config) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        match self.values.get(key) {
            Some(v) => Some(v.as_str()),
            None => KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).filter(|d| !d.is_empty()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?.ok_or_else(|| CliError::Usage(format!("missing required setting {key}")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.require("seed")
    }

    /// Effective settings that influence results, defaults included.
    pub fn effective(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .filter(|(k, _)| !PATH_KEYS.contains(k))
            .filter_map(|(k, _)| self.raw(k).map(|v| (k.to_string(), v.to_string())))
            .collect()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.effective() {
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }

    pub fn holdout(&self) -> Result<HoldoutMode, CliError> {
        let v = self.require::<String>("holdout")?;
        if v == "per-user" {
            return Ok(HoldoutMode::PerUserOneTest);
        }
        let f = v
            .strip_prefix("global:")
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| CliError::Usage(format!("holdout must be global:<fraction> or per-user, got {v:?}")))?;
        Ok(HoldoutMode::GlobalFraction(f))
    }

    pub fn hyper(&self) -> Result<Hyperparams, CliError> {
        let pb = self.require::<String>("pb")?;
        let pb = if let Some(p) = pb.strip_prefix("fixed:") {
            PbPrior::Fixed(parse_num("pb", p)?)
        } else if let Some(ab) = pb.strip_prefix("beta:") {
            let (a, b) = pair("pb", ab)?;
            PbPrior::Beta { a, b }
        } else {
            return Err(CliError::Usage(format!("pb must be fixed:<p> or beta:<a>,<b>, got {pb:?}")));
        };
        let rho = match self.require::<String>("rho_prior")?.as_str() {
            "off" => RhoPrior::Off,
            "flat" => RhoPrior::Flat,
            other => {
                let ms = other
                    .strip_prefix("normal:")
                    .ok_or_else(|| CliError::Usage(format!("rho_prior must be off, flat or normal:<mean>,<sd>, got {other:?}")))?;
                let (mean, sd) = pair("rho_prior", ms)?;
                RhoPrior::normal(mean, sd)
            }
        };
        let hyper = Hyperparams {
            lambda: self.require("lambda")?,
            pb,
            theta_sd: self.require("theta_sd")?,
            tau_shape: self.require("tau_shape")?,
            tau_scale: self.require("tau_scale")?,
            rho,
            b0: self.require("b0")?,
        };
        hyper.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(hyper)
    }

    pub fn mf_params(&self) -> Result<MfParams, CliError> {
        let lambda: f64 = self.require("mf_lambda")?;
        let rank = match self.require::<String>("mf_rank")?.as_str() {
            "auto" => MfParams::default().rank,
            r => parse_num("mf_rank", r)?,
        };
        Ok(MfParams {
            rank,
            lambda_p: lambda,
            lambda_q: lambda,
            learning_rate: self.require("mf_lr")?,
            epochs: self.require("mf_epochs")?,
        })
    }

    /// `None` when the rank is chosen by cross validation.
    pub fn mf_fixed_rank(&self) -> Result<Option<usize>, CliError> {
        match self.require::<String>("mf_rank")?.as_str() {
            "auto" => Ok(None),
            r => parse_num("mf_rank", r).map(Some),
        }
    }

    pub fn chain(&self) -> Result<ChainConfig, CliError> {
        let iterations: usize = self.require("iterations")?;
        let mut config = ChainConfig::new(iterations, self.seed()?);
        if let Some(b) = self.get("burn_in")? {
            config.burn_in = b;
        }
        config.thin = self.require("thin")?;
        config.hyper = self.hyper()?;
        config.new_feature_rate = match self.require::<String>("new_feature_rate")?.as_str() {
            "per-user" => NewFeatureRate::PerUser,
            "per-item" => NewFeatureRate::PerItem,
            other => return Err(CliError::Usage(format!("new_feature_rate must be per-user or per-item, got {other:?}"))),
        };
        config.init = match self.require::<String>("init")?.as_str() {
            "prior" => Init::Prior,
            "mf" => Init::Mf {
                rank: self.mf_fixed_rank()?,
                params: self.mf_params()?,
                grid: CvGrid::default(),
                folds: self.require("mf_folds")?,
            },
            other => return Err(CliError::Usage(format!("init must be prior or mf, got {other:?}"))),
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn split(&self) -> Result<SplitStrategy, CliError> {
        match self.require::<String>("split")?.as_str() {
            "round-robin" => Ok(SplitStrategy::RoundRobin),
            "contiguous" => Ok(SplitStrategy::Contiguous),
            "shuffle" => Ok(SplitStrategy::SeededShuffle(self.seed()?)),
            other => Err(CliError::Usage(format!("split must be round-robin, contiguous or shuffle, got {other:?}"))),
        }
    }

    pub fn filter(&self) -> Result<FilterRule, CliError> {
        self.require::<String>("filter")?.parse().map_err(|e: dfa_core::Error| CliError::Usage(e.to_string()))
    }

    pub fn resample(&self) -> Result<ResampleMode, CliError> {
        self.require::<String>("resample")?.parse().map_err(|e: dfa_core::Error| CliError::Usage(e.to_string()))
    }

    pub fn merge_prior(&self) -> Result<MergePrior, CliError> {
        match self.require::<String>("merge_prior")?.as_str() {
            "flat" => Ok(MergePrior::Flat),
            other => {
                let ms = other
                    .strip_prefix("normal:")
                    .ok_or_else(|| CliError::Usage(format!("merge_prior must be flat or normal:<mean>,<sd>, got {other:?}")))?;
                let (mean, sd) = pair("merge_prior", ms)?;
                if !(sd > 0.0) {
                    return Err(CliError::Usage("merge prior sd must be positive".into()));
                }
                Ok(MergePrior::Normal { mean, sd })
            }
        }
    }

    pub fn sim(&self) -> Result<SimParams, CliError> {
        let rho_sd = match self.require::<String>("sim_rho_sd")?.as_str() {
            "none" => None,
            v => Some(parse_num("sim_rho_sd", v)?),
        };
        let sim = SimParams {
            users: self.require("sim_users")?,
            items: self.require("sim_items")?,
            lambda: self.require("sim_lambda")?,
            p_b: self.require("sim_pb")?,
            theta_sd: self.require("sim_theta_sd")?,
            tau: self.require("sim_tau")?,
            b0: self.require("sim_b0")?,
            rho_sd,
        };
        sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(sim)
    }

    /// Fraction of simulated cells kept as observed ratings.
    pub fn sim_observed(&self) -> Result<f64, CliError> {
        let f: f64 = self.require("sim_observed")?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Usage(format!("sim_observed must lie in (0, 1], got {f}")));
        }
        Ok(f)
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let v = self.require::<String>(key)?;
        v.split(',').map(|s| parse_num(key, s.trim())).collect()
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("invalid number {v:?} in {key}")))
}

fn pair(key: &str, v: &str) -> Result<(f64, f64), CliError> {
    let (a, b) = v.split_once(',').ok_or_else(|| CliError::Usage(format!("{key} expects two comma-separated numbers")))?;
    Ok((parse_num(key, a.trim())?, parse_num(key, b.trim())?))
}
