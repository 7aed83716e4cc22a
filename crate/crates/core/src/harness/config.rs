//! Run configuration: defaults, key=value config files, and CLI overrides.
//!
//! Config files are flat UTF-8 `key=value` lines; blank lines and lines
//! starting with `#` are ignored. CLI flags are applied after the file, so
//! flags override file values.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::models::SelectorMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchChoice {
    Baseline,
    Swiden,
    Grn,
    Switch,
}

impl ArchChoice {
    pub fn parse(s: &str) -> Result<ArchChoice> {
        match s {
            "baseline" => Ok(ArchChoice::Baseline),
            "swiden" => Ok(ArchChoice::Swiden),
            "grn" => Ok(ArchChoice::Grn),
            "switch" => Ok(ArchChoice::Switch),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {:?} (expected baseline, swiden, grn, or switch)",
                other
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchChoice::Baseline => "baseline",
            ArchChoice::Swiden => "swiden",
            ArchChoice::Grn => "grn",
            ArchChoice::Switch => "switch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerChoice {
    Plateau,
    Off,
}

impl SchedulerChoice {
    pub fn parse(s: &str) -> Result<SchedulerChoice> {
        match s {
            "plateau" => Ok(SchedulerChoice::Plateau),
            "off" => Ok(SchedulerChoice::Off),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheduler {:?} (expected plateau or off)",
                other
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerChoice::Plateau => "plateau",
            SchedulerChoice::Off => "off",
        }
    }
}

/// Everything one training run needs. Architecture-specific fields are
/// validated per architecture by [`RunConfig::validate`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub arch: ArchChoice,
    /// Branch depth for swiden (C k-S).
    pub k: usize,
    /// Gradient-reversal strength for grn.
    pub lambda: f64,
    /// Branch selection at train/eval time for swiden.
    pub selector: SelectorMode,
    pub switch_checkpoint: Option<PathBuf>,
    /// Learning-rate multiplier on swiden's Art branch (1 = no boost).
    pub art_lr_scale: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Backbone FC dropout. The classic 0.5 suits fine-tuning a pretrained
    /// net; training this backbone from scratch needs much less (the desk
    /// preset uses 0).
    pub dropout: f64,
    /// `None` until resolved: grn defaults to off (constant LR), everything
    /// else to plateau.
    pub scheduler: Option<SchedulerChoice>,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Smallest-side rescale target applied before cropping.
    pub rescale: usize,
    pub crop: usize,
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    /// Defaults to `seed` unless set explicitly.
    pub split_seed: Option<u64>,
    pub split_index: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchChoice::Baseline,
            k: 4,
            lambda: 2.0,
            selector: SelectorMode::Oracle,
            switch_checkpoint: None,
            art_lr_scale: 1.0,
            lr: 1e-2,
            momentum: 0.9,
            dropout: 0.5,
            scheduler: None,
            epochs: 30,
            batch: 16,
            seed: 42,
            data: None,
            out: None,
            rescale: 72,
            crop: 64,
            train_per_cell: 12,
            test_per_cell: 8,
            split_seed: None,
            split_index: 0,
        }
    }
}

impl RunConfig {
    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    /// Scheduler resolved per architecture: grn keeps a constant learning
    /// rate, everything else monitors validation accuracy.
    pub fn scheduler_resolved(&self) -> SchedulerChoice {
        self.scheduler.unwrap_or(match self.arch {
            ArchChoice::Grn => SchedulerChoice::Off,
            _ => SchedulerChoice::Plateau,
        })
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_num = |k: &str, v: &str| Error::InvalidConfig(format!("{} must be a number, got {:?}", k, v));
        match key {
            "arch" => self.arch = ArchChoice::parse(value)?,
            "k" => self.k = value.parse().map_err(|_| bad_num(key, value))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad_num(key, value))?,
            "selector" => {
                self.selector = match value {
                    "oracle" => SelectorMode::Oracle,
                    "predicted" => SelectorMode::Predicted,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "unknown selector {:?} (expected oracle or predicted)",
                            other
                        )))
                    }
                }
            }
            "switch_checkpoint" => self.switch_checkpoint = Some(PathBuf::from(value)),
            "art_lr_scale" => {
                self.art_lr_scale = value.parse().map_err(|_| bad_num(key, value))?
            }
            "lr" => self.lr = value.parse().map_err(|_| bad_num(key, value))?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad_num(key, value))?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad_num(key, value))?,
            "scheduler" => self.scheduler = Some(SchedulerChoice::parse(value)?),
            "epochs" => self.epochs = value.parse().map_err(|_| bad_num(key, value))?,
            "batch" => self.batch = value.parse().map_err(|_| bad_num(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad_num(key, value))?,
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "rescale" => self.rescale = value.parse().map_err(|_| bad_num(key, value))?,
            "crop" => self.crop = value.parse().map_err(|_| bad_num(key, value))?,
            "train_per_cell" => {
                self.train_per_cell = value.parse().map_err(|_| bad_num(key, value))?
            }
            "test_per_cell" => self.test_per_cell = value.parse().map_err(|_| bad_num(key, value))?,
            "split_seed" => self.split_seed = Some(value.parse().map_err(|_| bad_num(key, value))?),
            "split_index" => self.split_index = value.parse().map_err(|_| bad_num(key, value))?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key {:?}", other)));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be positive".into()));
        }
        if self.crop == 0 || self.crop > self.rescale {
            return Err(Error::InvalidConfig(format!(
                "crop {} must be positive and at most the rescale target {}",
                self.crop, self.rescale
            )));
        }
        if self.train_per_cell == 0 {
            return Err(Error::InvalidConfig("train_per_cell must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        match self.arch {
            ArchChoice::Swiden => {
                if !(1..=5).contains(&self.k) {
                    return Err(Error::InvalidConfig(format!(
                        "swiden branch depth k must be in 1..=5, got {}",
                        self.k
                    )));
                }
                if self.selector == SelectorMode::Predicted && self.switch_checkpoint.is_none() {
                    return Err(Error::InvalidConfig(
                        "selector=predicted requires switch_checkpoint".into(),
                    ));
                }
                if !(self.art_lr_scale > 0.0 && self.art_lr_scale.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "art_lr_scale must be positive, got {}",
                        self.art_lr_scale
                    )));
                }
            }
            ArchChoice::Grn => {
                if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "grn lambda must be finite and nonnegative, got {}",
                        self.lambda
                    )));
                }
                if self.scheduler == Some(SchedulerChoice::Plateau) {
                    return Err(Error::InvalidConfig(
                        "grn trains with a constant learning rate; scheduler=plateau is not valid".into(),
                    ));
                }
            }
            ArchChoice::Baseline | ArchChoice::Switch => {}
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("data path is required (set data= or --data)".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("output dir is required (set out= or --out)".into()))
    }

    /// Stable label used in file names and reports.
    pub fn arch_label(&self) -> String {
        match self.arch {
            ArchChoice::Baseline => "baseline".into(),
            ArchChoice::Grn => format!("grn(lambda={})", self.lambda),
            ArchChoice::Swiden => format!("swiden(C{}-S,{})", self.k, self.selector.as_str()),
            ArchChoice::Switch => "switch".into(),
        }
    }
}

/// Parses a config file into ordered key/value pairs.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: format!("expected key=value, got {:?}", line),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Builds a config from defaults, then file pairs, then override pairs.
pub fn build_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        for (k, v) in parse_config_file(path)? {
            cfg.apply(&k, &v).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::InvalidConfig(format!(
                    "{} (in config file {})",
                    msg,
                    path.display()
                )),
                other => other,
            })?;
        }
    }
    for (k, v) in overrides {
        cfg.apply(k, v)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_validate_for_every_architecture() {
        for arch in [ArchChoice::Baseline, ArchChoice::Grn, ArchChoice::Switch] {
            let cfg = RunConfig {
                arch,
                ..RunConfig::default()
            };
            cfg.validate().unwrap();
        }
        let swiden = RunConfig {
            arch: ArchChoice::Swiden,
            ..RunConfig::default()
        };
        swiden.validate().unwrap();
    }

    #[test]
    fn file_values_load_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f, "arch = swiden").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "k=3").unwrap();
        writeln!(f, "lr=0.005").unwrap();
        drop(f);
        let overrides = vec![("k".to_string(), "5".to_string())];
        let cfg = build_config(Some(&path), &overrides).unwrap();
        assert_eq!(cfg.arch, ArchChoice::Swiden);
        assert_eq!(cfg.k, 5, "flag overrides file");
        assert_eq!(cfg.lr, 0.005);
    }

    #[test]
    fn malformed_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "arch=baseline\nnot a pair\n").unwrap();
        match parse_config_file(&path) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ConfigParse, got {:?}", other),
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply("frobnicate", "1"), Err(Error::InvalidConfig(_))));
        assert!(matches!(cfg.apply("epochs", "three"), Err(Error::InvalidConfig(_))));
        assert!(matches!(cfg.apply("arch", "resnet"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn grn_rejects_plateau_and_defaults_to_constant_lr() {
        let mut cfg = RunConfig {
            arch: ArchChoice::Grn,
            ..RunConfig::default()
        };
        assert_eq!(cfg.scheduler_resolved(), SchedulerChoice::Off);
        cfg.scheduler = Some(SchedulerChoice::Plateau);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let baseline = RunConfig::default();
        assert_eq!(baseline.scheduler_resolved(), SchedulerChoice::Plateau);
    }

    #[test]
    fn swiden_predicted_requires_checkpoint_and_k_in_range() {
        let mut cfg = RunConfig {
            arch: ArchChoice::Swiden,
            selector: SelectorMode::Predicted,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg.switch_checkpoint = Some(PathBuf::from("switch.swck"));
        cfg.validate().unwrap();
        cfg.k = 6;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
