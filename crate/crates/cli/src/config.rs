//! Flat `key = value` experiment configs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oil_core::environments::{CartPoleConfig, SysIdEnvironment};
use oil_core::learners::Algorithm;
use oil_core::online_il::{
    ImitationSetup, InitChoice, RunConfig, Scenario, StationarySetup, StepsizeChoice, SyntheticSetup,
    DEFAULT_MU, DEFAULT_RESAMPLES,
};
use oil_core::policies::{BiasLevel, ExpertPolicy, FeatureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset `{s}` (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Imitation,
    SysId,
    Stationary,
    Synthetic,
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "imitation" => Ok(ScenarioKind::Imitation),
            "sysid" => Ok(ScenarioKind::SysId),
            "stationary" => Ok(ScenarioKind::Stationary),
            "synthetic" => Ok(ScenarioKind::Synthetic),
            _ => Err(format!(
                "unknown scenario `{s}` (expected imitation, sysid, stationary or synthetic)"
            )),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Imitation => "imitation",
            ScenarioKind::SysId => "sysid",
            ScenarioKind::Stationary => "stationary",
            ScenarioKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepsizeKind {
    AdaGrad,
    Constant,
    Theorem1,
}

impl FromStr for StepsizeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adagrad" => Ok(StepsizeKind::AdaGrad),
            "constant" => Ok(StepsizeKind::Constant),
            "theorem1" => Ok(StepsizeKind::Theorem1),
            _ => Err(format!("unknown stepsize `{s}` (expected adagrad, constant or theorem1)")),
        }
    }
}

impl fmt::Display for StepsizeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepsizeKind::AdaGrad => "adagrad",
            StepsizeKind::Constant => "constant",
            StepsizeKind::Theorem1 => "theorem1",
        })
    }
}

/// One entry of the `levels` list.
fn parse_level(s: &str) -> Result<BiasLevel, String> {
    if s == "unbiased" {
        return Ok(BiasLevel::Unbiased);
    }
    if let Some(r) = s.strip_prefix("radius:") {
        let r: f64 = r.parse().map_err(|_| format!("`{s}` is not a radius"))?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(format!("radius must be positive, got {r}"));
        }
        return Ok(BiasLevel::Radius(r));
    }
    let f: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not a fraction, `unbiased` or `radius:R`"))?;
    if !(f > 0.0 && f <= 1.0) {
        return Err(format!("fraction must lie in (0, 1], got {f}"));
    }
    Ok(BiasLevel::Fraction(f))
}

fn level_text(l: &BiasLevel) -> String {
    match l {
        BiasLevel::Fraction(f) => format!("{f}"),
        BiasLevel::Unbiased => "unbiased".into(),
        BiasLevel::Radius(r) => format!("radius:{r}"),
    }
}

/// A grid of runs: every bias level crossed with every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scenario: ScenarioKind,
    pub rounds: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub horizon: usize,
    pub init_offset: f64,
    pub mu: f64,
    pub stepsize: StepsizeKind,
    /// Constant stepsize, or the AdaGrad numerator; unset means `R_A/2`.
    pub stepsize_base: Option<f64>,
    pub beta: Option<f64>,
    pub e_hat: Option<f64>,
    pub algorithm: Algorithm,
    pub init: InitChoice,
    pub resamples: usize,
    pub shared_eval_batch: bool,
    pub levels: Vec<BiasLevel>,
    pub seeds: Vec<u64>,
    pub expert_file: Option<PathBuf>,
    pub random_features: usize,
    pub feature_seed: u64,
    pub delta: f64,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            preset,
            scenario: ScenarioKind::Imitation,
            rounds: 300,
            batch_size: 200,
            eval_batch_size: 1000,
            horizon: 200,
            init_offset: CartPoleConfig::default().init_offset,
            mu: DEFAULT_MU,
            stepsize: StepsizeKind::AdaGrad,
            stepsize_base: None,
            beta: None,
            e_hat: None,
            algorithm: Algorithm::Ogd,
            init: InitChoice::Zero,
            resamples: DEFAULT_RESAMPLES,
            shared_eval_batch: false,
            levels: vec![
                BiasLevel::Fraction(0.5),
                BiasLevel::Fraction(0.65),
                BiasLevel::Fraction(0.85),
                BiasLevel::Unbiased,
            ],
            seeds: vec![0, 1, 2, 3],
            expert_file: None,
            random_features: 0,
            feature_seed: 0,
            delta: 0.05,
        };
        match preset {
            Preset::Desk => desk,
            Preset::Paper => Self {
                rounds: 500,
                batch_size: 1000,
                eval_batch_size: 5000,
                horizon: 1000,
                stepsize_base: Some(0.01),
                ..desk
            },
        }
    }

    /// Parses config text. `preset_override` replaces any `preset` key;
    /// relative `expert_file` paths resolve against `base_dir`.
    pub fn parse(text: &str, preset_override: Option<Preset>, base_dir: &Path) -> Result<Self, Vec<String>> {
        let mut errors = Vec::new();
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {lineno}: expected `key = value`, got `{line}`"));
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some((prev, _, _)) = entries.iter().find(|e| e.1 == k) {
                errors.push(format!("line {lineno}: duplicate key `{k}` (first set on line {prev})"));
                continue;
            }
            entries.push((lineno, k, v));
        }

        let mut preset = Preset::Desk;
        if let Some((lineno, _, v)) = entries.iter().find(|e| e.1 == "preset") {
            match v.parse() {
                Ok(p) => preset = p,
                Err(e) => errors.push(format!("line {lineno}: preset: {e}")),
            }
        }
        if let Some(p) = preset_override {
            preset = p;
        }
        let mut cfg = Self::preset(preset);

        for (lineno, key, value) in &entries {
            if let Err(e) = cfg.set(key, value, base_dir) {
                errors.push(format!("line {lineno}: {key}: {e}"));
            }
        }
        if errors.is_empty() {
            if let Err(e) = cfg.check() {
                errors.extend(e);
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }

    fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{v}` is not a valid number"))
        }
        fn opt_f64(v: &str) -> Result<Option<f64>, String> {
            if v == "auto" {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        }
        match key {
            "preset" => {}
            "scenario" => self.scenario = value.parse()?,
            "rounds" => self.rounds = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "eval_batch_size" => self.eval_batch_size = num(value)?,
            "horizon" => self.horizon = num(value)?,
            "init_offset" => self.init_offset = num(value)?,
            "mu" => self.mu = num(value)?,
            "stepsize" => self.stepsize = value.parse()?,
            "stepsize_base" => self.stepsize_base = opt_f64(value)?,
            "beta" => self.beta = opt_f64(value)?,
            "e_hat" => self.e_hat = opt_f64(value)?,
            "algorithm" => {
                self.algorithm = match value {
                    "ogd" => Algorithm::Ogd,
                    "ftrl" => Algorithm::Ftrl,
                    _ => return Err(format!("unknown algorithm `{value}` (expected ogd or ftrl)")),
                }
            }
            "init" => {
                self.init = match value {
                    "zero" => InitChoice::Zero,
                    "reference" => InitChoice::Reference,
                    "random" => InitChoice::Random,
                    _ => return Err(format!("unknown init `{value}` (expected zero, reference or random)")),
                }
            }
            "resamples" => self.resamples = num(value)?,
            "shared_eval_batch" => {
                self.shared_eval_batch = value.parse().map_err(|_| format!("`{value}` is not true or false"))?
            }
            "levels" => {
                self.levels = split_list(value).map(parse_level).collect::<Result<_, _>>()?;
            }
            "seeds" => {
                self.seeds = split_list(value).map(num).collect::<Result<_, _>>()?;
            }
            "expert_file" => {
                self.expert_file = if value.is_empty() {
                    None
                } else {
                    Some(base_dir.join(value))
                }
            }
            "random_features" => self.random_features = num(value)?,
            "feature_seed" => self.feature_seed = num(value)?,
            "delta" => self.delta = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn check(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if self.levels.is_empty() {
            errors.push("levels: at least one bias level is required".into());
        }
        if self.seeds.is_empty() {
            errors.push("seeds: at least one seed is required".into());
        }
        if !(self.delta > 0.0 && self.delta < (-1.0f64).exp()) {
            errors.push(format!("delta must lie in (0, 1/e), got {}", self.delta));
        }
        if self.stepsize == StepsizeKind::Constant && self.stepsize_base.is_none() {
            errors.push("stepsize_base is required for a constant stepsize".into());
        }
        if let Some(path) = &self.expert_file {
            if let Err(e) = ExpertPolicy::load(path) {
                errors.push(format!("expert_file: {e}"));
            }
        }
        if errors.is_empty() {
            for level in &self.levels {
                if let Err(e) = self.run_config(*level, self.seeds[0]).and_then(|c| {
                    c.validate().map_err(|e| e.to_string())
                }) {
                    let msg = e.strip_prefix("invalid parameter: ").unwrap_or(&e).to_string();
                    errors.push(msg);
                    break;
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Run configuration of one grid cell.
    pub fn run_config(&self, level: BiasLevel, seed: u64) -> Result<RunConfig, String> {
        let scenario = match self.scenario {
            ScenarioKind::Imitation => {
                let expert = match &self.expert_file {
                    Some(p) => ExpertPolicy::load(p).map_err(|e| e.to_string())?,
                    None => ExpertPolicy::default(),
                };
                let features = if self.random_features == 0 {
                    FeatureKind::Identity
                } else {
                    FeatureKind::IdentityPlusRandom {
                        k: self.random_features,
                        seed: self.feature_seed,
                    }
                };
                Scenario::Imitation(ImitationSetup {
                    cartpole: CartPoleConfig {
                        horizon: self.horizon,
                        init_offset: self.init_offset,
                        ..CartPoleConfig::default()
                    },
                    expert,
                    features,
                })
            }
            ScenarioKind::SysId => Scenario::SysId(SysIdEnvironment::default_2d()),
            ScenarioKind::Stationary => Scenario::Stationary(StationarySetup::default()),
            ScenarioKind::Synthetic => Scenario::Synthetic(SyntheticSetup::default()),
        };
        let stepsize = match self.stepsize {
            StepsizeKind::AdaGrad => StepsizeChoice::AdaGrad { base: self.stepsize_base },
            StepsizeKind::Constant => StepsizeChoice::Constant(
                self.stepsize_base.ok_or("stepsize_base is required for a constant stepsize")?,
            ),
            StepsizeKind::Theorem1 => StepsizeChoice::Theorem1 {
                beta: self.beta,
                e_hat: self.e_hat,
            },
        };
        Ok(RunConfig {
            rounds: self.rounds,
            batch_size: self.batch_size,
            eval_batch_size: self.eval_batch_size,
            mu: self.mu,
            bias: level,
            stepsize,
            algorithm: self.algorithm,
            scenario,
            seed,
            init: self.init,
            resamples: self.resamples,
            shared_eval_batch: self.shared_eval_batch,
        })
    }

    /// Normalized config text with every key present; parses back to `self`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let lines = [
            ("preset", self.preset.to_string()),
            ("scenario", self.scenario.to_string()),
            ("rounds", self.rounds.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_batch_size", self.eval_batch_size.to_string()),
            ("horizon", self.horizon.to_string()),
            ("init_offset", self.init_offset.to_string()),
            ("mu", self.mu.to_string()),
            ("stepsize", self.stepsize.to_string()),
            ("stepsize_base", opt(self.stepsize_base)),
            ("beta", opt(self.beta)),
            ("e_hat", opt(self.e_hat)),
            (
                "algorithm",
                match self.algorithm {
                    Algorithm::Ogd => "ogd",
                    Algorithm::Ftrl => "ftrl",
                }
                .into(),
            ),
            (
                "init",
                match self.init {
                    InitChoice::Zero => "zero",
                    InitChoice::Reference => "reference",
                    InitChoice::Random => "random",
                }
                .into(),
            ),
            ("resamples", self.resamples.to_string()),
            ("shared_eval_batch", self.shared_eval_batch.to_string()),
            ("levels", self.levels.iter().map(level_text).collect::<Vec<_>>().join(", ")),
            ("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")),
            (
                "expert_file",
                self.expert_file.as_ref().map_or(String::new(), |p| p.display().to_string()),
            ),
            ("random_features", self.random_features.to_string()),
            ("feature_seed", self.feature_seed.to_string()),
            ("delta", self.delta.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, Vec<String>> {
        ExperimentConfig::parse(text, None, Path::new("."))
    }

    #[test]
    fn empty_file_gives_desk_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::preset(Preset::Desk));
        assert_eq!((cfg.rounds, cfg.batch_size, cfg.eval_batch_size, cfg.horizon), (300, 200, 1000, 200));
        assert_eq!(cfg.mu, 0.05);
    }

    #[test]
    fn paper_preset_values() {
        let cfg = parse("preset = paper\n").unwrap();
        assert_eq!((cfg.rounds, cfg.batch_size, cfg.eval_batch_size, cfg.horizon), (500, 1000, 5000, 1000));
        assert_eq!(cfg.stepsize, StepsizeKind::AdaGrad);
        assert_eq!(cfg.stepsize_base, Some(0.01));
        let over = ExperimentConfig::parse("preset = paper\n", Some(Preset::Desk), Path::new(".")).unwrap();
        assert_eq!(over.rounds, 300);
        // explicit keys win over the preset
        assert_eq!(parse("preset = paper\nrounds = 7\n").unwrap().rounds, 7);
    }

    #[test]
    fn errors_carry_line_context() {
        let err = parse("rounds = 10\n\nbogus = 3\nmu = x\n").unwrap_err();
        assert_eq!(err.len(), 2);
        assert!(err[0].starts_with("line 3: bogus"), "{err:?}");
        assert!(err[1].starts_with("line 4: mu"), "{err:?}");
        let err = parse("mu = -1\n").unwrap_err();
        assert_eq!(err, vec!["mu must be positive".to_string()]);
        assert!(parse("rounds = 1\nrounds = 2\n").unwrap_err()[0].contains("duplicate"));
        assert!(parse("just words\n").is_err());
        assert!(parse("levels = 1.5\n").is_err());
        assert!(parse("seeds = \n").is_err());
        assert!(parse("stepsize = constant\n").is_err());
    }

    #[test]
    fn lists_comments_and_roundtrip() {
        let cfg = parse("# grid\nlevels = 0.5, unbiased, radius:2 # trailing\nseeds = 4,5\nalgorithm = ftrl\n").unwrap();
        assert_eq!(
            cfg.levels,
            vec![BiasLevel::Fraction(0.5), BiasLevel::Unbiased, BiasLevel::Radius(2.0)]
        );
        assert_eq!(cfg.seeds, vec![4, 5]);
        let back = parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        let paper = parse("preset = paper\nstepsize = theorem1\nbeta = 0.5\n").unwrap();
        assert_eq!(parse(&paper.to_text()).unwrap(), paper);
    }

    #[test]
    fn cell_configs_validate() {
        let cfg = parse("scenario = sysid\nlevels = unbiased\n").unwrap();
        let rc = cfg.run_config(BiasLevel::Unbiased, 3).unwrap();
        assert_eq!(rc.seed, 3);
        assert!(rc.validate().is_ok());
        assert_eq!(rc.scenario.name(), "sysid");
    }
}
