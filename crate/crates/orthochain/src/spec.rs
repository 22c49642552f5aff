//! Experiment descriptions and their JSON form.
//!
//! A [`ConfigFile`] is the loose, all-optional shape shared by config files
//! and command-line flags. [`ExperimentSpec::from_config`] fills the gaps
//! with per-kind defaults and validates the result. [`ExperimentSpec::to_config`]
//! goes the other way and is what the CLI echoes, so an echoed line is itself
//! a valid config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use orthochain_core::chain::{Activation, ChainConfig, ChainKind, InputKind, WeightSampling};
use orthochain_core::init::InitKind;
use orthochain_core::numerics::mix_seed;
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};

/// Correlation parameter used when a correlated input is requested without one.
pub const DEFAULT_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Chain,
    DepthSweep,
    WidthSweep,
    CosineContrast,
    ConjectureSweep,
    TheoryBattery,
    InitDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Chain,
        ExperimentKind::DepthSweep,
        ExperimentKind::WidthSweep,
        ExperimentKind::CosineContrast,
        ExperimentKind::ConjectureSweep,
        ExperimentKind::TheoryBattery,
        ExperimentKind::InitDemo,
    ];

    /// Name used in CSV rows and config files.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Chain => "chain",
            ExperimentKind::DepthSweep => "depth_sweep",
            ExperimentKind::WidthSweep => "width_sweep",
            ExperimentKind::CosineContrast => "cosine_contrast",
            ExperimentKind::ConjectureSweep => "conjecture_sweep",
            ExperimentKind::TheoryBattery => "theory_battery",
            ExperimentKind::InitDemo => "init_demo",
        }
    }

    /// Name of the CLI subcommand.
    pub fn command(self) -> &'static str {
        match self {
            ExperimentKind::Chain => "chain",
            ExperimentKind::DepthSweep => "depth-sweep",
            ExperimentKind::WidthSweep => "width-sweep",
            ExperimentKind::CosineContrast => "cosine",
            ExperimentKind::ConjectureSweep => "conjecture",
            ExperimentKind::TheoryBattery => "theory-check",
            ExperimentKind::InitDemo => "init-demo",
        }
    }

    /// Stable integer fed into seed derivation.
    pub(crate) fn code(self) -> u64 {
        ExperimentKind::ALL.iter().position(|&k| k == self).unwrap() as u64
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.command() == s)
            .ok_or_else(|| ExperimentError::spec(format!("unknown experiment kind '{s}'")))
    }
}

/// Where replicate seeds come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedPlan {
    /// `count` replicates derived from the master seed.
    Count(usize),
    /// One replicate per listed seed.
    List(Vec<u64>),
}

impl SeedPlan {
    pub fn replicates(&self) -> usize {
        match self {
            SeedPlan::Count(c) => *c,
            SeedPlan::List(l) => l.len(),
        }
    }
}

/// A fully resolved, validated experiment.
///
/// `n` and `d` are lists. Sweeps iterate over `d`; the theory battery pairs
/// `n` with `d` elementwise (or broadcasts a single `n`); the other kinds take
/// exactly one `n`. An empty `n` is only allowed for `init_demo`, where it
/// means `n = 2d` for every width.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub depth: usize,
    pub activations: Vec<Activation>,
    pub chain_kind: ChainKind,
    pub sampling: WeightSampling,
    pub input: InputKind,
    pub init: InitKind,
    pub seeds: SeedPlan,
    pub master_seed: u64,
    pub burn_in: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Default parameters of each experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentSpec {
            kind,
            n: vec![4],
            d: vec![256],
            depth: 100,
            activations: vec![Activation::Linear],
            chain_kind: ChainKind::Bn,
            sampling: WeightSampling::Factored,
            input: InputKind::Gaussian,
            init: InitKind::IterativeOrthogonal,
            seeds: SeedPlan::Count(1),
            master_seed: 1,
            burn_in: 50,
            out: None,
        };
        match kind {
            ExperimentKind::Chain => base,
            ExperimentKind::WidthSweep => {
                ExperimentSpec { d: vec![32, 64, 128, 256, 512, 1024], depth: 500, seeds: SeedPlan::Count(20), ..base }
            }
            ExperimentKind::DepthSweep => ExperimentSpec {
                d: vec![1024],
                depth: 500,
                input: InputKind::Correlated { eps: DEFAULT_EPS },
                seeds: SeedPlan::Count(20),
                ..base
            },
            ExperimentKind::CosineContrast => ExperimentSpec {
                n: vec![2],
                d: vec![32],
                depth: 50,
                input: InputKind::Correlated { eps: DEFAULT_EPS },
                seeds: SeedPlan::Count(20),
                ..base
            },
            ExperimentKind::ConjectureSweep => ExperimentSpec {
                d: vec![64, 128, 256, 512],
                depth: 1050,
                activations: vec![Activation::Relu, Activation::Tanh, Activation::Sin, Activation::Sigmoid],
                seeds: SeedPlan::Count(10),
                ..base
            },
            ExperimentKind::TheoryBattery => ExperimentSpec {
                n: vec![2, 4, 8],
                d: vec![64, 256, 1024],
                depth: 201,
                seeds: SeedPlan::Count(20),
                ..base
            },
            ExperimentKind::InitDemo => {
                ExperimentSpec { n: Vec::new(), d: vec![32], depth: 10, seeds: SeedPlan::Count(5), ..base }
            }
        }
    }

    /// Defaults of `kind` overridden by whatever `config` sets.
    pub fn from_config(kind: ExperimentKind, config: &ConfigFile) -> Result<Self> {
        if let Some(k) = &config.kind {
            let named: ExperimentKind = k.parse()?;
            if named != kind {
                return Err(ExperimentError::spec(format!(
                    "config describes a {named} experiment but {kind} was requested"
                )));
            }
        }
        let mut spec = ExperimentSpec::defaults(kind);
        if let Some(n) = &config.n {
            spec.n = n.to_vec();
        }
        match (config.d, &config.d_list) {
            (Some(_), Some(_)) => return Err(ExperimentError::spec("give either d or d_list, not both")),
            (Some(d), None) => spec.d = vec![d],
            (None, Some(list)) => spec.d = list.clone(),
            (None, None) => {}
        }
        if let Some(depth) = config.depth {
            spec.depth = depth;
        }
        if let Some(act) = &config.activation {
            spec.activations = act
                .to_vec()
                .iter()
                .map(|a| a.parse::<Activation>().map_err(|e| ExperimentError::spec(e.to_string())))
                .collect::<Result<_>>()?;
        }
        if let Some(c) = &config.chain_kind {
            spec.chain_kind = c.parse().map_err(|e: orthochain_core::Error| ExperimentError::spec(e.to_string()))?;
        }
        if let Some(s) = &config.sampling {
            spec.sampling = s.parse().map_err(|e: orthochain_core::Error| ExperimentError::spec(e.to_string()))?;
        }
        if let Some(i) = &config.input {
            spec.input = parse_input(i, config.eps)?;
        } else if let Some(eps) = config.eps {
            match spec.input {
                InputKind::Correlated { .. } => spec.input = InputKind::Correlated { eps },
                _ => return Err(ExperimentError::spec("eps only applies to the correlated input")),
            }
        }
        if let Some(i) = &config.init {
            spec.init = parse_init(i)?;
        }
        match (config.seeds.clone(), config.n_seeds) {
            (Some(_), Some(_)) => return Err(ExperimentError::spec("give either seeds or n_seeds, not both")),
            (Some(SeedsField::Count(c)), None) | (None, Some(c)) => spec.seeds = SeedPlan::Count(c),
            (Some(SeedsField::List(l)), None) => spec.seeds = SeedPlan::List(l),
            (None, None) => {}
        }
        if let Some(m) = config.master_seed {
            spec.master_seed = m;
        }
        if let Some(b) = config.burn_in {
            spec.burn_in = b;
        }
        if let Some(out) = &config.out {
            spec.out = Some(out.clone());
        }
        spec.validate()?;
        Ok(spec)
    }

    /// The config that reproduces this spec exactly.
    pub fn to_config(&self) -> ConfigFile {
        let (input, eps) = match self.input {
            InputKind::Correlated { eps } => ("correlated".to_string(), Some(eps)),
            other => (other.name().to_string(), None),
        };
        let names: Vec<String> = self.activations.iter().map(|a| a.name().to_string()).collect();
        ConfigFile {
            kind: Some(self.kind.name().to_string()),
            n: (!self.n.is_empty()).then(|| OneOrMany::Many(self.n.clone())),
            d: None,
            d_list: Some(self.d.clone()),
            depth: Some(self.depth),
            activation: Some(if names.len() == 1 { OneOrMany::One(names[0].clone()) } else { OneOrMany::Many(names) }),
            chain_kind: Some(self.chain_kind.name().to_string()),
            sampling: Some(self.sampling.name().to_string()),
            input: Some(input),
            eps,
            init: Some(init_name(self.init).to_string()),
            seeds: match &self.seeds {
                SeedPlan::Count(c) => Some(SeedsField::Count(*c)),
                SeedPlan::List(l) => Some(SeedsField::List(l.clone())),
            },
            n_seeds: None,
            master_seed: Some(self.master_seed),
            burn_in: Some(self.burn_in),
            out: self.out.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Spec(msg));
        if self.seeds.replicates() == 0 {
            return bad("at least one seed is required".into());
        }
        if self.d.is_empty() {
            return bad("at least one width is required".into());
        }
        if self.d.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("widths must be strictly increasing, got {:?}", self.d));
        }
        if self.d.contains(&0) || self.n.contains(&0) {
            return bad("widths and batch sizes must be positive".into());
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.activations.is_empty() {
            return bad("at least one activation is required".into());
        }
        if let InputKind::Correlated { eps } = self.input {
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("eps must be positive and finite, got {eps}"));
            }
        }
        let single_activation = || {
            if self.activations.len() != 1 {
                return bad(format!("{} takes a single activation", self.kind));
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::TheoryBattery => {
                if self.n.len() != 1 && self.n.len() != self.d.len() {
                    return bad("the battery pairs n with d: give one n or as many as widths".into());
                }
                if self.pairs().iter().any(|&(n, d)| n > d) {
                    return bad("every battery configuration needs n <= d".into());
                }
                if self.depth < 11 {
                    return bad("the battery needs chains of at least 11 layers".into());
                }
                single_activation()?;
            }
            ExperimentKind::InitDemo => {
                if self.n.len() > 1 {
                    return bad("init_demo takes a single n".into());
                }
            }
            _ => {
                if self.n.len() != 1 {
                    return bad(format!("{} takes a single n", self.kind));
                }
                if let Some(&d) = self.d.iter().find(|&&d| d < self.n[0]) {
                    return bad(format!("width {d} is smaller than n = {}", self.n[0]));
                }
            }
        }
        match self.kind {
            ExperimentKind::Chain => {
                if self.d.len() != 1 {
                    return bad("chain takes a single width".into());
                }
                single_activation()?;
            }
            ExperimentKind::WidthSweep => {
                if self.d.len() < 2 {
                    return bad("a width sweep needs at least 2 widths to fit a slope".into());
                }
                single_activation()?;
            }
            ExperimentKind::DepthSweep => {
                if self.depth < 50 {
                    return bad(format!("a depth sweep needs depth >= 50, got {}", self.depth));
                }
                single_activation()?;
            }
            ExperimentKind::CosineContrast => {
                if self.n != [2] {
                    return bad("the cosine contrast compares exactly n = 2 samples".into());
                }
                single_activation()?;
            }
            ExperimentKind::ConjectureSweep => {
                if let Some(a) = self.activations.iter().find(|&&a| a == Activation::Linear) {
                    return bad(format!("the conjecture sweep needs a nonlinear activation, got {a}"));
                }
                let needed = self.burn_in + 1000;
                if self.depth < needed {
                    return bad(format!(
                        "the conjecture sweep needs depth >= burn_in + 1000 = {needed}, got {}",
                        self.depth
                    ));
                }
            }
            ExperimentKind::TheoryBattery | ExperimentKind::InitDemo => {}
        }
        Ok(())
    }

    /// Number of replicates per sweep point.
    pub fn replicates(&self) -> usize {
        self.seeds.replicates()
    }

    /// Seed of one replicate at one parameter tuple.
    pub fn run_seed(&self, params: &[u64], replicate: usize) -> u64 {
        let mut parts = Vec::with_capacity(params.len() + 2);
        parts.push(self.kind.code());
        parts.extend_from_slice(params);
        match &self.seeds {
            SeedPlan::Count(_) => {
                parts.push(replicate as u64);
                mix_seed(self.master_seed, &parts)
            }
            SeedPlan::List(list) => mix_seed(list[replicate], &parts),
        }
    }

    /// Seed of an auxiliary stream such as a bootstrap.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        mix_seed(self.master_seed, &[self.kind.code(), u64::MAX, stream])
    }

    /// The single batch size of kinds that take one.
    pub fn batch(&self) -> usize {
        self.n[0]
    }

    /// `(n, d)` configurations of the theory battery.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        if self.n.len() == 1 {
            self.d.iter().map(|&d| (self.n[0], d)).collect()
        } else {
            self.n.iter().copied().zip(self.d.iter().copied()).collect()
        }
    }

    /// Chain parameters at one sweep point.
    pub fn chain_config(&self, n: usize, d: usize, activation: Activation, seed: u64) -> ChainConfig {
        ChainConfig::new(d, n, self.depth)
            .with_activation(activation)
            .with_kind(self.chain_kind)
            .with_sampling(self.sampling)
            .with_seed(seed)
    }
}

fn parse_input(name: &str, eps: Option<f64>) -> Result<InputKind> {
    let kind = match name {
        "gaussian" => InputKind::Gaussian,
        "orthogonal" => InputKind::Orthogonal,
        "correlated" => InputKind::Correlated { eps: eps.unwrap_or(DEFAULT_EPS) },
        other => return Err(ExperimentError::spec(format!("unknown input kind '{other}'"))),
    };
    if eps.is_some() && !matches!(kind, InputKind::Correlated { .. }) {
        return Err(ExperimentError::spec("eps only applies to the correlated input"));
    }
    Ok(kind)
}

fn parse_init(name: &str) -> Result<InitKind> {
    match name {
        "orthogonal" | "iterative-orthogonal" | "iterative_orthogonal" => Ok(InitKind::IterativeOrthogonal),
        "xavier" => Ok(InitKind::Xavier),
        "gaussian" => Ok(InitKind::GaussianVarianceOverD),
        other => Err(ExperimentError::spec(format!("unknown initializer '{other}'"))),
    }
}

pub fn init_name(kind: InitKind) -> &'static str {
    match kind {
        InitKind::IterativeOrthogonal => "orthogonal",
        InitKind::Xavier => "xavier",
        InitKind::GaussianVarianceOverD => "gaussian",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// `seeds` is either a replicate count or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedsField {
    Count(usize),
    List(Vec<u64>),
}

/// Every setting an experiment accepts, all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<OneOrMany<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<OneOrMany<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedsField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config { path: "<inline>".into(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config_err = |reason: String| ExperimentError::Config { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))
    }

    /// `self` with every field that `over` sets replaced. Alternative
    /// spellings of the same setting (`d` and `d_list`, `seeds` and
    /// `n_seeds`) are replaced together.
    pub fn merged(mut self, over: ConfigFile) -> ConfigFile {
        if over.d.is_some() || over.d_list.is_some() {
            self.d = over.d;
            self.d_list = over.d_list;
        }
        if over.seeds.is_some() || over.n_seeds.is_some() {
            self.seeds = over.seeds;
            self.n_seeds = over.n_seeds;
        }
        if over.input.is_some() {
            self.eps = None;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if over.$field.is_some() {
                    self.$field = over.$field;
                }
            )*};
        }
        take!(kind, n, depth, activation, chain_kind, sampling, input, eps, init, master_seed, burn_in, out);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_kind() {
        for kind in ExperimentKind::ALL {
            ExperimentSpec::defaults(kind).validate().unwrap();
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
            assert_eq!(kind.command().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn config_round_trips_through_echo() {
        let text = r#"{"kind": "width_sweep", "n": 4, "d_list": [16, 32], "depth": 60,
                       "seeds": [7, 9], "activation": "tanh", "input": "correlated", "eps": 0.05}"#;
        let spec =
            ExperimentSpec::from_config(ExperimentKind::WidthSweep, &ConfigFile::from_json(text).unwrap()).unwrap();
        assert_eq!(spec.seeds, SeedPlan::List(vec![7, 9]));
        assert_eq!(spec.input, InputKind::Correlated { eps: 0.05 });
        let echoed = serde_json::to_string(&spec.to_config()).unwrap();
        let again =
            ExperimentSpec::from_config(ExperimentKind::WidthSweep, &ConfigFile::from_json(&echoed).unwrap()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn rejects_bad_specs() {
        let check = |kind, text: &str| ExperimentSpec::from_config(kind, &ConfigFile::from_json(text).unwrap());
        assert!(check(ExperimentKind::WidthSweep, r#"{"d_list": [64]}"#).is_err());
        assert!(check(ExperimentKind::WidthSweep, r#"{"d_list": [64, 32]}"#).is_err());
        assert!(check(ExperimentKind::Chain, r#"{"seeds": 0}"#).is_err());
        assert!(check(ExperimentKind::Chain, r#"{"seeds": []}"#).is_err());
        assert!(check(ExperimentKind::DepthSweep, r#"{"depth": 49}"#).is_err());
        assert!(check(ExperimentKind::CosineContrast, r#"{"n": 3}"#).is_err());
        assert!(check(ExperimentKind::ConjectureSweep, r#"{"depth": 1049}"#).is_err());
        assert!(check(ExperimentKind::Chain, r#"{"d": 8, "d_list": [8]}"#).is_err());
        assert!(check(ExperimentKind::Chain, r#"{"kind": "width_sweep"}"#).is_err());
        assert!(ConfigFile::from_json(r#"{"widths": [1]}"#).is_err());
    }

    #[test]
    fn merge_replaces_alternative_spellings_together() {
        let base = ConfigFile::from_json(r#"{"d": 64, "n_seeds": 3, "depth": 10}"#).unwrap();
        let over = ConfigFile::from_json(r#"{"d_list": [8, 16], "seeds": [1]}"#).unwrap();
        let m = base.merged(over);
        assert_eq!((m.d, m.d_list.clone()), (None, Some(vec![8, 16])));
        assert_eq!((m.n_seeds, m.seeds.clone()), (None, Some(SeedsField::List(vec![1]))));
        assert_eq!(m.depth, Some(10));
    }

    #[test]
    fn run_seeds_depend_on_every_part() {
        let spec = ExperimentSpec::defaults(ExperimentKind::WidthSweep);
        let a = spec.run_seed(&[4, 32], 0);
        assert_ne!(a, spec.run_seed(&[4, 64], 0));
        assert_ne!(a, spec.run_seed(&[4, 32], 1));
        let other = ExperimentSpec { master_seed: 2, ..spec.clone() };
        assert_ne!(a, other.run_seed(&[4, 32], 0));
        let listed = ExperimentSpec { seeds: SeedPlan::List(vec![5, 5]), ..spec };
        assert_eq!(listed.run_seed(&[4, 32], 0), listed.run_seed(&[4, 32], 1));
    }

    #[test]
    fn battery_pairs_broadcast_a_single_n() {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::TheoryBattery);
        assert_eq!(spec.pairs(), vec![(2, 64), (4, 256), (8, 1024)]);
        spec.n = vec![4];
        assert_eq!(spec.pairs(), vec![(4, 64), (4, 256), (4, 1024)]);
    }
}
