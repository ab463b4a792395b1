//! Run configuration and the catalog of shipped presets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::array::{Affine, ArrayModel, Coupling, Family, Scaling};
use crate::conditions::{TestFunctionFamily, Tolerance};
use crate::diagnostics::{Component, Functional};
use crate::error::{Error, Result};
use crate::limit::{
    identical_power_shift, Axis, AxisPiece, CharacteristicsSpec, Density, JointJumpMeasure, LimitCharacteristics, MaxCoupling, Side,
    TailFunction,
};
use crate::marginal::Marginal;
use crate::quad::QuadConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[serde(alias = "verify-conditions")]
    Verify,
    Sweep,
    ProbeJ,
    #[serde(alias = "risk-demo")]
    Risk,
    Examples,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::ProbeJ => "probe-j",
            Command::Risk => "risk",
            Command::Examples => "examples",
        }
    }
}

fn n_default() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub n_list: Vec<f64>,
    pub samples_per_n: usize,
    pub tolerance: Tolerance,
    pub u_grid: Vec<f64>,
    pub v_grid: Vec<f64>,
    pub w_grid: Vec<f64>,
    pub variance_levels: Vec<f64>,
    pub family: TestFunctionFamily,
    /// Any of `a`, `b`, `c`, `d`.
    pub conditions: Vec<String>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            n_list: n_default(),
            samples_per_n: 20_000,
            tolerance: Tolerance::default(),
            u_grid: vec![0.5, 1.0, 2.0],
            v_grid: vec![0.5, 1.0],
            w_grid: vec![0.5, 1.0],
            variance_levels: vec![0.5, 0.25, 0.1],
            family: TestFunctionFamily::default(),
            conditions: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub n_list: Vec<f64>,
    pub replicates: usize,
    pub threshold: f64,
    pub limit_horizon: f64,
    pub functionals: Vec<Functional>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            n_list: n_default(),
            replicates: 2000,
            threshold: 0.03,
            limit_horizon: 2.0,
            functionals: vec![Functional::Stopped { component: Component::Xi, t: 1.0 }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBlock {
    pub n_list: Vec<f64>,
    pub c_list: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub replicates: usize,
    pub threshold: f64,
    /// Replicates of the stopping-path inclusion check (0 skips it).
    pub inclusion_replicates: usize,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        Self {
            n_list: n_default(),
            c_list: vec![0.01, 0.05, 0.1],
            lo: 0.5,
            hi: 2.0,
            delta: 0.1,
            replicates: 1000,
            threshold: 0.05,
            inclusion_replicates: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskBlock {
    /// Risk-family model; defaults to the run model.
    pub model: Option<ArrayModel>,
    pub n: f64,
    pub horizon: f64,
    pub t_step: f64,
    pub replicates: usize,
    pub identity_tolerance: f64,
}

impl Default for RiskBlock {
    fn default() -> Self {
        Self { model: None, n: 100.0, horizon: 2.0, t_step: 0.05, replicates: 1000, identity_tolerance: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExamplesBlock {
    /// Example-wiring model; defaults to the run model.
    pub model: Option<ArrayModel>,
    pub n: f64,
    pub horizon: f64,
    pub t_step: f64,
    pub replicates: usize,
}

impl Default for ExamplesBlock {
    fn default() -> Self {
        Self { model: None, n: 100.0, horizon: 2.0, t_step: 0.1, replicates: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Experiment definition, read from TOML (or JSON).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; mandatory, possibly supplied on the command line.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub commands: Vec<Command>,
    pub preset: Option<PresetRef>,
    pub model: Option<ArrayModel>,
    pub characteristics: Option<CharacteristicsSpec>,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub probe_j: ProbeBlock,
    #[serde(default)]
    pub risk: RiskBlock,
    #[serde(default)]
    pub examples: ExamplesBlock,
}

/// Configuration after presets are expanded and everything is validated.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub seed: u64,
    pub commands: Vec<Command>,
    pub model: ArrayModel,
    pub chars: LimitCharacteristics,
    pub config: RunConfig,
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl RunConfig {
    /// TOML unless the text parses as a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON config: {e}")));
        }
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Validates every block the commands touch; no sampling happens here.
    pub fn resolve(&self) -> Result<Resolved> {
        let seed = match self.seed {
            Some(s) => s,
            None => return cfg_err("root seed is mandatory (set `seed` or pass --seed)"),
        };
        let (model, chars) = match (&self.preset, &self.model, &self.characteristics) {
            (Some(p), None, None) => build_preset(&p.name, &p.params)?,
            (Some(p), m, c) => {
                let (pm, pc) = build_preset(&p.name, &p.params)?;
                let chars = match c {
                    Some(spec) => characteristics(spec)?,
                    None => pc,
                };
                (m.clone().unwrap_or(pm), chars)
            }
            (None, Some(m), Some(c)) => (m.clone(), characteristics(c)?),
            _ => return cfg_err("give either a preset or both `model` and `characteristics`"),
        };
        model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        let commands = if self.commands.is_empty() { vec![Command::Verify, Command::Sweep] } else { self.commands.clone() };
        for c in &commands {
            self.check_block(*c, &model, &chars)?;
        }
        Ok(Resolved { seed, commands, model, chars, config: self.clone() })
    }

    fn check_block(&self, c: Command, model: &ArrayModel, chars: &LimitCharacteristics) -> Result<()> {
        let n_ok = |v: &[f64]| !v.is_empty() && v.iter().all(|&n| n >= 1.0 && n.is_finite());
        match c {
            Command::Verify => {
                let b = &self.verify;
                if !n_ok(&b.n_list) || b.samples_per_n == 0 {
                    return cfg_err("verify: need n_list entries ≥ 1 and samples_per_n > 0");
                }
                for k in &b.conditions {
                    if !["a", "b", "c", "d"].contains(&k.as_str()) {
                        return cfg_err(format!("verify: unknown condition {k:?}"));
                    }
                }
                b.family.members().map_err(|e| Error::Config(format!("verify: {e}")))?;
                for &u in &b.u_grid {
                    if !(u > chars.u_pi()) {
                        return cfg_err(format!("verify: u = {u} must exceed u_π = {}", chars.u_pi()));
                    }
                }
            }
            Command::Sweep => {
                let b = &self.sweep;
                if !n_ok(&b.n_list) || b.replicates == 0 || b.functionals.is_empty() {
                    return cfg_err("sweep: need n_list, replicates and at least one functional");
                }
                if !(b.threshold > 0.0 && b.limit_horizon > 0.0) {
                    return cfg_err("sweep: threshold and limit_horizon must be positive");
                }
            }
            Command::ProbeJ => {
                let b = &self.probe_j;
                if !n_ok(&b.n_list) || b.replicates == 0 || b.c_list.is_empty() || b.c_list.iter().any(|&c| !(c > 0.0)) {
                    return cfg_err("probe-j: need n_list, replicates and positive c values");
                }
                if !(b.lo > 0.0 && b.lo < b.hi && b.delta > 0.0) {
                    return cfg_err("probe-j: need 0 < lo < hi and delta > 0");
                }
            }
            Command::Risk => {
                let b = &self.risk;
                let m = b.model.as_ref().unwrap_or(model);
                m.validate().map_err(|e| Error::Config(format!("risk model: {e}")))?;
                if m.premium_rate(b.n).is_none() {
                    return cfg_err("risk: model is not a risk family");
                }
                if !(b.n >= 1.0 && b.horizon > 0.0 && b.t_step > 0.0 && b.replicates > 0) {
                    return cfg_err("risk: need n ≥ 1, positive horizon, t_step and replicates");
                }
            }
            Command::Examples => {
                let b = &self.examples;
                let m = b.model.as_ref().unwrap_or(model);
                m.validate().map_err(|e| Error::Config(format!("examples model: {e}")))?;
                if crate::applications::ExampleKind::of(&m.family).is_none() {
                    return cfg_err("examples: model is not one of renewal, insurance_pair, earthquake");
                }
                if !(b.n >= 1.0 && b.horizon > 0.0 && b.t_step > 0.0 && b.replicates > 0) {
                    return cfg_err("examples: need n ≥ 1, positive horizon, t_step and replicates");
                }
            }
        }
        Ok(())
    }
}

fn characteristics(spec: &CharacteristicsSpec) -> Result<LimitCharacteristics> {
    LimitCharacteristics::new(spec.tail.clone(), spec.jumps.clone(), spec.a, spec.b2, spec.c)
        .map_err(|e| Error::Config(format!("characteristics: {e}")))
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    pub default: f64,
    pub constraint: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSchema>,
}

const fn p(name: &'static str, default: f64, constraint: &'static str) -> ParamSchema {
    ParamSchema { name, default, constraint }
}

pub fn presets() -> Vec<PresetInfo> {
    vec![
        PresetInfo {
            name: "pareto_frechet",
            description: "independent components: Pareto max scaled by n^(1/alpha) (Frechet limit), Gaussian sum, exponential renewal",
            params: vec![p("alpha", 1.5, "> 0"), p("scale", 1.0, "> 0")],
        },
        PresetInfo {
            name: "gumbel",
            description: "independent components: exponential max shifted by scale*ln n (Gumbel limit), Gaussian sum, exponential renewal",
            params: vec![p("location", 0.0, "finite"), p("scale", 1.0, "> 0")],
        },
        PresetInfo {
            name: "example1_renewal",
            description: "renewal self-wiring xi = gamma = kappa = X, X ~ Exp(rate); max shifted by ln n, sums scaled by n",
            params: vec![p("rate", 1.0, "> 0")],
        },
        PresetInfo {
            name: "example2_insurance",
            description: "insurance pair: kappa ~ Exp(rate) interarrivals, xi = gamma ~ Pareto(alpha) claims; max scaled by n^(1/alpha), sums by n",
            params: vec![p("rate", 1.0, "> 0"), p("alpha", 2.5, "> 1")],
        },
        PresetInfo {
            name: "example3_earthquake",
            description: "earthquake triple: kappa ~ Exp(rate), magnitudes Exp(1) shifted by ln n, independent Pareto(alpha) losses scaled by n",
            params: vec![p("rate", 1.0, "> 0"), p("alpha", 2.5, "> 1")],
        },
        PresetInfo {
            name: "risk",
            description: "risk reserve family: kappa ~ Exp(rate), claims ~ Pareto(alpha), xi = premium*kappa, gamma = premium*kappa - claim, all scaled by n",
            params: vec![p("premium", 2.0, ">= 0"), p("rate", 1.0, "> 0"), p("alpha", 2.5, "> 1")],
        },
        PresetInfo {
            name: "independence",
            description: "product structure: Pareto(alpha) max, sparse Exp(1) sum jumps at rate jump_rate, exponential renewal",
            params: vec![p("alpha", 1.5, "> 0"), p("jump_rate", 1.0, "> 0")],
        },
        PresetInfo {
            name: "identical",
            description: "identical components xi = gamma = (Y - mean)/n^(1/alpha), Y ~ Pareto(alpha), exponential renewal",
            params: vec![p("alpha", 1.5, "in (1, 2)")],
        },
    ]
}

fn param(info: &PresetInfo, given: &BTreeMap<String, f64>, name: &str) -> f64 {
    given.get(name).copied().unwrap_or_else(|| info.params.iter().find(|s| s.name == name).map_or(f64::NAN, |s| s.default))
}

fn by_n(exponent: f64) -> Affine {
    Affine::divide_by_n(exponent)
}

fn chars(tail: TailFunction, jumps: JointJumpMeasure, a: f64, b2: f64, c: f64) -> Result<LimitCharacteristics> {
    LimitCharacteristics::new(tail, jumps, a, b2, c)
}

/// Model and limit characteristics of a preset.
pub fn build_preset(name: &str, given: &BTreeMap<String, f64>) -> Result<(ArrayModel, LimitCharacteristics)> {
    let all = presets();
    let Some(info) = all.iter().find(|p| p.name == name) else {
        return cfg_err(format!("unknown preset {name:?}"));
    };
    for k in given.keys() {
        if !info.params.iter().any(|s| s.name == k) {
            return cfg_err(format!("preset {name}: unknown parameter {k:?}"));
        }
    }
    let get = |k: &str| param(info, given, k);
    let bad = |msg: &str| Error::Config(format!("preset {name}: {msg}"));
    let gauss = Marginal::Normal { mean: 0.0, sd: 1.0 };
    let exp1 = Marginal::Exponential { rate: 1.0 };
    let out = match name {
        "pareto_frechet" => {
            let (alpha, scale) = (get("alpha"), get("scale"));
            if !(alpha > 0.0 && scale > 0.0) {
                return Err(bad("need alpha > 0 and scale > 0"));
            }
            let model = ArrayModel::new(
                Family::Independent { xi: Marginal::Pareto { alpha, scale }, gamma: gauss, kappa: exp1 },
                Scaling { xi: by_n(1.0 / alpha), gamma: by_n(0.5), kappa: by_n(1.0) },
            );
            (model, chars(TailFunction::Frechet { alpha, scale }, JointJumpMeasure::empty(), 0.0, 1.0, 1.0)?)
        }
        "gumbel" => {
            let (location, scale) = (get("location"), get("scale"));
            if !(location.is_finite() && scale > 0.0) {
                return Err(bad("need finite location and scale > 0"));
            }
            let xi_scaling = Affine { center: -location, log_shift: scale, ..Affine::default() };
            let model = ArrayModel::new(
                Family::Independent { xi: Marginal::Exponential { rate: 1.0 / scale }, gamma: gauss, kappa: exp1 },
                Scaling { xi: xi_scaling, gamma: by_n(0.5), kappa: by_n(1.0) },
            );
            (model, chars(TailFunction::Gumbel { location, scale }, JointJumpMeasure::empty(), 0.0, 1.0, 1.0)?)
        }
        "example1_renewal" => {
            let rate = get("rate");
            if !(rate > 0.0) {
                return Err(bad("need rate > 0"));
            }
            let model = ArrayModel::new(
                Family::Renewal { interarrival: Marginal::Exponential { rate } },
                Scaling { xi: Affine { log_shift: 1.0 / rate, ..Affine::default() }, gamma: by_n(1.0), kappa: by_n(1.0) },
            );
            let tail = TailFunction::Gumbel { location: 0.0, scale: 1.0 / rate };
            (model, chars(tail, JointJumpMeasure::empty(), 1.0 / rate, 0.0, 1.0 / rate)?)
        }
        "example2_insurance" => {
            let (rate, alpha) = (get("rate"), get("alpha"));
            if !(rate > 0.0 && alpha > 1.0) {
                return Err(bad("need rate > 0 and alpha > 1"));
            }
            let model = ArrayModel::new(
                Family::InsurancePair { interarrival: Marginal::Exponential { rate }, claim: Marginal::Pareto { alpha, scale: 1.0 } },
                Scaling { xi: by_n(1.0 / alpha), gamma: by_n(1.0), kappa: by_n(1.0) },
            );
            let tail = TailFunction::Frechet { alpha, scale: 1.0 };
            (model, chars(tail, JointJumpMeasure::empty(), alpha / (alpha - 1.0), 0.0, 1.0 / rate)?)
        }
        "example3_earthquake" => {
            let (rate, alpha) = (get("rate"), get("alpha"));
            if !(rate > 0.0 && alpha > 1.0) {
                return Err(bad("need rate > 0 and alpha > 1"));
            }
            let model = ArrayModel::new(
                Family::Earthquake {
                    interarrival: Marginal::Exponential { rate },
                    magnitude: exp1,
                    loss: Marginal::Pareto { alpha, scale: 1.0 },
                    coupling: Coupling::Independent,
                },
                Scaling { xi: Affine { log_shift: 1.0, ..Affine::default() }, gamma: by_n(1.0), kappa: by_n(1.0) },
            );
            let tail = TailFunction::Gumbel { location: 0.0, scale: 1.0 };
            (model, chars(tail, JointJumpMeasure::empty(), alpha / (alpha - 1.0), 0.0, 1.0 / rate)?)
        }
        "risk" => {
            let (premium, rate, alpha) = (get("premium"), get("rate"), get("alpha"));
            if !(premium >= 0.0 && rate > 0.0 && alpha > 1.0) {
                return Err(bad("need premium ≥ 0, rate > 0 and alpha > 1"));
            }
            let model = ArrayModel::new(
                Family::Risk {
                    interarrival: Marginal::Exponential { rate },
                    claim: Marginal::Pareto { alpha, scale: 1.0 },
                    premium,
                    premium_exponent: 0.0,
                },
                Scaling { xi: Affine::default(), gamma: by_n(1.0), kappa: by_n(1.0) },
            );
            let a = premium / rate - alpha / (alpha - 1.0);
            (model, chars(TailFunction::ZeroAbove { threshold: 0.0 }, JointJumpMeasure::empty(), a, 0.0, 1.0 / rate)?)
        }
        "independence" => {
            let (alpha, jump_rate) = (get("alpha"), get("jump_rate"));
            if !(alpha > 0.0 && jump_rate > 0.0) {
                return Err(bad("need alpha > 0 and jump_rate > 0"));
            }
            let model = ArrayModel::new(
                Family::Independent {
                    xi: Marginal::Pareto { alpha, scale: 1.0 },
                    gamma: Marginal::Sparse { rate: jump_rate, inner: Box::new(exp1.clone()) },
                    kappa: exp1,
                },
                Scaling { xi: by_n(1.0 / alpha), gamma: Affine::default(), kappa: by_n(1.0) },
            );
            let jumps = JointJumpMeasure::Analytic {
                pieces: vec![AxisPiece {
                    axis: Axis::Gamma,
                    side: Side::Pos,
                    density: Density::Exponential { mass: jump_rate, rate: 1.0 },
                    lo: 0.0,
                    hi: f64::INFINITY,
                }],
                coupling: MaxCoupling::Independent,
            };
            let a = jumps.integrate_gamma(&|s| s / (1.0 + s * s), 0.0, f64::INFINITY, QuadConfig::default())?;
            (model, chars(TailFunction::Frechet { alpha, scale: 1.0 }, jumps, a, 0.0, 1.0)?)
        }
        "identical" => {
            let alpha = get("alpha");
            if !(alpha > 1.0 && alpha < 2.0) {
                return Err(bad("need 1 < alpha < 2"));
            }
            let centred = Affine { center: alpha / (alpha - 1.0), exponent: 1.0 / alpha, ..Affine::default() };
            let model = ArrayModel::new(
                Family::Identical { common: Marginal::Pareto { alpha, scale: 1.0 }, kappa: exp1 },
                Scaling { xi: centred, gamma: centred, kappa: by_n(1.0) },
            );
            let jumps = JointJumpMeasure::Analytic {
                pieces: vec![AxisPiece {
                    axis: Axis::Gamma,
                    side: Side::Pos,
                    density: Density::Power { alpha, weight: 1.0 },
                    lo: 0.0,
                    hi: f64::INFINITY,
                }],
                coupling: MaxCoupling::Identical,
            };
            (model, chars(TailFunction::Frechet { alpha, scale: 1.0 }, jumps, identical_power_shift(alpha), 0.0, 1.0)?)
        }
        _ => unreachable!("catalog and builder disagree"),
    };
    Ok(out)
}

/// A minimal config that uses the preset with default parameters.
pub fn preset_config(name: &str, seed: u64) -> RunConfig {
    RunConfig { seed: Some(seed), preset: Some(PresetRef { name: name.into(), params: BTreeMap::new() }), ..RunConfig::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_round_trips_through_validation() {
        let cat = presets();
        assert!(!cat.is_empty());
        for p in &cat {
            let mut cfg = preset_config(p.name, 7);
            let (model, chars) = build_preset(p.name, &BTreeMap::new()).unwrap();
            cfg.preset = None;
            cfg.model = Some(model);
            cfg.characteristics = Some(chars.spec());
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::parse(&text).unwrap();
            let r = back.resolve().unwrap();
            assert_eq!(r.model, cfg.model.clone().unwrap(), "{}", p.name);
            let json = serde_json::to_string(&back).unwrap();
            RunConfig::parse(&json).unwrap().resolve().unwrap();
            preset_config(p.name, 7).resolve().unwrap();
        }
    }

    #[test]
    fn example2_defaults() {
        let (m, c) = build_preset("example2_insurance", &BTreeMap::new()).unwrap();
        match m.family {
            Family::InsurancePair { interarrival, claim } => {
                assert_eq!(interarrival, Marginal::Exponential { rate: 1.0 });
                assert_eq!(claim, Marginal::Pareto { alpha: 2.5, scale: 1.0 });
            }
            f => panic!("{f:?}"),
        }
        assert!((c.a - 5.0 / 3.0).abs() < 1e-15);
        assert!(c.is_factorized());
    }

    #[test]
    fn missing_seed_is_config_error() {
        let text = "[preset]\nname = \"gumbel\"\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
        assert!(RunConfig::parse("seed = 1\nbogus = 2\n").is_err());
        let bad = "seed = 1\n[preset]\nname = \"gumbel\"\nparams = { nope = 1.0 }\n";
        assert!(RunConfig::parse(bad).unwrap().resolve().is_err());
    }

    #[test]
    fn commands_parse_with_aliases() {
        let cfg = RunConfig::parse("seed = 3\ncommands = [\"verify-conditions\", \"probe-j\", \"risk-demo\"]\n[preset]\nname = \"risk\"\n")
            .unwrap();
        assert_eq!(cfg.commands, vec![Command::Verify, Command::ProbeJ, Command::Risk]);
        cfg.resolve().unwrap();
    }
}
