//! Experiment configuration: one JSON document per run, with dotted-path
//! overrides applied before validation.

use deferkit::agents::{BaseLoss, ClampPolicy, CostModel, ExpertKind};
use deferkit::attacks::{AttackPlan, Init, Norm, PerturbationBall};
use deferkit::data::{NormScheme, TaskKind};
use deferkit::diffcore::Activation;
use deferkit::evaluation::AttackMode;
use deferkit::exec::Execution;
use deferkit::surrogates::SurrogateParams;
use deferkit::training::{Regularizer, TrainConfig, TrainObjective};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskKind,
    pub seed: u64,
    pub data: DataConfig,
    pub panel: PanelConfig,
    pub cost: CostConfig,
    pub loss: LossConfig,
    pub attack: AttackConfig,
    pub model: ModelConfig,
    pub train: TrainBlock,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Blobs { k: usize, dim: usize, n: usize, separation: f64 },
    Linear { dim: usize, n: usize, noise: f64 },
    Piecewise { n: usize, noise_low: f64, noise_high: f64, threshold: f64 },
    Csv {
        path: String,
        target_column: String,
        #[serde(default = "default_norm")]
        normalize: NormScheme,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_norm() -> NormScheme {
    NormScheme::Zscore
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub experts: Vec<ExpertKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// One fee per expert.
    pub fees: Vec<f64>,
    /// Regression only: `β_0` of the predictor.
    #[serde(default)]
    pub predictor_fee: f64,
    /// Per-expert `α_j`; when absent, 1 (or `1 − β_j` with `capped`).
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub capped: bool,
    #[serde(default = "default_base_loss")]
    pub base_loss: BaseLoss,
    /// Defaults to strict for classification and unclamped for regression.
    #[serde(default)]
    pub clamp: Option<ClampPolicy>,
}

fn default_base_loss() -> BaseLoss {
    BaseLoss::Squared
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub u: f64,
    pub rho: f64,
    pub kappa: f64,
    #[serde(default)]
    pub certified: bool,
    pub gamma: f64,
    pub p: Norm,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub steps: usize,
    /// Defaults to `2.5γ/steps`.
    #[serde(default)]
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Regression predictor `f`; empty means linear.
    #[serde(default)]
    pub predictor_hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rerm,
    Baseline,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Rerm => "rerm",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub method: Method,
    /// Set to `clean_two_term` to train the classification baseline on the
    /// unweighted surrogate.
    #[serde(default)]
    pub baseline_objective: Option<TrainObjective>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate for the baseline when it differs from the robust one.
    #[serde(default)]
    pub baseline_learning_rate: Option<f64>,
    #[serde(alias = "nu")]
    pub eta: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub monitor_examples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Clean,
    Untargeted,
    Targeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub modes: Vec<ModeName>,
    /// Targeted action; defaults to the last expert.
    #[serde(default)]
    pub nu: Option<usize>,
    pub split: Split,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
}

fn default_resolution() -> usize {
    deferkit::oracle::DEFAULT_GRID_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths are resolved against the output root.
    pub dir: String,
}

pub const PRESETS: [&str; 2] = ["blobs-class", "linreg-defer"];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let common_attack = AttackConfig { steps: 10, step_size: None, restarts: 1, init: Init::RandomUniform };
    let eval = EvalConfig {
        modes: vec![ModeName::Clean, ModeName::Untargeted, ModeName::Targeted],
        nu: None,
        split: Split::Test,
        execution: Execution::Parallel,
        grid_resolution: default_resolution(),
    };
    match name {
        "blobs-class" => Some(ExperimentConfig {
            name: name.into(),
            task: TaskKind::Classification,
            seed: 0,
            data: DataConfig::Blobs { k: 3, dim: 2, n: 600, separation: 4.0 },
            panel: PanelConfig {
                experts: vec![
                    ExpertKind::ClassSpecialist { classes: vec![0, 1], p: 0.9 },
                    ExpertKind::ClassSpecialist { classes: vec![1, 2], p: 0.9 },
                    ExpertKind::ClassSpecialist { classes: vec![2, 0], p: 0.9 },
                ],
            },
            cost: CostConfig {
                fees: vec![0.05, 0.075, 0.1],
                predictor_fee: 0.0,
                alphas: None,
                capped: true,
                base_loss: BaseLoss::Squared,
                clamp: None,
            },
            loss: LossConfig { u: 1.0, rho: 1.0, kappa: 0.05, certified: false, gamma: 1.5, p: Norm::LInf, bounds: None },
            attack: common_attack,
            model: ModelConfig { hidden: vec![16], activation: Activation::Relu, predictor_hidden: vec![] },
            train: TrainBlock {
                method: Method::Rerm,
                baseline_objective: None,
                epochs: 30,
                batch_size: 64,
                learning_rate: 0.01,
                baseline_learning_rate: Some(0.005),
                eta: 1e-4,
                regularizer: Regularizer::L2Params,
                execution: Execution::Parallel,
                monitor_examples: 0,
            },
            eval,
            output: OutputConfig { dir: "runs/blobs-class".into() },
        }),
        "linreg-defer" => Some(ExperimentConfig {
            name: name.into(),
            task: TaskKind::Regression,
            seed: 0,
            data: DataConfig::Piecewise { n: 600, noise_low: 0.1, noise_high: 1.0, threshold: 0.0 },
            panel: PanelConfig {
                experts: vec![
                    ExpertKind::RegNoisy { sigma: 0.5 },
                    ExpertKind::RegNoisy { sigma: 0.7 },
                    ExpertKind::RegSpecialist { feature: 0, lo: 0.0, hi: 1.0, sigma_in: 0.05, sigma_out: 3.0 },
                ],
            },
            cost: CostConfig {
                fees: vec![0.04, 0.05, 0.07],
                predictor_fee: 0.0,
                alphas: None,
                capped: false,
                base_loss: BaseLoss::Squared,
                clamp: None,
            },
            loss: LossConfig { u: 1.0, rho: 1.0, kappa: 0.05, certified: false, gamma: 0.3, p: Norm::LInf, bounds: None },
            attack: common_attack,
            model: ModelConfig { hidden: vec![16], activation: Activation::Relu, predictor_hidden: vec![] },
            train: TrainBlock {
                method: Method::Rerm,
                baseline_objective: None,
                epochs: 30,
                batch_size: 64,
                learning_rate: 0.05,
                baseline_learning_rate: None,
                eta: 1e-4,
                regularizer: Regularizer::L2Params,
                execution: Execution::Parallel,
                monitor_examples: 0,
            },
            eval,
            output: OutputConfig { dir: "runs/linreg-defer".into() },
        }),
        _ => None,
    }
}

/// Field aliases accepted on the command line, mapped to their stored names.
const PATH_ALIASES: [(&str, &str); 1] = [("train.nu", "train.eta")];

fn canonical_path(path: &str) -> &str {
    PATH_ALIASES.iter().find(|(a, _)| *a == path).map_or(path, |(_, c)| c)
}

/// Sets `path` (dot-separated object keys) to `raw`, parsed as JSON when
/// possible and taken as a string otherwise. The key must already exist
/// unless its parent is an object that only gains optional fields.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override {assignment:?} is not of the form path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let path = canonical_path(path);
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(format!("override path {path:?} has an empty segment"));
    }
    let mut cur = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        cur = match cur {
            Value::Object(map) if last => {
                map.insert(key.to_string(), value);
                return Ok(());
            }
            Value::Object(map) => map
                .get_mut(*key)
                .ok_or_else(|| format!("override path {path:?}: no field {key:?}"))?,
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| format!("override path {path:?}: {key:?} is not an index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("override path {path:?}: index {idx} out of range ({len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("override path {path:?}: {key:?} is not inside an object")),
        };
    }
    Ok(())
}

impl ExperimentConfig {
    /// Lowercase hex SHA-256 of the canonical JSON form, first 16 digits.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }

    pub fn num_experts(&self) -> usize {
        self.panel.experts.len()
    }

    /// Number of classes when it is known without reading data.
    pub fn num_classes(&self) -> Option<usize> {
        match (&self.data, self.task) {
            (DataConfig::Blobs { k, .. }, _) => Some(*k),
            _ => None,
        }
    }

    pub fn num_actions(&self) -> Option<usize> {
        match self.task {
            TaskKind::Classification => self.num_classes().map(|k| k + self.num_experts()),
            TaskKind::Regression => Some(self.num_experts() + 1),
        }
    }

    pub fn cost_model(&self, k: Option<usize>) -> CostModel {
        let c = &self.cost;
        let jn = self.num_experts();
        let expert_alphas: Vec<f64> = match &c.alphas {
            Some(a) => a.clone(),
            None if c.capped => c.fees.iter().map(|b| 1.0 - b).collect(),
            None => vec![1.0; jn],
        };
        let mut cm = match self.task {
            TaskKind::Classification => {
                let k = k.unwrap_or(0);
                let mut cm = CostModel::classification(k, &c.fees);
                cm.alphas[k..].iter_mut().zip(&expert_alphas).for_each(|(a, v)| *a = *v);
                cm
            }
            TaskKind::Regression => {
                let mut fees = vec![c.predictor_fee];
                fees.extend_from_slice(&c.fees);
                let mut cm = CostModel::regression(&fees, c.base_loss);
                cm.alphas[1..].iter_mut().zip(&expert_alphas).for_each(|(a, v)| *a = *v);
                cm
            }
        };
        cm.base_loss = c.base_loss;
        if let Some(clamp) = c.clamp {
            cm.clamp = clamp;
        }
        cm
    }

    pub fn surrogate_params(&self) -> SurrogateParams {
        SurrogateParams { u: self.loss.u, rho: self.loss.rho, kappa: self.loss.kappa, certified: self.loss.certified }
    }

    pub fn ball(&self) -> Result<PerturbationBall, String> {
        let mut b = PerturbationBall::new(self.loss.p, self.loss.gamma).map_err(|e| e.to_string())?;
        if let Some([lo, hi]) = self.loss.bounds {
            b = b.with_bounds(lo, hi);
        }
        Ok(b)
    }

    pub fn plan(&self) -> AttackPlan {
        let a = &self.attack;
        let steps = a.steps;
        AttackPlan {
            steps,
            step_size: a.step_size.unwrap_or(if steps == 0 { 0.0 } else { 2.5 * self.loss.gamma / steps as f64 }),
            init: a.init,
            restarts: a.restarts,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, method: Method) -> TrainConfig {
        let t = &self.train;
        let objective = match (method, self.task) {
            (Method::Rerm, TaskKind::Classification) => TrainObjective::RermC,
            (Method::Rerm, TaskKind::Regression) => TrainObjective::RermR,
            (Method::Baseline, TaskKind::Classification) => t.baseline_objective.unwrap_or(TrainObjective::CleanClass),
            (Method::Baseline, TaskKind::Regression) => TrainObjective::CleanReg,
        };
        let learning_rate = match method {
            Method::Baseline => t.baseline_learning_rate.unwrap_or(t.learning_rate),
            Method::Rerm => t.learning_rate,
        };
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate,
            eta: t.eta,
            regularizer: t.regularizer,
            seed: self.seed,
            objective,
            execution: t.execution,
            monitor_examples: t.monitor_examples,
        }
    }

    /// Resolved attack modes; `Targeted` uses `eval.nu` or the last expert.
    pub fn attack_modes(&self, actions: usize) -> Vec<AttackMode> {
        let nu = self.eval.nu.unwrap_or(actions.saturating_sub(1));
        self.eval
            .modes
            .iter()
            .map(|m| match m {
                ModeName::Clean => AttackMode::Clean,
                ModeName::Untargeted => AttackMode::Untargeted,
                ModeName::Targeted => AttackMode::Targeted(nu),
            })
            .collect()
    }

    /// Every cross-field violation, collected rather than stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let absorb = |r: deferkit::Result<()>, errs: &mut Vec<String>| match r {
            Ok(()) => {}
            Err(deferkit::Error::Config(list)) => errs.extend(list),
            Err(e) => errs.push(e.to_string()),
        };
        let class_task = self.task == TaskKind::Classification;
        match &self.data {
            DataConfig::Blobs { k, dim, n, separation } => {
                if !class_task {
                    errs.push("data.source = blobs needs task = classification".into());
                }
                if *k < 1 || *dim < 1 || *n < 1 {
                    errs.push("data: k, dim and n must be positive".into());
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    errs.push("data.separation must be finite and >= 0".into());
                }
            }
            DataConfig::Linear { dim, n, noise } => {
                if class_task {
                    errs.push("data.source = linear needs task = regression".into());
                }
                if *dim < 1 || *n < 1 {
                    errs.push("data: dim and n must be positive".into());
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    errs.push("data.noise must be finite and >= 0".into());
                }
            }
            DataConfig::Piecewise { n, noise_low, noise_high, threshold } => {
                if class_task {
                    errs.push("data.source = piecewise needs task = regression".into());
                }
                if *n < 1 {
                    errs.push("data.n must be positive".into());
                }
                if !(*noise_low >= 0.0 && *noise_high >= 0.0 && threshold.is_finite()) {
                    errs.push("data: noise levels must be >= 0 and threshold finite".into());
                }
            }
            DataConfig::Csv { train_fraction, .. } => {
                if !(*train_fraction > 0.0 && *train_fraction <= 1.0) {
                    errs.push(format!("data.train_fraction must lie in (0, 1], got {train_fraction}"));
                }
            }
        }
        let jn = self.num_experts();
        for (e, kind) in self.panel.experts.iter().enumerate() {
            if kind.is_classification() != class_task {
                errs.push(format!("panel.experts.{e} does not match task {:?}", self.task));
            }
            if let (ExpertKind::ClassSpecialist { classes, .. }, Some(k)) = (kind, self.num_classes()) {
                if let Some(c) = classes.iter().find(|c| **c >= k) {
                    errs.push(format!("panel.experts.{e}: class {c} outside 0..{k}"));
                }
            }
        }
        if self.cost.fees.len() != jn {
            errs.push(format!("cost.fees has {} entries for {jn} experts", self.cost.fees.len()));
        }
        if let Some(a) = &self.cost.alphas {
            if a.len() != jn {
                errs.push(format!("cost.alphas has {} entries for {jn} experts", a.len()));
            }
        }
        if self.cost.fees.len() == jn && self.cost.alphas.as_ref().is_none_or(|a| a.len() == jn) {
            if let Some(actions) = self.num_actions() {
                absorb(self.cost_model(self.num_classes()).validate(actions, self.num_classes()), &mut errs);
            }
        }
        if !(self.loss.gamma >= 0.0 && self.loss.gamma.is_finite()) {
            errs.push(format!("loss.gamma must be finite and >= 0, got {}", self.loss.gamma));
        }
        if let Some([lo, hi]) = self.loss.bounds {
            if !(lo < hi) {
                errs.push(format!("loss.bounds must satisfy lo < hi, got [{lo}, {hi}]"));
            }
        }
        let actions = self.num_actions();
        absorb(self.surrogate_params().validate(actions.unwrap_or(2)), &mut errs);
        if let Ok(ball) = self.ball() {
            absorb(self.plan().validate(&ball), &mut errs);
        }
        if self.attack.restarts == 0 {
            errs.push("attack.restarts must be >= 1".into());
        }
        if self.model.hidden.contains(&0) || self.model.predictor_hidden.contains(&0) {
            errs.push("model: hidden layer widths must be positive".into());
        }
        if self.train.epochs == 0 {
            errs.push("train.epochs must be positive".into());
        }
        absorb(self.train_config(Method::Rerm).validate(), &mut errs);
        if let Some(lr) = self.train.baseline_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                errs.push(format!("train.baseline_learning_rate must be positive, got {lr}"));
            }
        }
        if let Some(obj) = self.train.baseline_objective {
            if !matches!(obj, TrainObjective::CleanClass | TrainObjective::CleanTwoTerm | TrainObjective::CleanReg) {
                errs.push("train.baseline_objective must be a clean objective".into());
            }
        }
        if self.eval.modes.is_empty() {
            errs.push("eval.modes must list at least one mode".into());
        }
        if let (Some(nu), Some(a)) = (self.eval.nu, actions) {
            if nu >= a {
                errs.push(format!("eval.nu = {nu} outside the action space of size {a}"));
            }
        }
        if self.eval.grid_resolution == 0 {
            errs.push("eval.grid_resolution must be positive".into());
        }
        if self.output.dir.is_empty() {
            errs.push("output.dir must not be empty".into());
        }
        if errs.is_empty() { Ok(()) } else { Err(errs) }
    }
}

/// Preset or file, then overrides, then validation.
pub fn resolve(preset_name: Option<&str>, file: Option<&str>, overrides: &[String]) -> Result<ExperimentConfig, Vec<String>> {
    let mut doc: Value = match (preset_name, file) {
        (Some(_), Some(_)) => return Err(vec!["give either --preset or --config, not both".into()]),
        (Some(p), None) => {
            let cfg = preset(p).ok_or_else(|| vec![format!("unknown preset {p:?}; known: {}", PRESETS.join(", "))])?;
            serde_json::to_value(cfg).expect("preset serializes")
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read {path}: {e}")])?;
            serde_json::from_str(&text).map_err(|e| vec![format!("{path}: {e}")])?
        }
        (None, None) => serde_json::to_value(preset(PRESETS[0]).expect("default preset")).expect("preset serializes"),
    };
    let mut errs = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut doc, o) {
            errs.push(e);
        }
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| vec![format!("config: {e}")])?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = resolve(Some("blobs-class"), None, &["loss.gamma=0.25".into(), "panel.experts.1.p=0.7".into(), "train.nu=0.002".into()]).unwrap();
        assert_eq!(cfg.loss.gamma, 0.25);
        assert_eq!(cfg.panel.experts[1], ExpertKind::ClassSpecialist { classes: vec![1, 2], p: 0.7 });
        assert_eq!(cfg.train.eta, 0.002);
    }

    #[test]
    fn every_violation_is_listed() {
        let errs = resolve(
            Some("blobs-class"),
            None,
            &["loss.gamma=-1".into(), "eval.nu=9".into(), "cost.capped=false".into(), "train.batch_size=0".into()],
        )
        .unwrap_err();
        let joined = errs.join("\n");
        for needle in ["loss.gamma", "eval.nu", "strict clamp", "batch_size"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
    }

    #[test]
    fn bad_override_paths() {
        assert!(resolve(Some("blobs-class"), None, &["loss.nope.x=1".into()]).is_err());
        assert!(resolve(Some("blobs-class"), None, &["gamma".into()]).is_err());
        assert!(resolve(Some("blobs-class"), None, &["loss.typo=1".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = preset("blobs-class").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.loss.gamma = 0.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn capped_cost_model() {
        let cm = preset("blobs-class").unwrap().cost_model(Some(3));
        assert_eq!(cm.alphas, vec![1.0, 1.0, 1.0, 0.95, 0.925, 0.9]);
        assert_eq!(cm.betas, vec![0.0, 0.0, 0.0, 0.05, 0.075, 0.1]);
        let reg = preset("linreg-defer").unwrap().cost_model(None);
        assert_eq!(reg.betas, vec![0.0, 0.04, 0.05, 0.07]);
        assert_eq!(reg.clamp, ClampPolicy::Unclamped);
    }
}
