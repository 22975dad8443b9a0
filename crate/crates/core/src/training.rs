//! Regularized ERM trainers for the smooth adversarial surrogates, the clean
//! one-stage baseline, an adaptive-moment optimizer and pass accounting.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{CostModel, ExpertPanel};
use crate::attacks::{graph_objective, pgd_last_iterate, AttackPlan, Init, Objective, PerturbationBall};
use crate::data::Dataset;
use crate::diffcore::{Graph, ScoreModel, Tensor};
use crate::exec::{try_map_range, Execution};
use crate::surrogates::{
    self, base_loss_var, margin_vector, margin_vector_var, SurrogateParams, Threat,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainObjective {
    /// Cost-weighted comp-sum `Σ_j (Σ_{i≠j} μ_i) Φ^u(h(x), j)`.
    CleanClass,
    /// The two-term classification surrogate `Φ^u(h,y) + Σ_j (1 − c_j) Φ^u(h, K+j)`.
    CleanTwoTerm,
    CleanReg,
    RermC,
    RermR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    L2Params,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of `Ω`. Also accepted under the name `nu`.
    #[serde(alias = "nu")]
    pub eta: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
    pub seed: u64,
    pub objective: TrainObjective,
    #[serde(default)]
    pub execution: Execution,
    /// Training examples scored each epoch for the history (0 disables it).
    #[serde(default = "default_monitor")]
    pub monitor_examples: usize,
}

fn default_monitor() -> usize {
    128
}

impl TrainConfig {
    pub fn robust(objective: TrainObjective) -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            eta: 1e-4,
            regularizer: Regularizer::L2Params,
            seed: 0,
            objective,
            execution: Execution::Parallel,
            monitor_examples: default_monitor(),
        }
    }

    pub fn baseline(objective: TrainObjective) -> Self {
        Self {
            learning_rate: 0.005,
            ..Self::robust(objective)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch_size == 0 {
            errs.push("train.batch_size must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("train.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            errs.push(format!("train.eta must be >= 0, got {}", self.eta));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn eta_eff(&self) -> f64 {
        match self.regularizer {
            Regularizer::L2Params => self.eta,
            Regularizer::None => 0.0,
        }
    }
}

/// Adam with the usual decay constants.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Network evaluation counts for one epoch, split by phase.
#[derive(Debug, Default)]
pub struct PassCounter {
    clean_forwards: AtomicU64,
    pgd_forwards: AtomicU64,
    pgd_backwards: AtomicU64,
    param_backwards: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCounts {
    pub clean_forwards: u64,
    pub pgd_forwards: u64,
    pub pgd_backwards: u64,
    pub param_backwards: u64,
}

impl PassCounts {
    pub fn forwards(&self) -> u64 {
        self.clean_forwards + self.pgd_forwards
    }

    pub fn backwards(&self) -> u64 {
        self.pgd_backwards + self.param_backwards
    }
}

impl PassCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&self) {
        for c in [
            &self.clean_forwards,
            &self.pgd_forwards,
            &self.pgd_backwards,
            &self.param_backwards,
        ] {
            c.store(0, Ordering::SeqCst);
        }
    }

    pub fn snapshot(&self) -> PassCounts {
        PassCounts {
            clean_forwards: self.clean_forwards.load(Ordering::SeqCst),
            pgd_forwards: self.pgd_forwards.load(Ordering::SeqCst),
            pgd_backwards: self.pgd_backwards.load(Ordering::SeqCst),
            param_backwards: self.param_backwards.load(Ordering::SeqCst),
        }
    }

    pub fn forwards(&self) -> u64 {
        self.snapshot().forwards()
    }

    pub fn backwards(&self) -> u64 {
        self.snapshot().backwards()
    }
}

fn bump(c: Option<&PassCounter>, f: impl Fn(&PassCounter) -> &AtomicU64) {
    if let Some(c) = c {
        f(c).fetch_add(1, Ordering::Relaxed);
    }
}

/// Counts each evaluation as one forward and each gradient as one backward.
struct Counted<'a, O> {
    inner: O,
    counter: Option<&'a PassCounter>,
}

impl<O: Objective> Objective for Counted<'_, O> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        bump(self.counter, |c| &c.pgd_forwards);
        self.inner.value(x)
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        bump(self.counter, |c| &c.pgd_forwards);
        bump(self.counter, |c| &c.pgd_backwards);
        self.inner.value_and_grad(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n: u64,
    pub actions: u64,
    pub steps: u64,
    pub expected: u64,
    pub observed: PassCounts,
    pub pass: bool,
}

/// Checks one epoch's counts against `n(1 + |A|·T)` forwards and backwards.
pub fn audit_epoch_cost(counter: &PassCounter, n: usize, actions: usize, steps: usize) -> AuditReport {
    let observed = counter.snapshot();
    let expected = (n * (1 + actions * steps)) as u64;
    AuditReport {
        n: n as u64,
        actions: actions as u64,
        steps: steps as u64,
        expected,
        observed,
        pass: observed.forwards() == expected && observed.backwards() == expected,
    }
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let o = &self.observed;
        write!(
            f,
            "expected {} forwards/backwards for n={} |A|={} T={}; observed forwards {} (clean {}, pgd {}), backwards {} (pgd {}, parameter {})",
            self.expected,
            self.n,
            self.actions,
            self.steps,
            o.forwards(),
            o.clean_forwards,
            o.pgd_forwards,
            o.backwards(),
            o.pgd_backwards,
            o.param_backwards
        )
    }
}

/// A trained deferral system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum System {
    Classification { h: ScoreModel },
    Regression { r: ScoreModel, f: ScoreModel },
}

impl System {
    pub fn num_params(&self) -> usize {
        match self {
            System::Classification { h } => h.num_params(),
            System::Regression { r, f } => r.num_params() + f.num_params(),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        match self {
            System::Classification { h } => h.params_flat(),
            System::Regression { r, f } => {
                let mut p = r.params_flat();
                p.extend(f.params_flat());
                p
            }
        }
    }

    pub fn set_params_flat(&mut self, theta: &[f64]) -> Result<()> {
        match self {
            System::Classification { h } => h.set_params_flat(theta)?,
            System::Regression { r, f } => {
                let nr = r.num_params();
                r.set_params_flat(&theta[..nr])?;
                f.set_params_flat(&theta[nr..])?;
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> &ScoreModel {
        match self {
            System::Classification { h } => h,
            System::Regression { r, .. } => r,
        }
    }

    pub fn as_ref(&self) -> crate::attacks::SystemRef<'_> {
        match self {
            System::Classification { h } => crate::attacks::SystemRef::Classification { h },
            System::Regression { r, f } => crate::attacks::SystemRef::Regression { r, f },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective including `η·Ω`.
    pub objective: f64,
    /// Accuracy in % (classification) or RMSE (regression) on the monitor subsample.
    pub clean_metric: Option<f64>,
    /// Probe-estimated adversarial true deferral loss on the monitor subsample.
    pub def_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub system: System,
    pub history: Vec<EpochRecord>,
    /// Epoch at which the objective became non-finite; `system` then holds
    /// the parameters from the end of the previous epoch.
    pub diverged: Option<usize>,
}

/// Everything a trainer needs besides the system itself.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub dataset: &'a Dataset,
    pub panel: &'a ExpertPanel,
    pub cm: &'a CostModel,
    pub params: &'a SurrogateParams,
    pub ball: &'a PerturbationBall,
    /// Inner-maximization plan; only `steps` and `step_size` are used, from the centre.
    pub plan: &'a AttackPlan,
}

fn inner_plan(plan: &AttackPlan) -> AttackPlan {
    AttackPlan {
        init: Init::Center,
        restarts: 0,
        ..*plan
    }
}

/// Loss and parameter gradient for one example.
fn example_grad(
    system: &System,
    setup: &TrainSetup<'_>,
    objective: TrainObjective,
    i: usize,
    counter: Option<&PassCounter>,
) -> Result<(f64, Vec<f64>)> {
    let ds = setup.dataset;
    let cache = setup.panel.cache()?;
    let x = ds.x(i);
    let plan = inner_plan(setup.plan);
    let u = setup.params.u;
    match (system, objective) {
        (System::Classification { h }, TrainObjective::CleanClass | TrainObjective::CleanTwoTerm) => {
            let (y, m) = (ds.label(i), cache.labels(i));
            let g = Graph::new();
            let bm = h.bind(&g);
            bump(counter, |c| &c.clean_forwards);
            let s = bm.forward(g.leaf(Tensor::vector(x.to_vec())))?;
            let loss = if objective == TrainObjective::CleanClass {
                surrogates::weighted_def_class_var(s, y, m, setup.cm, u)?
            } else {
                surrogates::surrogate_def_class_var(s, y, m, setup.cm, u)?
            };
            let grads = g.backward(loss)?;
            bump(counter, |c| &c.param_backwards);
            Ok((loss.item(), bm.param_grads(&grads)))
        }
        (System::Classification { h }, TrainObjective::RermC) => {
            let (y, m) = (ds.label(i), cache.labels(i));
            bump(counter, |c| &c.clean_forwards);
            let anchor = h.scores(x)?;
            let proxies = penalty_proxies(h, x, &anchor, setup.ball, &plan, i, counter)?;
            let g = Graph::new();
            let bm = h.bind(&g);
            let rows = stack(x, &proxies)?;
            let out = bm.forward(g.leaf(rows))?;
            let clean = out.row(0);
            let prox: Vec<_> = (1..=proxies.len()).map(|r| out.row(r)).collect();
            let loss = surrogates::smooth_adv_def_class_var(clean, &prox, y, m, setup.cm, setup.params)?;
            let grads = g.backward(loss)?;
            bump(counter, |c| &c.param_backwards);
            Ok((loss.item(), bm.param_grads(&grads)))
        }
        (System::Regression { r, f }, TrainObjective::CleanReg) => {
            let (t, m) = (ds.value(i), cache.values(i));
            let g = Graph::new();
            let (br, bf) = (r.bind(&g), f.bind(&g));
            let xv = g.leaf(Tensor::vector(x.to_vec()));
            bump(counter, |c| &c.clean_forwards);
            let loss = surrogates::surrogate_def_reg_var(bf.forward(xv)?, br.forward(xv)?, t, m, setup.cm, u)?;
            let grads = g.backward(loss)?;
            bump(counter, |c| &c.param_backwards);
            let mut grad = br.param_grads(&grads);
            grad.extend(bf.param_grads(&grads));
            Ok((loss.item(), grad))
        }
        (System::Regression { r, f }, TrainObjective::RermR) => {
            let (t, m) = (ds.value(i), cache.values(i));
            bump(counter, |c| &c.clean_forwards);
            let anchor = r.scores(x)?;
            let proxies = penalty_proxies(r, x, &anchor, setup.ball, &plan, i, counter)?;
            let x_f = if setup.ball.gamma > 0.0 && plan.steps > 0 {
                let base = setup.cm.base_loss;
                let obj = Counted {
                    inner: graph_objective(|g, xv| Ok(base_loss_var(base, f.bind(g).forward(xv)?, t))),
                    counter,
                };
                pgd_last_iterate(&obj, x, setup.ball, &plan, (i as u64) << 16 | 0xfff)?
            } else {
                x.to_vec()
            };
            let g = Graph::new();
            let (br, bf) = (r.bind(&g), f.bind(&g));
            let out = br.forward(g.leaf(stack(x, &proxies)?))?;
            let clean = out.row(0);
            let prox: Vec<_> = (1..=proxies.len()).map(|k| out.row(k)).collect();
            let f_adv = bf.forward(g.leaf(Tensor::vector(x_f)))?;
            let loss = surrogates::smooth_adv_def_reg_var(f_adv, clean, &prox, t, m, setup.cm, setup.params)?;
            let grads = g.backward(loss)?;
            bump(counter, |c| &c.param_backwards);
            let mut grad = br.param_grads(&grads);
            grad.extend(bf.param_grads(&grads));
            Ok((loss.item(), grad))
        }
        (_, obj) => Err(Error::config(format!("objective {obj:?} does not match the system's task"))),
    }
}

fn stack(x: &[f64], proxies: &[Vec<f64>]) -> Result<Tensor> {
    let mut rows: Vec<&[f64]> = vec![x];
    rows.extend(proxies.iter().map(|p| p.as_slice()));
    Ok(Tensor::from_rows(&rows)?)
}

/// `x'_j` maximizing `‖Δ̄(x', j) − Δ̄(x, j)‖₂`, last PGD iterate from the centre.
fn penalty_proxies(
    policy: &ScoreModel,
    x: &[f64],
    anchor: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
    example: usize,
    counter: Option<&PassCounter>,
) -> Result<Vec<Vec<f64>>> {
    let actions = policy.output_dim();
    (0..actions)
        .map(|j| {
            if ball.gamma == 0.0 && plan.steps == 0 {
                return Ok(x.to_vec());
            }
            let base = margin_vector(anchor, j);
            let obj = Counted {
                inner: graph_objective(|g, xv| {
                    let s = policy.bind(g).forward(xv)?;
                    let b = g.leaf(Tensor::vector(base.clone()));
                    Ok((margin_vector_var(s, j) - b).norm2())
                }),
                counter,
            };
            pgd_last_iterate(&obj, x, ball, plan, ((example as u64) << 16) | (3 << 12) | j as u64)
        })
        .collect()
}

/// Mean objective and gradient over `batch`, plus `η·Ω`.
pub fn batch_objective(
    system: &System,
    setup: &TrainSetup<'_>,
    cfg: &TrainConfig,
    batch: &[usize],
    counter: Option<&PassCounter>,
) -> Result<(f64, Vec<f64>)> {
    let per = try_map_range(cfg.execution, batch.len(), |b| {
        example_grad(system, setup, cfg.objective, batch[b], counter)
    })?;
    let theta = system.params_flat();
    let mut grad = vec![0.0; theta.len()];
    let mut value = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (v, gr) in &per {
        value += v;
        for (a, b) in grad.iter_mut().zip(gr) {
            *a += b;
        }
    }
    value *= scale;
    for a in grad.iter_mut() {
        *a *= scale;
    }
    let eta = cfg.eta_eff();
    if eta > 0.0 {
        value += eta * theta.iter().map(|t| t * t).sum::<f64>();
        for (a, t) in grad.iter_mut().zip(&theta) {
            *a += 2.0 * eta * t;
        }
    }
    Ok((value, grad))
}

fn check_task(system: &System, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    let ds = setup.dataset;
    if ds.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cache = setup.panel.cache()?;
    if cache.num_examples() != ds.len() {
        return Err(Error::config("expert cache does not match the dataset"));
    }
    let jn = cache.num_experts();
    let mut errs = Vec::new();
    match system {
        System::Classification { h } => {
            let k = ds
                .num_classes()
                .ok_or_else(|| Error::config("classification system on regression data"))?;
            if h.output_dim() != k + jn {
                errs.push(format!("policy has {} outputs, expected K+J = {}", h.output_dim(), k + jn));
            }
            if h.input_dim() != ds.dim() {
                errs.push(format!("policy input {} != data dimension {}", h.input_dim(), ds.dim()));
            }
            if let Err(Error::Config(e)) = setup.cm.validate(k + jn, Some(k)) {
                errs.extend(e);
            }
        }
        System::Regression { r, f } => {
            if ds.is_classification() {
                return Err(Error::config("regression system on classification data"));
            }
            if r.output_dim() != jn + 1 {
                errs.push(format!("rejector has {} outputs, expected J+1 = {}", r.output_dim(), jn + 1));
            }
            if r.input_dim() != ds.dim() || f.input_dim() != ds.dim() {
                errs.push("model input dimension differs from the data".to_string());
            }
            if let Err(Error::Config(e)) = setup.cm.validate(jn + 1, None) {
                errs.extend(e);
            }
        }
    }
    if let Err(Error::Config(e)) = setup.params.validate(system.policy().output_dim()) {
        errs.extend(e);
    }
    if let Err(Error::Config(e)) = setup.plan.validate(setup.ball) {
        errs.extend(e);
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Monitor metrics on the first `cfg.monitor_examples` training examples.
fn monitor(system: &System, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<(Option<f64>, Option<f64>)> {
    let n = cfg.monitor_examples.min(setup.dataset.train.len());
    if n == 0 {
        return Ok((None, None));
    }
    let ids = &setup.dataset.train[..n];
    let plan = AttackPlan {
        seed: cfg.seed,
        ..AttackPlan::default_for(setup.ball.gamma)
    };
    let threat = |i: usize| Threat {
        params: setup.params,
        ball: setup.ball,
        plan: &plan,
        example: i as u64,
    };
    let cache = setup.panel.cache()?;
    let ds = setup.dataset;
    let rows = try_map_range(cfg.execution, n, |b| -> Result<(f64, f64)> {
        let i = ids[b];
        let x = ds.x(i);
        match system {
            System::Classification { h } => {
                let (y, m) = (ds.label(i), cache.labels(i));
                let k = h.output_dim() - m.len();
                let d = surrogates::argmax(&h.scores(x)?);
                let correct = if d < k { d == y } else { m[d - k] == y };
                let dl = surrogates::adv_true_def_loss_class(h, x, y, m, setup.cm, &threat(i))?;
                Ok((if correct { 1.0 } else { 0.0 }, dl))
            }
            System::Regression { r, f } => {
                let (t, m) = (ds.value(i), cache.values(i));
                let d = surrogates::argmax(&r.scores(x)?);
                let out = if d == 0 { f.scores(x)? } else { m[d - 1].clone() };
                let se: f64 = out.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum();
                let dl = surrogates::adv_true_def_loss_reg(r, f, x, t, m, setup.cm, &threat(i))?;
                Ok((se, dl))
            }
        }
    })?;
    let mean = |k: usize| rows.iter().map(|r| if k == 0 { r.0 } else { r.1 }).sum::<f64>() / n as f64;
    let metric = match system {
        System::Classification { .. } => 100.0 * mean(0),
        System::Regression { .. } => mean(0).sqrt(),
    };
    Ok((Some(metric), Some(mean(1))))
}

/// Mini-batch training of `system` under `cfg.objective`. With a counter,
/// the counts are reset at the start of each epoch, so after return they
/// describe the last epoch.
pub fn train(
    system: System,
    setup: &TrainSetup<'_>,
    cfg: &TrainConfig,
    counter: Option<&PassCounter>,
) -> Result<TrainOutcome> {
    check_task(&system, setup, cfg)?;
    let mut system = system;
    let mut theta = system.params_flat();
    let mut opt = Adam::new(cfg.learning_rate, theta.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = setup.dataset.train.clone();
    for epoch in 0..cfg.epochs {
        if let Some(c) = counter {
            c.reset();
        }
        let snapshot = theta.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut diverged = false;
        for batch in order.chunks(cfg.batch_size) {
            let (value, grad) = batch_objective(&system, setup, cfg, batch, counter)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                diverged = true;
                break;
            }
            total += value;
            batches += 1;
            opt.step(&mut theta, &grad);
            system.set_params_flat(&theta)?;
        }
        if diverged {
            system.set_params_flat(&snapshot)?;
            return Ok(TrainOutcome {
                system,
                history,
                diverged: Some(epoch),
            });
        }
        let (clean_metric, def_loss) = monitor(&system, setup, cfg)?;
        history.push(EpochRecord {
            epoch,
            objective: total / batches as f64,
            clean_metric,
            def_loss,
        });
    }
    Ok(TrainOutcome {
        system,
        history,
        diverged: None,
    })
}

/// RERM over the smooth adversarial classification surrogate.
pub fn train_rerm_c(h: ScoreModel, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        objective: TrainObjective::RermC,
        ..cfg.clone()
    };
    train(System::Classification { h }, setup, &cfg, None)
}

/// Joint RERM over rejector and predictor with the smooth adversarial regression surrogate.
pub fn train_rerm_r(r: ScoreModel, f: ScoreModel, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        objective: TrainObjective::RermR,
        ..cfg.clone()
    };
    train(System::Regression { r, f }, setup, &cfg, None)
}

/// Clean one-stage ERM. Keeps `CleanTwoTerm` if requested, otherwise uses the
/// task's default clean objective.
pub fn train_baseline(system: System, setup: &TrainSetup<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let objective = match (&system, cfg.objective) {
        (System::Classification { .. }, TrainObjective::CleanTwoTerm) => TrainObjective::CleanTwoTerm,
        (System::Classification { .. }, _) => TrainObjective::CleanClass,
        (System::Regression { .. }, _) => TrainObjective::CleanReg,
    };
    let cfg = TrainConfig {
        objective,
        ..cfg.clone()
    };
    train(system, setup, &cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut theta = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1, 2);
        for _ in 0..2000 {
            let g: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
            opt.step(&mut theta, &g);
        }
        assert!(theta.iter().all(|t| t.abs() < 1e-3), "{theta:?}");
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut theta = vec![0.0];
        let mut opt = Adam::new(0.01, 1);
        opt.step(&mut theta, &[123.0]);
        assert!((theta[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn audit_arithmetic() {
        let c = PassCounter::new();
        let r = audit_epoch_cost(&c, 10, 4, 5);
        assert_eq!(r.expected, 210);
        assert!(!r.pass);
    }

    #[test]
    fn config_lists_all_errors() {
        let mut cfg = TrainConfig::robust(TrainObjective::RermC);
        cfg.batch_size = 0;
        cfg.learning_rate = -1.0;
        cfg.eta = f64::NAN;
        match cfg.validate() {
            Err(Error::Config(e)) => assert_eq!(e.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nu_is_an_alias_for_eta() {
        let json = r#"{"epochs":1,"batch_size":4,"learning_rate":0.01,"nu":0.002,"seed":0,"objective":"rerm_c"}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.eta, 0.002);
        assert_eq!(cfg.monitor_examples, 128);
    }
}
