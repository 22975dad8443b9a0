//! Perturbation balls, projected gradient ascent, and the attacks built on it.
//!
//! Every supremum over `B_p(x, γ)` in this crate is estimated here: PGD
//! iterates from the centre (and optional random restarts), plus the ball
//! centre and, for ℓ∞ balls in at most two dimensions, the ball vertices.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{CostModel, ExpertRow};
use crate::diffcore::{grad_wrt_input, Graph, ScoreModel, Tensor, Var};
use crate::surrogates::{self, argmax, SurrogateParams};
use crate::{Error, Result};

const BALL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

/// `B_p(x, γ)`, optionally intersected with a coordinate box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBall {
    pub p: Norm,
    pub gamma: f64,
    /// Global feature range `[lo, hi]`. When the centre lies outside it, the
    /// box is widened on that coordinate to include the centre.
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
}

impl PerturbationBall {
    pub fn new(p: Norm, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::config(format!("ball radius must be finite and >= 0, got {gamma}")));
        }
        Ok(Self {
            p,
            gamma,
            bounds: None,
        })
    }

    pub fn linf(gamma: f64) -> Self {
        Self::new(Norm::LInf, gamma).expect("valid radius")
    }

    pub fn l2(gamma: f64) -> Self {
        Self::new(Norm::L2, gamma).expect("valid radius")
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some([lo, hi]);
        self
    }

    fn box_for(&self, c: f64) -> (f64, f64) {
        match self.bounds {
            Some([lo, hi]) => (lo.min(c), hi.max(c)),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Interval that coordinate `c` of the centre may move in: `[c − γ, c + γ]`
    /// cut to the (widened) box.
    pub fn coordinate_range(&self, c: f64) -> (f64, f64) {
        let (lo, hi) = self.box_for(c);
        ((c - self.gamma).max(lo), (c + self.gamma).min(hi))
    }

    /// ℓp-nearest point of the ball (coordinate clamp for ∞, radial scaling
    /// for 2), then clipped to the box.
    pub fn project(&self, candidate: &[f64], center: &[f64]) -> Vec<f64> {
        assert_eq!(candidate.len(), center.len(), "projection shape mismatch");
        let g = self.gamma;
        let mut out: Vec<f64> = match self.p {
            Norm::LInf => candidate
                .iter()
                .zip(center)
                .map(|(v, c)| v.clamp(c - g, c + g))
                .collect(),
            Norm::L2 => {
                let dist = candidate
                    .iter()
                    .zip(center)
                    .map(|(v, c)| (v - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dist <= g {
                    candidate.to_vec()
                } else {
                    let s = g / dist;
                    candidate
                        .iter()
                        .zip(center)
                        .map(|(v, c)| c + (v - c) * s)
                        .collect()
                }
            }
        };
        for (v, c) in out.iter_mut().zip(center) {
            let (lo, hi) = self.box_for(*c);
            *v = v.clamp(lo, hi);
        }
        out
    }

    pub fn distance(&self, point: &[f64], center: &[f64]) -> f64 {
        let diffs = point.iter().zip(center).map(|(a, b)| (a - b).abs());
        match self.p {
            Norm::LInf => diffs.fold(0.0, f64::max),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }

    pub fn contains(&self, point: &[f64], center: &[f64]) -> bool {
        self.distance(point, center) <= self.gamma + BALL_TOL
            && point.iter().zip(center).all(|(v, c)| {
                let (lo, hi) = self.box_for(*c);
                *v >= lo && *v <= hi
            })
    }

    /// Corners of an ℓ∞ ball in one or two dimensions (box-clipped).
    pub fn vertices(&self, center: &[f64]) -> Vec<Vec<f64>> {
        if self.p != Norm::LInf || center.len() > 2 || self.gamma == 0.0 {
            return Vec::new();
        }
        let d = center.len();
        (0..1usize << d)
            .map(|mask| {
                let corner: Vec<f64> = (0..d)
                    .map(|k| {
                        let s = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
                        center[k] + s * self.gamma
                    })
                    .collect();
                self.project(&corner, center)
            })
            .collect()
    }

    /// Uniform draw from the ball (then box-clipped).
    pub fn sample<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let d = center.len();
        let raw: Vec<f64> = match self.p {
            Norm::LInf => center
                .iter()
                .map(|c| c + rng.random_range(-1.0..=1.0) * self.gamma)
                .collect(),
            Norm::L2 => {
                let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let r = self.gamma * rng.random::<f64>().powf(1.0 / d as f64);
                center.iter().zip(&dir).map(|(c, v)| c + r * v / n).collect()
            }
        };
        self.project(&raw, center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Center,
    RandomUniform,
}

/// Inner-maximization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub steps: usize,
    pub step_size: f64,
    pub init: Init,
    /// Additional runs from uniformly random starting points.
    pub restarts: usize,
    pub seed: u64,
}

impl AttackPlan {
    pub const DEFAULT_STEPS: usize = 10;

    /// `T = 10`, step `2.5·γ/T`, centre start plus one random restart.
    pub fn default_for(gamma: f64) -> Self {
        let steps = Self::DEFAULT_STEPS;
        Self {
            steps,
            step_size: 2.5 * gamma / steps as f64,
            init: Init::Center,
            restarts: 1,
            seed: 0,
        }
    }

    /// Centre start, no restarts.
    pub fn restart_free(gamma: f64, steps: usize) -> Self {
        Self {
            steps,
            step_size: if steps > 0 { 2.5 * gamma / steps as f64 } else { 0.0 },
            init: Init::Center,
            restarts: 0,
            seed: 0,
        }
    }

    pub fn validate(&self, ball: &PerturbationBall) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("attack step_size must be finite and >= 0"));
        }
        if ball.gamma > 0.0 && self.steps > 0 && self.step_size == 0.0 {
            return Err(Error::config("attack step_size must be positive when gamma > 0"));
        }
        Ok(())
    }
}

/// Scalar objective of the perturbed input.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Objective given as a graph-building closure of the input leaf.
pub struct GraphObjective<F>(pub F);

impl<F> Objective for GraphObjective<F>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>> + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        let g = Graph::new();
        let leaf = g.leaf(Tensor::vector(x.to_vec()));
        Ok((self.0)(&g, leaf)?.item())
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g = Graph::new();
        let leaf = g.leaf(Tensor::vector(x.to_vec()));
        let out = (self.0)(&g, leaf)?;
        let v = out.item();
        let grad = grad_wrt_input(out, leaf)?;
        Ok((v, grad.into_data()))
    }
}

/// Builds a [`GraphObjective`], pinning the closure to the higher-ranked signature.
pub fn graph_objective<F>(f: F) -> GraphObjective<F>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>> + Sync,
{
    GraphObjective(f)
}

/// Negated objective, for descent.
pub struct Negated<'a, O: ?Sized>(pub &'a O);

impl<O: Objective + ?Sized> Objective for Negated<'_, O> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.0.value(x)?)
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.0.value_and_grad(x)?;
        Ok((-v, g.into_iter().map(|v| -v).collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdResult {
    /// Best evaluated point.
    pub point: Vec<f64>,
    pub value: f64,
    /// Every evaluated point, in evaluation order.
    pub probes: Vec<Probe>,
}

fn rng_for(plan: &AttackPlan, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(stream);
    rng
}

fn ascent_direction(p: Norm, grad: &[f64]) -> Vec<f64> {
    match p {
        Norm::LInf => grad
            .iter()
            .map(|g| {
                if *g > 0.0 {
                    1.0
                } else if *g < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L2 => {
            let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if n > 0.0 {
                grad.iter().map(|g| g / n).collect()
            } else {
                vec![0.0; grad.len()]
            }
        }
    }
}

/// `T` gradient steps from `start`; returns the final iterate and the
/// `(point, value)` pairs evaluated on the way (the final iterate is not evaluated).
fn run_ascent<O: Objective + ?Sized>(
    objective: &O,
    start: Vec<f64>,
    center: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
) -> Result<(Vec<f64>, Vec<Probe>)> {
    let mut cur = start;
    let mut probes = Vec::with_capacity(plan.steps);
    for k in 0..plan.steps {
        let (value, grad) = objective.value_and_grad(&cur)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "projected gradient ascent".into(),
                iteration: k,
            });
        }
        let dir = ascent_direction(ball.p, &grad);
        let next: Vec<f64> = cur
            .iter()
            .zip(&dir)
            .map(|(v, d)| v + plan.step_size * d)
            .collect();
        probes.push(Probe {
            point: std::mem::replace(&mut cur, ball.project(&next, center)),
            value,
        });
    }
    Ok((cur, probes))
}

fn starts(center: &[f64], ball: &PerturbationBall, plan: &AttackPlan, stream: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(plan, stream);
    let first = match plan.init {
        Init::Center => ball.project(center, center),
        Init::RandomUniform => ball.sample(center, &mut rng),
    };
    let mut out = vec![first];
    for _ in 0..plan.restarts {
        out.push(ball.sample(center, &mut rng));
    }
    out
}

/// Projected gradient ascent: sign steps for ℓ∞, normalized steps for ℓ2.
/// Returns the best evaluated iterate over all restarts. Deterministic given
/// `(plan.seed, stream)`.
pub fn pgd_ascend<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<PgdResult> {
    let mut probes = Vec::new();
    for start in starts(x, ball, plan, stream) {
        let (last, mut visited) = run_ascent(objective, start, x, ball, plan)?;
        let value = objective.value(&last)?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "projected gradient ascent".into(),
                iteration: plan.steps,
            });
        }
        visited.push(Probe { point: last, value });
        probes.extend(visited);
    }
    let best = probes
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.value > probes[b].value { i } else { b });
    Ok(PgdResult {
        point: probes[best].point.clone(),
        value: probes[best].value,
        probes,
    })
}

/// PGD returning the final iterate without evaluating it. With restarts,
/// each run's final iterate is evaluated once to pick the best run.
pub fn pgd_last_iterate<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<Vec<f64>> {
    let runs = starts(x, ball, plan, stream);
    if runs.len() == 1 {
        let start = runs.into_iter().next().expect("one start");
        return Ok(run_ascent(objective, start, x, ball, plan)?.0);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in runs {
        let (last, _) = run_ascent(objective, start, x, ball, plan)?;
        let v = objective.value(&last)?;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, last));
        }
    }
    Ok(best.expect("at least one run").1)
}

/// Untargeted attack on a classification system: ascent on the clean
/// surrogate deferral loss as a function of the input.
#[allow(clippy::too_many_arguments)]
pub fn untargeted_attack_class(
    h: &ScoreModel,
    x: &[f64],
    y: usize,
    m: &[usize],
    cm: &CostModel,
    u: f64,
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<PgdResult> {
    let obj = graph_objective(|g, xv| {
        let s = h.bind(g).forward(xv)?;
        surrogates::surrogate_def_class_var(s, y, m, cm, u)
    });
    pgd_ascend(&obj, x, ball, plan, stream)
}

/// Untargeted attack on a regression system (rejector `r`, predictor `f`).
#[allow(clippy::too_many_arguments)]
pub fn untargeted_attack_reg(
    r: &ScoreModel,
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    u: f64,
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<PgdResult> {
    let obj = graph_objective(|g, xv| {
        let rs = r.bind(g).forward(xv)?;
        let fo = f.bind(g).forward(xv)?;
        surrogates::surrogate_def_reg_var(fo, rs, t, m, cm, u)
    });
    pgd_ascend(&obj, x, ball, plan, stream)
}

/// Untargeted attack on either kind of system.
#[allow(clippy::too_many_arguments)]
pub fn untargeted_attack(
    system: SystemRef<'_>,
    x: &[f64],
    target: TargetRef<'_>,
    experts: ExpertRow<'_>,
    cm: &CostModel,
    u: f64,
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<Vec<f64>> {
    let res = match (system, target, experts) {
        (SystemRef::Classification { h }, TargetRef::Label(y), ExpertRow::Labels(m)) => {
            untargeted_attack_class(h, x, y, m, cm, u, ball, plan, stream)?
        }
        (SystemRef::Regression { r, f }, TargetRef::Value(t), ExpertRow::Values(m)) => {
            untargeted_attack_reg(r, f, x, t, m, cm, u, ball, plan, stream)?
        }
        _ => return Err(Error::config("system, target and expert outputs disagree on the task")),
    };
    Ok(res.point)
}

#[derive(Debug, Clone, Copy)]
pub enum SystemRef<'a> {
    Classification { h: &'a ScoreModel },
    Regression { r: &'a ScoreModel, f: &'a ScoreModel },
}

impl<'a> SystemRef<'a> {
    /// The allocation policy (`h` or `r`).
    pub fn policy(&self) -> &'a ScoreModel {
        match self {
            SystemRef::Classification { h } => h,
            SystemRef::Regression { r, .. } => r,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TargetRef<'a> {
    Label(usize),
    Value(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetedResult {
    pub point: Vec<f64>,
    pub success: bool,
}

/// Targeted attack: descent on `Φ_cls^u(π(x'), ν)`. A visited point at which
/// the policy decides `ν` is preferred over a lower objective value.
pub fn targeted_attack(
    policy: &ScoreModel,
    x: &[f64],
    nu: usize,
    ball: &PerturbationBall,
    plan: &AttackPlan,
    u: f64,
    stream: u64,
) -> Result<TargetedResult> {
    if nu >= policy.output_dim() {
        return Err(Error::config(format!(
            "target action {nu} outside policy action space of size {}",
            policy.output_dim()
        )));
    }
    let obj = graph_objective(|g, xv| {
        let s = policy.bind(g).forward(xv)?;
        Ok(-surrogates::phi_cls_u_var(s, nu, u))
    });
    let res = pgd_ascend(&obj, x, ball, plan, stream)?;
    let mut best: Option<&Probe> = None;
    for p in &res.probes {
        if argmax(&policy.scores(&p.point)?) == nu
            && best.is_none_or(|b| p.value > b.value)
        {
            best = Some(p);
        }
    }
    Ok(match best {
        Some(p) => TargetedResult {
            point: p.point.clone(),
            success: true,
        },
        None => TargetedResult {
            point: res.point,
            success: false,
        },
    })
}

/// What the per-outcome search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeGoal {
    /// Minimize `Φ_cls^u(π(x'), j)`; records whether any probe decides `j`.
    Reach,
    /// Maximize `Φ_cls^{ρ,u}(π(x'), j)`.
    MarginSup,
    /// Maximize `‖Δ̄(x', j) − Δ̄(x, j)‖₂`.
    PenaltySup,
}

/// Outcome-indexed perturbations `x'_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeProxySet {
    pub goal: ProbeGoal,
    pub proxies: Vec<Vec<f64>>,
    /// Objective at each proxy (for `Reach`, the minimized `Φ_cls^u`).
    pub values: Vec<f64>,
    /// For `Reach`: whether some probed point decides each outcome.
    pub reachable: Vec<bool>,
}

fn proxy_stream(example: u64, goal: ProbeGoal, outcome: usize) -> u64 {
    let g = match goal {
        ProbeGoal::Reach => 1,
        ProbeGoal::MarginSup => 2,
        ProbeGoal::PenaltySup => 3,
    };
    (example << 16) | (g << 12) | outcome as u64
}

/// Runs one search per outcome of `policy`. Probes are the ball centre,
/// the ℓ∞ vertices when `d ≤ 2`, and every PGD iterate.
pub fn outcome_proxies(
    policy: &ScoreModel,
    x: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
    params: &SurrogateParams,
    goal: ProbeGoal,
    example: u64,
) -> Result<OutcomeProxySet> {
    let n_actions = policy.output_dim();
    let clean = policy.scores(x)?;
    let mut set = OutcomeProxySet {
        goal,
        proxies: Vec::with_capacity(n_actions),
        values: Vec::with_capacity(n_actions),
        reachable: vec![false; n_actions],
    };
    let extra: Vec<Vec<f64>> = std::iter::once(x.to_vec()).chain(ball.vertices(x)).collect();
    for j in 0..n_actions {
        let stream = proxy_stream(example, goal, j);
        let (u, rho) = (params.u, params.rho);
        let base = surrogates::margin_vector(&clean, j);
        let res = match goal {
            ProbeGoal::Reach => pgd_ascend(
                &graph_objective(|g, xv| {
                    let s = policy.bind(g).forward(xv)?;
                    Ok(-surrogates::phi_cls_u_var(s, j, u))
                }),
                x,
                ball,
                plan,
                stream,
            )?,
            ProbeGoal::MarginSup => pgd_ascend(
                &graph_objective(|g, xv| {
                    let s = policy.bind(g).forward(xv)?;
                    Ok(surrogates::phi_cls_rho_u_var(s, j, u, rho))
                }),
                x,
                ball,
                plan,
                stream,
            )?,
            ProbeGoal::PenaltySup => pgd_ascend(
                &graph_objective(|g, xv| {
                    let s = policy.bind(g).forward(xv)?;
                    let b = g.leaf(Tensor::vector(base.clone()));
                    Ok((surrogates::margin_vector_var(s, j) - b).norm2())
                }),
                x,
                ball,
                plan,
                stream,
            )?,
        };
        let score = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            let s = policy.scores(p)?;
            let v = match goal {
                ProbeGoal::Reach => -surrogates::phi_cls_u(&s, j, u),
                ProbeGoal::MarginSup => surrogates::phi_cls_rho_u(&s, j, u, rho),
                ProbeGoal::PenaltySup => surrogates::l2_distance(&surrogates::margin_vector(&s, j), &base),
            };
            Ok((v, s))
        };
        let mut best = (res.value, res.point.clone());
        let mut reached = false;
        for p in res.probes.iter().map(|p| &p.point).chain(&extra) {
            let (v, s) = score(p)?;
            reached |= argmax(&s) == j;
            if v > best.0 {
                best = (v, p.clone());
            }
        }
        set.reachable[j] = reached;
        set.values.push(if goal == ProbeGoal::Reach { -best.0 } else { best.0 });
        set.proxies.push(best.1);
    }
    Ok(set)
}

/// Stable fingerprint of a model's architecture and parameters.
pub fn model_fingerprint(model: &ScoreModel) -> u64 {
    let mut h = Sha256::new();
    for l in model.layers() {
        h.update((l.input_dim() as u64).to_le_bytes());
        h.update((l.output_dim() as u64).to_le_bytes());
        h.update(format!("{:?}", l.activation).as_bytes());
    }
    for v in model.params_flat() {
        h.update(v.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Proxy sets keyed by `(model fingerprint, example, goal)`. A changed model
/// never hits stale entries.
#[derive(Debug, Default)]
pub struct ProxyCache {
    entries: Mutex<HashMap<(u64, u64, ProbeGoal), OutcomeProxySet>>,
}

impl ProxyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[allow(clippy::too_many_arguments)]
    pub fn get_or_compute(
        &self,
        policy: &ScoreModel,
        x: &[f64],
        ball: &PerturbationBall,
        plan: &AttackPlan,
        params: &SurrogateParams,
        goal: ProbeGoal,
        example: u64,
    ) -> Result<OutcomeProxySet> {
        let key = (model_fingerprint(policy), example, goal);
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let set = outcome_proxies(policy, x, ball, plan, params, goal, example)?;
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key, set.clone());
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Layer, Activation};

    fn linear_1d(w: &[f64], b: &[f64]) -> ScoreModel {
        let layer = Layer::new(
            Tensor::matrix(w.len(), 1, w.to_vec()).unwrap(),
            Tensor::vector(b.to_vec()),
            Activation::Identity,
        )
        .unwrap();
        ScoreModel::new(vec![layer]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = [0.0, 0.0];
        let inf = PerturbationBall::linf(1.0);
        assert_eq!(inf.project(&[3.0, -0.5], &c), vec![1.0, -0.5]);
        assert_eq!(inf.project(&[0.2, -0.5], &c), vec![0.2, -0.5]);
        let l2 = PerturbationBall::l2(1.0);
        let p = l2.project(&[3.0, 4.0], &c);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2.project(&[0.3, 0.4], &c), vec![0.3, 0.4]);
    }

    #[test]
    fn box_widens_to_center() {
        let ball = PerturbationBall::linf(0.5).with_bounds(0.0, 1.0);
        let p = ball.project(&[1.4, -0.3], &[1.2, 0.1]);
        assert_eq!(p, vec![1.2, 0.0]);
        assert!(ball.contains(&p, &[1.2, 0.1]));
    }

    #[test]
    fn linear_objective_linf_hits_vertex() {
        let w = [1.0, -2.0, 0.5];
        let obj = graph_objective(|g, x| {
            Ok((g.leaf(Tensor::vector(w.to_vec())) * x).sum())
        });
        let x = [0.1, 0.2, 0.3];
        let ball = PerturbationBall::linf(0.25);
        let plan = AttackPlan {
            steps: 1,
            step_size: 0.25,
            init: Init::Center,
            restarts: 0,
            seed: 0,
        };
        let res = pgd_ascend(&obj, &x, &ball, &plan, 0).unwrap();
        let expected: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + 0.25 * b.signum()).collect();
        assert_eq!(res.point, expected);
    }

    #[test]
    fn zero_steps_center_returns_input() {
        let obj = graph_objective(|_, x| Ok((x * x).sum()));
        let x = [0.4, -0.1];
        let plan = AttackPlan {
            steps: 0,
            step_size: 0.1,
            init: Init::Center,
            restarts: 0,
            seed: 0,
        };
        let res = pgd_ascend(&obj, &x, &PerturbationBall::l2(1.0), &plan, 0).unwrap();
        assert_eq!(res.point, x.to_vec());
    }

    #[test]
    fn concave_quadratic_converges_to_interior_max() {
        // −‖x − a‖², maximizer a inside the ball
        let a = [0.3, -0.4];
        let obj = graph_objective(|g, x| {
            let d = x - g.leaf(Tensor::vector(a.to_vec()));
            Ok(-(d * d).sum())
        });
        let ball = PerturbationBall::l2(1.0);
        let mut plan = AttackPlan::restart_free(1.0, 50);
        plan.step_size = 0.05;
        let res = pgd_ascend(&obj, &[0.0, 0.0], &ball, &plan, 0).unwrap();
        let err = ((res.point[0] - a[0]).powi(2) + (res.point[1] - a[1]).powi(2)).sqrt();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn non_finite_gradient_reports_iteration() {
        let obj = graph_objective(|_, x| Ok(x.sum().ln()));
        let plan = AttackPlan::restart_free(1.0, 5);
        match pgd_ascend(&obj, &[-1.0], &PerturbationBall::linf(1.0), &plan, 0) {
            Err(Error::NonFinite { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn targeted_threshold_policy() {
        // outcome 1 wins for x > 0.5
        let pol = linear_1d(&[0.0, 1.0], &[0.0, -0.5]);
        let plan = AttackPlan::default_for(0.3);
        let far = targeted_attack(&pol, &[0.3], 1, &PerturbationBall::linf(0.3), &plan, 1.0, 0).unwrap();
        assert!(far.success);
        let short = targeted_attack(&pol, &[0.1], 1, &PerturbationBall::linf(0.3), &plan, 1.0, 0).unwrap();
        assert!(!short.success);
        let zero = targeted_attack(&pol, &[0.7], 1, &PerturbationBall::linf(0.0), &AttackPlan::default_for(0.0), 1.0, 0)
            .unwrap();
        assert!(zero.success);
        assert_eq!(zero.point, vec![0.7]);
    }

    #[test]
    fn outcome_proxies_cover_all_actions() {
        let pol = linear_1d(&[0.0, 1.0, -1.0], &[0.0, -0.5, -0.5]);
        let params = SurrogateParams::default();
        let ball = PerturbationBall::linf(0.2);
        let plan = AttackPlan::default_for(0.2);
        let set = outcome_proxies(&pol, &[0.45], &ball, &plan, &params, ProbeGoal::Reach, 3).unwrap();
        assert_eq!(set.proxies.len(), 3);
        assert!(set.reachable[0] && set.reachable[1]);
        assert!(!set.reachable[2]);
        for p in &set.proxies {
            assert!(ball.contains(p, &[0.45]));
        }
        let zero = outcome_proxies(
            &pol,
            &[0.45],
            &PerturbationBall::linf(0.0),
            &AttackPlan::default_for(0.0),
            &params,
            ProbeGoal::MarginSup,
            3,
        )
        .unwrap();
        assert!(zero.proxies.iter().all(|p| p == &vec![0.45]));
    }

    #[test]
    fn cache_keys_on_model_parameters() {
        let cache = ProxyCache::new();
        let params = SurrogateParams::default();
        let ball = PerturbationBall::linf(0.1);
        let plan = AttackPlan::default_for(0.1);
        let a = linear_1d(&[1.0, -1.0], &[0.0, 0.0]);
        let b = linear_1d(&[1.0, -1.5], &[0.0, 0.0]);
        cache.get_or_compute(&a, &[0.2], &ball, &plan, &params, ProbeGoal::Reach, 0).unwrap();
        cache.get_or_compute(&a, &[0.2], &ball, &plan, &params, ProbeGoal::Reach, 0).unwrap();
        assert_eq!(cache.len(), 1);
        cache.get_or_compute(&b, &[0.2], &ball, &plan, &params, ProbeGoal::Reach, 0).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
