//! Deferral losses: the comp-sum transforms, multiclass surrogates, clean
//! and adversarial true losses, and the adversarial and smooth adversarial
//! surrogates for classification and regression.
//!
//! Scalar functions take plain score slices. Functions suffixed `_var` build
//! the same expressions on a [`Graph`] so they can be differentiated with
//! respect to inputs or parameters.
//!
//! Margins are always taken as target minus competitor, `s_j − s_k`, so a
//! positive margin means `j` is ahead.

use serde::{Deserialize, Serialize};

use crate::agents::{cost_reg_pred_adv, costs_reg, shifted_costs, tau_weights, BaseLoss, CostModel};
use crate::attacks::{outcome_proxies, AttackPlan, PerturbationBall, ProbeGoal};
use crate::diffcore::{ScoreModel, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub u: f64,
    pub rho: f64,
    pub kappa: f64,
    /// Require `κ ≥ √(|A|−1)/ρ`.
    #[serde(default)]
    pub certified: bool,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            u: 1.0,
            rho: 1.0,
            kappa: 1.0,
            certified: false,
        }
    }
}

impl SurrogateParams {
    pub fn certified_kappa(actions: usize, rho: f64) -> f64 {
        ((actions.max(1) - 1) as f64).sqrt() / rho
    }

    /// Sets `κ` to the smallest certified value for `actions` outcomes.
    pub fn certify(mut self, actions: usize) -> Self {
        self.kappa = Self::certified_kappa(actions, self.rho);
        self.certified = true;
        self
    }

    pub fn validate(&self, actions: usize) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.u > 0.0 && self.u.is_finite()) {
            errs.push(format!("loss.u must be positive, got {}", self.u));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            errs.push(format!("loss.rho must be positive, got {}", self.rho));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            errs.push(format!("loss.kappa must be >= 0, got {}", self.kappa));
        }
        if self.certified && self.rho > 0.0 {
            let need = Self::certified_kappa(actions, self.rho);
            if self.kappa < need - 1e-12 {
                errs.push(format!("loss.kappa = {} is below the certified value {need}", self.kappa));
            }
        }
        if actions < 2 {
            errs.push(format!("action space must have at least 2 actions, got {actions}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    /// Number of classes (0 for a regression rejector).
    pub k: usize,
    pub j: usize,
    pub kind: TaskKind,
}

impl ActionSpace {
    pub fn classification(k: usize, j: usize) -> Self {
        Self {
            k,
            j,
            kind: TaskKind::Classification,
        }
    }

    pub fn regression(j: usize) -> Self {
        Self {
            k: 0,
            j,
            kind: TaskKind::Regression,
        }
    }

    pub fn size(&self) -> usize {
        match self.kind {
            TaskKind::Classification => self.k + self.j,
            TaskKind::Regression => self.j + 1,
        }
    }

    /// Index of the deferral action for expert `e`.
    pub fn expert_action(&self, e: usize) -> usize {
        match self.kind {
            TaskKind::Classification => self.k + e,
            TaskKind::Regression => e + 1,
        }
    }

    /// Expert consulted by `action`, if any.
    pub fn expert_of(&self, action: usize) -> Option<usize> {
        match self.kind {
            TaskKind::Classification => action.checked_sub(self.k),
            TaskKind::Regression => action.checked_sub(1),
        }
    }
}

/// Lowest index among the maxima.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = i;
        }
    }
    best
}

fn psi_u_of_log(l: f64, u: f64) -> f64 {
    if u == 1.0 {
        l
    } else {
        ((1.0 - u) * l).exp_m1() / (1.0 - u)
    }
}

/// `Ψ^u(v)`: `log(1+v)` for `u = 1`, `((1+v)^{1−u} − 1)/(1−u)` otherwise.
pub fn psi_u(v: f64, u: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("psi_u needs v >= 0, got {v}")));
    }
    Ok(psi_u_of_log(v.ln_1p(), u))
}

/// `Ψ_ρ(v) = min{max(0, 1 − v/ρ), 1}`.
pub fn psi_rho(v: f64, rho: f64) -> f64 {
    (1.0 - v / rho).clamp(0.0, 1.0)
}

fn logsumexp(s: &[f64]) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `Φ_cls^u(s, j) = Ψ^u(Σ_k exp(s_k − s_j) − 1)`, computed from
/// `logsumexp(s) − s_j`.
pub fn phi_cls_u(scores: &[f64], target: usize, u: f64) -> f64 {
    let l = (logsumexp(scores) - scores[target]).max(0.0);
    psi_u_of_log(l, u)
}

/// `(s_j − s_k)_{k≠j}`.
pub fn margin_vector(scores: &[f64], j: usize) -> Vec<f64> {
    scores
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, s)| scores[j] - s)
        .collect()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `Φ_cls^{ρ,u}(s, j) = Ψ^u(Σ_{k≠j} Ψ_ρ(s_j − s_k))`.
pub fn phi_cls_rho_u(scores: &[f64], target: usize, u: f64, rho: f64) -> f64 {
    let v: f64 = margin_vector(scores, target).iter().map(|m| psi_rho(*m, rho)).sum();
    psi_u_of_log(v.ln_1p(), u)
}

/// Realized cost of `decision`: `1{decision ≠ y}` for a class prediction,
/// `α_j·1{m_j ≠ y} + β_j` for deferral to expert `j`.
pub fn true_def_loss_class(decision: usize, k: usize, y: usize, m: &[usize], cm: &CostModel) -> f64 {
    if decision < k {
        if decision == y {
            0.0
        } else {
            1.0
        }
    } else {
        let e = decision - k;
        let wrong = if m[e] == y { 0.0 } else { 1.0 };
        cm.alphas[decision] * wrong + cm.betas[decision]
    }
}

/// `Φ^u(s, y) + Σ_j (1 − c_j)·Φ^u(s, K + j)` with `c_j` the cost of expert `j`.
pub fn surrogate_def_class(scores: &[f64], y: usize, m: &[usize], cm: &CostModel, u: f64) -> Result<f64> {
    let k = scores.len() - m.len();
    let mu = shifted_costs(cm, k, m, y)?;
    let mut total = phi_cls_u(scores, y, u);
    for e in 0..m.len() {
        total += (1.0 - mu[k + e]) * phi_cls_u(scores, k + e, u);
    }
    Ok(total)
}

/// Cost-weighted comp-sum loss `Σ_j (Σ_{i≠j} μ_i)·Φ^u(s, j)`: the clean
/// objective the smooth adversarial surrogate reduces to at `γ = 0, ρ = 1`.
pub fn weighted_def_class(scores: &[f64], y: usize, m: &[usize], cm: &CostModel, u: f64) -> Result<f64> {
    let k = scores.len() - m.len();
    let w = tau_weights(&shifted_costs(cm, k, m, y)?);
    Ok(w.iter().enumerate().map(|(j, wj)| wj * phi_cls_u(scores, j, u)).sum())
}

/// Probe settings shared by the adversarial losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threat<'a> {
    pub params: &'a SurrogateParams,
    pub ball: &'a PerturbationBall,
    pub plan: &'a AttackPlan,
    /// Seeds the per-outcome searches.
    pub example: u64,
}

impl Threat<'_> {
    fn proxies(&self, policy: &ScoreModel, x: &[f64], goal: ProbeGoal) -> Result<crate::attacks::OutcomeProxySet> {
        outcome_proxies(policy, x, self.ball, self.plan, self.params, goal, self.example)
    }

    fn pred_stream(&self) -> u64 {
        (self.example << 16) | 0xfff
    }
}

/// Probe-estimated `Σ_j μ_j · 1{j reachable}`. A lower bound on the exact
/// adversarial true loss, exact at `γ = 0`.
pub fn adv_true_def_loss_class(
    h: &ScoreModel,
    x: &[f64],
    y: usize,
    m: &[usize],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let k = h.output_dim() - m.len();
    let mu = shifted_costs(cm, k, m, y)?;
    let reach = threat.proxies(h, x, ProbeGoal::Reach)?.reachable;
    Ok(mu.iter().zip(&reach).filter(|(_, r)| **r).map(|(c, _)| c).sum())
}

/// `Σ_j (Σ_{i≠j} μ_i) · sup Φ^{ρ,u}(h(x'_j), j)`, each sup estimated by probing.
pub fn adv_surrogate_def_class(
    h: &ScoreModel,
    x: &[f64],
    y: usize,
    m: &[usize],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let k = h.output_dim() - m.len();
    let w = tau_weights(&shifted_costs(cm, k, m, y)?);
    let sup = threat.proxies(h, x, ProbeGoal::MarginSup)?.values;
    Ok(w.iter().zip(&sup).map(|(a, b)| a * b).sum())
}

/// `Φ^u(π(x)/ρ, j) + κ·‖Δ̄(x', j) − Δ̄(x, j)‖₂` at a given `x'`.
pub fn smooth_cls_at(clean: &[f64], proxy: &[f64], j: usize, params: &SurrogateParams) -> f64 {
    let scaled: Vec<f64> = clean.iter().map(|s| s / params.rho).collect();
    let pen = l2_distance(&margin_vector(proxy, j), &margin_vector(clean, j));
    phi_cls_u(&scaled, j, params.u) + params.kappa * pen
}

/// Smooth adversarial surrogate for outcome `j`, the penalty sup estimated by probing.
pub fn smooth_adv_cls(policy: &ScoreModel, x: &[f64], j: usize, threat: &Threat<'_>) -> Result<f64> {
    let clean = policy.scores(x)?;
    let pen = if threat.ball.gamma == 0.0 {
        0.0
    } else {
        threat.proxies(policy, x, ProbeGoal::PenaltySup)?.values[j]
    };
    let scaled: Vec<f64> = clean.iter().map(|s| s / threat.params.rho).collect();
    Ok(phi_cls_u(&scaled, j, threat.params.u) + threat.params.kappa * pen)
}

fn smooth_weighted(policy: &ScoreModel, x: &[f64], w: &[f64], threat: &Threat<'_>) -> Result<f64> {
    let clean = policy.scores(x)?;
    let pens = if threat.ball.gamma == 0.0 {
        vec![0.0; w.len()]
    } else {
        threat.proxies(policy, x, ProbeGoal::PenaltySup)?.values
    };
    let scaled: Vec<f64> = clean.iter().map(|s| s / threat.params.rho).collect();
    Ok(w.iter()
        .enumerate()
        .map(|(j, wj)| wj * (phi_cls_u(&scaled, j, threat.params.u) + threat.params.kappa * pens[j]))
        .sum())
}

/// `Σ_j (Σ_{i≠j} μ_i) · smooth_adv_cls(h, x, j)`.
pub fn smooth_adv_def_class(
    h: &ScoreModel,
    x: &[f64],
    y: usize,
    m: &[usize],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let k = h.output_dim() - m.len();
    let w = tau_weights(&shifted_costs(cm, k, m, y)?);
    smooth_weighted(h, x, &w, threat)
}

/// Cost of the chosen regression action.
pub fn true_def_loss_reg(decision: usize, f_out: &[f64], t: &[f64], m: &[Vec<f64>], cm: &CostModel) -> Result<f64> {
    crate::agents::cost_reg(cm, decision, f_out, m, t)
}

/// `Σ_j τ_j Φ^u(r, j) − (J−1)·c_0`.
pub fn surrogate_def_reg(
    f_out: &[f64],
    r_scores: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    u: f64,
) -> Result<f64> {
    let c = costs_reg(cm, f_out, m, t)?;
    Ok(reg_from_costs(&c, r_scores, u))
}

/// `Σ_j τ_j Φ^u(r, j) − (J−1)·c_0` for given costs.
pub fn reg_from_costs(costs: &[f64], r_scores: &[f64], u: f64) -> f64 {
    let tau = tau_weights(costs);
    let j = costs.len() as f64 - 1.0;
    tau.iter()
        .enumerate()
        .map(|(a, w)| w * phi_cls_u(r_scores, a, u))
        .sum::<f64>()
        - (j - 1.0) * costs[0]
}

/// Costs with the predictor cost inflated to its worst case over the ball.
pub fn adversarial_costs_reg(
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<Vec<f64>> {
    let f_out = f.scores(x)?;
    let mut c = costs_reg(cm, &f_out, m, t)?;
    c[0] = cost_reg_pred_adv(cm, f, x, t, threat.ball, threat.plan, threat.pred_stream())?;
    Ok(c)
}

/// Probe-estimated `Σ_j c̃_j · 1{j reachable by r}`.
#[allow(clippy::too_many_arguments)]
pub fn adv_true_def_loss_reg(
    r: &ScoreModel,
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let c = adversarial_costs_reg(f, x, t, m, cm, threat)?;
    let reach = threat.proxies(r, x, ProbeGoal::Reach)?.reachable;
    Ok(c.iter().zip(&reach).filter(|(_, q)| **q).map(|(v, _)| v).sum())
}

/// `Σ_j τ̃_j · sup Φ^{ρ,u}(r(x'_j), j) − (J−1)·c̃_0`.
#[allow(clippy::too_many_arguments)]
pub fn adv_surrogate_def_reg(
    r: &ScoreModel,
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let c = adversarial_costs_reg(f, x, t, m, cm, threat)?;
    let tau = tau_weights(&c);
    let sup = threat.proxies(r, x, ProbeGoal::MarginSup)?.values;
    let jn = c.len() as f64 - 1.0;
    Ok(tau.iter().zip(&sup).map(|(a, b)| a * b).sum::<f64>() - (jn - 1.0) * c[0])
}

/// `Σ_j τ̃_j · smooth_adv_cls(r, x, j) − (J−1)·c̃_0`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_adv_def_reg(
    r: &ScoreModel,
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    threat: &Threat<'_>,
) -> Result<f64> {
    let c = adversarial_costs_reg(f, x, t, m, cm, threat)?;
    let tau = tau_weights(&c);
    let jn = c.len() as f64 - 1.0;
    Ok(smooth_weighted(r, x, &tau, threat)? - (jn - 1.0) * c[0])
}

// ---------------------------------------------------------------------------
// Graph versions

fn psi_u_of_log_var(l: Var<'_>, u: f64) -> Var<'_> {
    if u == 1.0 {
        l
    } else {
        l.scale(1.0 - u).expm1().scale(1.0 / (1.0 - u))
    }
}

/// `Ψ^u(v)` on a graph; `v` must be nonnegative.
pub fn psi_u_var(v: Var<'_>, u: f64) -> Var<'_> {
    psi_u_of_log_var((v + 1.0).ln(), u)
}

pub fn phi_cls_u_var(scores: Var<'_>, target: usize, u: f64) -> Var<'_> {
    psi_u_of_log_var(scores.logsumexp() - scores.at(target), u)
}

/// `(s_j − s_k)_{k≠j}` as a vector.
pub fn margin_vector_var(scores: Var<'_>, j: usize) -> Var<'_> {
    let sj = scores.at(j);
    let parts: Vec<Var<'_>> = (0..scores.len())
        .filter(|k| *k != j)
        .map(|k| sj - scores.at(k))
        .collect();
    scores.graph().concat(&parts)
}

pub fn phi_cls_rho_u_var(scores: Var<'_>, target: usize, u: f64, rho: f64) -> Var<'_> {
    let psi = (margin_vector_var(scores, target).scale(-1.0 / rho) + 1.0).clamp(0.0, 1.0);
    psi_u_var(psi.sum(), u)
}

pub fn base_loss_var<'g>(kind: BaseLoss, out: Var<'g>, t: &[f64]) -> Var<'g> {
    let d = out - out.graph().leaf(Tensor::vector(t.to_vec()));
    match kind {
        BaseLoss::Squared => (d * d).sum(),
        BaseLoss::Absolute => d.abs().sum(),
    }
}

pub fn surrogate_def_class_var<'g>(
    scores: Var<'g>,
    y: usize,
    m: &[usize],
    cm: &CostModel,
    u: f64,
) -> Result<Var<'g>> {
    let k = scores.len() - m.len();
    let mu = shifted_costs(cm, k, m, y)?;
    let mut total = phi_cls_u_var(scores, y, u);
    for e in 0..m.len() {
        total = total + phi_cls_u_var(scores, k + e, u) * (1.0 - mu[k + e]);
    }
    Ok(total)
}

pub fn weighted_def_class_var<'g>(
    scores: Var<'g>,
    y: usize,
    m: &[usize],
    cm: &CostModel,
    u: f64,
) -> Result<Var<'g>> {
    let k = scores.len() - m.len();
    let w = tau_weights(&shifted_costs(cm, k, m, y)?);
    Ok(weighted_sum(scores, &w, |j| phi_cls_u_var(scores, j, u)))
}

fn weighted_sum<'g>(anchor: Var<'g>, w: &[f64], mut term: impl FnMut(usize) -> Var<'g>) -> Var<'g> {
    let mut total = anchor.graph().scalar(0.0);
    for (j, wj) in w.iter().enumerate() {
        total = total + term(j) * *wj;
    }
    total
}

/// Smooth surrogate for outcome `j` given clean scores and scores at `x'_j`.
pub fn smooth_cls_var<'g>(clean: Var<'g>, proxy: Var<'g>, j: usize, params: &SurrogateParams) -> Var<'g> {
    let base = phi_cls_u_var(clean.scale(1.0 / params.rho), j, params.u);
    if params.kappa == 0.0 {
        return base;
    }
    let pen = (margin_vector_var(proxy, j) - margin_vector_var(clean, j)).norm2();
    base + pen * params.kappa
}

/// `Σ_j w_j · smooth_cls(clean, proxies[j], j)`.
pub fn smooth_weighted_var<'g>(clean: Var<'g>, proxies: &[Var<'g>], w: &[f64], params: &SurrogateParams) -> Var<'g> {
    weighted_sum(clean, w, |j| smooth_cls_var(clean, proxies[j], j, params))
}

/// Smooth adversarial classification surrogate with explicit proxy scores.
pub fn smooth_adv_def_class_var<'g>(
    clean: Var<'g>,
    proxies: &[Var<'g>],
    y: usize,
    m: &[usize],
    cm: &CostModel,
    params: &SurrogateParams,
) -> Result<Var<'g>> {
    let k = clean.len() - m.len();
    let w = tau_weights(&shifted_costs(cm, k, m, y)?);
    Ok(smooth_weighted_var(clean, proxies, &w, params))
}

/// Regression costs with a differentiable predictor cost at `f_out`.
fn reg_costs_var<'g>(f_out: Var<'g>, t: &[f64], m: &[Vec<f64>], cm: &CostModel) -> Result<(Var<'g>, Vec<f64>)> {
    let c0 = base_loss_var(cm.base_loss, f_out, t) * cm.alphas[0] + cm.betas[0];
    let rest = (1..=m.len())
        .map(|j| crate::agents::cost_reg(cm, j, &[], m, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok((c0, rest))
}

/// `Σ_j τ_j(c) · term(j) − (J−1)·c_0` where `c_0` is a graph value.
fn reg_combine<'g>(c0: Var<'g>, rest: &[f64], mut term: impl FnMut(usize) -> Var<'g>) -> Var<'g> {
    let rest_total: f64 = rest.iter().sum();
    let jn = rest.len() as f64;
    let mut total = term(0) * rest_total - c0 * (jn - 1.0);
    for (e, ce) in rest.iter().enumerate() {
        // τ_{e+1} = c_0 + Σ_{i≥1} c_i − c_{e+1}
        let tau = c0 + (rest_total - ce);
        total = total + term(e + 1) * tau;
    }
    total
}

pub fn surrogate_def_reg_var<'g>(
    f_out: Var<'g>,
    r_scores: Var<'g>,
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    u: f64,
) -> Result<Var<'g>> {
    let (c0, rest) = reg_costs_var(f_out, t, m, cm)?;
    Ok(reg_combine(c0, &rest, |j| phi_cls_u_var(r_scores, j, u)))
}

/// Smooth adversarial regression surrogate. `f_adv` is the predictor output
/// at its worst-case point; `r_proxies[j]` the rejector scores at `x'_j`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_adv_def_reg_var<'g>(
    f_adv: Var<'g>,
    r_clean: Var<'g>,
    r_proxies: &[Var<'g>],
    t: &[f64],
    m: &[Vec<f64>],
    cm: &CostModel,
    params: &SurrogateParams,
) -> Result<Var<'g>> {
    let (c0, rest) = reg_costs_var(f_adv, t, m, cm)?;
    Ok(reg_combine(c0, &rest, |j| smooth_cls_var(r_clean, r_proxies[j], j, params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn psi_values() {
        assert!((psi_u(1.0, 1.0).unwrap() - LN2).abs() < 1e-15);
        assert!((psi_u(1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(psi_u(0.0, 0.3).unwrap(), 0.0);
        assert!(matches!(psi_u(-0.1, 1.0), Err(Error::Domain(_))));
        assert_eq!(psi_rho(0.0, 2.0), 1.0);
        assert_eq!(psi_rho(2.0, 2.0), 0.0);
        assert_eq!(psi_rho(1.0, 2.0), 0.5);
        assert_eq!(psi_rho(-3.0, 2.0), 1.0);
    }

    #[test]
    fn psi_continuous_in_u() {
        for i in 0..=100 {
            let v = i as f64 * 0.1;
            let mid = psi_u(v, 1.0).unwrap();
            for u in [1.0 - 1e-6, 1.0 + 1e-6] {
                assert!((psi_u(v, u).unwrap() - mid).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn phi_values() {
        assert!((phi_cls_u(&[0.0; 4], 2, 1.0) - 4f64.ln()).abs() < 1e-12);
        let v = phi_cls_u(&[1.0, 0.0, 0.0], 0, 1.0);
        assert!((v - (1.0 + 2.0 * (-1f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 0.551445).abs() < 1e-6);
        assert!(phi_cls_u(&[50.0, 0.0], 0, 1.0) < 1e-20);
        assert!((phi_cls_rho_u(&[0.0; 3], 1, 1.0, 1.0) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(phi_cls_rho_u(&[2.0, 0.5, 0.9], 0, 1.0, 1.0), 0.0);
        assert!((phi_cls_rho_u(&[-2.0, 0.0, 0.5], 0, 1.0, 1.0) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_term_examples() {
        let cm = CostModel::classification(2, &[0.3]);
        // K=2, J=1, y=0, expert wrong with α=0.3-free: build cost 0.3 via β
        let mut cm2 = cm.clone();
        cm2.alphas[2] = 0.0;
        let v = surrogate_def_class(&[0.0; 3], 0, &[1], &cm2, 1.0).unwrap();
        assert!((v - 1.7 * 3f64.ln()).abs() < 1e-12);
        assert!((v - 1.867641).abs() < 1e-6);
        let none = CostModel::classification(3, &[]);
        assert_eq!(
            surrogate_def_class(&[0.2, -0.1, 0.4], 1, &[], &none, 1.0).unwrap(),
            phi_cls_u(&[0.2, -0.1, 0.4], 1, 1.0)
        );
    }

    #[test]
    fn regression_surrogate_example() {
        let v = reg_from_costs(&[1.0, 2.0, 3.0], &[0.0; 3], 1.0);
        assert!((v - (12.0 * 3f64.ln() - 1.0)).abs() < 1e-12);
        assert!((v - 12.183348).abs() < 1e-6);
        assert_eq!(reg_from_costs(&[0.0; 3], &[0.3, 0.1, -0.2], 1.0), 0.0);
    }

    #[test]
    fn var_versions_match_scalar_versions() {
        let s = [0.3, -1.2, 0.8, 0.1];
        let g = Graph::new();
        let sv = g.leaf(Tensor::vector(s.to_vec()));
        for j in 0..4 {
            for u in [0.5, 1.0, 2.0] {
                assert!((phi_cls_u_var(sv, j, u).item() - phi_cls_u(&s, j, u)).abs() < 1e-14);
                assert!((phi_cls_rho_u_var(sv, j, u, 0.7).item() - phi_cls_rho_u(&s, j, u, 0.7)).abs() < 1e-14);
            }
        }
        let cm = CostModel::classification_capped(2, &[0.05, 0.1]);
        let m = [1, 0];
        let a = surrogate_def_class_var(sv, 0, &m, &cm, 1.0).unwrap().item();
        assert!((a - surrogate_def_class(&s, 0, &m, &cm, 1.0).unwrap()).abs() < 1e-14);
        let b = weighted_def_class_var(sv, 0, &m, &cm, 1.0).unwrap().item();
        assert!((b - weighted_def_class(&s, 0, &m, &cm, 1.0).unwrap()).abs() < 1e-14);

        let rc = CostModel::regression(&[0.0, 0.04, 0.05], BaseLoss::Squared);
        let mv = [vec![0.4], vec![-0.2]];
        let fo = g.leaf(Tensor::vector(vec![0.9]));
        let rs = g.leaf(Tensor::vector(vec![0.1, -0.3, 0.2]));
        let a = surrogate_def_reg_var(fo, rs, &[0.5], &mv, &rc, 1.0).unwrap().item();
        let b = surrogate_def_reg(&[0.9], &[0.1, -0.3, 0.2], &[0.5], &mv, &rc, 1.0).unwrap();
        assert!((a - b).abs() < 1e-13, "{a} {b}");
    }

    #[test]
    fn weighted_minus_two_term_identity() {
        // Σ(S − μ_j)Φ_j minus the two-term surrogate is (S − 1)·ΣΦ_j when prediction costs are 0/1.
        let s = [0.4, -0.2, 0.1, 0.7, -0.5];
        let cm = CostModel::classification_capped(3, &[0.05, 0.1]);
        let (y, m) = (1, [1, 2]);
        let mu = shifted_costs(&cm, 3, &m, y).unwrap();
        let total: f64 = mu.iter().sum();
        let phis: f64 = (0..5).map(|j| phi_cls_u(&s, j, 1.0)).sum();
        let diff = weighted_def_class(&s, y, &m, &cm, 1.0).unwrap() - surrogate_def_class(&s, y, &m, &cm, 1.0).unwrap();
        assert!((diff - (total - 1.0) * phis).abs() < 1e-12);
    }

    #[test]
    fn margin_surrogate_dominates_zero_one() {
        for s in [[0.0, 0.0, 0.0], [1.0, 2.0, 0.5], [0.3, 0.3, -1.0]] {
            let top = argmax(&s);
            for j in 0..3 {
                let strict = (0..3).all(|k| k == j || s[j] > s[k]);
                if !strict {
                    assert!(phi_cls_rho_u(&s, j, 1.0, 1.0) >= LN2 - 1e-15, "{s:?} {j} {top}");
                }
            }
        }
    }

    #[test]
    fn action_space_mapping() {
        let a = ActionSpace::classification(3, 2);
        assert_eq!(a.size(), 5);
        assert_eq!(a.expert_of(4), Some(1));
        assert_eq!(a.expert_of(2), None);
        let r = ActionSpace::regression(2);
        assert_eq!(r.size(), 3);
        assert_eq!(r.expert_action(1), 2);
        assert_eq!(r.expert_of(0), None);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
    }
}
