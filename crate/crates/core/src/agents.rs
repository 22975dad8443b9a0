//! Simulated expert panels and the per-action cost model.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attacks::{graph_objective, pgd_ascend, AttackPlan, PerturbationBall};
use crate::data::{Dataset, Targets};
use crate::diffcore::ScoreModel;
use crate::surrogates::base_loss_var;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertKind {
    /// Correct with probability `p` on `classes`, uniform over all classes otherwise.
    ClassSpecialist { classes: Vec<usize>, p: f64 },
    /// Correct with probability `p` on every class.
    ClassBernoulli { p: f64 },
    /// `t + σ·ε` with `σ = sigma_in` when `x[feature] ∈ [lo, hi]`, else `sigma_out`.
    RegSpecialist {
        feature: usize,
        lo: f64,
        hi: f64,
        sigma_in: f64,
        sigma_out: f64,
    },
    /// `t + σ·ε`.
    RegNoisy { sigma: f64 },
}

impl ExpertKind {
    pub fn is_classification(&self) -> bool {
        matches!(self, ExpertKind::ClassSpecialist { .. } | ExpertKind::ClassBernoulli { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub id: usize,
    #[serde(flatten)]
    pub kind: ExpertKind,
}

/// Cached expert outputs, indexed by dataset example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertCache {
    /// Row-major `n × J`.
    Labels { n: usize, j: usize, data: Vec<usize> },
    /// `values[i][j]` is expert `j`'s output vector on example `i`.
    Values { j: usize, values: Vec<Vec<Vec<f64>>> },
}

/// One example's expert outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpertRow<'a> {
    Labels(&'a [usize]),
    Values(&'a [Vec<f64>]),
}

impl ExpertCache {
    pub fn num_examples(&self) -> usize {
        match self {
            ExpertCache::Labels { n, .. } => *n,
            ExpertCache::Values { values, .. } => values.len(),
        }
    }

    pub fn num_experts(&self) -> usize {
        match self {
            ExpertCache::Labels { j, .. } | ExpertCache::Values { j, .. } => *j,
        }
    }

    pub fn row(&self, i: usize) -> ExpertRow<'_> {
        match self {
            ExpertCache::Labels { j, data, .. } => ExpertRow::Labels(&data[i * j..(i + 1) * j]),
            ExpertCache::Values { values, .. } => ExpertRow::Values(&values[i]),
        }
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        match self.row(i) {
            ExpertRow::Labels(m) => m,
            ExpertRow::Values(_) => panic!("regression cache has no labels"),
        }
    }

    pub fn values(&self, i: usize) -> &[Vec<f64>] {
        match self.row(i) {
            ExpertRow::Values(m) => m,
            ExpertRow::Labels(_) => panic!("classification cache has no values"),
        }
    }

    /// CSV with columns `example_id, expert_id, output`; vector outputs are
    /// `;`-joined.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["example_id", "expert_id", "output"])?;
        for i in 0..self.num_examples() {
            match self.row(i) {
                ExpertRow::Labels(m) => {
                    for (j, v) in m.iter().enumerate() {
                        out.write_record([i.to_string(), j.to_string(), v.to_string()])?;
                    }
                }
                ExpertRow::Values(m) => {
                    for (j, v) in m.iter().enumerate() {
                        let joined: Vec<String> = v.iter().map(|a| a.to_string()).collect();
                        out.write_record([i.to_string(), j.to_string(), joined.join(";")])?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPanel {
    pub experts: Vec<ExpertSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<ExpertCache>,
}

impl ExpertPanel {
    pub fn new(kinds: Vec<ExpertKind>) -> Self {
        Self {
            experts: kinds
                .into_iter()
                .enumerate()
                .map(|(id, kind)| ExpertSpec { id, kind })
                .collect(),
            cache: None,
        }
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    /// Fills the cache for `dataset`.
    pub fn populate(&mut self, dataset: &Dataset, seed: u64) -> Result<&ExpertCache> {
        self.cache = Some(sample_expert_outputs(self, dataset, seed)?);
        Ok(self.cache.as_ref().expect("just set"))
    }

    pub fn cache(&self) -> Result<&ExpertCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::config("expert panel has no cached outputs"))
    }
}

fn check_panel(panel: &ExpertPanel, dataset: &Dataset) -> Result<()> {
    let mut errs = Vec::new();
    let cls = dataset.is_classification();
    for e in &panel.experts {
        if e.kind.is_classification() != cls {
            errs.push(format!(
                "expert {}: {} expert on {} data",
                e.id,
                if cls { "regression" } else { "classification" },
                if cls { "classification" } else { "regression" }
            ));
            continue;
        }
        match &e.kind {
            ExpertKind::ClassSpecialist { classes, p } => {
                let k = dataset.num_classes().unwrap_or(0);
                if let Some(c) = classes.iter().find(|c| **c >= k) {
                    errs.push(format!("expert {}: assigned class {c} outside 0..{k}", e.id));
                }
                if !(0.0..=1.0).contains(p) {
                    errs.push(format!("expert {}: p must lie in [0,1]", e.id));
                }
            }
            ExpertKind::ClassBernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    errs.push(format!("expert {}: p must lie in [0,1]", e.id));
                }
            }
            ExpertKind::RegSpecialist {
                feature,
                sigma_in,
                sigma_out,
                ..
            } => {
                if *feature >= dataset.dim() {
                    errs.push(format!("expert {}: feature {feature} outside input dimension", e.id));
                }
                if !(*sigma_in >= 0.0 && *sigma_out >= 0.0) {
                    errs.push(format!("expert {}: noise scales must be >= 0", e.id));
                }
            }
            ExpertKind::RegNoisy { sigma } => {
                if !(*sigma >= 0.0) {
                    errs.push(format!("expert {}: sigma must be >= 0", e.id));
                }
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Draws every expert's output on every example of `dataset`. Expert `j`
/// uses its own ChaCha stream of `seed`, so outputs do not depend on the
/// other panel members.
pub fn sample_expert_outputs(panel: &ExpertPanel, dataset: &Dataset, seed: u64) -> Result<ExpertCache> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_panel(panel, dataset)?;
    let n = dataset.len();
    let jn = panel.len();
    match &dataset.targets {
        Targets::Labels { classes, labels } => {
            let mut data = vec![0usize; n * jn];
            for (j, e) in panel.experts.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let (assigned, p): (Option<&[usize]>, f64) = match &e.kind {
                    ExpertKind::ClassSpecialist { classes, p } => (Some(classes), *p),
                    ExpertKind::ClassBernoulli { p } => (None, *p),
                    _ => unreachable!("checked by check_panel"),
                };
                for (i, &y) in labels.iter().enumerate() {
                    let on_duty = assigned.is_none_or(|c| c.contains(&y));
                    let hit: f64 = rng.random();
                    let uniform = rng.random_range(0..*classes);
                    data[i * jn + j] = if on_duty && hit < p { y } else { uniform };
                }
            }
            Ok(ExpertCache::Labels { n, j: jn, data })
        }
        Targets::Values { values, .. } => {
            let mut out = vec![Vec::with_capacity(jn); n];
            for (j, e) in panel.experts.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                for (i, t) in values.iter().enumerate() {
                    let sigma = match &e.kind {
                        ExpertKind::RegNoisy { sigma } => *sigma,
                        ExpertKind::RegSpecialist {
                            feature,
                            lo,
                            hi,
                            sigma_in,
                            sigma_out,
                        } => {
                            let v = dataset.x(i)[*feature];
                            if v >= *lo && v <= *hi {
                                *sigma_in
                            } else {
                                *sigma_out
                            }
                        }
                        _ => unreachable!("checked by check_panel"),
                    };
                    let m: Vec<f64> = t
                        .iter()
                        .map(|tv| {
                            let eps: f64 = StandardNormal.sample(&mut rng);
                            tv + sigma * eps
                        })
                        .collect();
                    out[i].push(m);
                }
            }
            Ok(ExpertCache::Values { j: jn, values: out })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    #[default]
    Squared,
    Absolute,
}

impl BaseLoss {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            BaseLoss::Squared => d.map(|v| v * v).sum(),
            BaseLoss::Absolute => d.map(f64::abs).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// Reject deferral actions with `α + β > 1` in classification.
    #[default]
    Strict,
    Unclamped,
}

/// Per-action scales `α` and fees `β`, one entry per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub base_loss: BaseLoss,
    #[serde(default)]
    pub clamp: ClampPolicy,
}

impl CostModel {
    /// `α = 1` everywhere, `β = 0` on prediction actions and `fees` on the
    /// `J = fees.len()` deferral actions.
    pub fn classification(k: usize, fees: &[f64]) -> Self {
        let mut betas = vec![0.0; k];
        betas.extend_from_slice(fees);
        Self {
            alphas: vec![1.0; k + fees.len()],
            betas,
            base_loss: BaseLoss::Squared,
            clamp: ClampPolicy::Strict,
        }
    }

    /// Like [`CostModel::classification`] but with `α_j = 1 − β_j` on the
    /// deferral actions, so every cost stays in `[0, 1]`.
    pub fn classification_capped(k: usize, fees: &[f64]) -> Self {
        let mut cm = Self::classification(k, fees);
        for (a, b) in cm.alphas[k..].iter_mut().zip(fees) {
            *a = 1.0 - b;
        }
        cm
    }

    /// Action 0 is the predictor (`fees[0]`, usually 0); actions `1..=J` the experts.
    pub fn regression(fees: &[f64], base_loss: BaseLoss) -> Self {
        Self {
            alphas: vec![1.0; fees.len()],
            betas: fees.to_vec(),
            base_loss,
            clamp: ClampPolicy::Unclamped,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.alphas.len()
    }

    /// Checks the model against an action space; every violation is listed.
    /// `k` is the number of classes for classification, `None` for regression.
    pub fn validate(&self, actions: usize, k: Option<usize>) -> Result<()> {
        let mut errs = Vec::new();
        if self.alphas.len() != actions {
            errs.push(format!("cost.alphas has {} entries, expected {actions}", self.alphas.len()));
        }
        if self.betas.len() != actions {
            errs.push(format!("cost.betas has {} entries, expected {actions}", self.betas.len()));
        }
        for (name, vals) in [("alphas", &self.alphas), ("betas", &self.betas)] {
            for (j, v) in vals.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    errs.push(format!("cost.{name}[{j}] = {v} must be finite and >= 0"));
                }
            }
        }
        if let (Some(k), ClampPolicy::Strict) = (k, self.clamp) {
            for (j, (a, b)) in self.alphas.iter().zip(&self.betas).enumerate().skip(k) {
                if a + b > 1.0 + 1e-12 {
                    errs.push(format!(
                        "cost action {j}: alpha + beta = {} exceeds 1 under the strict clamp policy",
                        a + b
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Shifted cost `μ_j`: `α_j·1{j≠y} + β_j` for `j < K`, and
/// `α_j·1{m_{j−K}≠y} + β_j` for deferral actions.
pub fn cost_class(cm: &CostModel, k: usize, j: usize, m: &[usize], y: usize) -> Result<f64> {
    let actions = k + m.len();
    if j >= actions || j >= cm.num_actions() {
        return Err(Error::Contract(format!(
            "action {j} outside classification action space of size {actions}"
        )));
    }
    let wrong = if j < k { j != y } else { m[j - k] != y };
    Ok(cm.alphas[j] * if wrong { 1.0 } else { 0.0 } + cm.betas[j])
}

/// All shifted costs `μ_0..μ_{K+J−1}`.
pub fn shifted_costs(cm: &CostModel, k: usize, m: &[usize], y: usize) -> Result<Vec<f64>> {
    (0..k + m.len()).map(|j| cost_class(cm, k, j, m, y)).collect()
}

/// Regression cost: `α_0 L(f(x), t) + β_0` for action 0 and
/// `α_j L(m_{j−1}, t) + β_j` otherwise.
pub fn cost_reg(cm: &CostModel, j: usize, f_out: &[f64], m: &[Vec<f64>], t: &[f64]) -> Result<f64> {
    if j > m.len() || j >= cm.num_actions() {
        return Err(Error::Contract(format!(
            "action {j} outside regression action space of size {}",
            m.len() + 1
        )));
    }
    let out = if j == 0 { f_out } else { &m[j - 1] };
    Ok(cm.alphas[j] * cm.base_loss.eval(out, t) + cm.betas[j])
}

pub fn costs_reg(cm: &CostModel, f_out: &[f64], m: &[Vec<f64>], t: &[f64]) -> Result<Vec<f64>> {
    (0..=m.len()).map(|j| cost_reg(cm, j, f_out, m, t)).collect()
}

/// Predictor cost with the predictor evaluated at its worst point of the
/// ball: `α_0 · sup L(f(x'), t) + β_0`, the sup estimated by PGD plus the centre.
pub fn cost_reg_pred_adv(
    cm: &CostModel,
    f: &ScoreModel,
    x: &[f64],
    t: &[f64],
    ball: &PerturbationBall,
    plan: &AttackPlan,
    stream: u64,
) -> Result<f64> {
    let loss = |p: &[f64]| -> Result<f64> { Ok(cm.base_loss.eval(&f.scores(p)?, t)) };
    let mut sup = loss(x)?;
    if ball.gamma > 0.0 {
        let obj = graph_objective(|g, xv| {
            let out = f.bind(g).forward(xv)?;
            Ok(base_loss_var(cm.base_loss, out, t))
        });
        let res = pgd_ascend(&obj, x, ball, plan, stream)?;
        for v in std::iter::once(&res.point)
            .chain(ball.vertices(x).iter())
            .map(|p| loss(p))
        {
            sup = sup.max(v?);
        }
    }
    if !sup.is_finite() {
        return Err(Error::NonFinite {
            context: "adversarial predictor cost".into(),
            iteration: plan.steps,
        });
    }
    Ok(cm.alphas[0] * sup + cm.betas[0])
}

/// `τ_j = Σ_{i≠j} c_i`.
pub fn tau_weights(costs: &[f64]) -> Vec<f64> {
    let total: f64 = costs.iter().sum();
    costs.iter().map(|c| total - c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;

    #[test]
    fn tau_examples() {
        assert_eq!(tau_weights(&[1.0, 2.0, 3.0]), vec![5.0, 4.0, 3.0]);
        assert_eq!(tau_weights(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(tau_weights(&[2.5, 0.0, 0.0]), vec![0.0, 2.5, 2.5]);
    }

    #[test]
    fn shifted_cost_examples() {
        let cm = CostModel::classification(3, &[0.05]);
        assert_eq!(cost_class(&cm, 3, 1, &[0], 1).unwrap(), 0.0);
        assert_eq!(cost_class(&cm, 3, 2, &[0], 1).unwrap(), 1.0);
        assert_eq!(cost_class(&cm, 3, 3, &[1], 1).unwrap(), 0.05);
        assert!(matches!(cost_class(&cm, 3, 4, &[1], 1), Err(Error::Contract(_))));
    }

    #[test]
    fn regression_cost_examples() {
        let cm = CostModel::regression(&[0.0, 0.04], BaseLoss::Squared);
        assert_eq!(cost_reg(&cm, 0, &[1.5], &[vec![0.0]], &[1.5]).unwrap(), 0.0);
        assert!((cost_reg(&cm, 1, &[0.0], &[vec![3.0]], &[1.0]).unwrap() - 4.04).abs() < 1e-12);
        let mut zero = cm.clone();
        zero.alphas[1] = 0.0;
        assert_eq!(cost_reg(&zero, 1, &[0.0], &[vec![100.0]], &[1.0]).unwrap(), 0.04);
    }

    #[test]
    fn strict_clamp_lists_every_violation() {
        let cm = CostModel::classification(2, &[0.05, 0.1]);
        match cm.validate(4, Some(2)) {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(CostModel::classification_capped(2, &[0.05, 0.1]).validate(4, Some(2)).is_ok());
        let mut loose = cm.clone();
        loose.clamp = ClampPolicy::Unclamped;
        assert!(loose.validate(4, Some(2)).is_ok());
    }

    #[test]
    fn oracle_expert_and_determinism() {
        let ds = gen_blobs(3, 2, 60, 4.0, 1).unwrap();
        let mut panel = ExpertPanel::new(vec![
            ExpertKind::ClassSpecialist {
                classes: vec![0, 1, 2],
                p: 1.0,
            },
            ExpertKind::ClassBernoulli { p: 0.5 },
        ]);
        let a = panel.populate(&ds, 9).unwrap().clone();
        for i in 0..ds.len() {
            assert_eq!(a.labels(i)[0], ds.label(i));
        }
        let b = sample_expert_outputs(&panel, &ds, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regression_expert_on_labels_is_rejected() {
        let ds = gen_blobs(2, 2, 10, 4.0, 1).unwrap();
        let panel = ExpertPanel::new(vec![ExpertKind::RegNoisy { sigma: 1.0 }]);
        assert!(matches!(sample_expert_outputs(&panel, &ds, 0), Err(Error::Config(_))));
    }

    #[test]
    fn cache_csv_layout() {
        let cache = ExpertCache::Labels {
            n: 2,
            j: 2,
            data: vec![0, 1, 2, 0],
        };
        let mut buf = Vec::new();
        cache.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "example_id,expert_id,output\n0,0,0\n0,1,1\n1,0,2\n1,1,0\n");
    }
}
