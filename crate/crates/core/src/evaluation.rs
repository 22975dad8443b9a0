//! Decision rules, clean/untargeted/targeted metrics and report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{CostModel, ExpertPanel};
use crate::attacks::{targeted_attack, untargeted_attack_class, untargeted_attack_reg, AttackPlan, PerturbationBall};
use crate::data::Dataset;
use crate::diffcore::ScoreModel;
use crate::exec::{try_map_range, Execution};
use crate::surrogates::{self, argmax, SurrogateParams, Threat};
use crate::training::System;
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "deferkit-report-v1";

/// `argmax h(x)`, lowest index on ties.
pub fn decide_class(h: &ScoreModel, x: &[f64]) -> Result<usize> {
    Ok(argmax(&h.scores(x)?))
}

/// Rejector decision and the system output: `f(x)` for action 0, the cached
/// expert output otherwise.
pub fn decide_reg(r: &ScoreModel, f: &ScoreModel, x: &[f64], m: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let d = argmax(&r.scores(x)?);
    let out = if d == 0 { f.scores(x)? } else { m[d - 1].clone() };
    Ok((d, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Clean,
    Untargeted,
    Targeted(usize),
}

impl AttackMode {
    pub fn label(&self) -> &'static str {
        match self {
            AttackMode::Clean => "clean",
            AttackMode::Untargeted => "untargeted",
            AttackMode::Targeted(_) => "targeted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralRecord {
    pub example_id: usize,
    pub decision: usize,
    pub deferred_to: Option<usize>,
    pub realized_cost: f64,
    /// Classification only.
    pub correct: Option<bool>,
    /// Squared error of the system output (regression only).
    pub sq_error: Option<f64>,
    pub attack: AttackMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: AttackMode,
    /// Accuracy in % for classification, RMSE for regression.
    pub metric: f64,
    /// Mean realized true deferral loss at the evaluated inputs.
    pub realized_def_loss: f64,
    /// Fractions for the predictor followed by each expert; sums to 1.
    pub deferral_rate: Vec<f64>,
    /// Targeted mode: fraction of examples on which the policy chose `ν`.
    pub attack_success: Option<f64>,
    #[serde(skip)]
    pub records: Vec<DeferralRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub run_id: String,
    pub task: String,
    pub n: usize,
    pub gamma: f64,
    pub c_acc: Option<f64>,
    pub u_acc: Option<f64>,
    pub t_acc: Option<f64>,
    pub nu: Option<usize>,
    /// Probe-estimated adversarial true deferral loss (a lower bound).
    pub def_loss: f64,
    /// Deferral rates on clean inputs.
    pub deferral_rate: Vec<f64>,
    pub modes: Vec<ModeReport>,
    pub config_hash: String,
}

/// Inputs shared by every evaluation mode.
#[derive(Debug, Clone, Copy)]
pub struct EvalSetup<'a> {
    pub dataset: &'a Dataset,
    /// Example ids to evaluate (usually the test split).
    pub ids: &'a [usize],
    pub panel: &'a ExpertPanel,
    pub cm: &'a CostModel,
    pub params: &'a SurrogateParams,
    pub ball: &'a PerturbationBall,
    pub plan: &'a AttackPlan,
    pub execution: Execution,
}

/// The input example `i` is evaluated at under `mode`.
pub fn attacked_input(system: &System, setup: &EvalSetup<'_>, mode: AttackMode, i: usize) -> Result<Vec<f64>> {
    let ds = setup.dataset;
    let cache = setup.panel.cache()?;
    let x = ds.x(i);
    let stream = (i as u64) << 16 | 0xffe;
    let u = setup.params.u;
    Ok(match (mode, system) {
        (AttackMode::Clean, _) => x.to_vec(),
        (AttackMode::Untargeted, System::Classification { h }) => {
            untargeted_attack_class(h, x, ds.label(i), cache.labels(i), setup.cm, u, setup.ball, setup.plan, stream)?.point
        }
        (AttackMode::Untargeted, System::Regression { r, f }) => {
            untargeted_attack_reg(r, f, x, ds.value(i), cache.values(i), setup.cm, u, setup.ball, setup.plan, stream)?.point
        }
        (AttackMode::Targeted(nu), s) => targeted_attack(s.policy(), x, nu, setup.ball, setup.plan, u, stream)?.point,
    })
}

/// [`attacked_input`] for every id in `setup.ids`, in order.
pub fn attacked_inputs(system: &System, setup: &EvalSetup<'_>, mode: AttackMode) -> Result<Vec<Vec<f64>>> {
    try_map_range(setup.execution, setup.ids.len(), |b| attacked_input(system, setup, mode, setup.ids[b]))
}

/// Runs one attack mode over `setup.ids`.
pub fn evaluate(system: &System, setup: &EvalSetup<'_>, mode: AttackMode) -> Result<ModeReport> {
    let actions = system.policy().output_dim();
    if let AttackMode::Targeted(nu) = mode {
        if nu >= actions {
            return Err(Error::config(format!("eval.nu = {nu} outside the action space of size {actions}")));
        }
    }
    if setup.ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ds = setup.dataset;
    let cache = setup.panel.cache()?;
    let jn = cache.num_experts();
    let records = try_map_range(setup.execution, setup.ids.len(), |b| -> Result<DeferralRecord> {
        let i = setup.ids[b];
        let xa = attacked_input(system, setup, mode, i)?;
        Ok(match system {
            System::Classification { h } => {
                let (y, m) = (ds.label(i), cache.labels(i));
                let k = actions - jn;
                let d = decide_class(h, &xa)?;
                let correct = if d < k { d == y } else { m[d - k] == y };
                DeferralRecord {
                    example_id: i,
                    decision: d,
                    deferred_to: d.checked_sub(k),
                    realized_cost: surrogates::true_def_loss_class(d, k, y, m, setup.cm),
                    correct: Some(correct),
                    sq_error: None,
                    attack: mode,
                }
            }
            System::Regression { r, f } => {
                let (t, m) = (ds.value(i), cache.values(i));
                let (d, out) = decide_reg(r, f, &xa, m)?;
                let f_out = f.scores(&xa)?;
                DeferralRecord {
                    example_id: i,
                    decision: d,
                    deferred_to: d.checked_sub(1),
                    realized_cost: surrogates::true_def_loss_reg(d, &f_out, t, m, setup.cm)?,
                    correct: None,
                    sq_error: Some(out.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum()),
                    attack: mode,
                }
            }
        })
    })?;
    let n = records.len() as f64;
    let metric = match system {
        System::Classification { .. } => 100.0 * records.iter().filter(|r| r.correct == Some(true)).count() as f64 / n,
        System::Regression { .. } => (records.iter().filter_map(|r| r.sq_error).sum::<f64>() / n).sqrt(),
    };
    let mut rate = vec![0.0; jn + 1];
    for r in &records {
        rate[r.deferred_to.map_or(0, |e| e + 1)] += 1.0 / n;
    }
    let attack_success = match mode {
        AttackMode::Targeted(nu) => Some(records.iter().filter(|r| r.decision == nu).count() as f64 / n),
        _ => None,
    };
    Ok(ModeReport {
        mode,
        metric,
        realized_def_loss: records.iter().map(|r| r.realized_cost).sum::<f64>() / n,
        deferral_rate: rate,
        attack_success,
        records,
    })
}

/// Mean probe-estimated adversarial true deferral loss over `setup.ids`.
pub fn probe_def_loss(system: &System, setup: &EvalSetup<'_>) -> Result<f64> {
    let ds = setup.dataset;
    let cache = setup.panel.cache()?;
    let vals = try_map_range(setup.execution, setup.ids.len(), |b| -> Result<f64> {
        let i = setup.ids[b];
        let threat = Threat {
            params: setup.params,
            ball: setup.ball,
            plan: setup.plan,
            example: i as u64,
        };
        match system {
            System::Classification { h } => {
                surrogates::adv_true_def_loss_class(h, ds.x(i), ds.label(i), cache.labels(i), setup.cm, &threat)
            }
            System::Regression { r, f } => {
                surrogates::adv_true_def_loss_reg(r, f, ds.x(i), ds.value(i), cache.values(i), setup.cm, &threat)
            }
        }
    })?;
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

/// Default targeted action: the last expert's deferral action.
pub fn default_nu(system: &System) -> usize {
    system.policy().output_dim() - 1
}

/// Evaluates every mode in `modes` and assembles the report.
pub fn evaluate_report(
    system: &System,
    setup: &EvalSetup<'_>,
    modes: &[AttackMode],
    run_id: &str,
    config_hash: &str,
) -> Result<MetricReport> {
    let mut reports = Vec::with_capacity(modes.len());
    for m in modes {
        reports.push(evaluate(system, setup, *m)?);
    }
    let pick = |label: &str| reports.iter().find(|r| r.mode.label() == label).map(|r| r.metric);
    let clean_rates = match reports.iter().find(|r| r.mode == AttackMode::Clean) {
        Some(r) => r.deferral_rate.clone(),
        None => evaluate(system, setup, AttackMode::Clean)?.deferral_rate,
    };
    Ok(MetricReport {
        schema: REPORT_SCHEMA.into(),
        run_id: run_id.into(),
        task: match system {
            System::Classification { .. } => "classification".into(),
            System::Regression { .. } => "regression".into(),
        },
        n: setup.ids.len(),
        gamma: setup.ball.gamma,
        c_acc: pick("clean"),
        u_acc: pick("untargeted"),
        t_acc: pick("targeted"),
        nu: modes.iter().find_map(|m| match m {
            AttackMode::Targeted(nu) => Some(*nu),
            _ => None,
        }),
        def_loss: probe_def_loss(system, setup)?,
        deferral_rate: clean_rates,
        modes: reports,
        config_hash: config_hash.into(),
    })
}

pub const CSV_FIXED_COLUMNS: [&str; 10] = [
    "run_id",
    "config_hash",
    "task",
    "attack_mode",
    "nu",
    "c_metric",
    "u_metric",
    "t_metric",
    "def_loss",
    "defer_rate_pred",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricReport {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = CSV_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        let jn = self.deferral_rate.len().saturating_sub(1);
        h.extend((1..=jn).map(|e| format!("defer_rate_e{e}")));
        h
    }

    /// One row per evaluated mode; the deferral rates are that mode's.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.modes
            .iter()
            .map(|m| {
                let mut row = vec![
                    self.run_id.clone(),
                    self.config_hash.clone(),
                    self.task.clone(),
                    m.mode.label().to_string(),
                    self.nu.map(|v| v.to_string()).unwrap_or_default(),
                    opt(self.c_acc),
                    opt(self.u_acc),
                    opt(self.t_acc),
                    self.def_loss.to_string(),
                ];
                row.extend(m.deferral_rate.iter().map(|r| r.to_string()));
                row
            })
            .collect()
    }
}

/// Writes `<stem>.json` and `<stem>.csv`, returning both paths.
pub fn emit_report(report: &MetricReport, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let stem = stem.as_ref();
    let json = stem.with_extension("json");
    let csvp = stem.with_extension("csv");
    std::fs::write(&json, serde_json::to_string_pretty(report)?)?;
    let mut w = csv::Writer::from_path(&csvp)?;
    w.write_record(report.csv_header())?;
    for row in report.csv_rows() {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok((json, csvp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_examples() {
        let h = ScoreModel::constant(1, &[0.1, 0.9, 0.3]);
        assert_eq!(decide_class(&h, &[0.0]).unwrap(), 1);
        let h = ScoreModel::constant(1, &[0.1, 0.3, 0.9]);
        assert_eq!(decide_class(&h, &[0.0]).unwrap(), 2);
        let h = ScoreModel::constant(1, &[1.0, 1.0, 0.0]);
        assert_eq!(decide_class(&h, &[0.0]).unwrap(), 0);

        let f = ScoreModel::constant(1, &[3.2]);
        let m = [vec![7.0]];
        let r = ScoreModel::constant(1, &[0.9, 0.1]);
        assert_eq!(decide_reg(&r, &f, &[0.0], &m).unwrap(), (0, vec![3.2]));
        let r = ScoreModel::constant(1, &[0.1, 0.9]);
        assert_eq!(decide_reg(&r, &f, &[0.0], &m).unwrap(), (1, vec![7.0]));
        let r = ScoreModel::constant(1, &[0.5, 0.5]);
        assert_eq!(decide_reg(&r, &f, &[0.0], &m).unwrap().0, 0);
    }

    #[test]
    fn mode_serialization() {
        assert_eq!(serde_json::to_string(&AttackMode::Targeted(4)).unwrap(), r#"{"targeted":4}"#);
        assert_eq!(serde_json::to_string(&AttackMode::Clean).unwrap(), r#""clean""#);
    }
}
