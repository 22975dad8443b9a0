//! Brute-force verifiers for small instances.
//!
//! Everything here is deliberately self-contained: the loss formulas are
//! re-derived locally instead of calling into [`crate::surrogates`], so the
//! checks can catch mistakes there rather than repeat them.

use crate::agents::{cost_class, CostModel};
use crate::attacks::{Norm, PerturbationBall};
use crate::exec::{self, Execution};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_GRID_RESOLUTION: usize = 1001;
pub const VERIFY_SCHEMA: &str = "deferkit-verify-v1";
const GAP_TOL: f64 = 1e-6;

/// Finite inputs with their conditional expected costs `μ̄_j(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub points: Vec<Vec<f64>>,
    pub cond_costs: Vec<Vec<f64>>,
}

impl DiscreteInstance {
    pub fn new(points: Vec<Vec<f64>>, cond_costs: Vec<Vec<f64>>) -> Result<Self> {
        let mut errs = Vec::new();
        if points.len() != cond_costs.len() {
            errs.push(format!("{} points but {} cost vectors", points.len(), cond_costs.len()));
        }
        let actions = cond_costs.first().map_or(0, Vec::len);
        for (i, c) in cond_costs.iter().enumerate() {
            if c.is_empty() {
                errs.push(format!("point {i} has no actions"));
            }
            if c.len() != actions {
                errs.push(format!("point {i} has {} actions, expected {actions}", c.len()));
            }
            if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
                errs.push(format!("point {i} has a negative or non-finite cost"));
            }
        }
        if errs.is_empty() {
            Ok(Self { points, cond_costs })
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.cond_costs.first().map_or(0, Vec::len)
    }
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn first_argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// `(min_j μ̄_j(x), argmin)` at point `point`; ties go to the lowest index.
pub fn bayes_conditional_risk(inst: &DiscreteInstance, point: usize) -> Result<(f64, usize)> {
    let c = inst.cond_costs.get(point).ok_or_else(|| {
        Error::Contract(format!("point {point} not in an instance of {} points", inst.len()))
    })?;
    let j = first_argmin(c);
    Ok((c[j], j))
}

/// Decisions observed on a dense grid over the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    /// Sorted, distinct.
    pub actions: Vec<usize>,
    pub resolution: usize,
    pub points_evaluated: usize,
}

impl Reachability {
    pub fn contains(&self, j: usize) -> bool {
        self.actions.binary_search(&j).is_ok()
    }
}

fn axis(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    if resolution <= 1 || hi <= lo {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    let mut v: Vec<f64> = (0..resolution).map(|i| lo + step * i as f64).collect();
    // land exactly on the far edge
    *v.last_mut().unwrap() = hi;
    v
}

/// Grid over the ball: `resolution` points per coordinate spanning the
/// box-cut interval (edges included), filtered to the ball, plus the centre.
pub fn ball_grid(x: &[f64], ball: &PerturbationBall, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if x.len() > 2 {
        return Err(Error::Unsupported(format!(
            "exact reachability needs input dimension <= 2, got {}",
            x.len()
        )));
    }
    if resolution == 0 {
        return Err(Error::config("grid resolution must be positive"));
    }
    let axes: Vec<Vec<f64>> = x
        .iter()
        .map(|&c| {
            let (lo, hi) = ball.coordinate_range(c);
            axis(lo, hi, resolution)
        })
        .collect();
    let mut pts = vec![x.to_vec()];
    let mut push = |p: Vec<f64>| {
        if ball.p == Norm::LInf || ball.contains(&p, x) {
            pts.push(p);
        }
    };
    match axes.len() {
        0 => {}
        1 => axes[0].iter().for_each(|&a| push(vec![a])),
        _ => {
            for &a in &axes[0] {
                for &b in &axes[1] {
                    push(vec![a, b]);
                }
            }
        }
    }
    Ok(pts)
}

/// Every action decided somewhere on the grid over `B_p(x, γ)`.
///
/// On an ℓ∞ ball the grid includes all vertices, so the result is exact for
/// any policy whose decision regions are half-spaces. In general it can only
/// under-report, and converges as `resolution` grows.
pub fn exact_reachability<F>(scores: F, x: &[f64], ball: &PerturbationBall, resolution: usize) -> Result<Reachability>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let grid = ball_grid(x, ball, resolution)?;
    let mut actions = Vec::new();
    for p in &grid {
        actions.push(first_argmax(&scores(p)?));
    }
    actions.sort_unstable();
    actions.dedup();
    Ok(Reachability { actions, resolution, points_evaluated: grid.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub decision: usize,
    /// Class predicted alongside a deferral; irrelevant to the loss.
    pub prediction: usize,
    pub label: usize,
    pub expert_outputs: Vec<usize>,
    pub expected: f64,
    pub got: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheck {
    pub k: usize,
    pub j: usize,
    pub tuples: usize,
    pub counterexample: Option<Counterexample>,
}

impl LossCheck {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Two-stage form: a predicted class `h` and an allocation `r` where `0`
/// keeps the prediction and `e ≥ 1` defers to expert `e − 1`.
fn two_stage_loss(h: usize, r: usize, y: usize, m: &[usize], alphas: &[f64], betas: &[f64]) -> f64 {
    if r == 0 {
        if h != y { 1.0 } else { 0.0 }
    } else {
        let e = r - 1;
        alphas[e] * if m[e] != y { 1.0 } else { 0.0 } + betas[e]
    }
}

fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Enumerates every decision, label and expert-output tuple and compares
/// `Σ_j μ_j 1{decision = j}` (through `mu(decision, m, y)`) with the
/// two-stage deferral loss. Expert `e` has coefficients `alphas[e]`,
/// `betas[e]`. Stops at the first mismatch.
pub fn exhaustive_true_loss_check<F>(k: usize, alphas: &[f64], betas: &[f64], mu: F) -> LossCheck
where
    F: Fn(usize, &[usize], usize) -> f64,
{
    let j = alphas.len();
    assert_eq!(betas.len(), j, "one fee per expert");
    let mut tuples = 0;
    let mut m = vec![0usize; j];
    loop {
        for y in 0..k {
            for decision in 0..k + j {
                let got = mu(decision, &m, y);
                // the prediction paired with a deferral ranges over all classes
                let pairs: Vec<(usize, usize)> = if decision < k {
                    vec![(decision, 0)]
                } else {
                    (0..k).map(|h| (h, decision - k + 1)).collect()
                };
                for (h, r) in pairs {
                    tuples += 1;
                    let expected = two_stage_loss(h, r, y, &m, alphas, betas);
                    if (got - expected).abs() > 1e-12 {
                        return LossCheck {
                            k,
                            j,
                            tuples,
                            counterexample: Some(Counterexample {
                                decision,
                                prediction: h,
                                label: y,
                                expert_outputs: m.clone(),
                                expected,
                                got,
                            }),
                        };
                    }
                }
            }
        }
        if k == 0 || !odometer(&mut m, k) {
            break;
        }
    }
    LossCheck { k, j, tuples, counterexample: None }
}

/// [`exhaustive_true_loss_check`] against the library's shifted costs.
pub fn check_library_costs(k: usize, alphas: &[f64], betas: &[f64]) -> LossCheck {
    let mut a = vec![1.0; k];
    a.extend_from_slice(alphas);
    let mut b = vec![0.0; k];
    b.extend_from_slice(betas);
    let cm = CostModel { alphas: a, betas: b, ..CostModel::classification(k, betas) };
    exhaustive_true_loss_check(k, alphas, betas, |d, m, y| cost_class(&cm, k, d, m, y).unwrap_or(f64::NAN))
}

fn psi_u_local(v: f64, u: f64) -> f64 {
    if (u - 1.0).abs() < 1e-12 {
        (1.0 + v).ln()
    } else {
        ((1.0 + v).powf(1.0 - u) - 1.0) / (1.0 - u)
    }
}

fn rho_margin_loss(s: &[f64], j: usize, u: f64, rho: f64) -> f64 {
    let v: f64 = (0..s.len())
        .filter(|&k| k != j)
        .map(|k| (1.0 - (s[j] - s[k]) / rho).clamp(0.0, 1.0))
        .sum();
    psi_u_local(v, u)
}

/// Exact true and surrogate excess conditional risks of one policy at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGap {
    pub point: usize,
    pub reachable: Vec<usize>,
    pub true_gap: f64,
    pub surrogate_gap: f64,
    /// Best surrogate risk over constant-score policies and the policy itself;
    /// an upper bound on the infimum over all policies.
    pub surrogate_inf_approx: f64,
    /// The inequality checked is `true_gap ≤ factor · surrogate_gap + 1e−6`.
    pub factor: f64,
    pub holds: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn rec(i: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in i..cur.len() {
            cur.swap(i, k);
            rec(i + 1, cur, out);
            cur.swap(i, k);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// Score vectors of the constant-policy family: `t·e_j` one-hots and
/// `ρ`-spaced staircases over action orderings (all of them when there
/// are at most six actions, otherwise the cost-sorted one).
fn constant_family(w: &[f64], rho: f64) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut fam = vec![vec![0.0; n]];
    for j in 0..n {
        for t in [0.5, 1.0, 2.0] {
            let mut s = vec![0.0; n];
            s[j] = t * rho;
            fam.push(s);
        }
    }
    let orders = if n <= 6 {
        permutations(n)
    } else {
        let mut o: Vec<usize> = (0..n).collect();
        o.sort_by(|a, b| w[*b].total_cmp(&w[*a]));
        vec![o]
    };
    for o in orders {
        let mut s = vec![0.0; n];
        for (rank, &a) in o.iter().enumerate() {
            s[a] = (n - rank) as f64 * rho;
        }
        fam.push(s);
    }
    fam
}

/// Pointwise calibration gaps of `scores` on every point of `inst`.
///
/// The true side is exact up to grid resolution. The surrogate infimum is
/// approximated over [`constant_family`] plus the policy itself, so this is
/// a necessary-condition test rather than a proof. The factor is
/// `1 / Ψ^u(1)`: a misranked action costs at least `Ψ^u(1)` in the margin
/// surrogate but exactly one unit in the 0-1 loss.
pub fn calibration_gap_check<F>(
    inst: &DiscreteInstance,
    scores: F,
    u: f64,
    rho: f64,
    ball: &PerturbationBall,
    resolution: usize,
    execution: Execution,
) -> Result<Vec<PointGap>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let factor = 1.0 / psi_u_local(1.0, u);
    exec::try_map_range(execution, inst.len(), |i| {
        let mu = &inst.cond_costs[i];
        let n = mu.len();
        let grid = ball_grid(&inst.points[i], ball, resolution)?;
        let mut reach = vec![false; n];
        let mut sup = vec![0.0f64; n];
        for p in &grid {
            let s = scores(p)?;
            if s.len() != n {
                return Err(Error::Contract(format!("policy has {} actions, instance {n}", s.len())));
            }
            reach[first_argmax(&s)] = true;
            for (j, v) in sup.iter_mut().enumerate() {
                *v = v.max(rho_margin_loss(&s, j, u, rho));
            }
        }
        let total: f64 = mu.iter().sum();
        let w: Vec<f64> = mu.iter().map(|m| total - m).collect();
        let risk = |phi: &dyn Fn(usize) -> f64| (0..n).map(|j| w[j] * phi(j)).sum::<f64>();

        let true_risk: f64 = (0..n).filter(|&j| reach[j]).map(|j| mu[j]).sum();
        let true_gap = true_risk - mu[first_argmin(mu)];

        let policy_risk = risk(&|j| sup[j]);
        let inf = constant_family(&w, rho)
            .iter()
            .map(|s| risk(&|j| rho_margin_loss(s, j, u, rho)))
            .fold(policy_risk, f64::min);
        let surrogate_gap = policy_risk - inf;
        Ok(PointGap {
            point: i,
            reachable: (0..n).filter(|&j| reach[j]).collect(),
            true_gap,
            surrogate_gap,
            surrogate_inf_approx: inf,
            factor,
            holds: true_gap <= factor * surrogate_gap + GAP_TOL,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub passed: bool,
    pub witness: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub seed: u64,
    pub checks: Vec<NamedCheck>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_instance<R: Rng>(rng: &mut R, points: usize, dim: usize, actions: usize) -> DiscreteInstance {
    let pts = (0..points).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let costs = (0..points).map(|_| (0..actions).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    DiscreteInstance::new(pts, costs).expect("generated instance is valid")
}

/// Affine scores `a_j·x + b_j` for one input coordinate.
fn affine<'a>(a: &'a [f64], b: &'a [f64]) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a {
    move |x: &[f64]| Ok(a.iter().zip(b).map(|(ai, bi)| ai * x[0] + bi).collect())
}

/// Bayes identity, shifted-cost enumeration with a mutation control,
/// reachability sanity and a calibration sweep over random 1-D affine
/// policies.
pub fn run_verification(seed: u64, resolution: usize, execution: Execution) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // Bayes risk and a locally constant policy that attains it.
    let mut bayes_fail = None;
    for t in 0..100 {
        let actions = rng.random_range(1..=5);
        let dim = rng.random_range(1..=2);
        let inst = random_instance(&mut rng, 3, dim, actions);
        let ball = PerturbationBall::linf(rng.random_range(0.0..0.5));
        for i in 0..inst.len() {
            let (v, j) = bayes_conditional_risk(&inst, i)?;
            let min = inst.cond_costs[i].iter().cloned().fold(f64::INFINITY, f64::min);
            let mut s = vec![0.0; actions];
            s[j] = 1.0;
            let reach = exact_reachability(|_: &[f64]| Ok(s.clone()), &inst.points[i], &ball, resolution.min(101))?;
            let attained: f64 = reach.actions.iter().map(|&a| inst.cond_costs[i][a]).sum();
            if v != min || attained != v {
                bayes_fail.get_or_insert(json!({"trial": t, "point": i, "value": v, "min": min, "attained": attained}));
            }
        }
    }
    checks.push(NamedCheck {
        name: "bayes_identity".into(),
        passed: bayes_fail.is_none(),
        witness: bayes_fail.unwrap_or(json!({"instances": 100})),
    });

    // Shifted costs against the two-stage loss.
    let mut loss_fail = None;
    let mut tuples = 0;
    for k in 1..=3 {
        for j in 0..=2 {
            for (alpha, beta) in [(1.0, 0.0), (0.6, 0.15)] {
                let alphas = vec![alpha; j];
                let betas: Vec<f64> = (0..j).map(|e| beta * (e + 1) as f64).collect();
                let r = check_library_costs(k, &alphas, &betas);
                tuples += r.tuples;
                if !r.passed() && loss_fail.is_none() {
                    loss_fail = Some(serde_json::to_value(&r)?);
                }
            }
        }
    }
    checks.push(NamedCheck {
        name: "shifted_cost_enumeration".into(),
        passed: loss_fail.is_none(),
        witness: loss_fail.unwrap_or(json!({"tuples": tuples})),
    });

    let mutated = exhaustive_true_loss_check(2, &[1.0], &[0.0], |d, m, y| {
        let base = if d < 2 { (d != y) as u8 as f64 } else { (m[0] != y) as u8 as f64 };
        if d == 2 && y == 1 { base + 0.5 } else { base }
    });
    checks.push(NamedCheck {
        name: "mutation_control".into(),
        passed: !mutated.passed(),
        witness: serde_json::to_value(&mutated.counterexample)?,
    });

    let threshold = |x: &[f64]| Ok(vec![-x[0], x[0]]);
    let straddle = exact_reachability(threshold, &[0.05], &PerturbationBall::linf(0.1), resolution)?;
    let zero = exact_reachability(threshold, &[0.05], &PerturbationBall::linf(0.0), resolution)?;
    checks.push(NamedCheck {
        name: "reachability_threshold".into(),
        passed: straddle.actions == [0, 1] && zero.actions == [1],
        witness: json!({"straddle": straddle.actions, "gamma_zero": zero.actions}),
    });

    // Calibration sweep.
    let mut worst: Option<PointGap> = None;
    let mut evaluated = 0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 4, 1, 3);
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ball = PerturbationBall::linf(rng.random_range(0.0..0.4));
        let u = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        for g in calibration_gap_check(&inst, affine(&a, &b), u, 1.0, &ball, resolution, execution)? {
            evaluated += 1;
            let slack = g.factor * g.surrogate_gap - g.true_gap;
            if worst.as_ref().is_none_or(|w| slack < w.factor * w.surrogate_gap - w.true_gap) {
                worst = Some(g);
            }
        }
    }
    let worst = worst.expect("sweep is non-empty");
    checks.push(NamedCheck {
        name: "calibration_gap_sweep".into(),
        passed: worst.holds,
        witness: json!({"points": evaluated, "tightest": worst}),
    });

    Ok(VerificationReport { schema: VERIFY_SCHEMA.into(), seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bayes_examples() {
        let inst = DiscreteInstance::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![
            vec![0.3, 0.7, 0.1],
            vec![0.4, 0.4, 0.4],
            vec![0.9, 0.2, 0.5],
        ])
        .unwrap();
        assert_eq!(bayes_conditional_risk(&inst, 0).unwrap(), (0.1, 2));
        assert_eq!(bayes_conditional_risk(&inst, 1).unwrap(), (0.4, 0));
        let single = DiscreteInstance::new(vec![vec![0.0]], vec![vec![0.8]]).unwrap();
        assert_eq!(bayes_conditional_risk(&single, 0).unwrap(), (0.8, 0));
        assert!(bayes_conditional_risk(&inst, 3).is_err());
    }

    #[test]
    fn instance_validation_lists_everything() {
        match DiscreteInstance::new(vec![vec![0.0]], vec![vec![-1.0], vec![f64::NAN, 0.0]]) {
            Err(Error::Config(errs)) => assert!(errs.len() >= 3, "{errs:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reachability_examples() {
        let thr = |x: &[f64]| Ok(vec![0.3 - x[0], x[0] - 0.3]);
        let ball = PerturbationBall::linf(0.2);
        assert_eq!(exact_reachability(thr, &[0.2], &ball, 1001).unwrap().actions, vec![0, 1]);
        assert_eq!(exact_reachability(thr, &[0.0], &ball, 1001).unwrap().actions, vec![0]);
        let at_zero = exact_reachability(thr, &[0.2], &PerturbationBall::linf(0.0), 1001).unwrap();
        assert_eq!((at_zero.actions, at_zero.points_evaluated), (vec![0], 2));
        let constant = |_: &[f64]| Ok(vec![0.0, 1.0, 0.5]);
        assert_eq!(exact_reachability(constant, &[0.0, 0.0], &PerturbationBall::l2(5.0), 51).unwrap().actions, vec![1]);
        assert!(matches!(
            exact_reachability(constant, &[0.0; 3], &ball, 11),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn l2_grid_stays_in_the_disc() {
        let ball = PerturbationBall::l2(1.0);
        let g = ball_grid(&[0.5, -0.5], &ball, 41).unwrap();
        assert!(g.iter().all(|p| ((p[0] - 0.5).powi(2) + (p[1] + 0.5).powi(2)).sqrt() <= 1.0 + 1e-9));
        // 41x41 square grid; the disc keeps roughly π/4 of it
        assert!(g.len() > 1200 && g.len() < 1400, "{}", g.len());
    }

    #[test]
    fn box_cuts_the_grid() {
        let ball = PerturbationBall::linf(0.5).with_bounds(0.0, 1.0);
        let g = ball_grid(&[0.9], &ball, 11).unwrap();
        assert!(g.iter().all(|p| p[0] >= 0.4 - 1e-12 && p[0] <= 1.0));
        assert!(g.iter().any(|p| p[0] == 1.0));
    }

    #[test]
    fn enumeration_passes_and_catches_mutation() {
        let ok = check_library_costs(2, &[1.0], &[0.0]);
        assert!(ok.passed());
        // 2 labels x 2 expert outputs x (2 predictions + 2 predictions paired with the deferral)
        assert_eq!(ok.tuples, 16);
        assert!(check_library_costs(1, &[], &[]).passed());
        let bad = exhaustive_true_loss_check(2, &[1.0], &[0.0], |d, m, y| {
            if d < 2 { (d != y) as u8 as f64 } else { (m[0] == y) as u8 as f64 }
        });
        let ce = bad.counterexample.unwrap();
        assert_eq!(ce.decision, 2);
    }

    #[test]
    fn calibration_examples() {
        let inst = DiscreteInstance::new(vec![vec![0.0]], vec![vec![0.0, 1.0]]).unwrap();
        let ball = PerturbationBall::linf(0.1);
        let best = calibration_gap_check(&inst, |_: &[f64]| Ok(vec![1.0, 0.0]), 1.0, 1.0, &ball, 11, Execution::Sequential).unwrap();
        assert_eq!(best[0].true_gap, 0.0);
        assert!(best[0].holds);
        let worst = calibration_gap_check(&inst, |_: &[f64]| Ok(vec![0.0, 1.0]), 1.0, 1.0, &ball, 11, Execution::Sequential).unwrap();
        assert_eq!(worst[0].true_gap, 1.0);
        // surrogate gap is Ψ^1(1) = log 2, so the bound is tight
        assert!((worst[0].surrogate_gap - 2f64.ln()).abs() < 1e-12);
        assert!(worst[0].holds);
    }

    #[test]
    fn staircase_beats_one_hot_with_three_actions() {
        let w = [1.0, 1.0, 1.0];
        let fam = constant_family(&w, 1.0);
        let best = fam
            .iter()
            .map(|s| (0..3).map(|j| rho_margin_loss(s, j, 1.0, 1.0)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((best - (2f64.ln() + 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn suite_passes() {
        let r = run_verification(0, 201, Execution::Parallel).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{} failed: {}", c.name, c.witness);
        }
    }
}
