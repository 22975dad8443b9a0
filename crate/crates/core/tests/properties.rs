use deferkit::agents::{shifted_costs, tau_weights, CostModel, ExpertKind, ExpertPanel};
use deferkit::attacks::{AttackPlan, PerturbationBall};
use deferkit::data::gen_blobs;
use deferkit::diffcore::{Activation, ScoreModel};
use deferkit::evaluation::{attacked_inputs, evaluate, AttackMode, EvalSetup};
use deferkit::exec::Execution;
use deferkit::oracle::exact_reachability;
use deferkit::surrogates::{phi_cls_rho_u, phi_cls_u, psi_rho, psi_u, true_def_loss_class, SurrogateParams};
use deferkit::training::{batch_objective, System, TrainConfig, TrainObjective, TrainSetup};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reachability_grows_with_radius(
        a in prop::collection::vec(-3.0f64..3.0, 2),
        b in prop::collection::vec(-1.0f64..1.0, 2),
        x in -1.0f64..1.0,
        g1 in 0.0f64..0.5,
        dg in 0.0f64..0.5,
    ) {
        let scores = |p: &[f64]| Ok(vec![a[0] * p[0] + b[0], a[1] * p[0] + b[1]]);
        let small = exact_reachability(scores, &[x], &PerturbationBall::linf(g1), 201).unwrap();
        let large = exact_reachability(scores, &[x], &PerturbationBall::linf(g1 + dg), 201).unwrap();
        for j in &small.actions {
            prop_assert!(large.contains(*j));
        }
    }

    #[test]
    fn margin_loss_dominates_zero_one(s in prop::collection::vec(-3.0f64..3.0, 2..6), u in 0.3f64..3.0) {
        // Any outcome other than the strict winner pays at least Ψ^u(1).
        for j in 0..s.len() {
            let wins = (0..s.len()).all(|k| k == j || s[j] > s[k]);
            if !wins {
                prop_assert!(phi_cls_rho_u(&s, j, u, 1.0) >= psi_u(1.0, u).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn margin_loss_below_comp_sum(s in prop::collection::vec(-3.0f64..3.0, 2..6), u in 0.3f64..3.0, rho in 0.25f64..3.0) {
        let scaled: Vec<f64> = s.iter().map(|v| v / rho).collect();
        for j in 0..s.len() {
            prop_assert!(phi_cls_rho_u(&s, j, u, rho) <= phi_cls_u(&scaled, j, u) + 1e-12);
        }
    }

    #[test]
    fn psi_transforms_are_monotone(v in 0.0f64..10.0, dv in 0.0f64..10.0, u in 0.1f64..4.0, rho in 0.1f64..3.0) {
        prop_assert!(psi_u(v + dv, u).unwrap() >= psi_u(v, u).unwrap());
        prop_assert!(psi_rho(v + dv, rho) <= psi_rho(v, rho));
        prop_assert!((0.0..=1.0).contains(&psi_rho(v - dv, rho)));
    }

    #[test]
    fn projection_lands_in_ball(
        c in prop::collection::vec(-1.0f64..1.0, 1..4),
        noise in prop::collection::vec(-5.0f64..5.0, 4),
        gamma in 0.0f64..2.0,
        l2 in any::<bool>(),
    ) {
        let ball = if l2 { PerturbationBall::l2(gamma) } else { PerturbationBall::linf(gamma) }.with_bounds(-1.5, 1.5);
        let cand: Vec<f64> = c.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let p = ball.project(&cand, &c);
        prop_assert!(ball.contains(&p, &c));
    }

    #[test]
    fn shifted_costs_match_true_loss(y in 0usize..3, m0 in 0usize..3, m1 in 0usize..3, f0 in 0.0f64..0.5, f1 in 0.0f64..0.5) {
        let cm = CostModel::classification_capped(3, &[f0, f1]);
        let mu = shifted_costs(&cm, 3, &[m0, m1], y).unwrap();
        for (d, c) in mu.iter().enumerate() {
            prop_assert_eq!(*c, true_def_loss_class(d, 3, y, &[m0, m1], &cm));
        }
        prop_assert!(tau_weights(&mu).iter().all(|w| *w >= 0.0));
    }
}

#[test]
fn execution_modes_agree() {
    let ds = gen_blobs(3, 2, 160, 4.0, 11).unwrap();
    let mut panel = ExpertPanel::new(vec![
        ExpertKind::ClassSpecialist { classes: vec![0, 1], p: 0.9 },
        ExpertKind::ClassSpecialist { classes: vec![2], p: 0.8 },
    ]);
    panel.populate(&ds, 11).unwrap();
    let cm = CostModel::classification_capped(3, &[0.05, 0.1]);
    let params = SurrogateParams { kappa: 0.1, ..SurrogateParams::default() };
    let ball = PerturbationBall::linf(0.8);
    let plan = AttackPlan::default_for(0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let system = System::Classification { h: ScoreModel::mlp(2, &[8], 5, Activation::Relu, &mut rng) };

    let setup = TrainSetup { dataset: &ds, panel: &panel, cm: &cm, params: &params, ball: &ball, plan: &plan };
    let batch: Vec<usize> = ds.train.iter().copied().take(32).collect();
    let run = |execution| {
        let cfg = TrainConfig { execution, ..TrainConfig::robust(TrainObjective::RermC) };
        batch_objective(&system, &setup, &cfg, &batch, None).unwrap()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));

    let es = |execution| EvalSetup {
        dataset: &ds,
        ids: &ds.test,
        panel: &panel,
        cm: &cm,
        params: &params,
        ball: &ball,
        plan: &plan,
        execution,
    };
    for mode in [AttackMode::Untargeted, AttackMode::Targeted(4)] {
        let seq = es(Execution::Sequential);
        let par = es(Execution::Parallel);
        assert_eq!(attacked_inputs(&system, &seq, mode).unwrap(), attacked_inputs(&system, &par, mode).unwrap());
        assert_eq!(evaluate(&system, &seq, mode).unwrap(), evaluate(&system, &par, mode).unwrap());
    }
}
