//! Sequential vs parallel execution of the two hot paths: one RERM batch
//! objective (per-example PGD plus gradients) and one untargeted evaluation
//! pass. Build with `--no-default-features` to see the parallel mode fall
//! back to sequential.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deferkit::agents::{CostModel, ExpertKind, ExpertPanel};
use deferkit::attacks::{AttackPlan, PerturbationBall};
use deferkit::data::gen_blobs;
use deferkit::diffcore::{Activation, ScoreModel};
use deferkit::evaluation::{evaluate, AttackMode, EvalSetup};
use deferkit::exec::Execution;
use deferkit::surrogates::SurrogateParams;
use deferkit::training::{batch_objective, System, TrainConfig, TrainObjective, TrainSetup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench(c: &mut Criterion) {
    let ds = gen_blobs(3, 2, 400, 4.0, 0).unwrap();
    let mut panel = ExpertPanel::new(vec![
        ExpertKind::ClassSpecialist { classes: vec![0, 1], p: 0.9 },
        ExpertKind::ClassSpecialist { classes: vec![1, 2], p: 0.9 },
        ExpertKind::ClassSpecialist { classes: vec![2, 0], p: 0.9 },
    ]);
    panel.populate(&ds, 0).unwrap();
    let cm = CostModel::classification_capped(3, &[0.05, 0.075, 0.1]);
    let params = SurrogateParams { kappa: 0.05, ..SurrogateParams::default() };
    let ball = PerturbationBall::linf(1.0);
    let plan = AttackPlan::default_for(1.0);
    let setup = TrainSetup { dataset: &ds, panel: &panel, cm: &cm, params: &params, ball: &ball, plan: &plan };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let system = System::Classification { h: ScoreModel::mlp(2, &[32], 6, Activation::Relu, &mut rng) };
    let batch: Vec<usize> = ds.train.iter().copied().take(64).collect();

    let mut g = c.benchmark_group("rerm_batch_objective");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = TrainConfig { execution: exec, ..TrainConfig::robust(TrainObjective::RermC) };
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| batch_objective(&system, &setup, cfg, &batch, None).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("untargeted_eval");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let es = EvalSetup {
            dataset: &ds,
            ids: &ds.test,
            panel: &panel,
            cm: &cm,
            params: &params,
            ball: &ball,
            plan: &plan,
            execution: exec,
        };
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &es, |b, es| {
            b.iter(|| evaluate(&system, es, AttackMode::Untargeted).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
