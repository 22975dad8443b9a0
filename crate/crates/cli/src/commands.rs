use std::path::{Path, PathBuf};

use deferkit::agents::{costs_reg, shifted_costs, ExpertPanel};
use deferkit::attacks::PerturbationBall;
use deferkit::data::{self, CsvOptions, Dataset, TaskKind, Targets};
use deferkit::diffcore::{ScoreModel, MODEL_FORMAT_VERSION};
use deferkit::evaluation::{self, AttackMode, EvalSetup, MetricReport};
use deferkit::oracle::{self, DiscreteInstance, NamedCheck, VerificationReport};
use deferkit::training::{self, EpochRecord, System, TrainSetup};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataConfig, ExperimentConfig, Method, Split};

pub const OUTPUT_ROOT_ENV: &str = "DEFERKIT_OUTPUT_ROOT";

/// Failure surfaced to the user as a JSON object on stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub messages: Vec<String>,
}

impl CliError {
    pub fn config(messages: Vec<String>) -> Self {
        Self { kind: "config", messages }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self { kind: "runtime", messages: vec![msg.into()] }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "config" => 2,
            "verification" => 3,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl From<deferkit::Error> for CliError {
    fn from(e: deferkit::Error) -> Self {
        match e {
            deferkit::Error::Config(list) => CliError::config(list),
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let dir = Path::new(&cfg.output.dir);
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    root.join(dir)
}

fn ensure_dir(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = output_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Dataset and populated expert panel, rebuilt deterministically from the config.
pub fn build_data(cfg: &ExperimentConfig) -> CliResult<(Dataset, ExpertPanel)> {
    let seed = cfg.seed;
    let ds = match &cfg.data {
        DataConfig::Blobs { k, dim, n, separation } => data::gen_blobs(*k, *dim, *n, *separation, seed)?,
        DataConfig::Linear { dim, n, noise } => data::gen_linear_reg(*dim, *n, *noise, seed)?,
        DataConfig::Piecewise { n, noise_low, noise_high, threshold } => {
            data::gen_piecewise_reg(*n, *noise_low, *noise_high, *threshold, seed)?
        }
        DataConfig::Csv { path, target_column, normalize, train_fraction } => data::load_csv(
            path,
            &CsvOptions {
                target_column: target_column.clone(),
                normalize: *normalize,
                task: cfg.task,
                train_fraction: *train_fraction,
                seed,
            },
        )?,
    };
    if let Some(k) = ds.num_classes() {
        let actions = k + cfg.num_experts();
        let mut errs = Vec::new();
        if let Some(nu) = cfg.eval.nu.filter(|nu| *nu >= actions) {
            errs.push(format!("eval.nu = {nu} outside the action space of size {actions}"));
        }
        if let Err(deferkit::Error::Config(list)) = cfg.cost_model(Some(k)).validate(actions, Some(k)) {
            errs.extend(list);
        }
        if !errs.is_empty() {
            return Err(CliError::config(errs));
        }
    }
    let mut panel = ExpertPanel::new(cfg.panel.experts.clone());
    panel.populate(&ds, seed)?;
    Ok((ds, panel))
}

fn num_actions(cfg: &ExperimentConfig, ds: &Dataset) -> usize {
    ds.num_classes().unwrap_or(1) + cfg.num_experts()
}

/// Fresh models from the seeded initializer.
pub fn init_system(cfg: &ExperimentConfig, ds: &Dataset) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = ds.dim();
    let m = &cfg.model;
    match &ds.targets {
        Targets::Labels { .. } => System::Classification {
            h: ScoreModel::mlp(d, &m.hidden, num_actions(cfg, ds), m.activation, &mut rng),
        },
        Targets::Values { dim, .. } => {
            let r = ScoreModel::mlp(d, &m.hidden, num_actions(cfg, ds), m.activation, &mut rng);
            let f = if m.predictor_hidden.is_empty() {
                ScoreModel::linear(d, *dim, &mut rng)
            } else {
                ScoreModel::mlp(d, &m.predictor_hidden, *dim, m.activation, &mut rng)
            };
            System::Regression { r, f }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub config_hash: String,
    pub method: Method,
    pub system: System,
    pub history: Vec<EpochRecord>,
    pub diverged: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub config_hash: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_gen(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let dir = ensure_dir(cfg)?;
    let hash = cfg.hash();
    let (ds, panel) = build_data(cfg)?;
    let ds_path = dir.join("dataset.json");
    write_json(&ds_path, &DatasetFile { config_hash: hash.clone(), dataset: ds })?;

    let mut raw = Vec::new();
    panel.cache()?.write_csv(&mut raw)?;
    let mut rd = csv::Reader::from_reader(raw.as_slice());
    let ex_path = dir.join("experts.csv");
    let mut w = csv::Writer::from_path(&ex_path)?;
    let mut header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    header.push("config_hash".into());
    w.write_record(&header)?;
    for rec in rd.records() {
        let mut row: Vec<String> = rec?.iter().map(str::to_string).collect();
        row.push(hash.clone());
        w.write_record(&row)?;
    }
    w.flush()?;

    let man_path = dir.join("manifest-gen.json");
    write_json(&man_path, &Manifest {
        config_hash: hash,
        command: "gen".into(),
        config: cfg.clone(),
        files: vec![file_name(&ds_path), file_name(&ex_path)],
    })?;
    Ok(vec![ds_path, ex_path, man_path])
}

pub fn checkpoint_path(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    output_dir(cfg).join(format!("model-{}.json", method.label()))
}

pub fn cmd_train(cfg: &ExperimentConfig, method: Method) -> CliResult<Vec<PathBuf>> {
    let dir = ensure_dir(cfg)?;
    let hash = cfg.hash();
    let (ds, panel) = build_data(cfg)?;
    let system = init_system(cfg, &ds);
    let cm = cfg.cost_model(ds.num_classes());
    let params = cfg.surrogate_params();
    let ball = cfg.ball().map_err(|e| CliError::config(vec![e]))?;
    let plan = cfg.plan();
    let setup = TrainSetup { dataset: &ds, panel: &panel, cm: &cm, params: &params, ball: &ball, plan: &plan };
    let tcfg = cfg.train_config(method);
    let outcome = match method {
        Method::Rerm => training::train(system, &setup, &tcfg, None)?,
        Method::Baseline => training::train_baseline(system, &setup, &tcfg)?,
    };
    let model_path = checkpoint_path(cfg, method);
    write_json(&model_path, &ModelFile {
        format: MODEL_FORMAT_VERSION.into(),
        config_hash: hash.clone(),
        method,
        system: outcome.system,
        history: outcome.history,
        diverged: outcome.diverged,
    })?;
    let man_path = dir.join(format!("manifest-train-{}.json", method.label()));
    write_json(&man_path, &Manifest {
        config_hash: hash,
        command: format!("train {}", method.label()),
        config: cfg.clone(),
        files: vec![file_name(&model_path)],
    })?;
    Ok(vec![model_path, man_path])
}

pub fn load_checkpoint(path: &Path, cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let mf: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{} is not a model file: {e}", path.display())))?;
    if mf.format != MODEL_FORMAT_VERSION {
        return Err(CliError::runtime(format!("unsupported model format {:?}", mf.format)));
    }
    let expected_task = match mf.system {
        System::Classification { .. } => TaskKind::Classification,
        System::Regression { .. } => TaskKind::Regression,
    };
    let policy = mf.system.policy();
    let mut errs = Vec::new();
    if expected_task != cfg.task {
        errs.push(format!("checkpoint is for {expected_task:?} but the config task is {:?}", cfg.task));
    }
    if policy.input_dim() != ds.dim() {
        errs.push(format!("checkpoint expects {} inputs, data has {}", policy.input_dim(), ds.dim()));
    }
    if policy.output_dim() != num_actions(cfg, ds) {
        errs.push(format!("checkpoint has {} actions, config implies {}", policy.output_dim(), num_actions(cfg, ds)));
    }
    if errs.is_empty() { Ok(mf) } else { Err(CliError::runtime(errs.join("; "))) }
}

fn split_ids(cfg: &ExperimentConfig, ds: &Dataset) -> Vec<usize> {
    match cfg.eval.split {
        Split::Train => ds.train.clone(),
        Split::Test => ds.test.clone(),
        Split::All => (0..ds.len()).collect(),
    }
}

struct Loaded {
    ds: Dataset,
    panel: ExpertPanel,
    model: ModelFile,
    ball: PerturbationBall,
}

fn load_all(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<Loaded> {
    let (ds, panel) = build_data(cfg)?;
    let model = load_checkpoint(checkpoint, cfg, &ds)?;
    let ball = cfg.ball().map_err(|e| CliError::config(vec![e]))?;
    Ok(Loaded { ds, panel, model, ball })
}

fn run_id(model: &ModelFile, hash: &str) -> String {
    format!("{}-{}", model.method.label(), hash)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";")
}

pub fn cmd_attack(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<Vec<PathBuf>> {
    let dir = ensure_dir(cfg)?;
    let hash = cfg.hash();
    let l = load_all(cfg, checkpoint)?;
    let ids = split_ids(cfg, &l.ds);
    let cm = cfg.cost_model(l.ds.num_classes());
    let params = cfg.surrogate_params();
    let plan = cfg.plan();
    let setup = EvalSetup {
        dataset: &l.ds,
        ids: &ids,
        panel: &l.panel,
        cm: &cm,
        params: &params,
        ball: &l.ball,
        plan: &plan,
        execution: cfg.eval.execution,
    };
    let policy = l.model.system.policy();
    let decide = |x: &[f64]| -> CliResult<usize> { Ok(deferkit::surrogates::argmax(&policy.scores(x).map_err(deferkit::Error::from)?)) };
    let mut out = Vec::new();
    for mode in cfg.attack_modes(policy.output_dim()) {
        if mode == AttackMode::Clean {
            continue;
        }
        let xs = evaluation::attacked_inputs(&l.model.system, &setup, mode)?;
        let path = dir.join(format!("adv-{}-{}.csv", l.model.method.label(), mode.label()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["example_id", "attack_mode", "nu", "x_clean", "x_adv", "decision_clean", "decision_adv", "config_hash"])?;
        for (&i, xa) in ids.iter().zip(&xs) {
            let nu = match mode {
                AttackMode::Targeted(nu) => nu.to_string(),
                _ => String::new(),
            };
            w.write_record([
                i.to_string(),
                mode.label().to_string(),
                nu,
                join(l.ds.x(i)),
                join(xa),
                decide(l.ds.x(i))?.to_string(),
                decide(xa)?.to_string(),
                hash.clone(),
            ])?;
        }
        w.flush()?;
        out.push(path);
    }
    Ok(out)
}

pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<MetricReport> {
    let hash = cfg.hash();
    let l = load_all(cfg, checkpoint)?;
    let ids = split_ids(cfg, &l.ds);
    let cm = cfg.cost_model(l.ds.num_classes());
    let params = cfg.surrogate_params();
    let plan = cfg.plan();
    let setup = EvalSetup {
        dataset: &l.ds,
        ids: &ids,
        panel: &l.panel,
        cm: &cm,
        params: &params,
        ball: &l.ball,
        plan: &plan,
        execution: cfg.eval.execution,
    };
    let modes = cfg.attack_modes(l.model.system.policy().output_dim());
    Ok(evaluation::evaluate_report(&l.model.system, &setup, &modes, &run_id(&l.model, &hash), &hash)?)
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<(MetricReport, Vec<PathBuf>)> {
    let dir = ensure_dir(cfg)?;
    let report = evaluate_checkpoint(cfg, checkpoint)?;
    let (j, c) = evaluation::emit_report(&report, dir.join(format!("metrics-{}", report.run_id)))?;
    Ok((report, vec![j, c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: VerificationReport,
}

/// Pointwise calibration check of a trained policy on (at most 20) evaluation
/// points, with the realized costs as degenerate conditional costs.
fn trained_policy_check(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<NamedCheck> {
    let l = load_all(cfg, checkpoint)?;
    if l.ds.dim() > 2 {
        return Ok(NamedCheck {
            name: "trained_policy_calibration".into(),
            passed: true,
            witness: json!({"skipped": format!("input dimension {} > 2", l.ds.dim())}),
        });
    }
    let cm = cfg.cost_model(l.ds.num_classes());
    let cache = l.panel.cache()?;
    let ids: Vec<usize> = split_ids(cfg, &l.ds).into_iter().take(20).collect();
    let mut points = Vec::new();
    let mut costs = Vec::new();
    for &i in &ids {
        points.push(l.ds.x(i).to_vec());
        costs.push(match &l.model.system {
            System::Classification { h } => {
                let k = h.output_dim() - cache.num_experts();
                shifted_costs(&cm, k, cache.labels(i), l.ds.label(i))?
            }
            System::Regression { f, .. } => {
                let f_out = f.scores(l.ds.x(i)).map_err(deferkit::Error::from)?;
                costs_reg(&cm, &f_out, cache.values(i), l.ds.value(i))?
            }
        });
    }
    let inst = DiscreteInstance::new(points, costs)?;
    let resolution = if l.ds.dim() == 2 { cfg.eval.grid_resolution.min(201) } else { cfg.eval.grid_resolution };
    let policy = l.model.system.policy();
    let gaps = oracle::calibration_gap_check(
        &inst,
        |x: &[f64]| policy.scores(x).map_err(deferkit::Error::from),
        cfg.loss.u,
        cfg.loss.rho,
        &l.ball,
        resolution,
        cfg.eval.execution,
    )?;
    let failed: Vec<_> = gaps.iter().filter(|g| !g.holds).collect();
    Ok(NamedCheck {
        name: "trained_policy_calibration".into(),
        passed: failed.is_empty(),
        witness: json!({
            "points": gaps.len(),
            "resolution": resolution,
            "max_true_gap": gaps.iter().map(|g| g.true_gap).fold(0.0, f64::max),
            "first_failure": failed.first(),
        }),
    })
}

pub fn cmd_verify(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> CliResult<(VerificationReport, PathBuf)> {
    let dir = ensure_dir(cfg)?;
    let mut report = oracle::run_verification(cfg.seed, cfg.eval.grid_resolution, cfg.eval.execution)?;
    if let Some(ck) = checkpoint {
        report.checks.push(trained_policy_check(cfg, ck)?);
    }
    let path = dir.join("verify.json");
    write_json(&path, &VerifyFile { config_hash: cfg.hash(), report: report.clone() })?;
    Ok((report, path))
}

/// Gathers `metrics-*.json` from `dirs` into `summary.csv` and `summary.md`
/// under the config's output directory.
pub fn cmd_report(cfg: &ExperimentConfig, dirs: &[PathBuf]) -> CliResult<(String, Vec<PathBuf>)> {
    let out = ensure_dir(cfg)?;
    let mut search = dirs.to_vec();
    if search.is_empty() {
        search.push(out.clone());
    }
    let mut reports: Vec<MetricReport> = Vec::new();
    for d in &search {
        let mut names: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| CliError::runtime(format!("cannot list {}: {e}", d.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let n = file_name(p);
                n.starts_with("metrics-") && n.ends_with(".json")
            })
            .collect();
        names.sort();
        for p in names {
            reports.push(serde_json::from_str(&std::fs::read_to_string(&p)?)?);
        }
    }
    if reports.is_empty() {
        return Err(CliError::runtime("no metrics-*.json files found; run eval first"));
    }
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let mut md = String::from("| run | config_hash | task | gamma | clean | untargeted | targeted | def_loss |\n|---|---|---|---|---|---|---|---|\n");
    let csv_path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["run_id", "config_hash", "task", "gamma", "c_metric", "u_metric", "t_metric", "nu", "def_loss", "summary_config_hash"])?;
    for r in &reports {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {:.4} |\n",
            r.run_id, r.config_hash, r.task, r.gamma, fmt(r.c_acc), fmt(r.u_acc), fmt(r.t_acc), r.def_loss
        ));
        let o = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.run_id.clone(),
            r.config_hash.clone(),
            r.task.clone(),
            r.gamma.to_string(),
            o(r.c_acc),
            o(r.u_acc),
            o(r.t_acc),
            r.nu.map(|v| v.to_string()).unwrap_or_default(),
            r.def_loss.to_string(),
            cfg.hash(),
        ])?;
    }
    w.flush()?;
    let md_path = out.join("summary.md");
    std::fs::write(&md_path, format!("<!-- config_hash: {} -->\n{md}", cfg.hash()))?;
    Ok((md, vec![csv_path, md_path]))
}
