use std::fs;
use std::path::{Path, PathBuf};

use mdpbw_core::active::{incremental_learn, CurveRow, LearningOutcome};
use mdpbw_core::builtin::CHAIN_ACTION;
use mdpbw_core::em::{mc_bw, mdp_bw};
use mdpbw_core::eval::{kl_estimate, mean_log_likelihood, MetricsRow, QueryResult};
use mdpbw_core::sim::{passive_sample, simulate, ReplaySystem};
use mdpbw_core::{
    ActionSet, Alphabet, Dataset, EmReport, Model, Observation, Result as CoreResult, Schedule, Strategy, System,
    UniformScheduler, ERROR_LABEL,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{ActiveArgs, Command, EvalArgs, LearnArgs, SampleArgs};
use crate::error::{CliError, CliResult};
use crate::refs::{load_dataset, read, InitSpec, ModelRef};

/// Independent random streams derived from the master seed.
mod stream {
    pub const SYSTEM: u64 = 0;
    pub const SAMPLING: u64 = 1;
    pub const HYPOTHESIS: u64 = 2;
    pub const BASELINE: u64 = 3;
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    rng(seed, stream).next_u64()
}

pub fn run(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Sample(a) => sample(a, cmd),
        Command::Learn(a) => learn(a, cmd),
        Command::Active(a) => active(a, cmd),
        Command::Eval(a) => eval(a, cmd),
    }
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
}

fn write_config(path: &Path, cmd: &Command) -> CliResult<()> {
    write_json(
        path,
        &ResolvedConfig {
            version: env!("CARGO_PKG_VERSION"),
            command: cmd,
        },
    )
}

fn dataset_text(data: &Dataset, actions: &ActionSet) -> String {
    if actions.len() == 1 {
        data.to_labels_text()
    } else {
        data.to_text()
    }
}

/// Wraps a system and keeps every served trace in order, so a run can be
/// replayed later without the simulator.
struct Recorder<S> {
    inner: S,
    traces: Vec<(Vec<String>, Vec<String>)>,
}

impl<S: System> Recorder<S> {
    fn new(inner: S) -> Self {
        Recorder {
            inner,
            traces: Vec::new(),
        }
    }

    fn text(&self) -> String {
        let mut out = String::new();
        for (labels, actions) in &self.traces {
            let o = Observation::new(labels.clone(), actions.clone()).expect("recorded traces alternate");
            out.push_str(&o.to_string());
            out.push('\n');
        }
        out
    }
}

impl<S: System> System for Recorder<S> {
    fn init(&mut self, length: usize) -> CoreResult<String> {
        let l = self.inner.init(length)?;
        self.traces.push((vec![l.clone()], Vec::new()));
        Ok(l)
    }

    fn step(&mut self, action: &str) -> CoreResult<String> {
        let l = self.inner.step(action)?;
        let (labels, actions) = self.traces.last_mut().expect("step follows init");
        labels.push(l.clone());
        actions.push(action.to_string());
        Ok(l)
    }
}

enum AnySystem {
    Simulated(Box<mdpbw_core::sim::SimulatedSystem>),
    Replay(ReplaySystem),
}

impl System for AnySystem {
    fn init(&mut self, length: usize) -> CoreResult<String> {
        match self {
            AnySystem::Simulated(s) => s.init(length),
            AnySystem::Replay(s) => s.init(length),
        }
    }

    fn step(&mut self, action: &str) -> CoreResult<String> {
        match self {
            AnySystem::Simulated(s) => s.step(action),
            AnySystem::Replay(s) => s.step(action),
        }
    }
}

/// Recorded traces in file order, one per line (duplicates kept).
fn load_traces(path: &Path) -> CliResult<ReplaySystem> {
    let text = read(path)?;
    let mut traces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let o = Observation::parse_alternating(line)
            .map_err(|e| CliError::data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        traces.push(o);
    }
    Ok(ReplaySystem::from_traces(traces))
}

fn open_system(truth: &Model, replay: Option<&Path>, seed: u64) -> CliResult<AnySystem> {
    Ok(match replay {
        Some(path) => AnySystem::Replay(load_traces(path)?),
        None => AnySystem::Simulated(Box::new(simulate(truth, derived_seed(seed, stream::SYSTEM))?)),
    })
}

fn sample(a: &SampleArgs, cmd: &Command) -> CliResult<()> {
    let truth = a.model.load()?;
    a.len.validate()?;
    let mut system = open_system(&truth, a.replay.as_deref(), a.seed.seed)?;
    let sched = UniformScheduler::new(truth.actions().clone());
    let count = usize::try_from(a.count).map_err(|_| CliError::usage("count too large"))?;
    let data = passive_sample(&mut system, &sched, &a.len, count, &mut rng(a.seed.seed, stream::SAMPLING))?;
    write(&a.out, &dataset_text(&data, truth.actions()))?;
    write_config(&with_suffix(&a.out, ".config.json"), cmd)?;
    println!("wrote {} traces to {}", data.len(), a.out.display());
    Ok(())
}

/// Labels in order of first appearance, without the error label.
fn alphabet_of(data: &Dataset) -> CoreResult<(Alphabet, ActionSet)> {
    let mut labels: Vec<&str> = Vec::new();
    let mut actions: Vec<&str> = Vec::new();
    for (o, _) in data.iter() {
        for l in o.labels() {
            if l != ERROR_LABEL && !labels.contains(&l.as_str()) {
                labels.push(l);
            }
        }
        for act in o.actions() {
            if !actions.contains(&act.as_str()) {
                actions.push(act);
            }
        }
    }
    if actions.is_empty() {
        actions.push(CHAIN_ACTION);
    }
    Ok((Alphabet::new(labels)?, ActionSet::new(actions)?))
}

fn learn(a: &LearnArgs, cmd: &Command) -> CliResult<()> {
    let cfg = a.em.config();
    cfg.validate()?;
    let reference = match (&a.init, &a.alphabet_from) {
        (InitSpec::File(path), _) => Some(crate::refs::load_model_file(path)?),
        (_, Some(r)) => Some(r.load()?),
        _ => None,
    };
    let data = match (&reference, a.mc) {
        (Some(m), _) => load_dataset(&a.data, m.actions())?,
        (None, true) => load_dataset(&a.data, &ActionSet::new([CHAIN_ACTION])?)?,
        (None, false) => Dataset::parse(&read(&a.data)?).map_err(|e| CliError::from(e).in_file(&a.data))?,
    };
    if data.is_empty() {
        return Err(CliError::data(format!("{}: no traces", a.data.display())));
    }
    let (alphabet, actions) = match &reference {
        Some(m) => (m.alphabet().clone(), m.actions().clone()),
        None => alphabet_of(&data)?,
    };
    let restarts = match a.init {
        InitSpec::Random { .. } => a.restarts,
        InitSpec::File(_) => 1,
    };
    let mut best: Option<(Model, EmReport)> = None;
    for r in 0..restarts {
        let hyp0 = a.init.build(&alphabet, &actions, derived_seed(a.seed.seed, stream::HYPOTHESIS + 16 * r as u64))?;
        let fit = if a.mc { mc_bw(&data, &hyp0, &cfg)? } else { mdp_bw(&data, &hyp0, &cfg)? };
        if best
            .as_ref()
            .is_none_or(|(_, b)| fit.1.final_log_likelihood() > b.final_log_likelihood())
        {
            best = Some(fit);
        }
    }
    let (model, report) = best.expect("at least one restart");
    write(&a.out, &model.to_json())?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write_json(&report_path, &report)?;
    write_config(&with_suffix(&a.out, ".config.json"), cmd)?;
    println!(
        "{} iterations, log-likelihood per sequence {}, {} skipped; model in {}",
        report.iterations,
        report.log_likelihood_per_sequence(),
        report.skipped,
        a.out.display()
    );
    Ok(())
}

fn write_curve(path: &Path, rows: &[CurveRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    w.write_record([
        "strategy",
        "iteration",
        "dataset-size",
        "train-ll-per-seq",
        "test-ll-per-seq",
        "skipped-traces",
    ])?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.iteration.to_string(),
            r.dataset_size.to_string(),
            r.train_ll_per_seq.to_string(),
            r.test_ll_per_seq.map(|v| v.to_string()).unwrap_or_default(),
            r.skipped_traces.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ActiveSummary<'a> {
    strategy: &'static str,
    report: &'a EmReport,
    collapsed_traces: usize,
    dataset_size: u64,
}

fn active(a: &ActiveArgs, cmd: &Command) -> CliResult<()> {
    let truth = a.model.load()?;
    let cfg = a.em.config();
    cfg.validate()?;
    for ls in [&a.len, &a.seed_len, &a.test_len] {
        ls.validate()?;
    }
    let seed = a.seed.seed;
    let mut system = Recorder::new(open_system(&truth, a.replay.as_deref(), seed)?);
    let uniform = UniformScheduler::new(truth.actions().clone());
    let mut sampling = rng(seed, stream::SAMPLING);

    let data0 = match &a.seed_data {
        Some(path) => load_dataset(path, truth.actions())?,
        None if a.seed_count > 0 => passive_sample(&mut system, &uniform, &a.seed_len, a.seed_count, &mut sampling)?,
        None => return Err(CliError::usage("either --seed-data or a positive --seed-count is required")),
    };
    let test = match &a.test {
        Some(path) => Some(load_dataset(path, truth.actions())?),
        None if a.test_count > 0 => {
            Some(passive_sample(&mut system, &uniform, &a.test_len, a.test_count, &mut sampling)?)
        }
        None => None,
    };
    let init = a.init.clone().unwrap_or(InitSpec::Random {
        states: truth.n_states(),
    });
    let hyp0 = init.build(truth.alphabet(), truth.actions(), derived_seed(seed, stream::HYPOTHESIS))?;
    let schedule = Schedule {
        iterations: a.iterations,
        per_iteration: a.per_iter,
        lengths: a.len,
        warm_start: !a.cold_start,
    };

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::data(format!("{}: {e}", a.out_dir.display())))?;
    let mut strategies = vec![(Strategy::Active, stream::SAMPLING)];
    if a.baseline.is_some() {
        strategies.push((Strategy::PassiveUniform, stream::BASELINE));
    }
    let mut curve = Vec::new();
    let mut summaries = Vec::new();
    let mut outcomes: Vec<(Strategy, LearningOutcome)> = Vec::new();
    for (strategy, s) in strategies {
        let mut r = if strategy == Strategy::Active { sampling.clone() } else { rng(seed, s) };
        let out = incremental_learn(strategy, &mut system, &hyp0, &data0, &schedule, &cfg, test.as_ref(), &mut r)?;
        curve.extend(out.curve.iter().cloned());
        outcomes.push((strategy, out));
    }
    for (strategy, out) in &outcomes {
        let prefix = match strategy {
            Strategy::Active => "",
            Strategy::PassiveUniform => "baseline-",
        };
        write(&a.out_dir.join(format!("{prefix}model.json")), &out.model.to_json())?;
        write(
            &a.out_dir.join(format!("{prefix}dataset.txt")),
            &dataset_text(&out.dataset, truth.actions()),
        )?;
        summaries.push(ActiveSummary {
            strategy: strategy.name(),
            report: &out.report,
            collapsed_traces: out.collapsed_traces,
            dataset_size: out.dataset.len(),
        });
    }
    if let Some(t) = &test {
        write(&a.out_dir.join("test.txt"), &dataset_text(t, truth.actions()))?;
    }
    write_curve(&a.out_dir.join("curve.csv"), &curve)?;
    write_json(&a.out_dir.join("report.json"), &summaries)?;
    write(&a.out_dir.join("traces.txt"), &system.text())?;
    write_config(&a.out_dir.join("config.json"), cmd)?;
    for (strategy, out) in &outcomes {
        let last = out.curve.last();
        println!(
            "{}: {} traces, final test log-likelihood per sequence {}",
            strategy.name(),
            out.dataset.len(),
            last.and_then(|r| r.test_ll_per_seq).map_or("n/a".to_string(), |v| v.to_string()),
        );
    }
    Ok(())
}

fn metrics_csv(rows: &[MetricsRow], queries: &[String]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "model",
        "train-ll-per-seq",
        "test-ll-per-seq",
        "test-zero-count",
        "kl",
        "kl-std-error",
    ]
    .map(String::from)
    .to_vec();
    header.extend(queries.iter().cloned());
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.model.clone(),
            opt(r.train_ll_per_seq),
            opt(r.test_ll_per_seq),
            r.test_zero_count.to_string(),
            opt(r.kl),
            opt(r.kl_std_error),
        ];
        rec.extend(r.queries.iter().map(|q| q.probability.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn eval(a: &EvalArgs, cmd: &Command) -> CliResult<()> {
    let truth = a.true_model.as_ref().map(ModelRef::load).transpose()?;
    let models = a.models.iter().map(ModelRef::load).collect::<CliResult<Vec<_>>>()?;
    let actions = truth.as_ref().unwrap_or(&models[0]).actions().clone();
    let train = a.train.as_ref().map(|p| load_dataset(p, &actions)).transpose()?;
    let test = match (&a.test, a.test_count, &truth) {
        (Some(path), _, _) => Some(load_dataset(path, &actions)?),
        (None, Some(n), Some(t)) => {
            a.test_len.validate()?;
            let mut system = simulate(t, derived_seed(a.seed.seed, stream::SYSTEM))?;
            let sched = UniformScheduler::new(t.actions().clone());
            Some(passive_sample(&mut system, &sched, &a.test_len, n, &mut rng(a.seed.seed, stream::SAMPLING))?)
        }
        (None, Some(_), None) => return Err(CliError::usage("--test-count needs --true to draw from")),
        (None, None, _) => None,
    };
    if a.kl && test.is_none() {
        return Err(CliError::usage("--kl needs a test set (--test or --test-count)"));
    }
    let mut rows = Vec::new();
    for (r, m) in a.models.iter().zip(&models) {
        let train_ll = train.as_ref().map(|d| mean_log_likelihood(m, d)).transpose()?;
        let test_ll = test.as_ref().map(|d| mean_log_likelihood(m, d)).transpose()?;
        let kl = match (&truth, &test, a.kl) {
            (Some(t), Some(d), true) => Some(kl_estimate(t, m, d)?),
            _ => None,
        };
        let queries = a
            .pmax
            .iter()
            .map(|q| {
                Ok(QueryResult {
                    query: q.to_string(),
                    probability: q.evaluate(m)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(MetricsRow {
            model: r.to_string(),
            train_ll_per_seq: train_ll.map(|s| s.mean),
            test_ll_per_seq: test_ll.map(|s| s.mean),
            test_zero_count: test_ll.map_or(0, |s| s.zero_count),
            kl: kl.map(|k| k.value),
            kl_std_error: kl.map(|k| k.std_error),
            queries,
        });
    }
    let queries: Vec<String> = a.pmax.iter().map(ToString::to_string).collect();
    let csv_text = metrics_csv(&rows, &queries)?;
    match &a.out {
        Some(path) => {
            write(path, &csv_text)?;
            write_json(&path.with_extension("json"), &rows)?;
            write_config(&with_suffix(path, ".config.json"), cmd)?;
        }
        None => print!("{csv_text}"),
    }
    Ok(())
}
