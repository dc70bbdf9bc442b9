//! One function per subcommand. Each writes only under `cfg.out`, echoes
//! the resolved configuration there, and returns its results for callers
//! that want them programmatically.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use convmatch::bench::{environment, measure_latency, LatencyReport};
use convmatch::data::{
    load_embeddings, load_tsv, stack_instance, stacked_tokens, synth_corpus, DialogueInstance, Layout,
    StackedInstance, StackedSet, Vocabulary, UNK_ID,
};
use convmatch::eval::{
    default_metrics, evaluate_run, metric_table, uniform_group_size, Metric, MetricReport,
};
use convmatch::model::{
    heatmap, layer_tags, load_checkpoint, param_count, save_checkpoint, Ablation, ModelParams,
    ParamCount,
};
use convmatch::tensor::{Mask, Tensor};
use convmatch::train::{
    fit_finetune, fit_pretrain, pretrain_items, FitReport, LogRecord, OptimState,
};
use convmatch::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "model.dcv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_ECHO: &str = "run_config.txt";
pub const LOG_FILE: &str = "train.log";
const EPOCH_RECORD: &str = "train.next_epoch";

fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    let echo = cfg.out.join(CONFIG_ECHO);
    fs::write(&echo, cfg.to_text()).with_context(|| format!("cannot write {}", echo.display()))?;
    Ok(cfg.out.clone())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn corpus(path: &Option<PathBuf>, key: &str) -> Result<Vec<DialogueInstance>> {
    let path = path
        .as_ref()
        .ok_or_else(|| anyhow!("no {key} corpus given; set {key}=<path>"))?;
    if !path.exists() {
        bail!("{key} corpus not found: {}", path.display());
    }
    let data = load_tsv(path)?;
    if data.is_empty() {
        bail!("{key} corpus is empty: {}", path.display());
    }
    Ok(data)
}

fn optional_corpus(path: &Option<PathBuf>, key: &str) -> Result<Option<Vec<DialogueInstance>>> {
    path.as_ref().map(|_| corpus(path, key)).transpose()
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| anyhow!("no {key} given; set {key}=<path>"))?;
    if !p.exists() {
        bail!("{key} not found: {}", p.display());
    }
    Ok(p)
}

/// A checkpoint, the vocabulary stored beside it, and its extra records.
pub struct LoadedModel {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub extras: Vec<(String, Tensor<f32>)>,
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let ck = load_checkpoint(path)?;
    let vocab_path = path.with_file_name(VOCAB_FILE);
    let vocab = Vocabulary::load(&vocab_path).with_context(|| {
        format!("checkpoint {} needs {} beside it", path.display(), VOCAB_FILE)
    })?;
    if vocab.len() != ck.params.vocab_size() {
        bail!(
            "{} has {} tokens but the checkpoint embeds {}",
            vocab_path.display(),
            vocab.len(),
            ck.params.vocab_size()
        );
    }
    Ok(LoadedModel {
        params: ck.params,
        vocab,
        extras: ck.extras,
    })
}

fn save_model(
    dir: &Path,
    params: &ModelParams,
    vocab: &Vocabulary,
    extras: &[(String, Tensor<f32>)],
) -> Result<PathBuf> {
    let path = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&path, params, extras)?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    Ok(path)
}

/// Starting weights: resumed, warm-started, or freshly initialized.
struct Start {
    params: ModelParams,
    vocab: Vocabulary,
    state: Option<OptimState>,
    epoch: usize,
}

fn start(cfg: &RunConfig, train: &[DialogueInstance]) -> Result<Start> {
    if let Some(path) = &cfg.resume {
        let m = load_model(require(&Some(path.clone()), "resume")?)?;
        let names = m.params.names();
        let state = OptimState::from_records(&m.extras, &names)?;
        let epoch = m
            .extras
            .iter()
            .find(|(n, _)| n == EPOCH_RECORD)
            .map_or(0, |(_, t)| t.item() as usize);
        return Ok(Start {
            params: m.params,
            vocab: m.vocab,
            state,
            epoch,
        });
    }
    if let Some(path) = &cfg.init {
        let m = load_model(require(&Some(path.clone()), "init")?)?;
        return Ok(Start {
            params: m.params,
            vocab: m.vocab,
            state: None,
            epoch: 0,
        });
    }
    let vocab = Vocabulary::build(train);
    let mut params = ModelParams::init(&cfg.model, vocab.len(), cfg.train_cfg.seed)?;
    if let Some(path) = &cfg.embeddings {
        load_embeddings(require(&Some(path.clone()), "embeddings")?, &vocab, &mut params.embedding)?;
    }
    Ok(Start {
        params,
        vocab,
        state: None,
        epoch: 0,
    })
}

struct Log(File);

impl Log {
    fn create(dir: &Path) -> Result<Log> {
        let path = dir.join(LOG_FILE);
        Ok(Log(File::create(&path)
            .with_context(|| format!("cannot create {}", path.display()))?))
    }

    fn line(&mut self, prefix: &str, r: &LogRecord) {
        let _ = writeln!(self.0, "{prefix}{r}");
    }
}

fn metrics_for(cfg: &RunConfig, instances: &[DialogueInstance]) -> Result<Vec<Metric>> {
    if !cfg.metrics.is_empty() {
        return Ok(cfg.metrics.clone());
    }
    let n = uniform_group_size(instances)
        .ok_or_else(|| anyhow!("groups differ in size; pass metrics=MAP,MRR,P@1 explicitly"))?;
    Ok(default_metrics(n))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = prepare(cfg)?;
    let synth = convmatch::data::SynthConfig {
        seed: cfg.train_cfg.seed,
        ..cfg.synth.clone()
    };
    let corpus = synth_corpus(&synth)?;
    corpus.write(&out)?;
    Ok(convmatch::data::SynthCorpus::FILES
        .iter()
        .map(|f| out.join(f))
        .collect())
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub losses: Vec<f64>,
    pub checkpoint: PathBuf,
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    let out = prepare(cfg)?;
    let train = corpus(&cfg.train, "train")?;
    let Start { mut params, vocab, .. } = start(cfg, &train)?;
    let items = pretrain_items(&train, &vocab, Layout::from(&params.config));
    let mut state = OptimState::sgd();
    let mut log = Log::create(&out)?;
    let losses = fit_pretrain(&mut params, &mut state, &items, &cfg.train_cfg, cfg.exec(), &mut |r| {
        log.line("", r)
    })?;
    let extras = state.to_records(&params.names());
    let checkpoint = save_model(&out, &params, &vocab, &extras)?;
    Ok(PretrainOutcome { losses, checkpoint })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub fit: FitReport,
    pub checkpoint: PathBuf,
    pub test: Option<MetricReport>,
}

pub fn cmd_finetune(cfg: &RunConfig) -> Result<FinetuneOutcome> {
    let out = prepare(cfg)?;
    let train = corpus(&cfg.train, "train")?;
    let valid = optional_corpus(&cfg.valid, "valid")?;
    let test = optional_corpus(&cfg.test, "test")?;
    let s = start(cfg, &train)?;
    let (mut params, vocab) = (s.params, s.vocab);
    let mut state = s.state.unwrap_or_else(|| OptimState::adam(&params.tensors()));
    let layout = Layout::from(&params.config);
    let train_set = StackedSet::from_instances(&train, &vocab, layout);
    let valid_set = valid
        .as_ref()
        .map(|v| StackedSet::from_instances(v, &vocab, layout));
    let mut log = Log::create(&out)?;
    let fit = fit_finetune(
        &mut params,
        &mut state,
        &train_set,
        valid_set.as_ref(),
        &cfg.train_cfg,
        s.epoch,
        cfg.exec(),
        &mut |r| log.line("", r),
    )?;
    let next_epoch = match fit.best_epoch {
        Some(e) => e + 1,
        None => s.epoch + fit.losses.len(),
    };
    let mut extras = state.to_records(&params.names());
    extras.push((EPOCH_RECORD.into(), Tensor::scalar(next_epoch as f32)));
    let checkpoint = save_model(&out, &params, &vocab, &extras)?;
    let test = match &test {
        Some(t) => {
            let report = evaluate_run(&params, t, &vocab, &metrics_for(cfg, t)?, None, cfg.exec())?;
            write_file(&out.join("metrics.txt"), &report.key_values("test."))?;
            Some(report)
        }
        None => None,
    };
    Ok(FinetuneOutcome {
        fit,
        checkpoint,
        test,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub norm: MetricReport,
    pub rand: Option<MetricReport>,
    /// Table followed by `key=value` lines, as written to `eval.txt`.
    pub text: String,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let out = prepare(cfg)?;
    let m = load_model(require(&cfg.checkpoint, "checkpoint")?)?;
    let test = corpus(&cfg.test, "test")?;
    let metrics = metrics_for(cfg, &test)?;
    let norm = evaluate_run(&m.params, &test, &m.vocab, &metrics, None, cfg.exec())?;
    let rand = cfg
        .perturb_seed
        .map(|seed| evaluate_run(&m.params, &test, &m.vocab, &metrics, Some(seed), cfg.exec()))
        .transpose()?;
    let mut rows = vec![("Norm", &norm)];
    if let Some(r) = &rand {
        rows.push(("Rand", r));
    }
    let mut text = metric_table(&rows);
    text.push_str(&norm.key_values("norm."));
    if let Some(r) = &rand {
        text.push_str(&r.key_values("rand."));
    }
    write_file(&out.join("eval.txt"), &text)?;
    Ok(EvalOutcome { norm, rand, text })
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub counts: ParamCount,
    pub latency: Vec<LatencyReport>,
    pub text: String,
}

/// Fully valid instances of random non-reserved ids.
pub fn random_inputs(layout: Layout, vocab: usize, n: usize, seed: u64) -> Vec<StackedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = layout.turns * layout.words;
    (0..n)
        .map(|_| {
            let ids: Vec<usize> = (0..cells)
                .map(|_| {
                    if vocab > UNK_ID + 1 {
                        rng.random_range(UNK_ID + 1..vocab)
                    } else {
                        UNK_ID.min(vocab.saturating_sub(1))
                    }
                })
                .collect();
            let mask = Mask::new(
                &[layout.turns, layout.words],
                ids.iter().map(|&i| i != 0).collect(),
            )
            .expect("positive layout");
            StackedInstance { layout, ids, mask }
        })
        .collect()
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    let out = prepare(cfg)?;
    let params = match &cfg.checkpoint {
        Some(_) => load_model(require(&cfg.checkpoint, "checkpoint")?)?.params,
        None => ModelParams::init(&cfg.model, cfg.bench_vocab, cfg.train_cfg.seed)?,
    };
    let counts = param_count(&params.config, params.vocab_size());
    let inputs = random_inputs(
        Layout::from(&params.config),
        params.vocab_size(),
        cfg.bench_batch.max(1),
        cfg.train_cfg.seed,
    );
    let mut latency = vec![measure_latency(&params, &inputs, cfg.warmup, cfg.runs, Exec::Sequential)?];
    if cfg.threads != 1 {
        latency.push(measure_latency(&params, &inputs, cfg.warmup, cfg.runs, Exec::Parallel)?);
    }
    let mut text = String::new();
    for (k, v) in environment() {
        text.push_str(&format!("env.{k}={v}\n"));
    }
    for (name, n) in &counts.entries {
        text.push_str(&format!("params.{name}={n}\n"));
    }
    text.push_str(&format!(
        "params.embedding={}\nparams.non_embedding={}\nparams.total={}\n",
        counts.embedding(),
        counts.non_embedding(),
        counts.total
    ));
    for r in &latency {
        text.push_str(&format!("latency {r}\n"));
    }
    write_file(&out.join("bench.txt"), &text)?;
    Ok(BenchOutcome {
        counts,
        latency,
        text,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn file_tag(tag: &str) -> String {
    tag.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

/// Writes `heatmap_<tag>.csv` per requested layer: context tokens across the
/// header, response tokens down the first column.
pub fn cmd_heatmap(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = prepare(cfg)?;
    let m = load_model(require(&cfg.checkpoint, "checkpoint")?)?;
    let test = corpus(&cfg.test, "test")?;
    let inst = test.get(cfg.instance).ok_or_else(|| {
        anyhow!("instance {} is out of range; the test corpus has {} rows", cfg.instance, test.len())
    })?;
    let tags: Vec<String> = if cfg.layers.is_empty() {
        (1..=11).map(|i| format!("conv@{i}")).collect()
    } else {
        cfg.layers.clone()
    };
    for t in &tags {
        convmatch::model::resolve_layer(t)?;
    }
    let stacked = stack_instance(inst, &m.vocab, Layout::from(&m.params.config));
    let acts = m.params.activations(&stacked)?;
    let words = stacked.layout.words;
    let raw = stacked_tokens(inst, stacked.layout);
    let token = |(t, j): (usize, usize)| raw[t * words + j].unwrap_or("").to_string();
    let mut files = Vec::with_capacity(tags.len());
    for tag in &tags {
        let map = heatmap(&acts, tag, &stacked)?;
        let mut csv = String::from("response\\context");
        for &p in &map.context_positions {
            csv.push(',');
            csv.push_str(&csv_field(&token(p)));
        }
        csv.push('\n');
        for (row, &p) in map.values.iter().zip(&map.response_positions) {
            csv.push_str(&csv_field(&token(p)));
            for v in row {
                csv.push_str(&format!(",{v:.6}"));
            }
            csv.push('\n');
        }
        let path = out.join(format!("heatmap_{}.csv", file_tag(tag)));
        write_file(&path, &csv)?;
        files.push(path);
    }
    Ok(files)
}

/// Valid layer tags, for help text.
pub fn heatmap_tags() -> Vec<String> {
    let mut t = vec!["embedding".to_string()];
    t.extend(layer_tags());
    t
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub ablation: Ablation,
    pub params: usize,
    pub valid: f64,
    pub test: Option<MetricReport>,
}

/// Trains and scores the full model and each single-stage ablation from
/// the same seed.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let out = prepare(cfg)?;
    let train = corpus(&cfg.train, "train")?;
    let valid = corpus(&cfg.valid, "valid")?;
    let test = optional_corpus(&cfg.test, "test")?;
    let vocab = Vocabulary::build(&train);
    let mut log = Log::create(&out)?;
    let mut rows = Vec::new();
    for (name, ablation) in Ablation::variants() {
        let model = cfg.model.with_ablation(ablation);
        let layout = Layout::from(&model);
        let mut params = ModelParams::init(&model, vocab.len(), cfg.train_cfg.seed)?;
        let mut state = OptimState::adam(&params.tensors());
        let train_set = StackedSet::from_instances(&train, &vocab, layout);
        let valid_set = StackedSet::from_instances(&valid, &vocab, layout);
        let prefix = format!("variant={name} ");
        let fit = fit_finetune(
            &mut params,
            &mut state,
            &train_set,
            Some(&valid_set),
            &cfg.train_cfg,
            0,
            cfg.exec(),
            &mut |r| log.line(&prefix, r),
        )?;
        let test = test
            .as_ref()
            .map(|t| -> Result<MetricReport> {
                Ok(evaluate_run(&params, t, &vocab, &metrics_for(cfg, t)?, None, cfg.exec())?)
            })
            .transpose()?;
        rows.push(AblationRow {
            name,
            ablation,
            params: param_count(&model, vocab.len()).total,
            valid: fit.best_metric.unwrap_or(0.0),
            test,
        });
    }
    write_file(&out.join("ablation.txt"), &ablation_table(&rows))?;
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<7}  {:>10}  {:>9}", "model", "params", "valid@1");
    let names: Vec<String> = rows
        .first()
        .and_then(|r| r.test.as_ref())
        .map(|t| t.values.iter().map(|(m, _)| m.to_string()).collect())
        .unwrap_or_default();
    for n in &names {
        out.push_str(&format!("  {n:>7}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:<7}  {:>10}  {:>9.3}", r.name, r.params, r.valid));
        if let Some(t) = &r.test {
            for (_, v) in &t.values {
                out.push_str(&format!("  {v:>7.3}"));
            }
        }
        out.push('\n');
    }
    out
}
