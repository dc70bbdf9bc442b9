//! Acceptance checks. Prints one `criterion N ...: PASS|FAIL` line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test -p convmatch-cli --test acceptance -- 2 7`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use convmatch::data::{stack_instance, synth_corpus, DialogueInstance, Layout, SynthConfig, Vocabulary};
use convmatch::eval::{
    mean_average_precision, mean_reciprocal_rank, precision_at_1, recall_at_k, Metric, RankedGroup,
};
use convmatch::model::{param_count, score, ModelConfig, ModelParams, ParamVars};
use convmatch::tensor::{grad_check, Tape, Tensor, Var};
use convmatch::train::contrastive_loss;
use convmatch::Exec;
use convmatch_cli::{
    cmd_ablate, cmd_bench, cmd_eval, cmd_finetune, cmd_pretrain, cmd_synth, load_model, RunConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Desk-scale experiment settings shared by the training criteria.
const DESK: &str = "\
turns=5
words=8
dim=64
batch_size=32
epochs=50
milestones=20,30,40,45
patience=8
pretrain_lr=0.05
pretrain_epochs=20
";

const R10_1: Metric = Metric::Recall { n: 10, k: 1 };

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

struct Run {
    checkpoint: PathBuf,
    test: f64,
    best_epoch: Option<usize>,
    seconds: f64,
}

struct Lab {
    root: tempfile::TempDir,
    data: RefCell<HashMap<u64, PathBuf>>,
    cold: RefCell<HashMap<u64, std::rc::Rc<Run>>>,
}

fn desk(out: &Path, overrides: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(DESK, Path::new("desk.cfg"))?;
    cfg.out = out.to_path_buf();
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

impl Lab {
    fn new() -> Result<Self> {
        Ok(Lab {
            root: tempfile::tempdir()?,
            data: RefCell::new(HashMap::new()),
            cold: RefCell::new(HashMap::new()),
        })
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn data(&self, seed: u64) -> Result<PathBuf> {
        if let Some(d) = self.data.borrow().get(&seed) {
            return Ok(d.clone());
        }
        let dir = self.dir(&format!("data{seed}"));
        cmd_synth(&desk(&dir, &[("seed", seed.to_string())])?)?;
        self.data.borrow_mut().insert(seed, dir.clone());
        Ok(dir)
    }

    /// Fine-tunes on the seed's `split` corpus and reports test R10@1.
    fn finetune(
        &self,
        name: &str,
        seed: u64,
        split: &str,
        init: Option<&Path>,
    ) -> Result<Run> {
        let data = self.data(seed)?;
        let mut over = vec![
            ("seed", seed.to_string()),
            ("train", show(&data.join(format!("{split}train.tsv")))),
            ("valid", show(&data.join(format!("{split}valid.tsv")))),
            ("test", show(&data.join(format!("{split}test.tsv")))),
        ];
        if let Some(p) = init {
            over.push(("init", show(p)));
        }
        let start = Instant::now();
        let out = cmd_finetune(&desk(&self.dir(name), &over)?)?;
        Ok(Run {
            checkpoint: out.checkpoint,
            test: out.test.and_then(|t| t.get(R10_1)).unwrap_or(0.0),
            best_epoch: out.fit.best_epoch,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn pretrain(&self, name: &str, seed: u64, split: &str) -> Result<PathBuf> {
        let data = self.data(seed)?;
        let over = [
            ("seed", seed.to_string()),
            ("train", show(&data.join(format!("{split}train.tsv")))),
        ];
        Ok(cmd_pretrain(&desk(&self.dir(name), &over)?)?.checkpoint)
    }

    fn cold(&self, seed: u64) -> Result<std::rc::Rc<Run>> {
        if let Some(r) = self.cold.borrow().get(&seed) {
            return Ok(r.clone());
        }
        let run = std::rc::Rc::new(self.finetune(&format!("cold{seed}"), seed, "", None)?);
        self.cold.borrow_mut().insert(seed, run.clone());
        Ok(run)
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

fn toy_instance() -> (DialogueInstance, Vocabulary) {
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    let inst = DialogueInstance {
        context: vec![words("how do i mount it"), words("use the mount tool")],
        response: words("thanks it works"),
        label: 1,
        group_id: 0,
    };
    let vocab = Vocabulary::build(std::slice::from_ref(&inst));
    (inst, vocab)
}

fn c1_gradients(_: &Lab) -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = Vec::new();
    let mut op = |name: &str,
                  f: &dyn Fn(&mut Tape<'_, f64>, &[Var]) -> convmatch::Result<Var>,
                  inputs: Vec<Tensor<f64>>|
     -> Result<bool> {
        let report = grad_check(f, &inputs, 1e-4)?;
        worst.push(format!("{name}={:.1e}", report.worst()));
        Ok(report.passed)
    };
    let mut ok = true;
    let w2 = random_tensor(&[3, 4, 2], &mut rng);
    ok &= op(
        "conv2d",
        &|t, v| {
            let c = t.conv2d_same(v[0], v[1], v[2])?;
            let w = t.constant(w2.clone());
            t.dot(c, w)
        },
        vec![
            random_tensor(&[3, 4, 3], &mut rng),
            random_tensor(&[3, 3, 3, 2], &mut rng),
            random_tensor(&[2], &mut rng),
        ],
    )?;
    let w1 = random_tensor(&[12, 2], &mut rng);
    ok &= op(
        "conv1d",
        &|t, v| {
            let c = t.conv1d_same(v[0], v[1], v[2])?;
            let w = t.constant(w1.clone());
            t.dot(c, w)
        },
        vec![
            random_tensor(&[12, 3], &mut rng),
            random_tensor(&[5, 3, 2], &mut rng),
            random_tensor(&[2], &mut rng),
        ],
    )?;
    let wg = random_tensor(&[3, 4, 8], &mut rng);
    ok &= op(
        "gelu",
        &|t, v| {
            let g = t.gelu(v[0]);
            let w = t.constant(wg.clone());
            t.dot(g, w)
        },
        vec![random_tensor(&[3, 4, 8], &mut rng)],
    )?;
    let (inst, vocab) = toy_instance();
    let layout = Layout { turns: 3, words: 4 };
    let stacked = stack_instance(&inst, &vocab, layout);
    let mask = stacked.mask.clone();
    let wm = random_tensor(&[3, 8], &mut rng);
    ok &= op(
        "maxpool",
        &|t, v| {
            let p = t.maxpool(v[0], 1, Some(&mask))?;
            let w = t.constant(wm.clone());
            t.dot(p, w)
        },
        vec![random_tensor(&[3, 4, 8], &mut rng)],
    )?;
    ok &= op(
        "linear",
        &|t, v| {
            let d = t.dot(v[0], v[1])?;
            let z = t.add(d, v[2])?;
            Ok(t.sigmoid(z))
        },
        vec![
            random_tensor(&[8], &mut rng),
            random_tensor(&[8], &mut rng),
            random_tensor(&[1], &mut rng),
        ],
    )?;

    let cfg = ModelConfig::with_shape(3, 4, 8);
    let params = ModelParams::<f64>::init(&cfg, vocab.len(), 5)?;
    let inputs: Vec<Tensor<f64>> = params.tensors().into_iter().cloned().collect();
    let conv_indices: Vec<usize> = params.convs.iter().map(|c| c.spec.index).collect();
    let pipeline = grad_check(
        |t, v| {
            let mut convs = [None; 11];
            for (i, &index) in conv_indices.iter().enumerate() {
                convs[index - 1] = Some((v[1 + 2 * i], v[2 + 2 * i]));
            }
            let n = v.len();
            let vars = ParamVars {
                embedding: v[0],
                convs,
                head_weight: v[n - 2],
                head_bias: v[n - 1],
                all: v.to_vec(),
            };
            Ok(score(t, &vars, &cfg, &stacked)?.0)
        },
        &inputs,
        1e-3,
    )?;
    worst.push(format!("pipeline={:.1e}", pipeline.worst()));
    ok &= pipeline.passed;
    let secs = start.elapsed().as_secs_f64();
    verdict(ok && secs < 60.0, format!("max rel error {}; {secs:.1} s", worst.join(" ")))
}

fn c2_identity(_: &Lab) -> Result<Verdict> {
    let corpus = synth_corpus(&SynthConfig {
        n_groups: 4,
        ..SynthConfig::default()
    })?;
    let vocab = Vocabulary::build(&corpus.train);
    let cfg = ModelConfig::with_shape(6, 8, 16);
    let mut params = ModelParams::init(&cfg, vocab.len(), 3)?;
    params.zero_convs();
    let layout = Layout::from(&cfg);
    let (t, l, d) = (cfg.turns, cfg.words, cfg.dim);
    let mut checked = 0;
    for inst in corpus.train.iter().take(20) {
        let stacked = stack_instance(inst, &vocab, layout);
        let acts = params.activations(&stacked)?;
        let layer = |tag: &str| acts.get(tag).unwrap().data().to_vec();
        let g = layer("G");
        for tag in ["G2", "G4", "G7", "G10"] {
            if layer(tag) != g {
                return verdict(false, format!("{tag} differs from G"));
            }
        }
        if layer("G5") != g {
            return verdict(false, "G5 is not a reshape of G4".into());
        }
        if layer("G13") != layer("G11") {
            return verdict(false, "G13 differs from G11".into());
        }
        let table = params.embedding.data();
        let mut expected = vec![f32::NEG_INFINITY; d];
        for ti in 0..t {
            let mut row = vec![f32::NEG_INFINITY; d];
            let mut any = false;
            for j in 0..l {
                if stacked.is_valid(ti, j) {
                    any = true;
                    let id = stacked.ids[ti * l + j];
                    for c in 0..d {
                        row[c] = row[c].max(table[id * d + c]);
                    }
                }
            }
            for c in 0..d {
                expected[c] = expected[c].max(if any { row[c] } else { 0.0 });
            }
        }
        let o = params.encode(&stacked)?;
        if o.data() != expected.as_slice() {
            return verdict(false, "encoding differs from two-axis max-pooling".into());
        }
        checked += 1;
    }
    verdict(true, format!("{checked} instances, exact equality"))
}

/// Rank of candidate `i`: one plus the candidates scored higher, plus the
/// equally scored ones listed earlier.
fn oracle_rank(g: &RankedGroup, i: usize) -> usize {
    let s = g.candidates[i].0;
    1 + g
        .candidates
        .iter()
        .enumerate()
        .filter(|&(j, c)| c.0 > s || (c.0 == s && j < i))
        .count()
}

fn oracle(groups: &[RankedGroup], k: usize) -> [f64; 4] {
    let (mut r, mut map, mut mrr, mut p1, mut n) = (0.0, 0.0, 0.0, 0.0, 0);
    for g in groups {
        let pos: Vec<usize> = (0..g.n())
            .filter(|&i| g.candidates[i].1 == 1)
            .map(|i| oracle_rank(g, i))
            .collect();
        if pos.is_empty() {
            continue;
        }
        n += 1;
        r += pos.iter().filter(|&&rank| rank <= k).count() as f64 / pos.len() as f64;
        map += pos
            .iter()
            .map(|&rank| pos.iter().filter(|&&q| q <= rank).count() as f64 / rank as f64)
            .sum::<f64>()
            / pos.len() as f64;
        mrr += 1.0 / *pos.iter().min().unwrap() as f64;
        p1 += if pos.contains(&1) { 1.0 } else { 0.0 };
    }
    let n = n.max(1) as f64;
    [r / n, map / n, mrr / n, p1 / n]
}

fn c3_metrics(_: &Lab) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10;
    let groups: Vec<RankedGroup> = (0..1000)
        .map(|id| RankedGroup {
            group_id: id,
            candidates: (0..n)
                .map(|_| {
                    let score = rng.random_range(0..6) as f64 / 5.0;
                    (score, u8::from(rng.random_bool(0.25)))
                })
                .collect(),
        })
        .collect();
    let mut worst: f64 = 0.0;
    for k in [1, 2, 5] {
        let want = oracle(&groups, k);
        let got = [
            recall_at_k(&groups, n, k)?,
            mean_average_precision(&groups),
            mean_reciprocal_rank(&groups),
            precision_at_1(&groups),
        ];
        for (a, b) in want.iter().zip(&got) {
            worst = worst.max((a - b).abs());
        }
    }
    let hand = |labels: &[u8]| RankedGroup {
        group_id: 0,
        candidates: labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ((labels.len() - i) as f64, l))
            .collect(),
    };
    let ap = mean_average_precision(&[hand(&[1, 0, 1, 0])]);
    let mrr = mean_reciprocal_rank(&[hand(&[0, 0, 1, 0])]);
    let hand_ok = (ap - 5.0 / 6.0).abs() < 1e-12 && (mrr - 1.0 / 3.0).abs() < 1e-12;
    verdict(
        worst <= 1e-12 && hand_ok,
        format!("max oracle gap {worst:.1e} over 1000 groups; AP={ap:.6} MRR={mrr:.6}"),
    )
}

fn train_recall(checkpoint: &Path, data: &Path) -> Result<f64> {
    let m = load_model(checkpoint)?;
    let train = convmatch::data::load_tsv(&data.join("train.tsv"))?;
    let report =
        convmatch::eval::evaluate_run(&m.params, &train, &m.vocab, &[R10_1], None, Exec::Parallel)?;
    Ok(report.get(R10_1).unwrap_or(0.0))
}

fn c4_overfit(lab: &Lab) -> Result<Verdict> {
    let run = lab.cold(0)?;
    let train = train_recall(&run.checkpoint, &lab.data(0)?)?;
    let epochs = run.best_epoch.map_or(0, |e| e + 1);
    verdict(
        train >= 0.95 && run.test >= 0.80 && epochs <= 50 && run.seconds < 600.0,
        format!(
            "train R10@1={train:.3} held-out R10@1={:.3} best epoch {epochs}; {:.0} s",
            run.test, run.seconds
        ),
    )
}

fn c5_pretraining(lab: &Lab) -> Result<Verdict> {
    let none = contrastive_loss(&[1.0, 2.0], &[2.0, 1.0], &[], 0.5)?;
    let same = vec![1.0, 0.0];
    let uniform = contrastive_loss(&same, &same, &vec![same.clone(); 3], 0.007)?;
    let closed_ok = none.abs() <= 1e-6 && (uniform - 4f64.ln()).abs() <= 1e-6;
    let (mut warm, mut cold, mut per_seed) = (0.0, 0.0, Vec::new());
    for seed in 0..3 {
        let c = lab.cold(seed)?;
        let init = lab.pretrain(&format!("pre{seed}"), seed, "")?;
        let w = lab.finetune(&format!("warm{seed}"), seed, "", Some(&init))?;
        per_seed.push(format!("seed {seed} warm {:.3} cold {:.3}", w.test, c.test));
        warm += w.test / 3.0;
        cold += c.test / 3.0;
    }
    verdict(
        closed_ok && warm >= cold,
        format!(
            "mean held-out R10@1 warm {warm:.3} cold {cold:.3} ({}); loss no-negatives {none:.1e}, uniform {uniform:.7}",
            per_seed.join(", ")
        ),
    )
}

fn c6_perturbation(lab: &Lab) -> Result<Verdict> {
    let init = lab.pretrain("pre_ordered", 0, "ordered_")?;
    let run = lab.finetune("ordered", 0, "ordered_", Some(&init))?;
    let data = lab.data(0)?;
    let over = [
        ("checkpoint", show(&run.checkpoint)),
        ("test", show(&data.join("ordered_test.tsv"))),
        ("perturb_seed", "1".to_string()),
    ];
    let out = cmd_eval(&desk(&lab.dir("ordered_eval"), &over)?)?;
    let norm = out.norm.get(R10_1).unwrap_or(0.0);
    let rand = out.rand.and_then(|r| r.get(R10_1)).unwrap_or(1.0);
    verdict(
        rand <= norm - 0.05,
        format!("ordered variant Norm R10@1={norm:.3} Rand R10@1={rand:.3}"),
    )
}

/// `vocab * d` plus every kernel and bias written out by hand.
fn hand_count(d: usize, t: usize, vocab: usize) -> usize {
    let pointwise = 4 * (d * d + d);
    let local = 3 * d * d + d;
    let context = (d * d + d) + (5 * d * d + d);
    let discourse = 2 * (3 * d * d + d);
    let aggregate = (3 * t * t + t) + (d * d + d);
    vocab * d + pointwise + local + context + discourse + aggregate + d + 1
}

fn c7_params(_: &Lab) -> Result<Verdict> {
    let cfg = ModelConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for vocab in [0, 1000, 50_000] {
        let count = param_count(&cfg, vocab);
        let params = ModelParams::<f32>::zeros(&cfg, vocab.max(1))?;
        let allocated = params.numel() - params.embedding.numel() + vocab * cfg.dim;
        let hand = hand_count(cfg.dim, cfg.turns, vocab);
        ok &= count.total == allocated && count.total == hand;
        lines.push(format!("V={vocab}: {} (alloc {allocated}, hand {hand})", count.total));
    }
    let big = param_count(&cfg, 50_000);
    let share = big.non_embedding() as f64 / big.total as f64;
    ok &= share < 0.1;
    lines.push(format!("non-embedding share at V=50000 {:.1}%", 100.0 * share));
    verdict(ok, lines.join("; "))
}

fn c8_ablation(lab: &Lab) -> Result<Verdict> {
    let mut sums: Vec<(String, f64)> = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let data = lab.data(seed)?;
        let over = [
            ("seed", seed.to_string()),
            ("epochs", "30".to_string()),
            ("train", show(&data.join("train.tsv"))),
            ("valid", show(&data.join("valid.tsv"))),
        ];
        let rows = cmd_ablate(&desk(&lab.dir(&format!("ablate{seed}")), &over)?)?;
        let full = rows.iter().find(|r| r.ablation.is_none()).unwrap();
        for r in &rows {
            if !r.ablation.is_none() && r.params >= full.params {
                ok = false;
            }
            match sums.iter_mut().find(|(n, _)| n == r.name) {
                Some(s) => s.1 += r.valid / 3.0,
                None => sums.push((r.name.to_string(), r.valid / 3.0)),
            }
        }
    }
    let full = sums[0].1;
    ok &= sums.iter().all(|(_, v)| *v <= full);
    let table: Vec<String> = sums.iter().map(|(n, v)| format!("{n} {v:.3}")).collect();
    verdict(ok, format!("mean valid R10@1: {}", table.join(", ")))
}

fn c9_latency(lab: &Lab) -> Result<Verdict> {
    let mut cfg = RunConfig::default();
    cfg.out = lab.dir("bench");
    cfg.threads = 1;
    cfg.warmup = 5;
    cfg.runs = 30;
    let out = cmd_bench(&cfg)?;
    let r = &out.latency[0];
    let reported = ["median_ms=", "p95_ms=", "threads="]
        .iter()
        .all(|k| out.text.contains(k));
    verdict(
        r.median_ms < 50.0 && reported,
        format!(
            "{}x{}x{}: median {:.2} ms, p95 {:.2} ms, {} thread(s)",
            cfg.model.turns, cfg.model.words, cfg.model.dim, r.median_ms, r.p95_ms, r.threads
        ),
    )
}

fn pipeline_outputs(root: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let data = root.join("data");
    cmd_synth(&desk(&data, &[("seed", "7".into()), ("synth_groups", "60".into())])?)?;
    let files = |split: &str| show(&data.join(format!("{split}.tsv")));
    let pre = cmd_pretrain(&desk(
        &root.join("pre"),
        &[("train", files("train")), ("pretrain_epochs", "2".into())],
    )?)?;
    let ft = cmd_finetune(&desk(
        &root.join("ft"),
        &[
            ("init", show(&pre.checkpoint)),
            ("train", files("train")),
            ("valid", files("valid")),
            ("test", files("test")),
            ("epochs", "3".into()),
        ],
    )?)?;
    cmd_eval(&desk(
        &root.join("eval"),
        &[
            ("checkpoint", show(&ft.checkpoint)),
            ("test", files("test")),
            ("perturb_seed", "5".into()),
        ],
    )?)?;
    let mut out = Vec::new();
    for rel in [
        "data/train.tsv",
        "pre/model.dcv",
        "pre/train.log",
        "ft/model.dcv",
        "ft/train.log",
        "ft/metrics.txt",
        "eval/eval.txt",
    ] {
        out.push((rel.to_string(), fs::read(root.join(rel))?));
    }
    Ok(out)
}

fn c10_determinism(lab: &Lab) -> Result<Verdict> {
    let a = pipeline_outputs(&lab.dir("det_a"))?;
    let b = pipeline_outputs(&lab.dir("det_b"))?;
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    if a.iter().any(|(_, bytes)| bytes.is_empty()) {
        bail!("an output file is empty");
    }
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("identical bytes: {}", names.join(", "))
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

type Criterion = fn(&Lab) -> Result<Verdict>;

fn main() {
    let criteria: [(usize, &str, Criterion); 10] = [
        (1, "gradient suite", c1_gradients),
        (2, "residual identity", c2_identity),
        (3, "metric oracles", c3_metrics),
        (4, "overfit", c4_overfit),
        (5, "pretraining direction", c5_pretraining),
        (6, "perturbation direction", c6_perturbation),
        (7, "parameter accounting", c7_params),
        (8, "ablation suite", c8_ablation),
        (9, "inference latency", c9_latency),
        (10, "determinism", c10_determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let lab = Lab::new().expect("temporary directory");
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = match catch_unwind(AssertUnwindSafe(|| run(&lab))) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict {
                pass: false,
                detail: format!("error: {e:#}"),
            },
            Err(_) => Verdict {
                pass: false,
                detail: "panicked".into(),
            },
        };
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {name}: {} ({}) [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
