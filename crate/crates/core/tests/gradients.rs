use convmatch::data::{stack_instance, DialogueInstance, Layout, Vocabulary};
use convmatch::model::{score, Ablation, ModelConfig, ModelParams, ParamVars};
use convmatch::tensor::{grad_check, grad_check_step, Tape, Tensor, Var, FD_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn check(f: impl Fn(&mut Tape<'_, f64>, &[Var]) -> convmatch::Result<Var>, inputs: &[Tensor<f64>], tol: f64) {
    let report = grad_check(f, inputs, tol).unwrap();
    assert!(report.passed, "errors {:?}", report.max_rel_error);
}

/// Projects `v` onto fixed random weights so every output element matters.
fn project(t: &mut Tape<'_, f64>, v: Var, seed: u64) -> convmatch::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(t.value(v).shape(), &mut rng);
    let w = t.constant(w);
    t.dot(v, w)
}

#[test]
fn conv2d_with_tall_and_wide_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (kh, kw) in [(1, 1), (1, 3), (3, 1), (3, 3)] {
        let inputs = [
            random(&[3, 5, 2], &mut rng),
            random(&[kh, kw, 2, 3], &mut rng),
            random(&[3], &mut rng),
        ];
        check(
            |t, v| {
                let c = t.conv2d_same(v[0], v[1], v[2])?;
                project(t, c, 9)
            },
            &inputs,
            1e-4,
        );
    }
}

#[test]
fn conv1d_kernel_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in [1, 3, 5] {
        let inputs = [
            random(&[7, 3], &mut rng),
            random(&[k, 3, 2], &mut rng),
            random(&[2], &mut rng),
        ];
        check(
            |t, v| {
                let c = t.conv1d_same(v[0], v[1], v[2])?;
                project(t, c, 4)
            },
            &inputs,
            1e-4,
        );
    }
}

#[test]
fn elementwise_and_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = [random(&[4, 6], &mut rng), random(&[4, 6], &mut rng)];
    check(
        |t, v| {
            let m = t.mul(v[0], v[1])?;
            let g = t.gelu(m);
            let s = t.sigmoid(g);
            let tr = t.transpose(s)?;
            let r = t.reshape(tr, &[24])?;
            let sc = t.scale(r, 0.5);
            let a = t.add(sc, r)?;
            project(t, a, 5)
        },
        &inputs,
        1e-4,
    );
}

#[test]
fn sum_mean_and_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs = [random(&[5], &mut rng), random(&[2, 3], &mut rng)];
    check(
        |t, v| {
            let a = t.sum(v[0]);
            let b = t.mean(v[1]);
            let s = t.stack(&[a, b])?;
            project(t, s, 6)
        },
        &inputs,
        1e-4,
    );
}

#[test]
fn embedding_accumulates_repeated_ids() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [random(&[4, 3], &mut rng)];
    check(
        |t, v| {
            let e = t.embedding(v[0], &[1, 3, 1, 0, 2, 1], &[2, 3])?;
            project(t, e, 7)
        },
        &inputs,
        1e-4,
    );
}

#[test]
fn maxpool_along_each_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for axis in 0..3 {
        let inputs = [random(&[3, 4, 2], &mut rng)];
        check(
            |t, v| {
                let p = t.maxpool(v[0], axis, None)?;
                project(t, p, 8)
            },
            &inputs,
            1e-4,
        );
    }
}

#[test]
fn bce_and_contrastive_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = [random(&[4], &mut rng)];
    check(
        |t, v| {
            let p = t.sigmoid(v[0]);
            t.bce(p, &[1.0, 0.0, 0.0, 1.0])
        },
        &inputs,
        1e-4,
    );
    let inputs = [random(&[6], &mut rng), random(&[6], &mut rng), random(&[6], &mut rng)];
    check(
        |t, v| {
            let pos = t.cosine(v[0], v[1])?;
            let neg = t.cosine(v[0], v[2])?;
            let logits = t.stack(&[pos, neg])?;
            t.info_nce(logits, 0.5)
        },
        &inputs,
        1e-4,
    );
}

fn toy() -> (DialogueInstance, Vocabulary) {
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    let inst = DialogueInstance {
        context: vec![words("my wifi drops"), words("which driver do you use")],
        response: words("the default one"),
        label: 1,
        group_id: 0,
    };
    let vocab = Vocabulary::build(std::slice::from_ref(&inst));
    (inst, vocab)
}

fn pipeline_check(cfg: &ModelConfig, seed: u64, step: f64) -> f64 {
    let (inst, vocab) = toy();
    let stacked = stack_instance(&inst, &vocab, Layout::from(cfg));
    let params = ModelParams::<f64>::init(cfg, vocab.len(), seed).unwrap();
    let inputs: Vec<Tensor<f64>> = params.tensors().into_iter().cloned().collect();
    let indices: Vec<usize> = params.convs.iter().map(|c| c.spec.index).collect();
    let report = grad_check_step(
        |t, v| {
            let mut convs = [None; 11];
            for (i, &index) in indices.iter().enumerate() {
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
            Ok(score(t, &vars, cfg, &stacked)?.0)
        },
        &inputs,
        1e-3,
        step,
    )
    .unwrap();
    assert!(report.passed, "errors {:?} abs {:?}", report.max_rel_error, report.max_abs_error);
    report.worst()
}

#[test]
fn full_score_pipeline_on_toy_shapes() {
    let worst = pipeline_check(&ModelConfig::with_shape(3, 4, 8), 5, FD_STEP);
    assert!(worst <= 1e-3);
}

#[test]
fn ablated_pipelines() {
    for (_, ablation) in Ablation::variants() {
        pipeline_check(&ModelConfig::with_shape(3, 4, 8).with_ablation(ablation), 6, 1e-5);
    }
}
