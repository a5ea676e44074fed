//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p arper-cli --test acceptance`; the process exits
//! non-zero when any criterion fails. Set `ACCEPTANCE_ONLY=3,7` to run a
//! subset.

mod oracles;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use arper_cli::{cmd_run, RunConfig, RunStatus};
use arper_core::continual::{
    learn_task, run_stream, EncodedStream, MethodSpec, ModelShape, Selection, TrainConfig, Variant,
};
use arper_core::corpus::{
    generate_synthetic_stream, DialogAct, Encoder, Example, SyntheticSpec, Task, TaskStream,
    Utterance,
};
use arper_core::exemplar::{
    allocate_budget, select_exemplars_herding, select_exemplars_prioritized, select_herding,
    select_prioritized, ExemplarStore,
};
use arper_core::metrics::{bleu4, omega, ser, slot_errors};
use arper_core::model::{Model, ModelConfig};
use arper_core::regularizer::fisher_diagonal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn small_model(seed: u64, scale: f64) -> Model {
    let mut m = Model::init(ModelConfig::new(6, 5, 12, 7), seed).unwrap();
    for w in m.theta_mut() {
        *w *= scale;
    }
    m
}

fn random_example(rng: &mut ChaCha8Rng, vocab: usize, da_dim: usize) -> Example {
    let len = rng.gen_range(1..=7);
    Example {
        tokens: (0..len).map(|_| rng.gen_range(0..vocab)).collect(),
        da: (0..da_dim)
            .map(|_| f64::from(rng.gen_bool(0.5) as u8))
            .collect(),
    }
}

fn c1_gradient() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let cases = 24;
    let mut n_params = 0;
    for case in 0..cases {
        let model = small_model(100 + case, 4.0);
        n_params = model.num_params();
        ensure(n_params <= 2000, || format!("{n_params} parameters"))?;
        let ex = random_example(&mut rng, 12, 7);
        let (_, analytic) = model.grad_ce(&ex).map_err(|e| e.to_string())?;
        let numeric = oracles::fd_grad(&model, &ex);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(oracles::rel_err(*a, *n, 1e-6));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{cases} cases, {n_params} params, max rel err {worst:.2e}, {secs:.1}s"
    ))
}

fn c2_fisher() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = small_model(7, 4.0);
    let exemplars: Vec<Example> = (0..8).map(|_| random_example(&mut rng, 12, 7)).collect();
    let analytic = fisher_diagonal(&model, &exemplars).map_err(|e| e.to_string())?;
    let mut expected = vec![0.0; model.num_params()];
    for ex in &exemplars {
        for (e, g) in expected.iter_mut().zip(oracles::fd_grad(&model, ex)) {
            *e += g * g / exemplars.len() as f64;
        }
    }
    let worst = analytic
        .0
        .iter()
        .zip(&expected)
        .map(|(a, b)| oracles::rel_err(*a, *b, 1e-6))
        .fold(0.0, f64::max);
    ensure(worst < 1e-3, || format!("max relative error {worst:.3e}"))?;
    Ok(format!(
        "{} exemplars, max rel err {worst:.2e}",
        exemplars.len()
    ))
}

const SLOT_POOL: [&str; 4] = ["name", "area", "food", "price"];

/// Up to 20 utterances drawing their slot sets from at most 5 distinct sets.
fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Utterance> {
    let n_sets = rng.gen_range(1..=5);
    let sets: Vec<Vec<&str>> = (0..n_sets)
        .map(|_| {
            SLOT_POOL
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.5))
                .collect()
        })
        .collect();
    let words = ["the", "a", "is", "nice", "place", "in"];
    (0..rng.gen_range(1..=20))
        .map(|_| {
            let set = &sets[rng.gen_range(0..sets.len())];
            let mut da = DialogAct::new("hotel", "inform");
            for s in set {
                da = da.with_pair(*s, "v");
            }
            // duplicated names exercise set (not multiset) identity
            if !set.is_empty() && rng.gen_bool(0.2) {
                da = da.with_pair(set[0], "w");
            }
            let mut text: Vec<String> = (0..rng.gen_range(1..4))
                .map(|_| words[rng.gen_range(0..words.len())].to_string())
                .collect();
            for p in da.required_placeholders() {
                text.push(p);
            }
            Utterance::from_delex(&text.join(" "), da, "")
        })
        .collect()
}

fn corpus_encoder(items: &[Utterance]) -> Encoder {
    let mut task = Task::new(0, "hotel");
    task.train = items.to_vec();
    Encoder::for_stream(&TaskStream::new(vec![task]).unwrap())
}

fn c3_algorithm1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpora = 150;
    for c in 0..corpora {
        let items = random_corpus(&mut rng);
        let enc = corpus_encoder(&items);
        let model = Model::init(
            ModelConfig::new(4, 3, enc.vocab.len(), enc.inventory.dim()),
            c,
        )
        .unwrap();
        let m = rng.gen_range(0..=items.len() + 2);
        let beta = [0.0, 0.5, 1.0][c as usize % 3];
        let got = select_exemplars_prioritized(&items, &model, &enc, m, beta)
            .map_err(|e| e.to_string())?;
        let got: Vec<usize> = got.iter().map(|e| e.source_index).collect();
        let scores: Vec<f64> = items
            .iter()
            .map(|u| {
                let loss = model.loss_ce(&enc.encode(u).unwrap()).unwrap();
                let k = u.da.slot_set().len() as f64;
                if beta == 0.0 {
                    loss
                } else {
                    loss * k.powf(beta)
                }
            })
            .collect();
        let sets: Vec<BTreeSet<String>> = items.iter().map(|u| u.da.slot_set()).collect();
        let want = oracles::algorithm1(&scores, &sets, m);
        ensure(got == want, || {
            format!("corpus {c}: got {got:?}, oracle {want:?}")
        })?;

        // integer scores force ties
        let tied: Vec<f64> = (0..items.len())
            .map(|_| rng.gen_range(0..3) as f64)
            .collect();
        let got_tied: Vec<usize> = select_prioritized(&items, &tied, m)
            .iter()
            .map(|e| e.source_index)
            .collect();
        let want_tied = oracles::algorithm1(&tied, &sets, m);
        ensure(got_tied == want_tied, || {
            format!("corpus {c} (tied): got {got_tied:?}, oracle {want_tied:?}")
        })?;

        let distinct: BTreeSet<&BTreeSet<String>> = sets.iter().collect();
        let first_pass = distinct.len().min(got.len());
        let prefix: BTreeSet<&BTreeSet<String>> =
            got[..first_pass].iter().map(|&i| &sets[i]).collect();
        ensure(prefix.len() == first_pass, || {
            format!("corpus {c}: first pass repeats a slot set")
        })?;
    }
    Ok(format!(
        "{corpora} corpora (plus tie-forcing variants) identical to the oracle"
    ))
}

fn c4_herding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpora = 150;
    for c in 0..corpora {
        let n = rng.gen_range(1..=10);
        let dim = rng.gen_range(1..=6);
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| f64::from(rng.gen_bool(0.4) as u8))
                    .collect()
            })
            .collect();
        let items: Vec<Utterance> = (0..n)
            .map(|_| Utterance::from_delex("x", DialogAct::new("d", "i"), ""))
            .collect();
        let m = rng.gen_range(0..=n);
        let got: Vec<usize> = select_herding(&items, &features, &vec![0.0; n], m)
            .iter()
            .map(|e| e.source_index)
            .collect();
        let want = oracles::herding(&features, m);
        ensure(got == want, || {
            format!("corpus {c}: got {got:?}, oracle {want:?}")
        })?;
    }
    // the model-facing wrapper uses DA feature vectors
    let items = random_corpus(&mut rng);
    let enc = corpus_encoder(&items);
    let model = Model::init(
        ModelConfig::new(4, 3, enc.vocab.len(), enc.inventory.dim()),
        0,
    )
    .unwrap();
    let feats: Vec<Vec<f64>> = items
        .iter()
        .map(|u| enc.inventory.feature_vector(&u.da).unwrap())
        .collect();
    let m = items.len().min(5);
    let got: Vec<usize> = select_exemplars_herding(&items, &model, &enc, m, 0.5)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|e| e.source_index)
        .collect();
    ensure(got == oracles::herding(&feats, m), || {
        "wrapper disagrees with the oracle".into()
    })?;
    Ok(format!(
        "{corpora} corpora of <= 10 items identical to exhaustive greedy"
    ))
}

fn tiny_stream(seed: u64, n_tasks: usize, per_task: usize) -> TaskStream {
    generate_synthetic_stream(&SyntheticSpec {
        n_tasks,
        utterances_per_task: per_task,
        slots_per_task: 3,
        template_count: 2,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn quick_train(budget: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        max_epochs: 2,
        patience: 2,
        budget,
        lambda_base: Some(50.0),
        max_decode_len: 15,
        seed,
        ..Default::default()
    }
}

const TINY: ModelShape = ModelShape {
    hidden_size: 6,
    embed_size: 5,
};

fn c5_budget() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // allocation arithmetic
    for _ in 0..2000 {
        let sizes: Vec<usize> = (0..rng.gen_range(1..=6))
            .map(|_| rng.gen_range(1..=400))
            .collect();
        let budget = rng.gen_range(0..=1500);
        let shares = allocate_budget(budget, &sizes);
        let total: usize = sizes.iter().sum();
        ensure(shares.iter().sum::<usize>() == budget.min(total), || {
            format!("{budget} over {sizes:?} gave {shares:?}")
        })?;
        for (s, &d) in shares.iter().zip(&sizes) {
            ensure(*s <= d, || format!("{shares:?} exceeds sizes {sizes:?}"))?;
            if budget <= total {
                let exact = budget as f64 * d as f64 / total as f64;
                ensure((*s as f64 - exact).abs() < 1.0, || {
                    format!("share {s} vs exact {exact} for {sizes:?}, M={budget}")
                })?;
            }
        }
    }

    // store invariants across randomized streams and methods
    let methods = [
        MethodSpec::new(Variant::Er(Selection::Prioritized)),
        MethodSpec::new(Variant::Er(Selection::Random)),
        MethodSpec::new(Variant::Er(Selection::Herding)),
        MethodSpec::new(Variant::Arper),
    ];
    let mut checks = 0;
    for s in 0..8u64 {
        let base = tiny_stream(s, rng.gen_range(2..=4), 40);
        // uneven task sizes
        let tasks: Vec<Task> = base
            .tasks
            .iter()
            .map(|t| {
                let mut t = t.clone();
                let keep = rng.gen_range(5..=t.train.len());
                t.train.truncate(keep);
                t
            })
            .collect();
        let stream = TaskStream::new(tasks).unwrap();
        let budget = rng.gen_range(0..=30);
        let method = methods[s as usize % methods.len()];
        let config = quick_train(budget, s);
        let data = EncodedStream::new(&stream).unwrap();
        let mut model = Model::init(TINY.config_for(&data.encoder), s).unwrap();
        let mut store = ExemplarStore::new(budget);
        let mut history: Vec<ExemplarStore> = Vec::new();
        for t in 0..stream.len() {
            let out = learn_task(
                &stream, &data, t, &mut store, &model, &config, &method, None,
            )
            .map_err(|e| e.to_string())?;
            model = out.model;
            ensure(store.total() <= budget, || {
                format!("stream {s} task {t}: {} > M={budget}", store.total())
            })?;
            for earlier in &history {
                for (task, list) in &store.per_task {
                    if let Some(old) = earlier.get(*task) {
                        ensure(list.is_prefix_of(old), || {
                            format!("stream {s}: list of task {task} is not a prefix of its earlier self")
                        })?;
                    }
                }
            }
            history.push(store.clone());
            checks += 1;
        }
    }
    Ok(format!(
        "2000 allocations, {checks} learn_task steps over 8 streams"
    ))
}

fn thetas_equal(a: &Model, b: &Model) -> bool {
    a.theta().len() == b.theta().len()
        && a.theta()
            .iter()
            .zip(b.theta())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn c6_reductions() -> Outcome {
    let stream = tiny_stream(6, 3, 40);
    let finetune = MethodSpec::new(Variant::Finetune);
    let base =
        run_stream(&stream, &finetune, &quick_train(0, 9), &TINY).map_err(|e| e.to_string())?;

    let er = run_stream(
        &stream,
        &MethodSpec::new(Variant::Er(Selection::Random)),
        &quick_train(0, 9),
        &TINY,
    )
    .map_err(|e| e.to_string())?;
    ensure(thetas_equal(&er.final_model, &base.final_model), || {
        "ER with empty store differs".into()
    })?;

    let mut cfg = quick_train(0, 9);
    cfg.lambda_base = Some(0.0);
    let arper = run_stream(&stream, &MethodSpec::new(Variant::Arper), &cfg, &TINY)
        .map_err(|e| e.to_string())?;
    ensure(thetas_equal(&arper.final_model, &base.final_model), || {
        "ARPER(λ=0, M=0) differs".into()
    })?;

    let one = stream.subset(&[0]).unwrap();
    let full = run_stream(
        &one,
        &MethodSpec::new(Variant::Full),
        &quick_train(20, 9),
        &TINY,
    )
    .map_err(|e| e.to_string())?;
    let ft1 = run_stream(&one, &finetune, &quick_train(20, 9), &TINY).map_err(|e| e.to_string())?;
    ensure(thetas_equal(&full.final_model, &ft1.final_model), || {
        "Full on one task differs".into()
    })?;

    // first task identical across every method
    let firsts: Vec<Model> = MethodSpec::all()
        .iter()
        .map(|m| {
            run_stream(&one, m, &quick_train(20, 9), &TINY)
                .unwrap()
                .final_model
        })
        .collect();
    ensure(firsts.iter().all(|m| thetas_equal(m, &firsts[0])), || {
        "first-task models differ across methods".into()
    })?;
    Ok("ER∅, ARPER(λ=0,M=0), Full|T=1 bit-identical to Finetune".into())
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn c7_metrics() -> Outcome {
    let da = |slots: &[&str]| {
        let mut d = DialogAct::new("hotel", "inform");
        for s in slots {
            d = d.with_pair(*s, "v");
        }
        d
    };
    let cases: [(&str, &[&str], f64); 5] = [
        (
            "[slot-hotel-name] is in [slot-hotel-area]",
            &["name", "area"],
            0.0,
        ),
        ("[slot-hotel-name] is nice", &["name", "area"], 0.5),
        (
            "[slot-hotel-name] [slot-hotel-name] [slot-hotel-price]",
            &["name", "area"],
            1.5,
        ),
        (
            "[slot-hotel-stars] [slot-hotel-parking] [slot-hotel-wifi]",
            &["name"],
            4.0,
        ),
        ("no slots at all", &["name", "area", "price"], 1.0),
    ];
    for (text, slots, want) in cases {
        let got = ser(&toks(text), &da(slots));
        ensure(got == want, || format!("SER of `{text}`: {got} != {want}"))?;
    }
    let e = slot_errors(
        &toks("[slot-hotel-stars] [slot-hotel-parking] [slot-hotel-wifi]"),
        &da(&["name"]),
    );
    ensure((e.missing, e.redundant, e.required) == (1, 3, 1), || {
        format!("{e:?}")
    })?;

    let cands = [
        "the [slot-hotel-name] is located in the [slot-hotel-area] of town",
        "i recommend [slot-hotel-name] it has free wifi",
        "there are [slot-hotel-choice] hotels in the [slot-hotel-area]",
        "the [slot-hotel-name] is a cheap place to stay",
    ];
    let refs: Vec<Vec<&str>> = vec![
        vec![
            "the [slot-hotel-name] is in the [slot-hotel-area] of town",
            "[slot-hotel-name] is located in the [slot-hotel-area] part of town",
        ],
        vec![
            "i would recommend [slot-hotel-name] which has free wifi",
            "how about [slot-hotel-name] it has free wifi and parking",
        ],
        vec!["there are [slot-hotel-choice] hotels located in the [slot-hotel-area]"],
        vec![
            "[slot-hotel-name] is a cheap hotel",
            "the [slot-hotel-name] is a cheap guesthouse to stay at tonight",
        ],
    ];
    let short_c = ["a b c d e", "x y z w"];
    let short_r: Vec<Vec<&str>> = vec![vec!["a b c d e f g"], vec!["x y z w q", "x y z w q r s t"]];
    // values frozen from a third-party corpus BLEU (no smoothing, uniform weights)
    for (c, r, frozen) in [
        (&cands[..], &refs, 0.651_482_188_990_990_8),
        (&short_c[..], &short_r, 0.716_531_310_573_789_3),
    ] {
        let ours = bleu4(
            &c.iter().map(|s| toks(s)).collect::<Vec<_>>(),
            &r.iter()
                .map(|g| g.iter().map(|s| toks(s)).collect())
                .collect::<Vec<_>>(),
        )
        .map_err(|e| e.to_string())?;
        let reference = oracles::reference_bleu(c, r);
        ensure((ours - reference).abs() < 1e-9, || {
            format!("bleu {ours} vs oracle {reference}")
        })?;
        ensure((ours - frozen).abs() < 1e-9, || {
            format!("bleu {ours} vs frozen {frozen}")
        })?;
    }

    let exact = [
        (vec![0.5, 0.25, 0.75], 0.5),
        (vec![2.0], 2.0),
        (vec![1.0, 2.0, 3.0, 6.0], 3.0),
    ];
    for (vals, want) in exact {
        let got = omega(&vals).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("omega {vals:?} = {got}"))?;
    }
    Ok("SER hand counts (incl. 400%), BLEU to 1e-9 vs two references, exact Ω".into())
}

struct Arm {
    method: MethodSpec,
    ser_all: Vec<f64>,
    ser_first: Vec<f64>,
}

fn c8_forgetting() -> Outcome {
    let start = Instant::now();
    let stream = generate_synthetic_stream(&SyntheticSpec::default()).unwrap();
    let vocab = stream.vocab().len();
    let shape = ModelShape {
        hidden_size: 32,
        embed_size: 32,
    };
    let seeds = [0u64, 1, 2];
    let mut arms: Vec<Arm> = ["finetune", "er_random", "er_prio", "arper"]
        .iter()
        .map(|n| Arm {
            method: n.parse().unwrap(),
            ser_all: Vec::new(),
            ser_first: Vec::new(),
        })
        .collect();
    for arm in &mut arms {
        for &seed in &seeds {
            let config = TrainConfig {
                batch_size: 32,
                budget: 50,
                lambda_base: Some(1000.0),
                max_decode_len: 30,
                seed,
                ..Default::default()
            };
            let r = run_stream(&stream, &arm.method, &config, &shape).map_err(|e| e.to_string())?;
            arm.ser_all.push(r.omega.ser_all);
            arm.ser_first.push(r.omega.ser_first);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let get = |name: &str| arms.iter().find(|a| a.method.to_string() == name).unwrap();
    let (ft, rnd, prio, arper) = (
        get("finetune"),
        get("er_random"),
        get("er_prio"),
        get("arper"),
    );
    let ft_first = mean(&ft.ser_first);
    let arper_first = mean(&arper.ser_first);
    let arper_all = mean(&arper.ser_all);
    let rnd_all = mean(&rnd.ser_all);
    let prio_all = mean(&prio.ser_all);
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "vocab {vocab}; Ω_first SER finetune {ft_first:.4} vs arper {arper_first:.4}; \
         Ω_all SER arper {arper_all:.4}, er_random {rnd_all:.4}, er_prio {prio_all:.4}; {secs:.0}s"
    );
    ensure(ft_first >= 2.0 * arper_first, || {
        format!("finetune not ≥ 2× arper: {detail}")
    })?;
    ensure(arper_all <= rnd_all, || {
        format!("arper worse than er_random: {detail}")
    })?;
    ensure(prio_all <= rnd_all + 0.02, || {
        format!("er_prio too far behind er_random: {detail}")
    })?;
    ensure(secs < 1200.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn c9_adaptive_lambda() -> Outcome {
    let base = tiny_stream(9, 2, 40);
    let mut tasks = base.tasks.clone();
    // third task re-uses the first task's text: no new tokens
    let mut repeat = base.tasks[0].clone();
    repeat.id = 2;
    repeat.name = "repeat".into();
    tasks.push(repeat);
    let stream = TaskStream::new(tasks).unwrap();
    let (_, v_new) = stream.vocab_counts(3).unwrap();
    ensure(v_new == 0, || format!("task 3 adds {v_new} tokens"))?;
    let r = run_stream(
        &stream,
        &MethodSpec::new(Variant::Arper),
        &quick_train(20, 1),
        &TINY,
    )
    .map_err(|e| e.to_string())?;
    let (l2, l3) = (r.lambdas[1].unwrap(), r.lambdas[2].unwrap());
    ensure(l3 > l2, || format!("λ3 {l3} not above λ2 {l2}"))?;
    Ok(format!("λ2 = {l2:.3}, λ3 = {l3:.3}"))
}

fn c10_determinism() -> Outcome {
    let toml = r#"
[corpus.synthetic]
n_tasks = 2
utterances_per_task = 50
slots_per_task = 3
template_count = 2

[run]
methods = ["finetune", "er_random", "er_prio+kd", "arper"]
seeds = [0, 1]
order = "rotate-first"

[train]
lambda_base = 100.0
max_epochs = 3
batch_size = 16
budget = 12
max_decode_len = 20

[model]
hidden_size = 8
embed_size = 6
"#;
    let cfg = RunConfig::from_toml(toml).map_err(|e| format!("{e:#}"))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = cmd_run(&cfg, Path::new("."), &a, 1, None).map_err(|e| format!("{e:#}"))?;
    let second = cmd_run(&cfg, Path::new("."), &b, 2, None).map_err(|e| format!("{e:#}"))?;
    ensure(first.len() == 16 && second.len() == 16, || {
        format!("{} / {} runs", first.len(), second.len())
    })?;
    for (x, y) in first.iter().zip(&second) {
        ensure(
            x.status == RunStatus::Completed && y.status == RunStatus::Completed,
            || format!("{:?} / {:?}", x.status, y.status),
        )?;
        let ca = std::fs::read(x.dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        let cb = std::fs::read(y.dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        ensure(x.dir.file_name() == y.dir.file_name(), || {
            "run directories differ".into()
        })?;
        ensure(ca == cb, || format!("{} differs", x.dir.display()))?;
    }
    Ok(format!(
        "{} runs, metrics CSVs byte-identical (1 vs 2 workers)",
        first.len()
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "gradient correctness", c1_gradient),
        (2, "Fisher correctness", c2_fisher),
        (3, "prioritized selection oracle", c3_algorithm1),
        (4, "herding oracle", c4_herding),
        (5, "budget invariants", c5_budget),
        (6, "method-reduction identities", c6_reductions),
        (7, "metric oracles", c7_metrics),
        (8, "directional forgetting", c8_forgetting),
        (9, "adaptive lambda", c9_adaptive_lambda),
        (10, "determinism", c10_determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
