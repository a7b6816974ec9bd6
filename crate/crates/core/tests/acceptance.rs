//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL line
//! each and exits non-zero if any failed.
//!
//! Criteria 4–6 train real models on the configurations in `configs/` and
//! take several minutes in total.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};
use std::{fs, panic};

use graphdiff::autodiff::{gradient_check, Tape, Var};
use graphdiff::checkpoint::Checkpoint;
use graphdiff::commands::{
    cmd_em, cmd_eval, cmd_infer, cmd_reason, cmd_train, inductive_data, load_checkpoint, node_metrics, restore,
    EmOptions, InferRequest, Restored, CHECKPOINT_FILE,
};
use graphdiff::config::{Overrides, RunConfig};
use graphdiff::diffusion::{
    aggregate_samples, deterministic_infer, discretize, eps_to_mu, forward_sample, posterior_mean, stochastic_infer,
    NoiseSchedule, ScheduleSpec,
};
use graphdiff::em::{manifold_residual, manifold_residual_grad, manifold_sample_traced, train_meanfield, Buffer};
use graphdiff::gnn::{
    meanfield_forward, Activation, Backbone, Denoiser, DenoiserConfig, EdgeAggregation, EdgeDenoiser, EdgeInput,
    NodeDenoiser, NodeInput, TargetLayout,
};
use graphdiff::graph::{generate_reasoning_graph, one_hot_relax, Graph, ReasoningGraphSpec, PRESENT_COLUMN};
use graphdiff::reasoning::{
    oracle_connected_components, oracle_shortest_path, pair_index, pair_weights, reasoning_instance,
};
use graphdiff::rng::SeededRng;
use graphdiff::{Result as GdResult, Tensor};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T>(r: GdResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let spent = started.elapsed();
    ensure!(spent <= limit, "{what} took {:.0} s, limit {:.0} s", spent.as_secs_f64(), limit.as_secs_f64());
    Ok(())
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str, seed: u64, out: &Path) -> Result<RunConfig, String> {
    let mut cfg = ok(RunConfig::load(configs_dir().join(name)))?;
    cfg.apply(&Overrides { seed: Some(seed), out: Some(out.to_path_buf()), ..Default::default() });
    Ok(cfg)
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-3;

/// `sum(out ⊙ r)` for a fixed random `r`.
fn project(tape: &mut Tape, out: Var, seed: u64) -> GdResult<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(SeededRng::new(seed).normal_tensor(r, c));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn off_kink(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.uniform_range(0.1, 2.0);
            if rng.uniform() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn five_node_graph(rng: &mut SeededRng) -> Graph {
    let edges = vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3), (0, 4), (4, 0)];
    Graph::new(5, edges, rng.normal_tensor(5, 3)).unwrap()
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let mut rng = SeededRng::new(7);
    let (a, b) = (rng.normal_tensor(3, 4), rng.normal_tensor(3, 4));
    let w = rng.normal_tensor(4, 2);
    let row = rng.normal_tensor(1, 4);
    let right = rng.normal_tensor(3, 2);
    let kinked = off_kink(&mut rng, 3, 4);
    let scatter_src = rng.normal_tensor(5, 3);
    let index: Arc<[usize]> = vec![2, 0, 2, 1, 0].into();
    let weights: Arc<[f64]> = vec![0.5, -1.5, 2.0].into();

    type Op = Box<dyn Fn(&mut Tape, &[Var]) -> GdResult<Var>>;
    let cases: Vec<(&str, Op, Vec<Tensor>)> = vec![
        ("matmul", Box::new(|t, v| t.matmul(v[0], v[1])), vec![a.clone(), w.clone()]),
        ("add", Box::new(|t, v| t.add(v[0], v[1])), vec![a.clone(), b.clone()]),
        ("sub", Box::new(|t, v| t.sub(v[0], v[1])), vec![a.clone(), b.clone()]),
        ("mul", Box::new(|t, v| t.mul(v[0], v[1])), vec![a.clone(), b.clone()]),
        ("scale", Box::new(|t, v| t.scale(v[0], -2.5)), vec![a.clone()]),
        ("concat_cols", Box::new(|t, v| t.concat_cols(&[v[0], v[1]])), vec![a.clone(), right]),
        ("broadcast_rows", Box::new(|t, v| t.broadcast_rows(v[0], 5)), vec![row.clone()]),
        ("add_bias", Box::new(|t, v| t.add_bias(v[0], v[1])), vec![a.clone(), row]),
        ("relu", Box::new(|t, v| t.relu(v[0])), vec![kinked.clone()]),
        ("elu", Box::new(|t, v| t.elu(v[0])), vec![kinked]),
        ("sigmoid", Box::new(|t, v| t.sigmoid(v[0])), vec![a.clone()]),
        ("softmax_rows", Box::new(|t, v| t.softmax_rows(v[0])), vec![a.clone()]),
        ("log_softmax_rows", Box::new(|t, v| t.log_softmax_rows(v[0])), vec![a.clone()]),
        ("sum", Box::new(|t, v| t.sum(v[0])), vec![a.clone()]),
        ("mean", Box::new(|t, v| t.mean(v[0])), vec![a.clone()]),
        ("squared_error", Box::new(|t, v| t.squared_error(v[0], v[1])), vec![a.clone(), b]),
        ("gather_rows", Box::new(move |t, v| t.gather_rows(v[0], &index)), vec![a.clone()]),
        (
            "scatter_add_rows",
            {
                let index: Arc<[usize]> = vec![2, 0, 2, 1, 0].into();
                Box::new(move |t, v| t.scatter_add_rows(v[0], &index, 4))
            },
            vec![scatter_src],
        ),
        ("scale_rows", Box::new(move |t, v| t.scale_rows(v[0], &weights)), vec![a]),
    ];
    let mut worst: f64 = 0.0;
    for (name, op, inputs) in &cases {
        let report = ok(gradient_check(|t, v| op(t, v).and_then(|o| project(t, o, 99)), inputs, FD_STEP, FD_TOL))?;
        ensure!(report.passed, "{name}: relative error {:.2e}", report.max_rel_error);
        worst = worst.max(report.max_rel_error);
    }

    let graph = five_node_graph(&mut rng);
    let mut node_cfg = DenoiserConfig::node(2, 8);
    node_cfg.time_embed_dim = 16;
    let node = ok(NodeDenoiser::new(&node_cfg, 3, 3, &mut rng))?;
    let input = NodeInput::new(&graph, node_cfg.backbone);
    let y_t = rng.normal_tensor(5, 3);
    let values: Vec<Tensor> = node.params().iter().map(|p| p.value.clone()).collect();
    let report = ok(gradient_check(
        |tape, v| {
            let y = tape.constant(y_t.clone());
            let out = node.forward(tape, v, &input, y, &[7], None)?;
            project(tape, out, 13)
        },
        &values,
        FD_STEP,
        FD_TOL,
    ))?;
    ensure!(report.passed, "node denoiser parameters: {:.2e}", report.max_rel_error);
    worst = worst.max(report.max_rel_error);
    let report = ok(gradient_check(
        |tape, v| {
            let params: Vec<Var> = values.iter().map(|p| tape.constant(p.clone())).collect();
            let out = node.forward(tape, &params, &input, v[0], &[3], None)?;
            project(tape, out, 17)
        },
        &[rng.normal_tensor(5, 3)],
        FD_STEP,
        FD_TOL,
    ))?;
    ensure!(report.passed, "node denoiser input: {:.2e}", report.max_rel_error);
    worst = worst.max(report.max_rel_error);

    let spec = ReasoningGraphSpec { num_nodes: 5, edge_prob: 0.5, weight_range: (0.1, 1.0) };
    let pairs = ok(generate_reasoning_graph(&spec, 2))?;
    let edge_input = ok(EdgeInput::new(&pairs, Some(PRESENT_COLUMN), EdgeAggregation::Mean))?;
    for activation in [Activation::Relu, Activation::Elu] {
        let mut cfg = DenoiserConfig::edge(2, 8);
        cfg.time_embed_dim = 16;
        cfg.activation = activation;
        let edge = ok(EdgeDenoiser::new(&cfg, 2, 1, &mut rng))?;
        let y_t = rng.normal_tensor(pairs.num_edges(), 1);
        // Zero initial node states sit on the ReLU kink; move off it first.
        let values: Vec<Tensor> = edge
            .params()
            .iter()
            .map(|p| p.value.add(&rng.normal_tensor(p.value.rows(), p.value.cols()).scale(0.3)).unwrap())
            .collect();
        let report = ok(gradient_check(
            |tape, v| {
                let y = tape.constant(y_t.clone());
                let out = edge.forward(tape, v, &edge_input, y, &[4], None)?;
                project(tape, out, 19)
            },
            &values,
            FD_STEP,
            FD_TOL,
        ))?;
        ensure!(report.passed, "edge denoiser ({activation:?}): {:.2e}", report.max_rel_error);
        worst = worst.max(report.max_rel_error);
    }
    within(started, Duration::from_secs(60), "gradient checks")?;
    Ok(format!("{} primitives + node/edge denoisers, max relative error {worst:.2e}", cases.len()))
}

// ---------------------------------------------------------------------------
// 2. diffusion identities

fn identities() -> Outcome {
    let started = Instant::now();
    let mut rng = SeededRng::new(1);
    let sched = ok(NoiseSchedule::cosine(50, 0.008))?;
    let n = 100_000;
    let mut worst_z: f64 = 0.0;
    for t in [1, 10, 25, 40, 50] {
        let y0 = Tensor::filled(n, 1, 0.7);
        let y = ok(forward_sample(&y0, t, &rng.normal_tensor(n, 1), &sched))?;
        let ab = sched.alpha_bar(t);
        let (want_m, want_v) = (ab.sqrt() * 0.7, 1.0 - ab);
        let m = mean(y.data());
        let v = y.data().iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let zm = (m - want_m).abs() / (want_v / n as f64).sqrt();
        let zv = (v - want_v).abs() / (want_v * (2.0 / (n as f64 - 1.0)).sqrt());
        ensure!(zm < 4.0 && zv < 4.0, "t = {t}: mean {m} vs {want_m}, variance {v} vs {want_v}");
        worst_z = worst_z.max(zm).max(zv);
    }

    let mut worst_mu: f64 = 0.0;
    for _ in 0..200 {
        let steps = 5 + rng.below(200);
        let sched = ok(NoiseSchedule::cosine(steps, 0.008))?;
        let t = 1 + rng.below(steps);
        let y0 = rng.normal_tensor(4, 3);
        let eps = rng.normal_tensor(4, 3);
        let yt = ok(forward_sample(&y0, t, &eps, &sched))?;
        let d = ok(eps_to_mu(&yt, &eps, t, &sched))?.max_abs_diff(&ok(posterior_mean(&y0, &yt, t, &sched))?);
        ensure!(d < 1e-9, "T = {steps}, t = {t}: eps_to_mu differs from posterior_mean by {d:e}");
        worst_mu = worst_mu.max(d);
    }

    let mut worst_table: f64 = 0.0;
    for steps in [4usize, 50, 1000] {
        let s = 0.008;
        let sched = ok(NoiseSchedule::cosine(steps, s))?;
        let f = |t: usize| (((t as f64 / steps as f64 + s) / (1.0 + s)) * FRAC_PI_2).cos().powi(2);
        let mut bar = 1.0;
        for t in 1..=steps {
            let beta = (1.0 - f(t) / f(t - 1)).min(0.999);
            bar *= 1.0 - beta;
            let d = (sched.beta(t) - beta).abs().max((sched.alpha_bar(t) - bar).abs());
            ensure!(d < 1e-12, "T = {steps}, t = {t}: schedule off by {d:e}");
            worst_table = worst_table.max(d);
        }
    }
    within(started, Duration::from_secs(60), "diffusion identities")?;
    Ok(format!(
        "forward moments within {worst_z:.2} SE, eps/posterior gap {worst_mu:.1e}, schedule gap {worst_table:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 3. inference equivalences

fn equivalences() -> Outcome {
    let mut rng = SeededRng::new(7);
    let sched = ok(NoiseSchedule::cosine(25, 0.008))?;
    let mut edges = Vec::new();
    for i in 0..9 {
        edges.push((i, (i + 1) % 9));
        edges.push(((i + 1) % 9, i));
    }
    let g = ok(Graph::new(9, edges, rng.normal_tensor(9, 3)))?;
    let model = ok(NodeDenoiser::new(&DenoiserConfig::node(2, 16), 3, 3, &mut rng))?;
    let input = NodeInput::new(&g, Backbone::Gcn);
    let det = ok(deterministic_infer(&model, &input, &sched))?;
    for seed in 0..5 {
        let sto = ok(stochastic_infer(&model, &input, &sched, 0.0, &mut SeededRng::new(seed)))?;
        ensure!(bits(&sto) == bits(&det), "seed {seed}: stochastic inference at zero temperature differs");
    }

    for _ in 0..1000 {
        let t = rng.normal_tensor(4, 5);
        let c = 10f64.powf(rng.uniform_range(-3.0, 3.0));
        ensure!(discretize(&t.scale(c)) == discretize(&t), "argmax changed under scaling by {c}");
    }

    let rows: Vec<[usize; 3]> = (0..27).map(|k| [k % 3, (k / 3) % 3, k / 9]).collect();
    let samples: Vec<Tensor> = (0..3)
        .map(|s| {
            let mut t = Tensor::zeros(27, 3);
            for (r, labels) in rows.iter().enumerate() {
                t.set(r, labels[s], 1.0);
            }
            t
        })
        .collect();
    let vote = |labels: &[usize]| {
        let mut counts = [0; 3];
        for &l in labels {
            counts[l] += 1;
        }
        let best = *counts.iter().max().unwrap();
        counts.iter().position(|&c| c == best).unwrap()
    };
    let agg = ok(aggregate_samples(&samples))?;
    for (r, labels) in rows.iter().enumerate() {
        ensure!(agg[r] == vote(labels), "votes {labels:?} aggregated to {}", agg[r]);
    }
    Ok("bitwise zero-temperature equality over 5 seeds, 1000 scalings, 27/27 vote patterns".into())
}

// ---------------------------------------------------------------------------
// 4. structured prediction beats the mean-field classifier

fn union_labels(graphs: &[&Graph]) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for g in graphs {
        out.extend(ok(g.full_labels())?);
    }
    Ok(out)
}

fn structured_prediction() -> Outcome {
    let started = Instant::now();
    let tmp = tempdir()?;
    let (mut dpm, mut mf, mut at_zero, mut at_half) = (vec![], vec![], vec![], vec![]);
    for seed in 0..5 {
        let run = tmp.path().join(format!("seed{seed}"));
        let cfg = load_config("inductive.toml", seed, &run)?;
        let metrics = ok(cmd_train(&cfg))?;
        dpm.push(metrics.graph_accuracy);

        // Mean-field classifier on the same train subgraphs.
        let data = ok(inductive_data(&cfg))?;
        let train: Vec<&Graph> = data.train.iter().collect();
        let union = ok(Graph::disjoint_union(&train))?;
        let (baseline, _) = ok(train_meanfield(&union, &cfg.model, &cfg.optim, &mut SeededRng::new(seed)))?;
        let test: Vec<&Graph> = data.test.iter().collect();
        let input = ok(NodeInput::batch(&test, cfg.model.backbone))?;
        let pred = discretize(&ok(meanfield_forward(&baseline, &input))?);
        mf.push(ok(node_metrics(&pred, &union_labels(&test)?, input.group_rows()))?.graph_accuracy);

        let report = ok(cmd_infer(&InferRequest {
            checkpoint: run.join(CHECKPOINT_FILE),
            graph: None,
            out: run.join("infer"),
            overrides: Overrides::default(),
        }))?;
        let half = cfg.schedule.steps / 2;
        let acc_at = |t: usize| report.trace.iter().find(|r| r.0 == t).map(|r| r.1);
        at_zero.push(acc_at(0).ok_or("trace lacks t = 0")?);
        at_half.push(acc_at(half).ok_or("trace lacks t = T/2")?);
    }
    let gap = mean(&dpm) - mean(&mf);
    ensure!(
        gap >= 0.05,
        "graph accuracy {:.3} vs mean-field {:.3} (per seed {dpm:?} vs {mf:?})",
        mean(&dpm),
        mean(&mf)
    );
    ensure!(
        mean(&at_zero) >= mean(&at_half),
        "node accuracy at t = 0 ({:.4}) below t = T/2 ({:.4})",
        mean(&at_zero),
        mean(&at_half)
    );
    within(started, Duration::from_secs(15 * 60), "structured prediction")?;
    Ok(format!(
        "graph accuracy {:.3} vs mean-field {:.3} (+{:.1} points); node accuracy t=T/2 {:.3} -> t=0 {:.3}; {:.0} s",
        mean(&dpm),
        mean(&mf),
        100.0 * gap,
        mean(&at_half),
        mean(&at_zero),
        started.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 5. EM machinery

fn em_small_graph(rng: &mut SeededRng) -> Graph {
    let edges = vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3), (4, 0), (0, 4), (1, 3), (3, 1)];
    Graph::new(5, edges, rng.normal_tensor(5, 3)).unwrap()
}

fn em_machinery() -> Outcome {
    let started = Instant::now();
    let k = 10;
    let mut buffer = ok(Buffer::new(k))?;
    for i in 0..3 * k {
        buffer.push(Tensor::scalar(i as f64));
        ensure!(buffer.len() <= k, "buffer holds {} > {k}", buffer.len());
    }
    let kept: Vec<f64> = buffer.entries().map(|e| e.item().unwrap()).collect();
    ensure!(kept == (2 * k..3 * k).map(|i| i as f64).collect::<Vec<_>>(), "buffer is not FIFO: {kept:?}");

    let mut rng = SeededRng::new(4);
    let g = em_small_graph(&mut rng);
    let mut cfg = DenoiserConfig::node(2, 8);
    cfg.time_embed_dim = 16;
    cfg.activation = Activation::Elu;
    let model = ok(NodeDenoiser::new(&cfg, 3, 2, &mut rng))?;
    let input = NodeInput::new(&g, Backbone::Gcn);
    let mask = [true, false, true, false, false];
    let y_l = ok(one_hot_relax(&[1, 0], 2))?;

    let (steps, lambda) = (10, 0.8);
    let half = steps / 2;
    let sched = ok(NoiseSchedule::cosine(steps, 0.008))?;
    let ab = sched.alpha_bar(half);
    let mut dev = Vec::new();
    for run in 0..2500 {
        ok(manifold_sample_traced(
            &model,
            &input,
            &sched,
            &y_l,
            &mask,
            lambda,
            &mut SeededRng::new(1000 + run),
            |t, y| {
                if t == half {
                    for (r, &i) in [0usize, 2].iter().enumerate() {
                        for c in 0..2 {
                            dev.push(y.get(i, c) - ab.sqrt() * y_l.get(r, c));
                        }
                    }
                }
                Ok(())
            },
        ))?;
    }
    let n = dev.len() as f64;
    let m = mean(&dev);
    let v = dev.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    let want = lambda * lambda * (1.0 - ab);
    let (zm, zv) = (m.abs() / (want / n).sqrt(), (v - want).abs() / (want * (2.0 / (n - 1.0)).sqrt()));
    ensure!(zm < 4.0 && zv < 4.0, "labeled rows: mean offset {m}, variance {v} vs {want}");

    let sched20 = ok(NoiseSchedule::cosine(20, 0.008))?;
    let labeled: Arc<[usize]> = vec![0, 2].into();
    let mut worst: f64 = 0.0;
    for step in [1, 7, 14, 20] {
        let y = rng.normal_tensor(5, 2);
        let report = ok(gradient_check(
            |tape, v| {
                let params = model.params().bind_frozen(tape);
                manifold_residual(tape, &params, &model, &input, &sched20, v[0], &y_l, &labeled, step)
            },
            std::slice::from_ref(&y),
            FD_STEP,
            FD_TOL,
        ))?;
        ensure!(report.passed, "manifold gradient at step {step}: {:.2e}", report.max_rel_error);
        ok(manifold_residual_grad(&model, &input, &sched20, &y, &y_l, &labeled, step))?;
        worst = worst.max(report.max_rel_error);
    }

    let tmp = tempdir()?;
    let (mut em, mut mf) = (vec![], vec![]);
    for seed in 0..5 {
        let run = tmp.path().join(format!("seed{seed}"));
        let cfg = load_config("transductive.toml", seed, &run)?;
        let metrics = ok(cmd_em(&cfg, &EmOptions::default()))?;
        let rounds = fs::read_to_string(run.join("rounds.csv")).map_err(|e| e.to_string())?;
        for line in rounds.lines().skip(1) {
            let cols: Vec<usize> = line.split(',').take(3).map(|c| c.parse().unwrap()).collect();
            ensure!(cols[1] <= cols[2], "seed {seed}: round {} buffer {} > {}", cols[0], cols[1], cols[2]);
        }
        em.push(metrics.em_accuracy);
        mf.push(metrics.meanfield_accuracy);
    }
    ensure!(
        mean(&em) >= mean(&mf),
        "EM accuracy {:.3} below mean-field {:.3} ({em:?} vs {mf:?})",
        mean(&em),
        mean(&mf)
    );
    within(started, Duration::from_secs(20 * 60), "EM machinery")?;
    Ok(format!(
        "FIFO ok, labeled-row moments within {:.2}/{:.2} SE, manifold gradient {worst:.1e}, EM {:.3} vs mean-field {:.3}; {:.0} s",
        zm,
        zv,
        mean(&em),
        mean(&mf),
        started.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 6. reasoning

fn reasoning() -> Outcome {
    let tmp = tempdir()?;
    let mut lines = Vec::new();
    for (task, limit) in [("edge_copy", 0.02), ("shortest_path", 0.15), ("connected_components", 0.20)] {
        let started = Instant::now();
        let cfg = load_config(&format!("reason_{task}.toml"), 0, &tmp.path().join(task))?;
        ensure!(cfg.schedule.steps == 50, "{task}: T = {}", cfg.schedule.steps);
        let rows = ok(cmd_reason(&cfg))?;
        let spent = started.elapsed();
        let same = rows.iter().find(|r| r.split == "test_same").ok_or("no same-size row")?;
        let large = rows.iter().find(|r| r.split == "test_large").ok_or("no large-size row")?;
        ensure!(same.mse <= limit, "{task}: same-size MSE {:.4} > {limit}", same.mse);
        ensure!(
            same.mean_baseline_mse >= 2.0 * same.mse,
            "{task}: MSE {:.4} not 2x below the mean baseline {:.4}",
            same.mse,
            same.mean_baseline_mse
        );
        ensure!(large.mse.is_finite(), "{task}: large-size MSE {}", large.mse);
        ensure!(large.mse <= 3.0 * same.mse, "{task}: large-size MSE {:.4} > 3x same-size {:.4}", large.mse, same.mse);
        ensure!(spent <= Duration::from_secs(600), "{task}: {:.0} s", spent.as_secs_f64());
        lines.push(format!(
            "{task} {:.4} (mean baseline {:.4}, large {:.4}, {:.0} s)",
            same.mse,
            same.mean_baseline_mse,
            large.mse,
            spent.as_secs_f64()
        ));
    }
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------
// 7. oracles

fn dijkstra(n: usize, w: &[Option<f64>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    while let Some(u) = (0..n).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[u] = true;
        for v in 0..n {
            if let Some(wt) = w[u * n + v] {
                dist[v] = dist[v].min(dist[u] + wt);
            }
        }
    }
    dist
}

fn oracles() -> Outcome {
    let n = 8;
    let mut rng = SeededRng::new(11);
    for trial in 0..200u64 {
        // Dyadic weights keep every path sum exact, so agreement is exact.
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.uniform() < 0.3 {
                    edges.push((i, j, (1 + rng.below(64)) as f64 / 64.0));
                }
            }
        }
        let g = ok(reasoning_instance(n, &edges))?;
        let w = ok(pair_weights(&g))?;
        let cap =
            n as f64 * w.iter().flatten().fold(0.0f64, |m, &v| m.max(v)).max(if edges.is_empty() { 1.0 } else { 0.0 });
        let fw = ok(oracle_shortest_path(&g))?;
        for s in 0..n {
            let d = dijkstra(n, &w, s);
            for t in (0..n).filter(|&t| t != s) {
                let got = fw.get(pair_index(n, s, t), 0);
                ensure!(got == d[t].min(cap), "graph {trial}: d({s}, {t}) = {got} vs {}", d[t].min(cap));
            }
        }
    }
    for trial in 0..200 {
        let size = 2 + rng.below(12);
        let spec =
            ReasoningGraphSpec { num_nodes: size, edge_prob: (1.5 / size as f64).min(0.75), weight_range: (0.1, 1.0) };
        let g = ok(generate_reasoning_graph(&spec, 1000 + trial))?;
        let cc = ok(oracle_connected_components(&g))?;
        let rel = |i: usize, j: usize| i == j || cc.get(pair_index(size, i, j), 0) == 1.0;
        for i in 0..size {
            for j in 0..size {
                ensure!(rel(i, j) == rel(j, i), "graph {trial}: not symmetric at ({i}, {j})");
                for k in 0..size {
                    ensure!(!(rel(i, j) && rel(j, k)) || rel(i, k), "graph {trial}: not transitive at ({i}, {j}, {k})");
                }
            }
        }
    }
    Ok("Floyd-Warshall == Dijkstra on 200 graphs; components an equivalence relation on 200 graphs".into())
}

// ---------------------------------------------------------------------------
// 8. reproducibility

const SMALL_INDUCTIVE: &str = r#"
task = "inductive"
seed = 5

[model]
num_layers = 2
hidden_dim = 8

[schedule]
steps = 8

[optim]
rate = 0.01
steps = 30
batch_graphs = 4

[data.generator]
train_graphs = 2
parts = 4

[data.generator.homophily]
num_nodes = 60
num_classes = 2
p_intra = 0.3
p_inter = 0.02
feature_noise = 1.0
"#;

fn same_files(a: &Path, b: &Path, files: &[&str]) -> Result<(), String> {
    for f in files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        ensure!(x.is_ok() && x.ok() == y.ok(), "{f} differs between reruns");
    }
    Ok(())
}

fn reproducibility() -> Outcome {
    let tmp = tempdir()?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let small = |out: &Path| -> Result<RunConfig, String> {
        let mut cfg = ok(RunConfig::from_toml(SMALL_INDUCTIVE, Path::new("small.toml")))?;
        cfg.out = Some(out.to_path_buf());
        Ok(cfg)
    };
    ok(cmd_train(&small(&a)?))?;
    ok(cmd_train(&small(&b)?))?;
    same_files(&a, &b, &["loss.csv", "metrics.csv", CHECKPOINT_FILE])?;
    for dir in [&a, &b] {
        ok(cmd_eval(&dir.join(CHECKPOINT_FILE), &dir.join("eval")))?;
        ok(cmd_infer(&InferRequest {
            checkpoint: dir.join(CHECKPOINT_FILE),
            out: dir.join("infer"),
            ..Default::default()
        }))?;
    }
    same_files(&a.join("eval"), &b.join("eval"), &["metrics.csv"])?;
    same_files(&a.join("infer"), &b.join("infer"), &["metrics.csv", "trace.csv", "predictions.csv"])?;

    let mut em_cfg = load_config("transductive.toml", 3, &a.join("em"))?;
    if let Some(em) = em_cfg.em.as_mut() {
        em.rounds = 2;
        em.initial_maximization_steps = 50;
        em.maximization_steps = 20;
        em.meanfield_steps = 50;
    }
    ok(cmd_em(&em_cfg, &EmOptions::default()))?;
    em_cfg.out = Some(b.join("em"));
    ok(cmd_em(&em_cfg, &EmOptions::default()))?;
    same_files(&a.join("em"), &b.join("em"), &["loss.csv", "rounds.csv", "em_metrics.csv", CHECKPOINT_FILE])?;

    let mut reason_cfg = load_config("reason_shortest_path.toml", 1, &a.join("reason"))?;
    reason_cfg.optim.steps = 30;
    if let Some(r) = reason_cfg.reasoning.as_mut() {
        r.data.train_per_size = 4;
        r.data.test_count = 4;
    }
    ok(cmd_reason(&reason_cfg))?;
    reason_cfg.out = Some(b.join("reason"));
    ok(cmd_reason(&reason_cfg))?;
    same_files(&a.join("reason"), &b.join("reason"), &["loss.csv", "results.csv", CHECKPOINT_FILE])?;

    // Checkpoint round trips: forward outputs are bitwise identical.
    let (ck, cfg) = ok(load_checkpoint(&a.join(CHECKPOINT_FILE)))?;
    let Restored::Supervised(first) = ok(restore(&ck, &cfg))? else {
        return Err("supervised checkpoint restored as another kind".into());
    };
    let bytes = ck.to_bytes();
    let again = ok(Checkpoint::from_bytes(&bytes))?;
    ensure!(again.to_bytes() == bytes, "checkpoint bytes change on a round trip");
    let Restored::Supervised(second) = ok(restore(&again, &cfg))? else {
        return Err("round-tripped checkpoint restored as another kind".into());
    };
    let data = ok(inductive_data(&cfg))?;
    let input = NodeInput::new(&data.test[0], cfg.model.backbone);
    let y = SeededRng::new(3).normal_tensor(data.test[0].num_nodes(), 2);
    for t in [1, 4, 8] {
        ensure!(
            bits(&ok(first.predict(&input, &y, t))?) == bits(&ok(second.predict(&input, &y, t))?),
            "restored node denoiser differs at t = {t}"
        );
    }

    let mut rng = SeededRng::new(9);
    let edge = ok(EdgeDenoiser::new(&DenoiserConfig::edge(2, 8), 2, 1, &mut rng))?;
    let mut ck = Checkpoint::new("h".into(), String::new(), ScheduleSpec::default(), rng.state());
    ck.put_params("denoiser", edge.params());
    let back = ok(Checkpoint::from_bytes(&ck.to_bytes()))?;
    let mut restored = ok(EdgeDenoiser::new(&DenoiserConfig::edge(2, 8), 2, 1, &mut SeededRng::new(0)))?;
    ok(back.take_params("denoiser", restored.params_mut()))?;
    let pairs = ok(generate_reasoning_graph(
        &ReasoningGraphSpec { num_nodes: 6, edge_prob: 0.5, weight_range: (0.1, 1.0) },
        4,
    ))?;
    let edge_input = ok(EdgeInput::new(&pairs, Some(PRESENT_COLUMN), EdgeAggregation::Mean))?;
    let y = rng.normal_tensor(pairs.num_edges(), 1);
    ensure!(
        bits(&ok(edge.predict(&edge_input, &y, 5))?) == bits(&ok(restored.predict(&edge_input, &y, 5))?),
        "restored edge denoiser differs"
    );
    Ok("train/eval/infer/em/reason CSVs and checkpoints byte-identical on rerun; restored forwards bitwise equal"
        .into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient integrity", gradients),
        ("diffusion identities", identities),
        ("inference equivalences", equivalences),
        ("structured prediction", structured_prediction),
        ("EM machinery", em_machinery),
        ("reasoning", reasoning),
        ("oracle correctness", oracles),
        ("reproducibility", reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let outcome = panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
