//! Runnable experiments behind the command-line subcommands.
//!
//! Every command is a pure function of its configuration and seed. Outputs
//! land in the run's output directory with fixed column orders:
//!
//! | file | written by | columns |
//! |---|---|---|
//! | `loss.csv` | train, em, reason | `step,loss` |
//! | `metrics.csv` | train, eval, infer | `split,node_accuracy,graph_accuracy,micro_f1` |
//! | `rounds.csv` | em | `round,buffer_len,buffer_capacity,evicted,mean_loss,em_accuracy` |
//! | `em_metrics.csv` | em, eval | `rounds,em_accuracy,meanfield_accuracy,em_micro_f1,meanfield_micro_f1` |
//! | `trace.csv` | infer | `t,node_accuracy,graph_accuracy` |
//! | `predictions.csv` | infer | `graph,node,label` |
//! | `results.csv` | reason, eval | `task,split,num_nodes,mse,lambda,seed,mean_baseline_mse,zero_baseline_mse` |
//! | `checkpoint.bin` | train, em, reason | see [`crate::checkpoint`] |

use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{InferenceConfig, Overrides, RunConfig, TaskKind};
use crate::diffusion::{aggregate_samples, reverse_chain, InferenceMode, NoiseSchedule};
use crate::em::{Buffer, EmState};
use crate::gnn::{Denoiser, EdgeDenoiser, MeanField, NodeDenoiser, NodeInput, TargetLayout};
use crate::graph::{
    discretize, generate_homophily_graph, load_dataset, load_graph_json, one_hot_relax, partition_subgraphs,
    save_dataset, DatasetSplit, Graph,
};
use crate::metrics::{graph_accuracy, micro_f1, node_accuracy, Cell, CsvTable};
use crate::reasoning::{
    build_reasoning_dataset, eval_reasoning, train_reasoner, ConstantPredictor, DiffusionReasoner, Standardizer,
};
use crate::rng::SeededRng;
use crate::train::{train_denoiser, TrainItem};
use crate::{Error, Result, Tensor};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

const KIND_SUPERVISED: u64 = 0;
const KIND_EM: u64 = 1;
const KIND_REASONING: u64 = 2;

/// Independent generator streams of one run, all derived from its seed.
struct Streams {
    data: SeededRng,
    mask: SeededRng,
    model: SeededRng,
    infer: SeededRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut root = SeededRng::new(seed);
        Self { data: root.split(), mask: root.split(), model: root.split(), infer: root.split() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeMetrics {
    pub node_accuracy: f64,
    pub graph_accuracy: f64,
    pub micro_f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmMetrics {
    pub rounds: usize,
    pub em_accuracy: f64,
    pub meanfield_accuracy: f64,
    pub em_micro_f1: f64,
    pub meanfield_micro_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReasonRow {
    pub split: String,
    pub num_nodes: usize,
    pub mse: f64,
    pub mean_baseline_mse: f64,
    pub zero_baseline_mse: f64,
}

/// A model restored from a checkpoint, with the configuration that wrote it.
#[derive(Clone, Debug)]
pub enum Restored {
    Supervised(NodeDenoiser),
    Em(Box<EmState>),
    Reasoner(DiffusionReasoner),
}

fn require_task(cfg: &RunConfig, want: TaskKind, command: &str) -> Result<()> {
    if cfg.task != want {
        return Err(Error::Config(format!("`{command}` needs task = {:?}, config has {:?}", want, cfg.task)));
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

// ---------------------------------------------------------------------------
// data

fn load_graphs(path: &Path) -> Result<DatasetSplit> {
    if path.is_dir() {
        load_dataset(path)
    } else {
        Ok(DatasetSplit { train: vec![load_graph_json(path)?], ..Default::default() })
    }
}

fn require_labels(graphs: &[Graph], what: &str) -> Result<()> {
    for (i, g) in graphs.iter().enumerate() {
        g.full_labels().map_err(|e| Error::Value(format!("{what} graph {i}: {e}")))?;
    }
    Ok(())
}

fn generator(cfg: &RunConfig) -> Result<&crate::config::GeneratorConfig> {
    cfg.data.generator.as_ref().ok_or_else(|| Error::Config("this run needs a [data.generator] section".into()))
}

/// Train and test graphs of an inductive run. Generated graphs are split
/// into `parts` induced subgraphs each.
pub fn inductive_data(cfg: &RunConfig) -> Result<DatasetSplit> {
    let split = match &cfg.data.path {
        Some(p) => {
            if !p.is_dir() {
                return Err(Error::Value(format!(
                    "inductive runs need a dataset directory, {} is not one",
                    p.display()
                )));
            }
            load_dataset(p)?
        }
        None => {
            let gen = generator(cfg)?;
            let mut rng = Streams::new(cfg.seed).data;
            let mut make = |count: usize, name: &str| -> Result<Vec<Graph>> {
                let mut out = Vec::new();
                for _ in 0..count {
                    let g = generate_homophily_graph(&gen.homophily, rng.next_u64())?;
                    let parts = partition_subgraphs(&g, gen.parts, &mut rng)?;
                    out.extend(parts.into_iter().map(|p| p.with_split(Some(name.to_owned()))));
                }
                Ok(out)
            };
            let train = make(gen.train_graphs, "train")?;
            let test = make(gen.test_graphs, "test")?;
            DatasetSplit { train, test, ..Default::default() }
        }
    };
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Value("inductive data needs train and test graphs".into()));
    }
    require_labels(&split.train, "train")?;
    require_labels(&split.test, "test")?;
    Ok(split)
}

/// The fully labeled graph of a transductive run and the mask of labels
/// revealed to training. The mask has its own stream, so a saved copy of a
/// generated graph reproduces the same run.
pub fn transductive_data(cfg: &RunConfig) -> Result<(Graph, Vec<bool>)> {
    let full = match &cfg.data.path {
        Some(p) => load_graphs(p)?
            .train
            .into_iter()
            .next()
            .ok_or_else(|| Error::Value(format!("{} holds no training graph", p.display())))?,
        None => generate_homophily_graph(&generator(cfg)?.homophily, Streams::new(cfg.seed).data.next_u64())?,
    };
    require_labels(std::slice::from_ref(&full), "transductive")?;
    let n = full.num_nodes();
    if n < 2 {
        return Err(Error::Value("transductive graph needs at least 2 nodes".into()));
    }
    let mut rng = Streams::new(cfg.seed).mask;
    let mut keep: Vec<bool> = (0..n).map(|_| rng.uniform() < cfg.data.label_fraction).collect();
    if !keep.contains(&true) {
        keep[rng.below(n)] = true;
    }
    if !keep.contains(&false) {
        keep[rng.below(n)] = false;
    }
    Ok((full, keep))
}

pub fn reasoning_data(cfg: &RunConfig) -> Result<DatasetSplit> {
    let r = cfg.reasoning.as_ref().ok_or_else(|| Error::Config("reasoning runs need a [reasoning] section".into()))?;
    let split = match &cfg.data.path {
        Some(p) => load_dataset(p)?,
        None => build_reasoning_dataset(r.task, &r.data, cfg.seed)?,
    };
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Value("reasoning data needs train and test graphs".into()));
    }
    for g in split.train.iter().chain(&split.test).chain(&split.test_large) {
        if g.edge_targets().is_none() || g.edge_attrs().is_none() {
            return Err(Error::Value("reasoning graphs need edge attributes and pair targets".into()));
        }
    }
    Ok(split)
}

// ---------------------------------------------------------------------------
// inference and metrics

/// Runs the configured reverse chain(s). `observe` sees the states of the
/// first chain. Several samples are combined by majority vote.
pub fn infer_nodes(
    denoiser: &NodeDenoiser,
    input: &NodeInput,
    schedule: &NoiseSchedule,
    inference: &InferenceConfig,
    rng: &mut SeededRng,
    mut observe: impl FnMut(usize, &Tensor) -> Result<()>,
) -> Result<Vec<usize>> {
    let lambda = match inference.mode {
        InferenceMode::Deterministic => 0.0,
        InferenceMode::Stochastic => inference.lambda,
    };
    let chains = if lambda > 0.0 { inference.samples } else { 1 };
    let mut samples = Vec::with_capacity(chains);
    for s in 0..chains {
        let r = (lambda > 0.0).then_some(&mut *rng);
        let y =
            reverse_chain(denoiser, input, schedule, lambda, r, |t, y| if s == 0 { observe(t, y) } else { Ok(()) })?;
        samples.push(y);
    }
    if samples.len() == 1 {
        Ok(discretize(&samples[0]))
    } else {
        aggregate_samples(&samples)
    }
}

pub fn node_metrics(pred: &[usize], truth: &[usize], groups: &[Range<usize>]) -> Result<NodeMetrics> {
    let per_graph: Vec<(Vec<usize>, Vec<usize>)> =
        groups.iter().map(|r| (pred[r.clone()].to_vec(), truth[r.clone()].to_vec())).collect();
    Ok(NodeMetrics {
        node_accuracy: node_accuracy(pred, truth, None)?,
        graph_accuracy: graph_accuracy(&per_graph)?,
        micro_f1: micro_f1(pred, truth)?,
    })
}

fn union_labels(graphs: &[&Graph]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for g in graphs {
        out.extend(g.full_labels()?);
    }
    Ok(out)
}

fn check_node_shapes(denoiser: &NodeDenoiser, graphs: &[&Graph]) -> Result<()> {
    for (i, g) in graphs.iter().enumerate() {
        if g.node_attrs().cols() != denoiser.attr_dim() {
            return Err(Error::shape(
                "infer",
                format!(
                    "graph {i} has {} attribute columns, the model expects {}",
                    g.node_attrs().cols(),
                    denoiser.attr_dim()
                ),
            ));
        }
        if g.labels().is_some() && g.num_classes() != denoiser.num_classes() {
            return Err(Error::shape(
                "infer",
                format!("graph {i} has {} classes, the model predicts {}", g.num_classes(), denoiser.num_classes()),
            ));
        }
    }
    Ok(())
}

/// Test metrics of a supervised denoiser under the run's inference settings.
pub fn evaluate_nodes(denoiser: &NodeDenoiser, graphs: &[Graph], cfg: &RunConfig) -> Result<NodeMetrics> {
    let refs: Vec<&Graph> = graphs.iter().collect();
    check_node_shapes(denoiser, &refs)?;
    let input = NodeInput::batch(&refs, denoiser.config().backbone)?;
    let truth = union_labels(&refs)?;
    let schedule = cfg.schedule.build()?;
    let mut rng = Streams::new(cfg.seed).infer;
    let pred = infer_nodes(denoiser, &input, &schedule, &cfg.inference, &mut rng, |_, _| Ok(()))?;
    node_metrics(&pred, &truth, input.group_rows())
}

fn metrics_table(rows: &[(&str, NodeMetrics)]) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["split", "node_accuracy", "graph_accuracy", "micro_f1"]);
    for (name, m) in rows {
        t.push(vec![(*name).into(), m.node_accuracy.into(), m.graph_accuracy.into(), m.micro_f1.into()])?;
    }
    Ok(t)
}

fn loss_table(losses: &[f64]) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["step", "loss"]);
    for (i, &l) in losses.iter().enumerate() {
        t.push(vec![i.into(), l.into()])?;
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// checkpoints

fn new_checkpoint(cfg: &RunConfig, kind: u64, rng: &SeededRng) -> Checkpoint {
    let mut ck = Checkpoint::new(cfg.hash(), cfg.canonical_text(), cfg.schedule, rng.state());
    ck.put_counter("kind", kind);
    ck
}

/// Reads a checkpoint and the configuration embedded in it.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, RunConfig)> {
    let ck = Checkpoint::load(path, None)?;
    let cfg = RunConfig::from_toml(&ck.config_text, path)?;
    if cfg.hash() != ck.config_hash {
        return Err(Error::Checkpoint(format!("{}: embedded configuration does not match its hash", path.display())));
    }
    if cfg.schedule != ck.schedule {
        return Err(Error::Checkpoint(format!("{}: schedule differs from the embedded configuration", path.display())));
    }
    Ok((ck, cfg))
}

fn dim(ck: &Checkpoint, name: &str) -> Result<usize> {
    Ok(ck.counter(name)? as usize)
}

fn restore_node(ck: &Checkpoint, cfg: &RunConfig, prefix: &str) -> Result<NodeDenoiser> {
    let mut d = NodeDenoiser::new(&cfg.model, dim(ck, "attr_dim")?, dim(ck, "num_classes")?, &mut SeededRng::new(0))?;
    ck.take_params(prefix, d.params_mut())?;
    Ok(d)
}

fn put_em_state(ck: &mut Checkpoint, state: &EmState, attr_dim: usize, num_classes: usize, history: &[RoundRow]) {
    ck.put_counter("attr_dim", attr_dim as u64);
    ck.put_counter("num_classes", num_classes as u64);
    ck.put_counter("rounds_done", state.rounds_done as u64);
    ck.put_counter("buffer_len", state.buffer.len() as u64);
    ck.put_params("denoiser", state.denoiser.params());
    ck.put_params("meanfield", state.meanfield.params());
    for (i, e) in state.buffer.entries().enumerate() {
        ck.put_array(&format!("buffer/{i}"), e.clone());
    }
    ck.put_array("losses", Tensor::from_vec(state.losses.len(), 1, state.losses.clone()).expect("column of losses"));
    let flat: Vec<f64> = history.iter().flat_map(RoundRow::to_vec).collect();
    ck.put_array("rounds", Tensor::from_vec(history.len(), RoundRow::WIDTH, flat).expect("round table"));
}

fn restore_em(ck: &Checkpoint, cfg: &RunConfig) -> Result<(EmState, Vec<RoundRow>)> {
    let em = cfg
        .em
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("semi-supervised checkpoint without an [em] section".into()))?;
    let denoiser = restore_node(ck, cfg, "denoiser")?;
    let mut meanfield =
        MeanField::new(&cfg.model, dim(ck, "attr_dim")?, dim(ck, "num_classes")?, &mut SeededRng::new(0))?;
    ck.take_params("meanfield", meanfield.params_mut())?;
    let mut buffer = Buffer::new(em.buffer_capacity)?;
    for i in 0..dim(ck, "buffer_len")? {
        buffer.push(ck.array(&format!("buffer/{i}"))?.clone());
    }
    let losses = ck.array("losses")?.data().to_vec();
    let rounds = ck.array("rounds")?;
    let history = (0..rounds.rows()).map(|r| RoundRow::from_slice(rounds.row(r))).collect();
    let state = EmState {
        denoiser,
        meanfield,
        buffer,
        rng: SeededRng::from_state(&ck.rng),
        rounds_done: dim(ck, "rounds_done")?,
        losses,
    };
    Ok((state, history))
}

fn restore_reasoner(ck: &Checkpoint, cfg: &RunConfig) -> Result<DiffusionReasoner> {
    let mut d = EdgeDenoiser::new(&cfg.model, dim(ck, "edge_dim")?, 1, &mut SeededRng::new(0))?;
    ck.take_params("denoiser", d.params_mut())?;
    let st = ck.array("standardizer")?;
    if st.shape() != (1, 2) {
        return Err(Error::Checkpoint("standardizer must be 1x2".into()));
    }
    Ok(DiffusionReasoner {
        denoiser: d,
        schedule: cfg.schedule.build()?,
        standardizer: Standardizer { mean: st.get(0, 0), std: st.get(0, 1) },
        lambda: reasoning_lambda(cfg),
    })
}

/// Rebuilds the model stored in `ck`.
pub fn restore(ck: &Checkpoint, cfg: &RunConfig) -> Result<Restored> {
    match ck.counter("kind")? {
        KIND_SUPERVISED => Ok(Restored::Supervised(restore_node(ck, cfg, "denoiser")?)),
        KIND_EM => Ok(Restored::Em(Box::new(restore_em(ck, cfg)?.0))),
        KIND_REASONING => Ok(Restored::Reasoner(restore_reasoner(ck, cfg)?)),
        k => Err(Error::Checkpoint(format!("unknown checkpoint kind {k}"))),
    }
}

// ---------------------------------------------------------------------------
// train

/// Fully supervised training on the train graphs; reports test metrics.
pub fn cmd_train(cfg: &RunConfig) -> Result<NodeMetrics> {
    cfg.validate()?;
    require_task(cfg, TaskKind::Inductive, "train")?;
    let out = cfg.out_dir()?;
    let data = inductive_data(cfg)?;
    let schedule = cfg.schedule.build()?;
    let first = &data.train[0];
    let (attr_dim, classes) = (first.node_attrs().cols(), first.num_classes());
    if data.train.iter().chain(&data.test).any(|g| g.node_attrs().cols() != attr_dim || g.num_classes() != classes) {
        return Err(Error::Value("graphs differ in attribute width or class count".into()));
    }
    let mut rng = Streams::new(cfg.seed).model;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    rng.shuffle(&mut order);
    let items = order
        .chunks(cfg.optim.batch_graphs)
        .map(|chunk| {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &data.train[i]).collect();
            Ok(TrainItem {
                input: NodeInput::batch(&graphs, cfg.model.backbone)?,
                target: one_hot_relax(&union_labels(&graphs)?, classes)?,
                mask: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut denoiser = NodeDenoiser::new(&cfg.model, attr_dim, classes, &mut rng)?;
    let losses = train_denoiser(
        &mut denoiser,
        &items,
        &schedule,
        &cfg.optim,
        cfg.unweighted_mse,
        cfg.model.dropout > 0.0,
        &mut rng,
        |_, _| {},
    )?;
    let metrics = evaluate_nodes(&denoiser, &data.test, cfg)?;

    prepare_out(out)?;
    loss_table(&losses)?.write(out.join("loss.csv"))?;
    let mut ck = new_checkpoint(cfg, KIND_SUPERVISED, &rng);
    ck.put_counter("attr_dim", attr_dim as u64);
    ck.put_counter("num_classes", classes as u64);
    ck.put_params("denoiser", denoiser.params());
    ck.save(out.join(CHECKPOINT_FILE))?;
    metrics_table(&[("test", metrics)])?.write(out.join("metrics.csv"))?;
    Ok(metrics)
}

// ---------------------------------------------------------------------------
// em

#[derive(Clone, Debug, PartialEq)]
struct RoundRow {
    round: usize,
    buffer_len: usize,
    buffer_capacity: usize,
    evicted: usize,
    mean_loss: f64,
    em_accuracy: f64,
}

impl RoundRow {
    const WIDTH: usize = 6;

    fn to_vec(&self) -> Vec<f64> {
        vec![
            self.round as f64,
            self.buffer_len as f64,
            self.buffer_capacity as f64,
            self.evicted as f64,
            self.mean_loss,
            self.em_accuracy,
        ]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            round: v[0] as usize,
            buffer_len: v[1] as usize,
            buffer_capacity: v[2] as usize,
            evicted: v[3] as usize,
            mean_loss: v[4],
            em_accuracy: v[5],
        }
    }
}

/// Options of [`cmd_em`] that change how, not what, is computed.
#[derive(Clone, Debug, Default)]
pub struct EmOptions {
    /// Continue from a checkpoint written by an earlier run of this config.
    pub resume: Option<PathBuf>,
    /// Stop once this many rounds are done (the checkpoint stays resumable).
    pub stop_after: Option<usize>,
}

fn split_unlabeled(truth: &[usize], keep: &[bool]) -> Vec<usize> {
    truth.iter().zip(keep).filter(|(_, &k)| !k).map(|(&t, _)| t).collect()
}

/// Unlabeled-node accuracy and micro-F1 of the conditional denoiser and of
/// the mean-field classifier.
pub fn em_metrics(
    state: &EmState,
    graph: &Graph,
    truth: &[usize],
    keep: &[bool],
    schedule: &NoiseSchedule,
) -> Result<EmMetrics> {
    let unlabeled = split_unlabeled(truth, keep);
    let em_pred = state.predict_conditional(graph, schedule)?;
    let mf_all = state.predict_meanfield(graph)?;
    let mf_pred = split_unlabeled(&mf_all, keep);
    Ok(EmMetrics {
        rounds: state.rounds_done,
        em_accuracy: node_accuracy(&em_pred, &unlabeled, None)?,
        meanfield_accuracy: node_accuracy(&mf_pred, &unlabeled, None)?,
        em_micro_f1: micro_f1(&em_pred, &unlabeled)?,
        meanfield_micro_f1: micro_f1(&mf_pred, &unlabeled)?,
    })
}

fn em_table(m: &EmMetrics) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["rounds", "em_accuracy", "meanfield_accuracy", "em_micro_f1", "meanfield_micro_f1"]);
    t.push(vec![
        m.rounds.into(),
        m.em_accuracy.into(),
        m.meanfield_accuracy.into(),
        m.em_micro_f1.into(),
        m.meanfield_micro_f1.into(),
    ])?;
    Ok(t)
}

fn rounds_table(history: &[RoundRow]) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["round", "buffer_len", "buffer_capacity", "evicted", "mean_loss", "em_accuracy"]);
    for r in history {
        t.push(vec![
            r.round.into(),
            r.buffer_len.into(),
            r.buffer_capacity.into(),
            r.evicted.into(),
            r.mean_loss.into(),
            r.em_accuracy.into(),
        ])?;
    }
    Ok(t)
}

/// Semi-supervised EM on one partially labeled graph. Writes a resumable
/// checkpoint after initialization and after every round.
pub fn cmd_em(cfg: &RunConfig, opts: &EmOptions) -> Result<EmMetrics> {
    cfg.validate()?;
    require_task(cfg, TaskKind::Transductive, "em")?;
    let out = cfg.out_dir()?;
    let em = cfg.em.as_ref().expect("validated transductive config has [em]");
    let (full, keep) = transductive_data(cfg)?;
    let truth = full.full_labels()?;
    let graph = full.with_hidden_labels(&keep)?;
    let schedule = cfg.schedule.build()?;
    let (attr_dim, classes) = (graph.node_attrs().cols(), graph.num_classes());
    prepare_out(out)?;
    let ck_path = out.join(CHECKPOINT_FILE);
    let save = |state: &EmState, history: &[RoundRow]| -> Result<()> {
        let mut ck = new_checkpoint(cfg, KIND_EM, &state.rng);
        put_em_state(&mut ck, state, attr_dim, classes, history);
        ck.save(&ck_path)
    };

    let (mut state, mut history) = match &opts.resume {
        Some(p) => {
            let ck = Checkpoint::load(p, Some(&cfg.hash()))?;
            if ck.counter("kind")? != KIND_EM {
                return Err(Error::Checkpoint(format!("{} is not a semi-supervised checkpoint", p.display())));
            }
            restore_em(&ck, cfg)?
        }
        None => {
            let state = EmState::initialize(
                &graph,
                &cfg.model,
                em,
                &cfg.optim,
                &schedule,
                cfg.unweighted_mse,
                Streams::new(cfg.seed).model,
            )?;
            save(&state, &[])?;
            (state, Vec::new())
        }
    };
    let stop = opts.stop_after.unwrap_or(em.rounds).min(em.rounds);
    while state.rounds_done < stop {
        let stats = state.round(&graph, em, &cfg.optim, &schedule, cfg.unweighted_mse)?;
        let pred = state.predict_conditional(&graph, &schedule)?;
        history.push(RoundRow {
            round: stats.round,
            buffer_len: stats.buffer_len,
            buffer_capacity: state.buffer.capacity(),
            evicted: stats.evicted,
            mean_loss: stats.mean_loss,
            em_accuracy: node_accuracy(&pred, &split_unlabeled(&truth, &keep), None)?,
        });
        save(&state, &history)?;
    }
    let metrics = em_metrics(&state, &graph, &truth, &keep, &schedule)?;
    loss_table(&state.losses)?.write(out.join("loss.csv"))?;
    rounds_table(&history)?.write(out.join("rounds.csv"))?;
    em_table(&metrics)?.write(out.join("em_metrics.csv"))?;
    Ok(metrics)
}

// ---------------------------------------------------------------------------
// reason

fn reasoning_lambda(cfg: &RunConfig) -> f64 {
    match cfg.inference.mode {
        InferenceMode::Deterministic => 0.0,
        InferenceMode::Stochastic => cfg.inference.lambda,
    }
}

/// Same-size and large-size MSE of `model` beside the constant baselines.
pub fn reasoning_results(model: &DiffusionReasoner, data: &DatasetSplit, cfg: &RunConfig) -> Result<Vec<ReasonRow>> {
    let mean = ConstantPredictor::mean_of(&data.train)?;
    let zero = ConstantPredictor { value: 0.0 };
    let mut rng = Streams::new(cfg.seed).infer;
    let mut rows = Vec::new();
    for (name, graphs) in [("test_same", &data.test), ("test_large", &data.test_large)] {
        if graphs.is_empty() {
            continue;
        }
        let mse = eval_reasoning(model, graphs, &mut rng)?;
        if !mse.is_finite() {
            return Err(Error::Numeric(format!("{name} MSE is {mse}")));
        }
        rows.push(ReasonRow {
            split: name.to_owned(),
            num_nodes: graphs[0].num_nodes(),
            mse,
            mean_baseline_mse: eval_reasoning(&mean, graphs, &mut rng)?,
            zero_baseline_mse: eval_reasoning(&zero, graphs, &mut rng)?,
        });
    }
    Ok(rows)
}

fn results_table(rows: &[ReasonRow], cfg: &RunConfig) -> Result<CsvTable> {
    let task = cfg.reasoning.as_ref().map_or("", |r| r.task.name());
    let mut t = CsvTable::new(&[
        "task",
        "split",
        "num_nodes",
        "mse",
        "lambda",
        "seed",
        "mean_baseline_mse",
        "zero_baseline_mse",
    ]);
    for r in rows {
        t.push(vec![
            task.into(),
            r.split.as_str().into(),
            r.num_nodes.into(),
            r.mse.into(),
            reasoning_lambda(cfg).into(),
            cfg.seed.into(),
            r.mean_baseline_mse.into(),
            r.zero_baseline_mse.into(),
        ])?;
    }
    Ok(t)
}

/// Builds the reasoning dataset, trains the edge denoiser and evaluates
/// both test splits.
pub fn cmd_reason(cfg: &RunConfig) -> Result<Vec<ReasonRow>> {
    cfg.validate()?;
    require_task(cfg, TaskKind::Reasoning, "reason")?;
    let out = cfg.out_dir()?;
    let data = reasoning_data(cfg)?;
    let schedule = cfg.schedule.build()?;
    let mut rng = Streams::new(cfg.seed).model;
    let mut losses = Vec::new();
    let mut model =
        train_reasoner(&data.train, &cfg.model, &schedule, &cfg.optim, cfg.unweighted_mse, &mut rng, |_, l| {
            losses.push(l)
        })?;
    model.lambda = reasoning_lambda(cfg);
    let rows = reasoning_results(&model, &data, cfg)?;

    prepare_out(out)?;
    loss_table(&losses)?.write(out.join("loss.csv"))?;
    let mut ck = new_checkpoint(cfg, KIND_REASONING, &rng);
    ck.put_counter("edge_dim", model.denoiser.edge_dim() as u64);
    ck.put_params("denoiser", model.denoiser.params());
    ck.put_array("standardizer", Tensor::from_vec(1, 2, vec![model.standardizer.mean, model.standardizer.std])?);
    ck.save(out.join(CHECKPOINT_FILE))?;
    results_table(&rows, cfg)?.write(out.join("results.csv"))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// eval, infer, gen-data

/// What [`cmd_eval`] recomputed.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalReport {
    Supervised(NodeMetrics),
    Em(EmMetrics),
    Reasoning(Vec<ReasonRow>),
}

/// Re-evaluates a checkpoint on the data its configuration describes and
/// writes the same table the training command wrote.
pub fn cmd_eval(checkpoint: &Path, out: &Path) -> Result<EvalReport> {
    let (ck, cfg) = load_checkpoint(checkpoint)?;
    cfg.validate()?;
    prepare_out(out)?;
    match restore(&ck, &cfg)? {
        Restored::Supervised(d) => {
            let data = inductive_data(&cfg)?;
            let m = evaluate_nodes(&d, &data.test, &cfg)?;
            metrics_table(&[("test", m)])?.write(out.join("metrics.csv"))?;
            Ok(EvalReport::Supervised(m))
        }
        Restored::Em(state) => {
            let (full, keep) = transductive_data(&cfg)?;
            let truth = full.full_labels()?;
            let graph = full.with_hidden_labels(&keep)?;
            let m = em_metrics(&state, &graph, &truth, &keep, &cfg.schedule.build()?)?;
            em_table(&m)?.write(out.join("em_metrics.csv"))?;
            Ok(EvalReport::Em(m))
        }
        Restored::Reasoner(model) => {
            let rows = reasoning_results(&model, &reasoning_data(&cfg)?, &cfg)?;
            results_table(&rows, &cfg)?.write(out.join("results.csv"))?;
            Ok(EvalReport::Reasoning(rows))
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct InferRequest {
    pub checkpoint: PathBuf,
    /// Graph file or dataset directory (its test split); defaults to the
    /// test data of the checkpoint's configuration.
    pub graph: Option<PathBuf>,
    pub out: PathBuf,
    /// Only the inference fields (mode, lambda, samples) and the seed apply.
    pub overrides: Overrides,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferReport {
    pub predictions: Vec<usize>,
    pub metrics: Option<NodeMetrics>,
    /// `(t, node accuracy, graph accuracy)` for `t = T-1, …, 0`.
    pub trace: Vec<(usize, f64, f64)>,
}

/// Runs the reverse chain of a node-denoiser checkpoint on new graphs.
pub fn cmd_infer(req: &InferRequest) -> Result<InferReport> {
    let (ck, stored) = load_checkpoint(&req.checkpoint)?;
    stored.validate()?;
    let denoiser = match restore(&ck, &stored)? {
        Restored::Supervised(d) => d,
        Restored::Em(state) => state.denoiser,
        Restored::Reasoner(_) => {
            return Err(Error::Usage("`infer` needs a node-denoiser checkpoint; use `eval` for reasoning".into()))
        }
    };
    let graphs = match &req.graph {
        Some(p) => {
            let split = load_graphs(p)?;
            if split.test.is_empty() {
                split.train
            } else {
                split.test
            }
        }
        None => match stored.task {
            TaskKind::Transductive => vec![transductive_data(&stored)?.0],
            _ => inductive_data(&stored)?.test,
        },
    };
    if graphs.is_empty() {
        return Err(Error::Value("no graphs to run inference on".into()));
    }
    let mut cfg = stored.clone();
    let o = &req.overrides;
    cfg.apply(&Overrides { seed: o.seed, lambda: o.lambda, samples: o.samples, mode: o.mode, ..Default::default() });
    cfg.validate()?;

    let refs: Vec<&Graph> = graphs.iter().collect();
    check_node_shapes(&denoiser, &refs)?;
    let input = NodeInput::batch(&refs, denoiser.config().backbone)?;
    let truth = union_labels(&refs).ok();
    let schedule = cfg.schedule.build()?;
    let mut rng = Streams::new(cfg.seed).infer;
    let mut trace = Vec::new();
    let pred = infer_nodes(&denoiser, &input, &schedule, &cfg.inference, &mut rng, |t, y| {
        if let Some(truth) = &truth {
            let m = node_metrics(&discretize(y), truth, input.group_rows())?;
            trace.push((t, m.node_accuracy, m.graph_accuracy));
        }
        Ok(())
    })?;
    let metrics = truth.as_ref().map(|t| node_metrics(&pred, t, input.group_rows())).transpose()?;

    prepare_out(&req.out)?;
    let mut p = CsvTable::new(&["graph", "node", "label"]);
    for (g, range) in input.group_rows().iter().enumerate() {
        for (i, &label) in pred[range.clone()].iter().enumerate() {
            p.push(vec![g.into(), i.into(), label.into()])?;
        }
    }
    p.write(req.out.join("predictions.csv"))?;
    if let Some(m) = metrics {
        let mut t = CsvTable::new(&["t", "node_accuracy", "graph_accuracy"]);
        for &(step, n, g) in &trace {
            t.push(vec![Cell::from(step), n.into(), g.into()])?;
        }
        t.write(req.out.join("trace.csv"))?;
        metrics_table(&[("infer", m)])?.write(req.out.join("metrics.csv"))?;
    }
    Ok(InferReport { predictions: pred, metrics, trace })
}

/// Writes the dataset a configuration describes as a graph-JSON directory.
/// Transductive datasets hold the fully labeled graph; the label mask is
/// drawn again when a run loads it.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    let split = match cfg.task {
        TaskKind::Inductive => {
            generator(cfg)?;
            inductive_data(cfg)?
        }
        TaskKind::Transductive => {
            generator(cfg)?;
            DatasetSplit {
                train: vec![transductive_data(cfg)?.0.with_split(Some("train".into()))],
                ..Default::default()
            }
        }
        TaskKind::Reasoning => {
            if cfg.data.path.is_some() {
                return Err(Error::Config("gen-data builds data; unset data.path".into()));
            }
            reasoning_data(cfg)?
        }
    };
    save_dataset(&split, out)
}
