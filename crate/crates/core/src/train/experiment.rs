use std::ops::ControlFlow;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::head::{graph_readout, TaskHead};
use super::loss::{accuracy, l1_loss, mean_absolute_error, weighted_accuracy, weighted_cross_entropy};
use super::optim::{Adam, PlateauSchedule};
use super::report::{EpochRecord, RunReport, SeedResult};
use super::TrainError;
use crate::config::{DatasetSpec, ExperimentConfig, TaskKind};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, generate_regression_set, generate_sbm, load_json, Graph, GraphBatch};
use crate::model::{GraphTransformer, ModelConfig, NormKind, PeInput, PeKind};
use crate::pe::{lap_pe, random_sign_flip, wl_roles, LapPE};
use crate::tensor::{Mode, ParamStore, Tape, Tensor};

/// Per-graph positional input, computed once on the original sparse graph.
#[derive(Clone, Debug)]
enum GraphPe {
    None,
    Laplacian(LapPE),
    Roles(Vec<usize>),
}

/// A generated or loaded dataset with its fixed test split and precomputed
/// positional encodings, shared read-only by every seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    /// The model config with input widths taken from the data.
    pub model_config: ModelConfig,
    pub graphs: Vec<Graph>,
    pe: Vec<GraphPe>,
    /// Indices of held-out test graphs, fixed by the dataset seed.
    pub test: Vec<usize>,
    /// Remaining graphs, split into train and validation per run seed.
    pub pool: Vec<usize>,
    pub num_outputs: usize,
}

/// Contradictions between the config and the data are reported here, before
/// any training starts.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut graphs = match &cfg.dataset {
        DatasetSpec::SyntheticRegression {
            num_graphs,
            min_nodes,
            max_nodes,
        } => generate_regression_set(*num_graphs, (*min_nodes, *max_nodes), cfg.dataset_seed)?,
        DatasetSpec::Sbm { num_graphs, params } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.dataset_seed);
            (0..*num_graphs)
                .map(|_| generate_sbm(params, rng.gen()))
                .collect::<std::result::Result<_, _>>()?
        }
        DatasetSpec::JsonDir { path } => load_dir(path)?,
    };
    if graphs.is_empty() {
        return Err(TrainError::Dataset("no graphs".into()).into());
    }

    let mut model_config = cfg.model.clone();
    model_config.node_feature_dim = graphs[0].node_feature_dim();
    model_config.edge_feature_dim = graphs[0].edge_feature_dim();
    for (i, g) in graphs.iter().enumerate() {
        if g.node_feature_dim() != model_config.node_feature_dim || g.edge_feature_dim() != model_config.edge_feature_dim {
            return Err(TrainError::Dataset(format!(
                "graph {i} has feature widths ({}, {}), graph 0 has ({}, {})",
                g.node_feature_dim(),
                g.edge_feature_dim(),
                model_config.node_feature_dim,
                model_config.edge_feature_dim
            ))
            .into());
        }
    }
    if model_config.use_edge_features && model_config.edge_feature_dim == 0 {
        return Err(TrainError::Contradiction(
            "use_edge_features is set but the dataset has no edge features (d_e = 0)".into(),
        )
        .into());
    }
    model_config.validate()?;

    let num_outputs = match cfg.task {
        TaskKind::Regression => {
            if let Some(i) = graphs.iter().position(|g| g.graph_label().is_none()) {
                return Err(TrainError::Dataset(format!("graph {i} has no graph label for regression")).into());
            }
            1
        }
        TaskKind::NodeClassification => {
            let mut max = 0;
            for (i, g) in graphs.iter().enumerate() {
                let labels = g
                    .node_labels()
                    .ok_or_else(|| TrainError::Dataset(format!("graph {i} has no node labels")))?;
                max = max.max(labels.iter().copied().max().unwrap_or(0));
            }
            match &cfg.dataset {
                DatasetSpec::Sbm { params, .. } => params.num_blocks,
                _ => max + 1,
            }
        }
    };

    let pe = match model_config.pe_kind {
        PeKind::None => vec![GraphPe::None; graphs.len()],
        PeKind::Laplacian { k } => graphs
            .iter()
            .map(|g| lap_pe(g, k).map(GraphPe::Laplacian))
            .collect::<std::result::Result<_, _>>()?,
        PeKind::Wl { max_roles } => {
            // refinement over the disjoint union keeps ids comparable across graphs
            let union = batch_graphs(graphs.iter())?;
            let roles = wl_roles(union.graph(), cfg.wl_iterations);
            (0..graphs.len())
                .map(|g| {
                    let ids = roles.role_id[union.node_range(g)].iter().map(|&r| r.min(max_roles - 1)).collect();
                    GraphPe::Roles(ids)
                })
                .collect()
        }
    };

    if cfg.full_graph {
        graphs = graphs.iter().map(Graph::densify).collect();
        model_config.edge_feature_dim = 0;
    }

    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.dataset_seed ^ 0x5eed_7e57));
    let num_test = split_count(graphs.len(), cfg.test_fraction);
    let test = order[..num_test].to_vec();
    let pool = order[num_test..].to_vec();

    Ok(Prepared {
        config: cfg.clone(),
        model_config,
        graphs,
        pe,
        test,
        pool,
        num_outputs,
    })
}

fn split_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

fn load_dir(dir: &Path) -> Result<Vec<Graph>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(load_json).collect()
}

/// A trained model with its task head and parameters.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: GraphTransformer,
    pub head: TaskHead,
    pub store: ParamStore,
}

struct Evaluation {
    loss: f64,
    metric: f64,
}

impl Prepared {
    pub fn metric_name(&self) -> &'static str {
        match (self.config.task, self.config.weighted_accuracy) {
            (TaskKind::Regression, _) => "mae",
            (TaskKind::NodeClassification, false) => "accuracy",
            (TaskKind::NodeClassification, true) => "weighted_accuracy",
        }
    }

    fn batch(&self, ids: &[usize], flip: Option<&mut ChaCha8Rng>) -> Result<(GraphBatch, PeInput)> {
        let batch = batch_graphs(ids.iter().map(|&i| &self.graphs[i]))?;
        let pe = match self.model_config.pe_kind {
            PeKind::None => PeInput::None,
            PeKind::Laplacian { k } => {
                let mut rows = Tensor::zeros(&[batch.graph().num_nodes(), k]);
                let mut flip = flip;
                for (b, &i) in ids.iter().enumerate() {
                    let GraphPe::Laplacian(pe) = &self.pe[i] else { unreachable!("pe kind fixed at prepare") };
                    let pe = match flip.as_deref_mut() {
                        Some(rng) => random_sign_flip(pe, rng),
                        None => pe.clone(),
                    };
                    for (r, node) in batch.node_range(b).enumerate() {
                        rows.row_mut(node).copy_from_slice(pe.encodings.row(r));
                    }
                }
                PeInput::Laplacian(rows)
            }
            PeKind::Wl { .. } => PeInput::Roles(
                ids.iter()
                    .flat_map(|&i| match &self.pe[i] {
                        GraphPe::Roles(r) => r.iter().copied(),
                        _ => unreachable!("pe kind fixed at prepare"),
                    })
                    .collect(),
            ),
        };
        Ok((batch, pe))
    }

    /// Loss and metric of `ids` evaluated as one batch in eval mode with no
    /// augmentation.
    fn evaluate(&self, trained: &mut TrainedModel, ids: &[usize]) -> Result<Evaluation> {
        let (batch, pe) = self.batch(ids, None)?;
        let mut tape = Tape::new();
        let bound = trained.store.bind(&mut tape);
        let out = trained.model.forward(&mut tape, &bound, &batch, &pe, Mode::Eval)?;
        match self.config.task {
            TaskKind::Regression => {
                let r = graph_readout(&mut tape, out.nodes, &batch)?;
                let y = trained.head.forward(&mut tape, &bound, r)?;
                let targets = batch.graph_labels().expect("checked at prepare");
                let pred = tape.value(y).data().to_vec();
                let mae = mean_absolute_error(&pred, targets);
                Ok(Evaluation { loss: mae, metric: mae })
            }
            TaskKind::NodeClassification => {
                let logits = trained.head.forward(&mut tape, &bound, out.nodes)?;
                let labels = batch.graph().node_labels().expect("checked at prepare");
                let loss = weighted_cross_entropy(&mut tape, logits, labels)?;
                Ok(Evaluation {
                    loss: tape.value(loss).item(),
                    metric: self.class_metric(tape.value(logits), labels),
                })
            }
        }
    }

    fn class_metric(&self, logits: &Tensor, labels: &[usize]) -> f64 {
        if self.config.weighted_accuracy {
            weighted_accuracy(logits, labels)
        } else {
            accuracy(logits, labels)
        }
    }

    /// Train and validation graph indices for one run seed.
    fn split_for_seed(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let mut pool = self.pool.clone();
        pool.shuffle(rng);
        let num_val = split_count(self.graphs.len(), self.config.val_fraction).min(pool.len().saturating_sub(1));
        let val = pool[..num_val].to_vec();
        let train = pool[num_val..].to_vec();
        (train, val)
    }

    /// Trains one seed and returns its record together with the final model.
    pub fn train(&self, seed: u64) -> Result<(SeedResult, TrainedModel)> {
        let cfg = &self.config;
        let timing = cfg.record_timing;
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let model = GraphTransformer::new(self.model_config.clone(), &mut store, &mut rng)?;
        let head = TaskHead::new(self.model_config.hidden_dim, self.num_outputs, &mut store, &mut rng);
        let mut trained = TrainedModel { model, head, store };
        let (mut train_ids, val_ids) = self.split_for_seed(&mut rng);
        if train_ids.is_empty() {
            return Err(TrainError::Dataset("no training graphs left after the test and validation splits".into()).into());
        }
        let mut adam = Adam::new(&trained.store);
        let mut schedule = PlateauSchedule::new(cfg.schedule.clone());
        let flip_pe = matches!(self.model_config.pe_kind, PeKind::Laplacian { .. });
        let mut trajectory = Vec::new();

        loop {
            let epoch_start = Instant::now();
            let lr = schedule.lr();
            train_ids.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut metric_sum = 0.0;
            let mut weight_sum = 0.0;
            for chunk in train_ids.chunks(cfg.batch_size) {
                let (batch, pe) = self.batch(chunk, flip_pe.then_some(&mut rng))?;
                let mut tape = Tape::new();
                let bound = trained.store.bind(&mut tape);
                let out = trained.model.forward(&mut tape, &bound, &batch, &pe, Mode::Train)?;
                let (loss, metric, weight) = match cfg.task {
                    TaskKind::Regression => {
                        let r = graph_readout(&mut tape, out.nodes, &batch)?;
                        let y = trained.head.forward(&mut tape, &bound, r)?;
                        let targets = batch.graph_labels().expect("checked at prepare");
                        let loss = l1_loss(&mut tape, y, targets)?;
                        let mae = mean_absolute_error(tape.value(y).data(), targets);
                        (loss, mae, chunk.len() as f64)
                    }
                    TaskKind::NodeClassification => {
                        let logits = trained.head.forward(&mut tape, &bound, out.nodes)?;
                        let labels = batch.graph().node_labels().expect("checked at prepare");
                        let loss = weighted_cross_entropy(&mut tape, logits, labels)?;
                        let m = self.class_metric(tape.value(logits), labels);
                        (loss, m, labels.len() as f64)
                    }
                };
                loss_sum += tape.value(loss).item() * weight;
                metric_sum += metric * weight;
                weight_sum += weight;
                tape.backward(loss)?;
                let grads = bound.grads(&tape);
                adam.step(&mut trained.store, &grads, lr);
            }
            let train_loss = loss_sum / weight_sum;
            let monitored_loss = if val_ids.is_empty() {
                train_loss
            } else {
                self.evaluate(&mut trained, &val_ids)?.loss
            };
            let test_metric = if self.test.is_empty() {
                None
            } else {
                Some(self.evaluate(&mut trained, &self.test)?.metric)
            };
            let step = schedule.step(monitored_loss);
            trajectory.push(EpochRecord {
                epoch: trajectory.len(),
                lr,
                train_loss,
                monitored_loss,
                train_metric: metric_sum / weight_sum,
                test_metric,
                seconds: if timing { epoch_start.elapsed().as_secs_f64() } else { 0.0 },
            });
            if step.stop {
                break;
            }
        }

        let train_metric = self.evaluate(&mut trained, &train_ids)?.metric;
        let test_metric = trajectory.last().and_then(|r| r.test_metric);
        let result = SeedResult {
            seed,
            epochs: trajectory.len(),
            decays: schedule.decays(),
            final_lr: schedule.lr(),
            train_metric,
            test_metric,
            trajectory,
            total_seconds: if timing { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        Ok((result, trained))
    }

    /// Metric of the given model on the test split (or the whole pool when
    /// there is no test split); evaluation never augments, so repeated calls
    /// agree exactly.
    pub fn evaluate_metric(&self, trained: &mut TrainedModel) -> Result<f64> {
        let ids = if self.test.is_empty() { &self.pool } else { &self.test };
        Ok(self.evaluate(trained, ids)?.metric)
    }

    /// Assembles a report from finished seeds, ordered as in the config.
    /// Fewer seeds than configured marks the report partial.
    pub fn report(&self, mut seeds: Vec<SeedResult>) -> RunReport {
        let cfg = &self.config;
        let position = |s: u64| cfg.seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);
        seeds.sort_by_key(|r| position(r.seed));
        let summary = RunReport::summarize(&seeds);
        let mut store = ParamStore::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let num_params = GraphTransformer::new(self.model_config.clone(), &mut store, &mut rng)
            .map(|_| {
                TaskHead::new(self.model_config.hidden_dim, self.num_outputs, &mut store, &mut rng);
                store.num_scalars()
            })
            .unwrap_or(0);
        RunReport {
            config: serde_json::to_value(cfg).expect("config serializes"),
            metric: self.metric_name().to_string(),
            lower_is_better: cfg.task == TaskKind::Regression,
            num_params,
            seeds_requested: cfg.seeds.len(),
            partial: seeds.len() < cfg.seeds.len(),
            single_seed: cfg.seeds.len() == 1,
            seeds,
            summary,
            dataset: cfg.dataset.name().to_string(),
            pe_label: match self.model_config.pe_kind {
                PeKind::None => "none".to_string(),
                PeKind::Laplacian { k } => format!("lap(k={k})"),
                PeKind::Wl { .. } => "wl".to_string(),
            },
            num_layers: self.model_config.num_layers,
            full_graph: cfg.full_graph,
            norm: match self.model_config.norm_kind {
                NormKind::BatchNorm => "BN".to_string(),
                NormKind::LayerNorm => "LN".to_string(),
            },
        }
    }
}

/// Trains one seed on prepared data.
pub fn train_seed(prepared: &Prepared, seed: u64) -> Result<SeedResult> {
    prepared.train(seed).map(|(r, _)| r)
}

/// Runs every configured seed in order and aggregates the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_with(cfg, |_| ControlFlow::Continue(()))
}

/// Like [`run_experiment`], calling `on_seed` with the partial report after
/// each seed; returning `Break` stops early and yields that partial report.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_seed: impl FnMut(&RunReport) -> ControlFlow<()>,
) -> Result<RunReport> {
    let prepared = prepare(cfg)?;
    let mut done = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        done.push(train_seed(&prepared, seed)?);
        let report = prepared.report(done.clone());
        if on_seed(&report).is_break() {
            return Ok(report);
        }
    }
    Ok(prepared.report(done))
}
