//! The experiment loop: bootstrap, then per round
//! joins -> (re)cluster -> select -> local train -> quarantine -> FedAvg -> evaluate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::{self, ClientId, ClientSpec, FederatedDataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::{init_model, WeightVector};
use crate::rng;
use crate::selection::{
    self, build_strategy, ClientState, ClusterSnapshot, Rationale, SelectionDecision,
    SelectionStrategy,
};
use crate::train::{self, LocalUpdate, ModelShape, SgdParams};

/// Env var capping local-training threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "FEDSEL_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 0 is the bootstrap round.
    pub round: usize,
    pub selected: Vec<(ClientId, Rationale)>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Latest cached training loss of every active client that has trained.
    pub train_losses: BTreeMap<ClientId, f64>,
    pub clusters: Option<ClusterSnapshot>,
    pub cluster_losses: Option<BTreeMap<usize, f64>>,
    pub selection_time_s: f64,
    /// Clients whose updates entered FedAvg.
    pub aggregated: Vec<ClientId>,
}

impl RoundRecord {
    pub fn selected_ids(&self) -> Vec<ClientId> {
        self.selected.iter().map(|(id, _)| *id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        Some(TimingStats {
            mean_s: samples.iter().sum::<f64>() / samples.len() as f64,
            min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub strategy: String,
    pub n_clients: usize,
    pub stats: TimingStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    /// Every client that was ever active, including zero counts.
    pub participation: BTreeMap<ClientId, usize>,
    pub final_weights: WeightVector,
    pub timing: Vec<TimingRow>,
}

impl ExperimentResult {
    pub fn accuracy_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_accuracy).collect()
    }
}

pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))
}

/// Activates clients whose join round is `round`.
pub fn apply_roster_events(
    round: usize,
    pending: &[ClientSpec],
    roster: &mut Vec<ClientState>,
    datasets: &BTreeMap<ClientId, Arc<Vec<crate::model::Sample>>>,
) -> Result<Vec<ClientId>> {
    let mut joined = Vec::new();
    for spec in pending.iter().filter(|c| c.join_round == round) {
        if roster.iter().any(|c| c.client_id == spec.client_id) {
            return Err(Error::State(format!(
                "client {} is already active",
                spec.client_id
            )));
        }
        let data = datasets.get(&spec.client_id).cloned().ok_or_else(|| {
            Error::State(format!("no dataset for client {}", spec.client_id))
        })?;
        roster.push(ClientState::new(spec.client_id, data, spec.join_round));
        joined.push(spec.client_id);
    }
    roster.sort_by_key(|c| c.client_id);
    Ok(joined)
}

/// Mean cached training loss per cluster, one row per clustered round.
pub fn per_cluster_loss(records: &[RoundRecord]) -> Result<Vec<(usize, BTreeMap<usize, f64>)>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<_> = records
        .iter()
        .filter_map(|r| {
            let snap = r.clusters.as_ref()?;
            Some((r.round, cluster_mean_losses(snap, &r.train_losses)))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Usage("no round carries a cluster snapshot".into()));
    }
    Ok(rows)
}

fn cluster_mean_losses(
    snap: &ClusterSnapshot,
    losses: &BTreeMap<ClientId, f64>,
) -> BTreeMap<usize, f64> {
    snap.clusters()
        .iter()
        .enumerate()
        .filter_map(|(cid, members)| {
            let vals: Vec<f64> = members.iter().filter_map(|m| losses.get(m).copied()).collect();
            (!vals.is_empty()).then(|| (cid, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

/// Times only the selection step on a frozen roster. The rng is reset for
/// each repetition so every repetition must pick the same clients.
pub fn time_selection(
    strategy: &dyn SelectionStrategy,
    roster: &[ClientState],
    repetitions: usize,
    seed: u64,
) -> Result<(TimingStats, Vec<ClientId>)> {
    if repetitions == 0 {
        return Err(Error::Usage("timing needs at least one repetition".into()));
    }
    let mut samples = Vec::with_capacity(repetitions);
    let mut first: Option<Vec<ClientId>> = None;
    for _ in 0..repetitions {
        let mut r = rng::stream(seed, &[rng::TAG_SELECTION]);
        let start = Instant::now();
        let decision = strategy.select(roster, &mut r)?;
        samples.push(start.elapsed().as_secs_f64());
        let ids = decision.ids();
        match &first {
            None => first = Some(ids),
            Some(prev) if *prev != ids => {
                return Err(Error::Internal("selection is not a pure function of its state".into()))
            }
            Some(_) => {}
        }
    }
    let stats = TimingStats::from_samples(&samples).expect("non-empty");
    Ok((stats, first.unwrap_or_default()))
}

/// A prepared experiment: data generated, nothing trained yet.
pub struct Simulation {
    config: ExperimentConfig,
    shape: ModelShape,
    dataset: FederatedDataset,
    datasets: BTreeMap<ClientId, Arc<Vec<crate::model::Sample>>>,
    pending: Vec<ClientSpec>,
    roster: Vec<ClientState>,
    global: WeightVector,
    pool: rayon::ThreadPool,
    participation: BTreeMap<ClientId, usize>,
}

fn component_seed(master: u64, tag: u64, seed: u64) -> u64 {
    rng::derive_seed(master, &[tag, seed])
}

impl Simulation {
    pub fn new(config: ExperimentConfig, spec: &PartitionSpec) -> Result<Self> {
        config.validate()?;
        let mut gen = config.generator.clone();
        gen.seed = component_seed(config.seed, 101, gen.seed);
        let mut test = config.test.clone();
        test.seed = component_seed(config.seed, 102, test.seed);
        let dataset = data::generate(spec, &gen, &test)?;
        let shape = ModelShape {
            num_classes: spec.num_classes,
            feature_dim: gen.feature_dim,
        };
        let model_seed = component_seed(config.seed, 103, config.model.seed);
        let global = init_model(shape.num_classes, shape.feature_dim, model_seed, config.model.scheme)?
            .flatten();
        let datasets: BTreeMap<ClientId, Arc<Vec<_>>> = dataset
            .clients
            .iter()
            .map(|c| (c.client_id, Arc::new(c.samples.clone())))
            .collect();
        let pending: Vec<ClientSpec> = spec
            .clients
            .iter()
            .filter(|c| datasets.contains_key(&c.client_id))
            .cloned()
            .collect();
        let mut roster = Vec::new();
        apply_roster_events(0, &pending, &mut roster, &datasets)?;
        if roster.is_empty() {
            return Err(Error::Config("no founding clients (join_round 0)".into()));
        }
        Ok(Simulation {
            config,
            shape,
            dataset,
            datasets,
            pending,
            roster,
            global,
            pool: thread_pool()?,
            participation: BTreeMap::new(),
        })
    }

    pub fn dataset(&self) -> &FederatedDataset {
        &self.dataset
    }

    pub fn roster(&self) -> &[ClientState] {
        &self.roster
    }

    pub fn global(&self) -> &WeightVector {
        &self.global
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    fn sgd_for_round(&self, round: usize) -> SgdParams {
        SgdParams {
            shuffle_seed: rng::derive_seed(
                component_seed(self.config.seed, 104, self.config.sgd.shuffle_seed),
                &[round as u64],
            ),
            ..self.config.sgd.clone()
        }
    }

    fn train_clients(&self, ids: &[ClientId], round: usize) -> Result<Vec<LocalUpdate>> {
        let params = self.sgd_for_round(round);
        let global = &self.global;
        let shape = self.shape;
        let jobs: Vec<(ClientId, Arc<Vec<crate::model::Sample>>)> = ids
            .iter()
            .map(|id| {
                self.datasets
                    .get(id)
                    .cloned()
                    .map(|d| (*id, d))
                    .ok_or_else(|| Error::State(format!("no dataset for client {id}")))
            })
            .collect::<Result<_>>()?;
        let mut updates = self.pool.install(|| {
            jobs.par_iter()
                .map(|(id, data)| train::local_train(*id, global, shape, data, &params))
                .collect::<Result<Vec<_>>>()
        })?;
        updates.sort_by_key(|u| u.client_id);
        Ok(updates)
    }

    /// Bootstrap round: every founding client trains once.
    pub fn bootstrap(&mut self) -> Result<RoundRecord> {
        let start = Instant::now();
        let decision = selection::initialization_schedule(&self.roster)
            .pop()
            .expect("one bootstrap decision");
        let elapsed = start.elapsed().as_secs_f64();
        self.finish_round(0, decision, elapsed)
            .map_err(|e| e.in_round(0, "bootstrap"))
    }

    /// Runs strategy round `round` (1-based).
    pub fn step(&mut self, round: usize, strategy: &dyn SelectionStrategy) -> Result<RoundRecord> {
        let joined = apply_roster_events(round, &self.pending, &mut self.roster, &self.datasets)
            .map_err(|e| e.in_round(round, "roster"))?;
        let eligible: Vec<ClientState> = self
            .roster
            .iter()
            .filter(|c| c.has_trained())
            .cloned()
            .collect();
        let mut r = rng::stream(self.config.seed, &[rng::TAG_SELECTION, round as u64]);
        let start = Instant::now();
        let mut decision = strategy
            .select(&eligible, &mut r)
            .map_err(|e| e.in_round(round, "selection"))?;
        let elapsed = start.elapsed().as_secs_f64();
        if let Some(snapshot) = &decision.clusters {
            selection::update_stability(
                &mut self.roster,
                snapshot,
                self.config.strategy.stability_window,
            );
        }
        // Joiners have no weights to cluster yet, so they train in their join round.
        for id in joined {
            if !decision.selected.iter().any(|(s, _)| *s == id) {
                decision.selected.push((id, Rationale::NewcomerQuarantined));
            }
        }
        self.finish_round(round, decision, elapsed)
    }

    fn finish_round(
        &mut self,
        round: usize,
        decision: SelectionDecision,
        selection_time: f64,
    ) -> Result<RoundRecord> {
        let ids = decision.ids();
        let updates = self
            .train_clients(&ids, round)
            .map_err(|e| e.in_round(round, "local training"))?;
        for u in &updates {
            let state = self
                .roster
                .iter_mut()
                .find(|c| c.client_id == u.client_id)
                .ok_or_else(|| Error::State(format!("client {} is not active", u.client_id)))?;
            state.record_training(u, &self.global, round)?;
            state.participation_count += 1;
            *self.participation.entry(u.client_id).or_default() += 1;
        }
        let newcomers: BTreeSet<ClientId> =
            selection::detect_newcomers(&self.roster, round).into_iter().collect();
        let since_join: BTreeMap<ClientId, usize> = self
            .roster
            .iter()
            .map(|c| (c.client_id, round.saturating_sub(c.joined_round)))
            .collect();
        let kept = selection::quarantine_filter(
            updates,
            &newcomers,
            self.config.strategy.quarantine_rounds,
            &since_join,
        );
        if !kept.is_empty() {
            self.global = train::fedavg(&kept, self.config.aggregation)
                .map_err(|e| e.in_round(round, "aggregation"))?;
        }
        let eval = train::evaluate(&self.global, self.shape, &self.dataset.test)
            .map_err(|e| e.in_round(round, "evaluation"))?;
        let train_losses: BTreeMap<ClientId, f64> = self
            .roster
            .iter()
            .filter_map(|c| c.latest_train_loss.map(|l| (c.client_id, l)))
            .collect();
        let cluster_losses = decision
            .clusters
            .as_ref()
            .map(|s| cluster_mean_losses(s, &train_losses));
        for c in &self.roster {
            self.participation.entry(c.client_id).or_default();
        }
        Ok(RoundRecord {
            round,
            selected: decision.selected,
            test_accuracy: eval.accuracy,
            test_loss: eval.loss,
            train_losses,
            clusters: decision.clusters,
            cluster_losses,
            selection_time_s: if self.config.record_selection_time {
                selection_time
            } else {
                0.0
            },
            aggregated: kept.iter().map(|u| u.client_id).collect(),
        })
    }

    pub fn run(mut self) -> Result<ExperimentResult> {
        let strategy = build_strategy(&self.config.strategy)?;
        let mut records = Vec::with_capacity(self.config.total_rounds + 1);
        records.push(self.bootstrap()?);
        for round in 1..=self.config.total_rounds {
            records.push(self.step(round, strategy.as_ref())?);
        }
        let times: Vec<f64> = records[1..].iter().map(|r| r.selection_time_s).collect();
        let timing = TimingStats::from_samples(&times)
            .map(|stats| TimingRow {
                strategy: self.config.strategy.label(),
                n_clients: self.roster.len(),
                stats,
            })
            .into_iter()
            .collect();
        Ok(ExperimentResult {
            config: self.config,
            records,
            participation: self.participation,
            final_weights: self.global,
            timing,
        })
    }
}

pub fn run_with_spec(config: &ExperimentConfig, spec: &PartitionSpec) -> Result<ExperimentResult> {
    Simulation::new(config.clone(), spec)?.run()
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let spec = config.load_partition()?;
    run_with_spec(config, &spec)
}

/// Bootstraps the configured federation, then times random, highest-loss
/// and cluster selection of `timing.select` clients on the frozen state.
pub fn timing_benchmark(config: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    let spec = config.load_partition()?;
    let mut sim = Simulation::new(config.clone(), &spec)?;
    sim.bootstrap()?;
    let n = sim.roster.len();
    let select = config.timing.select.min(n);
    let mut strategies = vec![
        selection::StrategyConfig::random_n(select),
        selection::StrategyConfig::highest_loss(select),
    ];
    let mut cluster = selection::StrategyConfig::cluster(select);
    if config.strategy.kind == selection::StrategyKind::Cluster {
        cluster.metric = config.strategy.metric;
        cluster.linkage = config.strategy.linkage;
        cluster.within_cluster_policy = config.strategy.within_cluster_policy;
        cluster.cluster_on = config.strategy.cluster_on;
    }
    strategies.push(cluster);
    strategies
        .iter()
        .map(|s| {
            let strategy = build_strategy(s)?;
            let (stats, _) = time_selection(strategy.as_ref(), &sim.roster, config.timing.repetitions, config.seed)?;
            Ok(TimingRow {
                strategy: s.label(),
                n_clients: n,
                stats,
            })
        })
        .collect()
}

/// Weight snapshots from `rounds` rounds of all-client training (after the
/// bootstrap), the input to hyperparameter grid search.
pub fn all_client_snapshots(config: &ExperimentConfig, rounds: usize) -> Result<Vec<Vec<WeightVector>>> {
    let spec = config.load_partition()?;
    let mut cfg = config.clone();
    cfg.strategy = selection::StrategyConfig::random_fraction(1.0);
    let mut sim = Simulation::new(cfg, &spec)?;
    let strategy = build_strategy(&sim.config.strategy)?;
    let snapshot = |sim: &Simulation| -> Vec<WeightVector> {
        sim.roster
            .iter()
            .filter_map(|c| c.latest_weights.clone())
            .collect()
    };
    sim.bootstrap()?;
    let mut out = vec![snapshot(&sim)];
    for round in 1..=rounds {
        sim.step(round, strategy.as_ref())?;
        out.push(snapshot(&sim));
    }
    Ok(out)
}
