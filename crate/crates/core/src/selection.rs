//! Client-selection strategies and newcomer tracking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterAssignment, Linkage, Metric};
use crate::data::ClientId;
use crate::error::{Error, Result};
use crate::model::{Sample, WeightVector};
use crate::train::LocalUpdate;

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: ClientId,
    pub dataset: Arc<Vec<Sample>>,
    pub latest_weights: Option<WeightVector>,
    /// Latest weights minus the global model they were trained from.
    pub latest_delta: Option<WeightVector>,
    pub latest_train_loss: Option<f64>,
    pub participation_count: usize,
    pub last_trained_round: Option<usize>,
    pub joined_round: usize,
    pub newcomer: bool,
    pub stable_cluster_streak: usize,
    /// Smallest client id in this client's cluster at the last recalculation.
    pub cluster_anchor: Option<ClientId>,
}

impl ClientState {
    pub fn new(client_id: ClientId, dataset: Arc<Vec<Sample>>, joined_round: usize) -> Self {
        ClientState {
            client_id,
            dataset,
            latest_weights: None,
            latest_delta: None,
            latest_train_loss: None,
            participation_count: 0,
            last_trained_round: None,
            joined_round,
            newcomer: joined_round > 0,
            stable_cluster_streak: 0,
            cluster_anchor: None,
        }
    }

    /// Caches a finished local update.
    pub fn record_training(&mut self, update: &LocalUpdate, global: &WeightVector, round: usize) -> Result<()> {
        self.latest_delta = Some(update.weights.delta(global)?);
        self.latest_weights = Some(update.weights.clone());
        self.latest_train_loss = Some(update.train_loss);
        self.last_trained_round = Some(round);
        Ok(())
    }

    pub fn has_trained(&self) -> bool {
        self.latest_weights.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    Random,
    TopLoss,
    ClusterRepresentative,
    Initialization,
    NewcomerQuarantined,
}

impl Rationale {
    pub fn name(self) -> &'static str {
        match self {
            Rationale::Random => "random",
            Rationale::TopLoss => "top_loss",
            Rationale::ClusterRepresentative => "cluster_representative",
            Rationale::Initialization => "initialization",
            Rationale::NewcomerQuarantined => "newcomer_quarantined",
        }
    }

    /// Picks that came from the configured strategy itself.
    pub fn is_strategy_pick(self) -> bool {
        matches!(
            self,
            Rationale::Random | Rationale::TopLoss | Rationale::ClusterRepresentative
        )
    }
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// A flat clustering of named clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSnapshot {
    /// Client ids in ascending order; position `i` has label `assignment.labels()[i]`.
    pub members: Vec<ClientId>,
    pub assignment: ClusterAssignment,
}

impl ClusterSnapshot {
    pub fn label_of(&self, id: ClientId) -> Option<usize> {
        self.members
            .iter()
            .position(|&m| m == id)
            .map(|i| self.assignment.labels()[i])
    }

    pub fn clusters(&self) -> Vec<Vec<ClientId>> {
        self.assignment
            .clusters()
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.members[i]).collect())
            .collect()
    }

    /// Smallest id sharing a cluster with `id`.
    pub fn anchor_of(&self, id: ClientId) -> Option<ClientId> {
        let label = self.label_of(id)?;
        self.members
            .iter()
            .zip(self.assignment.labels())
            .find(|(_, &l)| l == label)
            .map(|(&m, _)| m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDecision {
    pub selected: Vec<(ClientId, Rationale)>,
    pub clusters: Option<ClusterSnapshot>,
}

impl SelectionDecision {
    fn tagged(ids: Vec<ClientId>, why: Rationale) -> Self {
        SelectionDecision {
            selected: ids.into_iter().map(|id| (id, why)).collect(),
            clusters: None,
        }
    }

    pub fn ids(&self) -> Vec<ClientId> {
        self.selected.iter().map(|(id, _)| *id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSize {
    Fraction(f64),
    Count(usize),
}

impl SampleSize {
    /// Fractions round up.
    pub fn resolve(self, roster: usize) -> Result<usize> {
        match self {
            SampleSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Usage(format!("fraction {f} outside (0, 1]")));
                }
                Ok(((f * roster as f64).ceil() as usize).min(roster))
            }
            SampleSize::Count(n) if n > roster => Err(Error::Usage(format!(
                "cannot select {n} of {roster} clients"
            ))),
            SampleSize::Count(n) => Ok(n),
        }
    }
}

fn sorted_ids(roster: &[ClientState]) -> Vec<ClientId> {
    let mut ids: Vec<ClientId> = roster.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    ids
}

pub fn select_random(
    roster: &[ClientState],
    size: SampleSize,
    rng: &mut ChaCha8Rng,
) -> Result<SelectionDecision> {
    if roster.is_empty() {
        return Err(Error::Usage("cannot select from an empty roster".into()));
    }
    let ids = sorted_ids(roster);
    let count = size.resolve(ids.len())?;
    let mut picked: Vec<ClientId> = rand::seq::index::sample(rng, ids.len(), count)
        .into_iter()
        .map(|i| ids[i])
        .collect();
    picked.sort_unstable();
    Ok(SelectionDecision::tagged(picked, Rationale::Random))
}

pub fn select_highest_loss(roster: &[ClientState], n: usize) -> Result<SelectionDecision> {
    if n > roster.len() {
        return Err(Error::Usage(format!(
            "cannot select {n} of {} clients",
            roster.len()
        )));
    }
    let mut ranked = roster
        .iter()
        .map(|c| {
            c.latest_train_loss
                .map(|l| (l, c.client_id))
                .ok_or_else(|| Error::State(format!("client {} has no training loss", c.client_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(SelectionDecision::tagged(
        ranked.into_iter().take(n).map(|(_, id)| id).collect(),
        Rationale::TopLoss,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinClusterPolicy {
    UniformRandom,
    #[default]
    LeastRecent,
}

/// What gets clustered for each client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFeature {
    /// Latest locally trained weights.
    #[default]
    Weights,
    /// Latest local update minus the global model it started from.
    Delta,
}

fn cluster_input(c: &ClientState, feature: ClusterFeature) -> Option<&WeightVector> {
    match feature {
        ClusterFeature::Weights => c.latest_weights.as_ref(),
        ClusterFeature::Delta => c.latest_delta.as_ref(),
    }
}

/// Clusters every client that has trained at least once. `k` is capped at
/// the number of such clients.
pub fn recluster(
    roster: &[ClientState],
    feature: ClusterFeature,
    metric: Metric,
    linkage: Linkage,
    k: usize,
) -> Result<Option<ClusterSnapshot>> {
    let mut clusterable: Vec<&ClientState> = roster
        .iter()
        .filter(|c| cluster_input(c, feature).is_some())
        .collect();
    clusterable.sort_by_key(|c| c.client_id);
    let members: Vec<ClientId> = clusterable.iter().map(|c| c.client_id).collect();
    match members.len() {
        0 => Ok(None),
        1 => Ok(Some(ClusterSnapshot {
            members,
            assignment: ClusterAssignment::from_labels(&[0]),
        })),
        n => {
            let vectors: Vec<&[f64]> = clusterable
                .iter()
                .filter_map(|c| cluster_input(c, feature).map(|w| w.as_slice()))
                .collect();
            let d = cluster::pairwise_distances_raw(&vectors, metric)?;
            let assignment = cluster::cut_k(&cluster::agglomerative(&d, linkage), k.clamp(1, n))?;
            Ok(Some(ClusterSnapshot {
                members,
                assignment,
            }))
        }
    }
}

/// One representative per cluster, clusters in ascending id order.
pub fn select_by_cluster(
    roster: &[ClientState],
    snapshot: &ClusterSnapshot,
    policy: WithinClusterPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<SelectionDecision> {
    let by_id: BTreeMap<ClientId, &ClientState> =
        roster.iter().map(|c| (c.client_id, c)).collect();
    let mut picked = Vec::with_capacity(snapshot.assignment.k());
    for (cid, members) in snapshot.clusters().iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Internal(format!("cluster {cid} is empty")));
        }
        let states = members
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::State(format!("clustered client {id} is not active")))
            })
            .collect::<Result<Vec<_>>>()?;
        let choice = match policy {
            WithinClusterPolicy::UniformRandom => states[rng.random_range(0..states.len())].client_id,
            WithinClusterPolicy::LeastRecent => {
                states
                    .iter()
                    .min_by_key(|c| (c.last_trained_round, c.client_id))
                    .expect("non-empty cluster")
                    .client_id
            }
        };
        picked.push(choice);
    }
    Ok(SelectionDecision {
        selected: picked
            .into_iter()
            .map(|id| (id, Rationale::ClusterRepresentative))
            .collect(),
        clusters: Some(snapshot.clone()),
    })
}

/// Bootstrap: every client trains once before strategy-driven rounds.
pub fn initialization_schedule(roster: &[ClientState]) -> Vec<SelectionDecision> {
    vec![SelectionDecision::tagged(sorted_ids(roster), Rationale::Initialization)]
}

/// Advances each clustered client's stability streak and clears the
/// newcomer flag once a joiner has kept the same cluster for `window`
/// consecutive recalculations.
pub fn update_stability(roster: &mut [ClientState], snapshot: &ClusterSnapshot, window: usize) {
    for c in roster.iter_mut() {
        let Some(anchor) = snapshot.anchor_of(c.client_id) else {
            continue;
        };
        if c.cluster_anchor == Some(anchor) {
            c.stable_cluster_streak += 1;
        } else {
            c.cluster_anchor = Some(anchor);
            c.stable_cluster_streak = 1;
        }
        if c.newcomer && c.has_trained() && c.stable_cluster_streak >= window {
            c.newcomer = false;
        }
    }
}

/// Clients that joined after the start and are not yet integrated.
pub fn detect_newcomers(roster: &[ClientState], current_round: usize) -> Vec<ClientId> {
    let mut ids: Vec<ClientId> = roster
        .iter()
        .filter(|c| c.joined_round > 0 && c.joined_round <= current_round)
        .filter(|c| !c.has_trained() || c.newcomer)
        .map(|c| c.client_id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Drops quarantined newcomer updates from aggregation. Callers still cache
/// the dropped updates.
pub fn quarantine_filter(
    updates: Vec<LocalUpdate>,
    newcomers: &BTreeSet<ClientId>,
    quarantine_rounds: usize,
    rounds_since_join: &BTreeMap<ClientId, usize>,
) -> Vec<LocalUpdate> {
    if quarantine_rounds == 0 {
        return updates;
    }
    updates
        .into_iter()
        .filter(|u| {
            !newcomers.contains(&u.client_id)
                || rounds_since_join
                    .get(&u.client_id)
                    .is_some_and(|&r| r >= quarantine_rounds)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    HighestLoss,
    Cluster,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::HighestLoss => "highest_loss",
            StrategyKind::Cluster => "cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linkage: Option<Linkage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_cluster_policy: Option<WithinClusterPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_on: Option<ClusterFeature>,
    #[serde(default = "default_quarantine")]
    pub quarantine_rounds: usize,
    #[serde(default = "default_window")]
    pub stability_window: usize,
}

fn default_quarantine() -> usize {
    1
}

fn default_window() -> usize {
    3
}

impl StrategyConfig {
    fn base(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            fraction: None,
            n: None,
            k: None,
            metric: None,
            linkage: None,
            within_cluster_policy: None,
            cluster_on: None,
            quarantine_rounds: default_quarantine(),
            stability_window: default_window(),
        }
    }

    pub fn random_fraction(fraction: f64) -> Self {
        StrategyConfig {
            fraction: Some(fraction),
            ..Self::base(StrategyKind::Random)
        }
    }

    pub fn random_n(n: usize) -> Self {
        StrategyConfig {
            n: Some(n),
            ..Self::base(StrategyKind::Random)
        }
    }

    pub fn highest_loss(n: usize) -> Self {
        StrategyConfig {
            n: Some(n),
            ..Self::base(StrategyKind::HighestLoss)
        }
    }

    pub fn cluster(k: usize) -> Self {
        StrategyConfig {
            k: Some(k),
            ..Self::base(StrategyKind::Cluster)
        }
        .with_defaults()
    }

    /// Fills the cluster-only fields with their defaults.
    pub fn with_defaults(mut self) -> Self {
        if self.kind == StrategyKind::Cluster {
            self.metric.get_or_insert(Metric::Cosine);
            self.linkage.get_or_insert(Linkage::Complete);
            self.within_cluster_policy.get_or_insert_with(Default::default);
            self.cluster_on.get_or_insert_with(Default::default);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("strategy.{msg}")));
        let cluster_fields = self.k.is_some()
            || self.metric.is_some()
            || self.linkage.is_some()
            || self.within_cluster_policy.is_some()
            || self.cluster_on.is_some();
        match self.kind {
            StrategyKind::Random => {
                if self.fraction.is_some() == self.n.is_some() {
                    return bad("random needs exactly one of `fraction` or `n`".into());
                }
                if cluster_fields {
                    return bad("random takes no clustering fields".into());
                }
                if let Some(f) = self.fraction {
                    if !(f > 0.0 && f <= 1.0) {
                        return bad(format!("fraction {f} outside (0, 1]"));
                    }
                }
            }
            StrategyKind::HighestLoss => {
                if self.n.is_none() || self.fraction.is_some() || cluster_fields {
                    return bad("highest_loss takes exactly `n`".into());
                }
            }
            StrategyKind::Cluster => {
                if self.k.is_none() || self.fraction.is_some() || self.n.is_some() {
                    return bad("cluster takes `k` and no `fraction`/`n`".into());
                }
            }
        }
        if matches!(self.n, Some(0)) || matches!(self.k, Some(0)) {
            return bad("n and k must be at least 1".into());
        }
        if self.stability_window == 0 {
            return bad("stability_window must be at least 1".into());
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Random => match (self.fraction, self.n) {
                (Some(f), _) => format!("random(f={f})"),
                (_, n) => format!("random(n={})", n.unwrap_or(0)),
            },
            StrategyKind::HighestLoss => format!("highest_loss(n={})", self.n.unwrap_or(0)),
            StrategyKind::Cluster => format!("cluster(k={})", self.k.unwrap_or(0)),
        }
    }
}

/// Common interface over the three strategies.
pub trait SelectionStrategy {
    /// `roster` holds the clients eligible for strategy picks this round.
    fn select(&self, roster: &[ClientState], rng: &mut ChaCha8Rng) -> Result<SelectionDecision>;
}

#[derive(Debug, Clone)]
pub struct RandomStrategy(pub SampleSize);

impl SelectionStrategy for RandomStrategy {
    fn select(&self, roster: &[ClientState], rng: &mut ChaCha8Rng) -> Result<SelectionDecision> {
        select_random(roster, self.0, rng)
    }
}

#[derive(Debug, Clone)]
pub struct HighestLossStrategy(pub usize);

impl SelectionStrategy for HighestLossStrategy {
    fn select(&self, roster: &[ClientState], _rng: &mut ChaCha8Rng) -> Result<SelectionDecision> {
        select_highest_loss(roster, self.0.min(roster.len()))
    }
}

#[derive(Debug, Clone)]
pub struct ClusterStrategy {
    pub k: usize,
    pub metric: Metric,
    pub linkage: Linkage,
    pub policy: WithinClusterPolicy,
    pub feature: ClusterFeature,
}

impl SelectionStrategy for ClusterStrategy {
    fn select(&self, roster: &[ClientState], rng: &mut ChaCha8Rng) -> Result<SelectionDecision> {
        match recluster(roster, self.feature, self.metric, self.linkage, self.k)? {
            Some(snapshot) => select_by_cluster(roster, &snapshot, self.policy, rng),
            None => Ok(SelectionDecision {
                selected: Vec::new(),
                clusters: None,
            }),
        }
    }
}

pub fn build_strategy(config: &StrategyConfig) -> Result<Box<dyn SelectionStrategy + Send + Sync>> {
    config.validate()?;
    let config = config.clone().with_defaults();
    Ok(match config.kind {
        StrategyKind::Random => Box::new(RandomStrategy(match (config.fraction, config.n) {
            (Some(f), _) => SampleSize::Fraction(f),
            (_, Some(n)) => SampleSize::Count(n),
            _ => unreachable!("validated"),
        })),
        StrategyKind::HighestLoss => Box::new(HighestLossStrategy(config.n.unwrap_or(1))),
        StrategyKind::Cluster => Box::new(ClusterStrategy {
            k: config.k.unwrap_or(1),
            metric: config.metric.unwrap_or(Metric::Cosine),
            linkage: config.linkage.unwrap_or(Linkage::Complete),
            policy: config.within_cluster_policy.unwrap_or_default(),
            feature: config.cluster_on.unwrap_or_default(),
        }),
    })
}
