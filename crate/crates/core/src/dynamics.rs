//! One synchronous step of the producer / curator / consumer loop, and
//! multi-step runs.
//!
//! Every agent sees the same pool built from time-`t` positions and every new
//! position is computed from time-`t` positions, so agent order is irrelevant.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::belief::{clamp_to_unit_ball, l2_dist, Agent, BeliefVector, Document, SimState, BALL_TOL};
use crate::config::{ConsumerKind, ProductionMode, SimConfig};
#[cfg(test)]
use crate::config::ConsumerMix;
use crate::error::{Result, SimError};
use crate::metrics::{has_converged, mean_extremity, polarization_q, StepTrace};
use crate::rng::{substream, Purpose, SimRng};

/// Documents available during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentPool {
    pub documents: Vec<Document>,
    pub step: u64,
    dims: usize,
    /// Row-major copy of document positions for distance scans.
    coords: Vec<f64>,
}

impl DocumentPool {
    pub fn new(documents: Vec<Document>, step: u64) -> Result<Self> {
        let dims = documents.first().map_or(0, |d| d.position.dims());
        let mut coords = Vec::with_capacity(documents.len() * dims);
        for (i, d) in documents.iter().enumerate() {
            if d.position.dims() != dims {
                return Err(SimError::DimensionMismatch {
                    left: dims,
                    right: d.position.dims(),
                });
            }
            debug_assert_eq!(d.id, i, "document ids must be 0..len");
            coords.extend_from_slice(d.position.components());
        }
        Ok(DocumentPool {
            documents,
            step,
            dims,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    #[inline]
    fn coords_of(&self, id: usize) -> &[f64] {
        &self.coords[id * self.dims..(id + 1) * self.dims]
    }
}

/// What one agent was shown and what it read during a step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionRecord {
    pub agent_id: usize,
    pub curated_count: usize,
    pub consumed_ids: Vec<usize>,
    /// `consumed / pool size`.
    pub coverage: f64,
}

/// Builds the step-`t` document pool.
///
/// Sampled mode draws `n_docs - n_mis` genuine documents with replacement
/// from free agents and attributes each of the `n_mis` misinformation
/// documents to a uniformly chosen committed agent. Mirror mode emits one
/// genuine document per free agent plus `n_mis` misinformation documents
/// assigned to committed agents in rotation. Genuine documents come first.
pub fn produce_documents(state: &SimState, config: &SimConfig) -> Result<DocumentPool> {
    let n_mis = config.n_misinfo_docs();
    let committed: Vec<&Agent> = state.committed_agents().collect();
    if config.misinfo_ratio > 0.0 && committed.is_empty() {
        return Err(SimError::NoCommittedAgents {
            ratio: config.misinfo_ratio,
        });
    }
    let free: Vec<&Agent> = state.free_agents().collect();
    let mut rng = substream(state.seed, Purpose::Produce, state.time, 0);
    let mut docs = Vec::with_capacity(config.pool_size());
    let mut push = |source: &Agent| {
        docs.push(Document {
            id: docs.len(),
            position: source.position.clone(),
            source_id: source.id,
            is_misinformation: source.committed,
        });
    };
    match config.production_mode {
        ProductionMode::Mirror => {
            free.iter().for_each(|a| push(a));
            for m in 0..n_mis {
                push(committed[m % committed.len()]);
            }
        }
        ProductionMode::Sampled => {
            let n_genuine = config.n_docs - n_mis;
            if n_genuine > 0 && free.is_empty() {
                return Err(SimError::InvalidConfig(
                    "no free agents to produce genuine documents".into(),
                ));
            }
            for _ in 0..n_genuine {
                push(free[rng.random_range(0..free.len())]);
            }
            for _ in 0..n_mis {
                push(committed[rng.random_range(0..committed.len())]);
            }
        }
    }
    DocumentPool::new(docs, state.time)
}

fn curate_with_distances(position: &[f64], radius: f64, pool: &DocumentPool) -> Vec<(f64, usize)> {
    (0..pool.len())
        .filter_map(|id| {
            let d = l2_dist(position, pool.coords_of(id));
            (d <= radius).then_some((d, id))
        })
        .collect()
}

/// Ids of the documents within the agent's visibility radius, ascending.
pub fn curate_for_agent(agent: &Agent, pool: &DocumentPool) -> Vec<usize> {
    curate_with_distances(agent.position.components(), agent.visibility_radius, pool)
        .into_iter()
        .map(|(_, id)| id)
        .collect()
}

/// Keeps the `k` smallest `(distance, id)` pairs, sorted ascending.
fn nearest_k(mut pairs: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let by_distance_then_id = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if pairs.len() > k {
        if k == 0 {
            return Vec::new();
        }
        pairs.select_nth_unstable_by(k - 1, by_distance_then_id);
        pairs.truncate(k);
    }
    pairs.sort_unstable_by(by_distance_then_id);
    pairs.into_iter().map(|(_, id)| id).collect()
}

fn record(agent: &Agent, curated_count: usize, consumed_ids: Vec<usize>, pool: &DocumentPool) -> ConsumptionRecord {
    let coverage = if pool.is_empty() {
        0.0
    } else {
        consumed_ids.len() as f64 / pool.len() as f64
    };
    ConsumptionRecord {
        agent_id: agent.id,
        curated_count,
        consumed_ids,
        coverage,
    }
}

/// Reads the `k` curated documents nearest to the agent; ties go to the lower id.
/// Consumed ids are ordered by (distance, id).
pub fn consume_biased(agent: &Agent, curated: &[usize], pool: &DocumentPool) -> ConsumptionRecord {
    let position = agent.position.components();
    let pairs = curated
        .iter()
        .map(|&id| (l2_dist(position, pool.coords_of(id)), id))
        .collect();
    let consumed = nearest_k(pairs, agent.capacity);
    record(agent, curated.len(), consumed, pool)
}

/// Reads `min(k, |curated|)` distinct curated documents chosen uniformly.
/// Consumed ids are returned in ascending order.
pub fn consume_uniform<R: Rng + ?Sized>(
    agent: &Agent,
    curated: &[usize],
    pool: &DocumentPool,
    rng: &mut R,
) -> ConsumptionRecord {
    let amount = agent.capacity.min(curated.len());
    let mut consumed: Vec<usize> = index::sample(rng, curated.len(), amount)
        .into_iter()
        .map(|i| curated[i])
        .collect();
    consumed.sort_unstable();
    record(agent, curated.len(), consumed, pool)
}

/// Impression left by a document: its extremity plus `epsilon`.
pub fn influence_weight(doc: &Document, epsilon: f64) -> f64 {
    doc.position.norm() + epsilon
}

fn weighted_update(position: &[f64], consumed: &[&[f64]], alpha: f64, epsilon: f64) -> Vec<f64> {
    let dims = position.len();
    let mut num = vec![0.0; dims];
    let mut den = 0.0;
    for y in consumed {
        let w = y.iter().map(|c| c * c).sum::<f64>().sqrt() + epsilon;
        den += w;
        for (n, c) in num.iter_mut().zip(y.iter()) {
            *n += w * c;
        }
    }
    position
        .iter()
        .zip(&num)
        .map(|(x, n)| alpha * x + (1.0 - alpha) * (n / den))
        .collect()
}

/// New position after reading `consumed`: a convex combination of the current
/// position (weight `alpha`) and the influence-weighted mean of the documents.
///
/// Committed agents and agents that read nothing keep their position.
pub fn update_belief(agent: &Agent, consumed: &[&Document], alpha: f64, epsilon: f64) -> BeliefVector {
    if agent.committed || consumed.is_empty() {
        return agent.position.clone();
    }
    let ys: Vec<&[f64]> = consumed.iter().map(|d| d.position.components()).collect();
    let next = weighted_update(agent.position.components(), &ys, alpha, epsilon);
    clamp_to_unit_ball(&next).expect("convex combination of finite points")
}

/// Everything produced by one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SimState,
    pub trace: StepTrace,
    pub pool: DocumentPool,
    /// One record per free agent, in id order.
    pub records: Vec<ConsumptionRecord>,
}

/// Pool documents ordered by their first coordinate, for windowed scans.
///
/// The one-axis distance never exceeds the full distance (both are computed
/// with the same rounding), so pruning on it is exact.
struct SortedPool<'a> {
    pool: &'a DocumentPool,
    /// `(first coordinate, id)`, ascending.
    order: Vec<(f64, usize)>,
}

impl<'a> SortedPool<'a> {
    fn new(pool: &'a DocumentPool) -> Self {
        let mut order: Vec<(f64, usize)> = (0..pool.len()).map(|id| (pool.coords_of(id)[0], id)).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        SortedPool { pool, order }
    }

    #[inline]
    fn axis_dist(x0: f64, key: f64) -> f64 {
        ((x0 - key) * (x0 - key)).sqrt()
    }

    /// Index range of documents whose first coordinate is within `radius`.
    fn window(&self, x0: f64, radius: f64) -> (usize, usize) {
        let lo = self
            .order
            .partition_point(|&(k, _)| k < x0 && Self::axis_dist(x0, k) > radius);
        let hi = self
            .order
            .partition_point(|&(k, _)| k <= x0 || Self::axis_dist(x0, k) <= radius);
        (lo, hi)
    }

    /// Curated `(distance, id)` pairs, unordered.
    fn curated(&self, position: &[f64], radius: f64) -> Vec<(f64, usize)> {
        let (lo, hi) = self.window(position[0], radius);
        self.order[lo..hi]
            .iter()
            .filter_map(|&(_, id)| {
                let d = l2_dist(position, self.pool.coords_of(id));
                (d <= radius).then_some((d, id))
            })
            .collect()
    }

    fn curated_count(&self, position: &[f64], radius: f64) -> usize {
        let (lo, hi) = self.window(position[0], radius);
        if position.len() == 1 {
            return hi - lo;
        }
        self.order[lo..hi]
            .iter()
            .filter(|&&(_, id)| l2_dist(position, self.pool.coords_of(id)) <= radius)
            .count()
    }

    /// Same result as `nearest_k` over the curated set, found by expanding
    /// outward from the agent's first coordinate.
    fn nearest(&self, position: &[f64], radius: f64, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let x0 = position[0];
        let by_distance_then_id = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        // Sorted ascending by (distance, id), at most k entries.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let bound = |best: &Vec<(f64, usize)>| if best.len() < k { radius } else { best[k - 1].0.min(radius) };
        let offer = |cand: (f64, usize), best: &mut Vec<(f64, usize)>| {
            if cand.0 > radius {
                return;
            }
            if best.len() == k && by_distance_then_id(&cand, &best[k - 1]).is_ge() {
                return;
            }
            let at = best.partition_point(|e| by_distance_then_id(e, &cand).is_lt());
            best.insert(at, cand);
            best.truncate(k);
        };
        let start = self.order.partition_point(|&(key, _)| key < x0);
        let (mut down, mut up) = (start, start);
        let (mut down_open, mut up_open) = (true, true);
        while down_open || up_open {
            if up_open {
                match self.order.get(up) {
                    Some(&(key, id)) if Self::axis_dist(x0, key) <= bound(&best) => {
                        offer((l2_dist(position, self.pool.coords_of(id)), id), &mut best);
                        up += 1;
                    }
                    _ => up_open = false,
                }
            }
            if down_open {
                match down.checked_sub(1).map(|i| self.order[i]) {
                    Some((key, id)) if Self::axis_dist(x0, key) <= bound(&best) => {
                        offer((l2_dist(position, self.pool.coords_of(id)), id), &mut best);
                        down -= 1;
                    }
                    _ => down_open = false,
                }
            }
        }
        best.into_iter().map(|(_, id)| id).collect()
    }
}

/// Advances the simulation by one step, keeping the pool and per-agent records.
pub fn step_detailed(state: &SimState, config: &SimConfig) -> Result<StepOutcome> {
    let pool = produce_documents(state, config)?;
    let sorted = SortedPool::new(&pool);
    let results: Vec<(BeliefVector, Option<ConsumptionRecord>)> = state
        .agents
        .par_iter()
        .map(|agent| {
            if agent.committed {
                return (agent.position.clone(), None);
            }
            let position = agent.position.components();
            let radius = agent.visibility_radius;
            let rec = match agent.consumer_kind {
                ConsumerKind::Biased => {
                    let consumed = sorted.nearest(position, radius, agent.capacity);
                    record(agent, sorted.curated_count(position, radius), consumed, &pool)
                }
                ConsumerKind::Uniform => {
                    let mut curated: Vec<usize> = sorted.curated(position, radius).into_iter().map(|(_, id)| id).collect();
                    curated.sort_unstable();
                    let mut rng: SimRng = substream(state.seed, Purpose::Consume, state.time, agent.id as u64);
                    consume_uniform(agent, &curated, &pool, &mut rng)
                }
            };
            let consumed: Vec<&Document> = rec.consumed_ids.iter().map(|&id| &pool.documents[id]).collect();
            let next = update_belief(agent, &consumed, config.alpha, config.epsilon_influence);
            (next, Some(rec))
        })
        .collect();

    let mut max_delta = 0.0f64;
    let mut agents = Vec::with_capacity(state.agents.len());
    let mut records = Vec::new();
    for (agent, (position, rec)) in state.agents.iter().zip(results) {
        debug_assert!(position.norm() <= 1.0 + BALL_TOL);
        max_delta = max_delta.max(l2_dist(agent.position.components(), position.components()));
        records.extend(rec);
        agents.push(Agent {
            position,
            ..agent.clone()
        });
    }
    let next = SimState {
        time: state.time + 1,
        agents,
        seed: state.seed,
    };
    // Every record shares the pool, so the mean of consumed / |pool| is one
    // correctly rounded division; it equals k / |pool| exactly when everyone
    // reads k documents.
    let mean_coverage = if records.is_empty() || pool.is_empty() {
        0.0
    } else {
        let consumed: usize = records.iter().map(|r| r.consumed_ids.len()).sum();
        consumed as f64 / (records.len() * pool.len()) as f64
    };
    let mut trace = measure(&next);
    trace.mean_coverage = mean_coverage;
    trace.max_delta = max_delta;
    Ok(StepOutcome {
        state: next,
        trace,
        pool,
        records,
    })
}

/// Population metrics of a state (coverage and displacement left at zero).
pub fn measure(state: &SimState) -> StepTrace {
    let free = state.free_positions();
    let (q, centroids) = polarization_q(&free);
    StepTrace {
        t: state.time,
        q,
        mean_extremity: mean_extremity(&free),
        mean_coverage: 0.0,
        max_delta: 0.0,
        centroids,
    }
}

pub fn step(state: &SimState, config: &SimConfig) -> Result<(SimState, StepTrace)> {
    let out = step_detailed(state, config)?;
    Ok((out.state, out.trace))
}

/// Positions of all agents (indexed by id) at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    pub positions: Vec<BeliefVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub final_state: SimState,
    pub traces: Vec<StepTrace>,
    pub converged: bool,
    pub steps_run: u64,
    /// Taken at `t = 0`, every `snapshot_every` steps, and at the final step.
    pub snapshots: Vec<Snapshot>,
}

fn snapshot(state: &SimState) -> Snapshot {
    Snapshot {
        t: state.time,
        positions: state.agents.iter().map(|a| a.position.clone()).collect(),
    }
}

/// Steps until `t_max` steps have run or the largest displacement stays
/// below `conv_tol` for `conv_window` consecutive steps.
pub fn run(initial: SimState, config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut state = initial;
    let mut traces = Vec::new();
    let mut snapshots = vec![snapshot(&state)];
    let mut converged = false;
    let mut steps_run = 0;
    while steps_run < config.t_max {
        let (next, trace) = step(&state, config)?;
        state = next;
        traces.push(trace);
        steps_run += 1;
        if state.time.is_multiple_of(config.snapshot_every) {
            snapshots.push(snapshot(&state));
        }
        if has_converged(&traces, config.conv_tol, config.conv_window) {
            converged = true;
            break;
        }
    }
    if snapshots.last().map(|s| s.t) != Some(state.time) {
        snapshots.push(snapshot(&state));
    }
    Ok(RunOutput {
        final_state: state,
        traces,
        converged,
        steps_run,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::init_population;

    fn bv(c: &[f64]) -> BeliefVector {
        BeliefVector::new(c.to_vec()).unwrap()
    }

    fn agent(pos: &[f64], radius: f64, k: usize) -> Agent {
        Agent {
            id: 0,
            position: bv(pos),
            visibility_radius: radius,
            capacity: k,
            consumer_kind: ConsumerKind::Biased,
            committed: false,
        }
    }

    fn pool_at(points: &[&[f64]]) -> DocumentPool {
        let docs = points
            .iter()
            .enumerate()
            .map(|(id, p)| Document {
                id,
                position: bv(p),
                source_id: 0,
                is_misinformation: false,
            })
            .collect();
        DocumentPool::new(docs, 0).unwrap()
    }

    fn small_config() -> SimConfig {
        SimConfig {
            n_agents: 12,
            n_committed: 2,
            n_docs: 10,
            misinfo_ratio: 0.2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn sampled_pool_composition() {
        let config = small_config();
        let state = init_population(&config).unwrap();
        let pool = produce_documents(&state, &config).unwrap();
        assert_eq!(pool.len(), 10);
        let mis: Vec<bool> = pool.documents.iter().map(|d| d.is_misinformation).collect();
        assert_eq!(mis, [vec![false; 8], vec![true; 2]].concat());
        for d in &pool.documents {
            let src = &state.agents[d.source_id];
            assert_eq!(src.committed, d.is_misinformation);
            assert_eq!(src.position, d.position);
        }

        let config = SimConfig { misinfo_ratio: 0.15, ..small_config() };
        let pool = produce_documents(&state, &config).unwrap();
        assert_eq!(pool.documents.iter().filter(|d| d.is_misinformation).count(), 2);
    }

    #[test]
    fn mirror_pool_reproduces_positions() {
        let config = SimConfig {
            n_agents: 5,
            n_committed: 0,
            n_docs: 5,
            misinfo_ratio: 0.0,
            production_mode: ProductionMode::Mirror,
            ..SimConfig::default()
        };
        let state = init_population(&config).unwrap();
        let pool = produce_documents(&state, &config).unwrap();
        assert_eq!(pool.len(), 5);
        for (doc, a) in pool.documents.iter().zip(&state.agents) {
            assert_eq!(doc.position, a.position);
            assert_eq!(doc.source_id, a.id);
        }
    }

    #[test]
    fn mirror_misinformation_cycles_through_committed() {
        let config = SimConfig {
            n_agents: 12,
            n_committed: 2,
            n_docs: 10,
            misinfo_ratio: 0.3,
            production_mode: ProductionMode::Mirror,
            ..SimConfig::default()
        };
        let state = init_population(&config).unwrap();
        let pool = produce_documents(&state, &config).unwrap();
        assert_eq!(pool.len(), 13);
        let sources: Vec<usize> = pool.documents[10..].iter().map(|d| d.source_id).collect();
        assert_eq!(sources, vec![10, 11, 10]);
    }

    #[test]
    fn misinformation_without_committed_agents_fails() {
        let config = SimConfig {
            n_committed: 0,
            ..small_config()
        };
        let state = SimState {
            time: 0,
            agents: (0..3).map(|i| Agent { id: i, ..agent(&[0.0], 1.0, 1) }).collect(),
            seed: 0,
        };
        assert_eq!(
            produce_documents(&state, &config),
            Err(SimError::NoCommittedAgents { ratio: 0.2 })
        );
    }

    #[test]
    fn curation_threshold() {
        let pool = pool_at(&[&[0.2], &[0.7]]);
        assert_eq!(curate_for_agent(&agent(&[0.0], 0.5, 3), &pool), vec![0]);
        let pool = pool_at(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(curate_for_agent(&agent(&[1.0, 0.0], 2.0, 3), &pool), vec![0, 1, 2]);
    }

    #[test]
    fn biased_consumption_nearest_and_tie_rule() {
        let pool = pool_at(&[&[0.3], &[0.1], &[0.2]]);
        let a = agent(&[0.0], 1.0, 2);
        let rec = consume_biased(&a, &curate_for_agent(&a, &pool), &pool);
        assert_eq!(rec.consumed_ids, vec![1, 2]);
        assert_eq!(rec.curated_count, 3);

        let pool = pool_at(&[&[0.9], &[0.25], &[-0.25]]);
        let a = agent(&[0.0], 1.0, 1);
        let rec = consume_biased(&a, &curate_for_agent(&a, &pool), &pool);
        assert_eq!(rec.consumed_ids, vec![1]);
    }

    #[test]
    fn uniform_consumption_edge_cases() {
        let pool = pool_at(&[&[0.1], &[0.2], &[0.3]]);
        let a = agent(&[0.0], 1.0, 3);
        let mut rng = substream(1, Purpose::Consume, 0, 0);
        let rec = consume_uniform(&a, &[0, 1, 2], &pool, &mut rng);
        assert_eq!(rec.consumed_ids, vec![0, 1, 2]);
        let rec = consume_uniform(&a, &[], &pool, &mut rng);
        assert!(rec.consumed_ids.is_empty());
        assert_eq!(rec.coverage, 0.0);
    }

    #[test]
    fn uniform_selection_frequencies() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 40.0]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let pool = pool_at(&refs);
        let a = agent(&[0.0], 1.0, 5);
        let curated: Vec<usize> = (0..20).collect();
        let mut counts = [0usize; 20];
        let reps = 100_000;
        let mut rng = substream(3, Purpose::Consume, 0, 0);
        for _ in 0..reps {
            for id in consume_uniform(&a, &curated, &pool, &mut rng).consumed_ids {
                counts[id] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / reps as f64;
            assert!((f - 0.25).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn influence_examples() {
        let doc = |x: f64| Document {
            id: 0,
            position: bv(&[x, 0.0]),
            source_id: 0,
            is_misinformation: false,
        };
        assert_eq!(influence_weight(&doc(0.0), 1e-6), 1e-6);
        assert!((influence_weight(&doc(0.8), 1e-6) - 0.800001).abs() < 1e-15);
        let w1 = influence_weight(&doc(0.3), 1e-6) - 1e-6;
        let w2 = influence_weight(&doc(0.6), 1e-6) - 1e-6;
        assert!((w2 - 2.0 * w1).abs() < 1e-12);
    }

    #[test]
    fn update_examples() {
        let a = agent(&[0.0], 1.0, 5);
        let d = |x: f64| Document {
            id: 0,
            position: bv(&[x]),
            source_id: 0,
            is_misinformation: false,
        };
        let single = [d(0.5)];
        let refs: Vec<&Document> = single.iter().collect();
        let x = update_belief(&a, &refs, 0.8, 1e-6).components()[0];
        assert!((x - 0.1).abs() < 1e-12, "{x}");

        let pair = [d(0.5), d(-0.25)];
        let refs: Vec<&Document> = pair.iter().collect();
        let x = update_belief(&a, &refs, 0.8, 1e-15).components()[0];
        assert!((x - 0.05).abs() < 1e-12, "{x}");

        assert_eq!(update_belief(&a, &[], 0.8, 1e-6), a.position);
        let committed = Agent {
            committed: true,
            ..agent(&[0.95], 1.0, 5)
        };
        assert_eq!(update_belief(&committed, &refs, 0.8, 1e-6), committed.position);
    }

    #[test]
    fn displacement_bounded_near_alpha_one() {
        let config = SimConfig {
            alpha: 0.999999,
            dims: 2,
            init_spread: 1.0,
            ..small_config()
        };
        let state = init_population(&config).unwrap();
        let (_, trace) = step(&state, &config).unwrap();
        assert!(trace.max_delta <= (1.0 - config.alpha) * 2.0);
    }

    #[test]
    fn all_neutral_is_a_fixed_point() {
        let config = SimConfig {
            init_spread: 0.0,
            n_committed: 2,
            committed_magnitude: 0.0,
            dims: 2,
            ..small_config()
        };
        let state = init_population(&config).unwrap();
        let (next, trace) = step(&state, &config).unwrap();
        assert_eq!(next.time, 1);
        assert_eq!(next.agents, state.agents);
        assert_eq!(trace.max_delta, 0.0);
    }

    #[test]
    fn step_records_match_full_scan() {
        for (dims, kind) in [(1, ConsumerMix::Biased), (2, ConsumerMix::Mixed { p_biased: 0.5 }), (3, ConsumerMix::Uniform)] {
            let config = SimConfig {
                n_agents: 40,
                n_docs: 300,
                dims,
                init_spread: 0.8,
                visibility_radius: 0.4,
                consumer_kind: kind,
                ..small_config()
            };
            let mut state = init_population(&config).unwrap();
            for _ in 0..5 {
                let out = step_detailed(&state, &config).unwrap();
                for rec in &out.records {
                    let agent = &state.agents[rec.agent_id];
                    let curated = curate_for_agent(agent, &out.pool);
                    assert_eq!(rec.curated_count, curated.len());
                    if agent.consumer_kind == ConsumerKind::Biased {
                        assert_eq!(rec, &consume_biased(agent, &curated, &out.pool));
                    } else {
                        let mut rng = substream(state.seed, Purpose::Consume, state.time, agent.id as u64);
                        assert_eq!(rec, &consume_uniform(agent, &curated, &out.pool, &mut rng));
                    }
                }
                state = out.state;
            }
        }
    }

    #[test]
    fn run_boundaries() {
        let config = SimConfig {
            t_max: 0,
            ..small_config()
        };
        let state = init_population(&config).unwrap();
        let out = run(state.clone(), &config).unwrap();
        assert!(out.traces.is_empty());
        assert_eq!(out.final_state, state);
        assert_eq!(out.steps_run, 0);
        assert_eq!(out.snapshots.len(), 1);

        let config = SimConfig {
            t_max: 25,
            conv_tol: None,
            snapshot_every: 10,
            ..small_config()
        };
        let out = run(init_population(&config).unwrap(), &config).unwrap();
        assert_eq!(out.steps_run, 25);
        assert!(!out.converged);
        let ts: Vec<u64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 25]);
    }

    #[test]
    fn run_stops_on_convergence() {
        let config = SimConfig {
            init_spread: 0.0,
            committed_magnitude: 0.0,
            conv_tol: Some(1e-12),
            conv_window: 4,
            ..small_config()
        };
        let out = run(init_population(&config).unwrap(), &config).unwrap();
        assert!(out.converged);
        assert_eq!(out.steps_run, 4);
    }
}
