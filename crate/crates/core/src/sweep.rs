//! Replicated runs over an (N, r) grid.
//!
//! Each run's seed is derived from the cell's values and the replicate
//! index alone, so results do not depend on thread count, execution order,
//! or which other cells are in the grid.

use rayon::prelude::*;

use crate::belief::init_population;
use crate::config::{SimConfig, SweepSpec};
use crate::dynamics::{measure, run};
use crate::error::{Result, SimError};
use crate::rng::{mix64, GOLDEN_GAMMA};

/// Odd constant used to spread replicate indices before mixing.
const REPLICATE_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// Stable identity of a grid cell: `mix64(N ^ mix64(r.to_bits()))`.
pub fn cell_index(n_docs: usize, misinfo_ratio: f64) -> u64 {
    // +0.0 and -0.0 name the same cell.
    let r = if misinfo_ratio == 0.0 { 0.0f64 } else { misinfo_ratio };
    mix64(n_docs as u64 ^ mix64(r.to_bits()))
}

/// Seed for one replicate of one cell:
///
/// ```text
/// z = mix64(base_seed ^ cell_index * 0x9E3779B97F4A7C15)
/// seed = mix64(z ^ replicate_index * 0xD1B54A32D192ED03)
/// ```
///
/// Both steps are bijections, so for fixed `(base_seed, cell_index)` distinct
/// replicates always get distinct seeds.
pub fn derive_seed(base_seed: u64, cell_index: u64, replicate_index: u64) -> u64 {
    let z = mix64(base_seed ^ cell_index.wrapping_mul(GOLDEN_GAMMA));
    mix64(z ^ replicate_index.wrapping_mul(REPLICATE_GAMMA))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_docs: usize,
    pub misinfo_ratio: f64,
    pub replicate: usize,
    pub seed: u64,
    pub q_final: f64,
    pub mean_extremity_final: f64,
    pub steps_run: u64,
    pub converged: bool,
}

/// Runs one configuration from its own seed and summarizes the final state.
pub fn run_cell(config: &SimConfig, replicate: usize) -> Result<SweepRow> {
    let state = init_population(config)?;
    let out = run(state, config)?;
    let last = measure(&out.final_state);
    Ok(SweepRow {
        n_docs: config.n_docs,
        misinfo_ratio: config.misinfo_ratio,
        replicate,
        seed: config.seed,
        q_final: last.q,
        mean_extremity_final: last.mean_extremity,
        steps_run: out.steps_run,
        converged: out.converged,
    })
}

/// Runs every (N, r, replicate) with at most `parallelism` runs at once.
/// Rows are ordered by N, then r, then replicate.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<Vec<SweepRow>> {
    if parallelism == 0 {
        return Err(SimError::InvalidConfig("parallelism must be positive".into()));
    }
    spec.validate()?;
    let mut jobs = Vec::new();
    for &n in &spec.n_values {
        for &r in &spec.r_values {
            let cell = cell_index(n, r);
            for rep in 0..spec.replicates {
                let mut config = spec.cell_config(n, r);
                config.seed = derive_seed(spec.base_seed, cell, rep as u64);
                jobs.push((config, rep));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(config, rep)| run_cell(config, *rep))
            .collect()
    })
}

/// Replicate statistics for one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n_docs: usize,
    pub misinfo_ratio: f64,
    pub mean_q: f64,
    /// Sample standard deviation; 0 when there is a single replicate.
    pub stddev_q: f64,
    pub mean_extremity: f64,
    pub n_replicates: usize,
}

/// Groups consecutive rows with equal (N, r) and summarizes each group.
pub fn aggregate(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let head = &rows[start];
        let end = rows[start..]
            .iter()
            .position(|r| r.n_docs != head.n_docs || r.misinfo_ratio != head.misinfo_ratio)
            .map_or(rows.len(), |off| start + off);
        let group = &rows[start..end];
        let n = group.len() as f64;
        let mean_q = group.iter().map(|r| r.q_final).sum::<f64>() / n;
        let stddev_q = if group.len() > 1 {
            (group.iter().map(|r| (r.q_final - mean_q).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(CellSummary {
            n_docs: head.n_docs,
            misinfo_ratio: head.misinfo_ratio,
            mean_q,
            stddev_q,
            mean_extremity: group.iter().map(|r| r.mean_extremity_final).sum::<f64>() / n,
            n_replicates: group.len(),
        });
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, r: f64, q: f64) -> SweepRow {
        SweepRow {
            n_docs: n,
            misinfo_ratio: r,
            replicate: 0,
            seed: 0,
            q_final: q,
            mean_extremity_final: q,
            steps_run: 1,
            converged: false,
        }
    }

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            base: SimConfig {
                n_agents: 20,
                t_max: 15,
                ..SimConfig::default()
            },
            n_values: vec![40, 80],
            r_values: vec![0.0, 0.1],
            replicates: 2,
            base_seed: 9,
        }
    }

    #[test]
    fn seeds_are_stable_and_replicate_sensitive() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
        assert_eq!(cell_index(100, 0.0), cell_index(100, -0.0));
        assert_ne!(cell_index(100, 0.0), cell_index(400, 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let single = aggregate(&[row(100, 0.0, 0.7)]);
        assert_eq!(single[0].stddev_q, 0.0);
        assert_eq!(single[0].n_replicates, 1);

        let pair = aggregate(&[row(100, 0.0, 0.2), row(100, 0.0, 0.4)]);
        assert_eq!(pair.len(), 1);
        assert!((pair[0].mean_q - 0.3).abs() < 1e-15);
        assert!((pair[0].stddev_q - 0.1414213562373095).abs() < 1e-12);

        let two_cells = aggregate(&[row(100, 0.0, 0.2), row(100, 0.1, 0.4)]);
        assert_eq!(two_cells.len(), 2);
    }

    #[test]
    fn sweep_cardinality_and_order() {
        let rows = run_sweep(&tiny_spec(), 2).unwrap();
        assert_eq!(rows.len(), 8);
        let keys: Vec<(usize, f64, usize)> = rows.iter().map(|r| (r.n_docs, r.misinfo_ratio, r.replicate)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        assert_eq!(keys, sorted);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.q_final)));
    }

    #[test]
    fn single_cell_matches_direct_run() {
        let spec = SweepSpec {
            n_values: vec![40],
            r_values: vec![0.1],
            replicates: 1,
            ..tiny_spec()
        };
        let rows = run_sweep(&spec, 1).unwrap();
        let mut config = spec.cell_config(40, 0.1);
        config.seed = derive_seed(spec.base_seed, cell_index(40, 0.1), 0);
        let out = run(init_population(&config).unwrap(), &config).unwrap();
        assert_eq!(rows[0].q_final, out.traces.last().unwrap().q);
        assert_eq!(rows[0].seed, config.seed);
    }

    #[test]
    fn removing_a_cell_leaves_others_unchanged() {
        let full = run_sweep(&tiny_spec(), 3).unwrap();
        let reduced = run_sweep(
            &SweepSpec {
                n_values: vec![80],
                ..tiny_spec()
            },
            1,
        )
        .unwrap();
        let kept: Vec<_> = full.into_iter().filter(|r| r.n_docs == 80).collect();
        assert_eq!(kept, reduced);
    }

    #[test]
    fn invalid_cells_fail_before_running() {
        let mut spec = tiny_spec();
        spec.base.n_committed = 0;
        assert!(run_sweep(&spec, 1).is_err());
        assert!(run_sweep(&tiny_spec(), 0).is_err());
    }
}
