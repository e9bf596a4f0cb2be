//! Points in the belief space and the agents and documents that occupy them.
//!
//! The origin is neutrality; the norm of a position measures extremity and
//! never exceeds one.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{round_half_up, ConsumerKind, ConsumerMix, SimConfig};
use crate::error::{Result, SimError};
use crate::rng::{substream, Purpose};

/// Slack allowed on the unit-ball constraint.
pub const BALL_TOL: f64 = 1e-9;

/// A position in the K-dimensional belief space.
///
/// Components are finite and the Euclidean norm is at most `1 + BALL_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite);
        }
        let norm = l2(&components);
        if norm > 1.0 + BALL_TOL {
            return Err(SimError::OutsideUnitBall { norm });
        }
        Ok(BeliefVector(components))
    }

    pub fn origin(dims: usize) -> Self {
        BeliefVector(vec![0.0; dims])
    }

    /// Unit vector along axis `axis`.
    pub fn basis(dims: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dims];
        v[axis] = 1.0;
        BeliefVector(v)
    }

    /// Caller guarantees the invariants hold.
    pub(crate) fn from_trusted(components: Vec<f64>) -> Self {
        debug_assert!(components.iter().all(|c| c.is_finite()));
        debug_assert!(l2(&components) <= 1.0 + BALL_TOL);
        BeliefVector(components)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn dot(&self, other: &BeliefVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

#[inline]
pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Euclidean distance between raw coordinate slices of equal length.
#[inline]
pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm (extremity) of a belief.
pub fn norm(v: &BeliefVector) -> f64 {
    v.norm()
}

pub fn distance(a: &BeliefVector, b: &BeliefVector) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(SimError::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(l2_dist(&a.0, &b.0))
}

/// Projects raw coordinates radially onto the unit ball if they lie outside it.
///
/// Points already inside are returned unchanged.
pub fn clamp_to_unit_ball(components: &[f64]) -> Result<BeliefVector> {
    if components.iter().any(|c| !c.is_finite()) {
        return Err(SimError::NonFinite);
    }
    let n = l2(components);
    if n <= 1.0 {
        return Ok(BeliefVector(components.to_vec()));
    }
    let mut scaled: Vec<f64> = components.iter().map(|c| c / n).collect();
    // Division can leave the norm a few ulps above one; nudge it back in.
    while l2(&scaled) > 1.0 {
        for c in scaled.iter_mut() {
            *c *= 1.0 - f64::EPSILON;
        }
    }
    Ok(BeliefVector(scaled))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub position: BeliefVector,
    pub visibility_radius: f64,
    pub capacity: usize,
    pub consumer_kind: ConsumerKind,
    /// Committed agents never move and author all misinformation.
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: usize,
    pub position: BeliefVector,
    pub source_id: usize,
    pub is_misinformation: bool,
}

/// The population at time `t`.
///
/// Random draws are derived from `(seed, t)`, so the seed is the whole
/// generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: u64,
    pub agents: Vec<Agent>,
    pub seed: u64,
}

impl SimState {
    pub fn free_agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter().filter(|a| !a.committed)
    }

    pub fn free_positions(&self) -> Vec<BeliefVector> {
        self.free_agents().map(|a| a.position.clone()).collect()
    }

    pub fn committed_agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter().filter(|a| a.committed)
    }
}

/// Samples a point uniformly from the ball of the given radius.
///
/// Direction is a normalized Gaussian vector, radius is `radius * U^(1/K)`.
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dims: usize, radius: f64) -> BeliefVector {
    if radius == 0.0 {
        return BeliefVector::origin(dims);
    }
    let direction = loop {
        let g: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2(&g);
        if n > 1e-300 {
            break g.into_iter().map(|c| c / n).collect::<Vec<f64>>();
        }
    };
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dims as f64);
    let components: Vec<f64> = direction.into_iter().map(|c| c * r).collect();
    // radius <= 1, but rounding on the unit sphere can overshoot slightly.
    clamp_to_unit_ball(&components).expect("finite by construction")
}

/// Builds the time-0 population.
///
/// Free agents take ids `0..n_free` with positions uniform in the ball of
/// radius `init_spread`. Committed agents take the remaining ids and sit at
/// `+m e1, -m e1, +m e1, ...` with `m = committed_magnitude`.
pub fn init_population(config: &SimConfig) -> Result<SimState> {
    if config.n_committed > config.n_agents {
        return Err(SimError::InvalidField {
            key: "n_committed",
            message: format!(
                "{} exceeds n_agents ({})",
                config.n_committed, config.n_agents
            ),
        });
    }
    config.validate()?;
    let n_free = config.n_free();
    let n_biased = match config.consumer_kind {
        ConsumerMix::Biased => n_free,
        ConsumerMix::Uniform => 0,
        ConsumerMix::Mixed { p_biased } => round_half_up(p_biased * n_free as f64).min(n_free),
    };
    let mut rng = substream(config.seed, Purpose::Init, 0, 0);
    let mut agents = Vec::with_capacity(config.n_agents);
    for id in 0..n_free {
        agents.push(Agent {
            id,
            position: sample_in_ball(&mut rng, config.dims, config.init_spread),
            visibility_radius: config.visibility_radius,
            capacity: config.capacity_k,
            consumer_kind: if id < n_biased {
                ConsumerKind::Biased
            } else {
                ConsumerKind::Uniform
            },
            committed: false,
        });
    }
    for j in 0..config.n_committed {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut pos = vec![0.0; config.dims];
        pos[0] = sign * config.committed_magnitude;
        agents.push(Agent {
            id: n_free + j,
            position: BeliefVector(pos),
            visibility_radius: config.visibility_radius,
            capacity: config.capacity_k,
            consumer_kind: ConsumerKind::Biased,
            committed: true,
        });
    }
    Ok(SimState {
        time: 0,
        agents,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> BeliefVector {
        BeliefVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&v(&[0.0, 0.0])), 0.0);
        assert_eq!(norm(&v(&[1.0, 0.0])), 1.0);
        assert!((norm(&v(&[0.3, 0.4])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&v(&[0.0]), &v(&[0.5])).unwrap(), 0.5);
        assert_eq!(distance(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), 2.0);
        let a = v(&[0.1, -0.3, 0.2]);
        let b = v(&[-0.4, 0.25, 0.5]);
        let (dx, dy, dz) = (0.1 - -0.4_f64, -0.3 - 0.25_f64, 0.2 - 0.5_f64);
        let expected = (dx * dx + dy * dy + dz * dz).sqrt();
        assert!((distance(&a, &b).unwrap() - expected).abs() < 1e-15);
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            distance(&v(&[0.0]), &v(&[0.0, 0.0])),
            Err(SimError::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_to_unit_ball(&[0.2, 0.1]).unwrap(), v(&[0.2, 0.1]));
        assert_eq!(clamp_to_unit_ball(&[2.0, 0.0]).unwrap(), v(&[1.0, 0.0]));
        let c = clamp_to_unit_ball(&[3.0, 4.0]).unwrap();
        assert!((c.components()[0] - 0.6).abs() < 1e-15);
        assert!((c.components()[1] - 0.8).abs() < 1e-15);
        assert!(c.norm() <= 1.0);
        assert_eq!(clamp_to_unit_ball(&[f64::NAN]), Err(SimError::NonFinite));
    }

    #[test]
    fn vector_validation() {
        assert_eq!(
            BeliefVector::new(vec![f64::INFINITY]),
            Err(SimError::NonFinite)
        );
        assert!(matches!(
            BeliefVector::new(vec![1.0, 1.0]),
            Err(SimError::OutsideUnitBall { .. })
        ));
        assert!(BeliefVector::new(vec![1.0 + 1e-10]).is_ok());
    }

    #[test]
    fn degenerate_spread_puts_everyone_at_origin() {
        let config = SimConfig {
            init_spread: 0.0,
            dims: 3,
            ..SimConfig::default()
        };
        let state = init_population(&config).unwrap();
        assert!(state.free_agents().all(|a| a.position == BeliefVector::origin(3)));
    }

    #[test]
    fn committed_agents_alternate_along_first_axis() {
        let config = SimConfig {
            n_agents: 10,
            n_committed: 2,
            committed_magnitude: 0.95,
            dims: 1,
            ..SimConfig::default()
        };
        let state = init_population(&config).unwrap();
        let committed: Vec<_> = state.committed_agents().collect();
        assert_eq!(committed.len(), 2);
        assert_eq!(committed[0].position, v(&[0.95]));
        assert_eq!(committed[1].position, v(&[-0.95]));
        assert_eq!(committed[0].id, 8);
        let ids: Vec<usize> = state.agents.iter().map(|a| a.id).collect();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_committed_is_rejected() {
        let config = SimConfig {
            n_agents: 3,
            n_committed: 4,
            ..SimConfig::default()
        };
        assert!(init_population(&config).is_err());
    }

    #[test]
    fn mixed_consumers_split_by_rounded_fraction() {
        let config = SimConfig {
            n_agents: 12,
            n_committed: 2,
            consumer_kind: ConsumerMix::Mixed { p_biased: 0.25 },
            ..SimConfig::default()
        };
        let state = init_population(&config).unwrap();
        let kinds: Vec<_> = state.free_agents().map(|a| a.consumer_kind).collect();
        // round_half_up(2.5) = 3
        assert_eq!(
            kinds.iter().filter(|k| **k == ConsumerKind::Biased).count(),
            3
        );
        assert!(kinds[..3].iter().all(|k| *k == ConsumerKind::Biased));
        assert!(kinds[3..].iter().all(|k| *k == ConsumerKind::Uniform));
    }

    #[test]
    fn mean_radius_matches_uniform_ball() {
        for dims in 1..=3 {
            let config = SimConfig {
                n_agents: 1002,
                init_spread: 0.25,
                dims,
                ..SimConfig::default()
            };
            let state = init_population(&config).unwrap();
            let norms: Vec<f64> = state.free_agents().map(|a| a.position.norm()).collect();
            assert_eq!(norms.len(), 1000);
            assert!(norms.iter().all(|&n| n <= 0.25 + 1e-15));
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            // E|x| for x uniform in a K-ball of radius R is K R / (K + 1).
            let analytic = dims as f64 * 0.25 / (dims as f64 + 1.0);
            assert!(
                (mean - analytic).abs() / analytic < 0.05,
                "K={dims}: {mean} vs {analytic}"
            );
        }
    }

    #[test]
    fn one_dimensional_sampling_passes_ks_test() {
        let mut rng = substream(99, Purpose::Init, 0, 0);
        let n = 100_000;
        let spread = 0.25;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_in_ball(&mut rng, 1, spread).components()[0])
            .collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let cdf = |x: f64| ((x + spread) / (2.0 * spread)).clamp(0.0, 1.0);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n as f64).abs().max((i as f64 + 1.0) / n as f64 - f)
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at the 1% level.
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "D = {d}, critical = {critical}");
    }

    #[test]
    fn init_is_pure_in_config_and_seed() {
        let config = SimConfig {
            dims: 2,
            ..SimConfig::default()
        };
        assert_eq!(init_population(&config).unwrap(), init_population(&config).unwrap());
        let other = SimConfig { seed: 2, ..config.clone() };
        assert_ne!(init_population(&config).unwrap(), init_population(&other).unwrap());
    }
}
