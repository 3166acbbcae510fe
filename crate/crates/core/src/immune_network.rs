//! Idiotypic immune network used to pick a neighbourhood for one target user.
//!
//! The target user is the antigen; candidate users are antibodies. Each
//! antibody carries a concentration that evolves by forward-Euler steps of
//!
//! ```text
//! dx_i/dt = k1 m_i x_i y - (k2 / n) sum_j m_ij x_i x_j - k3 x_i
//! ```
//!
//! where `m_i` is the antibody-antigen affinity, `m_ij` the antibody-antibody
//! affinity and `y` the fixed antigen concentration. After every step,
//! antibodies below the prune threshold are discarded for good and replaced
//! by fresh draws from the pool. The run stops once membership has been
//! unchanged for `stability_window` consecutive iterations.

use std::collections::BTreeSet;

use log::{debug, warn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{affinity, AffinityMeasure, MeasureKind};
use crate::domain::{Dataset, UserProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AisError {
    #[error("candidate pool has no users other than the antigen")]
    EmptyPool,
    #[error("invalid immune parameter: {0}")]
    InvalidParams(String),
}

/// How signed affinities (Kendall's Tau and Pearson, range `[-1, 1]`) enter
/// the dynamics. Weighted Kappa is already in `[0, 1]` and is never remapped.
///
/// With `Raw`, a negative `m_ij` turns suppression into mutual stimulation;
/// the `x_i x_j` term then grows without bound within a few dozen steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeAffinity {
    /// Use the affinity as is.
    Raw,
    /// Map `a` to `(a + 1) / 2`, so `[-1, 1]` becomes `[0, 1]`.
    #[default]
    Remap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmuneParams {
    /// Stimulation rate.
    pub k1: f64,
    /// Suppression rate.
    pub k2: f64,
    /// Death rate.
    pub k3: f64,
    pub antigen_concentration: f64,
    pub population_size: usize,
    /// Euler step size.
    pub dt: f64,
    pub prune_threshold: f64,
    pub initial_concentration: f64,
    pub stability_window: usize,
    pub max_iterations: usize,
    /// Include `j = i` in the suppression sum.
    pub self_interaction: bool,
    pub negative_affinity: NegativeAffinity,
}

impl Default for ImmuneParams {
    fn default() -> Self {
        ImmuneParams {
            k1: 0.3,
            k2: 0.2,
            k3: 0.1,
            antigen_concentration: 1.0,
            population_size: 100,
            dt: 1.0,
            prune_threshold: 0.05,
            initial_concentration: 1.0,
            stability_window: 10,
            max_iterations: 500,
            self_interaction: true,
            negative_affinity: NegativeAffinity::Remap,
        }
    }
}

impl ImmuneParams {
    pub fn validate(&self) -> Result<(), AisError> {
        let bad = |what: &str| Err(AisError::InvalidParams(what.to_string()));
        let finite = [
            self.k1,
            self.k2,
            self.k3,
            self.antigen_concentration,
            self.dt,
            self.prune_threshold,
            self.initial_concentration,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all rates and concentrations must be finite");
        }
        if self.k1 < 0.0 || self.k2 < 0.0 || self.k3 < 0.0 {
            return bad("k1, k2 and k3 must be non-negative");
        }
        if self.antigen_concentration <= 0.0 {
            return bad("antigen concentration must be positive");
        }
        if self.dt <= 0.0 {
            return bad("dt must be positive");
        }
        if self.prune_threshold < 0.0 {
            return bad("prune threshold must be non-negative");
        }
        if self.initial_concentration <= 0.0 {
            return bad("initial concentration must be positive");
        }
        if self.population_size == 0 {
            return bad("population size must be at least 1");
        }
        if self.stability_window == 0 {
            return bad("stability window must be at least 1");
        }
        Ok(())
    }

    fn transform(&self, kind: MeasureKind, affinity: f64) -> f64 {
        match (self.negative_affinity, kind.is_signed()) {
            (NegativeAffinity::Remap, true) => (affinity + 1.0) / 2.0,
            _ => affinity,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Antibody<'a> {
    pub profile: &'a UserProfile,
    pub concentration: f64,
    pub antigen_affinity: f64,
}

impl Antibody<'_> {
    pub fn user_id(&self) -> u32 {
        self.profile.user_id()
    }
}

/// Symmetric antibody-antibody affinities, row-major, indexed like the population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffinityMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Append a member. `against` holds its affinity to every existing member,
    /// `diagonal` its affinity with itself.
    pub fn push(&mut self, against: &[f64], diagonal: f64) {
        assert_eq!(against.len(), self.dim);
        let new_dim = self.dim + 1;
        let mut values = Vec::with_capacity(new_dim * new_dim);
        for (i, &a) in against.iter().enumerate() {
            values.extend_from_slice(self.row(i));
            values.push(a);
        }
        values.extend_from_slice(against);
        values.push(diagonal);
        self.dim = new_dim;
        self.values = values;
    }

    /// Keep rows and columns where `keep[i]` is true.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.dim);
        let kept: Vec<usize> = (0..self.dim).filter(|&i| keep[i]).collect();
        let mut values = Vec::with_capacity(kept.len() * kept.len());
        for &i in &kept {
            values.extend(kept.iter().map(|&j| self.get(i, j)));
        }
        self.dim = kept.len();
        self.values = values;
    }
}

/// What one prune-and-replace pass did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneOutcome {
    pub removed: Vec<u32>,
    pub added: Vec<u32>,
}

impl PruneOutcome {
    pub fn membership_changed(&self) -> bool {
        !self.removed.is_empty() || !self.added.is_empty()
    }
}

/// Live state of one immune-network run.
#[derive(Debug, Clone)]
pub struct AisState<'a> {
    antigen: &'a UserProfile,
    pool: &'a Dataset,
    measure: AffinityMeasure,
    population: Vec<Antibody<'a>>,
    matrix: AffinityMatrix,
    pool_remaining: Vec<u32>,
    discarded: BTreeSet<u32>,
    iteration: usize,
    stable_count: usize,
}

impl<'a> AisState<'a> {
    pub fn antigen(&self) -> &'a UserProfile {
        self.antigen
    }

    pub fn population(&self) -> &[Antibody<'a>] {
        &self.population
    }

    pub fn population_mut(&mut self) -> &mut [Antibody<'a>] {
        &mut self.population
    }

    pub fn matrix(&self) -> &AffinityMatrix {
        &self.matrix
    }

    pub fn member_ids(&self) -> Vec<u32> {
        self.population.iter().map(Antibody::user_id).collect()
    }

    pub fn pool_remaining(&self) -> &[u32] {
        &self.pool_remaining
    }

    pub fn discarded(&self) -> &BTreeSet<u32> {
        &self.discarded
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn stable_count(&self) -> usize {
        self.stable_count
    }

    /// Overwrite the cached affinities. Intended for tests and experiments
    /// that need hand-set interaction strengths.
    pub fn set_affinities(&mut self, antigen: &[f64], matrix: &[Vec<f64>]) {
        let n = self.population.len();
        assert_eq!(antigen.len(), n);
        assert_eq!(matrix.len(), n);
        for (ab, &m) in self.population.iter_mut().zip(antigen) {
            ab.antigen_affinity = m;
        }
        self.matrix = AffinityMatrix {
            dim: n,
            values: matrix
                .iter()
                .flat_map(|row| {
                    assert_eq!(row.len(), n);
                    row.iter().copied()
                })
                .collect(),
        };
    }

    fn admit(&mut self, profile: &'a UserProfile, params: &ImmuneParams) {
        let kind = self.measure.kind;
        let m = |a: &UserProfile, b: &UserProfile| {
            params.transform(kind, affinity(&self.measure, a, b).value)
        };
        let antigen_affinity = m(profile, self.antigen);
        let against: Vec<f64> = self
            .population
            .iter()
            .map(|ab| m(profile, ab.profile))
            .collect();
        let diagonal = m(profile, profile);
        self.matrix.push(&against, diagonal);
        self.population.push(Antibody {
            profile,
            concentration: params.initial_concentration,
            antigen_affinity,
        });
    }

    fn draw_from_pool<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<u32> {
        if self.pool_remaining.is_empty() {
            return None;
        }
        let i = rng.gen_range(0..self.pool_remaining.len());
        Some(self.pool_remaining.swap_remove(i))
    }

    /// One simultaneous Euler step of the concentration dynamics. Every
    /// derivative is evaluated from the pre-step concentrations; results are
    /// clamped at zero.
    pub fn concentration_step(&mut self, params: &ImmuneParams) {
        let n = self.population.len();
        if n == 0 {
            return;
        }
        let x: Vec<f64> = self.population.iter().map(|ab| ab.concentration).collect();
        let y = params.antigen_concentration;
        let suppression_scale = params.k2 / n as f64;
        for (i, ab) in self.population.iter_mut().enumerate() {
            let xi = x[i];
            let row = self.matrix.row(i);
            let mut interaction: f64 = row.iter().zip(&x).map(|(m, xj)| m * xj).sum();
            if !params.self_interaction {
                interaction -= row[i] * xi;
            }
            let dx = params.k1 * ab.antigen_affinity * xi * y
                - suppression_scale * interaction * xi
                - params.k3 * xi;
            ab.concentration = (xi + params.dt * dx).max(0.0);
        }
    }

    /// Discard antibodies below the prune threshold and refill from the
    /// unused pool. Completes one iteration.
    pub fn prune_and_replace<R: Rng + ?Sized>(
        &mut self,
        params: &ImmuneParams,
        rng: &mut R,
    ) -> PruneOutcome {
        let keep: Vec<bool> = self
            .population
            .iter()
            .map(|ab| ab.concentration >= params.prune_threshold)
            .collect();
        let mut outcome = PruneOutcome::default();
        if keep.iter().any(|k| !k) {
            let mut kept = Vec::with_capacity(self.population.len());
            for (ab, &k) in self.population.iter().zip(&keep) {
                if k {
                    kept.push(*ab);
                } else {
                    outcome.removed.push(ab.user_id());
                    self.discarded.insert(ab.user_id());
                }
            }
            self.population = kept;
            self.matrix.retain(&keep);

            for _ in 0..outcome.removed.len() {
                let Some(id) = self.draw_from_pool(rng) else {
                    break;
                };
                let profile = self.pool.get(id).expect("pool ids come from the pool");
                self.admit(profile, params);
                outcome.added.push(id);
            }
            if outcome.added.len() < outcome.removed.len() {
                debug!(
                    "pool exhausted: population shrank to {} at iteration {}",
                    self.population.len(),
                    self.iteration + 1
                );
            }
        }
        self.iteration += 1;
        if outcome.membership_changed() {
            self.stable_count = 0;
        } else {
            self.stable_count += 1;
        }
        outcome
    }
}

/// Build the starting population: up to `population_size` candidates drawn
/// uniformly without replacement, each at the initial concentration.
pub fn init_population<'a, R: Rng + ?Sized>(
    antigen: &'a UserProfile,
    pool: &'a Dataset,
    measure: &AffinityMeasure,
    params: &ImmuneParams,
    rng: &mut R,
) -> Result<AisState<'a>, AisError> {
    params.validate()?;
    let eligible: Vec<u32> = pool
        .users()
        .filter(|p| p.user_id() != antigen.user_id() && !p.is_empty())
        .map(UserProfile::user_id)
        .collect();
    if eligible.is_empty() {
        return Err(AisError::EmptyPool);
    }
    let take = params.population_size.min(eligible.len());
    if take < params.population_size {
        warn!(
            "pool holds only {} candidates, population of {} requested",
            eligible.len(),
            params.population_size
        );
    }
    let chosen = index::sample(rng, eligible.len(), take).into_vec();
    let mut is_chosen = vec![false; eligible.len()];
    for &i in &chosen {
        is_chosen[i] = true;
    }
    let pool_remaining = eligible
        .iter()
        .zip(&is_chosen)
        .filter(|(_, &c)| !c)
        .map(|(&id, _)| id)
        .collect();

    let mut state = AisState {
        antigen,
        pool,
        measure: *measure,
        population: Vec::with_capacity(take),
        matrix: AffinityMatrix::default(),
        pool_remaining,
        discarded: BTreeSet::new(),
        iteration: 0,
        stable_count: 0,
    };
    for i in chosen {
        let profile = pool
            .get(eligible[i])
            .expect("eligible ids come from the pool");
        state.admit(profile, params);
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub profile: &'a UserProfile,
    pub weight: f64,
}

impl Member<'_> {
    pub fn user_id(&self) -> u32 {
        self.profile.user_id()
    }
}

/// The neighbourhood a run settled on, with concentrations as weights.
#[derive(Debug, Clone)]
pub struct FinalPopulation<'a> {
    pub members: Vec<Member<'a>>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl<'a> FinalPopulation<'a> {
    pub fn new(members: Vec<Member<'a>>, converged: bool, iterations_used: usize) -> Self {
        FinalPopulation {
            members,
            converged,
            iterations_used,
        }
    }

    /// Build from `(profile, weight)` pairs, mostly useful in tests.
    pub fn from_weighted(members: impl IntoIterator<Item = (&'a UserProfile, f64)>) -> Self {
        FinalPopulation::new(
            members
                .into_iter()
                .map(|(profile, weight)| Member { profile, weight })
                .collect(),
            true,
            0,
        )
    }

    pub fn from_state(state: &AisState<'a>, converged: bool) -> Self {
        FinalPopulation::new(
            state
                .population
                .iter()
                .map(|ab| Member {
                    profile: ab.profile,
                    weight: ab.concentration,
                })
                .collect(),
            converged,
            state.iteration,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// `(user_id, weight)` pairs in population order.
    pub fn summary(&self) -> Vec<(u32, f64)> {
        self.members
            .iter()
            .map(|m| (m.user_id(), m.weight))
            .collect()
    }
}

/// Run the network for one antigen until membership is stable or the
/// iteration budget runs out.
pub fn run_to_convergence<'a>(
    antigen: &'a UserProfile,
    pool: &'a Dataset,
    measure: &AffinityMeasure,
    params: &ImmuneParams,
    seed: u64,
) -> Result<FinalPopulation<'a>, AisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_population(antigen, pool, measure, params, &mut rng)?;
    while state.iteration < params.max_iterations {
        state.concentration_step(params);
        state.prune_and_replace(params, &mut rng);
        if state.stable_count >= params.stability_window {
            return Ok(FinalPopulation::from_state(&state, true));
        }
    }
    warn!(
        "user {}: membership not stable after {} iterations",
        antigen.user_id(),
        params.max_iterations
    );
    Ok(FinalPopulation::from_state(&state, false))
}
