//! Experiment harness: hidden-rating prediction accuracy, Kendall's Tau tie
//! loss, and a paired comparison between two accuracy runs.
//!
//! Accuracy for one user is `1 - mean(|prediction - actual|)` over `trials`
//! hidden ratings, so predictions that are consistently one category off
//! (0.2 on the scale) score 0.8.
//!
//! Every random choice is derived from the master seed and the user id, and
//! every trial's network run has its own sub-seed, so reports do not depend
//! on how users are scheduled across workers. Two runs with the same seed
//! but different measures hide the same movies for the same users.

use std::io::{self, Write};

use log::{debug, warn};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{tie_ignored_fraction, AffinityMeasure, MeasureKind};
use crate::domain::{Dataset, UserProfile};
use crate::exec::{derive_seed, map_ordered, Execution};
use crate::immune_network::{run_to_convergence, AisError, ImmuneParams};
use crate::recommender::{predict_rating, RecommendError};

/// Sub-seed index reserved for picking a user's hidden movies.
const TRIAL_SELECTION: u64 = u64::MAX;
/// Sub-seed index reserved for picking peers in the ties experiment.
const PEER_SELECTION: u64 = u64::MAX - 1;
/// User id slot used when sampling users from a dataset.
const USER_SAMPLING: u32 = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("user {user_id} has {found} ratings, more than {trials} are needed")]
    InsufficientRatings {
        user_id: u32,
        found: usize,
        trials: usize,
    },
    #[error("only {found} eligible antigens, {needed} requested")]
    InsufficientAntigens { needed: usize, found: usize },
    #[error("reports do not cover the same users and hidden movies: {0}")]
    SampleMismatch(String),
    #[error("no user had a usable peer pair")]
    InsufficientOverlapEverywhere,
    #[error(transparent)]
    Ais(#[from] AisError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

/// What produces the prediction for a hidden rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Predictor {
    /// Full immune-network neighbourhood with concentration-weighted prediction.
    Network { measure: AffinityMeasure },
    /// The pool's mean rating, ignoring the user entirely.
    GlobalMean,
}

/// Whether the network is re-run for each hidden rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    /// One network run per hidden rating, with only that rating hidden.
    #[default]
    PerTrial,
    /// Hide every trial movie at once and run the network a single time.
    /// Faster; intended for exploration.
    SharedPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySettings {
    pub params: ImmuneParams,
    pub trials: usize,
    pub mode: TrialMode,
}

impl Default for AccuracySettings {
    fn default() -> Self {
        AccuracySettings {
            params: ImmuneParams::default(),
            trials: 20,
            mode: TrialMode::PerTrial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub user_id: u32,
    pub num_ratings: usize,
    pub accuracy: f64,
    pub fallback_trials: usize,
    /// Network runs that hit the iteration budget before stabilising.
    pub unconverged_runs: usize,
    pub trial_movies: Vec<u32>,
    pub abs_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieRow {
    pub user_id: u32,
    pub num_ratings: usize,
    pub tie_fraction: f64,
    pub peers_used: usize,
    pub pairs_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "experiment", content = "rows")]
pub enum ReportRows {
    Accuracy(Vec<AccuracyRow>),
    Ties(Vec<TieRow>),
}

impl ReportRows {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ReportRows::Accuracy(rows) => rows.iter().map(|r| r.accuracy).collect(),
            ReportRows::Ties(rows) => rows.iter().map(|r| r.tie_fraction).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ReportRows::Accuracy(r) => r.len(),
            ReportRows::Ties(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub predictor: Option<Predictor>,
    pub seed: u64,
    pub settings: Option<AccuracySettings>,
    pub peers_per_user: Option<usize>,
    pub median: f64,
    pub mean: f64,
    /// Users dropped from the ties experiment for lack of any usable pair.
    pub skipped_users: Vec<u32>,
    #[serde(flatten)]
    pub rows: ReportRows,
}

impl ExperimentReport {
    fn new(rows: ReportRows, seed: u64) -> Self {
        let values = rows.values();
        ExperimentReport {
            predictor: None,
            seed,
            settings: None,
            peers_per_user: None,
            median: median(&values).unwrap_or(f64::NAN),
            mean: mean(&values).unwrap_or(f64::NAN),
            skipped_users: Vec::new(),
            rows,
        }
    }

    pub fn measure(&self) -> Option<MeasureKind> {
        match self.predictor {
            Some(Predictor::Network { measure }) => Some(measure.kind),
            _ => None,
        }
    }

    pub fn accuracy_rows(&self) -> Option<&[AccuracyRow]> {
        match &self.rows {
            ReportRows::Accuracy(rows) => Some(rows),
            ReportRows::Ties(_) => None,
        }
    }

    pub fn tie_rows(&self) -> Option<&[TieRow]> {
        match &self.rows {
            ReportRows::Ties(rows) => Some(rows),
            ReportRows::Accuracy(_) => None,
        }
    }

    /// One row per user: `user_id,num_ratings,<value>,<count>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match &self.rows {
            ReportRows::Accuracy(rows) => {
                writeln!(out, "user_id,num_ratings,accuracy,fallback_trials")?;
                for r in rows {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        r.user_id, r.num_ratings, r.accuracy, r.fallback_trials
                    )?;
                }
            }
            ReportRows::Ties(rows) => {
                writeln!(out, "user_id,num_ratings,tie_fraction,pairs_skipped")?;
                for r in rows {
                    writeln!(
                        out,
                        "{},{},{},{}",
                        r.user_id, r.num_ratings, r.tie_fraction, r.pairs_skipped
                    )?;
                }
            }
        }
        out.flush()
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

/// `1 - mean absolute error`, the per-user accuracy score.
pub fn accuracy_from_errors(abs_errors: &[f64]) -> f64 {
    1.0 - mean(abs_errors).unwrap_or(0.0)
}

/// The hidden movies for one user: `trials` distinct movies from their
/// profile, ascending by id. Same seed and user give the same movies.
pub fn select_trial_movies(
    antigen: &UserProfile,
    trials: usize,
    seed: u64,
) -> Result<Vec<u32>, EvalError> {
    if antigen.len() <= trials {
        return Err(EvalError::InsufficientRatings {
            user_id: antigen.user_id(),
            found: antigen.len(),
            trials,
        });
    }
    let movies: Vec<u32> = antigen.ratings().keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, antigen.user_id(), TRIAL_SELECTION));
    let mut chosen: Vec<u32> = index::sample(&mut rng, movies.len(), trials)
        .into_iter()
        .map(|i| movies[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

struct TrialOutcome {
    prediction: f64,
    fallback: bool,
    converged: bool,
}

fn predict_hidden(
    visible: &UserProfile,
    movie_id: u32,
    pool: &Dataset,
    predictor: &Predictor,
    params: &ImmuneParams,
    run_seed: u64,
) -> Result<TrialOutcome, EvalError> {
    let global = || pool.mean_rating().unwrap_or(0.5);
    match predictor {
        Predictor::GlobalMean => Ok(TrialOutcome {
            prediction: global(),
            fallback: false,
            converged: true,
        }),
        Predictor::Network { measure } => {
            let population = run_to_convergence(visible, pool, measure, params, run_seed)?;
            predict_from(&population, movie_id, global)
        }
    }
}

fn predict_from(
    population: &crate::immune_network::FinalPopulation<'_>,
    movie_id: u32,
    global: impl Fn() -> f64,
) -> Result<TrialOutcome, EvalError> {
    match predict_rating(population, movie_id) {
        Ok(p) => Ok(TrialOutcome {
            prediction: p.value,
            fallback: p.fallback,
            converged: population.converged,
        }),
        // Every antibody died and the pool ran dry: nothing left to vote.
        Err(RecommendError::EmptyPopulation) => Ok(TrialOutcome {
            prediction: global(),
            fallback: true,
            converged: population.converged,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Score one user with an arbitrary predictor.
pub fn score_user(
    antigen: &UserProfile,
    pool: &Dataset,
    predictor: &Predictor,
    settings: &AccuracySettings,
    seed: u64,
) -> Result<AccuracyRow, EvalError> {
    let trial_movies = select_trial_movies(antigen, settings.trials, seed)?;
    let mut abs_errors = Vec::with_capacity(trial_movies.len());
    let mut fallback_trials = 0;
    let mut unconverged_runs = 0;

    match (settings.mode, predictor) {
        (TrialMode::SharedPopulation, Predictor::Network { measure }) => {
            let visible = antigen.without_all(&trial_movies);
            let run_seed = derive_seed(seed, antigen.user_id(), 0);
            let population =
                run_to_convergence(&visible, pool, measure, &settings.params, run_seed)?;
            if !population.converged {
                unconverged_runs += 1;
            }
            let global = || pool.mean_rating().unwrap_or(0.5);
            for &movie in &trial_movies {
                let out = predict_from(&population, movie, global)?;
                fallback_trials += out.fallback as usize;
                let actual = antigen
                    .rating(movie)
                    .expect("trial movie from profile")
                    .value();
                abs_errors.push((out.prediction - actual).abs());
            }
        }
        _ => {
            for (t, &movie) in trial_movies.iter().enumerate() {
                let visible = antigen.without(movie);
                debug_assert!(visible.rating(movie).is_none());
                let run_seed = derive_seed(seed, antigen.user_id(), t as u64);
                let out =
                    predict_hidden(&visible, movie, pool, predictor, &settings.params, run_seed)?;
                fallback_trials += out.fallback as usize;
                unconverged_runs += (!out.converged) as usize;
                let actual = antigen
                    .rating(movie)
                    .expect("trial movie from profile")
                    .value();
                abs_errors.push((out.prediction - actual).abs());
            }
        }
    }

    Ok(AccuracyRow {
        user_id: antigen.user_id(),
        num_ratings: antigen.len(),
        accuracy: accuracy_from_errors(&abs_errors),
        fallback_trials,
        unconverged_runs,
        trial_movies,
        abs_errors,
    })
}

/// Hidden-rating accuracy for one user under the immune-network recommender.
pub fn user_accuracy(
    antigen: &UserProfile,
    pool: &Dataset,
    measure: &AffinityMeasure,
    params: &ImmuneParams,
    trials: usize,
    seed: u64,
) -> Result<AccuracyRow, EvalError> {
    let settings = AccuracySettings {
        params: params.clone(),
        trials,
        mode: TrialMode::PerTrial,
    };
    score_user(
        antigen,
        pool,
        &Predictor::Network { measure: *measure },
        &settings,
        seed,
    )
}

/// Seeded sample of `count` users from `dataset` that satisfy `eligible`,
/// returned in ascending id order.
pub fn sample_users<F>(
    dataset: &Dataset,
    count: usize,
    seed: u64,
    eligible: F,
) -> Result<Vec<&UserProfile>, EvalError>
where
    F: Fn(&UserProfile) -> bool,
{
    let candidates: Vec<&UserProfile> = dataset.users().filter(|p| eligible(p)).collect();
    if candidates.len() < count {
        return Err(EvalError::InsufficientAntigens {
            needed: count,
            found: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, USER_SAMPLING, TRIAL_SELECTION));
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| candidates[i]).collect())
}

/// Run the accuracy protocol over a seeded sample of `users` antigens.
pub fn accuracy_experiment(
    antigens: &Dataset,
    pool: &Dataset,
    predictor: &Predictor,
    settings: &AccuracySettings,
    users: usize,
    seed: u64,
    exec: Execution,
) -> Result<ExperimentReport, EvalError> {
    settings.params.validate()?;
    let sample = sample_users(antigens, users, seed, |p| p.len() > settings.trials)?;
    let rows = map_ordered(exec, &sample, |antigen| {
        score_user(antigen, pool, predictor, settings, seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let unconverged: usize = rows.iter().map(|r| r.unconverged_runs).sum();
    if unconverged > 0 {
        warn!("{unconverged} network runs did not reach stable membership");
    }
    let mut report = ExperimentReport::new(ReportRows::Accuracy(rows), seed);
    report.predictor = Some(*predictor);
    report.settings = Some(settings.clone());
    Ok(report)
}

/// Mean one-sided-tie fraction of each user against a seeded sample of peers.
pub fn ties_experiment(
    users_sample: &Dataset,
    peers: &Dataset,
    peers_per_user: usize,
    seed: u64,
    exec: Execution,
) -> Result<ExperimentReport, EvalError> {
    let users: Vec<&UserProfile> = users_sample.users().collect();
    let outcomes = map_ordered(exec, &users, |user| {
        let candidates: Vec<&UserProfile> = peers
            .users()
            .filter(|p| p.user_id() != user.user_id())
            .collect();
        let take = peers_per_user.min(candidates.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, user.user_id(), PEER_SELECTION));
        let mut chosen = index::sample(&mut rng, candidates.len(), take).into_vec();
        chosen.sort_unstable();
        let mut fractions = Vec::with_capacity(take);
        let mut skipped = 0;
        for i in chosen {
            match tie_ignored_fraction(user, candidates[i]) {
                Ok(f) => fractions.push(f),
                Err(_) => skipped += 1,
            }
        }
        if fractions.is_empty() {
            debug!("user {} has no peer with two common movies", user.user_id());
            return Err(user.user_id());
        }
        Ok(TieRow {
            user_id: user.user_id(),
            num_ratings: user.len(),
            tie_fraction: mean(&fractions).expect("non-empty"),
            peers_used: fractions.len(),
            pairs_skipped: skipped,
        })
    });
    let mut rows = Vec::new();
    let mut skipped_users = Vec::new();
    for o in outcomes {
        match o {
            Ok(row) => rows.push(row),
            Err(id) => skipped_users.push(id),
        }
    }
    if rows.is_empty() {
        return Err(EvalError::InsufficientOverlapEverywhere);
    }
    if !skipped_users.is_empty() {
        warn!(
            "{} users had no usable peer pair and were skipped",
            skipped_users.len()
        );
    }
    let mut report = ExperimentReport::new(ReportRows::Ties(rows), seed);
    report.peers_per_user = Some(peers_per_user);
    report.skipped_users = skipped_users;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    /// `(user_id, accuracy_a - accuracy_b)` per user.
    pub differences: Vec<(u32, f64)>,
    pub mean_difference: f64,
    pub sd_difference: f64,
    /// Paired t statistic; `None` when the differences have zero variance
    /// or there are fewer than two users.
    pub t_statistic: Option<f64>,
    pub degrees_of_freedom: usize,
    pub median_a: f64,
    pub median_b: f64,
}

/// Paired comparison of two accuracy reports over identical users and hidden movies.
pub fn paired_comparison(
    a: &ExperimentReport,
    b: &ExperimentReport,
) -> Result<ComparisonSummary, EvalError> {
    let (Some(rows_a), Some(rows_b)) = (a.accuracy_rows(), b.accuracy_rows()) else {
        return Err(EvalError::SampleMismatch(
            "both reports must be accuracy reports".into(),
        ));
    };
    if rows_a.len() != rows_b.len() {
        return Err(EvalError::SampleMismatch(format!(
            "{} users vs {} users",
            rows_a.len(),
            rows_b.len()
        )));
    }
    let mut differences = Vec::with_capacity(rows_a.len());
    for (ra, rb) in rows_a.iter().zip(rows_b) {
        if ra.user_id != rb.user_id {
            return Err(EvalError::SampleMismatch(format!(
                "user {} vs user {}",
                ra.user_id, rb.user_id
            )));
        }
        if ra.trial_movies != rb.trial_movies {
            return Err(EvalError::SampleMismatch(format!(
                "user {} hid different movies",
                ra.user_id
            )));
        }
        differences.push((ra.user_id, ra.accuracy - rb.accuracy));
    }
    let d: Vec<f64> = differences.iter().map(|&(_, x)| x).collect();
    let n = d.len();
    let mean_difference = mean(&d).unwrap_or(0.0);
    let sd_difference = if n > 1 {
        (d.iter().map(|x| (x - mean_difference).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let t_statistic = (n > 1 && sd_difference > 0.0)
        .then(|| mean_difference / (sd_difference / (n as f64).sqrt()));
    Ok(ComparisonSummary {
        differences,
        mean_difference,
        sd_difference,
        t_statistic,
        degrees_of_freedom: n.saturating_sub(1),
        median_a: a.median,
        median_b: b.median,
    })
}
