//! Concentration-weighted rating prediction and top-N recommendation lists.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Rating, UserProfile};
use crate::immune_network::FinalPopulation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecommendError {
    #[error("final population is empty")]
    EmptyPopulation,
    #[error("recommendation count must be at least 1")]
    ZeroCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub movie_id: u32,
    pub value: f64,
    /// Number of antibodies that rated the movie with positive weight.
    pub support: usize,
    /// No antibody could vote; `value` is the population-wide mean rating.
    pub fallback: bool,
}

impl Prediction {
    /// The prediction rounded to the nearest scale point.
    pub fn rounded(&self) -> Rating {
        Rating::nearest(self.value)
    }
}

/// Weighted mean of the ratings given to `movie_id` by population members,
/// using concentrations as weights. Members that did not rate the movie or
/// whose weight is zero do not take part.
pub fn predict_rating(
    population: &FinalPopulation<'_>,
    movie_id: u32,
) -> Result<Prediction, RecommendError> {
    if population.is_empty() {
        return Err(RecommendError::EmptyPopulation);
    }
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    let mut support = 0;
    for m in &population.members {
        if m.weight <= 0.0 {
            continue;
        }
        if let Some(r) = m.profile.rating(movie_id) {
            weighted += m.weight * r.value();
            total_weight += m.weight;
            support += 1;
        }
    }
    if support > 0 {
        return Ok(Prediction {
            movie_id,
            value: (weighted / total_weight).clamp(0.0, 1.0),
            support,
            fallback: false,
        });
    }
    Ok(Prediction {
        movie_id,
        value: population_mean(population),
        support: 0,
        fallback: true,
    })
}

/// Unweighted mean over every rating held by the population.
fn population_mean(population: &FinalPopulation<'_>) -> f64 {
    let (sum, count) = population
        .members
        .iter()
        .flat_map(|m| m.profile.ratings().values())
        .fold((0.0, 0usize), |(s, c), r| (s + r.value(), c + 1));
    if count == 0 {
        // Profiles admitted to a pool are never empty; midpoint as a last resort.
        0.5
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub movie_id: u32,
    pub predicted: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub entries: Vec<RecommendationEntry>,
}

impl RecommendationList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Best `count` movies the antigen has not rated, by predicted value
/// (descending), ties broken by ascending movie id.
pub fn recommend_top_n(
    population: &FinalPopulation<'_>,
    antigen: &UserProfile,
    count: usize,
) -> Result<RecommendationList, RecommendError> {
    if count == 0 {
        return Err(RecommendError::ZeroCount);
    }
    if population.is_empty() {
        return Err(RecommendError::EmptyPopulation);
    }
    let candidates: BTreeSet<u32> = population
        .members
        .iter()
        .flat_map(|m| m.profile.ratings().keys().copied())
        .filter(|movie| antigen.rating(*movie).is_none())
        .collect();

    let mut entries = Vec::with_capacity(candidates.len());
    for movie_id in candidates {
        let p = predict_rating(population, movie_id)?;
        if !p.fallback {
            entries.push(RecommendationEntry {
                movie_id,
                predicted: p.value,
                support: p.support,
            });
        }
    }
    entries.sort_by(|a, b| {
        b.predicted
            .total_cmp(&a.predicted)
            .then(a.movie_id.cmp(&b.movie_id))
    });
    entries.truncate(count);
    Ok(RecommendationList { entries })
}
