//! Rating scale, user profiles and datasets.
//!
//! Ratings live on a six-point scale `0, 0.2, 0.4, 0.6, 0.8, 1.0`. Internally a
//! rating is stored as its category index `1..=6` so equality and differences
//! are exact; the real-valued form is produced on demand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of rating categories on the scale.
pub const CATEGORIES: usize = 6;

/// Distance between neighbouring scale points.
pub const SCALE_STEP: f64 = 0.2;

/// Largest accepted distance between a real-valued rating and its scale point.
pub const SCALE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("rating {0} is not one of the six scale points 0, 0.2, 0.4, 0.6, 0.8, 1")]
    InvalidScalePoint(f64),
    #[error("category {0} is outside 1..=6")]
    CategoryOutOfRange(i64),
    #[error("user {user_id} rated movie {movie_id} more than once")]
    DuplicateRating { user_id: u32, movie_id: u32 },
    #[error("user id {0} appears more than once")]
    DuplicateUser(u32),
}

/// A single rating on the six-point scale.
///
/// Ordering follows the scale: `Rating::VERY_BAD < Rating::VERY_GOOD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Rating(u8);

impl Rating {
    pub const VERY_BAD: Rating = Rating(1);
    pub const BAD: Rating = Rating(2);
    pub const BELOW_AVERAGE: Rating = Rating(3);
    pub const ABOVE_AVERAGE: Rating = Rating(4);
    pub const GOOD: Rating = Rating(5);
    pub const VERY_GOOD: Rating = Rating(6);

    /// All six ratings in ascending order.
    pub const ALL: [Rating; CATEGORIES] = [
        Rating(1),
        Rating(2),
        Rating(3),
        Rating(4),
        Rating(5),
        Rating(6),
    ];

    pub fn from_category(category: i64) -> Result<Self, DomainError> {
        if (1..=CATEGORIES as i64).contains(&category) {
            Ok(Rating(category as u8))
        } else {
            Err(DomainError::CategoryOutOfRange(category))
        }
    }

    pub fn from_value(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::InvalidScalePoint(value));
        }
        let steps = (value / SCALE_STEP).round();
        if !(0.0..=(CATEGORIES - 1) as f64).contains(&steps)
            || (value - steps * SCALE_STEP).abs() > SCALE_TOLERANCE
        {
            return Err(DomainError::InvalidScalePoint(value));
        }
        Ok(Rating(steps as u8 + 1))
    }

    /// Category index in `1..=6` (1 = very bad, 6 = very good).
    #[inline]
    pub fn category(self) -> u8 {
        self.0
    }

    /// Zero-based category index, handy for table lookups.
    #[inline]
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    /// Real-valued rating in `[0, 1]`.
    #[inline]
    pub fn value(self) -> f64 {
        // Exact table lookup so 0.6 is the literal 0.6, not 3.0 * 0.2.
        const VALUES: [f64; CATEGORIES] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        VALUES[self.index()]
    }

    /// Nearest scale point to an arbitrary value, clamped to the scale.
    pub fn nearest(value: f64) -> Self {
        let steps = (value / SCALE_STEP)
            .round()
            .clamp(0.0, (CATEGORIES - 1) as f64);
        Rating(steps as u8 + 1)
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "Very Bad",
            2 => "Bad",
            3 => "Below Average",
            4 => "Above Average",
            5 => "Good",
            _ => "Very Good",
        }
    }
}

impl TryFrom<u8> for Rating {
    type Error = DomainError;

    fn try_from(category: u8) -> Result<Self, Self::Error> {
        Rating::from_category(category as i64)
    }
}

impl From<Rating> for u8 {
    fn from(r: Rating) -> u8 {
        r.0
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Map a real-valued scale point to its category index `1..=6`.
pub fn category_from_rating(value: f64) -> Result<u8, DomainError> {
    Rating::from_value(value).map(Rating::category)
}

/// Map a category index `1..=6` back to its real-valued scale point.
pub fn rating_from_category(category: i64) -> Result<f64, DomainError> {
    Rating::from_category(category).map(Rating::value)
}

/// One user's ratings, keyed by movie id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    user_id: u32,
    ratings: BTreeMap<u32, Rating>,
}

impl UserProfile {
    pub fn new(user_id: u32) -> Self {
        UserProfile {
            user_id,
            ratings: BTreeMap::new(),
        }
    }

    /// Build a profile, rejecting a movie rated twice.
    pub fn from_ratings<I>(user_id: u32, ratings: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (u32, Rating)>,
    {
        let mut profile = UserProfile::new(user_id);
        for (movie_id, rating) in ratings {
            profile.insert(movie_id, rating)?;
        }
        Ok(profile)
    }

    /// Convenience constructor from real-valued scale points.
    pub fn from_values<I>(user_id: u32, ratings: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut profile = UserProfile::new(user_id);
        for (movie_id, value) in ratings {
            profile.insert(movie_id, Rating::from_value(value)?)?;
        }
        Ok(profile)
    }

    pub fn insert(&mut self, movie_id: u32, rating: Rating) -> Result<(), DomainError> {
        if self.ratings.insert(movie_id, rating).is_some() {
            return Err(DomainError::DuplicateRating {
                user_id: self.user_id,
                movie_id,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn user_id(&self) -> u32 {
        self.user_id
    }

    #[inline]
    pub fn ratings(&self) -> &BTreeMap<u32, Rating> {
        &self.ratings
    }

    #[inline]
    pub fn rating(&self, movie_id: u32) -> Option<Rating> {
        self.ratings.get(&movie_id).copied()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// A copy of this profile with one movie's rating removed.
    pub fn without(&self, movie_id: u32) -> UserProfile {
        let mut copy = self.clone();
        copy.ratings.remove(&movie_id);
        copy
    }

    /// A copy of this profile with several movies' ratings removed.
    pub fn without_all(&self, movie_ids: &[u32]) -> UserProfile {
        let mut copy = self.clone();
        for m in movie_ids {
            copy.ratings.remove(m);
        }
        copy
    }
}

/// Movies rated by both users, ascending by movie id, as `(movie, a's rating, b's rating)`.
pub fn common_movies(a: &UserProfile, b: &UserProfile) -> Vec<(u32, Rating, Rating)> {
    let mut out = Vec::new();
    let mut left = a.ratings.iter().peekable();
    let mut right = b.ratings.iter().peekable();
    while let (Some(&(&ma, &ra)), Some(&(&mb, &rb))) = (left.peek(), right.peek()) {
        match ma.cmp(&mb) {
            std::cmp::Ordering::Less => {
                left.next();
            }
            std::cmp::Ordering::Greater => {
                right.next();
            }
            std::cmp::Ordering::Equal => {
                out.push((ma, ra, rb));
                left.next();
                right.next();
            }
        }
    }
    out
}

/// A collection of user profiles keyed by user id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    users: BTreeMap<u32, UserProfile>,
    movie_ids: BTreeSet<u32>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_profiles<I>(profiles: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = UserProfile>,
    {
        let mut ds = Dataset::new();
        for p in profiles {
            ds.insert(p)?;
        }
        Ok(ds)
    }

    pub fn insert(&mut self, profile: UserProfile) -> Result<(), DomainError> {
        if self.users.contains_key(&profile.user_id) {
            return Err(DomainError::DuplicateUser(profile.user_id));
        }
        self.movie_ids.extend(profile.ratings.keys().copied());
        self.users.insert(profile.user_id, profile);
        Ok(())
    }

    pub fn get(&self, user_id: u32) -> Option<&UserProfile> {
        self.users.get(&user_id)
    }

    pub fn contains(&self, user_id: u32) -> bool {
        self.users.contains_key(&user_id)
    }

    /// Profiles in ascending user id order.
    pub fn users(&self) -> impl ExactSizeIterator<Item = &UserProfile> + '_ {
        self.users.values()
    }

    pub fn user_ids(&self) -> impl ExactSizeIterator<Item = u32> + '_ {
        self.users.keys().copied()
    }

    pub fn movie_ids(&self) -> &BTreeSet<u32> {
        &self.movie_ids
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn num_ratings(&self) -> usize {
        self.users.values().map(UserProfile::len).sum()
    }

    /// Unweighted mean of every rating in the dataset, `None` when there are none.
    pub fn mean_rating(&self) -> Option<f64> {
        let n = self.num_ratings();
        if n == 0 {
            return None;
        }
        let sum: f64 = self
            .users
            .values()
            .flat_map(|p| p.ratings.values())
            .map(|r| r.value())
            .sum();
        Some(sum / n as f64)
    }

    /// Keep only the users for which `keep` returns true.
    pub fn filter<F>(&self, mut keep: F) -> Dataset
    where
        F: FnMut(&UserProfile) -> bool,
    {
        let mut out = Dataset::new();
        for p in self.users.values().filter(|p| keep(p)) {
            out.movie_ids.extend(p.ratings.keys().copied());
            out.users.insert(p.user_id, p.clone());
        }
        out
    }
}
