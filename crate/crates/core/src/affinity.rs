//! Pairwise affinity between two user profiles.
//!
//! Two rank-agreement measures are provided, Weighted Kappa over the 6x6
//! category co-occurrence table and Kendall's Tau over rating differences,
//! plus a product-moment Pearson baseline. All of them look only at the
//! movies both users rated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{common_movies, Rating, UserProfile, CATEGORIES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffinityError {
    #[error("insufficient overlap: {found} common movies, need at least {needed}")]
    InsufficientOverlap { needed: usize, found: usize },
}

/// Category co-occurrence counts for a pair of users.
///
/// Row `i` is the first user's category, column `j` the second user's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    counts: [[u32; CATEGORIES]; CATEGORIES],
    observations: u32,
}

impl FrequencyTable {
    /// Count at row `i`, column `j`, both 1-based categories.
    pub fn get(&self, i: u8, j: u8) -> u32 {
        self.counts[(i - 1) as usize][(j - 1) as usize]
    }

    pub fn counts(&self) -> &[[u32; CATEGORIES]; CATEGORIES] {
        &self.counts
    }

    pub fn observations(&self) -> u32 {
        self.observations
    }

    pub fn categories(&self) -> usize {
        CATEGORIES
    }

    pub fn transpose(&self) -> FrequencyTable {
        let mut t = FrequencyTable {
            observations: self.observations,
            ..Default::default()
        };
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                t.counts[j][i] = c;
            }
        }
        t
    }

    pub fn row_sums(&self) -> [u32; CATEGORIES] {
        self.counts.map(|row| row.iter().sum())
    }

    /// Nonzero cells as `(row, column, count)` with 1-based categories.
    pub fn nonzero_cells(&self) -> Vec<(u8, u8, u32)> {
        let mut cells = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    cells.push((i as u8 + 1, j as u8 + 1, c));
                }
            }
        }
        cells
    }

    /// Observed weighted agreement `(1/n) * sum_ij w_ij f_ij` for arbitrary weights.
    pub fn observed_agreement(&self, weights: &WeightMatrix) -> Option<f64> {
        if self.observations == 0 {
            return None;
        }
        let mut sum = 0.0;
        for i in 0..CATEGORIES {
            for j in 0..CATEGORIES {
                sum += weights.weights[i][j] * self.counts[i][j] as f64;
            }
        }
        Some(sum / self.observations as f64)
    }

    /// Same as [`observed_agreement`](Self::observed_agreement) with linear
    /// weights, evaluated in integer arithmetic so the result is one division.
    fn linear_agreement(&self) -> Option<f64> {
        if self.observations == 0 {
            return None;
        }
        let span = (CATEGORIES - 1) as u64;
        let mut credit = 0u64;
        for i in 0..CATEGORIES {
            for j in 0..CATEGORIES {
                credit += (span - i.abs_diff(j) as u64) * self.counts[i][j] as u64;
            }
        }
        Some(credit as f64 / (span * self.observations as u64) as f64)
    }
}

/// Linear agreement weights `w_ij = 1 - |i - j| / (g - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    weights: [[f64; CATEGORIES]; CATEGORIES],
}

impl WeightMatrix {
    pub fn linear() -> Self {
        let span = (CATEGORIES - 1) as f64;
        let mut weights = [[0.0; CATEGORIES]; CATEGORIES];
        for (i, row) in weights.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                *w = 1.0 - i.abs_diff(j) as f64 / span;
            }
        }
        WeightMatrix { weights }
    }

    /// Weight for 1-based categories `i`, `j`.
    pub fn get(&self, i: u8, j: u8) -> f64 {
        self.weights[(i - 1) as usize][(j - 1) as usize]
    }
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self::linear()
    }
}

type Common = [(u32, Rating, Rating)];

pub fn build_frequency_table(a: &UserProfile, b: &UserProfile) -> FrequencyTable {
    table_from_common(&common_movies(a, b))
}

fn table_from_common(common: &Common) -> FrequencyTable {
    let mut table = FrequencyTable::default();
    for &(_, ra, rb) in common {
        table.counts[ra.index()][rb.index()] += 1;
        table.observations += 1;
    }
    table
}

/// Weighted Kappa with chance agreement fixed at zero, i.e. the observed
/// linearly weighted agreement over common movies. Always in `[0, 1]`.
pub fn weighted_kappa(a: &UserProfile, b: &UserProfile) -> Result<f64, AffinityError> {
    let table = build_frequency_table(a, b);
    table
        .linear_agreement()
        .ok_or(AffinityError::InsufficientOverlap {
            needed: 1,
            found: 0,
        })
}

/// How a pair of common movies was classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairDecision {
    Concordant,
    Discordant,
    /// Exactly one of the two differences is zero.
    Ignored,
}

/// Classify a pair from the sign of each user's rating difference.
///
/// Both differences zero counts as concordant; exactly one zero is ignored.
#[inline]
pub fn classify_pair(diff_a: i32, diff_b: i32) -> PairDecision {
    match (diff_a.signum(), diff_b.signum()) {
        (0, 0) => PairDecision::Concordant,
        (0, _) | (_, 0) => PairDecision::Ignored,
        (x, y) if x == y => PairDecision::Concordant,
        _ => PairDecision::Discordant,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KtResult {
    pub concordant: u64,
    pub discordant: u64,
    pub ignored: u64,
    pub total_pairs: u64,
    pub tau: f64,
}

impl KtResult {
    /// Kendall's S, concordant minus discordant.
    pub fn s(&self) -> i64 {
        self.concordant as i64 - self.discordant as i64
    }

    pub fn ignored_fraction(&self) -> f64 {
        self.ignored as f64 / self.total_pairs as f64
    }
}

/// Kendall's Tau over all `n(n-1)/2` pairs of common movies.
///
/// Ignored pairs stay in the denominator.
pub fn kendalls_tau(a: &UserProfile, b: &UserProfile) -> Result<KtResult, AffinityError> {
    kt_from_common(&common_movies(a, b))
}

fn kt_from_common(common: &Common) -> Result<KtResult, AffinityError> {
    let n = common.len();
    if n < 2 {
        return Err(AffinityError::InsufficientOverlap {
            needed: 2,
            found: n,
        });
    }
    let (mut concordant, mut discordant, mut ignored) = (0u64, 0u64, 0u64);
    for (i, &(_, ai, bi)) in common.iter().enumerate() {
        for &(_, aj, bj) in &common[i + 1..] {
            let da = aj.category() as i32 - ai.category() as i32;
            let db = bj.category() as i32 - bi.category() as i32;
            match classify_pair(da, db) {
                PairDecision::Concordant => concordant += 1,
                PairDecision::Discordant => discordant += 1,
                PairDecision::Ignored => ignored += 1,
            }
        }
    }
    let n = n as u64;
    let total_pairs = n * (n - 1) / 2;
    let s = concordant as i64 - discordant as i64;
    let tau = (2 * s) as f64 / (n * (n - 1)) as f64;
    Ok(KtResult {
        concordant,
        discordant,
        ignored,
        total_pairs,
        tau,
    })
}

/// Share of common-movie pairs that Kendall's Tau discards as one-sided ties.
pub fn tie_ignored_fraction(a: &UserProfile, b: &UserProfile) -> Result<f64, AffinityError> {
    kendalls_tau(a, b).map(|kt| kt.ignored_fraction())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonResult {
    pub value: f64,
    /// Set when either side's common ratings have zero variance; `value` is then 0.
    pub degenerate: bool,
}

pub fn pearson_baseline(a: &UserProfile, b: &UserProfile) -> Result<PearsonResult, AffinityError> {
    pearson_from_common(&common_movies(a, b))
}

fn pearson_from_common(common: &Common) -> Result<PearsonResult, AffinityError> {
    let n = common.len();
    if n < 2 {
        return Err(AffinityError::InsufficientOverlap {
            needed: 2,
            found: n,
        });
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(_, x, y) in common {
        sx += x.value();
        sy += y.value();
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(_, x, y) in common {
        let dx = x.value() - mx;
        let dy = y.value() - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(PearsonResult {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(PearsonResult {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    WeightedKappa,
    KendallsTau,
    PearsonBaseline,
}

impl MeasureKind {
    pub fn short_name(self) -> &'static str {
        match self {
            MeasureKind::WeightedKappa => "wk",
            MeasureKind::KendallsTau => "kt",
            MeasureKind::PearsonBaseline => "pearson",
        }
    }

    /// Whether the measure can go negative.
    pub fn is_signed(self) -> bool {
        !matches!(self, MeasureKind::WeightedKappa)
    }

    /// Fewest common movies for which the measure is defined at all.
    fn intrinsic_overlap(self) -> usize {
        match self {
            MeasureKind::WeightedKappa => 1,
            MeasureKind::KendallsTau | MeasureKind::PearsonBaseline => 2,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MeasureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wk" | "weighted_kappa" | "weighted-kappa" => Ok(MeasureKind::WeightedKappa),
            "kt" | "kendalls_tau" | "kendall" | "kendalls-tau" => Ok(MeasureKind::KendallsTau),
            "pearson" | "pr" | "pearson_baseline" => Ok(MeasureKind::PearsonBaseline),
            other => Err(format!(
                "unknown affinity measure '{other}' (expected wk, kt or pearson)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffinityMeasure {
    pub kind: MeasureKind,
    pub min_overlap: usize,
}

impl AffinityMeasure {
    pub const DEFAULT_MIN_OVERLAP: usize = 2;

    pub fn new(kind: MeasureKind) -> Self {
        AffinityMeasure {
            kind,
            min_overlap: Self::DEFAULT_MIN_OVERLAP,
        }
    }

    pub fn with_min_overlap(kind: MeasureKind, min_overlap: usize) -> Self {
        assert!(min_overlap >= 1, "min_overlap must be at least 1");
        AffinityMeasure { kind, min_overlap }
    }

    pub fn weighted_kappa() -> Self {
        Self::new(MeasureKind::WeightedKappa)
    }

    pub fn kendalls_tau() -> Self {
        Self::new(MeasureKind::KendallsTau)
    }

    pub fn pearson() -> Self {
        Self::new(MeasureKind::PearsonBaseline)
    }
}

/// Result of [`affinity`]: a number for every pair, plus flags explaining zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityValue {
    pub value: f64,
    pub insufficient_overlap: bool,
    pub degenerate: bool,
}

impl AffinityValue {
    fn plain(value: f64) -> Self {
        AffinityValue {
            value,
            insufficient_overlap: false,
            degenerate: false,
        }
    }

    fn no_overlap() -> Self {
        AffinityValue {
            value: 0.0,
            insufficient_overlap: true,
            degenerate: false,
        }
    }
}

/// Dispatch to the selected measure. Pairs sharing fewer than `min_overlap`
/// movies get affinity 0 with the insufficient-overlap flag set.
pub fn affinity(measure: &AffinityMeasure, a: &UserProfile, b: &UserProfile) -> AffinityValue {
    let needed = measure.min_overlap.max(measure.kind.intrinsic_overlap());
    let common = common_movies(a, b);
    if common.len() < needed {
        return AffinityValue::no_overlap();
    }
    match measure.kind {
        MeasureKind::WeightedKappa => table_from_common(&common)
            .linear_agreement()
            .map(AffinityValue::plain),
        MeasureKind::KendallsTau => kt_from_common(&common)
            .ok()
            .map(|kt| AffinityValue::plain(kt.tau)),
        MeasureKind::PearsonBaseline => pearson_from_common(&common).ok().map(|p| AffinityValue {
            value: p.value,
            insufficient_overlap: false,
            degenerate: p.degenerate,
        }),
    }
    .unwrap_or_else(AffinityValue::no_overlap)
}
