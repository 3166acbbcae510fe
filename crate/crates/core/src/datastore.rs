//! Ratings files, pool/antigen partitioning and the synthetic data generator.
//!
//! Two line formats are read, both headerless `user_id,movie_id,rating`:
//!
//! * `category_csv`: rating is the category index `1..=6` (canonical, what we write)
//! * `scaled_csv`: rating is one of `0, 0.2, 0.4, 0.6, 0.8, 1`
//!
//! Files are written with LF endings in ascending `(user_id, movie_id)` order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, Rating, UserProfile};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("no users left after filtering")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFormat {
    #[default]
    CategoryCsv,
    ScaledCsv,
}

impl FromStr for RatingFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "category" | "category_csv" | "category-csv" => Ok(RatingFormat::CategoryCsv),
            "scaled" | "scaled_csv" | "scaled-csv" => Ok(RatingFormat::ScaledCsv),
            other => Err(format!(
                "unknown format '{other}' (expected category or scaled)"
            )),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::CategoryCsv => "category_csv",
            RatingFormat::ScaledCsv => "scaled_csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub format: RatingFormat,
    /// Users with fewer ratings than this are dropped.
    pub min_ratings_per_user: usize,
    /// When set, users with id above the threshold form the pool and the
    /// rest become antigens.
    pub pool_id_threshold: Option<u32>,
    /// Pool share for the seeded random split used when no threshold is set.
    pub pool_fraction: f64,
    /// Fail on the first bad row instead of skipping and counting it.
    pub strict: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            format: RatingFormat::CategoryCsv,
            min_ratings_per_user: 20,
            pool_id_threshold: None,
            pool_fraction: 0.8,
            strict: true,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.min_ratings_per_user == 0 {
            return Err(DataError::InvalidConfig(
                "min_ratings_per_user must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.pool_fraction) {
            return Err(DataError::InvalidConfig(
                "pool_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Summary of a load, serialised as the ingest report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub users_kept: usize,
    pub users_dropped: usize,
    pub rows_rejected: usize,
    pub movies: usize,
    /// One line per rejected row; not part of the JSON report.
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

fn parse_row(
    line: &str,
    line_no: usize,
    format: RatingFormat,
) -> Result<(u32, u32, Rating), DataError> {
    let err = |column: usize, reason: String| DataError::Parse {
        line: line_no,
        column,
        reason,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(err(0, format!("expected 3 fields, found {}", fields.len())));
    }
    let user: u32 = fields[0].parse().map_err(|_| {
        err(
            1,
            format!("user id '{}' is not a non-negative integer", fields[0]),
        )
    })?;
    let movie: u32 = fields[1].parse().map_err(|_| {
        err(
            2,
            format!("movie id '{}' is not a non-negative integer", fields[1]),
        )
    })?;
    if user == 0 {
        return Err(err(1, "user id must be positive".into()));
    }
    if movie == 0 {
        return Err(err(2, "movie id must be positive".into()));
    }
    let rating = match format {
        RatingFormat::CategoryCsv => {
            let c: i64 = fields[2]
                .parse()
                .map_err(|_| err(3, format!("category '{}' is not an integer", fields[2])))?;
            Rating::from_category(c).map_err(|e| err(3, e.to_string()))?
        }
        RatingFormat::ScaledCsv => {
            let v: f64 = fields[2]
                .parse()
                .map_err(|_| err(3, format!("rating '{}' is not a number", fields[2])))?;
            Rating::from_value(v).map_err(|e| err(3, e.to_string()))?
        }
    };
    Ok((user, movie, rating))
}

/// Read and validate a ratings stream.
pub fn read_ratings<R: BufRead>(
    reader: R,
    config: &IngestConfig,
) -> Result<(Dataset, LoadReport), DataError> {
    config.validate()?;
    let mut report = LoadReport::default();
    let mut by_user: BTreeMap<u32, BTreeMap<u32, Rating>> = BTreeMap::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: PathBuf::from("<input>"),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, line_no, config.format).and_then(|(u, m, r)| {
            if seen.insert((u, m)) {
                Ok((u, m, r))
            } else {
                Err(DataError::Parse {
                    line: line_no,
                    column: 2,
                    reason: format!("duplicate rating for user {u}, movie {m}"),
                })
            }
        });
        match row {
            Ok((u, m, r)) => {
                by_user.entry(u).or_default().insert(m, r);
            }
            Err(e) if config.strict => return Err(e),
            Err(e) => {
                report.rows_rejected += 1;
                report.diagnostics.push(e.to_string());
            }
        }
    }

    let mut dataset = Dataset::new();
    for (user_id, ratings) in by_user {
        if ratings.len() < config.min_ratings_per_user {
            report.users_dropped += 1;
            continue;
        }
        let profile =
            UserProfile::from_ratings(user_id, ratings).expect("duplicates removed above");
        dataset
            .insert(profile)
            .expect("user ids unique by construction");
    }
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    report.users_kept = dataset.len();
    report.movies = dataset.movie_ids().len();
    Ok((dataset, report))
}

pub fn load_ratings(
    path: &Path,
    config: &IngestConfig,
) -> Result<(Dataset, LoadReport), DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_ratings(BufReader::new(file), config).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Write the canonical category form.
pub fn write_ratings<W: Write>(dataset: &Dataset, mut out: W) -> io::Result<()> {
    for profile in dataset.users() {
        for (movie, rating) in profile.ratings() {
            writeln!(out, "{},{},{}", profile.user_id(), movie, rating.category())?;
        }
    }
    out.flush()
}

pub fn save_ratings(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_ratings(dataset, BufWriter::new(file)).map_err(io_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub pool: Dataset,
    pub antigens: Dataset,
}

/// Split users into a candidate pool and test antigens.
///
/// With `pool_id_threshold` set, ids above it go to the pool. Otherwise a
/// seeded shuffle puts `round(pool_fraction * n)` users in the pool.
pub fn partition(
    dataset: &Dataset,
    config: &IngestConfig,
    seed: u64,
) -> Result<Partition, DataError> {
    config.validate()?;
    let eligible = dataset.filter(|p| p.len() >= config.min_ratings_per_user);
    let (pool, antigens) = match config.pool_id_threshold {
        Some(threshold) => (
            eligible.filter(|p| p.user_id() > threshold),
            eligible.filter(|p| p.user_id() <= threshold),
        ),
        None => {
            let mut ids: Vec<u32> = eligible.user_ids().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ids.shuffle(&mut rng);
            let cut = (config.pool_fraction * ids.len() as f64).round() as usize;
            let pool_ids: HashSet<u32> = ids[..cut].iter().copied().collect();
            (
                eligible.filter(|p| pool_ids.contains(&p.user_id())),
                eligible.filter(|p| !pool_ids.contains(&p.user_id())),
            )
        }
    };
    if pool.is_empty() {
        warn!("partition produced an empty pool");
    }
    if antigens.is_empty() {
        warn!("partition produced no antigens");
    }
    Ok(Partition { pool, antigens })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_movies: usize,
    pub num_clusters: usize,
    /// Half-width of the uniform perturbation added to a cluster's latent preference.
    pub noise: f64,
    pub min_ratings_per_user: usize,
    pub max_ratings_per_user: usize,
    /// Odd-numbered clusters mirror the preferences of the preceding even one
    /// (`p -> 1 - p`).
    pub mirrored_clusters: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 500,
            num_movies: 300,
            num_clusters: 4,
            noise: 0.1,
            min_ratings_per_user: 25,
            max_ratings_per_user: 60,
            mirrored_clusters: false,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.num_users == 0 || self.num_movies == 0 {
            return bad("need at least one user and one movie");
        }
        if self.num_clusters == 0 {
            return bad("num_clusters must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if self.min_ratings_per_user == 0 || self.min_ratings_per_user > self.max_ratings_per_user {
            return bad("ratings per user must satisfy 1 <= min <= max");
        }
        if self.max_ratings_per_user > self.num_movies {
            return bad("max ratings per user exceeds the number of movies");
        }
        Ok(())
    }

    /// Cluster a generated user belongs to. Users are dealt round-robin.
    pub fn cluster_of(&self, user_id: u32) -> usize {
        (user_id as usize - 1) % self.num_clusters
    }
}

/// Clustered synthetic ratings. Each cluster has a latent preference in
/// `[0, 1]` per movie; a user's rating is that preference plus uniform noise,
/// clamped and snapped to the nearest scale point. User ids run `1..=num_users`,
/// movie ids `1..=num_movies`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut latent: Vec<Vec<f64>> = Vec::with_capacity(config.num_clusters);
    for c in 0..config.num_clusters {
        let prefs = if config.mirrored_clusters && c % 2 == 1 {
            latent[c - 1].iter().map(|p| 1.0 - p).collect()
        } else {
            (0..config.num_movies).map(|_| rng.gen::<f64>()).collect()
        };
        latent.push(prefs);
    }

    let mut dataset = Dataset::new();
    for user_id in 1..=config.num_users as u32 {
        let prefs = &latent[config.cluster_of(user_id)];
        let count = rng.gen_range(config.min_ratings_per_user..=config.max_ratings_per_user);
        let mut movies = rand::seq::index::sample(&mut rng, config.num_movies, count).into_vec();
        movies.sort_unstable();
        let mut profile = UserProfile::new(user_id);
        for m in movies {
            let jitter = if config.noise > 0.0 {
                rng.gen_range(-config.noise..=config.noise)
            } else {
                0.0
            };
            let rating = Rating::nearest((prefs[m] + jitter).clamp(0.0, 1.0));
            profile
                .insert(m as u32 + 1, rating)
                .expect("sampled movies are distinct");
        }
        dataset.insert(profile).expect("user ids are distinct");
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::weighted_kappa;
    use crate::domain::common_movies;

    fn lenient(min: usize) -> IngestConfig {
        IngestConfig {
            min_ratings_per_user: min,
            strict: false,
            ..Default::default()
        }
    }

    #[test]
    fn loads_small_category_file() {
        let cfg = IngestConfig {
            min_ratings_per_user: 1,
            ..Default::default()
        };
        let (ds, report) = read_ratings("1,153,4\n1,253,4\n2,153,5\n".as_bytes(), &cfg).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.movie_ids().len(), 2);
        assert_eq!(report.users_kept, 2);
        assert_eq!(ds.get(1).unwrap().rating(153), Some(Rating::ABOVE_AVERAGE));
    }

    #[test]
    fn accepts_crlf_and_scaled() {
        let cfg = IngestConfig {
            format: RatingFormat::ScaledCsv,
            min_ratings_per_user: 1,
            ..Default::default()
        };
        let (ds, _) = read_ratings("1,153,0.6\r\n1,253,1\r\n2,153,0\r\n".as_bytes(), &cfg).unwrap();
        assert_eq!(ds.get(1).unwrap().rating(253), Some(Rating::VERY_GOOD));
        assert_eq!(ds.get(2).unwrap().rating(153), Some(Rating::VERY_BAD));
    }

    #[test]
    fn category_seven_names_its_line() {
        let cfg = IngestConfig {
            min_ratings_per_user: 1,
            ..Default::default()
        };
        let err = read_ratings("1,153,4\n1,154,7\n".as_bytes(), &cfg).unwrap_err();
        match err {
            DataError::Parse { line, column, .. } => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn off_scale_value_rejected() {
        let cfg = IngestConfig {
            format: RatingFormat::ScaledCsv,
            min_ratings_per_user: 1,
            ..Default::default()
        };
        assert!(matches!(
            read_ratings("1,1,0.5\n".as_bytes(), &cfg),
            Err(DataError::Parse {
                line: 1,
                column: 3,
                ..
            })
        ));
    }

    #[test]
    fn lenient_mode_counts_rejections_and_drops() {
        let text = "1,1,4\n1,1,5\nx,2,3\n1,2,9\n1,3,2\n2,1,1\n";
        let (ds, report) = read_ratings(text.as_bytes(), &lenient(2)).unwrap();
        assert_eq!(report.rows_rejected, 3);
        assert_eq!(report.users_dropped, 1);
        assert_eq!(report.users_kept, 1);
        assert_eq!(report.diagnostics.len(), 3);
        assert!(report.diagnostics[0].starts_with("line 2"));
        assert_eq!(ds.get(1).unwrap().len(), 2);
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        assert!(matches!(
            read_ratings("1,1,4\n".as_bytes(), &lenient(5)),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn report_json_shape() {
        let r = LoadReport {
            users_kept: 3,
            users_dropped: 1,
            rows_rejected: 2,
            movies: 9,
            diagnostics: vec!["x".into()],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"users_kept":3,"users_dropped":1,"rows_rejected":2,"movies":9}"#
        );
    }

    #[test]
    fn save_is_sorted_lf() {
        let ds = Dataset::from_profiles([
            UserProfile::from_values(2, [(5, 0.2)]).unwrap(),
            UserProfile::from_values(1, [(9, 1.0), (3, 0.0)]).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_ratings(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,3,1\n1,9,6\n2,5,2\n");
    }

    #[test]
    fn threshold_partition() {
        let cfg = IngestConfig {
            min_ratings_per_user: 1,
            pool_id_threshold: Some(15000),
            ..Default::default()
        };
        let ds = Dataset::from_profiles([
            UserProfile::from_values(14999, [(1, 0.2)]).unwrap(),
            UserProfile::from_values(15001, [(1, 0.2)]).unwrap(),
        ])
        .unwrap();
        let p = partition(&ds, &cfg, 0).unwrap();
        assert_eq!(p.antigens.user_ids().collect::<Vec<_>>(), vec![14999]);
        assert_eq!(p.pool.user_ids().collect::<Vec<_>>(), vec![15001]);

        let low = IngestConfig {
            pool_id_threshold: Some(20000),
            ..cfg
        };
        let p = partition(&ds, &low, 0).unwrap();
        assert!(p.pool.is_empty());
        assert_eq!(p.antigens.len(), 2);
    }

    #[test]
    fn fraction_partition_is_seeded() {
        let ds = generate_synthetic(&SyntheticConfig {
            num_users: 50,
            ..Default::default()
        })
        .unwrap();
        let cfg = IngestConfig {
            min_ratings_per_user: 1,
            ..Default::default()
        };
        let a = partition(&ds, &cfg, 7).unwrap();
        let b = partition(&ds, &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pool.len(), 40);
        assert_eq!(a.antigens.len(), 10);
        assert!(a.pool.user_ids().all(|id| !a.antigens.contains(id)));
    }

    #[test]
    fn synthetic_is_deterministic_and_within_bounds() {
        let cfg = SyntheticConfig {
            num_users: 40,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, generate_synthetic(&cfg).unwrap());
        assert_eq!(a.len(), 40);
        for p in a.users() {
            assert!((25..=60).contains(&p.len()));
            assert!(p.ratings().keys().all(|&m| (1..=300).contains(&m)));
        }
        let other = generate_synthetic(&SyntheticConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn noiseless_clusters_agree_exactly() {
        let cfg = SyntheticConfig {
            num_users: 60,
            num_movies: 40,
            noise: 0.0,
            min_ratings_per_user: 10,
            max_ratings_per_user: 20,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let users: Vec<_> = ds.users().collect();
        for a in &users {
            for b in &users {
                if cfg.cluster_of(a.user_id()) == cfg.cluster_of(b.user_id())
                    && !common_movies(a, b).is_empty()
                {
                    assert_eq!(weighted_kappa(a, b).unwrap(), 1.0);
                }
            }
        }
    }

    #[test]
    fn mirrored_clusters_disagree_across() {
        let cfg = SyntheticConfig {
            num_users: 60,
            num_movies: 40,
            num_clusters: 2,
            noise: 0.0,
            min_ratings_per_user: 10,
            max_ratings_per_user: 20,
            mirrored_clusters: true,
            seed: 11,
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let users: Vec<_> = ds.users().collect();
        let mut checked = 0;
        for a in &users {
            for b in &users {
                if cfg.cluster_of(a.user_id()) != cfg.cluster_of(b.user_id())
                    && !common_movies(a, b).is_empty()
                {
                    assert!(weighted_kappa(a, b).unwrap() < 1.0);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn synthetic_config_validation() {
        for bad in [
            SyntheticConfig {
                num_clusters: 0,
                ..Default::default()
            },
            SyntheticConfig {
                noise: 1.5,
                ..Default::default()
            },
            SyntheticConfig {
                min_ratings_per_user: 0,
                ..Default::default()
            },
            SyntheticConfig {
                max_ratings_per_user: 400,
                ..Default::default()
            },
        ] {
            assert!(generate_synthetic(&bad).is_err());
        }
    }
}
