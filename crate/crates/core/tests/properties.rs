use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use immunorec::affinity::{build_frequency_table, kendalls_tau, pearson_baseline, weighted_kappa};
use immunorec::datastore::{
    load_ratings, partition, read_ratings, save_ratings, write_ratings, IngestConfig, RatingFormat,
};
use immunorec::domain::{Dataset, Rating, UserProfile};
use immunorec::immune_network::{init_population, ImmuneParams};
use immunorec::recommender::predict_rating;
use immunorec::{AffinityMeasure, FinalPopulation};

fn rating() -> impl Strategy<Value = Rating> {
    (1i64..=6).prop_map(|c| Rating::from_category(c).unwrap())
}

/// Two profiles over movie ids 0..40 with a guaranteed common core.
fn profile_pair() -> impl Strategy<Value = (UserProfile, UserProfile)> {
    (
        prop::collection::btree_map(0u32..40, rating(), 2..30),
        prop::collection::btree_map(0u32..40, rating(), 2..30),
        prop::collection::vec(rating(), 2),
    )
        .prop_map(|(mut a, b_only, shared)| {
            // movies 40 and 41 are always rated by both
            a.insert(40, shared[0]);
            a.insert(41, shared[1]);
            let mut b = b_only;
            b.insert(40, shared[1]);
            b.insert(41, shared[0]);
            (
                UserProfile::from_ratings(1, a).unwrap(),
                UserProfile::from_ratings(2, b).unwrap(),
            )
        })
}

fn dataset(max_users: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(
        prop::collection::btree_map(1u32..31, rating(), 1..15),
        1..max_users,
    )
    .prop_map(|users| {
        Dataset::from_profiles(
            users
                .into_iter()
                .enumerate()
                .map(|(i, r)| UserProfile::from_ratings(i as u32 + 1, r).unwrap()),
        )
        .unwrap()
    })
}

fn relabel(p: &UserProfile, map: &BTreeMap<u32, u32>) -> UserProfile {
    UserProfile::from_ratings(p.user_id(), p.ratings().iter().map(|(m, r)| (map[m], *r))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weighted_kappa_symmetric_and_bounded((a, b) in profile_pair()) {
        let ab = weighted_kappa(&a, &b).unwrap();
        prop_assert_eq!(ab, weighted_kappa(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(weighted_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn frequency_table_transposes((a, b) in profile_pair()) {
        let t = build_frequency_table(&a, &b);
        prop_assert_eq!(t.transpose(), build_frequency_table(&b, &a));
        let total: u32 = t.counts().iter().flatten().sum();
        prop_assert_eq!(total, t.observations());
    }

    #[test]
    fn kendalls_tau_partitions_pairs((a, b) in profile_pair()) {
        let kt = kendalls_tau(&a, &b).unwrap();
        let n = build_frequency_table(&a, &b).observations() as u64;
        prop_assert_eq!(kt.concordant + kt.discordant + kt.ignored, n * (n - 1) / 2);
        prop_assert_eq!(kt.total_pairs, n * (n - 1) / 2);
        prop_assert!((-1.0..=1.0).contains(&kt.tau));
        let ba = kendalls_tau(&b, &a).unwrap();
        prop_assert_eq!((kt.concordant, kt.discordant, kt.ignored), (ba.concordant, ba.discordant, ba.ignored));
        prop_assert_eq!(kt.tau, ba.tau);
    }

    #[test]
    fn pearson_symmetric_and_bounded((a, b) in profile_pair()) {
        let p = pearson_baseline(&a, &b).unwrap();
        prop_assert!((p.value - pearson_baseline(&b, &a).unwrap().value).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&p.value));
    }

    #[test]
    fn measures_ignore_movie_labels((a, b) in profile_pair(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut targets: Vec<u32> = (1000..1042).collect();
        targets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let map: BTreeMap<u32, u32> = (0..42).zip(targets).collect();
        let (ra, rb) = (relabel(&a, &map), relabel(&b, &map));
        prop_assert_eq!(weighted_kappa(&a, &b).unwrap(), weighted_kappa(&ra, &rb).unwrap());
        let (k, rk) = (kendalls_tau(&a, &b).unwrap(), kendalls_tau(&ra, &rb).unwrap());
        prop_assert_eq!((k.concordant, k.discordant, k.ignored), (rk.concordant, rk.discordant, rk.ignored));
    }

    #[test]
    fn unstimulated_antibodies_decay_geometrically(
        k3 in 0.0f64..1.0, dt in 0.01f64..1.0, x0 in 0.1f64..5.0, n in 1usize..8,
    ) {
        let pool = Dataset::from_profiles((1..=n as u32 + 1).map(|u| UserProfile::from_ratings(u, [(1, Rating::GOOD)]).unwrap())).unwrap();
        let antigen = pool.get(1).unwrap();
        let params = ImmuneParams { k3, dt, initial_concentration: x0, population_size: n, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = init_population(antigen, &pool, &AffinityMeasure::weighted_kappa(), &params, &mut rng).unwrap();
        state.set_affinities(&vec![0.0; n], &vec![vec![0.0; n]; n]);
        state.concentration_step(&params);
        for ab in state.population() {
            prop_assert!((ab.concentration - x0 * (1.0 - k3 * dt)).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrations_never_negative(k2 in 0.0f64..50.0, k3 in 0.0f64..5.0, m in prop::collection::vec(0.0f64..1.0, 4)) {
        let pool = Dataset::from_profiles((1..=5).map(|u| UserProfile::from_ratings(u, [(1, Rating::GOOD)]).unwrap())).unwrap();
        let params = ImmuneParams { k2, k3, population_size: 4, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = init_population(pool.get(1).unwrap(), &pool, &AffinityMeasure::weighted_kappa(), &params, &mut rng).unwrap();
        state.set_affinities(&m, &vec![vec![1.0; 4]; 4]);
        for _ in 0..5 {
            state.concentration_step(&params);
            prop_assert!(state.population().iter().all(|ab| ab.concentration >= 0.0));
        }
    }

    #[test]
    fn stronger_stimulation_grows_faster(m_lo in 0.0f64..1.0, gap in 0.001f64..1.0, off in 0.0f64..1.0) {
        let pool = Dataset::from_profiles((1..=3).map(|u| UserProfile::from_ratings(u, [(1, Rating::GOOD)]).unwrap())).unwrap();
        let params = ImmuneParams { population_size: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = init_population(pool.get(1).unwrap(), &pool, &AffinityMeasure::weighted_kappa(), &params, &mut rng).unwrap();
        state.set_affinities(&[m_lo, m_lo + gap], &[vec![1.0, off], vec![off, 1.0]]);
        state.concentration_step(&params);
        let x = state.population();
        prop_assert!(x[1].concentration > x[0].concentration);
    }

    #[test]
    fn prediction_is_scale_free_and_bounded(
        ratings in prop::collection::vec(rating(), 1..10),
        weights in prop::collection::vec(0.01f64..10.0, 10),
        scale in 0.01f64..100.0,
    ) {
        let profiles: Vec<UserProfile> = ratings.iter().enumerate()
            .map(|(i, r)| UserProfile::from_ratings(i as u32 + 1, [(7, *r)]).unwrap())
            .collect();
        let pop = FinalPopulation::from_weighted(profiles.iter().zip(weights.iter().copied()));
        let scaled = FinalPopulation::from_weighted(profiles.iter().zip(weights.iter().map(|w| w * scale)));
        let p = predict_rating(&pop, 7).unwrap();
        let q = predict_rating(&scaled, 7).unwrap();
        prop_assert!((p.value - q.value).abs() < 1e-12);
        let lo = ratings.iter().map(|r| r.value()).fold(f64::INFINITY, f64::min);
        let hi = ratings.iter().map(|r| r.value()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p.value >= lo - 1e-12 && p.value <= hi + 1e-12);
        prop_assert_eq!(p.support, ratings.len());
    }

    #[test]
    fn write_then_read_round_trips(ds in dataset(12), scaled in any::<bool>()) {
        let mut buf = Vec::new();
        write_ratings(&ds, &mut buf).unwrap();
        let cfg = IngestConfig { min_ratings_per_user: 1, ..Default::default() };
        let (back, report) = read_ratings(buf.as_slice(), &cfg).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(report.rows_rejected, 0);
        if scaled {
            // the scaled reader accepts the same ratings written as scale points
            let text: String = ds.users()
                .flat_map(|p| p.ratings().iter().map(move |(m, r)| format!("{},{},{}\n", p.user_id(), m, r.value())))
                .collect();
            let cfg = IngestConfig { format: RatingFormat::ScaledCsv, min_ratings_per_user: 1, ..Default::default() };
            prop_assert_eq!(read_ratings(text.as_bytes(), &cfg).unwrap().0, ds);
        }
    }

    #[test]
    fn partition_is_disjoint_and_complete(ds in dataset(40), seed in any::<u64>(), threshold in prop::option::of(0u32..40)) {
        let cfg = IngestConfig { pool_id_threshold: threshold, min_ratings_per_user: 1, ..Default::default() };
        let parts = partition(&ds, &cfg, seed).unwrap();
        prop_assert_eq!(parts.pool.len() + parts.antigens.len(), ds.len());
        for id in ds.user_ids() {
            prop_assert!(parts.pool.contains(id) != parts.antigens.contains(id));
        }
        if let Some(t) = threshold {
            prop_assert!(parts.pool.user_ids().all(|id| id > t));
        }
    }
}

#[test]
fn save_then_load_round_trips_on_disk() {
    let ds = Dataset::from_profiles((1..=30).map(|u| {
        UserProfile::from_ratings(
            u,
            (0..25).map(|m| (m * 3 + u, Rating::ALL[((m + u) % 6) as usize])),
        )
        .unwrap()
    }))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ratings.csv");
    save_ratings(&ds, &path).unwrap();
    let (back, report) = load_ratings(&path, &IngestConfig::default()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(report.users_kept, 30);
}
