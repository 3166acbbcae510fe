#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use immunorec::domain::{Rating, UserProfile};

pub fn random_profile(rng: &mut ChaCha8Rng, user_id: u32, movies: u32) -> UserProfile {
    let count = rng.gen_range(2..=movies);
    let mut ids: Vec<u32> = (1..=movies).collect();
    for i in 0..count as usize {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    UserProfile::from_ratings(
        user_id,
        ids[..count as usize]
            .iter()
            .map(|&m| (m, Rating::from_category(rng.gen_range(1..=6)).unwrap())),
    )
    .unwrap()
}

/// `cases` seeded pairs, each sharing at least two movies.
pub fn pairs(cases: u64) -> impl Iterator<Item = (UserProfile, UserProfile)> {
    (0..cases).map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let a = random_profile(&mut rng, 1, 30);
            let b = random_profile(&mut rng, 2, 30);
            if shared(&a, &b).len() >= 2 {
                return (a, b);
            }
        }
    })
}

/// Category pairs for the movies both users rated.
pub fn shared(a: &UserProfile, b: &UserProfile) -> Vec<(i32, i32)> {
    a.ratings()
        .iter()
        .filter_map(|(m, ra)| {
            b.rating(*m)
                .map(|rb| (ra.category() as i32, rb.category() as i32))
        })
        .collect()
}

/// Weighted kappa as an exact fraction: 5 credits for a match, one less per
/// category of distance, over 5 credits per common movie.
pub fn wk_oracle(a: &UserProfile, b: &UserProfile) -> f64 {
    let s = shared(a, b);
    let credit: i32 = s.iter().map(|(x, y)| 5 - (x - y).abs()).sum();
    credit as f64 / (5 * s.len()) as f64
}

/// (concordant, discordant, ignored) by walking every pair of common movies.
pub fn kt_oracle(a: &UserProfile, b: &UserProfile) -> (u64, u64, u64) {
    let s = shared(a, b);
    let (mut c, mut d, mut ignored) = (0, 0, 0);
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let da = s[i].0 - s[j].0;
            let db = s[i].1 - s[j].1;
            if da == 0 && db == 0 {
                c += 1;
            } else if da == 0 || db == 0 {
                ignored += 1;
            } else if (da > 0) == (db > 0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c, d, ignored)
}
