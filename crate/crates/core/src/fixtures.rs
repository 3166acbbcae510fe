//! Small hand-checked profiles used by tests, benches and the CLI's
//! self-check. The two users below share eight movies.

use crate::domain::UserProfile;

pub fn worked_example_user1() -> UserProfile {
    UserProfile::from_values(
        1,
        [
            (153, 0.6),
            (253, 0.6),
            (296, 1.0),
            (349, 0.8),
            (355, 0.4),
            (457, 1.0),
            (553, 1.0),
            (595, 1.0),
        ],
    )
    .expect("fixture is on-scale")
}

pub fn worked_example_user2() -> UserProfile {
    UserProfile::from_values(
        2,
        [
            (153, 0.8),
            (253, 0.8),
            (296, 0.4),
            (349, 0.8),
            (355, 0.0),
            (457, 0.8),
            (553, 0.6),
            (595, 0.8),
        ],
    )
    .expect("fixture is on-scale")
}
