//! Final population membership on the standard synthetic dataset. Set
//! `IMMUNOREC_BLESS=1` to rewrite the golden file after an intended change.

use std::path::Path;

use serde::{Deserialize, Serialize};

use immunorec::datastore::{generate_synthetic, SyntheticConfig};
use immunorec::{run_to_convergence, AffinityMeasure, ImmuneParams};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Run {
    antigen: u32,
    measure: String,
    converged: bool,
    iterations: usize,
    members: Vec<(u32, f64)>,
}

#[test]
fn membership_matches_golden() {
    let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let params = ImmuneParams::default();
    let mut runs = Vec::new();
    for antigen in [1u32, 2, 3, 250, 500] {
        for measure in [
            AffinityMeasure::weighted_kappa(),
            AffinityMeasure::kendalls_tau(),
        ] {
            let pop = run_to_convergence(data.get(antigen).unwrap(), &data, &measure, &params, 42)
                .unwrap();
            runs.push(Run {
                antigen,
                measure: measure.kind.short_name().to_string(),
                converged: pop.converged,
                iterations: pop.iterations_used,
                members: pop.summary(),
            });
        }
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/membership_seed42.json");
    if std::env::var_os("IMMUNOREC_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string(&runs).unwrap() + "\n").unwrap();
    }
    let golden: Vec<Run> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(golden.len(), runs.len());
    for (g, r) in golden.iter().zip(&runs) {
        assert_eq!(
            (g.antigen, &g.measure, g.converged, g.iterations),
            (r.antigen, &r.measure, r.converged, r.iterations)
        );
        let ids = |m: &[(u32, f64)]| m.iter().map(|p| p.0).collect::<Vec<_>>();
        assert_eq!(
            ids(&g.members),
            ids(&r.members),
            "antigen {} {}",
            r.antigen,
            r.measure
        );
        for (a, b) in g.members.iter().zip(&r.members) {
            assert!(
                (a.1 - b.1).abs() < 1e-9,
                "antigen {} member {}",
                r.antigen,
                a.0
            );
        }
    }
}
