use meshsim::pareto::{
    dominates, pareto_front, pareto_front_brute_force, performance_score, ObjectivePoint,
};
use proptest::prelude::*;

fn points(max: usize) -> impl Strategy<Value = Vec<ObjectivePoint>> {
    // Coarse grids force ties and duplicates.
    prop::collection::vec((0u32..20, 1u32..40, 1u32..12), 0..max).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(id, (r, e, l))| ObjectivePoint {
                reliability: f64::from(r) / 20.0,
                energy: f64::from(e) * 0.37,
                latency: f64::from(l),
                id,
            })
            .collect()
    })
}

fn continuous(max: usize) -> impl Strategy<Value = Vec<ObjectivePoint>> {
    prop::collection::vec((0.0..1.0f64, 0.001..50.0f64, 1.0..50.0f64), 0..max).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(id, (reliability, energy, latency))| ObjectivePoint {
                reliability,
                energy,
                latency: latency.floor(),
                id,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force(pts in points(200)) {
        prop_assert_eq!(pareto_front(&pts), pareto_front_brute_force(&pts));
    }

    #[test]
    fn matches_brute_force_continuous(pts in continuous(200)) {
        prop_assert_eq!(pareto_front(&pts), pareto_front_brute_force(&pts));
    }

    #[test]
    fn log_energy_keeps_membership(pts in continuous(120)) {
        let logged: Vec<_> = pts.iter().map(|p| ObjectivePoint { energy: p.energy.ln(), ..*p }).collect();
        prop_assert_eq!(pareto_front(&pts), pareto_front(&logged));
    }

    #[test]
    fn front_is_idempotent(pts in points(150)) {
        let front = pareto_front(&pts);
        let sub: Vec<_> = front.iter().map(|&i| pts[i]).collect();
        prop_assert_eq!(pareto_front(&sub), (0..sub.len()).collect::<Vec<_>>());
    }

    #[test]
    fn non_front_points_are_covered(pts in points(150)) {
        let front = pareto_front(&pts);
        for (i, p) in pts.iter().enumerate() {
            if !front.contains(&i) {
                prop_assert!(front.iter().any(|&f| dominates(&pts[f], p)));
            }
        }
    }

    #[test]
    fn scores_lie_in_unit_interval_and_ignore_energy_units(pts in continuous(60)) {
        prop_assume!(!pts.is_empty());
        let scores = performance_score(&pts);
        prop_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let milli: Vec<_> = pts.iter().map(|p| ObjectivePoint { energy: p.energy * 1000.0, ..*p }).collect();
        for (a, b) in scores.iter().zip(performance_score(&milli)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn dominance_is_a_strict_partial_order() {
    let grid: Vec<ObjectivePoint> = (0..3)
        .flat_map(|r| (0..3).flat_map(move |e| (0..3).map(move |l| (r, e, l))))
        .enumerate()
        .map(|(id, (r, e, l))| ObjectivePoint {
            reliability: r as f64,
            energy: e as f64,
            latency: l as f64,
            id,
        })
        .collect();
    for a in &grid {
        assert!(!dominates(a, a));
        for b in &grid {
            assert!(!(dominates(a, b) && dominates(b, a)));
            for c in &grid {
                if dominates(a, b) && dominates(b, c) {
                    assert!(dominates(a, c));
                }
            }
        }
    }
}
