use proptest::prelude::*;
use teleframe::metrics::{combined_objective, trajectory_error, trajectory_error_default, TrialOutcome};
use teleframe::scenarios::Point2;

fn curve(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec(prop::array::uniform2(-0.2f64..0.2), n)
}

fn rigid(p: &Point2, theta: f64, t: [f64; 2]) -> Point2 {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1]]
}

/// A full participants x conditions table with random time and error.
fn table() -> impl Strategy<Value = Vec<TrialOutcome>> {
    (1usize..6, 2usize..5).prop_flat_map(|(np, nc)| {
        prop::collection::vec((1.0f64..90.0, 0.0f64..2.0), np * nc).prop_map(move |vals| {
            vals.into_iter()
                .enumerate()
                .map(|(i, (time_s, error))| TrialOutcome {
                    participant: format!("p{}", i / nc),
                    condition: format!("c{}", i % nc),
                    time_s,
                    error,
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn trajectory_error_is_rigid_invariant(
        pen in curve(2..8),
        target in curve(2..8),
        theta in -3.2f64..3.2,
        t in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let pen2: Vec<_> = pen.iter().map(|p| rigid(p, theta, t)).collect();
        let target2: Vec<_> = target.iter().map(|p| rigid(p, theta, t)).collect();
        // the bounding box is not rotation invariant, so pin the normalizer
        let d = 0.3;
        let a = trajectory_error(&pen, &target, d).unwrap();
        let b = trajectory_error(&pen2, &target2, d).unwrap();
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-9);
        prop_assert!((a.incompleteness - b.incompleteness).abs() < 1e-9);
        prop_assert!((a.total - b.total).abs() < 1e-9);
        prop_assert!((a.total - a.accuracy - a.incompleteness).abs() < 1e-12);
    }

    #[test]
    fn completeness_never_drops_when_the_trace_grows(pen in curve(1..8), more in curve(1..8), target in curve(2..8)) {
        let before = trajectory_error_default(&pen, &target).unwrap();
        let longer: Vec<_> = pen.iter().chain(&more).copied().collect();
        let after = trajectory_error_default(&longer, &target).unwrap();
        prop_assert!(after.completeness() >= before.completeness());
    }

    #[test]
    fn relatives_ignore_affine_rescaling(rows in table(), scale in 0.1f64..10.0, shift in -50.0f64..50.0, column in any::<bool>()) {
        let base = combined_objective(&rows).unwrap();
        let scaled: Vec<_> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if column { r.time_s = r.time_s * scale + shift } else { r.error = r.error * scale + shift }
                r
            })
            .collect();
        let other = combined_objective(&scaled).unwrap();
        for (a, b) in base.rows.iter().zip(&other.rows) {
            prop_assert!((a.relative_combined - b.relative_combined).abs() < 1e-9);
        }
    }

    #[test]
    fn relatives_sum_to_zero_per_participant(rows in table()) {
        let m = combined_objective(&rows).unwrap();
        let mut sums = std::collections::BTreeMap::<&str, f64>::new();
        for r in &m.rows {
            *sums.entry(&r.participant).or_default() += r.relative_combined;
            prop_assert!((-2.0..=2.0).contains(&r.relative_combined));
        }
        for (p, s) in sums {
            prop_assert!(s.abs() < 1e-9, "{p}: {s}");
        }
    }
}
