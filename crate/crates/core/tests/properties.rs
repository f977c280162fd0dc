use proptest::prelude::*;

use rlshape::geometry::{build_airfoil, AirfoilSpec};
use rlshape::grid_mdp::{make_neighborhood, transition_matrix, ActionSet, GridPoint, ParameterGrid};
use rlshape::reduction::{resize_neighborhood, ResizePolicy};
use rlshape::value::{fit_surrogate, value_fixed_point, CoolingSchedule, ScheduleKind};

fn grid_9x9() -> ParameterGrid {
    ParameterGrid::new(vec![0.0, 0.0], vec![0.8, 0.8], vec![0.1, 0.1]).unwrap()
}

proptest! {
    #[test]
    fn airfoil_is_closed_and_upper_above_lower(f in 1.0f64..4.0, b in 1.05f64..4.5) {
        let spec = AirfoilSpec::new(f, b).unwrap();
        let shape = build_airfoil(&spec, 65).unwrap();
        prop_assert_eq!(shape.z_upper[0], 0.0);
        prop_assert_eq!(shape.z_lower[0], 0.0);
        prop_assert!((shape.z_upper[64] - shape.z_lower[64]).abs() < 1e-15);
        for k in 1..64 {
            prop_assert!(shape.z_upper[k] > shape.z_lower[k]);
        }
    }

    #[test]
    fn grid_locate_inverts_point(i in 0usize..9, j in 0usize..9) {
        let g = grid_9x9();
        let p = GridPoint(vec![i, j]);
        prop_assert_eq!(g.locate(&g.point(&p)).unwrap(), p);
    }

    #[test]
    fn kernel_rows_are_stochastic_and_supported(
        ci in 0usize..9, cj in 0usize..9,
        ri in 0usize..4, rj in 0usize..4,
        mask in prop::collection::vec(any::<bool>(), 2),
        beta in 0.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let g = grid_9x9();
        let nb = make_neighborhood(&g, &GridPoint(vec![ci, cj]), &[ri, rj]).unwrap();
        let values: Vec<f64> = (0..nb.len())
            .map(|k| ((k as u64).wrapping_mul(seed | 1) % 997) as f64 / 97.0)
            .collect();
        let actions = ActionSet::from_mask(mask);
        let model = transition_matrix(&nb, &values, &actions, beta).unwrap();
        for (s, row) in model.rows.iter().enumerate() {
            let total: f64 = row.iter().map(|e| e.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let from = &nb.members()[s];
            for &(t, p) in row {
                prop_assert!(p >= 0.0);
                let to = &nb.members()[t];
                let changed: Vec<usize> = (0..2).filter(|&i| from.0[i] != to.0[i]).collect();
                prop_assert!(changed.len() <= 1);
                if let Some(&i) = changed.first() {
                    prop_assert!(actions.changeable_dims().contains(&i));
                    prop_assert_eq!(from.0[i].abs_diff(to.0[i]), 1);
                }
            }
            // lower target value never gets a smaller probability
            for &(a, pa) in row {
                for &(b, pb) in row {
                    if values[a] <= values[b] {
                        prop_assert!(pa >= pb - 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn surrogate_recovers_quadratics(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
        d in -5.0f64..5.0, e in -5.0f64..5.0, v0 in -10.0f64..10.0,
    ) {
        let center = GridPoint(vec![4, 4]);
        let q = |p: &GridPoint| {
            let x = p.0[0] as f64 - 4.0;
            let y = p.0[1] as f64 - 4.0;
            v0 + a * x * x + b * y * y + c * x * y + d * x + e * y
        };
        let samples: Vec<(GridPoint, f64)> = [(3, 3), (3, 5), (5, 3), (5, 5), (4, 6), (6, 4)]
            .iter()
            .map(|&(i, j)| {
                let p = GridPoint(vec![i, j]);
                let v = q(&p);
                (p, v)
            })
            .collect();
        let s = fit_surrogate(&center, v0, &samples).unwrap();
        for i in 2..7 {
            for j in 2..7 {
                let p = GridPoint(vec![i, j]);
                prop_assert!((s.eval(&p) - q(&p)).abs() < 1e-8 * (1.0 + q(&p).abs()));
            }
        }
    }

    #[test]
    fn value_fixed_point_is_bounded(
        values in prop::collection::vec(0.0f64..10.0, 25),
        gamma in 0.0f64..0.95,
        t0 in 0.01f64..1.0,
    ) {
        let g = ParameterGrid::new(vec![0.0, 0.0], vec![4.0, 4.0], vec![1.0, 1.0]).unwrap();
        let nb = make_neighborhood(&g, &GridPoint(vec![2, 2]), &[2, 2]).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let schedule = CoolingSchedule::new(ScheduleKind::StandardLog, t0);
        let t = value_fixed_point(&nb, &values, &ActionSet::all(2), gamma, &schedule, 1e-3, 20).unwrap();
        for v in &t.values {
            prop_assert!(*v >= lo / (1.0 - gamma) - 1e-9 && *v <= hi / (1.0 - gamma) + 1e-9);
        }
    }

    #[test]
    fn match_count_never_grows_the_box(
        ci in 0usize..9, cj in 0usize..9,
        r in 1usize..4,
        stable in prop::collection::vec(any::<bool>(), 2),
    ) {
        let g = grid_9x9();
        let c = GridPoint(vec![ci, cj]);
        let radii = resize_neighborhood(&g, &c, &[r, r], &stable, ResizePolicy::MatchCount);
        let count: usize = radii.iter().map(|&x| 2 * x + 1).product();
        prop_assert!(count <= (2 * r + 1).pow(2));
        for (i, s) in stable.iter().enumerate() {
            if *s && !stable.iter().all(|&x| x) {
                prop_assert_eq!(radii[i], 0);
            }
        }
    }
}
