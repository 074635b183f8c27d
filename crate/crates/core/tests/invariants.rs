use std::sync::Arc;

use proptest::prelude::*;

use equidist::measures::fiber_measure;
use equidist::operators::pushforward;
use equidist::projective::fs_distance;
use equidist::rng::task_rng;
use equidist::test_functions::builtin_suite;
use equidist::{FiberSolver, HomogeneousMap, MapIterate, ProjectivePoint, SolverSettings};

const K1_PRESETS: [&str; 4] = ["z2", "z3", "basilica", "cheb"];

fn solver(name: &str) -> Arc<FiberSolver> {
    let map = Arc::new(HomogeneousMap::preset(name).unwrap());
    Arc::new(FiberSolver::new(map, SolverSettings::default()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fibers_conserve_mass_and_push_forward(preset in 0usize..4, n in 1usize..6, seed in any::<u64>()) {
        let s = solver(K1_PRESETS[preset]);
        let a = ProjectivePoint::random(1, &mut task_rng(seed, 0));
        let tree = s.backward_tree(&a, n).unwrap();
        let d = s.map().degree() as u128;
        prop_assert_eq!(tree.total_multiplicity(), d.pow(n as u32));
        let fn_ = MapIterate::new(s.map().clone(), n);
        for (y, _) in &tree.points {
            prop_assert!(fs_distance(&fn_.evaluate(y).unwrap(), &a).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn torus_fibers_conserve_mass(seed in any::<u64>()) {
        let s = solver("torus2");
        let a = ProjectivePoint::random(2, &mut task_rng(seed, 0));
        let f = s.fiber(&a).unwrap();
        prop_assert_eq!(f.total_multiplicity(), 4);
        for (y, _) in &f.points {
            prop_assert!(fs_distance(&s.map().evaluate(y).unwrap(), &a).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn iterates_compose(preset in 0usize..4, m in 1usize..4, n in 1usize..4, seed in any::<u64>()) {
        let f = Arc::new(HomogeneousMap::preset(K1_PRESETS[preset]).unwrap());
        let x = ProjectivePoint::random(1, &mut task_rng(seed, 1));
        let lhs = MapIterate::new(f.clone(), m + n).evaluate(&x).unwrap();
        let rhs = MapIterate::new(f.clone(), m).evaluate(&MapIterate::new(f, n).evaluate(&x).unwrap()).unwrap();
        prop_assert!(lhs.distance(&rhs) <= 1e-9);
    }

    #[test]
    fn fiber_measure_is_dual_to_pushforward(preset in 0usize..4, n in 1usize..5, seed in any::<u64>()) {
        let s = solver(K1_PRESETS[preset]);
        let a = ProjectivePoint::random(1, &mut task_rng(seed, 2));
        let nu = fiber_measure(&s, &a, n).unwrap();
        let scale = (s.map().degree() as f64).powi(n as i32);
        for phi in builtin_suite(1).unwrap() {
            let push = pushforward(&phi, s.clone(), n).unwrap().eval(&a).unwrap();
            prop_assert!((nu.pair(&phi) * scale - push).abs() <= 1e-8 * scale.max(1.0), "{}", phi.label);
        }
    }
}
