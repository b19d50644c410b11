use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;

use linres::optimizer::{feasible, perturb, upper_bound};
use linres::reservoir::{decouple, generate_random_topology, transfer_response, ModalReservoir};
use linres::signals::{extract_common_frequencies, sample, MultiSineSignal};

fn bin_tones() -> impl Strategy<Value = Vec<(u32, f64, f64, f64, f64)>> {
    prop::collection::btree_set(1u32..120, 1..5).prop_flat_map(|bins| {
        let n = bins.len();
        (
            Just(bins.into_iter().collect::<Vec<_>>()),
            prop::collection::vec((0.5f64..2.5, -3.0f64..3.0, 0.5f64..2.5, -3.0f64..3.0), n),
        )
            .prop_map(|(b, rest)| b.into_iter().zip(rest).map(|(b, (a1, p1, a2, p2))| (b, a1, p1, a2, p2)).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bin_centred_tones_are_recovered(tones in bin_tones(), t0 in -5.0f64..5.0) {
        let len = 1024;
        let window = 40.0;
        let tau = window / len as f64;
        // Even bins only: neighbouring bins cannot both be local maxima.
        let omega = |b: u32| 2.0 * PI * (2 * b) as f64 / window;
        let u = MultiSineSignal::from_triples(&tones.iter().map(|t| (omega(t.0), t.1, t.2)).collect::<Vec<_>>()).unwrap();
        let y = MultiSineSignal::from_triples(&tones.iter().map(|t| (omega(t.0), t.3, t.4)).collect::<Vec<_>>()).unwrap();
        let found = extract_common_frequencies(&sample(&u, len, tau, t0).unwrap(), &sample(&y, len, tau, t0).unwrap(), tones.len()).unwrap();
        for (truth, got) in u.tones().iter().zip(found.input.tones()).chain(y.tones().iter().zip(found.target.tones())) {
            prop_assert!((truth.omega - got.omega).abs() < 1e-12);
            prop_assert!((truth.amplitude - got.amplitude).abs() < 1e-9);
            let dphase = (truth.phase - got.phase).sin().abs();
            prop_assert!(dphase < 1e-9);
        }
    }

    #[test]
    fn decomposition_reconstructs_the_coupling(n in 1usize..15, seed in any::<u64>()) {
        let top = generate_random_topology(n, 0.5, true, -0.1, 6.0, seed).unwrap();
        let (modal, v) = decouple(&top).unwrap();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(modal.lambdas()));
        prop_assert!((&v * lambda * v.transpose() - top.adjacency()).amax() < 1e-10);
        prop_assert!((modal.lambdas()[n - 1] + 0.1).abs() < 1e-10);
        prop_assert!(modal.lambdas().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gain_falls_and_lag_grows_with_frequency(lambda in -20.0f64..=0.0, c in 0.1f64..3.0, w in 0.01f64..20.0) {
        let modal = ModalReservoir::new(vec![lambda], vec![c], 6.0).unwrap();
        let r = transfer_response(&modal, &[w, 1.5 * w]).unwrap();
        prop_assert!(r.magnitude[(1, 0)] < r.magnitude[(0, 0)]);
        prop_assert!(r.phase[(1, 0)] > r.phase[(0, 0)] && r.phase[(1, 0)] < PI / 2.0);
        prop_assert!(r.magnitude[(0, 0)] <= c / (1.0 - lambda) + 1e-12);
    }

    #[test]
    fn perturbation_stays_feasible_and_below(lambdas in prop::collection::vec(-20.0f64..0.0, 1..12), eps in 0.0f64..5.0, seed in any::<u64>()) {
        let ub = upper_bound(6.0, 5.0, 1e-6);
        let p = perturb(&lambdas, eps, ub, seed).unwrap();
        prop_assert!(feasible(&p, 6.0, 5.0, 1e-6));
        for (a, b) in lambdas.iter().zip(&p) {
            prop_assert!(*b <= a.min(ub) + 1e-15 && *b >= a - eps - 1e-12);
        }
    }
}
