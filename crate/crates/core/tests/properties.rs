//! Property tests over random scenes, rewards and networks.

mod common;

use ndarray::Array2;
use palcas::action::{ACCEL_MAX, ACCEL_MIN};
use palcas::nn::{Mlp, MlpSpec};
use palcas::observe::{self, OBS_DIM};
use palcas::pdqn::{self, greedy_index};
use palcas::reward::{self, PriorityInputs, RewardWeights};
use palcas::road::RoadNetwork;
use palcas::rss::RssParams;
use palcas::scene::Scene;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observation_ignores_ids_and_storage_order(seed in any::<u64>(), n in 1usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = RoadNetwork::from_layout(&common::random_layout(&mut rng)).unwrap();
        let vehicles = common::random_vehicles(&mut rng, &net, n);

        let mut ids: Vec<u64> = vehicles.iter().map(|v| v.id * 7 + 100).collect();
        ids.shuffle(&mut rng);
        let mut relabeled = vehicles.clone();
        for (v, id) in relabeled.iter_mut().zip(&ids) {
            v.id = *id;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<_> = order.iter().map(|&i| relabeled[i].clone()).collect();

        let (s0, s1) = (Scene::new(&net, &vehicles), Scene::new(&net, &shuffled));
        let (c0, c1) = (observe::cluster_stats(&net, &vehicles), observe::cluster_stats(&net, &shuffled));
        for (j, &i) in order.iter().enumerate() {
            let a = observe::encode(&s0, i, &c0);
            let b = observe::encode(&s1, j, &c1);
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn exit_distance_never_grows_moving_forward(seed in any::<u64>(), steps in prop::collection::vec(0.0..40.0f64, 1..20)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = RoadNetwork::from_layout(&common::random_layout(&mut rng)).unwrap();
        let mut car = common::random_vehicles(&mut rng, &net, 1).remove(0);
        let mut last = net.distance_to_exit(&car);
        for dx in steps {
            car.x += dx;
            let d = net.distance_to_exit(&car);
            prop_assert!(d <= last && d >= 0.0);
            last = d;
        }
    }

    #[test]
    fn lane_change_reward_is_bounded(
        d in 0.0..5000.0f64,
        v in 0.0..45.0f64,
        lanes in 2u8..=5,
        n_frac in 0.0..1.0f64,
        ttc in prop::option::of(0.0..10.0f64),
    ) {
        let n = ((lanes - 1) as f64 * n_frac).round() as u8;
        let t = reward::priority_lane_change_reward(
            &PriorityInputs { distance_to_exit: d, v_ego: v, remaining_lanes: n, lane_count: lanes, min_projected_ttc: ttc.unwrap_or(f64::INFINITY) },
            &RssParams::default(),
            &RewardWeights::default(),
        );
        prop_assert!((-1.0..=0.0).contains(&t.urgency));
        prop_assert!((0.0..=1.0).contains(&t.scaling));
        prop_assert!(t.staging > -1.0 && t.staging <= 0.0);
        prop_assert!(t.total > -2.0 && t.total <= 0.0);
        if n == 0 {
            prop_assert_eq!(t.urgency * t.scaling, 0.0);
        }
    }

    #[test]
    fn greedy_choice_ignores_a_common_shift(q in prop::array::uniform4(-50.0..50.0f64), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        // a shift can merge near-ties through rounding; only strict winners must survive
        let best = greedy_index(&q);
        let margin = q.iter().enumerate().filter(|&(i, _)| i != best).map(|(_, x)| q[best] - x).fold(f64::INFINITY, f64::min);
        if margin > 1e-9 {
            prop_assert_eq!(greedy_index(&shifted), best);
        }
    }

    #[test]
    fn acceleration_stays_in_range_for_any_weights(seed in any::<u64>(), scale in 1.0..1e4f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = |input, output| MlpSpec { input, hidden: vec![16, 16], output, dropout: 0.1 };
        let mut param = Mlp::new(spec(OBS_DIM, 1), &mut rng).unwrap();
        let q = Mlp::new(spec(OBS_DIM + 1, 4), &mut rng).unwrap();
        for t in param.trainable_mut() {
            t.iter_mut().for_each(|w| *w *= scale);
        }
        let states = Array2::from_shape_fn((8, OBS_DIM), |(i, k)| (((i * 31 + k * 17) % 23) as f64 / 11.0) - 1.0);
        // the network output itself, before any action-level clamp
        let (accel, _) = pdqn::evaluate(&q, &param, &states);
        for a in accel {
            prop_assert!((ACCEL_MIN..=ACCEL_MAX).contains(&a));
        }
    }
}
