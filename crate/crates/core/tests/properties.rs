use oqkd_core::buffer::{simulate_buffer, BufferParams, BufferState, ChannelModel};
use oqkd_core::fgn::{autocov, HurstParam};
use oqkd_core::fpt::{bihill, BihillParams};
use oqkd_core::traffic::{synthesize, trend, TrafficParams};
use oqkd_core::wdm::{allocate, WdmConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autocov_is_symmetric_and_bounded(h in 0.5f64..0.99, lag in -10_000i64..10_000) {
        let h = HurstParam::new(h).unwrap();
        prop_assert_eq!(autocov(h, lag), autocov(h, -lag));
        prop_assert!(autocov(h, lag).abs() <= 1.0);
        prop_assert!(autocov(h, lag) >= 0.0);
    }

    #[test]
    fn trend_is_periodic_and_bounded(t in 0.0f64..1e4, alpha in 0.0f64..=1.0) {
        let m = trend(t, alpha, 24.0);
        prop_assert!(m >= 1.0 - alpha - 1e-12 && m <= 1.0 + 1e-12);
        prop_assert!((trend(t + 24.0, alpha, 24.0) - m).abs() < 1e-9);
    }

    #[test]
    fn allocation_respects_the_guard_band(load in 0.0f64..200.0, n in 1u32..200) {
        let a = allocate(load, n).unwrap();
        prop_assert!(a.n_classical <= n);
        prop_assert!(a.n_quantum <= n);
        prop_assert!(a.n_quantum == 0 || a.n_classical + a.guard() + a.n_quantum <= n);
        prop_assert_eq!(a.overflow, load > f64::from(n));
    }

    #[test]
    fn bihill_is_bounded(
        t in 1e-3f64..1e3, a1 in 0.01f64..10.0, gap in 0.01f64..100.0,
        m1 in 0.2f64..10.0, m2 in 0.2f64..10.0,
    ) {
        let v = bihill(t, &BihillParams::new(1.0, a1, m1, a1 + gap, m2)).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthesized_load_is_positive(seed in any::<u64>(), sigma in 0.0f64..1.0, alpha in 0.0f64..=1.0) {
        let tp = TrafficParams::new(10.0, alpha, sigma, HurstParam::new(0.8).unwrap()).unwrap();
        let trace = synthesize(&tp, 12.0, 1.0 / 60.0, 0.0, seed).unwrap();
        prop_assert!(trace.load.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn buffer_never_negative_and_states_alternate(
        seed in any::<u64>(),
        b0 in 0.01f64..0.5,
        model in prop_oneof![
            Just(ChannelModel::Discrete),
            Just(ChannelModel::ContinuousLower),
            Just(ChannelModel::ContinuousUpper),
        ],
    ) {
        let tp = TrafficParams::new(40.0, 0.875, 0.3, HurstParam::new(0.8).unwrap()).unwrap();
        let mut params = BufferParams::new(tp, WdmConfig::default(), b0).unwrap();
        params.channel_model = model;
        let trace = simulate_buffer(&params, 48.0, 1.0 / 60.0, seed).unwrap();
        prop_assert!(trace.levels_dku.iter().all(|&b| b >= 0.0));
        for w in trace.transitions.windows(2) {
            prop_assert_ne!(w[0].direction, w[1].direction);
        }
        for i in 1..trace.len() {
            if trace.states[i - 1] == BufferState::Recovery && trace.states[i] == BufferState::Recovery {
                prop_assert!(trace.levels_dku[i] >= trace.levels_dku[i - 1]);
            }
        }
    }
}
