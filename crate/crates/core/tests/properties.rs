//! Randomized invariant checks for the step map, closed forms, measures,
//! and intervals.

use inertdrift_core::measure::{tv_distance, EmpiricalMeasure, GridSpec};
use inertdrift_core::model::{
    derive_renewal_config, interior_hitting_time, interior_velocity, ModelParams, SystemState,
};
use inertdrift_core::noise::NoiseSource;
use inertdrift_core::stats::{wilson_interval, Z_99};
use inertdrift_core::{reflect_step, Stepper};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (0.05f64..20.0, 0.05f64..20.0).prop_map(|(gamma, g)| ModelParams::new(gamma, g).unwrap())
}

proptest! {
    #[test]
    fn step_map_invariants(
        gamma in 0.05f64..20.0,
        g in 0.05f64..20.0,
        h in 0.0f64..10.0,
        v_frac in 0.001f64..5.0,
        db in -1.0f64..1.0,
        dt in 1e-6f64..0.1,
    ) {
        let p = ModelParams::new(gamma, g).unwrap();
        // v anywhere above the floor
        let v = p.velocity_floor() + v_frac;
        let st = SystemState::initial(h, v);
        let (next, dl) = reflect_step(&st, &p, db, dt).unwrap();
        prop_assert!(next.h >= 0.0);
        prop_assert!(dl >= 0.0);
        prop_assert!(dl * next.h == 0.0, "complementarity: dl={dl} h={}", next.h);
        let residual = next.h - st.h - st.v * dt + db - dl;
        prop_assert!(residual.abs() <= 1e-12, "identity residual {residual}");
        if dt < 1.0 / gamma {
            prop_assert!(next.v > p.velocity_floor());
        }
        prop_assert!(next.l >= st.l);
    }

    #[test]
    fn velocity_hitting_time_round_trip(
        gamma in 0.05f64..20.0,
        g in 0.05f64..20.0,
        v0_frac in 0.01f64..10.0,
        level_frac in 0.01f64..0.99,
    ) {
        let p = ModelParams::new(gamma, g).unwrap();
        let v0 = p.velocity_floor() + v0_frac;
        let a = p.velocity_floor() + level_frac * v0_frac;
        prop_assume!(a < v0);
        let tau = interior_hitting_time(&p, v0, a).unwrap();
        prop_assert!(tau > 0.0);
        let back = interior_velocity(&p, v0, tau);
        let scale = a.abs().max(1e-12);
        prop_assert!(((back - a) / scale).abs() < 1e-12, "v0={v0} a={a} back={back}");
    }

    #[test]
    fn renewal_constants_ordered(p in params_strategy()) {
        let rc = derive_renewal_config(&p).unwrap();
        prop_assert!(p.velocity_floor() < rc.a);
        prop_assert!(rc.a < rc.renewal_v);
        prop_assert!(rc.renewal_v < rc.b);
        prop_assert!(rc.b < 0.0);
    }

    #[test]
    fn wilson_contains_point_estimate(k_frac in 0.0f64..=1.0, n in 1u64..100_000) {
        let k = (k_frac * n as f64) as u64;
        let (lo, hi) = wilson_interval(k.min(n), n, Z_99);
        let p = k.min(n) as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!((0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn tv_is_a_bounded_metric(seed_a in 0u64..500, seed_b in 0u64..500, seed_c in 0u64..500) {
        let grid = GridSpec::new(2.0, -1.0, 1.0, 6, 6).unwrap();
        let mk = |seed: u64| {
            let n = NoiseSource::new(seed, 7);
            let mut m = EmpiricalMeasure::new(grid);
            for i in 0..40 {
                m.add(2.0 * n.uniform(2 * i), 2.0 * n.uniform(2 * i + 1) - 1.0, 1.0);
            }
            m
        };
        let (a, b, c) = (mk(seed_a), mk(seed_b), mk(seed_c));
        let dab = tv_distance(&a, &b).unwrap();
        let dba = tv_distance(&b, &a).unwrap();
        let dac = tv_distance(&a, &c).unwrap();
        let dcb = tv_distance(&c, &b).unwrap();
        prop_assert!(dab >= 0.0 && dab <= 1.0);
        prop_assert_eq!(dab.to_bits(), dba.to_bits());
        prop_assert!(dab <= dac + dcb + 1e-12);
        if seed_a == seed_b {
            prop_assert_eq!(dab, 0.0);
        }
    }

    #[test]
    fn trajectories_respect_state_space(seed in 0u64..200, h0 in 0.0f64..3.0, v_frac in 0.01f64..3.0) {
        let p = ModelParams::new(1.0, 1.0).unwrap();
        let v0 = p.velocity_floor() + v_frac;
        let noise = NoiseSource::new(seed, 3);
        let mut stepper = Stepper::new(p, SystemState::initial(h0, v0), 1e-3, noise);
        let mut last_l = 0.0;
        for _ in 0..2_000 {
            let dl = stepper.step();
            let st = stepper.state();
            prop_assert!(st.h >= 0.0);
            prop_assert!(st.v > p.velocity_floor());
            prop_assert!(st.l >= last_l);
            // local time increases only when the step ends on the boundary
            if dl > 0.0 {
                prop_assert_eq!(st.h, 0.0);
            }
            last_l = st.l;
        }
    }
}
