use proptest::prelude::*;
use spectrum_tier::market::{validate, MarketParams, Model, Regime, Scenario, Scheme};
use spectrum_tier::special::NEG_INV_E;
use spectrum_tier::usergame::{best_response, min_power, nash_equilibrium, user_payoff};
use spectrum_tier::{
    lambert_w0, lambert_wm1, EquilibriumSolution, Error, Method, ValidatedInstance,
};

/// Bisection on `w e^w = x` over a bracket where the map is monotone.
fn bisect_w(x: f64, mut lo: f64, mut hi: f64) -> f64 {
    let increasing = lo >= -1.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (mid * mid.exp() > x) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn principal_arg() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0.0..1.0f64).prop_map(|u| NEG_INV_E * (1.0 - u)),
        0.0..10.0f64,
        (1.0..300.0f64).prop_map(|e| 10f64.powf(e)),
    ]
}

fn lower_arg() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0.0..1.0f64).prop_map(|u| NEG_INV_E * (1.0 - u)),
        (1.0..300.0f64).prop_map(|e| -(10f64.powf(-e))),
    ]
}

fn params() -> impl Strategy<Value = MarketParams> {
    (
        1u32..200,
        0.1..500.0f64,
        0.05..10.0f64,
        0.01..5.0f64,
        0.05..20.0f64,
    )
        .prop_map(|(n, l, h, t, s)| MarketParams::new(n, l, h, t, s))
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (0usize..8).prop_map(|i| Scenario::all()[i])
}

fn inst_for(p: MarketParams, sc: Scenario) -> Option<ValidatedInstance> {
    validate(p, sc).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn principal_round_trip(x in principal_arg()) {
        let r = lambert_w0(x).unwrap();
        prop_assert!(r.value >= -1.0);
        prop_assert!(r.residual <= 1e-12 * x.abs().max(1.0), "x={x} residual={}", r.residual);
    }

    #[test]
    fn lower_round_trip(x in lower_arg()) {
        if x >= 0.0 { return Ok(()); }
        let r = lambert_wm1(x).unwrap();
        prop_assert!(r.value <= -1.0);
        prop_assert!(r.residual <= 1e-12, "x={x} residual={}", r.residual);
    }

    #[test]
    fn principal_agrees_with_bisection(x in NEG_INV_E..50.0f64) {
        let hi = if x > 1.0 { x.ln() + 1.0 } else { 1.0 };
        let oracle = bisect_w(x, -1.0, hi);
        prop_assert!((lambert_w0(x).unwrap().value - oracle).abs() <= 1e-10, "x={x}");
    }

    #[test]
    fn lower_agrees_with_bisection(x in NEG_INV_E..-1e-6f64) {
        let oracle = bisect_w(x, -40.0, -1.0);
        prop_assert!((lambert_wm1(x).unwrap().value - oracle).abs() <= 1e-10, "x={x}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn principal_is_increasing(a in -0.36..1e6f64, b in -0.36..1e6f64) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(lambert_w0(lo).unwrap().value < lambert_w0(hi).unwrap().value);
    }

    #[test]
    fn validate_is_total(
        n in 0u32..5,
        l in prop_oneof![Just(f64::NAN), Just(f64::INFINITY), Just(0.0), Just(-1.0), 0.1..10.0f64],
        h in prop_oneof![Just(f64::NAN), Just(-2.0), 0.1..10.0f64],
        t in prop_oneof![Just(0.0), 0.1..10.0f64],
        s in prop_oneof![Just(f64::NEG_INFINITY), 0.1..10.0f64],
        eps in prop_oneof![Just(1.0), Just(0.0), 1e-6..0.9f64],
        sc in scenario(),
    ) {
        let p = MarketParams::new(n, l, h, t, s).with_epsilon(eps);
        match validate(p, sc) {
            Ok(inst) => {
                prop_assert!(n >= 1 && l > 0.0 && h > 0.0 && t > 0.0 && s > 0.0);
                prop_assert!(eps > 0.0 && eps < 1.0);
                let text = serde_json::to_string(&inst).unwrap();
                let back: ValidatedInstance = serde_json::from_str(&text).unwrap();
                prop_assert_eq!(back, inst);
            }
            Err(Error::InvalidParam { field, .. }) => prop_assert!(!field.is_empty()),
            Err(other) => prop_assert!(false, "unexpected error kind {other:?}"),
        }
    }

    #[test]
    fn solution_json_round_trip(
        vals in proptest::collection::vec(-1e6..1e6f64, 9),
    ) {
        let s = EquilibriumSolution {
            c_w: vals[0], w: vals[1], c_p: vals[2], t: vals[3], v_p: vals[4],
            v_a: vals[5], u_user: vals[6], throughput: vals[7], snr: vals[8],
            method: Method::Numerical,
        };
        let back: EquilibriumSolution = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_response_beats_power_grid(
        p in params(),
        sc in scenario(),
        cp_frac in 0.01..2.0f64,
        w_frac in 0.05..4.0f64,
        other_frac in 0.0..1.0f64,
    ) {
        let Some(inst) = inst_for(p, sc) else { return Ok(()); };
        let c_p = match sc.scheme {
            Scheme::PowerBased => cp_frac * p.l * p.h / p.sigma2,
            Scheme::FlatRate => cp_frac,
        };
        let w = w_frac * p.market_scale().max(1e-3);
        let t_o = other_frac * p.t_bar;
        let lo = if sc.is_high_snr() { min_power(&p) } else { 0.0 };
        let br = best_response(c_p, w, t_o, &inst);
        prop_assert!(br >= lo && br <= p.t_bar);
        let u_br = user_payoff(br, t_o, c_p, w, &inst).unwrap();
        let mut grid_max = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let t = lo + (p.t_bar - lo) * i as f64 / 10_000.0;
            grid_max = grid_max.max(user_payoff(t, t_o, c_p, w, &inst).unwrap());
        }
        prop_assert!(grid_max <= u_br + 1e-6 * (1.0 + u_br.abs()), "grid {grid_max} vs br {u_br}");
    }

    #[test]
    fn nash_is_a_fixed_point(
        p in params(),
        sc in scenario(),
        cp_frac in 0.01..2.0f64,
        w_frac in 0.05..4.0f64,
    ) {
        let Some(inst) = inst_for(p, sc) else { return Ok(()); };
        let c_p = cp_frac * p.l * p.h / p.sigma2;
        let w = w_frac * p.market_scale();
        let t = nash_equilibrium(c_p, w, &inst).t;
        prop_assert!((best_response(c_p, w, t, &inst) - t).abs() <= 1e-12 * p.t_bar.max(1.0));
    }

    #[test]
    fn flat_rate_users_always_transmit_at_full_power(
        p in params(),
        model in prop_oneof![Just(Model::InterferenceFree), Just(Model::Interference)],
        regime in prop_oneof![Just(Regime::General), Just(Regime::HighSnr)],
        c_p in 0.0..100.0f64,
        w in 0.01..100.0f64,
    ) {
        let Some(inst) = inst_for(p, Scenario::new(Scheme::FlatRate, model, regime)) else { return Ok(()); };
        prop_assert_eq!(best_response(c_p, w, 0.3 * p.t_bar, &inst), p.t_bar);
    }

    #[test]
    fn power_response_is_continuous_at_branch_thresholds(
        p in params(),
        model in prop_oneof![Just(Model::InterferenceFree), Just(Model::Interference)],
        w_frac in 0.05..4.0f64,
    ) {
        let inst = validate(p, Scenario::new(Scheme::PowerBased, model, Regime::General)).unwrap();
        let w = w_frac * p.market_scale();
        let lh = p.l * p.h;
        let crowd = match model {
            Model::InterferenceFree => lh * p.nf(),
            Model::Interference => (p.nf() - 1.0 + p.l) * p.h,
        };
        let upper = lh * w / (w * p.sigma2 + crowd * p.t_bar);
        let cut = lh / p.sigma2;
        for c in [upper, cut] {
            let d = 1e-10 * c;
            let a = nash_equilibrium(c - d, w, &inst).t;
            let b = nash_equilibrium(c + d, w, &inst).t;
            prop_assert!((a - b).abs() <= 1e-6 * p.t_bar.max(1.0), "jump {a} -> {b} at {c}");
        }
    }
}
