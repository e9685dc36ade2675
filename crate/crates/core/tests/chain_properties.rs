use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spectrum_tier::chain::provider_response;
use spectrum_tier::market::{validate, MarketParams, Model, Regime, Scenario, Scheme};
use spectrum_tier::numeric::scan_max;
use spectrum_tier::usergame::nash_equilibrium;
use spectrum_tier::{owner_best_tariff, solve_equilibrium, SolveMethod, ValidatedInstance};

fn random_params(rng: &mut StdRng) -> MarketParams {
    MarketParams::new(
        rng.gen_range(2..120),
        rng.gen_range(0.5..500.0),
        rng.gen_range(0.1..10.0),
        rng.gen_range(0.05..5.0),
        rng.gen_range(0.1..20.0),
    )
}

fn general(p: MarketParams, scheme: Scheme, model: Model) -> ValidatedInstance {
    validate(p, Scenario::new(scheme, model, Regime::General)).unwrap()
}

#[test]
fn power_based_profits_split_evenly() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let p = random_params(&mut rng);
        for model in [Model::InterferenceFree, Model::Interference] {
            let inst = general(p, Scheme::PowerBased, model);
            let quarter = p.market_scale() / 4.0;
            let cf = solve_equilibrium(&inst, SolveMethod::ClosedForm).unwrap();
            assert_eq!(cf.v_a, cf.v_p);
            assert!((cf.v_a - quarter).abs() <= 1e-12 * quarter);
            let nu = solve_equilibrium(&inst, SolveMethod::Numerical).unwrap();
            assert!((nu.v_a - quarter).abs() <= 1e-8 * quarter, "{p:?} {nu:?}");
            assert!((nu.v_p - quarter).abs() <= 1e-8 * quarter, "{p:?} {nu:?}");
        }
    }
}

#[test]
fn flat_rate_pays_the_provider_more() {
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..120 {
        let p = random_params(&mut rng);
        for model in [Model::InterferenceFree, Model::Interference] {
            let flat =
                solve_equilibrium(&general(p, Scheme::FlatRate, model), SolveMethod::Numerical)
                    .unwrap();
            let power = solve_equilibrium(
                &general(p, Scheme::PowerBased, model),
                SolveMethod::Numerical,
            )
            .unwrap();
            assert!(
                flat.v_p > power.v_p,
                "{p:?} {model:?}: {} vs {}",
                flat.v_p,
                power.v_p
            );
        }
    }
}

#[test]
fn interference_free_total_profit() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..20 {
        let p = random_params(&mut rng);
        let s = p.market_scale();
        let flat = solve_equilibrium(
            &general(p, Scheme::FlatRate, Model::InterferenceFree),
            SolveMethod::Numerical,
        )
        .unwrap();
        let power = solve_equilibrium(
            &general(p, Scheme::PowerBased, Model::InterferenceFree),
            SolveMethod::Numerical,
        )
        .unwrap();
        assert!(((flat.v_p + flat.v_a) / s - 0.532).abs() < 1e-2);
        assert!(((power.v_p + power.v_a) / s - 0.5).abs() < 1e-12);
    }
}

/// Provider payoff at bandwidth `w` with the user tariff optimised by a scan.
fn reduced_provider_payoff(inst: &ValidatedInstance, c_w: f64, w: f64) -> f64 {
    let p = inst.params();
    let n = p.nf();
    match inst.scenario().scheme {
        Scheme::FlatRate => {
            let fee = spectrum_tier::usergame::throughput(p.t_bar, p.t_bar, w, inst).unwrap();
            n * fee - c_w * w
        }
        Scheme::PowerBased => {
            let rev = |c: f64| c * n * nash_equilibrium(c, w, inst).t;
            let (_, best) = scan_max(&rev, 0.0, 2.0 * p.l * p.h / p.sigma2, 4096, 1e-15);
            best - c_w * w
        }
    }
}

#[test]
fn provider_first_order_condition_holds() {
    let mut rng = StdRng::seed_from_u64(14);
    for _ in 0..20 {
        let p = random_params(&mut rng);
        for (scheme, model) in [
            (Scheme::FlatRate, Model::InterferenceFree),
            (Scheme::FlatRate, Model::Interference),
            (Scheme::PowerBased, Model::InterferenceFree),
            (Scheme::PowerBased, Model::Interference),
        ] {
            let inst = general(p, scheme, model);
            let c_w = owner_best_tariff(&inst).unwrap().c_w;
            let d = provider_response(c_w, &inst).unwrap();
            assert!(d.w > 0.0);
            let h = 1e-4 * d.w;
            let slope = (reduced_provider_payoff(&inst, c_w, d.w + h)
                - reduced_provider_payoff(&inst, c_w, d.w - h))
                / (2.0 * h);
            let bound = 1e-6 * (1.0 + d.v_p.abs() / d.w);
            assert!(
                slope.abs() <= bound,
                "{scheme:?}/{model:?} {p:?}: slope {slope:e} bound {bound:e}"
            );
        }
    }
}

#[test]
fn owner_tariff_beats_a_fine_grid() {
    let mut rng = StdRng::seed_from_u64(15);
    for _ in 0..5 {
        let p = random_params(&mut rng);
        for sc in Scenario::all() {
            let Ok(inst) = validate(p, sc) else { continue };
            let Ok(best) = owner_best_tariff(&inst) else {
                continue;
            };
            let top = 2.0 * best.c_w;
            for k in 1..=1000 {
                let c = top * k as f64 / 1000.0;
                let v = provider_response(c, &inst).map(|d| c * d.w).unwrap_or(0.0);
                assert!(
                    v <= best.v_a * (1.0 + 1e-6) + 1e-300,
                    "{sc} {p:?}: grid {c} gives {v} > {}",
                    best.v_a
                );
            }
        }
    }
}

#[test]
fn power_interference_grows_with_users_and_power() {
    let base = MarketParams::new(40, 400.0, 1.0, 0.5, 10.0);
    let solve = |p: MarketParams| {
        solve_equilibrium(
            &general(p, Scheme::PowerBased, Model::Interference),
            SolveMethod::Numerical,
        )
        .unwrap()
    };
    let mut prev = solve(MarketParams { n: 2, ..base });
    for n in 3..=100 {
        let s = solve(MarketParams { n, ..base });
        assert!(s.w > prev.w && s.v_p > prev.v_p && s.c_w > prev.c_w);
        assert!((s.c_p - 20.0).abs() < 1e-9);
        prev = s;
    }
    let mut prev = solve(MarketParams {
        t_bar: 0.05,
        ..base
    });
    for k in 2..=40 {
        let s = solve(MarketParams {
            t_bar: 0.05 * k as f64,
            ..base
        });
        assert!(s.w > prev.w && s.v_p > prev.v_p);
        assert!((s.c_p - 20.0).abs() < 1e-9);
        prev = s;
    }
}

#[test]
fn high_snr_owner_takes_everything_as_undercut_vanishes() {
    let mut last = 0.0;
    for eps in [0.5, 0.1, 1e-2, 1e-4, 1e-8] {
        let p = MarketParams::new(10, 2.0, 1.0, 1.0, 1.0)
            .with_w_bar(3.0)
            .with_epsilon(eps);
        for model in [Model::InterferenceFree, Model::Interference] {
            let inst =
                validate(p, Scenario::new(Scheme::PowerBased, model, Regime::HighSnr)).unwrap();
            let s = solve_equilibrium(&inst, SolveMethod::Numerical).unwrap();
            let share = s.v_a / (s.v_a + s.v_p);
            if model == Model::InterferenceFree {
                assert!(share > last);
                last = share;
            }
            assert!(
                1.0 - share <= eps + 1e-12,
                "{model:?} eps {eps}: share {share}"
            );
        }
    }
    assert!(last > 1.0 - 1e-7);
}
