//! End-user layer: SNR, payoffs, best responses and the symmetric Nash
//! equilibrium of the power-control game.
//!
//! With the homogeneous-user assumption every user faces the same problem, so
//! a profile is described by one power level `t` (or, for a unilateral
//! deviation, by the deviator's `t_i` and everybody else's `t_others`).

use crate::error::{Error, Result};
use crate::market::{MarketParams, Model, Regime, Scheme, ValidatedInstance};

/// Symmetric per-user transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProfile {
    pub t: f64,
}

/// Lower end of the power range searched in the high-SNR regime, where the
/// payoff has `ln(t)` and is unbounded below at zero.
pub fn min_power(params: &MarketParams) -> f64 {
    1e-6 * params.t_bar
}

fn sinr_unchecked(p: &MarketParams, model: Model, t_i: f64, t_others: f64, w: f64) -> f64 {
    match model {
        Model::InterferenceFree => p.l * p.h * t_i * p.nf() / (w * p.sigma2),
        Model::Interference => p.l * p.h * t_i / (w * p.sigma2 + (p.nf() - 1.0) * p.h * t_others),
    }
}

/// SNR (interference-free) or SINR (interference) of a user when every user
/// transmits at `t` over leased bandwidth `w`.
pub fn snr(t: f64, w: f64, params: &MarketParams, model: Model) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::domain(format!(
            "bandwidth must be positive, got {w}"
        )));
    }
    Ok(sinr_unchecked(params, model, t, t, w))
}

/// Rate a user obtains at power `t_i` against `t_others`: the Shannon-style
/// `ln(1 + gamma)` (or `ln(gamma)` at high SNR), scaled by the user's
/// bandwidth share (`w/n` interference-free, `w` otherwise).
pub fn throughput(t_i: f64, t_others: f64, w: f64, inst: &ValidatedInstance) -> Result<f64> {
    let p = inst.params();
    let sc = inst.scenario();
    let gamma = snr_pair(t_i, t_others, w, p, sc.model)?;
    let rate = match sc.regime {
        Regime::General => gamma.ln_1p(),
        Regime::HighSnr => {
            if gamma <= 0.0 {
                return Err(Error::domain("high-SNR payoff needs positive SNR"));
            }
            gamma.ln()
        }
    };
    let share = match sc.model {
        Model::InterferenceFree => w / p.nf(),
        Model::Interference => w,
    };
    Ok(share * rate)
}

fn snr_pair(t_i: f64, t_others: f64, w: f64, p: &MarketParams, model: Model) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::domain(format!(
            "bandwidth must be positive, got {w}"
        )));
    }
    Ok(sinr_unchecked(p, model, t_i, t_others, w))
}

/// Net utility of a user: throughput minus the charge `c_p mu(t_i)` with
/// `mu = 1` (flat rate) or `mu(x) = x` (power-based).
pub fn user_payoff(
    t_i: f64,
    t_others: f64,
    c_p: f64,
    w: f64,
    inst: &ValidatedInstance,
) -> Result<f64> {
    let charge = match inst.scenario().scheme {
        Scheme::FlatRate => c_p,
        Scheme::PowerBased => c_p * t_i,
    };
    Ok(throughput(t_i, t_others, w, inst)? - charge)
}

/// Payoff-maximising power of one user when the others transmit `t_others`.
pub fn best_response(c_p: f64, w: f64, t_others: f64, inst: &ValidatedInstance) -> f64 {
    let p = inst.params();
    let sc = inst.scenario();
    let t_bar = p.t_bar;
    if sc.scheme == Scheme::FlatRate || c_p <= 0.0 {
        return t_bar;
    }
    if !(w > 0.0) {
        return 0.0;
    }
    let lh = p.l * p.h;
    match (sc.regime, sc.model) {
        (Regime::General, Model::InterferenceFree) => {
            if c_p <= lh * w / (w * p.sigma2 + lh * p.nf() * t_bar) {
                t_bar
            } else if c_p < lh / p.sigma2 {
                (w / p.nf()) * (1.0 / c_p - p.sigma2 / lh)
            } else {
                0.0
            }
        }
        (Regime::General, Model::Interference) => {
            // stationary point of W ln(1 + L h t / (W s2 + (n-1) h t_o)) - c_p t
            let t = w / c_p - w * p.sigma2 / lh - (p.nf() - 1.0) * t_others / p.l;
            t.clamp(0.0, t_bar)
        }
        (Regime::HighSnr, model) => {
            let share = match model {
                Model::InterferenceFree => w / p.nf(),
                Model::Interference => w,
            };
            (share / c_p).clamp(min_power(p), t_bar)
        }
    }
}

/// Symmetric Nash equilibrium evaluated in closed form.
pub fn nash_equilibrium(c_p: f64, w: f64, inst: &ValidatedInstance) -> PowerProfile {
    let p = inst.params();
    let sc = inst.scenario();
    if sc.scheme == Scheme::PowerBased
        && sc.regime == Regime::General
        && sc.model == Model::Interference
        && c_p > 0.0
        && w > 0.0
    {
        let lh = p.l * p.h;
        let crowd = p.nf() - 1.0 + p.l;
        let t = if c_p <= lh * w / (w * p.sigma2 + crowd * p.h * p.t_bar) {
            p.t_bar
        } else if c_p < lh / p.sigma2 {
            (lh / c_p - p.sigma2) * w / (p.h * crowd)
        } else {
            0.0
        };
        return PowerProfile { t };
    }
    // every other case has a best response independent of the others
    PowerProfile {
        t: best_response(c_p, w, p.t_bar, inst),
    }
}

/// Best-response dynamics `t <- t + step (BR(t) - t)` from `T̄/2`, halving the
/// step whenever successive moves change sign. Returns once the fixed-point
/// residual `|BR(t) - t|` is at most `tol`.
pub fn iterate_nash(
    c_p: f64,
    w: f64,
    inst: &ValidatedInstance,
    tol: f64,
    max_iter: usize,
) -> Result<PowerProfile> {
    let mut t = 0.5 * inst.params().t_bar;
    let mut step = 1.0;
    let mut prev = 0.0;
    let mut delta = f64::INFINITY;
    for _ in 0..max_iter {
        delta = best_response(c_p, w, t, inst) - t;
        if delta.abs() <= tol {
            return Ok(PowerProfile { t });
        }
        if delta * prev < 0.0 {
            step *= 0.5;
        }
        t += step * delta;
        prev = delta;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_step: delta,
    })
}

/// Per-user utility and throughput at the power-based interference equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub utility: f64,
    pub throughput: f64,
}

pub fn user_metrics(params: &MarketParams) -> UserMetrics {
    let p = params;
    let m = p.nf() + p.l - 1.0;
    let log_term = (2.0 * m / (2.0 * p.nf() + p.l - 2.0)).ln();
    let base = p.t_bar * p.h / p.sigma2;
    UserMetrics {
        utility: base / 2.0 * (2.0 * m * log_term - p.l),
        throughput: base * m * log_term,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{validate, Scenario};

    fn inst(p: MarketParams, scheme: Scheme, model: Model, regime: Regime) -> ValidatedInstance {
        validate(p, Scenario::new(scheme, model, regime)).unwrap()
    }

    #[test]
    fn snr_examples() {
        let p = MarketParams::new(10, 2.0, 1.0, 1.0, 1.0);
        assert_eq!(snr(0.0, 5.0, &p, Model::InterferenceFree).unwrap(), 0.0);
        assert_eq!(snr(0.0, 5.0, &p, Model::Interference).unwrap(), 0.0);
        assert!((snr(1.0, 20.0, &p, Model::InterferenceFree).unwrap() - 1.0).abs() < 1e-15);
        let p2 = MarketParams::new(2, 4.0, 1.0, 1.0, 1.0);
        assert!((snr(1.0, 3.0, &p2, Model::Interference).unwrap() - 1.0).abs() < 1e-15);
        assert!(snr(1.0, 0.0, &p, Model::InterferenceFree).is_err());
    }

    #[test]
    fn power_free_payoff_example() {
        let p = MarketParams::new(1, 1.0, 1.0, 1.0, 1.0);
        let i = inst(
            p,
            Scheme::PowerBased,
            Model::InterferenceFree,
            Regime::General,
        );
        let u = user_payoff(1.0, 1.0, 0.1, 1.0, &i).unwrap();
        assert!((u - (2f64.ln() - 0.1)).abs() < 1e-15);
        assert!((u - 0.5931).abs() < 1e-4);
    }

    #[test]
    fn flat_rate_participation_tariff_zeroes_payoff() {
        let p = MarketParams::new(5, 3.0, 0.7, 2.0, 0.4);
        let i = inst(
            p,
            Scheme::FlatRate,
            Model::InterferenceFree,
            Regime::General,
        );
        let w: f64 = 3.3;
        let c_p = (w / 5.0) * (1.0 + 3.0 * 0.7 * 2.0 / (w * 0.4 / 5.0)).ln();
        assert!(user_payoff(2.0, 2.0, c_p, w, &i).unwrap().abs() < 1e-12);
    }

    #[test]
    fn high_snr_payoff_rejects_zero_power() {
        let i = inst(
            MarketParams::default(),
            Scheme::PowerBased,
            Model::InterferenceFree,
            Regime::HighSnr,
        );
        assert!(matches!(
            user_payoff(0.0, 1.0, 0.1, 1.0, &i),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn free_best_response_branches() {
        let p = MarketParams::new(10, 2.0, 1.0, 1.0, 1.0);
        let i = inst(
            p,
            Scheme::PowerBased,
            Model::InterferenceFree,
            Regime::General,
        );
        let w = 20.0;
        let low = 2.0 * w / (w + 20.0);
        assert_eq!(best_response(low, w, 0.3, &i), 1.0);
        assert_eq!(best_response(low * 0.5, w, 0.3, &i), 1.0);
        assert_eq!(best_response(2.0, w, 0.3, &i), 0.0);
        assert_eq!(best_response(5.0, w, 0.3, &i), 0.0);
        let mid = best_response(1.5, w, 0.3, &i);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn flat_best_response_is_full_power() {
        for model in [Model::InterferenceFree, Model::Interference] {
            for regime in [Regime::General, Regime::HighSnr] {
                let i = inst(MarketParams::default(), Scheme::FlatRate, model, regime);
                for (c_p, w) in [(0.0, 1.0), (10.0, 0.1), (1e6, 1e3)] {
                    assert_eq!(best_response(c_p, w, 0.2, &i), 1.0);
                    assert_eq!(nash_equilibrium(c_p, w, &i).t, 1.0);
                }
            }
        }
    }

    #[test]
    fn interference_equilibrium_at_reference_point_is_full_power() {
        let p = MarketParams::new(40, 400.0, 1.0, 0.5, 10.0);
        let i = inst(p, Scheme::PowerBased, Model::Interference, Regime::General);
        let w = 439.0 * 0.5 / 10.0;
        let t = nash_equilibrium(20.0, w, &i).t;
        assert_eq!(t, 0.5);
        let it = iterate_nash(20.0, w, &i, 1e-13, 1000).unwrap();
        assert!((it.t - 0.5).abs() < 1e-12);
        assert_eq!(nash_equilibrium(40.0, w, &i).t, 0.0);
    }

    #[test]
    fn iteration_converges_in_oscillating_regime() {
        // (n-1)/L = 4.5: undamped best-response dynamics would diverge
        let p = MarketParams::new(10, 2.0, 1.0, 1.0, 1.0);
        let i = inst(p, Scheme::PowerBased, Model::Interference, Regime::General);
        let (c_p, w) = (1.2, 3.0);
        let direct = nash_equilibrium(c_p, w, &i).t;
        assert!(direct > 0.0 && direct < 1.0);
        let it = iterate_nash(c_p, w, &i, 1e-13, 10_000).unwrap();
        assert!((it.t - direct).abs() < 1e-11, "{} vs {direct}", it.t);
        assert!((best_response(c_p, w, it.t, &i) - it.t).abs() <= 1e-13);
    }

    #[test]
    fn iteration_reports_non_convergence() {
        let p = MarketParams::new(10, 2.0, 1.0, 1.0, 1.0);
        let i = inst(p, Scheme::PowerBased, Model::Interference, Regime::General);
        assert!(matches!(
            iterate_nash(1.2, 3.0, &i, 1e-15, 2),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn high_snr_best_responses() {
        let p = MarketParams::new(4, 2.0, 1.0, 1.0, 1.0);
        let free = inst(
            p,
            Scheme::PowerBased,
            Model::InterferenceFree,
            Regime::HighSnr,
        );
        assert!((best_response(1.0, 2.0, 0.0, &free) - 0.5).abs() < 1e-15);
        assert_eq!(best_response(0.1, 2.0, 0.0, &free), 1.0);
        let int = inst(p, Scheme::PowerBased, Model::Interference, Regime::HighSnr);
        assert!((best_response(4.0, 2.0, 0.0, &int) - 0.5).abs() < 1e-15);
        assert_eq!(best_response(1e12, 2.0, 0.0, &int), min_power(&p));
    }

    #[test]
    fn user_metrics_limit_and_reference_point() {
        let base = MarketParams::new(40, 400.0, 1.0, 0.5, 10.0);
        let m = user_metrics(&base);
        let i = inst(
            base,
            Scheme::PowerBased,
            Model::Interference,
            Regime::General,
        );
        let w = 439.0 * 0.5 / 10.0;
        let r = throughput(0.5, 0.5, w, &i).unwrap();
        let u = user_payoff(0.5, 0.5, 20.0, w, &i).unwrap();
        assert!((m.throughput - r).abs() < 1e-12 * r);
        assert!((m.utility - u).abs() < 1e-12 * u.abs().max(1.0));

        let far = user_metrics(&MarketParams {
            n: 10_000_000,
            ..base
        });
        let bound = 0.5 * 1.0 * 400.0 / (2.0 * 10.0);
        assert!((far.throughput - bound).abs() < 1e-3 * bound);
    }

    #[test]
    fn user_utility_strictly_decreasing_in_n() {
        let mut prev = f64::INFINITY;
        for n in 2..=200 {
            let u = user_metrics(&MarketParams::new(n, 400.0, 1.0, 0.5, 10.0)).utility;
            assert!(u < prev, "n={n}");
            prev = u;
        }
    }
}
