//! Brute-force verifier working only from the payoff definitions.
//!
//! The users' game is solved by best-response iteration at every grid cell,
//! the provider's problem by exhaustive search over `(W, C_P)` (flat rate:
//! `C_P` is pinned to the participation fee, so only `W` is searched) and the
//! owner's by search over `C_W`. Nothing here touches the Lambert W function
//! or the closed-form branches of the chain module.
//!
//! Every level starts with a coarse scan of `max k / N`, `k = 1..=N`, and
//! then repeatedly subdivides the two cells around the incumbent `refine`
//! times until the cell is negligible. Repeated passes matter: profits are
//! flat near each optimum, so one pass leaves enough revenue noise for the
//! owner to pick a visibly wrong tariff. Gains below a relative `1e-14` are
//! ties and resolve towards the lower coordinate.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::ProviderDecision;
use crate::error::{Error, Result};
use crate::market::{EquilibriumSolution, GridSpec, Method, Regime, Scheme, ValidatedInstance};
use crate::usergame::{iterate_nash, min_power, snr, throughput, user_payoff};

/// Unilateral user deviations are scanned on this many intervals.
pub const USER_SCAN_POINTS: usize = 10_000;
/// Default relative tolerance for oracle agreement.
pub const DEFAULT_REL_TOL: f64 = 0.02;
/// Coarse cells of slack granted on top of the relative tolerance.
pub const DEFAULT_CELLS: f64 = 2.0;

// Refinement of a level stops once its cell is this small relative to the bound.
const CP_RESOLUTION: f64 = 1e-13;
const W_RESOLUTION: f64 = 1e-9;
const CW_RESOLUTION: f64 = 1e-8;
const TIE_RTOL: f64 = 1e-14;

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_RTOL * incumbent.abs()
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    max: f64,
    points: usize,
}

impl Axis {
    fn at(&self, k: usize) -> f64 {
        self.max * k as f64 / self.points as f64
    }

    fn cell(&self) -> f64 {
        self.max / self.points as f64
    }

    fn coarse(&self) -> Vec<f64> {
        (1..=self.points).map(|k| self.at(k)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Found<T> {
    x: f64,
    value: f64,
    item: T,
}

/// First maximiser over `xs` in order.
fn first_best<T: Copy>(xs: &[f64], values: Vec<(f64, T)>) -> Option<Found<T>> {
    let mut best: Option<Found<T>> = None;
    for (&x, (value, item)) in xs.iter().zip(values) {
        if best.is_none_or(|b| better(value, b.value)) {
            best = Some(Found { x, value, item });
        }
    }
    best
}

fn coarse_scan<T: Copy>(
    axis: &Axis,
    eval: impl Fn(&[f64]) -> Result<Vec<(f64, T)>>,
) -> Result<Found<T>> {
    let xs = axis.coarse();
    let values = eval(&xs)?;
    Ok(first_best(&xs, values).expect("grid has at least one point"))
}

/// Repeated local subdivision around `found` until the cell drops below
/// `resolution * axis.max` or the pass budget runs out.
fn refine_around<T: Copy>(
    mut best: Found<T>,
    axis: &Axis,
    grid: &GridSpec,
    resolution: f64,
    eval: impl Fn(&[f64]) -> Result<Vec<(f64, T)>>,
) -> Result<Found<T>> {
    if grid.refine <= 1 {
        return Ok(best);
    }
    let r = grid.refine as i64;
    let mut h = axis.cell();
    for _ in 0..grid.passes {
        if h <= resolution * axis.max {
            break;
        }
        let step = h / r as f64;
        let xs: Vec<f64> = (-r..=r)
            .map(|i| best.x + step * i as f64)
            .filter(|&x| x > 0.0 && x <= axis.max)
            .collect();
        let values = eval(&xs)?;
        if let Some(c) = first_best(&xs, values) {
            // the incumbent also lies in the window, so only a strict loss replaces it
            if !better(best.value, c.value) {
                best = c;
            }
        }
        h = step;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    w: f64,
    c_p: f64,
    t: f64,
    revenue: f64,
}

impl Sample {
    fn value(&self, c_w: f64) -> f64 {
        self.revenue - c_w * self.w
    }
}

fn at_cell(c_w: Option<f64>, w: f64, c_p: f64, e: Error) -> Error {
    match e {
        Error::AtCell { .. } => e,
        other => Error::AtCell {
            c_w,
            w,
            c_p,
            source: Box::new(other),
        },
    }
}

fn with_tariff(e: Error, tariff: f64) -> Error {
    match e {
        Error::AtCell {
            c_w: None,
            w,
            c_p,
            source,
        } => Error::AtCell {
            c_w: Some(tariff),
            w,
            c_p,
            source,
        },
        other => other,
    }
}

struct Market<'a> {
    inst: &'a ValidatedInstance,
    grid: &'a GridSpec,
    w_axis: Axis,
    cp_axis: Axis,
}

impl<'a> Market<'a> {
    fn new(inst: &'a ValidatedInstance, grid: &'a GridSpec) -> Result<Self> {
        grid.validate()?;
        let p = inst.params();
        let sc = inst.scenario();
        // the high-SNR power-based market caps the leasable bandwidth
        let w_max = if sc.is_high_snr() && !sc.is_flat() {
            grid.w_max.min(p.w_bar)
        } else {
            grid.w_max
        };
        Ok(Market {
            inst,
            grid,
            w_axis: Axis {
                max: w_max,
                points: grid.w_points,
            },
            cp_axis: Axis {
                max: grid.cp_max,
                points: grid.cp_points,
            },
        })
    }

    fn flat(&self) -> bool {
        self.inst.scenario().scheme == Scheme::FlatRate
    }

    /// Users' equilibrium and provider revenue at one cell. For flat rate the
    /// tariff argument is ignored and replaced by the participation fee.
    fn sample(&self, w: f64, c_p: f64) -> Result<Sample> {
        let inst = self.inst;
        let n = inst.params().nf();
        let solve = |c: f64| {
            iterate_nash(c, w, inst, self.grid.br_tol, self.grid.br_max_iter)
                .map(|prof| prof.t)
                .map_err(|e| at_cell(None, w, c, e))
        };
        if self.flat() {
            let t = solve(0.0)?;
            let fee = throughput(t, t, w, inst).map_err(|e| at_cell(None, w, 0.0, e))?;
            Ok(Sample {
                w,
                c_p: fee,
                t,
                revenue: n * fee,
            })
        } else {
            let t = solve(c_p)?;
            Ok(Sample {
                w,
                c_p,
                t,
                revenue: c_p * n * t,
            })
        }
    }

    /// Revenue-maximising user tariff at bandwidth `w`.
    fn best_tariff(&self, w: f64) -> Result<Sample> {
        if self.flat() {
            return self.sample(w, 0.0);
        }
        let eval = |cs: &[f64]| {
            cs.iter()
                .map(|&c| self.sample(w, c).map(|s| (s.revenue, s)))
                .collect::<Result<Vec<_>>>()
        };
        let coarse = coarse_scan(&self.cp_axis, eval)?;
        Ok(refine_around(coarse, &self.cp_axis, self.grid, CP_RESOLUTION, eval)?.item)
    }

    /// Best tariff of every coarse bandwidth row. Revenue does not depend on
    /// `C_W`, so the rows are shared by all owner tariffs.
    fn rows(&self) -> Result<Vec<Sample>> {
        (1..=self.w_axis.points)
            .into_par_iter()
            .map(|j| self.best_tariff(self.w_axis.at(j)))
            .collect()
    }

    /// Provider's choice at `c_w`, `None` when the best profit does not beat its reservation.
    fn provider_at(&self, c_w: f64, rows: &[Sample]) -> Result<Option<Sample>> {
        let xs: Vec<f64> = rows.iter().map(|s| s.w).collect();
        let coarse = first_best(&xs, rows.iter().map(|s| (s.value(c_w), *s)).collect())
            .expect("grid has at least one row");
        let eval = |ws: &[f64]| {
            ws.iter()
                .map(|&w| self.best_tariff(w).map(|s| (s.value(c_w), s)))
                .collect::<Result<Vec<_>>>()
        };
        let best = refine_around(coarse, &self.w_axis, self.grid, W_RESOLUTION, eval)
            .map_err(|e| with_tariff(e, c_w))?;
        Ok((best.value > self.reservation()).then_some(best.item))
    }

    /// Profit the provider needs to stay in business. In the power-based
    /// high-SNR market the owner may take everything but an undercut of
    /// `epsilon * w_bar`; elsewhere any positive profit suffices.
    fn reservation(&self) -> f64 {
        let sc = self.inst.scenario();
        if sc.is_high_snr() && !sc.is_flat() {
            let p = self.inst.params();
            // slack for rounding at the exact undercut
            p.epsilon * p.w_bar * (1.0 - 1e-9)
        } else {
            0.0
        }
    }
}

fn decision(c_w: f64, s: Option<Sample>) -> ProviderDecision {
    match s {
        Some(s) => ProviderDecision {
            w: s.w,
            c_p: s.c_p,
            v_p: s.value(c_w),
        },
        None => ProviderDecision {
            w: 0.0,
            c_p: 0.0,
            v_p: 0.0,
        },
    }
}

/// Provider decision at owner tariff `c_w` by exhaustive search.
pub fn grid_provider(
    c_w: f64,
    inst: &ValidatedInstance,
    grid: &GridSpec,
) -> Result<ProviderDecision> {
    let market = Market::new(inst, grid)?;
    let rows = market.rows().map_err(|e| with_tariff(e, c_w))?;
    Ok(decision(c_w, market.provider_at(c_w, &rows)?))
}

/// Full equilibrium by nested exhaustive search, `method = Oracle`.
pub fn grid_solve(inst: &ValidatedInstance, grid: &GridSpec) -> Result<EquilibriumSolution> {
    let market = Market::new(inst, grid)?;
    let rows = market.rows()?;
    let cw_axis = Axis {
        max: grid.cw_max,
        points: grid.cw_points,
    };
    let eval = |cs: &[f64]| {
        cs.par_iter()
            .map(|&c| {
                market
                    .provider_at(c, &rows)
                    .map(|s| (s.map_or(0.0, |s| c * s.w), s))
            })
            .collect::<Result<Vec<_>>>()
    };
    let coarse = coarse_scan(&cw_axis, eval)?;
    let best = refine_around(coarse, &cw_axis, grid, CW_RESOLUTION, eval)?;
    assemble(inst, best.x, best.item)
}

fn assemble(inst: &ValidatedInstance, c_w: f64, s: Option<Sample>) -> Result<EquilibriumSolution> {
    let Some(s) = s else {
        return Ok(EquilibriumSolution {
            c_w,
            w: 0.0,
            c_p: 0.0,
            t: 0.0,
            v_p: 0.0,
            v_a: 0.0,
            u_user: 0.0,
            throughput: 0.0,
            snr: 0.0,
            method: Method::Oracle,
        });
    };
    Ok(EquilibriumSolution {
        c_w,
        w: s.w,
        c_p: s.c_p,
        t: s.t,
        v_p: s.value(c_w),
        v_a: c_w * s.w,
        u_user: user_payoff(s.t, s.t, s.c_p, s.w, inst)?,
        throughput: throughput(s.t, s.t, s.w, inst)?,
        snr: snr(s.t, s.w, inst.params(), inst.scenario().model)?,
        method: Method::Oracle,
    })
}

/// Largest profitable unilateral deviations from a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationReport {
    /// Best gain of a single user changing power against the others' profile.
    pub user_gain: f64,
    pub user_tolerance: f64,
    /// Best gain of the provider moving to another `(W, C_P)` grid cell.
    pub provider_gain: f64,
    pub provider_tolerance: f64,
}

impl DeviationReport {
    pub fn is_equilibrium(&self) -> bool {
        self.user_gain <= self.user_tolerance && self.provider_gain <= self.provider_tolerance
    }
}

fn user_deviation_gain(sol: &EquilibriumSolution, inst: &ValidatedInstance) -> Result<(f64, f64)> {
    if !(sol.w > 0.0) {
        return Ok((0.0, 0.0));
    }
    let p = inst.params();
    let sc = inst.scenario();
    let lo = match sc.regime {
        Regime::General => 0.0,
        Regime::HighSnr => min_power(p),
    };
    let here = user_payoff(sol.t, sol.t, sol.c_p, sol.w, inst)?;
    // a flat-rate user may also decline the service
    let mut best = if sc.is_flat() { 0.0 } else { f64::NEG_INFINITY };
    for i in 0..=USER_SCAN_POINTS {
        let t = lo + (p.t_bar - lo) * i as f64 / USER_SCAN_POINTS as f64;
        best = best.max(user_payoff(t, sol.t, sol.c_p, sol.w, inst)?);
    }
    Ok(((best - here).max(0.0), 1e-6 * (1.0 + here.abs())))
}

/// Provider profit when the candidate `(W, C_P)` is played and users respond.
fn provider_value_at(
    sol: &EquilibriumSolution,
    inst: &ValidatedInstance,
    grid: &GridSpec,
) -> Result<f64> {
    if !(sol.w > 0.0) {
        return Ok(0.0);
    }
    let n = inst.params().nf();
    let t = iterate_nash(sol.c_p, sol.w, inst, grid.br_tol, grid.br_max_iter)?.t;
    let revenue = match inst.scenario().scheme {
        Scheme::FlatRate => {
            let u = user_payoff(t, t, sol.c_p, sol.w, inst)?;
            if u >= -1e-12 * sol.c_p.abs().max(1.0) {
                n * sol.c_p
            } else {
                0.0
            }
        }
        Scheme::PowerBased => sol.c_p * n * t,
    };
    Ok(revenue - sol.c_w * sol.w)
}

/// Scans unilateral user deviations on `[0, T̄]` (`[1e-6 T̄, T̄]` at high
/// SNR) and provider deviations over the grid. An internal failure is
/// reported as an infinite gap.
pub fn deviation_check(
    solution: &EquilibriumSolution,
    inst: &ValidatedInstance,
    grid: &GridSpec,
) -> DeviationReport {
    let (user_gain, user_tolerance) =
        user_deviation_gain(solution, inst).unwrap_or((f64::INFINITY, 0.0));
    let provider = provider_value_at(solution, inst, grid).and_then(|here| {
        grid_provider(solution.c_w, inst, grid).map(|best| (best.v_p - here, here))
    });
    let (provider_gain, provider_tolerance) = match provider {
        Ok((gain, here)) => (
            gain.max(0.0),
            DEFAULT_REL_TOL * here.abs() + 1e-9 * inst.params().market_scale(),
        ),
        Err(_) => (f64::INFINITY, 0.0),
    };
    DeviationReport {
        user_gain,
        user_tolerance,
        provider_gain,
        provider_tolerance,
    }
}

/// One component of an oracle-versus-reference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentCheck {
    pub name: &'static str,
    pub oracle: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Grid-resolution allowance per component (`c_w, w, c_p, t, v_p, v_a`),
/// one coarse cell each; profits use first-order propagation of the cell
/// widths through `v_A = C_W W` and `v_P = revenue - C_W W`.
pub fn cell_allowance(
    oracle: &EquilibriumSolution,
    inst: &ValidatedInstance,
    grid: &GridSpec,
) -> [f64; 6] {
    let p = inst.params();
    let (cw, wc, cpc) = (grid.cw_cell(), grid.w_cell(), grid.cp_cell());
    let cp = if inst.scenario().is_flat() {
        let fee = |w: f64| throughput(p.t_bar, p.t_bar, w, inst).unwrap_or(f64::NAN);
        let w = oracle.w.max(wc);
        (fee(w + wc) - fee(w)).abs()
    } else {
        cpc
    };
    let t = p.t_bar / grid.cp_points as f64;
    let v_a = oracle.w * cw + oracle.c_w * wc;
    let v_p = v_a
        + if inst.scenario().is_flat() {
            p.nf() * cp
        } else {
            p.nf() * oracle.t * cpc
        };
    [cw, wc, cp, t, v_p, v_a]
}

/// Compares every headline component: passing means
/// `|oracle - reference| <= max(rel |reference|, cells * allowance)`.
pub fn compare(
    oracle: &EquilibriumSolution,
    reference: &EquilibriumSolution,
    inst: &ValidatedInstance,
    grid: &GridSpec,
    rel: f64,
    cells: f64,
) -> Vec<ComponentCheck> {
    let allowance = cell_allowance(oracle, inst, grid);
    oracle
        .components()
        .iter()
        .zip(reference.components())
        .zip(allowance)
        .map(|((&(name, o), (_, r)), cell)| {
            let tolerance = (rel * r.abs()).max(cells * cell);
            ComponentCheck {
                name,
                oracle: o,
                reference: r,
                tolerance,
                pass: (o - r).abs() <= tolerance,
            }
        })
        .collect()
}
