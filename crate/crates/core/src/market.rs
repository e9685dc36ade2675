//! Domain types shared by every layer: market constants, the scenario
//! selector, solver outputs, and the search and sweep settings.
//!
//! Everything here is plain immutable data. A [`ValidatedInstance`] can only
//! be built through [`validate`], so downstream code may assume positivity of
//! all constants and a well-defined scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_W_BAR: f64 = 1.0;

/// Exogenous constants of the market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Number of end users.
    pub n: u32,
    /// Crosstalk coefficient.
    #[serde(alias = "L")]
    pub l: f64,
    /// Channel fading gain.
    pub h: f64,
    /// Maximal per-user transmit power.
    pub t_bar: f64,
    /// Noise power.
    pub sigma2: f64,
    /// Bandwidth cap, only binding for power-based high-SNR cases.
    #[serde(default = "default_w_bar")]
    pub w_bar: f64,
    /// Owner undercut, only used by power-based high-SNR cases.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_w_bar() -> f64 {
    DEFAULT_W_BAR
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl MarketParams {
    pub fn new(n: u32, l: f64, h: f64, t_bar: f64, sigma2: f64) -> Self {
        MarketParams {
            n,
            l,
            h,
            t_bar,
            sigma2,
            w_bar: DEFAULT_W_BAR,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_w_bar(mut self, w_bar: f64) -> Self {
        self.w_bar = w_bar;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    /// Single-user received SNR scale `L h T̄ / σ²`.
    pub fn user_scale(&self) -> f64 {
        self.l * self.h * self.t_bar / self.sigma2
    }

    /// Market-wide scale `n L h T̄ / σ²`.
    pub fn market_scale(&self) -> f64 {
        self.nf() * self.user_scale()
    }

    /// Noise-normalised interference from the other users, `(n-1) h T̄ / σ²`.
    pub fn crowd_scale(&self) -> f64 {
        (self.nf() - 1.0) * self.h * self.t_bar / self.sigma2
    }
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams::new(10, 2.0, 1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FlatRate,
    PowerBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    InterferenceFree,
    Interference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    General,
    HighSnr,
}

impl Scheme {
    pub fn token(self) -> &'static str {
        match self {
            Scheme::FlatRate => "flat",
            Scheme::PowerBased => "power",
        }
    }
}

impl Model {
    pub fn token(self) -> &'static str {
        match self {
            Model::InterferenceFree => "free",
            Model::Interference => "interference",
        }
    }
}

impl Regime {
    pub fn token(self) -> &'static str {
        match self {
            Regime::General => "general",
            Regime::HighSnr => "high-snr",
        }
    }
}

macro_rules! token_from_str {
    ($ty:ty, $($tok:literal => $val:expr),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($tok => Ok($val),)+
                    other => Err(Error::invalid(stringify!($ty), format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

token_from_str!(Scheme, "flat" => Scheme::FlatRate, "flat_rate" => Scheme::FlatRate,
    "power" => Scheme::PowerBased, "power_based" => Scheme::PowerBased);
token_from_str!(Model, "free" => Model::InterferenceFree, "interference_free" => Model::InterferenceFree,
    "interference" => Model::Interference);
token_from_str!(Regime, "general" => Regime::General, "high-snr" => Regime::HighSnr,
    "high_snr" => Regime::HighSnr);

/// One point of the (pricing scheme, channel model, SNR regime) cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub scheme: Scheme,
    pub model: Model,
    pub regime: Regime,
}

impl Scenario {
    pub const fn new(scheme: Scheme, model: Model, regime: Regime) -> Self {
        Scenario {
            scheme,
            model,
            regime,
        }
    }

    /// All eight scenarios in a fixed order.
    pub fn all() -> [Scenario; 8] {
        let mut out =
            [Scenario::new(Scheme::PowerBased, Model::InterferenceFree, Regime::General); 8];
        let mut i = 0;
        for regime in [Regime::General, Regime::HighSnr] {
            for model in [Model::InterferenceFree, Model::Interference] {
                for scheme in [Scheme::PowerBased, Scheme::FlatRate] {
                    out[i] = Scenario::new(scheme, model, regime);
                    i += 1;
                }
            }
        }
        out
    }

    pub fn is_flat(&self) -> bool {
        self.scheme == Scheme::FlatRate
    }

    pub fn is_high_snr(&self) -> bool {
        self.regime == Regime::HighSnr
    }

    pub fn is_interference(&self) -> bool {
        self.model == Model::Interference
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.scheme.token(),
            self.model.token(),
            self.regime.token()
        )
    }
}

/// A parameter set that passed [`validate`] for a specific scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct ValidatedInstance {
    params: MarketParams,
    scenario: Scenario,
}

#[derive(Deserialize)]
struct RawInstance {
    params: MarketParams,
    scenario: Scenario,
}

impl TryFrom<RawInstance> for ValidatedInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        validate(raw.params, raw.scenario)
    }
}

impl ValidatedInstance {
    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Same parameters, different scenario (re-validated).
    pub fn with_scenario(&self, scenario: Scenario) -> Result<Self> {
        validate(self.params, scenario)
    }
}

fn check_positive(field: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(field, "must be finite"));
    }
    if value <= 0.0 {
        return Err(Error::invalid(field, format!("must be > 0, got {value}")));
    }
    Ok(())
}

/// Checks the market constants against the requirements of `scenario`.
pub fn validate(params: MarketParams, scenario: Scenario) -> Result<ValidatedInstance> {
    if params.n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    check_positive("l", params.l)?;
    check_positive("h", params.h)?;
    check_positive("t_bar", params.t_bar)?;
    check_positive("sigma2", params.sigma2)?;
    check_positive("w_bar", params.w_bar)?;
    check_positive("epsilon", params.epsilon)?;
    if params.epsilon >= 1.0 {
        return Err(Error::invalid("epsilon", "must be < 1"));
    }
    // The owner bound n ln(1 + L/(n-1)) is undefined for a single user.
    if params.n == 1
        && scenario == Scenario::new(Scheme::FlatRate, Model::Interference, Regime::General)
    {
        return Err(Error::invalid("n", "interference formulas need n>=2"));
    }
    Ok(ValidatedInstance { params, scenario })
}

/// How an [`EquilibriumSolution`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Numerical,
    Oracle,
}

/// Full equilibrium tuple plus derived per-user quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub c_w: f64,
    pub w: f64,
    pub c_p: f64,
    pub t: f64,
    pub v_p: f64,
    pub v_a: f64,
    pub u_user: f64,
    pub throughput: f64,
    /// SNR (or SINR) each user sees at the equilibrium.
    pub snr: f64,
    pub method: Method,
}

impl EquilibriumSolution {
    /// The six headline components in table order.
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("c_w", self.c_w),
            ("w", self.w),
            ("c_p", self.c_p),
            ("t", self.t),
            ("v_p", self.v_p),
            ("v_a", self.v_a),
        ]
    }

    /// Largest relative difference over the headline components and the
    /// per-user rate. Utility is measured against the rate as well, since the
    /// flat-rate participation fee drives it to zero up to rounding.
    pub fn max_rel_discrepancy(&self, other: &EquilibriumSolution) -> f64 {
        let headline = self
            .components()
            .iter()
            .zip(other.components())
            .map(|(&(_, a), (_, b))| rel_diff(a, b))
            .fold(rel_diff(self.throughput, other.throughput), f64::max);
        let u_scale = [self.u_user, other.u_user, self.throughput, other.throughput]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let u_gap = if u_scale == 0.0 {
            0.0
        } else {
            (self.u_user - other.u_user).abs() / u_scale
        };
        headline.max(u_gap)
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn default_passes() -> usize {
    GridSpec::DEFAULT_PASSES
}

/// Resolution and bounds of the brute-force search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cw_points: usize,
    pub w_points: usize,
    pub cp_points: usize,
    pub cw_max: f64,
    pub w_max: f64,
    pub cp_max: f64,
    /// Sub-steps per cell in each local refinement pass; 0 or 1 disables refinement.
    pub refine: usize,
    /// Upper bound on refinement passes per search level.
    #[serde(default = "default_passes")]
    pub passes: usize,
    pub br_tol: f64,
    pub br_max_iter: usize,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 256;
    pub const DEFAULT_REFINE: usize = 8;
    pub const DEFAULT_PASSES: usize = 16;

    /// Default bounds bracketing the optimum of `inst`. `cw_hint` is a
    /// known or expected owner tariff; without it the flat-rate owner bound
    /// `n ln(1 + L / max(1, n-1))` is used.
    pub fn for_instance(inst: &ValidatedInstance, cw_hint: Option<f64>) -> GridSpec {
        let p = inst.params();
        let sc = inst.scenario();
        let cw_base = cw_hint
            .filter(|c| c.is_finite() && *c > 0.0)
            .unwrap_or_else(|| p.nf() * (1.0 + p.l / (p.nf() - 1.0).max(1.0)).ln());
        let w_max = match sc.model {
            Model::InterferenceFree => 4.0 * p.market_scale(),
            Model::Interference => 4.0 * (p.user_scale() + p.crowd_scale()),
        };
        let mut cp_max = 2.0 * p.l * p.h / p.sigma2;
        if sc.is_high_snr() && !sc.is_flat() {
            cp_max = cp_max.max(2.0 * p.w_bar / p.t_bar);
        }
        GridSpec {
            cw_points: Self::DEFAULT_POINTS,
            w_points: Self::DEFAULT_POINTS,
            cp_points: Self::DEFAULT_POINTS,
            cw_max: 2.0 * cw_base,
            w_max,
            cp_max,
            refine: Self::DEFAULT_REFINE,
            passes: Self::DEFAULT_PASSES,
            br_tol: 1e-12 * p.t_bar,
            br_max_iter: 10_000,
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.cw_points = points;
        self.w_points = points;
        self.cp_points = points;
        self
    }

    pub fn with_refine(mut self, refine: usize) -> Self {
        self.refine = refine;
        self
    }

    pub fn cw_cell(&self) -> f64 {
        self.cw_max / self.cw_points as f64
    }

    pub fn w_cell(&self) -> f64 {
        self.w_max / self.w_points as f64
    }

    pub fn cp_cell(&self) -> f64 {
        self.cp_max / self.cp_points as f64
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("cw_points", self.cw_points),
            ("w_points", self.w_points),
            ("cp_points", self.cp_points),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        check_positive("cw_max", self.cw_max)?;
        check_positive("w_max", self.w_max)?;
        check_positive("cp_max", self.cp_max)?;
        check_positive("br_tol", self.br_tol)?;
        if self.br_max_iter == 0 {
            return Err(Error::invalid("br_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    N,
    TBar,
    L,
    H,
    Sigma2,
}

impl SweepVar {
    pub fn token(self) -> &'static str {
        match self {
            SweepVar::N => "n",
            SweepVar::TBar => "t_bar",
            SweepVar::L => "l",
            SweepVar::H => "h",
            SweepVar::Sigma2 => "sigma2",
        }
    }

    /// Copy of `params` with this variable set to `value`.
    pub fn apply(self, params: &MarketParams, value: f64) -> MarketParams {
        let mut p = *params;
        match self {
            // Sweep points for n are rounded before they get here.
            SweepVar::N => p.n = value as u32,
            SweepVar::TBar => p.t_bar = value,
            SweepVar::L => p.l = value,
            SweepVar::H => p.h = value,
            SweepVar::Sigma2 => p.sigma2 = value,
        }
        p
    }
}

token_from_str!(SweepVar, "n" => SweepVar::N, "t_bar" => SweepVar::TBar, "tbar" => SweepVar::TBar,
    "l" => SweepVar::L, "L" => SweepVar::L, "h" => SweepVar::H, "sigma2" => SweepVar::Sigma2);

/// Which parameter to vary and over what range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn new(variable: SweepVar, start: f64, stop: f64, steps: usize) -> Result<Self> {
        let spec = SweepSpec {
            variable,
            start,
            stop,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::invalid("sweep", "range endpoints must be finite"));
        }
        if self.start > self.stop {
            return Err(Error::invalid("sweep", "start must not exceed stop"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("sweep", "steps must be at least 1"));
        }
        if self.variable == SweepVar::N && self.start < 1.0 {
            return Err(Error::invalid("sweep", "n sweeps must start at 1 or above"));
        }
        Ok(())
    }

    /// Evenly spaced points; `n` sweeps are rounded to integers.
    pub fn points(&self) -> Vec<f64> {
        let raw = (0..self.steps).map(|i| {
            if self.steps == 1 {
                self.start
            } else {
                self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64
            }
        });
        match self.variable {
            SweepVar::N => raw.map(f64::round).collect(),
            _ => raw.collect(),
        }
    }
}

/// Parses `var=start:stop:steps`.
impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::invalid("sweep", format!("`{s}`: {why}"));
        let (var, range) = s
            .split_once('=')
            .ok_or_else(|| bad("expected var=start:stop:steps"))?;
        let variable: SweepVar = var.trim().parse().map_err(|_| bad("unknown variable"))?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected three `:`-separated fields"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad("bad start"))?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad("bad stop"))?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad("bad steps"))?;
        SweepSpec::new(variable, start, stop, steps)
    }
}
