use thiserror::Error;

/// Failures reported by every layer of the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("best-response iteration did not converge within {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("no sign change on [{lo:e}, {hi:e}] for {what}")]
    NoRoot {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("tariff c_w = {c_w} is infeasible: the provider leases no bandwidth")]
    InfeasibleTariff { c_w: f64 },

    #[error("at grid cell (c_w = {}, w = {w}, c_p = {c_p}): {source}", fmt_tariff(*c_w))]
    AtCell {
        /// Absent when the cell was evaluated independently of any owner tariff.
        c_w: Option<f64>,
        w: f64,
        c_p: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

fn fmt_tariff(c_w: Option<f64>) -> String {
    c_w.map_or_else(|| "any".to_string(), |c| c.to_string())
}

pub type Result<T> = std::result::Result<T, Error>;
