use thiserror::Error;

/// Errors raised by orbifold computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside domain of chart `{chart}`")]
    Domain { chart: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("group is not closed under composition: {0}")]
    NotClosed(String),
    #[error("coverage gap: {count} uncovered sample(s), first at {first:?}")]
    Coverage { count: usize, first: Vec<f64> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("inconsistent continuation: {0}")]
    Consistency(String),
    #[error("geodesic leaves the atlas at t = {time} before reaching t = {target}")]
    DomainOfExp { time: f64, target: f64 },
    #[error("cannot join geodesics: {0}")]
    Join(String),
    #[error("out of neighborhood on chart `{chart}`: {norm} = {value} exceeds {bound}")]
    Budget {
        chart: String,
        norm: String,
        value: f64,
        bound: f64,
    },
    #[error("inversion failed: {0}")]
    Inversion(String),
    #[error("flow escaped the budget region on chart `{chart}` at s = {time}")]
    FlowEscape { chart: String, time: f64 },
    #[error("descent failed: map is not well defined on orbits (residual {residual})")]
    Descent { residual: f64 },
    #[error("unsupported lift: {0}")]
    UnsupportedLift(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Whether the error stems from a numerical procedure rather than from input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Consistency(_)
                | Error::DomainOfExp { .. }
                | Error::Inversion(_)
                | Error::FlowEscape { .. }
                | Error::Budget { .. }
                | Error::Join(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
