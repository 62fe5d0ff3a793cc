use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("ellipticity violation: B(beta={beta}, x={x}) = {value} is not positive")]
    Ellipticity { beta: f64, x: f64, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("trajectory exploded at step {step}: |x| = {value:e} exceeds 1e12")]
    Explosion { step: usize, value: f64 },

    #[error("fewer than 2 observations (T = {horizon}, h = {step})")]
    TooFewObservations { horizon: f64, step: f64 },

    #[error("unknown model '{name}'; available models: {available}")]
    UnknownModel { name: String, available: String },

    #[error("unsupported Hermite order {0} (maximum is {max})", max = crate::hermite::MAX_ORDER)]
    UnsupportedOrder(usize),

    #[error("singular matrix (det = {det:e}) in {context}")]
    Singular { det: f64, context: String },

    #[error("optimizer: {0}")]
    Optimize(String),

    #[error("data row {row}: {msg}")]
    Data { row: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
