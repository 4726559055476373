use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model parse error{}: {message}", layer.map(|i| format!(" at layer {i}")).unwrap_or_default())]
    Parse { layer: Option<usize>, message: String },

    #[error("invalid interval [{lower}, {upper}]")]
    Interval { lower: f64, upper: f64 },

    #[error("interval [{lower}, {upper}] outside function domain [{start}, {end}]")]
    Domain {
        lower: f64,
        upper: f64,
        start: f64,
        end: f64,
    },

    #[error("invalid piecewise-linear function: {0}")]
    Pwl(String),

    #[error("bound engine state error: {0}")]
    State(String),

    #[error("rotation bounds failed validation at pixel {pixel} (violation {violation:e})")]
    Bounding { pixel: usize, violation: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn parse(layer: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            layer,
            message: message.into(),
        }
    }
}
