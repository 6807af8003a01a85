use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A path delay does not fit inside one frame, so the circular
    /// convolution model is invalid.
    #[error("delay spread: path delay of {delay} taps does not fit a frame of {frame} samples")]
    DelaySpread { delay: usize, frame: usize },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
