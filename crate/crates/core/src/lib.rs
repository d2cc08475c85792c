//! Co-occurrence network analysis of short consumer-grade EEG recordings.
//!
//! Epochs are encoded as binary vectors over five frequency bands plus the
//! trial outcome, accumulated into per-unit networks (symmetric and
//! directed/temporal), projected jointly into two dimensions and compared
//! between conditions.

pub mod codes;
pub mod dsp;
pub mod ingest;
pub mod network;
pub mod pipeline;
pub mod projection;
pub mod render;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use codes::{Code, Condition, Response, UnitId, CODE_COUNT};
pub use ingest::PipelineConfig;
pub use network::{NetworkKind, NormalizationMode};

/// Any error raised by the library, grouped by stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Projection(#[from] projection::ProjectionError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Render(#[from] render::RenderError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        use dsp::DspError as D;
        matches!(
            self,
            Error::Dsp(D::ConvergenceFailure(_) | D::UnstableFilter)
                | Error::Spectral(spectral::SpectralError::ZeroTotalPower)
                | Error::Stats(_)
                | Error::Projection(projection::ProjectionError::NonFinite(_) | projection::ProjectionError::NoConvergence)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
