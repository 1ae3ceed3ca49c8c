//! Context-conditioned generation of NFT collection transaction series.
//!
//! Pipeline: sale events ([`ingest`]) become per-token daily series
//! ([`series`]); first-quarter series are embedded as collection contexts
//! ([`context`]); an LSTM conditioned on the context ([`nn`]) generates the
//! remaining three quarters, which are made piecewise constant
//! ([`transform`]) and scored ([`metrics`]). [`synth`] produces seeded
//! benchmark corpora.

pub mod context;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod series;
pub mod synth;
pub mod transform;
pub mod wei;

pub use context::{ContextModel, ContextTable, ContextVector};
pub use ingest::SaleEvent;
pub use series::{CollectionSeries, DailyPoint, Quarter, TokenSeries};
pub use wei::Wei;

/// Broad failure class of an [`Error`], used to pick a process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or arguments.
    Usage,
    /// Missing, malformed or unsuitable input data.
    Data,
    /// A computation produced non-finite or degenerate values.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("series: {0}")]
    Series(#[from] series::SeriesError),
    #[error("synth: {0}")]
    Synth(#[from] synth::SynthError),
    #[error("context: {0}")]
    Context(#[from] context::ContextError),
    #[error("nn: {0}")]
    Nn(#[from] nn::NnError),
    #[error("transform: {0}")]
    Transform(#[from] transform::TransformError),
    #[error("metrics: {0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("amount: {0}")]
    Decimal(#[from] wei::DecimalError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Ingest(e) => ingest_kind(e),
            Error::Series(_) | Error::Decimal(_) => ErrorKind::Data,
            Error::Synth(_) => ErrorKind::Usage,
            Error::Context(e) => context_kind(e),
            Error::Nn(e) => nn_kind(e),
            Error::Transform(e) => transform_kind(e),
            Error::Metrics(e) => metrics_kind(e),
        }
    }
}

/// Classifies an error raised anywhere in this crate, returning the name of
/// its type alongside its kind; `None` for foreign errors.
pub fn classify(e: &(dyn std::error::Error + 'static)) -> Option<(&'static str, ErrorKind)> {
    if let Some(e) = e.downcast_ref::<Error>() {
        return Some(("Error", e.kind()));
    }
    if let Some(e) = e.downcast_ref::<ingest::IngestError>() {
        return Some(("IngestError", ingest_kind(e)));
    }
    if e.is::<series::SeriesError>() {
        return Some(("SeriesError", ErrorKind::Data));
    }
    if e.is::<synth::SynthError>() {
        return Some(("SynthError", ErrorKind::Usage));
    }
    if let Some(e) = e.downcast_ref::<context::ContextError>() {
        return Some(("ContextError", context_kind(e)));
    }
    if let Some(e) = e.downcast_ref::<nn::NnError>() {
        return Some(("NnError", nn_kind(e)));
    }
    if let Some(e) = e.downcast_ref::<transform::TransformError>() {
        return Some(("TransformError", transform_kind(e)));
    }
    if let Some(e) = e.downcast_ref::<metrics::MetricsError>() {
        return Some(("MetricsError", metrics_kind(e)));
    }
    if e.is::<wei::DecimalError>() {
        return Some(("DecimalError", ErrorKind::Data));
    }
    None
}

fn ingest_kind(e: &ingest::IngestError) -> ErrorKind {
    match e {
        ingest::IngestError::Config(_) => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

fn context_kind(e: &context::ContextError) -> ErrorKind {
    use context::ContextError as E;
    match e {
        E::RankDeficient { .. } | E::DegenerateRange => ErrorKind::Numeric,
        _ => ErrorKind::Data,
    }
}

fn nn_kind(e: &nn::NnError) -> ErrorKind {
    use nn::NnError as E;
    match e {
        E::NonFinite(_) => ErrorKind::Numeric,
        E::InvalidConfig(_) => ErrorKind::Usage,
        _ => ErrorKind::Data,
    }
}

fn transform_kind(e: &transform::TransformError) -> ErrorKind {
    match e {
        transform::TransformError::NonFinite { .. } => ErrorKind::Numeric,
        _ => ErrorKind::Data,
    }
}

fn metrics_kind(e: &metrics::MetricsError) -> ErrorKind {
    use metrics::MetricsError as E;
    match e {
        E::DegenerateVariance => ErrorKind::Numeric,
        E::Context(e) => context_kind(e),
        E::Nn(e) => nn_kind(e),
        E::Transform(e) => transform_kind(e),
        _ => ErrorKind::Data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_follow_nested_errors() {
        let e = Error::from(metrics::MetricsError::Nn(nn::NnError::NonFinite("loss".into())));
        assert_eq!(e.kind(), ErrorKind::Numeric);
        let e = Error::from(nn::NnError::CorruptCheckpoint("magic".into()));
        assert_eq!(e.kind(), ErrorKind::Data);
        let e = Error::from(nn::NnError::InvalidConfig("window".into()));
        assert_eq!(e.kind(), ErrorKind::Usage);
        assert!(e.to_string().starts_with("nn: "));
        let raw = context::ContextError::DegenerateRange;
        assert_eq!(classify(&raw), Some(("ContextError", ErrorKind::Numeric)));
        assert_eq!(classify(&std::io::Error::other("x")), None);
    }
}
