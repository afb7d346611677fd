//! Subset selection of smooth curves by a functional QR decomposition with
//! column pivoting.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`]: parse per-unit daily counts, align at the first death,
//!    normalize per million, repair negative artifacts and map to
//!    `log10(x + δ)`.
//! 2. [`smoothing`]: fit each record in a Fourier cosine basis with a
//!    second-derivative roughness penalty; pick the basis size and penalty
//!    by generalized cross validation.
//! 3. [`fqr`]: pivoted Householder QR of the coefficient matrix, which is a
//!    QR decomposition of the curves themselves because the basis is
//!    orthonormal.
//! 4. [`selection`]: keep the first `k` pivots, express the other curves
//!    through them and measure what is lost.

pub mod fqr;
pub mod ingest;
pub mod selection;
pub mod smoothing;

use thiserror::Error;

pub use fqr::{qrp, FunctionalMatrix, PivotedQr, QrError};
pub use ingest::{AlignedPanel, IngestError, LogPanel, RawPanel};
pub use selection::{SelectionError, SelectionReport};
pub use smoothing::{BasisSpec, Indexing, SmoothFit, SmoothingError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Qr(#[from] QrError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
