//! Error types shared across the crate.

use crate::kernel::WalkPath;
use crate::lattice::LatticePoint;
use core::fmt;

/// Walk dynamics failed.
#[derive(Debug, Clone)]
pub enum WalkError {
    /// Every incident conductance at `site` vanishes, so the kernel is
    /// undefined there. Only reachable on zero-kappa projected fields.
    /// Carries the path walked so far when produced by a trajectory run.
    DegenerateVertex {
        site: LatticePoint,
        step: usize,
        partial: Option<WalkPath>,
    },
    /// A uniform outside `(0, 1]` was supplied for a step decision.
    UniformOutOfRange { value: f64 },
}

impl fmt::Display for WalkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkError::DegenerateVertex { site, step, .. } => write!(
                f,
                "degenerate vertex at {:?} (step {}): all incident conductances are zero",
                site.coords(),
                step
            ),
            WalkError::UniformOutOfRange { value } => {
                write!(f, "uniform {value} outside (0, 1]")
            }
        }
    }
}

impl core::error::Error for WalkError {}

/// Invalid environment-law operation or specification.
#[derive(Debug, Clone, PartialEq)]
pub enum LawError {
    /// Zero-kappa projection is only defined for the two-point law.
    NotTwoPoint,
    /// A law parameter is outside its admissible range.
    InvalidParameter { name: &'static str, value: f64 },
    /// Text form of a law could not be parsed.
    Parse { message: alloc::string::String },
}

impl fmt::Display for LawError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawError::NotTwoPoint => {
                write!(f, "zero-kappa projection requires a two-point law")
            }
            LawError::InvalidParameter { name, value } => {
                write!(f, "law parameter {name} = {value} out of range")
            }
            LawError::Parse { message } => write!(f, "law spec: {message}"),
        }
    }
}

impl core::error::Error for LawError {}

/// Regeneration-based estimation failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegenError {
    /// Fewer confirmed regenerations than the estimator needs.
    InsufficientRegenerations { found: usize, needed: usize },
}

impl fmt::Display for RegenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegenError::InsufficientRegenerations { found, needed } => write!(
                f,
                "insufficient regenerations: found {found}, need at least {needed}"
            ),
        }
    }
}

impl core::error::Error for RegenError {}

/// Electrical-network computation failed.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkError {
    /// Conjugate gradient did not reach the requested tolerance.
    NonConvergence { residual: f64, iterations: usize },
    /// A claimed cut set does not separate source from sink.
    InvalidCut { cut_index: usize },
    /// Vertex index out of range or boundary sets overlap.
    BadBoundary { message: alloc::string::String },
}

impl fmt::Display for NetworkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkError::NonConvergence { residual, iterations } => write!(
                f,
                "solver did not converge: residual {residual:.3e} after {iterations} iterations"
            ),
            NetworkError::InvalidCut { cut_index } => {
                write!(f, "cut {cut_index} does not separate source from sink")
            }
            NetworkError::BadBoundary { message } => write!(f, "bad boundary: {message}"),
        }
    }
}

impl core::error::Error for NetworkError {}

/// Statistical estimation failed before any sampling error enters.
#[derive(Debug, Clone)]
pub enum EstimateError {
    /// At least `needed` replicas are required.
    TooFewReplicas { got: usize, needed: usize },
    /// The reweighting window `t = alpha / (lambda - lambda0)^2` exceeds
    /// the configured horizon cap; carries the horizon that would be needed.
    WindowExceedsHorizon { required: usize, cap: usize },
    /// `lambda == lambda0` makes the window infinite.
    DegenerateWindow,
    /// A replica walk failed.
    Walk(WalkError),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::TooFewReplicas { got, needed } => {
                write!(f, "need at least {needed} replicas, got {got}")
            }
            EstimateError::WindowExceedsHorizon { required, cap } => write!(
                f,
                "reweighting window {required} exceeds horizon cap {cap}"
            ),
            EstimateError::DegenerateWindow => {
                write!(f, "lambda equals lambda0: reweighting window is infinite")
            }
            EstimateError::Walk(e) => write!(f, "replica walk failed: {e}"),
        }
    }
}

impl From<WalkError> for EstimateError {
    fn from(e: WalkError) -> Self {
        EstimateError::Walk(e)
    }
}

impl core::error::Error for EstimateError {}
