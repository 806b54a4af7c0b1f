//! Forward-mode differentiation, symmetric inversion and quadrature.

mod fd;
mod field;
mod linalg;
mod quad;
mod taylor;

use thiserror::Error;

pub use fd::{fd_derivative, fd_gradient, fd_hessian};
pub use field::{
    combine, combine_diff, constant, embed, eval_jet2, field_fn, line_integral, partial, project, reembed, Combined, ConstField, Embedded,
    Field, FnField, Jet2, LineIntegral, Partial, ScalarField,
};
pub use linalg::{
    degeneracy_threshold, determinant, invert_general, invert_symmetric, invert_symmetric_taylor,
    matmul, max_identity_defect, Entry,
};
pub use quad::{gauss_legendre, line_taylor, quad_1d, PanelRule};
pub use taylor::{axpy, monomials, Taylor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular matrix: |det| = {det:e} below threshold {threshold:e}")]
    Singular { det: f64, threshold: f64 },
    #[error("quadrature did not converge (best estimate {best}, error {error:e})")]
    Quadrature { best: f64, error: f64 },
}
