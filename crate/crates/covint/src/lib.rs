//! Bracketed Riemann-Darboux integration over Jordan measurable sets, with a
//! numerical change-of-variables verifier built on top.
//!
//! The toolkit never reports a bare number where a bracket is possible: content
//! estimates come back as `(inner, outer)` pairs, integrals as
//! `(lower, upper)` Darboux brackets, and the change-of-variables engine
//! compares two independently computed brackets before issuing a verdict.
//!
//! Module map:
//!
//! - [`geometry`]: points, cubes, axis boxes, Jordan sets and inner/outer
//!   content brackets on dyadic grids.
//! - [`partition`]: cube partitions, dotted (tagged) partitions, norms,
//!   refinement and validation.
//! - [`darboux`]: lower/upper/oscillation/Riemann sums and bracketed integrals
//!   with a per-depth convergence trace.
//! - [`cousin`]: constructive delta-fine dotted partitions for explicit gauges
//!   and a fineness verifier.
//! - [`expr`]: a small arithmetic expression language so maps, integrands and
//!   gauges can be given as text.
//! - [`linalg`]: dense little matrices, LU factorization, determinants.
//! - [`diff`]: strong-differentiability probes, the difference-quotient
//!   density field, set-function derivatives, Lipschitz estimation and
//!   McShane extension.
//! - [`cov`]: pushforward content, density checks, the change-of-variables
//!   verdict engine, injectivity probing and singular-image (Sard) accounting.
//!
//! Estimates obtained by sampling a black-box function are labeled as such:
//! `Sampled` bounds are heuristic, `Modulus` bounds are enclosures under a
//! caller-supplied Lipschitz constant. See [`darboux::BoundMode`].
//!
//! ```
//! use std::sync::Arc;
//! use covint::geometry::{content_bracket, AxisBox, Classifier, JordanSet, Membership, Point};
//!
//! // the closed unit disk, described by a membership classifier
//! let mut disk = Classifier::new(
//!     AxisBox::from_coords(vec![-1.0, -1.0], vec![1.0, 1.0]),
//!     Arc::new(|p: &Point| {
//!         if p.get(0) * p.get(0) + p.get(1) * p.get(1) <= 1.0 {
//!             Membership::Inside
//!         } else {
//!             Membership::Outside
//!         }
//!     }),
//! );
//! disk.convex_safe = true; // corner certification is exact for convex sets
//!
//! let bracket = content_bracket(&JordanSet::Classified(disk), 7, 1 << 26)?;
//! assert!(bracket.inner <= std::f64::consts::PI);
//! assert!(std::f64::consts::PI <= bracket.outer);
//! assert!(bracket.width() < 0.2);
//! # Ok::<(), covint::geometry::GeometryError>(())
//! ```

pub mod cousin;
pub mod cov;
pub mod darboux;
pub mod diff;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod partition;

use std::sync::Arc;

use expr::{EvalError, Expr, VectorExpr};
use geometry::Point;
use linalg::Matrix;

/// A scalar-valued function of a point, shared and callable from anywhere.
pub type ScalarField = Arc<dyn Fn(&Point) -> Result<f64, EvalError> + Send + Sync>;

/// A vector-valued function of a point (same ambient dimension in and out).
pub type VectorField = Arc<dyn Fn(&Point) -> Result<Vec<f64>, EvalError> + Send + Sync>;

/// A matrix-valued function of a point.
pub type MatrixField = Arc<dyn Fn(&Point) -> Result<Matrix, EvalError> + Send + Sync>;

/// Constructors for [`ScalarField`] and [`VectorField`] handles.
pub mod fields {
    use super::*;

    pub fn scalar_fn<F>(f: F) -> ScalarField
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        Arc::new(move |p| {
            let v = f(p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(EvalError::non_finite(p.coords()))
            }
        })
    }

    pub fn vector_fn<F>(f: F) -> VectorField
    where
        F: Fn(&Point) -> Vec<f64> + Send + Sync + 'static,
    {
        Arc::new(move |p| {
            let v = f(p);
            if v.iter().all(|c| c.is_finite()) {
                Ok(v)
            } else {
                Err(EvalError::non_finite(p.coords()))
            }
        })
    }

    pub fn scalar_expr(e: Expr) -> ScalarField {
        Arc::new(move |p| e.eval(p))
    }

    pub fn vector_expr(v: VectorExpr) -> VectorField {
        Arc::new(move |p| v.eval(p))
    }

    /// The affine map `x -> Ax + b`.
    pub fn affine(a: Matrix, b: Vec<f64>) -> VectorField {
        assert_eq!(a.dim(), b.len(), "matrix and offset dimension mismatch");
        Arc::new(move |p| {
            let mut out = a.mul_vec(p.coords());
            for (o, bi) in out.iter_mut().zip(&b) {
                *o += bi;
            }
            Ok(out)
        })
    }

    /// The identity map in dimension `m`.
    pub fn identity(m: usize) -> VectorField {
        affine(Matrix::identity(m), vec![0.0; m])
    }
}
