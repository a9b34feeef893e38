//! Numeric strong-differentiability probes, strong partial difference
//! quotients, the determinant density field, set-function derivatives,
//! Lipschitz estimation and extension.
//!
//! The central object is [`DensityField`]: for a map `G` on a Jordan set `X`
//! it estimates the matrix field
//! `gbar[i][j](x) = inf over r of sup of (G_i(z) - G_i(y)) / (z_j - y_j)`
//! with the sup over axis-`j` pairs inside the ball `B(x, r)`, and from it
//! the scalar density `|det gbar(x)|`. The true inf/sup range over all pairs
//! and all radii; the field approximates them with a finite decreasing radius
//! schedule and finite pair lattices, reports the schedule, and never claims
//! exactness. Points without interior margin for even the smallest scheduled
//! radius get the zero matrix (the boundary case split).
//!
//! Sampling details: along the probed axis the lattice has `pair_samples`
//! positions spanning 90% of the ball, so pair separations stay at or above
//! `r / pair_samples` and difference quotients do not collapse into floating
//! point cancellation. The off-axis coordinates take `pair_samples`
//! deterministic offsets (first one centered, the rest a Weyl sequence), so
//! field queries are reproducible without any RNG.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use thiserror::Error;

use crate::expr::EvalError;
use crate::geometry::{AxisBox, Cube, JordanSet, Membership, Point};
use crate::linalg::{LinalgError, LuFactors, Matrix};
use crate::VectorField;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("derivative matrix is singular at {at}")]
    SingularDerivative { at: Point },
    #[error("operation needs a nonempty sample set")]
    EmptySamples,
    #[error(
        "samples violate the declared Lipschitz constant: pair ({i}, {j}) has quotient {quotient}"
    )]
    LipschitzViolated { i: usize, j: usize, quotient: f64 },
    #[error("radius schedule must be positive and strictly decreasing")]
    BadRadii,
    #[error("map returned {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl From<LinalgError> for DiffError {
    fn from(_: LinalgError) -> Self {
        DiffError::EmptySamples
    }
}

const WEYL_PRIMES: [f64; 16] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
];

/// Deterministic off-axis offset in (-0.9, 0.9); base 0 is centered.
fn weyl_offset(base: usize, axis: usize) -> f64 {
    if base == 0 {
        return 0.0;
    }
    let alpha = WEYL_PRIMES[axis % WEYL_PRIMES.len()].sqrt().fract();
    0.9 * (2.0 * (base as f64 * alpha).fract() - 1.0)
}

/// Extreme axis-`j` difference quotients of every component of `g` inside
/// `B(x, r)`: for each `i`, the min and max of
/// `(G_i(z) - G_i(y)) / (z_j - y_j)` over the sampled pairs.
fn quotient_extremes_all(
    g: &VectorField,
    j: usize,
    x: &Point,
    r: f64,
    k: usize,
) -> Result<Vec<(f64, f64)>, DiffError> {
    let m = x.dim();
    assert!(k >= 2, "need at least two sample positions per axis");
    assert!(r > 0.0);
    let positions: Vec<f64> = (0..k)
        .map(|c| x.get(j) + 0.9 * r * (2.0 * c as f64 / (k - 1) as f64 - 1.0))
        .collect();
    let min_sep = r / k as f64;
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
    let mut coords = vec![0.0f64; m];
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(k);
    for base in 0..k {
        for d in 0..m {
            coords[d] = if d == j {
                0.0
            } else {
                x.get(d) + r * weyl_offset(base, d)
            };
        }
        values.clear();
        for &p in &positions {
            coords[j] = p;
            let v = g(&Point::new(coords.clone()))?;
            if v.len() != m {
                return Err(DiffError::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
            if !v.iter().all(|c| c.is_finite()) {
                return Err(EvalError::non_finite(&coords).into());
            }
            values.push(v);
        }
        for c in 0..k {
            for d in (c + 1)..k {
                let dx = positions[d] - positions[c];
                if dx.abs() < min_sep {
                    continue;
                }
                for i in 0..m {
                    let q = (values[d][i] - values[c][i]) / dx;
                    out[i].0 = out[i].0.min(q);
                    out[i].1 = out[i].1.max(q);
                }
            }
        }
    }
    Ok(out)
}

/// Min and max sampled axis-`j` difference quotient of component `i` of `g`
/// over pairs in `B(x, r)` differing only in coordinate `j`.
pub fn strong_partial_quotient_range(
    g: &VectorField,
    i: usize,
    j: usize,
    x: &Point,
    r: f64,
    k: usize,
) -> Result<(f64, f64), DiffError> {
    Ok(quotient_extremes_all(g, j, x, r, k)?[i])
}

/// The matrix field `gbar` and scalar density `|det gbar|` for a map over a
/// Jordan set, with a decreasing radius schedule and a query cache.
pub struct DensityField {
    map: VectorField,
    domain: JordanSet,
    radii: Vec<f64>,
    pair_samples: usize,
    cache: Mutex<HashMap<Vec<u64>, Matrix>>,
}

impl DensityField {
    pub fn new(
        map: VectorField,
        domain: JordanSet,
        radii: Vec<f64>,
        pair_samples: usize,
    ) -> Result<Self, DiffError> {
        if radii.is_empty()
            || radii.iter().any(|r| *r <= 0.0 || !r.is_finite())
            || radii.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(DiffError::BadRadii);
        }
        Ok(DensityField {
            map,
            domain,
            radii,
            pair_samples: pair_samples.max(2),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn map(&self) -> &VectorField {
        &self.map
    }

    pub fn domain(&self) -> &JordanSet {
        &self.domain
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn pair_samples(&self) -> usize {
        self.pair_samples
    }

    /// Scheduled radii whose closed ball around `x` is certified inside the
    /// domain. Empty for boundary points.
    pub fn fitting_radii(&self, x: &Point) -> Vec<f64> {
        self.radii
            .iter()
            .copied()
            .filter(|&r| self.domain.contains_cube(x, r))
            .collect()
    }

    /// Entry `(i, j)` is the minimum over the fitting radii of the largest
    /// sampled quotient. Points with no fitting radius return the zero
    /// matrix, the boundary case split.
    pub fn gbar(&self, x: &Point) -> Result<Matrix, DiffError> {
        let key = x.bit_key();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let out = self.gbar_uncached(x)?;
        self.cache.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    fn gbar_uncached(&self, x: &Point) -> Result<Matrix, DiffError> {
        let m = x.dim();
        let fitting = self.fitting_radii(x);
        let mut out = Matrix::zeros(m);
        if fitting.is_empty() {
            return Ok(out);
        }
        for j in 0..m {
            let mut best = vec![f64::INFINITY; m];
            for &r in &fitting {
                let extremes = quotient_extremes_all(&self.map, j, x, r, self.pair_samples)?;
                for i in 0..m {
                    best[i] = best[i].min(extremes[i].1);
                }
            }
            for i in 0..m {
                out.set(i, j, best[i]);
            }
        }
        Ok(out)
    }

    /// `|det gbar(x)|`, by elimination with partial pivoting.
    pub fn density(&self, x: &Point) -> Result<f64, DiffError> {
        Ok(self.gbar(x)?.determinant().abs())
    }
}

/// Wraps a shared field as a scalar integrand handle.
pub fn density_scalar_field(field: std::sync::Arc<DensityField>) -> crate::ScalarField {
    std::sync::Arc::new(move |p: &Point| {
        field.density(p).map_err(|e| match e {
            DiffError::Eval(e) => e,
            _ => EvalError::non_finite(p.coords()),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrongDiffVerdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Result of probing strong differentiability at a point.
#[derive(Debug, Clone)]
pub struct StrongDiffReport {
    pub candidate: Matrix,
    /// `(radius, sup of |G(z) - G(y) - A(z - y)| / |z - y|)` per radius,
    /// radii strictly decreasing.
    pub defect_by_radius: Vec<(f64, f64)>,
    pub verdict: StrongDiffVerdict,
}

/// Probes the two-point differentiability defect of the field's map at `x`
/// against `a_hint` (or `gbar(x)` when no hint is given).
///
/// Pass requires the final defect below `tol` without growth over the last
/// two radii; Fail requires the defect to stay an order of magnitude above
/// `tol` without decaying across the schedule; everything else is
/// Inconclusive. A limit property probed at finitely many scales gets three
/// honest answers, not two.
pub fn strong_diff_test(
    field: &DensityField,
    x: &Point,
    a_hint: Option<Matrix>,
    pairs: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<StrongDiffReport, DiffError> {
    let m = x.dim();
    let candidate = match a_hint {
        Some(a) => a,
        None => field.gbar(x)?,
    };
    let fitting = field.fitting_radii(x);
    if fitting.is_empty() {
        return Ok(StrongDiffReport {
            candidate,
            defect_by_radius: Vec::new(),
            verdict: StrongDiffVerdict::Inconclusive,
        });
    }
    let g = field.map();
    let mut defect_by_radius = Vec::with_capacity(fitting.len());
    for &r in &fitting {
        let mut defect = 0.0f64;
        for _ in 0..pairs.max(1) {
            let mut y = vec![0.0f64; m];
            let mut z = vec![0.0f64; m];
            // separation floor r/4 keeps quotients out of rounding noise
            let mut tries = 0;
            loop {
                for d in 0..m {
                    y[d] = x.get(d) + 0.95 * r * rng.gen_range(-1.0..1.0);
                    z[d] = x.get(d) + 0.95 * r * rng.gen_range(-1.0..1.0);
                }
                if crate::geometry::dist_max(&y, &z) >= 0.25 * r || tries > 64 {
                    break;
                }
                tries += 1;
            }
            let sep = crate::geometry::dist_max(&y, &z);
            if sep <= 0.0 {
                continue;
            }
            let gy = g(&Point::new(y.clone()))?;
            let gz = g(&Point::new(z.clone()))?;
            let diff: Vec<f64> = (0..m).map(|d| z[d] - y[d]).collect();
            let a_diff = candidate.mul_vec(&diff);
            let residual = (0..m)
                .map(|d| (gz[d] - gy[d] - a_diff[d]).abs())
                .fold(0.0, f64::max);
            defect = defect.max(residual / sep);
        }
        defect_by_radius.push((r, defect));
    }
    let first = defect_by_radius.first().map(|&(_, d)| d).unwrap_or(0.0);
    let last = defect_by_radius.last().map(|&(_, d)| d).unwrap_or(0.0);
    let prev = if defect_by_radius.len() >= 2 {
        defect_by_radius[defect_by_radius.len() - 2].1
    } else {
        last
    };
    let verdict = if last < tol && last <= prev + 0.1 * tol {
        StrongDiffVerdict::Pass
    } else if last > 10.0 * tol && last >= 0.5 * first {
        StrongDiffVerdict::Fail
    } else {
        StrongDiffVerdict::Inconclusive
    };
    Ok(StrongDiffReport {
        candidate,
        defect_by_radius,
        verdict,
    })
}

/// Trace of set-function difference quotients `Phi(I)/V(I)` on a shrinking
/// cube schedule around `u`.
#[derive(Debug, Clone)]
pub struct SetFnTrace {
    /// `(radius, quotient)` rows, radii strictly decreasing.
    pub quotients: Vec<(f64, f64)>,
    /// Quotient at the smallest radius.
    pub estimate: f64,
}

/// Difference quotients of a cube function at `u`: for each scheduled radius
/// the cube `B(u, r/2)` inside `B(u, r)` is queried. Cubes are near `u` but
/// the strong variant would not require them to contain it.
pub fn setfn_derivative(
    phi: impl Fn(&Cube) -> Result<f64, EvalError>,
    u: &Point,
    radii: &[f64],
) -> Result<SetFnTrace, DiffError> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] <= w[1]) {
        return Err(DiffError::BadRadii);
    }
    let mut quotients = Vec::with_capacity(radii.len());
    for &r in radii {
        let cube = Cube::new(u.clone(), r / 2.0);
        let v = phi(&cube)?;
        quotients.push((r, v / cube.volume()));
    }
    let estimate = quotients.last().unwrap().1;
    Ok(SetFnTrace {
        quotients,
        estimate,
    })
}

#[derive(Debug, Clone)]
pub struct InverseInclusionReport {
    pub samples: usize,
    /// Sampled `v` with `G(v)` outside the outer affine image.
    pub outer_failures: Vec<Point>,
    /// Sampled targets whose contraction iteration failed to land inside.
    pub inner_failures: Vec<Point>,
}

impl InverseInclusionReport {
    pub fn passed(&self) -> bool {
        self.outer_failures.is_empty() && self.inner_failures.is_empty()
    }
}

/// Contraction iteration `z <- z - M^{-1} (G(z) - target)` from `start`.
/// Returns the converged point (or None on divergence or exhaustion) along
/// with the number of iterations consumed.
pub(crate) fn contraction_solve(
    g: &VectorField,
    lu: &LuFactors,
    start: &[f64],
    target: &[f64],
    max_iters: u32,
    tol: f64,
    guard: &AxisBox,
) -> Result<(Option<Vec<f64>>, u32), EvalError> {
    let m = start.len();
    let mut z = start.to_vec();
    for iter in 0..max_iters {
        let gz = g(&Point::new(z.clone()))?;
        if gz.len() != m || !gz.iter().all(|c| c.is_finite()) {
            return Ok((None, iter + 1));
        }
        let residual: Vec<f64> = (0..m).map(|d| gz[d] - target[d]).collect();
        if crate::geometry::norm_max(&residual) <= tol {
            return Ok((Some(z), iter + 1));
        }
        let step = match lu.solve(&residual) {
            Ok(s) => s,
            Err(_) => return Ok((None, iter + 1)),
        };
        for d in 0..m {
            z[d] -= step[d];
        }
        if !z.iter().all(|c| c.is_finite()) || !guard.contains_coords(&z) {
            return Ok((None, iter + 1));
        }
    }
    Ok((None, max_iters))
}

/// Verifies both inclusions of the local inverse estimate at `u`:
/// the image of `B(u, r)` stays inside the affine image of `B(u, (1+eps) r)`,
/// and every affine target within `(1-eps) r` is hit by a contraction
/// iteration that stays inside `B(u, r)`. The estimated derivative must be
/// regular: `|det gbar(u)| < det_tol` is a precondition failure.
#[allow(clippy::too_many_arguments)]
pub fn inverse_inclusion_check(
    field: &DensityField,
    u: &Point,
    eps: f64,
    delta: f64,
    r: f64,
    samples: usize,
    det_tol: f64,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<InverseInclusionReport, DiffError> {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    assert!(r > 0.0 && r <= delta, "need 0 < r <= delta");
    let m = u.dim();
    let mat = field.gbar(u)?;
    let lu = LuFactors::new(&mat);
    if lu.is_singular() || lu.det().abs() < det_tol {
        return Err(DiffError::SingularDerivative { at: u.clone() });
    }
    let g = field.map();
    let gu = g(u)?;
    let guard = Cube::new(u.clone(), 4.0 * r).to_box();
    let mut outer_failures = Vec::new();
    let mut inner_failures = Vec::new();
    for _ in 0..samples {
        // outer inclusion: G(v) lies in the affine image of B(u, (1+eps) r)
        let v: Vec<f64> = (0..m)
            .map(|d| u.get(d) + r * rng.gen_range(-1.0..1.0))
            .collect();
        let gv = g(&Point::new(v.clone()))?;
        let shifted: Vec<f64> = (0..m).map(|d| gv[d] - gu[d]).collect();
        let w = lu.solve(&shifted)?;
        if crate::geometry::norm_max(&w) > (1.0 + eps) * r * (1.0 + 1e-9) {
            outer_failures.push(Point::new(v));
        }

        // inner inclusion: affine targets within (1-eps) r have preimages
        let v: Vec<f64> = (0..m)
            .map(|d| u.get(d) + (1.0 - eps) * r * rng.gen_range(-1.0..1.0))
            .collect();
        let offset: Vec<f64> = (0..m).map(|d| v[d] - u.get(d)).collect();
        let mv = mat.mul_vec(&offset);
        let target: Vec<f64> = (0..m).map(|d| gu[d] + mv[d]).collect();
        match contraction_solve(g, &lu, u.coords(), &target, 80, tol, &guard)?.0 {
            Some(z) => {
                if crate::geometry::dist_max(&z, u.coords()) > r * (1.0 + 1e-9) {
                    inner_failures.push(Point::new(v));
                }
            }
            None => inner_failures.push(Point::new(v)),
        }
    }
    Ok(InverseInclusionReport {
        samples,
        outer_failures,
        inner_failures,
    })
}

/// Heuristic Lipschitz constant: the largest sampled difference quotient of
/// `g` over point pairs inside `x`, times `safety`. A lower bound scaled up,
/// not a certificate; callers can override it wherever a constant is
/// consumed.
pub fn lipschitz_estimate(
    g: &VectorField,
    x: &JordanSet,
    pair_samples: usize,
    safety: f64,
    rng: &mut impl Rng,
) -> Result<f64, DiffError> {
    assert!(safety >= 1.0);
    let bb = x.bounding_box();
    let m = bb.dim();
    let sep_floor = bb.diameter_max() * 1e-9;
    let mut best = 0.0f64;
    let mut found = 0usize;
    let mut attempts = 0usize;
    let max_attempts = pair_samples.max(2) * 400;
    while found < pair_samples.max(2) && attempts < max_attempts {
        attempts += 1;
        let sample = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..m)
                .map(|d| bb.lo().get(d) + rand::Rng::gen_range(rng, 0.0..=1.0) * bb.side(d))
                .collect()
        };
        let y = sample(rng);
        let z = sample(rng);
        if x.membership_coords(&y) != Membership::Inside
            || x.membership_coords(&z) != Membership::Inside
        {
            continue;
        }
        let sep = crate::geometry::dist_max(&y, &z);
        if sep <= sep_floor {
            continue;
        }
        let gy = g(&Point::new(y))?;
        let gz = g(&Point::new(z))?;
        let dv: Vec<f64> = gy.iter().zip(&gz).map(|(a, b)| a - b).collect();
        best = best.max(crate::geometry::norm_max(&dv) / sep);
        found += 1;
    }
    if found == 0 {
        return Err(DiffError::EmptySamples);
    }
    Ok(best * safety)
}

/// Componentwise McShane extension of values known on a finite sample set:
/// `F_i(x) = min over samples y of (G_i(y) + L * |x - y|)`.
#[derive(Debug)]
pub struct McShaneExtension {
    samples: Vec<(Point, Vec<f64>)>,
    l: f64,
    n_out: usize,
}

impl McShaneExtension {
    pub fn eval(&self, x: &Point) -> Vec<f64> {
        (0..self.n_out)
            .map(|i| {
                self.samples
                    .iter()
                    .map(|(y, vy)| vy[i] + self.l * y.dist_max(x))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn into_field(self) -> VectorField {
        std::sync::Arc::new(move |p: &Point| Ok(self.eval(p)))
    }
}

/// Builds the extension after checking the samples really are `L`-Lipschitz;
/// only then does the extension agree with the data on the sample set.
pub fn mcshane_extension(
    samples: Vec<(Point, Vec<f64>)>,
    l: f64,
) -> Result<McShaneExtension, DiffError> {
    if samples.is_empty() {
        return Err(DiffError::EmptySamples);
    }
    let n_out = samples[0].1.len();
    for (_, v) in &samples {
        if v.len() != n_out {
            return Err(DiffError::DimensionMismatch {
                expected: n_out,
                got: v.len(),
            });
        }
    }
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let d = samples[i].0.dist_max(&samples[j].0);
            if d == 0.0 {
                continue;
            }
            let dv = crate::geometry::dist_max(&samples[i].1, &samples[j].1);
            if dv > l * d * (1.0 + 1e-12) {
                return Err(DiffError::LipschitzViolated {
                    i,
                    j,
                    quotient: dv / d,
                });
            }
        }
    }
    Ok(McShaneExtension { samples, l, n_out })
}
