//! Pushforward content, density verification, the change-of-variables
//! engine, injectivity probing and singular-image accounting.
//!
//! The engine compares two independently computed brackets for a substitution
//! `G` on a Jordan set `X` and a bounded integrand `f` on the image:
//!
//! - `rhs`: the bracketed integral of `x -> f(G(x)) * |det gbar(x)|` over
//!   `X`, with the density taken from [`crate::diff::DensityField`];
//! - `lhs`: the bracketed integral of `f` over a constructively classified
//!   image set `G(X)`.
//!
//! The image set combines two one-sided certificates. Outside: a Lipschitz
//! ball cover of the image (a point beyond every cover ball cannot be hit).
//! Inside: a contraction iteration `z <- z - M^{-1}(G(z) - p)` seeded from
//! the forward grid; a converged preimage inside `X` certifies the point.
//! Cells with neither certificate stay `Unknown` and only widen the bracket.
//!
//! The verdict never silently assumes the substitution hypotheses: an
//! injectivity probe (image hashing) and strong-differentiability spot checks
//! run alongside, masked on a declared exceptional set `K`, and their
//! witnesses ride on the report. A `Violated` verdict together with
//! injectivity witnesses is exactly the expected signature of a substitution
//! that double-covers its image.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::darboux::{
    integral_bracket, BoundMode, Bracket, DarbouxError, IntegralOpts, IntegralResult, IntegralTrace,
};
use crate::diff::{
    contraction_solve, density_scalar_field, lipschitz_estimate, strong_diff_test, DensityField,
    DiffError, SetFnTrace, StrongDiffVerdict,
};
use crate::expr::EvalError;
use crate::geometry::{
    content_bracket, for_each_multi, interiors_overlap, outer_content_of_image, AxisBox, BallCover,
    CellClass, Classifier, ContentBracket, Cube, GeometryError, Grid, JordanSet, Membership,
    Overlap, Point,
};
use crate::linalg::{LuFactors, Matrix};
use crate::{ScalarField, VectorField};

#[derive(Debug, Error)]
pub enum CovError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Darboux(#[from] DarbouxError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("input sets must be non-overlapping")]
    InputsOverlap,
}

/// Knobs for the constructive image set.
#[derive(Debug, Clone)]
pub struct PushforwardOpts {
    /// Lipschitz constant for the map; estimated (heuristically) when absent.
    pub lipschitz: Option<f64>,
    /// Cap on forward cover balls; the cover grid depth adapts to stay under.
    pub cover_ball_budget: u64,
    /// Cap on seed cells carrying a factored local derivative.
    pub seed_cell_budget: u64,
    pub newton_max_iters: u32,
    /// Convergence tolerance relative to the image diameter.
    pub newton_tol_rel: f64,
    /// Seeds with `|det|` below this are skipped for inner certification.
    pub det_floor: f64,
    /// How many nearby cover cells a query may try before giving up.
    pub seed_candidates: usize,
    /// Total Newton iteration budget; exhaustion widens brackets and is
    /// flagged, never silent.
    pub iteration_budget: u64,
    pub max_cells: u64,
    /// Seed for the internal Lipschitz estimate when no constant is given.
    pub seed: u64,
}

impl Default for PushforwardOpts {
    fn default() -> Self {
        PushforwardOpts {
            lipschitz: None,
            cover_ball_budget: 1 << 21,
            seed_cell_budget: 1 << 15,
            newton_max_iters: 30,
            newton_tol_rel: 1e-10,
            det_floor: 1e-12,
            seed_candidates: 4,
            iteration_budget: 400_000_000,
            max_cells: crate::geometry::DEFAULT_CELL_BUDGET,
            seed: 0,
        }
    }
}

/// Shared machinery behind a pushforward image set.
struct ImageClassifier {
    g: VectorField,
    h: JordanSet,
    cover: BallCover,
    /// Domain-space centers of the cover cells, flat `count * m`.
    starts: Vec<f64>,
    seed_of_cover: Vec<u32>,
    seed_lu: Vec<Option<LuFactors>>,
    guard: AxisBox,
    newton_max_iters: u32,
    newton_tol: f64,
    seed_candidates: usize,
    budget: AtomicU64,
}

impl ImageClassifier {
    fn classify(&self, p: &Point) -> Membership {
        let coords = p.coords();
        let m = coords.len();
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        self.cover
            .scan_near(coords, self.cover.padded_radius(), |k| {
                let c = &self.cover.centers[k * m..(k + 1) * m];
                candidates.push((crate::geometry::dist_max(c, coords), k as u32));
                true
            });
        if candidates.is_empty() {
            return Membership::Outside;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(self.seed_candidates);
        for &(_, k) in &candidates {
            let k = k as usize;
            let lu = match &self.seed_lu[self.seed_of_cover[k] as usize] {
                Some(lu) => lu,
                None => continue,
            };
            if self.budget.load(Ordering::Relaxed) < self.newton_max_iters as u64 {
                return Membership::Unknown;
            }
            let start = &self.starts[k * m..(k + 1) * m];
            let outcome = contraction_solve(
                &self.g,
                lu,
                start,
                coords,
                self.newton_max_iters,
                self.newton_tol,
                &self.guard,
            );
            if let Ok((result, used)) = outcome {
                let _ = self
                    .budget
                    .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |b| {
                        Some(b.saturating_sub(used as u64))
                    });
                if let Some(z) = result {
                    if self.h.membership_coords(&z) == Membership::Inside {
                        return Membership::Inside;
                    }
                }
            }
        }
        Membership::Unknown
    }

    fn exhausted(&self) -> bool {
        self.budget.load(Ordering::Relaxed) < self.newton_max_iters as u64
    }
}

/// A constructed image set plus bookkeeping about how it was built.
#[derive(Clone)]
pub struct PushforwardHandle {
    pub image: JordanSet,
    pub lipschitz: f64,
    pub cover_depth: u32,
    pub seed_depth: u32,
    classifier: Arc<ImageClassifier>,
}

impl PushforwardHandle {
    /// True once the Newton iteration budget has been consumed; later
    /// queries degrade to `Unknown` and widen brackets.
    pub fn solver_budget_exhausted(&self) -> bool {
        self.classifier.exhausted()
    }
}

impl std::fmt::Debug for PushforwardHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PushforwardHandle")
            .field("lipschitz", &self.lipschitz)
            .field("cover_depth", &self.cover_depth)
            .field("seed_depth", &self.seed_depth)
            .field("exhausted", &self.solver_budget_exhausted())
            .finish()
    }
}

fn depth_for_budget(m: usize, budget: u64) -> u32 {
    let mut d = 0u32;
    while (1u128 << ((d + 1) as usize * m)) <= budget as u128 {
        d += 1;
    }
    d
}

/// Builds the classified image set of `h` under `g`.
///
/// `G` is evaluated at covering cell centers and finite-difference probe
/// points, which can sit slightly outside `h` on straddling cells; the map
/// must be evaluable on the bounding box of `h`.
pub fn pushforward_image(
    g: &VectorField,
    h: &JordanSet,
    depth: u32,
    opts: &PushforwardOpts,
) -> Result<PushforwardHandle, CovError> {
    let m = h.dim();
    let bb = h.bounding_box();
    let lipschitz = match opts.lipschitz {
        Some(l) => l,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            lipschitz_estimate(g, h, 256, 1.25, &mut rng)?
        }
    };
    // a cover two levels finer than the content grid keeps the Unknown ring
    // (ball radius wide) well below one content cell
    let cover_depth = (depth + 2).min(depth_for_budget(m, opts.cover_ball_budget));
    let seed_depth = cover_depth.min(depth_for_budget(m, opts.seed_cell_budget));
    let cover_grid = Grid::dyadic(bb.clone(), cover_depth, opts.max_cells)?;
    let seed_grid = Grid::dyadic(bb.clone(), seed_depth, opts.max_cells)?;

    // local derivatives at seed cells via central differences, factored once
    let mut seed_lu: Vec<Option<LuFactors>> = vec![None; seed_grid.cell_count()];
    {
        let mut err: Option<CovError> = None;
        for_each_multi(m, seed_grid.cells_per_axis(), |flat, multi| {
            if err.is_some() {
                return;
            }
            let cell = seed_grid.cell_from_multi(multi);
            if h.cell_class(&cell) == CellClass::Outside {
                return;
            }
            let center = cell.center();
            let step = 0.5 * cell.max_half_extent();
            let mut jac = Matrix::zeros(m);
            for j in 0..m {
                let mut plus = center.coords().to_vec();
                let mut minus = plus.clone();
                plus[j] += step;
                minus[j] -= step;
                let (gp, gm) = match (g(&Point::new(plus)), g(&Point::new(minus))) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => return, // unusable seed, leave as None
                };
                if gp.len() != m || gm.len() != m {
                    err = Some(
                        GeometryError::DimensionMismatch {
                            expected: m,
                            got: gp.len(),
                        }
                        .into(),
                    );
                    return;
                }
                for i in 0..m {
                    jac.set(i, j, (gp[i] - gm[i]) / (2.0 * step));
                }
            }
            if !(0..m).all(|i| (0..m).all(|j| jac.get(i, j).is_finite())) {
                return;
            }
            let lu = LuFactors::new(&jac);
            if !lu.is_singular() && lu.det().abs() >= opts.det_floor {
                seed_lu[flat] = Some(lu);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }

    // forward cover: image balls over every cell meeting h
    let shift = cover_depth - seed_depth;
    let mut centers: Vec<f64> = Vec::new();
    let mut starts: Vec<f64> = Vec::new();
    let mut seed_of_cover: Vec<u32> = Vec::new();
    {
        let mut err: Option<CovError> = None;
        let mut lo = vec![0.0f64; m];
        let mut hi = vec![0.0f64; m];
        for_each_multi(m, cover_grid.cells_per_axis(), |_, multi| {
            if err.is_some() {
                return;
            }
            cover_grid.cell_bounds_into(multi, &mut lo, &mut hi);
            if h.cell_class_bounds(&lo, &hi) == CellClass::Outside {
                return;
            }
            let center = Point::new((0..m).map(|d| lo[d] + 0.5 * (hi[d] - lo[d])).collect());
            match g(&center) {
                Ok(img) if img.len() == m && img.iter().all(|c| c.is_finite()) => {
                    centers.extend_from_slice(&img);
                    starts.extend_from_slice(center.coords());
                    let seed_flat: usize = multi.iter().fold(0usize, |acc, &i| {
                        acc * seed_grid.cells_per_axis() + (i >> shift)
                    });
                    seed_of_cover.push(seed_flat as u32);
                }
                Ok(img) => {
                    err = Some(EvalError::non_finite(&img).into());
                }
                Err(e) => err = Some(e.into()),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    let count = seed_of_cover.len();
    if count == 0 {
        // nothing of h is visible: an empty classified set over a tiny box
        let empty = Classifier::new(
            Cube::new(bb.center(), 1e-12).to_box(),
            Arc::new(|_: &Point| Membership::Outside),
        );
        let classifier = Arc::new(ImageClassifier {
            g: g.clone(),
            h: h.clone(),
            cover: BallCover::new(bb.center().coords().to_vec(), 1, m, 1e-12),
            starts: bb.center().coords().to_vec(),
            seed_of_cover: vec![0],
            seed_lu: vec![None],
            guard: bb.clone(),
            newton_max_iters: 1,
            newton_tol: 1.0,
            seed_candidates: 0,
            budget: AtomicU64::new(0),
        });
        return Ok(PushforwardHandle {
            image: JordanSet::Classified(empty),
            lipschitz,
            cover_depth,
            seed_depth,
            classifier,
        });
    }
    let radius = lipschitz * crate::geometry::grid_max_half_extent(&cover_grid);
    let cover = BallCover::new(centers, count, m, radius);
    let hull = cover.hull().clone();
    let newton_tol = opts.newton_tol_rel * hull.diameter_max().max(1.0);
    let guard = {
        let lo: Vec<f64> = (0..m)
            .map(|d| bb.lo().get(d) - 0.5 * bb.side(d) - 1e-12)
            .collect();
        let hi: Vec<f64> = (0..m)
            .map(|d| bb.hi().get(d) + 0.5 * bb.side(d) + 1e-12)
            .collect();
        AxisBox::from_coords(lo, hi)
    };
    let classifier = Arc::new(ImageClassifier {
        g: g.clone(),
        h: h.clone(),
        cover,
        starts,
        seed_of_cover,
        seed_lu,
        guard,
        newton_max_iters: opts.newton_max_iters,
        newton_tol,
        seed_candidates: opts.seed_candidates.max(1),
        budget: AtomicU64::new(opts.iteration_budget),
    });
    let classify_ref = classifier.clone();
    let image = JordanSet::Classified(Classifier::new(
        hull,
        Arc::new(move |p: &Point| classify_ref.classify(p)),
    ));
    Ok(PushforwardHandle {
        image,
        lipschitz,
        cover_depth,
        seed_depth,
        classifier,
    })
}

#[derive(Debug)]
pub struct PushforwardReport {
    pub bracket: ContentBracket,
    pub handle: PushforwardHandle,
}

/// Content bracket of `G(H)` from the constructive image set.
pub fn pushforward_content(
    g: &VectorField,
    h: &JordanSet,
    depth: u32,
    opts: &PushforwardOpts,
) -> Result<PushforwardReport, CovError> {
    let handle = pushforward_image(g, h, depth, opts)?;
    let bracket = content_bracket(&handle.image, depth, opts.max_cells)?;
    Ok(PushforwardReport { bracket, handle })
}

#[derive(Debug)]
pub struct AffineVolumeReport {
    pub bracket: ContentBracket,
    pub expected: f64,
    /// `|midpoint - expected| / expected` (absolute when expected is 0).
    pub gap_rel: f64,
}

/// Compares the pushforward content of an affine map against
/// `|det A| * V(Q)`.
pub fn affine_volume_check(
    a: &Matrix,
    b: &[f64],
    q: &Cube,
    depth: u32,
    opts: &PushforwardOpts,
) -> Result<AffineVolumeReport, CovError> {
    let expected = a.determinant().abs() * q.volume();
    let mut opts = opts.clone();
    // the operator norm induced by the max norm is an exact constant here
    opts.lipschitz = Some(a.op_norm_max().max(1e-12));
    let g = crate::fields::affine(a.clone(), b.to_vec());
    let report = pushforward_content(&g, &JordanSet::Box(q.to_box()), depth, &opts)?;
    let gap = (report.bracket.midpoint() - expected).abs();
    let gap_rel = if expected > 0.0 { gap / expected } else { gap };
    Ok(AffineVolumeReport {
        bracket: report.bracket,
        expected,
        gap_rel,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonoverlapResult {
    NonOverlapping,
    /// A cell certified interior to both images.
    OverlapWitness(AxisBox),
    Undetermined,
}

/// Checks that the images of two non-overlapping sets stay non-overlapping.
pub fn nonoverlap_image_check(
    g: &VectorField,
    a: &JordanSet,
    b: &JordanSet,
    depth: u32,
    opts: &PushforwardOpts,
) -> Result<NonoverlapResult, CovError> {
    if let Overlap::Overlapping(_) = interiors_overlap(a, b, depth, opts.max_cells)? {
        return Err(CovError::InputsOverlap);
    }
    let ia = pushforward_image(g, a, depth, opts)?;
    let ib = pushforward_image(g, b, depth, opts)?;
    Ok(
        match interiors_overlap(&ia.image, &ib.image, depth, opts.max_cells)? {
            Overlap::Overlapping(cell) => NonoverlapResult::OverlapWitness(cell),
            Overlap::NonOverlapping => NonoverlapResult::NonOverlapping,
            Overlap::Undetermined => NonoverlapResult::Undetermined,
        },
    )
}

#[derive(Debug)]
pub struct DensityTrial {
    pub cube: Cube,
    pub integral: Bracket,
    pub content: ContentBracket,
    pub pass: bool,
}

#[derive(Debug)]
pub struct DensityCheckReport {
    pub trials: Vec<DensityTrial>,
    pub pass_rate: f64,
}

/// Samples random interior subcubes `H` and compares the bracketed integral
/// of the density over `H` against the pushforward content of `G(H)`.
pub fn density_check(
    field: &Arc<DensityField>,
    trials: usize,
    depth: u32,
    tol: f64,
    pf: &PushforwardOpts,
    rng: &mut impl Rng,
) -> Result<DensityCheckReport, CovError> {
    let x = field.domain().clone();
    let g = field.map().clone();
    let bb = x.bounding_box();
    let m = bb.dim();
    let r_max = field.radii()[0];
    let density = density_scalar_field(field.clone());
    let mut out = Vec::with_capacity(trials);
    let mut attempts = 0usize;
    while out.len() < trials && attempts < trials * 400 {
        attempts += 1;
        let center: Vec<f64> = (0..m)
            .map(|d| bb.lo().get(d) + rng.gen_range(0.0..=1.0) * bb.side(d))
            .collect();
        let w = rng.gen_range(0.02..0.2) * bb.diameter_max() / 2.0;
        let center = Point::new(center);
        // margin so the whole cube keeps its full radius schedule
        if !x.contains_cube(&center, w + 1.05 * r_max) {
            continue;
        }
        let cube = Cube::new(center, w);
        let integral = integral_bracket(
            &density,
            &JordanSet::Box(cube.to_box()),
            &[depth.min(5)],
            &BoundMode::default(),
            &IntegralOpts {
                tol,
                max_cells: pf.max_cells,
            },
        )?;
        let content = pushforward_content(&g, &JordanSet::Box(cube.to_box()), depth, pf)?;
        let ib = integral.bracket;
        let cb = content.bracket;
        let overlap = ib.lower <= cb.outer && cb.inner <= ib.upper;
        let mid_gap = (ib.midpoint() - cb.midpoint()).abs();
        let pass = overlap || mid_gap < tol * ib.midpoint().abs().max(1.0);
        out.push(DensityTrial {
            cube,
            integral: ib,
            content: cb,
            pass,
        });
    }
    let pass_rate = if out.is_empty() {
        0.0
    } else {
        out.iter().filter(|t| t.pass).count() as f64 / out.len() as f64
    };
    Ok(DensityCheckReport {
        trials: out,
        pass_rate,
    })
}

#[derive(Debug)]
pub struct PhiDerivativeReport {
    pub density_at_u: f64,
    pub trace: SetFnTrace,
    /// Relative gap between the final quotient and the density at `u`.
    pub final_gap_rel: f64,
}

/// Compares difference quotients of `Phi(I) = V(G(I))` (midpoints of
/// pushforward brackets) against the density at `u`.
pub fn phi_derivative_check(
    field: &DensityField,
    u: &Point,
    radii: &[f64],
    content_depth: u32,
    pf: &PushforwardOpts,
) -> Result<PhiDerivativeReport, CovError> {
    let g = field.map().clone();
    let pf = pf.clone();
    let trace = crate::diff::setfn_derivative(
        move |cube: &Cube| {
            pushforward_content(&g, &JordanSet::Box(cube.to_box()), content_depth, &pf)
                .map(|r| r.bracket.midpoint())
                .map_err(|_| EvalError::non_finite(cube.center.coords()))
        },
        u,
        radii,
    )?;
    let density_at_u = field.density(u)?;
    let gap = (trace.estimate - density_at_u).abs();
    let final_gap_rel = if density_at_u.abs() > 1e-300 {
        gap / density_at_u.abs()
    } else {
        gap
    };
    Ok(PhiDerivativeReport {
        density_at_u,
        trace,
        final_gap_rel,
    })
}

#[derive(Debug, Clone)]
pub struct InjectivityWitness {
    pub x: Point,
    pub y: Point,
    pub image_distance: f64,
}

/// Hashes sampled image points into cells of size `tol` and reports sample
/// pairs far apart in the domain whose images nearly coincide. Pairs with an
/// endpoint within `mask_eps` of the declared sets are skipped.
pub fn injectivity_probe(
    g: &VectorField,
    x: &JordanSet,
    samples: usize,
    separation: f64,
    tol: f64,
    k_mask: Option<(&[JordanSet], f64)>,
    rng: &mut impl Rng,
) -> Result<Vec<InjectivityWitness>, CovError> {
    let bb = x.bounding_box();
    let m = bb.dim();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while points.len() < samples && attempts < samples * 40 {
        attempts += 1;
        let p: Vec<f64> = (0..m)
            .map(|d| bb.lo().get(d) + rng.gen_range(0.0..=1.0) * bb.side(d))
            .collect();
        if x.membership_coords(&p) != Membership::Inside {
            continue;
        }
        if let Some((ks, eps)) = k_mask {
            let probe = Point::new(p.clone());
            if ks.iter().any(|k| k.dist_max_lower_bound(&probe) <= eps) {
                continue;
            }
        }
        let img = g(&Point::new(p.clone()))?;
        points.push(p);
        images.push(img);
    }
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let key = |img: &[f64]| -> Vec<i64> { img.iter().map(|c| (c / tol).floor() as i64).collect() };
    for (i, img) in images.iter().enumerate() {
        buckets.entry(key(img)).or_default().push(i);
    }
    let mut witnesses = Vec::new();
    let mut offsets: Vec<Vec<i64>> = Vec::new();
    for_each_multi(m, 3, |_, multi| {
        offsets.push(multi.iter().map(|&v| v as i64 - 1).collect());
    });
    'outer: for (i, img) in images.iter().enumerate() {
        let base = key(img);
        for off in &offsets {
            let neighbor: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
            if let Some(list) = buckets.get(&neighbor) {
                for &j in list {
                    if j >= i {
                        continue;
                    }
                    let image_distance = crate::geometry::dist_max(img, &images[j]);
                    if image_distance >= tol {
                        continue;
                    }
                    if crate::geometry::dist_max(&points[i], &points[j]) < separation {
                        continue;
                    }
                    witnesses.push(InjectivityWitness {
                        x: Point::new(points[j].clone()),
                        y: Point::new(points[i].clone()),
                        image_distance,
                    });
                    if witnesses.len() >= 64 {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(witnesses)
}

/// Per-depth outer content of the image of the near-singular region.
#[derive(Debug, Clone)]
pub struct SardReport {
    pub det_tolerance: f64,
    pub singular_cell_count: u64,
    /// `(depth, outer content of G(S) at that cover depth)`, over the
    /// schedule, for the singular region `S` probed at the finest depth.
    pub image_outer_content_by_depth: Vec<(u32, f64)>,
    pub lipschitz_used: f64,
}

/// Estimates the singular region `S` (grid cells whose center density falls
/// below `det_tol`) at the finest scheduled depth, then measures the outer
/// content of `G(S)` by Lipschitz ball covers at every scheduled depth. The
/// expected signature of an almost-everywhere regular map is a sequence
/// decreasing toward zero.
pub fn sard_image_content(
    field: &DensityField,
    det_tol: f64,
    schedule: &[u32],
    lipschitz: Option<f64>,
    max_cells: u64,
    seed: u64,
) -> Result<SardReport, CovError> {
    assert!(!schedule.is_empty());
    let x = field.domain();
    let g = field.map().clone();
    let m = x.dim();
    let finest = *schedule.iter().max().unwrap();
    let grid = Grid::dyadic(x.bounding_box(), finest, max_cells)?;
    let l = match lipschitz {
        Some(l) => l,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            lipschitz_estimate(&g, x, 256, 1.25, &mut rng)?
        }
    };

    let mut flags = vec![false; grid.cell_count()];
    let mut singular = 0u64;
    {
        let mut err: Option<CovError> = None;
        for_each_multi(m, grid.cells_per_axis(), |flat, multi| {
            if err.is_some() {
                return;
            }
            let center = grid.center_from_multi(multi);
            if x.membership(&center) != Membership::Inside {
                return;
            }
            match field.density(&center) {
                Ok(d) => {
                    if d < det_tol {
                        flags[flat] = true;
                        singular += 1;
                    }
                }
                Err(e) => err = Some(e.into()),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }

    let mut by_depth = Vec::with_capacity(schedule.len());
    if singular == 0 {
        for &d in schedule {
            by_depth.push((d, 0.0));
        }
        return Ok(SardReport {
            det_tolerance: det_tol,
            singular_cell_count: 0,
            image_outer_content_by_depth: by_depth,
            lipschitz_used: l,
        });
    }
    let s = grid_subset_set(&grid, Arc::new(flags));
    for &d in schedule {
        let v = outer_content_of_image(&g, &s, l, d, max_cells)?;
        by_depth.push((d, v));
    }
    Ok(SardReport {
        det_tolerance: det_tol,
        singular_cell_count: singular,
        image_outer_content_by_depth: by_depth,
        lipschitz_used: l,
    })
}

/// Wraps a set of flagged grid cells as a Jordan set with exact pointwise
/// membership (closed union of the flagged cells).
fn grid_subset_set(grid: &Grid, flags: Arc<Vec<bool>>) -> JordanSet {
    let m = grid.dim();
    let n = grid.cells_per_axis();
    // hull of flagged cells
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for_each_multi(m, n, |flat, multi| {
        if !flags[flat] {
            return;
        }
        for d in 0..m {
            lo[d] = lo[d].min(grid.edge(d, multi[d]));
            hi[d] = hi[d].max(grid.edge(d, multi[d] + 1));
        }
    });
    let bounds = AxisBox::from_coords(lo, hi);
    let grid = grid.clone();
    let classify = move |p: &Point| -> Membership {
        let mut cand_lo = vec![0usize; m];
        let mut cand_hi = vec![0usize; m];
        for d in 0..m {
            let side = grid.bounds().side(d);
            let t = if side > 0.0 {
                (p.get(d) - grid.bounds().lo().get(d)) / side * n as f64
            } else {
                0.0
            };
            let i = (t.floor() as isize).clamp(0, n as isize - 1) as usize;
            // shared faces belong to both neighbors
            cand_lo[d] = if i > 0 && p.get(d) <= grid.edge(d, i) {
                i - 1
            } else {
                i
            };
            cand_hi[d] = if i + 1 < n && p.get(d) >= grid.edge(d, i + 1) {
                i + 1
            } else {
                i
            };
        }
        let mut multi = cand_lo.clone();
        loop {
            let flat: usize = multi.iter().fold(0, |acc, &i| acc * n + i);
            if flags[flat] {
                let cell = grid.cell_from_multi(&multi);
                if cell.contains_point(p) {
                    return Membership::Inside;
                }
            }
            let mut d = m;
            loop {
                if d == 0 {
                    return Membership::Outside;
                }
                d -= 1;
                if multi[d] < cand_hi[d] {
                    multi[d] += 1;
                    break;
                }
                multi[d] = cand_lo[d];
            }
        }
    };
    JordanSet::Classified(Classifier::new(bounds, Arc::new(classify)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovVerdict {
    Verified,
    Violated {
        /// Relative gap between the disjoint brackets.
        margin_rel: f64,
    },
    Inconclusive,
}

impl std::fmt::Display for CovVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovVerdict::Verified => f.write_str("Verified"),
            CovVerdict::Violated { margin_rel } => {
                write!(f, "Violated (relative margin {margin_rel:.3})")
            }
            CovVerdict::Inconclusive => f.write_str("Inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct HypothesisFlags {
    pub injectivity_witnesses: Vec<InjectivityWitness>,
    pub strong_diff_failures: Vec<Point>,
}

#[derive(Debug)]
pub struct CovReport {
    /// Bracket of the integral of `f` over the image set.
    pub lhs: Bracket,
    /// Bracket of the integral of `f(G(x)) |det gbar(x)|` over the domain.
    pub rhs: Bracket,
    /// rhs midpoint over lhs midpoint.
    pub ratio: f64,
    pub verdict: CovVerdict,
    pub flags: HypothesisFlags,
    pub lhs_trace: IntegralTrace,
    pub rhs_trace: IntegralTrace,
    pub lipschitz_used: f64,
    pub solver_budget_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct CovOpts {
    pub schedule: Vec<u32>,
    pub mode: BoundMode,
    /// Convergence tolerance handed to both integrals.
    pub tol: f64,
    /// Floor of the verdict tolerance; the effective tolerance also counts
    /// the combined relative bracket widths.
    pub verdict_tol_floor: f64,
    /// Radius schedule of the density field; when empty, defaults to
    /// `{1e-2, 1e-3, 1e-4}` scaled by the domain diameter.
    pub radii: Vec<f64>,
    pub pair_samples: usize,
    /// Declared exceptional sets: probes are masked within `mask_eps` of any.
    pub declared_k: Vec<JordanSet>,
    /// Mask radius; one finest grid cell when absent.
    pub mask_eps: Option<f64>,
    pub inj_samples: usize,
    pub inj_separation: f64,
    pub inj_tol: f64,
    /// Strong-differentiability spot checks.
    pub probe_points: usize,
    pub probe_pairs: usize,
    pub probe_tol: f64,
    pub seed: u64,
    pub pushforward: PushforwardOpts,
    pub max_cells: u64,
}

impl CovOpts {
    pub fn new(schedule: Vec<u32>) -> Self {
        CovOpts {
            schedule,
            mode: BoundMode::default(),
            tol: 1e-6,
            verdict_tol_floor: 0.01,
            radii: Vec::new(),
            pair_samples: 6,
            declared_k: Vec::new(),
            mask_eps: None,
            inj_samples: 2048,
            inj_separation: 0.25,
            inj_tol: 1e-2,
            probe_points: 8,
            probe_pairs: 64,
            probe_tol: 1e-3,
            seed: 0,
            pushforward: PushforwardOpts::default(),
            max_cells: crate::geometry::DEFAULT_CELL_BUDGET,
        }
    }

    fn resolved_radii(&self, bb: &AxisBox) -> Vec<f64> {
        if !self.radii.is_empty() {
            return self.radii.clone();
        }
        default_radii(bb)
    }
}

/// Default density-field radius schedule, scaled by the domain diameter.
pub fn default_radii(bb: &AxisBox) -> Vec<f64> {
    let d = bb.diameter_max().max(1e-6);
    vec![1e-2 * d, 1e-3 * d, 1e-4 * d]
}

/// Runs the full change-of-variables verification pipeline.
pub fn change_of_variables(
    f: &ScalarField,
    g: &VectorField,
    x: &JordanSet,
    opts: &CovOpts,
) -> Result<CovReport, CovError> {
    assert!(!opts.schedule.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bb = x.bounding_box();
    let finest = *opts.schedule.last().unwrap();
    let field = Arc::new(DensityField::new(
        g.clone(),
        x.clone(),
        opts.resolved_radii(&bb),
        opts.pair_samples,
    )?);
    let integral_opts = IntegralOpts {
        tol: opts.tol,
        max_cells: opts.max_cells,
    };

    // rhs: integral of f(G(x)) |det gbar(x)| over the domain
    let rhs_integrand: ScalarField = {
        let f = f.clone();
        let g = g.clone();
        let field = field.clone();
        Arc::new(move |p: &Point| {
            let image = g(p)?;
            let fv = f(&Point::new(image))?;
            let d = field.density(p).map_err(|e| match e {
                DiffError::Eval(e) => e,
                _ => EvalError::non_finite(p.coords()),
            })?;
            Ok(fv * d)
        })
    };
    let rhs = integral_bracket(
        &rhs_integrand,
        x,
        &opts.schedule,
        &opts.mode,
        &integral_opts,
    )?;

    // lhs: integral of f over the constructive image set
    let mut pf = opts.pushforward.clone();
    pf.max_cells = opts.max_cells;
    pf.seed = opts.seed ^ 0x9e37_79b9_7f4a_7c15;
    let handle = pushforward_image(g, x, finest, &pf)?;
    let lhs = integral_bracket(f, &handle.image, &opts.schedule, &opts.mode, &integral_opts)?;

    // hypothesis probes, masked on the declared exceptional set
    let mask_eps = opts
        .mask_eps
        .unwrap_or_else(|| bb.diameter_max() / (1u64 << finest) as f64);
    let k_mask: Option<(&[JordanSet], f64)> = if opts.declared_k.is_empty() {
        None
    } else {
        Some((&opts.declared_k, mask_eps))
    };
    let witnesses = injectivity_probe(
        g,
        x,
        opts.inj_samples,
        opts.inj_separation,
        opts.inj_tol,
        k_mask,
        &mut rng,
    )?;
    let mut strong_diff_failures = Vec::new();
    {
        let mut found = 0usize;
        let mut attempts = 0usize;
        while found < opts.probe_points && attempts < opts.probe_points * 50 {
            attempts += 1;
            let p: Vec<f64> = (0..bb.dim())
                .map(|d| bb.lo().get(d) + rng.gen_range(0.0..=1.0) * bb.side(d))
                .collect();
            let p = Point::new(p);
            if field.fitting_radii(&p).len() != field.radii().len() {
                continue;
            }
            if let Some((ks, eps)) = k_mask {
                if ks.iter().any(|k| k.dist_max_lower_bound(&p) <= eps) {
                    continue;
                }
            }
            found += 1;
            let report =
                strong_diff_test(&field, &p, None, opts.probe_pairs, opts.probe_tol, &mut rng)?;
            if report.verdict == StrongDiffVerdict::Fail {
                strong_diff_failures.push(p);
            }
        }
    }

    // verdict from the two brackets
    let lb = lhs.bracket;
    let rb = rhs.bracket;
    let scale = lb.midpoint().abs().max(rb.midpoint().abs()).max(1e-300);
    let ratio = if lb.midpoint().abs() > 1e-300 {
        rb.midpoint() / lb.midpoint()
    } else {
        f64::NAN
    };
    let rel_widths = (lb.width() + rb.width()) / scale;
    let tol_v = opts.verdict_tol_floor.max(rel_widths);
    let exhausted = handle.solver_budget_exhausted();
    let verdict = if exhausted {
        CovVerdict::Inconclusive
    } else if lb.overlaps(&rb) || (ratio.is_finite() && (ratio - 1.0).abs() < tol_v) {
        CovVerdict::Verified
    } else {
        let gap = (rb.lower - lb.upper).max(lb.lower - rb.upper);
        let margin_rel = gap / scale;
        if margin_rel > tol_v {
            CovVerdict::Violated { margin_rel }
        } else {
            CovVerdict::Inconclusive
        }
    };
    Ok(CovReport {
        lhs: lb,
        rhs: rb,
        ratio,
        verdict,
        flags: HypothesisFlags {
            injectivity_witnesses: witnesses,
            strong_diff_failures,
        },
        lhs_trace: lhs.trace,
        rhs_trace: rhs.trace,
        lipschitz_used: handle.lipschitz,
        solver_budget_exhausted: exhausted,
    })
}

/// The image-side integral alone, with the handle used to build the set.
pub fn image_integral(
    f: &ScalarField,
    g: &VectorField,
    x: &JordanSet,
    schedule: &[u32],
    mode: &BoundMode,
    opts: &PushforwardOpts,
    tol: f64,
) -> Result<(IntegralResult, PushforwardHandle), CovError> {
    let finest = *schedule.iter().max().unwrap();
    let handle = pushforward_image(g, x, finest, opts)?;
    let res = integral_bracket(
        f,
        &handle.image,
        schedule,
        mode,
        &IntegralOpts {
            tol,
            max_cells: opts.max_cells,
        },
    )?;
    Ok((res, handle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;

    fn polar_map() -> VectorField {
        fields::vector_fn(|p| vec![p.get(0) * p.get(1).cos(), p.get(0) * p.get(1).sin()])
    }

    #[test]
    fn pushforward_identity_reproduces_box_content() {
        let h = JordanSet::Box(AxisBox::unit(2));
        let opts = PushforwardOpts {
            lipschitz: Some(1.0),
            ..Default::default()
        };
        let report = pushforward_content(&fields::identity(2), &h, 5, &opts).unwrap();
        let direct = content_bracket(&h, 5, opts.max_cells).unwrap();
        assert_eq!(report.bracket.inner, direct.inner);
        assert_eq!(report.bracket.outer, direct.outer);
        assert_eq!(report.bracket.inner, 1.0);
    }

    #[test]
    fn pushforward_scaling_brackets_four() {
        let h = JordanSet::Box(AxisBox::unit(2));
        let g = fields::affine(Matrix::diagonal(&[2.0, 2.0]), vec![0.0, 0.0]);
        let opts = PushforwardOpts {
            lipschitz: Some(2.0),
            ..Default::default()
        };
        let report = pushforward_content(&g, &h, 8, &opts).unwrap();
        assert!(report.bracket.contains(4.0), "{:?}", report.bracket);
        assert!(
            report.bracket.width() < 0.2,
            "width {}",
            report.bracket.width()
        );
    }

    #[test]
    fn pushforward_quarter_annulus() {
        // polar image of [0.5, 1] x [0, pi/2]: quarter annulus of area
        // (pi/4)(1 - 1/4)
        let h = JordanSet::Box(AxisBox::from_coords(
            vec![0.5, 0.0],
            vec![1.0, std::f64::consts::FRAC_PI_2],
        ));
        let report = pushforward_content(&polar_map(), &h, 8, &PushforwardOpts::default()).unwrap();
        let expected = std::f64::consts::PI / 4.0 * 0.75;
        assert!(report.bracket.contains(expected), "{:?}", report.bracket);
        assert!(report.bracket.width() < 0.1);
    }

    #[test]
    fn affine_volume_examples() {
        let q = Cube::new(Point::new(vec![0.5, 0.5]), 0.5);
        let r = affine_volume_check(
            &Matrix::identity(2),
            &[0.0, 0.0],
            &q,
            6,
            &PushforwardOpts::default(),
        )
        .unwrap();
        assert!(r.gap_rel < 1e-12, "identity gap {}", r.gap_rel);

        let r = affine_volume_check(
            &Matrix::diagonal(&[2.0, 3.0]),
            &[0.1, -0.2],
            &q,
            8,
            &PushforwardOpts::default(),
        )
        .unwrap();
        assert!(r.bracket.contains(6.0));
        assert!(r.gap_rel < 0.02, "diag gap {}", r.gap_rel);

        let c = std::f64::consts::FRAC_PI_4.cos();
        let s = std::f64::consts::FRAC_PI_4.sin();
        let rot = Matrix::from_rows(&[vec![c, -s], vec![s, c]]);
        let r = affine_volume_check(&rot, &[0.0, 0.0], &q, 8, &PushforwardOpts::default()).unwrap();
        assert!(r.bracket.contains(1.0), "{:?}", r.bracket);
        assert!(r.gap_rel < 0.03, "rotation gap {}", r.gap_rel);
    }

    #[test]
    fn images_of_nonoverlapping_sets() {
        let g = fields::affine(Matrix::diagonal(&[2.0, 2.0]), vec![0.0, 0.0]);
        let a = JordanSet::Box(AxisBox::unit(2));
        let b = JordanSet::Box(AxisBox::from_coords(vec![1.0, 0.0], vec![2.0, 1.0]));
        let opts = PushforwardOpts {
            lipschitz: Some(2.0),
            ..Default::default()
        };
        let r = nonoverlap_image_check(&g, &a, &b, 6, &opts).unwrap();
        assert_eq!(r, NonoverlapResult::NonOverlapping);

        // the exponential spiral wraps twice: the two halves share the image
        let spiral = fields::vector_fn(|p| {
            vec![
                p.get(0).exp() * p.get(1).cos(),
                p.get(0).exp() * p.get(1).sin(),
            ]
        });
        let tau = 2.0 * std::f64::consts::PI;
        let a = JordanSet::Box(AxisBox::from_coords(vec![1.0, 0.0], vec![2.0, tau]));
        let b = JordanSet::Box(AxisBox::from_coords(vec![1.0, tau], vec![2.0, 2.0 * tau]));
        let r = nonoverlap_image_check(&spiral, &a, &b, 6, &PushforwardOpts::default()).unwrap();
        assert!(matches!(r, NonoverlapResult::OverlapWitness(_)), "{r:?}");

        // constant map: images have no certifiable interior
        let g = fields::vector_fn(|_| vec![0.5, 0.5]);
        let a = JordanSet::Box(AxisBox::unit(2));
        let b = JordanSet::Box(AxisBox::from_coords(vec![1.0, 0.0], vec![2.0, 1.0]));
        let r = nonoverlap_image_check(&g, &a, &b, 5, &PushforwardOpts::default()).unwrap();
        assert!(!matches!(r, NonoverlapResult::OverlapWitness(_)), "{r:?}");
    }

    #[test]
    fn overlapping_inputs_rejected() {
        let g = fields::identity(2);
        let a = JordanSet::Box(AxisBox::unit(2));
        let b = JordanSet::Box(AxisBox::from_coords(vec![0.5, 0.5], vec![1.5, 1.5]));
        assert!(matches!(
            nonoverlap_image_check(&g, &a, &b, 5, &PushforwardOpts::default()),
            Err(CovError::InputsOverlap)
        ));
    }

    #[test]
    fn density_check_identity_and_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = JordanSet::Box(AxisBox::unit(2));
        let field = Arc::new(
            DensityField::new(fields::identity(2), x.clone(), vec![1e-2, 1e-3], 5).unwrap(),
        );
        let r = density_check(&field, 8, 5, 1e-3, &PushforwardOpts::default(), &mut rng).unwrap();
        assert_eq!(r.pass_rate, 1.0, "{:#?}", r.trials);

        let a = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.0, 3.0]]);
        let field = Arc::new(
            DensityField::new(
                fields::affine(a, vec![0.4, 0.1]),
                JordanSet::Box(AxisBox::unit(2)),
                vec![1e-2, 1e-3],
                5,
            )
            .unwrap(),
        );
        let r = density_check(&field, 8, 5, 1e-3, &PushforwardOpts::default(), &mut rng).unwrap();
        assert_eq!(r.pass_rate, 1.0);
    }

    #[test]
    fn density_check_polar_subcubes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dom = JordanSet::Box(AxisBox::from_coords(
            vec![0.2, 0.0],
            vec![1.0, std::f64::consts::PI],
        ));
        let field = Arc::new(DensityField::new(polar_map(), dom, vec![1e-2, 1e-3], 6).unwrap());
        let r = density_check(&field, 6, 6, 1e-2, &PushforwardOpts::default(), &mut rng).unwrap();
        // every subcube agrees within the combined bracket widths; check the
        // analytic value r dr dtheta lands in the integral bracket too
        assert_eq!(r.pass_rate, 1.0, "{:#?}", r.trials);
        for t in &r.trials {
            let c = &t.cube;
            let (r0, r1) = (
                c.center.get(0) - c.half_width,
                c.center.get(0) + c.half_width,
            );
            let exact = 0.5 * (r1 * r1 - r0 * r0) * (2.0 * c.half_width);
            assert!(
                t.integral.lower <= exact + 1e-9 && exact <= t.integral.upper + 1e-9,
                "analytic {exact} outside {:?}",
                t.integral
            );
        }
    }

    #[test]
    fn phi_derivative_affine_and_singular() {
        let a = Matrix::from_rows(&[vec![1.5, 0.5], vec![-0.25, 1.0]]);
        let det = a.determinant().abs();
        let field = DensityField::new(
            fields::affine(a, vec![0.0, 0.0]),
            JordanSet::Box(AxisBox::from_coords(vec![-1.0, -1.0], vec![1.0, 1.0])),
            vec![1e-2, 1e-3],
            6,
        )
        .unwrap();
        let r = phi_derivative_check(
            &field,
            &Point::new(vec![0.2, -0.3]),
            &[0.2, 0.1, 0.05],
            6,
            &PushforwardOpts::default(),
        )
        .unwrap();
        assert!(
            r.final_gap_rel < 0.05,
            "gap {} vs det {det}",
            r.final_gap_rel
        );
        for (_, q) in &r.trace.quotients {
            assert!((q - det).abs() / det < 0.05);
        }

        // flattening map: quotients collapse toward zero
        let field = DensityField::new(
            fields::vector_fn(|p| vec![p.get(0).powi(3), p.get(1)]),
            JordanSet::Box(AxisBox::from_coords(vec![-1.0, -1.0], vec![1.0, 1.0])),
            vec![1e-2, 1e-3],
            6,
        )
        .unwrap();
        let r = phi_derivative_check(
            &field,
            &Point::new(vec![0.0, 0.0]),
            &[0.4, 0.2, 0.1],
            6,
            &PushforwardOpts::default(),
        )
        .unwrap();
        let qs: Vec<f64> = r.trace.quotients.iter().map(|&(_, q)| q).collect();
        assert!(*qs.last().unwrap() < 0.02, "{qs:?}");
        assert!(qs.last().unwrap() < qs.first().unwrap());
    }

    #[test]
    fn injectivity_probe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = JordanSet::Box(AxisBox::unit(2));
        let w =
            injectivity_probe(&fields::identity(2), &x, 512, 0.25, 1e-2, None, &mut rng).unwrap();
        assert!(w.is_empty());

        // even map on [-1, 1]: witnesses pair up +-a
        let x = JordanSet::Box(AxisBox::from_coords(vec![-1.0], vec![1.0]));
        let g = fields::vector_fn(|p| vec![p.get(0) * p.get(0)]);
        let w = injectivity_probe(&g, &x, 512, 0.5, 1e-3, None, &mut rng).unwrap();
        assert!(!w.is_empty());
        for wit in &w {
            assert!((wit.x.get(0) + wit.y.get(0)).abs() < 0.1, "{wit:?}");
        }
    }

    #[test]
    fn sard_report_affine_regular_is_empty() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]);
        let field = DensityField::new(
            fields::affine(a, vec![0.0, 0.0]),
            JordanSet::Box(AxisBox::unit(2)),
            vec![1e-2, 1e-3],
            5,
        )
        .unwrap();
        let r = sard_image_content(&field, 0.5, &[4, 5], Some(3.0), 1 << 26, 0).unwrap();
        assert_eq!(r.singular_cell_count, 0);
        assert!(r
            .image_outer_content_by_depth
            .iter()
            .all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn sard_cubic_cross_content_shrinks() {
        let field = DensityField::new(
            fields::vector_fn(|p| vec![p.get(0).powi(3), p.get(1).powi(3)]),
            JordanSet::Box(AxisBox::from_coords(vec![-1.0, -1.0], vec![1.0, 1.0])),
            vec![1e-2, 1e-3],
            5,
        )
        .unwrap();
        let r = sard_image_content(&field, 0.05, &[4, 5, 6], Some(3.75), 1 << 26, 0).unwrap();
        assert!(r.singular_cell_count > 0);
        let vals: Vec<f64> = r
            .image_outer_content_by_depth
            .iter()
            .map(|&(_, v)| v)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{vals:?}");
        assert!(vals.last().unwrap() < vals.first().unwrap());
    }

    #[test]
    fn cov_affine_ratio_near_one() {
        let f = fields::scalar_fn(|_| 1.0);
        let a = Matrix::from_rows(&[vec![1.2, 0.3], vec![-0.4, 0.9]]);
        let g = fields::affine(a.clone(), vec![0.5, -0.25]);
        let x = JordanSet::Box(AxisBox::unit(2));
        let mut opts = CovOpts::new(vec![4, 6]);
        opts.pushforward.lipschitz = Some(a.op_norm_max());
        opts.seed = 5;
        let report = change_of_variables(&f, &g, &x, &opts).unwrap();
        assert_eq!(report.verdict, CovVerdict::Verified, "{report:?}");
        let det = a.determinant().abs();
        assert!(
            report.lhs.contains(det) && report.rhs.contains(det),
            "{report:?}"
        );
        let widths = (report.lhs.width() + report.rhs.width()) / det;
        assert!((report.ratio - 1.0).abs() <= 0.01f64.max(widths));
    }

    #[test]
    fn cov_identity_verifies() {
        let f = fields::scalar_fn(|p| 1.0 + 0.2 * p.get(0));
        let g = fields::identity(2);
        let x = JordanSet::Box(AxisBox::unit(2));
        let mut opts = CovOpts::new(vec![3, 5]);
        opts.pushforward.lipschitz = Some(1.0);
        let report = change_of_variables(&f, &g, &x, &opts).unwrap();
        assert_eq!(report.verdict, CovVerdict::Verified, "{report:?}");
        assert!(report.flags.injectivity_witnesses.is_empty());
        assert!(report.flags.strong_diff_failures.is_empty());
        // integral of 1 + 0.2 x over the unit square is 1.1
        assert!(report.lhs.contains(1.1));
        assert!(report.rhs.contains(1.1));
    }
}
