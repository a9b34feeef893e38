//! Cubes, boxes, Jordan sets and inner/outer Jordan content estimation.
//!
//! Everything lives in `R^m` under the max norm, so closed balls are cubes.
//! A [`JordanSet`] is either an explicit axis box, a union of
//! pairwise non-overlapping cubes, or a bounded region described by a
//! membership classifier. Content estimation grids the bounding box dyadically
//! and reports an honest [`ContentBracket`]: cells certified inside count
//! toward `inner`, cells not certified outside count toward `outer`.
//!
//! For `Box` and `CubeUnion` sets the per-cell tests are exact interval
//! geometry. For `Classified` sets the toolkit samples cell corners plus the
//! center; a classifier may answer `Unknown` near its boundary and such cells
//! never count toward `inner`. Corner-plus-center certification is heuristic
//! unless the caller flags the classifier `convex_safe` or supplies a per-cell
//! certificate.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::EvalError;
use crate::VectorField;

/// Default cap on grid cells per operation.
pub const DEFAULT_CELL_BUDGET: u64 = 1 << 26;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("ambient dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cell budget exceeded: {cells} cells requested, cap is {cap}; lower the depth or raise the budget")]
    CellBudget { cells: u128, cap: u64 },
    #[error("cubes {i} and {j} of the union share interior points")]
    OverlappingCubes { i: usize, j: usize },
    #[error("operation needs a nonempty set of cubes")]
    EmptyUnion,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A point of `R^m`. Coordinates are finite and `m >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(!coords.is_empty(), "points need at least one coordinate");
        assert!(
            coords.iter().all(|c| c.is_finite()),
            "point coordinates must be finite"
        );
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// Max-norm distance.
    pub fn dist_max(&self, other: &Point) -> f64 {
        dist_max(&self.coords, other.coords())
    }

    /// Bit-exact cache key.
    pub fn bit_key(&self) -> Vec<u64> {
        self.coords.iter().map(|c| c.to_bits()).collect()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub fn dist_max(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn norm_max(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Closed max-norm ball: the cube with the given center and half width.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub center: Point,
    pub half_width: f64,
}

impl Cube {
    pub fn new(center: Point, half_width: f64) -> Self {
        assert!(
            half_width > 0.0 && half_width.is_finite(),
            "half width must be positive"
        );
        Cube { center, half_width }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn volume(&self) -> f64 {
        cube_volume(self)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist_max(p) <= self.half_width
    }

    pub fn to_box(&self) -> AxisBox {
        let lo = self
            .center
            .coords()
            .iter()
            .map(|c| c - self.half_width)
            .collect();
        let hi = self
            .center
            .coords()
            .iter()
            .map(|c| c + self.half_width)
            .collect();
        AxisBox::new(Point::new(lo), Point::new(hi))
    }
}

/// Volume of a cube, `(2 * half_width)^m`.
pub fn cube_volume(c: &Cube) -> f64 {
    (2.0 * c.half_width).powi(c.dim() as i32)
}

/// Closed axis-aligned box, possibly with unequal side lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: Point,
    hi: Point,
}

impl AxisBox {
    pub fn new(lo: Point, hi: Point) -> Self {
        assert_eq!(lo.dim(), hi.dim(), "corner dimension mismatch");
        for d in 0..lo.dim() {
            assert!(
                lo.get(d) <= hi.get(d),
                "box corners out of order on axis {d}"
            );
        }
        AxisBox { lo, hi }
    }

    pub fn from_coords(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self::new(Point::new(lo), Point::new(hi))
    }

    /// The cube `[0,1]^m` scaled to arbitrary bounds per axis is common enough
    /// in tests to warrant a shorthand for the unit box.
    pub fn unit(m: usize) -> Self {
        Self::from_coords(vec![0.0; m], vec![1.0; m])
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn side(&self, d: usize) -> f64 {
        self.hi.get(d) - self.lo.get(d)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).product()
    }

    /// Max-norm diameter: the longest side.
    pub fn diameter_max(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).fold(0.0, f64::max)
    }

    pub fn max_half_extent(&self) -> f64 {
        self.diameter_max() / 2.0
    }

    pub fn center(&self) -> Point {
        Point::new(
            (0..self.dim())
                .map(|d| self.lo.get(d) + 0.5 * self.side(d))
                .collect(),
        )
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.contains_coords(p.coords())
    }

    pub fn contains_coords(&self, c: &[f64]) -> bool {
        debug_assert_eq!(c.len(), self.dim());
        (0..self.dim()).all(|d| c[d] >= self.lo.get(d) && c[d] <= self.hi.get(d))
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        (0..self.dim())
            .all(|d| other.lo.get(d) >= self.lo.get(d) && other.hi.get(d) <= self.hi.get(d))
    }

    /// Closed boxes sharing at least one point.
    pub fn intersects(&self, other: &AxisBox) -> bool {
        (0..self.dim())
            .all(|d| self.lo.get(d) <= other.hi.get(d) && other.lo.get(d) <= self.hi.get(d))
    }

    /// Open interiors sharing at least one point.
    pub fn interiors_intersect(&self, other: &AxisBox) -> bool {
        (0..self.dim())
            .all(|d| self.lo.get(d) < other.hi.get(d) && other.lo.get(d) < self.hi.get(d))
    }

    pub fn intersection(&self, other: &AxisBox) -> Option<AxisBox> {
        if !self.intersects(other) {
            return None;
        }
        let lo: Vec<f64> = (0..self.dim())
            .map(|d| self.lo.get(d).max(other.lo.get(d)))
            .collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|d| self.hi.get(d).min(other.hi.get(d)))
            .collect();
        Some(AxisBox::from_coords(lo, hi))
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        let lo: Vec<f64> = (0..self.dim())
            .map(|d| self.lo.get(d).min(other.lo.get(d)))
            .collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|d| self.hi.get(d).max(other.hi.get(d)))
            .collect();
        AxisBox::from_coords(lo, hi)
    }

    /// Corner selected by bit mask; axis 0 is the most significant bit, so
    /// increasing masks enumerate corners in lexicographic coordinate order.
    pub fn corner(&self, mask: usize) -> Point {
        let m = self.dim();
        Point::new(
            (0..m)
                .map(|d| {
                    if mask >> (m - 1 - d) & 1 == 1 {
                        self.hi.get(d)
                    } else {
                        self.lo.get(d)
                    }
                })
                .collect(),
        )
    }

    pub fn corners(&self) -> Vec<Point> {
        (0..1usize << self.dim())
            .map(|mask| self.corner(mask))
            .collect()
    }

    /// If all sides are equal (exactly), views the box as a cube.
    pub fn as_cube(&self) -> Option<Cube> {
        let s = self.side(0);
        if (1..self.dim()).all(|d| self.side(d) == s) && s > 0.0 {
            Some(Cube::new(self.center(), s / 2.0))
        } else {
            None
        }
    }

    /// Max-norm distance from a point to the closed box (0 inside).
    pub fn dist_max_to_point(&self, p: &Point) -> f64 {
        (0..self.dim())
            .map(|d| {
                let c = p.get(d);
                (self.lo.get(d) - c).max(c - self.hi.get(d)).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

impl From<Cube> for AxisBox {
    fn from(c: Cube) -> Self {
        c.to_box()
    }
}

impl fmt::Display for AxisBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in 0..self.dim() {
            if d > 0 {
                write!(f, " x ")?;
            }
            write!(f, "[{}, {}]", self.lo.get(d), self.hi.get(d))?;
        }
        Ok(())
    }
}

/// Pointwise answer of a membership classifier. `Inside`/`Outside` answers
/// must be truthful; `Unknown` is always allowed and keeps brackets honest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    Unknown,
}

/// Cell-level classification against a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Inside,
    Outside,
    Straddle,
}

pub type ClassifyFn = Arc<dyn Fn(&Point) -> Membership + Send + Sync>;
pub type CellCertificate = Arc<dyn Fn(&AxisBox) -> bool + Send + Sync>;

/// A bounded set given by a bounding box plus a membership function.
#[derive(Clone)]
pub struct Classifier {
    pub bounds: AxisBox,
    pub classify: ClassifyFn,
    /// When set, corner-plus-center certification is exact for this
    /// classifier (e.g. the set is convex). Otherwise inner cells are
    /// heuristic.
    pub convex_safe: bool,
    /// Optional exact inner certificate; overrides the corner test.
    pub cell_certificate: Option<CellCertificate>,
}

impl Classifier {
    pub fn new(bounds: AxisBox, classify: ClassifyFn) -> Self {
        Classifier {
            bounds,
            classify,
            convex_safe: false,
            cell_certificate: None,
        }
    }
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Classifier")
            .field("bounds", &self.bounds)
            .field("convex_safe", &self.convex_safe)
            .field("has_certificate", &self.cell_certificate.is_some())
            .finish()
    }
}

/// A bounded set the content machinery can work with.
#[derive(Debug, Clone)]
pub enum JordanSet {
    Box(AxisBox),
    CubeUnion(Vec<Cube>),
    Classified(Classifier),
}

impl JordanSet {
    pub fn cube_union(cubes: Vec<Cube>) -> Result<Self, GeometryError> {
        if cubes.is_empty() {
            return Err(GeometryError::EmptyUnion);
        }
        let m = cubes[0].dim();
        for c in &cubes {
            if c.dim() != m {
                return Err(GeometryError::DimensionMismatch {
                    expected: m,
                    got: c.dim(),
                });
            }
        }
        for i in 0..cubes.len() {
            for j in (i + 1)..cubes.len() {
                if cubes[i].to_box().interiors_intersect(&cubes[j].to_box()) {
                    return Err(GeometryError::OverlappingCubes { i, j });
                }
            }
        }
        Ok(JordanSet::CubeUnion(cubes))
    }

    pub fn dim(&self) -> usize {
        match self {
            JordanSet::Box(b) => b.dim(),
            JordanSet::CubeUnion(cs) => cs[0].dim(),
            JordanSet::Classified(c) => c.bounds.dim(),
        }
    }

    pub fn bounding_box(&self) -> AxisBox {
        match self {
            JordanSet::Box(b) => b.clone(),
            JordanSet::CubeUnion(cs) => {
                let mut bb = cs[0].to_box();
                for c in &cs[1..] {
                    bb = bb.hull(&c.to_box());
                }
                bb
            }
            JordanSet::Classified(c) => c.bounds.clone(),
        }
    }

    /// Pointwise membership. Exact for `Box` and `CubeUnion`.
    pub fn membership(&self, p: &Point) -> Membership {
        self.membership_coords(p.coords())
    }

    pub fn membership_coords(&self, c: &[f64]) -> Membership {
        match self {
            JordanSet::Box(b) => {
                if b.contains_coords(c) {
                    Membership::Inside
                } else {
                    Membership::Outside
                }
            }
            JordanSet::CubeUnion(cs) => {
                for cube in cs {
                    if dist_max(cube.center.coords(), c) <= cube.half_width {
                        return Membership::Inside;
                    }
                }
                Membership::Outside
            }
            JordanSet::Classified(cl) => {
                if !cl.bounds.contains_coords(c) {
                    return Membership::Outside;
                }
                (cl.classify)(&Point::new(c.to_vec()))
            }
        }
    }

    /// Slice version of [`JordanSet::cell_class`] for hot grid loops; avoids
    /// building boxes for the exact variants.
    pub fn cell_class_bounds(&self, lo: &[f64], hi: &[f64]) -> CellClass {
        match self {
            JordanSet::Box(b) => {
                let m = b.dim();
                let inside = (0..m).all(|d| lo[d] >= b.lo().get(d) && hi[d] <= b.hi().get(d));
                if inside {
                    CellClass::Inside
                } else if (0..m).any(|d| hi[d] < b.lo().get(d) || lo[d] > b.hi().get(d)) {
                    CellClass::Outside
                } else {
                    CellClass::Straddle
                }
            }
            JordanSet::CubeUnion(cs) => {
                let m = self.dim();
                let contained = |c: &Cube| {
                    (0..m).all(|d| {
                        lo[d] >= c.center.get(d) - c.half_width
                            && hi[d] <= c.center.get(d) + c.half_width
                    })
                };
                let touches = |c: &Cube| {
                    (0..m).all(|d| {
                        lo[d] <= c.center.get(d) + c.half_width
                            && c.center.get(d) - c.half_width <= hi[d]
                    })
                };
                if cs.iter().any(contained) {
                    CellClass::Inside
                } else if !cs.iter().any(touches) {
                    CellClass::Outside
                } else {
                    CellClass::Straddle
                }
            }
            JordanSet::Classified(_) => {
                self.cell_class(&AxisBox::from_coords(lo.to_vec(), hi.to_vec()))
            }
        }
    }

    /// Cell-level classification. Exact for `Box` and `CubeUnion`; for
    /// `Classified` sets it samples the cell corners plus the center (or the
    /// user certificate when one is supplied).
    pub fn cell_class(&self, cell: &AxisBox) -> CellClass {
        match self {
            JordanSet::Box(_) | JordanSet::CubeUnion(_) => {
                self.cell_class_bounds(cell.lo().coords(), cell.hi().coords())
            }
            JordanSet::Classified(cl) => {
                if !cl.bounds.intersects(cell) {
                    return CellClass::Outside;
                }
                let mut all_in = true;
                let mut all_out = true;
                for mask in 0..1usize << cell.dim() {
                    match self.membership(&cell.corner(mask)) {
                        Membership::Inside => all_out = false,
                        Membership::Outside => all_in = false,
                        Membership::Unknown => {
                            all_in = false;
                            all_out = false;
                        }
                    }
                }
                match self.membership(&cell.center()) {
                    Membership::Inside => all_out = false,
                    Membership::Outside => all_in = false,
                    Membership::Unknown => {
                        all_in = false;
                        all_out = false;
                    }
                }
                let inside = match &cl.cell_certificate {
                    Some(cert) => cert(cell),
                    None => all_in,
                };
                if inside {
                    CellClass::Inside
                } else if all_out {
                    CellClass::Outside
                } else {
                    CellClass::Straddle
                }
            }
        }
    }

    /// True when the closed cube `B(center, r)` is certified inside the set.
    pub fn contains_cube(&self, center: &Point, r: f64) -> bool {
        let cell = Cube::new(center.clone(), r).to_box();
        self.cell_class(&cell) == CellClass::Inside
    }

    /// Lower bound on the max-norm distance from `p` to the set (exact for
    /// `Box` and `CubeUnion`). Used for conservative masking: a point within
    /// `eps` of the set always reports a value at most `eps`.
    pub fn dist_max_lower_bound(&self, p: &Point) -> f64 {
        match self {
            JordanSet::Box(b) => b.dist_max_to_point(p),
            JordanSet::CubeUnion(cs) => cs
                .iter()
                .map(|c| c.to_box().dist_max_to_point(p))
                .fold(f64::INFINITY, f64::min),
            JordanSet::Classified(cl) => {
                if self.membership(p) == Membership::Inside {
                    0.0
                } else {
                    cl.bounds.dist_max_to_point(p)
                }
            }
        }
    }
}

/// A pair `(inner, outer)` enclosing a Jordan content.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentBracket {
    pub inner: f64,
    pub outer: f64,
    pub depth: u32,
}

impl ContentBracket {
    pub fn width(&self) -> f64 {
        self.outer - self.inner
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.inner + self.outer)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.inner <= v && v <= self.outer
    }
}

impl fmt::Display for ContentBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] (depth {})", self.inner, self.outer, self.depth)
    }
}

/// Uniform grid of `n^m` congruent cells over an axis box.
///
/// Cell edges on axis `d` sit at `lo_d + side_d * i / n`, with the outermost
/// edges pinned to the box corners exactly so grid-aligned tests are exact.
/// Flat indices enumerate cells lexicographically with the last axis fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    bounds: AxisBox,
    n: usize,
}

impl Grid {
    pub fn new(bounds: AxisBox, n: usize, max_cells: u64) -> Result<Self, GeometryError> {
        assert!(n >= 1);
        let m = bounds.dim() as u32;
        let cells = (n as u128).checked_pow(m).unwrap_or(u128::MAX);
        if cells > max_cells as u128 {
            return Err(GeometryError::CellBudget {
                cells,
                cap: max_cells,
            });
        }
        Ok(Grid { bounds, n })
    }

    /// Dyadic grid with `2^depth` cells per axis.
    pub fn dyadic(bounds: AxisBox, depth: u32, max_cells: u64) -> Result<Self, GeometryError> {
        if depth >= 48 {
            return Err(GeometryError::CellBudget {
                cells: u128::MAX,
                cap: max_cells,
            });
        }
        Self::new(bounds, 1usize << depth, max_cells)
    }

    pub fn bounds(&self) -> &AxisBox {
        &self.bounds
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim())
            .map(|d| self.bounds.side(d) / self.n as f64)
            .product()
    }

    /// Edge `i` (0..=n) along axis `d`; endpoints are exact.
    #[inline]
    pub fn edge(&self, d: usize, i: usize) -> f64 {
        if i == 0 {
            self.bounds.lo().get(d)
        } else if i == self.n {
            self.bounds.hi().get(d)
        } else {
            self.bounds.lo().get(d) + self.bounds.side(d) * (i as f64) / (self.n as f64)
        }
    }

    #[inline]
    pub fn center_coord(&self, d: usize, i: usize) -> f64 {
        self.bounds.lo().get(d) + self.bounds.side(d) * (i as f64 + 0.5) / (self.n as f64)
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rest = flat;
        for d in (0..self.dim()).rev() {
            out[d] = rest % self.n;
            rest /= self.n;
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn cell_from_multi(&self, multi: &[usize]) -> AxisBox {
        let lo: Vec<f64> = (0..self.dim()).map(|d| self.edge(d, multi[d])).collect();
        let hi: Vec<f64> = (0..self.dim())
            .map(|d| self.edge(d, multi[d] + 1))
            .collect();
        AxisBox::from_coords(lo, hi)
    }

    /// Writes the cell bounds into scratch buffers (no allocation).
    pub fn cell_bounds_into(&self, multi: &[usize], lo: &mut [f64], hi: &mut [f64]) {
        for d in 0..self.dim() {
            lo[d] = self.edge(d, multi[d]);
            hi[d] = self.edge(d, multi[d] + 1);
        }
    }

    pub fn cell(&self, flat: usize) -> AxisBox {
        let mut multi = vec![0usize; self.dim()];
        self.multi_index(flat, &mut multi);
        self.cell_from_multi(&multi)
    }

    pub fn center_from_multi(&self, multi: &[usize]) -> Point {
        Point::new(
            (0..self.dim())
                .map(|d| self.center_coord(d, multi[d]))
                .collect(),
        )
    }
}

/// Iterate multi-indices of a `per_axis^m` lattice in lexicographic order
/// (last axis fastest), calling `f` with (flat, multi).
pub(crate) fn for_each_multi(m: usize, per_axis: usize, mut f: impl FnMut(usize, &[usize])) {
    let mut idx = vec![0usize; m];
    let total = per_axis.pow(m as u32);
    for flat in 0..total {
        f(flat, &idx);
        for d in (0..m).rev() {
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Estimates the Jordan content of `set` on the dyadic grid with `2^depth`
/// cells per axis over the set's bounding box.
///
/// `inner` totals cells certified fully inside, `outer` totals cells not
/// certified fully outside, so `inner <= V(set) <= outer` whenever the
/// classification is truthful at the sampled points (exact for `Box` and
/// `CubeUnion` sets).
pub fn content_bracket(
    set: &JordanSet,
    depth: u32,
    max_cells: u64,
) -> Result<ContentBracket, GeometryError> {
    let grid = Grid::dyadic(set.bounding_box(), depth, max_cells)?;
    let (inner_cells, outer_cells) = count_cells(set, &grid);
    let v = grid.cell_volume();
    Ok(ContentBracket {
        inner: inner_cells as f64 * v,
        outer: outer_cells as f64 * v,
        depth,
    })
}

/// (cells fully inside, cells not fully outside) of `set` on `grid`.
fn count_cells(set: &JordanSet, grid: &Grid) -> (u64, u64) {
    match set {
        JordanSet::Classified(cl) => count_cells_classified(set, cl, grid),
        _ => {
            let m = grid.dim();
            let mut inner = 0u64;
            let mut outer = 0u64;
            let mut lo = vec![0.0f64; m];
            let mut hi = vec![0.0f64; m];
            for_each_multi(m, grid.cells_per_axis(), |_, multi| {
                grid.cell_bounds_into(multi, &mut lo, &mut hi);
                match set.cell_class_bounds(&lo, &hi) {
                    CellClass::Inside => {
                        inner += 1;
                        outer += 1;
                    }
                    CellClass::Straddle => outer += 1,
                    CellClass::Outside => {}
                }
            });
            (inner, outer)
        }
    }
}

/// Classified sets share corner samples between neighboring cells, so the
/// corner lattice and the center lattice are classified once into flat arrays.
fn count_cells_classified(set: &JordanSet, cl: &Classifier, grid: &Grid) -> (u64, u64) {
    let m = grid.dim();
    let n = grid.cells_per_axis();
    let corners_per_axis = n + 1;

    let mut corner_class = vec![0u8; corners_per_axis.pow(m as u32)];
    let mut coords = vec![0.0f64; m];
    for_each_multi(m, corners_per_axis, |flat, multi| {
        for d in 0..m {
            coords[d] = grid.edge(d, multi[d]);
        }
        corner_class[flat] = set.membership_coords(&coords) as u8;
    });

    let mut center_class = vec![0u8; grid.cell_count()];
    for_each_multi(m, n, |flat, multi| {
        for d in 0..m {
            coords[d] = grid.center_coord(d, multi[d]);
        }
        center_class[flat] = set.membership_coords(&coords) as u8;
    });

    // strides of the corner lattice
    let mut stride = vec![1usize; m];
    for d in (0..m.saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * corners_per_axis;
    }

    const INSIDE: u8 = Membership::Inside as u8;
    const OUTSIDE: u8 = Membership::Outside as u8;

    let mut inner = 0u64;
    let mut outer = 0u64;
    for_each_multi(m, n, |flat, multi| {
        let base: usize = (0..m).map(|d| multi[d] * stride[d]).sum();
        let mut all_in = center_class[flat] == INSIDE;
        let mut all_out = center_class[flat] == OUTSIDE;
        for mask in 0..1usize << m {
            let mut idx = base;
            for d in 0..m {
                if mask >> (m - 1 - d) & 1 == 1 {
                    idx += stride[d];
                }
            }
            let c = corner_class[idx];
            all_in &= c == INSIDE;
            all_out &= c == OUTSIDE;
        }
        let inside = match &cl.cell_certificate {
            Some(cert) => cert(&grid.cell_from_multi(multi)),
            None => all_in,
        };
        if inside {
            inner += 1;
            outer += 1;
        } else if !all_out {
            outer += 1;
        }
    });
    (inner, outer)
}

/// Answer of [`interiors_overlap`].
#[derive(Debug, Clone, PartialEq)]
pub enum Overlap {
    /// A grid cell is certified interior to both sets; the cell is returned
    /// as a witness.
    Overlapping(AxisBox),
    NonOverlapping,
    Undetermined,
}

/// Decides whether two sets have overlapping interiors by gridding the
/// intersection of their bounding boxes.
pub fn interiors_overlap(
    a: &JordanSet,
    b: &JordanSet,
    depth: u32,
    max_cells: u64,
) -> Result<Overlap, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let common = match a.bounding_box().intersection(&b.bounding_box()) {
        Some(c) => c,
        None => return Ok(Overlap::NonOverlapping),
    };
    if common.volume() == 0.0 {
        // interiors are open; they cannot meet inside a degenerate box
        return Ok(Overlap::NonOverlapping);
    }
    let grid = Grid::dyadic(common, depth, max_cells)?;
    let mut shared_outer = false;
    let mut witness: Option<AxisBox> = None;
    let m = grid.dim();
    for_each_multi(m, grid.cells_per_axis(), |_, multi| {
        if witness.is_some() {
            return;
        }
        let cell = grid.cell_from_multi(multi);
        let ca = a.cell_class(&cell);
        if ca == CellClass::Outside {
            return;
        }
        let cb = b.cell_class(&cell);
        if cb == CellClass::Outside {
            return;
        }
        shared_outer = true;
        if ca == CellClass::Inside && cb == CellClass::Inside {
            witness = Some(cell);
        }
    });
    Ok(match witness {
        Some(w) => Overlap::Overlapping(w),
        None if !shared_outer => Overlap::NonOverlapping,
        None => Overlap::Undetermined,
    })
}

/// Upper estimate of the outer content of `G(H)` for `L`-Lipschitz `G`.
///
/// The bounding box of `H` is gridded at `2^depth` cells per axis; every cell
/// meeting `H` contributes the closed ball `B(G(center), L * half_extent)`,
/// which contains the image of the cell by the Lipschitz condition. The
/// returned value is the outer grid content of the union of those balls,
/// measured on a finer grid, and bounds `V*(G(H))` from above whenever `L` is
/// valid on the covering cells.
///
/// `G` is evaluated at covering cell centers, which may sit slightly outside
/// `H` on straddling cells; the map must be evaluable on the bounding box.
pub fn outer_content_of_image(
    g: &VectorField,
    h: &JordanSet,
    l: f64,
    depth: u32,
    max_cells: u64,
) -> Result<f64, GeometryError> {
    assert!(
        l > 0.0 && l.is_finite(),
        "Lipschitz constant must be positive"
    );
    let m = h.dim();
    let grid = Grid::dyadic(h.bounding_box(), depth, max_cells)?;
    let radius = l * grid_max_half_extent(&grid);

    let mut centers: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mut err: Option<GeometryError> = None;
    for_each_multi(m, grid.cells_per_axis(), |_, multi| {
        if err.is_some() {
            return;
        }
        let cell = grid.cell_from_multi(multi);
        if h.cell_class(&cell) == CellClass::Outside {
            return;
        }
        match g(&cell.center()) {
            Ok(img) => {
                if img.len() != m {
                    err = Some(GeometryError::DimensionMismatch {
                        expected: m,
                        got: img.len(),
                    });
                    return;
                }
                if !img.iter().all(|c| c.is_finite()) {
                    err = Some(GeometryError::Eval(EvalError::non_finite(&img)));
                    return;
                }
                centers.extend_from_slice(&img);
                count += 1;
            }
            Err(e) => err = Some(GeometryError::Eval(e)),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if count == 0 {
        return Ok(0.0);
    }
    union_of_balls_outer(
        &BallCover::new(centers, count, m, radius),
        depth + 2,
        max_cells,
    )
}

pub(crate) fn grid_max_half_extent(grid: &Grid) -> f64 {
    grid.bounds().diameter_max() / (2.0 * grid.cells_per_axis() as f64)
}

/// Equal-radius max-norm balls with a uniform spatial hash for containment
/// and intersection queries.
pub(crate) struct BallCover {
    pub centers: Vec<f64>, // count * m, flat
    pub count: usize,
    pub m: usize,
    pub radius: f64,
    hull: AxisBox,
    bucket_side: f64,
    buckets_per_axis: Vec<usize>,
    buckets: Vec<Vec<u32>>,
}

impl BallCover {
    pub fn new(centers: Vec<f64>, count: usize, m: usize, radius: f64) -> Self {
        assert_eq!(centers.len(), count * m);
        assert!(count > 0);
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for k in 0..count {
            for d in 0..m {
                let c = centers[k * m + d];
                lo[d] = lo[d].min(c);
                hi[d] = hi[d].max(c);
            }
        }
        let hull = AxisBox::from_coords(
            lo.iter().map(|v| v - radius).collect(),
            hi.iter().map(|v| v + radius).collect(),
        );
        // bucket side of one ball diameter keeps candidate scans local
        let bucket_side = (2.0 * radius).max(1e-300);
        let mut buckets_per_axis: Vec<usize> = (0..m)
            .map(|d| ((hull.side(d) / bucket_side).ceil() as usize).clamp(1, 1 << 20))
            .collect();
        // hard cap on the table size; a coarser table only means longer
        // candidate lists, never wrong answers
        loop {
            let total: u128 = buckets_per_axis.iter().map(|&b| b as u128).product();
            if total <= 1 << 21 {
                break;
            }
            let widest = (0..m).max_by_key(|&d| buckets_per_axis[d]).unwrap();
            buckets_per_axis[widest] = (buckets_per_axis[widest] / 2).max(1);
        }
        let total: usize = buckets_per_axis.iter().product();
        let mut cover = BallCover {
            centers,
            count,
            m,
            radius,
            hull,
            bucket_side,
            buckets_per_axis,
            buckets: vec![Vec::new(); total],
        };
        for k in 0..cover.count {
            let idx = cover.bucket_of(&cover.centers[k * cover.m..(k + 1) * cover.m]);
            cover.buckets[idx].push(k as u32);
        }
        cover
    }

    pub fn hull(&self) -> &AxisBox {
        &self.hull
    }

    fn bucket_coord(&self, d: usize, x: f64) -> usize {
        let rel = (x - self.hull.lo().get(d)) / self.bucket_side;
        (rel as isize).clamp(0, self.buckets_per_axis[d] as isize - 1) as usize
    }

    fn bucket_of(&self, coords: &[f64]) -> usize {
        let mut idx = 0usize;
        for d in 0..self.m {
            idx = idx * self.buckets_per_axis[d] + self.bucket_coord(d, coords[d]);
        }
        idx
    }

    /// Visits ball indices whose centers lie within `reach` (max norm) of
    /// `coords`, in increasing index order. Stops early if `f` returns false.
    pub fn scan_near(&self, coords: &[f64], reach: f64, mut f: impl FnMut(usize) -> bool) {
        let mut lo_b = vec![0usize; self.m];
        let mut hi_b = vec![0usize; self.m];
        for d in 0..self.m {
            lo_b[d] = self.bucket_coord(d, coords[d] - reach);
            hi_b[d] = self.bucket_coord(d, coords[d] + reach);
        }
        let mut cur = lo_b.clone();
        'outer: loop {
            let mut idx = 0usize;
            for d in 0..self.m {
                idx = idx * self.buckets_per_axis[d] + cur[d];
            }
            for &k in &self.buckets[idx] {
                let k = k as usize;
                let c = &self.centers[k * self.m..(k + 1) * self.m];
                if dist_max(c, coords) <= reach && !f(k) {
                    return;
                }
            }
            for d in (0..self.m).rev() {
                cur[d] += 1;
                if cur[d] <= hi_b[d] {
                    continue 'outer;
                }
                cur[d] = lo_b[d];
                if d == 0 {
                    break 'outer;
                }
            }
            if self.m == 0 {
                break;
            }
        }
    }

    /// Ball radius padded by an ulp-scale epsilon. Containment tests that are
    /// boundary-exact in exact arithmetic (Lipschitz bounds are often tight)
    /// must not flip to "outside" over the last bit of rounding.
    pub fn padded_radius(&self) -> f64 {
        self.radius * (1.0 + 1e-9)
    }

    /// True when the closed cell meets some closed ball (with padding).
    pub fn intersects_cell(&self, cell_center: &[f64], cell_half: &[f64]) -> bool {
        let radius = self.padded_radius();
        let reach = radius + cell_half.iter().cloned().fold(0.0, f64::max);
        let mut hit = false;
        self.scan_near(cell_center, reach, |k| {
            let c = &self.centers[k * self.m..(k + 1) * self.m];
            let ok = (0..self.m).all(|d| (c[d] - cell_center[d]).abs() <= radius + cell_half[d]);
            if ok {
                hit = true;
                false
            } else {
                true
            }
        });
        hit
    }
}

/// Outer grid content of a union of equal-radius balls.
fn union_of_balls_outer(
    cover: &BallCover,
    depth: u32,
    max_cells: u64,
) -> Result<f64, GeometryError> {
    let m = cover.m;
    // degenerate hull (all centers equal on some axis) still has balls with
    // extent `radius`, so the hull always has positive volume here
    let mut depth = depth;
    let grid = loop {
        match Grid::dyadic(cover.hull().clone(), depth, max_cells) {
            Ok(g) => break g,
            Err(_) if depth > 0 => depth -= 1,
            Err(e) => return Err(e),
        }
    };
    let n = grid.cells_per_axis();
    let half: Vec<f64> = (0..m)
        .map(|d| grid.bounds().side(d) / (2.0 * n as f64))
        .collect();
    let mut hit_cells = 0u64;
    let mut center = vec![0.0f64; m];
    for_each_multi(m, n, |_, multi| {
        for d in 0..m {
            center[d] = grid.center_coord(d, multi[d]);
        }
        if cover.intersects_cell(&center, &half) {
            hit_cells += 1;
        }
    });
    Ok(hit_cells as f64 * grid.cell_volume())
}
