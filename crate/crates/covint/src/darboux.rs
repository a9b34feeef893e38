//! Lower/upper/oscillation/Riemann sums and bracketed integrals with
//! refinement control.
//!
//! Per-cell bounds on `f` come from a sample lattice: `samples_per_axis`
//! points per axis including the cell corners, plus the center. `Sampled`
//! mode reports the raw lattice min/max and is explicitly non-rigorous
//! (`inf` is overestimated, `sup` underestimated). `Modulus` mode widens the
//! lattice min/max by `L * rho`, where `rho` is the covering radius of the
//! lattice, and yields a true enclosure whenever `L` is a valid Lipschitz
//! constant for `f` on the cell.
//!
//! [`integral_bracket`] works over a Jordan set: the bounding box is gridded
//! dyadically, cells certified inside contribute ordinary Darboux terms,
//! cells straddling the boundary contribute `min(inf, 0)` / `max(sup, 0)`
//! terms so the bracket stays valid for the extension of `f` by zero outside
//! the set, and `f` is never evaluated at points classified `Outside` or
//! `Unknown`. Sample values are shared along the dyadic schedule (a cell
//! inherits the lattice of its descendants), which makes the per-depth trace
//! monotone in `Modulus` mode: lower sums never decrease, upper sums never
//! increase.

use std::fmt;

use thiserror::Error;

use crate::expr::EvalError;
use crate::geometry::{
    for_each_multi, AxisBox, CellClass, GeometryError, Grid, JordanSet, Membership,
};
use crate::partition::{CubePartition, DottedPartition};
use crate::{MatrixField, ScalarField};

#[derive(Debug, Error)]
pub enum DarbouxError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("depth schedule must be nonempty and strictly increasing")]
    BadSchedule,
}

/// Policy for estimating `inf f` and `sup f` over a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundMode {
    /// Lattice min/max as-is. Non-rigorous: a narrow estimate of the range.
    Sampled { samples_per_axis: usize },
    /// Lattice min/max widened by `lipschitz_f * covering radius`. A true
    /// enclosure of the range when the constant is valid.
    Modulus {
        lipschitz_f: f64,
        samples_per_axis: usize,
    },
}

impl Default for BoundMode {
    fn default() -> Self {
        BoundMode::Sampled {
            samples_per_axis: 2,
        }
    }
}

impl BoundMode {
    pub fn samples_per_axis(&self) -> usize {
        match self {
            BoundMode::Sampled { samples_per_axis } => *samples_per_axis,
            BoundMode::Modulus {
                samples_per_axis, ..
            } => *samples_per_axis,
        }
    }

    /// Margin added on both sides for a cell with the given max half extent.
    pub fn margin(&self, max_half_extent: f64) -> f64 {
        match self {
            BoundMode::Sampled { .. } => 0.0,
            BoundMode::Modulus {
                lipschitz_f,
                samples_per_axis,
            } => {
                let k = (*samples_per_axis).max(2);
                lipschitz_f * max_half_extent / (k - 1) as f64
            }
        }
    }

    pub fn rigor(&self) -> Rigor {
        match self {
            BoundMode::Sampled { .. } => Rigor::SampledHeuristic,
            BoundMode::Modulus { .. } => Rigor::ModulusEnclosure,
        }
    }
}

/// How much the reported numbers can be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rigor {
    /// Bounds from finite sampling only.
    SampledHeuristic,
    /// Enclosure under the caller's Lipschitz constant.
    ModulusEnclosure,
}

impl fmt::Display for Rigor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rigor::SampledHeuristic => f.write_str("sampled-heuristic"),
            Rigor::ModulusEnclosure => f.write_str("modulus-enclosure"),
        }
    }
}

/// A pair of numbers enclosing an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: u32,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn overlaps(&self, other: &Bracket) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

impl fmt::Display for Bracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] (depth {})", self.lower, self.upper, self.depth)
    }
}

/// Estimated `(inf, sup)` of `f` over a cell.
pub fn cell_inf_sup(
    f: &ScalarField,
    cell: &AxisBox,
    mode: &BoundMode,
) -> Result<(f64, f64), DarbouxError> {
    let m = cell.dim();
    let k = mode.samples_per_axis().max(1);
    let mut points: Vec<Vec<f64>> = Vec::new();
    if k == 1 {
        points.push(cell.center().coords().to_vec());
    } else {
        let mut coords = vec![0.0f64; m];
        for_each_multi(m, k, |_, multi| {
            for d in 0..m {
                coords[d] = lattice_coord(cell, d, multi[d], k);
            }
            points.push(coords.clone());
        });
        if k % 2 == 0 {
            points.push(cell.center().coords().to_vec());
        }
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for coords in &points {
        let v = f(&crate::geometry::Point::new(coords.clone()))?;
        if !v.is_finite() {
            return Err(EvalError::non_finite(coords).into());
        }
        min = min.min(v);
        max = max.max(v);
    }
    let margin = mode.margin(cell.max_half_extent());
    Ok((min - margin, max + margin))
}

#[inline]
fn lattice_coord(cell: &AxisBox, d: usize, i: usize, k: usize) -> f64 {
    if i == 0 {
        cell.lo().get(d)
    } else if i == k - 1 {
        cell.hi().get(d)
    } else {
        cell.lo().get(d) + cell.side(d) * i as f64 / (k - 1) as f64
    }
}

fn partition_sums(
    f: &ScalarField,
    phi: &CubePartition,
    mode: &BoundMode,
) -> Result<(f64, f64), DarbouxError> {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for cell in &phi.cells {
        let (lo, hi) = cell_inf_sup(f, cell, mode)?;
        let v = cell.volume();
        lower += lo * v;
        upper += hi * v;
    }
    Ok((lower, upper))
}

/// Sum of estimated infima times cell volumes.
pub fn lower_sum(
    f: &ScalarField,
    phi: &CubePartition,
    mode: &BoundMode,
) -> Result<f64, DarbouxError> {
    partition_sums(f, phi, mode).map(|(lo, _)| lo)
}

/// Sum of estimated suprema times cell volumes.
pub fn upper_sum(
    f: &ScalarField,
    phi: &CubePartition,
    mode: &BoundMode,
) -> Result<f64, DarbouxError> {
    partition_sums(f, phi, mode).map(|(_, hi)| hi)
}

/// Upper sum minus lower sum; vanishing oscillation is Riemann's condition.
pub fn oscillation_sum(
    f: &ScalarField,
    phi: &CubePartition,
    mode: &BoundMode,
) -> Result<f64, DarbouxError> {
    partition_sums(f, phi, mode).map(|(lo, hi)| hi - lo)
}

/// Exact weighted sum of tag evaluations over a dotted partition.
pub fn riemann_sum(f: &ScalarField, eta: &DottedPartition) -> Result<f64, DarbouxError> {
    let mut sum = 0.0;
    for (cell, tag) in &eta.pairs {
        let v = f(tag)?;
        if !v.is_finite() {
            return Err(EvalError::non_finite(tag.coords()).into());
        }
        sum += v * cell.volume();
    }
    Ok(sum)
}

#[derive(Debug, Clone)]
pub struct IntegralOpts {
    /// Absolute convergence tolerance (no relative criterion: integrals near
    /// zero must still be able to converge).
    pub tol: f64,
    pub max_cells: u64,
}

impl Default for IntegralOpts {
    fn default() -> Self {
        IntegralOpts {
            tol: 1e-6,
            max_cells: crate::geometry::DEFAULT_CELL_BUDGET,
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRecord {
    pub depth: u32,
    pub lower: f64,
    pub upper: f64,
    /// Oscillation total over cells certified inside.
    pub oscillation: f64,
    /// Width contributed by cells straddling the boundary.
    pub boundary_slack: f64,
}

#[derive(Debug, Clone)]
pub struct IntegralTrace {
    pub records: Vec<DepthRecord>,
    pub tol: f64,
    /// True when `oscillation + boundary_slack < tol` at the final depth.
    pub converged: bool,
    pub rigor: Rigor,
}

#[derive(Debug, Clone)]
pub struct IntegralResult {
    pub bracket: Bracket,
    pub trace: IntegralTrace,
}

/// Per-cell aggregate along the dyadic pyramid.
#[derive(Clone, Copy)]
struct CellAgg {
    class: CellClass,
    min: f64,
    max: f64,
}

/// Bracketed integral of `f` over `x` along a strictly increasing dyadic
/// depth schedule.
pub fn integral_bracket(
    f: &ScalarField,
    x: &JordanSet,
    schedule: &[u32],
    mode: &BoundMode,
    opts: &IntegralOpts,
) -> Result<IntegralResult, DarbouxError> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DarbouxError::BadSchedule);
    }
    let finest = *schedule.last().unwrap();
    let m = x.dim();
    let bb = x.bounding_box();
    let grid = Grid::dyadic(bb.clone(), finest, opts.max_cells)?;
    let n = grid.cells_per_axis();
    let k = mode.samples_per_axis().max(1);

    // global sample lattice: for k >= 2 cells share edge samples, so the
    // lattice has (k-1)*n + 1 positions per axis; k == 1 samples centers only
    let q = if k >= 2 { (k - 1) * n + 1 } else { n };
    let lattice_points = (q as u128).pow(m as u32);
    if lattice_points > 4 * opts.max_cells as u128 {
        return Err(GeometryError::CellBudget {
            cells: lattice_points,
            cap: 4 * opts.max_cells,
        }
        .into());
    }
    let lattice_pos = |d: usize, j: usize| -> f64 {
        if k >= 2 {
            if j == 0 {
                bb.lo().get(d)
            } else if j == q - 1 {
                bb.hi().get(d)
            } else {
                bb.lo().get(d) + bb.side(d) * j as f64 / (q - 1) as f64
            }
        } else {
            grid.center_coord(d, j)
        }
    };

    let mut lattice_stride = vec![1usize; m];
    for d in (0..m.saturating_sub(1)).rev() {
        lattice_stride[d] = lattice_stride[d + 1] * q;
    }

    // memberships of lattice points, classified once
    let total_lattice = q.pow(m as u32);
    let mut mem = vec![Membership::Outside; total_lattice];
    {
        let mut coords = vec![0.0f64; m];
        for_each_multi(m, q, |flat, multi| {
            for d in 0..m {
                coords[d] = lattice_pos(d, multi[d]);
            }
            mem[flat] = x.membership_coords(&coords);
        });
    }
    // centers are off-lattice when k is even
    let needs_centers = k >= 2 && k % 2 == 0;
    let mut center_mem: Vec<Membership> = Vec::new();
    if needs_centers {
        center_mem = vec![Membership::Outside; grid.cell_count()];
        let mut coords = vec![0.0f64; m];
        for_each_multi(m, n, |flat, multi| {
            for d in 0..m {
                coords[d] = grid.center_coord(d, multi[d]);
            }
            center_mem[flat] = x.membership_coords(&coords);
        });
    }

    let mut values: Vec<Option<f64>> = vec![None; total_lattice];
    let mut center_values: Vec<Option<f64>> = if needs_centers {
        vec![None; grid.cell_count()]
    } else {
        Vec::new()
    };

    let eval_at = |coords: &[f64]| -> Result<f64, DarbouxError> {
        let v = f(&crate::geometry::Point::new(coords.to_vec()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::non_finite(coords).into())
        }
    };

    // finest-level aggregates
    let mut level: Vec<CellAgg> = Vec::with_capacity(grid.cell_count());
    {
        let mut coords = vec![0.0f64; m];
        let mut err: Option<DarbouxError> = None;
        for_each_multi(m, n, |flat, multi| {
            if err.is_some() {
                return;
            }
            let cell = grid.cell_from_multi(multi);
            let class = x.cell_class(&cell);
            let mut agg = CellAgg {
                class,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            };
            if class != CellClass::Outside {
                if k >= 2 {
                    let base: usize = (0..m).map(|d| multi[d] * (k - 1) * lattice_stride[d]).sum();
                    let mut offsets_err = None;
                    for_each_multi(m, k, |_, off| {
                        if offsets_err.is_some() {
                            return;
                        }
                        let idx: usize =
                            base + (0..m).map(|d| off[d] * lattice_stride[d]).sum::<usize>();
                        if mem[idx] != Membership::Inside {
                            return;
                        }
                        let v = match values[idx] {
                            Some(v) => v,
                            None => {
                                for d in 0..m {
                                    coords[d] = lattice_pos(d, multi[d] * (k - 1) + off[d]);
                                }
                                match eval_at(&coords) {
                                    Ok(v) => {
                                        values[idx] = Some(v);
                                        v
                                    }
                                    Err(e) => {
                                        offsets_err = Some(e);
                                        return;
                                    }
                                }
                            }
                        };
                        agg.min = agg.min.min(v);
                        agg.max = agg.max.max(v);
                    });
                    if let Some(e) = offsets_err {
                        err = Some(e);
                        return;
                    }
                }
                let center_slot = if k == 1 {
                    Some((flat, mem[flat]))
                } else if needs_centers {
                    Some((flat, center_mem[flat]))
                } else {
                    None
                };
                if let Some((idx, membership)) = center_slot {
                    if membership == Membership::Inside {
                        let store = if k == 1 {
                            &mut values
                        } else {
                            &mut center_values
                        };
                        let v = match store[idx] {
                            Some(v) => v,
                            None => {
                                for d in 0..m {
                                    coords[d] = grid.center_coord(d, multi[d]);
                                }
                                match eval_at(&coords) {
                                    Ok(v) => {
                                        store[idx] = Some(v);
                                        v
                                    }
                                    Err(e) => {
                                        err = Some(e);
                                        return;
                                    }
                                }
                            }
                        };
                        agg.min = agg.min.min(v);
                        agg.max = agg.max.max(v);
                    }
                }
            }
            level.push(agg);
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    drop(values);
    drop(center_values);

    // walk the pyramid from finest up, recording scheduled depths
    let mut records: Vec<DepthRecord> = Vec::new();
    let mut depth = finest;
    let mut cells_per_axis = n;
    loop {
        if schedule.contains(&depth) {
            records.push(sum_level(&level, &bb, depth, cells_per_axis, mode));
        }
        if depth == *schedule.first().unwrap() {
            break;
        }
        // merge 2^m children into each parent
        let parent_n = cells_per_axis / 2;
        let mut parent = vec![
            CellAgg {
                class: CellClass::Outside,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY
            };
            parent_n.pow(m as u32)
        ];
        let mut seen = vec![false; parent.len()];
        for_each_multi(m, cells_per_axis, |flat, multi| {
            let pflat: usize = multi.iter().fold(0, |acc, &i| acc * parent_n + i / 2);
            let child = level[flat];
            let p = &mut parent[pflat];
            if !seen[pflat] {
                *p = child;
                seen[pflat] = true;
                return;
            }
            p.min = p.min.min(child.min);
            p.max = p.max.max(child.max);
            p.class = match (p.class, child.class) {
                (CellClass::Inside, CellClass::Inside) => CellClass::Inside,
                (CellClass::Outside, CellClass::Outside) => CellClass::Outside,
                _ => CellClass::Straddle,
            };
        });
        level = parent;
        cells_per_axis = parent_n;
        depth -= 1;
    }
    records.reverse();

    let last = *records.last().unwrap();
    let converged = last.oscillation + last.boundary_slack < opts.tol;
    Ok(IntegralResult {
        bracket: Bracket {
            lower: last.lower,
            upper: last.upper,
            depth: last.depth,
        },
        trace: IntegralTrace {
            records,
            tol: opts.tol,
            converged,
            rigor: mode.rigor(),
        },
    })
}

fn sum_level(
    level: &[CellAgg],
    bb: &AxisBox,
    depth: u32,
    cells_per_axis: usize,
    mode: &BoundMode,
) -> DepthRecord {
    let m = bb.dim();
    let cell_volume: f64 = (0..m).map(|d| bb.side(d) / cells_per_axis as f64).product();
    let max_half = bb.diameter_max() / (2.0 * cells_per_axis as f64);
    let margin = mode.margin(max_half);
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut oscillation = 0.0;
    let mut slack = 0.0;
    for agg in level {
        match agg.class {
            CellClass::Outside => {}
            CellClass::Inside => {
                let lo = agg.min - margin;
                let hi = agg.max + margin;
                lower += lo * cell_volume;
                upper += hi * cell_volume;
                oscillation += (hi - lo) * cell_volume;
            }
            CellClass::Straddle => {
                // extension by zero: the cell's true contribution lies
                // between min(inf, 0) V and max(sup, 0) V
                let lo = if agg.min.is_finite() {
                    (agg.min - margin).min(0.0)
                } else {
                    0.0
                };
                let hi = if agg.max.is_finite() {
                    (agg.max + margin).max(0.0)
                } else {
                    0.0
                };
                lower += lo * cell_volume;
                upper += hi * cell_volume;
                slack += (hi - lo) * cell_volume;
            }
        }
    }
    DepthRecord {
        depth,
        lower,
        upper,
        oscillation,
        boundary_slack: slack,
    }
}

/// Entrywise [`integral_bracket`] of a matrix-valued function.
pub fn integrate_matrix(
    h: &MatrixField,
    dims: usize,
    x: &JordanSet,
    schedule: &[u32],
    mode: &BoundMode,
    opts: &IntegralOpts,
) -> Result<Vec<Vec<IntegralResult>>, DarbouxError> {
    let mut out = Vec::with_capacity(dims);
    for i in 0..dims {
        let mut row = Vec::with_capacity(dims);
        for j in 0..dims {
            let h = h.clone();
            let entry: ScalarField = std::sync::Arc::new(move |p| h(p).map(|mat| mat.get(i, j)));
            row.push(integral_bracket(&entry, x, schedule, mode, opts)?);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use crate::geometry::{Classifier, ClassifyFn, Point};
    use crate::partition::{tag_centers, uniform_grid};
    use std::sync::Arc;

    fn unit_interval() -> AxisBox {
        AxisBox::unit(1)
    }

    #[test]
    fn cell_bounds_constant() {
        let f = fields::scalar_fn(|_| 3.0);
        let cell = unit_interval();
        let sampled = cell_inf_sup(&f, &cell, &BoundMode::default()).unwrap();
        assert_eq!(sampled, (3.0, 3.0));
        let with_margin = cell_inf_sup(
            &f,
            &cell,
            &BoundMode::Modulus {
                lipschitz_f: 1.0,
                samples_per_axis: 2,
            },
        )
        .unwrap();
        assert_eq!(with_margin, (3.0 - 0.5, 3.0 + 0.5));
    }

    #[test]
    fn cell_bounds_linear_modulus() {
        let f = fields::scalar_fn(|p| p.get(0));
        let (lo, hi) = cell_inf_sup(
            &f,
            &unit_interval(),
            &BoundMode::Modulus {
                lipschitz_f: 1.0,
                samples_per_axis: 2,
            },
        )
        .unwrap();
        assert_eq!((lo, hi), (-0.5, 1.5));
        // true range [0, 1] is enclosed
        assert!(lo <= 0.0 && hi >= 1.0);
    }

    #[test]
    fn cell_bounds_square_sampled() {
        let f = fields::scalar_fn(|p| p.get(0) * p.get(0));
        let (lo, hi) = cell_inf_sup(
            &f,
            &unit_interval(),
            &BoundMode::Sampled {
                samples_per_axis: 3,
            },
        )
        .unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn sums_linear() {
        let f = fields::scalar_fn(|p| p.get(0));
        let phi = uniform_grid(&unit_interval(), 4).unwrap();
        let mode = BoundMode::default();
        assert!((lower_sum(&f, &phi, &mode).unwrap() - 0.375).abs() < 1e-15);
        assert!((upper_sum(&f, &phi, &mode).unwrap() - 0.625).abs() < 1e-15);
        assert!((oscillation_sum(&f, &phi, &mode).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sums_indicator_straddling_cell() {
        // indicator of [0, 0.5] sampled on the n = 3 grid: the middle cell
        // straddles the step and oscillates by 1
        let f = fields::scalar_fn(|p| if p.get(0) <= 0.5 { 1.0 } else { 0.0 });
        let phi = uniform_grid(&unit_interval(), 3).unwrap();
        let mode = BoundMode::default();
        let lo = lower_sum(&f, &phi, &mode).unwrap();
        let hi = upper_sum(&f, &phi, &mode).unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-15);
        assert!((hi - 2.0 / 3.0).abs() < 1e-15);
        assert!((oscillation_sum(&f, &phi, &mode).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        // aligned n = 2 grid: the left cell is exact; the right cell still
        // sees the closed step at its shared corner, so the upper sum keeps it
        let phi = uniform_grid(&unit_interval(), 2).unwrap();
        assert!((lower_sum(&f, &phi, &mode).unwrap() - 0.5).abs() < 1e-15);
        assert!((upper_sum(&f, &phi, &mode).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oscillation_linear_is_one_over_n() {
        let f = fields::scalar_fn(|p| p.get(0));
        for n in [1usize, 2, 5, 8] {
            let phi = uniform_grid(&unit_interval(), n).unwrap();
            let osc = oscillation_sum(&f, &phi, &BoundMode::default()).unwrap();
            assert!((osc - 1.0 / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn riemann_sums() {
        let one = fields::scalar_fn(|_| 1.0);
        let eta = tag_centers(&uniform_grid(&AxisBox::unit(2), 3).unwrap());
        assert!((riemann_sum(&one, &eta).unwrap() - 1.0).abs() < 1e-14);

        let id = fields::scalar_fn(|p| p.get(0));
        let eta = tag_centers(&uniform_grid(&unit_interval(), 2).unwrap());
        assert!((riemann_sum(&id, &eta).unwrap() - 0.5).abs() < 1e-15);

        let sum_xy = fields::scalar_fn(|p| p.get(0) + p.get(1));
        let eta = tag_centers(&uniform_grid(&AxisBox::unit(2), 2).unwrap());
        assert!((riemann_sum(&sum_xy, &eta).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integral_constant_on_box() {
        let f = fields::scalar_fn(|_| 1.0);
        let x = JordanSet::Box(AxisBox::unit(2));
        let r = integral_bracket(
            &f,
            &x,
            &[1],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        assert_eq!(r.bracket.lower, 1.0);
        assert_eq!(r.bracket.upper, 1.0);
        assert!(r.trace.converged);
    }

    #[test]
    fn integral_sqrt_contains_two_thirds() {
        // analytic antiderivative: integral of sqrt over [0,1] is 2/3
        let f = fields::scalar_fn(|p| p.get(0).max(0.0).sqrt());
        let x = JordanSet::Box(unit_interval());
        let r = integral_bracket(
            &f,
            &x,
            &[4, 8, 12],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        assert!(r.bracket.contains(2.0 / 3.0));
        assert!(r.bracket.width() < 1e-3);
    }

    fn unit_disk_set() -> JordanSet {
        let classify: ClassifyFn = Arc::new(|p: &Point| {
            if p.get(0) * p.get(0) + p.get(1) * p.get(1) <= 1.0 {
                Membership::Inside
            } else {
                Membership::Outside
            }
        });
        let mut cl = Classifier::new(
            AxisBox::from_coords(vec![-1.0, -1.0], vec![1.0, 1.0]),
            classify,
        );
        cl.convex_safe = true;
        JordanSet::Classified(cl)
    }

    #[test]
    fn integral_over_disk_contains_pi() {
        let f = fields::scalar_fn(|_| 1.0);
        let r = integral_bracket(
            &f,
            &unit_disk_set(),
            &[6, 8, 10],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        assert!(
            r.bracket.contains(std::f64::consts::PI),
            "bracket {:?}",
            r.bracket
        );
        assert!(r.bracket.width() < 0.05);
        // boundary cells dominate the width
        let last = r.trace.records.last().unwrap();
        assert!(last.boundary_slack > last.oscillation);
    }

    #[test]
    fn trace_monotone_in_modulus_mode() {
        let f = fields::scalar_fn(|p| (3.0 * p.get(0)).sin() + p.get(1));
        let x = JordanSet::Box(AxisBox::unit(2));
        let mode = BoundMode::Modulus {
            lipschitz_f: 4.0,
            samples_per_axis: 2,
        };
        let r =
            integral_bracket(&f, &x, &[2, 3, 4, 5, 6], &mode, &IntegralOpts::default()).unwrap();
        for w in r.trace.records.windows(2) {
            assert!(w[1].lower >= w[0].lower - 1e-12, "{w:?}");
            assert!(w[1].upper <= w[0].upper + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn riemann_sums_consistent_with_bracket() {
        // any tagged partition on the bracket's own grid lands within
        // bracket width + oscillation of the bracket midpoint
        let f = fields::scalar_fn(|p| (2.0 * p.get(0)).cos() + p.get(1));
        let x = JordanSet::Box(AxisBox::unit(2));
        let depth = 4u32;
        let r = integral_bracket(
            &f,
            &x,
            &[depth],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        let rec = r.trace.records.last().unwrap();
        let eta = tag_centers(&uniform_grid(&AxisBox::unit(2), 1 << depth).unwrap());
        let sigma = riemann_sum(&f, &eta).unwrap();
        assert!(
            (sigma - r.bracket.midpoint()).abs() <= r.bracket.width() + rec.oscillation + 1e-12
        );
    }

    #[test]
    fn never_evaluates_outside_the_set() {
        // f traps any evaluation outside the disk
        let f = fields::scalar_fn(|p| {
            let r2 = p.get(0) * p.get(0) + p.get(1) * p.get(1);
            assert!(r2 <= 1.0 + 1e-12, "evaluated outside at {p}");
            1.0
        });
        integral_bracket(
            &f,
            &unit_disk_set(),
            &[6],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
    }

    #[test]
    fn eval_fault_aborts() {
        let f = fields::scalar_fn(|p| 1.0 / (p.get(0) - 0.5));
        let x = JordanSet::Box(unit_interval());
        let err = integral_bracket(
            &f,
            &x,
            &[3],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DarbouxError::Eval(_)));
    }

    #[test]
    fn matrix_integration() {
        let m = 2usize;
        let h: crate::MatrixField = Arc::new(|_p: &Point| Ok(crate::linalg::Matrix::identity(2)));
        let x = JordanSet::Box(AxisBox::unit(2));
        let out = integrate_matrix(
            &h,
            m,
            &x,
            &[2],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        for i in 0..m {
            for j in 0..m {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((out[i][j].bracket.midpoint() - expected).abs() < 1e-12);
            }
        }

        // h(x) = [[x, 0], [0, x]] on [0,1]: diagonal entries integrate to 1/2
        let h: crate::MatrixField =
            Arc::new(|p: &Point| Ok(crate::linalg::Matrix::diagonal(&[p.get(0), p.get(0)])));
        let x = JordanSet::Box(unit_interval());
        let out = integrate_matrix(
            &h,
            2,
            &x,
            &[2, 8],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        assert!(out[0][0].bracket.contains(0.5));
        assert!(out[1][1].bracket.contains(0.5));
        assert!((out[0][1].bracket.midpoint()).abs() < 1e-12);

        // h(x,y) = [[x, y], [y, x]] on the unit square: every entry brackets 1/2
        let h: crate::MatrixField = Arc::new(|p: &Point| {
            Ok(crate::linalg::Matrix::from_rows(&[
                vec![p.get(0), p.get(1)],
                vec![p.get(1), p.get(0)],
            ]))
        });
        let x = JordanSet::Box(AxisBox::unit(2));
        let out = integrate_matrix(
            &h,
            2,
            &x,
            &[2, 7],
            &BoundMode::default(),
            &IntegralOpts::default(),
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    out[i][j].bracket.contains(0.5),
                    "entry {i}{j}: {:?}",
                    out[i][j].bracket
                );
            }
        }
    }
}
