//! Cube partitions, dotted (tagged) partitions, norms, refinement and
//! validation.
//!
//! Cells are stored as [`AxisBox`] so that anisotropic grids over boxes and
//! genuine cube partitions share one representation; a cube is a box with
//! equal sides. The norm of a partition is the largest max-norm diameter of a
//! cell, i.e. its longest side.

use std::fmt;

use thiserror::Error;

use crate::geometry::{interiors_overlap, AxisBox, GeometryError, Grid, JordanSet, Overlap, Point};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("partition has no cells")]
    Empty,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A finite set of pairwise non-overlapping cells tiling a parent box.
#[derive(Debug, Clone)]
pub struct CubePartition {
    pub parent: AxisBox,
    pub cells: Vec<AxisBox>,
}

/// A partition with a tag point chosen inside each cell.
#[derive(Debug, Clone)]
pub struct DottedPartition {
    pub parent: AxisBox,
    pub pairs: Vec<(AxisBox, Point)>,
}

impl DottedPartition {
    pub fn cells(&self) -> CubePartition {
        CubePartition {
            parent: self.parent.clone(),
            cells: self.pairs.iter().map(|(c, _)| c.clone()).collect(),
        }
    }

    pub fn norm(&self) -> Result<f64, PartitionError> {
        partition_norm(&self.cells())
    }
}

/// Tiles `parent` with `n_per_axis^m` congruent cells.
pub fn uniform_grid(parent: &AxisBox, n_per_axis: usize) -> Result<CubePartition, PartitionError> {
    let grid = Grid::new(
        parent.clone(),
        n_per_axis,
        crate::geometry::DEFAULT_CELL_BUDGET,
    )?;
    let mut cells = Vec::with_capacity(grid.cell_count());
    crate::geometry::for_each_multi(parent.dim(), n_per_axis, |_, multi| {
        cells.push(grid.cell_from_multi(multi));
    });
    Ok(CubePartition {
        parent: parent.clone(),
        cells,
    })
}

/// Replaces every cell by its own uniform grid; the result tiles the same
/// parent.
pub fn refine_uniform(
    p: &CubePartition,
    n_per_axis: usize,
) -> Result<CubePartition, PartitionError> {
    let mut cells = Vec::with_capacity(p.cells.len() * n_per_axis.pow(p.parent.dim() as u32));
    for cell in &p.cells {
        cells.extend(uniform_grid(cell, n_per_axis)?.cells);
    }
    Ok(CubePartition {
        parent: p.parent.clone(),
        cells,
    })
}

/// Largest max-norm diameter of a cell.
pub fn partition_norm(p: &CubePartition) -> Result<f64, PartitionError> {
    if p.cells.is_empty() {
        return Err(PartitionError::Empty);
    }
    Ok(p.cells
        .iter()
        .map(AxisBox::diameter_max)
        .fold(0.0, f64::max))
}

/// Tags every cell with its center.
pub fn tag_centers(p: &CubePartition) -> DottedPartition {
    DottedPartition {
        parent: p.parent.clone(),
        pairs: p.cells.iter().map(|c| (c.clone(), c.center())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Cells `i` and `j` share interior points.
    Overlap { i: usize, j: usize },
    /// Cell `i` is not contained in the parent.
    CellOutsideParent { i: usize },
    /// Total cell volume does not match the parent volume.
    TilingGap {
        cell_volume_sum: f64,
        parent_volume: f64,
    },
    /// Tag of pair `i` lies outside its cell.
    TagOutsideCell { i: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap { i, j } => write!(f, "cells {i} and {j} overlap"),
            Violation::CellOutsideParent { i } => write!(f, "cell {i} leaves the parent"),
            Violation::TilingGap {
                cell_volume_sum,
                parent_volume,
            } => write!(
                f,
                "cells tile volume {cell_volume_sum} but the parent has volume {parent_volume}"
            ),
            Violation::TagOutsideCell { i } => write!(f, "tag outside cell in pair {i}"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn validate_cells(parent: &AxisBox, cells: &[AxisBox], report: &mut ValidationReport) {
    for (i, c) in cells.iter().enumerate() {
        if !parent.contains_box(c) {
            report.violations.push(Violation::CellOutsideParent { i });
        }
    }
    // sweep along axis 0 so grid-like partitions stay near linear
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].lo().get(0).total_cmp(&cells[b].lo().get(0)));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if cells[j].lo().get(0) >= cells[i].hi().get(0) {
                break;
            }
            if cells[i].interiors_intersect(&cells[j]) {
                let (a, b) = (i.min(j), i.max(j));
                report.violations.push(Violation::Overlap { i: a, j: b });
            }
        }
    }
    let sum: f64 = cells.iter().map(AxisBox::volume).sum();
    let parent_volume = parent.volume();
    let tol = 1e-9 * parent_volume.max(1.0);
    if (sum - parent_volume).abs() > tol {
        report.violations.push(Violation::TilingGap {
            cell_volume_sum: sum,
            parent_volume,
        });
    }
}

/// Checks pairwise non-overlap, containment, the volume tiling identity and
/// tag membership. An empty report means the dotted partition is valid.
pub fn validate(p: &DottedPartition) -> ValidationReport {
    let mut report = ValidationReport::default();
    let cells: Vec<AxisBox> = p.pairs.iter().map(|(c, _)| c.clone()).collect();
    validate_cells(&p.parent, &cells, &mut report);
    for (i, (cell, tag)) in p.pairs.iter().enumerate() {
        if !cell.contains_point(tag) {
            report.violations.push(Violation::TagOutsideCell { i });
        }
    }
    report
}

/// A finite collection of pairwise non-overlapping Jordan sets covering a
/// parent set.
#[derive(Debug, Clone)]
pub struct JordanPartition {
    pub parent: JordanSet,
    pub parts: Vec<JordanSet>,
}

/// Norm of a Jordan partition: parts are over-approximated by their bounding
/// boxes, which is safe wherever only an upper bound on diameters is needed.
pub fn jordan_partition_norm(p: &JordanPartition) -> Result<f64, PartitionError> {
    if p.parts.is_empty() {
        return Err(PartitionError::Empty);
    }
    Ok(p.parts
        .iter()
        .map(|s| s.bounding_box().diameter_max())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct JordanPartitionReport {
    /// Pairs of parts whose interiors were certified to overlap.
    pub overlapping_pairs: Vec<(usize, usize)>,
    /// Outer content of the parent minus total outer content of the parts;
    /// positive values signal uncovered volume.
    pub coverage_defect: f64,
}

/// Tolerance-based validation of a Jordan partition: pairwise overlap via
/// grid classification and union coverage via outer contents.
pub fn validate_jordan(
    p: &JordanPartition,
    depth: u32,
    coverage_eps: f64,
    max_cells: u64,
) -> Result<JordanPartitionReport, PartitionError> {
    let mut overlapping_pairs = Vec::new();
    for i in 0..p.parts.len() {
        for j in (i + 1)..p.parts.len() {
            if let Overlap::Overlapping(_) =
                interiors_overlap(&p.parts[i], &p.parts[j], depth, max_cells)?
            {
                overlapping_pairs.push((i, j));
            }
        }
    }
    let parent_outer = crate::geometry::content_bracket(&p.parent, depth, max_cells)?.outer;
    let parts_outer: f64 = p
        .parts
        .iter()
        .map(|s| crate::geometry::content_bracket(s, depth, max_cells).map(|b| b.outer))
        .sum::<Result<f64, _>>()?;
    let defect = parent_outer - parts_outer;
    let _ = coverage_eps;
    Ok(JordanPartitionReport {
        overlapping_pairs,
        coverage_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_CELL_BUDGET;

    #[test]
    fn uniform_grid_counts_and_volumes() {
        let unit2 = AxisBox::unit(2);
        let p1 = uniform_grid(&unit2, 1).unwrap();
        assert_eq!(p1.cells.len(), 1);
        assert_eq!(p1.cells[0], unit2);

        let p2 = uniform_grid(&unit2, 2).unwrap();
        assert_eq!(p2.cells.len(), 4);
        for c in &p2.cells {
            assert!((c.volume() - 0.25).abs() < 1e-15);
        }

        let p3 = uniform_grid(&AxisBox::unit(3), 3).unwrap();
        assert_eq!(p3.cells.len(), 27);
        let total: f64 = p3.cells.iter().map(AxisBox::volume).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        let unit2 = AxisBox::unit(2);
        assert_eq!(
            partition_norm(&uniform_grid(&unit2, 2).unwrap()).unwrap(),
            0.5
        );
        assert_eq!(
            partition_norm(&uniform_grid(&unit2, 1).unwrap()).unwrap(),
            1.0
        );
        // 4x2 anisotropic grid: cells are 0.25 x 0.5, max-norm diameter 0.5
        let grid = Grid::new(unit2.clone(), 4, DEFAULT_CELL_BUDGET).unwrap();
        let mut cells = Vec::new();
        crate::geometry::for_each_multi(2, 4, |_, multi| {
            if multi[1] % 2 == 0 {
                let lo = vec![grid.edge(0, multi[0]), grid.edge(1, multi[1])];
                let hi = vec![grid.edge(0, multi[0] + 1), grid.edge(1, multi[1] + 2)];
                cells.push(AxisBox::from_coords(lo, hi));
            }
        });
        let p = CubePartition {
            parent: unit2,
            cells,
        };
        assert_eq!(partition_norm(&p).unwrap(), 0.5);
        assert!(validate(&tag_centers(&p)).is_valid());
    }

    #[test]
    fn norm_identity_for_uniform_grids() {
        for n in 1..=7 {
            let p = uniform_grid(&AxisBox::from_coords(vec![0.0], vec![2.0]), n).unwrap();
            let expected = 2.0 / n as f64;
            assert!((partition_norm(&p).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn center_tags() {
        let p = tag_centers(&uniform_grid(&AxisBox::from_coords(vec![0.0], vec![1.0]), 1).unwrap());
        assert_eq!(p.pairs[0].1, Point::new(vec![0.5]));

        let p = tag_centers(&uniform_grid(&AxisBox::unit(2), 2).unwrap());
        let tags: Vec<Vec<f64>> = p.pairs.iter().map(|(_, t)| t.coords().to_vec()).collect();
        assert!(tags.contains(&vec![0.25, 0.25]));
        assert!(tags.contains(&vec![0.75, 0.25]));
        assert!(tags.contains(&vec![0.25, 0.75]));
        assert!(tags.contains(&vec![0.75, 0.75]));

        let p = tag_centers(&uniform_grid(&AxisBox::from_coords(vec![0.0], vec![2.0]), 4).unwrap());
        let tags: Vec<f64> = p.pairs.iter().map(|(_, t)| t.get(0)).collect();
        assert_eq!(tags, vec![0.25, 0.75, 1.25, 1.75]);
    }

    #[test]
    fn validate_flags_bad_partitions() {
        let good = tag_centers(&uniform_grid(&AxisBox::unit(2), 2).unwrap());
        assert!(validate(&good).is_valid());

        let mut bad_tag = good.clone();
        bad_tag.pairs[0].1 = Point::new(vec![0.9, 0.9]);
        let report = validate(&bad_tag);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TagOutsideCell { i: 0 })));

        let overlapping = DottedPartition {
            parent: AxisBox::unit(1),
            pairs: vec![
                (
                    AxisBox::from_coords(vec![0.0], vec![0.7]),
                    Point::new(vec![0.1]),
                ),
                (
                    AxisBox::from_coords(vec![0.5], vec![1.0]),
                    Point::new(vec![0.9]),
                ),
            ],
        };
        let report = validate(&overlapping);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TilingGap { .. })));
    }

    #[test]
    fn refinement_preserves_validity() {
        let p = uniform_grid(&AxisBox::unit(2), 3).unwrap();
        let refined = refine_uniform(&p, 2).unwrap();
        assert_eq!(refined.cells.len(), 36);
        assert!(validate(&tag_centers(&refined)).is_valid());
    }

    #[test]
    fn center_tagging_always_validates() {
        use proptest::prelude::*;
        let strategy = (
            1usize..=3,
            1usize..=5,
            proptest::collection::vec(-3.0f64..3.0, 3),
        );
        proptest!(ProptestConfig::with_cases(64), |((m, n, lo) in strategy)| {
            let lo: Vec<f64> = lo[..m].to_vec();
            let hi: Vec<f64> = lo.iter().map(|v| v + 1.25).collect();
            let parent = AxisBox::from_coords(lo, hi);
            let p = uniform_grid(&parent, n).unwrap();
            prop_assert!((partition_norm(&p).unwrap() - 1.25 / n as f64).abs() < 1e-12);
            prop_assert!(validate(&tag_centers(&p)).is_valid());
        });
    }

    #[test]
    fn jordan_partition_coverage() {
        let parent = JordanSet::Box(AxisBox::unit(2));
        let parts = vec![
            JordanSet::Box(AxisBox::from_coords(vec![0.0, 0.0], vec![0.5, 1.0])),
            JordanSet::Box(AxisBox::from_coords(vec![0.5, 0.0], vec![1.0, 1.0])),
        ];
        let p = JordanPartition { parent, parts };
        assert_eq!(jordan_partition_norm(&p).unwrap(), 1.0);
        let report = validate_jordan(&p, 4, 1e-6, DEFAULT_CELL_BUDGET).unwrap();
        assert!(report.overlapping_pairs.is_empty());
        assert!(report.coverage_defect.abs() < 1e-9);
    }
}
