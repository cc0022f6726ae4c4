//! In-line coordinate projections of n-D cases to 2-D polylines, and their inverses.
//!
//! ILC2 modes place one node per vertical slot. The node's x is the running
//! (optionally weighted) sum of the horizontal attributes up to its
//! horizontal slot; y is the raw vertical value (partial dynamic), the running
//! sum of vertical values (fully/weighted dynamic), or the raw value with a
//! per-slot x offset (static). Single-line ILC modes put every attribute on
//! the baseline at `offset_i + v_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset, LabeledCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Which attributes drive the horizontal and vertical position of each node.
///
/// `pairing[k] = (h, v)` are slot indices into `horizontal` and `vertical`.
/// Vertical slots are used once each in order; horizontal slots are
/// non-decreasing and may be shared by consecutive nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisAssignment {
    pub horizontal: Vec<usize>,
    pub vertical: Vec<usize>,
    pub pairing: Vec<(usize, usize)>,
    /// Attributes occupying more than one slot; inversion reads only the first.
    pub duplicated: Vec<usize>,
}

impl AxisAssignment {
    pub fn new(
        horizontal: Vec<usize>,
        vertical: Vec<usize>,
        pairing: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if vertical.is_empty() || horizontal.is_empty() {
            return Err(Error::Projection(
                "assignment needs at least one horizontal and one vertical slot".into(),
            ));
        }
        if pairing.len() != vertical.len() {
            return Err(Error::Projection(format!(
                "pairing has {} nodes but there are {} vertical slots",
                pairing.len(),
                vertical.len()
            )));
        }
        let mut prev_h = 0;
        for (k, &(h, v)) in pairing.iter().enumerate() {
            if v != k {
                return Err(Error::Projection(format!(
                    "node {k} must use vertical slot {k}, got {v}"
                )));
            }
            if h >= horizontal.len()
                || h < prev_h
                || (k > 0 && h > prev_h + 1)
                || (k == 0 && h != 0)
            {
                return Err(Error::Projection(format!(
                    "node {k}: horizontal slot {h} breaks the non-decreasing contiguous order"
                )));
            }
            prev_h = h;
        }
        if prev_h + 1 != horizontal.len() {
            return Err(Error::Projection(
                "some horizontal slots are never used".into(),
            ));
        }
        let mut seen: Vec<usize> = Vec::new();
        let mut duplicated = Vec::new();
        for &a in horizontal.iter().chain(vertical.iter()) {
            if seen.contains(&a) {
                if !duplicated.contains(&a) {
                    duplicated.push(a);
                }
            } else {
                seen.push(a);
            }
        }
        Ok(AxisAssignment {
            horizontal,
            vertical,
            pairing,
            duplicated,
        })
    }

    /// Positional pairing `(horizontal[k], vertical[k])`.
    pub fn zip(horizontal: Vec<usize>, vertical: Vec<usize>) -> Result<Self> {
        if horizontal.len() != vertical.len() {
            return Err(Error::Projection(format!(
                "zip needs equal lengths, got {} and {}",
                horizontal.len(),
                vertical.len()
            )));
        }
        let pairing = (0..vertical.len()).map(|k| (k, k)).collect();
        AxisAssignment::new(horizontal, vertical, pairing)
    }

    /// Pairs (x1,x2)(x3,x4)...; for odd `n` the last attribute is also used
    /// as the final vertical.
    pub fn consecutive(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Projection("dimension 0".into()));
        }
        let mut h = Vec::new();
        let mut v = Vec::new();
        let mut i = 0;
        while i < n {
            h.push(i);
            v.push(if i + 1 < n { i + 1 } else { i });
            i += 2;
        }
        AxisAssignment::zip(h, v)
    }

    /// Largest attribute index referenced plus one.
    pub fn min_dimension(&self) -> usize {
        self.horizontal
            .iter()
            .chain(self.vertical.iter())
            .max()
            .map(|m| m + 1)
            .unwrap_or(0)
    }

    /// `(horizontal attribute, vertical attribute)` per node.
    pub fn attribute_pairs(&self) -> Vec<(usize, usize)> {
        self.pairing
            .iter()
            .map(|&(h, v)| (self.horizontal[h], self.vertical[v]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    StaticSequential,
    StaticCollocated,
    StaticGeneric,
    Ilc2Static,
    Ilc2PartialDynamic,
    Ilc2FullyDynamic,
    Ilc2WeightedDynamic,
}

impl ProjectionMode {
    pub const ALL: [ProjectionMode; 7] = [
        ProjectionMode::StaticSequential,
        ProjectionMode::StaticCollocated,
        ProjectionMode::StaticGeneric,
        ProjectionMode::Ilc2Static,
        ProjectionMode::Ilc2PartialDynamic,
        ProjectionMode::Ilc2FullyDynamic,
        ProjectionMode::Ilc2WeightedDynamic,
    ];

    pub fn is_single_line(self) -> bool {
        matches!(
            self,
            ProjectionMode::StaticSequential
                | ProjectionMode::StaticCollocated
                | ProjectionMode::StaticGeneric
        )
    }

    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            ProjectionMode::Ilc2PartialDynamic
                | ProjectionMode::Ilc2FullyDynamic
                | ProjectionMode::Ilc2WeightedDynamic
        )
    }

    /// Box coordinates are plain attribute values (after an offset) so a box
    /// is an interval condition on original attributes.
    pub fn is_static(self) -> bool {
        !self.is_dynamic()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub mode: ProjectionMode,
    pub dimension: usize,
    pub assignment: AxisAssignment,
    /// One per attribute; used only by the weighted mode.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Per-attribute offsets for single-line modes, per horizontal slot for
    /// `Ilc2Static`.
    #[serde(default)]
    pub coordinate_offsets: Vec<f64>,
}

impl ProjectionSpec {
    pub fn new(mode: ProjectionMode, dimension: usize, assignment: AxisAssignment) -> Result<Self> {
        let offsets = match mode {
            ProjectionMode::StaticSequential | ProjectionMode::StaticGeneric => {
                (0..dimension).map(|i| i as f64).collect()
            }
            ProjectionMode::StaticCollocated => vec![0.0; dimension],
            ProjectionMode::Ilc2Static => vec![0.0; assignment.horizontal.len()],
            _ => Vec::new(),
        };
        let weights = if mode == ProjectionMode::Ilc2WeightedDynamic {
            vec![1.0; dimension]
        } else {
            Vec::new()
        };
        let spec = ProjectionSpec {
            mode,
            dimension,
            assignment,
            weights,
            coordinate_offsets: offsets,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Result<Self> {
        self.coordinate_offsets = offsets;
        self.validate()?;
        Ok(self)
    }

    /// Partial dynamic ILC2 with consecutive pairing.
    pub fn partial_dynamic(dimension: usize) -> Result<Self> {
        ProjectionSpec::new(
            ProjectionMode::Ilc2PartialDynamic,
            dimension,
            AxisAssignment::consecutive(dimension)?,
        )
    }

    pub fn fully_dynamic(dimension: usize) -> Result<Self> {
        ProjectionSpec::new(
            ProjectionMode::Ilc2FullyDynamic,
            dimension,
            AxisAssignment::consecutive(dimension)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.assignment.min_dimension() > self.dimension {
            return Err(Error::Projection(format!(
                "assignment references attribute {} but dimension is {}",
                self.assignment.min_dimension() - 1,
                self.dimension
            )));
        }
        if self.mode == ProjectionMode::Ilc2WeightedDynamic && self.weights.len() != self.dimension
        {
            return Err(Error::Projection(format!(
                "weighted mode needs {} weights, got {}",
                self.dimension,
                self.weights.len()
            )));
        }
        if self.mode.is_single_line() {
            if self.coordinate_offsets.len() != self.dimension {
                return Err(Error::Projection(format!(
                    "{:?} needs {} offsets, got {}",
                    self.mode,
                    self.dimension,
                    self.coordinate_offsets.len()
                )));
            }
            if self.mode == ProjectionMode::StaticSequential
                && self.coordinate_offsets.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::Projection(
                    "sequential offsets must be non-decreasing".into(),
                ));
            }
            if self.mode == ProjectionMode::StaticCollocated
                && self.coordinate_offsets.iter().any(|o| *o != 0.0)
            {
                return Err(Error::Projection(
                    "collocated offsets must all be zero".into(),
                ));
            }
        }
        if self.mode == ProjectionMode::Ilc2Static
            && self.coordinate_offsets.len() != self.assignment.horizontal.len()
        {
            return Err(Error::Projection(format!(
                "static ILC2 needs one offset per horizontal slot ({}), got {}",
                self.assignment.horizontal.len(),
                self.coordinate_offsets.len()
            )));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        if self.mode.is_single_line() {
            self.dimension
        } else {
            self.assignment.pairing.len()
        }
    }

    fn weight(&self, attr: usize) -> f64 {
        if self.mode == ProjectionMode::Ilc2WeightedDynamic {
            self.weights[attr]
        } else {
            1.0
        }
    }

    /// `(horizontal attribute, vertical attribute)` encoded by each node.
    pub fn provenance(&self) -> Vec<(usize, usize)> {
        if self.mode.is_single_line() {
            (0..self.dimension).map(|i| (i, i)).collect()
        } else {
            self.assignment.attribute_pairs()
        }
    }

    /// Node positions for a raw value vector.
    pub fn nodes(&self, values: &[f64]) -> Result<Vec<Point>> {
        if values.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                actual: values.len(),
            });
        }
        Ok(self.nodes_unchecked(values))
    }

    pub(crate) fn nodes_unchecked(&self, values: &[f64]) -> Vec<Point> {
        if self.mode.is_single_line() {
            return values
                .iter()
                .zip(&self.coordinate_offsets)
                .map(|(v, o)| Point::new(o + v, 0.0))
                .collect();
        }
        let a = &self.assignment;
        let mut out = Vec::with_capacity(a.pairing.len());
        let mut hx = 0.0;
        let mut last_h = usize::MAX;
        let mut vy = 0.0;
        for &(h, v) in &a.pairing {
            let ha = a.horizontal[h];
            let va = a.vertical[v];
            if h != last_h {
                hx += self.weight(ha) * values[ha];
                last_h = h;
            }
            let p = match self.mode {
                ProjectionMode::Ilc2Static => {
                    Point::new(self.coordinate_offsets[h] + values[ha], values[va])
                }
                ProjectionMode::Ilc2PartialDynamic => Point::new(hx, values[va]),
                _ => {
                    vy += self.weight(va) * values[va];
                    Point::new(hx, vy)
                }
            };
            out.push(p);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRef {
    pub source_row: usize,
    pub label: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline2D {
    pub nodes: Vec<Point>,
    pub case_ref: Option<CaseRef>,
    pub node_provenance: Vec<(usize, usize)>,
}

impl Polyline2D {
    pub fn label(&self) -> Option<ClassId> {
        self.case_ref.as_ref().map(|c| c.label)
    }
}

pub fn project(case: &LabeledCase, spec: &ProjectionSpec) -> Result<Polyline2D> {
    Ok(Polyline2D {
        nodes: spec.nodes(&case.values)?,
        case_ref: Some(CaseRef {
            source_row: case.source_row,
            label: case.label,
        }),
        node_provenance: spec.provenance(),
    })
}

/// Projects bare values (no label or provenance row).
pub fn project_values(values: &[f64], spec: &ProjectionSpec) -> Result<Polyline2D> {
    Ok(Polyline2D {
        nodes: spec.nodes(values)?,
        case_ref: None,
        node_provenance: spec.provenance(),
    })
}

pub fn invert(polyline: &Polyline2D, spec: &ProjectionSpec) -> Result<Vec<f64>> {
    let nodes = &polyline.nodes;
    if nodes.len() != spec.node_count() {
        return Err(Error::Projection(format!(
            "polyline has {} nodes, spec expects {}",
            nodes.len(),
            spec.node_count()
        )));
    }
    if spec.mode == ProjectionMode::Ilc2WeightedDynamic {
        if let Some(i) = spec.weights.iter().position(|w| *w == 0.0) {
            return Err(Error::NotInvertible(format!(
                "weight of attribute {i} is zero"
            )));
        }
    }
    if spec.mode.is_single_line() {
        return Ok(nodes
            .iter()
            .zip(&spec.coordinate_offsets)
            .map(|(p, o)| p.x - o)
            .collect());
    }

    let a = &spec.assignment;
    let mut h_vals = vec![0.0; a.horizontal.len()];
    let mut v_vals = vec![0.0; a.vertical.len()];
    let mut prev_x = 0.0;
    let mut prev_y = 0.0;
    let mut last_h = usize::MAX;
    for (node, &(h, v)) in nodes.iter().zip(&a.pairing) {
        let ha = a.horizontal[h];
        let va = a.vertical[v];
        if h != last_h {
            h_vals[h] = match spec.mode {
                ProjectionMode::Ilc2Static => node.x - spec.coordinate_offsets[h],
                _ => (node.x - prev_x) / spec.weight(ha),
            };
            prev_x = node.x;
            last_h = h;
        }
        v_vals[v] = match spec.mode {
            ProjectionMode::Ilc2Static | ProjectionMode::Ilc2PartialDynamic => node.y,
            _ => {
                let d = (node.y - prev_y) / spec.weight(va);
                prev_y = node.y;
                d
            }
        };
    }

    let mut out: Vec<Option<f64>> = vec![None; spec.dimension];
    for (slot, &attr) in a.horizontal.iter().enumerate() {
        out[attr].get_or_insert(h_vals[slot]);
    }
    for (slot, &attr) in a.vertical.iter().enumerate() {
        out[attr].get_or_insert(v_vals[slot]);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                Error::NotInvertible(format!("attribute {i} is not encoded by the assignment"))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mirror {
    None,
    ByClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPolyline {
    pub polyline: Polyline2D,
    pub side: Side,
}

impl TaggedPolyline {
    /// Y coordinates as drawn: negated for the mirrored class.
    pub fn render_nodes(&self) -> Vec<Point> {
        let sign = if self.side == Side::Down { -1.0 } else { 1.0 };
        self.polyline
            .nodes
            .iter()
            .map(|p| Point::new(p.x, sign * p.y))
            .collect()
    }
}

/// Projects every case; with `ByClass` the second class is tagged `Down`.
pub fn project_all(
    dataset: &Dataset,
    spec: &ProjectionSpec,
    mirror: Mirror,
) -> Result<Vec<TaggedPolyline>> {
    if mirror == Mirror::ByClass && dataset.class_count() != 2 {
        return Err(Error::Projection(format!(
            "mirroring needs exactly two classes, dataset has {}",
            dataset.class_count()
        )));
    }
    dataset
        .cases
        .par_iter()
        .map(|case| {
            let side = match mirror {
                Mirror::ByClass if case.label != 0 => Side::Down,
                _ => Side::Up,
            };
            Ok(TaggedPolyline {
                polyline: project(case, spec)?,
                side,
            })
        })
        .collect()
}

/// Projects every case, dropping render tags.
pub fn project_dataset(dataset: &Dataset, spec: &ProjectionSpec) -> Result<Vec<Polyline2D>> {
    dataset.cases.par_iter().map(|c| project(c, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRUE_CASE: [f64; 10] = [5.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 1.0];

    fn xy(points: &[Point]) -> Vec<(f64, f64)> {
        points.iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn fully_dynamic_worked_example() {
        let spec = ProjectionSpec::fully_dynamic(10).unwrap();
        let nodes = spec.nodes(&TRUE_CASE).unwrap();
        assert_eq!(
            xy(&nodes),
            vec![(5.0, 1.0), (6.0, 2.0), (8.0, 3.0), (11.0, 4.0), (12.0, 5.0)]
        );
    }

    #[test]
    fn partial_dynamic_keeps_raw_y() {
        let spec = ProjectionSpec::partial_dynamic(10).unwrap();
        let nodes = spec.nodes(&TRUE_CASE).unwrap();
        assert_eq!(
            xy(&nodes),
            vec![(5.0, 1.0), (6.0, 1.0), (8.0, 1.0), (11.0, 1.0), (12.0, 1.0)]
        );
    }

    #[test]
    fn odd_dimension_duplicates_last_attribute() {
        let a = AxisAssignment::consecutive(9).unwrap();
        assert_eq!(a.horizontal, vec![0, 2, 4, 6, 8]);
        assert_eq!(a.vertical, vec![1, 3, 5, 7, 8]);
        assert_eq!(a.duplicated, vec![8]);
        let spec = ProjectionSpec::new(ProjectionMode::Ilc2FullyDynamic, 9, a).unwrap();
        let nodes = spec.nodes(&TRUE_CASE[..9]).unwrap();
        assert_eq!(nodes[4], Point::new(12.0, 5.0));
        let back = project_values(&TRUE_CASE[..9], &spec)
            .and_then(|p| invert(&p, &spec))
            .unwrap();
        assert_eq!(back, TRUE_CASE[..9].to_vec());
    }

    #[test]
    fn shared_horizontal_slot() {
        // x1 horizontal for two nodes, x2 and x3 vertical.
        let a = AxisAssignment::new(vec![0], vec![1, 2], vec![(0, 0), (0, 1)]).unwrap();
        let spec = ProjectionSpec::new(ProjectionMode::Ilc2FullyDynamic, 3, a).unwrap();
        let p = project_values(&[2.0, 3.0, 4.0], &spec).unwrap();
        assert_eq!(xy(&p.nodes), vec![(2.0, 3.0), (2.0, 7.0)]);
        assert_eq!(invert(&p, &spec).unwrap(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_assignments() {
        assert!(AxisAssignment::zip(vec![0, 1], vec![2]).is_err());
        assert!(AxisAssignment::new(vec![0, 1], vec![2, 3], vec![(1, 0), (0, 1)]).is_err());
        assert!(AxisAssignment::new(vec![0, 1], vec![2, 3], vec![(0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn zero_weight_not_invertible() {
        let spec = ProjectionSpec::new(
            ProjectionMode::Ilc2WeightedDynamic,
            2,
            AxisAssignment::consecutive(2).unwrap(),
        )
        .unwrap()
        .with_weights(vec![0.0, 1.0])
        .unwrap();
        let p = project_values(&[1.0, 2.0], &spec).unwrap();
        assert!(matches!(invert(&p, &spec), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let spec = ProjectionSpec::fully_dynamic(4).unwrap();
        assert!(matches!(spec.nodes(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_line_modes() {
        let a = AxisAssignment::consecutive(3).unwrap();
        let spec = ProjectionSpec::new(ProjectionMode::StaticSequential, 3, a.clone())
            .unwrap()
            .with_offsets(vec![0.0, 10.0, 20.0])
            .unwrap();
        let p = project_values(&[1.0, 2.0, 3.0], &spec).unwrap();
        assert_eq!(xy(&p.nodes), vec![(1.0, 0.0), (12.0, 0.0), (23.0, 0.0)]);
        assert_eq!(invert(&p, &spec).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(spec.clone().with_offsets(vec![0.0, 10.0, 5.0]).is_err());
        assert!(ProjectionSpec::new(ProjectionMode::StaticCollocated, 3, a)
            .unwrap()
            .with_offsets(vec![1.0, 0.0, 0.0])
            .is_err());
    }
}
