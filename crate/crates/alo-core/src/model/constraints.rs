//! Sparse `<=` inequality system over the flat binary variable index.

use serde::{Deserialize, Serialize};

use super::physics::distance_numerator;
use super::{AircraftSpec, Assignment, ContainerSize, Payload};
use crate::model::ShearSide;
use crate::{Error, Result};

/// Constraint family of a row.
///
/// `container` is the 0-based payload index, `bin` the 1-based bin (or size-3
/// position) the row is anchored at. `mass_floor` and `cg_window` rows are not
/// produced by [`build_constraints`]; the CG optimizer appends them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RowTag {
    Placement { container: usize },
    Bin { bin: usize },
    Weight,
    CgUpper,
    CgLower,
    ShearLeft { bin: usize },
    ShearRight { bin: usize },
    MassFloor,
    CgWindow { upper: bool },
}

impl RowTag {
    pub fn family(&self) -> &'static str {
        match self {
            RowTag::Placement { .. } => "placement",
            RowTag::Bin { .. } => "bin",
            RowTag::Weight => "weight",
            RowTag::CgUpper => "cg_upper",
            RowTag::CgLower => "cg_lower",
            RowTag::ShearLeft { .. } => "shear_left",
            RowTag::ShearRight { .. } => "shear_right",
            RowTag::MassFloor => "mass_floor",
            RowTag::CgWindow { .. } => "cg_window",
        }
    }
}

impl std::fmt::Display for RowTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowTag::Placement { container } => write!(f, "placement[{container}]"),
            RowTag::Bin { bin } => write!(f, "bin[{bin}]"),
            RowTag::ShearLeft { bin } => write!(f, "shear_left[{bin}]"),
            RowTag::ShearRight { bin } => write!(f, "shear_right[{bin}]"),
            RowTag::CgWindow { upper: true } => write!(f, "cg_window[upper]"),
            RowTag::CgWindow { upper: false } => write!(f, "cg_window[lower]"),
            other => f.write_str(other.family()),
        }
    }
}

/// One inequality `coefficients . y <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub tag: RowTag,
    /// `(flat variable index, coefficient)` sorted by index, one entry per
    /// structurally nonzero term (a term may still evaluate to 0.0).
    pub coefficients: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    /// Dot product with a dense variable vector.
    pub fn dot(&self, y: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(i, c)| c * y[i]).sum()
    }
}

/// Bijection between placements `(container k, bin j)` and the flat variable
/// index.
///
/// Blocks are laid out per size class: all size-1 containers first (payload
/// order within the class, `N` variables each), then size-2 (`N` each), then
/// size-3 (`N-1` each).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableMap {
    bin_count: usize,
    offsets: Vec<usize>,
    widths: Vec<usize>,
    reverse: Vec<(usize, usize)>,
    block_order: Vec<usize>,
}

impl VariableMap {
    pub fn new(payload: &Payload, bin_count: usize) -> Self {
        let n = payload.len();
        let mut offsets = vec![0usize; n];
        let mut widths = vec![0usize; n];
        let mut block_order = Vec::with_capacity(n);
        let mut reverse = Vec::new();
        let mut next = 0usize;
        for size in ContainerSize::ALL {
            for &k in payload.indices_of(size) {
                let width = size.position_count(bin_count);
                offsets[k] = next;
                widths[k] = width;
                block_order.push(k);
                for bin in 1..=width {
                    reverse.push((k, bin));
                }
                next += width;
            }
        }
        VariableMap {
            bin_count,
            offsets,
            widths,
            reverse,
            block_order,
        }
    }

    /// Number of variables.
    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    /// Flat index of `(k, bin)`; bins are 1-based.
    pub fn index(&self, k: usize, bin: usize) -> usize {
        debug_assert!(bin >= 1 && bin <= self.widths[k]);
        self.offsets[k] + bin - 1
    }

    /// Inverse of [`VariableMap::index`].
    pub fn container_bin(&self, flat: usize) -> (usize, usize) {
        self.reverse[flat]
    }

    /// Number of admissible bins of container `k`.
    pub fn positions(&self, k: usize) -> usize {
        self.widths[k]
    }

    /// Flat index range of container `k`'s variables.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.widths[k]
    }

    /// Payload indices in flat block order (size-1 containers first).
    pub fn block_order(&self) -> &[usize] {
        &self.block_order
    }
}

/// The binary IP: `<=` rows over the flat index plus a dense minimization
/// objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    variables: VariableMap,
    rows: Vec<Row>,
    objective: Vec<f64>,
}

impl ConstraintSystem {
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, idx: usize) -> &Row {
        &self.rows[idx]
    }

    pub fn variables(&self) -> &VariableMap {
        &self.variables
    }

    /// Minimization objective, dense over the flat index.
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Count of stored coefficients across all rows, objective excluded.
    pub fn count_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coefficients.len()).sum()
    }

    /// Append a row; coefficients are sorted, duplicates and out-of-range
    /// indices rejected.
    pub fn push_row(&mut self, mut row: Row) -> Result<()> {
        row.coefficients.sort_by_key(|&(i, _)| i);
        if let Some(w) = row.coefficients.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(
                "constraint row",
                format!("duplicate coefficient for variable {}", w[0].0),
            ));
        }
        if let Some(&(i, _)) = row.coefficients.last() {
            if i >= self.variables.len() {
                return Err(Error::IndexOutOfRange {
                    what: "variable index",
                    got: i,
                    range: format!("0..{}", self.variables.len()),
                });
            }
        }
        if !row.rhs.is_finite() || row.coefficients.iter().any(|&(_, c)| !c.is_finite()) {
            return Err(Error::invalid("constraint row", "non-finite coefficient or rhs"));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Drop every row whose tag fails the predicate.
    pub fn retain_rows<F: FnMut(&RowTag) -> bool>(&mut self, mut keep: F) {
        self.rows.retain(|r| keep(&r.tag));
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) -> Result<()> {
        if objective.len() != self.variables.len() {
            return Err(Error::DimensionMismatch(format!(
                "objective has {} entries, system has {} variables",
                objective.len(),
                self.variables.len()
            )));
        }
        self.objective = objective;
        Ok(())
    }

    /// Feasibility-only objective: all zeros.
    pub fn set_null_objective(&mut self) {
        self.objective = vec![0.0; self.variables.len()];
    }

    /// Left-hand side of row `idx` at an assignment.
    pub fn activity(&self, idx: usize, assignment: &Assignment) -> f64 {
        debug_assert_eq!(assignment.bin_count(), self.variables.bin_count);
        self.rows[idx]
            .coefficients
            .iter()
            .map(|&(v, c)| {
                let (k, bin) = self.variables.container_bin(v);
                if assignment.get(k, bin) {
                    c
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn activities(&self, assignment: &Assignment) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.activity(i, assignment)).collect()
    }

    /// Every row satisfied under plain f64 comparison. The exact route is
    /// [`super::validate`].
    pub fn satisfies_f64(&self, assignment: &Assignment) -> bool {
        (0..self.rows.len()).all(|i| self.activity(i, assignment) <= self.rows[i].rhs)
    }

    pub fn objective_value(&self, assignment: &Assignment) -> f64 {
        let mut total = 0.0;
        for (k, bin) in assignment.placements() {
            total += self.objective[self.variables.index(k, bin)];
        }
        total
    }
}

/// Build the full inequality system for an instance.
///
/// Row order: one placement row per container in flat block order; bin rows
/// `1..=N`; the weight row; the CG upper then lower row; then per
/// `j = 1..=floor(N/2)` a left and a right shear row. The objective is the
/// negated mass of the placed container, so minimizing it maximizes carried
/// mass.
pub fn build_constraints(spec: &AircraftSpec, payload: &Payload) -> ConstraintSystem {
    let n = spec.bin_count;
    let variables = VariableMap::new(payload, n);
    let half = n / 2;
    let mut rows = Vec::with_capacity(payload.len() + n + 3 + 2 * half);

    // Placement: each container used at most once.
    for &k in variables.block_order() {
        let coefficients = variables.block(k).map(|v| (v, 1.0)).collect();
        rows.push(Row {
            tag: RowTag::Placement { container: k },
            coefficients,
            rhs: 1.0,
        });
    }

    // Bins: size-1 full, size-2 half, size-3 occupies bins `p` and `p+1` from
    // position `p`.
    for bin in 1..=n {
        let mut coefficients = Vec::new();
        for &k in variables.block_order() {
            match payload.container(k).size {
                ContainerSize::One => coefficients.push((variables.index(k, bin), 1.0)),
                ContainerSize::Two => coefficients.push((variables.index(k, bin), 0.5)),
                ContainerSize::Three => {
                    if bin >= 2 {
                        coefficients.push((variables.index(k, bin - 1), 1.0));
                    }
                    if bin <= n - 1 {
                        coefficients.push((variables.index(k, bin), 1.0));
                    }
                }
            }
        }
        rows.push(Row {
            tag: RowTag::Bin { bin },
            coefficients,
            rhs: 1.0,
        });
    }

    // Weight: total selected mass at most the payload limit.
    let mut coefficients = Vec::with_capacity(variables.len());
    for v in 0..variables.len() {
        let (k, _) = variables.container_bin(v);
        coefficients.push((v, f64::from(payload.container(k).mass)));
    }
    rows.push(Row {
        tag: RowTag::Weight,
        coefficients,
        rhs: spec.max_payload as f64,
    });

    // CG window, multiplied through by the (positive) total-mass denominator.
    let we = spec.empty_mass as f64;
    for (tag, bound, sign) in [(RowTag::CgUpper, spec.cg_max, 1.0), (RowTag::CgLower, spec.cg_min, -1.0)] {
        let mut coefficients = Vec::with_capacity(variables.len());
        for v in 0..variables.len() {
            let (k, bin) = variables.container_bin(v);
            let c = payload.container(k);
            let d = distance_numerator(c.size, bin, n) as f64 / (2 * n) as f64;
            coefficients.push((v, sign * f64::from(c.mass) * (d - bound)));
        }
        rows.push(Row {
            tag,
            coefficients,
            rhs: sign * we * (bound - spec.empty_cg),
        });
    }

    // Shear: cumulative load from either end, half mass where a size-3
    // container straddles the row boundary.
    for j in 1..=half {
        for side in [ShearSide::Left, ShearSide::Right] {
            let mut coefficients = Vec::new();
            for &k in variables.block_order() {
                let c = payload.container(k);
                let m = f64::from(c.mass);
                match (c.size, side) {
                    (ContainerSize::Three, ShearSide::Left) => {
                        for p in 1..=j {
                            let coeff = if p == j { m / 2.0 } else { m };
                            coefficients.push((variables.index(k, p), coeff));
                        }
                    }
                    (ContainerSize::Three, ShearSide::Right) => {
                        for p in n - j..=n - 1 {
                            let coeff = if p == n - j { m / 2.0 } else { m };
                            coefficients.push((variables.index(k, p), coeff));
                        }
                    }
                    (_, ShearSide::Left) => {
                        for bin in 1..=j {
                            coefficients.push((variables.index(k, bin), m));
                        }
                    }
                    (_, ShearSide::Right) => {
                        for bin in (n + 1 - j)..=n {
                            coefficients.push((variables.index(k, bin), m));
                        }
                    }
                }
            }
            let tag = match side {
                ShearSide::Left => RowTag::ShearLeft { bin: j },
                ShearSide::Right => RowTag::ShearRight { bin: j },
            };
            rows.push(Row {
                tag,
                coefficients,
                rhs: spec.shear_limit.row_limit(side, j, n),
            });
        }
    }

    let mut objective = Vec::with_capacity(variables.len());
    for v in 0..variables.len() {
        let (k, _) = variables.container_bin(v);
        objective.push(-f64::from(payload.container(k).mass));
    }

    ConstraintSystem {
        variables,
        rows,
        objective,
    }
}
