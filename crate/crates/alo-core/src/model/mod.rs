//! Binary IP model of the aircraft loading problem.
//!
//! The loading zone has `N` equal bins along its length `L` (normalized to 1;
//! every position in this crate is a fraction of `L`). A container of size 1
//! fills a bin, size 2 fills half a bin, and size 3 straddles two adjacent
//! bins. A binary variable `y[k][j]` selects container `k` for bin `j`; the
//! model emits one `<=` inequality row per constraint family plus the mass
//! objective, all carried by [`ConstraintSystem`].

mod constraints;
mod physics;
mod validate;

pub use constraints::{
    build_constraints, ConstraintSystem, Row, RowTag, VariableMap,
};
pub use physics::{
    center_of_gravity, shear_profile, signed_distance, total_mass, ShearPoint, ShearSide,
};
pub use validate::{validate, ValidationReport, Violation};
pub use validate::exact_cg;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Container size class. Size 1 fills one bin, size 2 half a bin, size 3 two
/// adjacent bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ContainerSize {
    One,
    Two,
    Three,
}

impl ContainerSize {
    pub const ALL: [ContainerSize; 3] = [ContainerSize::One, ContainerSize::Two, ContainerSize::Three];

    pub fn as_u8(self) -> u8 {
        match self {
            ContainerSize::One => 1,
            ContainerSize::Two => 2,
            ContainerSize::Three => 3,
        }
    }

    /// Index into size-partition arrays (`0..3`).
    pub fn class_index(self) -> usize {
        self.as_u8() as usize - 1
    }

    /// Number of admissible positions in an aircraft with `bin_count` bins.
    /// Size-3 containers straddle two bins, so they have one position less.
    pub fn position_count(self, bin_count: usize) -> usize {
        match self {
            ContainerSize::Three => bin_count - 1,
            _ => bin_count,
        }
    }
}

impl TryFrom<u8> for ContainerSize {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(ContainerSize::One),
            2 => Ok(ContainerSize::Two),
            3 => Ok(ContainerSize::Three),
            other => Err(Error::invalid("container size", format!("{other} is not in {{1, 2, 3}}"))),
        }
    }
}

impl From<ContainerSize> for u8 {
    fn from(value: ContainerSize) -> u8 {
        value.as_u8()
    }
}

/// One container of the available payload: `(id, size, mass)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawContainer")]
pub struct Container {
    pub id: u32,
    pub size: ContainerSize,
    /// Mass in kg; strictly positive integer.
    pub mass: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContainer {
    id: u32,
    size: ContainerSize,
    mass: u32,
}

impl Container {
    pub fn new(id: u32, size: ContainerSize, mass: u32) -> Result<Self> {
        if id == 0 {
            return Err(Error::invalid("container id", "must be a positive integer"));
        }
        if mass == 0 {
            return Err(Error::invalid("container mass", format!("container {id} has zero mass")));
        }
        Ok(Container { id, size, mass })
    }
}

impl TryFrom<RawContainer> for Container {
    type Error = Error;

    fn try_from(raw: RawContainer) -> Result<Self> {
        Container::new(raw.id, raw.size, raw.mass)
    }
}

/// The available payload: an ordered container list plus the index sets
/// `K1, K2, K3` partitioning `0..n` by size class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Container>", into = "Vec<Container>")]
pub struct Payload {
    containers: Vec<Container>,
    by_size: [Vec<usize>; 3],
}

impl Payload {
    pub fn new(containers: Vec<Container>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &containers {
            if !seen.insert(c.id) {
                return Err(Error::invalid("payload", format!("duplicate container id {}", c.id)));
            }
        }
        let mut by_size: [Vec<usize>; 3] = Default::default();
        for (k, c) in containers.iter().enumerate() {
            by_size[c.size.class_index()].push(k);
        }
        Ok(Payload { containers, by_size })
    }

    pub fn empty() -> Self {
        Payload {
            containers: Vec::new(),
            by_size: Default::default(),
        }
    }

    /// Number of containers `n`.
    pub fn len(&self) -> usize {
        self.containers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.containers.is_empty()
    }

    pub fn containers(&self) -> &[Container] {
        &self.containers
    }

    pub fn container(&self, k: usize) -> &Container {
        &self.containers[k]
    }

    /// Payload indices of all containers in one size class, in payload order.
    pub fn indices_of(&self, size: ContainerSize) -> &[usize] {
        &self.by_size[size.class_index()]
    }

    /// `(n1, n2, n3)`.
    pub fn size_counts(&self) -> (usize, usize, usize) {
        (self.by_size[0].len(), self.by_size[1].len(), self.by_size[2].len())
    }

    /// Sum of all container masses in kg.
    pub fn total_mass(&self) -> u64 {
        self.containers.iter().map(|c| u64::from(c.mass)).sum()
    }
}

impl TryFrom<Vec<Container>> for Payload {
    type Error = Error;

    fn try_from(containers: Vec<Container>) -> Result<Self> {
        Payload::new(containers)
    }
}

impl From<Payload> for Vec<Container> {
    fn from(payload: Payload) -> Vec<Container> {
        payload.containers
    }
}

/// Shape of the maximum-shear curve `S_max(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShearShape {
    /// Symmetric tent: zero at both ends of the loading zone, peak at `x = 0`.
    /// Discretized exactly as `peak * j / floor(N/2)` for the `j`-th row of
    /// either shear family.
    LinearSymmetric,
    /// Piecewise-linear table of `(position, limit_kg)` breakpoints with
    /// positions as fractions of `L`; must cover `[-0.5, 0.5]` with strictly
    /// increasing positions. Rows evaluate the table at bin centers.
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// Maximum-shear descriptor: peak value `S_max(0)` in kg plus shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShearLimit", into = "RawShearLimit")]
pub struct ShearLimit {
    pub peak: f64,
    pub shape: ShearShape,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShearShapeTag {
    LinearSymmetric,
    PiecewiseLinear,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShearLimit {
    peak: f64,
    shape: ShearShapeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<(f64, f64)>>,
}

impl From<ShearLimit> for RawShearLimit {
    fn from(limit: ShearLimit) -> RawShearLimit {
        match limit.shape {
            ShearShape::LinearSymmetric => RawShearLimit {
                peak: limit.peak,
                shape: ShearShapeTag::LinearSymmetric,
                table: None,
            },
            ShearShape::PiecewiseLinear(table) => RawShearLimit {
                peak: limit.peak,
                shape: ShearShapeTag::PiecewiseLinear,
                table: Some(table),
            },
        }
    }
}

impl ShearLimit {
    pub fn linear_symmetric(peak: f64) -> Result<Self> {
        ShearLimit::new(peak, ShearShape::LinearSymmetric)
    }

    pub fn new(peak: f64, shape: ShearShape) -> Result<Self> {
        if !(peak > 0.0) {
            return Err(Error::invalid("shear limit", format!("peak must be positive, got {peak}")));
        }
        if let ShearShape::PiecewiseLinear(table) = &shape {
            if table.len() < 2 {
                return Err(Error::invalid("shear limit", "piecewise table needs at least 2 points"));
            }
            if !table.windows(2).all(|w| w[0].0 < w[1].0) {
                return Err(Error::invalid("shear limit", "piecewise positions must be strictly increasing"));
            }
            let (first, last) = (table[0].0, table[table.len() - 1].0);
            if first > -0.5 || last < 0.5 {
                return Err(Error::invalid(
                    "shear limit",
                    format!("piecewise table must cover [-0.5, 0.5], covers [{first}, {last}]"),
                ));
            }
            if table.iter().any(|&(_, s)| s < 0.0) {
                return Err(Error::invalid("shear limit", "piecewise limits must be nonnegative"));
            }
        }
        Ok(ShearLimit { peak, shape })
    }

    /// Right-hand side of the `j`-th shear row (`j` in `1..=floor(N/2)`) on
    /// the given side.
    pub fn row_limit(&self, side: ShearSide, j: usize, bin_count: usize) -> f64 {
        match &self.shape {
            ShearShape::LinearSymmetric => self.peak * j as f64 / (bin_count / 2) as f64,
            ShearShape::PiecewiseLinear(table) => {
                // Left row j is the cumulative bound at the center of bin j,
                // right row j at the center of bin N+1-j.
                let bin = match side {
                    ShearSide::Left => j,
                    ShearSide::Right => bin_count + 1 - j,
                };
                let x = (2 * bin as i64 - bin_count as i64 - 1) as f64 / (2 * bin_count) as f64;
                interpolate(table, x)
            }
        }
    }
}

fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let mut prev = table[0];
    for &point in &table[1..] {
        if x <= point.0 {
            let (x0, y0) = prev;
            let (x1, y1) = point;
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
        prev = point;
    }
    prev.1
}

impl TryFrom<RawShearLimit> for ShearLimit {
    type Error = Error;

    fn try_from(raw: RawShearLimit) -> Result<Self> {
        let shape = match (raw.shape, raw.table) {
            (ShearShapeTag::LinearSymmetric, None) => ShearShape::LinearSymmetric,
            (ShearShapeTag::LinearSymmetric, Some(_)) => {
                return Err(Error::invalid("shear limit", "linear_symmetric takes no table"))
            }
            (ShearShapeTag::PiecewiseLinear, Some(table)) => ShearShape::PiecewiseLinear(table),
            (ShearShapeTag::PiecewiseLinear, None) => {
                return Err(Error::invalid("shear limit", "piecewise_linear requires a table"))
            }
        };
        ShearLimit::new(raw.peak, shape)
    }
}

/// Aircraft-side parameters. All positions are fractions of the loading-zone
/// length `L` measured from its center, so they live in `[-0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAircraftSpec")]
pub struct AircraftSpec {
    /// Number of bins `N`.
    pub bin_count: usize,
    /// Maximum payload mass `W_p` in kg.
    pub max_payload: u64,
    /// Empty aircraft mass `W_e` in kg.
    pub empty_mass: u64,
    /// Center of gravity of the empty aircraft.
    pub empty_cg: f64,
    pub cg_min: f64,
    pub cg_max: f64,
    pub cg_target: f64,
    pub shear_limit: ShearLimit,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAircraftSpec {
    bin_count: usize,
    max_payload: u64,
    empty_mass: u64,
    empty_cg: f64,
    cg_min: f64,
    cg_max: f64,
    cg_target: f64,
    shear_limit: ShearLimit,
}

impl AircraftSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bin_count: usize,
        max_payload: u64,
        empty_mass: u64,
        empty_cg: f64,
        cg_min: f64,
        cg_max: f64,
        cg_target: f64,
        shear_limit: ShearLimit,
    ) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::invalid("aircraft spec", format!("bin_count must be >= 2, got {bin_count}")));
        }
        if max_payload == 0 {
            return Err(Error::invalid("aircraft spec", "max_payload must be positive"));
        }
        if empty_mass == 0 {
            return Err(Error::invalid("aircraft spec", "empty_mass must be positive"));
        }
        if cg_min > cg_max {
            return Err(Error::invalid(
                "aircraft spec",
                format!("cg_min {cg_min} exceeds cg_max {cg_max}"),
            ));
        }
        for (name, v) in [
            ("empty_cg", empty_cg),
            ("cg_min", cg_min),
            ("cg_max", cg_max),
            ("cg_target", cg_target),
        ] {
            if !(-0.5..=0.5).contains(&v) || !v.is_finite() {
                return Err(Error::invalid(
                    "aircraft spec",
                    format!("{name} = {v} outside [-0.5, 0.5]"),
                ));
            }
        }
        Ok(AircraftSpec {
            bin_count,
            max_payload,
            empty_mass,
            empty_cg,
            cg_min,
            cg_max,
            cg_target,
            shear_limit,
        })
    }

    /// Same aircraft with a replacement CG window.
    pub fn with_cg_window(&self, cg_min: f64, cg_max: f64) -> Result<Self> {
        AircraftSpec::new(
            self.bin_count,
            self.max_payload,
            self.empty_mass,
            self.empty_cg,
            cg_min,
            cg_max,
            self.cg_target,
            self.shear_limit.clone(),
        )
    }
}

impl TryFrom<RawAircraftSpec> for AircraftSpec {
    type Error = Error;

    fn try_from(raw: RawAircraftSpec) -> Result<Self> {
        AircraftSpec::new(
            raw.bin_count,
            raw.max_payload,
            raw.empty_mass,
            raw.empty_cg,
            raw.cg_min,
            raw.cg_max,
            raw.cg_target,
            raw.shear_limit,
        )
    }
}

/// A value of the binary placement matrix `y[k][j]`.
///
/// Rows are indexed by payload position `k` (0-based); bins `j` are 1-based as
/// in the row tags. A size-3 row has `N-1` admissible bins, all others `N`.
/// The matrix may hold arbitrary 0/1 patterns (including infeasible ones); use
/// [`validate`] to check it against the constraint families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    bin_count: usize,
    rows: Vec<Vec<bool>>,
}

impl Assignment {
    pub fn empty(spec: &AircraftSpec, payload: &Payload) -> Self {
        let rows = payload
            .containers()
            .iter()
            .map(|c| vec![false; c.size.position_count(spec.bin_count)])
            .collect();
        Assignment {
            bin_count: spec.bin_count,
            rows,
        }
    }

    /// Build from `(container index, bin)` pairs, all kept.
    pub fn from_placements(
        spec: &AircraftSpec,
        payload: &Payload,
        placements: &[(usize, usize)],
    ) -> Result<Self> {
        let mut assignment = Assignment::empty(spec, payload);
        for &(k, bin) in placements {
            assignment.set(k, bin, true)?;
        }
        Ok(assignment)
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn container_count(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, k: usize, bin: usize) -> bool {
        self.rows[k][bin - 1]
    }

    pub fn set(&mut self, k: usize, bin: usize, value: bool) -> Result<()> {
        let row = self
            .rows
            .get_mut(k)
            .ok_or(Error::IndexOutOfRange {
                what: "container index",
                got: k,
                range: "payload".into(),
            })?;
        if bin == 0 || bin > row.len() {
            return Err(Error::IndexOutOfRange {
                what: "bin",
                got: bin,
                range: format!("1..={}", row.len()),
            });
        }
        row[bin - 1] = value;
        Ok(())
    }

    /// All set entries as `(container index, bin)` in row-major order.
    pub fn placements(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            for (i, &set) in row.iter().enumerate() {
                if set {
                    out.push((k, i + 1));
                }
            }
        }
        out
    }

    /// The admissible bins of container `k` that are set.
    pub fn bins_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[k]
            .iter()
            .enumerate()
            .filter_map(|(i, &set)| set.then_some(i + 1))
    }

    pub fn matches(&self, spec: &AircraftSpec, payload: &Payload) -> bool {
        self.bin_count == spec.bin_count
            && self.rows.len() == payload.len()
            && self
                .rows
                .iter()
                .zip(payload.containers())
                .all(|(row, c)| row.len() == c.size.position_count(spec.bin_count))
    }
}
