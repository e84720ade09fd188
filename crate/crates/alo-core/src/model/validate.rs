//! Exact feasibility checking, independent of the f64 row representation.
//!
//! Families with integral coefficients (placement, bin, weight) are checked in
//! integer arithmetic, doubling where the model uses halves (size-2 bin
//! coefficients, size-3 shear straddles). CG rows are checked in arbitrary
//! precision rationals; every finite f64 converts exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::physics::{distance_numerator, shear_loads_doubled, total_mass};
use super::{AircraftSpec, Assignment, ContainerSize, Payload, RowTag, ShearSide};
use crate::{Error, Result};

/// One violated row: `lhs > rhs`, so `slack = rhs - lhs` is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tag: RowTag,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl Violation {
    fn new(tag: RowTag, lhs: f64, rhs: f64) -> Self {
        Violation {
            tag,
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }
}

/// Outcome of [`validate`]; `feasible` holds exactly when no row is violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawValidationReport")]
pub struct ValidationReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidationReport {
    feasible: bool,
    violations: Vec<Violation>,
}

impl ValidationReport {
    fn new(violations: Vec<Violation>) -> Self {
        ValidationReport {
            feasible: violations.is_empty(),
            violations,
        }
    }
}

impl TryFrom<RawValidationReport> for ValidationReport {
    type Error = Error;

    fn try_from(raw: RawValidationReport) -> Result<Self> {
        if raw.feasible != raw.violations.is_empty() {
            return Err(Error::invalid(
                "validation report",
                "feasible flag contradicts violation list",
            ));
        }
        Ok(ValidationReport {
            feasible: raw.feasible,
            violations: raw.violations,
        })
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("spec values are validated finite")
}

fn int(x: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(x.into())
}

/// `(sum m_k d_k y, sum m_k y)` as exact rationals.
fn exact_moment_mass(
    assignment: &Assignment,
    spec: &AircraftSpec,
    payload: &Payload,
) -> (BigRational, BigRational) {
    let mut moment_num = BigInt::from(0);
    let mut mass = BigInt::from(0);
    for (k, bin) in assignment.placements() {
        let c = payload.container(k);
        moment_num += BigInt::from(c.mass) * distance_numerator(c.size, bin, spec.bin_count);
        mass += BigInt::from(c.mass);
    }
    let denom = BigInt::from(2 * spec.bin_count as u64);
    (
        BigRational::new(moment_num, denom),
        BigRational::from_integer(mass),
    )
}

/// Exact center of gravity of a loading as an arbitrary-precision rational.
///
/// Every finite f64 in an [`AircraftSpec`] converts to a rational exactly,
/// so this is the reference value that the f64 CG computation approximates.
pub fn exact_cg(assignment: &Assignment, spec: &AircraftSpec, payload: &Payload) -> BigRational {
    let (moment, mass) = exact_moment_mass(assignment, spec, payload);
    let we = int(spec.empty_mass);
    (moment + &we * rat(spec.empty_cg)) / (mass + we)
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Check an assignment against every constraint family in exact arithmetic.
///
/// Row semantics match [`super::build_constraints`] exactly; the f64 rhs
/// values (shear limits, CG bounds) enter the comparison as the exact
/// rationals they denote.
pub fn validate(assignment: &Assignment, spec: &AircraftSpec, payload: &Payload) -> Result<ValidationReport> {
    if !assignment.matches(spec, payload) {
        return Err(Error::DimensionMismatch(format!(
            "assignment shape ({} containers, {} bins) does not match payload ({}) and spec ({})",
            assignment.container_count(),
            assignment.bin_count(),
            payload.len(),
            spec.bin_count
        )));
    }
    let n = spec.bin_count;
    let mut violations = Vec::new();

    for k in 0..payload.len() {
        let count = assignment.bins_of(k).count();
        if count > 1 {
            violations.push(Violation::new(RowTag::Placement { container: k }, count as f64, 1.0));
        }
    }

    // Doubled occupancy: size 1 fills a bin (2), size 2 half (1), size 3 both
    // straddled bins (2 each).
    let mut occupancy2 = vec![0u64; n + 2];
    for (k, bin) in assignment.placements() {
        match payload.container(k).size {
            ContainerSize::One => occupancy2[bin] += 2,
            ContainerSize::Two => occupancy2[bin] += 1,
            ContainerSize::Three => {
                occupancy2[bin] += 2;
                occupancy2[bin + 1] += 2;
            }
        }
    }
    for bin in 1..=n {
        if occupancy2[bin] > 2 {
            violations.push(Violation::new(RowTag::Bin { bin }, occupancy2[bin] as f64 / 2.0, 1.0));
        }
    }

    let total = total_mass(assignment, payload);
    if total > spec.max_payload {
        violations.push(Violation::new(RowTag::Weight, total as f64, spec.max_payload as f64));
    }

    let (moment, mass) = exact_moment_mass(assignment, spec, payload);
    let we = int(spec.empty_mass);
    let (x_max, x_min, x_e) = (rat(spec.cg_max), rat(spec.cg_min), rat(spec.empty_cg));
    let upper_lhs = &moment - &x_max * &mass;
    let upper_rhs = &we * (&x_max - &x_e);
    if upper_lhs > upper_rhs {
        violations.push(Violation::new(RowTag::CgUpper, to_f64(&upper_lhs), to_f64(&upper_rhs)));
    }
    let lower_lhs = &x_min * &mass - &moment;
    let lower_rhs = &we * (&x_e - &x_min);
    if lower_lhs > lower_rhs {
        violations.push(Violation::new(RowTag::CgLower, to_f64(&lower_lhs), to_f64(&lower_rhs)));
    }

    let (left2, right2) = shear_loads_doubled(assignment, spec, payload);
    for j in 1..=n / 2 {
        for (side, load2) in [(ShearSide::Left, left2[j]), (ShearSide::Right, right2[j])] {
            let limit = spec.shear_limit.row_limit(side, j, n);
            if int(load2) > rat(limit) * int(2) {
                let tag = match side {
                    ShearSide::Left => RowTag::ShearLeft { bin: j },
                    ShearSide::Right => RowTag::ShearRight { bin: j },
                };
                violations.push(Violation::new(tag, load2 as f64 / 2.0, limit));
            }
        }
    }

    Ok(ValidationReport::new(violations))
}
