//! Loading physics evaluated directly on an assignment: signed distances,
//! center of gravity, shear profile and carried mass.

use serde::{Deserialize, Serialize};

use super::{AircraftSpec, Assignment, ContainerSize, Payload};
use crate::{Error, Result};

/// Numerator of the signed distance over the common denominator `2N`.
///
/// Bin centers sit at `(2j - N - 1) / (2N)` for sizes 1 and 2; a size-3
/// container in position `j` straddles bins `j` and `j+1`, so its center is
/// at `(2j - N) / (2N)`.
pub(crate) fn distance_numerator(size: ContainerSize, bin: usize, bin_count: usize) -> i64 {
    let (j, n) = (bin as i64, bin_count as i64);
    match size {
        ContainerSize::Three => 2 * j - n,
        _ => 2 * j - n - 1,
    }
}

/// Signed distance of a container center from the middle of the loading zone,
/// as a fraction of `L`.
pub fn signed_distance(size: ContainerSize, bin: usize, bin_count: usize) -> Result<f64> {
    let positions = size.position_count(bin_count);
    if bin == 0 || bin > positions {
        return Err(Error::IndexOutOfRange {
            what: "bin",
            got: bin,
            range: format!("1..={positions} for size {}", size.as_u8()),
        });
    }
    Ok(distance_numerator(size, bin, bin_count) as f64 / (2 * bin_count) as f64)
}

/// Center of gravity of aircraft plus selected freight, Eq. form
/// `(sum m_k d_{s_k,j} y_kj + W_e x_e) / (sum m_k y_kj + W_e)`.
///
/// Defined for arbitrary 0/1 matrices; the denominator is at least `W_e > 0`.
pub fn center_of_gravity(assignment: &Assignment, spec: &AircraftSpec, payload: &Payload) -> f64 {
    assert!(assignment.matches(spec, payload), "assignment does not match payload/spec");
    let n2 = (2 * spec.bin_count) as f64;
    let mut moment = 0.0;
    let mut mass = 0.0;
    for (k, bin) in assignment.placements() {
        let c = payload.container(k);
        let d = distance_numerator(c.size, bin, spec.bin_count) as f64 / n2;
        moment += f64::from(c.mass) * d;
        mass += f64::from(c.mass);
    }
    let we = spec.empty_mass as f64;
    (moment + we * spec.empty_cg) / (mass + we)
}

/// Total mass of the selected freight in kg.
pub fn total_mass(assignment: &Assignment, payload: &Payload) -> u64 {
    assignment
        .placements()
        .iter()
        .map(|&(k, _)| u64::from(payload.container(k).mass))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShearSide {
    Left,
    Right,
}

/// One discretized shear sample: cumulative load counted from the `side` end
/// over `bin` bins, with the row limit it is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearPoint {
    /// Row index `j` in `1..=floor(N/2)`.
    pub bin: usize,
    pub side: ShearSide,
    /// Cumulative load in kg; half-integral when a size-3 container straddles
    /// the row boundary.
    pub load: f64,
    pub limit: f64,
}

/// Cumulative shear loads with their limits, ordered left then right per row
/// index, matching the shear row order of the constraint system.
///
/// A size-3 container contributes its full mass once both straddled bins are
/// inside the counted range and half its mass when the range boundary splits
/// it.
pub fn shear_profile(assignment: &Assignment, spec: &AircraftSpec, payload: &Payload) -> Vec<ShearPoint> {
    assert!(assignment.matches(spec, payload), "assignment does not match payload/spec");
    let n = spec.bin_count;
    let half = n / 2;
    // Doubled loads so the size-3 half mass stays integral.
    let mut left2 = vec![0u64; half + 1];
    let mut right2 = vec![0u64; half + 1];
    for (k, bin) in assignment.placements() {
        let c = payload.container(k);
        let m2 = u64::from(c.mass) * 2;
        match c.size {
            ContainerSize::Three => {
                // Position `bin` covers bins `bin` and `bin+1`.
                for j in 1..=half {
                    if bin + 1 <= j {
                        left2[j] += m2;
                    } else if bin <= j {
                        left2[j] += m2 / 2;
                    }
                    let lowest = n + 1 - j;
                    if bin >= lowest {
                        right2[j] += m2;
                    } else if bin + 1 >= lowest {
                        right2[j] += m2 / 2;
                    }
                }
            }
            _ => {
                for j in 1..=half {
                    if bin <= j {
                        left2[j] += m2;
                    }
                    if bin >= n + 1 - j {
                        right2[j] += m2;
                    }
                }
            }
        }
    }
    let mut profile = Vec::with_capacity(2 * half);
    for j in 1..=half {
        profile.push(ShearPoint {
            bin: j,
            side: ShearSide::Left,
            load: left2[j] as f64 / 2.0,
            limit: spec.shear_limit.row_limit(ShearSide::Left, j, n),
        });
        profile.push(ShearPoint {
            bin: j,
            side: ShearSide::Right,
            load: right2[j] as f64 / 2.0,
            limit: spec.shear_limit.row_limit(ShearSide::Right, j, n),
        });
    }
    profile
}

/// Doubled cumulative shear loads, used by the exact validator.
pub(crate) fn shear_loads_doubled(
    assignment: &Assignment,
    spec: &AircraftSpec,
    payload: &Payload,
) -> (Vec<u64>, Vec<u64>) {
    let n = spec.bin_count;
    let half = n / 2;
    let mut left2 = vec![0u64; half + 1];
    let mut right2 = vec![0u64; half + 1];
    for (k, bin) in assignment.placements() {
        let c = payload.container(k);
        let m2 = u64::from(c.mass) * 2;
        for j in 1..=half {
            let lowest = n + 1 - j;
            match c.size {
                ContainerSize::Three => {
                    if bin + 1 <= j {
                        left2[j] += m2;
                    } else if bin <= j {
                        left2[j] += m2 / 2;
                    }
                    if bin >= lowest {
                        right2[j] += m2;
                    } else if bin + 1 >= lowest {
                        right2[j] += m2 / 2;
                    }
                }
                _ => {
                    if bin <= j {
                        left2[j] += m2;
                    }
                    if bin >= lowest {
                        right2[j] += m2;
                    }
                }
            }
        }
    }
    (left2, right2)
}
