//! Center-of-gravity optimization on top of the mass objective.
//!
//! Both methods first lock in loading quality with a minimum-mass row, then
//! drive the CG toward the target:
//! - the sequence method repeatedly solves feasibility problems while
//!   shrinking the CG window around the target from whichever side the last
//!   solution landed on;
//! - the direct method replaces the CG window with a pair of rows bounding
//!   the absolute deviation by a threshold `b` and ratchets `b` downward.
//!
//! With an exact stage solver, either method terminates within `epsilon` of
//! the smallest deviation reachable at the required mass.

use serde::{Deserialize, Serialize};

use crate::model::{
    center_of_gravity, signed_distance, total_mass, AircraftSpec, Assignment, Payload, Row, RowTag,
    VariableMap,
};
use crate::instance::Instance;
use crate::solver::{solve, w_max, SolveConfig, SolveMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgOptConfig {
    /// Mass tolerance: every stage keeps total mass at or above
    /// `tau * min(max_payload, total payload mass)`.
    pub tau: f64,
    /// Window shrink step, a fraction of the loading-zone length.
    pub epsilon: f64,
    /// Per-stage override of the solve config's time budget.
    pub stage_budget: Option<f64>,
    pub max_stages: usize,
    /// Direct method: starting deviation threshold. `None` runs the first
    /// stage unconstrained and starts from its achieved deviation.
    pub initial_threshold: Option<f64>,
}

impl Default for CgOptConfig {
    fn default() -> Self {
        CgOptConfig {
            tau: 0.998,
            epsilon: 0.001,
            stage_budget: None,
            max_stages: 64,
            initial_threshold: None,
        }
    }
}

impl CgOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid("cg opt config", format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(
                "cg opt config",
                format!("epsilon must be positive, got {}", self.epsilon),
            ));
        }
        if self.max_stages == 0 {
            return Err(Error::invalid("cg opt config", "at least one stage is required"));
        }
        if let Some(b) = self.initial_threshold {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::invalid(
                    "cg opt config",
                    format!("initial_threshold must be nonnegative, got {b}"),
                ));
            }
        }
        if let Some(budget) = self.stage_budget {
            if !(budget > 0.0 && budget.is_finite()) {
                return Err(Error::invalid(
                    "cg opt config",
                    format!("stage_budget must be positive, got {budget}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgOptStatus {
    /// A stage came back infeasible; the window cannot shrink further.
    Converged,
    /// `max_stages` ran out while stages were still feasible.
    StageLimit,
    /// Not even the first stage produced a feasible loading.
    NoSolutionFound,
}

/// One stage: the CG interval it enforced and what the solver returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Enforced CG interval `[low, high]`.
    pub window: (f64, f64),
    pub feasible: bool,
    pub cg: Option<f64>,
    pub mass: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOptReport {
    pub status: CgOptStatus,
    /// Best assignment found (smallest deviation), if any stage succeeded.
    pub assignment: Option<Assignment>,
    /// Its `|cg - target|`.
    pub deviation: Option<f64>,
    pub cg: Option<f64>,
    pub mass: Option<u64>,
    /// Minimum mass enforced in every stage.
    pub floor: u64,
    pub stages: Vec<StageRecord>,
}

/// Integer mass floor implied by the tolerance: masses are whole kilograms,
/// so `sum >= tau * w_max` is `sum >= ceil(tau * w_max)` up to f64 noise in
/// the product.
fn floor_mass(tau: f64, w_max: u64) -> u64 {
    ((tau * w_max as f64) - 1e-6).ceil().max(0.0) as u64
}

/// The minimum-mass inequality `-sum(m_k y_kj) <= -ceil(tau * w_max)`,
/// tagged `mass_floor`.
pub fn mass_floor_row(spec: &AircraftSpec, payload: &Payload, tau: f64, w_max: u64) -> Row {
    let variables = VariableMap::new(payload, spec.bin_count);
    let mut coefficients = Vec::with_capacity(variables.len());
    for k in 0..payload.len() {
        let mass = f64::from(payload.container(k).mass);
        for bin in 1..=variables.positions(k) {
            coefficients.push((variables.index(k, bin), -mass));
        }
    }
    let floor = floor_mass(tau, w_max);
    let rhs = if floor == 0 { 0.0 } else { -(floor as f64) };
    Row {
        tag: RowTag::MassFloor,
        coefficients,
        rhs,
    }
}

/// Absolute CG deviation from the target, in fractions of the zone length.
pub fn cg_deviation(assignment: &Assignment, spec: &AircraftSpec, payload: &Payload) -> f64 {
    let cg = center_of_gravity(assignment, spec, payload);
    if cg >= spec.cg_target {
        cg - spec.cg_target
    } else {
        spec.cg_target - cg
    }
}

/// Two rows that hold together exactly when the CG deviation is at most
/// `threshold`:
///
/// `sum(m (d - target - b) y) <= we (target + b - empty_cg)` and
/// `sum(m (target - b - d) y) <= we (empty_cg - target + b)`.
///
/// Multiplying the CG quotient out is legal because its denominator is
/// positive. The right-hand sides are computed as `we * (b +/- (target -
/// empty_cg))` so that an assignment sitting exactly at deviation `b`
/// (notably the empty loading at its own deviation) lands on the boundary
/// rather than an ulp past it.
pub fn remap_cg_objective(spec: &AircraftSpec, payload: &Payload, threshold: f64) -> Result<(Row, Row)> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(
            "cg remap",
            format!("threshold must be nonnegative, got {threshold}"),
        ));
    }
    let variables = VariableMap::new(payload, spec.bin_count);
    let mut upper = Vec::with_capacity(variables.len());
    let mut lower = Vec::with_capacity(variables.len());
    for k in 0..payload.len() {
        let container = payload.container(k);
        let mass = f64::from(container.mass);
        for bin in 1..=variables.positions(k) {
            let d = signed_distance(container.size, bin, spec.bin_count).expect("bin in range");
            let v = variables.index(k, bin);
            upper.push((v, mass * (d - spec.cg_target - threshold)));
            lower.push((v, mass * (spec.cg_target - threshold - d)));
        }
    }
    let we = spec.empty_mass as f64;
    let spread = spec.cg_target - spec.empty_cg;
    Ok((
        Row {
            tag: RowTag::CgWindow { upper: true },
            coefficients: upper,
            rhs: we * (threshold + spread),
        },
        Row {
            tag: RowTag::CgWindow { upper: false },
            coefficients: lower,
            rhs: we * (threshold - spread),
        },
    ))
}

/// Per-stage solve config: threshold descent only needs feasibility, so its
/// quality target drops to zero; exact modes run unchanged.
fn stage_config(solve_config: &SolveConfig, config: &CgOptConfig) -> SolveConfig {
    let mut stage = solve_config.clone();
    if stage.mode == SolveMode::ThresholdDescent {
        stage.tau = 0.0;
    }
    if let Some(budget) = config.stage_budget {
        stage.time_budget = budget;
    }
    stage
}

struct Incumbent {
    assignment: Assignment,
    deviation: f64,
    cg: f64,
    mass: u64,
}

fn finish(status: CgOptStatus, best: Option<Incumbent>, floor: u64, stages: Vec<StageRecord>) -> CgOptReport {
    match best {
        Some(b) => CgOptReport {
            status,
            assignment: Some(b.assignment),
            deviation: Some(b.deviation),
            cg: Some(b.cg),
            mass: Some(b.mass),
            floor,
            stages,
        },
        None => CgOptReport {
            status: CgOptStatus::NoSolutionFound,
            assignment: None,
            deviation: None,
            cg: None,
            mass: None,
            floor,
            stages,
        },
    }
}

/// Interval-shrinking method. Each stage solves a pure feasibility problem
/// over the current CG window (starting from the instance's window) with the
/// mass floor appended and a null objective. After a feasible stage at CG
/// `x`, the window boundary on `x`'s side of the target moves to `x +/-
/// epsilon`. Stops at the first infeasible stage (converged), a collapsed
/// window, or `max_stages`. Returns the smallest-deviation stage result.
pub fn optimize_cg_sequence(
    instance: &Instance,
    config: &CgOptConfig,
    solve_config: &SolveConfig,
) -> Result<CgOptReport> {
    config.validate()?;
    solve_config.validate()?;
    let spec = &instance.spec;
    let payload = &instance.payload;
    let floor_row = mass_floor_row(spec, payload, config.tau, w_max(spec, payload));
    let floor = floor_mass(config.tau, w_max(spec, payload));
    let stage_cfg = stage_config(solve_config, config);

    let mut window = (spec.cg_min, spec.cg_max);
    let mut best: Option<Incumbent> = None;
    let mut stages = Vec::new();
    for _ in 0..config.max_stages {
        if window.0 > window.1 {
            // Collapsed: nothing left to probe.
            return Ok(finish(CgOptStatus::Converged, best, floor, stages));
        }
        let stage_spec = spec.with_cg_window(window.0, window.1)?;
        let mut system = crate::model::build_constraints(&stage_spec, payload);
        system.push_row(floor_row.clone())?;
        system.set_null_objective();
        let report = solve(&system, &stage_spec, payload, &stage_cfg)?;
        match report.incumbent {
            Some(assignment) => {
                let cg = center_of_gravity(&assignment, spec, payload);
                let mass = total_mass(&assignment, payload);
                let deviation = cg_deviation(&assignment, spec, payload);
                stages.push(StageRecord {
                    window,
                    feasible: true,
                    cg: Some(cg),
                    mass: Some(mass),
                });
                if best.as_ref().map_or(true, |b| deviation < b.deviation) {
                    best = Some(Incumbent {
                        assignment,
                        deviation,
                        cg,
                        mass,
                    });
                }
                if cg < spec.cg_target {
                    window.0 = (cg + config.epsilon).clamp(-0.5, 0.5);
                } else {
                    window.1 = (cg - config.epsilon).clamp(-0.5, 0.5);
                }
            }
            None => {
                stages.push(StageRecord {
                    window,
                    feasible: false,
                    cg: None,
                    mass: None,
                });
                return Ok(finish(CgOptStatus::Converged, best, floor, stages));
            }
        }
    }
    Ok(finish(CgOptStatus::StageLimit, best, floor, stages))
}

/// Deviation-threshold method. The CG window rows are dropped; a remap pair
/// bounds `|cg - target|` by a threshold `b` instead. The first stage runs
/// either unconstrained (default) or at `initial_threshold`; each feasible
/// stage at deviation `x` re-solves at `b = x - epsilon`. An infeasible
/// opening stage widens `b` on a doubling schedule before giving up. Stops
/// like the sequence method.
pub fn optimize_cg_direct(
    instance: &Instance,
    config: &CgOptConfig,
    solve_config: &SolveConfig,
) -> Result<CgOptReport> {
    config.validate()?;
    solve_config.validate()?;
    let spec = &instance.spec;
    let payload = &instance.payload;
    let floor_row = mass_floor_row(spec, payload, config.tau, w_max(spec, payload));
    let floor = floor_mass(config.tau, w_max(spec, payload));
    let stage_cfg = stage_config(solve_config, config);

    let mut base = crate::model::build_constraints(spec, payload);
    base.retain_rows(|tag| !matches!(tag, RowTag::CgUpper | RowTag::CgLower));
    base.push_row(floor_row)?;
    base.set_null_objective();

    // None: unconstrained opening stage, recorded over the full position
    // range.
    let mut threshold = config.initial_threshold;
    let mut widening = threshold.is_some();
    let mut best: Option<Incumbent> = None;
    let mut stages = Vec::new();
    for _ in 0..config.max_stages {
        let mut system = base.clone();
        let window = match threshold {
            Some(b) => {
                let (up, lo) = remap_cg_objective(spec, payload, b)?;
                system.push_row(up)?;
                system.push_row(lo)?;
                (spec.cg_target - b, spec.cg_target + b)
            }
            None => (-0.5, 0.5),
        };
        let report = solve(&system, spec, payload, &stage_cfg)?;
        match report.incumbent {
            Some(assignment) => {
                widening = false;
                let cg = center_of_gravity(&assignment, spec, payload);
                let mass = total_mass(&assignment, payload);
                let deviation = cg_deviation(&assignment, spec, payload);
                stages.push(StageRecord {
                    window,
                    feasible: true,
                    cg: Some(cg),
                    mass: Some(mass),
                });
                if best.as_ref().map_or(true, |b| deviation < b.deviation) {
                    best = Some(Incumbent {
                        assignment,
                        deviation,
                        cg,
                        mass,
                    });
                }
                let next = deviation - config.epsilon;
                if next < 0.0 {
                    return Ok(finish(CgOptStatus::Converged, best, floor, stages));
                }
                threshold = Some(next);
            }
            None => {
                stages.push(StageRecord {
                    window,
                    feasible: false,
                    cg: None,
                    mass: None,
                });
                if widening {
                    // Opening threshold too tight; double it (deviations
                    // never exceed 1, so a full-range attempt is final).
                    let b = threshold.expect("widening implies a threshold");
                    if b >= 1.0 {
                        return Ok(finish(CgOptStatus::NoSolutionFound, best, floor, stages));
                    }
                    threshold = Some((2.0 * b).clamp(config.epsilon, 1.0));
                    continue;
                }
                return Ok(finish(CgOptStatus::Converged, best, floor, stages));
            }
        }
    }
    Ok(finish(CgOptStatus::StageLimit, best, floor, stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{airbus_reference_instance, Provenance};
    use crate::model::{validate, Container, ContainerSize, ShearLimit};
    use crate::solver::TimeSource;
    use num_traits::ToPrimitive;

    fn tiny_instance() -> Instance {
        // Wide CG window and shear so mass and CG dominate; N = 4 bins.
        let spec = AircraftSpec::new(
            4,
            6000,
            10_000,
            -0.05,
            -0.5,
            0.5,
            0.1,
            ShearLimit::linear_symmetric(8000.0).unwrap(),
        )
        .unwrap();
        let payload = Payload::new(vec![
            Container::new(1, ContainerSize::One, 2000).unwrap(),
            Container::new(2, ContainerSize::One, 1500).unwrap(),
            Container::new(3, ContainerSize::Two, 900).unwrap(),
            Container::new(4, ContainerSize::Three, 3100).unwrap(),
        ])
        .unwrap();
        Instance {
            spec,
            payload,
            provenance: Provenance::File,
        }
    }

    fn exhaustive_config() -> SolveConfig {
        let mut config = SolveConfig::new(SolveMode::Exhaustive);
        config.time_source = TimeSource::Steps { seconds_per_step: 1e-6 };
        config
    }

    /// Independent oracle: scan every assignment, keep those that satisfy
    /// the physical rows exactly and the mass floor, return the minimum
    /// deviation.
    fn oracle_min_deviation(instance: &Instance, tau: f64) -> Option<f64> {
        let spec = &instance.spec;
        let payload = &instance.payload;
        let floor = super::floor_mass(tau, w_max(spec, payload));
        let widths: Vec<usize> = payload
            .containers()
            .iter()
            .map(|c| c.size.position_count(spec.bin_count) + 1)
            .collect();
        let mut digits = vec![0usize; payload.len()];
        let mut best: Option<f64> = None;
        loop {
            let placements: Vec<(usize, usize)> = digits
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d > 0)
                .map(|(k, &d)| (k, d))
                .collect();
            let assignment = Assignment::from_placements(spec, payload, &placements).unwrap();
            if total_mass(&assignment, payload) >= floor
                && validate(&assignment, spec, payload).unwrap().feasible
            {
                let dev = cg_deviation(&assignment, spec, payload);
                if best.map_or(true, |b| dev < b) {
                    best = Some(dev);
                }
            }
            let mut carry = 0;
            loop {
                if carry == digits.len() {
                    return best;
                }
                digits[carry] += 1;
                if digits[carry] < widths[carry] {
                    break;
                }
                digits[carry] = 0;
                carry += 1;
            }
        }
    }

    #[test]
    fn mass_floor_row_reference_values() {
        let instance = airbus_reference_instance();
        let cap = w_max(&instance.spec, &instance.payload);
        let row = mass_floor_row(&instance.spec, &instance.payload, 0.998, cap);
        assert_eq!(row.tag, RowTag::MassFloor);
        assert_eq!(row.rhs, -39_920.0);
        assert_eq!(row.coefficients.len(), 600);
        // Every coefficient is the negated mass of its container.
        let variables = VariableMap::new(&instance.payload, instance.spec.bin_count);
        for &(v, c) in &row.coefficients {
            let (k, _) = variables.container_bin(v);
            assert_eq!(c, -f64::from(instance.payload.container(k).mass));
        }
        assert_eq!(mass_floor_row(&instance.spec, &instance.payload, 0.0, cap).rhs, 0.0);
        assert_eq!(mass_floor_row(&instance.spec, &instance.payload, 1.0, cap).rhs, -40_000.0);
    }

    #[test]
    fn cg_deviation_examples() {
        let instance = airbus_reference_instance();
        let empty = Assignment::empty(&instance.spec, &instance.payload);
        let dev = cg_deviation(&empty, &instance.spec, &instance.payload);
        assert!((dev - 0.15).abs() < 1e-12);

        // A loading whose CG sits exactly on the target deviates by zero.
        let on_target = instance.spec.clone();
        let spec = AircraftSpec::new(
            on_target.bin_count,
            on_target.max_payload,
            on_target.empty_mass,
            on_target.cg_target,
            on_target.cg_min,
            on_target.cg_max,
            on_target.cg_target,
            on_target.shear_limit.clone(),
        )
        .unwrap();
        let empty = Assignment::empty(&spec, &instance.payload);
        assert_eq!(cg_deviation(&empty, &spec, &instance.payload), 0.0);

        // First container (2134 kg) in bin 1 pulls the CG to about -0.0574;
        // deviation from the 0.1 target is about 0.1574.
        let single = Assignment::from_placements(&instance.spec, &instance.payload, &[(0, 1)]).unwrap();
        let dev = cg_deviation(&single, &instance.spec, &instance.payload);
        assert!((dev - 0.157_426).abs() < 1e-6);
        // Cross-check against exact rational arithmetic.
        let exact = crate::model::exact_cg(&single, &instance.spec, &instance.payload)
            .to_f64()
            .unwrap();
        assert!((dev - (exact - instance.spec.cg_target).abs()).abs() < 1e-12);
    }

    #[test]
    fn remap_rows_match_deviation_on_a_full_scan() {
        let instance = tiny_instance();
        let spec = &instance.spec;
        let payload = &instance.payload;
        let widths: Vec<usize> = payload
            .containers()
            .iter()
            .map(|c| c.size.position_count(spec.bin_count) + 1)
            .collect();
        let thresholds = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
        let mut rows = Vec::new();
        for &b in &thresholds {
            let (up, lo) = remap_cg_objective(spec, payload, b).unwrap();
            rows.push((b, up, lo));
        }
        let variables = VariableMap::new(payload, spec.bin_count);
        let mut digits = vec![0usize; payload.len()];
        let mut checked = 0u32;
        loop {
            let placements: Vec<(usize, usize)> = digits
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d > 0)
                .map(|(k, &d)| (k, d))
                .collect();
            let assignment = Assignment::from_placements(spec, payload, &placements).unwrap();
            let dev = cg_deviation(&assignment, spec, payload);
            let scale = (total_mass(&assignment, payload) + spec.empty_mass) as f64;
            let activity = |row: &Row| -> f64 {
                placements
                    .iter()
                    .map(|&(k, bin)| {
                        let v = variables.index(k, bin);
                        row.coefficients.iter().find(|&&(i, _)| i == v).unwrap().1
                    })
                    .sum()
            };
            for (b, up, lo) in &rows {
                // Skip razor-thin margins where f64 row evaluation may
                // legitimately disagree with the exact equivalence.
                if (dev - b).abs() * scale < 1e-7 {
                    continue;
                }
                let holds = activity(up) <= up.rhs && activity(lo) <= lo.rhs;
                assert_eq!(holds, dev <= *b, "dev {dev} threshold {b}");
                checked += 1;
            }
            let mut carry = 0;
            loop {
                if carry == digits.len() {
                    assert!(checked > 2000);
                    return;
                }
                digits[carry] += 1;
                if digits[carry] < widths[carry] {
                    break;
                }
                digits[carry] = 0;
                carry += 1;
            }
        }
    }

    #[test]
    fn remap_rows_hold_exactly_at_the_empty_loading_boundary() {
        let instance = airbus_reference_instance();
        let spec = &instance.spec;
        let empty = Assignment::empty(spec, &instance.payload);
        let b = cg_deviation(&empty, spec, &instance.payload);
        let (up, lo) = remap_cg_objective(spec, &instance.payload, b).unwrap();
        // Empty activity is zero on both rows; the side the empty CG sits on
        // is exactly tight.
        assert_eq!(lo.rhs, 0.0);
        assert!(up.rhs > 0.0);
        // One epsilon tighter excludes the empty loading.
        let (_, lo) = remap_cg_objective(spec, &instance.payload, b - 1e-6).unwrap();
        assert!(lo.rhs < 0.0);
    }

    #[test]
    fn remap_rejects_bad_thresholds() {
        let instance = tiny_instance();
        assert!(remap_cg_objective(&instance.spec, &instance.payload, -0.1).is_err());
        assert!(remap_cg_objective(&instance.spec, &instance.payload, f64::NAN).is_err());
    }

    #[test]
    fn sequence_lands_within_epsilon_of_the_oracle() {
        let instance = tiny_instance();
        let config = CgOptConfig {
            tau: 0.9,
            max_stages: 500,
            ..Default::default()
        };
        let oracle = oracle_min_deviation(&instance, config.tau).expect("feasible instance");
        let report = optimize_cg_sequence(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(report.status, CgOptStatus::Converged);
        let deviation = report.deviation.unwrap();
        assert!(
            deviation <= oracle + config.epsilon + 1e-9,
            "deviation {deviation} oracle {oracle}"
        );
        assert!(report.mass.unwrap() >= report.floor);
        let assignment = report.assignment.unwrap();
        assert!(validate(&assignment, &instance.spec, &instance.payload).unwrap().feasible);
        // Windows shrink strictly.
        for pair in report.stages.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(b.window.0 >= a.window.0 && b.window.1 <= a.window.1);
            assert!((b.window.1 - b.window.0) < (a.window.1 - a.window.0));
        }
    }

    #[test]
    fn direct_agrees_with_sequence_and_the_oracle() {
        let instance = tiny_instance();
        let config = CgOptConfig {
            tau: 0.9,
            max_stages: 500,
            ..Default::default()
        };
        let oracle = oracle_min_deviation(&instance, config.tau).expect("feasible instance");
        let sequence = optimize_cg_sequence(&instance, &config, &exhaustive_config()).unwrap();
        let direct = optimize_cg_direct(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(direct.status, CgOptStatus::Converged);
        let (ds, dd) = (sequence.deviation.unwrap(), direct.deviation.unwrap());
        assert!(dd <= oracle + config.epsilon + 1e-9, "direct {dd} oracle {oracle}");
        assert!((ds - dd).abs() <= config.epsilon + 1e-9, "sequence {ds} direct {dd}");
        assert!(direct.mass.unwrap() >= direct.floor);
        // Feasible-stage deviations decrease strictly.
        let devs: Vec<f64> = direct
            .stages
            .iter()
            .filter(|s| s.feasible)
            .map(|s| (s.cg.unwrap() - instance.spec.cg_target).abs())
            .collect();
        for pair in devs.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn direct_from_zero_on_an_exactly_achievable_target_converges_in_one_stage() {
        // Target equals the empty-aircraft CG and the floor is zero, so the
        // empty loading already sits at deviation 0.
        let spec = AircraftSpec::new(
            4,
            6000,
            10_000,
            0.1,
            -0.5,
            0.5,
            0.1,
            ShearLimit::linear_symmetric(8000.0).unwrap(),
        )
        .unwrap();
        let instance = Instance {
            spec,
            payload: tiny_instance().payload,
            provenance: Provenance::File,
        };
        let config = CgOptConfig {
            tau: 0.0,
            initial_threshold: Some(0.0),
            ..Default::default()
        };
        let report = optimize_cg_direct(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(report.status, CgOptStatus::Converged);
        assert_eq!(report.stages.len(), 1);
        assert!(report.deviation.unwrap() <= 1e-12);
    }

    #[test]
    fn direct_from_zero_widens_when_the_target_is_unreachable() {
        let instance = tiny_instance();
        let config = CgOptConfig {
            tau: 0.9,
            max_stages: 500,
            initial_threshold: Some(0.0),
            ..Default::default()
        };
        let oracle = oracle_min_deviation(&instance, config.tau).expect("feasible instance");
        assert!(oracle > 0.0, "oracle deviation must be nonzero for this test");
        let report = optimize_cg_direct(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(report.status, CgOptStatus::Converged);
        assert!(report.deviation.unwrap() <= oracle + config.epsilon + 1e-9);
        // The log starts with at least one infeasible widening stage.
        assert!(!report.stages[0].feasible);
        assert!(report.stages.iter().any(|s| s.feasible));
    }

    #[test]
    fn infeasible_floor_is_no_solution_found() {
        // Only a 10 kg container; the payload limit is 5 kg, so w_max = 5
        // and a full-tolerance floor of 5 kg cannot be met (10 > limit).
        let spec = AircraftSpec::new(
            2,
            5,
            100,
            0.0,
            -0.5,
            0.5,
            0.0,
            ShearLimit::linear_symmetric(50.0).unwrap(),
        )
        .unwrap();
        let instance = Instance {
            spec,
            payload: Payload::new(vec![Container::new(1, ContainerSize::One, 10).unwrap()]).unwrap(),
            provenance: Provenance::File,
        };
        let config = CgOptConfig {
            tau: 1.0,
            ..Default::default()
        };
        let sequence = optimize_cg_sequence(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(sequence.status, CgOptStatus::NoSolutionFound);
        assert!(sequence.assignment.is_none());
        let direct = optimize_cg_direct(&instance, &config, &exhaustive_config()).unwrap();
        assert_eq!(direct.status, CgOptStatus::NoSolutionFound);
    }

    #[test]
    fn oversized_epsilon_collapses_after_one_shrink() {
        let instance = tiny_instance();
        let config = CgOptConfig {
            tau: 0.0,
            epsilon: 2.0,
            ..Default::default()
        };
        let report = optimize_cg_sequence(&instance, &config, &exhaustive_config()).unwrap();
        assert!(report.stages.len() <= 2, "stages: {:?}", report.stages);
        assert_eq!(report.status, CgOptStatus::Converged);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad = CgOptConfig {
            tau: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CgOptConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CgOptConfig {
            max_stages: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CgOptConfig {
            initial_threshold: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sequence_with_stochastic_stages_still_meets_the_floor() {
        let instance = tiny_instance();
        let config = CgOptConfig {
            tau: 0.9,
            stage_budget: Some(0.05),
            ..Default::default()
        };
        let mut solve_cfg = SolveConfig::new(SolveMode::ThresholdDescent);
        solve_cfg.time_source = TimeSource::Steps { seconds_per_step: 1e-6 };
        solve_cfg.restarts = 2;
        let report = optimize_cg_sequence(&instance, &config, &solve_cfg).unwrap();
        if let Some(assignment) = &report.assignment {
            assert!(report.mass.unwrap() >= report.floor);
            assert!(validate(assignment, &instance.spec, &instance.payload).unwrap().feasible);
        }
    }
}
