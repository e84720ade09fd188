//! Solvers over a built constraint system.
//!
//! Three modes share one incremental-evaluation core:
//! - exhaustive enumeration, the ground-truth oracle for small instances;
//! - depth-first branch and bound, exact with an admissible mass bound;
//! - threshold descent, a stochastic feasibility search that ratchets a
//!   minimum-mass floor upward every time it finds a feasible loading.
//!
//! The stochastic mode trades proof for speed: it never reports
//! `infeasible_proven` and never certifies optimality.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{Instance, Provenance};
use crate::model::{
    center_of_gravity, shear_profile, total_mass, AircraftSpec, Assignment, ConstraintSystem, Payload,
    RowTag, ShearPoint,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Exhaustive,
    BranchAndBound,
    ThresholdDescent,
}

/// What the budget and trace timestamps are measured with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSource {
    /// Real elapsed time.
    Wall,
    /// Virtual clock advancing a fixed amount per search step; runs become
    /// deterministic for a fixed seed in single-threaded mode.
    Steps { seconds_per_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub mode: SolveMode,
    /// Quality threshold: stop once the incumbent mass reaches
    /// `tau * min(max_payload, total payload mass)`.
    pub tau: f64,
    /// Budget in seconds (of the configured time source).
    pub time_budget: f64,
    pub seed: u64,
    /// Independent stochastic search lanes sharing one incumbent.
    pub restarts: usize,
    /// Mass-floor increment in kg after each feasible find.
    pub threshold_step: u64,
    /// Start the mass floor at the target instead of zero.
    pub warm_start: bool,
    /// Worker threads for the stochastic lanes; 1 runs them sequentially on
    /// equal budget slices and is the deterministic path.
    pub threads: usize,
    pub time_source: TimeSource,
}

impl SolveConfig {
    pub fn new(mode: SolveMode) -> Self {
        SolveConfig {
            mode,
            tau: 0.999,
            time_budget: 60.0,
            seed: 0,
            restarts: 8,
            threshold_step: 1,
            warm_start: false,
            threads: 1,
            time_source: TimeSource::Wall,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_budget > 0.0 && self.time_budget.is_finite()) {
            return Err(Error::invalid("solve config", format!("budget must be positive, got {}", self.time_budget)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid("solve config", format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if self.threshold_step < 1 {
            return Err(Error::invalid("solve config", "threshold_step must be at least 1 kg"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("solve config", "at least one restart lane is required"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("solve config", "at least one thread is required"));
        }
        if let TimeSource::Steps { seconds_per_step } = self.time_source {
            if !(seconds_per_step > 0.0 && seconds_per_step.is_finite()) {
                return Err(Error::invalid("solve config", "seconds_per_step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Exact search completed; the incumbent is a true optimum.
    Optimal,
    /// Incumbent mass reached the `tau` target.
    TauReached,
    /// Budget ran out with a feasible incumbent below the target.
    BudgetExhausted,
    /// Exact search completed without any feasible assignment.
    InfeasibleProven,
    /// Budget ran out before any feasible assignment was found.
    NoSolutionFound,
}

/// One incumbent improvement: mass strictly exceeds every earlier entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time_s: f64,
    pub mass: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Best feasible assignment found, if any.
    pub incumbent: Option<Assignment>,
    /// Mass of the incumbent (0 without one). The objective value is its
    /// negation.
    pub mass: u64,
    pub trace: Vec<TracePoint>,
    /// Stored coefficient count of the solved system.
    pub n_l: usize,
    pub wall_time_s: f64,
    /// Enumerated assignments, search nodes, or stochastic moves.
    pub steps: u64,
}

/// Mass cap used by quality thresholds: the payload limit or the total
/// available mass, whichever is smaller.
pub fn w_max(spec: &AircraftSpec, payload: &Payload) -> u64 {
    spec.max_payload.min(payload.total_mass())
}

fn target_mass(tau: f64, w_max: u64) -> u64 {
    // The f64 product may overshoot the integer by a hair; pull it back
    // before rounding up.
    ((tau * w_max as f64) - 1e-6).ceil().max(0.0) as u64
}

/// Row and column views of a system, plus per-row normalization scales.
struct Matrix {
    rhs: Vec<f64>,
    rows: Vec<Vec<(u32, f64)>>,
    cols: Vec<Vec<(u32, f64)>>,
    scale: Vec<f64>,
    weight_row: Option<usize>,
    shear_final: Option<(usize, usize)>,
}

impl Matrix {
    fn build(system: &ConstraintSystem) -> Self {
        let var_count = system.variables().len();
        let mut cols = vec![Vec::new(); var_count];
        let mut rows = Vec::with_capacity(system.rows().len());
        let mut rhs = Vec::with_capacity(system.rows().len());
        let mut scale = Vec::with_capacity(system.rows().len());
        let mut weight_row = None;
        let mut shear_final = (None, None);
        let half = system.variables().bin_count() / 2;
        for (r, row) in system.rows().iter().enumerate() {
            let mut entries = Vec::with_capacity(row.coefficients.len());
            let mut magnitude = 1.0f64;
            for &(v, c) in &row.coefficients {
                entries.push((v as u32, c));
                cols[v].push((r as u32, c));
                magnitude = magnitude.max(c.abs());
            }
            rows.push(entries);
            rhs.push(row.rhs);
            scale.push(magnitude);
            match row.tag {
                RowTag::Weight => weight_row = Some(r),
                RowTag::ShearLeft { bin } if bin == half => shear_final.0 = Some(r),
                RowTag::ShearRight { bin } if bin == half => shear_final.1 = Some(r),
                _ => {}
            }
        }
        Matrix {
            rhs,
            rows,
            cols,
            scale,
            weight_row,
            shear_final: shear_final.0.zip(shear_final.1),
        }
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }
}

/// Container-level search state with incrementally maintained row activities.
struct State<'a> {
    matrix: &'a Matrix,
    system: &'a ConstraintSystem,
    masses: Vec<u32>,
    /// 1-based bin per container; 0 means left out.
    position: Vec<usize>,
    activity: Vec<f64>,
    violated: usize,
    mass: u64,
}

impl<'a> State<'a> {
    fn new(system: &'a ConstraintSystem, matrix: &'a Matrix, payload: &Payload) -> Self {
        State {
            matrix,
            system,
            masses: payload.containers().iter().map(|c| c.mass).collect(),
            position: vec![0; payload.len()],
            activity: vec![0.0; matrix.len()],
            violated: matrix.rhs.iter().filter(|&&b| 0.0 > b).count(),
            mass: 0,
        }
    }

    fn variable(&self, k: usize, bin: usize) -> usize {
        self.system.variables().index(k, bin)
    }

    fn positions(&self, k: usize) -> usize {
        self.system.variables().positions(k)
    }

    fn shift(&mut self, v: usize, delta: f64) {
        for &(r, c) in &self.matrix.cols[v] {
            let r = r as usize;
            let before = self.activity[r] > self.matrix.rhs[r];
            self.activity[r] += delta * c;
            let after = self.activity[r] > self.matrix.rhs[r];
            match (before, after) {
                (false, true) => self.violated += 1,
                (true, false) => self.violated -= 1,
                _ => {}
            }
        }
    }

    fn place(&mut self, k: usize, bin: usize) {
        debug_assert_eq!(self.position[k], 0);
        self.position[k] = bin;
        self.mass += u64::from(self.masses[k]);
        self.shift(self.variable(k, bin), 1.0);
    }

    fn remove(&mut self, k: usize) {
        let bin = std::mem::take(&mut self.position[k]);
        debug_assert_ne!(bin, 0);
        self.mass -= u64::from(self.masses[k]);
        self.shift(self.variable(k, bin), -1.0);
    }

    fn clear(&mut self) {
        for k in 0..self.position.len() {
            if self.position[k] != 0 {
                self.remove(k);
            }
        }
        self.resync();
    }

    /// Recompute activities from scratch, clearing any accumulated float
    /// drift. Returns true when no row is violated.
    fn resync(&mut self) -> bool {
        self.activity.iter_mut().for_each(|a| *a = 0.0);
        for (k, &bin) in self.position.iter().enumerate() {
            if bin != 0 {
                let v = self.variable(k, bin);
                for &(r, c) in &self.matrix.cols[v] {
                    self.activity[r as usize] += c;
                }
            }
        }
        self.violated = self
            .activity
            .iter()
            .zip(&self.matrix.rhs)
            .filter(|(a, b)| a > b)
            .count();
        self.violated == 0
    }

    fn assignment(&self, spec: &AircraftSpec, payload: &Payload) -> Assignment {
        let placements: Vec<(usize, usize)> = self
            .position
            .iter()
            .enumerate()
            .filter(|&(_, &bin)| bin != 0)
            .map(|(k, &bin)| (k, bin))
            .collect();
        Assignment::from_placements(spec, payload, &placements).expect("positions are in range")
    }
}

fn base_report(system: &ConstraintSystem) -> SolveReport {
    SolveReport {
        status: SolveStatus::NoSolutionFound,
        incumbent: None,
        mass: 0,
        trace: Vec::new(),
        n_l: system.count_nonzeros(),
        wall_time_s: 0.0,
        steps: 0,
    }
}

/// Dispatch on `config.mode`.
pub fn solve(
    system: &ConstraintSystem,
    spec: &AircraftSpec,
    payload: &Payload,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    match config.mode {
        SolveMode::Exhaustive => solve_exhaustive(system, spec, payload),
        SolveMode::BranchAndBound => solve_branch_and_bound(system, spec, payload, config),
        SolveMode::ThresholdDescent => solve_threshold_descent(system, spec, payload, config),
    }
}

/// Enumerate every assignment (each container left out or in any admissible
/// bin) and return a true optimum, or prove infeasibility.
///
/// Refuses search spaces beyond 10^8 assignments.
pub fn solve_exhaustive(system: &ConstraintSystem, spec: &AircraftSpec, payload: &Payload) -> Result<SolveReport> {
    let log10_size: f64 = (0..payload.len())
        .map(|k| ((system.variables().positions(k) + 1) as f64).log10())
        .sum();
    if log10_size > 8.0 {
        return Err(Error::SearchSpaceTooLarge { log10_size });
    }
    let start = Instant::now();
    let matrix = Matrix::build(system);
    let mut state = State::new(system, &matrix, payload);
    let mut best: Option<(u64, Vec<usize>)> = None;
    let mut steps = 0u64;
    let mut trace = Vec::new();

    fn dfs(
        state: &mut State,
        k: usize,
        steps: &mut u64,
        best: &mut Option<(u64, Vec<usize>)>,
        trace: &mut Vec<TracePoint>,
        start: &Instant,
    ) {
        if k == state.position.len() {
            *steps += 1;
            let better = best.as_ref().map_or(true, |(m, _)| state.mass > *m);
            if state.violated == 0 && better && state.resync() {
                *best = Some((state.mass, state.position.clone()));
                trace.push(TracePoint {
                    time_s: start.elapsed().as_secs_f64(),
                    mass: state.mass,
                });
            }
            return;
        }
        dfs(state, k + 1, steps, best, trace, start);
        for bin in 1..=state.positions(k) {
            state.place(k, bin);
            dfs(state, k + 1, steps, best, trace, start);
            state.remove(k);
        }
    }
    dfs(&mut state, 0, &mut steps, &mut best, &mut trace, &start);

    let mut report = base_report(system);
    report.steps = steps;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.trace = trace;
    match best {
        Some((mass, position)) => {
            state.position = position;
            report.status = SolveStatus::Optimal;
            report.mass = mass;
            report.incumbent = Some(state.assignment(spec, payload));
        }
        None => report.status = SolveStatus::InfeasibleProven,
    }
    Ok(report)
}

/// Admissible cap on the additional mass placeable on top of the current
/// assignment using only `remaining` containers: the smaller of their total
/// mass, the residual weight capacity, and the residual capacity of the final
/// shear rows (which jointly see every occupied bin, except the middle bin of
/// an odd layout; its possible load is granted on top).
pub fn completion_bound(
    system: &ConstraintSystem,
    spec: &AircraftSpec,
    payload: &Payload,
    assignment: &Assignment,
    remaining: &[usize],
) -> u64 {
    let matrix = Matrix::build(system);
    let mut state = State::new(system, &matrix, payload);
    for (k, bin) in assignment.placements() {
        state.place(k, bin);
    }
    let mut masses: Vec<u64> = remaining.iter().map(|&k| u64::from(payload.container(k).mass)).collect();
    masses.sort_unstable_by(|a, b| b.cmp(a));
    let top_two: u64 = masses.iter().take(2).sum();
    let remaining_sum: u64 = masses.iter().sum();
    bound_from_parts(&matrix, &state, spec, remaining_sum, top_two)
}

/// Shared arithmetic core of the mass bound.
fn bound_from_parts(matrix: &Matrix, state: &State, spec: &AircraftSpec, remaining_sum: u64, top_two: u64) -> u64 {
    let mut cap = remaining_sum as f64;
    if let Some(w) = matrix.weight_row {
        cap = cap.min(matrix.rhs[w] - state.activity[w]);
    }
    if let Some((l, r)) = matrix.shear_final {
        let mut shear = (matrix.rhs[l] - state.activity[l]) + (matrix.rhs[r] - state.activity[r]);
        if spec.bin_count % 2 == 1 {
            // The middle bin is invisible to both final shear rows; at most
            // two remaining containers (two of size 2) can sit there, and an
            // uncounted straddle half is smaller still.
            shear += top_two as f64;
        }
        cap = cap.min(shear);
    }
    state.mass + cap.max(0.0).floor() as u64
}

/// Exact depth-first branch and bound.
///
/// Containers branch in descending mass order; each node tries the bins in
/// ascending order and the leave-out branch last. A node is cut when some row
/// cannot be satisfied by any completion, or when the admissible mass bound
/// cannot beat the incumbent. Anytime behavior: improving incumbents land in
/// the trace; on an exhausted budget the best one is returned.
pub fn solve_branch_and_bound(
    system: &ConstraintSystem,
    spec: &AircraftSpec,
    payload: &Payload,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let matrix = Matrix::build(system);
    let n = payload.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(payload.container(k).mass), k));

    // suffix_min[r][d]: lowest possible additional activity of row r from
    // containers order[d..] (each either left out or placed at its most
    // negative coefficient).
    let mut per_container_min = vec![vec![0.0f64; n]; matrix.len()];
    for (r, entries) in matrix.rows.iter().enumerate() {
        for &(v, c) in entries {
            let (k, _) = system.variables().container_bin(v as usize);
            let slot = &mut per_container_min[r][k];
            *slot = slot.min(c);
        }
    }
    let mut suffix_min = vec![vec![0.0f64; n + 1]; matrix.len()];
    for r in 0..matrix.len() {
        for d in (0..n).rev() {
            suffix_min[r][d] = suffix_min[r][d + 1] + per_container_min[r][order[d]];
        }
    }
    let mut suffix_mass = vec![0u64; n + 1];
    for d in (0..n).rev() {
        suffix_mass[d] = suffix_mass[d + 1] + u64::from(payload.container(order[d]).mass);
    }
    let top_two = |d: usize| -> u64 {
        let first = order.get(d).map_or(0, |&k| u64::from(payload.container(k).mass));
        let second = order.get(d + 1).map_or(0, |&k| u64::from(payload.container(k).mass));
        first + second
    };

    let budget = Budget::full(config, start);
    let mut state = State::new(system, &matrix, payload);
    let mut best: Option<(u64, Vec<usize>)> = None;
    let mut best_mass = 0u64;
    let mut have_best = false;
    let mut trace = Vec::new();
    let mut steps = 0u64;
    let mut out_of_time = false;

    struct Ctx<'a> {
        order: &'a [usize],
        suffix_min: &'a [Vec<f64>],
        suffix_mass: &'a [u64],
        spec: &'a AircraftSpec,
        budget: &'a Budget,
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        state: &mut State,
        ctx: &Ctx,
        depth: usize,
        steps: &mut u64,
        best: &mut Option<(u64, Vec<usize>)>,
        best_mass: &mut u64,
        have_best: &mut bool,
        trace: &mut Vec<TracePoint>,
        out_of_time: &mut bool,
        top_two: &dyn Fn(usize) -> u64,
    ) {
        if *out_of_time {
            return;
        }
        *steps += 1;
        if *steps % 1024 == 0 && ctx.budget.expired(*steps) {
            *out_of_time = true;
            return;
        }
        for r in 0..state.matrix.len() {
            if state.activity[r] + ctx.suffix_min[r][depth] > state.matrix.rhs[r] {
                return;
            }
        }
        if depth == ctx.order.len() {
            if (!*have_best || state.mass > *best_mass) && state.resync() {
                *best = Some((state.mass, state.position.clone()));
                *best_mass = state.mass;
                *have_best = true;
                trace.push(TracePoint {
                    time_s: ctx.budget.now(*steps),
                    mass: state.mass,
                });
            }
            return;
        }
        if *have_best {
            let bound = bound_from_parts(state.matrix, state, ctx.spec, ctx.suffix_mass[depth], top_two(depth));
            if bound <= *best_mass {
                return;
            }
        }
        let k = ctx.order[depth];
        for bin in 1..=state.positions(k) {
            state.place(k, bin);
            dfs(state, ctx, depth + 1, steps, best, best_mass, have_best, trace, out_of_time, top_two);
            state.remove(k);
            if *out_of_time {
                return;
            }
        }
        dfs(state, ctx, depth + 1, steps, best, best_mass, have_best, trace, out_of_time, top_two);
    }

    let ctx = Ctx {
        order: &order,
        suffix_min: &suffix_min,
        suffix_mass: &suffix_mass,
        spec,
        budget: &budget,
    };
    dfs(
        &mut state,
        &ctx,
        0,
        &mut steps,
        &mut best,
        &mut best_mass,
        &mut have_best,
        &mut trace,
        &mut out_of_time,
        &top_two,
    );

    let mut report = base_report(system);
    report.steps = steps;
    report.wall_time_s = budget.now(steps);
    report.trace = trace;
    match best {
        Some((mass, position)) => {
            state.position = position;
            report.mass = mass;
            report.incumbent = Some(state.assignment(spec, payload));
            report.status = if out_of_time {
                SolveStatus::BudgetExhausted
            } else {
                SolveStatus::Optimal
            };
        }
        None => {
            report.status = if out_of_time {
                SolveStatus::NoSolutionFound
            } else {
                SolveStatus::InfeasibleProven
            };
        }
    }
    Ok(report)
}

/// Budget and clock for one worker: wall deadline or step allowance.
enum Budget {
    Wall { start: Instant, deadline: Instant },
    Steps { base: u64, allowance: u64, per_step: f64 },
}

impl Budget {
    /// The whole budget for a single worker.
    fn full(config: &SolveConfig, start: Instant) -> Self {
        Budget::window(config, start, 0.0, 1.0, 0)
    }

    /// The `[from, to]` fraction of the budget. `base_steps` is the virtual
    /// time already consumed by earlier sequential lanes.
    fn window(config: &SolveConfig, start: Instant, from: f64, to: f64, base_steps: u64) -> Self {
        match config.time_source {
            TimeSource::Wall => Budget::Wall {
                start,
                deadline: start + Duration::from_secs_f64(config.time_budget * to),
            },
            TimeSource::Steps { seconds_per_step } => Budget::Steps {
                base: base_steps,
                allowance: ((config.time_budget * (to - from) / seconds_per_step).floor() as u64).max(1),
                per_step: seconds_per_step,
            },
        }
    }

    fn expired(&self, used_steps: u64) -> bool {
        match self {
            Budget::Wall { deadline, .. } => Instant::now() >= *deadline,
            Budget::Steps { allowance, .. } => used_steps >= *allowance,
        }
    }

    fn now(&self, used_steps: u64) -> f64 {
        match self {
            Budget::Wall { start, .. } => start.elapsed().as_secs_f64(),
            Budget::Steps { base, per_step, .. } => (base + used_steps) as f64 * per_step,
        }
    }
}

/// Shared incumbent across stochastic lanes.
struct SharedBest {
    /// Mass + 1 of the best feasible assignment, 0 when none.
    bar: AtomicU64,
    stop: AtomicBool,
    guarded: Mutex<(Option<Vec<usize>>, Vec<TracePoint>)>,
    steps: AtomicU64,
    next_lane: AtomicUsize,
}

/// Stochastic feasibility search with a rising mass floor.
///
/// Lanes start from an empty loading and repair weighted, scale-normalized
/// row violations (picking moves from a violated row, occasionally at
/// random). A virtual row `mass >= floor` drives filling; every feasible find
/// lifts the shared floor to `mass + threshold_step`. Lanes bump the weights
/// of violated rows when progress stalls and re-randomize with decayed
/// weights when it stalls badly. The search stops at the `tau` target or on
/// budget; it cannot prove infeasibility.
pub fn solve_threshold_descent(
    system: &ConstraintSystem,
    spec: &AircraftSpec,
    payload: &Payload,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let matrix = Matrix::build(system);
    let cap = w_max(spec, payload);
    let target = target_mass(config.tau, cap);
    let initial_floor = if config.warm_start { target } else { 0 };
    let shared = SharedBest {
        bar: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        guarded: Mutex::new((None, Vec::new())),
        steps: AtomicU64::new(0),
        next_lane: AtomicUsize::new(0),
    };
    let lanes = config.restarts;
    let sequential = config.threads == 1 || matches!(config.time_source, TimeSource::Steps { .. });

    let run_lane = |lane: usize, base_steps: u64| -> u64 {
        let budget = if sequential {
            let width = 1.0 / lanes as f64;
            Budget::window(config, start, lane as f64 * width, (lane + 1) as f64 * width, base_steps)
        } else {
            Budget::full(config, start)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(100 + lane as u64);
        lane_search(
            system, payload, &matrix, config, &shared, &budget, &mut rng, initial_floor, target,
        )
    };

    if sequential {
        let mut base = 0u64;
        for lane in 0..lanes {
            if shared.stop.load(Ordering::Acquire) {
                break;
            }
            base += run_lane(lane, base);
        }
    } else {
        let workers = config.threads.min(lanes);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let lane = shared.next_lane.fetch_add(1, Ordering::Relaxed);
                    if lane >= lanes || shared.stop.load(Ordering::Acquire) {
                        break;
                    }
                    run_lane(lane, 0);
                });
            }
        });
    }

    let (position, trace) = {
        let guard = shared.guarded.lock().expect("no poisoned lanes");
        guard.clone()
    };
    let mut report = base_report(system);
    report.steps = shared.steps.load(Ordering::Relaxed);
    report.wall_time_s = match config.time_source {
        TimeSource::Wall => start.elapsed().as_secs_f64(),
        TimeSource::Steps { seconds_per_step } => report.steps as f64 * seconds_per_step,
    };
    report.trace = trace;
    match position {
        Some(position) => {
            let mut state = State::new(system, &matrix, payload);
            state.position = position;
            report.mass = shared.bar.load(Ordering::Acquire) - 1;
            report.incumbent = Some(state.assignment(spec, payload));
            report.status = if report.mass >= target {
                SolveStatus::TauReached
            } else {
                SolveStatus::BudgetExhausted
            };
        }
        None => report.status = SolveStatus::NoSolutionFound,
    }
    Ok(report)
}

const CANDIDATES: usize = 12;
const NOISE: f64 = 0.1;
const BUMP_INTERVAL: u64 = 512;
const RESTART_STALL: u64 = 40_000;
const CHECK_INTERVAL: u64 = 256;

#[derive(Clone, Copy)]
enum Move {
    Place(usize, usize),
    Remove(usize),
    Relocate(usize, usize),
}

#[allow(clippy::too_many_arguments)]
fn lane_search(
    system: &ConstraintSystem,
    payload: &Payload,
    matrix: &Matrix,
    config: &SolveConfig,
    shared: &SharedBest,
    budget: &Budget,
    rng: &mut ChaCha8Rng,
    initial_floor: u64,
    target: u64,
) -> u64 {
    let mut state = State::new(system, matrix, payload);
    if state.position.is_empty() {
        // No moves exist; publish the empty loading if it is feasible.
        if state.violated == 0 {
            let mut guard = shared.guarded.lock().expect("no poisoned lanes");
            if shared.bar.load(Ordering::Acquire) == 0 {
                shared.bar.store(1, Ordering::Release);
                guard.1.push(TracePoint { time_s: budget.now(0), mass: 0 });
                guard.0 = Some(Vec::new());
            }
            shared.stop.store(true, Ordering::Release);
        }
        shared.steps.fetch_add(1, Ordering::Relaxed);
        return 1;
    }
    let rows = matrix.len();
    // Index `rows` is the virtual mass-floor row.
    let mut weights = vec![1.0f64; rows + 1];
    let floor_scale = payload
        .containers()
        .iter()
        .map(|c| f64::from(c.mass))
        .fold(1.0, f64::max);
    let mut floor = initial_floor.max(shared.bar.load(Ordering::Acquire));
    let mut moves = 0u64;
    let mut stall = 0u64;
    let mut best_violation = f64::INFINITY;

    let violation_energy = |state: &State, weights: &[f64], floor: u64| -> f64 {
        let mut total = 0.0;
        for r in 0..state.matrix.len() {
            let over = state.activity[r] - state.matrix.rhs[r];
            if over > 0.0 {
                total += weights[r] * over / state.matrix.scale[r];
            }
        }
        if state.mass < floor {
            total += weights[state.matrix.len()] * (floor - state.mass) as f64 / floor_scale;
        }
        total
    };

    loop {
        if moves % CHECK_INTERVAL == 0 {
            if shared.stop.load(Ordering::Acquire) || budget.expired(moves) {
                shared.steps.fetch_add(moves, Ordering::Relaxed);
                return moves;
            }
            floor = floor.max(shared.bar.load(Ordering::Acquire));
        }
        moves += 1;

        if state.violated == 0 && state.mass >= floor {
            // Candidate feasible point: re-verify against fresh activities
            // before publishing (incremental float updates can drift).
            if state.resync() {
                let mass = state.mass;
                let mut guard = shared.guarded.lock().expect("no poisoned lanes");
                if mass + 1 > shared.bar.load(Ordering::Acquire) {
                    shared.bar.store(mass + 1, Ordering::Release);
                    let now = budget.now(moves);
                    let last = guard.1.last().map_or(0.0, |p: &TracePoint| p.time_s);
                    guard.1.push(TracePoint {
                        time_s: now.max(last),
                        mass,
                    });
                    guard.0 = Some(state.position.clone());
                    if mass >= target {
                        shared.stop.store(true, Ordering::Release);
                        drop(guard);
                        shared.steps.fetch_add(moves, Ordering::Relaxed);
                        return moves;
                    }
                }
                drop(guard);
                floor = floor.max(shared.bar.load(Ordering::Acquire)) .max(state.mass + config.threshold_step);
                stall = 0;
                best_violation = f64::INFINITY;
                continue;
            }
        }

        // Pick a violated row (virtual one included) and collect repair moves.
        let mut candidates: [Option<Move>; 2 * CANDIDATES] = [None; 2 * CANDIDATES];
        let mut count = 0;
        let mut push = |m: Move, count: &mut usize| {
            if *count < candidates.len() {
                candidates[*count] = Some(m);
                *count += 1;
            }
        };
        let virtual_violated = state.mass < floor;
        let pick = rng.random_range(0..state.violated + usize::from(virtual_violated));
        let row_choice = if pick < state.violated {
            let mut seen = 0;
            let mut found = 0;
            for r in 0..rows {
                if state.activity[r] > state.matrix.rhs[r] {
                    if seen == pick {
                        found = r;
                        break;
                    }
                    seen += 1;
                }
            }
            Some(found)
        } else {
            None
        };
        match row_choice {
            Some(r) => {
                let entries = &state.matrix.rows[r];
                for _ in 0..CANDIDATES.min(entries.len().max(1)) {
                    if entries.is_empty() {
                        break;
                    }
                    let &(v, c) = &entries[rng.random_range(0..entries.len())];
                    let (k, bin) = state.system.variables().container_bin(v as usize);
                    let at = state.position[k];
                    if c > 0.0 && at == bin {
                        push(Move::Remove(k), &mut count);
                        let width = state.positions(k);
                        if width > 1 {
                            let mut other = rng.random_range(1..=width);
                            if other == bin {
                                other = other % width + 1;
                            }
                            push(Move::Relocate(k, other), &mut count);
                        }
                    } else if c < 0.0 && at != bin {
                        if at == 0 {
                            push(Move::Place(k, bin), &mut count);
                        } else {
                            push(Move::Relocate(k, bin), &mut count);
                        }
                    }
                }
            }
            None => {
                // Mass floor: any unplaced container helps.
                for _ in 0..CANDIDATES {
                    let k = rng.random_range(0..state.position.len());
                    if state.position[k] == 0 {
                        push(Move::Place(k, rng.random_range(1..=state.positions(k))), &mut count);
                    }
                }
            }
        }
        if count == 0 {
            // Fallback: random toggle keeps the chain irreducible.
            let k = rng.random_range(0..state.position.len());
            if state.position[k] == 0 {
                push(Move::Place(k, rng.random_range(1..=state.positions(k))), &mut count);
            } else {
                push(Move::Remove(k), &mut count);
            }
        }

        let chosen = if rng.random::<f64>() < NOISE {
            candidates[rng.random_range(0..count)].expect("within count")
        } else {
            let mut best_move = candidates[0].expect("count > 0");
            let mut best_delta = f64::INFINITY;
            for candidate in candidates.iter().take(count).flatten() {
                let delta = move_delta(&state, matrix, *candidate, &weights, floor, floor_scale);
                if delta < best_delta {
                    best_delta = delta;
                    best_move = *candidate;
                }
            }
            best_move
        };
        match chosen {
            Move::Place(k, bin) => state.place(k, bin),
            Move::Remove(k) => state.remove(k),
            Move::Relocate(k, bin) => {
                state.remove(k);
                state.place(k, bin);
            }
        }

        let energy = violation_energy(&state, &weights, floor);
        if energy + 1e-12 < best_violation {
            best_violation = energy;
            stall = 0;
        } else {
            stall += 1;
            if stall % BUMP_INTERVAL == 0 {
                for r in 0..rows {
                    if state.activity[r] > state.matrix.rhs[r] {
                        weights[r] = (weights[r] + 1.0).min(1e6);
                    }
                }
                if state.mass < floor {
                    weights[rows] = (weights[rows] + 1.0).min(1e6);
                }
            }
            if stall >= RESTART_STALL {
                // Re-randomize; learned weights decay geometrically.
                state.clear();
                for k in 0..state.position.len() {
                    if rng.random::<f64>() < 0.3 {
                        state.place(k, rng.random_range(1..=state.positions(k)));
                    }
                }
                for w in weights.iter_mut() {
                    *w = 1.0 + (*w - 1.0) * 0.5;
                }
                stall = 0;
                best_violation = f64::INFINITY;
            }
        }
    }
}

/// Weighted, scale-normalized violation change of a move, scanning only the
/// touched rows.
fn move_delta(state: &State, matrix: &Matrix, mv: Move, weights: &[f64], floor: u64, floor_scale: f64) -> f64 {
    let (removed, added, mass_delta): (Option<usize>, Option<usize>, i64) = match mv {
        Move::Place(k, bin) => (None, Some(state.variable(k, bin)), i64::from(state.masses[k])),
        Move::Remove(k) => (Some(state.variable(k, state.position[k])), None, -i64::from(state.masses[k])),
        Move::Relocate(k, bin) => (
            Some(state.variable(k, state.position[k])),
            Some(state.variable(k, bin)),
            0,
        ),
    };
    let empty: &[(u32, f64)] = &[];
    let minus = removed.map_or(empty, |v| &matrix.cols[v]);
    let plus = added.map_or(empty, |v| &matrix.cols[v]);
    let mut delta = 0.0;
    let (mut i, mut j) = (0, 0);
    let mut apply = |r: usize, change: f64| {
        let over_before = (state.activity[r] - matrix.rhs[r]).max(0.0);
        let over_after = (state.activity[r] + change - matrix.rhs[r]).max(0.0);
        delta += weights[r] * (over_after - over_before) / matrix.scale[r];
    };
    while i < minus.len() || j < plus.len() {
        match (minus.get(i), plus.get(j)) {
            (Some(&(r1, c1)), Some(&(r2, c2))) if r1 == r2 => {
                apply(r1 as usize, c2 - c1);
                i += 1;
                j += 1;
            }
            (Some(&(r1, c1)), Some(&(r2, _))) if r1 < r2 => {
                apply(r1 as usize, -c1);
                i += 1;
            }
            (Some(&(r1, c1)), None) => {
                apply(r1 as usize, -c1);
                i += 1;
            }
            (_, Some(&(r2, c2))) => {
                apply(r2 as usize, c2);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if floor > 0 {
        let short_before = floor.saturating_sub(state.mass) as f64;
        let mass_after = state.mass as i64 + mass_delta;
        let short_after = (floor as i64 - mass_after).max(0) as f64;
        delta += weights[matrix.len()] * (short_after - short_before) / floor_scale;
    }
    delta
}

/// Schema version of solution documents.
pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

/// Instance fingerprint stored in solution documents, enough to detect a
/// mismatched instance file on validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSummary {
    pub bin_count: usize,
    pub containers: usize,
    pub total_mass: u64,
    pub provenance: Provenance,
}

impl InstanceSummary {
    pub fn of(instance: &Instance) -> Self {
        InstanceSummary {
            bin_count: instance.spec.bin_count,
            containers: instance.payload.len(),
            total_mass: instance.payload.total_mass(),
            provenance: instance.provenance.clone(),
        }
    }
}

/// Solver output in file form: placements plus derived physics and the
/// improvement trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub version: u32,
    pub instance: InstanceSummary,
    /// `(container index, bin)` pairs of the incumbent; empty without one.
    pub placements: Vec<(usize, usize)>,
    pub mass: u64,
    pub cg: f64,
    pub shear: Vec<ShearPoint>,
    pub status: SolveStatus,
    pub trace: Vec<TracePoint>,
}

impl SolutionDocument {
    pub fn new(instance: &Instance, report: &SolveReport) -> Self {
        let assignment = report
            .incumbent
            .clone()
            .unwrap_or_else(|| Assignment::empty(&instance.spec, &instance.payload));
        SolutionDocument {
            version: SOLUTION_SCHEMA_VERSION,
            instance: InstanceSummary::of(instance),
            placements: assignment.placements(),
            mass: total_mass(&assignment, &instance.payload),
            cg: center_of_gravity(&assignment, &instance.spec, &instance.payload),
            shear: shear_profile(&assignment, &instance.spec, &instance.payload),
            status: report.status,
            trace: report.trace.clone(),
        }
    }

    /// Rebuild the assignment against an instance, checking the fingerprint.
    pub fn assignment(&self, instance: &Instance) -> Result<Assignment> {
        if self.instance != InstanceSummary::of(instance) {
            return Err(Error::invalid(
                "solution document",
                "instance fingerprint does not match the provided instance",
            ));
        }
        Assignment::from_placements(&instance.spec, &instance.payload, &self.placements)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("solution serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let deserializer = &mut serde_json::Deserializer::from_str(text);
        let document: SolutionDocument =
            serde_path_to_error::deserialize(deserializer).map_err(|e| Error::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        if document.version != SOLUTION_SCHEMA_VERSION {
            return Err(Error::Parse {
                path: "version".into(),
                message: format!(
                    "unsupported schema version {} (expected {SOLUTION_SCHEMA_VERSION})",
                    document.version
                ),
            });
        }
        Ok(document)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::airbus_reference_instance;
    use crate::model::{build_constraints, validate, Container, ContainerSize, Row, ShearLimit};

    fn toy_spec() -> AircraftSpec {
        AircraftSpec::new(
            2,
            8,
            100,
            0.0,
            -0.5,
            0.5,
            0.0,
            ShearLimit::linear_symmetric(10.0).unwrap(),
        )
        .unwrap()
    }

    fn toy_payload() -> Payload {
        Payload::new(vec![
            Container::new(1, ContainerSize::One, 5).unwrap(),
            Container::new(2, ContainerSize::One, 4).unwrap(),
            Container::new(3, ContainerSize::One, 3).unwrap(),
        ])
        .unwrap()
    }

    fn steps_config(mode: SolveMode) -> SolveConfig {
        let mut config = SolveConfig::new(mode);
        config.time_source = TimeSource::Steps { seconds_per_step: 1e-6 };
        config.time_budget = 1.0;
        config.tau = 1.0;
        config.restarts = 2;
        config
    }

    #[test]
    fn w_max_takes_the_smaller_cap() {
        let instance = airbus_reference_instance();
        assert_eq!(w_max(&instance.spec, &instance.payload), 40_000);
        let light = Payload::new(vec![Container::new(1, ContainerSize::One, 20_000).unwrap()]).unwrap();
        assert_eq!(w_max(&instance.spec, &light), 20_000);
        assert_eq!(w_max(&instance.spec, &Payload::empty()), 0);
    }

    #[test]
    fn exhaustive_finds_the_toy_optimum() {
        let (spec, payload) = (toy_spec(), toy_payload());
        let system = build_constraints(&spec, &payload);
        let report = solve_exhaustive(&system, &spec, &payload).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.mass, 8);
        let incumbent = report.incumbent.unwrap();
        assert!(validate(&incumbent, &spec, &payload).unwrap().feasible);
        // Optimum takes the 5 kg and 3 kg containers.
        let selected: Vec<usize> = incumbent.placements().iter().map(|&(k, _)| k).collect();
        assert_eq!(selected, vec![0, 2]);
        assert!(report.trace.windows(2).all(|w| w[0].mass < w[1].mass));
    }

    #[test]
    fn exhaustive_handles_degenerate_cases() {
        let spec = toy_spec();
        let payload = Payload::empty();
        let system = build_constraints(&spec, &payload);
        let report = solve_exhaustive(&system, &spec, &payload).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.mass, 0);
        assert_eq!(report.steps, 1);

        let heavy = Payload::new(vec![Container::new(1, ContainerSize::One, 50).unwrap()]).unwrap();
        let system = build_constraints(&spec, &heavy);
        let report = solve_exhaustive(&system, &spec, &heavy).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.mass, 0);
        assert!(report.incumbent.unwrap().placements().is_empty());
    }

    #[test]
    fn exhaustive_guards_the_search_space() {
        let instance = airbus_reference_instance();
        let system = build_constraints(&instance.spec, &instance.payload);
        match solve_exhaustive(&system, &instance.spec, &instance.payload) {
            Err(Error::SearchSpaceTooLarge { log10_size }) => assert!(log10_size > 8.0),
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn branch_and_bound_matches_exhaustive_on_the_toy() {
        let (spec, payload) = (toy_spec(), toy_payload());
        let system = build_constraints(&spec, &payload);
        let config = steps_config(SolveMode::BranchAndBound);
        let report = solve_branch_and_bound(&system, &spec, &payload, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        assert_eq!(report.mass, 8);
        assert!(validate(&report.incumbent.unwrap(), &spec, &payload).unwrap().feasible);
    }

    #[test]
    fn unreachable_window_plus_mass_floor_is_proven_infeasible() {
        // One 10 kg container, wide weight margin, but the CG window [0.4,
        // 0.4] is unreachable and a floor row demands the container aboard.
        let spec = AircraftSpec::new(
            2,
            20,
            100,
            0.0,
            0.4,
            0.4,
            0.4,
            ShearLimit::linear_symmetric(50.0).unwrap(),
        )
        .unwrap();
        let payload = Payload::new(vec![Container::new(1, ContainerSize::One, 10).unwrap()]).unwrap();
        let mut system = build_constraints(&spec, &payload);
        system
            .push_row(Row {
                tag: RowTag::MassFloor,
                coefficients: vec![(0, -10.0), (1, -10.0)],
                rhs: -10.0,
            })
            .unwrap();
        let report = solve_exhaustive(&system, &spec, &payload).unwrap();
        assert_eq!(report.status, SolveStatus::InfeasibleProven);
        let config = steps_config(SolveMode::BranchAndBound);
        let report = solve_branch_and_bound(&system, &spec, &payload, &config).unwrap();
        assert_eq!(report.status, SolveStatus::InfeasibleProven);
        assert!(report.incumbent.is_none());
    }

    #[test]
    fn threshold_descent_reaches_the_toy_optimum() {
        let (spec, payload) = (toy_spec(), toy_payload());
        let system = build_constraints(&spec, &payload);
        let config = steps_config(SolveMode::ThresholdDescent);
        let report = solve_threshold_descent(&system, &spec, &payload, &config).unwrap();
        assert_eq!(report.status, SolveStatus::TauReached, "trace: {:?}", report.trace);
        assert_eq!(report.mass, 8);
        assert!(validate(&report.incumbent.unwrap(), &spec, &payload).unwrap().feasible);
        assert!(report.trace.windows(2).all(|w| w[0].mass < w[1].mass));
        assert!(report.trace.windows(2).all(|w| w[0].time_s <= w[1].time_s));
    }

    #[test]
    fn threshold_descent_tau_zero_accepts_the_first_feasible_point() {
        let (spec, payload) = (toy_spec(), toy_payload());
        let system = build_constraints(&spec, &payload);
        let mut config = steps_config(SolveMode::ThresholdDescent);
        config.tau = 0.0;
        let report = solve_threshold_descent(&system, &spec, &payload, &config).unwrap();
        assert_eq!(report.status, SolveStatus::TauReached);
        // The empty loading is feasible here, so the very first check ends
        // the search.
        assert_eq!(report.mass, 0);
        assert_eq!(report.trace.len(), 1);
    }

    #[test]
    fn threshold_descent_is_deterministic_in_steps_mode() {
        let instance = airbus_reference_instance();
        let system = build_constraints(&instance.spec, &instance.payload);
        let mut config = steps_config(SolveMode::ThresholdDescent);
        config.tau = 0.9;
        config.time_budget = 0.5;
        let a = solve_threshold_descent(&system, &instance.spec, &instance.payload, &config).unwrap();
        let b = solve_threshold_descent(&system, &instance.spec, &instance.payload, &config).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.mass, b.mass);
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.incumbent, b.incumbent);
    }

    #[test]
    fn threshold_descent_budget_exhaustion_keeps_the_incumbent() {
        let instance = airbus_reference_instance();
        let system = build_constraints(&instance.spec, &instance.payload);
        let mut config = steps_config(SolveMode::ThresholdDescent);
        config.tau = 1.0;
        config.time_budget = 0.05;
        let report = solve_threshold_descent(&system, &instance.spec, &instance.payload, &config).unwrap();
        assert!(matches!(
            report.status,
            SolveStatus::BudgetExhausted | SolveStatus::NoSolutionFound
        ));
        if let Some(incumbent) = &report.incumbent {
            assert!(validate(incumbent, &instance.spec, &instance.payload).unwrap().feasible);
            assert_eq!(report.mass, total_mass(incumbent, &instance.payload));
        }
    }

    #[test]
    fn completion_bound_is_admissible_on_the_toy() {
        let (spec, payload) = (toy_spec(), toy_payload());
        let system = build_constraints(&spec, &payload);
        // Container 0 placed in bin 1; containers 1, 2 remain. True best
        // completion: add container 2 (3 kg) for 8 total.
        let assignment = Assignment::from_placements(&spec, &payload, &[(0, 1)]).unwrap();
        let bound = completion_bound(&system, &spec, &payload, &assignment, &[1, 2]);
        assert!(bound >= 8);
        // And the bound respects the weight row: 5 + min(7, 3, ...) = 8.
        assert_eq!(bound, 8);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = SolveConfig::new(SolveMode::ThresholdDescent);
        config.tau = 1.5;
        assert!(config.validate().is_err());
        let mut config = SolveConfig::new(SolveMode::ThresholdDescent);
        config.time_budget = 0.0;
        assert!(config.validate().is_err());
        let mut config = SolveConfig::new(SolveMode::ThresholdDescent);
        config.threshold_step = 0;
        assert!(config.validate().is_err());
        let mut config = SolveConfig::new(SolveMode::ThresholdDescent);
        config.restarts = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn solution_document_round_trips() {
        let instance = airbus_reference_instance();
        let system = build_constraints(&instance.spec, &instance.payload);
        let mut config = steps_config(SolveMode::ThresholdDescent);
        config.tau = 0.5;
        config.time_budget = 0.2;
        let report = solve_threshold_descent(&system, &instance.spec, &instance.payload, &config).unwrap();
        let document = SolutionDocument::new(&instance, &report);
        let text = document.to_json();
        let back = SolutionDocument::from_json(&text).unwrap();
        assert_eq!(back, document);
        assert_eq!(back.to_json(), text);
        if report.incumbent.is_some() {
            let assignment = back.assignment(&instance).unwrap();
            assert_eq!(total_mass(&assignment, &instance.payload), back.mass);
        }
        let other = crate::instance::generate_instance(
            &crate::instance::GeneratorConfig::new(2, 1, 0, 20, 5).unwrap(),
        )
        .unwrap();
        assert!(back.assignment(&other).is_err());
    }
}
