//! Runtime-scaling benchmarks.
//!
//! A grid over container-to-bin ratios `r` and bin counts `N` generates one
//! or more instances per cell, solves each with the stochastic search until
//! it reaches the quality target, and records time-to-target against the
//! stored coefficient count of the model. A log-log least-squares fit per
//! `r` summarizes how time scales with model size; plots can overlay a fixed
//! reference power law for comparison.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::instance::{generate_instance, reference_aircraft_with_bins, split_sizes, GeneratorConfig};
use crate::model::build_constraints;
use crate::solver::{solve_threshold_descent, w_max, SolveConfig, SolveMode, SolveStatus};
use crate::{Error, Result};

/// One solved benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// Container-to-bin ratio `n / N`, rounded to 3 decimals.
    pub r: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub bin_count: usize,
    pub seed: u64,
    pub n_l: usize,
    pub status: SolveStatus,
    /// Time to the quality target; present only when the target was reached.
    pub time_s: Option<f64>,
    pub mass: u64,
    pub w_max: u64,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub r_values: Vec<f64>,
    pub bin_counts: Vec<usize>,
    pub instances_per_cell: usize,
    pub base_seed: u64,
    /// Per-instance solve settings; the mode must be the stochastic search.
    pub solve: SolveConfig,
    /// Worker threads across records; 1 runs sequentially without a pool.
    pub threads: usize,
}

impl GridConfig {
    pub fn new(r_values: Vec<f64>, bin_counts: Vec<usize>) -> Self {
        GridConfig {
            r_values,
            bin_counts,
            instances_per_cell: 1,
            base_seed: 0,
            solve: SolveConfig::new(SolveMode::ThresholdDescent),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.bin_counts.is_empty() {
            return Err(Error::invalid("bench grid", "r values and bin counts must be nonempty"));
        }
        if self.r_values.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("bench grid", "r values must be positive"));
        }
        if self.bin_counts.iter().any(|&n| n < 2) {
            return Err(Error::invalid("bench grid", "bin counts must be at least 2"));
        }
        if self.instances_per_cell == 0 {
            return Err(Error::invalid("bench grid", "at least one instance per cell is required"));
        }
        if self.solve.mode != SolveMode::ThresholdDescent {
            return Err(Error::invalid("bench grid", "benchmarks use the threshold_descent mode"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("bench grid", "at least one thread is required"));
        }
        self.solve.validate()
    }
}

/// Instance seed for a grid position: cell index in the high half, instance
/// index in the low half, on top of the base seed.
fn cell_seed(base: u64, cell: usize, instance: usize) -> u64 {
    base.wrapping_add((cell as u64) << 32).wrapping_add(instance as u64)
}

fn run_one(r_target: f64, bin_count: usize, seed: u64, solve_config: &SolveConfig) -> Result<BenchRecord> {
    let n = ((r_target * bin_count as f64).round() as usize).max(1);
    let (n1, n2, n3) = split_sizes(n);
    let config = GeneratorConfig::new(n1, n2, n3, bin_count, seed)?;
    let instance = generate_instance(&config)?;
    debug_assert_eq!(instance.spec, reference_aircraft_with_bins(bin_count));
    let system = build_constraints(&instance.spec, &instance.payload);
    let report = solve_threshold_descent(&system, &instance.spec, &instance.payload, solve_config)?;
    Ok(BenchRecord {
        r: round3(n as f64 / bin_count as f64),
        n,
        bin_count,
        seed,
        n_l: report.n_l,
        status: report.status,
        time_s: (report.status == SolveStatus::TauReached).then_some(report.wall_time_s),
        mass: report.mass,
        w_max: w_max(&instance.spec, &instance.payload),
    })
}

/// Run the whole grid. Records come back in grid order (r, then N, then
/// instance index) regardless of the thread count, and each record's seed
/// depends only on its grid position, so runs with a virtual-step clock are
/// reproducible even in parallel.
pub fn run_grid(config: &GridConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let mut jobs = Vec::new();
    let mut cell = 0usize;
    for &r in &config.r_values {
        for &bin_count in &config.bin_counts {
            for instance in 0..config.instances_per_cell {
                jobs.push((r, bin_count, cell_seed(config.base_seed, cell, instance)));
            }
            cell += 1;
        }
    }
    if config.threads == 1 {
        jobs.into_iter()
            .map(|(r, bin_count, seed)| run_one(r, bin_count, seed, &config.solve))
            .collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::invalid("bench grid", format!("thread pool: {e}")))?;
        pool.install(|| {
            jobs.into_par_iter()
                .map(|(r, bin_count, seed)| run_one(r, bin_count, seed, &config.solve))
                .collect()
        })
    }
}

/// Per-cell aggregate over a record list: means are taken over the records
/// that reached the target; the rest are counted as censored at the given
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub r: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub bin_count: usize,
    pub records: usize,
    pub reached: usize,
    pub mean_time_s: Option<f64>,
    pub mean_mass: f64,
    pub censored: usize,
    pub budget_s: f64,
}

pub fn summarize(records: &[BenchRecord], budget_s: f64) -> Vec<CellSummary> {
    let mut cells: Vec<(f64, usize, usize)> = records.iter().map(|r| (r.r, r.n, r.bin_count)).collect();
    cells.sort_by(|a, b| a.partial_cmp(b).expect("finite keys"));
    cells.dedup();
    cells
        .into_iter()
        .map(|(r, n, bin_count)| {
            let members: Vec<&BenchRecord> = records
                .iter()
                .filter(|rec| rec.r == r && rec.n == n && rec.bin_count == bin_count)
                .collect();
            let reached: Vec<&&BenchRecord> = members
                .iter()
                .filter(|rec| rec.status == SolveStatus::TauReached)
                .collect();
            let mean_time_s = if reached.is_empty() {
                None
            } else {
                Some(reached.iter().filter_map(|rec| rec.time_s).sum::<f64>() / reached.len() as f64)
            };
            let mean_mass = if reached.is_empty() {
                0.0
            } else {
                reached.iter().map(|rec| rec.mass as f64).sum::<f64>() / reached.len() as f64
            };
            CellSummary {
                r,
                n,
                bin_count,
                records: members.len(),
                reached: reached.len(),
                mean_time_s,
                mean_mass,
                censored: members.len() - reached.len(),
                budget_s,
            }
        })
        .collect()
}

/// Power-law fit `log10 t = exponent * log10 n_l + log10_prefactor` for one
/// ratio `r`, least squares over the records that reached the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub r: f64,
    pub exponent: f64,
    pub log10_prefactor: f64,
    pub points: usize,
    pub r_squared: f64,
    pub rmse: f64,
}

pub fn fit_scaling(records: &[BenchRecord], r: f64) -> Result<ScalingFit> {
    let key = round3(r);
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|rec| (rec.r - key).abs() < 1e-9 && rec.status == SolveStatus::TauReached)
        .filter_map(|rec| rec.time_s.map(|t| (rec.n_l, t)))
        .filter(|&(n_l, t)| n_l > 0 && t > 0.0)
        .map(|(n_l, t)| ((n_l as f64).log10(), t.log10()))
        .collect();
    if points.len() < 4 {
        return Err(Error::InsufficientFitData {
            r: key,
            needed: 4,
            got: points.len(),
        });
    }
    let count = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "scaling fit",
            "all records share one model size; the exponent is undetermined",
        ));
    }
    let exponent = sxy / sxx;
    let log10_prefactor = mean_y - exponent * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (exponent * p.0 + log10_prefactor)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ScalingFit {
        r: key,
        exponent,
        log10_prefactor,
        points: points.len(),
        r_squared,
        rmse: (ss_res / count).sqrt(),
    })
}

/// Which reference power law to overlay on plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceCurve {
    /// Mass-target runs: `t = 10^(-0.65 r - 4.8) * n_l^(0.11 r + 1.25)`.
    MassPacking,
    /// CG-optimization runs: same law with prefactor `10^(-0.65 r - 4.2)`.
    CgOptimization,
}

/// Reference run time at a given ratio and model size. The law is only
/// calibrated for `0.5 <= r <= 3`; outside that range no value is returned.
pub fn reference_time(curve: ReferenceCurve, r: f64, n_l: f64) -> Option<f64> {
    if !(0.5..=3.0).contains(&r) || !(n_l > 0.0) {
        return None;
    }
    let offset = match curve {
        ReferenceCurve::MassPacking => -4.8,
        ReferenceCurve::CgOptimization => -4.2,
    };
    let prefactor = 10f64.powf(-0.65 * r + offset);
    let exponent = 0.11 * r + 1.25;
    Some(prefactor * n_l.powf(exponent))
}

/// Records as CSV text, columns `r,n,N,seed,n_l,status,time_s,mass,w_max`.
pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.serialize(record).expect("in-memory CSV cannot fail");
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV cannot fail")).expect("CSV is UTF-8")
}

/// Per-cell aggregates as CSV text, one row per grid cell.
pub fn cells_to_csv(cells: &[CellSummary]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for cell in cells {
        writer.serialize(cell).expect("in-memory CSV cannot fail");
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV cannot fail")).expect("CSV is UTF-8")
}

pub fn records_from_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<BenchRecord>().enumerate() {
        records.push(row.map_err(|e| Error::Parse {
            path: format!("record {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

struct Series {
    label: String,
    color: &'static str,
    /// Points in plot space (already log10 where applicable).
    points: Vec<(f64, f64)>,
}

struct Curve {
    color: &'static str,
    dashed: bool,
    /// Straight segment in plot space.
    from: (f64, f64),
    to: (f64, f64),
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Minimal standalone SVG scatter plot in log10-log10 space with decade
/// ticks. Deterministic output for identical inputs.
fn scatter_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], curves: &[Curve]) -> String {
    let (width, height) = (800.0, 600.0);
    let (left, right, top, bottom) = (80.0, 30.0, 50.0, 70.0);
    let all_points = series
        .iter()
        .flat_map(|s| s.points.iter())
        .chain(curves.iter().flat_map(|c| [&c.from, &c.to]));
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(x, y) in all_points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_max - x_min < 0.5 {
        x_min -= 0.25;
        x_max += 0.25;
    }
    if y_max - y_min < 0.5 {
        y_min -= 0.25;
        y_max += 0.25;
    }
    let pad_x = 0.05 * (x_max - x_min);
    let pad_y = 0.05 * (y_max - y_min);
    x_min -= pad_x;
    x_max += pad_x;
    y_min -= pad_y;
    y_max += pad_y;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * (width - left - right);
    let sy = |y: f64| height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"14\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{title}</text>\n",
        width / 2.0
    ));
    // Axes box.
    out.push_str(&format!(
        "  <rect x=\"{left}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        width - left - right,
        height - top - bottom
    ));
    // Decade ticks and grid lines.
    for decade in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let x = sx(decade as f64);
        out.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{top}\" x2=\"{0}\" y2=\"{1}\" stroke=\"#dddddd\"/>\n",
            fmt2(x),
            height - bottom
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">1e{decade}</text>\n",
            fmt2(x),
            height - bottom + 20.0
        ));
    }
    for decade in (y_min.ceil() as i64)..=(y_max.floor() as i64) {
        let y = sy(decade as f64);
        out.push_str(&format!(
            "  <line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#dddddd\"/>\n",
            fmt2(y),
            width - right
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{decade}</text>\n",
            left - 8.0,
            fmt2(y + 5.0)
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        width / 2.0,
        height - 20.0
    ));
    out.push_str(&format!(
        "  <text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">{y_label}</text>\n",
        height / 2.0
    ));
    for curve in curves {
        let dash = if curve.dashed { " stroke-dasharray=\"8 6\"" } else { "" };
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
            fmt2(sx(curve.from.0)),
            fmt2(sy(curve.from.1)),
            fmt2(sx(curve.to.0)),
            fmt2(sy(curve.to.1)),
            curve.color
        ));
    }
    for s in series {
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
                fmt2(sx(x)),
                fmt2(sy(y)),
                s.color
            ));
        }
    }
    // Legend.
    for (i, s) in series.iter().enumerate() {
        let y = top + 16.0 + 20.0 * i as f64;
        out.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n",
            left + 14.0,
            fmt2(y - 4.0),
            s.color
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            left + 26.0,
            fmt2(y),
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn group_by_r(records: &[BenchRecord]) -> Vec<(f64, Vec<&BenchRecord>)> {
    let mut keys: Vec<f64> = records.iter().map(|r| r.r).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).expect("finite r"));
    keys.dedup();
    keys.into_iter()
        .map(|key| {
            (
                key,
                records
                    .iter()
                    .filter(|rec| rec.r == key && rec.status == SolveStatus::TauReached)
                    .collect(),
            )
        })
        .collect()
}

/// Write the CSV and the two log-log plots (time vs stored coefficients,
/// time vs bins) into `dir`. Fit lines are drawn solid; the optional
/// reference law is dashed and only drawn for ratios inside its calibrated
/// range. Returns the written paths.
pub fn emit_report(
    records: &[BenchRecord],
    fits: &[ScalingFit],
    overlay: Option<ReferenceCurve>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("bench report", "no records to report"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();

    let csv_path = dir.join("records.csv");
    std::fs::write(&csv_path, records_to_csv(records)).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    written.push(csv_path);

    let groups = group_by_r(records);
    let mut series_nl = Vec::new();
    let mut series_bins = Vec::new();
    let mut curves = Vec::new();
    for (i, (r, group)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points_nl: Vec<(f64, f64)> = group
            .iter()
            .filter_map(|rec| rec.time_s.map(|t| ((rec.n_l as f64).log10(), t.log10())))
            .collect();
        let points_bins: Vec<(f64, f64)> = group
            .iter()
            .filter_map(|rec| rec.time_s.map(|t| ((rec.bin_count as f64).log10(), t.log10())))
            .collect();
        let (lo, hi) = points_nl
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        series_nl.push(Series {
            label: format!("r = {r}"),
            color,
            points: points_nl,
        });
        series_bins.push(Series {
            label: format!("r = {r}"),
            color,
            points: points_bins,
        });
        if lo.is_finite() && hi > lo {
            if let Some(fit) = fits.iter().find(|f| (f.r - r).abs() < 1e-9) {
                curves.push(Curve {
                    color,
                    dashed: false,
                    from: (lo, fit.exponent * lo + fit.log10_prefactor),
                    to: (hi, fit.exponent * hi + fit.log10_prefactor),
                });
            }
            if let Some(curve) = overlay {
                let ends = (
                    reference_time(curve, *r, 10f64.powf(lo)),
                    reference_time(curve, *r, 10f64.powf(hi)),
                );
                if let (Some(t0), Some(t1)) = ends {
                    curves.push(Curve {
                        color,
                        dashed: true,
                        from: (lo, t0.log10()),
                        to: (hi, t1.log10()),
                    });
                }
            }
        }
    }

    let nl_path = dir.join("time_vs_coefficients.svg");
    std::fs::write(
        &nl_path,
        scatter_svg(
            "Time to quality target vs model size",
            "stored coefficients",
            "time to target [s]",
            &series_nl,
            &curves,
        ),
    )
    .map_err(|e| Error::io(nl_path.display().to_string(), e))?;
    written.push(nl_path);

    let bins_path = dir.join("time_vs_bins.svg");
    std::fs::write(
        &bins_path,
        scatter_svg(
            "Time to quality target vs bin count",
            "bins",
            "time to target [s]",
            &series_bins,
            &[],
        ),
    )
    .map_err(|e| Error::io(bins_path.display().to_string(), e))?;
    written.push(bins_path);

    Ok(written)
}
