//! Instance generation and (de)serialization.
//!
//! Random payloads draw each size class from an equal-weight two-mode
//! Gaussian, truncate to an acceptance window, scale by `20/N` and round to
//! integer kg, then sample without replacement from the accepted pool.
//! Everything is a pure function of `(seed, config)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{AircraftSpec, Container, ContainerSize, Payload, ShearLimit};
use crate::{Error, Result};

/// Draws per mode as a multiple of the requested count.
const OVERSAMPLE: usize = 1000;
/// Hard cap on total draws per size class.
const MAX_DRAWS: usize = 1_000_000;

/// Mass distribution of one size class: two Gaussian modes of equal weight,
/// truncated to an open window, before the `20/N` rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSizeClassParams")]
pub struct SizeClassParams {
    pub mode_low: f64,
    pub mode_high: f64,
    pub sigma: f64,
    pub accept_min: f64,
    pub accept_max: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSizeClassParams {
    mode_low: f64,
    mode_high: f64,
    sigma: f64,
    accept_min: f64,
    accept_max: f64,
}

impl SizeClassParams {
    pub fn new(mode_low: f64, mode_high: f64, sigma: f64, accept_min: f64, accept_max: f64) -> Result<Self> {
        let all = [mode_low, mode_high, sigma, accept_min, accept_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("size class params", "all parameters must be finite"));
        }
        if sigma <= 0.0 {
            return Err(Error::invalid("size class params", format!("sigma must be positive, got {sigma}")));
        }
        if !(0.0 < accept_min && accept_min < accept_max) {
            return Err(Error::invalid(
                "size class params",
                format!("acceptance window ({accept_min}, {accept_max}) must be positive and nonempty"),
            ));
        }
        for (name, mode) in [("mode_low", mode_low), ("mode_high", mode_high)] {
            if mode <= accept_min || mode >= accept_max {
                return Err(Error::invalid(
                    "size class params",
                    format!("{name} = {mode} outside acceptance window ({accept_min}, {accept_max})"),
                ));
            }
        }
        Ok(SizeClassParams {
            mode_low,
            mode_high,
            sigma,
            accept_min,
            accept_max,
        })
    }

    /// Stock parameters per size class. Sigma is a third of the mode spread.
    pub fn default_for(size: ContainerSize) -> Self {
        let (lo, hi, min, max) = match size {
            ContainerSize::One => (1500.0, 3500.0, 1300.0, 3700.0),
            ContainerSize::Two => (700.0, 1800.0, 500.0, 2000.0),
            ContainerSize::Three => (3200.0, 7000.0, 3000.0, 7200.0),
        };
        SizeClassParams::new(lo, hi, (hi - lo) / 3.0, min, max).expect("stock parameters are valid")
    }
}

impl TryFrom<RawSizeClassParams> for SizeClassParams {
    type Error = Error;

    fn try_from(raw: RawSizeClassParams) -> Result<Self> {
        SizeClassParams::new(raw.mode_low, raw.mode_high, raw.sigma, raw.accept_min, raw.accept_max)
    }
}

/// Everything that determines a generated payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeneratorConfig")]
pub struct GeneratorConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub bin_count: usize,
    pub seed: u64,
    /// Per-class distributions, indexed by `ContainerSize::class_index`.
    pub class_params: [SizeClassParams; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneratorConfig {
    n1: usize,
    n2: usize,
    n3: usize,
    bin_count: usize,
    seed: u64,
    class_params: Option<[SizeClassParams; 3]>,
}

impl GeneratorConfig {
    pub fn new(n1: usize, n2: usize, n3: usize, bin_count: usize, seed: u64) -> Result<Self> {
        if n1 + n2 + n3 == 0 {
            return Err(Error::invalid("generator config", "at least one container is required"));
        }
        if bin_count < 2 {
            return Err(Error::invalid(
                "generator config",
                format!("bin_count must be >= 2, got {bin_count}"),
            ));
        }
        Ok(GeneratorConfig {
            n1,
            n2,
            n3,
            bin_count,
            seed,
            class_params: [
                SizeClassParams::default_for(ContainerSize::One),
                SizeClassParams::default_for(ContainerSize::Two),
                SizeClassParams::default_for(ContainerSize::Three),
            ],
        })
    }

    pub fn with_class_params(mut self, params: [SizeClassParams; 3]) -> Self {
        self.class_params = params;
        self
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2 + self.n3
    }

    fn count_of(&self, size: ContainerSize) -> usize {
        match size {
            ContainerSize::One => self.n1,
            ContainerSize::Two => self.n2,
            ContainerSize::Three => self.n3,
        }
    }
}

impl TryFrom<RawGeneratorConfig> for GeneratorConfig {
    type Error = Error;

    fn try_from(raw: RawGeneratorConfig) -> Result<Self> {
        let mut config = GeneratorConfig::new(raw.n1, raw.n2, raw.n3, raw.bin_count, raw.seed)?;
        if let Some(params) = raw.class_params {
            config = config.with_class_params(params);
        }
        Ok(config)
    }
}

/// Split a total container count as one half size 1, one third size 2, one
/// sixth size 3, using the largest-remainder rule so the parts sum to `n`.
/// Remainder ties go to the smaller size class.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let mut parts = [n / 2, n / 3, n / 6];
    // Fractional remainders over the common denominator 6.
    let mut remainders = [(3 * (n % 2), 0usize), (2 * (n % 3), 1), (n % 6, 2)];
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = n - parts.iter().sum::<usize>();
    for &(_, class) in &remainders {
        if leftover == 0 {
            break;
        }
        parts[class] += 1;
        leftover -= 1;
    }
    (parts[0], parts[1], parts[2])
}

/// Generate the payload for a config.
///
/// Per size class a dedicated RNG stream draws the oversampled pool: `count *
/// 1000` values per mode (capped at 10^6 per class), low mode first. A draw is
/// accepted when it lies strictly inside the acceptance window and its scaled,
/// rounded mass is still strictly inside the scaled window; rounding alone
/// could land exactly on a boundary. The payload then samples `count` masses
/// from the pool without replacement.
///
/// Rounding is half away from zero. Container ids are sequential: size 1 takes
/// `1..=n1`, size 2 continues, size 3 finishes.
pub fn generate_masses(config: &GeneratorConfig) -> Result<Payload> {
    let scale = 20.0 / config.bin_count as f64;
    let mut containers = Vec::with_capacity(config.total());
    let mut next_id = 1u32;
    for size in ContainerSize::ALL {
        let count = config.count_of(size);
        if count == 0 {
            continue;
        }
        let params = config.class_params[size.class_index()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1 + size.class_index() as u64);
        let per_mode = (count * OVERSAMPLE).clamp(count, MAX_DRAWS / 2);
        let mut pool = Vec::with_capacity(2 * per_mode);
        for mode in [params.mode_low, params.mode_high] {
            let normal = Normal::new(mode, params.sigma).expect("sigma validated positive");
            for _ in 0..per_mode {
                let raw = normal.sample(&mut rng);
                if raw <= params.accept_min || raw >= params.accept_max {
                    continue;
                }
                let mass = (raw * scale).round();
                if mass <= params.accept_min * scale || mass >= params.accept_max * scale {
                    continue;
                }
                pool.push(mass);
            }
        }
        if pool.len() < count {
            return Err(Error::Generation {
                size: size.as_u8(),
                draws: 2 * per_mode,
                accepted: pool.len(),
                needed: count,
            });
        }
        for idx in rand::seq::index::sample(&mut rng, pool.len(), count) {
            let mass = pool[idx];
            if mass > f64::from(u32::MAX) {
                return Err(Error::invalid("generated mass", format!("{mass} exceeds u32 range")));
            }
            containers.push(Container::new(next_id, size, mass as u32)?);
            next_id += 1;
        }
    }
    Payload::new(containers)
}

/// Where an instance came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generated { config: GeneratorConfig },
    Reference,
    File,
}

/// A complete problem: aircraft, payload, and origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    pub spec: AircraftSpec,
    pub payload: Payload,
    pub provenance: Provenance,
}

/// Schema version accepted by [`load_instance`].
pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    version: u32,
    spec: AircraftSpec,
    containers: Payload,
    provenance: Option<Provenance>,
}

impl From<Instance> for RawInstance {
    fn from(instance: Instance) -> RawInstance {
        RawInstance {
            version: INSTANCE_SCHEMA_VERSION,
            spec: instance.spec,
            containers: instance.payload,
            provenance: Some(instance.provenance),
        }
    }
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        if raw.version != INSTANCE_SCHEMA_VERSION {
            return Err(Error::invalid(
                "instance document",
                format!("unsupported schema version {} (expected {})", raw.version, INSTANCE_SCHEMA_VERSION),
            ));
        }
        Ok(Instance {
            spec: raw.spec,
            payload: raw.containers,
            provenance: raw.provenance.unwrap_or(Provenance::File),
        })
    }
}

/// The sample aircraft: 20 bins, payload limit 40 t on a 120 t hull, empty CG
/// at -0.05, certified window [-0.1, 0.2] with target 0.1, symmetric linear
/// shear peaking at 22 t amidships.
pub fn reference_aircraft() -> AircraftSpec {
    reference_aircraft_with_bins(20)
}

/// The reference aircraft with a different bin count, for scaling studies.
/// Mass limits stay fixed; the generator's `20/N` rescale keeps payload totals
/// comparable.
pub fn reference_aircraft_with_bins(bin_count: usize) -> AircraftSpec {
    AircraftSpec::new(
        bin_count,
        40_000,
        120_000,
        -0.05,
        -0.1,
        0.2,
        0.1,
        ShearLimit::linear_symmetric(22_000.0).expect("constant is valid"),
    )
    .expect("reference parameters are valid")
}

/// The Airbus sample data set: the reference aircraft and its 30 recorded
/// containers (20 of size 1, 10 of size 2).
pub fn airbus_reference_instance() -> Instance {
    const SIZE1: [u32; 20] = [
        2134, 3455, 1866, 1699, 3500, 3332, 2578, 2315, 1888, 1786, 3277, 2987, 2534, 2111, 2607, 1566,
        1765, 1946, 1732, 1641,
    ];
    const SIZE2: [u32; 10] = [1800, 986, 873, 1764, 1239, 1487, 769, 836, 659, 765];
    let mut containers = Vec::with_capacity(30);
    for (i, &mass) in SIZE1.iter().enumerate() {
        containers.push(Container::new(1 + i as u32, ContainerSize::One, mass).expect("valid row"));
    }
    for (i, &mass) in SIZE2.iter().enumerate() {
        containers.push(Container::new(21 + i as u32, ContainerSize::Two, mass).expect("valid row"));
    }
    Instance {
        spec: reference_aircraft(),
        payload: Payload::new(containers).expect("ids are unique"),
        provenance: Provenance::Reference,
    }
}

/// Generate a full instance: reference aircraft at the config's bin count,
/// generated payload, generated provenance.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    let payload = generate_masses(config)?;
    Ok(Instance {
        spec: reference_aircraft_with_bins(config.bin_count),
        payload,
        provenance: Provenance::Generated { config: config.clone() },
    })
}

/// Parse an instance document, reporting the JSON path of any schema error.
pub fn load_instance(document: &str) -> Result<Instance> {
    let deserializer = &mut serde_json::Deserializer::from_str(document);
    serde_path_to_error::deserialize(deserializer).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Render an instance document; `load_instance` inverts this exactly.
pub fn save_instance(instance: &Instance) -> String {
    let mut out = serde_json::to_string_pretty(instance).expect("instance serialization cannot fail");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_instance_matches_recorded_data() {
        let instance = airbus_reference_instance();
        assert_eq!(instance.spec.bin_count, 20);
        assert_eq!(instance.spec.max_payload, 40_000);
        assert_eq!(instance.spec.empty_mass, 120_000);
        assert_eq!(instance.spec.empty_cg, -0.05);
        assert_eq!(instance.spec.cg_min, -0.1);
        assert_eq!(instance.spec.cg_max, 0.2);
        assert_eq!(instance.spec.cg_target, 0.1);
        assert_eq!(instance.spec.shear_limit.peak, 22_000.0);
        assert_eq!(instance.payload.len(), 30);
        assert_eq!(instance.payload.size_counts(), (20, 10, 0));
        let first = instance.payload.container(0);
        assert_eq!((first.id, first.size, first.mass), (1, ContainerSize::One, 2134));
        let last = instance.payload.container(29);
        assert_eq!((last.id, last.size, last.mass), (30, ContainerSize::Two, 765));
        assert_eq!(instance.payload.total_mass(), 57_897);
        assert_eq!(instance.provenance, Provenance::Reference);
    }

    #[test]
    fn split_sizes_conserves_total() {
        assert_eq!(split_sizes(30), (15, 10, 5));
        assert_eq!(split_sizes(6), (3, 2, 1));
        assert_eq!(split_sizes(31), (16, 10, 5));
        assert_eq!(split_sizes(1), (1, 0, 0));
        assert_eq!(split_sizes(5), (2, 2, 1));
        for n in 1..=10_000 {
            let (n1, n2, n3) = split_sizes(n);
            assert_eq!(n1 + n2 + n3, n, "split of {n}");
            // Parts never stray more than one from their quota.
            assert!((n1 as f64 - n as f64 / 2.0).abs() <= 1.0);
            assert!((n2 as f64 - n as f64 / 3.0).abs() <= 1.0);
            assert!((n3 as f64 - n as f64 / 6.0).abs() <= 1.0);
        }
    }

    #[test]
    fn generated_masses_stay_inside_scaled_windows() {
        for bins in [20usize, 40] {
            let config = GeneratorConfig::new(40, 30, 20, bins, 7).unwrap();
            let payload = generate_masses(&config).unwrap();
            assert_eq!(payload.size_counts(), (40, 30, 20));
            let scale = 20.0 / bins as f64;
            for c in payload.containers() {
                let params = SizeClassParams::default_for(c.size);
                let (lo, hi) = (params.accept_min * scale, params.accept_max * scale);
                assert!(
                    (f64::from(c.mass) > lo) && (f64::from(c.mass) < hi),
                    "mass {} outside ({lo}, {hi}) at N={bins}",
                    c.mass
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let config = GeneratorConfig::new(10, 7, 3, 20, 42).unwrap();
        let a = generate_masses(&config).unwrap();
        let b = generate_masses(&config).unwrap();
        assert_eq!(a, b);
        let other = GeneratorConfig::new(10, 7, 3, 20, 43).unwrap();
        assert_ne!(a, generate_masses(&other).unwrap());
    }

    #[test]
    fn class_streams_are_independent_of_other_counts() {
        // Changing n1 must not disturb the size-2 masses drawn for the same
        // seed, since each class has its own RNG stream.
        let small = GeneratorConfig::new(5, 6, 0, 20, 9).unwrap();
        let large = GeneratorConfig::new(50, 6, 0, 20, 9).unwrap();
        let masses = |payload: &Payload| {
            payload
                .containers()
                .iter()
                .filter(|c| c.size == ContainerSize::Two)
                .map(|c| c.mass)
                .collect::<Vec<_>>()
        };
        let a = generate_masses(&small).unwrap();
        let b = generate_masses(&large).unwrap();
        assert_eq!(masses(&a), masses(&b));
    }

    #[test]
    fn size1_samples_are_bimodal() {
        let config = GeneratorConfig::new(10_000, 0, 0, 20, 1234).unwrap();
        let payload = generate_masses(&config).unwrap();
        let params = SizeClassParams::default_for(ContainerSize::One);
        let near = |mode: f64| {
            payload
                .containers()
                .iter()
                .filter(|c| (f64::from(c.mass) - mode).abs() <= params.sigma)
                .count() as f64
                / payload.len() as f64
        };
        let (low, high) = (near(params.mode_low), near(params.mode_high));
        assert!((0.20..=0.45).contains(&low), "low-mode share {low}");
        assert!((0.20..=0.45).contains(&high), "high-mode share {high}");
    }

    #[test]
    fn unreachable_window_is_a_generation_error() {
        // No integer lies strictly inside (1.2, 1.8) at scale 1, so every
        // draw fails the post-round check and the pool stays empty.
        let params = SizeClassParams::default_for(ContainerSize::One);
        let config = GeneratorConfig::new(0, 0, 5, 20, 1)
            .unwrap()
            .with_class_params([params, params, SizeClassParams::new(1.4, 1.6, 0.001, 1.2, 1.8).unwrap()]);
        match generate_instance(&config) {
            Err(Error::Generation { size, accepted, needed, .. }) => {
                assert_eq!(size, 3);
                assert_eq!(accepted, 0);
                assert_eq!(needed, 5);
            }
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(GeneratorConfig::new(0, 0, 0, 20, 1).is_err());
        assert!(GeneratorConfig::new(1, 0, 0, 1, 1).is_err());
        assert!(SizeClassParams::new(100.0, 200.0, 10.0, 150.0, 250.0).is_err());
        assert!(SizeClassParams::new(100.0, 200.0, -1.0, 50.0, 250.0).is_err());
        assert!(SizeClassParams::new(100.0, 200.0, 10.0, 250.0, 50.0).is_err());
    }

    #[test]
    fn instance_round_trips_through_json() {
        let reference = airbus_reference_instance();
        let text = save_instance(&reference);
        let loaded = load_instance(&text).unwrap();
        assert_eq!(loaded, reference);
        assert_eq!(save_instance(&loaded), text);

        let generated = generate_instance(&GeneratorConfig::new(4, 2, 1, 10, 99).unwrap()).unwrap();
        let loaded = load_instance(&save_instance(&generated)).unwrap();
        assert_eq!(loaded, generated);
        assert!(matches!(loaded.provenance, Provenance::Generated { .. }));
    }

    #[test]
    fn parse_errors_name_the_field_path() {
        let text = save_instance(&airbus_reference_instance());
        let broken = text.replace(r#""mass": 1866"#, r#""weight": 1866"#);
        match load_instance(&broken) {
            Err(Error::Parse { path, .. }) => {
                assert!(path.contains("containers[2]"), "path was {path}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let unversioned = text.replace(r#""version": 1"#, r#""version": 99"#);
        assert!(load_instance(&unversioned).is_err());
    }

    #[test]
    fn missing_provenance_defaults_to_file() {
        let mut value: serde_json::Value = serde_json::from_str(&save_instance(&airbus_reference_instance())).unwrap();
        value.as_object_mut().unwrap().remove("provenance");
        let loaded = load_instance(&value.to_string()).unwrap();
        assert_eq!(loaded.provenance, Provenance::File);
    }
}
