//! Scenario configuration: a single JSON document with a fixed schema.
//! Unknown keys are rejected at parse time; [`validate`] checks the values
//! against the preconditions of the routines the scenario will call.

use std::fmt;
use std::path::{Path, PathBuf};

use emergence::dynamics::{PotentialKind, PotentialSpec};
use emergence::grid::{gaussian_packet, Grid, PacketParams};
use emergence::manybody::Symmetry;
use emergence::stats::Statistics;
use serde::{Deserialize, Serialize};

use crate::scenarios::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub packets: Vec<PacketConfig>,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default)]
    pub open_system: Option<OpenSystemConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub statistics: Option<StatisticsConfig>,
    #[serde(default)]
    pub classical: Option<ClassicalConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    pub output: OutputConfig,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    Free,
    Harmonic,
    Quartic,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialName,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Values on the scenario grid, for `table`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "one_usize")]
    pub record_every: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSystemConfig {
    pub decoherence_rate: f64,
    #[serde(default)]
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_eps")]
    pub overlap_eps: f64,
    /// Defaults to a tenth of the grid length.
    #[serde(default)]
    pub narrowness: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_resolution")]
    pub scan_resolution: usize,
}

fn default_eps() -> f64 {
    emergence::decompose::DEFAULT_OVERLAP_EPS
}

fn default_delta() -> f64 {
    0.01
}

fn default_resolution() -> usize {
    64
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            overlap_eps: default_eps(),
            narrowness: None,
            delta: default_delta(),
            scan_resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryName {
    Bosonic,
    Fermionic,
}

impl From<SymmetryName> for Symmetry {
    fn from(s: SymmetryName) -> Self {
        match s {
            SymmetryName::Bosonic => Symmetry::Bosonic,
            SymmetryName::Fermionic => Symmetry::Fermionic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingName {
    FermiDirac,
    BoseEinstein,
    MaxwellBoltzmann,
}

impl From<CountingName> for Statistics {
    fn from(s: CountingName) -> Self {
        match s {
            CountingName::FermiDirac => Statistics::FermiDirac,
            CountingName::BoseEinstein => Statistics::BoseEinstein,
            CountingName::MaxwellBoltzmann => Statistics::MaxwellBoltzmann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticsConfig {
    #[serde(default = "default_symmetry")]
    pub symmetry: SymmetryName,
    #[serde(default = "two")]
    pub n_particles: usize,
    #[serde(default = "two")]
    pub n_modes: usize,
    #[serde(default = "all_counting")]
    pub counting: Vec<CountingName>,
    /// Packet separations of the reduction ladder, ascending.
    #[serde(default)]
    pub separations: Vec<f64>,
}

fn default_symmetry() -> SymmetryName {
    SymmetryName::Bosonic
}

fn two() -> usize {
    2
}

fn all_counting() -> Vec<CountingName> {
    vec![
        CountingName::FermiDirac,
        CountingName::BoseEinstein,
        CountingName::MaxwellBoltzmann,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    /// One `[x, p]` pair per particle.
    pub seed: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug)]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ParseError> {
    serde_json::from_str(text).map_err(|e| ParseError {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError {
        message: format!("{}: {e}", path.display()),
        line: 0,
        column: 0,
    })?;
    parse(&text)
}

impl ScenarioConfig {
    pub fn grid(&self) -> emergence::Result<Grid<f64>> {
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.n_points)
    }

    pub fn potential(&self) -> emergence::Result<PotentialSpec<f64>> {
        let Some(p) = &self.potential else {
            return PotentialSpec::free(1.0);
        };
        let kind = match p.kind {
            PotentialName::Free => PotentialKind::Free,
            PotentialName::Harmonic => PotentialKind::Harmonic {
                omega: p.omega.unwrap_or(f64::NAN),
            },
            PotentialName::Quartic => PotentialKind::Quartic {
                lambda: p.lambda.unwrap_or(f64::NAN),
            },
            PotentialName::Table => PotentialKind::Table {
                grid: self.grid()?,
                values: p.values.clone().unwrap_or_default(),
            },
        };
        PotentialSpec::new(kind, p.mass)
    }

    pub fn narrowness(&self) -> f64 {
        self.thresholds
            .narrowness
            .unwrap_or(0.1 * (self.grid.x_max - self.grid.x_min))
    }

    pub fn samples(&self, default: usize) -> usize {
        self.sweep.map_or(default, |s| s.samples)
    }

    pub fn symmetry(&self) -> Symmetry {
        self.statistics
            .as_ref()
            .map_or(Symmetry::Bosonic, |s| s.symmetry.into())
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn add(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            key: key.into(),
            message: message.into(),
        });
    }

    fn require<T>(&mut self, value: &Option<T>, key: &str, scenario: &str) {
        if value.is_none() {
            self.add(key, format!("section required by scenario `{scenario}`"));
        }
    }
}

/// Every violation of the scenario's preconditions; empty means runnable.
pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut r = Report(Vec::new());
    let scenario = Scenario::from_name(&cfg.scenario);
    if scenario.is_none() {
        r.add(
            "scenario",
            format!("unknown scenario `{}`; see list-scenarios", cfg.scenario),
        );
    }

    let g = cfg.grid;
    if !(g.x_min < g.x_max) || !g.x_min.is_finite() || !g.x_max.is_finite() {
        r.add("grid.x_max", "must be finite and exceed grid.x_min");
    }
    if !g.n_points.is_power_of_two() || g.n_points < 8 {
        r.add(
            "grid.n_points",
            format!("{} is not a power of two >= 8", g.n_points),
        );
    }
    let grid = cfg.grid().ok();

    if let Some(grid) = &grid {
        for (i, p) in cfg.packets.iter().enumerate() {
            if !(p.x0.is_finite() && p.p0.is_finite() && p.sigma.is_finite()) {
                r.add(format!("packets[{i}]"), "values must be finite");
                continue;
            }
            if p.sigma < 4.0 * grid.dx() {
                r.add(
                    format!("packets[{i}].sigma"),
                    format!("{} is below 4 dx = {}", p.sigma, 4.0 * grid.dx()),
                );
            } else if let Err(e) = gaussian_packet(grid, &PacketParams::new(p.x0, p.p0, p.sigma)) {
                r.add(format!("packets[{i}].x0"), e.to_string());
            }
        }
    }

    if let Some(p) = &cfg.potential {
        if !(p.mass > 0.0) || !p.mass.is_finite() {
            r.add("potential.mass", "must be positive");
        }
        let need = |r: &mut Report, v: &Option<f64>, key: &str| match v {
            None => r.add(key, format!("required for potential kind {:?}", p.kind)),
            Some(x) if !x.is_finite() => r.add(key, "must be finite"),
            _ => {}
        };
        match p.kind {
            PotentialName::Harmonic => need(&mut r, &p.omega, "potential.omega"),
            PotentialName::Quartic => need(&mut r, &p.lambda, "potential.lambda"),
            PotentialName::Table => match &p.values {
                None => r.add("potential.values", "required for a table potential"),
                Some(v) if v.len() != g.n_points => r.add(
                    "potential.values",
                    format!("{} values for {} grid points", v.len(), g.n_points),
                ),
                Some(v) if v.iter().any(|x| !x.is_finite()) => {
                    r.add("potential.values", "must be finite")
                }
                _ => {}
            },
            PotentialName::Free => {}
        }
    }

    if let Some(d) = &cfg.dynamics {
        if !(d.dt > 0.0) || !d.dt.is_finite() {
            r.add("dynamics.dt", "must be positive");
        }
        if d.steps == Some(0) {
            r.add("dynamics.steps", "must be positive");
        }
        if d.record_every == 0 {
            r.add("dynamics.record_every", "must be positive");
        }
    }

    if let Some(o) = &cfg.open_system {
        if !(o.decoherence_rate >= 0.0) {
            r.add("open_system.decoherence_rate", "must be non-negative");
        }
        if !(o.damping >= 0.0) {
            r.add("open_system.damping", "must be non-negative");
        }
    }

    let t = &cfg.thresholds;
    if !(t.overlap_eps > 0.0 && t.overlap_eps < 1.0) {
        r.add("thresholds.overlap_eps", "must lie in (0, 1)");
    }
    if !(t.delta > 0.0 && t.delta < 1.0) {
        r.add("thresholds.delta", "must lie in (0, 1)");
    }
    if !(cfg.narrowness() > 0.0) {
        r.add("thresholds.narrowness", "must be positive");
    }
    if t.scan_resolution < 16 {
        r.add("thresholds.scan_resolution", "must be at least 16");
    }

    if let Some(s) = &cfg.statistics {
        if s.n_particles > emergence::stats::MAX_PARTICLES {
            r.add("statistics.n_particles", "at most 6 for exhaustive enumeration");
        }
        if s.n_modes == 0 || s.n_modes > emergence::stats::MAX_MODES {
            r.add("statistics.n_modes", "must lie in 1..=8");
        }
        if s.counting.contains(&CountingName::FermiDirac) && s.n_particles > s.n_modes {
            r.add(
                "statistics.n_particles",
                format!(
                    "infeasible: {} fermions cannot occupy {} modes",
                    s.n_particles, s.n_modes
                ),
            );
        }
        if s.separations.iter().any(|d| !(*d > 0.0)) {
            r.add("statistics.separations", "must be positive");
        }
        if s.separations.windows(2).any(|w| w[1] <= w[0]) {
            r.add("statistics.separations", "must be strictly increasing");
        }
    }

    if let Some(c) = &cfg.classical {
        if c.seed.is_empty() || c.seed.len() > emergence::classical::MAX_CLASSICAL_PARTIES {
            r.add("classical.seed", "needs 1 to 6 particles");
        }
        if c.seed.iter().flatten().any(|v| !v.is_finite()) {
            r.add("classical.seed", "coordinates must be finite");
        }
    }

    if let Some(s) = cfg.sweep {
        if s.samples == 0 {
            r.add("sweep.samples", "must be positive");
        }
    }

    if let Some(scenario) = scenario {
        scenario_requirements(cfg, scenario, &mut r);
    }
    r.0
}

fn scenario_requirements(cfg: &ScenarioConfig, scenario: Scenario, r: &mut Report) {
    let name = scenario.name();
    let packets = |r: &mut Report, n: usize| {
        if cfg.packets.len() != n {
            r.add(
                "packets",
                format!("scenario `{name}` needs exactly {n} packets, got {}", cfg.packets.len()),
            );
        }
    };
    let kind = cfg.potential.as_ref().map(|p| p.kind);
    match scenario {
        Scenario::ReducedEquality | Scenario::WeakDiscernibility => {
            if cfg.grid.n_points > 64 {
                r.add("grid.n_points", "at most 64 for dense many-party sweeps");
            }
        }
        Scenario::ExchangeTerm | Scenario::Epr => {
            packets(r, 2);
            if cfg.grid.n_points > 256 {
                r.add("grid.n_points", "at most 256 for dense two-party observables");
            }
        }
        Scenario::Ehrenfest => {
            r.require(&cfg.dynamics, "dynamics", name);
            r.require(&cfg.potential, "potential", name);
            if cfg.packets.is_empty() {
                r.add("packets", "at least one packet required");
            }
            let anharmonic = matches!(kind, Some(PotentialName::Quartic | PotentialName::Table));
            if anharmonic
                && (cfg.packets.len() < 2 || cfg.packets.windows(2).any(|w| w[1].sigma <= w[0].sigma))
            {
                r.add(
                    "packets",
                    "anharmonic runs need a width ladder: at least 2 packets with increasing sigma",
                );
            }
        }
        Scenario::FreeSpread => {
            packets(r, 1);
            r.require(&cfg.dynamics, "dynamics", name);
            if kind.is_some_and(|k| k != PotentialName::Free) {
                r.add("potential.kind", "free-spread needs the free potential");
            }
        }
        Scenario::Harmonic => {
            packets(r, 1);
            r.require(&cfg.dynamics, "dynamics", name);
            if kind != Some(PotentialName::Harmonic) {
                r.add("potential.kind", "harmonic scenario needs a harmonic potential");
            }
        }
        Scenario::DecohereEmerge => {
            packets(r, 2);
            r.require(&cfg.dynamics, "dynamics", name);
            r.require(&cfg.open_system, "open_system", name);
            if let Some(o) = &cfg.open_system {
                if !(o.decoherence_rate > 0.0) {
                    r.add("open_system.decoherence_rate", "must be positive for decohere-emerge");
                }
            }
            if cfg.grid.n_points > 256 {
                r.add("grid.n_points", "at most 256 for density-matrix evolution");
            }
            if cfg.packets.len() == 2 && cfg.packets[0].x0 == cfg.packets[1].x0 {
                r.add("packets", "packet centers must differ");
            }
        }
        Scenario::ParticleCriterion => {
            packets(r, 2);
            if cfg.grid.n_points > 256 {
                r.add("grid.n_points", "at most 256 for the Schmidt decomposition");
            }
        }
        Scenario::StatisticsReduction => {
            r.require(&cfg.statistics, "statistics", name);
            packets(r, 1);
            if cfg.statistics.as_ref().is_some_and(|s| s.separations.len() < 2) {
                r.add("statistics.separations", "ladder needs at least 2 separations");
            }
            if cfg.grid.n_points > 256 {
                r.add("grid.n_points", "at most 256 for two-party detection tables");
            }
        }
        Scenario::ClassicalPermutation => {
            r.require(&cfg.classical, "classical", name);
            r.require(&cfg.dynamics, "dynamics", name);
        }
    }
    if matches!(
        scenario,
        Scenario::Ehrenfest | Scenario::FreeSpread | Scenario::Harmonic | Scenario::ClassicalPermutation
    ) && cfg.dynamics.is_some_and(|d| d.steps.is_none())
    {
        r.add("dynamics.steps", format!("required by scenario `{name}`"));
    }
}
