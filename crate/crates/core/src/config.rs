//! Scenario files: typed TOML with dotted-path overrides and a content hash.
//!
//! Every block has physics defaults (the double-well working point), so an
//! empty file is a valid scenario. Overrides are applied to the raw TOML
//! tree before typed deserialization, which keeps unknown-key rejection and
//! type checks working for overridden values too. The hash is a digest of
//! the canonical re-serialization of the resolved config, so any override
//! changes it and cosmetic reformatting of the file does not.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    AnalysisWindows, PlateauSearch, RegimeThresholds, ScalingGroup, SweepSpec,
};
use crate::grid::GridSpec;
use crate::potentials::DuffingParams;
use crate::propagator::{Dealias, EvolutionParams, Mode};
use crate::states::GaussianInit;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianConfig {
    pub m: f64,
    pub b: f64,
    pub c: f64,
    pub a: f64,
    pub omega: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        let p = DuffingParams::default();
        HamiltonianConfig {
            m: p.m,
            b: p.b,
            c: p.c,
            a: p.a,
            omega: p.omega,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub np: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::duffing_default();
        GridConfig {
            nx: g.nx,
            np: g.np,
            x_min: g.x_min,
            x_max: g.x_max,
            p_min: g.p_min,
            p_max: g.p_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub x0: f64,
    pub p0: f64,
    pub var_x: f64,
    /// Momentum variance override for mixed states; minimum-uncertainty
    /// (hbar^2 / (4 var_x)) when absent.
    pub var_p: Option<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            x0: 1.0,
            p0: 0.0,
            var_x: 0.05,
            var_p: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub hbar: f64,
    pub d: f64,
    pub mode: Mode,
    pub record_every: usize,
    pub dealias: Dealias,
    /// Time step, directly or as a fraction of the drive period. Giving
    /// both is an error; giving neither means 2048 steps per period.
    pub dt: Option<f64>,
    pub steps_per_period: Option<u32>,
    /// Horizon, directly or in drive periods. Same exclusivity rule;
    /// the default is 13 periods.
    pub t_final: Option<f64>,
    pub t_final_periods: Option<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            hbar: 0.1,
            d: 5e-4,
            mode: Mode::Quantum,
            record_every: 64,
            dealias: Dealias::Auto,
            dt: None,
            steps_per_period: None,
            t_final: None,
            t_final_periods: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; the --out flag overrides it.
    pub dir: String,
    /// Write the final field as a binary checkpoint next to the CSV.
    pub checkpoint_final: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".to_string(),
            checkpoint_final: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub x0: f64,
    pub p0: f64,
    pub t_total: f64,
    pub renorm_interval: f64,
    pub steps_per_period: u32,
    /// Average over the 16-point lattice on the initial Gaussian's
    /// uncertainty ellipse instead of the single center trajectory.
    pub ensemble: bool,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            x0: 1.0,
            p0: 0.0,
            t_total: 2000.0,
            renorm_interval: 0.5,
            steps_per_period: 4096,
            ensemble: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupConfig {
    pub zeta0: f64,
    /// (hbar, D) pairs; each must satisfy hbar^2 / D = zeta0.
    pub members: Vec<[f64; 2]>,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            zeta0: 0.0,
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub groups: Vec<GroupConfig>,
    /// Early window (drive periods) where the composite-parameter collapse
    /// is measured.
    pub scale_window_periods: [f64; 2],
    /// Late window (drive periods) where curves within a group separate.
    pub late_window_periods: [f64; 2],
    /// Comparison time (drive periods) for group purity medians.
    pub compare_time_periods: f64,
    /// Plateau search range in absolute time; whole run when absent.
    pub plateau_window: Option<[f64; 2]>,
    /// Within-group collapse values at or below this count as collapsed.
    pub collapse_threshold: f64,
    pub regime_semi: f64,
    pub regime_quantum: f64,
    /// Worker threads for sweep members; 0 means one per available core.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            groups: Vec::new(),
            scale_window_periods: [0.0, 10.0],
            late_window_periods: [15.0, 20.0],
            compare_time_periods: 10.0,
            plateau_window: None,
            collapse_threshold: 0.1,
            regime_semi: 10.0,
            regime_quantum: 100.0,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub hamiltonian: HamiltonianConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub evolution: EvolutionConfig,
    pub output: OutputConfig,
    pub lyapunov: LyapunovConfig,
    pub sweep: SweepConfig,
}

impl ScenarioConfig {
    pub fn duffing(&self) -> DuffingParams {
        let h = &self.hamiltonian;
        DuffingParams {
            m: h.m,
            b: h.b,
            c: h.c,
            a: h.a,
            omega: h.omega,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            nx: g.nx,
            np: g.np,
            x_min: g.x_min,
            x_max: g.x_max,
            p_min: g.p_min,
            p_max: g.p_max,
        }
    }

    pub fn gaussian(&self) -> GaussianInit {
        let i = &self.initial;
        GaussianInit {
            x0: i.x0,
            p0: i.p0,
            var_x: i.var_x,
            var_p: i.var_p,
        }
    }

    fn resolve_dt(&self) -> Result<f64> {
        let period = self.duffing().drive_period();
        match (self.evolution.dt, self.evolution.steps_per_period) {
            (Some(_), Some(_)) => Err(Error::Config(
                "evolution.dt and evolution.steps_per_period are exclusive; \
                 set one"
                    .to_string(),
            )),
            (Some(dt), None) => Ok(dt),
            (None, Some(n)) if n > 0 => Ok(period / n as f64),
            (None, Some(n)) => Err(Error::Config(format!(
                "evolution.steps_per_period must be >= 1, got {n}"
            ))),
            (None, None) => Ok(period / 2048.0),
        }
    }

    fn resolve_t_final(&self) -> Result<f64> {
        let period = self.duffing().drive_period();
        match (self.evolution.t_final, self.evolution.t_final_periods) {
            (Some(_), Some(_)) => Err(Error::Config(
                "evolution.t_final and evolution.t_final_periods are \
                 exclusive; set one"
                    .to_string(),
            )),
            (Some(t), None) => Ok(t),
            (None, Some(p)) if p >= 0.0 => Ok(period * p),
            (None, Some(p)) => Err(Error::Config(format!(
                "evolution.t_final_periods must be >= 0, got {p}"
            ))),
            (None, None) => Ok(period * 13.0),
        }
    }

    pub fn evolution_params(&self) -> Result<EvolutionParams> {
        let evo = EvolutionParams {
            hbar: self.evolution.hbar,
            d: self.evolution.d,
            dt: self.resolve_dt()?,
            t_final: self.resolve_t_final()?,
            mode: self.evolution.mode,
            record_every: self.evolution.record_every,
            dealias: self.evolution.dealias,
        };
        evo.validate()?;
        Ok(evo)
    }

    pub fn regime_thresholds(&self) -> RegimeThresholds {
        RegimeThresholds {
            semi: self.sweep.regime_semi,
            quantum: self.sweep.regime_quantum,
        }
    }

    /// Sweep plan: groups, shared evolution settings, worker bound. The
    /// sweep ignores `evolution.hbar`, `evolution.d`, and `evolution.mode`
    /// (members define the first two; sweeps are quantum-mode).
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        if self.sweep.groups.is_empty() {
            return Err(Error::Config(
                "sweep requires at least one [[sweep.groups]] block".to_string(),
            ));
        }
        let thresholds = self.regime_thresholds();
        let groups = self
            .sweep
            .groups
            .iter()
            .map(|g| {
                ScalingGroup::new(
                    g.zeta0,
                    g.members.iter().map(|m| (m[0], m[1])).collect(),
                    &thresholds,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepSpec {
            params: self.duffing(),
            grid: self.grid_spec(),
            init: self.gaussian(),
            dt: self.resolve_dt()?,
            t_final: self.resolve_t_final()?,
            record_every: self.evolution.record_every,
            dealias: self.evolution.dealias,
            groups,
            workers: self.sweep.workers,
            config_hash: self.content_hash()?,
        })
    }

    pub fn analysis_windows(&self) -> Result<AnalysisWindows> {
        let period = self.duffing().drive_period();
        let t_final = self.resolve_t_final()?;
        let (plo, phi) = match self.sweep.plateau_window {
            Some([lo, hi]) => (lo, hi),
            None => (0.0, t_final),
        };
        Ok(AnalysisWindows {
            scale: (
                self.sweep.scale_window_periods[0] * period,
                self.sweep.scale_window_periods[1] * period,
            ),
            late: (
                self.sweep.late_window_periods[0] * period,
                self.sweep.late_window_periods[1] * period,
            ),
            compare_time: self.sweep.compare_time_periods * period,
            plateau: PlateauSearch::over(plo, phi, period),
        })
    }

    /// Canonical serialization: struct-order TOML of the resolved config.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("serialize config: {e}")))
    }

    /// First 16 hex digits of the canonical form's SHA-256.
    pub fn content_hash(&self) -> Result<String> {
        let canon = self.canonical_toml()?;
        let digest = Sha256::digest(canon.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn parse_toml(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Parse(format!("config is not valid TOML: {e}")))
}

/// Parse the value half of a `--set key=value` override. Values are read
/// with TOML semantics (so `0.1` is a float, `[1, 2]` an array, `"x"` a
/// string); anything that fails to parse is taken as a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(tree: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let mut node = tree;
    for seg in &segments[..segments.len() - 1] {
        node = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(format!(
                    "override key '{key}': '{seg}' is not a table"
                ))
            })?;
    }
    node.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Parse scenario text, apply `key=value` overrides, and type-check.
pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut tree = parse_toml(text)?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{item}' is not of the form key=value"))
        })?;
        apply_override(&mut tree, key.trim(), parse_override_value(raw.trim()))?;
    }
    let config: ScenarioConfig = toml::Value::Table(tree)
        .try_into()
        .map_err(|e| Error::Config(format!("config: {e}")))?;
    Ok(config)
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    from_toml_with_overrides(&text, overrides)
}
