//! Parameter studies over (hbar, D): scaling groups sharing zeta0 = hbar^2/D,
//! the entropy-collapse metric, metastable-plateau fits, and regime labels.
//!
//! A sweep runs every member from the same Gaussian initial state on a shared
//! grid; only hbar (through sigma_p and the cubic kernel) and D vary. Members
//! are independent, so they run on a bounded worker pool; results are written
//! by member index, which keeps sweeps bit-reproducible at any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};
use crate::potentials::DuffingParams;
use crate::propagator::{evolve, Dealias, EvolutionParams, Mode};
use crate::states::{gaussian_wigner, GaussianInit};

/// Composite-parameter regimes. Boundaries are empirical: zeta0 near 10 is
/// where first-order quantum corrections stop being small, and well above
/// that the metastable-plateau picture itself breaks down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "I")]
    Classical,
    #[serde(rename = "II")]
    SemiClassical,
    #[serde(rename = "III")]
    Quantum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    /// zeta0 at or above this is at least semi-classical (regime II).
    pub semi: f64,
    /// zeta0 at or above this is fully quantum (regime III).
    pub quantum: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            semi: 10.0,
            quantum: 100.0,
        }
    }
}

pub fn classify_regime(zeta0: f64, thresholds: &RegimeThresholds) -> Result<Regime> {
    if !(zeta0 > 0.0) || !zeta0.is_finite() {
        return Err(Error::Config(format!(
            "zeta0 must be finite and positive, got {zeta0}"
        )));
    }
    if !(thresholds.semi > 0.0) || !(thresholds.quantum > thresholds.semi) {
        return Err(Error::Config(format!(
            "regime thresholds must satisfy 0 < semi < quantum, got {thresholds:?}"
        )));
    }
    Ok(if zeta0 < thresholds.semi {
        Regime::Classical
    } else if zeta0 < thresholds.quantum {
        Regime::SemiClassical
    } else {
        Regime::Quantum
    })
}

/// A zeta0 value with the (hbar, D) pairs that share it.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingGroup {
    pub zeta0: f64,
    /// (hbar, D) pairs, each with hbar^2 / D = zeta0.
    pub members: Vec<(f64, f64)>,
    pub label: Regime,
}

impl ScalingGroup {
    pub fn new(
        zeta0: f64,
        members: Vec<(f64, f64)>,
        thresholds: &RegimeThresholds,
    ) -> Result<Self> {
        let label = classify_regime(zeta0, thresholds)?;
        if members.is_empty() {
            return Err(Error::Config(format!(
                "scaling group zeta0 = {zeta0} has no members"
            )));
        }
        for &(hbar, d) in &members {
            if !(hbar > 0.0) || !(d > 0.0) {
                return Err(Error::Config(format!(
                    "scaling group member (hbar = {hbar}, D = {d}) must have \
                     hbar > 0 and D > 0"
                )));
            }
            let implied = hbar * hbar / d;
            if (implied - zeta0).abs() > 1e-9 * zeta0 {
                return Err(Error::Config(format!(
                    "member (hbar = {hbar}, D = {d}) gives hbar^2/D = {implied}, \
                     not the group's zeta0 = {zeta0}"
                )));
            }
        }
        Ok(ScalingGroup {
            zeta0,
            members,
            label,
        })
    }
}

/// Everything a sweep shares across members.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub params: DuffingParams,
    pub grid: GridSpec,
    pub init: GaussianInit,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub dealias: Dealias,
    pub groups: Vec<ScalingGroup>,
    /// Worker threads for the member pool; 0 uses the global default.
    pub workers: usize,
    /// Provenance tag copied into results (configuration digest or empty).
    pub config_hash: String,
}

/// One member's evolution. `error` is set when the run aborted; `series`
/// then holds whatever was recorded before the failure (rates unfilled).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub group: usize,
    pub hbar: f64,
    pub d: f64,
    pub zeta0: f64,
    pub series: Vec<DiagnosticsRecord>,
    pub error: Option<String>,
}

impl SweepRun {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub groups: Vec<ScalingGroup>,
    pub runs: Vec<SweepRun>,
    pub params: DuffingParams,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub config_hash: String,
}

impl SweepResult {
    pub fn group_runs(&self, group: usize) -> Vec<&SweepRun> {
        self.runs.iter().filter(|r| r.group == group).collect()
    }

    pub fn failed(&self) -> Vec<&SweepRun> {
        self.runs.iter().filter(|r| !r.ok()).collect()
    }
}

/// Run every group member (quantum mode) from the shared initial state.
/// Member failures become per-run error markers, not a sweep failure;
/// spec-level problems (bad group, bad grid, misaligned dt) fail up front.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.params.validate()?;
    if spec.groups.is_empty() {
        return Err(Error::Config("sweep has no scaling groups".to_string()));
    }
    let thresholds = RegimeThresholds::default();
    for g in &spec.groups {
        // Rebuild to re-check the invariant on whatever the caller constructed.
        ScalingGroup::new(g.zeta0, g.members.clone(), &thresholds)?;
    }
    let grid = Grid::shared(spec.grid)?;

    let mut tasks = Vec::new();
    for (gi, g) in spec.groups.iter().enumerate() {
        for &(hbar, d) in &g.members {
            tasks.push((gi, hbar, d, g.zeta0));
        }
    }
    // Validate every member's evolution parameters before spending any time.
    for &(_, hbar, d, _) in &tasks {
        member_params(spec, hbar, d).validate()?;
    }

    let run_one = |&(gi, hbar, d, zeta0): &(usize, f64, f64, f64)| -> SweepRun {
        let evo = member_params(spec, hbar, d);
        let mut series = Vec::new();
        let outcome = gaussian_wigner(&spec.init, hbar, &grid).and_then(|field| {
            evolve(&field, &spec.params, &evo, |rec, _| series.push(*rec))
        });
        match outcome {
            Ok(out) => SweepRun {
                group: gi,
                hbar,
                d,
                zeta0,
                series: out.records,
                error: None,
            },
            Err(e) => SweepRun {
                group: gi,
                hbar,
                d,
                zeta0,
                series,
                error: Some(e.to_string()),
            },
        }
    };

    let runs: Vec<SweepRun> = if spec.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run_one).collect())
    } else {
        tasks.par_iter().map(run_one).collect()
    };

    Ok(SweepResult {
        groups: spec.groups.clone(),
        runs,
        params: spec.params,
        grid: spec.grid,
        dt: spec.dt,
        t_final: spec.t_final,
        record_every: spec.record_every,
        config_hash: spec.config_hash.clone(),
    })
}

fn member_params(spec: &SweepSpec, hbar: f64, d: f64) -> EvolutionParams {
    EvolutionParams {
        hbar,
        d,
        dt: spec.dt,
        t_final: spec.t_final,
        mode: Mode::Quantum,
        record_every: spec.record_every,
        dealias: spec.dealias,
    }
}

/// S(t) = S2(t) - S2(0), the curve the zeta0 scaling is claimed for.
fn entropy_curve(series: &[DiagnosticsRecord]) -> Vec<f64> {
    let s0 = series.first().map(|r| r.s2).unwrap_or(0.0);
    series.iter().map(|r| r.s2 - s0).collect()
}

fn check_common_times(series: &[&[DiagnosticsRecord]]) -> Result<()> {
    let first = series[0];
    for other in &series[1..] {
        if other.len() != first.len() {
            return Err(Error::Alignment(format!(
                "series lengths differ: {} vs {}",
                first.len(),
                other.len()
            )));
        }
        for (a, b) in first.iter().zip(other.iter()) {
            if (a.t - b.t).abs() > 1e-12 * a.t.abs().max(1.0) {
                return Err(Error::Alignment(format!(
                    "sample times differ: {} vs {}",
                    a.t, b.t
                )));
            }
        }
    }
    Ok(())
}

/// max over t in `window` and over series pairs of |S_a(t) - S_b(t)|.
pub fn collapse_metric(series: &[&[DiagnosticsRecord]], window: (f64, f64)) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(
            "collapse metric needs at least two series".to_string(),
        ));
    }
    check_common_times(series)?;
    let curves: Vec<Vec<f64>> = series.iter().map(|s| entropy_curve(s)).collect();
    let mut worst = 0.0f64;
    for (k, rec) in series[0].iter().enumerate() {
        if rec.t < window.0 || rec.t > window.1 {
            continue;
        }
        for i in 0..curves.len() {
            for j in i + 1..curves.len() {
                worst = worst.max((curves[i][k] - curves[j][k]).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest pointwise |S_a(t) - S_b(t)| between two runs over the window.
pub fn pair_deviation(
    a: &[DiagnosticsRecord],
    b: &[DiagnosticsRecord],
    window: (f64, f64),
) -> Result<f64> {
    collapse_metric(&[a, b], window)
}

/// Plateau search policy for [`fit_metastable`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlateauSearch {
    /// Search only samples with t in this range (skip the transient).
    pub t_lo: f64,
    pub t_hi: f64,
    /// Reject plateaus shorter than this.
    pub min_window: f64,
    /// Moving-average width before taking slopes; one drive period removes
    /// the within-period oscillation of chi^2.
    pub smooth_width: f64,
    /// Plateau admits |d ln chi^2 / dt| below this (per unit time).
    pub max_log_slope: f64,
}

impl PlateauSearch {
    pub fn over(t_lo: f64, t_hi: f64, drive_period: f64) -> Self {
        PlateauSearch {
            t_lo,
            t_hi,
            min_window: 2.0 * drive_period,
            smooth_width: drive_period,
            max_log_slope: 0.1,
        }
    }
}

/// Metastable structure fit: the chi^2 plateau and the rate it implies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetastableFit {
    /// Time-average of chi^2_p over the detected plateau.
    pub chi2_star: f64,
    /// 2 D chi^2_star, the entropy-production rate the plateau sustains.
    pub lambda_fit: f64,
    /// First-order composite-parameter coefficient; filled by the cross-run
    /// regression in [`fit_a_coeff`], absent for a single-series fit.
    pub a_coeff: Option<f64>,
    pub window: (f64, f64),
}

fn moving_average(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Find the longest near-flat stretch of chi^2_p inside the search range and
/// average it. `None` when nothing stays flat for `min_window` (the expected
/// outcome deep in the quantum regime, where no metastable state forms).
pub fn fit_metastable(
    series: &[DiagnosticsRecord],
    d: f64,
    search: &PlateauSearch,
) -> Result<Option<MetastableFit>> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "plateau fit needs at least 3 samples, got {}",
            series.len()
        )));
    }
    let dt_s = series[1].t - series[0].t;
    if !(dt_s > 0.0) {
        return Err(Error::Config("series times must increase".to_string()));
    }
    for w in series.windows(2) {
        if ((w[1].t - w[0].t) - dt_s).abs() > 1e-9 * dt_s {
            return Err(Error::Alignment(
                "plateau fit requires uniform sampling".to_string(),
            ));
        }
    }
    let chi: Vec<f64> = series.iter().map(|r| r.chi2_p).collect();
    if chi.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Domain(
            "chi^2 must be positive for a log-slope fit".to_string(),
        ));
    }
    let half = ((search.smooth_width / dt_s / 2.0).round() as usize).max(1);
    let smooth = moving_average(&chi, half);

    // Centered log-slope; endpoints get one-sided differences.
    let n = chi.len();
    let slope = |i: usize| -> f64 {
        let (a, b, span) = if i == 0 {
            (0, 1, dt_s)
        } else if i == n - 1 {
            (n - 2, n - 1, dt_s)
        } else {
            (i - 1, i + 1, 2.0 * dt_s)
        };
        (smooth[b].ln() - smooth[a].ln()) / span
    };

    let flat: Vec<bool> = (0..n)
        .map(|i| {
            let t = series[i].t;
            t >= search.t_lo && t <= search.t_hi && slope(i).abs() < search.max_log_slope
        })
        .collect();

    // Longest contiguous flat stretch.
    let (mut best, mut cur): (Option<(usize, usize)>, Option<usize>) = (None, None);
    for i in 0..=n {
        match (i < n && flat[i], cur) {
            (true, None) => cur = Some(i),
            (false, Some(start)) => {
                let cand = (start, i - 1);
                if best.is_none_or(|(s, e)| cand.1 - cand.0 > e - s) {
                    best = Some(cand);
                }
                cur = None;
            }
            _ => {}
        }
    }
    let Some((s, e)) = best else {
        return Ok(None);
    };
    if (series[e].t - series[s].t) < search.min_window {
        return Ok(None);
    }
    let chi2_star = chi[s..=e].iter().sum::<f64>() / (e - s + 1) as f64;
    Ok(Some(MetastableFit {
        chi2_star,
        lambda_fit: 2.0 * d * chi2_star,
        a_coeff: None,
        window: (series[s].t, series[e].t),
    }))
}

/// Cross-run regression lambda_fit(zeta0) = lambda0 (1 + a zeta0 / 4).
#[derive(Debug, Clone, Serialize)]
pub struct ACoeffFit {
    pub lambda0: f64,
    pub a_coeff: f64,
    /// (zeta0, lambda_fit) points that entered the regression.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through (zeta0, lambda_fit); the intercept is the bare
/// rate, the slope divided by lambda0/4 is the first-order coefficient.
/// Needs two distinct zeta0 values and a nonzero intercept.
pub fn fit_a_coeff(points: &[(f64, f64)]) -> Result<ACoeffFit> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "coefficient fit needs >= 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let sxy = points
        .iter()
        .map(|p| (p.0 - mx) * (p.1 - my))
        .sum::<f64>();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "coefficient fit needs at least two distinct zeta0 values".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let lambda0 = my - slope * mx;
    if lambda0.abs() < 1e-12 {
        return Err(Error::Domain(
            "coefficient fit intercept is zero; a is undefined".to_string(),
        ));
    }
    Ok(ACoeffFit {
        lambda0,
        a_coeff: 4.0 * slope / lambda0,
        points: points.to_vec(),
    })
}

/// Analysis windows; times are absolute (same units as the series).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnalysisWindows {
    /// Early window where zeta0 scaling is expected to hold.
    pub scale: (f64, f64),
    /// Late window where members of one group separate by hbar.
    pub late: (f64, f64),
    /// Time at which group purities are compared.
    pub compare_time: f64,
    pub plateau: PlateauSearch,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub zeta0: f64,
    pub regime: Regime,
    pub members: Vec<(f64, f64)>,
    /// Within-group collapse metric over the scale window.
    pub collapse: f64,
    /// Same metric over the late window.
    pub late_spread: f64,
    /// Median over members of purity(t*) / purity(0).
    pub median_normalized_purity: f64,
    /// One per member, in group order; `None` when no plateau was found.
    pub fits: Vec<Option<MetastableFit>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossPair {
    pub group_a: usize,
    pub group_b: usize,
    /// Smallest pairwise deviation between members of the two groups over
    /// the scale window; separation holds when this beats every
    /// within-group collapse value.
    pub min_deviation: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub windows: AnalysisWindows,
    pub groups: Vec<GroupSummary>,
    pub cross_pairs: Vec<CrossPair>,
    pub a_fit: Option<ACoeffFit>,
    /// Members that aborted, as (hbar, D, message).
    pub failures: Vec<(f64, f64, String)>,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn purity_at(series: &[DiagnosticsRecord], t: f64) -> Result<f64> {
    let (k, rec) = series
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.t - t).abs().partial_cmp(&(b.1.t - t).abs()).unwrap()
        })
        .ok_or_else(|| Error::InsufficientData("empty series".to_string()))?;
    let dt_s = if series.len() > 1 {
        series[1].t - series[0].t
    } else {
        f64::INFINITY
    };
    if (rec.t - t).abs() > 0.5 * dt_s + 1e-12 {
        return Err(Error::Domain(format!(
            "no sample near t = {t}; nearest is {} (index {k})",
            rec.t
        )));
    }
    Ok(rec.purity / series[0].purity)
}

/// Group-level statistics over a finished sweep. Failed members are excluded
/// from the statistics and listed in `failures`; a group with fewer than two
/// surviving members fails, since its collapse metric means nothing.
pub fn analyze(result: &SweepResult, windows: &AnalysisWindows) -> Result<SweepSummary> {
    let mut groups = Vec::with_capacity(result.groups.len());
    let mut failures = Vec::new();
    let mut a_points = Vec::new();

    for (gi, g) in result.groups.iter().enumerate() {
        let runs: Vec<&SweepRun> = result.group_runs(gi);
        for r in &runs {
            if let Some(msg) = &r.error {
                failures.push((r.hbar, r.d, msg.clone()));
            }
        }
        let ok: Vec<&SweepRun> = runs.into_iter().filter(|r| r.ok()).collect();
        if ok.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "group zeta0 = {} has {} surviving members; need >= 2",
                g.zeta0,
                ok.len()
            )));
        }
        let series: Vec<&[DiagnosticsRecord]> =
            ok.iter().map(|r| r.series.as_slice()).collect();
        let collapse = collapse_metric(&series, windows.scale)?;
        let late_spread = collapse_metric(&series, windows.late)?;
        let purities = ok
            .iter()
            .map(|r| purity_at(&r.series, windows.compare_time))
            .collect::<Result<Vec<f64>>>()?;

        let mut fits = Vec::with_capacity(ok.len());
        for r in &ok {
            let fit = fit_metastable(&r.series, r.d, &windows.plateau)?;
            if let Some(f) = fit {
                if g.label != Regime::Quantum {
                    a_points.push((g.zeta0, f.lambda_fit));
                }
            }
            fits.push(fit);
        }

        groups.push(GroupSummary {
            zeta0: g.zeta0,
            regime: g.label,
            members: ok.iter().map(|r| (r.hbar, r.d)).collect(),
            collapse,
            late_spread,
            median_normalized_purity: median(purities),
            fits,
        });
    }

    let a_fit = fit_a_coeff(&a_points).ok();
    if let Some(fit) = &a_fit {
        for g in &mut groups {
            for f in g.fits.iter_mut().flatten() {
                f.a_coeff = Some(fit.a_coeff);
            }
        }
    }

    let mut cross_pairs = Vec::new();
    for i in 0..result.groups.len() {
        for j in i + 1..result.groups.len() {
            let a: Vec<&SweepRun> = result
                .group_runs(i)
                .into_iter()
                .filter(|r| r.ok())
                .collect();
            let b: Vec<&SweepRun> = result
                .group_runs(j)
                .into_iter()
                .filter(|r| r.ok())
                .collect();
            let mut min_dev = f64::INFINITY;
            let mut max_dev = 0.0f64;
            for ra in &a {
                for rb in &b {
                    let dev = pair_deviation(&ra.series, &rb.series, windows.scale)?;
                    min_dev = min_dev.min(dev);
                    max_dev = max_dev.max(dev);
                }
            }
            cross_pairs.push(CrossPair {
                group_a: i,
                group_b: j,
                min_deviation: min_dev,
                max_deviation: max_dev,
            });
        }
    }

    Ok(SweepSummary {
        config_hash: result.config_hash.clone(),
        windows: *windows,
        groups,
        cross_pairs,
        a_fit,
        failures,
    })
}

/// The nine (hbar, D) pairs of the reference scaling study, grouped by zeta0.
pub fn reference_groups() -> Vec<ScalingGroup> {
    let thresholds = RegimeThresholds::default();
    vec![
        ScalingGroup::new(
            2.0,
            vec![(0.1, 5e-3), (0.2, 2e-2), (0.5, 0.125)],
            &thresholds,
        )
        .unwrap(),
        ScalingGroup::new(
            40.0,
            vec![(0.004f64.sqrt(), 1e-4), (0.1, 2.5e-4), (0.2, 1e-3)],
            &thresholds,
        )
        .unwrap(),
        ScalingGroup::new(
            100.0,
            vec![(0.1, 1e-4), (0.5, 2.5e-3), (1.0, 1e-2)],
            &thresholds,
        )
        .unwrap(),
    ]
}
