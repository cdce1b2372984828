use serde::Serialize;

use super::config::{load_input, resolve_rank, ExperimentConfig, LoadedInput};
use super::instances::psd_instance;
use super::report::{CsvRow, Stat};
use super::HarnessError;
use crate::bounds::{bound_report, eym_bound, thm1_bound, weyl_check, BoundReport};
use crate::contour::{
    arctan_integral_check, build_contour_psd, contour_project, f1_integrals, f_integrals, segment_integrals, segment_lemma_bounds,
    QuadSpec,
};
use crate::ingest::RankSelection;
use crate::matcore::{eig_sym, f_p_approx, frobenius_norm, rank_p_approx, spectral_norm, EntireFn, Spectrum, SymMatrix};
use crate::noise::{derive_seed, gaussian_mechanism_sigma, sample, NoiseKind, NoiseSpec};

/// Absolute-plus-relative slack for theorem-backed inequalities.
pub const BOUND_TOL: f64 = 1e-8;

fn exceeds(actual: f64, bound: f64) -> bool {
    actual > bound + BOUND_TOL * bound.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub input: String,
    pub n: usize,
    pub p: usize,
    pub psd: bool,
    pub lambda_p: f64,
    pub delta_p: f64,
    pub sigma_1: f64,
    pub sigma_p1: f64,
    pub rank_selection: Option<RankSelection>,
    pub seed: u64,
    /// Set when the level grid starts at 0, which the default grid omits.
    pub zero_level_included: bool,
    pub config: ExperimentConfig,
}

struct Setup {
    input: LoadedInput,
    p: usize,
    a_p: SymMatrix,
    meta: StudyMetadata,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
    cfg.validate()?;
    let input = load_input(&cfg.input)?;
    let (p, rank_selection) = resolve_rank(cfg.rank, &input)?;
    let s = &input.spectrum;
    let a_p = rank_p_approx(s, p)?;
    let meta = StudyMetadata {
        input: input.label.clone(),
        n: s.n(),
        p,
        psd: s.is_psd(),
        lambda_p: s.lambda(p),
        delta_p: s.eigengap(p),
        sigma_1: s.sigma(1),
        sigma_p1: s.sigma(p + 1),
        rank_selection,
        seed: cfg.seed,
        zero_level_included: cfg.levels.first() == Some(&0.0),
        config: cfg.clone(),
    };
    Ok(Setup { input, p, a_p, meta })
}

fn noise_for(cfg: &ExperimentConfig, n: usize, scale: f64, seed: u64) -> Result<SymMatrix, HarnessError> {
    let spec = NoiseSpec::new(cfg.noise, scale, seed)?.with_goe_diagonal(cfg.goe_diagonal);
    Ok(sample(n, &spec))
}

/// A perturbed instance `Ã = A + E` with its spectrum and truncation.
struct Perturbed {
    e: SymMatrix,
    at: SymMatrix,
    sat: Spectrum,
    at_p: SymMatrix,
}

fn perturb(a: &SymMatrix, e: SymMatrix, p: usize) -> Result<Perturbed, HarnessError> {
    let at = a + &e;
    let sat = eig_sym(&at)?;
    let at_p = rank_p_approx(&sat, p)?;
    Ok(Perturbed { e, at, sat, at_p })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub level: f64,
    pub trial: usize,
    pub bound: String,
    pub actual: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundLevel {
    pub level: f64,
    pub e_norm: Stat,
    pub actual: Stat,
    pub eym: Stat,
    /// Absent when `A` is not PSD.
    pub thm1: Option<Stat>,
    pub thm2: Option<Stat>,
    pub main2: Stat,
    pub main2_1: Stat,
    pub gap_rate_psd: f64,
    pub gap_rate_sym: f64,
    pub weyl_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundStudyReport {
    pub metadata: StudyMetadata,
    pub levels: Vec<BoundLevel>,
    pub violations: Vec<Violation>,
}

impl BoundStudyReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for l in &self.levels {
            let mut push = |name: &str, s: Option<Stat>| {
                if let Some(stat) = s {
                    rows.push(CsvRow { level: l.level, metric: name.into(), stat });
                }
            };
            push("e_norm", Some(l.e_norm));
            push("actual", Some(l.actual));
            push("eym", Some(l.eym));
            push("thm1", l.thm1);
            push("thm2", l.thm2);
            push("main2", Some(l.main2));
            push("main2_1", Some(l.main2_1));
        }
        rows
    }
}

fn rate(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
}

fn opt_stat(xs: &[Option<f64>]) -> Option<Stat> {
    let v: Option<Vec<f64>> = xs.iter().copied().collect();
    v.map(|v| Stat::of(&v))
}

/// Theorem-backed checks for one trial: EYM and Weyl always, the PSD bounds
/// under the PSD gap condition, the symmetric bounds under both symmetric
/// conditions.
pub fn trial_violations(r: &BoundReport, actual: f64, weyl_ok: bool) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    if exceeds(actual, r.eym) {
        v.push(("eym", r.eym));
    }
    if !weyl_ok {
        v.push(("weyl", f64::NAN));
    }
    if r.gap_ok_psd {
        for (name, b) in [("thm1", r.thm1), ("thm2", r.thm2)] {
            if let Some(b) = b.filter(|&b| exceeds(actual, b)) {
                v.push((name, b));
            }
        }
    }
    if r.gap_ok_sym && r.sv_gap_ok {
        for (name, b) in [("main2", r.main2), ("main2_1", r.main2_1)] {
            if exceeds(actual, b) {
                v.push((name, b));
            }
        }
    }
    v
}

/// Actual truncation error against every bound, per noise level.
pub fn run_bound_study(cfg: &ExperimentConfig) -> Result<BoundStudyReport, HarnessError> {
    let st = setup(cfg)?;
    let a = &st.input.matrix;
    let sa = &st.input.spectrum;
    let n = sa.n();
    let mut levels = Vec::with_capacity(cfg.levels.len());
    let mut violations = Vec::new();
    for (li, &level) in cfg.levels.iter().enumerate() {
        let mut e_norm = Vec::new();
        let mut actual = Vec::new();
        let mut eym = Vec::new();
        let (mut thm1, mut thm2) = (Vec::new(), Vec::new());
        let (mut main2, mut main2_1) = (Vec::new(), Vec::new());
        let (mut gp, mut gs, mut weyl) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..cfg.trials {
            let e = noise_for(cfg, n, level, derive_seed(cfg.seed, li as u64, t as u64))?;
            let pt = perturb(a, e, st.p)?;
            let act = spectral_norm(&(&pt.at_p - &st.a_p));
            let r = bound_report(sa, &pt.e, st.p, Some(act), &[])?;
            let w = weyl_check(sa, &pt.sat, r.profile.e_norm)?;
            for (name, value) in trial_violations(&r, act, w) {
                violations.push(Violation { level, trial: t, bound: name.into(), actual: act, value });
            }
            e_norm.push(r.profile.e_norm);
            actual.push(act);
            eym.push(r.eym);
            thm1.push(r.thm1);
            thm2.push(r.thm2);
            main2.push(r.main2);
            main2_1.push(r.main2_1);
            gp.push(r.gap_ok_psd);
            gs.push(r.gap_ok_sym && r.sv_gap_ok);
            weyl.push(w);
        }
        levels.push(BoundLevel {
            level,
            e_norm: Stat::of(&e_norm),
            actual: Stat::of(&actual),
            eym: Stat::of(&eym),
            thm1: opt_stat(&thm1),
            thm2: opt_stat(&thm2),
            main2: Stat::of(&main2),
            main2_1: Stat::of(&main2_1),
            gap_rate_psd: rate(&gp),
            gap_rate_sym: rate(&gs),
            weyl_rate: rate(&weyl),
        });
    }
    Ok(BoundStudyReport { metadata: st.meta, levels, violations })
}

/// The three utility metrics of a rank-`p` release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    /// `||Ã_p - A_p||`.
    pub spectral: f64,
    /// `||Ã_p - A_p||_F`.
    pub frobenius: f64,
    /// Residual shift `| ||A - A_p|| - ||Ã - Ã_p|| |`; zero for a pure
    /// rotation of a rank-`p` matrix.
    pub change_in_error: f64,
    /// `| ||A - A_p|| - ||A - Ã_p|| |`, bounded by `spectral` through the
    /// triangle inequality.
    pub cross_residual_gap: f64,
}

impl ErrorMetrics {
    /// `cross ≤ spectral ≤ frobenius ≤ √(2p) spectral` up to `BOUND_TOL`.
    pub fn ordered(&self, p: usize) -> bool {
        let s = self.spectral;
        !exceeds(self.cross_residual_gap, s) && !exceeds(s, self.frobenius) && !exceeds(self.frobenius, (2.0 * p as f64).sqrt() * s)
    }
}

pub fn error_metrics(a: &SymMatrix, at: &SymMatrix, p: usize) -> Result<ErrorMetrics, HarnessError> {
    let a_p = rank_p_approx(&eig_sym(a)?, p)?;
    let at_p = rank_p_approx(&eig_sym(at)?, p)?;
    Ok(metrics_from(a, &a_p, at, &at_p))
}

fn metrics_from(a: &SymMatrix, a_p: &SymMatrix, at: &SymMatrix, at_p: &SymMatrix) -> ErrorMetrics {
    let diff = at_p - a_p;
    let resid = spectral_norm(&(a - a_p));
    ErrorMetrics {
        spectral: spectral_norm(&diff),
        frobenius: frobenius_norm(&diff),
        change_in_error: (resid - spectral_norm(&(at - at_p))).abs(),
        cross_residual_gap: (resid - spectral_norm(&(a - at_p))).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricLevel {
    pub level: f64,
    pub spectral: Stat,
    pub frobenius: Stat,
    pub change_in_error: Stat,
    pub cross_residual_gap: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStudyReport {
    pub metadata: StudyMetadata,
    pub levels: Vec<MetricLevel>,
    /// `(level, trial)` pairs whose metrics broke the norm ordering.
    pub order_violations: Vec<(f64, usize)>,
}

impl MetricStudyReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for l in &self.levels {
            for (name, stat) in [
                ("spectral", l.spectral),
                ("frobenius", l.frobenius),
                ("change_in_error", l.change_in_error),
                ("cross_residual_gap", l.cross_residual_gap),
            ] {
                rows.push(CsvRow { level: l.level, metric: name.into(), stat });
            }
        }
        rows
    }
}

pub fn run_metric_study(cfg: &ExperimentConfig) -> Result<MetricStudyReport, HarnessError> {
    let st = setup(cfg)?;
    let a = &st.input.matrix;
    let n = st.meta.n;
    let mut levels = Vec::with_capacity(cfg.levels.len());
    let mut order_violations = Vec::new();
    for (li, &level) in cfg.levels.iter().enumerate() {
        let mut ms = Vec::with_capacity(cfg.trials);
        for t in 0..cfg.trials {
            let e = noise_for(cfg, n, level, derive_seed(cfg.seed, li as u64, t as u64))?;
            let pt = perturb(a, e, st.p)?;
            let m = metrics_from(a, &st.a_p, &pt.at, &pt.at_p);
            if !m.ordered(st.p) {
                order_violations.push((level, t));
            }
            ms.push(m);
        }
        let col = |f: fn(&ErrorMetrics) -> f64| Stat::of(&ms.iter().map(f).collect::<Vec<_>>());
        levels.push(MetricLevel {
            level,
            spectral: col(|m| m.spectral),
            frobenius: col(|m| m.frobenius),
            change_in_error: col(|m| m.change_in_error),
            cross_residual_gap: col(|m| m.cross_residual_gap),
        });
    }
    Ok(MetricStudyReport { metadata: st.meta, levels, order_violations })
}

pub const DEFAULT_RATIOS: [f64; 10] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

const PILOT_DRAWS: u64 = 16;
const PILOT_STREAM: u64 = 0xA11CE;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeyondGapRow {
    /// Target `||E||/δ_p`.
    pub ratio: f64,
    pub alpha: f64,
    /// Realised `||E||/δ_p`.
    pub realized_ratio: Stat,
    pub actual: Stat,
    pub thm1: Stat,
    pub eym: Stat,
    /// `mean(thm1) / mean(actual)`.
    pub our_over_true: f64,
    /// `mean(thm1) / mean(eym)`.
    pub our_over_classical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeyondGapReport {
    pub metadata: StudyMetadata,
    /// Median `||E||` of the unit-scale pilot draws.
    pub pilot_median_norm: f64,
    pub rows: Vec<BeyondGapRow>,
}

impl BeyondGapReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for r in &self.rows {
            for (name, stat) in [("actual", r.actual), ("thm1", r.thm1), ("eym", r.eym), ("realized_ratio", r.realized_ratio)] {
                rows.push(CsvRow { level: r.ratio, metric: name.into(), stat });
            }
            for (name, v) in [("our_over_true", r.our_over_true), ("our_over_classical", r.our_over_classical)] {
                rows.push(CsvRow { level: r.ratio, metric: name.into(), stat: Stat { mean: v, std: 0.0 } });
            }
        }
        rows
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    }
}

/// Noise calibrated to fixed ratios `||E||/δ_p`, past the gap condition.
///
/// The scale `α` for each ratio is `c δ_p / median ||E_unit||` over 16
/// pilot draws and stays fixed across that ratio's trials. The level grid
/// of `cfg` is ignored in favour of `ratios`.
pub fn run_beyond_gap(cfg: &ExperimentConfig, ratios: &[f64]) -> Result<BeyondGapReport, HarnessError> {
    if ratios.is_empty() || ratios.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(HarnessError::Config("ratios must be finite and > 0".into()));
    }
    let mut cfg = cfg.clone();
    cfg.levels = ratios.to_vec();
    let st = setup(&cfg)?;
    let a = &st.input.matrix;
    let sa = &st.input.spectrum;
    if !sa.is_psd() {
        return Err(HarnessError::Config("beyond-gap study needs a PSD input".into()));
    }
    let (n, p, delta_p) = (st.meta.n, st.p, st.meta.delta_p);
    let pilots: Result<Vec<f64>, HarnessError> =
        (0..PILOT_DRAWS).map(|j| Ok(spectral_norm(&noise_for(&cfg, n, 1.0, derive_seed(cfg.seed, PILOT_STREAM, j))?))).collect();
    let pilot_median_norm = median(pilots?);
    let mut rows = Vec::with_capacity(ratios.len());
    for (li, &c) in ratios.iter().enumerate() {
        let alpha = c * delta_p / pilot_median_norm;
        let (mut real, mut actual, mut thm1, mut eym) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for t in 0..cfg.trials {
            let e = noise_for(&cfg, n, alpha, derive_seed(cfg.seed, li as u64, t as u64))?;
            let e_norm = spectral_norm(&e);
            let pt = perturb(a, e, p)?;
            real.push(e_norm / delta_p);
            actual.push(spectral_norm(&(&pt.at_p - &st.a_p)));
            thm1.push(thm1_bound(sa, e_norm, p)?);
            eym.push(eym_bound(sa, e_norm, p)?);
        }
        let (actual, thm1, eym) = (Stat::of(&actual), Stat::of(&thm1), Stat::of(&eym));
        rows.push(BeyondGapRow {
            ratio: c,
            alpha,
            realized_ratio: Stat::of(&real),
            actual,
            thm1,
            eym,
            our_over_true: thm1.mean / actual.mean,
            our_over_classical: thm1.mean / eym.mean,
        });
    }
    Ok(BeyondGapReport { metadata: st.meta, pilot_median_norm, rows })
}

/// A Gaussian-mechanism release of `A_p` with its utility certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpRelease {
    pub p: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    pub seed: u64,
    pub noise_sigma: f64,
    /// `2σ√n`, the typical norm of the noise.
    pub predicted_noise_norm: f64,
    /// `δ_p ≥ 8.01 σ √n`.
    pub scaled_gap_ok: bool,
    pub released: SymMatrix,
    /// Bounds evaluated at the realised noise.
    pub certificate: BoundReport,
}

pub fn dp_release(a: &SymMatrix, p: usize, epsilon: f64, delta: f64, sensitivity: f64, seed: u64) -> Result<DpRelease, HarnessError> {
    let sigma = gaussian_mechanism_sigma(epsilon, delta, sensitivity)?;
    let sa = eig_sym(a)?;
    let n = sa.n();
    if p == 0 || p >= n {
        return Err(HarnessError::Config(format!("rank p = {p} must satisfy 1 <= p < n = {n}")));
    }
    let e = sample(n, &NoiseSpec::new(NoiseKind::WignerGaussian, sigma, seed)?);
    let pt = perturb(a, e, p)?;
    let actual = spectral_norm(&(&pt.at_p - &rank_p_approx(&sa, p)?));
    let certificate = bound_report(&sa, &pt.e, p, Some(actual), &[])?;
    let root_n = (n as f64).sqrt();
    Ok(DpRelease {
        p,
        epsilon,
        delta,
        sensitivity,
        seed,
        noise_sigma: sigma,
        predicted_noise_norm: 2.0 * sigma * root_n,
        scaled_gap_ok: sa.eigengap(p) >= 8.01 * sigma * root_n,
        released: pt.at_p,
        certificate,
    })
}

pub const BOOTSTRAP_MAX_N: usize = 30;
/// Relative slack in `F ≤ 2F₁(1 + slack)`.
pub const BOOTSTRAP_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub instances: usize,
    pub max_n: usize,
    pub seed: u64,
    pub rel_tol: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { instances: 50, max_n: 10, seed: 0, rel_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub e_norm: f64,
    pub delta_p: f64,
    pub gap_ok: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub config: BootstrapConfig,
    pub records: Vec<InstanceRecord>,
    pub failures: usize,
}

impl BootstrapReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = (usize, &Check)> {
        self.records.iter().flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| (r.index, c)))
    }

    /// All checks whose name starts with `prefix`.
    pub fn checks_named<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.records.iter().flat_map(move |r| r.checks.iter().filter(move |c| c.name.starts_with(prefix)))
    }
}

/// Runs the contour identity, the bootstrapping inequality `F ≤ 2F₁`, the
/// resolvent bound `||f_p(Ã) - f_p(A)|| ≤ F` and the segment lemmas on
/// seeded PSD instances.
pub fn run_bootstrap_suite(cfg: &BootstrapConfig) -> Result<BootstrapReport, HarnessError> {
    if cfg.max_n < 3 || cfg.max_n > BOOTSTRAP_MAX_N {
        return Err(HarnessError::Config(format!("max_n must lie in 3..={BOOTSTRAP_MAX_N}, got {}", cfg.max_n)));
    }
    if cfg.instances == 0 {
        return Err(HarnessError::Config("need at least one instance".into()));
    }
    let q = QuadSpec::with_tol(cfg.rel_tol);
    // quadrature error is relative to rel_tol; allow a few multiples of it
    let slack = 1.0 + 10.0 * cfg.rel_tol;
    let fs = EntireFn::registry();
    let mut records = Vec::with_capacity(cfg.instances);
    for i in 0..cfg.instances {
        let inst = psd_instance(cfg.seed, i as u64, cfg.max_n)?;
        let (sa, p) = (&inst.spectrum, inst.p);
        let n = sa.n();
        let e_norm = spectral_norm(&inst.e);
        let delta_p = sa.eigengap(p);
        let gap_ok = 4.0 * e_norm <= delta_p;
        let gamma = build_contour_psd(sa, p)?;
        let sat = eig_sym(&(&inst.a + &inst.e))?;
        let mut checks = Vec::new();
        let mut check = |name: String, lhs: f64, rhs: f64, pass: bool| checks.push(Check { name, lhs, rhs, pass });

        for f in &fs {
            let fp = f_p_approx(sa, f, p)?;
            let proj = contour_project(sa, f, &gamma, &q)?;
            let err = spectral_norm(&(&proj - &fp));
            let tol = 1e-5 * (1.0 + spectral_norm(&fp));
            check(format!("identity[{f}]"), err, tol, err <= tol);
        }

        let big_f = f_integrals(sa, &sat, &fs, &gamma, &q)?;
        let f1 = f1_integrals(sa, &inst.e, &fs, &gamma, &q)?;
        for (j, f) in fs.iter().enumerate() {
            if gap_ok {
                let rhs = 2.0 * f1[j] * (1.0 + BOOTSTRAP_SLACK);
                check(format!("bootstrap[{f}]"), big_f[j], rhs, big_f[j] <= rhs);
            }
            let actual = spectral_norm(&(&f_p_approx(&sat, f, p)? - &f_p_approx(sa, f, p)?));
            let rhs = big_f[j] * slack + 1e-12;
            check(format!("resolvent[{f}]"), actual, rhs, actual <= rhs);
            if e_norm == 0.0 {
                check(format!("zero_noise[{f}]"), big_f[j].max(f1[j]), 0.0, big_f[j] == 0.0 && f1[j] == 0.0);
            }
        }

        let seg = segment_integrals(sa, &inst.e, &gamma, &q)?;
        let profile = crate::bounds::gap_profile(sa, &inst.e, p)?;
        let lb = segment_lemma_bounds(sa, &gamma, e_norm, profile.r, profile.x);
        for (name, lhs, rhs) in [
            ("N1", seg.n[0], lb.n1),
            ("N2", seg.n[1], lb.n2_n4),
            ("N3", seg.n[2], lb.n3),
            ("N4", seg.n[3], lb.n2_n4),
            ("M1", seg.m[0], lb.m1),
        ] {
            check(name.into(), lhs, rhs, lhs <= rhs * slack);
        }

        let a = delta_p / 2.0;
        let (val, bound) = arctan_integral_check(a, gamma.t, &q)?;
        check("arctan".into(), val, bound, val <= bound * slack);

        records.push(InstanceRecord { index: i, n, p, e_norm, delta_p, gap_ok, checks });
    }
    let failures = records.iter().flat_map(|r| &r.checks).filter(|c| !c.pass).count();
    Ok(BootstrapReport { config: *cfg, records, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{InputSpec, RankSpec};

    fn small_cfg(spec: &str, trials: usize, levels: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig { trials, levels, ..ExperimentConfig::synthetic(spec) }
    }

    #[test]
    fn zero_level_gives_trivial_bounds() {
        let cfg = small_cfg("decay:base=0.8,n=12", 3, vec![0.0]);
        let mut cfg = cfg;
        cfg.rank = Some(RankSpec::Explicit(3));
        let r = run_bound_study(&cfg).unwrap();
        let l = &r.levels[0];
        assert_eq!(l.actual.mean, 0.0);
        assert_eq!(l.thm1.unwrap().mean, 0.0);
        assert_eq!(l.eym.mean, 2.0 * r.metadata.sigma_p1);
        assert!(r.metadata.zero_level_included);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn bound_study_is_deterministic_and_sound() {
        let mut cfg = small_cfg("steps:n=20", 4, vec![0.5, 1.0]);
        cfg.rank = Some(RankSpec::Explicit(10));
        let a = run_bound_study(&cfg).unwrap();
        let b = run_bound_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.violations.is_empty(), "{:?}", a.violations);
        for l in &a.levels {
            assert_eq!(l.weyl_rate, 1.0);
            assert!(l.actual.std >= 0.0);
            assert!(l.thm1.unwrap().mean >= l.actual.mean);
        }
    }

    #[test]
    fn rotation_metrics() {
        for theta in [0.1f64, 0.5, 1.0] {
            let a = SymMatrix::from_diag(&[1.0, 0.0]);
            let (c, s) = (theta.cos(), theta.sin());
            let at = SymMatrix::from_rows(&[vec![c * c, c * s], vec![c * s, s * s]]).unwrap();
            let m = error_metrics(&a, &at, 1).unwrap();
            assert!((m.spectral - s.abs()).abs() < 1e-12);
            assert!((m.frobenius - 2f64.sqrt() * s.abs()).abs() < 1e-12);
            assert!(m.change_in_error < 1e-12);
            assert!((m.cross_residual_gap - s.abs()).abs() < 1e-12);
            assert!(m.ordered(1));
        }
    }

    #[test]
    fn metric_study_zero_noise_and_order() {
        let mut cfg = small_cfg("decay:base=0.8,n=15", 3, vec![0.0, 0.3]);
        cfg.rank = Some(RankSpec::Explicit(4));
        let r = run_metric_study(&cfg).unwrap();
        let z = &r.levels[0];
        assert_eq!((z.spectral.mean, z.frobenius.mean, z.change_in_error.mean), (0.0, 0.0, 0.0));
        assert!(r.order_violations.is_empty());
    }

    #[test]
    fn beyond_gap_columns_are_quotients() {
        let mut cfg = small_cfg("colon", 3, vec![1.0]);
        cfg.seed = 7;
        let r = run_beyond_gap(&cfg, &[0.05, 0.25]).unwrap();
        for row in &r.rows {
            assert_eq!(row.our_over_true, row.thm1.mean / row.actual.mean);
            assert_eq!(row.our_over_classical, row.thm1.mean / row.eym.mean);
            assert!((row.realized_ratio.mean / row.ratio - 1.0).abs() < 0.05);
        }
        assert!((r.rows[0].our_over_classical - 0.20).abs() < 0.01);
        assert!(run_beyond_gap(&cfg, &[]).is_err());
    }

    #[test]
    fn beyond_gap_rejects_indefinite_input() {
        let cfg = ExperimentConfig { input: InputSpec::Synthetic { spec: "diag:3,-1,0.5".into() }, rank: Some(RankSpec::Explicit(1)), trials: 1, ..ExperimentConfig::synthetic("census") };
        assert!(matches!(run_beyond_gap(&cfg, &[0.1]), Err(HarnessError::Config(_))));
    }

    #[test]
    fn dp_release_limits_and_determinism() {
        let a = SymMatrix::from_diag(&(0..20).map(|i| 100.0 * 0.5f64.powi(i)).collect::<Vec<_>>());
        let r1 = dp_release(&a, 2, 1.0, 1e-5, 1.0, 9).unwrap();
        let r2 = dp_release(&a, 2, 1.0, 1e-5, 1.0, 9).unwrap();
        assert_eq!(r1, r2);
        let quiet = dp_release(&a, 2, 1e12, 1e-5, 1.0, 9).unwrap();
        let a_p = rank_p_approx(&eig_sym(&a).unwrap(), 2).unwrap();
        assert!(quiet.released.max_abs_diff(&a_p) < 1e-9);
        assert!(quiet.certificate.thm1.unwrap() < 1e-9);
        assert!(dp_release(&a, 2, 0.0, 1e-5, 1.0, 9).is_err());
        assert!(dp_release(&a, 20, 1.0, 1e-5, 1.0, 9).is_err());
    }

    #[test]
    fn bootstrap_suite_small() {
        let r = run_bootstrap_suite(&BootstrapConfig { instances: 10, max_n: 6, seed: 1, rel_tol: 1e-6 }).unwrap();
        assert_eq!(r.failures, 0, "{:?}", r.failed_checks().collect::<Vec<_>>());
        assert!(r.checks_named("zero_noise").count() == 5);
        assert!(run_bootstrap_suite(&BootstrapConfig { max_n: 31, ..BootstrapConfig::default() }).is_err());
    }
}
