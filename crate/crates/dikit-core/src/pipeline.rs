//! End-to-end scenario runner: generate local-test and long-range
//! statistics, certify side bounds, transfer them through the marginal
//! constraints, compute rate certificates for the no-switch, one-switch,
//! and two-switch configurations, and sandwich everything against explicit
//! attack models.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    eur_rate, overlap_from_moment_bound, thm1_rate, RateCertificate, ResidualSummary,
    SelfTestParams,
};
use crate::entropy::measured_cond_entropy;
use crate::error::{Error, Result};
use crate::model::{bloch_pvm, purify, werner_state, DichotomicObservable};
use crate::npo::{bound_anticom_sq, SdpSolution};
use crate::stats::{chsh_epsilon, chsh_winning_prob, correlations, werner_chsh_table};

/// The qber abscissae of the shipped reference curve.
pub fn default_qber_grid() -> Vec<f64> {
    (0..14).map(|k| 0.028 * k as f64 / 13.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Switches {
    #[serde(rename = "one")]
    One,
    #[serde(rename = "two")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineTier {
    #[serde(rename = "analytic")]
    Analytic,
    #[serde(rename = "npo-eur")]
    NpoEur,
    #[serde(rename = "npo-entropy")]
    NpoEntropy,
}

impl std::fmt::Display for PipelineTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PipelineTier::Analytic => "analytic",
            PipelineTier::NpoEur => "npo-eur",
            PipelineTier::NpoEntropy => "npo-entropy",
        })
    }
}

fn default_visibility() -> f64 {
    0.99
}

fn default_switches() -> Switches {
    Switches::Two
}

fn default_tests_per_side() -> usize {
    1
}

fn default_npa_level() -> usize {
    crate::npo::DEFAULT_LEVEL
}

fn default_tier() -> PipelineTier {
    PipelineTier::NpoEur
}

fn default_delta_constant() -> f64 {
    1.0
}

fn default_m_nodes() -> usize {
    4
}

/// Run configuration; every field has a documented default. The routing
/// variables of the physical experiment appear only as free-text metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_visibility")]
    pub local_visibility_a: f64,
    #[serde(default = "default_visibility")]
    pub local_visibility_b: f64,
    /// Either an explicit qber grid or a single shared-state visibility
    /// mapped through q = (1−v)/2; the grid wins when both appear.
    #[serde(default)]
    pub qber_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub shared_visibility: Option<f64>,
    #[serde(default = "default_switches")]
    pub switches: Switches,
    #[serde(default = "default_tests_per_side")]
    pub local_tests_per_side: usize,
    #[serde(default = "default_npa_level")]
    pub npa_level: usize,
    #[serde(default = "default_tier")]
    pub tier: PipelineTier,
    #[serde(default = "default_delta_constant")]
    pub delta_constant: f64,
    #[serde(default = "default_m_nodes")]
    pub m_nodes: usize,
    #[serde(default)]
    pub routing_note: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            local_visibility_a: default_visibility(),
            local_visibility_b: default_visibility(),
            qber_grid: None,
            shared_visibility: None,
            switches: default_switches(),
            local_tests_per_side: default_tests_per_side(),
            npa_level: default_npa_level(),
            tier: default_tier(),
            delta_constant: default_delta_constant(),
            m_nodes: default_m_nodes(),
            routing_note: String::new(),
        }
    }
}

impl ScenarioConfig {
    /// Validate ranges and resolve the qber grid.
    pub fn resolve_grid(&self) -> Result<Vec<f64>> {
        for (name, v) in [
            ("local_visibility_a", self.local_visibility_a),
            ("local_visibility_b", self.local_visibility_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if self.local_tests_per_side < 1 {
            return Err(Error::Config("local_tests_per_side must be ≥ 1".into()));
        }
        if self.npa_level < 2 {
            return Err(Error::Config(
                "npa_level must be ≥ 2 (degree-4 objectives)".into(),
            ));
        }
        if self.delta_constant <= 0.0 {
            return Err(Error::Config("delta_constant must be positive".into()));
        }
        let grid = match (&self.qber_grid, self.shared_visibility) {
            (Some(g), _) => g.clone(),
            (None, Some(v)) => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "shared_visibility must lie in [0,1], got {v}"
                    )));
                }
                vec![(1.0 - v) / 2.0]
            }
            (None, None) => default_qber_grid(),
        };
        if grid.is_empty() {
            return Err(Error::Config("qber_grid must be non-empty".into()));
        }
        for &q in &grid {
            if !(0.0..=0.5).contains(&q) {
                return Err(Error::Config(format!(
                    "qber values must lie in [0, 1/2], got {q}"
                )));
            }
        }
        Ok(grid)
    }
}

/// One certified curve point; rates are clamped at the −2 reporting floor,
/// raw values live in the certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub qber: f64,
    pub rate_no_switch: f64,
    pub rate_one_switch: Option<f64>,
    pub rate_two_switch: Option<f64>,
    pub tier: PipelineTier,
    pub status: String,
}

/// Raw certificates behind one curve point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRecord {
    pub qber: f64,
    pub one_switch: Option<RateCertificate>,
    pub two_switch: Option<RateCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "alice")]
    Alice,
    #[serde(rename = "bob")]
    Bob,
}

/// Certified anticommutator-square cap from one local test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SideBound {
    pub side: Side,
    pub s_max: f64,
    pub level: usize,
    pub solution: SdpSolution,
}

/// Moment caps transferred to the long-range state through the marginal
/// constraints; several local tests per side intersect to the smallest cap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginalCaps {
    pub alice: Option<f64>,
    pub bob: Option<f64>,
}

pub fn transfer_marginal_bounds(side_bounds: &[(Side, f64)]) -> MarginalCaps {
    let mut caps = MarginalCaps {
        alice: None,
        bob: None,
    };
    for &(side, s) in side_bounds {
        let slot = match side {
            Side::Alice => &mut caps.alice,
            Side::Bob => &mut caps.bob,
        };
        *slot = Some(match slot {
            Some(cur) => cur.min(s),
            None => s,
        });
    }
    caps
}

/// Full outcome of a scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub side_bounds: Vec<SideBound>,
    pub points: Vec<CurvePoint>,
    pub certificates: Vec<PointRecord>,
}

impl RunResult {
    pub fn any_failed(&self) -> bool {
        self.points.iter().any(|p| p.status != "ok")
    }
}

fn residual_summary(sol: &SdpSolution) -> ResidualSummary {
    ResidualSummary {
        primal: sol.primal_residual,
        dual: sol.dual_residual,
        gap: sol.gap,
    }
}

/// Rate certificates (one-switch, two-switch) for one grid point.
fn rates_at_point(
    cfg: &ScenarioConfig,
    q: f64,
    eps: (f64, f64),
    caps: &MarginalCaps,
    side_bounds: &[SideBound],
) -> Result<(RateCertificate, RateCertificate)> {
    match cfg.tier {
        PipelineTier::Analytic => {
            let params_a = SelfTestParams::new(eps.0, cfg.delta_constant)?;
            let one = thm1_rate(&params_a, q, q)?;
            let params_b = SelfTestParams::new(eps.1, cfg.delta_constant)?;
            let alt = thm1_rate(&params_b, q, q)?;
            // Two switches: the better of the two one-sided chains (key
            // extраction from whichever side self-tests more tightly).
            let two = if alt.rate > one.rate { alt } else { one.clone() };
            Ok((one, two))
        }
        PipelineTier::NpoEur => {
            let s_a = caps
                .alice
                .ok_or_else(|| Error::Config("missing Alice-side cap".into()))?;
            let mut one = eur_rate(overlap_from_moment_bound(s_a)?, q, q)?;
            if let Some(sol) = side_bounds
                .iter()
                .find(|b| b.side == Side::Alice)
                .map(|b| &b.solution)
            {
                one.residuals = Some(residual_summary(sol));
            }
            let two = match caps.bob {
                Some(s_b) => {
                    let mut alt = eur_rate(overlap_from_moment_bound(s_b)?, q, q)?;
                    if let Some(sol) = side_bounds
                        .iter()
                        .find(|b| b.side == Side::Bob)
                        .map(|b| &b.solution)
                    {
                        alt.residuals = Some(residual_summary(sol));
                    }
                    if alt.rate > one.rate {
                        alt
                    } else {
                        one.clone()
                    }
                }
                None => one.clone(),
            };
            Ok((one, two))
        }
        PipelineTier::NpoEntropy => {
            #[cfg(feature = "entropy-npo")]
            {
                crate::npo::bff::entropy_tier_rates(cfg, q, caps)
            }
            #[cfg(not(feature = "entropy-npo"))]
            {
                Err(Error::Config(
                    "tier npo-entropy requires building with the `entropy-npo` feature".into(),
                ))
            }
        }
    }
}

/// Run the full pipeline over the configured grid with a bounded worker
/// pool; per-point failures mark that point and the run continues.
pub fn run_scenario(cfg: &ScenarioConfig, jobs: usize) -> Result<RunResult> {
    let grid = cfg.resolve_grid()?;

    // Side bounds are q-independent: one certification per side (identical
    // repeated local tests share one solve).
    let mut side_bounds = Vec::new();
    let mut eps = (0.0f64, 0.0f64);
    match cfg.tier {
        PipelineTier::Analytic => {
            let omega_a = chsh_winning_prob(&werner_chsh_table(cfg.local_visibility_a)?)?;
            let omega_b = chsh_winning_prob(&werner_chsh_table(cfg.local_visibility_b)?)?;
            eps = (chsh_epsilon(omega_a)?, chsh_epsilon(omega_b)?);
        }
        PipelineTier::NpoEur | PipelineTier::NpoEntropy => {
            for (side, v) in [
                (Side::Alice, cfg.local_visibility_a),
                (Side::Bob, cfg.local_visibility_b),
            ] {
                let table = werner_chsh_table(v)?;
                let (s_max, solution) = bound_anticom_sq(&table, cfg.npa_level, true)?;
                for _ in 0..cfg.local_tests_per_side {
                    side_bounds.push(SideBound {
                        side,
                        s_max,
                        level: cfg.npa_level,
                        solution: solution.clone(),
                    });
                }
            }
        }
    }
    let caps = transfer_marginal_bounds(
        &side_bounds
            .iter()
            .map(|b| (b.side, b.s_max))
            .collect::<Vec<_>>(),
    );

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(CurvePoint, PointRecord)>>> =
        Mutex::new(vec![None; grid.len()]);
    let workers = jobs.max(1).min(grid.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= grid.len() {
                    break;
                }
                let q = grid[idx];
                let outcome = rates_at_point(cfg, q, eps, &caps, &side_bounds);
                let clamp = |r: f64| r.max(-2.0);
                let (point, record) = match outcome {
                    Ok((one, two)) => (
                        CurvePoint {
                            qber: q,
                            rate_no_switch: 0.0,
                            rate_one_switch: Some(clamp(one.rate)),
                            rate_two_switch: Some(clamp(two.rate)),
                            tier: cfg.tier,
                            status: "ok".into(),
                        },
                        PointRecord {
                            qber: q,
                            one_switch: Some(one),
                            two_switch: Some(two),
                            error: None,
                        },
                    ),
                    Err(e) => (
                        CurvePoint {
                            qber: q,
                            rate_no_switch: 0.0,
                            rate_one_switch: None,
                            rate_two_switch: None,
                            tier: cfg.tier,
                            status: format!("failed: {e}"),
                        },
                        PointRecord {
                            qber: q,
                            one_switch: None,
                            two_switch: None,
                            error: Some(e.to_string()),
                        },
                    ),
                };
                results.lock().unwrap()[idx] = Some((point, record));
            });
        }
    });

    let mut points = Vec::with_capacity(grid.len());
    let mut certificates = Vec::with_capacity(grid.len());
    for slot in results.into_inner().unwrap() {
        let (p, r) = slot.expect("worker pool covered every index");
        points.push(p);
        certificates.push(r);
    }
    Ok(RunResult {
        config: cfg.clone(),
        side_bounds,
        points,
        certificates,
    })
}

/// Exact Devetak–Winter value H(Z_A|E) − H(Z_A|Z_B) of one explicit model.
fn exact_dw(shared_v: f64, bob_tilt: f64) -> Result<f64> {
    let rho = werner_state(shared_v)?;
    let psi = purify(&rho)?;
    let z_a = bloch_pvm(&DichotomicObservable::in_xz_plane(0.0), "Z_A");
    let h_ze = measured_cond_entropy(&psi, &z_a, 0, &[2])?;

    // Classical conditional entropy of the Z outcomes.
    let z_b = bloch_pvm(&DichotomicObservable::in_xz_plane(bob_tilt), "Z_B");
    let table = correlations(&rho, &[z_a], &[z_b])?;
    let mut h_joint = 0.0;
    let mut pb = [0.0f64; 2];
    for a in 0..2 {
        for b in 0..2 {
            let p = table.prob(0, 0, a, b);
            if p > 1e-14 {
                h_joint -= p * p.log2();
            }
            pb[b] += p;
        }
    }
    let mut h_b = 0.0;
    for p in pb {
        if p > 1e-14 {
            h_b -= p * p.log2();
        }
    }
    Ok(h_ze - (h_joint - h_b))
}

/// Ceiling on any certified rate at this qber: the minimal exact
/// Devetak–Winter value over explicit qubit attack models consistent with
/// the observed statistics (Werner family with a ≤ 1° measurement-angle
/// grid). Every sound lower bound must stay below this.
pub fn attack_oracle(qber: f64, local_visibilities: (f64, f64)) -> Result<f64> {
    let step = std::f64::consts::PI / 180.0;

    // Local-test consistency filter: Alice's second observable must sit at
    // 90° from the first to reproduce either side's local table on the
    // angle grid.
    let reference = werner_chsh_table(local_visibilities.0)?;
    let mut consistent_angles = 0usize;
    for k in 0..=180 {
        let theta = k as f64 * step;
        let alice = [
            bloch_pvm(&DichotomicObservable::in_xz_plane(0.0), "x0"),
            bloch_pvm(&DichotomicObservable::in_xz_plane(theta), "x1"),
        ];
        let (_, fred) = crate::stats::optimal_chsh_observables();
        let fpvms = [bloch_pvm(&fred[0], "y0"), bloch_pvm(&fred[1], "y1")];
        let table = correlations(
            &werner_state(local_visibilities.0)?,
            &alice,
            &fpvms,
        )?;
        let mut dev = 0.0f64;
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        dev = dev.max((table.prob(x, y, a, b) - reference.prob(x, y, a, b)).abs());
                    }
                }
            }
        }
        if dev <= 1e-9 {
            consistent_angles += 1;
        }
    }
    if consistent_angles == 0 {
        return Err(Error::Config(
            "no consistent Alice angle on the oracle grid".into(),
        ));
    }

    // Attack family: shared Werner(v) with Bob's measurements tilted by β,
    // matching both error rates q through (1 − v·cosβ)/2 = q.
    let mut ceiling = f64::INFINITY;
    for k in 0..90 {
        let beta = k as f64 * step;
        let v = (1.0 - 2.0 * qber) / beta.cos();
        if !(0.0..=1.0).contains(&v) {
            continue;
        }
        // Consistency: the model's error rates must equal the observed q.
        let q_model = (1.0 - v * beta.cos()) / 2.0;
        if (q_model - qber).abs() > 1e-9 {
            continue;
        }
        ceiling = ceiling.min(exact_dw(v, beta)?);
    }
    Ok(ceiling)
}

/// One row of the shipped reference curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub qber: f64,
    pub rate_one_switch: Option<f64>,
    pub rate_two_switch: Option<f64>,
}

const EMBEDDED_FIXTURE: &str = include_str!("../fixtures/fig2_reference.csv");

/// Load the reference curve, honoring the DI_KIT_FIXTURE_DIR override.
pub fn load_reference_fixture() -> Result<Vec<ReferenceRow>> {
    let text = match std::env::var_os("DI_KIT_FIXTURE_DIR") {
        Some(dir) => {
            let path = std::path::Path::new(&dir).join("fig2_reference.csv");
            std::fs::read_to_string(&path)
                .map_err(|_| Error::FixtureMissing(path.display().to_string()))?
        }
        None => EMBEDDED_FIXTURE.to_string(),
    };
    parse_fixture(&text)
}

fn parse_fixture(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("qber") {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::Config(format!("malformed fixture row: {line}")));
        }
        let parse = |s: &str| -> Result<Option<f64>> {
            let s = s.trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Config(format!("bad fixture number {s}: {e}")))
        };
        rows.push(ReferenceRow {
            qber: parse(cells[0])?.ok_or_else(|| Error::Config("missing qber".into()))?,
            rate_one_switch: parse(cells[1])?,
            rate_two_switch: parse(cells[2])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::FixtureMissing("fixture contains no rows".into()));
    }
    Ok(rows)
}

/// Signed deviations of computed points from the reference curve;
/// informational only (the reference uses a different entropy method).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationRow {
    pub qber: f64,
    pub computed_one_switch: Option<f64>,
    pub computed_two_switch: Option<f64>,
    pub reference_one_switch: Option<f64>,
    pub reference_two_switch: Option<f64>,
    pub deviation_one_switch: Option<f64>,
    pub deviation_two_switch: Option<f64>,
}

/// Compare curve points against the reference fixture per matching qber.
pub fn reference_report(points: &[CurvePoint]) -> Result<Vec<DeviationRow>> {
    let fixture = load_reference_fixture()?;
    let mut rows = Vec::new();
    for p in points {
        let matched = fixture.iter().find(|r| (r.qber - p.qber).abs() <= 1e-9);
        let (ref_one, ref_two) = match matched {
            Some(r) => (r.rate_one_switch, r.rate_two_switch),
            None => (None, None),
        };
        rows.push(DeviationRow {
            qber: p.qber,
            computed_one_switch: p.rate_one_switch,
            computed_two_switch: p.rate_two_switch,
            reference_one_switch: ref_one,
            reference_two_switch: ref_two,
            deviation_one_switch: match (p.rate_one_switch, ref_one) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            },
            deviation_two_switch: match (p.rate_two_switch, ref_two) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            },
        });
    }
    Ok(rows)
}

/// Decimal formatting with 9 significant digits (CSV contract).
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Render curve points as the canonical CSV (byte-deterministic).
pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("qber,rate_no_switch,rate_one_switch,rate_two_switch,tier,status\n");
    for p in points {
        let cell = |r: Option<f64>| r.map(fmt_sig9).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig9(p.qber),
            fmt_sig9(p.rate_no_switch),
            cell(p.rate_one_switch),
            cell(p.rate_two_switch),
            p.tier,
            p.status
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::binary_entropy;

    #[test]
    fn default_grid_matches_fixture_abscissae() {
        let grid = default_qber_grid();
        let fixture = load_reference_fixture().unwrap();
        assert_eq!(grid.len(), 14);
        assert_eq!(fixture.len(), 14);
        for (g, r) in grid.iter().zip(&fixture) {
            assert!((g - r.qber).abs() <= 1e-12);
        }
        // The last reference row only carries a two-switch value.
        assert!(fixture[13].rate_one_switch.is_none());
        assert!(fixture[13].rate_two_switch.is_some());
    }

    #[test]
    fn transfer_takes_the_minimum_per_side() {
        let caps = transfer_marginal_bounds(&[(Side::Alice, 0.1)]);
        assert_eq!(caps.alice, Some(0.1));
        assert_eq!(caps.bob, None);

        let caps = transfer_marginal_bounds(&[(Side::Alice, 0.1), (Side::Alice, 0.05)]);
        assert_eq!(caps.alice, Some(0.05));

        let caps = transfer_marginal_bounds(&[(Side::Alice, 0.1), (Side::Bob, 0.2)]);
        assert_eq!(caps.alice, Some(0.1));
        assert_eq!(caps.bob, Some(0.2));
    }

    #[test]
    fn analytic_tier_ideal_point_gives_unit_rate() {
        let cfg = ScenarioConfig {
            local_visibility_a: 1.0,
            local_visibility_b: 1.0,
            qber_grid: Some(vec![0.0]),
            tier: PipelineTier::Analytic,
            ..ScenarioConfig::default()
        };
        let result = run_scenario(&cfg, 1).unwrap();
        assert_eq!(result.points.len(), 1);
        let p = &result.points[0];
        assert!((p.rate_one_switch.unwrap() - 1.0).abs() <= 1e-12);
        assert!((p.rate_two_switch.unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(p.rate_no_switch, 0.0);
    }

    #[test]
    fn analytic_tier_matches_closed_form_on_grid() {
        let cfg = ScenarioConfig {
            local_visibility_a: 1.0,
            local_visibility_b: 1.0,
            qber_grid: Some(vec![0.0, 0.01, 0.02]),
            tier: PipelineTier::Analytic,
            ..ScenarioConfig::default()
        };
        let result = run_scenario(&cfg, 2).unwrap();
        for p in &result.points {
            let expect = 1.0 - 2.0 * binary_entropy(p.qber).unwrap();
            assert!((p.rate_one_switch.unwrap() - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn npo_eur_tier_orders_and_decreases() {
        let cfg = ScenarioConfig {
            qber_grid: Some(vec![0.0, 0.01, 0.02, 0.028]),
            ..ScenarioConfig::default()
        };
        let result = run_scenario(&cfg, 2).unwrap();
        assert!(!result.any_failed());
        let mut prev_one = f64::INFINITY;
        let mut prev_two = f64::INFINITY;
        for p in &result.points {
            let one = p.rate_one_switch.unwrap();
            let two = p.rate_two_switch.unwrap();
            assert!(two >= one - 1e-6, "two-switch below one-switch at {}", p.qber);
            assert!(one >= p.rate_no_switch - 1e-6);
            assert!(one <= prev_one + 1e-6, "one-switch not non-increasing");
            assert!(two <= prev_two + 1e-6, "two-switch not non-increasing");
            prev_one = one;
            prev_two = two;
        }
        // Side bounds were certified once per side.
        assert_eq!(result.side_bounds.len(), 2);
        assert!(result.side_bounds[0].s_max < 4.0, "certification is trivial");
    }

    #[test]
    fn attack_ceiling_basics() {
        // Perfect everything: the unique consistent model is the ideal one.
        let c = attack_oracle(0.0, (1.0, 1.0)).unwrap();
        assert!((c - 1.0).abs() <= 1e-9, "ceiling at q=0 is {c}");
        // Uncorrelated key bits certify nothing.
        let c = attack_oracle(0.5, (0.99, 0.99)).unwrap();
        assert!(c <= 1e-9, "ceiling at q=1/2 is {c}");
    }

    #[test]
    fn certified_rates_stay_under_the_attack_ceiling() {
        let cfg = ScenarioConfig {
            qber_grid: Some(vec![0.02]),
            ..ScenarioConfig::default()
        };
        let result = run_scenario(&cfg, 1).unwrap();
        let ceiling = attack_oracle(0.02, (0.99, 0.99)).unwrap();
        let p = &result.points[0];
        assert!(p.rate_one_switch.unwrap() <= ceiling + 1e-6);
        assert!(p.rate_two_switch.unwrap() <= ceiling + 1e-6);
    }

    #[test]
    fn reference_report_zero_deviation_on_fixture_inputs() {
        let fixture = load_reference_fixture().unwrap();
        let points: Vec<CurvePoint> = fixture
            .iter()
            .map(|r| CurvePoint {
                qber: r.qber,
                rate_no_switch: 0.0,
                rate_one_switch: r.rate_one_switch,
                rate_two_switch: r.rate_two_switch,
                tier: PipelineTier::NpoEur,
                status: "ok".into(),
            })
            .collect();
        let report = reference_report(&points).unwrap();
        for row in report {
            if let Some(d) = row.deviation_one_switch {
                assert_eq!(d, 0.0);
            }
            if let Some(d) = row.deviation_two_switch {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn fixture_dir_override_reports_missing_file() {
        let dir = std::env::temp_dir().join("dikit-missing-fixture-test");
        let _ = std::fs::create_dir_all(&dir);
        let prev = std::env::var_os("DI_KIT_FIXTURE_DIR");
        std::env::set_var("DI_KIT_FIXTURE_DIR", &dir);
        let result = load_reference_fixture();
        match prev {
            Some(v) => std::env::set_var("DI_KIT_FIXTURE_DIR", v),
            None => std::env::remove_var("DI_KIT_FIXTURE_DIR"),
        }
        assert!(matches!(result, Err(Error::FixtureMissing(_))));
    }

    #[test]
    fn csv_formatting_is_deterministic() {
        let points = vec![CurvePoint {
            qber: 0.0021538461538461538,
            rate_no_switch: 0.0,
            rate_one_switch: Some(0.38339995813598721),
            rate_two_switch: Some(0.3855024136952875),
            tier: PipelineTier::NpoEur,
            status: "ok".into(),
        }];
        let csv = curve_to_csv(&points);
        assert_eq!(
            csv,
            "qber,rate_no_switch,rate_one_switch,rate_two_switch,tier,status\n\
             0.00215384615,0.00000000,0.383399958,0.385502414,npo-eur,ok\n"
        );
    }

    #[test]
    fn config_rejects_bad_values() {
        let cfg = ScenarioConfig {
            qber_grid: Some(vec![]),
            ..ScenarioConfig::default()
        };
        assert!(matches!(cfg.resolve_grid(), Err(Error::Config(_))));
        let cfg = ScenarioConfig {
            local_visibility_a: 1.5,
            ..ScenarioConfig::default()
        };
        assert!(cfg.resolve_grid().is_err());
        let cfg = ScenarioConfig {
            qber_grid: Some(vec![0.7]),
            ..ScenarioConfig::default()
        };
        assert!(cfg.resolve_grid().is_err());
    }
}
