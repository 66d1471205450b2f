//! Release battery: eleven go/no-go checks covering accuracy, the
//! monotonicity formulas, free-boundary classification, and the geometry
//! readouts.  Each check returns a structured report so the command line
//! and the integration tests print the same one-line verdicts.  Heavy
//! fixtures (solves, marches) are computed once and shared.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{
    solve_pgs, solve_pgs_from, solve_penalized, EllipticProblem, SignoriniSolution, SolverParams,
};
use crate::epi::{epi_check, EpiParams};
use crate::free_boundary::{
    classify, cone_check, growth_fit, partition, reconstruct_graph, Classification, ClassifyParams,
    GraphParams,
};
use crate::functionals::{
    calibrate_almgren_constant, elliptic_quantities, radius_ladder, truncated_almgren,
    weiss_balanced, weiss_monotonicity_audit, QuadratureParams, RadialProfile,
};
use crate::grid::{
    apply_weighted_operator, trace, weighted_dot, Field, GridSpec, NodeKind, ThinField,
    WeightedGrid,
};
use crate::parabolic::{march, reduction_check, MarchParams, ParabolicProblem, Trajectory};
use crate::problems::{
    constant_obstacle_elliptic, driven_f_elliptic, moving_obstacle_parabolic, prototype_elliptic,
    tilted_prototype_elliptic,
};
use crate::reference::{
    degree_two_profile, dtn_identity_check, extension_constant, fit_prototype, kappa0, vhat0,
};
use crate::{Error, Result};

pub const NUM_CRITERIA: usize = 11;

/// Weight exponents every sweep runs over.
pub const ACCEPT_AS: [f64; 3] = [-0.5, 0.0, 0.5];

/// H(vhat0, 1) for unit amplitude, even reflection counted on both sides.
const H1_AT_ONE: [f64; 3] = [1.943_761_285_434, 1.570_796_326_795, 1.388_400_918_175];

const REL_LINF_TOL: f64 = 0.03;
const REFINE_RATIO_MIN: f64 = 1.5;
const SOLVE_BUDGET_S: f64 = 60.0;
const FREQ_REL_TOL: f64 = 0.02;
const PHI_ORIGIN_REL_TOL: f64 = 0.03;
const WEISS_PROTO_REL: f64 = 1e-2;
const WEISS_STEP_SLACK: f64 = 1e-3;
const MONO_STEP_SLACK: f64 = 1e-3;
const CALIBRATION_BUDGET: f64 = 50.0;
const IDENTITY_REL_TOL: f64 = 0.02;
const KAPPA_BAND_REL: f64 = 0.05;
const CAP_MARGIN: f64 = 0.05;
const MIN_FB_POINTS: usize = 10;
const EPI_RATIO_SLACK: f64 = 1e-6;
const EPI_KAPPA_MIN: f64 = 0.01;
const GROWTH_BAND_LO: f64 = 0.1;
const GROWTH_BAND_HI: f64 = 0.2;
const UT_DRIFT_TOL: f64 = 0.20;
const REDUCTION_FACTOR: f64 = 10.0;
const PENALTY_FINAL_REL: f64 = 1e-2;
const HOLDER_SLACK: f64 = 0.15;
const TILT_TOL_DEGREES: f64 = 5.0;
const CONE_OPENING: f64 = 0.3;
const DTN_REL_TOL: f64 = 0.05;
const BATTERY_BUDGET_S: f64 = 900.0;

/// Verdict of one criterion.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub details: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {} ({:.1}s): {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.details
        )
    }
}

/// Run one criterion by its number, 1 through 11.
pub fn run_criterion(id: usize) -> Result<CriterionReport> {
    match id {
        1 => Ok(run(1, "prototype accuracy under refinement", c1)),
        2 => Ok(run(2, "frequency reads the regular homogeneity", c2)),
        3 => Ok(run(3, "weiss balance on and off the prototype", c3)),
        4 => Ok(run(4, "calibrated monotonicity and integral identities", c4)),
        5 => Ok(run(5, "frequency gap at free-boundary points", c5)),
        6 => Ok(run(6, "epiperimetric decay of the weiss excess", c6)),
        7 => Ok(run(7, "moving free boundary signatures", c7)),
        8 => Ok(run(8, "penalization converges to the constrained solve", c8)),
        9 => Ok(run(9, "graph in time and tilted direction recovery", c9)),
        10 => Ok(run(10, "dirichlet-to-neumann symbol identity", c10)),
        11 => Ok(run(11, "invariant battery inside the budget", c11)),
        other => Err(Error::Config {
            field: "criterion".into(),
            message: format!("criteria are numbered 1..={NUM_CRITERIA}, got {other}"),
        }),
    }
}

/// Run the whole battery in order.
pub fn run_all() -> Vec<CriterionReport> {
    (1..=NUM_CRITERIA).map(|id| run_criterion(id).expect("ids are in range")).collect()
}

fn run(id: usize, name: &'static str, body: fn() -> Result<(bool, String)>) -> CriterionReport {
    let t0 = Instant::now();
    let (pass, details) = match body() {
        Ok(outcome) => outcome,
        Err(e) => (false, format!("evaluation failed: {e}")),
    };
    CriterionReport { id, name, pass, seconds: t0.elapsed().as_secs_f64(), details }
}

macro_rules! fixture {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(m) => return Ok((false, format!("fixture failed: {m}"))),
        }
    };
}

// ---------------------------------------------------------------------------
// shared fixtures

struct Solved {
    grid: Arc<WeightedGrid>,
    problem: EllipticProblem,
    sol: SignoriniSolution,
    seconds: f64,
}

struct Marched {
    grid: Arc<WeightedGrid>,
    problem: ParabolicProblem,
    traj: Trajectory,
    /// Thin gap U - psi per slice.
    gaps: Vec<ThinField>,
    /// Obstacle rows per slice.
    psis: Vec<ThinField>,
}

type Shared<T> = OnceLock<std::result::Result<T, String>>;

static PROTO_COARSE: [Shared<Solved>; 3] = [const { OnceLock::new() }; 3];
static PROTO_FINE: [Shared<Solved>; 3] = [const { OnceLock::new() }; 3];
static CONSTANT: Shared<Solved> = OnceLock::new();
static DRIVEN: Shared<Solved> = OnceLock::new();
static TILTED: Shared<Solved> = OnceLock::new();
static MOVING: [Shared<Marched>; 2] = [const { OnceLock::new() }; 2];

fn box_spec(n: usize, a: f64, nx: usize, ny: usize) -> GridSpec {
    GridSpec {
        n,
        a,
        half_width: 1.0,
        height: 1.0,
        nx,
        ny,
        grading: 2.0,
        periodic_x: false,
    }
}

fn accept_solver(tol: f64) -> SolverParams {
    SolverParams { tol, max_iter: 400_000, ..SolverParams::default() }
}

fn delta_for(a: f64) -> f64 {
    (3.0 - a) / 4.0
}

fn solve_fixture(
    spec: GridSpec,
    tol: f64,
    warm_from_boundary: bool,
    build: impl FnOnce(&Arc<WeightedGrid>) -> Result<EllipticProblem>,
) -> std::result::Result<Solved, String> {
    let inner = || -> Result<Solved> {
        let grid = WeightedGrid::build(spec)?;
        let problem = build(&grid)?;
        let params = accept_solver(tol);
        let t0 = Instant::now();
        let sol = if warm_from_boundary {
            solve_pgs_from(&problem, &params, &problem.dirichlet)?
        } else {
            solve_pgs(&problem, &params)?
        }
        .require_converged()?;
        Ok(Solved { grid, problem, sol, seconds: t0.elapsed().as_secs_f64() })
    };
    inner().map_err(|e| e.to_string())
}

fn a_index(a: f64) -> usize {
    ACCEPT_AS.iter().position(|&x| x == a).expect("sweep exponent")
}

fn proto(i: usize, fine: bool) -> &'static std::result::Result<Solved, String> {
    let cell = if fine { &PROTO_FINE[i] } else { &PROTO_COARSE[i] };
    cell.get_or_init(|| {
        let (nx, ny) = if fine { (257, 129) } else { (129, 65) };
        solve_fixture(box_spec(1, ACCEPT_AS[i], nx, ny), 1e-9, true, |g| {
            Ok(prototype_elliptic(g, 1.0))
        })
    })
}

fn constant_fixture() -> &'static std::result::Result<Solved, String> {
    CONSTANT.get_or_init(|| {
        solve_fixture(box_spec(1, 0.0, 129, 65), 1e-9, false, |g| {
            Ok(constant_obstacle_elliptic(g, -0.25, 2.0))
        })
    })
}

fn driven_fixture() -> &'static std::result::Result<Solved, String> {
    DRIVEN.get_or_init(|| {
        solve_fixture(box_spec(1, 0.0, 129, 65), 1e-9, true, |g| {
            Ok(driven_f_elliptic(g, 1.0, 2.0))
        })
    })
}

fn tilted_fixture() -> &'static std::result::Result<Solved, String> {
    TILTED.get_or_init(|| {
        solve_fixture(box_spec(2, 0.0, 97, 49), 1e-8, true, |g| {
            tilted_prototype_elliptic(g, 1.0, 20.0)
        })
    })
}

fn moving_fixture(j: usize) -> &'static std::result::Result<Marched, String> {
    MOVING[j].get_or_init(|| {
        let inner = || -> Result<Marched> {
            let nt = [32, 64][j];
            let grid = WeightedGrid::build(box_spec(1, 0.0, 129, 65))?;
            let problem = moving_obstacle_parabolic(&grid, 0.4);
            let params = MarchParams { nt, solver: accept_solver(1e-8) };
            let traj = march(&problem, &params)?;
            let mut gaps = Vec::with_capacity(traj.fields.len());
            let mut psis = Vec::with_capacity(traj.fields.len());
            for (k, u) in traj.fields.iter().enumerate() {
                let psi = problem.psi_at(traj.times[k]);
                let tr = trace(u);
                let gap = ThinField {
                    grid: Arc::clone(&grid),
                    values: tr
                        .values
                        .iter()
                        .zip(&psi.values)
                        .map(|(t, p)| t - p)
                        .collect(),
                };
                gaps.push(gap);
                psis.push(psi);
            }
            Ok(Marched { grid, problem, traj, gaps, psis })
        };
        inner().map_err(|e| e.to_string())
    })
}

// ---------------------------------------------------------------------------
// small helpers

fn proto_error(s: &Solved) -> f64 {
    let a = s.grid.a();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for node in 0..s.grid.num_nodes() {
        let (x, y) = s.grid.node_pos(node);
        let exact = vhat0(&x, y, a, 1.0, &[1.0, 0.0]);
        worst = worst.max((s.sol.v.values[node] - exact).abs());
        scale = scale.max(exact.abs());
    }
    worst / scale
}

fn profile_for(s: &Solved, rungs: usize) -> Result<RadialProfile> {
    profile_of(s, &s.sol.v, rungs)
}

fn profile_of(s: &Solved, v: &Field, rungs: usize) -> Result<RadialProfile> {
    let ladder = radius_ladder(&s.grid, &[0.0, 0.0], rungs)?;
    elliptic_quantities(v, Some(&s.problem.f), &[0.0, 0.0], &ladder, &QuadratureParams::default())
}

/// Worst relative defect of the surface and identity forms of I.
fn i_identity_defect(p: &RadialProfile) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..p.radii.len() {
        let scale = p.i_surf[i].abs().max(p.i_id[i].abs()).max(1e-300);
        worst = worst.max((p.i_surf[i] - p.i_id[i]).abs() / scale);
    }
    worst
}

/// Worst relative defect of dH/dr = ((n+a)/r) H + 2 I over a few probe
/// radii.  The derivative is read from a two-percent bracket evaluated by
/// the same angular panels, so interpolation noise cancels in the
/// difference; the defect is measured against the size of the terms, not
/// their sum, which can pass through zero when I is negative.
fn h_derivative_defect(v: &Field, probes: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &r in probes {
        let radii = [0.98 * r, r, 1.02 * r];
        let p =
            elliptic_quantities(v, None, &[0.0, 0.0], &radii, &QuadratureParams::default())?;
        let lhs = (p.h[2] - p.h[0]) / (radii[2] - radii[0]);
        let geom = (p.n as f64 + p.a) / r * p.h[1];
        let rhs = geom + 2.0 * p.i_surf[1];
        let scale = lhs.abs().max(geom.abs() + 2.0 * p.i_surf[1].abs()).max(1e-300);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

/// Rightmost (largest s) contact abscissa of a thin gap row along e, or
/// None when nothing is in contact.  Rim nodes are skipped: the gap also
/// vanishes wherever the lateral data meets a vanishing obstacle, and
/// those points are clamped, not free.
fn edge_of_contact(gap: &ThinField, e: &[f64; 2], tol_rel: f64) -> Option<f64> {
    let g = &gap.grid;
    let tol = tol_rel * gap.max_abs();
    let mut edge: Option<f64> = None;
    for fx in 0..g.num_thin() {
        let ix = g.decode_x(fx);
        if (0..g.n()).any(|ax| ix[ax] == 0 || ix[ax] == g.nx() - 1) {
            continue;
        }
        if gap.values[fx] <= tol {
            let pos = g.thin_pos(fx);
            let s: f64 = (0..g.n()).map(|ax| pos[ax] * e[ax]).sum();
            edge = Some(edge.map_or(s, |b: f64| b.max(s)));
        }
    }
    edge
}

/// Sub-cell crossing of a single thin gap row along e near the contact
/// edge; the tracking seed is the outermost contact node.
fn single_crossing(gap: &ThinField, e: [f64; 2], tol_rel: f64) -> Result<f64> {
    let g = &gap.grid;
    let seed = edge_of_contact(gap, &e, tol_rel).ok_or_else(|| {
        Error::EmptySample("no contact nodes to seed the crossing search".into())
    })?;
    let params = GraphParams {
        e,
        seed,
        tol_rel,
        ..GraphParams::default_for(g)
    };
    let rec = reconstruct_graph(g, std::slice::from_ref(gap), &[0.0], &params)?;
    Ok(rec.g[0][0])
}

fn classify_params(a: f64) -> ClassifyParams {
    ClassifyParams { delta: delta_for(a), ..ClassifyParams::default_for(a) }
}

fn band_label(kappa_hat: f64, n: usize, a: f64, delta: f64) -> (bool, bool) {
    let target = n as f64 + 3.0;
    let cap = n as f64 + a + 2.0 + 2.0 * delta;
    let regular = (kappa_hat - target).abs() <= KAPPA_BAND_REL * target;
    let capped = kappa_hat >= cap - CAP_MARGIN;
    (regular, capped)
}

// ---------------------------------------------------------------------------
// criteria

fn c1() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..ACCEPT_AS.len() {
        let coarse = fixture!(proto(i, false));
        let fine = fixture!(proto(i, true));
        let e_c = proto_error(coarse);
        let e_f = proto_error(fine);
        let ratio = e_c / e_f;
        let ok = e_c <= REL_LINF_TOL
            && ratio >= REFINE_RATIO_MIN
            && coarse.seconds <= SOLVE_BUDGET_S
            && fine.seconds <= SOLVE_BUDGET_S;
        pass &= ok;
        parts.push(format!(
            "a={:+.1}: err {:.2e}->{:.2e} (x{:.2}), {:.1}s+{:.1}s",
            ACCEPT_AS[i], e_c, e_f, ratio, coarse.seconds, fine.seconds
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn c2() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..ACCEPT_AS.len() {
        let a = ACCEPT_AS[i];
        let s = fixture!(proto(i, false));
        let p = profile_for(s, 12)?;
        let k0 = kappa0(a);
        let mut freq_worst = 0.0f64;
        let mut in_window = 0usize;
        for (r, nf) in p.radii.iter().zip(&p.n_freq) {
            if (0.1..=0.5).contains(r) {
                in_window += 1;
                freq_worst = freq_worst.max((nf - k0).abs() / k0);
            }
        }
        let phi = truncated_almgren(&p, delta_for(a), 0.0)?;
        let target = s.grid.n() as f64 + 3.0;
        let phi_err = (phi[0] - target).abs() / target;
        let ok = in_window >= 3 && freq_worst <= FREQ_REL_TOL && phi_err <= PHI_ORIGIN_REL_TOL;
        pass &= ok;
        parts.push(format!(
            "a={a:+.1}: N off by {:.2}% over {} radii, phi({:.3}) = {:.3}",
            100.0 * freq_worst,
            in_window,
            p.radii[0],
            phi[0]
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn c3() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..ACCEPT_AS.len() {
        let s = fixture!(proto(i, false));
        let p = profile_for(s, 12)?;
        let w = weiss_balanced(&p);
        let worst = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let bound = WEISS_PROTO_REL * H1_AT_ONE[i];
        pass &= worst <= bound;
        parts.push(format!("a={:+.1}: |W| <= {:.2e} (bound {:.2e})", ACCEPT_AS[i], worst, bound));
    }
    let s = fixture!(driven_fixture());
    let p = profile_for(s, 12)?;
    let w = weiss_balanced(&p);
    let audit = weiss_monotonicity_audit(&p, &w, WEISS_STEP_SLACK);
    pass &= audit.c_min.is_finite();
    parts.push(format!("driven-F: compensation C = {:.3e}", audit.c_min));
    Ok((pass, parts.join("; ")))
}

fn c4() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut cases: Vec<(String, &Solved, f64)> = Vec::new();
    for i in 0..ACCEPT_AS.len() {
        cases.push((format!("prototype a={:+.1}", ACCEPT_AS[i]), fixture!(proto(i, false)), 0.0));
    }
    // a constant obstacle is removed by translating the solution, which
    // keeps the equation and the complementarity structure intact
    cases.push(("constant".into(), fixture!(constant_fixture()), 0.25));
    cases.push(("driven-F".into(), fixture!(driven_fixture()), 0.0));
    cases.push(("tilted".into(), fixture!(tilted_fixture()), 0.0));

    for (label, s, shift) in cases {
        let a = s.grid.a();
        let mut field = s.sol.v.clone();
        if shift != 0.0 {
            for v in &mut field.values {
                *v += shift;
            }
        }
        let p = profile_of(s, &field, 12)?;
        let delta = delta_for(a);
        let c = calibrate_almgren_constant(&p, delta, CALIBRATION_BUDGET)?;
        let phi = truncated_almgren(&p, delta, c)?;
        let mut dip = 0.0f64;
        let mut dip_r = 0.0;
        for k in 1..phi.len() {
            let d = phi[k] - phi[k - 1];
            if d < dip {
                dip = d;
                dip_r = p.radii[k];
            }
        }
        let mono = dip >= -MONO_STEP_SLACK;
        let dh = h_derivative_defect(&field, &[p.radii[2], p.radii[5], p.radii[8]])?;
        let di = i_identity_defect(&p);
        let ok = mono && dh <= IDENTITY_REL_TOL && di <= IDENTITY_REL_TOL;
        pass &= ok;
        let mut line =
            format!("{label}: C = {c:.2e}, dH {:.2}%, I {:.2}%", 100.0 * dh, 100.0 * di);
        if !mono {
            line.push_str(&format!(", phi dips {:.1e} at r={dip_r:.3}", -dip));
        }
        parts.push(line);
    }
    Ok((pass, parts.join("; ")))
}

fn c5() -> Result<(bool, String)> {
    struct Point {
        label: String,
        report: crate::free_boundary::RegularPointReport,
        n: usize,
        a: f64,
    }
    let mut points = Vec::new();

    for i in 0..ACCEPT_AS.len() {
        let a = ACCEPT_AS[i];
        let s = fixture!(proto(i, false));
        let x = single_crossing(&s.sol.thin_value, [1.0, 0.0], 1e-6)?;
        let report = classify(&s.sol.v, &[x, 0.0], &classify_params(a))?;
        points.push(Point { label: format!("prototype a={a:+.1}"), report, n: 1, a });
    }

    let s = fixture!(constant_fixture());
    let mut shifted = s.sol.v.clone();
    for v in &mut shifted.values {
        *v += 0.25;
    }
    for e in [[1.0, 0.0], [-1.0, 0.0]] {
        let sx = single_crossing(&s.sol.thin_value, e, 1e-6)?;
        let center = [sx * e[0], 0.0];
        let report = classify(&shifted, &center, &classify_params(0.0))?;
        points.push(Point { label: format!("constant x={:+.2}", center[0]), report, n: 1, a: 0.0 });
    }

    let s = fixture!(driven_fixture());
    let x = single_crossing(&s.sol.thin_value, [1.0, 0.0], 1e-6)?;
    let report = classify(&s.sol.v, &[x, 0.0], &classify_params(0.0))?;
    points.push(Point { label: format!("driven-F x={x:+.2}"), report, n: 1, a: 0.0 });

    let s = fixture!(tilted_fixture());
    let e = [20f64.to_radians().cos(), 20f64.to_radians().sin()];
    let params = GraphParams { e, seed: 0.0, tol_rel: 1e-6, ..GraphParams::default_for(&s.grid) };
    let rec = reconstruct_graph(&s.grid, std::slice::from_ref(&s.sol.thin_value), &[0.0], &params)?;
    let eperp = [-e[1], e[0]];
    let mut cols: Vec<usize> = (0..rec.xprime.len()).collect();
    cols.sort_by(|&p, &q| rec.xprime[p].abs().partial_cmp(&rec.xprime[q].abs()).unwrap());
    let mut taken = 0;
    for col in cols {
        if taken == 4 {
            break;
        }
        let u = rec.xprime[col];
        let sx = rec.g[0][col];
        let center = [u * eperp[0] + sx * e[0], u * eperp[1] + sx * e[1]];
        if center[0].abs().max(center[1].abs()) > 0.3 {
            continue;
        }
        let report = classify(&s.sol.v, &center, &classify_params(0.0))?;
        points.push(Point { label: format!("tilted x'={u:+.2}"), report, n: 2, a: 0.0 });
        taken += 1;
    }

    let mut pass = points.len() >= MIN_FB_POINTS;
    let mut parts = vec![format!("{} points", points.len())];
    for p in &points {
        let (regular, capped) = band_label(p.report.kappa_hat, p.n, p.a, delta_for(p.a));
        let in_band = regular || capped;
        pass &= in_band;
        let consistent = match p.report.classification {
            Classification::Regular => regular,
            Classification::Nonregular => capped,
            Classification::Indeterminate => false,
        };
        pass &= consistent;
        parts.push(format!(
            "{}: {:.3} ({})",
            p.label,
            p.report.kappa_hat,
            p.report.classification.label()
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn c6() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &a in &ACCEPT_AS {
        let params = EpiParams {
            seed: 2026,
            solver: accept_solver(1e-8),
            ..EpiParams::default()
        };
        let report = epi_check(a, &params)?;
        let ratio_ok = report
            .samples
            .iter()
            .filter_map(|s| s.ratio)
            .all(|r| r <= 1.0 + EPI_RATIO_SLACK);
        let ok = ratio_ok && report.kappa_hat.is_finite() && report.kappa_hat >= EPI_KAPPA_MIN;
        pass &= ok;
        parts.push(format!(
            "a={a:+.1}: kappa {:.3}, worst ratio {:.6}, beta {:.3}",
            report.kappa_hat, report.max_ratio, report.beta
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn moving_edges(m: &Marched, tol_rel: f64) -> Result<[f64; 2]> {
    let last = m.gaps.last().expect("march keeps the initial slice");
    let right = single_crossing(last, [1.0, 0.0], tol_rel)?;
    let left = -single_crossing(last, [-1.0, 0.0], tol_rel)?;
    Ok([left, right])
}

fn reduced_slices(m: &Marched) -> Vec<Field> {
    m.traj
        .fields
        .iter()
        .zip(&m.psis)
        .map(|(u, psi)| {
            let mut w = u.clone();
            let g = &m.grid;
            for fx in 0..g.num_thin() {
                for iy in 0..g.ny() {
                    w.values[g.idx(fx, iy)] -= psi.values[fx];
                }
            }
            w
        })
        .collect()
}

fn ut_near_edges(m: &Marched, edges: &[f64; 2]) -> f64 {
    let k = m.traj.fields.len() - 1;
    let ut = m.traj.ut_slice(k);
    let g = &m.grid;
    let mut worst = 0.0f64;
    for node in 0..g.num_nodes() {
        let (x, y) = g.node_pos(node);
        let near = edges.iter().any(|e| (x[0] - e).abs() <= 0.2) && y <= 0.2;
        if near {
            worst = worst.max(ut.values[node].abs());
        }
    }
    worst
}

fn c7() -> Result<(bool, String)> {
    let coarse = fixture!(moving_fixture(0));
    let fine = fixture!(moving_fixture(1));
    let k0 = kappa0(coarse.grid.a());
    let mut pass = true;
    let mut parts = Vec::new();

    let edges = moving_edges(coarse, 1e-3)?;
    let slices = reduced_slices(coarse);
    let refs: Vec<&Field> = slices.iter().collect();
    let g = &coarse.grid;
    let psi_last = coarse.psis.last().unwrap();
    let psi_tiny = 1e-9 * psi_last.max_abs();
    let on: Vec<f64> = (1..g.nx() - 1)
        .filter(|&j| psi_last.values[j] > psi_tiny)
        .map(|j| g.thin_pos(j)[0])
        .collect();
    let (sup_lo, sup_hi) = (on[0], *on.last().unwrap());
    for (side, x) in ["left", "right"].iter().zip(edges) {
        // the fit lives just above the resolution floor and must stop
        // before the ball pokes past the obstacle's support, where the
        // edge power law ends
        let floor = radius_ladder(g, &[x, 0.0], 2)?[0];
        let d_sup = (sup_hi - x).min(x - sup_lo);
        let r_top = (0.9 * d_sup).min(2.2 * floor);
        if r_top < 1.3 * floor {
            return Ok((false, format!("growth window collapsed at x = {x:+.3}")));
        }
        let ratio = (r_top / floor).powf(1.0 / 3.0);
        let radii: Vec<f64> = (0..4).map(|k| floor * ratio.powi(k)).collect();
        let slope = growth_fit(&refs, &coarse.traj.times, &[x, 0.0], &radii)?;
        let ok = slope >= k0 - GROWTH_BAND_LO && slope <= k0 + GROWTH_BAND_HI;
        pass &= ok;
        parts.push(format!("{side} edge x={x:+.3}: growth {slope:.3}"));
    }

    let u1 = ut_near_edges(coarse, &edges);
    let edges_fine = moving_edges(fine, 1e-3)?;
    let u2 = ut_near_edges(fine, &edges_fine);
    let drift = (u1 - u2).abs() / u1.abs().max(u2.abs());
    pass &= drift <= UT_DRIFT_TOL;
    parts.push(format!("sup|U_t| {u1:.3} vs {u2:.3} ({:.1}% drift)", 100.0 * drift));

    let tol = 1e-8;
    for (label, m) in [("nt=32", coarse), ("nt=64", fine)] {
        let mut worst = 0.0f64;
        for k in 1..m.traj.fields.len() {
            let res = reduction_check(&m.problem, &m.traj, k)?;
            worst = worst.max(res.pde_residual.max(res.comp_residual));
        }
        pass &= worst <= REDUCTION_FACTOR * tol;
        parts.push(format!("{label}: reduction residual {worst:.1e}"));
    }
    Ok((pass, parts.join("; ")))
}

fn c8() -> Result<(bool, String)> {
    let s = fixture!(proto(a_index(0.0), false));
    let scale = s.sol.v.max_abs();
    let schedule = SolverParams::default().epsilon_schedule;
    let mut errors = Vec::new();
    let mut init: Option<Field> = None;
    for &eps in &schedule {
        let pen = solve_penalized(&s.problem, &accept_solver(1e-9), eps, init.as_ref())?
            .require_converged()?;
        let err = pen
            .v
            .values
            .iter()
            .zip(&s.sol.v.values)
            .fold(0.0f64, |m, (p, v)| m.max((p - v).abs()));
        errors.push(err);
        init = Some(pen.v);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let final_ok = *errors.last().unwrap() <= PENALTY_FINAL_REL * scale;
    let pass = decreasing && final_ok;
    let listed: Vec<String> = schedule
        .iter()
        .zip(&errors)
        .map(|(e, d)| format!("eps {e:.0e}: {d:.2e}"))
        .collect();
    Ok((pass, listed.join("; ")))
}

fn c9() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();

    let m = fixture!(moving_fixture(0));
    let target = 2.0 / (3.0 - m.grid.a());
    let mut holder: Option<(usize, f64, f64)> = None;
    for start in 1..m.gaps.len().saturating_sub(8) {
        let Some(seed) = edge_of_contact(&m.gaps[start], &[1.0, 0.0], 1e-3) else {
            continue;
        };
        let params = GraphParams {
            e: [1.0, 0.0],
            seed,
            tol_rel: 1e-3,
            ..GraphParams::default_for(&m.grid)
        };
        match reconstruct_graph(&m.grid, &m.gaps[start..], &m.traj.times[start..], &params) {
            Ok(rec) => {
                holder = Some((start, rec.holder_t_exponent, rec.max_motion));
                break;
            }
            Err(_) => continue,
        }
    }
    match holder {
        Some((start, expo, motion)) => {
            let ok = expo.is_finite() && expo >= target - HOLDER_SLACK && motion > 0.05;
            pass &= ok;
            parts.push(format!(
                "right edge from slice {start}: exponent {expo:.3} (target {target:.3}), moved {motion:.3}"
            ));
        }
        None => {
            pass = false;
            parts.push("no graphical suffix of the march".into());
        }
    }

    let s = fixture!(tilted_fixture());
    let fit = fit_prototype(&s.sol.v, &[0.0, 0.0], 0.5)?;
    let truth = [20f64.to_radians().cos(), 20f64.to_radians().sin()];
    let dot: f64 = fit.e[0] * truth[0] + fit.e[1] * truth[1];
    let angle = dot.clamp(-1.0, 1.0).acos().to_degrees();
    pass &= angle <= TILT_TOL_DEGREES;
    let part = partition(&s.sol, 1e-6)?;
    let cone_ok = cone_check(&s.grid, &part, &[0.0, 0.0], &fit.e, CONE_OPENING, 0.5);
    pass &= cone_ok;
    parts.push(format!(
        "tilt recovered to {angle:.2} degrees (misfit {:.1e}), cone check {}",
        fit.rel_misfit,
        if cone_ok { "holds" } else { "violated" }
    ));
    Ok((pass, parts.join("; ")))
}

fn c10() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1.0, 2.0] {
        let coarse = dtn_identity_check(0.0, k, 129, 65)?;
        let fine = dtn_identity_check(0.0, k, 257, 129)?;
        let ok = coarse.rel_l2_error <= DTN_REL_TOL
            && fine.rel_l2_error < coarse.rel_l2_error
            && coarse.c_s == 1.0;
        pass &= ok;
        parts.push(format!(
            "k={k}: err {:.2e}->{:.2e}, C_s = {}",
            coarse.rel_l2_error, fine.rel_l2_error, coarse.c_s
        ));
    }
    pass &= extension_constant(0.5)? == 1.0;
    Ok((pass, parts.join("; ")))
}

fn c11() -> Result<(bool, String)> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let mut failures: Vec<&'static str> = Vec::new();

    let g = WeightedGrid::build(box_spec(1, -0.3, 33, 17))?;

    let mut random_interior = |g: &Arc<WeightedGrid>| {
        let mut f = Field::zeros(g);
        for node in 0..g.num_nodes() {
            if g.kind(node) == NodeKind::Interior {
                f.values[node] = rng.gen_range(-1.0..1.0);
            }
        }
        f
    };
    let u = random_interior(&g);
    let w = random_interior(&g);
    let au = apply_weighted_operator(&u);
    let aw = apply_weighted_operator(&w);
    let lhs = weighted_dot(&au, &w);
    let rhs = weighted_dot(&u, &aw);
    if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(rhs.abs()).max(1e-12) {
        failures.push("self-adjointness");
    }

    let a = g.a();
    for (name, f) in [
        ("kernel constant", Field::from_fn(&g, |_, _| 1.0)),
        ("kernel linear", Field::from_fn(&g, |x, _| 1.0 - 0.5 * x[0])),
        ("kernel y-profile", Field::from_fn(&g, move |_, y| 3.0 + 2.0 * y.powf(1.0 - a))),
    ] {
        let scale = f.max_abs();
        let af = apply_weighted_operator(&f);
        let mut worst = 0.0f64;
        for node in 0..g.num_nodes() {
            worst = worst.max(af.values[node].abs());
        }
        if worst > 1e-9 * scale {
            failures.push(name);
        }
    }

    let quad_residual = |nodes: usize| -> Result<f64> {
        let gq = WeightedGrid::build(box_spec(1, -0.3, nodes, nodes))?;
        let f = Field::from_fn(&gq, |x, y| degree_two_profile(x, y, gq.a()));
        let af = apply_weighted_operator(&f);
        let mut worst = 0.0f64;
        for node in 0..gq.num_nodes() {
            let (_, y) = gq.node_pos(node);
            if y >= 0.15 {
                worst = worst.max(af.values[node].abs());
            }
        }
        Ok(worst)
    };
    if quad_residual(17)? < 2.5 * quad_residual(33)? {
        failures.push("refinement consistency");
    }

    let gp = WeightedGrid::build(box_spec(1, 0.2, 49, 25))?;
    let base = prototype_elliptic(&gp, 1.0);
    let mut raised = prototype_elliptic(&gp, 1.0);
    for v in &mut raised.dirichlet.values {
        *v += 0.3;
    }
    let params = accept_solver(1e-9);
    let sol_base = solve_pgs(&base, &params)?.require_converged()?;
    let sol_up = solve_pgs(&raised, &params)?.require_converged()?;
    if !sol_base
        .v
        .values
        .iter()
        .zip(&sol_up.v.values)
        .all(|(b, u)| *u >= b - 1e-9)
    {
        failures.push("comparison principle");
    }

    let p = {
        let v = Field::from_fn(&gp, |x, y| vhat0(x, y, gp.a(), 1.0, &[1.0, 0.0]));
        elliptic_quantities(&v, None, &[0.0, 0.0], &[0.2, 0.35, 0.6], &QuadratureParams::default())?
    };
    let k0 = kappa0(gp.a());
    let wb = weiss_balanced(&p);
    let algebra_ok = (0..p.radii.len()).all(|i| {
        let r = p.radii[i];
        let derived = p.h[i] / r.powi(p.n as i32 + 3) * (p.n_freq[i] - k0);
        (derived - wb[i]).abs() <= 1e-10 * wb[i].abs().max(1.0)
    });
    if !algebra_ok {
        failures.push("weiss algebra");
    }

    let v = Field::from_fn(&gp, |x, y| vhat0(x, y, gp.a(), 1.0, &[1.0, 0.0]));
    let mut scaled = v.clone();
    for s in &mut scaled.values {
        *s *= 41.0;
    }
    let radii = [0.2, 0.35, 0.6];
    let p1 = elliptic_quantities(&v, None, &[0.0, 0.0], &radii, &QuadratureParams::default())?;
    let p2 = elliptic_quantities(&scaled, None, &[0.0, 0.0], &radii, &QuadratureParams::default())?;
    let invariant = (0..radii.len())
        .all(|i| (p1.n_freq[i] - p2.n_freq[i]).abs() <= 1e-11 * p1.n_freq[i].abs());
    if !invariant {
        failures.push("frequency scale invariance");
    }

    let dir = std::env::temp_dir().join(format!("signorini-accept-{}", std::process::id()));
    crate::io::ensure_dir(&dir)?;
    let f1 = dir.join("det-1.csv");
    let f2 = dir.join("det-2.csv");
    crate::io::write_field_csv(&f1, &sol_base.v)?;
    crate::io::write_field_csv(&f2, &sol_base.v)?;
    let b1 = std::fs::read(&f1)?;
    let b2 = std::fs::read(&f2)?;
    if crate::io::sha256_hex(&b1) != crate::io::sha256_hex(&b2) {
        failures.push("artifact determinism");
    }
    let _ = std::fs::remove_dir_all(&dir);

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed <= BATTERY_BUDGET_S;
    let details = if failures.is_empty() {
        format!("9 invariants upheld in {elapsed:.1}s (budget {BATTERY_BUDGET_S:.0}s)")
    } else {
        format!("violated: {}", failures.join(", "))
    };
    Ok((pass, details))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_ids_are_stable_and_bounded() {
        assert!(run_criterion(0).is_err());
        assert!(run_criterion(12).is_err());
        let r = run_criterion(11).unwrap();
        assert_eq!(r.id, 11);
        assert!(r.line().contains("criterion 11"));
    }

    #[test]
    fn battery_of_invariants_holds() {
        let r = run_criterion(11).unwrap();
        assert!(r.pass, "{}", r.details);
    }

    #[test]
    fn reports_serialize_with_verdict_and_timing() {
        let r = CriterionReport {
            id: 3,
            name: "sample",
            pass: true,
            seconds: 0.25,
            details: "fine".into(),
        };
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["id"], 3);
        assert_eq!(json["pass"], true);
        assert!(json["seconds"].as_f64().unwrap() > 0.0);
    }
}
