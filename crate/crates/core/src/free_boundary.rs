//! Free-boundary extraction and analysis: coincidence-set partition,
//! regular-point classification through the frequency gap, growth and
//! nondegeneracy exponent fits, directional cone containment, and
//! reconstruction of the moving graph x = g(x', t).
//!
//! All thresholds are relative to field scales so that every extraction
//! and classification is invariant under multiplying the solution by a
//! positive constant.

use crate::elliptic::SignoriniSolution;
use crate::functionals::{
    elliptic_quantities, radius_ladder, truncated_almgren, QuadratureParams,
};
use crate::grid::{Field, ThinField, WeightedGrid};
use crate::reference::kappa0;
use crate::{Error, Result};

/// Thin-plane phase decomposition of a solution.
pub struct ThinPartition {
    /// Contact mask per thin node; the positive phase is its complement.
    pub contact: Vec<bool>,
    /// Thin nodes adjacent to both phases.
    pub fb_points: Vec<usize>,
    /// Boundary nodes of the zero-flux contact set {U = psi, d_y^a U = 0}.
    pub extended_fb_points: Vec<usize>,
    pub contact_fraction: f64,
    /// Contact reaches the lateral rim of the thin box.
    pub rim_contact: bool,
}

impl ThinPartition {
    pub fn positive(&self, fx: usize) -> bool {
        !self.contact[fx]
    }
}

fn band_points(g: &WeightedGrid, inside: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    for fx in 0..g.num_thin() {
        let mut mixed = false;
        for axis in 0..g.n() {
            for step in [-1isize, 1] {
                if let Some(nb) = g.x_neighbor(fx, axis, step) {
                    if inside[nb] != inside[fx] {
                        mixed = true;
                    }
                }
            }
        }
        if mixed {
            out.push(fx);
        }
    }
    out
}

fn on_rim(g: &WeightedGrid, fx: usize) -> bool {
    let ix = g.decode_x(fx);
    (0..g.n()).any(|axis| ix[axis] == 0 || ix[axis] == g.nx() - 1)
}

/// Partition the thin set into contact and positive phases.  The gap is
/// the solution's thin value, already measured against the obstacle;
/// `tol_rel` scales the threshold by its sup, and callers typically pass
/// ten times the solver tolerance.
pub fn partition(sol: &SignoriniSolution, tol_rel: f64) -> Result<ThinPartition> {
    let g = &sol.v.grid;
    let m = g.num_thin();
    if m == 0 {
        return Err(Error::EmptySample("grid has no thin nodes".into()));
    }
    let mut gap = vec![0.0; m];
    let mut scale = 0.0f64;
    for fx in 0..m {
        gap[fx] = sol.thin_value.values[fx];
        scale = scale.max(gap[fx].abs());
    }
    let tol = tol_rel * scale;
    let contact: Vec<bool> = gap.iter().map(|&d| d <= tol).collect();

    let flux_scale = sol.reaction.max_abs();
    let quiet: Vec<bool> = (0..m)
        .map(|fx| contact[fx] && sol.reaction.values[fx].abs() <= tol_rel * flux_scale)
        .collect();

    let n_contact = contact.iter().filter(|c| **c).count();
    let rim_contact = (0..m).any(|fx| contact[fx] && on_rim(g, fx));
    Ok(ThinPartition {
        fb_points: band_points(g, &contact),
        extended_fb_points: band_points(g, &quiet),
        contact_fraction: n_contact as f64 / m as f64,
        contact,
        rim_contact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Regular,
    Nonregular,
    Indeterminate,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Regular => "regular",
            Classification::Nonregular => "nonregular",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

/// Controls for frequency-gap classification.
#[derive(Clone, Debug)]
pub struct ClassifyParams {
    pub delta: f64,
    pub c_mono: f64,
    /// Width of the acceptance band around the regular value n + 3.
    pub class_tol: f64,
    /// Ladder length for the radial profile.
    pub rungs: usize,
    pub quad: QuadratureParams,
}

impl ClassifyParams {
    /// Defaults with the truncation exponent at the midpoint of its
    /// admissible range ((1-a)/2, 1).
    pub fn default_for(a: f64) -> Self {
        Self {
            delta: (3.0 - a) / 4.0,
            c_mono: 0.05,
            class_tol: 0.25,
            rungs: 10,
            quad: QuadratureParams::default(),
        }
    }
}

pub struct RegularPointReport {
    pub point: [f64; 2],
    /// Truncated-frequency estimate at the smallest trusted radius.
    pub kappa_hat: f64,
    pub classification: Classification,
    /// Log-log slope of r -> sup over the r-ball of |w|.
    pub growth_slope: f64,
    /// Filled in by nondegeneracy_check when a graph is available.
    pub nondeg_constant: Option<f64>,
}

/// Classify one thin point of the obstacle-reduced field w = U - psi
/// through the frequency gap: the truncated frequency limit lands either
/// near the regular value n + 3 or at the truncation cap, never in
/// between for true solutions.
pub fn classify(w: &Field, center: &[f64; 2], params: &ClassifyParams) -> Result<RegularPointReport> {
    let g = &w.grid;
    let ladder = radius_ladder(g, center, params.rungs)?;
    let profile = elliptic_quantities(w, None, center, &ladder, &params.quad)?;
    let phi = truncated_almgren(&profile, params.delta, params.c_mono)?;
    // the compensation factor exp(c r^{1-delta}) tends to one at the
    // origin, so the limit is estimated by removing it from the lowest rung
    let comp = (params.c_mono * ladder[0].powf(1.0 - params.delta)).exp();
    let kappa_hat = phi[0] / comp;
    let target = g.n() as f64 + 3.0;
    let cap = g.n() as f64 + g.a() + 2.0 + 2.0 * params.delta;
    let classification = if (kappa_hat - target).abs() <= params.class_tol {
        Classification::Regular
    } else if kappa_hat >= cap - 0.05 {
        Classification::Nonregular
    } else {
        Classification::Indeterminate
    };
    let growth_slope = growth_fit(&[w], &[0.0], center, &ladder)?;
    Ok(RegularPointReport {
        point: *center,
        kappa_hat,
        classification,
        growth_slope,
        nondeg_constant: None,
    })
}

/// Fitted exponent of r -> sup |w| over parabolic cylinders
/// B_r(center) x (t_end - r^2, t_end].  For a single slice pass one field
/// and any time; the cylinders then degenerate to balls.  Returns
/// +infinity when the sup falls below the floor (deep contact).
pub fn growth_fit(
    slices: &[&Field],
    times: &[f64],
    center: &[f64; 2],
    radii: &[f64],
) -> Result<f64> {
    if slices.is_empty() || slices.len() != times.len() {
        return Err(Error::EmptySample(
            "growth fit needs matching slices and times".into(),
        ));
    }
    let g = &slices[0].grid;
    let n = g.n();
    let t_end = *times.last().unwrap();
    let mut global = 0.0f64;
    for s in slices {
        global = global.max(s.max_abs());
    }
    let mut sups = Vec::with_capacity(radii.len());
    for &r in radii {
        let r2 = r * r;
        let mut sup = 0.0f64;
        for (k, s) in slices.iter().enumerate() {
            if t_end - times[k] > r2 {
                continue;
            }
            for fx in 0..g.num_thin() {
                let pos = g.thin_pos(fx);
                let mut d2 = 0.0;
                for axis in 0..n {
                    d2 += (pos[axis] - center[axis]).powi(2);
                }
                if d2 > r2 {
                    continue;
                }
                for iy in 0..g.ny() {
                    let y = g.ys[iy];
                    if d2 + y * y <= r2 {
                        sup = sup.max(s.values[g.idx(fx, iy)].abs());
                    } else {
                        break;
                    }
                }
            }
            sup = sup.max(sphere_sup(s, center, r));
        }
        if sup <= 1e-14 * global {
            return Ok(f64::INFINITY);
        }
        sups.push(sup);
    }
    Ok(log_log_slope(radii, &sups))
}

/// Interpolated samples on the sphere of radius r, where the sup of a
/// homogeneous profile lives; this removes the inward node-lag bias of
/// the pure lattice scan.
fn sphere_sup(s: &Field, center: &[f64; 2], r: f64) -> f64 {
    let g = &s.grid;
    let w = g.spec.half_width;
    let inside = |p: &[f64; 2], y: f64| -> bool {
        (0..g.n()).all(|axis| p[axis].abs() <= w) && y >= 0.0 && y <= g.spec.height
    };
    let mut sup = 0.0f64;
    if g.n() == 1 {
        let m = 64;
        for j in 0..=m {
            let th = std::f64::consts::PI * j as f64 / m as f64;
            let p = [center[0] + r * th.cos(), 0.0];
            let y = r * th.sin();
            if inside(&p, y) {
                sup = sup.max(s.interpolate_plain(&p, y).abs());
            }
        }
    } else {
        let mp = 16;
        let mq = 32;
        for jp in 0..=mp {
            let th = 0.5 * std::f64::consts::PI * jp as f64 / mp as f64;
            for jq in 0..mq {
                let ph = 2.0 * std::f64::consts::PI * jq as f64 / mq as f64;
                let p = [
                    center[0] + r * th.cos() * ph.cos(),
                    center[1] + r * th.cos() * ph.sin(),
                ];
                let y = r * th.sin();
                if inside(&p, y) {
                    sup = sup.max(s.interpolate_plain(&p, y).abs());
                }
            }
        }
    }
    sup
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

/// Directional cone containment at a free-boundary point: inside the
/// r-ball, points of the cone around +e lie in the positive phase and the
/// reflected cone lies in contact.  Nodes within two cells of the vertex
/// are skipped as unresolved.
pub fn cone_check(
    g: &WeightedGrid,
    part: &ThinPartition,
    point: &[f64; 2],
    e: &[f64; 2],
    eps: f64,
    r: f64,
) -> bool {
    let n = g.n();
    let blur = 2.0 * g.dx;
    for fx in 0..g.num_thin() {
        let pos = g.thin_pos(fx);
        let mut d = [0.0; 2];
        let mut len2 = 0.0;
        for axis in 0..n {
            d[axis] = pos[axis] - point[axis];
            len2 += d[axis] * d[axis];
        }
        let len = len2.sqrt();
        if len <= blur || len > r {
            continue;
        }
        let along: f64 = (0..n).map(|axis| d[axis] * e[axis]).sum();
        if along >= eps * len && part.contact[fx] {
            return false;
        }
        if -along >= eps * len && !part.contact[fx] {
            return false;
        }
    }
    true
}

/// Controls for graph reconstruction.
#[derive(Clone, Debug)]
pub struct GraphParams {
    /// Thin direction pointing into the positive phase.
    pub e: [f64; 2],
    /// Approximate location of the tracked free-boundary point along e.
    pub seed: f64,
    /// Contact threshold relative to the global gap scale.
    pub tol_rel: f64,
    /// Half-width of the tracking window along e.
    pub window: f64,
    /// Motion below this floor counts as stationary.
    pub motion_floor: f64,
}

impl GraphParams {
    pub fn default_for(g: &WeightedGrid) -> Self {
        Self {
            e: [1.0, 0.0],
            seed: 0.0,
            tol_rel: 1e-6,
            window: 0.35 * g.spec.half_width,
            motion_floor: 1e-9 * g.spec.half_width,
        }
    }
}

/// The free boundary as a moving graph along direction e.
#[derive(Debug)]
pub struct GraphReconstruction {
    pub e: [f64; 2],
    pub times: Vec<f64>,
    /// Cross coordinates; a single zero for one thin dimension.
    pub xprime: Vec<f64>,
    /// Graph values g\[time\]\[xprime\].
    pub g: Vec<Vec<f64>>,
    /// Largest slope between neighboring columns over all slices.
    pub lip_x: f64,
    /// Fitted Hoelder-in-time exponent; +infinity when the graph never
    /// moves beyond the floor.
    pub holder_t_exponent: f64,
    /// The exponent the regularity theory predicts, 2 / (3 - a).
    pub holder_t_target: f64,
    pub max_motion: f64,
}

fn thin_interpolate(g: &WeightedGrid, values: &[f64], x: &[f64; 2]) -> f64 {
    let w = g.spec.half_width;
    let locate = |c: f64| -> (usize, f64) {
        let clamped = c.clamp(-w, w);
        let t = (clamped + w) / g.dx;
        let i = (t.floor() as usize).min(g.nx() - 2);
        (i, (t - i as f64).clamp(0.0, 1.0))
    };
    if g.n() == 1 {
        let (i, s) = locate(x[0]);
        let v0 = values[g.flat_x(&[i, 0])];
        let v1 = values[g.flat_x(&[i + 1, 0])];
        v0 + s * (v1 - v0)
    } else {
        let (i0, s0) = locate(x[0]);
        let (i1, s1) = locate(x[1]);
        let v00 = values[g.flat_x(&[i0, i1])];
        let v10 = values[g.flat_x(&[i0 + 1, i1])];
        let v01 = values[g.flat_x(&[i0, i1 + 1])];
        let v11 = values[g.flat_x(&[i0 + 1, i1 + 1])];
        let a = v00 + s0 * (v10 - v00);
        let b = v01 + s0 * (v11 - v01);
        a + s1 * (b - a)
    }
}

/// Transitions of the contact indicator along the line u e_perp + s e,
/// located by linear interpolation of gap - tol between samples.
fn line_transitions(
    g: &WeightedGrid,
    gap: &ThinField,
    e: &[f64; 2],
    u: f64,
    tol: f64,
) -> Vec<f64> {
    let w = 0.98 * g.spec.half_width;
    let eperp = [-e[1], e[0]];
    // allowed s-interval keeping the sample inside the box
    let mut s_lo = -1e30f64;
    let mut s_hi = 1e30f64;
    for axis in 0..g.n() {
        let base = if g.n() == 2 { u * eperp[axis] } else { 0.0 };
        if e[axis].abs() > 1e-14 {
            let a = (-w - base) / e[axis];
            let b = (w - base) / e[axis];
            s_lo = s_lo.max(a.min(b));
            s_hi = s_hi.min(a.max(b));
        } else if base.abs() > w {
            return Vec::new();
        }
    }
    if !(s_lo < s_hi) {
        return Vec::new();
    }
    let samples = 2 * g.nx();
    let ds = (s_hi - s_lo) / samples as f64;
    let point = |s: f64| -> [f64; 2] {
        let mut p = [0.0; 2];
        for axis in 0..g.n() {
            p[axis] = s * e[axis] + if g.n() == 2 { u * eperp[axis] } else { 0.0 };
        }
        p
    };
    let k0 = kappa0(g.a());
    let sample = |s: f64| thin_interpolate(g, &gap.values, &point(s));
    let mut out = Vec::new();
    let mut prev = sample(s_lo);
    for k in 1..=samples {
        let s = s_lo + ds * k as f64;
        let val = sample(s);
        if (prev <= tol) != (val <= tol) {
            let frac = (prev - tol) / (prev - val);
            let linear = s - ds + frac * ds;
            // the gap leaves the contact set like c d^{kappa0}, so invert
            // that power from two points on the positive side instead of
            // trusting the threshold crossing of the chord
            let refined =
                refine_contact_edge(g, gap, &e, linear, val > prev, k0, s_lo, s_hi, &sample);
            match refined {
                Some(edge) if (edge - linear).abs() <= 1.5 * g.dx => out.push(edge),
                _ => out.push(linear),
            }
        }
        prev = val;
    }
    out
}

/// Power-law localization of the contact edge near a threshold crossing.
/// On an axis line of a bounded one-dimensional grid the two probes are
/// exact node values, which keeps the estimate free of interpolation
/// phase; skew lines fall back to interpolated probes one and two cells
/// out.
#[allow(clippy::too_many_arguments)]
fn refine_contact_edge(
    g: &WeightedGrid,
    gap: &ThinField,
    e: &[f64; 2],
    linear: f64,
    rising: bool,
    k0: f64,
    s_lo: f64,
    s_hi: f64,
    sample: &impl Fn(f64) -> f64,
) -> Option<f64> {
    let dir = if rising { 1.0 } else { -1.0 };
    if g.n() == 1 && !g.spec.periodic_x && e[0].abs() > 1.0 - 1e-12 {
        let e0 = e[0].signum();
        let step = if e0 * dir > 0.0 { 1isize } else { -1 };
        let jf = (linear * e0 + g.spec.half_width) / g.dx;
        let mut j = if step > 0 { jf.ceil() as isize } else { jf.floor() as isize };
        for _ in 0..2 {
            if !(0..g.nx() as isize).contains(&j) {
                return None;
            }
            if gap.values[j as usize] > 0.0 {
                break;
            }
            j += step;
        }
        let j2 = j + step;
        if !(0..g.nx() as isize).contains(&j) || !(0..g.nx() as isize).contains(&j2) {
            return None;
        }
        let sigma1 = g.thin_pos(j as usize)[0] * e0;
        let sigma2 = g.thin_pos(j2 as usize)[0] * e0;
        power_edge(sigma1, gap.values[j as usize], sigma2, gap.values[j2 as usize], k0)
    } else {
        let sigma1 = linear + dir * g.dx;
        let sigma2 = linear + 2.0 * dir * g.dx;
        if sigma1.min(sigma2) < s_lo || sigma1.max(sigma2) > s_hi {
            return None;
        }
        power_edge(sigma1, sample(sigma1), sigma2, sample(sigma2), k0)
    }
}

/// Contact edge of a power-law gap c |sigma - edge|^{k0} from two probes
/// on the positive side, `sigma1` nearer the edge than `sigma2`.
fn power_edge(sigma1: f64, g1: f64, sigma2: f64, g2: f64, k0: f64) -> Option<f64> {
    if !(g1 > 0.0 && g2 > g1) {
        return None;
    }
    let q = (g2 / g1).powf(1.0 / k0);
    if !(q > 1.0 + 1e-9) {
        return None;
    }
    Some((q * sigma1 - sigma2) / (q - 1.0))
}

/// Reconstruct the tracked free-boundary graph from per-slice thin gaps
/// U - psi.  One transition is followed per cross coordinate, starting
/// from the seed; slices where the tracked crossing disappears or splits
/// inside the window make the boundary non-graphical.
pub fn reconstruct_graph(
    g: &WeightedGrid,
    gaps: &[ThinField],
    times: &[f64],
    params: &GraphParams,
) -> Result<GraphReconstruction> {
    if gaps.is_empty() || gaps.len() != times.len() {
        return Err(Error::EmptySample(
            "graph reconstruction needs matching gaps and times".into(),
        ));
    }
    let norm = (params.e[0] * params.e[0] + params.e[1] * params.e[1]).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Config {
            field: "analysis.direction".into(),
            message: "direction must be a nonzero vector".into(),
        });
    }
    let e = [params.e[0] / norm, params.e[1] / norm];
    let mut scale = 0.0f64;
    for gap in gaps {
        scale = scale.max(gap.max_abs());
    }
    let tol = params.tol_rel * scale;

    let xprime: Vec<f64> = if g.n() == 1 {
        vec![0.0]
    } else {
        let w = 0.55 * g.spec.half_width;
        let cols = (g.nx() / 2).max(9);
        (0..cols)
            .map(|k| -w + 2.0 * w * k as f64 / (cols - 1) as f64)
            .collect()
    };

    let mut graph: Vec<Vec<f64>> = Vec::with_capacity(gaps.len());
    let mut trackers: Vec<f64> = vec![params.seed; xprime.len()];
    for (k, gap) in gaps.iter().enumerate() {
        let mut row = Vec::with_capacity(xprime.len());
        for (col, &u) in xprime.iter().enumerate() {
            let crossings = line_transitions(g, gap, &e, u, tol);
            let near: Vec<f64> = crossings
                .iter()
                .copied()
                .filter(|s| (s - trackers[col]).abs() <= params.window)
                .collect();
            match near.len() {
                1 => {
                    trackers[col] = near[0];
                    row.push(near[0]);
                }
                0 => {
                    return Err(Error::NonGraphical(format!(
                        "slice {k} (t = {}), column x' = {u}: no free-boundary crossing within \
                         {} of s = {}",
                        times[k], params.window, trackers[col]
                    )));
                }
                _ => {
                    return Err(Error::NonGraphical(format!(
                        "slice {k} (t = {}), column x' = {u}: {} crossings inside the tracking \
                         window, boundary is multi-valued along the direction",
                        times[k],
                        near.len()
                    )));
                }
            }
        }
        graph.push(row);
    }

    let mut lip_x = 0.0f64;
    if xprime.len() > 1 {
        for row in &graph {
            for c in 0..row.len() - 1 {
                let du = xprime[c + 1] - xprime[c];
                lip_x = lip_x.max((row[c + 1] - row[c]).abs() / du);
            }
        }
    }

    // Hoelder seminorm in time is a worst-case modulus, so fit the upper
    // envelope: bin slice pairs by dyadic time lag and regress the per-bin
    // maximum displacement
    let mut pairs = Vec::new();
    let mut dt_min = f64::INFINITY;
    let mut max_motion = 0.0f64;
    for i in 0..gaps.len() {
        for j in i + 1..gaps.len() {
            let dt = (times[j] - times[i]).abs();
            if dt <= 0.0 {
                continue;
            }
            dt_min = dt_min.min(dt);
            for col in 0..xprime.len() {
                let dg = (graph[j][col] - graph[i][col]).abs();
                max_motion = max_motion.max(dg);
                if dg > params.motion_floor {
                    pairs.push((dt, dg));
                }
            }
        }
    }
    let mut env_dt = Vec::new();
    let mut env_dg = Vec::new();
    if !pairs.is_empty() {
        let nbins = ((pairs.iter().map(|p| p.0).fold(0.0f64, f64::max) / dt_min).log2().ceil()
            as usize)
            .max(1)
            + 1;
        let mut best: Vec<Option<(f64, f64)>> = vec![None; nbins];
        for &(dt, dg) in &pairs {
            let k = ((dt / dt_min).log2().floor() as usize).min(nbins - 1);
            if best[k].map_or(true, |(_, b)| dg > b) {
                best[k] = Some((dt, dg));
            }
        }
        for slot in best.into_iter().flatten() {
            env_dt.push(slot.0);
            env_dg.push(slot.1);
        }
    }
    let holder_t_exponent = if env_dt.len() >= 3 {
        log_log_slope(&env_dt, &env_dg)
    } else {
        f64::INFINITY
    };

    Ok(GraphReconstruction {
        e,
        times: times.to_vec(),
        xprime,
        g: graph,
        lip_x,
        holder_t_exponent,
        holder_t_target: 2.0 / (3.0 - g.a()),
        max_motion,
    })
}

/// Largest constant c validating |w(x, 0)| >= c * dist^{kappa0} on the
/// positive side of the graph, over thin nodes within r2 of the boundary
/// and beyond the two-cell blur.
pub fn nondegeneracy_check(
    gap: &ThinField,
    graph: &GraphReconstruction,
    slice: usize,
    r2: f64,
) -> Result<f64> {
    let g = &gap.grid;
    let n = g.n();
    let k0 = kappa0(g.a());
    if slice >= graph.g.len() {
        return Err(Error::EmptySample(format!(
            "graph has {} slices, asked for {slice}",
            graph.g.len()
        )));
    }
    let row = &graph.g[slice];
    let eperp = [-graph.e[1], graph.e[0]];
    let blur = 2.0 * g.dx;
    let mut c_best = f64::INFINITY;
    let mut seen = false;
    for fx in 0..g.num_thin() {
        let pos = g.thin_pos(fx);
        let s: f64 = (0..n).map(|axis| pos[axis] * graph.e[axis]).sum();
        let u: f64 = if n == 2 {
            (0..n).map(|axis| pos[axis] * eperp[axis]).sum()
        } else {
            0.0
        };
        let gval = if graph.xprime.len() == 1 {
            row[0]
        } else if u < graph.xprime[0] || u > *graph.xprime.last().unwrap() {
            continue;
        } else {
            let k = graph
                .xprime
                .windows(2)
                .position(|w| u >= w[0] && u <= w[1])
                .unwrap_or(graph.xprime.len() - 2);
            let t = (u - graph.xprime[k]) / (graph.xprime[k + 1] - graph.xprime[k]);
            row[k] + t * (row[k + 1] - row[k])
        };
        let d = s - gval;
        if d <= blur || d > r2 {
            continue;
        }
        seen = true;
        c_best = c_best.min(gap.values[fx].abs() / d.powf(k0));
    }
    if !seen {
        return Err(Error::EmptySample(
            "no thin nodes on the positive side within the sampling range".into(),
        ));
    }
    Ok(c_best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::elliptic::{solve_pgs, EllipticProblem, SolverParams};
    use crate::grid::GridSpec;
    use crate::problems::prototype_elliptic;
    use crate::reference::vhat0;

    fn grid(n: usize, a: f64, extent: f64, nx: usize, ny: usize) -> Arc<WeightedGrid> {
        WeightedGrid::build(GridSpec {
            n,
            a,
            half_width: extent,
            height: extent,
            nx,
            ny,
            grading: 2.0,
            periodic_x: false,
        })
        .unwrap()
    }

    fn solved_prototype(a: f64) -> (Arc<WeightedGrid>, SignoriniSolution) {
        let g = grid(1, a, 1.0, 65, 33);
        let problem = prototype_elliptic(&g, 1.0);
        let params = SolverParams {
            tol: 1e-9,
            ..SolverParams::default()
        };
        let sol = solve_pgs(&problem, &params).unwrap();
        assert!(sol.converged);
        (g, sol)
    }

    #[test]
    fn prototype_partition_finds_the_half_line() {
        let (g, sol) = solved_prototype(0.0);
        let part = partition(&sol, 1e-8 * 10.0).unwrap();
        for fx in 0..g.num_thin() {
            let x = g.thin_pos(fx)[0];
            if x < -2.0 * g.dx {
                assert!(part.contact[fx], "x = {x} should be contact");
            }
            if x > 2.0 * g.dx {
                assert!(!part.contact[fx], "x = {x} should be positive");
            }
        }
        assert!(!part.fb_points.is_empty());
        for &fx in &part.fb_points {
            assert!(g.thin_pos(fx)[0].abs() <= 2.0 * g.dx);
        }
        for &fx in &part.extended_fb_points {
            assert!(g.thin_pos(fx)[0].abs() <= 3.0 * g.dx);
        }
        assert!(part.rim_contact, "prototype contact reaches the left rim");
        assert!(part.contact_fraction > 0.3 && part.contact_fraction < 0.7);
    }

    #[test]
    fn untouched_obstacle_gives_empty_free_boundary() {
        let g = grid(1, 0.3, 1.0, 33, 17);
        let problem = EllipticProblem::new(
            &g,
            Field::zeros(&g),
            ThinField::zeros(&g),
            Field::from_fn(&g, |x, _| 1.0 + 0.2 * x[0]),
        );
        let sol = solve_pgs(
            &problem,
            &SolverParams {
                tol: 1e-10,
                ..SolverParams::default()
            },
        )
        .unwrap();
        let part = partition(&sol, 1e-7).unwrap();
        assert!(part.fb_points.is_empty());
        assert!(!part.rim_contact);
        assert_eq!(part.contact_fraction, 0.0);
    }

    #[test]
    fn frequency_gap_separates_the_three_classes() {
        let a = 0.0;
        let g = grid(1, a, 1.2, 129, 129);
        let params = ClassifyParams::default_for(a);

        let proto = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
        let rep = classify(&proto, &[0.0, 0.0], &params).unwrap();
        assert_eq!(rep.classification, Classification::Regular, "kappa {}", rep.kappa_hat);
        assert!((rep.kappa_hat - 4.0).abs() < 0.1);
        assert!((rep.growth_slope - kappa0(a)).abs() < 0.05, "growth {}", rep.growth_slope);

        let deg2 = Field::from_fn(&g, |x, y| crate::reference::degree_two_profile(x, y, a));
        let rep2 = classify(&deg2, &[0.0, 0.0], &params).unwrap();
        assert_eq!(rep2.classification, Classification::Nonregular, "kappa {}", rep2.kappa_hat);

        // homogeneous non-solution landing in the forbidden middle band
        let cap = 1.0 + a + 2.0 + 2.0 * params.delta;
        let kappa_mid = (4.0 + params.class_tol + cap - 0.05) / 2.0;
        let hom = (kappa_mid - 1.0 - a) / 2.0;
        let mid = Field::from_fn(&g, |x, y| (x[0] * x[0] + y * y).powf(hom / 2.0));
        let rep3 = classify(&mid, &[0.0, 0.0], &params).unwrap();
        assert_eq!(
            rep3.classification,
            Classification::Indeterminate,
            "kappa {} target band ({}, {})",
            rep3.kappa_hat,
            4.0 + params.class_tol,
            cap - 0.05
        );
    }

    #[test]
    fn growth_fit_reads_homogeneity_and_flags_flat_regions() {
        let a = -0.4;
        let g = grid(1, a, 1.0, 65, 65);
        let proto = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
        let radii = [0.1, 0.16, 0.25, 0.4];
        let slope = growth_fit(&[&proto], &[0.0], &[0.0, 0.0], &radii).unwrap();
        assert!((slope - kappa0(a)).abs() < 0.05, "slope {slope}");

        let offset = Field::from_fn(&g, |x, _| 1.0 + x[0]);
        let s0 = growth_fit(&[&offset], &[0.0], &[0.0, 0.0], &radii).unwrap();
        assert!(s0.abs() < 0.2, "non-degenerate point slope {s0}");

        let flat = Field::from_fn(&g, |x, y| {
            let r = (x[0] * x[0] + y * y).sqrt();
            (r - 0.6).max(0.0).powi(2)
        });
        let sf = growth_fit(&[&flat], &[0.0], &[0.0, 0.0], &radii).unwrap();
        assert!(sf.is_infinite(), "deep contact must be flagged");
    }

    #[test]
    fn cone_containment_matches_the_half_space_phases() {
        let (g, sol) = solved_prototype(-0.2);
        let part = partition(&sol, 1e-7).unwrap();
        assert!(cone_check(&g, &part, &[0.0, 0.0], &[1.0, 0.0], 0.3, 0.5));
        assert!(!cone_check(&g, &part, &[0.0, 0.0], &[-1.0, 0.0], 0.3, 0.5));
    }

    #[test]
    fn graph_tracks_a_crawling_free_boundary() {
        let g = grid(1, 0.0, 1.0, 129, 9);
        let mut times: Vec<f64> = (0..=10)
            .map(|k| 0.4 * 0.55f64.powf((10 - k) as f64))
            .collect();
        times.insert(0, 0.0);
        let true_g = |t: f64| 0.3 * t.powf(2.0 / 3.0);
        let gaps: Vec<ThinField> = times
            .iter()
            .map(|&t| ThinField::from_fn(&g, move |x| (x[0] - true_g(t)).max(0.0).powf(1.5)))
            .collect();
        let params = GraphParams {
            seed: 0.1,
            tol_rel: 1e-3,
            ..GraphParams::default_for(&g)
        };
        let rec = reconstruct_graph(&g, &gaps, &times, &params).unwrap();
        for (k, row) in rec.g.iter().enumerate() {
            assert!(
                (row[0] - true_g(times[k])).abs() < 2.5 * g.dx,
                "slice {k}: {} vs {}",
                row[0],
                true_g(times[k])
            );
        }
        assert_eq!(rec.holder_t_target, 2.0 / 3.0);
        assert_eq!(rec.lip_x, 0.0);
        assert!(
            (rec.holder_t_exponent - 2.0 / 3.0).abs() < 0.12,
            "exponent {}",
            rec.holder_t_exponent
        );
        assert!(rec.max_motion > 0.1);
    }

    #[test]
    fn ambiguous_crossings_are_rejected() {
        let g = grid(1, 0.0, 1.0, 129, 9);
        let gap = ThinField::from_fn(&g, |x| (x[0] - 0.25).max(0.0) * (0.45 - x[0]).max(0.0) + 0.0);
        let params = GraphParams {
            seed: 0.35,
            ..GraphParams::default_for(&g)
        };
        let err = reconstruct_graph(&g, &[gap], &[0.0], &params);
        assert!(matches!(err, Err(Error::NonGraphical(_))), "{err:?}");

        let empty = ThinField::from_fn(&g, |_| 1.0);
        let err2 = reconstruct_graph(&g, &[empty], &[0.0], &params);
        assert!(matches!(err2, Err(Error::NonGraphical(_))));
    }

    #[test]
    fn nondegeneracy_recovers_the_prototype_constant() {
        let a = 0.0;
        let g = grid(1, a, 1.0, 129, 9);
        let gap = ThinField::from_fn(&g, |x| vhat0(x, 0.0, a, 1.0, &[1.0, 0.0]));
        let graph = GraphReconstruction {
            e: [1.0, 0.0],
            times: vec![0.0],
            xprime: vec![0.0],
            g: vec![vec![0.0]],
            lip_x: 0.0,
            holder_t_exponent: f64::INFINITY,
            holder_t_target: 2.0 / 3.0,
            max_motion: 0.0,
        };
        let c = nondegeneracy_check(&gap, &graph, 0, 0.8).unwrap();
        let expect = crate::reference::vhat0_trace_coefficient(a, 1.0);
        assert!((c - expect).abs() < 0.05 * expect, "c = {c} vs {expect}");

        let doubled = ThinField::from_fn(&g, |x| 2.0 * vhat0(x, 0.0, a, 1.0, &[1.0, 0.0]));
        let c2 = nondegeneracy_check(&doubled, &graph, 0, 0.8).unwrap();
        assert!((c2 - 2.0 * c).abs() < 1e-12 * c2);
    }

    #[test]
    fn partition_and_classification_are_scale_invariant() {
        let (g, sol) = solved_prototype(0.0);
        let part = partition(&sol, 1e-7).unwrap();

        let mut scaled = solve_pgs(
            &prototype_elliptic(&g, 1.0),
            &SolverParams {
                tol: 1e-9,
                ..SolverParams::default()
            },
        )
        .unwrap();
        let lambda = 37.5;
        for v in &mut scaled.v.values {
            *v *= lambda;
        }
        for v in &mut scaled.thin_value.values {
            *v *= lambda;
        }
        for v in &mut scaled.reaction.values {
            *v *= lambda;
        }
        let part2 = partition(&scaled, 1e-7).unwrap();
        assert_eq!(part.contact, part2.contact);
        assert_eq!(part.fb_points, part2.fb_points);

        let params = ClassifyParams::default_for(0.0);
        let w1 = Field::from_fn(&g, |x, y| vhat0(x, y, 0.0, 1.0, &[1.0, 0.0]));
        let w2 = Field::from_fn(&g, |x, y| lambda * vhat0(x, y, 0.0, 1.0, &[1.0, 0.0]));
        let r1 = classify(&w1, &[0.0, 0.0], &params).unwrap();
        let r2 = classify(&w2, &[0.0, 0.0], &params).unwrap();
        assert!((r1.kappa_hat - r2.kappa_hat).abs() < 1e-9);
        assert_eq!(r1.classification, r2.classification);
    }
}
