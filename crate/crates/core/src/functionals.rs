//! Monotonicity-formula machinery: weighted surface and volume quadrature
//! on half-balls centered at thin points, the radial quantities
//!
//!   H(r) = int_{dB_r} v^2 |y|^a,        G(r) = int_{B_r} v^2 |y|^a,
//!   D(r) = int_{B_r} |grad v|^2 |y|^a,  I(r) = int_{dB_r} v v_nu |y|^a,
//!
//! the frequency N(r) = r I(r) / H(r), its truncated Almgren variant, the
//! Weiss balanced-energy functionals, and their parabolic counterparts
//! built on the backward Gaussian kernel.
//!
//! Everything is computed for the even reflection across {y = 0}: upper
//! half-space sums are doubled.  The surface rules absorb the |y|^a weight
//! into closed-form panel moments so that a < 0 poles at the thin plane
//! cost no accuracy; volume sums subdivide cells cut by the sphere and
//! integrate the y-exponent exactly on every subcell.

use std::sync::Arc;

use statrs::function::gamma::{gamma, gamma_ur};

use crate::grid::{Field, WeightedGrid};
use crate::parabolic::Trajectory;
use crate::{Error, Result};

/// Panel counts for surface rules and the subdivision factor for cells cut
/// by the sphere.
#[derive(Clone, Debug)]
pub struct QuadratureParams {
    pub panels: usize,
    pub subdiv: usize,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            panels: 192,
            subdiv: 4,
        }
    }
}

/// ((sin t)/t)^a with the limit value at t = 0.
pub(crate) fn sinc_pow(t: f64, a: f64) -> f64 {
    if t < 1e-8 {
        1.0
    } else {
        (t.sin() / t).powf(a)
    }
}

/// Endpoint-weight rule for int_0^{pi/2} t^a h(t) dt with h piecewise
/// linear through the panel endpoints; the moments of t^a are exact.
pub(crate) fn theta_endpoint_rule(a: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let p = panels.max(4);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let thetas: Vec<f64> = (0..=p).map(|k| half_pi * k as f64 / p as f64).collect();
    let mut weights = vec![0.0; p + 1];
    for k in 0..p {
        let (tl, tr) = (thetas[k], thetas[k + 1]);
        let dt = tr - tl;
        let m0 = (tr.powf(1.0 + a) - tl.powf(1.0 + a)) / (1.0 + a);
        let m1 = (tr.powf(2.0 + a) - tl.powf(2.0 + a)) / (2.0 + a);
        weights[k] += (tr * m0 - m1) / dt;
        weights[k + 1] += (m1 - tl * m0) / dt;
    }
    (thetas, weights)
}

struct QuadPoint {
    x: [f64; 2],
    y: f64,
    w: f64,
}

/// Quadrature points for int_{dB_r(c)^+} f |y|^a dS on the upper
/// half-sphere around the thin point `center`.
fn weighted_sphere_rule(n: usize, a: f64, center: &[f64; 2], r: f64, panels: usize) -> Vec<QuadPoint> {
    let mut pts = Vec::new();
    if n == 1 {
        let (thetas, weights) = theta_endpoint_rule(a, (panels / 2).max(4));
        for (t, w) in thetas.iter().zip(&weights) {
            let base = w * sinc_pow(*t, a) * r.powf(1.0 + a);
            let (sin, cos) = t.sin_cos();
            for sign in [1.0, -1.0] {
                pts.push(QuadPoint {
                    x: [center[0] + sign * r * cos, 0.0],
                    y: r * sin,
                    w: base,
                });
            }
        }
    } else {
        let (thetas, weights) = theta_endpoint_rule(a, (panels / 2).max(4));
        let pphi = panels.max(8);
        let dphi = 2.0 * std::f64::consts::PI / pphi as f64;
        for (t, w) in thetas.iter().zip(&weights) {
            let (sin, cos) = t.sin_cos();
            let base = w * sinc_pow(*t, a) * cos * dphi * r.powf(2.0 + a);
            if base == 0.0 {
                continue;
            }
            for j in 0..pphi {
                let phi = dphi * (j as f64 + 0.5);
                pts.push(QuadPoint {
                    x: [
                        center[0] + r * cos * phi.cos(),
                        center[1] + r * cos * phi.sin(),
                    ],
                    y: r * sin,
                    w: base,
                });
            }
        }
    }
    pts
}

/// Quadrature points for the unweighted surface measure dS on the same
/// half-sphere (used for integrands already smooth at the thin plane).
fn plain_sphere_rule(n: usize, center: &[f64; 2], r: f64, panels: usize) -> Vec<QuadPoint> {
    let mut pts = Vec::new();
    if n == 1 {
        let p = panels.max(8);
        let dt = std::f64::consts::PI / p as f64;
        for k in 0..=p {
            let t = dt * k as f64;
            let trap = if k == 0 || k == p { 0.5 } else { 1.0 };
            let (sin, cos) = t.sin_cos();
            pts.push(QuadPoint {
                x: [center[0] + r * cos, 0.0],
                y: r * sin,
                w: trap * dt * r,
            });
        }
    } else {
        let p = (panels / 2).max(8);
        let dt = std::f64::consts::FRAC_PI_2 / p as f64;
        let pphi = panels.max(8);
        let dphi = 2.0 * std::f64::consts::PI / pphi as f64;
        for k in 0..=p {
            let t = dt * k as f64;
            let trap = if k == 0 || k == p { 0.5 } else { 1.0 };
            let (sin, cos) = t.sin_cos();
            let base = trap * dt * cos * dphi * r * r;
            if base == 0.0 {
                continue;
            }
            for j in 0..pphi {
                let phi = dphi * (j as f64 + 0.5);
                pts.push(QuadPoint {
                    x: [
                        center[0] + r * cos * phi.cos(),
                        center[1] + r * cos * phi.sin(),
                    ],
                    y: r * sin,
                    w: base,
                });
            }
        }
    }
    pts
}

/// Largest ball radius around `center` that stays inside the grid box.
pub fn usable_radius(g: &WeightedGrid, center: &[f64; 2]) -> f64 {
    let mut bound = g.spec.height;
    for axis in 0..g.n() {
        bound = bound.min(g.spec.half_width - center[axis].abs());
    }
    bound
}

fn check_radius(g: &WeightedGrid, center: &[f64; 2], r: f64) -> Result<()> {
    let available = usable_radius(g, center);
    if !(r > 0.0) || r > available {
        return Err(Error::DomainExceeded {
            needed: r,
            available,
        });
    }
    Ok(())
}

/// Exact weight of [y_lo, y_hi] under y^a dy.
fn y_weight(a: f64, y_lo: f64, y_hi: f64) -> f64 {
    (y_hi.powf(1.0 + a) - y_lo.powf(1.0 + a)) / (1.0 + a)
}

/// Dual-cell box of a node: per-axis extents in x, then the y slab.
fn node_box(g: &WeightedGrid, fx: usize, iy: usize) -> ([[f64; 2]; 2], [f64; 2]) {
    let ix = g.decode_x(fx);
    let nx = g.nx();
    let half = 0.5 * g.dx;
    let mut xext = [[0.0; 2]; 2];
    for axis in 0..g.n() {
        let x = g.xs[ix[axis]];
        let lo = if ix[axis] == 0 && !g.spec.periodic_x { x } else { x - half };
        let hi = if ix[axis] == nx - 1 && !g.spec.periodic_x { x } else { x + half };
        xext[axis] = [lo, hi];
    }
    let yext = [g.y_edges[iy], g.y_edges[iy + 1]];
    (xext, yext)
}

/// Squared distance from the thin point `c` to the nearest point of a box,
/// and to its farthest corner.
fn box_distances(n: usize, c: &[f64; 2], xext: &[[f64; 2]; 2], yext: &[f64; 2]) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for axis in 0..n {
        let [lo, hi] = xext[axis];
        let clamped = c[axis].clamp(lo, hi);
        near += (c[axis] - clamped) * (c[axis] - clamped);
        let worst = (c[axis] - lo).abs().max((c[axis] - hi).abs());
        far += worst * worst;
    }
    near += yext[0] * yext[0];
    far += yext[1] * yext[1];
    (near, far)
}

/// int_{B_r(c)^+} f(x, y) y^a dX over the upper half-ball, by exact
/// y-moment subcell sums; cells cut by the sphere are subdivided `subdiv`
/// times per axis, full cells twice.
fn ball_volume_sum(
    g: &WeightedGrid,
    center: &[f64; 2],
    r: f64,
    subdiv: usize,
    mut f: impl FnMut(&[f64; 2], f64) -> f64,
) -> f64 {
    let n = g.n();
    let a = g.a();
    let r2 = r * r;
    let mut acc = 0.0;
    for fx in 0..g.num_thin() {
        for iy in 0..g.ny() {
            let (xext, yext) = node_box(g, fx, iy);
            let (near2, far2) = box_distances(n, center, &xext, &yext);
            if near2 >= r2 {
                continue;
            }
            let s = if far2 <= r2 { 2 } else { subdiv.max(2) };
            acc += subcell_sum(n, a, center, r2, &xext, &yext, s, far2 <= r2, &mut f);
        }
    }
    acc
}

fn subcell_sum(
    n: usize,
    a: f64,
    center: &[f64; 2],
    r2: f64,
    xext: &[[f64; 2]; 2],
    yext: &[f64; 2],
    s: usize,
    fully_inside: bool,
    f: &mut impl FnMut(&[f64; 2], f64) -> f64,
) -> f64 {
    let mut acc = 0.0;
    let sf = s as f64;
    let xsub = |axis: usize, k: usize| -> (f64, f64) {
        let [lo, hi] = xext[axis];
        let w = (hi - lo) / sf;
        (lo + w * (k as f64 + 0.5), w)
    };
    for ky in 0..s {
        let y_lo = yext[0] + (yext[1] - yext[0]) * ky as f64 / sf;
        let y_hi = yext[0] + (yext[1] - yext[0]) * (ky + 1) as f64 / sf;
        let wy = y_weight(a, y_lo, y_hi);
        let yc = 0.5 * (y_lo + y_hi);
        if n == 1 {
            for k0 in 0..s {
                let (xc, wx) = xsub(0, k0);
                let p = [xc, 0.0];
                if fully_inside || (xc - center[0]).powi(2) + yc * yc <= r2 {
                    acc += f(&p, yc) * wx * wy;
                }
            }
        } else {
            for k0 in 0..s {
                let (x0, w0) = xsub(0, k0);
                for k1 in 0..s {
                    let (x1, w1) = xsub(1, k1);
                    let p = [x0, x1];
                    let d2 = (x0 - center[0]).powi(2) + (x1 - center[1]).powi(2) + yc * yc;
                    if fully_inside || d2 <= r2 {
                        acc += f(&p, yc) * w0 * w1 * wy;
                    }
                }
            }
        }
    }
    acc
}

/// Weighted fraction of a box inside the ball, by subcell centers with
/// exact y-moments.
fn box_fraction(n: usize, a: f64, center: &[f64; 2], r2: f64, xext: &[[f64; 2]; 2], yext: &[f64; 2], s: usize) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    let sf = s as f64;
    for ky in 0..s {
        let y_lo = yext[0] + (yext[1] - yext[0]) * ky as f64 / sf;
        let y_hi = yext[0] + (yext[1] - yext[0]) * (ky + 1) as f64 / sf;
        let wy = y_weight(a, y_lo, y_hi);
        let yc = 0.5 * (y_lo + y_hi);
        let mut cells: Vec<([f64; 2], f64)> = Vec::with_capacity(s * s);
        if n == 1 {
            let [lo, hi] = xext[0];
            let w = (hi - lo) / sf;
            for k in 0..s {
                cells.push(([lo + w * (k as f64 + 0.5), 0.0], w));
            }
        } else {
            let [lo0, hi0] = xext[0];
            let [lo1, hi1] = xext[1];
            let w0 = (hi0 - lo0) / sf;
            let w1 = (hi1 - lo1) / sf;
            for k0 in 0..s {
                for k1 in 0..s {
                    cells.push((
                        [lo0 + w0 * (k0 as f64 + 0.5), lo1 + w1 * (k1 as f64 + 0.5)],
                        w0 * w1,
                    ));
                }
            }
        }
        for (p, wx) in cells {
            let mut d2 = yc * yc;
            for axis in 0..n {
                d2 += (p[axis] - center[axis]).powi(2);
            }
            total += wx * wy;
            if d2 <= r2 {
                inside += wx * wy;
            }
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

/// Discrete Dirichlet energy int_{B_r(c)^+} |grad v|^2 y^a dX from face
/// transmissibilities, faces cut by the sphere weighted by their included
/// fraction.
fn face_energy_in_ball(v: &Field, center: &[f64; 2], r: f64, subdiv: usize) -> f64 {
    let g = &v.grid;
    let n = g.n();
    let a = g.a();
    let r2 = r * r;
    let half = 0.5 * g.dx;
    let mut acc = 0.0;
    for fx in 0..g.num_thin() {
        let ix = g.decode_x(fx);
        let x0 = [g.xs[ix[0]], if n == 2 { g.xs[ix[1]] } else { 0.0 }];
        for iy in 0..g.ny() {
            let p = g.idx(fx, iy);
            // vertical face to iy + 1
            if iy + 1 < g.ny() {
                let yext = [g.ys[iy], g.ys[iy + 1]];
                let mut xext = [[0.0; 2]; 2];
                for axis in 0..n {
                    xext[axis] = [x0[axis] - half, x0[axis] + half];
                }
                let (near2, far2) = box_distances(n, center, &xext, &yext);
                if near2 < r2 {
                    let frac = if far2 <= r2 {
                        1.0
                    } else {
                        box_fraction(n, a, center, r2, &xext, &yext, subdiv.max(2))
                    };
                    let dv = v.values[g.idx(fx, iy + 1)] - v.values[p];
                    acc += g.ty_face(fx, iy) * dv * dv * frac;
                }
            }
            // horizontal faces in +axis direction
            for axis in 0..n {
                if let Some(nb) = g.x_neighbor(fx, axis, 1) {
                    if nb < fx {
                        continue;
                    }
                    let yext = [g.y_edges[iy], g.y_edges[iy + 1]];
                    let mut xext = [[0.0; 2]; 2];
                    for ax in 0..n {
                        if ax == axis {
                            xext[ax] = [x0[ax], x0[ax] + g.dx];
                        } else {
                            xext[ax] = [x0[ax] - half, x0[ax] + half];
                        }
                    }
                    let (near2, far2) = box_distances(n, center, &xext, &yext);
                    if near2 < r2 {
                        let frac = if far2 <= r2 {
                            1.0
                        } else {
                            box_fraction(n, a, center, r2, &xext, &yext, subdiv.max(2))
                        };
                        let dv = v.values[g.idx(nb, iy)] - v.values[p];
                        acc += g.tx_face(fx, axis, iy) * dv * dv * frac;
                    }
                }
            }
        }
    }
    acc
}

/// Central-difference x-gradient components as node fields.
fn x_gradient(v: &Field) -> Vec<Field> {
    let g = &v.grid;
    let mut out = Vec::with_capacity(g.n());
    for axis in 0..g.n() {
        let mut q = Field::zeros(g);
        for fx in 0..g.num_thin() {
            for iy in 0..g.ny() {
                let p = g.idx(fx, iy);
                let fwd = g.x_neighbor(fx, axis, 1);
                let bwd = g.x_neighbor(fx, axis, -1);
                q.values[p] = match (bwd, fwd) {
                    (Some(b), Some(fw)) => {
                        (v.values[g.idx(fw, iy)] - v.values[g.idx(b, iy)]) / (2.0 * g.dx)
                    }
                    (None, Some(fw)) => (v.values[g.idx(fw, iy)] - v.values[p]) / g.dx,
                    (Some(b), None) => (v.values[p] - v.values[g.idx(b, iy)]) / g.dx,
                    (None, None) => 0.0,
                };
            }
        }
        out.push(q);
    }
    out
}

/// Weighted vertical flux y^a v_y as a node field, averaged from the
/// two-point face fluxes; at the thin row it is the weighted normal trace.
fn weighted_flux_field(v: &Field) -> Field {
    let g = &v.grid;
    let mut q = Field::zeros(g);
    let ny = g.ny();
    for fx in 0..g.num_thin() {
        for iy in 0..ny {
            let p = g.idx(fx, iy);
            let above = if iy + 1 < ny {
                Some(g.ty[iy] * (v.values[g.idx(fx, iy + 1)] - v.values[p]))
            } else {
                None
            };
            let below = if iy > 0 {
                Some(g.ty[iy - 1] * (v.values[p] - v.values[g.idx(fx, iy - 1)]))
            } else {
                None
            };
            q.values[p] = match (below, above) {
                (Some(b), Some(t)) => 0.5 * (b + t),
                (None, Some(t)) => t,
                (Some(b), None) => b,
                (None, None) => 0.0,
            };
        }
    }
    q
}

/// Radial profile of the monotonicity quantities around one thin center.
/// All columns refer to the even reflection (upper half values doubled).
pub struct RadialProfile {
    pub n: usize,
    pub a: f64,
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub d: Vec<f64>,
    /// Surface form int v v_nu |y|^a, the one used for the frequency.
    pub i_surf: Vec<f64>,
    /// Identity form D + int v f |y|^a (meaningful where the obstacle is
    /// zero on the contact set).
    pub i_id: Vec<f64>,
    /// Frequency r I / H; NaN where H hit its floor.
    pub n_freq: Vec<f64>,
    /// Weiss dissipation surface integral 2 int (v_nu - kappa0 v / r)^2 |y|^a.
    pub dissipation: Vec<f64>,
    pub quad_err: Vec<f64>,
    pub h_floored: Vec<bool>,
    /// Sup norm of v over the grid, the scale used for floors.
    pub scale: f64,
}

const H_FLOOR_FACTOR: f64 = 1e-14;

/// Compute the full radial profile of v around a thin center.  `forcing`
/// feeds the identity form of I; pass the stationary right-hand side f
/// with the sign convention div(|y|^a grad v) = |y|^a f.
pub fn elliptic_quantities(
    v: &Field,
    forcing: Option<&Field>,
    center: &[f64; 2],
    radii: &[f64],
    quad: &QuadratureParams,
) -> Result<RadialProfile> {
    let g = &v.grid;
    let n = g.n();
    let a = g.a();
    let kappa0 = crate::reference::kappa0(a);
    if radii.is_empty() {
        return Err(Error::EmptySample("no radii requested".into()));
    }
    for (i, &r) in radii.iter().enumerate() {
        check_radius(g, center, r)?;
        if i > 0 && r <= radii[i - 1] {
            return Err(Error::Config {
                field: "analysis.radii".into(),
                message: "radii must be strictly increasing".into(),
            });
        }
    }
    let scale = v.max_abs();
    let qx = x_gradient(v);
    let qya = weighted_flux_field(v);

    let mut profile = RadialProfile {
        n,
        a,
        center: *center,
        radii: radii.to_vec(),
        h: Vec::new(),
        g: Vec::new(),
        d: Vec::new(),
        i_surf: Vec::new(),
        i_id: Vec::new(),
        n_freq: Vec::new(),
        dissipation: Vec::new(),
        quad_err: Vec::new(),
        h_floored: Vec::new(),
        scale,
    };

    for &r in radii {
        let wpts = weighted_sphere_rule(n, a, center, r, quad.panels);
        let ppts = plain_sphere_rule(n, center, r, quad.panels);

        let mut h = 0.0;
        let mut i_a = 0.0;
        let mut diss = 0.0;
        for pt in &wpts {
            let val = v.interpolate(&pt.x, pt.y);
            h += pt.w * val * val;
            let mut qnux = 0.0;
            for axis in 0..n {
                let nu = (pt.x[axis] - center[axis]) / r;
                qnux += qx[axis].interpolate_plain(&pt.x, pt.y) * nu;
            }
            i_a += pt.w * val * qnux;
            let vy_nu = if pt.y > 0.0 {
                qya.interpolate_plain(&pt.x, pt.y) * pt.y.powf(1.0 - a) / r
            } else {
                0.0
            };
            let t = qnux + vy_nu - kappa0 * val / r;
            diss += pt.w * t * t;
        }
        let mut i_b = 0.0;
        for pt in &ppts {
            let val = v.interpolate(&pt.x, pt.y);
            let nu_y = pt.y / r;
            i_b += pt.w * val * qya.interpolate_plain(&pt.x, pt.y) * nu_y;
        }
        let h = 2.0 * h;
        let i_surf = 2.0 * (i_a + i_b);
        let diss = 2.0 * diss / r.powi(n as i32 + 2);

        // halved-panel H for the surface error estimate
        let mut h_half = 0.0;
        for pt in &weighted_sphere_rule(n, a, center, r, (quad.panels / 2).max(8)) {
            let val = v.interpolate(&pt.x, pt.y);
            h_half += pt.w * val * val;
        }
        let h_half = 2.0 * h_half;

        let gvol = 2.0 * ball_volume_sum(g, center, r, quad.subdiv, |x, y| {
            let val = v.interpolate(x, y);
            val * val
        });
        let gvol_coarse = 2.0 * ball_volume_sum(g, center, r, 2, |x, y| {
            let val = v.interpolate(x, y);
            val * val
        });
        let d = 2.0 * face_energy_in_ball(v, center, r, quad.subdiv);
        let vf = match forcing {
            Some(f) => 2.0 * ball_volume_sum(g, center, r, quad.subdiv, |x, y| {
                v.interpolate(x, y) * f.interpolate(x, y)
            }),
            None => 0.0,
        };

        let floor = H_FLOOR_FACTOR * scale * scale;
        let floored = h <= floor;
        let quad_err = ((h - h_half).abs() / h.abs().max(floor))
            .max((gvol - gvol_coarse).abs() / gvol.abs().max(floor));

        profile.h.push(h);
        profile.g.push(gvol);
        profile.d.push(d);
        profile.i_surf.push(i_surf);
        profile.i_id.push(d + vf);
        profile.n_freq.push(if floored { f64::NAN } else { r * i_surf / h });
        profile.dissipation.push(diss);
        profile.quad_err.push(quad_err);
        profile.h_floored.push(floored);
    }
    Ok(profile)
}

fn validate_delta(a: f64, delta: f64) -> Result<()> {
    let lo = (1.0 - a) / 2.0;
    if !(delta > lo && delta < 1.0) {
        return Err(Error::Config {
            field: "analysis.delta".into(),
            message: format!("truncation exponent must lie in ({lo}, 1), got {delta}"),
        });
    }
    Ok(())
}

fn validate_c(field: &str, c: f64) -> Result<()> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Config {
            field: field.into(),
            message: format!("monotonicity constant must be finite and nonnegative, got {c}"),
        });
    }
    Ok(())
}

/// Margin applied to the truncation threshold so the anchor rung itself
/// stays on the untruncated branch.
const BRANCH_MARGIN: f64 = 0.9;

/// Branch value of the truncated frequency before the exponential factor:
/// n + a + 2 N(r) where H clears the truncation threshold, the cap
/// n + a + 2 + 2 delta otherwise.  The threshold is the cap power law
/// through the largest power-normalized rung of H, which keeps the branch
/// decision invariant under scaling of v and ties it to the local
/// solution size witnessed anywhere on the ladder, not just at the
/// outermost rung.
fn almgren_branch(p: &RadialProfile, delta: f64, i: usize) -> f64 {
    let cap = p.n as f64 + p.a + 2.0 + 2.0 * delta;
    let top = p.radii.len() - 1;
    let floor = H_FLOOR_FACTOR * p.scale * p.scale;
    let anchor = (0..p.radii.len())
        .map(|j| p.h[j] * (p.radii[top] / p.radii[j]).powf(cap))
        .fold(floor, f64::max);
    let threshold = BRANCH_MARGIN * (p.radii[i] / p.radii[top]).powf(cap) * anchor;
    if !p.h_floored[i] && p.h[i] > threshold && p.n_freq[i].is_finite() {
        p.n as f64 + p.a + 2.0 * p.n_freq[i]
    } else {
        cap
    }
}

/// Truncated Almgren frequency e^{C r^{1-delta}} times the branch value.
pub fn truncated_almgren(p: &RadialProfile, delta: f64, c: f64) -> Result<Vec<f64>> {
    validate_delta(p.a, delta)?;
    validate_c("analysis.c_mono", c)?;
    Ok((0..p.radii.len())
        .map(|i| (c * p.radii[i].powf(1.0 - delta)).exp() * almgren_branch(p, delta, i))
        .collect())
}

/// Smallest nonnegative C for which the truncated frequency is
/// nondecreasing along the ladder; closed form per consecutive pair.
pub fn calibrate_almgren_constant(p: &RadialProfile, delta: f64, c_max: f64) -> Result<f64> {
    validate_delta(p.a, delta)?;
    let mut c_min = 0.0f64;
    for i in 0..p.radii.len().saturating_sub(1) {
        let b0 = almgren_branch(p, delta, i);
        let b1 = almgren_branch(p, delta, i + 1);
        if b0 > b1 && b1 > 0.0 {
            let span = p.radii[i + 1].powf(1.0 - delta) - p.radii[i].powf(1.0 - delta);
            c_min = c_min.max((b0 / b1).ln() / span);
        }
    }
    if c_min > c_max {
        return Err(Error::Calibration(format!(
            "frequency needs C = {c_min:.4e} to be monotone, above the budget {c_max:.4e}"
        )));
    }
    Ok(c_min)
}

/// Weiss functional at general homogeneity kappa,
/// W_kappa(r) = I / r^{n+a-1+2 kappa} - kappa H / r^{n+a+2 kappa},
/// from the surface form of I.
pub fn weiss_kappa(p: &RadialProfile, kappa: f64) -> Vec<f64> {
    (0..p.radii.len())
        .map(|i| {
            let r = p.radii[i];
            p.i_surf[i] / r.powf(p.n as f64 + p.a - 1.0 + 2.0 * kappa)
                - kappa * p.h[i] / r.powf(p.n as f64 + p.a + 2.0 * kappa)
        })
        .collect()
}

/// Balanced Weiss energy at the critical homogeneity kappa0, where the
/// exponents reduce to n+2 and n+3.
pub fn weiss_balanced(p: &RadialProfile) -> Vec<f64> {
    weiss_kappa(p, crate::reference::kappa0(p.a))
}

/// Dirichlet variant W_0(r) = D / r^{n+2} - kappa0 H / r^{n+3}.
pub fn weiss_dirichlet(p: &RadialProfile) -> Vec<f64> {
    let kappa0 = crate::reference::kappa0(p.a);
    (0..p.radii.len())
        .map(|i| {
            let r = p.radii[i];
            p.d[i] / r.powi(p.n as i32 + 2) - kappa0 * p.h[i] / r.powi(p.n as i32 + 3)
        })
        .collect()
}

/// Audit of Weiss monotonicity along a ladder: the smallest compensation
/// constant and the per-interval slope defect against the dissipation.
pub struct WeissAudit {
    /// Smallest C >= 0 making w(r) + C r^{(1+a)/2} nondecreasing up to the
    /// slack.
    pub c_min: f64,
    /// (w_{i+1} - w_i)/(r_{i+1} - r_i) minus the mean dissipation of the
    /// interval endpoints; nonnegative up to noise for exact solutions.
    pub slope_defect: Vec<f64>,
}

pub fn weiss_monotonicity_audit(p: &RadialProfile, w: &[f64], slack: f64) -> WeissAudit {
    assert_eq!(w.len(), p.radii.len(), "weiss column must match the ladder");
    let mut c_min = 0.0f64;
    let mut slope_defect = Vec::new();
    let expo = (1.0 + p.a) / 2.0;
    for i in 0..w.len().saturating_sub(1) {
        let drop = w[i] - w[i + 1] - slack;
        let span = p.radii[i + 1].powf(expo) - p.radii[i].powf(expo);
        if drop > 0.0 && span > 0.0 {
            c_min = c_min.max(drop / span);
        }
        let dr = p.radii[i + 1] - p.radii[i];
        let slope = (w[i + 1] - w[i]) / dr;
        let dis = 0.5 * (p.dissipation[i] + p.dissipation[i + 1]);
        slope_defect.push(slope - dis);
    }
    WeissAudit { c_min, slope_defect }
}

/// v(c + rX) / sqrt(H(v, r) / r^{n+a}) sampled on `target`; the rescaled
/// field has H(., 1) = 1.
pub fn almgren_rescale(
    v: &Field,
    center: &[f64; 2],
    r: f64,
    target: &Arc<WeightedGrid>,
    quad: &QuadratureParams,
) -> Result<Field> {
    let g = &v.grid;
    check_radius(g, center, r)?;
    let needed = r * (target.spec.half_width.powi(2) * g.n() as f64 + target.spec.height.powi(2)).sqrt();
    let available = usable_radius(g, center);
    if needed > available {
        return Err(Error::DomainExceeded { needed, available });
    }
    let wpts = weighted_sphere_rule(g.n(), g.a(), center, r, quad.panels);
    let mut h = 0.0;
    for pt in &wpts {
        let val = v.interpolate(&pt.x, pt.y);
        h += pt.w * val * val;
    }
    let h = 2.0 * h;
    if h <= H_FLOOR_FACTOR * v.max_abs().powi(2) {
        return Err(Error::EmptySample(format!(
            "H({r}) = {h:.3e} too small to normalize a rescaling"
        )));
    }
    let rho = (h / r.powf(g.n() as f64 + g.a())).sqrt();
    Ok(Field::from_fn(target, |x, y| {
        let src = [center[0] + r * x[0], center[1] + r * x[1]];
        v.interpolate(&src, r * y) / rho
    }))
}

/// v(c + rX) / r^kappa sampled on `target`.
pub fn homogeneous_rescale(
    v: &Field,
    center: &[f64; 2],
    r: f64,
    kappa: f64,
    target: &Arc<WeightedGrid>,
) -> Result<Field> {
    let g = &v.grid;
    check_radius(g, center, r)?;
    let needed = r * (target.spec.half_width.powi(2) * g.n() as f64 + target.spec.height.powi(2)).sqrt();
    let available = usable_radius(g, center);
    if needed > available {
        return Err(Error::DomainExceeded { needed, available });
    }
    let scale = r.powf(kappa);
    Ok(Field::from_fn(target, |x, y| {
        let src = [center[0] + r * x[0], center[1] + r * x[1]];
        v.interpolate(&src, r * y) / scale
    }))
}

/// Backward Gaussian kernel of the weighted heat operator on the upper
/// half-space, normalized to unit |y|^a-mass per time slice.
pub fn parabolic_kernel(n: usize, a: f64, rho2: f64, tau: f64) -> f64 {
    let pref = (4.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0)
        / (2.0f64.powf(a) * gamma((a + 1.0) / 2.0));
    pref * tau.powf(-(n as f64 + a + 1.0) / 2.0) * (-rho2 / (4.0 * tau)).exp()
}

/// Parabolic height function ladder.
pub struct ParabolicProfile {
    pub n: usize,
    pub a: f64,
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub hpar: Vec<f64>,
    pub quad_err: Vec<f64>,
    pub scale: f64,
}

/// H^par(U, r) = (1/r^2) int_{-r^2}^0 int U^2 G_a |y|^a dX dt computed
/// from trajectory slices, looking backward from the final time.
pub fn parabolic_h(traj: &Trajectory, center: &[f64; 2], radii: &[f64]) -> Result<ParabolicProfile> {
    if traj.fields.len() < 3 {
        return Err(Error::EmptySample(
            "parabolic height needs at least three slices".into(),
        ));
    }
    let g = Arc::clone(&traj.fields[0].grid);
    let n = g.n();
    let a = g.a();
    let t_end = *traj.times.last().unwrap();
    let scale = traj
        .fields
        .iter()
        .map(|f| f.max_abs())
        .fold(0.0f64, f64::max);

    // backward times and slice integrals S(tau)
    let mut taus = Vec::with_capacity(traj.times.len());
    let mut slices = Vec::with_capacity(traj.times.len());
    let mut tails = Vec::with_capacity(traj.times.len());
    let rbox = usable_radius(&g, center);
    for k in (0..traj.times.len()).rev() {
        let tau = t_end - traj.times[k];
        let field = &traj.fields[k];
        if tau == 0.0 {
            let u0 = field.interpolate(center, 0.0);
            taus.push(0.0);
            slices.push(u0 * u0);
            tails.push(0.0);
            continue;
        }
        let s = ball_volume_sum(&g, center, f64::INFINITY, 2, |x, y| {
            let mut rho2 = y * y;
            for axis in 0..n {
                rho2 += (x[axis] - center[axis]).powi(2);
            }
            let u = field.interpolate(x, y);
            u * u * parabolic_kernel(n, a, rho2, tau)
        });
        taus.push(tau);
        slices.push(s);
        tails.push(gamma_ur((n as f64 + a + 1.0) / 2.0, rbox * rbox / (4.0 * tau)) * scale * scale);
    }

    let tau_max = *taus.last().unwrap();
    let trapz = |stride: usize, limit: f64| -> (f64, f64) {
        let mut acc = 0.0;
        let mut err = 0.0;
        let mut prev = 0usize;
        loop {
            let k = (prev + stride).min(taus.len() - 1);
            if k == prev || taus[k] > limit {
                break;
            }
            acc += 0.5 * (slices[prev] + slices[k]) * (taus[k] - taus[prev]);
            err += 0.5 * (tails[prev] + tails[k]) * (taus[k] - taus[prev]);
            prev = k;
        }
        if taus[prev] < limit {
            // partial tail interval; S at the endpoint interpolated from
            // the bracketing fine slices
            let mut j = prev;
            while j + 1 < taus.len() && taus[j + 1] < limit {
                j += 1;
            }
            let jn = (j + 1).min(taus.len() - 1);
            let s_end = if jn == j {
                slices[j]
            } else {
                slices[j] + (limit - taus[j]) / (taus[jn] - taus[j]) * (slices[jn] - slices[j])
            };
            acc += 0.5 * (slices[prev] + s_end) * (limit - taus[prev]);
            err += 0.5 * (tails[prev] + tails[jn]) * (limit - taus[prev]);
        }
        (acc, err)
    };

    let mut profile = ParabolicProfile {
        n,
        a,
        center: *center,
        radii: radii.to_vec(),
        hpar: Vec::new(),
        quad_err: Vec::new(),
        scale,
    };
    let mut prev_r = 0.0;
    for &r in radii {
        let r2 = r * r;
        if !(r > 0.0) || r2 > tau_max {
            return Err(Error::DomainExceeded {
                needed: r2,
                available: tau_max,
            });
        }
        if r <= prev_r {
            return Err(Error::Config {
                field: "analysis.radii".into(),
                message: "radii must be strictly increasing".into(),
            });
        }
        prev_r = r;
        let (fine, tail) = trapz(1, r2);
        let (coarse, _) = trapz(2, r2);
        profile.hpar.push(fine / r2);
        profile
            .quad_err
            .push((tail + (fine - coarse).abs()) / r2);
    }
    Ok(profile)
}

/// Truncated parabolic frequency values along a ladder.
pub struct ParabolicFrequency {
    pub values: Vec<f64>,
    /// Set where adjacent estimates differ by more than 10%.
    pub noisy: Vec<bool>,
}

/// Truncated parabolic frequency: half the log-log slope of
/// max{H^par(r), threshold(r)} under the e^{C r^{1-sigma}} compensation,
/// plus its additive correction.  The truncation power 2 ell - 2 + 2 sigma
/// is anchored at the outermost rung like the elliptic branch; the slope
/// is taken by centered differences in log r since no analytic derivative
/// identity is available.
pub fn parabolic_frequency(
    p: &ParabolicProfile,
    ell: f64,
    sigma: f64,
    c: f64,
) -> Result<ParabolicFrequency> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Config {
            field: "analysis.sigma".into(),
            message: format!("parabolic truncation exponent must lie in (0,1), got {sigma}"),
        });
    }
    if !(ell >= 4.0) {
        return Err(Error::Config {
            field: "analysis.ell".into(),
            message: format!("truncation degree must be at least 4, got {ell}"),
        });
    }
    validate_c("analysis.c_par", c)?;
    let m = p.radii.len();
    if m < 2 {
        return Err(Error::EmptySample("parabolic frequency needs two radii".into()));
    }
    let power = 2.0 * ell - 2.0 + 2.0 * sigma;
    let floor = H_FLOOR_FACTOR * p.scale * p.scale;
    let anchor = p.hpar[m - 1].max(floor).max(f64::MIN_POSITIVE);
    let lr: Vec<f64> = p.radii.iter().map(|r| r.ln()).collect();
    let lh: Vec<f64> = (0..m)
        .map(|i| {
            let threshold = BRANCH_MARGIN * (p.radii[i] / p.radii[m - 1]).powf(power) * anchor;
            p.hpar[i].max(threshold).max(f64::MIN_POSITIVE).ln()
        })
        .collect();
    let slope = |i: usize| -> f64 {
        if i == 0 {
            (lh[1] - lh[0]) / (lr[1] - lr[0])
        } else if i == m - 1 {
            (lh[m - 1] - lh[m - 2]) / (lr[m - 1] - lr[m - 2])
        } else {
            (lh[i + 1] - lh[i - 1]) / (lr[i + 1] - lr[i - 1])
        }
    };
    let values: Vec<f64> = (0..m)
        .map(|i| {
            let boost = (c * p.radii[i].powf(1.0 - sigma)).exp();
            0.5 * boost * slope(i) + 4.0 * (boost - 1.0)
        })
        .collect();
    let noisy = (0..m)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(m - 1);
            let span = (values[i] - values[lo]).abs().max((values[i] - values[hi]).abs());
            span > 0.1 * values[i].abs().max(0.1)
        })
        .collect();
    Ok(ParabolicFrequency { values, noisy })
}

/// Limit estimate for the parabolic frequency at the center: the value at
/// the smallest trusted radius, the best rigorous proxy under
/// monotonicity.
pub fn parabolic_frequency_limit(f: &ParabolicFrequency) -> f64 {
    f.values[0]
}

/// Geometric ladder of trusted radii around a thin center: at least four
/// cells of local resolution at the bottom, safely inside the box at the
/// top.
pub fn radius_ladder(g: &WeightedGrid, center: &[f64; 2], count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::Config {
            field: "analysis.radii".into(),
            message: "ladder needs at least two radii".into(),
        });
    }
    let p = g.spec.grading;
    let r_min = (4.0 * g.dx).max(g.spec.height * (4.0 * p / (g.ny() as f64 - 1.0)).powf(p));
    let r_max = 0.9 * usable_radius(g, center);
    if !(r_min < r_max) {
        return Err(Error::EmptySample(format!(
            "no trusted radii: resolution floor {r_min:.3e} meets domain bound {r_max:.3e}"
        )));
    }
    let ratio = r_max / r_min;
    Ok((0..count)
        .map(|i| r_min * ratio.powf(i as f64 / (count - 1) as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::reference::{kappa0, vhat0};

    fn box_grid(n: usize, a: f64, extent: f64, nodes: usize) -> Arc<WeightedGrid> {
        WeightedGrid::build(GridSpec {
            n,
            a,
            half_width: extent,
            height: extent,
            nx: nodes,
            ny: nodes,
            grading: 2.0,
            periodic_x: false,
        })
        .unwrap()
    }

    fn wallis(a: f64) -> f64 {
        // int_0^pi sin^a = sqrt(pi) Gamma((1+a)/2) / Gamma(1 + a/2)
        std::f64::consts::PI.sqrt() * gamma((1.0 + a) / 2.0) / gamma(1.0 + a / 2.0)
    }

    #[test]
    fn weighted_rule_matches_wallis_closed_forms() {
        for a in [-0.5, 0.3] {
            for r in [0.7, 1.0] {
                let pts = weighted_sphere_rule(1, a, &[0.0, 0.0], r, 192);
                let mass: f64 = pts.iter().map(|p| p.w).sum();
                let expect = r.powf(1.0 + a) * wallis(a);
                assert!((mass - expect).abs() < 1e-4 * expect, "a={a} r={r}: {mass} vs {expect}");

                let m2: f64 = pts.iter().map(|p| p.w * p.y * p.y).sum();
                let expect2 = r.powf(3.0 + a) * wallis(a + 2.0);
                assert!((m2 - expect2).abs() < 1e-4 * expect2, "a={a} r={r} y^2 moment");
            }
        }
        // hemisphere mass in n = 2: 2 pi r^{2+a} / (1+a)
        for a in [-0.5, 0.4] {
            let pts = weighted_sphere_rule(2, a, &[0.0, 0.0], 0.8, 96);
            let mass: f64 = pts.iter().map(|p| p.w).sum();
            let expect = 2.0 * std::f64::consts::PI * 0.8f64.powf(2.0 + a) / (1.0 + a);
            assert!((mass - expect).abs() < 1e-4 * expect, "a={a}: {mass} vs {expect}");
        }
    }

    #[test]
    fn plain_rule_integrates_smooth_factors() {
        let pts = plain_sphere_rule(1, &[0.0, 0.0], 0.9, 128);
        let mass: f64 = pts.iter().map(|p| p.w).sum();
        let expect = std::f64::consts::PI * 0.9;
        assert!((mass - expect).abs() < 1e-6 * expect);
        let my: f64 = pts.iter().map(|p| p.w * p.y).sum();
        assert!((my - 2.0 * 0.81).abs() < 1e-3);
    }

    #[test]
    fn prototype_profile_matches_frozen_quantities() {
        // frozen values computed independently with mpmath quadrature
        let frozen: [(f64, f64, f64); 3] = [
            (-0.5, 1.943761285434, 0.3887522570761),
            (0.0, 1.570796326795, 0.3141592653590),
            (0.5, 1.388400918175, 0.2776801836172),
        ];
        for (a, h1, g1) in frozen {
            let k0 = kappa0(a);
            let g = box_grid(1, a, 1.2, 129);
            let v = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
            let p = elliptic_quantities(&v, None, &[0.0, 0.0], &[0.5, 1.0], &QuadratureParams::default()).unwrap();

            assert!((p.h[1] - h1).abs() < 3e-3 * h1, "a={a}: H(1) {} vs {h1}", p.h[1]);
            let ratio = p.h[0] / p.h[1];
            assert!((ratio - 0.5f64.powi(4)).abs() < 5e-3 * ratio, "a={a}: H scaling {ratio}");
            assert!((p.g[1] - g1).abs() < 5e-3 * g1, "a={a}: G(1) {} vs {g1}", p.g[1]);

            let d_expect = k0 * h1;
            assert!((p.d[1] - d_expect).abs() < 2e-2 * d_expect, "a={a}: D(1) {} vs {d_expect}", p.d[1]);
            assert!((p.i_surf[1] - d_expect).abs() < 1e-2 * d_expect, "a={a}: I(1) {} vs {d_expect}", p.i_surf[1]);
            assert!((p.i_id[1] - p.i_surf[1]).abs() < 3e-2 * d_expect, "a={a}: I identity gap");

            for (i, nf) in p.n_freq.iter().enumerate() {
                assert!((nf - k0).abs() < 6e-3 * k0, "a={a}: N(r_{i}) = {nf} vs {k0}");
            }
            for (i, dis) in p.dissipation.iter().enumerate() {
                assert!(dis.abs() < 3e-2 * k0 * h1, "a={a}: dissipation r_{i} = {dis}");
            }
            for qe in &p.quad_err {
                assert!(*qe < 2e-2, "quadrature error {qe}");
            }
            assert!(p.h_floored.iter().all(|f| !f));
        }
    }

    #[test]
    fn prototype_frequency_is_flat_and_needs_no_compensation() {
        let a = 0.0;
        let g = box_grid(1, a, 1.2, 129);
        let v = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
        let radii = radius_ladder(&g, &[0.0, 0.0], 14).unwrap();
        let p = elliptic_quantities(&v, None, &[0.0, 0.0], &radii, &QuadratureParams::default()).unwrap();
        let delta = 0.7;
        let phi0 = truncated_almgren(&p, delta, 0.0).unwrap();
        let n3 = 1.0 + 3.0;
        assert!((phi0[0] - n3).abs() < 0.02 * n3, "phi at r_min = {} vs {n3}", phi0[0]);

        let c = calibrate_almgren_constant(&p, delta, 0.2).unwrap();
        assert!(c < 0.05, "calibration constant too large: {c}");
        let phi = truncated_almgren(&p, delta, c).unwrap();
        for w in phi.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "phi not monotone: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn degree_two_profile_hits_the_truncation_cap() {
        let a = 0.0;
        let delta = 0.8;
        let g = box_grid(1, a, 1.2, 129);
        let v = Field::from_fn(&g, |x, y| crate::reference::degree_two_profile(x, y, a));
        let radii = radius_ladder(&g, &[0.0, 0.0], 14).unwrap();
        let p = elliptic_quantities(&v, None, &[0.0, 0.0], &radii, &QuadratureParams::default()).unwrap();
        let cap = 1.0 + a + 2.0 + 2.0 * delta;
        let phi = truncated_almgren(&p, delta, 0.0).unwrap();
        assert_eq!(phi[0], cap, "smallest radius must take the truncated branch");

        // the untruncated branch recovers the homogeneity 2 at radii where
        // H clears the threshold
        let last = p.radii.len() - 1;
        assert!(p.radii[last] > 0.8);
        assert!((p.n_freq[last] - 2.0).abs() < 0.05, "N = {}", p.n_freq[last]);
        let c = calibrate_almgren_constant(&p, delta, 0.2).unwrap();
        assert!(c < 0.1, "calibration constant too large: {c}");
        let phic = truncated_almgren(&p, delta, c).unwrap();
        for w in phic.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "calibrated phi not monotone");
        }
    }

    #[test]
    fn weiss_vanishes_on_the_prototype() {
        let a = -0.5;
        let g = box_grid(1, a, 1.2, 129);
        let v = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
        let radii = radius_ladder(&g, &[0.0, 0.0], 10).unwrap();
        let p = elliptic_quantities(&v, None, &[0.0, 0.0], &radii, &QuadratureParams::default()).unwrap();
        let wscale = kappa0(a) * 1.943761285434;
        for w in weiss_balanced(&p) {
            assert!(w.abs() < 8e-3 * wscale, "Weiss should vanish, got {w}");
        }
        let wb = weiss_balanced(&p);
        let audit = weiss_monotonicity_audit(&p, &wb, 1e-4 * wscale);
        assert!(audit.c_min < 0.2, "audit constant {}", audit.c_min);
    }

    #[test]
    fn rescalings_normalize_and_preserve_traces() {
        let a = 0.0;
        let g = box_grid(1, a, 1.2, 129);
        let v = Field::from_fn(&g, |x, y| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
        let target = box_grid(1, a, 1.0, 65);
        let quad = QuadratureParams::default();

        let w = almgren_rescale(&v, &[0.0, 0.0], 0.6, &target, &quad).unwrap();
        let pw = elliptic_quantities(&w, None, &[0.0, 0.0], &[0.9], &quad).unwrap();
        assert!((pw.h[0] - 0.9f64.powi(4)).abs() < 2e-2, "H of rescaling {}", pw.h[0]);

        let hw = homogeneous_rescale(&v, &[0.0, 0.0], 0.6, kappa0(a), &target).unwrap();
        let expect = crate::reference::vhat0_trace_coefficient(a, 1.0) * 0.5f64.powf(kappa0(a));
        let got = hw.interpolate(&[0.5, 0.0], 0.0);
        assert!((got - expect).abs() < 1e-2 * expect, "{got} vs {expect}");
    }

    #[test]
    fn parabolic_height_of_constant_is_unity() {
        let a = -0.4;
        let g = box_grid(1, a, 6.0, 97);
        let times: Vec<f64> = (0..=16).map(|k| 0.3 * k as f64 / 16.0).collect();
        let traj = Trajectory::from_fn(&g, &times, |_, _, _| 1.0);
        let p = parabolic_h(&traj, &[0.0, 0.0], &[0.3, 0.5]).unwrap();
        for (h, qe) in p.hpar.iter().zip(&p.quad_err) {
            assert!((h - 1.0).abs() < 0.02 + qe, "H^par = {h}, err {qe}");
        }
        let phi = parabolic_frequency(&p, 4.0, 0.5, 0.0).unwrap();
        assert!(phi.values[0].abs() < 0.05, "constant state has zero frequency");
    }

    #[test]
    fn parabolic_height_and_frequency_of_prototype() {
        let frozen = [(-0.5, 0.8271140755295), (0.5, 1.068205563349)];
        for (a, j_norm) in frozen {
            let k0 = kappa0(a);
            let g = box_grid(1, a, 5.0, 101);
            let times: Vec<f64> = (0..=24).map(|k| 0.36 * k as f64 / 24.0).collect();
            let traj = Trajectory::from_fn(&g, &times, |x, y, _| vhat0(x, y, a, 1.0, &[1.0, 0.0]));
            let radii = [0.3, 0.42, 0.58];
            let p = parabolic_h(&traj, &[0.0, 0.0], &radii).unwrap();
            for (i, h) in p.hpar.iter().enumerate() {
                let expect = radii[i].powf(2.0 * k0) * j_norm;
                assert!((h - expect).abs() < 2e-2 * expect, "a={a}: H^par(r_{i}) {h} vs {expect}");
            }
            let phi = parabolic_frequency(&p, 4.0, 0.5, 0.0).unwrap();
            assert!(
                (phi.values[1] - k0).abs() < 0.05,
                "a={a}: parabolic frequency {} vs {k0}",
                phi.values[1]
            );
            assert!(!phi.noisy[1], "interior estimate flagged noisy");
        }
    }

    #[test]
    fn ladder_respects_resolution_and_domain() {
        let g = box_grid(1, 0.0, 1.0, 65);
        let radii = radius_ladder(&g, &[0.0, 0.0], 10).unwrap();
        assert_eq!(radii.len(), 10);
        assert!(radii[0] >= 4.0 * g.dx - 1e-12);
        assert!(*radii.last().unwrap() <= 0.9 + 1e-12);
        let q0 = radii[1] / radii[0];
        for w in radii.windows(2) {
            assert!((w[1] / w[0] - q0).abs() < 1e-9, "ladder not geometric");
        }
    }

    #[test]
    fn guards_reject_bad_requests() {
        let g = box_grid(1, 0.0, 1.0, 33);
        let v = Field::from_fn(&g, |x, _| x[0]);
        let err = elliptic_quantities(&v, None, &[0.0, 0.0], &[1.5], &QuadratureParams::default());
        assert!(matches!(err, Err(Error::DomainExceeded { .. })));

        let p = elliptic_quantities(&v, None, &[0.0, 0.0], &[0.3, 0.6], &QuadratureParams::default()).unwrap();
        assert!(matches!(
            truncated_almgren(&p, 0.4, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            truncated_almgren(&p, 0.7, -1.0),
            Err(Error::Config { .. })
        ));

        let times = [0.0, 0.1, 0.2];
        let traj = Trajectory::from_fn(&g, &times, |_, _, _| 1.0);
        let pp = parabolic_h(&traj, &[0.0, 0.0], &[0.2, 0.3]).unwrap();
        assert!(matches!(
            parabolic_frequency(&pp, 4.0, 1.5, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            parabolic_frequency(&pp, 2.0, 0.5, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            parabolic_h(&traj, &[0.0, 0.0], &[0.9]),
            Err(Error::DomainExceeded { .. })
        ));
    }
}
