//! Closed-form reference solutions and spectral identities.
//!
//! The workhorse is the homogeneous profile of degree kappa0 = (3-a)/2,
//!
//!   vhat0(x, y) = c (xi + rho)^{(1-a)/2} (xi - (1-a)/2 rho),
//!   xi = <x, e>,  rho = sqrt(xi^2 + y^2),
//!
//! even in y, vanishing on the thin ray {xi <= 0, y = 0}, positive on the
//! complementary ray, and annihilated by div(|y|^a grad .).  Its thin trace
//! grows like 2^{(1-a)/2} (1+a)/2 * xi^{kappa0}, so the profile doubles as
//! the growth and nondegeneracy yardstick at regular free boundary points.
//!
//! `dtn_identity_check` ties the weighted normal trace to the fractional
//! Laplacian: for u = cos(kx) the steady extension must reproduce
//! -C_s lim y^a U_y = |k|^{2s} u with s = (1-a)/2 and
//! C_s = 2^{2s-1} Gamma(s) / Gamma(1-s).

use std::sync::Arc;

use crate::elliptic::{solve_thin_dirichlet, EllipticProblem, SolverParams};
use crate::grid::{weighted_normal_derivative, Field, GridSpec, ThinField, WeightedGrid};
use crate::{Error, Result};

/// Homogeneity degree (3-a)/2 of the model solution; equals 1+s.
pub fn kappa0(a: f64) -> f64 {
    (3.0 - a) / 2.0
}

/// Parameters of the model profile family: amplitude c > 0 and unit thin
/// direction e.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PrototypeParams {
    pub a: f64,
    pub c: f64,
    pub e: [f64; 2],
}

/// The model solution of degree (3-a)/2.  `x` holds the thin coordinates
/// (second entry ignored for n = 1), `e` the unit direction of the
/// positivity ray.
pub fn vhat0(x: &[f64; 2], y: f64, a: f64, c: f64, e: &[f64; 2]) -> f64 {
    let xi = x[0] * e[0] + x[1] * e[1];
    let rho = (xi * xi + y * y).sqrt();
    // xi + rho cancels catastrophically on the negative ray; use the
    // conjugate form there.
    let base = if xi >= 0.0 {
        xi + rho
    } else if rho - xi > 0.0 {
        y * y / (rho - xi)
    } else {
        0.0
    };
    c * base.powf((1.0 - a) / 2.0) * (xi - 0.5 * (1.0 - a) * rho)
}

/// Thin-trace coefficient: vhat0(x, 0) = coeff * <x,e>^{kappa0} on the
/// positive ray.
pub fn vhat0_trace_coefficient(a: f64, c: f64) -> f64 {
    c * 2.0f64.powf((1.0 - a) / 2.0) * (1.0 + a) / 2.0
}

/// Reaction -lim y^a d_y vhat0 on the contact ray, at signed distance
/// d > 0 behind the free boundary point.
pub fn vhat0_reaction(a: f64, c: f64, d: f64) -> f64 {
    c * (1.0 - a) * (3.0 - a) / 2.0 * 2.0f64.powf(-(1.0 - a) / 2.0) * d.powf((1.0 + a) / 2.0)
}

/// Even degree-two global solution x1^2 - y^2/(1+a); touches the obstacle
/// only on the thin hyperplane slice {x1 = 0}, where the frequency is 2.
/// Used as the singular-point specimen in classification tests.
pub fn degree_two_profile(x: &[f64; 2], y: f64, a: f64) -> f64 {
    x[0] * x[0] - y * y / (1.0 + a)
}

/// Sampled-profile audit: how well the discrete operator, constraint sign,
/// and complementarity recognize the model solution on a given grid.
pub struct PrototypeAudit {
    /// Max |weighted operator density| over interior nodes at distance at
    /// least `margin` from the singular ray.
    pub max_interior_residual: f64,
    /// Most negative thin value (should be >= -round-off).
    pub min_thin_value: f64,
    /// Most negative reaction over the contact ray.
    pub min_contact_reaction: f64,
    /// Largest |reaction| over the positivity ray beyond `margin`.
    pub max_positive_ray_flux: f64,
}

/// Sample the profile on `grid` and audit the Signorini structure.
pub fn vhat0_signorini_audit(params: &PrototypeParams, grid: &Arc<WeightedGrid>, margin: f64) -> PrototypeAudit {
    let a = params.a;
    let field = Field::from_fn(grid, |x, y| vhat0(x, y, a, params.c, &params.e));
    let lv = crate::grid::apply_weighted_operator(&field);
    let mut max_res = 0.0f64;
    for node in 0..grid.num_nodes() {
        let (x, y) = grid.node_pos(node);
        let xi = x[0] * params.e[0] + x[1] * params.e[1];
        // distance to the ray {xi <= 0, y = 0}
        let dist = if xi <= 0.0 {
            y.abs()
        } else {
            (xi * xi + y * y).sqrt()
        };
        if dist >= margin {
            max_res = max_res.max(lv.values[node].abs());
        }
    }

    let flux = weighted_normal_derivative(&field);
    let mut min_thin = f64::INFINITY;
    let mut min_contact_reaction = f64::INFINITY;
    let mut max_positive_flux = 0.0f64;
    for fx in 0..grid.num_thin() {
        let x = grid.thin_pos(fx);
        let xi = x[0] * params.e[0] + x[1] * params.e[1];
        let v = field.values[grid.idx(fx, 0)];
        min_thin = min_thin.min(v);
        if xi <= -margin {
            min_contact_reaction = min_contact_reaction.min(-flux.values[fx]);
        } else if xi >= margin {
            max_positive_flux = max_positive_flux.max(flux.values[fx].abs());
        }
    }
    PrototypeAudit {
        max_interior_residual: max_res,
        min_thin_value: min_thin,
        min_contact_reaction,
        max_positive_ray_flux: max_positive_flux,
    }
}

/// Normalization constant C_s = 2^{2s-1} Gamma(s)/Gamma(1-s) of the
/// Dirichlet-to-Neumann identity; C_{1/2} = 1.
pub fn extension_constant(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config {
            field: "s".into(),
            message: format!("fractional order must lie in (0,1), got {s}"),
        });
    }
    let g1 = statrs::function::gamma::gamma(s);
    let g2 = statrs::function::gamma::gamma(1.0 - s);
    Ok(2.0f64.powf(2.0 * s - 1.0) * g1 / g2)
}

/// Result of the spectral identity check for one Fourier mode.
pub struct DtnCheck {
    pub k: f64,
    pub s: f64,
    /// Relative L2 error of -C_s d_y^a U against |k|^{2s} cos(kx).
    pub rel_l2_error: f64,
    /// The constant used.
    pub c_s: f64,
}

/// Solve the steady extension of u = cos(kx) on a periodic strip and
/// compare the weighted normal trace with the fractional symbol |k|^{2s}.
/// `nx`, `ny` control resolution; the strip height is fixed at 8, tall
/// enough that the Dirichlet cap at the top is below round-off relevance
/// for k >= 1.
pub fn dtn_identity_check(a: f64, k: f64, nx: usize, ny: usize) -> Result<DtnCheck> {
    let s = (1.0 - a) / 2.0;
    let grid = WeightedGrid::build(GridSpec {
        n: 1,
        a,
        half_width: std::f64::consts::PI,
        height: 8.0,
        nx,
        ny,
        grading: 2.0,
        periodic_x: true,
    })?;
    let thin_data = ThinField::from_fn(&grid, |x| (k * x[0]).cos());
    let dirichlet = Field::zeros(&grid);
    let problem = EllipticProblem::new(&grid, Field::zeros(&grid), ThinField::zeros(&grid), dirichlet);
    let mut params = SolverParams::default();
    params.tol = 1e-10;
    params.max_iter = 200_000;
    let sol = solve_thin_dirichlet(&problem, &params, &thin_data)?.require_converged()?;

    let c_s = extension_constant(s)?;
    let flux = weighted_normal_derivative(&sol.v);
    let symbol = k.abs().powf(2.0 * s);
    let mut num = 0.0;
    let mut den = 0.0;
    for fx in 0..grid.num_thin() {
        let predicted = -c_s * flux.values[fx];
        let exact = symbol * thin_data.values[fx];
        num += (predicted - exact) * (predicted - exact);
        den += exact * exact;
    }
    Ok(DtnCheck {
        k,
        s,
        rel_l2_error: (num / den).sqrt(),
        c_s,
    })
}

/// Best-fit member of the model family to a field sampled on the
/// half-sphere of radius `r_fit` around the thin origin of `field`'s grid.
pub struct PrototypeFit {
    pub c: f64,
    pub e: [f64; 2],
    /// Misfit energy divided by data energy on the sphere.
    pub rel_misfit: f64,
}

/// Least-squares fit of (c, e) over the model family, by golden-section
/// refinement of a coarse sweep over the direction angle (n = 2) or a
/// two-way comparison (n = 1).  The amplitude solve is closed-form.
pub fn fit_prototype(field: &Field, center: &[f64; 2], r_fit: f64) -> Result<PrototypeFit> {
    let g = &field.grid;
    let a = g.a();
    let n = g.n();

    // quadrature points on the half-sphere with |y|^a surface weights
    let n_theta = 96;
    let mut pts: Vec<([f64; 2], f64, f64)> = Vec::new(); // (x, y, weight)
    if n == 1 {
        for i in 0..n_theta {
            let th = std::f64::consts::PI * (i as f64 + 0.5) / n_theta as f64;
            let (sin, cos) = th.sin_cos();
            let w = sin.powf(a) * std::f64::consts::PI / n_theta as f64;
            pts.push(([center[0] + r_fit * cos, 0.0], r_fit * sin, w));
        }
    } else {
        let n_phi = 128;
        for i in 0..n_theta / 2 {
            let th = 0.5 * std::f64::consts::PI * (i as f64 + 0.5) / (n_theta / 2) as f64;
            let (sin, cos) = th.sin_cos();
            for j in 0..n_phi {
                let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_phi as f64;
                let w = sin.powf(a) * cos;
                pts.push((
                    [
                        center[0] + r_fit * cos * ph.cos(),
                        center[1] + r_fit * cos * ph.sin(),
                    ],
                    r_fit * sin,
                    w,
                ));
            }
        }
    }

    let data: Vec<f64> = pts.iter().map(|(x, y, _)| field.interpolate(x, *y)).collect();
    let data_energy: f64 = pts.iter().zip(&data).map(|((_, _, w), d)| w * d * d).sum();
    if data_energy <= 0.0 {
        return Err(Error::EmptySample("no data energy on fitting sphere".into()));
    }

    // misfit at a candidate direction angle; amplitude is linear
    let eval = |phi_e: f64| -> (f64, f64) {
        let e = [phi_e.cos(), phi_e.sin()];
        let mut hd = 0.0;
        let mut hh = 0.0;
        for ((x, y, w), d) in pts.iter().zip(&data) {
            let rel = [x[0] - center[0], x[1] - center[1]];
            let h = vhat0(&rel, *y, a, 1.0, &e);
            hd += w * h * d;
            hh += w * h * h;
        }
        let c = (hd / hh).max(0.0);
        let mut mis = 0.0;
        for ((x, y, w), d) in pts.iter().zip(&data) {
            let rel = [x[0] - center[0], x[1] - center[1]];
            let r = d - c * vhat0(&rel, *y, a, 1.0, &e);
            mis += w * r * r;
        }
        (mis, c)
    };

    let (best_phi, best_c, best_mis) = if n == 1 {
        let (m0, c0) = eval(0.0);
        let (m1, c1) = eval(std::f64::consts::PI);
        if m0 <= m1 {
            (0.0, c0, m0)
        } else {
            (std::f64::consts::PI, c1, m1)
        }
    } else {
        let coarse = 720;
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..coarse {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / coarse as f64;
            let (m, c) = eval(phi);
            if m < best.2 {
                best = (phi, c, m);
            }
        }
        // golden-section refinement around the coarse minimum
        let gr = (5.0f64.sqrt() - 1.0) / 2.0;
        let span = 2.0 * std::f64::consts::PI / coarse as f64;
        let (mut lo, mut hi) = (best.0 - span, best.0 + span);
        for _ in 0..40 {
            let m1p = hi - gr * (hi - lo);
            let m2p = lo + gr * (hi - lo);
            if eval(m1p).0 < eval(m2p).0 {
                hi = m2p;
            } else {
                lo = m1p;
            }
        }
        let phi = 0.5 * (lo + hi);
        let (m, c) = eval(phi);
        (phi, c, m)
    };

    Ok(PrototypeFit {
        c: best_c,
        e: [best_phi.cos(), best_phi.sin()],
        rel_misfit: best_mis / data_energy,
    })
}
