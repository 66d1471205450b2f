//! Randomized verification of the epiperimetric inequality at the bottom
//! frequency: relaxing the homogeneous extension of a perturbed prototype
//! trace inside the unit half-ball must drop the Weiss excess by a
//! definite fraction.
//!
//! The check is made discrete-exact.  The competitor is the projected-SOR
//! warm start itself, so the relaxed field never has more energy than the
//! homogeneous one; the inner face energy counts exactly the faces the
//! solver may change, so frozen-frozen faces cancel; and the Weiss
//! reference is calibrated on the sampled prototype so the lattice
//! staircase around the ball does not leak into the excess.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{solve_pgs_from, EllipticProblem, SolverParams};
use crate::functionals::{sinc_pow, theta_endpoint_rule};
use crate::grid::{Field, GridSpec, NodeKind, ThinField, WeightedGrid};
use crate::reference::{kappa0, vhat0};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EpiParams {
    /// Accepted samples per run.
    pub count: usize,
    /// Perturbation amplitude relative to the sup of the mode mix.
    pub theta: f64,
    /// Number of cosine modes in the trace perturbation.
    pub modes: usize,
    pub seed: u64,
    /// Relative energy distance beyond which a sample is flagged as
    /// outside the inequality's neighborhood hypothesis.
    pub hyp_bound: f64,
    pub nx: usize,
    pub ny: usize,
    /// Half-width and height of the box holding the unit half-ball.
    pub box_size: f64,
    /// Panels for the angular trace quadrature.
    pub panels: usize,
    pub solver: SolverParams,
}

impl Default for EpiParams {
    fn default() -> Self {
        EpiParams {
            count: 20,
            theta: 0.1,
            modes: 4,
            seed: 1,
            hyp_bound: 0.5,
            nx: 65,
            ny: 65,
            box_size: 1.25,
            panels: 192,
            solver: SolverParams {
                tol: 1e-9,
                max_iter: 200_000,
                ..SolverParams::default()
            },
        }
    }
}

impl EpiParams {
    fn validate(&self, a: f64) -> Result<()> {
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::Config {
                field: "problem.a".into(),
                message: format!("weight exponent must lie in (-1, 1), got {a}"),
            });
        }
        if self.count == 0 {
            return Err(Error::Config {
                field: "epi.count".into(),
                message: "need at least one sample".into(),
            });
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::Config {
                field: "epi.theta".into(),
                message: format!("perturbation amplitude must be finite and >= 0, got {}", self.theta),
            });
        }
        if self.modes == 0 {
            return Err(Error::Config {
                field: "epi.modes".into(),
                message: "need at least one perturbation mode".into(),
            });
        }
        if !(self.box_size > 1.0) {
            return Err(Error::Config {
                field: "epi.box_size".into(),
                message: "box must contain the unit half-ball".into(),
            });
        }
        Ok(())
    }
}

/// One accepted draw.
#[derive(Clone, Debug)]
pub struct EpiSample {
    /// Normalized mode coefficients of the trace perturbation.
    pub alphas: Vec<f64>,
    /// Weiss excess of the homogeneous extension.
    pub excess_homogeneous: f64,
    /// Weiss excess after Signorini relaxation in the half-ball.
    pub excess_relaxed: f64,
    /// excess_relaxed / excess_homogeneous; at most one by minimality.
    pub ratio: Option<f64>,
    /// Relative energy distance to the prototype.
    pub hyp_distance: f64,
    pub out_of_hypothesis: bool,
}

#[derive(Debug)]
pub struct EpiReport {
    pub a: f64,
    /// Discrete/continuum calibration of the Weiss reference.
    pub beta: f64,
    /// One minus the worst accepted ratio.
    pub kappa_hat: f64,
    pub max_ratio: f64,
    pub samples: Vec<EpiSample>,
    /// Draws discarded for negative trace at the thin endpoints.
    pub rejected: usize,
    /// Samples with excess too small to form a ratio.
    pub skipped: usize,
}

/// Inner discrete Dirichlet energy: sum of T_F (dv)^2 over faces with at
/// least one endpoint the solver may move.
fn inner_energy(g: &WeightedGrid, frozen: &[bool], v: &[f64]) -> f64 {
    let ny = g.ny();
    let mut e = 0.0;
    for fx in 0..g.num_thin() {
        for iy in 0..ny {
            let p = g.idx(fx, iy);
            if iy + 1 < ny {
                let q = g.idx(fx, iy + 1);
                if !frozen[p] || !frozen[q] {
                    let dv = v[q] - v[p];
                    e += g.ty_face(fx, iy) * dv * dv;
                }
            }
            for axis in 0..g.n() {
                if let Some(nb) = g.x_neighbor(fx, axis, 1) {
                    if g.spec.periodic_x && nb < fx {
                        continue;
                    }
                    let q = g.idx(nb, iy);
                    if !frozen[p] || !frozen[q] {
                        let dv = v[q] - v[p];
                        e += g.tx_face(fx, axis, iy) * dv * dv;
                    }
                }
            }
        }
    }
    e
}

/// Integral of phi^2 sin^a over the upper half-circle, by the
/// endpoint-weighted rule on each quarter.
fn angular_h(a: f64, panels: usize, phi: &dyn Fn(f64) -> f64) -> f64 {
    let (ts, ws) = theta_endpoint_rule(a, panels);
    let mut h = 0.0;
    for (t, w) in ts.iter().zip(ws.iter()) {
        let s = sinc_pow(*t, a);
        let lo = phi(*t);
        let hi = phi(std::f64::consts::PI - *t);
        h += w * s * (lo * lo + hi * hi);
    }
    h
}

fn homogeneous_field(g: &std::sync::Arc<WeightedGrid>, k0: f64, phi: &dyn Fn(f64) -> f64) -> Field {
    Field::from_fn(g, |x, y| {
        let rho = (x[0] * x[0] + y * y).sqrt();
        if rho == 0.0 {
            0.0
        } else {
            rho.powf(k0) * phi(y.atan2(x[0]))
        }
    })
}

/// Run the epiperimetric battery for one weight exponent.
pub fn epi_check(a: f64, params: &EpiParams) -> Result<EpiReport> {
    params.validate(a)?;
    let k0 = kappa0(a);
    let g = WeightedGrid::build(GridSpec {
        n: 1,
        a,
        half_width: params.box_size,
        height: params.box_size,
        nx: params.nx,
        ny: params.ny,
        grading: 2.0,
        periodic_x: false,
    })?;

    let mut frozen = vec![false; g.num_nodes()];
    for fx in 0..g.num_thin() {
        let x = g.thin_pos(fx)[0];
        for iy in 0..g.ny() {
            let p = g.idx(fx, iy);
            let y = g.ys[iy];
            frozen[p] = g.kind(p) == NodeKind::Boundary || x * x + y * y >= 1.0;
        }
    }

    let phi0 = move |u: f64| vhat0(&[u.cos(), 0.0], u.sin(), a, 1.0, &[1.0, 0.0]);
    let w0 = homogeneous_field(&g, k0, &phi0);
    let d0 = inner_energy(&g, &frozen, &w0.values);
    let h0 = angular_h(a, params.panels, &phi0);
    let beta = d0 / (k0 * h0);

    let mask: Vec<bool> = frozen.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::with_capacity(params.count);
    let mut rejected = 0usize;
    let mut skipped = 0usize;
    let mut attempts = 0usize;
    let budget = 10 * params.count;

    while samples.len() < params.count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::EmptySample(format!(
                "only {} of {} admissible traces in {budget} draws",
                samples.len(),
                params.count
            )));
        }
        let mut alphas: Vec<f64> = (0..params.modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup = (0..=256)
            .map(|j| {
                let u = std::f64::consts::PI * j as f64 / 256.0;
                mode_mix(&alphas, u).abs()
            })
            .fold(0.0f64, f64::max);
        if sup == 0.0 {
            rejected += 1;
            continue;
        }
        for al in &mut alphas {
            *al /= sup;
        }
        let theta = params.theta;
        let al = alphas.clone();
        let phi = move |u: f64| phi0(u) + theta * mode_mix(&al, u);
        if phi(0.0) < 0.0 || phi(std::f64::consts::PI) < 0.0 {
            rejected += 1;
            continue;
        }

        let w = homogeneous_field(&g, k0, &phi);
        let mut problem = EllipticProblem::new(&g, Field::zeros(&g), ThinField::zeros(&g), w.clone());
        problem.mask = Some(mask.clone());
        let relaxed = solve_pgs_from(&problem, &params.solver, &w)?.require_converged()?;

        let reference = beta * k0 * angular_h(a, params.panels, &phi);
        let excess_h = inner_energy(&g, &frozen, &w.values) - reference;
        let excess_r = inner_energy(&g, &frozen, &relaxed.v.values) - reference;

        let mut diff = w.clone();
        for (d, v) in diff.values.iter_mut().zip(w0.values.iter()) {
            *d -= v;
        }
        let hyp_distance = (inner_energy(&g, &frozen, &diff.values) / d0).sqrt();
        let out_of_hypothesis = hyp_distance > params.hyp_bound;

        let ratio = if excess_h > 1e-9 * d0 {
            Some(excess_r / excess_h)
        } else {
            skipped += 1;
            None
        };
        samples.push(EpiSample {
            alphas,
            excess_homogeneous: excess_h,
            excess_relaxed: excess_r,
            ratio,
            hyp_distance,
            out_of_hypothesis,
        });
    }

    let mut max_all = f64::NEG_INFINITY;
    let mut max_in_hyp = f64::NEG_INFINITY;
    for s in &samples {
        if let Some(r) = s.ratio {
            max_all = max_all.max(r);
            if !s.out_of_hypothesis {
                max_in_hyp = max_in_hyp.max(r);
            }
        }
    }
    if !max_all.is_finite() {
        return Err(Error::EmptySample(
            "no sample produced a usable excess ratio".into(),
        ));
    }
    // out-of-hypothesis ratios stay in the report but not in kappa_hat
    let kappa_hat = if max_in_hyp.is_finite() {
        1.0 - max_in_hyp
    } else {
        f64::NAN
    };
    Ok(EpiReport {
        a,
        beta,
        kappa_hat,
        max_ratio: max_all,
        samples,
        rejected,
        skipped,
    })
}

fn mode_mix(alphas: &[f64], u: f64) -> f64 {
    alphas
        .iter()
        .enumerate()
        .map(|(m, al)| al * (m as f64 * u).cos())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_calibration_stays_near_unity() {
        for a in [-0.5, 0.0, 0.5] {
            let params = EpiParams {
                count: 1,
                theta: 0.2,
                seed: 3,
                ..EpiParams::default()
            };
            let rep = epi_check(a, &params).unwrap();
            assert!(
                (rep.beta - 1.0).abs() < 0.15,
                "a = {a}: staircase calibration beta = {}",
                rep.beta
            );
        }
    }

    #[test]
    fn relaxation_never_raises_and_usually_drops_the_excess() {
        let params = EpiParams {
            count: 6,
            theta: 0.15,
            seed: 11,
            ..EpiParams::default()
        };
        let rep = epi_check(0.0, &params).unwrap();
        assert_eq!(rep.samples.len(), 6);
        for s in &rep.samples {
            if let Some(r) = s.ratio {
                assert!(r <= 1.0 + 1e-9, "minimality violated: ratio {r}");
                assert!(
                    s.excess_relaxed <= s.excess_homogeneous + 1e-12,
                    "energy rose: {} -> {}",
                    s.excess_homogeneous,
                    s.excess_relaxed
                );
            }
            assert!(!s.out_of_hypothesis, "theta = 0.15 should stay in range, d = {}", s.hyp_distance);
        }
        assert!(rep.kappa_hat > 0.0, "kappa_hat = {}", rep.kappa_hat);
        assert!(rep.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn unperturbed_prototype_has_no_excess_to_measure() {
        let params = EpiParams {
            count: 3,
            theta: 1e-9,
            seed: 5,
            ..EpiParams::default()
        };
        let err = epi_check(0.3, &params);
        assert!(
            matches!(err, Err(Error::EmptySample(_))),
            "near-zero perturbations must be skipped, got {:?}",
            err.map(|r| r.kappa_hat)
        );
    }

    #[test]
    fn runs_reproduce_by_seed() {
        let params = EpiParams {
            count: 3,
            theta: 0.12,
            seed: 21,
            ..EpiParams::default()
        };
        let r1 = epi_check(-0.3, &params).unwrap();
        let r2 = epi_check(-0.3, &params).unwrap();
        for (s1, s2) in r1.samples.iter().zip(r2.samples.iter()) {
            assert_eq!(s1.alphas, s2.alphas);
            assert_eq!(s1.ratio, s2.ratio);
        }
        let other = epi_check(
            -0.3,
            &EpiParams {
                seed: 22,
                ..params
            },
        )
        .unwrap();
        assert_ne!(r1.samples[0].alphas, other.samples[0].alphas);
    }

    #[test]
    fn gross_perturbations_are_flagged_out_of_hypothesis() {
        let params = EpiParams {
            count: 2,
            theta: 10.0,
            seed: 9,
            ..EpiParams::default()
        };
        let rep = epi_check(0.0, &params).unwrap();
        assert!(rep.samples.iter().all(|s| s.out_of_hypothesis));
        assert!(rep.samples.iter().any(|s| s.ratio.is_some()));
        assert!(rep.kappa_hat.is_nan(), "flagged samples must not enter kappa_hat");
        assert!(rep.max_ratio.is_finite());
    }

    #[test]
    fn parameter_guards_reject_bad_requests() {
        let p = EpiParams::default();
        assert!(matches!(epi_check(1.0, &p), Err(Error::Config { .. })));
        let bad = EpiParams {
            theta: f64::NAN,
            ..EpiParams::default()
        };
        assert!(matches!(epi_check(0.0, &bad), Err(Error::Config { .. })));
        let tiny = EpiParams {
            box_size: 0.9,
            ..EpiParams::default()
        };
        assert!(matches!(epi_check(0.0, &tiny), Err(Error::Config { .. })));
    }
}
