//! Implicit time marching for the parabolic thin-obstacle problem.
//!
//! Each backward Euler step is a stationary Signorini problem with a
//! zeroth-order mass shift,
//!
//!   (sum_F T_F + m/dt) U - sum_F T_F U_nb = m (F + U_prev/dt),
//!
//! solved by the projected solver in `elliptic`.  A solved step therefore
//! coincides, slice by slice, with the stationary problem whose right-hand
//! side is the discrete U_t - F; `reduction_check` re-verifies that
//! identity after the fact, with no knowledge of how the step was produced.

use std::sync::Arc;

use crate::elliptic::{
    solve_penalized, solve_pgs_from, EllipticProblem, MassShift, Residuals, SignoriniSolution,
    SolverParams,
};
use crate::grid::{trace, Field, ThinField, WeightedGrid};
use crate::{Error, Result};

type SpaceTimeFn = Box<dyn Fn(&[f64; 2], f64, f64) -> f64 + Send + Sync>;
type ThinTimeFn = Box<dyn Fn(&[f64; 2], f64) -> f64 + Send + Sync>;

/// Time-dependent problem data.  The obstacle lives on the thin plane and
/// may move; forcing and lateral data are full space-time fields.
pub struct ParabolicProblem {
    pub grid: Arc<WeightedGrid>,
    pub initial: Field,
    pub horizon: f64,
    psi: ThinTimeFn,
    forcing: SpaceTimeFn,
    boundary: SpaceTimeFn,
}

impl ParabolicProblem {
    pub fn new(
        grid: &Arc<WeightedGrid>,
        initial: Field,
        horizon: f64,
        psi: impl Fn(&[f64; 2], f64) -> f64 + Send + Sync + 'static,
        forcing: impl Fn(&[f64; 2], f64, f64) -> f64 + Send + Sync + 'static,
        boundary: impl Fn(&[f64; 2], f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            grid: Arc::clone(grid),
            initial,
            horizon,
            psi: Box::new(psi),
            forcing: Box::new(forcing),
            boundary: Box::new(boundary),
        }
    }

    pub fn psi_at(&self, t: f64) -> ThinField {
        ThinField::from_fn(&self.grid, |x| (self.psi)(x, t))
    }

    pub fn forcing_at(&self, t: f64) -> Field {
        Field::from_fn(&self.grid, |x, y| (self.forcing)(x, y, t))
    }

    pub fn boundary_at(&self, t: f64) -> Field {
        Field::from_fn(&self.grid, |x, y| (self.boundary)(x, y, t))
    }

    fn check_initial(&self) -> Result<()> {
        let psi0 = self.psi_at(0.0);
        let scale = self
            .initial
            .max_abs()
            .max(psi0.max_abs())
            .max(f64::MIN_POSITIVE);
        let tr = trace(&self.initial);
        for fx in 0..self.grid.num_thin() {
            if tr.values[fx] < psi0.values[fx] - 1e-12 * scale {
                return Err(Error::Incompatible(format!(
                    "initial state dips below the obstacle by {}",
                    psi0.values[fx] - tr.values[fx]
                )));
            }
        }
        Ok(())
    }

    /// The stationary problem solved by the step ending at `t`, given the
    /// slice `prev` one step earlier.
    fn step_problem(&self, prev: &Field, t: f64, dt: f64) -> EllipticProblem {
        let f = Field::from_fn(&self.grid, |x, y| -(self.forcing)(x, y, t));
        let mut ep = EllipticProblem::new(&self.grid, f, self.psi_at(t), self.boundary_at(t));
        ep.mass_shift = Some(MassShift {
            alpha: 1.0 / dt,
            prev: prev.clone(),
        });
        ep
    }
}

/// Marching controls: number of steps over the full horizon.
#[derive(Clone, Debug)]
pub struct MarchParams {
    pub nt: usize,
    pub solver: SolverParams,
}

impl MarchParams {
    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            return Err(Error::Config {
                field: "parabolic.nt".into(),
                message: "need at least one time step".into(),
            });
        }
        self.solver.validate()
    }
}

impl Default for MarchParams {
    fn default() -> Self {
        Self {
            nt: 16,
            solver: SolverParams::default(),
        }
    }
}

/// Per-step convergence record.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StepReport {
    pub time: f64,
    pub iters: usize,
    pub pde_residual: f64,
    pub comp_residual: f64,
    pub contact_fraction: f64,
}

/// The marched solution: slice fields at uniformly spaced times, starting
/// with the initial state.
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    /// Synthetic trajectory sampled from a closure, for analysis of known
    /// space-time profiles.
    pub fn from_fn(
        grid: &Arc<WeightedGrid>,
        times: &[f64],
        f: impl Fn(&[f64; 2], f64, f64) -> f64,
    ) -> Self {
        let fields = times
            .iter()
            .map(|&t| {
                let mut field = Field::from_fn(grid, |x, y| f(x, y, t));
                field.time = Some(t);
                field
            })
            .collect();
        Self {
            times: times.to_vec(),
            fields,
            reports: Vec::new(),
        }
    }

    pub fn final_field(&self) -> &Field {
        self.fields.last().expect("trajectory holds the initial slice")
    }

    /// Backward difference (U_k - U_{k-1}) / dt as a field; k >= 1.
    pub fn ut_slice(&self, k: usize) -> Field {
        assert!(k >= 1 && k < self.fields.len(), "ut_slice needs an interior step");
        let dt = self.times[k] - self.times[k - 1];
        let mut out = self.fields[k].clone();
        for (o, p) in out.values.iter_mut().zip(&self.fields[k - 1].values) {
            *o = (*o - p) / dt;
        }
        out.time = Some(self.times[k]);
        out
    }
}

/// One backward Euler step ending at time `t`.
pub fn step_implicit(
    problem: &ParabolicProblem,
    params: &SolverParams,
    prev: &Field,
    t: f64,
    dt: f64,
) -> Result<SignoriniSolution> {
    let ep = problem.step_problem(prev, t, dt);
    let mut sol = solve_pgs_from(&ep, params, prev)?.require_converged()?;
    sol.v.time = Some(t);
    Ok(sol)
}

fn march_inner(
    problem: &ParabolicProblem,
    params: &MarchParams,
    eps: Option<f64>,
) -> Result<Trajectory> {
    params.validate()?;
    if !(problem.horizon > 0.0) {
        return Err(Error::Config {
            field: "parabolic.horizon".into(),
            message: format!("horizon must be positive, got {}", problem.horizon),
        });
    }
    problem.check_initial()?;

    let dt = problem.horizon / params.nt as f64;
    let mut initial = problem.initial.clone();
    initial.time = Some(0.0);
    let mut times = vec![0.0];
    let mut fields = vec![initial];
    let mut reports = Vec::with_capacity(params.nt);

    for k in 1..=params.nt {
        let t = dt * k as f64;
        let prev = &fields[k - 1];
        let ep = problem.step_problem(prev, t, dt);
        let sol = match eps {
            None => solve_pgs_from(&ep, &params.solver, prev)?,
            Some(eps) => solve_penalized(&ep, &params.solver, eps, Some(prev))?,
        };
        let mut sol = sol.require_converged()?;
        sol.v.time = Some(t);
        reports.push(StepReport {
            time: t,
            iters: sol.iters,
            pde_residual: sol.pde_residual,
            comp_residual: sol.comp_residual,
            contact_fraction: sol.contact_fraction,
        });
        times.push(t);
        fields.push(sol.v);
    }
    Ok(Trajectory {
        times,
        fields,
        reports,
    })
}

/// March the constrained problem with projected steps.
pub fn march(problem: &ParabolicProblem, params: &MarchParams) -> Result<Trajectory> {
    march_inner(problem, params, None)
}

/// March with the penalized thin condition at fixed penalty width `eps`.
pub fn march_penalized(
    problem: &ParabolicProblem,
    params: &MarchParams,
    eps: f64,
) -> Result<Trajectory> {
    march_inner(problem, params, Some(eps))
}

/// Re-verify step `k` of a trajectory as a stationary problem whose
/// right-hand side is the discrete U_t - F, without using any knowledge of
/// how the step was produced.
pub fn reduction_check(problem: &ParabolicProblem, traj: &Trajectory, k: usize) -> Result<Residuals> {
    if k == 0 || k >= traj.fields.len() {
        return Err(Error::Config {
            field: "reduction.step".into(),
            message: format!("step index {k} outside 1..{}", traj.fields.len()),
        });
    }
    let g = &problem.grid;
    let t = traj.times[k];
    let dt = t - traj.times[k - 1];
    let forcing = problem.forcing_at(t);
    let mut f = Field::zeros(g);
    for node in 0..g.num_nodes() {
        let ut = (traj.fields[k].values[node] - traj.fields[k - 1].values[node]) / dt;
        f.values[node] = ut - forcing.values[node];
    }
    let ep = EllipticProblem::new(g, f, problem.psi_at(t), traj.fields[k].clone());
    Ok(crate::elliptic::residuals(&ep, &traj.fields[k]))
}

/// Sup norms of the backward difference quotient, per step and overall.
pub struct TimeDerivativeBound {
    pub per_step: Vec<f64>,
    pub max: f64,
}

pub fn time_derivative_bound(traj: &Trajectory) -> TimeDerivativeBound {
    let mut per_step = Vec::with_capacity(traj.fields.len().saturating_sub(1));
    for k in 1..traj.fields.len() {
        per_step.push(traj.ut_slice(k).max_abs());
    }
    let max = per_step.iter().copied().fold(0.0, f64::max);
    TimeDerivativeBound { per_step, max }
}
