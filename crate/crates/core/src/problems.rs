//! Built-in problem library.  Each named problem fixes obstacle, forcing,
//! and boundary data on a given grid; the names are the ones the
//! configuration file and the acceptance suite refer to.

use std::str::FromStr;
use std::sync::Arc;

use crate::elliptic::EllipticProblem;
use crate::grid::{Field, ThinField, WeightedGrid};
use crate::parabolic::ParabolicProblem;
use crate::reference::vhat0;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NamedProblem {
    Prototype,
    Constant,
    TiltedPrototype,
    MovingObstacle,
    DrivenF,
}

impl NamedProblem {
    pub fn name(&self) -> &'static str {
        match self {
            NamedProblem::Prototype => "prototype",
            NamedProblem::Constant => "constant",
            NamedProblem::TiltedPrototype => "tilted-prototype",
            NamedProblem::MovingObstacle => "moving-obstacle",
            NamedProblem::DrivenF => "driven-F",
        }
    }
}

impl FromStr for NamedProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prototype" => Ok(NamedProblem::Prototype),
            "constant" => Ok(NamedProblem::Constant),
            "tilted-prototype" => Ok(NamedProblem::TiltedPrototype),
            "moving-obstacle" => Ok(NamedProblem::MovingObstacle),
            "driven-F" | "driven-f" => Ok(NamedProblem::DrivenF),
            other => Err(Error::Config {
                field: "problem.name".into(),
                message: format!(
                    "unknown problem {other:?}; known: prototype, constant, \
                     tilted-prototype, moving-obstacle, driven-F"
                ),
            }),
        }
    }
}

/// Adjustable knobs of the built-in problems; every field has a sensible
/// default so configs only override what they study.
#[derive(Clone, Debug)]
pub struct ProblemTuning {
    /// Amplitude c of the prototype data.
    pub amplitude: f64,
    /// Thin direction of the tilted prototype, degrees from the x1 axis.
    pub tilt_degrees: f64,
    /// Constant obstacle level (negative: below the zero boundary data).
    pub obstacle_level: f64,
    /// Forcing magnitude for "constant" and "driven-F".
    pub forcing: f64,
    /// Time horizon of the parabolic problems.
    pub horizon: f64,
}

impl Default for ProblemTuning {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            tilt_degrees: 20.0,
            obstacle_level: -0.25,
            forcing: 2.0,
            horizon: 0.4,
        }
    }
}

impl ProblemTuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) {
            return Err(Error::Config {
                field: "problem.amplitude".into(),
                message: format!("amplitude must be positive, got {}", self.amplitude),
            });
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config {
                field: "problem.horizon".into(),
                message: format!("horizon must be positive, got {}", self.horizon),
            });
        }
        if !self.tilt_degrees.is_finite() || !self.obstacle_level.is_finite() || !self.forcing.is_finite() {
            return Err(Error::Config {
                field: "problem.tuning".into(),
                message: "tilt, obstacle level, and forcing must be finite".into(),
            });
        }
        Ok(())
    }
}

fn unit_direction(n: usize, degrees: f64) -> [f64; 2] {
    if n == 1 {
        [1.0, 0.0]
    } else {
        let t = degrees.to_radians();
        [t.cos(), t.sin()]
    }
}

/// Prototype data: boundary values from the closed form, zero obstacle,
/// zero forcing.  The discrete solution converges to the closed form.
pub fn prototype_elliptic(grid: &Arc<WeightedGrid>, c: f64) -> EllipticProblem {
    let a = grid.a();
    let e = [1.0, 0.0];
    EllipticProblem::new(
        grid,
        Field::zeros(grid),
        ThinField::zeros(grid),
        Field::from_fn(grid, |x, y| vhat0(x, y, a, c, &e)),
    )
}

/// Prototype with the thin direction rotated in the thin plane; needs two
/// thin dimensions.
pub fn tilted_prototype_elliptic(
    grid: &Arc<WeightedGrid>,
    c: f64,
    degrees: f64,
) -> Result<EllipticProblem> {
    if grid.n() != 2 {
        return Err(Error::Config {
            field: "problem.name".into(),
            message: "tilted-prototype needs n = 2".into(),
        });
    }
    let a = grid.a();
    let e = unit_direction(2, degrees);
    Ok(EllipticProblem::new(
        grid,
        Field::zeros(grid),
        ThinField::zeros(grid),
        Field::from_fn(grid, |x, y| vhat0(x, y, a, c, &e)),
    ))
}

/// Constant obstacle below zero boundary data, pushed into contact by a
/// uniform downward load.
pub fn constant_obstacle_elliptic(
    grid: &Arc<WeightedGrid>,
    level: f64,
    forcing: f64,
) -> EllipticProblem {
    EllipticProblem::new(
        grid,
        Field::from_fn(grid, |_, _| forcing),
        ThinField::from_fn(grid, |_| level),
        Field::zeros(grid),
    )
}

/// Prototype boundary data with a bounded nonzero right-hand side and zero
/// obstacle; keeps a free boundary while exercising the forcing terms of
/// the monotonicity formulas.
pub fn driven_f_elliptic(grid: &Arc<WeightedGrid>, c: f64, forcing: f64) -> EllipticProblem {
    let a = grid.a();
    let e = [1.0, 0.0];
    let half_pi = std::f64::consts::FRAC_PI_2;
    let w = grid.spec.half_width;
    EllipticProblem::new(
        grid,
        Field::from_fn(grid, move |x, _| forcing * (half_pi * x[0] / w).cos()),
        ThinField::zeros(grid),
        Field::from_fn(grid, |x, y| vhat0(x, y, a, c, &e)),
    )
}

/// Stationary prototype marched in time: initial and lateral data from the
/// closed form, zero obstacle and forcing.  The march must hold the
/// state fixed.
pub fn prototype_parabolic(grid: &Arc<WeightedGrid>, c: f64, horizon: f64) -> ParabolicProblem {
    let a = grid.a();
    let e = [1.0, 0.0];
    ParabolicProblem::new(
        grid,
        Field::from_fn(grid, |x, y| vhat0(x, y, a, c, &e)),
        horizon,
        |_, _| 0.0,
        |_, _, _| 0.0,
        move |x, y, _| vhat0(x, y, a, c, &e),
    )
}

/// Obstacle rising and translating under zero initial and lateral data;
/// the contact set grows and its edge traces a moving free boundary.
pub fn moving_obstacle_parabolic(grid: &Arc<WeightedGrid>, horizon: f64) -> ParabolicProblem {
    let t_end = horizon;
    let psi = move |x: &[f64; 2], t: f64| -> f64 {
        let s = t / t_end;
        let center = -0.1 + 0.3 * s;
        let width: f64 = 0.5;
        let bump = 1.0 - ((x[0] - center) / width).powi(2);
        0.8 * s * bump.max(0.0)
    };
    ParabolicProblem::new(
        grid,
        Field::zeros(grid),
        horizon,
        psi,
        |_, _, _| 0.0,
        |_, _, _| 0.0,
    )
}

/// Prototype initial data driven by a bounded time-periodic load with zero
/// obstacle.
pub fn driven_f_parabolic(
    grid: &Arc<WeightedGrid>,
    c: f64,
    forcing: f64,
    horizon: f64,
) -> ParabolicProblem {
    let a = grid.a();
    let e = [1.0, 0.0];
    let half_pi = std::f64::consts::FRAC_PI_2;
    let w = grid.spec.half_width;
    let t_end = horizon;
    ParabolicProblem::new(
        grid,
        Field::from_fn(grid, |x, y| vhat0(x, y, a, c, &e)),
        horizon,
        |_, _| 0.0,
        move |x, _, t| forcing * (half_pi * x[0] / w).cos() * (std::f64::consts::PI * t / t_end).sin(),
        move |x, y, _| vhat0(x, y, a, c, &e),
    )
}

/// Dispatch an elliptic problem by name.
pub fn build_elliptic(
    name: NamedProblem,
    grid: &Arc<WeightedGrid>,
    tuning: &ProblemTuning,
) -> Result<EllipticProblem> {
    tuning.validate()?;
    match name {
        NamedProblem::Prototype => Ok(prototype_elliptic(grid, tuning.amplitude)),
        NamedProblem::Constant => Ok(constant_obstacle_elliptic(
            grid,
            tuning.obstacle_level,
            tuning.forcing,
        )),
        NamedProblem::TiltedPrototype => {
            tilted_prototype_elliptic(grid, tuning.amplitude, tuning.tilt_degrees)
        }
        NamedProblem::DrivenF => Ok(driven_f_elliptic(grid, tuning.amplitude, tuning.forcing)),
        NamedProblem::MovingObstacle => Err(Error::Config {
            field: "problem.name".into(),
            message: "moving-obstacle is parabolic; use solve-parabolic".into(),
        }),
    }
}

/// Dispatch a parabolic problem by name.
pub fn build_parabolic(
    name: NamedProblem,
    grid: &Arc<WeightedGrid>,
    tuning: &ProblemTuning,
) -> Result<ParabolicProblem> {
    tuning.validate()?;
    match name {
        NamedProblem::Prototype => Ok(prototype_parabolic(grid, tuning.amplitude, tuning.horizon)),
        NamedProblem::MovingObstacle => Ok(moving_obstacle_parabolic(grid, tuning.horizon)),
        NamedProblem::DrivenF => Ok(driven_f_parabolic(
            grid,
            tuning.amplitude,
            tuning.forcing,
            tuning.horizon,
        )),
        NamedProblem::Constant | NamedProblem::TiltedPrototype => Err(Error::Config {
            field: "problem.name".into(),
            message: format!("{} has no parabolic form here", name.name()),
        }),
    }
}
