//! Finite-difference right-hand sides and explicit Euler stepping for the
//! three benchmark systems.
//!
//! All systems share the same spatial machinery: a 5-point stencil per cell,
//! a second-order central Laplacian, and a first-order upwind gradient
//! (central differencing is available behind a flag but is unstable for
//! advection-dominated runs under explicit Euler).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Field2D, GridSpec};

/// Entries of a 5-point stencil in canonical order:
/// center, west (i-1), east (i+1), south (j-1), north (j+1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil(pub [f64; 5]);

pub const STENCIL_LEN: usize = 5;

impl Stencil {
    pub fn center(&self) -> f64 {
        self.0[0]
    }
    pub fn west(&self) -> f64 {
        self.0[1]
    }
    pub fn east(&self) -> f64 {
        self.0[2]
    }
    pub fn south(&self) -> f64 {
        self.0[3]
    }
    pub fn north(&self) -> f64 {
        self.0[4]
    }

    pub fn as_array(&self) -> &[f64; 5] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PdeKind {
    AllenCahn,
    AdvectionDiffusion,
    /// Nonlinear transport, u advected by itself.
    Burgers,
    /// Literal linear form with a fixed scalar velocity.
    BurgersLinear,
}

/// Spatial discretization of the transport term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvectionScheme {
    /// First-order, direction picked by the sign of the local velocity.
    Upwind,
    /// Second-order central difference. Unstable for advection-dominated
    /// explicit Euler; exposed for comparison runs only.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSystem {
    pub kind: PdeKind,
    pub diffusion: f64,
    pub advection_velocity: [f64; 2],
    pub boundary: BoundaryCondition,
    pub scheme: AdvectionScheme,
}

impl PdeSystem {
    /// Builds a system, rejecting kind/boundary mismatches and
    /// non-positive diffusion.
    pub fn new(
        kind: PdeKind,
        diffusion: f64,
        advection_velocity: [f64; 2],
        boundary: BoundaryCondition,
        scheme: AdvectionScheme,
    ) -> Result<Self> {
        if !(diffusion > 0.0) || !diffusion.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "diffusion coefficient must be positive and finite, got {diffusion}"
            )));
        }
        let required = match kind {
            PdeKind::AllenCahn => BoundaryCondition::ZeroGradient,
            _ => BoundaryCondition::Periodic,
        };
        if boundary != required {
            return Err(Error::InvalidSpec(format!(
                "{kind:?} requires {required:?} boundary, got {boundary:?}"
            )));
        }
        Ok(Self {
            kind,
            diffusion,
            advection_velocity,
            boundary,
            scheme,
        })
    }

    pub fn allen_cahn(diffusion: f64) -> Result<Self> {
        Self::new(
            PdeKind::AllenCahn,
            diffusion,
            [0.0, 0.0],
            BoundaryCondition::ZeroGradient,
            AdvectionScheme::Upwind,
        )
    }

    pub fn advection_diffusion(diffusion: f64, velocity: [f64; 2]) -> Result<Self> {
        Self::new(
            PdeKind::AdvectionDiffusion,
            diffusion,
            velocity,
            BoundaryCondition::Periodic,
            AdvectionScheme::Upwind,
        )
    }

    pub fn burgers(viscosity: f64) -> Result<Self> {
        Self::new(
            PdeKind::Burgers,
            viscosity,
            [0.0, 0.0],
            BoundaryCondition::Periodic,
            AdvectionScheme::Upwind,
        )
    }

    pub fn burgers_linear(viscosity: f64, velocity: [f64; 2]) -> Result<Self> {
        Self::new(
            PdeKind::BurgersLinear,
            viscosity,
            velocity,
            BoundaryCondition::Periodic,
            AdvectionScheme::Upwind,
        )
    }

    pub fn with_scheme(mut self, scheme: AdvectionScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub dt: f64,
    pub n_steps: usize,
    pub t0: f64,
}

impl TimeSpec {
    pub fn new(dt: f64, n_steps: usize, t0: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "timestep must be positive and finite, got {dt}"
            )));
        }
        Ok(Self { dt, n_steps, t0 })
    }
}

/// Explicit-stability diagnostics for a planned run. Empty when both the
/// diffusive bound dt <= dx^2/(4D) and the advective CFL |v| dt/dx <= 1 hold.
/// Violations are reported, not fatal; callers decide whether to proceed.
pub fn stability_report(system: &PdeSystem, grid: &GridSpec, dt: f64) -> Vec<String> {
    let dx = grid.cell_spacing();
    let mut warnings = Vec::new();
    let diffusive_limit = dx * dx / (4.0 * system.diffusion);
    if dt > diffusive_limit {
        warnings.push(format!(
            "dt = {dt:.3e} exceeds the diffusive stability limit dx^2/(4D) = {diffusive_limit:.3e}"
        ));
    }
    // Nonlinear Burgers has no fixed velocity; unit amplitude is the relevant
    // scale for GP initial data with sigma^2 = 0.25.
    let speed = match system.kind {
        PdeKind::Burgers => 1.0,
        _ => system
            .advection_velocity
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let cfl = speed * dt / dx;
    if cfl > 1.0 {
        warnings.push(format!(
            "advective CFL number {cfl:.3} exceeds 1 (speed scale {speed})"
        ));
    }
    warnings
}

#[inline]
fn wrap(k: isize, n: usize) -> usize {
    let n = n as isize;
    (((k % n) + n) % n) as usize
}

#[inline]
fn neighbor(field: &Field2D, i: isize, j: isize) -> f64 {
    let n = field.n();
    match field.boundary {
        BoundaryCondition::Periodic => field.values[(wrap(i, n), wrap(j, n))],
        BoundaryCondition::ZeroGradient => {
            let ci = i.clamp(0, n as isize - 1) as usize;
            let cj = j.clamp(0, n as isize - 1) as usize;
            field.values[(ci, cj)]
        }
    }
}

/// Extracts the 5-point stencil at cell (i, j) honoring the field's
/// boundary condition.
pub fn stencil_extract(field: &Field2D, i: usize, j: usize) -> Stencil {
    let n = field.n();
    assert!(i < n && j < n, "stencil index ({i}, {j}) outside {n}x{n} grid");
    let (i, j) = (i as isize, j as isize);
    Stencil([
        neighbor(field, i, j),
        neighbor(field, i - 1, j),
        neighbor(field, i + 1, j),
        neighbor(field, i, j - 1),
        neighbor(field, i, j + 1),
    ])
}

#[inline]
fn laplacian5(s: &Stencil, dx: f64) -> f64 {
    (s.west() + s.east() + s.south() + s.north() - 4.0 * s.center()) / (dx * dx)
}

/// One-sided or central difference along one axis. `lo` is the neighbor at
/// index-1, `hi` at index+1.
#[inline]
fn gradient1(scheme: AdvectionScheme, velocity: f64, lo: f64, c: f64, hi: f64, dx: f64) -> f64 {
    match scheme {
        AdvectionScheme::Upwind => {
            if velocity >= 0.0 {
                (c - lo) / dx
            } else {
                (hi - c) / dx
            }
        }
        AdvectionScheme::Central => (hi - lo) / (2.0 * dx),
    }
}

#[inline]
fn rhs_raw(system: &PdeSystem, s: &Stencil, dx: f64) -> f64 {
    let diff = system.diffusion * laplacian5(s, dx);
    match system.kind {
        PdeKind::AllenCahn => {
            let c = s.center();
            diff + 5.0 * (c - c * c * c)
        }
        PdeKind::AdvectionDiffusion | PdeKind::BurgersLinear => {
            let [vx, vy] = system.advection_velocity;
            let gx = gradient1(system.scheme, vx, s.west(), s.center(), s.east(), dx);
            let gy = gradient1(system.scheme, vy, s.south(), s.center(), s.north(), dx);
            diff - vx * gx - vy * gy
        }
        PdeKind::Burgers => {
            let c = s.center();
            let gx = gradient1(system.scheme, c, s.west(), s.center(), s.east(), dx);
            let gy = gradient1(system.scheme, c, s.south(), s.center(), s.north(), dx);
            diff - c * (gx + gy)
        }
    }
}

/// Discrete time derivative F(S) at one stencil.
pub fn rhs_stencil(system: &PdeSystem, s: &Stencil, cell_spacing: f64) -> Result<f64> {
    let value = rhs_raw(system, s, cell_spacing);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            i: 0,
            j: 0,
        });
    }
    Ok(value)
}

/// One explicit Euler step from the pre-step snapshot. The updated field
/// must stay finite; the first offending cell is reported otherwise.
pub fn euler_step(field: &Field2D, system: &PdeSystem, dt: f64) -> Result<Field2D> {
    let n = field.n();
    let dx = field.grid.cell_spacing();
    let mut next = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let s = stencil_extract(field, i, j);
            next[(i, j)] = field.values[(i, j)] + dt * rhs_raw(system, &s, dx);
        }
    }
    let out = Field2D {
        grid: field.grid,
        boundary: field.boundary,
        values: next,
        time: field.time + dt,
    };
    if let Some((i, j)) = out.first_non_finite() {
        return Err(Error::NonFinite { step: 0, i, j });
    }
    Ok(out)
}

/// A simulated state sequence: `n_steps + 1` snapshots including the
/// initial field.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Field2D>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Number of state transitions (one fewer than snapshots).
    pub fn n_transitions(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }
}

/// Integrates `initial` for `time.n_steps` Euler steps. Fails with the step
/// index of the first non-finite state.
pub fn simulate(initial: &Field2D, system: &PdeSystem, time: &TimeSpec) -> Result<Trajectory> {
    if let Some((i, j)) = initial.first_non_finite() {
        return Err(Error::NonFinite { step: 0, i, j });
    }
    let mut snapshots = Vec::with_capacity(time.n_steps + 1);
    let mut current = initial.clone();
    current.time = time.t0;
    snapshots.push(current.clone());
    for step in 1..=time.n_steps {
        current = euler_step(&current, system, time.dt).map_err(|e| match e {
            Error::NonFinite { i, j, .. } => Error::NonFinite { step, i, j },
            other => other,
        })?;
        // t0 + k*dt, not accumulated addition, so serialized trajectories
        // reload with identical timestamps.
        current.time = time.t0 + step as f64 * time.dt;
        snapshots.push(current.clone());
    }
    Ok(Trajectory { snapshots })
}
