//! Compressible Euler equations with an ideal-gas closure.
//!
//! These are the user functions the microkernels wrap: the directional flux
//! `F_n(Q)` and the maximum directional wave speed `λ_max,n(Q)`. The slice
//! based variants (`*_unchecked`, [`flux_into`]) are the hot-path entry points
//! and never branch on admissibility; the checked variants reject unphysical
//! states.

use crate::error::{Error, Result};

/// Largest number of unknowns per volume (`d = 3`).
pub const MAX_UNKNOWNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParameters {
    /// Adiabatic exponent.
    pub gamma: f64,
}

impl EulerParameters {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "adiabatic exponent must be finite and > 1, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }
}

impl Default for EulerParameters {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

/// Conserved unknowns of one volume: density, `d` momenta, total energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedState {
    len: usize,
    values: [f64; MAX_UNKNOWNS],
}

impl ConservedState {
    pub fn new(values: &[f64]) -> Result<Self> {
        if !(4..=MAX_UNKNOWNS).contains(&values.len()) {
            return Err(Error::InvalidArgument(format!(
                "a conserved state has 4 (d=2) or 5 (d=3) entries, got {}",
                values.len()
            )));
        }
        let mut state = Self {
            len: values.len(),
            values: [0.0; MAX_UNKNOWNS],
        };
        state.values[..values.len()].copy_from_slice(values);
        Ok(state)
    }

    /// Builds the conserved state from density, velocity and pressure.
    pub fn from_primitive(
        density: f64,
        velocity: &[f64],
        pressure: f64,
        params: EulerParameters,
    ) -> Result<Self> {
        let dim = velocity.len();
        let mut values = [0.0; MAX_UNKNOWNS];
        values[0] = density;
        let mut kinetic = 0.0;
        for (i, &u) in velocity.iter().enumerate() {
            values[1 + i] = density * u;
            kinetic += u * u;
        }
        values[dim + 1] = pressure / (params.gamma - 1.0) + 0.5 * density * kinetic;
        Self::new(&values[..dim + 2])
    }

    pub fn dim(&self) -> usize {
        self.len - 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn density(&self) -> f64 {
        self.values[0]
    }

    pub fn momentum(&self, axis: usize) -> f64 {
        self.values[1 + axis]
    }

    pub fn energy(&self) -> f64 {
        self.values[self.len - 1]
    }

    pub fn is_admissible(&self, params: EulerParameters) -> bool {
        check_admissible(self.as_slice(), params).is_ok()
    }
}

/// `p = (γ-1)(E - |ρu|²/(2ρ))` without any admissibility check.
#[inline]
pub fn pressure_unchecked(q: &[f64], params: EulerParameters) -> f64 {
    let dim = q.len() - 2;
    let mut momentum_sq = 0.0;
    for m in &q[1..=dim] {
        momentum_sq += m * m;
    }
    (params.gamma - 1.0) * (q[dim + 1] - momentum_sq / (2.0 * q[0]))
}

/// Returns the pressure of an admissible state.
#[inline]
pub fn check_admissible(q: &[f64], params: EulerParameters) -> Result<f64> {
    let density = q[0];
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidState {
            density,
            pressure: f64::NAN,
        });
    }
    let pressure = pressure_unchecked(q, params);
    if !(pressure > 0.0 && pressure.is_finite()) {
        return Err(Error::InvalidState { density, pressure });
    }
    Ok(pressure)
}

pub fn pressure(q: &ConservedState, params: EulerParameters) -> Result<f64> {
    check_admissible(q.as_slice(), params)
}

/// Writes `F_axis(q)` into `out[..q.len()]`.
#[inline]
pub fn flux_into(q: &[f64], axis: usize, params: EulerParameters, out: &mut [f64]) {
    let dim = q.len() - 2;
    let p = pressure_unchecked(q, params);
    let normal_velocity = q[1 + axis] / q[0];
    out[0] = q[1 + axis];
    for i in 0..dim {
        out[1 + i] = q[1 + i] * normal_velocity;
    }
    out[1 + axis] += p;
    out[dim + 1] = normal_velocity * (q[dim + 1] + p);
}

pub fn flux(q: &ConservedState, axis: usize, params: EulerParameters) -> Result<ConservedState> {
    check_axis(axis, q.dim())?;
    check_admissible(q.as_slice(), params)?;
    let mut out = [0.0; MAX_UNKNOWNS];
    flux_into(q.as_slice(), axis, params, &mut out);
    ConservedState::new(&out[..q.len])
}

/// `|u_axis| + c` with the speed of sound `c = sqrt(γp/ρ)`.
#[inline]
pub fn max_eigenvalue_unchecked(q: &[f64], axis: usize, params: EulerParameters) -> f64 {
    let p = pressure_unchecked(q, params);
    let sound_speed = (params.gamma * p / q[0]).sqrt();
    (q[1 + axis] / q[0]).abs() + sound_speed
}

pub fn max_eigenvalue(q: &ConservedState, axis: usize, params: EulerParameters) -> Result<f64> {
    check_axis(axis, q.dim())?;
    check_admissible(q.as_slice(), params)?;
    Ok(max_eigenvalue_unchecked(q.as_slice(), axis, params))
}

fn check_axis(axis: usize, dim: usize) -> Result<()> {
    if axis >= dim {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for d={dim}"
        )));
    }
    Ok(())
}
