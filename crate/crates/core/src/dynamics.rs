//! Rigid-body quadrotor model and its RK4 discretization.
//!
//! State layout is `[p (3), v (3), att (3), w (3)]` with `att` the ZYX Euler
//! angles `(roll, pitch, yaw)` and `w` the body angular rate. Input layout is
//! `[thrust, tau_x, tau_y, tau_z]`. Inputs are held constant over a step.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use libm::{cos, sin, tan};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 4;

pub type StateVec = [f64; STATE_DIM];
pub type InputVec = [f64; INPUT_DIM];

/// Largest admissible `|pitch|`.
pub const PITCH_LIMIT: f64 = FRAC_PI_2 - 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DroneState {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub att: [f64; 3],
    pub w: [f64; 3],
}

impl DroneState {
    /// At rest at `p` with level attitude.
    pub fn at_rest(p: [f64; 3]) -> Self {
        DroneState {
            p,
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> StateVec {
        let mut x = [0.0; STATE_DIM];
        x[0..3].copy_from_slice(&self.p);
        x[3..6].copy_from_slice(&self.v);
        x[6..9].copy_from_slice(&self.att);
        x[9..12].copy_from_slice(&self.w);
        x
    }

    pub fn from_array(x: &StateVec) -> Self {
        DroneState {
            p: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
            att: [x[6], x[7], x[8]],
            w: [x[9], x[10], x[11]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlInput {
    pub thrust: f64,
    pub torque: [f64; 3],
}

impl ControlInput {
    pub fn hover(params: &DroneParams) -> Self {
        ControlInput {
            thrust: params.mass * params.gravity,
            torque: [0.0; 3],
        }
    }

    pub fn to_array(&self) -> InputVec {
        [self.thrust, self.torque[0], self.torque[1], self.torque[2]]
    }

    pub fn from_array(u: &InputVec) -> Self {
        ControlInput {
            thrust: u[0],
            torque: [u[1], u[2], u[3]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DroneParams {
    pub mass: f64,
    pub inertia_diag: [f64; 3],
    #[cfg_attr(feature = "serde", serde(default = "default_gravity"))]
    pub gravity: f64,
}

#[cfg(feature = "serde")]
fn default_gravity() -> f64 {
    9.81
}

impl Default for DroneParams {
    fn default() -> Self {
        DroneParams {
            mass: 1.0,
            inertia_diag: [0.01, 0.01, 0.02],
            gravity: 9.81,
        }
    }
}

impl DroneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig { field: "mass" });
        }
        if !self.inertia_diag.iter().all(|j| *j > 0.0 && j.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "inertia_diag",
            });
        }
        if !self.gravity.is_finite() {
            return Err(Error::InvalidConfig { field: "gravity" });
        }
        Ok(())
    }

    /// Thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Partial derivatives of a continuous-time model at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    /// `d f / d x`, row-major.
    pub dx: [[f64; STATE_DIM]; STATE_DIM],
    /// `d f / d u`, row-major.
    pub du: [[f64; INPUT_DIM]; STATE_DIM],
}

impl Jacobian {
    pub const ZERO: Jacobian = Jacobian {
        dx: [[0.0; STATE_DIM]; STATE_DIM],
        du: [[0.0; INPUT_DIM]; STATE_DIM],
    };

    /// Vector-Jacobian product `(cot^T dx, cot^T du)`.
    pub fn pullback(&self, cot: &StateVec) -> (StateVec, InputVec) {
        let mut gx = [0.0; STATE_DIM];
        let mut gu = [0.0; INPUT_DIM];
        for (row, &c) in cot.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (g, d) in gx.iter_mut().zip(&self.dx[row]) {
                *g += c * d;
            }
            for (g, d) in gu.iter_mut().zip(&self.du[row]) {
                *g += c * d;
            }
        }
        (gx, gu)
    }
}

/// A continuous-time model `x' = f(x, u)` with 12 states and 4 inputs.
pub trait Dynamics {
    fn deriv(&self, x: &StateVec, u: &InputVec) -> Result<StateVec>;

    fn jacobian(&self, x: &StateVec, u: &InputVec) -> Result<Jacobian>;
}

impl Dynamics for DroneParams {
    fn deriv(&self, x: &StateVec, u: &InputVec) -> Result<StateVec> {
        let (roll, pitch, yaw) = (x[6], x[7], x[8]);
        check_pitch(pitch)?;
        let (sr, cr) = (sin(roll), cos(roll));
        let (sp, cp) = (sin(pitch), cos(pitch));
        let (sy, cy) = (sin(yaw), cos(yaw));
        let tp = tan(pitch);
        let [wx, wy, wz] = [x[9], x[10], x[11]];
        let [jx, jy, jz] = self.inertia_diag;
        let a = u[0] / self.mass;

        let mut dx = [0.0; STATE_DIM];
        dx[0] = x[3];
        dx[1] = x[4];
        dx[2] = x[5];
        // thrust along body z, rotated into the world frame
        dx[3] = a * (cy * sp * cr + sy * sr);
        dx[4] = a * (sy * sp * cr - cy * sr);
        dx[5] = a * (cp * cr) - self.gravity;
        dx[6] = wx + sr * tp * wy + cr * tp * wz;
        dx[7] = cr * wy - sr * wz;
        dx[8] = (sr * wy + cr * wz) / cp;
        dx[9] = (u[1] + (jy - jz) * wy * wz) / jx;
        dx[10] = (u[2] + (jz - jx) * wz * wx) / jy;
        dx[11] = (u[3] + (jx - jy) * wx * wy) / jz;
        Ok(dx)
    }

    fn jacobian(&self, x: &StateVec, u: &InputVec) -> Result<Jacobian> {
        let (roll, pitch, yaw) = (x[6], x[7], x[8]);
        check_pitch(pitch)?;
        let (sr, cr) = (sin(roll), cos(roll));
        let (sp, cp) = (sin(pitch), cos(pitch));
        let (sy, cy) = (sin(yaw), cos(yaw));
        let tp = tan(pitch);
        let [wx, wy, wz] = [x[9], x[10], x[11]];
        let [jx, jy, jz] = self.inertia_diag;
        let m = self.mass;
        let a = u[0] / m;

        let mut j = Jacobian::ZERO;
        for i in 0..3 {
            j.dx[i][3 + i] = 1.0;
        }

        let r3 = [cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr];
        let r3_roll = [-cy * sp * sr + sy * cr, -sy * sp * sr - cy * cr, -cp * sr];
        let r3_pitch = [cy * cp * cr, sy * cp * cr, -sp * cr];
        let r3_yaw = [-sy * sp * cr + cy * sr, cy * sp * cr + sy * sr, 0.0];
        for i in 0..3 {
            j.dx[3 + i][6] = a * r3_roll[i];
            j.dx[3 + i][7] = a * r3_pitch[i];
            j.dx[3 + i][8] = a * r3_yaw[i];
            j.du[3 + i][0] = r3[i] / m;
        }

        let sec2 = 1.0 / (cp * cp);
        let s = sr * wy + cr * wz;
        j.dx[6][6] = cr * tp * wy - sr * tp * wz;
        j.dx[6][7] = s * sec2;
        j.dx[6][9] = 1.0;
        j.dx[6][10] = sr * tp;
        j.dx[6][11] = cr * tp;

        j.dx[7][6] = -sr * wy - cr * wz;
        j.dx[7][10] = cr;
        j.dx[7][11] = -sr;

        j.dx[8][6] = (cr * wy - sr * wz) / cp;
        j.dx[8][7] = s * sp * sec2;
        j.dx[8][10] = sr / cp;
        j.dx[8][11] = cr / cp;

        j.dx[9][10] = (jy - jz) * wz / jx;
        j.dx[9][11] = (jy - jz) * wy / jx;
        j.dx[10][9] = (jz - jx) * wz / jy;
        j.dx[10][11] = (jz - jx) * wx / jy;
        j.dx[11][9] = (jx - jy) * wy / jz;
        j.dx[11][10] = (jx - jy) * wx / jz;
        j.du[9][1] = 1.0 / jx;
        j.du[10][2] = 1.0 / jy;
        j.du[11][3] = 1.0 / jz;
        Ok(j)
    }
}

fn check_pitch(pitch: f64) -> Result<()> {
    if pitch.is_nan() {
        return Err(Error::NonFinite { step: None });
    }
    if pitch.abs() >= PITCH_LIMIT {
        return Err(Error::AttitudeSingularity { pitch, step: None });
    }
    Ok(())
}

/// Linear time-invariant model `x' = A x + B u`, used to check the
/// integrator and solver against closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: [[f64; STATE_DIM]; STATE_DIM],
    pub b: [[f64; INPUT_DIM]; STATE_DIM],
}

impl LinearModel {
    /// `x' = -rate * x`, inputs ignored.
    pub fn decay(rate: f64) -> Self {
        let mut a = [[0.0; STATE_DIM]; STATE_DIM];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = -rate;
        }
        LinearModel {
            a,
            b: [[0.0; INPUT_DIM]; STATE_DIM],
        }
    }
}

impl Dynamics for LinearModel {
    fn deriv(&self, x: &StateVec, u: &InputVec) -> Result<StateVec> {
        let mut dx = [0.0; STATE_DIM];
        for i in 0..STATE_DIM {
            let ax: f64 = self.a[i].iter().zip(x).map(|(a, x)| a * x).sum();
            let bu: f64 = self.b[i].iter().zip(u).map(|(b, u)| b * u).sum();
            dx[i] = ax + bu;
        }
        Ok(dx)
    }

    fn jacobian(&self, _x: &StateVec, _u: &InputVec) -> Result<Jacobian> {
        Ok(Jacobian {
            dx: self.a,
            du: self.b,
        })
    }
}

#[inline]
fn axpy(x: &StateVec, alpha: f64, k: &StateVec) -> StateVec {
    let mut out = *x;
    for (o, k) in out.iter_mut().zip(k) {
        *o += alpha * k;
    }
    out
}

fn check_finite(x: &StateVec) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step: None })
    }
}

/// Stage evaluation points of one RK4 step, kept for the adjoint pass.
#[derive(Debug, Clone, Copy)]
pub struct StepTape {
    stages: [StateVec; 4],
    u: InputVec,
    h: f64,
}

/// One classical RK4 step with zero-order hold on `u`. Returns the next state
/// and the tape needed by [`StepTape::pullback`].
pub fn rk4_taped<D: Dynamics + ?Sized>(
    model: &D,
    x: &StateVec,
    u: &InputVec,
    h: f64,
) -> Result<(StateVec, StepTape)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig { field: "h" });
    }
    check_finite(x)?;
    let k1 = model.deriv(x, u)?;
    check_finite(&k1)?;
    let x2 = axpy(x, 0.5 * h, &k1);
    let k2 = model.deriv(&x2, u)?;
    check_finite(&k2)?;
    let x3 = axpy(x, 0.5 * h, &k2);
    let k3 = model.deriv(&x3, u)?;
    check_finite(&k3)?;
    let x4 = axpy(x, h, &k3);
    let k4 = model.deriv(&x4, u)?;
    check_finite(&k4)?;
    let mut next = *x;
    for i in 0..STATE_DIM {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_finite(&next)?;
    Ok((
        next,
        StepTape {
            stages: [*x, x2, x3, x4],
            u: *u,
            h,
        },
    ))
}

pub fn rk4<D: Dynamics + ?Sized>(
    model: &D,
    x: &StateVec,
    u: &InputVec,
    h: f64,
) -> Result<StateVec> {
    rk4_taped(model, x, u, h).map(|(next, _)| next)
}

impl StepTape {
    /// Given `dL/dx_next`, returns `(dL/dx, dL/du)` for the recorded step.
    pub fn pullback<D: Dynamics + ?Sized>(
        &self,
        model: &D,
        grad_next: &StateVec,
    ) -> Result<(StateVec, InputVec)> {
        let h = self.h;
        let mut gx = *grad_next;
        let mut gu = [0.0; INPUT_DIM];
        // cotangents of k1..k4 from the final combination
        let mut gk = [
            grad_next.map(|g| g * h / 6.0),
            grad_next.map(|g| g * h / 3.0),
            grad_next.map(|g| g * h / 3.0),
            grad_next.map(|g| g * h / 6.0),
        ];
        // stage s evaluates f at x + c_s * h * k_{s-1}
        let coupling = [0.0, 0.5 * h, 0.5 * h, h];
        for s in (0..4).rev() {
            let jac = model.jacobian(&self.stages[s], &self.u)?;
            let (gxs, gus) = jac.pullback(&gk[s]);
            for i in 0..STATE_DIM {
                gx[i] += gxs[i];
            }
            for i in 0..INPUT_DIM {
                gu[i] += gus[i];
            }
            if s > 0 {
                for i in 0..STATE_DIM {
                    gk[s - 1][i] += coupling[s] * gxs[i];
                }
            }
        }
        Ok((gx, gu))
    }
}

/// Integrates `inputs.len()` steps from `x0`; element 0 is `x0`.
pub fn rollout_states<D: Dynamics + ?Sized>(
    model: &D,
    x0: &StateVec,
    inputs: &[InputVec],
    h: f64,
) -> Result<Vec<StateVec>> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(*x0);
    let mut x = *x0;
    for (k, u) in inputs.iter().enumerate() {
        x = rk4(model, &x, u, h).map_err(|e| e.at_step(k))?;
        out.push(x);
    }
    Ok(out)
}

/// Continuous-time quadrotor derivative `[p', v', att', w']`.
pub fn deriv(x: &DroneState, u: &ControlInput, params: &DroneParams) -> Result<StateVec> {
    params.deriv(&x.to_array(), &u.to_array())
}

pub fn rk4_step(
    x: &DroneState,
    u: &ControlInput,
    h: f64,
    params: &DroneParams,
) -> Result<DroneState> {
    rk4(params, &x.to_array(), &u.to_array(), h).map(|next| DroneState::from_array(&next))
}

/// States `x0, x1, .., xH` for `H = inputs.len() >= 1`.
pub fn rollout(
    x0: &DroneState,
    inputs: &[ControlInput],
    h: f64,
    params: &DroneParams,
) -> Result<Vec<DroneState>> {
    if inputs.is_empty() {
        return Err(Error::InvalidConfig { field: "horizon" });
    }
    let raw: Vec<InputVec> = inputs.iter().map(ControlInput::to_array).collect();
    let states = rollout_states(params, &x0.to_array(), &raw, h)?;
    Ok(states.iter().map(DroneState::from_array).collect())
}
