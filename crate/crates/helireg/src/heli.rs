//! Rigid-body helicopter model: rotation and Euler-rate kinematics, rotor
//! force/torque maps, Newton-Euler dynamics and a classical RK4 step.
//!
//! Conventions. The inertial frame has z pointing down, so gravity enters
//! the body-frame force as `R(q)ᵀ (0, 0, M g)`. The attitude state is
//! `q = (psi, theta, phi)` = (yaw, pitch, roll) and the rotation matrix is
//! the yaw-pitch-roll composition `R = Rz(psi) Ry(theta) Rx(phi)` mapping
//! body to inertial coordinates. The Euler-rate matrix is stated for the
//! rate triple `(phi_dot, theta_dot, psi_dot)`; see [`euler_rate_matrix`].

use crate::autodiff::Real;

/// Gimbal-lock guard margin on |theta| (rad).
pub const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeliError {
    #[error("negative {rotor} rotor thrust {value}")]
    NegativeThrust { rotor: &'static str, value: f64 },
    #[error("pitch {theta} within {GIMBAL_EPS} of gimbal lock")]
    GimbalLock { theta: f64 },
    #[error("non-finite state after integration step")]
    NonFiniteState,
}

/// Physical constants of the benchmark helicopter.
///
/// Defaults are the published values for this model; gravity is
/// configurable and defaults to 9.8 m/s^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeliParams {
    pub m: f64,
    pub g: f64,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub l_m: f64,
    pub y_m: f64,
    pub h_m: f64,
    pub h_t: f64,
    pub l_t: f64,
    pub c_m_q: f64,
    pub d_m_q: f64,
    pub c_t_q: f64,
    pub d_t_q: f64,
    pub c_b_m: f64,
    pub c_a_m: f64,
}

impl Default for HeliParams {
    fn default() -> Self {
        Self {
            m: 4.9,
            g: 9.8,
            jx: 0.14241,
            jy: 0.27121,
            jz: 0.2714,
            l_m: -0.015,
            y_m: 0.0,
            h_m: 0.2943,
            h_t: 0.1154,
            l_t: 0.8715,
            c_m_q: 0.00445,
            d_m_q: 0.6304,
            c_t_q: 0.00506,
            d_t_q: 0.00848,
            c_b_m: 25.23,
            c_a_m: 25.23,
        }
    }
}

impl HeliParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.m <= 0.0 {
            return Err(format!("mass must be positive, got {}", self.m));
        }
        if self.jx <= 0.0 || self.jy <= 0.0 || self.jz <= 0.0 {
            return Err(format!(
                "inertias must be positive, got ({}, {}, {})",
                self.jx, self.jy, self.jz
            ));
        }
        Ok(())
    }
}

/// Rigid-body state: inertial position and velocity, attitude
/// `(psi, theta, phi)`, body angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidState {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub q: [f64; 3],
    pub omega_b: [f64; 3],
}

impl RigidState {
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..3].copy_from_slice(&self.p);
        out[3..6].copy_from_slice(&self.v);
        out[6..9].copy_from_slice(&self.q);
        out[9..].copy_from_slice(&self.omega_b);
        out
    }

    pub fn from_array(x: &[f64; 12]) -> Self {
        Self {
            p: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
            q: [x[6], x[7], x[8]],
            omega_b: [x[9], x[10], x[11]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Largest state magnitude, used by the divergence check.
    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Rotor commands: main/tail thrusts and tip-path-plane tilts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInputs {
    pub t_m: f64,
    pub t_t: f64,
    pub a: f64,
    pub b: f64,
}

/// Body-to-inertial rotation `Rz(psi) Ry(theta) Rx(phi)`.
pub fn rotation_matrix(q: &[f64; 3]) -> [[f64; 3]; 3] {
    let (spsi, cpsi) = q[0].sin_cos();
    let (sth, cth) = q[1].sin_cos();
    let (sphi, cphi) = q[2].sin_cos();
    [
        [
            cpsi * cth,
            cpsi * sth * sphi - spsi * cphi,
            cpsi * sth * cphi + spsi * sphi,
        ],
        [
            spsi * cth,
            spsi * sth * sphi + cpsi * cphi,
            spsi * sth * cphi - cpsi * sphi,
        ],
        [-sth, cth * sphi, cth * cphi],
    ]
}

pub fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_t_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Euler-rate matrix `D(q)` with rows ordered `(phi_dot, theta_dot,
/// psi_dot)`, i.e. `D(q) · omega_b = (phi_dot, theta_dot, psi_dot)`.
///
/// `D(0)` is the identity. The state stores attitude as `(psi, theta, phi)`,
/// so [`dynamics`] reverses the product into state order; the row ordering
/// here is the one for which the matrix entries are standard and the
/// kinematic consistency invariant `(d/dt) R = R·skew(omega)` holds.
pub fn euler_rate_matrix(q: &[f64; 3]) -> Result<[[f64; 3]; 3], HeliError> {
    let theta = q[1];
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_EPS {
        return Err(HeliError::GimbalLock { theta });
    }
    let (sphi, cphi) = q[2].sin_cos();
    let (sth, cth) = theta.sin_cos();
    let tth = sth / cth;
    Ok([
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth],
    ])
}

/// Rotor force/torque maps, generic over the autodiff scalar.
///
/// The torque power law is evaluated on `max(T, 0)` so the residual
/// pipeline stays finite and differentiable almost everywhere while the
/// learned thrust maps wander near zero early in training; for admissible
/// inputs (T >= 0) this is exact.
pub(crate) fn rotor_wrench_terms<T: Real>(
    t_m: T,
    t_t: T,
    a: T,
    b: T,
    hp: &HeliParams,
) -> ([T; 3], [T; 3]) {
    let sin_a = a.sin();
    let cos_a = a.cos();
    let sin_b = b.sin();
    let cos_b = b.cos();

    let x_m = -(t_m * sin_a);
    let y_m = t_m * sin_b;
    let z_m = -(t_m * cos_a * cos_b);
    let y_t = -t_t;

    let q_m = t_m.clamp_min(0.0).powf(1.5).mul_const(hp.c_m_q).add_const(hp.d_m_q);
    let q_t = t_t.clamp_min(0.0).powf(1.5).mul_const(hp.c_t_q).add_const(hp.d_t_q);

    let r_m = b.mul_const(hp.c_b_m) - q_m * sin_a;
    let m_m = a.mul_const(hp.c_a_m) + q_m * sin_b;
    let n_m = -(q_m * cos_a * cos_b);
    let m_t = -q_t;

    let tau_f1 = y_m.mul_const(hp.h_m) + z_m.mul_const(hp.y_m) + y_t.mul_const(hp.h_t);
    let tau_f2 = x_m.mul_const(-hp.h_m) + z_m.mul_const(hp.l_m);
    let tau_f3 = y_m.mul_const(-hp.l_m) + y_t.mul_const(-hp.l_t);

    let f = [x_m, y_m + y_t, z_m];
    let tau = [r_m + tau_f1, m_m + m_t + tau_f2, n_m + tau_f3];
    (f, tau)
}

/// Body-frame rotor force and torque for admissible inputs.
pub fn rotor_wrench(u: &ControlInputs, hp: &HeliParams) -> Result<([f64; 3], [f64; 3]), HeliError> {
    if u.t_m < 0.0 {
        return Err(HeliError::NegativeThrust {
            rotor: "main",
            value: u.t_m,
        });
    }
    if u.t_t < 0.0 {
        return Err(HeliError::NegativeThrust {
            rotor: "tail",
            value: u.t_t,
        });
    }
    Ok(rotor_wrench_terms(u.t_m, u.t_t, u.a, u.b, hp))
}

/// Time derivative of the rigid-body state under a body-frame rotor wrench.
///
/// Gravity is added internally: the body force is
/// `f_rotor_b + R(q)ᵀ (0, 0, M g)`.
pub fn dynamics_wrench(
    x: &RigidState,
    f_rotor_b: &[f64; 3],
    tau_b: &[f64; 3],
    hp: &HeliParams,
) -> Result<RigidState, HeliError> {
    let r = rotation_matrix(&x.q);
    let grav_b = mat_t_vec(&r, &[0.0, 0.0, hp.m * hp.g]);
    let f_b = [
        f_rotor_b[0] + grav_b[0],
        f_rotor_b[1] + grav_b[1],
        f_rotor_b[2] + grav_b[2],
    ];
    let f_p = mat_vec(&r, &f_b);

    let d = euler_rate_matrix(&x.q)?;
    // D rows are (phi_dot, theta_dot, psi_dot); state order is (psi, theta, phi).
    let rates = mat_vec(&d, &x.omega_b);
    let q_dot = [rates[2], rates[1], rates[0]];

    let w = &x.omega_b;
    let jw = [hp.jx * w[0], hp.jy * w[1], hp.jz * w[2]];
    let gyro = cross(w, &jw);
    let omega_dot = [
        (tau_b[0] - gyro[0]) / hp.jx,
        (tau_b[1] - gyro[1]) / hp.jy,
        (tau_b[2] - gyro[2]) / hp.jz,
    ];

    Ok(RigidState {
        p: x.v,
        v: [f_p[0] / hp.m, f_p[1] / hp.m, f_p[2] / hp.m],
        q: q_dot,
        omega_b: omega_dot,
    })
}

/// Newton-Euler dynamics under actuator inputs.
pub fn dynamics(x: &RigidState, u: &ControlInputs, hp: &HeliParams) -> Result<RigidState, HeliError> {
    let (f, tau) = rotor_wrench(u, hp)?;
    dynamics_wrench(x, &f, &tau, hp)
}

/// Classical fourth-order Runge-Kutta step on a flat state array.
pub fn rk4_step_array<const N: usize, F>(x: &[f64; N], t: f64, dt: f64, f: &F) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let half = 0.5 * dt;
    let k1 = f(t, x);
    let mut x2 = *x;
    for i in 0..N {
        x2[i] += half * k1[i];
    }
    let k2 = f(t + half, &x2);
    let mut x3 = *x;
    for i in 0..N {
        x3[i] += half * k2[i];
    }
    let k3 = f(t + half, &x3);
    let mut x4 = *x;
    for i in 0..N {
        x4[i] += dt * k3[i];
    }
    let k4 = f(t + dt, &x4);
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// RK4 step of the rigid body with the control law evaluated at stage times.
///
/// `u_provider(t, x)` returns the applied rotor-equivalent body wrench.
pub fn rk4_step<F>(x: &RigidState, u_provider: &F, t: f64, dt: f64, hp: &HeliParams) -> Result<RigidState, HeliError>
where
    F: Fn(f64, &RigidState) -> ([f64; 3], [f64; 3]),
{
    assert!(dt > 0.0, "dt must be positive");
    let deriv = |tt: f64, arr: &[f64; 12]| -> Result<[f64; 12], HeliError> {
        let state = RigidState::from_array(arr);
        let (f, tau) = u_provider(tt, &state);
        Ok(dynamics_wrench(&state, &f, &tau, hp)?.to_array())
    };
    let x0 = x.to_array();
    let half = 0.5 * dt;
    let k1 = deriv(t, &x0)?;
    let mut xs = x0;
    for i in 0..12 {
        xs[i] = x0[i] + half * k1[i];
    }
    let k2 = deriv(t + half, &xs)?;
    for i in 0..12 {
        xs[i] = x0[i] + half * k2[i];
    }
    let k3 = deriv(t + half, &xs)?;
    for i in 0..12 {
        xs[i] = x0[i] + dt * k3[i];
    }
    let k4 = deriv(t + dt, &xs)?;
    let mut out = x0;
    for i in 0..12 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = RigidState::from_array(&out);
    if !next.is_finite() {
        return Err(HeliError::NonFiniteState);
    }
    Ok(next)
}

/// Skew-symmetric matrix of a 3-vector.
pub fn skew(v: &[f64; 3]) -> [[f64; 3]; 3] {
    [
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    #[test]
    fn rotation_at_zero_is_identity() {
        let r = rotation_matrix(&[0.0, 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let qs = [
            [0.3, -0.7, 1.1],
            [-1.2, 0.4, 0.05],
            [2.9, 1.2, -2.1],
        ];
        for q in &qs {
            let r = rotation_matrix(q);
            let rt = [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ];
            let i3 = mat_mul(&rt, &r);
            for a in 0..3 {
                for b in 0..3 {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((i3[a][b] - expect).abs() < 1e-12, "RtR[{a}][{b}]={}", i3[a][b]);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
                - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_rate_matrix_at_zero_is_identity() {
        let d = euler_rate_matrix(&[0.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn euler_rate_matrix_gimbal_guard() {
        let theta = std::f64::consts::FRAC_PI_2 - 1e-7;
        assert!(matches!(
            euler_rate_matrix(&[0.0, theta, 0.0]),
            Err(HeliError::GimbalLock { .. })
        ));
    }

    #[test]
    fn kinematic_consistency_rdot_equals_r_skew() {
        // Integrate q_dot = (reordered) D(q) omega for a fixed omega and
        // compare dR/dt against R skew(omega) by central differences.
        let omega = [0.21, -0.34, 0.4];
        let q0 = [0.2, 0.1, -0.3];
        let h = 1e-6;
        let step = |q: &[f64; 3], dt: f64| -> [f64; 3] {
            let rates = |q: &[f64; 3]| {
                let d = euler_rate_matrix(q).unwrap();
                let r = mat_vec(&d, &omega);
                [r[2], r[1], r[0]]
            };
            let k1 = rates(q);
            let q1 = [q[0] + dt * k1[0], q[1] + dt * k1[1], q[2] + dt * k1[2]];
            let k2 = rates(&q1);
            [
                q[0] + 0.5 * dt * (k1[0] + k2[0]),
                q[1] + 0.5 * dt * (k1[1] + k2[1]),
                q[2] + 0.5 * dt * (k1[2] + k2[2]),
            ]
        };
        let qp = step(&q0, h);
        let qm = step(&q0, -h);
        let rp = rotation_matrix(&qp);
        let rm = rotation_matrix(&qm);
        let r = rotation_matrix(&q0);
        let rs = mat_mul(&r, &skew(&omega));
        for i in 0..3 {
            for j in 0..3 {
                let fd = (rp[i][j] - rm[i][j]) / (2.0 * h);
                assert!(
                    (fd - rs[i][j]).abs() < 1e-6,
                    "dR[{i}][{j}]: fd={fd} analytic={}",
                    rs[i][j]
                );
            }
        }
    }

    #[test]
    fn pure_vertical_thrust() {
        let hp = HeliParams::default();
        for t in [0.0, 12.5, 48.02] {
            let (f, _) = rotor_wrench(
                &ControlInputs {
                    t_m: t,
                    t_t: 0.0,
                    a: 0.0,
                    b: 0.0,
                },
                &hp,
            )
            .unwrap();
            assert_eq!(f[0], 0.0);
            assert_eq!(f[1], 0.0);
            assert!((f[2] + t).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_thrust_is_rejected() {
        let hp = HeliParams::default();
        let err = rotor_wrench(
            &ControlInputs {
                t_m: -1.0,
                t_t: 0.0,
                a: 0.0,
                b: 0.0,
            },
            &hp,
        )
        .unwrap_err();
        assert!(matches!(err, HeliError::NegativeThrust { rotor: "main", .. }));
    }

    #[test]
    fn free_fall_under_zero_input() {
        let hp = HeliParams::default();
        let x = RigidState::default();
        let dx = dynamics(
            &x,
            &ControlInputs {
                t_m: 0.0,
                t_t: 0.0,
                a: 0.0,
                b: 0.0,
            },
            &hp,
        )
        .unwrap();
        assert!(dx.v[0].abs() < 1e-12);
        assert!(dx.v[1].abs() < 1e-12);
        assert!((dx.v[2] - hp.g).abs() < 1e-12);
    }

    #[test]
    fn rk4_zero_dynamics_keeps_state() {
        let x = [1.0, -2.0, 3.0];
        let out = rk4_step_array(&x, 0.0, 0.1, &|_, _| [0.0; 3]);
        assert_eq!(out, x);
    }

    /// Quaternion attitude kinematics as an independent reference for the
    /// Euler-rate integration.
    mod quat {
        pub fn mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
            [
                a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
            ]
        }

        pub fn normalize(q: &mut [f64; 4]) {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            for x in q.iter_mut() {
                *x /= n;
            }
        }

        pub fn to_matrix(q: &[f64; 4]) -> [[f64; 3]; 3] {
            let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
            [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ]
        }

        pub fn from_matrix(r: &[[f64; 3]; 3]) -> [f64; 4] {
            let w = (1.0 + r[0][0] + r[1][1] + r[2][2]).max(0.0).sqrt() / 2.0;
            let mut q = [
                w,
                (r[2][1] - r[1][2]) / (4.0 * w),
                (r[0][2] - r[2][0]) / (4.0 * w),
                (r[1][0] - r[0][1]) / (4.0 * w),
            ];
            normalize(&mut q);
            q
        }
    }

    #[test]
    fn euler_rate_integration_matches_quaternion_reference() {
        // Time-varying body rates; integrate attitude both through the
        // Euler-rate matrix and through quaternion kinematics for 1 s.
        let omega_of = |t: f64| [0.4 * (1.3 * t).sin(), -0.3 * (0.7 * t).cos(), 0.5 * (t).sin()];
        let dt = 1e-4;
        let steps = 10_000;

        let mut q_euler = [0.1, -0.2, 0.3_f64];
        let euler_rhs = |t: f64, q: &[f64; 3]| {
            let d = euler_rate_matrix(q).unwrap();
            let rates = mat_vec(&d, &omega_of(t));
            [rates[2], rates[1], rates[0]]
        };

        let mut q_quat = quat::from_matrix(&rotation_matrix(&q_euler));
        let quat_rhs = |t: f64, q: &[f64; 4]| {
            let w = omega_of(t);
            let wq = [0.0, w[0], w[1], w[2]];
            let dq = quat::mul(q, &wq);
            [0.5 * dq[0], 0.5 * dq[1], 0.5 * dq[2], 0.5 * dq[3]]
        };

        let mut t = 0.0;
        for _ in 0..steps {
            q_euler = rk4_step_array(&q_euler, t, dt, &euler_rhs);
            q_quat = rk4_step_array(&q_quat, t, dt, &quat_rhs);
            quat::normalize(&mut q_quat);
            t += dt;
        }

        let r_euler = rotation_matrix(&q_euler);
        let r_quat = quat::to_matrix(&q_quat);
        // Rotation angle of R_euler^T R_quat.
        let trace: f64 = (0..3)
            .map(|i| (0..3).map(|k| r_euler[k][i] * r_quat[k][i]).sum::<f64>())
            .sum();
        let cos_angle = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
        let angle = cos_angle.acos();
        assert!(angle <= 1e-5, "attitude error {angle} rad");
    }

    /// Straight-line restatement of the printed force/torque maps, kept
    /// deliberately separate from the production routine.
    fn wrench_reference(u: &ControlInputs, hp: &HeliParams) -> ([f64; 3], [f64; 3]) {
        let x_m = -u.t_m * u.a.sin();
        let y_m = u.t_m * u.b.sin();
        let z_m = -u.t_m * u.a.cos() * u.b.cos();
        let y_t = -u.t_t;
        let q_m = hp.c_m_q * u.t_m.powf(1.5) + hp.d_m_q;
        let q_t = hp.c_t_q * u.t_t.powf(1.5) + hp.d_t_q;
        let r_m = hp.c_b_m * u.b - q_m * u.a.sin();
        let m_m = hp.c_a_m * u.a + q_m * u.b.sin();
        let n_m = -q_m * u.a.cos() * u.b.cos();
        let m_t = -q_t;
        let tau_f1 = y_m * hp.h_m + z_m * hp.y_m + y_t * hp.h_t;
        let tau_f2 = -x_m * hp.h_m + z_m * hp.l_m;
        let tau_f3 = -y_m * hp.l_m - y_t * hp.l_t;
        (
            [x_m, y_m + y_t, z_m],
            [r_m + tau_f1, m_m + m_t + tau_f2, n_m + tau_f3],
        )
    }

    #[test]
    fn wrench_matches_independent_evaluation() {
        use rand::Rng;
        use rand::SeedableRng;
        let hp = HeliParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = ControlInputs {
                t_m: rng.gen_range(0.0..120.0),
                t_t: rng.gen_range(0.0..20.0),
                a: rng.gen_range(-0.4..0.4),
                b: rng.gen_range(-0.4..0.4),
            };
            let (f, tau) = rotor_wrench(&u, &hp).unwrap();
            let (fr, taur) = wrench_reference(&u, &hp);
            for i in 0..3 {
                let scale = f[i].abs().max(fr[i].abs()).max(1.0);
                assert!((f[i] - fr[i]).abs() <= 1e-12 * scale, "f[{i}]");
                let scale = tau[i].abs().max(taur[i].abs()).max(1.0);
                assert!((tau[i] - taur[i]).abs() <= 1e-12 * scale, "tau[{i}]");
            }
        }
    }

    #[test]
    fn zero_input_torque_is_pure_drag_offset() {
        let hp = HeliParams::default();
        let (f, tau) = rotor_wrench(&ControlInputs::default(), &hp).unwrap();
        assert_eq!(f, [0.0, 0.0, 0.0]);
        assert!((tau[0]).abs() < 1e-15);
        assert!((tau[1] + hp.d_t_q).abs() < 1e-15, "tau2={}", tau[1]);
        assert!((tau[2] + hp.d_m_q).abs() < 1e-15, "tau3={}", tau[2]);
    }

    #[test]
    fn refined_trim_is_a_dynamics_fixed_point() {
        let hp = HeliParams::default();
        let trim = crate::regeq::solve_trim(&hp).unwrap();
        let x = RigidState {
            p: [0.0; 3],
            v: [0.0; 3],
            q: [0.0, trim.pi_theta, trim.pi_phi],
            omega_b: [0.0; 3],
        };
        let u = ControlInputs {
            t_m: trim.c_tm,
            t_t: trim.c_tt,
            a: trim.c_a,
            b: trim.c_b,
        };
        let dx = dynamics(&x, &u, &hp).unwrap();
        let vdot = (dx.v[0].powi(2) + dx.v[1].powi(2) + dx.v[2].powi(2)).sqrt();
        let wdot = (dx.omega_b[0].powi(2) + dx.omega_b[1].powi(2) + dx.omega_b[2].powi(2)).sqrt();
        let qdot = (dx.q[0].powi(2) + dx.q[1].powi(2) + dx.q[2].powi(2)).sqrt();
        assert!(vdot <= 1e-6, "|v_dot| = {vdot}");
        assert!(wdot <= 1e-6, "|omega_dot| = {wdot}");
        assert!(qdot <= 1e-6, "|q_dot| = {qdot}");
    }

    #[test]
    fn rk4_energy_conservation_torque_free() {
        // Torque-free rigid body: kinetic energy 0.5 w'Jw is conserved.
        let hp = HeliParams::default();
        let j = [hp.jx, hp.jy, hp.jz];
        let energy = |w: &[f64; 3]| 0.5 * (j[0] * w[0] * w[0] + j[1] * w[1] * w[1] + j[2] * w[2] * w[2]);
        let f = |_t: f64, w: &[f64; 3]| {
            let jw = [j[0] * w[0], j[1] * w[1], j[2] * w[2]];
            let g = cross(w, &jw);
            [-g[0] / j[0], -g[1] / j[1], -g[2] / j[2]]
        };
        let mut w = [0.3, -0.2, 0.4];
        let e0 = energy(&w);
        let mut t = 0.0;
        for _ in 0..100 {
            w = rk4_step_array(&w, t, 0.01, &f);
            t += 0.01;
        }
        let drift = ((energy(&w) - e0) / e0).abs();
        assert!(drift <= 1e-8, "energy drift {drift}");
    }
}
