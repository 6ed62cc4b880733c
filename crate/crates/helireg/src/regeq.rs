//! Benchmark-specific regulator-equation machinery: the harmonic exosystem,
//! the steady-state input maps, the residual construction behind the
//! training loss, and the static trim solve.
//!
//! On the zero-error manifold the position is `(0, 0, w1)`, so vertical
//! Newton balance forces the inertial rotor force to `(0, 0, -k(w))` with
//! `k(w) = M (g + Omega^2 w1)`; the steady-state maps below solve the three
//! force equations exactly for any attitude triple, and the residuals
//! measure how far the attitude/tilt triple is from satisfying the torque
//! equations and their Lie-derivative couplings.

use crate::autodiff::{Dual, Real};
use crate::heli::{rotor_wrench_terms, HeliParams};
use crate::net::LieBundle;
use crate::train::SamplePoint;

/// Admissible bound on the lateral tilt |c_b| (rad).
pub const CB_LIMIT: f64 = 0.3491;

/// Clamp floor for cosines in steady-map denominators.
const COS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegeqError {
    #[error("infeasible configuration: |{name}| = {value} out of open range")]
    AngleOutOfRange { name: &'static str, value: f64 },
    #[error("main rotor map requires nonnegative thrust, got {0}")]
    NegativeThrustMap(f64),
    #[error("trim solve did not converge: residual {0}")]
    TrimDiverged(f64),
}

/// Exosystem frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExoConfig {
    pub omega: f64,
}

impl ExoConfig {
    pub fn rhs(&self, w: ExoState) -> [f64; 2] {
        exo_rhs(w, self.omega)
    }

    pub fn solution(&self, w0: ExoState, t: f64) -> ExoState {
        exo_solution(w0, self.omega, t)
    }
}

/// Exosystem state; `w1` is the vertical reference displacement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExoState {
    pub w1: f64,
    pub w2: f64,
}

impl ExoState {
    pub fn norm(&self) -> f64 {
        (self.w1 * self.w1 + self.w2 * self.w2).sqrt()
    }
}

/// Right-hand side of the harmonic exosystem `w_dot = S w`.
pub fn exo_rhs(w: ExoState, omega: f64) -> [f64; 2] {
    [omega * w.w2, -omega * w.w1]
}

/// Closed-form exosystem flow: a planar rotation preserving the norm.
pub fn exo_solution(w0: ExoState, omega: f64, t: f64) -> ExoState {
    let (s, c) = (omega * t).sin_cos();
    ExoState {
        w1: w0.w1 * c + w0.w2 * s,
        w2: -w0.w1 * s + w0.w2 * c,
    }
}

/// Inertial vertical force magnitude required on the zero-error manifold.
pub fn k_of_w(w: ExoState, omega: f64, hp: &HeliParams) -> f64 {
    hp.m * (hp.g + omega * omega * w.w1)
}

/// Steady-state control maps derived from the attitude triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyMaps {
    pub pi_phi: f64,
    pub pi_theta: f64,
    pub c_b: f64,
    pub c_a: f64,
    pub c_tm: f64,
    pub c_tt: f64,
}

/// The three printed steady-state relationships, generic over the scalar.
///
/// Denominator cosines are clamped at `COS_EPS` so the training pipeline
/// stays finite while the network wanders; in the admissible region the
/// clamps are inactive and the maps are exact.
pub(crate) fn steady_maps_terms<T: Real>(pi_phi: T, pi_theta: T, c_b: T, k: f64) -> (T, T, T) {
    let cos_phi = pi_phi.cos();
    let cos_theta = pi_theta.cos();
    let sin_phi = pi_phi.sin();
    let cos_cb = c_b.cos();
    let sin_cb = c_b.sin();
    let c_a = (-(pi_theta.tan() * cos_cb) / cos_phi.clamp_min(COS_EPS)).atan();
    let c_tm = (cos_phi * cos_theta / (c_a.cos() * cos_cb.clamp_min(COS_EPS))).mul_const(k);
    let c_tt = c_tm * sin_cb + (sin_phi * cos_theta).mul_const(k);
    (c_a, c_tm, c_tt)
}

/// Validated steady-state maps at an exosystem state.
pub fn steady_maps(
    pi_phi: f64,
    pi_theta: f64,
    c_b: f64,
    w: ExoState,
    omega: f64,
    hp: &HeliParams,
) -> Result<SteadyMaps, RegeqError> {
    let lim = std::f64::consts::FRAC_PI_2 - COS_EPS;
    for (name, value) in [("pi_phi", pi_phi), ("pi_theta", pi_theta), ("c_b", c_b)] {
        if value.abs() >= lim {
            return Err(RegeqError::AngleOutOfRange { name, value });
        }
    }
    let k = k_of_w(w, omega, hp);
    let (c_a, c_tm, c_tt) = steady_maps_terms(pi_phi, pi_theta, c_b, k);
    if c_tm < 0.0 {
        return Err(RegeqError::NegativeThrustMap(c_tm));
    }
    Ok(SteadyMaps {
        pi_phi,
        pi_theta,
        c_b,
        c_a,
        c_tm,
        c_tt,
    })
}

/// Per-sample residual values of the compact regulator equations plus the
/// boundary hinge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub bc: f64,
    pub total: f64,
}

/// The residual pipeline, generic over the scalar kind.
///
/// Returns `(r1, r2, r3, bc)` where the first three are the residuals of
/// the compact regulator equations and `bc` is the boundary hinge
/// `max(0, |c_b| - CB_LIMIT)`.
///
/// The reduction is the one induced by the rigid-body kinematics with yaw
/// frozen: body rates `(L_S pi_phi, L_S pi_theta cos pi_phi, -L_S pi_theta
/// sin pi_phi)`, Euler's equations, and the chain rule back to attitude
/// accelerations. Zeroing these residuals is exactly invariance of the
/// learned manifold under the simulated dynamics (checked against an
/// independent periodic-orbit solve in the test suite).
pub(crate) fn residual_terms<T: Real>(
    out: [T; 3],
    l1: [T; 3],
    l2: [T; 3],
    k: f64,
    hp: &HeliParams,
) -> ([T; 3], T) {
    let pi_phi = out[0];
    let pi_theta = out[1];
    let c_b = out[2];
    let (c_a, c_tm, c_tt) = steady_maps_terms(pi_phi, pi_theta, c_b, k);
    let (_f, tau) = rotor_wrench_terms(c_tm, c_tt, c_a, c_b, hp);

    let cos_phi = pi_phi.cos();
    let sin_phi = pi_phi.sin();
    let l1_phi = l1[0];
    let l1_theta = l1[1];

    // Gyroscopic terms of Euler's equations at the manifold body rates
    // p = L_S pi_phi, q = L_S pi_theta cos, r = -L_S pi_theta sin.
    let g1 = tau[0] + (cos_phi * sin_phi * l1_theta * l1_theta).mul_const(hp.jz - hp.jy);
    let g2 = tau[1] + (sin_phi * l1_phi * l1_theta).mul_const(hp.jx - hp.jz);
    let g3 = tau[2] - (cos_phi * l1_phi * l1_theta).mul_const(hp.jy - hp.jx);

    let b1 = g1.mul_const(1.0 / hp.jx);
    let b2 = g2.mul_const(1.0 / hp.jy);
    let b3 = g3.mul_const(1.0 / hp.jz);

    // (phi_ddot, theta_ddot, -theta_dot phi_dot) = B(pi_phi) J^-1 (tau - gyro)
    // with B = [[1,0,0],[0,c,-s],[0,s,c]].
    let rho1 = b1;
    let rho2 = cos_phi * b2 - sin_phi * b3;
    let rho3 = sin_phi * b2 + cos_phi * b3;

    let r1 = l2[0] - rho1;
    let r2 = l2[1] - rho2;
    let r3 = l1_theta * l1_phi + rho3;

    let bc = c_b.abs().add_const(-CB_LIMIT).clamp_min(0.0);
    ([r1, r2, r3], bc)
}

/// Residuals of the regulator equations at one exosystem state, from a
/// network Lie bundle. Infeasible configurations are absorbed by the
/// denominator clamps rather than raised, so training can continue.
pub fn pde_residuals(
    lb: &LieBundle,
    w: ExoState,
    omega: f64,
    hp: &HeliParams,
    lambda: f64,
) -> ResidualBreakdown {
    let k = k_of_w(w, omega, hp);
    let ([r1, r2, r3], bc) = residual_terms(lb.out.to_array(), lb.l1, lb.l2, k, hp);
    ResidualBreakdown {
        r1,
        r2,
        r3,
        bc,
        total: r1.abs() + r2.abs() + r3.abs() + lambda * bc,
    }
}

/// Per-term means of the loss over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub l_pde1: f64,
    pub l_pde2: f64,
    pub l_pde3: f64,
    pub l_bc: f64,
    pub total: f64,
}

/// Unsupervised training loss: batch mean of `|r1| + |r2| + |r3|` plus
/// `lambda` times the mean boundary hinge.
pub fn loss(
    p: &crate::net::MlpParams,
    batch: &[SamplePoint],
    lambda: f64,
    hp: &HeliParams,
) -> (f64, LossTerms) {
    assert!(!batch.is_empty(), "loss of an empty batch");
    let mut terms = LossTerms::default();
    for sp in batch {
        let lb = p.lie_bundle(sp.w.w1, sp.w.w2, sp.omega);
        let r = pde_residuals(&lb, sp.w, sp.omega, hp, lambda);
        terms.l_pde1 += r.r1.abs();
        terms.l_pde2 += r.r2.abs();
        terms.l_pde3 += r.r3.abs();
        terms.l_bc += r.bc;
    }
    let n = batch.len() as f64;
    terms.l_pde1 /= n;
    terms.l_pde2 /= n;
    terms.l_pde3 /= n;
    terms.l_bc /= n;
    terms.total = terms.l_pde1 + terms.l_pde2 + terms.l_pde3 + lambda * terms.l_bc;
    (terms.total, terms)
}

/// Trim solution: the regulator triple and input maps at `w = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimPoint {
    pub pi_phi: f64,
    pub pi_theta: f64,
    pub c_b: f64,
    pub c_a: f64,
    pub c_tm: f64,
    pub c_tt: f64,
}

fn static_residuals<T: Real>(z: [T; 3], k: f64, hp: &HeliParams) -> [T; 3] {
    let zero = z[0].mul_const(0.0);
    let ([r1, r2, r3], _) = residual_terms(z, [zero; 3], [zero; 3], k, hp);
    [r1, r2, r3]
}

/// Newton solve of the static torque balance for the hover trim condition.
pub fn solve_trim(hp: &HeliParams) -> Result<TrimPoint, RegeqError> {
    let k = hp.m * hp.g;
    let mut z = [0.0_f64; 3];
    for _ in 0..60 {
        let r = static_residuals(z, k, hp);
        let norm = r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if norm < 1e-12 {
            let (c_a, c_tm, c_tt) = steady_maps_terms(z[0], z[1], z[2], k);
            return Ok(TrimPoint {
                pi_phi: z[0],
                pi_theta: z[1],
                c_b: z[2],
                c_a,
                c_tm,
                c_tt,
            });
        }
        // Jacobian column-by-column via dual numbers.
        let mut jac = [[0.0_f64; 3]; 3];
        for (j, col) in jac.iter_mut().enumerate() {
            let zd: Vec<Dual> = (0..3)
                .map(|i| Dual::seeded(z[i], if i == j { 1.0 } else { 0.0 }))
                .collect();
            let rd = static_residuals([zd[0], zd[1], zd[2]], k, hp);
            for i in 0..3 {
                col[i] = rd[i].deriv;
            }
        }
        // jac is column-major here; solve J dz = r with Cramer's rule.
        let a = [
            [jac[0][0], jac[1][0], jac[2][0]],
            [jac[0][1], jac[1][1], jac[2][1]],
            [jac[0][2], jac[1][2], jac[2][2]],
        ];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        if det.abs() < 1e-14 {
            return Err(RegeqError::TrimDiverged(norm));
        }
        let mut dz = [0.0_f64; 3];
        for (j, dzj) in dz.iter_mut().enumerate() {
            let mut m = a;
            for i in 0..3 {
                m[i][j] = r[i];
            }
            let dj = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            *dzj = dj / det;
        }
        for i in 0..3 {
            z[i] -= dz[i];
        }
    }
    let r = static_residuals(z, k, hp);
    Err(RegeqError::TrimDiverged(
        r.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
    ))
}
