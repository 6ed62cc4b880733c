//! Closed-loop validation: manifold initialization, the stabilizing
//! controller wrapped around the learned feedforward, trajectory rollout
//! with divergence detection, grid experiments and error statistics.

use crate::heli::{
    cross, mat_t_vec, rk4_step, rotation_matrix, rotor_wrench_terms, HeliParams, RigidState,
    GIMBAL_EPS,
};
use crate::net::MlpParams;
use crate::regeq::{exo_solution, k_of_w, steady_maps_terms, ExoState};
use crate::util::{g17, median};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("manifold initialization failed: {0}")]
    Init(String),
    #[error("all grid cells diverged; no statistics available")]
    AllDiverged,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed grid CSV at line {line}: {reason}")]
    GridParse { line: usize, reason: String },
}

/// Stabilizer gains around the learned feedforward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub kr1: f64,
    pub kr2: f64,
    pub kl1: f64,
    pub kl2: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            kr1: -2.0,
            kr2: -0.1,
            kl1: -20.0,
            kl2: -0.01,
        }
    }
}

impl Gains {
    pub fn zero() -> Self {
        Self {
            kr1: 0.0,
            kr2: 0.0,
            kl1: 0.0,
            kl2: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Any state magnitude beyond this declares divergence.
    pub divergence_threshold: f64,
    /// Route the feedforward through the actuator map instead of applying
    /// the idealized manifold wrench directly. Experimental.
    pub actuator_mode: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            dt: 0.01,
            divergence_threshold: 1e4,
            actuator_mode: false,
        }
    }
}

/// Rollout record: aligned series plus summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub w1_ref: Vec<f64>,
    pub e_z: Vec<f64>,
    pub states: Vec<RigidState>,
    /// Applied rotor-equivalent body wrench (f, tau) at each sample.
    pub inputs: Vec<[f64; 6]>,
    pub mean_abs_ez: f64,
    pub max_abs_ez: f64,
    pub diverged: bool,
    pub diverge_time: Option<f64>,
}

/// State on the zero-error manifold at `w0`: exact position/velocity, the
/// network attitude, and the body rates matching the attitude Lie
/// derivatives with yaw frozen.
pub fn init_on_manifold(w0: ExoState, omega: f64, p: &MlpParams) -> Result<RigidState, SimError> {
    let lb = p.lie_bundle(w0.w1, w0.w2, omega);
    let pi_theta = lb.out.pi_theta;
    let pi_phi = lb.out.pi_phi;
    if pi_theta.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_EPS {
        return Err(SimError::Init(format!(
            "network pitch {pi_theta} at gimbal lock"
        )));
    }
    let (sphi, cphi) = pi_phi.sin_cos();
    let l1_phi = lb.l1[0];
    let l1_theta = lb.l1[1];
    Ok(RigidState {
        p: [0.0, 0.0, w0.w1],
        v: [0.0, 0.0, omega * w0.w2],
        q: [0.0, pi_theta, pi_phi],
        omega_b: [l1_phi, l1_theta * cphi, -l1_theta * sphi],
    })
}

/// The tracking controller: learned feedforward plus proportional/derivative
/// corrections, returned as a rotor-equivalent body wrench `(f_b, tau_b)`.
///
/// The attitude feedforward maps the second Lie derivatives through the
/// manifold kinematics; the translational feedforward is the manifold
/// acceleration `(0, 0, -omega^2 w1)`. Feedback pairs each body axis with
/// its own attitude error, `(phi - pi_phi, theta - pi_theta, psi)`.
pub fn control(
    x: &RigidState,
    w: ExoState,
    omega: f64,
    p: &MlpParams,
    gains: &Gains,
    hp: &HeliParams,
    actuator_mode: bool,
) -> ([f64; 3], [f64; 3]) {
    let lb = p.lie_bundle(w.w1, w.w2, omega);
    let pi_phi = lb.out.pi_phi;
    let pi_theta = lb.out.pi_theta;
    let (sphi, cphi) = pi_phi.sin_cos();

    // Feedforward body angular acceleration: the manifold kinematics give
    // (phi_ddot, theta_ddot, -theta_dot phi_dot) = B omega_dot, so
    // omega_dot = B^T of that vector.
    let lie_row3 = lb.l1[1] * lb.l1[0];
    let alpha_ff = [
        lb.l2[0],
        cphi * lb.l2[1] - sphi * lie_row3,
        -(sphi * lb.l2[1] + cphi * lie_row3),
    ];

    let e_att = [x.q[2] - pi_phi, x.q[1] - pi_theta, x.q[0]];
    let wb = &x.omega_b;
    let jw = [hp.jx * wb[0], hp.jy * wb[1], hp.jz * wb[2]];
    let gyro = cross(wb, &jw);
    let j = [hp.jx, hp.jy, hp.jz];

    let e_p = [x.p[0], x.p[1], x.p[2] - w.w1];
    let a_ff = [0.0, 0.0, -omega * omega * w.w1];
    let r = rotation_matrix(&x.q);

    if actuator_mode {
        let k = k_of_w(w, omega, hp);
        let (c_a, c_tm, c_tt) = steady_maps_terms(pi_phi, pi_theta, lb.out.c_b, k);
        let (f_ff, tau_ff) =
            rotor_wrench_terms(c_tm.max(0.0), c_tt.max(0.0), c_a, lb.out.c_b, hp);
        let fb_corr = [
            gains.kl1 * e_p[0] + gains.kl2 * x.v[0],
            gains.kl1 * e_p[1] + gains.kl2 * x.v[1],
            gains.kl1 * e_p[2] + gains.kl2 * x.v[2],
        ];
        let fb_body = mat_t_vec(&r, &fb_corr);
        let mut f = [0.0; 3];
        let mut tau = [0.0; 3];
        for i in 0..3 {
            f[i] = f_ff[i] + fb_body[i];
            tau[i] = tau_ff[i] + j[i] * (gains.kr1 * e_att[i] + gains.kr2 * wb[i]);
        }
        return (f, tau);
    }

    let mut tau = [0.0; 3];
    for i in 0..3 {
        tau[i] = j[i] * (alpha_ff[i] + gains.kr1 * e_att[i] + gains.kr2 * wb[i]) + gyro[i];
    }
    let f_inertial = [
        hp.m * a_ff[0] + gains.kl1 * e_p[0] + gains.kl2 * x.v[0],
        hp.m * a_ff[1] + gains.kl1 * e_p[1] + gains.kl2 * x.v[1],
        hp.m * a_ff[2] - hp.m * hp.g + gains.kl1 * e_p[2] + gains.kl2 * x.v[2],
    ];
    let f = mat_t_vec(&r, &f_inertial);
    (f, tau)
}

/// Roll out the closed loop; the exosystem advances by its closed form and
/// the controller is evaluated at integrator stage times.
pub fn simulate(
    w0: ExoState,
    omega: f64,
    opts: &SimOptions,
    p: &MlpParams,
    gains: &Gains,
    hp: &HeliParams,
) -> Result<SimResult, SimError> {
    assert!(opts.horizon > 0.0 && opts.dt > 0.0);
    let steps = (opts.horizon / opts.dt).round() as usize;
    let mut result = SimResult {
        t: Vec::with_capacity(steps + 1),
        w1_ref: Vec::with_capacity(steps + 1),
        e_z: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        mean_abs_ez: 0.0,
        max_abs_ez: 0.0,
        diverged: false,
        diverge_time: None,
    };

    let u_provider = |t: f64, x: &RigidState| {
        let w = exo_solution(w0, omega, t);
        control(x, w, omega, p, gains, hp, opts.actuator_mode)
    };

    let mut state = init_on_manifold(w0, omega, p)?;
    let mut t = 0.0;
    for i in 0..=steps {
        let w = exo_solution(w0, omega, t);
        let (f, tau) = u_provider(t, &state);
        result.t.push(t);
        result.w1_ref.push(w.w1);
        result.e_z.push(state.p[2] - w.w1);
        result.states.push(state);
        result
            .inputs
            .push([f[0], f[1], f[2], tau[0], tau[1], tau[2]]);
        if i == steps {
            break;
        }
        match rk4_step(&state, &u_provider, t, opts.dt, hp) {
            Ok(next) if next.max_abs() <= opts.divergence_threshold => {
                state = next;
                t += opts.dt;
            }
            _ => {
                result.diverged = true;
                result.diverge_time = Some(t + opts.dt);
                break;
            }
        }
    }

    let n = result.e_z.len() as f64;
    result.mean_abs_ez = result.e_z.iter().map(|e| e.abs()).sum::<f64>() / n;
    result.max_abs_ez = result.e_z.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    Ok(result)
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub w1_0: f64,
    pub omega: f64,
    pub mean_abs_ez: f64,
    pub diverged: bool,
    pub seen_in_training: bool,
}

fn run_cell(
    w1_0: f64,
    omega: f64,
    opts: &SimOptions,
    p: &MlpParams,
    gains: &Gains,
    hp: &HeliParams,
    seen: bool,
) -> GridCell {
    match simulate(ExoState { w1: w1_0, w2: 0.0 }, omega, opts, p, gains, hp) {
        Ok(r) => GridCell {
            w1_0,
            omega,
            mean_abs_ez: r.mean_abs_ez,
            diverged: r.diverged,
            seen_in_training: seen,
        },
        Err(_) => GridCell {
            w1_0,
            omega,
            mean_abs_ez: f64::NAN,
            diverged: true,
            seen_in_training: seen,
        },
    }
}

/// Run the full grid of `(w1(0), omega)` experiments.
///
/// Cells are independent; with `workers > 1` they are distributed over a
/// scoped thread pool, and the output ordering (row-major over `w1_list`
/// then `omega_list`) is independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn grid_experiment(
    w1_list: &[f64],
    omega_list: &[f64],
    opts: &SimOptions,
    p: &MlpParams,
    gains: &Gains,
    hp: &HeliParams,
    train_radii: &[f64],
    train_omegas: &[f64],
    workers: usize,
) -> Vec<GridCell> {
    let is_seen = |w1: f64, om: f64| {
        train_radii.iter().any(|&r| (r - w1).abs() <= 1e-9)
            && train_omegas.iter().any(|&o| (o - om).abs() <= 1e-9)
    };
    let cells: Vec<(f64, f64, bool)> = w1_list
        .iter()
        .flat_map(|&w1| {
            omega_list
                .iter()
                .map(move |&om| (w1, om, is_seen(w1, om)))
        })
        .collect();

    if workers <= 1 {
        return cells
            .iter()
            .map(|&(w1, om, seen)| run_cell(w1, om, opts, p, gains, hp, seen))
            .collect();
    }

    let mut out: Vec<Option<GridCell>> = vec![None; cells.len()];
    std::thread::scope(|scope| {
        let (tx, rx) = std::sync::mpsc::channel();
        for worker in 0..workers.min(cells.len()) {
            let tx = tx.clone();
            let cells = &cells;
            scope.spawn(move || {
                for (idx, &(w1, om, seen)) in cells.iter().enumerate() {
                    if idx % workers == worker {
                        let cell = run_cell(w1, om, opts, p, gains, hp, seen);
                        if tx.send((idx, cell)).is_err() {
                            return;
                        }
                    }
                }
            });
        }
        drop(tx);
        for (idx, cell) in rx {
            out[idx] = Some(cell);
        }
    });
    out.into_iter().map(|c| c.expect("cell computed")).collect()
}

/// Summary statistics over non-diverged grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    /// `(lo, hi, count)` bins over the non-diverged error range.
    pub histogram: Vec<(f64, f64, usize)>,
    pub n_diverged: usize,
    pub n_total: usize,
}

pub fn error_stats(cells: &[GridCell]) -> Result<ErrorStats, SimError> {
    let values: Vec<f64> = cells
        .iter()
        .filter(|c| !c.diverged)
        .map(|c| c.mean_abs_ez)
        .collect();
    let n_diverged = cells.len() - values.len();
    if values.is_empty() {
        return Err(SimError::AllDiverged);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let med = median(&values);
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let n_bins = 20.min(values.len()).max(1);
    let width = if max > 0.0 { max / n_bins as f64 } else { 1.0 };
    let mut histogram: Vec<(f64, f64, usize)> = (0..n_bins)
        .map(|i| (i as f64 * width, (i + 1) as f64 * width, 0))
        .collect();
    for &v in &values {
        let mut idx = (v / width) as usize;
        if idx >= n_bins {
            idx = n_bins - 1;
        }
        histogram[idx].2 += 1;
    }
    Ok(ErrorStats {
        mean,
        median: med,
        histogram,
        n_diverged,
        n_total: cells.len(),
    })
}

pub fn write_trajectory_csv(path: &std::path::Path, r: &SimResult) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "t,w1_ref,e_z,p1,p2,p3,v1,v2,v3,q1,q2,q3,om1,om2,om3,f1,f2,f3,tau1,tau2,tau3"
    )?;
    for i in 0..r.t.len() {
        let s = &r.states[i];
        let u = &r.inputs[i];
        let cols: Vec<String> = [r.t[i], r.w1_ref[i], r.e_z[i]]
            .iter()
            .chain(s.p.iter())
            .chain(s.v.iter())
            .chain(s.q.iter())
            .chain(s.omega_b.iter())
            .chain(u.iter())
            .map(|&x| g17(x))
            .collect();
        writeln!(f, "{}", cols.join(","))?;
    }
    Ok(())
}

pub fn write_grid_csv(path: &std::path::Path, cells: &[GridCell]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "w1_0,omega,mean_abs_ez,diverged,seen_in_training")?;
    for c in cells {
        writeln!(
            f,
            "{},{},{},{},{}",
            g17(c.w1_0),
            g17(c.omega),
            g17(c.mean_abs_ez),
            c.diverged,
            c.seen_in_training
        )?;
    }
    Ok(())
}

pub fn read_grid_csv(path: &std::path::Path) -> Result<Vec<GridCell>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "w1_0,omega,mean_abs_ez,diverged,seen_in_training" {
                return Err(SimError::GridParse {
                    line: 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(SimError::GridParse {
                line: i + 1,
                reason: format!("expected 5 columns, got {}", parts.len()),
            });
        }
        let parse_f = |s: &str, line: usize| -> Result<f64, SimError> {
            s.trim().parse().map_err(|_| SimError::GridParse {
                line,
                reason: format!("bad float {s:?}"),
            })
        };
        let parse_b = |s: &str, line: usize| -> Result<bool, SimError> {
            s.trim().parse().map_err(|_| SimError::GridParse {
                line,
                reason: format!("bad bool {s:?}"),
            })
        };
        cells.push(GridCell {
            w1_0: parse_f(parts[0], i + 1)?,
            omega: parse_f(parts[1], i + 1)?,
            mean_abs_ez: parse_f(parts[2], i + 1)?,
            diverged: parse_b(parts[3], i + 1)?,
            seen_in_training: parse_b(parts[4], i + 1)?,
        });
    }
    Ok(cells)
}
