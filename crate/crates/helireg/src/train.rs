//! Training-set sampling over exosystem states and frequencies, the
//! optimizer loop with its learning-rate schedule, and residual-landscape
//! export.
//!
//! Gradients flow through the full pipeline — jet-valued network forward,
//! steady-state maps, rotor wrench, regulator residuals — by running the
//! whole computation on tape-backed scalars; one tape per sample, recycled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdError, Jet2, Real, Tape};
use crate::heli::HeliParams;
use crate::net::{MlpParams, Normalization, ParamsView};
use crate::regeq::{k_of_w, residual_terms, ExoState, LossTerms};
use crate::util::g17;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss was non-finite for {0} consecutive optimizer steps")]
    NonFiniteLoss(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent, kept for debugging.
    Sgd,
}

/// How per-sample residuals enter the optimized objective.
///
/// The reported residual metric is always the absolute-value total; this
/// only selects the training surrogate. `Abs` is the literal per-sample
/// reading of the printed norms, but its constant-magnitude subgradients
/// make first-order optimizers stall in a nonsmooth valley well above the
/// attainable residual level; `Squared` (the batch two-norm reading) has
/// the same zero set with residual-proportional gradients and trains to
/// orders of magnitude smaller residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualNorm {
    Squared,
    Abs,
}

/// Sampling, schedule and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Circle radii of the polar sampling grid (m), ascending, may include 0.
    pub radii: Vec<f64>,
    /// Exosystem frequencies included in training (rad/s).
    pub omega_set: Vec<f64>,
    pub lr_init: f64,
    pub lr_final: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Total sample-count target; the per-radius angular density is fitted
    /// to approach it.
    pub target_samples: usize,
    pub optimizer: Optimizer,
    pub residual_norm: ResidualNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            radii: (0..=12).map(|i| 0.5 * i as f64).collect(),
            omega_set: vec![0.25, 0.5, 0.75, 1.0],
            lr_init: 1e-3,
            lr_final: 1e-6,
            epochs: 100,
            lambda: 0.1,
            batch_size: 1024,
            seed: 0,
            target_samples: 24_499,
            optimizer: Optimizer::Adam,
            residual_norm: ResidualNorm::Squared,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.radii.is_empty() {
            return Err(TrainError::Config("radii must be nonempty".into()));
        }
        if self.radii.windows(2).any(|w| w[1] < w[0]) || self.radii[0] < 0.0 {
            return Err(TrainError::Config(
                "radii must be nonnegative and ascending".into(),
            ));
        }
        if self.omega_set.is_empty() || self.omega_set.iter().any(|&o| o <= 0.0) {
            return Err(TrainError::Config(
                "omega_set must be nonempty with positive entries".into(),
            ));
        }
        if !(self.lr_final < self.lr_init) {
            return Err(TrainError::Config(format!(
                "lr_final {} must be below lr_init {}",
                self.lr_final, self.lr_init
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One training collocation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub w: ExoState,
    pub omega: f64,
}

fn points_per_omega(radii: &[f64], kappa: f64) -> usize {
    radii
        .iter()
        .map(|&r| if r <= f64::EPSILON { 1 } else { (kappa * r).round().max(1.0) as usize })
        .sum()
}

/// Polar sampling grid: angular counts grow linearly with the radius so the
/// areal density stays roughly uniform; the density constant is fitted so
/// the total count lands as close as possible to `target_samples`.
pub fn sample_grid(cfg: &TrainConfig) -> Vec<SamplePoint> {
    let n_omega = cfg.omega_set.len().max(1);
    let per_target = cfg.target_samples as f64 / n_omega as f64;
    let sum_r: f64 = cfg.radii.iter().filter(|&&r| r > f64::EPSILON).sum();
    let kappa = if sum_r > 0.0 {
        let center = (per_target.max(1.0)) / sum_r;
        let mut best = (f64::INFINITY, center);
        let steps = 4000;
        for i in 0..=steps {
            let k = center * (0.25 + 1.75 * i as f64 / steps as f64);
            let total = (points_per_omega(&cfg.radii, k) * n_omega) as f64;
            let err = (total - cfg.target_samples as f64).abs();
            if err < best.0 {
                best = (err, k);
            }
        }
        best.1
    } else {
        0.0
    };

    let mut points = Vec::new();
    for &omega in &cfg.omega_set {
        for &r in &cfg.radii {
            if r <= f64::EPSILON {
                points.push(SamplePoint {
                    w: ExoState { w1: 0.0, w2: 0.0 },
                    omega,
                });
                continue;
            }
            let n = (kappa * r).round().max(1.0) as usize;
            for k in 0..n {
                let alpha = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                points.push(SamplePoint {
                    w: ExoState {
                        w1: r * alpha.cos(),
                        w2: r * alpha.sin(),
                    },
                    omega,
                });
            }
        }
    }
    points
}

/// Per-epoch summary written to the loss-history CSV.
///
/// The per-term values are the absolute-residual means (the reported
/// metric), independent of the surrogate the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub l_pde1: f64,
    pub l_pde2: f64,
    pub l_pde3: f64,
    pub l_bc: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub params: MlpParams,
    pub history: Vec<EpochStats>,
}

/// Per-sample loss and parameter gradient, accumulated into `grad`.
///
/// Returns `(total, [|r1|, |r2|, |r3|, bc])` for the sample.
fn sample_grad<'t>(
    tape: &'t Tape,
    leaves: &[crate::autodiff::Var<'t>],
    mark: usize,
    dims: &[usize],
    norm: Normalization,
    sp: &SamplePoint,
    hp: &HeliParams,
    lambda: f64,
    residual_norm: ResidualNorm,
    adj: &mut Vec<f64>,
    grad: &mut [f64],
) -> Result<(f64, [f64; 4]), AdError> {
    tape.truncate(mark);
    let view = ParamsView::from_flat(dims, leaves);

    let s = norm.w_scale;
    let (w1, w2, omega) = (sp.w.w1, sp.w.w2, sp.omega);
    let v = [omega * w2 / s, -omega * w1 / s];
    let a = [-omega * omega * w1 / s, -omega * omega * w2 / s];
    let x = [
        Jet2::new(tape.leaf(w1 / s), tape.leaf(v[0]), tape.leaf(a[0])),
        Jet2::new(tape.leaf(w2 / s), tape.leaf(v[1]), tape.leaf(a[1])),
        Jet2::constant(tape.leaf(omega / norm.omega_scale)),
    ];

    let y = crate::net::eval_jet(&view, dims, x);
    let out = [y[0].value, y[1].value, y[2].value];
    let l1 = [y[0].d, y[1].d, y[2].d];
    let l2 = [y[0].dd, y[1].dd, y[2].dd];
    let k = k_of_w(sp.w, omega, hp);
    let ([r1, r2, r3], bc) = residual_terms(out, l1, l2, k, hp);
    let total = match residual_norm {
        ResidualNorm::Abs => r1.abs() + r2.abs() + r3.abs() + bc.mul_const(lambda),
        ResidualNorm::Squared => {
            r1 * r1 + r2 * r2 + r3 * r3 + (bc * bc).mul_const(lambda)
        }
    };

    tape.gradient_into(total, adj)?;
    let n = grad.len();
    for (g, a) in grad.iter_mut().zip(adj[..n].iter()) {
        *g += *a;
    }
    Ok((
        total.val(),
        [r1.val().abs(), r2.val().abs(), r3.val().abs(), bc.val()],
    ))
}

/// Value-and-gradient of the batch-mean absolute-residual loss at the
/// given flat parameters.
///
/// Exposed for gradient-verification tests; the training loop uses the same
/// code path (with its configured residual norm).
pub fn loss_gradient(
    params: &MlpParams,
    batch: &[SamplePoint],
    lambda: f64,
    hp: &HeliParams,
) -> Result<(f64, Vec<f64>), TrainError> {
    loss_gradient_with(params, batch, lambda, ResidualNorm::Abs, hp)
}

/// As [`loss_gradient`] under a chosen residual norm.
pub fn loss_gradient_with(
    params: &MlpParams,
    batch: &[SamplePoint],
    lambda: f64,
    residual_norm: ResidualNorm,
    hp: &HeliParams,
) -> Result<(f64, Vec<f64>), TrainError> {
    let flat = params.flatten();
    let dims = params.layer_dims().to_vec();
    let norm = params.normalization();
    let tape = Tape::new();
    let leaves = tape.leaves(&flat);
    let mark = tape.len();
    let mut adj = Vec::new();
    let mut grad = vec![0.0; flat.len()];
    let mut total = 0.0;
    for sp in batch {
        let (t, _) = sample_grad(
            &tape,
            &leaves,
            mark,
            &dims,
            norm,
            sp,
            hp,
            lambda,
            residual_norm,
            &mut adj,
            &mut grad,
        )
        .map_err(|e| TrainError::Config(format!("gradient evaluation failed: {e}")))?;
        total += t;
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok((total / n, grad))
}

/// Geometric learning-rate interpolation from `lr_init` to `lr_final`.
fn schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.lr_init;
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.lr_init * (cfg.lr_final / cfg.lr_init).powf(frac)
}

/// Mini-batch first-order training of the residual loss; deterministic for
/// a fixed seed under the sequential reduction used here.
pub fn train(cfg: &TrainConfig, init: MlpParams, hp: &HeliParams) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    let samples = sample_grid(cfg);
    if samples.is_empty() {
        return Err(TrainError::Config("sampling produced no points".into()));
    }

    let dims = init.layer_dims().to_vec();
    let norm = init.normalization();
    let mut flat = init.flatten();
    let n_params = flat.len();

    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step_count: u64 = 0;
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let tape = Tape::new();
    let mut adj: Vec<f64> = Vec::new();
    let mut grad = vec![0.0; n_params];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut damping = 1.0_f64;
    let mut consecutive_failures = 0usize;

    for epoch in 0..cfg.epochs {
        let lr_epoch = schedule(cfg, epoch);
        order.shuffle(&mut rng);

        let mut epoch_terms = LossTerms::default();
        let mut epoch_samples = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            tape.clear();
            let leaves = tape.leaves(&flat);
            let mark = tape.len();
            let mut batch_terms = [0.0_f64; 4];
            let mut ok = true;
            for &idx in chunk {
                match sample_grad(
                    &tape,
                    &leaves,
                    mark,
                    &dims,
                    norm,
                    &samples[idx],
                    hp,
                    cfg.lambda,
                    cfg.residual_norm,
                    &mut adj,
                    &mut grad,
                ) {
                    Ok((_, terms)) => {
                        for (acc, t) in batch_terms.iter_mut().zip(terms.iter()) {
                            *acc += t;
                        }
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            let nb = chunk.len() as f64;
            let finite = ok && grad.iter().all(|g| g.is_finite());
            if !finite {
                consecutive_failures += 1;
                damping *= 0.5;
                eprintln!(
                    "train: non-finite loss at epoch {epoch}, skipping step (lr damping {damping:.3e})"
                );
                if consecutive_failures >= 10 {
                    return Err(TrainError::NonFiniteLoss(consecutive_failures));
                }
                continue;
            }
            consecutive_failures = 0;

            let lr = lr_epoch * damping;
            step_count += 1;
            match cfg.optimizer {
                Optimizer::Adam => {
                    let bc1 = 1.0 - beta1.powi(step_count as i32);
                    let bc2 = 1.0 - beta2.powi(step_count as i32);
                    for i in 0..n_params {
                        let g = grad[i] / nb;
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
                        let mhat = m1[i] / bc1;
                        let vhat = m2[i] / bc2;
                        flat[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
                Optimizer::Sgd => {
                    for i in 0..n_params {
                        flat[i] -= lr * grad[i] / nb;
                    }
                }
            }

            epoch_terms.l_pde1 += batch_terms[0];
            epoch_terms.l_pde2 += batch_terms[1];
            epoch_terms.l_pde3 += batch_terms[2];
            epoch_terms.l_bc += batch_terms[3];
            epoch_samples += chunk.len();
        }

        let n = epoch_samples.max(1) as f64;
        let stats = EpochStats {
            epoch,
            lr: lr_epoch * damping,
            l_pde1: epoch_terms.l_pde1 / n,
            l_pde2: epoch_terms.l_pde2 / n,
            l_pde3: epoch_terms.l_pde3 / n,
            l_bc: epoch_terms.l_bc / n,
            total: (epoch_terms.l_pde1 + epoch_terms.l_pde2 + epoch_terms.l_pde3) / n
                + cfg.lambda * epoch_terms.l_bc / n,
        };
        history.push(stats);
    }

    Ok(TrainResult {
        params: MlpParams::from_flat(&dims, norm, &flat),
        history,
    })
}

/// Rectangular landscape grid; rows in lexicographic `(w1, w2)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeSpec {
    pub w1_min: f64,
    pub w1_max: f64,
    pub n_w1: usize,
    pub w2_min: f64,
    pub w2_max: f64,
    pub n_w2: usize,
    pub omega: f64,
    pub lambda: f64,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            w1_min: -6.0,
            w1_max: 6.0,
            n_w1: 61,
            w2_min: -6.0,
            w2_max: 6.0,
            n_w2: 61,
            omega: 1.0,
            lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeRow {
    pub w1: f64,
    pub w2: f64,
    pub omega: f64,
    pub loss: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Dense total-residual evaluation over a rectangle of exosystem states.
pub fn residual_landscape(p: &MlpParams, spec: &LandscapeSpec, hp: &HeliParams) -> Vec<LandscapeRow> {
    let mut rows = Vec::with_capacity(spec.n_w1 * spec.n_w2);
    for &w1 in &linspace(spec.w1_min, spec.w1_max, spec.n_w1) {
        for &w2 in &linspace(spec.w2_min, spec.w2_max, spec.n_w2) {
            let w = ExoState { w1, w2 };
            let lb = p.lie_bundle(w1, w2, spec.omega);
            let r = crate::regeq::pde_residuals(&lb, w, spec.omega, hp, spec.lambda);
            rows.push(LandscapeRow {
                w1,
                w2,
                omega: spec.omega,
                loss: r.total,
            });
        }
    }
    rows
}

pub fn write_history_csv(path: &std::path::Path, history: &[EpochStats]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,lr,l_pde1,l_pde2,l_pde3,l_bc,total")?;
    for h in history {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            h.epoch,
            g17(h.lr),
            g17(h.l_pde1),
            g17(h.l_pde2),
            g17(h.l_pde3),
            g17(h.l_bc),
            g17(h.total)
        )?;
    }
    Ok(())
}

pub fn write_landscape_csv(path: &std::path::Path, rows: &[LandscapeRow]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "w1,w2,omega,loss")?;
    for r in rows {
        writeln!(f, "{},{},{},{}", g17(r.w1), g17(r.w2), g17(r.omega), g17(r.loss))?;
    }
    Ok(())
}

/// Verifies along exosystem trajectories that the sampled points sit exactly
/// on the configured circles.
pub fn on_circle(sp: &SamplePoint, radii: &[f64]) -> bool {
    let r = sp.w.norm();
    radii.iter().any(|&c| (r - c).abs() <= 1e-9)
}
