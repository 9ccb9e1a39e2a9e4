//! Velocity and derivative estimators.
//!
//! Estimation is replica based: every replica draws a fresh environment
//! seeded from `(master seed, replica index)` and its own uniform stream,
//! so estimates are annealed and bitwise reproducible regardless of how
//! replicas are scheduled. The `*_replica` functions compute one replica;
//! `combine_*` reduce replica outputs in index order. The sequential
//! wrappers run both; callers with a thread pool map replicas themselves
//! and reuse the same combiners.
//!
//! Three velocity routes (plain average, the two regeneration ratios) and
//! two derivative routes (the martingale covariance and common-random-
//! number finite differences) deliberately coexist as cross-checks, plus
//! the likelihood-ratio window estimator connecting them.

use crate::coupling;
use crate::env::{ConductanceField, Conductances, EnvironmentLaw};
use crate::error::EstimateError;
use crate::kernel::{BiasedKernel, WalkPath, WalkSim};
use crate::lattice::LatticePoint;
use crate::regen;
use crate::rng::{self, CounterRng};
use crate::stats::{self, RunningStat};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] use num_traits::Float;

/// Which estimator produced a summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Plain,
    SuperRegen,
    HyperplaneRegen,
    Reweighted,
    CovarianceDerivative,
    FiniteDifferenceDerivative,
    WindowDerivative,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Plain => "plain",
            Method::SuperRegen => "super-regen",
            Method::HyperplaneRegen => "hyperplane-regen",
            Method::Reweighted => "reweighted",
            Method::CovarianceDerivative => "covariance",
            Method::FiniteDifferenceDerivative => "finite-difference",
            Method::WindowDerivative => "window",
        }
    }
}

/// Point estimate with a standard error per component.
#[derive(Debug, Clone)]
pub struct EstimateSummary {
    pub method: Method,
    pub estimate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
    pub horizon: usize,
}

/// Everything one replica needs: law, dimension, bias, horizon and the
/// master seed its streams derive from.
#[derive(Debug, Clone)]
pub struct ReplicaPlan {
    law: EnvironmentLaw,
    d: usize,
    lambda: f64,
    horizon: usize,
    master_seed: u64,
}

impl ReplicaPlan {
    pub fn new(
        law: EnvironmentLaw,
        d: usize,
        lambda: f64,
        horizon: usize,
        master_seed: u64,
    ) -> Result<Self, crate::error::LawError> {
        law.validate()?;
        Ok(ReplicaPlan { law, d, lambda, horizon, master_seed })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut p = self.clone();
        p.lambda = lambda;
        p
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut p = self.clone();
        p.horizon = horizon;
        p
    }

    /// The environment of one replica (law validated at construction).
    pub fn field(&self, replica: u64) -> ConductanceField {
        let seed = rng::stream_u64(
            rng::stream_key(self.master_seed, rng::DOMAIN_FIELD, replica),
            0,
        );
        ConductanceField::new(self.law, self.d, seed).expect("plan law is validated")
    }

    pub fn walk_rng(&self, replica: u64) -> CounterRng {
        CounterRng::walk_stream(self.master_seed, replica)
    }
}

// ---------------------------------------------------------------------------
// Plain velocity
// ---------------------------------------------------------------------------

/// Final displacement of one replica walk.
#[derive(Debug, Clone)]
pub struct VelocityReplica {
    pub displacement: Vec<i64>,
}

pub fn velocity_replica(plan: &ReplicaPlan, replica: u64) -> Result<VelocityReplica, EstimateError> {
    let field = plan.field(replica);
    let kernel = BiasedKernel::new(field, plan.lambda);
    let mut sim = WalkSim::new(&kernel, LatticePoint::origin(plan.d));
    let mut rng = plan.walk_rng(replica);
    for _ in 0..plan.horizon {
        sim.step_with(rng.next_uniform())?;
    }
    Ok(VelocityReplica { displacement: sim.position().to_vec() })
}

/// Mean of `X_n / n` across replicas with its standard error.
pub fn combine_velocity(reps: &[VelocityReplica], horizon: usize) -> EstimateSummary {
    let d = reps.first().map(|r| r.displacement.len()).unwrap_or(0);
    let mut stats_by_axis = vec![RunningStat::new(); d];
    for rep in reps {
        for (axis, s) in stats_by_axis.iter_mut().enumerate() {
            s.push(rep.displacement[axis] as f64 / horizon as f64);
        }
    }
    EstimateSummary {
        method: Method::Plain,
        estimate: stats_by_axis.iter().map(|s| s.mean()).collect(),
        stderr: stats_by_axis.iter().map(|s| s.std_error()).collect(),
        replicas: reps.len(),
        horizon,
    }
}

/// Annealed velocity estimate: fresh environment per replica.
pub fn estimate_velocity(
    plan: &ReplicaPlan,
    replicas: usize,
) -> Result<EstimateSummary, EstimateError> {
    if replicas == 0 {
        return Err(EstimateError::TooFewReplicas { got: 0, needed: 1 });
    }
    let reps: Result<Vec<_>, _> =
        (0..replicas as u64).map(|r| velocity_replica(plan, r)).collect();
    Ok(combine_velocity(&reps?, plan.horizon))
}

// ---------------------------------------------------------------------------
// Covariance derivative
// ---------------------------------------------------------------------------

/// Displacement plus the drift-compensated martingale at the horizon.
#[derive(Debug, Clone)]
pub struct MartingaleReplica {
    pub displacement: Vec<i64>,
    pub m_final: Vec<f64>,
}

pub fn martingale_replica(
    plan: &ReplicaPlan,
    replica: u64,
) -> Result<MartingaleReplica, EstimateError> {
    let field = plan.field(replica);
    let kernel = BiasedKernel::new(field, plan.lambda);
    let d = plan.d;
    let mut sim = WalkSim::new(&kernel, LatticePoint::origin(d));
    let mut rng = plan.walk_rng(replica);
    let mut m = vec![0.0; d];
    for _ in 0..plan.horizon {
        let dir = sim.step_with(rng.next_uniform())?;
        let w = sim.last_weights();
        let inv = 1.0 / sim.last_total();
        for (axis, mi) in m.iter_mut().enumerate() {
            *mi -= (w[axis] - w[axis + d]) * inv;
        }
        m[dir.axis] += dir.sign as f64;
    }
    Ok(MartingaleReplica { displacement: sim.position().to_vec(), m_final: m })
}

/// Number of batches used for batched confidence intervals.
pub const DEFAULT_BATCHES: usize = 25;

/// Derivative of the `e1` velocity as the replica covariance of
/// `(M_n . e1, N_n . e1) / n`.
///
/// `N_n = X_n - n v` uses the pooled velocity estimate as the plug-in for
/// the unknown `v`; the sample covariance is invariant under that common
/// shift, so the plug-in affects reporting only, not the point estimate.
pub fn combine_derivative_cov(reps: &[MartingaleReplica], horizon: usize) -> EstimateSummary {
    let n = horizon as f64;
    let ms: Vec<f64> = reps.iter().map(|r| r.m_final[0]).collect();
    let xs: Vec<f64> = reps.iter().map(|r| r.displacement[0] as f64).collect();
    let estimate = stats::sample_covariance(&ms, &xs) / n;
    // Batched standard error.
    let batches = DEFAULT_BATCHES.min(reps.len() / 2).max(1);
    let size = reps.len() / batches;
    let mut batch_stats = RunningStat::new();
    if size >= 2 {
        for b in 0..batches {
            let lo = b * size;
            let hi = if b + 1 == batches { reps.len() } else { lo + size };
            batch_stats.push(stats::sample_covariance(&ms[lo..hi], &xs[lo..hi]) / n);
        }
    }
    EstimateSummary {
        method: Method::CovarianceDerivative,
        estimate: vec![estimate],
        stderr: vec![batch_stats.std_error()],
        replicas: reps.len(),
        horizon,
    }
}

pub fn estimate_derivative_cov(
    plan: &ReplicaPlan,
    replicas: usize,
) -> Result<EstimateSummary, EstimateError> {
    if replicas < 2 {
        return Err(EstimateError::TooFewReplicas { got: replicas, needed: 2 });
    }
    let reps: Result<Vec<_>, _> =
        (0..replicas as u64).map(|r| martingale_replica(plan, r)).collect();
    Ok(combine_derivative_cov(&reps?, plan.horizon))
}

// ---------------------------------------------------------------------------
// Finite differences with common random numbers
// ---------------------------------------------------------------------------

/// Per-replica central difference `(X^+ - X^-) . e1 / (2 h n)`, both walks
/// sharing the replica's environment and uniform stream.
pub fn fd_replica(plan: &ReplicaPlan, h: f64, replica: u64) -> Result<f64, EstimateError> {
    assert!(h > 0.0 && plan.lambda - h >= 0.0, "finite difference needs lambda - h >= 0");
    let field = plan.field(replica);
    let k_plus = BiasedKernel::new(field.clone(), plan.lambda + h);
    let k_minus = BiasedKernel::new(field, plan.lambda - h);
    let mut sim_plus = WalkSim::new(&k_plus, LatticePoint::origin(plan.d));
    let mut sim_minus = WalkSim::new(&k_minus, LatticePoint::origin(plan.d));
    let mut rng = plan.walk_rng(replica);
    for _ in 0..plan.horizon {
        let u = rng.next_uniform();
        sim_plus.step_with(u)?;
        sim_minus.step_with(u)?;
    }
    let diff = (sim_plus.position()[0] - sim_minus.position()[0]) as f64;
    Ok(diff / (2.0 * h * plan.horizon as f64))
}

/// Central finite difference of the `e1` velocity at `plan.lambda` with
/// common random numbers.
pub fn estimate_derivative_fd(
    plan: &ReplicaPlan,
    h: f64,
    replicas: usize,
) -> Result<EstimateSummary, EstimateError> {
    if replicas < 2 {
        return Err(EstimateError::TooFewReplicas { got: replicas, needed: 2 });
    }
    let vals: Result<Vec<f64>, _> =
        (0..replicas as u64).map(|r| fd_replica(plan, h, r)).collect();
    let vals = vals?;
    let (mean, se) = stats::mean_stderr(&vals);
    Ok(EstimateSummary {
        method: Method::FiniteDifferenceDerivative,
        estimate: vec![mean],
        stderr: vec![se],
        replicas,
        horizon: plan.horizon,
    })
}

// ---------------------------------------------------------------------------
// Likelihood ratios
// ---------------------------------------------------------------------------

/// Exact likelihood ratio of a path between biases, with the second-order
/// expansion diagnostic.
#[derive(Debug, Clone)]
pub struct GirsanovWeight {
    pub log_weight: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub steps: usize,
    /// `lbar M_t . e1 - lbar^2/2 sum (d2 - d^2)` along the path, the
    /// second-order expansion of `log_weight` in `lbar`.
    pub expansion: f64,
}

/// Log likelihood ratio `dP_lambda / dP_lambda0` of a fixed path, in the
/// exact product form (per step: `lbar dx.e1 + log Z_{l0}(x) - log Z_l(x)`).
pub fn girsanov_weight<F: Conductances>(
    field: &F,
    path: &WalkPath,
    lambda0: f64,
    lambda: f64,
) -> Result<GirsanovWeight, EstimateError> {
    let k0 = BiasedKernel::new(&*field, lambda0);
    let k1 = BiasedKernel::new(&*field, lambda);
    let d = path.dim();
    let lbar = lambda - lambda0;
    let mut weights = vec![0.0; 2 * d];
    let mut log_weight = 0.0;
    let mut m_e1 = 0.0;
    let mut quad = 0.0;
    let mut pos = path.start().coords().to_vec();
    for s in path.steps() {
        let total0 = k0.fill_weights(&pos, &mut weights);
        if total0 <= 0.0 {
            return Err(EstimateError::Walk(crate::error::WalkError::DegenerateVertex {
                site: LatticePoint::new(pos.clone()),
                step: 0,
                partial: None,
            }));
        }
        let inv0 = 1.0 / total0;
        let drift_e1 = (weights[0] - weights[d]) * inv0;
        let d2 = (weights[0] + weights[d]) * inv0;
        // ln Z = ln(total) + lambda under the e^{-lambda} scaling.
        let ln_z0 = total0.ln() + lambda0;
        let total1 = k1.fill_weights(&pos, &mut weights);
        let ln_z1 = total1.ln() + lambda;
        let dir = crate::lattice::Direction::from_index(*s as usize, d);
        let dx_e1 = if dir.axis == 0 { dir.sign as f64 } else { 0.0 };
        log_weight += lbar * dx_e1 + ln_z0 - ln_z1;
        m_e1 += dx_e1 - drift_e1;
        quad += d2 - drift_e1 * drift_e1;
        pos[dir.axis] += dir.sign as i64;
    }
    Ok(GirsanovWeight {
        log_weight,
        lambda0,
        lambda,
        steps: path.len(),
        expansion: lbar * m_e1 - 0.5 * lbar * lbar * quad,
    })
}

/// One reweighting replica: a walk generated at `lambda0` carrying its
/// exact log likelihood ratio toward `lambda`.
#[derive(Debug, Clone)]
pub struct ReweightReplica {
    pub displacement_e1: i64,
    pub log_weight: f64,
}

pub fn reweight_replica(
    plan: &ReplicaPlan,
    lambda: f64,
    replica: u64,
) -> Result<ReweightReplica, EstimateError> {
    let field = plan.field(replica);
    let k0 = BiasedKernel::new(field.clone(), plan.lambda);
    let k1 = BiasedKernel::new(field, lambda);
    let d = plan.d;
    let lbar = lambda - plan.lambda;
    let mut sim = WalkSim::new(&k0, LatticePoint::origin(d));
    let mut rng = plan.walk_rng(replica);
    let mut aux = vec![0.0; 2 * d];
    let mut log_weight = 0.0;
    for _ in 0..plan.horizon {
        let pos_before = sim.position().to_vec();
        let dir = sim.step_with(rng.next_uniform())?;
        let ln_z0 = sim.last_total().ln() + plan.lambda;
        let total1 = k1.fill_weights(&pos_before, &mut aux);
        let ln_z1 = total1.ln() + lambda;
        let dx_e1 = if dir.axis == 0 { dir.sign as f64 } else { 0.0 };
        log_weight += lbar * dx_e1 + ln_z0 - ln_z1;
    }
    Ok(ReweightReplica { displacement_e1: sim.position()[0], log_weight })
}

/// Sample mean of the weights (must sit near 1 by normalization) with its
/// standard error.
pub fn combine_mean_weight(reps: &[ReweightReplica]) -> (f64, f64) {
    let ws: Vec<f64> = reps.iter().map(|r| r.log_weight.exp()).collect();
    stats::mean_stderr(&ws)
}

/// Self-normalized reweighted velocity `sum w X / (t sum w)` with a
/// batched standard error.
pub fn combine_reweighted_velocity(
    reps: &[ReweightReplica],
    horizon: usize,
) -> EstimateSummary {
    let batches = DEFAULT_BATCHES.min(reps.len() / 2).max(1);
    let pairs: Vec<(f64, f64)> = reps
        .iter()
        .map(|r| {
            let w = r.log_weight.exp();
            (w * r.displacement_e1 as f64 / horizon as f64, w)
        })
        .collect();
    let (ratio, se) = stats::ratio_with_batch_se(&pairs, batches);
    EstimateSummary {
        method: Method::Reweighted,
        estimate: vec![ratio],
        stderr: vec![se],
        replicas: reps.len(),
        horizon,
    }
}

/// Window estimate of the speed derivative.
#[derive(Debug, Clone)]
pub struct WindowEstimate {
    pub alpha: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub window: usize,
    /// Self-normalized estimate of
    /// `(E_lambda[X_t]/t - v(lambda0)) / (lambda - lambda0)`.
    pub estimate: f64,
    pub stderr: f64,
    /// Same quantity with raw (unnormalized) weights.
    pub raw_estimate: f64,
    /// Direct velocity estimate at `lambda0` from the same paths.
    pub direct_v0: f64,
    pub replicas: usize,
}

/// Derivative estimate through the reweighting window
/// `t = alpha (lambda - lambda0)^{-2}`: reweight `lambda0` paths to
/// `lambda` and difference against the direct velocity.
pub fn reweighted_window_mean(
    plan0: &ReplicaPlan,
    lambda: f64,
    alpha: f64,
    replicas: usize,
    horizon_cap: usize,
) -> Result<WindowEstimate, EstimateError> {
    assert!(alpha > 1.0, "the window requires alpha > 1");
    let lbar = lambda - plan0.lambda;
    if lbar == 0.0 {
        return Err(EstimateError::DegenerateWindow);
    }
    let window = (alpha / (lbar * lbar)).floor() as usize;
    if window > horizon_cap {
        return Err(EstimateError::WindowExceedsHorizon { required: window, cap: horizon_cap });
    }
    if replicas < 4 {
        return Err(EstimateError::TooFewReplicas { got: replicas, needed: 4 });
    }
    let plan = plan0.with_horizon(window);
    let reps: Result<Vec<_>, _> =
        (0..replicas as u64).map(|r| reweight_replica(&plan, lambda, r)).collect();
    let reps = reps?;
    Ok(combine_window(&reps, plan0.lambda, lambda, alpha, window))
}

pub fn combine_window(
    reps: &[ReweightReplica],
    lambda0: f64,
    lambda: f64,
    alpha: f64,
    window: usize,
) -> WindowEstimate {
    let lbar = lambda - lambda0;
    let t = window as f64;
    let v0 = reps.iter().map(|r| r.displacement_e1 as f64).sum::<f64>() / (t * reps.len() as f64);
    let estimate_on = |chunk: &[ReweightReplica]| -> (f64, f64) {
        // self-normalized and raw estimates of E_lambda[X_t]/t
        let mut sw = 0.0;
        let mut swx = 0.0;
        for r in chunk {
            let w = r.log_weight.exp();
            sw += w;
            swx += w * r.displacement_e1 as f64 / t;
        }
        (swx / sw, swx / chunk.len() as f64)
    };
    let (snis, raw) = estimate_on(reps);
    let estimate = (snis - v0) / lbar;
    let raw_estimate = (raw - v0) / lbar;
    // Batched standard error of the self-normalized form.
    let batches = 16usize.min(reps.len() / 4).max(2);
    let size = reps.len() / batches;
    let mut bstats = RunningStat::new();
    for b in 0..batches {
        let lo = b * size;
        let hi = if b + 1 == batches { reps.len() } else { lo + size };
        let (snis_b, _) = estimate_on(&reps[lo..hi]);
        bstats.push((snis_b - v0) / lbar);
    }
    WindowEstimate {
        alpha,
        lambda0,
        lambda,
        window,
        estimate,
        stderr: bstats.std_error(),
        raw_estimate,
        direct_v0: v0,
        replicas: reps.len(),
    }
}

// ---------------------------------------------------------------------------
// Regeneration-based velocity (per-replica increments)
// ---------------------------------------------------------------------------

/// `(dx . e1, dt)` increments between consecutive hyperplane
/// regenerations of one replica, dropping the first pair (its law differs
/// from the stationary sequence).
pub fn hyperplane_regen_replica(
    plan: &ReplicaPlan,
    confirm_margin: i64,
    replica: u64,
) -> Result<Vec<(f64, f64)>, EstimateError> {
    let e1 = e1_profile_replica(plan, replica)?;
    let log = regen::detect_regenerations(&e1, confirm_margin);
    let mut pairs = Vec::new();
    if log.regenerations.len() >= 2 {
        for w in log.regenerations[1..].windows(2) {
            pairs.push(((e1[w[1]] - e1[w[0]]) as f64, (w[1] - w[0]) as f64));
        }
    }
    Ok(pairs)
}

/// `(dx . e1, dt)` increments between consecutive double-record times of
/// the `e1` profile (strict two-step climbs never undercut afterwards).
pub fn super_regen_replica(
    plan: &ReplicaPlan,
    confirm_margin: i64,
    replica: u64,
) -> Result<Vec<(f64, f64)>, EstimateError> {
    let e1 = e1_profile_replica(plan, replica)?;
    let log = coupling::double_record_times(&e1, confirm_margin);
    let mut pairs = Vec::new();
    for w in log.times.windows(2) {
        pairs.push(((e1[w[1]] - e1[w[0]]) as f64, (w[1] - w[0]) as f64));
    }
    Ok(pairs)
}

fn e1_profile_replica(plan: &ReplicaPlan, replica: u64) -> Result<Vec<i64>, EstimateError> {
    let field = plan.field(replica);
    let kernel = BiasedKernel::new(field, plan.lambda);
    let mut sim = WalkSim::new(&kernel, LatticePoint::origin(plan.d));
    let mut rng = plan.walk_rng(replica);
    let mut e1 = Vec::with_capacity(plan.horizon + 1);
    e1.push(0i64);
    for _ in 0..plan.horizon {
        sim.step_with(rng.next_uniform())?;
        e1.push(sim.position()[0]);
    }
    Ok(e1)
}

/// Pooled ratio-of-means velocity over per-replica increment lists.
pub fn combine_regen_ratio(
    pairs_by_replica: &[Vec<(f64, f64)>],
    method: Method,
    horizon: usize,
) -> Result<EstimateSummary, EstimateError> {
    let pairs: Vec<(f64, f64)> =
        pairs_by_replica.iter().flat_map(|v| v.iter().copied()).collect();
    if pairs.len() < 2 {
        return Err(EstimateError::Walk(crate::error::WalkError::UniformOutOfRange {
            value: f64::NAN,
        }));
    }
    let (ratio, se) = stats::ratio_with_batch_se(&pairs, 32.min(pairs.len() / 2));
    Ok(EstimateSummary {
        method,
        estimate: vec![ratio],
        stderr: vec![se],
        replicas: pairs_by_replica.len(),
        horizon,
    })
}

// ---------------------------------------------------------------------------
// Drift-sum diagnostic
// ---------------------------------------------------------------------------

/// Supremum over `n <= L` of the squared norm of the accumulated local
/// drift along an unbiased walk, one replica.
pub fn drift_sum_replica(plan: &ReplicaPlan, replica: u64) -> Result<f64, EstimateError> {
    assert_eq!(plan.lambda, 0.0, "the drift-sum diagnostic runs at lambda = 0");
    let field = plan.field(replica);
    let kernel = BiasedKernel::new(field, 0.0);
    let d = plan.d;
    let mut sim = WalkSim::new(&kernel, LatticePoint::origin(d));
    let mut rng = plan.walk_rng(replica);
    let mut sum = vec![0.0; d];
    let mut sup_sq = 0.0f64;
    for _ in 0..plan.horizon {
        // drift of the departure site accumulates before the move
        sim.step_with(rng.next_uniform())?;
        let w = sim.last_weights();
        let inv = 1.0 / sim.last_total();
        let mut norm_sq = 0.0;
        for (axis, s) in sum.iter_mut().enumerate() {
            *s += (w[axis] - w[axis + d]) * inv;
            norm_sq += *s * *s;
        }
        if norm_sq > sup_sq {
            sup_sq = norm_sq;
        }
    }
    Ok(sup_sq)
}

/// `E[sup_n || sum drift ||^2] / (L delta)` with its standard error.
#[derive(Debug, Clone)]
pub struct DriftSumReport {
    pub delta: f64,
    pub horizon: usize,
    pub replicas: usize,
    pub mean_sup_sq: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

pub fn drift_sum_diagnostic(
    plan: &ReplicaPlan,
    delta: f64,
    replicas: usize,
) -> Result<DriftSumReport, EstimateError> {
    let vals: Result<Vec<f64>, _> =
        (0..replicas as u64).map(|r| drift_sum_replica(plan, r)).collect();
    let vals = vals?;
    let (mean, se) = stats::mean_stderr(&vals);
    let scale = plan.horizon as f64 * delta;
    let (ratio, ratio_stderr) =
        if scale > 0.0 { (mean / scale, se / scale) } else { (0.0, 0.0) };
    Ok(DriftSumReport {
        delta,
        horizon: plan.horizon,
        replicas,
        mean_sup_sq: mean,
        ratio,
        ratio_stderr,
    })
}
