//! Shared-uniform coupling of walks across environments and biases.
//!
//! All members of a [`CoupledEnsemble`] consume the same uniform sequence:
//! at each time the uniform is compared against each kernel's cumulative
//! thresholds, so two kernels agreeing on a cell take the same step. The
//! auxiliary one-dimensional walk [`AuxiliaryYWalk`] moves right exactly
//! when the uniform falls below a worst-case threshold; when its bias
//! parameter dominates, a right step of the auxiliary walk forces a right
//! step of every member. Times where the auxiliary walk achieves a strict
//! two-step climb never undercut afterwards are super-regeneration times
//! for every dominated member.

use crate::env::Conductances;
use crate::error::{RegenError, WalkError};
use crate::kernel::{BiasedKernel, WalkPath};
use crate::lattice::{Direction, LatticePoint};
use crate::rng::CounterRng;
use crate::stats;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] use num_traits::Float;

/// Several kernels advanced by one shared uniform stream.
#[derive(Debug, Clone)]
pub struct CoupledEnsemble<F> {
    kernels: Vec<BiasedKernel<F>>,
    positions: Vec<Vec<i64>>,
    steps: Vec<Vec<u8>>,
    starts: Vec<LatticePoint>,
    uniforms: Vec<f64>,
    buf: Vec<f64>,
    d: usize,
}

impl<F: Conductances> CoupledEnsemble<F> {
    /// All kernels must share the dimension; each member gets its own
    /// start point.
    pub fn new(kernels: Vec<BiasedKernel<F>>, starts: Vec<LatticePoint>) -> Self {
        assert!(!kernels.is_empty());
        assert_eq!(kernels.len(), starts.len());
        let d = kernels[0].dim();
        for k in &kernels {
            assert_eq!(k.dim(), d, "coupled kernels must share the dimension");
        }
        for s in &starts {
            assert_eq!(s.dim(), d);
        }
        let positions = starts.iter().map(|s| s.coords().to_vec()).collect();
        let n = kernels.len();
        CoupledEnsemble {
            kernels,
            positions,
            steps: vec![Vec::new(); n],
            starts,
            uniforms: Vec::new(),
            buf: vec![0.0; 2 * d],
            d,
        }
    }

    pub fn same_start(kernels: Vec<BiasedKernel<F>>, start: LatticePoint) -> Self {
        let starts = vec![start; kernels.len()];
        CoupledEnsemble::new(kernels, starts)
    }

    pub fn members(&self) -> usize {
        self.kernels.len()
    }

    pub fn time(&self) -> usize {
        self.uniforms.len()
    }

    pub fn position(&self, member: usize) -> &[i64] {
        &self.positions[member]
    }

    pub fn kernel(&self, member: usize) -> &BiasedKernel<F> {
        &self.kernels[member]
    }

    pub fn uniforms(&self) -> &[f64] {
        &self.uniforms
    }

    /// Advance every member with one shared uniform.
    pub fn coupled_step(&mut self, u: f64) -> Result<(), WalkError> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(WalkError::UniformOutOfRange { value: u });
        }
        for (i, kernel) in self.kernels.iter().enumerate() {
            let total = kernel.fill_weights(&self.positions[i], &mut self.buf);
            if total <= 0.0 {
                return Err(WalkError::DegenerateVertex {
                    site: LatticePoint::new(self.positions[i].clone()),
                    step: self.time(),
                    partial: None,
                });
            }
            let target = u * total;
            let mut acc = 0.0;
            let mut cell = self.buf.len() - 1;
            for (k, w) in self.buf.iter().enumerate() {
                acc += w;
                if target <= acc && *w > 0.0 {
                    cell = k;
                    break;
                }
            }
            let dir = Direction::from_index(cell, self.d);
            self.positions[i][dir.axis] += dir.sign as i64;
            self.steps[i].push(cell as u8);
        }
        self.uniforms.push(u);
        Ok(())
    }

    /// Run `n` coupled steps drawing uniforms from `rng`.
    pub fn run(&mut self, n: usize, rng: &mut CounterRng) -> Result<(), WalkError> {
        for _ in 0..n {
            let u = rng.next_uniform();
            self.coupled_step(u)?;
        }
        Ok(())
    }

    /// The trajectory of one member, carrying the shared uniforms.
    pub fn member_path(&self, member: usize) -> WalkPath {
        WalkPath::new(
            self.starts[member].clone(),
            self.steps[member].clone(),
            Some(self.uniforms.clone()),
        )
    }

    /// Steps at which two members moved differently.
    pub fn disagreement_times(&self, a: usize, b: usize) -> Vec<usize> {
        self.steps[a]
            .iter()
            .zip(&self.steps[b])
            .enumerate()
            .filter_map(|(n, (x, y))| (x != y).then_some(n))
            .collect()
    }
}

/// Threshold `e^{ls} / (e^{ls} + (2d - 1) beta)` with
/// `beta = (1 + delta) / (1 - delta)`: the worst-case probability of a
/// right step over all uniformly elliptic environments at bias `ls`.
pub fn y_threshold(lambda_s: f64, delta: f64, d: usize) -> f64 {
    assert!(lambda_s > 0.0);
    assert!((0.0..1.0).contains(&delta));
    let beta = (1.0 + delta) / (1.0 - delta);
    1.0 / (1.0 + (2 * d - 1) as f64 * beta * (-lambda_s).exp())
}

/// The drifted auxiliary walk: steps `+1` when the shared uniform is below
/// [`y_threshold`], `-1` otherwise.
#[derive(Debug, Clone)]
pub struct AuxiliaryYWalk {
    lambda_s: f64,
    delta: f64,
    d: usize,
    threshold: f64,
    values: Vec<i64>,
}

impl AuxiliaryYWalk {
    pub fn new(lambda_s: f64, delta: f64, d: usize) -> Self {
        let threshold = y_threshold(lambda_s, delta, d);
        AuxiliaryYWalk { lambda_s, delta, d, threshold, values: vec![0] }
    }

    pub fn from_uniforms(lambda_s: f64, delta: f64, d: usize, uniforms: &[f64]) -> Self {
        let mut y = AuxiliaryYWalk::new(lambda_s, delta, d);
        for &u in uniforms {
            y.push_uniform(u);
        }
        y
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    /// True when the walk has positive drift, i.e.
    /// `lambda_s > log beta + log(2d - 1)`; dominance arguments need this.
    pub fn has_right_drift(&self) -> bool {
        let beta = (1.0 + self.delta) / (1.0 - self.delta);
        self.lambda_s > beta.ln() + ((2 * self.d - 1) as f64).ln()
    }

    /// Whether the uniform `u` moves this walk to the right.
    #[inline]
    pub fn is_right_step(&self, u: f64) -> bool {
        u <= self.threshold
    }

    pub fn push_uniform(&mut self, u: f64) {
        let last = *self.values.last().unwrap();
        self.values.push(if self.is_right_step(u) { last + 1 } else { last - 1 });
    }

    /// `Y_0 = 0, Y_1, ..., Y_n`.
    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

/// Detected super-regeneration times, plus whether trailing candidates had
/// to be dropped because the observed window could not confirm them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperRegenerationLog {
    pub times: Vec<usize>,
    pub censored_tail: bool,
}

/// Times `n` with `max_{k < n-1} v_k < v_{n-1} < v_n < min_{k > n} v_k`
/// over the observed window, confirmed once the sequence has exceeded
/// `v_n` by `confirm_margin` without ever returning to `v_n` or below.
///
/// Works on any integer level sequence: the auxiliary walk for the
/// coupling construction, or an `e1` coordinate profile directly.
pub fn double_record_times(values: &[i64], confirm_margin: i64) -> SuperRegenerationLog {
    let n = values.len();
    let mut log = SuperRegenerationLog { times: Vec::new(), censored_tail: false };
    if n < 2 {
        log.censored_tail = true;
        return log;
    }
    // suffix_min[i] = min over values[i..]; suffix_max likewise.
    let mut suffix_min = vec![0i64; n + 1];
    let mut suffix_max = vec![0i64; n + 1];
    suffix_min[n] = i64::MAX;
    suffix_max[n] = i64::MIN;
    for i in (0..n).rev() {
        suffix_min[i] = suffix_min[i + 1].min(values[i]);
        suffix_max[i] = suffix_max[i + 1].max(values[i]);
    }
    let mut prefix_max = i64::MIN; // max over values[..t-1]
    for t in 1..n {
        let window_ok = prefix_max < values[t - 1]
            && values[t - 1] < values[t]
            && (t + 1 >= n || values[t] < suffix_min[t + 1]);
        if window_ok {
            let confirmed = t + 1 < n
                && values[t] < suffix_min[t + 1]
                && suffix_max[t + 1] >= values[t] + confirm_margin;
            if confirmed {
                log.times.push(t);
            } else {
                log.censored_tail = true;
            }
        }
        prefix_max = prefix_max.max(values[t - 1]);
    }
    log
}

/// Super-regeneration times of the auxiliary walk.
pub fn detect_super_regenerations(
    y: &AuxiliaryYWalk,
    confirm_margin: i64,
) -> SuperRegenerationLog {
    double_record_times(y.values(), confirm_margin)
}

/// Speed estimate from inter-regeneration increments of one member.
#[derive(Debug, Clone)]
pub struct RegenSpeed {
    /// Ratio of mean displacement to mean duration, all components.
    pub velocity: Vec<f64>,
    /// Batch-means standard error of the `e1` component.
    pub stderr_e1: f64,
    pub increments: usize,
    pub mean_duration: f64,
}

/// `v = E[inter-regeneration displacement] / E[inter-regeneration time]`,
/// from the increments between consecutive detected times (the increment
/// sequence is iid from the second regeneration onward, which is exactly
/// the set of increments between detected times).
pub fn regeneration_speed_ratio(
    path: &WalkPath,
    log: &SuperRegenerationLog,
) -> Result<RegenSpeed, RegenError> {
    if log.times.len() < 2 {
        return Err(RegenError::InsufficientRegenerations { found: log.times.len(), needed: 2 });
    }
    let d = path.dim();
    let mut sum_dx = vec![0.0; d];
    let mut sum_dt = 0.0;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(log.times.len() - 1);
    let mut prev: Option<(usize, LatticePoint)> = None;
    for &t in &log.times {
        let pos = path.position_at(t);
        if let Some((t0, p0)) = prev.take() {
            let dt = (t - t0) as f64;
            for (axis, s) in sum_dx.iter_mut().enumerate() {
                *s += (pos.coords()[axis] - p0.coords()[axis]) as f64;
            }
            sum_dt += dt;
            pairs.push(((pos.coords()[0] - p0.coords()[0]) as f64, dt));
        }
        prev = Some((t, pos));
    }
    let velocity: Vec<f64> = sum_dx.iter().map(|s| s / sum_dt).collect();
    let (_, se) = stats::ratio_with_batch_se(&pairs, 16.min(pairs.len()));
    Ok(RegenSpeed {
        velocity,
        stderr_e1: se,
        increments: pairs.len(),
        mean_duration: sum_dt / pairs.len() as f64,
    })
}

/// Exact probability that two kernels sharing a uniform step differently
/// from site `x`: the measure of uniforms falling in different cells of
/// the two threshold partitions.
pub fn site_disagreement_probability<F: Conductances, G: Conductances>(
    a: &BiasedKernel<F>,
    b: &BiasedKernel<G>,
    x: &LatticePoint,
) -> Result<f64, WalkError> {
    let qa = a.cumulative_thresholds(x)?;
    let qb = b.cumulative_thresholds(x)?;
    assert_eq!(qa.len(), qb.len());
    // Sweep the union of boundaries; on each refined interval both cell
    // indices are constant.
    let mut cuts: Vec<f64> = qa.iter().chain(qb.iter()).copied().collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let cell_of = |q: &[f64], u: f64| -> usize {
        // first k with u <= q[k+1]
        for k in 0..q.len() - 1 {
            if u <= q[k + 1] && q[k] < q[k + 1] {
                return k;
            }
        }
        q.len() - 2
    };
    let mut measure = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        if cell_of(&qa, mid) != cell_of(&qb, mid) {
            measure += hi - lo;
        }
    }
    Ok(measure)
}

/// Monte Carlo estimate of the per-step disagreement frequency between two
/// kernels advanced by the same uniforms from the same start.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub steps: usize,
    pub disagreements: usize,
    pub rate: f64,
    pub stderr: f64,
}

pub fn coupling_divergence_rate<F: Conductances>(
    a: BiasedKernel<F>,
    b: BiasedKernel<F>,
    start: &LatticePoint,
    n_steps: usize,
    rng: &mut CounterRng,
) -> Result<DivergenceReport, WalkError> {
    let mut ens = CoupledEnsemble::same_start(vec![a, b], start.clone());
    ens.run(n_steps, rng)?;
    let disagreements = ens.disagreement_times(0, 1).len();
    let rate = disagreements as f64 / n_steps as f64;
    let stderr = (rate * (1.0 - rate) / n_steps as f64).sqrt();
    Ok(DivergenceReport { steps: n_steps, disagreements, rate, stderr })
}
