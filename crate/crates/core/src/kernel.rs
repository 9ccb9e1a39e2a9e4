//! Quenched walk dynamics: tilted transition probabilities, threshold
//! sampling, local drift statistics, the reversible measure and trajectory
//! generation.
//!
//! At a site `x` the walk jumps to a neighbor `y` with probability
//! proportional to `w(x, y) e^{lambda (y - x) . e1}`. Internally every
//! weight is scaled by `e^{-lambda}` (a uniform factor per site), which
//! leaves all probabilities unchanged and keeps the arithmetic in range
//! for arbitrarily strong bias.

use crate::env::Conductances;
use crate::error::WalkError;
use crate::lattice::{Direction, LatticePoint};
use crate::rng::CounterRng;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] use num_traits::Float;

/// Normalization slack accepted on probability vectors.
pub const PROB_TOL: f64 = 1e-12;

/// Walk kernel for a fixed environment and bias `lambda >= 0` in
/// direction `e1`.
#[derive(Debug, Clone)]
pub struct BiasedKernel<F> {
    field: F,
    lambda: f64,
    d: usize,
    /// `e^{-lambda}`: tilt of the off-axis directions after factoring.
    tilt_perp: f64,
    /// `e^{-2 lambda}`: tilt of the `-e1` direction after factoring.
    tilt_minus: f64,
}

impl<F: Conductances> BiasedKernel<F> {
    pub fn new(field: F, lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "bias must be finite and nonnegative");
        let d = field.dim();
        assert!((1..=8).contains(&d), "kernel supports dimensions 1..=8");
        BiasedKernel {
            field,
            lambda,
            d,
            tilt_perp: (-lambda).exp(),
            tilt_minus: (-2.0 * lambda).exp(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn field(&self) -> &F {
        &self.field
    }

    /// Fill `buf` (length `2d`) with the tilted edge weights at `x`,
    /// scaled by `e^{-lambda}`; returns their sum. A zero sum marks a
    /// degenerate vertex.
    #[inline]
    pub fn fill_weights(&self, x: &[i64], buf: &mut [f64]) -> f64 {
        debug_assert_eq!(buf.len(), 2 * self.d);
        let mut total = 0.0;
        for k in 0..2 * self.d {
            let (axis, positive) = if k < self.d { (k, true) } else { (k - self.d, false) };
            let w = if positive {
                self.field.conductance_at(x, axis)
            } else {
                // canonical base of the edge {x - e_axis, x}
                let mut shifted = [0i64; 8];
                let s = &mut shifted[..x.len()];
                s.copy_from_slice(x);
                s[axis] -= 1;
                self.field.conductance_at(s, axis)
            };
            let tilt = if axis == 0 {
                if positive {
                    1.0
                } else {
                    self.tilt_minus
                }
            } else {
                self.tilt_perp
            };
            let t = w * tilt;
            buf[k] = t;
            total += t;
        }
        total
    }

    /// Exact one-step distribution at `x`.
    pub fn step_distribution(&self, x: &LatticePoint) -> Result<StepDistribution, WalkError> {
        let mut w = vec![0.0; 2 * self.d];
        let total = self.fill_weights(x.coords(), &mut w);
        if total <= 0.0 {
            return Err(WalkError::DegenerateVertex { site: x.clone(), step: 0, partial: None });
        }
        for v in &mut w {
            *v /= total;
        }
        Ok(StepDistribution { probs: w })
    }

    /// Cumulative thresholds `q(x, 0..=2d)`: zero first, nondecreasing,
    /// exactly 1 last.
    pub fn cumulative_thresholds(&self, x: &LatticePoint) -> Result<Vec<f64>, WalkError> {
        let dist = self.step_distribution(x)?;
        Ok(dist.thresholds())
    }

    /// Direction taken when the shared uniform equals `u` in `(0, 1]`:
    /// index `k` iff `q(x, k) < u <= q(x, k + 1)`.
    pub fn step_from_uniform(&self, x: &LatticePoint, u: f64) -> Result<Direction, WalkError> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(WalkError::UniformOutOfRange { value: u });
        }
        let mut w = vec![0.0; 2 * self.d];
        let total = self.fill_weights(x.coords(), &mut w);
        if total <= 0.0 {
            return Err(WalkError::DegenerateVertex { site: x.clone(), step: 0, partial: None });
        }
        Ok(Direction::from_index(pick_cell(&w, total, u), self.d))
    }

    /// Expected one-step displacement at `x` (all `d` components).
    pub fn local_drift(&self, x: &LatticePoint) -> Result<Vec<f64>, WalkError> {
        let dist = self.step_distribution(x)?;
        let mut drift = vec![0.0; self.d];
        for axis in 0..self.d {
            drift[axis] = dist.probs[axis] - dist.probs[axis + self.d];
        }
        Ok(drift)
    }

    /// Expected squared displacement along `e1` at `x`:
    /// `p(x, +e1) + p(x, -e1)`.
    pub fn local_second_moment(&self, x: &LatticePoint) -> Result<f64, WalkError> {
        let dist = self.step_distribution(x)?;
        Ok(dist.probs[0] + dist.probs[self.d])
    }

    /// Reversible measure `pi(x) = sum_z w(x, z) e^{lambda (x + z) . e1}`.
    /// Grows like `e^{2 lambda x . e1}`; evaluate at moderate sites.
    pub fn reversible_measure(&self, x: &LatticePoint) -> f64 {
        let mut pi = 0.0;
        for k in 0..2 * self.d {
            let dir = Direction::from_index(k, self.d);
            let y = x.neighbor(dir);
            let e = crate::lattice::Edge::incident(x, dir);
            let w = self.field.conductance(&e);
            pi += w * (self.lambda * (x.coords()[0] + y.coords()[0]) as f64).exp();
        }
        pi
    }

    /// Log of the unscaled normalizer `sum_z w(x, z) e^{lambda (z-x).e1}`,
    /// as used by likelihood ratios between biases.
    pub fn ln_normalizer(&self, x: &[i64]) -> Result<f64, WalkError> {
        let mut w = vec![0.0; 2 * self.d];
        let total = self.fill_weights(x, &mut w);
        if total <= 0.0 {
            return Err(WalkError::DegenerateVertex {
                site: LatticePoint::new(x.to_vec()),
                step: 0,
                partial: None,
            });
        }
        // weights were scaled by e^{-lambda}
        Ok(total.ln() + self.lambda)
    }

    /// Run `n_steps` of the walk from `start`, consuming uniforms from
    /// `rng`. Uniform storage is optional to keep long runs light.
    pub fn run_path(
        &self,
        start: &LatticePoint,
        n_steps: usize,
        rng: &mut CounterRng,
        store_uniforms: bool,
    ) -> Result<WalkPath, WalkError> {
        let mut sim = WalkSim::new(self, start.clone());
        let mut steps = Vec::with_capacity(n_steps);
        let mut uniforms = if store_uniforms { Some(Vec::with_capacity(n_steps)) } else { None };
        for step in 0..n_steps {
            let u = rng.next_uniform();
            match sim.step_with(u) {
                Ok(dir) => {
                    steps.push(dir.index(self.d) as u8);
                    if let Some(us) = uniforms.as_mut() {
                        us.push(u);
                    }
                }
                Err(WalkError::DegenerateVertex { site, .. }) => {
                    return Err(WalkError::DegenerateVertex {
                        site,
                        step,
                        partial: Some(WalkPath { start: start.clone(), steps, uniforms }),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(WalkPath { start: start.clone(), steps, uniforms })
    }
}

#[inline]
fn pick_cell(weights: &[f64], total: f64, u: f64) -> usize {
    // Boundary ties belong to the lower cell: direction k iff
    // q_{k-1} < u <= q_k. Scanning with strict `>` implements that.
    let target = u * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if target <= acc && *w > 0.0 {
            return k;
        }
    }
    // u == 1 with rounding: last direction of positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// One-step distribution over the `2d` directions, ordered
/// `+e_1..+e_d, -e_1..-e_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    probs: Vec<f64>,
}

impl StepDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len() / 2
    }

    /// Prefix sums `(0, q_1, ..., q_{2d})` with the last entry forced
    /// to exactly 1.
    pub fn thresholds(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.probs.len() + 1);
        q.push(0.0);
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            q.push(acc);
        }
        *q.last_mut().unwrap() = 1.0;
        q
    }
}

/// Streaming walk state; one kernel, one current position.
#[derive(Debug, Clone)]
pub struct WalkSim<'a, F> {
    kernel: &'a BiasedKernel<F>,
    pos: Vec<i64>,
    weights: Vec<f64>,
    total: f64,
    time: usize,
}

impl<'a, F: Conductances> WalkSim<'a, F> {
    pub fn new(kernel: &'a BiasedKernel<F>, start: LatticePoint) -> Self {
        let d = kernel.dim();
        WalkSim {
            kernel,
            pos: start.into_coords(),
            weights: vec![0.0; 2 * d],
            total: 0.0,
            time: 0,
        }
    }

    pub fn position(&self) -> &[i64] {
        &self.pos
    }

    pub fn time(&self) -> usize {
        self.time
    }

    /// Scaled weights of the site the last step departed from; valid
    /// after a successful [`WalkSim::step_with`].
    pub fn last_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of [`WalkSim::last_weights`].
    pub fn last_total(&self) -> f64 {
        self.total
    }

    /// Advance by the step the uniform `u` selects; returns the direction.
    #[inline]
    pub fn step_with(&mut self, u: f64) -> Result<Direction, WalkError> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(WalkError::UniformOutOfRange { value: u });
        }
        let total = self.kernel.fill_weights(&self.pos, &mut self.weights);
        if total <= 0.0 {
            return Err(WalkError::DegenerateVertex {
                site: LatticePoint::new(self.pos.clone()),
                step: self.time,
                partial: None,
            });
        }
        self.total = total;
        let k = pick_cell(&self.weights, total, u);
        let dir = Direction::from_index(k, self.kernel.dim());
        self.pos[dir.axis] += dir.sign as i64;
        self.time += 1;
        Ok(dir)
    }
}

/// A finite trajectory: start point, direction indices, and optionally the
/// uniforms that produced them (replaying the uniforms through the same
/// kernel reproduces the steps exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    start: LatticePoint,
    steps: Vec<u8>,
    uniforms: Option<Vec<f64>>,
}

impl WalkPath {
    pub fn new(start: LatticePoint, steps: Vec<u8>, uniforms: Option<Vec<f64>>) -> Self {
        if let Some(u) = &uniforms {
            assert_eq!(u.len(), steps.len(), "one uniform per step");
        }
        WalkPath { start, steps, uniforms }
    }

    /// Build a path directly from a list of visited positions.
    /// Panics if consecutive positions are not nearest neighbors.
    pub fn from_positions(points: &[LatticePoint]) -> Self {
        assert!(!points.is_empty());
        let d = points[0].dim();
        let steps = points
            .windows(2)
            .map(|w| {
                let dir = step_between(&w[0], &w[1]).expect("positions must be nearest neighbors");
                dir.index(d) as u8
            })
            .collect();
        WalkPath { start: points[0].clone(), steps, uniforms: None }
    }

    pub fn start(&self) -> &LatticePoint {
        &self.start
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    /// Number of steps (the path visits `len() + 1` positions).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[u8] {
        &self.steps
    }

    pub fn uniforms(&self) -> Option<&[f64]> {
        self.uniforms.as_deref()
    }

    /// Visit every position in order; `f` receives `(time, coords)`.
    pub fn for_each_position(&self, mut f: impl FnMut(usize, &[i64])) {
        let d = self.dim();
        let mut pos = self.start.coords().to_vec();
        f(0, &pos);
        for (n, s) in self.steps.iter().enumerate() {
            let dir = Direction::from_index(*s as usize, d);
            pos[dir.axis] += dir.sign as i64;
            f(n + 1, &pos);
        }
    }

    pub fn position_at(&self, n: usize) -> LatticePoint {
        assert!(n <= self.len());
        let d = self.dim();
        let mut pos = self.start.coords().to_vec();
        for s in &self.steps[..n] {
            let dir = Direction::from_index(*s as usize, d);
            pos[dir.axis] += dir.sign as i64;
        }
        LatticePoint::new(pos)
    }

    pub fn final_position(&self) -> LatticePoint {
        self.position_at(self.len())
    }

    /// The `e1` coordinate at every time, length `len() + 1`.
    pub fn e1_profile(&self) -> Vec<i64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut x1 = self.start.coords()[0];
        out.push(x1);
        for s in &self.steps {
            let dir = Direction::from_index(*s as usize, d);
            if dir.axis == 0 {
                x1 += dir.sign as i64;
            }
            out.push(x1);
        }
        out
    }
}

fn step_between(a: &LatticePoint, b: &LatticePoint) -> Option<Direction> {
    let mut found = None;
    for (axis, (x, y)) in a.coords().iter().zip(b.coords()).enumerate() {
        match y - x {
            0 => {}
            1 | -1 if found.is_none() => {
                found = Some(Direction { axis, sign: (y - x) as i8 });
            }
            _ => return None,
        }
    }
    found
}

/// Closed-form speed of the walk in the homogeneous environment:
/// `(e^l - e^{-l}) / (e^l + e^{-l} + 2d - 2)`.
pub fn homogeneous_speed(lambda: f64, d: usize) -> f64 {
    // Scaled by e^{-lambda} so the large-bias limit evaluates cleanly.
    let em = (-lambda).exp();
    let em2 = (-2.0 * lambda).exp();
    (1.0 - em2) / (1.0 + em2 + (2 * d - 2) as f64 * em)
}

/// Derivative of [`homogeneous_speed`] in `lambda`.
pub fn homogeneous_speed_derivative(lambda: f64, d: usize) -> f64 {
    let c = lambda.exp() + (-lambda).exp();
    let b = (2 * d - 2) as f64;
    (4.0 + b * c) / ((c + b) * (c + b))
}
