//! Hyperplane hitting times, fresh epochs, regenerations, and the ladder
//! decomposition through dead ends.
//!
//! Most detectors operate on the `e1` coordinate profile of a path
//! (`len + 1` integers). A fresh epoch strictly exceeds every earlier
//! level; a regeneration is a fresh epoch never revisited from above.
//! "Never" is certified within the observed window: a candidate is
//! confirmed once the walk has advanced `confirm_margin` levels beyond it
//! without returning, otherwise it is censored.

use crate::env::Conductances;
use crate::error::RegenError;
use crate::kernel::WalkPath;
use crate::stats;
use crate::traps::{self, Rect};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] use num_traits::Float;

/// Result of a hyperplane hit search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HittingRecord {
    /// The integer level `floor(h)` of the target hyperplane.
    pub level: i64,
    /// First time the walk sits on the hyperplane, or `None` if the
    /// observed path never does.
    pub time: Option<usize>,
}

/// First `n >= 0` with `e1[n] == floor(h)`.
pub fn first_hitting_time(e1_profile: &[i64], h: f64) -> HittingRecord {
    let level = h.floor() as i64;
    let time = e1_profile.iter().position(|x| *x == level);
    HittingRecord { level, time }
}

/// Times `n >= 1` whose level strictly exceeds every earlier level.
/// Time 0 is never fresh by convention.
pub fn fresh_epochs(e1_profile: &[i64]) -> Vec<usize> {
    let mut out = Vec::new();
    if e1_profile.is_empty() {
        return out;
    }
    let mut running_max = e1_profile[0];
    for (n, &x) in e1_profile.iter().enumerate().skip(1) {
        if x > running_max {
            out.push(n);
            running_max = x;
        }
    }
    out
}

/// Fresh epochs filtered by the never-return condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenerationLog {
    pub fresh_epochs: Vec<usize>,
    /// Confirmed regeneration times `R_1 < R_2 < ...`.
    pub regenerations: Vec<usize>,
    /// Window-valid candidates were dropped for lack of confirmation.
    pub censored_tail: bool,
}

/// A fresh epoch `n` is a regeneration when `e1[k] > e1[n]` for every
/// observed `k > n`; it is confirmed once the profile has reached
/// `e1[n] + confirm_margin`.
pub fn detect_regenerations(e1_profile: &[i64], confirm_margin: i64) -> RegenerationLog {
    let fresh = fresh_epochs(e1_profile);
    let n = e1_profile.len();
    let mut suffix_min = vec![i64::MAX; n + 1];
    let mut suffix_max = vec![i64::MIN; n + 1];
    for i in (0..n).rev() {
        suffix_min[i] = suffix_min[i + 1].min(e1_profile[i]);
        suffix_max[i] = suffix_max[i + 1].max(e1_profile[i]);
    }
    let mut regenerations = Vec::new();
    let mut censored_tail = false;
    for &t in &fresh {
        let level = e1_profile[t];
        let window_ok = t + 1 >= n || suffix_min[t + 1] > level;
        if !window_ok {
            continue;
        }
        let confirmed = t + 1 < n && suffix_max[t + 1] >= level + confirm_margin;
        if confirmed {
            regenerations.push(t);
        } else {
            censored_tail = true;
        }
    }
    RegenerationLog { fresh_epochs: fresh, regenerations, censored_tail }
}

/// Velocity from hyperplane-regeneration increments.
#[derive(Debug, Clone)]
pub struct RegenSpeedEstimate {
    pub velocity: Vec<f64>,
    /// Batch-means standard error of the `e1` component.
    pub stderr_e1: f64,
    pub increments: usize,
    pub mean_duration: f64,
}

/// Ratio of mean displacement to mean duration over the increments from
/// the second confirmed regeneration onward (the first inter-regeneration
/// piece is discarded; its law differs from the stationary sequence).
pub fn regeneration_speed(
    path: &WalkPath,
    log: &RegenerationLog,
) -> Result<RegenSpeedEstimate, RegenError> {
    if log.regenerations.len() < 3 {
        return Err(RegenError::InsufficientRegenerations {
            found: log.regenerations.len(),
            needed: 3,
        });
    }
    let d = path.dim();
    let used = &log.regenerations[1..];
    let mut sum_dx = vec![0.0; d];
    let mut sum_dt = 0.0;
    let mut pairs = Vec::with_capacity(used.len() - 1);
    let mut prev: Option<(usize, Vec<i64>)> = None;
    for &t in used {
        let pos = path.position_at(t).into_coords();
        if let Some((t0, p0)) = prev.take() {
            for (axis, s) in sum_dx.iter_mut().enumerate() {
                *s += (pos[axis] - p0[axis]) as f64;
            }
            let dt = (t - t0) as f64;
            sum_dt += dt;
            pairs.push(((pos[0] - p0[0]) as f64, dt));
        }
        prev = Some((t, pos));
    }
    let velocity = sum_dx.iter().map(|s| s / sum_dt).collect();
    let (_, stderr_e1) = stats::ratio_with_batch_se(&pairs, 16.min(pairs.len()));
    Ok(RegenSpeedEstimate {
        velocity,
        stderr_e1,
        increments: pairs.len(),
        mean_duration: sum_dt / pairs.len() as f64,
    })
}

/// Summary of inter-regeneration durations pooled over replicas.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub increments: usize,
    pub mean_duration: f64,
    pub var_duration: f64,
    /// `lambda^2 * mean duration` with a replica-level standard error
    /// (0 when only one replica contributes).
    pub scaled_mean: f64,
    pub scaled_stderr: f64,
    /// Empirical `E[exp(c lambda^2 dt)]`; infinite values saturate.
    pub exp_moment: f64,
}

/// Moments of `lambda^2 (tau_{k+1} - tau_k)` and the exponential moment at
/// the user constant `c`, over per-replica duration lists.
pub fn inter_regeneration_moments(
    durations_by_replica: &[Vec<f64>],
    lambda: f64,
    c: f64,
) -> MomentReport {
    let l2 = lambda * lambda;
    let mut all = stats::RunningStat::new();
    let mut exp_acc = stats::RunningStat::new();
    let mut per_replica = stats::RunningStat::new();
    for durations in durations_by_replica {
        let mut rep = stats::RunningStat::new();
        for &dt in durations {
            all.push(dt);
            exp_acc.push((c * l2 * dt).exp());
            rep.push(l2 * dt);
        }
        if rep.count() > 0 {
            per_replica.push(rep.mean());
        }
    }
    MomentReport {
        increments: all.count() as usize,
        mean_duration: all.mean(),
        var_duration: all.variance(),
        scaled_mean: l2 * all.mean(),
        scaled_stderr: per_replica.std_error(),
        exp_moment: exp_acc.mean(),
    }
}

/// One ladder interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderEntry {
    /// Ladder time `L_i`.
    pub time: usize,
    /// Level `X_{L_i} . e1`.
    pub level: i64,
    /// Depth of the dead end starting at `X_{L_i}`; `None` when the box
    /// certification failed up to the maximum radius.
    pub depth: Option<i64>,
    /// First `n >= 1` with the level back at or below `level`, counted
    /// only when a dead end is present (0 otherwise); `None` when the
    /// path ends first.
    pub dwell: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderLog {
    pub entries: Vec<LadderEntry>,
    /// The final interval could not be closed within the observed path.
    pub censored_tail: bool,
}

/// Box sizing for the dead-end certification behind the ladder clock.
#[derive(Debug, Clone, Copy)]
pub struct LadderOptions {
    pub initial_radius: i64,
    pub max_radius: i64,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions { initial_radius: 24, max_radius: 192 }
    }
}

/// Decompose a two-dimensional path into ladder intervals: `L_0 = 0` and
/// `L_{i+1}` is the first fresh epoch whose level exceeds
/// `level(L_i) + depth(A_i)`, where `A_i` is the dead end starting at
/// `X_{L_i}`. Records the dead-end dwell clock for each interval.
pub fn ladder_decomposition<F: Conductances>(
    path: &WalkPath,
    field: &F,
    opts: &LadderOptions,
) -> LadderLog {
    assert_eq!(path.dim(), 2, "ladder decomposition is defined on Z^2");
    let e1 = path.e1_profile();
    let fresh = fresh_epochs(&e1);
    let mut entries: Vec<LadderEntry> = Vec::new();
    let mut censored_tail = false;

    let mut time = 0usize;
    let mut fresh_idx = 0usize;
    loop {
        let site = path.position_at(time);
        let level = e1[time];
        let depth = certified_depth(field, &site, opts);
        let dwell = match depth {
            Some(0) => Some(0),
            _ => {
                // Return clock of the dead end (or of an uncertified site).
                match e1[time + 1..].iter().position(|x| *x <= level) {
                    Some(k) => Some(k as u64 + 1),
                    None => {
                        censored_tail = true;
                        None
                    }
                }
            }
        };
        entries.push(LadderEntry { time, level, depth, dwell });
        let Some(d) = depth else {
            // Cannot size the next ladder target without the depth.
            censored_tail = true;
            break;
        };
        let target = level + d;
        while fresh_idx < fresh.len() && e1[fresh[fresh_idx]] <= target {
            fresh_idx += 1;
        }
        if fresh_idx >= fresh.len() {
            censored_tail = true;
            break;
        }
        time = fresh[fresh_idx];
    }
    LadderLog { entries, censored_tail }
}

fn certified_depth<F: Conductances>(
    field: &F,
    site: &crate::lattice::LatticePoint,
    opts: &LadderOptions,
) -> Option<i64> {
    let mut radius = opts.initial_radius;
    while radius <= opts.max_radius {
        match traps::dead_end_at(field, site, &Rect::centered(site.coords(), radius)) {
            Ok(report) => {
                return Some(if report.is_dead_end_start { report.depth } else { 0 })
            }
            Err(_) => radius *= 2,
        }
    }
    None
}
