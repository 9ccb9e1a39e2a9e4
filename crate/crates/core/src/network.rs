//! Electrical-network computations on finite vertex sets: Dirichlet
//! solves for effective conductances and exit probabilities, cut-set
//! bounds, heat-kernel checks and kappa-pocket escape times.
//!
//! Tilted edge weights follow `w(x, y) = omega(x, y) e^{lambda (x+y).e1}`,
//! factored by a reference level so the arithmetic stays in range; all
//! potentials and probabilities are invariant under that uniform scaling.
//!
//! Two solver routes exist deliberately: a Jacobi-preconditioned conjugate
//! gradient on the weighted Laplacian for general networks, and a dense
//! Gaussian elimination retained as an oracle for small systems. Exit
//! probabilities through strongly tilted boxes are computed by a direct
//! level-ordered block elimination instead: the targets decay like
//! `e^{-2 lambda ell}` and an iterative solver's absolute error floor
//! would swamp them, while the block elimination only combines positive
//! quantities and keeps their relative accuracy.

use crate::env::Conductances;
use crate::error::NetworkError;
use crate::kernel::BiasedKernel;
use crate::lattice::LatticePoint;
use crate::traps::{self, Rect};
use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use hashbrown::HashMap;
#[allow(unused_imports)] use num_traits::Float;

/// A finite symmetric network with a distinguished source vertex and
/// sink set; every other vertex is insulated (free).
#[derive(Debug, Clone)]
pub struct TiltedNetwork {
    vertex_count: usize,
    edges: Vec<(u32, u32, f64)>,
    adjacency: Vec<Vec<(u32, f64)>>,
    source: u32,
    sinks: Vec<u32>,
}

impl TiltedNetwork {
    pub fn new(
        vertex_count: usize,
        edges: Vec<(u32, u32, f64)>,
        source: u32,
        sinks: Vec<u32>,
    ) -> Result<Self, NetworkError> {
        if source as usize >= vertex_count {
            return Err(NetworkError::BadBoundary { message: String::from("source out of range") });
        }
        if sinks.is_empty() {
            return Err(NetworkError::BadBoundary { message: String::from("empty sink set") });
        }
        for s in &sinks {
            if *s as usize >= vertex_count {
                return Err(NetworkError::BadBoundary {
                    message: String::from("sink out of range"),
                });
            }
            if *s == source {
                return Err(NetworkError::BadBoundary {
                    message: String::from("source contained in sink set"),
                });
            }
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (u, v, w) in &edges {
            if *u as usize >= vertex_count || *v as usize >= vertex_count || u == v {
                return Err(NetworkError::BadBoundary {
                    message: format!("bad edge ({u}, {v})"),
                });
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(NetworkError::BadBoundary {
                    message: format!("nonpositive weight on edge ({u}, {v})"),
                });
            }
            adjacency[*u as usize].push((*v, *w));
            adjacency[*v as usize].push((*u, *w));
        }
        Ok(TiltedNetwork { vertex_count, edges, adjacency, source, sinks })
    }

    /// Tilted network over the open-box sites of a two-dimensional field.
    /// Edge weights are `omega * exp(lambda ((x+y).e1 - 2 ref_level))`.
    pub fn from_field_box<F: Conductances>(
        field: &F,
        lambda: f64,
        rect: &Rect,
        source: (i64, i64),
        sink: impl Fn(i64, i64) -> bool,
    ) -> Result<(Self, HashMap<(i64, i64), u32>), NetworkError> {
        assert_eq!(field.dim(), 2);
        let mut index: HashMap<(i64, i64), u32> = HashMap::new();
        let mut sites: Vec<(i64, i64)> = Vec::new();
        for x in rect.x_min..=rect.x_max {
            for y in rect.y_min..=rect.y_max {
                index.insert((x, y), sites.len() as u32);
                sites.push((x, y));
            }
        }
        let ref_level = source.0;
        let mut edges = Vec::new();
        for &(x, y) in &sites {
            let u = index[&(x, y)];
            // +e1 edge
            if rect.contains(x + 1, y) {
                let w = field.conductance_at(&[x, y], 0);
                if w > 0.0 {
                    let tilt = (lambda * ((2 * (x - ref_level) + 1) as f64)).exp();
                    edges.push((u, index[&(x + 1, y)], w * tilt));
                }
            }
            // +e2 edge
            if rect.contains(x, y + 1) {
                let w = field.conductance_at(&[x, y], 1);
                if w > 0.0 {
                    let tilt = (lambda * ((2 * (x - ref_level)) as f64)).exp();
                    edges.push((u, index[&(x, y + 1)], w * tilt));
                }
            }
        }
        let source_idx = *index
            .get(&source)
            .ok_or_else(|| NetworkError::BadBoundary { message: String::from("source outside box") })?;
        let sinks: Vec<u32> =
            sites.iter().filter(|(x, y)| sink(*x, *y)).map(|s| index[s]).collect();
        let net = TiltedNetwork::new(sites.len(), edges, source_idx, sinks)?;
        Ok((net, index))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn source(&self) -> u32 {
        self.source
    }

    pub fn sinks(&self) -> &[u32] {
        &self.sinks
    }

    fn reachable_from(&self, seeds: &[u32], blocked_edges: &[bool]) -> Vec<bool> {
        // adjacency does not track edge ids, so rebuild it when a blocking
        // mask is involved
        let filtered: Option<Vec<Vec<u32>>> = blocked_edges.iter().any(|b| *b).then(|| {
            let mut adj = vec![Vec::new(); self.vertex_count];
            for (i, (a, b, _)) in self.edges.iter().enumerate() {
                if !blocked_edges[i] {
                    adj[*a as usize].push(*b);
                    adj[*b as usize].push(*a);
                }
            }
            adj
        });
        let mut seen = vec![false; self.vertex_count];
        let mut queue: VecDeque<u32> = VecDeque::new();
        for &s in seeds {
            if !seen[s as usize] {
                seen[s as usize] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let mut visit = |n: u32| {
                if !seen[n as usize] {
                    seen[n as usize] = true;
                    queue.push_back(n);
                }
            };
            match &filtered {
                Some(adj) => {
                    for n in &adj[v as usize] {
                        visit(*n);
                    }
                }
                None => {
                    for (n, _) in &self.adjacency[v as usize] {
                        visit(*n);
                    }
                }
            }
        }
        seen
    }

    fn degree(&self, v: usize) -> f64 {
        self.adjacency[v].iter().map(|(_, w)| w).sum()
    }
}

/// Solved potentials and derived quantities.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    /// Potential per vertex; source 1, sinks 0.
    pub potentials: Vec<f64>,
    /// Oriented flow per edge in the order of `edges()`:
    /// `w (phi_u - phi_v)`.
    pub flows: Vec<f64>,
    /// Net current out of the source.
    pub effective_conductance: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl TiltedNetwork {
    /// Effective conductance between source and sink set by conjugate
    /// gradient with Jacobi preconditioning. A source disconnected from
    /// every sink yields conductance exactly 0.
    pub fn solve_dirichlet(&self, tol: f64) -> Result<DirichletSolution, NetworkError> {
        let reach_sinks = self.reachable_from(&self.sinks, &vec![false; self.edges.len()]);
        if !reach_sinks[self.source as usize] {
            // Disconnected: unit potential on the source component.
            let reach_source =
                self.reachable_from(&[self.source], &vec![false; self.edges.len()]);
            let potentials: Vec<f64> =
                reach_source.iter().map(|r| if *r { 1.0 } else { 0.0 }).collect();
            let flows = vec![0.0; self.edges.len()];
            return Ok(DirichletSolution {
                potentials,
                flows,
                effective_conductance: 0.0,
                iterations: 0,
                residual: 0.0,
            });
        }
        let mut fixed: HashMap<u32, f64> = HashMap::new();
        fixed.insert(self.source, 1.0);
        for s in &self.sinks {
            fixed.insert(*s, 0.0);
        }
        let (potentials, iterations, residual) = self.conjugate_gradient(&fixed, tol)?;
        Ok(self.finish_solution(potentials, iterations, residual))
    }

    /// Dense Gaussian-elimination oracle for networks of at most 2000
    /// vertices; same contract as [`TiltedNetwork::solve_dirichlet`].
    pub fn solve_dirichlet_dense(&self) -> Result<DirichletSolution, NetworkError> {
        assert!(self.vertex_count <= 2000, "dense oracle capped at 2000 vertices");
        let reach_sinks = self.reachable_from(&self.sinks, &vec![false; self.edges.len()]);
        if !reach_sinks[self.source as usize] {
            return self.solve_dirichlet(1e-12);
        }
        let mut fixed: HashMap<u32, f64> = HashMap::new();
        fixed.insert(self.source, 1.0);
        for s in &self.sinks {
            fixed.insert(*s, 0.0);
        }
        let unknowns: Vec<usize> =
            (0..self.vertex_count).filter(|v| !fixed.contains_key(&(*v as u32))).collect();
        let pos: HashMap<usize, usize> =
            unknowns.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let n = unknowns.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for (i, &v) in unknowns.iter().enumerate() {
            a[i][i] = self.degree(v);
            for (nb, w) in &self.adjacency[v] {
                if let Some(phi) = fixed.get(nb) {
                    b[i] += w * phi;
                } else {
                    a[i][pos[&(*nb as usize)]] -= w;
                }
            }
        }
        let sol = solve_dense(&mut a, &mut b).ok_or(NetworkError::NonConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        })?;
        let mut potentials = vec![0.0; self.vertex_count];
        potentials[self.source as usize] = 1.0;
        for (i, &v) in unknowns.iter().enumerate() {
            potentials[v] = sol[i];
        }
        Ok(self.finish_solution(potentials, 0, 0.0))
    }

    fn finish_solution(
        &self,
        potentials: Vec<f64>,
        iterations: usize,
        residual: f64,
    ) -> DirichletSolution {
        let flows: Vec<f64> = self
            .edges
            .iter()
            .map(|(u, v, w)| w * (potentials[*u as usize] - potentials[*v as usize]))
            .collect();
        let effective_conductance: f64 = self.adjacency[self.source as usize]
            .iter()
            .map(|(n, w)| w * (1.0 - potentials[*n as usize]))
            .sum();
        DirichletSolution { potentials, flows, effective_conductance, iterations, residual }
    }

    /// Jacobi-preconditioned CG over the unknown vertices.
    fn conjugate_gradient(
        &self,
        fixed: &HashMap<u32, f64>,
        tol: f64,
    ) -> Result<(Vec<f64>, usize, f64), NetworkError> {
        let seeds: Vec<u32> = fixed.keys().copied().collect();
        let reachable = self.reachable_from(&seeds, &vec![false; self.edges.len()]);
        let unknowns: Vec<usize> = (0..self.vertex_count)
            .filter(|v| reachable[*v] && !fixed.contains_key(&(*v as u32)))
            .collect();
        let pos: HashMap<usize, usize> =
            unknowns.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let n = unknowns.len();
        let mut b = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for (i, &v) in unknowns.iter().enumerate() {
            diag[i] = self.degree(v);
            for (nb, w) in &self.adjacency[v] {
                if let Some(phi) = fixed.get(nb) {
                    b[i] += w * phi;
                }
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            for (i, &v) in unknowns.iter().enumerate() {
                let mut acc = diag[i] * x[i];
                for (nb, w) in &self.adjacency[v] {
                    if let Some(&j) = pos.get(&(*nb as usize)) {
                        acc -= w * x[j];
                    }
                }
                out[i] = acc;
            }
        };
        let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut phi = vec![0.0; self.vertex_count];
        for (v, p) in fixed {
            phi[*v as usize] = *p;
        }
        if n == 0 || norm_b == 0.0 {
            return Ok((phi, 0, 0.0));
        }
        let max_iters = 10 * self.vertex_count;
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let mut residual = 1.0;
        let mut iterations = 0;
        for it in 0..max_iters {
            iterations = it + 1;
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            residual = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
            if residual <= tol {
                for (i, &v) in unknowns.iter().enumerate() {
                    phi[v] = x[i];
                }
                return Ok((phi, iterations, residual));
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(NetworkError::NonConvergence { residual, iterations })
    }

    /// Nash-Williams bound from disjoint cut sets (edge index lists): each
    /// cut must separate the source from every sink; the effective
    /// conductance is at most `1 / sum_cuts 1 / (sum_{e in cut} w_e)`.
    pub fn nash_williams_bound(&self, cuts: &[Vec<usize>]) -> Result<f64, NetworkError> {
        let mut used = vec![false; self.edges.len()];
        for (ci, cut) in cuts.iter().enumerate() {
            let mut blocked = vec![false; self.edges.len()];
            for &e in cut {
                if e >= self.edges.len() || used[e] {
                    return Err(NetworkError::InvalidCut { cut_index: ci });
                }
                used[e] = true;
                blocked[e] = true;
            }
            let reach = self.reachable_from(&[self.source], &blocked);
            if self.sinks.iter().any(|s| reach[*s as usize]) {
                return Err(NetworkError::InvalidCut { cut_index: ci });
            }
        }
        let mut inv_sum = 0.0;
        for cut in cuts {
            let cut_weight: f64 = cut.iter().map(|&e| self.edges[e].2).sum();
            inv_sum += 1.0 / cut_weight;
        }
        Ok(1.0 / inv_sum)
    }
}

/// Dense linear solve by Gaussian elimination with partial pivoting;
/// consumes its inputs.
pub fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Probability that the walk started at `x` hits the hyperplane
/// `x.e1 - left_offset` before `x.e1 + right_offset`, for the chain
/// restricted to the box of the given half height around `x`.
///
/// Computed by block elimination ordered by level: the blocks form an
/// M-matrix system whose elimination combines nonnegative quantities, so
/// probabilities as small as `e^{-2 lambda ell}` keep relative accuracy
/// (an iterative solve would drown them in its absolute error floor).
pub fn exit_probability_exact<F: Conductances>(
    field: &F,
    lambda: f64,
    x: &LatticePoint,
    left_offset: i64,
    right_offset: i64,
    half_height: i64,
) -> Result<f64, NetworkError> {
    assert!(left_offset > 0 && right_offset > 0 && half_height >= 0);
    let d = field.dim();
    assert!(d == 1 || d == 2, "exit probabilities support d = 1 and d = 2");
    let x1 = x.coords()[0];
    let y0 = if d == 2 { x.coords()[1] } else { 0 };
    let left = x1 - left_offset;
    let right = x1 + right_offset;
    let height = if d == 2 { (2 * half_height + 1) as usize } else { 1 };
    let y_min = y0 - half_height;

    // Edge weight with the tilt factored at the start level.
    let hweight = |cx: i64, cy: i64| -> f64 {
        let base = if d == 2 { vec![cx, cy] } else { vec![cx] };
        let omega = field.conductance_at(&base, 0);
        omega * (lambda * ((2 * (cx - x1) + 1) as f64)).exp()
    };
    let vweight = |cx: i64, cy: i64| -> f64 {
        let omega = field.conductance_at(&[cx, cy], 1);
        omega * (lambda * ((2 * (cx - x1)) as f64)).exp()
    };

    // phi = 1 on level `left`, 0 on level `right`; interior levels
    // left+1 .. right-1 solved by forward block elimination.
    let levels: Vec<i64> = (left + 1..right).collect();
    let h = height;
    // E_k (h x h) and f_k (h) with phi_k = E_k phi_{k+1} + f_k.
    let mut e_prev = vec![vec![0.0; h]; h];
    let mut f_prev = vec![0.0; h];
    let mut first = true;
    let mut blocks: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::with_capacity(levels.len());
    for &level in &levels {
        // Per-row data at this level.
        let mut a_left = vec![0.0; h]; // weight to level-1 per row
        let mut b_right = vec![0.0; h]; // weight to level+1 per row
        let mut v_up = vec![0.0; h]; // weight to row+1 (same level)
        for (row, item) in v_up.iter_mut().enumerate().take(h) {
            let cy = y_min + row as i64;
            a_left[row] = hweight(level - 1, cy);
            b_right[row] = hweight(level, cy);
            if d == 2 && row + 1 < h {
                *item = vweight(level, cy);
            }
        }
        // M = D - A E_prev where D couples rows within the level.
        let mut m = vec![vec![0.0; h]; h];
        for row in 0..h {
            let mut deg = a_left[row] + b_right[row];
            if row + 1 < h {
                deg += v_up[row];
            }
            if row > 0 {
                deg += v_up[row - 1];
            }
            m[row][row] = deg;
            if row + 1 < h {
                m[row][row + 1] = -v_up[row];
                m[row + 1][row] = -v_up[row];
            }
        }
        let mut rhs_base = vec![0.0; h];
        if first {
            // Boundary level carries potential 1 on every row.
            for row in 0..h {
                rhs_base[row] = a_left[row];
            }
        } else {
            for row in 0..h {
                for col in 0..h {
                    m[row][col] -= a_left[row] * e_prev[row][col];
                }
                rhs_base[row] = a_left[row] * f_prev[row];
            }
        }
        // Solve M [E_k | f_k] = [diag(B) | rhs_base].
        // Columns of E_k: M e_col = B e_basis.
        let mut e_new = vec![vec![0.0; h]; h];
        let mut m_lu = m.clone();
        let mut rhs_cols: Vec<Vec<f64>> = Vec::with_capacity(h + 1);
        for col in 0..h {
            let mut rhs = vec![0.0; h];
            rhs[col] = b_right[col];
            rhs_cols.push(rhs);
        }
        rhs_cols.push(rhs_base);
        let sols = solve_dense_multi(&mut m_lu, &mut rhs_cols).ok_or(
            NetworkError::NonConvergence { residual: f64::INFINITY, iterations: 0 },
        )?;
        for (col, sol) in sols.iter().enumerate().take(h) {
            for row in 0..h {
                e_new[row][col] = sol[row];
            }
        }
        let f_new = sols[h].clone();
        blocks.push((e_new.clone(), f_new.clone()));
        e_prev = e_new;
        f_prev = f_new;
        first = false;
    }
    // Back substitution from the right absorbing face (phi = 0).
    let mut phi_next = vec![0.0; h];
    let mut phi_at_x = None;
    for (idx, &level) in levels.iter().enumerate().rev() {
        let (e_k, f_k) = &blocks[idx];
        let mut phi = vec![0.0; h];
        for row in 0..h {
            let mut acc = f_k[row];
            for col in 0..h {
                acc += e_k[row][col] * phi_next[col];
            }
            phi[row] = acc;
        }
        if level == x1 {
            let row = (y0 - y_min) as usize;
            phi_at_x = Some(phi[row]);
        }
        phi_next = phi;
    }
    phi_at_x.ok_or(NetworkError::BadBoundary {
        message: String::from("start level outside the open interval"),
    })
}

/// Gaussian elimination with partial pivoting for several right-hand
/// sides sharing one matrix.
fn solve_dense_multi(a: &mut [Vec<f64>], rhs: &mut [Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        for r in rhs.iter_mut() {
            r.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            for r in rhs.iter_mut() {
                r[row] -= factor * r[col];
            }
        }
    }
    let mut out = Vec::with_capacity(rhs.len());
    for r in rhs.iter() {
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = r[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        out.push(x);
    }
    Some(out)
}

/// One violation of the heat-kernel bound.
#[derive(Debug, Clone)]
pub struct CvViolation {
    pub step: usize,
    pub site: Vec<i64>,
    pub log_probability: f64,
    pub log_bound: f64,
}

/// Result of the exact dynamic-programming heat-kernel check.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub checked: usize,
    pub violations: Vec<CvViolation>,
    /// Max of `log p - log bound` over all checked pairs (negative when
    /// the bound holds strictly).
    pub max_log_ratio: f64,
}

/// Verify `P^x(X_n = y) <= 2 sqrt(pi(y)/pi(x)) exp(-d(x,y)^2 / 2n)` for
/// all `n <= n_max` by exact forward dynamic programming over the
/// reachable ball; `d` is the l1 lattice distance (all conductances must
/// be positive, so sampled laws only, not projected fields).
pub fn carne_varopoulos_check<F: Conductances>(
    field: &F,
    lambda: f64,
    x: &LatticePoint,
    n_max: usize,
) -> CvReport {
    assert!(n_max <= 30, "exact DP capped at 30 steps");
    let kernel = BiasedKernel::new(field, lambda);
    let d = kernel.dim();
    let ln_pi_x = kernel.reversible_measure(x).ln();
    let mut probs: HashMap<Vec<i64>, f64> = HashMap::new();
    probs.insert(x.coords().to_vec(), 1.0);
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut max_log_ratio = f64::NEG_INFINITY;
    for n in 1..=n_max {
        let mut next: HashMap<Vec<i64>, f64> = HashMap::with_capacity(probs.len() * 2);
        for (site, p) in &probs {
            let point = LatticePoint::new(site.clone());
            let dist = kernel.step_distribution(&point).expect("positive conductances");
            for (k, q) in dist.probs().iter().enumerate() {
                if *q == 0.0 {
                    continue;
                }
                let dir = crate::lattice::Direction::from_index(k, d);
                let mut target = site.clone();
                target[dir.axis] += dir.sign as i64;
                *next.entry(target).or_insert(0.0) += p * q;
            }
        }
        probs = next;
        for (site, p) in &probs {
            let l1: i64 =
                site.iter().zip(x.coords()).map(|(a, b)| (a - b).abs()).sum();
            let point = LatticePoint::new(site.clone());
            let ln_pi_y = kernel.reversible_measure(&point).ln();
            let log_bound = (2.0f64).ln() + 0.5 * (ln_pi_y - ln_pi_x)
                - (l1 * l1) as f64 / (2.0 * n as f64);
            let log_p = p.ln();
            checked += 1;
            let ratio = log_p - log_bound;
            if ratio > max_log_ratio {
                max_log_ratio = ratio;
            }
            if ratio > 1e-9 {
                violations.push(CvViolation {
                    step: n,
                    site: site.clone(),
                    log_probability: log_p,
                    log_bound,
                });
            }
        }
    }
    CvReport { checked, violations, max_log_ratio }
}

/// Escape statistics from a kappa-surrounded pocket.
#[derive(Debug, Clone)]
pub struct KappaEscapeReport {
    pub pocket: Vec<LatticePoint>,
    pub diameter: i64,
    /// Expected exit time from the query site (0 when the pocket is empty).
    pub mean_exit_time: f64,
    pub var_exit_time: f64,
}

/// Exit-time moments of the walk from the kappa pocket of `x`, by an
/// absorbing-chain linear solve over the pocket sites.
pub fn kappa_component_escape<F: Conductances>(
    field: &F,
    lambda: f64,
    x: &LatticePoint,
    rect: &Rect,
) -> Result<KappaEscapeReport, traps::Inconclusive> {
    let pocket = traps::kappa_component(field, x, rect)?;
    if pocket.is_empty() {
        return Ok(KappaEscapeReport {
            pocket,
            diameter: 0,
            mean_exit_time: 0.0,
            var_exit_time: 0.0,
        });
    }
    let kernel = BiasedKernel::new(field, lambda);
    let index: HashMap<&[i64], usize> =
        pocket.iter().enumerate().map(|(i, p)| (p.coords(), i)).collect();
    let n = pocket.len();
    // Transition matrix restricted to the pocket.
    let mut p_mat = vec![vec![0.0; n]; n];
    for (i, site) in pocket.iter().enumerate() {
        let dist = kernel.step_distribution(site).expect("pocket sites keep kappa edges");
        for (k, q) in dist.probs().iter().enumerate() {
            let dir = crate::lattice::Direction::from_index(k, 2);
            let nb = site.neighbor(dir);
            if let Some(&j) = index.get(nb.coords()) {
                p_mat[i][j] += q;
            }
        }
    }
    // (I - P) m = 1
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 - p_mat[i][j] } else { -p_mat[i][j] };
        }
    }
    let mut ones = vec![1.0; n];
    let mut a1 = a.clone();
    let m = solve_dense(&mut a1, &mut ones).expect("absorbing chain is nonsingular");
    // (I - P) s = 1 + 2 P m, then Var = s - m^2.
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        rhs[i] = 1.0 + 2.0 * (0..n).map(|j| p_mat[i][j] * m[j]).sum::<f64>();
    }
    let s = solve_dense(&mut a, &mut rhs).expect("absorbing chain is nonsingular");
    let i0 = index[x.coords()];
    Ok(KappaEscapeReport {
        diameter: traps::linf_diameter(&pocket),
        pocket,
        mean_exit_time: m[i0],
        var_exit_time: (s[i0] - m[i0] * m[i0]).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConductanceField, EnvironmentLaw, OverlayField};
    use crate::rng::CounterRng;
    use crate::stats;

    fn homogeneous(d: usize) -> ConductanceField {
        ConductanceField::new(EnvironmentLaw::Homogeneous { c: 1.0 }, d, 0).unwrap()
    }

    #[test]
    fn series_and_parallel_laws() {
        // Two edges in series: C = (1/c1 + 1/c2)^{-1}.
        let net = TiltedNetwork::new(
            3,
            vec![(0, 1, 2.0), (1, 2, 3.0)],
            0,
            vec![2],
        )
        .unwrap();
        let sol = net.solve_dirichlet(1e-12).unwrap();
        let expect = 1.0 / (1.0 / 2.0 + 1.0 / 3.0);
        assert!((sol.effective_conductance - expect).abs() < 1e-12);

        // Two parallel unit edges: C = 2.
        let net = TiltedNetwork::new(
            2,
            vec![(0, 1, 1.0), (0, 1, 1.0)],
            0,
            vec![1],
        )
        .unwrap();
        let sol = net.solve_dirichlet(1e-12).unwrap();
        assert!((sol.effective_conductance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_source_reports_zero() {
        let net = TiltedNetwork::new(4, vec![(0, 1, 1.0), (2, 3, 1.0)], 0, vec![3]).unwrap();
        let sol = net.solve_dirichlet(1e-12).unwrap();
        assert_eq!(sol.effective_conductance, 0.0);
        assert!(sol.flows.iter().all(|f| *f == 0.0));
    }

    fn random_grid_network(seed: u64, nx: i64, ny: i64) -> TiltedNetwork {
        let mut rng = CounterRng::walk_stream(seed, 31);
        let idx = |x: i64, y: i64| -> u32 { (x * ny + y) as u32 };
        let mut edges = Vec::new();
        for x in 0..nx {
            for y in 0..ny {
                if x + 1 < nx {
                    edges.push((idx(x, y), idx(x + 1, y), 0.2 + rng.next_unit()));
                }
                if y + 1 < ny {
                    edges.push((idx(x, y), idx(x, y + 1), 0.2 + rng.next_unit()));
                }
            }
        }
        let sinks: Vec<u32> = (0..ny).map(|y| idx(nx - 1, y)).collect();
        TiltedNetwork::new((nx * ny) as usize, edges, idx(0, 0), sinks).unwrap()
    }

    #[test]
    fn cg_matches_dense_oracle_on_grid() {
        // 5x5 unit grid, corner to the opposite side.
        let idx = |x: i64, y: i64| -> u32 { (x * 5 + y) as u32 };
        let mut edges = Vec::new();
        for x in 0..5i64 {
            for y in 0..5i64 {
                if x + 1 < 5 {
                    edges.push((idx(x, y), idx(x + 1, y), 1.0));
                }
                if y + 1 < 5 {
                    edges.push((idx(x, y), idx(x, y + 1), 1.0));
                }
            }
        }
        let sinks: Vec<u32> = (0..5).map(|y| idx(4, y)).collect();
        let net = TiltedNetwork::new(25, edges, idx(0, 0), sinks).unwrap();
        let cg = net.solve_dirichlet(1e-12).unwrap();
        let dense = net.solve_dirichlet_dense().unwrap();
        assert!(
            (cg.effective_conductance - dense.effective_conductance).abs() < 1e-8,
            "cg {} vs dense {}",
            cg.effective_conductance,
            dense.effective_conductance
        );
        for (a, b) in cg.potentials.iter().zip(&dense.potentials) {
            assert!((a - b).abs() < 1e-8);
        }
        // Interior harmonicity and flow conservation.
        for v in 0..25u32 {
            if v == net.source() || net.sinks().contains(&v) {
                continue;
            }
            let mut net_flow = 0.0;
            for (i, (a, b, _)) in net.edges().iter().enumerate() {
                if *a == v {
                    net_flow -= cg.flows[i];
                }
                if *b == v {
                    net_flow += cg.flows[i];
                }
            }
            assert!(net_flow.abs() < 1e-9, "flow imbalance {net_flow} at {v}");
        }
        // Energy identity: sum w (dphi)^2 = C_eff for a unit potential gap.
        let energy: f64 = net
            .edges()
            .iter()
            .zip(&cg.flows)
            .map(|((_, _, w), f)| f * f / w)
            .sum();
        assert!((energy - cg.effective_conductance).abs() < 1e-8);
    }

    #[test]
    fn rayleigh_monotonicity_under_weight_increase() {
        let mut rng = CounterRng::walk_stream(9, 9);
        for seed in 0..20 {
            let net = random_grid_network(seed, 4, 4);
            let base = net.solve_dirichlet(1e-12).unwrap().effective_conductance;
            // Increase a random edge.
            let mut edges = net.edges().to_vec();
            let which = (rng.next_u64() % edges.len() as u64) as usize;
            edges[which].2 *= 1.0 + rng.next_unit();
            let bumped = TiltedNetwork::new(
                net.vertex_count(),
                edges,
                net.source(),
                net.sinks().to_vec(),
            )
            .unwrap();
            let up = bumped.solve_dirichlet(1e-12).unwrap().effective_conductance;
            assert!(up >= base - 1e-12, "Rayleigh violated: {base} -> {up}");
        }
    }

    #[test]
    fn nash_williams_bounds_exact_conductance() {
        // Series pair with the first edge as a cut: bound = c1 >= C_eff.
        let net =
            TiltedNetwork::new(3, vec![(0, 1, 2.0), (1, 2, 3.0)], 0, vec![2]).unwrap();
        let bound = net.nash_williams_bound(&[vec![0]]).unwrap();
        assert!((bound - 2.0).abs() < 1e-12);
        let exact = net.solve_dirichlet(1e-12).unwrap().effective_conductance;
        assert!(bound >= exact);

        // Both singleton cuts: series law becomes exact.
        let both = net.nash_williams_bound(&[vec![0], vec![1]]).unwrap();
        assert!((both - exact).abs() < 1e-12);

        // A non-separating cut is rejected.
        let net2 = TiltedNetwork::new(
            3,
            vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            0,
            vec![2],
        )
        .unwrap();
        assert!(matches!(
            net2.nash_williams_bound(&[vec![0]]),
            Err(NetworkError::InvalidCut { cut_index: 0 })
        ));

        // Bound >= exact on random networks, using the sink-edge cut.
        for seed in 0..100 {
            let net = random_grid_network(seed, 4, 3);
            let exact = net.solve_dirichlet(1e-12).unwrap().effective_conductance;
            let cut: Vec<usize> = net
                .edges()
                .iter()
                .enumerate()
                .filter(|(_, (a, b, _))| {
                    net.sinks().contains(a) != net.sinks().contains(b)
                })
                .map(|(i, _)| i)
                .collect();
            let bound = net.nash_williams_bound(&[cut]).unwrap();
            assert!(
                bound >= exact - 1e-10,
                "seed {seed}: bound {bound} below exact {exact}"
            );
        }
    }

    #[test]
    fn lateral_layer_sum_scales_like_the_bound() {
        // The single-cut layer sum e^{-lambda ell} sum_i e^{2 lambda (i+1)}
        // over i = -ell..ell/3 matches the e^{lambda (2x - ell/3)} scaling:
        // the ratio to that scale stays within constant factors as ell
        // grows (geometric series oracle).
        let lambda = 1.1;
        let mut ratios = Vec::new();
        for ell in [6i64, 12, 24, 48] {
            let mut sum = 0.0;
            for i in -ell..=ell / 3 {
                sum += (2.0 * lambda * (i + 1) as f64).exp();
            }
            let value = (-(lambda) * ell as f64).exp() * sum;
            let scale = (lambda * (-(ell as f64) / 3.0)).exp();
            ratios.push(value / scale);
        }
        // Closed form of the geometric series: the ratio converges to
        // e^{2 lambda} / (1 - e^{-2 lambda}).
        let limit = (2.0 * lambda).exp() / (1.0 - (-2.0 * lambda).exp());
        for r in &ratios {
            assert!((r / limit - 1.0).abs() < 0.2, "ratio {r} vs limit {limit}");
        }
    }

    #[test]
    fn exit_probability_symmetric_and_gamblers_ruin() {
        // Unbiased symmetric interval in d = 1: exactly 1/2.
        let f1 = homogeneous(1);
        let p = exit_probability_exact(&f1, 0.0, &LatticePoint::origin(1), 8, 8, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-12);

        // Biased one-dimensional segment: gambler's ruin closed form with
        // ratio r = e^{-2 lambda}:
        // P(hit -l before +m) = (1 - r^m) / (r^{-l}... computed via
        // harmonic h(x) = r^x: (h(0) - h(m)) / (h(-l) - h(m)).
        for lambda in [0.3, 0.8] {
            for (l, m) in [(6i64, 2i64), (5, 5), (9, 3)] {
                let r = (-2.0 * lambda).exp();
                let h = |k: i64| r.powi(k as i32);
                let expect = (h(0) - h(m)) / (h(-l) - h(m));
                let got =
                    exit_probability_exact(&f1, lambda, &LatticePoint::origin(1), l, m, 0)
                        .unwrap();
                assert!(
                    (got - expect).abs() < 1e-12 * expect.max(1e-30),
                    "lambda {lambda} l {l} m {m}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn exit_probability_matches_dense_solve_in_2d() {
        // Small two-dimensional box: block elimination against the dense
        // oracle on the same restricted network.
        let field = ConductanceField::new(
            EnvironmentLaw::TwoPoint { p: 0.9, kappa: 0.3 },
            2,
            17,
        )
        .unwrap();
        let lambda = 0.6;
        let x = LatticePoint::origin(2);
        let (l, m, hh) = (4i64, 2i64, 3i64);
        let got = exit_probability_exact(&field, lambda, &x, l, m, hh).unwrap();

        let rect = Rect::new(-l, m, -hh, hh);
        let (net, index) = TiltedNetwork::from_field_box(
            &field,
            lambda,
            &rect,
            (0, 0),
            |cx, _| cx == m,
        )
        .unwrap();
        // Dense solve with boundary: left face at potential 1.
        // Recreate via a two-terminal trick: join the left face to a super
        // source by huge edges, which pins its potential near 1.
        let mut edges = net.edges().to_vec();
        let super_source = net.vertex_count() as u32;
        for ((cx, _cy), &i) in index.iter() {
            if *cx == -l {
                edges.push((super_source, i, 1e12));
            }
        }
        let net2 = TiltedNetwork::new(
            net.vertex_count() + 1,
            edges,
            super_source,
            net.sinks().to_vec(),
        )
        .unwrap();
        let sol = net2.solve_dirichlet_dense().unwrap();
        let at_x = sol.potentials[index[&(0, 0)] as usize];
        assert!(
            (got - at_x).abs() < 1e-6,
            "block elimination {got} vs dense {at_x}"
        );
    }

    #[test]
    fn exit_probability_decays_with_the_bias_exponent() {
        // Good start in a dilute two-point field: log p vs ell slope is
        // at most -lambda/3 (the homogeneous rate is -2 lambda, far below).
        let field = ConductanceField::new(
            EnvironmentLaw::TwoPoint { p: 0.95, kappa: 0.01 },
            2,
            23,
        )
        .unwrap();
        let lambda = 1.5;
        let x = LatticePoint::origin(2);
        assert!(traps::is_good_point(&field, &x, 32));
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for ell in [6i64, 12, 24] {
            let p = exit_probability_exact(&field, lambda, &x, ell, ell / 3, 2 * ell)
                .unwrap();
            assert!(p > 0.0);
            xs.push(ell as f64);
            ys.push(p.ln());
        }
        let fit = stats::linear_fit(&xs, &ys).unwrap();
        assert!(
            fit.slope <= -lambda / 3.0 + 3.0 * fit.slope_se,
            "slope {} above -lambda/3",
            fit.slope
        );
    }

    #[test]
    fn exit_probability_invariant_under_weight_scaling() {
        // Uniform conductance scaling leaves probabilities unchanged.
        let a = ConductanceField::new(EnvironmentLaw::Homogeneous { c: 1.0 }, 2, 0).unwrap();
        let b = ConductanceField::new(EnvironmentLaw::Homogeneous { c: 7.5 }, 2, 0).unwrap();
        let pa = exit_probability_exact(&a, 0.9, &LatticePoint::origin(2), 6, 2, 8).unwrap();
        let pb = exit_probability_exact(&b, 0.9, &LatticePoint::origin(2), 6, 2, 8).unwrap();
        assert!((pa - pb).abs() < 1e-13);
    }

    #[test]
    fn exit_probability_matches_monte_carlo() {
        // Dirichlet exit probabilities against hitting frequencies of the
        // box-restricted chain, 20 random configurations.
        let mut failures = 0;
        for seed in 0..20u64 {
            let field = ConductanceField::new(
                EnvironmentLaw::UniformElliptic {
                    delta: 0.4,
                    marginal: crate::env::Marginal::UniformInterval,
                },
                2,
                seed,
            )
            .unwrap();
            let lambda = 0.25;
            let (l, m, hh) = (3i64, 3i64, 4i64);
            let exact =
                exit_probability_exact(&field, lambda, &LatticePoint::origin(2), l, m, hh)
                    .unwrap();
            // Monte Carlo on the restricted chain.
            let kernel = BiasedKernel::new(&field, lambda);
            let mut rng = CounterRng::walk_stream(800 + seed, 0);
            let trials = 4000;
            let mut hits = 0;
            for _ in 0..trials {
                let mut pos = vec![0i64, 0i64];
                loop {
                    // restricted step: renormalize over in-box neighbors
                    let mut w = vec![0.0; 4];
                    let total = kernel.fill_weights(&pos, &mut w);
                    debug_assert!(total > 0.0);
                    // zero out moves leaving the box
                    let moves = [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)];
                    let mut masked = 0.0;
                    for (k, (dx, dy)) in moves.iter().enumerate() {
                        let nx = pos[0] + dx;
                        let ny = pos[1] + dy;
                        if !(-l..=m).contains(&nx) || !(-hh..=hh).contains(&ny) {
                            w[k] = 0.0;
                        }
                        masked += w[k];
                    }
                    let u = rng.next_uniform() * masked;
                    let mut acc = 0.0;
                    let mut cell = 3;
                    for (k, wk) in w.iter().enumerate() {
                        acc += wk;
                        if u <= acc && *wk > 0.0 {
                            cell = k;
                            break;
                        }
                    }
                    pos[0] += moves[cell].0;
                    pos[1] += moves[cell].1;
                    if pos[0] == -l {
                        hits += 1;
                        break;
                    }
                    if pos[0] == m {
                        break;
                    }
                }
            }
            let freq = hits as f64 / trials as f64;
            let se = (exact * (1.0 - exact) / trials as f64).sqrt().max(1e-4);
            if (freq - exact).abs() > 3.0 * se {
                failures += 1;
            }
        }
        assert!(failures <= 2, "{failures} of 20 configurations outside 3 se");
    }

    #[test]
    fn carne_varopoulos_holds_by_exact_dp() {
        // Single step: p(x, e) <= 2 sqrt(pi(x+e)/pi(x)) e^{-1/2} sitewise.
        let f = homogeneous(2);
        let rep = carne_varopoulos_check(&f, 0.0, &LatticePoint::origin(2), 1);
        assert!(rep.violations.is_empty());

        // Ten steps unbiased: max ratio strictly below 1 (log below 0).
        let rep = carne_varopoulos_check(&f, 0.0, &LatticePoint::origin(2), 10);
        assert!(rep.violations.is_empty());
        assert!(rep.max_log_ratio < 0.0);

        // Biased random environment.
        let field = ConductanceField::new(
            EnvironmentLaw::TwoPoint { p: 0.9, kappa: 0.2 },
            2,
            3,
        )
        .unwrap();
        let rep = carne_varopoulos_check(&field, 0.8, &LatticePoint::new(vec![1, -1]), 12);
        assert!(rep.violations.is_empty(), "violations: {:?}", rep.violations);

        // Unreachable sites by parity carry probability 0 while the bound
        // stays positive: implicitly covered, the DP never creates them.
        assert!(rep.checked > 0);
    }

    #[test]
    fn kappa_pocket_escape_times() {
        // Site with an open edge: empty pocket, trivial statistics.
        let f = homogeneous(2);
        let rep = kappa_component_escape(
            &f,
            0.5,
            &LatticePoint::origin(2),
            &Rect::centered(&[0, 0], 8),
        )
        .unwrap();
        assert_eq!(rep.mean_exit_time, 0.0);
        assert!(rep.pocket.is_empty());

        // Handcrafted two-site pocket at kappa = 0.1, lambda = 0.5: the
        // linear solve must match plain Monte Carlo within 3 se.
        let base = ConductanceField::new(
            EnvironmentLaw::TwoPoint { p: 0.9999, kappa: 0.1 },
            2,
            11,
        )
        .unwrap();
        let mut g = OverlayField::new(base);
        for (b, axis) in [
            ([0i64, 0i64], 0usize),
            ([-1, 0], 0),
            ([0, 0], 1),
            ([0, -1], 1),
            ([1, 0], 0),
            ([1, 0], 1),
            ([1, -1], 1),
        ] {
            g.set(b.to_vec(), axis, 0.1);
        }
        let lambda = 0.5;
        let rep = kappa_component_escape(
            &g,
            lambda,
            &LatticePoint::origin(2),
            &Rect::centered(&[0, 0], 8),
        )
        .unwrap();
        assert_eq!(rep.pocket.len(), 2);
        assert!(rep.mean_exit_time > 0.0);

        let kernel = BiasedKernel::new(&g, lambda);
        let mut rng = CounterRng::walk_stream(4242, 0);
        let trials = 20_000;
        let mut stat = stats::RunningStat::new();
        for _ in 0..trials {
            let mut sim =
                crate::kernel::WalkSim::new(&kernel, LatticePoint::origin(2));
            let mut t = 0u64;
            loop {
                sim.step_with(rng.next_uniform()).unwrap();
                t += 1;
                let pos = sim.position();
                let inside = rep
                    .pocket
                    .iter()
                    .any(|p| p.coords() == pos);
                if !inside {
                    break;
                }
            }
            stat.push(t as f64);
        }
        let se = stat.std_error();
        assert!(
            (stat.mean() - rep.mean_exit_time).abs() < 3.0 * se,
            "mc {} vs solve {} (se {se})",
            stat.mean(),
            rep.mean_exit_time
        );
        assert!(rep.var_exit_time > 0.0);
    }
}
