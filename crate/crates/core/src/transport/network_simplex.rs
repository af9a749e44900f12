//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Spanning-tree bookkeeping (parent, thread, successor counts) follows the
//! classic LEMON layout with an artificial root joined to every node; entering
//! arcs are chosen by block search.

use crate::{Error, Result};

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Optimal flow together with node potentials.
#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// Nonzero flows `(i, j, mass)` indexed in the compressed problem.
    pub flows: Vec<(usize, usize, f64)>,
    /// Source-side dual variables; the target side is recovered by the caller.
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

struct Simplex<'a> {
    n1: usize,
    n2: usize,
    cost: &'a [f64],
    arc_num: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    dirty_revs: Vec<usize>,
    block_size: usize,
    next_arc: usize,
    tolerance: f64,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let (n1, n2) = (supply.len(), demand.len());
        let node_num = n1 + n2;
        let arc_num = n1 * n2;
        let all_arcs = arc_num + node_num;
        let max_cost = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let art = (max_cost + 1.0) * node_num as f64;
        let mut s = Simplex {
            n1,
            n2,
            cost,
            arc_num,
            source: vec![0; all_arcs],
            target: vec![0; all_arcs],
            art_cost: vec![0.0; node_num],
            flow: vec![0.0; all_arcs],
            state: vec![STATE_LOWER; all_arcs],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: ((arc_num as f64).sqrt() as usize).max(10),
            next_arc: 0,
            tolerance: 1e-14 * (1.0 + max_cost),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };
        for i in 0..n1 {
            for j in 0..n2 {
                s.source[i * n2 + j] = i;
                s.target[i * n2 + j] = n1 + j;
            }
        }
        let root = node_num;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        for u in 0..node_num {
            let e = arc_num + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            let sup = if u < n1 { supply[u] } else { -demand[u - n1] };
            if sup >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.source[e] = u;
                s.target[e] = root;
                s.flow[e] = sup;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art;
                s.source[e] = root;
                s.target[e] = u;
                s.flow[e] = -sup;
                s.art_cost[u] = art;
            }
        }
        s
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[e]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        let (i, j) = (e / self.n2, e % self.n2);
        self.state[e] as f64 * (self.cost[e] + self.pi[i] - self.pi[self.n1 + j])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = 0.0;
        let mut cnt = self.block_size;
        let m = self.arc_num;
        let mut e = self.next_arc;
        for _ in 0..m {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < -self.tolerance {
                    self.next_arc = (e + 1) % m;
                    return true;
                }
                cnt = self.block_size;
            }
            e += 1;
            if e == m {
                e = 0;
            }
        }
        if min < -self.tolerance {
            self.next_arc = (self.in_arc + 1) % m;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source[self.in_arc], self.target[self.in_arc])
        } else {
            (self.target[self.in_arc], self.source[self.in_arc])
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = self.state[self.in_arc] as f64 * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            u = self.target[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join) = (self.u_in, self.v_in, self.u_out, self.join);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source[self.in_arc] { DIR_UP } else { DIR_DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != NONE && u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != NONE && u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in] - self.pi[self.u_in]
            - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}

/// Solves `min Σ C_ij π_ij` over couplings of `supply` and `demand` (all entries > 0).
///
/// `cost` is row-major `supply.len() × demand.len()`.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64], max_iter: usize) -> Result<Solution> {
    let (n1, n2) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), n1 * n2);
    let mut s = Simplex::new(supply, demand, cost);
    let mut iterations = 0;
    while s.find_entering_arc() {
        if iterations >= max_iter {
            let residual = s.reduced(s.in_arc);
            return Err(Error::Convergence {
                iterations,
                residual,
            });
        }
        s.find_join_node();
        if !s.find_leaving_arc() {
            return Err(Error::Numerical("transport problem reported unbounded".into()));
        }
        s.change_flow();
        s.update_tree_structure();
        s.update_potential();
        iterations += 1;
    }
    let art_flow: f64 = s.flow[s.arc_num..].iter().sum();
    let total: f64 = supply.iter().sum();
    if art_flow > 1e-9 * total.max(1.0) {
        return Err(Error::Marginal(art_flow));
    }
    let flows = (0..s.arc_num)
        .filter(|&e| s.flow[e] > 0.0)
        .map(|e| (e / n2, e % n2, s.flow[e]))
        .collect();
    Ok(Solution {
        flows,
        alpha: s.pi[..n1].iter().map(|p| -p).collect(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut a: Vec<f64> = (0..n1).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut b: Vec<f64> = (0..n2).map(|_| rng.random_range(0.1..1.0)).collect();
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        a.iter_mut().for_each(|x| *x /= sa);
        b.iter_mut().for_each(|x| *x /= sb);
        let c = (0..n1 * n2).map(|_| rng.random_range(-1.0..3.0)).collect();
        (a, b, c)
    }

    // brute force over all assignments for permutation problems
    fn best_permutation(c: &[f64], n: usize) -> f64 {
        fn rec(c: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(c, n, row + 1, used, acc + c[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(c, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn uniform_square_problems_match_assignment_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..20 {
                let c: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
                let w = vec![1.0 / n as f64; n];
                let sol = solve(&w, &w, &c, 100_000).unwrap();
                let value: f64 = sol.flows.iter().map(|&(i, j, m)| m * c[i * n + j]).sum();
                let oracle = best_permutation(&c, n) / n as f64;
                assert!((value - oracle).abs() < 1e-12, "n={n}: {value} vs {oracle}");
            }
        }
    }

    #[test]
    fn random_rectangular_problems_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n1, n2) in &[(1, 5), (5, 1), (7, 3), (20, 30), (60, 40)] {
            let (a, b, c) = random_instance(&mut rng, n1, n2);
            let sol = solve(&a, &b, &c, 1_000_000).unwrap();
            let mut rows = vec![0.0; n1];
            let mut cols = vec![0.0; n2];
            for &(i, j, m) in &sol.flows {
                rows[i] += m;
                cols[j] += m;
            }
            for (r, x) in rows.iter().zip(&a) {
                assert!((r - x).abs() < 1e-12);
            }
            for (r, x) in cols.iter().zip(&b) {
                assert!((r - x).abs() < 1e-12);
            }
            let primal: f64 = sol.flows.iter().map(|&(i, j, m)| m * c[i * n2 + j]).sum();
            let beta: Vec<f64> = (0..n2)
                .map(|j| (0..n1).map(|i| c[i * n2 + j] - sol.alpha[i]).fold(f64::INFINITY, f64::min))
                .collect();
            let dual: f64 = a.iter().zip(&sol.alpha).map(|(x, y)| x * y).sum::<f64>()
                + b.iter().zip(&beta).map(|(x, y)| x * y).sum::<f64>();
            assert!((primal - dual).abs() <= 1e-11, "{n1}x{n2}: gap {}", primal - dual);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c) = random_instance(&mut rng, 30, 30);
        assert!(matches!(solve(&a, &b, &c, 2), Err(Error::Convergence { .. })));
    }
}
