//! Exact Wasserstein-1 distance between discrete measures by min-cost
//! transport with spherical ground cost, solved by a dense network simplex.
//!
//! The instance is the classical transportation problem: sources are the
//! atoms of `mu`, sinks the atoms of `nu`, and every pair is an arc with
//! cost `sph_dist`. The tree basis is held in parent/depth arrays with
//! flows stored on the edge to the parent; pricing scans arc blocks for the
//! most negative reduced cost.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::sphere::sph_dist;
use rayon::prelude::*;

/// Default cap on `n * m` before callers must subsample.
pub const DEFAULT_PAIR_BUDGET: u64 = 4_000_000;

/// An optimal transport plan: `(source index, sink index, mass)` triples and
/// the attained objective.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub pairs: Vec<(u32, u32, f64)>,
    pub objective: f64,
}

/// Exact W1 between two discrete measures. Returns the optimal objective and
/// a primal plan whose marginals match the inputs.
pub fn w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure, pair_budget: u64) -> Result<(f64, TransportPlan)> {
    let n = mu.len();
    let m = nu.len();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("empty measure in transport".into()));
    }
    let pairs = n as u64 * m as u64;
    if pairs > pair_budget {
        return Err(Error::BudgetExceeded {
            what: "transport pairs",
            needed: pairs,
            budget: pair_budget,
            best_gap: None,
        });
    }

    // cost matrix, row-major over (source, sink)
    let cost: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = mu.atoms()[i];
            nu.atoms().iter().map(move |b| sph_dist(&a, b)).collect::<Vec<f64>>()
        })
        .collect();

    let plan = solve_transport(mu.weights(), nu.weights(), &cost, m)?;
    Ok((plan.objective, plan))
}

/// Network simplex on a dense transportation instance. `cost` is row-major
/// with `m` columns.
///
/// The basis starts from an artificial root: every source feeds the root and
/// the root feeds every sink through big-M arcs, so the initial tree is a
/// star and basis updates stay shallow.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64], m: usize) -> Result<TransportPlan> {
    let n = supply.len();
    assert_eq!(cost.len(), n * m);
    let num_nodes = n + m + 1; // sources, sinks, artificial root
    let root = n + m;
    let num_arcs = n * m;

    let mut parent = vec![usize::MAX; num_nodes];
    let mut depth = vec![0u32; num_nodes];
    let mut flow_up = vec![0.0f64; num_nodes]; // flow on the edge to the parent
    let mut potential = vec![0.0f64; num_nodes];
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); num_nodes];

    let cost_scale = cost.iter().cloned().fold(0.0, f64::max).max(1.0);
    let big_m = cost_scale * (num_nodes as f64) + 1.0;

    for v in 0..n + m {
        parent[v] = root;
        depth[v] = 1;
        adjacency[root].push(v as u32);
        adjacency[v].push(root as u32);
        if v < n {
            // canonical direction source -> root, reduced cost 0 at pi = -M
            flow_up[v] = supply[v];
            potential[v] = -big_m;
        } else {
            flow_up[v] = demand[v - n];
            potential[v] = big_m;
        }
    }

    // deterministic infinitesimal cost perturbation: breaks the massive
    // optimal-face ties of lattice-like instances so pricing converges
    // without degenerate churning. The reported objective uses raw costs,
    // so the error is at most eta * (total mass) = eta.
    let eta = cost_scale * 1e-12;
    let jitter = |a: usize| -> f64 {
        let mut x = (a as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        (x ^ (x >> 31)) as f64 / u64::MAX as f64
    };
    let cost_eff = |a: usize| -> f64 { cost[a] + eta * jitter(a) };
    let reduced = |a: usize, potential: &[f64]| -> f64 {
        let i = a / m;
        let j = n + a % m;
        cost_eff(a) + potential[i] - potential[j]
    };

    let tol = 1e-13 * cost_scale;

    let block = ((num_arcs as f64).sqrt() as usize).clamp(64, 1 << 16);
    let mut cursor = 0usize;
    let mut degenerate_streak = 0u64;
    let max_pivots = 64u64.max(200 * (num_nodes as u64)) * 4;
    let mut pivots = 0u64;

    loop {
        // pricing: scan blocks until one holds a negative reduced cost
        let mut entering = usize::MAX;
        let mut best = -tol;
        let mut scanned = 0usize;
        if degenerate_streak > 10_000 + 50 * num_nodes as u64 {
            // Bland fallback: first eligible arc by index, immune to cycling
            for a in 0..num_arcs {
                if reduced(a, &potential) < -tol {
                    entering = a;
                    break;
                }
            }
        } else {
            while scanned < num_arcs {
                let end = (cursor + block).min(num_arcs);
                for a in cursor..end {
                    let rc = reduced(a, &potential);
                    if rc < best {
                        best = rc;
                        entering = a;
                    }
                }
                scanned += end - cursor;
                cursor = if end == num_arcs { 0 } else { end };
                if entering != usize::MAX {
                    break;
                }
            }
        }
        if entering == usize::MAX {
            break; // optimal
        }
        if std::env::var_os("BROLIN_NS_STATS").is_some() && pivots % 2048 == 0 {
            eprintln!("pivot {pivots}: rc {best:.3e}");
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::RootConvergence { residual: best.abs(), tolerance: tol });
        }

        let src = entering / m;
        let snk = n + entering % m;

        // walk both endpoints to their common ancestor, tracking the
        // bottleneck among arcs whose flow decreases
        let mut delta = f64::INFINITY;
        let mut leaving = usize::MAX; // node whose parent-edge leaves
        let mut leaving_on_src_side = true;
        {
            let (mut x, mut y) = (src, snk);
            // The cycle runs src -> snk over the entering arc and back through
            // the tree. An edge decreases iff the cycle opposes its canonical
            // source->sink direction: on the src side that is every edge whose
            // child is a source, on the snk side every edge whose child is a
            // sink. First-encountered strict minimum wins, a fixed rule.
            while x != y {
                if depth[x] >= depth[y] {
                    if x < n && flow_up[x] < delta {
                        delta = flow_up[x];
                        leaving = x;
                        leaving_on_src_side = true;
                    }
                    x = parent[x];
                } else {
                    if y >= n && flow_up[y] < delta {
                        delta = flow_up[y];
                        leaving = y;
                        leaving_on_src_side = false;
                    }
                    y = parent[y];
                }
            }
        }
        if leaving == usize::MAX {
            return Err(Error::InvalidInput("transport cycle without blocking arc".into()));
        }
        if delta > 0.0 {
            degenerate_streak = 0;
        } else {
            degenerate_streak += 1;
        }

        // apply the flow change around the cycle
        {
            let (mut x, mut y) = (src, snk);
            while x != y {
                if depth[x] >= depth[y] {
                    if x < n {
                        flow_up[x] -= delta;
                    } else {
                        flow_up[x] += delta;
                    }
                    x = parent[x];
                } else {
                    if y >= n {
                        flow_up[y] -= delta;
                    } else {
                        flow_up[y] += delta;
                    }
                    y = parent[y];
                }
            }
        }

        // tree surgery: remove the leaving edge, insert the entering arc,
        // re-root the detached component at the entering endpoint inside it
        let lv_parent = parent[leaving];
        adjacency[leaving].retain(|&w| w as usize != lv_parent);
        adjacency[lv_parent].retain(|&w| w as usize != leaving);
        adjacency[src].push(snk as u32);
        adjacency[snk].push(src as u32);

        // The detached component is the subtree rooted at `leaving`, which is
        // an ancestor of whichever endpoint the bottleneck walk found it on.
        let (new_child, attach_to) = if leaving_on_src_side { (src, snk) } else { (snk, src) };

        // reverse the parent chain from new_child up to `leaving`
        {
            let mut chain = Vec::new();
            let mut v = new_child;
            while v != leaving {
                chain.push(v);
                v = parent[v];
            }
            chain.push(leaving);
            // flows ride on edges: rehang them while reversing
            for k in (1..chain.len()).rev() {
                let child = chain[k - 1];
                let par = chain[k];
                parent[par] = child;
                flow_up[par] = flow_up[child];
            }
            parent[new_child] = attach_to;
            flow_up[new_child] = delta;
        }

        // refresh depth and potential on the reattached subtree (BFS from
        // new_child); the potential shift is constant but depths change
        {
            let mut stack = vec![new_child];
            while let Some(v) = stack.pop() {
                let p = parent[v];
                depth[v] = depth[p] + 1;
                potential[v] = if v >= n {
                    potential[p] + cost_eff(p * m + (v - n))
                } else {
                    potential[p] - cost_eff(v * m + (p - n))
                };
                for &w in &adjacency[v] {
                    let w = w as usize;
                    if w != p {
                        stack.push(w);
                    }
                }
            }
        }
    }

    let mut pairs = Vec::with_capacity(num_nodes - 1);
    let mut objective = 0.0;
    for v in 0..n + m {
        let p = parent[v];
        if p == root {
            // basic artificial arcs are degenerate at the optimum
            debug_assert!(flow_up[v].abs() <= 1e-9, "artificial flow {}", flow_up[v]);
            continue;
        }
        let (i, j) = if v < n { (v, p - n) } else { (p, v - n) };
        if flow_up[v] > 0.0 {
            pairs.push((i as u32, j as u32, flow_up[v]));
            objective += flow_up[v] * cost[i * m + j];
        }
    }
    pairs.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(TransportPlan { pairs, objective })
}

/// Exhaustive reference solver, test oracle only: enumerates every spanning
/// tree of the complete bipartite graph (the vertices of the transportation
/// polytope), keeps the feasible ones, and returns the best objective.
/// Exponential; use only for supports of at most ~6 atoms per side.
pub mod reference {
    /// Minimal transport cost by brute-force vertex enumeration.
    pub fn min_cost_exhaustive(supply: &[f64], demand: &[f64], cost: &[f64], m: usize) -> f64 {
        let n = supply.len();
        let num_nodes = n + m;
        let arcs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, n + j)))
            .collect();
        let mut best = f64::INFINITY;
        let mut chosen: Vec<usize> = Vec::with_capacity(num_nodes - 1);

        // union-find over nodes
        fn find(uf: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while uf[r] != r {
                r = uf[r];
            }
            let mut c = x;
            while uf[c] != c {
                let next = uf[c];
                uf[c] = r;
                c = next;
            }
            r
        }

        fn recurse(
            start: usize,
            chosen: &mut Vec<usize>,
            uf: Vec<usize>,
            components: usize,
            arcs: &[(usize, usize)],
            supply: &[f64],
            demand: &[f64],
            cost: &[f64],
            n: usize,
            m: usize,
            best: &mut f64,
        ) {
            let need = components - 1;
            if need == 0 {
                if let Some(obj) = tree_cost(chosen, arcs, supply, demand, cost, n, m) {
                    if obj < *best {
                        *best = obj;
                    }
                }
                return;
            }
            if arcs.len() - start < need {
                return;
            }
            for a in start..arcs.len() {
                let (u, v) = arcs[a];
                let mut uf2 = uf.clone();
                let ru = find(&mut uf2, u);
                let rv = find(&mut uf2, v);
                if ru == rv {
                    continue;
                }
                uf2[ru] = rv;
                chosen.push(a);
                recurse(a + 1, chosen, uf2, components - 1, arcs, supply, demand, cost, n, m, best);
                chosen.pop();
            }
        }

        /// Solve the tree flows by leaf stripping; `None` when infeasible.
        fn tree_cost(
            chosen: &[usize],
            arcs: &[(usize, usize)],
            supply: &[f64],
            demand: &[f64],
            cost: &[f64],
            n: usize,
            m: usize,
        ) -> Option<f64> {
            let num_nodes = n + m;
            let mut balance: Vec<f64> = supply
                .iter()
                .cloned()
                .chain(demand.iter().map(|d| -d))
                .collect();
            let mut incident: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
            for (k, &a) in chosen.iter().enumerate() {
                let (u, v) = arcs[a];
                incident[u].push(k);
                incident[v].push(k);
            }
            let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
            let mut removed = vec![false; chosen.len()];
            let mut queue: Vec<usize> = (0..num_nodes).filter(|&v| degree[v] == 1).collect();
            let mut obj = 0.0;
            let mut processed = 0usize;
            while let Some(leaf) = queue.pop() {
                let Some(&k) = incident[leaf].iter().find(|&&k| !removed[k]) else {
                    continue;
                };
                removed[k] = true;
                processed += 1;
                let (u, v) = arcs[chosen[k]];
                let other = if u == leaf { v } else { u };
                // flow on the arc u(source) -> v(sink) equals the leaf's
                // remaining balance, signed by which side the leaf is on
                let flow = if leaf < n { balance[leaf] } else { -balance[leaf] };
                if flow < -1e-9 {
                    return None; // infeasible vertex
                }
                let (i, j) = (u, v - n);
                obj += flow.max(0.0) * cost[i * m + j];
                balance[other] += balance[leaf];
                balance[leaf] = 0.0;
                degree[leaf] = 0;
                degree[other] -= 1;
                if degree[other] == 1 {
                    queue.push(other);
                }
            }
            if processed != chosen.len() {
                return None;
            }
            Some(obj)
        }

        recurse(
            0,
            &mut chosen,
            (0..num_nodes).collect(),
            num_nodes,
            &arcs,
            supply,
            demand,
            cost,
            n,
            m,
            &mut best,
        );
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::thin_measure;
    use crate::sphere::SpherePoint;
    use rand::Rng;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn pt(re: f64, im: f64) -> SpherePoint {
        SpherePoint::from_re_im(re, im)
    }

    #[test]
    fn dirac_to_dirac_is_the_distance() {
        let a = pt(0.0, 0.0);
        let b = pt(1.0, 1.0);
        let mu = DiscreteMeasure::dirac(a);
        let nu = DiscreteMeasure::dirac(b);
        let (d, plan) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((d - sph_dist(&a, &b)).abs() < 1e-15);
        assert_eq!(plan.pairs.len(), 1);
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let mu = DiscreteMeasure::uniform_on((0..32).map(|k| pt(k as f64 * 0.1 - 1.6, 0.3)).collect()).unwrap();
        let (d, _) = w1(&mu, &mu, DEFAULT_PAIR_BUDGET).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn half_mass_across_the_sphere() {
        // move mass 1/2 from -1 to 1: distance pi, objective pi/2
        let mu = DiscreteMeasure::uniform_on(vec![pt(1.0, 0.0), pt(-1.0, 0.0)]).unwrap();
        let nu = DiscreteMeasure::dirac(pt(1.0, 0.0));
        let (d, _) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let mu = DiscreteMeasure::uniform_on((0..100).map(|k| pt(k as f64 * 0.01, 0.0)).collect()).unwrap();
        let err = w1(&mu, &mu, 100);
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn plan_marginals_match_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..8);
            let m = rng.gen_range(1..8);
            let mu = random_measure(&mut rng, n);
            let nu = random_measure(&mut rng, m);
            let (_, plan) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
            let mut row = vec![0.0; mu.len()];
            let mut col = vec![0.0; nu.len()];
            for &(i, j, f) in &plan.pairs {
                assert!(f >= 0.0);
                row[i as usize] += f;
                col[j as usize] += f;
            }
            for (r, w) in row.iter().zip(mu.weights()) {
                assert!((r - w).abs() < 1e-12);
            }
            for (c, w) in col.iter().zip(nu.weights()) {
                assert!((c - w).abs() < 1e-12);
            }
        }
    }

    fn random_measure(rng: &mut impl Rng, n: usize) -> DiscreteMeasure {
        let atoms: Vec<SpherePoint> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.05) {
                    SpherePoint::infinity()
                } else {
                    pt(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
                }
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        DiscreteMeasure::new(atoms, weights).unwrap()
    }

    #[test]
    fn matches_exhaustive_oracle_on_small_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..60 {
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=5);
            let mu = random_measure(&mut rng, n);
            let nu = random_measure(&mut rng, m);
            let cost: Vec<f64> = mu
                .atoms()
                .iter()
                .flat_map(|a| nu.atoms().iter().map(move |b| sph_dist(a, b)))
                .collect();
            let exact = reference::min_cost_exhaustive(mu.weights(), nu.weights(), &cost, nu.len());
            let (d, _) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
            assert!((d - exact).abs() < 1e-9, "trial {trial}: simplex {d} vs oracle {exact}");
        }
    }

    #[test]
    fn degenerate_equal_masses_agree_with_oracle() {
        // many ties: uniform masses on collinear points
        let mu = DiscreteMeasure::uniform_on((0..6).map(|k| pt(k as f64 * 0.3, 0.0)).collect()).unwrap();
        let nu = DiscreteMeasure::uniform_on((0..6).map(|k| pt(k as f64 * 0.3 + 0.15, 0.0)).collect()).unwrap();
        let cost: Vec<f64> = mu
            .atoms()
            .iter()
            .flat_map(|a| nu.atoms().iter().map(move |b| sph_dist(a, b)))
            .collect();
        let exact = reference::min_cost_exhaustive(mu.weights(), nu.weights(), &cost, 6);
        let (d, _) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
        assert!((d - exact).abs() < 1e-9);
    }

    #[test]
    fn metric_properties_on_random_triples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let (sa, sb, sc) = (rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(2..6));
            let mu = random_measure(&mut rng, sa);
            let nu = random_measure(&mut rng, sb);
            let rho = random_measure(&mut rng, sc);
            let (dab, _) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
            let (dba, _) = w1(&nu, &mu, DEFAULT_PAIR_BUDGET).unwrap();
            let (dac, _) = w1(&mu, &rho, DEFAULT_PAIR_BUDGET).unwrap();
            let (dbc, _) = w1(&nu, &rho, DEFAULT_PAIR_BUDGET).unwrap();
            assert!((dab - dba).abs() < 1e-9);
            assert!(dac <= dab + dbc + 1e-9);
            let (dself, _) = w1(&mu, &mu, DEFAULT_PAIR_BUDGET).unwrap();
            assert!(dself.abs() < 1e-9);
        }
    }

    #[test]
    fn dual_lower_bound_is_feasible() {
        use crate::measure::{enumerate_family, w1_dual_lb};
        let family = enumerate_family(40);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (sa, sb) = (rng.gen_range(1..6), rng.gen_range(1..6));
            let mu = random_measure(&mut rng, sa);
            let nu = random_measure(&mut rng, sb);
            let (d, _) = w1(&mu, &nu, DEFAULT_PAIR_BUDGET).unwrap();
            let lb = w1_dual_lb(&mu, &nu, &family, 1.0);
            assert!(lb <= d + 1e-12, "dual bound {lb} exceeds W1 {d}");
        }
    }

    #[test]
    fn thinning_error_is_within_order_bound() {
        let n = 4096;
        let points: Vec<SpherePoint> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                pt(t.cos(), t.sin())
            })
            .collect();
        let mu = DiscreteMeasure::uniform_on(points).unwrap();
        let thinned = thin_measure(&mu, 1000, 7).unwrap();
        let (d, _) = w1(&thinned, &mu, 8_000_000).unwrap();
        assert!(d < PI / (1000.0f64).sqrt(), "thinning error {d}");
    }
}
