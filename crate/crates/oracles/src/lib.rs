//! Independent reference computations used by the test suites.
//!
//! Everything here is deliberately naive: a min-cost-flow solver for
//! discrete optimal transport, Simpson quadrature for Gaussian tails, and
//! brute-force enumeration. None of it shares code with `hre-core`.

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

fn std_normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(Z > x)` for standard normal `Z`, by quadrature of the density
/// over `[x, x + 40]` (for `x ≥ 0`) or via symmetry.
pub fn normal_upper_tail(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_upper_tail(-x);
    }
    // integrate in the shifted variable so the relative error stays small
    // far in the tail
    let scale = std_normal_density(x);
    let shifted = |s: f64| (-(x * s) - 0.5 * s * s).exp();
    let width = if x > 1.0 { 40.0 / x } else { 40.0 };
    scale * simpson(shifted, 0.0, width.min(40.0), 20_000)
}

/// `P(|Z| > x)` for standard normal `Z`.
pub fn normal_two_sided_tail(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        2.0 * normal_upper_tail(x)
    }
}

/// `E(|X| 1{|X| > t})` for `X ~ N(mean, sd²)` by direct quadrature.
pub fn normal_partial_abs_moment(mean: f64, sd: f64, t: f64) -> f64 {
    let density = |x: f64| std_normal_density((x - mean) / sd) / sd;
    let far = mean.abs() + t.abs() + 40.0 * sd;
    let t = t.max(0.0);
    simpson(|x| x.abs() * density(x), t, far, 200_000)
        + simpson(|x| x.abs() * density(x), -far, -t, 200_000)
}

/// Squared quadratic Wasserstein distance between two discrete measures,
/// computed as a min-cost transportation problem by successive shortest
/// augmenting paths (Bellman-Ford on the residual network).
pub fn w2_squared_transport(mu: &[(f64, f64)], nu: &[(f64, f64)]) -> f64 {
    let m = mu.len();
    let k = nu.len();
    // nodes: 0 source, 1..=m left, m+1..=m+k right, m+k+1 sink
    let source = 0;
    let sink = m + k + 1;
    let nodes = m + k + 2;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |from: usize, to: usize, cap: f64, cost: f64| {
        adjacency[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adjacency[to].push(edges.len());
        edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
    };
    for (i, &(_, a)) in mu.iter().enumerate() {
        add(source, 1 + i, a, 0.0);
    }
    for (i, &(x, _)) in mu.iter().enumerate() {
        for (j, &(y, _)) in nu.iter().enumerate() {
            add(1 + i, 1 + m + j, f64::INFINITY, (x - y) * (x - y));
        }
    }
    for (j, &(_, b)) in nu.iter().enumerate() {
        add(1 + m + j, sink, b, 0.0);
    }

    let mut total_cost = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via: Vec<Option<usize>> = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adjacency[u] {
                    let edge = &edges[e];
                    if edge.cap > 1e-15 && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while let Some(e) = via[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = via[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            total_cost += push * edges[e].cost;
            v = edges[e ^ 1].to;
        }
    }
    total_cost
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// `P(X ∈ set)` for a discrete law given as `(value, mass)` pairs.
pub fn discrete_prob(law: &[(f64, f64)], pred: impl Fn(f64) -> bool) -> f64 {
    law.iter().filter(|(x, _)| pred(*x)).map(|(_, p)| p).sum()
}

/// Exact law of `S_n = f_1 + ... + f_n` for iid `f_i` with a discrete law,
/// by enumerating all `|law|^n` outcome tuples.
pub fn brute_force_sum_law(law: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 1.0)];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * law.len());
        for &(s, p) in &out {
            for &(x, q) in law {
                next.push((s + x, p * q));
            }
        }
        out = next;
    }
    out
}
