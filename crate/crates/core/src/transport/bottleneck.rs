//! Bottleneck transport: the smallest threshold `t` such that a coupling
//! supported on `{d <= t}` exists.

use super::maxflow::FlowNetwork;
use crate::{Error, Result};

/// Slack allowed between the max-flow value and the total mass.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Returns `(threshold, plan)` with `plan` row-major `m x n`.
///
/// `supply` and `demand` must be strictly positive with equal totals.
pub fn solve(supply: &[f64], demand: &[f64], dist: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Empty("transport problem has an empty side"));
    }
    if dist.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            found: dist.len(),
        });
    }
    let mut levels: Vec<f64> = dist.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    // levels[hi] is always feasible: the complete bipartite graph admits the product coupling.
    let (mut lo, mut hi) = (0usize, levels.len() - 1);
    let mut best = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        match feasible(supply, demand, dist, levels[mid]) {
            Some(plan) => {
                best = Some((mid, plan));
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let plan = match best {
        Some((idx, plan)) if idx == lo => plan,
        _ => feasible(supply, demand, dist, levels[lo]).ok_or(Error::Degenerate(
            "bottleneck search lost feasibility at the largest threshold",
        ))?,
    };
    Ok((levels[lo], plan))
}

/// Max-flow feasibility check; returns the flow as a plan when feasible.
pub fn feasible(supply: &[f64], demand: &[f64], dist: &[f64], threshold: f64) -> Option<Vec<f64>> {
    let (m, n) = (supply.len(), demand.len());
    let (s, t) = (m + n, m + n + 1);
    let mut net = FlowNetwork::new(m + n + 2);
    for (i, &a) in supply.iter().enumerate() {
        net.add_edge(s, i, a);
    }
    for (j, &b) in demand.iter().enumerate() {
        net.add_edge(m + j, t, b);
    }
    let mut handles = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if dist[i * n + j] <= threshold {
                handles.push((i, j, net.add_edge(i, m + j, f64::INFINITY)));
            }
        }
    }
    let total: f64 = supply.iter().sum();
    let flow = net.max_flow(s, t);
    if flow < total - FEASIBILITY_SLACK {
        return None;
    }
    let mut plan = vec![0.0; m * n];
    for (i, j, h) in handles {
        plan[i * n + j] = net.flow_on(h);
    }
    Some(plan)
}
