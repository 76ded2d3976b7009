//! Two-marginal optimal transport by successive shortest augmenting paths.
//!
//! Independent of the simplex code path: the bipartite residual network is
//! searched with dense Dijkstra under reduced costs, one augmentation per
//! path, until every source is exhausted.

use super::TransportPlan;
use crate::dynamics::CostMatrix;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, MASS_BALANCE_RTOL};

/// Optimal plan and its cost `⟨C, m⟩`.
#[derive(Debug, Clone)]
pub struct ClassicOt {
    pub plan: TransportPlan,
    pub objective: f64,
}

/// Solves `min ⟨C, m⟩` over plans with marginals `mu` and `nu`.
pub fn solve_classic_ot(cost: &CostMatrix, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ClassicOt> {
    solve_with_masses(cost, mu.masses(), nu.masses())
}

pub(crate) fn solve_with_masses(cost: &CostMatrix, supply: &[f64], demand: &[f64]) -> Result<ClassicOt> {
    let n1 = supply.len();
    let n2 = demand.len();
    if cost.rows() != n1 || cost.cols() != n2 {
        return Err(Error::Shape(format!(
            "cost is {}x{} but marginals have {n1} and {n2} points",
            cost.rows(),
            cost.cols()
        )));
    }
    let total: f64 = supply.iter().sum();
    let total_nu: f64 = demand.iter().sum();
    if (total - total_nu).abs() > MASS_BALANCE_RTOL * total.abs().max(total_nu.abs()) {
        return Err(Error::Validation(format!(
            "mass imbalance: source total {total}, target total {total_nu}"
        )));
    }
    let eps = 1e-13 * total.max(f64::MIN_POSITIVE);

    let mut flow = vec![0.0; n1 * n2];
    let mut rem_supply: Vec<f64> = supply.to_vec();
    let mut rem_demand: Vec<f64> = demand.to_vec();
    // node order: sources 0..n1, sinks n1..n1+n2
    let nodes = n1 + n2;
    let mut potential = vec![0.0; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut pred = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];

    let max_augment = 100 * (n1 * n2 + nodes) + 1000;
    let mut augmentations = 0;
    while rem_supply.iter().any(|&s| s > eps) {
        augmentations += 1;
        if augmentations > max_augment {
            return Err(Error::Solver(format!(
                "classic OT exceeded {max_augment} augmentations"
            )));
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n1 {
            if rem_supply[i] > eps {
                dist[i] = 0.0;
            }
        }

        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n1 {
                let j = u - n1;
                if rem_demand[j] > eps {
                    target = Some(u);
                    break;
                }
                for i in 0..n1 {
                    if done[i] || flow[i * n2 + j] <= eps {
                        continue;
                    }
                    let rc = (-cost.get(i, j) + potential[u] - potential[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        pred[i] = u;
                    }
                }
            } else {
                let i = u;
                for j in 0..n2 {
                    let v = n1 + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost.get(i, j) + potential[i] - potential[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        pred[v] = u;
                    }
                }
            }
        }
        let Some(t) = target else {
            return Err(Error::Solver(
                "classic OT: no augmenting path despite balanced masses".into(),
            ));
        };
        let reach = dist[t];
        for v in 0..nodes {
            if done[v] || dist[v] < reach {
                potential[v] += dist[v].min(reach);
            } else {
                potential[v] += reach;
            }
        }

        // bottleneck
        let mut amount = rem_demand[t - n1];
        let mut v = t;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= n1 {
                // backward arc sink u -> source v
                amount = amount.min(flow[v * n2 + (u - n1)]);
            }
            v = u;
        }
        let source = v;
        amount = amount.min(rem_supply[source]);

        let mut v = t;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if u >= n1 {
                let e = v * n2 + (u - n1);
                flow[e] -= amount;
                if flow[e] < eps {
                    flow[e] = 0.0;
                }
            } else {
                flow[u * n2 + (v - n1)] += amount;
            }
            v = u;
        }
        rem_supply[source] -= amount;
        rem_demand[t - n1] -= amount;
    }

    let objective = flow
        .iter()
        .zip(cost.entries())
        .map(|(f, c)| f * c)
        .sum();
    Ok(ClassicOt {
        plan: TransportPlan::new(n1, n2, flow),
        objective,
    })
}
