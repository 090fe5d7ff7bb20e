use super::plan::IntersectionPlan;
use crate::network::{IntersectionId, Network};

/// Degree of saturation per phase: measured flow over the flow the phase
/// could have carried at saturation during its green.
pub fn degrees_of_saturation(
    plan: &IntersectionPlan,
    phase_counts: &[f64],
    saturation_flows: &[f64],
) -> Vec<f64> {
    assert_eq!(phase_counts.len(), plan.phase_count());
    assert_eq!(saturation_flows.len(), plan.phase_count());
    plan.greens
        .iter()
        .zip(phase_counts)
        .zip(saturation_flows)
        .map(|((&g, &n), &s)| if s > 0.0 && g > 0.0 { n / (s * g) } else { 0.0 })
        .collect()
}

/// Next-cycle plan from one cycle of per-phase discharge counts.
///
/// Each phase's share of the green budget is proportional to `DS_p * g_p`,
/// the phase's measured flow in saturation units, so phases with equal
/// saturation keep their greens and a common scale factor on all counts
/// cancels. Shares are clamped to `[g_min, g_max]` and the rest of the
/// budget is redistributed over the unclamped phases by the same weights.
/// With no measured flow the plan is returned unchanged.
pub fn scats_like_update(
    plan: &IntersectionPlan,
    phase_counts: &[f64],
    saturation_flows: &[f64],
    g_min: f64,
) -> IntersectionPlan {
    let ds = degrees_of_saturation(plan, phase_counts, saturation_flows);
    let weights: Vec<f64> = ds.iter().zip(&plan.greens).map(|(d, g)| d * g).collect();
    if weights.iter().all(|&w| w <= 0.0) {
        return plan.clone();
    }
    let greens = proportional_clamped(&weights, plan.green_budget(), g_min, plan.g_max(g_min));
    IntersectionPlan {
        greens,
        ..plan.clone()
    }
}

/// Splits `budget` proportionally to `weights` within `[lo, hi]`.
fn proportional_clamped(weights: &[f64], budget: f64, lo: f64, hi: f64) -> Vec<f64> {
    let p = weights.len();
    let mut fixed: Vec<Option<f64>> = vec![None; p];
    loop {
        let free: Vec<usize> = (0..p).filter(|&i| fixed[i].is_none()).collect();
        let left = budget - fixed.iter().flatten().sum::<f64>();
        let wsum: f64 = free.iter().map(|&i| weights[i]).sum();
        let share = |i: usize| {
            if wsum > 0.0 {
                left * weights[i] / wsum
            } else {
                left / free.len() as f64
            }
        };
        let low: Vec<usize> = free.iter().copied().filter(|&i| share(i) < lo).collect();
        let high: Vec<usize> = free.iter().copied().filter(|&i| share(i) > hi).collect();
        if low.is_empty() && high.is_empty() {
            let mut out: Vec<f64> = (0..p).map(|i| fixed[i].unwrap_or_else(|| share(i))).collect();
            // Exact budget: push float residue onto the largest free phase.
            if let Some(&j) = free
                .iter()
                .max_by(|&&a, &&b| out[a].total_cmp(&out[b]).then(b.cmp(&a)))
            {
                let drift = budget - out.iter().sum::<f64>();
                out[j] += drift;
            }
            return out;
        }
        if !low.is_empty() {
            for i in low {
                fixed[i] = Some(lo);
            }
        } else {
            for i in high {
                fixed[i] = Some(hi);
            }
        }
    }
}

/// Per-phase saturation flow (veh/s): sum over the phase's movements.
pub fn phase_saturation_flows(network: &Network, node: IntersectionId) -> Vec<f64> {
    network
        .intersection(node)
        .phases
        .iter()
        .map(|ph| ph.iter().map(|&m| network.movement(m).saturation_flow).sum())
        .collect()
}
