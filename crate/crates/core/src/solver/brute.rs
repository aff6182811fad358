use super::{search::tie_tol, RecourseProblem, RecourseSolution};
use crate::error::{RecourseError, Result};

pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Enumerates every grid combination and returns the cheapest flipping action
/// under an arbitrary cost functional. Ties are broken like [`super::solve`].
pub fn brute_force_solve(problem: &RecourseProblem, cost: &dyn Fn(&[f64]) -> f64) -> Result<RecourseSolution> {
    brute_force_solve_with_cap(problem, cost, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn brute_force_solve_with_cap(
    problem: &RecourseProblem,
    cost: &dyn Fn(&[f64]) -> f64,
    cap: u128,
) -> Result<RecourseSolution> {
    if problem.already_flipped() {
        return Ok(RecourseSolution::no_action(0));
    }
    let grid = problem.grid();
    let features: Vec<usize> = (0..grid.dim()).filter(|&j| grid.features[j].is_actionable()).collect();
    let combinations = features
        .iter()
        .try_fold(1u128, |acc, &j| acc.checked_mul(grid.features[j].actions.len() as u128))
        .unwrap_or(u128::MAX);
    if combinations > cap {
        return Err(RecourseError::CapExceeded { combinations, cap });
    }
    let mut group = vec![usize::MAX; grid.dim()];
    for (g, members) in grid.linked_groups.iter().enumerate() {
        for &j in members {
            group[j] = g;
        }
    }
    let need = problem.required_gain();

    let mut index = vec![0usize; features.len()];
    let mut action = vec![0.0; grid.dim()];
    let mut best: Option<(f64, Vec<usize>, f64, Vec<f64>)> = None;
    let mut visited = 0u64;
    loop {
        visited += 1;
        let mut gain = 0.0;
        let mut support = Vec::new();
        let mut used_groups = Vec::new();
        let mut valid = true;
        for (&j, &k) in features.iter().zip(&index) {
            let a = grid.features[j].actions[k];
            action[j] = a;
            gain += grid.features[j].gains[k];
            if a != 0.0 {
                support.push(j);
                if group[j] != usize::MAX {
                    if used_groups.contains(&group[j]) {
                        valid = false;
                    }
                    used_groups.push(group[j]);
                }
            }
        }
        if valid && gain >= need && !problem.excluded_supports().contains(&support) {
            let c = cost(&action);
            let abs_sum: f64 = action.iter().map(|a| a.abs()).sum();
            let better = match &best {
                None => true,
                Some((bc, bs, ba, _)) => {
                    let tol = tie_tol(*bc);
                    c < bc - tol
                        || (c <= bc + tol
                            && (support.len(), &support)
                                .cmp(&(bs.len(), bs))
                                .then(abs_sum.total_cmp(ba))
                                .is_lt())
                }
            };
            if better {
                best = Some((c, support, abs_sum, action.clone()));
            }
        }

        // advance the mixed-radix counter
        let mut pos = 0;
        loop {
            if pos == features.len() {
                return Ok(match best {
                    Some((c, _, _, a)) => RecourseSolution::optimal(a, c, visited),
                    None => RecourseSolution::infeasible(visited),
                });
            }
            index[pos] += 1;
            if index[pos] < grid.features[features[pos]].actions.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}
