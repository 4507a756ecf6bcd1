//! Minimum-cost assignment of rows to distinct columns (rows ≤ columns),
//! by shortest augmenting paths with row and column potentials.

/// Cost used for pairs that must never be chosen.
pub const FORBIDDEN: f64 = 1e9;

/// Absolute tolerance when comparing assignment totals.
const TIE: f64 = 1e-9;

/// Optimal row → column assignment and its total cost. Panics if rows exceed columns.
pub fn solve(costs: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = costs.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = costs[0].len();
    assert!(n <= m, "more rows than columns");
    assert!(costs.iter().all(|r| r.len() == m), "ragged cost matrix");
    // 1-based internally; column 0 is the virtual start of each augmenting path
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            rows[owner[j] - 1] = j - 1;
        }
    }
    let total = rows.iter().enumerate().map(|(i, &j)| costs[i][j]).sum();
    (rows, total)
}

/// Among all optimal assignments, the one whose column list is
/// lexicographically smallest: each row in turn takes the lowest column that
/// still allows the optimum for the remaining rows.
pub fn solve_lexicographic(costs: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let (_, best) = solve(costs);
    let n = costs.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let m = costs[i].len();
        let pick = (0..m)
            .filter(|j| !chosen.contains(j))
            .find(|&j| {
                let rest_cols: Vec<usize> = (0..m).filter(|c| *c != j && !chosen.contains(c)).collect();
                let rest: Vec<Vec<f64>> = costs[i + 1..].iter().map(|r| rest_cols.iter().map(|&c| r[c]).collect()).collect();
                let total = fixed_cost + costs[i][j] + solve(&rest).1;
                total <= best + TIE
            })
            .expect("the optimum is reachable");
        fixed_cost += costs[i][pick];
        chosen.push(pick);
    }
    (chosen, fixed_cost)
}

/// Assigns each row (field) at most one column (candidate). `None` marks a
/// forbidden pair. Every row may instead stay empty at cost `empty_cost`.
/// Ties go to the lowest candidate for the lowest row; empty ranks after every candidate.
pub fn assign(costs: &[Vec<Option<f64>>], empty_cost: f64) -> Vec<Option<usize>> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    let m = costs[0].len();
    let padded: Vec<Vec<f64>> =
        costs.iter().map(|row| row.iter().map(|c| c.unwrap_or(FORBIDDEN)).chain(std::iter::repeat_n(empty_cost, n)).collect()).collect();
    let (cols, _) = solve_lexicographic(&padded);
    cols.into_iter().map(|j| (j < m).then_some(j)).collect()
}
