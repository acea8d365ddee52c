//! Maximum-score one-to-one assignment over a partially filled matrix.

use alloc::vec;
use alloc::vec::Vec;

/// Maximum-total-score partial assignment. `scores[r][c]` is `None` when row
/// `r` may not be paired with column `c`. Returns `(row, col)` pairs sorted
/// by row; only eligible entries appear.
///
/// The rectangular problem is padded to a square one whose missing and
/// dummy entries score zero, then solved as a min-cost problem on negated
/// scores with the shortest-augmenting-path potentials method, O(n^3).
pub fn hungarian_max(scores: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = scores.len();
    let cols = scores.iter().map(Vec::len).max().unwrap_or(0);
    let n = rows.max(cols);
    if n == 0 || scores.iter().all(|r| r.iter().all(Option::is_none)) {
        return Vec::new();
    }
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows {
            if let Some(Some(s)) = scores[r].get(c) {
                return -*s;
            }
        }
        0.0
    };

    // 1-based arrays; column 0 is the virtual start of each augmenting path
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    way[c] = col0;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|c| {
            let r = owner[c];
            (r >= 1 && r <= rows && matches!(scores[r - 1].get(c - 1), Some(Some(_)))).then_some((r - 1, c - 1))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Total score of an assignment.
pub fn assignment_total(scores: &[Vec<Option<f64>>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| scores[r][c].unwrap_or(0.0)).sum()
}
