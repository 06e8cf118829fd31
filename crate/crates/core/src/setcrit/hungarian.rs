use super::{Assignment, SetCritError};

/// Minimum-cost one-to-one assignment of rows (predictions) to columns
/// (ground truths).
///
/// Rectangular matrices are solved directly: the smaller side is injected
/// into the larger one, so `pairs.len() == min(rows, cols)`. Shortest
/// augmenting paths with row/column potentials, `O(n² m)`. The scan order is
/// fixed, so equal-cost alternatives always resolve the same way.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment, SetCritError> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(SetCritError::Cost("ragged cost matrix".into()));
    }
    if let Some((i, j)) = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .find(|&(i, j)| !cost[i][j].is_finite())
    {
        return Err(SetCritError::Cost(format!("non-finite cost at ({i}, {j})")));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            unmatched_predictions: (0..rows).collect(),
            total_cost: 0.0,
        });
    }

    let transposed = rows > cols;
    let (n, m) = if transposed {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let at = |i: usize, j: usize| if transposed { cost[j][i] } else { cost[i][j] };

    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = at(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (r, c) = (owner[j] - 1, j - 1);
            if transposed {
                (c, r)
            } else {
                (r, c)
            }
        })
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(p, g)| cost[p][g]).sum();
    let unmatched_predictions = (0..rows)
        .filter(|p| !pairs.iter().any(|&(q, _)| q == *p))
        .collect();
    Ok(Assignment {
        pairs,
        unmatched_predictions,
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_zero_gives_identity() {
        let cost = vec![
            vec![0.0, 1.0, 2.0],
            vec![3.0, 0.0, 1.0],
            vec![4.0, 5.0, 0.0],
        ];
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn three_by_three_hand_case() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn more_predictions_than_truths() {
        let cost = vec![vec![5.0], vec![1.0], vec![3.0]];
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.unmatched_predictions, vec![0, 2]);
    }

    #[test]
    fn empty_and_invalid() {
        let a = hungarian(&[]).unwrap();
        assert!(a.pairs.is_empty());
        let a = hungarian(&[vec![], vec![]]).unwrap();
        assert_eq!(a.unmatched_predictions, vec![0, 1]);
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert!(hungarian(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
