//! Exact dense linear solving for the small Bellman systems.

use crate::values::Prob;
use crate::{Error, Result};

/// Solves `A x = b` by Gaussian elimination over exact rationals.
pub fn solve(mut a: Vec<Vec<Prob>>, mut b: Vec<Prob>) -> Result<Vec<Prob>> {
    let n = b.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).ok_or_else(|| {
            Error::Unsolvable("singular value system".into())
        })?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col].clone();
        for c in col..n {
            a[col][c] = a[col][c].clone() / diag.clone();
        }
        b[col] = b[col].clone() / diag;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for c in col..n {
                a[r][c] = a[r][c].clone() - factor.clone() * &a[col][c];
            }
            b[r] = b[r].clone() - factor * &b[col];
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_2x2() {
        // x + y = 1; x - y = 1/3  =>  x = 2/3, y = 1/3
        let a = vec![
            vec![Prob::one(), Prob::one()],
            vec![Prob::one(), Prob::from_int(-1)],
        ];
        let b = vec![Prob::one(), Prob::ratio(1, 3)];
        let x = solve(a, b).unwrap();
        assert_eq!(x, vec![Prob::ratio(2, 3), Prob::ratio(1, 3)]);
    }

    #[test]
    fn detects_singular() {
        let a = vec![
            vec![Prob::one(), Prob::one()],
            vec![Prob::one(), Prob::one()],
        ];
        let b = vec![Prob::one(), Prob::zero()];
        assert!(matches!(solve(a, b), Err(Error::Unsolvable(_))));
    }

    #[test]
    fn needs_pivot_swap() {
        // First pivot is zero: 0x + y = 2; x + 0y = 3.
        let a = vec![
            vec![Prob::zero(), Prob::one()],
            vec![Prob::one(), Prob::zero()],
        ];
        let b = vec![Prob::from_int(2), Prob::from_int(3)];
        let x = solve(a, b).unwrap();
        assert_eq!(x, vec![Prob::from_int(3), Prob::from_int(2)]);
    }
}
