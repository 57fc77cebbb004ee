//! Index helpers for tensor-product node sets. The first index runs fastest.

use std::ops::{Add, Mul};

/// Linear index of the multi-index `idx` on a grid with `n` points per direction.
#[cfg(test)]
pub(crate) fn linear<const D: usize>(idx: [usize; D], n: usize) -> usize {
    let mut l = 0;
    for dir in (0..D).rev() {
        l = l * n + idx[dir];
    }
    l
}

#[inline(always)]
pub(crate) fn multi<const D: usize>(mut l: usize, n: usize) -> [usize; D] {
    let mut idx = [0; D];
    for i in idx.iter_mut() {
        *i = l % n;
        l /= n;
    }
    idx
}

#[inline(always)]
pub(crate) fn stride(dir: usize, n: usize) -> usize {
    n.pow(dir as u32)
}

/// First node of every line in direction `dir`, in ascending order of the
/// remaining indices. This order doubles as the face node numbering.
pub(crate) fn line_starts<const D: usize>(dir: usize, n: usize) -> Vec<usize> {
    let total = n.pow(D as u32);
    let s = stride(dir, n);
    (0..total).filter(|l| (l / s) % n == 0).collect()
}

/// Volume node of face node `t` on side `side` (0 for -1, 1 for +1) in direction `dir`.
pub(crate) fn face_nodes<const D: usize>(dir: usize, side: usize, n: usize) -> Vec<usize> {
    let offset = if side == 0 { 0 } else { (n - 1) * stride(dir, n) };
    line_starts::<D>(dir, n).into_iter().map(|l| l + offset).collect()
}

/// Applies the row-major `n_out × dims[dir]` matrix `mat` along direction `dir`.
pub(crate) fn apply_along<T>(input: &[T], dims: &[usize], dir: usize, mat: &[f64], n_out: usize) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let n_in = dims[dir];
    let inner: usize = dims[..dir].iter().product();
    let outer: usize = dims[dir + 1..].iter().product();
    debug_assert_eq!(input.len(), inner * n_in * outer);
    debug_assert_eq!(mat.len(), n_out * n_in);
    let mut out = Vec::with_capacity(inner * n_out * outer);
    // filled in (o, r, i) order which is exactly the output layout
    for o in 0..outer {
        for r in 0..n_out {
            let row = &mat[r * n_in..(r + 1) * n_in];
            for i in 0..inner {
                let base = o * n_in * inner + i;
                let mut acc = input[base] * row[0];
                for (k, &m) in row.iter().enumerate().skip(1) {
                    acc = acc + input[base + k * inner] * m;
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Applies the same square or rectangular 1D matrix along every direction.
pub(crate) fn apply_all<T>(input: &[T], d: usize, n_in: usize, mat: &[f64], n_out: usize) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let mut dims = vec![n_in; d];
    let mut cur = input.to_vec();
    for dir in 0..d {
        cur = apply_along(&cur, &dims, dir, mat, n_out);
        dims[dir] = n_out;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for l in 0..64 {
            assert_eq!(linear::<3>(multi::<3>(l, 4), 4), l);
        }
        assert_eq!(linear([1, 2], 3), 7);
    }

    #[test]
    fn faces_and_lines() {
        assert_eq!(line_starts::<2>(0, 3), vec![0, 3, 6]);
        assert_eq!(line_starts::<2>(1, 3), vec![0, 1, 2]);
        assert_eq!(face_nodes::<2>(0, 1, 3), vec![2, 5, 8]);
        assert_eq!(face_nodes::<2>(1, 1, 3), vec![6, 7, 8]);
        assert_eq!(face_nodes::<3>(2, 0, 2), vec![0, 1, 2, 3]);
    }

    #[test]
    fn apply_along_matches_dense_loops() {
        // 2 x 3 grid, map direction 1 (size 3) to size 2
        let input: Vec<f64> = (0..6).map(|x| x as f64).collect();
        let mat = [1.0, 0.0, 2.0, 0.0, 1.0, -1.0];
        let out = apply_along(&input, &[2, 3], 1, &mat, 2);
        // out(i, r) = sum_k mat(r, k) in(i, k), in(i, k) = i + 2k
        let expect = |i: usize, r: usize| (0..3).map(|k| mat[r * 3 + k] * (i + 2 * k) as f64).sum::<f64>();
        assert_eq!(out, vec![expect(0, 0), expect(1, 0), expect(0, 1), expect(1, 1)]);
    }
}
