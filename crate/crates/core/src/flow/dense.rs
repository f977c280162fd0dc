//! Row-major dense LU with partial pivoting, sized for the column blocks of
//! the channel solver.

#[derive(Debug, Clone)]
pub(crate) struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factorizes `a` (row-major, `n * n`) in place. Returns `None` on an
    /// exactly zero pivot.
    pub(crate) fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            if piv != k {
                perm.swap(piv, k);
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
            }
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..(k + 1) * n];
            let inv = 1.0 / pivot_row[k];
            for row in bottom.chunks_exact_mut(n) {
                let l = row[k] * inv;
                if l == 0.0 {
                    continue;
                }
                row[k] = l;
                for (x, &p) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                    *x -= l * p;
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves for `nrhs` right-hand sides stored row-major as `n x nrhs`.
    pub(crate) fn solve_many(&self, b: &[f64], nrhs: usize) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n * nrhs];
        for (i, &p) in self.perm.iter().enumerate() {
            x[i * nrhs..(i + 1) * nrhs].copy_from_slice(&b[p * nrhs..(p + 1) * nrhs]);
        }
        for i in 0..n {
            let (done, rest) = x.split_at_mut(i * nrhs);
            let xi = &mut rest[..nrhs];
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l == 0.0 {
                    continue;
                }
                for (d, &s) in xi.iter_mut().zip(&done[k * nrhs..(k + 1) * nrhs]) {
                    *d -= l * s;
                }
            }
        }
        for i in (0..n).rev() {
            let (head, tail) = x.split_at_mut((i + 1) * nrhs);
            let xi = &mut head[i * nrhs..];
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u == 0.0 {
                    continue;
                }
                let off = (k - i - 1) * nrhs;
                for (d, &s) in xi.iter_mut().zip(&tail[off..off + nrhs]) {
                    *d -= u * s;
                }
            }
            let inv = 1.0 / self.lu[i * n + i];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
        x
    }
}
