//! Symmetric-indefinite factorization `P A P^T = L D L^T` with Bunch-Kaufman
//! pivoting (1x1 and 2x2 diagonal blocks).

use nalgebra::{DMatrix, DVector};

const ALPHA: f64 = 0.640_388_203_202_208_2; // (1 + sqrt(17)) / 8
const RELATIVE_COLLAPSE: f64 = 1e-12;
const ABSOLUTE_COLLAPSE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Singular {
    pub pivot: usize,
}

#[derive(Clone, Debug)]
pub struct Ldlt {
    /// Unit lower factor below the diagonal; D blocks on and just below it.
    factor: DMatrix<f64>,
    /// `perm[i]` is the original index of row i of the permuted system.
    perm: Vec<usize>,
    /// Size of the diagonal block starting at each index (0 for the second
    /// row of a 2x2 block).
    blocks: Vec<u8>,
}

impl Ldlt {
    /// Factors a symmetric matrix; only the lower triangle is read.
    ///
    /// Fails when a pivot column collapses below `1e-12` times its original
    /// magnitude (or below `1e-14` of the largest entry), which signals a
    /// singular matrix.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, Singular> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut m = a.clone();
        for j in 0..n {
            for i in 0..j {
                m[(i, j)] = m[(j, i)];
            }
        }
        let col_scale: Vec<f64> = (0..n).map(|j| m.column(j).amax()).collect();
        let global = m.amax();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = vec![0u8; n];

        let mut k = 0;
        while k < n {
            let absakk = m[(k, k)].abs();
            let (imax, colmax) =
                ((k + 1)..n).map(|i| (i, m[(i, k)].abs())).fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let threshold = (RELATIVE_COLLAPSE * col_scale[perm[k]]).max(ABSOLUTE_COLLAPSE * global);
            if absakk.max(colmax) <= threshold {
                return Err(Singular { pivot: k });
            }

            let (kp, step) = if absakk >= ALPHA * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n).filter(|&j| j != imax).map(|j| m[(imax, j)].abs()).fold(0.0, f64::max);
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    (k, 1)
                } else if m[(imax, imax)].abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };

            let kk = k + step - 1;
            if kp != kk {
                m.swap_rows(kk, kp);
                m.swap_columns(kk, kp);
                perm.swap(kk, kp);
            }

            if step == 1 {
                let d = m[(k, k)];
                for i in (k + 1)..n {
                    m[(i, k)] /= d;
                }
                for j in (k + 1)..n {
                    let ljd = m[(j, k)] * d;
                    for i in j..n {
                        m[(i, j)] -= m[(i, k)] * ljd;
                    }
                }
                for j in (k + 1)..n {
                    for i in j..n {
                        m[(j, i)] = m[(i, j)];
                    }
                }
                blocks[k] = 1;
            } else {
                let (d11, d21, d22) = (m[(k, k)], m[(k + 1, k)], m[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                if det.abs() <= threshold * threshold {
                    return Err(Singular { pivot: k });
                }
                let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                for i in (k + 2)..n {
                    let (a0, a1) = (m[(i, k)], m[(i, k + 1)]);
                    m[(i, k)] = a0 * i11 + a1 * i21;
                    m[(i, k + 1)] = a0 * i21 + a1 * i22;
                }
                for j in (k + 2)..n {
                    let (w0, w1) = (m[(j, k)] * d11 + m[(j, k + 1)] * d21, m[(j, k)] * d21 + m[(j, k + 1)] * d22);
                    for i in j..n {
                        m[(i, j)] -= m[(i, k)] * w0 + m[(i, k + 1)] * w1;
                    }
                }
                for j in (k + 2)..n {
                    for i in j..n {
                        m[(j, i)] = m[(i, j)];
                    }
                }
                blocks[k] = 2;
            }
            k += step;
        }
        Ok(Ldlt { factor: m, perm, blocks })
    }

    pub fn dimension(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension();
        let l = &self.factor;
        let mut y = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        // L y = Pb
        let mut k = 0;
        while k < n {
            let step = self.blocks[k] as usize;
            for c in k..k + step {
                let yc = y[c];
                for i in (k + step)..n {
                    y[i] -= l[(i, c)] * yc;
                }
            }
            k += step;
        }
        // D z = y
        let mut k = 0;
        while k < n {
            if self.blocks[k] == 1 {
                y[k] /= l[(k, k)];
                k += 1;
            } else {
                let (d11, d21, d22) = (l[(k, k)], l[(k + 1, k)], l[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                let (y0, y1) = (y[k], y[k + 1]);
                y[k] = (d22 * y0 - d21 * y1) / det;
                y[k + 1] = (d11 * y1 - d21 * y0) / det;
                k += 2;
            }
        }
        // L^T x = z
        let starts: Vec<usize> = (0..n).filter(|&k| self.blocks[k] != 0).collect();
        for &k in starts.iter().rev() {
            let step = self.blocks[k] as usize;
            for c in k..k + step {
                let mut acc = y[c];
                for i in (k + step)..n {
                    acc -= l[(i, c)] * y[i];
                }
                y[c] = acc;
            }
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Solve followed by one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let x = self.solve(b);
        let r = b - a * &x;
        x + self.solve(&r)
    }

    /// Number of negative eigenvalues (inertia of D).
    pub fn negative_eigenvalues(&self) -> usize {
        let l = &self.factor;
        let mut count = 0;
        let mut k = 0;
        while k < self.dimension() {
            if self.blocks[k] == 1 {
                count += usize::from(l[(k, k)] < 0.0);
                k += 1;
            } else {
                let (d11, d21, d22) = (l[(k, k)], l[(k + 1, k)], l[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                count += if det < 0.0 {
                    1
                } else if d11 + d22 < 0.0 {
                    2
                } else {
                    0
                };
                k += 2;
            }
        }
        count
    }
}
