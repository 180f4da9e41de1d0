//! Small dense linear algebra for the continuous algebraic Riccati equation
//! `A'P + PA - P B R^-1 B' P + Q = 0` with a single input.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        Self {
            n: N,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let n = self.n;
        let mut r = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    r.data[i * n + j] += a * o.get(k, j);
                }
            }
        }
        r
    }

    pub fn add(&self, o: &Mat) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|a| a * k).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Outer product `x y'`.
    pub fn outer(x: &[f64], y: &[f64]) -> Mat {
        let n = x.len();
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, x[i] * y[j]);
            }
        }
        m
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn symmetrized(&self) -> Mat {
        self.add(&self.transpose()).scale(0.5)
    }
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(m: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if m.len() != n * n {
        return Err(Error::Shape(format!(
            "{} entries for a {n}x{n} system",
            m.len()
        )));
    }
    let mut a = m.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[piv * n + col].abs() <= 1e-14 * scale {
            return Err(Error::Singular(format!("pivot {col} vanishes")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (x[r] - s) / a[r * n + r];
    }
    Ok(x)
}

/// Solves the Lyapunov equation `F'P + PF + M = 0` through its Kronecker form.
pub fn solve_lyapunov(f: &Mat, m: &Mat) -> Result<Mat> {
    let n = f.n;
    let nn = n * n;
    let mut big = vec![0.0; nn * nn];
    // vec index of P(i, j) is i * n + j.
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                // (F'P)(i, j) = sum_k F(k, i) P(k, j)
                big[row * nn + k * n + j] += f.get(k, i);
                // (PF)(i, j) = sum_k P(i, k) F(k, j)
                big[row * nn + i * n + k] += f.get(k, j);
            }
        }
    }
    let rhs: Vec<f64> = m.data.iter().map(|v| -v).collect();
    let p = solve_linear(&big, &rhs)?;
    Ok(Mat { n, data: p }.symmetrized())
}

/// Characteristic polynomial coefficients `[1, c1, ..., cn]` of `det(sI - A)`
/// by the Faddeev-LeVerrier recursion.
pub fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.n;
    let mut coeffs = vec![1.0];
    let mut m = Mat::zeros(n);
    let mut c = 1.0;
    for k in 1..=n {
        let mut next = a.mul(&m);
        for i in 0..n {
            next.data[i * n + i] += c;
        }
        m = next;
        let am = a.mul(&m);
        let trace: f64 = (0..n).map(|i| am.get(i, i)).sum();
        c = -trace / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Roots of a monic polynomial `[1, c1, ..., cn]` by Durand-Kerner iteration.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: Complex64| {
        coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    let radius = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..500 {
        let mut shift = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let dz = eval(z[i]) / denom;
            z[i] -= dz;
            shift = shift.max(dz.norm());
        }
        if shift < 1e-15 * radius {
            break;
        }
    }
    z
}

pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    poly_roots(&char_poly(a))
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Single-input Ackermann pole placement: gain `k` with `eig(A - b k)` equal
/// to the roots of `desired = [1, d1, ..., dn]`.
pub fn ackermann(a: &Mat, b: &[f64], desired: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    // Controllability matrix columns b, Ab, A^2 b, ...
    let mut cols = vec![b.to_vec()];
    for k in 1..n {
        let next = a.mul_vec(&cols[k - 1]);
        cols.push(next);
    }
    let mut ctrb = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            ctrb[i * n + j] = col[i];
        }
    }
    // Row e_n' C^-1 solves C' w = e_n.
    let mut ct = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            ct[i * n + j] = ctrb[j * n + i];
        }
    }
    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    let w =
        solve_linear(&ct, &e).map_err(|_| Error::Singular("system is not controllable".into()))?;
    // phi(A) = A^n + d1 A^(n-1) + ... + dn I, by Horner.
    let mut phi = Mat::identity(n);
    for &d in &desired[1..] {
        phi = phi.mul(a).add(&Mat::identity(n).scale(d));
    }
    let phi_t = phi.transpose();
    Ok(phi_t.mul_vec(&w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: Mat,
    /// Optimal gain `R^-1 B' P`.
    pub k: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `A'P + PA - P b r^-1 b' P + Q`.
pub fn care_residual(a: &Mat, b: &[f64], q: &Mat, r: f64, p: &Mat) -> Mat {
    let pb = p.mul_vec(b);
    a.transpose()
        .mul(p)
        .add(&p.mul(a))
        .add(&Mat::outer(&pb, &pb).scale(-1.0 / r))
        .add(q)
}

/// Kleinman-Newton iteration from an Ackermann-placed stabilizing gain.
pub fn solve_care(
    a: &Mat,
    b: &[f64],
    q: &Mat,
    r: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CareSolution> {
    let n = a.n;
    if b.len() != n || q.n != n {
        return Err(Error::Shape("A, B and Q must agree in dimension".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidSpec("R must be positive".into()));
    }
    let scale = 1.0 + a.max_abs();
    let mut desired = vec![1.0];
    for k in 0..n {
        // Multiply by (s + scale * (1 + k / 2)).
        let root = scale * (1.0 + 0.5 * k as f64);
        let mut next = vec![0.0; desired.len() + 1];
        for (i, &c) in desired.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c * root;
        }
        desired = next;
    }
    let mut k = ackermann(a, b, &desired)?;
    let mut last_residual = f64::INFINITY;
    for it in 1..=max_iter {
        let f = a.add(&Mat::outer(b, &k).scale(-1.0));
        let m = q.add(&Mat::outer(&k, &k).scale(r));
        let p = solve_lyapunov(&f, &m)?;
        k = p.mul_vec(b).iter().map(|v| v / r).collect();
        let residual = care_residual(a, b, q, r, &p).max_abs();
        if residual < tol {
            return Ok(CareSolution {
                p,
                k,
                iterations: it,
                residual,
            });
        }
        last_residual = residual;
    }
    Err(Error::RiccatiNonConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_integrator() {
        let s = solve_care(
            &Mat::diag(&[0.0]),
            &[1.0],
            &Mat::diag(&[1.0]),
            1.0,
            1e-12,
            50,
        )
        .unwrap();
        assert!((s.p.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((s.k[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_unstable() {
        let s = solve_care(
            &Mat::diag(&[1.0]),
            &[1.0],
            &Mat::diag(&[1.0]),
            1.0,
            1e-12,
            50,
        )
        .unwrap();
        assert!((s.p.get(0, 0) - (1.0 + 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_scalar() {
        // -2 p + 1 = 0 for F = -1, M = 1.
        let p = solve_lyapunov(&Mat::diag(&[-1.0]), &Mat::diag(&[1.0])).unwrap();
        assert!((p.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn roots_of_known_cubic() {
        // (s + 1)(s + 2)(s + 3)
        let mut r: Vec<f64> = poly_roots(&[1.0, 6.0, 11.0, 6.0])
            .iter()
            .map(|z| z.re)
            .collect();
        r.sort_by(f64::total_cmp);
        for (got, want) in r.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn char_poly_of_companion() {
        let a = Mat::from_rows([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-6.0, -11.0, -6.0]]);
        let c = char_poly(&a);
        for (got, want) in c.iter().zip([1.0, 6.0, 11.0, 6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ackermann_places_poles() {
        let a = Mat::from_rows([[0.0, 1.0], [2.0, 0.0]]);
        let k = ackermann(&a, &[0.0, 1.0], &[1.0, 3.0, 2.0]).unwrap();
        let cl = a.add(&Mat::outer(&[0.0, 1.0], &k).scale(-1.0));
        let c = char_poly(&cl);
        assert!((c[1] - 3.0).abs() < 1e-12 && (c[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        assert!(matches!(
            solve_linear(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }
}
