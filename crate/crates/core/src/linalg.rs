//! Dense complex matrices and the small decompositions the crate needs:
//! a multiplication kernel tuned for 24x24 density-matrix work, a cyclic
//! Jacobi eigensolver for Hermitian matrices, Householder-QR least squares,
//! and Hessenberg-QR eigenvalues for small general complex matrices.
//!
//! Storage is split into separate real and imaginary planes so the hot
//! row-times-matrix loops vectorize; `Complex` values appear only at the API
//! boundary.

use num_complex::Complex;

use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CMat<T> {
    n_rows: usize,
    n_cols: usize,
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CMat {
            n_rows,
            n_cols,
            re: vec![T::zero(); n_rows * n_cols],
            im: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.re[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = CMat::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = f(i, j);
                m.re[i * n_cols + j] = v.re;
                m.im[i * n_cols + j] = v.im;
            }
        }
        m
    }

    /// Real matrix embedded with zero imaginary plane; `data` is row-major.
    pub fn from_real(n_rows: usize, n_cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        CMat {
            n_rows,
            n_cols,
            re: data.to_vec(),
            im: vec![T::zero(); n_rows * n_cols],
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        let k = i * self.n_cols + j;
        Complex::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        let k = i * self.n_cols + j;
        self.re[k] = v.re;
        self.im[k] = v.im;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: Complex<T>) {
        let k = i * self.n_cols + j;
        self.re[k] += v.re;
        self.im[k] += v.im;
    }

    pub fn fill_zero(&mut self) {
        self.re.fill(T::zero());
        self.im.fill(T::zero());
    }

    pub fn copy_from(&mut self, src: &CMat<T>) {
        debug_assert_eq!((self.n_rows, self.n_cols), (src.n_rows, src.n_cols));
        self.re.copy_from_slice(&src.re);
        self.im.copy_from_slice(&src.im);
    }

    /// self += a * x, elementwise over the whole matrix.
    pub fn axpy(&mut self, a: Complex<T>, x: &CMat<T>) {
        debug_assert_eq!((self.n_rows, self.n_cols), (x.n_rows, x.n_cols));
        for k in 0..self.re.len() {
            let (xr, xi) = (x.re[k], x.im[k]);
            self.re[k] += a.re * xr - a.im * xi;
            self.im[k] += a.re * xi + a.im * xr;
        }
    }

    pub fn add_assign(&mut self, x: &CMat<T>) {
        debug_assert_eq!(self.re.len(), x.re.len());
        for k in 0..self.re.len() {
            self.re[k] += x.re[k];
            self.im[k] += x.im[k];
        }
    }

    pub fn sub_assign(&mut self, x: &CMat<T>) {
        debug_assert_eq!(self.re.len(), x.re.len());
        for k in 0..self.re.len() {
            self.re[k] -= x.re[k];
            self.im[k] -= x.im[k];
        }
    }

    pub fn scale(&mut self, a: Complex<T>) {
        for k in 0..self.re.len() {
            let (r, i) = (self.re[k], self.im[k]);
            self.re[k] = a.re * r - a.im * i;
            self.im[k] = a.re * i + a.im * r;
        }
    }

    pub fn trace(&self) -> Complex<T> {
        debug_assert_eq!(self.n_rows, self.n_cols);
        let mut t = Complex::new(T::zero(), T::zero());
        for i in 0..self.n_rows {
            t += self.get(i, i);
        }
        t
    }

    pub fn frob_norm(&self) -> T {
        let mut s = T::zero();
        for k in 0..self.re.len() {
            s += self.re[k] * self.re[k] + self.im[k] * self.im[k];
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for k in 0..self.re.len() {
            let a = (self.re[k] * self.re[k] + self.im[k] * self.im[k]).sqrt();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn adjoint_into(&self, out: &mut CMat<T>) {
        debug_assert_eq!((out.n_rows, out.n_cols), (self.n_cols, self.n_rows));
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                let k = i * self.n_cols + j;
                out.re[j * out.n_cols + i] = self.re[k];
                out.im[j * out.n_cols + i] = -self.im[k];
            }
        }
    }

    /// Largest entry of |A - A^dag|; zero for exactly Hermitian matrices.
    pub fn herm_defect(&self) -> T {
        debug_assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let mut m = T::zero();
        for i in 0..n {
            for j in i..n {
                let a = self.get(i, j);
                let b = self.get(j, i);
                let dr = a.re - b.re;
                let di = a.im + b.im;
                let d = (dr * dr + di * di).sqrt();
                if d > m {
                    m = d;
                }
            }
        }
        m
    }

    /// A <- (A + A^dag)/2.
    pub fn hermitize(&mut self) {
        debug_assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let half = T::of(0.5);
        for i in 0..n {
            let kii = i * n + i;
            self.im[kii] = T::zero();
            for j in (i + 1)..n {
                let kij = i * n + j;
                let kji = j * n + i;
                let re = (self.re[kij] + self.re[kji]) * half;
                let im = (self.im[kij] - self.im[kji]) * half;
                self.re[kij] = re;
                self.im[kij] = im;
                self.re[kji] = re;
                self.im[kji] = -im;
            }
        }
    }
}

/// out = a * b.
pub fn mul_into<T: Real>(a: &CMat<T>, b: &CMat<T>, out: &mut CMat<T>) {
    out.fill_zero();
    mul_acc(a, b, out);
}

/// out += a * b. Row-times-matrix accumulation; the inner loop over columns
/// of `b` is contiguous in all three operands.
pub fn mul_acc<T: Real>(a: &CMat<T>, b: &CMat<T>, out: &mut CMat<T>) {
    let (n, m, p) = (a.n_rows, a.n_cols, b.n_cols);
    debug_assert_eq!(b.n_rows, m);
    debug_assert_eq!((out.n_rows, out.n_cols), (n, p));
    for i in 0..n {
        let or = &mut out.re[i * p..(i + 1) * p];
        let oi = &mut out.im[i * p..(i + 1) * p];
        for k in 0..m {
            let ar = a.re[i * m + k];
            let ai = a.im[i * m + k];
            let br = &b.re[k * p..(k + 1) * p];
            let bi = &b.im[k * p..(k + 1) * p];
            for j in 0..p {
                or[j] += ar * br[j] - ai * bi[j];
                oi[j] += ar * bi[j] + ai * br[j];
            }
        }
    }
}

/// out -= a * b.
pub fn mul_sub<T: Real>(a: &CMat<T>, b: &CMat<T>, out: &mut CMat<T>) {
    let (n, m, p) = (a.n_rows, a.n_cols, b.n_cols);
    debug_assert_eq!(b.n_rows, m);
    debug_assert_eq!((out.n_rows, out.n_cols), (n, p));
    for i in 0..n {
        let or = &mut out.re[i * p..(i + 1) * p];
        let oi = &mut out.im[i * p..(i + 1) * p];
        for k in 0..m {
            let ar = a.re[i * m + k];
            let ai = a.im[i * m + k];
            let br = &b.re[k * p..(k + 1) * p];
            let bi = &b.im[k * p..(k + 1) * p];
            for j in 0..p {
                or[j] -= ar * br[j] - ai * bi[j];
                oi[j] -= ar * bi[j] + ai * br[j];
            }
        }
    }
}

/// out = a * b^dag. Contracts matching rows of `a` and `b`, so both inner
/// accesses are contiguous.
pub fn mul_adj_rhs_into<T: Real>(a: &CMat<T>, b: &CMat<T>, out: &mut CMat<T>) {
    let (n, m, p) = (a.n_rows, a.n_cols, b.n_rows);
    debug_assert_eq!(b.n_cols, m);
    debug_assert_eq!((out.n_rows, out.n_cols), (n, p));
    for i in 0..n {
        let ar = &a.re[i * m..(i + 1) * m];
        let ai = &a.im[i * m..(i + 1) * m];
        for j in 0..p {
            let br = &b.re[j * m..(j + 1) * m];
            let bi = &b.im[j * m..(j + 1) * m];
            let mut sr = T::zero();
            let mut si = T::zero();
            for k in 0..m {
                // a[i][k] * conj(b[j][k])
                sr += ar[k] * br[k] + ai[k] * bi[k];
                si += ai[k] * br[k] - ar[k] * bi[k];
            }
            out.re[i * p + j] = sr;
            out.im[i * p + j] = si;
        }
    }
}

/// out = a^dag * b.
pub fn mul_adj_lhs_into<T: Real>(a: &CMat<T>, b: &CMat<T>, out: &mut CMat<T>) {
    let (m, n, p) = (a.n_rows, a.n_cols, b.n_cols);
    debug_assert_eq!(b.n_rows, m);
    debug_assert_eq!((out.n_rows, out.n_cols), (n, p));
    out.fill_zero();
    for k in 0..m {
        let br = &b.re[k * p..(k + 1) * p];
        let bi = &b.im[k * p..(k + 1) * p];
        for i in 0..n {
            let ar = a.re[k * n + i];
            let ai = -a.im[k * n + i];
            let or = &mut out.re[i * p..(i + 1) * p];
            let oi = &mut out.im[i * p..(i + 1) * p];
            for j in 0..p {
                or[j] += ar * br[j] - ai * bi[j];
                oi[j] += ar * bi[j] + ai * br[j];
            }
        }
    }
}

/// Eigenvalues of a Hermitian matrix, ascending. Cyclic Jacobi; the input is
/// symmetrized storage-side first so tiny antihermitian roundoff cannot bias
/// the rotations.
pub fn hermitian_eigvals<T: Real>(a: &CMat<T>) -> Vec<T> {
    hermitian_eig_impl(a, false).0
}

/// Eigenvalues (ascending) and matching eigenvector columns.
pub fn hermitian_eig<T: Real>(a: &CMat<T>) -> (Vec<T>, CMat<T>) {
    let (vals, vecs) = hermitian_eig_impl(a, true);
    (vals, vecs.expect("vectors requested"))
}

fn hermitian_eig_impl<T: Real>(a: &CMat<T>, want_vectors: bool) -> (Vec<T>, Option<CMat<T>>) {
    debug_assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    let mut h = a.clone();
    h.hermitize();
    let mut v = want_vectors.then(|| CMat::<T>::identity(n));

    let scale = h.frob_norm().max(T::one());
    let thresh = T::epsilon() * scale;
    let two = T::of(2.0);

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let g = h.get(p, q);
                let gn = (g.re * g.re + g.im * g.im).sqrt();
                if gn <= thresh {
                    continue;
                }
                rotated = true;
                let alpha = h.get(p, p).re;
                let beta = h.get(q, q).re;
                let theta = T::of(0.5) * (two * gn).atan2(beta - alpha);
                let (c, s) = (theta.cos(), theta.sin());
                // Column phases e^{+-i phi/2} with e^{i phi} = g/|g|.
                let (cph, sph) = {
                    let phi = g.im.atan2(g.re);
                    let half = phi * T::of(0.5);
                    (half.cos(), half.sin())
                };
                let ep = Complex::new(cph, sph); // e^{+i phi/2}
                let em = Complex::new(cph, -sph); // e^{-i phi/2}
                let rpp = ep * c;
                let rpq = ep * s;
                let rqp = em * -s;
                let rqq = em * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = h.get(k, p);
                    let akq = h.get(k, q);
                    let np = akp * rpp + akq * rqp;
                    let nq = akp * rpq + akq * rqq;
                    h.set(k, p, np);
                    h.set(p, k, np.conj());
                    h.set(k, q, nq);
                    h.set(q, k, nq.conj());
                }
                let app = alpha * c * c - two * c * s * gn + beta * s * s;
                let aqq = alpha * s * s + two * c * s * gn + beta * c * c;
                h.set(p, p, Complex::new(app, T::zero()));
                h.set(q, q, Complex::new(aqq, T::zero()));
                h.set(p, q, Complex::new(T::zero(), T::zero()));
                h.set(q, p, Complex::new(T::zero(), T::zero()));

                if let Some(vm) = v.as_mut() {
                    for k in 0..n {
                        let vkp = vm.get(k, p);
                        let vkq = vm.get(k, q);
                        vm.set(k, p, vkp * rpp + vkq * rqp);
                        vm.set(k, q, vkp * rpq + vkq * rqq);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| h.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let vals: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let vecs = v.map(|vm| {
        CMat::from_fn(n, n, |i, j| vm.get(i, order[j]))
    });
    (vals, vecs)
}

/// Least-squares solution of `a x = b` for tall complex `a` via Householder
/// QR. Returns the coefficient vector of length `a.ncols()`.
pub fn qr_least_squares<T: Real>(a: &CMat<T>, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let (m, k) = (a.n_rows, a.n_cols);
    if b.len() != m || m < k {
        return Err(Error::Numerics(format!(
            "least squares needs rows >= cols, got {m}x{k} with rhs {}",
            b.len()
        )));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut v = vec![Complex::new(T::zero(), T::zero()); m];

    for j in 0..k {
        let mut norm2 = T::zero();
        for i in j..m {
            let x = r.get(i, j);
            norm2 += x.norm_sqr();
        }
        let norm = norm2.sqrt();
        if norm <= T::epsilon() * T::of(m as f64) {
            return Err(Error::Numerics(format!(
                "rank-deficient least-squares column {j}"
            )));
        }
        let x0 = r.get(j, j);
        let phase = if x0.norm() > T::zero() {
            x0 / Complex::new(x0.norm(), T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };
        let alpha = -phase * norm;
        let mut vnorm2 = T::zero();
        for i in j..m {
            let mut vi = r.get(i, j);
            if i == j {
                vi -= alpha;
            }
            v[i] = vi;
            vnorm2 += vi.norm_sqr();
        }
        if vnorm2 > T::zero() {
            let two = T::of(2.0);
            for c in j..k {
                let mut dot = Complex::new(T::zero(), T::zero());
                for i in j..m {
                    dot += v[i].conj() * r.get(i, c);
                }
                let f = dot * (two / vnorm2);
                for i in j..m {
                    let cur = r.get(i, c);
                    r.set(i, c, cur - v[i] * f);
                }
            }
            let mut dot = Complex::new(T::zero(), T::zero());
            for i in j..m {
                dot += v[i].conj() * rhs[i];
            }
            let f = dot * (two / vnorm2);
            for i in j..m {
                rhs[i] = rhs[i] - v[i] * f;
            }
        }
        r.set(j, j, alpha);
    }

    let mut x = vec![Complex::new(T::zero(), T::zero()); k];
    for j in (0..k).rev() {
        let mut s = rhs[j];
        for c in (j + 1)..k {
            s -= r.get(j, c) * x[c];
        }
        let d = r.get(j, j);
        if d.norm() <= T::epsilon() {
            return Err(Error::Numerics("singular triangular factor".into()));
        }
        x[j] = s / d;
    }
    Ok(x)
}

/// Eigenvalues of a small general complex matrix (Hessenberg reduction plus
/// explicitly shifted QR with Givens rotations). Intended for the matrix-pencil
/// companion systems, n <= 32.
pub fn small_eigenvalues<T: Real>(a: &CMat<T>) -> Result<Vec<Complex<T>>> {
    debug_assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a.get(0, 0)]);
    }
    let mut h = a.clone();
    hessenberg(&mut h);

    let eps = T::epsilon();
    let mut eigs = vec![Complex::new(T::zero(), T::zero()); n];
    let mut hi = n - 1;
    let mut iters_at_hi = 0usize;
    let mut total_iters = 0usize;
    let max_total = 120 * n;

    loop {
        // Zero negligible subdiagonals.
        for i in 0..hi {
            let s = h.get(i, i).norm() + h.get(i + 1, i + 1).norm();
            let s = if s > T::zero() { s } else { T::one() };
            if h.get(i + 1, i).norm() <= eps * s {
                h.set(i + 1, i, Complex::new(T::zero(), T::zero()));
            }
        }
        // Deflate converged 1x1 / 2x2 tails.
        if hi == 0 || h.get(hi, hi - 1).norm() == T::zero() {
            eigs[hi] = h.get(hi, hi);
            if hi == 0 {
                break;
            }
            hi -= 1;
            iters_at_hi = 0;
            continue;
        }
        if hi == 1 || h.get(hi - 1, hi - 2).norm() == T::zero() {
            let (e1, e2) = eig2(
                h.get(hi - 1, hi - 1),
                h.get(hi - 1, hi),
                h.get(hi, hi - 1),
                h.get(hi, hi),
            );
            eigs[hi - 1] = e1;
            eigs[hi] = e2;
            if hi == 1 {
                break;
            }
            hi -= 2;
            iters_at_hi = 0;
            continue;
        }

        total_iters += 1;
        iters_at_hi += 1;
        if total_iters > max_total {
            return Err(Error::Numerics("eigenvalue iteration did not converge".into()));
        }

        // Start of the unreduced block ending at hi.
        let mut lo = hi;
        while lo > 0 && h.get(lo, lo - 1).norm() > T::zero() {
            lo -= 1;
        }

        let sigma = if iters_at_hi % 20 == 0 {
            // Exceptional shift to break symmetry-stalled cycles.
            let off = h.get(hi, hi - 1).norm();
            h.get(hi, hi) + Complex::new(T::of(0.75) * off, T::zero())
        } else {
            let (e1, e2) = eig2(
                h.get(hi - 1, hi - 1),
                h.get(hi - 1, hi),
                h.get(hi, hi - 1),
                h.get(hi, hi),
            );
            let d = h.get(hi, hi);
            if (e1 - d).norm() < (e2 - d).norm() {
                e1
            } else {
                e2
            }
        };

        for i in lo..=hi {
            let d = h.get(i, i) - sigma;
            h.set(i, i, d);
        }
        // QR by Givens on the subdiagonal, then RQ.
        let mut rots = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let x = h.get(i, i);
            let y = h.get(i + 1, i);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (u, v) = if r > T::zero() {
                (x.conj() / Complex::new(r, T::zero()), y.conj() / Complex::new(r, T::zero()))
            } else {
                (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()))
            };
            for c in i..=hi {
                let hi_c = h.get(i, c);
                let hj_c = h.get(i + 1, c);
                h.set(i, c, u * hi_c + v * hj_c);
                h.set(i + 1, c, -v.conj() * hi_c + u.conj() * hj_c);
            }
            rots.push((u, v));
        }
        for (idx, (u, v)) in rots.iter().enumerate() {
            let i = lo + idx;
            let top = (i + 2).min(hi);
            for rrow in lo..=top {
                let ci = h.get(rrow, i);
                let cj = h.get(rrow, i + 1);
                h.set(rrow, i, ci * u.conj() + cj * v.conj());
                h.set(rrow, i + 1, -ci * *v + cj * *u);
            }
        }
        for i in lo..=hi {
            let d = h.get(i, i) + sigma;
            h.set(i, i, d);
        }
    }
    Ok(eigs)
}

fn eig2<T: Real>(
    a: Complex<T>,
    b: Complex<T>,
    c: Complex<T>,
    d: Complex<T>,
) -> (Complex<T>, Complex<T>) {
    let half = Complex::new(T::of(0.5), T::zero());
    let mid = (a + d) * half;
    let delta = ((a - d) * (a - d) * half * half + b * c).sqrt();
    (mid + delta, mid - delta)
}

fn hessenberg<T: Real>(h: &mut CMat<T>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for j in 0..n - 2 {
        let mut norm2 = T::zero();
        for i in (j + 1)..n {
            norm2 += h.get(i, j).norm_sqr();
        }
        let norm = norm2.sqrt();
        if norm <= T::epsilon() {
            continue;
        }
        let x0 = h.get(j + 1, j);
        let phase = if x0.norm() > T::zero() {
            x0 / Complex::new(x0.norm(), T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };
        let alpha = -phase * norm;
        let mut v = vec![Complex::new(T::zero(), T::zero()); n];
        let mut vnorm2 = T::zero();
        for i in (j + 1)..n {
            let mut vi = h.get(i, j);
            if i == j + 1 {
                vi -= alpha;
            }
            v[i] = vi;
            vnorm2 += vi.norm_sqr();
        }
        if vnorm2 <= T::zero() {
            continue;
        }
        let two = T::of(2.0);
        // Left: rows j+1.. of all columns.
        for c in j..n {
            let mut dot = Complex::new(T::zero(), T::zero());
            for i in (j + 1)..n {
                dot += v[i].conj() * h.get(i, c);
            }
            let f = dot * (two / vnorm2);
            for i in (j + 1)..n {
                let cur = h.get(i, c);
                h.set(i, c, cur - v[i] * f);
            }
        }
        // Right: columns j+1.. of all rows.
        for r in 0..n {
            let mut dot = Complex::new(T::zero(), T::zero());
            for i in (j + 1)..n {
                dot += h.get(r, i) * v[i];
            }
            let f = dot * (two / vnorm2);
            for i in (j + 1)..n {
                let cur = h.get(r, i);
                h.set(r, i, cur - f * v[i].conj());
            }
        }
        h.set(j + 1, j, alpha);
        for i in (j + 2)..n {
            h.set(i, j, Complex::new(T::zero(), T::zero()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    /// Deterministic pseudo-random stream for test matrices.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        }
        fn next_c(&mut self) -> C {
            let re = self.next_f64();
            let im = self.next_f64();
            c(re, im)
        }
    }

    fn random_mat(n: usize, m: usize, seed: u64) -> CMat<f64> {
        let mut rng = Lcg(seed);
        CMat::from_fn(n, m, |_, _| rng.next_c())
    }

    fn random_hermitian(n: usize, seed: u64) -> CMat<f64> {
        let mut a = random_mat(n, n, seed);
        a.hermitize();
        a
    }

    fn naive_mul(a: &CMat<f64>, b: &CMat<f64>) -> CMat<f64> {
        CMat::from_fn(a.nrows(), b.ncols(), |i, j| {
            let mut s = c(0.0, 0.0);
            for k in 0..a.ncols() {
                s += a.get(i, k) * b.get(k, j);
            }
            s
        })
    }

    #[test]
    fn mul_kernels_match_naive() {
        let a = random_mat(7, 5, 11);
        let b = random_mat(5, 9, 22);
        let mut out = CMat::zeros(7, 9);
        mul_into(&a, &b, &mut out);
        let expect = naive_mul(&a, &b);
        for i in 0..7 {
            for j in 0..9 {
                assert!((out.get(i, j) - expect.get(i, j)).norm() < 1e-13);
            }
        }

        let mut acc = expect.clone();
        mul_acc(&a, &b, &mut acc);
        let mut sub = acc.clone();
        mul_sub(&a, &b, &mut sub);
        for i in 0..7 {
            for j in 0..9 {
                assert!((acc.get(i, j) - expect.get(i, j) * 2.0).norm() < 1e-12);
                assert!((sub.get(i, j) - expect.get(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_mul_kernels_match_naive() {
        let a = random_mat(6, 4, 33);
        let b = random_mat(5, 4, 44);
        let mut badj = CMat::zeros(4, 5);
        b.adjoint_into(&mut badj);
        let expect = naive_mul(&a, &badj);
        let mut out = CMat::zeros(6, 5);
        mul_adj_rhs_into(&a, &b, &mut out);
        for i in 0..6 {
            for j in 0..5 {
                assert!((out.get(i, j) - expect.get(i, j)).norm() < 1e-13);
            }
        }

        let m = random_mat(6, 3, 55);
        let rhs = random_mat(6, 7, 66);
        let mut madj = CMat::zeros(3, 6);
        m.adjoint_into(&mut madj);
        let expect2 = naive_mul(&madj, &rhs);
        let mut out2 = CMat::zeros(3, 7);
        mul_adj_lhs_into(&m, &rhs, &mut out2);
        for i in 0..3 {
            for j in 0..7 {
                assert!((out2.get(i, j) - expect2.get(i, j)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn hermitize_and_defect() {
        let mut a = random_mat(5, 5, 7);
        assert!(a.herm_defect() > 0.1);
        a.hermitize();
        assert_eq!(a.herm_defect(), 0.0);
        for i in 0..5 {
            assert_eq!(a.get(i, i).im, 0.0);
        }
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let a = random_hermitian(8, 101);
        let (vals, vecs) = hermitian_eig(&a);
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // A v = lambda v for every pair.
        for j in 0..8 {
            for i in 0..8 {
                let mut av = c(0.0, 0.0);
                for k in 0..8 {
                    av += a.get(i, k) * vecs.get(k, j);
                }
                let lv = vecs.get(i, j) * vals[j];
                assert!((av - lv).norm() < 1e-10, "residual at ({i},{j})");
            }
        }
        // Orthonormal columns.
        for p in 0..8 {
            for q in 0..8 {
                let mut dot = c(0.0, 0.0);
                for k in 0..8 {
                    dot += vecs.get(k, p).conj() * vecs.get(k, q);
                }
                let expect = if p == q { 1.0 } else { 0.0 };
                assert!((dot - c(expect, 0.0)).norm() < 1e-10);
            }
        }
        // Trace and Frobenius invariants.
        let tr: f64 = vals.iter().sum();
        assert!((tr - a.trace().re).abs() < 1e-10);
        let f2: f64 = vals.iter().map(|v| v * v).sum();
        assert!((f2.sqrt() - a.frob_norm()).abs() < 1e-10);
    }

    #[test]
    fn hermitian_eigvals_diagonal() {
        let d = CMat::from_fn(4, 4, |i, j| {
            if i == j {
                c([3.0, -1.0, 2.5, 0.0][i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let vals = hermitian_eigvals(&d);
        assert_eq!(vals, vec![-1.0, 0.0, 2.5, 3.0]);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = random_mat(40, 6, 9);
        let truth: Vec<C> = (0..6).map(|k| c(k as f64 - 2.5, 0.3 * k as f64)).collect();
        let b: Vec<C> = (0..40)
            .map(|i| {
                let mut s = c(0.0, 0.0);
                for k in 0..6 {
                    s += a.get(i, k) * truth[k];
                }
                s
            })
            .collect();
        let x = qr_least_squares(&a, &b).unwrap();
        for k in 0..6 {
            assert!((x[k] - truth[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal() {
        let a = random_mat(30, 4, 77);
        let b: Vec<C> = (0..30).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
        let x = qr_least_squares(&a, &b).unwrap();
        // r = b - A x must satisfy A^dag r = 0.
        for k in 0..4 {
            let mut dot = c(0.0, 0.0);
            for i in 0..30 {
                let mut ax = c(0.0, 0.0);
                for j in 0..4 {
                    ax += a.get(i, j) * x[j];
                }
                dot += a.get(i, k).conj() * (b[i] - ax);
            }
            assert!(dot.norm() < 1e-10);
        }
    }

    #[test]
    fn small_eigenvalues_triangular() {
        let t = CMat::from_fn(4, 4, |i, j| {
            if i <= j {
                c((i + 2 * j) as f64, (j as f64) - 1.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let mut eigs = small_eigenvalues(&t).unwrap();
        let mut expect: Vec<C> = (0..4).map(|i| t.get(i, i)).collect();
        let key = |z: &C| (z.re, z.im);
        eigs.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        expect.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (e, x) in eigs.iter().zip(&expect) {
            assert!((e - x).norm() < 1e-10);
        }
    }

    #[test]
    fn small_eigenvalues_companion_roots() {
        // Companion matrix of (z - r1)(z - r2)(z - r3) with complex roots.
        let roots = [c(0.9, 0.0), c(-0.3, 0.7), c(0.2, -0.5)];
        // p(z) = z^3 + c2 z^2 + c1 z + c0
        let c2 = -(roots[0] + roots[1] + roots[2]);
        let c1 = roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2];
        let c0 = -(roots[0] * roots[1] * roots[2]);
        let mut comp = CMat::zeros(3, 3);
        comp.set(0, 2, -c0);
        comp.set(1, 2, -c1);
        comp.set(2, 2, -c2);
        comp.set(1, 0, c(1.0, 0.0));
        comp.set(2, 1, c(1.0, 0.0));
        let eigs = small_eigenvalues(&comp).unwrap();
        for r in roots {
            let best = eigs.iter().map(|e| (e - r).norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-9, "root {r} missing, eigs {eigs:?}");
        }
    }

    #[test]
    fn small_eigenvalues_trace_det_invariants() {
        for seed in [3u64, 14, 159, 2653] {
            let a = random_mat(6, 6, seed);
            let eigs = small_eigenvalues(&a).unwrap();
            let sum: C = eigs.iter().sum();
            assert!((sum - a.trace()).norm() < 1e-8, "trace mismatch seed {seed}");
            // Frobenius bound sanity: |lambda| <= ||A||_F.
            let f = a.frob_norm();
            for e in &eigs {
                assert!(e.norm() <= f + 1e-9);
            }
        }
    }

    #[test]
    fn small_eigenvalues_hermitian_cross_check() {
        let a = random_hermitian(7, 4242);
        let mut general = small_eigenvalues(&a).unwrap();
        let jacobi = hermitian_eigvals(&a);
        general.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        for (g, j) in general.iter().zip(&jacobi) {
            assert!(g.im.abs() < 1e-9);
            assert!((g.re - j).abs() < 1e-9);
        }
    }
}
