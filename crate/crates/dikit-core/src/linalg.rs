//! Dense complex-matrix substrate: Hermitian eigendecomposition, tensor
//! products, partial trace, and operator-norm utilities.
//!
//! All tensor factors use the row-major convention: the leftmost factor is
//! the most significant index. Matrices stay small (≤ ~256×256), so every
//! routine here is a straightforward dense loop.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance below which a matrix is accepted as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Eigenvalues below this threshold count as zero when determining
/// numerical rank (purifications, isometry supports).
pub const RANK_TOL: f64 = 1e-12;

/// Ordered list of tensor-factor dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSpace {
    dims: Vec<usize>,
}

impl FactorSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::DimensionMismatch(
                "factor dimensions must be positive".into(),
            ));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factor_count(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides; `strides[k]` is the flat-index weight of factor `k`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in entries.iter().enumerate() {
            m.data[i * n + i] = C64::new(x, 0.0);
        }
        m
    }

    /// Rank-one |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m.data[i * v.len() + j] = a * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matrix product dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        // i-k-j loop order keeps the inner loop contiguous in both operands.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max entrywise |M − M†|.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol
    }

    /// (M + M†)/2, for accumulated round-off after repeated products.
    pub fn hermitize(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self.get(i, j) + self.get(j, i).conj()) * 0.5
        })
    }

    /// Kronecker product; `(a⊗b)[(i·rb+k),(j·cb+l)] = a[i,j]·b[k,l]`.
    pub fn kron(&self, other: &Self) -> Self {
        let (ra, ca) = (self.rows, self.cols);
        let (rb, cb) = (other.rows, other.cols);
        let mut out = Self::zeros(ra * rb, ca * cb);
        for i in 0..ra {
            for j in 0..ca {
                let a = self.get(i, j);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..rb {
                    for l in 0..cb {
                        out.data[(i * rb + k) * (ca * cb) + (j * cb + l)] = a * other.get(k, l);
                    }
                }
            }
        }
        out
    }

    /// Principal square root of a PSD Hermitian matrix. Eigenvalues in
    /// `[-tol, 0)` are clipped to zero; anything more negative is rejected.
    pub fn sqrt_psd(&self, tol: f64) -> Result<Self> {
        let (vals, vecs) = eigh(self)?;
        if let Some(&lo) = vals.first() {
            if lo < -tol {
                return Err(Error::InvalidState(format!(
                    "matrix is not PSD: min eigenvalue {lo:.3e}"
                )));
            }
        }
        let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
        Ok(vecs.mul(&ComplexMatrix::diag(&roots)).mul(&vecs.adjoint()))
    }
}

/// Inner product ⟨u|v⟩ = Σ conj(u_i) v_i.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec_norm(u: &[C64]) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// |u⟩ ⊗ |v⟩ in row-major order.
pub fn kron_vec(u: &[C64], v: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for a in u {
        for b in v {
            out.push(a * b);
        }
    }
    out
}

/// Hermitian eigendecomposition, eigenvalues ascending, `m ≈ V diag(λ) V†`.
///
/// Householder tridiagonalization followed by implicit-shift QL on the real
/// tridiagonal form; the unitary accumulates through both stages.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigh requires a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let defect = m.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::NonHermitian(defect));
    }
    let n = m.rows;
    let mut a = m.hermitize();
    let mut q = ComplexMatrix::identity(n);
    let mut d = vec![0.0f64; n];
    if n == 1 {
        d[0] = a.get(0, 0).re;
        return Ok((d, q));
    }

    // Subdiagonal entries produced by the reduction (complex until the
    // phase sweep below).
    let mut e = vec![C64::new(0.0, 0.0); n - 1];

    // Householder reduction to tridiagonal form. The reflector is built
    // from the max-scaled column and normalized to unit length, so every
    // intermediate stays O(1) even for columns with denormal-scale norms.
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let scale = (k + 1..n).fold(0.0f64, |acc, i| acc.max(a.get(i, k).norm()));
        if scale < 1e-300 {
            e[k] = C64::new(0.0, 0.0);
            continue;
        }
        let inv_scale = 1.0 / scale;
        let mut u: Vec<C64> = (0..len)
            .map(|i| a.get(k + 1 + i, k) * inv_scale)
            .collect();
        let xhat_norm = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let xnorm = scale * xhat_norm;
        let x0 = u[0];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let beta = -phase * xnorm;
        // u = x̂ + phase·‖x̂‖·e1; |u₀| = |x̂₀| + ‖x̂‖ avoids cancellation.
        u[0] += phase * xhat_norm;
        let unorm = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in u.iter_mut() {
            *c /= unorm;
        }

        // Similarity transform of the trailing block with H = I − 2uu†:
        // B ← B − u p† − p u†, w = B u, s = u†w, p = 2w − 2s·u.
        let mut w = vec![C64::new(0.0, 0.0); len];
        for i in 0..len {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..len {
                acc += a.get(k + 1 + i, k + 1 + j) * u[j];
            }
            w[i] = acc;
        }
        let s: C64 = u.iter().zip(&w).map(|(ui, wi)| ui.conj() * wi).sum();
        let p: Vec<C64> = w
            .iter()
            .zip(&u)
            .map(|(wi, ui)| (wi - ui * s) * 2.0)
            .collect();
        for i in 0..len {
            for j in 0..len {
                let upd = u[i] * p[j].conj() + p[i] * u[j].conj();
                let cur = a.get(k + 1 + i, k + 1 + j);
                a.set(k + 1 + i, k + 1 + j, cur - upd);
            }
        }
        // Column k collapses to the single subdiagonal entry β.
        a.set(k + 1, k, beta);
        a.set(k, k + 1, beta.conj());
        for i in k + 2..n {
            a.set(i, k, C64::new(0.0, 0.0));
            a.set(k, i, C64::new(0.0, 0.0));
        }
        e[k] = beta;

        // Accumulate Q ← Q·H, touching columns k+1.. only.
        for r in 0..n {
            let mut qu = C64::new(0.0, 0.0);
            for i in 0..len {
                qu += q.get(r, k + 1 + i) * u[i];
            }
            qu *= 2.0;
            for i in 0..len {
                let cur = q.get(r, k + 1 + i);
                q.set(r, k + 1 + i, cur - qu * u[i].conj());
            }
        }
    }
    e[n - 2] = a.get(n - 1, n - 2);
    for i in 0..n {
        d[i] = a.get(i, i).re;
    }

    // Phase sweep: absorb subdiagonal phases into Q so the tridiagonal
    // matrix becomes real.
    let mut er = vec![0.0f64; n - 1];
    let mut dphase = C64::new(1.0, 0.0);
    for k in 0..n - 1 {
        // Column k of Q picks up the accumulated phase.
        if (dphase - C64::new(1.0, 0.0)).norm() > 0.0 {
            for r in 0..n {
                let cur = q.get(r, k);
                q.set(r, k, cur * dphase);
            }
        }
        let ek = e[k];
        er[k] = ek.norm();
        if er[k] > 0.0 {
            dphase *= ek / er[k];
        }
    }
    if (dphase - C64::new(1.0, 0.0)).norm() > 0.0 {
        for r in 0..n {
            let cur = q.get(r, n - 1);
            q.set(r, n - 1, cur * dphase);
        }
    }

    if std::env::var_os("DIKIT_EIGH_TRACE").is_some() {
        let bad_d = d.iter().filter(|x| !x.is_finite()).count();
        let bad_e = er.iter().filter(|x| !x.is_finite()).count();
        if bad_d + bad_e > 0 {
            eprintln!("tridiagonalization produced {bad_d}+{bad_e} non-finite entries");
        }
    }

    ql_implicit(&mut d, &mut er, |col, c, s| {
        // Givens rotation on columns col, col+1 of Q.
        for r in 0..n {
            let f = q.get(r, col + 1);
            let g = q.get(r, col);
            q.set(r, col + 1, g * s + f * c);
            q.set(r, col, g * c - f * s);
        }
    })?;

    // Sort ascending, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let sorted_d: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let sorted_q = ComplexMatrix::from_fn(n, n, |i, j| q.get(i, order[j]));
    Ok((sorted_d, sorted_q))
}

/// Implicit-shift QL on a real symmetric tridiagonal matrix `(d, e)`.
/// `rotate(col, c, s)` receives every Givens rotation for accumulation.
fn ql_implicit(
    d: &mut [f64],
    e: &mut [f64],
    mut rotate: impl FnMut(usize, f64, f64),
) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    // e is padded to length n with a trailing zero for index convenience.
    let mut ev = vec![0.0f64; n];
    ev[..n - 1].copy_from_slice(e);

    // Absolute deflation floor: without it, exactly-zero diagonal pairs
    // (rank-deficient inputs) can trap denormal off-diagonals forever.
    // Deflating at ε·‖T‖ keeps the reduction backward stable.
    let anorm = d
        .iter()
        .chain(ev.iter())
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    let floor = f64::EPSILON * anorm;

    const MAX_SWEEPS: usize = 50;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the first negligible off-diagonal at or after l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if ev[m].abs() <= f64::EPSILON * dd + floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                if std::env::var_os("DIKIT_EIGH_TRACE").is_some() {
                    eprintln!(
                        "ql stuck: l={l} m={m} d[l..=m]={:?} ev[l..m]={:?}",
                        &d[l..=m],
                        &ev[l..m]
                    );
                }
                return Err(Error::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * ev[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + ev[l] / denom;
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut i = m;
            while i > l {
                let i1 = i - 1;
                let f = s * ev[i1];
                let b = c * ev[i1];
                r = f.hypot(g);
                ev[i] = r;
                if r == 0.0 {
                    d[i] -= p;
                    ev[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i] - p;
                r = (d[i1] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i] = g + p;
                g = c * r - b;
                rotate(i1, c, s);
                i -= 1;
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            ev[l] = g;
            ev[m] = 0.0;
        }
    }
    Ok(())
}

/// Operator norm max|λ| of a Hermitian matrix.
pub fn op_norm(m: &ComplexMatrix) -> Result<f64> {
    let (vals, _) = eigh(m)?;
    Ok(vals.iter().map(|l| l.abs()).fold(0.0, f64::max))
}

/// Partial trace, keeping the listed factors (in their original order).
pub fn partial_trace(m: &ComplexMatrix, space: &FactorSpace, keep: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() || m.rows != space.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but the factor space has total dimension {}",
            m.rows,
            m.cols,
            space.total_dim()
        )));
    }
    let nf = space.factor_count();
    for &k in keep {
        if k >= nf {
            return Err(Error::BadFactorIndex {
                index: k,
                count: nf,
            });
        }
    }
    let mut seen = vec![false; nf];
    for &k in keep {
        if seen[k] {
            return Err(Error::BadFactorIndex {
                index: k,
                count: nf,
            });
        }
        seen[k] = true;
    }
    let traced: Vec<usize> = (0..nf).filter(|k| !seen[*k]).collect();
    let strides = space.strides();
    let dims = space.dims();

    let keep_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // Flat offsets contributed by every kept (resp. traced) multi-index.
    let offsets = |factors: &[usize], count: usize| -> Vec<usize> {
        let mut offs = vec![0usize; count];
        for (flat, off) in offs.iter_mut().enumerate() {
            let mut acc = 0usize;
            let mut r = flat;
            for &f in factors.iter().rev() {
                acc += (r % dims[f]) * strides[f];
                r /= dims[f];
            }
            *off = acc;
        }
        offs
    };
    let keep_offs = offsets(keep, keep_dim);
    let traced_offs = offsets(&traced, traced_dim);

    let mut out = ComplexMatrix::zeros(keep_dim, keep_dim);
    for (i, &oi) in keep_offs.iter().enumerate() {
        for (j, &oj) in keep_offs.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &ot in &traced_offs {
                acc += m.get(oi + ot, oj + ot);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Apply an operator acting on a single tensor factor to a state vector.
pub fn apply_factor_op(
    amps: &[C64],
    space: &FactorSpace,
    op: &ComplexMatrix,
    factor: usize,
) -> Result<Vec<C64>> {
    let nf = space.factor_count();
    if factor >= nf {
        return Err(Error::BadFactorIndex {
            index: factor,
            count: nf,
        });
    }
    let dims = space.dims();
    if amps.len() != space.total_dim() || op.rows() != dims[factor] || !op.is_square() {
        return Err(Error::DimensionMismatch(
            "operator/state dimensions do not match the factor space".into(),
        ));
    }
    let d = dims[factor];
    let stride = space.strides()[factor];
    let outer: usize = dims[..factor].iter().product();
    let inner_dim: usize = dims[factor + 1..].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for o in 0..outer {
        for r in 0..inner_dim {
            let base = o * d * stride + r;
            for i in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..d {
                    let a = op.get(i, j);
                    if a.norm_sqr() > 0.0 {
                        acc += a * amps[base + j * stride];
                    }
                }
                out[base + i * stride] = acc;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let g = ComplexMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        g.add(&g.adjoint()).scale_re(0.5)
    }

    pub(crate) fn random_involution(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let h = random_hermitian(rng, n);
        let (_, v) = eigh(&h).unwrap();
        let signs: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        v.mul(&ComplexMatrix::diag(&signs)).mul(&v.adjoint())
    }

    #[test]
    fn eigh_identity() {
        let (vals, vecs) = eigh(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(vals, vec![1.0, 1.0]);
        assert!(vecs.max_abs_diff(&ComplexMatrix::identity(2)) <= 1e-14);
    }

    #[test]
    fn eigh_pauli_z() {
        let z = ComplexMatrix::diag(&[1.0, -1.0]);
        let (vals, _) = eigh(&z).unwrap();
        assert_eq!(vals, vec![-1.0, 1.0]);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = ComplexMatrix::zeros(2, 2);
        m.set(0, 1, C64::new(1.0, 0.0));
        match eigh(&m) {
            Err(Error::NonHermitian(_)) => {}
            other => panic!("expected NonHermitian, got {other:?}"),
        }
    }

    #[test]
    fn eigh_reconstructs_random_matrices() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for n in [2usize, 3, 5, 8, 13] {
            let m = random_hermitian(&mut rng, n);
            let (vals, vecs) = eigh(&m).unwrap();
            let rec = vecs.mul(&ComplexMatrix::diag(&vals)).mul(&vecs.adjoint());
            assert!(
                rec.max_abs_diff(&m) <= 1e-10,
                "reconstruction residual too large for n={n}"
            );
            let unit = vecs.adjoint().mul(&vecs);
            assert!(unit.max_abs_diff(&ComplexMatrix::identity(n)) <= 1e-10);
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-14, "eigenvalues not ascending");
            }
        }
    }

    #[test]
    fn eigh_handles_degenerate_spectra() {
        // kron(Z, I2) has eigenvalues {-1, -1, 1, 1}.
        let z = ComplexMatrix::diag(&[1.0, -1.0]);
        let m = z.kron(&ComplexMatrix::identity(2));
        let (vals, vecs) = eigh(&m).unwrap();
        assert!(vals
            .iter()
            .zip([-1.0, -1.0, 1.0, 1.0].iter())
            .all(|(a, b)| (a - b).abs() <= 1e-12));
        let rec = vecs.mul(&ComplexMatrix::diag(&vals)).mul(&vecs.adjoint());
        assert!(rec.max_abs_diff(&m) <= 1e-12);
    }

    #[test]
    fn kron_matches_direct_expansion() {
        let i2 = ComplexMatrix::identity(2);
        assert!(i2.kron(&i2).max_abs_diff(&ComplexMatrix::identity(4)) == 0.0);
        let z = ComplexMatrix::diag(&[1.0, -1.0]);
        let zi = z.kron(&i2);
        assert!(zi.max_abs_diff(&ComplexMatrix::diag(&[1.0, 1.0, -1.0, -1.0])) == 0.0);
    }

    #[test]
    fn kron_xx_fixes_phi_plus() {
        let x = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let xx = x.kron(&x);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi: Vec<C64> = vec![
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s, 0.0),
        ];
        let out = xx.matvec(&phi);
        for (a, b) in out.iter().zip(&phi) {
            assert!((a - b).norm() <= 1e-15);
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = random_hermitian(&mut rng, 2);
        let y = random_hermitian(&mut rng, 3);
        let space = FactorSpace::new(vec![2, 3]).unwrap();
        let kron = x.kron(&y);
        let reduced = partial_trace(&kron, &space, &[0]).unwrap();
        let expect = x.scale(y.trace());
        assert!(reduced.max_abs_diff(&expect) <= 1e-12);
        // Tracing everything yields the 1x1 full trace.
        let full = partial_trace(&kron, &space, &[]).unwrap();
        assert!((full.get(0, 0) - kron.trace()).norm() <= 1e-12);
    }

    #[test]
    fn partial_trace_of_phi_plus_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = vec![
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s, 0.0),
        ];
        let rho = ComplexMatrix::outer(&phi, &phi);
        let space = FactorSpace::new(vec![2, 2]).unwrap();
        let red = partial_trace(&rho, &space, &[0]).unwrap();
        assert!(red.max_abs_diff(&ComplexMatrix::identity(2).scale_re(0.5)) <= 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_factor() {
        let space = FactorSpace::new(vec![2, 2]).unwrap();
        let m = ComplexMatrix::identity(4);
        match partial_trace(&m, &space, &[2]) {
            Err(Error::BadFactorIndex { index: 2, count: 2 }) => {}
            other => panic!("expected BadFactorIndex, got {other:?}"),
        }
    }

    #[test]
    fn op_norm_basics() {
        let z = ComplexMatrix::diag(&[1.0, -1.0]);
        assert!((op_norm(&z).unwrap() - 1.0).abs() <= 1e-14);
        assert_eq!(op_norm(&ComplexMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn involution_identity_holds() {
        // {A,B}² − [A,B]² = 4·I for Hermitian involutions of equal dimension.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..=8);
            let a = random_involution(&mut rng, n);
            let b = random_involution(&mut rng, n);
            let ab = a.mul(&b);
            let ba = b.mul(&a);
            let anti = ab.add(&ba);
            let comm = ab.sub(&ba);
            let lhs = anti.mul(&anti).sub(&comm.mul(&comm));
            let target = ComplexMatrix::identity(n).scale_re(4.0);
            assert!(lhs.max_abs_diff(&target) <= 1e-10);
        }
    }

    #[test]
    fn apply_factor_op_matches_kron() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let space = FactorSpace::new(vec![2, 3, 2]).unwrap();
        let amps: Vec<C64> = (0..space.total_dim())
            .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let op = random_hermitian(&mut rng, 3);
        let direct = apply_factor_op(&amps, &space, &op, 1).unwrap();
        let full = ComplexMatrix::identity(2)
            .kron(&op)
            .kron(&ComplexMatrix::identity(2));
        let expect = full.matvec(&amps);
        for (a, b) in direct.iter().zip(&expect) {
            assert!((a - b).norm() <= 1e-12);
        }
    }
}
