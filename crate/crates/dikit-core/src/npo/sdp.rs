//! Dense primal–dual interior-point solver for the moment relaxations.
//!
//! Equality constraints are eliminated by a null-space reduction, leaving
//! `min cᵀz  s.t.  F₀ + Σ zⱼ Fⱼ ⪰ 0` blockwise. The iteration is a
//! Mehrotra predictor–corrector with the XZ linearization; outer bounds are
//! extracted from the PSD-projected dual with a safe-side rigor shift
//! covering its equality residual.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{eigh, C64, ComplexMatrix};
use crate::npo::moment::{MomentProblem, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Primal–dual solve outcome in the problem's original sense.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    /// Objective at the returned (near-feasible) optimizer.
    pub primal_value: f64,
    /// Outer-bound side before the rigor shift.
    pub dual_value: f64,
    /// Safe-side certified bound: dual value shifted by the rigor term
    /// (towards larger values for max problems, smaller for min).
    pub certified_value: f64,
    pub rigor_shift: f64,
    /// PSD violation (most negative eigenvalue, clipped at 0) of the
    /// returned optimizer's blocks.
    pub primal_residual: f64,
    /// ℓ₂ equality residual of the PSD-projected dual certificate.
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

const MAX_ITER: usize = 200;

/// Small dense symmetric-friendly real matrix.
#[derive(Debug, Clone)]
struct Rm {
    n: usize,
    a: Vec<f64>,
}

impl Rm {
    fn zeros(n: usize) -> Self {
        Rm {
            n,
            a: vec![0.0; n * n],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = Rm::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    fn add_scaled(&mut self, other: &Rm, s: f64) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += s * y;
        }
    }

    fn scale(&mut self, s: f64) {
        for x in self.a.iter_mut() {
            *x *= s;
        }
    }

    fn mul(&self, other: &Rm) -> Rm {
        let n = self.n;
        let mut out = Rm::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let v = self.a[i * n + k];
                if v == 0.0 {
                    continue;
                }
                let src = &other.a[k * n..(k + 1) * n];
                let dst = &mut out.a[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        out
    }

    fn dot(&self, other: &Rm) -> f64 {
        self.a.iter().zip(&other.a).map(|(x, y)| x * y).sum()
    }

    fn trace_of_product(&self, other: &Rm) -> f64 {
        // tr(A·B) = Σ_{ij} A[i,j]·B[j,i]
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.a[i * n + j] * other.a[j * n + i];
            }
        }
        acc
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.a[i * n + j] + self.a[j * n + i]);
                self.a[i * n + j] = v;
                self.a[j * n + i] = v;
            }
        }
    }

    fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Lower Cholesky factor; None when not positive definite.
    fn cholesky(&self) -> Option<Rm> {
        let n = self.n;
        let mut l = Rm::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.a[i * n + j];
                for k in 0..j {
                    sum -= l.a[i * n + k] * l.a[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return None;
                    }
                    l.a[i * n + j] = sum.sqrt();
                } else {
                    l.a[i * n + j] = sum / l.a[j * n + j];
                }
            }
        }
        Some(l)
    }

    /// Inverse from a Cholesky factor of self.
    fn inverse_from_cholesky(l: &Rm) -> Rm {
        let n = l.n;
        // Invert the lower factor column by column, then L⁻ᵀ·L⁻¹.
        let mut linv = Rm::zeros(n);
        for j in 0..n {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            for i in j..n {
                let mut sum = col[i];
                for k in j..i {
                    sum -= l.a[i * n + k] * col[k];
                }
                col[i] = sum / l.a[i * n + i];
            }
            for i in 0..n {
                linv.a[i * n + j] = col[i];
            }
        }
        let mut out = Rm::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut sum = 0.0;
                for k in i.max(j)..n {
                    sum += linv.a[k * n + i] * linv.a[k * n + j];
                }
                out.a[i * n + j] = sum;
            }
        }
        out
    }

    fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.n, self.n, |i, j| C64::new(self.get(i, j), 0.0))
    }

    fn min_eig(&self) -> Result<f64> {
        let mut sym = self.clone();
        sym.symmetrize();
        let (vals, _) = eigh(&sym.to_complex())?;
        Ok(vals.first().copied().unwrap_or(0.0))
    }
}

/// Solve A·x = b with partial-pivoting LU; A is consumed.
fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut best = col;
        let mut best_val = a[perm[col] * n + col].abs();
        for r in col + 1..n {
            let v = a[perm[r] * n + col].abs();
            if v > best_val {
                best = r;
                best_val = v;
            }
        }
        if best_val < 1e-300 {
            return None;
        }
        perm.swap(col, best);
        let prow = perm[col];
        let pivot = a[prow * n + col];
        for r in col + 1..n {
            let row = perm[r];
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = factor;
            for c in col + 1..n {
                a[row * n + c] -= factor * a[prow * n + c];
            }
            b[row] -= factor * b[prow];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let row = perm[col];
        let mut sum = b[row];
        for c in col + 1..n {
            sum -= a[row * n + c] * x[c];
        }
        x[col] = sum / a[row * n + col];
    }
    Some(x)
}

struct Block {
    f0: Rm,
    fs: Vec<Rm>,
    x: Rm,
    y: Rm,
}

impl Block {
    fn constraint_matrix(&self, z: &[f64]) -> Rm {
        let mut m = self.f0.clone();
        for (fj, &zj) in self.fs.iter().zip(z) {
            m.add_scaled(fj, zj);
        }
        m
    }
}

/// Largest step α with M + α·dM still PSD, capped at 1 and scaled by τ.
fn max_step(m: &Rm, dm: &Rm, tau: f64) -> Result<f64> {
    let l = match m.cholesky() {
        Some(l) => l,
        // Should not happen for interior iterates; take a conservative step.
        None => return Ok(1e-4),
    };
    // S = L⁻¹ dM L⁻ᵀ via two triangular solves.
    let n = m.n;
    let mut s = Rm::zeros(n);
    // First: solve L W = dM (column-wise forward substitution).
    let mut w = Rm::zeros(n);
    for j in 0..n {
        for i in 0..n {
            let mut sum = dm.get(i, j);
            for k in 0..i {
                sum -= l.get(i, k) * w.get(k, j);
            }
            w.set(i, j, sum / l.get(i, i));
        }
    }
    // Second: solve S Lᵀ = W, i.e. L Sᵀ = Wᵀ.
    for i in 0..n {
        for j in 0..n {
            let mut sum = w.get(i, j);
            for k in 0..j {
                sum -= s.get(i, k) * l.get(j, k);
            }
            s.set(i, j, sum / l.get(j, j));
        }
    }
    s.symmetrize();
    let lam_min = s.min_eig()?;
    if lam_min >= -1e-12 {
        Ok(1.0)
    } else {
        Ok((tau * (-1.0 / lam_min)).min(1.0))
    }
}

struct Reduced {
    blocks: Vec<Block>,
    c: Vec<f64>,
    /// orig = sign·(internal min value) + offset
    sign: f64,
    offset: f64,
    trace_cap: f64,
}

/// PSD-project the dual blocks and return (−Σ⟨F₀,Y′⟩, ‖⟨Fⱼ,Y′⟩ − cⱼ‖₂):
/// the dual objective of an exactly-PSD certificate and its equality
/// residual.
fn project_dual(red: &Reduced, ys: &[&Rm]) -> Result<(f64, f64)> {
    let m = red.c.len();
    let mut dobj = 0.0f64;
    let mut r = vec![0.0f64; m];
    for (j, rj) in r.iter_mut().enumerate() {
        *rj = -red.c[j];
    }
    for (b, y_raw) in red.blocks.iter().zip(ys) {
        let mut y = (*y_raw).clone();
        y.symmetrize();
        let (vals, vecs) = eigh(&y.to_complex())?;
        let n = y.n;
        let mut proj = Rm::zeros(n);
        for k in 0..n {
            let lam = vals[k];
            if lam <= 0.0 {
                continue;
            }
            for i in 0..n {
                for jj in 0..n {
                    proj.a[i * n + jj] += lam * (vecs.get(i, k) * vecs.get(jj, k).conj()).re;
                }
            }
        }
        dobj -= b.f0.dot(&proj);
        for (j, rj) in r.iter_mut().enumerate() {
            *rj += b.fs[j].dot(&proj);
        }
    }
    let resid = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((dobj, resid))
}

/// Eliminate the equality constraints G·y = t, parameterizing y = y_p + N·z.
fn reduce(p: &MomentProblem) -> Result<std::result::Result<Reduced, SdpSolution>> {
    let n = p.var_count();
    let rows = p.eq_constraints.len();
    let mut g = vec![0.0f64; rows * n];
    let mut t = vec![0.0f64; rows];
    for (r, con) in p.eq_constraints.iter().enumerate() {
        for &(v, c) in &con.coeffs {
            g[r * n + v] += c;
        }
        t[r] = con.rhs;
    }
    // Gram matrix GᵀG and Gᵀt.
    let mut gram = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += g[r * n + i] * g[r * n + j];
            }
            gram.set(i, j, C64::new(acc, 0.0));
        }
    }
    let mut gt = vec![0.0f64; n];
    for i in 0..n {
        for r in 0..rows {
            gt[i] += g[r * n + i] * t[r];
        }
    }
    let (vals, vecs) = eigh(&gram)?;
    let vmax = vals.last().copied().unwrap_or(0.0).max(1.0);
    let rank_tol = vmax * 1e-12;

    // Minimum-norm particular solution via the pseudo-inverse.
    let mut y_p = vec![0.0f64; n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= rank_tol {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..n {
            proj += vecs.get(i, k).re * gt[i];
        }
        let w = proj / lam;
        for i in 0..n {
            y_p[i] += w * vecs.get(i, k).re;
        }
    }
    // Consistency of the equality system.
    let mut worst = 0.0f64;
    for r in 0..rows {
        let mut acc = 0.0;
        for i in 0..n {
            acc += g[r * n + i] * y_p[i];
        }
        worst = worst.max((acc - t[r]).abs());
    }
    if worst > 1e-8 {
        return Ok(Err(SdpSolution {
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            certified_value: f64::NAN,
            rigor_shift: 0.0,
            primal_residual: worst,
            dual_residual: worst,
            gap: f64::NAN,
            iterations: 0,
            status: SdpStatus::Infeasible,
        }));
    }

    // Null-space basis.
    let null_cols: Vec<usize> = (0..n).filter(|&k| vals[k] <= rank_tol).collect();
    let m = null_cols.len();
    let nmat: Vec<f64> = {
        let mut nm = vec![0.0f64; n * m];
        for (j, &k) in null_cols.iter().enumerate() {
            for i in 0..n {
                nm[i * m + j] = vecs.get(i, k).re;
            }
        }
        nm
    };

    let mut f = vec![0.0f64; n];
    for &(v, c) in &p.objective.coeffs {
        f[v] += c;
    }
    let sign = match p.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let offset: f64 = f.iter().zip(&y_p).map(|(a, b)| a * b).sum();
    let mut c = vec![0.0f64; m];
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..n {
            acc += f[i] * nmat[i * m + j];
        }
        c[j] = sign * acc;
    }

    let mut blocks = Vec::with_capacity(p.blocks.len());
    for ab in &p.blocks {
        let mut f0 = Rm::zeros(ab.dim);
        for (i, &v) in ab.constant.iter().enumerate() {
            f0.a[i] = v;
        }
        let mut fs = vec![Rm::zeros(ab.dim); m];
        for (var, entries) in &ab.terms {
            let w = y_p[*var];
            for &(i, j, coef) in entries {
                f0.a[i * ab.dim + j] += w * coef;
            }
            for (jj, fj) in fs.iter_mut().enumerate() {
                let nv = nmat[*var * m + jj];
                if nv == 0.0 {
                    continue;
                }
                for &(i, j, coef) in entries {
                    fj.a[i * ab.dim + j] += nv * coef;
                }
            }
        }
        f0.symmetrize();
        for fj in fs.iter_mut() {
            fj.symmetrize();
        }
        blocks.push(Block {
            f0,
            fs,
            x: Rm::zeros(0),
            y: Rm::zeros(0),
        });
    }

    // ‖z‖₂ ≤ ‖y − y_p‖₂ ≤ √n + ‖y_p‖₂: every feasible moment of a word of
    // norm-1 generators lies in [−1, 1].
    let yp_norm: f64 = y_p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let trace_cap = yp_norm + (n as f64).sqrt();

    Ok(Ok(Reduced {
        blocks,
        c,
        sign,
        offset,
        trace_cap,
    }))
}

/// Solve a moment problem and return the certified outcome.
pub fn solve_sdp(p: &MomentProblem) -> Result<SdpSolution> {
    let mut red = match reduce(p)? {
        Ok(r) => r,
        Err(sol) => return Ok(sol),
    };
    let m = red.c.len();

    // Fully determined system: just check feasibility of y_p.
    if m == 0 {
        let mut min_eig = f64::INFINITY;
        for b in &red.blocks {
            min_eig = min_eig.min(b.f0.min_eig()?);
        }
        let feasible = min_eig >= -1e-9;
        let value = red.sign * 0.0 + red.offset;
        return Ok(SdpSolution {
            primal_value: value,
            dual_value: value,
            certified_value: value,
            rigor_shift: 0.0,
            primal_residual: (-min_eig).max(0.0),
            dual_residual: 0.0,
            gap: 0.0,
            iterations: 0,
            status: if feasible {
                SdpStatus::Optimal
            } else {
                SdpStatus::Infeasible
            },
        });
    }

    // Interior starting point.
    let mut z = vec![0.0f64; m];
    let c_scale = 1.0 + red.c.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    for b in red.blocks.iter_mut() {
        let f0_scale = 1.0 + b.f0.max_abs();
        let n = b.f0.n;
        let mut x = Rm::identity(n);
        x.scale(10.0 * f0_scale);
        let mut y = Rm::identity(n);
        y.scale(10.0 * c_scale);
        b.x = x;
        b.y = y;
    }

    let total_dim: usize = red.blocks.iter().map(|b| b.f0.n).sum();
    let mut iterations = 0;
    let mut converged = false;
    let mut last_rp = f64::INFINITY;
    // Best primal iterate by combined merit; interior-point iterates
    // degrade numerically once μ shrinks past the attainable accuracy.
    let mut best_merit = f64::INFINITY;
    let mut best_z = z.clone();
    // Best guaranteed outer bound over all PSD-projected dual iterates
    // (internal min units): dobj_projected − ‖equality residual‖₂ · cap.
    let mut best_cert = f64::NEG_INFINITY;
    let mut best_cert_dobj = f64::NEG_INFINITY;
    let mut best_cert_resid = f64::INFINITY;

    for iter in 0..MAX_ITER {
        iterations = iter + 1;

        // Residuals.
        let rps: Vec<Rm> = red
            .blocks
            .iter()
            .map(|b| {
                let mut rp = b.x.clone();
                rp.add_scaled(&b.constraint_matrix(&z), -1.0);
                rp
            })
            .collect();
        let mut rd = vec![0.0f64; m];
        for (j, rdj) in rd.iter_mut().enumerate() {
            let mut acc = red.c[j];
            for b in &red.blocks {
                acc -= b.fs[j].dot(&b.y);
            }
            *rdj = acc;
        }
        let mu: f64 =
            red.blocks.iter().map(|b| b.x.trace_of_product(&b.y)).sum::<f64>() / total_dim as f64;

        let rp_norm = rps.iter().fold(0.0f64, |a, r| a.max(r.max_abs()));
        let rd_norm = rd.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let pobj: f64 = red.c.iter().zip(&z).map(|(a, b)| a * b).sum();
        let dobj: f64 = -red.blocks.iter().map(|b| b.f0.dot(&b.y)).sum::<f64>();
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        let f0_scale = 1.0
            + red
                .blocks
                .iter()
                .fold(0.0f64, |a, b| a.max(b.f0.max_abs()));

        if std::env::var_os("DIKIT_SDP_TRACE").is_some() {
            eprintln!(
                "iter {iter:3}  mu {mu:10.3e}  rp {rp_norm:10.3e}  rd {rd_norm:10.3e}  \
                 gap {rel_gap:10.3e}  pobj {pobj:14.9}  dobj {dobj:14.9}"
            );
        }
        let merit = (rp_norm / f0_scale).max(rd_norm / c_scale).max(rel_gap);
        if merit < best_merit {
            best_merit = merit;
            best_z.copy_from_slice(&z);
        }
        // Guaranteed outer bound from this iterate's projected dual.
        if rd_norm <= 1e-3 * c_scale {
            let ys: Vec<&Rm> = red.blocks.iter().map(|b| &b.y).collect();
            let (dobj_proj, resid) = project_dual(&red, &ys)?;
            let guaranteed = dobj_proj - resid * red.trace_cap;
            if guaranteed > best_cert {
                best_cert = guaranteed;
                best_cert_dobj = dobj_proj;
                best_cert_resid = resid;
            }
        }
        if rp_norm <= 1e-9 * f0_scale && rd_norm <= 1e-8 * c_scale && rel_gap <= 1e-9 {
            converged = true;
            break;
        }
        // Numerical floor reached: residuals grow again while μ is tiny.
        if mu < 1e-11 && merit > 100.0 * best_merit {
            converged = best_merit <= 1e-7;
            break;
        }
        last_rp = rp_norm / f0_scale;

        // Per-block inverse of X.
        let mut xinvs = Vec::with_capacity(red.blocks.len());
        let mut ok = true;
        for b in &red.blocks {
            match b.x.cholesky() {
                Some(l) => xinvs.push(Rm::inverse_from_cholesky(&l)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        // Schur matrix B_ij = Σ_blocks tr(F_i · X⁻¹ F_j Y).
        let mut schur = vec![0.0f64; m * m];
        let mut gmats: Vec<Vec<Rm>> = Vec::with_capacity(red.blocks.len());
        for (bi, b) in red.blocks.iter().enumerate() {
            let mut gs = Vec::with_capacity(m);
            for j in 0..m {
                let fy = b.fs[j].mul(&b.y);
                gs.push(xinvs[bi].mul(&fy));
            }
            for i in 0..m {
                for j in 0..m {
                    schur[i * m + j] += b.fs[i].trace_of_product(&gs[j]);
                }
            }
            gmats.push(gs);
        }
        // Tiny ridge for degenerate geometry.
        let ridge = 1e-13
            * (1.0
                + (0..m)
                    .map(|i| schur[i * m + i].abs())
                    .fold(0.0f64, f64::max));
        for i in 0..m {
            schur[i * m + i] += ridge;
        }

        // One step of iterative refinement on the Schur system.
        let solve_refined = |rhs: &[f64]| -> Option<Vec<f64>> {
            let mut dz = lu_solve(schur.clone(), m, rhs.to_vec())?;
            let mut resid = rhs.to_vec();
            for i in 0..m {
                for j in 0..m {
                    resid[i] -= schur[i * m + j] * dz[j];
                }
            }
            if let Some(corr) = lu_solve(schur.clone(), m, resid) {
                for (d, c) in dz.iter_mut().zip(corr) {
                    *d += c;
                }
            }
            Some(dz)
        };

        let rhs_common = |sigma_mu: f64,
                          corr: Option<&[(Rm, Rm)]>,
                          xinvs: &[Rm],
                          rps: &[Rm],
                          rd: &[f64]|
         -> Vec<f64> {
            let mut rhs = vec![0.0f64; m];
            for (bi, b) in red.blocks.iter().enumerate() {
                // W = σμ·X⁻¹ − Y + X⁻¹·R_p·Y − X⁻¹·(dX_aff·dY_aff)
                let mut w = xinvs[bi].clone();
                w.scale(sigma_mu);
                w.add_scaled(&b.y, -1.0);
                let rp_y = rps[bi].mul(&b.y);
                w.add_scaled(&xinvs[bi].mul(&rp_y), 1.0);
                if let Some(dirs) = corr {
                    let (dx, dy) = &dirs[bi];
                    let cross = dx.mul(dy);
                    w.add_scaled(&xinvs[bi].mul(&cross), -1.0);
                }
                for (j, rhs_j) in rhs.iter_mut().enumerate() {
                    *rhs_j += b.fs[j].trace_of_product(&w);
                }
            }
            for j in 0..m {
                rhs[j] -= rd[j];
            }
            rhs
        };

        let directions = |dz: &[f64], sigma_mu: f64, corr: Option<&[(Rm, Rm)]>| {
            let mut out = Vec::with_capacity(red.blocks.len());
            for (bi, b) in red.blocks.iter().enumerate() {
                let n = b.f0.n;
                let mut dx = Rm::zeros(n);
                for (j, fj) in b.fs.iter().enumerate() {
                    dx.add_scaled(fj, dz[j]);
                }
                dx.add_scaled(&rps[bi], -1.0);
                // dY = X⁻¹(σμI − XY − dX·Y − cross)
                let mut inner = Rm::identity(n);
                inner.scale(sigma_mu);
                inner.add_scaled(&b.x.mul(&b.y), -1.0);
                inner.add_scaled(&dx.mul(&b.y), -1.0);
                if let Some(dirs) = corr {
                    let (dxa, dya) = &dirs[bi];
                    inner.add_scaled(&dxa.mul(dya), -1.0);
                }
                let mut dy = xinvs[bi].mul(&inner);
                dy.symmetrize();
                out.push((dx, dy));
            }
            out
        };

        // Step fraction approaches 1 as the barrier parameter shrinks,
        // which matters at degenerate optima.
        let tau = if mu < 1e-7 {
            0.999
        } else if mu < 1e-3 {
            0.99
        } else {
            0.95
        };

        // Predictor (σ = 0).
        let rhs_aff = rhs_common(0.0, None, &xinvs, &rps, &rd);
        let dz_aff = match solve_refined(&rhs_aff) {
            Some(d) => d,
            None => break,
        };
        let dirs_aff = directions(&dz_aff, 0.0, None);
        let mut ap_aff = 1.0f64;
        let mut ad_aff = 1.0f64;
        for (bi, b) in red.blocks.iter().enumerate() {
            ap_aff = ap_aff.min(max_step(&b.x, &dirs_aff[bi].0, tau)?);
            ad_aff = ad_aff.min(max_step(&b.y, &dirs_aff[bi].1, tau)?);
        }
        let gap_now: f64 = red.blocks.iter().map(|b| b.x.trace_of_product(&b.y)).sum();
        let gap_aff: f64 = red
            .blocks
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let mut xa = b.x.clone();
                xa.add_scaled(&dirs_aff[bi].0, ap_aff);
                let mut ya = b.y.clone();
                ya.add_scaled(&dirs_aff[bi].1, ad_aff);
                xa.trace_of_product(&ya)
            })
            .sum();
        let sigma = ((gap_aff / gap_now).max(0.0).powi(3)).clamp(1e-10, 1.0);

        // Corrector.
        let rhs_cor = rhs_common(sigma * mu, Some(&dirs_aff), &xinvs, &rps, &rd);
        let dz = match solve_refined(&rhs_cor) {
            Some(d) => d,
            None => break,
        };
        let dirs = directions(&dz, sigma * mu, Some(&dirs_aff));
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for (bi, b) in red.blocks.iter().enumerate() {
            ap = ap.min(max_step(&b.x, &dirs[bi].0, tau)?);
            ad = ad.min(max_step(&b.y, &dirs[bi].1, tau)?);
        }

        for (j, dz_j) in dz.iter().enumerate() {
            z[j] += ap * dz_j;
        }
        let mut exploded = false;
        for (bi, b) in red.blocks.iter_mut().enumerate() {
            b.x.add_scaled(&dirs[bi].0, ap);
            b.y.add_scaled(&dirs[bi].1, ad);
            let worst = b.x.max_abs().max(b.y.max_abs());
            if !worst.is_finite() || worst > 1e14 {
                exploded = true;
            }
        }
        // Diverging iterates signal an infeasible (or unbounded) problem;
        // fall back to the best iterate seen.
        if exploded {
            break;
        }
    }

    // Extraction: primal feasibility of the best z; the dual certificate
    // is the best PSD-projected guaranteed bound seen during the run.
    let z = best_z;
    let mut primal_viol = 0.0f64;
    for b in &red.blocks {
        let me = b.constraint_matrix(&z).min_eig()?;
        primal_viol = primal_viol.max((-me).max(0.0));
    }
    let pobj_int: f64 = red.c.iter().zip(&z).map(|(a, b)| a * b).sum();

    if best_cert == f64::NEG_INFINITY {
        // No iterate ever had a small enough dual residual; project the
        // final one as a last resort.
        let ys: Vec<&Rm> = red.blocks.iter().map(|b| &b.y).collect();
        let (dobj_proj, resid) = project_dual(&red, &ys)?;
        best_cert = dobj_proj - resid * red.trace_cap;
        best_cert_dobj = dobj_proj;
        best_cert_resid = resid;
    }
    let dual_residual = best_cert_resid;
    let shift = dual_residual * red.trace_cap;

    let primal_value = red.sign * pobj_int + red.offset;
    let dual_value = red.sign * best_cert_dobj + red.offset;
    let certified_value = red.sign * best_cert + red.offset;
    let gap = (primal_value - dual_value).abs();

    let status = if converged && gap <= 1e-6 && primal_viol <= 1e-7 && dual_residual <= 1e-7 {
        SdpStatus::Optimal
    } else if primal_viol > 1e-5 || (!converged && last_rp > 1e-5 && iterations >= MAX_ITER) {
        SdpStatus::Infeasible
    } else {
        SdpStatus::MaxIter
    };

    Ok(SdpSolution {
        primal_value,
        dual_value,
        certified_value,
        rigor_shift: shift,
        primal_residual: primal_viol,
        dual_residual,
        gap,
        iterations,
        status,
    })
}
