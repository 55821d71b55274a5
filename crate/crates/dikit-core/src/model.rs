//! Concrete quantum objects: Werner states, Bloch-vector measurements,
//! purifications, and the constructive machinery relating a routed two-state
//! model to an equivalent single-state model (Uhlmann isometry, Naimark
//! dilation, model translation).

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    eigh, inner, kron_vec, partial_trace, vec_norm, C64, ComplexMatrix, FactorSpace,
    HERMITICITY_TOL, RANK_TOL,
};

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_vec(
        2,
        2,
        vec![
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ],
    )
    .unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(
        2,
        2,
        vec![
            C64::new(0.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
        ],
    )
    .unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// |Φ+⟩ = (|00⟩ + |11⟩)/√2.
pub fn phi_plus() -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        C64::new(s, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
    ]
}

/// Normalized state vector on a tensor-factor space.
#[derive(Debug, Clone)]
pub struct PureState {
    space: FactorSpace,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(space: FactorSpace, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes but the space has dimension {}",
                amps.len(),
                space.total_dim()
            )));
        }
        let n = vec_norm(&amps);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "state vector norm {n} is not 1"
            )));
        }
        Ok(Self { space, amps })
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    /// Same amplitudes under a different factor grouping.
    pub fn regroup(&self, dims: Vec<usize>) -> Result<Self> {
        let space = FactorSpace::new(dims)?;
        if space.total_dim() != self.space.total_dim() {
            return Err(Error::DimensionMismatch(
                "regrouped dimensions do not multiply to the original total".into(),
            ));
        }
        Ok(Self {
            space,
            amps: self.amps.clone(),
        })
    }

    pub fn density(&self) -> DensityMatrix {
        let mat = ComplexMatrix::outer(&self.amps, &self.amps);
        DensityMatrix {
            space: self.space.clone(),
            mat,
        }
    }

    /// Reduced state on the kept factors.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix> {
        self.density().reduced(keep)
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        let w = op.matvec(&self.amps);
        inner(&self.amps, &w).re
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix with tensor structure.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    space: FactorSpace,
    mat: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(space: FactorSpace, mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_square() || mat.rows() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but the factor space has dimension {}",
                mat.rows(),
                mat.cols(),
                space.total_dim()
            )));
        }
        let defect = mat.hermiticity_defect();
        if defect > HERMITICITY_TOL {
            return Err(Error::NonHermitian(defect));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let (vals, _) = eigh(&mat)?;
        if let Some(&lo) = vals.first() {
            if lo < -1e-10 {
                return Err(Error::InvalidState(format!(
                    "not PSD: min eigenvalue {lo:.3e}"
                )));
            }
        }
        Ok(Self {
            space,
            mat: mat.hermitize(),
        })
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Partial trace onto the kept factors.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let mat = partial_trace(&self.mat, &self.space, keep)?;
        let dims: Vec<usize> = keep.iter().map(|&k| self.space.dims()[k]).collect();
        let dims = if dims.is_empty() { vec![1] } else { dims };
        Ok(DensityMatrix {
            space: FactorSpace::new(dims)?,
            mat,
        })
    }

    /// Same matrix under a different factor grouping.
    pub fn regroup(&self, dims: Vec<usize>) -> Result<Self> {
        let space = FactorSpace::new(dims)?;
        if space.total_dim() != self.space.total_dim() {
            return Err(Error::DimensionMismatch(
                "regrouped dimensions do not multiply to the original total".into(),
            ));
        }
        Ok(Self {
            space,
            mat: self.mat.clone(),
        })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eigh(&self.mat)?.0)
    }
}

/// Projective measurement: idempotent, pairwise-orthogonal effects summing
/// to the identity.
#[derive(Debug, Clone)]
pub struct Pvm {
    input_label: String,
    projectors: Vec<ComplexMatrix>,
}

impl Pvm {
    pub fn new(input_label: impl Into<String>, projectors: Vec<ComplexMatrix>) -> Result<Self> {
        if projectors.is_empty() {
            return Err(Error::InvalidState("PVM needs at least one projector".into()));
        }
        let d = projectors[0].rows();
        let tol = 1e-10;
        let mut sum = ComplexMatrix::zeros(d, d);
        for p in &projectors {
            if !p.is_square() || p.rows() != d {
                return Err(Error::DimensionMismatch(
                    "PVM projectors must share one square dimension".into(),
                ));
            }
            if p.hermiticity_defect() > tol {
                return Err(Error::NonHermitian(p.hermiticity_defect()));
            }
            if p.mul(p).max_abs_diff(p) > tol {
                return Err(Error::InvalidState("projector is not idempotent".into()));
            }
            sum = sum.add(p);
        }
        for i in 0..projectors.len() {
            for j in i + 1..projectors.len() {
                if projectors[i].mul(&projectors[j]).max_abs() > tol {
                    return Err(Error::InvalidState(format!(
                        "projectors {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        if sum.max_abs_diff(&ComplexMatrix::identity(d)) > tol {
            return Err(Error::InvalidState(
                "projectors do not sum to the identity".into(),
            ));
        }
        Ok(Self {
            input_label: input_label.into(),
            projectors,
        })
    }

    pub fn label(&self) -> &str {
        &self.input_label
    }

    pub fn outcomes(&self) -> usize {
        self.projectors.len()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].rows()
    }

    pub fn projector(&self, outcome: usize) -> &ComplexMatrix {
        &self.projectors[outcome]
    }

    pub fn projectors(&self) -> &[ComplexMatrix] {
        &self.projectors
    }

    /// ±1 observable P₀ − P₁ of a binary PVM.
    pub fn observable(&self) -> Result<ComplexMatrix> {
        if self.projectors.len() != 2 {
            return Err(Error::ShapeError(format!(
                "observable needs a binary PVM, got {} outcomes",
                self.projectors.len()
            )));
        }
        Ok(self.projectors[0].sub(&self.projectors[1]))
    }
}

/// Dichotomic ±1 qubit observable given by a unit Bloch vector.
#[derive(Debug, Clone, Copy)]
pub struct DichotomicObservable {
    bloch: [f64; 3],
}

impl DichotomicObservable {
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let n = (bloch[0] * bloch[0] + bloch[1] * bloch[1] + bloch[2] * bloch[2]).sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::RangeError(format!(
                "Bloch vector norm {n} is not 1"
            )));
        }
        Ok(Self { bloch })
    }

    /// Observable at angle θ from the z-axis in the x–z plane.
    pub fn in_xz_plane(theta: f64) -> Self {
        Self {
            bloch: [theta.sin(), 0.0, theta.cos()],
        }
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    /// a⃗·σ⃗ as a 2×2 matrix.
    pub fn matrix(&self) -> ComplexMatrix {
        let [x, y, z] = self.bloch;
        pauli_x()
            .scale_re(x)
            .add(&pauli_y().scale_re(y))
            .add(&pauli_z().scale_re(z))
    }
}

/// Werner state v·|Φ+⟩⟨Φ+| + (1−v)·I/4.
pub fn werner_state(v: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::RangeError(format!("visibility {v} outside [0,1]")));
    }
    let phi = phi_plus();
    let proj = ComplexMatrix::outer(&phi, &phi);
    let mat = proj
        .scale_re(v)
        .add(&ComplexMatrix::identity(4).scale_re((1.0 - v) / 4.0));
    DensityMatrix::new(FactorSpace::new(vec![2, 2])?, mat)
}

/// Binary PVM {(I ± a⃗·σ⃗)/2}; outcome 0 is the +1 eigenprojector.
pub fn bloch_pvm(obs: &DichotomicObservable, label: impl Into<String>) -> Pvm {
    let m = obs.matrix();
    let id = ComplexMatrix::identity(2);
    let p0 = id.add(&m).scale_re(0.5);
    let p1 = id.sub(&m).scale_re(0.5);
    Pvm::new(label, vec![p0, p1]).expect("Bloch projectors always form a PVM")
}

/// Purification ∑√λᵢ |vᵢ⟩|i⟩ with environment dimension equal to the
/// numerical rank; the environment is appended as a new trailing factor.
pub fn purify(rho: &DensityMatrix) -> Result<PureState> {
    purify_with_env(rho, 0)
}

/// Purification with the environment padded to `env_dim` (0 = rank).
pub fn purify_with_env(rho: &DensityMatrix, env_dim: usize) -> Result<PureState> {
    let (vals, vecs) = eigh(rho.mat())?;
    let d = rho.dim();
    // Descending order puts the dominant Schmidt vector at environment
    // index 0.
    let mut pairs: Vec<(f64, usize)> = vals.iter().cloned().zip(0..d).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let rank = pairs.iter().filter(|(l, _)| *l > RANK_TOL).count().max(1);
    let r = if env_dim == 0 {
        rank
    } else if env_dim >= rank {
        env_dim
    } else {
        return Err(Error::DimensionMismatch(format!(
            "environment dimension {env_dim} is below the state rank {rank}"
        )));
    };
    let mut amps = vec![C64::new(0.0, 0.0); d * r];
    for (k, (lam, col)) in pairs.iter().take(rank).enumerate() {
        let w = lam.max(0.0).sqrt();
        for s in 0..d {
            amps[s * r + k] = vecs.get(s, *col) * w;
        }
    }
    let mut dims = rho.space().dims().to_vec();
    dims.push(r);
    PureState::new(FactorSpace::new(dims)?, amps)
}

/// Isometry `W: R1 → R2` with `(1_A ⊗ W)|chi⟩ = |phi⟩`, for two
/// purifications sharing the marginal on their first factor.
///
/// Schmidt bases are matched in the eigenbasis of the shared marginal;
/// degenerate eigenspaces pair in index order, and the map extends to a
/// full isometry whenever `dim R2 ≥ dim R1`.
pub fn uhlmann_isometry(chi: &PureState, phi: &PureState) -> Result<ComplexMatrix> {
    let da = chi.space().dims()[0];
    if phi.space().dims()[0] != da {
        return Err(Error::DimensionMismatch(
            "purifications disagree on the shared factor dimension".into(),
        ));
    }
    let r1 = chi.space().total_dim() / da;
    let r2 = phi.space().total_dim() / da;
    let chi2 = chi.regroup(vec![da, r1])?;
    let phi2 = phi.regroup(vec![da, r2])?;

    let rho_chi = chi2.reduced(&[0])?;
    let rho_phi = phi2.reduced(&[0])?;
    let dev = rho_chi.mat().max_abs_diff(rho_phi.mat());
    if dev > 1e-9 {
        return Err(Error::MarginalMismatch(dev));
    }
    let avg = rho_chi.mat().add(rho_phi.mat()).scale_re(0.5);
    let (vals, vecs) = eigh(&avg)?;

    let mut us: Vec<Vec<C64>> = Vec::new();
    let mut vs: Vec<Vec<C64>> = Vec::new();
    for (i, &lam) in vals.iter().enumerate() {
        if lam <= RANK_TOL {
            continue;
        }
        let w = 1.0 / lam.sqrt();
        let mut u = vec![C64::new(0.0, 0.0); r1];
        let mut v = vec![C64::new(0.0, 0.0); r2];
        for a in 0..da {
            let coeff = vecs.get(a, i).conj();
            for r in 0..r1 {
                u[r] += coeff * chi2.amps()[a * r1 + r];
            }
            for r in 0..r2 {
                v[r] += coeff * phi2.amps()[a * r2 + r];
            }
        }
        for x in u.iter_mut() {
            *x *= w;
        }
        for x in v.iter_mut() {
            *x *= w;
        }
        us.push(u);
        vs.push(v);
    }

    // Extend to a full isometry whenever the target is large enough.
    if r2 >= r1 {
        let u_extra = gram_schmidt_complete(&us, r1);
        let v_extra = gram_schmidt_complete(&vs, r2);
        for (u, v) in u_extra.into_iter().zip(v_extra) {
            us.push(u);
            vs.push(v);
        }
    }

    let mut w = ComplexMatrix::zeros(r2, r1);
    for (u, v) in us.iter().zip(vs.iter()) {
        w = w.add(&ComplexMatrix::outer(v, u));
    }
    Ok(w)
}

/// Orthonormal vectors spanning the complement of `basis` inside C^dim,
/// built deterministically from canonical seeds.
fn gram_schmidt_complete(basis: &[Vec<C64>], dim: usize) -> Vec<Vec<C64>> {
    let mut all: Vec<Vec<C64>> = basis.to_vec();
    let mut extra = Vec::new();
    for seed in 0..dim {
        if all.len() >= dim {
            break;
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[seed] = C64::new(1.0, 0.0);
        // Re-orthogonalize twice for numerical stability.
        for _ in 0..2 {
            for b in &all {
                let c = inner(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let n = vec_norm(&v);
        if n > 1e-8 {
            for x in v.iter_mut() {
                *x /= n;
            }
            all.push(v.clone());
            extra.push(v);
        }
    }
    extra
}

/// Canonical Naimark dilation of a POVM: the isometry
/// `V|φ⟩ = ∑_c √T_c |φ⟩ ⊗ |c⟩` together with the projective measurement
/// `{1 ⊗ |c⟩⟨c|}` on ℋ⊗K, K = C^#effects, satisfying `V† Π_c V = T_c`.
pub fn naimark_dilate(effects: &[ComplexMatrix]) -> Result<(ComplexMatrix, Vec<ComplexMatrix>)> {
    if effects.is_empty() {
        return Err(Error::NotAPOVM("no effects given".into()));
    }
    let d = effects[0].rows();
    let mut sum = ComplexMatrix::zeros(d, d);
    for (c, t) in effects.iter().enumerate() {
        if !t.is_square() || t.rows() != d {
            return Err(Error::NotAPOVM(
                "effects have inconsistent dimensions".into(),
            ));
        }
        if t.hermiticity_defect() > 1e-9 {
            return Err(Error::NotAPOVM(format!("effect {c} is not Hermitian")));
        }
        let (vals, _) = eigh(t)?;
        if vals.first().copied().unwrap_or(0.0) < -1e-9 {
            return Err(Error::NotAPOVM(format!("effect {c} is not PSD")));
        }
        sum = sum.add(t);
    }
    if sum.max_abs_diff(&ComplexMatrix::identity(d)) > 1e-9 {
        return Err(Error::NotAPOVM("effects do not sum to the identity".into()));
    }
    let k = effects.len();
    let mut v = ComplexMatrix::zeros(d * k, d);
    for (c, t) in effects.iter().enumerate() {
        let root = t.sqrt_psd(1e-9)?;
        for h in 0..d {
            for j in 0..d {
                v.set(h * k + c, j, root.get(h, j));
            }
        }
    }
    let mut pvm = Vec::with_capacity(k);
    let id = ComplexMatrix::identity(d);
    for c in 0..k {
        let mut sel = ComplexMatrix::zeros(k, k);
        sel.set(c, c, C64::new(1.0, 0.0));
        pvm.push(id.kron(&sel));
    }
    Ok((v, pvm))
}

/// Routed two-state model: a long-path state and a short-path state on
/// A⊗B⊗T with matching A-marginals, plus per-input measurement families.
#[derive(Debug, Clone)]
pub struct RoutedModel {
    pub rho_l: DensityMatrix,
    pub rho_s: DensityMatrix,
    pub alice_pvms: Vec<Pvm>,
    pub bob_pvms: Vec<Pvm>,
    pub tester_pvms: Vec<Pvm>,
}

impl RoutedModel {
    pub fn new(
        rho_l: DensityMatrix,
        rho_s: DensityMatrix,
        alice_pvms: Vec<Pvm>,
        bob_pvms: Vec<Pvm>,
        tester_pvms: Vec<Pvm>,
    ) -> Result<Self> {
        let dims = rho_l.space().dims().to_vec();
        if dims.len() != 3 || rho_s.space().dims() != dims.as_slice() {
            return Err(Error::DimensionMismatch(
                "routed model needs two states on the same three-factor space".into(),
            ));
        }
        for (pvms, d, who) in [
            (&alice_pvms, dims[0], "Alice"),
            (&bob_pvms, dims[1], "Bob"),
            (&tester_pvms, dims[2], "tester"),
        ] {
            if pvms.is_empty() || pvms.iter().any(|p| p.dim() != d) {
                return Err(Error::DimensionMismatch(format!(
                    "{who} measurements must act on dimension {d}"
                )));
            }
        }
        let ma = rho_l.reduced(&[0])?;
        let mb = rho_s.reduced(&[0])?;
        let dev = ma.mat().max_abs_diff(mb.mat());
        if dev > 1e-9 {
            return Err(Error::MarginalMismatch(dev));
        }
        Ok(Self {
            rho_l,
            rho_s,
            alice_pvms,
            bob_pvms,
            tester_pvms,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let d = self.rho_l.space().dims();
        (d[0], d[1], d[2])
    }

    /// p(a,b|x,y) from the long-path state.
    pub fn long_range_prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let (_, _, dt) = self.dims();
        let op = self.alice_pvms[x]
            .projector(a)
            .kron(self.bob_pvms[y].projector(b))
            .kron(&ComplexMatrix::identity(dt));
        self.rho_l.mat().mul(&op).trace().re
    }

    /// p(a,c|x,z) from the short-path state.
    pub fn short_path_prob(&self, x: usize, z: usize, a: usize, c: usize) -> f64 {
        let (_, db, _) = self.dims();
        let op = self.alice_pvms[x]
            .projector(a)
            .kron(&ComplexMatrix::identity(db))
            .kron(self.tester_pvms[z].projector(c));
        self.rho_s.mat().mul(&op).trace().re
    }
}

/// Single-state model equivalent to a routed model: a pure state on
/// A ⊗ B̃ ⊗ E′ with Bob measurements on B̃ and per-input tester
/// measurements on B̃ ⊗ E′.
#[derive(Debug, Clone)]
pub struct TranslatedModel {
    /// Factors [A, B̃, E, K]; E′ = E⊗K.
    pub psi: PureState,
    pub alice_pvms: Vec<Pvm>,
    pub bob_pvms: Vec<Pvm>,
    /// Projective families on B̃⊗E⊗K (factors 1..4 of `psi`), one per
    /// tester input.
    pub tester_pvms: Vec<Pvm>,
}

impl TranslatedModel {
    pub fn long_range_prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let dims = self.psi.space().dims();
        let rest = dims[2] * dims[3];
        let op = self.alice_pvms[x]
            .projector(a)
            .kron(self.bob_pvms[y].projector(b))
            .kron(&ComplexMatrix::identity(rest));
        self.psi.expectation(&op)
    }

    pub fn tester_prob(&self, x: usize, z: usize, a: usize, c: usize) -> f64 {
        let op = self.alice_pvms[x]
            .projector(a)
            .kron(self.tester_pvms[z].projector(c));
        self.psi.expectation(&op)
    }
}

/// Rebuild a routed model as a single-state model reproducing both
/// statistics tables, with the tester realized projectively on B̃⊗E′.
pub fn translate_routed_model(m: &RoutedModel) -> Result<TranslatedModel> {
    let (da, db, dt) = m.dims();

    // Purify both states with a common environment dimension.
    let rank = |rho: &DensityMatrix| -> Result<usize> {
        Ok(rho
            .eigenvalues()?
            .iter()
            .filter(|&&l| l > RANK_TOL)
            .count()
            .max(1))
    };
    let env = rank(&m.rho_l)?.max(rank(&m.rho_s)?);
    let chi = purify_with_env(&m.rho_l, env)?; // A⊗B⊗T⊗E
    let phi = purify_with_env(&m.rho_s, env)?; // A⊗B⊗T⊗E_S

    // Uhlmann isometry on everything-but-A carries χ onto φ.
    let w = uhlmann_isometry(&chi, &phi)?;

    // Compressed tester effects on B⊗T⊗E.
    let d_bte = db * dt * env;
    let mut compressed: Vec<Vec<ComplexMatrix>> = Vec::new();
    for pvm in &m.tester_pvms {
        let mut effects = Vec::new();
        for c in 0..pvm.outcomes() {
            let big = ComplexMatrix::identity(db)
                .kron(pvm.projector(c))
                .kron(&ComplexMatrix::identity(env));
            effects.push(w.adjoint().mul(&big).mul(&w).hermitize());
        }
        // W is unitary here (equal padded dimensions), so the effects sum
        // to the identity on B⊗T⊗E.
        let sum = effects
            .iter()
            .fold(ComplexMatrix::zeros(d_bte, d_bte), |acc, e| acc.add(e));
        if sum.max_abs_diff(&ComplexMatrix::identity(d_bte)) > 1e-8 {
            return Err(Error::NotAPOVM(
                "compressed tester effects do not sum to the identity".into(),
            ));
        }
        compressed.push(effects);
    }

    // Merge B̃ = B⊗T; ψ' = χ viewed on A⊗B̃⊗E.
    let d_bt = db * dt;
    let psi_prime = chi.regroup(vec![da, d_bt, env])?;
    let bob_merged: Vec<Pvm> = m
        .bob_pvms
        .iter()
        .map(|p| {
            let projs = p
                .projectors()
                .iter()
                .map(|n| n.kron(&ComplexMatrix::identity(dt)))
                .collect();
            Pvm::new(p.label().to_string(), projs)
        })
        .collect::<Result<_>>()?;

    // One shared ancilla K = ⊕_z K_z; the distinguished embedding vector is
    // the first basis vector of the first block.
    let block_sizes: Vec<usize> = compressed.iter().map(|e| e.len()).collect();
    let k_total: usize = block_sizes.iter().sum();
    let offsets: Vec<usize> = block_sizes
        .iter()
        .scan(0usize, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let d_h = d_bte; // B̃⊗E and B⊗T⊗E coincide as matrices

    let mut tester_out: Vec<Pvm> = Vec::new();
    for (z, effects) in compressed.iter().enumerate() {
        // Canonical dilation isometry for this input, embedded into the
        // shared ancilla: rows (h, offsets[z] + c).
        let mut v_embed = ComplexMatrix::zeros(d_h * k_total, d_h);
        for (c, eff) in effects.iter().enumerate() {
            let root = eff.sqrt_psd(1e-8)?;
            for h in 0..d_h {
                for j in 0..d_h {
                    v_embed.set(h * k_total + offsets[z] + c, j, root.get(h, j));
                }
            }
        }
        // Unitary W_z with W_z · v_embed = (· ⊗ |0⟩); built from the two
        // isometries' ranges and their orthocomplements.
        let cols_src: Vec<Vec<C64>> = (0..d_h).map(|j| v_embed.column(j)).collect();
        let cols_dst: Vec<Vec<C64>> = (0..d_h)
            .map(|j| {
                let mut col = vec![C64::new(0.0, 0.0); d_h * k_total];
                col[j * k_total] = C64::new(1.0, 0.0); // |j⟩⊗|0⟩
                col
            })
            .collect();
        let src_comp = gram_schmidt_complete(&cols_src, d_h * k_total);
        let dst_comp = gram_schmidt_complete(&cols_dst, d_h * k_total);
        if src_comp.len() != dst_comp.len() {
            return Err(Error::DimensionMismatch(
                "isometry completions have mismatched ranks".into(),
            ));
        }
        let mut w_z = ComplexMatrix::zeros(d_h * k_total, d_h * k_total);
        for (s, d) in cols_src.iter().zip(cols_dst.iter()) {
            w_z = w_z.add(&ComplexMatrix::outer(d, s));
        }
        for (s, d) in src_comp.iter().zip(dst_comp.iter()) {
            w_z = w_z.add(&ComplexMatrix::outer(d, s));
        }

        // Π_c = W_z (1 ⊗ |z,c⟩⟨z,c|) W_z†, realized as Y_c Y_c† from the
        // relevant column block of W_z.
        let mut projs = Vec::with_capacity(effects.len());
        let mut acc = ComplexMatrix::zeros(d_h * k_total, d_h * k_total);
        for c in 0..effects.len() {
            let cols: Vec<Vec<C64>> = (0..d_h)
                .map(|h| w_z.column(h * k_total + offsets[z] + c))
                .collect();
            let mut p = ComplexMatrix::zeros(d_h * k_total, d_h * k_total);
            for col in &cols {
                p = p.add(&ComplexMatrix::outer(col, col));
            }
            let p = p.hermitize();
            acc = acc.add(&p);
            projs.push(p);
        }
        // Route the unused ancilla directions to outcome 0 so each family
        // is a complete PVM.
        let deficiency = ComplexMatrix::identity(d_h * k_total).sub(&acc);
        projs[0] = projs[0].add(&deficiency).hermitize();
        tester_out.push(Pvm::new(m.tester_pvms[z].label().to_string(), projs)?);
    }

    // ψ = ψ' ⊗ |0⟩_K on A⊗B̃⊗E⊗K.
    let mut ket0 = vec![C64::new(0.0, 0.0); k_total];
    ket0[0] = C64::new(1.0, 0.0);
    let amps = kron_vec(psi_prime.amps(), &ket0);
    let psi = PureState::new(FactorSpace::new(vec![da, d_bt, env, k_total])?, amps)?;

    Ok(TranslatedModel {
        psi,
        alice_pvms: m.alice_pvms.clone(),
        bob_pvms: bob_merged,
        tester_pvms: tester_out,
    })
}

/// Largest deviation between the routed model's statistics and the
/// translated model's, over both tables.
pub fn translation_stat_deviation(m: &RoutedModel, t: &TranslatedModel) -> f64 {
    let mut worst = 0.0f64;
    for (x, apvm) in m.alice_pvms.iter().enumerate() {
        for (y, bpvm) in m.bob_pvms.iter().enumerate() {
            for a in 0..apvm.outcomes() {
                for b in 0..bpvm.outcomes() {
                    let lhs = m.long_range_prob(x, y, a, b);
                    let rhs = t.long_range_prob(x, y, a, b);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        for (z, tpvm) in m.tester_pvms.iter().enumerate() {
            for a in 0..apvm.outcomes() {
                for c in 0..tpvm.outcomes() {
                    let lhs = m.short_path_prob(x, z, a, c);
                    let rhs = t.tester_prob(x, z, a, c);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    worst
}

/// |H(A|E) of the long-path purification − H(A|E′) of the translated state|.
pub fn translation_entropy_deviation(m: &RoutedModel, t: &TranslatedModel) -> Result<f64> {
    let chi = purify(&m.rho_l)?; // A⊗B⊗T⊗E
    let rho_ae = chi.reduced(&[0, 3])?;
    let h_chi = crate::entropy::cond_entropy(&rho_ae, &[1])?;
    let rho_ae_prime = t.psi.reduced(&[0, 2, 3])?;
    let h_psi = crate::entropy::cond_entropy(&rho_ae_prime, &[1, 2])?;
    Ok((h_chi - h_psi).abs())
}

fn random_unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let n = vec_norm(&v);
        if n > 1e-3 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Random isometry from `cols` to `rows` dimensions via Gram–Schmidt on
/// random columns.
fn random_isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(rows >= cols);
    let mut basis: Vec<Vec<C64>> = Vec::new();
    while basis.len() < cols {
        let mut v = random_unit_vector(rng, rows);
        for b in &basis {
            let c = inner(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let n = vec_norm(&v);
        if n > 1e-6 {
            for x in v.iter_mut() {
                *x /= n;
            }
            basis.push(v);
        }
    }
    ComplexMatrix::from_fn(rows, cols, |i, j| basis[j][i])
}

/// Haar-random pure state on the given factor space.
pub fn random_pure_state(rng: &mut impl Rng, dims: Vec<usize>) -> Result<PureState> {
    let space = FactorSpace::new(dims)?;
    let amps = random_unit_vector(rng, space.total_dim());
    PureState::new(space, amps)
}

/// Random binary PVM on C^d with two nonempty eigenvalue groups.
pub fn random_binary_pvm(rng: &mut impl Rng, d: usize, label: impl Into<String>) -> Pvm {
    let u = random_isometry(rng, d, d);
    let split = rng.gen_range(1..d.max(2));
    let mut p0 = ComplexMatrix::zeros(d, d);
    for k in 0..split.min(d) {
        let col = u.column(k);
        p0 = p0.add(&ComplexMatrix::outer(&col, &col));
    }
    let p0 = p0.hermitize();
    let p1 = ComplexMatrix::identity(d).sub(&p0).hermitize();
    Pvm::new(label, vec![p0, p1]).expect("projector split always forms a PVM")
}

/// Random density matrix on `dims` with full support (mixture of random
/// pure states plus a small maximally mixed floor).
pub fn random_density(rng: &mut impl Rng, dims: Vec<usize>) -> Result<DensityMatrix> {
    let space = FactorSpace::new(dims)?;
    let d = space.total_dim();
    let mut mat = ComplexMatrix::zeros(d, d);
    for _ in 0..d {
        let v = random_unit_vector(rng, d);
        mat = mat.add(&ComplexMatrix::outer(&v, &v).scale_re(rng.gen::<f64>() + 0.05));
    }
    let tr = mat.trace().re;
    let mat = mat.scale_re(0.95 / tr);
    let mat = mat.add(&ComplexMatrix::identity(d).scale_re(0.05 / d as f64));
    DensityMatrix::new(space, mat.hermitize())
}

/// Random qubit-scale routed model (all factors two-dimensional).
///
/// Both states arise from one random marginal on A through two independent
/// random channels A′ → B⊗T applied to its canonical purification, which
/// makes the A-marginals match exactly.
pub fn random_routed_model(rng: &mut impl Rng) -> Result<RoutedModel> {
    let (da, db, dt) = (2usize, 2usize, 2usize);
    let rho_a = random_density(rng, vec![da])?;
    let (vals, vecs) = eigh(rho_a.mat())?;
    // Canonical purification |φ⟩ = Σ √λ |v_i⟩|i⟩ on A⊗A′.
    let mut purif = vec![C64::new(0.0, 0.0); da * da];
    for k in 0..da {
        let w = vals[k].max(0.0).sqrt();
        for s in 0..da {
            purif[s * da + k] = vecs.get(s, k) * w;
        }
    }
    let env = 2usize; // Stinespring environment per channel
    fn branch(
        rng: &mut impl Rng,
        purif: &[C64],
        (da, db, dt, env): (usize, usize, usize, usize),
    ) -> Result<DensityMatrix> {
        let v = random_isometry(rng, db * dt * env, da); // A′ → B⊗T⊗env
        let full = ComplexMatrix::identity(da).kron(&v); // A⊗A′ → A⊗B⊗T⊗env
        let out = full.matvec(purif);
        let big = PureState::new(FactorSpace::new(vec![da, db, dt, env])?, out)?;
        big.reduced(&[0, 1, 2])
    }
    let rho_l = branch(rng, &purif, (da, db, dt, env))?;
    let rho_s = branch(rng, &purif, (da, db, dt, env))?;

    let alice = (0..2)
        .map(|x| random_binary_pvm(rng, da, format!("x{x}")))
        .collect();
    let bob = (0..2)
        .map(|y| random_binary_pvm(rng, db, format!("y{y}")))
        .collect();
    let tester = (0..2)
        .map(|z| random_binary_pvm(rng, dt, format!("z{z}")))
        .collect();
    RoutedModel::new(rho_l, rho_s, alice, bob, tester)
}

/// Outcome of a batch equivalence check between routed models and their
/// translations.
#[derive(Debug, Clone, Copy)]
pub struct EquivReport {
    pub trials: usize,
    pub max_stat_dev: f64,
    pub max_entropy_dev: f64,
}

/// Translate `trials` random routed models and report the worst statistics
/// and entropy deviations. `corrupt_marginal` deliberately breaks the
/// marginal constraint of the first model to exercise the failure path.
pub fn equivalence_check(trials: usize, seed: u64, corrupt_marginal: bool) -> Result<EquivReport> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut max_stat = 0.0f64;
    let mut max_ent = 0.0f64;
    for trial in 0..trials {
        let mut model = random_routed_model(&mut rng)?;
        if corrupt_marginal && trial == 0 {
            // Swap in an unrelated short-path state; a fresh draw almost
            // surely breaks ρ_A equality.
            let bad = random_density(&mut rng, vec![2, 2, 2])?;
            let dev = bad
                .reduced(&[0])?
                .mat()
                .max_abs_diff(model.rho_l.reduced(&[0])?.mat());
            model.rho_s = bad;
            if dev > 1e-9 {
                return Err(Error::MarginalMismatch(dev));
            }
        }
        let translated = translate_routed_model(&model)?;
        max_stat = max_stat.max(translation_stat_deviation(&model, &translated));
        max_ent = max_ent.max(translation_entropy_deviation(&model, &translated)?);
    }
    Ok(EquivReport {
        trials,
        max_stat_dev: max_stat,
        max_entropy_dev: max_ent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn werner_extremes() {
        let w1 = werner_state(1.0).unwrap();
        let phi = phi_plus();
        assert!(w1.mat().max_abs_diff(&ComplexMatrix::outer(&phi, &phi)) <= 1e-14);
        let w0 = werner_state(0.0).unwrap();
        assert!(
            w0.mat()
                .max_abs_diff(&ComplexMatrix::identity(4).scale_re(0.25))
                <= 1e-14
        );
        assert!(matches!(werner_state(1.5), Err(Error::RangeError(_))));
    }

    #[test]
    fn werner_spectrum_matches_closed_form() {
        let v = 0.99;
        let w = werner_state(v).unwrap();
        let eigs = w.eigenvalues().unwrap();
        let expect = [
            (1.0 - v) / 4.0,
            (1.0 - v) / 4.0,
            (1.0 - v) / 4.0,
            (1.0 + 3.0 * v) / 4.0,
        ];
        for (a, b) in eigs.iter().zip(expect.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn werner_marginal_is_maximally_mixed() {
        let w = werner_state(0.9).unwrap();
        let red = w.reduced(&[0]).unwrap();
        assert!(
            red.mat()
                .max_abs_diff(&ComplexMatrix::identity(2).scale_re(0.5))
                <= 1e-12
        );
    }

    #[test]
    fn anticommutator_norm_matches_angle() {
        // ‖{A,B}‖ = 2|cosθ| for qubit observables separated by θ.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..25 {
            let t1 = rng.gen::<f64>() * std::f64::consts::PI;
            let t2 = rng.gen::<f64>() * std::f64::consts::PI;
            let a = DichotomicObservable::in_xz_plane(t1).matrix();
            let b = DichotomicObservable::in_xz_plane(t2).matrix();
            let anti = a.mul(&b).add(&b.mul(&a));
            let norm = crate::linalg::op_norm(&anti).unwrap();
            assert!((norm - 2.0 * (t1 - t2).cos().abs()).abs() <= 1e-10);
        }
    }

    #[test]
    fn bloch_pvm_axes() {
        let z = DichotomicObservable::new([0.0, 0.0, 1.0]).unwrap();
        let pvm = bloch_pvm(&z, "Z");
        assert!(
            pvm.projector(0)
                .max_abs_diff(&ComplexMatrix::diag(&[1.0, 0.0]))
                <= 1e-15
        );
        assert!(
            pvm.projector(1)
                .max_abs_diff(&ComplexMatrix::diag(&[0.0, 1.0]))
                <= 1e-15
        );

        let x = DichotomicObservable::new([1.0, 0.0, 0.0]).unwrap();
        let pvm = bloch_pvm(&x, "X");
        let expect0 = ComplexMatrix::identity(2).add(&pauli_x()).scale_re(0.5);
        assert!(pvm.projector(0).max_abs_diff(&expect0) <= 1e-15);
    }

    #[test]
    fn bloch_overlap_follows_angle() {
        // |⟨a±|b±⟩|² = (1+cosθ)/2 for observables separated by θ.
        let theta = 0.73;
        let a = DichotomicObservable::in_xz_plane(0.0);
        let b = DichotomicObservable::in_xz_plane(theta);
        let pa = bloch_pvm(&a, "Z");
        let pb = bloch_pvm(&b, "B");
        let overlap = pa.projector(0).mul(pb.projector(0)).trace().re;
        assert!((overlap - (1.0 + theta.cos()) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn purify_cases() {
        // Pure input: environment dimension 1.
        let phi = phi_plus();
        let rho = PureState::new(FactorSpace::new(vec![2, 2]).unwrap(), phi)
            .unwrap()
            .density();
        let p = purify(&rho).unwrap();
        assert_eq!(*p.space().dims().last().unwrap(), 1);

        // Maximally mixed qubit: marginal recovery.
        let mm = DensityMatrix::new(
            FactorSpace::new(vec![2]).unwrap(),
            ComplexMatrix::identity(2).scale_re(0.5),
        )
        .unwrap();
        let p = purify(&mm).unwrap();
        assert_eq!(p.space().dims(), &[2, 2]);
        let back = p.reduced(&[0]).unwrap();
        assert!(back.mat().max_abs_diff(mm.mat()) <= 1e-12);

        // Werner(0.96): rank-4 environment, marginal residual ≤ 1e-10.
        let w = werner_state(0.96).unwrap();
        let p = purify(&w).unwrap();
        assert_eq!(p.space().dims(), &[2, 2, 4]);
        let back = p.reduced(&[0, 1]).unwrap();
        assert!(back.mat().max_abs_diff(w.mat()) <= 1e-10);
    }

    #[test]
    fn uhlmann_identity_and_unitary_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let rho = random_density(&mut rng, vec![2]).unwrap();
        let chi = purify(&rho).unwrap();

        // chi = phi: W acts as the identity on the support.
        let w = uhlmann_isometry(&chi, &chi).unwrap();
        let moved = ComplexMatrix::identity(2).kron(&w).matvec(chi.amps());
        let dev: f64 = moved
            .iter()
            .zip(chi.amps())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-10);

        // phi = (1⊗U)chi: W reproduces U on the support.
        let u = random_isometry(&mut rng, 2, 2);
        let phi_amps = ComplexMatrix::identity(2).kron(&u).matvec(chi.amps());
        let phi = PureState::new(chi.space().clone(), phi_amps.clone()).unwrap();
        let w = uhlmann_isometry(&chi, &phi).unwrap();
        let moved = ComplexMatrix::identity(2).kron(&w).matvec(chi.amps());
        let dev: f64 = moved
            .iter()
            .zip(&phi_amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-10);
    }

    #[test]
    fn uhlmann_connects_distinct_purifications() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let rho = random_density(&mut rng, vec![2]).unwrap();
        // Two purifications with different environments: the canonical one
        // and a unitarily rotated, padded one.
        let chi = purify_with_env(&rho, 3).unwrap();
        let u = random_isometry(&mut rng, 3, 3);
        let phi_amps = ComplexMatrix::identity(2).kron(&u).matvec(chi.amps());
        let phi = PureState::new(chi.space().clone(), phi_amps.clone()).unwrap();
        let w = uhlmann_isometry(&chi, &phi).unwrap();
        let moved = ComplexMatrix::identity(2).kron(&w).matvec(chi.amps());
        let dev: f64 = moved
            .iter()
            .zip(&phi_amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-8);
        // W†W = identity on the support (here: everywhere, ranks match).
        let wtw = w.adjoint().mul(&w);
        assert!(wtw.max_abs_diff(&ComplexMatrix::identity(3)) <= 1e-8);
    }

    #[test]
    fn uhlmann_rejects_marginal_mismatch() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let rho1 = random_density(&mut rng, vec![2]).unwrap();
        let rho2 = random_density(&mut rng, vec![2]).unwrap();
        let chi = purify_with_env(&rho1, 2).unwrap();
        let phi = purify_with_env(&rho2, 2).unwrap();
        match uhlmann_isometry(&chi, &phi) {
            Err(Error::MarginalMismatch(_)) => {}
            other => panic!("expected MarginalMismatch, got {other:?}"),
        }
    }

    #[test]
    fn naimark_on_projective_input_is_exact() {
        let z = DichotomicObservable::new([0.0, 0.0, 1.0]).unwrap();
        let pvm = bloch_pvm(&z, "Z");
        let (v, pi) = naimark_dilate(pvm.projectors()).unwrap();
        for (c, t) in pvm.projectors().iter().enumerate() {
            let rec = v.adjoint().mul(&pi[c]).mul(&v);
            assert!(rec.max_abs_diff(t) <= 1e-12);
        }
    }

    #[test]
    fn naimark_on_binary_qubit_povm() {
        let e0 = ComplexMatrix::diag(&[0.7, 0.0]).add(&ComplexMatrix::identity(2).scale_re(0.15));
        let e1 = ComplexMatrix::identity(2).sub(&e0);
        let (v, pi) = naimark_dilate(&[e0.clone(), e1.clone()]).unwrap();
        for (c, t) in [e0, e1].iter().enumerate() {
            let rec = v.adjoint().mul(&pi[c]).mul(&v);
            assert!(rec.max_abs_diff(t) <= 1e-10);
        }
    }

    #[test]
    fn naimark_trine_has_three_dimensional_ancilla() {
        // Symmetric trine: 2/3 · |ψ_k⟩⟨ψ_k| at 120° spacings.
        let effects: Vec<ComplexMatrix> = (0..3)
            .map(|k| {
                let ang = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let v = vec![
                    C64::new((ang / 2.0).cos(), 0.0),
                    C64::new((ang / 2.0).sin(), 0.0),
                ];
                ComplexMatrix::outer(&v, &v).scale_re(2.0 / 3.0)
            })
            .collect();
        let (v, pi) = naimark_dilate(&effects).unwrap();
        assert_eq!(pi.len(), 3);
        assert_eq!(v.rows(), 6);
        for (c, t) in effects.iter().enumerate() {
            let rec = v.adjoint().mul(&pi[c]).mul(&v);
            assert!(rec.max_abs_diff(t) <= 1e-10);
        }
    }

    #[test]
    fn naimark_rejects_non_povm() {
        let bad = vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)];
        assert!(matches!(naimark_dilate(&bad), Err(Error::NotAPOVM(_))));
    }

    #[test]
    fn translate_degenerate_equal_states() {
        // rho_l = rho_s: translation must reproduce both tables at 1e-10.
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let rho = random_density(&mut rng, vec![2, 2, 2]).unwrap();
        let model = RoutedModel::new(
            rho.clone(),
            rho,
            vec![
                random_binary_pvm(&mut rng, 2, "x0"),
                random_binary_pvm(&mut rng, 2, "x1"),
            ],
            vec![random_binary_pvm(&mut rng, 2, "y0")],
            vec![random_binary_pvm(&mut rng, 2, "z0")],
        )
        .unwrap();
        let t = translate_routed_model(&model).unwrap();
        assert!(translation_stat_deviation(&model, &t) <= 1e-10);
    }

    #[test]
    fn translate_product_state_trivial_tester() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let ra = random_density(&mut rng, vec![2]).unwrap();
        let rb = random_density(&mut rng, vec![2]).unwrap();
        let rt = random_density(&mut rng, vec![2]).unwrap();
        let mat = ra.mat().kron(rb.mat()).kron(rt.mat());
        let rho = DensityMatrix::new(FactorSpace::new(vec![2, 2, 2]).unwrap(), mat).unwrap();
        let trivial = Pvm::new(
            "z0",
            vec![ComplexMatrix::identity(2), ComplexMatrix::zeros(2, 2)],
        )
        .unwrap();
        let model = RoutedModel::new(
            rho.clone(),
            rho,
            vec![random_binary_pvm(&mut rng, 2, "x0")],
            vec![random_binary_pvm(&mut rng, 2, "y0")],
            vec![trivial],
        )
        .unwrap();
        let t = translate_routed_model(&model).unwrap();
        assert!(translation_stat_deviation(&model, &t) <= 1e-10);
    }

    #[test]
    fn translate_random_models() {
        let report = equivalence_check(6, 99, false).unwrap();
        assert!(
            report.max_stat_dev <= 1e-8,
            "stat dev {}",
            report.max_stat_dev
        );
        assert!(
            report.max_entropy_dev <= 1e-7,
            "entropy dev {}",
            report.max_entropy_dev
        );
    }

    #[test]
    fn corrupted_marginal_is_detected() {
        match equivalence_check(3, 4, true) {
            Err(Error::MarginalMismatch(_)) => {}
            other => panic!("expected MarginalMismatch, got {other:?}"),
        }
    }
}
