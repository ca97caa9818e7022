//! Exact two-qubit density-matrix engine.
//!
//! Basis convention, fixed once for the whole crate: the computational basis
//! is ordered |00⟩, |01⟩, |10⟩, |11⟩ with qubit order (node A, node B), where
//! |0⟩ is the early time bin t₁ and |1⟩ the late bin t₂. All golden values in
//! the tests assume this ordering.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;
use crate::tally::TallyTable;
use rand::Rng;

/// Entrywise Hermiticity tolerance for a valid density matrix.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Unit-trace tolerance.
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalue floor; anything above `-PSD_TOL` counts as positive
/// semidefinite up to numerical noise.
pub const PSD_TOL: f64 = 1e-10;

type C = Complex64;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

#[derive(Debug, Error, PartialEq)]
pub enum QstateError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    TraceNotOne(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("correlator {0} outside [-1, 1]")]
    CorrelatorOutOfRange(f64),
    #[error("observable is not Hermitian")]
    ObservableNotHermitian,
    #[error("observable spectrum is not {{+1, -1}}")]
    ObservableNotDichotomic,
    #[error("tally table is missing setting {0}")]
    MissingSetting(String),
    #[error("tally table has no counts for setting {0}")]
    EmptySetting(String),
    #[error("malformed state record: {0}")]
    BadRecord(String),
}

/// Which Bell state of the ψ family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellKind {
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    /// Sign of the ⟨XX⟩ and ⟨YY⟩ terms in the witness decomposition.
    pub fn sign(self) -> f64 {
        match self {
            BellKind::PsiPlus => 1.0,
            BellKind::PsiMinus => -1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            BellKind::PsiPlus => BellKind::PsiMinus,
            BellKind::PsiMinus => BellKind::PsiPlus,
        }
    }
}

impl std::fmt::Display for BellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BellKind::PsiPlus => write!(f, "psi_plus"),
            BellKind::PsiMinus => write!(f, "psi_minus"),
        }
    }
}

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Matrix2<C> {
        let o = c(0.0);
        let one = c(1.0);
        let i = C::new(0.0, 1.0);
        match self {
            Pauli::I => Matrix2::new(one, o, o, one),
            Pauli::X => Matrix2::new(o, one, one, o),
            Pauli::Y => Matrix2::new(o, -i, i, o),
            Pauli::Z => Matrix2::new(one, o, o, -one),
        }
    }
}

/// A two-site Pauli label, e.g. X⊗Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PauliLabel(pub Pauli, pub Pauli);

impl std::fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}{:?}", self.0, self.1)
    }
}

/// The nine product bases used for tomography, in canonical order.
pub const TOMOGRAPHY_BASES: [PauliLabel; 9] = [
    PauliLabel(Pauli::X, Pauli::X),
    PauliLabel(Pauli::X, Pauli::Y),
    PauliLabel(Pauli::X, Pauli::Z),
    PauliLabel(Pauli::Y, Pauli::X),
    PauliLabel(Pauli::Y, Pauli::Y),
    PauliLabel(Pauli::Y, Pauli::Z),
    PauliLabel(Pauli::Z, Pauli::X),
    PauliLabel(Pauli::Z, Pauli::Y),
    PauliLabel(Pauli::Z, Pauli::Z),
];

/// A ±1-valued single-qubit observable n·σ given by a unit Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

impl Observable {
    /// Normalizes the coefficient vector; rejects the zero vector.
    pub fn new(nx: f64, ny: f64, nz: f64) -> Result<Self, QstateError> {
        let norm = (nx * nx + ny * ny + nz * nz).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QstateError::ObservableNotDichotomic);
        }
        Ok(Self {
            nx: nx / norm,
            ny: ny / norm,
            nz: nz / norm,
        })
    }

    pub fn x() -> Self {
        Self { nx: 1.0, ny: 0.0, nz: 0.0 }
    }

    pub fn y() -> Self {
        Self { nx: 0.0, ny: 1.0, nz: 0.0 }
    }

    pub fn z() -> Self {
        Self { nx: 0.0, ny: 0.0, nz: 1.0 }
    }

    pub fn minus_z() -> Self {
        Self { nx: 0.0, ny: 0.0, nz: -1.0 }
    }

    /// Observable lying in the X–Z plane, `(z_coeff·Z + x_coeff·X)` normalized.
    pub fn xz(z_coeff: f64, x_coeff: f64) -> Result<Self, QstateError> {
        Self::new(x_coeff, 0.0, z_coeff)
    }

    pub fn from_pauli(p: Pauli) -> Result<Self, QstateError> {
        match p {
            Pauli::I => Err(QstateError::ObservableNotDichotomic),
            Pauli::X => Ok(Self::x()),
            Pauli::Y => Ok(Self::y()),
            Pauli::Z => Ok(Self::z()),
        }
    }

    /// Validates an explicit 2×2 matrix as a Hermitian observable with
    /// spectrum {+1, −1} and extracts its Bloch vector.
    pub fn from_matrix(m: &Matrix2<C>) -> Result<Self, QstateError> {
        let herm = (m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(QstateError::ObservableNotHermitian);
        }
        // ±1 spectrum ⇔ traceless and m² = I.
        if m.trace().norm() > 1e-10 {
            return Err(QstateError::ObservableNotDichotomic);
        }
        let sq = m * m;
        if (sq - Matrix2::identity()).norm() > 1e-9 {
            return Err(QstateError::ObservableNotDichotomic);
        }
        let nx = m[(0, 1)].re + m[(1, 0)].re;
        let ny = m[(1, 0)].im - m[(0, 1)].im;
        let nz = m[(0, 0)].re - m[(1, 1)].re;
        Observable::new(nx / 2.0 * 2.0, ny / 2.0 * 2.0, nz / 2.0 * 2.0)
    }

    pub fn matrix(&self) -> Matrix2<C> {
        let x = Pauli::X.matrix() * c(self.nx);
        let y = Pauli::Y.matrix() * c(self.ny);
        let z = Pauli::Z.matrix() * c(self.nz);
        x + y + z
    }

    /// Projector onto the `outcome = ±1` eigenspace, (I ± n·σ)/2.
    pub fn projector(&self, outcome: i8) -> Matrix2<C> {
        let sign = if outcome >= 0 { 1.0 } else { -1.0 };
        (Matrix2::identity() + self.matrix() * c(sign)) * c(0.5)
    }
}

/// A joint measurement setting: one observable per node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub a: Observable,
    pub b: Observable,
}

/// The four settings of a CHSH campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a0: Observable,
    pub a1: Observable,
    pub b0: Observable,
    pub b1: Observable,
}

impl ChshSettings {
    /// A₀=(Z+X)/√2, A₁=(Z−X)/√2, B₀=−Z, B₁=X; maximizes S for ψ⁺.
    pub fn psi_plus_optimal() -> Self {
        Self {
            a0: Observable::xz(1.0, 1.0).expect("nonzero"),
            a1: Observable::xz(1.0, -1.0).expect("nonzero"),
            b0: Observable::minus_z(),
            b1: Observable::x(),
        }
    }

    /// The settings as (A₀B₀, A₀B₁, A₁B₀, A₁B₁) pairs, in CHSH order.
    pub fn pairs(&self) -> [MeasurementSetting; 4] {
        [
            MeasurementSetting { a: self.a0, b: self.b0 },
            MeasurementSetting { a: self.a0, b: self.b1 },
            MeasurementSetting { a: self.a1, b: self.b0 },
            MeasurementSetting { a: self.a1, b: self.b1 },
        ]
    }

    /// Canonical tally labels for the four settings.
    pub const LABELS: [&'static str; 4] = ["A0B0", "A0B1", "A1B0", "A1B1"];
}

/// Two-qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: Matrix4<C>,
}

impl DensityMatrix {
    /// Validating constructor; the only public way to wrap a raw matrix.
    pub fn new(m: Matrix4<C>) -> Result<Self, QstateError> {
        let mut max_asym = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                max_asym = max_asym.max(d);
            }
        }
        if max_asym > HERMITICITY_TOL {
            return Err(QstateError::NotHermitian(max_asym));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QstateError::TraceNotOne(tr.re));
        }
        let min_eig = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(QstateError::NotPositive(min_eig));
        }
        Ok(Self { m })
    }

    /// Internal constructor for operations that preserve validity exactly
    /// (unitary conjugation, convex mixtures of valid states).
    fn wrap(m: Matrix4<C>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4<C> {
        &self.m
    }

    /// Projector onto (|01⟩ ± |10⟩)/√2.
    pub fn bell(kind: BellKind) -> Self {
        let s = kind.sign();
        let mut m = Matrix4::zeros();
        m[(1, 1)] = c(0.5);
        m[(2, 2)] = c(0.5);
        m[(1, 2)] = c(0.5 * s);
        m[(2, 1)] = c(0.5 * s);
        Self::wrap(m)
    }

    /// Maximally mixed two-qubit state I/4.
    pub fn maximally_mixed() -> Self {
        Self::wrap(Matrix4::identity() * c(0.25))
    }

    /// Equal classical mixture of |01⟩⟨01| and |10⟩⟨10| (a Bell state with
    /// its coherence fully dephased).
    pub fn dephased_psi() -> Self {
        let mut m = Matrix4::zeros();
        m[(1, 1)] = c(0.5);
        m[(2, 2)] = c(0.5);
        Self::wrap(m)
    }

    /// Werner state p·|bell⟩⟨bell| + (1−p)·I/4.
    pub fn werner(p: f64, kind: BellKind) -> Result<Self, QstateError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QstateError::InvalidProbability(p));
        }
        Ok(Self::mix(&[(p, Self::bell(kind)), (1.0 - p, Self::maximally_mixed())]))
    }

    /// Convex mixture of valid states. Weights must be non-negative and sum
    /// to 1 (small numerical slack is renormalized away).
    pub fn mix(parts: &[(f64, DensityMatrix)]) -> Self {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        debug_assert!(total > 0.0 && (total - 1.0).abs() < 1e-9);
        let mut m = Matrix4::zeros();
        for (w, rho) in parts {
            debug_assert!(*w >= -1e-15);
            m += rho.m * c(*w / total);
        }
        Self::wrap(m)
    }

    /// Random state from the Hilbert–Schmidt (Ginibre) ensemble; used by the
    /// property suites.
    pub fn random(rng: &mut SimRng) -> Self {
        let mut g = Matrix4::<C>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] = C::new(gaussian(rng), gaussian(rng));
            }
        }
        let h = g * g.adjoint();
        let tr = h.trace().re;
        Self::wrap(h * c(1.0 / tr))
    }

    /// ⟨bell(kind)| ρ |bell(kind)⟩.
    pub fn fidelity_to_bell(&self, kind: BellKind) -> f64 {
        let s = kind.sign();
        // ψ = (|01⟩ ± |10⟩)/√2 in the fixed basis.
        let v = Vector4::new(c(0.0), c(std::f64::consts::FRAC_1_SQRT_2), c(s * std::f64::consts::FRAC_1_SQRT_2), c(0.0));
        let f = (v.adjoint() * self.m * v)[(0, 0)];
        debug_assert!(f.im.abs() < 1e-10);
        f.re
    }

    /// π phase shift on node A's late bin: conjugation by diag(1,1,−1,−1).
    /// Maps ψ⁺ ↔ ψ⁻ exactly and is an involution.
    pub fn phase_flip_a(&self) -> Self {
        let mut m = self.m;
        // U ρ U† with U = Z⊗I flips sign on entries with exactly one index
        // in the A=1 half {2, 3}.
        for i in 0..4 {
            for j in 0..4 {
                let si = if i >= 2 { -1.0 } else { 1.0 };
                let sj = if j >= 2 { -1.0 } else { 1.0 };
                m[(i, j)] *= c(si * sj);
            }
        }
        Self::wrap(m)
    }

    /// Applies a relative phase e^{iΔφ} between the |01⟩ and |10⟩ components:
    /// conjugation by U = diag(1, 1, e^{iΔφ}, 1). The phase is attached to
    /// the |10⟩ amplitude; the opposite attachment differs only by a global
    /// phase and is unobservable, so tests exercise this through fidelities.
    pub fn dephase_relative(&self, delta_phi: f64) -> Self {
        let u = [c(1.0), c(1.0), C::from_polar(1.0, delta_phi), c(1.0)];
        let mut m = self.m;
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = u[i] * m[(i, j)] * u[j].conj();
            }
        }
        Self::wrap(m)
    }

    /// Tr(ρ · A⊗B) for ±1-valued observables; the result is real in [−1, 1].
    pub fn expectation(&self, a: &Observable, b: &Observable) -> f64 {
        let k = kron2(&a.matrix(), &b.matrix());
        let val = (self.m * k).trace();
        debug_assert!(val.im.abs() < 1e-10);
        val.re.clamp(-1.0, 1.0)
    }

    /// Joint outcome probabilities P(a=±1, b=±1) for a measurement setting,
    /// ordered (+1,+1), (+1,−1), (−1,+1), (−1,−1).
    pub fn outcome_probabilities(&self, setting: &MeasurementSetting) -> [f64; 4] {
        let mut p = [0.0; 4];
        let outs = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)];
        for (k, (oa, ob)) in outs.iter().enumerate() {
            let proj = kron2(&setting.a.projector(*oa), &setting.b.projector(*ob));
            let val = (self.m * proj).trace();
            debug_assert!(val.im.abs() < 1e-10);
            p[k] = val.re.max(0.0);
        }
        let total: f64 = p.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-9);
        for v in &mut p {
            *v /= total;
        }
        p
    }

    /// Full correlation tensor T_ij = Tr(ρ σ_i⊗σ_j) for i, j ∈ {x, y, z}.
    pub fn correlation_tensor(&self) -> [[f64; 3]; 3] {
        let obs = [Observable::x(), Observable::y(), Observable::z()];
        let mut t = [[0.0; 3]; 3];
        for (i, oa) in obs.iter().enumerate() {
            for (j, ob) in obs.iter().enumerate() {
                t[i][j] = self.expectation(oa, ob);
            }
        }
        t
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = self.m.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// Checks the Hermitian/trace/PSD invariants, returning the first
    /// violation if any.
    pub fn check_invariants(&self) -> Result<(), QstateError> {
        Self::new(self.m).map(|_| ())
    }

    /// Serializes as a single-line text record of the 16 entries in row-major
    /// order, each entry "re,im", entries separated by single spaces.
    pub fn to_record(&self) -> String {
        let mut parts = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                let e = self.m[(i, j)];
                parts.push(format!("{},{}", e.re, e.im));
            }
        }
        parts.join(" ")
    }

    /// Parses the record format produced by [`to_record`](Self::to_record).
    pub fn from_record(s: &str) -> Result<Self, QstateError> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 16 {
            return Err(QstateError::BadRecord(format!(
                "expected 16 entries, found {}",
                fields.len()
            )));
        }
        let mut m = Matrix4::zeros();
        for (k, f) in fields.iter().enumerate() {
            let (re, im) = f
                .split_once(',')
                .ok_or_else(|| QstateError::BadRecord(format!("entry {k} lacks a comma")))?;
            let re: f64 = re
                .parse()
                .map_err(|_| QstateError::BadRecord(format!("bad real part in entry {k}")))?;
            let im: f64 = im
                .parse()
                .map_err(|_| QstateError::BadRecord(format!("bad imaginary part in entry {k}")))?;
            m[(k / 4, k % 4)] = C::new(re, im);
        }
        Self::new(m)
    }
}

/// Kronecker product of two 2×2 matrices in the fixed (A, B) ordering.
pub fn kron2(a: &Matrix2<C>, b: &Matrix2<C>) -> Matrix4<C> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn gaussian(rng: &mut SimRng) -> f64 {
    // Box–Muller; two uniforms per normal keeps the stream layout simple.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Witness fidelity F = (1 − ⟨ZZ⟩ ± ⟨XX⟩ ± ⟨YY⟩)/4, sign per Bell kind.
pub fn witness_fidelity(xx: f64, yy: f64, zz: f64, kind: BellKind) -> Result<f64, QstateError> {
    for v in [xx, yy, zz] {
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(QstateError::CorrelatorOutOfRange(v));
        }
    }
    let s = kind.sign();
    Ok((1.0 - zz + s * xx + s * yy) / 4.0)
}

/// CHSH value S = ⟨A₀B₀⟩ + ⟨A₀B₁⟩ + ⟨A₁B₀⟩ − ⟨A₁B₁⟩.
pub fn chsh_value(rho: &DensityMatrix, settings: &ChshSettings) -> f64 {
    let [p00, p01, p10, p11] = settings.pairs();
    let s = rho.expectation(&p00.a, &p00.b) + rho.expectation(&p01.a, &p01.b)
        + rho.expectation(&p10.a, &p10.b)
        - rho.expectation(&p11.a, &p11.b);
    debug_assert!(s.abs() <= 2.0 * std::f64::consts::SQRT_2 + 1e-9);
    s
}

/// Trace distance ½·Tr|ρ − σ|.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = a.m - b.m;
    let ev = d.symmetric_eigen().eigenvalues;
    0.5 * ev.iter().map(|x| x.abs()).sum::<f64>()
}

/// Uhlmann fidelity F(ρ, σ) = (Tr √(√ρ σ √ρ))² between mixed states.
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let sqrt_a = psd_sqrt(&a.m);
    let inner = sqrt_a * b.m * sqrt_a;
    let ev = inner.symmetric_eigen().eigenvalues;
    let tr: f64 = ev.iter().map(|x| x.max(0.0).sqrt()).sum();
    (tr * tr).min(1.0)
}

fn psd_sqrt(m: &Matrix4<C>) -> Matrix4<C> {
    let se = m.symmetric_eigen();
    let mut out = Matrix4::zeros();
    for k in 0..4 {
        let lam = se.eigenvalues[k].max(0.0).sqrt();
        let v = se.eigenvectors.column(k);
        for i in 0..4 {
            for j in 0..4 {
                out[(i, j)] += v[i] * v[j].conj() * c(lam);
            }
        }
    }
    out
}

/// Linear-inversion tomography over the nine Pauli product bases, followed by
/// a deterministic projection back to the physical set.
///
/// Inversion: ρ̂ = ¼ Σ c_PQ P⊗Q over P, Q ∈ {I, X, Y, Z}, where the two-Pauli
/// coefficients are the measured correlators, and the I-containing terms come
/// from single-side marginals averaged over the three bases that share the
/// local setting. Projection: eigendecompose, clip negative eigenvalues to
/// zero, rescale the remaining spectrum to unit trace (proportional
/// redistribution of the clipped deficit).
pub fn tomography_reconstruct(tallies: &TallyTable) -> Result<DensityMatrix, QstateError> {
    // Collect correlators and marginals.
    let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut corr = [[0.0f64; 3]; 3];
    let mut marg_a = [0.0f64; 3];
    let mut marg_b = [0.0f64; 3];
    for (i, pa) in paulis.iter().enumerate() {
        for (j, pb) in paulis.iter().enumerate() {
            let label = PauliLabel(*pa, *pb).to_string();
            let counts = tallies
                .get(&label)
                .ok_or_else(|| QstateError::MissingSetting(label.clone()))?;
            if counts.total() == 0 {
                return Err(QstateError::EmptySetting(label));
            }
            corr[i][j] = counts.correlator();
            marg_a[i] += counts.marginal_a() / 3.0;
            marg_b[j] += counts.marginal_b() / 3.0;
        }
    }

    let mut m = Matrix4::identity() * c(0.25);
    for (i, pa) in paulis.iter().enumerate() {
        m += kron2(&pa.matrix(), &Pauli::I.matrix()) * c(marg_a[i] / 4.0);
        m += kron2(&Pauli::I.matrix(), &pa.matrix()) * c(marg_b[i] / 4.0);
        for (j, pb) in paulis.iter().enumerate() {
            m += kron2(&pa.matrix(), &pb.matrix()) * c(corr[i][j] / 4.0);
        }
    }

    Ok(project_to_physical(&m))
}

/// Deterministic projection of a Hermitian unit-trace estimate onto the
/// physical set: clip negative eigenvalues to zero and renormalize the
/// spectrum to unit trace.
pub fn project_to_physical(m: &Matrix4<C>) -> DensityMatrix {
    let herm = (m + m.adjoint()) * c(0.5);
    let se = herm.symmetric_eigen();
    let clipped: Vec<f64> = se.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut out = Matrix4::zeros();
    for (k, lam_clipped) in clipped.iter().enumerate() {
        let lam = if total > 0.0 { lam_clipped / total } else { 0.25 };
        let v = se.eigenvectors.column(k);
        for i in 0..4 {
            for j in 0..4 {
                out[(i, j)] += v[i] * v[j].conj() * c(lam);
            }
        }
    }
    DensityMatrix::wrap(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::tagged_rng;

    const SQRT2X2: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn bell_state_entries() {
        let plus = DensityMatrix::bell(BellKind::PsiPlus);
        let m = plus.matrix();
        assert_eq!(m[(1, 1)], c(0.5));
        assert_eq!(m[(2, 2)], c(0.5));
        assert_eq!(m[(1, 2)], c(0.5));
        assert_eq!(m[(2, 1)], c(0.5));
        assert_eq!(m[(0, 0)], c(0.0));
        assert_eq!(m[(3, 3)], c(0.0));

        let minus = DensityMatrix::bell(BellKind::PsiMinus);
        assert_eq!(minus.matrix()[(1, 2)], c(-0.5));
        assert_eq!(minus.matrix()[(1, 1)], c(0.5));

        assert!((plus.fidelity_to_bell(BellKind::PsiPlus) - 1.0).abs() < 1e-15);
        assert!(plus.fidelity_to_bell(BellKind::PsiMinus).abs() < 1e-15);
        plus.check_invariants().unwrap();
        minus.check_invariants().unwrap();
    }

    #[test]
    fn expectation_values_on_bell_states() {
        let psi = DensityMatrix::bell(BellKind::PsiPlus);
        assert!((psi.expectation(&Observable::z(), &Observable::z()) + 1.0).abs() < 1e-12);
        assert!((psi.expectation(&Observable::x(), &Observable::x()) - 1.0).abs() < 1e-12);
        assert!((psi.expectation(&Observable::y(), &Observable::y()) - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed();
        assert!(mixed.expectation(&Observable::x(), &Observable::z()).abs() < 1e-12);
    }

    #[test]
    fn observable_from_matrix_validates() {
        assert!(Observable::from_matrix(&Pauli::X.matrix()).is_ok());
        // Non-Hermitian rejected.
        let mut m = Pauli::X.matrix();
        m[(0, 1)] = C::new(0.0, 0.3);
        assert_eq!(
            Observable::from_matrix(&m),
            Err(QstateError::ObservableNotHermitian)
        );
        // Hermitian but not ±1 spectrum rejected.
        let id: Matrix2<C> = Matrix2::identity();
        assert_eq!(
            Observable::from_matrix(&id),
            Err(QstateError::ObservableNotDichotomic)
        );
    }

    #[test]
    fn witness_fidelity_cases() {
        assert!((witness_fidelity(1.0, 1.0, -1.0, BellKind::PsiPlus).unwrap() - 1.0).abs() < 1e-15);
        assert!((witness_fidelity(0.0, 0.0, 0.0, BellKind::PsiPlus).unwrap() - 0.25).abs() < 1e-15);
        assert!(
            (witness_fidelity(-1.0, -1.0, -1.0, BellKind::PsiMinus).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(witness_fidelity(1.2, 0.0, 0.0, BellKind::PsiPlus).is_err());
    }

    #[test]
    fn chsh_on_reference_states() {
        let settings = ChshSettings::psi_plus_optimal();
        let psi = DensityMatrix::bell(BellKind::PsiPlus);
        assert!((chsh_value(&psi, &settings) - SQRT2X2).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed();
        assert!(chsh_value(&mixed, &settings).abs() < 1e-12);
        let w = DensityMatrix::werner(std::f64::consts::FRAC_1_SQRT_2, BellKind::PsiPlus).unwrap();
        assert!((chsh_value(&w, &settings) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn werner_properties() {
        let b = DensityMatrix::werner(1.0, BellKind::PsiMinus).unwrap();
        assert!(trace_distance(&b, &DensityMatrix::bell(BellKind::PsiMinus)) < 1e-14);
        let mixed = DensityMatrix::werner(0.0, BellKind::PsiPlus).unwrap();
        assert!(trace_distance(&mixed, &DensityMatrix::maximally_mixed()) < 1e-14);
        let p = std::f64::consts::FRAC_1_SQRT_2;
        let w = DensityMatrix::werner(p, BellKind::PsiPlus).unwrap();
        let expect = (3.0 * p + 1.0) / 4.0;
        assert!((w.fidelity_to_bell(BellKind::PsiPlus) - expect).abs() < 1e-12);
        assert!(DensityMatrix::werner(-0.1, BellKind::PsiPlus).is_err());
        assert!(DensityMatrix::werner(1.1, BellKind::PsiPlus).is_err());
    }

    #[test]
    fn phase_flip_maps_between_bell_states() {
        let minus = DensityMatrix::bell(BellKind::PsiMinus);
        let flipped = minus.phase_flip_a();
        assert!((flipped.fidelity_to_bell(BellKind::PsiPlus) - 1.0).abs() < 1e-14);
        let back = flipped.phase_flip_a();
        assert!(trace_distance(&back, &minus) < 1e-14);
        let mixed = DensityMatrix::maximally_mixed();
        assert!(trace_distance(&mixed.phase_flip_a(), &mixed) < 1e-14);
    }

    #[test]
    fn dephase_relative_follows_cosine_law() {
        let psi = DensityMatrix::bell(BellKind::PsiPlus);
        assert!(trace_distance(&psi.dephase_relative(0.0), &psi) < 1e-14);
        let pi = std::f64::consts::PI;
        let minus = psi.dephase_relative(pi);
        assert!((minus.fidelity_to_bell(BellKind::PsiMinus) - 1.0).abs() < 1e-12);
        // cos²(Δφ/2): 0.5 at π/2, 0.75 at π/3.
        let quarter = psi.dephase_relative(pi / 2.0);
        assert!((quarter.fidelity_to_bell(BellKind::PsiPlus) - 0.5).abs() < 1e-12);
        let third = psi.dephase_relative(pi / 3.0);
        assert!((third.fidelity_to_bell(BellKind::PsiPlus) - 0.75).abs() < 1e-12);
        // cos²(Δφ/2) law across a sweep.
        for k in 0..16 {
            let phi = k as f64 * pi / 8.0;
            let f = psi.dephase_relative(phi).fidelity_to_bell(BellKind::PsiPlus);
            let expect = (phi / 2.0).cos().powi(2);
            assert!((f - expect).abs() < 1e-12, "phi={phi}: {f} vs {expect}");
        }
    }

    #[test]
    fn witness_matches_fidelity_on_random_states() {
        let mut rng = tagged_rng(11, 0x51A7E);
        for _ in 0..200 {
            let rho = DensityMatrix::random(&mut rng);
            rho.check_invariants().unwrap();
            let t = rho.correlation_tensor();
            for kind in [BellKind::PsiPlus, BellKind::PsiMinus] {
                let w = witness_fidelity(t[0][0], t[1][1], t[2][2], kind).unwrap();
                let f = rho.fidelity_to_bell(kind);
                assert!((w - f).abs() < 1e-10, "witness {w} vs fidelity {f}");
            }
        }
    }

    #[test]
    fn tsirelson_bound_holds_on_random_states_and_settings() {
        let mut rng = tagged_rng(12, 0x7511);
        let bound = SQRT2X2 + 1e-9;
        let reference = ChshSettings::psi_plus_optimal();
        for i in 0..1000 {
            let rho = DensityMatrix::random(&mut rng);
            let settings = if i % 2 == 0 {
                reference
            } else {
                ChshSettings {
                    a0: random_observable(&mut rng),
                    a1: random_observable(&mut rng),
                    b0: random_observable(&mut rng),
                    b1: random_observable(&mut rng),
                }
            };
            let s = chsh_value(&rho, &settings);
            assert!(s.abs() <= bound, "S = {s} violates the Tsirelson bound");
        }
    }

    fn random_observable(rng: &mut SimRng) -> Observable {
        loop {
            let (x, y, z) = (gaussian(rng), gaussian(rng), gaussian(rng));
            if let Ok(o) = Observable::new(x, y, z) {
                return o;
            }
        }
    }

    #[test]
    fn record_round_trip() {
        let mut rng = tagged_rng(5, 99);
        let rho = DensityMatrix::random(&mut rng);
        let rec = rho.to_record();
        let back = DensityMatrix::from_record(&rec).unwrap();
        assert!(trace_distance(&rho, &back) < 1e-12);
        assert!(DensityMatrix::from_record("1,0 2,0").is_err());
    }

    #[test]
    fn state_fidelity_reference_values() {
        let psi = DensityMatrix::bell(BellKind::PsiPlus);
        let w = DensityMatrix::werner(0.9, BellKind::PsiPlus).unwrap();
        // For pure σ, Uhlmann fidelity reduces to ⟨ψ|ρ|ψ⟩.
        let f = state_fidelity(&psi, &w);
        assert!((f - w.fidelity_to_bell(BellKind::PsiPlus)).abs() < 1e-9);
        assert!((state_fidelity(&w, &w) - 1.0).abs() < 1e-9);
    }
}
