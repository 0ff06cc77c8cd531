//! Linear algebra over the four-dimensional Hilbert space of one photon
//! carrying a spatial qubit (R/L) and a polarization qubit (v/h).
//!
//! Amplitudes are ordered over the canonical product basis
//! `(|Rv>, |Rh>, |Lv>, |Lh>)`. Global phases are never normalized away;
//! physical equality of two states is `|<u|v>| = 1`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A complex probability amplitude.
pub type Amplitude = Complex64;

/// Dimension of the two-qubit space.
pub const DIM: usize = 4;

/// Tolerance on the squared norm of a stored state.
pub const TOL_NORM: f64 = 1e-12;

/// Tolerance on Gram-matrix entries of a measurement basis.
pub const TOL_ORTHONORMAL: f64 = 1e-10;

/// Tolerance on conjugate symmetry of a Hermitian matrix.
pub const TOL_HERMITIAN: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Hilbert4Error {
    #[error("amplitude {index} is not finite")]
    NonFinite { index: usize },
    #[error("state is not normalized: squared norm {norm_sqr}")]
    NotNormalized { norm_sqr: f64 },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("basis `{label}` is not orthonormal: |<v{i}|v{j}> - delta| = {deviation:e}")]
    NotOrthonormal {
        label: String,
        i: usize,
        j: usize,
        deviation: f64,
    },
    #[error("matrix is not Hermitian at ({row}, {col}): deviation {deviation:e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A pure single-photon two-qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector {
    amps: [Amplitude; DIM],
}

impl StateVector {
    /// Builds a state from amplitudes that are already unit norm.
    pub fn new(amps: [Amplitude; DIM]) -> Result<Self, Hilbert4Error> {
        check_finite(&amps)?;
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > TOL_NORM {
            return Err(Hilbert4Error::NotNormalized { norm_sqr });
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: [Amplitude; DIM]) -> Result<Self, Hilbert4Error> {
        check_finite(&amps)?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Hilbert4Error::ZeroVector);
        }
        Ok(Self {
            amps: amps.map(|a| a / norm),
        })
    }

    /// Real-coefficient convenience constructor; normalizes.
    pub fn from_real(coeffs: [f64; DIM]) -> Result<Self, Hilbert4Error> {
        Self::normalized(coeffs.map(|c| Complex64::new(c, 0.0)))
    }

    /// The `index`-th canonical basis vector (`0 = Rv`, `1 = Rh`, `2 = Lv`, `3 = Lh`).
    pub fn canonical(index: usize) -> Self {
        assert!(index < DIM, "canonical index {index} out of range");
        let mut amps = [ZERO; DIM];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn amps(&self) -> &[Amplitude; DIM] {
        &self.amps
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> Amplitude {
        inner(self, other)
    }

    /// Transition probability `|<self|other>|^2`.
    pub fn overlap(&self, other: &StateVector) -> f64 {
        inner(self, other).norm_sqr()
    }

    pub fn projector(&self) -> HermitianMatrix4 {
        let mut entries = [[ZERO; DIM]; DIM];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.amps[i] * self.amps[j].conj();
            }
        }
        HermitianMatrix4 { entries }
    }

    /// Linear combination `sum_j coeffs[j] * vectors[j]`, normalized.
    pub fn combine(vectors: &[StateVector], coeffs: &[Amplitude]) -> Result<Self, Hilbert4Error> {
        if vectors.len() != coeffs.len() {
            return Err(Hilbert4Error::InvalidArgument(format!(
                "{} vectors but {} coefficients",
                vectors.len(),
                coeffs.len()
            )));
        }
        let mut amps = [ZERO; DIM];
        for (v, c) in vectors.iter().zip(coeffs) {
            for (a, x) in amps.iter_mut().zip(v.amps.iter()) {
                *a += c * x;
            }
        }
        Self::normalized(amps)
    }
}

fn check_finite(amps: &[Amplitude; DIM]) -> Result<(), Hilbert4Error> {
    match amps.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
        Some(index) => Err(Hilbert4Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// `<u|v>` with `u` conjugated.
pub fn inner(u: &StateVector, v: &StateVector) -> Amplitude {
    u.amps
        .iter()
        .zip(v.amps.iter())
        .fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

// Amplitudes travel as `[re, im]` pairs.
impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // `+ 0.0` folds negative zero so equal states print identically
        let pairs: Vec<[f64; 2]> = self.amps.iter().map(|a| [a.re + 0.0, a.im + 0.0]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = <[[f64; 2]; DIM]>::deserialize(deserializer)?;
        let amps = pairs.map(|[re, im]| Complex64::new(re, im));
        StateVector::new(amps).map_err(serde::de::Error::custom)
    }
}

/// Spatial alternative of the photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spatial {
    /// Right fiber.
    R,
    /// Left fiber.
    L,
    /// `(R + L)/sqrt 2`
    S,
    /// `(R - L)/sqrt 2`
    A,
}

/// Polarization of the photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarization {
    /// Vertical.
    V,
    /// Horizontal.
    H,
    /// `(v + h)/sqrt 2`
    S,
    /// `(v - h)/sqrt 2`
    A,
}

const PLAIN_FIRST: [f64; 2] = [1.0, 0.0];
const PLAIN_SECOND: [f64; 2] = [0.0, 1.0];
const SYMMETRIC: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const ANTISYMMETRIC: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2];

impl Spatial {
    fn components(self) -> [f64; 2] {
        match self {
            Spatial::R => PLAIN_FIRST,
            Spatial::L => PLAIN_SECOND,
            Spatial::S => SYMMETRIC,
            Spatial::A => ANTISYMMETRIC,
        }
    }
}

impl Polarization {
    fn components(self) -> [f64; 2] {
        match self {
            Polarization::V => PLAIN_FIRST,
            Polarization::H => PLAIN_SECOND,
            Polarization::S => SYMMETRIC,
            Polarization::A => ANTISYMMETRIC,
        }
    }
}

impl FromStr for Spatial {
    type Err = Hilbert4Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => Ok(Spatial::R),
            "L" => Ok(Spatial::L),
            "S" => Ok(Spatial::S),
            "A" => Ok(Spatial::A),
            other => Err(Hilbert4Error::InvalidArgument(format!(
                "unknown spatial letter `{other}` (expected R, L, S or A)"
            ))),
        }
    }
}

impl FromStr for Polarization {
    type Err = Hilbert4Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v" => Ok(Polarization::V),
            "h" => Ok(Polarization::H),
            "s" => Ok(Polarization::S),
            "a" => Ok(Polarization::A),
            other => Err(Hilbert4Error::InvalidArgument(format!(
                "unknown polarization letter `{other}` (expected v, h, s or a)"
            ))),
        }
    }
}

/// Tensor product `|spatial> (x) |polar>`.
pub fn product_state(spatial: Spatial, polar: Polarization) -> StateVector {
    let s = spatial.components();
    let p = polar.components();
    let amps = [s[0] * p[0], s[0] * p[1], s[1] * p[0], s[1] * p[1]].map(|x| Complex64::new(x, 0.0));
    StateVector { amps }
}

/// Parses a two-letter label such as `"Rs"` or `"Ah"`.
pub fn product_state_from_label(label: &str) -> Result<StateVector, Hilbert4Error> {
    let mut chars = label.chars();
    match (chars.next(), chars.next(), chars.next()) {
        (Some(s), Some(p), None) => Ok(product_state(
            s.to_string().parse()?,
            p.to_string().parse()?,
        )),
        _ => Err(Hilbert4Error::InvalidArgument(format!(
            "product-state label must be two letters, got `{label}`"
        ))),
    }
}

/// Four mutually orthonormal states; one detector configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis")]
pub struct MeasurementBasis {
    label: String,
    vectors: [StateVector; DIM],
}

#[derive(Deserialize)]
struct RawBasis {
    label: String,
    vectors: [StateVector; DIM],
}

impl TryFrom<RawBasis> for MeasurementBasis {
    type Error = Hilbert4Error;
    fn try_from(raw: RawBasis) -> Result<Self, Self::Error> {
        MeasurementBasis::new(raw.label, raw.vectors)
    }
}

impl MeasurementBasis {
    pub fn new(label: impl Into<String>, vectors: [StateVector; DIM]) -> Result<Self, Hilbert4Error> {
        let label = label.into();
        for i in 0..DIM {
            for j in 0..DIM {
                let delta = if i == j { ONE } else { ZERO };
                let deviation = (inner(&vectors[i], &vectors[j]) - delta).norm();
                if deviation > TOL_ORTHONORMAL {
                    return Err(Hilbert4Error::NotOrthonormal {
                        label,
                        i,
                        j,
                        deviation,
                    });
                }
            }
        }
        Ok(Self { label, vectors })
    }

    /// `(|Rv>, |Rh>, |Lv>, |Lh>)`.
    pub fn canonical(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            vectors: [0, 1, 2, 3].map(StateVector::canonical),
        }
    }

    /// Basis whose `j`-th vector is the `j`-th column of `columns`.
    pub fn from_columns(label: impl Into<String>, columns: &[[Amplitude; DIM]; DIM]) -> Result<Self, Hilbert4Error> {
        let mut vectors = [StateVector::canonical(0); DIM];
        for (j, v) in vectors.iter_mut().enumerate() {
            let amps = [columns[0][j], columns[1][j], columns[2][j], columns[3][j]];
            *v = StateVector::normalized(amps)?;
        }
        Self::new(label, vectors)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn vectors(&self) -> &[StateVector; DIM] {
        &self.vectors
    }

    pub fn vector(&self, index: usize) -> &StateVector {
        &self.vectors[index]
    }

    /// Maximum `|<v_i|v_j> - delta_ij|` over the Gram matrix.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                let delta = if i == j { ONE } else { ZERO };
                worst = worst.max((inner(&self.vectors[i], &self.vectors[j]) - delta).norm());
            }
        }
        worst
    }
}

/// Born-rule outcome probabilities `|<basis_j|state>|^2`, clamped to `[0, 1]`.
pub fn born_probabilities(basis: &MeasurementBasis, state: &StateVector) -> [f64; DIM] {
    let mut probs = [0.0; DIM];
    for (p, v) in probs.iter_mut().zip(basis.vectors.iter()) {
        *p = v.overlap(state).clamp(0.0, 1.0);
    }
    probs
}

/// Draws an outcome index by inverse CDF over the fixed outcome order.
pub fn sample_outcome<R: Rng + ?Sized>(basis: &MeasurementBasis, state: &StateVector, rng: &mut R) -> usize {
    let probs = born_probabilities(basis, state);
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (j, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return j;
        }
    }
    // rounding left u beyond the total: fall back to the last possible outcome
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(DIM - 1)
}

/// A 4x4 conjugate-symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermitianMatrix4 {
    entries: [[Amplitude; DIM]; DIM],
}

/// Eigenpairs in ascending eigenvalue order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: [f64; DIM],
    pub vectors: [StateVector; DIM],
}

impl HermitianMatrix4 {
    pub fn new(entries: [[Amplitude; DIM]; DIM]) -> Result<Self, Hilbert4Error> {
        for row in 0..DIM {
            for col in row..DIM {
                let a = entries[row][col];
                let b = entries[col][row];
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(Hilbert4Error::NonFinite { index: row * DIM + col });
                }
                let deviation = (a - b.conj()).norm();
                if deviation > TOL_HERMITIAN {
                    return Err(Hilbert4Error::NotHermitian { row, col, deviation });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn zero() -> Self {
        Self {
            entries: [[ZERO; DIM]; DIM],
        }
    }

    pub fn identity() -> Self {
        Self::diagonal([1.0; DIM])
    }

    pub fn diagonal(diag: [f64; DIM]) -> Self {
        let mut m = Self::zero();
        for (i, d) in diag.iter().enumerate() {
            m.entries[i][i] = Complex64::new(*d, 0.0);
        }
        m
    }

    pub fn entries(&self) -> &[[Amplitude; DIM]; DIM] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[row][col]
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        out.add_scaled(other, 1.0);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = *self;
        out.add_scaled(other, -1.0);
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.map(|row| row.map(|e| e * factor)),
        }
    }

    /// `self += factor * other` in place.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        for (row, orow) in self.entries.iter_mut().zip(other.entries.iter()) {
            for (e, o) in row.iter_mut().zip(orow.iter()) {
                *e += o * factor;
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..DIM).map(|i| self.entries[i][i].re).sum()
    }

    pub fn apply(&self, v: &StateVector) -> [Amplitude; DIM] {
        let mut out = [ZERO; DIM];
        for (o, row) in out.iter_mut().zip(self.entries.iter()) {
            *o = row.iter().zip(v.amps.iter()).fold(ZERO, |acc, (a, x)| acc + a * x);
        }
        out
    }

    /// `<v|self|v>`, real for Hermitian `self`.
    pub fn expectation(&self, v: &StateVector) -> f64 {
        let hv = self.apply(v);
        v.amps
            .iter()
            .zip(hv.iter())
            .fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
            .re
    }

    /// Largest entrywise modulus difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        worst
    }

    /// Cyclic complex Jacobi eigen-decomposition.
    pub fn eigen_decompose(&self) -> EigenDecomposition {
        let mut a = self.entries;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = Complex64::new(row[i].re, 0.0);
        }
        let mut v = [[ZERO; DIM]; DIM];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = ONE;
        }

        let scale = a.iter().flatten().map(|e| e.norm_sqr()).sum::<f64>().sqrt();
        if scale > 0.0 {
            for _sweep in 0..64 {
                let off: f64 = (0..DIM)
                    .flat_map(|p| ((p + 1)..DIM).map(move |q| (p, q)))
                    .map(|(p, q)| a[p][q].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                if off <= 1e-17 * scale {
                    break;
                }
                for p in 0..DIM {
                    for q in (p + 1)..DIM {
                        jacobi_rotate(&mut a, &mut v, p, q);
                    }
                }
            }
        }

        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&x, &y| a[x][x].re.total_cmp(&a[y][y].re));
        let values = order.map(|i| a[i][i].re);
        let vectors = order.map(|col| {
            let amps = [v[0][col], v[1][col], v[2][col], v[3][col]];
            StateVector::normalized(amps).expect("Jacobi columns are unit vectors")
        });
        EigenDecomposition { values, vectors }
    }

    pub fn min_eigenpair(&self) -> (f64, StateVector) {
        let eig = self.eigen_decompose();
        (eig.values[0], eig.vectors[0])
    }

    /// Sum of absolute eigenvalues.
    pub fn trace_norm(&self) -> f64 {
        self.eigen_decompose().values.iter().map(|l| l.abs()).sum()
    }
}

/// Zeroes `a[p][q]` with a phase fix on column `q` followed by a real Givens rotation.
fn jacobi_rotate(a: &mut [[Amplitude; DIM]; DIM], v: &mut [[Amplitude; DIM]; DIM], p: usize, q: usize) {
    let apq = a[p][q];
    let r = apq.norm();
    if r < 1e-300 {
        return;
    }

    // A <- P^H A P with P = diag(.., w at q, ..) makes a[p][q] real and positive.
    let w = apq.conj() / r;
    for row in a.iter_mut() {
        row[q] *= w;
    }
    for e in a[q].iter_mut() {
        *e *= w.conj();
    }
    for row in v.iter_mut() {
        row[q] *= w;
    }

    let app = a[p][p].re;
    let aqq = a[q][q].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for row in a.iter_mut() {
        let (xp, xq) = (row[p], row[q]);
        row[p] = xp * c - xq * s;
        row[q] = xp * s + xq * c;
    }
    for k in 0..DIM {
        let (xp, xq) = (a[p][k], a[q][k]);
        a[p][k] = xp * c - xq * s;
        a[q][k] = xp * s + xq * c;
    }
    for row in v.iter_mut() {
        let (xp, xq) = (row[p], row[q]);
        row[p] = xp * c - xq * s;
        row[q] = xp * s + xq * c;
    }

    a[p][q] = ZERO;
    a[q][p] = ZERO;
    a[p][p] = Complex64::new(app - t * r, 0.0);
    a[q][q] = Complex64::new(aqq + t * r, 0.0);
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.amps.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6}{:+.6}i", a.re, a.im)?;
        }
        write!(f, ")")
    }
}
