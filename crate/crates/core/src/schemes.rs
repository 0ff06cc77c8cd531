//! Geometry of the deterministic schemes: Alice's state pairs, Bob's two
//! measurement bases, and bit inference by orthogonality.
//!
//! Bob's inference never consults a lookup table. A detected basis vector
//! decodes to `+` for pair `i` when it is orthogonal to `|i->`, and to `-`
//! when it is orthogonal to `|i+>`. Every constructor here yields a scheme
//! where exactly one of the two overlaps vanishes for every basis vector.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hilbert4::{
    product_state_from_label, Hilbert4Error, MeasurementBasis, StateVector, DIM,
};

/// Overlap modulus below which two states count as orthogonal.
pub const TOL_ORTHOGONAL: f64 = 1e-10;

/// Smallest accepted `|k|`; the inverse bounds the largest.
pub const K_MIN: f64 = 1e-6;
pub const K_MAX: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("degenerate parameter k = {k}: |k| must lie in [{K_MIN:e}, {K_MAX:e}]")]
    DegenerateParameter { k: f64 },
    #[error("scheme has no pair of type {type_id}")]
    UnknownType { type_id: usize },
    #[error("ambiguous inference for type {type_id}: overlaps with |+> and |-> are {plus:e} and {minus:e}")]
    AmbiguousInference { type_id: usize, plus: f64, minus: f64 },
    #[error("unknown scheme name `{0}` (expected product, k, k-four or three-one)")]
    UnknownScheme(String),
    #[error("invalid detection label `{0}`")]
    InvalidDetection(String),
    #[error(transparent)]
    Hilbert(#[from] Hilbert4Error),
}

/// A transmitted bit value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Bit {
    pub const BOTH: [Bit; 2] = [Bit::Plus, Bit::Minus];

    pub fn symbol(self) -> char {
        match self {
            Bit::Plus => '+',
            Bit::Minus => '-',
        }
    }

    pub fn from_symbol(c: char) -> Option<Bit> {
        match c {
            '+' => Some(Bit::Plus),
            '-' | '\u{2212}' => Some(Bit::Minus),
            _ => None,
        }
    }

    /// Parses a string such as `"++-+"`.
    pub fn parse_string(s: &str) -> Option<Vec<Bit>> {
        s.chars().map(Bit::from_symbol).collect()
    }

    pub fn render(bits: &[Bit]) -> String {
        bits.iter().map(|b| b.symbol()).collect()
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Which of Bob's two bases the beam splitter routed the photon to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisChoice {
    #[serde(rename = "B")]
    B,
    #[serde(rename = "B'")]
    BPrime,
}

impl BasisChoice {
    pub const BOTH: [BasisChoice; 2] = [BasisChoice::B, BasisChoice::BPrime];

    pub fn label(self) -> &'static str {
        match self {
            BasisChoice::B => "B",
            BasisChoice::BPrime => "B'",
        }
    }
}

/// One of Bob's eight detector clicks; rendered 1-based as `B3` or `B'3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Detection {
    pub basis: BasisChoice,
    /// Zero-based outcome index.
    pub index: usize,
}

impl Detection {
    pub fn new(basis: BasisChoice, index: usize) -> Self {
        assert!(index < DIM, "detector index {index} out of range");
        Self { basis, index }
    }

    /// All eight detections in table order `B1..B4, B'1..B'4`.
    pub fn all() -> impl Iterator<Item = Detection> {
        BasisChoice::BOTH
            .into_iter()
            .flat_map(|basis| (0..DIM).map(move |index| Detection { basis, index }))
    }
}

impl fmt::Display for Detection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.basis.label(), self.index + 1)
    }
}

impl FromStr for Detection {
    type Err = SchemeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (basis, digits) = if let Some(rest) = s.strip_prefix("B'") {
            (BasisChoice::BPrime, rest)
        } else if let Some(rest) = s.strip_prefix('B') {
            (BasisChoice::B, rest)
        } else {
            return Err(SchemeError::InvalidDetection(s.to_string()));
        };
        match digits.parse::<usize>() {
            Ok(n) if (1..=DIM).contains(&n) => Ok(Detection::new(basis, n - 1)),
            _ => Err(SchemeError::InvalidDetection(s.to_string())),
        }
    }
}

impl Serialize for Detection {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Detection {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Alice's two signal states for one pair type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub type_id: usize,
    pub plus: StateVector,
    pub minus: StateVector,
}

impl StatePair {
    pub fn state(&self, bit: Bit) -> &StateVector {
        match bit {
            Bit::Plus => &self.plus,
            Bit::Minus => &self.minus,
        }
    }
}

/// One of Alice's signals: a pair type, a bit, and the state carrying them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Signal {
    pub type_id: usize,
    pub bit: Bit,
    pub state: StateVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Product states with complementary product bases.
    #[serde(rename = "product")]
    Product,
    /// Two pairs over bases related by the `K` matrix.
    #[serde(rename = "k")]
    K,
    /// The two `K` pairs plus their mirror images under `B1<->B4, B2<->B3`.
    #[serde(rename = "k-four")]
    KFourPairs,
    /// Four orthogonal pairs drawn from two bases with all cross overlaps 1/3.
    #[serde(rename = "three-one")]
    ThreeOne,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Product => "product",
            SchemeKind::K => "k",
            SchemeKind::KFourPairs => "k-four",
            SchemeKind::ThreeOne => "three-one",
        }
    }

    pub fn takes_k(self) -> bool {
        matches!(self, SchemeKind::K | SchemeKind::KFourPairs)
    }

    /// Builds the scheme; `k` is ignored by the parameter-free kinds.
    pub fn build(self, k: f64) -> Result<Scheme, SchemeError> {
        match self {
            SchemeKind::Product => Ok(product_scheme()),
            SchemeKind::K => k_scheme(k),
            SchemeKind::KFourPairs => k_scheme_four_pairs(k),
            SchemeKind::ThreeOne => Ok(three_one_scheme()),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "product" => Ok(SchemeKind::Product),
            "k" | "k-two" => Ok(SchemeKind::K),
            "k-four" | "four-pair" => Ok(SchemeKind::KFourPairs),
            "three-one" => Ok(SchemeKind::ThreeOne),
            other => Err(SchemeError::UnknownScheme(other.to_string())),
        }
    }
}

/// Complete protocol geometry. Serializes to the `scheme dump` layout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scheme {
    name: SchemeKind,
    k: Option<f64>,
    pairs: Vec<StatePair>,
    basis_b: MeasurementBasis,
    basis_b_prime: MeasurementBasis,
}

impl Scheme {
    pub fn kind(&self) -> SchemeKind {
        self.name
    }

    pub fn k(&self) -> Option<f64> {
        self.k
    }

    pub fn pairs(&self) -> &[StatePair] {
        &self.pairs
    }

    pub fn pair(&self, type_id: usize) -> Result<&StatePair, SchemeError> {
        self.pairs
            .iter()
            .find(|p| p.type_id == type_id)
            .ok_or(SchemeError::UnknownType { type_id })
    }

    pub fn type_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.type_id)
    }

    pub fn basis(&self, choice: BasisChoice) -> &MeasurementBasis {
        match choice {
            BasisChoice::B => &self.basis_b,
            BasisChoice::BPrime => &self.basis_b_prime,
        }
    }

    pub fn detected_state(&self, detection: Detection) -> &StateVector {
        self.basis(detection.basis).vector(detection.index)
    }

    pub fn state(&self, type_id: usize, bit: Bit) -> Result<&StateVector, SchemeError> {
        Ok(self.pair(type_id)?.state(bit))
    }

    /// Every `(type, bit)` signal, pairs in order, `+` before `-`.
    pub fn signals(&self) -> Vec<Signal> {
        self.pairs
            .iter()
            .flat_map(|p| {
                Bit::BOTH.into_iter().map(move |bit| Signal {
                    type_id: p.type_id,
                    bit,
                    state: *p.state(bit),
                })
            })
            .collect()
    }

    /// Decodes a detected state given the pair type announced by Alice.
    pub fn infer_bit(&self, detected: &StateVector, type_id: usize) -> Result<Bit, SchemeError> {
        let pair = self.pair(type_id)?;
        let plus = detected.inner(&pair.plus).norm();
        let minus = detected.inner(&pair.minus).norm();
        match (plus <= TOL_ORTHOGONAL, minus <= TOL_ORTHOGONAL) {
            (false, true) => Ok(Bit::Plus),
            (true, false) => Ok(Bit::Minus),
            _ => Err(SchemeError::AmbiguousInference { type_id, plus, minus }),
        }
    }

    pub fn infer_detection(&self, detection: Detection, type_id: usize) -> Result<Bit, SchemeError> {
        self.infer_bit(self.detected_state(detection), type_id)
    }

    /// Whether Bob needs the pair type to decode `detected`.
    pub fn needs_classical_info(&self, detected: &StateVector) -> Result<bool, SchemeError> {
        let mut seen: Option<Bit> = None;
        for type_id in self.type_ids() {
            let bit = self.infer_bit(detected, type_id)?;
            match seen {
                Some(prev) if prev != bit => return Ok(true),
                _ => seen = Some(bit),
            }
        }
        Ok(false)
    }

    /// Inferred bits, one row per pair type, columns `B1..B4, B'1..B'4`.
    pub fn inference_grid(&self) -> Result<Vec<Vec<Bit>>, SchemeError> {
        self.type_ids()
            .map(|type_id| {
                Detection::all()
                    .map(|d| self.infer_detection(d, type_id))
                    .collect()
            })
            .collect()
    }

    /// Checks that every basis vector is orthogonal to exactly one member of every pair.
    pub fn check_determinism(&self) -> Result<(), SchemeError> {
        for detection in Detection::all() {
            for type_id in self.type_ids() {
                self.infer_detection(detection, type_id)?;
            }
        }
        Ok(())
    }

    /// Same geometry with only the listed pair types.
    #[cfg(test)]
    pub(crate) fn restricted_to(&self, type_ids: &[usize]) -> Result<Scheme, SchemeError> {
        let pairs = type_ids
            .iter()
            .map(|&t| self.pair(t).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scheme { pairs, ..self.clone() })
    }

    /// Largest `| |<B_i|B'_j>|^2 - 1/4 |`; zero for complementary bases.
    pub fn complementarity_deviation(&self) -> f64 {
        self.cross_overlaps()
            .iter()
            .flatten()
            .map(|p| (p - 0.25).abs())
            .fold(0.0, f64::max)
    }

    /// `|<B_i|B'_j>|^2` indexed `[i][j]`.
    pub fn cross_overlaps(&self) -> [[f64; DIM]; DIM] {
        let mut out = [[0.0; DIM]; DIM];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                *p = self.basis_b.vector(i).overlap(self.basis_b_prime.vector(j));
            }
        }
        out
    }
}

/// The real 4x4 matrix relating Bob's two bases in the `k` family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KMatrix {
    pub k: f64,
    pub entries: [[f64; DIM]; DIM],
}

impl KMatrix {
    pub fn new(k: f64) -> Self {
        let k2 = k * k;
        let raw = [
            [1.0, k, k, k2],
            [k, k2, -1.0, -k],
            [k, -1.0, k2, -k],
            [k2, -k, -k, 1.0],
        ];
        let norm = 1.0 + k2;
        Self {
            k,
            entries: raw.map(|row| row.map(|x| x / norm)),
        }
    }

    pub fn square(&self) -> [[f64; DIM]; DIM] {
        let mut out = [[0.0; DIM]; DIM];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..DIM).map(|m| self.entries[i][m] * self.entries[m][j]).sum();
            }
        }
        out
    }

    /// Largest `|K_ij - K_ji|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.entries[i][j] - self.entries[j][i]).abs());
            }
        }
        worst
    }

    /// Largest entry of `|K K - 1|`. For real symmetric `K` this also bounds unitarity.
    pub fn involution_deviation(&self) -> f64 {
        let sq = self.square();
        let mut worst: f64 = 0.0;
        for (i, row) in sq.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((e - delta).abs());
            }
        }
        worst
    }
}

/// The sign pattern of the three-one basis transformation (zero diagonal).
pub const THREE_ONE_SIGNS: [[i8; DIM]; DIM] = [
    [0, 1, 1, 1],
    [-1, 0, -1, 1],
    [-1, 1, 0, -1],
    [-1, -1, 1, 0],
];

/// `(i/sqrt 3) * THREE_ONE_SIGNS`: rows give the bras `<B_i|` in terms of `<B'_j|`.
pub fn three_one_matrix() -> [[Complex64; DIM]; DIM] {
    let factor = Complex64::new(0.0, 1.0 / 3f64.sqrt());
    THREE_ONE_SIGNS.map(|row| row.map(|s| factor * f64::from(s)))
}

/// Largest deviations of the three-one matrix from Hermiticity and from `M M = 1`.
pub fn three_one_matrix_deviations() -> (f64, f64) {
    let m = three_one_matrix();
    let mut herm: f64 = 0.0;
    let mut invol: f64 = 0.0;
    for i in 0..DIM {
        for j in 0..DIM {
            herm = herm.max((m[i][j] - m[j][i].conj()).norm());
            let sq: Complex64 = (0..DIM).map(|l| m[i][l] * m[l][j]).sum();
            let delta = if i == j { 1.0 } else { 0.0 };
            invol = invol.max((sq - delta).norm());
        }
    }
    (herm, invol)
}

fn check_k(k: f64) -> Result<(), SchemeError> {
    if !k.is_finite() || k.abs() < K_MIN || k.abs() > K_MAX {
        return Err(SchemeError::DegenerateParameter { k });
    }
    Ok(())
}

fn label_states(labels: [&str; 4]) -> [StateVector; 4] {
    labels.map(|l| product_state_from_label(l).expect("static product-state labels"))
}

/// Product-state scheme: pairs `(Rs, La)` and `(Sv, Ah)`,
/// bases `(Rv, Rh, Lv, Lh)` and `(Ss, As, Sa, Aa)`.
pub fn product_scheme() -> Scheme {
    let [rs, la, sv, ah] = label_states(["Rs", "La", "Sv", "Ah"]);
    let basis_b = MeasurementBasis::new("B", label_states(["Rv", "Rh", "Lv", "Lh"]))
        .expect("canonical products are orthonormal");
    let basis_b_prime = MeasurementBasis::new("B'", label_states(["Ss", "As", "Sa", "Aa"]))
        .expect("symmetric/antisymmetric products are orthonormal");
    Scheme {
        name: SchemeKind::Product,
        k: None,
        pairs: vec![
            StatePair { type_id: 1, plus: rs, minus: la },
            StatePair { type_id: 2, plus: sv, minus: ah },
        ],
        basis_b,
        basis_b_prime,
    }
}

fn k_bases(k: f64) -> (MeasurementBasis, MeasurementBasis) {
    let km = KMatrix::new(k);
    let columns = km.entries.map(|row| row.map(|x| Complex64::new(x, 0.0)));
    let basis_b = MeasurementBasis::canonical("B");
    let basis_b_prime =
        MeasurementBasis::from_columns("B'", &columns).expect("K is orthogonal within tolerance");
    (basis_b, basis_b_prime)
}

fn real_combination(basis: &MeasurementBasis, coeffs: [f64; DIM]) -> StateVector {
    let c = coeffs.map(|x| Complex64::new(x, 0.0));
    StateVector::combine(basis.vectors(), &c).expect("nonzero combination")
}

/// `(B1 + k B2, k B3 - B4)` and `(B1 + k B3, k B2 - B4)`, each over `sqrt(1 + k^2)`.
fn k_pairs(basis: &MeasurementBasis, k: f64) -> [StatePair; 2] {
    [
        StatePair {
            type_id: 1,
            plus: real_combination(basis, [1.0, k, 0.0, 0.0]),
            minus: real_combination(basis, [0.0, 0.0, k, -1.0]),
        },
        StatePair {
            type_id: 2,
            plus: real_combination(basis, [1.0, 0.0, k, 0.0]),
            minus: real_combination(basis, [0.0, k, 0.0, -1.0]),
        },
    ]
}

/// Two-pair scheme with bases related by [`KMatrix`].
pub fn k_scheme(k: f64) -> Result<Scheme, SchemeError> {
    check_k(k)?;
    let (basis_b, basis_b_prime) = k_bases(k);
    let pairs = k_pairs(&basis_b, k).to_vec();
    Ok(Scheme {
        name: SchemeKind::K,
        k: Some(k),
        pairs,
        basis_b,
        basis_b_prime,
    })
}

/// Four-pair extension of [`k_scheme`].
///
/// The `K` pairs are invariant under `B -> B'`, so the extra pairs come from
/// the reflection `B1<->B4, B2<->B3`: `(B3 + k B4, k B1 - B2)` and
/// `(B2 + k B4, k B1 - B3)`. Both also have two-vector support in `B'`,
/// which keeps inference deterministic in either basis.
pub fn k_scheme_four_pairs(k: f64) -> Result<Scheme, SchemeError> {
    check_k(k)?;
    let (basis_b, basis_b_prime) = k_bases(k);
    let mut pairs = k_pairs(&basis_b, k).to_vec();
    pairs.push(StatePair {
        type_id: 3,
        plus: real_combination(&basis_b, [0.0, 0.0, 1.0, k]),
        minus: real_combination(&basis_b, [k, -1.0, 0.0, 0.0]),
    });
    pairs.push(StatePair {
        type_id: 4,
        plus: real_combination(&basis_b, [0.0, 1.0, 0.0, k]),
        minus: real_combination(&basis_b, [k, 0.0, -1.0, 0.0]),
    });
    Ok(Scheme {
        name: SchemeKind::KFourPairs,
        k: Some(k),
        pairs,
        basis_b,
        basis_b_prime,
    })
}

/// Direct-communication scheme: `|i+> = |B_i>`, `|i-> = |B'_i>`, `B'` canonical.
pub fn three_one_scheme() -> Scheme {
    let m = three_one_matrix();
    // <B_i| = sum_j m[i][j] <B'_j|, so |B_i> has amplitudes conj(m[i][j]).
    let vectors = [0, 1, 2, 3].map(|i| {
        StateVector::new(m[i].map(|x| x.conj())).expect("rows of a unitary have unit norm")
    });
    let basis_b = MeasurementBasis::new("B", vectors).expect("three-one matrix is unitary");
    let basis_b_prime = MeasurementBasis::canonical("B'");
    let pairs = (0..DIM)
        .map(|i| StatePair {
            type_id: i + 1,
            plus: *basis_b.vector(i),
            minus: *basis_b_prime.vector(i),
        })
        .collect();
    Scheme {
        name: SchemeKind::ThreeOne,
        k: None,
        pairs,
        basis_b,
        basis_b_prime,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert4::HermitianMatrix4;
    use Bit::{Minus as M, Plus as P};

    const K_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

    // Published sign grids, columns B1..B4 followed by B'1..B'4.
    const TABLE_1: [[Bit; 8]; 2] = [[P, P, M, M, P, P, M, M], [P, M, P, M, P, M, P, M]];
    const TABLE_2: [[Bit; 8]; 4] = [
        [P, M, M, M, M, P, P, P],
        [M, P, M, M, P, M, P, P],
        [M, M, P, M, P, P, M, P],
        [M, M, M, P, P, P, P, M],
    ];

    fn det(s: &str) -> Detection {
        s.parse().unwrap()
    }

    #[test]
    fn product_scheme_orthogonalities() {
        let s = product_scheme();
        let b3 = s.detected_state(det("B3"));
        assert!(b3.inner(s.state(1, P).unwrap()).norm() < 1e-15);
        assert!(b3.inner(s.state(2, M).unwrap()).norm() < 1e-15);
        assert!(s.state(1, P).unwrap().inner(s.state(1, M).unwrap()).norm() < 1e-12);
        // <Rs|Sv> = 1/2
        assert!((s.state(1, P).unwrap().inner(s.state(2, P).unwrap()).norm() - 0.5).abs() < 1e-15);
        assert!(s.complementarity_deviation() < 1e-15);
    }

    #[test]
    fn product_scheme_reproduces_table_1() {
        let grid = product_scheme().inference_grid().unwrap();
        assert_eq!(grid, TABLE_1.map(|r| r.to_vec()).to_vec());
    }

    #[test]
    fn k_scheme_reproduces_table_1_for_every_k() {
        for k in K_GRID.into_iter().chain([-1.0, 0.1, 10.0]) {
            let grid = k_scheme(k).unwrap().inference_grid().unwrap();
            assert_eq!(grid, TABLE_1.map(|r| r.to_vec()).to_vec(), "k = {k}");
        }
    }

    #[test]
    fn three_one_reproduces_table_2() {
        let grid = three_one_scheme().inference_grid().unwrap();
        assert_eq!(grid, TABLE_2.map(|r| r.to_vec()).to_vec());
    }

    #[test]
    fn worked_inference_examples() {
        let product = product_scheme();
        let b3 = *product.detected_state(det("B3"));
        assert_eq!(product.infer_bit(&b3, 1).unwrap(), M);
        assert_eq!(product.infer_bit(&b3, 2).unwrap(), P);

        let three_one = three_one_scheme();
        let b3 = *three_one.detected_state(det("B3"));
        assert_eq!(three_one.infer_bit(&b3, 3).unwrap(), P);
        for t in [1, 2, 4] {
            assert_eq!(three_one.infer_bit(&b3, t).unwrap(), M);
        }

        let k1 = k_scheme(1.0).unwrap();
        assert_eq!(k1.infer_detection(det("B1"), 1).unwrap(), P);
    }

    #[test]
    fn classical_info_needed_only_for_mixed_columns() {
        let product = product_scheme();
        let flags: Vec<bool> = Detection::all()
            .map(|d| product.needs_classical_info(product.detected_state(d)).unwrap())
            .collect();
        assert_eq!(flags, [false, true, true, false, false, true, true, false]);

        let three_one = three_one_scheme();
        assert!(three_one.needs_classical_info(three_one.detected_state(det("B3"))).unwrap());
    }

    #[test]
    fn k_matrix_is_hermitian_involution() {
        for k in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let km = KMatrix::new(k);
            assert!(km.hermitian_deviation() < 1e-12);
            assert!(km.involution_deviation() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn k_equal_one_is_exactly_complementary() {
        let s = k_scheme(1.0).unwrap();
        for row in s.cross_overlaps() {
            for p in row {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
        assert!(k_scheme(0.5).unwrap().complementarity_deviation() > 0.01);
        assert!(k_scheme(2.0).unwrap().complementarity_deviation() > 0.01);
    }

    #[test]
    fn k_one_first_plus_state() {
        let s = k_scheme(1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expected = StateVector::from_real([r, r, 0.0, 0.0]).unwrap();
        assert!((s.state(1, P).unwrap().overlap(&expected) - 1.0).abs() < 1e-15);
        for (a, e) in s.state(1, P).unwrap().amps().iter().zip(expected.amps()) {
            assert!((a - e).norm() < 1e-15);
        }
    }

    #[test]
    fn k_pairs_have_the_same_expansion_in_the_primed_basis() {
        // the pair relations hold with B' in place of B
        for k in K_GRID {
            let s = k_scheme(k).unwrap();
            for (pair, substituted) in s.pairs().iter().zip(k_pairs(s.basis(BasisChoice::BPrime), k)) {
                assert!((pair.plus.overlap(&substituted.plus) - 1.0).abs() < 1e-12);
                assert!((pair.minus.overlap(&substituted.minus) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k_pairs_are_neither_identical_nor_orthogonal() {
        for k in K_GRID {
            let s = k_scheme(k).unwrap();
            let a = s.state(1, P).unwrap();
            let b = s.state(2, P).unwrap();
            let o = a.inner(b).norm();
            assert!(o > 1e-3 && o < 1.0 - 1e-3, "k = {k}: {o}");
        }
    }

    #[test]
    fn degenerate_k_rejected() {
        for k in [0.0, 1e-9, -1e-7, 1e7, f64::INFINITY, f64::NAN] {
            assert!(matches!(k_scheme(k), Err(SchemeError::DegenerateParameter { .. })));
            assert!(matches!(k_scheme_four_pairs(k), Err(SchemeError::DegenerateParameter { .. })));
        }
    }

    #[test]
    fn determinism_holds_for_all_constructors() {
        product_scheme().check_determinism().unwrap();
        three_one_scheme().check_determinism().unwrap();
        for k in K_GRID {
            k_scheme(k).unwrap().check_determinism().unwrap();
            k_scheme_four_pairs(k).unwrap().check_determinism().unwrap();
        }
    }

    #[test]
    fn four_pair_brute_force_orthogonality_scan() {
        // independent scan: every basis vector kills exactly one state of every pair
        for k in K_GRID {
            let s = k_scheme_four_pairs(k).unwrap();
            assert_eq!(s.pairs().len(), 4);
            for d in Detection::all() {
                let v = s.detected_state(d);
                for pair in s.pairs() {
                    let zero_plus = v.inner(&pair.plus).norm() < 1e-10;
                    let zero_minus = v.inner(&pair.minus).norm() < 1e-10;
                    assert!(zero_plus ^ zero_minus, "k = {k}, {d}, type {}", pair.type_id);
                }
            }
            // the extra pairs are new states, not copies of the first two
            for extra in &s.pairs()[2..] {
                for base in &s.pairs()[..2] {
                    for (x, y) in [(&extra.plus, &base.plus), (&extra.plus, &base.minus)] {
                        assert!(x.overlap(y) < 1.0 - 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn three_one_structure() {
        let s = three_one_scheme();
        let (herm, invol) = three_one_matrix_deviations();
        assert!(herm < 1e-12 && invol < 1e-12);
        assert!(s.detected_state(det("B3")).inner(s.detected_state(det("B'3"))).norm() < 1e-15);
        let overlaps = s.cross_overlaps();
        for (i, row) in overlaps.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                let expected = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert!((p - expected).abs() < 1e-15, "({i},{j}) = {p}");
            }
        }
        for bit in Bit::BOTH {
            let mut sum = HermitianMatrix4::zero();
            for t in 1..=4 {
                sum.add_scaled(&s.state(t, bit).unwrap().projector(), 1.0);
            }
            assert!(sum.max_abs_diff(&HermitianMatrix4::identity()) < 1e-10);
        }
        for pair in s.pairs() {
            assert!(pair.plus.inner(&pair.minus).norm() < 1e-15);
        }
    }

    #[test]
    fn ambiguous_and_unknown_type_errors() {
        let s = product_scheme();
        let rv = *s.detected_state(det("B1"));
        assert!(matches!(s.infer_bit(&rv, 9), Err(SchemeError::UnknownType { type_id: 9 })));
        // a state with support everywhere is orthogonal to neither member
        let ss = *s.detected_state(det("B'1"));
        let probe = StateVector::from_real([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(s.infer_bit(&probe, 1), Err(SchemeError::AmbiguousInference { .. })));
        assert!(s.infer_bit(&ss, 1).is_ok());
    }

    #[test]
    fn detection_labels() {
        assert_eq!(det("B'4"), Detection::new(BasisChoice::BPrime, 3));
        assert_eq!(det("B1").to_string(), "B1");
        assert!("B5".parse::<Detection>().is_err());
        assert!("C1".parse::<Detection>().is_err());
        assert_eq!(serde_json::to_string(&det("B'2")).unwrap(), "\"B'2\"");
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!("three-one".parse::<SchemeKind>().unwrap(), SchemeKind::ThreeOne);
        assert!(matches!("bb84".parse::<SchemeKind>(), Err(SchemeError::UnknownScheme(_))));
    }

    #[test]
    fn scheme_dump_layout() {
        let v: serde_json::Value = serde_json::to_value(k_scheme(1.0).unwrap()).unwrap();
        assert_eq!(v["name"], "k");
        assert_eq!(v["k"], 1.0);
        assert_eq!(v["pairs"][1]["type_id"], 2);
        assert_eq!(v["pairs"][0]["plus"].as_array().unwrap().len(), 4);
        assert_eq!(v["basis_b_prime"]["label"], "B'");
        let text = serde_json::to_string(&k_scheme(1.0).unwrap()).unwrap();
        let positions: Vec<usize> = ["\"name\"", "\"k\"", "\"pairs\"", "\"basis_b\"", "\"basis_b_prime\""]
            .iter()
            .map(|key| text.find(key).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
    }

    #[test]
    fn bit_strings() {
        assert_eq!(Bit::parse_string("+-\u{2212}+"), Some(vec![P, M, M, P]));
        assert_eq!(Bit::parse_string("+x"), None);
        assert_eq!(Bit::render(&[P, M]), "+-");
    }
}
