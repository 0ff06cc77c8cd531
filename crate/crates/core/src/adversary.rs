//! Intercept-resend eavesdropping and state discrimination.
//!
//! Evan measures every photon in some orthonormal basis and forwards a
//! replacement chosen from the outcome. A wrong click is a detection at
//! Bob's end that is impossible for the state Alice sent. Given Evan's
//! basis, the best replacement for each outcome is the minimum-eigenvalue
//! eigenvector of the posterior-weighted wrong-click operator, so the search
//! only has to range over Evan's measurement.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert4::{
    born_probabilities, HermitianMatrix4, Hilbert4Error, MeasurementBasis, StateVector, DIM,
};
use crate::nelder_mead;
use crate::rng::substream;
use crate::schemes::{Bit, Detection, Scheme, SchemeError, SchemeKind, Signal};

/// Number of real parameters of a 4x4 unitary (a Hermitian generator).
pub const UNITARY_PARAMS: usize = 16;

/// Outcome probability treated as exactly zero.
const IMPOSSIBLE_OUTCOME: f64 = 1e-14;

/// Default per-restart objective-evaluation cap.
pub const MAX_EVALUATIONS_PER_RESTART: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("{states} states but {weights} weights")]
    WeightMismatch { states: usize, weights: usize },
    #[error("weights must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidWeights { sum: f64 },
    #[error("not a density matrix: {0}")]
    NotDensity(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Hilbert(#[from] Hilbert4Error),
}

/// Evan's measurement plus one replacement state per outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterceptResendStrategy {
    pub measurement: MeasurementBasis,
    pub resend: [StateVector; DIM],
}

impl InterceptResendStrategy {
    /// Measure in `basis` and forward the detected basis vector.
    pub fn measure_and_forward(basis: MeasurementBasis) -> Self {
        let resend = *basis.vectors();
        Self {
            measurement: basis,
            resend,
        }
    }
}

/// A positive semidefinite, unit-trace operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: HermitianMatrix4,
}

impl DensityMatrix {
    pub fn new(matrix: HermitianMatrix4) -> Result<Self, AdversaryError> {
        let trace = matrix.trace();
        if (trace - 1.0).abs() > 1e-10 {
            return Err(AdversaryError::NotDensity(format!("trace {trace}")));
        }
        let lowest = matrix.eigen_decompose().values[0];
        if lowest < -1e-10 {
            return Err(AdversaryError::NotDensity(format!("eigenvalue {lowest}")));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &HermitianMatrix4 {
        &self.matrix
    }

    /// Number of eigenvalues above `1e-10`.
    pub fn rank(&self) -> usize {
        self.matrix
            .eigen_decompose()
            .values
            .iter()
            .filter(|&&l| l > 1e-10)
            .count()
    }
}

/// `sum_i w_i |psi_i><psi_i|`.
pub fn mixed_state(states: &[StateVector], weights: &[f64]) -> Result<DensityMatrix, AdversaryError> {
    if states.len() != weights.len() {
        return Err(AdversaryError::WeightMismatch {
            states: states.len(),
            weights: weights.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-12 {
        return Err(AdversaryError::InvalidWeights { sum });
    }
    let mut m = HermitianMatrix4::zero();
    for (s, w) in states.iter().zip(weights) {
        m.add_scaled(&s.projector(), *w);
    }
    DensityMatrix::new(m)
}

/// Equal-weight mixtures of the `+` states and of the `-` states.
pub fn sign_mixtures(scheme: &Scheme) -> (DensityMatrix, DensityMatrix) {
    let n = scheme.pairs().len();
    let weights = vec![1.0 / n as f64; n];
    let mix = |bit: Bit| {
        let states: Vec<StateVector> = scheme.pairs().iter().map(|p| *p.state(bit)).collect();
        mixed_state(&states, &weights).expect("uniform weights over unit states")
    };
    (mix(Bit::Plus), mix(Bit::Minus))
}

/// Best success probability for telling two equiprobable states apart:
/// `1/2 + |rho_plus - rho_minus|_1 / 4`.
pub fn helstrom_guess(rho_plus: &DensityMatrix, rho_minus: &DensityMatrix) -> f64 {
    let diff = rho_plus.matrix.sub(&rho_minus.matrix);
    (0.5 + 0.25 * diff.trace_norm()).clamp(0.5, 1.0)
}

/// Evan's odds of guessing each bit without knowing the pair type.
pub fn scheme_guess_odds(scheme: &Scheme) -> f64 {
    let (plus, minus) = sign_mixtures(scheme);
    helstrom_guess(&plus, &minus)
}

/// Closed-form reference values.
pub mod closed_form {
    /// Minimal intercept-resend error rate of the two-pair `k` scheme.
    pub fn two_pair_min_error(k: f64) -> f64 {
        0.5 - 0.5 * (1.0 + k.powi(4)).sqrt() / (1.0 + k * k)
    }

    /// Minimal intercept-resend error rate with four pairs.
    pub fn four_pair_min_error(k: f64) -> f64 {
        0.5 * (k * k).min(1.0) / (1.0 + k * k)
    }

    /// Minimal intercept-resend error rate of the three-one scheme.
    pub const THREE_ONE_MIN_ERROR: f64 = 1.0 / 6.0;

    /// Helstrom odds for the two-pair `k` scheme.
    pub fn two_pair_guess_odds(k: f64) -> f64 {
        0.5 + 0.5 / (1.0 + k * k).sqrt()
    }

    /// Chance that an attack with per-photon error rate `p` passes `checks` clean checks.
    pub fn undetected_probability(p: f64, checks: u32) -> f64 {
        (1.0 - p).powi(checks as i32)
    }
}

/// Closed-form minimal error rate for a scheme, where one is known.
///
/// The product scheme is the `k = 1` geometry written in product states.
pub fn reference_min_error(scheme: &Scheme) -> Option<f64> {
    match (scheme.kind(), scheme.k()) {
        (SchemeKind::Product, _) => Some(closed_form::two_pair_min_error(1.0)),
        (SchemeKind::K, Some(k)) => Some(closed_form::two_pair_min_error(k)),
        (SchemeKind::KFourPairs, Some(k)) => Some(closed_form::four_pair_min_error(k)),
        (SchemeKind::ThreeOne, _) => Some(closed_form::THREE_ONE_MIN_ERROR),
        _ => None,
    }
}

/// Closed-form Helstrom odds for a scheme, where one is known.
pub fn reference_guess_odds(scheme: &Scheme) -> Option<f64> {
    match (scheme.kind(), scheme.k()) {
        (SchemeKind::Product, _) => Some(closed_form::two_pair_guess_odds(1.0)),
        (SchemeKind::K, Some(k)) => Some(closed_form::two_pair_guess_odds(k)),
        (SchemeKind::ThreeOne, _) => Some(0.5),
        _ => None,
    }
}

/// Bob's wrong-click operator for one signal:
/// `(1/2) sum_bases sum_{d decodes wrongly} |d><d|`.
pub fn wrong_click_operator(scheme: &Scheme, type_id: usize, bit: Bit) -> Result<HermitianMatrix4, SchemeError> {
    let mut w = HermitianMatrix4::zero();
    for detection in Detection::all() {
        if scheme.infer_detection(detection, type_id)? != bit {
            w.add_scaled(&scheme.detected_state(detection).projector(), 0.5);
        }
    }
    Ok(w)
}

/// Probability that Bob, choosing each basis with probability 1/2, sees a
/// wrong click when Alice sent `(type_id, bit)` and `resend` arrives.
pub fn wrong_click_probability(
    scheme: &Scheme,
    sent: (usize, Bit),
    resend: &StateVector,
) -> Result<f64, SchemeError> {
    let w = wrong_click_operator(scheme, sent.0, sent.1)?;
    Ok(w.expectation(resend).clamp(0.0, 1.0))
}

/// The replacement Evan forwards after one measurement outcome.
#[derive(Clone, Debug)]
pub struct ResendChoice {
    pub state: StateVector,
    /// Minimal wrong-click probability conditioned on the outcome.
    pub conditional_error: f64,
    /// Unconditional probability of the outcome.
    pub outcome_probability: f64,
    /// `P(signal | outcome)` in `Scheme::signals` order.
    pub posteriors: Vec<f64>,
}

/// Precomputed signals and wrong-click operators of one scheme, uniform prior.
#[derive(Clone, Debug)]
pub struct AttackModel {
    signals: Vec<Signal>,
    operators: Vec<HermitianMatrix4>,
}

impl AttackModel {
    pub fn new(scheme: &Scheme) -> Result<Self, SchemeError> {
        let signals = scheme.signals();
        let operators = signals
            .iter()
            .map(|s| wrong_click_operator(scheme, s.type_id, s.bit))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { signals, operators })
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    fn prior(&self) -> f64 {
        1.0 / self.signals.len() as f64
    }

    /// `sum_s P(s) P(outcome|s) W_s`, i.e. the outcome probability times the
    /// posterior-weighted wrong-click operator.
    fn joint_operator(&self, vector: &StateVector) -> (HermitianMatrix4, Vec<f64>) {
        let prior = self.prior();
        let mut w = HermitianMatrix4::zero();
        let mut joint = Vec::with_capacity(self.signals.len());
        for (signal, op) in self.signals.iter().zip(&self.operators) {
            let p = prior * vector.overlap(&signal.state);
            w.add_scaled(op, p);
            joint.push(p);
        }
        (w, joint)
    }

    pub fn optimal_resend(&self, measurement: &MeasurementBasis, outcome: usize) -> ResendChoice {
        let (w, joint) = self.joint_operator(measurement.vector(outcome));
        let total: f64 = joint.iter().sum();
        if total <= IMPOSSIBLE_OUTCOME {
            // outcome never occurs: fall back to the prior
            let mut w = HermitianMatrix4::zero();
            for op in &self.operators {
                w.add_scaled(op, self.prior());
            }
            let (value, state) = w.min_eigenpair();
            return ResendChoice {
                state,
                conditional_error: value.max(0.0),
                outcome_probability: 0.0,
                posteriors: vec![self.prior(); self.signals.len()],
            };
        }
        let (value, state) = w.scale(1.0 / total).min_eigenpair();
        ResendChoice {
            state,
            conditional_error: value.clamp(0.0, 1.0),
            outcome_probability: total,
            posteriors: joint.iter().map(|p| p / total).collect(),
        }
    }

    /// Error rate of measuring in `measurement` with optimal replacements.
    pub fn measurement_error_rate(&self, measurement: &MeasurementBasis) -> f64 {
        self.optimal_error_for_vectors(measurement.vectors())
    }

    fn optimal_error_for_vectors(&self, vectors: &[StateVector; DIM]) -> f64 {
        vectors
            .iter()
            .map(|v| self.joint_operator(v).0.min_eigenpair().0.max(0.0))
            .sum()
    }

    pub fn optimal_strategy(&self, measurement: MeasurementBasis) -> InterceptResendStrategy {
        let resend = [0, 1, 2, 3].map(|m| self.optimal_resend(&measurement, m).state);
        InterceptResendStrategy { measurement, resend }
    }

    pub fn error_rate(&self, strategy: &InterceptResendStrategy) -> f64 {
        let prior = self.prior();
        let mut total = 0.0;
        for (signal, op) in self.signals.iter().zip(&self.operators) {
            let probs = born_probabilities(&strategy.measurement, &signal.state);
            for (p, resend) in probs.iter().zip(&strategy.resend) {
                total += prior * p * op.expectation(resend).clamp(0.0, 1.0);
            }
        }
        total.clamp(0.0, 1.0)
    }
}

/// Average wrong-click probability over Alice's uniformly chosen signals.
pub fn strategy_error_rate(scheme: &Scheme, strategy: &InterceptResendStrategy) -> Result<f64, SchemeError> {
    Ok(AttackModel::new(scheme)?.error_rate(strategy))
}

pub fn optimal_resend(
    scheme: &Scheme,
    measurement: &MeasurementBasis,
    outcome: usize,
) -> Result<ResendChoice, SchemeError> {
    Ok(AttackModel::new(scheme)?.optimal_resend(measurement, outcome))
}

/// Unitary `exp(i H)` with `H` Hermitian built from 16 reals: four diagonal
/// entries, then `(re, im)` of the six upper off-diagonal entries row by row.
pub fn unitary_from_params(params: &[f64]) -> [[Complex64; DIM]; DIM] {
    assert_eq!(params.len(), UNITARY_PARAMS);
    let mut h = [[Complex64::new(0.0, 0.0); DIM]; DIM];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = Complex64::new(params[i], 0.0);
    }
    let mut idx = DIM;
    for i in 0..DIM {
        for j in (i + 1)..DIM {
            let z = Complex64::new(params[idx], params[idx + 1]);
            h[i][j] = z;
            h[j][i] = z.conj();
            idx += 2;
        }
    }
    let eig = HermitianMatrix4::new(h)
        .expect("generator is Hermitian by construction")
        .eigen_decompose();
    let phases = eig.values.map(|l| Complex64::new(0.0, l).exp());
    let mut u = [[Complex64::new(0.0, 0.0); DIM]; DIM];
    for (i, row) in u.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = (0..DIM)
                .map(|m| eig.vectors[m].amps()[i] * phases[m] * eig.vectors[m].amps()[j].conj())
                .sum();
        }
    }
    u
}

/// Measurement basis formed by the columns of `exp(i H(params))`.
pub fn basis_from_params(label: &str, params: &[f64]) -> MeasurementBasis {
    MeasurementBasis::from_columns(label, &unitary_from_params(params)).expect("columns of a unitary")
}

fn vectors_from_params(params: &[f64]) -> [StateVector; DIM] {
    let u = unitary_from_params(params);
    [0, 1, 2, 3].map(|j| {
        StateVector::normalized([u[0][j], u[1][j], u[2][j], u[3][j]]).expect("unitary column")
    })
}

/// Random orthonormal measurement with random (not optimized) replacements.
pub fn random_strategy<R: Rng + ?Sized>(rng: &mut R) -> InterceptResendStrategy {
    let params: Vec<f64> = (0..UNITARY_PARAMS)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    let measurement = basis_from_params("E", &params);
    let resend = [(); DIM].map(|_| {
        let amps = [(); DIM].map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        StateVector::normalized(amps).unwrap_or(StateVector::canonical(0))
    });
    InterceptResendStrategy { measurement, resend }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Outer loop stops once a full simplex pass improves by less than this.
    pub tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            tolerance: 1e-6,
            max_evaluations: MAX_EVALUATIONS_PER_RESTART,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub p: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_strategy: InterceptResendStrategy,
    pub p_min: f64,
    pub restarts: usize,
    pub converged: bool,
    pub history: Vec<RestartRecord>,
}

struct RestartResult {
    params: Vec<f64>,
    record: RestartRecord,
}

fn run_restart(model: &AttackModel, config: &OptimizerConfig, master_seed: u64, restart: usize) -> RestartResult {
    let mut rng = substream(master_seed, restart as u64);
    let mut x: Vec<f64> = (0..UNITARY_PARAMS)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();

    let mut objective = |p: &[f64]| model.optimal_error_for_vectors(&vectors_from_params(p));
    let mut best = objective(&x);
    let mut evaluations = 1usize;
    let mut converged = true;
    let mut step = 0.5;
    loop {
        let remaining = config.max_evaluations.saturating_sub(evaluations);
        if remaining == 0 {
            converged = false;
            break;
        }
        let out = nelder_mead::minimize(
            &mut objective,
            &x,
            &nelder_mead::Settings {
                step,
                spread_tolerance: config.tolerance * 1e-3,
                max_evaluations: remaining,
            },
        );
        evaluations += out.evaluations;
        let improvement = best - out.value;
        if out.value < best {
            best = out.value;
            x = out.x;
        }
        if out.exhausted {
            converged = false;
            break;
        }
        if improvement < config.tolerance {
            break;
        }
        step = (step * 0.5).max(0.05);
    }

    RestartResult {
        params: x,
        record: RestartRecord {
            restart,
            p: best,
            evaluations,
            converged,
        },
    }
}

/// Searches Evan's measurement basis from `config.restarts` random starts,
/// each on its own substream of `master_seed`, with optimal replacements.
pub fn optimize_strategy(
    scheme: &Scheme,
    config: &OptimizerConfig,
    master_seed: u64,
) -> Result<OptimizationReport, AdversaryError> {
    if config.restarts == 0 {
        return Err(AdversaryError::InvalidConfig("restarts must be at least 1".into()));
    }
    if config.tolerance.is_nan() || config.tolerance <= 0.0 {
        return Err(AdversaryError::InvalidConfig("tolerance must be positive".into()));
    }
    if config.max_evaluations <= UNITARY_PARAMS + 1 {
        return Err(AdversaryError::InvalidConfig("evaluation cap below one simplex".into()));
    }
    let model = AttackModel::new(scheme)?;
    let results: Vec<RestartResult> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(&model, config, master_seed, r))
        .collect();

    // min by value, ties to the lowest restart index
    let best = results
        .iter()
        .min_by(|a, b| a.record.p.total_cmp(&b.record.p).then(a.record.restart.cmp(&b.record.restart)))
        .expect("at least one restart");
    let measurement = basis_from_params("E", &best.params);
    let best_strategy = model.optimal_strategy(measurement);
    let p_min = model.error_rate(&best_strategy);
    Ok(OptimizationReport {
        best_strategy,
        p_min,
        restarts: config.restarts,
        converged: results.iter().all(|r| r.record.converged),
        history: results.into_iter().map(|r| r.record).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert4::product_state_from_label;
    use crate::schemes::{k_scheme, k_scheme_four_pairs, product_scheme, three_one_scheme, BasisChoice};

    fn det(s: &str) -> Detection {
        s.parse().unwrap()
    }

    /// Independent oracle: enumerate Bob's basis choice and all detections
    /// using Born probabilities and the inference rule, no operators involved.
    fn brute_force_wrong_click(scheme: &Scheme, type_id: usize, bit: Bit, resend: &StateVector) -> f64 {
        let mut total = 0.0;
        for choice in BasisChoice::BOTH {
            let probs = born_probabilities(scheme.basis(choice), resend);
            for (index, p) in probs.iter().enumerate() {
                let d = Detection::new(choice, index);
                if scheme.infer_detection(d, type_id).unwrap() != bit {
                    total += 0.5 * p;
                }
            }
        }
        total
    }

    fn brute_force_error_rate(scheme: &Scheme, strategy: &InterceptResendStrategy) -> f64 {
        let signals = scheme.signals();
        let mut total = 0.0;
        for s in &signals {
            let probs = born_probabilities(&strategy.measurement, &s.state);
            for (m, p) in probs.iter().enumerate() {
                total += p * brute_force_wrong_click(scheme, s.type_id, s.bit, &strategy.resend[m]);
            }
        }
        total / signals.len() as f64
    }

    #[test]
    fn resending_the_sent_state_is_invisible() {
        for scheme in [product_scheme(), k_scheme(0.7).unwrap(), three_one_scheme()] {
            for s in scheme.signals() {
                let p = wrong_click_probability(&scheme, (s.type_id, s.bit), &s.state).unwrap();
                assert!(p < 1e-12);
            }
        }
    }

    #[test]
    fn product_scheme_lv_for_rs() {
        let scheme = product_scheme();
        let lv = product_state_from_label("Lv").unwrap();
        // B: Lv is B3, wrong for type 1 with certainty.
        // B': Lv = (Ss + Sa - As - Aa)/2, wrong on Sa and Aa only.
        let p = wrong_click_probability(&scheme, (1, Bit::Plus), &lv).unwrap();
        assert!((p - 0.75).abs() < 1e-12, "{p}");
        assert!((p - brute_force_wrong_click(&scheme, 1, Bit::Plus, &lv)).abs() < 1e-15);
    }

    #[test]
    fn wrong_click_matches_brute_force() {
        let scheme = k_scheme(1.0).unwrap();
        let b1 = *scheme.detected_state(det("B1"));
        let p = wrong_click_probability(&scheme, (1, Bit::Plus), &b1).unwrap();
        // |B1> never clicks wrong in B; in B' it lands on B'3, B'4 with 1/4 each
        assert!((p - 0.25).abs() < 1e-15);
        assert!((p - brute_force_wrong_click(&scheme, 1, Bit::Plus, &b1)).abs() < 1e-15);
    }

    #[test]
    fn naive_strategy_error_rate() {
        let scheme = k_scheme(1.0).unwrap();
        let naive = InterceptResendStrategy::measure_and_forward(scheme.basis(BasisChoice::B).clone());
        let rate = strategy_error_rate(&scheme, &naive).unwrap();
        let oracle = brute_force_error_rate(&scheme, &naive);
        assert!((rate - oracle).abs() < 1e-14);
        // frozen from the enumeration oracle: every forwarded B vector errs with 1/4
        assert!((oracle - 0.25).abs() < 1e-14, "{oracle}");
        assert!(rate > closed_form::two_pair_min_error(1.0));

        let model = AttackModel::new(&scheme).unwrap();
        let improved = model.optimal_strategy(naive.measurement.clone());
        assert!(model.error_rate(&improved) <= rate + 1e-15);
    }

    #[test]
    fn optimal_resend_posteriors_and_eigenpair() {
        let scheme = k_scheme(1.0).unwrap();
        let basis = scheme.basis(BasisChoice::B).clone();
        let model = AttackModel::new(&scheme).unwrap();
        for outcome in 0..4 {
            let choice = model.optimal_resend(&basis, outcome);
            assert!((choice.posteriors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // the eigenvalue is the conditional error of the returned state
            let conditional: f64 = model
                .signals()
                .iter()
                .zip(&choice.posteriors)
                .map(|(s, q)| q * brute_force_wrong_click(&scheme, s.type_id, s.bit, &choice.state))
                .sum();
            assert!((conditional - choice.conditional_error).abs() < 1e-12);
        }
        // B1 is compatible only with 1+ and 2+, each with overlap 1/2: posteriors (1/2, 0, 1/2, 0)
        let b1 = model.optimal_resend(&basis, 0);
        let expected = [0.5, 0.0, 0.5, 0.0];
        for (p, e) in b1.posteriors.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        // value frozen from the independent numpy prototype of the same operator
        assert!((b1.conditional_error - (2.0 - 2f64.sqrt()) / 4.0).abs() < 1e-12, "{}", b1.conditional_error);
    }

    /// Completes `first` to an orthonormal basis by Gram-Schmidt over the canonical vectors.
    fn complete_basis(first: StateVector) -> MeasurementBasis {
        let mut vectors = vec![first];
        for i in 0..DIM {
            let mut amps = *StateVector::canonical(i).amps();
            for v in &vectors {
                let c = v.inner(&StateVector::canonical(i));
                for (a, x) in amps.iter_mut().zip(v.amps()) {
                    *a -= c * x;
                }
            }
            if vectors.len() < DIM && amps.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-6 {
                vectors.push(StateVector::normalized(amps).unwrap());
            }
        }
        MeasurementBasis::new("E", [vectors[0], vectors[1], vectors[2], vectors[3]]).unwrap()
    }

    #[test]
    fn certain_posterior_resends_the_signal() {
        // single three-one pair (B1, B'1): outcome B1 can only come from |1+> = |B1>
        let scheme = three_one_scheme().restricted_to(&[1]).unwrap();
        let basis = scheme.basis(BasisChoice::B).clone();
        let model = AttackModel::new(&scheme).unwrap();
        let choice = model.optimal_resend(&basis, 0);
        assert!((choice.posteriors[0] - 1.0).abs() < 1e-12, "{:?}", choice.posteriors);
        assert!(choice.conditional_error.abs() < 1e-12);
        assert!((choice.state.overlap(basis.vector(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_outcome_falls_back_to_prior() {
        // the product signals span three dimensions; (1,-1,-1,-1)/2 is orthogonal to all four
        let scheme = product_scheme();
        let probe = StateVector::from_real([1.0, -1.0, -1.0, -1.0]).unwrap();
        for s in scheme.signals() {
            assert!(probe.overlap(&s.state) < 1e-30);
        }
        let basis = complete_basis(probe);
        let choice = AttackModel::new(&scheme).unwrap().optimal_resend(&basis, 0);
        assert_eq!(choice.outcome_probability, 0.0);
        assert_eq!(choice.posteriors, vec![0.25; 4]);
    }

    #[test]
    fn unitary_parameterization_is_unitary() {
        let mut rng = substream(1, 0);
        for _ in 0..20 {
            let params: Vec<f64> = (0..UNITARY_PARAMS).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let basis = basis_from_params("E", &params);
            assert!(basis.gram_deviation() < 1e-12);
        }
        let zero = basis_from_params("E", &[0.0; UNITARY_PARAMS]);
        assert!(zero.gram_deviation() < 1e-15);
        assert!((zero.vector(2).overlap(&StateVector::canonical(2)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn error_rates_stay_in_unit_interval() {
        let mut rng = substream(2, 0);
        for scheme in [product_scheme(), k_scheme(2.0).unwrap(), three_one_scheme()] {
            let model = AttackModel::new(&scheme).unwrap();
            for _ in 0..25 {
                let strategy = random_strategy(&mut rng);
                let rate = model.error_rate(&strategy);
                assert!((0.0..=1.0).contains(&rate));
                assert!((rate - brute_force_error_rate(&scheme, &strategy)).abs() < 1e-12);
                let improved = model.optimal_strategy(strategy.measurement.clone());
                assert!(model.error_rate(&improved) <= rate + 1e-12);
            }
        }
    }

    #[test]
    fn mixed_state_examples() {
        let rv = StateVector::canonical(0);
        let rho = mixed_state(&[rv], &[1.0]).unwrap();
        assert_eq!(rho.rank(), 1);
        assert!(matches!(
            mixed_state(&[rv], &[0.5, 0.5]),
            Err(AdversaryError::WeightMismatch { .. })
        ));
        assert!(matches!(mixed_state(&[rv, rv], &[0.7, 0.7]), Err(AdversaryError::InvalidWeights { .. })));

        let (plus, minus) = sign_mixtures(&three_one_scheme());
        let quarter = HermitianMatrix4::identity().scale(0.25);
        assert!(plus.matrix().max_abs_diff(&quarter) < 1e-12);
        assert!(minus.matrix().max_abs_diff(&quarter) < 1e-12);

        let (plus, _) = sign_mixtures(&k_scheme(1.0).unwrap());
        assert_eq!(plus.rank(), 2);
        assert!((plus.matrix().trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn helstrom_examples() {
        let a = mixed_state(&[StateVector::canonical(0)], &[1.0]).unwrap();
        let b = mixed_state(&[StateVector::canonical(3)], &[1.0]).unwrap();
        assert!((helstrom_guess(&a, &a) - 0.5).abs() < 1e-12);
        assert!((helstrom_guess(&a, &b) - 1.0).abs() < 1e-12);
        for k in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let odds = scheme_guess_odds(&k_scheme(k).unwrap());
            assert!((odds - closed_form::two_pair_guess_odds(k)).abs() < 1e-9, "k = {k}");
        }
        assert!((scheme_guess_odds(&three_one_scheme()) - 0.5).abs() < 1e-9);
        assert!((scheme_guess_odds(&product_scheme()) - closed_form::two_pair_guess_odds(1.0)).abs() < 1e-9);
    }

    #[test]
    fn trace_norm_of_k1_sign_difference() {
        let (plus, minus) = sign_mixtures(&k_scheme(1.0).unwrap());
        let diff = plus.matrix().sub(minus.matrix());
        assert!((diff.trace_norm() - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_values() {
        assert!((closed_form::two_pair_min_error(1.0) - (2.0 - 2f64.sqrt()) / 4.0).abs() < 1e-15);
        assert!((closed_form::two_pair_min_error(2.0) - (0.5 - 0.5 * 17f64.sqrt() / 5.0)).abs() < 1e-15);
        assert_eq!(closed_form::four_pair_min_error(1.0), 0.25);
        let survive = closed_form::undetected_probability(closed_form::two_pair_min_error(1.0), 100);
        assert!((survive / 1.3e-7 - 1.0).abs() < 0.05, "{survive}");
    }

    #[test]
    fn optimizer_rejects_bad_config() {
        let scheme = k_scheme(1.0).unwrap();
        let bad = OptimizerConfig { restarts: 0, ..Default::default() };
        assert!(matches!(optimize_strategy(&scheme, &bad, 1), Err(AdversaryError::InvalidConfig(_))));
        let bad = OptimizerConfig { tolerance: 0.0, ..Default::default() };
        assert!(optimize_strategy(&scheme, &bad, 1).is_err());
    }

    #[test]
    fn optimizer_reaches_two_pair_minimum_at_k1() {
        let scheme = k_scheme(1.0).unwrap();
        let config = OptimizerConfig { restarts: 4, ..Default::default() };
        let report = optimize_strategy(&scheme, &config, 11).unwrap();
        assert!((report.p_min - closed_form::two_pair_min_error(1.0)).abs() < 1e-4, "{}", report.p_min);
        let recomputed = strategy_error_rate(&scheme, &report.best_strategy).unwrap();
        assert!((recomputed - report.p_min).abs() < 1e-9);
        assert_eq!(report.history.len(), 4);

        // no random strategy beats it
        let mut rng = substream(99, 0);
        let model = AttackModel::new(&scheme).unwrap();
        for _ in 0..50 {
            assert!(report.p_min <= model.error_rate(&random_strategy(&mut rng)) + 1e-12);
        }
    }

    #[test]
    fn product_scheme_matches_k1_minimum() {
        let config = OptimizerConfig { restarts: 4, ..Default::default() };
        let report = optimize_strategy(&product_scheme(), &config, 8).unwrap();
        let reference = reference_min_error(&product_scheme()).unwrap();
        assert!((report.p_min - reference).abs() < 1e-4, "{}", report.p_min);
    }

    #[test]
    fn optimizer_is_reproducible() {
        let scheme = k_scheme(2.0).unwrap();
        let config = OptimizerConfig { restarts: 2, ..Default::default() };
        let a = optimize_strategy(&scheme, &config, 5).unwrap();
        let b = optimize_strategy(&scheme, &config, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn four_pair_and_three_one_minima() {
        let config = OptimizerConfig { restarts: 4, ..Default::default() };
        let four = optimize_strategy(&k_scheme_four_pairs(1.0).unwrap(), &config, 3).unwrap();
        assert!((four.p_min - 0.25).abs() < 1e-4, "{}", four.p_min);
        let three = optimize_strategy(&three_one_scheme(), &config, 3).unwrap();
        assert!((three.p_min - 1.0 / 6.0).abs() < 1e-4, "{}", three.p_min);
    }
}
