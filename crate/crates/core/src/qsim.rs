//! Dense statevector simulation for small registers.
//!
//! Basis index bit `q` holds qubit `q`, so a label such as `|10⟩` lists qubit 0
//! first. Gates act by updating amplitude pairs in place; no 2^n × 2^n matrix is
//! ever formed.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

/// Where a rotation gate takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    Fixed(f64),
    /// Index into the feature vector (angle embedding).
    Feature(usize),
    /// Index into the trainable parameter vector.
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<AngleSource>,
}

impl Gate {
    pub fn rx(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Rx, target, angle)
    }

    pub fn ry(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Ry, target, angle)
    }

    pub fn rz(target: usize, angle: AngleSource) -> Self {
        Self::rotation(GateKind::Rz, target, angle)
    }

    pub fn rotation(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        debug_assert!(kind != GateKind::Cnot);
        Self {
            kind,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self.angle, Some(AngleSource::Param(_)))
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        check_qubit(self.target, n_qubits)?;
        match (self.kind, self.control, self.angle) {
            (GateKind::Cnot, Some(c), None) => {
                check_qubit(c, n_qubits)?;
                if c == self.target {
                    return Err(Error::ControlIsTarget(c));
                }
                Ok(())
            }
            (GateKind::Cnot, _, _) => Err(Error::InvalidCircuit(
                "CNOT needs a control and no angle".into(),
            )),
            (_, None, Some(_)) => Ok(()),
            _ => Err(Error::InvalidCircuit(
                "rotation gates carry an angle and no control".into(),
            )),
        }
    }
}

fn check_qubit(index: usize, n_qubits: usize) -> Result<()> {
    if index >= n_qubits {
        Err(Error::QubitOutOfRange { index, n_qubits })
    } else {
        Ok(())
    }
}

/// The quantum state |ψ⟩ of an n-qubit register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0⟩^⊗n.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(n_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Computational basis state with the given index.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(n_qubits)?;
        if index >= s.amplitudes.len() {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range"
            )));
        }
        s.amplitudes[0] = Complex64::new(0.0, 0.0);
        s.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(n_qubits));
        }
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_qubits,
                actual: amplitudes.len(),
            });
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate`, using `angle` (radians) for rotation kinds.
    pub fn apply_gate(&mut self, gate: &Gate, angle: f64) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate, angle);
        Ok(())
    }

    fn apply_unchecked(&mut self, gate: &Gate, angle: f64) {
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        match gate.kind {
            GateKind::Rx => {
                let m_is = Complex64::new(0.0, -s);
                self.for_pairs(gate.target, |a0, a1| {
                    let (x0, x1) = (*a0, *a1);
                    *a0 = x0 * c + x1 * m_is;
                    *a1 = x0 * m_is + x1 * c;
                });
            }
            GateKind::Ry => self.for_pairs(gate.target, |a0, a1| {
                let (x0, x1) = (*a0, *a1);
                *a0 = x0 * c - x1 * s;
                *a1 = x0 * s + x1 * c;
            }),
            GateKind::Rz => {
                let p0 = Complex64::new(c, -s);
                let p1 = Complex64::new(c, s);
                self.for_pairs(gate.target, |a0, a1| {
                    *a0 *= p0;
                    *a1 *= p1;
                });
            }
            GateKind::Cnot => {
                let control = 1usize << gate.control.expect("validated CNOT");
                let target = 1usize << gate.target;
                for i in 0..self.amplitudes.len() {
                    if i & control != 0 && i & target == 0 {
                        self.amplitudes.swap(i, i | target);
                    }
                }
            }
        }
    }

    fn for_pairs(&mut self, qubit: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a0, a1);
            }
        }
    }

    /// ⟨ψ|P_q|ψ⟩ for a single-qubit Pauli on `qubit`.
    pub fn expectation(&self, qubit: usize, axis: Pauli) -> Result<f64> {
        check_qubit(qubit, self.n_qubits)?;
        Ok(self.expectation_unchecked(qubit, axis))
    }

    fn expectation_unchecked(&self, qubit: usize, axis: Pauli) -> f64 {
        let stride = 1usize << qubit;
        let mut acc = 0.0;
        for block in self.amplitudes.chunks(stride << 1) {
            let (lo, hi) = block.split_at(stride);
            for (a0, a1) in lo.iter().zip(hi) {
                acc += match axis {
                    Pauli::Z => a0.norm_sqr() - a1.norm_sqr(),
                    Pauli::X => 2.0 * (a0.conj() * a1).re,
                    Pauli::Y => 2.0 * (a0.conj() * a1).im,
                };
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub qubit: usize,
    pub axis: Pauli,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CircuitSpecRaw {
    n_qubits: usize,
    layers: Vec<Vec<Gate>>,
    observables: Vec<Observable>,
}

/// A layered gate program U_L⋯U_1 with the observables read out at the end.
///
/// Immutable once built; construction checks qubit ranges and that the
/// trainable parameter indices cover exactly `0..n_params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitSpecRaw", into = "CircuitSpecRaw")]
pub struct CircuitSpec {
    n_qubits: usize,
    layers: Vec<Vec<Gate>>,
    observables: Vec<Observable>,
    n_params: usize,
    n_features: usize,
}

impl TryFrom<CircuitSpecRaw> for CircuitSpec {
    type Error = Error;

    fn try_from(raw: CircuitSpecRaw) -> Result<Self> {
        CircuitSpec::new(raw.n_qubits, raw.layers, raw.observables)
    }
}

impl From<CircuitSpec> for CircuitSpecRaw {
    fn from(spec: CircuitSpec) -> Self {
        Self {
            n_qubits: spec.n_qubits,
            layers: spec.layers,
            observables: spec.observables,
        }
    }
}

impl CircuitSpec {
    pub fn new(
        n_qubits: usize,
        layers: Vec<Vec<Gate>>,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidCircuit(
                "register needs at least one qubit".into(),
            ));
        }
        if n_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(n_qubits));
        }
        let mut params = BTreeSet::new();
        let mut n_features = 0;
        for gate in layers.iter().flatten() {
            gate.validate(n_qubits)?;
            match gate.angle {
                Some(AngleSource::Param(k)) => {
                    params.insert(k);
                }
                Some(AngleSource::Feature(k)) => n_features = n_features.max(k + 1),
                _ => {}
            }
        }
        for obs in &observables {
            check_qubit(obs.qubit, n_qubits)?;
        }
        let n_params = params.len();
        if params
            .iter()
            .next_back()
            .is_some_and(|&max| max + 1 != n_params)
        {
            return Err(Error::InvalidCircuit(
                "trainable parameter indices must form a contiguous 0..P range".into(),
            ));
        }
        Ok(Self {
            n_qubits,
            layers,
            observables,
            n_params,
            n_features,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> &[Vec<Gate>] {
        &self.layers
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    /// Number of trainable parameters P.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Minimum feature-vector length the circuit reads.
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.layers.iter().flatten()
    }

    fn resolve_angles(&self, params: &[f64], features: &[f64]) -> Result<Vec<f64>> {
        if params.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                actual: params.len(),
            });
        }
        self.gates()
            .map(|g| match g.angle {
                None => Ok(0.0),
                Some(AngleSource::Fixed(v)) => Ok(v),
                Some(AngleSource::Feature(k)) => {
                    features.get(k).copied().ok_or(Error::UnresolvedAngle {
                        kind: "feature",
                        index: k,
                        available: features.len(),
                    })
                }
                Some(AngleSource::Param(k)) => Ok(params[k]),
            })
            .collect()
    }

    fn measure(&self, state: &StateVector) -> Vec<f64> {
        self.observables
            .iter()
            .map(|o| state.expectation_unchecked(o.qubit, o.axis))
            .collect()
    }
}

/// Runs the circuit from |0⟩^⊗n and returns the final state together with
/// ⟨O⟩ for every declared observable.
pub fn run_circuit(
    spec: &CircuitSpec,
    params: &[f64],
    features: &[f64],
) -> Result<(StateVector, Vec<f64>)> {
    let angles = spec.resolve_angles(params, features)?;
    let mut state = StateVector::zero(spec.n_qubits)?;
    for (gate, &angle) in spec.gates().zip(&angles) {
        state.apply_unchecked(gate, angle);
    }
    let values = spec.measure(&state);
    Ok((state, values))
}

/// Output of [`parameter_shift_jacobian`]: observable values and
/// `jacobian[observable][param]`.
#[derive(Debug, Clone)]
pub struct ShiftJacobian {
    pub values: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
}

/// Parameter-shift derivatives of every observable with respect to every
/// trainable parameter.
///
/// Each occurrence of a parameter is shifted by ±π/2 on its own and the
/// half-differences are summed, so parameters shared between gates are
/// handled correctly. The state before each trainable gate is reused for both
/// shifted runs.
pub fn parameter_shift_jacobian(
    spec: &CircuitSpec,
    params: &[f64],
    features: &[f64],
) -> Result<ShiftJacobian> {
    let angles = spec.resolve_angles(params, features)?;
    let gates: Vec<&Gate> = spec.gates().collect();
    let n_obs = spec.observables.len();
    let mut jacobian = vec![vec![0.0; spec.n_params]; n_obs];

    let mut prefix = StateVector::zero(spec.n_qubits)?;
    for (idx, gate) in gates.iter().enumerate() {
        if let Some(AngleSource::Param(k)) = gate.angle {
            let mut shifted = [0.0f64; 2].map(|_| Vec::new());
            for (slot, shift) in [FRAC_PI_2, -FRAC_PI_2].into_iter().enumerate() {
                let mut s = prefix.clone();
                s.apply_unchecked(gate, angles[idx] + shift);
                for (g, &a) in gates[idx + 1..].iter().zip(&angles[idx + 1..]) {
                    s.apply_unchecked(g, a);
                }
                shifted[slot] = spec.measure(&s);
            }
            for (row, (plus, minus)) in jacobian.iter_mut().zip(shifted[0].iter().zip(&shifted[1]))
            {
                row[k] += 0.5 * (plus - minus);
            }
        }
        prefix.apply_unchecked(gate, angles[idx]);
    }
    Ok(ShiftJacobian {
        values: spec.measure(&prefix),
        jacobian,
    })
}

/// Parameter-shift gradient of one observable.
pub fn parameter_shift_grad(
    spec: &CircuitSpec,
    params: &[f64],
    features: &[f64],
    observable: usize,
) -> Result<Vec<f64>> {
    if observable >= spec.observables.len() {
        return Err(Error::InvalidArgument(format!(
            "observable {observable} not declared (circuit has {})",
            spec.observables.len()
        )));
    }
    let mut jac = parameter_shift_jacobian(spec, params, features)?;
    Ok(jac.jacobian.swap_remove(observable))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plus_state() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_amplitudes(1, vec![c(h, 0.0), c(h, 0.0)]).unwrap()
    }

    fn z0() -> Vec<Observable> {
        vec![Observable {
            qubit: 0,
            axis: Pauli::Z,
        }]
    }

    #[test]
    fn rx_zero_is_identity() {
        let mut s = plus_state();
        let before = s.clone();
        s.apply_gate(&Gate::rx(0, AngleSource::Fixed(0.0)), 0.0)
            .unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn rx_pi_on_zero() {
        // e^{-iπX/2} = cos(π/2) I − i sin(π/2) X = −iX, so |0⟩ ↦ −i|1⟩.
        let mut s = StateVector::zero(1).unwrap();
        s.apply_gate(&Gate::rx(0, AngleSource::Fixed(PI)), PI)
            .unwrap();
        let a = s.amplitudes();
        assert!((a[0] - c(0.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn cnot_truth_table() {
        // |10⟩: qubit 0 set, index 1.
        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply_gate(&Gate::cnot(0, 1), 0.0).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11).unwrap());
        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply_gate(&Gate::cnot(0, 1), 0.0).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b10).unwrap());
    }

    #[test]
    fn gate_errors() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            s.apply_gate(&Gate::rx(2, AngleSource::Fixed(0.1)), 0.1),
            Err(Error::QubitOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            s.apply_gate(&Gate::cnot(1, 1), 0.0),
            Err(Error::ControlIsTarget(1))
        ));
        assert!(StateVector::zero(13).is_err());
    }

    #[test]
    fn expectation_examples() {
        let one = StateVector::basis(1, 1).unwrap();
        assert_eq!(one.expectation(0, Pauli::Z).unwrap(), -1.0);
        let plus = plus_state();
        assert!(plus.expectation(0, Pauli::Z).unwrap().abs() < 1e-15);
        assert!((plus.expectation(0, Pauli::X).unwrap() - 1.0).abs() < 1e-15);
        assert!(plus.expectation(0, Pauli::Y).unwrap().abs() < 1e-15);
        assert!(plus.expectation(1, Pauli::Z).is_err());
    }

    #[test]
    fn y_expectation_of_ry_and_rx() {
        // RX(θ)|0⟩ has ⟨Y⟩ = −sin θ; RY(θ)|0⟩ has ⟨X⟩ = sin θ.
        let theta = 0.7;
        let mut s = StateVector::zero(1).unwrap();
        s.apply_gate(&Gate::rx(0, AngleSource::Fixed(theta)), theta)
            .unwrap();
        assert!((s.expectation(0, Pauli::Y).unwrap() + theta.sin()).abs() < 1e-14);
        let mut s = StateVector::zero(1).unwrap();
        s.apply_gate(&Gate::ry(0, AngleSource::Fixed(theta)), theta)
            .unwrap();
        assert!((s.expectation(0, Pauli::X).unwrap() - theta.sin()).abs() < 1e-14);
    }

    #[test]
    fn empty_circuit_reads_plus_one() {
        let spec = CircuitSpec::new(1, vec![], z0()).unwrap();
        let (_, v) = run_circuit(&spec, &[], &[]).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn ry_quarter_turn_reads_zero() {
        let spec =
            CircuitSpec::new(1, vec![vec![Gate::ry(0, AngleSource::Param(0))]], z0()).unwrap();
        let (_, v) = run_circuit(&spec, &[PI / 2.0], &[]).unwrap();
        assert!(v[0].abs() < 1e-12);
    }

    #[test]
    fn angle_embedding_reads_cos() {
        let spec =
            CircuitSpec::new(1, vec![vec![Gate::rx(0, AngleSource::Feature(0))]], z0()).unwrap();
        for x in [0.3, 1.1, 2.0] {
            let (_, v) = run_circuit(&spec, &[], &[x]).unwrap();
            assert!((v[0] - f64::cos(x)).abs() < 1e-12);
        }
        assert!(matches!(
            run_circuit(&spec, &[], &[]),
            Err(Error::UnresolvedAngle {
                kind: "feature",
                ..
            })
        ));
    }

    #[test]
    fn circuit_validation() {
        let gap = vec![vec![
            Gate::ry(0, AngleSource::Param(0)),
            Gate::ry(0, AngleSource::Param(2)),
        ]];
        assert!(CircuitSpec::new(1, gap, z0()).is_err());
        let bad_obs = vec![Observable {
            qubit: 3,
            axis: Pauli::Z,
        }];
        assert!(CircuitSpec::new(2, vec![], bad_obs).is_err());
        assert!(CircuitSpec::new(2, vec![vec![Gate::cnot(0, 0)]], vec![]).is_err());
    }

    #[test]
    fn shift_gradient_of_cos() {
        let spec =
            CircuitSpec::new(1, vec![vec![Gate::ry(0, AngleSource::Param(0))]], z0()).unwrap();
        let g0 = parameter_shift_grad(&spec, &[0.0], &[], 0).unwrap();
        assert!(g0[0].abs() < 1e-15);
        let g1 = parameter_shift_grad(&spec, &[PI / 2.0], &[], 0).unwrap();
        assert!((g1[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn shared_parameter_sums_occurrences() {
        // RY(θ) RY(θ) = RY(2θ): d/dθ cos 2θ = −2 sin 2θ.
        let spec = CircuitSpec::new(
            1,
            vec![vec![
                Gate::ry(0, AngleSource::Param(0)),
                Gate::ry(0, AngleSource::Param(0)),
            ]],
            z0(),
        )
        .unwrap();
        let theta = 0.4;
        let g = parameter_shift_grad(&spec, &[theta], &[], 0).unwrap();
        assert!((g[0] + 2.0 * (2.0 * theta).sin()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_json_revalidates() {
        let spec = CircuitSpec::new(2, vec![vec![Gate::cnot(0, 1)]], z0()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: CircuitSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let broken = json.replace("\"n_qubits\":2", "\"n_qubits\":1");
        assert!(serde_json::from_str::<CircuitSpec>(&broken).is_err());
    }
}
