//! Dense statevector simulator for parameterized circuits.
//!
//! Qubit ordering is little-endian: qubit `q` is bit `q` of the amplitude index, so
//! qubit 0 is the least significant bit. Expectations are exact; there is no shot
//! sampling anywhere.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the simulator accepts (2^20 amplitudes, 16 MiB).
pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
    Cz,
    H,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// For `Cnot`, `targets[0]` is the control.
    pub targets: Vec<usize>,
    pub slot: Option<usize>,
}

impl Gate {
    pub fn rx(q: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Rx, q, slot)
    }

    pub fn ry(q: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Ry, q, slot)
    }

    pub fn rz(q: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Rz, q, slot)
    }

    pub fn rotation(kind: GateKind, q: usize, slot: usize) -> Self {
        Self {
            kind,
            targets: vec![q],
            slot: Some(slot),
        }
    }

    pub fn h(q: usize) -> Self {
        Self {
            kind: GateKind::H,
            targets: vec![q],
            slot: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            targets: vec![control, target],
            slot: None,
        }
    }

    pub fn cz(a: usize, b: usize) -> Self {
        Self {
            kind: GateKind::Cz,
            targets: vec![a, b],
            slot: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotRole {
    Input,
    Trainable,
}

/// An ordered gate list over `n` qubits whose rotation angles are read from slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSpec {
    n: usize,
    gates: Vec<Gate>,
    slot_roles: Vec<SlotRole>,
    /// For each slot, the indices of the gates it drives.
    occurrences: Vec<Vec<usize>>,
}

impl CircuitSpec {
    pub fn new(n: usize, gates: Vec<Gate>, slot_roles: Vec<SlotRole>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidCircuit("a circuit needs at least one qubit".into()));
        }
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        let mut occurrences = vec![Vec::new(); slot_roles.len()];
        for (i, gate) in gates.iter().enumerate() {
            if gate.targets.len() != gate.kind.arity() {
                return Err(Error::InvalidCircuit(format!(
                    "gate {i} ({:?}) needs {} targets, has {}",
                    gate.kind,
                    gate.kind.arity(),
                    gate.targets.len()
                )));
            }
            if let Some(&q) = gate.targets.iter().find(|&&q| q >= n) {
                return Err(Error::InvalidCircuit(format!("gate {i} targets qubit {q} of {n}")));
            }
            if gate.targets.len() == 2 && gate.targets[0] == gate.targets[1] {
                return Err(Error::InvalidCircuit(format!(
                    "gate {i} repeats qubit {}",
                    gate.targets[0]
                )));
            }
            match (gate.kind.is_rotation(), gate.slot) {
                (true, Some(s)) if s < slot_roles.len() => occurrences[s].push(i),
                (true, Some(s)) => {
                    return Err(Error::InvalidCircuit(format!("gate {i} reads missing slot {s}")));
                }
                (true, None) => {
                    return Err(Error::InvalidCircuit(format!("rotation gate {i} has no angle slot")));
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidCircuit(format!("fixed gate {i} carries an angle slot")));
                }
                (false, None) => {}
            }
        }
        Ok(Self {
            n,
            gates,
            slot_roles,
            occurrences,
        })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn angle_slots(&self) -> usize {
        self.slot_roles.len()
    }

    pub fn slot_roles(&self) -> &[SlotRole] {
        &self.slot_roles
    }

    pub fn slots_with_role(&self, role: SlotRole) -> Vec<usize> {
        (0..self.slot_roles.len())
            .filter(|&s| self.slot_roles[s] == role)
            .collect()
    }

    /// Gate indices driven by `slot`.
    pub fn occurrences(&self, slot: usize) -> &[usize] {
        &self.occurrences[slot]
    }

    fn check_angles(&self, angles: &[f64]) -> Result<()> {
        Error::check_len(self.angle_slots(), angles.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let j = i | bit;
                let (x, y) = (self.amps[i], self.amps[j]);
                self.amps[i] = m[0][0] * x + m[0][1] * y;
                self.amps[j] = m[1][0] * x + m[1][1] * y;
            }
        }
    }

    /// Applies one gate. `angle` is ignored for fixed gates.
    ///
    /// `RX(t) = exp(-i t X / 2)`, `RY(t) = exp(-i t Y / 2)`, `RZ(t) = exp(-i t Z / 2)`.
    pub fn apply(&mut self, kind: GateKind, targets: &[usize], angle: f64) {
        let (s, c) = (angle / 2.0).sin_cos();
        let re = |x: f64| Complex64::new(x, 0.0);
        let zero = re(0.0);
        match kind {
            GateKind::Rx => {
                let mis = Complex64::new(0.0, -s);
                self.apply_1q(targets[0], [[re(c), mis], [mis, re(c)]]);
            }
            GateKind::Ry => self.apply_1q(targets[0], [[re(c), re(-s)], [re(s), re(c)]]),
            GateKind::Rz => {
                self.apply_1q(
                    targets[0],
                    [[Complex64::new(c, -s), zero], [zero, Complex64::new(c, s)]],
                );
            }
            GateKind::H => {
                let h = re(FRAC_1_SQRT_2);
                self.apply_1q(targets[0], [[h, h], [h, -h]]);
            }
            GateKind::Cnot => {
                let (cb, tb) = (1usize << targets[0], 1usize << targets[1]);
                for i in 0..self.amps.len() {
                    if i & cb != 0 && i & tb == 0 {
                        self.amps.swap(i, i | tb);
                    }
                }
            }
            GateKind::Cz => {
                let mask = (1usize << targets[0]) | (1usize << targets[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
        }
    }

    /// Marginal `<Z_q>` for a single qubit.
    pub fn z_expectation(&self, q: usize) -> f64 {
        let bit = 1usize << q;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum()
    }
}

/// A product of Pauli-Z operators on `support`, scaled by `coeff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTerm {
    pub coeff: f64,
    pub support: Vec<usize>,
}

/// Weighted sum of Pauli-Z strings; diagonal in the computational basis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observable {
    pub terms: Vec<ZTerm>,
}

impl Observable {
    pub fn new(terms: Vec<ZTerm>) -> Result<Self> {
        if terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::InvalidArgument("observable coefficients must be finite".into()));
        }
        Ok(Self { terms })
    }

    pub fn z(q: usize) -> Self {
        Self::zs(&[q])
    }

    pub fn zs(support: &[usize]) -> Self {
        Self {
            terms: vec![ZTerm {
                coeff: 1.0,
                support: support.to_vec(),
            }],
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        for t in &self.terms {
            if let Some(&qubit) = t.support.iter().find(|&&q| q >= n) {
                return Err(Error::SupportOutOfRange { qubit, n });
            }
        }
        Ok(())
    }
}

/// Exact `<psi| O |psi>` for a Z-diagonal observable.
pub fn expectation(state: &StateVector, obs: &Observable) -> Result<f64> {
    obs.check(state.n)?;
    Ok(expectation_unchecked(state, obs))
}

fn expectation_unchecked(state: &StateVector, obs: &Observable) -> f64 {
    obs.terms
        .iter()
        .map(|t| {
            let mask = t.support.iter().fold(0usize, |m, &q| m | (1 << q));
            let parity_sum: f64 = state
                .amps
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    if (i & mask).count_ones() % 2 == 0 {
                        a.norm_sqr()
                    } else {
                        -a.norm_sqr()
                    }
                })
                .sum();
            t.coeff * parity_sum
        })
        .sum()
}

/// Runs `spec` on `|0...0>`, optionally offsetting the angle of one gate by `shift.1`.
fn evolve(spec: &CircuitSpec, angles: &[f64], shift: Option<(usize, f64)>) -> StateVector {
    let mut state = StateVector::zero(spec.n).expect("qubit count checked at construction");
    for (i, gate) in spec.gates.iter().enumerate() {
        let mut angle = gate.slot.map_or(0.0, |s| angles[s]);
        if let Some((g, delta)) = shift {
            if g == i {
                angle += delta;
            }
        }
        state.apply(gate.kind, &gate.targets, angle);
    }
    state
}

pub fn run_circuit(spec: &CircuitSpec, angles: &[f64]) -> Result<StateVector> {
    spec.check_angles(angles)?;
    Ok(evolve(spec, angles, None))
}

fn check_grad_slots(spec: &CircuitSpec, slots: &[usize]) -> Result<()> {
    for &s in slots {
        if s >= spec.angle_slots() || spec.occurrences[s].is_empty() {
            return Err(Error::SlotNotRotational(s));
        }
    }
    Ok(())
}

/// Parameter-shift derivative of `<obs>` with respect to each slot in `slots`.
///
/// A slot that drives several gates gets the sum of the per-gate shift terms.
pub fn param_shift_grad(spec: &CircuitSpec, angles: &[f64], obs: &Observable, slots: &[usize]) -> Result<Vec<f64>> {
    let jac = param_shift_jacobian(spec, angles, std::slice::from_ref(obs), slots)?;
    Ok(jac.into_iter().map(|row| row[0]).collect())
}

/// Parameter-shift Jacobian: entry `[i][j]` is `d<obs_j> / d angles[slots[i]]`.
///
/// Every shifted circuit is simulated once and read out against all observables.
pub fn param_shift_jacobian(
    spec: &CircuitSpec,
    angles: &[f64],
    observables: &[Observable],
    slots: &[usize],
) -> Result<Vec<Vec<f64>>> {
    spec.check_angles(angles)?;
    for obs in observables {
        obs.check(spec.n)?;
    }
    check_grad_slots(spec, slots)?;
    Ok(slots
        .iter()
        .map(|&s| {
            let mut row = vec![0.0; observables.len()];
            for &g in &spec.occurrences[s] {
                let plus = evolve(spec, angles, Some((g, FRAC_PI_2)));
                let minus = evolve(spec, angles, Some((g, -FRAC_PI_2)));
                for (r, obs) in row.iter_mut().zip(observables) {
                    *r += 0.5 * (expectation_unchecked(&plus, obs) - expectation_unchecked(&minus, obs));
                }
            }
            row
        })
        .collect())
}

/// Single-qubit Z readouts and their parameter-shift Jacobian over every rotation slot.
///
/// Returns `(values, jac)` with `values[j] = <Z_{qubits[j]}>` and
/// `jac[s][j] = d values[j] / d angles[s]` (zero rows for slots that drive no gate).
pub(crate) fn z_readout_with_jacobian(
    spec: &CircuitSpec,
    angles: &[f64],
    qubits: &[usize],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let read = |st: &StateVector| qubits.iter().map(|&q| st.z_expectation(q)).collect::<Vec<_>>();
    let values = read(&evolve(spec, angles, None));
    let jac = (0..spec.angle_slots())
        .map(|s| {
            let mut row = vec![0.0; qubits.len()];
            for &g in &spec.occurrences[s] {
                let plus = read(&evolve(spec, angles, Some((g, FRAC_PI_2))));
                let minus = read(&evolve(spec, angles, Some((g, -FRAC_PI_2))));
                for (r, (p, m)) in row.iter_mut().zip(plus.iter().zip(&minus)) {
                    *r += 0.5 * (p - m);
                }
            }
            row
        })
        .collect();
    (values, jac)
}
