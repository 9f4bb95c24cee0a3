//! Gate-level constructions at small register size.
//!
//! Everything here is dense and meant for verification: each operator is
//! checked against the path-level simulator in [`crate::qva`]. Registers are
//! big-endian (qubit 0 is the most significant bit of a basis index) and a
//! pair of `|Q|`-dimensional registers `|c>|t>` sits at index `c * |Q| + t`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use ndarray::{linalg::kron, Array2};
use num_complex::Complex64;

use crate::code::{pack_bits, ConvCode, EncoderState};
use crate::error::{domain, Error, Result};
use crate::hmm::Hmm;
use crate::numfmt::fmt_g12;
use crate::qva::PathSpace;

/// Tolerance for unitarity and matrix comparisons.
pub const MATRIX_TOL: f64 = 1e-10;

/// Largest register (in qubits) for which a dense operator is materialized.
pub const DENSE_QUBIT_LIMIT: usize = 10;

/// Largest register (in qubits) for which [`chain_g_phi`] simulates the state.
pub const CHAIN_QUBIT_LIMIT: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Rotation by `theta` in the plane of basis states `a` and `b`, identity
/// elsewhere: `|a> -> cos|a> + sin|b>`, `|b> -> -sin|a> + cos|b>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelRotation {
    pub a: usize,
    pub b: usize,
    pub theta: f64,
}

impl TwoLevelRotation {
    pub fn new(a: usize, b: usize, theta: f64) -> Result<Self> {
        if a == b {
            return domain("a two-level rotation needs two distinct basis states");
        }
        Ok(TwoLevelRotation { a, b, theta })
    }

    /// `cos(theta)`, the `t` parameter of the rotation.
    pub fn t(&self) -> f64 {
        self.theta.cos()
    }

    pub fn matrix(&self, dim: usize) -> Result<DenseUnitary> {
        if self.a.max(self.b) >= dim {
            return Err(Error::Dimension { expected: self.a.max(self.b) + 1, actual: dim });
        }
        let mut m = Array2::eye(dim);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        m[[self.a, self.a]] = Complex64::new(c, 0.0);
        m[[self.b, self.b]] = Complex64::new(c, 0.0);
        m[[self.a, self.b]] = Complex64::new(-s, 0.0);
        m[[self.b, self.a]] = Complex64::new(s, 0.0);
        Ok(DenseUnitary(m))
    }
}

/// A square complex matrix expected to be unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseUnitary(Array2<Complex64>);

impl DenseUnitary {
    pub fn identity(dim: usize) -> Self {
        DenseUnitary(Array2::eye(dim))
    }

    /// Wraps `m`, rejecting non-square or non-unitary input.
    pub fn new(m: Array2<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension { expected: m.nrows(), actual: m.ncols() });
        }
        let u = DenseUnitary(m);
        let dev = u.unitarity_deviation();
        if dev > MATRIX_TOL {
            return domain(format!("matrix is not unitary (deviation {dev:e})"));
        }
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        self.0.column(j).to_vec()
    }

    /// `max |U^dagger U - I|` entrywise.
    pub fn unitarity_deviation(&self) -> f64 {
        let adj = self.0.t().mapv(|z| z.conj());
        let prod = adj.dot(&self.0);
        prod.indexed_iter().map(|((i, j), z)| (z - if i == j { ONE } else { ZERO }).norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// `self * rhs`, i.e. `rhs` acts first.
    pub fn compose(&self, rhs: &DenseUnitary) -> DenseUnitary {
        DenseUnitary(self.0.dot(&rhs.0))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.0.dot(&ndarray::ArrayView1::from(v)).to_vec()
    }

    /// `max |self - e^{i phi} other|` with the phase taken from the entry of
    /// largest modulus in `other`.
    pub fn global_phase_distance(&self, other: &DenseUnitary) -> f64 {
        if self.0.dim() != other.0.dim() {
            return f64::INFINITY;
        }
        let (idx, _) = other
            .0
            .indexed_iter()
            .fold(((0, 0), 0.0), |acc, (ij, z)| if z.norm() > acc.1 { (ij, z.norm()) } else { acc });
        let (a, b) = (self.0[idx], other.0[idx]);
        if a.norm() < 1e-12 {
            return f64::INFINITY;
        }
        let phase = a / b;
        let phase = phase / phase.norm();
        self.0.iter().zip(other.0.iter()).map(|(x, y)| (x - phase * y).norm()).fold(0.0, f64::max)
    }

    pub fn equals_up_to_global_phase(&self, other: &DenseUnitary, tol: f64) -> bool {
        self.global_phase_distance(other) <= tol
    }

    /// Row-major CSV, each entry written as a `re,im` pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.0.rows() {
            let cells: Vec<String> = row.iter().map(|z| format!("{},{}", fmt_g12(z.re), fmt_g12(z.im))).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Spherical-coordinate unit vector in `R^{K+1}` for angles `theta_1..theta_K`:
/// entry 0 is `prod cos(theta_i)` and entry `j` is
/// `sin(theta_j) prod_{i>j} cos(theta_i)`.
pub fn spherical_vector(thetas: &[f64]) -> Vec<f64> {
    let k = thetas.len();
    let mut v = vec![0.0; k + 1];
    let mut tail = 1.0;
    for j in (1..=k).rev() {
        v[j] = thetas[j - 1].sin() * tail;
        tail *= thetas[j - 1].cos();
    }
    v[0] = tail;
    v
}

/// Builds `R(theta_1)_{0,1} R(theta_2)_{0,2} ... R(theta_K)_{0,K}` whose
/// first column is `target`, recovering the angles by peeling the spherical
/// coordinates from the last component down.
pub fn u_psi(target: &[f64]) -> Result<(DenseUnitary, Vec<f64>)> {
    if target.len() < 2 {
        return domain("target must live in R^{K+1} with K >= 1");
    }
    let norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || (norm - 1.0).abs() > 1e-9 {
        return domain(format!("target must have unit norm, got {norm}"));
    }
    let k = target.len() - 1;
    // prefix[j] = |target[0..=j]|
    let mut prefix = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    for x in target {
        acc += x * x;
        prefix.push(acc.sqrt());
    }
    let mut thetas = vec![0.0; k];
    thetas[0] = target[1].atan2(target[0]);
    for j in 2..=k {
        thetas[j - 1] = target[j].atan2(prefix[j - 1]);
    }
    let dim = k + 1;
    let mut u = DenseUnitary::identity(dim);
    for (j, &theta) in thetas.iter().enumerate() {
        u = u.compose(&TwoLevelRotation::new(0, j + 1, theta)?.matrix(dim)?);
    }
    Ok((u, thetas))
}

/// Acts as `u` on the target when the control register holds
/// `control_value`, identity otherwise.
pub fn controlled_block(control_dim: usize, control_value: usize, u: &DenseUnitary) -> Result<DenseUnitary> {
    if control_value >= control_dim {
        return Err(Error::Dimension { expected: control_dim, actual: control_value + 1 });
    }
    let d = u.dim();
    let mut m = Array2::eye(control_dim * d);
    m.slice_mut(ndarray::s![control_value * d..(control_value + 1) * d, control_value * d..(control_value + 1) * d])
        .assign(u.matrix());
    Ok(DenseUnitary(m))
}

fn block_diagonal(blocks: &[Array2<Complex64>]) -> DenseUnitary {
    let d = blocks.first().map_or(0, Array2::nrows);
    let mut m = Array2::zeros((blocks.len() * d, blocks.len() * d));
    for (c, b) in blocks.iter().enumerate() {
        m.slice_mut(ndarray::s![c * d..(c + 1) * d, c * d..(c + 1) * d]).assign(b);
    }
    DenseUnitary(m)
}

fn check_dense(qubits: usize, limit: usize) -> Result<()> {
    if qubits > limit {
        return Err(Error::Size { what: "dense register", requested: qubits as u128, limit: limit as u128 });
    }
    Ok(())
}

/// Target-register block for control state `control` of a code: Hadamards on
/// the newest-block wires, the phase `e^{i omega d}` per successor (with `d`
/// the edge's error count against `y`), then the older register contents
/// copied in by controlled NOTs.
fn code_block(code: &ConvCode, control: u32, y: u32, omega: f64) -> Array2<Complex64> {
    let q = code.num_states();
    let k = code.k();
    let rest_bits = code.state_bits() - k;
    let rest_mask = (1usize << rest_bits) - 1;
    let shift = (control as usize) >> k;
    let scale = (1.0 / (1usize << k) as f64).sqrt();
    let phase: Vec<Complex64> = (0..1u32 << k)
        .map(|u| {
            let d = (code.step(EncoderState(control), u).output ^ y).count_ones();
            Complex64::from_polar(scale, omega * d as f64)
        })
        .collect();
    let mut m = Array2::zeros((q, q));
    for col in 0..q {
        let (h, rest) = (col >> rest_bits, col & rest_mask);
        for (h2, &ph) in phase.iter().enumerate() {
            let sign = if (h & h2).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            let row = (h2 << rest_bits) | (rest ^ shift);
            m[[row, col]] = ph * sign;
        }
    }
    m
}

fn check_block(code: &ConvCode, received_block: &[u8]) -> Result<u32> {
    if received_block.len() != code.n() || received_block.iter().any(|&b| b > 1) {
        return domain(format!("received block must be {} bits", code.n()));
    }
    Ok(pack_bits(received_block))
}

/// `V_y` for a code: block diagonal over the control state, each block
/// taking `|0>` to the phased equal superposition over the control's
/// successors.
pub fn v_block(code: &ConvCode, received_block: &[u8], omega: f64) -> Result<DenseUnitary> {
    let y = check_block(code, received_block)?;
    check_dense(2 * code.state_bits(), DENSE_QUBIT_LIMIT)?;
    let blocks: Vec<_> = (0..code.num_states() as u32).map(|c| code_block(code, c, y, omega)).collect();
    Ok(block_diagonal(&blocks))
}

/// `V_y` from canonical rotation blocks: for control `i` the block is the
/// successor phases applied after [`u_psi`] of the equal-magnitude
/// superposition over the successors.
pub fn generic_v_block<F>(num_states: usize, successors: F) -> Result<DenseUnitary>
where
    F: Fn(usize) -> Vec<(usize, f64)>,
{
    if num_states < 2 {
        return domain("need at least two states");
    }
    let mut blocks = Vec::with_capacity(num_states);
    for i in 0..num_states {
        let succ = successors(i);
        if succ.is_empty() {
            blocks.push(Array2::eye(num_states));
            continue;
        }
        let mut target = vec![0.0; num_states];
        let amp = 1.0 / (succ.len() as f64).sqrt();
        for &(j, _) in &succ {
            if j >= num_states {
                return Err(Error::Dimension { expected: num_states, actual: j + 1 });
            }
            target[j] = amp;
        }
        let (r, _) = u_psi(&target)?;
        let mut phases = Array2::eye(num_states);
        for &(j, phi) in &succ {
            phases[[j, j]] = Complex64::from_polar(1.0, phi);
        }
        blocks.push(phases.dot(r.matrix()));
    }
    Ok(block_diagonal(&blocks))
}

/// `V_y` for a general HMM with phase `omega * (-ln P_{i,j}(y))`.
pub fn hmm_v_block(hmm: &Hmm, y: usize, omega: f64) -> Result<DenseUnitary> {
    if y >= hmm.num_emissions() {
        return domain(format!("emission {y} not in the alphabet"));
    }
    let q = hmm.num_states();
    let qubits = 2 * (usize::BITS - (q - 1).leading_zeros()) as usize;
    check_dense(qubits, DENSE_QUBIT_LIMIT)?;
    generic_v_block(q, |i| hmm.successors(i, y).into_iter().map(|(j, w)| (j, -omega * w.ln())).collect())
}

/// Single-qubit gate `u` on `target` of an `n`-qubit register, conditioned
/// on each `(qubit, value)` control.
pub fn controlled_gate(
    num_qubits: usize,
    controls: &[(usize, bool)],
    target: usize,
    u: [[Complex64; 2]; 2],
) -> Result<DenseUnitary> {
    check_dense(num_qubits, DENSE_QUBIT_LIMIT)?;
    if target >= num_qubits || controls.iter().any(|&(c, _)| c >= num_qubits || c == target) {
        return domain("gate wires out of range or control equals target");
    }
    let dim = 1usize << num_qubits;
    let bit = |idx: usize, q: usize| (idx >> (num_qubits - 1 - q)) & 1 == 1;
    let mut m = Array2::zeros((dim, dim));
    for col in 0..dim {
        if !controls.iter().all(|&(c, v)| bit(col, c) == v) {
            m[[col, col]] = ONE;
            continue;
        }
        let tb = bit(col, target) as usize;
        let flip = 1usize << (num_qubits - 1 - target);
        let base = col & !flip;
        m[[base, col]] = u[0][tb];
        m[[base | flip, col]] = u[1][tb];
    }
    Ok(DenseUnitary(m))
}

fn hadamard() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn pauli_x() -> [[Complex64; 2]; 2] {
    [[ZERO, ONE], [ONE, ZERO]]
}

/// `diag(1, e^{i phi})`.
fn rz(phi: f64) -> [[Complex64; 2]; 2] {
    [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, phi)]]
}

/// `e^{i phi} I`.
fn phase_gate(phi: f64) -> [[Complex64; 2]; 2] {
    let p = Complex64::from_polar(1.0, phi);
    [[p, ZERO], [ZERO, p]]
}

fn compose_sequence(gates: &[DenseUnitary]) -> DenseUnitary {
    gates.iter().fold(DenseUnitary::identity(gates[0].dim()), |acc, g| g.compose(&acc))
}

/// Four-qubit circuit for `V_00` of the rate-1/2 memory-2 code.
///
/// Wires 0-1 hold the current state (newest register first), wires 2-3 the
/// successor. The Hadamard on wire 2 fans out over the new input bit; the
/// CNOT/`R_z(2 omega)`/CNOT sandwich under an open control on wire 0 marks
/// the two-error edges leaving `00` and `01`; a controlled `e^{i omega}` marks
/// the one-error edges leaving `10` and `11`; the final CNOT copies the old
/// newest bit into the successor's older cell.
pub fn v00_circuit(omega: f64) -> Result<DenseUnitary> {
    let g = |controls: &[(usize, bool)], target, u| controlled_gate(4, controls, target, u);
    Ok(compose_sequence(&[
        g(&[(0, false)], 2, hadamard())?,
        g(&[(0, true)], 2, hadamard())?,
        g(&[(1, true)], 2, pauli_x())?,
        g(&[(0, false)], 2, rz(2.0 * omega))?,
        g(&[(1, true)], 2, pauli_x())?,
        g(&[(0, true)], 2, phase_gate(omega))?,
        g(&[(0, true)], 3, pauli_x())?,
    ]))
}

/// The `V_00` gate sequence exactly as printed: open-control Hadamard on
/// wire 3 and `R_z(omega)`. Kept to document how it departs from the block
/// construction.
pub fn printed_v00_circuit(omega: f64) -> Result<DenseUnitary> {
    let g = |controls: &[(usize, bool)], target, u| controlled_gate(4, controls, target, u);
    Ok(compose_sequence(&[
        g(&[(0, false)], 3, hadamard())?,
        g(&[(0, true)], 2, hadamard())?,
        g(&[(1, true)], 3, pauli_x())?,
        g(&[(0, false)], 3, rz(omega))?,
        g(&[(1, true)], 3, pauli_x())?,
        g(&[(0, true)], 2, phase_gate(omega))?,
        g(&[(0, true)], 3, pauli_x())?,
    ]))
}

fn chain_layout(code: &ConvCode, received: &[u8], limit: usize) -> Result<(usize, Vec<u32>)> {
    let n = code.n();
    if received.is_empty() || !received.len().is_multiple_of(n) {
        return domain(format!("received word must be a positive multiple of {n} bits"));
    }
    let steps = received.len() / n;
    check_dense((steps + 1) * code.state_bits(), limit)?;
    let blocks = received.chunks(n).map(|b| check_block(code, b)).collect::<Result<Vec<_>>>()?;
    Ok((steps, blocks))
}

/// Runs the staircase `V_{y_1} ... V_{y_N}` over `N + 1` registers from
/// `|0>|0...0>` and returns the final register state. Register `r` occupies
/// the `r`-th most significant digit (base `|Q|`) of a basis index.
pub fn chain_g_phi(code: &ConvCode, received: &[u8], omega: f64) -> Result<Vec<Complex64>> {
    let (steps, ys) = chain_layout(code, received, CHAIN_QUBIT_LIMIT)?;
    let q = code.num_states();
    let dim = q.pow(steps as u32 + 1);
    let mut state = vec![ZERO; dim];
    state[0] = ONE;
    for (t, &y) in ys.iter().enumerate() {
        let blocks: Vec<_> = (0..q as u32).map(|c| code_block(code, c, y, omega)).collect();
        // control register t, target register t + 1
        let target_stride = q.pow((steps - t - 1) as u32);
        let control_stride = target_stride * q;
        let mut next = vec![ZERO; dim];
        for base in 0..dim {
            if !(base / target_stride).is_multiple_of(q) {
                continue;
            }
            let control = (base / control_stride) % q;
            let block = &blocks[control];
            for col in 0..q {
                let a = state[base + col * target_stride];
                if a == ZERO {
                    continue;
                }
                for row in 0..q {
                    next[base + row * target_stride] += block[[row, col]] * a;
                }
            }
        }
        state = next;
    }
    Ok(state)
}

/// Dense product of the embedded `V` blocks of [`chain_g_phi`].
pub fn chain_g_phi_operator(code: &ConvCode, received: &[u8], omega: f64) -> Result<DenseUnitary> {
    let (steps, _) = chain_layout(code, received, DENSE_QUBIT_LIMIT)?;
    let q = code.num_states();
    let n = code.n();
    let mut total = DenseUnitary::identity(q.pow(steps as u32 + 1));
    for t in 0..steps {
        let v = v_block(code, &received[t * n..(t + 1) * n], omega)?;
        let before = Array2::<Complex64>::eye(q.pow(t as u32));
        let after = Array2::<Complex64>::eye(q.pow((steps - t - 1) as u32));
        let embedded = kron(&kron(&before, v.matrix()), &after);
        total = DenseUnitary(embedded).compose(&total);
    }
    Ok(total)
}

/// Places a path-space state into the full `N + 1` register basis.
pub fn embed_path_state(ps: &PathSpace, amplitudes: &[Complex64], num_states: usize) -> Result<Vec<Complex64>> {
    if amplitudes.len() != ps.len() {
        return Err(Error::Dimension { expected: ps.len(), actual: amplitudes.len() });
    }
    let dim = num_states.pow(ps.steps() as u32 + 1);
    let mut out = vec![ZERO; dim];
    for (i, &a) in amplitudes.iter().enumerate() {
        let idx = ps.path(i).iter().fold(0usize, |acc, &s| acc * num_states + s);
        out[idx] += a;
    }
    Ok(out)
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Analytic gate budget for one pass of the lattice-building/marking stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct GateCount {
    /// One rotation per successor per controlled block: `N |Q| F`.
    pub rotations: u64,
    /// Gray-code subspace changes, `f^2 2^f` per block with `F = 2^f`.
    pub control_logic: u64,
    pub total: u64,
}

impl GateCount {
    /// `total / (N|Q|F (log2 F)^2 + N|Q|F)`.
    pub fn complexity_ratio(&self, num_states: usize, fanout: usize, steps: usize) -> f64 {
        let base = (steps * num_states * fanout) as f64;
        let lg = (fanout as f64).log2();
        self.total as f64 / (base * lg * lg + base)
    }
}

pub fn gate_counts(num_states: usize, fanout: usize, steps: usize) -> GateCount {
    let f = if fanout <= 1 { 0 } else { (usize::BITS - (fanout - 1).leading_zeros()) as u64 };
    let blocks = (steps * num_states) as u64;
    let rotations = blocks * fanout as u64;
    let control_logic = blocks * f * f * (1u64 << f) * u64::from(fanout > 1);
    GateCount { rotations, control_logic, total: rotations + control_logic }
}

pub fn code_gate_counts(code: &ConvCode, steps: usize) -> GateCount {
    gate_counts(code.num_states(), code.fanout(), steps)
}

pub fn hmm_gate_counts(hmm: &Hmm, steps: usize) -> GateCount {
    gate_counts(hmm.num_states(), hmm.fanout().fanout, steps)
}
