//! Path-space simulation of the quantum Viterbi algorithm.
//!
//! The register is never expanded to `|Q|^N` dimensions. Phase marking and
//! diffusion act as the identity outside the span of admissible paths, so the
//! simulator keeps one complex amplitude per admissible path (`L = F^N` of
//! them) and applies:
//!
//! - the lattice-building step: the equal superposition over paths,
//! - phase marking: path `i` picks up `e^{i omega w_i}` where `w_i` is its
//!   error count (codes) or `-ln P(path)` (general HMMs),
//! - diffusion: `a_i <- (2/L) sum_j a_j - a_i`, i.e. `2|s><s| - I`.
//!
//! One marking plus one diffusion is an iteration.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{pack_bits, unpack_bits, ConvCode, EncoderState};
use crate::error::{domain, Error, Result};
use crate::hmm::Hmm;
use crate::viterbi::{for_each_path, HmmTrellis, Trellis};

/// Largest path space the simulator will enumerate (16M amplitudes).
pub const PATH_SPACE_LIMIT: u128 = 1 << 24;

/// Tolerance on the norm after unitary steps.
pub const NORM_TOL: f64 = 1e-10;

/// Default grid step for omega sweeps.
pub const DEFAULT_GRID: f64 = 0.005;

const GOLDEN_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum PathWeights {
    /// Total channel errors per path; phases are `omega * errors`.
    Errors(Vec<u32>),
    /// `-ln` of the path probability.
    NegLogProb(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
enum PathSource {
    Code {
        code: ConvCode,
        initial: EncoderState,
    },
    /// Row-major `(N + 1)`-long state sequences.
    Explicit {
        states: Vec<usize>,
    },
}

/// The admissible paths for a fixed emission sequence, with their weights.
///
/// For codes, path `i` is the input sequence whose blocks, first block most
/// significant, read as the integer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpace {
    steps: usize,
    source: PathSource,
    weights: PathWeights,
}

fn size_guard(fanout: usize, steps: usize) -> Result<()> {
    let requested = (fanout as u128).saturating_pow(steps as u32);
    if requested > PATH_SPACE_LIMIT {
        return Err(Error::Size { what: "path space", requested, limit: PATH_SPACE_LIMIT });
    }
    Ok(())
}

impl PathSpace {
    /// Enumerates all `2^(kN)` input sequences of a code against `received`.
    pub fn from_code(code: &ConvCode, received: &[u8], initial: EncoderState) -> Result<Self> {
        let n = code.n();
        if received.is_empty() || !received.len().is_multiple_of(n) {
            return domain(format!("received word of {} bits is not a positive multiple of n = {n}", received.len()));
        }
        if received.iter().any(|&b| b > 1) {
            return domain("received word contains a non-binary symbol");
        }
        if initial.0 as usize >= code.num_states() {
            return domain(format!("initial state {} out of range", initial.0));
        }
        let steps = received.len() / n;
        let fanout = code.fanout();
        size_guard(fanout, steps)?;

        // breadth-first expansion keeps index = inputs read as an integer
        let mut frontier: Vec<(u32, u32)> = vec![(initial.0, 0)];
        for block in received.chunks(n) {
            let y = pack_bits(block);
            let mut next = Vec::with_capacity(frontier.len() * fanout);
            for &(state, errs) in &frontier {
                for u in 0..fanout as u32 {
                    let t = code.step(EncoderState(state), u);
                    next.push((t.to.0, errs + (t.output ^ y).count_ones()));
                }
            }
            frontier = next;
        }
        Ok(PathSpace {
            steps,
            source: PathSource::Code { code: code.clone(), initial },
            weights: PathWeights::Errors(frontier.into_iter().map(|(_, e)| e).collect()),
        })
    }

    /// Enumerates admissible paths of a general HMM in lexicographic order.
    pub fn from_hmm(hmm: &Hmm, emissions: &[usize], initial: usize) -> Result<Self> {
        let trellis = HmmTrellis::new(hmm, emissions)?;
        if initial >= hmm.num_states() {
            return domain(format!("initial state {initial} out of range"));
        }
        size_guard(trellis.max_fanout(), trellis.steps())?;
        let mut states = Vec::new();
        let mut weights = Vec::new();
        for_each_path(&trellis, initial, |path, _, cost| {
            states.extend_from_slice(path);
            weights.push(cost);
        });
        if weights.is_empty() {
            return Err(Error::NoPath);
        }
        Ok(PathSpace {
            steps: emissions.len(),
            source: PathSource::Explicit { states },
            weights: PathWeights::NegLogProb(weights),
        })
    }

    pub fn len(&self) -> usize {
        match &self.weights {
            PathWeights::Errors(e) => e.len(),
            PathWeights::NegLogProb(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn weights(&self) -> &PathWeights {
        &self.weights
    }

    /// Per-path error counts, when built from a code.
    pub fn errors(&self) -> Option<&[u32]> {
        match &self.weights {
            PathWeights::Errors(e) => Some(e),
            PathWeights::NegLogProb(_) => None,
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        match &self.weights {
            PathWeights::Errors(e) => e[idx] as f64,
            PathWeights::NegLogProb(w) => w[idx],
        }
    }

    /// Multiset of error counts, the exponents of the marking diagonal.
    pub fn error_multiset(&self) -> Option<BTreeMap<u32, u64>> {
        let mut hist = BTreeMap::new();
        for &e in self.errors()? {
            *hist.entry(e).or_insert(0) += 1;
        }
        Some(hist)
    }

    /// State sequence of path `idx`, initial state included.
    pub fn path(&self, idx: usize) -> Vec<usize> {
        match &self.source {
            PathSource::Code { code, initial } => {
                let mut state = *initial;
                let mut out = vec![state.0 as usize];
                for u in self.code_inputs(code, idx) {
                    state = code.step(state, u).to;
                    out.push(state.0 as usize);
                }
                out
            }
            PathSource::Explicit { states } => {
                let w = self.steps + 1;
                states[idx * w..(idx + 1) * w].to_vec()
            }
        }
    }

    fn code_inputs(&self, code: &ConvCode, idx: usize) -> Vec<u32> {
        let k = code.k();
        let mask = (1usize << k) - 1;
        (0..self.steps).rev().map(|t| ((idx >> (t * k)) & mask) as u32).collect()
    }

    /// Message bits of path `idx` for code path spaces.
    pub fn message(&self, idx: usize) -> Option<Vec<u8>> {
        match &self.source {
            PathSource::Code { code, .. } => {
                Some(self.code_inputs(code, idx).into_iter().flat_map(|u| unpack_bits(u, code.k())).collect())
            }
            PathSource::Explicit { .. } => None,
        }
    }

    /// Index of the message `bits` for code path spaces.
    pub fn index_of_message(&self, bits: &[u8]) -> Option<usize> {
        match &self.source {
            PathSource::Code { code, .. } if bits.len() == self.steps * code.k() => Some(pack_bits(bits) as usize),
            _ => None,
        }
    }

    /// Indices of every path of minimum weight, ascending.
    pub fn optimal_indices(&self) -> Vec<usize> {
        match &self.weights {
            PathWeights::Errors(e) => {
                let min = e.iter().copied().min().unwrap_or(0);
                (0..e.len()).filter(|&i| e[i] == min).collect()
            }
            PathWeights::NegLogProb(w) => {
                let min = w.iter().copied().fold(f64::INFINITY, f64::min);
                let slack = crate::viterbi::LOG_METRIC_SLACK;
                (0..w.len()).filter(|&i| w[i] <= min + slack).collect()
            }
        }
    }

    /// Lowest-index path of minimum weight; the classical Viterbi choice.
    pub fn optimal_index(&self) -> usize {
        self.optimal_indices()[0]
    }

    /// Diagonal of the marking operator, `e^{i omega w_i}`.
    pub fn phases(&self, omega: f64) -> Vec<Complex64> {
        (0..self.len()).map(|i| Complex64::from_polar(1.0, omega * self.weight(i))).collect()
    }
}

/// One complex amplitude per admissible path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStatevector(Vec<Complex64>);

impl PathStatevector {
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Self {
        PathStatevector(amps)
    }

    /// Equal superposition over `len` paths.
    pub fn uniform(len: usize) -> Self {
        let a = 1.0 / (len as f64).sqrt();
        PathStatevector(vec![Complex64::new(a, 0.0); len])
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.0.iter().map(Complex64::norm_sqr).collect()
    }

    pub fn probability(&self, idx: usize) -> f64 {
        self.0[idx].norm_sqr()
    }

    /// Most probable index, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, a) in self.0.iter().enumerate() {
            if a.norm_sqr() > self.0[best].norm_sqr() {
                best = i;
            }
        }
        best
    }

    pub fn apply_phases(&mut self, phases: &[Complex64]) {
        debug_assert_eq!(phases.len(), self.0.len());
        for (a, g) in self.0.iter_mut().zip(phases) {
            *a *= g;
        }
    }

    /// `2|s><s| - I` on the admissible subspace.
    pub fn apply_diffusion(&mut self) {
        let l = self.0.len() as f64;
        let mean2 = self.0.iter().sum::<Complex64>() * (2.0 / l);
        for a in &mut self.0 {
            *a = mean2 - *a;
        }
    }
}

/// Phase unit and iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QvaParams {
    pub omega: f64,
    pub iterations: usize,
}

impl QvaParams {
    pub fn new(omega: f64, iterations: usize) -> Result<Self> {
        if !(0.0..=PI).contains(&omega) {
            return domain(format!("omega {omega} outside [0, pi]"));
        }
        if iterations == 0 {
            return domain("at least one iteration is required");
        }
        Ok(QvaParams { omega, iterations })
    }
}

pub fn h_superposition(ps: &PathSpace) -> Result<PathStatevector> {
    if ps.is_empty() {
        return domain("path space is empty");
    }
    Ok(PathStatevector::uniform(ps.len()))
}

pub fn g_phi(ps: &PathSpace, v: &PathStatevector, omega: f64) -> Result<PathStatevector> {
    if ps.len() != v.len() {
        return Err(Error::Dimension { expected: ps.len(), actual: v.len() });
    }
    let mut out = v.clone();
    out.apply_phases(&ps.phases(omega));
    Ok(out)
}

pub fn g_diffusion(v: &PathStatevector) -> PathStatevector {
    let mut out = v.clone();
    out.apply_diffusion();
    out
}

/// Amplification from the uniform state with an arbitrary marking diagonal.
pub fn amplify(phases: &[Complex64], iterations: usize) -> PathStatevector {
    let mut v = PathStatevector::uniform(phases.len());
    for _ in 0..iterations {
        v.apply_phases(phases);
        v.apply_diffusion();
    }
    v
}

#[derive(Debug, Clone)]
pub struct QvaRun {
    pub state: PathStatevector,
    /// Index of the classical optimum (lowest index among ties).
    pub target_index: usize,
    /// Probability of measuring the classical optimum.
    pub prob_top: f64,
    /// Most probable index after amplification.
    pub top_index: usize,
}

pub fn run_qva(ps: &PathSpace, params: &QvaParams) -> Result<QvaRun> {
    h_superposition(ps)?;
    let state = amplify(&ps.phases(params.omega), params.iterations);
    let target_index = ps.optimal_index();
    Ok(QvaRun { prob_top: state.probability(target_index), top_index: state.argmax(), target_index, state })
}

/// Closed-form probability of `target` after one marking and one diffusion:
/// `|g_t (L - 2) - 2 sum_{i != t} g_i|^2 / L^3`.
pub fn single_iteration_prob(g: &[Complex64], target: usize) -> Result<f64> {
    let l = g.len();
    if l < 2 {
        return domain("need at least two paths");
    }
    if target >= l {
        return domain(format!("target {target} out of range 0..{l}"));
    }
    if g.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return domain("marking entries must have unit modulus");
    }
    let rest: Complex64 = g.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, z)| z).sum();
    let lf = l as f64;
    Ok((g[target] * (lf - 2.0) - rest * 2.0).norm_sqr() / lf.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: f64,
    pub prob_top: f64,
    pub top_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub omega_star: f64,
    pub prob_at_star: f64,
    pub iterations: usize,
    pub curve: Vec<SweepPoint>,
}

fn grid_points(grid: f64) -> Result<Vec<f64>> {
    if !(grid > 0.0 && grid < PI) {
        return domain(format!("grid step {grid} must lie in (0, pi)"));
    }
    let count = (PI / grid).ceil() as usize;
    Ok((1..count).map(|i| i as f64 * grid).filter(|&w| w < PI).collect())
}

/// `(omega*, value at omega*, grid curve)`.
pub type OmegaSearch = (f64, f64, Vec<(f64, f64)>);

/// Maximizes `objective` over omega in (0, pi): grid search then golden
/// section around the best grid point.
pub fn maximize_over_omega<F>(grid: f64, objective: F) -> Result<OmegaSearch>
where
    F: Fn(f64) -> f64 + Sync,
{
    let points = grid_points(grid)?;
    let curve: Vec<(f64, f64)> = points.par_iter().map(|&w| (w, objective(w))).collect();
    let &(best_w, best_p) = curve
        .iter()
        .fold(None, |acc: Option<&(f64, f64)>, p| match acc {
            Some(a) if a.1 >= p.1 => Some(a),
            _ => Some(p),
        })
        .ok_or_else(|| Error::Domain("empty omega grid".into()))?;

    let (mut lo, mut hi) = ((best_w - grid).max(1e-9), (best_w + grid).min(PI - 1e-9));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while hi - lo > GOLDEN_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        }
    }
    let refined = (lo + hi) / 2.0;
    let refined_p = objective(refined);
    let (w, p) = if refined_p >= best_p { (refined, refined_p) } else { (best_w, best_p) };
    Ok((w, p, curve))
}

/// Searches the phase unit maximizing the probability of the classical optimum.
pub fn sweep_omega(ps: &PathSpace, iterations: usize, grid: f64) -> Result<Sweep> {
    if iterations == 0 {
        return domain("at least one iteration is required");
    }
    h_superposition(ps)?;
    let target = ps.optimal_index();
    let (omega_star, prob_at_star, raw) =
        maximize_over_omega(grid, |w| amplify(&ps.phases(w), iterations).probability(target))?;
    let curve = raw
        .par_iter()
        .map(|&(w, p)| SweepPoint { omega: w, prob_top: p, top_index: amplify(&ps.phases(w), iterations).argmax() })
        .collect();
    Ok(Sweep { omega_star, prob_at_star, iterations, curve })
}

/// Draws `shots` samples of path indices.
pub fn sample_indices(v: &PathStatevector, rng: &mut ChaCha8Rng, shots: usize) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(v.probabilities()).map_err(|e| Error::Domain(format!("cannot sample state: {e}")))?;
    Ok((0..shots).map(|_| dist.sample(rng)).collect())
}

/// Histogram of `shots` measurements; deterministic per seed.
pub fn measure(v: &PathStatevector, seed: u64, shots: usize) -> Result<BTreeMap<usize, u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = BTreeMap::new();
    for i in sample_indices(v, &mut rng, shots)? {
        *hist.entry(i).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Most frequent index; ties go to the smallest index.
pub fn mode_of(samples: &[usize]) -> Option<(usize, u64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, u64)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let count = (j - i) as u64;
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((sorted[i], count));
        }
        i = j;
    }
    best
}

/// One entry of an adaptive schedule: paths with at most `errors` channel
/// errors are searched with `omega`, `iterations` and `trials` shots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorClass {
    pub errors: u32,
    pub omega: f64,
    pub iterations: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    pub message: Vec<u8>,
    pub path_index: usize,
    /// Position in the schedule of the accepting class.
    pub accepted_class: usize,
    pub class_errors: u32,
    pub mode_count: u64,
    pub trials_used: usize,
}

/// Runs each class of `schedule` in order, taking the mode of its trials and
/// accepting it when the decoded path lies within the class's error budget
/// of the received word.
pub fn adaptive_decode(
    code: &ConvCode,
    received: &[u8],
    schedule: &[ErrorClass],
    seed: u64,
) -> Result<AdaptiveOutcome> {
    if received.is_empty() {
        return domain("received word is empty");
    }
    if schedule.is_empty() {
        return domain("adaptive schedule is empty");
    }
    let ps = PathSpace::from_code(code, received, EncoderState(0))?;
    adaptive_decode_space(&ps, schedule, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn adaptive_decode_space(ps: &PathSpace, schedule: &[ErrorClass], rng: &mut ChaCha8Rng) -> Result<AdaptiveOutcome> {
    let errors = ps.errors().ok_or_else(|| Error::Domain("adaptive decoding needs a code path space".into()))?;
    let mut trials_used = 0;
    for (pos, class) in schedule.iter().enumerate() {
        if class.trials == 0 {
            return domain("each error class needs at least one trial");
        }
        let run = run_qva(ps, &QvaParams::new(class.omega, class.iterations)?)?;
        let samples = sample_indices(&run.state, rng, class.trials)?;
        trials_used += class.trials;
        let (mode, count) = mode_of(&samples).expect("trials > 0");
        if errors[mode] <= class.errors {
            return Ok(AdaptiveOutcome {
                message: ps.message(mode).expect("code path space"),
                path_index: mode,
                accepted_class: pos,
                class_errors: class.errors,
                mode_count: count,
                trials_used,
            });
        }
    }
    Err(Error::DecodeFailure { classes: schedule.len() })
}

/// `ceil(pi/4 * sqrt(L))`.
pub fn grover_iterations(num_paths: usize) -> usize {
    (FRAC_PI_4 * (num_paths as f64).sqrt()).ceil().max(1.0) as usize
}

/// Weight-`errors` error patterns over `bits` positions in lexicographic
/// order, at most `cap` of them.
pub fn error_patterns(bits: usize, errors: usize, cap: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if errors > bits {
        return out;
    }
    let mut pos: Vec<usize> = (0..errors).collect();
    loop {
        let mut word = vec![0u8; bits];
        for &p in &pos {
            word[p] = 1;
        }
        out.push(word);
        if out.len() >= cap {
            return out;
        }
        let Some(i) = (0..errors).rev().find(|&i| pos[i] < bits - errors + i) else {
            return out;
        };
        pos[i] += 1;
        for j in i + 1..errors {
            pos[j] = pos[j - 1] + 1;
        }
    }
}

/// Near-optimal phase unit for the class of received words carrying
/// `errors` channel errors. The objective is the mean probability mass on
/// minimum-weight paths over representative error patterns applied to the
/// all-zero codeword (the code is linear, so any codeword behaves alike).
pub fn class_omega(code: &ConvCode, steps: usize, errors: usize, iterations: usize, grid: f64) -> Result<f64> {
    let patterns = error_patterns(steps * code.n(), errors, 64);
    if patterns.is_empty() {
        return domain(format!("no patterns with {errors} errors over {steps} steps"));
    }
    let spaces = patterns.iter().map(|p| PathSpace::from_code(code, p, EncoderState(0))).collect::<Result<Vec<_>>>()?;
    let optimal: Vec<Vec<usize>> = spaces.iter().map(PathSpace::optimal_indices).collect();
    let (w, _, _) = maximize_over_omega(grid, |w| {
        spaces
            .iter()
            .zip(&optimal)
            .map(|(ps, opt)| {
                let v = amplify(&ps.phases(w), iterations);
                opt.iter().map(|&i| v.probability(i)).sum::<f64>()
            })
            .sum::<f64>()
            / spaces.len() as f64
    })?;
    Ok(w)
}

/// Schedule over error classes `0..=max_errors`, ordered by the binomial
/// probability of each class under crossover `epsilon` (most probable first).
pub fn error_class_schedule(
    code: &ConvCode,
    steps: usize,
    epsilon: f64,
    max_errors: usize,
    iterations: usize,
    trials: usize,
    grid: f64,
) -> Result<Vec<ErrorClass>> {
    let bits = steps * code.n();
    let mut classes = (0..=max_errors.min(bits))
        .map(|e| {
            let omega = class_omega(code, steps, e, iterations, grid)?;
            Ok(ErrorClass { errors: e as u32, omega, iterations, trials })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_prob = |e: u32| {
        let e = e as f64;
        let b = bits as f64;
        ln_binomial(bits, e as usize) + e * epsilon.max(1e-300).ln() + (b - e) * (1.0 - epsilon).ln()
    };
    classes.sort_by(|a, b| log_prob(b.errors).total_cmp(&log_prob(a.errors)).then(a.errors.cmp(&b.errors)));
    Ok(classes)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viterbi::{path_metric_multiset, CodeTrellis};
    use proptest::prelude::*;
    use rand::Rng;

    fn zero_space(steps: usize) -> PathSpace {
        PathSpace::from_code(&ConvCode::paper_code(), &vec![0; 2 * steps], EncoderState(0)).unwrap()
    }

    fn ps4_errors() -> Vec<u32> {
        zero_space(4).errors().unwrap().to_vec()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn path_space_basics() {
        let ps = zero_space(1);
        assert_eq!(ps.errors().unwrap(), &[0, 2]);
        let ps4 = zero_space(4);
        let expected: BTreeMap<u32, u64> = [(0, 1), (2, 1), (3, 3), (4, 5), (5, 4), (6, 1), (7, 1)].into();
        assert_eq!(ps4.error_multiset().unwrap(), expected);
        assert_eq!(ps4.len(), 16);
        assert_eq!(ps4.message(0b1000).unwrap(), vec![1, 0, 0, 0]);
        assert_eq!(ps4.path(0b1000), vec![0, 2, 1, 0, 0]);
        assert_eq!(ps4.index_of_message(&[0, 1, 1, 0]), Some(6));
        let rx = [1, 0, 1, 1];
        assert_eq!(PathSpace::from_code(&ConvCode::paper_code(), &rx, EncoderState(0)).unwrap().len(), 4);
        assert!(PathSpace::from_code(&ConvCode::paper_code(), &[], EncoderState(0)).is_err());
        assert!(PathSpace::from_code(&ConvCode::paper_code(), &[0; 3], EncoderState(0)).is_err());
        assert!(matches!(
            PathSpace::from_code(&ConvCode::paper_code(), &[0; 60], EncoderState(0)),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn path_errors_match_trellis_multiset() {
        let code = ConvCode::paper_code();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let steps = rng.gen_range(1..=7);
            let rx: Vec<u8> = (0..2 * steps).map(|_| rng.gen_range(0..2)).collect();
            let ps = PathSpace::from_code(&code, &rx, EncoderState(0)).unwrap();
            let oracle = path_metric_multiset(&CodeTrellis::new(&code, &rx).unwrap(), 0).unwrap();
            assert_eq!(ps.error_multiset().unwrap(), oracle);
            // each listed path re-encodes to its error count
            for idx in [0, ps.len() / 2, ps.len() - 1] {
                let cw = code.encode(&ps.message(idx).unwrap(), EncoderState(0)).unwrap();
                let d = cw.iter().zip(&rx).filter(|(a, b)| a != b).count() as u32;
                assert_eq!(d, ps.errors().unwrap()[idx]);
            }
        }
    }

    #[test]
    fn superposition_and_marking() {
        let v = h_superposition(&zero_space(4)).unwrap();
        assert!(v.amplitudes().iter().all(|a| (a - c(0.25, 0.0)).norm() < 1e-15));
        assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
        let v2 = h_superposition(&zero_space(2)).unwrap();
        assert!(v2.amplitudes().iter().all(|a| (a - c(0.5, 0.0)).norm() < 1e-15));

        let ps = zero_space(1);
        let v = PathStatevector::from_amplitudes(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let g = g_phi(&ps, &v, PI / 2.0).unwrap();
        assert!((g.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((g.amplitudes()[1] - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(g_phi(&ps, &v, 0.0).unwrap(), v);
    }

    #[test]
    fn diffusion_rows() {
        let v = PathStatevector::from_amplitudes(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let out = g_diffusion(&v);
        let expect = [-0.5, 0.5, 0.5, 0.5];
        for (a, e) in out.amplitudes().iter().zip(expect) {
            assert!((a - c(e, 0.0)).norm() < 1e-15);
        }
        let s = PathStatevector::uniform(8);
        let out = g_diffusion(&s);
        for (a, b) in out.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn grover_single_marked_path() {
        let mut g = vec![c(1.0, 0.0); 16];
        g[0] = c(-1.0, 0.0);
        let p = amplify(&g, 1).probability(0);
        assert!((p - 1936.0 / 4096.0).abs() < 1e-12);
        let theta = (0.25f64).asin();
        assert!((p - (3.0 * theta).sin().powi(2)).abs() < 1e-12);
        assert!((single_iteration_prob(&g, 0).unwrap() - 1936.0 / 4096.0).abs() < 1e-15);
        assert!((single_iteration_prob(&[c(1.0, 0.0); 4], 0).unwrap() - 0.25).abs() < 1e-15);
        assert!(single_iteration_prob(&[c(1.0, 0.0)], 0).is_err());
        assert!(single_iteration_prob(&[c(1.0, 0.0), c(0.5, 0.0)], 0).is_err());
    }

    #[test]
    fn omega_zero_keeps_uniform() {
        let ps = zero_space(4);
        let run = run_qva(&ps, &QvaParams::new(0.0, 5).unwrap()).unwrap();
        for p in run.state.probabilities() {
            assert!((p - 1.0 / 16.0).abs() < 1e-12);
        }
        assert!(QvaParams::new(0.5, 0).is_err());
        assert!(QvaParams::new(4.0, 1).is_err());
    }

    #[test]
    fn paper_point_value() {
        let run = run_qva(&zero_space(4), &QvaParams::new(0.68, 3).unwrap()).unwrap();
        assert_eq!(run.target_index, 0);
        assert_eq!(run.top_index, 0);
        assert!((run.prob_top - 0.673).abs() < 0.005, "{}", run.prob_top);
        // quoted amplitudes label paths by their slot in the exponent-sorted
        // diagonal: slot 1 is the 2-error path, slot 15 the 7-error path
        let a = run.state.amplitudes();
        let errors = ps4_errors();
        let by_errors = |e: u32| a[errors.iter().position(|&x| x == e).unwrap()];
        assert!((a[0] - c(-0.76, 0.29)).norm() < 0.01, "{}", a[0]);
        assert!((by_errors(2) - c(0.16, -0.05)).norm() < 0.01);
        assert!((by_errors(7) - c(0.37, -0.04)).norm() < 0.01);
    }

    #[test]
    fn sweeps_find_table_optima() {
        let s = sweep_omega(&zero_space(4), 3, DEFAULT_GRID).unwrap();
        assert!((s.omega_star - 0.68).abs() < 0.02 && s.prob_at_star >= 0.67, "{s:?}");
        assert_eq!(s.curve.len(), 628);
        let s = sweep_omega(&zero_space(6), 7, DEFAULT_GRID).unwrap();
        assert!((s.omega_star - 0.51).abs() < 0.03 && s.prob_at_star >= 0.74);
        assert!(sweep_omega(&zero_space(2), 1, 0.0).is_err());
    }

    #[test]
    fn measurement() {
        let mut point = vec![c(0.0, 0.0); 4];
        point[2] = c(0.0, 1.0);
        let h = measure(&PathStatevector::from_amplitudes(point), 5, 1000).unwrap();
        assert_eq!(h, [(2, 1000)].into());

        let u = PathStatevector::uniform(4);
        let h = measure(&u, 9, 100_000).unwrap();
        for i in 0..4 {
            assert!((h[&i] as f64 / 1e5 - 0.25).abs() < 0.01);
        }
        assert_eq!(measure(&u, 9, 500).unwrap(), measure(&u, 9, 500).unwrap());
    }

    #[test]
    fn mode_ties_pick_smallest() {
        assert_eq!(mode_of(&[3, 1, 3, 1, 2]), Some((1, 2)));
        assert_eq!(mode_of(&[5]), Some((5, 1)));
        assert_eq!(mode_of(&[]), None);
    }

    #[test]
    fn patterns_enumerate_combinations() {
        assert_eq!(error_patterns(4, 0, 64), vec![vec![0; 4]]);
        assert_eq!(error_patterns(8, 1, 64).len(), 8);
        assert_eq!(error_patterns(8, 2, 64).len(), 28);
        assert_eq!(error_patterns(8, 2, 5).len(), 5);
        assert_eq!(error_patterns(3, 3, 64), vec![vec![1, 1, 1]]);
        assert!(error_patterns(2, 3, 64).is_empty());
        let p = error_patterns(4, 2, 64);
        assert_eq!(p[0], vec![1, 1, 0, 0]);
        assert_eq!(p[5], vec![0, 0, 1, 1]);
    }

    #[test]
    fn adaptive_decoding_without_errors() {
        let code = ConvCode::paper_code();
        let schedule = [ErrorClass { errors: 0, omega: 0.68, iterations: 3, trials: 7 }];
        let mut ok = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..200 {
            let msg: Vec<u8> = (0..4).map(|_| rng.gen_range(0..2)).collect();
            let cw = code.encode(&msg, EncoderState(0)).unwrap();
            if let Ok(out) = adaptive_decode(&code, &cw, &schedule, trial) {
                assert_eq!(out.accepted_class, 0);
                ok += (out.message == msg) as usize;
            }
        }
        assert!(ok as f64 / 200.0 >= 0.95, "{ok}");
        assert!(adaptive_decode(&code, &[], &schedule, 0).is_err());
        assert!(adaptive_decode(&code, &[0; 8], &[], 0).is_err());
    }

    #[test]
    fn adaptive_decoding_falls_through_classes() {
        let code = ConvCode::paper_code();
        let mut rx = code.encode(&[1, 0, 1, 1], EncoderState(0)).unwrap();
        rx[3] ^= 1;
        let schedule = [
            ErrorClass { errors: 0, omega: 0.68, iterations: 3, trials: 7 },
            ErrorClass { errors: 1, omega: 0.9, iterations: 3, trials: 7 },
        ];
        let out = adaptive_decode(&code, &rx, &schedule, 4).unwrap();
        // no path is error free, so class 0 can never accept
        assert_eq!(out.accepted_class, 1);
        assert_eq!(out.trials_used, 14);
        let ps = PathSpace::from_code(&code, &rx, EncoderState(0)).unwrap();
        assert_eq!(ps.errors().unwrap()[out.path_index], 1);

        let only_zero = [ErrorClass { errors: 0, omega: 0.68, iterations: 3, trials: 3 }];
        assert!(matches!(adaptive_decode(&code, &rx, &only_zero, 4), Err(Error::DecodeFailure { classes: 1 })));
    }

    #[test]
    fn class_schedule_orders_by_probability() {
        let code = ConvCode::paper_code();
        let sched = error_class_schedule(&code, 4, 0.1, 2, 3, 7, 0.01).unwrap();
        assert_eq!(sched.iter().map(|c| c.errors).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!((sched[0].omega - 0.68).abs() < 0.03, "{:?}", sched[0]);
        let sched = error_class_schedule(&code, 4, 0.3, 2, 3, 7, 0.01).unwrap();
        assert_eq!(sched[0].errors, 2);
    }

    #[test]
    fn hmm_path_space() {
        let code = ConvCode::paper_code();
        let h = code.to_hmm(0.1).unwrap();
        let ps = PathSpace::from_hmm(&h, &[0, 0, 0], 0).unwrap();
        assert_eq!(ps.len(), 8);
        assert!(ps.errors().is_none());
        assert_eq!(ps.optimal_index(), 0);
        assert_eq!(ps.path(0), vec![0, 0, 0, 0]);
        let expect = -(0.5f64 * 0.81).ln() * 3.0;
        assert!((ps.weight(0) - expect).abs() < 1e-12);
        let run = run_qva(&ps, &QvaParams::new(0.3, 1).unwrap()).unwrap();
        assert!((run.state.norm_sqr() - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn single_iteration_gain_is_bounded() {
        // with the marking diagonal at the table's omega, one iteration is
        // only a constant factor better than guessing
        for (steps, omega) in [(3, 0.84), (4, 0.68), (5, 0.61), (6, 0.51), (7, 0.44), (8, 0.39), (9, 0.35), (10, 0.31)]
        {
            let ps = zero_space(steps);
            let p = run_qva(&ps, &QvaParams::new(omega, 1).unwrap()).unwrap().prob_top;
            let gain = p * ps.len() as f64;
            assert!(gain > 1.0 && gain <= 9.0, "N={steps} gain {gain}");
        }
    }

    proptest! {
        #[test]
        fn unitary_steps_preserve_norm(omega in 0.0f64..PI, steps in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rx: Vec<u8> = (0..2 * steps).map(|_| rng.gen_range(0..2)).collect();
            let ps = PathSpace::from_code(&ConvCode::paper_code(), &rx, EncoderState(0)).unwrap();
            let mut v = h_superposition(&ps).unwrap();
            for _ in 0..5 {
                v = g_phi(&ps, &v, omega).unwrap();
                prop_assert!((v.norm_sqr() - 1.0).abs() < NORM_TOL);
                v = g_diffusion(&v);
                prop_assert!((v.norm_sqr() - 1.0).abs() < NORM_TOL);
            }
        }

        #[test]
        fn marked_superposition_matches_closed_form(omega in 0.0f64..PI, steps in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rx: Vec<u8> = (0..2 * steps).map(|_| rng.gen_range(0..2)).collect();
            let ps = PathSpace::from_code(&ConvCode::paper_code(), &rx, EncoderState(0)).unwrap();
            let v = g_phi(&ps, &h_superposition(&ps).unwrap(), omega).unwrap();
            let l = ps.len() as f64;
            for (i, a) in v.amplitudes().iter().enumerate() {
                let e = ps.errors().unwrap()[i] as f64;
                prop_assert!((a - Complex64::from_polar(1.0 / l.sqrt(), omega * e)).norm() < 1e-14);
            }
        }

        #[test]
        fn relabeling_keeps_target_probability(seed in any::<u64>(), iters in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<Complex64> = (0..16).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))).collect();
            let mut perm: Vec<usize> = (0..16).collect();
            for i in (1..16).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let permuted: Vec<Complex64> = perm.iter().map(|&i| g[i]).collect();
            let target_after = perm.iter().position(|&i| i == 0).unwrap();
            let a = amplify(&g, iters).probability(0);
            let b = amplify(&permuted, iters).probability(target_after);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
