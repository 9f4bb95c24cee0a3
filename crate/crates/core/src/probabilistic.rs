//! Probabilistic variant: path probabilities loaded straight into the
//! amplitudes, repeated single-shot measurements, and the mode of the
//! observed paths as the decoded result.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::code::{bits_label, pack_bits, BscChannel, ConvCode, EncoderState};
use crate::error::{domain, Result};
use crate::qva::{grover_iterations, mode_of, sample_indices, PathSpace, PathStatevector, PathWeights};

/// Probability assigned to "no error on a step" when none is supplied.
pub const DEFAULT_E0: f64 = 0.8;

/// Relative distance within which a trial count is snapped to an integer
/// before rounding up, absorbing float noise in the closed form.
const SNAP_TOL: f64 = 1e-9;

/// Which denominator to use in the large-`r` rate of mode failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum LambdaForm {
    /// `b'(1 + (b - b')^2)`, as printed.
    #[default]
    Printed,
    /// `b'(1 + (b - b'))^2`, mirroring the `b` term.
    Symmetric,
}

/// Rate `lambda` with `kappa(r) ~ e^{-lambda r}`, where `kappa(r)` is the
/// chance the most frequent of `r` outcomes is not the most probable one and
/// `b >= b'` are the two largest outcome probabilities.
pub fn lambda_rate(b: f64, b_prime: f64, form: LambdaForm) -> Result<f64> {
    if !(0.0..=1.0).contains(&b) || !(0.0..=b).contains(&b_prime) {
        return domain(format!("need 0 <= b' <= b <= 1, got b={b}, b'={b_prime}"));
    }
    let d = b - b_prime;
    let denom = match form {
        LambdaForm::Printed => b * (1.0 - d).powi(2) + b_prime * (1.0 + d * d),
        LambdaForm::Symmetric => b * (1.0 - d).powi(2) + b_prime * (1.0 + d).powi(2),
    };
    if denom <= 0.0 {
        return domain("degenerate outcome probabilities: zero denominator");
    }
    Ok(d * d / (2.0 * denom))
}

/// `lambda = E0^N / (2 (6 - E0^N))`, the rate when no channel error occurred.
pub fn reduced_lambda(steps: usize, e0: f64) -> Result<f64> {
    if !(e0 > 0.0 && e0 < 1.0) {
        return domain(format!("E0 must lie in (0, 1), got {e0}"));
    }
    let p = e0.powi(steps as i32);
    Ok(0.5 * p / (6.0 - p))
}

/// Smallest `r` with `e^{-lambda r} <= target_failure` under [`reduced_lambda`].
pub fn required_trials(steps: usize, e0: f64, target_failure: f64) -> Result<u64> {
    if !(target_failure > 0.0 && target_failure <= 1.0) {
        return domain(format!("target failure must lie in (0, 1], got {target_failure}"));
    }
    let lambda = reduced_lambda(steps, e0)?;
    let r = -target_failure.ln() / lambda;
    let nearest = r.round();
    let r = if (r - nearest).abs() <= SNAP_TOL * nearest.max(1.0) { nearest } else { r.ceil() };
    Ok((r as u64).max(1))
}

/// Trial count and the reliability it buys for a given outcome distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialPlan {
    pub r: u64,
    pub target_failure: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl TrialPlan {
    pub fn new(r: u64, target_failure: f64, b: f64, b_prime: f64) -> Result<Self> {
        if r == 0 {
            return domain("need at least one trial");
        }
        lambda_rate(b, b_prime, LambdaForm::Printed)?;
        Ok(TrialPlan { r, target_failure, b, b_prime })
    }

    /// Plan for the zero-error case with `b = E0^N` from [`required_trials`].
    pub fn for_steps(steps: usize, e0: f64, target_failure: f64) -> Result<Self> {
        let r = required_trials(steps, e0, target_failure)?;
        let b = e0.powi(steps as i32);
        let b_prime = b * (1.0 - e0) / e0;
        Ok(TrialPlan { r, target_failure, b, b_prime: b_prime.min(b) })
    }

    pub fn lambda(&self, form: LambdaForm) -> Result<f64> {
        lambda_rate(self.b, self.b_prime, form)
    }

    /// `e^{-lambda r}`.
    pub fn kappa(&self, form: LambdaForm) -> Result<f64> {
        Ok((-self.lambda(form)? * self.r as f64).exp())
    }
}

/// Amplitudes proportional to the square root of each path's probability,
/// normalized over the admissible paths.
///
/// For code path spaces the probability is `eps^e (1-eps)^{Nn-e} 2^{-kN}`;
/// only the ratio `eps/(1-eps)` survives normalization. At `eps = 0` the
/// state is the limit: uniform over the minimum-error paths. HMM path spaces
/// carry their own `-ln P` weights and ignore `epsilon`.
pub fn amplitude_loaded_state(ps: &PathSpace, epsilon: f64) -> Result<PathStatevector> {
    let log_amp: Vec<f64> = match ps.weights() {
        PathWeights::Errors(errs) => {
            if !(0.0..1.0).contains(&epsilon) {
                return domain(format!("crossover probability {epsilon} outside [0, 1)"));
            }
            if epsilon == 0.0 {
                let min = errs.iter().copied().min().unwrap_or(0);
                errs.iter().map(|&e| if e == min { 0.0 } else { f64::NEG_INFINITY }).collect()
            } else {
                let half_log_ratio = 0.5 * (epsilon / (1.0 - epsilon)).ln();
                errs.iter().map(|&e| e as f64 * half_log_ratio).collect()
            }
        }
        PathWeights::NegLogProb(w) => w.iter().map(|x| -0.5 * x).collect(),
    };
    let top = log_amp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return domain("no path carries probability");
    }
    let amps: Vec<f64> = log_amp.iter().map(|a| (a - top).exp()).collect();
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(PathStatevector::from_amplitudes(amps.iter().map(|a| Complex64::new(a / norm, 0.0)).collect()))
}

/// Result of `r` single-shot measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub r: u64,
    pub mode: usize,
    pub mode_count: u64,
    /// `(index, count)` in increasing index order.
    pub histogram: Vec<(usize, u64)>,
}

/// Draws `r` measurements, sorts them and scans for the mode. Ties go to
/// the smallest index, which is the lexicographically first message.
pub fn run_trials(state: &PathStatevector, r: u64, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    if r == 0 {
        return domain("need at least one trial");
    }
    let mut samples = sample_indices(state, rng, r as usize)?;
    samples.sort_unstable();
    let (mode, mode_count) = mode_of(&samples).expect("r >= 1");
    let mut histogram: Vec<(usize, u64)> = Vec::new();
    for s in samples {
        match histogram.last_mut() {
            Some((idx, c)) if *idx == s => *c += 1,
            _ => histogram.push((s, 1)),
        }
    }
    Ok(TrialOutcome { r, mode, mode_count, histogram })
}

pub fn run_trials_seeded(state: &PathStatevector, r: u64, seed: u64) -> Result<TrialOutcome> {
    run_trials(state, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Generator for block `index` of a campaign seeded by `seed`.
pub fn block_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One row of a probabilistic decoding campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CampaignRow {
    pub campaign_id: u64,
    pub seed: u64,
    pub r: u64,
    /// Decoded message bits of the modal path.
    pub mode: String,
    pub mode_count: u64,
    /// The modal path is a minimum-error path for the received word.
    pub correct: bool,
    /// The modal path carries the transmitted message.
    pub message_recovered: bool,
}

/// Settings for [`run_campaigns`].
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec<'a> {
    pub code: &'a ConvCode,
    pub steps: usize,
    pub epsilon: f64,
    pub r: u64,
    pub seed: u64,
    pub campaigns: u64,
}

/// Random message, encode, binary symmetric channel, amplitude-loaded state,
/// `r` trials. Campaign `c` draws from stream `c` of `seed`; rows come back
/// in campaign order.
pub fn run_campaigns(spec: &CampaignSpec<'_>) -> Result<Vec<CampaignRow>> {
    (0..spec.campaigns).into_par_iter().map(|c| run_campaign(spec, c)).collect()
}

fn run_campaign(spec: &CampaignSpec<'_>, campaign_id: u64) -> Result<CampaignRow> {
    let code = spec.code;
    let mut rng = block_rng(spec.seed, campaign_id);
    let message: Vec<u8> = (0..code.k() * spec.steps).map(|_| rng.gen_range(0..2u8)).collect();
    let codeword = code.encode(&message, EncoderState(0))?;
    let mut channel = BscChannel::new(spec.epsilon, rng.gen())?;
    let (received, _) = channel.transmit(&codeword);
    let ps = PathSpace::from_code(code, &received, EncoderState(0))?;
    let state = amplitude_loaded_state(&ps, spec.epsilon)?;
    let out = run_trials(&state, spec.r, &mut rng)?;
    let decoded = ps.message(out.mode).expect("code path space");
    Ok(CampaignRow {
        campaign_id,
        seed: spec.seed,
        r: spec.r,
        mode: bits_label(pack_bits(&decoded), decoded.len()),
        mode_count: out.mode_count,
        correct: ps.optimal_indices().contains(&out.mode),
        message_recovered: decoded == message,
    })
}

/// Fraction of campaigns whose mode missed every minimum-error path.
pub fn failure_rate(rows: &[CampaignRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| !r.correct).count() as f64 / rows.len() as f64
}

/// Monte Carlo `kappa(r)` for an explicit outcome distribution whose most
/// probable outcome is index 0.
pub fn empirical_failure_rate(probs: &[f64], r: u64, campaigns: u64, seed: u64) -> Result<f64> {
    let amps: Vec<Complex64> = probs.iter().map(|p| Complex64::new(p.sqrt(), 0.0)).collect();
    let state = PathStatevector::from_amplitudes(amps);
    let failures = (0..campaigns)
        .into_par_iter()
        .map(|c| run_trials(&state, r, &mut block_rng(seed, c)).map(|o| u64::from(o.mode != 0)))
        .sum::<Result<u64>>()?;
    Ok(failures as f64 / campaigns as f64)
}

/// Least-squares slope of `-ln kappa` against `r`.
pub fn fit_rate(points: &[(u64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, k)| *k > 0.0).map(|&(r, k)| (r as f64, -k.ln())).collect();
    if pts.len() < 2 {
        return domain("need at least two points with nonzero failure rate");
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Oracle-call totals at one trellis depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostRow {
    pub steps: usize,
    pub num_paths: f64,
    /// `r` single-iteration trials.
    pub probabilistic_calls: u64,
    /// `ceil(pi/4 sqrt(F^N))` iterations of one run.
    pub iterated_calls: u64,
    pub ratio: f64,
    /// `(24 * 1.25^N - 4)`-style trial count over `pi/4 sqrt(F^N)`, both
    /// unrounded.
    pub formula_ratio: f64,
}

pub fn compare_costs(
    steps: impl IntoIterator<Item = usize>,
    fanout: usize,
    e0: f64,
    target_failure: f64,
) -> Result<Vec<CostRow>> {
    steps
        .into_iter()
        .map(|n| {
            let num_paths = (fanout as f64).powi(n as i32);
            let probabilistic_calls = required_trials(n, e0, target_failure)?;
            let iterated_calls = grover_iterations(num_paths as usize) as u64;
            let formula_trials = -target_failure.ln() / reduced_lambda(n, e0)?;
            let formula_iterations = std::f64::consts::FRAC_PI_4 * num_paths.sqrt();
            Ok(CostRow {
                steps: n,
                num_paths,
                probabilistic_calls,
                iterated_calls,
                ratio: probabilistic_calls as f64 / iterated_calls as f64,
                formula_ratio: formula_trials / formula_iterations,
            })
        })
        .collect()
}
