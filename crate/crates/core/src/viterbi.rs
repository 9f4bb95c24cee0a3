//! Classical most-likely-path search over a trellis.
//!
//! [`viterbi_decode`] is the add-compare-select dynamic program with a full
//! backpointer matrix. [`brute_force_decode`] enumerates every admissible
//! path and is kept as an independent oracle. Both break ties toward the
//! lexicographically smallest state sequence and report how many paths
//! share the optimal metric.
//!
//! Code trellises use integer error counts as the metric; general HMMs use
//! `-ln P_{i,j}(y)` compared with a small slack.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::Add;

use crate::code::{pack_bits, unpack_bits, ConvCode, EncoderState};
use crate::error::{domain, Error, Result};
use crate::hmm::Hmm;

/// Enumeration guard for the brute-force oracle.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 24;

/// Slack used when comparing log-probability metrics.
pub const LOG_METRIC_SLACK: f64 = 1e-12;

/// Additive path metric; smaller is better.
pub trait Metric: Copy + Debug + PartialOrd + Add<Output = Self> {
    const ZERO: Self;
    fn better(a: Self, b: Self) -> bool;
    fn tied(a: Self, b: Self) -> bool;
}

impl Metric for u32 {
    const ZERO: Self = 0;
    fn better(a: Self, b: Self) -> bool {
        a < b
    }
    fn tied(a: Self, b: Self) -> bool {
        a == b
    }
}

impl Metric for f64 {
    const ZERO: Self = 0.0;
    fn better(a: Self, b: Self) -> bool {
        a < b - LOG_METRIC_SLACK
    }
    fn tied(a: Self, b: Self) -> bool {
        (a - b).abs() <= LOG_METRIC_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<C> {
    pub to: usize,
    /// Input label; the message block for codes, the target state for HMMs.
    pub input: u32,
    pub cost: C,
}

/// A time-indexed trellis with a fixed number of steps.
pub trait Trellis {
    type Cost: Metric;

    fn num_states(&self) -> usize;
    fn steps(&self) -> usize;
    /// Upper bound on edges leaving any state.
    fn max_fanout(&self) -> usize;
    /// Edges leaving `state` at `step`, in ascending order of `to`.
    fn edges(&self, step: usize, state: usize) -> Vec<Edge<Self::Cost>>;
}

/// Trellis of a convolutional code against a received word.
#[derive(Debug, Clone)]
pub struct CodeTrellis<'a> {
    code: &'a ConvCode,
    received: Vec<u32>,
}

impl<'a> CodeTrellis<'a> {
    pub fn new(code: &'a ConvCode, received: &[u8]) -> Result<Self> {
        let n = code.n();
        if received.is_empty() || !received.len().is_multiple_of(n) {
            return domain(format!("received word of {} bits is not a positive multiple of n = {n}", received.len()));
        }
        if received.iter().any(|&b| b > 1) {
            return domain("received word contains a non-binary symbol");
        }
        Ok(CodeTrellis { code, received: received.chunks(n).map(pack_bits).collect() })
    }

    pub fn code(&self) -> &ConvCode {
        self.code
    }

    pub fn received_blocks(&self) -> &[u32] {
        &self.received
    }
}

impl Trellis for CodeTrellis<'_> {
    type Cost = u32;

    fn num_states(&self) -> usize {
        self.code.num_states()
    }

    fn steps(&self) -> usize {
        self.received.len()
    }

    fn max_fanout(&self) -> usize {
        self.code.fanout()
    }

    fn edges(&self, step: usize, state: usize) -> Vec<Edge<u32>> {
        let y = self.received[step];
        let mut edges: Vec<Edge<u32>> = (0..self.code.fanout() as u32)
            .map(|u| {
                let t = self.code.step(EncoderState(state as u32), u);
                Edge { to: t.to.0 as usize, input: u, cost: (t.output ^ y).count_ones() }
            })
            .collect();
        edges.sort_by_key(|e| e.to);
        edges
    }
}

/// Trellis of a general HMM against an emission sequence.
#[derive(Debug, Clone)]
pub struct HmmTrellis<'a> {
    hmm: &'a Hmm,
    emissions: Vec<usize>,
    fanout: usize,
}

impl<'a> HmmTrellis<'a> {
    pub fn new(hmm: &'a Hmm, emissions: &[usize]) -> Result<Self> {
        if emissions.is_empty() {
            return domain("emission sequence is empty");
        }
        if let Some(y) = emissions.iter().find(|&&y| y >= hmm.num_emissions()) {
            return domain(format!("emission {y} not in the alphabet"));
        }
        Ok(HmmTrellis { hmm, emissions: emissions.to_vec(), fanout: hmm.fanout().fanout })
    }
}

impl Trellis for HmmTrellis<'_> {
    type Cost = f64;

    fn num_states(&self) -> usize {
        self.hmm.num_states()
    }

    fn steps(&self) -> usize {
        self.emissions.len()
    }

    fn max_fanout(&self) -> usize {
        self.fanout
    }

    fn edges(&self, step: usize, state: usize) -> Vec<Edge<f64>> {
        self.hmm
            .successors(state, self.emissions[step])
            .into_iter()
            .map(|(j, w)| Edge { to: j, input: j as u32, cost: -w.ln() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult<C> {
    /// State sequence of length `N + 1`, starting state included.
    pub path: Vec<usize>,
    /// Input label per step.
    pub inputs: Vec<u32>,
    pub metric: C,
    /// Number of admissible paths sharing the optimal metric.
    pub ties: u128,
}

impl<C> DecodeResult<C> {
    /// Input labels expanded to `k` bits each.
    pub fn message_bits(&self, k: usize) -> Vec<u8> {
        self.inputs.iter().flat_map(|&u| unpack_bits(u, k)).collect()
    }
}

fn check_initial<T: Trellis>(t: &T, initial: usize) -> Result<()> {
    if initial >= t.num_states() {
        return domain(format!("initial state {initial} out of range 0..{}", t.num_states()));
    }
    if t.steps() == 0 {
        return domain("need at least one trellis step");
    }
    Ok(())
}

const NONE: usize = usize::MAX;

/// Most likely path by dynamic programming.
pub fn viterbi_decode<T: Trellis>(t: &T, initial: usize) -> Result<DecodeResult<T::Cost>> {
    check_initial(t, initial)?;
    let q = t.num_states();
    let steps = t.steps();

    let mut metric: Vec<Option<T::Cost>> = vec![None; q];
    let mut count = vec![0u128; q];
    // lexicographic rank of each state's survivor among the current survivors
    let mut rank = vec![NONE; q];
    metric[initial] = Some(T::Cost::ZERO);
    count[initial] = 1;
    rank[initial] = 0;

    let mut backptr: Vec<Vec<(usize, u32)>> = Vec::with_capacity(steps);

    for step in 0..steps {
        let mut next: Vec<Option<T::Cost>> = vec![None; q];
        let mut next_count = vec![0u128; q];
        let mut ptr = vec![(NONE, 0u32); q];
        for i in 0..q {
            let Some(mi) = metric[i] else { continue };
            for e in t.edges(step, i) {
                let cand = mi + e.cost;
                match next[e.to] {
                    None => {
                        next[e.to] = Some(cand);
                        next_count[e.to] = count[i];
                        ptr[e.to] = (i, e.input);
                    }
                    Some(cur) if T::Cost::better(cand, cur) => {
                        next[e.to] = Some(cand);
                        next_count[e.to] = count[i];
                        ptr[e.to] = (i, e.input);
                    }
                    Some(cur) if T::Cost::tied(cand, cur) => {
                        next_count[e.to] = next_count[e.to].saturating_add(count[i]);
                        let (p, _) = ptr[e.to];
                        if rank[i] < rank[p] {
                            ptr[e.to] = (i, e.input);
                        }
                    }
                    Some(_) => {}
                }
            }
        }
        let mut live: Vec<usize> = (0..q).filter(|&j| next[j].is_some()).collect();
        if live.is_empty() {
            return Err(Error::NoPath);
        }
        live.sort_by_key(|&j| (rank[ptr[j].0], j));
        let mut next_rank = vec![NONE; q];
        for (r, &j) in live.iter().enumerate() {
            next_rank[j] = r;
        }
        metric = next;
        count = next_count;
        rank = next_rank;
        backptr.push(ptr);
    }

    let mut best: Option<(T::Cost, usize)> = None;
    let mut ties = 0u128;
    for j in 0..q {
        let Some(mj) = metric[j] else { continue };
        match best {
            None => {
                best = Some((mj, j));
                ties = count[j];
            }
            Some((mb, _)) if T::Cost::better(mj, mb) => {
                best = Some((mj, j));
                ties = count[j];
            }
            Some((mb, b)) if T::Cost::tied(mj, mb) => {
                ties = ties.saturating_add(count[j]);
                if rank[j] < rank[b] {
                    best = Some((mb, j));
                }
            }
            Some(_) => {}
        }
    }
    let (best_metric, mut state) = best.ok_or(Error::NoPath)?;

    let mut path = vec![state];
    let mut inputs = Vec::with_capacity(steps);
    for ptr in backptr.iter().rev() {
        let (p, u) = ptr[state];
        inputs.push(u);
        path.push(p);
        state = p;
    }
    path.reverse();
    inputs.reverse();
    Ok(DecodeResult { path, inputs, metric: best_metric, ties })
}

fn guard<T: Trellis>(t: &T) -> Result<()> {
    let requested = (t.max_fanout() as u128).saturating_pow(t.steps() as u32);
    if requested > BRUTE_FORCE_LIMIT {
        return Err(Error::Size { what: "path enumeration", requested, limit: BRUTE_FORCE_LIMIT });
    }
    Ok(())
}

type PathVisitor<'a, C> = dyn FnMut(&[usize], &[u32], C) + 'a;

/// Visits every admissible path in lexicographic order of state sequence.
pub(crate) fn for_each_path<T: Trellis>(t: &T, initial: usize, mut visit: impl FnMut(&[usize], &[u32], T::Cost)) {
    fn walk<T: Trellis>(
        t: &T,
        step: usize,
        states: &mut Vec<usize>,
        inputs: &mut Vec<u32>,
        acc: T::Cost,
        visit: &mut PathVisitor<'_, T::Cost>,
    ) {
        if step == t.steps() {
            visit(states, inputs, acc);
            return;
        }
        let here = *states.last().expect("path starts with the initial state");
        for e in t.edges(step, here) {
            states.push(e.to);
            inputs.push(e.input);
            walk(t, step + 1, states, inputs, acc + e.cost, visit);
            states.pop();
            inputs.pop();
        }
    }
    let mut states = vec![initial];
    let mut inputs = Vec::new();
    walk(t, 0, &mut states, &mut inputs, T::Cost::ZERO, &mut visit);
}

/// Exhaustive search; the oracle for [`viterbi_decode`].
pub fn brute_force_decode<T: Trellis>(t: &T, initial: usize) -> Result<DecodeResult<T::Cost>> {
    check_initial(t, initial)?;
    guard(t)?;
    let mut best: Option<DecodeResult<T::Cost>> = None;
    for_each_path(t, initial, |states, inputs, metric| match &mut best {
        None => best = Some(DecodeResult { path: states.to_vec(), inputs: inputs.to_vec(), metric, ties: 1 }),
        Some(b) if T::Cost::better(metric, b.metric) => {
            *b = DecodeResult { path: states.to_vec(), inputs: inputs.to_vec(), metric, ties: 1 }
        }
        Some(b) if T::Cost::tied(metric, b.metric) => b.ties += 1,
        Some(_) => {}
    });
    best.ok_or(Error::NoPath)
}

/// Multiset of path metrics over every admissible path.
pub fn path_metric_multiset<T: Trellis<Cost = u32>>(t: &T, initial: usize) -> Result<BTreeMap<u32, u64>> {
    check_initial(t, initial)?;
    guard(t)?;
    let mut hist = BTreeMap::new();
    for_each_path(t, initial, |_, _, metric| *hist.entry(metric).or_insert(0) += 1);
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{parse_bits, BscChannel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decode(rx: &str) -> DecodeResult<u32> {
        let c = ConvCode::paper_code();
        viterbi_decode(&CodeTrellis::new(&c, &parse_bits(rx).unwrap()).unwrap(), 0).unwrap()
    }

    #[test]
    fn paper_code_examples() {
        let r = decode("00 00 00 00");
        assert_eq!((r.message_bits(1), r.metric), (vec![0, 0, 0, 0], 0));
        let r = decode("11 01 11 00");
        assert_eq!((r.message_bits(1), r.metric), (vec![1, 0, 0, 0], 0));
        assert_eq!(r.path, vec![0, 2, 1, 0, 0]);
        let r = decode("10 01 11 00");
        assert_eq!((r.message_bits(1), r.metric), (vec![1, 0, 0, 0], 1));
    }

    #[test]
    fn brute_force_examples() {
        let c = ConvCode::paper_code();
        let rx = parse_bits("00 00").unwrap();
        let r = brute_force_decode(&CodeTrellis::new(&c, &rx).unwrap(), 0).unwrap();
        assert_eq!(r.metric, 0);

        // 0001 encodes to 00 00 00 11, so this word is a codeword
        let rx = parse_bits("00 00 00 11").unwrap();
        let t = CodeTrellis::new(&c, &rx).unwrap();
        let r = brute_force_decode(&t, 0).unwrap();
        assert_eq!((r.metric, r.message_bits(1)), (0, vec![0, 0, 0, 1]));
        assert_eq!(viterbi_decode(&t, 0).unwrap(), r);
    }

    #[test]
    fn metric_multisets() {
        let c = ConvCode::paper_code();
        let m4 = path_metric_multiset(&CodeTrellis::new(&c, &[0; 8]).unwrap(), 0).unwrap();
        let expected: BTreeMap<u32, u64> = [(0, 1), (2, 1), (3, 3), (4, 5), (5, 4), (6, 1), (7, 1)].into();
        assert_eq!(m4, expected);
        let m1 = path_metric_multiset(&CodeTrellis::new(&c, &[0; 2]).unwrap(), 0).unwrap();
        assert_eq!(m1, [(0, 1), (2, 1)].into());
        let m6 =
            path_metric_multiset(&CodeTrellis::new(&c, &[1, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1]).unwrap(), 0).unwrap();
        assert_eq!(m6.values().sum::<u64>(), 64);
    }

    #[test]
    fn ties_are_counted_and_broken_lexicographically() {
        let c = ConvCode::paper_code();
        // 11 is distance 1 from both 01 and 10 after leaving state 10
        let rx = parse_bits("11 11").unwrap();
        let t = CodeTrellis::new(&c, &rx).unwrap();
        let v = viterbi_decode(&t, 0).unwrap();
        let b = brute_force_decode(&t, 0).unwrap();
        assert_eq!(v, b);
        assert_eq!(v.ties, 2);
        assert_eq!(v.path, vec![0, 2, 1]);
    }

    #[test]
    fn no_path_and_bad_input() {
        let h = Hmm::new(2, vec!["a".into(), "b".into()], [(0, 1, 0, 1.0)], [(0, 1, 0, 1.0)], None).unwrap();
        let t = HmmTrellis::new(&h, &[0, 0]).unwrap();
        assert!(matches!(viterbi_decode(&t, 0), Err(Error::NoPath)));
        assert!(matches!(brute_force_decode(&t, 0), Err(Error::NoPath)));
        assert!(HmmTrellis::new(&h, &[2]).is_err());
        assert!(HmmTrellis::new(&h, &[]).is_err());
        let c = ConvCode::paper_code();
        assert!(CodeTrellis::new(&c, &[0, 0, 1]).is_err());
        assert!(viterbi_decode(&CodeTrellis::new(&c, &[0, 0]).unwrap(), 4).is_err());
    }

    #[test]
    fn size_guard() {
        let c = ConvCode::paper_code();
        let t = CodeTrellis::new(&c, &[0; 50]).unwrap();
        assert!(matches!(brute_force_decode(&t, 0), Err(Error::Size { .. })));
        assert!(viterbi_decode(&t, 0).is_ok());
    }

    #[test]
    fn hmm_and_code_trellis_agree() {
        let c = ConvCode::paper_code();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n_steps = rng.gen_range(1..=8);
            let msg: Vec<u8> = (0..n_steps).map(|_| rng.gen_range(0..2)).collect();
            let cw = c.encode(&msg, EncoderState(0)).unwrap();
            let (rx, _) = BscChannel::new(0.15, rng.gen()).unwrap().transmit(&cw);
            let eps = 0.1;
            let h = c.to_hmm(eps).unwrap();
            let ys: Vec<usize> = rx.chunks(2).map(|b| pack_bits(b) as usize).collect();
            let by_hmm = viterbi_decode(&HmmTrellis::new(&h, &ys).unwrap(), 0).unwrap();
            let by_code = viterbi_decode(&CodeTrellis::new(&c, &rx).unwrap(), 0).unwrap();
            assert_eq!(by_hmm.path, by_code.path);
            assert_eq!(by_hmm.ties, by_code.ties);
            // -ln P = N ln 2 - sum [d ln eps + (n - d) ln(1 - eps)]
            let nb = rx.len() as f64;
            let d = by_code.metric as f64;
            let expect = n_steps as f64 * 2f64.ln() - d * eps.ln() - (nb - d) * (1.0 - eps).ln();
            assert!((by_hmm.metric - expect).abs() < 1e-9);
            let bf = brute_force_decode(&HmmTrellis::new(&h, &ys).unwrap(), 0).unwrap();
            assert_eq!(bf.path, by_hmm.path);
        }
    }

    proptest! {
        #[test]
        fn viterbi_matches_brute_force(bits in proptest::collection::vec(0u8..2, 2..=16usize).prop_filter("even", |v| v.len() % 2 == 0)) {
            let c = ConvCode::paper_code();
            let t = CodeTrellis::new(&c, &bits).unwrap();
            prop_assert_eq!(viterbi_decode(&t, 0).unwrap(), brute_force_decode(&t, 0).unwrap());
        }

        #[test]
        fn one_flip_moves_metric_by_at_most_one(bits in proptest::collection::vec(0u8..2, 16), pos in 0usize..16) {
            let c = ConvCode::paper_code();
            let a = viterbi_decode(&CodeTrellis::new(&c, &bits).unwrap(), 0).unwrap().metric;
            let mut flipped = bits.clone();
            flipped[pos] ^= 1;
            let b = viterbi_decode(&CodeTrellis::new(&c, &flipped).unwrap(), 0).unwrap().metric;
            prop_assert!(a.abs_diff(b) <= 1);
        }
    }
}
