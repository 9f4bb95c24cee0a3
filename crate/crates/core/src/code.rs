//! Binary convolutional codes, their state diagrams, and the binary
//! symmetric channel.
//!
//! Conventions:
//! - An `(n, k)` code with memory `m` has `2^(k*m)` encoder states. The
//!   state integer stores the most recent input block in its top `k` bits,
//!   so for a rate-1/2, `m = 2` code, state `10` means the newest register
//!   holds a one. From `00` the input `1` leads to `10`.
//! - Within a block, stream/bit 0 is the most significant bit.
//! - Generator masks: bit `d` of a mask is the coefficient of `x^d`, so the
//!   octal mask `5` is `1 + x^2` and `7` is `1 + x + x^2`.

use std::fmt;

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::hmm::Hmm;

/// Largest supported `k * m`, i.e. at most 2^20 encoder states.
pub const MAX_STATE_BITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvCode {
    k: usize,
    n: usize,
    m: usize,
    /// `generators[i][j]` relates input stream `i` to output bit `j`.
    generators: Vec<Vec<u32>>,
}

/// Shift-register contents, `k * m` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EncoderState(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: EncoderState,
    pub input: u32,
    pub to: EncoderState,
    /// `n`-bit output block, bit 0 of the block in the most significant position.
    pub output: u32,
}

impl ConvCode {
    pub fn new(k: usize, n: usize, m: usize, generators: Vec<Vec<u32>>) -> Result<Self> {
        if k == 0 || n == 0 || m == 0 {
            return domain(format!("(n,k,m) = ({n},{k},{m}) must all be positive"));
        }
        if k * m > MAX_STATE_BITS {
            return domain(format!("k*m = {} exceeds {MAX_STATE_BITS} state bits", k * m));
        }
        if n > 16 || k > 8 {
            return domain("block sizes limited to k <= 8, n <= 16");
        }
        if generators.len() != k || generators.iter().any(|row| row.len() != n) {
            return domain(format!("generator matrix must be {k} x {n}"));
        }
        let limit = 1u32 << (m + 1);
        if generators.iter().flatten().any(|&g| g >= limit) {
            return domain(format!("a generator polynomial has degree above m = {m}"));
        }
        if !generators.iter().flatten().any(|&g| g >> m == 1) {
            return domain(format!("no generator polynomial has degree exactly m = {m}"));
        }
        Ok(ConvCode { k, n, m, generators })
    }

    /// Parses `"k,n,m;g11,g12,..."` with octal masks listed row by row.
    pub fn parse(spec: &str) -> Result<Self> {
        let (dims, gens) =
            spec.split_once(';').ok_or_else(|| crate::Error::Domain(format!("code spec {spec:?} lacks ';'")))?;
        let dims: Vec<usize> = dims
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::Error::Domain(format!("bad code dimensions in {spec:?}: {e}")))?;
        let [k, n, m] = dims[..] else {
            return domain(format!("code spec {spec:?} needs exactly k,n,m"));
        };
        let masks: Vec<u32> = gens
            .split(',')
            .map(|s| u32::from_str_radix(s.trim(), 8))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::Error::Domain(format!("bad octal mask in {spec:?}: {e}")))?;
        if masks.len() != k * n {
            return domain(format!("expected {} generator masks, got {}", k * n, masks.len()));
        }
        ConvCode::new(k, n, m, masks.chunks(n).map(<[u32]>::to_vec).collect())
    }

    /// The rate-1/2, memory-2 code `G(x) = [1 + x^2, 1 + x + x^2]`.
    pub fn paper_code() -> Self {
        ConvCode::new(1, 2, 2, vec![vec![0o5, 0o7]]).expect("valid built-in code")
    }

    pub fn spec_string(&self) -> String {
        let masks: Vec<String> = self.generators.iter().flatten().map(|g| format!("{g:o}")).collect();
        format!("{},{},{};{}", self.k, self.n, self.m, masks.join(","))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn generators(&self) -> &[Vec<u32>] {
        &self.generators
    }

    pub fn state_bits(&self) -> usize {
        self.k * self.m
    }

    pub fn num_states(&self) -> usize {
        1 << self.state_bits()
    }

    /// `2^k` successors per state.
    pub fn fanout(&self) -> usize {
        1 << self.k
    }

    pub fn state_label(&self, s: EncoderState) -> String {
        bits_label(s.0, self.state_bits())
    }

    /// One encoder step from `from` with input block `input`.
    pub fn step(&self, from: EncoderState, input: u32) -> Transition {
        let (k, m) = (self.k, self.m);
        debug_assert!(input < (1 << k));
        debug_assert!((from.0 as usize) < self.num_states());
        // bit of stream i at delay d (d = 0 is the current input)
        let tap = |i: usize, d: usize| -> u32 {
            if d == 0 {
                (input >> (k - 1 - i)) & 1
            } else {
                (from.0 >> (k * (m - d) + (k - 1 - i))) & 1
            }
        };
        let mut output = 0u32;
        for j in 0..self.n {
            let mut bit = 0u32;
            for (i, row) in self.generators.iter().enumerate() {
                let g = row[j];
                for d in 0..=m {
                    bit ^= ((g >> d) & 1) & tap(i, d);
                }
            }
            output = (output << 1) | bit;
        }
        let to = (input << (k * (m - 1))) | (from.0 >> k);
        Transition { from, input, to: EncoderState(to), output }
    }

    /// All `2^(k m) * 2^k` transitions ordered by `(from, input)`.
    pub fn state_diagram(&self) -> Vec<Transition> {
        (0..self.num_states() as u32)
            .flat_map(|s| (0..self.fanout() as u32).map(move |u| (s, u)))
            .map(|(s, u)| self.step(EncoderState(s), u))
            .collect()
    }

    /// Encodes a message bit string from `initial`.
    pub fn encode(&self, message: &[u8], initial: EncoderState) -> Result<Vec<u8>> {
        if !message.len().is_multiple_of(self.k) {
            return domain(format!("message length {} is not a multiple of k = {}", message.len(), self.k));
        }
        check_bits(message)?;
        let mut state = initial;
        let mut out = Vec::with_capacity(message.len() / self.k * self.n);
        for block in message.chunks(self.k) {
            let t = self.step(state, pack_bits(block));
            out.extend(unpack_bits(t.output, self.n));
            state = t.to;
        }
        Ok(out)
    }

    /// Maps the encoder onto an HMM: states are register contents, emissions
    /// are `n`-bit receive blocks, each legal edge has transition weight
    /// `2^-k` and emission weight `eps^d (1 - eps)^(n - d)` with `d` the
    /// Hamming distance between the edge output and the received block.
    pub fn to_hmm(&self, epsilon: f64) -> Result<Hmm> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return domain(format!("crossover probability {epsilon} outside (0, 0.5)"));
        }
        let num_y = 1usize << self.n;
        let p_edge = 1.0 / self.fanout() as f64;
        let mut trans = Vec::new();
        let mut emit = Vec::new();
        for t in self.state_diagram() {
            for y in 0..num_y {
                let d = (t.output ^ y as u32).count_ones() as i32;
                let (i, j) = (t.from.0 as usize, t.to.0 as usize);
                trans.push((i, j, y, p_edge));
                emit.push((i, j, y, epsilon.powi(d) * (1.0 - epsilon).powi(self.n as i32 - d)));
            }
        }
        let emissions = (0..num_y).map(|y| bits_label(y as u32, self.n)).collect();
        Hmm::new(self.num_states(), emissions, trans, emit, None)
    }
}

/// Hamming distance between a transition's output and a received block.
pub fn error_count(t: &Transition, received_block: &[u8], n: usize) -> Result<u32> {
    if received_block.len() != n {
        return domain(format!("received block has {} bits, code blocks have {n}", received_block.len()));
    }
    check_bits(received_block)?;
    Ok((t.output ^ pack_bits(received_block)).count_ones())
}

/// Memoryless binary symmetric channel with a seeded generator.
#[derive(Debug, Clone)]
pub struct BscChannel {
    epsilon: f64,
    flip: Option<Bernoulli>,
    rng: ChaCha8Rng,
}

impl BscChannel {
    /// `epsilon = 0` gives a noiseless channel.
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        Self::with_rng(epsilon, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(epsilon: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return domain(format!("crossover probability {epsilon} outside [0, 0.5)"));
        }
        let flip = (epsilon > 0.0).then(|| Bernoulli::new(epsilon).expect("epsilon in range"));
        Ok(BscChannel { epsilon, flip, rng })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Flips each bit independently; returns the received word and the flip count.
    pub fn transmit(&mut self, codeword: &[u8]) -> (Vec<u8>, usize) {
        let Some(flip) = self.flip else {
            return (codeword.to_vec(), 0);
        };
        let mut flips = 0;
        let received = codeword
            .iter()
            .map(|&b| {
                if flip.sample(&mut self.rng) {
                    flips += 1;
                    b ^ 1
                } else {
                    b
                }
            })
            .collect();
        (received, flips)
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return domain(format!("bit value {b} is not 0 or 1"));
    }
    Ok(())
}

/// Packs bits, first bit most significant.
pub fn pack_bits(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

pub fn unpack_bits(value: u32, width: usize) -> impl Iterator<Item = u8> {
    (0..width).rev().map(move |i| ((value >> i) & 1) as u8)
}

pub fn bits_label(value: u32, width: usize) -> String {
    unpack_bits(value, width).map(|b| char::from(b'0' + b)).collect()
}

/// Reads a `'0'/'1'` string; whitespace between blocks is ignored.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => domain(format!("unexpected character {other:?} in bit string")),
        })
        .collect()
}

/// Renders bits as space-separated blocks of `block` bits.
pub fn format_blocks(bits: &[u8], block: usize) -> String {
    bits.chunks(block.max(1))
        .map(|c| c.iter().map(|&b| char::from(b'0' + b)).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for ConvCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}) m={} [{}]", self.n, self.k, self.m, self.spec_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(label: &str) -> EncoderState {
        EncoderState(u32::from_str_radix(label, 2).unwrap())
    }

    #[test]
    fn paper_state_diagram_edges() {
        let c = ConvCode::paper_code();
        let t = c.step(s("00"), 0);
        assert_eq!((t.to, t.output), (s("00"), 0b00));
        let t = c.step(s("00"), 1);
        assert_eq!((t.to, t.output), (s("10"), 0b11));
        let t = c.step(s("11"), 1);
        assert_eq!((t.to, t.output), (s("11"), 0b01));
        // the remaining labels of the diagram
        assert_eq!(c.step(s("10"), 0).output, 0b01);
        assert_eq!(c.step(s("10"), 1).output, 0b10);
        assert_eq!(c.step(s("01"), 0).output, 0b11);
        assert_eq!(c.step(s("01"), 1).output, 0b00);
        assert_eq!(c.step(s("11"), 0).output, 0b10);
        assert_eq!(c.state_diagram().len(), 8);
    }

    #[test]
    fn parse_and_render() {
        let c = ConvCode::parse("1,2,2;5,7").unwrap();
        assert_eq!(c, ConvCode::paper_code());
        assert_eq!(c.spec_string(), "1,2,2;5,7");
        assert!(ConvCode::parse("1,2,2;5").is_err());
        assert!(ConvCode::parse("1,2;5,7").is_err());
        assert!(ConvCode::parse("1,2,2;5,9").is_err());
        // degree above m
        assert!(ConvCode::parse("1,2,1;5,7").is_err());
        // no polynomial reaches degree m
        assert!(ConvCode::parse("1,2,3;5,7").is_err());
    }

    #[test]
    fn encode_examples() {
        let c = ConvCode::paper_code();
        let enc = |m: &str| format_blocks(&c.encode(&parse_bits(m).unwrap(), s("00")).unwrap(), 2);
        assert_eq!(enc("0000"), "00 00 00 00");
        assert_eq!(enc("1000"), "11 01 11 00");
        assert_eq!(enc("0010"), "00 00 11 01");
        let c2 = ConvCode::parse("2,3,1;1,2,3,2,3,1").unwrap();
        assert!(c2.encode(&[1, 0, 1], EncoderState(0)).is_err());
    }

    #[test]
    fn hmm_mapping() {
        let c = ConvCode::paper_code();
        let h = c.to_hmm(0.1).unwrap();
        let (s00, s10) = (0, 2);
        let y00 = h.emission_index("00").unwrap();
        assert!((h.emit(s00, s00, y00) - 0.81).abs() < 1e-15);
        assert!((h.emit(s00, s10, y00) - 0.01).abs() < 1e-15);
        for y in 0..4 {
            assert_eq!(h.trans(s00, s00, y), 0.5);
        }
        assert!((h.joint_prob(s00, s00, y00).unwrap() - 0.405).abs() < 1e-15);
        assert!(h.check_row_stochastic().pass);
        assert!(!h.check_doubly_normalized().pass);
        assert_eq!(h.fanout().fanout, 2);
        assert!(c.to_hmm(0.0).is_err());
        assert!(c.to_hmm(0.5).is_err());
    }

    #[test]
    fn error_counts_on_lattice_segment() {
        let c = ConvCode::paper_code();
        let zero = [0u8, 0];
        assert_eq!(error_count(&c.step(s("00"), 0), &zero, 2).unwrap(), 0);
        assert_eq!(error_count(&c.step(s("00"), 1), &zero, 2).unwrap(), 2);
        assert_eq!(error_count(&c.step(s("10"), 0), &zero, 2).unwrap(), 1);
        assert!(error_count(&c.step(s("00"), 0), &[0], 2).is_err());
    }

    #[test]
    fn channel_behaviour() {
        let word = parse_bits("11011100").unwrap();
        let (rx, flips) = BscChannel::new(0.0, 1).unwrap().transmit(&word);
        assert_eq!((rx, flips), (word.clone(), 0));

        let a = BscChannel::new(0.1, 42).unwrap().transmit(&word);
        let b = BscChannel::new(0.1, 42).unwrap().transmit(&word);
        assert_eq!(a, b);
        assert_eq!(a.1, a.0.iter().zip(&word).filter(|(x, y)| x != y).count());

        let mut ch = BscChannel::new(0.1, 7).unwrap();
        let (_, flips) = ch.transmit(&vec![0u8; 1_000_000]);
        let rate = flips as f64 / 1e6;
        assert!((rate - 0.1).abs() < 0.001, "flip rate {rate}");

        assert!(BscChannel::new(0.5, 0).is_err());
        assert!(BscChannel::new(-0.1, 0).is_err());
    }

    #[test]
    fn outgoing_error_counts_cover_every_distance() {
        // brute force: for the paper code every state's two outgoing outputs
        // are complementary, so their distances to any block sum to n
        let c = ConvCode::paper_code();
        for st in 0..4 {
            for y in 0..4u32 {
                let block: Vec<u8> = unpack_bits(y, 2).collect();
                let sum: u32 = (0..2).map(|u| error_count(&c.step(EncoderState(st), u), &block, 2).unwrap()).sum();
                assert_eq!(sum, 2);
            }
        }
    }

    proptest! {
        #[test]
        fn encoding_is_linear(a in proptest::collection::vec(0u8..2, 12), b in proptest::collection::vec(0u8..2, 12)) {
            let c = ConvCode::parse("1,3,3;13,15,17").unwrap();
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            let ea = c.encode(&a, EncoderState(0)).unwrap();
            let eb = c.encode(&b, EncoderState(0)).unwrap();
            let ex = c.encode(&x, EncoderState(0)).unwrap();
            let sum: Vec<u8> = ea.iter().zip(&eb).map(|(p, q)| p ^ q).collect();
            prop_assert_eq!(ex, sum);
        }

        #[test]
        fn derived_hmms_are_row_stochastic(eps in 0.001f64..0.499) {
            for spec in ["1,2,2;5,7", "2,3,1;1,2,3,2,3,1"] {
                let c = ConvCode::parse(spec).unwrap();
                let h = c.to_hmm(eps).unwrap();
                prop_assert!(h.check_row_stochastic().pass);
                prop_assert_eq!(h.fanout().fanout, 1 << c.k());
            }
        }
    }
}
