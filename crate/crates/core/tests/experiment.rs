use qviterbi::code::{parse_bits, ConvCode, EncoderState};
use qviterbi::experiment::{
    cmd_circuit, cmd_decode, cmd_sweep, cmd_table, cmd_verify, decode_rows, ExperimentConfig, Fault, Mode, StepRange,
    TABLE_HEADER,
};
use qviterbi::qva::{amplify, PathSpace};
use qviterbi::viterbi::{brute_force_decode, CodeTrellis};

fn decode_cfg(mode: Mode, n: usize, epsilon: f64, blocks: u64) -> ExperimentConfig {
    ExperimentConfig { mode, n_steps: StepRange::single(n), epsilon, blocks, seed: 17, ..Default::default() }
}

#[test]
fn table_rows_match_reference() {
    let cfg = ExperimentConfig { n_steps: "3..10".parse().unwrap(), ..Default::default() };
    let out = cmd_table(&cfg).unwrap();
    let lines: Vec<&str> = out.csv.lines().collect();
    assert_eq!(lines[0], TABLE_HEADER);
    assert_eq!(lines.len(), 9);
    let n4: Vec<f64> = lines[2].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(n4[0], 4.0);
    assert_eq!(n4[1], 3.0);
    assert!((n4[2] - 0.68).abs() < 0.01 && (n4[3] - 0.67).abs() < 0.01);
    let n3: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(n3[1], "2");
    assert!((n3[3].parse::<f64>().unwrap() - 0.73).abs() < 0.01);
    assert_eq!(out.csv, cmd_table(&cfg).unwrap().csv);
}

#[test]
fn sweep_is_deterministic() {
    let cfg = ExperimentConfig { received: Some("00 00 01 00".into()), ..Default::default() };
    let a = cmd_sweep(&cfg).unwrap();
    assert_eq!(a.csv, cmd_sweep(&cfg).unwrap().csv);
    assert!(a.csv.starts_with("omega,prob_top,top_index\n"));
    assert!(!a.csv.contains('\r'));
    assert!(cmd_sweep(&ExperimentConfig { received: Some("0".into()), ..Default::default() }).is_err());
}

#[test]
fn noiseless_classical_never_errs() {
    let out = cmd_decode(&decode_cfg(Mode::Classical, 6, 0.0, 200)).unwrap();
    assert_eq!(out.record.summary["block_errors"], 0);
}

#[test]
fn classical_matches_brute_force_rate() {
    let code = ConvCode::paper_code();
    let (_, rows, _) = decode_rows(&decode_cfg(Mode::Classical, 8, 0.05, 10_000)).unwrap();
    let mut classical_errors = 0;
    let mut oracle_errors = 0;
    for r in &rows {
        let rx = parse_bits(&r.received).unwrap();
        let bf = brute_force_decode(&CodeTrellis::new(&code, &rx).unwrap(), 0).unwrap();
        let bf_msg: String = bf.message_bits(1).iter().map(|&b| char::from(b'0' + b)).collect();
        oracle_errors += usize::from(bf_msg != r.message);
        classical_errors += usize::from(!r.correct);
    }
    assert_eq!(classical_errors, oracle_errors);
    assert!(classical_errors > 0);
}

/// Exact failure probability of taking the mode of `r` draws from `p`
/// (ties to the smallest index) when `target` is the right answer, by
/// enumerating every count vector.
fn exact_mode_failure(p: &[f64], target: usize, r: usize) -> f64 {
    fn rec(p: &[f64], i: usize, left: usize, counts: &mut Vec<usize>, prob: f64, target: usize, acc: &mut f64) {
        if i == p.len() - 1 {
            counts.push(left);
            let pr = prob * p[i].powi(left as i32) / factorial(left);
            let best = counts.iter().enumerate().fold((0, 0), |b, (j, &c)| if c > b.1 { (j, c) } else { b });
            if best.0 != target {
                *acc += pr;
            }
            counts.pop();
            return;
        }
        for c in 0..=left {
            counts.push(c);
            rec(p, i + 1, left - c, counts, prob * p[i].powi(c as i32) / factorial(c), target, acc);
            counts.pop();
        }
    }
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|x| x as f64).product()
    }
    let mut acc = 0.0;
    rec(p, 0, r, &mut Vec::new(), factorial(r), target, &mut acc);
    acc
}

#[test]
fn noiseless_iterated_qva_block_errors() {
    let code = ConvCode::paper_code();
    // expected block-error rate of mode-of-7 over uniformly random messages
    let mut expected = 0.0;
    for msg in 0..16u32 {
        let bits: Vec<u8> = (0..4).rev().map(|i| ((msg >> i) & 1) as u8).collect();
        let rx = code.encode(&bits, EncoderState(0)).unwrap();
        let ps = PathSpace::from_code(&code, &rx, EncoderState(0)).unwrap();
        let p = amplify(&ps.phases(0.68), 3).probabilities();
        expected += exact_mode_failure(&p, ps.index_of_message(&bits).unwrap(), 7) / 16.0;
    }
    assert!(expected <= 0.05, "expected block-error rate {expected}");

    let blocks = 4000;
    let cfg = ExperimentConfig { trials: Some(7), ..decode_cfg(Mode::IteratedQva, 4, 0.0, blocks) };
    let out = cmd_decode(&cfg).unwrap();
    assert_eq!(out.record.config.omega, Some(0.68));
    assert_eq!(out.record.config.iterations, Some(3));
    let rate = out.record.summary["block_error_rate"].as_f64().unwrap();
    let sigma = (expected * (1.0 - expected) / blocks as f64).sqrt();
    assert!((rate - expected).abs() <= 4.0 * sigma, "rate {rate}, expected {expected}");
}

#[test]
fn decode_modes_and_records() {
    for mode in [Mode::ProbabilisticQva, Mode::AdaptiveQva] {
        let cfg = decode_cfg(mode, 4, 0.05, 60);
        let a = cmd_decode(&cfg).unwrap();
        let b = cmd_decode(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.record.block_seeds.len(), 60);
        // the record alone reproduces its table
        let text = serde_json::to_string(&a.record).unwrap();
        let again = cmd_decode(&ExperimentConfig::from_json_str(&text).unwrap()).unwrap();
        assert_eq!(again.csv, a.csv);
    }
    let prob = cmd_decode(&decode_cfg(Mode::ProbabilisticQva, 4, 0.1, 5)).unwrap();
    assert_eq!(prob.record.config.trials, Some(55));
    assert!(cmd_decode(&decode_cfg(Mode::OmegaSweep, 4, 0.1, 5)).is_err());
}

#[test]
fn verify_and_faults() {
    let clean = cmd_verify(&ExperimentConfig::default()).unwrap();
    assert!(clean.passed, "{}", clean.report);
    assert!(clean.report.lines().all(|l| l.contains("tolerance")));
    for fault in [Fault::DiffusionSign, Fault::PhaseConjugate] {
        let out = cmd_verify(&ExperimentConfig { inject_fault: Some(fault), ..Default::default() }).unwrap();
        assert!(!out.passed);
        assert!(out.report.contains("FAIL circuit-vs-path-amplification"), "{fault:?}");
    }
}

#[test]
fn circuit_command() {
    let out = cmd_circuit(&ExperimentConfig::default()).unwrap();
    assert!(out.passed);
    assert_eq!(out.csv.lines().count(), 16);
    assert_eq!(out.csv.lines().next().unwrap().split(',').count(), 32);
    assert_eq!(out.record.summary["gate_counts"][0]["counts"]["total"], 64);
    let other = ExperimentConfig { received: Some("10".into()), ..Default::default() };
    assert!(cmd_circuit(&other).unwrap().passed);
}
