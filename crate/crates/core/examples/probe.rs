use chainbell_core::bell::*;
use chainbell_core::npa::*;
use chainbell_core::qstate::TwoQubitState;
use chainbell_core::sdp::SolveOptions;
use std::time::Instant;

fn main() {
    let opts = SolveOptions::default();
    let s3 = Scenario::chained(3).unwrap();
    let c3 = BellCoefficients::chained(3).unwrap();
    let i_max = 3.0 * 3.0_f64.sqrt();

    let t = Instant::now();
    let cert = max_prob_given_violation(&s3, &c3, i_max, (0, 0), NpaLevel::Q2, &opts).unwrap();
    println!(
        "viol Q2 n=3 I=max: p_guess={:.8} H={:.5} status={:?} gap={:.2e}  [{:?}]  expected p={:.8}",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, cert.gap, t.elapsed(),
        (1.0 + (std::f64::consts::PI / 6.0).cos()) / 4.0
    );

    let t = Instant::now();
    let cert = max_prob_given_violation(&s3, &c3, i_max, (0, 0), NpaLevel::OnePlusAb, &opts).unwrap();
    println!(
        "viol 1+AB n=3 I=max target(0,0): p_guess={:.8} H={:.5} status={:?} [{:?}]",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, t.elapsed()
    );

    let t = Instant::now();
    let cert = max_prob_given_violation(&s3, &c3, i_max, (0, 1), NpaLevel::OnePlusAb, &opts).unwrap();
    println!(
        "viol 1+AB n=3 I=max target(0,1) unused: p_guess={:.8} H={:.5} status={:?} [{:?}]",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, t.elapsed()
    );

    let b = TwoQubitState::singlet().bloch();
    let ms = canonical_measurements(3).unwrap();
    let ideal = behavior_from_state(&b, &ms).unwrap();

    let t = Instant::now();
    let cert = max_guess_full_statistics(&s3, &ideal, (0, 1), NpaLevel::OnePlusAb, &opts).unwrap();
    println!(
        "full 1+AB n=3 ideal target(0,1): p_guess={:.8} H={:.5} status={:?} gap={:.2e} [{:?}]",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, cert.gap, t.elapsed()
    );

    let t = Instant::now();
    let cert = max_guess_full_statistics(&s3, &ideal, (0, 1), NpaLevel::Q2, &opts).unwrap();
    println!(
        "full Q2 n=3 ideal target(0,1): p_guess={:.8} H={:.5} status={:?} gap={:.2e} [{:?}]",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, cert.gap, t.elapsed()
    );

    let noisy = noisy_behavior(&ideal, 0.9).unwrap();
    let t = Instant::now();
    let cert = max_guess_full_statistics(&s3, &noisy, (0, 0), NpaLevel::Q2, &opts).unwrap();
    println!(
        "full Q2 n=3 p=0.9 target(0,0): p_guess={:.8} H={:.5} status={:?} gap={:.2e} [{:?}]",
        cert.p_guess, cert.min_entropy_bits, cert.solver_status, cert.gap, t.elapsed()
    );

    // Threshold probes at Q2.
    for p in [0.769, 0.775] {
        let t = Instant::now();
        let cert =
            max_prob_given_violation(&s3, &c3, p * i_max, (0, 0), NpaLevel::Q2, &opts).unwrap();
        println!(
            "viol Q2 n=3 p={p}: p_guess={:.9} H={:.6} status={:?} [{:?}]",
            cert.p_guess, cert.min_entropy_bits, cert.solver_status, t.elapsed()
        );
    }
    let s2 = Scenario::chained(2).unwrap();
    let c2 = BellCoefficients::chsh();
    for p in [0.705, 0.710] {
        let cert = max_prob_given_violation(
            &s2, &c2, p * 2.0 * 2.0_f64.sqrt(), (0, 0), NpaLevel::Q2, &opts).unwrap();
        println!(
            "viol Q2 CHSH p={p}: p_guess={:.9} H={:.6} status={:?}",
            cert.p_guess, cert.min_entropy_bits, cert.solver_status
        );
    }

    // n=4, n=5 at 1+AB near max, used for fig3.
    for n in [4usize, 5] {
        let sn = Scenario::chained(n).unwrap();
        let cn = BellCoefficients::chained(n).unwrap();
        let imax = tsirelson_bound(n).unwrap();
        let t = Instant::now();
        let best: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .map(|(x, y)| {
                let c = max_prob_given_violation(&sn, &cn, imax, (x, y), NpaLevel::OnePlusAb, &opts)
                    .unwrap();
                (x, y, c.min_entropy_bits)
            })
            .collect();
        let (bx, by, bh) = best
            .iter()
            .cloned()
            .fold((0, 0, f64::NEG_INFINITY), |acc, v| if v.2 > acc.2 { v } else { acc });
        println!("n={n} 1+AB best setting ({bx},{by}) H={bh:.5} [{:?}] (scan of {})", t.elapsed(), best.len());
    }
}
