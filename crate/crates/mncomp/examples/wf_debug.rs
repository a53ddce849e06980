use mncomp::baselines::Scheme;
use mncomp::scenario::builtin_default;
use std::time::Instant;

fn main() {
    let config = builtin_default();
    for scheme in [Scheme::FullCesp, Scheme::RelaxRound, Scheme::EpaCespSa, Scheme::CespPaGsa] {
        let start = Instant::now();
        let run = mncomp::harness::run_single(&config, scheme, 1).unwrap();
        println!(
            "{}: {:.2}s, iters {}, status {}, sum_rate {:.2}, r_out {:.3}, l_out {:.3}",
            scheme,
            start.elapsed().as_secs_f64(),
            run.iterations,
            run.status,
            run.sum_rate,
            run.rate_outage,
            run.latency_outage
        );
        println!(
            "  trace {:?}",
            run.trace.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
}
