use dcma_core::codebook::paper_codebook;
use dcma_core::metrics::{mlsd, Alphabet, EnumPolicy, MetricContext};

fn main() {
    let cb = paper_codebook("5x10").unwrap();
    let a = Alphabet::qam4();

    // Weight-truncation ladder at the stated convention.
    let ctx = MetricContext::new(4.0, 0.001);
    for w in 1..=9 {
        let v = mlsd(&cb, &a, &ctx, EnumPolicy::MaxWeight(w), false).unwrap();
        println!("w<={w}: mlsd={v:.4}");
    }

    // N0 sweep with exact enumeration; log-base variants are rescalings.
    for n0 in [0.01, 0.001, 0.0001] {
        let ctx = MetricContext::new(4.0, n0);
        let t = std::time::Instant::now();
        let v = mlsd(&cb, &a, &ctx, EnumPolicy::Exact, false).unwrap();
        println!(
            "exact N0={n0}: ln={:.4} log10={:.4} log2={:.4}  ({:.0}s)",
            v,
            v / std::f64::consts::LN_10,
            v / std::f64::consts::LN_2,
            t.elapsed().as_secs_f64()
        );
    }
}
