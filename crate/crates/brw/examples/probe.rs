use brw::model::{normalize_boundary, FamilySpec};
use brw::rng::stream_rng;
use brw::spine::sample_spine_conditioned;
use brw::stats::weighted_mean_se;
use brw::walk::{barrier_weighted_expectation, estimate_renewal, ManyToOneLaw};

fn main() {
    let model = normalize_boundary(FamilySpec::BinaryGaussian).unwrap();
    let law = ManyToOneLaw::from_model(&model);
    let tbl = estimate_renewal(&law, &brw::walk::default_grid(10.0), 60_000, 4_000, 101).unwrap();
    let (alpha, n) = (2.0, 10);
    let g = |p: &[f64]| if p[10] <= 2.0 { 1.0 } else { 0.0 };
    for batch in [16usize, 64] {
        let mut rng = stream_rng(9);
        let mut vals = Vec::new();
        let mut ws = Vec::new();
        for _ in 0..40_000 {
            let s = sample_spine_conditioned(&model, &tbl, alpha, n, &mut rng, batch).unwrap();
            vals.push(g(&s.spine));
            ws.push(s.weight);
        }
        let (m, se, ess) = weighted_mean_se(&vals, &ws);
        println!("batch {batch}: weighted spine {m:.5} +- {se:.5} (ess {ess:.0})");
    }
    let (rhs, rhs_se) = barrier_weighted_expectation(&law, &tbl, alpha, n, |p| g(p), 2_000_000, 11);
    println!("weighted walk: {rhs:.5} +- {rhs_se:.5}");
}
