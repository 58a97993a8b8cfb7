use rbgame::discounted::*;
use rbgame::game::*;
use rbgame::sim::*;

fn main() {
    let text = std::fs::read_to_string("data/jamming.json").unwrap();
    let g = load_game(&text).unwrap();
    let cap = HorizonCap::default();
    let (lambda, tr) = (0.7, 3usize);

    let t0 = std::time::Instant::now();
    let a1 = make_discounted_agent_p1(&g, lambda, tr, cap).unwrap();
    let a2 = make_discounted_agent_p2(&g, lambda, tr, cap).unwrap();
    println!("agents built in {:?}", t0.elapsed());

    let spec = EpisodeSpec {
        episodes: 30,
        stages: 10,
        weights: PayoffWeights::Discounted { lambda },
        batches: 1,
    };
    let t0 = std::time::Instant::now();
    let (summary, _) = run_episodes(&g, &a1, &a2, &spec, 2024).unwrap();
    println!(
        "100 episodes x 10 stages: mean={:.4} std={:.4} min={:.4} max={:.4}  ({:?})",
        summary.mean, summary.std_dev, summary.min, summary.max, t0.elapsed()
    );
    let (cold, direct, repaired, failed, rp, cp, wm, cm) = rbgame::lp::stats::snapshot();
    println!("lp stats: cold={cold} warm_direct={direct} warm_repaired={repaired} repair_failed={failed} repair_pivots={rp} cold_pivots={cp} warm_ms={} cold_ms={}", wm / 1000, cm / 1000);
}
