use rbgame::discounted::*;
use rbgame::game::*;
use rbgame::lp::{solve_lp, stats};

fn main() {
    let text = std::fs::read_to_string("data/jamming.json").unwrap();
    let g = load_game(&text).unwrap();
    let cap = HorizonCap::default();
    let (lambda, tr) = (0.7, 3usize);
    let (_mu, nu) = approx_initial_regrets(&g, lambda, tr, cap).unwrap();
    let lp = build_discounted_dual_lp_p1(&g, lambda, tr + 1, &g.p0, &nu.values, cap).unwrap();
    println!("LP: {} vars, {} rows", lp.num_vars(), lp.num_constraints());
    let t0 = std::time::Instant::now();
    let s = solve_lp(&lp).unwrap();
    let (_, _, _, _, _, cp, _, _) = stats::snapshot();
    println!("cold solve: value={:.6} in {:?}, pivots={}", s.value, t0.elapsed(), cp);
}
