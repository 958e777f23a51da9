use corrtree::verify::*;
fn main() {
    let cfg = VerifyConfig::default();
    let which: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let c = match which {
        1 => c1_oracle_equivalence(&cfg),
        2 => c2_intertwining(&cfg),
        3 => c3_combinatorics(&cfg),
        4 => c4_propagator_table(&cfg),
        5 => c5_sector_identities(&cfg),
        6 => c6_locality(&cfg),
        7 => c7_consistency(&cfg),
        8 => c8_finiteness(&cfg),
        9 => c9_time_translation(&cfg),
        10 => c10_cluster(&cfg),
        11 => c11_reality_factorization(&cfg),
        _ => { for c in run_all(&cfg) { println!("{}", c.line()); } return; }
    };
    println!("{}", c.line());
}
