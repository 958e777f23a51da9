use corrtree::friedrichs;
use corrtree::modespace::*;
use corrtree::renorm::{self, *};
use corrtree::treealg;
use corrtree::verify::SplitMix64;
use num_complex::Complex64 as C64;
use std::time::Instant;

fn main() {
    let grid = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
    let occ = OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap();
    let kernel = InteractionKernel::new(C64::new(0.7, 0.0), 0.35).unwrap();
    let table = renorm::counterterm_recursion(&kernel, &occ, 1, -1.0, 2, 4, 0.6, 1e-9).unwrap();
    let presets = WindowPresets::for_lines(2);
    let tree = renorm::chain_tree();
    let ord = tree.partial_order().unwrap();
    let sub = tree.subtree_at(&[0], &ord).unwrap();
    let mut rng = SplitMix64(0x5eed_c0de ^ 0x77);
    let diagrams: Vec<&renorm::CtEntry> = table.entries.values().filter(|e| e.diagram.tree.n == 2).collect();
    println!("{} chain diagrams", diagrams.len());
    let mut job = 0;
    for e in &diagrams {
        let n_ext = e.diagram.external_lines().len();
        for _ in 0..1 {
            let f = FProbe::plain(
                (0..n_ext).map(|_| rng.uniform(0.4, 0.9)).collect(),
                (0..n_ext).map(|_| rng.uniform(-0.3, 0.3)).collect(),
            );
            let psi = SProbe { factors: vec![
                SFactor::Exp { rate: rng.uniform(0.5, 2.0) },
                SFactor::Exp { rate: rng.uniform(0.5, 2.0) },
            ]};
            let t0 = Instant::now();
            let full = friedrichs::assemble_integrand(&e.diagram, &table.kernel, &table.occ, 1, -1.0).unwrap();
            let amp_full = renorm::pair_with_probe(&e.diagram, &full, &f, -1.0);
            let a = renorm::capped_probe_pairing(&amp_full, &presets, &psi, 30.0, 1e-8).unwrap();
            let dt_a = t0.elapsed();
            let t0 = Instant::now();
            let split = friedrichs::assemble_star_integrand(&e.diagram, &sub, &table.kernel, &table.occ, 1, -1.0).unwrap();
            let amp_split = renorm::pair_with_probe(&e.diagram, &split, &f, -1.0);
            let b = renorm::capped_probe_pairing(&amp_split, &presets, &psi, 30.0, 1e-8).unwrap();
            let dt_b = t0.elapsed();
            println!("job {job}: full {dt_a:?} split {dt_b:?} rel {:.2e}", (a-b).norm()/a.norm().max(1e-12));
            job += 1;
            
        }
    }
}
