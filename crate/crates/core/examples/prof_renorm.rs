use corrtree::friedrichs;
use corrtree::modespace::*;
use corrtree::renorm::{self, *};
use num_complex::Complex64 as C64;
use std::time::Instant;

fn main() {
    let grid = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
    let occ = OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap();
    let kernel = InteractionKernel::new(C64::new(0.7, 0.0), 0.35).unwrap();
    let t0 = Instant::now();
    let table = renorm::counterterm_recursion(&kernel, &occ, 1, -1.0, 2, 4, 0.6, 1e-9).unwrap();
    println!("table build: {:?} ({} entries)", t0.elapsed(), table.entries.len());
    let presets = WindowPresets::for_lines(2);
    let e = table.entries.values().find(|e| e.diagram.tree.n == 2).unwrap();
    let n_ext = e.diagram.external_lines().len();
    let f = FProbe::plain(vec![0.6; n_ext], vec![0.0; n_ext]);
    let amp = table.paired(&e.diagram, &f).unwrap();
    let t0 = Instant::now();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..1000 {
        let tau = [0.5 + i as f64 * 0.03, 1.0 + i as f64 * 0.01];
        acc += amp.eval(&tau).unwrap();
    }
    println!("1000 amp evals: {:?} (acc {acc})", t0.elapsed());
    let psi = SProbe { factors: vec![SFactor::Exp { rate: 1.0 }, SFactor::Exp { rate: 1.0 }] };
    let t0 = Instant::now();
    let v = renorm::capped_probe_pairing(&amp, &presets, &psi, 40.0, 1e-9).unwrap();
    println!("capped 2D pairing tol 1e-9: {:?} = {v}", t0.elapsed());
    let t0 = Instant::now();
    let v = renorm::capped_probe_pairing(&amp, &presets, &psi, 40.0, 1e-7).unwrap();
    println!("capped 2D pairing tol 1e-7: {:?} = {v}", t0.elapsed());
}
