//! Friedrichs diagrams over a correlation tree: the contraction graphs the
//! interaction-splitting recursion generates, their oscillatory-Gaussian
//! amplitudes, quotient diagrams with absorbed delays, and the structural
//! side of counterterm insertion.
//!
//! Each interaction vertex carries four legs (two creators, two
//! annihilators) on one branch; graph lines pair a leg at a vertex with a
//! leg strictly below it, or escape to the top. The amplitude is a product
//! of vertex kernels, per-line free phases along the tree path between the
//! line's ends, and two-point pairing factors.

use crate::gausscalc::GaussianIntegrand;
use crate::modespace::{
    pairing, Branch, Flavor, InteractionKernel, ModeGrid, OccupationField, OccupationSpec,
    PairingValue, Species,
};
use crate::corrdyn::{Kernel as NpKernel, NormalPolynomial};
use crate::treealg::{DirectedTree, Line};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("tree must be right and shootless")]
    BadTree,
    #[error("occupation must be vacuum or Gaussian for closed-form amplitudes")]
    BadOccupation,
    #[error("line {0} is not an internal tree line")]
    NotTreeLine(usize),
    #[error("subtree is not a right subtree of this diagram's tree")]
    BadSubtree,
}

/// A leg of an interaction vertex: legs 0 and 1 create, legs 2 and 3
/// annihilate (in the branch of the vertex).
pub fn leg_flavor(leg: usize) -> Flavor {
    if leg < 2 {
        Flavor::Create
    } else {
        Flavor::Annihilate
    }
}

/// One contraction or external line of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphLine {
    /// Upper end: None is the top vertex; Some((vertex, leg)) otherwise.
    pub upper: Option<(usize, usize)>,
    /// Lower end (vertex, leg).
    pub lower: (usize, usize),
}

/// A Friedrichs diagram: tree, per-vertex branch signs, contraction graph,
/// per-(vertex, line) delay offsets, and the combinatorial multiplicity of
/// the underlying leg assignments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FriedrichsDiagram {
    pub tree: DirectedTree,
    pub branch: Vec<Branch>,
    pub lines: Vec<GraphLine>,
    /// Delay offsets h[line][vertex]; zero on freshly enumerated diagrams,
    /// populated by quotienting.
    pub h: Vec<Vec<f64>>,
    pub multiplicity: f64,
}

impl FriedrichsDiagram {
    pub fn species_of_leg(&self, vertex: usize, leg: usize) -> Species {
        Species::from_parts(leg_flavor(leg), self.branch[vertex])
    }

    /// Orientation sign of a line: the free-phase sign of its lower leg.
    pub fn orientation(&self, line: &GraphLine) -> f64 {
        let (v, leg) = line.lower;
        self.species_of_leg(v, leg).phase_sign()
    }

    pub fn external_lines(&self) -> Vec<usize> {
        (0..self.lines.len())
            .filter(|&i| self.lines[i].upper.is_none())
            .collect()
    }

    pub fn internal_lines(&self) -> Vec<usize> {
        (0..self.lines.len())
            .filter(|&i| self.lines[i].upper.is_some())
            .collect()
    }

    /// Species of the surviving generator on an external line.
    pub fn external_species(&self, line: usize) -> Species {
        let (v, leg) = self.lines[line].lower;
        self.species_of_leg(v, leg)
    }

    /// Tree delay lines on the increasing path from the line's lower end to
    /// its upper end (through the root line for external lines).
    pub fn path_lines(&self, line: &GraphLine) -> Vec<usize> {
        let lower_path = self.tree.root_path(line.lower.0);
        match line.upper {
            None => lower_path,
            Some((uv, _)) => {
                let upper_path = self.tree.root_path(uv);
                lower_path
                    .into_iter()
                    .filter(|id| !upper_path.contains(id))
                    .collect()
            }
        }
    }

    /// Vertices strictly between the two ends of a line (candidates for
    /// delay offsets).
    pub fn interior_vertices(&self, line: &GraphLine) -> Vec<usize> {
        let ord = self.tree.partial_order().expect("right tree");
        let lo = line.lower.0;
        (0..self.tree.n)
            .filter(|&v| {
                let above_lower = ord[lo][v];
                let below_upper = match line.upper {
                    None => true,
                    Some((uv, _)) => ord[v][uv],
                };
                above_lower && below_upper
            })
            .collect()
    }

    /// Stable content hash of the canonical form.
    pub fn content_id(&self) -> u64 {
        let blob = serde_json::to_vec(&(
            &self.tree,
            &self.branch,
            &self.lines,
            &self.h,
        ))
        .expect("serializable");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in blob {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }

    /// The number of graph lines whose tree path contains each tree delay
    /// line; the subtraction path keeps diagrams where this is at least 3
    /// everywhere.
    pub fn crossing_counts(&self) -> Vec<(usize, usize)> {
        let mut counts: Vec<(usize, usize)> = self
            .tree
            .delay_lines()
            .into_iter()
            .map(|id| (id, 0))
            .collect();
        for line in &self.lines {
            let path = self.path_lines(line);
            for (id, c) in counts.iter_mut() {
                if path.contains(id) {
                    *c += 1;
                }
            }
        }
        counts
    }

    pub fn is_power_counting_safe(&self) -> bool {
        self.crossing_counts().iter().all(|&(_, c)| c >= 3)
    }

    /// Restriction to a right subtree: kept lines are those whose lower end
    /// lies in the subtree; lines leaving the subtree upward become
    /// external.
    pub fn restrict(&self, sub: &crate::treealg::RightSubtree) -> FriedrichsDiagram {
        let keep: Vec<Option<usize>> = {
            let mut map = vec![None; self.tree.n];
            for (new, &old) in sub.vertex_map.iter().enumerate() {
                map[old] = Some(new);
            }
            map
        };
        let mut lines = Vec::new();
        for l in &self.lines {
            if let Some(new_lower) = keep[l.lower.0] {
                let upper = match l.upper {
                    Some((uv, leg)) => keep[uv].map(|nv| (nv, leg)),
                    None => None,
                };
                lines.push(GraphLine {
                    upper,
                    lower: (new_lower, l.lower.1),
                });
            }
        }
        lines.sort();
        let branch: Vec<Branch> = sub.vertex_map.iter().map(|&v| self.branch[v]).collect();
        let h = vec![vec![0.0; sub.tree.n]; lines.len()];
        FriedrichsDiagram {
            tree: sub.tree.clone(),
            branch,
            lines,
            h,
            multiplicity: self.multiplicity,
        }
    }
}

/// All Friedrichs diagrams of a shootless right tree with two-body
/// vertices, grouped into canonical forms with multiplicities. Diagrams
/// whose pairing factors vanish identically in the given occupation are
/// dropped.
pub fn enumerate_diagrams(
    tree: &DirectedTree,
    occ: &OccupationField,
) -> Result<Vec<FriedrichsDiagram>, DiagramError> {
    tree.validate_right().map_err(|_| DiagramError::BadTree)?;
    if tree.n_shoots() != 0 {
        return Err(DiagramError::BadTree);
    }
    let n = tree.n;
    let ord = tree.partial_order().map_err(|_| DiagramError::BadTree)?;
    let vacuum = matches!(occ.spec, OccupationSpec::Vacuum);
    // Vertices of the subtree under each child line, for the coupling rule.
    let children: Vec<(usize, usize, Vec<usize>)> = tree
        .internal_lines()
        .map(|(id, upper, lower)| {
            let below: Vec<usize> = (0..n).filter(|&u| u == lower || ord[u][lower]).collect();
            (id, upper, below)
        })
        .collect();
    let mut grouped: std::collections::BTreeMap<String, (FriedrichsDiagram, f64)> =
        std::collections::BTreeMap::new();
    // Branch assignment odometer.
    let mut branch_idx = 0usize;
    while branch_idx < (1 << n) {
        let branch: Vec<Branch> = (0..n)
            .map(|v| {
                if branch_idx >> v & 1 == 0 {
                    Branch::Minus
                } else {
                    Branch::Plus
                }
            })
            .collect();
        // Enumerate matchings over legs: process vertices in increasing
        // label order of (vertex, leg) pairs; each leg either stays free
        // (external) or pairs with a free leg at a strictly lower vertex.
        let legs: Vec<(usize, usize)> = (0..n)
            .flat_map(|v| (0..4).map(move |leg| (v, leg)))
            .collect();
        let species =
            |v: usize, leg: usize| Species::from_parts(leg_flavor(leg), branch[v]);
        let mut used = vec![false; legs.len()];
        let mut pairs: Vec<((usize, usize), (usize, usize))> = Vec::new();
        // Depth-first over legs: each unused leg either stays external or
        // pairs with a later unused leg at a comparable vertex; the higher
        // vertex supplies the left factor of the contraction.
        fn go(
            idx: usize,
            legs: &[(usize, usize)],
            used: &mut Vec<bool>,
            pairs: &mut Vec<((usize, usize), (usize, usize))>,
            ord: &[Vec<bool>],
            vacuum: bool,
            species: &dyn Fn(usize, usize) -> Species,
            emit: &mut dyn FnMut(&[((usize, usize), (usize, usize))]),
        ) {
            if idx == legs.len() {
                emit(pairs);
                return;
            }
            if used[idx] {
                go(idx + 1, legs, used, pairs, ord, vacuum, species, emit);
                return;
            }
            let (v, leg) = legs[idx];
            used[idx] = true;
            // Stay external.
            go(idx + 1, legs, used, pairs, ord, vacuum, species, emit);
            // Pair with a later unused comparable leg.
            for (jdx, &(u, uleg)) in legs.iter().enumerate().skip(idx + 1) {
                if used[jdx] {
                    continue;
                }
                let (up, lo) = if ord[u][v] {
                    ((v, leg), (u, uleg))
                } else if ord[v][u] {
                    ((u, uleg), (v, leg))
                } else {
                    continue;
                };
                let val = pairing(species(up.0, up.1), species(lo.0, lo.1));
                if val == PairingValue::Zero {
                    continue;
                }
                if vacuum && val == PairingValue::N {
                    continue;
                }
                used[jdx] = true;
                pairs.push((up, lo));
                go(idx + 1, legs, used, pairs, ord, vacuum, species, emit);
                pairs.pop();
                used[jdx] = false;
            }
            used[idx] = false;
        }
        let mut assignments: Vec<Vec<((usize, usize), (usize, usize))>> = Vec::new();
        let mut emit_target = |pairs: &[((usize, usize), (usize, usize))]| {
            assignments.push(pairs.to_vec());
        };
        go(
            0,
            &legs,
            &mut used,
            &mut pairs,
            &ord,
            vacuum,
            &species,
            &mut emit_target,
        );
        for pairs in assignments {
            // Coupling rule.
            let coupled_all = children.iter().all(|(_, upper, below)| {
                pairs
                    .iter()
                    .any(|&((v, _), (u, _))| v == *upper && below.contains(&u))
            });
            if !coupled_all {
                continue;
            }
            let mut lines: Vec<GraphLine> = pairs
                .iter()
                .map(|&(up, lo)| GraphLine {
                    upper: Some(up),
                    lower: lo,
                })
                .collect();
            let paired: Vec<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            for v in 0..n {
                for leg in 0..4 {
                    if !paired.contains(&(v, leg)) {
                        lines.push(GraphLine {
                            upper: None,
                            lower: (v, leg),
                        });
                    }
                }
            }
            lines.sort();
            // Canonical form: within each vertex, legs of the same flavor
            // are exchangeable; relabel legs so line endpoints are sorted.
            let canon_lines = canonicalize_legs(n, &lines);
            let diagram = FriedrichsDiagram {
                tree: tree.clone(),
                branch: branch.clone(),
                lines: canon_lines,
                h: vec![vec![0.0; n]; 4 * n],
                multiplicity: 1.0,
            };
            let key = serde_json::to_string(&(&diagram.branch, &diagram.lines)).unwrap();
            grouped
                .entry(key)
                .and_modify(|(_, m)| *m += 1.0)
                .or_insert((diagram, 1.0));
        }
        branch_idx += 1;
    }
    let mut out: Vec<FriedrichsDiagram> = grouped
        .into_values()
        .map(|(mut d, m)| {
            d.multiplicity = m;
            d.h = vec![vec![0.0; d.tree.n]; d.lines.len()];
            d
        })
        .collect();
    out.sort_by_key(|d| d.content_id());
    Ok(out)
}

/// Relabel same-flavor legs within each vertex so the line list is in a
/// canonical order (the vertex kernels are symmetric under these swaps).
fn canonicalize_legs(n: usize, lines: &[GraphLine]) -> Vec<GraphLine> {
    // For each vertex and flavor pair (legs {0,1} and {2,3}), try both
    // labelings and keep the lexicographically smaller line list.
    let mut best: Vec<GraphLine> = lines.to_vec();
    best.sort();
    let mut swaps: Vec<(usize, usize, usize)> = Vec::new();
    for v in 0..n {
        swaps.push((v, 0, 1));
        swaps.push((v, 2, 3));
    }
    // Greedy: apply each swap if it lowers the canonical order, repeat to
    // fixpoint (the swap group is small and commutative enough for this).
    let mut improved = true;
    while improved {
        improved = false;
        for &(v, a, b) in &swaps {
            let mut candidate: Vec<GraphLine> = best
                .iter()
                .map(|l| {
                    let map_leg = |(vv, leg): (usize, usize)| {
                        if vv == v && leg == a {
                            (vv, b)
                        } else if vv == v && leg == b {
                            (vv, a)
                        } else {
                            (vv, leg)
                        }
                    };
                    GraphLine {
                        upper: l.upper.map(map_leg),
                        lower: map_leg(l.lower),
                    }
                })
                .collect();
            candidate.sort();
            if candidate < best {
                best = candidate;
                improved = true;
            }
        }
    }
    best
}

/// Gaussian pieces of a pairing factor: value(k) = sum of c * exp(-b k^2).
fn pairing_gauss_terms(
    val: PairingValue,
    occ: &OccupationField,
) -> Result<Vec<(f64, f64)>, DiagramError> {
    let n_terms = occ
        .gaussian_terms()
        .ok_or(DiagramError::BadOccupation)?;
    let mut out = Vec::new();
    match val {
        PairingValue::Zero => {}
        PairingValue::N => out.extend(n_terms),
        PairingValue::OnePlusN => {
            out.push((1.0, 0.0));
            out.extend(n_terms);
        }
    }
    Ok(out)
}

/// Assemble the closed-form amplitude integrand of a diagram: one momentum
/// variable per graph line (externals marked), vertex kernels with
/// conservation rows, per-line free phases along tree paths plus absorbed
/// offsets, and two-point pairing factors on contraction lines.
pub fn assemble_integrand(
    diagram: &FriedrichsDiagram,
    kernel: &InteractionKernel,
    occ: &OccupationField,
    grid_dim: usize,
    mu: f64,
) -> Result<GaussianIntegrand, DiagramError> {
    let paths: Vec<Vec<usize>> = diagram
        .lines
        .iter()
        .map(|line| diagram.path_lines(line))
        .collect();
    assemble_with_paths(diagram, kernel, occ, grid_dim, mu, &paths)
}

/// Evaluate a diagram on a mode grid into a normal polynomial over its
/// external species: the kernel at each external mode tuple is the grid sum
/// of the integrand (Kronecker-delta conservation).
pub fn diagram_normal_polynomial(
    diagram: &FriedrichsDiagram,
    kernel: &InteractionKernel,
    occ: &OccupationField,
    grid: &ModeGrid,
    tau: &[f64],
) -> Result<NormalPolynomial, DiagramError> {
    let g = assemble_integrand(diagram, kernel, occ, grid.dim, grid.mu)?;
    let ext = diagram.external_lines();
    let species: Vec<Species> = ext.iter().map(|&i| diagram.external_species(i)).collect();
    let mut np = NormalPolynomial::zero(grid.len());
    let mut kernel_data = NpKernel::zeros(ext.len(), grid.len());
    let mut tuple = vec![0usize; ext.len()];
    loop {
        let assignment: Vec<(usize, Vec<f64>)> = ext
            .iter()
            .zip(tuple.iter())
            .map(|(&var, &mode)| (var, grid.modes[mode].clone()))
            .collect();
        // Account for the discretization: each vertex conservation delta on
        // the grid is Kronecker/weight^d, and each external integration in
        // the normal-polynomial convention carries one weight factor that
        // the kernel must not double count.
        let value = g.grid_sum(grid, tau, &assignment);
        kernel_data.set(&tuple, value);
        let mut i = 0;
        loop {
            if i == ext.len() {
                if !kernel_data.is_zero() {
                    np.insert_monomial(&species, &kernel_data);
                }
                np.prune(0.0);
                return Ok(np);
            }
            tuple[i] += 1;
            if tuple[i] < grid.len() {
                break;
            }
            tuple[i] = 0;
            i += 1;
        }
        if ext.is_empty() {
            if !kernel_data.is_zero() {
                np.insert_monomial(&species, &kernel_data);
            }
            np.prune(0.0);
            return Ok(np);
        }
    }
}

/// Contract the tree lines in `contract` at the given absorbed delays: the
/// quotient diagram lives on the contracted tree, keeps all graph lines
/// (loops included), and stores the absorbed phases in the offset table.
pub fn quotient_diagram(
    diagram: &FriedrichsDiagram,
    contract: &[usize],
    tau: &[f64],
) -> Result<FriedrichsDiagram, DiagramError> {
    for &id in contract {
        if !matches!(diagram.tree.lines.get(id), Some(Line::Internal { .. })) {
            return Err(DiagramError::NotTreeLine(id));
        }
    }
    let q = diagram
        .tree
        .quotient(contract)
        .map_err(|_| DiagramError::NotTreeLine(usize::MAX))?;
    // New offsets: for each graph line, fold old offsets of merged vertices
    // plus the absorbed delays of contracted tree lines on its path.
    let mut new_h = vec![vec![0.0; q.tree.n]; diagram.lines.len()];
    let mut new_lines = Vec::with_capacity(diagram.lines.len());
    for (i, line) in diagram.lines.iter().enumerate() {
        let path = diagram.path_lines(line);
        // Old interior offsets migrate to the merged vertices.
        for v in diagram.interior_vertices(line) {
            new_h[i][q.component_of[v]] += diagram.h[i][v];
        }
        for &id in contract {
            if path.contains(&id) {
                // The absorbed delay attaches to the merged vertex that
                // swallowed this tree line.
                if let Line::Internal { upper, .. } = diagram.tree.lines[id] {
                    new_h[i][q.component_of[upper]] += tau[id];
                }
            }
        }
        new_lines.push(GraphLine {
            upper: line
                .upper
                .map(|(uv, leg)| (q.component_of[uv], leg)),
            lower: (q.component_of[line.lower.0], line.lower.1),
        });
    }
    let mut branch = vec![Branch::Minus; q.tree.n];
    for v in 0..diagram.tree.n {
        branch[q.component_of[v]] = diagram.branch[v];
    }
    Ok(FriedrichsDiagram {
        tree: q.tree,
        branch,
        lines: new_lines,
        h: new_h,
        multiplicity: diagram.multiplicity,
    })
}

/// The branch-conjugate diagram: every vertex branch flipped (the kernel
/// conjugation happens in the amplitude assembly through the vertex
/// coefficients).
pub fn star_diagram(diagram: &FriedrichsDiagram) -> FriedrichsDiagram {
    let mut d = diagram.clone();
    for b in d.branch.iter_mut() {
        *b = b.flip();
    }
    // Restore the canonical leg labeling for stable identity.
    d.lines = canonicalize_legs(d.tree.n, &d.lines);
    d
}

/// Map each line of a right subtree back to the line id of the parent tree
/// it came from (internal lines by endpoints, root lines by provenance).
fn subtree_line_provenance(
    parent: &DirectedTree,
    sub: &crate::treealg::RightSubtree,
) -> Vec<Option<usize>> {
    let mut out = vec![None; sub.tree.lines.len()];
    for (sid, line) in sub.tree.lines.iter().enumerate() {
        match *line {
            Line::Internal { upper, lower } => {
                let (pu, pl) = (sub.vertex_map[upper], sub.vertex_map[lower]);
                out[sid] = parent
                    .lines
                    .iter()
                    .position(|l| matches!(*l, Line::Internal { upper: u, lower: w } if u == pu && w == pl));
            }
            Line::Root { vertex } => {
                out[sid] = sub
                    .root_provenance
                    .iter()
                    .find(|&&(v, _)| v == vertex)
                    .and_then(|&(_, p)| p);
            }
            Line::Shoot { .. } => {}
        }
    }
    out
}

/// Assemble the amplitude with the counterterm-insertion bookkeeping for a
/// right subtree: lines rooted inside the subtree charge their free phases
/// through the subtree's own path structure (the restriction amplitude),
/// every other phase comes from the parent-tree paths with subtree lines
/// removed. The union must reproduce the plain assembly; evaluating both
/// ways checks the primed-set algebra of the insertion formula.
pub fn assemble_star_integrand(
    diagram: &FriedrichsDiagram,
    sub: &crate::treealg::RightSubtree,
    kernel: &InteractionKernel,
    occ: &OccupationField,
    grid_dim: usize,
    mu: f64,
) -> Result<GaussianIntegrand, DiagramError> {
    let restricted = diagram.restrict(sub);
    let provenance = subtree_line_provenance(&diagram.tree, sub);
    // Lines of the parent tree owned by the subtree (internal or root).
    let owned: Vec<usize> = provenance.iter().flatten().copied().collect();
    // Map parent vertex -> restricted vertex.
    let mut to_sub = vec![None; diagram.tree.n];
    for (new, &old) in sub.vertex_map.iter().enumerate() {
        to_sub[old] = Some(new);
    }
    // Per parent graph line, the delay path in parent line ids assembled
    // from the split bookkeeping.
    let mut split_paths: Vec<Vec<usize>> = Vec::with_capacity(diagram.lines.len());
    for line in &diagram.lines {
        let mut path: Vec<usize> = Vec::new();
        // Inner contribution: the restricted diagram's own path for the
        // corresponding restricted line, mapped back to parent ids.
        if let Some(sub_lower) = to_sub[line.lower.0] {
            let sub_line = crate::friedrichs::GraphLine {
                upper: match line.upper {
                    Some((uv, leg)) => to_sub[uv].map(|nv| (nv, leg)),
                    None => None,
                },
                lower: (sub_lower, line.lower.1),
            };
            for sid in restricted.path_lines(&sub_line) {
                if let Some(pid) = provenance[sid] {
                    path.push(pid);
                }
            }
        }
        // Outer contribution: parent path with subtree-owned lines removed,
        // truncated below the subtree boundary for lines that start inside.
        let full = diagram.path_lines(line);
        for id in full {
            if !owned.contains(&id) && !path.contains(&id) {
                // Only lines above the subtree boundary survive for inner
                // starts; for outer starts this is the whole filtered path.
                path.push(id);
            }
        }
        path.sort_unstable();
        split_paths.push(path);
    }
    assemble_with_paths(diagram, kernel, occ, grid_dim, mu, &split_paths)
}

/// Shared assembly body with explicit per-line delay paths.
fn assemble_with_paths(
    diagram: &FriedrichsDiagram,
    kernel: &InteractionKernel,
    occ: &OccupationField,
    grid_dim: usize,
    mu: f64,
    paths: &[Vec<usize>],
) -> Result<GaussianIntegrand, DiagramError> {
    let n_lines_tau = diagram.tree.lines.len();
    let nv = diagram.lines.len();
    let mut g = GaussianIntegrand::new(grid_dim, nv, n_lines_tau);
    for (i, line) in diagram.lines.iter().enumerate() {
        g.internal[i] = line.upper.is_some();
    }
    for v in 0..diagram.tree.n {
        let mut row = vec![0.0; nv];
        for (i, line) in diagram.lines.iter().enumerate() {
            if line.lower.0 == v {
                row[i] += leg_flavor(line.lower.1).sign() as f64;
            }
            if let Some((uv, uleg)) = line.upper {
                if uv == v {
                    row[i] += leg_flavor(uleg).sign() as f64;
                }
            }
        }
        g.constraints.push(row);
    }
    let mut coeff = C64::new(1.0, 0.0);
    for v in 0..diagram.tree.n {
        coeff *= match diagram.branch[v] {
            Branch::Minus => C64::new(0.0, -1.0) * kernel.amplitude,
            Branch::Plus => C64::new(0.0, 1.0) * kernel.amplitude.conj(),
        };
    }
    coeff *= diagram.multiplicity;
    let mut base = g.blank_term(coeff);
    for (i, line) in diagram.lines.iter().enumerate() {
        let mut width = kernel.width;
        if line.upper.is_some() {
            width += kernel.width;
        }
        base.q[i][i].add_base(C64::new(-width, 0.0));
        let or = diagram.orientation(line);
        for &id in &paths[i] {
            base.q[i][i].add_itau(id, 0.5 * or);
            base.c0.add_itau(id, -mu * or);
        }
        let mut h_sum = 0.0;
        for v in diagram.interior_vertices(line) {
            h_sum += diagram.h[i][v];
        }
        if h_sum != 0.0 {
            base.q[i][i].add_base(C64::new(0.0, 0.5 * or * h_sum));
            base.c0.add_base(C64::new(0.0, -mu * or * h_sum));
        }
    }
    let mut terms = vec![base];
    for (i, line) in diagram.lines.iter().enumerate() {
        let Some((uv, uleg)) = line.upper else {
            continue;
        };
        let up_species = diagram.species_of_leg(uv, uleg);
        let lo_species = diagram.external_species(i);
        let val = pairing(up_species, lo_species);
        let pieces = pairing_gauss_terms(val, occ)?;
        let mut next = Vec::with_capacity(terms.len() * pieces.len());
        for t in &terms {
            for &(c, b) in &pieces {
                let mut t2 = t.clone();
                t2.coeff *= c;
                if b != 0.0 {
                    t2.q[i][i].add_base(C64::new(-b, 0.0));
                }
                next.push(t2);
            }
        }
        terms = next;
    }
    g.terms = terms;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrdyn::{interaction_normal_form, tree_operator, CorrelationTree, CorrelationVector, WickContext};

    fn setup_vacuum() -> (ModeGrid, OccupationField, InteractionKernel) {
        let grid = ModeGrid::build(1, 3, 1.0, -1.0).unwrap();
        let occ = OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap();
        let kernel = InteractionKernel::new(C64::new(0.8, 0.0), 0.3).unwrap();
        (grid, occ, kernel)
    }

    fn one_vertex_tree() -> DirectedTree {
        DirectedTree::new(1, vec![Line::Root { vertex: 0 }])
    }

    fn chain_tree() -> DirectedTree {
        DirectedTree::new(
            2,
            vec![
                Line::Root { vertex: 1 },
                Line::Internal { upper: 1, lower: 0 },
            ],
        )
    }

    #[test]
    fn one_vertex_diagram_count_matches_split() {
        let (_, occ, _) = setup_vacuum();
        let ds = enumerate_diagrams(&one_vertex_tree(), &occ).unwrap();
        // One diagram per branch sign, each with four external legs.
        assert_eq!(ds.len(), 2);
        for d in &ds {
            assert_eq!(d.external_lines().len(), 4);
            assert_eq!(d.multiplicity, 1.0);
        }
    }

    #[test]
    fn chain_diagrams_cross_the_tree_line() {
        let (_, occ, _) = setup_vacuum();
        let ds = enumerate_diagrams(&chain_tree(), &occ).unwrap();
        assert!(!ds.is_empty());
        for d in &ds {
            let counts = d.crossing_counts();
            let internal_id = d
                .tree
                .internal_lines()
                .map(|(id, _, _)| id)
                .next()
                .unwrap();
            let crossing = counts.iter().find(|&&(id, _)| id == internal_id).unwrap();
            assert!(crossing.1 >= 1, "every diagram crosses the tree line");
            // Crossings = contraction lines plus externals escaping from
            // the lower vertex.
            let ext_below = d
                .external_lines()
                .iter()
                .filter(|&&i| d.lines[i].lower.0 == 0)
                .count();
            assert_eq!(d.internal_lines().len() + ext_below, crossing.1);
        }
    }

    #[test]
    fn star_conjugation_maps_diagram_set_to_itself() {
        let (_, occ, _) = setup_vacuum();
        let ds = enumerate_diagrams(&chain_tree(), &occ).unwrap();
        // Flipping every branch maps the set onto itself with equal
        // multiplicities.
        for d in &ds {
            let flipped: Vec<Branch> = d.branch.iter().map(|b| b.flip()).collect();
            let found = ds.iter().any(|e| {
                e.branch == flipped
                    && e.lines.len() == d.lines.len()
                    && (e.multiplicity - d.multiplicity).abs() < 1e-12
            });
            assert!(found, "missing star partner");
        }
    }

    #[test]
    fn resummation_matches_tree_operator_one_vertex() {
        let (grid, occ, kernel) = setup_vacuum();
        let ctx = WickContext::new(&grid, &occ);
        let lint = interaction_normal_form(&grid, &kernel, &ctx);
        let tree = one_vertex_tree();
        for tau1 in [0.0, 0.4, 1.3] {
            let ct = CorrelationTree::von_neumann(tree.clone(), vec![tau1]).unwrap();
            // Diagram amplitudes carry the observation-time-zero phases.
            let out = tree_operator(&ct, 0.0, &[], &lint, &ctx).unwrap();
            let want = CorrelationVector::single(out).flatten();
            let mut got = NormalPolynomial::zero(grid.len());
            for d in enumerate_diagrams(&tree, &occ).unwrap() {
                let np = diagram_normal_polynomial(&d, &kernel, &occ, &grid, &[tau1, 0.0])
                    .unwrap();
                got.add_assign(&np);
            }
            let mut diff = got.clone();
            diff.sub_assign(&want);
            assert!(
                diff.max_abs() < 1e-12 * want.max_abs().max(1.0),
                "tau={tau1}: diff {:.3e}",
                diff.max_abs()
            );
        }
    }

    #[test]
    fn resummation_matches_tree_operator_chain() {
        let (grid, occ, kernel) = setup_vacuum();
        let ctx = WickContext::new(&grid, &occ);
        let lint = interaction_normal_form(&grid, &kernel, &ctx);
        let tree = chain_tree();
        // Random-ish delay points.
        let points = [
            (0.7, 0.25),
            (1.1, 0.6),
            (0.05, 0.9),
            (1.9, 0.01),
        ];
        for &(tau_root, tau_int) in &points {
            let mut taus = vec![0.0; 2];
            for (id, _, _) in tree.internal_lines() {
                taus[id] = tau_int;
            }
            for (id, _) in tree.root_lines() {
                taus[id] = tau_root;
            }
            let ct = CorrelationTree::von_neumann(tree.clone(), taus.clone()).unwrap();
            let out = tree_operator(&ct, 0.0, &[], &lint, &ctx).unwrap();
            let want = CorrelationVector::single(out).flatten();
            let mut got = NormalPolynomial::zero(grid.len());
            for d in enumerate_diagrams(&tree, &occ).unwrap() {
                let np =
                    diagram_normal_polynomial(&d, &kernel, &occ, &grid, &taus).unwrap();
                got.add_assign(&np);
            }
            let mut diff = got.clone();
            diff.sub_assign(&want);
            let scale = want.max_abs().max(1e-30);
            assert!(
                diff.max_abs() / scale < 1e-9,
                "taus=({tau_root},{tau_int}): rel diff {:.3e}",
                diff.max_abs() / scale
            );
        }
    }

    #[test]
    fn quotient_empty_is_identity() {
        let (grid, occ, kernel) = setup_vacuum();
        let tree = chain_tree();
        let ds = enumerate_diagrams(&tree, &occ).unwrap();
        let d = &ds[0];
        let q = quotient_diagram(d, &[], &[0.0, 0.0]).unwrap();
        assert_eq!(q.tree, d.tree);
        assert_eq!(q.lines, d.lines);
        let _ = (grid, kernel);
    }

    #[test]
    fn quotient_absorbs_delay_into_offsets() {
        let (grid, occ, kernel) = setup_vacuum();
        let tree = chain_tree();
        let internal_id = tree.internal_lines().map(|(id, _, _)| id).next().unwrap();
        let ds = enumerate_diagrams(&tree, &occ).unwrap();
        // Pick a diagram with at least one internal graph line.
        let d = ds
            .iter()
            .find(|d| !d.internal_lines().is_empty())
            .expect("has crossing diagram");
        let mut taus = vec![0.0; 2];
        taus[internal_id] = 0.85;
        let q = quotient_diagram(d, &[internal_id], &taus).unwrap();
        assert_eq!(q.tree.n, 1);
        // The amplitude of the quotient at the remaining delay equals the
        // original amplitude at the full delay vector.
        let root_id = tree.root_lines().map(|(id, _)| id).next().unwrap();
        let g_full = assemble_integrand(d, &kernel, &occ, grid.dim, grid.mu).unwrap();
        let g_quot = assemble_integrand(&q, &kernel, &occ, grid.dim, grid.mu).unwrap();
        let exts = d.external_lines();
        let assignment: Vec<(usize, Vec<f64>)> = exts
            .iter()
            .enumerate()
            .map(|(j, &var)| (var, vec![0.3 * j as f64 - 0.2]))
            .collect();
        let mut full_tau = vec![0.0; 2];
        full_tau[internal_id] = 0.85;
        full_tau[root_id] = 0.5;
        let quot_root = q.tree.root_lines().map(|(id, _)| id).next().unwrap();
        let mut quot_tau = vec![0.0; q.tree.lines.len()];
        quot_tau[quot_root] = 0.5;
        let a = g_full.integrate(&full_tau, &assignment).unwrap();
        let b = g_quot.integrate(&quot_tau, &assignment).unwrap();
        assert!(
            (a - b).norm() < 1e-12 * a.norm().max(1e-30),
            "{a} vs {b}"
        );
    }

    #[test]
    fn quotient_composition_two_paths() {
        let (grid, occ, kernel) = setup_vacuum();
        // Three-vertex chain 2 > 1 > 0.
        let tree = DirectedTree::new(
            3,
            vec![
                Line::Root { vertex: 2 },
                Line::Internal { upper: 2, lower: 1 },
                Line::Internal { upper: 1, lower: 0 },
            ],
        );
        let occ_ref = &occ;
        let ds = enumerate_diagrams(&tree, occ_ref).unwrap();
        let d = ds
            .iter()
            .find(|d| !d.internal_lines().is_empty())
            .expect("has contraction");
        let ids: Vec<usize> = tree.internal_lines().map(|(id, _, _)| id).collect();
        let mut taus = vec![0.0; tree.lines.len()];
        taus[ids[0]] = 0.45;
        taus[ids[1]] = 0.8;
        // One step.
        let q_both = quotient_diagram(d, &ids, &taus).unwrap();
        // Two steps: contract ids[0], then the image of ids[1].
        let q1 = quotient_diagram(d, &[ids[0]], &taus).unwrap();
        let qmap = d.tree.quotient(&[ids[0]]).unwrap();
        let id1_new = qmap.line_map[ids[1]].unwrap();
        let mut taus1 = vec![0.0; q1.tree.lines.len()];
        taus1[id1_new] = taus[ids[1]];
        let q12 = quotient_diagram(&q1, &[id1_new], &taus1).unwrap();
        // Compare amplitudes at a random external assignment.
        let g_a = assemble_integrand(&q_both, &kernel, &occ, grid.dim, grid.mu).unwrap();
        let g_b = assemble_integrand(&q12, &kernel, &occ, grid.dim, grid.mu).unwrap();
        let exts = d.external_lines();
        let assignment: Vec<(usize, Vec<f64>)> = exts
            .iter()
            .enumerate()
            .map(|(j, &var)| (var, vec![0.17 * j as f64 - 0.3]))
            .collect();
        let root_id = q_both.tree.root_lines().map(|(id, _)| id).next().unwrap();
        let mut tq = vec![0.0; q_both.tree.lines.len()];
        tq[root_id] = 0.33;
        let a = g_a.integrate(&tq, &assignment).unwrap();
        let b = g_b.integrate(&tq, &assignment).unwrap();
        assert!(
            (a - b).norm() < 1e-11 * a.norm().max(1e-30),
            "{a} vs {b}"
        );
    }

    #[test]
    fn star_split_matches_plain_assembly() {
        // The insertion bookkeeping (inner paths through the subtree, outer
        // paths through the primed sets) reassembles the full amplitude.
        let (grid, occ, kernel) = setup_vacuum();
        let tree = chain_tree();
        let ord = tree.partial_order().unwrap();
        let sub = tree.subtree_at(&[0], &ord).unwrap();
        for d in enumerate_diagrams(&tree, &occ).unwrap() {
            let full = assemble_integrand(&d, &kernel, &occ, grid.dim, grid.mu).unwrap();
            let split =
                assemble_star_integrand(&d, &sub, &kernel, &occ, grid.dim, grid.mu).unwrap();
            let exts = d.external_lines();
            let assignment: Vec<(usize, Vec<f64>)> = exts
                .iter()
                .enumerate()
                .map(|(j, &var)| (var, vec![0.23 * j as f64 - 0.4]))
                .collect();
            for taus in [[0.7, 0.2], [1.4, 0.9], [0.05, 2.0]] {
                let a = full.integrate(&taus, &assignment).unwrap();
                let b = split.integrate(&taus, &assignment).unwrap();
                assert!(
                    (a - b).norm() < 1e-12 * a.norm().max(1e-30),
                    "taus {taus:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn star_diagram_conjugates_amplitude() {
        let (grid, occ, kernel) = setup_vacuum();
        let tree = chain_tree();
        for d in enumerate_diagrams(&tree, &occ).unwrap() {
            let sd = star_diagram(&d);
            let g = assemble_integrand(&d, &kernel, &occ, grid.dim, grid.mu).unwrap();
            let gs = assemble_integrand(&sd, &kernel, &occ, grid.dim, grid.mu).unwrap();
            let exts = d.external_lines();
            let assignment: Vec<(usize, Vec<f64>)> = exts
                .iter()
                .enumerate()
                .map(|(j, &var)| (var, vec![0.31 * j as f64 - 0.5]))
                .collect();
            // External labels mirror under the branch flip, but external
            // momenta enter only through even kernels here, so the star
            // amplitude is the plain conjugate at the same assignment.
            let taus = [0.8, 0.35];
            let a = g.integrate(&taus, &assignment).unwrap();
            let b = gs.integrate(&taus, &assignment).unwrap();
            assert!(
                (a.conj() - b).norm() < 1e-12 * a.norm().max(1e-30),
                "{a} vs {b}"
            );
        }
    }

    #[test]
    fn restriction_to_full_subtree_is_identity() {
        let (_, occ, _) = setup_vacuum();
        let tree = chain_tree();
        let ds = enumerate_diagrams(&tree, &occ).unwrap();
        let d = &ds[0];
        let subs = tree.right_subtrees().unwrap();
        let full = subs.iter().find(|s| s.tree == tree).unwrap();
        let r = d.restrict(full);
        assert_eq!(r.lines, d.lines);
        assert_eq!(r.branch, d.branch);
    }
}
