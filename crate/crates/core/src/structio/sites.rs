use std::collections::BTreeSet;

use super::StructureModel;

pub const DEFAULT_CUTOFF: f64 = 8.0;

/// `(chain id, 0-based ordinal index of the residue within its chain)`.
pub type SiteId = (String, usize);

struct Heavy {
    chain: usize,
    residue: usize,
    xyz: [f64; 3],
}

/// Non-hydrogen atoms of non-HETATM residues.
fn heavy_atoms(model: &StructureModel) -> Vec<Heavy> {
    let mut out = Vec::new();
    for (ci, chain) in model.chains.iter().enumerate() {
        for (ri, r) in chain.residues.iter().enumerate() {
            if r.hetero {
                continue;
            }
            for a in r.atoms.iter().filter(|a| !a.is_hydrogen()) {
                out.push(Heavy { chain: ci, residue: ri, xyz: a.coords });
            }
        }
    }
    out
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

fn to_ids(model: &StructureModel, hits: BTreeSet<(usize, usize)>) -> BTreeSet<SiteId> {
    hits.into_iter().map(|(c, r)| (model.chains[c].id.clone(), r)).collect()
}

fn usable(model: &StructureModel, cutoff: f64) -> bool {
    cutoff > 0.0 && cutoff.is_finite() && model.chains.len() >= 2
}

/// Residues with a heavy atom within `cutoff` Å of a heavy atom in another
/// chain, found with a cell list whose edge equals the cutoff.
pub fn extract_interaction_sites(model: &StructureModel, cutoff: f64) -> BTreeSet<SiteId> {
    if !usable(model, cutoff) {
        return BTreeSet::new();
    }
    let atoms = heavy_atoms(model);
    if atoms.is_empty() {
        return BTreeSet::new();
    }
    let c2 = cutoff * cutoff;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for a in &atoms {
        for d in 0..3 {
            lo[d] = lo[d].min(a.xyz[d]);
            hi[d] = hi[d].max(a.xyz[d]);
        }
    }
    let dims: [usize; 3] = std::array::from_fn(|d| ((hi[d] - lo[d]) / cutoff).floor() as usize + 1);
    let cell_of = |p: &[f64; 3]| -> [usize; 3] {
        std::array::from_fn(|d| (((p[d] - lo[d]) / cutoff).floor() as usize).min(dims[d] - 1))
    };
    let flat = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];
    let n_cells = dims[0] * dims[1] * dims[2];
    // Counting sort of atoms by cell: `order[start[c]..start[c + 1]]` lists cell c.
    let mut start = vec![0usize; n_cells + 1];
    let cells: Vec<usize> = atoms.iter().map(|a| flat(cell_of(&a.xyz))).collect();
    for &c in &cells {
        start[c + 1] += 1;
    }
    for c in 0..n_cells {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut order = vec![0usize; atoms.len()];
    for (i, &c) in cells.iter().enumerate() {
        order[fill[c]] = i;
        fill[c] += 1;
    }
    let mut hit = vec![false; atoms.len()];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let here = flat([x, y, z]);
                let members = &order[start[here]..start[here + 1]];
                if members.is_empty() {
                    continue;
                }
                for (dx, dy, dz) in HALF_SHELL {
                    let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if nx < 0 || ny < 0 || nz < 0 || nx >= dims[0] as i64 || ny >= dims[1] as i64 || nz >= dims[2] as i64 {
                        continue;
                    }
                    let there = flat([nx as usize, ny as usize, nz as usize]);
                    let others = &order[start[there]..start[there + 1]];
                    let same = there == here;
                    for (mi, &i) in members.iter().enumerate() {
                        let a = &atoms[i];
                        let rest = if same { &others[mi + 1..] } else { others };
                        for &j in rest {
                            if hit[i] && hit[j] {
                                continue;
                            }
                            let b = &atoms[j];
                            if a.chain != b.chain && dist2(&a.xyz, &b.xyz) <= c2 {
                                hit[i] = true;
                                hit[j] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    let hits = atoms.iter().zip(&hit).filter(|(_, &h)| h).map(|(a, _)| (a.chain, a.residue)).collect();
    to_ids(model, hits)
}

/// The cell itself plus 13 of its 26 neighbours, so each unordered cell pair
/// is visited once.
const HALF_SHELL: [(i64, i64, i64); 14] = [
    (0, 0, 0),
    (1, -1, -1),
    (1, -1, 0),
    (1, -1, 1),
    (1, 0, -1),
    (1, 0, 0),
    (1, 0, 1),
    (1, 1, -1),
    (1, 1, 0),
    (1, 1, 1),
    (0, 1, -1),
    (0, 1, 0),
    (0, 1, 1),
    (0, 0, 1),
];

/// All-pairs reference for [`extract_interaction_sites`].
pub fn extract_interaction_sites_brute(model: &StructureModel, cutoff: f64) -> BTreeSet<SiteId> {
    if !usable(model, cutoff) {
        return BTreeSet::new();
    }
    let atoms = heavy_atoms(model);
    let c2 = cutoff * cutoff;
    let mut hits = BTreeSet::new();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let (a, b) = (&atoms[i], &atoms[j]);
            if a.chain != b.chain && dist2(&a.xyz, &b.xyz) <= c2 {
                hits.insert((a.chain, a.residue));
                hits.insert((b.chain, b.residue));
            }
        }
    }
    to_ids(model, hits)
}
