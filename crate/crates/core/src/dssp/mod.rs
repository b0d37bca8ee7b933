//! Kabsch–Sander secondary-structure assignment (DSSP 2.2 rules) and the
//! 8 → 3 and 8 → 4 class mappings.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::structio::{Chain, ResidueRecord, StructureModel};

/// kcal·Å/mol: 332 · 0.42 · 0.20.
const COUPLING: f64 = 27.888;
const MIN_ENERGY: f64 = -9.9;
pub const HBOND_THRESHOLD: f64 = -0.5;
/// Consecutive residues are bonded iff ‖C(i) − N(i+1)‖ is below this.
pub const PEPTIDE_BOND_MAX: f64 = 2.5;
const CA_CUTOFF2: f64 = 81.0;
const CLASH_DISTANCE: f64 = 0.5;
const BEND_DEGREES: f64 = 70.0;

#[derive(Debug, Error, PartialEq)]
pub enum DsspError {
    #[error("missing backbone atom {0}")]
    MissingAtom(&'static str),
    #[error("atoms {0} closer than {CLASH_DISTANCE} Å")]
    Clash(&'static str),
    #[error("unknown secondary-structure symbol {0:?}")]
    Symbol(char),
}

type Vec3 = [f64; 3];

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    let d = sub(a, b);
    dot(&d, &d).sqrt()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackboneResidue {
    pub n: Option<Vec3>,
    pub ca: Option<Vec3>,
    pub c: Option<Vec3>,
    pub o: Option<Vec3>,
    /// Amide hydrogen, set by [`reconstruct_amide_h`].
    pub h: Option<Vec3>,
    pub proline: bool,
}

impl BackboneResidue {
    pub fn from_residue(r: &ResidueRecord) -> Self {
        let get = |name: &str| r.atom(name).map(|a| a.coords);
        Self { n: get("N"), ca: get("CA"), c: get("C"), o: get("O"), h: None, proline: r.name3.eq_ignore_ascii_case("PRO") }
    }

    pub fn complete(&self) -> bool {
        self.n.is_some() && self.ca.is_some() && self.c.is_some() && self.o.is_some()
    }
}

/// The residues of a chain that take part in assignment: standard residues
/// plus HETATM residues carrying a CA (modified amino acids).
pub fn polymer_residues(chain: &Chain) -> Vec<&ResidueRecord> {
    chain.residues.iter().filter(|r| !r.hetero || r.atom("CA").is_some()).collect()
}

pub fn backbone(chain: &Chain) -> Vec<BackboneResidue> {
    polymer_residues(chain).into_iter().map(BackboneResidue::from_residue).collect()
}

/// Segment index per residue; a new segment starts after every chain break.
pub fn segments(res: &[BackboneResidue]) -> Vec<usize> {
    let mut seg = 0;
    let mut out = Vec::with_capacity(res.len());
    for (i, r) in res.iter().enumerate() {
        if i > 0 {
            if let (Some(c), Some(n)) = (res[i - 1].c, r.n) {
                if dist(&c, &n) >= PEPTIDE_BOND_MAX {
                    seg += 1;
                }
            }
        }
        out.push(seg);
    }
    out
}

/// Place each amide H 1.0 Å from N along the previous residue's O→C
/// direction. The first residue of a segment, prolines' neighbours with
/// missing atoms, and residues after a break get none.
pub fn reconstruct_amide_h(res: &mut [BackboneResidue]) {
    let seg = segments(res);
    for i in 0..res.len() {
        res[i].h = None;
        if i == 0 || seg[i] != seg[i - 1] {
            continue;
        }
        let (Some(pc), Some(po), Some(n)) = (res[i - 1].c, res[i - 1].o, res[i].n) else { continue };
        let co = sub(&pc, &po);
        let len = dot(&co, &co).sqrt();
        if len == 0.0 {
            continue;
        }
        res[i].h = Some([n[0] + co[0] / len, n[1] + co[1] / len, n[2] + co[2] / len]);
    }
}

/// Electrostatic energy (kcal/mol) of the N–H(donor)···O=C(acceptor) pair,
/// floored at −9.9.
pub fn hbond_energy(donor: &BackboneResidue, acceptor: &BackboneResidue) -> Result<f64, DsspError> {
    let n = donor.n.ok_or(DsspError::MissingAtom("N"))?;
    let h = donor.h.ok_or(DsspError::MissingAtom("H"))?;
    let c = acceptor.c.ok_or(DsspError::MissingAtom("C"))?;
    let o = acceptor.o.ok_or(DsspError::MissingAtom("O"))?;
    let (r_on, r_ch, r_oh, r_cn) = (dist(&o, &n), dist(&c, &h), dist(&o, &h), dist(&c, &n));
    for (r, what) in [(r_on, "O-N"), (r_ch, "C-H"), (r_oh, "O-H"), (r_cn, "C-N")] {
        if r < CLASH_DISTANCE {
            return Err(DsspError::Clash(what));
        }
    }
    let e = COUPLING * (1.0 / r_on + 1.0 / r_ch - 1.0 / r_oh - 1.0 / r_cn);
    Ok(e.max(MIN_ENERGY))
}

/// For each donor, the two lowest-energy acceptors below the threshold.
fn hbond_table(res: &[BackboneResidue], skip: &[bool]) -> Vec<[Option<usize>; 2]> {
    let n = res.len();
    let mut bonds: Vec<[Option<usize>; 2]> = vec![[None; 2]; n];
    let mut energies = vec![[0.0f64; 2]; n];
    let mut store = |donor: usize, acceptor: usize, e: f64| {
        let (b, en) = (&mut bonds[donor], &mut energies[donor]);
        if e < en[0] {
            b[1] = b[0];
            en[1] = en[0];
            b[0] = Some(acceptor);
            en[0] = e;
        } else if e < en[1] {
            b[1] = Some(acceptor);
            en[1] = e;
        }
    };
    let energy = |d: usize, a: usize| match hbond_energy(&res[d], &res[a]) {
        Ok(e) => Some(e),
        Err(DsspError::Clash(_)) => Some(MIN_ENERGY),
        Err(_) => None,
    };
    for i in 0..n {
        if skip[i] {
            continue;
        }
        let ca_i = res[i].ca.expect("complete");
        for j in i + 1..n {
            if skip[j] {
                continue;
            }
            let d = sub(&ca_i, &res[j].ca.expect("complete"));
            if dot(&d, &d) >= CA_CUTOFF2 {
                continue;
            }
            if !res[i].proline {
                if let Some(e) = energy(i, j).filter(|&e| e < HBOND_THRESHOLD) {
                    store(i, j, e);
                }
            }
            if j != i + 1 && !res[j].proline {
                if let Some(e) = energy(j, i).filter(|&e| e < HBOND_THRESHOLD) {
                    store(j, i, e);
                }
            }
        }
    }
    bonds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ss {
    Loop,
    Alpha,
    Bridge,
    Strand,
    Helix3,
    Helix5,
    Turn,
    Bend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BridgeKind {
    Parallel,
    Antiparallel,
}

#[derive(Debug, Clone)]
struct Ladder {
    kind: BridgeKind,
    seg_i: usize,
    i: VecDeque<usize>,
    j: VecDeque<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flag {
    None,
    Start,
    End,
    StartAndEnd,
    Middle,
}

impl Flag {
    fn starts(self) -> bool {
        matches!(self, Flag::Start | Flag::StartAndEnd)
    }
}

struct Assigner<'a> {
    res: &'a [BackboneResidue],
    seg: Vec<usize>,
    skip: Vec<bool>,
    bonds: Vec<[Option<usize>; 2]>,
    ss: Vec<Ss>,
}

impl Assigner<'_> {
    fn bond(&self, donor: usize, acceptor: usize) -> bool {
        self.bonds[donor].contains(&Some(acceptor))
    }

    fn test_bridge(&self, i: usize, j: usize) -> Option<BridgeKind> {
        let n = self.res.len();
        if i == 0 || j == 0 || i + 1 >= n || j + 1 >= n {
            return None;
        }
        let (a, b, c) = (i - 1, i, i + 1);
        let (d, e, f) = (j - 1, j, j + 1);
        if self.seg[a] != self.seg[c] || self.seg[d] != self.seg[f] {
            return None;
        }
        if (self.bond(c, e) && self.bond(e, a)) || (self.bond(f, b) && self.bond(b, d)) {
            return Some(BridgeKind::Parallel);
        }
        if (self.bond(c, d) && self.bond(f, a)) || (self.bond(e, b) && self.bond(b, e)) {
            return Some(BridgeKind::Antiparallel);
        }
        None
    }

    fn beta(&mut self) {
        let n = self.res.len();
        let mut ladders: Vec<Ladder> = Vec::new();
        for i in 1..n.saturating_sub(4) {
            for j in i + 3..n - 1 {
                let Some(kind) = self.test_bridge(j, i) else { continue };
                if self.skip[i] || self.skip[j] {
                    continue;
                }
                let extend = ladders.iter_mut().find(|l| {
                    l.kind == kind
                        && i == l.i.back().expect("non-empty") + 1
                        && match kind {
                            BridgeKind::Parallel => l.j.back().expect("non-empty") + 1 == j,
                            BridgeKind::Antiparallel => *l.j.front().expect("non-empty") == j + 1,
                        }
                });
                match extend {
                    Some(l) => {
                        l.i.push_back(i);
                        match kind {
                            BridgeKind::Parallel => l.j.push_back(j),
                            BridgeKind::Antiparallel => l.j.push_front(j),
                        }
                    }
                    None => ladders.push(Ladder { kind, seg_i: self.seg[i], i: [i].into(), j: [j].into() }),
                }
            }
        }

        // Join ladders separated by a bulge.
        ladders.sort_by_key(|l| (l.seg_i, *l.i.front().expect("non-empty")));
        let mut a = 0;
        while a < ladders.len() {
            let mut b = a + 1;
            while b < ladders.len() {
                let (la, lb) = (&ladders[a], &ladders[b]);
                let (ibi, iei) = (*la.i.front().unwrap() as i64, *la.i.back().unwrap() as i64);
                let (jbi, jei) = (*la.j.front().unwrap() as i64, *la.j.back().unwrap() as i64);
                let (ibj, iej) = (*lb.i.front().unwrap() as i64, *lb.i.back().unwrap() as i64);
                let (jbj, jej) = (*lb.j.front().unwrap() as i64, *lb.j.back().unwrap() as i64);
                let seg = |x: i64| self.seg[x as usize];
                let incompatible = la.kind != lb.kind
                    || seg(ibi.min(ibj)) != seg(iei.max(iej))
                    || seg(jbi.min(jbj)) != seg(jei.max(jej))
                    || ibj - iei >= 6
                    || (iei >= ibj && ibi <= iej);
                let bulge = !incompatible
                    && match la.kind {
                        BridgeKind::Parallel => jbj > jbi && ((jbj - jei < 6 && ibj - iei < 3) || jbj - jei < 3),
                        BridgeKind::Antiparallel => jbj < jbi && ((jbi - jej < 6 && ibj - iei < 3) || jbi - jej < 3),
                    };
                if bulge {
                    let lb = ladders.remove(b);
                    let la = &mut ladders[a];
                    la.i.extend(lb.i);
                    match la.kind {
                        BridgeKind::Parallel => la.j.extend(lb.j),
                        BridgeKind::Antiparallel => {
                            for x in lb.j.into_iter().rev() {
                                la.j.push_front(x);
                            }
                        }
                    }
                } else {
                    b += 1;
                }
            }
            a += 1;
        }

        for l in &ladders {
            let label = if l.i.len() > 1 { Ss::Strand } else { Ss::Bridge };
            for range in [(l.i.front(), l.i.back()), (l.j.front(), l.j.back())] {
                let (lo, hi) = (*range.0.unwrap(), *range.1.unwrap());
                for k in lo..=hi {
                    if self.ss[k] != Ss::Strand {
                        self.ss[k] = label;
                    }
                }
            }
        }
    }

    fn helices(&mut self) {
        let n = self.res.len();
        let mut flags = vec![[Flag::None; 6]; n];
        for stride in 3..=5 {
            for i in 0..n {
                if i + stride < n && self.bond(i + stride, i) && self.seg[i] == self.seg[i + stride] {
                    flags[i + stride][stride] = Flag::End;
                    for f in flags.iter_mut().take(i + stride).skip(i + 1) {
                        if f[stride] == Flag::None {
                            f[stride] = Flag::Middle;
                        }
                    }
                    flags[i][stride] = if flags[i][stride] == Flag::End { Flag::StartAndEnd } else { Flag::Start };
                }
            }
        }

        for i in 1..n.saturating_sub(4) {
            if flags[i][4].starts() && flags[i - 1][4].starts() {
                self.ss[i..=i + 3].fill(Ss::Alpha);
            }
        }
        for i in 1..n.saturating_sub(3) {
            if flags[i][3].starts() && flags[i - 1][3].starts() && self.ss[i..=i + 2].iter().all(|s| matches!(s, Ss::Loop | Ss::Helix3)) {
                self.ss[i..=i + 2].fill(Ss::Helix3);
            }
        }
        for i in 1..n.saturating_sub(5) {
            if flags[i][5].starts()
                && flags[i - 1][5].starts()
                && self.ss[i..=i + 4].iter().all(|s| matches!(s, Ss::Loop | Ss::Helix5 | Ss::Alpha))
            {
                self.ss[i..=i + 4].fill(Ss::Helix5);
            }
        }

        let bends = self.bends();
        for i in 1..n.saturating_sub(1) {
            if self.ss[i] != Ss::Loop || self.skip[i] {
                continue;
            }
            let turn = (3..=5).any(|stride| (1..stride).any(|k| i >= k && flags[i - k][stride].starts()));
            if turn {
                self.ss[i] = Ss::Turn;
            } else if bends[i] {
                self.ss[i] = Ss::Bend;
            }
        }
    }

    fn bends(&self) -> Vec<bool> {
        let n = self.res.len();
        let mut out = vec![false; n];
        for i in 2..n.saturating_sub(2) {
            if self.seg[i - 2] != self.seg[i + 2] || self.skip[i - 2] || self.skip[i] || self.skip[i + 2] {
                continue;
            }
            let (p, c, nx) = (self.res[i - 2].ca.unwrap(), self.res[i].ca.unwrap(), self.res[i + 2].ca.unwrap());
            let (u, v) = (sub(&p, &c), sub(&c, &nx));
            let cos = (dot(&u, &v) / (dot(&u, &u) * dot(&v, &v)).sqrt()).clamp(-1.0, 1.0);
            out[i] = cos.acos() > BEND_DEGREES.to_radians();
        }
        out
    }
}

/// One DSSP label per residue. Residues missing any of N, CA, C, O are
/// labelled `-` and never take part in hydrogen bonds.
pub fn assign_ss8(residues: &[BackboneResidue]) -> String {
    let mut res = residues.to_vec();
    reconstruct_amide_h(&mut res);
    let skip: Vec<bool> = res.iter().map(|r| !r.complete()).collect();
    let bonds = hbond_table(&res, &skip);
    let mut a = Assigner { seg: segments(&res), res: &res, skip, bonds, ss: vec![Ss::Loop; res.len()] };
    a.beta();
    a.helices();
    a.ss.iter()
        .zip(&a.skip)
        .map(|(s, &skip)| match (skip, s) {
            (true, _) | (_, Ss::Loop) => '-',
            (_, Ss::Alpha) => 'H',
            (_, Ss::Bridge) => 'B',
            (_, Ss::Strand) => 'E',
            (_, Ss::Helix3) => 'G',
            (_, Ss::Helix5) => 'I',
            (_, Ss::Turn) => 'T',
            (_, Ss::Bend) => 'S',
        })
        .collect()
}

pub fn assign_chain(chain: &Chain) -> String {
    assign_ss8(&backbone(chain))
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChainAssignment {
    pub chain_id: String,
    pub ss8: String,
    pub ss3: String,
}

pub fn assign_structure(model: &StructureModel) -> Vec<ChainAssignment> {
    model
        .chains
        .iter()
        .map(|c| {
            let ss8 = assign_chain(c);
            let ss3 = map_ss3(&ss8).expect("assigner emits valid symbols");
            ChainAssignment { chain_id: c.id.clone(), ss8, ss3 }
        })
        .collect()
}

/// `entry_id chain_id ss8 ss3` (empty chains print `-` for both strings).
pub fn write_ss_dump<W: Write>(mut w: W, entry_id: &str, chains: &[ChainAssignment]) -> std::io::Result<()> {
    for c in chains {
        let or_dash = |s: &str| if s.is_empty() { "-".to_string() } else { s.to_string() };
        writeln!(w, "{} {} {} {}", entry_id, c.chain_id, or_dash(&c.ss8), or_dash(&c.ss3))?;
    }
    Ok(())
}

/// H, G, I → H; E, B → E; T, S, loop → C. A blank counts as loop.
pub fn ss8_to_ss3(c: char) -> Option<char> {
    match c {
        'H' | 'G' | 'I' => Some('H'),
        'E' | 'B' => Some('E'),
        'T' | 'S' | '-' | ' ' => Some('C'),
        _ => None,
    }
}

/// As [`ss8_to_ss3`] but loop stays `-`.
pub fn ss8_to_ss4(c: char) -> Option<char> {
    match c {
        '-' | ' ' => Some('-'),
        _ => ss8_to_ss3(c),
    }
}

pub fn map_ss3(ss8: &str) -> Result<String, DsspError> {
    ss8.chars().map(|c| ss8_to_ss3(c).ok_or(DsspError::Symbol(c))).collect()
}

/// Four-class labels; `None` is the separate loop class.
pub fn map_ss4(ss8: &str) -> Result<Vec<Option<char>>, DsspError> {
    ss8.chars().map(|c| ss8_to_ss4(c).map(|x| (x != '-').then_some(x)).ok_or(DsspError::Symbol(c))).collect()
}
