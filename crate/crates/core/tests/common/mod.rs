//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use tg_core::craftworld::{load_map, Cell};
use tg_core::ltl::{progress, simplify, Formula, Trace, TruthAssignment};

pub const ATOMS: [&str; 3] = ["p", "q", "r"];

/// Every co-safe formula of depth at most `depth` built from atoms, negated
/// atoms, `X`, `F`, `&`, `|` and `U`. Atoms have depth 1 and negated atoms
/// depth 2. Returned grouped by exact depth.
pub fn formulas_by_depth(atoms: &[&str], depth: usize) -> Vec<Vec<Formula>> {
    let mut levels: Vec<Vec<Formula>> = vec![Vec::new(); depth + 1];
    if depth == 0 {
        return levels;
    }
    levels[1] = atoms.iter().map(|a| Formula::atom(a)).collect();
    for d in 2..=depth {
        let mut out = Vec::new();
        if d == 2 {
            out.extend(atoms.iter().map(|a| Formula::not(Formula::atom(a))));
        }
        for f in &levels[d - 1] {
            out.push(Formula::next(f.clone()));
            out.push(Formula::eventually(f.clone()));
        }
        let lower: Vec<(usize, &Formula)> =
            (1..d).flat_map(|k| levels[k].iter().map(move |f| (k, f))).collect();
        for &(dl, l) in &lower {
            for &(dr, r) in &lower {
                if dl.max(dr) != d - 1 {
                    continue;
                }
                out.push(Formula::and(l.clone(), r.clone()));
                out.push(Formula::or(l.clone(), r.clone()));
                out.push(Formula::until(l.clone(), r.clone()));
            }
        }
        levels[d] = out;
    }
    levels
}

pub fn all_formulas(atoms: &[&str], depth: usize) -> Vec<Formula> {
    formulas_by_depth(atoms, depth).into_iter().flatten().collect()
}

pub fn assignment(atoms: &[&str], mask: usize) -> TruthAssignment {
    let names: Vec<&str> = atoms.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, a)| *a).collect();
    TruthAssignment::of(&names)
}

/// Every non-empty trace of length at most `max_len` over `atoms`.
pub fn all_traces(atoms: &[&str], max_len: usize) -> Vec<Trace> {
    let letters: Vec<TruthAssignment> = (0..1 << atoms.len()).map(|m| assignment(atoms, m)).collect();
    let mut out = Vec::new();
    let mut frontier = vec![Trace::default()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for t in &frontier {
            for a in &letters {
                let mut u = t.clone();
                u.push(a.clone());
                next.push(u);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn random_trace<R: Rng>(rng: &mut R, atoms: &[&str], len: usize) -> Trace {
    (0..len).map(|_| assignment(atoms, rng.gen_range(0..1 << atoms.len()))).collect()
}

fn random_leaf<R: Rng>(rng: &mut R, atoms: &[&str]) -> Formula {
    let a = Formula::atom(atoms[rng.gen_range(0..atoms.len())]);
    if rng.gen_bool(0.25) { Formula::not(a) } else { a }
}

/// Random co-safe formula over the same operators as [`formulas_by_depth`].
pub fn random_cosafe<R: Rng>(rng: &mut R, atoms: &[&str], depth: usize) -> Formula {
    if depth <= 1 || rng.gen_bool(0.2) {
        return random_leaf(rng, atoms);
    }
    let d = depth - 1;
    match rng.gen_range(0..5) {
        0 => Formula::next(random_cosafe(rng, atoms, d)),
        1 => Formula::eventually(random_cosafe(rng, atoms, d)),
        2 => Formula::and(random_cosafe(rng, atoms, d), random_cosafe(rng, atoms, d)),
        3 => Formula::or(random_cosafe(rng, atoms, d), random_cosafe(rng, atoms, d)),
        _ => Formula::until(random_cosafe(rng, atoms, d), random_cosafe(rng, atoms, d)),
    }
}

/// Random finite-trace formula that may also use `G` and `WX`; negation
/// only on atoms.
pub fn random_ltlf<R: Rng>(rng: &mut R, atoms: &[&str], depth: usize) -> Formula {
    if depth <= 1 || rng.gen_bool(0.2) {
        return random_leaf(rng, atoms);
    }
    let d = depth - 1;
    match rng.gen_range(0..7) {
        0 => Formula::next(random_ltlf(rng, atoms, d)),
        1 => Formula::weak_next(random_ltlf(rng, atoms, d)),
        2 => Formula::eventually(random_ltlf(rng, atoms, d)),
        3 => Formula::always(random_ltlf(rng, atoms, d)),
        4 => Formula::and(random_ltlf(rng, atoms, d), random_ltlf(rng, atoms, d)),
        5 => Formula::or(random_ltlf(rng, atoms, d), random_ltlf(rng, atoms, d)),
        _ => Formula::until(random_ltlf(rng, atoms, d), random_ltlf(rng, atoms, d)),
    }
}

/// Optimal action values of a single agent on a craft map with the
/// residual formula as task state, computed by value iteration directly
/// from the map text and progression. Moves into walls or off the grid
/// leave the agent in place; reaching `true` ends the episode; rewards are
/// 1 on satisfaction, 0 on other progress, `stall` when the residual
/// formula is unchanged and `violate` on reaching `false`.
pub struct ValueIteration {
    pub q: HashMap<(Formula, (usize, usize)), [f64; 5]>,
}

pub fn value_iteration(map: &str, spec: &Formula, gamma: f64, stall: f64, violate: f64) -> ValueIteration {
    let m = load_map(map).unwrap();
    let cells = m.open_cells();
    let label = |p: (usize, usize)| match m.cell(p) {
        Cell::Object(o) => TruthAssignment::of(&[o.event()]),
        _ => TruthAssignment::new(),
    };
    let moves: [(isize, isize); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];
    let step = |p: (usize, usize), a: usize| {
        let (dr, dc) = moves[a];
        let r = p.0 as isize + dr;
        let c = p.1 as isize + dc;
        if r < 0 || c < 0 || !m.is_open((r as usize, c as usize)) {
            p
        } else {
            (r as usize, c as usize)
        }
    };
    // Residual formulae reachable by progression.
    let mut states = vec![simplify(spec)];
    let mut i = 0;
    while i < states.len() {
        for &p in &cells {
            let g = progress(&label(p), &states[i]);
            if !states.contains(&g) {
                states.push(g);
            }
        }
        i += 1;
    }
    let live: Vec<&Formula> = states.iter().filter(|f| !matches!(f, Formula::True | Formula::False)).collect();
    let mut v: HashMap<(Formula, (usize, usize)), f64> = HashMap::new();
    let value = |v: &HashMap<(Formula, (usize, usize)), f64>, f: &Formula, p| v.get(&(f.clone(), p)).copied().unwrap_or(0.0);
    let backup = |v: &HashMap<_, _>, f: &Formula, p: (usize, usize), a: usize| {
        let p2 = step(p, a);
        let g = progress(&label(p2), f);
        match g {
            Formula::True => 1.0,
            Formula::False => violate,
            ref g if g == f => stall + gamma * value(v, g, p2),
            ref g => gamma * value(v, g, p2),
        }
    };
    loop {
        let mut delta: f64 = 0.0;
        for f in &live {
            for &p in &cells {
                let best = (0..5).map(|a| backup(&v, f, p, a)).fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - value(&v, f, p)).abs());
                v.insert(((*f).clone(), p), best);
            }
        }
        if delta < 1e-13 {
            break;
        }
    }
    let mut q = HashMap::new();
    for f in &live {
        for &p in &cells {
            let mut row = [0.0; 5];
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = backup(&v, f, p, a);
            }
            q.insert(((*f).clone(), p), row);
        }
    }
    ValueIteration { q }
}

/// Central finite-difference derivative of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
