//! Signed-permutation symmetries of finite point sets about their bounding-box center.

use std::collections::HashMap;

use crate::lattice::{LatticePoint, MAX_DIM};
use crate::pointset::PointSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SignedPerm {
    perm: [usize; MAX_DIM],
    sign: [i64; MAX_DIM],
}

#[derive(Clone, Debug)]
pub struct SymmetryGroup {
    d: usize,
    /// Twice the center, per axis.
    c2: [i64; MAX_DIM],
    elems: Vec<SignedPerm>,
}

impl SymmetryGroup {
    /// All signed permutations about the bounding-box center mapping `set` onto itself.
    pub fn of(set: &PointSet) -> Self {
        let d = set.dim();
        let lo = set.bounding_box().min_corner();
        let hi = set.bounding_box().max_corner();
        let mut c2 = [0i64; MAX_DIM];
        let mut ext = [0i64; MAX_DIM];
        for i in 0..d {
            c2[i] = lo.coord(i) as i64 + hi.coord(i) as i64;
            ext[i] = hi.coord(i) as i64 - lo.coord(i) as i64;
        }
        let mut group = SymmetryGroup {
            d,
            c2,
            elems: Vec::new(),
        };
        let mut perms = Vec::new();
        permutations(d, &mut Vec::new(), &mut perms);
        for p in perms {
            if (0..d).any(|i| ext[p[i]] != ext[i]) {
                continue;
            }
            for mask in 0..(1u32 << d) {
                let mut g = SignedPerm {
                    perm: [0; MAX_DIM],
                    sign: [1; MAX_DIM],
                };
                for i in 0..d {
                    g.perm[i] = p[i];
                    g.sign[i] = if mask >> i & 1 == 1 { -1 } else { 1 };
                }
                if set.points().iter().all(|x| set.contains(&group.act(&g, x))) {
                    group.elems.push(g);
                }
            }
        }
        group
    }

    /// The trivial group (identity only).
    pub fn trivial(d: usize) -> Self {
        let mut g = SignedPerm {
            perm: [0; MAX_DIM],
            sign: [1; MAX_DIM],
        };
        for i in 0..d {
            g.perm[i] = i;
        }
        SymmetryGroup {
            d,
            c2: [0; MAX_DIM],
            elems: vec![g],
        }
    }

    pub fn order(&self) -> usize {
        self.elems.len()
    }

    fn act(&self, g: &SignedPerm, x: &LatticePoint) -> LatticePoint {
        let mut c = [0i32; MAX_DIM];
        for i in 0..self.d {
            let j = g.perm[i];
            let y = 2 * x.coord(j) as i64 - self.c2[j];
            c[i] = ((g.sign[i] * y + self.c2[i]) / 2) as i32;
        }
        LatticePoint::from_slice_unchecked(&c[..self.d])
    }

    /// Images of `x` under every group element (with repetitions).
    pub fn images<'a>(&'a self, x: &'a LatticePoint) -> impl Iterator<Item = LatticePoint> + 'a {
        self.elems.iter().map(move |g| self.act(g, x))
    }

    /// Partition of an invariant point list into orbits. The first element of each orbit
    /// is its representative.
    pub fn orbits(&self, points: &[LatticePoint]) -> Vec<Vec<LatticePoint>> {
        let mut seen: HashMap<LatticePoint, usize> = HashMap::with_capacity(points.len());
        let mut out: Vec<Vec<LatticePoint>> = Vec::new();
        for x in points {
            if seen.contains_key(x) {
                continue;
            }
            let id = out.len();
            let mut orbit = vec![*x];
            seen.insert(*x, id);
            for y in self.images(x) {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(y) {
                    e.insert(id);
                    orbit.push(y);
                }
            }
            out.push(orbit);
        }
        out
    }
}

fn permutations(d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == d {
        out.push(cur.clone());
        return;
    }
    for i in 0..d {
        if !cur.contains(&i) {
            cur.push(i);
            permutations(d, cur, out);
            cur.pop();
        }
    }
}
