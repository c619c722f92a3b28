//! Lattice points, discrete boxes and the blow-up sets `A_N`, `S_N`.
//!
//! All points live in `Z^d` with `3 <= d <= MAX_DIM`. Points are small `Copy`
//! values so they can be used freely as hash keys and passed across threads.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::CompactSet;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 6;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl LatticePoint {
    pub fn new(coords: &[i32]) -> Result<Self> {
        check_dim(coords.len())?;
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            dim: coords.len() as u8,
            coords: c,
        })
    }

    /// Builds a point without checking the dimension. Callers guarantee `3 <= d <= MAX_DIM`.
    pub(crate) fn from_slice_unchecked(coords: &[i32]) -> Self {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            dim: coords.len() as u8,
            coords: c,
        }
    }

    pub fn origin(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            dim: d as u8,
            coords: [0; MAX_DIM],
        })
    }

    /// The unit vector `e_i` (0-based axis).
    pub fn unit(d: usize, axis: usize) -> Result<Self> {
        let mut p = Self::origin(d)?;
        if axis >= d {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range for d={d}")));
        }
        p.coords[axis] = 1;
        Ok(p)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    #[inline]
    pub fn sup_norm(&self) -> i32 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    #[inline]
    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] += other.coords[i];
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] -= other.coords[i];
        }
        out
    }

    /// Returns the point shifted by `delta` along `axis`.
    #[inline]
    pub fn shifted(&self, axis: usize, delta: i32) -> Self {
        let mut out = *self;
        out.coords[axis] += delta;
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] = -out.coords[i];
        }
        out
    }

    /// The `2d` nearest neighbours, ordered `+e_0, -e_0, +e_1, -e_1, ...`.
    pub fn neighbors(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..2 * self.dim()).map(move |k| self.neighbor(k))
    }

    /// Neighbour number `k` in `0..2d` (see [`neighbors`](Self::neighbors)).
    #[inline]
    pub fn neighbor(&self, k: usize) -> LatticePoint {
        let axis = k / 2;
        let delta = if k % 2 == 0 { 1 } else { -1 };
        self.shifted(axis, delta)
    }

    pub fn is_neighbor(&self, other: &Self) -> bool {
        self.sub(other).norm_sq() == 1
    }

    /// Real coordinates scaled by `1/n`.
    pub fn scaled(&self, n: f64) -> Vec<f64> {
        self.coords().iter().map(|&c| c as f64 / n).collect()
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl Serialize for LatticePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<i32> = Vec::deserialize(d)?;
        LatticePoint::new(&v).map_err(serde::de::Error::custom)
    }
}

pub fn check_dim(d: usize) -> Result<()> {
    if !(3..=MAX_DIM).contains(&d) {
        return Err(Error::InvalidDimension(d));
    }
    Ok(())
}

/// Axis-aligned integer box `anchor + ([0, side_0) x ... x [0, side_{d-1}))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteBox {
    anchor: LatticePoint,
    sides: [u32; MAX_DIM],
}

impl DiscreteBox {
    pub fn new(anchor: LatticePoint, sides: &[u32]) -> Result<Self> {
        if sides.len() != anchor.dim() {
            return Err(Error::InvalidParameter("box sides must match the dimension".into()));
        }
        if sides.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("box sides must be positive".into()));
        }
        let mut s = [1; MAX_DIM];
        s[..sides.len()].copy_from_slice(sides);
        Ok(Self { anchor, sides: s })
    }

    /// The cube `anchor + [0, side)^d`.
    pub fn cube(anchor: LatticePoint, side: u32) -> Result<Self> {
        let sides = vec![side; anchor.dim()];
        Self::new(anchor, &sides)
    }

    /// Half-open box `anchor + [lo, hi)^d` with integer bounds.
    pub fn half_open(anchor: LatticePoint, lo: i32, hi: i32) -> Result<Self> {
        if hi <= lo {
            return Err(Error::InvalidParameter(format!("empty interval [{lo},{hi})")));
        }
        let d = anchor.dim();
        let shift = LatticePoint::from_slice_unchecked(&vec![lo; d]);
        Self::cube(anchor.add(&shift), (hi - lo) as u32)
    }

    /// Closed sup-norm ball `B(center, r) = {y : |y - center|_inf <= r}`.
    pub fn ball(center: LatticePoint, r: u32) -> Self {
        let d = center.dim();
        let shift = LatticePoint::from_slice_unchecked(&vec![-(r as i32); d]);
        Self::cube(center.add(&shift), 2 * r + 1).expect("nonzero side")
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    pub fn anchor(&self) -> LatticePoint {
        self.anchor
    }

    pub fn sides(&self) -> &[u32] {
        &self.sides[..self.dim()]
    }

    pub fn min_corner(&self) -> LatticePoint {
        self.anchor
    }

    /// Largest contained point (inclusive corner).
    pub fn max_corner(&self) -> LatticePoint {
        let mut c = self.anchor;
        for i in 0..self.dim() {
            c.coords[i] += self.sides[i] as i32 - 1;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.sides().iter().map(|&s| s as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, p: &LatticePoint) -> bool {
        (0..self.dim()).all(|i| {
            let off = p.coords[i] - self.anchor.coords[i];
            off >= 0 && (off as u32) < self.sides[i]
        })
    }

    /// Row-major index of a contained point.
    #[inline]
    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..self.dim() {
            let off = p.coords[i] - self.anchor.coords[i];
            if off < 0 || off as u32 >= self.sides[i] {
                return None;
            }
            idx = idx * self.sides[i] as usize + off as usize;
        }
        Some(idx)
    }

    pub fn point_at(&self, mut idx: usize) -> LatticePoint {
        let d = self.dim();
        let mut c = [0i32; MAX_DIM];
        for i in (0..d).rev() {
            let s = self.sides[i] as usize;
            c[i] = self.anchor.coords[i] + (idx % s) as i32;
            idx /= s;
        }
        LatticePoint::from_slice_unchecked(&c[..d])
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.len()).map(move |i| self.point_at(i))
    }

    /// Points of the box with a neighbour outside it.
    pub fn inner_boundary(&self) -> Vec<LatticePoint> {
        self.points()
            .filter(|p| p.neighbors().any(|q| !self.contains(&q)))
            .collect()
    }

    /// Sites outside the box adjacent to it.
    pub fn outer_boundary(&self) -> Vec<LatticePoint> {
        let mut out: HashSet<LatticePoint> = HashSet::new();
        for p in self.inner_boundary() {
            for q in p.neighbors() {
                if !self.contains(&q) {
                    out.insert(q);
                }
            }
        }
        let mut v: Vec<_> = out.into_iter().collect();
        v.sort();
        v
    }

    pub fn is_subset_of(&self, other: &DiscreteBox) -> bool {
        other.contains(&self.min_corner()) && other.contains(&self.max_corner())
    }
}

/// The blow-up pair `A_N = (N A) ∩ Z^d` and `S_N = {|x|_inf = floor(M N)}`.
#[derive(Clone, Debug)]
pub struct BlowUpPair {
    pub a_n: Vec<LatticePoint>,
    pub s_n: Vec<LatticePoint>,
    pub n: u32,
    pub m: f64,
    pub set: CompactSet,
}

impl BlowUpPair {
    pub fn radius(&self) -> u32 {
        (self.m * self.n as f64).floor() as u32
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// The enclosing box `B(0, floor(MN))`.
    pub fn enclosing_box(&self) -> DiscreteBox {
        DiscreteBox::ball(
            LatticePoint::origin(self.dim()).expect("dimension checked at construction"),
            self.radius(),
        )
    }
}

/// Discrete blow-up of `set` at scale `n` inside the box `[-m, m]^d`.
pub fn blow_up(set: &CompactSet, m: f64, n: u32) -> Result<BlowUpPair> {
    let d = set.dim();
    check_dim(d)?;
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if !(m > 0.0) || !set.strictly_inside_box(m) {
        return Err(Error::SetNotInsideBox { m });
    }
    let radius = (m * n as f64).floor() as i32;
    let a_n = discretize(set, n);
    let s_n = sup_sphere(d, radius as u32);
    Ok(BlowUpPair {
        a_n,
        s_n,
        n,
        m,
        set: set.clone(),
    })
}

/// `(n set) ∩ Z^d`, in lexicographic order.
pub fn discretize(set: &CompactSet, n: u32) -> Vec<LatticePoint> {
    let d = set.dim();
    let nf = n as f64;
    let (lo, hi) = set.bounding_box();
    let lo_i: Vec<i32> = lo.iter().map(|&v| (v * nf).floor() as i32 - 1).collect();
    let hi_i: Vec<i32> = hi.iter().map(|&v| (v * nf).ceil() as i32 + 1).collect();
    let mut a_n = Vec::new();
    let mut cur = lo_i.clone();
    let mut x = vec![0.0; d];
    'outer: loop {
        for i in 0..d {
            x[i] = cur[i] as f64 / nf;
        }
        if set.contains(&x) {
            a_n.push(LatticePoint::from_slice_unchecked(&cur));
        }
        for i in (0..d).rev() {
            cur[i] += 1;
            if cur[i] <= hi_i[i] {
                continue 'outer;
            }
            cur[i] = lo_i[i];
        }
        break;
    }
    a_n
}

/// Lattice sup-norm sphere `{x : |x|_inf = r}` in dimension `d`.
pub fn sup_sphere(d: usize, r: u32) -> Vec<LatticePoint> {
    let origin = LatticePoint::from_slice_unchecked(&vec![0; d]);
    let ball = DiscreteBox::ball(origin, r);
    ball.points().filter(|p| p.sup_norm() == r as i32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::CompactSet;

    fn p(c: &[i32]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn origin_has_2d_neighbors() {
        let o = LatticePoint::origin(3).unwrap();
        let n: Vec<_> = o.neighbors().collect();
        assert_eq!(n.len(), 6);
        for q in &n {
            assert_eq!(q.norm_sq(), 1);
        }
    }

    #[test]
    fn neighbors_of_111() {
        let x = p(&[1, 1, 1]);
        let n: HashSet<_> = x.neighbors().collect();
        assert_eq!(n.len(), 6);
        assert!(n.contains(&p(&[0, 1, 1])));
        assert!(n.contains(&p(&[2, 1, 1])));
        assert!(n.contains(&p(&[1, 1, 2])));
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(LatticePoint::new(&[1, 2]).is_err());
        assert!(LatticePoint::origin(7).is_err());
    }

    #[test]
    fn box_indexing_roundtrip() {
        let b = DiscreteBox::new(p(&[-2, 0, 3]), &[3, 4, 5]).unwrap();
        assert_eq!(b.len(), 60);
        for (i, q) in b.points().enumerate() {
            assert_eq!(b.index_of(&q), Some(i));
        }
        assert_eq!(b.index_of(&p(&[1, 0, 3])), None);
        assert_eq!(b.max_corner(), p(&[0, 3, 7]));
    }

    #[test]
    fn half_open_convention_tiles() {
        let a = DiscreteBox::cube(p(&[0, 0, 0]), 4).unwrap();
        let b = DiscreteBox::cube(p(&[4, 0, 0]), 4).unwrap();
        for q in a.points() {
            assert!(!b.contains(&q));
        }
    }

    #[test]
    fn box_boundaries() {
        let b = DiscreteBox::cube(p(&[0, 0, 0]), 4).unwrap();
        assert_eq!(b.inner_boundary().len(), 64 - 8);
        // 6 faces of 16 sites
        assert_eq!(b.outer_boundary().len(), 6 * 16);
    }

    #[test]
    fn blow_up_cube() {
        let a = CompactSet::cube(3, -1.0, 1.0);
        let pair = blow_up(&a, 2.0, 4).unwrap();
        assert_eq!(pair.a_n.len(), 729);
        assert!(pair.a_n.iter().all(|x| x.sup_norm() <= 4));
        assert!(pair.s_n.iter().all(|x| x.sup_norm() == 8));
        assert_eq!(pair.s_n.len(), 17usize.pow(3) - 15usize.pow(3));
    }

    #[test]
    fn blow_up_unit_ball() {
        let a = CompactSet::ball(vec![0.0; 3], 1.0);
        let pair = blow_up(&a, 2.0, 1).unwrap();
        let mut got = pair.a_n.clone();
        got.sort();
        let mut want = vec![p(&[0, 0, 0])];
        for i in 0..3 {
            want.push(LatticePoint::unit(3, i).unwrap());
            want.push(LatticePoint::unit(3, i).unwrap().neg());
        }
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn blow_up_rejects_set_touching_box() {
        let a = CompactSet::cube(3, -2.0, 2.0);
        assert!(blow_up(&a, 2.0, 3).is_err());
    }

    #[test]
    fn blow_up_disjoint_from_sphere() {
        let a = CompactSet::ball(vec![0.1, 0.0, -0.2], 1.5);
        for n in 1..6 {
            let pair = blow_up(&a, 2.0, n).unwrap();
            let s: HashSet<_> = pair.s_n.iter().collect();
            assert!(pair.a_n.iter().all(|x| !s.contains(x)));
        }
    }
}
