//! Finite lattice point sets with O(1) membership and rank lookup over their bounding box.

use crate::lattice::{DiscreteBox, LatticePoint};

#[derive(Clone, Debug)]
pub struct PointSet {
    points: Vec<LatticePoint>,
    bbox: DiscreteBox,
    /// Rank of each bounding-box cell in `points`, `u32::MAX` when absent.
    ranks: Vec<u32>,
}

impl PointSet {
    /// Builds a set from points (duplicates removed, order sorted). Panics on an empty input.
    pub fn new(points: &[LatticePoint]) -> Self {
        assert!(!points.is_empty(), "point set must be nonempty");
        let d = points[0].dim();
        let mut lo = points[0].coords().to_vec();
        let mut hi = lo.clone();
        for p in points {
            for i in 0..d {
                lo[i] = lo[i].min(p.coord(i));
                hi[i] = hi[i].max(p.coord(i));
            }
        }
        let sides: Vec<u32> = (0..d).map(|i| (hi[i] - lo[i] + 1) as u32).collect();
        let bbox = DiscreteBox::new(LatticePoint::from_slice_unchecked(&lo), &sides)
            .expect("valid bounding box");
        let mut ranks = vec![u32::MAX; bbox.len()];
        let mut uniq = Vec::with_capacity(points.len());
        for p in points {
            let i = bbox.index_of(p).expect("inside bbox");
            if ranks[i] == u32::MAX {
                ranks[i] = 0;
                uniq.push(*p);
            }
        }
        uniq.sort();
        for (r, p) in uniq.iter().enumerate() {
            ranks[bbox.index_of(p).expect("inside bbox")] = r as u32;
        }
        Self {
            points: uniq,
            bbox,
            ranks,
        }
    }

    pub fn from_box(b: &DiscreteBox) -> Self {
        Self::new(&b.points().collect::<Vec<_>>())
    }

    #[inline]
    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.rank(p).is_some()
    }

    /// Position of `p` in [`points`](Self::points).
    #[inline]
    pub fn rank(&self, p: &LatticePoint) -> Option<usize> {
        let i = self.bbox.index_of(p)?;
        let r = self.ranks[i];
        (r != u32::MAX).then_some(r as usize)
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn bounding_box(&self) -> &DiscreteBox {
        &self.bbox
    }

    /// Points with at least one neighbour outside the set.
    pub fn inner_boundary(&self) -> Vec<LatticePoint> {
        self.points
            .iter()
            .filter(|p| p.neighbors().any(|q| !self.contains(&q)))
            .copied()
            .collect()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        let b = &self.bbox;
        if self.points.len() <= 2000 {
            let mut m = 0i64;
            for (i, a) in self.points.iter().enumerate() {
                for c in &self.points[i + 1..] {
                    m = m.max(a.sub(c).norm_sq());
                }
            }
            (m as f64).sqrt()
        } else {
            b.sides().iter().map(|&s| ((s - 1) as f64).powi(2)).sum::<f64>().sqrt()
        }
    }

    /// Center of the bounding box in real coordinates.
    pub fn center(&self) -> Vec<f64> {
        let lo = self.bbox.min_corner();
        let hi = self.bbox.max_corner();
        (0..self.dim())
            .map(|i| 0.5 * (lo.coord(i) + hi.coord(i)) as f64)
            .collect()
    }

    /// Lattice point nearest to the bounding-box center.
    pub fn center_point(&self) -> LatticePoint {
        let c: Vec<i32> = self.center().iter().map(|v| v.floor() as i32).collect();
        LatticePoint::from_slice_unchecked(&c)
    }

    /// Smallest `r` with the set inside the sup-norm ball `B(center_point, r)`.
    pub fn sup_radius(&self) -> i32 {
        let c = self.center_point();
        self.points.iter().map(|p| p.sub(&c).sup_norm()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_and_dedup() {
        let a = LatticePoint::new(&[0, 0, 0]).unwrap();
        let b = LatticePoint::new(&[2, -1, 0]).unwrap();
        let s = PointSet::new(&[a, b, a]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.rank(&b), Some(1));
        assert!(s.contains(&a) && s.contains(&b));
        assert!(!s.contains(&LatticePoint::new(&[1, 0, 0]).unwrap()));
        assert!(!s.contains(&LatticePoint::new(&[9, 9, 9]).unwrap()));
        assert!((s.diameter() - 5f64.sqrt()).abs() < 1e-12);
    }
}
