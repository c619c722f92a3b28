//! Compact subsets of `R^d`: axis-aligned boxes, Euclidean balls and finite unions.

use serde::{Deserialize, Serialize};

/// A compact set in `R^d`. Membership is inclusive on the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CompactSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Union { parts: Vec<CompactSet> },
}

impl CompactSet {
    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        CompactSet::Box {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        CompactSet::Ball { center, radius }
    }

    pub fn union_of(parts: Vec<CompactSet>) -> Self {
        CompactSet::Union { parts }
    }

    pub fn dim(&self) -> usize {
        match self {
            CompactSet::Box { lo, .. } => lo.len(),
            CompactSet::Ball { center, .. } => center.len(),
            CompactSet::Union { parts } => parts.first().map(|p| p.dim()).unwrap_or(0),
        }
    }

    /// Checks the parameters are well formed (matching dimensions, positive extents).
    pub fn validate(&self) -> Result<(), String> {
        match self {
            CompactSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err("box corners differ in dimension".into());
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
                    return Err("box requires finite lo <= hi on every axis".into());
                }
                Ok(())
            }
            CompactSet::Ball { center, radius } => {
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err("ball radius must be finite and nonnegative".into());
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err("ball center must be finite".into());
                }
                Ok(())
            }
            CompactSet::Union { parts } => {
                if parts.is_empty() {
                    return Err("union needs at least one part".into());
                }
                let d = parts[0].dim();
                for p in parts {
                    p.validate()?;
                    if p.dim() != d {
                        return Err("union parts differ in dimension".into());
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            CompactSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b),
            CompactSet::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2 <= radius * radius * (1.0 + 1e-12)
            }
            CompactSet::Union { parts } => parts.iter().any(|p| p.contains(x)),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            CompactSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            CompactSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            CompactSet::Union { parts } => {
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for p in parts {
                    let (l, h) = p.bounding_box();
                    for i in 0..d {
                        lo[i] = lo[i].min(l[i]);
                        hi[i] = hi[i].max(h[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// True when the set lies in the open box `(-m, m)^d`.
    pub fn strictly_inside_box(&self, m: f64) -> bool {
        let (lo, hi) = self.bounding_box();
        lo.iter().all(|&v| v > -m) && hi.iter().all(|&v| v < m)
    }

    /// Euclidean distance from `x` to the set (0 inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            CompactSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| {
                    let t = if v < a {
                        a - v
                    } else if v > b {
                        v - b
                    } else {
                        0.0
                    };
                    t * t
                })
                .sum::<f64>()
                .sqrt(),
            CompactSet::Ball { center, radius } => {
                let r: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (r - radius).max(0.0)
            }
            CompactSet::Union { parts } => parts
                .iter()
                .map(|p| p.distance(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Euclidean diameter of the bounding box (an upper bound on the set diameter).
    pub fn diameter(&self) -> f64 {
        match self {
            CompactSet::Ball { radius, .. } => 2.0 * radius,
            _ => {
                let (lo, hi) = self.bounding_box();
                lo.iter()
                    .zip(&hi)
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// A ball `(center, radius)` containing the set.
    pub fn enclosing_ball(&self) -> (Vec<f64>, f64) {
        match self {
            CompactSet::Ball { center, radius } => (center.clone(), *radius),
            _ => {
                let (lo, hi) = self.bounding_box();
                let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                (c, 0.5 * self.diameter())
            }
        }
    }

    /// The image under `x -> alpha * x`.
    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            CompactSet::Box { lo, hi } => CompactSet::Box {
                lo: lo.iter().map(|v| v * alpha).collect(),
                hi: hi.iter().map(|v| v * alpha).collect(),
            },
            CompactSet::Ball { center, radius } => CompactSet::Ball {
                center: center.iter().map(|v| v * alpha).collect(),
                radius: radius * alpha,
            },
            CompactSet::Union { parts } => CompactSet::Union {
                parts: parts.iter().map(|p| p.scaled(alpha)).collect(),
            },
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        match self {
            CompactSet::Box { lo, hi } => CompactSet::Box {
                lo: lo.iter().zip(shift).map(|(v, s)| v + s).collect(),
                hi: hi.iter().zip(shift).map(|(v, s)| v + s).collect(),
            },
            CompactSet::Ball { center, radius } => CompactSet::Ball {
                center: center.iter().zip(shift).map(|(v, s)| v + s).collect(),
                radius: *radius,
            },
            CompactSet::Union { parts } => CompactSet::Union {
                parts: parts.iter().map(|p| p.translated(shift)).collect(),
            },
        }
    }

    /// Lebesgue volume. Exact for single boxes and balls; unions are estimated on a grid.
    pub fn volume(&self) -> f64 {
        match self {
            CompactSet::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            CompactSet::Ball { radius, center } => {
                let d = center.len() as f64;
                std::f64::consts::PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0)
                    * radius.powf(d)
            }
            CompactSet::Union { .. } => {
                let (lo, hi) = self.bounding_box();
                let d = lo.len();
                let n = 64usize;
                let cell: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a) / n as f64).product();
                let total = n.pow(d as u32);
                let mut x = vec![0.0; d];
                let mut count = 0usize;
                for mut k in 0..total {
                    for i in 0..d {
                        let j = k % n;
                        k /= n;
                        x[i] = lo[i] + (j as f64 + 0.5) * (hi[i] - lo[i]) / n as f64;
                    }
                    if self.contains(&x) {
                        count += 1;
                    }
                }
                count as f64 * cell
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_membership_is_inclusive() {
        let b = CompactSet::ball(vec![0.0; 3], 1.0);
        assert!(b.contains(&[1.0, 0.0, 0.0]));
        assert!(!b.contains(&[1.0, 0.1, 0.0]));
    }

    #[test]
    fn union_bounding_box() {
        let u = CompactSet::union_of(vec![
            CompactSet::cube(3, 0.0, 1.0),
            CompactSet::ball(vec![3.0, 0.0, 0.0], 0.5),
        ]);
        let (lo, hi) = u.bounding_box();
        assert_eq!(lo, vec![0.0, -0.5, -0.5]);
        assert_eq!(hi, vec![3.5, 1.0, 1.0]);
        assert!(u.strictly_inside_box(4.0));
        assert!(!u.strictly_inside_box(3.5));
    }

    #[test]
    fn distances() {
        let c = CompactSet::cube(3, 0.0, 1.0);
        assert_eq!(c.distance(&[0.5, 0.5, 0.5]), 0.0);
        assert!((c.distance(&[2.0, 2.0, 0.5]) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn serde_roundtrip() {
        let s = CompactSet::union_of(vec![CompactSet::cube(3, -1.0, 1.0)]);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"kind\":\"union\""));
        let back: CompactSet = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn ball_volume_d3() {
        let b = CompactSet::ball(vec![0.0; 3], 2.0);
        assert!((b.volume() - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-12);
    }
}
