//! Parameter ranges and the normalized parameter space shared by the
//! samplers, the baselines and the particle filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::PhysParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Standard deviation of the uniform distribution on the range.
    pub fn uniform_std(&self) -> f64 {
        self.width() / 12f64.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Folds `v` back into the range by mirroring at the bounds.
    pub fn reflect(&self, v: f64) -> f64 {
        if self.is_degenerate() || !v.is_finite() {
            return self.clamp(v);
        }
        let w = self.width();
        let u = (v - self.lo).rem_euclid(2.0 * w);
        self.lo + if u > w { 2.0 * w - u } else { u }
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.lo) / self.width()
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lo + u * self.width()
    }
}

/// Ranges for every component of [`PhysParams`], in `e, g, c, r, table_h`
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub e: ParamRange,
    pub g: ParamRange,
    pub c: ParamRange,
    pub r: ParamRange,
    pub table_h: ParamRange,
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self {
            e: ParamRange::new(0.6, 1.0),
            g: ParamRange::new(-12.81, -6.81),
            c: ParamRange::new(0.0005, 0.05),
            r: ParamRange::new(0.0, 0.7),
            table_h: ParamRange::new(0.0, 1.0),
        }
    }
}

impl ParamSpace {
    /// The default ranges with the surface pinned at height zero.
    pub fn flat_table() -> Self {
        Self { table_h: ParamRange::point(0.0), ..Self::default() }
    }

    pub fn ranges(&self) -> [ParamRange; 5] {
        [self.e, self.g, self.c, self.r, self.table_h]
    }

    pub fn is_valid(&self) -> bool {
        let inside = |r: &ParamRange, lo: f64, hi: f64| r.is_valid() && r.lo >= lo && r.hi <= hi;
        inside(&self.e, 0.0, 1.0)
            && self.g.is_valid()
            && self.g.hi < 0.0
            && inside(&self.c, 0.0, f64::INFINITY)
            && inside(&self.r, 0.0, 1.0)
            && self.r.hi < 1.0
            && inside(&self.table_h, 0.0, f64::INFINITY)
    }

    /// Indices of the components that actually vary.
    pub fn free_dims(&self) -> Vec<usize> {
        self.ranges()
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_degenerate())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> PhysParams {
        let r = self.ranges();
        PhysParams::from_array([
            r[0].sample(rng),
            r[1].sample(rng),
            r[2].sample(rng),
            r[3].sample(rng),
            r[4].sample(rng),
        ])
    }

    pub fn midpoint(&self) -> PhysParams {
        let r = self.ranges();
        PhysParams::from_array(std::array::from_fn(|i| r[i].midpoint()))
    }

    pub fn clamp(&self, p: &PhysParams) -> PhysParams {
        let r = self.ranges();
        let a = p.to_array();
        PhysParams::from_array(std::array::from_fn(|i| r[i].clamp(a[i])))
    }

    pub fn contains(&self, p: &PhysParams) -> bool {
        let r = self.ranges();
        p.to_array().iter().zip(r.iter()).all(|(v, r)| r.contains(*v))
    }

    /// Coordinates of `p` in the unit cube over the free dimensions.
    pub fn to_unit(&self, p: &PhysParams) -> Vec<f64> {
        let r = self.ranges();
        let a = p.to_array();
        self.free_dims().into_iter().map(|i| r[i].to_unit(a[i])).collect()
    }

    /// Inverse of [`ParamSpace::to_unit`]; fixed dimensions take their
    /// range's lower bound.
    pub fn from_unit(&self, u: &[f64]) -> PhysParams {
        let r = self.ranges();
        let mut a: [f64; 5] = std::array::from_fn(|i| r[i].lo);
        for (k, i) in self.free_dims().into_iter().enumerate() {
            a[i] = r[i].from_unit(u[k]);
        }
        PhysParams::from_array(a)
    }

    /// Mean squared range-normalized error over the free dimensions.
    pub fn normalized_error(&self, estimate: &PhysParams, truth: &PhysParams) -> f64 {
        let r = self.ranges();
        let (a, b) = (estimate.to_array(), truth.to_array());
        let dims = self.free_dims();
        if dims.is_empty() {
            return 0.0;
        }
        dims.iter()
            .map(|&i| {
                let d = (a[i] - b[i]) / r[i].width();
                d * d
            })
            .sum::<f64>()
            / dims.len() as f64
    }

    /// Squared range-normalized error of a single component.
    pub fn component_error(&self, idx: usize, estimate: f64, truth: f64) -> f64 {
        let r = self.ranges()[idx];
        if r.is_degenerate() {
            return 0.0;
        }
        let d = (estimate - truth) / r.width();
        d * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_round_trip_on_free_dims() {
        let space = ParamSpace::flat_table();
        assert_eq!(space.free_dims(), vec![0, 1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = space.sample_uniform(&mut rng);
            assert!(space.contains(&p));
            let back = space.from_unit(&space.to_unit(&p));
            for (a, b) in p.to_array().iter().zip(back.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_error_is_zero_at_truth() {
        let space = ParamSpace::default();
        let p = space.midpoint();
        assert_eq!(space.normalized_error(&p, &p), 0.0);
        let mut q = p;
        q.e = space.e.hi;
        assert!((space.normalized_error(&q, &p) - 0.25 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_mirrors_at_bounds() {
        let r = ParamRange::new(0.0, 0.7);
        assert!((r.reflect(0.75) - 0.65).abs() < 1e-12);
        assert!((r.reflect(-0.1) - 0.1).abs() < 1e-12);
        assert!((r.reflect(1.5) - 0.1).abs() < 1e-12);
        assert_eq!(r.reflect(0.3), 0.3);
        assert_eq!(ParamRange::point(2.0).reflect(5.0), 2.0);
    }

    #[test]
    fn default_space_is_valid() {
        assert!(ParamSpace::default().is_valid());
        let mut bad = ParamSpace::default();
        bad.r = ParamRange::new(0.0, 1.0);
        assert!(!bad.is_valid());
    }
}
