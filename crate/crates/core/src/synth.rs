//! Seeded synthetic label maps and Monte-Carlo sample stacks.
//!
//! Each region paints its class over the background (later regions win) and
//! carries two noise knobs:
//!
//! * `softness` spreads every sample's mass towards uniform. All samples stay
//!   identical, so it raises predictive entropy without raising mutual
//!   information.
//! * `flip_rate` is the chance that a given sample favours the region's decoy
//!   class. The draw is made once per (region, sample) and shared by every
//!   pixel of the region, so samples disagree coherently inside it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ClassMap, ProbStack, ScalarMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Rect {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    /// Pixels within `radius` (Euclidean, inclusive) of the centre.
    Disk {
        row: usize,
        col: usize,
        radius: usize,
    },
}

impl Shape {
    fn contains(&self, r: usize, c: usize) -> bool {
        match *self {
            Shape::Rect { top, left, height, width } => {
                (top..top + height).contains(&r) && (left..left + width).contains(&c)
            }
            Shape::Disk { row, col, radius } => {
                let dr = r.abs_diff(row);
                let dc = c.abs_diff(col);
                dr * dr + dc * dc <= radius * radius
            }
        }
    }

    fn fits(&self, height: usize, width: usize) -> bool {
        match *self {
            Shape::Rect { top, left, height: h, width: w } => h > 0 && w > 0 && top + h <= height && left + w <= width,
            Shape::Disk { row, col, radius } => {
                row >= radius && col >= radius && row + radius < height && col + radius < width
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(flatten)]
    pub shape: Shape,
    pub class: u32,
    /// Class favoured by flipped samples; defaults to `(class + 1) mod C`.
    #[serde(default)]
    pub decoy: Option<u32>,
    #[serde(default)]
    pub softness: f64,
    #[serde(default)]
    pub flip_rate: f64,
}

impl Region {
    pub fn rect(top: usize, left: usize, height: usize, width: usize, class: u32) -> Self {
        Self { shape: Shape::Rect { top, left, height, width }, class, decoy: None, softness: 0.0, flip_rate: 0.0 }
    }

    pub fn disk(row: usize, col: usize, radius: usize, class: u32) -> Self {
        Self { shape: Shape::Disk { row, col, radius }, ..Self::rect(0, 0, 1, 1, class) }
    }

    pub fn softness(mut self, alpha: f64) -> Self {
        self.softness = alpha;
        self
    }

    pub fn flip_rate(mut self, eps: f64) -> Self {
        self.flip_rate = eps;
        self
    }

    pub fn decoy(mut self, class: u32) -> Self {
        self.decoy = Some(class);
        self
    }

    fn decoy_class(&self, class_count: usize) -> u32 {
        self.decoy.unwrap_or((self.class + 1) % class_count as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub samples: usize,
    #[serde(default)]
    pub background: u32,
    #[serde(default, rename = "region")]
    pub regions: Vec<Region>,
}

impl SynthSpec {
    pub fn new(seed: u64, height: usize, width: usize, classes: usize, samples: usize) -> Self {
        Self { seed, height, width, classes, samples, background: 0, regions: Vec::new() }
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.regions.push(region);
        self
    }

    /// Parses the TOML configuration accepted by `segunc synth`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("synth config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("synthetic image must be at least 1x1"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 classes"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("synthetic data needs at least one sample"));
        }
        let c = self.classes as u32;
        if self.background >= c {
            return Err(Error::invalid(format!("background class {} >= {c}", self.background)));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !r.shape.fits(self.height, self.width) {
                return Err(Error::invalid(format!("region {i} lies outside the image")));
            }
            if r.class >= c || r.decoy_class(self.classes) >= c {
                return Err(Error::invalid(format!("region {i} names a class outside [0, {c})")));
            }
            if r.decoy_class(self.classes) == r.class {
                return Err(Error::invalid(format!("region {i} decoy equals its class")));
            }
            if !(0.0..=1.0).contains(&r.softness) || !(0.0..=1.0).contains(&r.flip_rate) {
                return Err(Error::invalid(format!("region {i} noise levels must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// A random scene of `region_count` rectangles and disks.
    pub fn random(seed: u64, height: usize, width: usize, classes: usize, samples: usize, region_count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let mut spec = Self::new(seed, height, width, classes, samples);
        spec.background = rng.random_range(0..classes as u32);
        for _ in 0..region_count {
            let class = rng.random_range(0..classes as u32);
            let shape = if rng.random_bool(0.5) || height.min(width) < 3 {
                let h = rng.random_range(1..=height);
                let w = rng.random_range(1..=width);
                Shape::Rect {
                    top: rng.random_range(0..=height - h),
                    left: rng.random_range(0..=width - w),
                    height: h,
                    width: w,
                }
            } else {
                let radius = rng.random_range(1..=(height.min(width) - 1) / 2);
                Shape::Disk {
                    row: rng.random_range(radius..height - radius),
                    col: rng.random_range(radius..width - radius),
                    radius,
                }
            };
            spec.regions.push(Region {
                shape,
                class,
                decoy: None,
                softness: rng.random_range(0.0..=1.0),
                flip_rate: rng.random_range(0.0..=1.0),
            });
        }
        spec
    }
}

/// Ground truth and sample stack for `spec`.
pub fn generate(spec: &SynthSpec) -> Result<(ClassMap, ProbStack)> {
    spec.validate()?;
    let (h, w, c, t_count) = (spec.height, spec.width, spec.classes, spec.samples);
    let hw = h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let flips: Vec<Vec<bool>> =
        spec.regions.iter().map(|r| (0..t_count).map(|_| rng.random::<f64>() < r.flip_rate).collect()).collect();

    let owner: Vec<Option<usize>> =
        (0..hw).map(|p| spec.regions.iter().rposition(|r| r.shape.contains(p / w, p % w))).collect();
    let labels: Vec<u32> = owner.iter().map(|o| o.map_or(spec.background, |k| spec.regions[k].class)).collect();

    let mut values = vec![0.0; t_count * c * hw];
    for t in 0..t_count {
        for p in 0..hw {
            let (favoured, alpha) = match owner[p] {
                Some(k) => {
                    let r = &spec.regions[k];
                    let fav = if flips[k][t] { r.decoy_class(c) } else { r.class };
                    (fav as usize, r.softness)
                }
                None => (spec.background as usize, 0.0),
            };
            let other = alpha / c as f64;
            let top = 1.0 - alpha * (c - 1) as f64 / c as f64;
            for k in 0..c {
                values[(t * c + k) * hw + p] = if k == favoured { top } else { other };
            }
        }
    }

    let gt = ClassMap::new(h, w, c as u32, None, labels)?;
    let stack = ProbStack::new(t_count, c, h, w, values)?;
    Ok((gt, stack))
}

/// Spatially shuffles the map's values with a seeded permutation.
pub fn misaligned_uncertainty(umap: &ScalarMap, seed: u64) -> ScalarMap {
    let mut values = umap.values().to_vec();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ScalarMap::from_raw(umap.height(), umap.width(), values).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{mutual_information, predictive_entropy};

    #[test]
    fn noise_free_limit() {
        let spec = SynthSpec::new(3, 12, 12, 3, 4).with_region(Region::rect(2, 2, 5, 6, 1));
        let (gt, stack) = generate(&spec).unwrap();
        assert_eq!(gt.get(3, 3), 1);
        assert_eq!(gt.get(0, 0), 0);
        assert!(predictive_entropy(&stack).values().iter().all(|&v| v == 0.0));
        assert!(mutual_information(&stack).values().iter().all(|&v| v == 0.0));
        assert_eq!(crate::tensor::argmax_prediction(&stack), gt);
    }

    #[test]
    fn pure_aleatoric_limit() {
        let spec = SynthSpec::new(1, 4, 4, 4, 3).with_region(Region::rect(0, 0, 4, 4, 2).softness(1.0));
        let (_, stack) = generate(&spec).unwrap();
        let h = predictive_entropy(&stack);
        let mi = mutual_information(&stack);
        assert!(h.values().iter().all(|v| (v - 4f64.ln()).abs() < 1e-12));
        assert!(mi.values().iter().all(|&v| v < 1e-12));
    }

    const SEED: u64 = 1;

    #[test]
    fn epistemic_region_approaches_log_two() {
        let spec = SynthSpec::new(SEED, 10, 10, 3, 64).with_region(Region::rect(2, 2, 4, 4, 1).flip_rate(0.5));
        let (gt, stack) = generate(&spec).unwrap();
        let mi = mutual_information(&stack);
        let flipped = (0..64).filter(|&t| stack.prob(t, 2, 2 * 10 + 2) == 1.0).count() as f64 / 64.0;
        let two_point = -(flipped * flipped.ln() + (1.0 - flipped) * (1.0 - flipped).ln());
        for r in 0..10 {
            for c in 0..10 {
                let v = mi.get(r, c);
                if gt.get(r, c) == 1 {
                    assert!((v - two_point).abs() < 1e-12, "inside MI {v} vs {two_point}");
                    assert!((v - 2f64.ln()).abs() <= 0.05, "inside MI {v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn determinism_and_validity() {
        let spec = SynthSpec::random(42, 16, 20, 5, 6, 4);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.validate(), Ok(()));
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let off = SynthSpec::new(0, 8, 8, 2, 1).with_region(Region::rect(6, 6, 4, 4, 1));
        assert!(generate(&off).is_err());
        let disk = SynthSpec::new(0, 8, 8, 2, 1).with_region(Region::disk(1, 4, 2, 1));
        assert!(generate(&disk).is_err());
        let noisy = SynthSpec::new(0, 8, 8, 2, 1).with_region(Region::rect(0, 0, 2, 2, 1).flip_rate(1.5));
        assert!(generate(&noisy).is_err());
        let same = SynthSpec::new(0, 8, 8, 2, 1).with_region(Region::rect(0, 0, 2, 2, 1).decoy(1));
        assert!(generate(&same).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            seed = 9
            height = 16
            width = 16
            classes = 4
            samples = 8
            background = 0

            [[region]]
            shape = "rect"
            top = 2
            left = 3
            height = 5
            width = 6
            class = 1
            flip_rate = 0.4

            [[region]]
            shape = "disk"
            row = 10
            col = 10
            radius = 3
            class = 2
            decoy = 3
            softness = 0.5
        "#;
        let spec = SynthSpec::from_toml(text).unwrap();
        assert_eq!(spec.regions.len(), 2);
        assert_eq!(spec.regions[1].shape, Shape::Disk { row: 10, col: 10, radius: 3 });
        assert_eq!(SynthSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn shuffle_preserves_values() {
        let m = ScalarMap::new(2, 3, vec![0.1, 0.5, 0.2, 0.9, 0.0, 0.3]).unwrap();
        let s = misaligned_uncertainty(&m, 7);
        let mut a = m.values().to_vec();
        let mut b = s.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let c = ScalarMap::constant(3, 3, 0.4).unwrap();
        assert_eq!(misaligned_uncertainty(&c, 1), c);
    }
}
