//! Axis-aligned geometry on the closed upper half-plane.
//!
//! Regions of interest are rectangles `[x0, x1] x [y0, y1]` with `y0 >= 0`,
//! Carleson cubes `Q_[a,b] = [a, b] x [0, b - a]` sitting on the boundary,
//! and the Whitney-type decompositions that split a cube into two half-size
//! cubes plus an upper rectangle at definite distance from the boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coordinates must be finite, got ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("interval [{0}, {1}] is empty or reversed")]
    EmptyInterval(f64, f64),
    #[error("rectangle must lie in the closed upper half-plane, got y0 = {0}")]
    BelowBoundary(f64),
    #[error("subdivision count must be positive")]
    ZeroSubdivision,
}

/// Closed rectangle `[x0, x1] x [y0, y1]` in the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UHPRect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl UHPRect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, GeometryError> {
        for &(a, b) in &[(x0, x1), (y0, y1)] {
            if !a.is_finite() || !b.is_finite() {
                return Err(GeometryError::NonFinite(a, b));
            }
        }
        if x1 <= x0 {
            return Err(GeometryError::EmptyInterval(x0, x1));
        }
        if y1 <= y0 {
            return Err(GeometryError::EmptyInterval(y0, y1));
        }
        if y0 < 0.0 {
            return Err(GeometryError::BelowBoundary(y0));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Whether the rectangle touches the real axis.
    pub fn touches_boundary(&self) -> bool {
        self.y0 == 0.0
    }

    /// Image under `z -> r z`, `r > 0`.
    pub fn scaled(&self, r: f64) -> Result<Self, GeometryError> {
        if !r.is_finite() || r <= 0.0 {
            return Err(GeometryError::EmptyInterval(0.0, r));
        }
        Self::new(r * self.x0, r * self.x1, r * self.y0, r * self.y1)
    }

    /// Image under `z -> z + dx` (horizontal translation).
    pub fn translated(&self, dx: f64) -> Result<Self, GeometryError> {
        Self::new(self.x0 + dx, self.x1 + dx, self.y0, self.y1)
    }

    /// Reflection across the vertical line `x = 0`.
    pub fn mirrored(&self) -> Self {
        Self {
            x0: -self.x1,
            x1: -self.x0,
            y0: self.y0,
            y1: self.y1,
        }
    }

    pub fn contains(&self, other: &UHPRect) -> bool {
        self.x0 <= other.x0 && other.x1 <= self.x1 && self.y0 <= other.y0 && other.y1 <= self.y1
    }

    /// CSV row `x0,x1,y0,y1` with shortest round-trip float formatting.
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.x0, self.x1, self.y0, self.y1)
    }
}

/// Carleson cube `Q_[a,b] = [a, b] x [0, b - a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlesonCube {
    pub a: f64,
    pub b: f64,
}

impl CarlesonCube {
    pub fn new(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::NonFinite(a, b));
        }
        if b <= a {
            return Err(GeometryError::EmptyInterval(a, b));
        }
        Ok(Self { a, b })
    }

    pub fn side(&self) -> f64 {
        self.b - self.a
    }

    pub fn rect(&self) -> UHPRect {
        UHPRect {
            x0: self.a,
            x1: self.b,
            y0: 0.0,
            y1: self.side(),
        }
    }

    /// Left and right half cubes sharing the midpoint of `[a, b]`.
    pub fn halves(&self) -> (CarlesonCube, CarlesonCube) {
        let m = 0.5 * (self.a + self.b);
        (CarlesonCube { a: self.a, b: m }, CarlesonCube { a: m, b: self.b })
    }
}

/// One step of the Whitney-type decomposition of a Carleson cube: two
/// half-size cubes on the boundary plus the upper rectangle, which together
/// tile the original cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneySplit {
    pub left: CarlesonCube,
    pub right: CarlesonCube,
    pub top: UHPRect,
}

/// Splits `Q_[a,b]` into the half cubes `Q_[a,m]`, `Q_[m,b]` and the upper
/// rectangle `[a, b] x [s/2, s]` with `s = b - a`.
pub fn whitney_split(cube: &CarlesonCube) -> WhitneySplit {
    let (left, right) = cube.halves();
    let s = cube.side();
    WhitneySplit {
        left,
        right,
        top: UHPRect {
            x0: cube.a,
            x1: cube.b,
            y0: 0.5 * s,
            y1: s,
        },
    }
}

/// Iterated Whitney decomposition to the given depth.
///
/// Depth `n` applies the split at scales `2^0, ..., 2^-n`, producing `2^k`
/// upper rectangles at each scale `k <= n` and `2^(n+1)` residual bottom
/// cubes. The returned pieces tile the cube exactly.
pub fn whitney_partition(cube: &CarlesonCube, depth: u32) -> (Vec<UHPRect>, Vec<CarlesonCube>) {
    let mut tops = Vec::new();
    let mut cubes = vec![*cube];
    for _ in 0..=depth {
        let mut next = Vec::with_capacity(2 * cubes.len());
        for q in &cubes {
            let split = whitney_split(q);
            tops.push(split.top);
            next.push(split.left);
            next.push(split.right);
        }
        cubes = next;
    }
    (tops, cubes)
}

/// Horizontal dyadic slices `[-r, r] x [2^-(n+1) r, 2^-n r]` for
/// `n = 0, ..., levels - 1`. Their total height is `r (1 - 2^-levels)`.
pub fn horizontal_slices(r: f64, levels: u32) -> Result<Vec<UHPRect>, GeometryError> {
    if !r.is_finite() || r <= 0.0 {
        return Err(GeometryError::EmptyInterval(0.0, r));
    }
    if levels == 0 {
        return Err(GeometryError::ZeroSubdivision);
    }
    (0..levels)
        .map(|n| {
            let hi = r * 0.5f64.powi(n as i32);
            UHPRect::new(-r, r, 0.5 * hi, hi)
        })
        .collect()
}

/// Which half of a split cube a vertical slice family lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Vertical slices of width `delta = r / n_subdiv` covering one half of the
/// split of `Q_[-r,r]`, ordered outward from the shared edge at `x = 0`.
///
/// For the right side the `j`-th slice is `[(j-1) delta, j delta] x [0, r]`;
/// the left side mirrors it.
pub fn vertical_slices(r: f64, n_subdiv: u32, side: Side) -> Result<Vec<UHPRect>, GeometryError> {
    if !r.is_finite() || r <= 0.0 {
        return Err(GeometryError::EmptyInterval(0.0, r));
    }
    if n_subdiv == 0 {
        return Err(GeometryError::ZeroSubdivision);
    }
    let delta = r / n_subdiv as f64;
    (1..=n_subdiv)
        .map(|j| {
            let lo = (j - 1) as f64 * delta;
            let hi = j as f64 * delta;
            match side {
                Side::Right => UHPRect::new(lo, hi, 0.0, r),
                Side::Left => UHPRect::new(-hi, -lo, 0.0, r),
            }
        })
        .collect()
}

/// Region descriptor accepted by the CLI and the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Carleson { a: f64, b: f64 },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl RegionSpec {
    pub fn resolve(&self) -> Result<UHPRect, GeometryError> {
        match *self {
            RegionSpec::Carleson { a, b } => Ok(CarlesonCube::new(a, b)?.rect()),
            RegionSpec::Rect { x0, x1, y0, y1 } => UHPRect::new(x0, x1, y0, y1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} != {b}");
    }

    #[test]
    fn carleson_cube_has_side_equal_height() {
        let q = CarlesonCube::new(-1.0, 1.0).unwrap();
        assert_eq!(q.side(), 2.0);
        assert_eq!(q.rect(), UHPRect { x0: -1.0, x1: 1.0, y0: 0.0, y1: 2.0 });
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert_eq!(
            CarlesonCube::new(1.0, 1.0),
            Err(GeometryError::EmptyInterval(1.0, 1.0))
        );
        assert!(CarlesonCube::new(f64::NAN, 1.0).is_err());
        assert_eq!(
            UHPRect::new(0.0, 1.0, -0.5, 1.0),
            Err(GeometryError::BelowBoundary(-0.5))
        );
        assert!(UHPRect::new(0.0, 1.0, 0.5, 0.5).is_err());
        assert!(UHPRect::new(0.0, 1.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn whitney_split_tiles_the_cube() {
        let q = CarlesonCube::new(-1.0, 1.0).unwrap();
        let s = whitney_split(&q);
        assert_eq!(s.left, CarlesonCube { a: -1.0, b: 0.0 });
        assert_eq!(s.right, CarlesonCube { a: 0.0, b: 1.0 });
        assert_eq!(s.top, UHPRect { x0: -1.0, x1: 1.0, y0: 1.0, y1: 2.0 });
        let total = s.left.rect().area() + s.right.rect().area() + s.top.area();
        assert_close(total, q.rect().area());
    }

    #[test]
    fn whitney_partition_counts_follow_the_dyadic_law() {
        let q = CarlesonCube::new(0.0, 1.0).unwrap();
        let (tops, cubes) = whitney_partition(&q, 2);
        assert_eq!(tops.len(), 1 + 2 + 4);
        assert_eq!(cubes.len(), 8);
        let area: f64 =
            tops.iter().map(|t| t.area()).sum::<f64>() + cubes.iter().map(|c| c.rect().area()).sum::<f64>();
        assert_close(area, 1.0);
        for c in &cubes {
            assert_close(c.side(), 0.125);
        }
    }

    #[test]
    fn horizontal_slices_match_the_dyadic_heights() {
        let slices = horizontal_slices(1.0, 4).unwrap();
        assert_eq!(slices.len(), 4);
        assert_eq!(slices[0], UHPRect { x0: -1.0, x1: 1.0, y0: 0.5, y1: 1.0 });
        assert_eq!(slices[3].y0, 1.0 / 16.0);
        let total: f64 = slices.iter().map(|s| s.height()).sum();
        assert_close(total, 1.0 - 1.0 / 16.0);
    }

    #[test]
    fn vertical_slices_partition_each_half() {
        let right = vertical_slices(0.5, 4, Side::Right).unwrap();
        assert_eq!(right.len(), 4);
        assert_eq!(right[0], UHPRect { x0: 0.0, x1: 0.125, y0: 0.0, y1: 0.5 });
        assert_eq!(right[3].x1, 0.5);
        let left = vertical_slices(0.5, 4, Side::Left).unwrap();
        assert_eq!(left[0], UHPRect { x0: -0.125, x1: 0.0, y0: 0.0, y1: 0.5 });
        for (l, r) in left.iter().zip(&right) {
            assert_eq!(l.mirrored(), *r);
        }
        let width: f64 = right.iter().map(|s| s.width()).sum();
        assert_close(width, 0.5);
    }

    #[test]
    fn region_spec_resolves_both_kinds() {
        let c = RegionSpec::Carleson { a: -1.0, b: 1.0 };
        assert_eq!(c.resolve().unwrap(), CarlesonCube::new(-1.0, 1.0).unwrap().rect());
        let r = RegionSpec::Rect { x0: 0.0, x1: 1.0, y0: 0.25, y1: 0.5 };
        assert_eq!(r.resolve().unwrap(), UHPRect::new(0.0, 1.0, 0.25, 0.5).unwrap());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"kind":"carleson","a":-1.0,"b":1.0}"#);
    }

    #[test]
    fn csv_row_round_trips_coordinates() {
        let r = UHPRect::new(-0.25, 0.5, 0.0, 0.125).unwrap();
        assert_eq!(r.csv_row(), "-0.25,0.5,0,0.125");
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn cube_strategy() -> impl Strategy<Value = CarlesonCube> {
        (-4.0f64..4.0, 0.01f64..4.0).prop_map(|(a, s)| CarlesonCube::new(a, a + s).unwrap())
    }

    proptest! {
        #[test]
        fn whitney_split_preserves_area(q in cube_strategy()) {
            let s = whitney_split(&q);
            let total = s.left.rect().area() + s.right.rect().area() + s.top.area();
            prop_assert!((total - q.rect().area()).abs() <= 1e-12 * q.rect().area());
            prop_assert!(q.rect().contains(&s.top));
            prop_assert!(q.rect().contains(&s.left.rect()));
            // The top rectangle sits at height comparable to its distance
            // from the boundary: y0 equals half the cube side.
            prop_assert!((s.top.y0 - 0.5 * q.side()).abs() <= 1e-12 * q.side());
        }

        #[test]
        fn whitney_partition_tiles_exactly(q in cube_strategy(), depth in 0u32..5) {
            let (tops, cubes) = whitney_partition(&q, depth);
            prop_assert_eq!(cubes.len(), 1usize << (depth + 1));
            let mut area = 0.0;
            for t in &tops { area += t.area(); }
            for c in &cubes { area += c.rect().area(); }
            prop_assert!((area - q.rect().area()).abs() <= 1e-9 * q.rect().area());
            // Pieces are pairwise disjoint up to shared edges: check by
            // pairwise interior-overlap test.
            let mut rects: Vec<UHPRect> = tops.clone();
            rects.extend(cubes.iter().map(|c| c.rect()));
            for i in 0..rects.len() {
                for j in (i + 1)..rects.len() {
                    let (a, b) = (&rects[i], &rects[j]);
                    let overlap_x = a.x0.max(b.x0) < a.x1.min(b.x1) - 1e-12;
                    let overlap_y = a.y0.max(b.y0) < a.y1.min(b.y1) - 1e-12;
                    prop_assert!(!(overlap_x && overlap_y), "pieces {i} and {j} overlap");
                }
            }
        }

        #[test]
        fn scaling_maps_cubes_to_cubes(q in cube_strategy(), r in 0.05f64..3.0) {
            let scaled = q.rect().scaled(r).unwrap();
            let expect = CarlesonCube::new(r * q.a, r * q.b).unwrap().rect();
            prop_assert!((scaled.x0 - expect.x0).abs() <= 1e-12 * expect.x0.abs().max(1.0));
            prop_assert!((scaled.y1 - expect.y1).abs() <= 1e-12 * expect.y1.abs().max(1.0));
        }

        #[test]
        fn vertical_slices_tile_the_half(r in 0.05f64..2.0, n in 1u32..12) {
            let slices = vertical_slices(r, n, Side::Right).unwrap();
            prop_assert_eq!(slices.len(), n as usize);
            let width: f64 = slices.iter().map(|s| s.width()).sum();
            prop_assert!((width - r).abs() <= 1e-9 * r);
            for w in slices.windows(2) {
                prop_assert!((w[0].x1 - w[1].x0).abs() <= 1e-12 * r.max(1.0));
            }
        }
    }
}
