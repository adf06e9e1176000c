//! 19-cell hexagonal network layout.
//!
//! Cells are hexagons of circumradius `R` with a vertex on the positive x
//! axis, so neighbouring cell centres sit `√3·R` apart at angles 30°, 90°,
//! and so on. The canonical symmetry sector is the triangle spanned by the
//! serving AP, the hexagon vertex `(R, 0)` and the midpoint of the edge at
//! 30°; every UT position in the central cell maps into it under one of the
//! twelve symmetries of the layout.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// A 2-D point in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of the 19 APs. Index 0 is the serving AP at the origin, 1..=6
/// the first ring and 7..=18 the second ring (ordered by angle from 0°).
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    cell_radius: f64,
    ap_positions: Vec<Point>,
    rings: Vec<u8>,
}

pub const AP_COUNT: usize = 19;

/// Builds the standard 19-cell layout for cell radius `r` (metres).
pub fn build_layout(r: f64) -> Result<NetworkLayout> {
    let r = positive("cell_radius", r)?;
    let mut ap_positions = Vec::with_capacity(AP_COUNT);
    let mut rings = Vec::with_capacity(AP_COUNT);
    ap_positions.push(Point::new(0.0, 0.0));
    rings.push(0);
    for k in 0..6 {
        ap_positions.push(Point::polar(SQRT_3 * r, FRAC_PI_6 + k as f64 * FRAC_PI_3));
        rings.push(1);
    }
    for k in 0..12 {
        let theta = k as f64 * FRAC_PI_6;
        let dist = if k % 2 == 0 {
            3.0 * r
        } else {
            2.0 * SQRT_3 * r
        };
        ap_positions.push(Point::polar(dist, theta));
        rings.push(2);
    }
    Ok(NetworkLayout {
        cell_radius: r,
        ap_positions,
        rings,
    })
}

impl NetworkLayout {
    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn ap_positions(&self) -> &[Point] {
        &self.ap_positions
    }

    pub fn ring(&self, index: usize) -> Result<u8> {
        self.rings
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                count: self.ap_positions.len(),
            })
    }

    pub fn ap(&self, index: usize) -> Result<Point> {
        self.ap_positions
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                count: self.ap_positions.len(),
            })
    }

    /// Outer boundary of the canonical sector at angle `theta`.
    pub fn sector_boundary(&self, theta: f64) -> f64 {
        0.5 * SQRT_3 * self.cell_radius / (theta - FRAC_PI_6).cos()
    }

    /// Vertices of the canonical sector triangle: origin, hexagon vertex,
    /// edge midpoint.
    pub fn sector_vertices(&self) -> [Point; 3] {
        [
            Point::new(0.0, 0.0),
            Point::new(self.cell_radius, 0.0),
            Point::polar(0.5 * SQRT_3 * self.cell_radius, FRAC_PI_6),
        ]
    }

    /// Index of the AP located at `p`, if any.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        let tol = 1e-9 * self.cell_radius;
        self.ap_positions.iter().position(|q| q.distance(p) < tol)
    }

    /// Distance from the UT at sector point `p` to AP `n`.
    pub fn distance(&self, n: usize, p: &SectorPoint) -> Result<f64> {
        let ap = self.ap(n)?;
        p.validate(self)?;
        Ok(p.to_cartesian().distance(&ap))
    }

    /// Distance from an arbitrary Cartesian position to AP `n`.
    pub fn distance_from(&self, n: usize, p: &Point) -> Result<f64> {
        Ok(p.distance(&self.ap(n)?))
    }
}

/// UT₀ position in polar coordinates inside the canonical sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorPoint {
    pub r0: f64,
    pub theta: f64,
}

impl SectorPoint {
    pub fn new(r0: f64, theta: f64) -> Self {
        Self { r0, theta }
    }

    pub fn from_cartesian(p: &Point) -> Self {
        Self::new(p.norm(), p.y.atan2(p.x))
    }

    pub fn to_cartesian(&self) -> Point {
        Point::polar(self.r0, self.theta)
    }

    pub fn validate(&self, layout: &NetworkLayout) -> Result<()> {
        let eps = 1e-12;
        let outside = Error::OutsideSector {
            r0: self.r0,
            theta: self.theta,
        };
        if !(-eps..=FRAC_PI_6 + eps).contains(&self.theta) || self.r0.is_nan() || self.r0 < 0.0 {
            return Err(outside);
        }
        let bound = layout.sector_boundary(self.theta.clamp(0.0, FRAC_PI_6));
        if self.r0 > bound * (1.0 + eps) {
            return Err(outside);
        }
        Ok(())
    }
}

/// Frequency reuse pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReusePattern {
    FR1,
    FR3,
}

impl ReusePattern {
    /// AP indices of the co-channel interferers.
    ///
    /// FR3 keeps the six second-ring APs at distance `3R`.
    pub fn interferer_indices(&self, layout: &NetworkLayout) -> Vec<usize> {
        match self {
            ReusePattern::FR1 => (1..AP_COUNT).collect(),
            ReusePattern::FR3 => {
                let target = 3.0 * layout.cell_radius;
                (1..AP_COUNT)
                    .filter(|&i| (layout.ap_positions[i].norm() - target).abs() < 1e-9 * target)
                    .collect()
            }
        }
    }

    pub fn interferer_count(&self) -> usize {
        match self {
            ReusePattern::FR1 => 18,
            ReusePattern::FR3 => 6,
        }
    }
}

impl std::fmt::Display for ReusePattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReusePattern::FR1 => f.write_str("FR1"),
            ReusePattern::FR3 => f.write_str("FR3"),
        }
    }
}

impl std::str::FromStr for ReusePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FR1" => Ok(ReusePattern::FR1),
            "FR3" => Ok(ReusePattern::FR3),
            other => Err(Error::Config(format!(
                "unknown reuse pattern `{other}` (expected FR1 or FR3)"
            ))),
        }
    }
}

/// One of the twelve isometries (six rotations, six reflections) that map
/// the layout onto itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Symmetry {
    /// Rotation by `k·60°`, applied after the optional reflection.
    pub rotation: u8,
    /// Reflect across the x axis first.
    pub reflect: bool,
}

impl Symmetry {
    pub fn all() -> Vec<Symmetry> {
        let mut out = Vec::with_capacity(12);
        for reflect in [false, true] {
            for rotation in 0..6 {
                out.push(Symmetry { rotation, reflect });
            }
        }
        out
    }

    pub fn apply(&self, p: &Point) -> Point {
        let y = if self.reflect { -p.y } else { p.y };
        let (s, c) = (self.rotation as f64 * FRAC_PI_3).sin_cos();
        Point::new(c * p.x - s * y, s * p.x + c * y)
    }

    /// The AP permutation induced on the layout.
    pub fn permute(&self, layout: &NetworkLayout, index: usize) -> Result<usize> {
        let image = self.apply(&layout.ap(index)?);
        layout.index_of(&image).ok_or(Error::IndexOutOfRange {
            index,
            count: layout.ap_positions.len(),
        })
    }
}

/// Sampling scheme for sector integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorScheme {
    /// Centroids of a uniform barycentric subdivision into `n²` congruent
    /// sub-triangles, `n = ceil(sqrt(count))`.
    Grid,
    /// `count` points of the R2 low-discrepancy sequence folded into the
    /// triangle.
    QuasiRandom,
}

/// A sector node with its quadrature weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightedPoint {
    pub point: SectorPoint,
    pub weight: f64,
}

/// Deterministic area-uniform nodes in the canonical sector.
pub fn sector_samples(
    layout: &NetworkLayout,
    scheme: SectorScheme,
    count: usize,
) -> Result<Vec<WeightedPoint>> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            value: 0.0,
            reason: "at least one sample is required",
        });
    }
    let [o, v, m] = layout.sector_vertices();
    let at = |u: f64, w: f64| {
        // barycentric (1-u-w, u, w) on (o, v, m)
        let p = Point::new(
            o.x + u * (v.x - o.x) + w * (m.x - o.x),
            o.y + u * (v.y - o.y) + w * (m.y - o.y),
        );
        SectorPoint::from_cartesian(&p)
    };
    let points: Vec<SectorPoint> = match scheme {
        SectorScheme::Grid => {
            let n = (count as f64).sqrt().ceil() as usize;
            let h = 1.0 / n as f64;
            let mut pts = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n - i {
                    // upward triangle
                    pts.push(at((i as f64 + 1.0 / 3.0) * h, (j as f64 + 1.0 / 3.0) * h));
                    if i + j + 1 < n {
                        // downward triangle
                        pts.push(at((i as f64 + 2.0 / 3.0) * h, (j as f64 + 2.0 / 3.0) * h));
                    }
                }
            }
            pts
        }
        SectorScheme::QuasiRandom => {
            // R2 sequence (plastic-number Kronecker lattice)
            let g = 1.324_717_957_244_746_f64;
            let (a1, a2) = (1.0 / g, 1.0 / (g * g));
            (0..count)
                .map(|i| {
                    let mut u = (0.5 + a1 * (i as f64 + 1.0)).fract();
                    let mut w = (0.5 + a2 * (i as f64 + 1.0)).fract();
                    if u + w > 1.0 {
                        u = 1.0 - u;
                        w = 1.0 - w;
                    }
                    at(u, w)
                })
                .collect()
        }
    };
    let weight = 1.0 / points.len() as f64;
    Ok(points
        .into_iter()
        .map(|point| WeightedPoint { point, weight })
        .collect())
}
