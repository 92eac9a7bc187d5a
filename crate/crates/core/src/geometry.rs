//! Hexagonal multi-cell layout, device and interferer sampling, path loss.
//!
//! Cells are hexagons with flat edges facing the x-axis: the apothem
//! `(√3/2)·R` points along 0°, 60°, 120°, … and the vertices sit at 30°, 90°, ….

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Minimum device to own-AP distance in meters.
pub const MIN_DISTANCE: f64 = 1.0;

/// A 2-D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotation about the origin by `angle` radians.
    pub fn rotate(&self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Seven-cell hexagonal layout with AP 0 at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexLayout {
    pub r: f64,
    pub aps: Vec<Point>,
}

impl HexLayout {
    pub fn apothem(&self) -> f64 {
        0.5 * SQRT3 * self.r
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    /// Whether `p` lies in the closed hexagon of cell `j`.
    pub fn in_cell(&self, p: &Point, j: usize) -> bool {
        in_hexagon(p, &self.aps[j], self.r)
    }
}

/// Builds AP 0 at the origin plus six neighbors at `k·60°`, distance `√3·R`.
pub fn build_hex_layout(r: f64) -> Result<HexLayout> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param("R", format!("cell side must be positive, got {r}")));
    }
    let mut aps = vec![Point::ORIGIN];
    let d = SQRT3 * r;
    for k in 0..6 {
        let ang = (k as f64) * std::f64::consts::FRAC_PI_3;
        aps.push(Point::new(d * ang.cos(), d * ang.sin()));
    }
    Ok(HexLayout { r, aps })
}

/// Closed-hexagon membership for a hexagon of side `r` with edge normals at 0°, 60° and 120°.
pub fn in_hexagon(p: &Point, center: &Point, r: f64) -> bool {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    let apothem = 0.5 * SQRT3 * r;
    let tol = 1e-12 * r;
    // normals at 0°, 60°, 120°
    let n1 = dx.abs();
    let n2 = (0.5 * dx + 0.5 * SQRT3 * dy).abs();
    let n3 = (-0.5 * dx + 0.5 * SQRT3 * dy).abs();
    n1 <= apothem + tol && n2 <= apothem + tol && n3 <= apothem + tol
}

/// Draws one uniform point from hexagon `cell` by rejection from the bounding box.
///
/// Returns the point and the number of proposals used.
pub fn sample_hex_point<R: Rng + ?Sized>(rng: &mut R, layout: &HexLayout, cell: usize) -> (Point, usize) {
    let c = layout.aps[cell];
    let a = layout.apothem();
    let r = layout.r;
    let mut tries = 0;
    loop {
        tries += 1;
        let p = Point::new(
            c.x + a * (2.0 * rng.random::<f64>() - 1.0),
            c.y + r * (2.0 * rng.random::<f64>() - 1.0),
        );
        if layout.in_cell(&p, cell) && p.dist(&c) >= MIN_DISTANCE {
            return (p, tries);
        }
    }
}

/// `n` i.i.d. uniform points in hexagon `cell`.
pub fn sample_cell_devices<R: Rng + ?Sized>(rng: &mut R, n: usize, cell: usize, layout: &HexLayout) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let (p, _) = sample_hex_point(rng, layout, cell);
            debug_assert!(layout.in_cell(&p, cell));
            p
        })
        .collect()
}

/// Largest distance from the origin reached by the union of `cells`.
pub fn exclusion_extent(layout: &HexLayout, cells: &[usize]) -> f64 {
    cells
        .iter()
        .map(|&j| layout.aps[j].norm() + layout.r)
        .fold(0.0, f64::max)
}

/// Homogeneous PPP of density `lambda` on the disk of radius `r_max`
/// about the origin, with the hexagons in `exclusion` removed.
pub fn sample_interferers<R: Rng + ?Sized>(
    rng: &mut R,
    lambda: f64,
    layout: &HexLayout,
    exclusion: &[usize],
    r_max: f64,
) -> Result<Vec<Point>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(
            "lambda",
            format!("density must be non-negative, got {lambda}"),
        ));
    }
    let extent = exclusion_extent(layout, exclusion);
    if !(r_max > extent) {
        return Err(Error::param(
            "r_max",
            format!("truncation radius {r_max} must exceed the exclusion extent {extent}"),
        ));
    }
    if lambda == 0.0 {
        return Ok(Vec::new());
    }
    let mean = lambda * std::f64::consts::PI * r_max * r_max;
    let count = Poisson::new(mean)
        .map_err(|e| Error::Numerical(format!("poisson({mean}): {e}")))?
        .sample(rng) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rad = r_max * rng.random::<f64>().sqrt();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        let p = Point::new(rad * th.cos(), rad * th.sin());
        if !exclusion.iter().any(|&j| layout.in_cell(&p, j)) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Devices associated with one cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellDevices {
    pub positions: Vec<Point>,
    pub active: Vec<bool>,
}

/// One Monte Carlo draw of the network.
///
/// Global device indices run over cells in order (cell 0 first), then over
/// the interferers, which are always active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    pub layout: HexLayout,
    pub cells: Vec<CellDevices>,
    pub interferers: Vec<Point>,
    pub alpha: f64,
}

impl NetworkRealization {
    /// Number of in-cell devices across all cells.
    pub fn num_cell_devices(&self) -> usize {
        self.cells.iter().map(|c| c.positions.len()).sum()
    }

    /// Number of modeled transmitters, in-cell devices plus interferers.
    pub fn num_total(&self) -> usize {
        self.num_cell_devices() + self.interferers.len()
    }

    /// Global index of the first device of `cell`.
    pub fn cell_offset(&self, cell: usize) -> usize {
        self.cells[..cell].iter().map(|c| c.positions.len()).sum()
    }

    /// Position, activity and home cell (`None` for interferers) of every transmitter.
    pub fn transmitters(&self) -> impl Iterator<Item = (Point, bool, Option<usize>)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.positions.iter().zip(&c.active).map(move |(p, a)| (*p, *a, Some(j))))
            .chain(self.interferers.iter().map(|p| (*p, true, None)))
    }

    /// Path loss from every transmitter to AP `ap`.
    pub fn gains_to(&self, ap: usize) -> Result<Vec<f64>> {
        let c = self.layout.aps[ap];
        self.transmitters()
            .map(|(p, _, _)| path_loss(p.dist(&c), self.alpha))
            .collect()
    }

    /// Debug CSV with columns `x,y,cell,active`; interferers use cell `-1`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,cell,active\n");
        for (p, a, cell) in self.transmitters() {
            let cell = cell.map(|c| c as i64).unwrap_or(-1);
            s.push_str(&format!("{},{},{},{}\n", p.x, p.y, cell, a as u8));
        }
        s
    }
}

/// Large-scale fading `d^(−α)`.
pub fn path_loss(d: f64, alpha: f64) -> Result<f64> {
    if d == 0.0 {
        return Err(Error::SingularDistance);
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::param("d", format!("distance must be positive, got {d}")));
    }
    if !(alpha >= 2.0) || !alpha.is_finite() {
        return Err(Error::param(
            "alpha",
            format!("path-loss exponent must be >= 2, got {alpha}"),
        ));
    }
    Ok(d.powf(-alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_positions() {
        let l = build_hex_layout(200.0).unwrap();
        assert_eq!(l.aps[0], Point::ORIGIN);
        assert!((l.aps[1].x - 346.410_161_513_775_4).abs() < 1e-9);
        assert!(l.aps[1].y.abs() < 1e-12);
        let l1 = build_hex_layout(1.0).unwrap();
        for p in &l1.aps[1..] {
            assert!((p.norm() - SQRT3).abs() < 1e-14);
        }
        assert!(build_hex_layout(0.0).is_err());
        assert!(build_hex_layout(-3.0).is_err());
    }

    #[test]
    fn layout_rotation_symmetry() {
        let l = build_hex_layout(150.0).unwrap();
        for p in &l.aps {
            let q = p.rotate(std::f64::consts::FRAC_PI_3);
            assert!(l.aps.iter().any(|a| a.dist(&q) < 1e-9));
        }
    }

    #[test]
    fn hexagon_membership() {
        let c = Point::new(5.0, -3.0);
        let r = 200.0;
        let ap = 0.5 * SQRT3 * r;
        assert!(in_hexagon(&c, &c, r));
        for k in 0..6 {
            let t = k as f64 * std::f64::consts::FRAC_PI_3;
            let out = Point::new(c.x + (ap + 1e-6) * t.cos(), c.y + (ap + 1e-6) * t.sin());
            assert!(!in_hexagon(&out, &c, r));
            let tv = t + std::f64::consts::FRAC_PI_6;
            let inside = Point::new(c.x + (r - 1e-6) * tv.cos(), c.y + (r - 1e-6) * tv.sin());
            assert!(in_hexagon(&inside, &c, r));
            let outside = Point::new(c.x + (r + 1e-6) * tv.cos(), c.y + (r + 1e-6) * tv.sin());
            assert!(!in_hexagon(&outside, &c, r));
        }
    }

    #[test]
    fn neighbor_cells_tile_without_overlap() {
        let l = build_hex_layout(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let p = Point::new(4.0 * rng.random::<f64>() - 2.0, 4.0 * rng.random::<f64>() - 2.0);
            let hits = (0..7).filter(|&j| l.in_cell(&p, j)).count();
            assert!(hits <= 1 || (0..7).any(|j| on_boundary(&p, &l.aps[j], 1.0)));
            if p.norm() < 1.0 {
                assert!(hits >= 1);
            }
        }
    }

    fn on_boundary(p: &Point, c: &Point, r: f64) -> bool {
        let q = Point::new(p.x - c.x, p.y - c.y);
        let ap = 0.5 * SQRT3 * r;
        [
            q.x.abs(),
            (0.5 * q.x + 0.5 * SQRT3 * q.y).abs(),
            (-0.5 * q.x + 0.5 * SQRT3 * q.y).abs(),
        ]
        .iter()
        .any(|v| (v - ap).abs() < 1e-9)
    }

    #[test]
    fn cell_samples_inside_and_centered() {
        let l = build_hex_layout(200.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(sample_cell_devices(&mut rng, 0, 0, &l).is_empty());
        for cell in [0, 4] {
            let pts = sample_cell_devices(&mut rng, 500, cell, &l);
            assert!(pts.iter().all(|p| l.in_cell(p, cell)));
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
            // per-axis variance of a uniform hexagon is 5R²/24
            let se = (5.0 * 200.0f64.powi(2) / 24.0 / n).sqrt();
            assert!((mx - l.aps[cell].x).abs() < 3.0 * se, "x mean {mx}");
            assert!((my - l.aps[cell].y).abs() < 3.0 * se, "y mean {my}");
        }
    }

    #[test]
    fn rejection_acceptance_matches_area_ratio() {
        let l = build_hex_layout(200.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let tries: usize = (0..n).map(|_| sample_hex_point(&mut rng, &l, 0).1).sum();
        let acc = n as f64 / tries as f64;
        assert!((acc - 0.75).abs() < 0.0075, "acceptance {acc}");
    }

    #[test]
    fn ppp_count_and_exclusion() {
        let l = build_hex_layout(200.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_interferers(&mut rng, 0.0, &l, &[0], 2000.0).unwrap().is_empty());
        let lambda = 0.00025;
        let expect = lambda * (std::f64::consts::PI * 2000.0f64.powi(2) - 1.5 * SQRT3 * 200.0f64.powi(2));
        assert!((expect - 3115.6).abs() < 0.1);
        let draws = 60;
        let counts: Vec<f64> = (0..draws)
            .map(|_| {
                let pts = sample_interferers(&mut rng, lambda, &l, &[0], 2000.0).unwrap();
                assert!(pts.iter().all(|p| !l.in_cell(p, 0) && p.norm() <= 2000.0));
                pts.len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / draws as f64;
        let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
        assert!(
            (mean - expect).abs() < 4.0 * sd / (draws as f64).sqrt(),
            "mean {mean} expect {expect}"
        );
    }

    #[test]
    fn ppp_rejects_small_radius() {
        let l = build_hex_layout(200.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let all: Vec<usize> = (0..7).collect();
        assert!(sample_interferers(&mut rng, 1e-4, &l, &all, 500.0).is_err());
        assert!(sample_interferers(&mut rng, 1e-4, &l, &[0], 150.0).is_err());
    }

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss(1.0, 3.7).unwrap(), 1.0);
        assert!((path_loss(200.0, 3.0).unwrap() / 1.25e-7 - 1.0).abs() < 1e-12);
        assert!((path_loss(200.0, 4.0).unwrap() / 6.25e-10 - 1.0).abs() < 1e-12);
        assert_eq!(path_loss(0.0, 3.0), Err(Error::SingularDistance));
        assert!(path_loss(10.0, 1.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn path_loss_monotone_and_multiplicative(d in 1.0f64..5000.0, dd in 0.01f64..100.0, alpha in 4.0f64..10.0) {
            let a = path_loss(d, alpha).unwrap();
            let b = path_loss(d + dd, alpha).unwrap();
            proptest::prop_assert!(b < a);
            let h = path_loss(d, alpha / 2.0).unwrap();
            proptest::prop_assert!((h * h / a - 1.0).abs() < 1e-12);
        }
    }
}
