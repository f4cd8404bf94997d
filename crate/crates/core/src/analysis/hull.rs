//! Planar convex hulls.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull by Andrew's monotone chain, starting at the
/// lowest-x (then lowest-y) point. Collinear boundary points are excluded;
/// a fully collinear set yields its two extreme points.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    let mut pts: Vec<Point> = points.to_vec();
    if pts.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Degenerate("non-finite hull point".into()));
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "hull needs 3 distinct points, got {}",
            pts.len()
        )));
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in [&pts[..], &pts.iter().rev().cloned().collect::<Vec<_>>()[..]] {
        let floor = hull.len();
        for &p in pass {
            while hull.len() >= floor + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    Ok(hull)
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}
