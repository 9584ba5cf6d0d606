use crate::error::{Error, Result};
use crate::types::{Obstacle, Point};

/// Sum of chord lengths along a polyline.
pub fn arc_length(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    Ok(points.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// True if any edge of the polyline passes through the obstacle disc.
pub fn polyline_hits_disc(points: &[Point], disc: &Obstacle) -> bool {
    let c = Point::new(disc.cx, disc.cy);
    match points {
        [] => false,
        [p] => disc.contains(p),
        _ => points
            .windows(2)
            .any(|w| point_segment_distance(&c, &w[0], &w[1]) <= disc.radius),
    }
}
