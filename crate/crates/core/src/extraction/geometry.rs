//! Planar predicates on simple polygons and axis-aligned rectangles.

const EPS: f64 = 1e-9;

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn dilate(&self, delta: f64) -> Rect {
        Rect { min: [self.min[0] - delta, self.min[1] - delta], max: [self.max[0] + delta, self.max[1] + delta] }
    }

    pub fn center(&self) -> Point {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] - EPS && p[0] <= self.max[0] + EPS && p[1] >= self.min[1] - EPS && p[1] <= self.max[1] + EPS
    }

    pub fn corners(&self) -> [Point; 4] {
        [self.min, [self.max[0], self.min[1]], self.max, [self.min[0], self.max[1]]]
    }
}

fn edges(poly: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Distance from `p` to the polygon boundary.
pub fn boundary_distance(p: Point, poly: &[Point]) -> f64 {
    edges(poly).map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
}

pub fn on_boundary(p: Point, poly: &[Point]) -> bool {
    boundary_distance(p, poly) <= EPS
}

/// Even-odd containment; boundary points count as inside.
pub fn contains(poly: &[Point], p: Point) -> bool {
    if poly.len() < 3 {
        return false;
    }
    if on_boundary(p, poly) {
        return true;
    }
    let mut inside = false;
    for (a, b) in edges(poly) {
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) - EPS && p[0] <= a[0].max(b[0]) + EPS && p[1] >= a[1].min(b[1]) - EPS && p[1] <= a[1].max(b[1]) + EPS
}

/// Closed segment intersection (touching counts).
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2, d3, d4) = (orient(c, d, a), orient(c, d, b), orient(a, b, c), orient(a, b, d));
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS)) && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS)) {
        return true;
    }
    (d1.abs() <= EPS && on_segment(c, d, a))
        || (d2.abs() <= EPS && on_segment(c, d, b))
        || (d3.abs() <= EPS && on_segment(a, b, c))
        || (d4.abs() <= EPS && on_segment(a, b, d))
}

/// True when the closed polygon region and the closed rectangle overlap.
pub fn polygon_intersects_rect(poly: &[Point], rect: &Rect) -> bool {
    if poly.iter().any(|&p| rect.contains(p)) || rect.corners().iter().any(|&c| contains(poly, c)) {
        return true;
    }
    let rc = rect.corners();
    edges(poly).any(|(a, b)| (0..4).any(|i| segments_intersect(a, b, rc[i], rc[(i + 1) % 4])))
}

/// No two non-adjacent edges touch and there are at least 3 vertices.
pub fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Area centroid (falls back to the vertex mean for degenerate polygons).
pub fn polygon_centroid(poly: &[Point]) -> Point {
    let mut area = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for (a, b) in edges(poly) {
        let cross = a[0] * b[1] - b[0] * a[1];
        area += cross;
        cx += (a[0] + b[0]) * cross;
        cy += (a[1] + b[1]) * cross;
    }
    if area.abs() < EPS {
        let n = poly.len().max(1) as f64;
        return [poly.iter().map(|p| p[0]).sum::<f64>() / n, poly.iter().map(|p| p[1]).sum::<f64>() / n];
    }
    [cx / (3.0 * area), cy / (3.0 * area)]
}
