//! Closed-set predicates between axis-aligned rectangles and simple polygons.
//! Boundary contact counts as intersection.

type Pt = [f64; 2];

fn orient(a: Pt, b: Pt, c: Pt) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(p: Pt, a: Pt, b: Pt) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: Pt, p2: Pt, q1: Pt, q2: Pt) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

fn edges(ring: &[Pt]) -> impl Iterator<Item = (Pt, Pt)> + '_ {
    // Ring may or may not repeat its first vertex at the end.
    let n = ring.len();
    let m = if n > 1 && ring[0] == ring[n - 1] { n - 1 } else { n };
    let m = if m >= 2 { m } else { 0 };
    (0..m).map(move |k| (ring[k], ring[(k + 1) % m]))
}

/// Point inside or on the boundary of the polygon ring (even-odd rule).
pub fn point_in_polygon(p: Pt, ring: &[Pt]) -> bool {
    let mut inside = false;
    for (a, b) in edges(ring) {
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// `rect` is `[x0, y0, x1, y1]`, closed.
pub fn rect_intersects_polygon(rect: [f64; 4], ring: &[Pt]) -> bool {
    let [x0, y0, x1, y1] = rect;
    if ring
        .iter()
        .any(|p| p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1)
    {
        return true;
    }
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    if corners.iter().any(|&c| point_in_polygon(c, ring)) {
        return true;
    }
    let sides = [
        (corners[0], corners[1]),
        (corners[1], corners[2]),
        (corners[2], corners[3]),
        (corners[3], corners[0]),
    ];
    edges(ring).any(|(a, b)| sides.iter().any(|&(c, d)| segments_intersect(a, b, c, d)))
}
