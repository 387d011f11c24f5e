//! Oriented-rectangle footprints and overlap testing.

pub type Point = [f64; 2];

/// Corners of a rectangle centered at `(x, y)`, rotated by `heading`, in
/// counter-clockwise order starting at the rear-right corner.
pub fn corners(x: f64, y: f64, heading: f64, length: f64, width: f64) -> [Point; 4] {
    let (s, c) = heading.sin_cos();
    let hl = 0.5 * length;
    let hw = 0.5 * width;
    let local = [[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]];
    local.map(|[lx, ly]| [x + lx * c - ly * s, y + lx * s + ly * c])
}

fn project(poly: &[Point; 4], axis: Point) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in poly {
        let d = p[0] * axis[0] + p[1] * axis[1];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Separating-axis test for two convex quadrilaterals. Touching boundaries
/// count as overlap.
pub fn rectangles_overlap(a: &[Point; 4], b: &[Point; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..2 {
            let p = poly[i];
            let q = poly[i + 1];
            // edge normal; rectangles only need two axes each
            let axis = [-(q[1] - p[1]), q[0] - p[0]];
            let (a_lo, a_hi) = project(a, axis);
            let (b_lo, b_hi) = project(b, axis);
            if a_hi < b_lo || b_hi < a_lo {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_rectangles_overlap() {
        let a = corners(0.0, 0.0, 0.0, 5.0, 2.0);
        assert!(rectangles_overlap(&a, &a));
    }

    #[test]
    fn separated_along_x() {
        let a = corners(0.0, 0.0, 0.0, 5.0, 2.0);
        let b = corners(5.5, 0.0, 0.0, 5.0, 2.0);
        assert!(!rectangles_overlap(&a, &b));
    }

    #[test]
    fn exact_corner_contact_counts() {
        let a = corners(0.0, 0.0, 0.0, 4.0, 2.0);
        let b = corners(4.0, 2.0, 0.0, 4.0, 2.0);
        assert!(rectangles_overlap(&a, &b));
    }

    #[test]
    fn rotated_diamond_clears_corner() {
        // a square rotated 45° whose tip sits just beyond the other's edge
        let a = corners(0.0, 0.0, 0.0, 2.0, 2.0);
        let half_diag = 2.0_f64.sqrt();
        let b = corners(1.0 + half_diag + 1e-6, 0.0, std::f64::consts::FRAC_PI_4, 2.0, 2.0);
        assert!(!rectangles_overlap(&a, &b));
        let c = corners(1.0 + half_diag - 1e-6, 0.0, std::f64::consts::FRAC_PI_4, 2.0, 2.0);
        assert!(rectangles_overlap(&a, &c));
    }
}
