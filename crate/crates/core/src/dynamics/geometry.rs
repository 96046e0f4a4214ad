//! Planar segment distances and two-link forward kinematics.

pub type Point = [f64; 2];

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

const TOUCH: f64 = 1e-12;

/// Closest points between segments `[p0, p1]` and `[q0, q1]`.
#[derive(Clone, Copy, Debug)]
pub struct SegmentContact {
    pub distance: f64,
    /// Parameter of the closest point on the first segment.
    pub s: f64,
    /// Parameter of the closest point on the second segment.
    pub t: f64,
    pub on_first: Point,
    pub on_second: Point,
}

impl SegmentContact {
    /// Unit vector from the second closest point to the first, zero when
    /// the segments touch. Crossing segments leave a rounding-level distance
    /// whose direction is noise, so that counts as touching too.
    pub fn normal(&self) -> Point {
        if self.distance > TOUCH {
            let d = sub(self.on_first, self.on_second);
            [d[0] / self.distance, d[1] / self.distance]
        } else {
            [0.0, 0.0]
        }
    }
}

/// Closest-point query for two segments (clamped quadratic minimisation,
/// handles degenerate and parallel segments).
pub fn segment_contact(p0: Point, p1: Point, q0: Point, q1: Point) -> SegmentContact {
    const EPS: f64 = 1e-14;
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);

    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = dot(d1, r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };

    let on_first = [p0[0] + s * d1[0], p0[1] + s * d1[1]];
    let on_second = [q0[0] + t * d2[0], q0[1] + t * d2[1]];
    let g = sub(on_first, on_second);
    SegmentContact { distance: dot(g, g).sqrt(), s, t, on_first, on_second }
}

/// Joint positions of a planar two-link arm: base, elbow, tip.
/// The second angle is relative to the first link.
pub fn two_link_points(base: Point, lengths: [f64; 2], q: [f64; 2]) -> [Point; 3] {
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    let elbow = [base[0] + lengths[0] * c1, base[1] + lengths[0] * s1];
    let tip = [elbow[0] + lengths[1] * c12, elbow[1] + lengths[1] * s12];
    [base, elbow, tip]
}

/// Jacobians of the three joint positions with respect to `(q1, q2)`;
/// `jac[k][j]` is the derivative of point `k` along angle `j`.
pub fn two_link_jacobians(lengths: [f64; 2], q: [f64; 2]) -> [[Point; 2]; 3] {
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    let e1 = [-lengths[0] * s1, lengths[0] * c1];
    let e12 = [-lengths[1] * s12, lengths[1] * c12];
    [
        [[0.0, 0.0], [0.0, 0.0]],
        [e1, [0.0, 0.0]],
        [[e1[0] + e12[0], e1[1] + e12[1]], e12],
    ]
}
