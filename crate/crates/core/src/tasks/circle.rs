//! Minimal enclosing circle task.

use serde::{Deserialize, Serialize};

use crate::autodiff::{fnv1a, Rng, Tensor};
use crate::error::{Error, Result};

/// Relative slack used for containment inside the algorithms.
const INSIDE_EPS: f64 = 1e-12;

pub const BRUTE_FORCE_MAX: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Circle { center, radius }
    }

    fn point(p: [f64; 2]) -> Self {
        Circle::new(p, 0.0)
    }

    /// Circle with `a`–`b` as diameter.
    pub fn diameter(a: [f64; 2], b: [f64; 2]) -> Self {
        let center = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        Circle::new(center, 0.5 * dist(a, b))
    }

    /// Circumcircle of three points, or the diameter circle of the two
    /// farthest ones when they are collinear.
    pub fn through(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Self {
        let (bx, by) = (b[0] - a[0], b[1] - a[1]);
        let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
        let d = 2.0 * (bx * cy - by * cx);
        let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
        if d.abs() <= 1e-14 * scale {
            let pairs = [(a, b), (a, c), (b, c)];
            let (p, q) = pairs
                .into_iter()
                .max_by(|x, y| dist(x.0, x.1).total_cmp(&dist(y.0, y.1)))
                .unwrap();
            return Circle::diameter(p, q);
        }
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        let ux = (cy * b2 - by * c2) / d;
        let uy = (bx * c2 - cx * b2) / d;
        let center = [a[0] + ux, a[1] + uy];
        let radius = dist(center, a).max(dist(center, b)).max(dist(center, c));
        Circle::new(center, radius)
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        dist(self.center, p)
    }

    pub fn contains(&self, p: [f64; 2], slack: f64) -> bool {
        self.distance_to(p) <= self.radius + slack
    }

    fn contains_rel(&self, p: [f64; 2]) -> bool {
        self.distance_to(p) <= self.radius * (1.0 + INSIDE_EPS) + INSIDE_EPS
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.center[0], self.center[1], self.radius]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Rows of a `[n × 2]` tensor as points.
pub fn points_of(population: &Tensor) -> Result<Vec<[f64; 2]>> {
    let dims = population.dims();
    if dims.len() != 2 || dims[1] != 2 {
        return Err(Error::Domain(format!(
            "expected a population of 2-d points, got shape {}",
            population.shape()
        )));
    }
    Ok(population.rows().map(|r| [r[0], r[1]]).collect())
}

/// Smallest circle enclosing `points` (Welzl's randomized incremental
/// algorithm). The points are put into lexicographic order and shuffled with
/// a seed derived from their bit patterns, so the result depends only on the
/// multiset of points.
pub fn welzl_min_circle(points: &[[f64; 2]]) -> Result<Circle> {
    if points.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut bytes = Vec::with_capacity(16 * pts.len());
    for p in &pts {
        bytes.extend_from_slice(&p[0].to_bits().to_le_bytes());
        bytes.extend_from_slice(&p[1].to_bits().to_le_bytes());
    }
    Rng::new(fnv1a(&bytes)).child("welzl").shuffle(&mut pts);

    let mut c = Circle::point(pts[0]);
    for i in 1..pts.len() {
        if c.contains_rel(pts[i]) {
            continue;
        }
        c = Circle::point(pts[i]);
        for j in 0..i {
            if c.contains_rel(pts[j]) {
                continue;
            }
            c = Circle::diameter(pts[i], pts[j]);
            for k in 0..j {
                if !c.contains_rel(pts[k]) {
                    c = Circle::through(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    Ok(c)
}

/// Exhaustive search over all diameter pairs and circumscribed triples.
pub fn brute_force_min_circle(points: &[[f64; 2]]) -> Result<Circle> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    if n == 1 {
        return Ok(Circle::point(points[0]));
    }
    let covers = |c: &Circle| points.iter().all(|&p| c.contains_rel(p));
    let mut best: Option<Circle> = None;
    let mut consider = |c: Circle| {
        if covers(&c) && best.is_none_or(|b| c.radius < b.radius) {
            best = Some(c);
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            consider(Circle::diameter(points[i], points[j]));
            for k in j + 1..n {
                consider(Circle::through(points[i], points[j], points[k]));
            }
        }
    }
    // Pairs always include the two farthest points, whose diameter circle
    // covers everything when all points coincide or are collinear.
    best.ok_or_else(|| Error::Domain("no enclosing circle found".into()))
}

/// Generator parameters of the circle task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleGmm {
    pub means: Vec<[f64; 2]>,
    pub sigmas: Vec<f64>,
}

impl CircleGmm {
    /// Three equally weighted isotropic components, means uniform in
    /// `[−3, 3]²`, standard deviations uniform in `[0.2, 1]`.
    pub fn sample(rng: &mut Rng) -> Self {
        let mut means = Vec::with_capacity(3);
        let mut sigmas = Vec::with_capacity(3);
        for _ in 0..3 {
            means.push([rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)]);
            sigmas.push(rng.uniform_in(0.2, 1.0));
        }
        CircleGmm { means, sigmas }
    }

    pub fn draw(&self, rng: &mut Rng, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let c = rng.below(self.means.len());
                let s = self.sigmas[c];
                let m = self.means[c];
                [m[0] + s * rng.standard_normal(), m[1] + s * rng.standard_normal()]
            })
            .collect()
    }
}

pub const CIRCLE_TRAIN_SIZE: usize = 20;

/// One circle-task example: a GMM population and its enclosing circle.
pub fn sample_circle_task(rng: &mut Rng, n: usize) -> Result<(Tensor, Circle)> {
    if n < 3 {
        return Err(Error::Domain(format!("circle task needs n ≥ 3, got {n}")));
    }
    let gmm = CircleGmm::sample(rng);
    let pts = gmm.draw(rng, n);
    let target = welzl_min_circle(&pts)?;
    let data = pts.iter().flat_map(|p| p.iter().copied()).collect();
    Ok((Tensor::new(vec![n, 2], data)?, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Circle, b: &Circle, tol: f64) -> bool {
        dist(a.center, b.center) <= tol && (a.radius - b.radius).abs() <= tol
    }

    fn random_points(rng: &mut Rng, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [rng.uniform_in(-5.0, 5.0), rng.uniform_in(-5.0, 5.0)])
            .collect()
    }

    #[test]
    fn two_points_give_diameter_circle() {
        let c = welzl_min_circle(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert!(close(&c, &Circle::new([1.0, 0.0], 1.0), 1e-15));
    }

    #[test]
    fn equilateral_triangle_circumradius() {
        let h = 3f64.sqrt() / 2.0;
        let c = welzl_min_circle(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap();
        assert!((c.radius - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((c.center[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior_point_changes_nothing() {
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            let pts = random_points(&mut rng, 8);
            let c = welzl_min_circle(&pts).unwrap();
            let mut more = pts.clone();
            more.push(c.center);
            let c2 = welzl_min_circle(&more).unwrap();
            assert!(close(&c, &c2, 1e-12));
        }
    }

    #[test]
    fn singleton_and_empty() {
        assert_eq!(welzl_min_circle(&[[3.0, -1.0]]).unwrap(), Circle::new([3.0, -1.0], 0.0));
        assert_eq!(brute_force_min_circle(&[[3.0, -1.0]]).unwrap().radius, 0.0);
        assert!(matches!(welzl_min_circle(&[]), Err(Error::EmptyPopulation)));
        assert!(matches!(
            brute_force_min_circle(&[[0.0, 0.0]; 13]),
            Err(Error::TooLarge { n: 13, max: 12 })
        ));
    }

    #[test]
    fn collinear_points_use_extremes() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [3.0, 3.0], [2.0, 2.0], [-1.0, -1.0]];
        let want = Circle::diameter([-1.0, -1.0], [3.0, 3.0]);
        assert!(close(&brute_force_min_circle(&pts).unwrap(), &want, 1e-12));
        assert!(close(&welzl_min_circle(&pts).unwrap(), &want, 1e-12));
        let dup = [[1.0, 2.0]; 5];
        assert_eq!(welzl_min_circle(&dup).unwrap().radius, 0.0);
        assert_eq!(brute_force_min_circle(&dup).unwrap().radius, 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = Rng::new(2);
        for _ in 0..500 {
            let n = 1 + rng.below(12);
            let pts = random_points(&mut rng, n);
            let a = welzl_min_circle(&pts).unwrap();
            let b = brute_force_min_circle(&pts).unwrap();
            assert!(close(&a, &b, 1e-9), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn order_invariant_bitwise() {
        let mut rng = Rng::new(3);
        for _ in 0..500 {
            let mut pts = random_points(&mut rng, 15);
            let a = welzl_min_circle(&pts).unwrap();
            rng.shuffle(&mut pts);
            assert_eq!(welzl_min_circle(&pts).unwrap(), a);
        }
    }

    #[test]
    fn task_target_contains_population() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let (x, c) = sample_circle_task(&mut rng, CIRCLE_TRAIN_SIZE).unwrap();
            assert_eq!(x.dims(), &[20, 2]);
            for p in points_of(&x).unwrap() {
                assert!(c.contains(p, 1e-9));
            }
        }
        let a = sample_circle_task(&mut Rng::new(9), 20).unwrap();
        let b = sample_circle_task(&mut Rng::new(9), 20).unwrap();
        assert_eq!(a, b);
        assert!(sample_circle_task(&mut Rng::new(9), 2).is_err());
    }
}
