//! Panel self-intersection and stacking-order checks on folded states.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::constraints::ConstraintSystem;
use crate::kinematics::{apply, Folder};
use crate::model::{CreasePattern, LambdaPair, FLAT_EPS};
use crate::newton::{max_dist, project, NewtonOptions};

pub const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CollisionError {
    #[error("state is not on the constraint variety (residual {0:e})")]
    NotOnVariety(f64),
    #[error("panels {0} and {1} are not coplanar and overlapping")]
    NotStacked(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrderSource {
    /// Implied by a crease folded to ±pi between adjacent panels.
    Hinge,
    Declared,
    Undetermined,
}

/// Coplanar overlapping panels. `sign = +1` means `a` lies on the
/// positive-normal side of `b`; the partner value for `(b, a)` is
/// `-sign * sign(n_a . n_b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackedPair {
    pub a: usize,
    pub b: usize,
    pub sign: Option<i8>,
    pub source: OrderSource,
    /// Whether the two panel normals point the same way.
    pub aligned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Free,
    Ordered,
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactReport {
    /// Non-adjacent panel pairs whose interiors intersect.
    pub crossing: Vec<(usize, usize)>,
    pub stacked: Vec<StackedPair>,
    /// Pairs with contradicting order information.
    pub conflicts: Vec<(usize, usize)>,
    /// Cyclic stacking orders within a coplanar cluster. Reported only.
    pub cycles: Vec<Vec<usize>>,
    pub verdict: Verdict,
}

/// Ear-clipping triangulation of a simple ccw polygon; indices into `poly`.
pub fn triangulate(poly: &[Vector2<f64>]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::new();
    let cross = |a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>| (b - a).perp(&(c - a));
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (i0, i1, i2) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (poly[i0], poly[i1], poly[i2]);
            if cross(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&m| {
                if m == i0 || m == i1 || m == i2 {
                    return false;
                }
                let p = poly[m];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                out.push([i0, i1, i2]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Numerically degenerate remainder: fan it.
            for k in 1..idx.len() - 1 {
                out.push([idx[0], idx[k], idx[k + 1]]);
            }
            return out;
        }
    }
    out.push([idx[0], idx[1], idx[2]]);
    out
}

type Tri = [Vector3<f64>; 3];

fn tri_normal(t: &Tri) -> Vector3<f64> {
    (t[1] - t[0]).cross(&(t[2] - t[0]))
}

/// Interval of the line `p0 + s d` covered by triangle `t`, given signed
/// distances `dist` of its vertices to the other plane.
fn line_interval(t: &Tri, dist: &[f64; 3], p0: &Vector3<f64>, d: &Vector3<f64>, eps: f64) -> Option<(f64, f64)> {
    let mut params = Vec::with_capacity(3);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (di, dj) = (dist[i], dist[j]);
        if di.abs() <= eps {
            params.push((t[i] - p0).dot(d));
        }
        if (di > eps && dj < -eps) || (di < -eps && dj > eps) {
            let s = di / (di - dj);
            let q = t[i] + (t[j] - t[i]) * s;
            params.push((q - p0).dot(d));
        }
    }
    if params.is_empty() {
        return None;
    }
    let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

/// True when the interiors of two non-coplanar triangles intersect by more
/// than the contact tolerance `eps`.
pub fn triangles_cross(t1: &Tri, t2: &Tri, eps: f64) -> bool {
    let n1 = tri_normal(t1);
    let n2 = tri_normal(t2);
    if n1.norm() <= f64::MIN_POSITIVE || n2.norm() <= f64::MIN_POSITIVE {
        return false;
    }
    let n1 = n1.normalize();
    let n2 = n2.normalize();
    let d2: [f64; 3] = std::array::from_fn(|i| n1.dot(&(t2[i] - t1[0])));
    let d1: [f64; 3] = std::array::from_fn(|i| n2.dot(&(t1[i] - t2[0])));
    let straddles = |d: &[f64; 3]| d.iter().any(|&x| x > eps) && d.iter().any(|&x| x < -eps);
    if !straddles(&d1) || !straddles(&d2) {
        return false;
    }
    let dir = n1.cross(&n2);
    if dir.norm() <= eps {
        return false;
    }
    let dir = dir.normalize();
    let p0 = t1[0];
    let (Some(a), Some(b)) = (line_interval(t1, &d1, &p0, &dir, eps), line_interval(t2, &d2, &p0, &dir, eps)) else {
        return false;
    };
    a.1.min(b.1) - a.0.max(b.0) > eps
}

fn clip_area(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> f64 {
    let mut out: Vec<Vector2<f64>> = subject.to_vec();
    for i in 0..clip.len() {
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let inside = |p: &Vector2<f64>| (b - a).perp(&(p - a)) >= 0.0;
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let p = input[k];
            let q = input[(k + 1) % input.len()];
            let (ip, iq) = (inside(&p), inside(&q));
            if ip {
                out.push(p);
            }
            if ip != iq {
                let d = q - p;
                let denom = (b - a).perp(&d);
                if denom.abs() > 0.0 {
                    let s = (b - a).perp(&(a - p)) / denom;
                    out.push(p + d * s);
                }
            }
        }
        if out.is_empty() {
            return 0.0;
        }
    }
    let n = out.len();
    (0..n).map(|i| out[i].perp(&out[(i + 1) % n])).sum::<f64>() * 0.5
}

fn ccw(mut t: [Vector2<f64>; 3]) -> [Vector2<f64>; 3] {
    if (t[1] - t[0]).perp(&(t[2] - t[0])) < 0.0 {
        t.swap(1, 2);
    }
    t
}

/// Cached collision geometry for one pattern.
pub struct Collider<'a> {
    system: ConstraintSystem,
    folder: Folder<'a>,
    triangles: Vec<Vec<[usize; 3]>>,
    hinges: BTreeMap<(usize, usize), Vec<usize>>,
    eps: f64,
}

struct PlacedPanel {
    tris: Vec<Tri>,
    normal: Vector3<f64>,
    origin: Vector3<f64>,
}

impl<'a> Collider<'a> {
    pub fn new(pattern: &'a CreasePattern) -> Self {
        let folder = Folder::new(pattern);
        let triangles = (0..pattern.panels().len()).map(|k| triangulate(folder.shape(k))).collect();
        let mut hinges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (p, list) in pattern.panel_adjacency().iter().enumerate() {
            for &(q, c) in list {
                if p < q {
                    hinges.entry((p, q)).or_default().push(pattern.inner_index(c).unwrap());
                }
            }
        }
        Self {
            system: ConstraintSystem::build(pattern),
            folder,
            triangles,
            hinges,
            eps: CONTACT_EPS,
        }
    }

    /// Separations at or below `eps` count as contact, not crossing.
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    fn place(&self, rho: &[f64]) -> Vec<PlacedPanel> {
        self.folder
            .placements(rho)
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let pts: Vec<Vector3<f64>> = self
                    .folder
                    .shape(k)
                    .iter()
                    .map(|q| apply(t, &Vector3::new(q.x, q.y, 0.0)))
                    .collect();
                PlacedPanel {
                    tris: self.triangles[k].iter().map(|tri| tri.map(|i| pts[i])).collect(),
                    normal: t.fixed_view::<3, 1>(0, 2).into_owned(),
                    origin: pts[0],
                }
            })
            .collect()
    }

    fn overlap_area(a: &PlacedPanel, b: &PlacedPanel) -> f64 {
        let n = a.normal;
        let u = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = (u - n * n.dot(&u)).normalize();
        let v = n.cross(&u);
        let flat = |p: &Vector3<f64>| Vector2::new((p - a.origin).dot(&u), (p - a.origin).dot(&v));
        let mut area = 0.0;
        for ta in &a.tris {
            let ta2 = ccw(ta.map(|p| flat(&p)));
            for tb in &b.tris {
                let tb2 = ccw(tb.map(|p| flat(&p)));
                area += clip_area(&ta2, &tb2).max(0.0);
            }
        }
        area
    }

    fn coplanar(&self, a: &PlacedPanel, b: &PlacedPanel) -> bool {
        a.normal.cross(&b.normal).norm() <= self.eps
            && b.tris.iter().flatten().all(|p| a.normal.dot(&(p - a.origin)).abs() <= self.eps)
    }

    pub fn check_state(&self, rho: &[f64], lambda: &[LambdaPair]) -> Result<ContactReport, CollisionError> {
        let residual = self.system.max_norm(rho);
        if residual > self.system.tol {
            return Err(CollisionError::NotOnVariety(residual));
        }
        self.check_unchecked(rho, lambda)
    }

    /// As [`Collider::check_state`] without the variety precondition.
    pub fn check_unchecked(&self, rho: &[f64], lambda: &[LambdaPair]) -> Result<ContactReport, CollisionError> {
        let placed = self.place(rho);
        let n = placed.len();
        let mut crossing = Vec::new();
        let mut stacked = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let hinge = self.hinges.get(&(a, b));
                let (pa, pb) = (&placed[a], &placed[b]);
                if self.coplanar(pa, pb) {
                    if Self::overlap_area(pa, pb) <= self.eps {
                        continue;
                    }
                    let aligned = pa.normal.dot(&pb.normal) > 0.0;
                    let hinge_sign = hinge.and_then(|vars| {
                        vars.iter()
                            .find(|&&j| (rho[j].abs() - std::f64::consts::PI).abs() <= FLAT_EPS)
                            .map(|&j| if rho[j] > 0.0 { 1i8 } else { -1i8 })
                    });
                    stacked.push(StackedPair {
                        a,
                        b,
                        sign: hinge_sign,
                        source: if hinge_sign.is_some() { OrderSource::Hinge } else { OrderSource::Undetermined },
                        aligned,
                    });
                    continue;
                }
                if hinge.is_some() {
                    continue;
                }
                let hit = pa.tris.iter().any(|t1| pb.tris.iter().any(|t2| triangles_cross(t1, t2, self.eps)));
                if hit {
                    crossing.push((a, b));
                }
            }
        }

        // Order relations expressed as "x above y" along the normal of the
        // lowest-index panel of each cluster.
        let index: BTreeMap<(usize, usize), usize> = stacked.iter().enumerate().map(|(k, s)| ((s.a, s.b), k)).collect();
        let mut declared: Vec<Vec<i8>> = vec![Vec::new(); stacked.len()];
        for p in lambda {
            let key = (p.a.min(p.b), p.a.max(p.b));
            let Some(&k) = index.get(&key) else {
                return Err(CollisionError::NotStacked(p.a, p.b));
            };
            // Rewrite in (a, b) orientation with the partner rule.
            let s = if p.a == stacked[k].a {
                p.sign
            } else {
                let flip = if stacked[k].aligned { 1 } else { -1 };
                -p.sign * flip
            };
            declared[k].push(s);
        }
        let mut conflicts = Vec::new();
        for (k, s) in stacked.iter_mut().enumerate() {
            let mut signs: BTreeSet<i8> = declared[k].iter().copied().collect();
            if let Some(h) = s.sign {
                signs.insert(h);
            }
            if signs.len() > 1 {
                conflicts.push((s.a, s.b));
            }
            if s.sign.is_none() {
                if let Some(&d) = declared[k].first() {
                    s.sign = Some(d);
                    s.source = OrderSource::Declared;
                }
            }
        }
        let cycles = stacking_cycles(&stacked, &placed, n);
        let verdict = if !crossing.is_empty() || !conflicts.is_empty() {
            Verdict::Crossing
        } else if !stacked.is_empty() {
            Verdict::Ordered
        } else {
            Verdict::Free
        };
        Ok(ContactReport {
            crossing,
            stacked,
            conflicts,
            cycles,
            verdict,
        })
    }

    /// Earliest crossing sample of a path, with the contact state refined
    /// by bisection (projected onto the variety) to `1e-6` in max-norm.
    pub fn first_contact(&self, samples: &[Vec<f64>]) -> Option<ContactEvent> {
        let crosses = |rho: &[f64]| {
            self.check_unchecked(rho, &[])
                .map(|r| r.verdict == Verdict::Crossing)
                .unwrap_or(false)
        };
        let k = samples.iter().position(|s| crosses(s))?;
        if k == 0 {
            return Some(ContactEvent {
                index: 0,
                rho: samples[0].clone(),
            });
        }
        let mut lo = samples[k - 1].clone();
        let mut hi = samples[k].clone();
        let opts = NewtonOptions::default();
        while max_dist(&lo, &hi) > 1e-6 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mid = project(&self.system, &mid, None, &opts).rho;
            if crosses(&mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(ContactEvent { index: k, rho: hi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactEvent {
    pub index: usize,
    /// Refined state just past first contact.
    pub rho: Vec<f64>,
}

fn stacking_cycles(stacked: &[StackedPair], placed: &[PlacedPanel], n: usize) -> Vec<Vec<usize>> {
    // Clusters are connected components of the overlap graph.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for s in stacked {
        let (ra, rb) = (find(&mut parent, s.a), find(&mut parent, s.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut above = vec![vec![false; n]; n];
    for s in stacked {
        let Some(sign) = s.sign else { continue };
        let root = find(&mut parent, s.a);
        let reference = placed[root].normal;
        let sigma_b = if placed[s.b].normal.dot(&reference) > 0.0 { 1 } else { -1 };
        if sign as i32 * sigma_b > 0 {
            above[s.a][s.b] = true;
        } else {
            above[s.b][s.a] = true;
        }
    }
    // Transitive closure; mutually reachable panels form a cycle.
    let mut reach = above.clone();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for i in 0..n {
        if seen[i] || !reach[i][i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            seen[j] = true;
        }
        cycles.push(comp);
    }
    cycles
}

pub fn check_state(pattern: &CreasePattern, rho: &[f64], lambda: &[LambdaPair]) -> Result<ContactReport, CollisionError> {
    Collider::new(pattern).check_state(rho, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::PI;

    #[test]
    fn ear_clipping_concave() {
        let poly = [
            Vector2::new(0.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(2.0, 2.0),
            Vector2::new(1.0, 0.5),
            Vector2::new(0.0, 2.0),
        ];
        let tris = triangulate(&poly);
        assert_eq!(tris.len(), 3);
        let area: f64 = tris
            .iter()
            .map(|t| 0.5 * (poly[t[1]] - poly[t[0]]).perp(&(poly[t[2]] - poly[t[0]])))
            .sum();
        assert!((area - 2.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_triangles() {
        let t1 = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0)];
        let t2 = [Vector3::new(0.5, 0.5, -1.0), Vector3::new(0.5, 0.5, 1.0), Vector3::new(3.0, 3.0, 0.0)];
        assert!(triangles_cross(&t1, &t2, CONTACT_EPS));
        let t3 = [Vector3::new(0.5, 0.5, 0.0), Vector3::new(0.5, 0.5, 1.0), Vector3::new(3.0, 3.0, 1.0)];
        assert!(!triangles_cross(&t1, &t3, CONTACT_EPS));
    }

    #[test]
    fn fig2_branch_is_free() {
        let p = fixtures::fig2_vertex();
        let c = Collider::new(&p);
        for s in [0.3, 1.5, -2.8] {
            let r = c.check_state(&[s, 0.0, s, 0.0], &[]).unwrap();
            assert_eq!(r.verdict, Verdict::Free);
        }
    }

    #[test]
    fn single_crease_never_crosses() {
        let p = fixtures::square_with_diagonal();
        let c = Collider::new(&p);
        for k in 0..=20 {
            let s = -PI + 2.0 * PI * k as f64 / 20.0;
            let r = c.check_state(&[s], &[]).unwrap();
            assert_ne!(r.verdict, Verdict::Crossing);
            assert!(r.crossing.is_empty());
        }
    }

    #[test]
    fn three_squares_orders() {
        let p = fixtures::three_squares();
        let c = Collider::new(&p);
        let rho = [-PI, -PI];
        let r = c.check_state(&rho, &[]).unwrap();
        assert_eq!(r.verdict, Verdict::Ordered);
        assert_eq!(r.stacked.len(), 3);
        for sign in [1, -1] {
            let r = c.check_state(&rho, &[LambdaPair { a: 0, b: 2, sign }]).unwrap();
            assert_eq!(r.verdict, Verdict::Ordered);
        }
        let bad = [LambdaPair { a: 0, b: 2, sign: 1 }, LambdaPair { a: 2, b: 0, sign: 1 }];
        assert_eq!(c.check_state(&rho, &bad).unwrap().verdict, Verdict::Crossing);
        assert_eq!(
            c.check_state(&[0.5, 0.5], &[LambdaPair { a: 0, b: 2, sign: 1 }]),
            Err(CollisionError::NotStacked(0, 2))
        );
    }

    #[test]
    fn flaps_cross_past_contact_angle() {
        let p = fixtures::flap_strip(1.0, 2.0);
        let c = Collider::new(&p);
        let contact = (-0.25f64).acos();
        assert_eq!(c.check_state(&[contact - 0.01; 2], &[]).unwrap().verdict, Verdict::Free);
        assert_eq!(c.check_state(&[contact + 0.01; 2], &[]).unwrap().verdict, Verdict::Crossing);
    }
}
