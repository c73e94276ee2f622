//! Folded-state map. Panels are placed by chaining crease frames from the
//! base panel along a breadth-first panel tree.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::model::{ccw_angle, CreasePattern, Face};

pub type Mat4 = Matrix4<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("point is not in panel {0}")]
    PointOutsidePanel(usize),
    #[error("expected {expected} folding angles, got {got}")]
    WrongLength { expected: usize, got: usize },
}

pub fn rotx(r: f64) -> Mat4 {
    let (s, c) = r.sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, c, -s, 0.0, //
        0.0, s, c, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Derivative of [`rotx`] with respect to its angle.
pub fn drotx(r: f64) -> Mat4 {
    let (s, c) = r.sin_cos();
    Matrix4::new(
        0.0, 0.0, 0.0, 0.0, //
        0.0, -s, -c, 0.0, //
        0.0, c, -s, 0.0, //
        0.0, 0.0, 0.0, 0.0,
    )
}

/// Rotation by `beta` about z followed by translation `(a, b, 0)`.
pub fn planar(beta: f64, a: f64, b: f64) -> Mat4 {
    let (s, c) = beta.sin_cos();
    Matrix4::new(
        c, -s, 0.0, a, //
        s, c, 0.0, b, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub fn rotz3(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotx3(r: f64) -> Matrix3<f64> {
    let (s, c) = r.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Inverse of a rigid homogeneous transform.
pub fn rigid_inverse(t: &Mat4) -> Mat4 {
    let r = t.fixed_view::<3, 3>(0, 0).transpose();
    let p = t.fixed_view::<3, 1>(0, 3);
    let q = -(r * p);
    let mut out = Mat4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&q);
    out
}

pub fn apply(t: &Mat4, p: &Vector3<f64>) -> Vector3<f64> {
    let h = t * Vector4::new(p.x, p.y, p.z, 1.0);
    Vector3::new(h.x, h.y, h.z)
}

/// Planar frame of a crease crossing: origin and x-axis angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame2 {
    pub origin: Vector2<f64>,
    pub theta: f64,
}

impl Frame2 {
    pub const IDENTITY: Frame2 = Frame2 {
        origin: Vector2::new(0.0, 0.0),
        theta: 0.0,
    };

    /// `(beta, a, b)` of the planar factor taking `self` to `next`.
    pub fn step_to(&self, next: &Frame2) -> (f64, f64, f64) {
        let d = next.origin - self.origin;
        let (s, c) = self.theta.sin_cos();
        (next.theta - self.theta, c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn matrix(&self) -> Mat4 {
        planar(self.theta, self.origin.x, self.origin.y)
    }
}

/// Frame of crossing inner crease `crease` into panel `into`: origin at the
/// start of the crease as it appears in the panel's ccw cycle, x along it.
pub fn crossing_frame(pattern: &CreasePattern, crease: usize, into: usize) -> Frame2 {
    let [a, b] = pattern.creases()[crease].vertices;
    let (from, to) = if pattern.left_of(a, b) == Face::Panel(into) {
        (a, b)
    } else {
        (b, a)
    };
    let o = pattern.vertices()[from];
    let d = pattern.vertices()[to] - o;
    Frame2 {
        origin: o,
        theta: d.y.atan2(d.x),
    }
}

/// One factor `planar(beta, a, b) * rotx(rho[var])` of a transfer chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferStep {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub crease: usize,
    /// Folding-angle index of `crease`.
    pub var: usize,
    /// Panel entered by this step.
    pub panel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferChain {
    pub panel: usize,
    pub steps: Vec<TransferStep>,
}

impl TransferChain {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Outline of every panel in reference coordinates. These are the embedding
/// coordinates, except on patterns with stored sector angles: there a panel
/// is redrawn about its first inner corner whose stored angle differs from
/// the drawing, scaling polar angles about that corner so it gets the
/// stored angle while distances from it are kept.
pub fn panel_shapes(pattern: &CreasePattern) -> Vec<Vec<Vector2<f64>>> {
    let polys: Vec<Vec<Vector2<f64>>> = (0..pattern.panels().len()).map(|k| pattern.panel_polygon(k)).collect();
    if !pattern.has_sector_overrides() {
        return polys;
    }
    let drawn = pattern.embedding_sector_angles();
    let stored = &pattern.sector_angles().corners;
    polys
        .into_iter()
        .enumerate()
        .map(|(k, poly)| {
            let cycle = &pattern.panels()[k];
            let m = cycle.len();
            let anchor = (0..m).find(|&i| {
                !pattern.is_boundary_vertex(cycle[i]) && (stored[k][i] - drawn[k][i]).abs() > 1e-12
            });
            let Some(i) = anchor else { return poly };
            let v = poly[i];
            let e0 = poly[(i + 1) % m] - v;
            let theta0 = e0.y.atan2(e0.x);
            let ratio = stored[k][i] / drawn[k][i];
            (0..m)
                .map(|j| {
                    let d = poly[j] - v;
                    if j == i || j == (i + 1) % m {
                        return poly[j];
                    }
                    let t = theta0 + ccw_angle(e0, d) * ratio;
                    v + d.norm() * Vector2::new(t.cos(), t.sin())
                })
                .collect()
        })
        .collect()
}

/// Frame of `crease` crossing into `into`, with coordinates taken from the
/// outline `shape` of a panel on either side, whose vertex cycle is `cycle`.
fn frame_in(pattern: &CreasePattern, crease: usize, into: usize, cycle: &[usize], shape: &[Vector2<f64>]) -> Frame2 {
    let [a, b] = pattern.creases()[crease].vertices;
    let (from, to) = if pattern.left_of(a, b) == Face::Panel(into) { (a, b) } else { (b, a) };
    let at = |v: usize| shape[cycle.iter().position(|&w| w == v).expect("crease lies on the panel")];
    let (o, t) = (at(from), at(to));
    let d = t - o;
    Frame2 {
        origin: o,
        theta: d.y.atan2(d.x),
    }
}

/// Planar step across `panel` from the frame of `entry` (into `panel`) to
/// the frame of `exit` (into the next panel), when both creases leave one
/// inner vertex and the pattern stores sector angles: the turn is the stored
/// corner angle, so chains agree with the vertex closure loops.
fn vertex_step(pattern: &CreasePattern, panel: usize, entry: usize, exit: usize, next: usize) -> Option<(f64, f64, f64)> {
    let [a1, b1] = pattern.creases()[entry].vertices;
    let [a2, b2] = pattern.creases()[exit].vertices;
    let v = [a1, b1].into_iter().find(|&x| x == a2 || x == b2)?;
    if pattern.is_boundary_vertex(v) {
        return None;
    }
    let cycle = &pattern.panels()[panel];
    let m = cycle.len();
    let i = cycle.iter().position(|&w| w == v)?;
    let (w_next, w_prev) = (cycle[(i + 1) % m], cycle[(i + m - 1) % m]);
    let end1 = if a1 == v { b1 } else { a1 };
    let end2 = if a2 == v { b2 } else { a2 };
    let alpha = pattern.sector_angles().corners[panel][i];
    let turn = if end1 == w_next && end2 == w_prev {
        alpha
    } else if end1 == w_prev && end2 == w_next {
        -alpha
    } else {
        return None;
    };
    let length = |c: usize| {
        let [x, y] = pattern.creases()[c].vertices;
        (pattern.vertices()[x] - pattern.vertices()[y]).norm()
    };
    // Frames in a local system with v at the origin and `entry` along +x.
    let oriented = |c: usize, into: usize, theta: f64| {
        let [x, y] = pattern.creases()[c].vertices;
        let from = if pattern.left_of(x, y) == Face::Panel(into) { x } else { y };
        if from == v {
            Frame2 {
                origin: Vector2::zeros(),
                theta,
            }
        } else {
            Frame2 {
                origin: length(c) * Vector2::new(theta.cos(), theta.sin()),
                theta: theta + std::f64::consts::PI,
            }
        }
    };
    Some(oriented(entry, panel, 0.0).step_to(&oriented(exit, next, turn)))
}

/// Chain along an explicit path of panels (consecutive panels must share an
/// inner crease; the lowest-index shared crease is used).
pub fn chain_along(pattern: &CreasePattern, path: &[usize]) -> Option<TransferChain> {
    chain_with(pattern, path, &panel_shapes(pattern), &pattern.panel_adjacency())
}

fn chain_with(
    pattern: &CreasePattern,
    path: &[usize],
    shapes: &[Vec<Vector2<f64>>],
    adjacency: &[Vec<(usize, usize)>],
) -> Option<TransferChain> {
    if !path.is_empty() && path[0] != pattern.base_panel() {
        return None;
    }
    let overrides = pattern.has_sector_overrides();
    let mut entry: Option<usize> = None;
    let mut steps = Vec::new();
    for w in path.windows(2) {
        let crease = adjacency[w[0]].iter().find(|(q, _)| *q == w[1])?.1;
        let cycle = &pattern.panels()[w[0]];
        let exact = if overrides {
            entry.and_then(|e| vertex_step(pattern, w[0], e, crease, w[1]))
        } else {
            None
        };
        let (beta, a, b) = exact.unwrap_or_else(|| {
            let from = match entry {
                Some(e) => frame_in(pattern, e, w[0], cycle, &shapes[w[0]]),
                None => Frame2::IDENTITY,
            };
            from.step_to(&frame_in(pattern, crease, w[1], cycle, &shapes[w[0]]))
        });
        steps.push(TransferStep {
            beta,
            a,
            b,
            crease,
            var: pattern.inner_index(crease).expect("adjacency uses inner creases"),
            panel: w[1],
        });
        entry = Some(crease);
    }
    Some(TransferChain {
        panel: *path.last().unwrap_or(&pattern.base_panel()),
        steps,
    })
}

/// Breadth-first panel tree rooted at the base panel, lowest index first.
/// Returns one chain per panel.
pub fn build_spanning_tree(pattern: &CreasePattern) -> Vec<TransferChain> {
    let n = pattern.panels().len();
    let adjacency = pattern.panel_adjacency();
    let base = pattern.base_panel();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([base]);
    seen[base] = true;
    while let Some(p) = queue.pop_front() {
        order.push(p);
        for &(q, _) in &adjacency[p] {
            if !seen[q] {
                seen[q] = true;
                parent[q] = Some(p);
                queue.push_back(q);
            }
        }
    }
    let shapes = panel_shapes(pattern);
    let mut chains: Vec<Option<TransferChain>> = vec![None; n];
    for p in order {
        let path = {
            let mut path = vec![p];
            let mut cur = p;
            while let Some(q) = parent[cur] {
                path.push(q);
                cur = q;
            }
            path.reverse();
            path
        };
        chains[p] = chain_with(pattern, &path, &shapes, &adjacency);
    }
    chains.into_iter().map(|c| c.expect("pattern is connected")).collect()
}

pub fn transfer_matrix(chain: &TransferChain, rho: &[f64]) -> Mat4 {
    chain.steps.iter().fold(Mat4::identity(), |t, s| {
        t * planar(s.beta, s.a, s.b) * rotx(rho[s.var])
    })
}

/// Derivative of the transfer matrix with respect to every folding angle in
/// the chain, as `(var, dT)` pairs in chain order.
pub fn transfer_derivatives(chain: &TransferChain, rho: &[f64]) -> Vec<(usize, Mat4)> {
    let n = chain.steps.len();
    let factors: Vec<Mat4> = chain.steps.iter().map(|s| planar(s.beta, s.a, s.b) * rotx(rho[s.var])).collect();
    let mut prefix = vec![Mat4::identity(); n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] * factors[k];
    }
    let mut suffix = vec![Mat4::identity(); n + 1];
    for k in (0..n).rev() {
        suffix[k] = factors[k] * suffix[k + 1];
    }
    chain
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| (s.var, prefix[k] * planar(s.beta, s.a, s.b) * drotx(rho[s.var]) * suffix[k + 1]))
        .collect()
}

/// Folded-state evaluator caching the panel tree of a pattern.
#[derive(Debug, Clone)]
pub struct Folder<'a> {
    pattern: &'a CreasePattern,
    chains: Vec<TransferChain>,
    /// Entry frame of each panel in reference coordinates.
    flat: Vec<Mat4>,
    shapes: Vec<Vec<Vector2<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedPanel {
    pub panel: usize,
    pub vertices: Vec<Vector3<f64>>,
}

impl<'a> Folder<'a> {
    pub fn new(pattern: &'a CreasePattern) -> Self {
        let chains = build_spanning_tree(pattern);
        let shapes = panel_shapes(pattern);
        let flat = if pattern.has_sector_overrides() {
            // No flat state exists; each panel keeps its own outline.
            chains
                .iter()
                .map(|c| match c.steps.last() {
                    Some(s) => frame_in(pattern, s.crease, c.panel, &pattern.panels()[c.panel], &shapes[c.panel]).matrix(),
                    None => Mat4::identity(),
                })
                .collect()
        } else {
            let zero = vec![0.0; pattern.num_inner_creases()];
            chains.iter().map(|c| transfer_matrix(c, &zero)).collect()
        };
        Self {
            pattern,
            chains,
            flat,
            shapes,
        }
    }

    /// Reference outline of panel `k`, parallel to its vertex cycle.
    pub fn shape(&self, k: usize) -> &[Vector2<f64>] {
        &self.shapes[k]
    }

    pub fn pattern(&self) -> &CreasePattern {
        self.pattern
    }

    pub fn chains(&self) -> &[TransferChain] {
        &self.chains
    }

    fn check_len(&self, rho: &[f64]) -> Result<(), KinematicsError> {
        let expected = self.pattern.num_inner_creases();
        if rho.len() != expected {
            return Err(KinematicsError::WrongLength { expected, got: rho.len() });
        }
        Ok(())
    }

    /// Placement of panel `k` mapping flat reference coordinates to the
    /// folded state `rho`.
    pub fn placement(&self, k: usize, rho: &[f64]) -> Mat4 {
        transfer_matrix(&self.chains[k], rho) * rigid_inverse(&self.flat[k])
    }

    pub fn placements(&self, rho: &[f64]) -> Vec<Mat4> {
        (0..self.chains.len()).map(|k| self.placement(k, rho)).collect()
    }

    /// Moves point `p`, given in the coordinates of the state `rho0`, that
    /// lies on panel `panel`, to its position in state `rho`.
    pub fn fold_point(
        &self,
        rho: &[f64],
        rho0: &[f64],
        panel: usize,
        p: &Vector3<f64>,
    ) -> Result<Vector3<f64>, KinematicsError> {
        self.check_len(rho)?;
        self.check_len(rho0)?;
        let t0 = transfer_matrix(&self.chains[panel], rho0);
        let local = apply(&rigid_inverse(&t0), p);
        let scale = self.shapes[panel].iter().fold(1.0f64, |m, v| m.max(v.norm()));
        if local.z.abs() > 1e-9 * scale {
            return Err(KinematicsError::PointOutsidePanel(panel));
        }
        let reference = apply(&self.flat[panel], &local);
        if !point_in_polygon(&Vector2::new(reference.x, reference.y), &self.shapes[panel], 1e-9 * scale) {
            return Err(KinematicsError::PointOutsidePanel(panel));
        }
        Ok(apply(&transfer_matrix(&self.chains[panel], rho), &local))
    }

    /// Moves a reference point, using the lowest-index panel whose closure
    /// contains it.
    pub fn fold_reference_point(&self, rho: &[f64], p: &Vector2<f64>) -> Result<Vector3<f64>, KinematicsError> {
        self.check_len(rho)?;
        let panel = (0..self.pattern.panels().len())
            .find(|&k| point_in_polygon(p, &self.shapes[k], 1e-9))
            .ok_or(KinematicsError::PointOutsidePanel(usize::MAX))?;
        Ok(apply(&self.placement(panel, rho), &Vector3::new(p.x, p.y, 0.0)))
    }

    pub fn fold_mesh(&self, rho: &[f64]) -> Result<Vec<PlacedPanel>, KinematicsError> {
        self.check_len(rho)?;
        Ok(self
            .pattern
            .panels()
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let t = self.placement(k, rho);
                PlacedPanel {
                    panel: k,
                    vertices: self.shapes[k].iter().map(|q| apply(&t, &Vector3::new(q.x, q.y, 0.0))).collect(),
                }
            })
            .collect())
    }
}

/// Closed-polygon membership with boundary tolerance `eps`.
pub fn point_in_polygon(p: &Vector2<f64>, poly: &[Vector2<f64>], eps: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let d = b - a;
        let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        if (a + d * t - p).norm() <= eps {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn stored_sector_angles_drive_placements() {
        // Cube corner: three right-angle sectors drawn as 120 degree wedges.
        let p = fixtures::cube_corner();
        let f = Folder::new(&p);
        let rho = [FRAC_PI_2; 3];
        let normals: Vec<Vector3<f64>> = f.placements(&rho).iter().map(|t| t.fixed_view::<3, 1>(0, 2).into_owned()).collect();
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!(normals[i].dot(&normals[j]).abs() < 1e-12);
            }
        }
        // Panels meeting along a crease agree on its endpoints.
        let mesh = f.fold_mesh(&rho).unwrap();
        let mut seen: Vec<Option<Vector3<f64>>> = vec![None; p.vertices().len()];
        for placed in &mesh {
            for (k, &v) in p.panels()[placed.panel].iter().enumerate() {
                if p.is_boundary_vertex(v) && p.incident_creases(v).iter().all(|&c| p.inner_index(c).is_none()) {
                    continue;
                }
                match seen[v] {
                    Some(q) => assert!((q - placed.vertices[k]).norm() < 1e-12, "vertex {v}"),
                    None => seen[v] = Some(placed.vertices[k]),
                }
            }
        }
        let corner = f.shape(0);
        let cycle = &p.panels()[0];
        let e1 = corner[1] - corner[0];
        let e2 = corner[cycle.len() - 1] - corner[0];
        assert_relative_eq!(e1.angle(&e2), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn two_panel_chains() {
        let p = fixtures::square_with_diagonal();
        let chains = build_spanning_tree(&p);
        assert_eq!(chains[0].len(), 0);
        assert_eq!(chains[1].len(), 1);
    }

    #[test]
    fn single_factor_is_x_rotation() {
        let chain = TransferChain {
            panel: 1,
            steps: vec![TransferStep {
                beta: 0.0,
                a: 0.0,
                b: 0.0,
                crease: 0,
                var: 0,
                panel: 1,
            }],
        };
        assert_relative_eq!(transfer_matrix(&chain, &[FRAC_PI_2]), rotx(FRAC_PI_2), epsilon = 1e-15);
    }

    #[test]
    fn base_panel_points_fixed() {
        let p = fixtures::fig2_vertex();
        let f = Folder::new(&p);
        let rho = [0.3, -0.2, 0.5, 0.1];
        let zero = [0.0; 4];
        let base = p.base_panel();
        let poly = p.panel_polygon(base);
        let c = poly.iter().fold(Vector2::zeros(), |s, v| s + v) / poly.len() as f64;
        let q = Vector3::new(c.x, c.y, 0.0);
        assert_relative_eq!(f.fold_point(&rho, &zero, base, &q).unwrap(), q, epsilon = 1e-15);
    }

    #[test]
    fn outside_point_rejected() {
        let p = fixtures::square_with_diagonal();
        let f = Folder::new(&p);
        let r = f.fold_point(&[0.2], &[0.0], 0, &Vector3::new(5.0, 5.0, 0.0));
        assert_eq!(r, Err(KinematicsError::PointOutsidePanel(0)));
    }

    #[test]
    fn flat_mesh_is_reference() {
        let p = fixtures::miura(3, 3);
        let f = Folder::new(&p);
        let mesh = f.fold_mesh(&vec![0.0; p.num_inner_creases()]).unwrap();
        for placed in mesh {
            for (v, &idx) in placed.vertices.iter().zip(&p.panels()[placed.panel]) {
                let r = p.vertices()[idx];
                assert_relative_eq!(*v, Vector3::new(r.x, r.y, 0.0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn miura_chain_lengths() {
        let p = fixtures::miura(3, 3);
        let chains = build_spanning_tree(&p);
        assert_eq!(chains.len(), 9);
        assert_eq!(chains.iter().filter(|c| !c.is_empty()).count(), 8);
        assert_eq!(chains.iter().map(|c| c.len()).max(), Some(4));
    }
}
