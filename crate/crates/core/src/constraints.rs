//! Loop-closure system: one rotation loop per inner vertex and one rigid
//! loop per hole.

use nalgebra::{DVector, Vector2};
use serde::Serialize;

use crate::kinematics::{crossing_frame, drotx, planar, rotx, Frame2, Mat4};
use crate::model::{ccw_angle, CreasePattern, Face, FLAT_EPS};

pub const RESIDUAL_TOL: f64 = 1e-9;

/// One factor `planar(beta, a, b) * rotx(rho[var])` of a closure loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopStep {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub crease: usize,
    pub var: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LoopKind {
    Vertex { vertex: usize },
    Hole { hole: usize },
    /// Hole whose creases all meet in one point, treated as a vertex there.
    ConcurrentHole { hole: usize, center: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureLoop {
    pub kind: LoopKind,
    pub steps: Vec<LoopStep>,
}

impl ClosureLoop {
    /// Number of independent scalars contributed to the residual.
    pub fn dim(&self) -> usize {
        match self.kind {
            LoopKind::Hole { .. } => 6,
            _ => 3,
        }
    }

    pub fn product(&self, rho: &[f64]) -> Mat4 {
        self.steps
            .iter()
            .fold(Mat4::identity(), |t, s| t * planar(s.beta, s.a, s.b) * rotx(rho[s.var]))
    }

    /// `(var, dT/drho_var)` for every step, via prefix and suffix products.
    pub fn product_derivatives(&self, rho: &[f64]) -> Vec<(usize, Mat4)> {
        let n = self.steps.len();
        let g: Vec<Mat4> = self.steps.iter().map(|s| planar(s.beta, s.a, s.b)).collect();
        let f: Vec<Mat4> = self.steps.iter().zip(&g).map(|(s, g)| g * rotx(rho[s.var])).collect();
        let mut suffix = vec![Mat4::identity(); n + 1];
        for k in (0..n).rev() {
            suffix[k] = f[k] * suffix[k + 1];
        }
        let mut prefix = Mat4::identity();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let s = &self.steps[k];
            out.push((s.var, prefix * g[k] * drotx(rho[s.var]) * suffix[k + 1]));
            prefix *= f[k];
        }
        out
    }

    /// Residual scalars of a loop product: the axis vector of the rotation
    /// block's skew part, plus the translation for holes.
    pub fn extract(&self, t: &Mat4) -> Vec<f64> {
        let mut out = vec![
            0.5 * (t[(2, 1)] - t[(1, 2)]),
            0.5 * (t[(0, 2)] - t[(2, 0)]),
            0.5 * (t[(1, 0)] - t[(0, 1)]),
        ];
        if self.dim() == 6 {
            out.extend([t[(0, 3)], t[(1, 3)], t[(2, 3)]]);
        }
        out
    }

    /// Largest deviation of the loop product from the identity over every
    /// entry that the residual depends on.
    pub fn deviation(&self, t: &Mat4) -> f64 {
        let rows = if self.dim() == 6 { 4 } else { 3 };
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..rows {
                let id = if i == j { 1.0 } else { 0.0 };
                m = m.max((t[(i, j)] - id).abs());
            }
        }
        m
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSystem {
    pub loops: Vec<ClosureLoop>,
    pub num_vars: usize,
    /// Folding angles that appear in no loop.
    pub free_vars: Vec<usize>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub values: Vec<f64>,
    pub per_loop: Vec<Vec<f64>>,
    /// Max-norm over the loop products' deviation from the identity. This
    /// also catches half-turn products whose axis vector vanishes.
    pub max_norm: f64,
}

impl Residual {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

fn vertex_loop(pattern: &CreasePattern, v: usize) -> ClosureLoop {
    let star = pattern.vertex_star(v);
    let steps = star
        .creases
        .iter()
        .zip(&star.alphas)
        .map(|(&c, &alpha)| LoopStep {
            beta: alpha,
            a: 0.0,
            b: 0.0,
            crease: c,
            var: pattern.inner_index(c).expect("creases at inner vertices are inner"),
        })
        .collect();
    ClosureLoop {
        kind: LoopKind::Vertex { vertex: v },
        steps,
    }
}

/// Inner creases crossed walking around a hole, with the panel entered and
/// the hole vertex they start from.
fn hole_crossings(pattern: &CreasePattern, cycle: &[usize]) -> Vec<(usize, usize, usize)> {
    let m = cycle.len();
    let mut out = Vec::new();
    for i in 0..m {
        let a = cycle[i];
        let v = cycle[(i + 1) % m];
        let c = cycle[(i + 2) % m];
        let around = pattern.incident_creases(v);
        let from = pattern.edge_between(v, a).expect("hole side exists");
        let to = pattern.edge_between(v, c).expect("hole side exists");
        let start = around.iter().position(|&e| e == from).unwrap();
        for step in 1..around.len() {
            let e = around[(start + step) % around.len()];
            if e == to {
                break;
            }
            if pattern.inner_index(e).is_none() {
                continue;
            }
            let u = pattern.other_end(e, v);
            if let Face::Panel(p) = pattern.left_of(v, u) {
                out.push((e, p, v));
            }
        }
    }
    out
}

fn concurrency_center(pattern: &CreasePattern, lines: &[(Vector2<f64>, Vector2<f64>)]) -> Option<Vector2<f64>> {
    if lines.len() < 2 {
        return None;
    }
    // Least-squares point closest to all lines.
    let mut a = nalgebra::Matrix2::zeros();
    let mut b = Vector2::zeros();
    for (p, d) in lines {
        let n = Vector2::new(-d.y, d.x).normalize();
        a += n * n.transpose();
        b += n * n.dot(p);
    }
    let c = a.try_inverse()? * b;
    let scale = pattern.vertices().iter().fold(1.0f64, |m, v| m.max(v.norm()));
    let ok = lines.iter().all(|(p, d)| {
        let n = Vector2::new(-d.y, d.x).normalize();
        (n.dot(&(c - p))).abs() <= 1e-9 * scale
    });
    ok.then_some(c)
}

fn rotate_to_lowest<T: Clone>(items: &[T], key: impl Fn(&T) -> usize) -> Vec<T> {
    let n = items.len();
    let start = (0..n).min_by_key(|&k| (key(&items[k]), k)).unwrap_or(0);
    (0..n).map(|k| items[(start + k) % n].clone()).collect()
}

fn hole_loop(pattern: &CreasePattern, h: usize) -> Option<ClosureLoop> {
    let crossings = hole_crossings(pattern, &pattern.holes()[h]);
    if crossings.is_empty() {
        return None;
    }
    let crossings = rotate_to_lowest(&crossings, |c| c.0);
    let lines: Vec<_> = crossings
        .iter()
        .map(|&(e, _, v)| (pattern.vertices()[v], pattern.crease_direction(v, pattern.other_end(e, v))))
        .collect();
    let n = crossings.len();
    if let Some(center) = concurrency_center(pattern, &lines) {
        let steps = (0..n)
            .map(|k| {
                let prev = lines[(k + n - 1) % n].1;
                LoopStep {
                    beta: if n == 1 { std::f64::consts::TAU } else { ccw_angle(prev, lines[k].1) },
                    a: 0.0,
                    b: 0.0,
                    crease: crossings[k].0,
                    var: pattern.inner_index(crossings[k].0).unwrap(),
                }
            })
            .collect();
        return Some(ClosureLoop {
            kind: LoopKind::ConcurrentHole {
                hole: h,
                center: [center.x, center.y],
            },
            steps,
        });
    }
    let frames: Vec<Frame2> = crossings.iter().map(|&(e, p, _)| crossing_frame(pattern, e, p)).collect();
    let steps = (0..n)
        .map(|k| {
            let (beta, a, b) = frames[(k + n - 1) % n].step_to(&frames[k]);
            LoopStep {
                beta,
                a,
                b,
                crease: crossings[k].0,
                var: pattern.inner_index(crossings[k].0).unwrap(),
            }
        })
        .collect();
    Some(ClosureLoop {
        kind: LoopKind::Hole { hole: h },
        steps,
    })
}

impl ConstraintSystem {
    pub fn build(pattern: &CreasePattern) -> Self {
        let mut loops: Vec<ClosureLoop> = pattern.inner_vertices().into_iter().map(|v| vertex_loop(pattern, v)).collect();
        loops.extend((0..pattern.holes().len()).filter_map(|h| hole_loop(pattern, h)));
        Self::from_loops(loops, pattern.num_inner_creases())
    }

    pub fn from_loops(loops: Vec<ClosureLoop>, num_vars: usize) -> Self {
        let mut used = vec![false; num_vars];
        for l in &loops {
            for v in l.vars() {
                used[v] = true;
            }
        }
        Self {
            loops,
            num_vars,
            free_vars: (0..num_vars).filter(|&v| !used[v]).collect(),
            tol: RESIDUAL_TOL,
        }
    }

    /// System restricted to the given loops, over the same variables.
    pub fn subsystem(&self, loops: &[usize]) -> Self {
        let mut s = Self::from_loops(loops.iter().map(|&k| self.loops[k].clone()).collect(), self.num_vars);
        s.tol = self.tol;
        s
    }

    /// Loop `k` alone, with its folding angles renumbered `0..n`. Returns the
    /// system and the global index of every local variable.
    pub fn local_loop(&self, k: usize) -> (Self, Vec<usize>) {
        let mut map: Vec<usize> = Vec::new();
        let mut l = self.loops[k].clone();
        for s in &mut l.steps {
            let local = match map.iter().position(|&g| g == s.var) {
                Some(i) => i,
                None => {
                    map.push(s.var);
                    map.len() - 1
                }
            };
            s.var = local;
        }
        let mut sys = Self::from_loops(vec![l], map.len());
        sys.tol = self.tol;
        (sys, map)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.loops.iter().map(|l| l.dim()).sum()
    }

    pub fn num_vertex_loops(&self) -> usize {
        self.loops.iter().filter(|l| l.dim() == 3).count()
    }

    pub fn num_hole_loops(&self) -> usize {
        self.loops.iter().filter(|l| l.dim() == 6).count()
    }

    pub fn residual(&self, rho: &[f64]) -> Residual {
        let mut values = Vec::with_capacity(self.dim());
        let mut per_loop = Vec::with_capacity(self.loops.len());
        let mut max_norm = 0.0f64;
        for l in &self.loops {
            let t = l.product(rho);
            let r = l.extract(&t);
            max_norm = max_norm.max(l.deviation(&t)).max(r.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            values.extend(&r);
            per_loop.push(r);
        }
        Residual {
            values,
            per_loop,
            max_norm,
        }
    }

    pub fn residual_vector(&self, rho: &[f64]) -> DVector<f64> {
        self.residual(rho).vector()
    }

    pub fn max_norm(&self, rho: &[f64]) -> f64 {
        self.residual(rho).max_norm
    }

    pub fn is_satisfied(&self, rho: &[f64]) -> bool {
        self.max_norm(rho) <= self.tol
    }
}

/// True when every folding angle is ±pi.
pub fn is_flat_state(rho: &[f64]) -> bool {
    rho.iter().all(|r| (r.abs() - std::f64::consts::PI).abs() <= FLAT_EPS)
}

/// True when every sample is `s` or `-s` for a single state `s` (which may be
/// zero), i.e. the sampled space is trivial.
pub fn is_trivial_space(samples: &[Vec<f64>], tol: f64) -> bool {
    let Some(first) = samples.first() else {
        return true;
    };
    let dist = |a: &[f64], b: &[f64], sign: f64| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - sign * y).abs()));
    samples
        .iter()
        .all(|s| dist(s, first, 1.0) <= tol || dist(s, first, -1.0) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn fig2_system_shape() {
        let s = ConstraintSystem::build(&fixtures::fig2_vertex());
        assert_eq!(s.loops.len(), 1);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.num_vars, 4);
    }

    #[test]
    fn fig2_branch_closes() {
        let s = ConstraintSystem::build(&fixtures::fig2_vertex());
        for k in 0..=20 {
            let t = -PI + TAU_STEP * k as f64;
            assert!(s.max_norm(&[t, 0.0, t, 0.0]) <= 1e-10);
            assert!(s.max_norm(&[0.0, t, 0.0, t]) <= 1e-10);
        }
    }
    const TAU_STEP: f64 = 2.0 * PI / 20.0;

    #[test]
    fn cube_corner_closes() {
        let s = ConstraintSystem::build(&fixtures::cube_corner());
        assert!(s.max_norm(&[FRAC_PI_2; 3]) <= 1e-10);
        assert!(s.max_norm(&[0.0; 3]) > 0.1);
    }

    #[test]
    fn hole_system_shape() {
        let p = fixtures::pentagon_hole(0.35);
        let s = ConstraintSystem::build(&p);
        assert_eq!(s.loops.len(), 1);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.num_vars, 5);
        assert!(s.max_norm(&[0.0; 5]) <= 1e-12);
    }

    #[test]
    fn radial_hole_is_concurrent() {
        let p = fixtures::pentagon_hole(0.0);
        let s = ConstraintSystem::build(&p);
        assert!(matches!(s.loops[0].kind, LoopKind::ConcurrentHole { .. }));
        let total: f64 = s.loops[0].steps.iter().map(|st| st.beta).sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn forest_has_vertex_loops_only() {
        let s = ConstraintSystem::build(&fixtures::forest_pair());
        assert_eq!(s.loops.len(), 2);
        assert_eq!(s.num_hole_loops(), 0);
    }

    #[test]
    fn free_creases_recorded() {
        let s = ConstraintSystem::build(&fixtures::three_squares());
        assert!(s.loops.is_empty());
        assert_eq!(s.free_vars, vec![0, 1]);
    }

    #[test]
    fn flat_predicates() {
        assert!(is_flat_state(&[PI, -PI]));
        assert!(!is_flat_state(&[PI, 0.5]));
        assert!(is_trivial_space(&[vec![0.0, 0.0]], 1e-9));
        assert!(is_trivial_space(&[vec![0.4, 0.1], vec![-0.4, -0.1]], 1e-9));
        assert!(!is_trivial_space(&[vec![0.4, 0.1], vec![0.2, 0.1]], 1e-9));
    }

    #[test]
    fn half_turn_is_not_a_root() {
        // rotx(pi) has zero axis vector but is far from the identity.
        let l = ClosureLoop {
            kind: LoopKind::Vertex { vertex: 0 },
            steps: vec![LoopStep {
                beta: 0.0,
                a: 0.0,
                b: 0.0,
                crease: 0,
                var: 0,
            }],
        };
        let t = l.product(&[PI]);
        assert!(l.extract(&t).iter().all(|x| x.abs() < 1e-15));
        assert!(l.deviation(&t) > 1.9);
    }
}
