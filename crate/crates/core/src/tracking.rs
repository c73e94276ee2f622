//! Predictor-corrector continuation of folding motions, and composition of
//! single-vertex motions on patterns whose inner crease graph is a forest.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{jacobian, tangent_report};
use crate::collision::{Collider, Verdict};
use crate::constraints::ConstraintSystem;
use crate::linalg::{full_svd, max_abs, RANK_REL_TOL};
use crate::model::{CreaseKind, CreasePattern};
use crate::newton::{max_dist, project, to_vector, NewtonOptions};

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("state is not on the constraint variety (residual {0:e})")]
    NotOnVariety(f64),
    #[error("direction is not a first-order flex (|J d| = {0:e})")]
    NotAFlex(f64),
    #[error("corrector failed to converge even at the minimum step")]
    CorrectorDiverged,
    #[error("expected {expected} folding angles, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("inner crease graph is not a forest{}", match .crease { Some(c) => format!(" (crease {c} closes a cycle)"), None => " (pattern has holes)".into() })]
    NotForest { crease: Option<usize> },
    #[error("single-vertex ranges of crease {crease} meet only at {value}")]
    NonGenericIntersection { crease: usize, value: f64 },
    #[error("single-vertex ranges of crease {crease} do not intersect")]
    EmptyIntersection { crease: usize },
    #[error("path for inner vertex {vertex} does not pass through the start state")]
    BadVertexPath { vertex: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    /// Predictor length in max-norm.
    pub step: f64,
    /// Largest accepted distance between consecutive samples.
    pub max_step: f64,
    /// Halving stops below this step.
    pub min_step: f64,
    pub max_steps: usize,
    pub newton: NewtonOptions,
    /// Directions tried at a branch point.
    pub branch_samples: usize,
    pub seed: u64,
    /// trackTo gives up after this many steps without getting closer.
    pub stall_steps: usize,
    pub target_tol: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self::with_step(PI / 200.0)
    }
}

impl TrackOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            max_step: 2.0 * step,
            min_step: step * 1e-4,
            max_steps: 2000,
            newton: NewtonOptions::default(),
            branch_samples: 16,
            seed: 0,
            stall_steps: 20,
            target_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    StepsCompleted,
    /// Some folding angle reached ±pi.
    AngleBound,
    BranchPoint,
    CorrectorDiverged,
    /// The next sample would make panels cross; the path stops before it.
    Collision,
    Stalled,
    /// The start state has no first-order flex.
    NoFlex,
    TargetReached,
    Composed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub rho: Vec<f64>,
    pub residual: f64,
    pub predictor_length: f64,
    pub corrector_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPath {
    pub samples: Vec<PathSample>,
    pub termination: Termination,
    /// Sample indices located at branch points.
    pub branch_points: Vec<usize>,
    /// Per crease: the angle never decreases or never increases.
    pub monotone: Vec<bool>,
}

impl FoldPath {
    fn finish(samples: Vec<PathSample>, termination: Termination, branch_points: Vec<usize>) -> Self {
        let n = samples.first().map_or(0, |s| s.rho.len());
        let monotone = (0..n)
            .map(|j| {
                let d: Vec<f64> = samples.windows(2).map(|w| w[1].rho[j] - w[0].rho[j]).collect();
                d.iter().all(|&x| x >= -1e-12) || d.iter().all(|&x| x <= 1e-12)
            })
            .collect();
        Self {
            samples,
            termination,
            branch_points,
            monotone,
        }
    }

    pub fn rhos(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.rho.clone()).collect()
    }

    pub fn last(&self) -> &[f64] {
        &self.samples.last().expect("paths are never empty").rho
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackToResult {
    pub path: FoldPath,
    /// The last sample is within the target tolerance. A failure suggests,
    /// but does not prove, that the two states are not connected.
    pub reached: bool,
}

fn sample(system: &ConstraintSystem, rho: Vec<f64>, predictor_length: f64, corrector_iterations: usize) -> PathSample {
    PathSample {
        residual: system.max_norm(&rho),
        rho,
        predictor_length,
        corrector_iterations,
    }
}

fn normalize_max(v: DVector<f64>) -> DVector<f64> {
    let m = max_abs(&v);
    if m > 0.0 {
        v / m
    } else {
        v
    }
}

pub struct Tracker<'a> {
    system: &'a ConstraintSystem,
    opts: TrackOptions,
    collider: Option<&'a Collider<'a>>,
}

struct Step {
    rho: Vec<f64>,
    h: f64,
    iterations: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(system: &'a ConstraintSystem, opts: TrackOptions) -> Self {
        Self {
            system,
            opts,
            collider: None,
        }
    }

    /// Truncate paths at the first sample whose panels cross.
    pub fn with_collider(mut self, collider: &'a Collider<'a>) -> Self {
        self.collider = Some(collider);
        self
    }

    fn check_start(&self, rho: &[f64]) -> Result<f64, TrackingError> {
        if rho.len() != self.system.num_vars {
            return Err(TrackingError::WrongLength {
                expected: self.system.num_vars,
                got: rho.len(),
            });
        }
        let r = self.system.max_norm(rho);
        if r > self.system.tol {
            return Err(TrackingError::NotOnVariety(r));
        }
        Ok(r)
    }

    fn correct(&self, x: &[f64], t: &DVector<f64>, h: f64) -> Option<Step> {
        let y: Vec<f64> = x.iter().zip(t.iter()).map(|(a, b)| a + h * b).collect();
        let r = project(self.system, &y, None, &self.opts.newton);
        (r.converged && max_dist(&r.rho, x) <= self.opts.max_step).then_some(Step {
            rho: r.rho,
            h,
            iterations: r.iterations,
        })
    }

    fn step_halving(&self, x: &[f64], t: &DVector<f64>, h0: f64) -> Option<Step> {
        let mut h = h0;
        while h >= self.opts.min_step {
            if let Some(s) = self.correct(x, t, h) {
                return Some(s);
            }
            h *= 0.5;
        }
        None
    }

    fn flex_basis(&self, x: &[f64]) -> DMatrix<f64> {
        tangent_report(self.system, x, self.opts.newton.rank_tol, 0.0).flex_basis
    }

    fn deg(&self, x: &[f64]) -> usize {
        tangent_report(self.system, x, self.opts.newton.rank_tol, 0.0).deg
    }

    fn crosses(&self, x: &[f64]) -> bool {
        self.collider
            .is_some_and(|c| c.check_unchecked(x, &[]).is_ok_and(|r| r.verdict == Verdict::Crossing))
    }

    /// Largest step along `t` from `x` whose corrected point stays inside
    /// [-pi, pi], found by bisection.
    fn to_angle_bound(&self, x: &[f64], t: &DVector<f64>, h: f64) -> Option<Step> {
        let (mut lo, mut hi) = (0.0, h);
        let mut best: Option<Step> = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match self.correct(x, t, mid) {
                Some(s) if s.rho.iter().all(|r| r.abs() <= PI) => {
                    lo = mid;
                    best = Some(s);
                }
                _ => hi = mid,
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        best.map(|mut s| {
            for r in &mut s.rho {
                if PI - r.abs() < 1e-9 {
                    *r = PI.copysign(*r);
                }
            }
            s
        })
    }

    /// Orientation determinant of the tangent; its sign flips across a
    /// simple branch point of a one-dimensional family.
    fn orientation(&self, rows: &DMatrix<f64>, x: &[f64], t: &DVector<f64>) -> f64 {
        let j = rows * jacobian(self.system, x);
        let n = self.system.num_vars;
        let mut a = DMatrix::zeros(n, n);
        a.rows_mut(0, n - 1).copy_from(&j);
        a.row_mut(n - 1).copy_from(&t.transpose());
        a.determinant()
    }

    /// Fixed row combination making the orientation test square.
    fn orientation_rows(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.system.num_vars;
        if n < 2 || self.deg(x) != 1 {
            return None;
        }
        let j = jacobian(self.system, x);
        let svd = j.clone().svd(true, false);
        let u = svd.u?;
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut rows = DMatrix::zeros(n - 1, j.nrows());
        for (k, &i) in idx.iter().take(n - 1).enumerate() {
            rows.row_mut(k).copy_from(&u.column(i).transpose());
        }
        Some(rows)
    }

    /// Bisect the step length between an orientation sign change.
    fn locate_branch(&self, rows: &DMatrix<f64>, x: &[f64], t: &DVector<f64>, h: f64, sign0: f64) -> Option<Step> {
        let (mut lo, mut hi) = (0.0, h);
        let mut best = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let s = self.correct(x, t, mid)?;
            let tm = self.oriented_tangent(&s.rho, t);
            let d = self.orientation(rows, &s.rho, &tm);
            if d * sign0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            best = Some(s);
            if hi - lo < 1e-13 {
                break;
            }
        }
        best
    }

    fn oriented_tangent(&self, x: &[f64], prev: &DVector<f64>) -> DVector<f64> {
        let n = self.flex_basis(x);
        normalize_max(&n * (n.transpose() * prev))
    }

    pub fn track_flex(&self, rho0: &[f64], direction: &[f64], steps: usize) -> Result<FoldPath, TrackingError> {
        let r0 = self.check_start(rho0)?;
        let rep = tangent_report(self.system, rho0, self.opts.newton.rank_tol, r0);
        let start = PathSample {
            rho: rho0.to_vec(),
            residual: r0,
            predictor_length: 0.0,
            corrector_iterations: 0,
        };
        if rep.deg == 0 {
            return Ok(FoldPath::finish(vec![start], Termination::NoFlex, vec![]));
        }
        if direction.len() != self.system.num_vars {
            return Err(TrackingError::WrongLength {
                expected: self.system.num_vars,
                got: direction.len(),
            });
        }
        let d = to_vector(direction);
        let jd = (&rep.jacobian * &d).norm();
        if d.norm() == 0.0 || jd > 1e-8 * d.norm() {
            return Err(TrackingError::NotAFlex(jd));
        }
        let mut samples = vec![start];
        let mut branch_points = Vec::new();
        let mut x = rho0.to_vec();
        let mut dir = normalize_max(d);
        let mut base_deg: Option<usize> = None;
        let mut orient: Option<(DMatrix<f64>, f64)> = None;
        let mut termination = Termination::StepsCompleted;
        for _ in 0..steps {
            let t = self.oriented_tangent(&x, &dir);
            if max_abs(&t) < 1e-9 {
                termination = Termination::Stalled;
                break;
            }
            let Some(mut s) = self.step_halving(&x, &t, self.opts.step) else {
                if samples.len() == 1 {
                    return Err(TrackingError::CorrectorDiverged);
                }
                termination = Termination::CorrectorDiverged;
                break;
            };
            if max_dist(&s.rho, &x) < 0.25 * s.h {
                termination = Termination::Stalled;
                break;
            }
            let mut bound = false;
            if s.rho.iter().any(|r| r.abs() > PI) {
                match self.to_angle_bound(&x, &t, s.h) {
                    Some(b) if max_dist(&b.rho, &x) > 1e-12 => s = b,
                    _ => {
                        termination = Termination::AngleBound;
                        break;
                    }
                }
                bound = true;
            }
            if self.crosses(&s.rho) {
                termination = Termination::Collision;
                break;
            }
            if bound || s.rho.iter().any(|r| PI - r.abs() <= 1e-9) {
                for r in &mut s.rho {
                    if PI - r.abs() <= 1e-9 {
                        *r = PI.copysign(*r);
                    }
                }
                if base_deg.is_some_and(|b| self.deg(&s.rho) > b) {
                    branch_points.push(samples.len());
                }
                samples.push(sample(self.system, s.rho, s.h, s.iterations));
                termination = Termination::AngleBound;
                break;
            }
            let tn = self.oriented_tangent(&s.rho, &t);
            if let Some((rows, sign0)) = &orient {
                let sign = self.orientation(rows, &s.rho, &tn);
                if sign * sign0 < 0.0 {
                    if let Some(b) = self.locate_branch(rows, &x, &t, s.h, *sign0) {
                        branch_points.push(samples.len());
                        samples.push(sample(self.system, b.rho, b.h, b.iterations));
                        termination = Termination::BranchPoint;
                        break;
                    }
                }
            }
            let deg = self.deg(&s.rho);
            match base_deg {
                None => base_deg = Some(deg),
                Some(b) if deg > b => {
                    branch_points.push(samples.len());
                    samples.push(sample(self.system, s.rho, s.h, s.iterations));
                    termination = Termination::BranchPoint;
                    break;
                }
                _ => {}
            }
            if orient.is_none() {
                orient = self.orientation_rows(&s.rho).map(|rows| {
                    let sign = self.orientation(&rows, &s.rho, &tn);
                    (rows, sign)
                });
            }
            x = s.rho.clone();
            samples.push(sample(self.system, s.rho, s.h, s.iterations));
            dir = t;
        }
        Ok(FoldPath::finish(samples, termination, branch_points))
    }

    /// Candidate continuation directions at a point with several flexes.
    fn branch_directions(&self, x: &[f64]) -> Vec<DVector<f64>> {
        let n = self.flex_basis(x);
        let k = n.ncols();
        let m = self.opts.branch_samples;
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        (0..m)
            .map(|i| {
                let c = if k == 2 {
                    let a = 2.0 * PI * i as f64 / m as f64;
                    DVector::from_vec(vec![a.cos(), a.sin()])
                } else {
                    DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
                };
                normalize_max(&n * c)
            })
            .collect()
    }

    /// Greedy continuation steered toward `target`.
    pub fn track_to(&self, start: &[f64], target: &[f64]) -> Result<TrackToResult, TrackingError> {
        let r0 = self.check_start(start)?;
        self.check_start(target)?;
        let tol = self.opts.target_tol;
        let mut samples = vec![PathSample {
            rho: start.to_vec(),
            residual: r0,
            predictor_length: 0.0,
            corrector_iterations: 0,
        }];
        let mut branch_points = Vec::new();
        let mut x = start.to_vec();
        let mut best = max_dist(&x, target);
        let mut since_best = 0;
        let mut orient: Option<(DMatrix<f64>, f64)> = None;
        let goal = to_vector(target);
        let mut termination = Termination::Stalled;
        for _ in 0..self.opts.max_steps {
            let dist = max_dist(&x, target);
            if dist <= tol {
                termination = Termination::TargetReached;
                break;
            }
            let g = &goal - to_vector(&x);
            if dist <= self.opts.step {
                if let Some(s) = self.correct(&x, &normalize_max(g.clone()), dist) {
                    if max_dist(&s.rho, target) <= tol {
                        samples.push(sample(self.system, target.to_vec(), s.h, s.iterations));
                        termination = Termination::TargetReached;
                        break;
                    }
                }
            }
            let basis = self.flex_basis(&x);
            if basis.ncols() == 0 {
                termination = if samples.len() == 1 { Termination::NoFlex } else { Termination::Stalled };
                break;
            }
            let t = &basis * (basis.transpose() * &g);
            let mut t = if max_abs(&t) < 1e-9 * dist {
                match self.best_branch(&x, &g) {
                    Some(t) => t,
                    None => {
                        termination = Termination::Stalled;
                        break;
                    }
                }
            } else {
                normalize_max(t)
            };
            let h = self.opts.step.min(dist);
            let Some(mut s) = self.step_halving(&x, &t, h) else {
                if samples.len() == 1 {
                    return Err(TrackingError::CorrectorDiverged);
                }
                termination = Termination::CorrectorDiverged;
                break;
            };
            if max_dist(&s.rho, &x) < 0.25 * s.h {
                termination = Termination::Stalled;
                break;
            }
            if s.rho.iter().any(|r| r.abs() > PI) {
                match self.to_angle_bound(&x, &t, s.h) {
                    Some(b) if max_dist(&b.rho, &x) > 1e-12 => s = b,
                    _ => {
                        termination = Termination::AngleBound;
                        break;
                    }
                }
            }
            if self.crosses(&s.rho) {
                termination = Termination::Collision;
                break;
            }
            let tn = self.oriented_tangent(&s.rho, &t);
            if let Some((rows, sign0)) = &orient {
                if self.orientation(rows, &s.rho, &tn) * sign0 < 0.0 {
                    if let Some(b) = self.locate_branch(rows, &x, &t, s.h, *sign0) {
                        branch_points.push(samples.len());
                        samples.push(sample(self.system, b.rho.clone(), b.h, b.iterations));
                        x = b.rho;
                        orient = None;
                        let g = &goal - to_vector(&x);
                        if let Some(tb) = self.best_branch(&x, &g) {
                            t = tb;
                            if let Some(sb) = self.step_halving(&x, &t, self.opts.step.min(max_dist(&x, target))) {
                                s = sb;
                            } else {
                                termination = Termination::CorrectorDiverged;
                                break;
                            }
                        } else {
                            continue;
                        }
                    }
                }
            }
            if orient.is_none() {
                let tn = self.oriented_tangent(&s.rho, &t);
                orient = self.orientation_rows(&s.rho).map(|rows| {
                    let sign = self.orientation(&rows, &s.rho, &tn);
                    (rows, sign)
                });
            }
            x = s.rho.clone();
            samples.push(sample(self.system, s.rho, s.h, s.iterations));
            let d = max_dist(&x, target);
            if d < best - 1e-12 {
                best = d;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.opts.stall_steps {
                    termination = Termination::Stalled;
                    break;
                }
            }
        }
        let reached = termination == Termination::TargetReached;
        Ok(TrackToResult {
            path: FoldPath::finish(samples, termination, branch_points),
            reached,
        })
    }

    /// Among sampled directions at a branch point, the corrected one best
    /// aligned with `goal`.
    fn best_branch(&self, x: &[f64], goal: &DVector<f64>) -> Option<DVector<f64>> {
        let gn = goal.norm();
        let h = self.opts.step;
        let mut best: Option<(f64, DVector<f64>)> = None;
        for t in self.branch_directions(x) {
            let Some(s) = self.correct(x, &t, h) else { continue };
            let moved = to_vector(&s.rho) - to_vector(x);
            if moved.norm() < 0.25 * h {
                continue;
            }
            let score = moved.dot(goal) / (moved.norm() * gn);
            if best.as_ref().is_none_or(|(b, _)| score > *b + 1e-12) {
                best = Some((score, normalize_max(moved)));
            }
        }
        best.filter(|(s, _)| *s > 0.0).map(|(_, t)| t)
    }
}

pub fn track_flex(system: &ConstraintSystem, rho0: &[f64], direction: &[f64], steps: usize, step: f64) -> Result<FoldPath, TrackingError> {
    Tracker::new(system, TrackOptions::with_step(step)).track_flex(rho0, direction, steps)
}

pub fn track_to(system: &ConstraintSystem, start: &[f64], target: &[f64]) -> Result<TrackToResult, TrackingError> {
    Tracker::new(system, TrackOptions::default()).track_to(start, target)
}

/// Fails unless the pattern has no holes and its inner creases form a
/// forest. Boundary vertices are distinct nodes.
pub fn check_forest(pattern: &CreasePattern) -> Result<(), TrackingError> {
    if !pattern.holes().is_empty() {
        return Err(TrackingError::NotForest { crease: None });
    }
    let mut parent: Vec<usize> = (0..pattern.vertices().len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, c) in pattern.creases().iter().enumerate() {
        if c.kind() != CreaseKind::Inner {
            continue;
        }
        let (a, b) = (find(&mut parent, c.vertices[0]), find(&mut parent, c.vertices[1]));
        if a == b {
            return Err(TrackingError::NotForest { crease: Some(k) });
        }
        parent[a] = b;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComposedPath {
    pub path: FoldPath,
    /// Index of the sample equal to the start state.
    pub start: usize,
}

struct VertexPath {
    map: Vec<usize>,
    system: ConstraintSystem,
    samples: Vec<Vec<f64>>,
    start: usize,
}

/// Motion of one vertex through `local0`, tracked both ways along the flex
/// that needs the least correction.
fn generate_vertex_path(system: &ConstraintSystem, local0: &[f64], opts: &TrackOptions) -> Result<(Vec<Vec<f64>>, usize), TrackingError> {
    let tracker = Tracker::new(system, *opts);
    let basis = tracker.flex_basis(local0);
    if basis.ncols() == 0 {
        return Ok((vec![local0.to_vec()], 0));
    }
    let candidates = if basis.ncols() == 1 {
        vec![normalize_max(basis.column(0).into_owned())]
    } else {
        tracker.branch_directions(local0)
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for t in candidates {
        let Some(s) = tracker.correct(local0, &t, opts.step) else { continue };
        let moved = to_vector(&s.rho) - to_vector(local0);
        let err = (&moved - &t * opts.step).amax() / opts.step;
        if best.as_ref().is_none_or(|(e, _)| err < *e - 1e-12) {
            best = Some((err, t));
        }
    }
    let Some((_, dir)) = best else {
        return Ok((vec![local0.to_vec()], 0));
    };
    let plus = tracker.track_flex(local0, dir.as_slice(), opts.max_steps)?;
    let neg: Vec<f64> = dir.iter().map(|x| -x).collect();
    let minus = tracker.track_flex(local0, &neg, opts.max_steps)?;
    let mut samples: Vec<Vec<f64>> = minus.rhos().into_iter().rev().collect();
    let start = samples.len() - 1;
    samples.extend(plus.rhos().into_iter().skip(1));
    Ok((samples, start))
}

/// Local state on `path` whose variable `var` equals `value`, searching for
/// a bracketing pair of samples nearest `hint`.
fn state_at(path: &VertexPath, var: usize, value: f64, hint: usize, newton: &NewtonOptions) -> Option<(Vec<f64>, usize)> {
    let s = &path.samples;
    let mut best: Option<usize> = None;
    for i in 0..s.len().saturating_sub(1) {
        let (a, b) = (s[i][var] - value, s[i + 1][var] - value);
        if a * b <= 0.0 && best.is_none_or(|k| i.abs_diff(hint) < k.abs_diff(hint)) {
            best = Some(i);
        }
    }
    let i = match best {
        Some(i) => i,
        None if s.len() == 1 && (s[0][var] - value).abs() <= 1e-9 => return Some((s[0].clone(), 0)),
        None => return None,
    };
    let (a, b) = (s[i][var], s[i + 1][var]);
    let w = if (b - a).abs() > 0.0 { (value - a) / (b - a) } else { 0.0 };
    let mut guess: Vec<f64> = s[i].iter().zip(&s[i + 1]).map(|(p, q)| p + w * (q - p)).collect();
    guess[var] = value;
    let free: Vec<bool> = (0..guess.len()).map(|k| k != var).collect();
    let r = project(&path.system, &guess, Some(&free), newton);
    r.converged.then_some((r.rho, i))
}

/// Glue single-vertex motions along the inner crease forest into a motion
/// of the whole pattern through `rho`. `per_vertex` optionally supplies,
/// for each inner vertex in order, a path of full-length states; otherwise
/// each vertex's motion is tracked from `rho`.
pub fn compose_forest(
    pattern: &CreasePattern,
    rho: &[f64],
    per_vertex: Option<&[Vec<Vec<f64>>]>,
    opts: &TrackOptions,
) -> Result<ComposedPath, TrackingError> {
    check_forest(pattern)?;
    let system = ConstraintSystem::build(pattern);
    Tracker::new(&system, *opts).check_start(rho)?;
    let inner = pattern.inner_vertices();
    let mut paths = Vec::with_capacity(inner.len());
    for (k, &v) in inner.iter().enumerate() {
        let (sys, map) = system.local_loop(k);
        let local0: Vec<f64> = map.iter().map(|&g| rho[g]).collect();
        let (samples, start) = match per_vertex {
            Some(given) => {
                let list = given.get(k).ok_or(TrackingError::BadVertexPath { vertex: v })?;
                let local: Vec<Vec<f64>> = list.iter().map(|s| map.iter().map(|&g| s[g]).collect()).collect();
                let start = local
                    .iter()
                    .position(|s| max_dist(s, &local0) <= 1e-6)
                    .ok_or(TrackingError::BadVertexPath { vertex: v })?;
                (local, start)
            }
            None => generate_vertex_path(&sys, &local0, opts)?,
        };
        paths.push(VertexPath {
            map,
            system: sys,
            samples,
            start,
        });
    }

    // Vertex forest: edges are creases joining two inner vertices.
    let pos = |v: usize| inner.iter().position(|&w| w == v);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inner.len()];
    for (c, cr) in pattern.creases().iter().enumerate() {
        if cr.kind() != CreaseKind::Inner {
            continue;
        }
        if let (Some(a), Some(b)) = (pos(cr.vertices[0]), pos(cr.vertices[1])) {
            let var = pattern.inner_index(c).expect("inner crease");
            adj[a].push((b, var));
            adj[b].push((a, var));
        }
    }

    let mut seen = vec![false; inner.len()];
    let mut master: Option<(Vec<Vec<f64>>, usize)> = None;
    for root in 0..inner.len() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let rp = &paths[root];
        let mut composed: Vec<Vec<f64>> = rp
            .samples
            .iter()
            .map(|s| {
                let mut g = rho.to_vec();
                for (l, &gi) in rp.map.iter().enumerate() {
                    g[gi] = s[l];
                }
                g
            })
            .collect();
        let mut start = rp.start;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(w, var) in &adj[u] {
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                queue.push_back(w);
                let child = &paths[w];
                let lc = child.map.iter().position(|&g| g == var).expect("shared crease");
                let range = |vals: &mut dyn Iterator<Item = f64>| {
                    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
                };
                let (plo, phi) = range(&mut composed.iter().map(|s| s[var]));
                let (clo, chi) = range(&mut child.samples.iter().map(|s| s[lc]));
                let (lo, hi) = (plo.max(clo), phi.min(chi));
                let crease = pattern.inner_creases()[var];
                if hi - lo < -1e-9 {
                    return Err(TrackingError::EmptyIntersection { crease });
                }
                if hi - lo <= 1e-9 {
                    return Err(TrackingError::NonGenericIntersection {
                        crease,
                        value: 0.5 * (lo + hi),
                    });
                }
                // Keep the run of samples around the start inside the
                // common range.
                let inside = |s: &Vec<f64>| s[var] >= lo - 1e-12 && s[var] <= hi + 1e-12;
                let mut a = start;
                while a > 0 && inside(&composed[a - 1]) {
                    a -= 1;
                }
                let mut b = start;
                while b + 1 < composed.len() && inside(&composed[b + 1]) {
                    b += 1;
                }
                composed = composed[a..=b].to_vec();
                start -= a;
                // Walk outward from the start so each lookup continues from
                // its neighbour.
                let mut order: Vec<usize> = (start..composed.len()).collect();
                order.extend((0..start).rev());
                let mut hint = child.start;
                let mut keep = vec![true; composed.len()];
                for t in order {
                    if t + 1 == start {
                        hint = child.start;
                    }
                    match state_at(child, lc, composed[t][var].clamp(clo, chi), hint, &opts.newton) {
                        Some((local, i)) => {
                            hint = i;
                            for (l, &gi) in child.map.iter().enumerate() {
                                composed[t][gi] = local[l];
                            }
                        }
                        None => keep[t] = false,
                    }
                }
                let first = (0..start).rev().find(|&t| !keep[t]).map_or(0, |t| t + 1);
                let last = (start..composed.len()).find(|&t| !keep[t]).unwrap_or(composed.len());
                composed = composed[first..last].to_vec();
                start -= first;
            }
        }
        master = Some(match master {
            None => (composed, start),
            Some((mut m, ms)) => {
                // Independent components advance in proportion.
                let len = m.len();
                for (t, sample) in m.iter_mut().enumerate() {
                    let k = if t <= ms {
                        let f = if ms == 0 { 0.0 } else { (ms - t) as f64 / ms as f64 };
                        start - (f * start as f64).round() as usize
                    } else {
                        let f = (t - ms) as f64 / (len - 1 - ms) as f64;
                        start + (f * (composed.len() - 1 - start) as f64).round() as usize
                    };
                    for (g, x) in sample.iter_mut().enumerate() {
                        if composed[k][g] != rho[g] {
                            *x = composed[k][g];
                        }
                    }
                }
                (m, ms)
            }
        });
    }
    let (states, start) = master.unwrap_or_else(|| (vec![rho.to_vec()], 0));
    let samples = states
        .into_iter()
        .enumerate()
        .map(|(t, s)| {
            let r = project(&system, &s, None, &opts.newton);
            let state = if t == start { rho.to_vec() } else { r.rho };
            sample(&system, state, 0.0, r.iterations)
        })
        .collect();
    Ok(ComposedPath {
        path: FoldPath::finish(samples, Termination::Composed, vec![]),
        start,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvdGap {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Singular values and numerical rank at a path sample.
pub fn svd_gap(system: &ConstraintSystem, rho: &[f64]) -> SvdGap {
    let svd = full_svd(&jacobian(system, rho));
    let rank = crate::linalg::numerical_rank(&svd.singular_values, RANK_REL_TOL);
    SvdGap {
        rank,
        singular_values: svd.singular_values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn fig2() -> ConstraintSystem {
        ConstraintSystem::build(&fixtures::fig2_vertex())
    }

    #[test]
    fn fig2_branch_from_flat() {
        let s = fig2();
        let p = track_flex(&s, &[0.0; 4], &[0.0, 1.0, 0.0, 1.0], 400, PI / 200.0).unwrap();
        assert_eq!(p.termination, Termination::AngleBound, "{:?}", p.last());
        for x in p.rhos() {
            assert!(x[0].abs() < 1e-8 && x[2].abs() < 1e-8);
            assert!((x[1] - x[3]).abs() < 1e-8);
        }
        assert!((p.last()[1] - PI).abs() < 1e-9);
        assert!(p.monotone.iter().all(|&m| m));
        for w in p.samples.windows(2) {
            assert!(max_dist(&w[0].rho, &w[1].rho) <= 2.0 * PI / 200.0 + 1e-12);
        }
    }

    #[test]
    fn reversed_direction_mirrors() {
        let s = fig2();
        let a = track_flex(&s, &[0.0; 4], &[1.0, 0.0, 1.0, 0.0], 50, PI / 200.0).unwrap();
        let b = track_flex(&s, &[0.0; 4], &[-1.0, 0.0, -1.0, 0.0], 50, PI / 200.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            for (p, q) in x.rho.iter().zip(&y.rho) {
                assert!((p + q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_flex_direction_rejected() {
        let s = fig2();
        let e = track_flex(&s, &[0.3, 0.0, 0.3, 0.0], &[0.0, 1.0, 0.0, 1.0], 5, 0.01);
        assert!(matches!(e, Err(TrackingError::NotAFlex(_))));
        let e = track_flex(&s, &[0.3, 0.1, 0.3, 0.0], &[1.0, 0.0, 1.0, 0.0], 5, 0.01);
        assert!(matches!(e, Err(TrackingError::NotOnVariety(_))));
    }

    #[test]
    fn through_flat_state() {
        let s = fig2();
        let r = track_to(&s, &[0.3, 0.0, 0.3, 0.0], &[-0.3, 0.0, -0.3, 0.0]).unwrap();
        assert!(r.reached, "{:?}", r.path.termination);
    }

    #[test]
    fn switches_branch() {
        let s = fig2();
        let r = track_to(&s, &[0.3, 0.0, 0.3, 0.0], &[0.0, 0.3, 0.0, 0.3]).unwrap();
        assert!(r.reached, "{:?}", r.path.termination);
        assert!(!r.path.branch_points.is_empty() || r.path.rhos().iter().any(|x| max_abs(&to_vector(x)) < 1e-6));
    }

    #[test]
    fn forest_check() {
        assert!(check_forest(&fixtures::forest_pair()).is_ok());
        assert!(check_forest(&fixtures::fig6_tree()).is_ok());
        assert!(matches!(check_forest(&fixtures::fig6_lock()), Err(TrackingError::NotForest { crease: Some(_) })));
        assert!(matches!(check_forest(&fixtures::pentagon_hole(0.2)), Err(TrackingError::NotForest { crease: None })));
        assert!(matches!(check_forest(&fixtures::miura(3, 3)), Err(TrackingError::NotForest { .. })));
    }

    #[test]
    fn forest_pair_composes_through_flat() {
        let p = fixtures::forest_pair();
        let s = ConstraintSystem::build(&p);
        let n = p.num_inner_creases();
        let c = compose_forest(&p, &vec![0.0; n], None, &TrackOptions::default()).unwrap();
        assert!(c.path.len() > 10);
        for x in &c.path.samples {
            assert!(s.max_norm(&x.rho) <= 1e-9);
        }
        assert!(c.path.rhos().iter().any(|x| x[0].abs() > 0.5));
    }
}
