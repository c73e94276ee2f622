//! Creased-paper data model: validation, sector angles, fold states and the
//! FOLD-compatible JSON format.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Geometric tolerance in paper units used by validation.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed pattern: {0}")]
    Format(String),
    #[error("creases {0} and {1} cross or overlap")]
    NonPlanar(usize, usize),
    #[error("vertex {vertex} lies in the interior of crease {crease}")]
    VertexOnCrease { vertex: usize, crease: usize },
    #[error("panel {panel} is not a valid cycle: {reason}")]
    OpenPanel { panel: usize, reason: String },
    #[error("crease {crease} ({kind:?}) borders {count} panel sides")]
    DanglingCrease {
        crease: usize,
        kind: CreaseKind,
        count: usize,
    },
    #[error("panel adjacency graph is disconnected")]
    Disconnected,
    #[error("hole {hole} is invalid: {reason}")]
    BadHole { hole: usize, reason: String },
    #[error("base panel {0} out of range")]
    InvalidBasePanel(usize),
    #[error("folding angle {value} at inner crease {index} is outside [-pi, pi]")]
    RhoOutOfRange { index: usize, value: f64 },
    #[error("sector angle {value} at panel {panel} corner {corner} is outside (0, 2pi)")]
    BadSectorAngle {
        panel: usize,
        corner: usize,
        value: f64,
    },
    #[error("conflicting order assignments for panels {0} and {1}")]
    LambdaConflict(usize, usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreaseKind {
    Inner,
    Outer,
}

/// FOLD edge assignment. `B` is an outer crease, everything else is inner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Boundary,
    Mountain,
    Valley,
    Flat,
    Unassigned,
}

impl Assignment {
    fn parse(s: &str) -> Result<Self, ModelError> {
        Ok(match s {
            "B" | "b" => Assignment::Boundary,
            "M" | "m" => Assignment::Mountain,
            "V" | "v" => Assignment::Valley,
            "F" | "f" => Assignment::Flat,
            "U" | "u" => Assignment::Unassigned,
            other => return Err(ModelError::Format(format!("unknown edge assignment {other:?}"))),
        })
    }

    fn code(self) -> &'static str {
        match self {
            Assignment::Boundary => "B",
            Assignment::Mountain => "M",
            Assignment::Valley => "V",
            Assignment::Flat => "F",
            Assignment::Unassigned => "U",
        }
    }

    pub fn kind(self) -> CreaseKind {
        match self {
            Assignment::Boundary => CreaseKind::Outer,
            _ => CreaseKind::Inner,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crease {
    pub vertices: [usize; 2],
    pub assignment: Assignment,
}

impl Crease {
    pub fn kind(&self) -> CreaseKind {
        self.assignment.kind()
    }
}

/// Face on one side of a directed edge of the reference embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Face {
    Panel(usize),
    Hole(usize),
    Outer,
}

/// Unvalidated pattern description, either parsed from JSON or built in code.
#[derive(Debug, Clone, Default)]
pub struct RawPattern {
    pub vertices: Vec<[f64; 2]>,
    pub creases: Vec<([usize; 2], Assignment)>,
    pub panels: Vec<Vec<usize>>,
    pub holes: Vec<Vec<usize>>,
    pub base_panel: usize,
    pub initial_rho: Option<Vec<f64>>,
    /// Per panel corner sector angles, parallel to `panels`. Used for
    /// non-developable papers whose coordinates are combinatorial only.
    pub sector_angles: Option<Vec<Vec<f64>>>,
}

impl RawPattern {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self {
            vertices,
            ..Default::default()
        }
    }

    pub fn crease(mut self, a: usize, b: usize, assignment: Assignment) -> Self {
        self.creases.push(([a, b], assignment));
        self
    }

    pub fn inner(self, a: usize, b: usize) -> Self {
        self.crease(a, b, Assignment::Unassigned)
    }

    pub fn outer(self, a: usize, b: usize) -> Self {
        self.crease(a, b, Assignment::Boundary)
    }

    /// Adds outer creases around a closed vertex cycle.
    pub fn boundary_cycle(mut self, cycle: &[usize]) -> Self {
        for k in 0..cycle.len() {
            self = self.outer(cycle[k], cycle[(k + 1) % cycle.len()]);
        }
        self
    }

    pub fn panel(mut self, cycle: Vec<usize>) -> Self {
        self.panels.push(cycle);
        self
    }

    pub fn hole(mut self, cycle: Vec<usize>) -> Self {
        self.holes.push(cycle);
        self
    }

    pub fn base(mut self, panel: usize) -> Self {
        self.base_panel = panel;
        self
    }

    pub fn validate(self) -> Result<CreasePattern, ModelError> {
        CreasePattern::from_raw(self)
    }
}

/// Sector angle of every panel corner, parallel to the panel cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorAngles {
    pub corners: Vec<Vec<f64>>,
}

/// One sector around an inner vertex: the panel corner between two
/// consecutive creases in counter-clockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexStar {
    pub vertex: usize,
    /// Incident creases in counter-clockwise order, starting at the lowest
    /// crease index.
    pub creases: Vec<usize>,
    /// `alphas[k]` is the sector between `creases[k-1]` and `creases[k]`
    /// (cyclically).
    pub alphas: Vec<f64>,
    /// `panels[k]` is the panel occupying sector `k`.
    pub panels: Vec<usize>,
}

/// A validated creased paper. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CreasePattern {
    vertices: Vec<Vector2<f64>>,
    creases: Vec<Crease>,
    panels: Vec<Vec<usize>>,
    holes: Vec<Vec<usize>>,
    base_panel: usize,
    initial_rho: Vec<f64>,
    sector_overrides: Option<Vec<Vec<f64>>>,
    sectors: SectorAngles,
    inner_creases: Vec<usize>,
    inner_index: Vec<Option<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    left_face: HashMap<(usize, usize), Face>,
    on_boundary: Vec<bool>,
}

fn signed_area(points: &[Vector2<f64>]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        * 0.5
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Counter-clockwise angle from direction `from` to direction `to`, in (0, 2pi].
pub fn ccw_angle(from: Vector2<f64>, to: Vector2<f64>) -> f64 {
    let a = cross(from, to).atan2(from.dot(&to));
    if a <= 0.0 {
        a + TAU
    } else {
        a
    }
}

fn segments_conflict(p1: Vector2<f64>, p2: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>) -> bool {
    let d1 = p2 - p1;
    let d2 = q2 - q1;
    let scale = d1.norm().max(d2.norm()).max(1.0);
    let eps = GEOM_EPS * scale;
    let denom = cross(d1, d2);
    if denom.abs() <= eps * d1.norm().max(eps) * d2.norm().max(eps) / scale {
        // Parallel: conflict only if collinear with overlapping interiors.
        if cross(d1, q1 - p1).abs() > eps * d1.norm() {
            return false;
        }
        let len2 = d1.norm_squared();
        let t0 = (q1 - p1).dot(&d1) / len2;
        let t1 = (q2 - p1).dot(&d1) / len2;
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        let tol = GEOM_EPS;
        return hi.min(1.0) - lo.max(0.0) > tol;
    }
    let t = cross(q1 - p1, d2) / denom;
    let u = cross(q1 - p1, d1) / denom;
    let tol = GEOM_EPS;
    t > tol && t < 1.0 - tol && u > tol && u < 1.0 - tol
}

impl CreasePattern {
    fn from_raw(raw: RawPattern) -> Result<Self, ModelError> {
        let vertices: Vec<Vector2<f64>> = raw.vertices.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let nv = vertices.len();
        if raw.panels.is_empty() {
            return Err(ModelError::Format("pattern has no panels".into()));
        }
        let mut creases = Vec::with_capacity(raw.creases.len());
        let mut edge_lookup = HashMap::new();
        for (index, (ends, assignment)) in raw.creases.iter().enumerate() {
            let [a, b] = *ends;
            if a >= nv || b >= nv || a == b {
                return Err(ModelError::Format(format!("crease {index} has invalid endpoints {ends:?}")));
            }
            if (vertices[a] - vertices[b]).norm() <= GEOM_EPS {
                return Err(ModelError::Format(format!("crease {index} has zero length")));
            }
            if edge_lookup.insert((a.min(b), a.max(b)), index).is_some() {
                return Err(ModelError::Format(format!("crease {index} duplicates another crease")));
            }
            creases.push(Crease {
                vertices: [a, b],
                assignment: *assignment,
            });
        }

        // Planarity of the reference embedding.
        for i in 0..creases.len() {
            let [a, b] = creases[i].vertices;
            for j in (i + 1)..creases.len() {
                let [c, d] = creases[j].vertices;
                if segments_conflict(vertices[a], vertices[b], vertices[c], vertices[d]) {
                    return Err(ModelError::NonPlanar(i, j));
                }
            }
            for (v, p) in vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let d = vertices[b] - vertices[a];
                let t = (p - vertices[a]).dot(&d) / d.norm_squared();
                if t > GEOM_EPS && t < 1.0 - GEOM_EPS {
                    let dist = cross(d, p - vertices[a]).abs() / d.norm();
                    if dist <= GEOM_EPS * d.norm().max(1.0) {
                        return Err(ModelError::VertexOnCrease { vertex: v, crease: i });
                    }
                }
            }
        }

        let edge_of = |a: usize, b: usize| edge_lookup.get(&(a.min(b), a.max(b))).copied();

        // Panels: simple cycles of creases, normalized counter-clockwise.
        let mut panels = Vec::with_capacity(raw.panels.len());
        let mut overrides = raw.sector_angles.clone();
        if let Some(ov) = &overrides {
            if ov.len() != raw.panels.len() {
                return Err(ModelError::Format("sectorAngles must have one entry per face".into()));
            }
        }
        for (p, cycle) in raw.panels.iter().enumerate() {
            let open = |reason: &str| ModelError::OpenPanel {
                panel: p,
                reason: reason.to_string(),
            };
            if cycle.len() < 3 {
                return Err(open("fewer than three vertices"));
            }
            if cycle.iter().any(|&v| v >= nv) {
                return Err(open("vertex index out of range"));
            }
            let mut seen = cycle.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != cycle.len() {
                return Err(open("repeated vertex"));
            }
            for k in 0..cycle.len() {
                let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
                if edge_of(a, b).is_none() {
                    return Err(open(&format!("no crease between vertices {a} and {b}")));
                }
            }
            let pts: Vec<_> = cycle.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&pts);
            if area.abs() <= GEOM_EPS {
                return Err(open("zero area"));
            }
            let mut cycle = cycle.clone();
            if area < 0.0 {
                cycle.reverse();
                // Corner k of the reversed cycle is corner (n-1-k) of the input.
                if let Some(ov) = overrides.as_mut() {
                    ov[p].reverse();
                }
            }
            // Closed polygon must be simple: no two non-adjacent sides meet.
            let n = cycle.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    if j == i + 1 || (i == 0 && j == n - 1) {
                        continue;
                    }
                    let (a, b) = (vertices[cycle[i]], vertices[cycle[(i + 1) % n]]);
                    let (c, d) = (vertices[cycle[j]], vertices[cycle[(j + 1) % n]]);
                    if segments_conflict(a, b, c, d) {
                        return Err(open("self-intersecting cycle"));
                    }
                }
            }
            panels.push(cycle);
        }

        let mut left_face: HashMap<(usize, usize), Face> = HashMap::new();
        for (p, cycle) in panels.iter().enumerate() {
            for k in 0..cycle.len() {
                let key = (cycle[k], cycle[(k + 1) % cycle.len()]);
                if left_face.insert(key, Face::Panel(p)).is_some() {
                    return Err(ModelError::NonPlanar(edge_of(key.0, key.1).unwrap(), edge_of(key.0, key.1).unwrap()));
                }
            }
        }

        // Incidence counts.
        let mut counts = vec![0usize; creases.len()];
        for cycle in &panels {
            for k in 0..cycle.len() {
                counts[edge_of(cycle[k], cycle[(k + 1) % cycle.len()]).unwrap()] += 1;
            }
        }
        for (index, crease) in creases.iter().enumerate() {
            let expected = match crease.kind() {
                CreaseKind::Inner => 2,
                CreaseKind::Outer => 1,
            };
            if counts[index] != expected {
                return Err(ModelError::DanglingCrease {
                    crease: index,
                    kind: crease.kind(),
                    count: counts[index],
                });
            }
        }

        // Holes.
        let mut holes = Vec::with_capacity(raw.holes.len());
        for (h, cycle) in raw.holes.iter().enumerate() {
            let bad = |reason: &str| ModelError::BadHole {
                hole: h,
                reason: reason.to_string(),
            };
            if cycle.len() < 3 || cycle.iter().any(|&v| v >= nv) {
                return Err(bad("needs at least three valid vertices"));
            }
            for k in 0..cycle.len() {
                let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
                match edge_of(a, b) {
                    Some(e) if creases[e].kind() == CreaseKind::Outer => {}
                    _ => return Err(bad(&format!("side {a}-{b} is not an outer crease"))),
                }
            }
            let pts: Vec<_> = cycle.iter().map(|&v| vertices[v]).collect();
            let mut cycle = cycle.clone();
            if signed_area(&pts) < 0.0 {
                cycle.reverse();
            }
            for k in 0..cycle.len() {
                let key = (cycle[k], cycle[(k + 1) % cycle.len()]);
                if left_face.insert(key, Face::Hole(h)).is_some() {
                    return Err(bad("overlaps a panel"));
                }
            }
            holes.push(cycle);
        }

        let mut on_boundary = vec![false; nv];
        for crease in &creases {
            if crease.kind() == CreaseKind::Outer {
                on_boundary[crease.vertices[0]] = true;
                on_boundary[crease.vertices[1]] = true;
            }
        }

        let mut inner_creases = Vec::new();
        let mut inner_index = vec![None; creases.len()];
        for (index, crease) in creases.iter().enumerate() {
            if crease.kind() == CreaseKind::Inner {
                inner_index[index] = Some(inner_creases.len());
                inner_creases.push(index);
            }
        }

        if raw.base_panel >= panels.len() {
            return Err(ModelError::InvalidBasePanel(raw.base_panel));
        }

        let initial_rho = raw.initial_rho.clone().unwrap_or_else(|| vec![0.0; inner_creases.len()]);
        if initial_rho.len() != inner_creases.len() {
            return Err(ModelError::Format(format!(
                "initialRho has {} entries, expected {}",
                initial_rho.len(),
                inner_creases.len()
            )));
        }
        for (index, &value) in initial_rho.iter().enumerate() {
            if !(-PI..=PI).contains(&value) || value.is_nan() {
                return Err(ModelError::RhoOutOfRange { index, value });
            }
        }

        if let Some(ov) = &overrides {
            for (p, corners) in ov.iter().enumerate() {
                if corners.len() != panels[p].len() {
                    return Err(ModelError::Format(format!("sectorAngles[{p}] has the wrong length")));
                }
                for (corner, &value) in corners.iter().enumerate() {
                    if !(value > 0.0 && value < TAU) {
                        return Err(ModelError::BadSectorAngle { panel: p, corner, value });
                    }
                }
            }
        }

        let mut pattern = CreasePattern {
            vertices,
            creases,
            panels,
            holes,
            base_panel: raw.base_panel,
            initial_rho,
            sector_overrides: overrides,
            sectors: SectorAngles { corners: Vec::new() },
            inner_creases,
            inner_index,
            edge_lookup,
            left_face,
            on_boundary,
        };
        pattern.sectors = SectorAngles {
            corners: match &pattern.sector_overrides {
                Some(ov) => ov.clone(),
                None => pattern.embedding_sector_angles(),
            },
        };

        if !pattern.panel_graph_connected() {
            return Err(ModelError::Disconnected);
        }
        Ok(pattern)
    }

    /// Sector angles measured from the reference coordinates.
    pub fn embedding_sector_angles(&self) -> Vec<Vec<f64>> {
        self.panels
            .iter()
            .map(|cycle| {
                let n = cycle.len();
                (0..n)
                    .map(|k| {
                        let v = self.vertices[cycle[k]];
                        let next = self.vertices[cycle[(k + 1) % n]];
                        let prev = self.vertices[cycle[(k + n - 1) % n]];
                        ccw_angle(next - v, prev - v)
                    })
                    .collect()
            })
            .collect()
    }

    fn panel_graph_connected(&self) -> bool {
        let adjacency = self.panel_adjacency();
        let mut seen = vec![false; self.panels.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(p) = queue.pop_front() {
            for &(q, _) in &adjacency[p] {
                if !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// For every panel, its neighbours across inner creases as
    /// `(panel, crease)`, sorted by neighbour index then crease index.
    pub fn panel_adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adjacency = vec![Vec::new(); self.panels.len()];
        for &c in &self.inner_creases {
            let (a, b) = self.crease_panels(c);
            if let (Face::Panel(a), Face::Panel(b)) = (a, b) {
                adjacency[a].push((b, c));
                adjacency[b].push((a, c));
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        adjacency
    }

    /// Faces on the left and right of crease `c` (directed from its first to
    /// its second vertex).
    pub fn crease_panels(&self, c: usize) -> (Face, Face) {
        let [a, b] = self.creases[c].vertices;
        (self.left_of(a, b), self.left_of(b, a))
    }

    /// Face to the left of the directed edge `a -> b`.
    pub fn left_of(&self, a: usize, b: usize) -> Face {
        self.left_face.get(&(a, b)).copied().unwrap_or(Face::Outer)
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn creases(&self) -> &[Crease] {
        &self.creases
    }

    pub fn panels(&self) -> &[Vec<usize>] {
        &self.panels
    }

    pub fn holes(&self) -> &[Vec<usize>] {
        &self.holes
    }

    pub fn base_panel(&self) -> usize {
        self.base_panel
    }

    pub fn initial_rho(&self) -> &[f64] {
        &self.initial_rho
    }

    pub fn sector_angles(&self) -> &SectorAngles {
        &self.sectors
    }

    /// True when sector angles are stored explicitly rather than measured.
    pub fn has_sector_overrides(&self) -> bool {
        self.sector_overrides.is_some()
    }

    /// Crease ids of the inner creases; position in this list is the folding
    /// angle index.
    pub fn inner_creases(&self) -> &[usize] {
        &self.inner_creases
    }

    pub fn inner_index(&self, crease: usize) -> Option<usize> {
        self.inner_index[crease]
    }

    pub fn num_inner_creases(&self) -> usize {
        self.inner_creases.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn inner_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| !self.on_boundary[v] && self.incident_creases(v).len() > 0)
            .collect()
    }

    pub fn crease_direction(&self, from: usize, to: usize) -> Vector2<f64> {
        self.vertices[to] - self.vertices[from]
    }

    /// Creases incident to `v`, sorted counter-clockwise by direction angle.
    pub fn incident_creases(&self, v: usize) -> Vec<usize> {
        let mut list: Vec<(f64, usize)> = self
            .creases
            .iter()
            .enumerate()
            .filter(|(_, c)| c.vertices.contains(&v))
            .map(|(i, c)| {
                let other = if c.vertices[0] == v { c.vertices[1] } else { c.vertices[0] };
                let d = self.vertices[other] - self.vertices[v];
                (d.y.atan2(d.x), i)
            })
            .collect();
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        list.into_iter().map(|(_, i)| i).collect()
    }

    pub fn other_end(&self, crease: usize, v: usize) -> usize {
        let [a, b] = self.creases[crease].vertices;
        if a == v {
            b
        } else {
            a
        }
    }

    /// Sector structure around an inner vertex.
    pub fn vertex_star(&self, v: usize) -> VertexStar {
        let ccw = self.incident_creases(v);
        let n = ccw.len();
        let start = (0..n).min_by_key(|&k| ccw[k]).unwrap_or(0);
        let creases: Vec<usize> = (0..n).map(|k| ccw[(start + k) % n]).collect();
        let mut alphas = Vec::with_capacity(n);
        let mut panels = Vec::with_capacity(n);
        for k in 0..n {
            let before = creases[(k + n - 1) % n];
            let after = creases[k];
            // The panel sector from `before` ccw to `after` is the panel on the
            // left of the directed edge v -> other(before).
            let u = self.other_end(before, v);
            let panel = match self.left_of(v, u) {
                Face::Panel(p) => p,
                _ => usize::MAX,
            };
            let alpha = if panel == usize::MAX {
                ccw_angle(self.crease_direction(v, u), self.crease_direction(v, self.other_end(after, v)))
            } else {
                let corner = self.panels[panel].iter().position(|&x| x == v).unwrap();
                self.sectors.corners[panel][corner]
            };
            alphas.push(alpha);
            panels.push(panel);
        }
        VertexStar {
            vertex: v,
            creases,
            alphas,
            panels,
        }
    }

    /// Total sector angle around every inner vertex.
    pub fn angle_sums(&self) -> BTreeMap<usize, f64> {
        self.inner_vertices()
            .into_iter()
            .map(|v| (v, self.vertex_star(v).alphas.iter().sum()))
            .collect()
    }

    /// True when every inner vertex has sector angles summing to 2pi.
    pub fn is_developable(&self, tol: f64) -> bool {
        self.angle_sums().values().all(|s| (s - TAU).abs() <= tol)
    }

    pub fn panel_polygon(&self, panel: usize) -> Vec<Vector2<f64>> {
        self.panels[panel].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Copy of the pattern with every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> CreasePattern {
        let mut out = self.clone();
        for p in &mut out.vertices {
            *p *= c;
        }
        out
    }

    pub fn with_base_panel(&self, panel: usize) -> Result<CreasePattern, ModelError> {
        if panel >= self.panels.len() {
            return Err(ModelError::InvalidBasePanel(panel));
        }
        let mut out = self.clone();
        out.base_panel = panel;
        Ok(out)
    }

    pub fn with_initial_rho(&self, rho: Vec<f64>) -> Result<CreasePattern, ModelError> {
        if rho.len() != self.inner_creases.len() {
            return Err(ModelError::Format("initial rho has the wrong length".into()));
        }
        for (index, &value) in rho.iter().enumerate() {
            if !(-PI..=PI).contains(&value) {
                return Err(ModelError::RhoOutOfRange { index, value });
            }
        }
        let mut out = self.clone();
        out.initial_rho = rho;
        Ok(out)
    }

    pub fn to_raw(&self) -> RawPattern {
        RawPattern {
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            creases: self.creases.iter().map(|c| (c.vertices, c.assignment)).collect(),
            panels: self.panels.clone(),
            holes: self.holes.clone(),
            base_panel: self.base_panel,
            initial_rho: Some(self.initial_rho.clone()),
            sector_angles: self.sector_overrides.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<CreasePattern, ModelError> {
        FoldDocument::from_json(text)?.into_raw()?.validate()
    }

    pub fn to_json(&self) -> String {
        FoldDocument::from_pattern(self).to_json()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

impl AngleUnit {
    pub fn to_radians(self, value: f64) -> f64 {
        match self {
            AngleUnit::Radians => value,
            AngleUnit::Degrees => value.to_radians(),
        }
    }
}

/// Toolkit extension block stored next to the FOLD fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct ToolkitBlock {
    #[serde(default)]
    pub base_panel: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_angles: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "is_radians")]
    pub angle_unit: AngleUnit,
}

fn is_radians(unit: &AngleUnit) -> bool {
    *unit == AngleUnit::Radians
}

/// JSON document in the FOLD convention plus the `toolkit` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_spec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_creator: Option<String>,
    pub vertices_coords: Vec<Vec<f64>>,
    pub edges_vertices: Vec<[usize; 2]>,
    pub edges_assignment: Vec<String>,
    pub faces_vertices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolkit: Option<ToolkitBlock>,
}

impl FoldDocument {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fold document serializes");
        s.push('\n');
        s
    }

    /// Converts to a raw pattern. `force_degrees` treats toolkit angles as
    /// degrees regardless of the stored unit.
    pub fn into_raw_with_unit(self, force_degrees: bool) -> Result<RawPattern, ModelError> {
        let mut vertices = Vec::with_capacity(self.vertices_coords.len());
        for (i, c) in self.vertices_coords.iter().enumerate() {
            match c.as_slice() {
                [x, y] => vertices.push([*x, *y]),
                [x, y, z] if z.abs() <= GEOM_EPS => vertices.push([*x, *y]),
                _ => return Err(ModelError::Format(format!("vertex {i} is not a planar 2D point"))),
            }
        }
        if self.edges_assignment.len() != self.edges_vertices.len() {
            return Err(ModelError::Format("edges_assignment length differs from edges_vertices".into()));
        }
        let creases = self
            .edges_vertices
            .iter()
            .zip(&self.edges_assignment)
            .map(|(e, a)| Ok((*e, Assignment::parse(a)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let toolkit = self.toolkit.unwrap_or_default();
        let unit = if force_degrees {
            AngleUnit::Degrees
        } else {
            toolkit.angle_unit
        };
        let convert = |v: Vec<f64>| v.into_iter().map(|x| unit.to_radians(x)).collect::<Vec<_>>();
        Ok(RawPattern {
            vertices,
            creases,
            panels: self.faces_vertices,
            holes: toolkit.holes,
            base_panel: toolkit.base_panel,
            initial_rho: toolkit.initial_rho.map(convert),
            sector_angles: toolkit
                .sector_angles
                .map(|rows| rows.into_iter().map(convert).collect()),
        })
    }

    pub fn into_raw(self) -> Result<RawPattern, ModelError> {
        self.into_raw_with_unit(false)
    }

    pub fn from_pattern(pattern: &CreasePattern) -> Self {
        let raw = pattern.to_raw();
        let rho = raw.initial_rho.unwrap_or_default();
        let toolkit = ToolkitBlock {
            base_panel: raw.base_panel,
            initial_rho: if rho.iter().all(|&r| r == 0.0) { None } else { Some(rho) },
            holes: raw.holes,
            sector_angles: raw.sector_angles,
            angle_unit: AngleUnit::Radians,
        };
        FoldDocument {
            file_spec: Some(1.1),
            file_creator: Some("origami-toolkit".to_string()),
            vertices_coords: raw.vertices.iter().map(|p| vec![p[0], p[1]]).collect(),
            edges_vertices: raw.creases.iter().map(|(e, _)| *e).collect(),
            edges_assignment: raw.creases.iter().map(|(_, a)| a.code().to_string()).collect(),
            faces_vertices: raw.panels,
            toolkit: Some(toolkit),
        }
    }
}

/// Declared stacking order between two coplanar overlapping panels:
/// `sign = +1` means `a` lies on the positive-normal side of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub a: usize,
    pub b: usize,
    pub sign: i8,
}

/// Folding angles indexed by inner crease plus optional stacking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FoldState {
    pub rho: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_pairs: Vec<LambdaPair>,
}

impl FoldState {
    pub fn new(rho: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in rho.iter().enumerate() {
            if !(-PI..=PI).contains(&value) || value.is_nan() {
                return Err(ModelError::RhoOutOfRange { index, value });
            }
        }
        Ok(Self {
            rho,
            lambda_pairs: Vec::new(),
        })
    }

    /// Adds stacking signs, rejecting a pair declared twice with
    /// contradicting signs.
    pub fn with_lambda(mut self, pairs: Vec<LambdaPair>) -> Result<Self, ModelError> {
        let mut seen: HashMap<(usize, usize), i8> = HashMap::new();
        for p in &pairs {
            if p.sign != 1 && p.sign != -1 {
                return Err(ModelError::Format(format!("lambda sign must be +1 or -1, got {}", p.sign)));
            }
            if let Some(&s) = seen.get(&(p.a, p.b)) {
                if s != p.sign {
                    return Err(ModelError::LambdaConflict(p.a, p.b));
                }
            }
            seen.insert((p.a, p.b), p.sign);
        }
        self.lambda_pairs = pairs;
        Ok(self)
    }

    pub fn negated(&self) -> FoldState {
        FoldState {
            rho: self.rho.iter().map(|r| -r).collect(),
            lambda_pairs: self
                .lambda_pairs
                .iter()
                .map(|p| LambdaPair { sign: -p.sign, ..*p })
                .collect(),
        }
    }
}

/// Normalized folding angles `t = tan(rho / 2)`; `rho = ±pi` maps to `±inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAngles {
    pub t: Vec<f64>,
}

/// Angles within this distance of ±pi are treated as exactly flat-folded.
pub const FLAT_EPS: f64 = 1e-9;

pub fn to_normalized(rho: &[f64]) -> NormalizedAngles {
    NormalizedAngles {
        t: rho
            .iter()
            .map(|&r| {
                if r >= PI {
                    f64::INFINITY
                } else if r <= -PI {
                    f64::NEG_INFINITY
                } else {
                    (r / 2.0).tan()
                }
            })
            .collect(),
    }
}

pub fn from_normalized(t: &NormalizedAngles) -> FoldState {
    FoldState {
        rho: t.t.iter().map(|&x| 2.0 * x.atan()).collect(),
        lambda_pairs: Vec::new(),
    }
}

impl NormalizedAngles {
    pub fn cos(&self, j: usize) -> f64 {
        let t = self.t[j];
        if t.is_infinite() {
            -1.0
        } else {
            (1.0 - t * t) / (1.0 + t * t)
        }
    }

    pub fn sin(&self, j: usize) -> f64 {
        let t = self.t[j];
        if t.is_infinite() {
            0.0
        } else {
            2.0 * t / (1.0 + t * t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn square_with_diagonal() -> RawPattern {
        RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .boundary_cycle(&[0, 1, 2, 3])
            .inner(0, 2)
            .panel(vec![0, 1, 2])
            .panel(vec![0, 2, 3])
    }

    #[test]
    fn square_split_by_diagonal() {
        let p = square_with_diagonal().validate().unwrap();
        assert_eq!(p.panels().len(), 2);
        assert_eq!(p.num_inner_creases(), 1);
        assert_eq!(p.creases().iter().filter(|c| c.kind() == CreaseKind::Outer).count(), 4);
        assert!(p.inner_vertices().is_empty());
    }

    #[test]
    fn clockwise_panels_are_normalized() {
        let raw = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .boundary_cycle(&[0, 1, 2, 3])
            .inner(0, 2)
            .panel(vec![2, 1, 0])
            .panel(vec![0, 2, 3]);
        let p = raw.validate().unwrap();
        assert_eq!(p.panels()[0], vec![0, 1, 2]);
    }

    #[test]
    fn vertex_touching_only() {
        let raw = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
            .boundary_cycle(&[0, 1, 2])
            .boundary_cycle(&[0, 3, 4])
            .panel(vec![0, 1, 2])
            .panel(vec![0, 3, 4]);
        match raw.validate() {
            Err(ModelError::Disconnected) | Err(ModelError::DanglingCrease { .. }) => {}
            other => panic!("expected Disconnected, got {other:?}"),
        }
    }

    #[test]
    fn crossing_creases_rejected() {
        let raw = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .boundary_cycle(&[0, 1, 2, 3])
            .inner(0, 2)
            .inner(1, 3)
            .panel(vec![0, 1, 2])
            .panel(vec![0, 2, 3]);
        assert!(matches!(raw.validate(), Err(ModelError::NonPlanar(_, _))));
    }

    #[test]
    fn inner_crease_with_one_panel_is_dangling() {
        let raw = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .boundary_cycle(&[0, 1, 2, 3])
            .inner(0, 2)
            .panel(vec![0, 1, 2]);
        assert!(matches!(raw.validate(), Err(ModelError::DanglingCrease { .. })));
    }

    #[test]
    fn panel_without_crease_is_open() {
        let raw = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .outer(0, 1)
            .outer(1, 2)
            .outer(2, 3)
            .panel(vec![0, 1, 2, 3]);
        assert!(matches!(raw.validate(), Err(ModelError::OpenPanel { .. })));
    }

    #[test]
    fn degree_four_vertex_star() {
        let p = crate::fixtures::fig2_vertex();
        let v = p.inner_vertices();
        assert_eq!(v.len(), 1);
        let star = p.vertex_star(v[0]);
        assert_eq!(star.creases.len(), 4);
        for a in &star.alphas {
            assert!((a - FRAC_PI_2).abs() < 1e-12);
        }
        assert_eq!(p.num_inner_creases(), 4);
    }

    #[test]
    fn normalized_angle_cases() {
        let t = to_normalized(&[0.0, FRAC_PI_2, PI, -PI]);
        assert_eq!(t.t[0], 0.0);
        assert!((t.t[1] - 1.0).abs() < 1e-15);
        assert_eq!(t.t[2], f64::INFINITY);
        assert_eq!(t.t[3], f64::NEG_INFINITY);
        assert_eq!(t.cos(2), -1.0);
        assert_eq!(t.sin(2), 0.0);
        let back = from_normalized(&t);
        assert_eq!(back.rho[2], PI);
        assert_eq!(back.rho[3], -PI);
    }

    #[test]
    fn lambda_conflict_rejected() {
        let s = FoldState::new(vec![0.0]).unwrap();
        let res = s.with_lambda(vec![LambdaPair { a: 0, b: 2, sign: 1 }, LambdaPair { a: 0, b: 2, sign: -1 }]);
        assert!(matches!(res, Err(ModelError::LambdaConflict(0, 2))));
    }

    #[test]
    fn degrees_flag_converts_initial_rho() {
        let json = r#"{
            "vertices_coords": [[0,0],[1,0],[1,1],[0,1]],
            "edges_vertices": [[0,1],[1,2],[2,3],[3,0],[0,2]],
            "edges_assignment": ["B","B","B","B","V"],
            "faces_vertices": [[0,1,2],[0,2,3]],
            "toolkit": {"initialRho": [90.0], "angleUnit": "degrees"}
        }"#;
        let p = CreasePattern::from_json(json).unwrap();
        assert!((p.initial_rho()[0] - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rho_out_of_range_rejected() {
        assert!(FoldState::new(vec![4.0]).is_err());
    }
}
