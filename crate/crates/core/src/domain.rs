//! Computational domains and their staggered-grid degrees of freedom.
//!
//! A domain is a set of voxels of edge length `h`. Every grid entity (node,
//! edge, face, cell) is addressed by *doubled* integer coordinates: a
//! coordinate is odd along the axes the entity extends in and even along the
//! others, so a k-dimensional entity has exactly k odd coordinates.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking that `side / h` is an integer.
pub const COMMENSURABILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Box3,
    Union3,
    Rect2,
}

/// Axis-aligned box. For 2D rectangles the z entries are zero and ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub origin: [f64; 3],
    pub sides: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub boxes: Vec<AxisBox>,
    pub h: f64,
    pub convex: bool,
}

fn cell_count(len: f64, h: f64) -> Result<usize> {
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "side lengths must be positive, got {len}"
        )));
    }
    let ratio = len / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > COMMENSURABILITY_TOL {
        return Err(Error::Commensurability { side: len, h, ratio });
    }
    Ok(n as usize)
}

fn offset_count(offset: f64, h: f64) -> Result<i64> {
    let ratio = offset / h;
    let n = ratio.round();
    if (ratio - n).abs() > COMMENSURABILITY_TOL {
        return Err(Error::Commensurability { side: offset, h, ratio });
    }
    Ok(n as i64)
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grid spacing must be positive, got {h}"
        )));
    }
    Ok(())
}

pub fn make_box(sides: [f64; 3], h: f64) -> Result<DomainSpec> {
    check_h(h)?;
    for s in sides {
        cell_count(s, h)?;
    }
    Ok(DomainSpec {
        kind: DomainKind::Box3,
        boxes: vec![AxisBox {
            origin: [0.0; 3],
            sides,
        }],
        h,
        convex: true,
    })
}

pub fn make_rect(sides: [f64; 2], h: f64) -> Result<DomainSpec> {
    check_h(h)?;
    for s in sides {
        cell_count(s, h)?;
    }
    Ok(DomainSpec {
        kind: DomainKind::Rect2,
        boxes: vec![AxisBox {
            origin: [0.0; 3],
            sides: [sides[0], sides[1], 0.0],
        }],
        h,
        convex: true,
    })
}

/// Union of face-connected, non-overlapping boxes. Always flagged nonconvex.
pub fn make_union_of_boxes(boxes: Vec<AxisBox>, h: f64) -> Result<DomainSpec> {
    check_h(h)?;
    if boxes.is_empty() {
        return Err(Error::InvalidArgument("union needs at least one box".into()));
    }
    for b in &boxes {
        for a in 0..3 {
            cell_count(b.sides[a], h)?;
            offset_count(b.origin[a], h)?;
        }
    }
    for (i, a) in boxes.iter().enumerate() {
        for (j, b) in boxes.iter().enumerate().skip(i + 1) {
            let mut vol = 1.0;
            for ax in 0..3 {
                let lo = a.origin[ax].max(b.origin[ax]);
                let hi = (a.origin[ax] + a.sides[ax]).min(b.origin[ax] + b.sides[ax]);
                vol *= (hi - lo).max(0.0);
            }
            if vol > 1e-9 * h * h * h {
                return Err(Error::Overlap(format!(
                    "boxes {i} and {j} share volume {vol}"
                )));
            }
        }
    }
    let spec = DomainSpec {
        kind: DomainKind::Union3,
        boxes,
        h,
        convex: false,
    };
    let grid = VoxelGrid::from_spec(&spec)?;
    if !grid.is_face_connected() {
        return Err(Error::Topology("union of boxes is not connected".into()));
    }
    Ok(spec)
}

#[derive(Debug, Deserialize)]
struct BoxEntry {
    origin: [f64; 3],
    sides: [f64; 3],
}

/// Reads a JSON list of `{origin: [x,y,z], sides: [a,b,c]}` entries.
pub fn load_union_file(path: &Path, h: f64) -> Result<DomainSpec> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<BoxEntry> = serde_json::from_str(&text)?;
    let boxes = entries
        .into_iter()
        .map(|e| AxisBox {
            origin: e.origin,
            sides: e.sides,
        })
        .collect();
    make_union_of_boxes(boxes, h)
}

fn parse_reals(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse number '{t}'")))
        })
        .collect()
}

/// Parses `box:a,b,c`, `rect:a,b` or `union:file.json`.
pub fn parse_domain(text: &str, h: f64) -> Result<DomainSpec> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("malformed domain '{text}'")))?;
    match kind {
        "box" => {
            let v = parse_reals(rest)?;
            if v.len() != 3 {
                return Err(Error::InvalidArgument("box needs three sides".into()));
            }
            make_box([v[0], v[1], v[2]], h)
        }
        "rect" => {
            let v = parse_reals(rest)?;
            if v.len() != 2 {
                return Err(Error::InvalidArgument("rect needs two sides".into()));
            }
            make_rect([v[0], v[1]], h)
        }
        "union" => load_union_file(Path::new(rest), h),
        other => Err(Error::InvalidArgument(format!("unknown domain kind '{other}'"))),
    }
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Rect2 => 2,
            _ => 3,
        }
    }

    /// Side lengths of a single box or rectangle.
    pub fn box_sides(&self) -> Option<[f64; 3]> {
        match self.kind {
            DomainKind::Box3 | DomainKind::Rect2 => Some(self.boxes[0].sides),
            DomainKind::Union3 => None,
        }
    }

    /// Same shape with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> DomainSpec {
        let boxes = self
            .boxes
            .iter()
            .map(|b| AxisBox {
                origin: b.origin.map(|x| x * factor),
                sides: b.sides.map(|x| x * factor),
            })
            .collect();
        DomainSpec {
            kind: self.kind,
            boxes,
            h: self.h * factor,
            convex: self.convex,
        }
    }

    /// Same shape on a different grid.
    pub fn with_h(&self, h: f64) -> Result<DomainSpec> {
        match self.kind {
            DomainKind::Box3 => make_box(self.boxes[0].sides, h),
            DomainKind::Rect2 => make_rect([self.boxes[0].sides[0], self.boxes[0].sides[1]], h),
            DomainKind::Union3 => make_union_of_boxes(self.boxes.clone(), h),
        }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.boxes[0].sides;
        match self.kind {
            DomainKind::Box3 => write!(f, "box:{},{},{}", s[0], s[1], s[2]),
            DomainKind::Rect2 => write!(f, "rect:{},{}", s[0], s[1]),
            DomainKind::Union3 => write!(f, "union:{} boxes", self.boxes.len()),
        }
    }
}

/// Euclidean diameter: the largest distance between two box corners.
pub fn diameter(spec: &DomainSpec) -> f64 {
    let dim = spec.dim();
    let mut corners = Vec::new();
    for b in &spec.boxes {
        for mask in 0..(1usize << dim) {
            let mut c = [0.0; 3];
            for a in 0..dim {
                c[a] = b.origin[a] + if mask >> a & 1 == 1 { b.sides[a] } else { 0.0 };
            }
            corners.push(c);
        }
    }
    let mut best: f64 = 0.0;
    for (i, p) in corners.iter().enumerate() {
        for q in &corners[i + 1..] {
            let d2: f64 = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Voxelization of a spec on its bounding grid.
#[derive(Debug, Clone)]
pub(crate) struct VoxelGrid {
    pub dim: usize,
    /// Cells per axis; 0 along z for 2D.
    pub n: [usize; 3],
    pub mask: Vec<bool>,
}

impl VoxelGrid {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let dim = spec.dim();
        let h = spec.h;
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        let mut ranges = Vec::with_capacity(spec.boxes.len());
        for b in &spec.boxes {
            let mut r = [(0i64, 0i64); 3];
            for a in 0..dim {
                let o = offset_count(b.origin[a], h)?;
                let n = cell_count(b.sides[a], h)? as i64;
                r[a] = (o, o + n);
                lo[a] = lo[a].min(o);
                hi[a] = hi[a].max(o + n);
            }
            ranges.push(r);
        }
        let mut n = [0usize; 3];
        for a in 0..dim {
            n[a] = (hi[a] - lo[a]) as usize;
        }
        let nz = if dim == 3 { n[2] } else { 1 };
        let mut mask = vec![false; n[0] * n[1] * nz];
        for r in &ranges {
            let zr = if dim == 3 {
                (r[2].0 - lo[2]) as usize..(r[2].1 - lo[2]) as usize
            } else {
                0..1
            };
            for k in zr {
                for j in (r[1].0 - lo[1]) as usize..(r[1].1 - lo[1]) as usize {
                    for i in (r[0].0 - lo[0]) as usize..(r[0].1 - lo[0]) as usize {
                        mask[i + n[0] * (j + n[1] * k)] = true;
                    }
                }
            }
        }
        Ok(VoxelGrid { dim, n, mask })
    }

    fn nz(&self) -> usize {
        if self.dim == 3 {
            self.n[2]
        } else {
            1
        }
    }

    /// Whether the voxel with integer indices `c` is inside the domain.
    pub fn contains(&self, c: [i64; 3]) -> bool {
        let nz = self.nz() as i64;
        if c[0] < 0 || c[1] < 0 || c[2] < 0 {
            return false;
        }
        if c[0] >= self.n[0] as i64 || c[1] >= self.n[1] as i64 || c[2] >= nz {
            return false;
        }
        self.mask[c[0] as usize + self.n[0] * (c[1] as usize + self.n[1] * c[2] as usize)]
    }

    fn is_face_connected(&self) -> bool {
        let total = self.mask.iter().filter(|&&m| m).count();
        let Some(start) = self.mask.iter().position(|&m| m) else {
            return false;
        };
        let mut seen = vec![false; self.mask.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(idx) = stack.pop() {
            count += 1;
            let i = idx % self.n[0];
            let j = (idx / self.n[0]) % self.n[1];
            let k = idx / (self.n[0] * self.n[1]);
            let c = [i as i64, j as i64, k as i64];
            for a in 0..self.dim {
                for d in [-1i64, 1] {
                    let mut q = c;
                    q[a] += d;
                    if self.contains(q) {
                        let qi = q[0] as usize + self.n[0] * (q[1] as usize + self.n[1] * q[2] as usize);
                        if !seen[qi] {
                            seen[qi] = true;
                            stack.push(qi);
                        }
                    }
                }
            }
        }
        count == total
    }
}

/// Active entities of one dimension, in DOF order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySet {
    /// Doubled coordinates of each active entity.
    pub positions: Vec<[i64; 3]>,
    /// Per active entity: its carrier does not lie in the boundary.
    pub interior: Vec<bool>,
    /// Active index to interior index.
    pub interior_index: Vec<Option<usize>>,
    /// Interior index to active index.
    pub interior_to_active: Vec<usize>,
    /// Active entities per orientation group (x, y, z).
    pub group_counts: Vec<usize>,
}

impl EntitySet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn interior_len(&self) -> usize {
        self.interior_to_active.len()
    }

    /// Interior entities per orientation group.
    pub fn interior_group_counts(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.group_counts.len());
        let mut start = 0;
        for &c in &self.group_counts {
            out.push(self.interior[start..start + c].iter().filter(|&&b| b).count());
            start += c;
        }
        out
    }
}

/// Staggered-grid degrees of freedom of a domain.
///
/// `sets[k]` holds the k-dimensional entities: nodes, edges, faces (3D only)
/// and cells (`sets[dim]`).
#[derive(Debug, Clone)]
pub struct DofSets {
    pub dim: usize,
    pub n: [usize; 3],
    pub h: f64,
    pub sets: Vec<EntitySet>,
    lookup: Vec<u32>,
    extent: [usize; 3],
}

const NONE: u32 = u32::MAX;

impl DofSets {
    pub fn nodes(&self) -> &EntitySet {
        &self.sets[0]
    }

    pub fn edges(&self) -> &EntitySet {
        &self.sets[1]
    }

    /// Faces of a 3D grid.
    pub fn faces(&self) -> &EntitySet {
        assert_eq!(self.dim, 3, "faces are only enumerated in 3D");
        &self.sets[2]
    }

    pub fn cells(&self) -> &EntitySet {
        &self.sets[self.dim]
    }

    fn flat(&self, p: [i64; 3]) -> Option<usize> {
        for a in 0..3 {
            if p[a] < 0 || p[a] >= self.extent[a] as i64 {
                return None;
            }
        }
        Some(
            p[0] as usize
                + self.extent[0] * (p[1] as usize + self.extent[1] * p[2] as usize),
        )
    }

    /// Active index of the entity at doubled position `p`, if any.
    pub fn index_of(&self, p: [i64; 3]) -> Option<usize> {
        let f = self.flat(p)?;
        match self.lookup[f] {
            NONE => None,
            v => Some(v as usize),
        }
    }
}

/// Number of odd coordinates, i.e. the dimension of the entity.
pub fn degree(p: [i64; 3]) -> usize {
    p.iter().filter(|&&c| c.rem_euclid(2) == 1).count()
}

/// Orientation group of an entity: the extension axis for edges, the normal
/// axis for 3D faces, 0 otherwise.
fn group_of(p: [i64; 3], dim: usize) -> usize {
    let k = degree(p);
    if k == 1 {
        (0..dim).find(|&a| p[a] % 2 == 1).unwrap()
    } else if k == 2 && dim == 3 {
        (0..3).find(|&a| p[a] % 2 == 0).unwrap()
    } else {
        0
    }
}

fn n_groups(k: usize, dim: usize) -> usize {
    if k == 0 || k == dim {
        1
    } else {
        dim
    }
}

/// Voxels adjacent to an entity: every choice of ±1 along its even axes.
fn adjacent_voxels(p: [i64; 3], dim: usize) -> Vec<[i64; 3]> {
    let mut out = vec![[0i64; 3]];
    for a in 0..dim {
        if p[a] % 2 == 1 {
            for v in out.iter_mut() {
                v[a] = (p[a] - 1) / 2;
            }
        } else {
            let mut next = Vec::with_capacity(out.len() * 2);
            for v in &out {
                for d in [-1i64, 1] {
                    let mut w = *v;
                    w[a] = (p[a] + d - 1) / 2;
                    next.push(w);
                }
            }
            out = next;
        }
    }
    out
}

pub fn enumerate_dofs(spec: &DomainSpec) -> Result<DofSets> {
    let grid = VoxelGrid::from_spec(spec)?;
    let dim = grid.dim;
    let mut extent = [1usize; 3];
    for a in 0..dim {
        extent[a] = 2 * grid.n[a] + 1;
    }
    let mut lookup = vec![NONE; extent[0] * extent[1] * extent[2]];
    let mut sets = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let groups = n_groups(k, dim);
        let mut positions = Vec::new();
        let mut interior = Vec::new();
        let mut group_counts = vec![0usize; groups];
        for g in 0..groups {
            for z in 0..extent[2] as i64 {
                for y in 0..extent[1] as i64 {
                    for x in 0..extent[0] as i64 {
                        let p = [x, y, z];
                        if degree(p) != k || group_of(p, dim) != g {
                            continue;
                        }
                        let adj = adjacent_voxels(p, dim);
                        let inside = adj.iter().filter(|&&c| grid.contains(c)).count();
                        if inside == 0 {
                            continue;
                        }
                        let f = p[0] as usize + extent[0] * (p[1] as usize + extent[1] * p[2] as usize);
                        lookup[f] = positions.len() as u32;
                        positions.push(p);
                        interior.push(inside == adj.len());
                        group_counts[g] += 1;
                    }
                }
            }
        }
        let mut interior_index = vec![None; positions.len()];
        let mut interior_to_active = Vec::new();
        for (i, &is_int) in interior.iter().enumerate() {
            if is_int {
                interior_index[i] = Some(interior_to_active.len());
                interior_to_active.push(i);
            }
        }
        sets.push(EntitySet {
            positions,
            interior,
            interior_index,
            interior_to_active,
            group_counts,
        });
    }
    Ok(DofSets {
        dim,
        n: grid.n,
        h: spec.h,
        sets,
        lookup,
        extent,
    })
}
