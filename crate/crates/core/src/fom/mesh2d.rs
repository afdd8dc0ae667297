use std::fmt::Write as _;

use super::FomError;

/// Coefficient region of a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// The disk `r < r0`.
    Inner,
    /// Its complement in the square.
    Outer,
}

impl Region {
    fn as_str(self) -> &'static str {
        match self {
            Region::Inner => "inner",
            Region::Outer => "outer",
        }
    }
}

/// Triangulation of `(-1, 1)²` with per-cell region tags.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    nodes: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    tags: Vec<Option<Region>>,
    boundary: Vec<bool>,
}

const SQUARE_HALF: f64 = 0.25;
const INTERFACE_RADIUS: f64 = 0.5;
const EDGE_TOL: f64 = 1e-12;

impl TriMesh {
    /// Builds a mesh from raw arrays, checking indices and orientation.
    /// Clockwise triangles are reoriented.
    pub fn new(nodes: Vec<[f64; 2]>, mut cells: Vec<[usize; 3]>, tags: Vec<Option<Region>>) -> Result<Self, FomError> {
        if nodes.len() < 3 || cells.is_empty() {
            return Err(FomError::Mesh("mesh needs at least one triangle".into()));
        }
        if tags.len() != cells.len() {
            return Err(FomError::Mesh(format!("{} cells but {} region tags", cells.len(), tags.len())));
        }
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&i| i >= nodes.len()) {
                return Err(FomError::Mesh(format!("cell {c} references a missing node")));
            }
            let area = signed_area(&nodes, cell);
            if area.abs() <= f64::EPSILON {
                return Err(FomError::Mesh(format!("cell {c} is degenerate")));
            }
            if area < 0.0 {
                cell.swap(1, 2);
            }
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FomError::Mesh("non-finite node coordinate".into()));
        }
        let boundary = nodes.iter().map(|p| p.iter().any(|c| (c.abs() - 1.0).abs() <= EDGE_TOL)).collect();
        Ok(Self { nodes, cells, tags, boundary })
    }

    /// Structured mesh of the unit square `(-1,1)²` whose edges resolve the
    /// circle `r = 0.5`: an `m x m` grid on `[-0.25, 0.25]²`, a ring blending
    /// the grid boundary onto the circle and a ring blending the circle onto
    /// the outer square.
    pub fn generate(m: usize) -> Result<Self, FomError> {
        if m < 2 {
            return Err(FomError::Mesh(format!("resolution must be at least 2, got {m}")));
        }
        let k1 = (0.4 * m as f64).ceil() as usize;
        let k2 = (0.5 * m as f64).ceil() as usize;
        let per = 4 * m;
        let mut nodes = Vec::with_capacity((m + 1) * (m + 1) + per * (k1 + k2));
        let h = 2.0 * SQUARE_HALF / m as f64;
        for k in 0..=m {
            for i in 0..=m {
                nodes.push([-SQUARE_HALF + i as f64 * h, -SQUARE_HALF + k as f64 * h]);
            }
        }
        let grid = |i: usize, k: usize| k * (m + 1) + i;
        let mut cells = Vec::new();
        let mut tags = Vec::new();
        for k in 0..m {
            for i in 0..m {
                push_quad(
                    &nodes,
                    [grid(i, k), grid(i + 1, k), grid(i + 1, k + 1), grid(i, k + 1)],
                    Region::Inner,
                    &mut cells,
                    &mut tags,
                );
            }
        }

        let square: Vec<[f64; 2]> = (0..per).map(|j| perimeter_point(j, m)).collect();
        let circle: Vec<[f64; 2]> = square
            .iter()
            .map(|p| {
                let r = p[0].hypot(p[1]);
                [INTERFACE_RADIUS * p[0] / r, INTERFACE_RADIUS * p[1] / r]
            })
            .collect();
        let mut ring: Vec<usize> = (0..per)
            .map(|j| {
                let (i, k) = perimeter_grid_index(j, m);
                grid(i, k)
            })
            .collect();
        let layers = (1..=k1)
            .map(|l| (l as f64 / k1 as f64, Region::Inner, true))
            .chain((1..=k2).map(|l| (l as f64 / k2 as f64, Region::Outer, false)));
        for (s, region, inner_ring) in layers {
            let start = nodes.len();
            for j in 0..per {
                let (from, to) = if inner_ring {
                    ([SQUARE_HALF * square[j][0], SQUARE_HALF * square[j][1]], circle[j])
                } else {
                    (circle[j], square[j])
                };
                let mut p = [from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])];
                if !inner_ring && s == 1.0 {
                    p = square[j];
                }
                nodes.push(p);
            }
            let next: Vec<usize> = (start..start + per).collect();
            for j in 0..per {
                let jn = (j + 1) % per;
                push_quad(&nodes, [ring[j], ring[jn], next[jn], next[j]], region, &mut cells, &mut tags);
            }
            ring = next;
        }
        Self::new(nodes, cells, tags.into_iter().map(Some).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn tags(&self) -> &[Option<Region>] {
        &self.tags
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// Indices of nodes not on `∂Ω`, ascending.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        signed_area(&self.nodes, &self.cells[c])
    }

    /// Serializes to the text format: node count, `x y` lines, cell count,
    /// `i j k tag` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n_nodes());
        for p in &self.nodes {
            let _ = writeln!(out, "{:e} {:e}", p[0], p[1]);
        }
        let _ = writeln!(out, "{}", self.n_cells());
        for (c, t) in self.cells.iter().zip(&self.tags) {
            match t {
                Some(r) => {
                    let _ = writeln!(out, "{} {} {} {}", c[0], c[1], c[2], r.as_str());
                }
                None => {
                    let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FomError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next =
            |what: &str| lines.next().ok_or_else(|| FomError::Mesh(format!("unexpected end of file reading {what}")));
        let parse_count =
            |s: &str, what: &str| s.parse::<usize>().map_err(|_| FomError::Mesh(format!("bad {what} count `{s}`")));
        let n_nodes = parse_count(next("node count")?, "node")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let line = next("node")?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| FomError::Mesh(format!("bad node line {i}: `{line}`")))?;
            if v.len() != 2 {
                return Err(FomError::Mesh(format!("node line {i} needs two coordinates")));
            }
            nodes.push([v[0], v[1]]);
        }
        let n_cells = parse_count(next("cell count")?, "cell")?;
        let mut cells = Vec::with_capacity(n_cells);
        let mut tags = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let line = next("cell")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 && parts.len() != 4 {
                return Err(FomError::Mesh(format!("cell line {c} has {} fields", parts.len())));
            }
            let mut idx = [0usize; 3];
            for (slot, t) in idx.iter_mut().zip(&parts[..3]) {
                *slot = t.parse().map_err(|_| FomError::Mesh(format!("bad index `{t}` in cell {c}")))?;
            }
            let tag = match parts.get(3) {
                None => None,
                Some(&"inner") => Some(Region::Inner),
                Some(&"outer") => Some(Region::Outer),
                Some(other) => return Err(FomError::Mesh(format!("unknown region tag `{other}` in cell {c}"))),
            };
            cells.push(idx);
            tags.push(tag);
        }
        Self::new(nodes, cells, tags)
    }
}

fn signed_area(nodes: &[[f64; 2]], c: &[usize; 3]) -> f64 {
    let (a, b, d) = (nodes[c[0]], nodes[c[1]], nodes[c[2]]);
    0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]))
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Splits a quad (given counterclockwise) along its shorter diagonal.
fn push_quad(nodes: &[[f64; 2]], q: [usize; 4], region: Region, cells: &mut Vec<[usize; 3]>, tags: &mut Vec<Region>) {
    let d02 = dist2(nodes[q[0]], nodes[q[2]]);
    let d13 = dist2(nodes[q[1]], nodes[q[3]]);
    let tris =
        if d02 <= d13 { [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] } else { [[q[0], q[1], q[3]], [q[1], q[2], q[3]]] };
    for mut t in tris {
        if signed_area(nodes, &t) < 0.0 {
            t.swap(1, 2);
        }
        cells.push(t);
        tags.push(region);
    }
}

/// Point `j` of `4m` on the boundary of `[-1,1]²`, counterclockwise from `(-1,-1)`.
fn perimeter_point(j: usize, m: usize) -> [f64; 2] {
    let s = |k: usize| 2.0 * k as f64 / m as f64;
    match j / m {
        0 => [-1.0 + s(j), -1.0],
        1 => [1.0, -1.0 + s(j - m)],
        2 => [1.0 - s(j - 2 * m), 1.0],
        _ => [-1.0, 1.0 - s(j - 3 * m)],
    }
}

/// Inner-grid node `(i, k)` matching perimeter point `j`.
fn perimeter_grid_index(j: usize, m: usize) -> (usize, usize) {
    match j / m {
        0 => (j, 0),
        1 => (m, j - m),
        2 => (m - (j - 2 * m), m),
        _ => (0, m - (j - 3 * m)),
    }
}
