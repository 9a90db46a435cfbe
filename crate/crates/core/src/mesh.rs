//! Triangulated 2D reference domains with tagged boundaries.
//!
//! A [`Mesh2D`] is a simplicial triangulation of a bounded polygonal domain
//! whose boundary edges carry a `Dirichlet` or `Neumann` tag. The Dirichlet
//! part must be non-empty. Meshes are immutable after construction and safe
//! to share read-only across threads (the solvers wrap them in `Arc`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

/// Boundary condition tag attached to a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Sides of a rectangle, used by the structured generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "bottom" => Some(Side::Bottom),
            "top" => Some(Side::Top),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// A boundary edge: node pair plus boundary tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Simplicial reference configuration with Dirichlet/Neumann boundary split.
#[derive(Clone, Debug)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    // Derived, built once at construction.
    areas: Vec<f64>,
    /// Gradients of the three P1 shape functions, constant per triangle.
    shape_grads: Vec<[Vector2<f64>; 3]>,
    dirichlet_mask: Vec<bool>,
    /// Indices into `boundary_edges` of the Neumann edges, ascending.
    neumann_edges: Vec<usize>,
    /// Owning triangle of each boundary edge.
    edge_owner: Vec<usize>,
}

impl Mesh2D {
    /// Builds a mesh from raw connectivity, checking all structural invariants.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(MeshError::Invalid("mesh has no nodes or no triangles".into()));
        }
        for (k, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= nodes.len() {
                    return Err(MeshError::Invalid(format!(
                        "triangle {k} references node {i}, but there are only {} nodes",
                        nodes.len()
                    )));
                }
            }
        }
        for (e, be) in boundary_edges.iter().enumerate() {
            for &i in &be.nodes {
                if i >= nodes.len() {
                    return Err(MeshError::Invalid(format!(
                        "boundary edge {e} references node {i}, but there are only {} nodes",
                        nodes.len()
                    )));
                }
            }
        }

        let mut areas = Vec::with_capacity(triangles.len());
        let mut shape_grads = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            if det <= 0.0 {
                return Err(MeshError::Invalid(format!(
                    "triangle {k} has non-positive signed area {}",
                    det / 2.0
                )));
            }
            areas.push(det / 2.0);
            // grad(phi_a) for the P1 hat function of local node a:
            // rotate the opposite edge by 90 degrees and scale by 1/det.
            let g = |b: [f64; 2], c: [f64; 2]| Vector2::new(b[1] - c[1], c[0] - b[0]) / det;
            shape_grads.push([g(p[1], p[2]), g(p[2], p[0]), g(p[0], p[1])]);
        }

        // Edge incidence: interior edges twice, boundary edges once.
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        let mut incidence: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (k, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let entry = incidence.entry(key(a, b)).or_insert((0, k));
                entry.0 += 1;
                entry.1 = k.min(entry.1);
            }
        }
        for (&(a, b), &(count, _)) in &incidence {
            if count > 2 {
                return Err(MeshError::Invalid(format!(
                    "edge ({a},{b}) belongs to {count} triangles"
                )));
            }
        }

        let mut edge_owner = Vec::with_capacity(boundary_edges.len());
        let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
        for be in &boundary_edges {
            let k = key(be.nodes[0], be.nodes[1]);
            if seen.insert(k, ()).is_some() {
                return Err(MeshError::Invalid(format!(
                    "boundary edge ({},{}) listed twice",
                    be.nodes[0], be.nodes[1]
                )));
            }
            match incidence.get(&k) {
                Some(&(1, owner)) => edge_owner.push(owner),
                Some(&(2, _)) => {
                    return Err(MeshError::Invalid(format!(
                        "edge ({},{}) tagged as boundary but is interior",
                        be.nodes[0], be.nodes[1]
                    )))
                }
                _ => {
                    return Err(MeshError::Invalid(format!(
                        "boundary edge ({},{}) is not an edge of any triangle",
                        be.nodes[0], be.nodes[1]
                    )))
                }
            }
        }
        let n_topological_boundary = incidence.values().filter(|&&(c, _)| c == 1).count();
        if n_topological_boundary != boundary_edges.len() {
            return Err(MeshError::Invalid(format!(
                "boundary edge list ({}) does not cover the topological boundary ({})",
                boundary_edges.len(),
                n_topological_boundary
            )));
        }

        if !boundary_edges.iter().any(|be| be.tag == BoundaryTag::Dirichlet) {
            return Err(MeshError::Invalid(
                "no Dirichlet boundary edge: the Dirichlet part must have positive measure".into(),
            ));
        }

        let mut dirichlet_mask = vec![false; nodes.len()];
        let mut neumann_edges = Vec::new();
        for (e, be) in boundary_edges.iter().enumerate() {
            match be.tag {
                BoundaryTag::Dirichlet => {
                    dirichlet_mask[be.nodes[0]] = true;
                    dirichlet_mask[be.nodes[1]] = true;
                }
                BoundaryTag::Neumann => neumann_edges.push(e),
            }
        }

        Ok(Mesh2D {
            nodes,
            triangles,
            boundary_edges,
            areas,
            shape_grads,
            dirichlet_mask,
            neumann_edges,
            edge_owner,
        })
    }

    /// Structured crossed-triangle mesh of `[0,lx] x [0,ly]` with `nx` by `ny`
    /// cells, four triangles per cell around the cell center. The requested
    /// sides are tagged Dirichlet, the rest Neumann.
    pub fn rectangle(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        dirichlet_sides: &[Side],
    ) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 {
            return Err(MeshError::Invalid("nx and ny must be at least 1".into()));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(MeshError::Invalid("lx and ly must be positive".into()));
        }
        if dirichlet_sides.is_empty() {
            return Err(MeshError::Invalid(
                "dirichlet side set is empty: the Dirichlet part must have positive measure".into(),
            ));
        }

        let dx = lx / nx as f64;
        let dy = ly / ny as f64;
        let grid = |i: usize, j: usize| j * (nx + 1) + i;
        let n_grid = (nx + 1) * (ny + 1);
        let center = |i: usize, j: usize| n_grid + j * nx + i;

        let mut nodes = Vec::with_capacity(n_grid + nx * ny);
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 * dx, j as f64 * dy]);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                nodes.push([(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy]);
            }
        }

        let mut triangles = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b) = (grid(i, j), grid(i + 1, j));
                let (c, d) = (grid(i + 1, j + 1), grid(i, j + 1));
                let m = center(i, j);
                triangles.push([a, b, m]);
                triangles.push([b, c, m]);
                triangles.push([c, d, m]);
                triangles.push([d, a, m]);
            }
        }

        let tag_of = |side: Side| {
            if dirichlet_sides.contains(&side) {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        };
        let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(i, 0), grid(i + 1, 0)],
                tag: tag_of(Side::Bottom),
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(i + 1, ny), grid(i, ny)],
                tag: tag_of(Side::Top),
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(nx, j), grid(nx, j + 1)],
                tag: tag_of(Side::Right),
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(0, j + 1), grid(0, j)],
                tag: tag_of(Side::Left),
            });
        }

        Mesh2D::new(nodes, triangles, boundary_edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Gradients of the three P1 shape functions on triangle `k`.
    pub fn shape_gradients(&self, k: usize) -> &[Vector2<f64>; 3] {
        &self.shape_grads[k]
    }

    /// True at nodes lying on a Dirichlet-tagged boundary edge. A node on the
    /// Dirichlet/Neumann interface counts as Dirichlet.
    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_mask
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Indices into `boundary_edges()` of the Neumann edges.
    pub fn neumann_edges(&self) -> &[usize] {
        &self.neumann_edges
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Outward unit normal of boundary edge `e`, oriented away from the
    /// owning triangle.
    pub fn edge_outward_normal(&self, e: usize) -> Vector2<f64> {
        let [a, b] = self.boundary_edges[e].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        let t = Vector2::new(pb[0] - pa[0], pb[1] - pa[1]);
        let mut n = Vector2::new(t.y, -t.x).normalize();
        let tri = self.triangles[self.edge_owner[e]];
        let cx = (self.nodes[tri[0]][0] + self.nodes[tri[1]][0] + self.nodes[tri[2]][0]) / 3.0;
        let cy = (self.nodes[tri[0]][1] + self.nodes[tri[1]][1] + self.nodes[tri[2]][1]) / 3.0;
        let mid = Vector2::new((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0);
        if n.dot(&(Vector2::new(cx, cy) - mid)) > 0.0 {
            n = -n;
        }
        n
    }

    /// Serializes to the ASCII `mesh2d v1` format.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        out.push_str("mesh2d v1\n");
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "boundary {}", self.boundary_edges.len());
        for be in &self.boundary_edges {
            let tag = match be.tag {
                BoundaryTag::Dirichlet => "D",
                BoundaryTag::Neumann => "N",
            };
            let _ = writeln!(out, "{} {} {}", be.nodes[0], be.nodes[1], tag);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    /// Parses the ASCII `mesh2d v1` format. Errors name the offending
    /// (1-based) line.
    pub fn from_ascii(text: &str) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next_content = || loop {
            match lines.next() {
                Some((_, "")) => continue,
                Some((n, l)) => return Some((n, l)),
                None => return None,
            }
        };
        let parse_err = |line: usize, msg: String| MeshError::Parse { line, msg };

        let (n0, header) = next_content()
            .ok_or_else(|| parse_err(1, "empty file, expected `mesh2d v1`".into()))?;
        if header != "mesh2d v1" {
            return Err(parse_err(n0, format!("expected `mesh2d v1`, got `{header}`")));
        }

        let read_count = |tok: &str,
                          kw: &str,
                          item: Option<(usize, &str)>|
         -> Result<usize, MeshError> {
            let (n, l) = item.ok_or_else(|| parse_err(0, format!("missing `{kw}` section")))?;
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k), Some(c), None) if k == tok => c
                    .parse::<usize>()
                    .map_err(|_| parse_err(n, format!("bad count `{c}` in `{kw}` header"))),
                _ => Err(parse_err(n, format!("expected `{kw} <count>`, got `{l}`"))),
            }
        };

        let n_nodes = read_count("nodes", "nodes", next_content())?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (n, l) = next_content()
                .ok_or_else(|| parse_err(0, "unexpected end of file in node list".into()))?;
            let mut parts = l.split_whitespace();
            let (x, y, extra) = (parts.next(), parts.next(), parts.next());
            match (x, y, extra) {
                (Some(x), Some(y), None) => {
                    let px = x
                        .parse::<f64>()
                        .map_err(|_| parse_err(n, format!("bad coordinate `{x}`")))?;
                    let py = y
                        .parse::<f64>()
                        .map_err(|_| parse_err(n, format!("bad coordinate `{y}`")))?;
                    nodes.push([px, py]);
                }
                _ => return Err(parse_err(n, format!("expected `x y`, got `{l}`"))),
            }
        }

        let n_tris = read_count("triangles", "triangles", next_content())?;
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let (n, l) = next_content()
                .ok_or_else(|| parse_err(0, "unexpected end of file in triangle list".into()))?;
            let idx: Result<Vec<usize>, _> = l.split_whitespace().map(|t| t.parse()).collect();
            let idx = idx.map_err(|_| parse_err(n, format!("bad triangle indices `{l}`")))?;
            if idx.len() != 3 {
                return Err(parse_err(n, format!("expected `i j k`, got `{l}`")));
            }
            for &i in &idx {
                if i >= n_nodes {
                    return Err(parse_err(
                        n,
                        format!("triangle node index {i} out of range (nodes: {n_nodes})"),
                    ));
                }
            }
            let tri = [idx[0], idx[1], idx[2]];
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            if det <= 0.0 {
                return Err(parse_err(
                    n,
                    format!("triangle has non-positive signed area {}", det / 2.0),
                ));
            }
            triangles.push(tri);
        }

        let n_edges = read_count("boundary", "boundary", next_content())?;
        let mut boundary_edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (n, l) = next_content()
                .ok_or_else(|| parse_err(0, "unexpected end of file in boundary list".into()))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(n, format!("expected `i j TAG`, got `{l}`")));
            }
            let a = parts[0]
                .parse::<usize>()
                .map_err(|_| parse_err(n, format!("bad edge index `{}`", parts[0])))?;
            let b = parts[1]
                .parse::<usize>()
                .map_err(|_| parse_err(n, format!("bad edge index `{}`", parts[1])))?;
            if a >= n_nodes || b >= n_nodes {
                return Err(parse_err(n, format!("edge node index out of range in `{l}`")));
            }
            let tag = match parts[2] {
                "D" => BoundaryTag::Dirichlet,
                "N" => BoundaryTag::Neumann,
                other => {
                    return Err(parse_err(
                        n,
                        format!("bad boundary tag `{other}` (expected D or N)"),
                    ))
                }
            };
            boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
        }

        if let Some((n, l)) = next_content() {
            return Err(parse_err(n, format!("trailing content `{l}`")));
        }

        Mesh2D::new(nodes, triangles, boundary_edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Mesh2D::from_ascii(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell_counts() {
        // One crossed macro-element: 4 grid corners + 1 center.
        let m = Mesh2D::rectangle(1, 1, 1.0, 1.0, &[Side::Left]).unwrap();
        assert_eq!(m.n_nodes(), 5);
        assert_eq!(m.n_triangles(), 4);
        assert_eq!(m.boundary_edges().len(), 4);
        let n_dir = m
            .boundary_edges()
            .iter()
            .filter(|be| be.tag == BoundaryTag::Dirichlet)
            .count();
        assert_eq!(n_dir, 1);
    }

    #[test]
    fn rectangle_total_area() {
        let m = Mesh2D::rectangle(2, 1, 2.0, 1.0, &[Side::Left, Side::Right]).unwrap();
        assert!((m.total_area() - 2.0).abs() < 1e-12 * 2.0);
        let m = Mesh2D::rectangle(7, 3, 1.3, 0.7, &[Side::Bottom]).unwrap();
        assert!((m.total_area() - 1.3 * 0.7).abs() < 1e-12 * (1.3 * 0.7));
    }

    #[test]
    fn empty_dirichlet_rejected() {
        let err = Mesh2D::rectangle(1, 1, 1.0, 1.0, &[]).unwrap_err();
        assert!(matches!(err, MeshError::Invalid(_)));
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let m = Mesh2D::rectangle(3, 2, 1.5, 1.0, &[Side::Left]).unwrap();
        for e in 0..m.boundary_edges().len() {
            let n = m.edge_outward_normal(e);
            assert!((n.norm() - 1.0).abs() < 1e-12);
            // For a rectangle the outward normal at an edge midpoint points
            // away from the domain center.
            let [a, b] = m.boundary_edges()[e].nodes;
            let mid = Vector2::new(
                (m.node(a)[0] + m.node(b)[0]) / 2.0,
                (m.node(a)[1] + m.node(b)[1]) / 2.0,
            );
            let center = Vector2::new(0.75, 0.5);
            assert!(n.dot(&(mid - center)) > 0.0);
        }
    }

    #[test]
    fn normals_outward_regardless_of_edge_orientation() {
        // Same triangle, boundary edges listed in both traversal directions.
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2]];
        let edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Dirichlet },
            BoundaryEdge { nodes: [2, 1], tag: BoundaryTag::Neumann }, // reversed
            BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Neumann },
        ];
        let m = Mesh2D::new(nodes, triangles, edges).unwrap();
        let centroid = Vector2::new(1.0 / 3.0, 1.0 / 3.0);
        for e in 0..3 {
            let n = m.edge_outward_normal(e);
            let [a, b] = m.boundary_edges()[e].nodes;
            let mid = Vector2::new(
                (m.node(a)[0] + m.node(b)[0]) / 2.0,
                (m.node(a)[1] + m.node(b)[1]) / 2.0,
            );
            assert!(n.dot(&(mid - centroid)) > 0.0, "edge {e} normal points inward");
        }
    }

    #[test]
    fn ascii_round_trip() {
        let m = Mesh2D::rectangle(2, 2, 1.0, 1.0, &[Side::Left]).unwrap();
        let text = m.to_ascii();
        let m2 = Mesh2D::from_ascii(&text).unwrap();
        assert_eq!(m.nodes, m2.nodes);
        assert_eq!(m.triangles, m2.triangles);
        assert_eq!(m.boundary_edges, m2.boundary_edges);
    }

    #[test]
    fn parse_reports_line_of_bad_index() {
        let text = "mesh2d v1\nnodes 3\n0.0 0.0\n1.0 0.0\n0.0 1.0\ntriangles 1\n0 1 7\nboundary 3\n0 1 D\n1 2 N\n2 0 N\n";
        let err = Mesh2D::from_ascii(text).unwrap_err();
        match err {
            MeshError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_negative_area_triangle() {
        // Clockwise orientation.
        let text = "mesh2d v1\nnodes 3\n0.0 0.0\n1.0 0.0\n0.0 1.0\ntriangles 1\n0 2 1\nboundary 3\n0 1 D\n1 2 N\n2 0 N\n";
        let err = Mesh2D::from_ascii(text).unwrap_err();
        match err {
            MeshError::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn interior_edge_tagged_as_boundary_rejected() {
        // Two triangles sharing edge (1,2); tag the shared edge.
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let triangles = vec![[0, 1, 2], [1, 3, 2]];
        let boundary_edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Dirichlet },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Neumann },
        ];
        let err = Mesh2D::new(nodes, triangles, boundary_edges).unwrap_err();
        assert!(matches!(err, MeshError::Invalid(_)));
    }

    #[test]
    fn missing_boundary_edge_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2]];
        let boundary_edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Dirichlet },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Neumann },
        ];
        let err = Mesh2D::new(nodes, triangles, boundary_edges).unwrap_err();
        assert!(matches!(err, MeshError::Invalid(_)));
    }

    #[test]
    fn dirichlet_mask_covers_tagged_sides() {
        let m = Mesh2D::rectangle(2, 2, 1.0, 1.0, &[Side::Left]).unwrap();
        for (i, p) in m.nodes().iter().enumerate() {
            let on_left = p[0] == 0.0;
            assert_eq!(m.dirichlet_mask()[i], on_left, "node {i} at {p:?}");
        }
    }
}
