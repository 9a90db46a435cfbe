//! Direct sparse linear algebra for the P1 systems: reverse Cuthill-McKee
//! ordering of the free unknowns plus a banded LU factorization with partial
//! pivoting. Desk-scale meshes stay comfortably inside the band, and the
//! single-threaded factorization keeps runs bit-reproducible.

use std::sync::Arc;

use nalgebra::Vector2;
use thiserror::Error;

use crate::fem::NodalField;
use crate::mesh::Mesh2D;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("singular system: zero pivot at column {0}")]
    Singular(usize),
}

/// Reverse Cuthill-McKee ordering of an undirected graph given by adjacency
/// lists. Returns `position[node]`, deterministic for a fixed graph.
pub fn rcm_positions(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);

    let bfs_last_level = |start: usize, visited_loc: &mut Vec<bool>| -> Vec<usize> {
        let mut frontier = vec![start];
        visited_loc[start] = true;
        let mut last = frontier.clone();
        while !frontier.is_empty() {
            last = frontier.clone();
            let mut next = Vec::new();
            for &v in &frontier {
                for &u in &adj[v] {
                    if !visited_loc[u] {
                        visited_loc[u] = true;
                        next.push(u);
                    }
                }
            }
            frontier = next;
        }
        last
    };

    for comp_seed in 0..n {
        if visited[comp_seed] {
            continue;
        }
        // Pseudo-peripheral start: BFS from the component seed, restart from
        // a min-degree node of the last level.
        let mut scratch = visited.clone();
        let last = bfs_last_level(comp_seed, &mut scratch);
        let start = *last
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("non-empty level");

        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }

    order.reverse();
    let mut position = vec![0; n];
    for (pos, &node) in order.iter().enumerate() {
        position[node] = pos;
    }
    position
}

/// Banded matrix with lower bandwidth `kl` and upper bandwidth `ku`, stored
/// row-major with `kl` extra superdiagonals of working space for pivoting
/// fill-in (LAPACK-style `gbtrf` layout).
pub struct BandMatrix {
    n: usize,
    kl: usize,
    /// Working upper bandwidth `ku + kl`.
    kuw: usize,
    width: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let kuw = ku + kl;
        let width = kl + kuw + 1;
        BandMatrix {
            n,
            kl,
            kuw,
            width,
            ab: vec![0.0; n * width],
            ipiv: vec![0; n],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kuw, "entry ({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    pub fn reset(&mut self) {
        self.ab.fill(0.0);
        self.factored = false;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.factored);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(&mut self) -> Result<(), LinSolveError> {
        let (n, kl, kuw) = (self.n, self.kl, self.kuw);
        for j in 0..n {
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = self.ab[self.idx(j, j)].abs();
            for i in (j + 1)..=imax {
                let v = self.ab[self.idx(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            self.ipiv[j] = p;
            if pmax == 0.0 {
                return Err(LinSolveError::Singular(j));
            }
            if p != j {
                let cmax = (j + kuw).min(n - 1);
                for c in j..=cmax {
                    let (a, b) = (self.idx(j, c), self.idx(p, c));
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[self.idx(j, j)];
            let cmax = (j + kuw).min(n - 1);
            for i in (j + 1)..=imax {
                let l = self.ab[self.idx(i, j)] / piv;
                let li = self.idx(i, j);
                self.ab[li] = l;
                if l != 0.0 {
                    for c in (j + 1)..=cmax {
                        let jc = self.ab[self.idx(j, c)];
                        let ic = self.idx(i, c);
                        self.ab[ic] -= l * jc;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place, after [`BandMatrix::factor`]. Row
    /// interchanges are applied during forward substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "solve before factor");
        assert_eq!(b.len(), self.n);
        let (n, kl, kuw) = (self.n, self.kl, self.kuw);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let imax = (j + kl).min(n - 1);
                for i in (j + 1)..=imax {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            let cmax = (j + kuw).min(n - 1);
            for c in (j + 1)..=cmax {
                s -= self.ab[self.idx(j, c)] * b[c];
            }
            b[j] = s / self.ab[self.idx(j, j)];
        }
    }

    pub fn is_factored(&self) -> bool {
        self.factored
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Free-dof bookkeeping for one mesh: RCM-orders the unconstrained nodes and
/// maps (node, component) pairs to contiguous system rows.
#[derive(Clone)]
pub struct DofMap {
    mesh: Arc<Mesh2D>,
    slot_of_node: Vec<Option<usize>>,
    n_free: usize,
    half_band: usize,
}

impl DofMap {
    pub fn new(mesh: &Arc<Mesh2D>) -> Self {
        let n = mesh.n_nodes();
        let mask = mesh.dirichlet_mask();

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in mesh.triangles() {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b && !adj[tri[a]].contains(&tri[b]) {
                        adj[tri[a]].push(tri[b]);
                    }
                }
            }
        }
        let positions = rcm_positions(&adj);

        let mut free_nodes: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        free_nodes.sort_by_key(|&i| positions[i]);
        let mut slot_of_node = vec![None; n];
        for (slot, &node) in free_nodes.iter().enumerate() {
            slot_of_node[node] = Some(slot);
        }
        let n_free = 2 * free_nodes.len();

        // Structural half-bandwidth over coupled free dofs.
        let mut half_band = 1usize;
        for tri in mesh.triangles() {
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(sa), Some(sb)) = (slot_of_node[tri[a]], slot_of_node[tri[b]]) {
                        half_band = half_band.max(2 * sa.abs_diff(sb) + 1);
                    }
                }
            }
        }

        DofMap { mesh: Arc::clone(mesh), slot_of_node, n_free, half_band }
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Fresh band workspace sized for this dof map.
    pub fn band_matrix(&self) -> BandMatrix {
        BandMatrix::new(self.n_free.max(1), self.half_band, self.half_band)
    }

    /// System row of `(node, component)`, or `None` for constrained nodes.
    #[inline]
    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.slot_of_node[node].map(|s| 2 * s + comp)
    }

    /// Nodal value of a free-dof vector (zero at constrained nodes).
    #[inline]
    pub fn value_of(&self, x: &[f64], node: usize) -> Vector2<f64> {
        match self.slot_of_node[node] {
            Some(s) => Vector2::new(x[2 * s], x[2 * s + 1]),
            None => Vector2::zeros(),
        }
    }

    /// Free-dof vector from a nodal field.
    pub fn gather(&self, field: &NodalField) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        for (node, slot) in self.slot_of_node.iter().enumerate() {
            if let Some(s) = slot {
                let v = field.value(node);
                x[2 * s] = v.x;
                x[2 * s + 1] = v.y;
            }
        }
        x
    }

    /// Admissible nodal field from a free-dof vector (Dirichlet nodes zero).
    pub fn scatter(&self, x: &[f64]) -> NodalField {
        let mut field = NodalField::zero_admissible(&self.mesh);
        for (node, slot) in self.slot_of_node.iter().enumerate() {
            if let Some(s) = slot {
                field.set(node, Vector2::new(x[2 * s], x[2 * s + 1]));
            }
        }
        field
    }
}
