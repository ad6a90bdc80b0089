//! Area adjacency and the intrinsic CAR machinery built on it.
//!
//! An [`AreaGraph`] is an undirected, unweighted contiguity graph. The ICAR
//! precision matrix of the graph is `D - W`, where `D` holds the neighbor
//! counts and `W` is the 0/1 adjacency matrix. Everything here works with the
//! pairwise-difference form `sum over edges (x_i - x_j)^2 = x'(D - W)x` and never
//! materializes the matrix except for the one-off scaling factor.

pub(crate) mod io;

pub use io::{queen_contiguity_from_geojson, read_edge_list, write_edge_list};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AreaGraph {
    n_areas: usize,
    edges: Vec<(usize, usize)>,
    neighbor_counts: Vec<usize>,
    area_ids: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
}

impl AreaGraph {
    /// Builds a canonical graph: pairs are stored as `(min, max)`, sorted and
    /// deduplicated, so `(0, 1)` and `(1, 0)` collapse to one edge.
    pub fn from_edge_list(
        n_areas: usize,
        pairs: &[(usize, usize)],
        ids: Vec<String>,
    ) -> Result<Self> {
        if n_areas == 0 {
            return Err(Error::invalid("n_areas", "graph must have at least one area"));
        }
        if ids.len() != n_areas {
            return Err(Error::Dimension {
                context: "area ids",
                expected: n_areas,
                actual: ids.len(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }

        let mut edges = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            for index in [i, j] {
                if index >= n_areas {
                    return Err(Error::IndexOutOfRange { index, n_areas });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            edges.push((i.min(j), i.max(j)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); n_areas];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let neighbor_counts = neighbors.iter().map(Vec::len).collect();
        let (components, component_of) = label_components(n_areas, &neighbors);

        Ok(Self {
            n_areas,
            edges,
            neighbor_counts,
            area_ids: ids,
            neighbors,
            components,
            component_of,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbor_counts(&self) -> &[usize] {
        &self.neighbor_counts
    }

    pub fn neighbors(&self, area: usize) -> &[usize] {
        &self.neighbors[area]
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.area_ids.iter().position(|x| x == id)
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, area: usize) -> usize {
        self.component_of[area]
    }

    pub fn is_singleton(&self, area: usize) -> bool {
        self.neighbor_counts[area] == 0
    }

    /// Rank of `D - W`: one null direction per connected component.
    pub fn icar_rank(&self) -> usize {
        self.n_areas - self.components.len()
    }

    /// Induced subgraph on `areas` (in the given order).
    pub fn subgraph(&self, areas: &[usize]) -> Result<AreaGraph> {
        let mut position = vec![usize::MAX; self.n_areas];
        for (new, &old) in areas.iter().enumerate() {
            if old >= self.n_areas {
                return Err(Error::IndexOutOfRange {
                    index: old,
                    n_areas: self.n_areas,
                });
            }
            position[old] = new;
        }
        let pairs: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(i, j)| position[i] != usize::MAX && position[j] != usize::MAX)
            .map(|&(i, j)| (position[i], position[j]))
            .collect();
        let ids = areas.iter().map(|&i| self.area_ids[i].clone()).collect();
        AreaGraph::from_edge_list(areas.len(), &pairs, ids)
    }

    /// Breadth-first order from `start`, visiting neighbors in index order and
    /// continuing with the next unvisited index when a component is exhausted.
    pub fn breadth_first_order(&self, start: usize) -> Vec<usize> {
        let mut visited = vec![false; self.n_areas];
        let mut order = Vec::with_capacity(self.n_areas);
        let mut queue = std::collections::VecDeque::new();
        let roots = std::iter::once(start).chain(0..self.n_areas);
        for root in roots {
            if root >= self.n_areas || visited[root] {
                continue;
            }
            visited[root] = true;
            queue.push_back(root);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &self.neighbors[v] {
                    if !visited[w] {
                        visited[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        order
    }

    /// `sum over edges (x_i - x_j)^2`.
    pub fn pairwise_quadratic_form(&self, x: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(i, j)| {
                let d = x[i] - x[j];
                d * d
            })
            .sum()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_areas {
            return Err(Error::Dimension {
                context: "area vector",
                expected: self.n_areas,
                actual: len,
            });
        }
        Ok(())
    }
}

fn label_components(n: usize, neighbors: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut component_of = vec![usize::MAX; n];
    let mut components = Vec::new();
    for root in 0..n {
        if component_of[root] != usize::MAX {
            continue;
        }
        let label = components.len();
        let mut members = vec![root];
        component_of[root] = label;
        let mut cursor = 0;
        while cursor < members.len() {
            let v = members[cursor];
            cursor += 1;
            for &w in &neighbors[v] {
                if component_of[w] == usize::MAX {
                    component_of[w] = label;
                    members.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    (components, component_of)
}

/// Partition of the areas into connected components.
pub fn connected_components(g: &AreaGraph) -> Vec<Vec<usize>> {
    g.connected_components().to_vec()
}

/// Unnormalized log density of the intrinsic GMRF with precision
/// `precision * (D - W)`:
/// `(rank / 2) log(precision) - (precision / 2) sum over edges (x_i - x_j)^2`.
///
/// The `2 pi` constant is omitted.
pub fn icar_log_density_unnormalized(x: &[f64], g: &AreaGraph, precision: f64) -> Result<f64> {
    g.check_len(x.len())?;
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::invalid("icar_precision", format!("must be positive, got {precision}")));
    }
    let rank = g.icar_rank() as f64;
    Ok(0.5 * rank * precision.ln() - 0.5 * precision * g.pairwise_quadratic_form(x))
}

/// BYM2 scaling factor: the geometric mean, over non-singleton areas, of the
/// marginal variances of an ICAR(1) field under a sum-to-zero constraint in
/// every connected component.
///
/// For a connected block with Laplacian `L` on `m` nodes the constrained
/// covariance is the Moore-Penrose inverse, computed as `(L + J/m)^-1 - J/m`
/// with `J` the all-ones matrix.
pub fn bym2_scaling_factor(g: &AreaGraph) -> Result<f64> {
    if g.edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for members in g.connected_components() {
        let m = members.len();
        if m < 2 {
            continue;
        }
        let mut local = vec![usize::MAX; g.n_areas];
        for (k, &v) in members.iter().enumerate() {
            local[v] = k;
        }
        let shift = 1.0 / m as f64;
        let mut q = DMatrix::<f64>::from_element(m, m, shift);
        for &v in members {
            q[(local[v], local[v])] += g.neighbor_counts[v] as f64;
            for &w in &g.neighbors[v] {
                q[(local[v], local[w])] -= 1.0;
            }
        }
        let chol = q
            .cholesky()
            .ok_or_else(|| Error::invalid("graph", "component Laplacian is not positive semidefinite"))?;
        let inverse = chol.inverse();
        for k in 0..m {
            let variance = inverse[(k, k)] - shift;
            log_sum += variance.ln();
            count += 1;
        }
    }
    Ok((log_sum / count as f64).exp())
}

/// Subtracts the component mean within every connected component; singleton
/// components are set to zero.
pub fn center_by_component(x: &[f64], g: &AreaGraph) -> Result<Vec<f64>> {
    g.check_len(x.len())?;
    let mut out = x.to_vec();
    center_in_place(&mut out, g);
    Ok(out)
}

pub(crate) fn center_in_place(x: &mut [f64], g: &AreaGraph) {
    for members in g.connected_components() {
        if members.len() == 1 {
            x[members[0]] = 0.0;
            continue;
        }
        let mean = members.iter().map(|&v| x[v]).sum::<f64>() / members.len() as f64;
        for &v in members {
            x[v] -= mean;
        }
    }
}
