//! Geometric and graph primitives: agent positions, oriented edges, bearings,
//! orthogonal projectors and the stacked bearing function.
//!
//! Agents are indexed from zero. Leaders always occupy indices `0..n_leaders`
//! and followers the rest, so stacked vectors split cleanly into a leader part
//! followed by a follower part.

use nalgebra::{DMatrix, DVector};

use crate::error::{FormationError, Result};

/// Norm below which a vector is treated as zero (collocated agents, zero bearing).
pub const COLLOCATION_EPS: f64 = 1e-12;

/// Allowed deviation of a desired bearing's norm from one.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// One entry of an agent's neighbor list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub agent: usize,
    /// Index of the connecting edge in the graph's edge order.
    pub edge: usize,
}

/// Undirected sensing graph with a leader/follower split and a fixed edge orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    d: usize,
    n_leaders: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<Neighbor>>,
}

impl FormationGraph {
    /// Builds a graph whose edges are oriented from the smaller to the larger index.
    pub fn new(
        n: usize,
        d: usize,
        n_leaders: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let edges = edges
            .into_iter()
            .map(|(i, j)| if i <= j { (i, j) } else { (j, i) })
            .collect();
        Self::with_orientation(n, d, n_leaders, edges)
    }

    /// Builds a graph keeping the caller's orientation of every edge.
    pub fn with_orientation(
        n: usize,
        d: usize,
        n_leaders: usize,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if d < 2 {
            return Err(FormationError::InvalidGraph(format!(
                "dimension must be at least 2, got {d}"
            )));
        }
        if n == 0 {
            return Err(FormationError::InvalidGraph("no agents".into()));
        }
        if n_leaders == 0 || n_leaders > n {
            return Err(FormationError::InvalidGraph(format!(
                "leader count {n_leaders} outside 1..={n}"
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(FormationError::InvalidGraph(format!(
                    "edge {k} = ({i}, {j}) references an agent outside 0..{n}"
                )));
            }
            if i == j {
                return Err(FormationError::InvalidGraph(format!(
                    "edge {k} is a self-loop on agent {i}"
                )));
            }
            if neighbors[i].iter().any(|nb: &Neighbor| nb.agent == j) {
                return Err(FormationError::InvalidGraph(format!(
                    "edge {k} = ({i}, {j}) duplicates an existing edge"
                )));
            }
            neighbors[i].push(Neighbor { agent: j, edge: k });
            neighbors[j].push(Neighbor { agent: i, edge: k });
        }
        Ok(Self {
            n,
            d,
            n_leaders,
            edges,
            neighbors,
        })
    }

    /// Complete graph on `n` agents.
    pub fn complete(n: usize, d: usize, n_leaders: usize) -> Result<Self> {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, d, n_leaders, edges)
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    pub fn n_followers(&self) -> usize {
        self.n - self.n_leaders
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, agent: usize) -> &[Neighbor] {
        &self.neighbors[agent]
    }

    pub fn is_leader(&self, agent: usize) -> bool {
        agent < self.n_leaders
    }

    /// Index of the edge joining `i` and `j`, in either orientation.
    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors
            .get(i)?
            .iter()
            .find(|nb| nb.agent == j)
            .map(|nb| nb.edge)
    }

    /// Same vertices and edges with a different leader count.
    pub fn with_leaders(&self, n_leaders: usize) -> Result<Self> {
        Self::with_orientation(self.n, self.d, n_leaders, self.edges.clone())
    }
}

/// Stacked agent positions `p = [p_1; ...; p_n]`, each block of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    d: usize,
    p: DVector<f64>,
}

impl Configuration {
    pub fn new(d: usize, stacked: DVector<f64>) -> Result<Self> {
        if d == 0 || !stacked.len().is_multiple_of(d) {
            return Err(FormationError::DimensionMismatch {
                what: "configuration length",
                expected: d * stacked.len().div_ceil(d.max(1)),
                found: stacked.len(),
            });
        }
        Ok(Self { d, p: stacked })
    }

    pub fn from_points<P: AsRef<[f64]>>(d: usize, points: &[P]) -> Result<Self> {
        let mut data = Vec::with_capacity(d * points.len());
        for pt in points {
            let pt = pt.as_ref();
            if pt.len() != d {
                return Err(FormationError::DimensionMismatch {
                    what: "point",
                    expected: d,
                    found: pt.len(),
                });
            }
            data.extend_from_slice(pt);
        }
        Self::new(d, DVector::from_vec(data))
    }

    /// Joins a leader stack and a follower stack.
    pub fn from_parts(d: usize, leaders: &DVector<f64>, followers: &DVector<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(leaders.len() + followers.len());
        data.extend_from_slice(leaders.as_slice());
        data.extend_from_slice(followers.as_slice());
        Self::new(d, DVector::from_vec(data))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn agent_count(&self) -> usize {
        self.p.len() / self.d
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn into_stacked(self) -> DVector<f64> {
        self.p
    }

    pub fn position(&self, agent: usize) -> &[f64] {
        &self.p.as_slice()[agent * self.d..(agent + 1) * self.d]
    }

    pub fn leader_stack(&self, n_leaders: usize) -> DVector<f64> {
        self.p.rows(0, n_leaders * self.d).into_owned()
    }

    pub fn follower_stack(&self, n_leaders: usize) -> DVector<f64> {
        let start = n_leaders * self.d;
        self.p.rows(start, self.p.len() - start).into_owned()
    }

    /// Every position shifted by `w`.
    pub fn translated(&self, w: &[f64]) -> Self {
        let mut p = self.p.clone();
        for (k, x) in p.iter_mut().enumerate() {
            *x += w[k % self.d];
        }
        Self { d: self.d, p }
    }

    /// Every position mapped to `center + factor * (p_i - center)`.
    pub fn scaled_about(&self, center: &[f64], factor: f64) -> Self {
        let mut p = self.p.clone();
        for (k, x) in p.iter_mut().enumerate() {
            let c = center[k % self.d];
            *x = c + factor * (*x - c);
        }
        Self { d: self.d, p }
    }

    pub(crate) fn check_against(&self, graph: &FormationGraph) -> Result<()> {
        let expected = graph.dim() * graph.agent_count();
        if self.d != graph.dim() || self.p.len() != expected {
            return Err(FormationError::DimensionMismatch {
                what: "configuration vs graph",
                expected,
                found: self.p.len(),
            });
        }
        Ok(())
    }
}

/// Desired unit bearing `g*_k` per oriented edge, aligned with the graph's edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingSpec {
    d: usize,
    bearings: Vec<DVector<f64>>,
}

impl BearingSpec {
    /// Wraps hand-supplied bearings; each must be a unit vector of length `d`.
    pub fn new(d: usize, bearings: Vec<DVector<f64>>) -> Result<Self> {
        for (k, g) in bearings.iter().enumerate() {
            if g.len() != d {
                return Err(FormationError::DimensionMismatch {
                    what: "bearing length",
                    expected: d,
                    found: g.len(),
                });
            }
            let norm = g.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(FormationError::InvalidBearing(format!(
                    "bearing {k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { d, bearings })
    }

    /// Bearings realized by `config` on every edge of `graph`.
    pub fn from_configuration(graph: &FormationGraph, config: &Configuration) -> Result<Self> {
        config.check_against(graph)?;
        let bearings = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                bearing(config.position(i), config.position(j)).map_err(|e| with_edge(e, k))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d: graph.dim(),
            bearings,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.bearings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bearings.is_empty()
    }

    pub fn bearing(&self, edge: usize) -> &DVector<f64> {
        &self.bearings[edge]
    }

    pub fn bearings(&self) -> &[DVector<f64>] {
        &self.bearings
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.d * self.bearings.len());
        for (k, g) in self.bearings.iter().enumerate() {
            out.rows_mut(k * self.d, self.d).copy_from(g);
        }
        out
    }

    /// Copy with the sign of the listed edges' bearings reversed.
    pub fn with_flipped(&self, edges: &[usize]) -> Self {
        let mut out = self.clone();
        for &k in edges {
            out.bearings[k] = -&out.bearings[k];
        }
        out
    }
}

/// `P_x = I - x x^T / |x|^2`, the projector onto the orthogonal complement of `x`.
pub fn orthogonal_projector(x: &[f64]) -> Result<DMatrix<f64>> {
    let g = normalized(x)?;
    Ok(projector_of_unit(&g))
}

/// `I - g g^T` for a vector already known to be unit length.
pub(crate) fn projector_of_unit(g: &DVector<f64>) -> DMatrix<f64> {
    let d = g.len();
    DMatrix::identity(d, d) - g * g.transpose()
}

/// Unit vector pointing from `p_i` to `p_j`.
pub fn bearing(p_i: &[f64], p_j: &[f64]) -> Result<DVector<f64>> {
    if p_i.len() != p_j.len() {
        return Err(FormationError::DimensionMismatch {
            what: "bearing endpoints",
            expected: p_i.len(),
            found: p_j.len(),
        });
    }
    let e: Vec<f64> = p_i.iter().zip(p_j).map(|(a, b)| b - a).collect();
    normalized(&e)
}

/// Stacked bearings `[g_1; ...; g_m]` of `config` in the graph's edge order.
pub fn bearing_function(graph: &FormationGraph, config: &Configuration) -> Result<DVector<f64>> {
    Ok(BearingSpec::from_configuration(graph, config)?.stacked())
}

fn normalized(x: &[f64]) -> Result<DVector<f64>> {
    let v = DVector::from_column_slice(x);
    let norm = v.norm();
    if norm <= COLLOCATION_EPS || !norm.is_finite() {
        return Err(FormationError::DegenerateVector { norm, edge: None });
    }
    Ok(v / norm)
}

pub(crate) fn with_edge(err: FormationError, k: usize) -> FormationError {
    match err {
        FormationError::DegenerateVector { norm, .. } => FormationError::DegenerateVector {
            norm,
            edge: Some(k),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    #[test]
    fn projector_axis_aligned() {
        let p = orthogonal_projector(&[1.0, 0.0]).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn projector_diagonal() {
        let p = orthogonal_projector(&[1.0, 1.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(max_abs(&(p - expected)) < 1e-15);
    }

    #[test]
    fn projector_rejects_zero() {
        assert!(matches!(
            orthogonal_projector(&[0.0, 0.0, 0.0]),
            Err(FormationError::DegenerateVector { .. })
        ));
        assert!(orthogonal_projector(&[1e-13, 0.0]).is_err());
    }

    #[test]
    fn bearing_examples() {
        let g = bearing(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 0.0]);
        let g = bearing(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        let s = 1.0 / 3.0_f64.sqrt();
        for x in g.iter() {
            assert!((x - s).abs() < 1e-15);
        }
        assert!((g[0] - 0.5774).abs() < 1e-4);
        assert!(bearing(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bearing_function_square() {
        let g = FormationGraph::with_orientation(4, 2, 2, vec![(0, 1), (1, 2), (2, 3), (3, 0)])
            .unwrap();
        let p = Configuration::from_points(2, &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .unwrap();
        let fb = bearing_function(&g, &p).unwrap();
        assert_eq!(fb.as_slice(), &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn bearing_function_two_agents() {
        let g = FormationGraph::new(2, 2, 1, [(0, 1)]).unwrap();
        let p = Configuration::from_points(2, &[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(bearing_function(&g, &p).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn bearing_function_reports_edge() {
        let g = FormationGraph::new(3, 2, 1, [(0, 1), (1, 2)]).unwrap();
        let p = Configuration::from_points(2, &[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        match bearing_function(&g, &p) {
            Err(FormationError::DegenerateVector { edge, .. }) => assert_eq!(edge, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graph_validation() {
        assert!(FormationGraph::new(3, 2, 1, [(0, 0)]).is_err());
        assert!(FormationGraph::new(3, 2, 1, [(0, 1), (1, 0)]).is_err());
        assert!(FormationGraph::new(3, 2, 1, [(0, 3)]).is_err());
        assert!(FormationGraph::new(3, 2, 0, [(0, 1)]).is_err());
        assert!(FormationGraph::new(3, 2, 4, [(0, 1)]).is_err());
        assert!(FormationGraph::new(3, 1, 1, [(0, 1)]).is_err());

        let g = FormationGraph::new(3, 2, 1, [(2, 0), (1, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(g.edge_between(2, 0), Some(0));
        assert_eq!(g.edge_between(0, 1), None);
        let nbrs: Vec<usize> = g.neighbors(2).iter().map(|nb| nb.agent).collect();
        assert_eq!(nbrs, vec![0, 1]);
    }

    #[test]
    fn spec_rejects_non_unit() {
        let bad = BearingSpec::new(2, vec![DVector::from_vec(vec![1.0, 1e-3])]);
        assert!(matches!(bad, Err(FormationError::InvalidBearing(_))));
        let wrong_dim = BearingSpec::new(2, vec![DVector::from_vec(vec![1.0, 0.0, 0.0])]);
        assert!(wrong_dim.is_err());
    }

    fn points(d: usize, n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, d * n)
    }

    fn well_separated(d: usize, p: &[f64]) -> bool {
        let n = p.len() / d;
        (0..n).all(|i| {
            (i + 1..n).all(|j| {
                let dist: f64 = (0..d).map(|k| (p[i * d + k] - p[j * d + k]).powi(2)).sum();
                dist.sqrt() > 1e-3
            })
        })
    }

    proptest! {
        #[test]
        fn projector_properties(x in prop::collection::vec(-10.0..10.0f64, 2..=4)) {
            prop_assume!(DVector::from_column_slice(&x).norm() > 1e-3);
            let p = orthogonal_projector(&x).unwrap();
            prop_assert!(max_abs(&(&p - p.transpose())) < 1e-12);
            prop_assert!(max_abs(&(&p * &p - &p)) < 1e-12);
            let px = &p * DVector::from_column_slice(&x);
            prop_assert!(px.amax() < 1e-12 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
            let mut eig: Vec<f64> = p.symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            prop_assert!(eig[0].abs() < 1e-12);
            for e in &eig[1..] {
                prop_assert!((e - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn bearing_is_antisymmetric(a in points(3, 1), b in points(3, 1)) {
            prop_assume!(well_separated(3, &[a.clone(), b.clone()].concat()));
            let gab = bearing(&a, &b).unwrap();
            let gba = bearing(&b, &a).unwrap();
            prop_assert!((gab + gba).amax() < 1e-15);
        }

        #[test]
        fn bearing_function_is_similarity_invariant(
            p in points(2, 5),
            w in points(2, 1),
            c in 0.1..10.0f64,
            center in points(2, 1),
        ) {
            prop_assume!(well_separated(2, &p));
            let g = FormationGraph::complete(5, 2, 2).unwrap();
            let cfg = Configuration::new(2, DVector::from_vec(p)).unwrap();
            let base = bearing_function(&g, &cfg).unwrap();
            let moved = bearing_function(&g, &cfg.translated(&w).scaled_about(&center, c)).unwrap();
            prop_assert!((base - moved).amax() < 1e-9);
        }

        #[test]
        fn flipping_an_edge_negates_its_block(p in points(2, 4), flip in 0usize..6) {
            prop_assume!(well_separated(2, &p));
            let cfg = Configuration::new(2, DVector::from_vec(p)).unwrap();
            let g = FormationGraph::complete(4, 2, 1).unwrap();
            let mut edges = g.edges().to_vec();
            edges[flip] = (edges[flip].1, edges[flip].0);
            let g2 = FormationGraph::with_orientation(4, 2, 1, edges).unwrap();
            let a = bearing_function(&g, &cfg).unwrap();
            let b = bearing_function(&g2, &cfg).unwrap();
            for k in 0..6 {
                let sign = if k == flip { -1.0 } else { 1.0 };
                for r in 0..2 {
                    prop_assert_eq!(a[2 * k + r] * sign, b[2 * k + r]);
                }
            }
        }
    }
}
