//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use bearing_maneuver::io::{LoadedScenario, ScenarioFile};
use bearing_maneuver::{bearing_function, Configuration, FormationGraph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

pub fn load_bundle(name: &str) -> LoadedScenario {
    ScenarioFile::load(&scenario_path(name))
        .and_then(|f| f.to_scenario())
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const BUNDLES: [&str; 2] = ["narrow_passage_2d.json", "narrow_passage_3d.json"];

/// Uniform points in `[-1, 1]^d` with pairwise distance at least `min_sep`.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, min_sep: f64) -> Configuration {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    while pts.len() < n {
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let far = pts.iter().all(|q| {
            q.iter()
                .zip(&p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= min_sep
        });
        if far {
            pts.push(p);
        }
    }
    Configuration::from_points(d, &pts).unwrap()
}

/// Each pair joined with probability `prob`; at least one edge.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, prob: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(prob) {
                edges.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    edges
}

/// Central-difference Jacobian of the bearing function.
pub fn fd_jacobian(graph: &FormationGraph, config: &Configuration, h: f64) -> DMatrix<f64> {
    let d = config.dim();
    let p = config.stacked();
    let rows = graph.edge_count() * d;
    let mut jac = DMatrix::zeros(rows, p.len());
    for c in 0..p.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[c] += h;
        minus[c] -= h;
        let fp = bearing_function(graph, &Configuration::new(d, plus).unwrap()).unwrap();
        let fm = bearing_function(graph, &Configuration::new(d, minus).unwrap()).unwrap();
        jac.set_column(c, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Bearing Laplacian assembled entry by entry from the positions.
pub fn oracle_laplacian(graph: &FormationGraph, config: &Configuration) -> DMatrix<f64> {
    let d = config.dim();
    let n = config.agent_count();
    let mut l = DMatrix::zeros(d * n, d * n);
    for &(i, j) in graph.edges() {
        let e: Vec<f64> = (0..d)
            .map(|r| config.position(j)[r] - config.position(i)[r])
            .collect();
        let nn: f64 = e.iter().map(|x| x * x).sum();
        for r in 0..d {
            for c in 0..d {
                let proj = if r == c { 1.0 } else { 0.0 } - e[r] * e[c] / nn;
                l[(i * d + r, i * d + c)] += proj;
                l[(j * d + r, j * d + c)] += proj;
                l[(i * d + r, j * d + c)] -= proj;
                l[(j * d + r, i * d + c)] -= proj;
            }
        }
    }
    l
}

/// Symmetric matrix `Q diag(sigmas) Qᵀ` with a random orthogonal `Q`.
pub fn spd_with_spectrum(rng: &mut ChaCha8Rng, sigmas: &[f64]) -> DMatrix<f64> {
    let m = sigmas.len();
    let g = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    &q * DMatrix::from_diagonal(&DVector::from_column_slice(sigmas)) * q.transpose()
}

/// Generator of the affine closed loop with constant leader velocity, on the
/// state `[p_f; ξ; p_l; 1]`.
pub fn augmented_generator(
    l: &DMatrix<f64>,
    m_l: usize,
    kp: f64,
    ki: f64,
    v_leader: &DVector<f64>,
) -> DMatrix<f64> {
    let m_f = l.nrows() - m_l;
    let size = 2 * m_f + m_l + 1;
    let l_ff = l.view((m_l, m_l), (m_f, m_f));
    let l_fl = l.view((m_l, 0), (m_f, m_l));
    let mut a = DMatrix::zeros(size, size);
    a.view_mut((0, 0), (m_f, m_f)).copy_from(&(l_ff * -kp));
    a.view_mut((0, m_f), (m_f, m_f))
        .copy_from(&(DMatrix::identity(m_f, m_f) * -ki));
    a.view_mut((0, 2 * m_f), (m_f, m_l))
        .copy_from(&(l_fl * -kp));
    a.view_mut((m_f, 0), (m_f, m_f)).copy_from(&l_ff);
    a.view_mut((m_f, 2 * m_f), (m_f, m_l)).copy_from(&l_fl);
    a.view_mut((2 * m_f, size - 1), (m_l, 1))
        .copy_from(v_leader);
    a
}

/// Central-difference slope of a sampled series at index `k`.
pub fn slope(times: &[f64], values: &[f64], k: usize, span: usize) -> f64 {
    (values[k + span] - values[k - span]) / (times[k + span] - times[k - span])
}
