//! Spectral radius of sparse recurrent matrices.
//!
//! The eigenvalues of a reducible matrix are the union of the eigenvalues of
//! the diagonal blocks belonging to its strongly connected components. Sparse
//! reservoirs are highly reducible, so decomposing first keeps the dense
//! eigensolves small and returns an exact zero for nilpotent patterns, where a
//! dense solver would report roundoff-sized eigenvalues of order eps^(1/k).

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::sparse::CsrMatrix;

/// Largest absolute eigenvalue of `m`. Returns `None` if the eigenvalue
/// iteration fails to converge on some block.
pub fn spectral_radius(m: &CsrMatrix) -> Option<f64> {
    let n = m.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, m.nnz());
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for (j, _) in m.row(i) {
            graph.add_edge(nodes[i], nodes[j], ());
        }
    }

    let mut pos = vec![usize::MAX; n];
    let mut radius: f64 = 0.0;
    for component in tarjan_scc(&graph) {
        if component.len() == 1 {
            let i = component[0].index();
            let diag = m.row(i).find(|&(j, _)| j == i).map_or(0.0, |(_, v)| v);
            radius = radius.max(diag.abs());
            continue;
        }
        let idx: Vec<usize> = component.iter().map(|v| v.index()).collect();
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut block = DMatrix::zeros(idx.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in m.row(i) {
                if pos[j] != usize::MAX {
                    block[(k, pos[j])] = v;
                }
            }
        }
        for &i in &idx {
            pos[i] = usize::MAX;
        }
        radius = radius.max(dense_spectral_radius(block)?);
    }
    Some(radius)
}

/// Largest absolute eigenvalue of a dense square matrix. When the QR
/// iteration stalls, which can happen on sparse blocks with an all-zero
/// diagonal, it is retried on `m + σI` for a few shifts `σ` and the shift is
/// subtracted from the eigenvalues.
pub fn dense_spectral_radius(m: DMatrix<f64>) -> Option<f64> {
    let scale = m.amax();
    for shift in [0.0, 0.5, -0.75, 1.25] {
        let sigma = shift * scale;
        let a = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] + if i == j { sigma } else { 0.0 });
        match a.eigenvalues() {
            Ok(eig) => {
                let shifted = eig.iter().map(|z| ((z.re - sigma).powi(2) + z.im.powi(2)).sqrt());
                return Some(shifted.fold(0.0, f64::max));
            }
            Err(_) => log::debug!("eigenvalue iteration stalled with shift {sigma}"),
        }
    }
    None
}
