//! Graph-cut MAP: exact minimization of binary submodular energies and
//! alpha-expansion moves for metric multi-label energies.
//!
//! A binary energy over `x ∈ {0,1}^n` is reduced to a cut in the usual way:
//! node `i` on the sink side means `x_i = 1`. A pair term with table
//! `(A, B, C, D) = (E(0,0), E(0,1), E(1,0), E(1,1))` decomposes as
//! `A + (C-A)·x_i + (D-C)·x_j + (B+C-A-D)·(1-x_i)·x_j`, the last term becoming
//! an arc `i → j` of capacity `B+C-A-D`, non-negative exactly when the pair is
//! submodular.

use crate::energy::{total_energy, EnergyModel, Labeling, PairwiseSpec};
use crate::error::{Error, Result};
use crate::inference::maxflow::{max_flow, FlowNetwork};

fn slack(values: [f64; 4]) -> f64 {
    1e-12 * values.iter().map(|v| v.abs()).fold(1.0, f64::max)
}

/// Builds and cuts the network for a binary energy. `cost0/cost1` are the
/// per-node energies of `x_i = 0/1`; each pair is `(i, j, [A, B, C, D])`.
/// Returns `x`, `true` for label 1.
pub(crate) fn solve_binary(
    mut cost0: Vec<f64>,
    mut cost1: Vec<f64>,
    pairs: &[(usize, usize, [f64; 4])],
) -> Vec<bool> {
    let n = cost0.len();
    let mut net = FlowNetwork::with_capacity(n, n + pairs.len());
    let mut arcs = Vec::with_capacity(pairs.len());
    for &(i, j, [a, b, c, d]) in pairs {
        cost1[i] += c - a;
        cost1[j] += d - c;
        let w = b + c - a - d;
        if w > 0.0 {
            arcs.push((i, j, w));
        }
    }
    let (s, t) = (net.source(), net.sink());
    for i in 0..n {
        let delta = cost1[i] - cost0[i];
        if delta > 0.0 {
            net.push_pair(s, i, delta, 0.0);
        } else if delta < 0.0 {
            net.push_pair(i, t, -delta, 0.0);
        }
        cost0[i] = 0.0;
    }
    for (i, j, w) in arcs {
        net.push_pair(i, j, w, 0.0);
    }
    let cut = max_flow(&net);
    (0..n).map(|i| !cut.source_side[i]).collect()
}

/// Exact MAP of a two-class model whose every edge satisfies
/// `E(0,0) + E(1,1) <= E(0,1) + E(1,0)`.
pub fn binary_submodular_map(model: &EnergyModel) -> Result<Labeling> {
    if model.n_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary cut needs 2 classes, model has {}",
            model.n_classes()
        )));
    }
    let unary = model.unary();
    let cost0: Vec<f64> = (0..model.n_nodes()).map(|i| unary.get(i, 0)).collect();
    let cost1: Vec<f64> = (0..model.n_nodes()).map(|i| unary.get(i, 1)).collect();
    let mut pairs = Vec::with_capacity(model.graph().n_edges());
    for (e, &(i, j)) in model.graph().edges().iter().enumerate() {
        let t = [
            model.pair_energy(e, 0, 0),
            model.pair_energy(e, 0, 1),
            model.pair_energy(e, 1, 0),
            model.pair_energy(e, 1, 1),
        ];
        let excess = t[0] + t[3] - t[1] - t[2];
        if excess > slack(t) {
            return Err(Error::NonSubmodular { edge: e, i, j });
        }
        pairs.push((i, j, t));
    }
    let x = solve_binary(cost0, cost1, &pairs);
    Ok(x.into_iter().map(usize::from).collect())
}

/// Fails unless every expansion move is submodular:
/// `V(a,b) + V(α,α) <= V(a,α) + V(α,b)` for all labels, which holds for
/// metrics (Potts with `β >= 0` in particular).
pub fn check_metric(model: &EnergyModel) -> Result<()> {
    let m = model.n_classes();
    let check_table = |t: &[f64], which: &str| -> Result<()> {
        for a in 0..m {
            for b in 0..m {
                for al in 0..m {
                    let vals = [t[a * m + b], t[a * m + al], t[al * m + b], t[al * m + al]];
                    if vals[0] + vals[3] - vals[1] - vals[2] > slack(vals) {
                        return Err(Error::NonMetric(format!(
                            "{which}: V({a},{b}) + V({al},{al}) > V({a},{al}) + V({al},{b})"
                        )));
                    }
                }
            }
        }
        Ok(())
    };
    match model.pairwise() {
        PairwiseSpec::Potts { .. } => Ok(()),
        PairwiseSpec::Shared(t) => check_table(t, "shared table"),
        PairwiseSpec::Full(t) => {
            for (e, table) in t.chunks(m * m).enumerate() {
                check_table(table, &format!("edge {e}"))?;
            }
            Ok(())
        }
    }
}

pub const DEFAULT_CYCLES: usize = 15;

#[derive(Debug, Clone)]
pub struct ExpansionOutcome {
    pub labeling: Labeling,
    pub energy: f64,
    /// Full passes over the label set that were run.
    pub cycles: usize,
    pub moves_accepted: usize,
    /// True when the last cycle produced no strict decrease.
    pub converged: bool,
    /// Energy after every accepted move, starting with the initial energy.
    pub energy_trace: Vec<f64>,
}

/// Alpha-expansion from the unary argmin.
pub fn alpha_expansion(model: &EnergyModel, max_cycles: usize) -> Result<Labeling> {
    let init = model.unary().argmin();
    Ok(alpha_expansion_from(model, &init, max_cycles)?.labeling)
}

/// Alpha-expansion from `init`: cycles over `α = 0..M` in ascending order,
/// each move solved by one min-cut and kept only if it strictly lowers the
/// energy. Stops after a cycle without improvement or after `max_cycles`.
pub fn alpha_expansion_from(model: &EnergyModel, init: &[usize], max_cycles: usize) -> Result<ExpansionOutcome> {
    if max_cycles == 0 {
        return Err(Error::InvalidArgument("max_cycles must be >= 1".into()));
    }
    model.check_labeling(init)?;
    check_metric(model)?;
    let n = model.n_nodes();
    let m = model.n_classes();
    let unary = model.unary();
    let edges = model.graph().edges();
    let mut y = init.to_vec();
    let mut energy = total_energy(model, &y);
    let mut trace = vec![energy];
    let mut moves_accepted = 0;
    let mut cycles = 0;
    let mut converged = false;
    let mut pairs = Vec::with_capacity(edges.len());
    while cycles < max_cycles {
        cycles += 1;
        let mut improved = false;
        for alpha in 0..m {
            let cost0: Vec<f64> = (0..n).map(|i| unary.get(i, y[i])).collect();
            let cost1: Vec<f64> = (0..n).map(|i| unary.get(i, alpha)).collect();
            pairs.clear();
            for (e, &(i, j)) in edges.iter().enumerate() {
                let (a, b) = (y[i], y[j]);
                if a == alpha && b == alpha {
                    continue;
                }
                pairs.push((
                    i,
                    j,
                    [
                        model.pair_energy(e, a, b),
                        model.pair_energy(e, a, alpha),
                        model.pair_energy(e, alpha, b),
                        model.pair_energy(e, alpha, alpha),
                    ],
                ));
            }
            let x = solve_binary(cost0, cost1, &pairs);
            let candidate: Labeling = y
                .iter()
                .zip(&x)
                .map(|(&l, &switch)| if switch { alpha } else { l })
                .collect();
            let e_new = total_energy(model, &candidate);
            if e_new < energy - 1e-12 * (1.0 + energy.abs()) {
                y = candidate;
                energy = e_new;
                trace.push(energy);
                moves_accepted += 1;
                improved = true;
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }
    Ok(ExpansionOutcome {
        labeling: y,
        energy,
        cycles,
        moves_accepted,
        converged,
        energy_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{brute_force_map, grid_graph, Graph, UnaryTable};
    use crate::inference::tests::random_potts;

    #[test]
    fn binary_matches_brute_force() {
        for seed in 0..40 {
            let model = random_potts(3, 4, 2, [0.0, 0.3, 2.0][seed as usize % 3], seed);
            let y = binary_submodular_map(&model).unwrap();
            let (_, opt) = brute_force_map(&model).unwrap();
            assert!((total_energy(&model, &y) - opt).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn binary_zero_beta_is_argmin() {
        let model = random_potts(2, 3, 2, 0.0, 8);
        assert_eq!(binary_submodular_map(&model).unwrap(), model.unary().argmin());
    }

    #[test]
    fn binary_rejects_supermodular_edge() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let table = vec![0.0, 0.0, 0.0, 0.0, /* edge 1 */ 1.0, 0.0, 0.0, 1.0];
        let model = EnergyModel::new(g, UnaryTable::zeros(3, 2), PairwiseSpec::Full(table)).unwrap();
        match binary_submodular_map(&model) {
            Err(Error::NonSubmodular { edge, i, j }) => assert_eq!((edge, i, j), (1, 1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_beta_expansion_is_argmin() {
        let model = random_potts(3, 3, 4, 0.0, 2);
        let out = alpha_expansion_from(&model, &[3; 9], 15).unwrap();
        assert_eq!(out.labeling, model.unary().argmin());
        assert_eq!(out.cycles, 2);
    }

    #[test]
    fn strong_coupling_majority_example() {
        // class 1 (0-based) is cheapest on 7 of 9 pixels
        let mut rows = vec![vec![1.0, 0.1, 1.0]; 9];
        rows[0] = vec![0.1, 1.0, 1.0];
        rows[8] = vec![1.0, 1.0, 0.1];
        let model = EnergyModel::potts(grid_graph(3, 3), UnaryTable::from_rows(&rows).unwrap(), 10.0).unwrap();
        let y = alpha_expansion(&model, 15).unwrap();
        assert_eq!(y, vec![1; 9]);
        assert_eq!(y, brute_force_map(&model).unwrap().0);
    }

    #[test]
    fn moves_never_increase_energy() {
        for seed in 0..30 {
            let model = random_potts(3, 3, 3, 1.0, seed);
            let out = alpha_expansion_from(&model, &[0; 9], 15).unwrap();
            assert!(out.energy_trace.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn non_metric_table_rejected() {
        // V(0,2) > V(0,1) + V(1,2): triangle inequality fails
        let t = vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0];
        let model = EnergyModel::new(grid_graph(1, 2), UnaryTable::zeros(2, 3), PairwiseSpec::Shared(t)).unwrap();
        assert!(matches!(alpha_expansion(&model, 3), Err(Error::NonMetric(_))));
    }

    #[test]
    fn truncated_linear_metric_is_accepted() {
        let m = 4;
        let t: Vec<f64> = (0..m * m).map(|k| ((k / m) as f64 - (k % m) as f64).abs().min(2.0)).collect();
        let mut rows = Vec::new();
        for i in 0..6 {
            rows.push((0..m).map(|c| ((i * 3 + c * 5) % 7) as f64 * 0.3).collect());
        }
        let model = EnergyModel::new(grid_graph(2, 3), UnaryTable::from_rows(&rows).unwrap(), PairwiseSpec::Shared(t)).unwrap();
        let out = alpha_expansion_from(&model, &model.unary().argmin(), 15).unwrap();
        let (_, opt) = brute_force_map(&model).unwrap();
        // expansion bound for a metric: 2 · max V / min nonzero V = 4
        assert!(out.energy <= 4.0 * opt + 1e-12);
    }
}
