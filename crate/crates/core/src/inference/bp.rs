//! Loopy belief propagation in the log domain (sum-product and max-product)
//! with damping, a fixed raster schedule and the Bethe estimate of `ln Z`.

use crate::classifiers::log_sum_exp;
use crate::energy::{EnergyModel, Labeling, Marginals, PairwiseSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpMode {
    SumProduct,
    MaxProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub mode: BpMode,
    pub max_iters: usize,
    /// Weight of the previous message in each update, in `[0, 1)`.
    pub damping: f64,
    /// Convergence threshold on the largest absolute message change in a sweep.
    pub tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            mode: BpMode::SumProduct,
            max_iters: 100,
            damping: 0.5,
            tol: 1e-6,
        }
    }
}

impl BpConfig {
    pub fn max_product() -> Self {
        Self {
            mode: BpMode::MaxProduct,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(0.0..1.0).contains(&self.damping) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(format!("invalid BP configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BpOutcome {
    /// Beliefs (max-marginals in max-product mode) and the Bethe `ln Z`
    /// (sum-product only; NaN otherwise).
    pub marginals: Marginals,
    /// Per-node argmax of the beliefs, lowest class index on ties.
    pub labeling: Labeling,
    pub iterations: usize,
    pub converged: bool,
    /// Messages at exit, usable as a warm start.
    pub messages: Vec<f64>,
}

/// Runs loopy BP from uniform messages.
pub fn loopy_bp(model: &EnergyModel, cfg: &BpConfig) -> Result<BpOutcome> {
    loopy_bp_warm(model, cfg, None)
}

/// Runs loopy BP, optionally starting from messages of an earlier run on a
/// model with the same graph and class count.
///
/// Message `2e` flows from the first endpoint of edge `e` to the second,
/// `2e + 1` the other way; each holds `M` log values normalized to max 0.
pub fn loopy_bp_warm(model: &EnergyModel, cfg: &BpConfig, warm: Option<&[f64]>) -> Result<BpOutcome> {
    cfg.validate()?;
    let n = model.n_nodes();
    let m = model.n_classes();
    let graph = model.graph();
    let ne = graph.n_edges();
    let mut msg = match warm {
        Some(w) if w.len() == 2 * ne * m => w.to_vec(),
        Some(_) => return Err(Error::DimensionMismatch("warm-start messages do not match the graph".into())),
        None => vec![0.0; 2 * ne * m],
    };
    let potts_beta = match model.pairwise() {
        PairwiseSpec::Potts { beta } => Some(*beta),
        _ => None,
    };
    let sum = cfg.mode == BpMode::SumProduct;
    // sum-product kernels exp(-(E - min E)), one per table
    let (kernels, stride) = match model.pairwise() {
        PairwiseSpec::Shared(t) if sum => (kernel(t), 0),
        PairwiseSpec::Full(t) if sum => (t.chunks(m * m).flat_map(kernel).collect(), m * m),
        _ => (Vec::new(), 0),
    };
    let mut weights = vec![0.0; m];
    let mut h = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut fresh = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = ne == 0;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for i in 0..n {
            // h(a) = -E_i(a) + Σ_k m_{k→i}(a)
            for (a, v) in h.iter_mut().enumerate() {
                *v = -model.unary().get(i, a);
            }
            for &(k, e) in graph.neighbors(i) {
                let incoming = incoming_slot(graph.edges()[e], e, k);
                for (v, &mv) in h.iter_mut().zip(&msg[incoming * m..(incoming + 1) * m]) {
                    *v += mv;
                }
            }
            for &(j, e) in graph.neighbors(i) {
                let into_i = incoming_slot(graph.edges()[e], e, j);
                let out = 2 * e + usize::from(graph.edges()[e].0 != i);
                for a in 0..m {
                    g[a] = h[a] - msg[into_i * m + a];
                }
                let i_first = graph.edges()[e].0 == i;
                let kernel_ok = !kernels.is_empty() && {
                    let k = &kernels[e * stride..e * stride + m * m];
                    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    for (w, &ga) in weights.iter_mut().zip(&g) {
                        *w = (ga - gmax).exp();
                    }
                    for (b, f) in fresh.iter_mut().enumerate() {
                        let total: f64 = if i_first {
                            (0..m).map(|a| weights[a] * k[a * m + b]).sum()
                        } else {
                            (0..m).map(|a| weights[a] * k[b * m + a]).sum()
                        };
                        *f = gmax + total.ln();
                    }
                    fresh.iter().all(|f| f.is_finite())
                };
                match potts_beta {
                    Some(beta) => potts_message(&g, beta, sum, &mut fresh),
                    None if kernel_ok => {}
                    None => {
                        for (b, f) in fresh.iter_mut().enumerate() {
                            for (a, s) in scratch.iter_mut().enumerate() {
                                let pair = if i_first {
                                    model.pair_energy(e, a, b)
                                } else {
                                    model.pair_energy(e, b, a)
                                };
                                *s = g[a] - pair;
                            }
                            *f = if sum {
                                log_sum_exp(&scratch)
                            } else {
                                scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                            };
                        }
                    }
                }
                normalize(&mut fresh);
                let slot = &mut msg[out * m..(out + 1) * m];
                if cfg.damping > 0.0 {
                    for (f, &old) in fresh.iter_mut().zip(slot.iter()) {
                        *f = cfg.damping * old + (1.0 - cfg.damping) * *f;
                    }
                    normalize(&mut fresh);
                }
                for (old, &f) in slot.iter_mut().zip(&fresh) {
                    delta = delta.max((f - *old).abs());
                    *old = f;
                }
            }
        }
        if delta < cfg.tol {
            converged = true;
        }
    }

    let marginals = beliefs(model, &msg, sum);
    let labeling = marginals.argmax();
    Ok(BpOutcome {
        marginals,
        labeling,
        iterations,
        converged,
        messages: msg,
    })
}

fn kernel(table: &[f64]) -> Vec<f64> {
    let min = table.iter().copied().fold(f64::INFINITY, f64::min);
    table.iter().map(|v| (min - v).exp()).collect()
}

/// Slot of the message flowing from `from` into the other endpoint of `edge`.
#[inline]
fn incoming_slot(edge: (usize, usize), e: usize, from: usize) -> usize {
    2 * e + usize::from(edge.0 != from)
}

fn normalize(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x -= max);
}

/// Message through a Potts edge in O(M):
/// `ln(e^{-β} Σ_a e^{g(a)} + (1 - e^{-β}) e^{g(b)})` (sum) or
/// `max(g(b), max_a g(a) - β)` (max).
fn potts_message(g: &[f64], beta: f64, sum: bool, out: &mut [f64]) {
    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if sum {
        let total: f64 = g.iter().map(|v| (v - gmax).exp()).sum();
        let stay = -(-beta).exp_m1(); // 1 - e^{-β}
        let leak = (-beta).exp();
        for (o, &gb) in out.iter_mut().zip(g) {
            *o = gmax + (leak * total + stay * (gb - gmax).exp()).ln();
        }
    } else {
        for (o, &gb) in out.iter_mut().zip(g) {
            *o = gb.max(gmax - beta);
        }
    }
}

fn beliefs(model: &EnergyModel, msg: &[f64], sum: bool) -> Marginals {
    let n = model.n_nodes();
    let m = model.n_classes();
    let graph = model.graph();
    let mut h = vec![0.0; n * m];
    for i in 0..n {
        let hi = &mut h[i * m..(i + 1) * m];
        for (a, v) in hi.iter_mut().enumerate() {
            *v = -model.unary().get(i, a);
        }
        for &(k, e) in graph.neighbors(i) {
            let s = incoming_slot(graph.edges()[e], e, k);
            for (v, &mv) in hi.iter_mut().zip(&msg[s * m..(s + 1) * m]) {
                *v += mv;
            }
        }
    }
    let mut node = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut node[i * m..(i + 1) * m];
        row.copy_from_slice(&h[i * m..(i + 1) * m]);
        to_distribution(row);
    }
    let mut edge = vec![0.0; graph.n_edges() * m * m];
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let to_j = 2 * e; // message i → j
        let to_i = 2 * e + 1;
        let slot = &mut edge[e * m * m..(e + 1) * m * m];
        for a in 0..m {
            let ha = h[i * m + a] - msg[to_i * m + a];
            for b in 0..m {
                let hb = h[j * m + b] - msg[to_j * m + b];
                slot[a * m + b] = ha + hb - model.pair_energy(e, a, b);
            }
        }
        to_distribution(slot);
    }
    let mut marginals = Marginals {
        n_classes: m,
        node,
        edge,
        log_z: f64::NAN,
    };
    if sum {
        marginals.log_z = bethe_log_z(model, &marginals);
    }
    marginals
}

/// Turns log scores into a normalized distribution in place.
fn to_distribution(v: &mut [f64]) {
    let lse = log_sum_exp(v);
    v.iter_mut().for_each(|x| *x = (*x - lse).exp());
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Negative Bethe free energy of a set of beliefs:
/// `-U + Σ_e H(b_e) - Σ_i (d_i - 1) H(b_i)`. Exact on forests at the BP
/// fixed point.
pub fn bethe_log_z(model: &EnergyModel, beliefs: &Marginals) -> f64 {
    let m = model.n_classes();
    let graph = model.graph();
    let mut avg_energy = 0.0;
    let mut h = 0.0;
    for i in 0..model.n_nodes() {
        let b = beliefs.node_belief(i);
        for (a, &p) in b.iter().enumerate() {
            if p > 0.0 {
                avg_energy += p * model.unary().get(i, a);
            }
        }
        h -= (graph.degree(i) as f64 - 1.0) * entropy(b);
    }
    for e in 0..graph.n_edges() {
        let b = beliefs.edge_belief(e);
        for a in 0..m {
            for c in 0..m {
                let p = b[a * m + c];
                if p > 0.0 {
                    avg_energy += p * model.pair_energy(e, a, c);
                }
            }
        }
        h += entropy(b);
    }
    h - avg_energy
}

/// Max-product BP labeling (argmax of max-marginals).
pub fn max_marginals_map(model: &EnergyModel, cfg: &BpConfig) -> Result<BpOutcome> {
    let cfg = BpConfig {
        mode: BpMode::MaxProduct,
        ..*cfg
    };
    loopy_bp(model, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{brute_force_map, brute_force_marginals, grid_graph, Graph, UnaryTable};
    use crate::inference::tests::{random_model, random_potts};

    pub(crate) fn tight() -> BpConfig {
        BpConfig {
            max_iters: 2000,
            tol: 1e-13,
            ..BpConfig::default()
        }
    }

    fn softmax_neg(row: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = row.iter().map(|x| -x).collect();
        crate::classifiers::softmax_in_place(&mut v);
        v
    }

    #[test]
    fn single_node_is_softmax() {
        let unary = UnaryTable::from_rows(&[vec![0.3, 1.2, -0.4]]).unwrap();
        let model = EnergyModel::potts(Graph::new(1, vec![]).unwrap(), unary, 1.0).unwrap();
        let out = loopy_bp(&model, &BpConfig::default()).unwrap();
        let want = softmax_neg(&[0.3, 1.2, -0.4]);
        for (a, b) in out.marginals.node.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(out.converged);
    }

    #[test]
    fn chain_matches_enumeration() {
        for seed in 0..10 {
            let g = Graph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
            let model = random_model(g, 3, seed);
            let bp = loopy_bp(&model, &tight()).unwrap();
            let exact = brute_force_marginals(&model).unwrap();
            for (a, b) in bp.marginals.node.iter().zip(&exact.node) {
                assert!((a - b).abs() < 1e-8);
            }
            for (a, b) in bp.marginals.edge.iter().zip(&exact.edge) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((bp.marginals.log_z - exact.log_z).abs() < 1e-8);
        }
    }

    #[test]
    fn uncoupled_loop_is_exact() {
        let unary = UnaryTable::from_rows(&[vec![0.1, 0.7], vec![1.0, 0.0], vec![0.4, 0.4], vec![2.0, -1.0]]).unwrap();
        let model = EnergyModel::potts(grid_graph(2, 2), unary.clone(), 0.0).unwrap();
        let out = loopy_bp(&model, &BpConfig::default()).unwrap();
        for i in 0..4 {
            let want = softmax_neg(unary.row(i));
            for (a, b) in out.marginals.node_belief(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn potts_fast_path_matches_table_path() {
        let model = random_potts(3, 3, 3, 0.8, 5);
        let table: Vec<f64> = (0..9).map(|k| if k / 3 == k % 3 { 0.0 } else { 0.8 }).collect();
        let tabled = model.with_pairwise(PairwiseSpec::Shared(table)).unwrap();
        for cfg in [BpConfig::default(), BpConfig::max_product()] {
            let a = loopy_bp(&model, &cfg).unwrap();
            let b = loopy_bp(&tabled, &cfg).unwrap();
            for (x, y) in a.marginals.node.iter().zip(&b.marginals.node) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn edge_beliefs_marginalize_to_node_beliefs() {
        let model = random_potts(3, 4, 3, 0.7, 9);
        let out = loopy_bp(&model, &tight()).unwrap();
        assert!(out.converged);
        let m = 3;
        for (e, &(i, j)) in model.graph().edges().iter().enumerate() {
            let b = out.marginals.edge_belief(e);
            for a in 0..m {
                let row: f64 = (0..m).map(|c| b[a * m + c]).sum();
                let col: f64 = (0..m).map(|c| b[c * m + a]).sum();
                assert!((row - out.marginals.node_belief(i)[a]).abs() < 1e-8);
                assert!((col - out.marginals.node_belief(j)[a]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn max_product_on_tree_finds_map() {
        for seed in 0..10 {
            let g = Graph::new(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
            let model = random_model(g, 3, 100 + seed);
            let out = max_marginals_map(&model, &tight()).unwrap();
            assert_eq!(out.labeling, brute_force_map(&model).unwrap().0);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let model = random_potts(4, 4, 3, 3.0, 1);
        let cfg = BpConfig {
            max_iters: 1,
            ..BpConfig::default()
        };
        let out = loopy_bp(&model, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn warm_start_converges_immediately() {
        let model = random_potts(3, 3, 2, 0.5, 4);
        let first = loopy_bp(&model, &tight()).unwrap();
        let again = loopy_bp_warm(&model, &tight(), Some(&first.messages)).unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn rejects_bad_config() {
        let model = random_potts(1, 2, 2, 0.5, 4);
        let bad = BpConfig { damping: 1.0, ..BpConfig::default() };
        assert!(loopy_bp(&model, &bad).is_err());
    }
}
