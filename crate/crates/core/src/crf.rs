//! Log-linear pairwise CRF: energies `E_i(c) = -w1[c]·φ_i` and
//! `E_ij(a,b) = -w_ab·φ_ij`, trained by maximum likelihood (with latent
//! nodes marginalized out) or by pseudo-likelihood.

use std::path::Path;

use rayon::prelude::*;

use crate::classifiers::{gradient_descent, softmax_in_place, DescentOptions, DescentTrace, ProbabilityField};
use crate::energy::{brute_force_marginals, condition, EnergyModel, Graph, Labeling, Marginals, PairwiseSpec, UnaryTable};
use crate::error::{Error, Result};
use crate::inference::bp::{loopy_bp_warm, BpConfig, BpMode};
use crate::io::{self, Header};

/// CRF weights. The pairwise block is always stored in full (`M×M×F2`,
/// `(a, b, k)` row-major); with `tied` it is kept symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    n_classes: usize,
    unary_features: usize,
    pair_features: usize,
    tied: bool,
    unary: Vec<f64>,
    pairwise: Vec<f64>,
}

impl CrfModel {
    pub fn zeros(n_classes: usize, unary_features: usize, pair_features: usize, tied: bool) -> Self {
        Self {
            n_classes,
            unary_features,
            pair_features,
            tied,
            unary: vec![0.0; n_classes * unary_features],
            pairwise: vec![0.0; n_classes * n_classes * pair_features],
        }
    }

    pub fn new(
        n_classes: usize,
        unary_features: usize,
        pair_features: usize,
        tied: bool,
        unary: Vec<f64>,
        pairwise: Vec<f64>,
    ) -> Result<Self> {
        if n_classes == 0 || pair_features == 0 {
            return Err(Error::InvalidArgument("CRF needs at least one class and one pairwise feature".into()));
        }
        let m = n_classes;
        if unary.len() != m * unary_features || pairwise.len() != m * m * pair_features {
            return Err(Error::DimensionMismatch(format!(
                "weights of length {}/{} do not fit M={m}, F1={unary_features}, F2={pair_features}",
                unary.len(),
                pairwise.len()
            )));
        }
        if unary.iter().chain(&pairwise).any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("CRF weights must be finite".into()));
        }
        if tied {
            for a in 0..m {
                for b in 0..a {
                    for k in 0..pair_features {
                        if pairwise[(a * m + b) * pair_features + k] != pairwise[(b * m + a) * pair_features + k] {
                            return Err(Error::InvalidArgument(format!("tied weights differ for pair ({a}, {b})")));
                        }
                    }
                }
            }
        }
        Ok(Self {
            n_classes,
            unary_features,
            pair_features,
            tied,
            unary,
            pairwise,
        })
    }

    /// Potts-pattern CRF: `w1[c] = e_c`, `w_ab = -β` off the diagonal.
    /// With `φ_i = ln P_i` it reproduces the MRF energies exactly.
    pub fn potts(n_classes: usize, beta: f64) -> Self {
        let m = n_classes;
        let mut model = Self::zeros(m, m, 1, true);
        for c in 0..m {
            model.unary[c * m + c] = 1.0;
        }
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    model.pairwise[a * m + b] = -beta;
                }
            }
        }
        model
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn unary_features(&self) -> usize {
        self.unary_features
    }

    pub fn pair_features(&self) -> usize {
        self.pair_features
    }

    pub fn tied(&self) -> bool {
        self.tied
    }

    /// `M×F1`, row per class.
    pub fn unary_weights(&self) -> &[f64] {
        &self.unary
    }

    /// `M×M×F2`.
    pub fn pairwise_weights(&self) -> &[f64] {
        &self.pairwise
    }

    pub fn pair_weight(&self, a: usize, b: usize, k: usize) -> f64 {
        self.pairwise[(a * self.n_classes + b) * self.pair_features + k]
    }

    /// Pairwise label pairs that own a parameter: all `(a, b)`, or `a <= b`
    /// when tied.
    fn pair_slots(&self) -> Vec<(usize, usize)> {
        let m = self.n_classes;
        (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .filter(|&(a, b)| !self.tied || a <= b)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.unary.len() + self.pair_slots().len() * self.pair_features
    }

    /// Flat parameter vector: unary block then one `F2` block per pair slot.
    pub fn params(&self) -> Vec<f64> {
        let mut theta = self.unary.clone();
        for (a, b) in self.pair_slots() {
            for k in 0..self.pair_features {
                theta.push(self.pair_weight(a, b, k));
            }
        }
        theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters given, model has {}",
                theta.len(),
                self.n_params()
            )));
        }
        let (m, f2) = (self.n_classes, self.pair_features);
        let mut at = self.unary.len();
        self.unary.copy_from_slice(&theta[..at]);
        for (a, b) in self.pair_slots() {
            for k in 0..f2 {
                self.pairwise[(a * m + b) * f2 + k] = theta[at];
                if self.tied {
                    self.pairwise[(b * m + a) * f2 + k] = theta[at];
                }
                at += 1;
            }
        }
        Ok(())
    }

    /// Folds a full-layout gradient (unary then `M×M×F2`) onto the parameter
    /// vector; tied slots collect both orientations.
    fn fold_gradient(&self, unary: &[f64], pairwise: &[f64]) -> Vec<f64> {
        let (m, f2) = (self.n_classes, self.pair_features);
        let mut g = unary.to_vec();
        for (a, b) in self.pair_slots() {
            for k in 0..f2 {
                let mut v = pairwise[(a * m + b) * f2 + k];
                if self.tied && a != b {
                    v += pairwise[(b * m + a) * f2 + k];
                }
                g.push(v);
            }
        }
        g
    }
}

/// Graph plus features for one image.
#[derive(Debug, Clone)]
pub struct CrfInstance {
    pub graph: Graph,
    /// `N×F1`, row per node.
    pub unary_features: Vec<f64>,
    pub n_unary_features: usize,
    /// `E×F2`, row per edge; `None` is the constant feature 1.
    pub pair_features: Option<(Vec<f64>, usize)>,
}

impl CrfInstance {
    pub fn new(graph: Graph, unary_features: Vec<f64>, n_unary_features: usize) -> Result<Self> {
        if unary_features.len() != graph.n_nodes() * n_unary_features {
            return Err(Error::DimensionMismatch(format!(
                "{} unary feature values for {} nodes × {n_unary_features}",
                unary_features.len(),
                graph.n_nodes()
            )));
        }
        Ok(Self {
            graph,
            unary_features,
            n_unary_features,
            pair_features: None,
        })
    }

    /// Class probabilities of each pixel as unary features on `graph`.
    pub fn from_probabilities(graph: Graph, field: &ProbabilityField) -> Result<Self> {
        if graph.n_nodes() != field.n_pixels() {
            return Err(Error::DimensionMismatch("graph and probability field sizes differ".into()));
        }
        Self::new(graph, field.values().to_vec(), field.classes())
    }

    pub fn with_pair_features(mut self, values: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 || values.len() != self.graph.n_edges() * n {
            return Err(Error::DimensionMismatch("pairwise features must be E×F2 with F2 >= 1".into()));
        }
        self.pair_features = Some((values, n));
        Ok(self)
    }

    pub fn n_pair_features(&self) -> usize {
        self.pair_features.as_ref().map_or(1, |(_, n)| *n)
    }

    fn node_features(&self, i: usize) -> &[f64] {
        &self.unary_features[i * self.n_unary_features..(i + 1) * self.n_unary_features]
    }

    fn edge_features(&self, e: usize) -> &[f64] {
        match &self.pair_features {
            Some((v, n)) => &v[e * n..(e + 1) * n],
            None => &[1.0],
        }
    }
}

fn check_dims(model: &CrfModel, inst: &CrfInstance) -> Result<()> {
    if model.unary_features != inst.n_unary_features || model.pair_features != inst.n_pair_features() {
        return Err(Error::DimensionMismatch(format!(
            "model expects F1={}, F2={}; instance has F1={}, F2={}",
            model.unary_features,
            model.pair_features,
            inst.n_unary_features,
            inst.n_pair_features()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Energy model of a CRF on one instance. Constant pairwise features give
/// one shared `M×M` table.
pub fn crf_energy_model(model: &CrfModel, inst: &CrfInstance) -> Result<EnergyModel> {
    check_dims(model, inst)?;
    let (m, f1) = (model.n_classes, model.unary_features);
    let n = inst.graph.n_nodes();
    let mut unary = vec![0.0; n * m];
    for i in 0..n {
        let phi = inst.node_features(i);
        for c in 0..m {
            unary[i * m + c] = -dot(&model.unary[c * f1..(c + 1) * f1], phi);
        }
    }
    let f2 = model.pair_features;
    let table_for = |phi: &[f64]| -> Vec<f64> {
        (0..m * m)
            .map(|ab| -dot(&model.pairwise[ab * f2..(ab + 1) * f2], phi))
            .collect()
    };
    let pairwise = match &inst.pair_features {
        None => PairwiseSpec::Shared(table_for(&[1.0])),
        Some(_) => PairwiseSpec::Full(
            (0..inst.graph.n_edges())
                .flat_map(|e| table_for(inst.edge_features(e)))
                .collect(),
        ),
    };
    EnergyModel::new(inst.graph.clone(), UnaryTable::new(n, m, unary)?, pairwise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalEngine {
    /// Enumeration when `M^N` is at most [`AUTO_BRUTE_FORCE_LIMIT`], loopy BP otherwise.
    Auto(BpConfig),
    BruteForce,
    Bp(BpConfig),
}

impl Default for MarginalEngine {
    fn default() -> Self {
        MarginalEngine::Auto(BpConfig::default())
    }
}

pub const AUTO_BRUTE_FORCE_LIMIT: f64 = 4096.0;

/// Sum-product marginals of `model`; the flag is false when BP stopped
/// before converging. `warm` carries BP messages between calls.
fn marginals_of(model: &EnergyModel, engine: MarginalEngine, warm: &mut Option<Vec<f64>>) -> Result<(Marginals, bool)> {
    let configs = (model.n_classes() as f64).powi(model.n_nodes() as i32);
    let bp = match engine {
        MarginalEngine::BruteForce => None,
        MarginalEngine::Auto(cfg) if configs <= AUTO_BRUTE_FORCE_LIMIT => {
            let _ = cfg;
            None
        }
        MarginalEngine::Auto(cfg) | MarginalEngine::Bp(cfg) => Some(cfg),
    };
    match bp {
        None => Ok((brute_force_marginals(model)?, true)),
        Some(cfg) => {
            let cfg = BpConfig {
                mode: BpMode::SumProduct,
                ..cfg
            };
            let out = loopy_bp_warm(model, &cfg, warm.as_deref())?;
            *warm = Some(out.messages);
            Ok((out.marginals, out.converged))
        }
    }
}

/// Adds feature expectations under `marg` to full-layout accumulators.
fn accumulate(model: &CrfModel, inst: &CrfInstance, marg: &Marginals, sign: f64, gu: &mut [f64], gp: &mut [f64]) {
    let (m, f1, f2) = (model.n_classes, model.unary_features, model.pair_features);
    for i in 0..inst.graph.n_nodes() {
        let phi = inst.node_features(i);
        for (c, &b) in marg.node_belief(i).iter().enumerate() {
            if b != 0.0 {
                for (g, &p) in gu[c * f1..(c + 1) * f1].iter_mut().zip(phi) {
                    *g += sign * b * p;
                }
            }
        }
    }
    for e in 0..inst.graph.n_edges() {
        let phi = inst.edge_features(e);
        for (ab, &b) in marg.edge_belief(e).iter().enumerate().take(m * m) {
            if b != 0.0 {
                for (g, &p) in gp[ab * f2..(ab + 1) * f2].iter_mut().zip(phi) {
                    *g += sign * b * p;
                }
            }
        }
    }
}

/// One training image: features and the observed class (0-based) of each
/// node, `None` for latent nodes.
#[derive(Debug, Clone)]
pub struct CrfData {
    pub instance: CrfInstance,
    pub observed: Vec<Option<usize>>,
}

impl CrfData {
    pub fn new(instance: CrfInstance, observed: Vec<Option<usize>>) -> Result<Self> {
        if observed.len() != instance.graph.n_nodes() {
            return Err(Error::DimensionMismatch("one observation slot per node".into()));
        }
        Ok(Self { instance, observed })
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|o| o.is_some()).count()
    }

    /// The subgraph induced by the observed nodes, all of them observed.
    pub fn observed_subgraph(&self) -> Result<CrfData> {
        let inst = &self.instance;
        let keep: Vec<usize> = (0..self.observed.len()).filter(|&i| self.observed[i].is_some()).collect();
        let mut new_id = vec![usize::MAX; self.observed.len()];
        for (k, &i) in keep.iter().enumerate() {
            new_id[i] = k;
        }
        let mut edges = Vec::new();
        let mut kept_edges = Vec::new();
        for (e, &(i, j)) in inst.graph.edges().iter().enumerate() {
            if new_id[i] != usize::MAX && new_id[j] != usize::MAX {
                edges.push((new_id[i], new_id[j]));
                kept_edges.push(e);
            }
        }
        let features = keep.iter().flat_map(|&i| inst.node_features(i).to_vec()).collect();
        let mut sub = CrfInstance::new(Graph::new(keep.len(), edges)?, features, inst.n_unary_features)?;
        if let Some((_, f2)) = &inst.pair_features {
            let pf = kept_edges.iter().flat_map(|&e| inst.edge_features(e).to_vec()).collect();
            sub = sub.with_pair_features(pf, *f2)?;
        }
        CrfData::new(sub, keep.iter().map(|&i| self.observed[i]).collect())
    }

    fn check(&self, m: usize) -> Result<()> {
        if let Some(i) = self.observed.iter().position(|o| o.is_some_and(|c| c >= m)) {
            return Err(Error::InvalidArgument(format!("observed class at node {i} out of range")));
        }
        Ok(())
    }
}

/// Objective value, gradient over [`CrfModel::params`] and a flag that is
/// false when some BP run did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfObjective {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub converged: bool,
}

fn add_l2(model: &CrfModel, l2: f64, value: &mut f64, gradient: &mut [f64]) {
    if l2 > 0.0 {
        let theta = model.params();
        *value += 0.5 * l2 * dot(&theta, &theta);
        for (g, t) in gradient.iter_mut().zip(&theta) {
            *g += l2 * t;
        }
    }
}

/// Negative conditional log-likelihood of the observed labels,
/// `ln Z - ln Z_clamped` summed over instances, plus `l2/2·|θ|²`, and its
/// gradient `E_free[Φ] - E_clamped[Φ] + l2·θ`.
pub fn negll_and_grad(model: &CrfModel, data: &[CrfData], l2: f64, engine: MarginalEngine) -> Result<CrfObjective> {
    let mut warm = vec![(None, None); data.len()];
    negll_warm(model, data, l2, engine, &mut warm)
}

type WarmPair = (Option<Vec<f64>>, Option<Vec<f64>>);

fn negll_warm(
    model: &CrfModel,
    data: &[CrfData],
    l2: f64,
    engine: MarginalEngine,
    warm: &mut [WarmPair],
) -> Result<CrfObjective> {
    if data.iter().all(|d| d.n_observed() == 0) {
        return Err(Error::Data("no observed nodes in the training data".into()));
    }
    let (m, f1, f2) = (model.n_classes, model.unary_features, model.pair_features);
    let parts: Vec<Result<(f64, Vec<f64>, Vec<f64>, bool)>> = data
        .par_iter()
        .zip(warm.par_iter_mut())
        .map(|(d, (warm_free, warm_clamped))| {
            d.check(m)?;
            let energy = crf_energy_model(model, &d.instance)?;
            let cond = condition(&energy, &d.observed)?;
            let (free, clamped) = rayon::join(
                || marginals_of(&energy, engine, warm_free),
                || marginals_of(&cond.model, engine, warm_clamped),
            );
            let (free, ok_free) = free?;
            let (latent, ok_clamped) = clamped?;
            let clamped = cond.lift(&energy, &d.observed, &latent);
            let mut gu = vec![0.0; m * f1];
            let mut gp = vec![0.0; m * m * f2];
            accumulate(model, &d.instance, &free, 1.0, &mut gu, &mut gp);
            accumulate(model, &d.instance, &clamped, -1.0, &mut gu, &mut gp);
            Ok((free.log_z - clamped.log_z, gu, gp, ok_free && ok_clamped))
        })
        .collect();
    let mut value = 0.0;
    let mut gu = vec![0.0; m * f1];
    let mut gp = vec![0.0; m * m * f2];
    let mut converged = true;
    for part in parts {
        let (v, u, p, ok) = part?;
        value += v;
        gu.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        gp.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        converged &= ok;
    }
    let mut gradient = model.fold_gradient(&gu, &gp);
    add_l2(model, l2, &mut value, &mut gradient);
    Ok(CrfObjective {
        value,
        gradient,
        converged,
    })
}

/// Negative pseudo-log-likelihood `Σ_i -ln p(y_i | y_neighbours)` over
/// observed nodes, conditioning only on observed neighbours, plus the l2
/// term.
pub fn pseudo_likelihood_negll_and_grad(model: &CrfModel, data: &[CrfData], l2: f64) -> Result<CrfObjective> {
    let (m, f1, f2) = (model.n_classes, model.unary_features, model.pair_features);
    let mut value = 0.0;
    let mut gu = vec![0.0; m * f1];
    let mut gp = vec![0.0; m * m * f2];
    let mut local = vec![0.0; m];
    for d in data {
        d.check(m)?;
        let inst = &d.instance;
        let energy = crf_energy_model(model, inst)?;
        for i in 0..inst.graph.n_nodes() {
            let Some(yi) = d.observed[i] else { continue };
            for (c, l) in local.iter_mut().enumerate() {
                *l = energy.unary().get(i, c);
            }
            for &(j, e) in inst.graph.neighbors(i) {
                if let Some(yj) = d.observed[j] {
                    for (c, l) in local.iter_mut().enumerate() {
                        *l += energy.oriented_pair_energy(e, i, c, yj);
                    }
                }
            }
            // p(c) ∝ exp(-local(c))
            let mut p: Vec<f64> = local.iter().map(|v| -v).collect();
            let lse = crate::classifiers::log_sum_exp(&p);
            value += local[yi] + lse;
            softmax_in_place(&mut p);
            // d/dθ of -ln p(y_i) = E_p[Φ] - Φ(y_i), with Φ = -∂E/∂θ
            p[yi] -= 1.0;
            let phi = inst.node_features(i);
            for (c, &r) in p.iter().enumerate() {
                for (g, &x) in gu[c * f1..(c + 1) * f1].iter_mut().zip(phi) {
                    *g += r * x;
                }
            }
            for &(j, e) in inst.graph.neighbors(i) {
                let Some(yj) = d.observed[j] else { continue };
                let phi = inst.edge_features(e);
                let i_first = inst.graph.edges()[e].0 == i;
                for (c, &r) in p.iter().enumerate() {
                    let ab = if i_first { c * m + yj } else { yj * m + c };
                    for (g, &x) in gp[ab * f2..(ab + 1) * f2].iter_mut().zip(phi) {
                        *g += r * x;
                    }
                }
            }
        }
    }
    let mut gradient = model.fold_gradient(&gu, &gp);
    add_l2(model, l2, &mut value, &mut gradient);
    Ok(CrfObjective {
        value,
        gradient,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrfObjectiveKind {
    MleBp,
    PseudoLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentHandling {
    /// Keep unlabeled nodes and sum them out of both partition functions.
    Marginalize,
    /// Train on the subgraph induced by labeled nodes.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfTrainConfig {
    pub objective: CrfObjectiveKind,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub latent: LatentHandling,
    pub tied: bool,
    pub engine: MarginalEngine,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        Self {
            objective: CrfObjectiveKind::MleBp,
            l2: 1e-2,
            max_iters: 200,
            tol: 1e-5,
            latent: LatentHandling::Marginalize,
            tied: false,
            engine: MarginalEngine::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrfFit {
    pub model: CrfModel,
    pub trace: DescentTrace,
    /// False if any BP run during training stopped before converging.
    pub bp_converged: bool,
}

/// Fits CRF weights from zero by gradient descent on the chosen objective.
/// Pseudo-likelihood always uses the observed subgraphs. Under MLE, trial
/// steps at which the estimated negative log-likelihood of the observed
/// labels drops below zero are rejected.
pub fn train_crf(data: &[CrfData], n_classes: usize, cfg: &CrfTrainConfig) -> Result<CrfFit> {
    if !(cfg.l2 >= 0.0) || !cfg.l2.is_finite() || cfg.max_iters == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid CRF training configuration {cfg:?}")));
    }
    let first = data
        .first()
        .ok_or_else(|| Error::Data("no training instances".into()))?;
    let f1 = first.instance.n_unary_features;
    let f2 = first.instance.n_pair_features();
    let drop = cfg.objective == CrfObjectiveKind::PseudoLikelihood || cfg.latent == LatentHandling::Drop;
    let owned: Vec<CrfData>;
    let data = if drop {
        owned = data.iter().map(CrfData::observed_subgraph).collect::<Result<_>>()?;
        &owned[..]
    } else {
        data
    };
    if data.iter().all(|d| d.n_observed() == 0) {
        return Err(Error::Data("no observed nodes in the training data".into()));
    }
    let mut model = CrfModel::zeros(n_classes, f1, f2, cfg.tied);
    for d in data {
        check_dims(&model, &d.instance)?;
    }
    let mut warm: Vec<WarmPair> = vec![(None, None); data.len()];
    let mut bp_converged = true;
    let opts = DescentOptions {
        max_iters: cfg.max_iters,
        grad_tol: cfg.tol,
    };
    let init = model.params();
    let mut scratch = model.clone();
    let trace = gradient_descent(
        |theta| {
            scratch.set_params(theta)?;
            let obj = match cfg.objective {
                CrfObjectiveKind::MleBp => negll_warm(&scratch, data, cfg.l2, cfg.engine, &mut warm)?,
                CrfObjectiveKind::PseudoLikelihood => pseudo_likelihood_negll_and_grad(&scratch, data, cfg.l2)?,
            };
            bp_converged &= obj.converged;
            let data_term = obj.value - 0.5 * cfg.l2 * theta.iter().map(|t| t * t).sum::<f64>();
            if cfg.objective == CrfObjectiveKind::MleBp && data_term < 0.0 {
                // -ln p(observed) is never negative; the Bethe estimate has
                // broken down, so make the line search back off
                return Ok((f64::INFINITY, obj.gradient));
            }
            Ok((obj.value, obj.gradient))
        },
        init,
        opts,
    )?;
    model.set_params(&trace.params)?;
    Ok(CrfFit {
        model,
        trace,
        bp_converged,
    })
}

/// Sum-product marginals and their per-node argmax.
pub fn crf_predict(model: &CrfModel, inst: &CrfInstance, engine: MarginalEngine) -> Result<(Labeling, Marginals)> {
    let energy = crf_energy_model(model, inst)?;
    let (marginals, _) = marginals_of(&energy, engine, &mut None)?;
    Ok((marginals.argmax(), marginals))
}

pub const CRF_FORMAT_VERSION: u32 = 1;

/// Writes the model as a text header plus an `f64` blob (unary then full
/// pairwise weights).
pub fn save_crf(model: &CrfModel, l2: f64, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let raw = io::raw_path_for(header_path);
    let mut header = Header::new();
    header
        .set("kind", "crf")
        .set("version", CRF_FORMAT_VERSION)
        .set("classes", model.n_classes)
        .set("unary_features", model.unary_features)
        .set("pair_features", model.pair_features)
        .set("tied", model.tied)
        .set("l2", l2)
        .set("dtype", "f64")
        .set("data", io::relative_name(&raw));
    let mut values = model.unary.clone();
    values.extend_from_slice(&model.pairwise);
    io::write_f64_le(&raw, values)?;
    header.write(header_path)
}

/// Reads a model written by [`save_crf`]; returns it with its `l2`.
pub fn load_crf(header_path: impl AsRef<Path>) -> Result<(CrfModel, f64)> {
    let header_path = header_path.as_ref();
    let header = Header::read(header_path)?;
    header.expect("kind", "crf")?;
    let version = header.require_usize("version")?;
    if version != CRF_FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported CRF format version {version}")));
    }
    header.expect("dtype", "f64")?;
    let m = header.require_usize("classes")?;
    let f1 = header.require_usize("unary_features")?;
    let f2 = header.require_usize("pair_features")?;
    let tied = match header.require("tied")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Format(format!("tied must be true or false, got {other}"))),
    };
    let l2 = header.require_f64("l2")?;
    let values = io::read_f64_le(&header.data_path(header_path)?, m * f1 + m * m * f2)?;
    let (u, p) = values.split_at(m * f1);
    Ok((CrfModel::new(m, f1, f2, tied, u.to_vec(), p.to_vec())?, l2))
}
