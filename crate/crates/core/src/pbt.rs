//! Population-based training over `(theta, eta, lambda2)`.
//!
//! Each generation trains every candidate with NAdam (step size `eta`) then
//! L-BFGS on its composite loss, scores it by validation MSE, keeps the top
//! half and refills the bottom half with perturbed clones of the survivors.
//! All randomness is drawn from generators seeded by `(master_seed, ...)` so
//! results do not depend on evaluation order or thread count.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gru::{forward, init_params, GruParams};
use crate::loss::{self, data_loss, LossBreakdown, LossWeights, Problem};
use crate::math::ln;
use crate::optim::{lbfgs_run, nadam_run, LbfgsConfig, NadamConfig, Objective, StepRecord};
use crate::{Error, Result};

/// One population member.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub theta: Vec<f64>,
    pub eta: f64,
    pub lambda2: f64,
    pub seed: u64,
    /// `None` until evaluated; `+inf` for a failed candidate.
    pub val_loss: Option<f64>,
}

impl Candidate {
    fn rank_key(&self) -> f64 {
        match self.val_loss {
            Some(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationConfig {
    /// Population size `M`; must be even.
    pub population: usize,
    pub generations: usize,
    pub hidden: usize,
    pub inner_nadam_steps: usize,
    pub inner_lbfgs_iters: usize,
    pub lbfgs_grad_tol: f64,
    /// Scale of the Gaussian noise added to cloned parameters.
    pub epsilon: f64,
    pub scale_range: (f64, f64),
    /// Log-uniform range of initial learning rates.
    pub eta_range: (f64, f64),
    /// Uniform range of initial physics weights.
    pub lambda2_range: (f64, f64),
    pub master_seed: u64,
    pub nadam: NadamConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            population: 8,
            generations: 10,
            hidden: 8,
            inner_nadam_steps: 200,
            inner_lbfgs_iters: 20,
            lbfgs_grad_tol: 1e-6,
            epsilon: 0.01,
            scale_range: (0.8, 1.2),
            eta_range: (1e-4, 1e-1),
            lambda2_range: (0.01, 1.0),
            master_seed: 0,
            nadam: NadamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.population < 2 || self.population % 2 != 0 {
            return bad("population size must be even and at least 2");
        }
        if self.generations == 0 {
            return bad("generations must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden size must be at least 1");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo < hi) {
            return bad("scale range must satisfy 0 < low < high");
        }
        let (elo, ehi) = self.eta_range;
        if !(elo > 0.0 && elo <= ehi) {
            return bad("eta range must be positive and ordered");
        }
        let (llo, lhi) = self.lambda2_range;
        if !(llo >= 0.0 && llo <= lhi) {
            return bad("lambda2 range must be non-negative and ordered");
        }
        if !(self.lbfgs_grad_tol > 0.0) {
            return bad("lbfgs_grad_tol must be positive");
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over a sequence of words.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut x = master ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        x = x.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

const TAG_INIT: u64 = 1;
const TAG_CLONE: u64 = 2;

/// `M` fresh candidates: GRU weights from [`init_params`] with a per-candidate
/// seed, `eta` log-uniform and `lambda2` uniform over their configured ranges.
pub fn init_population(config: &PopulationConfig, input_dim: usize, hidden: usize) -> Result<Vec<Candidate>> {
    config.validate()?;
    (0..config.population)
        .map(|k| {
            let seed = derive_seed(config.master_seed, &[TAG_INIT, k as u64]);
            let theta = init_params(input_dim, hidden, seed)?.into_theta();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
            let (elo, ehi) = config.eta_range;
            let log_eta = Uniform::new_inclusive(ln(elo), ln(ehi)).map_err(|_| Error::InvalidInput("eta range".into()))?;
            let eta = libm::exp(log_eta.sample(&mut rng));
            let (llo, lhi) = config.lambda2_range;
            let lam = Uniform::new_inclusive(llo, lhi).map_err(|_| Error::InvalidInput("lambda2 range".into()))?;
            Ok(Candidate { theta, eta, lambda2: lam.sample(&mut rng), seed, val_loss: None })
        })
        .collect()
}

/// What happened while evaluating one candidate in one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLog {
    pub generation: usize,
    pub index: usize,
    pub steps: Vec<StepRecord>,
    /// Training-window breakdown after the inner optimization.
    pub breakdown: Option<LossBreakdown>,
    pub val_loss: f64,
    pub failed: bool,
}

/// Loss and gradient of a GRU on one problem, as an [`Objective`].
pub struct GruObjective<'a> {
    pub input_dim: usize,
    pub hidden: usize,
    pub problem: Problem<'a>,
    pub weights: LossWeights,
}

impl Objective for GruObjective<'_> {
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = GruParams::from_theta(self.input_dim, self.hidden, theta.to_vec())?;
        loss::value_and_grad(&p, &self.problem, &self.weights)
    }

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        let p = GruParams::from_theta(self.input_dim, self.hidden, theta.to_vec())?;
        loss::value(&p, &self.problem, &self.weights)
    }
}

/// Data-only MSE of `params` on `problem`'s window.
pub fn validation_mse(params: &GruParams, problem: &Problem<'_>) -> Result<f64> {
    let tr = forward(params, problem.inputs)?;
    let w = problem.window;
    data_loss(&tr.f[w.range()], &problem.targets[w.range()])
}

/// Everything a candidate evaluation needs; shared read-only across threads.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSetup<'a> {
    pub train: Problem<'a>,
    pub val: Problem<'a>,
    pub input_dim: usize,
    /// `lambda1` and scope; `lambda2` comes from each candidate.
    pub weights: LossWeights,
    pub config: PopulationConfig,
}

impl TrainingSetup<'_> {
    fn weights_for(&self, c: &Candidate) -> LossWeights {
        LossWeights { lambda2: c.lambda2, ..self.weights }
    }

    /// Train `cand` with NAdam then L-BFGS and score it on validation MSE.
    /// A candidate whose training or scoring fails keeps its input `theta`
    /// and gets `val_loss = +inf`.
    pub fn evaluate(&self, generation: usize, index: usize, cand: Candidate) -> (Candidate, CandidateLog) {
        let mut steps = Vec::new();
        let outcome = self.train(&cand, &mut steps);
        let mut log = CandidateLog { generation, index, steps, breakdown: None, val_loss: f64::INFINITY, failed: true };
        match outcome {
            Ok((theta, breakdown, val)) if val.is_finite() => {
                log.breakdown = Some(breakdown);
                log.val_loss = val;
                log.failed = false;
                (Candidate { theta, val_loss: Some(val), ..cand }, log)
            }
            _ => (Candidate { val_loss: Some(f64::INFINITY), ..cand }, log),
        }
    }

    /// Inner optimization of one candidate at its own `eta` and `lambda2`.
    /// Returns the trained `theta`, its training breakdown and validation MSE.
    pub fn train(&self, cand: &Candidate, steps: &mut Vec<StepRecord>) -> Result<(Vec<f64>, LossBreakdown, f64)> {
        let cfg = &self.config;
        let weights = self.weights_for(cand);
        let mut obj = GruObjective { input_dim: self.input_dim, hidden: cfg.hidden, problem: self.train, weights };
        let mut theta = cand.theta.clone();
        let mut sink = |r: &StepRecord| steps.push(*r);
        if cfg.inner_nadam_steps > 0 {
            let nadam = NadamConfig { alpha: cand.eta, ..cfg.nadam };
            theta = nadam_run(&mut obj, &theta, cfg.inner_nadam_steps, nadam, &mut sink)?;
        }
        if cfg.inner_lbfgs_iters > 0 {
            theta = lbfgs_run(&mut obj, &theta, cfg.inner_lbfgs_iters, cfg.lbfgs_grad_tol, cfg.lbfgs, &mut sink)?.theta;
        }
        let params = GruParams::from_theta(self.input_dim, cfg.hidden, theta)?;
        let breakdown = loss::total_loss(&params, &self.train, &weights)?;
        let val = validation_mse(&params, &self.val)?;
        Ok((params.into_theta(), breakdown, val))
    }
}

/// Runs one generation's evaluations. Implementations must return results in
/// candidate index order.
pub trait Evaluator {
    fn evaluate_population(
        &self,
        setup: &TrainingSetup<'_>,
        generation: usize,
        population: Vec<Candidate>,
    ) -> Vec<(Candidate, CandidateLog)>;
}

/// Evaluates candidates one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialEvaluator;

impl Evaluator for SerialEvaluator {
    fn evaluate_population(
        &self,
        setup: &TrainingSetup<'_>,
        generation: usize,
        population: Vec<Candidate>,
    ) -> Vec<(Candidate, CandidateLog)> {
        population.into_iter().enumerate().map(|(i, c)| setup.evaluate(generation, i, c)).collect()
    }
}

fn rank(population: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        population[a].rank_key().partial_cmp(&population[b].rank_key()).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    order
}

/// Keep the best `M/2` (ascending validation loss, ties by index) in rank
/// order and fill slot `i >= M/2` with a perturbed clone of survivor
/// `i mod M/2`.
pub fn select_and_perturb(population: &[Candidate], config: &PopulationConfig, generation: usize) -> Vec<Candidate> {
    let m = population.len();
    let half = m / 2;
    let order = rank(population);
    let mut next: Vec<Candidate> = order[..half].iter().map(|&i| population[i].clone()).collect();
    let (lo, hi) = config.scale_range;
    let scale = Uniform::new(lo, hi).expect("validated scale range");
    for slot in half..m {
        let parent = &next[slot % half];
        let seed = derive_seed(config.master_seed, &[TAG_CLONE, generation as u64, slot as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = parent
            .theta
            .iter()
            .map(|&v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                v + config.epsilon * n
            })
            .collect();
        let eta = parent.eta * scale.sample(&mut rng);
        let lambda2 = parent.lambda2 * scale.sample(&mut rng);
        next.push(Candidate { theta, eta, lambda2, seed, val_loss: None });
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSummary {
    pub generation: usize,
    /// Best validation loss seen up to and including this generation.
    pub best_val: f64,
    pub median_val: f64,
    pub best_eta: f64,
    pub best_lambda2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbtOutcome {
    pub best: Candidate,
    pub history: Vec<GenerationSummary>,
    /// Per-candidate logs ordered by `(generation, index)`.
    pub logs: Vec<CandidateLog>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Full population-based training loop.
pub fn run(setup: &TrainingSetup<'_>, evaluator: &dyn Evaluator) -> Result<PbtOutcome> {
    let cfg = &setup.config;
    cfg.validate()?;
    if !(setup.weights.lambda1 >= 0.0 && setup.weights.lambda1.is_finite()) {
        return Err(Error::InvalidInput("lambda1 must be finite and non-negative".into()));
    }
    let mut population = init_population(cfg, setup.input_dim, cfg.hidden)?;
    let mut best: Option<Candidate> = None;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut logs = Vec::new();
    for generation in 0..cfg.generations {
        let evaluated = evaluator.evaluate_population(setup, generation, population);
        if evaluated.len() != cfg.population {
            return Err(Error::InvalidInput("evaluator changed the population size".into()));
        }
        let (evaluated, gen_logs): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
        logs.extend(gen_logs);
        if evaluated.iter().all(|c| !c.rank_key().is_finite()) {
            return Err(Error::AllCandidatesFailed { generation });
        }
        let top = &evaluated[rank(&evaluated)[0]];
        if best.as_ref().is_none_or(|b| top.rank_key() < b.rank_key()) {
            best = Some(top.clone());
        }
        let b = best.as_ref().expect("set above");
        let mut vals: Vec<f64> = evaluated.iter().map(Candidate::rank_key).collect();
        history.push(GenerationSummary {
            generation,
            best_val: b.rank_key(),
            median_val: median(&mut vals),
            best_eta: b.eta,
            best_lambda2: b.lambda2,
        });
        population = if generation + 1 < cfg.generations {
            select_and_perturb(&evaluated, cfg, generation)
        } else {
            evaluated
        };
    }
    Ok(PbtOutcome { best: best.expect("at least one generation"), history, logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg(m: usize) -> PopulationConfig {
        PopulationConfig { population: m, hidden: 2, ..Default::default() }
    }

    fn cand(v: f64, eta: f64) -> Candidate {
        Candidate { theta: vec![v; 3], eta, lambda2: 0.5, seed: 0, val_loss: Some(v) }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_population(&cfg(4), 2, 2).unwrap();
        assert_eq!(a, init_population(&cfg(4), 2, 2).unwrap());
        assert_eq!(a.len(), 4);
        let mut seeds: Vec<u64> = a.iter().map(|c| c.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 4);
        for c in &a {
            assert!((1e-4..=1e-1).contains(&c.eta));
            assert!((0.01..=1.0).contains(&c.lambda2));
            assert!(c.val_loss.is_none());
        }
    }

    #[test]
    fn odd_population_rejected() {
        assert!(init_population(&cfg(3), 2, 2).is_err());
    }

    #[test]
    fn selection_keeps_top_half() {
        let pop = vec![cand(0.3, 0.03), cand(0.1, 0.01), cand(0.4, 0.04), cand(0.2, 0.02)];
        let next = select_and_perturb(&pop, &cfg(4), 0);
        assert_eq!(next.len(), 4);
        assert_eq!(next[0], pop[1]);
        assert_eq!(next[1], pop[3]);
        // slot 2 clones survivor 0 (val 0.1), slot 3 clones survivor 1 (val 0.2)
        assert!((0.008..=0.012).contains(&next[2].eta));
        assert!((0.016..=0.024).contains(&next[3].eta));
        assert!((0.4..=0.6).contains(&next[2].lambda2));
        assert!(next[2].val_loss.is_none());
    }

    #[test]
    fn zero_epsilon_clones_theta() {
        let pop = vec![cand(0.1, 0.01), cand(0.2, 0.02)];
        let c = PopulationConfig { epsilon: 0.0, ..cfg(2) };
        let next = select_and_perturb(&pop, &c, 3);
        assert_eq!(next[1].theta, pop[0].theta);
    }

    #[test]
    fn failed_candidates_rank_last() {
        let mut bad = cand(0.0, 0.01);
        bad.val_loss = Some(f64::INFINITY);
        let pop = vec![bad, cand(5.0, 0.02)];
        let next = select_and_perturb(&pop, &cfg(2), 0);
        assert_eq!(next[0], pop[1]);
    }

    #[test]
    fn perturbation_depends_only_on_seed_inputs() {
        let pop = vec![cand(0.1, 0.01), cand(0.2, 0.02), cand(0.3, 0.03), cand(0.4, 0.04)];
        assert_eq!(select_and_perturb(&pop, &cfg(4), 2), select_and_perturb(&pop, &cfg(4), 2));
        assert_ne!(select_and_perturb(&pop, &cfg(4), 2), select_and_perturb(&pop, &cfg(4), 3));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
