//! Adam optimization and the two-stage training driver.
//!
//! Stage I trains FNet and IFNet jointly on the inverse-fusion
//! reconstruction loss; stage II resumes the FNet from stage I and trains
//! it alone on the fusion loss. Training is a pure function of
//! (data, initial parameters, config.seed): batch sampling, crops, and
//! flips are drawn sequentially from one seeded stream, and every
//! parallel reduction happens in a fixed order.

use crate::autodiff::{
    register_fnet, register_ifnet, tape_fnet_forward, tape_ifnet_forward, write_fnet,
    write_ifnet, FNetIds, GradientTape, Gradients, IFNetIds, ParamRegistry,
};
use crate::error::{Error, Result};
use crate::fnet::FNetParams;
use crate::ifnet::IFNetParams;
use crate::loss::{tape_loss_stage1, tape_loss_stage2};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Adam with bias correction; the schedule constraints hold after every
/// step because only raw (reparameterized) scalars are updated.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(reg: &ParamRegistry, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Gradients::zeros_like(reg),
            v: Gradients::zeros_like(reg),
        }
    }

    /// One bias-corrected update of every parameter in the registry.
    pub fn step(&mut self, reg: &mut ParamRegistry, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let update = |m: &mut f64, v: &mut f64, g: f64, p: &mut f64| {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        };
        for kid in 0..reg.kernel_count() {
            let weights = reg.kernel_mut(kid).weights_mut();
            for (w, (m, (v, g))) in weights.iter_mut().zip(
                self.m.kernels[kid]
                    .iter_mut()
                    .zip(self.v.kernels[kid].iter_mut().zip(&grads.kernels[kid])),
            ) {
                update(m, v, *g, w);
            }
        }
        for sid in 0..reg.scalar_count() {
            let mut p = reg.scalar(sid);
            update(
                &mut self.m.scalars[sid],
                &mut self.v.scalars[sid],
                grads.scalars[sid],
                &mut p,
            );
            *reg.scalar_mut(sid) = p;
        }
        Ok(())
    }
}

/// Training stage selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
    Both,
}

/// Hyperparameters of one training run. Paper-scale defaults; desk-scale
/// test runs override iterations, batch, and crop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub crop_size: usize,
    pub lr: f64,
    /// Loss weights of the stage-II objective.
    pub loss_beta1: f64,
    pub loss_beta2: f64,
    pub loss_beta3: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20_000,
            batch_size: 16,
            crop_size: 128,
            lr: 1e-4,
            loss_beta1: 20.0,
            loss_beta2: 20.0,
            loss_beta3: 15.0,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParam(
                "iterations and batch_size must be positive".into(),
            ));
        }
        if self.crop_size < crate::loss::SSIM_WINDOW {
            return Err(Error::InvalidParam(format!(
                "crop_size {} below the ssim window {}",
                self.crop_size,
                crate::loss::SSIM_WINDOW
            )));
        }
        Ok(())
    }
}

/// Aligned image pairs for training.
#[derive(Debug, Clone, Default)]
pub struct PairDataset {
    pairs: Vec<(Tensor, Tensor)>,
}

impl PairDataset {
    pub fn new(pairs: Vec<(Tensor, Tensor)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParam("empty dataset".into()));
        }
        for (i, (a, b)) in pairs.iter().enumerate() {
            if a.channels() != 1 || b.channels() != 1 {
                return Err(Error::InvalidParam(format!("pair {}: not single-channel", i)));
            }
            if !a.same_shape(b) {
                return Err(Error::InvalidParam(format!(
                    "pair {}: sizes {:?} vs {:?}",
                    i,
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(PairDataset { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, i: usize) -> (&Tensor, &Tensor) {
        let (a, b) = &self.pairs[i];
        (a, b)
    }

    pub fn pairs(&self) -> &[(Tensor, Tensor)] {
        &self.pairs
    }
}

/// One row of the loss log. The ssim column is zero in stage I, which has
/// no ssim component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub iteration: usize,
    pub total: f64,
    pub intensity: f64,
    pub gradient: f64,
    pub ssim: f64,
}

/// Serializes a loss log with columns (iteration, total, breakdown).
pub fn loss_log_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("iteration,total,intensity,gradient,ssim\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.iteration, r.total, r.intensity, r.gradient, r.ssim
        ));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub intensity: f64,
    pub gradient: f64,
    pub ssim: f64,
}

/// Loss breakdown, optional gradients, and the kink-pattern signature of
/// one forward pass.
pub type EvalOutput = (LossBreakdown, Option<Gradients>, Vec<u64>);

/// One stage-I forward (and optionally backward) pass for a single pair.
/// The signature vector fingerprints the kink pattern of the non-smooth
/// ops for finite-difference harnesses.
pub fn stage1_eval(
    reg: &ParamRegistry,
    fids: &FNetIds,
    iids: &IFNetIds,
    i1: &Tensor,
    i2: &Tensor,
    with_grads: bool,
) -> Result<EvalOutput> {
    let mut tape = GradientTape::new(reg);
    let n1 = tape.leaf(i1.clone());
    let n2 = tape.leaf(i2.clone());
    let fusion = tape_fnet_forward(&mut tape, n1, n2, fids)?;
    let (r1, r2) = tape_ifnet_forward(&mut tape, fusion.fused, iids)?;
    let terms = tape_loss_stage1(&mut tape, r1, r2, i1, i2)?;
    let breakdown = LossBreakdown {
        total: terms.total,
        intensity: terms.intensity,
        gradient: terms.gradient,
        ssim: 0.0,
    };
    let grads = if with_grads {
        Some(tape.backward(&terms.seeds)?.grads)
    } else {
        None
    };
    Ok((breakdown, grads, tape.signature().to_vec()))
}

/// One stage-II forward (and optionally backward) pass for a single pair.
pub fn stage2_eval(
    reg: &ParamRegistry,
    fids: &FNetIds,
    i1: &Tensor,
    i2: &Tensor,
    betas: (f64, f64, f64),
    with_grads: bool,
) -> Result<EvalOutput> {
    let mut tape = GradientTape::new(reg);
    let n1 = tape.leaf(i1.clone());
    let n2 = tape.leaf(i2.clone());
    let fusion = tape_fnet_forward(&mut tape, n1, n2, fids)?;
    let terms = tape_loss_stage2(&mut tape, fusion.fused, i1, i2, betas)?;
    let breakdown = LossBreakdown {
        total: terms.total,
        intensity: terms.intensity,
        gradient: terms.gradient,
        ssim: terms.ssim_term,
    };
    let grads = if with_grads {
        Some(tape.backward(&terms.seeds)?.grads)
    } else {
        None
    };
    Ok((breakdown, grads, tape.signature().to_vec()))
}

/// Samples a batch of aligned crops with identical flips per pair. All
/// randomness is drawn sequentially here so the parallel forward passes
/// below cannot affect determinism.
fn prepare_batch(
    data: &PairDataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Tensor, Tensor)>> {
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let idx = rng.gen_range(0..data.len());
        let (a, b) = data.get(idx);
        let ch = cfg.crop_size.min(a.height());
        let cw = cfg.crop_size.min(a.width());
        let y0 = rng.gen_range(0..=a.height() - ch);
        let x0 = rng.gen_range(0..=a.width() - cw);
        let mut ia = a.crop(y0, x0, ch, cw)?;
        let mut ib = b.crop(y0, x0, ch, cw)?;
        if rng.gen_bool(0.5) {
            ia = ia.flip_horizontal();
            ib = ib.flip_horizontal();
        }
        if rng.gen_bool(0.5) {
            ia = ia.flip_vertical();
            ib = ib.flip_vertical();
        }
        batch.push((ia, ib));
    }
    Ok(batch)
}

#[cfg(feature = "parallel")]
fn map_batch<R: Send>(
    batch: &[(Tensor, Tensor)],
    f: impl Fn(&Tensor, &Tensor) -> Result<R> + Sync,
) -> Vec<Result<R>> {
    use rayon::prelude::*;
    batch.par_iter().map(|(a, b)| f(a, b)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_batch<R: Send>(
    batch: &[(Tensor, Tensor)],
    f: impl Fn(&Tensor, &Tensor) -> Result<R> + Sync,
) -> Vec<Result<R>> {
    batch.iter().map(|(a, b)| f(a, b)).collect()
}

/// Mean of per-element losses and gradients, reduced in batch order.
fn reduce_batch(
    reg: &ParamRegistry,
    results: Vec<Result<EvalOutput>>,
    iteration: usize,
) -> Result<(LossBreakdown, Gradients)> {
    let n = results.len() as f64;
    let mut grads = Gradients::zeros_like(reg);
    let mut loss = LossBreakdown {
        total: 0.0,
        intensity: 0.0,
        gradient: 0.0,
        ssim: 0.0,
    };
    for r in results {
        let (b, g, _) = r?;
        loss.total += b.total / n;
        loss.intensity += b.intensity / n;
        loss.gradient += b.gradient / n;
        loss.ssim += b.ssim / n;
        grads.add_scaled(&g.expect("gradients requested"), 1.0 / n);
    }
    if !loss.total.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss at iteration {}",
            iteration
        )));
    }
    Ok((loss, grads))
}

fn checkpoint(
    cfg: &TrainConfig,
    iteration: usize,
    fnet: &FNetParams,
    ifnet: Option<&IFNetParams>,
    stage: &str,
) -> Result<()> {
    if cfg.checkpoint_every == 0 || !(iteration + 1).is_multiple_of(cfg.checkpoint_every) {
        return Ok(());
    }
    let Some(dir) = &cfg.checkpoint_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("checkpoint_{}_{:06}.lzsc", stage, iteration + 1));
    crate::weights::save_weights(fnet, ifnet, &path)
}

pub struct Stage1Result {
    pub fnet: FNetParams,
    pub ifnet: IFNetParams,
    pub log: Vec<LossRow>,
}

/// Trains FNet and IFNet jointly: forward FNet then IFNet, reconstruction
/// loss against the original sources, Adam on everything.
pub fn train_stage1(
    data: &PairDataset,
    fnet: FNetParams,
    ifnet: IFNetParams,
    cfg: &TrainConfig,
) -> Result<Stage1Result> {
    cfg.validate()?;
    let mut fnet = fnet;
    let mut ifnet = ifnet;
    let mut reg = ParamRegistry::new();
    let fids = register_fnet(&mut reg, &fnet);
    let iids = register_ifnet(&mut reg, &ifnet);
    let mut adam = AdamState::new(&reg, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let batch = prepare_batch(data, cfg, &mut rng)?;
        let results = map_batch(&batch, |a, b| stage1_eval(&reg, &fids, &iids, a, b, true));
        let (loss, grads) = reduce_batch(&reg, results, it)?;
        adam.step(&mut reg, &grads)?;
        log.push(LossRow {
            iteration: it,
            total: loss.total,
            intensity: loss.intensity,
            gradient: loss.gradient,
            ssim: loss.ssim,
        });
        if cfg.checkpoint_every > 0 {
            write_fnet(&reg, &fids, &mut fnet);
            write_ifnet(&reg, &iids, &mut ifnet);
            checkpoint(cfg, it, &fnet, Some(&ifnet), "stage1")?;
        }
    }
    write_fnet(&reg, &fids, &mut fnet);
    write_ifnet(&reg, &iids, &mut ifnet);
    Ok(Stage1Result { fnet, ifnet, log })
}

pub struct Stage2Result {
    pub fnet: FNetParams,
    pub log: Vec<LossRow>,
}

/// Trains FNet alone on the fusion loss; the inverse network is untouched.
pub fn train_stage2(data: &PairDataset, fnet: FNetParams, cfg: &TrainConfig) -> Result<Stage2Result> {
    cfg.validate()?;
    let mut fnet = fnet;
    let mut reg = ParamRegistry::new();
    let fids = register_fnet(&mut reg, &fnet);
    let mut adam = AdamState::new(&reg, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);
    let betas = (cfg.loss_beta1, cfg.loss_beta2, cfg.loss_beta3);

    for it in 0..cfg.iterations {
        let batch = prepare_batch(data, cfg, &mut rng)?;
        let results = map_batch(&batch, |a, b| stage2_eval(&reg, &fids, a, b, betas, true));
        let (loss, grads) = reduce_batch(&reg, results, it)?;
        adam.step(&mut reg, &grads)?;
        log.push(LossRow {
            iteration: it,
            total: loss.total,
            intensity: loss.intensity,
            gradient: loss.gradient,
            ssim: loss.ssim,
        });
        if cfg.checkpoint_every > 0 {
            write_fnet(&reg, &fids, &mut fnet);
            checkpoint(cfg, it, &fnet, None, "stage2")?;
        }
    }
    write_fnet(&reg, &fids, &mut fnet);
    Ok(Stage2Result { fnet, log })
}
