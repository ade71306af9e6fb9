//! Reverse-mode differentiation over the fixed network graphs.
//!
//! A [`GradientTape`] records one forward pass as a sequence of operations
//! over tensor nodes and replays it in reverse to accumulate parameter
//! gradients. Parameters live in a [`ParamRegistry`] keyed by the same
//! canonical names the weight archive uses; the learned schedule scalars
//! participate through dedicated momentum/threshold ops that chain their
//! derivatives through the softplus reparameterizations.

use crate::error::{Error, Result};
use crate::fnet::FNetParams;
use crate::ifnet::IFNetParams;
use crate::lzsc::ScheduleParams;
use crate::tensor::{
    channel_concat, channel_split, conv2d_grad_input, conv2d_grad_weights, conv2d_same,
    ConvKernel, Tensor,
};
use crate::threshold::{sigmoidal, sigmoidal_partials, SigmoidalParams};
use std::collections::HashMap;

pub type NodeId = usize;
pub type KernelId = usize;
pub type ScalarId = usize;

/// Flat registry of every trainable parameter: convolution kernels and the
/// raw schedule scalars, each with its canonical name and a matching slot
/// in [`Gradients`].
#[derive(Debug, Clone, Default)]
pub struct ParamRegistry {
    kernel_names: Vec<String>,
    kernels: Vec<ConvKernel>,
    scalar_names: Vec<String>,
    scalars: Vec<f64>,
    kernel_index: HashMap<String, KernelId>,
    scalar_index: HashMap<String, ScalarId>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        ParamRegistry::default()
    }

    pub fn add_kernel(&mut self, name: impl Into<String>, k: ConvKernel) -> KernelId {
        let name = name.into();
        let id = self.kernels.len();
        assert!(
            self.kernel_index.insert(name.clone(), id).is_none(),
            "duplicate kernel {}",
            name
        );
        self.kernel_names.push(name);
        self.kernels.push(k);
        id
    }

    pub fn add_scalar(&mut self, name: impl Into<String>, v: f64) -> ScalarId {
        let name = name.into();
        let id = self.scalars.len();
        assert!(
            self.scalar_index.insert(name.clone(), id).is_none(),
            "duplicate scalar {}",
            name
        );
        self.scalar_names.push(name);
        self.scalars.push(v);
        id
    }

    pub fn kernel(&self, id: KernelId) -> &ConvKernel {
        &self.kernels[id]
    }

    pub fn kernel_mut(&mut self, id: KernelId) -> &mut ConvKernel {
        &mut self.kernels[id]
    }

    pub fn scalar(&self, id: ScalarId) -> f64 {
        self.scalars[id]
    }

    pub fn scalar_mut(&mut self, id: ScalarId) -> &mut f64 {
        &mut self.scalars[id]
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn scalar_count(&self) -> usize {
        self.scalars.len()
    }

    pub fn kernel_name(&self, id: KernelId) -> &str {
        &self.kernel_names[id]
    }

    pub fn scalar_name(&self, id: ScalarId) -> &str {
        &self.scalar_names[id]
    }

    pub fn schedule(&self, ids: SchedIds) -> ScheduleParams {
        ScheduleParams::from_raw(
            self.scalars[ids.w_theta_raw],
            self.scalars[ids.b_theta],
            self.scalars[ids.w_rho_raw],
            self.scalars[ids.b_rho],
        )
    }

    /// Total number of scalar degrees of freedom.
    pub fn dof(&self) -> usize {
        self.kernels.iter().map(|k| k.weights().len()).sum::<usize>() + self.scalars.len()
    }
}

/// Gradient accumulators aligned with a [`ParamRegistry`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub kernels: Vec<Vec<f64>>,
    pub scalars: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(reg: &ParamRegistry) -> Self {
        Gradients {
            kernels: reg.kernels.iter().map(|k| vec![0.0; k.weights().len()]).collect(),
            scalars: vec![0.0; reg.scalars.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (mine, theirs) in self.kernels.iter_mut().zip(&other.kernels) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += factor * b;
            }
        }
        for (a, b) in self.scalars.iter_mut().zip(&other.scalars) {
            *a += factor * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.kernels.iter().flatten().all(|v| v.is_finite())
            && self.scalars.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        let k = self
            .kernels
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        self.scalars.iter().map(|v| v.abs()).fold(k, f64::max)
    }
}

/// Scalar ids of one block's schedule parameters.
#[derive(Debug, Clone, Copy)]
pub struct SchedIds {
    pub w_theta_raw: ScalarId,
    pub b_theta: ScalarId,
    pub w_rho_raw: ScalarId,
    pub b_rho: ScalarId,
}

#[derive(Debug)]
enum Op {
    Leaf,
    ConvParam { input: NodeId, kernel: KernelId },
    ConvConst { input: NodeId, kernel: Box<ConvKernel> },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    MulElem { a: NodeId, b: NodeId },
    DivElem { a: NodeId, b: NodeId },
    Square { a: NodeId },
    ScaleShift { a: NodeId, scale: f64 },
    Abs { a: NodeId },
    Concat { a: NodeId, b: NodeId },
    Crop { a: NodeId, margin: usize },
    Momentum { r1: NodeId, r2: NodeId, inj: NodeId, sched: SchedIds, k: usize },
    SigThresh { x: NodeId, sched: SchedIds, k: usize },
    MeanAll { a: NodeId },
    SumAll { a: NodeId },
}

/// Records the forward graph of one training step; replaying it backward
/// accumulates parameter gradients into a [`Gradients`] aligned with the
/// registry.
pub struct GradientTape<'r> {
    reg: &'r ParamRegistry,
    values: Vec<Tensor>,
    ops: Vec<Op>,
    /// Kink-pattern counts (sign and clamp states of non-smooth ops) used
    /// by finite-difference harnesses to detect boundary crossings.
    signature: Vec<u64>,
}

impl<'r> GradientTape<'r> {
    pub fn new(reg: &'r ParamRegistry) -> Self {
        GradientTape {
            reg,
            values: Vec::new(),
            ops: Vec::new(),
            signature: Vec::new(),
        }
    }

    pub fn registry(&self) -> &ParamRegistry {
        self.reg
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }

    /// Value of a 1x1x1 scalar node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.values[id].len(), 1);
        self.values[id].data()[0]
    }

    pub fn signature(&self) -> &[u64] {
        &self.signature
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn conv_param(&mut self, input: NodeId, kernel: KernelId) -> Result<NodeId> {
        let out = conv2d_same(&self.values[input], self.reg.kernel(kernel))?;
        Ok(self.push(Op::ConvParam { input, kernel }, out))
    }

    pub fn conv_const(&mut self, input: NodeId, kernel: ConvKernel) -> Result<NodeId> {
        let out = conv2d_same(&self.values[input], &kernel)?;
        Ok(self.push(
            Op::ConvConst {
                input,
                kernel: Box::new(kernel),
            },
            out,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.values[a].add(&self.values[b])?;
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.values[a].sub(&self.values[b])?;
        Ok(self.push(Op::Sub { a, b }, out))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.values[a].zip_map(&self.values[b], |x, y| x * y)?;
        Ok(self.push(Op::MulElem { a, b }, out))
    }

    pub fn div_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.values[a].zip_map(&self.values[b], |x, y| x / y)?;
        Ok(self.push(Op::DivElem { a, b }, out))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a].map(|x| x * x);
        self.push(Op::Square { a }, out)
    }

    pub fn scale_shift(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.values[a].map(|x| scale * x + shift);
        self.push(Op::ScaleShift { a, scale }, out)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a].abs();
        let nonneg = self.values[a].data().iter().filter(|&&v| v >= 0.0).count() as u64;
        self.signature.push(nonneg);
        self.push(Op::Abs { a }, out)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = channel_concat(&self.values[a], &self.values[b])?;
        Ok(self.push(Op::Concat { a, b }, out))
    }

    pub fn crop(&mut self, a: NodeId, margin: usize) -> Result<NodeId> {
        let out = self.values[a].crop_border(margin)?;
        Ok(self.push(Op::Crop { a, margin }, out))
    }

    /// `inj + (1 + rho^k) r1 - rho^k r2` with the learned momentum weight.
    pub fn momentum(
        &mut self,
        r1: NodeId,
        r2: NodeId,
        inj: NodeId,
        sched: SchedIds,
        k: usize,
    ) -> Result<NodeId> {
        let rho = self.reg.schedule(sched).rho_k(k);
        if !self.values[r1].same_shape(&self.values[r2])
            || !self.values[r1].same_shape(&self.values[inj])
        {
            return Err(Error::contract("GradientTape::momentum", "shape mismatch"));
        }
        let mut out = self.values[inj].clone();
        for ((p, &a), &b) in out
            .data_mut()
            .iter_mut()
            .zip(self.values[r1].data())
            .zip(self.values[r2].data())
        {
            *p += (1.0 + rho) * a - rho * b;
        }
        Ok(self.push(Op::Momentum { r1, r2, inj, sched, k }, out))
    }

    /// Sigmoidal threshold with the learned theta^k.
    pub fn sig_thresh(&mut self, x: NodeId, sched: SchedIds, k: usize) -> Result<NodeId> {
        let theta = self.reg.schedule(sched).theta_k(k);
        let p = SigmoidalParams::solver(theta)?;
        let xv = &self.values[x];
        let out = xv.map(|v| sigmoidal(v, &p));
        // Pattern counts for kink detection: positives and exact zeros of
        // the output (covering both clamp and sign boundaries).
        let pos = xv.data().iter().filter(|&&v| v > 0.0).count() as u64;
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count() as u64;
        self.signature.push((pos << 24) | zeros);
        Ok(self.push(Op::SigThresh { x, sched, k }, out))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let m = self.values[a].mean();
        self.push(Op::MeanAll { a }, Tensor::from_vec(1, 1, 1, vec![m]).unwrap())
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.values[a].sum();
        self.push(Op::SumAll { a }, Tensor::from_vec(1, 1, 1, vec![s]).unwrap())
    }

    /// Replays the tape in reverse from the seeded scalar heads. Returns
    /// parameter gradients plus per-node gradients (for input-gradient
    /// checks).
    pub fn backward(&self, seeds: &[(NodeId, f64)]) -> Result<BackwardOutput> {
        let mut grads = Gradients::zeros_like(self.reg);
        let mut node_grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        for &(node, seed) in seeds {
            if self.values[node].len() != 1 {
                return Err(Error::contract(
                    "GradientTape::backward",
                    "seed node is not scalar",
                ));
            }
            match &mut node_grads[node] {
                Some(g) => g.data_mut()[0] += seed,
                slot => *slot = Some(Tensor::from_vec(1, 1, 1, vec![seed])?),
            }
        }

        fn acc(slot: &mut Option<Tensor>, add: Tensor) {
            match slot {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(add.data()) {
                        *a += *b;
                    }
                }
                None => *slot = Some(add),
            }
        }

        for i in (0..self.ops.len()).rev() {
            let Some(g) = node_grads[i].clone() else { continue };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::ConvParam { input, kernel } => {
                    let k = self.reg.kernel(*kernel);
                    acc(&mut node_grads[*input], conv2d_grad_input(&g, k)?);
                    let gw = conv2d_grad_weights(
                        &self.values[*input],
                        &g,
                        (k.out_channels(), k.in_channels(), k.kernel_h(), k.kernel_w()),
                    )?;
                    for (a, b) in grads.kernels[*kernel].iter_mut().zip(gw.weights()) {
                        *a += *b;
                    }
                }
                Op::ConvConst { input, kernel } => {
                    acc(&mut node_grads[*input], conv2d_grad_input(&g, kernel)?);
                }
                Op::Add { a, b } => {
                    acc(&mut node_grads[*a], g.clone());
                    acc(&mut node_grads[*b], g);
                }
                Op::Sub { a, b } => {
                    acc(&mut node_grads[*a], g.clone());
                    acc(&mut node_grads[*b], g.scale(-1.0));
                }
                Op::MulElem { a, b } => {
                    let da = g.zip_map(&self.values[*b], |gv, bv| gv * bv)?;
                    let db = g.zip_map(&self.values[*a], |gv, av| gv * av)?;
                    acc(&mut node_grads[*a], da);
                    acc(&mut node_grads[*b], db);
                }
                Op::DivElem { a, b } => {
                    let da = g.zip_map(&self.values[*b], |gv, bv| gv / bv)?;
                    let mut db = g.zip_map(&self.values[i], |gv, ov| gv * ov)?;
                    let db2 = db.zip_map(&self.values[*b], |v, bv| -v / bv)?;
                    db = db2;
                    acc(&mut node_grads[*a], da);
                    acc(&mut node_grads[*b], db);
                }
                Op::Square { a } => {
                    let da = g.zip_map(&self.values[*a], |gv, av| 2.0 * gv * av)?;
                    acc(&mut node_grads[*a], da);
                }
                Op::ScaleShift { a, scale } => {
                    acc(&mut node_grads[*a], g.scale(*scale));
                }
                Op::Abs { a } => {
                    let da = g.zip_map(&self.values[*a], |gv, av| {
                        if av > 0.0 {
                            gv
                        } else if av < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })?;
                    acc(&mut node_grads[*a], da);
                }
                Op::Concat { a, b } => {
                    let (ga, gb) = channel_split(&g, self.values[*a].channels())?;
                    acc(&mut node_grads[*a], ga);
                    acc(&mut node_grads[*b], gb);
                }
                Op::Crop { a, margin } => {
                    let src = &self.values[*a];
                    let mut padded = Tensor::zeros(src.height(), src.width(), src.channels());
                    let c = src.channels();
                    for y in 0..g.height() {
                        for x in 0..g.width() {
                            for ch in 0..c {
                                padded.set(y + margin, x + margin, ch, g.get(y, x, ch));
                            }
                        }
                    }
                    acc(&mut node_grads[*a], padded);
                }
                Op::Momentum { r1, r2, inj, sched, k } => {
                    let sp = self.reg.schedule(*sched);
                    let rho = sp.rho_k(*k);
                    acc(&mut node_grads[*r1], g.scale(1.0 + rho));
                    acc(&mut node_grads[*r2], g.scale(-rho));
                    acc(&mut node_grads[*inj], g.clone());
                    let mut dl_drho = 0.0;
                    for ((gv, a), b) in g
                        .data()
                        .iter()
                        .zip(self.values[*r1].data())
                        .zip(self.values[*r2].data())
                    {
                        dl_drho += gv * (a - b);
                    }
                    let (d_wraw, d_b) = sp.rho_k_partials(*k);
                    grads.scalars[sched.w_rho_raw] += dl_drho * d_wraw;
                    grads.scalars[sched.b_rho] += dl_drho * d_b;
                }
                Op::SigThresh { x, sched, k } => {
                    let sp = self.reg.schedule(*sched);
                    let theta = sp.theta_k(*k);
                    let p = SigmoidalParams::solver(theta)?;
                    let xv = &self.values[*x];
                    let mut dx = g.clone();
                    let mut dl_dtheta = 0.0;
                    for (slot, (&gv, &v)) in dx
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(xv.data()))
                    {
                        let (ddx, ddt) = sigmoidal_partials(v, &p);
                        *slot = gv * ddx;
                        dl_dtheta += gv * ddt;
                    }
                    acc(&mut node_grads[*x], dx);
                    let (d_wraw, d_b) = sp.theta_k_partials(*k);
                    grads.scalars[sched.w_theta_raw] += dl_dtheta * d_wraw;
                    grads.scalars[sched.b_theta] += dl_dtheta * d_b;
                }
                Op::MeanAll { a } => {
                    let gv = g.data()[0] / self.values[*a].len() as f64;
                    let da = self.values[*a].map(|_| gv);
                    acc(&mut node_grads[*a], da);
                }
                Op::SumAll { a } => {
                    let gv = g.data()[0];
                    let da = self.values[*a].map(|_| gv);
                    acc(&mut node_grads[*a], da);
                }
            }
            // Free the consumed gradient buffer; leaves keep theirs so
            // input gradients stay readable.
            if !matches!(self.ops[i], Op::Leaf) {
                node_grads[i] = None;
            }
        }
        Ok(BackwardOutput { grads, node_grads })
    }
}

pub struct BackwardOutput {
    pub grads: Gradients,
    node_grads: Vec<Option<Tensor>>,
}

impl BackwardOutput {
    /// Gradient that reached a (leaf) node, if any.
    pub fn node_grad(&self, id: NodeId) -> Option<&Tensor> {
        self.node_grads.get(id).and_then(|g| g.as_ref())
    }
}

// --- network registration and tape builders ---------------------------

/// Kernel ids of one iteration module.
#[derive(Debug, Clone, Copy)]
pub struct ImIds {
    pub w_u: KernelId,
    pub w_d: KernelId,
    pub w_u_prev: KernelId,
    pub w_d_prev: KernelId,
    pub w_e: KernelId,
}

/// Ids of one LZSC block: per-module kernels plus the schedule scalars.
#[derive(Debug, Clone)]
pub struct BlockIds {
    pub modules: Vec<ImIds>,
    pub sched: SchedIds,
}

#[derive(Debug, Clone)]
pub struct FNetIds {
    pub block_u1: BlockIds,
    pub block_u2: BlockIds,
    pub block_c: BlockIds,
    pub d_u1: KernelId,
    pub d_u2: KernelId,
    pub g_c: KernelId,
    pub g_u1: KernelId,
    pub g_u2: KernelId,
}

#[derive(Debug, Clone)]
pub struct IFNetIds {
    pub block_x1: BlockIds,
    pub block_x2: BlockIds,
    pub d_x1: KernelId,
    pub d_x2: KernelId,
}

pub fn register_block(
    reg: &mut ParamRegistry,
    prefix: &str,
    b: &crate::lzsc::LzscBlockParams,
) -> BlockIds {
    let modules = b
        .modules
        .iter()
        .enumerate()
        .map(|(k, m)| ImIds {
            w_u: reg.add_kernel(format!("{}.im{}.W_u", prefix, k), m.w_u.clone()),
            w_d: reg.add_kernel(format!("{}.im{}.W_d", prefix, k), m.w_d.clone()),
            w_u_prev: reg.add_kernel(format!("{}.im{}.W_u_prev", prefix, k), m.w_u_prev.clone()),
            w_d_prev: reg.add_kernel(format!("{}.im{}.W_d_prev", prefix, k), m.w_d_prev.clone()),
            w_e: reg.add_kernel(format!("{}.im{}.W_e", prefix, k), m.w_e.clone()),
        })
        .collect();
    let s = &b.schedule;
    let sched = SchedIds {
        w_theta_raw: reg.add_scalar(format!("{}.schedule.w_theta_raw", prefix), s.w_theta_raw),
        b_theta: reg.add_scalar(format!("{}.schedule.b_theta", prefix), s.b_theta),
        w_rho_raw: reg.add_scalar(format!("{}.schedule.w_rho_raw", prefix), s.w_rho_raw),
        b_rho: reg.add_scalar(format!("{}.schedule.b_rho", prefix), s.b_rho),
    };
    BlockIds { modules, sched }
}

pub fn register_fnet(reg: &mut ParamRegistry, p: &FNetParams) -> FNetIds {
    FNetIds {
        block_u1: register_block(reg, "fnet.block_u1", &p.block_u1),
        block_u2: register_block(reg, "fnet.block_u2", &p.block_u2),
        block_c: register_block(reg, "fnet.block_c", &p.block_c),
        d_u1: reg.add_kernel("fnet.D_u1", p.d_u1.clone()),
        d_u2: reg.add_kernel("fnet.D_u2", p.d_u2.clone()),
        g_c: reg.add_kernel("fnet.G_c", p.g_c.clone()),
        g_u1: reg.add_kernel("fnet.G_u1", p.g_u1.clone()),
        g_u2: reg.add_kernel("fnet.G_u2", p.g_u2.clone()),
    }
}

pub fn register_ifnet(reg: &mut ParamRegistry, p: &IFNetParams) -> IFNetIds {
    IFNetIds {
        block_x1: register_block(reg, "ifnet.block_x1", &p.block_x1),
        block_x2: register_block(reg, "ifnet.block_x2", &p.block_x2),
        d_x1: reg.add_kernel("ifnet.D_x1", p.d_x1.clone()),
        d_x2: reg.add_kernel("ifnet.D_x2", p.d_x2.clone()),
    }
}

fn write_block(reg: &ParamRegistry, ids: &BlockIds, b: &mut crate::lzsc::LzscBlockParams) {
    for (m, mids) in b.modules.iter_mut().zip(&ids.modules) {
        m.w_u = reg.kernel(mids.w_u).clone();
        m.w_d = reg.kernel(mids.w_d).clone();
        m.w_u_prev = reg.kernel(mids.w_u_prev).clone();
        m.w_d_prev = reg.kernel(mids.w_d_prev).clone();
        m.w_e = reg.kernel(mids.w_e).clone();
    }
    b.schedule = reg.schedule(ids.sched);
}

/// Copies trained registry values back into a standalone block.
pub fn write_block_params(
    reg: &ParamRegistry,
    ids: &BlockIds,
    b: &mut crate::lzsc::LzscBlockParams,
) {
    write_block(reg, ids, b);
}

/// Copies trained registry values back into the network structs.
pub fn write_fnet(reg: &ParamRegistry, ids: &FNetIds, p: &mut FNetParams) {
    write_block(reg, &ids.block_u1, &mut p.block_u1);
    write_block(reg, &ids.block_u2, &mut p.block_u2);
    write_block(reg, &ids.block_c, &mut p.block_c);
    p.d_u1 = reg.kernel(ids.d_u1).clone();
    p.d_u2 = reg.kernel(ids.d_u2).clone();
    p.g_c = reg.kernel(ids.g_c).clone();
    p.g_u1 = reg.kernel(ids.g_u1).clone();
    p.g_u2 = reg.kernel(ids.g_u2).clone();
}

pub fn write_ifnet(reg: &ParamRegistry, ids: &IFNetIds, p: &mut IFNetParams) {
    write_block(reg, &ids.block_x1, &mut p.block_x1);
    write_block(reg, &ids.block_x2, &mut p.block_x2);
    p.d_x1 = reg.kernel(ids.d_x1).clone();
    p.d_x2 = reg.kernel(ids.d_x2).clone();
}

/// Unrolls one LZSC block on the tape; mirrors the inference forward
/// bit for bit.
pub fn tape_lzsc_forward(tape: &mut GradientTape, input: NodeId, ids: &BlockIds) -> Result<NodeId> {
    let (h, w, _) = tape.value(input).shape();
    let k_feat = tape.registry().kernel(ids.modules[0].w_u).out_channels();
    let mut u_prev = tape.leaf(Tensor::zeros(h, w, k_feat));
    let mut u_cur = tape.leaf(Tensor::zeros(h, w, k_feat));
    for (k, mids) in ids.modules.iter().enumerate() {
        let d1 = tape.conv_param(u_cur, mids.w_d)?;
        let f1 = tape.conv_param(d1, mids.w_u)?;
        let r1 = tape.sub(u_cur, f1)?;
        let d2 = tape.conv_param(u_prev, mids.w_d_prev)?;
        let f2 = tape.conv_param(d2, mids.w_u_prev)?;
        let r2 = tape.sub(u_prev, f2)?;
        let inj = tape.conv_param(input, mids.w_e)?;
        let pre = tape.momentum(r1, r2, inj, ids.sched, k)?;
        let u_next = tape.sig_thresh(pre, ids.sched, k)?;
        u_prev = u_cur;
        u_cur = u_next;
    }
    Ok(u_cur)
}

pub struct TapeFusion {
    pub fused: NodeId,
    pub u1: NodeId,
    pub u2: NodeId,
    pub c: NodeId,
}

/// FNet forward on the tape.
pub fn tape_fnet_forward(
    tape: &mut GradientTape,
    i1: NodeId,
    i2: NodeId,
    ids: &FNetIds,
) -> Result<TapeFusion> {
    let u1 = tape_lzsc_forward(tape, i1, &ids.block_u1)?;
    let u2 = tape_lzsc_forward(tape, i2, &ids.block_u2)?;
    let du1 = tape.conv_param(u1, ids.d_u1)?;
    let i_hat1 = tape.sub(i1, du1)?;
    let du2 = tape.conv_param(u2, ids.d_u2)?;
    let i_hat2 = tape.sub(i2, du2)?;
    let cat = tape.concat(i_hat1, i_hat2)?;
    let c = tape_lzsc_forward(tape, cat, &ids.block_c)?;
    let pc = tape.conv_param(c, ids.g_c)?;
    let p1 = tape.conv_param(u1, ids.g_u1)?;
    let p2 = tape.conv_param(u2, ids.g_u2)?;
    let s = tape.add(pc, p1)?;
    let fused = tape.add(s, p2)?;
    Ok(TapeFusion { fused, u1, u2, c })
}

/// IFNet forward on the tape; returns the two source estimates.
pub fn tape_ifnet_forward(
    tape: &mut GradientTape,
    fused: NodeId,
    ids: &IFNetIds,
) -> Result<(NodeId, NodeId)> {
    let x1 = tape_lzsc_forward(tape, fused, &ids.block_x1)?;
    let x2 = tape_lzsc_forward(tape, fused, &ids.block_x2)?;
    let i1 = tape.conv_param(x1, ids.d_x1)?;
    let i2 = tape.conv_param(x2, ids.d_x2)?;
    Ok((i1, i2))
}
