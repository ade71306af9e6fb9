//! The unrolled l0 sparse-coding block (LZSC): N stacked iteration modules,
//! each one momentum-combined filtering followed by a sigmoidal threshold
//! with a learned, schedule-constrained threshold and momentum weight.

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, softplus_inv};
use crate::tensor::{conv2d_same, ConvKernel, Tensor};
use crate::threshold::{sigmoidal_threshold, SigmoidalParams};
use rand::Rng;

/// Feature width, kernel size, and unrolled iteration count of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkScale {
    pub feature_channels: usize,
    pub kernel_size: usize,
    pub iterations: usize,
}

impl NetworkScale {
    /// Desk-scale configuration used throughout the test suites.
    pub fn desk() -> Self {
        NetworkScale {
            feature_channels: 8,
            kernel_size: 5,
            iterations: 4,
        }
    }

    /// Full-scale configuration: 64 filters of 9x9, 4 iteration modules.
    pub fn paper() -> Self {
        NetworkScale {
            feature_channels: 64,
            kernel_size: 9,
            iterations: 4,
        }
    }

    pub fn tiny() -> Self {
        NetworkScale {
            feature_channels: 4,
            kernel_size: 3,
            iterations: 2,
        }
    }
}

/// The four scalar schedule parameters of one block, stored in raw
/// (unconstrained) form. Realized values are
/// `w_theta = -softplus(w_theta_raw)` and `w_rho = softplus(w_rho_raw)`,
/// so the threshold schedule is strictly decreasing and the momentum
/// schedule non-decreasing in [0, 1) by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub w_theta_raw: f64,
    pub b_theta: f64,
    pub w_rho_raw: f64,
    pub b_rho: f64,
}

impl ScheduleParams {
    pub fn from_raw(w_theta_raw: f64, b_theta: f64, w_rho_raw: f64, b_rho: f64) -> Self {
        ScheduleParams {
            w_theta_raw,
            b_theta,
            w_rho_raw,
            b_rho,
        }
    }

    /// Builds raw parameters from realized slopes: requires w_theta < 0 and
    /// w_rho > 0.
    pub fn from_realized(w_theta: f64, b_theta: f64, w_rho: f64, b_rho: f64) -> Result<Self> {
        if !(w_theta < 0.0) {
            return Err(Error::InvalidParam(format!("w_theta {} must be < 0", w_theta)));
        }
        if !(w_rho > 0.0) {
            return Err(Error::InvalidParam(format!("w_rho {} must be > 0", w_rho)));
        }
        Ok(ScheduleParams {
            w_theta_raw: softplus_inv(-w_theta),
            b_theta,
            w_rho_raw: softplus_inv(w_rho),
            b_rho,
        })
    }

    /// Raw parameters chosen so that theta^0 = theta0, the threshold decays
    /// with realized slope -theta_decay, and rho^1 = rho1.
    pub fn init(theta0: f64, theta_decay: f64, rho1: f64) -> Result<Self> {
        if !(theta0 > 0.0 && theta_decay > 0.0) {
            return Err(Error::InvalidParam(
                "theta0 and theta_decay must be positive".into(),
            ));
        }
        if !(0.0 < rho1 && rho1 < 1.0) {
            return Err(Error::InvalidParam(format!("rho1 {} outside (0, 1)", rho1)));
        }
        let b_theta = softplus_inv(theta0);
        // rho^1 = 1 - sp(b_rho) / sp(w_rho + b_rho) with b_rho = 0.
        let b_rho = 0.0;
        let w_rho = softplus_inv(softplus(b_rho) / (1.0 - rho1)) - b_rho;
        ScheduleParams::from_realized(-theta_decay, b_theta, w_rho, b_rho)
    }

    #[inline]
    pub fn w_theta(&self) -> f64 {
        -softplus(self.w_theta_raw)
    }

    #[inline]
    pub fn w_rho(&self) -> f64 {
        softplus(self.w_rho_raw)
    }

    /// theta^k = softplus(w_theta * k + b_theta); strictly decreasing in k.
    pub fn theta_k(&self, k: usize) -> f64 {
        softplus(self.w_theta() * k as f64 + self.b_theta)
    }

    /// rho^k = (sp(w_rho k + b_rho) - sp(b_rho)) / sp(w_rho k + b_rho);
    /// exactly 0 at k = 0, non-decreasing, always below 1.
    pub fn rho_k(&self, k: usize) -> f64 {
        let a = softplus(self.w_rho() * k as f64 + self.b_rho);
        (a - softplus(self.b_rho)) / a
    }

    /// d theta^k / d (w_theta_raw, b_theta), through the negative-softplus
    /// reparameterization.
    pub fn theta_k_partials(&self, k: usize) -> (f64, f64) {
        let arg = self.w_theta() * k as f64 + self.b_theta;
        let s = sigmoid(arg);
        let dw_draw = -sigmoid(self.w_theta_raw);
        (s * k as f64 * dw_draw, s)
    }

    /// d rho^k / d (w_rho_raw, b_rho), through the softplus
    /// reparameterization. rho = 1 - sp(b) / sp(w k + b).
    pub fn rho_k_partials(&self, k: usize) -> (f64, f64) {
        let arg = self.w_rho() * k as f64 + self.b_rho;
        let a = softplus(arg);
        let b = softplus(self.b_rho);
        let sa = sigmoid(arg);
        let sb = sigmoid(self.b_rho);
        let drho_da = b / (a * a);
        let da_draw = sa * k as f64 * sigmoid(self.w_rho_raw);
        (drho_da * da_draw, drho_da * sa - sb / a)
    }
}

/// The five per-iteration convolution stacks of one iteration module.
/// `w_u`/`w_d` filter the current state, `w_u_prev`/`w_d_prev` the previous
/// one, and `w_e` injects the block input.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationModuleParams {
    pub w_u: ConvKernel,
    pub w_d: ConvKernel,
    pub w_u_prev: ConvKernel,
    pub w_d_prev: ConvKernel,
    pub w_e: ConvKernel,
}

impl IterationModuleParams {
    pub fn validate(&self, input_channels: usize, feature_channels: usize) -> Result<()> {
        let ks = self.w_u.kernel_h();
        for (name, k) in self.kernels() {
            if k.kernel_h() != ks || k.kernel_w() != ks {
                return Err(Error::InvalidParam(format!(
                    "iteration module kernel {} has size {}x{}, expected {}x{}",
                    name,
                    k.kernel_h(),
                    k.kernel_w(),
                    ks,
                    ks
                )));
            }
        }
        let expect = [
            ("w_u", input_channels, feature_channels),
            ("w_d", feature_channels, input_channels),
            ("w_u_prev", input_channels, feature_channels),
            ("w_d_prev", feature_channels, input_channels),
            ("w_e", input_channels, feature_channels),
        ];
        for ((name, k), (ename, ein, eout)) in self.kernels().into_iter().zip(expect) {
            debug_assert_eq!(name, ename);
            if k.in_channels() != ein || k.out_channels() != eout {
                return Err(Error::InvalidParam(format!(
                    "iteration module kernel {} maps {}->{}, expected {}->{}",
                    name,
                    k.in_channels(),
                    k.out_channels(),
                    ein,
                    eout
                )));
            }
        }
        Ok(())
    }

    pub fn kernels(&self) -> Vec<(&'static str, &ConvKernel)> {
        vec![
            ("w_u", &self.w_u),
            ("w_d", &self.w_d),
            ("w_u_prev", &self.w_u_prev),
            ("w_d_prev", &self.w_d_prev),
            ("w_e", &self.w_e),
        ]
    }
}

/// All learnable state of one LZSC block.
#[derive(Debug, Clone, PartialEq)]
pub struct LzscBlockParams {
    pub modules: Vec<IterationModuleParams>,
    pub schedule: ScheduleParams,
    pub input_channels: usize,
    pub feature_channels: usize,
}

/// Uniform init scaled by 1/sqrt(fan_in).
pub fn init_kernel(
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    rng: &mut impl Rng,
) -> ConvKernel {
    let fan_in = (in_channels * kernel * kernel) as f64;
    let bound = 1.0 / fan_in.sqrt();
    let weights = (0..out_channels * in_channels * kernel * kernel)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    ConvKernel::from_vec(out_channels, in_channels, kernel, kernel, weights).unwrap()
}

impl LzscBlockParams {
    /// Random init: uniform kernels scaled by 1/sqrt(fan_in); schedule set
    /// so theta^0 ~ 0.1 and rho^1 ~ 0.2. Small initial thresholds avoid
    /// dead, fully clamped features at step 0.
    pub fn init(input_channels: usize, scale: &NetworkScale, rng: &mut impl Rng) -> Self {
        Self::init_with_schedule(
            input_channels,
            scale,
            ScheduleParams::init(0.1, 0.25, 0.2).unwrap(),
            rng,
        )
    }

    pub fn init_with_schedule(
        input_channels: usize,
        scale: &NetworkScale,
        schedule: ScheduleParams,
        rng: &mut impl Rng,
    ) -> Self {
        let (c, k, ks) = (input_channels, scale.feature_channels, scale.kernel_size);
        let modules = (0..scale.iterations)
            .map(|_| IterationModuleParams {
                w_u: init_kernel(k, c, ks, rng),
                w_d: init_kernel(c, k, ks, rng),
                w_u_prev: init_kernel(k, c, ks, rng),
                w_d_prev: init_kernel(c, k, ks, rng),
                w_e: init_kernel(k, c, ks, rng),
            })
            .collect();
        LzscBlockParams {
            modules,
            schedule,
            input_channels,
            feature_channels: scale.feature_channels,
        }
    }

    pub fn iterations(&self) -> usize {
        self.modules.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modules.is_empty() {
            return Err(Error::InvalidParam("LZSC block needs at least one module".into()));
        }
        for m in &self.modules {
            m.validate(self.input_channels, self.feature_channels)?;
        }
        Ok(())
    }
}

/// One unrolled iteration step:
/// `T(theta)((1+rho)(u_k - W_u(W_d(u_k))) - rho(u_km1 - W_u'(W_d'(u_km1))) + W_e(input))`.
pub fn im_forward(
    u_k: &Tensor,
    u_km1: &Tensor,
    input: &Tensor,
    m: &IterationModuleParams,
    theta: f64,
    rho: f64,
) -> Result<Tensor> {
    if !u_k.same_shape(u_km1) {
        return Err(Error::contract(
            "im_forward",
            format!("state shapes differ: {:?} vs {:?}", u_k.shape(), u_km1.shape()),
        ));
    }
    if u_k.height() != input.height() || u_k.width() != input.width() {
        return Err(Error::contract(
            "im_forward",
            format!(
                "state {}x{} vs input {}x{}",
                u_k.height(),
                u_k.width(),
                input.height(),
                input.width()
            ),
        ));
    }
    let r1 = u_k.sub(&conv2d_same(&conv2d_same(u_k, &m.w_d)?, &m.w_u)?)?;
    let r2 = u_km1.sub(&conv2d_same(&conv2d_same(u_km1, &m.w_d_prev)?, &m.w_u_prev)?)?;
    let inj = conv2d_same(input, &m.w_e)?;
    let mut pre = inj;
    for ((p, &a), &b) in pre.data_mut().iter_mut().zip(r1.data()).zip(r2.data()) {
        *p += (1.0 + rho) * a - rho * b;
    }
    sigmoidal_threshold(&pre, &SigmoidalParams::solver(theta)?)
}

/// Runs the block: u^0 = u^-1 = 0, then N iteration modules with
/// theta^k / rho^k from the schedule. Returns u^N.
pub fn lzsc_forward(input: &Tensor, p: &LzscBlockParams) -> Result<Tensor> {
    Ok(lzsc_forward_traced(input, p)?.0)
}

/// As [`lzsc_forward`], additionally returning every intermediate state
/// u^1 ... u^N.
pub fn lzsc_forward_traced(input: &Tensor, p: &LzscBlockParams) -> Result<(Tensor, Vec<Tensor>)> {
    if input.channels() != p.input_channels {
        return Err(Error::contract(
            "lzsc_forward",
            format!(
                "input has {} channels, block expects {}",
                input.channels(),
                p.input_channels
            ),
        ));
    }
    p.validate()?;
    let mut states = Vec::with_capacity(p.modules.len());
    let mut u_prev = Tensor::zeros(input.height(), input.width(), p.feature_channels);
    let mut u_cur = u_prev.clone();
    for (k, m) in p.modules.iter().enumerate() {
        let theta = p.schedule.theta_k(k);
        let rho = p.schedule.rho_k(k);
        let u_next = im_forward(&u_cur, &u_prev, input, m, theta, rho)?;
        u_prev = std::mem::replace(&mut u_cur, u_next);
        states.push(u_cur.clone());
    }
    Ok((u_cur, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv2d_same;
    use crate::threshold::sigmoidal;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn theta_zero_is_softplus_of_bias() {
        let s = ScheduleParams::from_realized(-1.0, 0.4, 1.0, 0.0).unwrap();
        assert!((s.theta_k(0) - softplus(0.4)).abs() < 1e-15);
    }

    #[test]
    fn theta_values_match_direct_evaluation() {
        let s = ScheduleParams::from_realized(-1.0, 0.0, 1.0, 0.0).unwrap();
        assert!((s.theta_k(0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((s.theta_k(1) - 0.3132616875182229).abs() < 1e-10);
    }

    #[test]
    fn rho_values_match_direct_evaluation() {
        let s = ScheduleParams::from_realized(-1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(s.rho_k(0), 0.0);
        let sp1 = softplus(1.0);
        let expect = (sp1 - std::f64::consts::LN_2) / sp1;
        assert!((s.rho_k(1) - expect).abs() < 1e-12);
        assert!((s.rho_k(1) - 0.4722).abs() < 1e-4);
    }

    #[test]
    fn schedule_partials_match_finite_differences() {
        let s = ScheduleParams::from_raw(-0.8, 0.3, -1.2, 0.4);
        let h = 1e-6;
        for k in [0usize, 1, 3] {
            let (dt_w, dt_b) = s.theta_k_partials(k);
            let (dr_w, dr_b) = s.rho_k_partials(k);
            let fd = |f: &dyn Fn(&ScheduleParams) -> f64, field: usize| -> f64 {
                let mut sp = s;
                let mut sm = s;
                match field {
                    0 => {
                        sp.w_theta_raw += h;
                        sm.w_theta_raw -= h;
                    }
                    1 => {
                        sp.b_theta += h;
                        sm.b_theta -= h;
                    }
                    2 => {
                        sp.w_rho_raw += h;
                        sm.w_rho_raw -= h;
                    }
                    _ => {
                        sp.b_rho += h;
                        sm.b_rho -= h;
                    }
                }
                (f(&sp) - f(&sm)) / (2.0 * h)
            };
            let theta = |s: &ScheduleParams| s.theta_k(k);
            let rho = |s: &ScheduleParams| s.rho_k(k);
            assert!((fd(&theta, 0) - dt_w).abs() < 1e-8);
            assert!((fd(&theta, 1) - dt_b).abs() < 1e-8);
            assert!((fd(&rho, 2) - dr_w).abs() < 1e-8);
            assert!((fd(&rho, 3) - dr_b).abs() < 1e-8);
        }
    }

    #[test]
    fn schedule_init_hits_targets() {
        let s = ScheduleParams::init(0.1, 0.25, 0.2).unwrap();
        assert!((s.theta_k(0) - 0.1).abs() < 1e-12);
        assert!((s.rho_k(1) - 0.2).abs() < 1e-12);
        assert!((s.w_theta() + 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn schedule_invariants_hold_for_random_raws(
            wt in -6.0f64..6.0,
            bt in -6.0f64..6.0,
            wr in -6.0f64..6.0,
            br in -6.0f64..6.0,
        ) {
            let s = ScheduleParams::from_raw(wt, bt, wr, br);
            prop_assert!(s.w_theta() < 0.0);
            prop_assert_eq!(s.rho_k(0), 0.0);
            let mut prev_theta = f64::INFINITY;
            let mut prev_rho = -1.0;
            for k in 0..8 {
                let t = s.theta_k(k);
                let r = s.rho_k(k);
                prop_assert!(t > 0.0);
                prop_assert!(t < prev_theta);
                prop_assert!((0.0..1.0).contains(&r));
                prop_assert!(r >= prev_rho);
                prev_theta = t;
                prev_rho = r;
            }
            prop_assert!(s.rho_k(1_000_000) < 1.0);
        }
    }

    fn tiny_block(rng: &mut ChaCha8Rng) -> LzscBlockParams {
        LzscBlockParams::init(1, &NetworkScale::tiny(), rng)
    }

    #[test]
    fn im_zero_states_reduce_to_thresholded_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = tiny_block(&mut rng);
        let input = Tensor::from_fn(6, 6, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let z = Tensor::zeros(6, 6, p.feature_channels);
        let theta = 0.2;
        let out = im_forward(&z, &z, &input, &p.modules[0], theta, 0.3).unwrap();
        let inj = conv2d_same(&input, &p.modules[0].w_e).unwrap();
        let sp = SigmoidalParams::solver(theta).unwrap();
        let expect = sigmoidal_threshold(&inj, &sp).unwrap();
        assert_eq!(out.data(), expect.data());
    }

    #[test]
    fn zero_rho_ignores_previous_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = tiny_block(&mut rng);
        let input = Tensor::from_fn(6, 6, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let u = Tensor::from_fn(6, 6, p.feature_channels, |_, _, _| rng.gen_range(-1.0..1.0));
        let prev_a = Tensor::zeros(6, 6, p.feature_channels);
        let prev_b = Tensor::from_fn(6, 6, p.feature_channels, |_, _, _| rng.gen_range(-1.0..1.0));
        let a = im_forward(&u, &prev_a, &input, &p.modules[0], 0.2, 0.0).unwrap();
        let b = im_forward(&u, &prev_b, &input, &p.modules[0], 0.2, 0.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    /// Independent scalar transcription of the iteration step, evaluated
    /// entry by entry with explicit nested loops.
    fn scalar_im(
        u_k: &Tensor,
        u_km1: &Tensor,
        input: &Tensor,
        m: &IterationModuleParams,
        theta: f64,
        rho: f64,
    ) -> Tensor {
        let conv = |src: &Tensor, k: &ConvKernel| -> Tensor {
            let (h, w, _) = src.shape();
            let mut out = Tensor::zeros(h, w, k.out_channels());
            let (ph, pw) = (k.kernel_h() / 2, k.kernel_w() / 2);
            for y in 0..h {
                for x in 0..w {
                    for o in 0..k.out_channels() {
                        let mut acc = 0.0;
                        for i in 0..k.in_channels() {
                            for ky in 0..k.kernel_h() {
                                for kx in 0..k.kernel_w() {
                                    let iy = y as isize + ky as isize - ph as isize;
                                    let ix = x as isize + kx as isize - pw as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += src.get(iy as usize, ix as usize, i)
                                            * k.weight(o, i, ky, kx);
                                    }
                                }
                            }
                        }
                        out.set(y, x, o, acc);
                    }
                }
            }
            out
        };
        let f1 = conv(&conv(u_k, &m.w_d), &m.w_u);
        let f2 = conv(&conv(u_km1, &m.w_d_prev), &m.w_u_prev);
        let inj = conv(input, &m.w_e);
        let p = SigmoidalParams::solver(theta).unwrap();
        let (h, w, c) = inj.shape();
        Tensor::from_fn(h, w, c, |y, x, ch| {
            let pre = (1.0 + rho) * (u_k.get(y, x, ch) - f1.get(y, x, ch))
                - rho * (u_km1.get(y, x, ch) - f2.get(y, x, ch))
                + inj.get(y, x, ch);
            sigmoidal(pre, &p)
        })
    }

    #[test]
    fn im_matches_independent_scalar_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = tiny_block(&mut rng);
        // Single-pixel-supported 3x3 input.
        let mut input = Tensor::zeros(3, 3, 1);
        input.set(1, 1, 0, 0.8);
        let u_k = Tensor::from_fn(3, 3, p.feature_channels, |_, _, _| rng.gen_range(-0.5..0.5));
        let u_km1 = Tensor::from_fn(3, 3, p.feature_channels, |_, _, _| rng.gen_range(-0.5..0.5));
        let (theta, rho) = (0.15, 0.4);
        let fast = im_forward(&u_k, &u_km1, &input, &p.modules[0], theta, rho).unwrap();
        let slow = scalar_im(&u_k, &u_km1, &input, &p.modules[0], theta, rho);
        assert!(max_abs_diff(&fast, &slow) < 1e-10);
    }

    #[test]
    fn lzsc_zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let p = tiny_block(&mut rng);
        let out = lzsc_forward(&Tensor::zeros(8, 8, 1), &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_module_block_is_thresholded_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let mut p = tiny_block(&mut rng);
        p.modules.truncate(1);
        let input = Tensor::from_fn(6, 6, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let out = lzsc_forward(&input, &p).unwrap();
        let inj = conv2d_same(&input, &p.modules[0].w_e).unwrap();
        let sp = SigmoidalParams::solver(p.schedule.theta_k(0)).unwrap();
        let expect = sigmoidal_threshold(&inj, &sp).unwrap();
        assert_eq!(out.data(), expect.data());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let p = tiny_block(&mut rng);
        assert!(lzsc_forward(&Tensor::zeros(8, 8, 2), &p).is_err());
    }

    #[test]
    fn trace_returns_one_state_per_module() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let p = tiny_block(&mut rng);
        let input = Tensor::from_fn(8, 8, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let (out, states) = lzsc_forward_traced(&input, &p).unwrap();
        assert_eq!(states.len(), p.iterations());
        assert_eq!(states.last().unwrap().data(), out.data());
    }

    #[test]
    fn output_has_exact_zeros_under_clamping_schedules() {
        // gamma = 100 clamps when |x| < theta - 0.3, so thresholds >= 0.35
        // guarantee a clamp region; the zero fraction shrinks as the
        // schedule is scaled down.
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let scale = NetworkScale::tiny();
        let input = Tensor::from_fn(12, 12, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let mut fractions = Vec::new();
        for theta0 in [1.2, 0.7, 0.45] {
            let sched = ScheduleParams::init(theta0, 0.05, 0.2).unwrap();
            let mut rng_b = ChaCha8Rng::seed_from_u64(99);
            let p = LzscBlockParams::init_with_schedule(1, &scale, sched, &mut rng_b);
            let out = lzsc_forward(&input, &p).unwrap();
            let frac = out.exact_zero_count() as f64 / out.len() as f64;
            fractions.push(frac);
        }
        assert!(fractions[0] > 0.0);
        assert!(fractions[0] >= fractions[1]);
        assert!(fractions[1] >= fractions[2]);
    }
}
