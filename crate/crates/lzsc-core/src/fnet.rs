//! The fusion network: two LZSC blocks extract per-modality unique
//! features, a third extracts the common feature from the residuals, and
//! learned convolutions recombine everything into the fused image.

use crate::error::{Error, Result};
use crate::lzsc::{init_kernel, lzsc_forward, LzscBlockParams, NetworkScale};
use crate::tensor::{channel_concat, conv2d_same, ConvKernel, Tensor};
use rand::Rng;
use std::path::{Path, PathBuf};

/// Complete learnable state of the fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct FNetParams {
    /// Unique-feature block for the first modality (C = 1).
    pub block_u1: LzscBlockParams,
    /// Unique-feature block for the second modality (C = 1).
    pub block_u2: LzscBlockParams,
    /// Common-feature block consuming the concatenated residuals (C = 2).
    pub block_c: LzscBlockParams,
    /// K -> 1 synthesis kernels for the unique residual subtraction.
    pub d_u1: ConvKernel,
    pub d_u2: ConvKernel,
    /// K -> 1 reconstruction kernels for the fused image.
    pub g_c: ConvKernel,
    pub g_u1: ConvKernel,
    pub g_u2: ConvKernel,
}

impl FNetParams {
    pub fn init(scale: &NetworkScale, rng: &mut impl Rng) -> Self {
        let k = scale.feature_channels;
        let ks = scale.kernel_size;
        FNetParams {
            block_u1: LzscBlockParams::init(1, scale, rng),
            block_u2: LzscBlockParams::init(1, scale, rng),
            block_c: LzscBlockParams::init(2, scale, rng),
            d_u1: init_kernel(1, k, ks, rng),
            d_u2: init_kernel(1, k, ks, rng),
            g_c: init_kernel(1, k, ks, rng),
            g_u1: init_kernel(1, k, ks, rng),
            g_u2: init_kernel(1, k, ks, rng),
        }
    }

    pub fn scale(&self) -> NetworkScale {
        NetworkScale {
            feature_channels: self.block_u1.feature_channels,
            kernel_size: self.block_u1.modules[0].w_u.kernel_h(),
            iterations: self.block_u1.iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.block_u1.validate()?;
        self.block_u2.validate()?;
        self.block_c.validate()?;
        let k = self.block_u1.feature_channels;
        if self.block_u2.feature_channels != k || self.block_c.feature_channels != k {
            return Err(Error::InvalidParam(
                "fnet blocks disagree on feature channels".into(),
            ));
        }
        if self.block_u1.input_channels != 1
            || self.block_u2.input_channels != 1
            || self.block_c.input_channels != 2
        {
            return Err(Error::InvalidParam(
                "fnet blocks must consume C=1, C=1, C=2 inputs".into(),
            ));
        }
        for (name, kern) in [
            ("D_u1", &self.d_u1),
            ("D_u2", &self.d_u2),
            ("G_c", &self.g_c),
            ("G_u1", &self.g_u1),
            ("G_u2", &self.g_u2),
        ] {
            if kern.in_channels() != k || kern.out_channels() != 1 {
                return Err(Error::InvalidParam(format!(
                    "fnet kernel {} maps {}->{}, expected {}->1",
                    name,
                    kern.in_channels(),
                    kern.out_channels(),
                    k
                )));
            }
        }
        Ok(())
    }
}

/// Every intermediate of one fusion pass. The fused image is the sum of
/// the three reconstruction parts by construction.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub u1: Tensor,
    pub u2: Tensor,
    pub c: Tensor,
    pub i_hat1: Tensor,
    pub i_hat2: Tensor,
    pub part_common: Tensor,
    pub part_u1: Tensor,
    pub part_u2: Tensor,
    pub fused: Tensor,
}

impl FusionTrace {
    /// Fraction of exactly-zero entries in each feature stack (u1, u2, c).
    pub fn zero_fractions(&self) -> (f64, f64, f64) {
        let frac = |t: &Tensor| t.exact_zero_count() as f64 / t.len() as f64;
        (frac(&self.u1), frac(&self.u2), frac(&self.c))
    }
}

fn check_inputs(i1: &Tensor, i2: &Tensor) -> Result<()> {
    if i1.channels() != 1 || i2.channels() != 1 {
        return Err(Error::contract(
            "fnet_forward",
            format!(
                "inputs must be single-channel, got {} and {}",
                i1.channels(),
                i2.channels()
            ),
        ));
    }
    if i1.height() != i2.height() || i1.width() != i2.width() {
        return Err(Error::contract(
            "fnet_forward",
            format!(
                "source sizes differ: {}x{} vs {}x{}",
                i1.height(),
                i1.width(),
                i2.height(),
                i2.width()
            ),
        ));
    }
    Ok(())
}

/// Runs the fusion network. The output is the unclipped linear
/// reconstruction; clipping to [0, 1] happens only at image-save time.
pub fn fnet_forward(
    i1: &Tensor,
    i2: &Tensor,
    p: &FNetParams,
    trace: bool,
) -> Result<(Tensor, Option<FusionTrace>)> {
    check_inputs(i1, i2)?;
    p.validate()?;
    let u1 = lzsc_forward(i1, &p.block_u1)?;
    let u2 = lzsc_forward(i2, &p.block_u2)?;
    let i_hat1 = i1.sub(&conv2d_same(&u1, &p.d_u1)?)?;
    let i_hat2 = i2.sub(&conv2d_same(&u2, &p.d_u2)?)?;
    let c = lzsc_forward(&channel_concat(&i_hat1, &i_hat2)?, &p.block_c)?;
    let part_common = conv2d_same(&c, &p.g_c)?;
    let part_u1 = conv2d_same(&u1, &p.g_u1)?;
    let part_u2 = conv2d_same(&u2, &p.g_u2)?;
    let fused = part_common.add(&part_u1)?.add(&part_u2)?;
    if trace {
        let t = FusionTrace {
            u1,
            u2,
            c,
            i_hat1,
            i_hat2,
            part_common,
            part_u1,
            part_u2,
            fused: fused.clone(),
        };
        Ok((fused, Some(t)))
    } else {
        Ok((fused, None))
    }
}

/// Writes the trace as normalized grayscale PNGs plus raw f32 tensors:
/// seven images and seven tensors (u1, u2, c, the three reconstruction
/// parts, and the fused image).
pub fn dump_intermediates(trace: &FusionTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let maps: [(&str, Tensor); 7] = [
        ("u1", trace.u1.channel_max_projection()),
        ("u2", trace.u2.channel_max_projection()),
        ("c", trace.c.channel_max_projection()),
        ("part_common", trace.part_common.clone()),
        ("part_u1", trace.part_u1.clone()),
        ("part_u2", trace.part_u2.clone()),
        ("fused", trace.fused.clone()),
    ];
    let raw: [(&str, &Tensor); 7] = [
        ("u1", &trace.u1),
        ("u2", &trace.u2),
        ("c", &trace.c),
        ("part_common", &trace.part_common),
        ("part_u1", &trace.part_u1),
        ("part_u2", &trace.part_u2),
        ("fused", &trace.fused),
    ];
    let mut written = Vec::with_capacity(14);
    for (name, map) in &maps {
        let path = dir.join(format!("{}.png", name));
        crate::imageio::write_gray_png_normalized(&path, map)?;
        written.push(path);
    }
    for (name, t) in &raw {
        let path = dir.join(format!("{}.lzsct", name));
        crate::weights::save_tensor(&path, name, t)?;
        written.push(path);
    }
    Ok(written)
}
