//! The inverse-fusion network: two LZSC blocks decompose a fused image
//! into per-modality features, and learned convolutions reconstruct the
//! source images. Used as a training-time consistency constraint and as a
//! diagnostic.

use crate::error::{Error, Result};
use crate::lzsc::{init_kernel, lzsc_forward, LzscBlockParams, NetworkScale};
use crate::tensor::{conv2d_same, ConvKernel, Tensor};
use rand::Rng;

/// Complete learnable state of the inverse-fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct IFNetParams {
    pub block_x1: LzscBlockParams,
    pub block_x2: LzscBlockParams,
    /// K -> 1 reconstruction kernels for the two source estimates.
    pub d_x1: ConvKernel,
    pub d_x2: ConvKernel,
}

impl IFNetParams {
    pub fn init(scale: &NetworkScale, rng: &mut impl Rng) -> Self {
        let k = scale.feature_channels;
        let ks = scale.kernel_size;
        IFNetParams {
            block_x1: LzscBlockParams::init(1, scale, rng),
            block_x2: LzscBlockParams::init(1, scale, rng),
            d_x1: init_kernel(1, k, ks, rng),
            d_x2: init_kernel(1, k, ks, rng),
        }
    }

    pub fn scale(&self) -> NetworkScale {
        NetworkScale {
            feature_channels: self.block_x1.feature_channels,
            kernel_size: self.block_x1.modules[0].w_u.kernel_h(),
            iterations: self.block_x1.iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.block_x1.validate()?;
        self.block_x2.validate()?;
        let k = self.block_x1.feature_channels;
        if self.block_x2.feature_channels != k {
            return Err(Error::InvalidParam(
                "ifnet blocks disagree on feature channels".into(),
            ));
        }
        for (name, kern) in [("D_x1", &self.d_x1), ("D_x2", &self.d_x2)] {
            if kern.in_channels() != k || kern.out_channels() != 1 {
                return Err(Error::InvalidParam(format!(
                    "ifnet kernel {} maps {}->{}, expected {}->1",
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

/// Output of one inverse-fusion pass.
#[derive(Debug, Clone)]
pub struct InverseFusion {
    pub i1: Tensor,
    pub i2: Tensor,
    pub x1: Tensor,
    pub x2: Tensor,
}

/// Decomposes a fused image: x_i = lzsc(I_f) with independent blocks,
/// I_i' = D_xi(x_i).
pub fn ifnet_forward(fused: &Tensor, p: &IFNetParams) -> Result<InverseFusion> {
    if fused.channels() != 1 {
        return Err(Error::contract(
            "ifnet_forward",
            format!("fused image must be single-channel, got {}", fused.channels()),
        ));
    }
    p.validate()?;
    let x1 = lzsc_forward(fused, &p.block_x1)?;
    let x2 = lzsc_forward(fused, &p.block_x2)?;
    let i1 = conv2d_same(&x1, &p.d_x1)?;
    let i2 = conv2d_same(&x2, &p.d_x2)?;
    Ok(InverseFusion { i1, i2, x1, x2 })
}
