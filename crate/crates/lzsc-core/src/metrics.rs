//! Fusion-quality metrics: joint-histogram mutual information, SSIM in
//! metric form, and the Sobel-based Qabf edge-preservation score.

use crate::error::{Error, Result};
use crate::tensor::{sobel_components, Tensor};

const MI_BINS: usize = 256;

/// Quality scores of one fused image against its two sources.
/// Aggregation: MI is summed over the sources, SSIM averaged, Qabf
/// jointly weighted by source edge strength. VIF is not computed and
/// serializes as null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mi: f64,
    pub ssim: f64,
    pub qabf: f64,
}

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::contract(op, "inputs must be single-channel"));
    }
    if !a.same_shape(b) {
        return Err(Error::contract(
            op,
            format!("size mismatch {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn quantize(t: &Tensor) -> Vec<usize> {
    t.data()
        .iter()
        .map(|&v| {
            let q = (v.clamp(0.0, 1.0) * MI_BINS as f64).floor() as usize;
            q.min(MI_BINS - 1)
        })
        .collect()
}

/// Mutual information in bits between two [0, 1] images quantized to 256
/// levels, via the joint histogram. Tiny negative float residue clamps
/// to zero.
pub fn mutual_information(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair("mutual_information", a, b)?;
    let qa = quantize(a);
    let qb = quantize(b);
    let n = qa.len() as f64;
    let mut joint = vec![0u32; MI_BINS * MI_BINS];
    let mut ma = vec![0u32; MI_BINS];
    let mut mb = vec![0u32; MI_BINS];
    for (&i, &j) in qa.iter().zip(&qb) {
        joint[i * MI_BINS + j] += 1;
        ma[i] += 1;
        mb[j] += 1;
    }
    let mut mi = 0.0;
    for i in 0..MI_BINS {
        if ma[i] == 0 {
            continue;
        }
        for j in 0..MI_BINS {
            let c = joint[i * MI_BINS + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 / n;
            let pa = ma[i] as f64 / n;
            let pb = mb[j] as f64 / n;
            mi += p * (p / (pa * pb)).log2();
        }
    }
    Ok(mi.max(0.0))
}

/// Histogram entropy in bits of one image at the MI quantization.
pub fn histogram_entropy(a: &Tensor) -> Result<f64> {
    if a.channels() != 1 {
        return Err(Error::contract("histogram_entropy", "single-channel input"));
    }
    let q = quantize(a);
    let n = q.len() as f64;
    let mut hist = vec![0u32; MI_BINS];
    for &i in &q {
        hist[i] += 1;
    }
    let mut h = 0.0;
    for &c in &hist {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// SSIM in metric form; identical computation to the training ssim.
pub fn ssim_metric(a: &Tensor, f: &Tensor) -> Result<f64> {
    crate::loss::ssim(a, f)
}

// Xydeas-Petrovic constants.
const Q_GAMMA_G: f64 = 0.9994;
const Q_KAPPA_G: f64 = -15.0;
const Q_SIGMA_G: f64 = 0.5;
const Q_GAMMA_A: f64 = 0.9879;
const Q_KAPPA_A: f64 = -22.0;
const Q_SIGMA_A: f64 = 0.8;

struct EdgeMap {
    strength: Vec<f64>,
    orientation: Vec<f64>,
}

fn edge_map(img: &Tensor) -> Result<EdgeMap> {
    let (gx, gy) = sobel_components(img)?;
    let strength = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(x, y)| (x * x + y * y).sqrt())
        .collect();
    let orientation = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(x, y)| if *x == 0.0 && *y == 0.0 { 0.0 } else { y.atan2(*x) })
        .collect();
    Ok(EdgeMap {
        strength,
        orientation,
    })
}

/// Undirected angular distance modulo pi, in [0, pi/2].
fn orientation_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b).abs() % std::f64::consts::PI;
    if d > std::f64::consts::FRAC_PI_2 {
        d = std::f64::consts::PI - d;
    }
    d
}

fn sigmoid_score(gamma: f64, kappa: f64, sigma: f64, v: f64) -> f64 {
    gamma / (1.0 + (kappa * (v - sigma)).exp())
}

/// Per-pixel edge preservation of the fused image relative to one source.
fn preservation(src: &EdgeMap, fus: &EdgeMap, idx: usize) -> f64 {
    let gs = src.strength[idx];
    let gf = fus.strength[idx];
    let g_rel = if gs == 0.0 && gf == 0.0 {
        0.0
    } else if gf > gs {
        gs / gf
    } else {
        gf / gs
    };
    let a_rel = 1.0
        - orientation_distance(src.orientation[idx], fus.orientation[idx])
            / std::f64::consts::FRAC_PI_2;
    let qg = sigmoid_score(Q_GAMMA_G, Q_KAPPA_G, Q_SIGMA_G, g_rel);
    let qa = sigmoid_score(Q_GAMMA_A, Q_KAPPA_A, Q_SIGMA_A, a_rel);
    // Normalize by the perfect-transfer score so identical images reach 1.
    let qmax = sigmoid_score(Q_GAMMA_G, Q_KAPPA_G, Q_SIGMA_G, 1.0)
        * sigmoid_score(Q_GAMMA_A, Q_KAPPA_A, Q_SIGMA_A, 1.0);
    (qg * qa / qmax).min(1.0)
}

/// Qabf edge-preservation score in [0, 1]: per-pixel preservation of each
/// source weighted by that source's edge strength. The one-pixel border is
/// excluded because zero padding gives the Sobel operator spurious edge
/// responses there regardless of image content.
pub fn qabf(a: &Tensor, b: &Tensor, fused: &Tensor) -> Result<f64> {
    check_pair("qabf", a, b)?;
    check_pair("qabf", a, fused)?;
    let ea = edge_map(a)?;
    let eb = edge_map(b)?;
    let ef = edge_map(fused)?;
    let (h, w) = (a.height(), a.width());
    let mut num = 0.0;
    let mut den = 0.0;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let idx = y * w + x;
            let (wa, wb) = (ea.strength[idx], eb.strength[idx]);
            num += preservation(&ea, &ef, idx) * wa + preservation(&eb, &ef, idx) * wb;
            den += wa + wb;
        }
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Full fusion report: MI(I1,F) + MI(I2,F), mean SSIM, joint Qabf.
pub fn fusion_report(i1: &Tensor, i2: &Tensor, fused: &Tensor) -> Result<MetricReport> {
    let mi = mutual_information(i1, fused)? + mutual_information(i2, fused)?;
    let ssim = 0.5 * (ssim_metric(i1, fused)? + ssim_metric(i2, fused)?);
    let qabf = qabf(i1, i2, fused)?;
    let report = MetricReport { mi, ssim, qabf };
    if !(report.mi.is_finite() && report.ssim.is_finite() && report.qabf.is_finite()) {
        return Err(Error::contract("fusion_report", "non-finite metric"));
    }
    Ok(report)
}
