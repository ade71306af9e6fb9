use lzsc_core::fnet::{fnet_forward, FNetParams};
use lzsc_core::ifnet::{ifnet_forward, IFNetParams};
use lzsc_core::loss::ssim;
use lzsc_core::lzsc::NetworkScale;
use lzsc_core::metrics::qabf;
use lzsc_core::synth::synthetic_dataset;
use lzsc_core::train::{train_stage1, train_stage2, PairDataset, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn heldout_scores(data: &PairDataset, fnet: &FNetParams) -> (f64, f64) {
    let (mut s, mut q) = (0.0, 0.0);
    for (i1, i2) in data.pairs() {
        let (fused, _) = fnet_forward(i1, i2, fnet, false).unwrap();
        let clipped = fused.map(|v| v.clamp(0.0, 1.0));
        let target = i1.maximum(i2).unwrap();
        s += ssim(&clipped, &target).unwrap();
        q += qabf(i1, i2, &clipped).unwrap();
    }
    (s / data.len() as f64, q / data.len() as f64)
}

fn roundtrip_l1(data: &PairDataset, fnet: &FNetParams, ifnet: &IFNetParams) -> f64 {
    let mut total = 0.0;
    for (i1, i2) in data.pairs() {
        let (fused, _) = fnet_forward(i1, i2, fnet, false).unwrap();
        let inv = ifnet_forward(&fused, ifnet).unwrap();
        total += inv.i1.sub(i1).unwrap().abs().mean() + inv.i2.sub(i2).unwrap().abs().mean();
    }
    total / data.len() as f64
}

#[test]
fn probe_criterion6_grid() {
    let train = synthetic_dataset(32, 64, 42);
    let heldout = synthetic_dataset(8, 64, 4242);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scale = NetworkScale::desk();
    let fnet0 = FNetParams::init(&scale, &mut rng);
    let ifnet0 = IFNetParams::init(&scale, &mut rng);
    let cfg1 = TrainConfig { iterations: 2000, batch_size: 4, crop_size: 32, lr: 1e-3, seed: 7, ..TrainConfig::default() };

    let rt0 = roundtrip_l1(&heldout, &fnet0, &ifnet0);
    let s1 = train_stage1(&train, fnet0.clone(), ifnet0, &cfg1).unwrap();
    let mean = |a: usize, b: usize| s1.log[a..b].iter().map(|r| r.total).sum::<f64>() / (b - a) as f64;
    println!("stage1 ratio {:.4}", mean(1900, 2000) / mean(0, 100));
    println!("roundtrip {:.2}x", rt0 / roundtrip_l1(&heldout, &s1.fnet, &s1.ifnet));

    for lr2 in [1e-3] {
        let cfg2 = TrainConfig { lr: lr2, ..cfg1.clone() };
        let s2 = train_stage2(&train, s1.fnet.clone(), &cfg2).unwrap();
        let (sf, qf) = heldout_scores(&heldout, &s2.fnet);
        let ab = train_stage2(&train, fnet0.clone(), &cfg2).unwrap();
        let (sa, _) = heldout_scores(&heldout, &ab.fnet);
        println!("lr2 {}: full ssim {:.4} qabf {:.4} | ablation ssim {:.4} | strict: {}", lr2, sf, qf, sa, sa < sf);
    }
}
