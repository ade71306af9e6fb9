//! Implementations of the image-facing subcommands.

use crate::errors::{CliError, CliResult};
use crate::imgio::{
    chroma_variance, load_image, rgb_to_ycbcr, save_gray, save_rgb, ycbcr_to_rgb,
};
use crate::{ColorMode, DecomposeArgs, FeaturesArgs, FuseArgs, MetricsArgs, TrainArgs};
use lzsc_core::fnet::{dump_intermediates, fnet_forward, FNetParams};
use lzsc_core::ifnet::{ifnet_forward, IFNetParams};
use lzsc_core::lzsc::NetworkScale;
use lzsc_core::metrics::fusion_report;
use lzsc_core::tensor::Tensor;
use lzsc_core::train::{
    loss_log_csv, train_stage1, train_stage2, PairDataset, TrainConfig,
};
use lzsc_core::weights::{load_weights as load_weights_file, save_weights, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::{Path, PathBuf};

fn read_model(path: &Path) -> CliResult<Model> {
    load_weights_file(path).map_err(|e| CliError::user(format!("{}: {}", path.display(), e)))
}

/// Center-crops a tensor to the given spatial size.
fn center_crop(t: &Tensor, h: usize, w: usize) -> CliResult<Tensor> {
    let y0 = (t.height() - h) / 2;
    let x0 = (t.width() - w) / 2;
    Ok(t.crop(y0, x0, h, w)?)
}

struct FusePair {
    gray1: Tensor,
    gray2: Tensor,
    rgb1: Option<Tensor>,
    rgb2: Option<Tensor>,
}

fn load_pair(m1: &Path, m2: &Path, resize: bool) -> CliResult<FusePair> {
    let a = load_image(m1)?;
    let b = load_image(m2)?;
    let (mut g1, mut g2) = (a.gray, b.gray);
    let (mut r1, mut r2) = (a.rgb, b.rgb);
    if !g1.same_shape(&g2) {
        if !resize {
            return Err(CliError::user(format!(
                "source sizes differ ({}x{} vs {}x{}); pass --resize-to-min to crop",
                g1.height(),
                g1.width(),
                g2.height(),
                g2.width()
            )));
        }
        let h = g1.height().min(g2.height());
        let w = g1.width().min(g2.width());
        g1 = center_crop(&g1, h, w)?;
        g2 = center_crop(&g2, h, w)?;
        r1 = r1.map(|c| center_crop(&c, h, w)).transpose()?;
        r2 = r2.map(|c| center_crop(&c, h, w)).transpose()?;
    }
    Ok(FusePair {
        gray1: g1,
        gray2: g2,
        rgb1: r1,
        rgb2: r2,
    })
}

fn fuse_one(
    pair: &FusePair,
    fnet: &FNetParams,
    out: &Path,
    color: ColorMode,
    trace_dir: Option<&Path>,
) -> CliResult<()> {
    match color {
        ColorMode::Gray => {
            let (fused, trace) = fnet_forward(&pair.gray1, &pair.gray2, fnet, trace_dir.is_some())?;
            if let (Some(dir), Some(t)) = (trace_dir, trace) {
                dump_intermediates(&t, dir)?;
            }
            save_gray(out, &fused)
        }
        ColorMode::Ycbcr => {
            let planes1 = pair.rgb1.as_ref().map(rgb_to_ycbcr);
            let planes2 = pair.rgb2.as_ref().map(rgb_to_ycbcr);
            let y1 = planes1.as_ref().map(|(y, _, _)| y.clone()).unwrap_or_else(|| pair.gray1.clone());
            let y2 = planes2.as_ref().map(|(y, _, _)| y.clone()).unwrap_or_else(|| pair.gray2.clone());
            let (fused, trace) = fnet_forward(&y1, &y2, fnet, trace_dir.is_some())?;
            if let (Some(dir), Some(t)) = (trace_dir, trace) {
                dump_intermediates(&t, dir)?;
            }
            let fused = fused.map(|v| v.clamp(0.0, 1.0));
            // Chroma comes from the color-bearing source; if both carry
            // color, average.
            const CHROMA_EPS: f64 = 1e-6;
            let v1 = planes1.as_ref().map(|(_, cb, cr)| chroma_variance(cb, cr)).unwrap_or(0.0);
            let v2 = planes2.as_ref().map(|(_, cb, cr)| chroma_variance(cb, cr)).unwrap_or(0.0);
            let chroma = match (v1 > CHROMA_EPS, v2 > CHROMA_EPS) {
                (true, true) => {
                    let (_, cb1, cr1) = planes1.as_ref().unwrap();
                    let (_, cb2, cr2) = planes2.as_ref().unwrap();
                    Some((
                        cb1.add(cb2)?.scale(0.5),
                        cr1.add(cr2)?.scale(0.5),
                    ))
                }
                (true, false) => planes1.map(|(_, cb, cr)| (cb, cr)),
                (false, true) => planes2.map(|(_, cb, cr)| (cb, cr)),
                (false, false) => None,
            };
            match chroma {
                Some((cb, cr)) => save_rgb(out, &ycbcr_to_rgb(&fused, &cb, &cr)),
                None => save_gray(out, &fused),
            }
        }
    }
}

/// Matched file names across two directories; unmatched names are an
/// error listing the offenders.
fn directory_pairs(m1: &Path, m2: &Path) -> CliResult<Vec<(PathBuf, PathBuf, String)>> {
    let list = |dir: &Path| -> CliResult<Vec<String>> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir)
            .map_err(|e| CliError::user(format!("{}: {}", dir.display(), e)))?
        {
            let entry = entry.map_err(|e| CliError::user(format!("{}: {}", dir.display(), e)))?;
            if entry.path().is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    };
    let names1 = list(m1)?;
    let names2 = list(m2)?;
    let set1: std::collections::BTreeSet<_> = names1.iter().cloned().collect();
    let set2: std::collections::BTreeSet<_> = names2.iter().cloned().collect();
    let unpaired: Vec<String> = set1
        .symmetric_difference(&set2)
        .cloned()
        .collect();
    if !unpaired.is_empty() {
        return Err(CliError::user(format!(
            "unpaired files: {}",
            unpaired.join(", ")
        )));
    }
    Ok(names1
        .into_iter()
        .map(|n| (m1.join(&n), m2.join(&n), n))
        .collect())
}

pub fn fuse(args: FuseArgs) -> CliResult<()> {
    let model = read_model(&args.weights)?;
    if args.m1.is_dir() {
        if !args.m2.is_dir() {
            return Err(CliError::user("--m1 is a directory but --m2 is not"));
        }
        std::fs::create_dir_all(&args.out)
            .map_err(|e| CliError::user(format!("{}: {}", args.out.display(), e)))?;
        let pairs = directory_pairs(&args.m1, &args.m2)?;
        use rayon::prelude::*;
        let results: Vec<CliResult<()>> = pairs
            .par_iter()
            .map(|(p1, p2, name)| {
                let pair = load_pair(p1, p2, args.resize_to_min)?;
                let out = args.out.join(name).with_extension("png");
                let trace = args.trace.as_ref().map(|t| t.join(name));
                fuse_one(&pair, &model.fnet, &out, args.color, trace.as_deref())
            })
            .collect();
        for r in results {
            r?;
        }
        Ok(())
    } else {
        let pair = load_pair(&args.m1, &args.m2, args.resize_to_min)?;
        fuse_one(
            &pair,
            &model.fnet,
            &args.out,
            args.color,
            args.trace.as_deref(),
        )
    }
}

pub fn features(args: FeaturesArgs) -> CliResult<()> {
    let model = read_model(&args.weights)?;
    let pair = load_pair(&args.m1, &args.m2, false)?;
    let (_, trace) = fnet_forward(&pair.gray1, &pair.gray2, &model.fnet, true)?;
    let files = dump_intermediates(&trace.expect("trace requested"), &args.out)?;
    println!("wrote {} files to {}", files.len(), args.out.display());
    Ok(())
}

pub fn decompose(args: DecomposeArgs) -> CliResult<()> {
    let model = read_model(&args.weights)?;
    let Some(ifnet) = model.ifnet else {
        return Err(CliError::user(format!(
            "{}: archive has no inverse-fusion network (trained with stage 2 only?)",
            args.weights.display()
        )));
    };
    let fused = load_image(&args.fused)?.gray;
    let inv = ifnet_forward(&fused, &ifnet)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::user(format!("{}: {}", args.out.display(), e)))?;
    save_gray(&args.out.join("decomposed_1.png"), &inv.i1)?;
    save_gray(&args.out.join("decomposed_2.png"), &inv.i2)?;
    Ok(())
}

fn load_dataset(root: &Path) -> CliResult<PairDataset> {
    let pairs = directory_pairs(&root.join("m1"), &root.join("m2"))?;
    if pairs.is_empty() {
        return Err(CliError::user(format!(
            "{}: no image pairs found under m1/ and m2/",
            root.display()
        )));
    }
    let mut loaded = Vec::with_capacity(pairs.len());
    for (p1, p2, name) in &pairs {
        let a = load_image(p1)?.gray;
        let b = load_image(p2)?.gray;
        if !a.same_shape(&b) {
            return Err(CliError::user(format!("pair {}: sizes differ", name)));
        }
        loaded.push((a, b));
    }
    Ok(PairDataset::new(loaded)?)
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let data = load_dataset(&args.data)?;
    let cfg = TrainConfig {
        iterations: args.iters,
        batch_size: args.batch,
        crop_size: args.crop,
        lr: args.lr,
        loss_beta1: args.beta1,
        loss_beta2: args.beta2,
        loss_beta3: args.beta3,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        checkpoint_dir: args.checkpoint_dir.clone(),
    };
    let scale = NetworkScale {
        feature_channels: args.k,
        kernel_size: args.kernel,
        iterations: args.ims,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut fnet, mut ifnet) = match &args.init_weights {
        Some(path) => {
            let m = read_model(path)?;
            let inf = m
                .ifnet
                .unwrap_or_else(|| IFNetParams::init(&m.fnet.scale(), &mut rng));
            (m.fnet, inf)
        }
        None => (
            FNetParams::init(&scale, &mut rng),
            IFNetParams::init(&scale, &mut rng),
        ),
    };

    let csv_base = args.loss_csv.clone().unwrap_or_else(|| args.out.clone());
    let write_csv = |suffix: &str, csv: String| -> CliResult<()> {
        let path = csv_base.with_extension(format!("{}.loss.csv", suffix));
        std::fs::write(&path, csv)
            .map_err(|e| CliError::user(format!("{}: {}", path.display(), e)))?;
        println!("loss log: {}", path.display());
        Ok(())
    };

    let run_stage1 = args.stage == "1" || args.stage == "both";
    let run_stage2 = args.stage == "2" || args.stage == "both";
    if !run_stage1 && !run_stage2 {
        return Err(CliError::user(format!(
            "--stage must be 1, 2, or both (got '{}')",
            args.stage
        )));
    }

    if run_stage1 {
        let out = train_stage1(&data, fnet, ifnet, &cfg)?;
        fnet = out.fnet;
        ifnet = out.ifnet;
        write_csv("stage1", loss_log_csv(&out.log))?;
        println!(
            "stage 1 done: loss {:.6} -> {:.6}",
            out.log.first().map(|r| r.total).unwrap_or(0.0),
            out.log.last().map(|r| r.total).unwrap_or(0.0)
        );
    }
    if run_stage2 {
        let out = train_stage2(&data, fnet, &cfg)?;
        fnet = out.fnet;
        write_csv("stage2", loss_log_csv(&out.log))?;
        println!(
            "stage 2 done: loss {:.6} -> {:.6}",
            out.log.first().map(|r| r.total).unwrap_or(0.0),
            out.log.last().map(|r| r.total).unwrap_or(0.0)
        );
    }
    save_weights(&fnet, Some(&ifnet), &args.out)?;
    println!("weights: {}", args.out.display());
    Ok(())
}

pub fn metrics(args: MetricsArgs) -> CliResult<()> {
    let fused = load_image(&args.fused)?.gray;
    let src1 = load_image(&args.src1)?.gray;
    let src2 = load_image(&args.src2)?.gray;
    let report = fusion_report(&src1, &src2, &fused)?;
    let out = json!({
        "mi": report.mi,
        "ssim": report.ssim,
        "qabf": report.qabf,
        "vif": serde_json::Value::Null,
    });
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}
