//! Independent oracles shared by the acceptance suite and the integration tests.
//!
//! Each check returns `Ok(detail)` on success and `Err(detail)` on failure.

#![allow(dead_code)]

use ad2attack::autograd::Tape;
use ad2attack::evaluation::{aggregate, cle, iou, AttackMode, TrackingRun};
use ad2attack::geometry::{BBox, SearchGeometry};
use ad2attack::image::Image;
use ad2attack::losses::{
    box_drift_loss, perceptibility_terms, region_masks, score_reversal_loss, AttackConfig, MaskRule, RegionMasks,
};
use ad2attack::resample::{adaptive_pyramid_levels, attack_patch, sru_forward, PyramidConfig, Rse, SruNetwork};
use ad2attack::tensor::Tensor;
use ad2attack::victim::{RegressionMap, ScoreMap};
use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Pyramid depth

/// Largest `n` with `n² · frame_h · frame_w ≤ search · patch_h · patch_w`, in integers.
pub fn exact_raw_levels(search: u128, patch_h: u128, patch_w: u128, frame_h: u128, frame_w: u128) -> u128 {
    let num = search * patch_h * patch_w;
    let den = frame_h * frame_w;
    let mut n = 0u128;
    while (n + 1) * (n + 1) * den <= num {
        n += 1;
    }
    n
}

/// Twenty integer geometries whose area fraction spans `[1e-4, 1]` on a log scale.
pub fn level_geometries() -> Vec<(u128, u128, u128, u128, u128)> {
    let searches = [64u128, 127, 255, 303];
    (0..20)
        .map(|i| {
            let q = 10f64.powf(-4.0 + 4.0 * i as f64 / 19.0);
            let (fh, fw) = if i % 2 == 0 { (720u128, 1280u128) } else { (1000, 1000) };
            let side = ((q * (fh * fw) as f64).sqrt().round() as u128).clamp(1, fh.min(fw));
            let pw = if i == 19 { fw } else { side };
            let ph = if i == 19 { fh } else { side };
            (searches[i % 4], ph, pw, fh, fw)
        })
        .collect()
}

pub fn check_pyramid_levels() -> Check {
    let mut geoms = level_geometries();
    // Exact square boundaries: n² · H · W = H_s · h_s · w_s.
    geoms.push((255, 255, 255, 720, 1280));
    geoms.push((64, 100, 100, 400, 400));
    geoms.push((100, 10, 10, 10, 10));
    let mut qs = Vec::new();
    for &(s, ph, pw, fh, fw) in &geoms {
        let want = exact_raw_levels(s, ph, pw, fh, fw).clamp(1, 5) as usize;
        let g = SearchGeometry::new(s as usize, ph as f64, pw as f64, fh as usize, fw as usize).map_err(|e| e.to_string())?;
        let got = adaptive_pyramid_levels(&g).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("H_s={s} patch={ph}x{pw} frame={fh}x{fw}: got {got}, want {want}"))?;
        qs.push((ph * pw) as f64 / (fh * fw) as f64);
    }
    let (lo, hi) = qs.iter().fold((f64::MAX, 0.0f64), |(a, b), q| (a.min(*q), b.max(*q)));
    ensure(lo <= 1.1e-4 && hi == 1.0, || format!("Q sweep covered only [{lo:e}, {hi}]"))?;
    Ok(format!("{} geometries, Q in [{lo:.2e}, {hi}]", geoms.len()))
}

// ---------------------------------------------------------------------------
// Finite differences

/// Relative error with a floor so that near-zero entries are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

const FD_STEP: f64 = 1e-6;

fn fd_check(name: &str, x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> Option<f64>) -> Result<(usize, f64), String> {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let plus = f(x);
        x[i] = orig - FD_STEP;
        let minus = f(x);
        x[i] = orig;
        let (Some(p), Some(m)) = (plus, minus) else { continue };
        let numeric = (p - m) / (2.0 * FD_STEP);
        let err = rel_err(analytic[i], numeric);
        if err > 1e-4 {
            return Err(format!("{name}[{i}]: analytic {} vs numeric {numeric} (rel {err:.2e})", analytic[i]));
        }
        worst = worst.max(err);
        checked += 1;
    }
    Ok((checked, worst))
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

pub fn check_score_gradient(seed: u64) -> Check {
    let mut r = rng(seed);
    let cfg = AttackConfig::default();
    let clean = ScoreMap::new(random_tensor(&mut r, &[2, 5, 5], -3.0, 3.0)).unwrap();
    let masks = region_masks(&clean, &cfg);
    ensure(masks.n_target > 0 && masks.n_background > 0, || "degenerate masks".into())?;
    let adv = random_tensor(&mut r, &[2, 5, 5], -3.0, 3.0);
    let loss = |t: &[f64]| {
        let a = ScoreMap::new(Tensor::from_vec(&[2, 5, 5], t.to_vec())).unwrap();
        Some(score_reversal_loss(&clean, &a, &masks, &cfg).unwrap().value)
    };
    let analytic = score_reversal_loss(&clean, &ScoreMap::new(adv.clone()).unwrap(), &masks, &cfg).unwrap().grad;
    let mut x = adv.into_data();
    let (n, worst) = fd_check("score", &mut x, analytic.data(), loss)?;
    Ok(format!("score reversal: {n} entries, max rel err {worst:.1e}"))
}

pub fn check_drift_gradient(seed: u64) -> Check {
    let r = RefCell::new(rng(seed));
    let u = |lo: f64, hi: f64| r.borrow_mut().gen_range(lo..hi);
    let cfg = AttackConfig::default();
    let masks = RegionMasks {
        target: (0..25).map(|i| i % 3 != 0).collect(),
        background: vec![false; 25],
        n_target: (0..25).filter(|i| i % 3 != 0).count(),
        n_background: 0,
    };
    // Cells on both sides of each hinge, at least 0.5 away from it.
    let reg = RegressionMap::from_fn(5, 5, |i, j| {
        let k = i * 5 + j;
        let (x, y) = if k % 4 == 0 { (3.0, 2.5) } else { (u(-2.0, 2.0), u(-2.0, 2.0)) };
        let (w, h) = if k % 5 == 0 { (-4.0, -3.0) } else { (u(-1.5, 1.5), u(-1.5, 1.5)) };
        [x, y, w, h]
    })
    .unwrap();
    let analytic = box_drift_loss(&reg, &masks, &cfg).unwrap().grad;
    let loss = |t: &[f64]| {
        let m = RegressionMap::new(Tensor::from_vec(&[4, 5, 5], t.to_vec())).unwrap();
        Some(box_drift_loss(&m, &masks, &cfg).unwrap().value)
    };
    let mut x = reg.tensor().data().to_vec();
    let (n, worst) = fd_check("drift", &mut x, analytic.data(), loss)?;
    Ok(format!("box drift: {n} entries, max rel err {worst:.1e}"))
}

pub fn check_perceptibility_gradient(seed: u64) -> Check {
    let mut r = rng(seed);
    let clean = random_tensor(&mut r, &[3, 4, 4], 0.0, 1.0);
    let adv = random_tensor(&mut r, &[3, 4, 4], 0.0, 1.0);
    let gamma = 700.0;
    let analytic = perceptibility_terms(&clean, &adv, gamma).unwrap().grad;
    let loss = |t: &[f64]| Some(perceptibility_terms(&clean, &Tensor::from_vec(&[3, 4, 4], t.to_vec()), gamma).unwrap().value);
    let mut x = adv.into_data();
    let (n, worst) = fd_check("perceptibility", &mut x, analytic.data(), loss)?;
    Ok(format!("perceptibility: {n} entries, max rel err {worst:.1e}"))
}

pub fn small_pyramid(levels: usize, rse: bool) -> PyramidConfig {
    PyramidConfig {
        levels,
        convs_per_block: 1,
        feature_channels: 4,
        group_count: 2,
        attention_kernel: 3,
        rse,
    }
}

/// A network whose every parameter, residual projections included, is non-trivial.
pub fn jittered_network(cfg: PyramidConfig, seed: u64, scale: f64) -> SruNetwork {
    let mut net = SruNetwork::new(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0xA5A5);
    for t in net.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v += r.gen_range(-scale..scale);
        }
    }
    net
}

fn clamp_pattern(img: &Image) -> Vec<bool> {
    img.data().iter().map(|v| *v <= 0.0 || *v >= 1.0).collect()
}

pub fn check_sru_gradient(seed: u64) -> Check {
    let mut r = rng(seed);
    let levels = 2;
    let mut net = jittered_network(small_pyramid(levels, true), seed, 0.05);
    let lr_values: Vec<f64> = (0..48).map(|_| r.gen_range(0.3..0.7)).collect();
    let lr = Image::from_tensor(Tensor::from_vec(&[3, 4, 4], lr_values)).unwrap();
    let (oh, ow) = (4 << levels, 4 << levels);
    let weights = random_tensor(&mut r, &[3, oh, ow], -1.0, 1.0);

    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape, true);
    let x = tape.leaf(lr.to_tensor(), true);
    let out = net.forward_on_tape(&mut tape, &vars, x, levels).unwrap();
    let base_out = Image::from_tensor(tape.value(out).clone()).unwrap();
    let base_pattern = clamp_pattern(&base_out);
    let grads = tape.backward(&[(out, weights.clone())]);
    let g_input = grads.get_or_zeros(x, &[3, 4, 4]);
    let g_params = net.params().collect_grads(&vars, &grads);

    let objective = |net: &SruNetwork, lr: &Image| -> Option<f64> {
        let y = sru_forward(lr, net, levels).unwrap();
        // Skip steps that move a pixel across the clamp.
        if clamp_pattern(&y) != base_pattern {
            return None;
        }
        Some(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    };

    let mut xs = lr.data().to_vec();
    let (n_in, worst_in) = fd_check("sru input", &mut xs, g_input.data(), |t| {
        objective(&net, &Image::from_tensor(Tensor::from_vec(&[3, 4, 4], t.to_vec())).unwrap())
    })?;

    let mut n_par = 0;
    let mut worst_par = 0.0f64;
    for k in 0..net.params().len() {
        let len = net.params().get(k).len();
        for j in [0, len / 2, len - 1] {
            let orig = net.params().get(k).data()[j];
            net.params_mut().get_mut(k).data_mut()[j] = orig + FD_STEP;
            let plus = objective(&net, &lr);
            net.params_mut().get_mut(k).data_mut()[j] = orig - FD_STEP;
            let minus = objective(&net, &lr);
            net.params_mut().get_mut(k).data_mut()[j] = orig;
            let (Some(p), Some(m)) = (plus, minus) else { continue };
            let numeric = (p - m) / (2.0 * FD_STEP);
            let analytic = g_params[k].data()[j];
            let err = rel_err(analytic, numeric);
            if err > 1e-4 {
                return Err(format!(
                    "sru param {}[{j}]: analytic {analytic} vs numeric {numeric} (rel {err:.2e})",
                    net.params().names()[k]
                ));
            }
            worst_par = worst_par.max(err);
            n_par += 1;
        }
    }
    ensure(n_in > 40 && n_par > 30, || format!("too few comparable entries ({n_in} input, {n_par} param)"))?;
    Ok(format!(
        "sru_forward: {n_in} input entries (max rel err {worst_in:.1e}), {n_par} parameters (max rel err {worst_par:.1e})"
    ))
}

pub fn check_gradient_suite() -> Check {
    let parts = [
        check_score_gradient(1)?,
        check_drift_gradient(2)?,
        check_perceptibility_gradient(3)?,
        check_sru_gradient(4)?,
    ];
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------------------
// Structural equivalences

/// Scalar half-pixel bilinear sample with edge clamping.
fn sample(img: &[Vec<f64>], sy: f64, sx: f64) -> f64 {
    let (h, w) = (img.len(), img[0].len());
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let top = img[y0][x0] * (1.0 - fx) + img[y0][x1] * fx;
    let bottom = img[y1][x0] * (1.0 - fx) + img[y1][x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn scalar_resize(img: &[Vec<f64>], oh: usize, ow: usize) -> Vec<Vec<f64>> {
    let (h, w) = (img.len(), img[0].len());
    (0..oh)
        .map(|y| {
            (0..ow)
                .map(|x| {
                    let sy = (y as f64 + 0.5) * h as f64 / oh as f64 - 0.5;
                    let sx = (x as f64 + 0.5) * w as f64 / ow as f64 - 0.5;
                    sample(img, sy, sx)
                })
                .collect()
        })
        .collect()
}

/// Align to multiples of `2^levels`, keep every `2^levels`-th pixel, double `levels` times, restore.
pub fn scalar_down_up(img: &[Vec<f64>], levels: usize) -> Vec<Vec<f64>> {
    let f = 1usize << levels;
    let (h, w) = (img.len(), img[0].len());
    let (ah, aw) = (h.div_ceil(f) * f, w.div_ceil(f) * f);
    let aligned = if (ah, aw) == (h, w) { img.to_vec() } else { scalar_resize(img, ah, aw) };
    let mut cur: Vec<Vec<f64>> = (0..ah / f).map(|y| (0..aw / f).map(|x| aligned[y * f][x * f]).collect()).collect();
    for _ in 0..levels {
        let (ch, cw) = (cur.len(), cur[0].len());
        cur = scalar_resize(&cur, 2 * ch, 2 * cw);
    }
    if (ah, aw) == (h, w) {
        cur
    } else {
        scalar_resize(&cur, h, w)
    }
}

pub fn check_zero_residual_down_up() -> Check {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for levels in 1..=3 {
        let mut net = jittered_network(small_pyramid(3, true), 20 + levels as u64, 0.2);
        net.zero_residuals();
        for (h, w) in [(8, 8), (5, 7), (8, 3), (6, 6), (1, 2)] {
            let img = Image::from_tensor(random_tensor(&mut r, &[3, h, w], 0.0, 1.0)).unwrap();
            let got = net.resample(&img, levels).map_err(|e| e.to_string())?;
            for c in 0..3 {
                let plane: Vec<Vec<f64>> = (0..h).map(|y| (0..w).map(|x| img.get(c, y, x)).collect()).collect();
                let want = scalar_down_up(&plane, levels);
                for y in 0..h {
                    for x in 0..w {
                        worst = worst.max((got.get(c, y, x) - want[y][x]).abs());
                    }
                }
            }
            cases += 1;
        }
    }
    ensure(worst <= 1e-6, || format!("zero-residual network deviates from the oracle by {worst:e}"))?;
    Ok(format!("{cases} inputs up to 8x8, max abs diff {worst:.1e}"))
}

pub fn check_rse_identity() -> Check {
    let mut r = rng(12);
    for (channels, groups, kernel) in [(4, 2, 3), (8, 4, 7), (6, 3, 5)] {
        let mut rse = Rse::new(channels, groups, kernel, r.gen()).unwrap();
        rse.zero_projection();
        let x = random_tensor(&mut r, &[channels, 5, 6], -4.0, 4.0);
        let dev = rse.forward(&x).unwrap().max_abs_diff(&x);
        ensure(dev == 0.0, || format!("RSE({channels},{groups},{kernel}) deviates by {dev:e}"))?;
    }
    Ok("zero projection gives the exact identity for 3 block shapes".into())
}

pub fn check_attack_patch_shapes() -> Check {
    let net = jittered_network(small_pyramid(5, true), 30, 0.02);
    let mut count = 0;
    for size in (8..=72).step_by(7).chain([9, 16, 31, 32, 33, 63, 64, 65]) {
        for frame in [size, 2 * size, 8 * size, 40 * size] {
            let g = SearchGeometry::new(size, size as f64, size as f64, frame, frame).unwrap();
            let img = Image::from_fn(size, size + 3, |c, y, x| ((c + y * 3 + x) % 7) as f64 / 7.0);
            let out = attack_patch(&img, &g, &net).map_err(|e| e.to_string())?;
            ensure((out.height(), out.width()) == (size, size + 3), || {
                format!("{}x{} came back as {}x{}", size, size + 3, out.height(), out.width())
            })?;
            count += 1;
        }
    }
    Ok(format!("{count} size/geometry pairs keep their resolution"))
}

pub fn check_structural() -> Check {
    Ok([check_zero_residual_down_up()?, check_rse_identity()?, check_attack_patch_shapes()?].join("; "))
}

// ---------------------------------------------------------------------------
// Loss axioms

pub fn check_loss_axioms() -> Check {
    let mut r = rng(13);
    let cfg = AttackConfig::default();
    for _ in 0..50 {
        let clean = ScoreMap::new(random_tensor(&mut r, &[2, 5, 5], -4.0, 4.0)).unwrap();
        let masks = region_masks(&clean, &cfg);
        let same = score_reversal_loss(&clean, &clean, &masks, &cfg).unwrap();
        ensure(same.value == 0.0, || format!("score loss at identity = {}", same.value))?;
        let patch = random_tensor(&mut r, &[3, 4, 4], 0.0, 1.0);
        let p = perceptibility_terms(&patch, &patch, cfg.gamma).unwrap();
        ensure(p.value == 0.0 && p.grad.data().iter().all(|g| *g == 0.0), || "perceptibility at identity".into())?;

        // Linearity in each weight; powers of two keep the products exact.
        let adv = ScoreMap::new(random_tensor(&mut r, &[2, 5, 5], -4.0, 4.0)).unwrap();
        let reg = RegressionMap::new(random_tensor(&mut r, &[4, 5, 5], -3.0, 3.0)).unwrap();
        let other = random_tensor(&mut r, &[3, 4, 4], 0.0, 1.0);
        let s1 = score_reversal_loss(&clean, &adv, &masks, &cfg).unwrap().value;
        let s4 = score_reversal_loss(&clean, &adv, &masks, &AttackConfig { phi: 4.0, ..cfg }).unwrap().value;
        ensure(s4 == 4.0 * s1, || format!("phi linearity: {s4} vs 4·{s1}"))?;
        let l1 = perceptibility_terms(&patch, &other, 1.0).unwrap().value;
        let l8 = perceptibility_terms(&patch, &other, 8.0).unwrap().value;
        ensure(l8 == 8.0 * l1, || format!("gamma linearity: {l8} vs 8·{l1}"))?;
        let only = |alpha: f64, beta: f64| box_drift_loss(&reg, &masks, &AttackConfig { alpha, beta, ..cfg }).unwrap().value;
        let (a1, b1) = (only(1.0, 0.0), only(0.0, 1.0));
        ensure(only(2.0, 0.0) == 2.0 * a1 && only(0.0, 16.0) == 16.0 * b1, || "alpha/beta linearity".into())?;
        ensure((only(2.0, 16.0) - (2.0 * a1 + 16.0 * b1)).abs() <= 1e-12 * (1.0 + a1.abs() + b1.abs()), || {
            "drift is not the sum of its two terms".into()
        })?;

        // The literal mask rule compares a probability against a negative bound.
        let literal = region_masks(&clean, &AttackConfig { mask_rule: MaskRule::PaperLiteral, ..cfg });
        ensure(literal.n_background == 0 && literal.background.iter().all(|b| !b), || "literal rule produced background cells".into())?;
    }
    // Empty masks give zero value and zero gradient.
    let empty = RegionMasks {
        target: vec![false; 25],
        background: vec![false; 25],
        n_target: 0,
        n_background: 0,
    };
    let clean = ScoreMap::new(random_tensor(&mut r, &[2, 5, 5], -4.0, 4.0)).unwrap();
    let adv = ScoreMap::new(random_tensor(&mut r, &[2, 5, 5], -4.0, 4.0)).unwrap();
    let reg = RegressionMap::new(random_tensor(&mut r, &[4, 5, 5], -3.0, 3.0)).unwrap();
    let s = score_reversal_loss(&clean, &adv, &empty, &cfg).unwrap();
    let d = box_drift_loss(&reg, &empty, &cfg).unwrap();
    ensure(
        s.value == 0.0 && d.value == 0.0 && s.grad.data().iter().chain(d.grad.data()).all(|g| *g == 0.0),
        || "N=0 must give zero loss and zero gradient".into(),
    )?;
    Ok("identity, weight linearity, N=0 and literal-mask checks hold on 50 random maps".into())
}

// ---------------------------------------------------------------------------
// Metrics

pub fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::from_top_left(x, y, w, h).unwrap()
}

/// Toy runs with hand-chosen boxes; frame 0 always matches the ground truth.
pub fn toy_runs(seed: u64, count: usize, frames: usize) -> (Vec<TrackingRun>, Vec<Vec<BBox>>) {
    let mut r = rng(seed);
    let mut runs = Vec::new();
    let mut gts = Vec::new();
    for s in 0..count {
        let gt: Vec<BBox> = (0..frames)
            .map(|_| bx(r.gen_range(0.0..50.0), r.gen_range(0.0..50.0), r.gen_range(2.0..20.0), r.gen_range(2.0..20.0)))
            .collect();
        let boxes: Vec<BBox> = gt
            .iter()
            .enumerate()
            .map(|(k, g)| {
                if k == 0 {
                    *g
                } else {
                    let [x, y, w, h] = g.to_top_left();
                    bx(x + r.gen_range(-25.0..25.0), y + r.gen_range(-25.0..25.0), w * r.gen_range(0.5..1.5), h * r.gen_range(0.5..1.5))
                }
            })
            .collect();
        let n = boxes.len();
        runs.push(TrackingRun {
            sequence: format!("toy{s}"),
            mode: AttackMode::Clean,
            iou: boxes.iter().zip(&gt).map(|(a, b)| iou(a, b)).collect(),
            cle: boxes.iter().zip(&gt).map(|(a, b)| cle(a, b)).collect(),
            boxes,
            latency_ms: vec![0.0; n],
            perturbation_l2: vec![0.0; n],
            perturbation_abs: vec![0.0; n],
            aborted: None,
        });
        gts.push(gt);
    }
    (runs, gts)
}

pub fn check_metrics() -> Check {
    // Hand-derived cases.
    let third = iou(&bx(0.0, 0.0, 2.0, 1.0), &bx(1.0, 0.0, 2.0, 1.0));
    ensure((third - 1.0 / 3.0).abs() <= 1e-12, || format!("IoU of half-shifted boxes = {third}"))?;
    let disjoint = iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 1.0, 1.0));
    ensure(disjoint == 0.0, || format!("disjoint IoU = {disjoint}"))?;
    let d = cle(&bx(0.0, 0.0, 2.0, 2.0), &bx(3.0, 4.0, 2.0, 2.0));
    ensure((d - 5.0).abs() <= 1e-12, || format!("3-4-5 CLE = {d}"))?;

    // Aggregation against a brute-force frame loop.
    for seed in 0..5 {
        let (runs, gts) = toy_runs(seed, 4, 25);
        let m = aggregate(&runs);
        let mut ious = Vec::new();
        let mut cles = Vec::new();
        for (run, gt) in runs.iter().zip(&gts) {
            for (b, g) in run.boxes.iter().zip(gt) {
                ious.push(iou(b, g));
                cles.push(cle(b, g));
            }
        }
        let n = ious.len() as f64;
        let precision = cles.iter().filter(|c| **c <= 20.0).count() as f64 / n;
        let mut auc = 0.0;
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            auc += ious.iter().filter(|v| **v > t).count() as f64 / n;
        }
        auc /= 21.0;
        ensure(m.frames == ious.len(), || "frame count".into())?;
        ensure(m.precision == precision, || format!("precision {} vs brute force {precision}", m.precision))?;
        ensure(m.success_auc == auc, || format!("success {} vs brute force {auc}", m.success_auc))?;
    }
    Ok("IoU 1/3, disjoint 0, CLE 5 exact; aggregation equals brute force on 5 toy corpora".into())
}
