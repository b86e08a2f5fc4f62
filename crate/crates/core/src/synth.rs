//! Procedural tracking sequences: a textured rectangle drifting over a
//! textured background. Fully determined by the seed and sequence index.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frame_width: usize,
    pub frame_height: usize,
    pub frames: usize,
    pub min_target: f64,
    pub max_target: f64,
    /// Largest per-frame displacement in pixels.
    pub max_speed: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frame_width: 320,
            frame_height: 320,
            frames: 60,
            min_target: 10.0,
            max_target: 30.0,
            max_speed: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::config("synthetic sequences need at least one frame"));
        }
        if !(self.min_target >= 2.0 && self.max_target >= self.min_target) {
            return Err(Error::config("target size range must satisfy 2 ≤ min ≤ max"));
        }
        if (self.frame_width as f64) < 3.0 * self.max_target || (self.frame_height as f64) < 3.0 * self.max_target {
            return Err(Error::config("frames must be at least three target sizes wide and tall"));
        }
        if !(self.max_speed >= 0.0 && self.max_speed.is_finite()) {
            return Err(Error::config("max_speed must be finite and non-negative"));
        }
        Ok(())
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

fn random_waves(rng: &mut ChaCha8Rng, count: usize, freq: (f64, f64), amp: f64) -> Vec<Wave> {
    (0..count)
        .map(|_| {
            let f = rng.gen_range(freq.0..freq.1);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            Wave {
                fx: f * theta.cos(),
                fy: f * theta.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                amp: [rng.gen_range(-amp..amp), rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)],
            }
        })
        .collect()
}

fn wave_sum(waves: &[Wave], x: f64, y: f64, c: usize) -> f64 {
    waves.iter().map(|w| w.amp[c] * (w.fx * x + w.fy * y + w.phase).sin()).sum()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Target appearance: two colours in a sinusoidal stripe pattern plus a dark rim.
struct Appearance {
    a: [f64; 3],
    b: [f64; 3],
    period: f64,
    angle: f64,
}

impl Appearance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut colour = || -> [f64; 3] {
            let mut c = [0.0; 3];
            for v in &mut c {
                *v = if rng.gen_bool(0.5) { rng.gen_range(0.75..1.0) } else { rng.gen_range(0.0..0.25) };
            }
            c
        };
        let a = colour();
        let mut b = colour();
        if a == b || a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 0.3) {
            b = [1.0 - a[0], 1.0 - a[1], 1.0 - a[2]];
        }
        Self {
            a,
            b,
            period: rng.gen_range(3.0..6.0),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
        }
    }

    /// Colour at offset `(u, v)` from the target's top-left, in a `w×h` box.
    fn at(&self, u: f64, v: f64, w: f64, h: f64, c: usize) -> f64 {
        let rim = u.min(v).min(w - u).min(h - v);
        if rim < 1.5 {
            return 0.05;
        }
        let s = (u * self.angle.cos() + v * self.angle.sin()) * std::f64::consts::TAU / self.period;
        let t = 0.5 + 0.5 * s.sin();
        self.a[c] * t + self.b[c] * (1.0 - t)
    }
}

/// Generates sequence `index` of the corpus seeded by `seed`.
pub fn generate_sequence(cfg: &SynthConfig, seed: u64, index: usize) -> Result<Sequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let (fw, fh) = (cfg.frame_width, cfg.frame_height);

    let base: [f64; 3] = [rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7)];
    let coarse = random_waves(&mut rng, 5, (0.01, 0.05), 0.12);
    let fine = random_waves(&mut rng, 4, (0.3, 0.9), 0.05);
    let mut background = vec![[0.0f64; 3]; fw * fh];
    for y in 0..fh {
        for x in 0..fw {
            let (xf, yf) = (x as f64, y as f64);
            for c in 0..3 {
                background[y * fw + x][c] = base[c] + wave_sum(&coarse, xf, yf, c) + wave_sum(&fine, xf, yf, c);
            }
        }
    }

    let look = Appearance::random(&mut rng);
    let mut w = rng.gen_range(cfg.min_target..=cfg.max_target);
    let mut h = (w * rng.gen_range(0.7..1.4)).clamp(cfg.min_target, cfg.max_target);
    let margin = cfg.max_target;
    let mut cx = rng.gen_range(margin..fw as f64 - margin);
    let mut cy = rng.gen_range(margin..fh as f64 - margin);
    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
    let speed = rng.gen_range(0.3..=1.0) * cfg.max_speed;
    let (mut vx, mut vy) = (speed * heading.cos(), speed * heading.sin());

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut boxes = Vec::with_capacity(cfg.frames);
    for _ in 0..cfg.frames {
        let b = BBox::new(cx, cy, w, h)?;
        let mut img = RgbImage::new(fw as u32, fh as u32);
        for y in 0..fh {
            for x in 0..fw {
                // Pixel centres inside the box take the target colour.
                let (u, v) = (x as f64 + 0.5 - b.left(), y as f64 + 0.5 - b.top());
                let inside = u >= 0.0 && v >= 0.0 && u < w && v < h;
                let px: [u8; 3] = std::array::from_fn(|c| {
                    to_u8(if inside { look.at(u, v, w, h, c) } else { background[y * fw + x][c] })
                });
                img.put_pixel(x as u32, y as u32, Rgb(px));
            }
        }
        frames.push(img);
        boxes.push(b);

        // Smooth random walk with reflection at the borders.
        vx = (vx + rng.gen_range(-0.3..0.3)).clamp(-cfg.max_speed, cfg.max_speed);
        vy = (vy + rng.gen_range(-0.3..0.3)).clamp(-cfg.max_speed, cfg.max_speed);
        cx += vx;
        cy += vy;
        if cx < margin || cx > fw as f64 - margin {
            vx = -vx;
            cx = cx.clamp(margin, fw as f64 - margin);
        }
        if cy < margin || cy > fh as f64 - margin {
            vy = -vy;
            cy = cy.clamp(margin, fh as f64 - margin);
        }
        // Uniform rescaling keeps the aspect ratio fixed.
        let f = rng.gen_range(0.99..1.01);
        if (w * f).clamp(cfg.min_target, cfg.max_target) == w * f && (h * f).clamp(cfg.min_target, cfg.max_target) == h * f {
            w *= f;
            h *= f;
        }
    }
    Sequence::from_memory(format!("synth-{seed}-{index:03}"), frames, boxes)
}

pub fn generate_corpus(cfg: &SynthConfig, seed: u64, count: usize) -> Result<Vec<Sequence>> {
    (0..count).map(|i| generate_sequence(cfg, seed, i)).collect()
}

/// Writes `count` sequences under `out_dir`, one directory each.
pub fn write_corpus(cfg: &SynthConfig, seed: u64, count: usize, out_dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let seq = generate_sequence(cfg, seed, i)?;
        seq.save(&out_dir.join(seq.id()))?;
        ids.push(seq.id().to_string());
    }
    Ok(ids)
}
