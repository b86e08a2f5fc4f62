//! Plugging a different tracker into the harness through the adapter trait.
//!
//! The tracker here has no learned parameters: it scores each response cell
//! by how closely the local mean colour matches the template's. Once
//! registered it is evaluated exactly like the toy victim.
//!
//! `cargo run --release --example custom_tracker`

use std::sync::Arc;

use ad2attack::evaluation::{aggregate, run_all, AttackMode};
use ad2attack::image::Image;
use ad2attack::synth::{generate_corpus, SynthConfig};
use ad2attack::tensor::Tensor;
use ad2attack::victim::{SiameseTracker, TrackerRegistry};

/// Colour-histogram-free template matching on a coarse grid.
struct MeanColourTracker {
    grid: usize,
}

impl MeanColourTracker {
    const SEARCH: usize = 64;
    const TEMPLATE: usize = 32;

    fn stride(&self) -> usize {
        Self::SEARCH / self.grid
    }
}

impl SiameseTracker for MeanColourTracker {
    fn search_size(&self) -> usize {
        Self::SEARCH
    }

    fn template_size(&self) -> usize {
        Self::TEMPLATE
    }

    fn context_search(&self) -> f64 {
        2.0
    }

    fn context_template(&self) -> f64 {
        1.0
    }

    fn response_stride(&self) -> f64 {
        self.stride() as f64
    }

    fn embed_template(&self, patch: &Image) -> ad2attack::Result<Tensor> {
        // The central half of the template patch holds the target.
        let (q, h) = (Self::TEMPLATE / 4, Self::TEMPLATE / 2);
        let mean = |c: usize| {
            let mut s = 0.0;
            for y in q..q + h {
                for x in q..q + h {
                    s += patch.get(c, y, x);
                }
            }
            s / (h * h) as f64
        };
        Ok(Tensor::from_vec(&[3], (0..3).map(mean).collect()))
    }

    fn respond(&self, template: &Tensor, search: &Image) -> ad2attack::Result<(Tensor, Tensor)> {
        let (g, s) = (self.grid, self.stride());
        let mut score = Tensor::zeros(&[2, g, g]);
        for i in 0..g {
            for j in 0..g {
                let mut d = 0.0;
                for c in 0..3 {
                    let mut m = 0.0;
                    for y in i * s..(i + 1) * s {
                        for x in j * s..(j + 1) * s {
                            m += search.get(c, y, x);
                        }
                    }
                    d += (m / (s * s) as f64 - template.data()[c]).powi(2);
                }
                // Background logit first, then target.
                score.data_mut()[g * g + i * g + j] = -20.0 * d;
            }
        }
        Ok((score, Tensor::zeros(&[4, g, g])))
    }
}

fn main() -> ad2attack::Result<()> {
    let mut registry = TrackerRegistry::new();
    registry.register("mean-colour", Arc::new(MeanColourTracker { grid: 16 }))?;
    let tracker = registry.get("mean-colour")?;

    let synth = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let seqs = generate_corpus(&synth, 5, 4)?;
    for mode in [AttackMode::Clean, AttackMode::DownUp] {
        let m = aggregate(&run_all(tracker.as_ref(), &seqs, mode, None, 1)?);
        println!("{:<8} precision {:.3} success {:.3}", mode.name(), m.precision, m.success_auc);
    }
    Ok(())
}
