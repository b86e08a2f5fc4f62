//! Attack objectives over the victim's response maps and the search patch.
//!
//! All losses are pure functions that return their value together with the
//! analytic gradient with respect to the adversarial input they consume, so
//! the training loop can seed the tape's reverse pass with them directly.
//! The clean response only selects which cells are attacked.

use serde::{Deserialize, Serialize};

use crate::autograd::sigmoid;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;
use crate::victim::{RegressionMap, ScoreMap};

/// How the background term enters the score-reversal loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundSign {
    /// Background term added, exactly as typeset.
    PaperLiteral,
    /// Background term subtracted, so minimising raises background probability.
    IntentCorrected,
}

/// How the attacked background region is selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskRule {
    /// `P_b < -ε`, exactly as typeset (never true).
    PaperLiteral,
    /// `P_b > ε`.
    IntentCorrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub phi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_b: f64,
    pub tau_c: f64,
    pub background_sign: BackgroundSign,
    pub mask_rule: MaskRule,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            phi: 1.0,
            alpha: 1.0,
            beta: 10.0,
            gamma: 700.0,
            tau_b: -5.0,
            tau_c: 10.0,
            background_sign: BackgroundSign::IntentCorrected,
            mask_rule: MaskRule::IntentCorrected,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon must lie in (0, 1)"));
        }
        // Below 0.5 a cell could be both target and background.
        if self.mask_rule == MaskRule::IntentCorrected && self.epsilon < 0.5 {
            return Err(Error::config("the intent-corrected mask rule needs epsilon ≥ 0.5"));
        }
        let weights = [self.phi, self.alpha, self.beta, self.gamma];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        if !(self.tau_b.is_finite() && self.tau_c.is_finite()) {
            return Err(Error::config("thresholds must be finite"));
        }
        Ok(())
    }
}

/// Per-cell two-way softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbs {
    pub background: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn class_probs(score: &ScoreMap) -> ClassProbs {
    let target: Vec<f64> = (0..score.cells()).map(|i| score.target_prob(i)).collect();
    // sigmoid(b - t) rather than 1 - P_t keeps precision near saturation.
    let background = (0..score.cells())
        .map(|i| {
            let (b, t) = score.logits_at(i);
            sigmoid(b - t)
        })
        .collect();
    ClassProbs { background, target }
}

/// Attacked cells, selected from the clean response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMasks {
    pub target: Vec<bool>,
    pub background: Vec<bool>,
    pub n_target: usize,
    pub n_background: usize,
}

pub fn region_masks(clean_score: &ScoreMap, cfg: &AttackConfig) -> RegionMasks {
    let p = class_probs(clean_score);
    let target: Vec<bool> = p.target.iter().map(|&t| t > cfg.epsilon).collect();
    let background: Vec<bool> = match cfg.mask_rule {
        MaskRule::IntentCorrected => p.background.iter().map(|&b| b > cfg.epsilon).collect(),
        MaskRule::PaperLiteral => p.background.iter().map(|&b| b < -cfg.epsilon).collect(),
    };
    RegionMasks {
        n_target: target.iter().filter(|m| **m).count(),
        n_background: background.iter().filter(|m| **m).count(),
        target,
        background,
    }
}

/// A loss value with its gradient with respect to the adversarial input.
#[derive(Clone, Debug, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub grad: Tensor,
}

fn check_grid(masks: &RegionMasks, cells: usize) -> Result<()> {
    if masks.target.len() != cells || masks.background.len() != cells {
        return Err(Error::invalid("region masks do not match the response grid"));
    }
    Ok(())
}

/// Score-reversal loss; gradient is with respect to the adversarial logits.
pub fn score_reversal_loss(clean: &ScoreMap, adv: &ScoreMap, masks: &RegionMasks, cfg: &AttackConfig) -> Result<Loss> {
    if clean.grid() != adv.grid() {
        return Err(Error::invalid("clean and adversarial score maps differ in shape"));
    }
    let cells = adv.cells();
    check_grid(masks, cells)?;
    let mut grad = Tensor::zeros(adv.tensor().shape());
    let n = masks.n_target + masks.n_background;
    if n == 0 {
        return Ok(Loss { value: 0.0, grad });
    }
    let pc = class_probs(clean);
    let pa = class_probs(adv);
    let bg_sign = match cfg.background_sign {
        BackgroundSign::IntentCorrected => -1.0,
        BackgroundSign::PaperLiteral => 1.0,
    };
    let k = cfg.phi / n as f64;
    let mut value = 0.0;
    let g = grad.data_mut();
    for i in 0..cells {
        // dP_t/dl_t = P_t·P_b = -dP_t/dl_b, and P_b = 1 - P_t.
        let s = pa.target[i] * pa.background[i];
        if masks.target[i] {
            value += pa.target[i] - pc.target[i];
            g[cells + i] += k * s;
            g[i] -= k * s;
        }
        if masks.background[i] {
            value += bg_sign * (pa.background[i] - pc.background[i]);
            g[i] += bg_sign * k * s;
            g[cells + i] -= bg_sign * k * s;
        }
    }
    Ok(Loss { value: k * value, grad })
}

/// Box-drift loss over the clean target cells; gradient is with respect to the regression map.
pub fn box_drift_loss(adv_reg: &RegressionMap, masks: &RegionMasks, cfg: &AttackConfig) -> Result<Loss> {
    let (h, w) = adv_reg.grid();
    let cells = h * w;
    check_grid(masks, cells)?;
    let mut grad = Tensor::zeros(adv_reg.tensor().shape());
    if masks.n_target == 0 {
        return Ok(Loss { value: 0.0, grad });
    }
    let n = masks.n_target as f64;
    let (shrink, drift) = (cfg.beta / n, cfg.alpha / n);
    let mut value = 0.0;
    let g = grad.data_mut();
    for i in (0..cells).filter(|i| masks.target[*i]) {
        let [x, y, rw, rh] = adv_reg.at(i);
        let size = rw + rh;
        if size > cfg.tau_b {
            value += shrink * size;
            g[2 * cells + i] += shrink;
            g[3 * cells + i] += shrink;
        } else {
            value += shrink * cfg.tau_b;
        }
        let offset = x * x + y * y;
        if offset < cfg.tau_c {
            value -= drift * offset;
            g[i] -= drift * 2.0 * x;
            g[cells + i] -= drift * 2.0 * y;
        } else {
            value -= drift * cfg.tau_c;
        }
    }
    Ok(Loss { value, grad })
}

/// Perceptibility loss on raw patch tensors; gradient is with respect to `adv`.
pub fn perceptibility_terms(clean: &Tensor, adv: &Tensor, gamma: f64) -> Result<Loss> {
    if clean.shape() != adv.shape() {
        return Err(Error::invalid("clean and adversarial patches differ in shape"));
    }
    let n = adv.len() as f64;
    let norm = adv
        .data()
        .iter()
        .zip(clean.data())
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    let grad = if norm > 0.0 {
        let k = gamma / (n * norm);
        Tensor::from_vec(
            adv.shape(),
            adv.data().iter().zip(clean.data()).map(|(a, c)| k * (a - c)).collect(),
        )
    } else {
        Tensor::zeros(adv.shape())
    };
    Ok(Loss {
        value: gamma / n * norm,
        grad,
    })
}

pub fn perceptibility_loss(clean: &Image, adv: &Image, cfg: &AttackConfig) -> Result<f64> {
    perceptibility_terms(&clean.to_tensor(), &adv.to_tensor(), cfg.gamma).map(|l| l.value)
}

/// Per-component values of the complete objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub score: f64,
    pub drift: f64,
    pub perceptibility: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.score, self.drift, self.perceptibility, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The complete objective and its gradients with respect to every adversarial input.
#[derive(Clone, Debug)]
pub struct TotalLoss {
    pub breakdown: LossBreakdown,
    pub grad_score: Tensor,
    pub grad_regression: Tensor,
    pub grad_patch: Tensor,
}

pub fn total_loss_terms(
    clean_patch: &Tensor,
    adv_patch: &Tensor,
    clean_score: &ScoreMap,
    adv_score: &ScoreMap,
    adv_reg: &RegressionMap,
    cfg: &AttackConfig,
) -> Result<TotalLoss> {
    let masks = region_masks(clean_score, cfg);
    let score = score_reversal_loss(clean_score, adv_score, &masks, cfg)?;
    let drift = box_drift_loss(adv_reg, &masks, cfg)?;
    let l2 = perceptibility_terms(clean_patch, adv_patch, cfg.gamma)?;
    Ok(TotalLoss {
        breakdown: LossBreakdown {
            score: score.value,
            drift: drift.value,
            perceptibility: l2.value,
            total: score.value + drift.value + l2.value,
        },
        grad_score: score.grad,
        grad_regression: drift.grad,
        grad_patch: l2.grad,
    })
}

pub fn total_loss(
    clean_patch: &Image,
    adv_patch: &Image,
    clean_score: &ScoreMap,
    adv_score: &ScoreMap,
    adv_reg: &RegressionMap,
    cfg: &AttackConfig,
) -> Result<TotalLoss> {
    total_loss_terms(
        &clean_patch.to_tensor(),
        &adv_patch.to_tensor(),
        clean_score,
        adv_score,
        adv_reg,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AttackConfig {
        AttackConfig::default()
    }

    #[test]
    fn defaults_carry_the_reference_weights() {
        let c = cfg();
        assert_eq!((c.alpha, c.beta, c.gamma, c.tau_b, c.tau_c), (1.0, 10.0, 700.0, -5.0, 10.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn softmax_by_hand() {
        let s = ScoreMap::from_fn(1, 2, |_, j| if j == 0 { (0.0, 0.0) } else { (0.0, 3f64.ln()) }).unwrap();
        let p = class_probs(&s);
        assert_eq!((p.background[0], p.target[0]), (0.5, 0.5));
        assert!((p.background[1] - 0.25).abs() < 1e-15 && (p.target[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_give_empty_masks() {
        let s = ScoreMap::from_fn(3, 3, |_, _| (1.0, 1.0)).unwrap();
        let m = region_masks(&s, &cfg());
        assert_eq!((m.n_target, m.n_background), (0, 0));
    }

    #[test]
    fn spike_cell_masks() {
        // P_t = 0.9 at the centre, 0.1 elsewhere.
        let l9 = 9f64.ln();
        let s = ScoreMap::from_fn(3, 3, |i, j| if (i, j) == (1, 1) { (0.0, l9) } else { (0.0, -l9) }).unwrap();
        let m = region_masks(&s, &cfg());
        assert_eq!(m.n_target, 1);
        assert!(m.target[4]);
        assert_eq!(m.n_background, 8);
        assert!(!m.background[4]);
    }

    #[test]
    fn paper_literal_rule_never_selects_background() {
        let c = AttackConfig {
            mask_rule: MaskRule::PaperLiteral,
            ..cfg()
        };
        let s = ScoreMap::from_fn(4, 4, |i, j| (i as f64 * 3.0, -(j as f64) * 5.0)).unwrap();
        assert_eq!(region_masks(&s, &c).n_background, 0);
    }

    #[test]
    fn single_target_cell_score_loss_by_hand() {
        let l9 = 9f64.ln();
        // Clean P_t = 0.9; adversarial P_t = 0.4 = sigmoid(ln(2/3)).
        let clean = ScoreMap::from_fn(1, 1, |_, _| (0.0, l9)).unwrap();
        let adv = ScoreMap::from_fn(1, 1, |_, _| (0.0, (2.0f64 / 3.0).ln())).unwrap();
        let masks = region_masks(&clean, &cfg());
        assert_eq!((masks.n_target, masks.n_background), (1, 0));
        let l = score_reversal_loss(&clean, &adv, &masks, &cfg()).unwrap();
        assert!((l.value + 0.5).abs() < 1e-12);
    }

    #[test]
    fn drift_loss_by_hand() {
        let one = RegionMasks {
            target: vec![true],
            background: vec![false],
            n_target: 1,
            n_background: 0,
        };
        let zero = RegressionMap::zeros(1, 1);
        assert_eq!(box_drift_loss(&zero, &one, &cfg()).unwrap().value, 0.0);
        let shrunk = RegressionMap::from_fn(1, 1, |_, _| [0.0, 0.0, -6.0, -4.0]).unwrap();
        assert_eq!(box_drift_loss(&shrunk, &one, &cfg()).unwrap().value, -50.0);
        let far = RegressionMap::from_fn(1, 1, |_, _| [3.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(box_drift_loss(&far, &one, &cfg()).unwrap().value, -10.0);
    }

    #[test]
    fn perceptibility_by_hand() {
        let clean = Tensor::from_vec(&[1, 1, 1], vec![0.5]);
        let adv = Tensor::from_vec(&[1, 1, 1], vec![0.6]);
        let l = perceptibility_terms(&clean, &adv, 700.0).unwrap();
        assert!((l.value - 70.0).abs() < 1e-9);
        let back = perceptibility_terms(&adv, &clean, 700.0).unwrap();
        assert_eq!(l.value, back.value);
        assert_eq!(perceptibility_terms(&clean, &clean, 700.0).unwrap().value, 0.0);
    }

    #[test]
    fn empty_masks_give_zero() {
        let s = ScoreMap::from_fn(2, 2, |_, _| (0.0, 0.0)).unwrap();
        let masks = region_masks(&s, &cfg());
        let adv = ScoreMap::from_fn(2, 2, |i, _| (i as f64, 2.0)).unwrap();
        assert_eq!(score_reversal_loss(&s, &adv, &masks, &cfg()).unwrap().value, 0.0);
        let reg = RegressionMap::from_fn(2, 2, |_, _| [1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(box_drift_loss(&reg, &masks, &cfg()).unwrap().value, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
        c.epsilon = 0.3;
        assert!(c.validate().is_err());
        c.mask_rule = MaskRule::PaperLiteral;
        assert!(c.validate().is_ok());
        c.gamma = -1.0;
        assert!(c.validate().is_err());
    }
}
