//! Chaotic modulation of wavelet detail coefficients.
//!
//! Every selected detail coefficient receives `m[k] * scale`, where `m` is
//! the `z3` sequence of a Chua trajectory and `k` runs over the coefficients
//! in canonical order: finest level first, then LH, HL, HH within a level,
//! row-major within a band. The approximation band is never touched.

use serde::{Deserialize, Serialize};

use crate::chaos::{self, ChaosState, ChuaParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::wavelet::{dwt2d_forward, dwt2d_inverse, FilterBank, WaveletPyramid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulationConfig {
    pub scale: f64,
    /// 1-based levels to modulate; `None` selects every level.
    pub level_mask: Option<Vec<usize>>,
    pub chaos_step: f64,
    pub chaos_burn_in: usize,
    pub chaos_stride: usize,
    pub chaos_initial: ChaosState,
    pub normalize_sequence: bool,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            scale: 0.01,
            level_mask: None,
            chaos_step: chaos::DEFAULT_STEP,
            chaos_burn_in: chaos::DEFAULT_BURN_IN,
            chaos_stride: 1,
            chaos_initial: ChaosState::standard_initial(),
            normalize_sequence: false,
        }
    }
}

impl ModulationConfig {
    pub fn validate(&self, levels: usize) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be >= 0, got {}", self.scale)));
        }
        if let Some(mask) = &self.level_mask {
            if let Some(bad) = mask.iter().find(|&&l| l == 0 || l > levels) {
                return Err(Error::invalid(format!(
                    "level_mask entry {bad} outside 1..={levels}"
                )));
            }
        }
        Ok(())
    }

    pub fn selects(&self, level: usize) -> bool {
        self.level_mask
            .as_ref()
            .is_none_or(|mask| mask.contains(&level))
    }
}

/// Number of detail coefficients selected by the mask.
pub fn required_length(pyramid: &WaveletPyramid, config: &ModulationConfig) -> usize {
    pyramid
        .details
        .iter()
        .enumerate()
        .filter(|(i, _)| config.selects(i + 1))
        .map(|(_, d)| d.coefficient_count())
        .sum()
}

/// Adds `m[k] * scale` to each selected detail coefficient.
pub fn modulate_pyramid(
    pyramid: &WaveletPyramid,
    m: &[f64],
    config: &ModulationConfig,
) -> Result<WaveletPyramid> {
    config.validate(pyramid.levels)?;
    let need = required_length(pyramid, config);
    if m.len() < need {
        return Err(Error::invalid(format!(
            "modulation sequence has {} values, {need} required",
            m.len()
        )));
    }
    let mut out = pyramid.clone();
    let mut seq = m.iter();
    for (i, bands) in out.details.iter_mut().enumerate() {
        if !config.selects(i + 1) {
            continue;
        }
        for band in bands.bands_mut() {
            for (c, v) in band.as_mut_slice().iter_mut().zip(seq.by_ref()) {
                *c += v * config.scale;
            }
        }
    }
    Ok(out)
}

/// Generates the modulation sequence for `count` coefficients.
pub fn chaotic_sequence(
    count: usize,
    config: &ModulationConfig,
    params: &ChuaParams,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let traj = chaos::integrate_strided(
        config.chaos_initial,
        params,
        config.chaos_step,
        config.chaos_burn_in,
        count,
        config.chaos_stride,
    )?;
    let mut seq = chaos::modulation_sequence(&traj, count)?;
    if config.normalize_sequence {
        chaos::normalize_sequence(&mut seq);
    }
    Ok(seq)
}

/// Forward transform, modulation with a freshly integrated trajectory,
/// inverse transform.
pub fn enhance_image(
    image: &Matrix,
    bank: &FilterBank,
    levels: usize,
    config: &ModulationConfig,
    params: &ChuaParams,
) -> Result<Matrix> {
    Enhancer::new(bank.clone(), levels, config.clone(), *params)?.enhance(image)
}

/// Reusable enhancement stage.
///
/// Every image restarts the chaotic system from the same initial state, so
/// the sequence depends only on the number of coefficients and is cached for
/// the most recent image shape.
#[derive(Debug, Clone)]
pub struct Enhancer {
    bank: FilterBank,
    levels: usize,
    config: ModulationConfig,
    params: ChuaParams,
    cached: Option<(usize, Vec<f64>)>,
}

impl Enhancer {
    pub fn new(
        bank: FilterBank,
        levels: usize,
        config: ModulationConfig,
        params: ChuaParams,
    ) -> Result<Self> {
        config.validate(levels)?;
        params.validate()?;
        Ok(Self {
            bank,
            levels,
            config,
            params,
            cached: None,
        })
    }

    pub fn config(&self) -> &ModulationConfig {
        &self.config
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn enhance(&mut self, image: &Matrix) -> Result<Matrix> {
        let pyramid = dwt2d_forward(image, &self.bank, self.levels)?;
        let need = required_length(&pyramid, &self.config);
        let seq = match &self.cached {
            Some((n, seq)) if *n == need => seq,
            _ => {
                let seq = chaotic_sequence(need, &self.config, &self.params)?;
                &self.cached.insert((need, seq)).1
            }
        };
        let modulated = modulate_pyramid(&pyramid, seq, &self.config)?;
        dwt2d_inverse(&modulated, &self.bank)
    }
}

/// Element-wise `|original - enhanced|`.
pub fn difference_map(original: &Matrix, enhanced: &Matrix) -> Result<Matrix> {
    if original.shape() != enhanced.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            original.shape(),
            enhanced.shape()
        )));
    }
    let data = original
        .as_slice()
        .iter()
        .zip(enhanced.as_slice())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Matrix::from_vec(original.rows(), original.cols(), data)
}

/// Largest sum of absolute synthesis taps landing on one output phase.
fn polyphase_gain(f: &crate::wavelet::Filter, parity: isize) -> f64 {
    let r = f.radius() as isize;
    (-r..=r)
        .filter(|t| t.rem_euclid(2) == parity)
        .map(|t| f.tap(t).abs())
        .sum()
}

/// Upper bound on `max |enhanced - original|` per unit of `max |m[k] * scale|`.
///
/// Each output sample of a 1-D synthesis step draws on low coefficients
/// through one polyphase component of the synthesis low-pass and on high
/// coefficients through one component of the synthesis high-pass; the bound
/// takes the worse phase and chains it through rows and columns, coarsest
/// level first.
pub fn perturbation_gain(bank: &FilterBank, levels: usize, config: &ModulationConfig) -> f64 {
    // phase 0: output at an even position sees low taps at even offsets and
    // high taps at odd offsets; phase 1 the converse
    let lo = polyphase_gain(&bank.synthesis_low, 0).max(polyphase_gain(&bank.synthesis_low, 1));
    let hi = polyphase_gain(&bank.synthesis_high, 1).max(polyphase_gain(&bank.synthesis_high, 0));
    let mut approx_bound = 0.0;
    for level in (1..=levels).rev() {
        let d = if config.selects(level) { 1.0 } else { 0.0 };
        let row_lo = lo * approx_bound + hi * d;
        let row_hi = lo * d + hi * d;
        approx_bound = lo * row_lo + hi * row_hi;
    }
    approx_bound
}
