//! CDF 9/7 biorthogonal discrete wavelet transform.
//!
//! The transform is realized by direct convolution with the four filters of
//! [`FilterBank`], using whole-point symmetric extension at both signal
//! boundaries. Low-pass outputs are taken at even input positions and
//! high-pass outputs at odd positions (the JPEG 2000 phase convention), which
//! together with symmetric extension gives perfect reconstruction for every
//! even-length signal.
//!
//! The 2-D transform is separable: each level filters rows, then columns, and
//! recurses on the low/low band.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A symmetric FIR filter stored as taps for indices `-radius..=radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    taps: Vec<f64>,
}

impl Filter {
    /// Builds a symmetric filter from the taps at `0, 1, .., radius`.
    pub fn symmetric(half: &[f64]) -> Self {
        assert!(!half.is_empty());
        let r = half.len() - 1;
        let taps = (0..=2 * r)
            .map(|i| half[(i as isize - r as isize).unsigned_abs()])
            .collect();
        Self { taps }
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Tap at signed index `n`; zero outside the support.
    #[inline]
    pub fn tap(&self, n: isize) -> f64 {
        let r = self.radius() as isize;
        if n < -r || n > r {
            0.0
        } else {
            self.taps[(n + r) as usize]
        }
    }

    /// Taps ordered from index `-radius` to `+radius`.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

/// Analysis and synthesis filters of a biorthogonal wavelet.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub analysis_low: Filter,
    pub analysis_high: Filter,
    pub synthesis_low: Filter,
    pub synthesis_high: Filter,
}

impl Default for FilterBank {
    fn default() -> Self {
        default_cdf97()
    }
}

/// The CDF 9/7 filter bank.
pub fn default_cdf97() -> FilterBank {
    FilterBank {
        analysis_low: Filter::symmetric(&[
            0.602949018236360,
            0.266864118442875,
            -0.078223266528990,
            -0.016864118442875,
            0.026748757410810,
        ]),
        analysis_high: Filter::symmetric(&[
            1.115087052457000,
            -0.591271763114250,
            -0.057543526228500,
            0.091271763114250,
        ]),
        synthesis_low: Filter::symmetric(&[
            1.115087052457000,
            0.591271763114250,
            -0.057543526228500,
            -0.091271763114250,
        ]),
        synthesis_high: Filter::symmetric(&[
            0.602949018236360,
            -0.266864118442875,
            -0.078223266528990,
            0.016864118442875,
            0.026748757410810,
        ]),
    }
}

/// Whole-point symmetric reflection of `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let j = i.rem_euclid(period);
    if j >= n as isize {
        (period - j) as usize
    } else {
        j as usize
    }
}

fn analyze_into(x: &[f64], bank: &FilterBank, lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len();
    let lr = bank.analysis_low.radius() as isize;
    let hr = bank.analysis_high.radius() as isize;
    for k in 0..n / 2 {
        let c = 2 * k as isize;
        let mut acc = 0.0;
        for m in -lr..=lr {
            acc += bank.analysis_low.tap(m) * x[reflect(c - m, n)];
        }
        lo[k] = acc;
        let c = c + 1;
        let mut acc = 0.0;
        for m in -hr..=hr {
            acc += bank.analysis_high.tap(m) * x[reflect(c - m, n)];
        }
        hi[k] = acc;
    }
}

fn synthesize_into(lo: &[f64], hi: &[f64], bank: &FilterBank, out: &mut [f64]) {
    let n = 2 * lo.len();
    // interleaved coefficient sequence: low at even positions, high at odd
    let coeff = |j: usize| if j % 2 == 0 { lo[j / 2] } else { hi[j / 2] };
    let r = bank
        .synthesis_low
        .radius()
        .max(bank.synthesis_high.radius()) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in -r..=r {
            let pos = i as isize + t;
            let j = reflect(pos, n);
            let g = if pos.rem_euclid(2) == 0 {
                bank.synthesis_low.tap(t)
            } else {
                bank.synthesis_high.tap(t)
            };
            acc += g * coeff(j);
        }
        *o = acc;
    }
}

/// One level of the 1-D forward transform. Returns `(approx, detail)`.
pub fn dwt1d_forward(signal: &[f64], bank: &FilterBank) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.is_empty() || signal.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "signal length must be even and >= 2, got {}",
            signal.len()
        )));
    }
    let half = signal.len() / 2;
    let mut lo = vec![0.0; half];
    let mut hi = vec![0.0; half];
    analyze_into(signal, bank, &mut lo, &mut hi);
    Ok((lo, hi))
}

/// One level of the 1-D inverse transform.
pub fn dwt1d_inverse(approx: &[f64], detail: &[f64], bank: &FilterBank) -> Result<Vec<f64>> {
    if approx.is_empty() || approx.len() != detail.len() {
        return Err(Error::invalid(format!(
            "approx/detail lengths must be equal and >= 1, got {} and {}",
            approx.len(),
            detail.len()
        )));
    }
    let mut out = vec![0.0; 2 * approx.len()];
    synthesize_into(approx, detail, bank, &mut out);
    Ok(out)
}

/// Detail subbands of one decomposition level.
///
/// `lh` is low-pass along rows and high-pass along columns (horizontal
/// structure), `hl` the converse (vertical structure), `hh` high-pass in both
/// directions (diagonal structure).
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub lh: Matrix,
    pub hl: Matrix,
    pub hh: Matrix,
}

impl DetailBands {
    /// Bands in canonical order: LH, HL, HH.
    pub fn bands(&self) -> [&Matrix; 3] {
        [&self.lh, &self.hl, &self.hh]
    }

    pub fn bands_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.lh, &mut self.hl, &mut self.hh]
    }

    pub fn coefficient_count(&self) -> usize {
        self.lh.len() + self.hl.len() + self.hh.len()
    }
}

/// Multi-level 2-D decomposition. `details[0]` is level 1 (finest).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub levels: usize,
    pub approx: Matrix,
    pub details: Vec<DetailBands>,
    pub source_shape: (usize, usize),
}

impl WaveletPyramid {
    pub fn zeros(height: usize, width: usize, levels: usize) -> Result<Self> {
        check_divisible(height, width, levels)?;
        let details = (1..=levels)
            .map(|k| {
                let (h, w) = (height >> k, width >> k);
                DetailBands {
                    lh: Matrix::zeros(h, w),
                    hl: Matrix::zeros(h, w),
                    hh: Matrix::zeros(h, w),
                }
            })
            .collect();
        Ok(Self {
            levels,
            approx: Matrix::zeros(height >> levels, width >> levels),
            details,
            source_shape: (height, width),
        })
    }

    pub fn coefficient_count(&self) -> usize {
        self.approx.len()
            + self
                .details
                .iter()
                .map(DetailBands::coefficient_count)
                .sum::<usize>()
    }

    /// Checks the shape invariants.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.source_shape;
        if self.levels == 0 || self.details.len() != self.levels {
            return Err(Error::invalid(format!(
                "pyramid declares {} levels but holds {} detail triples",
                self.levels,
                self.details.len()
            )));
        }
        check_divisible(h, w, self.levels)?;
        for (i, d) in self.details.iter().enumerate() {
            let want = (h >> (i + 1), w >> (i + 1));
            for band in d.bands() {
                if band.shape() != want {
                    return Err(Error::invalid(format!(
                        "level {} band has shape {:?}, expected {want:?}",
                        i + 1,
                        band.shape()
                    )));
                }
            }
        }
        let want = (h >> self.levels, w >> self.levels);
        if self.approx.shape() != want {
            return Err(Error::invalid(format!(
                "approximation band has shape {:?}, expected {want:?}",
                self.approx.shape()
            )));
        }
        Ok(())
    }

    /// Writes `approx.csv` and `level{k}_{lh,hl,hh}.csv` into `dir`.
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let write = |name: String, m: &Matrix| -> Result<()> {
            let f = fs::File::create(dir.join(name))?;
            m.write_csv(BufWriter::new(f))
        };
        write("approx.csv".into(), &self.approx)?;
        for (i, d) in self.details.iter().enumerate() {
            for (tag, band) in ["lh", "hl", "hh"].iter().zip(d.bands()) {
                write(format!("level{}_{tag}.csv", i + 1), band)?;
            }
        }
        Ok(())
    }
}

fn check_divisible(height: usize, width: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("levels must be positive"));
    }
    let unit = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| Error::invalid(format!("{levels} levels is too deep")))?;
    if height == 0 || width == 0 || height % unit != 0 || width % unit != 0 {
        return Err(Error::invalid(format!(
            "image {height}x{width} is not divisible by 2^{levels} = {unit}"
        )));
    }
    Ok(())
}

/// One separable analysis level: rows first, then columns.
fn forward_level(img: &Matrix, bank: &FilterBank) -> (Matrix, DetailBands) {
    let (h, w) = img.shape();
    let (h2, w2) = (h / 2, w / 2);
    // row pass
    let mut row_lo = Matrix::zeros(h, w2);
    let mut row_hi = Matrix::zeros(h, w2);
    let mut lo = vec![0.0; w2];
    let mut hi = vec![0.0; w2];
    for r in 0..h {
        analyze_into(img.row(r), bank, &mut lo, &mut hi);
        row_lo.as_mut_slice()[r * w2..(r + 1) * w2].copy_from_slice(&lo);
        row_hi.as_mut_slice()[r * w2..(r + 1) * w2].copy_from_slice(&hi);
    }
    // column pass
    let columns = |src: &Matrix| -> (Matrix, Matrix) {
        let mut out_lo = Matrix::zeros(h2, w2);
        let mut out_hi = Matrix::zeros(h2, w2);
        let mut col = vec![0.0; h];
        let mut lo = vec![0.0; h2];
        let mut hi = vec![0.0; h2];
        for c in 0..w2 {
            for (r, v) in col.iter_mut().enumerate() {
                *v = src.get(r, c);
            }
            analyze_into(&col, bank, &mut lo, &mut hi);
            for r in 0..h2 {
                out_lo.set(r, c, lo[r]);
                out_hi.set(r, c, hi[r]);
            }
        }
        (out_lo, out_hi)
    };
    let (ll, lh) = columns(&row_lo);
    let (hl, hh) = columns(&row_hi);
    (ll, DetailBands { lh, hl, hh })
}

fn inverse_level(ll: &Matrix, d: &DetailBands, bank: &FilterBank) -> Matrix {
    let (h2, w2) = ll.shape();
    let (h, w) = (2 * h2, 2 * w2);
    let columns = |lo_band: &Matrix, hi_band: &Matrix| -> Matrix {
        let mut out = Matrix::zeros(h, w2);
        let mut lo = vec![0.0; h2];
        let mut hi = vec![0.0; h2];
        let mut col = vec![0.0; h];
        for c in 0..w2 {
            for r in 0..h2 {
                lo[r] = lo_band.get(r, c);
                hi[r] = hi_band.get(r, c);
            }
            synthesize_into(&lo, &hi, bank, &mut col);
            for (r, v) in col.iter().enumerate() {
                out.set(r, c, *v);
            }
        }
        out
    };
    let row_lo = columns(ll, &d.lh);
    let row_hi = columns(&d.hl, &d.hh);
    let mut out = Matrix::zeros(h, w);
    for r in 0..h {
        let dst = &mut out.as_mut_slice()[r * w..(r + 1) * w];
        synthesize_into(row_lo.row(r), row_hi.row(r), bank, dst);
    }
    out
}

/// Multi-level separable 2-D forward transform.
pub fn dwt2d_forward(image: &Matrix, bank: &FilterBank, levels: usize) -> Result<WaveletPyramid> {
    let (h, w) = image.shape();
    check_divisible(h, w, levels)?;
    let mut details = Vec::with_capacity(levels);
    let mut current = image.clone();
    for _ in 0..levels {
        let (ll, bands) = forward_level(&current, bank);
        details.push(bands);
        current = ll;
    }
    Ok(WaveletPyramid {
        levels,
        approx: current,
        details,
        source_shape: (h, w),
    })
}

/// Inverse of [`dwt2d_forward`].
pub fn dwt2d_inverse(pyramid: &WaveletPyramid, bank: &FilterBank) -> Result<Matrix> {
    pyramid.validate()?;
    let mut current = pyramid.approx.clone();
    for bands in pyramid.details.iter().rev() {
        current = inverse_level(&current, bands, bank);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight transcription of the analysis sums over an explicitly
    /// materialized symmetric extension.
    fn oracle_forward(x: &[f64], bank: &FilterBank) -> (Vec<f64>, Vec<f64>) {
        let n = x.len() as isize;
        let pad = 8isize;
        let ext: Vec<f64> = (-pad..n + pad)
            .map(|i| {
                let mut j = i;
                while j < 0 || j >= n {
                    if j < 0 {
                        j = -j;
                    }
                    if j >= n {
                        j = 2 * (n - 1) - j;
                    }
                }
                x[j as usize]
            })
            .collect();
        let at = |i: isize| ext[(i + pad) as usize];
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for k in 0..n / 2 {
            lo.push((-4..=4).map(|m| bank.analysis_low.tap(m) * at(2 * k - m)).sum());
            hi.push((-3..=3).map(|m| bank.analysis_high.tap(m) * at(2 * k + 1 - m)).sum());
        }
        (lo, hi)
    }

    fn random_matrix(rng: &mut impl Rng, h: usize, w: usize) -> Matrix {
        Matrix::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    #[test]
    fn table_values() {
        let b = default_cdf97();
        assert_eq!(b.analysis_low.tap(0), 0.602949018236360);
        assert_eq!(b.analysis_high.tap(1), -0.591271763114250);
        assert_eq!(b.analysis_low.tap(-4), 0.026748757410810);
        assert_eq!(b.analysis_low.tap(4), 0.026748757410810);
        assert_eq!(b.analysis_low.len(), 9);
        assert_eq!(b.analysis_high.len(), 7);
        assert_eq!(b.synthesis_low.len(), 7);
        assert_eq!(b.synthesis_high.len(), 9);
        for f in [&b.analysis_low, &b.analysis_high, &b.synthesis_low, &b.synthesis_high] {
            let r = f.radius() as isize;
            for n in 0..=r {
                assert_eq!(f.tap(n), f.tap(-n));
            }
        }
        assert!(b.analysis_high.sum().abs() < 1e-12);
    }

    #[test]
    fn constant_signal_has_zero_detail() {
        let (lo, hi) = dwt1d_forward(&[5.0; 16], &default_cdf97()).unwrap();
        assert!(hi.iter().all(|d| d.abs() < 1e-12));
        assert!(lo.iter().all(|a| (a - 5.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_lengths() {
        let b = default_cdf97();
        assert!(dwt1d_forward(&[], &b).is_err());
        assert!(dwt1d_forward(&[1.0, 2.0, 3.0], &b).is_err());
        assert!(dwt1d_inverse(&[0.0; 4], &[0.0; 5], &b).is_err());
        assert!(dwt1d_inverse(&[], &[], &b).is_err());
    }

    #[test]
    fn cubic_ramp_annihilated_in_interior() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64).powi(3)).collect();
        let (_, hi) = dwt1d_forward(&x, &default_cdf97()).unwrap();
        for (k, d) in hi.iter().enumerate().take(28).skip(4) {
            assert!(d.abs() < 1e-8, "detail[{k}] = {d}");
        }
    }

    #[test]
    fn matches_direct_convolution_oracle() {
        let b = default_cdf97();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 4, 6, 10, 32] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lo, hi) = dwt1d_forward(&x, &b).unwrap();
            let (olo, ohi) = oracle_forward(&x, &b);
            for (a, o) in lo.iter().chain(&hi).zip(olo.iter().chain(&ohi)) {
                assert!((a - o).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn one_dimensional_round_trip() {
        let b = default_cdf97();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lo, hi) = dwt1d_forward(&x, &b).unwrap();
        let y = dwt1d_inverse(&lo, &hi, &b).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn single_coefficient_inverse() {
        let y = dwt1d_inverse(&[3.0], &[0.0], &default_cdf97()).unwrap();
        assert_eq!(y.len(), 2);
        assert!((y[0] - 3.0).abs() < 1e-12 && (y[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pyramid_shapes() {
        let img = Matrix::zeros(512, 512);
        let p = dwt2d_forward(&img, &default_cdf97(), 6).unwrap();
        assert_eq!(p.approx.shape(), (8, 8));
        assert_eq!(p.details.len(), 6);
        for (i, d) in p.details.iter().enumerate() {
            assert_eq!(d.lh.shape(), (512 >> (i + 1), 512 >> (i + 1)));
        }
        assert_eq!(p.coefficient_count(), 512 * 512);
        assert!(p.approx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_image_gives_zero_pyramid() {
        let p = dwt2d_forward(&Matrix::zeros(64, 64), &default_cdf97(), 3).unwrap();
        assert!(p.details.iter().all(|d| d.bands().iter().all(|b| b.energy() == 0.0)));
        let back = dwt2d_inverse(&WaveletPyramid::zeros(64, 64, 3).unwrap(), &default_cdf97()).unwrap();
        assert_eq!(back, Matrix::zeros(64, 64));
    }

    #[test]
    fn indivisible_image_rejected() {
        assert!(dwt2d_forward(&Matrix::zeros(100, 100), &default_cdf97(), 3).is_err());
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let mut p = WaveletPyramid::zeros(32, 32, 2).unwrap();
        p.details[1].hh = Matrix::zeros(4, 4);
        assert!(dwt2d_inverse(&p, &default_cdf97()).is_err());
        let mut p = WaveletPyramid::zeros(32, 32, 2).unwrap();
        p.details.pop();
        assert!(dwt2d_inverse(&p, &default_cdf97()).is_err());
    }

    #[test]
    fn two_dimensional_round_trip_and_psnr() {
        let b = default_cdf97();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_matrix(&mut rng, 256, 256);
        let back = dwt2d_inverse(&dwt2d_forward(&img, &b, 4).unwrap(), &b).unwrap();
        assert!(img.max_abs_diff(&back) < 1e-9);

        let img8 = Matrix::from_fn(64, 64, |_, _| rng.random_range(0..=255u8) as f64 / 255.0);
        let back = dwt2d_inverse(&dwt2d_forward(&img8, &b, 3).unwrap(), &b).unwrap();
        let mse = img8
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / img8.len() as f64;
        let psnr = 10.0 * (1.0 / mse).log10();
        assert!(psnr > 200.0, "psnr {psnr}");
    }

    #[test]
    fn renormalized_energy_close_to_image_energy() {
        // Table normalization has DC gain 1 on the low-pass and Nyquist gain
        // 2 on the high-pass; rescaling each 1-D pass by sqrt(2) and
        // 1/sqrt(2) puts the bands on an orthonormal-like footing.
        let b = default_cdf97();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for levels in 1..=4 {
            let img = random_matrix(&mut rng, 64, 64);
            let p = dwt2d_forward(&img, &b, levels).unwrap();
            let mut e = p.approx.energy() * 4f64.powi(levels as i32);
            for (i, d) in p.details.iter().enumerate() {
                let lvl = 4f64.powi(i as i32);
                e += lvl * (d.lh.energy() + d.hl.energy() + d.hh.energy() / 4.0);
            }
            let ratio = e / img.energy();
            assert!((ratio - 1.0).abs() < 0.05, "levels {levels}: ratio {ratio}");
        }
    }

    #[test]
    fn constant_transform_independent_of_phase() {
        let b = default_cdf97();
        let x = vec![2.5; 32];
        let mut y = x.clone();
        y.rotate_left(1);
        assert_eq!(dwt1d_forward(&x, &b).unwrap(), dwt1d_forward(&y, &b).unwrap());
    }

    proptest! {
        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
            let b = default_cdf97();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, 32, 16);
            let y = random_matrix(&mut rng, 32, 16);
            let combo = Matrix::from_fn(32, 16, |r, k| a * x.get(r, k) + c * y.get(r, k));
            let px = dwt2d_forward(&x, &b, 2).unwrap();
            let py = dwt2d_forward(&y, &b, 2).unwrap();
            let pc = dwt2d_forward(&combo, &b, 2).unwrap();
            let check = |m: &Matrix, mx: &Matrix, my: &Matrix| {
                for i in 0..m.len() {
                    let want = a * mx.as_slice()[i] + c * my.as_slice()[i];
                    assert!((m.as_slice()[i] - want).abs() < 1e-10);
                }
            };
            check(&pc.approx, &px.approx, &py.approx);
            for l in 0..2 {
                for j in 0..3 {
                    check(pc.details[l].bands()[j], px.details[l].bands()[j], py.details[l].bands()[j]);
                }
            }
        }

        #[test]
        fn perfect_reconstruction(seed in any::<u64>(), hexp in 1usize..5, wexp in 1usize..5, levels in 1usize..4) {
            let b = default_cdf97();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = (1 << levels) * hexp;
            let w = (1 << levels) * wexp;
            let img = Matrix::from_fn(h, w, |_, _| rng.random_range(-10.0..10.0));
            let back = dwt2d_inverse(&dwt2d_forward(&img, &b, levels).unwrap(), &b).unwrap();
            prop_assert!(img.max_abs_diff(&back) < 1e-9);
        }
    }
}
