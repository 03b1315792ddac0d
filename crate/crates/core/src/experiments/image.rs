//! Patch-based denoising of 8-bit grayscale images with an overcomplete DCT
//! dictionary.
//!
//! Every overlapping 8x8 patch (stride 1) has its mean removed, is coded by
//! subspace pursuit either once or through general SR with least-squares
//! averaging, gets its mean back, and the overlapping estimates are
//! averaged per pixel.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{psnr, ExperimentConfig};
use crate::bayes;
use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientModel, Dictionary, DictionaryKind, RngSeed};
use crate::pursuits::Pursuit;
use crate::sr::{general_sr, Averaging, SrConfig, SrNoiseSpec};

pub const PATCH: usize = 8;

/// Row-major 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Rounds and clamps to `[0, 255]`.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, got: values.len() });
        }
        let pixels = values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Ok(Self { width, height, pixels })
    }

    pub fn read_pgm<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::ImageFormat("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token()?;
        if magic != "P5" {
            return Err(Error::ImageFormat(format!("expected binary PGM (P5), found `{magic}`")));
        }
        let num = |s: String| s.parse::<usize>().map_err(|_| Error::ImageFormat(format!("bad header field `{s}`")));
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval != 255 {
            return Err(Error::ImageFormat(format!("only 8-bit images are supported, maxval is {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let len = width * height;
        if width == 0 || height == 0 || bytes.len() < start + len {
            return Err(Error::ImageFormat(format!("raster shorter than {width}x{height}")));
        }
        Ok(Self { width, height, pixels: bytes[start..start + len].to_vec() })
    }

    pub fn read_pgm_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::read_pgm(std::io::BufReader::new(file))
    }

    pub fn write_pgm<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }
}

/// Separable overcomplete DCT on `patch x patch` blocks with `per_dim`
/// frequencies per axis: `patch^2` rows, `per_dim^2` atoms. Non-constant
/// 1-D atoms have their mean removed before normalisation.
pub fn overcomplete_dct(patch: usize, per_dim: usize) -> Result<Dictionary> {
    if patch == 0 || per_dim < patch {
        return invalid("need per_dim >= patch >= 1");
    }
    let mut d1 = DMatrix::zeros(patch, per_dim);
    for k in 0..per_dim {
        let mut col: Vec<f64> =
            (0..patch).map(|i| (i as f64 * k as f64 * std::f64::consts::PI / per_dim as f64).cos()).collect();
        if k > 0 {
            let mean = col.iter().sum::<f64>() / patch as f64;
            col.iter_mut().for_each(|v| *v -= mean);
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..patch {
            d1[(i, k)] = col[i] / norm;
        }
    }
    Dictionary::with_kind(d1.kronecker(&d1), DictionaryKind::Overcomplete)
}

/// Applies `code` to every mean-removed patch and averages the overlapping
/// reconstructions. `code` receives the patch index and the zero-mean patch
/// in column-major order.
pub fn patch_average<F>(image: &[f64], width: usize, height: usize, code: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if image.len() != width * height {
        return Err(Error::DimensionMismatch { expected: width * height, got: image.len() });
    }
    if width < PATCH || height < PATCH {
        return invalid(format!("image smaller than {PATCH}x{PATCH}"));
    }
    let cols = width - PATCH + 1;
    let count = cols * (height - PATCH + 1);
    let estimates: Vec<(f64, DVector<f64>)> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let patch = extract(image, width, idx % cols, idx / cols);
            let mean = patch.mean();
            let centred = patch.add_scalar(-mean);
            Ok((mean, code(idx, &centred)?))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; image.len()];
    let mut hits = vec![0u32; image.len()];
    for (idx, (mean, est)) in estimates.iter().enumerate() {
        let (x0, y0) = (idx % cols, idx / cols);
        for dx in 0..PATCH {
            for dy in 0..PATCH {
                let p = (y0 + dy) * width + x0 + dx;
                sum[p] += est[dx * PATCH + dy] + mean;
                hits[p] += 1;
            }
        }
    }
    Ok(sum.iter().zip(&hits).map(|(s, &h)| s / h as f64).collect())
}

fn extract(image: &[f64], width: usize, x0: usize, y0: usize) -> DVector<f64> {
    DVector::from_fn(PATCH * PATCH, |k, _| {
        let (dx, dy) = (k / PATCH, k % PATCH);
        image[(y0 + dy) * width + x0 + dx]
    })
}

/// Adds `N(0, sigma^2)` noise without clipping.
pub fn add_noise(image: &[f64], sigma: f64, seed: RngSeed) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = seed.rng();
    Ok(image.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatchCoder {
    /// Subspace pursuit followed by a least-squares fit.
    Plain { sparsity: usize },
    /// General SR with least-squares averaging over subspace pursuit.
    Sr { sparsity: usize, sigma_n: f64, iterations: usize, seed: u64 },
}

impl PatchCoder {
    fn code(&self, dict: &Dictionary, idx: usize, patch: &DVector<f64>) -> Result<DVector<f64>> {
        let alpha = match self {
            PatchCoder::Plain { sparsity } => {
                let support = Pursuit::Subspace { sparsity: *sparsity }.run(patch, dict)?.support;
                bayes::ls_estimate(dict, &support, patch)?
            }
            PatchCoder::Sr { sparsity, sigma_n, iterations, seed } => {
                let cfg = SrConfig {
                    noise: SrNoiseSpec::gaussian(*sigma_n),
                    iterations: *iterations,
                    pursuit: Pursuit::Subspace { sparsity: *sparsity },
                    averaging: Averaging::LsMean,
                    seed: RngSeed::new(*seed, 11).child(idx as u64),
                };
                general_sr(patch, dict, None::<CoefficientModel>, &cfg)?.estimate
            }
        };
        Ok(dict.synthesize(&alpha))
    }
}

/// Denoises `noisy` patch by patch.
pub fn denoise(noisy: &[f64], width: usize, height: usize, dict: &Dictionary, coder: &PatchCoder) -> Result<Vec<f64>> {
    if dict.n() != PATCH * PATCH {
        return Err(Error::DimensionMismatch { expected: PATCH * PATCH, got: dict.n() });
    }
    patch_average(noisy, width, height, |idx, p| coder.code(dict, idx, p))
}

/// Mean squared error of `coder` over a subset of patches, measured against
/// the clean patches.
fn patch_subset_error(
    clean: &[f64],
    noisy: &[f64],
    width: usize,
    subset: &[(usize, usize, usize)],
    dict: &Dictionary,
    coder: &PatchCoder,
) -> Result<f64> {
    let errs: Vec<f64> = subset
        .par_iter()
        .map(|&(idx, x0, y0)| {
            let p = extract(noisy, width, x0, y0);
            let mean = p.mean();
            let est = coder.code(dict, idx, &p.add_scalar(-mean))?.add_scalar(mean);
            Ok((est - extract(clean, width, x0, y0)).norm_squared())
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageDenoiseConfig {
    pub sigma_nu: f64,
    pub sparsity_grid: Vec<usize>,
    pub sigma_n_grid: Vec<f64>,
    pub iterations: usize,
    /// Fraction of patches used to tune `L` and `sigma_n`.
    pub tune_fraction: f64,
    pub seed: u64,
}

impl ImageDenoiseConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.inner_sigma_n.is_empty() {
            return Err(Error::MissingKey("inner_sigma_n".into()));
        }
        if cfg.patch_sparsity.is_empty() {
            return Err(Error::MissingKey("patch_sparsity".into()));
        }
        Ok(Self {
            sigma_nu: cfg.sigma_nu,
            sparsity_grid: cfg.patch_sparsity.clone(),
            sigma_n_grid: cfg.inner_sigma_n.clone(),
            iterations: cfg.k,
            tune_fraction: cfg.tune_fraction,
            seed: cfg.seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseReport {
    pub noisy_psnr: f64,
    pub plain_psnr: f64,
    pub sr_psnr: f64,
    pub sparsity: usize,
    pub sigma_n: f64,
    pub iterations: usize,
    pub noisy: GrayImage,
    pub plain: GrayImage,
    pub sr: GrayImage,
}

impl DenoiseReport {
    pub const HEADER: &'static str = "method,psnr_db,sparsity,sigma_n,iterations";

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        writeln!(out, "noisy,{},,,", self.noisy_psnr)?;
        writeln!(out, "sp,{},{},,", self.plain_psnr, self.sparsity)?;
        writeln!(out, "sr_sp,{},{},{},{}", self.sr_psnr, self.sparsity, self.sigma_n, self.iterations)
    }
}

fn first_argmin<T: Copy>(candidates: &[T], mut score: impl FnMut(T) -> Result<f64>) -> Result<T> {
    let mut best = (candidates[0], f64::INFINITY);
    for &c in candidates {
        let s = score(c)?;
        if s < best.1 {
            best = (c, s);
        }
    }
    Ok(best.0)
}

/// Adds noise of level `sigma_nu` to `clean`, tunes `L` for plain SP and
/// then `sigma_n` for SR on a patch subset, and denoises the whole image
/// with both. PSNRs are computed on unclipped values.
pub fn denoise_image(clean: &GrayImage, cfg: &ImageDenoiseConfig) -> Result<DenoiseReport> {
    if cfg.sigma_nu < 0.0 || !cfg.sigma_nu.is_finite() {
        return invalid("sigma_nu must be finite and >= 0");
    }
    let (w, h) = (clean.width, clean.height);
    let reference = clean.to_f64();
    if cfg.sigma_nu == 0.0 {
        return Ok(DenoiseReport {
            noisy_psnr: f64::INFINITY,
            plain_psnr: f64::INFINITY,
            sr_psnr: f64::INFINITY,
            sparsity: 0,
            sigma_n: 0.0,
            iterations: 0,
            noisy: clean.clone(),
            plain: clean.clone(),
            sr: clean.clone(),
        });
    }
    if cfg.sparsity_grid.is_empty() || cfg.sigma_n_grid.is_empty() || cfg.iterations == 0 {
        return invalid("need sparsity and sigma_n grids and at least one iteration");
    }
    if !(cfg.tune_fraction > 0.0 && cfg.tune_fraction <= 1.0) {
        return invalid("tune_fraction must lie in (0, 1]");
    }
    let dict = overcomplete_dct(PATCH, 16)?;
    let noisy = add_noise(&reference, cfg.sigma_nu, RngSeed::new(cfg.seed, 10))?;

    let cols = w.saturating_sub(PATCH - 1);
    let count = cols * h.saturating_sub(PATCH - 1);
    if count == 0 {
        return invalid(format!("image smaller than {PATCH}x{PATCH}"));
    }
    let step = (1.0 / cfg.tune_fraction).round().max(1.0) as usize;
    // odd stride so the subset does not align with image columns
    let step = if step > 1 && step % 2 == 0 { step + 1 } else { step };
    let subset: Vec<(usize, usize, usize)> = (0..count).step_by(step).map(|i| (i, i % cols, i / cols)).collect();

    let sparsity = first_argmin(&cfg.sparsity_grid, |l| {
        patch_subset_error(&reference, &noisy, w, &subset, &dict, &PatchCoder::Plain { sparsity: l })
    })?;
    let sr_coder = |sigma_n| PatchCoder::Sr { sparsity, sigma_n, iterations: cfg.iterations, seed: cfg.seed };
    let sigma_n =
        first_argmin(&cfg.sigma_n_grid, |s| patch_subset_error(&reference, &noisy, w, &subset, &dict, &sr_coder(s)))?;

    let plain = denoise(&noisy, w, h, &dict, &PatchCoder::Plain { sparsity })?;
    let sr = denoise(&noisy, w, h, &dict, &sr_coder(sigma_n))?;
    Ok(DenoiseReport {
        noisy_psnr: psnr(&noisy, &reference)?,
        plain_psnr: psnr(&plain, &reference)?,
        sr_psnr: psnr(&sr, &reference)?,
        sparsity,
        sigma_n,
        iterations: cfg.iterations,
        noisy: GrayImage::from_f64(w, h, &noisy)?,
        plain: GrayImage::from_f64(w, h, &plain)?,
        sr: GrayImage::from_f64(w, h, &sr)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        let pixels = (0..w * h).map(|i| ((i * 37 + (i / w) * 11) % 256) as u8).collect();
        GrayImage { width: w, height: h, pixels }
    }

    #[test]
    fn pgm_round_trip() {
        let img = ramp(13, 9);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert_eq!(GrayImage::read_pgm(&buf[..]).unwrap(), img);
        let commented = [b"P5\n# made by hand\n13 9\n255\n".as_slice(), &img.pixels].concat();
        assert_eq!(GrayImage::read_pgm(&commented[..]).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_other_formats() {
        assert!(matches!(GrayImage::read_pgm(&b"P2\n2 2\n255\n0 0 0 0"[..]), Err(Error::ImageFormat(_))));
        assert!(matches!(GrayImage::read_pgm(&b"P5\n2 2\n65535\n"[..]), Err(Error::ImageFormat(_))));
        assert!(matches!(GrayImage::read_pgm(&b"P5\n4 4\n255\n\x01\x02"[..]), Err(Error::ImageFormat(_))));
    }

    #[test]
    fn dct_dictionary_shape() {
        let d = overcomplete_dct(8, 16).unwrap();
        assert_eq!((d.n(), d.m()), (64, 256));
        for j in 0..d.m() {
            let norm: f64 = d.atom(j).iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // every atom but the first is orthogonal to constants
        for j in 1..d.m() {
            let s: f64 = d.atom(j).iter().sum();
            assert!(s.abs() < 1e-10);
        }
    }

    #[test]
    fn identity_coder_reproduces_the_image() {
        let img = ramp(20, 14);
        let v = img.to_f64();
        let out = patch_average(&v, 20, 14, |_, p| Ok(p.clone())).unwrap();
        let back = GrayImage::from_f64(20, 14, &out).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn noise_fixes_input_psnr() {
        let img = GrayImage { width: 256, height: 256, pixels: vec![128; 256 * 256] };
        let v = img.to_f64();
        let noisy = add_noise(&v, 40.0, RngSeed::new(1, 10)).unwrap();
        let p = psnr(&noisy, &v).unwrap();
        assert!((p - 16.1).abs() < 0.05, "{p}");
    }

    #[test]
    fn zero_noise_returns_input() {
        let img = ramp(16, 16);
        let cfg = ImageDenoiseConfig {
            sigma_nu: 0.0,
            sparsity_grid: vec![4],
            sigma_n_grid: vec![10.0],
            iterations: 2,
            tune_fraction: 0.5,
            seed: 1,
        };
        let r = denoise_image(&img, &cfg).unwrap();
        assert_eq!(r.sr, img);
        assert_eq!(r.sr_psnr, f64::INFINITY);
    }

    #[test]
    fn small_image_denoising_runs() {
        let w = 24;
        let pixels = (0..w * w).map(|i| if (i % w) < 12 { 60 } else { 190 }).collect();
        let img = GrayImage { width: w, height: w, pixels };
        let cfg = ImageDenoiseConfig {
            sigma_nu: 20.0,
            sparsity_grid: vec![2, 4],
            sigma_n_grid: vec![5.0, 15.0],
            iterations: 3,
            tune_fraction: 0.2,
            seed: 2,
        };
        let r = denoise_image(&img, &cfg).unwrap();
        assert!(r.plain_psnr > r.noisy_psnr);
        assert!(r.sr_psnr > r.noisy_psnr);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }
}
