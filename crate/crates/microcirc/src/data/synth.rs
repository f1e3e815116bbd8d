//! Seeded synthetic capillary-image generator.
//!
//! Frames are a Gaussian-noised tissue background with dark vessels drawn
//! as random quadratic Bézier curves; vessels darken the background by a
//! contrast factor, mimicking hemoglobin absorption in dark-field imaging.
//! Every frame's randomness derives from (seed, class, patient, frame), so
//! generation is schedule-independent and byte-deterministic.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Elem, Tensor};

use super::{Cohort, DataError, FrameRecord, Label, Manifest, Result};

// fixed tint so frames read as tissue rather than gray noise
const TINT: [f64; 3] = [1.0, 0.88, 0.82];

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub vessel_count: usize,
    pub thickness_min: f64,
    pub thickness_max: f64,
    /// Darkening factor applied inside vessels, in [0, 1].
    pub contrast: f64,
    /// Background mean and noise sigma on the 8-bit scale.
    pub background_mean: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(DataError::BadSynthParams("image size must be positive".into()));
        }
        if self.thickness_min < 0.0 || self.thickness_max < self.thickness_min {
            return Err(DataError::BadSynthParams(format!(
                "thickness range [{}, {}] is invalid",
                self.thickness_min, self.thickness_max
            )));
        }
        if self.thickness_max >= self.height.min(self.width) as f64 {
            return Err(DataError::BadSynthParams(format!(
                "vessel thickness {} exceeds image extent {}",
                self.thickness_max,
                self.height.min(self.width)
            )));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(DataError::BadSynthParams(format!(
                "contrast {} outside [0, 1]",
                self.contrast
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(DataError::BadSynthParams("noise sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Render one frame as interleaved RGB8 plus its boolean vessel mask.
pub fn generate_rgb8(params: &SynthParams) -> Result<(Vec<u8>, Vec<bool>)> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    // background field first so its RNG stream is independent of vessels
    let mut field = vec![0.0f64; h * w];
    for v in field.iter_mut() {
        *v = (params.background_mean + params.noise_sigma * noise.sample(&mut rng))
            .clamp(0.0, 255.0);
    }

    let mut mask = vec![false; h * w];
    for _ in 0..params.vessel_count {
        let points: Vec<(f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen::<f64>() * (w as f64 - 1.0),
                    rng.gen::<f64>() * (h as f64 - 1.0),
                )
            })
            .collect();
        let thickness = if params.thickness_max > params.thickness_min {
            params.thickness_min
                + rng.gen::<f64>() * (params.thickness_max - params.thickness_min)
        } else {
            params.thickness_min
        };
        stamp_bezier(&mut mask, h, w, &points, thickness / 2.0);
    }

    let mut pixels = vec![0u8; h * w * 3];
    for i in 0..h * w {
        let factor = if mask[i] { 1.0 - params.contrast } else { 1.0 };
        for c in 0..3 {
            pixels[i * 3 + c] = (field[i] * TINT[c] * factor).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok((pixels, mask))
}

/// Tensor variant of [`generate_rgb8`]: 3×H×W in [0, 1] plus the mask.
pub fn generate_image<E: Elem>(params: &SynthParams) -> Result<(Tensor<E>, Vec<bool>)> {
    let (pixels, mask) = generate_rgb8(params)?;
    let (h, w) = (params.height, params.width);
    let mut data = vec![E::zero(); 3 * h * w];
    for i in 0..h * w {
        for c in 0..3 {
            data[c * h * w + i] = E::from_f64(pixels[i * 3 + c] as f64 / 255.0);
        }
    }
    Ok((Tensor::from_vec(&[3, h, w], data)?, mask))
}

fn stamp_bezier(mask: &mut [bool], h: usize, w: usize, p: &[(f64, f64)], radius: f64) {
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let approx_len = dist(p[0], p[1]) + dist(p[1], p[2]);
    let steps = (approx_len * 2.0).ceil().max(2.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let u = 1.0 - t;
        let x = u * u * p[0].0 + 2.0 * u * t * p[1].0 + t * t * p[2].0;
        let y = u * u * p[0].1 + 2.0 * u * t * p[1].1 + t * t * p[2].1;
        stamp_disk(mask, h, w, x, y, radius);
    }
}

fn stamp_disk(mask: &mut [bool], h: usize, w: usize, cx: f64, cy: f64, radius: f64) {
    let r = radius.max(0.5);
    let y_lo = ((cy - r).floor().max(0.0)) as usize;
    let y_hi = ((cy + r).ceil().min((h - 1) as f64)) as usize;
    let x_lo = ((cx - r).floor().max(0.0)) as usize;
    let x_hi = ((cx + r).ceil().min((w - 1) as f64)) as usize;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                mask[y * w + x] = true;
            }
        }
    }
}

/// One generated frame of a two-class corpus.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub patient_id: String,
    pub label: Label,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl SynthFrame {
    /// 3×H×W tensor in [0, 1].
    pub fn to_tensor<E: Elem>(&self) -> Result<Tensor<E>> {
        let (h, w) = (self.height, self.width);
        let mut data = vec![E::zero(); 3 * h * w];
        for i in 0..h * w {
            for c in 0..3 {
                data[c * h * w + i] = E::from_f64(self.pixels[i * 3 + c] as f64 / 255.0);
            }
        }
        Ok(Tensor::from_vec(&[3, h, w], data)?)
    }
}

fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over a combined word
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate a two-class corpus. Class A is labeled septic, class B
/// non-septic. Each patient gets a small seeded jitter of thickness,
/// contrast, and background so frames cluster by patient identity.
pub fn generate_corpus(
    class_a: &SynthParams,
    class_b: &SynthParams,
    frames_per_patient: usize,
    patients_per_class: usize,
    seed: u64,
) -> Result<Vec<SynthFrame>> {
    if class_a.height != class_b.height || class_a.width != class_b.width {
        return Err(DataError::BadSynthParams(
            "both classes must share the same image size".into(),
        ));
    }
    if frames_per_patient == 0 || patients_per_class == 0 {
        return Err(DataError::BadSynthParams(
            "frames per patient and patients per class must be positive".into(),
        ));
    }
    let mut frames = Vec::with_capacity(2 * patients_per_class * frames_per_patient);
    for (class_idx, (base, label)) in [(class_a, Label::Septic), (class_b, Label::NonSeptic)]
        .into_iter()
        .enumerate()
    {
        base.validate()?;
        for patient in 0..patients_per_class {
            let mut patient_rng =
                ChaCha8Rng::seed_from_u64(mix(seed, class_idx as u64, patient as u64, u64::MAX));
            let jitter = |rng: &mut ChaCha8Rng| rng.gen::<f64>() * 2.0 - 1.0;
            let thickness_scale = 1.0 + 0.25 * jitter(&mut patient_rng);
            let contrast_scale = 1.0 + 0.20 * jitter(&mut patient_rng);
            let background_shift = 12.0 * jitter(&mut patient_rng);
            let patient_id = format!("{label}-p{patient:02}");
            for frame in 0..frames_per_patient {
                let params = SynthParams {
                    thickness_min: base.thickness_min * thickness_scale,
                    thickness_max: base.thickness_max * thickness_scale,
                    contrast: (base.contrast * contrast_scale).clamp(0.0, 1.0),
                    background_mean: (base.background_mean + background_shift)
                        .clamp(0.0, 255.0),
                    seed: mix(seed, class_idx as u64, patient as u64, frame as u64),
                    ..base.clone()
                };
                let (pixels, mask) = generate_rgb8(&params)?;
                frames.push(SynthFrame {
                    patient_id: patient_id.clone(),
                    label,
                    height: base.height,
                    width: base.width,
                    pixels,
                    mask,
                });
            }
        }
    }
    Ok(frames)
}

/// Write a corpus to disk as PNGs under `root/images/` plus a manifest
/// (paths relative to `root`, cohorts unassigned).
pub fn write_dataset(frames: &[SynthFrame], root: &Path) -> Result<Manifest> {
    let image_dir = root.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| DataError::Io {
        path: image_dir.display().to_string(),
        source: e,
    })?;
    let mut records = Vec::with_capacity(frames.len());
    let mut per_patient = std::collections::BTreeMap::<String, usize>::new();
    for frame in frames {
        let index = per_patient.entry(frame.patient_id.clone()).or_insert(0);
        let rel = format!("images/{}_{:04}.png", frame.patient_id, index);
        *index += 1;
        let img = image::RgbImage::from_raw(
            frame.width as u32,
            frame.height as u32,
            frame.pixels.clone(),
        )
        .ok_or_else(|| DataError::Invalid("pixel buffer does not match frame size".into()))?;
        img.save(root.join(&rel)).map_err(|e| DataError::BadImage {
            path: rel.clone(),
            reason: e.to_string(),
        })?;
        records.push(FrameRecord {
            path: rel,
            patient_id: frame.patient_id.clone(),
            label: frame.label,
            cohort: Cohort::Unassigned,
        });
    }
    Manifest::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, seed: u64) -> SynthParams {
        SynthParams {
            height: 32,
            width: 32,
            vessel_count: n,
            thickness_min: 1.5,
            thickness_max: 3.0,
            contrast: 0.5,
            background_mean: 160.0,
            noise_sigma: 10.0,
            seed,
        }
    }

    #[test]
    fn zero_vessels_gives_pure_background_and_empty_mask() {
        let (_, mask) = generate_rgb8(&params(0, 1)).unwrap();
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let (a, _) = generate_rgb8(&params(5, 99)).unwrap();
        let (b, _) = generate_rgb8(&params(5, 99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_contrast_equals_zero_vessels() {
        let mut p = params(6, 4);
        p.contrast = 0.0;
        let (with_invisible_vessels, _) = generate_rgb8(&p).unwrap();
        let (no_vessels, _) = generate_rgb8(&params(0, 4)).unwrap();
        assert_eq!(with_invisible_vessels, no_vessels);
    }

    #[test]
    fn mask_fraction_increases_with_vessel_count() {
        let mean_fraction = |n: usize| {
            let mut total = 0.0;
            for seed in 0..100 {
                let (_, mask) = generate_rgb8(&params(n, seed)).unwrap();
                total += mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
            }
            total / 100.0
        };
        let f2 = mean_fraction(2);
        let f6 = mean_fraction(6);
        let f14 = mean_fraction(14);
        assert!(f2 < f6 && f6 < f14, "fractions not increasing: {f2} {f6} {f14}");
    }

    #[test]
    fn oversized_thickness_rejected() {
        let mut p = params(1, 0);
        p.thickness_max = 40.0;
        assert!(matches!(
            generate_rgb8(&p),
            Err(DataError::BadSynthParams(_))
        ));
    }

    #[test]
    fn corpus_counting_and_balance() {
        let frames = generate_corpus(&params(5, 0), &params(2, 0), 3, 2, 11).unwrap();
        assert_eq!(frames.len(), 12);
        let patients: std::collections::BTreeSet<_> =
            frames.iter().map(|f| f.patient_id.clone()).collect();
        assert_eq!(patients.len(), 4);
        let septic = frames.iter().filter(|f| f.label == Label::Septic).count();
        assert_eq!(septic, 6);
    }

    #[test]
    fn patient_jitter_clusters_frames_by_patient() {
        // intra-patient variance of the frame mean must be below the
        // variance across patient means
        let mut intra = Vec::new();
        let mut patient_means = Vec::new();
        for seed in 0..10 {
            let frames = generate_corpus(&params(6, 0), &params(6, 0), 6, 4, seed).unwrap();
            let mut by_patient = std::collections::BTreeMap::<String, Vec<f64>>::new();
            for f in &frames {
                let mean =
                    f.pixels.iter().map(|&p| p as f64).sum::<f64>() / f.pixels.len() as f64;
                by_patient.entry(f.patient_id.clone()).or_default().push(mean);
            }
            for means in by_patient.values() {
                let m = means.iter().sum::<f64>() / means.len() as f64;
                intra.push(means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / means.len() as f64);
                patient_means.push(m);
            }
        }
        let grand = patient_means.iter().sum::<f64>() / patient_means.len() as f64;
        let inter = patient_means
            .iter()
            .map(|v| (v - grand) * (v - grand))
            .sum::<f64>()
            / patient_means.len() as f64;
        let mean_intra = intra.iter().sum::<f64>() / intra.len() as f64;
        assert!(
            mean_intra < inter,
            "intra-patient variance {mean_intra} not below inter-patient {inter}"
        );
    }
}
