//! Seeded weight initialization. Kaiming fan-in scaled normals for conv and
//! linear weights; biases start at zero, batch-norm at gamma=1/beta=0.
//!
//! Samples are drawn in f64 and converted, so f32 and f64 builds of the
//! same seed see the same values up to rounding.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Elem, Tensor};

pub fn kaiming_conv<E: Elem, R: Rng>(
    out_ch: usize,
    in_ch: usize,
    kh: usize,
    kw: usize,
    rng: &mut R,
) -> Tensor<E> {
    let fan_in = (in_ch * kh * kw) as f64;
    normal_tensor(&[out_ch, in_ch, kh, kw], (2.0 / fan_in).sqrt(), rng)
}

/// Transposed-conv weights use the IOKhKw layout; fan-in is per output
/// pixel contribution, in_ch · kh · kw / stride² in spirit — the plain
/// conv rule is close enough here.
pub fn kaiming_conv_transpose<E: Elem, R: Rng>(
    in_ch: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    rng: &mut R,
) -> Tensor<E> {
    let fan_in = (in_ch * kh * kw) as f64;
    normal_tensor(&[in_ch, out_ch, kh, kw], (2.0 / fan_in).sqrt(), rng)
}

pub fn kaiming_linear<E: Elem, R: Rng>(out_f: usize, in_f: usize, rng: &mut R) -> Tensor<E> {
    normal_tensor(&[out_f, in_f], (2.0 / in_f as f64).sqrt(), rng)
}

fn normal_tensor<E: Elem, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<E> {
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| E::from_f64(normal.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape by construction")
}
