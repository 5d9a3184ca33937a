//! Block-wise orthonormal DCT-II over grid components.
//!
//! Components are `[rank, channel, d1, d2]` tensors; the transform tiles the
//! last three axes into non-overlapping `(k1, k2, k3)` blocks (channel axis
//! first) and applies a separable orthonormal DCT-II inside each block. Vector
//! lines use `k3 = 1`, which degenerates to a 2D transform over
//! `(channel, length)`. The orthonormal scaling makes the transform an
//! isometry, so roundtrips are exact up to rounding and coefficient-domain L2
//! equals parameter-domain L2.
//!
//! Because the transform is linear and orthonormal, the gradient of any loss
//! through [`dct_forward`] is [`dct_inverse`] applied to the
//! coefficient-domain gradient.

use crate::error::{Error, Result};
use crate::grid::ComponentId;
use crate::tensor::Tensor4;
use serde::{Deserialize, Serialize};

/// Block extents along (channel, d1, d2). `k3 = 1` for vector lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
}

impl BlockDims {
    pub fn new_3d(k1: usize, k2: usize, k3: usize) -> Self {
        BlockDims { k1, k2, k3 }
    }

    /// 2D form for vector components.
    pub fn new_2d(k1: usize, k2: usize) -> Self {
        BlockDims { k1, k2, k3: 1 }
    }

    /// Default block for matrix planes.
    pub fn matrix_default() -> Self {
        BlockDims::new_3d(16, 16, 16)
    }

    /// Default block for vector lines.
    pub fn vector_default() -> Self {
        BlockDims::new_2d(8, 8)
    }

    pub fn volume(&self) -> usize {
        self.k1 * self.k2 * self.k3
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 < 1 || self.k2 < 1 || self.k3 < 1 {
            return Err(Error::Config(format!(
                "block dims must each be >= 1, got {}x{}x{}",
                self.k1, self.k2, self.k3
            )));
        }
        Ok(())
    }
}

/// Frequency-domain image of one grid component.
#[derive(Debug, Clone)]
pub struct CoefficientTensor {
    pub values: Tensor4,
    pub block_dims: BlockDims,
    pub source: ComponentId,
}

/// Orthonormal DCT-II basis for length `k`: `b[u*k + x]`.
fn basis(k: usize) -> Vec<f64> {
    let mut b = vec![0.0; k * k];
    let c0 = (1.0 / k as f64).sqrt();
    let cu = (2.0 / k as f64).sqrt();
    for u in 0..k {
        let scale = if u == 0 { c0 } else { cu };
        for x in 0..k {
            b[u * k + x] =
                scale * (std::f64::consts::PI / k as f64 * (x as f64 + 0.5) * u as f64).cos();
        }
    }
    b
}

/// Multiply every 1D line of `buf` along `axis` by `mat` (k x k, row-major).
/// Forward uses the basis, inverse uses its transpose.
fn apply_axis(buf: &mut [f64], tmp: &mut [f64], mat: &[f64], k: usize, axis: usize, dims: (usize, usize, usize)) {
    let (k1, k2, k3) = dims;
    if k == 1 {
        return;
    }
    match axis {
        0 => {
            let stride = k2 * k3;
            for base in 0..stride {
                for (u, t) in tmp.iter_mut().enumerate().take(k1) {
                    let mut acc = 0.0;
                    for x in 0..k1 {
                        acc += mat[u * k + x] * buf[base + x * stride];
                    }
                    *t = acc;
                }
                for u in 0..k1 {
                    buf[base + u * stride] = tmp[u];
                }
            }
        }
        1 => {
            for i1 in 0..k1 {
                for i3 in 0..k3 {
                    let base = i1 * k2 * k3 + i3;
                    for (u, t) in tmp.iter_mut().enumerate().take(k2) {
                        let mut acc = 0.0;
                        for x in 0..k2 {
                            acc += mat[u * k + x] * buf[base + x * k3];
                        }
                        *t = acc;
                    }
                    for u in 0..k2 {
                        buf[base + u * k3] = tmp[u];
                    }
                }
            }
        }
        _ => {
            for line in buf.chunks_exact_mut(k3) {
                for (u, t) in tmp.iter_mut().enumerate().take(k3) {
                    let mut acc = 0.0;
                    for (x, v) in line.iter().enumerate() {
                        acc += mat[u * k + x] * v;
                    }
                    *t = acc;
                }
                line.copy_from_slice(&tmp[..k3]);
            }
        }
    }
}

fn check_multiples(dims: [usize; 4], block: BlockDims) -> Result<()> {
    let names = ["channel", "d1", "d2"];
    let ks = [block.k1, block.k2, block.k3];
    for (i, name) in names.iter().enumerate() {
        if dims[i + 1] % ks[i] != 0 {
            return Err(Error::Config(format!(
                "{} axis length {} is not a multiple of block dim {}",
                name,
                dims[i + 1],
                ks[i]
            )));
        }
    }
    Ok(())
}

fn transpose(mat: &[f64], k: usize) -> Vec<f64> {
    let mut t = vec![0.0; k * k];
    for u in 0..k {
        for x in 0..k {
            t[x * k + u] = mat[u * k + x];
        }
    }
    t
}

fn block_transform(tensor: &Tensor4, block: BlockDims, forward: bool) -> Result<Tensor4> {
    block.validate()?;
    let dims = tensor.dims();
    check_multiples(dims, block)?;
    let [n, c, h, w] = dims;
    let (k1, k2, k3) = (block.k1, block.k2, block.k3);

    let b1 = basis(k1);
    let b2 = basis(k2);
    let b3 = basis(k3);
    let (m1, m2, m3) = if forward {
        (b1, b2, b3)
    } else {
        (transpose(&b1, k1), transpose(&b2, k2), transpose(&b3, k3))
    };

    let mut out = Tensor4::zeros(dims);
    let mut buf = vec![0.0; block.volume()];
    let mut tmp = vec![0.0; k1.max(k2).max(k3)];
    let src = tensor.data();
    let dst = out.data_mut();

    for r in 0..n {
        for cb in (0..c).step_by(k1) {
            for hb in (0..h).step_by(k2) {
                for wb in (0..w).step_by(k3) {
                    // gather
                    for i1 in 0..k1 {
                        for i2 in 0..k2 {
                            let o = ((r * c + cb + i1) * h + hb + i2) * w + wb;
                            let b = (i1 * k2 + i2) * k3;
                            buf[b..b + k3].copy_from_slice(&src[o..o + k3]);
                        }
                    }
                    apply_axis(&mut buf, &mut tmp, &m1, k1, 0, (k1, k2, k3));
                    apply_axis(&mut buf, &mut tmp, &m2, k2, 1, (k1, k2, k3));
                    apply_axis(&mut buf, &mut tmp, &m3, k3, 2, (k1, k2, k3));
                    // scatter
                    for i1 in 0..k1 {
                        for i2 in 0..k2 {
                            let o = ((r * c + cb + i1) * h + hb + i2) * w + wb;
                            let b = (i1 * k2 + i2) * k3;
                            dst[o..o + k3].copy_from_slice(&buf[b..b + k3]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Forward block DCT on a raw component tensor.
pub fn dct_forward_tensor(component: &Tensor4, block: BlockDims) -> Result<Tensor4> {
    block_transform(component, block, true)
}

/// Inverse block DCT on a raw coefficient tensor.
pub fn dct_inverse_tensor(coeffs: &Tensor4, block: BlockDims) -> Result<Tensor4> {
    block_transform(coeffs, block, false)
}

/// Forward transform with provenance.
pub fn dct_forward(
    component: &Tensor4,
    block: BlockDims,
    source: ComponentId,
) -> Result<CoefficientTensor> {
    Ok(CoefficientTensor {
        values: dct_forward_tensor(component, block)?,
        block_dims: block,
        source,
    })
}

/// Exact inverse of [`dct_forward`] up to floating rounding.
pub fn dct_inverse(coeffs: &CoefficientTensor) -> Result<Tensor4> {
    dct_inverse_tensor(&coeffs.values, coeffs.block_dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor4 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let len = dims.iter().product();
        Tensor4::from_vec(dims, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Direct evaluation of the block DCT as a triple sum with orthonormal
    /// scaling, independent of the separable implementation.
    fn naive_forward(t: &Tensor4, block: BlockDims) -> Tensor4 {
        let [n, c, h, w] = t.dims();
        let (k1, k2, k3) = (block.k1, block.k2, block.k3);
        let scale = |u: usize, k: usize| -> f64 {
            if u == 0 {
                (1.0 / k as f64).sqrt()
            } else {
                (2.0 / k as f64).sqrt()
            }
        };
        let cosf = |x: usize, u: usize, k: usize| -> f64 {
            (std::f64::consts::PI / k as f64 * (x as f64 + 0.5) * u as f64).cos()
        };
        let mut out = Tensor4::zeros(t.dims());
        for r in 0..n {
            for cb in (0..c).step_by(k1) {
                for hb in (0..h).step_by(k2) {
                    for wb in (0..w).step_by(k3) {
                        for u in 0..k1 {
                            for v in 0..k2 {
                                for wq in 0..k3 {
                                    let mut acc = 0.0;
                                    for x in 0..k1 {
                                        for y in 0..k2 {
                                            for z in 0..k3 {
                                                acc += t.get(r, cb + x, hb + y, wb + z)
                                                    * cosf(x, u, k1)
                                                    * cosf(y, v, k2)
                                                    * cosf(z, wq, k3);
                                            }
                                        }
                                    }
                                    let s = scale(u, k1) * scale(v, k2) * scale(wq, k3);
                                    out.set(r, cb + u, hb + v, wb + wq, s * acc);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub(crate) fn tab3_blocks() -> Vec<BlockDims> {
        vec![
            BlockDims::new_3d(1, 8, 8),
            BlockDims::new_3d(1, 16, 16),
            BlockDims::new_3d(1, 32, 32),
            BlockDims::new_3d(4, 4, 4),
            BlockDims::new_3d(8, 8, 8),
            BlockDims::new_3d(16, 16, 16),
        ]
    }

    #[test]
    fn constant_block_concentrates_in_dc() {
        let block = BlockDims::new_3d(4, 4, 4);
        let mut t = Tensor4::zeros([1, 4, 4, 4]);
        t.fill(0.7);
        let f = dct_forward_tensor(&t, block).unwrap();
        // DC of a constant block c is c * sqrt(K1*K2*K3) = 0.7 * 8.
        assert!((f.get(0, 0, 0, 0) - 0.7 * 8.0).abs() < 1e-9);
        for idx in 1..f.len() {
            assert!(f.data()[idx].abs() < 1e-6, "AC coefficient {idx} nonzero");
        }
    }

    #[test]
    fn zero_tensor_maps_to_zero() {
        let t = Tensor4::zeros([2, 8, 8, 8]);
        let f = dct_forward_tensor(&t, BlockDims::new_3d(8, 8, 8)).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_triple_sum() {
        let block = BlockDims::new_3d(8, 8, 8);
        let t = random_tensor([1, 8, 16, 8], 7);
        let fast = dct_forward_tensor(&t, block).unwrap();
        let slow = naive_forward(&t, block);
        for i in 0..t.len() {
            assert!((fast.data()[i] - slow.data()[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn matches_naive_2d_form() {
        let block = BlockDims::new_2d(8, 8);
        let t = random_tensor([2, 8, 16, 1], 9);
        let fast = dct_forward_tensor(&t, block).unwrap();
        let slow = naive_forward(&t, block);
        for i in 0..t.len() {
            assert!((fast.data()[i] - slow.data()[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn roundtrip_all_supported_blocks() {
        for block in tab3_blocks() {
            let dims = [2, block.k1, block.k2 * 2, block.k3];
            let t = random_tensor(dims, 1234 + block.volume() as u64);
            let f = dct_forward_tensor(&t, block).unwrap();
            let back = dct_inverse_tensor(&f, block).unwrap();
            let max = t
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max < 1e-4, "roundtrip error {max} for block {block:?}");
        }
    }

    #[test]
    fn single_dc_inverts_to_constant_block() {
        let block = BlockDims::new_3d(4, 4, 4);
        let mut f = Tensor4::zeros([1, 4, 4, 4]);
        f.set(0, 0, 0, 0, 3.0);
        let x = dct_inverse_tensor(&f, block).unwrap();
        let expect = 3.0 / (block.volume() as f64).sqrt();
        for &v in x.data() {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_isometry() {
        for block in tab3_blocks() {
            let dims = [1, block.k1 * 2, block.k2, block.k3];
            let t = random_tensor(dims, 42 + block.volume() as u64);
            let f = dct_forward_tensor(&t, block).unwrap();
            let rel = (t.norm_sq() - f.norm_sq()).abs() / t.norm_sq();
            assert!(rel < 1e-5, "Parseval violated for {block:?}: rel {rel}");
        }
    }

    #[test]
    fn non_multiple_axis_is_rejected_with_name() {
        let t = Tensor4::zeros([1, 4, 6, 4]);
        let err = dct_forward_tensor(&t, BlockDims::new_3d(4, 4, 4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("d1"), "unexpected message: {msg}");
    }

    #[test]
    fn gradient_through_forward_is_inverse_of_coefficient_gradient() {
        // L(x) = sum_i g_i * F(x)_i  =>  dL/dx = dct_inverse(g).
        let block = BlockDims::new_3d(4, 4, 4);
        let x = random_tensor([1, 4, 4, 4], 11);
        let g = random_tensor([1, 4, 4, 4], 12);
        let claimed = dct_inverse_tensor(&g, block).unwrap();
        let h = 1e-3;
        let loss = |t: &Tensor4| -> f64 {
            let f = dct_forward_tensor(t, block).unwrap();
            f.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        for &j in &[0usize, 5, 17, 33, 63] {
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            let an = claimed.data()[j];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-3, "param {j}: fd {fd} vs analytic {an}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn linearity(seed_a in 0u64..1000, seed_b in 1000u64..2000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let block = BlockDims::new_3d(4, 4, 4);
            let x = random_tensor([1, 4, 8, 4], seed_a);
            let y = random_tensor([1, 4, 8, 4], seed_b);
            let mut combo = x.clone();
            for (c, (xv, yv)) in combo.data_mut().iter_mut().zip(x.data().iter().zip(y.data())) {
                *c = a * xv + b * yv;
            }
            let fx = dct_forward_tensor(&x, block).unwrap();
            let fy = dct_forward_tensor(&y, block).unwrap();
            let fc = dct_forward_tensor(&combo, block).unwrap();
            for i in 0..fc.len() {
                let expect = a * fx.data()[i] + b * fy.data()[i];
                prop_assert!((fc.data()[i] - expect).abs() < 1e-6);
            }
        }
    }
}
