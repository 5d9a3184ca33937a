//! Learned factorized probability model over DCT coefficients.
//!
//! One tiny monotone CDF network per (component, channel) pair; channels
//! share their network across ranks and spatial blocks. Each network is a
//! chain of four scalar stages `x <- x * softplus(w_s) + b_s` with a gated
//! residual `x <- x + tanh(a_s) * tanh(x)` between stages, followed by a
//! sigmoid. Positivity of the reparameterized weights and |tanh| < 1 make
//! the map monotone non-decreasing by construction.
//!
//! The discretized probability of a (noisy or rounded) value `y` is
//! `P_c(y + 1/2) - P_c(y - 1/2)`, floored at 1e-9; the bit estimate is the
//! negative base-2 log-likelihood summed over all coefficients. The networks
//! are training-time only: the codec freezes them into integer frequency
//! tables and the bitstream never carries them.

use crate::error::{Error, Result};
use crate::grid::{ComponentId, GridConfig};
use crate::tensor::Tensor4;
use crate::transform::CoefficientTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Numerical floor for discretized probabilities.
pub const PMF_FLOOR: f64 = 1e-9;
/// Total integer frequency mass per table.
pub const TABLE_TOTAL: u32 = 1 << 16;
/// Working bound for CDF tail checks.
pub const WORKING_BOUND: f64 = 512.0;

const STAGES: usize = 4;
/// 4 weights + 4 biases + 3 gates.
pub const PARAMS_PER_NET: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive i.i.d. U(-1/2, 1/2) noise.
    Train,
    /// Round half away from zero.
    Eval,
}

/// Quantization surrogate: noise proxy during training, rounding at eval.
#[derive(Debug, Clone, Copy)]
pub struct QuantSurrogate {
    pub mode: QuantMode,
    pub seed: u64,
}

impl QuantSurrogate {
    pub fn train(seed: u64) -> Self {
        QuantSurrogate {
            mode: QuantMode::Train,
            seed,
        }
    }

    pub fn eval() -> Self {
        QuantSurrogate {
            mode: QuantMode::Eval,
            seed: 0,
        }
    }
}

/// Applies the quantization surrogate elementwise.
pub fn noise_quantize(x: &[f64], surrogate: &QuantSurrogate) -> Vec<f64> {
    match surrogate.mode {
        QuantMode::Train => {
            let mut rng = ChaCha12Rng::seed_from_u64(surrogate.seed);
            x.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect()
        }
        QuantMode::Eval => x.iter().map(|v| v.round()).collect(),
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-channel CDF networks for every grid component.
#[derive(Debug, Clone)]
pub struct EntropyModel {
    /// (component, channel count) in declared component order.
    layout: Vec<(ComponentId, usize)>,
    params: Vec<f64>,
}

impl EntropyModel {
    /// One network per channel of every component of `config`, initialized
    /// so that the CDF is the standard logistic (unit scales, zero biases,
    /// closed gates).
    pub fn new(config: &GridConfig) -> Self {
        let layout: Vec<(ComponentId, usize)> = ComponentId::all()
            .into_iter()
            .map(|id| (id, config.channels(id.kind())))
            .collect();
        let nets: usize = layout.iter().map(|(_, c)| c).sum();
        let mut params = vec![0.0; nets * PARAMS_PER_NET];
        let w_unit = softplus_inv(1.0);
        for net in 0..nets {
            for s in 0..STAGES {
                params[net * PARAMS_PER_NET + s] = w_unit;
            }
        }
        EntropyModel { layout, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> &[(ComponentId, usize)] {
        &self.layout
    }

    pub fn channels(&self, component: ComponentId) -> Result<usize> {
        self.layout
            .iter()
            .find(|(id, _)| *id == component)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::Contract(format!("unknown component {component:?}")))
    }

    fn net_offset(&self, component: ComponentId, channel: usize) -> Result<usize> {
        let mut net = 0usize;
        for (id, channels) in &self.layout {
            if *id == component {
                if channel >= *channels {
                    return Err(Error::Contract(format!(
                        "channel {channel} out of range for {component:?} ({channels} channels)"
                    )));
                }
                return Ok((net + channel) * PARAMS_PER_NET);
            }
            net += channels;
        }
        Err(Error::Contract(format!("unknown component {component:?}")))
    }

    fn forward(&self, off: usize, x: f64) -> f64 {
        let p = &self.params[off..off + PARAMS_PER_NET];
        let mut v = x;
        for s in 0..STAGES {
            let y = v * softplus(p[s]) + p[STAGES + s];
            v = if s < STAGES - 1 {
                y + p[2 * STAGES + s].tanh() * y.tanh()
            } else {
                y
            };
        }
        sigmoid(v)
    }

    /// CDF value together with its derivative in `x` and in the 11 network
    /// parameters (w0..w3, b0..b3, a0..a2).
    fn forward_grad(&self, off: usize, x: f64) -> (f64, f64, [f64; PARAMS_PER_NET]) {
        let p = &self.params[off..off + PARAMS_PER_NET];
        let mut ins = [0.0f64; STAGES];
        let mut ys = [0.0f64; STAGES];
        let mut v = x;
        for s in 0..STAGES {
            ins[s] = v;
            let y = v * softplus(p[s]) + p[STAGES + s];
            ys[s] = y;
            v = if s < STAGES - 1 {
                y + p[2 * STAGES + s].tanh() * y.tanh()
            } else {
                y
            };
        }
        let prob = sigmoid(v);
        let mut g = prob * (1.0 - prob);
        let mut d = [0.0f64; PARAMS_PER_NET];
        for s in (0..STAGES).rev() {
            let gy = if s < STAGES - 1 {
                let ta = p[2 * STAGES + s].tanh();
                let ty = ys[s].tanh();
                d[2 * STAGES + s] += g * (1.0 - ta * ta) * ty;
                g * (1.0 + ta * (1.0 - ty * ty))
            } else {
                g
            };
            d[s] += gy * ins[s] * sigmoid(p[s]);
            d[STAGES + s] += gy;
            g = gy * softplus(p[s]);
        }
        (prob, g, d)
    }

    /// Learned CDF for one channel; monotone non-decreasing, in [0, 1].
    pub fn cdf_eval(&self, component: ComponentId, channel: usize, x: f64) -> Result<f64> {
        Ok(self.forward(self.net_offset(component, channel)?, x))
    }

    /// Discretized probability `P_c(y + 1/2) - P_c(y - 1/2)`, floored.
    pub fn pmf_discrete(&self, component: ComponentId, channel: usize, y: f64) -> Result<f64> {
        let off = self.net_offset(component, channel)?;
        let p = self.forward(off, y + 0.5) - self.forward(off, y - 0.5);
        Ok(p.max(PMF_FLOOR))
    }

    /// Total estimated bits for a set of coefficient tensors under the
    /// surrogate. Errors if a tensor's channel count does not match the model.
    pub fn bit_estimate(
        &self,
        coeffs: &[CoefficientTensor],
        surrogate: &QuantSurrogate,
    ) -> Result<f64> {
        let mut bits = 0.0;
        for (i, ct) in coeffs.iter().enumerate() {
            let channels = self.channels(ct.source)?;
            if ct.values.dims()[1] != channels {
                return Err(Error::Contract(format!(
                    "coefficient tensor {:?} has {} channels, model expects {}",
                    ct.source,
                    ct.values.dims()[1],
                    channels
                )));
            }
            // Per-tensor sub-seed keeps noise independent across components.
            let sub = QuantSurrogate {
                mode: surrogate.mode,
                seed: surrogate.seed.wrapping_add(i as u64),
            };
            let noisy = noise_quantize(ct.values.data(), &sub);
            let dims = ct.values.dims();
            let inner = dims[2] * dims[3];
            for r in 0..dims[0] {
                for c in 0..channels {
                    let off = self.net_offset(ct.source, c)?;
                    let base = (r * channels + c) * inner;
                    for &y in &noisy[base..base + inner] {
                        let p = (self.forward(off, y + 0.5) - self.forward(off, y - 0.5))
                            .max(PMF_FLOOR);
                        bits -= p.log2();
                    }
                }
            }
        }
        Ok(bits)
    }

    /// Bits for one component's already-noised values, accumulating gradients
    /// with respect to the noisy values and the network parameters.
    /// Gradients through floored probabilities are zero.
    pub fn bits_and_grads(
        &self,
        component: ComponentId,
        noisy: &Tensor4,
        d_values: &mut Tensor4,
        d_params: &mut [f64],
    ) -> Result<f64> {
        let channels = self.channels(component)?;
        let dims = noisy.dims();
        if dims[1] != channels {
            return Err(Error::Contract(format!(
                "coefficient tensor {:?} has {} channels, model expects {}",
                component, dims[1], channels
            )));
        }
        debug_assert_eq!(d_values.dims(), dims);
        debug_assert_eq!(d_params.len(), self.params.len());
        let inner = dims[2] * dims[3];
        let inv_ln2 = 1.0 / std::f64::consts::LN_2;
        let mut bits = 0.0;
        for r in 0..dims[0] {
            for c in 0..channels {
                let off = self.net_offset(component, c)?;
                let base = (r * channels + c) * inner;
                for idx in base..base + inner {
                    let y = noisy.data()[idx];
                    let (hi, dhi_dx, dhi_dp) = self.forward_grad(off, y + 0.5);
                    let (lo, dlo_dx, dlo_dp) = self.forward_grad(off, y - 0.5);
                    let p = hi - lo;
                    if p <= PMF_FLOOR {
                        bits -= PMF_FLOOR.log2();
                        continue;
                    }
                    bits -= p.log2();
                    let dbits_dp = -inv_ln2 / p;
                    d_values.data_mut()[idx] += dbits_dp * (dhi_dx - dlo_dx);
                    for k in 0..PARAMS_PER_NET {
                        d_params[off + k] += dbits_dp * (dhi_dp[k] - dlo_dp[k]);
                    }
                }
            }
        }
        Ok(bits)
    }

    /// Freezes the learned distribution of one channel into an integer
    /// frequency table over `support = [k_min, k_max]`: frequencies are
    /// proportional to the floored pmf, renormalized by largest remainder to
    /// sum exactly to 2^16 with every entry >= 1.
    pub fn freeze_table(
        &self,
        component: ComponentId,
        channel: usize,
        support: (i32, i32),
    ) -> Result<FrequencyTable> {
        let (k_min, k_max) = support;
        if k_min > k_max {
            return Err(Error::Contract(format!(
                "empty support [{k_min}, {k_max}]"
            )));
        }
        let n = (k_max - k_min + 1) as usize;
        if n as u64 > TABLE_TOTAL as u64 {
            return Err(Error::Encode(format!(
                "support [{k_min}, {k_max}] has {n} symbols, more than table precision {TABLE_TOTAL}"
            )));
        }
        let mut pmf = Vec::with_capacity(n);
        for k in k_min..=k_max {
            pmf.push(self.pmf_discrete(component, channel, k as f64)?);
        }
        Ok(FrequencyTable {
            k_min,
            k_max,
            freq: renormalize_freqs(&pmf),
        })
    }
}

/// Integer frequency table for one channel: `freq[i]` is the mass of symbol
/// `k_min + i`; entries are >= 1 and sum exactly to [`TABLE_TOTAL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    pub k_min: i32,
    pub k_max: i32,
    pub freq: Vec<u32>,
}

impl FrequencyTable {
    pub fn symbol_count(&self) -> usize {
        self.freq.len()
    }

    /// Cumulative frequencies: `cum[i] = sum(freq[..i])`, length n + 1.
    pub fn cumulative(&self) -> Vec<u32> {
        let mut cum = Vec::with_capacity(self.freq.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in &self.freq {
            acc += f;
            cum.push(acc);
        }
        cum
    }
}

/// Largest-remainder apportionment of [`TABLE_TOTAL`] among `pmf` shares,
/// with a base allocation of 1 per symbol. Deterministic: ties in the
/// fractional parts resolve to lower symbol index.
pub fn renormalize_freqs(pmf: &[f64]) -> Vec<u32> {
    let n = pmf.len();
    assert!(n >= 1 && n as u64 <= TABLE_TOTAL as u64);
    let total: f64 = pmf.iter().sum();
    let distributable = TABLE_TOTAL - n as u32;
    let mut freq = vec![1u32; n];
    let mut assigned = 0u32;
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(n);
    for (i, &p) in pmf.iter().enumerate() {
        let share = p / total * distributable as f64;
        let fl = share.floor();
        freq[i] += fl as u32;
        assigned += fl as u32;
        remainders.push((i, share - fl));
    }
    let mut leftover = distributable - assigned;
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders {
        if leftover == 0 {
            break;
        }
        freq[i] += 1;
        leftover -= 1;
    }
    debug_assert_eq!(freq.iter().sum::<u32>(), TABLE_TOTAL);
    freq
}
