//! VM-decomposed feature grid: storage, dense reconstruction, and
//! differentiable trilinear feature lookup.
//!
//! A grid holds, per decomposition kind (density / appearance), three matrix
//! planes and three vector lines. Plane `a` is the matrix spanning the two
//! axes other than `a`, paired with the vector line along `a`; the dense
//! tensor for a channel is the rank-summed combination
//! `T = sum_r v_r^X o M_r^{YZ} + v_r^Y o M_r^{XZ} + v_r^Z o M_r^{XY}`.
//!
//! Components are `[rank, channel, d1, d2]` tensors (lines use `d2 = 1`).
//! The declared component order — density planes X,Y,Z, density lines X,Y,Z,
//! then the appearance counterparts — is shared by the checkpoint format,
//! the bitstream and the optimizer.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;
use crate::transform::BlockDims;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Axis-aligned bounding box in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Decomposition kind selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Density,
    Appearance,
}

/// Names one of the twelve grid components. The axis index of a plane is the
/// axis of its paired vector line (plane X spans YZ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentId {
    DensityPlane(usize),
    DensityLine(usize),
    AppearancePlane(usize),
    AppearanceLine(usize),
}

impl ComponentId {
    /// All components in the declared serialization order.
    pub fn all() -> Vec<ComponentId> {
        let mut v = Vec::with_capacity(12);
        for a in 0..3 {
            v.push(ComponentId::DensityPlane(a));
        }
        for a in 0..3 {
            v.push(ComponentId::DensityLine(a));
        }
        for a in 0..3 {
            v.push(ComponentId::AppearancePlane(a));
        }
        for a in 0..3 {
            v.push(ComponentId::AppearanceLine(a));
        }
        v
    }

    pub fn is_plane(&self) -> bool {
        matches!(
            self,
            ComponentId::DensityPlane(_) | ComponentId::AppearancePlane(_)
        )
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            ComponentId::DensityPlane(_) | ComponentId::DensityLine(_) => FieldKind::Density,
            _ => FieldKind::Appearance,
        }
    }

    pub fn label(&self) -> String {
        let ax = ["x", "y", "z"];
        match self {
            ComponentId::DensityPlane(a) => format!("density_plane_{}", ax[*a]),
            ComponentId::DensityLine(a) => format!("density_line_{}", ax[*a]),
            ComponentId::AppearancePlane(a) => format!("appearance_plane_{}", ax[*a]),
            ComponentId::AppearanceLine(a) => format!("appearance_line_{}", ax[*a]),
        }
    }
}

/// The two axes spanned by plane `a`, in increasing order.
pub fn plane_axes(a: usize) -> (usize, usize) {
    match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Voxels per axis (I, J, K).
    pub resolution: [usize; 3],
    /// Rank per decomposition term.
    pub rank: usize,
    pub density_channels: usize,
    pub appearance_channels: usize,
    pub bounding_box: Aabb,
    /// DCT block for matrix planes (channel, d1, d2).
    pub matrix_block: BlockDims,
    /// DCT block for vector lines (channel, length).
    pub vector_block: BlockDims,
    /// Half-width of the uniform init distribution.
    pub init_scale: f64,
}

impl GridConfig {
    /// Desk-scale defaults: 64^3, 16+16 channels, rank 1, 16^3 / 8x8 blocks.
    pub fn desk(bounding_box: Aabb) -> Self {
        GridConfig {
            resolution: [64, 64, 64],
            rank: 1,
            density_channels: 16,
            appearance_channels: 16,
            bounding_box,
            matrix_block: BlockDims::matrix_default(),
            vector_block: BlockDims::vector_default(),
            init_scale: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axis_name = ["I", "J", "K"];
        for a in 0..3 {
            if self.resolution[a] < 2 {
                return Err(Error::Config(format!(
                    "resolution {} = {} must be >= 2",
                    axis_name[a], self.resolution[a]
                )));
            }
        }
        if self.rank == 0 {
            return Err(Error::Config("rank must be >= 1".into()));
        }
        if self.density_channels == 0 || self.appearance_channels == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        self.matrix_block.validate()?;
        self.vector_block.validate()?;
        // Every resolution appears as a plane spatial axis and as a line
        // length, so it must divide evenly into both block shapes.
        for a in 0..3 {
            let r = self.resolution[a];
            for (k, what) in [
                (self.matrix_block.k2, "matrix block d1"),
                (self.matrix_block.k3, "matrix block d2"),
                (self.vector_block.k2, "vector block length"),
            ] {
                if r % k != 0 {
                    return Err(Error::Config(format!(
                        "resolution {} = {} is not a multiple of {} {}",
                        axis_name[a], r, what, k
                    )));
                }
            }
        }
        for (c, name) in [
            (self.density_channels, "density_channels"),
            (self.appearance_channels, "appearance_channels"),
        ] {
            for (k, what) in [
                (self.matrix_block.k1, "matrix block channel dim"),
                (self.vector_block.k1, "vector block channel dim"),
            ] {
                if c % k != 0 {
                    return Err(Error::Config(format!(
                        "{} = {} is not a multiple of {} {}",
                        name, c, what, k
                    )));
                }
            }
        }
        for a in 0..3 {
            if !(self.bounding_box.min[a] < self.bounding_box.max[a]) {
                return Err(Error::Config(format!(
                    "bounding box degenerate along axis {a}"
                )));
            }
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::Config("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn channels(&self, kind: FieldKind) -> usize {
        match kind {
            FieldKind::Density => self.density_channels,
            FieldKind::Appearance => self.appearance_channels,
        }
    }

    /// Tensor dims for a component under this config.
    pub fn component_dims(&self, id: ComponentId) -> [usize; 4] {
        let c = self.channels(id.kind());
        match id {
            ComponentId::DensityPlane(a) | ComponentId::AppearancePlane(a) => {
                let (b, cx) = plane_axes(a);
                [self.rank, c, self.resolution[b], self.resolution[cx]]
            }
            ComponentId::DensityLine(a) | ComponentId::AppearanceLine(a) => {
                [self.rank, c, self.resolution[a], 1]
            }
        }
    }

    pub fn block_for(&self, id: ComponentId) -> BlockDims {
        if id.is_plane() {
            self.matrix_block
        } else {
            self.vector_block
        }
    }

    /// Total number of grid parameters (all twelve components).
    pub fn param_count(&self) -> usize {
        ComponentId::all()
            .iter()
            .map(|id| self.component_dims(*id).iter().product::<usize>())
            .sum()
    }
}

/// Planes and lines for one decomposition kind.
#[derive(Debug, Clone)]
pub struct ComponentSet {
    pub planes: [Tensor4; 3],
    pub lines: [Tensor4; 3],
}

/// Per-point feature sample.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub density: Vec<f64>,
    pub appearance: Vec<f64>,
}

/// Cached interpolation geometry for one query point: per axis the lower
/// node, the upper node and the fractional offset.
#[derive(Debug, Clone, Copy)]
pub struct InterpCache {
    pub i0: [usize; 3],
    pub i1: [usize; 3],
    pub frac: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct FeatureGrid {
    pub config: GridConfig,
    pub density: ComponentSet,
    pub appearance: ComponentSet,
}

impl FeatureGrid {
    /// Builds a grid with all components drawn from
    /// `U(-init_scale, init_scale)`; deterministic given `seed`.
    pub fn new(config: GridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut grid = FeatureGrid::zeros(config)?;
        let scale = grid.config.init_scale;
        for id in ComponentId::all() {
            let t = grid.component_mut(id);
            if scale > 0.0 {
                for v in t.data_mut() {
                    *v = rng.gen_range(-scale..scale);
                }
            }
        }
        Ok(grid)
    }

    /// All-zero grid with the same shapes; also used for gradient buffers.
    pub fn zeros(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let set = |kind: FieldKind, cfg: &GridConfig| -> ComponentSet {
            let mk = |id: ComponentId| Tensor4::zeros(cfg.component_dims(id));
            match kind {
                FieldKind::Density => ComponentSet {
                    planes: [
                        mk(ComponentId::DensityPlane(0)),
                        mk(ComponentId::DensityPlane(1)),
                        mk(ComponentId::DensityPlane(2)),
                    ],
                    lines: [
                        mk(ComponentId::DensityLine(0)),
                        mk(ComponentId::DensityLine(1)),
                        mk(ComponentId::DensityLine(2)),
                    ],
                },
                FieldKind::Appearance => ComponentSet {
                    planes: [
                        mk(ComponentId::AppearancePlane(0)),
                        mk(ComponentId::AppearancePlane(1)),
                        mk(ComponentId::AppearancePlane(2)),
                    ],
                    lines: [
                        mk(ComponentId::AppearanceLine(0)),
                        mk(ComponentId::AppearanceLine(1)),
                        mk(ComponentId::AppearanceLine(2)),
                    ],
                },
            }
        };
        Ok(FeatureGrid {
            density: set(FieldKind::Density, &config),
            appearance: set(FieldKind::Appearance, &config),
            config,
        })
    }

    pub fn component(&self, id: ComponentId) -> &Tensor4 {
        match id {
            ComponentId::DensityPlane(a) => &self.density.planes[a],
            ComponentId::DensityLine(a) => &self.density.lines[a],
            ComponentId::AppearancePlane(a) => &self.appearance.planes[a],
            ComponentId::AppearanceLine(a) => &self.appearance.lines[a],
        }
    }

    pub fn component_mut(&mut self, id: ComponentId) -> &mut Tensor4 {
        match id {
            ComponentId::DensityPlane(a) => &mut self.density.planes[a],
            ComponentId::DensityLine(a) => &mut self.density.lines[a],
            ComponentId::AppearancePlane(a) => &mut self.appearance.planes[a],
            ComponentId::AppearanceLine(a) => &mut self.appearance.lines[a],
        }
    }

    pub fn set(&self, kind: FieldKind) -> &ComponentSet {
        match kind {
            FieldKind::Density => &self.density,
            FieldKind::Appearance => &self.appearance,
        }
    }

    pub fn all_finite(&self) -> bool {
        ComponentId::all()
            .iter()
            .all(|id| self.component(*id).all_finite())
    }

    /// Materializes the dense tensor `[channels, I, J, K]` for one kind by
    /// direct evaluation of the rank-summed outer products.
    pub fn reconstruct_dense(&self, kind: FieldKind) -> Tensor4 {
        let [ni, nj, nk] = self.config.resolution;
        let channels = self.config.channels(kind);
        let set = self.set(kind);
        let mut out = Tensor4::zeros([channels, ni, nj, nk]);
        for c in 0..channels {
            for r in 0..self.config.rank {
                for i in 0..ni {
                    let vx = set.lines[0].get(r, c, i, 0);
                    for j in 0..nj {
                        let vy = set.lines[1].get(r, c, j, 0);
                        let m_xy = set.planes[2].get(r, c, i, j);
                        for k in 0..nk {
                            let vz = set.lines[2].get(r, c, k, 0);
                            let val = vx * set.planes[0].get(r, c, j, k)
                                + vy * set.planes[1].get(r, c, i, k)
                                + vz * m_xy;
                            let o = out.offset(c, i, j, k);
                            out.data_mut()[o] += val;
                        }
                    }
                }
            }
        }
        out
    }

    /// Interpolation geometry for a world-space point. Errors if the point is
    /// outside the bounding box (beyond a 1e-9 relative tolerance).
    pub fn interp_cache(&self, p: [f64; 3]) -> Result<InterpCache> {
        let bb = &self.config.bounding_box;
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let extent = bb.max[a] - bb.min[a];
            let tol = 1e-9 * extent;
            if p[a] < bb.min[a] - tol || p[a] > bb.max[a] + tol {
                return Err(Error::Contract(format!(
                    "sample point {:?} outside bounding box along axis {a}",
                    p
                )));
            }
            let n = self.config.resolution[a];
            let u = ((p[a] - bb.min[a]) / extent * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let lo = (u.floor() as usize).min(n - 2);
            i0[a] = lo;
            i1[a] = lo + 1;
            frac[a] = u - lo as f64;
        }
        Ok(InterpCache { i0, i1, frac })
    }

    /// Accumulates interpolated features for one kind into `out`
    /// (length = channel count; caller zeroes it).
    pub fn features_into(&self, kind: FieldKind, cache: &InterpCache, out: &mut [f64]) {
        let set = self.set(kind);
        let channels = self.config.channels(kind);
        debug_assert_eq!(out.len(), channels);
        for a in 0..3 {
            let (bx, cx) = plane_axes(a);
            let fa = cache.frac[a];
            let (fb, fc) = (cache.frac[bx], cache.frac[cx]);
            let w00 = (1.0 - fb) * (1.0 - fc);
            let w01 = (1.0 - fb) * fc;
            let w10 = fb * (1.0 - fc);
            let w11 = fb * fc;
            let line = &set.lines[a];
            let plane = &set.planes[a];
            for r in 0..self.config.rank {
                for (c, o) in out.iter_mut().enumerate() {
                    let lv = (1.0 - fa) * line.get(r, c, cache.i0[a], 0)
                        + fa * line.get(r, c, cache.i1[a], 0);
                    let pv = w00 * plane.get(r, c, cache.i0[bx], cache.i0[cx])
                        + w01 * plane.get(r, c, cache.i0[bx], cache.i1[cx])
                        + w10 * plane.get(r, c, cache.i1[bx], cache.i0[cx])
                        + w11 * plane.get(r, c, cache.i1[bx], cache.i1[cx]);
                    *o += lv * pv;
                }
            }
        }
    }

    /// Scatters feature gradients back onto the touched grid parameters.
    /// `d_out[c]` is the loss gradient of feature channel `c`;
    /// contributions accumulate into `grads` (same shapes as `self`).
    pub fn scatter_features(
        &self,
        kind: FieldKind,
        cache: &InterpCache,
        d_out: &[f64],
        grads: &mut FeatureGrid,
    ) {
        let set = self.set(kind);
        let channels = self.config.channels(kind);
        debug_assert_eq!(d_out.len(), channels);
        for a in 0..3 {
            let (bx, cx) = plane_axes(a);
            let fa = cache.frac[a];
            let (fb, fc) = (cache.frac[bx], cache.frac[cx]);
            let w00 = (1.0 - fb) * (1.0 - fc);
            let w01 = (1.0 - fb) * fc;
            let w10 = fb * (1.0 - fc);
            let w11 = fb * fc;
            let line = &set.lines[a];
            let plane = &set.planes[a];
            let (gline, gplane) = match kind {
                FieldKind::Density => (&mut grads.density.lines[a], &mut grads.density.planes[a]),
                FieldKind::Appearance => (
                    &mut grads.appearance.lines[a],
                    &mut grads.appearance.planes[a],
                ),
            };
            for r in 0..self.config.rank {
                for (c, g) in d_out.iter().enumerate() {
                    if *g == 0.0 {
                        continue;
                    }
                    let lv = (1.0 - fa) * line.get(r, c, cache.i0[a], 0)
                        + fa * line.get(r, c, cache.i1[a], 0);
                    let pv = w00 * plane.get(r, c, cache.i0[bx], cache.i0[cx])
                        + w01 * plane.get(r, c, cache.i0[bx], cache.i1[cx])
                        + w10 * plane.get(r, c, cache.i1[bx], cache.i0[cx])
                        + w11 * plane.get(r, c, cache.i1[bx], cache.i1[cx]);
                    let gl = g * pv;
                    let o0 = gline.offset(r, c, cache.i0[a], 0);
                    let o1 = gline.offset(r, c, cache.i1[a], 0);
                    gline.data_mut()[o0] += gl * (1.0 - fa);
                    gline.data_mut()[o1] += gl * fa;
                    let gp = g * lv;
                    let p00 = gplane.offset(r, c, cache.i0[bx], cache.i0[cx]);
                    let p01 = gplane.offset(r, c, cache.i0[bx], cache.i1[cx]);
                    let p10 = gplane.offset(r, c, cache.i1[bx], cache.i0[cx]);
                    let p11 = gplane.offset(r, c, cache.i1[bx], cache.i1[cx]);
                    gplane.data_mut()[p00] += gp * w00;
                    gplane.data_mut()[p01] += gp * w01;
                    gplane.data_mut()[p10] += gp * w10;
                    gplane.data_mut()[p11] += gp * w11;
                }
            }
        }
    }

    /// Interpolated features for a world-space point inside the bounding box.
    pub fn sample_features(&self, p: [f64; 3]) -> Result<FeatureVector> {
        let cache = self.interp_cache(p)?;
        let mut density = vec![0.0; self.config.density_channels];
        let mut appearance = vec![0.0; self.config.appearance_channels];
        self.features_into(FieldKind::Density, &cache, &mut density);
        self.features_into(FieldKind::Appearance, &cache, &mut appearance);
        Ok(FeatureVector {
            density,
            appearance,
        })
    }

    /// World position of a grid node.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let bb = &self.config.bounding_box;
        let idx = [i, j, k];
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = bb.min[a]
                + (bb.max[a] - bb.min[a]) * idx[a] as f64
                    / (self.config.resolution[a] - 1) as f64;
        }
        p
    }
}
