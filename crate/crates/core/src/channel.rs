//! Channel realizations for the three-cell downlink.
//!
//! Two generators are provided: a symmetric statistical model where every
//! direct link is `CN(0, 1)` and every cross link `CN(0, h)`, and a geometric
//! model with three base stations on an equilateral triangle, users dropped
//! uniformly in their serving disc and distance-dependent attenuation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Number of cooperating cells.
pub const N_CELLS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDims {
    /// Number of subcarriers `N`, must be even.
    pub n_subcarriers: usize,
    /// Users per cell, identical for all three cells.
    pub users_per_cell: usize,
    /// Receiver noise variance.
    pub noise_variance: f64,
    /// Per base station total transmit power.
    pub power_budget: [f64; N_CELLS],
}

impl SystemDims {
    /// Dimensions with unit noise variance and zero budget.
    pub fn new(n_subcarriers: usize, users_per_cell: usize) -> Self {
        Self {
            n_subcarriers,
            users_per_cell,
            noise_variance: 1.0,
            power_budget: [0.0; N_CELLS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || !self.n_subcarriers.is_multiple_of(2) {
            return Err(Error::InvalidDims(format!(
                "subcarrier count must be positive and even, got {}",
                self.n_subcarriers
            )));
        }
        if self.users_per_cell == 0 {
            return Err(Error::InvalidDims("need at least one user per cell".into()));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidDims(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        if self
            .power_budget
            .iter()
            .any(|p| !(*p >= 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidDims(
                "power budgets must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Complex gains `h[tx][rx_cell][user][subcarrier]` plus the system dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    dims: SystemDims,
    gains: Vec<Complex64>,
}

impl ChannelTensor {
    /// All-zero tensor.
    pub fn zeros(dims: SystemDims) -> Result<Self> {
        dims.validate()?;
        let len = N_CELLS * N_CELLS * dims.users_per_cell * dims.n_subcarriers;
        Ok(Self {
            dims,
            gains: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    /// Builds a tensor from a closure over `(tx, rx_cell, user, subcarrier)`.
    pub fn from_fn(
        dims: SystemDims,
        mut f: impl FnMut(usize, usize, usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        for tx in 0..N_CELLS {
            for cell in 0..N_CELLS {
                for user in 0..t.dims.users_per_cell {
                    for sc in 0..t.dims.n_subcarriers {
                        let g = f(tx, cell, user, sc);
                        if !(g.re.is_finite() && g.im.is_finite()) {
                            return Err(Error::InvalidArgument("non-finite channel gain".into()));
                        }
                        let i = t.index(tx, cell, user, sc);
                        t.gains[i] = g;
                    }
                }
            }
        }
        Ok(t)
    }

    #[inline]
    fn index(&self, tx: usize, cell: usize, user: usize, sc: usize) -> usize {
        ((tx * N_CELLS + cell) * self.dims.users_per_cell + user) * self.dims.n_subcarriers + sc
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn n_subcarriers(&self) -> usize {
        self.dims.n_subcarriers
    }

    pub fn users_per_cell(&self) -> usize {
        self.dims.users_per_cell
    }

    pub fn noise_variance(&self) -> f64 {
        self.dims.noise_variance
    }

    /// Gain from base station `tx` to user `user` of cell `cell` on `sc`.
    #[inline]
    pub fn gain(&self, tx: usize, cell: usize, user: usize, sc: usize) -> Complex64 {
        self.gains[self.index(tx, cell, user, sc)]
    }

    pub fn set_gain(&mut self, tx: usize, cell: usize, user: usize, sc: usize, g: Complex64) {
        let i = self.index(tx, cell, user, sc);
        self.gains[i] = g;
    }

    /// Noise-normalized power gain `|h|^2 / sigma^2`.
    #[inline]
    pub fn norm_gain(&self, tx: usize, cell: usize, user: usize, sc: usize) -> f64 {
        self.gain(tx, cell, user, sc).norm_sqr() / self.dims.noise_variance
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.gains
    }

    /// Copy with a different noise variance.
    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.noise_variance = noise_variance;
        dims.validate()?;
        Ok(Self {
            dims,
            gains: self.gains.clone(),
        })
    }
}

fn cn(rng: &mut SimRng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Symmetric model with an explicit generator.
pub fn gen_symmetric_channels_with(
    dims: &SystemDims,
    cross_gain: f64,
    rng: &mut SimRng,
) -> Result<ChannelTensor> {
    if !(cross_gain >= 0.0) || !cross_gain.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cross gain must be finite and >= 0, got {cross_gain}"
        )));
    }
    ChannelTensor::from_fn(dims.clone(), |tx, cell, _, _| {
        let var = if tx == cell { 1.0 } else { cross_gain };
        if var == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            cn(rng, var)
        }
    })
}

/// i.i.d. circularly-symmetric Gaussian gains; direct links have unit
/// variance and cross links variance `cross_gain`.
pub fn gen_symmetric_channels(
    dims: &SystemDims,
    cross_gain: f64,
    seed: u64,
) -> Result<ChannelTensor> {
    gen_symmetric_channels_with(dims, cross_gain, &mut seeded(seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub cell_radius: f64,
    pub inter_site_distance: f64,
    pub pathloss_exponent: f64,
}

/// Unit radius, sites 1.2 radii apart so all three discs overlap around the
/// centroid, free-space exponent.
impl Default for Geometry {
    fn default() -> Self {
        Self {
            cell_radius: 1.0,
            inter_site_distance: 1.2,
            pathloss_exponent: 2.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_radius > 0.0 && self.cell_radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "cell radius must be positive, got {}",
                self.cell_radius
            )));
        }
        if !(self.inter_site_distance > 0.0 && self.inter_site_distance.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "inter-site distance must be positive, got {}",
                self.inter_site_distance
            )));
        }
        if !(self.pathloss_exponent >= 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "path-loss exponent must be >= 0, got {}",
                self.pathloss_exponent
            )));
        }
        Ok(())
    }

    /// Base stations on an equilateral triangle of side `D`, centroid at the
    /// origin.
    pub fn bs_positions(&self) -> [[f64; 2]; N_CELLS] {
        let r = self.inter_site_distance / 3f64.sqrt();
        let mut out = [[0.0; 2]; N_CELLS];
        for (i, p) in out.iter_mut().enumerate() {
            let a = std::f64::consts::FRAC_PI_2 + i as f64 * 2.0 * std::f64::consts::PI / 3.0;
            *p = [r * a.cos(), r * a.sin()];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Cell-intersection region, close to all three base stations.
    Cir,
    /// Cell-non-intersection region.
    Cnir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserLayout {
    pub bs_positions: [[f64; 2]; N_CELLS],
    /// `user_positions[cell][user]`.
    pub user_positions: Vec<Vec<[f64; 2]>>,
    pub cell_radius: f64,
    /// `region_labels[cell][user]`.
    pub region_labels: Vec<Vec<Region>>,
}

impl UserLayout {
    pub fn centroid(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for p in &self.bs_positions {
            c[0] += p[0] / 3.0;
            c[1] += p[1] / 3.0;
        }
        c
    }

    /// Distance from base station `bs` to user `user` of cell `cell`.
    pub fn distance(&self, bs: usize, cell: usize, user: usize) -> f64 {
        dist(self.bs_positions[bs], self.user_positions[cell][user])
    }

    /// Users of `cell` carrying the given label, in index order.
    pub fn users_in(&self, cell: usize, region: Region) -> Vec<usize> {
        self.region_labels[cell]
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == region)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn with_labels(mut self, cir_radius_fraction: f64) -> Self {
        self.region_labels = classify_regions(&self, cir_radius_fraction);
        self
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Labels a user CIR iff its distance to the centroid of the base stations is
/// at most `rho * R`.
pub fn classify_regions(layout: &UserLayout, cir_radius_fraction: f64) -> Vec<Vec<Region>> {
    let c = layout.centroid();
    let ball = cir_radius_fraction * layout.cell_radius;
    layout
        .user_positions
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|p| {
                    if cir_radius_fraction > 0.0 && dist(*p, c) <= ball {
                        Region::Cir
                    } else {
                        Region::Cnir
                    }
                })
                .collect()
        })
        .collect()
}

/// Drops users uniformly in each serving disc; all labels start as CNIR.
pub fn place_users(dims: &SystemDims, geometry: &Geometry, rng: &mut SimRng) -> Result<UserLayout> {
    geometry.validate()?;
    dims.validate()?;
    let bs = geometry.bs_positions();
    let mut user_positions = Vec::with_capacity(N_CELLS);
    for b in bs.iter() {
        let cell: Vec<[f64; 2]> = (0..dims.users_per_cell)
            .map(|_| {
                let r = geometry.cell_radius * rng.random::<f64>().sqrt();
                let a = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                [b[0] + r * a.cos(), b[1] + r * a.sin()]
            })
            .collect();
        user_positions.push(cell);
    }
    Ok(UserLayout {
        bs_positions: bs,
        user_positions,
        cell_radius: geometry.cell_radius,
        region_labels: vec![vec![Region::Cnir; dims.users_per_cell]; N_CELLS],
    })
}

/// Rayleigh fading scaled by `d^(-alpha/2)` for a given layout.
pub fn gen_layout_channels_with(
    dims: &SystemDims,
    geometry: &Geometry,
    layout: &UserLayout,
    rng: &mut SimRng,
) -> Result<ChannelTensor> {
    geometry.validate()?;
    let alpha = geometry.pathloss_exponent;
    ChannelTensor::from_fn(dims.clone(), |tx, cell, user, _| {
        // Guard against a user dropped exactly on a base station.
        let d = layout
            .distance(tx, cell, user)
            .max(1e-9 * geometry.cell_radius);
        cn(rng, 1.0) * d.powf(-alpha / 2.0)
    })
}

/// Geometric model with an explicit generator; users are labelled with
/// `classify_regions(.., 0)` (all CNIR) and should be relabelled by the
/// caller.
pub fn gen_heterogeneous_channels_with(
    dims: &SystemDims,
    geometry: &Geometry,
    rng: &mut SimRng,
) -> Result<(ChannelTensor, UserLayout)> {
    let layout = place_users(dims, geometry, rng)?;
    let tensor = gen_layout_channels_with(dims, geometry, &layout, rng)?;
    Ok((tensor, layout))
}

/// Geometric model: uniform user drops, `h = d^(-alpha/2) w` with
/// `w ~ CN(0, 1)` i.i.d. over links and subcarriers.
pub fn gen_heterogeneous_channels(
    dims: &SystemDims,
    geometry: &Geometry,
    seed: u64,
) -> Result<(ChannelTensor, UserLayout)> {
    gen_heterogeneous_channels_with(dims, geometry, &mut seeded(seed))
}
