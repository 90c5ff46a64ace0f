use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::analytic::Wave;
use crate::params::ModelParams;

/// Lattice coordinate `k` of the site `x = k / n`.
pub type Site = i32;

/// One individual: a site and a label in `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub site: Site,
    pub index: u32,
}

impl Slot {
    pub fn new(site: Site, index: u32) -> Self {
        Self { site, index }
    }
}

/// Contiguous block of sites `first..first + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub first: Site,
    pub len: usize,
}

impl Window {
    pub fn new(first: Site, len: usize) -> Self {
        Self { first, len }
    }

    /// All sites `k` with `x_min <= k/n <= x_max`.
    pub fn from_extent(n: u32, x_min: f64, x_max: f64) -> Self {
        let nf = f64::from(n);
        let first = (x_min * nf - 1e-9).ceil() as Site;
        let last = (x_max * nf + 1e-9).floor() as Site;
        Self { first, len: (last - first + 1).max(0) as usize }
    }

    /// Window of the given width (space units) centred on `center`.
    pub fn centered(n: u32, center: f64, width: f64) -> Self {
        Self::from_extent(n, center - 0.5 * width, center + 0.5 * width)
    }

    pub fn last(&self) -> Site {
        self.first + self.len as Site - 1
    }

    pub fn contains(&self, site: Site) -> bool {
        site >= self.first && site <= self.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub(crate) time: f64,
    pub(crate) n: u32,
    pub(crate) deme_size: u32,
    pub(crate) first_site: Site,
    /// Types, site-major: `types[(site - first_site) * N + index]`.
    pub(crate) types: Vec<u8>,
    pub(crate) counts: Vec<u32>,
}

impl PopulationState {
    /// State with the given per-site type-A counts; labels of the type-A
    /// individuals are a uniformly random subset at each site.
    pub fn from_counts<R: Rng + ?Sized>(
        n: u32,
        deme_size: u32,
        first_site: Site,
        counts: &[u32],
        rng: &mut R,
    ) -> Self {
        let nn = deme_size as usize;
        let mut types = vec![0u8; counts.len() * nn];
        let mut labels: Vec<u32> = (0..deme_size).collect();
        for (k, &a) in counts.iter().enumerate() {
            let a = a.min(deme_size) as usize;
            // Partial Fisher-Yates: the first `a` labels form a uniform subset.
            for i in 0..a {
                let j = rng.random_range(i..nn);
                labels.swap(i, j);
            }
            for &lab in &labels[..a] {
                types[k * nn + lab as usize] = 1;
            }
        }
        Self {
            time: 0.0,
            n,
            deme_size,
            first_site,
            types,
            counts: counts.iter().map(|&a| a.min(deme_size)).collect(),
        }
    }

    /// State built from explicit per-site type vectors.
    pub fn from_types(n: u32, deme_size: u32, first_site: Site, time: f64, types: Vec<u8>) -> Result<Self, SimError> {
        let nn = deme_size as usize;
        if nn == 0 || types.len() % nn != 0 || types.iter().any(|&t| t > 1) {
            return Err(SimError::MalformedState("type vector does not match deme size".into()));
        }
        let counts = types.chunks(nn).map(|c| c.iter().map(|&t| u32::from(t)).sum()).collect();
        Ok(Self { time, n, deme_size, first_site, types, counts })
    }

    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn deme_size(&self) -> u32 {
        self.deme_size
    }
    pub fn window(&self) -> Window {
        Window::new(self.first_site, self.counts.len())
    }
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
    pub fn x(&self, site: Site) -> f64 {
        f64::from(site) / f64::from(self.n)
    }

    pub fn count(&self, site: Site) -> Option<u32> {
        let k = site.checked_sub(self.first_site)?;
        usize::try_from(k).ok().and_then(|k| self.counts.get(k).copied())
    }

    /// Proportion of type A at `site`.
    pub fn p(&self, site: Site) -> Option<f64> {
        self.count(site).map(|a| f64::from(a) / f64::from(self.deme_size))
    }

    pub fn type_of(&self, slot: Slot) -> Option<u8> {
        if slot.index >= self.deme_size {
            return None;
        }
        let k = usize::try_from(slot.site.checked_sub(self.first_site)?).ok()?;
        if k >= self.counts.len() {
            return None;
        }
        Some(self.types[k * self.deme_size as usize + slot.index as usize])
    }

    pub fn site_types(&self, site: Site) -> Option<&[u8]> {
        let k = usize::try_from(site.checked_sub(self.first_site)?).ok()?;
        let nn = self.deme_size as usize;
        self.types.get(k * nn..(k + 1) * nn)
    }

    pub fn type_a_slots(&self, site: Site) -> Vec<Slot> {
        self.site_types(site)
            .map(|t| {
                t.iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(i, _)| Slot::new(site, i as u32))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Rightmost site with `p >= 1/2`.
    pub fn front_site(&self) -> Result<Site, SimError> {
        self.counts
            .iter()
            .rposition(|&a| 2 * a >= self.deme_size)
            .map(|k| self.first_site + k as Site)
            .ok_or(SimError::NoFront)
    }

    /// Front position `mu = sup { x : p(x) >= 1/2 }` in space units.
    pub fn front_position(&self) -> Result<f64, SimError> {
        self.front_site().map(|s| self.x(s))
    }

    /// Checks that the cached counts agree with the type vectors.
    pub fn is_coherent(&self) -> bool {
        let nn = self.deme_size as usize;
        self.types.len() == self.counts.len() * nn
            && self
                .types
                .chunks(nn)
                .zip(&self.counts)
                .all(|(c, &a)| c.iter().map(|&t| u32::from(t)).sum::<u32>() == a)
    }

    /// Overwrites one slot, keeping the site count coherent.
    pub(crate) fn set_type(&mut self, slot: Slot, ty: u8) {
        let rel = (slot.site - self.first_site) as usize;
        let idx = rel * self.deme_size as usize + slot.index as usize;
        let old = self.types[idx];
        if old != ty {
            self.types[idx] = ty;
            if ty == 1 {
                self.counts[rel] += 1;
            } else {
                self.counts[rel] -= 1;
            }
        }
    }

    /// Moves the window `shift` sites to the right, dropping sites on the
    /// left and appending all-a sites on the right.
    pub(crate) fn shift_right(&mut self, shift: usize) -> Result<(), SimError> {
        let nn = self.deme_size;
        if let Some(k) = self.counts[..shift.min(self.counts.len())].iter().position(|&a| a != nn) {
            return Err(SimError::DropPolymorphic { site: self.first_site + k as Site });
        }
        let len = self.counts.len();
        self.counts.drain(..shift.min(len));
        self.counts.resize(len, 0);
        let nn = nn as usize;
        self.types.drain(..shift.min(len) * nn);
        self.types.resize(len * nn, 0);
        self.first_site += shift as Site;
        Ok(())
    }
}

/// Per-site type-A counts `round(N g(x - center))`, clipped to `[0, N]`.
pub fn initial_counts(params: &ModelParams, window: Window, center: f64) -> Vec<u32> {
    let wave = Wave::for_params(params);
    let nn = f64::from(params.deme_size());
    (0..window.len)
        .map(|k| {
            let x = f64::from(window.first + k as Site) / f64::from(params.n());
            (nn * wave.profile(x - center)).round().clamp(0.0, nn) as u32
        })
        .collect()
}

/// Front-like initial state: rounded wave profile with uniformly random
/// labels at each site.
pub fn build_initial<R: Rng + ?Sized>(
    params: &ModelParams,
    window: Window,
    center: f64,
    rng: &mut R,
) -> Result<PopulationState, SimError> {
    let wave = Wave::for_params(params);
    let nn = f64::from(params.deme_size());
    let nf = f64::from(params.n());
    let left = f64::from(window.first) / nf - center;
    let right = f64::from(window.last()) / nf - center;
    if window.len == 0 || wave.profile(left) <= 1.0 - 0.5 / nn || wave.profile(right) >= 0.5 / nn {
        return Err(SimError::WindowTooNarrow {
            left: left + center,
            right: right + center,
            center,
        });
    }
    let counts = initial_counts(params, window, center);
    Ok(PopulationState::from_counts(params.n(), params.deme_size(), window.first, &counts, rng))
}
