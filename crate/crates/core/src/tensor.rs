use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, C64};

/// Complex tensor indexed by (AP `q`, user `i`, antenna `m`), row-major.
///
/// Used for channels (`h_i^q[m]`) and beamformers (`v_i^q[m]`). The stacked
/// per-user vector of length `Q·M` orders AP blocks first:
/// `[x_i^1; x_i^2; …; x_i^Q]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CTensor3 {
    aps: usize,
    users: usize,
    antennas: usize,
    data: Vec<C64>,
}

impl CTensor3 {
    pub fn zeros(aps: usize, users: usize, antennas: usize) -> Self {
        CTensor3 {
            aps,
            users,
            antennas,
            data: vec![C64::new(0.0, 0.0); aps * users * antennas],
        }
    }

    pub fn from_vec(aps: usize, users: usize, antennas: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != aps * users * antennas {
            return Err(Error::shape(
                format!("{} entries", aps * users * antennas),
                format!("{} entries", data.len()),
            ));
        }
        Ok(CTensor3 {
            aps,
            users,
            antennas,
            data,
        })
    }

    pub fn from_fn(
        aps: usize,
        users: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut data = Vec::with_capacity(aps * users * antennas);
        for q in 0..aps {
            for i in 0..users {
                for m in 0..antennas {
                    data.push(f(q, i, m));
                }
            }
        }
        CTensor3 {
            aps,
            users,
            antennas,
            data,
        }
    }

    pub fn aps(&self) -> usize {
        self.aps
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.aps, self.users, self.antennas)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, q: usize, i: usize, m: usize) -> usize {
        (q * self.users + i) * self.antennas + m
    }

    pub fn get(&self, q: usize, i: usize, m: usize) -> C64 {
        self.data[self.offset(q, i, m)]
    }

    pub fn set(&mut self, q: usize, i: usize, m: usize, z: C64) {
        let k = self.offset(q, i, m);
        self.data[k] = z;
    }

    /// The `M` antenna weights between AP `q` and user `i`.
    pub fn block(&self, q: usize, i: usize) -> &[C64] {
        let k = self.offset(q, i, 0);
        &self.data[k..k + self.antennas]
    }

    pub fn block_mut(&mut self, q: usize, i: usize) -> &mut [C64] {
        let k = self.offset(q, i, 0);
        let m = self.antennas;
        &mut self.data[k..k + m]
    }

    /// Stacked vector of user `i` over all APs (length `Q·M`).
    pub fn user_vector(&self, i: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.aps * self.antennas);
        for q in 0..self.aps {
            out.extend_from_slice(self.block(q, i));
        }
        out
    }

    pub fn set_user_vector(&mut self, i: usize, x: &[C64]) {
        debug_assert_eq!(x.len(), self.aps * self.antennas);
        for q in 0..self.aps {
            let m = self.antennas;
            self.block_mut(q, i).copy_from_slice(&x[q * m..(q + 1) * m]);
        }
    }

    /// Per-AP transmit power `Σ_i ‖v_i^q‖²`.
    pub fn ap_power(&self, q: usize) -> f64 {
        (0..self.users)
            .map(|i| self.block(q, i).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }
}

/// Real tensor with dimensions (width `Q`, height `I`, channels), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Tensor3 {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{} values", width * height * channels),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor3 {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for x in 0..width {
            for y in 0..height {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Tensor3 {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (x * self.height + y) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let k = self.index(x, y, c);
        self.data[k] = value;
    }

    /// The channel fibre at `(x, y)`.
    pub fn fibre(&self, x: usize, y: usize) -> &[f64] {
        let k = self.index(x, y, 0);
        &self.data[k..k + self.channels]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
