//! Discrete Brillouin zone of a periodic chain.
//!
//! Modes are stored in FFT order: slot `i` holds momentum index
//! `m = i` for `i < L/2` and `m = i - L` otherwise, so `k_m = 2 pi m / L`
//! covers `m = -L/2 ..= L/2 - 1` and momentum arithmetic is plain
//! arithmetic modulo `L` on slots.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    l: usize,
}

impl Grid {
    pub fn new(l: usize) -> Self {
        assert!(l >= 2 && l % 2 == 0, "chain length must be even and >= 2");
        Grid { l }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed momentum index of slot `i`.
    #[inline]
    pub fn m(&self, i: usize) -> i64 {
        if i < self.l / 2 {
            i as i64
        } else {
            i as i64 - self.l as i64
        }
    }

    #[inline]
    pub fn k(&self, i: usize) -> f64 {
        2.0 * PI * self.m(i) as f64 / self.l as f64
    }

    /// Slot holding signed momentum index `m` (any integer, wrapped).
    #[inline]
    pub fn slot(&self, m: i64) -> usize {
        m.rem_euclid(self.l as i64) as usize
    }

    #[inline]
    pub fn add(&self, i: usize, j: usize) -> usize {
        let s = i + j;
        if s >= self.l {
            s - self.l
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, i: usize, j: usize) -> usize {
        if i >= j {
            i - j
        } else {
            i + self.l - j
        }
    }

    #[inline]
    pub fn neg(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.l - i
        }
    }

    /// Slot whose momentum lies closest to `k` (wrapped into the zone).
    pub fn nearest(&self, k: f64) -> usize {
        let m = (k * self.l as f64 / (2.0 * PI)).round() as i64;
        self.slot(m)
    }

    /// Grid spacing `2 pi / L`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.l as f64
    }

    /// Slots ordered by increasing momentum, `-pi` first.
    pub fn ascending(&self) -> impl Iterator<Item = usize> + '_ {
        let h = self.l / 2;
        (h..self.l).chain(0..h)
    }
}

/// Wrap a lattice momentum into `[-pi, pi)`.
#[inline]
pub fn wrap(k: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = (k + PI).rem_euclid(two_pi) - PI;
    if w >= PI {
        w -= two_pi;
    }
    w
}
