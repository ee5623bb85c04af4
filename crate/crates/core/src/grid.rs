//! Periodic lattices for the plane and for space-time, spectral fields living on
//! them, Fourier multipliers, and the pointwise frequency weights.
//!
//! # Fourier convention
//!
//! Frequency values approximate the continuum transform
//! `f^(xi) = \int e^{-i x.xi} f(x) dx`, so the forward transform is the
//! unnormalized DFT times the physical cell volume and the inverse transform is
//! the unnormalized inverse DFT divided by the box volume. With this choice
//! `sum |f|^2 dx^d = (2 pi)^{-d} sum |f^|^2 dxi^d` holds exactly on the lattice
//! (`d = 2` or `3`). Physical coordinates are centered: index `i` sits at
//! `k(i) * dx` where `k(i)` is the signed wavenumber of `i`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;

pub type C64 = Complex64;

/// Which representation a field's values are stored in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Physical,
    Frequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn source(self) -> Basis {
        match self {
            Direction::Forward => Basis::Physical,
            Direction::Inverse => Basis::Frequency,
        }
    }
}

fn check_axis(name: &str, n: usize, len: f64) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidGrid(format!("{name}: count {n} must be even and >= 4")));
    }
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name}: side length {len} must be positive")));
    }
    Ok(())
}

/// Signed wavenumber of lattice index `i` on an axis with `n` points:
/// `0, 1, .., n/2-1, -n/2, .., -1`.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Inverse of [`wavenumber`]; `None` when `k` is outside `[-n/2, n/2)`.
#[inline]
pub fn index_of(k: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if k < -half || k >= half {
        None
    } else if k >= 0 {
        Some(k as usize)
    } else {
        Some((k + n as i64) as usize)
    }
}

/// Largest wavenumber kept by the 2/3 rule: products of two fields truncated
/// at this radius alias only onto modes that are themselves discarded.
#[inline]
pub fn dealias_cutoff(n: usize) -> i64 {
    ((n - 1) / 3) as i64
}

/// Square `n x n` lattice on a periodic box of side `box_len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec2 {
    n: usize,
    box_len: f64,
}

impl GridSpec2 {
    pub fn new(n: usize, box_len: f64) -> Result<Self> {
        check_axis("x", n, box_len)?;
        Ok(Self { n, box_len })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn box_len(&self) -> f64 {
        self.box_len
    }
    pub fn len(&self) -> usize {
        self.n * self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx(&self) -> f64 {
        self.box_len / self.n as f64
    }
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_len
    }
    pub fn cell_x(&self) -> f64 {
        self.dx() * self.dx()
    }
    pub fn cell_xi(&self) -> f64 {
        self.dxi() * self.dxi()
    }

    /// Integer wavenumber pair of flat index `idx`.
    #[inline]
    pub fn wavenumbers(&self, idx: usize) -> [i64; 2] {
        [wavenumber(idx / self.n, self.n), wavenumber(idx % self.n, self.n)]
    }

    #[inline]
    pub fn xi(&self, idx: usize) -> [f64; 2] {
        let k = self.wavenumbers(idx);
        let d = self.dxi();
        [k[0] as f64 * d, k[1] as f64 * d]
    }

    #[inline]
    pub fn x(&self, idx: usize) -> [f64; 2] {
        let k = self.wavenumbers(idx);
        let d = self.dx();
        [k[0] as f64 * d, k[1] as f64 * d]
    }

    pub fn index_of(&self, k: [i64; 2]) -> Option<usize> {
        Some(index_of(k[0], self.n)? * self.n + index_of(k[1], self.n)?)
    }

    /// `|xi|` at every lattice point, in flat order.
    pub fn abs_xi(&self) -> Vec<f64> {
        (0..self.len()).map(|i| norm2(self.xi(i))).collect()
    }

    pub fn max_abs_xi(&self) -> f64 {
        let k = (self.n / 2) as f64 * self.dxi();
        (2.0f64).sqrt() * k
    }

    /// True when index `idx` survives 2/3-rule truncation.
    pub fn dealias_keep(&self, idx: usize) -> bool {
        let k = self.wavenumbers(idx);
        let c = dealias_cutoff(self.n);
        k[0].abs() <= c && k[1].abs() <= c
    }
}

/// Space-time lattice: `n_t` time points on a periodic window of length
/// `box_t` and an `n_x x n_x` spatial lattice of side `box_x`.
/// Flat layout is `[t][x1][x2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec3 {
    n_t: usize,
    n_x: usize,
    box_t: f64,
    box_x: f64,
}

impl GridSpec3 {
    pub fn new(n_t: usize, n_x: usize, box_t: f64, box_x: f64) -> Result<Self> {
        check_axis("t", n_t, box_t)?;
        check_axis("x", n_x, box_x)?;
        Ok(Self { n_t, n_x, box_t, box_x })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn box_t(&self) -> f64 {
        self.box_t
    }
    pub fn box_x(&self) -> f64 {
        self.box_x
    }
    pub fn len(&self) -> usize {
        self.n_t * self.n_x * self.n_x
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn slice_len(&self) -> usize {
        self.n_x * self.n_x
    }
    pub fn dt(&self) -> f64 {
        self.box_t / self.n_t as f64
    }
    pub fn dx(&self) -> f64 {
        self.box_x / self.n_x as f64
    }
    pub fn dtau(&self) -> f64 {
        2.0 * PI / self.box_t
    }
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_x
    }
    pub fn cell_phys(&self) -> f64 {
        self.dt() * self.dx() * self.dx()
    }
    pub fn cell_freq(&self) -> f64 {
        self.dtau() * self.dxi() * self.dxi()
    }

    /// The spatial slice as a planar grid.
    pub fn space(&self) -> GridSpec2 {
        GridSpec2 { n: self.n_x, box_len: self.box_x }
    }

    #[inline]
    fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.slice_len(), idx % self.slice_len())
    }

    /// `(tau, xi)` at flat index `idx`.
    #[inline]
    pub fn tau_xi(&self, idx: usize) -> (f64, [f64; 2]) {
        let (k, rest) = self.split(idx);
        (wavenumber(k, self.n_t) as f64 * self.dtau(), self.space().xi(rest))
    }

    /// `(t, x)` at flat index `idx`, centered coordinates.
    #[inline]
    pub fn t_x(&self, idx: usize) -> (f64, [f64; 2]) {
        let (k, rest) = self.split(idx);
        (wavenumber(k, self.n_t) as f64 * self.dt(), self.space().x(rest))
    }

    /// Time of slice `k` measured forward from the origin, `k * dt`.
    pub fn slice_time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Centered time coordinate of slice `k`.
    pub fn centered_time(&self, k: usize) -> f64 {
        wavenumber(k, self.n_t) as f64 * self.dt()
    }
}

#[inline]
pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn check_symbol_value(v: C64, describe: impl FnOnce() -> String) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteSymbol { point: describe() })
    }
}

/// Complex field on a [`GridSpec2`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField2 {
    grid: GridSpec2,
    values: Vec<C64>,
    basis: Basis,
}

impl SpectralField2 {
    pub fn new(grid: GridSpec2, values: Vec<C64>, basis: Basis) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values, basis })
    }

    pub fn zeros(grid: GridSpec2, basis: Basis) -> Self {
        Self { grid, values: vec![C64::default(); grid.len()], basis }
    }

    pub fn from_physical_fn(grid: GridSpec2, f: impl Fn([f64; 2]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self { grid, values, basis: Basis::Physical }
    }

    pub fn from_frequency_fn(grid: GridSpec2, f: impl Fn([f64; 2]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.xi(i))).collect();
        Self { grid, values, basis: Basis::Frequency }
    }

    pub fn grid(&self) -> &GridSpec2 {
        &self.grid
    }
    pub fn basis(&self) -> Basis {
        self.basis
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn transform(&self, direction: Direction) -> Result<Self> {
        if self.basis != direction.source() {
            return Err(Error::BasisMismatch { expected: direction.source(), found: self.basis });
        }
        let mut values = self.values.clone();
        let n = self.grid.n;
        match direction {
            Direction::Forward => {
                fft_nd(&mut values, &[n, n], false);
                let c = self.grid.cell_x();
                values.iter_mut().for_each(|v| *v *= c);
                Ok(Self { grid: self.grid, values, basis: Basis::Frequency })
            }
            Direction::Inverse => {
                fft_nd(&mut values, &[n, n], true);
                let c = 1.0 / (self.grid.box_len * self.grid.box_len);
                values.iter_mut().for_each(|v| *v *= c);
                Ok(Self { grid: self.grid, values, basis: Basis::Physical })
            }
        }
    }

    pub fn to_frequency(&self) -> Self {
        match self.basis {
            Basis::Frequency => self.clone(),
            Basis::Physical => self.transform(Direction::Forward).expect("basis checked"),
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.basis {
            Basis::Physical => self.clone(),
            Basis::Frequency => self.transform(Direction::Inverse).expect("basis checked"),
        }
    }

    /// Multiply the spectrum by `symbol(xi)`. The result is in the frequency basis.
    pub fn apply_multiplier(&self, symbol: impl Fn([f64; 2]) -> C64) -> Result<Self> {
        let mut out = self.to_frequency();
        for (i, v) in out.values.iter_mut().enumerate() {
            let xi = self.grid.xi(i);
            let m = check_symbol_value(symbol(xi), || format!("xi = ({}, {})", xi[0], xi[1]))?;
            *v *= m;
        }
        Ok(out)
    }

    /// Pointwise combination of two fields sharing grid and basis.
    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.basis != other.basis {
            return Err(Error::BasisMismatch { expected: self.basis, found: other.basis });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values, basis: self.basis })
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), basis: self.basis }
    }

    pub fn scale(&self, a: C64) -> Self {
        self.map(|v| v * a)
    }

    /// Value at the zero frequency (frequency basis only).
    pub fn zero_mode(&self) -> Result<C64> {
        if self.basis != Basis::Frequency {
            return Err(Error::BasisMismatch { expected: Basis::Frequency, found: self.basis });
        }
        Ok(self.values[0])
    }
}

/// Complex field on a [`GridSpec3`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField3 {
    grid: GridSpec3,
    values: Vec<C64>,
    basis: Basis,
}

impl SpectralField3 {
    pub fn new(grid: GridSpec3, values: Vec<C64>, basis: Basis) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values, basis })
    }

    pub fn zeros(grid: GridSpec3, basis: Basis) -> Self {
        Self { grid, values: vec![C64::default(); grid.len()], basis }
    }

    pub fn from_physical_fn(grid: GridSpec3, f: impl Fn(f64, [f64; 2]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (t, x) = grid.t_x(i);
                f(t, x)
            })
            .collect();
        Self { grid, values, basis: Basis::Physical }
    }

    pub fn from_frequency_fn(grid: GridSpec3, f: impl Fn(f64, [f64; 2]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (tau, xi) = grid.tau_xi(i);
                f(tau, xi)
            })
            .collect();
        Self { grid, values, basis: Basis::Frequency }
    }

    /// Stack equally long planar slices (all in the same basis) along time.
    /// Frequency-basis slices are taken to mean the mixed `(t, xi)` picture and
    /// are brought to physical space first.
    pub fn from_slices(grid: GridSpec3, slices: &[SpectralField2]) -> Result<Self> {
        if slices.len() != grid.n_t() {
            return Err(Error::InvalidGrid(format!(
                "expected {} time slices, got {}",
                grid.n_t(),
                slices.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        for s in slices {
            if *s.grid() != grid.space() {
                return Err(Error::GridMismatch);
            }
            values.extend_from_slice(s.to_physical().values());
        }
        Ok(Self { grid, values, basis: Basis::Physical })
    }

    pub fn grid(&self) -> &GridSpec3 {
        &self.grid
    }
    pub fn basis(&self) -> Basis {
        self.basis
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Physical slice at time index `k`.
    pub fn time_slice(&self, k: usize) -> Result<SpectralField2> {
        if self.basis != Basis::Physical {
            return Err(Error::BasisMismatch { expected: Basis::Physical, found: self.basis });
        }
        let m = self.grid.slice_len();
        SpectralField2::new(self.grid.space(), self.values[k * m..(k + 1) * m].to_vec(), Basis::Physical)
    }

    pub fn transform(&self, direction: Direction) -> Result<Self> {
        if self.basis != direction.source() {
            return Err(Error::BasisMismatch { expected: direction.source(), found: self.basis });
        }
        let mut values = self.values.clone();
        let shape = [self.grid.n_t, self.grid.n_x, self.grid.n_x];
        match direction {
            Direction::Forward => {
                fft_nd(&mut values, &shape, false);
                let c = self.grid.cell_phys();
                values.iter_mut().for_each(|v| *v *= c);
                Ok(Self { grid: self.grid, values, basis: Basis::Frequency })
            }
            Direction::Inverse => {
                fft_nd(&mut values, &shape, true);
                let c = 1.0 / (self.grid.box_t * self.grid.box_x * self.grid.box_x);
                values.iter_mut().for_each(|v| *v *= c);
                Ok(Self { grid: self.grid, values, basis: Basis::Physical })
            }
        }
    }

    pub fn to_frequency(&self) -> Self {
        match self.basis {
            Basis::Frequency => self.clone(),
            Basis::Physical => self.transform(Direction::Forward).expect("basis checked"),
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.basis {
            Basis::Physical => self.clone(),
            Basis::Frequency => self.transform(Direction::Inverse).expect("basis checked"),
        }
    }

    /// Multiply the space-time spectrum by `symbol(tau, xi)`.
    pub fn apply_multiplier(&self, symbol: impl Fn(f64, [f64; 2]) -> C64) -> Result<Self> {
        let mut out = self.to_frequency();
        for (i, v) in out.values.iter_mut().enumerate() {
            let (tau, xi) = self.grid.tau_xi(i);
            let m = check_symbol_value(symbol(tau, xi), || {
                format!("(tau, xi) = ({tau}, {}, {})", xi[0], xi[1])
            })?;
            *v *= m;
        }
        Ok(out)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.basis != other.basis {
            return Err(Error::BasisMismatch { expected: self.basis, found: other.basis });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values, basis: self.basis })
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), basis: self.basis }
    }
}

/// Two-component spinor on the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField2 {
    pub c: [SpectralField2; 2],
}

impl SpinorField2 {
    pub fn new(c1: SpectralField2, c2: SpectralField2) -> Result<Self> {
        if c1.grid() != c2.grid() {
            return Err(Error::GridMismatch);
        }
        if c1.basis() != c2.basis() {
            return Err(Error::BasisMismatch { expected: c1.basis(), found: c2.basis() });
        }
        Ok(Self { c: [c1, c2] })
    }

    pub fn zeros(grid: GridSpec2, basis: Basis) -> Self {
        Self { c: [SpectralField2::zeros(grid, basis), SpectralField2::zeros(grid, basis)] }
    }

    pub fn grid(&self) -> &GridSpec2 {
        self.c[0].grid()
    }
    pub fn basis(&self) -> Basis {
        self.c[0].basis()
    }
    pub fn to_frequency(&self) -> Self {
        Self { c: [self.c[0].to_frequency(), self.c[1].to_frequency()] }
    }
    pub fn to_physical(&self) -> Self {
        Self { c: [self.c[0].to_physical(), self.c[1].to_physical()] }
    }
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { c: [self.c[0].map(&f), self.c[1].map(&f)] }
    }
    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        Ok(Self { c: [self.c[0].zip_with(&other.c[0], &f)?, self.c[1].zip_with(&other.c[1], &f)?] })
    }
}

/// Two-component spinor on space-time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField3 {
    pub c: [SpectralField3; 2],
}

impl SpinorField3 {
    pub fn new(c1: SpectralField3, c2: SpectralField3) -> Result<Self> {
        if c1.grid() != c2.grid() {
            return Err(Error::GridMismatch);
        }
        if c1.basis() != c2.basis() {
            return Err(Error::BasisMismatch { expected: c1.basis(), found: c2.basis() });
        }
        Ok(Self { c: [c1, c2] })
    }

    pub fn grid(&self) -> &GridSpec3 {
        self.c[0].grid()
    }
    pub fn basis(&self) -> Basis {
        self.c[0].basis()
    }
    pub fn to_frequency(&self) -> Self {
        Self { c: [self.c[0].to_frequency(), self.c[1].to_frequency()] }
    }
    pub fn to_physical(&self) -> Self {
        Self { c: [self.c[0].to_physical(), self.c[1].to_physical()] }
    }
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { c: [self.c[0].map(&f), self.c[1].map(&f)] }
    }
}

/// Ready-made multiplier symbols.
pub mod symbols {
    use super::{norm2, C64};

    /// `<x> = 1 + |x|`.
    #[inline]
    pub fn bracket(x: f64) -> f64 {
        1.0 + x.abs()
    }

    /// `<xi>^s`.
    pub fn sobolev(s: f64) -> impl Fn([f64; 2]) -> C64 {
        move |xi| C64::new(bracket(norm2(xi)).powf(s), 0.0)
    }

    /// `|xi|^s`, with the value at `xi = 0` set to zero for negative `s`.
    pub fn homogeneous(s: f64) -> impl Fn([f64; 2]) -> C64 {
        move |xi| C64::new(homogeneous_power(norm2(xi), s), 0.0)
    }

    /// `|x|^s`, with `0^s := 0` for `s < 0`; such calls are logged at debug level.
    #[inline]
    pub fn homogeneous_power(r: f64, s: f64) -> f64 {
        if r == 0.0 && s < 0.0 {
            log::debug!("zero mode zeroed for |xi|^{s}");
            0.0
        } else {
            r.powf(s)
        }
    }

    /// `<tau + sign |xi|>^b`.
    pub fn xsb_weight(sign: f64, b: f64) -> impl Fn(f64, [f64; 2]) -> C64 {
        move |tau, xi| C64::new(bracket(tau + sign * norm2(xi)).powf(b), 0.0)
    }

    /// `<|tau| - |xi|>^b`.
    pub fn wave_weight(b: f64) -> impl Fn(f64, [f64; 2]) -> C64 {
        move |tau, xi| C64::new(bracket(tau.abs() - norm2(xi)).powf(b), 0.0)
    }

    /// Indicator of a planar frequency set.
    pub fn indicator(set: impl Fn([f64; 2]) -> bool) -> impl Fn([f64; 2]) -> C64 {
        move |xi| if set(xi) { C64::new(1.0, 0.0) } else { C64::default() }
    }
}

/// Pointwise weights for an input frequency `(lambda, eta)` and output
/// frequency `(tau, xi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightPoint {
    pub a: f64,
    pub b: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
}

pub fn weights_at(lambda: f64, eta: [f64; 2], tau: f64, xi: [f64; 2]) -> WeightPoint {
    let n_eta = norm2(eta);
    let n_xi = norm2(xi);
    let n_diff = norm2([eta[0] - xi[0], eta[1] - xi[1]]);
    WeightPoint {
        a: tau.abs() - n_xi,
        b: lambda + n_eta,
        c_plus: lambda - tau + n_diff,
        c_minus: lambda - tau - n_diff,
        rho_plus: n_xi - (n_eta - n_diff).abs(),
        rho_minus: n_eta + n_diff - n_xi,
    }
}
