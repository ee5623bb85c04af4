//! Free half-wave flows, the inhomogeneous wave equation, sharp dyadic
//! projections, the high-high to low interaction and Strichartz-type ratios.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dirac::Sign;
use crate::error::{Error, Result};
use crate::grid::symbols::homogeneous_power;
use crate::grid::{norm2, Basis, GridSpec2, GridSpec3, SpectralField2, SpectralField3, SpinorField2, C64};
use crate::norms::{lebesgue, sobolev_norm};

/// Output restriction constant of the high-high to low operator:
/// `|xi| <= C_HH (|eta| + |xi - eta|)`.
pub const C_HH: f64 = 0.25;

/// `S_sign(t) f`, i.e. the spectrum times `exp(-+ i t |xi|)`.
pub fn half_wave(f: &SpectralField2, sign: Sign, t: f64) -> SpectralField2 {
    let s = sign.value();
    f.apply_multiplier(|xi| C64::from_polar(1.0, -s * t * norm2(xi))).expect("phases are finite")
}

pub fn half_wave_spinor(f: &SpinorField2, sign: Sign, t: f64) -> SpinorField2 {
    SpinorField2 { c: [half_wave(&f.c[0], sign, t), half_wave(&f.c[1], sign, t)] }
}

/// Temporal taper applied when stacking a film.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilmWindow {
    /// Plain samples on the periodic time window.
    Sharp,
    /// `cos^2(pi t / box_t)` in centered time; vanishes at the window edge.
    Hann,
}

/// Free wave `S_sign(t) f` sampled at the centered times of `grid`, returned in
/// the physical basis.
pub fn free_wave_film(f: &SpectralField2, sign: Sign, grid: &GridSpec3, window: FilmWindow) -> Result<SpectralField3> {
    if *f.grid() != grid.space() {
        return Err(Error::GridMismatch);
    }
    let hat = f.to_frequency();
    let r = f.grid().abs_xi();
    let s = sign.value();
    let m = grid.slice_len();
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.n_t() {
        let t = grid.centered_time(k);
        let w = match window {
            FilmWindow::Sharp => 1.0,
            FilmWindow::Hann => (PI * t / grid.box_t()).cos().powi(2),
        };
        let slice: Vec<C64> =
            hat.values().iter().zip(&r).map(|(v, &rr)| v * C64::from_polar(w, -s * t * rr)).collect();
        let phys = SpectralField2::new(grid.space(), slice, Basis::Frequency)?.to_physical();
        values.extend_from_slice(phys.values());
    }
    debug_assert_eq!(values.len(), m * grid.n_t());
    SpectralField3::new(*grid, values, Basis::Physical)
}

/// Coefficients of the exact one-step map for `phi'' = -w^2 phi - F` with `F`
/// linear in time across the step.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WaveStep {
    cos: f64,
    sin_over_w: f64,
    w_sin: f64,
    a0: f64,
    a1: f64,
    b0: f64,
    b1: f64,
}

impl WaveStep {
    pub(crate) fn new(w: f64, h: f64) -> Self {
        let x = w * h;
        let (cos, sin_over_w, w_sin, is0, is1, ic0, ic1);
        if x.abs() < 1e-2 {
            let x2 = x * x;
            let x4 = x2 * x2;
            cos = 1.0 - x2 / 2.0 + x4 / 24.0;
            sin_over_w = h * (1.0 - x2 / 6.0 + x4 / 120.0);
            w_sin = w * w * sin_over_w;
            is0 = h * h * (0.5 - x2 / 24.0 + x4 / 720.0);
            is1 = h * h * (1.0 / 6.0 - x2 / 120.0 + x4 / 5040.0);
            ic0 = sin_over_w;
            ic1 = h * (0.5 - x2 / 24.0 + x4 / 720.0);
        } else {
            let (s, c) = x.sin_cos();
            cos = c;
            sin_over_w = s / w;
            w_sin = w * s;
            is0 = (1.0 - c) / (w * w);
            is1 = (x - s) / (w * w * w * h);
            ic0 = s / w;
            ic1 = (1.0 - c) / (w * w * h);
        }
        Self { cos, sin_over_w, w_sin, a0: is0 - is1, a1: is1, b0: ic0 - ic1, b1: ic1 }
    }

    /// Advance `(phi, phi_t)` by one step under `box phi = F`, where `f0`, `f1`
    /// are the forcing values at the two ends of the step.
    #[inline]
    pub(crate) fn advance(&self, phi: C64, phi_t: C64, f0: C64, f1: C64) -> (C64, C64) {
        (
            self.cos * phi + self.sin_over_w * phi_t - (self.a0 * f0 + self.a1 * f1),
            -self.w_sin * phi + self.cos * phi_t - (self.b0 * f0 + self.b1 * f1),
        )
    }
}

/// Solution of the inhomogeneous wave equation on a film, with its time derivative.
#[derive(Clone, Debug)]
pub struct WaveFilm {
    pub phi: SpectralField3,
    pub phi_t: SpectralField3,
}

/// Solves `box phi = F` (`box = -d_t^2 + Laplacian`) with data `(phi0, phi1)`.
///
/// Slice `k` of the film is time `k dt`, starting at zero. The forcing is taken
/// as piecewise linear between slices; each step is then integrated exactly,
/// including the zero mode. Output films are in the physical basis.
pub fn wave_duhamel(
    phi0: &SpectralField2,
    phi1: &SpectralField2,
    forcing: &SpectralField3,
    grid: &GridSpec3,
) -> Result<WaveFilm> {
    let space = grid.space();
    if *phi0.grid() != space || *phi1.grid() != space || forcing.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let m = grid.slice_len();
    let forcing = forcing.to_physical();
    let forcing_hat: Vec<SpectralField2> =
        (0..grid.n_t()).map(|k| forcing.time_slice(k).map(|s| s.to_frequency())).collect::<Result<_>>()?;
    let steps: Vec<WaveStep> = space.abs_xi().iter().map(|&w| WaveStep::new(w, grid.dt())).collect();
    let mut phi = phi0.to_frequency().into_values();
    let mut phi_t = phi1.to_frequency().into_values();
    let mut out_phi = Vec::with_capacity(grid.len());
    let mut out_dt = Vec::with_capacity(grid.len());
    for k in 0..grid.n_t() {
        out_phi.extend_from_slice(SpectralField2::new(space, phi.clone(), Basis::Frequency)?.to_physical().values());
        out_dt.extend_from_slice(SpectralField2::new(space, phi_t.clone(), Basis::Frequency)?.to_physical().values());
        if k + 1 == grid.n_t() {
            break;
        }
        let f0 = forcing_hat[k].values();
        let f1 = forcing_hat[k + 1].values();
        for i in 0..m {
            let (a, b) = steps[i].advance(phi[i], phi_t[i], f0[i], f1[i]);
            phi[i] = a;
            phi_t[i] = b;
        }
    }
    Ok(WaveFilm {
        phi: SpectralField3::new(*grid, out_phi, Basis::Physical)?,
        phi_t: SpectralField3::new(*grid, out_dt, Basis::Physical)?,
    })
}

/// Free wave energy `||phi_t||^2 + ||grad phi||^2` of a planar pair.
pub fn wave_energy(phi: &SpectralField2, phi_t: &SpectralField2) -> f64 {
    let g = phi.grid();
    let a = phi.to_frequency();
    let b = phi_t.to_frequency();
    let sum: f64 = (0..g.len())
        .map(|i| {
            let r = norm2(g.xi(i));
            b.values()[i].norm_sqr() + r * r * a.values()[i].norm_sqr()
        })
        .sum();
    sum * g.cell_xi() / (4.0 * PI * PI)
}

/// An `mu x mu` square `[j mu, (j+1) mu) x [k mu, (k+1) mu)` in frequency space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSquare {
    pub mu: f64,
    pub j: i64,
    pub k: i64,
}

impl MuSquare {
    pub fn contains(&self, xi: [f64; 2]) -> bool {
        (xi[0] / self.mu).floor() as i64 == self.j && (xi[1] / self.mu).floor() as i64 == self.k
    }
    /// The square containing `xi`.
    pub fn of(mu: f64, xi: [f64; 2]) -> Self {
        Self { mu, j: (xi[0] / mu).floor() as i64, k: (xi[1] / mu).floor() as i64 }
    }
}

/// A dyadic annulus `lambda < |xi| <= 2 lambda`, optionally cut by a square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicPiece {
    pub lambda: f64,
    pub square: Option<MuSquare>,
}

pub fn is_dyadic(x: f64) -> bool {
    x > 0.0 && x.log2().fract() == 0.0
}

impl DyadicPiece {
    pub fn new(lambda: f64, square: Option<MuSquare>) -> Result<Self> {
        if !is_dyadic(lambda) {
            return Err(Error::InvalidParameter(format!("{lambda} is not a power of two")));
        }
        if let Some(q) = square {
            if !is_dyadic(q.mu) || q.mu > 2.0 * lambda {
                return Err(Error::InvalidParameter(format!(
                    "square side {} must be a power of two not exceeding 2 lambda",
                    q.mu
                )));
            }
        }
        Ok(Self { lambda, square })
    }

    /// Boundary points `|xi| = lambda` belong to the next lower annulus.
    pub fn contains(&self, xi: [f64; 2]) -> bool {
        let r = norm2(xi);
        r > self.lambda && r <= 2.0 * self.lambda && self.square.map_or(true, |q| q.contains(xi))
    }
}

/// Dyadic numbers whose annuli cover every nonzero lattice frequency.
pub fn dyadic_levels(grid: &GridSpec2) -> Vec<f64> {
    let lo = (grid.dxi() / 2.0).log2().floor() as i32;
    let hi = grid.max_abs_xi().log2().ceil() as i32;
    (lo..=hi).map(|j| 2f64.powi(j)).collect()
}

pub fn dyadic_project(f: &SpectralField2, lambda: f64) -> Result<SpectralField2> {
    let piece = DyadicPiece::new(lambda, None)?;
    f.apply_multiplier(|xi| if piece.contains(xi) { C64::new(1.0, 0.0) } else { C64::default() })
}

pub fn square_project(f: &SpectralField2, lambda: f64, square: MuSquare) -> Result<SpectralField2> {
    let piece = DyadicPiece::new(lambda, Some(square))?;
    f.apply_multiplier(|xi| if piece.contains(xi) { C64::new(1.0, 0.0) } else { C64::default() })
}

/// Planar spectrum stored sparsely on an anisotropic lattice `(k1 d1, k2 d2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSpectrum2 {
    pub d: [f64; 2],
    pub entries: Vec<([i64; 2], C64)>,
}

impl SparseSpectrum2 {
    pub fn xi(&self, k: [i64; 2]) -> [f64; 2] {
        [k[0] as f64 * self.d[0], k[1] as f64 * self.d[1]]
    }

    pub fn cell(&self) -> f64 {
        self.d[0] * self.d[1]
    }

    /// Nonzero entries of a frequency field.
    pub fn from_field(f: &SpectralField2) -> Self {
        let hat = f.to_frequency();
        let g = f.grid();
        let entries = hat
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(i, v)| (g.wavenumbers(i), *v))
            .collect();
        Self { d: [g.dxi(); 2], entries }
    }

    /// `f^(-xi)`.
    pub fn reflected(&self) -> Self {
        Self { d: self.d, entries: self.entries.iter().map(|&(k, v)| ([-k[0], -k[1]], v)).collect() }
    }

    /// Homogeneous Sobolev norm with the planar normalization of [`crate::norms`].
    pub fn homogeneous_norm(&self, s: f64) -> f64 {
        let sum: f64 = self
            .entries
            .iter()
            .map(|&(k, v)| homogeneous_power(norm2(self.xi(k)), 2.0 * s) * v.norm_sqr())
            .sum();
        (sum * self.cell()).sqrt() / (2.0 * PI)
    }
}

/// High-high to low part of `f g`:
/// `(2 pi)^{-2} sum_eta f^(eta) g^(xi - eta)` restricted to
/// `|xi| <= C_HH (|eta| + |xi - eta|)`.
///
/// Output frequencies that leave the lattice are dropped (no wrap-around).
pub fn hh_to_low(f: &SpectralField2, g: &SpectralField2) -> Result<SpectralField2> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *f.grid();
    let a = SparseSpectrum2::from_field(f);
    let b = SparseSpectrum2::from_field(g);
    let mut out = SpectralField2::zeros(grid, Basis::Frequency);
    let c = grid.cell_xi() / (4.0 * PI * PI);
    for &(ka, va) in &a.entries {
        let ra = norm2(a.xi(ka));
        for &(kb, vb) in &b.entries {
            let k = [ka[0] + kb[0], ka[1] + kb[1]];
            let xi = a.xi(k);
            if norm2(xi) > C_HH * (ra + norm2(b.xi(kb))) {
                continue;
            }
            if let Some(idx) = grid.index_of(k) {
                out.values_mut()[idx] += va * vb * c;
            }
        }
    }
    Ok(out)
}

/// Composite Simpson nodes and weights on `[0, t]` with `intervals` (even) pieces.
pub fn simpson(t: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let n = intervals + intervals % 2;
    let h = t / n as f64;
    let nodes = (0..=n).map(|k| k as f64 * h).collect();
    let weights = (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioParts {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl RatioParts {
    pub(crate) fn new(lhs: f64, rhs: f64) -> Result<Self> {
        if rhs <= 0.0 || !rhs.is_finite() {
            return Err(Error::ZeroDenominator(format!("right-hand side is {rhs}")));
        }
        Ok(Self { lhs, rhs, ratio: lhs / rhs })
    }
}

/// Exponents `(s1, s2, s3)` of the high-high to low estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhExponents {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

/// `int_0^T |sum_j c_j exp(-i w_j t)|^2 dt` for `(w_j, c_j)` pairs.
///
/// The common mean phase is removed first; Simpson's rule then runs on a grid
/// resolving the remaining spread of frequencies.
pub fn oscillatory_energy(pairs: &[(f64, C64)], window: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let spread = 0.5 * (hi - lo) * window;
    let intervals = (8.0 * spread).ceil().max(32.0) as usize;
    let (nodes, weights) = simpson(window, intervals);
    let h = nodes[1] - nodes[0];
    let mut profile = vec![C64::default(); nodes.len()];
    for &(phase, c) in pairs {
        let step = C64::from_polar(1.0, -(phase - mid) * h);
        let mut z = c;
        for p in profile.iter_mut() {
            *p += z;
            z *= step;
        }
    }
    profile.iter().zip(&weights).map(|(p, w)| p.norm_sqr() * w).sum()
}

/// `|| |D|^{-s3} (u_+, v_sign)_{HH->L} ||_{L^2([0,T] x R^2)} / (||f||_{H-dot^{s1}} ||g||_{H-dot^{s2}})`
/// for sparse data on a common lattice.
pub fn hh_low_ratio(
    f: &SparseSpectrum2,
    g: &SparseSpectrum2,
    sign: Sign,
    exps: HhExponents,
    window: f64,
) -> Result<RatioParts> {
    if f.d != g.d {
        return Err(Error::GridMismatch);
    }
    let gmap: HashMap<[i64; 2], C64> = g.entries.iter().copied().collect();
    let sg = sign.value();
    let cell = f.cell();
    let coef = cell / (4.0 * PI * PI);

    // Group the admissible pairs by output frequency.
    let mut groups: HashMap<[i64; 2], Vec<(f64, C64)>> = HashMap::new();
    for &(ka, va) in &f.entries {
        let ea = f.xi(ka);
        let ra = norm2(ea);
        for &(kb, vb) in &g.entries {
            let k = [ka[0] + kb[0], ka[1] + kb[1]];
            let rb = norm2(g.xi(kb));
            let xi = f.xi(k);
            let rx = norm2(xi);
            if rx == 0.0 || rx > C_HH * (ra + rb) {
                continue;
            }
            debug_assert!(gmap.contains_key(&kb));
            groups.entry(k).or_default().push((ra + sg * rb, va * vb * coef));
        }
    }
    let mut keys: Vec<[i64; 2]> = groups.keys().copied().collect();
    keys.sort_unstable();
    let mut total = 0.0;
    for k in keys {
        let r = norm2(f.xi(k));
        total += homogeneous_power(r, -2.0 * exps.s3) * oscillatory_energy(&groups[&k], window);
    }
    let lhs = (total * cell).sqrt() / (2.0 * PI);
    RatioParts::new(lhs, f.homogeneous_norm(exps.s1) * g.homogeneous_norm(exps.s2))
}

/// Thin-sector data at frequency `lambda`: the indicator of
/// `{lambda <= eta1 <= 2 lambda, |eta2| <= aperture lambda}` intersected with the
/// annulus, paired with its reflection `g^(zeta) = f^(-zeta)`.
pub fn thin_sector_pair(lambda: f64, aperture: f64) -> Result<(SparseSpectrum2, SparseSpectrum2)> {
    if !(lambda > 0.0 && aperture > 0.0 && aperture <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need lambda > 0 and aperture in (0, 1], got {lambda}, {aperture}"
        )));
    }
    let n1 = (lambda.round() as i64).max(16);
    let n2 = 4i64;
    let d = [lambda / n1 as f64, aperture * lambda / n2 as f64];
    let mut entries = Vec::new();
    for i in n1..=2 * n1 {
        for j in -n2..=n2 {
            let r = norm2([i as f64 * d[0], j as f64 * d[1]]);
            if r >= lambda && r <= 2.0 * lambda {
                entries.push(([i, j], C64::new(1.0, 0.0)));
            }
        }
    }
    let f = SparseSpectrum2 { d, entries };
    let g = f.reflected();
    Ok((f, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhScanPoint {
    pub lambda: f64,
    pub sign: Sign,
    pub parts: RatioParts,
}

/// Ratio of [`hh_low_ratio`] for thin-sector data across `lambdas`.
pub fn hh_scan(lambdas: &[f64], sign: Sign, exps: HhExponents, aperture: f64) -> Result<Vec<HhScanPoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let (f, g) = thin_sector_pair(lambda, aperture)?;
            Ok(HhScanPoint { lambda, sign, parts: hh_low_ratio(&f, &g, sign, exps, 1.0)? })
        })
        .collect()
}

/// Parameters of a bilinear Strichartz estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzCase {
    pub q: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub signs: (Sign, Sign),
}

impl StrichartzCase {
    /// Whether the exponents satisfy the hypotheses of the bilinear estimate.
    pub fn admissible(&self) -> bool {
        let sum = self.s1 + self.s2 + self.s3;
        let top = 1.0 - 1.0 / self.q;
        self.q >= 4.0
            && (sum - top).abs() < 1e-12
            && self.s1 < top
            && self.s2 < top
            && self.s1 + self.s2 > 1.0 / self.q
    }
}

fn time_samples(window: f64, kmax: f64) -> (Vec<f64>, Vec<f64>) {
    let intervals = ((4.0 * kmax * window).ceil() as usize).max(64);
    simpson(window, intervals)
}

fn max_support_frequency(f: &SpectralField2) -> f64 {
    let hat = f.to_frequency();
    hat.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|(i, _)| norm2(f.grid().xi(i)))
        .fold(0.0, f64::max)
}

/// `|| |D|^{-s3} (u v) ||_{L^q_t L^2_x([0, window])} / (||f||_{H-dot^{s1}} ||g||_{H-dot^{s2}})`
/// with `u = S_{sign1}(t) f`, `v = S_{sign2}(t) g`.
pub fn strichartz_ratio(case: &StrichartzCase, f: &SpectralField2, g: &SpectralField2, window: f64) -> Result<RatioParts> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let fh = f.to_frequency();
    let gh = g.to_frequency();
    let kmax = max_support_frequency(&fh).max(max_support_frequency(&gh));
    let (nodes, weights) = time_samples(window, kmax);
    let per_time: Vec<f64> = nodes
        .iter()
        .map(|&t| {
            let u = half_wave(&fh, case.signs.0, t).to_physical();
            let v = half_wave(&gh, case.signs.1, t).to_physical();
            let prod = u.zip_with(&v, |a, b| a * b).expect("same grid");
            let w = prod.apply_multiplier(crate::grid::symbols::homogeneous(-case.s3)).expect("finite symbol");
            sobolev_norm(&w, 0.0, false).expect("valid exponent")
        })
        .collect();
    let lhs = time_norm(&per_time, &weights, case.q);
    RatioParts::new(lhs, sobolev_norm(f, case.s1, true)? * sobolev_norm(g, case.s2, true)?)
}

fn time_norm(values: &[f64], weights: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        values.iter().copied().fold(0.0, f64::max)
    } else {
        values.iter().zip(weights).map(|(v, w)| v.powf(q) * w).sum::<f64>().powf(1.0 / q)
    }
}

/// `|| S_+(t) f ||_{L^q_t L^4_x([0,1])} / (mu^{1/2 - 2/q} lambda^{1/q} ||f||_{L^2})` for `f`
/// with spectrum in the annulus of `lambda` cut by `square`.
pub fn improved_square_strichartz_ratio(f: &SpectralField2, lambda: f64, square: MuSquare, q: f64) -> Result<RatioParts> {
    Ok(improved_square_strichartz_ratios(f, lambda, square, &[q])?.remove(0))
}

/// [`improved_square_strichartz_ratio`] for several `q` sharing one free evolution.
pub fn improved_square_strichartz_ratios(
    f: &SpectralField2,
    lambda: f64,
    square: MuSquare,
    qs: &[f64],
) -> Result<Vec<RatioParts>> {
    if let Some(q) = qs.iter().find(|&&q| !(q >= 8.0)) {
        return Err(Error::InvalidParameter(format!("q = {q} is outside [8, inf]")));
    }
    let piece = DyadicPiece::new(lambda, Some(square))?;
    let hat = f.to_frequency();
    let grid = *f.grid();
    for (i, v) in hat.values().iter().enumerate() {
        if v.norm_sqr() > 0.0 && !piece.contains(grid.xi(i)) {
            let xi = grid.xi(i);
            return Err(Error::Support(format!(
                "spectrum has mass at ({}, {}) outside the annulus/square",
                xi[0], xi[1]
            )));
        }
    }
    let (nodes, weights) = time_samples(1.0, 2.0 * lambda);
    let per_time: Vec<f64> = nodes
        .iter()
        .map(|&t| {
            let u = half_wave(&hat, Sign::Plus, t).to_physical();
            lebesgue(u.values(), 4.0, grid.cell_x())
        })
        .collect();
    let l2 = sobolev_norm(f, 0.0, false)?;
    qs.iter()
        .map(|&q| {
            let scale = square.mu.powf(0.5 - 2.0 / q) * lambda.powf(1.0 / q);
            RatioParts::new(time_norm(&per_time, &weights, q), scale * l2)
        })
        .collect()
}

/// Smooth bump equal to `cos^2(pi r / 2)` for `r < 1`, zero outside.
pub fn cos2_bump(r: f64) -> f64 {
    if r < 1.0 {
        (0.5 * PI * r).cos().powi(2)
    } else {
        0.0
    }
}

/// Radial data concentrated on `1 <= |xi| <= 2`, dilated so the spectrum sits
/// on `lambda <= |xi| <= 2 lambda`: `f^(xi) = lambda^{-2} b(|xi| / lambda)`.
pub fn dilated_annulus_data(grid: &GridSpec2, lambda: f64) -> SpectralField2 {
    SpectralField2::from_frequency_fn(*grid, |xi| {
        let r = norm2(xi) / lambda;
        C64::new(cos2_bump(2.0 * (r - 1.5).abs()) / (lambda * lambda), 0.0)
    })
}

/// Smooth bump on the unit square centered at `center`.
pub fn unit_box_data(grid: &GridSpec2, center: [f64; 2]) -> SpectralField2 {
    SpectralField2::from_frequency_fn(*grid, |xi| {
        C64::new(cos2_bump(2.0 * (xi[0] - center[0]).abs()) * cos2_bump(2.0 * (xi[1] - center[1]).abs()), 0.0)
    })
}

/// Bump adapted to `square` and cut to the annulus of `lambda`. With a seed,
/// every mode gets an independent uniform phase.
pub fn square_bump_data(grid: &GridSpec2, lambda: f64, square: MuSquare, seed: Option<u64>) -> Result<SpectralField2> {
    use rand::{Rng, SeedableRng};
    let mu = square.mu;
    let c = [(square.j as f64 + 0.5) * mu, (square.k as f64 + 0.5) * mu];
    let bump = SpectralField2::from_frequency_fn(*grid, |xi| {
        C64::new(cos2_bump(2.0 * (xi[0] - c[0]).abs() / mu) * cos2_bump(2.0 * (xi[1] - c[1]).abs() / mu), 0.0)
    });
    let mut out = square_project(&bump, lambda, square)?.to_frequency();
    if let Some(seed) = seed {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for v in out.values_mut() {
            *v *= C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::symbols;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec2, seed: u64) -> SpectralField2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SpectralField2::new(grid, v, Basis::Frequency).unwrap()
    }

    fn l2(f: &SpectralField2) -> f64 {
        sobolev_norm(f, 0.0, false).unwrap()
    }

    #[test]
    fn half_wave_examples() {
        let g = GridSpec2::new(16, 2.0 * PI).unwrap();
        let f = random_field(g, 1);
        let same = half_wave(&f, Sign::Plus, 0.0);
        assert!(same.values().iter().zip(f.values()).all(|(a, b)| (a - b).norm() < 1e-15));
        for t in [0.3, -1.7, 12.0] {
            let u = half_wave(&f, Sign::Minus, t);
            assert!((l2(&u) - l2(&f)).abs() < 1e-10 * l2(&f));
        }
        let idx = g.index_of([3, 4]).unwrap();
        let u = half_wave(&f, Sign::Plus, 0.25);
        let expect = f.values()[idx] * C64::from_polar(1.0, -0.25 * 5.0);
        assert!((u.values()[idx] - expect).norm() < 1e-14);
    }

    #[test]
    fn film_concentrates_on_the_cone_for_commensurate_frequencies() {
        // Axis-aligned spectrum with box_t = box_x puts |xi| on the tau lattice.
        let g3 = GridSpec3::new(32, 16, 2.0 * PI, 2.0 * PI).unwrap();
        let g = g3.space();
        let mut f = SpectralField2::zeros(g, Basis::Frequency);
        for (k, a) in [([2, 0], 1.0), ([0, -3], 0.5), ([5, 0], -0.7)] {
            f.values_mut()[g.index_of(k).unwrap()] = C64::new(a, 0.2);
        }
        let u = free_wave_film(&f, Sign::Plus, &g3, FilmWindow::Sharp).unwrap().to_frequency();
        let (mut near, mut total) = (0.0, 0.0);
        for (i, v) in u.values().iter().enumerate() {
            let (tau, xi) = g3.tau_xi(i);
            total += v.norm_sqr();
            if (tau + norm2(xi)).abs() <= g3.dtau() + 1e-12 {
                near += v.norm_sqr();
            }
        }
        assert!(near >= 0.99 * total);
    }

    #[test]
    fn film_leakage_for_generic_frequencies_is_small_with_a_taper() {
        let g3 = GridSpec3::new(64, 16, 8.0, 5.0).unwrap();
        let f = random_field(g3.space(), 5);
        let u = free_wave_film(&f, Sign::Minus, &g3, FilmWindow::Hann).unwrap().to_frequency();
        let (mut near, mut total) = (0.0, 0.0);
        for (i, v) in u.values().iter().enumerate() {
            let (tau, xi) = g3.tau_xi(i);
            total += v.norm_sqr();
            if (tau - norm2(xi)).abs() <= 2.0 * g3.dtau() {
                near += v.norm_sqr();
            }
        }
        assert!(near >= 0.95 * total, "{}", near / total);
    }

    #[test]
    fn opposite_films_are_mirror_images_in_tau() {
        let g3 = GridSpec3::new(16, 8, 6.0, 4.0).unwrap();
        let f = random_field(g3.space(), 2);
        let up = free_wave_film(&f, Sign::Plus, &g3, FilmWindow::Hann).unwrap().to_frequency();
        let um = free_wave_film(&f, Sign::Minus, &g3, FilmWindow::Hann).unwrap().to_frequency();
        let m = g3.slice_len();
        for k in 0..16 {
            let mk = (16 - k) % 16;
            for i in 0..m {
                assert!((up.values()[k * m + i] - um.values()[mk * m + i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn radial_film_is_rotation_invariant() {
        let g3 = GridSpec3::new(8, 16, 3.0, 5.0).unwrap();
        let g = g3.space();
        let f = SpectralField2::from_frequency_fn(g, |xi| C64::new((-norm2(xi)).exp(), 0.0));
        let u = free_wave_film(&f, Sign::Plus, &g3, FilmWindow::Sharp).unwrap().to_frequency();
        let m = g.len();
        for k in 0..8 {
            for i in 0..m {
                let [a, b] = g.wavenumbers(i);
                if a == -8 || b == -8 {
                    continue;
                }
                let j = g.index_of([-b, a]).unwrap();
                assert!((u.values()[k * m + i].norm() - u.values()[k * m + j].norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn duhamel_single_mode_and_energy() {
        let g3 = GridSpec3::new(40, 16, 4.0, 2.0 * PI).unwrap();
        let g = g3.space();
        let idx = g.index_of([2, 1]).unwrap();
        let mut phi0 = SpectralField2::zeros(g, Basis::Frequency);
        phi0.values_mut()[idx] = C64::new(1.0, 0.0);
        let zero = SpectralField2::zeros(g, Basis::Frequency);
        let f0 = SpectralField3::zeros(g3, Basis::Physical);
        let film = wave_duhamel(&phi0, &zero, &f0, &g3).unwrap();
        let w = 5f64.sqrt();
        for k in 0..40 {
            let slice = film.phi.time_slice(k).unwrap().to_frequency();
            assert!((slice.values()[idx] - C64::new((w * g3.slice_time(k)).cos(), 0.0)).norm() < 1e-12);
        }
        let rnd = random_field(g, 3);
        let rnd1 = random_field(g, 4);
        let film = wave_duhamel(&rnd, &rnd1, &f0, &g3).unwrap();
        let e0 = wave_energy(&rnd, &rnd1);
        for k in 0..40 {
            let e = wave_energy(&film.phi.time_slice(k).unwrap(), &film.phi_t.time_slice(k).unwrap());
            assert!((e - e0).abs() < 1e-8 * e0);
        }
    }

    #[test]
    fn duhamel_constant_forcing_on_zero_mode() {
        let g3 = GridSpec3::new(16, 8, 2.0, 3.0).unwrap();
        let g = g3.space();
        let zero = SpectralField2::zeros(g, Basis::Physical);
        let one = SpectralField3::from_physical_fn(g3, |_, _| C64::new(1.0, 0.0));
        let film = wave_duhamel(&zero, &zero, &one, &g3).unwrap();
        for k in 0..16 {
            let t = g3.slice_time(k);
            let slice = film.phi.time_slice(k).unwrap();
            // Uniform in space, so every physical sample equals the zero-mode solution.
            assert!(slice.values().iter().all(|v| (v.re + t * t / 2.0).abs() < 1e-12 && v.im.abs() < 1e-12));
        }
    }

    #[test]
    fn duhamel_superposition() {
        let g3 = GridSpec3::new(8, 8, 2.0, 3.0).unwrap();
        let g = g3.space();
        let (a0, a1, b0, b1) = (random_field(g, 1), random_field(g, 2), random_field(g, 3), random_field(g, 4));
        let fa = SpectralField3::from_physical_fn(g3, |t, x| C64::new((t * x[0]).sin(), x[1]));
        let fb = SpectralField3::from_physical_fn(g3, |t, x| C64::new(t, (x[0] - x[1]).cos()));
        let c = C64::new(0.3, -1.2);
        let sa = wave_duhamel(&a0, &a1, &fa, &g3).unwrap();
        let sb = wave_duhamel(&b0, &b1, &fb, &g3).unwrap();
        let lin = |x: &SpectralField2, y: &SpectralField2| x.zip_with(y, |p, q| p + c * q).unwrap();
        let f = fa.zip_with(&fb, |p, q| p + c * q).unwrap();
        let sc = wave_duhamel(&lin(&a0, &b0), &lin(&a1, &b1), &f, &g3).unwrap();
        let scale = sc.phi.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..g3.len() {
            let expect = sa.phi.values()[i] + c * sb.phi.values()[i];
            assert!((sc.phi.values()[i] - expect).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn dyadic_partition() {
        let g = GridSpec2::new(32, 5.0).unwrap();
        let f = random_field(g, 8);
        let levels = dyadic_levels(&g);
        let mut sum = SpectralField2::zeros(g, Basis::Frequency);
        let mut energy = 0.0;
        for &lam in &levels {
            let p = dyadic_project(&f, lam).unwrap();
            energy += l2(&p).powi(2);
            sum = sum.zip_with(&p, |a, b| a + b).unwrap();
        }
        let zero = f.values()[0];
        let mut rest = f.clone();
        rest.values_mut()[0] = C64::default();
        assert!(sum.values().iter().zip(rest.values()).all(|(a, b)| (a - b).norm() < 1e-14));
        let zero_part = zero.norm_sqr() * g.cell_xi() / (4.0 * PI * PI);
        assert!((energy + zero_part - l2(&f).powi(2)).abs() < 1e-10 * l2(&f).powi(2));
        let lam = levels[levels.len() / 2];
        let fl = dyadic_project(&f, lam).unwrap();
        let mu = lam / 2.0;
        let mut tiles = SpectralField2::zeros(g, Basis::Frequency);
        for j in -5..5 {
            for k in -5..5 {
                let p = square_project(&f, lam, MuSquare { mu, j, k }).unwrap();
                tiles = tiles.zip_with(&p, |a, b| a + b).unwrap();
            }
        }
        assert_eq!(tiles, fl);
        assert!(dyadic_project(&f, 3.0).is_err());
    }

    #[test]
    fn hh_to_low_matches_direct_sum_and_is_symmetric() {
        let g = GridSpec2::new(8, 2.0 * PI).unwrap();
        let f = random_field(g, 1);
        let h = random_field(g, 2);
        let fg = hh_to_low(&f, &h).unwrap();
        let gf = hh_to_low(&h, &f).unwrap();
        let c = g.cell_xi() / (4.0 * PI * PI);
        for out in 0..g.len() {
            let k = g.wavenumbers(out);
            let mut direct = C64::default();
            for a in 0..g.len() {
                let ka = g.wavenumbers(a);
                let Some(b) = g.index_of([k[0] - ka[0], k[1] - ka[1]]) else { continue };
                let (x, e, z) = (g.xi(out), g.xi(a), g.xi(b));
                if norm2(x) <= C_HH * (norm2(e) + norm2(z)) {
                    direct += f.values()[a] * h.values()[b] * c;
                }
            }
            assert!((fg.values()[out] - direct).norm() < 1e-12);
            assert!((fg.values()[out] - gf.values()[out]).norm() < 1e-12);
        }
    }

    #[test]
    fn hh_output_support() {
        let g = GridSpec2::new(32, 2.0 * PI).unwrap();
        let lam = 4.0;
        let band = |xi: [f64; 2]| norm2(xi) >= lam && norm2(xi) <= 2.0 * lam;
        let f = random_field(g, 3).apply_multiplier(symbols::indicator(band)).unwrap();
        let h = random_field(g, 4).apply_multiplier(symbols::indicator(band)).unwrap();
        let out = hh_to_low(&f, &h).unwrap();
        for (i, v) in out.values().iter().enumerate() {
            if v.norm() > 0.0 {
                assert!(norm2(g.xi(i)) <= C_HH * 4.0 * lam + 1e-12);
            }
        }
    }

    #[test]
    fn oscillatory_energy_matches_exact_pair_kernel() {
        let (f, g) = thin_sector_pair(8.0, 1.0 / 16.0).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let k = [0i64, 1];
            let mut pairs = Vec::new();
            for &(ka, va) in &f.entries {
                for &(kb, vb) in &g.entries {
                    if [ka[0] + kb[0], ka[1] + kb[1]] == k {
                        let phase = norm2(f.xi(ka)) + sign.value() * norm2(g.xi(kb));
                        pairs.push((phase, va * vb * C64::new(1.0 + ka[1] as f64, 0.5)));
                    }
                }
            }
            assert!(pairs.len() > 4);
            // int_0^1 exp(-i w t) dt = (1 - exp(-i w)) / (i w)
            let mut exact = 0.0;
            for &(p, c) in &pairs {
                for &(q, d) in &pairs {
                    let w = p - q;
                    let kernel = if w.abs() < 1e-12 {
                        C64::new(1.0, 0.0)
                    } else {
                        (C64::new(1.0, 0.0) - C64::from_polar(1.0, -w)) / C64::new(0.0, w)
                    };
                    exact += (c * d.conj() * kernel).re;
                }
            }
            let got = oscillatory_energy(&pairs, 1.0);
            assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
        }
        let e = HhExponents { s1: 0.125, s2: 0.125, s3: 0.25 };
        assert!(hh_low_ratio(&f, &g, Sign::Plus, e, 1.0).unwrap().ratio > 0.0);
    }

    #[test]
    fn strichartz_ratio_scaling_and_errors() {
        let g = GridSpec2::new(64, 16.0).unwrap();
        let case = StrichartzCase { q: 4.0, s1: 0.375, s2: 0.375, s3: 0.0, signs: (Sign::Plus, Sign::Plus) };
        assert!(case.admissible());
        let f = dilated_annulus_data(&g, 1.0);
        let r = strichartz_ratio(&case, &f, &f, 1.0).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0);
        let z = SpectralField2::zeros(g, Basis::Frequency);
        assert!(matches!(strichartz_ratio(&case, &z, &f, 1.0), Err(Error::ZeroDenominator(_))));
        let bad = StrichartzCase { s1: -0.125, s2: -0.125, s3: 1.0, ..case };
        assert!(!bad.admissible());
    }

    #[test]
    fn square_strichartz_support_is_checked() {
        let g = GridSpec2::new(32, 4.0 * PI).unwrap();
        let f = unit_box_data(&g, [5.0, 1.75]);
        let q = MuSquare { mu: 2.0, j: 2, k: 0 };
        assert!(matches!(improved_square_strichartz_ratio(&f, 4.0, q, 8.0), Err(Error::Support(_))));
        let inside = square_project(&f, 4.0, q).unwrap();
        let r = improved_square_strichartz_ratio(&inside, 4.0, q, f64::INFINITY).unwrap();
        assert!(r.ratio <= 1.0);
    }

    proptest! {
        #[test]
        fn hh_to_low_is_bilinear(seed in 0u64..500, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = GridSpec2::new(8, 3.0).unwrap();
            let (f1, f2, h) = (random_field(g, seed), random_field(g, seed + 1000), random_field(g, seed + 2000));
            let c = C64::new(a, b);
            let comb = f1.zip_with(&f2, |x, y| x + c * y).unwrap();
            let lhs = hh_to_low(&comb, &h).unwrap();
            let r1 = hh_to_low(&f1, &h).unwrap();
            let r2 = hh_to_low(&f2, &h).unwrap();
            for i in 0..g.len() {
                prop_assert!((lhs.values()[i] - r1.values()[i] - c * r2.values()[i]).norm() < 1e-12);
            }
        }

        #[test]
        fn half_wave_is_unitary(seed in 0u64..500, t in -50.0f64..50.0) {
            let g = GridSpec2::new(8, 3.0).unwrap();
            let f = random_field(g, seed);
            let u = half_wave(&f, Sign::Plus, t);
            prop_assert!((l2(&u) - l2(&f)).abs() <= 1e-10 * l2(&f));
        }
    }
}
