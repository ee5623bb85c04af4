//! Pseudo-spectral integrator for the split massless system
//!
//! ```text
//! (-i d_t +- |D|) psi_+- = -Pi_+-(D)(phi beta psi),    box phi = -<beta psi, psi>
//! ```
//!
//! with `box = -d_t^2 + Laplacian`. Time stepping is a fourth-order Lawson
//! (integrating-factor) Runge-Kutta scheme: the half-wave phases and the wave
//! rotation are applied exactly and only the nonlinearity is integrated
//! numerically. Everything runs on frequency-basis arrays.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirac::{project, Sign};
use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{norm2, Basis, GridSpec2, SpectralField2, SpinorField2, C64};
use crate::norms::sobolev_weight;
use crate::waves::WaveStep;

/// Snapshot of the split system at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct DKGState {
    pub psi_plus: SpinorField2,
    pub psi_minus: SpinorField2,
    pub phi: SpectralField2,
    pub phi_t: SpectralField2,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec2,
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    pub picard_depth: usize,
    pub seed: u64,
    /// Switch off the coupling to get the free flows.
    pub nonlinear: bool,
    /// Keep every `record_every`-th state in a trajectory (the final state is always kept).
    pub record_every: usize,
    pub dirac_mass: f64,
    pub field_mass: f64,
}

impl SolverConfig {
    pub fn new(grid: GridSpec2, dt: f64, t_final: f64) -> Self {
        Self {
            grid,
            dt,
            t_final,
            dealias: true,
            picard_depth: 5,
            seed: 0,
            nonlinear: true,
            record_every: 1,
            dirac_mass: 0.0,
            field_mass: 0.0,
        }
    }

    /// Rejects invalid settings; returns advisory warnings otherwise.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T = {} must be positive", self.t_final)));
        }
        if self.dirac_mass != 0.0 || self.field_mass != 0.0 {
            return Err(Error::InvalidParameter("only the massless system is supported".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        let mut warnings = Vec::new();
        let k = self.grid.max_abs_xi();
        if self.dt * k > 0.5 {
            warnings.push(format!(
                "dt * max|xi| = {:.3} exceeds 0.5; the fastest nonlinear phases are under-resolved",
                self.dt * k
            ));
        }
        Ok(warnings)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

/// Initial data `(psi_0, phi_0, phi_1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub psi0: SpinorField2,
    pub phi0: SpectralField2,
    pub phi1: SpectralField2,
}

impl InitialData {
    /// Smallest radius about the origin outside of which the data carry at most
    /// the fraction `tail` of their total squared amplitude.
    pub fn support_radius(&self, tail: f64) -> f64 {
        let grid = *self.phi0.grid();
        let fields = [&self.psi0.c[0], &self.psi0.c[1], &self.phi0, &self.phi1].map(|f| f.to_physical());
        let mut mass: Vec<(f64, f64)> = (0..grid.len())
            .map(|i| (norm2(grid.x(i)), fields.iter().map(|f| f.values()[i].norm_sqr()).sum()))
            .collect();
        mass.sort_by(|a, b| b.0.total_cmp(&a.0));
        let total: f64 = mass.iter().map(|m| m.1).sum();
        let mut outside = 0.0;
        for (r, m) in mass {
            outside += m;
            if outside > tail * total {
                return r;
            }
        }
        0.0
    }

    /// Localized smooth data: Gaussian spinor and a shifted Gaussian field at rest.
    pub fn gaussian(grid: GridSpec2, amp: f64) -> Self {
        let gauss = |x: [f64; 2]| (-(x[0] * x[0] + x[1] * x[1])).exp();
        Self {
            psi0: SpinorField2 {
                c: [
                    SpectralField2::from_physical_fn(grid, |x| C64::new(amp * gauss(x), 0.0)),
                    SpectralField2::from_physical_fn(grid, |x| C64::new(0.0, 0.5 * amp * x[0] * gauss(x))),
                ],
            },
            phi0: SpectralField2::from_physical_fn(grid, |x| {
                C64::new(amp * (-(0.5 * (x[0] - 1.0).powi(2) + x[1] * x[1])).exp(), 0.0)
            }),
            phi1: SpectralField2::zeros(grid, Basis::Physical),
        }
    }

    /// Periodic data from [`rough_data`] and the real part of [`rough_scalar`],
    /// scaled by `amp`, with `phi_t = 0`.
    pub fn rough(grid: GridSpec2, amp: f64, psi_s: f64, phi_r: f64, seed: u64) -> Self {
        Self {
            psi0: rough_data(psi_s, seed, &grid).map(|z| z * amp),
            phi0: rough_scalar(phi_r, seed, &grid, 2).to_physical().map(|z| C64::new(amp * z.re, 0.0)),
            phi1: SpectralField2::zeros(grid, Basis::Frequency),
        }
    }

    pub fn zero(grid: GridSpec2) -> Self {
        Self {
            psi0: SpinorField2::zeros(grid, Basis::Frequency),
            phi0: SpectralField2::zeros(grid, Basis::Frequency),
            phi1: SpectralField2::zeros(grid, Basis::Frequency),
        }
    }
}

/// Frequency arrays `[psi+_1, psi+_2, psi-_1, psi-_2, phi, phi_t]`.
#[derive(Clone, Debug)]
struct Packed {
    v: [Vec<C64>; 6],
}

impl Packed {
    fn zeros(m: usize) -> Self {
        Self { v: std::array::from_fn(|_| vec![C64::default(); m]) }
    }

    fn axpy(&self, a: f64, x: &Packed) -> Packed {
        let mut out = self.clone();
        for (o, xv) in out.v.iter_mut().zip(&x.v) {
            for (p, q) in o.iter_mut().zip(xv) {
                *p += a * q;
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.v.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Per-grid tables shared by every step.
struct Engine {
    grid: GridSpec2,
    abs_xi: Vec<f64>,
    keep: Vec<bool>,
    nonlinear: bool,
}

impl Engine {
    fn new(grid: GridSpec2, dealias: bool, nonlinear: bool) -> Self {
        let keep = (0..grid.len()).map(|i| !dealias || grid.dealias_keep(i)).collect();
        Self { grid, abs_xi: grid.abs_xi(), keep, nonlinear }
    }

    fn m(&self) -> usize {
        self.grid.len()
    }

    fn to_phys(&self, hat: &[C64]) -> Vec<C64> {
        let n = self.grid.n();
        let mut v = hat.to_vec();
        fft_nd(&mut v, &[n, n], true);
        let c = 1.0 / (self.grid.box_len() * self.grid.box_len());
        v.iter_mut().for_each(|z| *z *= c);
        v
    }

    fn to_freq(&self, phys: Vec<C64>) -> Vec<C64> {
        let n = self.grid.n();
        let mut v = phys;
        fft_nd(&mut v, &[n, n], false);
        let c = self.grid.cell_x();
        for (i, z) in v.iter_mut().enumerate() {
            *z = if self.keep[i] { *z * c } else { C64::default() };
        }
        v
    }

    /// `(rhs_+, rhs_-, rhs_phi)` in frequency space: `-Pi_+-(phi beta psi)` and
    /// `-<beta psi, psi>`.
    fn rhs(&self, u: &Packed) -> ([Vec<C64>; 2], [Vec<C64>; 2], Vec<C64>) {
        let m = self.m();
        let psi1: Vec<C64> = (0..m).map(|i| u.v[0][i] + u.v[2][i]).collect();
        let psi2: Vec<C64> = (0..m).map(|i| u.v[1][i] + u.v[3][i]).collect();
        let p1 = self.to_phys(&psi1);
        let p2 = self.to_phys(&psi2);
        let phi = self.to_phys(&u.v[4]);
        let a1 = self.to_freq((0..m).map(|i| phi[i].re * p1[i]).collect());
        let a2 = self.to_freq((0..m).map(|i| -phi[i].re * p2[i]).collect());
        let dens = self.to_freq((0..m).map(|i| C64::new(p1[i].norm_sqr() - p2[i].norm_sqr(), 0.0)).collect());
        let mut plus = [vec![C64::default(); m], vec![C64::default(); m]];
        let mut minus = plus.clone();
        for i in 1..m {
            let xi = self.grid.xi(i);
            let v = [a1[i], a2[i]];
            let pp = project(Sign::Plus, xi, &v);
            let pm = project(Sign::Minus, xi, &v);
            for c in 0..2 {
                plus[c][i] = -pp[c];
                minus[c][i] = -pm[c];
            }
        }
        let rhs_phi = dens.iter().map(|z| -z).collect();
        (plus, minus, rhs_phi)
    }

    /// Nonlinear part of the time derivative.
    fn nonlinear_rate(&self, u: &Packed) -> Packed {
        let m = self.m();
        if !self.nonlinear {
            return Packed::zeros(m);
        }
        let (plus, minus, rhs_phi) = self.rhs(u);
        let i = C64::new(0.0, 1.0);
        let mut out = Packed::zeros(m);
        for c in 0..2 {
            out.v[c] = plus[c].iter().map(|z| i * z).collect();
            out.v[2 + c] = minus[c].iter().map(|z| i * z).collect();
        }
        // phi_tt = -|xi|^2 phi - rhs_phi
        out.v[5] = rhs_phi.iter().map(|z| -z).collect();
        out
    }

    /// Exact linear flow over time `h`.
    fn flow(&self, u: &Packed, h: f64) -> Packed {
        let mut out = u.clone();
        for i in 0..self.m() {
            let w = self.abs_xi[i];
            let e = C64::from_polar(1.0, -h * w);
            out.v[0][i] *= e;
            out.v[1][i] *= e;
            out.v[2][i] *= e.conj();
            out.v[3][i] *= e.conj();
            let step = WaveStep::new(w, h);
            let zero = C64::default();
            let (a, b) = step.advance(u.v[4][i], u.v[5][i], zero, zero);
            out.v[4][i] = a;
            out.v[5][i] = b;
        }
        out
    }

    fn lawson_rk4(&self, u: &Packed, h: f64) -> Packed {
        let half = 0.5 * h;
        let k1 = self.nonlinear_rate(u);
        let k2 = self.nonlinear_rate(&self.flow(&u.axpy(half, &k1), half));
        let eu_half = self.flow(u, half);
        let k3 = self.nonlinear_rate(&eu_half.axpy(half, &k2));
        let k4 = self.nonlinear_rate(&self.flow(u, h).axpy(h, &self.flow(&k3, half)));
        let k23 = k2.axpy(1.0, &k3);
        self.flow(u, h)
            .axpy(h / 6.0, &self.flow(&k1, h))
            .axpy(h / 3.0, &self.flow(&k23, half))
            .axpy(h / 6.0, &k4)
    }

    fn pack(&self, s: &DKGState) -> Result<Packed> {
        for f in [&s.psi_plus.c[0], &s.psi_plus.c[1], &s.psi_minus.c[0], &s.psi_minus.c[1], &s.phi, &s.phi_t] {
            if *f.grid() != self.grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Packed {
            v: [
                s.psi_plus.c[0].to_frequency().into_values(),
                s.psi_plus.c[1].to_frequency().into_values(),
                s.psi_minus.c[0].to_frequency().into_values(),
                s.psi_minus.c[1].to_frequency().into_values(),
                s.phi.to_frequency().into_values(),
                s.phi_t.to_frequency().into_values(),
            ],
        })
    }

    fn unpack(&self, p: Packed, time: f64) -> DKGState {
        let g = self.grid;
        let [a, b, c, d, e, f] = p.v;
        let fld = |v| SpectralField2::new(g, v, Basis::Frequency).expect("length matches grid");
        DKGState {
            psi_plus: SpinorField2 { c: [fld(a), fld(b)] },
            psi_minus: SpinorField2 { c: [fld(c), fld(d)] },
            phi: fld(e),
            phi_t: fld(f),
            time,
        }
    }
}

/// Right-hand sides of the split system at `state`:
/// `rhs_+- = -Pi_+-(D)(phi beta psi)` and `rhs_phi = -<beta psi, psi>`,
/// all in the frequency basis with the zero mode of the spinor parts removed.
pub fn nonlinearity(state: &DKGState, dealias: bool) -> Result<(SpinorField2, SpinorField2, SpectralField2)> {
    let g = *state.phi.grid();
    let e = Engine::new(g, dealias, true);
    let (plus, minus, rhs_phi) = e.rhs(&e.pack(state)?);
    let fld = |v: Vec<C64>| SpectralField2::new(g, v, Basis::Frequency).expect("length matches grid");
    let [p1, p2] = plus;
    let [m1, m2] = minus;
    Ok((SpinorField2 { c: [fld(p1), fld(p2)] }, SpinorField2 { c: [fld(m1), fld(m2)] }, fld(rhs_phi)))
}

/// Advance one step of length `dt` (negative values run backwards).
pub fn step(state: &DKGState, dt: f64, config: &SolverConfig) -> Result<DKGState> {
    let e = Engine::new(*state.phi.grid(), config.dealias, config.nonlinear);
    let next = e.lawson_rk4(&e.pack(state)?, dt);
    if !next.is_finite() {
        return Err(Error::NumericalAbort { time: state.time + dt, reason: "non-finite values after step".into() });
    }
    Ok(e.unpack(next, state.time + dt))
}

/// Split `psi0` into half-waves, zeroing the zero mode (and the modes removed by
/// dealiasing when enabled). Returns the state and notes describing what was removed.
pub fn initial_state(data: &InitialData, dealias: bool) -> Result<(DKGState, Vec<String>)> {
    let g = *data.phi0.grid();
    if *data.psi0.grid() != g || *data.phi1.grid() != g {
        return Err(Error::GridMismatch);
    }
    let mut notes = Vec::new();
    let psi = data.psi0.to_frequency();
    let m = g.len();
    let keep = |i: usize| !dealias || g.dealias_keep(i);
    if psi.c.iter().any(|c| c.values()[0].norm_sqr() > 0.0) {
        notes.push("spinor zero mode zeroed before projection".to_string());
    }
    let mut plus = [vec![C64::default(); m], vec![C64::default(); m]];
    let mut minus = plus.clone();
    let mut dropped = false;
    for i in 1..m {
        let v = [psi.c[0].values()[i], psi.c[1].values()[i]];
        if !keep(i) {
            dropped |= v[0].norm_sqr() + v[1].norm_sqr() > 0.0;
            continue;
        }
        let xi = g.xi(i);
        let pp = project(Sign::Plus, xi, &v);
        let pm = project(Sign::Minus, xi, &v);
        for c in 0..2 {
            plus[c][i] = pp[c];
            minus[c][i] = pm[c];
        }
    }
    let trunc = |f: &SpectralField2, dropped: &mut bool| {
        let mut h = f.to_frequency().into_values();
        for (i, z) in h.iter_mut().enumerate() {
            if !keep(i) {
                *dropped |= z.norm_sqr() > 0.0;
                *z = C64::default();
            }
        }
        SpectralField2::new(g, h, Basis::Frequency).expect("length matches grid")
    };
    let phi = trunc(&data.phi0, &mut dropped);
    let phi_t = trunc(&data.phi1, &mut dropped);
    if dropped {
        notes.push("data truncated to the 2/3 dealiasing band".to_string());
    }
    let fld = |v| SpectralField2::new(g, v, Basis::Frequency).expect("length matches grid");
    let [p1, p2] = plus;
    let [m1, m2] = minus;
    Ok((
        DKGState {
            psi_plus: SpinorField2 { c: [fld(p1), fld(p2)] },
            psi_minus: SpinorField2 { c: [fld(m1), fld(m2)] },
            phi,
            phi_t,
            time: 0.0,
        },
        notes,
    ))
}

/// Recorded states of a run and notes on data preprocessing.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<DKGState>,
    pub notes: Vec<String>,
}

/// Integrate from `data` to `config.t_final`, calling `observe` on every state
/// (including the initial one).
pub fn solve_with(
    data: &InitialData,
    config: &SolverConfig,
    mut observe: impl FnMut(&DKGState) -> Result<()>,
) -> Result<Vec<String>> {
    let mut notes = config.validate()?;
    let (mut state, more) = initial_state(data, config.dealias)?;
    notes.extend(more);
    let e = Engine::new(config.grid, config.dealias, config.nonlinear);
    if *data.phi0.grid() != config.grid {
        return Err(Error::GridMismatch);
    }
    let radius = data.support_radius(1e-6);
    let needed = 8.0 * radius + config.t_final;
    if config.grid.box_len() < needed {
        notes.push(format!(
            "box {:.3} is smaller than 8 x support radius + T = {needed:.3}; periodic images may interact",
            config.grid.box_len()
        ));
    }
    observe(&state)?;
    let mut u = e.pack(&state)?;
    let n = config.steps();
    for k in 1..=n {
        u = e.lawson_rk4(&u, config.dt);
        let t = k as f64 * config.dt;
        if !u.is_finite() {
            return Err(Error::NumericalAbort { time: t, reason: "non-finite values (blow-up or instability)".into() });
        }
        state = e.unpack(u.clone(), t);
        observe(&state)?;
    }
    Ok(notes)
}

pub fn solve(data: &InitialData, config: &SolverConfig) -> Result<Trajectory> {
    let mut states = Vec::new();
    let n = config.steps();
    let every = config.record_every.max(1);
    let mut k = 0usize;
    let notes = solve_with(data, config, |s| {
        if k % every == 0 || k == n {
            states.push(s.clone());
        }
        k += 1;
        Ok(())
    })?;
    Ok(Trajectory { states, notes })
}

/// `int |psi|^2 dx` with `psi = psi_+ + psi_-`.
pub fn charge(state: &DKGState) -> f64 {
    let g = state.phi.grid();
    let mut sum = 0.0;
    for c in 0..2 {
        let a = state.psi_plus.c[c].to_frequency();
        let b = state.psi_minus.c[c].to_frequency();
        sum += a.values().iter().zip(b.values()).map(|(x, y)| (x + y).norm_sqr()).sum::<f64>();
    }
    sum * g.cell_xi() / (4.0 * PI * PI)
}

/// `H^s` norm of the full spinor `psi_+ + psi_-`.
pub fn spinor_sobolev_norm(state: &DKGState, s: f64) -> f64 {
    let g = state.phi.grid();
    let mut sum = 0.0;
    for c in 0..2 {
        let a = state.psi_plus.c[c].to_frequency();
        let b = state.psi_minus.c[c].to_frequency();
        for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            let w = sobolev_weight(norm2(g.xi(i)), s, false);
            sum += w * w * (x + y).norm_sqr();
        }
    }
    (sum * g.cell_xi()).sqrt() / (2.0 * PI)
}

/// Largest `||(I - Pi_+-) psi_+-|| / ||psi_+-||` over the two half-waves.
pub fn projection_defect(state: &DKGState) -> f64 {
    let g = state.phi.grid();
    let mut worst: f64 = 0.0;
    for (sign, f) in [(Sign::Plus, &state.psi_plus), (Sign::Minus, &state.psi_minus)] {
        let a = f.c[0].to_frequency();
        let b = f.c[1].to_frequency();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..g.len() {
            let v = [a.values()[i], b.values()[i]];
            den += v[0].norm_sqr() + v[1].norm_sqr();
            if i == 0 {
                num += v[0].norm_sqr() + v[1].norm_sqr();
                continue;
            }
            let p = project(sign, g.xi(i), &v);
            num += (v[0] - p[0]).norm_sqr() + (v[1] - p[1]).norm_sqr();
        }
        if den > 0.0 {
            worst = worst.max((num / den).sqrt());
        }
    }
    worst
}

/// Largest imaginary part of `phi` in physical space relative to its largest value.
pub fn phi_reality_defect(state: &DKGState) -> f64 {
    let p = state.phi.to_physical();
    let scale = p.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    p.values().iter().map(|z| z.im.abs()).fold(0.0, f64::max) / scale
}

/// Per-step diagnostics for trajectory export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub charge: f64,
    pub psi_hs: f64,
    pub phi_hr: f64,
}

pub fn diagnostics(state: &DKGState, s: f64, r: f64) -> TrajectoryRow {
    TrajectoryRow {
        time: state.time,
        charge: charge(state),
        psi_hs: spinor_sobolev_norm(state, s),
        phi_hr: crate::norms::sobolev_norm(&state.phi, r, false).expect("inhomogeneous norm"),
    }
}

/// Weights `(w0, w1)` with `int_0^h e^{a(h-u)} (N0 + (N1 - N0) u / h) du = w0 N0 + w1 N1`.
fn linear_source_weights(a: C64, h: f64) -> (C64, C64) {
    let z = a * h;
    if z.norm() < 1e-3 {
        let full = h * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
        let w1 = h * (0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0);
        (full - w1, w1)
    } else {
        let ez = z.exp();
        let full = (ez - 1.0) / a;
        let w1 = (ez - 1.0 - z) / (a * a * h);
        (full - w1, w1)
    }
}

/// Picard iterates on the time lattice `t_n = n dt`, `0 <= t_n <= T`.
///
/// Iterate 0 is the free flow of the data; iterate `j + 1` solves the linear
/// equations with sources built from iterate `j`. Sources are interpolated
/// linearly in time and the resulting Duhamel integrals are evaluated exactly.
/// Returns `k + 1` trajectories.
pub fn picard_iterates(data: &InitialData, config: &SolverConfig, k: usize) -> Result<Vec<Vec<DKGState>>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one Picard iterate".into()));
    }
    config.validate()?;
    let (start, _) = initial_state(data, config.dealias)?;
    let e = Engine::new(config.grid, config.dealias, true);
    let m = e.m();
    let n = config.steps();
    let h = config.dt;
    let u0 = e.pack(&start)?;

    // Free flow: iterate 0.
    let mut current: Vec<Packed> = (0..=n).map(|j| e.flow(&u0, j as f64 * h)).collect();
    let mut all = vec![current.clone()];

    let i = C64::new(0.0, 1.0);
    let weights_plus: Vec<(C64, C64)> =
        e.abs_xi.iter().map(|&w| linear_source_weights(C64::new(0.0, -w), h)).collect();
    let weights_minus: Vec<(C64, C64)> =
        e.abs_xi.iter().map(|&w| linear_source_weights(C64::new(0.0, w), h)).collect();
    let wave: Vec<WaveStep> = e.abs_xi.iter().map(|&w| WaveStep::new(w, h)).collect();
    let phases: Vec<C64> = e.abs_xi.iter().map(|&w| C64::from_polar(1.0, -h * w)).collect();

    for j in 1..=k {
        let sources: Vec<([Vec<C64>; 2], [Vec<C64>; 2], Vec<C64>)> = current.iter().map(|u| e.rhs(u)).collect();
        let mut next = Vec::with_capacity(n + 1);
        let mut u = u0.clone();
        next.push(u.clone());
        for step in 0..n {
            let (p0, m0, f0) = &sources[step];
            let (p1, m1, f1) = &sources[step + 1];
            let mut v = Packed::zeros(m);
            for idx in 0..m {
                let (a0, a1) = weights_plus[idx];
                let (b0, b1) = weights_minus[idx];
                for c in 0..2 {
                    v.v[c][idx] = phases[idx] * u.v[c][idx] + i * (a0 * p0[c][idx] + a1 * p1[c][idx]);
                    v.v[2 + c][idx] =
                        phases[idx].conj() * u.v[2 + c][idx] + i * (b0 * m0[c][idx] + b1 * m1[c][idx]);
                }
                let (a, b) = wave[idx].advance(u.v[4][idx], u.v[5][idx], f0[idx], f1[idx]);
                v.v[4][idx] = a;
                v.v[5][idx] = b;
            }
            if !v.is_finite() {
                return Err(Error::NumericalAbort {
                    time: (step + 1) as f64 * h,
                    reason: format!("Picard iterate {j} diverged"),
                });
            }
            u = v;
            next.push(u.clone());
        }
        current = next;
        all.push(current.clone());
    }
    Ok(all
        .into_iter()
        .map(|traj| traj.into_iter().enumerate().map(|(j, p)| e.unpack(p, j as f64 * h)).collect())
        .collect())
}

/// Successive differences `d_j = max_t ||psi^{(j+1)} - psi^{(j)}||_{H^s}` and the
/// matching `max_t ||phi^{(j+1)} - phi^{(j)}||_{H^r}`.
pub fn picard_differences(iterates: &[Vec<DKGState>], s: f64, r: f64) -> Vec<(f64, f64)> {
    iterates
        .windows(2)
        .map(|w| {
            let mut dpsi: f64 = 0.0;
            let mut dphi: f64 = 0.0;
            for (a, b) in w[0].iter().zip(&w[1]) {
                let diff = difference(a, b);
                dpsi = dpsi.max(spinor_sobolev_norm(&diff, s));
                dphi = dphi.max(crate::norms::sobolev_norm(&diff.phi, r, false).expect("inhomogeneous norm"));
            }
            (dpsi, dphi)
        })
        .collect()
}

/// `b - a` field by field.
pub fn difference(a: &DKGState, b: &DKGState) -> DKGState {
    let sub = |x: &SpectralField2, y: &SpectralField2| {
        y.to_frequency().zip_with(&x.to_frequency(), |p, q| p - q).expect("same grid")
    };
    DKGState {
        psi_plus: SpinorField2 { c: [sub(&a.psi_plus.c[0], &b.psi_plus.c[0]), sub(&a.psi_plus.c[1], &b.psi_plus.c[1])] },
        psi_minus: SpinorField2 {
            c: [sub(&a.psi_minus.c[0], &b.psi_minus.c[0]), sub(&a.psi_minus.c[1], &b.psi_minus.c[1])],
        },
        phi: sub(&a.phi, &b.phi),
        phi_t: sub(&a.phi_t, &b.phi_t),
        time: b.time,
    }
}

/// Smooth even cutoff: 1 on `|t| <= 1`, 0 on `|t| >= 2`.
pub fn cutoff(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= 2.0 {
        return 0.0;
    }
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let up = f(2.0 - a);
    up / (up + f(a - 1.0))
}

/// Modified first iterate of the field: the solution of
/// `-box Phi = g(t) <beta psi0(t), psi0(t)>` with zero data, `g(t) = t chi(t)`
/// and `psi0(t)` the free Dirac flow of `psi0`, evaluated at time `t`.
pub fn first_iterate(psi0: &SpinorField2, t: f64) -> Result<SpectralField2> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let g = *psi0.grid();
    let zero = SpectralField2::zeros(g, Basis::Frequency);
    let (state, _) = initial_state(&InitialData { psi0: psi0.clone(), phi0: zero.clone(), phi1: zero }, true)?;
    let e = Engine::new(g, true, true);
    let u0 = e.pack(&state)?;
    let kmax = (0..g.len())
        .filter(|&i| u0.v[..4].iter().any(|c| c[i].norm_sqr() > 0.0))
        .map(|i| e.abs_xi[i])
        .fold(0.0, f64::max);
    if kmax == 0.0 {
        return Ok(SpectralField2::zeros(g, Basis::Frequency));
    }
    // Interacting phases reach 2 kmax; 0.1 radians per step keeps the linear
    // interpolation of the forcing accurate to a fraction of a percent.
    let steps = ((t * 2.0 * kmax / 0.1).ceil() as usize).max(16);
    let h = t / steps as f64;
    let m = e.m();
    let forcing_at = |s: f64| -> Vec<C64> {
        let u = e.flow(&u0, s);
        let psi1: Vec<C64> = (0..m).map(|i| u.v[0][i] + u.v[2][i]).collect();
        let psi2: Vec<C64> = (0..m).map(|i| u.v[1][i] + u.v[3][i]).collect();
        let p1 = e.to_phys(&psi1);
        let p2 = e.to_phys(&psi2);
        let gs = s * cutoff(s);
        // box Phi = -g <beta psi, psi>
        e.to_freq((0..m).map(|i| C64::new(-gs * (p1[i].norm_sqr() - p2[i].norm_sqr()), 0.0)).collect())
    };
    let wave: Vec<WaveStep> = e.abs_xi.iter().map(|&w| WaveStep::new(w, h)).collect();
    let mut phi = vec![C64::default(); m];
    let mut phi_t = vec![C64::default(); m];
    let mut f0 = forcing_at(0.0);
    for j in 0..steps {
        let f1 = forcing_at((j + 1) as f64 * h);
        for i in 0..m {
            let (a, b) = wave[i].advance(phi[i], phi_t[i], f0[i], f1[i]);
            phi[i] = a;
            phi_t[i] = b;
        }
        f0 = f1;
    }
    SpectralField2::new(g, phi, Basis::Frequency)
}

/// `||Phi^{(1)}(t)||_{H^sigma}` for the modified first iterate.
pub fn first_iterate_regularity(psi0: &SpinorField2, sigma: f64, t: f64) -> Result<f64> {
    crate::norms::sobolev_norm(&first_iterate(psi0, t)?, sigma, false)
}

fn mode_phase(seed: u64, k: [i64; 2], component: u64) -> f64 {
    // One generator per (seed, mode, component) keeps the phases of a mode
    // identical on every grid that contains it.
    let key = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((k[0] as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add((k[1] as u64).wrapping_mul(0x1656_67B1_9E37_79F9))
        .wrapping_add(component.wrapping_mul(0x27D4_EB2F_1656_67C5));
    ChaCha8Rng::seed_from_u64(key).gen_range(0.0..2.0 * PI)
}

/// Scalar data with `f^(xi) = <xi>^{-(s+1)} e^{i theta(xi)}`, one pseudo-random
/// phase per integer mode. Belongs to `H^{s'}` in the continuum limit exactly
/// when `s' < s`.
pub fn rough_scalar(s: f64, seed: u64, grid: &GridSpec2, component: u64) -> SpectralField2 {
    let values = (0..grid.len())
        .map(|i| {
            let amp = (1.0 + norm2(grid.xi(i))).powf(-(s + 1.0));
            C64::from_polar(amp, mode_phase(seed, grid.wavenumbers(i), component))
        })
        .collect();
    SpectralField2::new(*grid, values, Basis::Frequency).expect("length matches grid")
}

/// Spinor version of [`rough_scalar`] with independent phases per component.
pub fn rough_data(s: f64, seed: u64, grid: &GridSpec2) -> SpinorField2 {
    SpinorField2 { c: [rough_scalar(s, seed, grid, 0), rough_scalar(s, seed, grid, 1)] }
}
