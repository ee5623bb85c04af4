//! Sobolev, Bourgain-type and mixed Lebesgue norms as lattice Riemann sums.
//!
//! Spectral norms are normalized so that at zero regularity they coincide with
//! the physical `L^2` norm: planar norms carry `(2 pi)^{-1}`, space-time norms
//! `(2 pi)^{-3/2}`. Spinor inputs use the pointwise `C^2` magnitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::symbols::{bracket, homogeneous_power};
use crate::grid::{norm2, SpectralField2, SpectralField3, SpinorField3, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    Sobolev,
    SobolevHomog,
    XsbPlus,
    XsbMinus,
    /// `<xi>^s <|tau| - |xi|>^b`.
    WaveSobolev,
    /// `H^{s,b}(u) + H^{s-1,b}(d_t u)`.
    WaveSobolevCurly,
    MixedLqLr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
    pub s: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
}

impl NormSpec {
    pub fn new(kind: NormKind, s: f64, b: f64) -> Result<Self> {
        Self { kind, s, b, q: 2.0, r: 2.0 }.validated()
    }

    pub fn mixed(q: f64, r: f64) -> Result<Self> {
        Self { kind: NormKind::MixedLqLr, s: 0.0, b: 0.0, q, r }.validated()
    }

    pub fn xsb(sign: crate::dirac::Sign, s: f64, b: f64) -> Self {
        let kind = match sign {
            crate::dirac::Sign::Plus => NormKind::XsbPlus,
            crate::dirac::Sign::Minus => NormKind::XsbMinus,
        };
        Self { kind, s, b, q: 2.0, r: 2.0 }
    }

    pub fn validated(self) -> Result<Self> {
        if self.kind == NormKind::SobolevHomog && self.s <= -1.0 {
            return Err(Error::InvalidParameter(format!(
                "homogeneous Sobolev norm needs s > -1 in two dimensions, got {}",
                self.s
            )));
        }
        if !(self.q >= 1.0 && self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Lebesgue exponents must be >= 1, got q = {}, r = {}",
                self.q, self.r
            )));
        }
        Ok(self)
    }
}

/// Weight of an `H^s` (or `H-dot^s`) norm at frequency magnitude `r`.
#[inline]
pub fn sobolev_weight(r: f64, s: f64, homogeneous: bool) -> f64 {
    if homogeneous {
        homogeneous_power(r, s)
    } else {
        bracket(r).powf(s)
    }
}

pub fn sobolev_norm(f: &SpectralField2, s: f64, homogeneous: bool) -> Result<f64> {
    if homogeneous && s <= -1.0 {
        NormSpec::new(NormKind::SobolevHomog, s, 0.0)?;
    }
    let hat = f.to_frequency();
    let g = f.grid();
    let sum: f64 = hat
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = sobolev_weight(norm2(g.xi(i)), s, homogeneous);
            w * w * v.norm_sqr()
        })
        .sum();
    Ok((sum * g.cell_xi()).sqrt() / (2.0 * PI))
}

/// Space-time weight of `spec` at `(tau, xi)`; `None` for kinds without one.
pub fn spacetime_weight(spec: &NormSpec, tau: f64, xi: [f64; 2]) -> Option<f64> {
    let r = norm2(xi);
    let (s, b) = (spec.s, spec.b);
    Some(match spec.kind {
        NormKind::XsbPlus => bracket(r).powf(s) * bracket(tau + r).powf(b),
        NormKind::XsbMinus => bracket(r).powf(s) * bracket(tau - r).powf(b),
        NormKind::WaveSobolev => bracket(r).powf(s) * bracket(tau.abs() - r).powf(b),
        _ => return None,
    })
}

fn weighted_sum(grid: &crate::grid::GridSpec3, values: &[C64], weight: impl Fn(f64, [f64; 2]) -> f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (tau, xi) = grid.tau_xi(i);
            let w = weight(tau, xi);
            w * w * v.norm_sqr()
        })
        .sum()
}

fn finish3(grid: &crate::grid::GridSpec3, sum: f64) -> f64 {
    (sum * grid.cell_freq()).sqrt() / (2.0 * PI).powf(1.5)
}

pub fn spacetime_norm(u: &SpectralField3, spec: &NormSpec) -> Result<f64> {
    spinor_spacetime_norm_parts(&[u], spec)
}

pub fn spinor_spacetime_norm(u: &SpinorField3, spec: &NormSpec) -> Result<f64> {
    spinor_spacetime_norm_parts(&[&u.c[0], &u.c[1]], spec)
}

fn spinor_spacetime_norm_parts(parts: &[&SpectralField3], spec: &NormSpec) -> Result<f64> {
    let spec = spec.validated()?;
    match spec.kind {
        NormKind::Sobolev | NormKind::SobolevHomog => Err(Error::InvalidParameter(
            "planar Sobolev kinds are not space-time norms".into(),
        )),
        NormKind::MixedLqLr => {
            if parts.len() != 1 {
                return Err(Error::InvalidParameter("mixed norms take scalar fields".into()));
            }
            mixed_norm(parts[0], spec.q, spec.r)
        }
        NormKind::WaveSobolevCurly => {
            let low = NormSpec { kind: NormKind::WaveSobolev, s: spec.s - 1.0, ..spec };
            let base = NormSpec { kind: NormKind::WaveSobolev, ..spec };
            let mut a = 0.0;
            let mut d = 0.0;
            for p in parts {
                let hat = p.to_frequency();
                let g = hat.grid();
                a += weighted_sum(g, hat.values(), |t, x| spacetime_weight(&base, t, x).unwrap());
                // d_t is the multiplier i tau.
                d += weighted_sum(g, hat.values(), |t, x| t.abs() * spacetime_weight(&low, t, x).unwrap());
            }
            let g = parts[0].grid();
            Ok(finish3(g, a) + finish3(g, d))
        }
        _ => {
            let mut sum = 0.0;
            for p in parts {
                let hat = p.to_frequency();
                sum += weighted_sum(hat.grid(), hat.values(), |t, x| spacetime_weight(&spec, t, x).unwrap());
            }
            Ok(finish3(parts[0].grid(), sum))
        }
    }
}

/// Single-weight variant of the curly norm:
/// `<xi>^{s-1} <|tau| + |xi|> <|tau| - |xi|>^b`. Comparable to the two-term
/// form within a factor of two.
pub fn wave_sobolev_curly_product_form(u: &SpectralField3, s: f64, b: f64) -> f64 {
    let hat = u.to_frequency();
    let sum = weighted_sum(hat.grid(), hat.values(), |tau, xi| {
        let r = norm2(xi);
        bracket(r).powf(s - 1.0) * bracket(tau.abs() + r) * bracket(tau.abs() - r).powf(b)
    });
    finish3(hat.grid(), sum)
}

/// `|| ||u(t)||_{L^r_x} ||_{L^q_t}` over the full periodic time window.
pub fn mixed_norm(u: &SpectralField3, q: f64, r: f64) -> Result<f64> {
    NormSpec::mixed(q, r)?;
    let phys = u.to_physical();
    let g = *phys.grid();
    let m = g.slice_len();
    let per_slice: Vec<f64> = phys.values().chunks(m).map(|s| lebesgue(s, r, g.dx() * g.dx())).collect();
    Ok(lebesgue_real(&per_slice, q, g.dt()))
}

/// `L^r` Riemann sum of complex samples with cell volume `cell`.
pub fn lebesgue(values: &[C64], r: f64, cell: f64) -> f64 {
    if r.is_infinite() {
        values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    } else {
        (values.iter().map(|v| v.norm().powf(r)).sum::<f64>() * cell).powf(1.0 / r)
    }
}

/// `L^q` Riemann sum of nonnegative samples.
pub fn lebesgue_real(values: &[f64], q: f64, cell: f64) -> f64 {
    if q.is_infinite() {
        values.iter().copied().fold(0.0, f64::max)
    } else {
        (values.iter().map(|v| v.powf(q)).sum::<f64>() * cell).powf(1.0 / q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::Sign;
    use crate::grid::{Basis, GridSpec2, GridSpec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random3(g: GridSpec3, seed: u64) -> SpectralField3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SpectralField3::new(g, v, Basis::Frequency).unwrap()
    }

    #[test]
    fn single_mode_sobolev() {
        let g = GridSpec2::new(16, 2.0 * PI).unwrap();
        let k = [3.0, 4.0];
        let idx = g.index_of([3, 4]).unwrap();
        let mut f = SpectralField2::zeros(g, Basis::Frequency);
        f.values_mut()[idx] = C64::new(2.5, 0.0);
        let s = 0.6;
        let expect = 2.5 * bracket(norm2(k)).powf(s) * g.dxi() / (2.0 * PI);
        assert!((sobolev_norm(&f, s, false).unwrap() - expect).abs() < 1e-14);
        assert!(sobolev_norm(&f, -1.0, true).is_err());
    }

    #[test]
    fn zero_regularity_is_physical_l2() {
        let g = GridSpec2::new(16, 7.0).unwrap();
        let f = SpectralField2::from_physical_fn(g, |x| C64::new((-x[0] * x[0]).exp(), x[1].sin()));
        let l2 = lebesgue(f.values(), 2.0, g.cell_x());
        assert!((sobolev_norm(&f, 0.0, false).unwrap() - l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn homogeneous_norm_dilation_law() {
        // f(2x) on a box half the size with the same point count is the
        // same array of samples, so only the lattice constants change.
        let s = 0.4;
        let bump = |x: [f64; 2]| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0);
        let g = GridSpec2::new(128, 24.0).unwrap();
        let f = SpectralField2::from_physical_fn(g, bump);
        let g2 = GridSpec2::new(128, 12.0).unwrap();
        let f2 = SpectralField2::from_physical_fn(g2, |x| bump([2.0 * x[0], 2.0 * x[1]]));
        let ratio = sobolev_norm(&f2, s, true).unwrap() / sobolev_norm(&f, s, true).unwrap();
        assert!((ratio / 2f64.powf(s - 1.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_space_time_mode() {
        let g = GridSpec3::new(8, 8, 4.0, 2.0 * PI).unwrap();
        let mut u = SpectralField3::zeros(g, Basis::Frequency);
        let idx = 2 * 64 + g.space().index_of([1, -2]).unwrap();
        u.values_mut()[idx] = C64::new(0.0, 3.0);
        let (tau, xi) = g.tau_xi(idx);
        let (s, b) = (0.5, 0.7);
        let expect = 3.0 * bracket(norm2(xi)).powf(s) * bracket(tau + norm2(xi)).powf(b) * g.cell_freq().sqrt()
            / (2.0 * PI).powf(1.5);
        let got = spacetime_norm(&u, &NormSpec::xsb(Sign::Plus, s, b)).unwrap();
        assert!((got - expect).abs() < 1e-13 * expect);
    }

    #[test]
    fn curly_norm_two_term_form_matches_explicit_derivative() {
        let g = GridSpec3::new(8, 8, 3.0, 5.0).unwrap();
        let u = random3(g, 4);
        let (s, b) = (0.3, 0.6);
        let dt = u.apply_multiplier(|tau, _| C64::new(0.0, tau)).unwrap();
        let h = |v: &SpectralField3, s| spacetime_norm(v, &NormSpec::new(NormKind::WaveSobolev, s, b).unwrap()).unwrap();
        let direct = h(&u, s) + h(&dt, s - 1.0);
        let curly = spacetime_norm(&u, &NormSpec::new(NormKind::WaveSobolevCurly, s, b).unwrap()).unwrap();
        assert!((direct - curly).abs() < 1e-12 * curly);
        let prod = wave_sobolev_curly_product_form(&u, s, b);
        assert!(prod <= 2.0 * curly && curly <= 2.0 * prod);
    }

    #[test]
    fn wave_weight_matches_plus_weight_on_negative_frequencies() {
        let g = GridSpec3::new(8, 8, 3.0, 5.0).unwrap();
        let u = random3(g, 9);
        let neg: Vec<C64> = (0..g.len())
            .map(|i| if g.tau_xi(i).0 < 0.0 { u.values()[i] } else { C64::default() })
            .collect();
        let v = SpectralField3::new(g, neg, Basis::Frequency).unwrap();
        let a = spacetime_norm(&v, &NormSpec::new(NormKind::WaveSobolev, 0.2, 0.5).unwrap()).unwrap();
        let b = spacetime_norm(&v, &NormSpec::xsb(Sign::Plus, 0.2, 0.5)).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        let c = spacetime_norm(&u, &NormSpec::new(NormKind::WaveSobolev, 0.2, 0.5).unwrap()).unwrap();
        let mirrored = u.apply_multiplier(|_, _| C64::new(1.0, 0.0)).unwrap();
        assert!((c - spacetime_norm(&mirrored, &NormSpec::new(NormKind::WaveSobolev, 0.2, 0.5).unwrap()).unwrap()).abs() < 1e-12 * c);
        assert!(spacetime_norm(&u, &NormSpec { kind: NormKind::Sobolev, s: 0.0, b: 0.0, q: 2.0, r: 2.0 }).is_err());
    }

    #[test]
    fn mixed_norm_examples() {
        let g = GridSpec3::new(8, 8, 2.0, 3.0).unwrap();
        let a = |t: f64| 1.0 + 0.5 * (3.0 * t).sin();
        let b = |x: [f64; 2]| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
        let u = SpectralField3::from_physical_fn(g, |t, x| C64::new(a(t) * b(x), 0.0));
        let (q, r) = (3.0, 5.0);
        let at: Vec<f64> = (0..8).map(|k| a(g.centered_time(k))).collect();
        let bx: Vec<C64> = (0..64).map(|i| C64::new(b(g.space().x(i)), 0.0)).collect();
        let expect = lebesgue_real(&at, q, g.dt()) * lebesgue(&bx, r, g.dx() * g.dx());
        assert!((mixed_norm(&u, q, r).unwrap() - expect).abs() < 1e-12 * expect);
        let l2 = mixed_norm(&u, 2.0, 2.0).unwrap();
        let direct = spacetime_norm(&u, &NormSpec::xsb(Sign::Plus, 0.0, 0.0)).unwrap();
        assert!((l2 - direct).abs() < 1e-12 * l2);
        assert!(mixed_norm(&u, 0.5, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn xsb_norm_is_monotone_in_b(b1 in -1.0f64..1.0, db in 0.0f64..1.0, seed in 0u64..100) {
            let g = GridSpec3::new(4, 4, 2.0, 3.0).unwrap();
            let u = random3(g, seed);
            let lo = spacetime_norm(&u, &NormSpec::xsb(Sign::Minus, 0.3, b1)).unwrap();
            let hi = spacetime_norm(&u, &NormSpec::xsb(Sign::Minus, 0.3, b1 + db)).unwrap();
            prop_assert!(hi >= lo * (1.0 - 1e-14));
        }
    }
}
