//! Bilinear null-form estimates, the four sharpness families and slope fitting.
//!
//! The sharpness runs never materialize dense space-time grids. Spectra live on
//! an anisotropic frequency lattice `(k0 d_tau, k1 d1, k2 d2)` and the null form
//! is a direct sum over the supports, evaluated only on the output region.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirac::{angle, beta_apply, eigenvector, pairing, project, Sign, Spinor};
use crate::error::{Error, Result};
use crate::grid::{norm2, weights_at, Basis, GridSpec3, SpectralField3, SpinorField3, C64};
use crate::norms::{spacetime_norm, spacetime_weight, spinor_spacetime_norm, NormKind, NormSpec};
use crate::solver::cutoff;
use crate::waves::RatioParts;

/// Which of the two bilinear estimates is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    /// `||<beta Pi psi, Pi psi'>||_{H^{r-1,-1/2+2e}} <= X^{s,1/2+e} x X^{s,1/2+e}`.
    B,
    /// Dual form `||<beta Pi psi, Pi psi'>||_{H^{-r,-1/2-e}} <= X^{s,1/2+e} x X^{-s,1/2-2e}`.
    A,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateCase {
    pub which: Which,
    pub signs: (Sign, Sign),
    pub s: f64,
    pub r: f64,
    pub epsilon: f64,
}

impl EstimateCase {
    pub fn new(which: Which, signs: (Sign, Sign), s: f64, r: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be >= 0")));
        }
        Ok(Self { which, signs, s, r, epsilon })
    }

    /// Norm applied to the null form.
    pub fn output_norm(&self) -> NormSpec {
        let e = self.epsilon;
        match self.which {
            Which::B => NormSpec { kind: NormKind::WaveSobolev, s: self.r - 1.0, b: -0.5 + 2.0 * e, q: 2.0, r: 2.0 },
            Which::A => NormSpec { kind: NormKind::WaveSobolev, s: -self.r, b: -0.5 - e, q: 2.0, r: 2.0 },
        }
    }

    /// Norms applied to `psi` and `psi'`.
    pub fn input_norms(&self) -> (NormSpec, NormSpec) {
        let e = self.epsilon;
        let first = NormSpec::xsb(self.signs.0, self.s, 0.5 + e);
        let second = match self.which {
            Which::B => NormSpec::xsb(self.signs.1, self.s, 0.5 + e),
            Which::A => NormSpec::xsb(self.signs.1, -self.s, 0.5 - 2.0 * e),
        };
        (first, second)
    }
}

/// Spacings of an anisotropic frequency lattice `(tau, xi_1, xi_2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLattice {
    pub d: [f64; 3],
}

impl FrequencyLattice {
    pub fn new(d: [f64; 3]) -> Result<Self> {
        if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!("lattice spacings {d:?} must be positive")));
        }
        Ok(Self { d })
    }

    pub fn point(&self, k: [i64; 3]) -> (f64, [f64; 2]) {
        (k[0] as f64 * self.d[0], [k[1] as f64 * self.d[1], k[2] as f64 * self.d[2]])
    }

    pub fn cell(&self) -> f64 {
        self.d[0] * self.d[1] * self.d[2]
    }

    /// Lattice indices along `axis` covering `[c - h, c + h]`, rounded outward.
    pub fn cover(&self, axis: usize, c: f64, h: f64) -> std::ops::RangeInclusive<i64> {
        let d = self.d[axis];
        let lo = ((c - h) / d + 1e-9).floor() as i64;
        let hi = ((c + h) / d - 1e-9).ceil() as i64;
        lo..=hi
    }

    /// Lattice indices along `axis` inside `[lo, hi]`, with a `1e-9` relative tolerance.
    pub fn inside(&self, axis: usize, lo: f64, hi: f64) -> std::ops::RangeInclusive<i64> {
        let d = self.d[axis];
        ((lo / d - 1e-9).ceil() as i64)..=((hi / d + 1e-9).floor() as i64)
    }
}

/// Spinor spectrum stored sparsely on a [`FrequencyLattice`], sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSpinor3 {
    lattice: FrequencyLattice,
    entries: Vec<([i64; 3], Spinor)>,
    index: HashMap<[i64; 3], usize>,
}

impl SparseSpinor3 {
    /// Later duplicates overwrite earlier ones.
    pub fn new(lattice: FrequencyLattice, entries: Vec<([i64; 3], Spinor)>) -> Self {
        let mut map: HashMap<[i64; 3], Spinor> = HashMap::with_capacity(entries.len());
        for (k, v) in entries {
            map.insert(k, v);
        }
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let index = entries.iter().enumerate().map(|(i, e)| (e.0, i)).collect();
        Self { lattice, entries, index }
    }

    /// Nonzero frequency values of a dense field.
    pub fn from_field(f: &SpinorField3) -> Self {
        let hat = f.to_frequency();
        let g = *hat.grid();
        let lattice = FrequencyLattice { d: [g.dtau(), g.dxi(), g.dxi()] };
        let nx = g.n_x();
        let nt = g.n_t();
        let mut entries = Vec::new();
        for i in 0..g.len() {
            let v = [hat.c[0].values()[i], hat.c[1].values()[i]];
            if v[0].norm_sqr() + v[1].norm_sqr() == 0.0 {
                continue;
            }
            let (k, rest) = (i / (nx * nx), i % (nx * nx));
            let k0 = crate::grid::wavenumber(k, nt);
            let k1 = crate::grid::wavenumber(rest / nx, nx);
            let k2 = crate::grid::wavenumber(rest % nx, nx);
            entries.push(([k0, k1, k2], v));
        }
        Self::new(lattice, entries)
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }
    pub fn entries(&self) -> &[([i64; 3], Spinor)] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn get(&self, k: [i64; 3]) -> Option<&Spinor> {
        self.index.get(&k).map(|&i| &self.entries[i].1)
    }

    /// Applies `Pi_sign(eta)` pointwise; entries at `eta = 0` are dropped.
    pub fn projected(&self, sign: Sign) -> Self {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| {
                let (_, eta) = self.lattice.point(*k);
                (norm2(eta) > 0.0).then(|| (*k, project(sign, eta, v)))
            })
            .collect();
        Self::new(self.lattice, entries)
    }

    pub fn norm(&self, spec: &NormSpec) -> f64 {
        let sum: f64 = self
            .entries
            .iter()
            .map(|(k, v)| {
                let (tau, xi) = self.lattice.point(*k);
                let w = spacetime_weight(spec, tau, xi).expect("space-time norm kind");
                w * w * (v[0].norm_sqr() + v[1].norm_sqr())
            })
            .sum();
        (sum * self.lattice.cell()).sqrt() / (2.0 * PI).powf(1.5)
    }

    pub fn scale(&self, a: C64) -> Self {
        let entries = self.entries.iter().map(|(k, v)| (*k, [v[0] * a, v[1] * a])).collect();
        Self::new(self.lattice, entries)
    }
}

/// Scalar space-time spectrum on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseField3 {
    pub lattice: FrequencyLattice,
    pub entries: Vec<([i64; 3], C64)>,
}

impl SparseField3 {
    pub fn norm(&self, spec: &NormSpec) -> f64 {
        let sum: f64 = self
            .entries
            .iter()
            .map(|(k, v)| {
                let (tau, xi) = self.lattice.point(*k);
                let w = spacetime_weight(spec, tau, xi).expect("space-time norm kind");
                w * w * v.norm_sqr()
            })
            .sum();
        (sum * self.lattice.cell()).sqrt() / (2.0 * PI).powf(1.5)
    }
}

/// Space-time Fourier transform of `<beta Pi_{s1}(D) psi, Pi_{s2}(D) psi'>`
/// on the grid of the inputs, computed as a pointwise product in physical space
/// (periodic convolution in frequency).
pub fn null_form(psi: &SpinorField3, psi2: &SpinorField3, signs: (Sign, Sign)) -> Result<SpectralField3> {
    if psi.grid() != psi2.grid() {
        return Err(Error::GridMismatch);
    }
    let g = *psi.grid();
    let proj = |f: &SpinorField3, sign: Sign| -> Result<[SpectralField3; 2]> {
        let hat = f.to_frequency();
        let m = g.len();
        let mut a = vec![C64::default(); m];
        let mut b = vec![C64::default(); m];
        for i in 0..m {
            let (_, xi) = g.tau_xi(i);
            if norm2(xi) == 0.0 {
                continue;
            }
            let p = project(sign, xi, &[hat.c[0].values()[i], hat.c[1].values()[i]]);
            a[i] = p[0];
            b[i] = p[1];
        }
        Ok([
            SpectralField3::new(g, a, Basis::Frequency)?.to_physical(),
            SpectralField3::new(g, b, Basis::Frequency)?.to_physical(),
        ])
    };
    let u = proj(psi, signs.0)?;
    let w = proj(psi2, signs.1)?;
    let values = (0..g.len())
        .map(|i| {
            pairing(&beta_apply(&[u[0].values()[i], u[1].values()[i]]), &[w[0].values()[i], w[1].values()[i]])
        })
        .collect();
    Ok(SpectralField3::new(g, values, Basis::Physical)?.to_frequency())
}

/// Direct-summation null form on a sparse lattice:
/// `N(o) = (2 pi)^{-3} cell sum_p <beta Pi a(p), Pi b(p - o)>`.
/// With `outputs = None` every reachable output frequency is produced.
pub fn null_form_sparse(
    psi: &SparseSpinor3,
    psi2: &SparseSpinor3,
    signs: (Sign, Sign),
    outputs: Option<&[[i64; 3]]>,
) -> Result<SparseField3> {
    if psi.lattice() != psi2.lattice() {
        return Err(Error::GridMismatch);
    }
    let lattice = *psi.lattice();
    let a: Vec<([i64; 3], Spinor)> =
        psi.projected(signs.0).entries().iter().map(|(k, v)| (*k, beta_apply(v))).collect();
    let b = psi2.projected(signs.1);
    let c = lattice.cell() / (2.0 * PI).powi(3);
    let entries = match outputs {
        Some(out) => out
            .iter()
            .map(|o| {
                let mut sum = C64::default();
                for (p, bv) in &a {
                    if let Some(w) = b.get([p[0] - o[0], p[1] - o[1], p[2] - o[2]]) {
                        sum += pairing(bv, w);
                    }
                }
                (*o, sum * c)
            })
            .collect(),
        None => {
            let mut acc: HashMap<[i64; 3], C64> = HashMap::new();
            for (p, bv) in &a {
                for (q, w) in b.entries() {
                    *acc.entry([p[0] - q[0], p[1] - q[1], p[2] - q[2]]).or_default() += pairing(bv, w);
                }
            }
            let mut e: Vec<_> = acc.into_iter().map(|(k, v)| (k, v * c)).collect();
            e.sort_by(|x, y| x.0.cmp(&y.0));
            e
        }
    };
    Ok(SparseField3 { lattice, entries })
}

/// Left and right sides of the estimate for dense inputs, optionally restricting
/// the output norm to `region(tau, xi)`.
pub fn estimate_sides(
    case: &EstimateCase,
    psi: &SpinorField3,
    psi2: &SpinorField3,
    region: Option<&dyn Fn(f64, [f64; 2]) -> bool>,
) -> Result<RatioParts> {
    let mut n = null_form(psi, psi2, case.signs)?;
    if let Some(reg) = region {
        let g = *n.grid();
        for (i, v) in n.values_mut().iter_mut().enumerate() {
            let (tau, xi) = g.tau_xi(i);
            if !reg(tau, xi) {
                *v = C64::default();
            }
        }
    }
    let lhs = spacetime_norm(&n, &case.output_norm())?;
    let (n1, n2) = case.input_norms();
    RatioParts::new(lhs, spinor_spacetime_norm(psi, &n1)? * spinor_spacetime_norm(psi2, &n2)?)
}

/// Sparse counterpart of [`estimate_sides`] with the output norm taken over `outputs`.
pub fn estimate_sides_sparse(
    case: &EstimateCase,
    psi: &SparseSpinor3,
    psi2: &SparseSpinor3,
    outputs: &[[i64; 3]],
) -> Result<RatioParts> {
    let n = null_form_sparse(psi, psi2, case.signs, Some(outputs))?;
    let (n1, n2) = case.input_norms();
    RatioParts::new(n.norm(&case.output_norm()), psi.norm(&n1) * psi2.norm(&n2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyId {
    R1,
    R2,
    R3,
    S,
}

impl FamilyId {
    pub const ALL: [FamilyId; 4] = [FamilyId::R1, FamilyId::R2, FamilyId::R3, FamilyId::S];

    /// `delta(r, s)` with ratio `~ L^{-delta}`.
    pub fn delta(self, s: f64, r: f64) -> f64 {
        match self {
            FamilyId::R1 => 0.75 - r + 2.0 * s,
            FamilyId::R2 => 0.75 - r + 1.5 * s,
            FamilyId::R3 => 1.0 - r + s,
            FamilyId::S => 0.5 + 2.0 * s,
        }
    }

    pub fn signs(self) -> (Sign, Sign) {
        match self {
            FamilyId::S => (Sign::Plus, Sign::Minus),
            _ => (Sign::Plus, Sign::Plus),
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyId::R1 => "R1",
            FamilyId::R2 => "R2",
            FamilyId::R3 => "R3",
            FamilyId::S => "S",
        };
        f.write_str(s)
    }
}

impl FromStr for FamilyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R1" => Ok(FamilyId::R1),
            "R2" => Ok(FamilyId::R2),
            "R3" => Ok(FamilyId::R3),
            "S" => Ok(FamilyId::S),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}' (expected R1, R2, R3 or S)"))),
        }
    }
}

/// Axis-aligned rectangle `|x_i - c_i| <= h_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub c: [f64; 2],
    pub h: [f64; 2],
}

impl Rect {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..2).all(|i| (x[i] - self.c[i]).abs() <= self.h[i] * (1.0 + 1e-12) + 1e-12)
    }
    pub fn area(&self) -> f64 {
        4.0 * self.h[0] * self.h[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleFamily {
    pub id: FamilyId,
    pub l: f64,
    pub delta0: f64,
}

impl CounterexampleFamily {
    pub fn new(id: FamilyId, l: f64, delta0: f64) -> Result<Self> {
        if !(l >= 8.0 && l.log2().fract() == 0.0) {
            return Err(Error::InvalidParameter(format!("L = {l} must be a power of two >= 8")));
        }
        if !(delta0 > 0.0 && delta0 <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta0 = {delta0} must lie in (0, 1]")));
        }
        Ok(Self { id, l, delta0 })
    }

    /// The sets `A`, `B`, `C` in the continuum.
    pub fn sets(&self) -> (Rect, Rect, Rect) {
        let l = self.l;
        let q = l.sqrt();
        let r = |c: [f64; 2], h: [f64; 2]| Rect { c, h };
        match self.id {
            FamilyId::R1 => (r([l, q], [l / 4.0, q / 4.0]), r([2.0 * l, 0.0], [l / 2.0, q / 2.0]), r([-l, q], [l / 4.0, q / 4.0])),
            FamilyId::R2 => (r([0.0, 1.0], [q / 2.0, q / 2.0]), r([l, 0.0], [q, q]), r([-l, 1.0], [q / 2.0, q / 2.0])),
            FamilyId::R3 => (r([0.0, 1.0], [0.5, 0.5]), r([l, 0.0], [1.0, 1.0]), r([-l, 1.0], [0.5, 0.5])),
            FamilyId::S => (r([l, 1.0], [0.25, 0.25]), r([l, 0.0], [0.5, 0.5]), r([0.0, 1.0], [0.25, 0.25])),
        }
    }

    /// Lattice resolving the thickness `O(1)` in `tau` and each set's extents.
    pub fn lattice(&self) -> FrequencyLattice {
        let q = self.l.sqrt();
        let d = match self.id {
            FamilyId::R1 => [0.25, self.l / 32.0, q / 16.0],
            FamilyId::R2 => {
                let dt = 0.25;
                [dt, dt * (q / 16.0 / dt).round().max(1.0), q / 16.0]
            }
            FamilyId::R3 | FamilyId::S => [0.125; 3],
        };
        FrequencyLattice { d }
    }
}

/// Lattice realization of one family member.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub family: CounterexampleFamily,
    pub lattice: FrequencyLattice,
    pub psi: SparseSpinor3,
    pub psi2: SparseSpinor3,
    /// Output region `tau + xi_1 = O(1)` (or `tau + 2L = O(1)`), `xi in C`.
    pub outputs: Vec<[i64; 3]>,
    pub a_sites: Vec<[i64; 2]>,
    pub b_sites: Vec<[i64; 2]>,
    pub c_sites: Vec<[i64; 2]>,
    /// Thickness of the slab carrying `psi'`.
    pub delta2: f64,
}

fn rect_sites(lat: &FrequencyLattice, r: &Rect) -> (std::ops::RangeInclusive<i64>, std::ops::RangeInclusive<i64>) {
    (lat.cover(1, r.c[0], r.h[0]), lat.cover(2, r.c[1], r.h[1]))
}

fn sites(r1: std::ops::RangeInclusive<i64>, r2: std::ops::RangeInclusive<i64>) -> Vec<[i64; 2]> {
    r1.flat_map(|a| r2.clone().map(move |b| [a, b])).filter(|k| *k != [0, 0]).collect()
}

/// Builds `psi`, `psi'` and the output region of a family member.
///
/// `A` and `C` are rounded outward to the lattice; `B` is enlarged to contain
/// every lattice difference `A - C`, so the support implication holds exactly.
pub fn build_counterexample(family: &CounterexampleFamily) -> Result<Counterexample> {
    let lat = family.lattice();
    let (a, b, c) = family.sets();
    let (a1, a2) = rect_sites(&lat, &a);
    let (c1, c2) = rect_sites(&lat, &c);
    let (pb1, pb2) = rect_sites(&lat, &b);
    let b1 = (*pb1.start()).min(a1.start() - c1.end())..=(*pb1.end()).max(a1.end() - c1.start());
    let b2 = (*pb2.start()).min(a2.start() - c2.end())..=(*pb2.end()).max(a2.end() - c2.start());
    let a_sites = sites(a1, a2);
    let b_sites = sites(b1, b2);
    let c_sites = sites(c1, c2);
    let d0 = family.delta0;
    let l = family.l;
    let (s1, s2) = family.id.signs();
    let xi_of = |k: &[i64; 2]| [k[0] as f64 * lat.d[1], k[1] as f64 * lat.d[2]];

    let mut psi = Vec::new();
    for k in &a_sites {
        let eta = xi_of(k);
        let v = eigenvector(s1, eta)?;
        let centre = match family.id {
            FamilyId::S => -norm2(eta),
            _ => -eta[0],
        };
        for j in lat.inside(0, centre - d0, centre + d0) {
            psi.push(([j, k[0], k[1]], v));
        }
    }

    let delta2 = match family.id {
        FamilyId::S => {
            let dev = |ks: &[[i64; 2]]| ks.iter().map(|k| (l - norm2(xi_of(k))).abs()).fold(0.0, f64::max);
            2.0 * d0 + dev(&a_sites) + dev(&b_sites)
        }
        _ => 2.0 * d0,
    };
    let mut psi2 = Vec::new();
    for k in &b_sites {
        let zeta = xi_of(k);
        let v = eigenvector(s2, zeta)?;
        let centre = match family.id {
            FamilyId::S => norm2(zeta),
            _ => -zeta[0],
        };
        for j in lat.inside(0, centre - delta2, centre + delta2) {
            psi2.push(([j, k[0], k[1]], v));
        }
    }

    let mut outputs = Vec::new();
    for k in &c_sites {
        let xi = xi_of(k);
        let centre = match family.id {
            FamilyId::S => -2.0 * l,
            _ => -xi[0],
        };
        for j in lat.inside(0, centre - d0, centre + d0) {
            outputs.push([j, k[0], k[1]]);
        }
    }

    Ok(Counterexample {
        family: *family,
        lattice: lat,
        psi: SparseSpinor3::new(lat, psi),
        psi2: SparseSpinor3::new(lat, psi2),
        outputs,
        a_sites,
        b_sites,
        c_sites,
        delta2,
    })
}

impl Counterexample {
    /// Errors unless `grid` holds every support and output point without wrap-around
    /// and its spacings divide the lattice spacings.
    pub fn check_grid(&self, grid: &GridSpec3) -> Result<()> {
        let steps = [grid.dtau(), grid.dxi(), grid.dxi()];
        let mut reach = [0.0f64; 3];
        for k in self.psi.entries().iter().map(|e| e.0).chain(self.psi2.entries().iter().map(|e| e.0)).chain(self.outputs.iter().copied()) {
            let (t, x) = self.lattice.point(k);
            reach[0] = reach[0].max(t.abs());
            reach[1] = reach[1].max(x[0].abs());
            reach[2] = reach[2].max(x[1].abs());
        }
        let nyq = [grid.n_t() as f64 / 2.0 * steps[0], grid.n_x() as f64 / 2.0 * steps[1], grid.n_x() as f64 / 2.0 * steps[2]];
        for ax in 0..3 {
            let ratio = self.lattice.d[ax] / steps[ax];
            if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
                return Err(Error::GridTooSmall(format!(
                    "axis {ax}: grid spacing {} must divide the lattice spacing {} (need box length a multiple of {})",
                    steps[ax],
                    self.lattice.d[ax],
                    2.0 * PI / self.lattice.d[ax]
                )));
            }
            if reach[ax] >= nyq[ax] {
                return Err(Error::GridTooSmall(format!(
                    "axis {ax}: supports reach {} but the grid only resolves |k| < {}; need at least {} points",
                    reach[ax],
                    nyq[ax],
                    (2.0 * reach[ax] / steps[ax]).ceil() as usize + 2
                )));
            }
        }
        Ok(())
    }

    /// Signs of `Im <beta v(eta), v(eta - xi)>` over all `eta in A`, `xi in C`:
    /// `(positive, negative, zero)` counts.
    pub fn orientation_counts(&self) -> Result<(usize, usize, usize)> {
        let (s1, s2) = self.family.id.signs();
        let lat = &self.lattice;
        let xi_of = |k: &[i64; 2]| [k[0] as f64 * lat.d[1], k[1] as f64 * lat.d[2]];
        let mut counts = (0, 0, 0);
        for a in &self.a_sites {
            let eta = xi_of(a);
            let v = beta_apply(&eigenvector(s1, eta)?);
            for c in &self.c_sites {
                let xi = xi_of(c);
                let zeta = [eta[0] - xi[0], eta[1] - xi[1]];
                let im = pairing(&v, &eigenvector(s2, zeta)?).im;
                if im > 1e-14 {
                    counts.0 += 1;
                } else if im < -1e-14 {
                    counts.1 += 1;
                } else {
                    counts.2 += 1;
                }
            }
        }
        Ok(counts)
    }
}

/// Null-form values on the output region, computed once per family member.
#[derive(Clone, Debug)]
pub struct FamilySample {
    pub l: f64,
    pub null_form: SparseField3,
    pub psi: SparseSpinor3,
    pub psi2: SparseSpinor3,
    pub signs: (Sign, Sign),
}

impl FamilySample {
    pub fn new(family: &CounterexampleFamily) -> Result<Self> {
        let ce = build_counterexample(family)?;
        let signs = family.id.signs();
        let null_form = null_form_sparse(&ce.psi, &ce.psi2, signs, Some(&ce.outputs))?;
        Ok(Self { l: family.l, null_form, psi: ce.psi, psi2: ce.psi2, signs })
    }

    /// Sides of the `H^{r-1,-1/2}` estimate at `epsilon = 0`.
    pub fn sides(&self, s: f64, r: f64) -> Result<RatioParts> {
        let case = EstimateCase::new(Which::B, self.signs, s, r, 0.0)?;
        let (n1, n2) = case.input_norms();
        RatioParts::new(self.null_form.norm(&case.output_norm()), self.psi.norm(&n1) * self.psi2.norm(&n2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub l: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub family: FamilyId,
    pub s: f64,
    pub r: f64,
    pub rows: Vec<ScalingRow>,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    pub pass: bool,
}

/// Slope tolerance for [`ScalingReport::pass`].
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!("need two or more paired values, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return Err(Error::DegenerateFit("abscissae coincide or values are not finite".into()));
    }
    Ok(sxy / sxx)
}

fn check_geometric(ls: &[f64]) -> Result<()> {
    if ls.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least three L values, got {}", ls.len())));
    }
    let q = ls[1] / ls[0];
    if !(q > 1.0) || ls.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-9) {
        return Err(Error::DegenerateFit(format!("L values {ls:?} are not an increasing geometric sequence")));
    }
    Ok(())
}

/// Fits every `(s, r)` point against the same family members.
pub fn fit_scaling_batch(id: FamilyId, points: &[(f64, f64)], ls: &[f64], delta0: f64) -> Result<Vec<ScalingReport>> {
    check_geometric(ls)?;
    let samples: Vec<FamilySample> =
        ls.iter().map(|&l| FamilySample::new(&CounterexampleFamily::new(id, l, delta0)?)).collect::<Result<_>>()?;
    points
        .iter()
        .map(|&(s, r)| {
            let rows: Vec<ScalingRow> = samples
                .iter()
                .map(|smp| {
                    let p = smp.sides(s, r)?;
                    Ok(ScalingRow { l: smp.l, lhs: p.lhs, rhs: p.rhs, ratio: p.ratio })
                })
                .collect::<Result<_>>()?;
            if rows.iter().any(|row| !(row.ratio > 0.0)) {
                return Err(Error::DegenerateFit("a ratio vanished; log-log fit impossible".into()));
            }
            let x: Vec<f64> = rows.iter().map(|row| row.l.ln()).collect();
            let y: Vec<f64> = rows.iter().map(|row| row.ratio.ln()).collect();
            let fitted_slope = least_squares_slope(&x, &y)?;
            let predicted_slope = -id.delta(s, r);
            Ok(ScalingReport {
                family: id,
                s,
                r,
                rows,
                fitted_slope,
                predicted_slope,
                pass: (fitted_slope - predicted_slope).abs() <= SLOPE_TOLERANCE,
            })
        })
        .collect()
}

pub fn fit_scaling(id: FamilyId, s: f64, r: f64, ls: &[f64], delta0: f64) -> Result<ScalingReport> {
    Ok(fit_scaling_batch(id, &[(s, r)], ls, delta0)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionVerdict {
    Inside,
    Boundary,
    Outside,
}

impl fmt::Display for RegionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionVerdict::Inside => "inside",
            RegionVerdict::Boundary => "boundary",
            RegionVerdict::Outside => "outside",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub verdict: RegionVerdict,
    /// `(constraint, margin)` for every constraint; a margin is positive when strictly satisfied.
    pub margins: Vec<(String, f64)>,
    /// Constraints violated or met with equality.
    pub violated: Vec<String>,
}

pub const REGION_TOLERANCE: f64 = 1e-9;

/// Position of `(s, r)` relative to the well-posedness region
/// `s > -1/5`, `max(1/4 - s/2, 1/4 + s/2, s) < r < min(3/4 + 2s, 3/4 + 3s/2, 1 + s)`.
pub fn region_check(s: f64, r: f64) -> RegionReport {
    let margins: Vec<(String, f64)> = vec![
        ("s > -1/5".into(), s + 0.2),
        ("r > 1/4 - s/2".into(), r - (0.25 - s / 2.0)),
        ("r > 1/4 + s/2".into(), r - (0.25 + s / 2.0)),
        ("r > s".into(), r - s),
        ("r < 3/4 + 2s".into(), 0.75 + 2.0 * s - r),
        ("r < 3/4 + 3s/2".into(), 0.75 + 1.5 * s - r),
        ("r < 1 + s".into(), 1.0 + s - r),
    ];
    let violated: Vec<String> =
        margins.iter().filter(|(_, m)| *m <= REGION_TOLERANCE).map(|(n, _)| n.clone()).collect();
    let verdict = if margins.iter().any(|(_, m)| *m < -REGION_TOLERANCE) {
        RegionVerdict::Outside
    } else if violated.is_empty() {
        RegionVerdict::Inside
    } else {
        RegionVerdict::Boundary
    };
    RegionReport { verdict, margins, violated }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub samples: usize,
    /// Violations of `rho_+- <= 2 min(|eta|, |eta - xi|)`.
    pub violations_min: usize,
    /// Violations of `rho_+- <= |A| + |B| + |C_+-|`.
    pub violations_abc: usize,
    /// Range of `theta_+^2 / (|xi| rho_+ / (|eta| |eta - xi|))`.
    pub theta_plus: (f64, f64),
    /// Range of `theta_-^2 / (rho_- / min(|eta|, |eta - xi|))`.
    pub theta_minus: (f64, f64),
    /// Samples whose angle was too small for a stable quotient.
    pub skipped: usize,
}

impl WeightReport {
    pub fn pass(&self) -> bool {
        let within = |r: (f64, f64)| r.0 >= 0.125 && r.1 <= 8.0;
        self.violations_min == 0 && self.violations_abc == 0 && within(self.theta_plus) && within(self.theta_minus)
    }
}

/// Random check of the `rho` inequalities and of the angle comparabilities.
///
/// Samples have `|eta|, |eta - xi|` log-uniform in `[1, 1000]`; a third of them
/// are nearly collinear or anti-collinear. Inequalities allow a slack of
/// `1e-12` relative to the largest magnitude involved.
pub fn verify_weight_relations(samples: usize, seed: u64) -> WeightReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = WeightReport {
        samples,
        violations_min: 0,
        violations_abc: 0,
        theta_plus: (f64::INFINITY, 0.0),
        theta_minus: (f64::INFINITY, 0.0),
        skipped: 0,
    };
    let push = |r: &mut (f64, f64), v: f64| {
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
    };
    for k in 0..samples {
        let a = 10f64.powf(rng.gen_range(0.0..3.0));
        let b = 10f64.powf(rng.gen_range(0.0..3.0));
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let rel = match k % 3 {
            0 => rng.gen_range(-PI..PI),
            1 => 10f64.powf(rng.gen_range(-5.0..0.0)) * if rng.gen::<bool>() { 1.0 } else { -1.0 },
            _ => PI + 10f64.powf(rng.gen_range(-5.0..0.0)) * if rng.gen::<bool>() { 1.0 } else { -1.0 },
        };
        let eta = [a * th.cos(), a * th.sin()];
        let zeta = [b * (th + rel).cos(), b * (th + rel).sin()];
        let xi = [eta[0] - zeta[0], eta[1] - zeta[1]];
        let scale = 4.0e3;
        let lambda = rng.gen_range(-scale..scale);
        let tau = rng.gen_range(-scale..scale);
        let w = weights_at(lambda, eta, tau, xi);
        let na = norm2(eta);
        let nb = norm2(zeta);
        let nx = norm2(xi);
        let slack = 1e-12 * (na + nb + lambda.abs() + tau.abs());
        let m = na.min(nb);
        for rho in [w.rho_plus, w.rho_minus] {
            if rho > 2.0 * m + slack {
                rep.violations_min += 1;
            }
        }
        if w.rho_plus > w.a.abs() + w.b.abs() + w.c_plus.abs() + slack {
            rep.violations_abc += 1;
        }
        if w.rho_minus > w.a.abs() + w.b.abs() + w.c_minus.abs() + slack {
            rep.violations_abc += 1;
        }
        let tp = angle(eta, zeta);
        let tm = angle(eta, [-zeta[0], -zeta[1]]);
        if tp < 1e-4 || tm < 1e-4 {
            rep.skipped += 1;
            continue;
        }
        // Closed forms avoid cancellation in rho for small angles.
        let rho_plus = 2.0 * na * nb * (1.0 - tp.cos()) / (nx + (na - nb).abs());
        let rho_minus = 2.0 * na * nb * (1.0 + tp.cos()) / (na + nb + nx);
        push(&mut rep.theta_plus, tp * tp / (nx * rho_plus / (na * nb)));
        push(&mut rep.theta_minus, tm * tm / (rho_minus / m));
    }
    rep
}

/// Multiplies a space-time field by the smooth cutoff `chi(t)` in physical time.
pub fn time_cutoff(psi: &SpinorField3) -> SpinorField3 {
    let g = *psi.grid();
    let cut = |f: &SpectralField3| {
        let p = f.to_physical();
        let v = p.values().iter().enumerate().map(|(i, z)| z * cutoff(g.t_x(i).0)).collect();
        SpectralField3::new(g, v, Basis::Physical).expect("length matches grid")
    };
    SpinorField3 { c: [cut(&psi.c[0]), cut(&psi.c[1])] }
}

/// `||chi psi||_{X^{s,b}} / ||psi||_{X^{s,b}}`.
pub fn cutoff_constant(psi: &SpinorField3, sign: Sign, s: f64, b: f64) -> Result<f64> {
    let spec = NormSpec::xsb(sign, s, b);
    let den = spinor_spacetime_norm(psi, &spec)?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator("input has zero norm".into()));
    }
    Ok(spinor_spacetime_norm(&time_cutoff(psi), &spec)? / den)
}

/// Direct and dual evaluations of the `which = A` estimate for one input pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    /// `||Pi_{s2}(phi beta Pi_{s1} psi)||_{X^{s,-1/2+2e}} / (||phi||_{H^{r,1/2+e}} ||psi||_{X^{s,1/2+e}})`.
    pub direct_ratio: f64,
    /// `|int phi <beta Pi psi, Pi psi*>| / (||phi|| ||psi|| ||psi*||_{X^{-s,1/2-2e}})` at the extremal `psi*`.
    pub paired_ratio: f64,
    /// `||<beta Pi psi, Pi psi*>||_{H^{-r,-1/2-e}} / (||psi|| ||psi*||)`; never below the direct ratio.
    pub dual_ratio: f64,
}

/// Compares the product form of the `which = A` estimate with its dual form.
/// `phi` must be real valued in physical space.
pub fn dual_form_consistency(
    psi: &SpinorField3,
    phi: &SpectralField3,
    signs: (Sign, Sign),
    s: f64,
    r: f64,
    epsilon: f64,
) -> Result<DualReport> {
    let g = *psi.grid();
    if *phi.grid() != g {
        return Err(Error::GridMismatch);
    }
    let case = EstimateCase::new(Which::A, signs, s, r, epsilon)?;
    let phys_phi = phi.to_physical();
    if phys_phi.values().iter().any(|z| z.im.abs() > 1e-12 * (1.0 + z.re.abs())) {
        return Err(Error::InvalidParameter("phi must be real valued".into()));
    }
    // F = Pi_{s2}(phi beta Pi_{s1} psi)
    let hat = psi.to_frequency();
    let mut pa = [vec![C64::default(); g.len()], vec![C64::default(); g.len()]];
    for i in 0..g.len() {
        let (_, xi) = g.tau_xi(i);
        if norm2(xi) > 0.0 {
            let p = project(signs.0, xi, &[hat.c[0].values()[i], hat.c[1].values()[i]]);
            pa[0][i] = p[0];
            pa[1][i] = p[1];
        }
    }
    let [p0, p1] = pa;
    let u0 = SpectralField3::new(g, p0, Basis::Frequency)?.to_physical();
    let u1 = SpectralField3::new(g, p1, Basis::Frequency)?.to_physical();
    let f0 = SpectralField3::new(g, (0..g.len()).map(|i| phys_phi.values()[i] * u0.values()[i]).collect(), Basis::Physical)?.to_frequency();
    let f1 = SpectralField3::new(g, (0..g.len()).map(|i| -phys_phi.values()[i] * u1.values()[i]).collect(), Basis::Physical)?.to_frequency();
    let out_spec = NormSpec::xsb(signs.1, s, -0.5 + 2.0 * epsilon);
    let mut fv = [vec![C64::default(); g.len()], vec![C64::default(); g.len()]];
    let mut star = fv.clone();
    for i in 0..g.len() {
        let (tau, xi) = g.tau_xi(i);
        if norm2(xi) == 0.0 {
            continue;
        }
        let p = project(signs.1, xi, &[f0.values()[i], f1.values()[i]]);
        let w = spacetime_weight(&out_spec, tau, xi).expect("space-time kind");
        for c in 0..2 {
            fv[c][i] = p[c];
            star[c][i] = p[c] * w * w;
        }
    }
    let [x0, x1] = fv;
    let f = SpinorField3 { c: [SpectralField3::new(g, x0, Basis::Frequency)?, SpectralField3::new(g, x1, Basis::Frequency)?] };
    let [y0, y1] = star;
    let psi_star =
        SpinorField3 { c: [SpectralField3::new(g, y0, Basis::Frequency)?, SpectralField3::new(g, y1, Basis::Frequency)?] };

    let (n1, n2) = case.input_norms();
    let phi_norm = spacetime_norm(phi, &NormSpec { kind: NormKind::WaveSobolev, s: r, b: 0.5 + epsilon, q: 2.0, r: 2.0 })?;
    let psi_norm = spinor_spacetime_norm(psi, &n1)?;
    let star_norm = spinor_spacetime_norm(&psi_star, &n2)?;
    if phi_norm == 0.0 || psi_norm == 0.0 || star_norm == 0.0 {
        return Err(Error::ZeroDenominator("an input or the product vanishes".into()));
    }
    let direct = spinor_spacetime_norm(&f, &out_spec)?;

    let n = null_form(psi, &psi_star, signs)?;
    let phat = phi.to_frequency();
    let pairing_value: C64 = n.values().iter().zip(phat.values()).map(|(a, b)| a * b.conj()).sum::<C64>() * g.cell_freq()
        / (2.0 * PI).powi(3);
    let dual = spacetime_norm(&n, &case.output_norm())?;
    Ok(DualReport {
        direct_ratio: direct / (phi_norm * psi_norm),
        paired_ratio: pairing_value.norm() / (phi_norm * psi_norm * star_norm),
        dual_ratio: dual / (psi_norm * star_norm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    fn lat() -> FrequencyLattice {
        FrequencyLattice::new([0.5, 0.25, 0.25]).unwrap()
    }

    fn random_sparse(seed: u64, n: usize, spread: i64) -> SparseSpinor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|_| {
                let k = [rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread)];
                (k, [C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))])
            })
            .collect();
        SparseSpinor3::new(lat(), entries)
    }

    #[test]
    fn aligned_eigenmodes_give_zero() {
        let l = lat();
        let k = [1, 8, 4];
        let (_, eta) = l.point(k);
        let psi = SparseSpinor3::new(l, vec![(k, eigenvector(Sign::Plus, eta).unwrap())]);
        let n = null_form_sparse(&psi, &psi, (Sign::Plus, Sign::Plus), None).unwrap();
        assert_eq!(n.entries.len(), 1);
        assert!(n.entries[0].1.norm() < 1e-15);
    }

    #[test]
    fn two_modes_match_the_pairing_oracle() {
        let l = lat();
        let (k1, k2) = ([2, 8, 4], [-1, -4, 6]);
        let (_, eta) = l.point(k1);
        let (_, zeta) = l.point(k2);
        let a = eigenvector(Sign::Plus, eta).unwrap();
        let b = eigenvector(Sign::Plus, zeta).unwrap();
        let n = null_form_sparse(
            &SparseSpinor3::new(l, vec![(k1, a)]),
            &SparseSpinor3::new(l, vec![(k2, b)]),
            (Sign::Plus, Sign::Plus),
            None,
        )
        .unwrap();
        assert_eq!(n.entries.len(), 1);
        assert_eq!(n.entries[0].0, [3, 12, -2]);
        // <beta a, b> = b^H beta a by hand
        let hand = b[0].conj() * a[0] - b[1].conj() * a[1];
        let expect = hand * l.cell() / (2.0 * PI).powi(3);
        assert!((n.entries[0].1 - expect).norm() < 1e-15);
        // Eigenproduct formula.
        let (ue, uz) = ([eta[0] / norm2(eta), eta[1] / norm2(eta)], [zeta[0] / norm2(zeta), zeta[1] / norm2(zeta)]);
        let formula = C64::new(1.0 - (ue[0] * uz[0] + ue[1] * uz[1]), ue[0] * uz[1] - ue[1] * uz[0]);
        assert!((hand - formula).norm() < 1e-14);
    }

    #[test]
    fn sparse_and_dense_null_forms_agree() {
        let g = GridSpec3::new(8, 16, 4.0 * PI, 8.0 * PI).unwrap();
        let lat = FrequencyLattice::new([g.dtau(), g.dxi(), g.dxi()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mk = || {
            let entries: Vec<([i64; 3], Spinor)> = (0..12)
                .map(|_| {
                    ([rng.gen_range(-1..=1), rng.gen_range(-3..=3), rng.gen_range(-3..=3)], [C64::new(rng.gen_range(-1.0..1.0), 0.3), C64::new(0.2, rng.gen_range(-1.0..1.0))])
                })
                .collect();
            SparseSpinor3::new(lat, entries)
        };
        let (a, b) = (mk(), mk());
        let dense = |s: &SparseSpinor3| {
            let mut c0 = vec![C64::default(); g.len()];
            let mut c1 = c0.clone();
            for (k, v) in s.entries() {
                let i = crate::grid::index_of(k[0], 8).unwrap() * 256
                    + crate::grid::index_of(k[1], 16).unwrap() * 16
                    + crate::grid::index_of(k[2], 16).unwrap();
                c0[i] = v[0];
                c1[i] = v[1];
            }
            SpinorField3 {
                c: [SpectralField3::new(g, c0, Basis::Frequency).unwrap(), SpectralField3::new(g, c1, Basis::Frequency).unwrap()],
            }
        };
        for signs in [(Sign::Plus, Sign::Plus), (Sign::Plus, Sign::Minus), (Sign::Minus, Sign::Minus)] {
            let sp = null_form_sparse(&a, &b, signs, None).unwrap();
            let dn = null_form(&dense(&a), &dense(&b), signs).unwrap();
            let back = SparseSpinor3::from_field(&dense(&a));
            assert_eq!(back.len(), a.len());
            for (k, v) in &sp.entries {
                let i = crate::grid::index_of(k[0], 8).unwrap() * 256
                    + crate::grid::index_of(k[1], 16).unwrap() * 16
                    + crate::grid::index_of(k[2], 16).unwrap();
                assert!((dn.values()[i] - v).norm() < 1e-12, "{k:?}");
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_lhs() {
        let a = random_sparse(1, 20, 4);
        let z = a.scale(C64::default());
        let case = EstimateCase::new(Which::B, (Sign::Plus, Sign::Plus), 0.0, 0.5, 0.0).unwrap();
        let outs: Vec<[i64; 3]> = (-3..=3).map(|k| [k, 1, 1]).collect();
        let n = null_form_sparse(&a, &z, case.signs, Some(&outs)).unwrap();
        assert!(n.norm(&case.output_norm()) == 0.0);
        assert!(matches!(estimate_sides_sparse(&case, &a, &z, &outs), Err(Error::ZeroDenominator(_))));
        assert!(EstimateCase::new(Which::B, case.signs, 0.0, 0.5, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn ratio_is_amplitude_invariant(seed in 0u64..200, a in 0.1f64..10.0, b in 0.1f64..10.0, ph in 0.0f64..6.3) {
            let x = random_sparse(seed, 15, 4);
            let y = random_sparse(seed + 500, 15, 4);
            let outs: Vec<[i64; 3]> = (-4..=4).flat_map(|i| (-4..=4).map(move |j| [i, j, 1 - j])).collect();
            for which in [Which::B, Which::A] {
                let case = EstimateCase::new(which, (Sign::Plus, Sign::Minus), 0.25, 0.5, 0.05).unwrap();
                let base = estimate_sides_sparse(&case, &x, &y, &outs).unwrap();
                let scaled = estimate_sides_sparse(&case, &x.scale(C64::from_polar(a, ph)), &y.scale(C64::new(b, 0.0)), &outs).unwrap();
                prop_assert!((scaled.lhs - a * b * base.lhs).abs() <= 1e-10 * (1.0 + scaled.lhs));
                prop_assert!((scaled.ratio - base.ratio).abs() <= 1e-10 * base.ratio.max(1e-300));
            }
        }

        #[test]
        fn null_form_is_bilinear(seed in 0u64..200, c in -2.0f64..2.0) {
            let x = random_sparse(seed, 10, 3);
            let x2 = random_sparse(seed + 1, 10, 3);
            let y = random_sparse(seed + 2, 10, 3);
            let mut merged: HashMap<[i64; 3], Spinor> = x.entries().iter().cloned().collect();
            for (k, v) in x2.entries() {
                let e = merged.entry(*k).or_insert([C64::default(); 2]);
                e[0] += c * v[0];
                e[1] += c * v[1];
            }
            let comb = SparseSpinor3::new(lat(), merged.into_iter().collect());
            let outs: Vec<[i64; 3]> = (-3..=3).flat_map(|i| (-3..=3).map(move |j| [i, j, 0])).collect();
            let signs = (Sign::Minus, Sign::Plus);
            let l = null_form_sparse(&comb, &y, signs, Some(&outs)).unwrap();
            let r1 = null_form_sparse(&x, &y, signs, Some(&outs)).unwrap();
            let r2 = null_form_sparse(&x2, &y, signs, Some(&outs)).unwrap();
            for i in 0..outs.len() {
                prop_assert!((l.entries[i].1 - r1.entries[i].1 - c * r2.entries[i].1).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn family_validation_and_delta() {
        assert!(CounterexampleFamily::new(FamilyId::R1, 12.0, 1.0).is_err());
        assert!(CounterexampleFamily::new(FamilyId::R1, 4.0, 1.0).is_err());
        assert!(CounterexampleFamily::new(FamilyId::R1, 16.0, 1.5).is_err());
        assert!(CounterexampleFamily::new(FamilyId::R1, 16.0, 0.0).is_err());
        assert_eq!(FamilyId::R1.delta(0.0, 0.75), 0.0);
        assert_eq!(FamilyId::R1.delta(0.0, 1.0), -0.25);
        assert_eq!(FamilyId::S.delta(-0.375, 0.5), -0.25);
        assert_eq!("s".parse::<FamilyId>().unwrap(), FamilyId::S);
        assert!("R4".parse::<FamilyId>().is_err());
    }

    #[test]
    fn r1_support_area_matches_within_a_boundary_layer() {
        let fam = CounterexampleFamily::new(FamilyId::R1, 16.0, 1.0).unwrap();
        let ce = build_counterexample(&fam).unwrap();
        let d = ce.lattice.d;
        let area = ce.a_sites.len() as f64 * d[1] * d[2];
        let (l, q) = (16.0f64, 4.0f64);
        assert!((l.powf(1.5) / 4.0 - 16.0).abs() < 1e-12);
        assert!(area >= (l / 2.0 - d[1]) * (q / 2.0 - d[2]) && area <= (l / 2.0 + d[1]) * (q / 2.0 + d[2]));
        assert_eq!(ce.a_sites.len(), ce.c_sites.len());
    }

    #[test]
    fn r3_and_s_sets_have_unit_areas() {
        for id in [FamilyId::R3, FamilyId::S] {
            for l in [8.0, 64.0] {
                let (a, b, c) = CounterexampleFamily::new(id, l, 1.0).unwrap().sets();
                for rect in [a, b, c] {
                    assert!(rect.area() >= 0.25 && rect.area() <= 4.0);
                }
            }
        }
    }

    #[test]
    fn abc_property_in_the_continuum_and_on_the_lattice() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for id in FamilyId::ALL {
            for l in [8.0, 16.0, 32.0, 64.0] {
                let fam = CounterexampleFamily::new(id, l, 1.0).unwrap();
                let (a, b, c) = fam.sets();
                for _ in 0..10_000 {
                    let pick = |r: &Rect, rng: &mut ChaCha8Rng| {
                        [r.c[0] + r.h[0] * rng.gen_range(-1.0..=1.0), r.c[1] + r.h[1] * rng.gen_range(-1.0..=1.0)]
                    };
                    let eta = pick(&a, &mut rng);
                    let xi = pick(&c, &mut rng);
                    assert!(b.contains([eta[0] - xi[0], eta[1] - xi[1]]), "{id} L={l}");
                }
                let ce = build_counterexample(&fam).unwrap();
                let bset: std::collections::HashSet<[i64; 2]> = ce.b_sites.iter().copied().collect();
                for p in &ce.a_sites {
                    for q in &ce.c_sites {
                        assert!(bset.contains(&[p[0] - q[0], p[1] - q[1]]));
                    }
                }
            }
        }
    }

    #[test]
    fn every_needed_partner_is_in_the_support() {
        for id in FamilyId::ALL {
            let ce = build_counterexample(&CounterexampleFamily::new(id, 16.0, 1.0).unwrap()).unwrap();
            for o in ce.outputs.iter().step_by(7) {
                for (p, _) in ce.psi.entries().iter().step_by(5) {
                    assert!(ce.psi2.get([p[0] - o[0], p[1] - o[1], p[2] - o[2]]).is_some(), "{id}");
                }
            }
        }
    }

    #[test]
    fn orientation_is_constant_for_r1_and_r3() {
        for id in [FamilyId::R1, FamilyId::R3] {
            for l in [8.0, 64.0] {
                let ce = build_counterexample(&CounterexampleFamily::new(id, l, 1.0).unwrap()).unwrap();
                let (p, n, z) = ce.orientation_counts().unwrap();
                assert!(z == 0 && (p == 0 || n == 0), "{id} L={l}: {p} {n} {z}");
            }
        }
        // The R2 set A straddles the xi_1 axis, so both orientations occur there.
        let ce = build_counterexample(&CounterexampleFamily::new(FamilyId::R2, 16.0, 1.0).unwrap()).unwrap();
        let (p, n, _) = ce.orientation_counts().unwrap();
        assert!(p > 0 && n > 0);
    }

    #[test]
    fn grid_check_reports_requirements() {
        let ce = build_counterexample(&CounterexampleFamily::new(FamilyId::R3, 8.0, 1.0).unwrap()).unwrap();
        let small = GridSpec3::new(16, 16, 16.0 * PI, 16.0 * PI).unwrap();
        assert!(matches!(ce.check_grid(&small), Err(Error::GridTooSmall(_))));
        let wrong = GridSpec3::new(64, 256, 10.0, 16.0 * PI).unwrap();
        assert!(matches!(ce.check_grid(&wrong), Err(Error::GridTooSmall(_))));
        let ok = GridSpec3::new(512, 256, 16.0 * PI, 16.0 * PI).unwrap();
        ce.check_grid(&ok).unwrap();
    }

    #[test]
    fn slopes_rise_with_r() {
        let reps = fit_scaling_batch(FamilyId::R3, &[(0.5, 1.0), (0.5, 1.5), (0.5, 2.0)], &[8.0, 16.0, 32.0], 1.0).unwrap();
        let sl: Vec<f64> = reps.iter().map(|r| r.fitted_slope).collect();
        assert!(sl[0] < sl[1] && sl[1] < sl[2], "{sl:?}");
        for w in reps.windows(2) {
            assert!((w[1].fitted_slope - w[0].fitted_slope - 0.5).abs() < 0.1);
        }
        assert!(fit_scaling(FamilyId::R3, 0.0, 1.0, &[8.0, 16.0], 1.0).is_err());
        assert!(fit_scaling(FamilyId::R3, 0.0, 1.0, &[8.0, 16.0, 64.0], 1.0).is_err());
    }

    #[test]
    fn least_squares_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((least_squares_slope(&x, &y).unwrap() - 2.5).abs() < 1e-14);
        assert!(least_squares_slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn region_examples() {
        assert_eq!(region_check(0.0, 0.5).verdict, RegionVerdict::Inside);
        assert_eq!(region_check(0.5, 1.0).verdict, RegionVerdict::Inside);
        assert_ne!(region_check(-0.2, 0.3).verdict, RegionVerdict::Inside);
        let r = region_check(1.0, 2.0 + 1e-3);
        assert_eq!(r.verdict, RegionVerdict::Outside);
        assert!(r.violated.iter().any(|c| c == "r < 1 + s"));
        assert_eq!(region_check(0.0, 0.75).verdict, RegionVerdict::Boundary);
        assert_eq!(region_check(0.0, 0.75 + 1e-10).verdict, RegionVerdict::Boundary);
    }

    #[test]
    fn weight_relations_small_run() {
        let rep = verify_weight_relations(30_000, 9);
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.theta_plus.0 >= 1.0 - 1e-9 && rep.theta_plus.1 <= PI * PI / 2.0 + 1e-9);
        assert!(rep.theta_minus.0 >= 0.5 - 1e-9 && rep.theta_minus.1 <= PI * PI / 2.0 + 1e-9);
    }

    #[test]
    fn collinear_weights_vanish_together() {
        let eta = [3.0, 0.0];
        let xi = [1.0, 0.0];
        let w = weights_at(0.0, eta, 0.0, xi);
        assert!(angle(eta, [2.0, 0.0]) == 0.0 && w.rho_plus.abs() < 1e-15);
        let xi = [5.0, 0.0];
        let w = weights_at(0.0, eta, 0.0, xi);
        assert!(angle(eta, [-(eta[0] - xi[0]), 0.0]) == 0.0 && w.rho_minus.abs() < 1e-15);
    }

    fn smooth_spinor(g: GridSpec3, seed: u64) -> SpinorField3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| {
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            SpectralField3::from_frequency_fn(g, move |tau, xi| {
                let r = tau * tau + xi[0] * xi[0] + xi[1] * xi[1];
                C64::new(a, b) * (-r / 4.0).exp() * C64::from_polar(1.0, xi[0] + 2.0 * tau)
            })
        };
        SpinorField3 { c: [mk(&mut rng), mk(&mut rng)] }
    }

    #[test]
    fn cutoff_profile_and_idempotence() {
        let g = GridSpec3::new(32, 4, 8.0, 4.0).unwrap();
        let one = SpectralField3::from_physical_fn(g, |_, _| C64::new(1.0, 0.0));
        let out = time_cutoff(&SpinorField3 { c: [one.clone(), one] });
        let p = out.c[0].to_physical();
        for i in 0..g.len() {
            assert!((p.values()[i].re - cutoff(g.t_x(i).0)).abs() < 1e-12);
        }
        let twice = time_cutoff(&out).c[1].to_physical();
        let inside = SpectralField3::from_physical_fn(g, |t, _| C64::new(if t.abs() <= 1.0 { t.cos() } else { 0.0 }, 0.0));
        let kept = time_cutoff(&SpinorField3 { c: [inside.clone(), inside.clone()] }).c[0].to_physical();
        assert!(kept.values().iter().zip(inside.to_physical().values()).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(twice.values().iter().all(|z| z.re <= 1.0 + 1e-12));
    }

    #[test]
    fn cutoff_constant_is_moderate() {
        let g = GridSpec3::new(32, 16, 16.0, 4.0 * PI).unwrap();
        for seed in 0..3 {
            let c = cutoff_constant(&smooth_spinor(g, seed), Sign::Plus, 0.0, 0.55).unwrap();
            assert!(c > 0.0 && c < 3.0, "{c}");
        }
    }

    #[test]
    fn dual_form_matches_product_form() {
        let g = GridSpec3::new(16, 16, 8.0, 4.0 * PI).unwrap();
        let psi = smooth_spinor(g, 3);
        let phi = SpectralField3::from_physical_fn(g, |t, x| C64::new((-(t * t) - 0.5 * (x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + 0.3 * x[1]), 0.0));
        for signs in [(Sign::Plus, Sign::Plus), (Sign::Plus, Sign::Minus)] {
            let rep = dual_form_consistency(&psi, &phi, signs, 0.25, 0.5, 0.05).unwrap();
            assert!((rep.paired_ratio / rep.direct_ratio - 1.0).abs() < 1e-9, "{rep:?}");
            assert!(rep.dual_ratio >= rep.direct_ratio * (1.0 - 1e-9));
        }
        let complex = phi.map(|z| z * C64::new(0.0, 1.0));
        assert!(dual_form_consistency(&psi, &complex, (Sign::Plus, Sign::Plus), 0.0, 0.5, 0.05).is_err());
    }
}
