//! 2x2 Dirac matrices, half-wave projections, their eigenvectors and the null
//! symbol.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm2, C64};

pub type Spinor = [C64; 2];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Choice of half-wave, `+` or `-`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" | "plus" | "+1" | "1" => Ok(Sign::Plus),
            "-" | "minus" | "-1" => Ok(Sign::Minus),
            other => Err(Error::InvalidParameter(format!("unknown sign {other:?}"))),
        }
    }
}

/// Dense complex 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub fn sigma1() -> Self {
        Mat2([[ZERO, ONE], [ONE, ZERO]])
    }
    pub fn sigma2() -> Self {
        Mat2([[ZERO, -I], [I, ZERO]])
    }
    pub fn sigma3() -> Self {
        Mat2([[ONE, ZERO], [ZERO, -ONE]])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        self.zip(o, |a, b| a + b)
    }
    pub fn sub(&self, o: &Mat2) -> Mat2 {
        self.zip(o, |a, b| a - b)
    }
    pub fn scale(&self, s: C64) -> Mat2 {
        self.zip(self, |a, _| a * s)
    }

    fn zip(&self, o: &Mat2, f: impl Fn(C64, C64) -> C64) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = f(self.0[i][j], o.0[i][j]);
            }
        }
        Mat2(out)
    }

    pub fn adjoint(&self) -> Mat2 {
        let a = &self.0;
        Mat2([[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]])
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let a = &self.0;
        [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value, from the closed-form eigenvalues of `A^* A`.
    pub fn op_norm(&self) -> f64 {
        let fro2: f64 = self.0.iter().flatten().map(|v| v.norm_sqr()).sum();
        let det = self.det().norm();
        // sigma_max^2 = (|A|_F^2 + sqrt(|A|_F^4 - 4 |det A|^2)) / 2
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
        ((fro2 + disc) / 2.0).sqrt()
    }
}

/// `<z, w> = w^* z`.
#[inline]
pub fn pairing(z: &Spinor, w: &Spinor) -> C64 {
    z[0] * w[0].conj() + z[1] * w[1].conj()
}

/// `beta z` in the default representation, `beta = sigma_3`.
#[inline]
pub fn beta_apply(z: &Spinor) -> Spinor {
    [z[0], -z[1]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CliffordReport {
    pub pass: bool,
    pub max_violation: f64,
    /// Human-readable name of the worst identity.
    pub worst: &'static str,
}

/// Matrices `alpha^1, alpha^2, beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracRep {
    pub alpha1: Mat2,
    pub alpha2: Mat2,
    pub beta: Mat2,
}

impl Default for DiracRep {
    fn default() -> Self {
        Self::pauli()
    }
}

impl DiracRep {
    pub fn pauli() -> Self {
        Self { alpha1: Mat2::sigma1(), alpha2: Mat2::sigma2(), beta: Mat2::sigma3() }
    }

    /// Checks hermiticity, involutivity and the anticommutation relations.
    pub fn check_clifford(&self) -> CliffordReport {
        let id = Mat2::IDENTITY;
        let two = C64::new(2.0, 0.0);
        let mats = [("alpha1", &self.alpha1), ("alpha2", &self.alpha2), ("beta", &self.beta)];
        let mut worst = ("none", 0.0f64);
        let mut record = |name: &'static str, m: Mat2| {
            let v = m.max_abs();
            if v > worst.1 || v.is_nan() {
                worst = (name, v);
            }
        };
        for (name, m) in mats {
            record(
                match name {
                    "alpha1" => "alpha1 hermitian",
                    "alpha2" => "alpha2 hermitian",
                    _ => "beta hermitian",
                },
                m.sub(&m.adjoint()),
            );
            record(
                match name {
                    "alpha1" => "alpha1 squared = I",
                    "alpha2" => "alpha2 squared = I",
                    _ => "beta squared = I",
                },
                m.mul(m).sub(&id),
            );
        }
        let anti = |a: &Mat2, b: &Mat2| a.mul(b).add(&b.mul(a));
        record("alpha1 beta + beta alpha1 = 0", anti(&self.alpha1, &self.beta));
        record("alpha2 beta + beta alpha2 = 0", anti(&self.alpha2, &self.beta));
        record("alpha1 alpha2 + alpha2 alpha1 = 0", anti(&self.alpha1, &self.alpha2));
        record("alpha1 alpha1 + alpha1 alpha1 = 2I", anti(&self.alpha1, &self.alpha1).sub(&id.scale(two)));
        record("alpha2 alpha2 + alpha2 alpha2 = 2I", anti(&self.alpha2, &self.alpha2).sub(&id.scale(two)));
        CliffordReport { pass: worst.1 <= 1e-12, max_violation: worst.1, worst: worst.0 }
    }

    /// `xi . alpha`.
    pub fn xi_alpha(&self, xi: [f64; 2]) -> Mat2 {
        self.alpha1.scale(C64::new(xi[0], 0.0)).add(&self.alpha2.scale(C64::new(xi[1], 0.0)))
    }

    /// `(I +- xi^ . alpha) / 2`.
    pub fn projector(&self, sign: Sign, xi: [f64; 2]) -> Result<Mat2> {
        let r = norm2(xi);
        if r == 0.0 {
            return Err(Error::ZeroVector);
        }
        let dir = [xi[0] / r, xi[1] / r];
        Ok(Mat2::IDENTITY
            .add(&self.xi_alpha(dir).scale(C64::new(sign.value(), 0.0)))
            .scale(C64::new(0.5, 0.0)))
    }
}

/// Half-wave projection in the default representation.
pub fn projector(sign: Sign, xi: [f64; 2]) -> Result<Mat2> {
    DiracRep::pauli().projector(sign, xi)
}

/// Projection of a single spinor without forming the matrix. `xi` must be nonzero.
#[inline]
pub fn project(sign: Sign, xi: [f64; 2], v: &Spinor) -> Spinor {
    let r = norm2(xi);
    let s = sign.value();
    let e = C64::new(xi[0] / r, xi[1] / r);
    // xi^.alpha = [[0, e^*], [e, 0]] with e = xi1^ + i xi2^
    [0.5 * (v[0] + s * e.conj() * v[1]), 0.5 * (v[1] + s * e * v[0])]
}

/// `v_+(xi) = (1, xi1^ + i xi2^)`, `v_-(xi) = v_+(-xi)`.
pub fn eigenvector(sign: Sign, xi: [f64; 2]) -> Result<Spinor> {
    let r = norm2(xi);
    if r == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = sign.value();
    Ok([ONE, C64::new(s * xi[0] / r, s * xi[1] / r)])
}

/// Unsigned angle between two nonzero vectors, in `[0, pi]`.
pub fn angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    cross(a, b).abs().atan2(dot(a, b))
}

/// Orientation of the ordered pair `(a, b)`: `+1` counter-clockwise, `-1`
/// clockwise, `0` for parallel vectors.
pub fn orientation(a: [f64; 2], b: [f64; 2]) -> f64 {
    let c = cross(a, b);
    if c > 0.0 {
        1.0
    } else if c < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullSymbolValue {
    pub matrix: Mat2,
    pub op_norm: f64,
    /// `angle(sign1 eta, sign2 zeta)`.
    pub angle: f64,
}

/// `Pi_{sign2}(zeta) beta Pi_{sign1}(eta)`.
pub fn null_symbol(sign1: Sign, sign2: Sign, eta: [f64; 2], zeta: [f64; 2]) -> Result<NullSymbolValue> {
    let rep = DiracRep::pauli();
    let matrix = rep.projector(sign2, zeta)?.mul(&rep.beta).mul(&rep.projector(sign1, eta)?);
    let s1 = sign1.value();
    let s2 = sign2.value();
    Ok(NullSymbolValue {
        op_norm: matrix.op_norm(),
        angle: angle([s1 * eta[0], s1 * eta[1]], [s2 * zeta[0], s2 * zeta[1]]),
        matrix,
    })
}

/// Outcome of [`algebra_suite`]. Every `max_*` field is an absolute deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub samples: usize,
    pub clifford: CliffordReport,
    /// Idempotence, hermiticity and complementarity of the two projections.
    pub max_projector_defect: f64,
    /// `max(op_norm - angle)`, nonpositive when the null bound holds.
    pub max_bound_excess: f64,
    /// `max |op_norm - sin(angle / 2)|` over all four sign pairs.
    pub max_sine_law_error: f64,
    /// `max | |Im <beta v_+(eta), v_+(eta - xi)>| - sin theta_+ |`.
    pub max_imag_law_error: f64,
    pub imag_sign_violations: usize,
    /// Samples with some deviation above `tol`.
    pub violations: usize,
    pub tol: f64,
}

impl AlgebraReport {
    pub fn pass(&self) -> bool {
        self.clifford.pass && self.violations == 0 && self.imag_sign_violations == 0
    }

    pub fn first_failure(&self) -> Option<String> {
        if !self.clifford.pass {
            return Some(format!("{} (violation {:e})", self.clifford.worst, self.clifford.max_violation));
        }
        let checks = [
            ("projector identities", self.max_projector_defect),
            ("null bound op_norm <= angle", self.max_bound_excess),
            ("op_norm = sin(angle/2)", self.max_sine_law_error),
            ("imaginary part law", self.max_imag_law_error),
        ];
        checks
            .iter()
            .find(|(_, v)| !(*v <= self.tol))
            .map(|(name, v)| format!("{name} (deviation {v:e})"))
            .or_else(|| (self.imag_sign_violations > 0).then(|| "imaginary part orientation".to_string()))
    }
}

fn random_vec(rng: &mut impl rand::Rng) -> [f64; 2] {
    loop {
        let v = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        if norm2(v) > 1e-3 {
            return v;
        }
    }
}

/// Random-sample check of the matrix identities, the projections, the null
/// symbol bound and its exact sine law, and the eigenvector imaginary-part law.
pub fn algebra_suite(rep: &DiracRep, samples: usize, seed: u64, tol: f64) -> AlgebraReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let clifford = rep.check_clifford();
    let mut out = AlgebraReport {
        samples,
        clifford,
        max_projector_defect: 0.0,
        max_bound_excess: f64::NEG_INFINITY,
        max_sine_law_error: 0.0,
        max_imag_law_error: 0.0,
        imag_sign_violations: 0,
        violations: 0,
        tol,
    };
    let signs = [Sign::Plus, Sign::Minus];
    for _ in 0..samples {
        let eta = random_vec(&mut rng);
        let zeta = random_vec(&mut rng);
        let mut bad = false;
        let mut worse = |slot: &mut f64, v: f64| {
            if v > *slot || v.is_nan() {
                *slot = v;
            }
            if !(v <= tol) {
                bad = true;
            }
        };

        let pp = rep.projector(Sign::Plus, eta).expect("nonzero");
        let pm = rep.projector(Sign::Minus, eta).expect("nonzero");
        let defect = [
            pp.mul(&pp).sub(&pp).max_abs(),
            pm.mul(&pm).sub(&pm).max_abs(),
            pp.sub(&pp.adjoint()).max_abs(),
            pp.add(&pm).sub(&Mat2::IDENTITY).max_abs(),
            pp.mul(&pm).max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worse(&mut out.max_projector_defect, defect);

        for s1 in signs {
            for s2 in signs {
                let m = rep.projector(s2, zeta).expect("nonzero").mul(&rep.beta).mul(&rep.projector(s1, eta).expect("nonzero"));
                let a = angle([s1.value() * eta[0], s1.value() * eta[1]], [s2.value() * zeta[0], s2.value() * zeta[1]]);
                let n = m.op_norm();
                worse(&mut out.max_bound_excess, n - a);
                worse(&mut out.max_sine_law_error, (n - (a / 2.0).sin()).abs());
            }
        }

        let diff = [eta[0] - zeta[0], eta[1] - zeta[1]];
        if norm2(diff) > 1e-3 {
            let v1 = eigenvector(Sign::Plus, eta).expect("nonzero");
            let v2 = eigenvector(Sign::Plus, diff).expect("nonzero");
            let im = pairing(&beta_apply(&v1), &v2).im;
            let theta = angle(eta, diff);
            worse(&mut out.max_imag_law_error, (im.abs() - theta.sin()).abs());
            let o = orientation(eta, diff);
            if theta.sin() > 1e-9 && im.signum() != o {
                out.imag_sign_violations += 1;
            }
        }
        if bad {
            out.violations += 1;
        }
    }
    out
}
