use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;

use dkglab::dirac::{algebra_suite, DiracRep, Mat2, Sign};
use dkglab::grid::{GridSpec2, C64};
use dkglab::harness::{fit_scaling_batch, region_check, FamilyId};
use dkglab::norms::sobolev_norm;
use dkglab::report::{scaling_csv, trajectory_csv, write_snapshot, CsvTable};
use dkglab::solver::{
    charge, first_iterate, picard_differences, picard_iterates, projection_defect, rough_data,
    solve_with, spinor_sobolev_norm, InitialData, SolverConfig, TrajectoryRow,
};
use dkglab::waves::{
    dilated_annulus_data, hh_scan, improved_square_strichartz_ratios, square_bump_data, strichartz_ratio,
    unit_box_data, HhExponents, MuSquare, StrichartzCase,
};

use crate::params::{usage, Params};
use crate::run::RunDir;

pub struct Ctx {
    pub out: PathBuf,
    pub label: Option<String>,
    pub seed: u64,
}

impl Ctx {
    fn start(&self, command: &str, p: &Params, grid: Option<GridSpec2>) -> Result<RunDir> {
        let dir = RunDir::create(&self.out, command, self.label.as_deref())?;
        let grid = grid.map(|g| serde_json::to_value(g).expect("grid serializes"));
        dir.write_manifest(command, p, self.seed, grid)?;
        Ok(dir)
    }
}

pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub dir: Option<PathBuf>,
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn grid(p: &Params, n: &str, box_len: &str) -> Result<GridSpec2> {
    let n = p.count("n", n)?;
    let b = p.number("box", box_len)?;
    GridSpec2::new(n, b).map_err(|e| usage(e.to_string()))
}

fn matrix(name: &str) -> Result<Mat2> {
    let (neg, name) = match name.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let m = match name {
        "I" | "id" => Mat2::IDENTITY,
        "sigma1" | "s1" | "x" => Mat2::sigma1(),
        "sigma2" | "s2" | "y" => Mat2::sigma2(),
        "sigma3" | "s3" | "z" => Mat2::sigma3(),
        other => return Err(usage(format!("unknown matrix {other:?}"))),
    };
    Ok(if neg { m.scale(C64::new(-1.0, 0.0)) } else { m })
}

/// `pauli`, or `;`-separated overrides such as `beta=I;alpha2=sigma3`.
pub fn parse_rep(spec: &str) -> Result<DiracRep> {
    let mut rep = DiracRep::pauli();
    if spec == "pauli" {
        return Ok(rep);
    }
    for item in spec.split([';', ',']) {
        let (k, v) = item.split_once('=').ok_or_else(|| usage(format!("bad representation entry {item:?}")))?;
        let m = matrix(v.trim())?;
        match k.trim() {
            "alpha1" => rep.alpha1 = m,
            "alpha2" => rep.alpha2 = m,
            "beta" => rep.beta = m,
            other => return Err(usage(format!("unknown Dirac matrix {other:?}"))),
        }
    }
    Ok(rep)
}

pub const VERIFY_ALGEBRA_KEYS: &[&str] = &["samples", "rep", "tol"];

pub fn verify_algebra(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let samples = p.count("samples", "100000")?;
    let rep = parse_rep(&p.string("rep", "pauli"))?;
    let tol = p.number("tol", "1e-12")?;
    let dir = ctx.start("verify-algebra", p, None)?;
    let report = algebra_suite(&rep, samples, ctx.seed, tol);
    dir.write("algebra.json", serde_json::to_string_pretty(&report)?)?;
    let summary = match report.first_failure() {
        None => format!("all identities hold on {samples} samples"),
        Some(f) => format!("first failing identity: {f}"),
    };
    Ok(Outcome { pass: report.pass(), summary, dir: Some(dir.path) })
}

pub const SHARPNESS_KEYS: &[&str] = &["family", "s", "r", "L", "delta0"];

pub fn sharpness(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let families: Vec<FamilyId> = match p.string("family", "R1").as_str() {
        "all" => FamilyId::ALL.to_vec(),
        list => list.split(',').map(|f| f.trim().parse().map_err(|e: dkglab::Error| usage(e.to_string()))).collect::<Result<_>>()?,
    };
    let s = p.number("s", "0")?;
    let r = p.number("r", "3/4")?;
    let ls = p.numbers("L", "8,16,32,64")?;
    let delta0 = p.number("delta0", "1")?;
    let dir = ctx.start("sharpness", p, None)?;
    let reports: Vec<_> = families
        .par_iter()
        .map(|&id| fit_scaling_batch(id, &[(s, r)], &ls, delta0).map(|mut v| v.remove(0)))
        .collect::<dkglab::Result<_>>()?;
    dir.write("scaling.csv", scaling_csv(&reports))?;
    dir.write("scaling.json", serde_json::to_string_pretty(&reports)?)?;
    let summary = reports
        .iter()
        .map(|r| format!("{} slope {:.3} predicted {:.3} {}", r.family, r.fitted_slope, r.predicted_slope, if r.pass { "ok" } else { "MISMATCH" }))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome { pass: reports.iter().all(|r| r.pass), summary, dir: Some(dir.path) })
}

pub const STRICHARTZ_KEYS: &[&str] =
    &["kind", "q", "s1", "s2", "s3", "signs", "lambdas", "data", "n", "box", "window", "lambda", "mus", "phases"];

fn parse_signs(s: &str) -> Result<(Sign, Sign)> {
    let c: Vec<char> = s.chars().collect();
    if c.len() != 2 {
        return Err(usage(format!("signs must look like ++ or +-, got {s:?}")));
    }
    let one = |ch: char| ch.to_string().parse::<Sign>().map_err(|e| usage(e.to_string()));
    Ok((one(c[0])?, one(c[1])?))
}

pub fn strichartz(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    match p.string("kind", "bilinear").as_str() {
        "bilinear" => bilinear_strichartz(p, ctx),
        "square" => square_strichartz(p, ctx),
        other => Err(usage(format!("kind must be bilinear or square, got {other:?}"))),
    }
}

fn bilinear_strichartz(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let case = StrichartzCase {
        q: p.number("q", "4")?,
        s1: p.number("s1", "3/8")?,
        s2: p.number("s2", "3/8")?,
        s3: p.number("s3", "0")?,
        signs: parse_signs(&p.string("signs", "++"))?,
    };
    let lambdas = p.numbers("lambdas", "2,4,8")?;
    let data = p.string("data", "annulus");
    if data != "annulus" && data != "boxes" {
        return Err(usage(format!("data must be annulus or boxes, got {data:?}")));
    }
    let g = grid(p, "192", "16")?;
    let window = p.number("window", "1")?;
    let dir = ctx.start("strichartz", p, Some(g))?;
    let mut table = CsvTable::new(&["lambda", "lhs", "rhs", "ratio"]);
    let mut ratios = Vec::new();
    for &l in &lambdas {
        let (f, h) = if data == "annulus" {
            let f = dilated_annulus_data(&g, l);
            (f.clone(), f)
        } else {
            (unit_box_data(&g, [l, 0.0]), unit_box_data(&g, [-l, 2.0]))
        };
        let parts = strichartz_ratio(&case, &f, &h, window)?;
        ratios.push(parts.ratio);
        table.push(vec![l.to_string(), parts.lhs.to_string(), parts.rhs.to_string(), parts.ratio.to_string()])?;
    }
    dir.write("strichartz.csv", table.render())?;
    let admissible = case.admissible();
    let (pass, summary) = if admissible {
        let s = spread(&ratios);
        (s <= 1.25, format!("admissible exponents: max/min ratio {s:.3} (bounded if <= 1.25)"))
    } else {
        let monotone = ratios.windows(2).all(|w| w[1] > w[0]);
        (monotone, format!("violating exponents: ratios {} with lambda", if monotone { "grow" } else { "do not grow monotonically" }))
    };
    Ok(Outcome { pass, summary, dir: Some(dir.path) })
}

fn square_strichartz(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let lambda = p.number("lambda", "32")?;
    let mus = p.numbers("mus", "2,4,8,16,32")?;
    let q = p.number("q", "8")?;
    let random = match p.string("phases", "random").as_str() {
        "random" => true,
        "coherent" => false,
        other => return Err(usage(format!("phases must be random or coherent, got {other:?}"))),
    };
    let g = grid(p, "320", "4pi")?;
    let dir = ctx.start("strichartz", p, Some(g))?;
    let mut table = CsvTable::new(&["mu", "q", "lhs", "rhs", "ratio"]);
    let mut finite = Vec::new();
    let mut sup: f64 = 0.0;
    for &mu in &mus {
        let sq = MuSquare { mu, j: (1.25 * lambda / mu).floor() as i64, k: 0 };
        let f = square_bump_data(&g, lambda, sq, random.then_some(ctx.seed))?;
        let parts = improved_square_strichartz_ratios(&f, lambda, sq, &[q, f64::INFINITY])?;
        finite.push(parts[0].ratio);
        sup = sup.max(parts[1].ratio);
        for (qq, r) in [q, f64::INFINITY].iter().zip(&parts) {
            table.push(vec![mu.to_string(), qq.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.ratio.to_string()])?;
        }
    }
    dir.write("square_strichartz.csv", table.render())?;
    let s = spread(&finite);
    Ok(Outcome {
        pass: s <= 2.0 && sup <= 1.05,
        summary: format!("q={q} max/min ratio {s:.3} (stable if <= 2); largest q=inf ratio {sup:.3} (<= 1.05)"),
        dir: Some(dir.path),
    })
}

pub const HH_SCAN_KEYS: &[&str] = &["s1", "s2", "s3", "lambdas", "aperture", "sign"];

pub fn hh(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let ex = HhExponents { s1: p.number("s1", "1/8")?, s2: p.number("s2", "1/8")?, s3: p.number("s3", "1/4")? };
    let lambdas = p.numbers("lambdas", "4,8,16,32,64")?;
    let aperture = p.number("aperture", "1/64")?;
    let signs = match p.string("sign", "both").as_str() {
        "both" => vec![Sign::Plus, Sign::Minus],
        "same" => vec![Sign::Plus],
        "opposite" => vec![Sign::Minus],
        other => return Err(usage(format!("sign must be same, opposite or both, got {other:?}"))),
    };
    let dir = ctx.start("hh-scan", p, None)?;
    let scans: Vec<_> = signs.par_iter().map(|&s| hh_scan(&lambdas, s, ex, aperture)).collect::<dkglab::Result<_>>()?;
    let mut table = CsvTable::new(&["sign", "lambda", "lhs", "rhs", "ratio"]);
    let mut pass = true;
    let mut lines = Vec::new();
    for scan in &scans {
        let ratios: Vec<f64> = scan.iter().map(|pt| pt.parts.ratio).collect();
        for pt in scan {
            let sign = if pt.sign == Sign::Plus { "same" } else { "opposite" };
            table.push(vec![
                sign.into(),
                pt.lambda.to_string(),
                pt.parts.lhs.to_string(),
                pt.parts.rhs.to_string(),
                pt.parts.ratio.to_string(),
            ])?;
        }
        if scan[0].sign == Sign::Plus {
            let s = spread(&ratios);
            pass &= s <= 2.0;
            lines.push(format!("same sign: max/min {s:.3} (bounded if <= 2)"));
        } else {
            let growth = ratios[ratios.len() - 1] / ratios[0];
            pass &= growth >= 2.0;
            lines.push(format!("opposite sign: growth {growth:.2} (>= 2 expected)"));
        }
    }
    dir.write("hh_scan.csv", table.render())?;
    Ok(Outcome { pass, summary: lines.join("\n"), dir: Some(dir.path) })
}

fn data(p: &Params, g: GridSpec2, seed: u64, default_kind: &str, default_amp: &str) -> Result<InitialData> {
    let kind = p.string("data", default_kind);
    let amp = p.number("amp", default_amp)?;
    match kind.as_str() {
        "gaussian" => Ok(InitialData::gaussian(g, amp)),
        "rough" => Ok(InitialData::rough(g, amp, p.number("psi_s", "1/4")?, p.number("phi_r", "3/4")?, seed)),
        other => Err(usage(format!("data must be gaussian or rough, got {other:?}"))),
    }
}

pub const SOLVE_KEYS: &[&str] =
    &["n", "box", "dt", "T", "data", "amp", "psi_s", "phi_r", "s", "r", "record_every", "drift_tol", "nonlinear", "dealias"];

pub fn solve(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let g = grid(p, "128", "36")?;
    let d = data(p, g, ctx.seed, "gaussian", "1")?;
    let mut cfg = SolverConfig::new(g, p.number("dt", "0.01")?, p.number("T", "1")?);
    cfg.seed = ctx.seed;
    cfg.record_every = p.count("record_every", "1")?;
    cfg.nonlinear = p.flag("nonlinear", true)?;
    cfg.dealias = p.flag("dealias", cfg.dealias)?;
    let s = p.number("s", "0")?;
    let r = p.number("r", "0")?;
    let tol = p.number("drift_tol", "1e-6")?;
    let dir = ctx.start("solve", p, Some(g))?;

    let steps = cfg.steps();
    let mut rows = Vec::new();
    let mut k = 0usize;
    let mut q0 = None;
    let mut drift: f64 = 0.0;
    let mut defect: f64 = 0.0;
    let mut last = None;
    let notes = solve_with(&d, &cfg, |st| {
        let q = charge(st);
        let q0 = *q0.get_or_insert(q);
        drift = drift.max(if q0 > 0.0 { (q - q0).abs() / q0 } else { (q - q0).abs() });
        defect = defect.max(projection_defect(st));
        if k % cfg.record_every == 0 || k == steps {
            rows.push(TrajectoryRow {
                time: st.time,
                charge: q,
                psi_hs: spinor_sobolev_norm(st, s),
                phi_hr: sobolev_norm(&st.phi, r, false)?,
            });
        }
        if k == steps {
            last = Some(st.clone());
        }
        k += 1;
        Ok(())
    })?;
    for n in &notes {
        log::warn!("{n}");
    }
    dir.write("trajectory.csv", trajectory_csv(&rows))?;
    if let Some(st) = last {
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &st)?;
        dir.write("final.dkgs", bytes)?;
    }
    let pass = drift <= tol && defect <= 1e-10;
    Ok(Outcome {
        pass,
        summary: format!("charge drift {drift:.3e} (tol {tol:e}), projection defect {defect:.3e}"),
        dir: Some(dir.path),
    })
}

pub const PICARD_KEYS: &[&str] = &["depth", "n", "box", "dt", "T", "data", "amp", "psi_s", "phi_r", "s", "r"];

pub fn picard(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let depth = p.count("depth", "5")?;
    if depth < 2 {
        return Err(usage("depth must be at least 2"));
    }
    let g = grid(p, "64", "2pi")?;
    let d = data(p, g, ctx.seed, "rough", "1/2")?;
    let cfg = SolverConfig::new(g, p.number("dt", "0.005")?, p.number("T", "1/4")?);
    let s = p.number("s", "0")?;
    let r = p.number("r", "1/2")?;
    let dir = ctx.start("picard", p, Some(g))?;
    let iterates = picard_iterates(&d, &cfg, depth)?;
    let diffs = picard_differences(&iterates, s, r);
    let mut table = CsvTable::new(&["j", "d_psi", "d_phi", "d", "ratio"]);
    let total: Vec<f64> = diffs.iter().map(|(a, b)| a + b).collect();
    let mut pass = true;
    for (j, (a, b)) in diffs.iter().enumerate() {
        let ratio = if j >= 1 { total[j] / total[j - 1] } else { f64::NAN };
        if j >= 1 {
            pass &= ratio < 1.0;
        }
        table.push(vec![j.to_string(), a.to_string(), b.to_string(), total[j].to_string(), ratio.to_string()])?;
    }
    dir.write("picard.csv", table.render())?;
    let ratios: Vec<String> = total.windows(2).map(|w| format!("{:.3}", w[1] / w[0])).collect();
    Ok(Outcome { pass, summary: format!("contraction ratios d_(j+1)/d_j: {}", ratios.join(", ")), dir: Some(dir.path) })
}

pub const ZHENG_KEYS: &[&str] = &["sigmas", "ns", "t", "box", "data_s"];

pub fn zheng(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let sigmas = p.numbers("sigmas", "0.5,0.7,0.9")?;
    let ns = p.counts("ns", "64,128,256")?;
    let t = p.number("t", "1")?;
    let box_len = p.number("box", "2pi")?;
    let data_s = p.number("data_s", "0")?;
    if ns.len() < 2 {
        return Err(usage("need at least two grids"));
    }
    let dir = ctx.start("zheng", p, None)?;
    let norms: Vec<Vec<f64>> = ns
        .par_iter()
        .map(|&n| -> Result<Vec<f64>> {
            let g = GridSpec2::new(n, box_len).map_err(|e| usage(e.to_string()))?;
            let f = first_iterate(&rough_data(data_s, ctx.seed, &g), t)?;
            sigmas.iter().map(|&s| Ok(sobolev_norm(&f, s, false)?)).collect()
        })
        .collect::<Result<_>>()?;
    let mut table = CsvTable::new(&["sigma", "n", "norm", "relative_change"]);
    let threshold = 0.75;
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, &sigma) in sigmas.iter().enumerate() {
        let v: Vec<f64> = norms.iter().map(|row| row[k]).collect();
        let changes: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).collect();
        for (i, &n) in ns.iter().enumerate() {
            let c = if i == 0 { f64::NAN } else { changes[i - 1] };
            table.push(vec![sigma.to_string(), n.to_string(), v[i].to_string(), c.to_string()])?;
        }
        let total = (v[v.len() - 1] - v[0]).abs() / v[0];
        let stable = changes.iter().all(|&c| c <= 0.10);
        let verdict = if stable { "stable" } else if total >= 0.25 { "growing" } else { "unresolved" };
        if sigma < threshold {
            pass &= stable;
        } else {
            pass &= verdict == "growing";
        }
        lines.push(format!("sigma {sigma}: {verdict} (total change {:.1}%)", 100.0 * total));
    }
    dir.write("zheng.csv", table.render())?;
    Ok(Outcome { pass, summary: lines.join("\n"), dir: Some(dir.path) })
}

pub const REGION_KEYS: &[&str] = &["s", "r"];

pub fn region(p: &Params, ctx: &Ctx) -> Result<Outcome> {
    let s = p.required("s").and_then(|v| crate::params::parse_number(&v))?;
    let r = p.required("r").and_then(|v| crate::params::parse_number(&v))?;
    let dir = ctx.start("region", p, None)?;
    let rep = region_check(s, r);
    dir.write("region.json", serde_json::to_string_pretty(&rep)?)?;
    let mut summary = format!("({s}, {r}) is {}", rep.verdict);
    if !rep.violated.is_empty() {
        summary.push_str(&format!("; fails: {}", rep.violated.join(", ")));
    }
    Ok(Outcome { pass: true, summary, dir: Some(dir.path) })
}
