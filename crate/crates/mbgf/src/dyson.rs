//! Inverse Dyson equation: roots, residues, sum rules and total energies.
//!
//! A quasiparticle root of orbital `q` in diagonal mode solves
//!
//! ```text
//! f_q(ω) = ω − eps_q − Σ_qq(ω) = 0,     F = 1 / (1 − Σ'_qq(ω))
//! ```
//!
//! In matrix mode the roots are the frequencies where an eigenvalue of
//! `diag(eps) + Σ(ω)` equals `ω`. Eigenvalues are followed by sorted index,
//! which is continuous between singularities of `Σ`.
//!
//! Roots are searched bracket by bracket. Each bracket is the interval
//! between two consecutive singularities of `Σ` (or one singularity and an
//! edge of the search window). Inside a bracket the function is sampled on a
//! uniform grid plus geometric points that approach each singular edge.
//! Every sign change is bisected to adjacent floating-point numbers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fci::PoleKind;
use crate::linalg::{sorted_eigen, symmetrize};
use crate::model_io::IntegralSet;

/// Singularities closer than this are treated as one.
pub const SINGULARITY_MERGE: f64 = 1e-10;
/// Residual below which a bisected root is flagged as converged.
pub const ROOT_TOL: f64 = 1e-10;
/// Residual below which a bisected sign change is always accepted as a root.
pub const ACCEPT_TOL: f64 = 1e-6;
/// Roots of different eigenvalue curves closer than this form one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Step of the default central-difference derivative.
pub const DERIVATIVE_STEP: f64 = 1e-6;

/// Which approximation produced a self-energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvaluatorKind {
    Exact,
    /// Second order from its closed form.
    Sigma2,
    /// Sum of perturbation corrections through this order.
    Order(usize),
    Tda2 { cycles: usize },
    ScGf2 { cycle: usize },
}

impl EvaluatorKind {
    pub fn label(&self) -> String {
        match self {
            EvaluatorKind::Exact => "exact".into(),
            EvaluatorKind::Sigma2 => "sigma2".into(),
            EvaluatorKind::Order(n) => format!("order{n}"),
            EvaluatorKind::Tda2 { cycles } => format!("tda2-cycles{cycles}"),
            EvaluatorKind::ScGf2 { cycle } => format!("scgf2-cycle{cycle}"),
        }
    }
}

/// A real-frequency self-energy in the spin-orbital basis.
pub trait SelfEnergy: Sync {
    fn dim(&self) -> usize;

    /// Zeroth-order orbital energies.
    fn eps(&self) -> &[f64];

    fn kind(&self) -> EvaluatorKind;

    /// Σ(ω), symmetric.
    fn eval(&self, omega: f64) -> Result<DMatrix<f64>>;

    fn eval_diag(&self, omega: f64, q: usize) -> Result<f64> {
        Ok(self.eval(omega)?[(q, q)])
    }

    /// Sorted frequencies where some element of Σ diverges.
    fn singularities(&self) -> Vec<f64>;

    /// Sorted frequencies where Σ_qq diverges.
    fn singularities_diag(&self, _q: usize) -> Vec<f64> {
        self.singularities()
    }

    /// dΣ/dω.
    fn derivative(&self, omega: f64) -> Result<DMatrix<f64>> {
        let h = DERIVATIVE_STEP * omega.abs().max(1.0);
        let a = self.eval(omega + h)?;
        let b = self.eval(omega - h)?;
        let mut d = (a - b) / (2.0 * h);
        symmetrize(&mut d);
        Ok(d)
    }

    fn derivative_diag(&self, omega: f64, q: usize) -> Result<f64> {
        let h = DERIVATIVE_STEP * omega.abs().max(1.0);
        Ok((self.eval_diag(omega + h, q)? - self.eval_diag(omega - h, q)?) / (2.0 * h))
    }

    /// dΣ/dω used for residues at a Dyson root.
    fn derivative_at_root(&self, omega: f64) -> Result<DMatrix<f64>> {
        self.derivative(omega)
    }

    /// Ascending eigenvalues and eigenvectors of `diag(eps) + Σ(ω)`.
    fn dyson_eigen(&self, omega: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let mut a = self.eval(omega)?;
        for (p, e) in self.eps().iter().enumerate() {
            a[(p, p)] += e;
        }
        symmetrize(&mut a);
        Ok(sorted_eigen(&a))
    }

    /// True when every Σ_qq is a sum of simple poles with nonnegative
    /// weights, so `f_q` increases strictly and each bracket holds exactly
    /// one root.
    fn monotone_diag(&self) -> bool {
        false
    }
}

/// Interval between consecutive singularities, clipped to a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// `lo` is a singularity rather than a window edge.
    pub lo_singular: bool,
    pub hi_singular: bool,
}

impl Bracket {
    /// A bracket reaching a window edge on at least one side.
    pub fn is_terminal(&self) -> bool {
        !(self.lo_singular && self.hi_singular)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Splits `window` at the given singularities.
///
/// ```
/// use mbgf::dyson::find_brackets;
/// let b = find_brackets(&[0.5, -1.0, 0.5 + 1e-12, 9.0], (-2.0, 2.0));
/// assert_eq!(b.len(), 3);
/// assert!(b[0].is_terminal() && !b[1].is_terminal() && b[2].is_terminal());
/// ```
pub fn find_brackets(singularities: &[f64], window: (f64, f64)) -> Vec<Bracket> {
    let (wmin, wmax) = window;
    let mut s: Vec<f64> = singularities
        .iter()
        .cloned()
        .filter(|x| x.is_finite() && *x > wmin && *x < wmax)
        .collect();
    s.sort_by(f64::total_cmp);
    let mut kept: Vec<f64> = Vec::with_capacity(s.len());
    for x in s {
        match kept.last() {
            Some(&last) if x - last < SINGULARITY_MERGE => {}
            _ => kept.push(x),
        }
    }
    let mut out = Vec::with_capacity(kept.len() + 1);
    let mut lo = wmin;
    let mut lo_singular = false;
    for x in kept {
        out.push(Bracket {
            lo,
            hi: x,
            lo_singular,
            hi_singular: true,
        });
        lo = x;
        lo_singular = true;
    }
    out.push(Bracket {
        lo,
        hi: wmax,
        lo_singular,
        hi_singular: false,
    });
    out
}

/// Root-search settings.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub window: (f64, f64),
    /// Uniform samples per bracket.
    pub scan_points: usize,
    /// Roots below this chemical potential are ionizations.
    pub fermi_level: f64,
}

impl SolveOptions {
    pub fn new(window: (f64, f64), fermi_level: f64) -> Self {
        SolveOptions {
            window,
            scan_points: 2001,
            fermi_level,
        }
    }
}

/// One quasiparticle root.
#[derive(Clone, Debug)]
pub struct DysonRoot {
    pub omega: f64,
    pub kind: PoleKind,
    /// Orbital in diagonal mode.
    pub orbital: Option<usize>,
    /// Quasiparticle weight F.
    pub residue: f64,
    /// Unit vector of the root in orbital space; the residue matrix is
    /// `F u uᵀ`.
    pub vector: DVector<f64>,
    pub bracket_index: usize,
    /// |f| at the returned frequency.
    pub residual: f64,
    pub converged: bool,
}

impl DysonRoot {
    /// Spectral weight of the root on orbital `p`, `F u_p²`.
    pub fn weight_on(&self, p: usize) -> f64 {
        self.residue * self.vector[p] * self.vector[p]
    }

    /// `0 < F <= 1` up to rounding.
    pub fn is_physical(&self) -> bool {
        self.residue > 0.0 && self.residue <= 1.0 + 1e-8
    }
}

/// Root count of one bracket.
#[derive(Clone, Debug)]
pub struct BracketReport {
    pub bracket: Bracket,
    pub orbital: Option<usize>,
    pub roots: usize,
    /// Sign changes rejected as crossings of an unlisted singularity.
    pub rejected: usize,
}

/// Output of a root search.
#[derive(Clone, Debug, Default)]
pub struct RootSet {
    /// Ascending in ω (diagonal mode: grouped by orbital, then ascending).
    pub roots: Vec<DysonRoot>,
    pub brackets: Vec<BracketReport>,
}

impl RootSet {
    pub fn count(&self, kind: PoleKind) -> usize {
        self.roots.iter().filter(|r| r.kind == kind).count()
    }

    /// Root with the largest weight on orbital `q`.
    pub fn principal(&self, q: usize) -> Option<&DysonRoot> {
        self.roots
            .iter()
            .filter(|r| r.orbital.map_or(true, |o| o == q))
            .max_by(|a, b| a.weight_on(q).total_cmp(&b.weight_on(q)))
    }

    /// Principal root of `q` restricted to one kind.
    pub fn principal_of_kind(&self, q: usize, kind: PoleKind) -> Option<&DysonRoot> {
        self.roots
            .iter()
            .filter(|r| r.kind == kind && r.orbital.map_or(true, |o| o == q))
            .max_by(|a, b| a.weight_on(q).total_cmp(&b.weight_on(q)))
    }
}

struct ScalarRoot {
    x: f64,
    fx: f64,
}

/// Geometric points near singular edges plus a uniform grid.
fn scan_points(b: &Bracket, n: usize) -> Vec<f64> {
    let w = b.hi - b.lo;
    let mut pts = Vec::with_capacity(n + 20);
    if b.lo_singular {
        for e in (3..=12).rev() {
            pts.push(b.lo + 10f64.powi(-e) * w);
        }
    } else {
        pts.push(b.lo);
    }
    let n = n.max(3);
    for i in 1..n - 1 {
        pts.push(b.lo + w * (i as f64) / ((n - 1) as f64));
    }
    if b.hi_singular {
        for e in 3..=12 {
            pts.push(b.hi - 10f64.powi(-e) * w);
        }
    } else {
        pts.push(b.hi);
    }
    pts.retain(|&x| {
        (x > b.lo || !b.lo_singular && x == b.lo) && (x < b.hi || !b.hi_singular && x == b.hi)
    });
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Bisects a sign change of `f` on `[a, b]` down to adjacent floats.
fn bisect<F: Fn(f64) -> Result<f64>>(f: &F, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> ScalarRoot {
    for _ in 0..2000 {
        if fa == 0.0 {
            return ScalarRoot { x: a, fx: 0.0 };
        }
        if fb == 0.0 {
            return ScalarRoot { x: b, fx: 0.0 };
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        // A failed evaluation (e.g. a pole guard) falls back to the quarter points.
        let mut probe = None;
        for x in [mid, a + 0.25 * (b - a), a + 0.75 * (b - a)] {
            if x <= a || x >= b {
                continue;
            }
            if let Ok(v) = f(x) {
                if v.is_finite() {
                    probe = Some((x, v));
                    break;
                }
            }
        }
        let Some((mid, fm)) = probe else { break };
        if sign(fm) == sign(fa) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    if fa.abs() <= fb.abs() {
        ScalarRoot { x: a, fx: fa }
    } else {
        ScalarRoot { x: b, fx: fb }
    }
}

/// A bisected sign change is a root when |f| ended small, or fell by two
/// orders of magnitude from the sampled ends. Crossing a singularity makes
/// |f| grow instead.
fn accept(r: &ScalarRoot, fa: f64, fb: f64) -> bool {
    r.fx.abs() <= ACCEPT_TOL || r.fx.abs() < 1e-2 * fa.abs().min(fb.abs())
}

/// Searches a sampled function for sign changes. Local minima of |f| that
/// do not change sign are resampled on a finer grid, which exposes close
/// root pairs.
fn sign_changes<F: Fn(f64) -> Result<f64>>(f: &F, xs: &[f64], fs: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(fs)
        .filter(|(_, y)| y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if sign(y0) != sign(y1) || y0 == 0.0 {
            out.push((x0, y0, x1, y1));
        }
    }
    if let Some(&(xl, yl)) = pts.last() {
        if yl == 0.0 {
            out.push((xl, yl, xl, yl));
        }
    }
    for w in pts.windows(3) {
        let ((x0, y0), (_, y1), (x2, y2)) = (w[0], w[1], w[2]);
        if sign(y0) == sign(y1) && sign(y1) == sign(y2) && y1.abs() < y0.abs() && y1.abs() < y2.abs() {
            refine_extremum(f, x0, x2, 6, &mut out);
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0 && a.2 == b.2);
    out
}

fn refine_extremum<F: Fn(f64) -> Result<f64>>(
    f: &F,
    lo: f64,
    hi: f64,
    depth: usize,
    out: &mut Vec<(f64, f64, f64, f64)>,
) {
    const K: usize = 9;
    let mut pts = Vec::with_capacity(K);
    for i in 0..K {
        let x = lo + (hi - lo) * (i as f64) / ((K - 1) as f64);
        if let Ok(y) = f(x) {
            if y.is_finite() {
                pts.push((x, y));
            }
        }
    }
    let mut found = false;
    for w in pts.windows(2) {
        if sign(w[0].1) != sign(w[1].1) {
            out.push((w[0].0, w[0].1, w[1].0, w[1].1));
            found = true;
        }
    }
    if found || depth == 0 || pts.len() < 3 {
        return;
    }
    let mut best = 1;
    for i in 1..pts.len() - 1 {
        if pts[i].1.abs() < pts[best].1.abs() {
            best = i;
        }
    }
    if pts[best].1.abs() < pts[best - 1].1.abs() && pts[best].1.abs() < pts[best + 1].1.abs() {
        refine_extremum(f, pts[best - 1].0, pts[best + 1].0, depth - 1, out);
    }
}

/// Roots of a scalar function inside one bracket.
fn scalar_roots<F: Fn(f64) -> Result<f64> + Sync>(f: &F, b: &Bracket, n: usize) -> (Vec<ScalarRoot>, usize) {
    let xs = scan_points(b, n);
    let fs: Vec<f64> = xs.iter().map(|&x| f(x).unwrap_or(f64::NAN)).collect();
    let mut roots = Vec::new();
    let mut rejected = 0;
    for (a, fa, c, fc) in sign_changes(f, &xs, &fs) {
        let r = bisect(f, a, fa, c, fc);
        if accept(&r, fa, fc) {
            roots.push(r);
        } else {
            rejected += 1;
        }
    }
    (roots, rejected)
}

/// Single root of a strictly increasing function that runs from −∞ at a
/// singular `lo` to +∞ at a singular `hi`.
fn monotone_root<F: Fn(f64) -> Result<f64>>(f: &F, b: &Bracket) -> Option<ScalarRoot> {
    let (mut lo, mut hi) = (b.lo, b.hi);
    let mut flo = f64::NEG_INFINITY;
    let mut fhi = f64::INFINITY;
    if !b.lo_singular {
        flo = f(lo).ok()?;
        if flo > 0.0 {
            return None;
        }
    }
    if !b.hi_singular {
        fhi = f(hi).ok()?;
        if fhi < 0.0 {
            return None;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid).ok()?;
        if fm == 0.0 {
            return Some(ScalarRoot { x: mid, fx: 0.0 });
        }
        if fm < 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    if flo.abs() <= fhi.abs() {
        Some(ScalarRoot { x: lo, fx: flo })
    } else {
        Some(ScalarRoot { x: hi, fx: fhi })
    }
}

fn classify(omega: f64, fermi: f64) -> PoleKind {
    if omega < fermi {
        PoleKind::Ip
    } else {
        PoleKind::Ea
    }
}

/// Roots of `ω − eps_q − Σ_qq(ω)` for one orbital.
pub fn solve_diagonal<S: SelfEnergy + ?Sized>(se: &S, q: usize, opts: &SolveOptions) -> Result<RootSet> {
    if q >= se.dim() {
        return Err(Error::Validation(format!(
            "orbital {q} out of range (dimension {})",
            se.dim()
        )));
    }
    let eps_q = se.eps()[q];
    let f = |w: f64| -> Result<f64> { Ok(w - eps_q - se.eval_diag(w, q)?) };
    let brackets = find_brackets(&se.singularities_diag(q), opts.window);
    let monotone = se.monotone_diag();
    let per: Vec<Result<(Vec<DysonRoot>, BracketReport)>> = brackets
        .par_iter()
        .enumerate()
        .map(|(bi, b)| {
            let (found, rejected) = if monotone {
                (monotone_root(&f, b).into_iter().collect(), 0)
            } else {
                scalar_roots(&f, b, opts.scan_points)
            };
            let mut roots = Vec::with_capacity(found.len());
            for r in found {
                let d = se.derivative_diag(r.x, q)?;
                let mut u = DVector::zeros(se.dim());
                u[q] = 1.0;
                roots.push(DysonRoot {
                    omega: r.x,
                    kind: classify(r.x, opts.fermi_level),
                    orbital: Some(q),
                    residue: 1.0 / (1.0 - d),
                    vector: u,
                    bracket_index: bi,
                    residual: r.fx.abs(),
                    converged: r.fx.abs() <= ROOT_TOL,
                });
            }
            let report = BracketReport {
                bracket: *b,
                orbital: Some(q),
                roots: roots.len(),
                rejected,
            };
            Ok((roots, report))
        })
        .collect();
    let mut out = RootSet::default();
    for item in per {
        let (r, b) = item?;
        out.roots.extend(r);
        out.brackets.push(b);
    }
    Ok(out)
}

/// Diagonal-mode roots of every orbital.
pub fn solve_diagonal_all<S: SelfEnergy + ?Sized>(se: &S, opts: &SolveOptions) -> Result<RootSet> {
    let mut out = RootSet::default();
    for q in 0..se.dim() {
        let r = solve_diagonal(se, q, opts)?;
        out.roots.extend(r.roots);
        out.brackets.extend(r.brackets);
    }
    Ok(out)
}

/// Roots of `det(ω − eps − Σ(ω)) = 0` from the sorted eigenvalues of
/// `diag(eps) + Σ(ω)`.
///
/// Roots of different eigenvalue curves that coincide within
/// [`CLUSTER_TOL`] are treated as one degenerate root. Its residue matrix
/// `(1 − Ucᵀ Σ' Uc)⁻¹` is diagonalized to give one root per component.
pub fn solve_matrix<S: SelfEnergy + ?Sized>(se: &S, opts: &SolveOptions) -> Result<RootSet> {
    let m = se.dim();
    let brackets = find_brackets(&se.singularities(), opts.window);
    let per: Vec<Result<(Vec<DysonRoot>, BracketReport)>> = brackets
        .par_iter()
        .enumerate()
        .map(|(bi, b)| {
            let xs = scan_points(b, opts.scan_points);
            let eig: Vec<Option<Vec<f64>>> = xs.iter().map(|&x| se.dyson_eigen(x).ok().map(|e| e.0)).collect();
            let mut found: Vec<(ScalarRoot, usize)> = Vec::new();
            let mut rejected = 0;
            for k in 0..m {
                let f = |w: f64| -> Result<f64> { Ok(se.dyson_eigen(w)?.0[k] - w) };
                let fs: Vec<f64> = xs
                    .iter()
                    .zip(&eig)
                    .map(|(&x, e)| e.as_ref().map_or(f64::NAN, |v| v[k] - x))
                    .collect();
                for (a, fa, c, fc) in sign_changes(&f, &xs, &fs) {
                    let r = bisect(&f, a, fa, c, fc);
                    if accept(&r, fa, fc) {
                        found.push((r, k));
                    } else {
                        rejected += 1;
                    }
                }
            }
            found.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.1.cmp(&b.1)));
            let mut roots = Vec::new();
            let mut i = 0;
            while i < found.len() {
                let mut j = i + 1;
                while j < found.len() && found[j].0.x - found[i].0.x < CLUSTER_TOL * found[i].0.x.abs().max(1.0) {
                    j += 1;
                }
                let cluster = &found[i..j];
                let best = cluster
                    .iter()
                    .min_by(|a, b| a.0.fx.abs().total_cmp(&b.0.fx.abs()))
                    .unwrap();
                let omega = best.0.x;
                let residual = cluster.iter().map(|c| c.0.fx.abs()).fold(0.0, f64::max);
                let (_, vecs) = se.dyson_eigen(omega)?;
                let mut idx: Vec<usize> = cluster.iter().map(|c| c.1).collect();
                idx.sort_unstable();
                idx.dedup();
                let uc = DMatrix::from_fn(m, idx.len(), |r, c| vecs[(r, idx[c])]);
                let d = se.derivative_at_root(omega)?;
                let mut a = DMatrix::identity(idx.len(), idx.len()) - uc.transpose() * d * &uc;
                symmetrize(&mut a);
                let (avals, avecs) = sorted_eigen(&a);
                for (c, lam) in avals.iter().enumerate() {
                    let mut u = &uc * avecs.column(c);
                    let norm = u.norm();
                    u /= norm;
                    roots.push(DysonRoot {
                        omega,
                        kind: classify(omega, opts.fermi_level),
                        orbital: None,
                        residue: 1.0 / lam,
                        vector: u,
                        bracket_index: bi,
                        residual,
                        converged: residual <= ROOT_TOL,
                    });
                }
                i = j;
            }
            let report = BracketReport {
                bracket: *b,
                orbital: None,
                roots: roots.len(),
                rejected,
            };
            Ok((roots, report))
        })
        .collect();
    let mut out = RootSet::default();
    for item in per {
        let (r, b) = item?;
        out.roots.extend(r);
        out.brackets.push(b);
    }
    Ok(out)
}

/// Electron count and per-orbital completeness from a root set.
#[derive(Clone, Debug)]
pub struct SumRuleReport {
    /// Σ over ionization roots of trace(residue).
    pub ip_weight: f64,
    pub n_e: usize,
    /// Σ over all roots of the diagonal weight, per orbital.
    pub orbital_weights: Vec<f64>,
}

impl SumRuleReport {
    pub fn electron_error(&self) -> f64 {
        (self.ip_weight - self.n_e as f64).abs()
    }

    pub fn max_orbital_error(&self) -> f64 {
        self.orbital_weights.iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Sums residues over a root set.
pub fn check_sum_rules(roots: &RootSet, m: usize, n_e: usize) -> SumRuleReport {
    let mut ip = 0.0;
    let mut w = vec![0.0; m];
    for r in &roots.roots {
        if r.kind == PoleKind::Ip {
            ip += r.residue;
        }
        for (p, x) in w.iter_mut().enumerate() {
            *x += r.weight_on(p);
        }
    }
    SumRuleReport {
        ip_weight: ip,
        n_e,
        orbital_weights: w,
    }
}

/// Galitskii–Migdal total energy from the ionization roots,
/// `E = e_nuc + ½ Σ_IP F (uᵀ h u + ω)` with `h` the core Hamiltonian.
pub fn galitskii_migdal(roots: &RootSet, ints: &IntegralSet) -> f64 {
    let mut e = 0.0;
    for r in roots.roots.iter().filter(|r| r.kind == PoleKind::Ip) {
        let hu = &ints.hcore * &r.vector;
        e += 0.5 * r.residue * (r.vector.dot(&hu) + r.omega);
    }
    ints.e_nuc + e
}

/// Eigenvalue curves of `diag(eps) + Σ(ω)` on a grid, each curve following
/// its eigenvector by maximum overlap. Points where Σ cannot be evaluated
/// hold NaN and restart the tracking.
pub fn track_curves<S: SelfEnergy + ?Sized>(se: &S, grid: &[f64]) -> Vec<Vec<f64>> {
    let m = se.dim();
    let eig: Vec<Option<(Vec<f64>, DMatrix<f64>)>> = grid.par_iter().map(|&w| se.dyson_eigen(w).ok()).collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut prev: Option<DMatrix<f64>> = None;
    for e in eig {
        match e {
            None => {
                out.push(vec![f64::NAN; m]);
                prev = None;
            }
            Some((vals, vecs)) => {
                let mut row = vals.clone();
                let mut ordered = vecs.clone();
                if let Some(p) = &prev {
                    let overlap = p.transpose() * &vecs;
                    let mut taken = vec![false; m];
                    for curve in 0..m {
                        let mut best = None;
                        let mut best_val = -1.0;
                        for k in 0..m {
                            let o = overlap[(curve, k)].abs();
                            if !taken[k] && o > best_val {
                                best_val = o;
                                best = Some(k);
                            }
                        }
                        let k = best.unwrap();
                        taken[k] = true;
                        row[curve] = vals[k];
                        ordered.set_column(curve, &vecs.column(k));
                    }
                }
                out.push(row);
                prev = Some(ordered);
            }
        }
    }
    out
}

/// Search window that holds every root of a Σ built from `poles`
/// and `eps`, padded by the spread of both.
pub fn default_window(eps: &[f64], singularities: &[f64]) -> (f64, f64) {
    let all: Vec<f64> = eps.iter().chain(singularities).cloned().collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 2.0 * (hi - lo).max(1.0);
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct OnePole {
        eps: Vec<f64>,
    }

    impl SelfEnergy for OnePole {
        fn dim(&self) -> usize {
            1
        }
        fn eps(&self) -> &[f64] {
            &self.eps
        }
        fn kind(&self) -> EvaluatorKind {
            EvaluatorKind::Sigma2
        }
        fn eval(&self, w: f64) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_element(1, 1, 0.25 / (w - 2.0)))
        }
        fn singularities(&self) -> Vec<f64> {
            vec![2.0]
        }
    }

    #[test]
    fn one_pole_roots_and_weights() {
        // ω² − 2ω − 0.25 = 0
        let se = OnePole { eps: vec![0.0] };
        let opts = SolveOptions::new((-10.0, 10.0), 1.0);
        let r = solve_diagonal(&se, 0, &opts).unwrap();
        assert_eq!(r.roots.len(), 2);
        let exact = [1.0 - 1.25f64.sqrt(), 1.0 + 1.25f64.sqrt()];
        for (root, x) in r.roots.iter().zip(exact) {
            assert!((root.omega - x).abs() < 1e-12);
        }
        let s = check_sum_rules(&r, 1, 1);
        assert!((s.orbital_weights[0] - 1.0).abs() < 1e-8);
        let m = solve_matrix(&se, &opts).unwrap();
        assert_eq!(m.roots.len(), 2);
        assert!((m.roots[0].omega - r.roots[0].omega).abs() < 1e-14);
    }

    #[test]
    fn close_root_pair_is_resolved() {
        // f = ω² − 1e−8 sampled coarsely: roots at ±1e−4
        let f = |w: f64| -> Result<f64> { Ok(w * w - 1e-8) };
        let b = Bracket {
            lo: -1.0,
            hi: 1.0 + 1e-3,
            lo_singular: false,
            hi_singular: false,
        };
        let (r, _) = scalar_roots(&f, &b, 11);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn pole_crossing_rejected() {
        let f = |w: f64| -> Result<f64> { Ok(1.0 / (w - 0.3)) };
        let b = Bracket {
            lo: -1.0,
            hi: 1.0,
            lo_singular: false,
            hi_singular: false,
        };
        let (r, rejected) = scalar_roots(&f, &b, 101);
        assert!(r.is_empty());
        assert_eq!(rejected, 1);
    }
}
