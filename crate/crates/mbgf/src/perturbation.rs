//! Order-by-order self-energy corrections.
//!
//! `δΣ⁽ⁿ⁾(ω)` is the coefficient of `λⁿ` in the exact self-energy of
//! `H(λ) = H0 + λ(H − H0)`, and `Σ⁽ⁿ⁾ = Σ_{k≤n} δΣ⁽ᵏ⁾`. Three routes are
//! provided:
//!
//! * [`Sigma2`]: the closed second-order form
//!   `Σ⁽²⁾_pq = ½Σ_iab ⟨qi||ab⟩⟨ab||pi⟩/(ω+eps_i−eps_a−eps_b)
//!            + ½Σ_ija ⟨qa||ij⟩⟨ij||pa⟩/(ω+eps_a−eps_i−eps_j)`;
//! * [`LambdaSeries`]: exact λ-power series of the propagator from
//!   Rayleigh–Schrödinger perturbation theory in the N−1, N and N+1
//!   sectors, inverted order by order. [`OrderN`] wraps it as an evaluator;
//! * [`extract_order_corrections`]: a least-squares polynomial fit of the
//!   exact self-energy over a symmetric stencil of λ values.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;

use crate::dyson::{EvaluatorKind, SelfEnergy};
use crate::error::{Error, Result};
use crate::fci::{
    annihilate, build_hamiltonian, create, enumerate_sector, exact_self_energy, Determinant,
    ExactPropagator, DEFAULT_SECTOR_CAP,
};
use crate::linalg::{sorted_eigen, symmetrize};
use crate::model_io::IntegralSet;

/// Highest order for which results are promised in 64-bit arithmetic.
pub const ORDER_CAP: usize = 9;
/// Closest allowed approach of ω to a second-order singularity.
pub const SIGMA2_GUARD: f64 = 1e-12;

/// One rank-1 term `c v vᵀ / (ω − position)`.
#[derive(Clone, Debug)]
pub struct PoleTerm {
    pub position: f64,
    /// Coupling of the intermediate state to each spin-orbital.
    pub vector: Vec<f64>,
}

/// Self-energy given as a sum of rank-1 simple poles with coefficient ½.
///
/// Terms are summed in stored order and every contribution is formed as
/// `((½ v_p) v_q) / (ω − s)`, so results are reproducible bit for bit.
#[derive(Clone, Debug)]
pub struct PoleSum {
    m: usize,
    eps: Vec<f64>,
    kind: EvaluatorKind,
    pub terms: Vec<PoleTerm>,
    guard: f64,
    singular: Vec<f64>,
    singular_diag: Vec<Vec<f64>>,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl PoleSum {
    pub fn new(eps: Vec<f64>, kind: EvaluatorKind, terms: Vec<PoleTerm>, guard: f64) -> Self {
        let m = eps.len();
        let singular = sorted_unique(
            terms
                .iter()
                .filter(|t| t.vector.iter().any(|&x| x != 0.0))
                .map(|t| t.position)
                .collect(),
        );
        let singular_diag = (0..m)
            .map(|q| {
                sorted_unique(
                    terms
                        .iter()
                        .filter(|t| (0.5 * t.vector[q]) * t.vector[q] != 0.0)
                        .map(|t| t.position)
                        .collect(),
                )
            })
            .collect();
        PoleSum {
            m,
            eps,
            kind,
            terms,
            guard,
            singular,
            singular_diag,
        }
    }

    fn check(&self, omega: f64) -> Result<()> {
        for t in &self.terms {
            let d = omega - t.position;
            if d.abs() < self.guard && t.vector.iter().any(|&x| x != 0.0) {
                return Err(Error::SingularFrequency {
                    omega,
                    denominator: d.abs(),
                });
            }
        }
        Ok(())
    }

    /// Diagonal pole list of orbital `q`: (position, weight) in term order,
    /// zero weights omitted.
    pub fn diagonal_poles(&self, q: usize) -> Vec<(f64, f64)> {
        self.terms
            .iter()
            .map(|t| (t.position, (0.5 * t.vector[q]) * t.vector[q]))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }
}

impl SelfEnergy for PoleSum {
    fn dim(&self) -> usize {
        self.m
    }

    fn eps(&self) -> &[f64] {
        &self.eps
    }

    fn kind(&self) -> EvaluatorKind {
        self.kind
    }

    fn eval(&self, omega: f64) -> Result<DMatrix<f64>> {
        self.check(omega)?;
        let m = self.m;
        let mut s = DMatrix::zeros(m, m);
        for t in &self.terms {
            let d = omega - t.position;
            for p in 0..m {
                let hp = 0.5 * t.vector[p];
                if hp == 0.0 {
                    continue;
                }
                for q in 0..m {
                    let w = hp * t.vector[q];
                    if w != 0.0 {
                        s[(p, q)] += w / d;
                    }
                }
            }
        }
        Ok(s)
    }

    fn eval_diag(&self, omega: f64, q: usize) -> Result<f64> {
        self.check(omega)?;
        let mut s = 0.0;
        for t in &self.terms {
            let w = (0.5 * t.vector[q]) * t.vector[q];
            if w != 0.0 {
                s += w / (omega - t.position);
            }
        }
        Ok(s)
    }

    fn singularities(&self) -> Vec<f64> {
        self.singular.clone()
    }

    fn singularities_diag(&self, q: usize) -> Vec<f64> {
        self.singular_diag[q].clone()
    }

    fn derivative(&self, omega: f64) -> Result<DMatrix<f64>> {
        self.check(omega)?;
        let m = self.m;
        let mut s = DMatrix::zeros(m, m);
        for t in &self.terms {
            let d = omega - t.position;
            for p in 0..m {
                for q in 0..m {
                    let w = (0.5 * t.vector[p]) * t.vector[q];
                    if w != 0.0 {
                        s[(p, q)] -= w / (d * d);
                    }
                }
            }
        }
        Ok(s)
    }

    fn derivative_diag(&self, omega: f64, q: usize) -> Result<f64> {
        self.check(omega)?;
        let mut s = 0.0;
        for t in &self.terms {
            let w = (0.5 * t.vector[q]) * t.vector[q];
            if w != 0.0 {
                let d = omega - t.position;
                s -= w / (d * d);
            }
        }
        Ok(s)
    }

    fn monotone_diag(&self) -> bool {
        true
    }
}

/// Second-order self-energy.
pub struct Sigma2;

impl Sigma2 {
    /// Builds the 2p1h terms `(i, a, b)` with `v_p = ⟨ab||pi⟩` at
    /// `(eps_a + eps_b) − eps_i`, then the 2h1p terms `(a, i, j)` with
    /// `v_p = ⟨ij||pa⟩` at `(eps_i + eps_j) − eps_a`.
    ///
    /// ```
    /// use mbgf::dyson::SelfEnergy;
    /// use mbgf::model_io::{generate_model, ModelSpec};
    /// use mbgf::perturbation::Sigma2;
    /// let ints = generate_model(&ModelSpec::dimer(1.0, 0.0)).unwrap();
    /// let s = Sigma2::pole_sum(&ints);
    /// assert_eq!(s.eval(0.3).unwrap().amax(), 0.0);
    /// ```
    pub fn pole_sum(ints: &IntegralSet) -> PoleSum {
        let m = ints.m;
        let n = ints.n_e;
        let mut terms = Vec::new();
        for i in 0..n {
            for a in n..m {
                for b in n..m {
                    let vector: Vec<f64> = (0..m).map(|p| ints.v(a, b, p, i)).collect();
                    if vector.iter().any(|&x| x != 0.0) {
                        terms.push(PoleTerm {
                            position: (ints.eps[a] + ints.eps[b]) - ints.eps[i],
                            vector,
                        });
                    }
                }
            }
        }
        for a in n..m {
            for i in 0..n {
                for j in 0..n {
                    let vector: Vec<f64> = (0..m).map(|p| ints.v(i, j, p, a)).collect();
                    if vector.iter().any(|&x| x != 0.0) {
                        terms.push(PoleTerm {
                            position: (ints.eps[i] + ints.eps[j]) - ints.eps[a],
                            vector,
                        });
                    }
                }
            }
        }
        PoleSum::new(ints.eps.clone(), EvaluatorKind::Sigma2, terms, SIGMA2_GUARD)
    }
}

/// Σ⁽²⁾(ω) as a symmetric matrix.
pub fn sigma2_analytic(ints: &IntegralSet, omega: f64) -> Result<DMatrix<f64>> {
    Sigma2::pole_sum(ints).eval(omega)
}

/// Sparse symmetric matrix stored as (row, col, value) triples.
#[derive(Clone, Debug)]
struct Triples {
    entries: Vec<(usize, usize, f64)>,
}

impl Triples {
    fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                if a[(r, c)] != 0.0 {
                    entries.push((r, c, a[(r, c)]));
                }
            }
        }
        Triples { entries }
    }

    fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// `y W` for `y` with one column per determinant.
    fn right_mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for &(r, c, v) in &self.entries {
            for p in 0..y.nrows() {
                out[(p, c)] += y[(p, r)] * v;
            }
        }
        out
    }
}

struct SeriesBlock {
    /// +1 for the N−1 sector, −1 for N+1.
    sgn: f64,
    diag: Vec<f64>,
    w: Triples,
    /// Amplitudes per order, m × dim.
    amps: Vec<DMatrix<f64>>,
}

/// Power series `(a0 + a1 λ + …)^power` through order `n`.
fn series_pow(a: &[f64], power: f64, n: usize) -> Vec<f64> {
    let mut b = vec![a[0].powf(power)];
    for k in 1..=n {
        let mut s = 0.0;
        for j in 1..=k {
            s += (power * j as f64 - (k - j) as f64) * a[j] * b[k - j];
        }
        b.push(s / (k as f64 * a[0]));
    }
    b
}

/// Exact λ-expansion of the propagator and self-energy of `H(λ)`.
pub struct LambdaSeries {
    m: usize,
    max_order: usize,
    eps: Vec<f64>,
    /// Ground-state energy coefficients E_0, E_1, ….
    pub energy: Vec<f64>,
    blocks: Vec<SeriesBlock>,
    /// Zeroth-order N−1 and N+1 state energies relative to the reference,
    /// with their excitation level (holes for N−1, particles for N+1).
    pub zeroth_poles: Vec<(f64, usize)>,
}

impl LambdaSeries {
    pub fn new(ints: &IntegralSet, max_order: usize) -> Result<Self> {
        Self::with_cap(ints, max_order, DEFAULT_SECTOR_CAP)
    }

    pub fn with_cap(ints: &IntegralSet, max_order: usize, cap: usize) -> Result<Self> {
        let m = ints.m;
        let n_e = ints.n_e;
        let n = max_order;
        let reference = Determinant::aufbau(n_e);
        let sz0 = reference.sz2();
        let zeroth = |d: &Determinant| -> f64 { d.occupied().iter().map(|&p| ints.eps[p]).sum() };

        let dets = enumerate_sector(m, n_e, Some(sz0));
        let h = build_hamiltonian(ints, &dets, 1.0, cap)?;
        let d0: Vec<f64> = dets.iter().map(zeroth).collect();
        let mut wd = h;
        for (i, e) in d0.iter().enumerate() {
            wd[(i, i)] -= e;
        }
        let w = Triples::from_dense(&wd);
        let r = dets.iter().position(|d| *d == reference).unwrap();
        let e_ref = d0[r];
        for (i, e) in d0.iter().enumerate() {
            if i != r && *e - e_ref < 1e-10 {
                return Err(Error::DegenerateGround { gap: *e - e_ref });
            }
        }
        let dim = dets.len();
        let mut psi = vec![DVector::zeros(dim)];
        psi[0][r] = 1.0;
        let mut energy = vec![e_ref];
        for k in 1..=n {
            let wpsi = w.mul_vec(&psi[k - 1]);
            energy.push(wpsi[r]);
            let mut rhs = wpsi;
            for j in 1..=k {
                rhs -= &psi[k - j] * energy[j];
            }
            let mut v = DVector::zeros(dim);
            for i in 0..dim {
                if i != r {
                    v[i] = rhs[i] / (e_ref - d0[i]);
                }
            }
            psi.push(v);
        }
        let norm: Vec<f64> = (0..=n)
            .map(|k| (0..=k).map(|j| psi[j].dot(&psi[k - j])).sum())
            .collect();
        let scale = series_pow(&norm, -0.5, n);
        let psi: Vec<DVector<f64>> = (0..=n)
            .map(|k| {
                let mut v = DVector::zeros(dim);
                for j in 0..=k {
                    v += &psi[k - j] * scale[j];
                }
                v
            })
            .collect();

        let mut blocks = Vec::new();
        let mut zeroth_poles = Vec::new();
        for (sector_n, sgn) in [(n_e - 1, 1.0), (n_e + 1, -1.0)] {
            for s in [sz0 - 1, sz0 + 1] {
                let bdets = enumerate_sector(m, sector_n, Some(s));
                if bdets.is_empty() {
                    continue;
                }
                let hb = build_hamiltonian(ints, &bdets, 1.0, cap)?;
                let diag: Vec<f64> = bdets.iter().map(zeroth).collect();
                let mut wb = hb;
                for (i, e) in diag.iter().enumerate() {
                    wb[(i, i)] -= e;
                }
                let index: std::collections::HashMap<u64, usize> =
                    bdets.iter().enumerate().map(|(i, d)| (d.occupancy, i)).collect();
                let mut amps = Vec::with_capacity(n + 1);
                for pk in &psi {
                    let mut x = DMatrix::zeros(m, bdets.len());
                    for (j, d) in dets.iter().enumerate() {
                        let c = pk[j];
                        if c == 0.0 {
                            continue;
                        }
                        for p in 0..m {
                            let hit = if sgn > 0.0 {
                                annihilate(d.occupancy, p)
                            } else {
                                create(d.occupancy, p)
                            };
                            if let Some((d1, sign)) = hit {
                                if let Some(&row) = index.get(&d1) {
                                    x[(p, row)] += sign * c;
                                }
                            }
                        }
                    }
                    amps.push(x);
                }
                for (d, e) in bdets.iter().zip(&diag) {
                    let holes = (reference.occupancy & !d.occupancy).count_ones() as usize;
                    let parts = (d.occupancy & !reference.occupancy).count_ones() as usize;
                    let (pos, level) = if sgn > 0.0 {
                        (e_ref - e, holes)
                    } else {
                        (e - e_ref, parts)
                    };
                    zeroth_poles.push((pos, level));
                }
                blocks.push(SeriesBlock {
                    sgn,
                    diag,
                    w: Triples::from_dense(&wb),
                    amps,
                });
            }
        }
        Ok(LambdaSeries {
            m,
            max_order: n,
            eps: ints.eps.clone(),
            energy,
            blocks,
            zeroth_poles,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Coefficients G_0 … G_n of the propagator at ω.
    pub fn green(&self, omega: f64) -> Result<Vec<DMatrix<f64>>> {
        let n = self.max_order;
        let m = self.m;
        let mut out = vec![DMatrix::zeros(m, m); n + 1];
        for b in &self.blocks {
            let sgn = b.sgn;
            let a0: Vec<f64> = b.diag.iter().map(|d| sgn * d + omega - sgn * self.energy[0]).collect();
            for (i, a) in a0.iter().enumerate() {
                if a.abs() < 1e-14 {
                    return Err(Error::SingularFrequency {
                        omega,
                        denominator: a.abs(),
                    });
                }
                let _ = i;
            }
            let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
            for o in 0..=n {
                let mut r = b.amps[o].clone();
                if o >= 1 {
                    let yw = b.w.right_mul(&y[o - 1]);
                    r -= (yw - &y[o - 1] * self.energy[1]) * sgn;
                }
                for j in 2..=o {
                    r += &y[o - j] * (sgn * self.energy[j]);
                }
                for (c, a) in a0.iter().enumerate() {
                    for p in 0..m {
                        r[(p, c)] /= a;
                    }
                }
                y.push(r);
            }
            for o in 0..=n {
                for j in 0..=o {
                    out[o] += &b.amps[j] * y[o - j].transpose();
                }
            }
        }
        Ok(out)
    }

    /// Corrections δΣ⁽⁰⁾ … δΣ⁽ⁿ⁾ at ω.
    pub fn corrections(&self, omega: f64) -> Result<Vec<DMatrix<f64>>> {
        let g = self.green(omega)?;
        let n = self.max_order;
        let (vals, vecs) = sorted_eigen(&g[0]);
        let big = vals.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let small = vals.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
        if small == 0.0 || small / big < 1e-14 {
            return Err(Error::Singular {
                omega,
                cond: big / small,
            });
        }
        let mut x0 = vecs.clone();
        for c in 0..vals.len() {
            for r in 0..vals.len() {
                x0[(r, c)] /= vals[c];
            }
        }
        let x0 = x0 * vecs.transpose();
        let mut x = vec![x0.clone()];
        for k in 1..=n {
            let mut acc = DMatrix::zeros(self.m, self.m);
            for j in 1..=k {
                acc += &g[j] * &x[k - j];
            }
            x.push(-(&x0 * acc));
        }
        let mut s: Vec<DMatrix<f64>> = x
            .into_iter()
            .map(|mut a| {
                a = -a;
                symmetrize(&mut a);
                a
            })
            .collect();
        for p in 0..self.m {
            s[0][(p, p)] += omega - self.eps[p];
        }
        Ok(s)
    }
}

/// Cumulative self-energy Σ⁽ⁿ⁾ = δΣ⁽⁰⁾ + … + δΣ⁽ⁿ⁾ from the λ-series.
///
/// Candidate singularities are the zeroth-order energies of N∓1 states
/// with 2 up to ⌊n/2⌋+1 holes (N−1) or particles (N+1). For a single
/// diagonal element the two-hole/two-particle candidates are restricted to
/// those where Σ⁽²⁾_qq has a pole.
pub struct OrderN {
    pub series: LambdaSeries,
    order: usize,
    singular: Vec<f64>,
    singular_diag: Vec<Vec<f64>>,
}

fn merge_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&l) if x - l < crate::dyson::SINGULARITY_MERGE => {}
            _ => out.push(x),
        }
    }
    out
}

impl OrderN {
    pub fn new(ints: &IntegralSet, order: usize) -> Result<Self> {
        Self::with_cap(ints, order, DEFAULT_SECTOR_CAP)
    }

    pub fn with_cap(ints: &IntegralSet, order: usize, cap: usize) -> Result<Self> {
        if order > ORDER_CAP {
            return Err(Error::Validation(format!(
                "order {order} exceeds the cap of {ORDER_CAP}"
            )));
        }
        let series = LambdaSeries::with_cap(ints, order, cap)?;
        let top = order / 2 + 1;
        let higher: Vec<f64> = series
            .zeroth_poles
            .iter()
            .filter(|(_, l)| *l >= 3 && *l <= top)
            .map(|(p, _)| *p)
            .collect();
        let level2: Vec<f64> = series
            .zeroth_poles
            .iter()
            .filter(|(_, l)| *l == 2 && top >= 2)
            .map(|(p, _)| *p)
            .collect();
        let s2 = Sigma2::pole_sum(ints);
        let singular = merge_sorted(level2.iter().chain(&higher).cloned().collect());
        let singular_diag = (0..ints.m)
            .map(|q| {
                let mut v = higher.clone();
                if top >= 2 {
                    v.extend(s2.singularities_diag(q));
                }
                merge_sorted(v)
            })
            .collect();
        Ok(OrderN {
            series,
            order,
            singular,
            singular_diag,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

impl SelfEnergy for OrderN {
    fn dim(&self) -> usize {
        self.series.m
    }

    fn eps(&self) -> &[f64] {
        &self.series.eps
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::Order(self.order)
    }

    fn eval(&self, omega: f64) -> Result<DMatrix<f64>> {
        let c = self.series.corrections(omega)?;
        let mut s = DMatrix::zeros(self.series.m, self.series.m);
        for k in 0..=self.order {
            s += &c[k];
        }
        Ok(s)
    }

    fn singularities(&self) -> Vec<f64> {
        self.singular.clone()
    }

    fn singularities_diag(&self, q: usize) -> Vec<f64> {
        self.singular_diag[q].clone()
    }
}

/// Bold-line propagator `(ω − eps − Σ(ω))⁻¹`.
pub fn g_dyson_n<S: SelfEnergy + ?Sized>(se: &S, omega: f64) -> Result<DMatrix<f64>> {
    let mut a = -se.eval(omega)?;
    for (p, e) in se.eps().iter().enumerate() {
        a[(p, p)] += omega - e;
    }
    symmetrize(&mut a);
    let (vals, vecs) = sorted_eigen(&a);
    let big = vals.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    let small = vals.iter().fold(f64::INFINITY, |x, v| x.min(v.abs()));
    if small == 0.0 || small / big < 1e-12 {
        return Err(Error::Singular {
            omega,
            cond: big / small,
        });
    }
    let mut scaled = vecs.clone();
    for c in 0..vals.len() {
        for r in 0..vals.len() {
            scaled[(r, c)] /= vals[c];
        }
    }
    Ok(scaled * vecs.transpose())
}

/// How stencil values are turned into λ-coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilFit {
    VandermondePoly,
    /// Polynomial fits at spacing h and h/2 combined to cancel the leading
    /// truncation error of each coefficient.
    Richardson,
}

/// Symmetric set of λ values.
#[derive(Clone, Debug)]
pub struct LambdaStencil {
    pub points: Vec<f64>,
    pub h: f64,
    pub max_order: usize,
    pub fit: StencilFit,
}

impl LambdaStencil {
    /// `2·max_order + 1` points `j·h`, `j = −max_order..=max_order`.
    pub fn new(max_order: usize, h: f64, fit: StencilFit) -> Self {
        let k = max_order as i64;
        LambdaStencil {
            points: (-k..=k).map(|j| j as f64 * h).collect(),
            h,
            max_order,
            fit,
        }
    }

    /// h = 0.05 polynomial fit.
    pub fn standard(max_order: usize) -> Self {
        Self::new(max_order, 0.05, StencilFit::VandermondePoly)
    }

    fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let symmetric = (0..n).all(|i| (self.points[i] + self.points[n - 1 - i]).abs() < 1e-15);
        if !symmetric || !self.points.contains(&0.0) || n < self.max_order + 1 || self.h <= 0.0 {
            return Err(Error::Validation(
                "stencil must be symmetric about 0, contain 0 and have at least max_order + 1 points".into(),
            ));
        }
        if self.points.iter().any(|x| x.abs() > 1.5) {
            return Err(Error::Validation("stencil points must lie in [-1.5, 1.5]".into()));
        }
        Ok(())
    }
}

/// Least-squares coefficients of a polynomial in λ, one fit per matrix
/// element, on the scaled variable `x = λ / max|λ|`.
struct PolyFit {
    /// Pseudo-inverse of the scaled Vandermonde matrix, (order+1) × points.
    pinv: DMatrix<f64>,
    scale: f64,
    cond: f64,
}

impl PolyFit {
    fn new(points: &[f64], order: usize) -> Result<Self> {
        let scale = points.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let v = DMatrix::from_fn(points.len(), order + 1, |r, c| (points[r] / scale).powi(c as i32));
        let svd = SVD::new(v, true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = smax / smin;
        if !(cond <= 1e12) {
            return Err(Error::IllConditioned {
                cond,
                suggested: order.saturating_sub(1),
            });
        }
        let pinv = svd
            .pseudo_inverse(0.0)
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(PolyFit { pinv, scale, cond })
    }

    /// Coefficient matrices c_0 … c_order from one matrix per stencil point.
    fn apply(&self, values: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let (m1, m2) = values[0].shape();
        (0..self.pinv.nrows())
            .map(|k| {
                let mut c = DMatrix::zeros(m1, m2);
                for (j, v) in values.iter().enumerate() {
                    c += v * self.pinv[(k, j)];
                }
                c /= self.scale.powi(k as i32);
                symmetrize(&mut c);
                c
            })
            .collect()
    }

    /// Amplification of value noise into c_k.
    fn sensitivity(&self) -> Vec<f64> {
        (0..self.pinv.nrows())
            .map(|k| self.pinv.row(k).norm() / self.scale.powi(k as i32))
            .collect()
    }
}

/// λ-coefficients of the exact self-energy on an ω-grid.
#[derive(Clone, Debug)]
pub struct OrderCorrections {
    /// Grid points that were kept.
    pub omega: Vec<f64>,
    /// Grid points within the margin of a pole at some stencil λ.
    pub dropped: Vec<f64>,
    /// `delta[i][n]` is δΣ⁽ⁿ⁾ at `omega[i]`.
    pub delta: Vec<Vec<DMatrix<f64>>>,
    /// Condition number of the scaled Vandermonde system.
    pub condition: f64,
    /// Bound on |δc_n| per unit error in the stencil values.
    pub sensitivity: Vec<f64>,
    /// Largest fit residual over elements, per grid point.
    pub residual: Vec<f64>,
}

impl OrderCorrections {
    /// Σ⁽ⁿ⁾ at grid index `i`.
    pub fn cumulative(&self, i: usize, n: usize) -> DMatrix<f64> {
        let mut s = self.delta[i][0].clone();
        for k in 1..=n {
            s += &self.delta[i][k];
        }
        s
    }
}

/// Fits the exact Σ(ω; λ) over the stencil at every grid point.
///
/// Grid points closer than `margin` to a propagator pole or a self-energy
/// singularity at any stencil λ are dropped.
pub fn extract_order_corrections(
    ints: &IntegralSet,
    omega_grid: &[f64],
    stencil: &LambdaStencil,
    margin: f64,
) -> Result<OrderCorrections> {
    stencil.validate()?;
    match stencil.fit {
        StencilFit::VandermondePoly => fit_once(ints, omega_grid, stencil, margin),
        StencilFit::Richardson => {
            let coarse = fit_once(
                ints,
                omega_grid,
                &LambdaStencil {
                    fit: StencilFit::VandermondePoly,
                    ..stencil.clone()
                },
                margin,
            )?;
            let half = LambdaStencil {
                points: stencil.points.iter().map(|x| 0.5 * x).collect(),
                h: 0.5 * stencil.h,
                max_order: stencil.max_order,
                fit: StencilFit::VandermondePoly,
            };
            let fine = fit_once(ints, &coarse.omega, &half, margin)?;
            let n = stencil.max_order;
            let mut out = fine.clone();
            for (i, row) in out.delta.iter_mut().enumerate() {
                for (k, c) in row.iter_mut().enumerate() {
                    let p = (n + 1 - k) as i32;
                    let f = 2f64.powi(p);
                    *c = (&fine.delta[i][k] * f - &coarse.delta[i][k]) / (f - 1.0);
                }
            }
            out.dropped = coarse.dropped.iter().chain(&fine.dropped).cloned().collect();
            out.dropped.sort_by(f64::total_cmp);
            out.dropped.dedup();
            Ok(out)
        }
    }
}

fn fit_once(
    ints: &IntegralSet,
    omega_grid: &[f64],
    stencil: &LambdaStencil,
    margin: f64,
) -> Result<OrderCorrections> {
    let fit = PolyFit::new(&stencil.points, stencil.max_order)?;
    let props: Vec<ExactPropagator> = stencil
        .points
        .par_iter()
        .map(|&l| ExactPropagator::new(ints, l, DEFAULT_SECTOR_CAP))
        .collect::<Result<_>>()?;
    let mut forbidden: Vec<f64> = Vec::new();
    for p in &props {
        forbidden.extend(p.poles.poles.iter().map(|x| x.omega));
        forbidden.extend(p.self_energy_singularities()?.iter().map(|x| x.0));
    }
    let (kept, dropped): (Vec<f64>, Vec<f64>) = omega_grid
        .iter()
        .partition(|&&w| forbidden.iter().all(|f| (w - f).abs() >= margin));
    let rows: Vec<Result<(Vec<DMatrix<f64>>, f64)>> = kept
        .par_iter()
        .map(|&w| {
            let values: Vec<DMatrix<f64>> = props
                .iter()
                .map(|p| exact_self_energy(&ints.eps, &p.green(w)?, w))
                .collect::<Result<_>>()?;
            let coeffs = fit.apply(&values);
            let mut resid = 0.0f64;
            for (j, l) in stencil.points.iter().enumerate() {
                let mut model = DMatrix::zeros(ints.m, ints.m);
                for (k, c) in coeffs.iter().enumerate() {
                    model += c * l.powi(k as i32);
                }
                resid = resid.max((model - &values[j]).amax());
            }
            Ok((coeffs, resid))
        })
        .collect();
    let mut delta = Vec::with_capacity(kept.len());
    let mut residual = Vec::with_capacity(kept.len());
    for r in rows {
        let (c, e) = r?;
        delta.push(c);
        residual.push(e);
    }
    Ok(OrderCorrections {
        omega: kept,
        dropped,
        delta,
        condition: fit.cond,
        sensitivity: fit.sensitivity(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{generate_model, ModelSpec};

    #[test]
    fn series_pow_inverts_square_root() {
        let a = [2.0, 0.3, -0.1, 0.05];
        let b = series_pow(&a, -0.5, 3);
        let c = series_pow(&b, -2.0, 3);
        for k in 0..4 {
            assert!((c[k] - a[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_series_second_order() {
        // E_2 of the half-filled dimer is −U²/(16 t)
        let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
        let s = LambdaSeries::new(&ints, 3).unwrap();
        assert!((s.energy[2] + 0.25).abs() < 1e-13);
        assert!((s.energy[0] + s.energy[1] - ints.reference_energy()).abs() < 1e-13);
    }

    #[test]
    fn series_second_order_is_sigma2() {
        let ints = generate_model(&ModelSpec::chain(1.0, 2.0, 4).with_site_energies(vec![0.4])).unwrap();
        let s = LambdaSeries::new(&ints, 2).unwrap();
        let s2 = Sigma2::pole_sum(&ints);
        for &w in &[-3.1, -0.4, 0.77, 2.2, 5.3] {
            let c = s.corrections(w).unwrap();
            assert!(c[0].amax() < 1e-12);
            assert!(c[1].amax() < 1e-12);
            let d = (&c[2] - s2.eval(w).unwrap()).amax();
            assert!(d < 1e-11, "ω={w} diff {d}");
        }
    }

    #[test]
    fn fit_is_exact_for_polynomials() {
        let pts: Vec<f64> = (-3..=3).map(|j| j as f64 * 0.05).collect();
        let fit = PolyFit::new(&pts, 3).unwrap();
        let vals: Vec<DMatrix<f64>> = pts
            .iter()
            .map(|l| DMatrix::from_element(1, 1, 1.0 - 2.0 * l + 0.5 * l * l * l))
            .collect();
        let c = fit.apply(&vals);
        let expected = [1.0, -2.0, 0.0, 0.5];
        for k in 0..4 {
            assert!((c[k][(0, 0)] - expected[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn ill_conditioned_stencil() {
        let pts: Vec<f64> = (-40..=40).map(|j| j as f64 * 0.01).collect();
        assert!(matches!(
            PolyFit::new(&pts, 40),
            Err(Error::IllConditioned { .. })
        ));
    }
}
