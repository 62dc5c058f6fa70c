//! Determinant-based full configuration interaction and the exact propagator.
//!
//! The λ-scaled Hamiltonian is `H(λ) = H0 + λ(H − H0)` with
//! `H0 = Σ_p eps_p n_p`. Its N−1, N and N+1 electron sectors give the exact
//! Lehmann representation
//!
//! ```text
//! G_pq(ω) = Σ_I x_I[p] x_I[q] / (ω − E0 + E_I) + Σ_A y_A[p] y_A[q] / (ω − E_A + E0)
//! ```
//!
//! with `x_I[p] = ⟨I|a_p|0⟩` and `y_A[p] = ⟨A|a†_p|0⟩`, evaluated on the real
//! axis with no broadening.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::dyson::{EvaluatorKind, SelfEnergy};
use crate::error::{Error, Result};
use crate::linalg::{sorted_eigen, symmetrize};
use crate::model_io::IntegralSet;

/// Default cap on the dimension of a Hamiltonian block.
pub const DEFAULT_SECTOR_CAP: usize = 20_000;
/// Poles closer than this are merged into one.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Closest allowed approach of ω to a pole.
pub const POLE_GUARD: f64 = 1e-13;

/// Occupation bit mask over spin-orbitals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    pub occupancy: u64,
}

impl Determinant {
    pub fn new(occupancy: u64) -> Self {
        Determinant { occupancy }
    }

    /// Lowest `n_e` spin-orbitals occupied.
    pub fn aufbau(n_e: usize) -> Self {
        let occ = if n_e == 64 { u64::MAX } else { (1u64 << n_e) - 1 };
        Determinant { occupancy: occ }
    }

    pub fn n_e(&self) -> usize {
        self.occupancy.count_ones() as usize
    }

    /// Twice the spin projection, n_α − n_β (α orbitals have even index).
    pub fn sz2(&self) -> i32 {
        let alpha = (self.occupancy & 0x5555_5555_5555_5555).count_ones() as i32;
        let beta = (self.occupancy & 0xAAAA_AAAA_AAAA_AAAA).count_ones() as i32;
        alpha - beta
    }

    pub fn is_occupied(&self, p: usize) -> bool {
        self.occupancy >> p & 1 == 1
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..64).filter(|&p| self.is_occupied(p)).collect()
    }
}

/// `(−1)^(number of occupied orbitals below p)`.
#[inline]
fn parity_below(occ: u64, p: usize) -> f64 {
    let below = if p == 0 { 0 } else { occ & ((1u64 << p) - 1) };
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// a_p acting on a determinant.
#[inline]
pub fn annihilate(occ: u64, p: usize) -> Option<(u64, f64)> {
    if occ >> p & 1 == 0 {
        return None;
    }
    Some((occ ^ (1u64 << p), parity_below(occ, p)))
}

/// a†_p acting on a determinant.
#[inline]
pub fn create(occ: u64, p: usize) -> Option<(u64, f64)> {
    if occ >> p & 1 == 1 {
        return None;
    }
    Some((occ | (1u64 << p), parity_below(occ, p)))
}

/// All determinants with `n_e` electrons in `m` spin-orbitals, ascending by
/// mask value, optionally restricted to `n_α − n_β = sz2`.
///
/// ```
/// use mbgf::fci::enumerate_sector;
/// assert_eq!(enumerate_sector(4, 2, Some(0)).len(), 4);
/// assert_eq!(enumerate_sector(12, 5, None).len(), 792);
/// ```
pub fn enumerate_sector(m: usize, n_e: usize, sz2: Option<i32>) -> Vec<Determinant> {
    assert!(m <= 64 && n_e <= m, "need n_e <= m <= 64");
    let mut out = Vec::new();
    if n_e == 0 {
        out.push(Determinant::new(0));
    } else {
        let limit: u128 = 1u128 << m;
        let mut x: u128 = (1u128 << n_e) - 1;
        while x < limit {
            out.push(Determinant::new(x as u64));
            // Next mask with the same popcount.
            let c = x & x.wrapping_neg();
            let r = x + c;
            x = (((r ^ x) >> 2) / c) | r;
        }
    }
    if let Some(s) = sz2 {
        out.retain(|d| d.sz2() == s);
    }
    out
}

/// Matrix of `H(λ)` over a determinant list via Slater–Condon rules.
///
/// ```
/// use mbgf::fci::{build_hamiltonian, enumerate_sector};
/// use mbgf::model_io::{generate_model, ModelSpec};
/// let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
/// let dets = enumerate_sector(4, 2, Some(0));
/// let h0 = build_hamiltonian(&ints, &dets, 0.0, 20_000).unwrap();
/// assert_eq!(h0[(0, 1)], 0.0);
/// ```
pub fn build_hamiltonian(
    ints: &IntegralSet,
    dets: &[Determinant],
    lambda: f64,
    cap: usize,
) -> Result<DMatrix<f64>> {
    if dets.len() > cap {
        return Err(Error::SectorTooLarge {
            dim: dets.len(),
            cap,
        });
    }
    let m = ints.m;
    let index: HashMap<u64, usize> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| (d.occupancy, i))
        .collect();
    let n = dets.len();
    let mut h = DMatrix::zeros(n, n);
    for (col, det) in dets.iter().enumerate() {
        let occ_mask = det.occupancy;
        let occ: Vec<usize> = (0..m).filter(|&p| occ_mask >> p & 1 == 1).collect();
        let vir: Vec<usize> = (0..m).filter(|&p| occ_mask >> p & 1 == 0).collect();

        let mut e_full = 0.0;
        let mut e_zero = 0.0;
        for (x, &i) in occ.iter().enumerate() {
            e_zero += ints.eps[i];
            e_full += ints.hcore[(i, i)];
            for &j in &occ[..x] {
                e_full += ints.v(i, j, i, j);
            }
        }
        h[(col, col)] = e_zero + lambda * (e_full - e_zero);

        for &i in &occ {
            for &a in &vir {
                if ints.labels[i].spin != ints.labels[a].spin {
                    continue;
                }
                let mut elem = ints.hcore[(a, i)];
                for &k in &occ {
                    elem += ints.v(a, k, i, k);
                }
                if elem == 0.0 {
                    continue;
                }
                let (d1, s1) = annihilate(occ_mask, i).unwrap();
                let (d2, s2) = create(d1, a).unwrap();
                if let Some(&row) = index.get(&d2) {
                    h[(row, col)] = lambda * s1 * s2 * elem;
                }
            }
        }

        for (x, &i) in occ.iter().enumerate() {
            for &j in &occ[x + 1..] {
                for (y, &a) in vir.iter().enumerate() {
                    for &b in &vir[y + 1..] {
                        let v = ints.v(a, b, i, j);
                        if v == 0.0 {
                            continue;
                        }
                        // a†_a a†_b a_j a_i |D⟩
                        let (d1, s1) = annihilate(occ_mask, i).unwrap();
                        let (d2, s2) = annihilate(d1, j).unwrap();
                        let (d3, s3) = create(d2, b).unwrap();
                        let (d4, s4) = create(d3, a).unwrap();
                        if let Some(&row) = index.get(&d4) {
                            h[(row, col)] = lambda * s1 * s2 * s3 * s4 * v;
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Eigen-decomposition of one fixed-`sz2` block of a sector.
#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub sz2: i32,
    pub dets: Vec<Determinant>,
    /// Ascending.
    pub energies: Vec<f64>,
    /// Column k is the eigenvector of `energies[k]`.
    pub vectors: DMatrix<f64>,
}

/// Spectrum of one particle-number sector, stored block by block in `sz2`.
#[derive(Clone, Debug)]
pub struct SectorSpectrum {
    pub n_e: usize,
    pub lambda: f64,
    pub blocks: Vec<SectorBlock>,
}

impl SectorSpectrum {
    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.dets.len()).sum()
    }

    /// All energies in ascending order.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.blocks.iter().flat_map(|b| b.energies.iter().cloned()).collect();
        e.sort_by(f64::total_cmp);
        e
    }
}

/// Diagonalizes the `n_e` sector of `H(λ)`, one block per `sz2` value.
pub fn diagonalize_sector(
    ints: &IntegralSet,
    n_e: usize,
    sz2: &[i32],
    lambda: f64,
    cap: usize,
) -> Result<SectorSpectrum> {
    let mut blocks = Vec::new();
    for &s in sz2 {
        let dets = enumerate_sector(ints.m, n_e, Some(s));
        if dets.is_empty() {
            continue;
        }
        let h = build_hamiltonian(ints, &dets, lambda, cap)?;
        let (energies, vectors) = sorted_eigen(&h);
        blocks.push(SectorBlock {
            sz2: s,
            dets,
            energies,
            vectors,
        });
    }
    Ok(SectorSpectrum {
        n_e,
        lambda,
        blocks,
    })
}

/// Ionization or attachment character of a pole or root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoleKind {
    Ip,
    Ea,
}

impl PoleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoleKind::Ip => "IP",
            PoleKind::Ea => "EA",
        }
    }
}

/// One (possibly merged) pole of the exact propagator.
#[derive(Clone, Debug)]
pub struct Pole {
    pub omega: f64,
    pub kind: PoleKind,
    /// Transition amplitude vectors of the merged states.
    pub amplitudes: Vec<DVector<f64>>,
    /// Σ v vᵀ over `amplitudes`.
    pub residue: DMatrix<f64>,
}

impl Pole {
    pub fn weight(&self) -> f64 {
        self.residue.trace()
    }

    /// Numerical rank of the residue matrix.
    pub fn rank(&self) -> usize {
        let t = self.weight();
        if t <= 0.0 {
            return 0;
        }
        let (vals, _) = sorted_eigen(&self.residue);
        vals.iter().filter(|&&x| x > 1e-10 * t.max(1e-300)).count()
    }
}

/// Matrix-valued spectral representation.
#[derive(Clone, Debug, Default)]
pub struct PoleSet {
    /// Ascending in ω.
    pub poles: Vec<Pole>,
}

impl PoleSet {
    /// Σ over poles of trace(residue).
    pub fn total_weight(&self) -> f64 {
        self.poles.iter().map(Pole::weight).sum()
    }

    /// Poles whose residue trace exceeds `tol`.
    pub fn visible(&self, tol: f64) -> Vec<&Pole> {
        self.poles.iter().filter(|p| p.weight() > tol).collect()
    }

    pub fn count(&self, kind: PoleKind) -> usize {
        self.poles.iter().filter(|p| p.kind == kind).count()
    }
}

/// Exact propagator of `H(λ)` from the N−1, N and N+1 sectors.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    pub m: usize,
    pub lambda: f64,
    /// Electronic ground-state energy (no `e_nuc`).
    pub e0: f64,
    pub ground_dets: Vec<Determinant>,
    pub ground_vector: DVector<f64>,
    pub ip_sector: SectorSpectrum,
    pub ea_sector: SectorSpectrum,
    /// Unmerged transition count (N−1 plus N+1 states).
    pub state_count: usize,
    pub poles: PoleSet,
}

impl ExactPropagator {
    /// Runs the three sector diagonalizations at scale `lambda`.
    pub fn new(ints: &IntegralSet, lambda: f64, cap: usize) -> Result<Self> {
        if !(-1.5..=1.5).contains(&lambda) {
            return Err(Error::Validation(format!(
                "lambda {lambda} outside [-1.5, 1.5]"
            )));
        }
        let m = ints.m;
        let n_e = ints.n_e;
        let sz0 = Determinant::aufbau(n_e).sz2();
        let gs = diagonalize_sector(ints, n_e, &[sz0], lambda, cap)?;
        let block = &gs.blocks[0];
        if block.energies.len() > 1 {
            let gap = block.energies[1] - block.energies[0];
            if gap < 1e-10 {
                return Err(Error::DegenerateGround { gap });
            }
        }
        let e0 = block.energies[0];
        let ground_dets = block.dets.clone();
        let ground_vector: DVector<f64> = block.vectors.column(0).into_owned();

        let ip_sector = diagonalize_sector(ints, n_e - 1, &[sz0 - 1, sz0 + 1], lambda, cap)?;
        let ea_sector = diagonalize_sector(ints, n_e + 1, &[sz0 - 1, sz0 + 1], lambda, cap)?;

        let mut raw: Vec<(f64, PoleKind, DVector<f64>)> = Vec::new();
        for (sector, kind) in [(&ip_sector, PoleKind::Ip), (&ea_sector, PoleKind::Ea)] {
            for b in &sector.blocks {
                let index: HashMap<u64, usize> = b
                    .dets
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (d.occupancy, i))
                    .collect();
                let mut a = DMatrix::zeros(b.dets.len(), m);
                for (j, d) in ground_dets.iter().enumerate() {
                    let c = ground_vector[j];
                    for p in 0..m {
                        let hit = match kind {
                            PoleKind::Ip => annihilate(d.occupancy, p),
                            PoleKind::Ea => create(d.occupancy, p),
                        };
                        if let Some((d1, s)) = hit {
                            if let Some(&row) = index.get(&d1) {
                                a[(row, p)] += s * c;
                            }
                        }
                    }
                }
                let x = b.vectors.transpose() * a;
                for (k, e) in b.energies.iter().enumerate() {
                    let omega = match kind {
                        PoleKind::Ip => e0 - e,
                        PoleKind::Ea => e - e0,
                    };
                    raw.push((omega, kind, x.row(k).transpose()));
                }
            }
        }
        let state_count = raw.len();
        raw.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then((a.1 == PoleKind::Ea).cmp(&(b.1 == PoleKind::Ea)))
        });
        let poles = merge_poles(raw, m);
        Ok(ExactPropagator {
            m,
            lambda,
            e0,
            ground_dets,
            ground_vector,
            ip_sector,
            ea_sector,
            state_count,
            poles,
        })
    }

    fn check_collision(&self, omega: f64) -> Result<()> {
        for p in &self.poles.poles {
            if (omega - p.omega).abs() < POLE_GUARD {
                return Err(Error::PoleCollision {
                    omega,
                    pole: p.omega,
                });
            }
        }
        Ok(())
    }

    /// Lehmann propagator G(ω), summed in ascending pole order.
    pub fn green(&self, omega: f64) -> Result<DMatrix<f64>> {
        self.check_collision(omega)?;
        let mut g = DMatrix::zeros(self.m, self.m);
        for p in &self.poles.poles {
            g += &p.residue / (omega - p.omega);
        }
        Ok(g)
    }

    /// dG/dω = −Σ R_k / (ω − ω_k)².
    pub fn green_derivative(&self, omega: f64) -> Result<DMatrix<f64>> {
        self.check_collision(omega)?;
        let mut g = DMatrix::zeros(self.m, self.m);
        for p in &self.poles.poles {
            let d = omega - p.omega;
            g -= &p.residue / (d * d);
        }
        Ok(g)
    }

    /// Number of positive eigenvalues of G(ω).
    fn positive_inertia(&self, omega: f64) -> Result<usize> {
        let g = self.green(omega)?;
        Ok(crate::linalg::sorted_eigenvalues(&g)
            .iter()
            .filter(|&&x| x > 0.0)
            .count())
    }

    /// Frequencies where G(ω) is singular, i.e. the poles of the exact
    /// self-energy, with multiplicities.
    ///
    /// Between two poles every eigenvalue of G decreases, so the number of
    /// positive eigenvalues is a nonincreasing step function whose steps are
    /// located by bisection.
    pub fn self_energy_singularities(&self) -> Result<Vec<(f64, usize)>> {
        let poles: Vec<&Pole> = self.poles.visible(1e-12);
        let expected: isize =
            poles.iter().map(|p| p.rank() as isize).sum::<isize>() - self.m as isize;
        let mut best: Vec<(f64, usize)> = Vec::new();
        for offset in [1e-7, 1e-10, 1e-13] {
            let mut found = Vec::new();
            for w in poles.windows(2) {
                let (lo, hi) = (w[0].omega, w[1].omega);
                let width = hi - lo;
                let a = lo + offset * width.max(1e-3);
                let b = hi - offset * width.max(1e-3);
                if !(a < b) {
                    continue;
                }
                let na = self.positive_inertia(a)?;
                let nb = self.positive_inertia(b)?;
                self.locate_steps(a, b, na, nb, &mut found)?;
            }
            let total: usize = found.iter().map(|x| x.1).sum();
            best = found;
            if total as isize == expected {
                break;
            }
        }
        Ok(best)
    }

    fn locate_steps(
        &self,
        mut a: f64,
        mut b: f64,
        na: usize,
        nb: usize,
        out: &mut Vec<(f64, usize)>,
    ) -> Result<()> {
        if na <= nb {
            return Ok(());
        }
        let mut na = na;
        let mut nb = nb;
        loop {
            let scale = a.abs().max(b.abs()).max(1.0);
            if b - a <= 4.0 * f64::EPSILON * scale {
                out.push((0.5 * (a + b), na - nb));
                return Ok(());
            }
            let mid = 0.5 * (a + b);
            let nm = self.positive_inertia(mid)?;
            if nm == na {
                a = mid;
            } else if nm == nb {
                b = mid;
            } else {
                // Steps on both sides of mid.
                self.locate_steps(a, mid, na, nm, out)?;
                a = mid;
                na = nm;
                let _ = &mut nb;
            }
        }
    }
}

fn merge_poles(raw: Vec<(f64, PoleKind, DVector<f64>)>, m: usize) -> PoleSet {
    let mut poles: Vec<Pole> = Vec::new();
    let mut cluster_start = f64::NAN;
    for (omega, kind, v) in raw {
        let join = match poles.last() {
            Some(last) => last.kind == kind && (omega - cluster_start).abs() < DEGENERACY_TOL,
            None => false,
        };
        let outer = &v * v.transpose();
        if join {
            let last = poles.last_mut().unwrap();
            let k = last.amplitudes.len() as f64;
            last.omega = (last.omega * k + omega) / (k + 1.0);
            last.residue += outer;
            last.amplitudes.push(v);
        } else {
            cluster_start = omega;
            let mut residue = DMatrix::zeros(m, m);
            residue += outer;
            poles.push(Pole {
                omega,
                kind,
                amplitudes: vec![v],
                residue,
            });
        }
    }
    PoleSet { poles }
}

/// Σ(ω) = ω − ε − G(ω)⁻¹ for a given propagator matrix.
pub fn exact_self_energy(eps: &[f64], g: &DMatrix<f64>, omega: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(g);
    let ginv = inverse_from_eigen(&vals, &vecs, omega)?;
    let mut s = -ginv;
    for p in 0..eps.len() {
        s[(p, p)] += omega - eps[p];
    }
    Ok(s)
}

fn inverse_from_eigen(vals: &[f64], vecs: &DMatrix<f64>, omega: f64) -> Result<DMatrix<f64>> {
    let big = vals.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let small = vals.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if big == 0.0 || small / big < 1e-12 {
        return Err(Error::Singular {
            omega,
            cond: if small == 0.0 { f64::INFINITY } else { big / small },
        });
    }
    let n = vals.len();
    let mut scaled = vecs.clone();
    for c in 0..n {
        for r in 0..n {
            scaled[(r, c)] /= vals[c];
        }
    }
    let mut inv = scaled * vecs.transpose();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Σ'(ω) = 1 + G⁻¹ G' G⁻¹, formed in the eigenbasis of G as
/// `1 + V (VᵀG'V)_ij / (g_i g_j) Vᵀ`. Next to a pole of G this avoids
/// multiplying the large G' by a nearly singular inverse.
pub fn self_energy_derivative_from_green(
    g: &DMatrix<f64>,
    dg: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(g);
    inverse_from_eigen(&vals, &vecs, omega)?;
    let mut inner = vecs.transpose() * dg * &vecs;
    let n = vals.len();
    for i in 0..n {
        for j in 0..n {
            inner[(i, j)] /= vals[i] * vals[j];
        }
    }
    let mut d = &vecs * inner * vecs.transpose();
    symmetrize(&mut d);
    for p in 0..n {
        d[(p, p)] += 1.0;
    }
    Ok(d)
}

/// Exact self-energy derivative at a Dyson root: the average of
/// `1 + G⁻¹G'G⁻¹` at `ω_q ± 1e−9`. If either side cannot be evaluated the
/// offset is widened tenfold, up to `1e−6`; the offset used is returned.
pub fn exact_self_energy_derivative(
    prop: &ExactPropagator,
    omega_q: f64,
) -> Result<(DMatrix<f64>, f64)> {
    exact_self_energy_derivative_with_offset(prop, omega_q, 1e-9)
}

pub fn exact_self_energy_derivative_with_offset(
    prop: &ExactPropagator,
    omega_q: f64,
    offset: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let mut h = offset;
    let mut last_err = None;
    while h <= 1e-6 * (1.0 + 1e-12) {
        let side = |w: f64| -> Result<DMatrix<f64>> {
            for p in &prop.poles.poles {
                if (w - p.omega).abs() < 1e-12 {
                    return Err(Error::PoleCollision { omega: w, pole: p.omega });
                }
            }
            let g = prop.green(w)?;
            let dg = prop.green_derivative(w)?;
            self_energy_derivative_from_green(&g, &dg, w)
        };
        match (side(omega_q - h), side(omega_q + h)) {
            (Ok(a), Ok(b)) => return Ok(((a + b) * 0.5, h)),
            (Err(e), _) | (_, Err(e)) => last_err = Some(e),
        }
        h *= 10.0;
    }
    Err(last_err.unwrap())
}

/// Exact self-energy of `H(λ)` as a [`SelfEnergy`] evaluator.
#[derive(Clone, Debug)]
pub struct ExactSelfEnergy {
    pub prop: ExactPropagator,
    eps: Vec<f64>,
    singular: Vec<(f64, usize)>,
    singular_flat: Vec<f64>,
}

impl ExactSelfEnergy {
    pub fn new(ints: &IntegralSet, lambda: f64, cap: usize) -> Result<Self> {
        let prop = ExactPropagator::new(ints, lambda, cap)?;
        Self::from_propagator(prop, ints.eps.clone())
    }

    pub fn from_propagator(prop: ExactPropagator, eps: Vec<f64>) -> Result<Self> {
        let singular = prop.self_energy_singularities()?;
        let mut singular_flat: Vec<f64> = singular.iter().map(|x| x.0).collect();
        singular_flat.dedup_by(|a, b| (*a - *b).abs() < DEGENERACY_TOL);
        Ok(ExactSelfEnergy {
            prop,
            eps,
            singular,
            singular_flat,
        })
    }

    /// Singular frequencies with multiplicity.
    pub fn singularities_with_multiplicity(&self) -> &[(f64, usize)] {
        &self.singular
    }

    /// Eigenpairs of G(ω), ascending.
    pub fn green_eigen(&self, omega: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let g = self.prop.green(omega)?;
        Ok(sorted_eigen(&g))
    }
}

impl SelfEnergy for ExactSelfEnergy {
    fn dim(&self) -> usize {
        self.prop.m
    }

    fn eps(&self) -> &[f64] {
        &self.eps
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::Exact
    }

    fn eval(&self, omega: f64) -> Result<DMatrix<f64>> {
        let (vals, vecs) = self.green_eigen(omega)?;
        let ginv = inverse_from_eigen(&vals, &vecs, omega)?;
        let mut s = -ginv;
        for p in 0..self.eps.len() {
            s[(p, p)] += omega - self.eps[p];
        }
        Ok(s)
    }

    fn singularities(&self) -> Vec<f64> {
        self.singular_flat.clone()
    }

    fn derivative(&self, omega: f64) -> Result<DMatrix<f64>> {
        let g = self.prop.green(omega)?;
        let dg = self.prop.green_derivative(omega)?;
        self_energy_derivative_from_green(&g, &dg, omega)
    }

    fn derivative_at_root(&self, omega: f64) -> Result<DMatrix<f64>> {
        Ok(exact_self_energy_derivative(&self.prop, omega)?.0)
    }

    /// Eigenvalues of ε + Σ(ω) = ω − G⁻¹ taken directly from the
    /// eigenvalues of G, which stay accurate next to a pole of G.
    fn dyson_eigen(&self, omega: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (vals, vecs) = self.green_eigen(omega)?;
        if vals.iter().any(|&g| g == 0.0) {
            return Err(Error::Singular {
                omega,
                cond: f64::INFINITY,
            });
        }
        let mut pairs: Vec<(f64, usize)> = vals
            .iter()
            .enumerate()
            .map(|(k, g)| (omega - 1.0 / g, k))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let mut out = DMatrix::zeros(n, n);
        for (c, &(_, k)) in pairs.iter().enumerate() {
            out.set_column(c, &vecs.column(k));
        }
        Ok((pairs.iter().map(|x| x.0).collect(), out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{generate_model, ModelSpec};

    #[test]
    fn vacuum_sector() {
        let d = enumerate_sector(6, 0, None);
        assert_eq!(d, vec![Determinant::new(0)]);
    }

    #[test]
    fn ascending_masks() {
        let d = enumerate_sector(8, 3, None);
        assert!(d.windows(2).all(|w| w[0].occupancy < w[1].occupancy));
        assert_eq!(d.len(), 56);
    }

    #[test]
    fn lambda_zero_is_diagonal() {
        let ints = generate_model(&ModelSpec::chain(1.0, 2.0, 4)).unwrap();
        let dets = enumerate_sector(8, 4, Some(0));
        let h = build_hamiltonian(&ints, &dets, 0.0, DEFAULT_SECTOR_CAP).unwrap();
        for (r, d) in dets.iter().enumerate() {
            let e: f64 = d.occupied().iter().map(|&p| ints.eps[p]).sum();
            assert_eq!(h[(r, r)], e);
            for c in 0..dets.len() {
                if c != r {
                    assert_eq!(h[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn dimer_ground_state() {
        for &u in &[1.0, 2.0, 4.0] {
            let ints = generate_model(&ModelSpec::dimer(1.0, u)).unwrap();
            let p = ExactPropagator::new(&ints, 1.0, DEFAULT_SECTOR_CAP).unwrap();
            let exact = (u - (u * u + 16.0f64).sqrt()) / 2.0;
            assert!((p.e0 - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let ints = generate_model(&ModelSpec::chain(1.0, 2.0, 4)).unwrap();
        let dets = enumerate_sector(8, 4, None);
        assert!(matches!(
            build_hamiltonian(&ints, &dets, 1.0, 10),
            Err(Error::SectorTooLarge { dim: 70, cap: 10 })
        ));
    }

    #[test]
    fn pole_collision_guard() {
        let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
        let p = ExactPropagator::new(&ints, 1.0, DEFAULT_SECTOR_CAP).unwrap();
        let w = p.poles.poles[0].omega;
        assert!(matches!(p.green(w), Err(Error::PoleCollision { .. })));
    }
}
