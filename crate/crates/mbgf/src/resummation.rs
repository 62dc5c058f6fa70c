//! Infinite partial summations: the ladder TDA(2) vertex and diagonal
//! self-consistent second order (sc-GF2).
//!
//! TDA(2) solves, by repeated substitution from `U = V = 0`,
//!
//! ```text
//! (ω + eps_i − eps_a − eps_b) U^ab_pi = ⟨ab||pi⟩ − P(ab) Σ_ck ⟨ak||ci⟩ U^cb_pk + ½ Σ_cd ⟨ab||cd⟩ U^cd_pi
//! (eps_i + eps_j − ω − eps_a) V^qa_ij = ⟨qa||ij⟩ − P(ij) Σ_ck ⟨ka||ic⟩ V^qc_kj + ½ Σ_kl ⟨kl||ij⟩ V^qa_kl
//! Σ_pq = ½ Σ_iab ⟨qi||ab⟩ U^ab_pi − ½ Σ_ija ⟨ij||pa⟩ V^qa_ij
//! ```
//!
//! with `P(ab) X_ab = X_ab − X_ba`. One substitution gives the first-order
//! amplitudes and hence Σ⁽²⁾; cycle `n` contains ladders through order
//! `n + 1`.
//!
//! sc-GF2 replaces the orbital energies in Σ⁽²⁾ by the diagonal Dyson roots
//! of the previous cycle, weighted by their residues:
//!
//! ```text
//! Σ_qq(ω) = ½ Σ_prs ⟨rs||qp⟩² Σ_{I∈IP(p)} Σ_{A∈EA(r)} Σ_{B∈EA(s)} F_I F_A F_B / (ω − (ω_A + ω_B − ω_I))
//!         + ½ Σ_prs ⟨rs||qp⟩² Σ_{A∈EA(p)} Σ_{I∈IP(r)} Σ_{J∈IP(s)} F_A F_I F_J / (ω − (ω_I + ω_J − ω_A))
//! ```
//!
//! Every orbital contributes all of its ionization and attachment poles, so
//! satellites created in one cycle feed the next.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dyson::{find_brackets, solve_diagonal, EvaluatorKind, SelfEnergy, SolveOptions};
use crate::error::{Error, Result};
use crate::fci::PoleKind;
use crate::linalg::symmetrize;
use crate::model_io::IntegralSet;

/// Smallest |denominator| accepted in the amplitude equations.
pub const TDA_GUARD: f64 = 1e-10;
/// Residue products below this are left out of the sc-GF2 sums.
pub const FFF_FLOOR: f64 = 1e-18;
/// Roots closer than this to a pole are placed analytically.
const TIGHT_ROOT: f64 = 1e-9;
/// Default cap on the number of poles of an sc-GF2 cycle.
pub const DEFAULT_POLE_CAP: usize = 1_000_000;

/// Ladder amplitudes at one frequency.
#[derive(Clone, Debug)]
pub struct AmplitudePair {
    pub omega: f64,
    pub cycles: usize,
    m: usize,
    nocc: usize,
    nvir: usize,
    /// Spectator orbitals stored, in order.
    spectators: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl AmplitudePair {
    fn slot(&self, p: usize) -> usize {
        self.spectators
            .iter()
            .position(|&x| x == p)
            .expect("spectator orbital not computed")
    }

    /// U^ab_pi with `a`, `b` virtual and `i` occupied spin-orbital indices.
    pub fn u(&self, a: usize, b: usize, p: usize, i: usize) -> f64 {
        let (no, nv) = (self.nocc, self.nvir);
        let s = self.slot(p);
        self.u[((s * no + i) * nv + (a - no)) * nv + (b - no)]
    }

    /// V^qa_ij.
    pub fn v(&self, q: usize, a: usize, i: usize, j: usize) -> f64 {
        let (no, nv) = (self.nocc, self.nvir);
        let s = self.slot(q);
        self.v[((s * nv + (a - no)) * no + i) * no + j]
    }

    pub fn dim(&self) -> usize {
        self.m
    }
}

/// `n_cycles` Jacobi substitutions of the amplitude equations at ω.
pub fn tda2_iterate(ints: &IntegralSet, omega: f64, n_cycles: usize) -> Result<AmplitudePair> {
    let all: Vec<usize> = (0..ints.m).collect();
    tda2_iterate_for(ints, omega, n_cycles, &all)
}

fn tda2_iterate_for(
    ints: &IntegralSet,
    omega: f64,
    n_cycles: usize,
    spectators: &[usize],
) -> Result<AmplitudePair> {
    let m = ints.m;
    let no = ints.n_e;
    let nv = m - no;
    let e = &ints.eps;
    let ns = spectators.len();
    let uidx = |s: usize, i: usize, a: usize, b: usize| ((s * no + i) * nv + a) * nv + b;
    let vidx = |s: usize, a: usize, i: usize, j: usize| ((s * nv + a) * no + i) * no + j;

    let mut du = vec![0.0; no * nv * nv];
    for i in 0..no {
        for a in 0..nv {
            for b in 0..nv {
                let d = omega + e[i] - e[no + a] - e[no + b];
                if a != b && d.abs() < TDA_GUARD {
                    return Err(Error::SingularFrequency {
                        omega,
                        denominator: d.abs(),
                    });
                }
                du[(i * nv + a) * nv + b] = d;
            }
        }
    }
    let mut dv = vec![0.0; nv * no * no];
    for a in 0..nv {
        for i in 0..no {
            for j in 0..no {
                let d = e[i] + e[j] - omega - e[no + a];
                if i != j && d.abs() < TDA_GUARD {
                    return Err(Error::SingularFrequency {
                        omega,
                        denominator: d.abs(),
                    });
                }
                dv[(a * no + i) * no + j] = d;
            }
        }
    }

    let mut u = vec![0.0; ns * no * nv * nv];
    let mut v = vec![0.0; ns * nv * no * no];
    for _ in 0..n_cycles {
        let mut un = vec![0.0; u.len()];
        let mut vn = vec![0.0; v.len()];
        for (s, &p) in spectators.iter().enumerate() {
            for i in 0..no {
                for a in 0..nv {
                    for b in 0..nv {
                        if a == b {
                            continue;
                        }
                        let (aa, bb) = (no + a, no + b);
                        let mut r = ints.v(aa, bb, p, i);
                        for c in 0..nv {
                            for k in 0..no {
                                r -= ints.v(aa, k, no + c, i) * u[uidx(s, k, c, b)];
                                r += ints.v(bb, k, no + c, i) * u[uidx(s, k, c, a)];
                            }
                        }
                        for c in 0..nv {
                            for d in 0..nv {
                                r += 0.5 * ints.v(aa, bb, no + c, no + d) * u[uidx(s, i, c, d)];
                            }
                        }
                        un[uidx(s, i, a, b)] = r / du[(i * nv + a) * nv + b];
                    }
                }
            }
            for a in 0..nv {
                for i in 0..no {
                    for j in 0..no {
                        if i == j {
                            continue;
                        }
                        let aa = no + a;
                        let mut r = ints.v(p, aa, i, j);
                        for c in 0..nv {
                            for k in 0..no {
                                r -= ints.v(k, aa, i, no + c) * v[vidx(s, c, k, j)];
                                r += ints.v(k, aa, j, no + c) * v[vidx(s, c, k, i)];
                            }
                        }
                        for k in 0..no {
                            for l in 0..no {
                                r += 0.5 * ints.v(k, l, i, j) * v[vidx(s, a, k, l)];
                            }
                        }
                        vn[vidx(s, a, i, j)] = r / dv[(a * no + i) * no + j];
                    }
                }
            }
        }
        u = un;
        v = vn;
    }
    Ok(AmplitudePair {
        omega,
        cycles: n_cycles,
        m,
        nocc: no,
        nvir: nv,
        spectators: spectators.to_vec(),
        u,
        v,
    })
}

/// Σ^TDA(2) from amplitudes computed for every orbital.
pub fn tda2_sigma(ints: &IntegralSet, amps: &AmplitudePair) -> DMatrix<f64> {
    let m = ints.m;
    let mut s = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            s[(p, q)] = tda2_element(ints, amps, p, q);
        }
    }
    s
}

fn tda2_element(ints: &IntegralSet, amps: &AmplitudePair, p: usize, q: usize) -> f64 {
    let (no, m) = (ints.n_e, ints.m);
    let mut x = 0.0;
    for i in 0..no {
        for a in no..m {
            for b in no..m {
                x += 0.5 * ints.v(q, i, a, b) * amps.u(a, b, p, i);
            }
        }
    }
    for i in 0..no {
        for j in 0..no {
            for a in no..m {
                x -= 0.5 * ints.v(i, j, p, a) * amps.v(q, a, i, j);
            }
        }
    }
    x
}

/// TDA(2) self-energy after a fixed number of cycles.
#[derive(Clone, Debug)]
pub struct Tda2 {
    ints: IntegralSet,
    cycles: usize,
    singular: Vec<f64>,
}

impl Tda2 {
    pub fn new(ints: &IntegralSet, cycles: usize) -> Self {
        let (no, m, e) = (ints.n_e, ints.m, &ints.eps);
        let mut s = Vec::new();
        for i in 0..no {
            for a in no..m {
                for b in no..m {
                    if a != b {
                        s.push((e[a] + e[b]) - e[i]);
                    }
                }
            }
        }
        for a in no..m {
            for i in 0..no {
                for j in 0..no {
                    if i != j {
                        s.push((e[i] + e[j]) - e[a]);
                    }
                }
            }
        }
        s.sort_by(f64::total_cmp);
        s.dedup();
        Tda2 {
            ints: ints.clone(),
            cycles,
            singular: s,
        }
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }
}

impl SelfEnergy for Tda2 {
    fn dim(&self) -> usize {
        self.ints.m
    }

    fn eps(&self) -> &[f64] {
        &self.ints.eps
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::Tda2 {
            cycles: self.cycles,
        }
    }

    fn eval(&self, omega: f64) -> Result<DMatrix<f64>> {
        let amps = tda2_iterate(&self.ints, omega, self.cycles)?;
        let mut s = tda2_sigma(&self.ints, &amps);
        symmetrize(&mut s);
        Ok(s)
    }

    fn eval_diag(&self, omega: f64, q: usize) -> Result<f64> {
        let amps = tda2_iterate_for(&self.ints, omega, self.cycles, &[q])?;
        Ok(tda2_element(&self.ints, &amps, q, q))
    }

    fn singularities(&self) -> Vec<f64> {
        self.singular.clone()
    }
}

/// One pole of a diagonal sc-GF2 propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScPole {
    pub omega: f64,
    pub residue: f64,
    pub kind: PoleKind,
}

/// Per-orbital pole lists feeding the next sc-GF2 cycle.
#[derive(Clone, Debug)]
pub struct ScPoleState {
    /// Number of completed cycles; `None` for the mean-field start.
    pub cycle: Option<usize>,
    pub poles: Vec<Vec<ScPole>>,
}

impl ScPoleState {
    /// Mean-field start: one pole at `eps_q` with unit residue per orbital.
    pub fn initial(ints: &IntegralSet) -> Self {
        let poles = (0..ints.m)
            .map(|q| {
                vec![ScPole {
                    omega: ints.eps[q],
                    residue: 1.0,
                    kind: if q < ints.n_e { PoleKind::Ip } else { PoleKind::Ea },
                }]
            })
            .collect();
        ScPoleState { cycle: None, poles }
    }

    pub fn total(&self) -> usize {
        self.poles.iter().map(Vec::len).sum()
    }

    pub fn count(&self, kind: PoleKind) -> usize {
        self.poles.iter().flatten().filter(|p| p.kind == kind).count()
    }

    /// Σ F per orbital.
    pub fn residue_sums(&self) -> Vec<f64> {
        self.poles
            .iter()
            .map(|v| v.iter().map(|p| p.residue).sum())
            .collect()
    }

    fn of_kind(&self, q: usize, kind: PoleKind) -> Vec<ScPole> {
        self.poles[q].iter().filter(|p| p.kind == kind).cloned().collect()
    }
}

/// Diagonal self-energy that is a sum of positive-weight simple poles per
/// orbital, summed in stored order.
#[derive(Clone, Debug)]
pub struct ScGf2 {
    eps: Vec<f64>,
    cycle: usize,
    /// (position, weight) per orbital.
    pub poles: Vec<Vec<(f64, f64)>>,
    /// Weight left out because F·F·F fell below [`FFF_FLOOR`].
    pub skipped_weight: f64,
    singular_diag: Vec<Vec<f64>>,
}

impl ScGf2 {
    /// Builds the self-energy of the next cycle from `state`.
    pub fn build(ints: &IntegralSet, state: &ScPoleState, pole_cap: usize) -> Result<Self> {
        let m = ints.m;
        let ip: Vec<Vec<ScPole>> = (0..m).map(|p| state.of_kind(p, PoleKind::Ip)).collect();
        let ea: Vec<Vec<ScPole>> = (0..m).map(|p| state.of_kind(p, PoleKind::Ea)).collect();

        let mut projected = 0usize;
        for q in 0..m {
            for p in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        if ints.v(r, s, q, p) != 0.0 {
                            projected = projected
                                .saturating_add(ip[p].len() * ea[r].len() * ea[s].len())
                                .saturating_add(ea[p].len() * ip[r].len() * ip[s].len());
                        }
                    }
                }
            }
            projected = projected.saturating_add(1);
        }
        if projected > pole_cap {
            return Err(Error::PoleCap {
                projected,
                cap: pole_cap,
            });
        }

        let per: Vec<(Vec<(f64, f64)>, f64)> = (0..m)
            .into_par_iter()
            .map(|q| {
                let mut out = Vec::new();
                let mut skipped = 0.0;
                let mut push = |v: f64, x: &ScPole, y: &ScPole, z: &ScPole, pos: f64| {
                    let base = (0.5 * v) * v;
                    let fff = x.residue * y.residue * z.residue;
                    if fff < FFF_FLOOR {
                        skipped += base * fff;
                        return;
                    }
                    let w = base * x.residue * y.residue * z.residue;
                    if w != 0.0 {
                        out.push((pos, w));
                    }
                };
                for p in 0..m {
                    for i in &ip[p] {
                        for r in 0..m {
                            for a in &ea[r] {
                                for s in 0..m {
                                    let v = ints.v(r, s, q, p);
                                    if v == 0.0 {
                                        continue;
                                    }
                                    for b in &ea[s] {
                                        push(v, i, a, b, (a.omega + b.omega) - i.omega);
                                    }
                                }
                            }
                        }
                    }
                }
                for p in 0..m {
                    for a in &ea[p] {
                        for r in 0..m {
                            for i in &ip[r] {
                                for s in 0..m {
                                    let v = ints.v(r, s, q, p);
                                    if v == 0.0 {
                                        continue;
                                    }
                                    for j in &ip[s] {
                                        push(v, a, i, j, (i.omega + j.omega) - a.omega);
                                    }
                                }
                            }
                        }
                    }
                }
                (out, skipped)
            })
            .collect();
        let skipped_weight = per.iter().map(|x| x.1).sum();
        let poles: Vec<Vec<(f64, f64)>> = per.into_iter().map(|x| x.0).collect();
        let singular_diag = poles
            .iter()
            .map(|v| {
                let mut s: Vec<f64> = v.iter().map(|x| x.0).collect();
                s.sort_by(f64::total_cmp);
                s.dedup();
                s
            })
            .collect();
        Ok(ScGf2 {
            eps: ints.eps.clone(),
            cycle: state.cycle.map_or(0, |c| c + 1),
            poles,
            skipped_weight,
            singular_diag,
        })
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    /// Replaces roots that lie closer to a pole than bisection can resolve.
    ///
    /// Near a pole group at `s` with weight `W`, the Dyson function is
    /// `D(ω) − W/(ω − s)` with `D = ω − eps_q − Σ_others` smooth, so the
    /// adjacent root is `s + W/D(s)` with residue `1/(1 + D²/W − Σ'_others)`.
    /// Weak poles put that root within one ulp of `s`, where evaluating
    /// `W/(ω − s)²` directly gives a meaningless residue, or bisection
    /// misses the root entirely.
    fn tighten_roots(&self, q: usize, mut roots: Vec<ScPole>, fermi: f64) -> Vec<ScPole> {
        for &s in &self.singular_diag[q] {
            let (mut w, mut rest, mut slope) = (0.0, 0.0, 0.0);
            for &(pos, x) in &self.poles[q] {
                let d = s - pos;
                if d.abs() < crate::dyson::SINGULARITY_MERGE {
                    w += x;
                } else {
                    rest += x / d;
                    slope -= x / (d * d);
                }
            }
            let dfun = s - self.eps[q] - rest;
            let delta = w / dfun;
            if !(delta.abs() < TIGHT_ROOT) {
                continue;
            }
            let omega = s + delta;
            roots.retain(|r| (r.omega - omega).abs() >= 100.0 * TIGHT_ROOT);
            roots.push(ScPole {
                omega,
                residue: 1.0 / (1.0 + dfun * dfun / w - slope),
                kind: if omega < fermi { PoleKind::Ip } else { PoleKind::Ea },
            });
        }
        roots.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        roots
    }

    /// Window that holds every root of every orbital: beyond
    /// `extreme ± (1 + W)` the pole sum is smaller than 1 in magnitude.
    pub fn root_window(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut w = 0.0f64;
        for (q, v) in self.poles.iter().enumerate() {
            lo = lo.min(self.eps[q]);
            hi = hi.max(self.eps[q]);
            let mut wq = 0.0;
            for &(s, x) in v {
                lo = lo.min(s);
                hi = hi.max(s);
                wq += x;
            }
            w = w.max(wq);
        }
        (lo - 1.0 - w, hi + 1.0 + w)
    }
}

impl SelfEnergy for ScGf2 {
    fn dim(&self) -> usize {
        self.eps.len()
    }

    fn eps(&self) -> &[f64] {
        &self.eps
    }

    fn kind(&self) -> EvaluatorKind {
        EvaluatorKind::ScGf2 { cycle: self.cycle }
    }

    fn eval(&self, omega: f64) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let mut s = DMatrix::zeros(m, m);
        for q in 0..m {
            s[(q, q)] = self.eval_diag(omega, q)?;
        }
        Ok(s)
    }

    fn eval_diag(&self, omega: f64, q: usize) -> Result<f64> {
        let mut s = 0.0;
        for &(pos, w) in &self.poles[q] {
            let d = omega - pos;
            if d == 0.0 {
                return Err(Error::SingularFrequency {
                    omega,
                    denominator: 0.0,
                });
            }
            s += w / d;
        }
        Ok(s)
    }

    fn singularities(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.singular_diag.iter().flatten().cloned().collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    fn singularities_diag(&self, q: usize) -> Vec<f64> {
        self.singular_diag[q].clone()
    }

    fn derivative(&self, omega: f64) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let mut s = DMatrix::zeros(m, m);
        for q in 0..m {
            s[(q, q)] = self.derivative_diag(omega, q)?;
        }
        Ok(s)
    }

    fn derivative_diag(&self, omega: f64, q: usize) -> Result<f64> {
        let mut s = 0.0;
        for &(pos, w) in &self.poles[q] {
            let d = omega - pos;
            s -= w / (d * d);
        }
        Ok(s)
    }

    fn monotone_diag(&self) -> bool {
        true
    }
}

/// Summary of one sc-GF2 cycle.
#[derive(Clone, Debug)]
pub struct CycleReport {
    pub cycle: usize,
    /// Simple poles in the cycle's self-energy, summed over orbitals.
    pub sigma_terms: usize,
    /// Distinct singular frequencies after merging within 1e−10, summed
    /// over orbitals.
    pub sigma_singularities: usize,
    /// Diagonal Dyson roots, i.e. poles of the new propagator.
    pub pole_count: usize,
    pub ip_count: usize,
    pub ea_count: usize,
    pub min_pole: f64,
    pub max_pole: f64,
    /// max_q |Σ F − 1| over the new state.
    pub max_sum_rule_deviation: f64,
    pub skipped_weight: f64,
}

/// One sc-GF2 cycle: build Σ from `state`, solve the diagonal Dyson
/// equation of every orbital, and return the evaluator, the new state and
/// a report.
pub fn scgf2_cycle(
    ints: &IntegralSet,
    state: &ScPoleState,
    pole_cap: usize,
) -> Result<(ScGf2, ScPoleState, CycleReport)> {
    let se = ScGf2::build(ints, state, pole_cap)?;
    let opts = SolveOptions::new(se.root_window(), ints.fermi_level);
    let roots: Vec<Result<Vec<ScPole>>> = (0..ints.m)
        .into_par_iter()
        .map(|q| {
            let r = solve_diagonal(&se, q, &opts)?;
            let found = r
                .roots
                .iter()
                .map(|x| ScPole {
                    omega: x.omega,
                    residue: x.residue,
                    kind: x.kind,
                })
                .collect();
            Ok(se.tighten_roots(q, found, ints.fermi_level))
        })
        .collect();
    let poles = roots.into_iter().collect::<Result<Vec<_>>>()?;
    let next = ScPoleState {
        cycle: Some(se.cycle),
        poles,
    };
    let all: Vec<f64> = next.poles.iter().flatten().map(|p| p.omega).collect();
    let report = CycleReport {
        cycle: se.cycle,
        sigma_terms: se.poles.iter().map(Vec::len).sum(),
        sigma_singularities: (0..ints.m)
            .map(|q| find_brackets(&se.singularities_diag(q), opts.window).len() - 1)
            .sum(),
        pole_count: next.total(),
        ip_count: next.count(PoleKind::Ip),
        ea_count: next.count(PoleKind::Ea),
        min_pole: all.iter().cloned().fold(f64::INFINITY, f64::min),
        max_pole: all.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_sum_rule_deviation: next
            .residue_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max),
        skipped_weight: se.skipped_weight,
    };
    Ok((se, next, report))
}

/// Drops poles with `F < floor`, always keeping the largest-F pole of each
/// orbital. Nothing is renormalized.
pub fn prune_poles(state: &ScPoleState, floor: f64) -> ScPoleState {
    let poles = state
        .poles
        .iter()
        .map(|v| {
            let best = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.residue.total_cmp(&b.1.residue))
                .map(|x| x.0);
            v.iter()
                .enumerate()
                .filter(|(k, p)| p.residue >= floor || Some(*k) == best)
                .map(|(_, p)| *p)
                .collect()
        })
        .collect();
    ScPoleState {
        cycle: state.cycle,
        poles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{generate_model, ModelSpec};
    use crate::perturbation::Sigma2;

    #[test]
    fn one_cycle_is_sigma2() {
        let ints = generate_model(&ModelSpec::chain(1.0, 2.0, 4).with_site_energies(vec![0.3])).unwrap();
        let s2 = Sigma2::pole_sum(&ints);
        let t = Tda2::new(&ints, 1);
        for &w in &[-2.3, 0.4, 1.9, 6.1] {
            let d = (t.eval(w).unwrap() - s2.eval(w).unwrap()).amax();
            assert!(d < 1e-13, "{d}");
        }
    }

    #[test]
    fn zero_cycles_vanish() {
        let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
        assert_eq!(Tda2::new(&ints, 0).eval(0.3).unwrap().amax(), 0.0);
    }

    #[test]
    fn diagonal_matches_matrix() {
        let ints = generate_model(&ModelSpec::chain(1.0, 3.0, 4)).unwrap();
        let t = Tda2::new(&ints, 5);
        let full = t.eval(0.81).unwrap();
        for q in 0..ints.m {
            assert!((t.eval_diag(0.81, q).unwrap() - full[(q, q)]).abs() < 1e-13);
        }
    }

    #[test]
    fn prune_boundaries() {
        let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
        let (_, st, _) = scgf2_cycle(&ints, &ScPoleState::initial(&ints), DEFAULT_POLE_CAP).unwrap();
        assert_eq!(prune_poles(&st, 0.0).total(), st.total());
        assert_eq!(prune_poles(&st, 1.0).total(), ints.m);
    }

    #[test]
    fn pole_cap_is_enforced() {
        let ints = generate_model(&ModelSpec::dimer(1.0, 2.0)).unwrap();
        let r = scgf2_cycle(&ints, &ScPoleState::initial(&ints), 3);
        assert!(matches!(r, Err(Error::PoleCap { .. })));
    }
}
