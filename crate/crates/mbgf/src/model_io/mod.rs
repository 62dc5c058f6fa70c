//! Integral containers, FCIDUMP input/output and built-in Hubbard models.
//!
//! Everything downstream works with antisymmetrized spin-orbital integrals
//! ⟨pq||rs⟩ = ⟨pq|rs⟩ − ⟨pq|sr⟩. Spin-orbitals are interleaved: index `2k` is
//! the α partner and `2k + 1` the β partner of spatial orbital `k`, so the
//! aufbau determinant occupies the first `n_e` spin-orbitals.

mod fcidump;
mod hubbard;

pub use fcidump::{parse_fcidump, write_fcidump, FcidumpHeader};
pub use hubbard::{generate_model, hubbard_rhf, HubbardRhf, ModelKind, ModelSpec};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Spin label of a spin-orbital.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spin {
    Alpha,
    Beta,
}

/// (spatial index, spin) pair describing one spin-orbital.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinOrbital {
    pub spatial: usize,
    pub spin: Spin,
}

impl SpinOrbital {
    pub fn of_index(p: usize) -> Self {
        SpinOrbital {
            spatial: p / 2,
            spin: if p % 2 == 0 { Spin::Alpha } else { Spin::Beta },
        }
    }

    /// Short text label such as `3a` or `0b`.
    pub fn label(&self) -> String {
        let s = match self.spin {
            Spin::Alpha => 'a',
            Spin::Beta => 'b',
        };
        format!("{}{}", self.spatial, s)
    }
}

/// Spatial-orbital integrals in chemists' notation.
#[derive(Clone, Debug)]
pub struct SpatialIntegrals {
    pub norb: usize,
    pub h: DMatrix<f64>,
    eri: Vec<f64>,
    pub e_nuc: f64,
    /// Orbital energies per spatial orbital, when known.
    pub eps: Option<Vec<f64>>,
}

impl SpatialIntegrals {
    pub fn zeros(norb: usize) -> Self {
        SpatialIntegrals {
            norb,
            h: DMatrix::zeros(norb, norb),
            eri: vec![0.0; norb.pow(4)],
            e_nuc: 0.0,
            eps: None,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.norb + j) * self.norb + k) * self.norb + l
    }

    /// (ij|kl)
    #[inline]
    pub fn eri(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.eri[self.idx(i, j, k, l)]
    }

    /// Stores (ij|kl) together with its eight permutational partners.
    pub fn set_eri(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        for (a, b, c, d) in [
            (i, j, k, l),
            (j, i, k, l),
            (i, j, l, k),
            (j, i, l, k),
            (k, l, i, j),
            (l, k, i, j),
            (k, l, j, i),
            (l, k, j, i),
        ] {
            let x = self.idx(a, b, c, d);
            self.eri[x] = value;
        }
    }

    pub fn set_h(&mut self, i: usize, j: usize, value: f64) {
        self.h[(i, j)] = value;
        self.h[(j, i)] = value;
    }
}

/// Spin-orbital integrals and reference data for one electronic system.
#[derive(Clone, Debug)]
pub struct IntegralSet {
    /// Number of spin-orbitals.
    pub m: usize,
    /// Number of electrons.
    pub n_e: usize,
    /// Zeroth-order orbital energies per spin-orbital (hartree).
    pub eps: Vec<f64>,
    /// Core Hamiltonian in the spin-orbital basis (hartree).
    pub hcore: DMatrix<f64>,
    v_as: Vec<f64>,
    /// Nuclear repulsion (hartree).
    pub e_nuc: f64,
    pub labels: Vec<SpinOrbital>,
    /// Chemical potential separating ionization from attachment roots.
    pub fermi_level: f64,
}

impl IntegralSet {
    /// Expands spatial integrals to antisymmetrized spin-orbital form.
    ///
    /// Orbital energies are taken from `sp.eps` when present and otherwise
    /// computed as the Fock diagonal `h_pp + Σ_i ⟨pi||pi⟩` over the aufbau
    /// occupied spin-orbitals.
    pub fn from_spatial(sp: &SpatialIntegrals, n_e: usize) -> Result<Self> {
        let n = sp.norb;
        let m = 2 * n;
        if n_e == 0 || n_e >= m {
            return Err(Error::Validation(format!(
                "electron count {n_e} must lie strictly between 0 and {m}"
            )));
        }
        if m > 64 {
            return Err(Error::Validation(format!(
                "{m} spin-orbitals exceed the 64-bit determinant limit"
            )));
        }
        let labels: Vec<SpinOrbital> = (0..m).map(SpinOrbital::of_index).collect();
        let mut hcore = DMatrix::zeros(m, m);
        for p in 0..m {
            for q in 0..m {
                if labels[p].spin == labels[q].spin {
                    hcore[(p, q)] = sp.h[(labels[p].spatial, labels[q].spatial)];
                }
            }
        }
        let mut v_as = vec![0.0; m.pow(4)];
        for p in 0..m {
            for q in 0..m {
                for r in 0..m {
                    for s in 0..m {
                        let (lp, lq, lr, ls) = (labels[p], labels[q], labels[r], labels[s]);
                        let mut x = 0.0;
                        if lp.spin == lr.spin && lq.spin == ls.spin {
                            x += sp.eri(lp.spatial, lr.spatial, lq.spatial, ls.spatial);
                        }
                        if lp.spin == ls.spin && lq.spin == lr.spin {
                            x -= sp.eri(lp.spatial, ls.spatial, lq.spatial, lr.spatial);
                        }
                        v_as[((p * m + q) * m + r) * m + s] = x;
                    }
                }
            }
        }
        let mut set = IntegralSet {
            m,
            n_e,
            eps: vec![0.0; m],
            hcore,
            v_as,
            e_nuc: sp.e_nuc,
            labels,
            fermi_level: 0.0,
        };
        set.eps = match &sp.eps {
            Some(e) => (0..m).map(|p| e[p / 2]).collect(),
            None => {
                // α and β copies share one value so spin symmetry is exact.
                let f = set.fock_diagonal();
                (0..m).map(|p| f[p & !1]).collect()
            }
        };
        set.fermi_level = set.midgap();
        Ok(set)
    }

    /// ⟨pq||rs⟩
    #[inline]
    pub fn v(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let m = self.m;
        self.v_as[((p * m + q) * m + r) * m + s]
    }

    pub fn norb(&self) -> usize {
        self.m / 2
    }

    pub fn nocc(&self) -> usize {
        self.n_e
    }

    pub fn nvir(&self) -> usize {
        self.m - self.n_e
    }

    /// Fock matrix of the aufbau determinant, f_pq = h_pq + Σ_i ⟨pi||qi⟩.
    pub fn fock_matrix(&self) -> DMatrix<f64> {
        let mut f = self.hcore.clone();
        for p in 0..self.m {
            for q in 0..self.m {
                for i in 0..self.n_e {
                    f[(p, q)] += self.v(p, i, q, i);
                }
            }
        }
        f
    }

    pub fn fock_diagonal(&self) -> Vec<f64> {
        (0..self.m)
            .map(|p| {
                let mut e = self.hcore[(p, p)];
                for i in 0..self.n_e {
                    e += self.v(p, i, p, i);
                }
                e
            })
            .collect()
    }

    /// Midpoint between the highest occupied and lowest virtual energy.
    pub fn midgap(&self) -> f64 {
        let homo = self.eps[..self.n_e].iter().cloned().fold(f64::MIN, f64::max);
        let lumo = self.eps[self.n_e..].iter().cloned().fold(f64::MAX, f64::min);
        0.5 * (homo + lumo)
    }

    /// Energy of the aufbau determinant including `e_nuc`.
    pub fn reference_energy(&self) -> f64 {
        let mut e = self.e_nuc;
        for i in 0..self.n_e {
            e += self.hcore[(i, i)];
            for j in 0..self.n_e {
                e += 0.5 * self.v(i, j, i, j);
            }
        }
        e
    }

    /// Recovers spatial integrals from the mixed-spin block ⟨iα kβ||jα lβ⟩ = (ij|kl).
    pub fn to_spatial(&self) -> SpatialIntegrals {
        let n = self.norb();
        let mut sp = SpatialIntegrals::zeros(n);
        for i in 0..n {
            for j in 0..n {
                sp.h[(i, j)] = self.hcore[(2 * i, 2 * j)];
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let x = sp.idx(i, j, k, l);
                        sp.eri[x] = self.v(2 * i, 2 * k + 1, 2 * j, 2 * l + 1);
                    }
                }
            }
        }
        sp.e_nuc = self.e_nuc;
        sp.eps = Some((0..n).map(|i| self.eps[2 * i]).collect());
        sp
    }

    /// Same integrals with every two-electron term multiplied by `scale`.
    /// Orbital energies are recomputed from the Fock diagonal.
    pub fn scaled_interaction(&self, scale: f64) -> IntegralSet {
        let mut out = self.clone();
        for x in out.v_as.iter_mut() {
            *x *= scale;
        }
        out.eps = out.fock_diagonal();
        out.fermi_level = out.midgap();
        out
    }
}
