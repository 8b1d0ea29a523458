//! Hard-cutoff correlation hierarchy for short chains.
//!
//! Correlators are expectation values of normal-ordered monomials
//! `prod_k φ_k^†^{a_k} φ_k^{b_k}` of the fluctuation field around a fixed
//! condensate amplitude. Their equations of motion follow from the
//! commutator with the normal-ordered fluctuation Hamiltonian, evaluated
//! with Wick contractions, plus the uniform loss `-(γ/2) N`. All
//! correlators above the cutoff order are set to zero and the steady
//! state is found by one sparse linear solve.

use std::collections::HashMap;
use std::fmt;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{bogoliubov_steady_state, dispersion_tables, SecondOrderState};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hoc::{evolve_to_steady_state, HocModel, HocOptions};
use crate::mean_field::{solve_mean_field, MeanField};
use crate::params::ModelParams;

pub const MAX_MODES: usize = 16;
pub const MAX_ORDER: usize = 6;
pub const DEFAULT_CAP: usize = 500_000;

const BITS: u32 = 4;
const NIBBLE: u128 = 0xf;

/// Exponents of a normal-ordered monomial packed four bits per slot:
/// slot `m` holds the creation exponent `a_m`, slot `MAX_MODES + m`
/// the annihilation exponent `b_m`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CorrelatorIndex(u128);

impl CorrelatorIndex {
    pub const IDENTITY: CorrelatorIndex = CorrelatorIndex(0);

    pub fn from_exponents(a: &[u8], b: &[u8]) -> Self {
        assert!(a.len() <= MAX_MODES && b.len() <= MAX_MODES);
        let mut key = CorrelatorIndex(0);
        for (m, &e) in a.iter().enumerate() {
            key = key.with_a(m, e);
        }
        for (m, &e) in b.iter().enumerate() {
            key = key.with_b(m, e);
        }
        key
    }

    fn get(self, slot: usize) -> u8 {
        ((self.0 >> (BITS as usize * slot)) & NIBBLE) as u8
    }

    fn set(self, slot: usize, e: u8) -> Self {
        debug_assert!(e < 16);
        let shift = BITS as usize * slot;
        CorrelatorIndex((self.0 & !(NIBBLE << shift)) | ((e as u128) << shift))
    }

    /// Creation exponent of mode `m`.
    pub fn a(self, m: usize) -> u8 {
        self.get(m)
    }

    /// Annihilation exponent of mode `m`.
    pub fn b(self, m: usize) -> u8 {
        self.get(MAX_MODES + m)
    }

    pub fn with_a(self, m: usize, e: u8) -> Self {
        self.set(m, e)
    }

    pub fn with_b(self, m: usize, e: u8) -> Self {
        self.set(MAX_MODES + m, e)
    }

    pub fn order(self) -> usize {
        (0..2 * MAX_MODES).map(|s| self.get(s) as usize).sum()
    }

    /// Index of the Hermitian conjugate monomial.
    pub fn conjugate(self) -> Self {
        let half = BITS as usize * MAX_MODES;
        let low = self.0 & ((1u128 << half) - 1);
        CorrelatorIndex((self.0 >> half) | (low << half))
    }

    pub fn is_self_conjugate(self) -> bool {
        self.conjugate() == self
    }

    /// Representative of the conjugate pair.
    pub fn is_canonical(self) -> bool {
        self <= self.conjugate()
    }

    /// Net momentum `sum_m m (b_m - a_m)` modulo `l`, in grid units.
    pub fn momentum(self, grid: &Grid) -> usize {
        let l = grid.len() as i64;
        let mut total = 0i64;
        for slot in 0..grid.len() {
            total += grid.m(slot) * (self.b(slot) as i64 - self.a(slot) as i64);
        }
        total.rem_euclid(l) as usize
    }

    pub fn conserves(self, grid: &Grid) -> bool {
        self.momentum(grid) == 0
    }

    fn masks(self) -> (u32, u32) {
        let mut cre = 0u32;
        let mut ann = 0u32;
        for m in 0..MAX_MODES {
            if self.a(m) > 0 {
                cre |= 1 << m;
            }
            if self.b(m) > 0 {
                ann |= 1 << m;
            }
        }
        (cre, ann)
    }

    fn sort_key(self) -> (usize, CorrelatorIndex) {
        (self.order(), self)
    }
}

impl fmt::Debug for CorrelatorIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        let mut first = true;
        for m in 0..MAX_MODES {
            for (e, dag) in [(self.a(m), "+"), (self.b(m), "")] {
                if e > 0 {
                    if !first {
                        write!(f, " ")?;
                    }
                    first = false;
                    write!(f, "{m}{dag}")?;
                    if e > 1 {
                        write!(f, "^{e}")?;
                    }
                }
            }
        }
        write!(f, ">")
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All canonical momentum-conserving indices with order in `1..=n_c`,
/// sorted by order and then by packed exponents.
pub fn enumerate_correlators(l: usize, n_c: usize, cap: usize) -> Result<Vec<CorrelatorIndex>> {
    if l < 2 || l % 2 == 1 || l > MAX_MODES {
        return Err(Error::InvalidParams(format!("hard cutoff needs even 2 <= L <= {MAX_MODES}, got {l}")));
    }
    if n_c == 0 || n_c > MAX_ORDER {
        return Err(Error::InvalidParams(format!("cutoff order must be in 1..={MAX_ORDER}, got {n_c}")));
    }
    // Monomials of degree <= n_c in 2L variables, thinned by conservation
    // (1/L) and conjugate pairing (1/2).
    let projected = (binomial(2 * l + n_c, n_c) / (2 * l) as f64) as usize;
    if projected > cap {
        return Err(Error::TooLarge { count: projected, cap });
    }
    let grid = Grid::new(l);
    let mut out = Vec::new();
    let mut exps = vec![0u8; 2 * l];
    fn recurse(slot: usize, left: usize, exps: &mut Vec<u8>, l: usize, grid: &Grid, out: &mut Vec<CorrelatorIndex>) {
        if slot == 2 * l {
            let idx = CorrelatorIndex::from_exponents(&exps[..l], &exps[l..]);
            if idx != CorrelatorIndex::IDENTITY && idx.conserves(grid) && idx.is_canonical() {
                out.push(idx);
            }
            return;
        }
        for e in 0..=left {
            exps[slot] = e as u8;
            recurse(slot + 1, left - e, exps, l, grid, out);
        }
        exps[slot] = 0;
    }
    recurse(0, n_c, &mut exps, l, &grid, &mut out);
    if out.len() > cap {
        return Err(Error::TooLarge { count: out.len(), cap });
    }
    out.sort_by_key(|i| i.sort_key());
    Ok(out)
}

/// One normal-ordered term of the fluctuation Hamiltonian.
#[derive(Debug, Clone, Copy)]
struct Term {
    mono: CorrelatorIndex,
    coeff: Complex64,
    cre: u32,
    ann: u32,
}

/// Normal-ordered fluctuation Hamiltonian around a fixed condensate
/// amplitude. Linear terms vanish because the amplitude is a stationary
/// mean-field solution.
pub struct FluctuationHamiltonian {
    grid: Grid,
    gamma: f64,
    terms: Vec<Term>,
}

impl FluctuationHamiltonian {
    pub fn new(params: &ModelParams, mf: &MeanField, quadratic_only: bool) -> Result<Self> {
        let l = params.l;
        if l > MAX_MODES {
            return Err(Error::InvalidParams(format!("hard cutoff needs L <= {MAX_MODES}, got {l}")));
        }
        let grid = Grid::new(l);
        let tables = dispersion_tables(mf, params)?;
        let u = params.u;
        let psi = mf.psi0;
        let un0 = mf.un0(u);
        let sl = (l as f64).sqrt();
        let mut acc: HashMap<CorrelatorIndex, Complex64> = HashMap::new();
        let mut add = |cre: &[usize], ann: &[usize], c: Complex64| {
            let mut mono = CorrelatorIndex::IDENTITY;
            for &m in cre {
                mono = mono.with_a(m, mono.a(m) + 1);
            }
            for &m in ann {
                mono = mono.with_b(m, mono.b(m) + 1);
            }
            *acc.entry(mono).or_default() += c;
        };
        for k in 0..l {
            add(&[k], &[k], Complex64::from(tables.eps[k] + un0));
            let mk = grid.neg(k);
            add(&[k, mk], &[], 0.5 * u * psi * psi);
            add(&[], &[k, mk], 0.5 * u * psi.conj() * psi.conj());
            if quadratic_only {
                continue;
            }
            for q in 0..l {
                let s = grid.add(k, q);
                add(&[k, q], &[s], u / sl * psi);
                add(&[s], &[k, q], u / sl * psi.conj());
                for p in 0..l {
                    let r = grid.sub(s, p);
                    add(&[k, q], &[p, r], Complex64::from(0.5 * u / l as f64));
                }
            }
        }
        let mut terms: Vec<Term> = acc
            .into_iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(mono, coeff)| {
                let (cre, ann) = mono.masks();
                Term { mono, coeff, cre, ann }
            })
            .collect();
        terms.sort_by_key(|t| t.mono.sort_key());
        Ok(FluctuationHamiltonian { grid, gamma: params.gamma, terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Time derivative of `<O>` as a list of (monomial, coefficient);
    /// the identity monomial carries the constant part.
    pub fn derivative(&self, o: CorrelatorIndex) -> Result<Vec<(CorrelatorIndex, Complex64)>> {
        let (o_cre, o_ann) = o.masks();
        let mut acc: HashMap<CorrelatorIndex, Complex64> = HashMap::new();
        let minus_i = Complex64::new(0.0, -1.0);
        // i d<O>/dt = <[O, H]> - i (γ/2) N <O>
        for t in &self.terms {
            if o_ann & t.cre != 0 {
                wick(o, t.mono, &mut |m, w| *acc.entry(m).or_default() += minus_i * t.coeff * w);
            }
            if t.ann & o_cre != 0 {
                wick(t.mono, o, &mut |m, w| *acc.entry(m).or_default() -= minus_i * t.coeff * w);
            }
        }
        *acc.entry(o).or_default() -= 0.5 * self.gamma * o.order() as f64;
        let mut out: Vec<_> = acc.into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
        for (m, _) in &out {
            if !m.conserves(&self.grid) {
                return Err(Error::InternalMismatch(format!("{o:?} couples to non-conserving {m:?}")));
            }
        }
        out.sort_by_key(|(m, _)| m.sort_key());
        Ok(out)
    }
}

/// Normal-ordered product `:x: :y:` minus its contraction-free part.
/// Annihilators of `x` contract with creators of `y`; `emit` receives
/// each remaining monomial with its combinatorial weight.
fn wick(x: CorrelatorIndex, y: CorrelatorIndex, emit: &mut dyn FnMut(CorrelatorIndex, f64)) {
    let modes: Vec<usize> = (0..MAX_MODES).filter(|&m| x.b(m) > 0 && y.a(m) > 0).collect();
    let mut base = x;
    for m in 0..MAX_MODES {
        base = base.with_a(m, x.a(m) + y.a(m)).with_b(m, x.b(m) + y.b(m));
    }
    fn go(
        i: usize,
        modes: &[usize],
        x: CorrelatorIndex,
        y: CorrelatorIndex,
        mono: CorrelatorIndex,
        weight: f64,
        contracted: bool,
        emit: &mut dyn FnMut(CorrelatorIndex, f64),
    ) {
        if i == modes.len() {
            if contracted {
                emit(mono, weight);
            }
            return;
        }
        let m = modes[i];
        let (alpha, beta) = (x.b(m) as usize, y.a(m) as usize);
        let mut fact = 1.0;
        for j in 0..=alpha.min(beta) {
            if j > 0 {
                fact *= j as f64;
            }
            let w = binomial(alpha, j) * binomial(beta, j) * fact;
            let next = mono.with_a(m, mono.a(m) - j as u8).with_b(m, mono.b(m) - j as u8);
            go(i + 1, modes, x, y, next, weight * w, contracted || j > 0, emit);
        }
    }
    go(0, &modes, x, y, base, 1.0, false, emit);
}

/// Linear steady-state system in real form. Each canonical index owns a
/// real unknown, plus an imaginary one unless it is self-conjugate.
pub struct HcSystem {
    pub l: usize,
    pub n_c: usize,
    pub index_list: Vec<CorrelatorIndex>,
    offsets: Vec<usize>,
    pub dim: usize,
    pub triplets: Vec<Triplet<usize, usize, f64>>,
    pub drive: Vec<f64>,
    /// Largest number of complex couplings in one row.
    pub max_row_nnz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HcOptions {
    pub cap: usize,
    /// Keep `<φ_0>` in the basis. Without it the condensate amplitude is
    /// pinned and the closure is connected, like the factorized scheme.
    pub first_order: bool,
    /// Drop the cubic and quartic interaction terms, leaving the
    /// quadratic Bogoliubov Hamiltonian.
    pub quadratic_only: bool,
}

impl Default for HcOptions {
    fn default() -> Self {
        HcOptions { cap: DEFAULT_CAP, first_order: true, quadratic_only: false }
    }
}

pub fn assemble_system(params: &ModelParams, mf: &MeanField, n_c: usize, opts: &HcOptions) -> Result<HcSystem> {
    let mut index_list = enumerate_correlators(params.l, n_c, opts.cap)?;
    if !opts.first_order {
        index_list.retain(|i| i.order() > 1);
    }
    let ham = FluctuationHamiltonian::new(params, mf, opts.quadratic_only)?;
    let mut lookup = HashMap::with_capacity(index_list.len());
    let mut offsets = Vec::with_capacity(index_list.len());
    let mut dim = 0;
    for (i, idx) in index_list.iter().enumerate() {
        lookup.insert(*idx, i);
        offsets.push(dim);
        dim += if idx.is_self_conjugate() { 1 } else { 2 };
    }
    let mut triplets = Vec::new();
    let mut drive = vec![0.0; dim];
    let mut max_row_nnz = 0;
    for (i, &row) in index_list.iter().enumerate() {
        let terms = ham.derivative(row)?;
        let r = offsets[i];
        let real_only = row.is_self_conjugate();
        let mut nnz = 0;
        for (mono, c) in terms {
            let order = mono.order();
            if order == 0 {
                drive[r] -= c.re;
                if !real_only {
                    drive[r + 1] -= c.im;
                }
                continue;
            }
            if order > n_c || (order == 1 && !opts.first_order) {
                continue;
            }
            let (j, sign) = match lookup.get(&mono) {
                Some(&j) => (j, 1.0),
                None => match lookup.get(&mono.conjugate()) {
                    Some(&j) => (j, -1.0),
                    None => return Err(Error::InternalMismatch(format!("{mono:?} missing from basis"))),
                },
            };
            nnz += 1;
            let col = offsets[j];
            let has_imag = !index_list[j].is_self_conjugate();
            // c (u + i s v) = (c_r u - s c_i v) + i (c_i u + s c_r v)
            triplets.push(Triplet::new(r, col, c.re));
            if has_imag {
                triplets.push(Triplet::new(r, col + 1, -sign * c.im));
            }
            if !real_only {
                triplets.push(Triplet::new(r + 1, col, c.im));
                if has_imag {
                    triplets.push(Triplet::new(r + 1, col + 1, sign * c.re));
                }
            }
        }
        max_row_nnz = max_row_nnz.max(nnz);
    }
    Ok(HcSystem { l: params.l, n_c, index_list, offsets, dim, triplets, drive, max_row_nnz })
}

impl HcSystem {
    pub fn value(&self, x: &[f64], i: usize) -> Complex64 {
        let o = self.offsets[i];
        if self.index_list[i].is_self_conjugate() {
            Complex64::new(x[o], 0.0)
        } else {
            Complex64::new(x[o], x[o + 1])
        }
    }

    pub fn solve(&self) -> Result<Vec<Complex64>> {
        let singular = |detail: String| Error::SingularSystem { detail };
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.dim, self.dim, &self.triplets)
            .map_err(|e| singular(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| singular(format!("LU failed: {e:?}")))?;
        let rhs = Mat::from_fn(self.dim, 1, |i, _| self.drive[i]);
        let sol = lu.solve(&rhs);
        let x: Vec<f64> = (0..self.dim).map(|i| sol[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(singular("non-finite solution".into()));
        }
        // residual relative to the drive as a conditioning check
        let mut res = self.drive.iter().map(|d| -d).collect::<Vec<_>>();
        for t in &self.triplets {
            res[t.row] += t.val * x[t.col];
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = norm(&res) / norm(&self.drive).max(f64::MIN_POSITIVE);
        if rel > 1e-8 {
            return Err(singular(format!("relative residual {rel:e}")));
        }
        Ok((0..self.index_list.len()).map(|i| self.value(&x, i)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct HcSolution {
    pub n_c: usize,
    pub index_list: Vec<CorrelatorIndex>,
    pub values: Vec<Complex64>,
    /// `<φ_0>`, zero below cutoff order one.
    pub phi0: Complex64,
    /// Second-order moments with the coherent part of the zero mode
    /// removed, so slot 0 is comparable with connected closures.
    pub second: SecondOrderState,
}

impl HcSolution {
    pub fn get(&self, idx: CorrelatorIndex) -> Complex64 {
        let find = |k: CorrelatorIndex| self.index_list.binary_search_by_key(&k.sort_key(), |i| i.sort_key()).ok();
        if let Some(i) = find(idx) {
            self.values[i]
        } else if let Some(i) = find(idx.conjugate()) {
            self.values[i].conj()
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

pub fn solve_hc(params: &ModelParams, mf: &MeanField, n_c: usize, opts: &HcOptions) -> Result<HcSolution> {
    params.validate()?;
    let sys = assemble_system(params, mf, n_c, opts)?;
    let values = sys.solve()?;
    let grid = Grid::new(params.l);
    let mut sol = HcSolution {
        n_c,
        index_list: sys.index_list,
        values,
        phi0: Complex64::new(0.0, 0.0),
        second: SecondOrderState::zeros(params.l),
    };
    let zero = CorrelatorIndex::IDENTITY;
    sol.phi0 = sol.get(zero.with_b(0, 1));
    for k in 0..params.l {
        let mk = grid.neg(k);
        sol.second.n[k] = sol.get(zero.with_a(k, 1).with_b(k, 1)).re;
        let pair = if mk == k { zero.with_b(k, 2) } else { zero.with_b(k, 1).with_b(mk, 1) };
        sol.second.c[k] = sol.get(pair);
    }
    sol.second.n[0] -= sol.phi0.norm_sqr();
    sol.second.c[0] -= sol.phi0 * sol.phi0;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// The factorized closure evolved by the correlation solver.
    Fc,
    /// Hard cutoff at the given order.
    Hc(usize),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Fc => write!(f, "FC"),
            Scheme::Hc(n) => write!(f, "HC{n}"),
        }
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        if t == "FC" {
            return Ok(Scheme::Fc);
        }
        t.strip_prefix("HC")
            .and_then(|n| n.parse().ok())
            .filter(|n| (1..=MAX_ORDER).contains(n))
            .map(Scheme::Hc)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}, expected FC or HC1..HC{MAX_ORDER}")))
    }
}

/// Mean relative deviation `1/L sum_k |n_k - n_k^bog| / n_k^bog`.
pub fn delta_n(n: &[f64], bog: &[f64]) -> f64 {
    n.iter().zip(bog).map(|(x, b)| (x - b).abs() / b).sum::<f64>() / n.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationRow {
    pub scheme: Scheme,
    pub u: f64,
    pub delta_n: f64,
    /// `n_k - n_k^bog` in slot order.
    pub dn: Vec<f64>,
}

/// Steady occupations for one scheme.
pub fn scheme_occupations(params: &ModelParams, scheme: Scheme, opts: &HcOptions) -> Result<Vec<f64>> {
    let mf = solve_mean_field(params)?;
    match scheme {
        Scheme::Hc(n_c) => Ok(solve_hc(params, &mf, n_c, opts)?.second.n),
        Scheme::Fc => {
            let tables = dispersion_tables(&mf, params)?;
            let model = HocModel::new(params, &mf, &tables, HocOptions::default());
            let (state, _) = evolve_to_steady_state(&model, &tables)?;
            Ok(state.n)
        }
    }
}

/// Δn for every scheme and coupling, with `params.u` replaced by each
/// entry of `couplings`.
pub fn compare_truncations(params: &ModelParams, schemes: &[Scheme], couplings: &[f64], opts: &HcOptions) -> Result<Vec<TruncationRow>> {
    let mut rows = Vec::new();
    for &u in couplings {
        let p = params.with_coupling(u);
        let mf = solve_mean_field(&p)?;
        let bog = bogoliubov_steady_state(&dispersion_tables(&mf, &p)?, &mf).n;
        for &scheme in schemes {
            let n = if u == 0.0 { bog.clone() } else { scheme_occupations(&p, scheme, opts)? };
            rows.push(TruncationRow {
                scheme,
                u,
                delta_n: delta_n(&n, &bog),
                dn: n.iter().zip(&bog).map(|(x, b)| x - b).collect(),
            });
        }
    }
    Ok(rows)
}
