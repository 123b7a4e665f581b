//! Tensor-product states of identical particles.
//!
//! An [`NPartyState`] stores its coefficients in the orthonormal grid basis of
//! every factor space (continuum amplitude times `sqrt(dx)` per party), flat
//! and row-major: slot 0 is the slowest index. The coefficient vector has unit
//! Euclidean norm.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{overlap_measure, Grid, Interval, WaveFunction};
use crate::scalar::{cplx, from_usize, lit, modulus, to_f64, Real, C};

/// Largest supported number of parties.
pub const MAX_PARTIES: usize = 3;
/// Largest supported number of tensor entries (`dim^n_parties`).
pub const MAX_TENSOR_LEN: usize = 1 << 22;
/// Tolerance for the unit-norm and index-symmetry invariants.
pub const STATE_TOL: f64 = 1e-10;
/// A fermionic symmetrization whose pre-normalization norm falls below this
/// is reported as a Pauli zero.
pub const PAULI_TOL: f64 = 1e-12;
/// Above this overlap two packets no longer count as spatially disjoint.
pub const DISJOINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Bosonic,
    Fermionic,
    None,
}

impl Symmetry {
    fn sign<T: Real>(self, odd: bool) -> T {
        match (self, odd) {
            (Symmetry::Fermionic, true) => -T::one(),
            _ => T::one(),
        }
    }
}

/// All permutations of `0..n` with their parity (`true` = odd).
pub(crate) fn permutations(n: usize) -> Vec<(Vec<usize>, bool)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out.into_iter()
        .map(|p| {
            let mut inversions = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] > p[j] {
                        inversions += 1;
                    }
                }
            }
            (p, inversions % 2 == 1)
        })
        .collect()
}

fn digits(mut idx: usize, n: usize, d: usize, out: &mut [usize]) {
    for k in (0..n).rev() {
        out[k] = idx % d;
        idx /= d;
    }
}

fn flat(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &i| acc * d + i)
}

/// Relabels tensor slots: `out[j_0..j_n] = c[s]` with `s_k = j_perm[k]`.
pub(crate) fn permute_slots<T: Real>(c: &[C<T>], n: usize, d: usize, perm: &[usize]) -> Vec<C<T>> {
    let mut out = vec![C::new(T::zero(), T::zero()); c.len()];
    let mut j = vec![0; n];
    let mut s = vec![0; n];
    for (idx, slot) in out.iter_mut().enumerate() {
        digits(idx, n, d, &mut j);
        for k in 0..n {
            s[k] = j[perm[k]];
        }
        *slot = c[flat(&s, d)];
    }
    out
}

fn transposition(n: usize, a: usize, b: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.swap(a, b);
    p
}

/// Kronecker product of unit vectors, slot 0 slowest.
pub(crate) fn kron<T: Real>(factors: &[&[C<T>]]) -> Vec<C<T>> {
    let mut out = vec![C::new(T::one(), T::zero())];
    for f in factors {
        out = out
            .iter()
            .flat_map(|&a| f.iter().map(move |&b| a * b))
            .collect();
    }
    out
}

pub(crate) fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter()
        .zip(b)
        .fold(C::new(T::zero(), T::zero()), |s, (x, y)| s + x.conj() * y)
}

pub(crate) fn norm<T: Real>(a: &[C<T>]) -> T {
    a.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NPartyState<T> {
    grid: Grid<T>,
    spin_dim: usize,
    n_parties: usize,
    coefficients: Vec<C<T>>,
    symmetry: Symmetry,
}

impl<T: Real> NPartyState<T> {
    fn check_shape(grid: &Grid<T>, spin_dim: usize, n_parties: usize, len: usize) -> Result<usize> {
        if !(2..=MAX_PARTIES).contains(&n_parties) {
            return Err(Error::Unsupported(format!(
                "{n_parties} parties; supported range is 2..={MAX_PARTIES}"
            )));
        }
        let d = grid.n_points() * spin_dim;
        let expected = d
            .checked_pow(n_parties as u32)
            .filter(|&l| l <= MAX_TENSOR_LEN)
            .ok_or_else(|| {
                Error::Unsupported(format!(
                    "dimension {d} with {n_parties} parties exceeds {MAX_TENSOR_LEN} tensor entries"
                ))
            })?;
        if len != expected {
            return Err(Error::Dimension(format!(
                "{len} coefficients, expected {d}^{n_parties} = {expected}"
            )));
        }
        Ok(d)
    }

    /// Wraps an already (anti)symmetric, normalized coefficient tensor,
    /// checking both invariants.
    pub fn from_coefficients(
        grid: Grid<T>,
        spin_dim: usize,
        n_parties: usize,
        coefficients: Vec<C<T>>,
        symmetry: Symmetry,
    ) -> Result<Self> {
        Self::check_shape(&grid, spin_dim, n_parties, coefficients.len())?;
        let nrm = norm(&coefficients);
        if (nrm - T::one()).abs() > lit(STATE_TOL) {
            return Err(Error::contract(
                "unit-norm",
                format!("coefficient norm {}", to_f64(nrm)),
            ));
        }
        let state = Self {
            grid,
            spin_dim,
            n_parties,
            coefficients,
            symmetry,
        };
        let residual = state.symmetry_residual();
        if residual > lit(STATE_TOL) {
            return Err(Error::contract(
                "index-symmetry",
                format!("{symmetry:?} residual {:.3e}", to_f64(residual)),
            ));
        }
        Ok(state)
    }

    /// Projects an arbitrary tensor onto the requested symmetry sector and
    /// normalizes it.
    pub fn symmetrize(
        grid: Grid<T>,
        spin_dim: usize,
        n_parties: usize,
        tensor: &[C<T>],
        symmetry: Symmetry,
    ) -> Result<Self> {
        let d = Self::check_shape(&grid, spin_dim, n_parties, tensor.len())?;
        let coefficients = match symmetry {
            Symmetry::None => tensor.to_vec(),
            _ => {
                let mut acc = vec![C::new(T::zero(), T::zero()); tensor.len()];
                for (perm, odd) in permutations(n_parties) {
                    let sign: T = symmetry.sign(odd);
                    for (a, b) in acc.iter_mut().zip(permute_slots(tensor, n_parties, d, &perm)) {
                        *a += b.scale(sign);
                    }
                }
                acc
            }
        };
        let nrm = norm(&coefficients);
        if !(nrm > lit(PAULI_TOL)) {
            return Err(Error::ZeroNorm { norm: to_f64(nrm) });
        }
        let inv = T::one() / nrm;
        Ok(Self {
            grid,
            spin_dim,
            n_parties,
            coefficients: coefficients.into_iter().map(|c| c.scale(inv)).collect(),
            symmetry,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    /// Single-particle dimension.
    pub fn dim(&self) -> usize {
        self.grid.n_points() * self.spin_dim
    }

    pub fn coefficients(&self) -> &[C<T>] {
        &self.coefficients
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Coefficients with slots `a` and `b` exchanged.
    pub fn transposed(&self, a: usize, b: usize) -> Result<Vec<C<T>>> {
        for i in [a, b] {
            if i >= self.n_parties {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n_parties,
                });
            }
        }
        Ok(permute_slots(
            &self.coefficients,
            self.n_parties,
            self.dim(),
            &transposition(self.n_parties, a, b),
        ))
    }

    /// Largest entrywise deviation from the symmetry contract over all
    /// transpositions; zero for `Symmetry::None`.
    pub fn symmetry_residual(&self) -> T {
        if self.symmetry == Symmetry::None {
            return T::zero();
        }
        let sign: T = self.symmetry.sign(true);
        let mut worst = T::zero();
        for a in 0..self.n_parties {
            for b in a + 1..self.n_parties {
                let swapped = self.transposed(a, b).expect("valid slots");
                for (s, c) in swapped.iter().zip(&self.coefficients) {
                    worst = worst.max(modulus(*s - c.scale(sign)));
                }
            }
        }
        worst
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &Self) -> Result<C<T>> {
        if self.coefficients.len() != other.coefficients.len() || self.grid != other.grid {
            return Err(Error::Dimension("states live in different spaces".into()));
        }
        Ok(dot(&self.coefficients, &other.coefficients))
    }

    /// Two-party coefficient matrix `M[i, j] = c(i, j)`.
    pub fn coefficient_matrix(&self) -> Result<DMatrix<C<T>>> {
        if self.n_parties != 2 {
            return Err(Error::Unsupported(format!(
                "coefficient matrix of a {}-party state",
                self.n_parties
            )));
        }
        let d = self.dim();
        Ok(DMatrix::from_row_slice(d, d, &self.coefficients))
    }
}

/// Normalized (anti)symmetrized product of one-particle states.
pub fn symmetrized_product<T: Real>(
    states: &[WaveFunction<T>],
    symmetry: Symmetry,
) -> Result<NPartyState<T>> {
    let first = states
        .first()
        .ok_or_else(|| Error::Config("no one-particle states given".into()))?;
    for s in states {
        if s.grid() != first.grid() || s.spin_dim() != first.spin_dim() {
            return Err(Error::Dimension(
                "one-particle states on different grids or spin spaces".into(),
            ));
        }
    }
    let n = states.len();
    NPartyState::<T>::check_shape(first.grid(), first.spin_dim(), n, first.dim().pow(n as u32))?;
    let vectors: Vec<Vec<C<T>>> = states.iter().map(|s| s.unit_vector()).collect();
    let mut acc = vec![C::new(T::zero(), T::zero()); first.dim().pow(n as u32)];
    let perms = match symmetry {
        Symmetry::None => vec![((0..n).collect::<Vec<_>>(), false)],
        _ => permutations(n),
    };
    for (perm, odd) in &perms {
        let sign: T = symmetry.sign(*odd);
        let factors: Vec<&[C<T>]> = perm.iter().map(|&i| vectors[i].as_slice()).collect();
        for (a, b) in acc.iter_mut().zip(kron(&factors)) {
            *a += b.scale(sign);
        }
    }
    // with unit inputs this is sqrt(det Gram) for fermions
    let raw = norm(&acc) / from_usize::<T>(perms.len()).sqrt();
    if symmetry == Symmetry::Fermionic && raw < lit(PAULI_TOL) {
        return Err(Error::ZeroNorm { norm: to_f64(raw) });
    }
    let inv = T::one() / norm(&acc);
    Ok(NPartyState {
        grid: *first.grid(),
        spin_dim: first.spin_dim(),
        n_parties: n,
        coefficients: acc.into_iter().map(|c| c.scale(inv)).collect(),
        symmetry,
    })
}

/// Hermitian, unit-trace, positive semidefinite matrix on one factor space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    entries: DMatrix<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn from_matrix(entries: DMatrix<C<T>>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let rho = Self { entries };
        let tol = lit::<T>(STATE_TOL);
        let herm = hermiticity_residual(&rho.entries);
        if herm > tol {
            return Err(Error::contract("hermitian", format!("residual {:.3e}", to_f64(herm))));
        }
        let tr = rho.trace();
        if (tr - T::one()).abs() > tol {
            return Err(Error::contract("unit-trace", format!("trace {}", to_f64(tr))));
        }
        let min = rho.eigenvalues().first().copied().unwrap_or_else(T::zero);
        if min < -tol {
            return Err(Error::contract("positive", format!("eigenvalue {:.3e}", to_f64(min))));
        }
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C<T>> {
        &self.entries
    }

    pub fn trace(&self) -> T {
        self.entries.diagonal().iter().fold(T::zero(), |s, z| s + z.re)
    }

    pub fn purity(&self) -> T {
        self.entries.iter().fold(T::zero(), |s, z| s + z.norm_sqr())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.entries)
    }

    /// Operator-norm distance `max |eig(self - other)|`.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("density matrices of different size".into()));
        }
        let diff = &self.entries - &other.entries;
        Ok(hermitian_eigenvalues(&diff)
            .into_iter()
            .fold(T::zero(), |m, v| m.max(v.abs())))
    }
}

pub(crate) fn hermiticity_residual<T: Real>(m: &DMatrix<C<T>>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max(modulus(m[(i, j)] - m[(j, i)].conj()));
        }
    }
    worst
}

/// Zeroes entries smaller than `1e-40` of the largest one. Products of far
/// Gaussian tails otherwise underflow inside the eigen and SVD iterations and
/// turn into NaN.
pub(crate) fn flush_tiny<T: Real>(m: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let top = m.iter().fold(T::zero(), |a, z| a.max(z.norm_sqr()));
    let floor = top * lit(1e-80);
    m.map(|z| if z.norm_sqr() < floor { C::new(T::zero(), T::zero()) } else { z })
}

/// Ascending eigenvalues of a Hermitian matrix.
pub(crate) fn hermitian_eigenvalues<T: Real>(m: &DMatrix<C<T>>) -> Vec<T> {
    let mut ev: Vec<T> = flush_tiny(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    ev
}

/// Reduced state of factor `keep_index` (0-based).
pub fn partial_trace<T: Real>(state: &NPartyState<T>, keep_index: usize) -> Result<DensityMatrix<T>> {
    let n = state.n_parties;
    if keep_index >= n {
        return Err(Error::IndexOutOfRange {
            index: keep_index,
            len: n,
        });
    }
    let d = state.dim();
    let right = d.pow((n - 1 - keep_index) as u32);
    let left = d.pow(keep_index as u32);
    let c = &state.coefficients;
    let mut rho = DMatrix::from_element(d, d, C::new(T::zero(), T::zero()));
    for l in 0..left {
        for a in 0..d {
            let ra = &c[(l * d + a) * right..(l * d + a + 1) * right];
            for b in a..d {
                let rb = &c[(l * d + b) * right..(l * d + b + 1) * right];
                let s = ra
                    .iter()
                    .zip(rb)
                    .fold(C::new(T::zero(), T::zero()), |s, (x, y)| s + x * y.conj());
                rho[(a, b)] += s;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            rho[(a, b)] = rho[(b, a)].conj();
        }
    }
    DensityMatrix::from_matrix(rho)
}

/// Largest operator-norm distance between the reduced states of any two
/// factor spaces.
pub fn reduced_state_spread<T: Real>(state: &NPartyState<T>) -> Result<T> {
    let reduced: Vec<DensityMatrix<T>> = (0..state.n_parties)
        .map(|i| partial_trace(state, i))
        .collect::<Result<_>>()?;
    let mut worst = T::zero();
    for i in 0..reduced.len() {
        for j in i + 1..reduced.len() {
            worst = worst.max(reduced[i].distance(&reduced[j])?);
        }
    }
    Ok(worst)
}

/// Spin quantization axis `(sin t cos f, sin t sin f, cos t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinAxis<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> SpinAxis<T> {
    pub fn new(theta: T, phi: T) -> Self {
        Self { theta, phi }
    }

    pub fn z() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Projector `(1 + s n.sigma)/2` onto outcome `s = +1` (`up = true`) or `-1`.
    pub fn projector(&self, up: bool) -> [[C<T>; 2]; 2] {
        let (nx, ny, nz) = (
            self.theta.sin() * self.phi.cos(),
            self.theta.sin() * self.phi.sin(),
            self.theta.cos(),
        );
        let s = if up { T::one() } else { -T::one() };
        let h = lit::<T>(0.5);
        [
            [cplx(h * (T::one() + s * nz), T::zero()), cplx(h * s * nx, -h * s * ny)],
            [cplx(h * s * nx, h * s * ny), cplx(h * (T::one() - s * nz), T::zero())],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LocalKind<T: Real> {
    Identity,
    Diagonal(Vec<T>),
    Dense(DMatrix<C<T>>),
    Projector(Vec<C<T>>),
    /// `spin (2x2) (x) diag(spatial)` on the spin-major layout.
    SpinSpatial { spin: [[C<T>; 2]; 2], spatial: Vec<T> },
}

/// Hermitian operator on one factor space.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOp<T: Real> {
    dim: usize,
    kind: LocalKind<T>,
}

impl<T: Real> LocalOp<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kind: LocalKind::Identity,
        }
    }

    /// Real multiplication operator.
    pub fn diagonal(values: Vec<T>) -> Self {
        Self {
            dim: values.len(),
            kind: LocalKind::Diagonal(values),
        }
    }

    pub fn dense(matrix: DMatrix<C<T>>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("operator matrix must be square".into()));
        }
        let herm = hermiticity_residual(&matrix);
        if herm > lit(STATE_TOL) {
            return Err(Error::contract("hermitian", format!("residual {:.3e}", to_f64(herm))));
        }
        Ok(Self {
            dim: matrix.nrows(),
            kind: LocalKind::Dense(matrix),
        })
    }

    /// Rank-one projector onto the normalized `ket`.
    pub fn projector(ket: &[C<T>]) -> Result<Self> {
        let nrm = norm(ket);
        if !(nrm > T::zero()) {
            return Err(Error::ZeroNorm { norm: 0.0 });
        }
        Ok(Self {
            dim: ket.len(),
            kind: LocalKind::Projector(ket.iter().map(|z| z.unscale(nrm)).collect()),
        })
    }

    /// Projector onto a one-particle wave function.
    pub fn projector_onto(wf: &WaveFunction<T>) -> Self {
        Self::projector(&wf.unit_vector()).expect("normalized wave function")
    }

    pub fn spin_spatial(spin: [[C<T>; 2]; 2], spatial: Vec<T>) -> Result<Self> {
        for i in 0..2 {
            for j in 0..2 {
                if modulus(spin[i][j] - spin[j][i].conj()) > lit(STATE_TOL) {
                    return Err(Error::contract("hermitian", "spin factor is not Hermitian"));
                }
            }
        }
        Ok(Self {
            dim: 2 * spatial.len(),
            kind: LocalKind::SpinSpatial { spin, spatial },
        })
    }

    pub fn position(grid: &Grid<T>) -> Self {
        Self::diagonal(grid.points())
    }

    /// Spectral momentum operator `F^-1 diag(k) F`.
    pub fn momentum(grid: &Grid<T>) -> Self {
        let n = grid.n_points();
        let fft = crate::fft::FftPair::new(n);
        let ks = grid.wavenumbers();
        let mut m = DMatrix::from_element(n, n, C::new(T::zero(), T::zero()));
        for j in 0..n {
            let mut col = vec![C::new(T::zero(), T::zero()); n];
            col[j] = C::new(T::one(), T::zero());
            fft.forward(&mut col);
            for (z, &k) in col.iter_mut().zip(&ks) {
                *z = z.scale(k);
            }
            fft.inverse(&mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        // symmetrize away rounding so the Hermiticity check is exact
        let m = (&m + m.adjoint()).unscale(lit(2.0));
        Self {
            dim: n,
            kind: LocalKind::Dense(m),
        }
    }

    /// Indicator of `region` on the grid, extended over spin when present.
    pub fn region(grid: &Grid<T>, region: &Interval<T>, spin_dim: usize) -> Self {
        let ind = region.indicator(grid);
        Self::diagonal((0..spin_dim).flat_map(|_| ind.iter().copied()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = op * v` for one fiber of length `dim`.
    fn apply_fiber(&self, v: &[C<T>], out: &mut [C<T>]) {
        match &self.kind {
            LocalKind::Identity => out.copy_from_slice(v),
            LocalKind::Diagonal(d) => {
                for ((o, x), &w) in out.iter_mut().zip(v).zip(d) {
                    *o = x.scale(w);
                }
            }
            LocalKind::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = m
                        .row(i)
                        .iter()
                        .zip(v)
                        .fold(C::new(T::zero(), T::zero()), |s, (a, b)| s + a * b);
                }
            }
            LocalKind::Projector(u) => {
                let amp = dot(u, v);
                for (o, x) in out.iter_mut().zip(u) {
                    *o = x * amp;
                }
            }
            LocalKind::SpinSpatial { spin, spatial } => {
                let n = spatial.len();
                for k in 0..n {
                    let (up, dn) = (v[k], v[n + k]);
                    out[k] = (spin[0][0] * up + spin[0][1] * dn).scale(spatial[k]);
                    out[n + k] = (spin[1][0] * up + spin[1][1] * dn).scale(spatial[k]);
                }
            }
        }
    }

    /// Applies the operator to `slot` of an `n`-party tensor.
    pub(crate) fn apply_at(&self, v: &[C<T>], n: usize, slot: usize) -> Vec<C<T>> {
        let d = self.dim;
        if let LocalKind::Identity = self.kind {
            return v.to_vec();
        }
        let right = d.pow((n - 1 - slot) as u32);
        let left = d.pow(slot as u32);
        let mut out = vec![C::new(T::zero(), T::zero()); v.len()];
        let mut fiber = vec![C::new(T::zero(), T::zero()); d];
        let mut res = fiber.clone();
        for l in 0..left {
            for r in 0..right {
                let base = l * d * right + r;
                for a in 0..d {
                    fiber[a] = v[base + a * right];
                }
                self.apply_fiber(&fiber, &mut res);
                for a in 0..d {
                    out[base + a * right] = res[a];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C<T>> {
        let d = self.dim;
        let mut m = DMatrix::from_element(d, d, C::new(T::zero(), T::zero()));
        let mut e = vec![C::new(T::zero(), T::zero()); d];
        let mut col = e.clone();
        for j in 0..d {
            e[j] = C::new(T::one(), T::zero());
            self.apply_fiber(&e, &mut col);
            e[j] = C::new(T::zero(), T::zero());
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ObsKind<T: Real> {
    /// Sum of real-weighted tensor products of local operators.
    Terms(Vec<(T, Vec<LocalOp<T>>)>),
    Dense(DMatrix<C<T>>),
    Diagonal(Vec<T>),
}

/// Hermitian observable on an `n`-party space of identical factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable<T: Real> {
    dim: usize,
    n_parties: usize,
    kind: ObsKind<T>,
}

impl<T: Real> Observable<T> {
    /// Sum of weighted tensor products; each term lists one operator per slot.
    pub fn product_sum(n_parties: usize, terms: Vec<(T, Vec<LocalOp<T>>)>) -> Result<Self> {
        let dim = terms
            .first()
            .and_then(|(_, ops)| ops.first())
            .map(LocalOp::dim)
            .ok_or_else(|| Error::Config("observable without terms".into()))?;
        for (_, ops) in &terms {
            if ops.len() != n_parties || ops.iter().any(|o| o.dim() != dim) {
                return Err(Error::Dimension(format!(
                    "each term needs {n_parties} operators of dimension {dim}"
                )));
            }
        }
        Ok(Self {
            dim,
            n_parties,
            kind: ObsKind::Terms(terms),
        })
    }

    /// A single operator acting on `slot` of an `n_parties` space.
    pub fn embedded(n_parties: usize, slot: usize, op: LocalOp<T>) -> Result<Self> {
        if slot >= n_parties {
            return Err(Error::IndexOutOfRange {
                index: slot,
                len: n_parties,
            });
        }
        let d = op.dim();
        let ops = (0..n_parties)
            .map(|i| if i == slot { op.clone() } else { LocalOp::identity(d) })
            .collect();
        Self::product_sum(n_parties, vec![(T::one(), ops)])
    }

    /// `sum_i op_i`, e.g. the particle-number operator of a region.
    pub fn one_body(n_parties: usize, op: LocalOp<T>) -> Result<Self> {
        let d = op.dim();
        let terms = (0..n_parties)
            .map(|slot| {
                let ops = (0..n_parties)
                    .map(|i| if i == slot { op.clone() } else { LocalOp::identity(d) })
                    .collect();
                (T::one(), ops)
            })
            .collect();
        Self::product_sum(n_parties, terms)
    }

    /// Sum over every assignment of `ops` to slots: `A(x)B + B(x)A` for two.
    pub fn symmetrized(ops: Vec<LocalOp<T>>) -> Result<Self> {
        let n = ops.len();
        let terms = permutations(n)
            .into_iter()
            .map(|(perm, _)| (T::one(), perm.iter().map(|&i| ops[i].clone()).collect()))
            .collect();
        Self::product_sum(n, terms)
    }

    pub fn dense(n_parties: usize, dim: usize, matrix: DMatrix<C<T>>) -> Result<Self> {
        let len = dim.pow(n_parties as u32);
        if matrix.nrows() != len || matrix.ncols() != len {
            return Err(Error::Dimension(format!(
                "dense observable must be {len}x{len}"
            )));
        }
        let herm = hermiticity_residual(&matrix);
        if herm > lit(STATE_TOL) {
            return Err(Error::contract("hermitian", format!("residual {:.3e}", to_f64(herm))));
        }
        Ok(Self {
            dim,
            n_parties,
            kind: ObsKind::Dense(matrix),
        })
    }

    /// Real function on the product basis (position-diagonal for spinless grids).
    pub fn diagonal(n_parties: usize, dim: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != dim.pow(n_parties as u32) {
            return Err(Error::Dimension("diagonal observable has wrong length".into()));
        }
        Ok(Self {
            dim,
            n_parties,
            kind: ObsKind::Diagonal(values),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn apply(&self, v: &[C<T>]) -> Vec<C<T>> {
        match &self.kind {
            ObsKind::Terms(terms) => {
                let mut out = vec![C::new(T::zero(), T::zero()); v.len()];
                for (w, ops) in terms {
                    let mut cur = v.to_vec();
                    for (slot, op) in ops.iter().enumerate() {
                        cur = op.apply_at(&cur, self.n_parties, slot);
                    }
                    for (o, c) in out.iter_mut().zip(cur) {
                        *o += c.scale(*w);
                    }
                }
                out
            }
            ObsKind::Dense(m) => (0..m.nrows())
                .map(|i| {
                    m.row(i)
                        .iter()
                        .zip(v)
                        .fold(C::new(T::zero(), T::zero()), |s, (a, b)| s + a * b)
                })
                .collect(),
            ObsKind::Diagonal(f) => v.iter().zip(f).map(|(x, &w)| x.scale(w)).collect(),
        }
    }

    /// Largest deviation of `P A P` from `A` over transpositions `P`.
    pub fn permutation_asymmetry(&self) -> T {
        let n = self.n_parties;
        let d = self.dim;
        let mut worst = T::zero();
        for a in 0..n {
            for b in a + 1..n {
                let p = transposition(n, a, b);
                match &self.kind {
                    ObsKind::Diagonal(f) => {
                        let fp = permute_slots(
                            &f.iter().map(|&x| C::new(x, T::zero())).collect::<Vec<_>>(),
                            n,
                            d,
                            &p,
                        );
                        for (x, y) in fp.iter().zip(f) {
                            worst = worst.max((x.re - *y).abs());
                        }
                    }
                    ObsKind::Dense(m) => {
                        let len = m.nrows();
                        let idx: Vec<usize> = {
                            let ids: Vec<C<T>> =
                                (0..len).map(|i| C::new(from_usize(i), T::zero())).collect();
                            permute_slots(&ids, n, d, &p)
                                .iter()
                                .map(|z| to_f64(z.re) as usize)
                                .collect()
                        };
                        for i in 0..len {
                            for j in 0..len {
                                worst = worst.max(modulus(m[(idx[i], idx[j])] - m[(i, j)]));
                            }
                        }
                    }
                    ObsKind::Terms(_) => {
                        // compare A P v against P A v on fixed pseudo-random probes
                        for seed in [0x9e37_79b9_7f4a_7c15u64, 0xd1b5_4a32_d192_ed03] {
                            let v = probe_vector::<T>(d.pow(n as u32), seed);
                            let apv = self.apply(&permute_slots(&v, n, d, &p));
                            let pav = permute_slots(&self.apply(&v), n, d, &p);
                            let scale = norm(&pav).max(T::one());
                            let diff = apv
                                .iter()
                                .zip(&pav)
                                .fold(T::zero(), |s, (x, y)| s + (*x - y).norm_sqr())
                                .sqrt();
                            worst = worst.max(diff / scale);
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn is_permutation_symmetric(&self) -> bool {
        self.permutation_asymmetry() <= lit(STATE_TOL)
    }
}

/// Deterministic unit probe vector (splitmix64 stream).
pub(crate) fn probe_vector<T: Real>(len: usize, seed: u64) -> Vec<C<T>> {
    let mut s = seed;
    let mut next = move || {
        s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let v: Vec<C<T>> = (0..len).map(|_| C::new(lit(next()), lit(next()))).collect();
    let nrm = norm(&v);
    v.into_iter().map(|z| z.unscale(nrm)).collect()
}

fn check_observable<T: Real>(state: &NPartyState<T>, obs: &Observable<T>) -> Result<()> {
    if obs.dim != state.dim() || obs.n_parties != state.n_parties {
        return Err(Error::Dimension(format!(
            "observable on {} parties of dim {}, state has {} parties of dim {}",
            obs.n_parties,
            obs.dim,
            state.n_parties,
            state.dim()
        )));
    }
    Ok(())
}

/// `<Psi|A|Psi>`. Identical-particle states only admit permutation-symmetric
/// observables.
pub fn expectation<T: Real>(state: &NPartyState<T>, obs: &Observable<T>) -> Result<T> {
    check_observable(state, obs)?;
    if state.symmetry != Symmetry::None {
        let asym = obs.permutation_asymmetry();
        if asym > lit(STATE_TOL) {
            return Err(Error::contract(
                "symmetric-observable",
                format!("observable asymmetry {:.3e} on an identical-particle state", to_f64(asym)),
            ));
        }
    }
    let value = dot(&state.coefficients, &obs.apply(&state.coefficients));
    if value.im.abs() > lit(STATE_TOL) {
        return Err(Error::contract(
            "real-expectation",
            format!("imaginary residue {:.3e}", to_f64(value.im)),
        ));
    }
    Ok(value.re)
}

/// Interference term `<phi (x) psi| A |psi (x) phi>`.
pub fn exchange_term<T: Real>(
    phi: &WaveFunction<T>,
    psi: &WaveFunction<T>,
    obs: &Observable<T>,
) -> Result<C<T>> {
    if obs.n_parties != 2 || obs.dim != phi.dim() || phi.dim() != psi.dim() {
        return Err(Error::Dimension(
            "exchange term needs a two-party observable matching both packets".into(),
        ));
    }
    let (a, b) = (phi.unit_vector(), psi.unit_vector());
    let bra = kron(&[&a, &b]);
    let ket = kron(&[&b, &a]);
    Ok(dot(&bra, &obs.apply(&ket)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EprForm {
    /// Symmetric spatial part times the antisymmetric singlet.
    Full,
    /// Plain spatial product times the singlet; not antisymmetric.
    Pragmatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EprState<T> {
    pub state: NPartyState<T>,
    pub form: EprForm,
    /// Set when the pragmatic form is built from overlapping packets.
    pub overlap_warning: bool,
}

/// Two spin-1/2 particles in the singlet with spatial packets `phi`, `psi`.
pub fn epr_state<T: Real>(
    phi: &WaveFunction<T>,
    psi: &WaveFunction<T>,
    form: EprForm,
) -> Result<EprState<T>> {
    if phi.spin_dim() != 1 || psi.spin_dim() != 1 {
        return Err(Error::Dimension("EPR packets must be spatial (spin_dim = 1)".into()));
    }
    let spatial = match form {
        EprForm::Full => symmetrized_product(&[phi.clone(), psi.clone()], Symmetry::Bosonic)?,
        EprForm::Pragmatic => symmetrized_product(&[phi.clone(), psi.clone()], Symmetry::None)?,
    };
    let overlap_warning =
        form == EprForm::Pragmatic && overlap_measure(phi, psi)? > lit(DISJOINT_TOL);
    let n = phi.grid().n_points();
    let d = 2 * n;
    let h = T::one() / lit::<T>(2.0).sqrt();
    // singlet (|ud> - |du>)/sqrt 2, spin-up = 0
    let singlet = [[T::zero(), h], [-h, T::zero()]];
    let mut coeffs = vec![C::new(T::zero(), T::zero()); d * d];
    for s1 in 0..2 {
        for s2 in 0..2 {
            let w = singlet[s1][s2];
            if w == T::zero() {
                continue;
            }
            for k1 in 0..n {
                for k2 in 0..n {
                    coeffs[(s1 * n + k1) * d + s2 * n + k2] =
                        spatial.coefficients[k1 * n + k2].scale(w);
                }
            }
        }
    }
    let symmetry = match form {
        EprForm::Full => Symmetry::Fermionic,
        EprForm::Pragmatic => Symmetry::None,
    };
    let state = NPartyState::from_coefficients(*phi.grid(), 2, 2, coeffs, symmetry)?;
    Ok(EprState {
        state,
        form,
        overlap_warning,
    })
}

/// Spin-outcome statistics conditioned on one detection in each region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCorrelation<T> {
    /// `table[i][j]`: outcome `i` along axis a, `j` along axis b; index 0 = up.
    pub table: [[T; 2]; 2],
    /// Probability of one particle in each region, summed over spin.
    pub detection: T,
    /// `E(a, b) = sum s t P(s, t)`.
    pub correlator: T,
}

pub fn spin_correlation<T: Real>(
    state: &NPartyState<T>,
    region_a: &Interval<T>,
    axis_a: &SpinAxis<T>,
    region_b: &Interval<T>,
    axis_b: &SpinAxis<T>,
) -> Result<SpinCorrelation<T>> {
    if state.spin_dim != 2 || state.n_parties != 2 {
        return Err(Error::Dimension("spin correlation needs a spinful two-party state".into()));
    }
    if region_a.overlaps(region_b) {
        return Err(Error::contract("disjoint-regions", "detection regions overlap"));
    }
    let grid = state.grid;
    let ind_a = region_a.indicator(&grid);
    let ind_b = region_b.indicator(&grid);
    let mut raw = [[T::zero(); 2]; 2];
    for (i, up_a) in [true, false].into_iter().enumerate() {
        for (j, up_b) in [true, false].into_iter().enumerate() {
            let a = LocalOp::spin_spatial(axis_a.projector(up_a), ind_a.clone())?;
            let b = LocalOp::spin_spatial(axis_b.projector(up_b), ind_b.clone())?;
            raw[i][j] = expectation(state, &Observable::symmetrized(vec![a, b])?)?;
        }
    }
    let detection = raw.iter().flatten().fold(T::zero(), |s, &v| s + v);
    if !(detection > T::zero()) {
        return Err(Error::contract("detection", "no probability of one particle per region"));
    }
    let table = raw.map(|row| row.map(|v| v / detection));
    let correlator = table[0][0] - table[0][1] - table[1][0] + table[1][1];
    Ok(SpinCorrelation {
        table,
        detection,
        correlator,
    })
}

/// Operator norm of `[A_slot_a, B_slot_b]` on an `n_parties` space.
pub fn commutator_norm<T: Real>(
    a: &LocalOp<T>,
    slot_a: usize,
    b: &LocalOp<T>,
    slot_b: usize,
    n_parties: usize,
) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("operators act on different spaces".into()));
    }
    for s in [slot_a, slot_b] {
        if s >= n_parties {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: n_parties,
            });
        }
    }
    if slot_a == slot_b {
        // the embedding 1 (x) C (x) 1 has the same norm as C
        let (ma, mb) = (a.to_dense(), b.to_dense());
        let c = &ma * &mb - &mb * &ma;
        return Ok(c
            .singular_values()
            .iter()
            .fold(T::zero(), |m, &v| m.max(v)));
    }
    let len = a
        .dim()
        .checked_pow(n_parties as u32)
        .filter(|&l| l <= MAX_TENSOR_LEN)
        .ok_or_else(|| Error::Unsupported("commutator space too large".into()))?;
    let comm = |v: &[C<T>]| -> Vec<C<T>> {
        let ab = a.apply_at(&b.apply_at(v, n_parties, slot_b), n_parties, slot_a);
        let ba = b.apply_at(&a.apply_at(v, n_parties, slot_a), n_parties, slot_b);
        ab.iter().zip(&ba).map(|(x, y)| x - y).collect()
    };
    // power iteration on M^H M = -M^2 for anti-Hermitian M
    let mut v = probe_vector::<T>(len, 0x5eed);
    let mut estimate = T::zero();
    for _ in 0..60 {
        let w = comm(&v);
        let wn = norm(&w);
        estimate = wn;
        if wn == T::zero() {
            break;
        }
        let u: Vec<C<T>> = comm(&w).into_iter().map(|z| -z).collect();
        let un = norm(&u);
        if un == T::zero() {
            break;
        }
        v = u.into_iter().map(|z| z.unscale(un)).collect();
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_packet, inner, PacketParams};

    fn grid() -> Grid<f64> {
        Grid::new(-8.0, 8.0, 128).unwrap()
    }

    fn packet(x0: f64, sigma: f64) -> WaveFunction<f64> {
        gaussian_packet(&grid(), &PacketParams::new(x0, 0.0, sigma)).unwrap()
    }

    #[test]
    fn permutation_parities() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p.iter().filter(|(_, odd)| *odd).count(), 3);
        assert_eq!(p[0], (vec![0, 1, 2], false));
    }

    #[test]
    fn identical_fermions_vanish() {
        let phi = packet(0.0, 1.0);
        let err = symmetrized_product(&[phi.clone(), phi], Symmetry::Fermionic).unwrap_err();
        match err {
            Error::ZeroNorm { norm } => assert!(norm < 1e-10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn antisymmetric_pair_matches_explicit_form() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let state = symmetrized_product(&[phi.clone(), psi.clone()], Symmetry::Fermionic).unwrap();
        let (a, b) = (phi.unit_vector(), psi.unit_vector());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let explicit: Vec<C<f64>> = kron(&[&a, &b])
            .iter()
            .zip(kron(&[&b, &a]))
            .map(|(x, y)| (x - y) * h)
            .collect();
        let diff = norm(
            &explicit
                .iter()
                .zip(state.coefficients())
                .map(|(x, y)| x - y)
                .collect::<Vec<_>>(),
        );
        assert!(diff < 1e-10);
        assert!((norm(state.coefficients()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bosonic_pair_is_swap_invariant() {
        let state =
            symmetrized_product(&[packet(-1.0, 1.0), packet(2.0, 0.7)], Symmetry::Bosonic).unwrap();
        let swapped = state.transposed(0, 1).unwrap();
        for (x, y) in swapped.iter().zip(state.coefficients()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn reduced_state_of_antisymmetric_pair_is_even_mixture() {
        let state =
            symmetrized_product(&[packet(-4.0, 0.5), packet(4.0, 0.5)], Symmetry::Fermionic).unwrap();
        let ev = partial_trace(&state, 0).unwrap().eigenvalues();
        let n = ev.len();
        assert!((ev[n - 1] - 0.5).abs() < 1e-10 && (ev[n - 2] - 0.5).abs() < 1e-10);
        assert!(ev[..n - 2].iter().all(|v| v.abs() < 1e-10));
        assert!(reduced_state_spread(&state).unwrap() < 1e-10);
    }

    #[test]
    fn product_state_reduces_to_pure_factor() {
        let phi = packet(-2.0, 0.8);
        let psi = packet(3.0, 0.6);
        let state = symmetrized_product(&[phi.clone(), psi], Symmetry::None).unwrap();
        let rho = partial_trace(&state, 0).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
        let u = phi.unit_vector();
        for i in 0..u.len() {
            for j in 0..u.len() {
                assert!((rho.entries()[(i, j)] - u[i] * u[j].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn nonorthogonal_boson_eigenvalues_match_gram_algebra() {
        let phi = packet(0.0, 1.0);
        let psi = packet(1.0, 1.0);
        let s = inner(&phi, &psi).unwrap().norm();
        let state = symmetrized_product(&[phi, psi], Symmetry::Bosonic).unwrap();
        let ev = partial_trace(&state, 1).unwrap().eigenvalues();
        let n = ev.len();
        let denom = 2.0 * (1.0 + s * s);
        let hi = (1.0 + s).powi(2) / denom;
        let lo = (1.0 - s).powi(2) / denom;
        assert!((ev[n - 1] - hi).abs() < 1e-10, "{} vs {hi}", ev[n - 1]);
        assert!((ev[n - 2] - lo).abs() < 1e-10);
    }

    #[test]
    fn unsymmetrized_orthogonal_product_spread_is_one() {
        let state =
            symmetrized_product(&[packet(-4.0, 0.5), packet(4.0, 0.5)], Symmetry::None).unwrap();
        assert!((reduced_state_spread(&state).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let state =
            symmetrized_product(&[packet(-4.0, 0.5), packet(4.0, 0.5)], Symmetry::Bosonic).unwrap();
        assert!(matches!(
            partial_trace(&state, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn region_count_counts_one_packet() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let state = symmetrized_product(&[phi, psi], Symmetry::Fermionic).unwrap();
        let count = Observable::one_body(
            2,
            LocalOp::region(&grid(), &Interval::new(-8.0, 0.0), 1),
        )
        .unwrap();
        assert!((expectation(&state, &count).unwrap() - 1.0).abs() < 1e-10);
        let id = Observable::one_body(2, LocalOp::identity(128)).unwrap();
        assert!((expectation(&state, &id).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_observable_rejected_on_identical_particles() {
        let state =
            symmetrized_product(&[packet(-4.0, 0.5), packet(4.0, 0.5)], Symmetry::Bosonic).unwrap();
        let x1 = Observable::embedded(2, 0, LocalOp::position(&grid())).unwrap();
        assert!(matches!(
            expectation(&state, &x1),
            Err(Error::Contract { contract: "symmetric-observable", .. })
        ));
    }

    #[test]
    fn exchange_term_vanishes_for_disjoint_supports() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let x = grid().points();
        let f: Vec<f64> = x
            .iter()
            .flat_map(|&a| x.iter().map(move |&b| (a - b).powi(2) + a * b))
            .collect();
        let obs = Observable::diagonal(2, 128, f).unwrap();
        assert!(exchange_term(&phi, &psi, &obs).unwrap().norm() < 1e-10);
        let id = Observable::embedded(2, 0, LocalOp::identity(128)).unwrap();
        assert!(exchange_term(&phi, &psi, &id).unwrap().norm() < 1e-10);
    }

    #[test]
    fn exchange_term_of_superposition_projector() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let plus: Vec<C<f64>> = phi
            .unit_vector()
            .iter()
            .zip(psi.unit_vector())
            .map(|(a, b)| a + b)
            .collect();
        let p = LocalOp::projector(&plus).unwrap();
        let obs = Observable::product_sum(2, vec![(1.0, vec![p.clone(), p])]).unwrap();
        // <phi|+><+|psi> <psi|+><+|phi> = (1/2)^4 * 4 = 1/4
        let e = exchange_term(&phi, &psi, &obs).unwrap();
        assert!((e.re - 0.25).abs() < 1e-10 && e.im.abs() < 1e-12);
    }

    #[test]
    fn pragmatic_epr_is_not_antisymmetric() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let full = epr_state(&phi, &psi, EprForm::Full).unwrap();
        assert!(full.state.symmetry_residual() < 1e-10);
        assert!(!full.overlap_warning);
        let prag = epr_state(&phi, &psi, EprForm::Pragmatic).unwrap();
        assert!(!prag.overlap_warning);
        let swapped = prag.state.transposed(0, 1).unwrap();
        let dev = swapped
            .iter()
            .zip(prag.state.coefficients())
            .fold(0.0f64, |m, (x, y)| m.max((x + y).norm()));
        assert!(dev > 1e-3);
        let close = epr_state(&packet(0.0, 1.0), &packet(1.0, 1.0), EprForm::Pragmatic).unwrap();
        assert!(close.overlap_warning);
    }

    #[test]
    fn singlet_correlations() {
        let phi = packet(-4.0, 0.5);
        let psi = packet(4.0, 0.5);
        let left = Interval::new(-8.0, 0.0);
        let right = Interval::new(0.0, 8.0);
        for form in [EprForm::Full, EprForm::Pragmatic] {
            let st = epr_state(&phi, &psi, form).unwrap().state;
            let c = spin_correlation(&st, &left, &SpinAxis::z(), &right, &SpinAxis::z()).unwrap();
            assert!(c.table[0][0].abs() < 1e-10);
            assert!((c.table[0][1] - 0.5).abs() < 1e-10);
            assert!((c.correlator + 1.0).abs() < 1e-10);
        }
        let st = epr_state(&phi, &psi, EprForm::Full).unwrap().state;
        assert!(matches!(
            spin_correlation(&st, &left, &SpinAxis::z(), &Interval::new(-1.0, 2.0), &SpinAxis::z()),
            Err(Error::Contract { contract: "disjoint-regions", .. })
        ));
    }

    #[test]
    fn commutators_by_slot() {
        let g = grid();
        let x = LocalOp::position(&g);
        let p = LocalOp::momentum(&g);
        assert!(commutator_norm(&x, 0, &p, 1, 2).unwrap() < 1e-10);
        assert!(commutator_norm(&x, 0, &p, 0, 2).unwrap() > 0.1);
        assert!(matches!(
            commutator_norm(&x, 0, &p, 3, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn momentum_operator_matches_spectral_mean() {
        let g = grid();
        let wf = gaussian_packet(&g, &PacketParams::new(0.0, 1.5, 1.0)).unwrap();
        let p = LocalOp::momentum(&g).to_dense();
        let u = wf.unit_vector();
        let pu: Vec<C<f64>> = (0..u.len())
            .map(|i| (0..u.len()).map(|j| p[(i, j)] * u[j]).sum())
            .collect();
        let mean = dot(&u, &pu).re;
        assert!((mean - crate::grid::moments(&wf).mean_p).abs() < 1e-10);
    }
}
