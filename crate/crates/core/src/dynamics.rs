//! Wave-packet dynamics: split-step unitary evolution with Ehrenfest
//! diagnostics, the leapfrog classical reference, and open-system evolution of
//! a position-space density matrix under
//!
//! ```text
//! d rho/dt = -i [H, rho] - D (x - x')^2 rho - gamma (x - x') (d_x - d_x') rho
//! ```
//!
//! Units: hbar = 1, momentum equals wavenumber.

use nalgebra::DMatrix;

use crate::decompose::RotationSearch;
use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::grid::{localization_interval, moments, Grid, WaveFunction, LEAK_TOL};
use crate::manybody::{flush_tiny, hermitian_eigenvalues};
use crate::scalar::{cplx, from_usize, lit, phase, to_f64, Real, C};

/// Unitary runs must keep the norm within this of 1.
pub const NORM_DRIFT_TOL: f64 = 1e-8;
/// Open runs must keep `trace * dx` within this of 1.
pub const TRACE_TOL: f64 = 1e-6;
/// Most negative eigenvalue of `rho dx` tolerated before aborting.
pub const POSITIVITY_TOL: f64 = 1e-4;
/// Eigenvalues of a mixture closer than this are treated as one subspace.
pub const MIXTURE_DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind<T> {
    Free,
    /// `V = m omega^2 x^2 / 2`.
    Harmonic { omega: T },
    /// `V = lambda x^4`.
    Quartic { lambda: T },
    /// Sampled values on `grid`, linearly interpolated in between.
    Table { grid: Grid<T>, values: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec<T> {
    kind: PotentialKind<T>,
    mass: T,
}

impl<T: Real> PotentialSpec<T> {
    pub fn new(kind: PotentialKind<T>, mass: T) -> Result<Self> {
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::Config(format!("mass = {} must be positive", to_f64(mass))));
        }
        let ok = match &kind {
            PotentialKind::Free => true,
            PotentialKind::Harmonic { omega } => omega.is_finite(),
            PotentialKind::Quartic { lambda } => lambda.is_finite(),
            PotentialKind::Table { grid, values } => {
                if values.len() != grid.n_points() {
                    return Err(Error::Dimension(format!(
                        "{} potential values for {} grid points",
                        values.len(),
                        grid.n_points()
                    )));
                }
                values.iter().all(|v| v.is_finite())
            }
        };
        if !ok {
            return Err(Error::Config("potential is not finite".into()));
        }
        Ok(Self { kind, mass })
    }

    pub fn free(mass: T) -> Result<Self> {
        Self::new(PotentialKind::Free, mass)
    }

    pub fn harmonic(omega: T, mass: T) -> Result<Self> {
        Self::new(PotentialKind::Harmonic { omega }, mass)
    }

    pub fn quartic(lambda: T, mass: T) -> Result<Self> {
        Self::new(PotentialKind::Quartic { lambda }, mass)
    }

    pub fn kind(&self) -> &PotentialKind<T> {
        &self.kind
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    fn table_cell(grid: &Grid<T>, x: T) -> (usize, T) {
        let n = grid.n_points();
        let u = (x - grid.x_min()) / grid.dx();
        let u = u.max(T::zero()).min(from_usize(n - 2));
        let k = to_f64(u.floor()) as usize;
        let k = k.min(n - 2);
        (k, u - from_usize(k))
    }

    pub fn value(&self, x: T) -> T {
        match &self.kind {
            PotentialKind::Free => T::zero(),
            PotentialKind::Harmonic { omega } => lit::<T>(0.5) * self.mass * *omega * *omega * x * x,
            PotentialKind::Quartic { lambda } => *lambda * x * x * x * x,
            PotentialKind::Table { grid, values } => {
                let (k, f) = Self::table_cell(grid, x);
                values[k] * (T::one() - f) + values[k + 1] * f
            }
        }
    }

    /// `F = -dV/dx`.
    pub fn force(&self, x: T) -> T {
        match &self.kind {
            PotentialKind::Free => T::zero(),
            PotentialKind::Harmonic { omega } => -self.mass * *omega * *omega * x,
            PotentialKind::Quartic { lambda } => -lit::<T>(4.0) * *lambda * x * x * x,
            PotentialKind::Table { grid, values } => {
                let (k, _) = Self::table_cell(grid, x);
                -(values[k + 1] - values[k]) / grid.dx()
            }
        }
    }

    pub fn values_on(&self, grid: &Grid<T>) -> Vec<T> {
        grid.points().into_iter().map(|x| self.value(x)).collect()
    }
}

/// Recorded expectation values of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub mean_x: Vec<T>,
    pub mean_p: Vec<T>,
    pub var_x: Vec<T>,
    pub snapshots: Option<Vec<WaveFunction<T>>>,
}

impl<T: Real> Trajectory<T> {
    fn empty(with_snapshots: bool) -> Self {
        Self {
            times: Vec::new(),
            mean_x: Vec::new(),
            mean_p: Vec::new(),
            var_x: Vec::new(),
            snapshots: with_snapshots.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, t: T, wf: &WaveFunction<T>) {
        let m = moments(wf);
        self.times.push(t);
        self.mean_x.push(m.mean_x);
        self.mean_p.push(m.mean_p);
        self.var_x.push(m.var_x);
        if let Some(s) = self.snapshots.as_mut() {
            s.push(wf.clone());
        }
    }
}

fn check_stepping<T: Real>(dt: T, steps: usize, record_every: usize) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::Config(format!("dt = {} must be positive", to_f64(dt))));
    }
    if steps == 0 || record_every == 0 {
        return Err(Error::Config("steps and record_every must be positive".into()));
    }
    Ok(())
}

/// Points on each side whose mass counts as having reached the boundary.
pub fn edge_band(n_points: usize) -> usize {
    (n_points / 32).max(2)
}

/// Strang split-step propagator `e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}`.
struct SplitStep<T: Real> {
    fft: FftPair<T>,
    half_potential: Vec<C<T>>,
    kinetic: Vec<C<T>>,
}

impl<T: Real> SplitStep<T> {
    fn new(grid: &Grid<T>, pot: &PotentialSpec<T>, dt: T) -> Self {
        let half = dt / lit(2.0);
        Self {
            fft: FftPair::new(grid.n_points()),
            half_potential: pot.values_on(grid).into_iter().map(|v| phase(-v * half)).collect(),
            kinetic: kinetic_phases(grid, pot.mass(), dt),
        }
    }

    fn apply(&self, block: &mut [C<T>]) {
        for (a, f) in block.iter_mut().zip(&self.half_potential) {
            *a *= f;
        }
        self.fft.forward(block);
        for (a, f) in block.iter_mut().zip(&self.kinetic) {
            *a *= f;
        }
        self.fft.inverse(block);
        for (a, f) in block.iter_mut().zip(&self.half_potential) {
            *a *= f;
        }
    }
}

fn kinetic_phases<T: Real>(grid: &Grid<T>, mass: T, dt: T) -> Vec<C<T>> {
    grid.wavenumbers()
        .into_iter()
        .map(|k| phase(-k * k * dt / (lit::<T>(2.0) * mass)))
        .collect()
}

/// Split-step spectral evolution, recording moments and snapshots every
/// `record_every` steps (and at t = 0).
pub fn evolve_unitary<T: Real>(
    wf: &WaveFunction<T>,
    pot: &PotentialSpec<T>,
    dt: T,
    steps: usize,
    record_every: usize,
) -> Result<Trajectory<T>> {
    check_stepping(dt, steps, record_every)?;
    let grid = *wf.grid();
    let n = grid.n_points();
    let band = edge_band(n);
    let leak = lit::<T>(LEAK_TOL);
    let check_edges = |w: &WaveFunction<T>, t: T| -> Result<()> {
        let edge = w.edge_mass(band);
        if edge > leak {
            return Err(Error::contract(
                "boundary-leak",
                format!("edge mass {:.3e} at t = {}", to_f64(edge), to_f64(t)),
            ));
        }
        Ok(())
    };
    check_edges(wf, T::zero())?;
    let prop = SplitStep::new(&grid, pot, dt);
    let mut traj = Trajectory::empty(true);
    traj.record(T::zero(), wf);
    let mut amps = wf.amplitudes().to_vec();
    for step in 1..=steps {
        for block in amps.chunks_mut(n) {
            prop.apply(block);
        }
        if step % record_every == 0 || step == steps {
            let t = dt * from_usize(step);
            let norm = amps.iter().fold(T::zero(), |s, a| s + a.norm_sqr()) * grid.dx();
            if (norm - T::one()).abs() > lit(NORM_DRIFT_TOL) {
                return Err(Error::contract(
                    "norm-conservation",
                    format!("norm drifted by {:.3e}", to_f64(norm - T::one())),
                ));
            }
            let w = WaveFunction::from_amplitudes(grid, amps.clone(), wf.spin_dim())?;
            check_edges(&w, t)?;
            if step % record_every == 0 {
                traj.record(t, &w);
            }
        }
    }
    Ok(traj)
}

/// `<H>` with the kinetic part evaluated spectrally.
pub fn energy<T: Real>(wf: &WaveFunction<T>, pot: &PotentialSpec<T>) -> T {
    let grid = wf.grid();
    let n = grid.n_points();
    let fft = FftPair::new(n);
    let ks = grid.wavenumbers();
    let (mut kin, mut total) = (T::zero(), T::zero());
    for block in wf.amplitudes().chunks(n) {
        let mut buf = block.to_vec();
        fft.forward(&mut buf);
        for (z, &k) in buf.iter().zip(&ks) {
            kin += z.norm_sqr() * k * k;
            total += z.norm_sqr();
        }
    }
    let kinetic = kin / (total * lit::<T>(2.0) * pot.mass());
    let v = pot.values_on(grid);
    let potential = wf
        .density()
        .iter()
        .zip(&v)
        .fold(T::zero(), |s, (r, v)| s + *r * *v)
        * grid.dx();
    kinetic + potential
}

/// Which force the acceleration of the mean is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// `|m x'' - <F>|`; needs snapshots.
    MeanForce,
    /// `|m x'' - F(<x>)|`: the classical law of motion for the mean.
    ForceAtMean,
}

/// Ehrenfest residual at every interior sample, with `x''` from central
/// differences at the recorded cadence (which must be uniform).
pub fn ehrenfest_residual<T: Real>(
    traj: &Trajectory<T>,
    pot: &PotentialSpec<T>,
    kind: ResidualKind,
) -> Result<Vec<T>> {
    let n = traj.len();
    if n < 5 {
        return Err(Error::contract(
            "ehrenfest-samples",
            format!("{n} samples, need at least 5"),
        ));
    }
    let h = traj.times[1] - traj.times[0];
    let snapshots = match kind {
        ResidualKind::MeanForce => Some(traj.snapshots.as_ref().ok_or_else(|| {
            Error::contract("snapshots", "mean-force residual needs recorded snapshots")
        })?),
        ResidualKind::ForceAtMean => None,
    };
    let x = &traj.mean_x;
    Ok((1..n - 1)
        .map(|i| {
            let acc = (x[i + 1] - lit::<T>(2.0) * x[i] + x[i - 1]) / (h * h);
            let force = match snapshots {
                Some(s) => {
                    let wf = &s[i];
                    let grid = wf.grid();
                    wf.density()
                        .iter()
                        .zip(grid.points())
                        .fold(T::zero(), |acc, (r, xk)| acc + *r * pot.force(xk))
                        * grid.dx()
                }
                None => pot.force(x[i]),
            };
            (pot.mass() * acc - force).abs()
        })
        .collect())
}

/// One kick-drift-kick step of `m x'' = F(x)`.
#[inline]
pub fn leapfrog_step<T: Real>(pot: &PotentialSpec<T>, x: T, p: T, dt: T) -> (T, T) {
    let half = dt / lit(2.0);
    let p = p + pot.force(x) * half;
    let x = x + p / pot.mass() * dt;
    let p = p + pot.force(x) * half;
    (x, p)
}

pub fn classical_energy<T: Real>(pot: &PotentialSpec<T>, x: T, p: T) -> T {
    p * p / (lit::<T>(2.0) * pot.mass()) + pot.value(x)
}

/// Leapfrog point trajectory, recorded at every step; `var_x` is zero.
pub fn classical_reference<T: Real>(pot: &PotentialSpec<T>, x0: T, p0: T, dt: T, steps: usize) -> Trajectory<T> {
    let mut traj = Trajectory::empty(false);
    let (mut x, mut p) = (x0, p0);
    for step in 0..=steps {
        if step > 0 {
            (x, p) = leapfrog_step(pot, x, p, dt);
        }
        traj.times.push(dt * from_usize(step));
        traj.mean_x.push(x);
        traj.mean_p.push(p);
        traj.var_x.push(T::zero());
    }
    traj
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenSystemParams<T> {
    /// `D`, in 1 / (length^2 time).
    pub decoherence_rate: T,
    /// `gamma`, in 1 / time.
    pub damping: T,
}

impl<T: Real> OpenSystemParams<T> {
    pub fn new(decoherence_rate: T, damping: T) -> Result<Self> {
        if !(decoherence_rate >= T::zero()) || !(damping >= T::zero()) {
            return Err(Error::Config(
                "decoherence_rate and damping must be non-negative".into(),
            ));
        }
        Ok(Self {
            decoherence_rate,
            damping,
        })
    }
}

/// `rho(x_j, x_k)` in the continuum convention: `sum_k rho(x_k, x_k) dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDensityMatrix<T: Real> {
    grid: Grid<T>,
    entries: DMatrix<C<T>>,
}

impl<T: Real> PositionDensityMatrix<T> {
    /// Validates Hermiticity (1e-9), unit trace (1e-8) and positivity (1e-6).
    pub fn new(grid: Grid<T>, entries: DMatrix<C<T>>) -> Result<Self> {
        let n = grid.n_points();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Dimension(format!(
                "{}x{} density matrix on {} grid points",
                entries.nrows(),
                entries.ncols(),
                n
            )));
        }
        let rho = Self { grid, entries };
        if rho.hermiticity_residual() > lit(1e-9) {
            return Err(Error::contract("hermitian", "density matrix is not Hermitian"));
        }
        if (rho.trace() - T::one()).abs() > lit(1e-8) {
            return Err(Error::contract(
                "unit-trace",
                format!("trace dx = {}", to_f64(rho.trace())),
            ));
        }
        if rho.min_eigenvalue() < lit(-1e-6) {
            return Err(Error::contract("positive", "negative eigenvalue below -1e-6"));
        }
        Ok(rho)
    }

    pub fn pure(wf: &WaveFunction<T>) -> Result<Self> {
        Self::mixture(&[(T::one(), wf)])
    }

    /// `sum_i w_i |psi_i><psi_i|` for spinless wave functions; weights are
    /// normalized to sum to 1.
    pub fn mixture(terms: &[(T, &WaveFunction<T>)]) -> Result<Self> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::Config("empty mixture".into()));
        };
        let grid = *first.grid();
        let n = grid.n_points();
        let total = terms.iter().fold(T::zero(), |s, (w, _)| s + *w);
        if terms.iter().any(|(w, _)| *w < T::zero()) || !(total > T::zero()) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let mut m = DMatrix::from_element(n, n, cplx(T::zero(), T::zero()));
        for (w, wf) in terms {
            if *wf.grid() != grid || wf.spin_dim() != 1 {
                return Err(Error::Dimension(
                    "mixture members must be spinless and share the grid".into(),
                ));
            }
            let a = wf.amplitudes();
            let w = *w / total;
            for j in 0..n {
                for i in 0..n {
                    m[(i, j)] += (a[i] * a[j].conj()).scale(w);
                }
            }
        }
        Self::new(grid, m)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<C<T>> {
        &self.entries
    }

    /// `sum_k rho(x_k, x_k) dx`.
    pub fn trace(&self) -> T {
        self.entries.diagonal().iter().fold(T::zero(), |s, z| s + z.re) * self.grid.dx()
    }

    /// `Tr(rho^2)` in the continuum convention.
    pub fn purity(&self) -> T {
        let dx = self.grid.dx();
        self.entries.iter().fold(T::zero(), |s, z| s + z.norm_sqr()) * dx * dx
    }

    pub fn hermiticity_residual(&self) -> T {
        crate::manybody::hermiticity_residual(&self.entries)
    }

    /// Ascending eigenvalues of the operator `rho dx`.
    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.operator())
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    fn operator(&self) -> DMatrix<C<T>> {
        let dx = self.grid.dx();
        let m = &self.entries;
        // symmetrize away rounding so the eigen solver sees an exact Hermitian
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] + m[(j, i)].conj()).scale(dx / lit(2.0))
        })
    }
}

/// Propagates `rho` for `steps` steps of `dt`, returning the states at t = 0
/// and every `record_every` steps.
pub fn evolve_open<T: Real>(
    rho: &PositionDensityMatrix<T>,
    pot: &PotentialSpec<T>,
    params: &OpenSystemParams<T>,
    dt: T,
    steps: usize,
    record_every: usize,
) -> Result<Vec<(T, PositionDensityMatrix<T>)>> {
    check_stepping(dt, steps, record_every)?;
    let grid = *rho.grid();
    let n = grid.n_points();
    let xs = grid.points();
    let v = pot.values_on(&grid);
    let half = dt / lit(2.0);
    // exp(-i (V(x) - V(x')) dt/2 - D (x - x')^2 dt/2), column-major like DMatrix
    let mut pointwise = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let s = xs[i] - xs[j];
            let decay = (-params.decoherence_rate * s * s * half).exp();
            pointwise.push(phase(-(v[i] - v[j]) * half).scale(decay));
        }
    }
    let fft = FftPair::new(n);
    let kinetic = kinetic_phases(&grid, pot.mass(), dt);
    let mut m = rho.entries().clone();
    let mut out = vec![(T::zero(), rho.clone())];
    for step in 1..=steps {
        for (a, f) in m.iter_mut().zip(&pointwise) {
            *a *= f;
        }
        // rho -> U rho U^dagger: act on columns, take the adjoint, repeat
        for _ in 0..2 {
            for col in m.as_mut_slice().chunks_mut(n) {
                fft.forward(col);
                for (a, f) in col.iter_mut().zip(&kinetic) {
                    *a *= f;
                }
                fft.inverse(col);
            }
            m.adjoint_mut();
        }
        for (a, f) in m.iter_mut().zip(&pointwise) {
            *a *= f;
        }
        if params.damping > T::zero() {
            apply_damping(&mut m, &xs, grid.dx(), params.damping * dt);
        }
        if step % record_every == 0 {
            let t = dt * from_usize(step);
            let state = PositionDensityMatrix { grid, entries: m.clone() };
            let drift = (state.trace() - T::one()).abs();
            if drift > lit(TRACE_TOL) {
                return Err(Error::Instability(format!(
                    "trace drifted by {:.3e} at t = {}",
                    to_f64(drift),
                    to_f64(t)
                )));
            }
            let lowest = state.min_eigenvalue();
            if lowest < -lit::<T>(POSITIVITY_TOL) {
                return Err(Error::Instability(format!(
                    "eigenvalue {:.3e} at t = {}",
                    to_f64(lowest),
                    to_f64(t)
                )));
            }
            out.push((t, state));
        }
    }
    Ok(out)
}

/// Explicit Euler step of `-gamma (x - x') (d_x - d_x') rho` with periodic
/// central differences.
fn apply_damping<T: Real>(m: &mut DMatrix<C<T>>, xs: &[T], dx: T, gamma_dt: T) {
    let n = xs.len();
    let src = m.clone();
    let inv = T::one() / (lit::<T>(2.0) * dx);
    for j in 0..n {
        let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
        for i in 0..n {
            let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
            let d_x = (src[(ip, j)] - src[(im, j)]).scale(inv);
            let d_xp = (src[(i, jp)] - src[(i, jm)]).scale(inv);
            m[(i, j)] -= (d_x - d_xp).scale(gamma_dt * (xs[i] - xs[j]));
        }
    }
}

/// Mean `|rho(x_k, x_{k+m})|` over each anti-diagonal band `m = 0..n-1`.
pub fn band_profile<T: Real>(rho: &PositionDensityMatrix<T>) -> Vec<T> {
    let n = rho.grid().n_points();
    let e = rho.entries();
    (0..n)
        .map(|m| {
            let s = (0..n - m).fold(T::zero(), |s, k| s + e[(k, k + m)].norm_sqr().sqrt());
            s / from_usize(n - m)
        })
        .collect()
}

/// Largest offset `m dx` whose band still carries at least `1/e` of the
/// diagonal's mean magnitude; every farther band falls below it.
pub fn coherence_length<T: Real>(rho: &PositionDensityMatrix<T>) -> T {
    let bands = band_profile(rho);
    let threshold = bands[0] * (-T::one()).exp();
    let m = (0..bands.len()).rev().find(|&m| bands[m] >= threshold).unwrap_or(0);
    from_usize::<T>(m) * rho.grid().dx()
}

/// `|sum_k rho(x_k, x_{k+m mod n})| dx`: the periodic band sum at offset
/// `m dx`. Free evolution leaves it unchanged and the decoherence term damps
/// it by exactly `exp(-D (m dx)^2 t)`.
pub fn off_diagonal_weight<T: Real>(rho: &PositionDensityMatrix<T>, offset_points: usize) -> T {
    let n = rho.grid().n_points();
    let e = rho.entries();
    let s = (0..n).fold(cplx(T::zero(), T::zero()), |s, k| s + e[(k, (k + offset_points) % n)]);
    s.norm_sqr().sqrt() * rho.grid().dx()
}

/// Least-squares rate `r` of `values ~ A exp(-r t)`.
pub fn fit_decay_rate<T: Real>(times: &[T], values: &[T]) -> Result<T> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Config("need at least two (time, value) pairs".into()));
    }
    if values.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::Config("decay fit needs positive values".into()));
    }
    let n = from_usize::<T>(times.len());
    let logs: Vec<T> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().fold(T::zero(), |s, t| s + *t) / n;
    let lm = logs.iter().fold(T::zero(), |s, l| s + *l) / n;
    let (mut num, mut den) = (T::zero(), T::zero());
    for (t, l) in times.iter().zip(&logs) {
        num += (*t - tm) * (*l - lm);
        den += (*t - tm) * (*t - tm);
    }
    if !(den > T::zero()) {
        return Err(Error::Config("decay fit needs distinct times".into()));
    }
    Ok(-num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub center: T,
    /// Length of the 99% localization interval.
    pub width: T,
}

/// Leading `top_k` components of `rho`, weights descending. Eigenvectors
/// sharing a (numerically) degenerate eigenvalue pair are rotated to the
/// least-overlapping basis of their span before being reported.
pub fn mixture_analysis<T: Real>(rho: &PositionDensityMatrix<T>, top_k: usize) -> Result<Vec<MixtureComponent<T>>> {
    let grid = *rho.grid();
    let n = grid.n_points();
    let op = rho.operator();
    let eig = flush_tiny(&op).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let take = top_k.min(n);
    let vectors: Vec<Vec<C<T>>> = order
        .iter()
        .take(take + 1)
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let values: Vec<T> = order.iter().take(take + 1).map(|&k| eig.eigenvalues[k]).collect();
    let mut picked: Vec<(T, Vec<C<T>>)> = Vec::with_capacity(take);
    let mut i = 0;
    while i < take {
        let paired = i + 1 < values.len()
            && (values[i] - values[i + 1]).abs() < lit(MIXTURE_DEGENERACY_TOL);
        if paired {
            let search = RotationSearch::new(&vectors[i], &vectors[i + 1], n);
            let scan = search.scan(32);
            let (mut bi, mut bj) = (0, 0);
            for a in 0..scan.thetas.len() {
                for b in 0..scan.phases.len() {
                    if scan.value(a, b) < scan.value(bi, bj) {
                        bi = a;
                        bj = b;
                    }
                }
            }
            let best = search.refine(scan.thetas[bi], scan.phases[bj], T::pi() / lit(32.0));
            for u in [best.u1, best.u2] {
                picked.push((expect_value(&op, &u), u));
            }
            i += 2;
        } else {
            picked.push((values[i], vectors[i].clone()));
            i += 1;
        }
    }
    picked.truncate(take);
    picked.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite weights"));
    picked
        .into_iter()
        .map(|(weight, u)| {
            let wf = WaveFunction::from_unit_vector(grid, &u, 1)?;
            let li = localization_interval(&wf, lit(0.01))?;
            Ok(MixtureComponent {
                weight,
                center: li.center,
                width: li.length,
            })
        })
        .collect()
}

fn expect_value<T: Real>(op: &DMatrix<C<T>>, u: &[C<T>]) -> T {
    let n = u.len();
    let mut s = cplx(T::zero(), T::zero());
    for j in 0..n {
        for i in 0..n {
            s += u[i].conj() * op[(i, j)] * u[j];
        }
    }
    s.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_packet, superpose, PacketParams};

    fn packet(grid: &Grid<f64>, x0: f64, p0: f64, sigma: f64) -> WaveFunction<f64> {
        gaussian_packet(grid, &PacketParams::new(x0, p0, sigma)).unwrap()
    }

    #[test]
    fn free_mean_moves_uniformly() {
        let g = Grid::new(-20.0, 20.0, 512).unwrap();
        let wf = packet(&g, -4.0, 2.0, 1.0);
        let pot = PotentialSpec::free(1.0).unwrap();
        let tr = evolve_unitary(&wf, &pot, 0.01, 200, 10).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.mean_x) {
            assert!((x - (-4.0 + 2.0 * t)).abs() < 1e-5, "t = {t}: {x}");
        }
    }

    #[test]
    fn harmonic_coherent_state_oscillates() {
        let g = Grid::new(-12.0, 12.0, 256).unwrap();
        let wf = packet(&g, 3.0, 0.0, std::f64::consts::FRAC_1_SQRT_2);
        let pot = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let tr = evolve_unitary(&wf, &pot, 0.002, 3000, 50).unwrap();
        for ((t, x), v) in tr.times.iter().zip(&tr.mean_x).zip(&tr.var_x) {
            assert!((x - 3.0 * t.cos()).abs() < 1e-4, "t = {t}: {x}");
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn free_spreading_law() {
        let g = Grid::new(-25.0, 25.0, 512).unwrap();
        let wf = packet(&g, 0.0, 0.0, 1.0);
        let pot = PotentialSpec::free(1.0).unwrap();
        let tr = evolve_unitary(&wf, &pot, 0.01, 400, 20).unwrap();
        for (t, v) in tr.times.iter().zip(&tr.var_x) {
            let exact = 1.0 + (t / 2.0).powi(2);
            assert!((v / exact - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn leak_and_config_errors() {
        let g = Grid::new(-10.0, 10.0, 128).unwrap();
        let wf = packet(&g, 0.0, 6.0, 1.0);
        let pot = PotentialSpec::free(1.0).unwrap();
        assert!(matches!(
            evolve_unitary(&wf, &pot, 0.01, 500, 10),
            Err(Error::Contract { contract: "boundary-leak", .. })
        ));
        assert!(evolve_unitary(&wf, &pot, 0.0, 5, 1).is_err());
        assert!(PotentialSpec::free(0.0).is_err());
        assert!(OpenSystemParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn unitary_energy_is_conserved() {
        let g = Grid::new(-10.0, 10.0, 256).unwrap();
        let wf = packet(&g, 1.0, 0.5, 0.6);
        let pot = PotentialSpec::quartic(0.1, 1.0).unwrap();
        let e0 = energy(&wf, &pot);
        let tr = evolve_unitary(&wf, &pot, 0.001, 1000, 100).unwrap();
        for s in tr.snapshots.as_ref().unwrap() {
            assert!((energy(s, &pot) - e0).abs() < 1e-6);
        }
    }

    #[test]
    fn ehrenfest_exact_cases() {
        let g = Grid::new(-12.0, 12.0, 256).unwrap();
        let wf = packet(&g, 2.0, 1.0, 0.8);
        for pot in [PotentialSpec::free(1.0).unwrap(), PotentialSpec::harmonic(1.0, 1.0).unwrap()] {
            let tr = evolve_unitary(&wf, &pot, 0.001, 1000, 10).unwrap();
            for kind in [ResidualKind::MeanForce, ResidualKind::ForceAtMean] {
                let r = ehrenfest_residual(&tr, &pot, kind).unwrap();
                assert!(r.iter().all(|v| *v <= 1e-4), "{kind:?}");
            }
        }
    }

    #[test]
    fn quartic_width_dependence() {
        let g = Grid::new(-10.0, 10.0, 512).unwrap();
        let pot = PotentialSpec::quartic(0.1, 1.0).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for sigma in [0.2, 0.5, 1.0] {
            let tr = evolve_unitary(&packet(&g, 1.5, 0.0, sigma), &pot, 0.0005, 400, 20).unwrap();
            let r = ehrenfest_residual(&tr, &pot, ResidualKind::ForceAtMean).unwrap();
            if let Some(p) = prev {
                assert!(r.iter().zip(&p).all(|(a, b)| a > b));
            }
            prev = Some(r);
        }
    }

    #[test]
    fn residual_needs_samples_and_snapshots() {
        let pot = PotentialSpec::free(1.0).unwrap();
        let mut tr = classical_reference(&pot, 0.0, 1.0, 0.1, 3);
        assert!(ehrenfest_residual(&tr, &pot, ResidualKind::ForceAtMean).is_err());
        tr = classical_reference(&pot, 0.0, 1.0, 0.1, 10);
        assert!(matches!(
            ehrenfest_residual(&tr, &pot, ResidualKind::MeanForce),
            Err(Error::Contract { contract: "snapshots", .. })
        ));
    }

    #[test]
    fn classical_references() {
        let h: PotentialSpec<f64> = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let tr = classical_reference(&h, 3.0, 0.0, 1e-3, 5000);
        for (t, x) in tr.times.iter().zip(&tr.mean_x) {
            assert!((x - 3.0 * t.cos()).abs() < 1e-6);
        }
        let f = PotentialSpec::free(1.0).unwrap();
        let tr = classical_reference(&f, 0.0, 2.0, 0.25, 8);
        for (t, x) in tr.times.iter().zip(&tr.mean_x) {
            assert_eq!(*x, 2.0 * t);
        }
        let q: PotentialSpec<f64> = PotentialSpec::quartic(0.25, 1.0).unwrap();
        let tr = classical_reference(&q, 1.0, 0.0, 1e-4, 50_000);
        let e0 = classical_energy(&q, 1.0, 0.0);
        for (x, p) in tr.mean_x.iter().zip(&tr.mean_p) {
            assert!((classical_energy(&q, *x, *p) - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn table_potential_interpolates() {
        let g = Grid::new(-4.0, 4.0, 64).unwrap();
        let vals: Vec<f64> = g.points().iter().map(|x| 2.0 * x).collect();
        let t = PotentialSpec::new(PotentialKind::Table { grid: g, values: vals }, 1.0).unwrap();
        assert!((t.value(0.3) - 0.6).abs() < 1e-12);
        assert!((t.force(0.3) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_open_system_matches_unitary() {
        let g = Grid::new(-10.0, 10.0, 128).unwrap();
        let wf = packet(&g, -1.0, 1.0, 1.0);
        let pot = PotentialSpec::harmonic(0.7, 1.0).unwrap();
        let none = OpenSystemParams::new(0.0, 0.0).unwrap();
        let rho = PositionDensityMatrix::pure(&wf).unwrap();
        let open = evolve_open(&rho, &pot, &none, 0.01, 100, 100).unwrap();
        let tr = evolve_unitary(&wf, &pot, 0.01, 100, 100).unwrap();
        let last = tr.snapshots.unwrap().pop().unwrap();
        let exact = PositionDensityMatrix::pure(&last).unwrap();
        let diff = (open[1].1.entries() - exact.entries()).camax();
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn periodic_band_decays_at_the_decoherence_rate() {
        let g = Grid::new(-10.0, 10.0, 128).unwrap();
        let d = 4.0;
        let (l, r) = (packet(&g, -d / 2.0, 0.0, 0.7), packet(&g, d / 2.0, 0.0, 0.7));
        let one = C::new(1.0, 0.0);
        let cat = superpose(&[(one, &l), (one, &r)]).unwrap();
        let rho = PositionDensityMatrix::pure(&cat).unwrap();
        let pot = PotentialSpec::free(1.0).unwrap();
        let params = OpenSystemParams::new(0.2, 0.0).unwrap();
        let m = (d / g.dx()).round() as usize;
        let run = evolve_open(&rho, &pot, &params, 0.005, 200, 20).unwrap();
        let times: Vec<f64> = run.iter().map(|(t, _)| *t).collect();
        let w: Vec<f64> = run.iter().map(|(_, s)| off_diagonal_weight(s, m)).collect();
        let rate = fit_decay_rate(&times, &w).unwrap();
        let s = m as f64 * g.dx();
        assert!((rate / (0.2 * s * s) - 1.0).abs() < 1e-6, "{rate}");
    }

    #[test]
    fn open_runs_keep_trace_and_lose_purity() {
        let g = Grid::new(-8.0, 8.0, 128).unwrap();
        let one = C::new(1.0, 0.0);
        let (l, r) = (packet(&g, -2.0, 0.0, 0.8), packet(&g, 2.0, 0.0, 0.8));
        let cat = superpose(&[(one, &l), (one, &r)]).unwrap();
        let rho = PositionDensityMatrix::pure(&cat).unwrap();
        let pot = PotentialSpec::harmonic(0.5, 1.0).unwrap();
        let params = OpenSystemParams::new(0.5, 0.0).unwrap();
        let run = evolve_open(&rho, &pot, &params, 0.01, 50, 1).unwrap();
        for w in run.windows(2) {
            assert!(w[1].1.purity() <= w[0].1.purity() + 1e-6);
            assert!((w[1].1.trace() - 1.0).abs() < 1e-6);
            assert!(w[1].1.hermiticity_residual() < 1e-8);
        }
        let damped = OpenSystemParams::new(0.5, 0.1).unwrap();
        let run = evolve_open(&rho, &pot, &damped, 0.005, 40, 20).unwrap();
        assert!((run.last().unwrap().1.trace() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coherence_lengths() {
        let g = Grid::new(-10.0, 10.0, 256).unwrap();
        let sigma = 0.5;
        let rho = PositionDensityMatrix::pure(&packet(&g, 0.0, 0.0, sigma)).unwrap();
        let l = coherence_length(&rho);
        assert!(l / (2.0 * sigma) > 1.0 / 1.5 && l / (2.0 * sigma) < 1.5, "{l}");
        let (a, b) = (packet(&g, -3.0, 0.0, sigma), packet(&g, 3.0, 0.0, sigma));
        let mix = PositionDensityMatrix::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert!(coherence_length(&mix) < 2.0);
        let one = C::new(1.0, 0.0);
        let cat = PositionDensityMatrix::pure(&superpose(&[(one, &a), (one, &b)]).unwrap()).unwrap();
        assert!(coherence_length(&cat) >= 6.0);
    }

    #[test]
    fn mixture_components() {
        let g = Grid::new(-10.0, 10.0, 256).unwrap();
        let (a, b) = (packet(&g, -4.0, 0.0, 0.5), packet(&g, 4.0, 0.0, 0.5));
        let pure = mixture_analysis(&PositionDensityMatrix::pure(&a).unwrap(), 2).unwrap();
        assert!((pure[0].weight - 1.0).abs() < 1e-9 && pure[1].weight.abs() < 1e-9);
        let own = localization_interval(&a, 0.01).unwrap().length;
        assert!((pure[0].width - own).abs() < 1e-9);

        let mix = PositionDensityMatrix::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
        let comps = mixture_analysis(&mix, 2).unwrap();
        let mut centers: Vec<f64> = comps.iter().map(|c| c.center).collect();
        centers.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!(comps.iter().all(|c| (c.weight - 0.5).abs() < 1e-9));
        assert!((centers[0] + 4.0).abs() < 0.1 && (centers[1] - 4.0).abs() < 0.1, "{centers:?}");

        let one = C::new(1.0, 0.0);
        let cat = PositionDensityMatrix::pure(&superpose(&[(one, &a), (one, &b)]).unwrap()).unwrap();
        let c = mixture_analysis(&cat, 1).unwrap();
        assert!((c[0].weight - 1.0).abs() < 1e-9 && c[0].width > 8.0);
    }
}
