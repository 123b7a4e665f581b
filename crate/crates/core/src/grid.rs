//! One-dimensional configuration space: uniform periodic grids, wave
//! functions on them, Gaussian packets, moments and localization measures.
//!
//! Amplitudes are stored in the continuum convention, so a normalized wave
//! function satisfies `sum |psi_k|^2 dx = 1`. Spinful wave functions carry two
//! spatial blocks laid out spin-major: index `s * n_points + k`.

use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::scalar::{cplx, from_usize, lit, phase, to_f64, Real, C};

/// Tolerance on `sum |psi|^2 dx - 1` for every constructed wave function.
pub const NORM_TOL: f64 = 1e-10;
/// Largest probability mass a packet may leave outside the grid.
pub const LEAK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    x_min: T,
    x_max: T,
    n_points: usize,
}

impl<T: Real> Grid<T> {
    /// Uniform periodic grid with points `x_min + k dx`, `k = 0..n_points`.
    pub fn new(x_min: T, x_max: T, n_points: usize) -> Result<Self> {
        if !(x_max > x_min) {
            return Err(Error::Config(format!(
                "degenerate grid interval [{}, {}]",
                to_f64(x_min),
                to_f64(x_max)
            )));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_points = {n_points} must be a power of two >= 8"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / from_usize(self.n_points)
    }

    pub fn length(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn x(&self, k: usize) -> T {
        self.x_min + from_usize::<T>(k) * self.dx()
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n_points).map(|k| self.x(k)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<T> {
        let n = self.n_points;
        let dk = T::two_pi() / self.length();
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    from_usize::<T>(j) * dk
                } else {
                    -(from_usize::<T>(n - j) * dk)
                }
            })
            .collect()
    }
}

/// Half-open spatial interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    /// Indicator of the interval sampled on the grid points.
    pub fn indicator(&self, grid: &Grid<T>) -> Vec<T> {
        grid.points()
            .into_iter()
            .map(|x| if self.contains(x) { T::one() } else { T::zero() })
            .collect()
    }
}

/// Parameters of a Gaussian packet `exp(-(x-x0)^2/(4 sigma^2) + i p0 x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketParams<T> {
    pub x0: T,
    pub p0: T,
    pub sigma: T,
}

impl<T: Real> PacketParams<T> {
    pub fn new(x0: T, p0: T, sigma: T) -> Self {
        Self { x0, p0, sigma }
    }

    /// Momentum spread of the minimum-uncertainty packet.
    pub fn sigma_p(&self) -> T {
        T::one() / (lit::<T>(2.0) * self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction<T> {
    grid: Grid<T>,
    amplitudes: Vec<C<T>>,
    spin_dim: usize,
}

impl<T: Real> WaveFunction<T> {
    /// Normalizes `amplitudes` onto the grid.
    pub fn from_amplitudes(grid: Grid<T>, amplitudes: Vec<C<T>>, spin_dim: usize) -> Result<Self> {
        if spin_dim != 1 && spin_dim != 2 {
            return Err(Error::Config(format!("spin_dim = {spin_dim}, expected 1 or 2")));
        }
        if amplitudes.len() != grid.n_points() * spin_dim {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} grid points x spin {}",
                amplitudes.len(),
                grid.n_points(),
                spin_dim
            )));
        }
        let norm_sq = amplitudes.iter().map(|a| a.norm_sqr()).fold(T::zero(), |s, v| s + v)
            * grid.dx();
        if !(norm_sq > T::zero()) || !norm_sq.is_finite() {
            return Err(Error::ZeroNorm {
                norm: to_f64(norm_sq.sqrt()),
            });
        }
        let inv = T::one() / norm_sq.sqrt();
        let amplitudes = amplitudes.into_iter().map(|a| a.scale(inv)).collect();
        Ok(Self {
            grid,
            amplitudes,
            spin_dim,
        })
    }

    /// Builds a wave function from coordinates in the orthonormal grid basis
    /// (`amplitude * sqrt(dx)`).
    pub fn from_unit_vector(grid: Grid<T>, coords: &[C<T>], spin_dim: usize) -> Result<Self> {
        let inv = T::one() / grid.dx().sqrt();
        Self::from_amplitudes(grid, coords.iter().map(|c| c.scale(inv)).collect(), spin_dim)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    /// Dimension of the single-particle space (`n_points * spin_dim`).
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sq(&self) -> T {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .fold(T::zero(), |s, v| s + v)
            * self.grid.dx()
    }

    /// Coordinates in the orthonormal grid basis; unit Euclidean norm.
    pub fn unit_vector(&self) -> Vec<C<T>> {
        let s = self.grid.dx().sqrt();
        self.amplitudes.iter().map(|a| a.scale(s)).collect()
    }

    /// Spatial probability density, summed over spin.
    pub fn density(&self) -> Vec<T> {
        let n = self.grid.n_points();
        (0..n)
            .map(|k| {
                (0..self.spin_dim)
                    .map(|s| self.amplitudes[s * n + k].norm_sqr())
                    .fold(T::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Tensor product with a two-component spinor (normalized internally).
    pub fn with_spin(&self, spinor: [C<T>; 2]) -> Result<Self> {
        if self.spin_dim != 1 {
            return Err(Error::Dimension("wave function already carries spin".into()));
        }
        let amplitudes = spinor
            .iter()
            .flat_map(|&s| self.amplitudes.iter().map(move |&a| a * s))
            .collect();
        Self::from_amplitudes(self.grid, amplitudes, 2)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Dimension("wave functions live on different grids".into()));
        }
        if self.spin_dim != other.spin_dim {
            return Err(Error::Dimension(format!(
                "spin_dim {} vs {}",
                self.spin_dim, other.spin_dim
            )));
        }
        Ok(())
    }

    /// Probability mass inside the outermost `band` points on either side.
    pub fn edge_mass(&self, band: usize) -> T {
        let n = self.grid.n_points();
        let rho = self.density();
        let band = band.min(n / 2);
        let edge = rho[..band].iter().chain(&rho[n - band..]).fold(T::zero(), |s, &v| s + v);
        edge * self.grid.dx()
    }
}

/// Normalized Gaussian packet on `grid`.
pub fn gaussian_packet<T: Real>(grid: &Grid<T>, params: &PacketParams<T>) -> Result<WaveFunction<T>> {
    let dx = grid.dx();
    if !(params.sigma >= lit::<T>(4.0) * dx) {
        return Err(Error::Config(format!(
            "sigma = {} is below 4 dx = {}",
            to_f64(params.sigma),
            to_f64(lit::<T>(4.0) * dx)
        )));
    }
    let four_var = lit::<T>(4.0) * params.sigma * params.sigma;
    let amps: Vec<C<T>> = grid
        .points()
        .into_iter()
        .map(|x| {
            let d = x - params.x0;
            phase(params.p0 * x).scale((-(d * d) / four_var).exp())
        })
        .collect();
    // |psi|^2 is a Gaussian of variance sigma^2 whose full-line integral is
    // sigma sqrt(2 pi); whatever the grid misses has leaked.
    let on_grid = amps.iter().map(|a| a.norm_sqr()).fold(T::zero(), |s, v| s + v) * dx;
    let full = params.sigma * T::two_pi().sqrt();
    let leak = T::one() - on_grid / full;
    let tol = lit::<T>(LEAK_TOL).max(lit::<T>(100.0) * T::default_epsilon());
    if leak > tol {
        return Err(Error::Config(format!(
            "packet at x0 = {} leaks {:.3e} of its mass off the grid",
            to_f64(params.x0),
            to_f64(leak)
        )));
    }
    WaveFunction::from_amplitudes(*grid, amps, 1)
}

/// `sum conj(a) b dx`.
pub fn inner<T: Real>(a: &WaveFunction<T>, b: &WaveFunction<T>) -> Result<C<T>> {
    a.check_compatible(b)?;
    let s = a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .fold(C::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y);
    Ok(s.scale(a.grid.dx()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mean_x: T,
    pub mean_p: T,
    pub var_x: T,
    pub var_p: T,
}

/// Position moments by quadrature, momentum moments from the discrete Fourier
/// transform of each spin block.
pub fn moments<T: Real>(wf: &WaveFunction<T>) -> Moments<T> {
    let grid = wf.grid();
    let xs = grid.points();
    let rho = wf.density();
    let total = rho.iter().fold(T::zero(), |s, &v| s + v);
    let mean_x = xs.iter().zip(&rho).fold(T::zero(), |s, (&x, &r)| s + x * r) / total;
    let var_x = xs
        .iter()
        .zip(&rho)
        .fold(T::zero(), |s, (&x, &r)| s + (x - mean_x) * (x - mean_x) * r)
        / total;

    let n = grid.n_points();
    let ks = grid.wavenumbers();
    let fft = FftPair::new(n);
    let mut p_rho = vec![T::zero(); n];
    for block in wf.amplitudes().chunks(n) {
        let mut buf = block.to_vec();
        fft.forward(&mut buf);
        for (acc, z) in p_rho.iter_mut().zip(&buf) {
            *acc += z.norm_sqr();
        }
    }
    let p_total = p_rho.iter().fold(T::zero(), |s, &v| s + v);
    let mean_p = ks.iter().zip(&p_rho).fold(T::zero(), |s, (&k, &r)| s + k * r) / p_total;
    let var_p = ks
        .iter()
        .zip(&p_rho)
        .fold(T::zero(), |s, (&k, &r)| s + (k - mean_p) * (k - mean_p) * r)
        / p_total;
    Moments {
        mean_x,
        mean_p,
        var_x,
        var_p,
    }
}

/// Spatial support overlap `sum |a| |b| dx` in `[0, 1]`.
pub fn overlap_measure<T: Real>(a: &WaveFunction<T>, b: &WaveFunction<T>) -> Result<T> {
    a.check_compatible(b)?;
    let s = a
        .density()
        .into_iter()
        .zip(b.density())
        .fold(T::zero(), |s, (ra, rb)| s + (ra * rb).sqrt());
    Ok(s * a.grid.dx())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationInterval<T> {
    pub length: T,
    pub center: T,
}

/// Smallest contiguous run of grid cells holding at least `1 - delta` of the
/// probability.
pub fn localization_interval<T: Real>(wf: &WaveFunction<T>, delta: T) -> Result<LocalizationInterval<T>> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::Config(format!("delta = {} not in (0, 1)", to_f64(delta))));
    }
    let grid = wf.grid();
    let dx = grid.dx();
    let mass: Vec<T> = wf.density().into_iter().map(|r| r * dx).collect();
    let total = mass.iter().fold(T::zero(), |s, &v| s + v);
    let target = (T::one() - delta) * total;
    // guard against prefix-sum rounding when the target is the whole mass
    let target = target - lit::<T>(1e-14) * total;

    let n = mass.len();
    // shortest run first, then the heaviest among equally short runs
    let mut best: Option<(usize, usize, T)> = None;
    let mut lo = 0;
    let mut acc = T::zero();
    for hi in 0..n {
        acc += mass[hi];
        while lo < hi && acc - mass[lo] >= target {
            acc -= mass[lo];
            lo += 1;
        }
        if acc >= target {
            let better = match best {
                None => true,
                Some((l, h, m)) => hi - lo < h - l || (hi - lo == h - l && acc > m),
            };
            if better {
                best = Some((lo, hi, acc));
            }
        }
    }
    let (lo, hi, _) = best.unwrap_or((0, n - 1, total));
    Ok(LocalizationInterval {
        length: from_usize::<T>(hi - lo + 1) * dx,
        center: (grid.x(lo) + grid.x(hi)) / lit(2.0),
    })
}

/// Normalized superposition `sum c_i psi_i`.
pub fn superpose<T: Real>(terms: &[(C<T>, &WaveFunction<T>)]) -> Result<WaveFunction<T>> {
    let first = terms
        .first()
        .ok_or_else(|| Error::Config("empty superposition".into()))?
        .1;
    let mut amps = vec![cplx(T::zero(), T::zero()); first.dim()];
    for (c, wf) in terms {
        first.check_compatible(wf)?;
        for (a, b) in amps.iter_mut().zip(wf.amplitudes()) {
            *a += *c * b;
        }
    }
    WaveFunction::from_amplitudes(first.grid, amps, first.spin_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::new(-10.0, 10.0, 256).unwrap()
    }

    fn packet(x0: f64, p0: f64, sigma: f64) -> WaveFunction<f64> {
        gaussian_packet(&grid(), &PacketParams::new(x0, p0, sigma)).unwrap()
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(grid().dx(), 0.078125);
        assert_eq!(Grid::new(0.0, 1.0, 8).unwrap().dx(), 0.125);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(matches!(Grid::new(5.0, 5.0, 256), Err(Error::Config(_))));
        assert!(matches!(Grid::new(0.0, 1.0, 100), Err(Error::Config(_))));
        assert!(matches!(Grid::new(0.0, 1.0, 4), Err(Error::Config(_))));
    }

    #[test]
    fn wavenumbers_fft_order() {
        let g = Grid::new(0.0, 8.0, 8).unwrap();
        let k = g.wavenumbers();
        let dk = std::f64::consts::TAU / 8.0;
        assert!((k[1] - dk).abs() < 1e-15);
        assert!((k[4] + 4.0 * dk).abs() < 1e-15);
        assert!((k[7] + dk).abs() < 1e-15);
    }

    #[test]
    fn centered_gaussian_moments() {
        let m = moments(&packet(0.0, 0.0, 1.0));
        assert!(m.mean_x.abs() < 1e-6);
        assert!((m.var_x - 1.0).abs() < 1e-6);
        assert!((m.var_p - 0.25).abs() < 1e-4);
    }

    #[test]
    fn moving_gaussian_moments() {
        let m = moments(&packet(3.0, 2.0, 0.5));
        assert!((m.mean_x - 3.0).abs() < 1e-6);
        assert!((m.mean_p - 2.0).abs() < 1e-6);
        let m = moments(&packet(2.0, -1.0, 1.0));
        assert!((m.mean_x - 2.0).abs() < 1e-6);
        assert!((m.mean_p + 1.0).abs() < 1e-6);
    }

    #[test]
    fn packet_near_boundary_leaks() {
        let err = gaussian_packet(&grid(), &PacketParams::new(9.9, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn packet_narrower_than_grid_rejected() {
        assert!(gaussian_packet(&grid(), &PacketParams::new(0.0, 0.0, 0.2)).is_err());
    }

    #[test]
    fn normalization_and_self_inner() {
        let a = packet(1.0, 0.7, 0.8);
        assert!((a.norm_sq() - 1.0).abs() < NORM_TOL);
        let s = inner(&a, &a).unwrap();
        assert!((s.re - 1.0).abs() < 1e-10 && s.im.abs() < 1e-12);
    }

    #[test]
    fn disjoint_packets_orthogonal() {
        let s = inner(&packet(-4.0, 0.0, 0.5), &packet(4.0, 0.0, 0.5)).unwrap();
        assert!(s.norm() < 1e-10);
    }

    #[test]
    fn gaussian_overlap_closed_form() {
        let a = packet(0.0, 0.0, 1.0);
        let b = packet(1.0, 0.0, 1.0);
        let expected = (-1.0f64 / 8.0).exp();
        // independent quadrature of the unnormalized Gaussians
        let xs = grid().points();
        let g = |x: f64, c: f64| (-(x - c) * (x - c) / 4.0).exp();
        let num: f64 = xs.iter().map(|&x| g(x, 0.0) * g(x, 1.0)).sum();
        let n0: f64 = xs.iter().map(|&x| g(x, 0.0).powi(2)).sum();
        let n1: f64 = xs.iter().map(|&x| g(x, 1.0).powi(2)).sum();
        let quad = num / (n0 * n1).sqrt();
        assert!((quad - expected).abs() < 1e-10);

        let s = inner(&a, &b).unwrap();
        assert!((s.re - expected).abs() < 1e-10 && s.im.abs() < 1e-12);
        let o = overlap_measure(&a, &b).unwrap();
        assert!((o - expected).abs() < 1e-10);
    }

    #[test]
    fn overlap_measure_limits() {
        let a = packet(0.3, 1.0, 0.7);
        assert!((overlap_measure(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        let o = overlap_measure(&packet(-4.0, 0.0, 0.5), &packet(4.0, 0.0, 0.5)).unwrap();
        assert!(o < 1e-8);
    }

    #[test]
    fn mismatched_operands_rejected() {
        let other = Grid::new(-10.0, 10.0, 128).unwrap();
        let b = gaussian_packet(&other, &PacketParams::new(0.0, 0.0, 1.0)).unwrap();
        let a = packet(0.0, 0.0, 1.0);
        assert!(matches!(inner(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(overlap_measure(&a, &b), Err(Error::Dimension(_))));
        let spinful = a.with_spin([C::new(1.0, 0.0), C::new(0.0, 0.0)]).unwrap();
        assert!(matches!(inner(&a, &spinful), Err(Error::Dimension(_))));
    }

    #[test]
    fn superposition_mean_is_symmetric() {
        let l = packet(-3.0, 0.0, 0.5);
        let r = packet(3.0, 0.0, 0.5);
        let one = C::new(1.0, 0.0);
        let s = superpose(&[(one, &l), (one, &r)]).unwrap();
        assert!(moments(&s).mean_x.abs() < 1e-10);
    }

    #[test]
    fn localization_of_gaussian_matches_quantile() {
        let wf = packet(0.0, 0.0, 1.0);
        let li = localization_interval(&wf, 0.01).unwrap();
        // two-sided 99% normal quantile
        let expected = 2.0 * 2.5758293035489;
        assert!((li.length - expected).abs() <= 2.0 * grid().dx(), "{}", li.length);

        let half = localization_interval(&wf, 0.5).unwrap();
        assert!(half.center.abs() <= grid().dx(), "{:?}", half);
    }

    #[test]
    fn localization_of_bimodal_state_spans_both_lobes() {
        let one = C::new(1.0, 0.0);
        let l = packet(-5.0, 0.0, 0.5);
        let r = packet(5.0, 0.0, 0.5);
        let s = superpose(&[(one, &l), (one, &r)]).unwrap();
        assert!(localization_interval(&s, 0.01).unwrap().length > 8.0);
    }

    #[test]
    fn localization_rejects_bad_delta() {
        let wf = packet(0.0, 0.0, 1.0);
        assert!(localization_interval(&wf, 0.0).is_err());
        assert!(localization_interval(&wf, 1.0).is_err());
    }

    #[test]
    fn spin_tensor_layout() {
        let wf = packet(0.0, 0.0, 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let up = wf.with_spin([C::new(h, 0.0), C::new(-h, 0.0)]).unwrap();
        assert_eq!(up.dim(), 512);
        assert!((up.norm_sq() - 1.0).abs() < 1e-12);
        assert!((up.amplitudes()[128] + up.amplitudes()[256 + 128]).norm() < 1e-12);
        let d = up.density();
        for (a, b) in d.iter().zip(wf.density()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_instantiation() {
        let g = Grid::<f32>::new(-10.0, 10.0, 256).unwrap();
        let wf = gaussian_packet(&g, &PacketParams::new(0.0f32, 0.0, 1.0)).unwrap();
        let m = moments(&wf);
        assert!((m.var_x - 1.0).abs() < 1e-4);
    }
}
