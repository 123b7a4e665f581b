//! Schmidt decompositions and the particle criterion: does a two-party state
//! equal a symmetrized product of spatially non-overlapping one-particle
//! states, and if so, is that decomposition unique?
//!
//! The search runs over the unitary rotations of the top two Schmidt vectors,
//!
//! ```text
//! u1 =  cos t e1 + e^{ i a} sin t e2
//! u2 = -e^{-i a} sin t e1 + cos t e2
//! ```
//!
//! on a uniform lattice in `t in [0, pi)`, `a in [0, 2 pi)`, followed by a
//! compass search on the overlap measure. `t -> t + pi/2` swaps the pair (up to
//! phases), so a localized solution shows up twice on the lattice; minima are
//! merged when they describe the same unordered pair of packets.

use crate::error::{Error, Result};
use crate::grid::{localization_interval, WaveFunction};
use crate::manybody::{dot, flush_tiny, kron, symmetrized_product, NPartyState, Symmetry};
use crate::scalar::{from_usize, lit, phase, to_f64, Real, C};

/// Schmidt coefficients at or below this are treated as zero.
pub const RANK_TOL: f64 = 1e-12;
/// Top coefficients closer than this count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// A candidate pair must reproduce its source to `1 - RECONSTRUCTION_TOL`.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;
/// Default overlap threshold for "non-overlapping".
pub const DEFAULT_OVERLAP_EPS: f64 = 1e-3;
/// Probability left outside the interval used by [`localization_score`].
pub const LOCALIZATION_DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtDecomposition<T> {
    /// Non-negative, descending.
    pub coefficients: Vec<T>,
    pub left: Vec<WaveFunction<T>>,
    pub right: Vec<WaveFunction<T>>,
}

impl<T: Real> SchmidtDecomposition<T> {
    /// `sum_k c_k left_k (x) right_k` in the orthonormal grid basis.
    pub fn reconstruct(&self) -> Vec<C<T>> {
        let mut out: Vec<C<T>> = Vec::new();
        for ((c, l), r) in self.coefficients.iter().zip(&self.left).zip(&self.right) {
            let term = kron(&[&l.unit_vector(), &r.unit_vector()]);
            if out.is_empty() {
                out = vec![C::new(T::zero(), T::zero()); term.len()];
            }
            for (o, t) in out.iter_mut().zip(term) {
                *o += t.scale(*c);
            }
        }
        out
    }

    pub fn is_degenerate(&self) -> bool {
        self.coefficients.len() >= 2
            && (self.coefficients[0] - self.coefficients[1]).abs() <= lit(DEGENERACY_TOL)
    }
}

pub fn schmidt<T: Real>(state: &NPartyState<T>) -> Result<SchmidtDecomposition<T>> {
    let m = flush_tiny(&state.coefficient_matrix()?);
    let svd = m.svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let grid = *state.grid();
    let spin = state.spin_dim();
    let mut dec = SchmidtDecomposition {
        coefficients: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
    };
    for k in order {
        let c = svd.singular_values[k];
        if c <= lit(RANK_TOL) {
            break;
        }
        let l: Vec<C<T>> = u.column(k).iter().copied().collect();
        let r: Vec<C<T>> = v_t.row(k).iter().copied().collect();
        dec.coefficients.push(c);
        dec.left.push(WaveFunction::from_unit_vector(grid, &l, spin)?);
        dec.right.push(WaveFunction::from_unit_vector(grid, &r, spin)?);
    }
    Ok(dec)
}

fn rotate_pair<T: Real>(e1: &[C<T>], e2: &[C<T>], theta: T, alpha: T) -> (Vec<C<T>>, Vec<C<T>>) {
    let (c, s) = (theta.cos(), theta.sin());
    let fwd = phase(alpha).scale(s);
    let back = phase(-alpha).scale(s);
    let u1 = e1.iter().zip(e2).map(|(a, b)| a.scale(c) + fwd * b).collect();
    let u2 = e1.iter().zip(e2).map(|(a, b)| -(back * a) + b.scale(c)).collect();
    (u1, u2)
}

/// Rotates the degenerate top pair: left vectors by `U`, right vectors by
/// `conj(U)`, which leaves the state unchanged.
pub fn rotate_degenerate<T: Real>(
    dec: &SchmidtDecomposition<T>,
    theta: T,
    phase_angle: T,
) -> Result<SchmidtDecomposition<T>> {
    if !dec.is_degenerate() {
        return Err(Error::contract(
            "degenerate-schmidt",
            "top two Schmidt coefficients differ",
        ));
    }
    let remake = |v: Vec<C<T>>, like: &WaveFunction<T>| {
        WaveFunction::from_unit_vector(*like.grid(), &v, like.spin_dim())
    };
    let (l1, l2) = rotate_pair(
        &dec.left[0].unit_vector(),
        &dec.left[1].unit_vector(),
        theta,
        phase_angle,
    );
    let (r1, r2) = rotate_pair(
        &dec.right[0].unit_vector(),
        &dec.right[1].unit_vector(),
        theta,
        -phase_angle,
    );
    let mut out = dec.clone();
    out.left[0] = remake(l1, &dec.left[0])?;
    out.left[1] = remake(l2, &dec.left[1])?;
    out.right[0] = remake(r1, &dec.right[0])?;
    out.right[1] = remake(r2, &dec.right[1])?;
    Ok(out)
}

/// Overlap measure of two unit vectors, spin summed per grid point.
fn pair_overlap<T: Real>(a: &[C<T>], b: &[C<T>], n_points: usize) -> T {
    let spin = a.len() / n_points;
    (0..n_points).fold(T::zero(), |acc, k| {
        let (mut ra, mut rb) = (T::zero(), T::zero());
        for s in 0..spin {
            ra += a[s * n_points + k].norm_sqr();
            rb += b[s * n_points + k].norm_sqr();
        }
        acc + (ra * rb).sqrt()
    })
}

/// Overlap of every lattice rotation of a two-vector basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapScan<T> {
    pub thetas: Vec<T>,
    pub phases: Vec<T>,
    /// Row-major: `values[i * phases.len() + j]` at `(thetas[i], phases[j])`.
    pub values: Vec<T>,
}

impl<T: Real> OverlapScan<T> {
    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[i * self.phases.len() + j]
    }

    /// Minimum over the phase for every theta.
    pub fn theta_curve(&self) -> Vec<T> {
        self.values
            .chunks(self.phases.len())
            .map(|row| row.iter().fold(row[0], |m, &v| m.min(v)))
            .collect()
    }

    pub fn minimum(&self) -> T {
        self.values.iter().fold(self.values[0], |m, &v| m.min(v))
    }
}

/// Refined local minimum of the rotation overlap.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RotationMinimum<T> {
    pub theta: T,
    pub phase: T,
    pub overlap: T,
    pub u1: Vec<C<T>>,
    pub u2: Vec<C<T>>,
}

/// Searches the rotations of `span{e1, e2}` for spatially separated pairs.
pub(crate) struct RotationSearch<'a, T> {
    e1: &'a [C<T>],
    e2: &'a [C<T>],
    n_points: usize,
}

impl<'a, T: Real> RotationSearch<'a, T> {
    pub(crate) fn new(e1: &'a [C<T>], e2: &'a [C<T>], n_points: usize) -> Self {
        Self { e1, e2, n_points }
    }

    fn overlap_at(&self, theta: T, alpha: T) -> T {
        let (u1, u2) = rotate_pair(self.e1, self.e2, theta, alpha);
        pair_overlap(&u1, &u2, self.n_points)
    }

    pub(crate) fn scan(&self, resolution: usize) -> OverlapScan<T> {
        let r = from_usize::<T>(resolution);
        let thetas: Vec<T> = (0..resolution).map(|i| T::pi() * from_usize::<T>(i) / r).collect();
        let phases: Vec<T> = (0..resolution)
            .map(|j| T::two_pi() * from_usize::<T>(j) / r)
            .collect();
        let values = thetas
            .iter()
            .flat_map(|&t| phases.iter().map(move |&a| (t, a)))
            .map(|(t, a)| self.overlap_at(t, a))
            .collect();
        OverlapScan {
            thetas,
            phases,
            values,
        }
    }

    /// Compass search with step halving from `(theta, alpha)`.
    pub(crate) fn refine(&self, theta: T, alpha: T, step: T) -> RotationMinimum<T> {
        const DIRS: [(f64, f64); 8] = [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
            (-1.0, -1.0),
        ];
        let (mut t, mut a) = (theta, alpha);
        let mut best = self.overlap_at(t, a);
        let mut h = step;
        let floor = lit::<T>(1e-12);
        let mut evals = 0usize;
        while h > floor && evals < 20_000 {
            let mut moved = false;
            for (dt, da) in DIRS {
                let (nt, na) = (t + h * lit(dt), a + h * lit(da));
                let v = self.overlap_at(nt, na);
                evals += 1;
                if v < best {
                    best = v;
                    t = nt;
                    a = na;
                    moved = true;
                    break;
                }
            }
            if !moved {
                h = h / lit(2.0);
            }
        }
        let (u1, u2) = rotate_pair(self.e1, self.e2, t, a);
        RotationMinimum {
            theta: t,
            phase: a,
            overlap: best,
            u1,
            u2,
        }
    }

    /// Refined minima whose overlap is at most `eps`, merged when they
    /// describe the same unordered pair up to phases. Sorted by overlap.
    pub(crate) fn sub_threshold_minima(&self, scan: &OverlapScan<T>, eps: T) -> Vec<RotationMinimum<T>> {
        let (nt, na) = (scan.thetas.len(), scan.phases.len());
        let step = T::pi() / from_usize(nt);
        let mut found: Vec<RotationMinimum<T>> = Vec::new();
        for i in 0..nt {
            for j in 0..na {
                let v = scan.value(i, j);
                let is_min = (-1i64..=1).all(|di| {
                    (-1i64..=1).all(|dj| {
                        let ii = (i as i64 + di).rem_euclid(nt as i64) as usize;
                        let jj = (j as i64 + dj).rem_euclid(na as i64) as usize;
                        v <= scan.value(ii, jj)
                    })
                });
                if !is_min {
                    continue;
                }
                let m = self.refine(scan.thetas[i], scan.phases[j], step);
                if m.overlap > eps {
                    continue;
                }
                if !found.iter().any(|f| same_pair(f, &m)) {
                    found.push(m);
                }
            }
        }
        found.sort_by(|a, b| a.overlap.partial_cmp(&b.overlap).expect("finite overlap"));
        found
    }
}

fn same_pair<T: Real>(a: &RotationMinimum<T>, b: &RotationMinimum<T>) -> bool {
    let close = |x: &[C<T>], y: &[C<T>]| dot(x, y).norm_sqr() > T::one() - lit(1e-6);
    (close(&a.u1, &b.u1) && close(&a.u2, &b.u2)) || (close(&a.u1, &b.u2) && close(&a.u2, &b.u1))
}

fn top_pair<T: Real>(state: &NPartyState<T>) -> Result<Option<(Vec<C<T>>, Vec<C<T>>)>> {
    let dec = schmidt(state)?;
    if dec.coefficients.len() < 2 {
        return Ok(None);
    }
    Ok(Some((dec.left[0].unit_vector(), dec.left[1].unit_vector())))
}

/// Overlap of every lattice rotation of the top two left Schmidt vectors.
/// `None` for rank-one states, which have no second vector to rotate.
pub fn overlap_scan<T: Real>(state: &NPartyState<T>, resolution: usize) -> Result<Option<OverlapScan<T>>> {
    check_resolution(resolution)?;
    Ok(top_pair(state)?.map(|(e1, e2)| {
        RotationSearch::new(&e1, &e2, state.grid().n_points()).scan(resolution)
    }))
}

/// Smallest overlap reachable by rotating the top Schmidt pair (lattice scan
/// plus refinement). Rank-one states report 1.
pub fn minimum_rotation_overlap<T: Real>(state: &NPartyState<T>, resolution: usize) -> Result<T> {
    check_resolution(resolution)?;
    let Some((e1, e2)) = top_pair(state)? else {
        return Ok(T::one());
    };
    let search = RotationSearch::new(&e1, &e2, state.grid().n_points());
    let scan = search.scan(resolution);
    let (mut bi, mut bj) = (0, 0);
    for i in 0..scan.thetas.len() {
        for j in 0..scan.phases.len() {
            if scan.value(i, j) < scan.value(bi, bj) {
                bi = i;
                bj = j;
            }
        }
    }
    let step = T::pi() / from_usize(resolution);
    Ok(search.refine(scan.thetas[bi], scan.phases[bj], step).overlap)
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < 16 {
        return Err(Error::Config(format!(
            "scan_resolution = {resolution} must be at least 16"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleDecomposition<T> {
    pub packets: Vec<WaveFunction<T>>,
    pub symmetry: Symmetry,
    /// Largest pairwise overlap measure among the packets.
    pub overlap: T,
    /// A single sub-threshold neighbourhood exists modulo swap and phases.
    pub unique: bool,
    /// `|<symmetrized product|source>|^2`.
    pub fidelity: T,
    /// Rotation coordinates of the chosen pair relative to the Schmidt basis.
    pub theta: T,
    pub phase: T,
}

/// Looks for a symmetrized product of non-overlapping one-particle states
/// equal to `state`. Returns `None` when no rotation of the top Schmidt pair
/// separates below `overlap_eps`, when the state has Schmidt rank one (a
/// doubly occupied packet), or when the separated pair fails to reproduce
/// the state.
pub fn find_particle_decomposition<T: Real>(
    state: &NPartyState<T>,
    overlap_eps: T,
    scan_resolution: usize,
) -> Result<Option<ParticleDecomposition<T>>> {
    check_resolution(scan_resolution)?;
    if !(overlap_eps > T::zero() && overlap_eps < T::one()) {
        return Err(Error::Config(format!(
            "overlap_eps = {} not in (0, 1)",
            to_f64(overlap_eps)
        )));
    }
    if state.n_parties() != 2 {
        return Err(Error::Unsupported(format!(
            "particle decomposition of {} parties",
            state.n_parties()
        )));
    }
    if state.symmetry() == Symmetry::None {
        return Err(Error::contract(
            "identical-particles",
            "particle criterion applies to symmetrized states",
        ));
    }
    let Some((e1, e2)) = top_pair(state)? else {
        return Ok(None);
    };
    let search = RotationSearch::new(&e1, &e2, state.grid().n_points());
    let scan = search.scan(scan_resolution);
    let minima = search.sub_threshold_minima(&scan, overlap_eps);
    let Some(best) = minima.first() else {
        return Ok(None);
    };
    let grid = *state.grid();
    let packets = vec![
        WaveFunction::from_unit_vector(grid, &best.u1, state.spin_dim())?,
        WaveFunction::from_unit_vector(grid, &best.u2, state.spin_dim())?,
    ];
    let rebuilt = symmetrized_product(&packets, state.symmetry())?;
    let fidelity = rebuilt.overlap(state)?.norm_sqr();
    if fidelity < T::one() - lit(RECONSTRUCTION_TOL) {
        return Ok(None);
    }
    Ok(Some(ParticleDecomposition {
        packets,
        symmetry: state.symmetry(),
        overlap: best.overlap,
        unique: minima.len() == 1,
        fidelity,
        theta: best.theta,
        phase: best.phase,
    }))
}

/// Width of the 99% localization interval in units of `narrowness`; at most 1
/// means "localized at this scale".
pub fn localization_score<T: Real>(wf: &WaveFunction<T>, narrowness: T) -> Result<T> {
    if !(narrowness > T::zero()) {
        return Err(Error::Config("narrowness must be positive".into()));
    }
    Ok(localization_interval(wf, lit(LOCALIZATION_DELTA))?.length / narrowness)
}
