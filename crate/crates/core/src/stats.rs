//! Exchange statistics: a-priori occupation counting, joint detection
//! probabilities of two-party states in disjoint regions, and the
//! distinguishable-particle (Boltzmann) reference they reduce to.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{Interval, WaveFunction};
use crate::manybody::NPartyState;
use crate::scalar::{from_usize, Real};

pub const MAX_PARTICLES: usize = 6;
pub const MAX_MODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistics {
    FermiDirac,
    BoseEinstein,
    MaxwellBoltzmann,
}

/// Probability of every occupation vector `(n_1, ..., n_modes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationTable<T> {
    pub n_particles: usize,
    pub n_modes: usize,
    pub statistics: Statistics,
    pub entries: BTreeMap<Vec<usize>, T>,
}

impl<T: Real> OccupationTable<T> {
    /// Distribution of the occupation of one mode.
    pub fn marginal(&self, mode: usize) -> Result<Vec<T>> {
        if mode >= self.n_modes {
            return Err(Error::IndexOutOfRange {
                index: mode,
                len: self.n_modes,
            });
        }
        let mut out = vec![T::zero(); self.n_particles + 1];
        for (occ, p) in &self.entries {
            out[occ[mode]] += *p;
        }
        Ok(out)
    }

    pub fn total(&self) -> T {
        self.entries.values().fold(T::zero(), |s, p| s + *p)
    }
}

/// Every way of placing `n` indistinguishable units into `modes` ordered
/// slots, in lexicographic order.
fn compositions(n: usize, modes: usize) -> Vec<Vec<usize>> {
    if modes == 1 {
        return vec![vec![n]];
    }
    (0..=n)
        .rev()
        .flat_map(|first| {
            compositions(n - first, modes - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Uniform weight over allowed microstates for FD and BE; multinomial weight
/// over distinguishable assignments for MB.
pub fn occupation_distribution<T: Real>(
    n_particles: usize,
    n_modes: usize,
    statistics: Statistics,
) -> Result<OccupationTable<T>> {
    if n_particles > MAX_PARTICLES || n_modes > MAX_MODES || n_modes == 0 {
        return Err(Error::Config(format!(
            "occupation enumeration needs n_particles <= {MAX_PARTICLES} and 1 <= n_modes <= {MAX_MODES}"
        )));
    }
    if statistics == Statistics::FermiDirac && n_particles > n_modes {
        return Err(Error::Infeasible(format!(
            "{n_particles} fermions cannot occupy {n_modes} modes"
        )));
    }
    let states: Vec<Vec<usize>> = compositions(n_particles, n_modes)
        .into_iter()
        .filter(|occ| statistics != Statistics::FermiDirac || occ.iter().all(|&k| k <= 1))
        .collect();
    let weights: Vec<f64> = match statistics {
        Statistics::MaxwellBoltzmann => {
            let all = (n_modes as f64).powi(n_particles as i32);
            states
                .iter()
                .map(|occ| {
                    factorial(n_particles) / occ.iter().map(|&k| factorial(k)).product::<f64>() / all
                })
                .collect()
        }
        _ => vec![1.0 / states.len() as f64; states.len()],
    };
    Ok(OccupationTable {
        n_particles,
        n_modes,
        statistics,
        entries: states
            .into_iter()
            .zip(weights)
            .map(|(s, w)| (s, T::from_f64(w).expect("probability representable")))
            .collect(),
    })
}

/// Probability of every detector-count outcome. Keys hold one count per
/// region followed by the count outside all regions.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTable<T> {
    pub entries: BTreeMap<Vec<usize>, T>,
}

impl<T: Real> DetectionTable<T> {
    /// `"n1;n2;...;n_outside"`.
    pub fn label(counts: &[usize]) -> String {
        counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
    }

    pub fn get(&self, counts: &[usize]) -> T {
        self.entries.get(counts).copied().unwrap_or_else(T::zero)
    }

    pub fn total(&self) -> T {
        self.entries.values().fold(T::zero(), |s, p| s + *p)
    }

    /// Largest absolute difference over the union of outcomes.
    pub fn distance(&self, other: &Self) -> T {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .fold(T::zero(), |m, k| m.max((self.get(k) - other.get(k)).abs()))
    }
}

fn check_regions<T: Real>(regions: &[Interval<T>]) -> Result<()> {
    for (i, a) in regions.iter().enumerate() {
        for b in &regions[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::contract("disjoint-regions", "detector regions overlap"));
            }
        }
    }
    Ok(())
}

/// Region index of every grid point; points outside all regions get
/// `regions.len()`.
fn bins<T: Real>(grid: &crate::grid::Grid<T>, regions: &[Interval<T>]) -> Vec<usize> {
    grid.points()
        .into_iter()
        .map(|x| regions.iter().position(|r| r.contains(x)).unwrap_or(regions.len()))
        .collect()
}

fn tally<T: Real>(n_bins: usize, pair_mass: &[Vec<T>]) -> DetectionTable<T> {
    let mut entries = BTreeMap::new();
    for (b1, row) in pair_mass.iter().enumerate() {
        for (b2, p) in row.iter().enumerate() {
            let mut counts = vec![0; n_bins];
            counts[b1] += 1;
            counts[b2] += 1;
            *entries.entry(counts).or_insert_with(T::zero) += *p;
        }
    }
    DetectionTable { entries }
}

/// Joint count probabilities of a two-party state.
pub fn joint_detection<T: Real>(state: &NPartyState<T>, regions: &[Interval<T>]) -> Result<DetectionTable<T>> {
    if state.n_parties() != 2 {
        return Err(Error::Unsupported(format!(
            "joint detection for {} parties",
            state.n_parties()
        )));
    }
    check_regions(regions)?;
    let grid = state.grid();
    let n = grid.n_points();
    let d = state.dim();
    let bin = bins(grid, regions);
    let n_bins = regions.len() + 1;
    let mut mass = vec![vec![T::zero(); n_bins]; n_bins];
    let c = state.coefficients();
    for i in 0..d {
        for j in 0..d {
            mass[bin[i % n]][bin[j % n]] += c[i * d + j].norm_sqr();
        }
    }
    Ok(tally(n_bins, &mass))
}

/// The same table for distinguishable particles in `phi` and `psi`.
pub fn boltzmann_reference<T: Real>(
    phi: &WaveFunction<T>,
    psi: &WaveFunction<T>,
    regions: &[Interval<T>],
) -> Result<DetectionTable<T>> {
    check_regions(regions)?;
    if phi.grid() != psi.grid() {
        return Err(Error::Dimension("packets live on different grids".into()));
    }
    let bin = bins(phi.grid(), regions);
    let n_bins = regions.len() + 1;
    let masses = |wf: &WaveFunction<T>| {
        let mut q = vec![T::zero(); n_bins];
        for (b, r) in bin.iter().zip(wf.density()) {
            q[*b] += r;
        }
        let dx = wf.grid().dx();
        q.into_iter().map(|v| v * dx).collect::<Vec<T>>()
    };
    let (qa, qb) = (masses(phi), masses(psi));
    let pair: Vec<Vec<T>> = qa.iter().map(|a| qb.iter().map(|b| *a * *b).collect()).collect();
    Ok(tally(n_bins, &pair))
}

/// Binomial law `C(n, k) p^k (1-p)^(n-k)`.
pub fn binomial<T: Real>(n: usize, p: T) -> Vec<T> {
    (0..=n)
        .map(|k| {
            let c = factorial(n) / (factorial(k) * factorial(n - k));
            T::from_f64(c).expect("binomial coefficient representable")
                * p.powi(k as i32)
                * (T::one() - p).powi((n - k) as i32)
        })
        .collect()
}

/// `1 / n_modes`, the single-mode probability under MB counting.
pub fn uniform_mode_probability<T: Real>(n_modes: usize) -> T {
    T::one() / from_usize(n_modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_packet, Grid, PacketParams};
    use crate::manybody::{symmetrized_product, Symmetry};

    fn table(n: usize, m: usize, s: Statistics) -> OccupationTable<f64> {
        occupation_distribution(n, m, s).unwrap()
    }

    #[test]
    fn two_in_two() {
        let fd = table(2, 2, Statistics::FermiDirac);
        assert_eq!(fd.entries.len(), 1);
        assert_eq!(fd.entries[&vec![1, 1]], 1.0);
        let be = table(2, 2, Statistics::BoseEinstein);
        assert_eq!(be.entries.len(), 3);
        assert!(be.entries.values().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let mb = table(2, 2, Statistics::MaxwellBoltzmann);
        assert_eq!(mb.entries[&vec![2, 0]], 0.25);
        assert_eq!(mb.entries[&vec![1, 1]], 0.5);
        assert_eq!(mb.entries[&vec![0, 2]], 0.25);
    }

    #[test]
    fn limits_and_infeasibility() {
        assert!(matches!(
            occupation_distribution::<f64>(3, 2, Statistics::FermiDirac),
            Err(Error::Infeasible(_))
        ));
        assert!(occupation_distribution::<f64>(7, 2, Statistics::BoseEinstein).is_err());
        assert!(occupation_distribution::<f64>(2, 9, Statistics::BoseEinstein).is_err());
    }

    #[test]
    fn mb_marginals_are_binomial() {
        let t = table(5, 3, Statistics::MaxwellBoltzmann);
        assert!((t.total() - 1.0).abs() < 1e-12);
        let b = binomial(5, uniform_mode_probability::<f64>(3));
        for mode in 0..3 {
            for (x, y) in t.marginal(mode).unwrap().iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn grid() -> Grid<f64> {
        Grid::new(-12.0, 12.0, 256).unwrap()
    }

    fn packet(x0: f64, sigma: f64) -> WaveFunction<f64> {
        gaussian_packet(&grid(), &PacketParams::new(x0, 0.0, sigma)).unwrap()
    }

    #[test]
    fn disjoint_packets_are_counted_once_each() {
        let (a, b) = (packet(-4.0, 0.5), packet(4.0, 0.5));
        let regions = [Interval::new(-12.0, 0.0), Interval::new(0.0, 12.0)];
        for sym in [Symmetry::Bosonic, Symmetry::Fermionic] {
            let st = symmetrized_product(&[a.clone(), b.clone()], sym).unwrap();
            let t = joint_detection(&st, &regions).unwrap();
            assert!((t.get(&[1, 1, 0]) - 1.0).abs() < 1e-10);
            assert!((t.total() - 1.0).abs() < 1e-10);
        }
        let mb = boltzmann_reference(&a, &b, &regions).unwrap();
        assert!((mb.get(&[1, 1, 0]) - 1.0).abs() < 1e-12);
        let both = boltzmann_reference(&a, &b, &[Interval::new(-12.0, 12.0)]).unwrap();
        assert!((both.get(&[2, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_containment_follows_product_rule() {
        let (a, b) = (packet(-1.0, 1.0), packet(2.0, 1.0));
        let region = Interval::new(0.0, 12.0);
        let t = boltzmann_reference(&a, &b, &[region]).unwrap();
        let mass = |wf: &WaveFunction<f64>| {
            wf.density()
                .iter()
                .zip(region.indicator(&grid()))
                .map(|(r, i)| r * i)
                .sum::<f64>()
                * grid().dx()
        };
        let (qa, qb) = (mass(&a), mass(&b));
        assert!((t.get(&[2, 0]) - qa * qb).abs() < 1e-12);
        assert!((t.get(&[1, 1]) - (qa * (1.0 - qb) + qb * (1.0 - qa))).abs() < 1e-12);
        assert!((t.get(&[0, 2]) - (1.0 - qa) * (1.0 - qb)).abs() < 1e-12);
        assert_eq!(DetectionTable::<f64>::label(&[1, 0, 1]), "1;0;1");
    }

    #[test]
    fn overlapping_regions_are_rejected() {
        let st = symmetrized_product(&[packet(-4.0, 0.8), packet(4.0, 0.8)], Symmetry::Bosonic).unwrap();
        let regions = [Interval::new(-5.0, 1.0), Interval::new(0.0, 5.0)];
        assert!(matches!(
            joint_detection(&st, &regions),
            Err(Error::Contract { contract: "disjoint-regions", .. })
        ));
    }
}
