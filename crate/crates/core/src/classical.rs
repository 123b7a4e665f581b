//! Symmetrized classical states: a configuration of n same-kind particles is
//! represented by all n! index permutations of one phase point. Evolution acts
//! on every slot with the same arithmetic, so permuting and evolving commute
//! bit for bit.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::dynamics::{leapfrog_step, PotentialSpec};
use crate::error::{Error, Result};
use crate::manybody::permutations;
use crate::scalar::Real;

pub const MAX_CLASSICAL_PARTIES: usize = 6;

/// One-particle state `(x, p)`, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneParticleState<T> {
    pub x: T,
    pub p: T,
}

impl<T: Real> OneParticleState<T> {
    pub fn new(x: T, p: T) -> Result<Self> {
        if !x.is_finite() || !p.is_finite() {
            return Err(Error::Config("phase-space coordinates must be finite".into()));
        }
        Ok(Self { x, p })
    }
}

// Coordinates are finite by construction, so the partial order is total.
impl<T: Real> Eq for OneParticleState<T> {}

impl<T: Real> PartialOrd for OneParticleState<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for OneParticleState<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.x
            .partial_cmp(&other.x)
            .and_then(|o| Some(o.then(self.p.partial_cmp(&other.p)?)))
            .expect("finite phase-space coordinates")
    }
}

/// Slot `i` holds the state attributed to index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint<T> {
    slots: Vec<OneParticleState<T>>,
}

impl<T: Real> Eq for PhasePoint<T> {}

impl<T: Real> PartialOrd for PhasePoint<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for PhasePoint<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.slots.cmp(&other.slots)
    }
}

impl<T: Real> PhasePoint<T> {
    pub fn new(slots: Vec<OneParticleState<T>>) -> Self {
        Self { slots }
    }

    pub fn from_pairs(pairs: &[(T, T)]) -> Result<Self> {
        pairs
            .iter()
            .map(|&(x, p)| OneParticleState::new(x, p))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn n(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[OneParticleState<T>] {
        &self.slots
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::new(perm.iter().map(|&k| self.slots[k]).collect())
    }

    /// The index-free content: the sorted multiset of slot states.
    pub fn occupied_states(&self) -> Vec<OneParticleState<T>> {
        let mut s = self.slots.clone();
        s.sort();
        s
    }

    pub fn evolve(&self, pot: &PotentialSpec<T>, dt: T, steps: usize) -> Self {
        let slots = self
            .slots
            .iter()
            .map(|s| {
                let (mut x, mut p) = (s.x, s.p);
                for _ in 0..steps {
                    (x, p) = leapfrog_step(pot, x, p, dt);
                }
                OneParticleState { x, p }
            })
            .collect();
        Self::new(slots)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble<T> {
    n: usize,
    points: BTreeSet<PhasePoint<T>>,
}

impl<T: Real> ClassicalEnsemble<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &BTreeSet<PhasePoint<T>> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every index permutation of every member is again a member.
    pub fn is_permutation_closed(&self) -> bool {
        let perms = permutations(self.n);
        self.points
            .iter()
            .all(|pt| perms.iter().all(|(perm, _)| self.points.contains(&pt.permuted(perm))))
    }
}

/// All index permutations of `seed`; coinciding slot states collapse.
pub fn permuted_ensemble<T: Real>(seed: &PhasePoint<T>) -> Result<ClassicalEnsemble<T>> {
    let n = seed.n();
    if n == 0 || n > MAX_CLASSICAL_PARTIES {
        return Err(Error::Config(format!(
            "ensemble of {n} particles; expected 1..={MAX_CLASSICAL_PARTIES}"
        )));
    }
    let points = permutations(n).iter().map(|(perm, _)| seed.permuted(perm)).collect();
    Ok(ClassicalEnsemble { n, points })
}

/// Integrates every member with the leapfrog scheme.
pub fn evolve_ensemble<T: Real>(
    ens: &ClassicalEnsemble<T>,
    pot: &PotentialSpec<T>,
    dt: T,
    steps: usize,
) -> ClassicalEnsemble<T> {
    ClassicalEnsemble {
        n: ens.n,
        points: ens.points.iter().map(|pt| pt.evolve(pot, dt, steps)).collect(),
    }
}

/// States found in slot `i` across the ensemble.
pub fn index_marginal<T: Real>(ens: &ClassicalEnsemble<T>, i: usize) -> Result<BTreeSet<OneParticleState<T>>> {
    if i >= ens.n {
        return Err(Error::IndexOutOfRange { index: i, len: ens.n });
    }
    Ok(ens.points.iter().map(|pt| pt.slots[i]).collect())
}

/// Multiset of one-particle states, read off the first member.
pub fn occupied_states<T: Real>(ens: &ClassicalEnsemble<T>) -> Vec<OneParticleState<T>> {
    ens.points
        .iter()
        .next()
        .map(PhasePoint::occupied_states)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed3() -> PhasePoint<f64> {
        PhasePoint::from_pairs(&[(-1.0, 0.5), (0.3, -0.2), (2.0, 1.0)]).unwrap()
    }

    #[test]
    fn ensemble_sizes() {
        let one = PhasePoint::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert_eq!(permuted_ensemble(&one).unwrap().len(), 1);
        assert_eq!(permuted_ensemble(&seed3()).unwrap().len(), 6);
        let twin = PhasePoint::from_pairs(&[(1.0, 2.0), (1.0, 2.0)]).unwrap();
        assert_eq!(permuted_ensemble(&twin).unwrap().len(), 1);
        let seven = PhasePoint::from_pairs(&[(0.0, 0.0); 7]).unwrap();
        assert!(permuted_ensemble(&seven).is_err());
        assert!(PhasePoint::from_pairs(&[(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn marginals_hold_every_state() {
        let ens = permuted_ensemble(&seed3()).unwrap();
        let all: BTreeSet<_> = seed3().slots().iter().copied().collect();
        for i in 0..3 {
            assert_eq!(index_marginal(&ens, i).unwrap(), all);
        }
        assert!(index_marginal(&ens, 3).is_err());
        assert!(ens.is_permutation_closed());
    }

    #[test]
    fn single_point_marginal_is_the_seed_slot() {
        let seed = seed3();
        let ens = ClassicalEnsemble {
            n: 3,
            points: [seed.clone()].into_iter().collect(),
        };
        for i in 0..3 {
            assert_eq!(index_marginal(&ens, i).unwrap().into_iter().collect::<Vec<_>>(), vec![seed.slots()[i]]);
        }
    }

    #[test]
    fn harmonic_period_returns() {
        let pot = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        let ens = permuted_ensemble(&seed3()).unwrap();
        let steps = 12_566;
        let dt = std::f64::consts::TAU / steps as f64;
        let back = evolve_ensemble(&ens, &pot, dt, steps);
        for (a, b) in occupied_states(&ens).iter().zip(occupied_states(&back)) {
            assert!((a.x - b.x).abs() < 1e-6 && (a.p - b.p).abs() < 1e-6);
        }
        assert!(back.is_permutation_closed());
    }

    #[test]
    fn free_motion_translates() {
        let pot = PotentialSpec::free(2.0).unwrap();
        let ens = permuted_ensemble(&seed3()).unwrap();
        let out = evolve_ensemble(&ens, &pot, 0.5, 4);
        for (a, b) in occupied_states(&ens).iter().zip(occupied_states(&out)) {
            assert!((b.x - (a.x + a.p / 2.0 * 2.0)).abs() < 1e-12);
            assert_eq!(a.p, b.p);
        }
    }

    #[test]
    fn evolution_commutes_with_permutation() {
        let pot = PotentialSpec::quartic(0.3, 1.0).unwrap();
        let seed = seed3();
        let perm = [2, 0, 1];
        let a = seed.permuted(&perm).evolve(&pot, 0.01, 500);
        let b = seed.evolve(&pot, 0.01, 500).permuted(&perm);
        assert_eq!(a, b);
        let ens = evolve_ensemble(&permuted_ensemble(&seed).unwrap(), &pot, 0.01, 500);
        assert_eq!(ens, permuted_ensemble(&seed.evolve(&pot, 0.01, 500)).unwrap());
        let occ = occupied_states(&ens);
        assert!(ens.points().iter().all(|pt| pt.occupied_states() == occ));
    }
}
