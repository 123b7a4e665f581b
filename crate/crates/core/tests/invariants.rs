use emergence::classical::{evolve_ensemble, index_marginal, occupied_states, permuted_ensemble, PhasePoint};
use emergence::decompose::{
    find_particle_decomposition, minimum_rotation_overlap, rotate_degenerate, schmidt,
};
use emergence::dynamics::{
    energy, evolve_open, evolve_unitary, OpenSystemParams, PositionDensityMatrix, PotentialSpec,
};
use emergence::grid::{
    gaussian_packet, localization_interval, overlap_measure, Grid, PacketParams, WaveFunction,
};
use emergence::manybody::{
    expectation, partial_trace, reduced_state_spread, symmetrized_product, LocalOp, NPartyState,
    Observable, Symmetry,
};
use emergence::stats::{
    binomial, boltzmann_reference, joint_detection, occupation_distribution, Statistics,
};
use emergence::{Interval, C};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn small_grid() -> Grid<f64> {
    Grid::new(-4.0, 4.0, 8).unwrap()
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C<f64>>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| C::new(re, im)).collect())
}

fn symmetry() -> impl Strategy<Value = Symmetry> {
    prop_oneof![Just(Symmetry::Bosonic), Just(Symmetry::Fermionic)]
}

fn packet_on(grid: &Grid<f64>, x0: f64, p0: f64, sigma: f64) -> WaveFunction<f64> {
    gaussian_packet(grid, &PacketParams::new(x0, p0, sigma)).unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn gaussian_packets_are_normalized(x0 in -3.0f64..3.0, p0 in -2.0f64..2.0, sigma in 0.5f64..1.5) {
        let g = Grid::new(-12.0, 12.0, 256).unwrap();
        let wf = packet_on(&g, x0, p0, sigma);
        prop_assert!((wf.norm_sq() - 1.0).abs() < 1e-10);
        let li = localization_interval(&wf, 0.01).unwrap();
        prop_assert!(li.length > 0.0 && li.length <= g.length());
    }

    #[test]
    fn overlap_measure_is_symmetric_and_bounded(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Grid::new(-12.0, 12.0, 128).unwrap();
        let (f, h) = (packet_on(&g, a, 0.0, 1.0), packet_on(&g, b, 0.3, 0.8));
        let ab = overlap_measure(&f, &h).unwrap();
        let ba = overlap_measure(&h, &f).unwrap();
        prop_assert!((ab - ba).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((overlap_measure(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_states_agree_for_two_parties(t in complex_vec(64), sym in symmetry()) {
        let st = NPartyState::symmetrize(small_grid(), 1, 2, &t, sym);
        prop_assume!(st.is_ok());
        let st = st.unwrap();
        prop_assert!(reduced_state_spread(&st).unwrap() <= 1e-10);
        let r = partial_trace(&st, 0).unwrap();
        prop_assert!((r.trace() - 1.0).abs() < 1e-10);
        prop_assert!(r.eigenvalues()[0] > -1e-10);
    }

    #[test]
    fn reduced_states_agree_for_three_parties(t in complex_vec(512), sym in symmetry()) {
        let st = NPartyState::symmetrize(small_grid(), 1, 3, &t, sym);
        prop_assume!(st.is_ok());
        prop_assert!(reduced_state_spread(&st.unwrap()).unwrap() <= 1e-10);
    }

    #[test]
    fn symmetric_observables_have_real_expectations(t in complex_vec(64), w in prop::collection::vec(-2.0f64..2.0, 8), sym in symmetry()) {
        let st = NPartyState::symmetrize(small_grid(), 1, 2, &t, sym);
        prop_assume!(st.is_ok());
        let op = LocalOp::diagonal(w);
        let obs = Observable::symmetrized(vec![op, LocalOp::identity(8)]).unwrap();
        prop_assert!(expectation(&st.unwrap(), &obs).is_ok());
    }

    #[test]
    fn schmidt_decompositions_reconstruct(t in complex_vec(64)) {
        let st = NPartyState::symmetrize(small_grid(), 1, 2, &t, Symmetry::None).unwrap();
        let dec = schmidt(&st).unwrap();
        let total: f64 = dec.coefficients.iter().map(|c| c * c).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(dec.coefficients.windows(2).all(|w| w[0] >= w[1]));
        let rec = dec.reconstruct();
        let f: C<f64> = rec.iter().zip(st.coefficients()).map(|(a, b)| a.conj() * b).sum();
        prop_assert!(f.norm_sqr() >= 1.0 - 1e-9);
    }

    #[test]
    fn degenerate_rotations_keep_the_state(theta in 0.0f64..std::f64::consts::PI, phase in 0.0f64..std::f64::consts::TAU) {
        let g = Grid::new(-10.0, 10.0, 128).unwrap();
        let st = symmetrized_product(&[packet_on(&g, -4.0, 0.0, 0.7), packet_on(&g, 4.0, 0.3, 0.7)], Symmetry::Fermionic).unwrap();
        let dec = schmidt(&st).unwrap();
        let rot = rotate_degenerate(&dec, theta, phase).unwrap();
        let rec = rot.reconstruct();
        let f: C<f64> = rec.iter().zip(st.coefficients()).map(|(a, b)| a.conj() * b).sum();
        prop_assert!(f.norm_sqr() >= 1.0 - 1e-9);
    }

    #[test]
    fn classical_evolution_commutes_with_permutation(
        pairs in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 1..5),
        lambda in 0.0f64..0.5,
        shift in 0usize..24,
    ) {
        let seed = PhasePoint::from_pairs(&pairs).unwrap();
        let n = seed.n();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let pot = PotentialSpec::quartic(lambda, 1.0).unwrap();
        let a = seed.permuted(&perm).evolve(&pot, 0.01, 50);
        let b = seed.evolve(&pot, 0.01, 50).permuted(&perm);
        prop_assert_eq!(a, b);
        let ens = permuted_ensemble(&seed).unwrap();
        let fact: usize = (1..=n).product();
        prop_assert_eq!(fact % ens.len(), 0);
        let out = evolve_ensemble(&ens, &pot, 0.01, 50);
        prop_assert!(out.is_permutation_closed());
        let occ = occupied_states(&out);
        prop_assert!(out.points().iter().all(|p| p.occupied_states() == occ));
        let first = index_marginal(&out, 0).unwrap();
        for i in 1..n {
            prop_assert_eq!(&index_marginal(&out, i).unwrap(), &first);
        }
    }

    #[test]
    fn occupation_tables_are_distributions(n in 0usize..=6, modes in 1usize..=8) {
        for s in [Statistics::BoseEinstein, Statistics::MaxwellBoltzmann, Statistics::FermiDirac] {
            match occupation_distribution::<f64>(n, modes, s) {
                Ok(t) => {
                    prop_assert!((t.total() - 1.0).abs() < 1e-12);
                    if s == Statistics::FermiDirac {
                        prop_assert!(t.entries.keys().all(|o| o.iter().all(|&k| k <= 1)));
                    }
                    if s == Statistics::MaxwellBoltzmann {
                        let b = binomial(n, 1.0 / modes as f64);
                        for (x, y) in t.marginal(0).unwrap().iter().zip(&b) {
                            prop_assert!((x - y).abs() < 1e-12);
                        }
                    }
                }
                Err(_) => prop_assert!(s == Statistics::FermiDirac && n > modes),
            }
        }
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn unitary_runs_conserve_norm_and_energy(x0 in -2.0f64..2.0, p0 in -1.0f64..1.0, sigma in 0.6f64..1.2, omega in 0.3f64..1.0) {
        let g = Grid::new(-16.0, 16.0, 256).unwrap();
        let wf = packet_on(&g, x0, p0, sigma);
        let pot = PotentialSpec::harmonic(omega, 1.0).unwrap();
        let e0 = energy(&wf, &pot);
        let tr = evolve_unitary(&wf, &pot, 0.001, 2000, 250).unwrap();
        for s in tr.snapshots.as_ref().unwrap() {
            prop_assert!((s.norm_sq() - 1.0).abs() < 1e-8);
            prop_assert!((energy(s, &pot) - e0).abs() < 1e-6);
        }
        prop_assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn free_spreading_follows_closed_form(sigma in 0.7f64..1.5, mass in 0.5f64..2.0) {
        let g = Grid::new(-25.6, 25.6, 512).unwrap();
        let wf = packet_on(&g, 0.0, 0.0, sigma);
        let pot = PotentialSpec::free(mass).unwrap();
        let tr = evolve_unitary(&wf, &pot, 0.01, 400, 40).unwrap();
        for (t, v) in tr.times.iter().zip(&tr.var_x) {
            let exact = sigma * sigma + (t / (2.0 * mass * sigma)).powi(2);
            prop_assert!((v / exact - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn open_runs_keep_trace_hermiticity_and_lose_purity(d in 1.0f64..4.0, rate in 0.05f64..1.0) {
        let g = Grid::new(-8.0, 8.0, 64).unwrap();
        let one = C::new(1.0, 0.0);
        let (a, b) = (packet_on(&g, -d / 2.0, 0.0, 1.0), packet_on(&g, d / 2.0, 0.0, 1.0));
        let cat = emergence::grid::superpose(&[(one, &a), (one, &b)]).unwrap();
        let rho = PositionDensityMatrix::pure(&cat).unwrap();
        let pot = PotentialSpec::harmonic(0.5, 1.0).unwrap();
        let params = OpenSystemParams::new(rate, 0.0).unwrap();
        let run = evolve_open(&rho, &pot, &params, 0.01, 30, 1).unwrap();
        for w in run.windows(2) {
            prop_assert!((w[1].1.trace() - 1.0).abs() < 1e-6);
            prop_assert!(w[1].1.hermiticity_residual() < 1e-8);
            prop_assert!(w[1].1.purity() <= w[0].1.purity() + 1e-6);
        }
    }
}

#[test]
fn hardness_grows_as_packets_approach() {
    let g = Grid::new(-10.0, 10.0, 128).unwrap();
    let mut last = -1.0;
    for half in [4.0, 3.0, 2.0, 1.5, 1.0, 0.5] {
        let st = symmetrized_product(
            &[packet_on(&g, -half, 0.0, 0.8), packet_on(&g, half, 0.0, 0.8)],
            Symmetry::Bosonic,
        )
        .unwrap();
        let m = minimum_rotation_overlap(&st, 32).unwrap();
        assert!(m > last, "separation {}: {m} after {last}", 2.0 * half);
        last = m;
    }
}

#[test]
fn particle_decompositions_reconstruct_their_source() {
    let g = Grid::new(-10.0, 10.0, 128).unwrap();
    for sym in [Symmetry::Bosonic, Symmetry::Fermionic] {
        let st = symmetrized_product(
            &[packet_on(&g, -4.0, 0.5, 0.7), packet_on(&g, 3.5, -0.2, 0.7)],
            sym,
        )
        .unwrap();
        let pd = find_particle_decomposition(&st, 1e-3, 32).unwrap().expect("decomposition");
        assert!(pd.fidelity >= 1.0 - 1e-9);
        let ov = overlap_measure(&pd.packets[0], &pd.packets[1]).unwrap();
        assert!((ov - pd.overlap).abs() < 1e-12);
        assert!(pd.unique);
    }
}

#[test]
fn detection_reduces_to_boltzmann_with_separation() {
    let g = Grid::new(-12.0, 12.0, 256).unwrap();
    let regions = [Interval::new(-12.0, 0.0), Interval::new(0.0, 12.0)];
    for sym in [Symmetry::Bosonic, Symmetry::Fermionic] {
        let mut last = f64::INFINITY;
        for half in [0.5, 1.0, 1.5, 2.0, 3.0, 4.5] {
            let (a, b) = (packet_on(&g, -half, 0.0, 0.6), packet_on(&g, half, 0.0, 0.6));
            let st = symmetrized_product(&[a.clone(), b.clone()], sym).unwrap();
            let q = joint_detection(&st, &regions).unwrap();
            let c = boltzmann_reference(&a, &b, &regions).unwrap();
            assert!((q.total() - 1.0).abs() < 1e-10);
            assert!(q.entries.values().all(|p| *p >= -1e-12));
            let dist = q.distance(&c);
            assert!(dist < last, "{sym:?} at {half}: {dist} vs {last}");
            last = dist;
        }
    }
}
