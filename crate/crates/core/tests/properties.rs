use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use otfs_core::analysis::{difference_spectrum, multi_index_sum};
use otfs_core::channel::{DdChannel, TapIndex};
use otfs_core::dd::{build_channel_matrix, build_symbol_matrix};
use otfs_core::detect::Alphabet;
use otfs_core::multiant::{build_permutation, select_by_metrics};
use otfs_core::sim::wilson_interval;
use otfs_core::transform::{isfft, sfft};
use otfs_core::DdGrid;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Grid plus a data vector of matching length.
fn grid_and_data() -> impl Strategy<Value = (DdGrid, Vec<Complex64>)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(m, n)| {
        (
            Just(DdGrid::with_default_spacing(m, n).unwrap()),
            prop::collection::vec(complex(), m * n),
        )
    })
}

/// Grid, distinct taps with gains, and a data vector.
fn channel_case() -> impl Strategy<Value = (DdGrid, Vec<(TapIndex, Complex64)>, Vec<Complex64>)> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(m, n)| {
        let bins: Vec<TapIndex> = (0..m as i64)
            .flat_map(|a| (0..n as i64).map(move |b| TapIndex::new(a, b)))
            .collect();
        let max_p = bins.len().min(4);
        (
            Just(DdGrid::with_default_spacing(m, n).unwrap()),
            prop::sample::subsequence(bins, 1..=max_p)
                .prop_flat_map(|taps| {
                    let p = taps.len();
                    (Just(taps), prop::collection::vec(complex(), p))
                })
                .prop_map(|(taps, gains)| taps.into_iter().zip(gains).collect()),
            prop::collection::vec(complex(), m * n),
        )
    })
}

fn max_abs<'a>(it: impl Iterator<Item = &'a Complex64>) -> f64 {
    it.map(|v| v.norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn transforms_invert_and_preserve_energy((g, data) in grid_and_data()) {
        let dd = DMatrix::from_vec(g.n(), g.m(), data);
        let tf = isfft(&g, &dd).unwrap();
        let back = sfft(&g, &tf).unwrap();
        prop_assert!(max_abs((back - &dd).iter()) < 1e-12);
        prop_assert!((tf.norm_squared() - dd.norm_squared()).abs() < 1e-10 * (1.0 + dd.norm_squared()));
    }

    #[test]
    fn vectorize_round_trips((g, data) in grid_and_data()) {
        let x = DVector::from_vec(data);
        let back = g.vectorize(&g.devectorize(&x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn channel_and_symbol_forms_agree((g, taps, data) in channel_case()) {
        let (bins, gains): (Vec<TapIndex>, Vec<Complex64>) = taps.into_iter().unzip();
        let ch = DdChannel::from_taps(&gains, &bins, &g).unwrap();
        let x = DVector::from_vec(data);
        let y1 = build_channel_matrix(&ch, &g).unwrap().dense() * &x;
        let h = DVector::from_vec(ch.effective_gains());
        let y2 = build_symbol_matrix(&x, &ch, &g).unwrap().matrix().transpose() * h;
        prop_assert!(max_abs((y1 - y2).iter()) < 1e-12);
    }

    #[test]
    fn permutation_turns_conjugate_into_adjoint((g, taps, _x) in channel_case()) {
        let (bins, gains): (Vec<TapIndex>, Vec<Complex64>) = taps.into_iter().unzip();
        let ch = DdChannel::from_taps(&gains, &bins, &g).unwrap();
        let h = build_channel_matrix(&ch, &g).unwrap().into_dense();
        let p = build_permutation(&g).matrix();
        let lhs = &p * h.conjugate() * &p;
        prop_assert!(max_abs((lhs - h.adjoint()).iter()) < 1e-12);
        prop_assert_eq!(&p * &p, DMatrix::identity(g.len(), g.len()));
    }

    #[test]
    fn channel_energy_equals_tap_power((g, taps, _x) in channel_case()) {
        let (bins, gains): (Vec<TapIndex>, Vec<Complex64>) = taps.into_iter().unzip();
        let ch = DdChannel::from_taps(&gains, &bins, &g).unwrap();
        let h = build_channel_matrix(&ch, &g).unwrap();
        let power: f64 = gains.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((h.frobenius_sq() - g.len() as f64 * power).abs() < 1e-9 * (1.0 + power));
    }

    #[test]
    fn selection_keeps_the_largest(metrics in prop::collection::vec(0.0..10.0f64, 1..8), pick in 1usize..8) {
        let n_s = pick.min(metrics.len());
        let sel = select_by_metrics(&metrics, n_s).unwrap();
        prop_assert_eq!(sel.selected.len(), n_s);
        prop_assert!(sel.selected.windows(2).all(|w| w[0] < w[1]));
        let worst_kept = sel.selected.iter().map(|&i| metrics[i]).fold(f64::INFINITY, f64::min);
        for (i, &m) in metrics.iter().enumerate() {
            if !sel.selected.contains(&i) {
                prop_assert!(m <= worst_kept);
            }
        }
    }

    #[test]
    fn bits_round_trip(bits in prop::collection::vec(0u8..2, 0..64), qam in any::<bool>()) {
        let a = if qam { Alphabet::qam16() } else { Alphabet::bpsk() };
        let whole = bits.len() - bits.len() % a.bits_per_symbol();
        let bits = &bits[..whole];
        let idx = a.bits_to_indices(bits).unwrap();
        prop_assert_eq!(a.indices_to_bits(&idx), bits.to_vec());
        let syms: Vec<Complex64> = idx.iter().map(|&i| a.points()[i]).collect();
        let back: Vec<usize> = syms.iter().map(|&s| a.slice(s)).collect();
        prop_assert_eq!(back, idx);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1u64..1_000_000, frac in 0.0..1.0f64) {
        let errors = (trials as f64 * frac) as u64;
        let (lo, hi) = wilson_interval(errors, trials);
        let p = errors as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn multi_index_sum_matches_enumeration(x in prop::collection::vec(0.1..3.0f64, 1..4), n in 0usize..5) {
        // every sequence (i_1..i_n), weighted by prod m_j! x_j^m_j
        let k = x.len();
        let mut total = 0.0;
        for code in 0..k.pow(n as u32) {
            let mut mult = vec![0usize; k];
            let mut c = code;
            for _ in 0..n {
                mult[c % k] += 1;
                c /= k;
            }
            total += mult
                .iter()
                .zip(&x)
                .map(|(&m, &v)| (1..=m).map(|i| i as f64).product::<f64>() * v.powi(m as i32))
                .product::<f64>();
        }
        let got = multi_index_sum(&x, n);
        prop_assert!((got - total).abs() <= 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn difference_eigenvalues_sum_to_energy(entries in prop::collection::vec(complex(), 12)) {
        let d = DMatrix::from_vec(3, 4, entries);
        let s = difference_spectrum(&d);
        prop_assert!(s.rank <= 3);
        let trace: f64 = s.eigenvalues.iter().sum();
        prop_assert!((trace - d.norm_squared()).abs() < 1e-9 * (1.0 + d.norm_squared()));
    }
}
