use nalgebra as na;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmatrix::qmatrix::{AttributeProfile, ItemCombo};
use qmatrix::tmatrix::properties::{arrange_complete, is_block_upper_unit_triangular, leading_block, min_singular_value};
use qmatrix::tmatrix::{build_d, build_t, build_t_tilde, build_tc, build_tc_by_products, build_tcg, ComboOrder, DinaParams};
use qmatrix::QMatrix;

type Q64 = Ratio<i64>;

fn random_q(rng: &mut ChaCha8Rng, m: usize, k: usize) -> QMatrix {
    QMatrix::from_row_bits(k, (0..m).map(|_| rng.gen_range(1..(1u16 << k))).collect()).unwrap()
}

fn random_complete_q(rng: &mut ChaCha8Rng, m: usize, k: usize) -> QMatrix {
    let mut rows: Vec<u16> = (0..k).map(|j| 1 << j).collect();
    rows.extend((k..m).map(|_| rng.gen_range(1..(1u16 << k))));
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.gen_range(0..=i));
    }
    QMatrix::from_row_bits(k, rows).unwrap()
}

fn rational(rng: &mut ChaCha8Rng) -> Q64 {
    Q64::new(rng.gen_range(0..=64), 64)
}

#[test]
fn slip_construction_paths_agree_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (m, k) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
        let q = random_q(&mut rng, m, k);
        let c: Vec<Q64> = (0..m).map(|_| rational(&mut rng)).collect();
        let order = ComboOrder::saturated(m).unwrap();
        let scaled = build_tc(&q, &c, &order).unwrap();
        let products = build_tc_by_products(&q, &c, &order).unwrap();
        assert_eq!(scaled.entries, products.entries);
    }
}

#[test]
fn specialisation_chain_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (m, k) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
        let q = random_q(&mut rng, m, k);
        let order = ComboOrder::saturated(m).unwrap();
        let c: Vec<Q64> = (0..m).map(|_| rational(&mut rng)).collect();
        let no_guess = DinaParams::new(c.clone(), vec![Q64::from_integer(0); m]).unwrap();
        assert_eq!(build_tcg(&q, &no_guess, &order).unwrap().entries, build_tc(&q, &c, &order).unwrap().entries);
        let ones = vec![Q64::from_integer(1); m];
        assert_eq!(build_tc(&q, &ones, &order).unwrap().entries, build_t::<Q64>(&q, &order).unwrap().entries);
    }
}

#[test]
fn combo_rows_are_products_of_single_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let (m, k) = (rng.gen_range(2..=6), rng.gen_range(1..=3));
        let q = random_q(&mut rng, m, k);
        let order = ComboOrder::saturated(m).unwrap();
        let t = build_t::<f64>(&q, &order).unwrap();
        for _ in 0..10 {
            let combo = ItemCombo::new(rng.gen_range(1..(1u32 << m))).unwrap();
            let row = order.lookup(combo).unwrap();
            for col in 0..t.ncols() {
                let product: f64 = combo.items().map(|i| t.entries[(order.lookup(ItemCombo::single(i)).unwrap(), col)]).product();
                assert_eq!(t.entries[(row, col)], product);
            }
        }
    }
}

#[test]
fn slip_guess_entries_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let (m, k) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
        let q = random_q(&mut rng, m, k);
        let params = DinaParams::new((0..m).map(|_| rng.gen()).collect(), (0..m).map(|_| rng.gen()).collect()).unwrap();
        let t = build_tcg(&q, &params, &ComboOrder::saturated(m).unwrap()).unwrap();
        assert!(t.entries.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn d_identity_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..100 {
        let (m, k) = (rng.gen_range(1..=4), rng.gen_range(1..=3));
        let q = random_q(&mut rng, m, k);
        let params: DinaParams<f64> = DinaParams::new((0..m).map(|_| rng.gen()).collect(), (0..m).map(|_| rng.gen()).collect()).unwrap();
        let order = ComboOrder::saturated(m).unwrap();
        let d = build_d(&params.g, &order).unwrap();
        let lhs = &d.entries * build_t_tilde(&q, &params, &order).unwrap().entries;
        let tcg = build_tc(&q, &params.c_minus_g(), &order).unwrap().entries;
        let mut rhs = na::DMatrix::zeros(lhs.nrows(), lhs.ncols());
        rhs.columns_mut(1, tcg.ncols()).copy_from(&tcg);
        assert!((lhs - rhs).amax() <= 1e-12);
    }
}

#[test]
fn d_identity_exact_in_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..20 {
        let (m, k) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
        let q = random_q(&mut rng, m, k);
        let params = DinaParams::new(
            (0..m).map(|_| rational(&mut rng)).collect(),
            (0..m).map(|_| rational(&mut rng)).collect(),
        )
        .unwrap();
        let order = ComboOrder::saturated(m).unwrap();
        let d = build_d(&params.g, &order).unwrap();
        let lhs = &d.entries * build_t_tilde(&q, &params, &order).unwrap().entries;
        let tcg = build_tc(&q, &params.c_minus_g(), &order).unwrap().entries;
        for r in 0..lhs.nrows() {
            assert_eq!(lhs[(r, 0)], Q64::from_integer(0));
            for c in 0..tcg.ncols() {
                assert_eq!(lhs[(r, c + 1)], tcg[(r, c)]);
            }
        }
    }
}

#[test]
fn complete_matrices_have_unit_triangular_leading_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..50 {
        let k = rng.gen_range(1..=3);
        let m = rng.gen_range(k..=5);
        let q = arrange_complete(&random_complete_q(&mut rng, m, k)).unwrap();
        let t = build_t::<f64>(&q, &ComboOrder::saturated(m).unwrap()).unwrap();
        assert!(is_block_upper_unit_triangular(&t));
        let block = leading_block(&t);
        assert_eq!(block.nrows(), (1 << k) - 1);
        assert!((block.determinant() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn slip_matrix_has_full_column_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..50 {
        let k = rng.gen_range(1..=3);
        let m = rng.gen_range(k..=5);
        let q = random_complete_q(&mut rng, m, k);
        let c: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..=1.0)).collect();
        let t = build_tc(&q, &c, &ComboOrder::saturated(m).unwrap()).unwrap();
        assert!(min_singular_value(&t.entries) > 1e-10);
    }
}

#[test]
fn augmented_matrix_has_full_column_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let k = rng.gen_range(1..=3);
        let m = rng.gen_range(k..=5);
        let q = random_complete_q(&mut rng, m, k);
        let (c, g): (Vec<f64>, Vec<f64>) = (0..m)
            .map(|_| loop {
                let (c, g) = (rng.gen::<f64>(), rng.gen::<f64>());
                if (c - g).abs() >= 0.05 {
                    break (c, g);
                }
            })
            .unzip();
        let t = build_t_tilde(&q, &DinaParams::new(c, g).unwrap(), &ComboOrder::saturated(m).unwrap()).unwrap();
        assert!(min_singular_value(&t.entries) > 1e-10);
    }
}

fn q_strategy() -> impl Strategy<Value = QMatrix> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(m, k)| {
        prop::collection::vec(1u16..(1 << k), m).prop_map(move |rows| QMatrix::from_row_bits(k, rows).unwrap())
    })
}

proptest! {
    #[test]
    fn capability_is_monotone(q in q_strategy(), a in any::<u16>(), extra in any::<u16>()) {
        let mask = (1u16 << q.k()) - 1;
        let small = AttributeProfile::from_bits(a & mask);
        let large = AttributeProfile::from_bits((a | extra) & mask);
        for i in 0..q.m() {
            if q.capability(small, i).unwrap() {
                prop_assert!(q.capability(large, i).unwrap());
            }
        }
    }

    #[test]
    fn equivalence_is_an_equivalence_relation(q in q_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..q.k()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let p = q.permute_columns(&perm).unwrap();
        let pp = p.permute_columns(&perm).unwrap();
        prop_assert!(q.equivalent(&q).unwrap());
        prop_assert!(q.equivalent(&p).unwrap() && p.equivalent(&q).unwrap());
        prop_assert!(p.equivalent(&pp).unwrap() && q.equivalent(&pp).unwrap());
        let other = random_q(&mut rng, q.m(), q.k());
        prop_assert_eq!(q.equivalent(&other).unwrap(), p.equivalent(&other).unwrap());
        prop_assert_eq!(q.canonicalize(), p.canonicalize());
    }

    #[test]
    fn text_round_trip(q in q_strategy()) {
        prop_assert_eq!(q.to_text().parse::<QMatrix>().unwrap(), q);
    }
}
