use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hypwin::adversaries::{sample_cube, RandomBob};
use hypwin::conformal::{moran_dimension, Ifs1d};
use hypwin::dynamics::{MapSequence, MapSpec};
use hypwin::experiment::{run_experiment, ExperimentSpec};
use hypwin::game::{run, GameConfig, PassAlice};
use hypwin::geometry::{cube_inside, Cube};
use hypwin::strategies::{blockade, constants_b, delta_b, epsilon, AvoidPlan};
use hypwin::targets::TargetSequence;
use hypwin::{NumericMode, Scalar};

fn q(n: i64, d: i64) -> Scalar {
    Scalar::ratio(n, d)
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn build(spec: &str) -> MapSequence {
    serde_json::from_str::<MapSpec>(spec).unwrap().build(NumericMode::Rational).unwrap()
}

fn affine_maps() -> impl Strategy<Value = &'static str> {
    prop_oneof![
        Just(r#"{"kind":"times","m":2}"#),
        Just(r#"{"kind":"times","m":3}"#),
        Just(r#"{"kind":"beta","beta":"1.5"}"#),
        Just(r#"{"kind":"beta","beta":"2.5"}"#),
        Just(r#"{"kind":"qcantor","q":[2,3]}"#),
    ]
}

/// A nonempty cylinder word of the given length, following `picks` through the alphabet.
fn valid_word(seq: &MapSequence, start: usize, picks: &[usize]) -> Vec<i64> {
    let mut chain = seq.root(start);
    for &p in picks {
        let time = chain.start + chain.depth();
        let syms = seq.at(time).symbols_meeting(&chain.img.0, &chain.img.1).unwrap().list(40);
        let s = syms[p % syms.len()];
        chain = chain.extend(seq, s).unwrap().unwrap();
    }
    chain.word
}

/// Horizontal distance from the hyperplane x_axis = y to the cube.
fn plane_distance(cube: &Cube, axis: usize, y: &Scalar) -> Scalar {
    let below = &cube.lo(axis) - y;
    let above = y - &cube.hi(axis);
    below.max(&above).max(&Scalar::zero())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn cylinders_nest(map in affine_maps(), picks in prop::collection::vec(0usize..8, 1..7), cut in 0usize..7) {
        let seq = build(map);
        let word = valid_word(&seq, 1, &picks);
        let k = cut.min(word.len());
        let outer = seq.cylinder(1, &word[..k]).unwrap().interval.unwrap();
        let inner = seq.cylinder(1, &word).unwrap().interval.unwrap();
        prop_assert!(outer.lo.le(&inner.lo).unwrap() && inner.hi.le(&outer.hi).unwrap());
        if k == 0 {
            prop_assert_eq!((outer.lo, outer.hi), (Scalar::zero(), Scalar::one()));
        }
    }

    #[test]
    fn affine_derivative_is_exact_product(map in affine_maps(), picks in prop::collection::vec(0usize..8, 1..6), t in 1i64..63) {
        let seq = build(map);
        let word = valid_word(&seq, 1, &picks);
        let iv = seq.cylinder(1, &word).unwrap().interval.unwrap();
        let x = &iv.lo + &(&iv.length() * &q(t, 64));
        let d = seq.compose_derivative(1, word.len(), &x).unwrap();
        // Slopes along the itinerary, read off the branches directly.
        let mut y = x.clone();
        let mut prod = Scalar::one();
        for j in 0..word.len() {
            let b = seq.at(1 + j).branch(word[j], 1 + j).unwrap();
            prod = &prod * &b.derivative(&y);
            y = b.apply(&y);
        }
        prop_assert_eq!(&d, &prod);
        prop_assert!(d.is_exact() && seq.compose_apply(1, word.len(), &x).unwrap().is_exact());
    }

    #[test]
    fn gauss_cylinders_are_roughly_multiplicative(
        u in prop::collection::vec(1i64..30, 1..4),
        v in prop::collection::vec(1i64..30, 1..4),
    ) {
        let seq = build(r#"{"kind":"gauss"}"#);
        let c2 = seq.distortion_bound().unwrap();
        let len = |start: usize, w: &[i64]| seq.cylinder(start, w).unwrap().interval.unwrap().length();
        let mut uv = u.clone();
        uv.extend(&v);
        let ratio = &len(1, &uv) / &(&len(1, &u) * &len(1 + u.len(), &v));
        prop_assert!(ratio.le(&c2.powi(3)).unwrap());
        prop_assert!(ratio.ge(&c2.powi(-3)).unwrap());
    }

    #[test]
    fn gauss_derivative_matches_finite_difference(u in prop::collection::vec(1i64..12, 1..4), t in 1i64..15) {
        let seq = build(r#"{"kind":"gauss"}"#);
        let iv = seq.cylinder(1, &u).unwrap().interval.unwrap();
        let x = &iv.lo + &(&iv.length() * &q(t, 16));
        let h = &iv.length() * &q(1, 1_000_000_000);
        let n = u.len();
        let fd = &(&seq.compose_apply(1, n, &(&x + &h)).unwrap() - &seq.compose_apply(1, n, &(&x - &h)).unwrap())
            / &(&Scalar::from(2) * &h);
        let d = seq.compose_derivative(1, n, &x).unwrap();
        let rel = (&(&fd - &d) / &d).abs();
        prop_assert!(rel.le(&q(1, 1_000_000)).unwrap());
    }

    #[test]
    fn exact_targets_pass_their_audit(seed in 0u64..1000, y in 0i64..16) {
        for t in [TargetSequence::identity(), TargetSequence::constant(vec![q(y, 16)])] {
            let audit = t.lipschitz_audit(2, 50, seed).unwrap();
            prop_assert!(audit.violation.is_none());
            prop_assert!(audit.max_ratio <= t.lipschitz.to_f64());
        }
    }

    #[test]
    fn random_bob_games_nest_and_shrink(seed in 0u64..10_000, g in 1i64..10, dim in 1usize..3) {
        let gamma = q(g, 32);
        let lambda = gamma.max(&q(1, 4));
        let config = GameConfig::new(gamma.clone(), dim, NumericMode::Rational, 25).unwrap();
        let mut bob = RandomBob::new(&gamma, &lambda, seed).unwrap();
        let trace = run(&config, &mut PassAlice, &mut bob, Cube::unit(dim)).unwrap();
        prop_assert!(trace.abort.is_none());
        trace.check_legality().unwrap();
        let radii = trace.radii();
        for w in radii.windows(2) {
            prop_assert!(w[1].ge(&(&gamma * &w[0])).unwrap());
            prop_assert!(w[1].lt(&w[0]).unwrap());
        }
        for i in 1..=trace.rounds.len() {
            prop_assert!(cube_inside(trace.cube(i + 1), trace.cube(i)).unwrap());
            prop_assert!(trace.cube(i).contains_point(&trace.final_center).unwrap());
        }
    }

    #[test]
    fn blockade_keeps_enough_planes_far(
        g in prop::sample::select(vec![(1i64, 20i64), (1, 10), (1, 5), (3, 10)]),
        raw in prop::collection::vec(0i64..1024, 1..21),
        seed in 0u64..1000,
        dim in 1usize..3,
    ) {
        let gamma = q(g.0, g.1);
        let cube = Cube::new(vec![q(1, 2); dim], q(1, 4)).unwrap();
        let axis = dim - 1;
        // Points spread over the blockade window [1/4 − γ/4, 3/4 + γ/4] and a little beyond.
        let ys: Vec<Scalar> = raw.iter().map(|&v| &q(v, 1024) * &q(3, 4) + &q(1, 8)).collect();
        let plan = blockade(&cube, axis, &gamma, &ys).unwrap();
        let need = (&(&Scalar::one() - &epsilon(&gamma)) * &Scalar::from(ys.len() as i64)).to_f64().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r2 = (&gamma * &cube.radius).exact().unwrap().clone();
        let gap = &(&gamma * &cube.radius) / &Scalar::from(2);
        for _ in 0..20 {
            let Some(next) = sample_cube(&mut rng, &cube, &plan.slab, &r2).unwrap() else { continue };
            let far = ys.iter().filter(|y| plane_distance(&next, axis, y).gt(&gap).unwrap()).count();
            prop_assert!(far >= need, "far {far} < {need}");
        }
    }

    #[test]
    fn avoidance_clears_short_intervals(
        mids in prop::collection::vec(0i64..1000, 1..12),
        seed in 0u64..1000,
        g in prop::sample::select(vec![(1i64, 5i64), (1, 4), (3, 10)]),
    ) {
        let gamma = q(g.0, g.1);
        let mut cube = Cube::unit(1);
        let budget = hypwin::strategies::rounds_for(&gamma, mids.len()).unwrap();
        let limit = &(&gamma.powi(budget as i64) * &cube.diameter()) / &Scalar::from(2);
        let ivs: Vec<(Scalar, Scalar)> =
            mids.iter().map(|&m| { let c = q(m, 1000); (&c - &(&limit / &Scalar::from(2)), &c + &(&limit / &Scalar::from(2))) }).collect();
        let mut plan = AvoidPlan::new(&cube, 0, &gamma, ivs, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..plan.budget {
            let slab = plan.step(&cube, &gamma).unwrap();
            let r2 = (&gamma * &cube.radius).exact().unwrap().clone();
            cube = sample_cube(&mut rng, &cube, &slab, &r2).unwrap().unwrap();
        }
        prop_assert!(plan.pending(&cube).unwrap().is_empty());
    }

    #[test]
    fn similar_cut_sets_and_separation(
        r0 in 2i64..9, r1 in 2i64..9, gap in 0i64..4, scale in 5i64..200,
    ) {
        // Two maps, the second placed to the right of the first with a gap (possibly none).
        let a = rat(1, r0);
        let b = rat(1, r1);
        let off = &a + rat(gap, 10);
        let hi_end = &off + &b;
        prop_assume!(hi_end <= rat(1, 1));
        let ifs = Ifs1d::new(vec![(a, rat(0, 1)), (b.clone(), rat(1, 1) - &b)]).unwrap();
        let r = rat(1, scale);
        let words = ifs.lambda_r(&r).unwrap();
        ifs.check_cut_set(&r, &words).unwrap();
        let sub = ifs.maximal_disjoint(&r, &words);
        prop_assert!(!sub.kept.is_empty());
        let pieces: Vec<_> = sub.kept.iter().map(|w| ifs.piece(w)).collect();
        for i in 0..pieces.len() {
            for j in 0..i {
                let d = (&pieces[i].0 - &pieces[j].1).max(&pieces[j].0 - &pieces[i].1);
                prop_assert!(d >= *sub.delta_sep.as_ref().unwrap());
                prop_assert!(d > rat(0, 1));
            }
        }
    }

    #[test]
    fn equal_ratio_moran_matches_counting(m in 2usize..5, k in 1u32..4) {
        let ratio = rat(1, 2 * m as i64);
        let step = rat(1, m as i64);
        let maps = (0..m).map(|i| (ratio.clone(), &step * rat(i as i64, 1))).collect();
        let ifs = Ifs1d::new(maps).unwrap();
        let r = num_traits::pow(ratio.clone(), k as usize) * ifs.diameter();
        let sub = ifs.subsystem(&r).unwrap();
        prop_assert_eq!(sub.kept.len(), sub.lambda.len());
        let dim = sub.dimension(&ifs).unwrap();
        let word_ratio = hypwin::scalar::rational_to_f64(&ifs.word_ratio(&sub.kept[0]));
        let counted = (sub.kept.len() as f64).ln() / (1.0 / word_ratio).ln();
        prop_assert!((dim.moran - counted).abs() < 1e-11);
        let direct = moran_dimension(&vec![1.0 / (2 * m) as f64; m]);
        prop_assert!((dim.moran - direct).abs() < 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn full_branch_constants_give_positive_delta(m in 2u32..5, g in prop::sample::select(vec![(1i64, 4i64), (1, 5), (3, 10)]), c1 in 0i64..2) {
        let seq = build(&format!(r#"{{"kind":"times","m":{m}}}"#));
        let consts = constants_b(&seq, &Scalar::from(c1), &q(g.0, g.1), 512).unwrap();
        prop_assert!(delta_b(&consts, &Scalar::one()).gt(&Scalar::zero()).unwrap());
    }

    #[test]
    fn same_spec_and_seed_give_identical_traces(seed in 0u64..1000) {
        let text = r#"{"map":{"kind":"gauss"},"target":{"kind":"identity"},"gamma":"0.25",
          "bob":{"kind":"random","lambda":"0.25"},"max_rounds":30,"strategy":{"kind":"pass"}}"#;
        let mut spec = ExperimentSpec::from_json(text).unwrap();
        spec.seed = Some(seed);
        let a = run_experiment(&spec, NumericMode::Rational, None).unwrap();
        let b = run_experiment(&spec, NumericMode::Rational, None).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    }
}
