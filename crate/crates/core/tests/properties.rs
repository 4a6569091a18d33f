use orderlab::attack::{apply_policy, plan_replace_single_class, plan_reshuffle, rank_items, ReorderPolicy};
use orderlab::data::generate_blobs;
use orderlab::model::{Architecture, DifferentiableModel};
use orderlab::optim::{OptimizerSpec, OptimizerState};
use orderlab::rng::StreamRng;
use orderlab::tensor::{finite_diff_gradient, relative_error, GradientVector, LayoutId, Tensor};
use proptest::prelude::*;

fn policy() -> impl Strategy<Value = ReorderPolicy> {
    prop::sample::select(ReorderPolicy::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn policies_permute(n in 1usize..=10_000, unit in 1usize..64, p in policy()) {
        let ranked: Vec<usize> = (0..n).collect();
        let mut out = apply_policy(&ranked, p, unit).unwrap();
        prop_assert_eq!(out.len(), n);
        out.sort_unstable();
        prop_assert_eq!(out, ranked);
    }
}

proptest! {
    #[test]
    fn high_low_reverses_low_high(n in 1usize..100, unit in 1usize..10) {
        let ranked: Vec<usize> = (0..n).collect();
        let mut lh = apply_policy(&ranked, ReorderPolicy::LowHigh, unit).unwrap();
        lh.reverse();
        prop_assert_eq!(lh, apply_policy(&ranked, ReorderPolicy::HighLow, unit).unwrap());
    }

    #[test]
    fn inward_starts_at_the_ends_outward_ends_there(n in 3usize..100) {
        let ranked: Vec<usize> = (0..n).collect();
        let out = apply_policy(&ranked, ReorderPolicy::OscillationInward, 1).unwrap();
        prop_assert_eq!(out[0], n - 1);
        prop_assert_eq!(out[1], 0);
        let out = apply_policy(&ranked, ReorderPolicy::OscillationOutward, 1).unwrap();
        prop_assert_eq!(out[0], n / 2);
        let mut tail = out[n - 2..].to_vec();
        tail.sort_unstable();
        prop_assert_eq!(tail, vec![0, n - 1]);
    }

    #[test]
    fn ranking_is_sorted(losses in prop::collection::vec(0.0f64..10.0, 1..60)) {
        let items: Vec<(usize, f64)> = losses.iter().copied().enumerate().collect();
        let order = rank_items(&items).unwrap();
        for w in order.windows(2) {
            prop_assert!(losses[w[0]] <= losses[w[1]]);
        }
    }

    #[test]
    fn reshuffle_is_a_partition(losses in prop::collection::vec(0.0f64..10.0, 1..80), b in 1usize..12, p in policy()) {
        let items: Vec<(usize, f64)> = losses.iter().copied().enumerate().collect();
        let plan = plan_reshuffle(&items, p, b, 2).unwrap();
        plan.check_partition(losses.len()).unwrap();
        prop_assert!(plan.batches.iter().all(|x| x.len() <= b));
    }

    #[test]
    fn replace_batches_are_full_and_homogeneous(seed in 0u64..1000, b in 1usize..20) {
        let data = generate_blobs::<f64>(120, 4, 2.0, &mut StreamRng::new(seed, 1)).unwrap();
        let plan = plan_replace_single_class(&data, b, 2, &mut StreamRng::new(seed, 2)).unwrap();
        plan.validate(data.len()).unwrap();
        for batch in &plan.batches {
            prop_assert_eq!(batch.len(), b);
            let c = data.label(batch[0]).unwrap();
            prop_assert!(batch.iter().all(|&i| data.label(i).unwrap() == c));
        }
    }

    #[test]
    fn zero_momentum_is_sgd(grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20), lr in 1e-4f64..1.0) {
        let layout = LayoutId(7);
        let mut a = OptimizerState::<f64>::new(OptimizerSpec::Sgd { lr }, 3, layout);
        let mut m = OptimizerState::<f64>::new(OptimizerSpec::Momentum { lr, momentum: 0.0 }, 3, layout);
        let (mut pa, mut pm) = (vec![0.5, -1.0, 2.0], vec![0.5, -1.0, 2.0]);
        for g in grads {
            let g = GradientVector::new(g, layout);
            a.step(&mut pa, &g).unwrap();
            m.step(&mut pm, &g).unwrap();
            prop_assert_eq!(pa.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), pm.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprop_matches_central_differences(seed in 0u64..10_000, which in 0usize..4) {
        let arch = [
            Architecture::Linreg2,
            Architecture::Logreg { inputs: 3, classes: 4 },
            Architecture::Mlp { inputs: 3, hidden: 5, classes: 4 },
            Architecture::CnnSmall { side: 8, classes: 3 },
        ][which];
        let mut rng = StreamRng::new(seed, 9);
        let model = DifferentiableModel::<f64>::init(arch, &mut rng).unwrap();
        let (rows, feat) = (5, arch.input_len());
        let x = Tensor::matrix(rows, feat, (0..rows * feat).map(|_| rng.normal()).collect()).unwrap();
        let y = match arch.classes() {
            Some(k) => Tensor::vector((0..rows).map(|_| rng.below(k) as f64).collect()),
            None => Tensor::vector((0..rows).map(|_| rng.normal()).collect()),
        };
        let x = if let Architecture::CnnSmall { side, .. } = arch { x.reshape(vec![rows, side, side]).unwrap() } else { x };
        let analytic = model.backward(&x, &y).unwrap();
        let p = Tensor::vector(model.params().to_vec());
        let numeric = finite_diff_gradient(
            |q| DifferentiableModel::from_params(arch, q.data().to_vec())?.forward_loss(&x, &y).map(|r| r.mean),
            &p,
            1e-5,
        )
        .unwrap();
        let err = relative_error(analytic.values(), numeric.values(), 1e-8);
        prop_assert!(err < 1e-4, "{arch:?}: {err}");
    }
}
