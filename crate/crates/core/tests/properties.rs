use proptest::prelude::*;

use rewrite_align::corpus::{self, GeneratorConfig, TaskKind};
use rewrite_align::judge;
use rewrite_align::policy::{self, Decoding, EnvConfig, PolicyParams, SamplingConfig};
use rewrite_align::reward::{self, WeightTriple};
use rewrite_align::rl;
use rewrite_align::seed;
use rewrite_align::textops::{edit_distance, edit_ratio};

fn tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..12)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

fn task() -> impl Strategy<Value = TaskKind> {
    prop::sample::select(TaskKind::ALL.to_vec())
}

fn params(scale: f64) -> impl Strategy<Value = PolicyParams> {
    prop::collection::vec(-scale..scale, policy::NUM_FEATURES * policy::NUM_CLASSES).prop_map(|theta| PolicyParams {
        theta,
        ..PolicyParams::zeros()
    })
}

proptest! {
    #[test]
    fn edit_distance_is_a_metric(a in tokens(), b in tokens(), c in tokens()) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(ab <= a.len().max(b.len()));
    }

    #[test]
    fn edit_ratio_is_normalized_distance(a in tokens(), b in tokens()) {
        match edit_ratio(&a, &b) {
            Ok(r) => {
                prop_assert!(r >= 0.0);
                prop_assert_eq!(r, edit_distance(&a, &b) as f64 / a.len() as f64);
            }
            Err(_) => prop_assert!(a.is_empty()),
        }
    }

    #[test]
    fn bt_probability_is_monotone_and_complementary(a in -1e3f64..1e3, b in -1e3f64..1e3, d in 0.0f64..10.0) {
        let p = reward::bt_probability(a, b);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + reward::bt_probability(b, a) - 1.0).abs() <= 1e-12);
        prop_assert!(reward::bt_probability(a + d, b) >= p);
    }

    #[test]
    fn standardize_has_zero_mean_unit_variance(xs in prop::collection::vec(-100.0f64..100.0, 1..40)) {
        let z = reward::standardize(&xs);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!(var.abs() < 1e-9 || (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalized_weights_lie_on_the_simplex(a in 0.0f64..5.0, c in 0.0f64..5.0, k in 0.01f64..5.0) {
        let w = WeightTriple::normalized(a, c, k).unwrap();
        prop_assert!((w.agreement + w.coherence + w.conciseness - 1.0).abs() < 1e-12);
        prop_assert!(w.validate().is_ok());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12), t in 0.1f64..5.0, k in 1usize..6) {
        let p = policy::softmax(&logits, &SamplingConfig { temperature: t, top_k: Some(k) });
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().filter(|x| **x > 0.0).count() <= k);
    }

    #[test]
    fn greedy_rollout_is_invariant_to_positive_scaling(p in params(2.0), c in 0.01f64..100.0, tk in task(), s in 0u64..1000) {
        let inst = &corpus::gen_split(tk, s, "prop", 1, &GeneratorConfig::default()).unwrap()[0];
        let env = EnvConfig::default();
        let scaled = PolicyParams { theta: p.theta.iter().map(|x| x * c).collect(), ..p.clone() };
        let a = policy::rollout(&p, inst, &env, &Decoding::Greedy, &mut seed::stream(0, "g", 0));
        let b = policy::rollout(&scaled, inst, &env, &Decoding::Greedy, &mut seed::stream(1, "g", 0));
        prop_assert_eq!(a.actions(), b.actions());
    }

    #[test]
    fn sampled_rollout_is_reproducible(p in params(1.0), tk in task(), s in 0u64..1000) {
        let inst = &corpus::gen_split(tk, s, "prop", 1, &GeneratorConfig::default()).unwrap()[0];
        let env = EnvConfig::default();
        let dec = Decoding::Sample(SamplingConfig::default());
        let a = policy::rollout(&p, inst, &env, &dec, &mut seed::stream(s, "r", 3));
        let b = policy::rollout(&p, inst, &env, &dec, &mut seed::stream(s, "r", 3));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_itself(p in params(2.0), q in params(2.0), tk in task(), s in 0u64..1000) {
        let inst = &corpus::gen_split(tk, s, "prop", 1, &GeneratorConfig::default()).unwrap()[0];
        let traj = policy::rollout(&p, inst, &EnvConfig::default(), &Decoding::Sample(SamplingConfig::default()), &mut seed::stream(s, "k", 0));
        prop_assert!(rl::kl_estimate(&p, &q, &traj.steps, 1.0).unwrap() >= 0.0);
        prop_assert_eq!(rl::kl_estimate(&p, &p, &traj.steps, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn gold_is_coherent_and_fully_agreeing(tk in task(), s in 0u64..10_000) {
        let inst = &corpus::gen_split(tk, s, "prop", 1, &GeneratorConfig::default()).unwrap()[0];
        prop_assert_eq!(judge::agreement(inst, &inst.gold), 1.0);
        prop_assert_eq!(judge::coherence(&inst.gold), 1);
        prop_assert_eq!(reward::conciseness_reward(inst, &inst.initial), 0.0);
        let replayed = policy::replay(inst, &policy::gold_action_sequence(inst), &EnvConfig::default()).unwrap();
        prop_assert_eq!(&replayed, &inst.gold);
    }

    #[test]
    fn dataset_codec_round_trips(tk in task(), s in 0u64..10_000) {
        let data = corpus::gen_split(tk, s, "prop", 3, &GeneratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        corpus::write_dataset(&mut buf, &data).unwrap();
        prop_assert_eq!(corpus::read_dataset(buf.as_slice()).unwrap(), data);
    }
}
