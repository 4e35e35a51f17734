use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailr::autodiff::{finite_diff_check, Graph, Tensor};
use tailr::bounds::{expected_stepwise_tvd, joint_tvd, FactorizedSeqDist};
use tailr::distributions::{
    kld, mixture_proxy_dist, onehot_variance, tsallis_entropy, tvd_abs, tvd_min, CategoricalDist,
};
use tailr::metrics::{bleu_n, distinct_n, paired_bootstrap, rep_l, self_bleu_n};
use tailr::objectives::TailrConfig;
use tailr::seqmodel::{load_checkpoint, save_checkpoint, ModelConfig, SequenceModel, TokenSequence};

fn dist(max: usize) -> impl Strategy<Value = CategoricalDist> {
    prop::collection::vec(0.001f64..1.0, 2..max).prop_map(|w| CategoricalDist::from_weights(&w).unwrap())
}

fn dist_pair(max: usize) -> impl Strategy<Value = (CategoricalDist, CategoricalDist)> {
    (2..max).prop_flat_map(|n| {
        let w = prop::collection::vec(0.001f64..1.0, n);
        (w.clone(), w).prop_map(|(a, b)| {
            (
                CategoricalDist::from_weights(&a).unwrap(),
                CategoricalDist::from_weights(&b).unwrap(),
            )
        })
    })
}

fn sentences() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(1usize..6, 1..9), 2..8)
}

proptest! {
    #[test]
    fn tvd_forms_agree_and_are_bounded((p, q) in dist_pair(9)) {
        let a = tvd_abs(&p, &q).unwrap();
        let b = tvd_min(&p, &q).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&a));
        prop_assert!((a - tvd_abs(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn kld_is_nonnegative_and_dominates_tvd((p, q) in dist_pair(9)) {
        let k = kld(&p, &q).unwrap();
        prop_assert!(k >= -1e-12);
        // Pinsker
        let t = tvd_abs(&p, &q).unwrap();
        prop_assert!(t <= (k / 2.0).sqrt() + 1e-12);
    }

    #[test]
    fn onehot_variance_is_twice_tsallis_two(p in dist(12)) {
        let lhs = onehot_variance(&p);
        let rhs = 2.0 * tsallis_entropy(&p, 2.0).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn mixture_proxy_is_a_distribution(p in dist(9), gamma in 0.0f64..=1.0, pick in 0usize..100) {
        let w = pick % p.len();
        let m = mixture_proxy_dist(gamma, w, &p).unwrap();
        prop_assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((m.prob(w) - (gamma + (1.0 - gamma) * p.prob(w))).abs() < 1e-15);
    }

    #[test]
    fn tailr_weight_is_floored_monotone_and_at_most_one(
        gamma in 0.0f64..=1.0,
        floor in 0.0f64..0.99,
        p1 in 0.0f64..=1.0,
        p2 in 0.0f64..=1.0,
    ) {
        let cfg = TailrConfig::new(gamma, floor).unwrap();
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let (wl, wh) = (cfg.weight(lo), cfg.weight(hi));
        prop_assert!(wl >= floor && wh <= 1.0 + 1e-15);
        prop_assert!(wl <= wh + 1e-15);
    }

    #[test]
    fn log_softmax_gradient_matches_finite_differences(
        vals in prop::collection::vec(-3.0f64..3.0, 12),
        coeffs in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let f = |g: &mut Graph, x| {
            let lp = g.log_softmax(x).unwrap();
            let t = g.tanh(lp);
            g.dot_const(t, &coeffs).unwrap()
        };
        let eval = |v: Vec<f64>| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::matrix(3, 4, v).unwrap());
            let y = f(&mut g, x);
            g.value(y).item()
        };
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(3, 4, vals.clone()).unwrap());
        let y = f(&mut g, x);
        let ad = g.backward(y).unwrap().tensor(x).into_values();
        let h = 1e-6;
        for i in 0..vals.len() {
            let mut plus = vals.clone();
            plus[i] += h;
            let mut minus = vals.clone();
            minus[i] -= h;
            let fd = (eval(plus) - eval(minus)) / (2.0 * h);
            prop_assert!((ad[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "coord {}: {} vs {}", i, ad[i], fd);
        }
    }

    #[test]
    fn finite_diff_helper_accepts_smooth_functions(vals in prop::collection::vec(0.5f64..2.0, 4)) {
        let point = Tensor::vector(vals);
        let err = finite_diff_check(|g: &mut Graph, x| {
            let l = g.log(x);
            let e = g.mul(l, x)?;
            Ok(g.sum(e))
        }, &point, 1e-6).unwrap();
        prop_assert!(err < 1e-5);
    }

    #[test]
    fn sequence_bound_holds(seed in any::<u64>(), v in 2usize..=4, t in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FactorizedSeqDist::random(&mut rng, v, t).unwrap();
        let q = FactorizedSeqDist::random(&mut rng, v, t).unwrap();
        prop_assert!(joint_tvd(&p, &q).unwrap() <= expected_stepwise_tvd(&p, &q).unwrap() + 1e-12);
    }

    #[test]
    fn single_step_bound_is_tight(seed in any::<u64>(), v in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FactorizedSeqDist::random(&mut rng, v, 1).unwrap();
        let q = FactorizedSeqDist::random(&mut rng, v, 1).unwrap();
        prop_assert!((joint_tvd(&p, &q).unwrap() - expected_stepwise_tvd(&p, &q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metric_ranges(corpus in sentences()) {
        let b = bleu_n(&corpus, &corpus, 2).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
        let s = self_bleu_n(&corpus, 2, 1000, 0).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&s));
        let d = distinct_n(&corpus, 1).unwrap();
        prop_assert!(d > 0.0 && d <= 1.0);
        let r = rep_l(&corpus, 4).unwrap();
        prop_assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn a_sentence_scores_full_bleu_against_itself(s in prop::collection::vec(0usize..50, 4..15)) {
        let b = bleu_n(&[s.clone()], &[s], 4).unwrap();
        prop_assert!((b - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_is_a_probability(
        a in prop::collection::vec(-5.0f64..5.0, 5..30),
        seed in any::<u64>(),
    ) {
        let b: Vec<f64> = a.iter().rev().cloned().collect();
        let p = paired_bootstrap(&a, &b, 200, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>()) {
        let cfg = ModelConfig { vocab_size: 5, embed_dim: 3, hidden_dim: 4 };
        let m = SequenceModel::init(cfg, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back.params(), m.params());
    }

    #[test]
    fn sequence_logprob_is_the_sum_of_token_logprobs(
        seed in any::<u64>(),
        body in prop::collection::vec(1usize..5, 0..8),
    ) {
        let cfg = ModelConfig { vocab_size: 5, embed_dim: 3, hidden_dim: 4 };
        let m = SequenceModel::init(cfg, seed).unwrap();
        let s = TokenSequence::from_body(&body);
        let total: f64 = m.token_logprobs(&s).unwrap().iter().sum();
        prop_assert!((m.sequence_logprob(&s).unwrap() - total).abs() < 1e-12);
        prop_assert!(total < 0.0);
    }
}
