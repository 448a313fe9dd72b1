use super::*;
use crate::numerics::Rng;

#[test]
fn norm_examples() {
    let s = token_norms(&Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap(), 5.0, 50).unwrap();
    assert_eq!(s.norms, vec![5.0]);
    assert_eq!(s.max_over_median, 1.0);
    assert_eq!(s.dominant_count, 0);

    let t = Tensor::new(vec![4, 1], vec![1.0, -1.0, 1.0, 100.0]).unwrap();
    let s = token_norms(&t, 5.0, 50).unwrap();
    assert_eq!(s.max_over_median, 100.0);
    assert_eq!(s.dominant, vec![3]);
    assert_eq!(s.histogram.counts.iter().sum::<usize>(), 4);
    assert_eq!(s.histogram.counts[49], 1);

    let s = token_norms(&Tensor::full(&[6, 3], 2.0), 5.0, 10).unwrap();
    assert_eq!((s.max_over_median, s.dominant_count), (1.0, 0));
}

#[test]
fn two_token_outlier_is_detected() {
    let t = Tensor::new(vec![2, 1], vec![1.0, 10.0]).unwrap();
    assert_eq!(token_norms(&t, 5.0, 50).unwrap().dominant, vec![1]);
}

#[test]
fn similarity_examples() {
    let g = FeatureGrid::new(Tensor::full(&[3, 2, 2, 4], 0.5)).unwrap();
    let s = neighbor_similarity(&g);
    assert!((s.mean_spatial.unwrap() - 1.0).abs() < 1e-15);
    assert!((s.mean_temporal.unwrap() - 1.0).abs() < 1e-15);

    // constant within frames, one-hot per frame
    let g = FeatureGrid::new(Tensor::from_fn(&[3, 2, 2, 3], |i| ((i % 3) == i / 12) as u8 as f64)).unwrap();
    let s = neighbor_similarity(&g);
    assert_eq!(s.mean_spatial, Some(1.0));
    assert_eq!(s.mean_temporal, Some(0.0));

    let s = neighbor_similarity(&FeatureGrid::new(Tensor::full(&[1, 1, 1, 2], 1.0)).unwrap());
    assert_eq!((s.mean_spatial, s.mean_temporal), (None, None));
}

#[test]
fn cosine_is_scale_invariant() {
    let mut rng = Rng::new(3);
    for _ in 0..50 {
        let a = Tensor::randn(&[5], 1.0, &mut rng);
        let b = Tensor::randn(&[5], 1.0, &mut rng);
        let (sa, sb) = (rng.uniform() * 10.0 + 0.1, rng.uniform() * 10.0 + 0.1);
        let c = cosine(a.data(), b.data());
        assert!((c - cosine(a.scale(sa).data(), b.scale(sb).data())).abs() < 1e-12);
    }
}

#[test]
fn length_examples() {
    let s = text_length_stats(&[TokenSeq::new(b"ab".map(u32::from).to_vec()), TokenSeq::new(b"abcd".map(u32::from).to_vec())], 4).unwrap();
    assert_eq!(s.lengths, vec![2, 4]);
    assert_eq!(s.mean, 3.0);
    assert_eq!(s.median, 3.0);
    let e = text_length_stats(&[TokenSeq::new(vec![]), TokenSeq::new(vec![crate::lm::EOS, 65])], 4).unwrap();
    assert_eq!(e.lengths, vec![0, 0]);
    assert!(text_length_stats(&[], 4).is_err());
}

#[test]
fn length_stats_match_recomputation() {
    let mut rng = Rng::new(11);
    let gens: Vec<TokenSeq> = (0..100).map(|_| TokenSeq::new(vec![65; rng.below(40)])).collect();
    let s = text_length_stats(&gens, 10).unwrap();
    let mut l: Vec<usize> = gens.iter().map(|g| g.len()).collect();
    let mean = l.iter().sum::<usize>() as f64 / 100.0;
    l.sort();
    let med = (l[49] + l[50]) as f64 / 2.0;
    assert_eq!(s.mean, mean);
    assert_eq!(s.median, med);
    assert_eq!(s.histogram.counts.iter().sum::<usize>(), 100);
}

#[test]
fn statistics_are_pure() {
    let mut rng = Rng::new(2);
    let g = FeatureGrid::new(Tensor::randn(&[2, 3, 2, 4], 1.0, &mut rng)).unwrap();
    assert_eq!(neighbor_similarity(&g), neighbor_similarity(&g));
    assert_eq!(token_norms(&g.tokens(), 5.0, 7).unwrap(), token_norms(&g.tokens(), 5.0, 7).unwrap());
}
