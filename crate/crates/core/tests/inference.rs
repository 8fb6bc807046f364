mod common;

use proptest::prelude::*;
use seqtag::autodiff::{GradCheck, Tape, Tensor};
use seqtag::fixtures::enumerate_paths;
use seqtag::inference::{argmax_rows, crf_nll, softmax_loss, Lattice, Reduction, IMPOSSIBLE};

const A: usize = 0;
const B: usize = 1;

fn zeros_tr(k: usize) -> Vec<f64> {
    vec![0.0; (k + 2) * (k + 2)]
}

fn example() -> Lattice {
    Lattice::single(2, vec![1.0, 0.0, 0.0, 1.0], zeros_tr(2)).unwrap()
}

#[test]
fn partition_of_the_two_by_two_example() {
    let e = std::f64::consts::E;
    let expected = (e + e * e + 1.0 + e).ln();
    let lat = example();
    let log_z = lat.log_partition(0).unwrap();
    assert!((log_z - expected).abs() < 1e-12);
    assert!((log_z - 2.626_523_375_036_445_6).abs() < 1e-12);
    let nll = lat.nll(&[vec![A, B]]).unwrap();
    assert!((nll - (expected - 2.0)).abs() < 1e-12);
}

#[test]
fn single_label_has_one_path_and_zero_nll() {
    let em = vec![0.3, -1.2, 2.5];
    let mut tr = zeros_tr(1);
    tr[1 * 3] = 0.7;
    tr[2] = -0.4;
    let lat = Lattice::single(1, em.clone(), tr).unwrap();
    assert!(lat.nll(&[vec![0, 0, 0]]).unwrap().abs() < 1e-12);
    let all = enumerate_paths(&lat, 0).unwrap();
    assert_eq!(all.paths.len(), 1);
    let closed = em.iter().sum::<f64>() + 0.7 - 0.4;
    assert!((all.paths[0].1 - closed).abs() < 1e-12);
    let v = lat.viterbi();
    assert_eq!(v[0].labels, vec![0, 0, 0]);
    assert!((v[0].score - closed).abs() < 1e-12);
}

#[test]
fn uniform_scores_give_length_times_log_k() {
    for k in 1..=4 {
        for len in 1..=5 {
            let lat = Lattice::single(k, vec![0.0; k * len], zeros_tr(k)).unwrap();
            let expected = len as f64 * (k as f64).ln();
            assert!((lat.log_partition(0).unwrap() - expected).abs() < 1e-12);
            assert!((enumerate_paths(&lat, 0).unwrap().log_z - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn enumeration_counts_paths() {
    let all = enumerate_paths(&example(), 0).unwrap();
    assert_eq!(all.paths.len(), 4);
    let big = Lattice::single(10, vec![0.0; 60], zeros_tr(10)).unwrap();
    assert_eq!(enumerate_paths(&big, 0).unwrap_err().kind(), "contract-error");
}

#[test]
fn viterbi_on_the_example() {
    let v = example().viterbi();
    assert_eq!(v[0].labels, vec![A, B]);
    assert_eq!(v[0].score, 2.0);
}

#[test]
fn forbidden_repeat_forces_alternation() {
    let mut tr = zeros_tr(2);
    tr[A * 4 + A] = -1e6;
    let lat = Lattice::single(2, vec![0.0; 10], tr).unwrap();
    let v = &lat.viterbi()[0];
    assert_eq!(v.labels, enumerate_paths(&lat, 0).unwrap().best().0);
    assert_eq!(v.labels, vec![A, B, A, B, A]);
}

#[test]
fn two_best_on_the_example() {
    let list = example().nbest(0, 2);
    let got: Vec<(Vec<usize>, f64)> = list.iter().map(|p| (p.labels.clone(), p.score)).collect();
    assert_eq!(got, vec![(vec![A, B], 2.0), (vec![A, A], 1.0)]);
}

#[test]
fn full_list_probabilities_sum_to_one() {
    let lat = example();
    let list = lat.nbest(0, 10);
    assert_eq!(list.len(), 4);
    let total: f64 = list.iter().map(|p| p.prob).sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn guards_block_boundary_transitions() {
    let mut tr = zeros_tr(2);
    tr[2 * 4 + 2] = 50.0;
    tr[3 * 4] = 50.0;
    let lat = Lattice::single(2, vec![0.0; 4], tr).unwrap();
    assert_eq!(lat.transitions[2 * 4 + 2], IMPOSSIBLE);
    assert_eq!(lat.transitions[3 * 4], IMPOSSIBLE);
    assert!((lat.log_partition(0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn batched_lattice_matches_single_sentences() {
    let mut r = common::rng(3);
    let k = 3;
    let lens = [4usize, 1, 3];
    let max_len = 4;
    let singles: Vec<Lattice> = lens.iter().map(|&l| common::random_lattice(&mut r, k, l, 2.0)).collect();
    let tr = singles[0].transitions.clone();
    let mut em = Vec::new();
    let mut mask = Vec::new();
    for (s, &l) in singles.iter().zip(&lens) {
        em.extend_from_slice(s.sentence(0));
        em.extend(std::iter::repeat(99.0).take((max_len - l) * k));
        mask.extend((0..max_len).map(|t| t < l));
    }
    let batch = Lattice::new(3, max_len, k, em, mask, tr.clone()).unwrap();
    for (b, s) in singles.iter().enumerate() {
        let single = Lattice::single(k, s.sentence(0).to_vec(), tr.clone()).unwrap();
        assert_eq!(batch.log_partition(b).unwrap(), single.log_partition(0).unwrap());
        assert_eq!(batch.nbest(b, 5), single.nbest(0, 5));
    }
}

#[test]
fn zero_length_sentence_is_a_domain_error() {
    let lat = Lattice::new(1, 2, 2, vec![0.0; 4], vec![false, false], zeros_tr(2)).unwrap();
    assert_eq!(lat.log_partition(0).unwrap_err().kind(), "domain-error");
    assert!(lat.nbest(0, 3).is_empty());
}

fn crf_value(em: &Tensor, tr: &Tensor, mask: &[bool], gold: &[Vec<usize>]) -> f64 {
    let mut tape = Tape::new();
    let e = tape.leaf(em.clone(), false);
    let t = tape.leaf(tr.clone(), false);
    let v = crf_nll(&mut tape, e, t, mask, gold).unwrap();
    tape.value(v).item()
}

#[test]
fn crf_gradient_matches_finite_differences() {
    let mut r = common::rng(11);
    let (b, l, k) = (2, 3, 3);
    let lat = common::random_lattice(&mut r, k, b * l, 1.5);
    let mut em = Tensor::new(&[b, l, k], lat.emissions.clone()).unwrap();
    let mut tr = Tensor::new(&[k + 2, k + 2], lat.transitions.iter().map(|v| v * 0.5).collect()).unwrap();
    let mask = vec![true, true, true, true, true, false];
    let gold = vec![vec![0, 2, 1], vec![1, 1]];

    let mut tape = Tape::new();
    let e = tape.leaf(em.clone(), true);
    let t = tape.leaf(tr.clone(), true);
    let loss = crf_nll(&mut tape, e, t, &mask, &gold).unwrap();
    tape.backward(loss).unwrap();
    let ge = tape.grad(e).unwrap().clone();
    let gt = tape.grad(t).unwrap().clone();

    let check = GradCheck::default();
    for i in 0..em.len() {
        let trc = tr.clone();
        let n = check.numeric(&mut em, i, |x| crf_value(x, &trc, &mask, &gold));
        assert!(check.agrees(ge.data()[i], n), "emission {i}: {} vs {n}", ge.data()[i]);
    }
    for i in 0..tr.len() {
        let emc = em.clone();
        let (from, to) = (i / (k + 2), i % (k + 2));
        if to == k || from == k + 1 {
            assert_eq!(gt.data()[i], 0.0, "guard {from}->{to} must have zero gradient");
            continue;
        }
        let n = check.numeric(&mut tr, i, |x| crf_value(&emc, x, &mask, &gold));
        assert!(check.agrees(gt.data()[i], n), "transition {i}: {} vs {n}", gt.data()[i]);
    }
    for i in 5 * k..6 * k {
        assert_eq!(ge.data()[i], 0.0, "masked position must get no gradient");
    }
}

#[test]
fn crf_rejects_bad_gold() {
    let mut tape = Tape::new();
    let e = tape.leaf(Tensor::zeros(&[1, 2, 2]), true);
    let t = tape.leaf(Tensor::zeros(&[4, 4]), true);
    let mask = [true, true];
    assert!(crf_nll(&mut tape, e, t, &mask, &[vec![0]]).is_err());
    assert_eq!(
        crf_nll(&mut tape, e, t, &mask, &[vec![0, 5]]).unwrap_err().kind(),
        "tensor-error"
    );
}

fn softmax_value(rows: &[Vec<f64>], labels: &[usize], reduction: Reduction) -> f64 {
    let k = rows[0].len();
    let mut tape = Tape::new();
    let data: Vec<f64> = rows.concat();
    let em = tape.leaf(Tensor::new(&[1, rows.len(), k], data).unwrap(), false);
    let mask = vec![true; rows.len()];
    let v = softmax_loss(&mut tape, em, labels, &mask, reduction).unwrap();
    tape.value(v).item()
}

#[test]
fn softmax_loss_cases() {
    let uniform = softmax_value(&[vec![0.0, 0.0]], &[0], Reduction::Sum);
    assert!((uniform - std::f64::consts::LN_2).abs() < 1e-12);
    let peaked = softmax_value(&[vec![1000.0, 0.0]], &[0], Reduction::Sum);
    assert!(peaked.abs() < 1e-12);
    let two = softmax_value(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0, 1], Reduction::Sum);
    let mean = softmax_value(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0, 1], Reduction::TokenMean);
    assert!((two - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert!((mean - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn softmax_masked_rows_are_ignored() {
    let mut tape = Tape::new();
    let em = tape.leaf(Tensor::new(&[1, 2, 2], vec![0.0, 0.0, 5.0, -5.0]).unwrap(), true);
    let v = softmax_loss(&mut tape, em, &[0, 1], &[true, false], Reduction::Sum).unwrap();
    assert!((tape.value(v).item() - std::f64::consts::LN_2).abs() < 1e-12);
    tape.backward(v).unwrap();
    assert_eq!(&tape.grad(em).unwrap().data()[2..], &[0.0, 0.0]);
}

#[test]
fn softmax_argmax_decoding() {
    assert_eq!(argmax_rows(&[3.0, 1.0, 0.0, 2.0], 2), vec![0, 1]);
    assert_eq!(argmax_rows(&[1.0, 1.0], 2), vec![0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamic_programs_agree_with_enumeration(seed in 0u64..1_000_000, k in 1usize..=4, len in 1usize..=5) {
        let mut r = common::rng(seed);
        let lat = common::random_lattice(&mut r, k, len, 3.0);
        let all = enumerate_paths(&lat, 0).unwrap();
        prop_assert!((lat.log_partition(0).unwrap() - all.log_z).abs() < 1e-8);
        let v = &lat.viterbi()[0];
        prop_assert_eq!(&v.labels, &all.best().0);
        prop_assert_eq!(v.score, all.best().1);
    }

    #[test]
    fn nbest_matches_sorted_enumeration_with_ties(seed in 0u64..1_000_000, k in 1usize..=3, len in 1usize..=4) {
        let mut r = common::rng(seed);
        let lat = common::tied_lattice(&mut r, k, len);
        let all = enumerate_paths(&lat, 0).unwrap();
        let total = all.paths.len();
        for n in 1..=total {
            let got: Vec<(Vec<usize>, f64)> = lat.nbest(0, n).into_iter().map(|p| (p.labels, p.score)).collect();
            prop_assert_eq!(&got[..], all.top(n));
        }
        let full = lat.nbest(0, total + 3);
        prop_assert_eq!(full.len(), total);
        let sum: f64 = full.iter().map(|p| p.prob).sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        prop_assert_eq!(&lat.nbest(0, 1)[0], &lat.viterbi()[0]);
    }
}
