use proptest::prelude::*;
use sea_core::metrics::{bleu, concat_reference, rouge_l, rouge_n, score_text, tokenize};

/// Clipped n-gram matches by linear scans over n-gram lists.
fn brute_ngram(cand: &[String], refr: &[String], n: usize) -> (usize, usize, usize) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let c = grams(cand);
    let mut r = grams(refr);
    let total_ref = r.len();
    let mut matched = 0;
    for g in &c {
        if let Some(pos) = r.iter().position(|x| x == g) {
            r.remove(pos);
            matched += 1;
        }
    }
    (matched, total_ref, c.len())
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by enumerating every subset of `a`.
fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let pick: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if pick.len() > best && is_subsequence(&pick, b) {
            best = pick.len();
        }
    }
    best
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "the", "cat"]), 0..10).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rouge_n_matches_oracle(a in words(), b in words(), n in 1usize..=2) {
        let (m, tr, tc) = brute_ngram(&tokenize(&a), &tokenize(&b), n);
        let s = rouge_n(&a, &b, n);
        prop_assert_eq!(s.recall, ratio(m, tr));
        prop_assert_eq!(s.precision, ratio(m, tc));
    }

    #[test]
    fn rouge_l_matches_oracle(a in words(), b in words()) {
        let (ta, tb) = (tokenize(&a), tokenize(&b));
        let l = brute_lcs(&ta, &tb);
        let s = rouge_l(&a, &b);
        prop_assert_eq!(s.recall, ratio(l, tb.len()));
        prop_assert_eq!(s.precision, ratio(l, ta.len()));
    }

    #[test]
    fn recall_precision_swap(a in words(), b in words(), n in 1usize..=3) {
        prop_assert_eq!(rouge_n(&a, &b, n).recall, rouge_n(&b, &a, n).precision);
        prop_assert_eq!(rouge_l(&a, &b).recall, rouge_l(&b, &a).precision);
    }

    #[test]
    fn scores_in_unit_interval(a in words(), b in words()) {
        let s = score_text(&a, &b, 0);
        for v in [s.bleu, s.rouge1.f1, s.rouge2.f1, s.rouge_l.f1, s.rouge1.recall, s.rouge_l.precision] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bleu_self_is_one(t in "[a-z]{1,6}( [a-z]{1,6}){0,12}") {
        prop_assert!((bleu(&t, &t) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn concatenated_reference_joins_reviews() {
    let joined = concat_reference(&["first review ", " second review"]);
    assert_eq!(joined, "first review\n\nsecond review");
    let s = rouge_n("first second", &joined, 1);
    assert_eq!(s.recall, 0.5);
}

#[test]
fn ten_token_lcs_pair() {
    let a = "one two three four five six seven eight nine ten";
    let b = "two four one six three eight five ten seven nine";
    let l = brute_lcs(&tokenize(a), &tokenize(b));
    assert_eq!(rouge_l(a, b).recall, l as f64 / 10.0);
}
