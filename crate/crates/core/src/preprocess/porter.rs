//! The original (1980) Porter suffix-stripping stemmer.
//!
//! Each step applies at most one rule: the one with the longest matching
//! suffix. If that rule's condition fails, no shorter suffix is tried.

fn is_cons(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_cons(w, i - 1),
        _ => true,
    }
}

/// Number of VC sequences in `[C](VC)^m[V]`.
fn measure(w: &[u8]) -> usize {
    let n = w.len();
    let mut i = 0;
    while i < n && is_cons(w, i) {
        i += 1;
    }
    let mut m = 0;
    loop {
        while i < n && !is_cons(w, i) {
            i += 1;
        }
        if i >= n {
            return m;
        }
        while i < n && is_cons(w, i) {
            i += 1;
        }
        m += 1;
    }
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_cons(w, i))
}

fn ends_double_cons(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_cons(w, n - 1)
}

/// `*o`: stem ends consonant-vowel-consonant, the last not w, x or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_cons(w, n - 3)
        && !is_cons(w, n - 2)
        && is_cons(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

/// Applies the longest matching rule if `cond(stem, suffix)` holds.
/// Returns the suffix that matched and whether it was replaced.
fn apply_longest<'r>(
    w: &mut Vec<u8>,
    rules: &[(&'r str, &str)],
    cond: impl Fn(&[u8], &str) -> bool,
) -> Option<(&'r str, bool)> {
    let (suffix, replacement) = rules
        .iter()
        .filter(|(s, _)| w.ends_with(s.as_bytes()))
        .max_by_key(|(s, _)| s.len())?;
    let stem_len = w.len() - suffix.len();
    if cond(&w[..stem_len], suffix) {
        w.truncate(stem_len);
        w.extend_from_slice(replacement.as_bytes());
        Some((suffix, true))
    } else {
        Some((suffix, false))
    }
}

fn step1a(w: &mut Vec<u8>) {
    apply_longest(
        w,
        &[("sses", "ss"), ("ies", "i"), ("ss", "ss"), ("s", "")],
        |_, _| true,
    );
}

fn step1b(w: &mut Vec<u8>) {
    let fired = apply_longest(w, &[("eed", "ee"), ("ed", ""), ("ing", "")], |stem, suffix| {
        if suffix == "eed" {
            measure(stem) > 0
        } else {
            has_vowel(stem)
        }
    });
    let Some((suffix, true)) = fired else { return };
    if suffix == "eed" {
        return;
    }
    if apply_longest(w, &[("at", "ate"), ("bl", "ble"), ("iz", "ize")], |_, _| true).is_some() {
        return;
    }
    if ends_double_cons(w) && !matches!(w[w.len() - 1], b'l' | b's' | b'z') {
        w.pop();
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push(b'e');
    }
}

fn step1c(w: &mut Vec<u8>) {
    apply_longest(w, &[("y", "i")], |stem, _| has_vowel(stem));
}

fn step2(w: &mut Vec<u8>) {
    const RULES: &[(&str, &str)] = &[
        ("ational", "ate"),
        ("tional", "tion"),
        ("enci", "ence"),
        ("anci", "ance"),
        ("izer", "ize"),
        ("abli", "able"),
        ("alli", "al"),
        ("entli", "ent"),
        ("eli", "e"),
        ("ousli", "ous"),
        ("ization", "ize"),
        ("ation", "ate"),
        ("ator", "ate"),
        ("alism", "al"),
        ("iveness", "ive"),
        ("fulness", "ful"),
        ("ousness", "ous"),
        ("aliti", "al"),
        ("iviti", "ive"),
        ("biliti", "ble"),
    ];
    apply_longest(w, RULES, |stem, _| measure(stem) > 0);
}

fn step3(w: &mut Vec<u8>) {
    const RULES: &[(&str, &str)] = &[
        ("icate", "ic"),
        ("ative", ""),
        ("alize", "al"),
        ("iciti", "ic"),
        ("ical", "ic"),
        ("ful", ""),
        ("ness", ""),
    ];
    apply_longest(w, RULES, |stem, _| measure(stem) > 0);
}

fn step4(w: &mut Vec<u8>) {
    const RULES: &[(&str, &str)] = &[
        ("al", ""),
        ("ance", ""),
        ("ence", ""),
        ("er", ""),
        ("ic", ""),
        ("able", ""),
        ("ible", ""),
        ("ant", ""),
        ("ement", ""),
        ("ment", ""),
        ("ent", ""),
        ("ion", ""),
        ("ou", ""),
        ("ism", ""),
        ("ate", ""),
        ("iti", ""),
        ("ous", ""),
        ("ive", ""),
        ("ize", ""),
    ];
    apply_longest(w, RULES, |stem, suffix| {
        measure(stem) > 1
            && (suffix != "ion" || matches!(stem.last(), Some(b's') | Some(b't')))
    });
}

fn step5(w: &mut Vec<u8>) {
    if w.last() == Some(&b'e') {
        let stem = &w[..w.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            w.pop();
        }
    }
    if measure(w) > 1 && ends_double_cons(w) && w.last() == Some(&b'l') {
        w.pop();
    }
}

/// Stems a lowercase word. Words shorter than three letters and words with
/// characters outside `a-z` are returned unchanged.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_owned();
    }
    let mut w = word.as_bytes().to_vec();
    step1a(&mut w);
    step1b(&mut w);
    step1c(&mut w);
    step2(&mut w);
    step3(&mut w);
    step4(&mut w);
    step5(&mut w);
    String::from_utf8(w).expect("ascii in, ascii out")
}
