//! Classic Porter stemming algorithm (1980 rule set).
//!
//! Used only on the lexical indexing path; the neural path keeps raw
//! lowercase word tokens. Non-ASCII tokens pass through unchanged.

/// Stem a lowercase token with the Porter algorithm.
///
/// Tokens of one or two letters pass through unchanged, matching the
/// reference implementation; without that guard "s" would stem to the
/// empty string. Outputs are single-pass normal forms, not fixed points:
/// re-stemming a stem can shorten it further.
pub fn stem(token: &str) -> String {
    if token.len() <= 2 || !token.is_ascii() {
        return token.to_string();
    }
    let mut word: Vec<u8> = token.bytes().collect();
    step_1a(&mut word);
    step_1b(&mut word);
    step_1c(&mut word);
    step_2(&mut word);
    step_3(&mut word);
    step_4(&mut word);
    step_5a(&mut word);
    step_5b(&mut word);
    String::from_utf8(word).expect("ascii in, ascii out")
}

/// True if `word[i]` is a consonant. `y` counts as a vowel when it follows
/// a consonant.
fn is_consonant(word: &[u8], i: usize) -> bool {
    match word[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => {
            if i == 0 {
                true
            } else {
                !is_consonant(word, i - 1)
            }
        }
        _ => true,
    }
}

/// Porter's measure m: the number of VC sequences in `[C](VC)^m[V]`.
fn measure(stem: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..stem.len() {
        let cons = is_consonant(stem, i);
        if cons && prev_vowel {
            m += 1;
        }
        prev_vowel = !cons;
    }
    m
}

fn contains_vowel(stem: &[u8]) -> bool {
    (0..stem.len()).any(|i| !is_consonant(stem, i))
}

/// *d — stem ends with a double consonant.
fn ends_double_consonant(stem: &[u8]) -> bool {
    let n = stem.len();
    n >= 2 && stem[n - 1] == stem[n - 2] && is_consonant(stem, n - 1)
}

/// *o — stem ends consonant-vowel-consonant where the final consonant is
/// not w, x, or y.
fn ends_cvc(stem: &[u8]) -> bool {
    let n = stem.len();
    n >= 3
        && is_consonant(stem, n - 3)
        && !is_consonant(stem, n - 2)
        && is_consonant(stem, n - 1)
        && !matches!(stem[n - 1], b'w' | b'x' | b'y')
}

fn ends_with(word: &[u8], suffix: &[u8]) -> bool {
    word.len() >= suffix.len() && &word[word.len() - suffix.len()..] == suffix
}

fn replace_suffix(word: &mut Vec<u8>, suffix_len: usize, replacement: &[u8]) {
    let keep = word.len() - suffix_len;
    word.truncate(keep);
    word.extend_from_slice(replacement);
}

/// Apply the longest matching rule from `rules`; test `min_measure` on the
/// stem. A matched suffix consumes the step even if its condition fails.
fn apply_rule_table(word: &mut Vec<u8>, rules: &[(&[u8], &[u8])], min_measure: usize) {
    let best = rules
        .iter()
        .filter(|(s, _)| ends_with(word, s))
        .max_by_key(|(s, _)| s.len());
    if let Some(&(suffix, replacement)) = best {
        let stem_len = word.len() - suffix.len();
        if measure(&word[..stem_len]) > min_measure {
            replace_suffix(word, suffix.len(), replacement);
        }
    }
}

fn step_1a(word: &mut Vec<u8>) {
    // SSES -> SS and IES -> I are distinct rules that both happen to drop
    // two bytes; keeping them as separate arms mirrors the rule table.
    #[allow(clippy::if_same_then_else)]
    if ends_with(word, b"sses") {
        word.truncate(word.len() - 2);
    } else if ends_with(word, b"ies") {
        word.truncate(word.len() - 2);
    } else if ends_with(word, b"ss") {
        // unchanged
    } else if ends_with(word, b"s") {
        word.truncate(word.len() - 1);
    }
}

fn step_1b(word: &mut Vec<u8>) {
    if ends_with(word, b"eed") {
        // (m>0) EED -> EE; a failed condition still consumes the step,
        // which is what keeps "feed" intact.
        if measure(&word[..word.len() - 3]) > 0 {
            word.truncate(word.len() - 1);
        }
        return;
    }
    let removed = if ends_with(word, b"ed") && contains_vowel(&word[..word.len() - 2]) {
        word.truncate(word.len() - 2);
        true
    } else if ends_with(word, b"ing") && contains_vowel(&word[..word.len() - 3]) {
        word.truncate(word.len() - 3);
        true
    } else {
        false
    };
    if !removed {
        return;
    }
    if ends_with(word, b"at") || ends_with(word, b"bl") || ends_with(word, b"iz") {
        word.push(b'e');
    } else if ends_double_consonant(word) && !matches!(word[word.len() - 1], b'l' | b's' | b'z') {
        word.truncate(word.len() - 1);
    } else if measure(word) == 1 && ends_cvc(word) {
        word.push(b'e');
    }
}

fn step_1c(word: &mut [u8]) {
    if ends_with(word, b"y") && contains_vowel(&word[..word.len() - 1]) {
        let n = word.len();
        word[n - 1] = b'i';
    }
}

fn step_2(word: &mut Vec<u8>) {
    const RULES: &[(&[u8], &[u8])] = &[
        (b"ational", b"ate"),
        (b"tional", b"tion"),
        (b"enci", b"ence"),
        (b"anci", b"ance"),
        (b"izer", b"ize"),
        (b"abli", b"able"),
        (b"alli", b"al"),
        (b"entli", b"ent"),
        (b"eli", b"e"),
        (b"ousli", b"ous"),
        (b"ization", b"ize"),
        (b"ation", b"ate"),
        (b"ator", b"ate"),
        (b"alism", b"al"),
        (b"iveness", b"ive"),
        (b"fulness", b"ful"),
        (b"ousness", b"ous"),
        (b"aliti", b"al"),
        (b"iviti", b"ive"),
        (b"biliti", b"ble"),
    ];
    apply_rule_table(word, RULES, 0);
}

fn step_3(word: &mut Vec<u8>) {
    const RULES: &[(&[u8], &[u8])] = &[
        (b"icate", b"ic"),
        (b"ative", b""),
        (b"alize", b"al"),
        (b"iciti", b"ic"),
        (b"ical", b"ic"),
        (b"ful", b""),
        (b"ness", b""),
    ];
    apply_rule_table(word, RULES, 0);
}

fn step_4(word: &mut Vec<u8>) {
    const RULES: &[&[u8]] = &[
        b"al", b"ance", b"ence", b"er", b"ic", b"able", b"ible", b"ant", b"ement", b"ment",
        b"ent", b"ion", b"ou", b"ism", b"ate", b"iti", b"ous", b"ive", b"ize",
    ];
    let best = RULES
        .iter()
        .filter(|s| ends_with(word, s))
        .max_by_key(|s| s.len());
    if let Some(&suffix) = best {
        let stem_len = word.len() - suffix.len();
        let mut ok = measure(&word[..stem_len]) > 1;
        if suffix == b"ion" {
            ok = ok && stem_len >= 1 && matches!(word[stem_len - 1], b's' | b't');
        }
        if ok {
            word.truncate(stem_len);
        }
    }
}

fn step_5a(word: &mut Vec<u8>) {
    if ends_with(word, b"e") {
        let stem = &word[..word.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            word.truncate(word.len() - 1);
        }
    }
}

fn step_5b(word: &mut Vec<u8>) {
    if measure(word) > 1 && ends_double_consonant(word) && word[word.len() - 1] == b'l' {
        word.truncate(word.len() - 1);
    }
}
