/// CJK ideographs, kana and Hangul syllables. Each such character is a token
/// on its own.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x3134F
        | 0x3040..=0x309F
        | 0x30A0..=0x30FF
        | 0xAC00..=0xD7AF)
}

/// Split text into tokens: every CJK character is a token, every maximal run
/// of other alphanumeric characters is a token, everything else separates.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            run.push(c);
        } else if !run.is_empty() {
            out.push(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    /// Reference segmenter: the same rule expressed as a regex with class
    /// subtraction.
    fn reference(text: &str) -> Vec<String> {
        let cjk = r"\x{3400}-\x{4DBF}\x{4E00}-\x{9FFF}\x{F900}-\x{FAFF}\x{20000}-\x{2A6DF}\x{2A700}-\x{2EBEF}\x{2F800}-\x{2FA1F}\x{30000}-\x{3134F}\x{3040}-\x{309F}\x{30A0}-\x{30FF}\x{AC00}-\x{D7AF}";
        let re = Regex::new(&format!(r"[{cjk}]|[[\p{{Alphabetic}}\p{{N}}]--[{cjk}]]+")).unwrap();
        re.find_iter(text).map(|m| m.as_str().to_string()).collect()
    }

    #[test]
    fn latin_words() {
        assert_eq!(tokenize("take rest"), ["take", "rest"]);
        assert_eq!(tokenize("  take, rest!! "), ["take", "rest"]);
    }

    #[test]
    fn cjk_characters() {
        assert_eq!(tokenize("发烧了"), ["发", "烧", "了"]);
        assert_eq!(tokenize("发烧了。"), ["发", "烧", "了"]);
    }

    #[test]
    fn mixed_script() {
        assert_eq!(tokenize("吃aspirin吧"), ["吃", "aspirin", "吧"]);
        assert_eq!(reference("吃aspirin吧"), ["吃", "aspirin", "吧"]);
        assert_eq!(tokenize("每天2次，每次5mg"), reference("每天2次，每次5mg"));
    }

    proptest! {
        #[test]
        fn agrees_with_reference(s in "[a-zA-Z0-9 ,.?!。？！吃药发烧了のカ한\\-_éß]{0,40}") {
            prop_assert_eq!(tokenize(&s), reference(&s));
        }

        #[test]
        fn agrees_with_reference_on_any_text(s in any::<String>()) {
            prop_assert_eq!(tokenize(&s), reference(&s));
        }
    }
}
