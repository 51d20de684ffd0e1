/// Characters split off the edges of whitespace-delimited chunks.
const DETACH: &[char] = &['.', ',', ';', ':', '(', ')', '"', '\'', '?', '!'];

/// Whitespace split, then leading and trailing punctuation from [`DETACH`]
/// becomes standalone single-character tokens. Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let leading = chunk.chars().take_while(|c| DETACH.contains(c)).count();
        let chars: Vec<char> = chunk.chars().collect();
        if leading == chars.len() {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trailing = chars
            .iter()
            .rev()
            .take_while(|c| DETACH.contains(c))
            .count();
        out.extend(chars[..leading].iter().map(|c| c.to_string()));
        out.push(chars[leading..chars.len() - trailing].iter().collect());
        out.extend(
            chars[chars.len() - trailing..]
                .iter()
                .map(|c| c.to_string()),
        );
    }
    out
}

/// Splits after `.`, `?` or `!` when followed by whitespace and an uppercase
/// letter, or by the end of the text. Terminators stay with the left
/// sentence; sentences are trimmed and empty ones dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut begin = 0;
    for (pos, &(byte, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let rest = &chars[pos + 1..];
        let ws = rest.iter().take_while(|(_, ch)| ch.is_whitespace()).count();
        let boundary = match rest.get(ws) {
            None => true,
            Some(&(_, next)) => ws > 0 && next.is_uppercase(),
        };
        if boundary {
            let end = byte + c.len_utf8();
            let s = text[begin..end].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            begin = end;
        }
    }
    let tail = text[begin..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("John Smith"), toks(&["John", "Smith"]));
        assert_eq!(
            tokenize("vs. ACME Corp."),
            toks(&["vs", ".", "ACME", "Corp", "."])
        );
        assert_eq!(
            tokenize("(Case No. 12-345)"),
            toks(&["(", "Case", "No", ".", "12-345", ")"])
        );
        assert_eq!(
            tokenize("March 3, 2015"),
            toks(&["March", "3", ",", "2015"])
        );
        assert_eq!(tokenize("$12,500."), toks(&["$12,500", "."]));
        assert_eq!(tokenize("..."), toks(&[".", ".", "."]));
        assert_eq!(tokenize("\"Hi!\""), toks(&["\"", "Hi", "!", "\""]));
        assert!(tokenize("   ").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sentences("A b. C d."), toks(&["A b.", "C d."]));
        assert_eq!(
            split_sentences("No. 5 is cited."),
            toks(&["No. 5 is cited."])
        );
        assert!(split_sentences("").is_empty());
        assert_eq!(
            split_sentences("Why? Because! no"),
            toks(&["Why?", "Because! no"])
        );
        assert_eq!(split_sentences("Trailing text"), toks(&["Trailing text"]));
        assert_eq!(
            split_sentences("A.B is one. Done .  "),
            toks(&["A.B is one.", "Done ."])
        );
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "[ a-zA-Z0-9.,;:()\"'?!$-]{0,40}") {
            let tokens = tokenize(&text);
            prop_assert!(tokens.iter().all(|t| !t.is_empty()));
            let again = tokenize(&tokens.join(" "));
            prop_assert_eq!(again, tokens);
        }
    }
}
