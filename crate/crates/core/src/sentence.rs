//! Schema-agnostic serialization of an entity into a single sentence.

use crate::model::Entity;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub entity_id: String,
    pub text: String,
    pub length_chars: usize,
}

impl Sentence {
    pub fn new(entity_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            entity_id: entity_id.into(),
            length_chars: text.chars().count(),
            text,
        }
    }
}

/// Concatenates the attribute values in order, separated by single spaces.
/// Empty values are skipped and whitespace runs collapse to one space.
pub fn build_sentence(entity: &Entity) -> Sentence {
    let text = entity
        .attributes
        .iter()
        .flat_map(|(_, v)| v.split_whitespace())
        .collect::<Vec<_>>()
        .join(" ");
    Sentence::new(entity.id.clone(), text)
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entity(attrs: &[(&str, &str)]) -> Entity {
        Entity::new(
            "e",
            attrs.iter().map(|(n, v)| (n.to_string(), v.to_string())).collect(),
        )
    }

    #[test]
    fn concatenates_in_attribute_order() {
        let s = build_sentence(&entity(&[("name", "Apple Watch"), ("price", "399")]));
        assert_eq!(s.text, "Apple Watch 399");
        assert_eq!(s.length_chars, 15);
    }

    #[test]
    fn skips_empty_values_and_collapses_whitespace() {
        assert_eq!(build_sentence(&entity(&[("a", ""), ("b", "x")])).text, "x");
        assert_eq!(build_sentence(&entity(&[("a", "  two   spaces ")])).text, "two spaces");
        assert_eq!(build_sentence(&entity(&[("a", ""), ("b", " ")])).text, "");
    }

    #[test]
    fn order_sensitive() {
        let a = build_sentence(&entity(&[("a", "x"), ("b", "y")]));
        let b = build_sentence(&entity(&[("b", "y"), ("a", "x")]));
        assert_ne!(a.text, b.text);
    }

    #[test]
    fn length_counts_chars_not_bytes() {
        let s = build_sentence(&entity(&[("a", "Zürich café")]));
        assert_eq!(s.length_chars, 11);
    }

    #[test]
    fn tokenizes() {
        assert_eq!(tokenize("Apple Watch-SE 2022"), ["apple", "watch", "se", "2022"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("IBM, IBM"), ["ibm", "ibm"]);
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_alphanumeric_and_stable(text in "\\PC{0,40}") {
            let tokens = tokenize(&text);
            for t in &tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert_eq!(t.to_lowercase(), t.clone());
            }
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }
    }
}
