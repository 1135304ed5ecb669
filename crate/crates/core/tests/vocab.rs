use factlab::vocab::*;
use factlab::*;
use proptest::prelude::*;

#[test]
fn prompt_of_layout() {
    let v = Vocabulary::new(2, 2, 4).unwrap();
    assert_eq!(v.total(), 10);
    assert_eq!(v.prompt_of(Token(2)).unwrap(), Token(8));
    assert_eq!(v.prompt_of(Token(3)).unwrap(), Token(9));
    let tiny = Vocabulary::new(1, 1, 1).unwrap();
    assert_eq!(tiny.prompt_of(Token(1)).unwrap(), Token(3));
}

#[test]
fn prompt_of_rejects_non_relations() {
    let v = Vocabulary::new(2, 2, 4).unwrap();
    assert!(matches!(v.prompt_of(Token(0)), Err(Error::WrongKind { .. })));
    assert!(matches!(
        v.prompt_of(Token(10)),
        Err(Error::TokenOutOfRange { token: 10, total: 10 })
    ));
}

#[test]
fn kind_of_layout() {
    let v = Vocabulary::new(2, 2, 4).unwrap();
    assert_eq!(v.kind_of(Token(0)).unwrap(), TokenKind::Subject);
    assert_eq!(v.kind_of(Token(5)).unwrap(), TokenKind::Answer);
    assert_eq!(v.kind_of(Token(9)).unwrap(), TokenKind::Prompt);
    assert!(v.kind_of(Token(10)).is_err());
}

#[test]
fn rejects_bad_sizes() {
    assert!(Vocabulary::new(0, 1, 1).is_err());
    assert!(Vocabulary::new(3, 2, 5).is_err());
}

proptest! {
    #[test]
    fn ranges_partition_tokens(s in 1usize..40, r in 1usize..8, k in 1usize..6) {
        let v = Vocabulary::new(s, r, r * k).unwrap();
        let ranges = [v.subjects(), v.relations(), v.answers(), v.prompts()];
        let mut covered = vec![0u8; v.total()];
        for range in &ranges {
            for i in range.clone() {
                covered[i] += 1;
            }
        }
        prop_assert!(covered.iter().all(|&c| c == 1));
        for t in 0..v.total() {
            let kind = v.kind_of(Token(t)).unwrap();
            let idx = [TokenKind::Subject, TokenKind::Relation, TokenKind::Answer, TokenKind::Prompt]
                .iter()
                .position(|&k| k == kind)
                .unwrap();
            prop_assert!(ranges[idx].contains(&t));
        }
    }

    #[test]
    fn prompt_of_is_a_bijection(s in 1usize..40, r in 1usize..8, k in 1usize..6) {
        let v = Vocabulary::new(s, r, r * k).unwrap();
        let mut seen = std::collections::HashSet::new();
        for rel in v.relations() {
            let p = v.prompt_of(Token(rel)).unwrap();
            prop_assert_eq!(v.kind_of(p).unwrap(), TokenKind::Prompt);
            prop_assert_eq!(v.relation_of_prompt(p).unwrap(), Token(rel));
            prop_assert!(seen.insert(p));
        }
        prop_assert_eq!(seen.len(), v.n_relations());
    }
}
