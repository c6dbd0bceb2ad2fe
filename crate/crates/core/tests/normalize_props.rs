use corpusqc_core::langproc::{apply_ruleset, shipped_ruleset, SHIPPED_RULESETS};
use corpusqc_core::normalize::{
    normalize_unicode, standardize_symbols, strip_markup, GeneralConfig, GeneralNormalizer,
};
use proptest::prelude::*;

fn fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => any::<char>().prop_map(String::from),
        3 => (0x300u32..0x370).prop_map(|c| char::from_u32(c).unwrap().to_string()),
        2 => prop::sample::select(vec![
            "<p>", "</b>", "<a href='x'>", "<br/>", "<!-- c -->", "<", ">", "</", "<<p>>",
            "&amp;", "&lt;", "&gt;", "&#233;", "&#x1EB9;", "&bogus;", "&", ";", "&#", "&#x", "&amp;lt;",
            "\u{2019}", "\u{201C}", "\u{2014}", "\u{2026}", "\u{00A0}", "\u{200B}", "\u{FEFF}", "\u{037E}",
            " ", "  ", "\n", "\r\n", "\t",
            "ẹ", "ọ", "ṣ", "e\u{0329}", "o\u{0329}\u{0301}", "ƙ", "ƴ", "ɛ", "ɔ", "ε", "ͻ", "υ", "γ",
        ]).prop_map(String::from),
        2 => "[a-zA-Z]{1,6}",
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(fragment(), 0..24).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn each_op_is_idempotent(s in text()) {
        let once = strip_markup(&s);
        prop_assert_eq!(strip_markup(&once), once);
        let once = standardize_symbols(&s);
        prop_assert_eq!(standardize_symbols(&once), once);
        let once = normalize_unicode(&s);
        prop_assert_eq!(normalize_unicode(&once), once);
    }

    #[test]
    fn pipelines_are_idempotent(s in text()) {
        let general = GeneralNormalizer::new(GeneralConfig::default());
        let once = general.clean(&s).text;
        prop_assert_eq!(&general.clean(&once).text, &once);
        for (lang, _) in SHIPPED_RULESETS {
            let rules = shipped_ruleset(lang).unwrap();
            let lang_once = apply_ruleset(&once, &rules);
            prop_assert_eq!(apply_ruleset(&lang_once, &rules), lang_once.clone());
            // language rules never produce anything the general tier would change
            prop_assert_eq!(general.clean(&lang_once).text, lang_once);
        }
    }
}
