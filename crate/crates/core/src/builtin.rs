//! The control-verb and verb-raising grammars.
//!
//! Both are built in code and also shipped as grammar files; the two must
//! stay identical (checked in tests). The constants here are the small
//! vocabulary of the worked examples; datasets are generated after
//! repopulating the constants from a [`crate::lexicon::Lexicon`].

use crate::grammar::{
    recipe, Grammar, InheritanceScheme as Scheme, InnerPhrases, NonTerminal, Rule, Scope,
    StringTuple, Symbol,
};

pub const CONTROL_TEXT: &str = include_str!("../grammars/control.mcfg");
pub const RAISING_TEXT: &str = include_str!("../grammars/raising.mcfg");

const EXAMPLE_NPS: [&str; 5] = [
    "de student",
    "de docent",
    "de hond",
    "de eend",
    "de oefeningen",
];

fn constants(g: &mut Grammar, sym: &str, values: &[&str]) {
    for v in values {
        g.add_constant(Symbol::parse(sym), StringTuple::from_strs(&[v]));
    }
}

/// Schemes for the matrix rules with the layout `NP TV NP VC [ADV]`.
fn a1_schemes(rule: Rule) -> Rule {
    rule.with_scheme(
        Scheme::when(&[(2, "su")])
            .direct(2, 1)
            .pass_np(4, 1, Scope::Subject),
    )
    .with_scheme(
        Scheme::when(&[(2, "obj")])
            .direct(2, 1)
            .pass_np(4, 3, Scope::Object),
    )
}

/// Schemes for the matrix rules with the layout `NP TV NP NP CV VC [ADV]`.
fn a2_schemes(rule: Rule) -> Rule {
    rule.with_scheme(
        Scheme::when(&[(2, "su")])
            .direct(2, 1)
            .direct_as(5, 1, Scope::Subject)
            .pass_np(6, 4, Scope::Object),
    )
    .with_scheme(
        Scheme::when(&[(2, "obj")])
            .direct(2, 1)
            .direct_as(5, 3, Scope::Object)
            .pass_np(6, 4, Scope::Object),
    )
}

pub fn control_grammar() -> Grammar {
    let mut g = Grammar::new("control", "S");
    g.nonterminals = vec![
        NonTerminal::new("S", 1),
        NonTerminal::new("VC", 2),
        NonTerminal::new("NP", 1).noun(),
        NonTerminal::new("TV", 1).verb().with_subtypes(&["su", "obj"]),
        NonTerminal::new("CV", 1).verb(),
        NonTerminal::new("INF_iv", 1).verb(),
        NonTerminal::new("INF_tv", 1).verb(),
        NonTerminal::new("INF_c", 1).verb().with_subtypes(&["su", "obj"]),
        NonTerminal::new("TE", 1),
        NonTerminal::new("ADV", 1),
    ];
    constants(&mut g, "NP", &EXAMPLE_NPS);
    constants(&mut g, "TV.su", &["belooft"]);
    constants(&mut g, "TV.obj", &["vraagt"]);
    constants(&mut g, "CV", &["laten"]);
    constants(&mut g, "INF_iv", &["studeren"]);
    constants(&mut g, "INF_tv", &["eten", "doen"]);
    constants(&mut g, "INF_c.su", &["beloven"]);
    constants(&mut g, "INF_c.obj", &["vragen"]);
    constants(&mut g, "TE", &["te"]);
    constants(&mut g, "ADV", &["vandaag"]);

    let matrix = ["NP", "TV", "NP", "VC"];
    let matrix_adv = ["NP", "TV", "NP", "VC", "ADV"];
    let causative = ["NP", "TV", "NP", "NP", "CV", "VC"];
    let causative_adv = ["NP", "TV", "NP", "NP", "CV", "VC", "ADV"];

    g.rules = vec![
        a1_schemes(Rule::new(
            "A1",
            "S",
            recipe(&[&[(1, 1), (2, 1), (3, 1), (4, 1), (4, 2)]]),
            &matrix,
        )),
        a2_schemes(Rule::new(
            "A2",
            "S",
            recipe(&[&[(1, 1), (2, 1), (3, 1), (4, 1), (6, 1), (5, 1), (6, 2)]]),
            &causative,
        )),
        Rule::new("A3", "VC", recipe(&[&[(1, 1)], &[(2, 1)]]), &["TE", "INF_iv"])
            .with_scheme(Scheme::default().incoming(2)),
        Rule::new(
            "A4",
            "VC",
            recipe(&[&[(3, 1), (1, 1)], &[(2, 1)]]),
            &["TE", "INF_tv", "NP"],
        )
        .with_scheme(Scheme::default().incoming(2)),
        Rule::new(
            "A5",
            "VC",
            recipe(&[&[(1, 1), (2, 1)], &[(3, 1), (4, 1), (4, 2)]]),
            &["NP", "TE", "INF_c", "VC"],
        )
        .with_scheme(
            Scheme::when(&[(3, "su")])
                .incoming(3)
                .pass_incoming(4, Some(Scope::Subject)),
        )
        .with_scheme(
            Scheme::when(&[(3, "obj")])
                .incoming(3)
                .pass_np(4, 1, Scope::Object),
        ),
        Rule::new(
            "A6",
            "VC",
            recipe(&[&[(1, 1), (2, 1), (4, 1)], &[(3, 1), (5, 1), (5, 2)]]),
            &["NP", "TE", "INF_c", "CV", "VC"],
        )
        .with_scheme(
            Scheme::when(&[(3, "su")])
                .direct_as(3, 1, Scope::Object)
                .incoming(4)
                .pass_np(5, 1, Scope::Subject),
        )
        .with_scheme(
            Scheme::when(&[(3, "obj")])
                .direct_as(3, 1, Scope::Object)
                .incoming(4)
                .pass_np(5, 1, Scope::Object)
                .flag("obj-causee-propagation"),
        ),
        a1_schemes(Rule::new(
            "A1^m",
            "S",
            recipe(&[&[(1, 1), (2, 1), (3, 1), (5, 1), (4, 1), (4, 2)]]),
            &matrix_adv,
        )),
        a1_schemes(Rule::new(
            "A1^i",
            "S",
            recipe(&[&[(5, 1), (2, 1), (1, 1), (3, 1), (4, 1), (4, 2)]]),
            &matrix_adv,
        )),
        a2_schemes(Rule::new(
            "A2^m",
            "S",
            recipe(&[&[(1, 1), (2, 1), (3, 1), (4, 1), (7, 1), (6, 1), (5, 1), (6, 2)]]),
            &causative_adv,
        )),
        a2_schemes(Rule::new(
            "A2^i",
            "S",
            recipe(&[&[(7, 1), (2, 1), (1, 1), (3, 1), (4, 1), (6, 1), (5, 1), (6, 2)]]),
            &causative_adv,
        )),
    ];
    g
}

pub fn raising_grammar() -> Grammar {
    let mut g = Grammar::new("raising", "S");
    g.nonterminals = vec![
        NonTerminal::new("S", 1),
        NonTerminal::new("SUB", 2),
        NonTerminal::new("PREF", 1).with_inner(InnerPhrases::SubjectVerb),
        NonTerminal::new("NP", 1).noun(),
        NonTerminal::new("INF_iv", 1).verb(),
        NonTerminal::new("INF_tv", 1).verb(),
        NonTerminal::new("RV", 1).verb(),
    ];
    constants(&mut g, "PREF", &["Iemand ziet", "de docent ziet"]);
    constants(&mut g, "NP", &EXAMPLE_NPS);
    constants(&mut g, "INF_iv", &["studeren"]);
    constants(&mut g, "INF_tv", &["eten"]);
    constants(&mut g, "RV", &["leren", "helpen"]);

    g.rules = vec![
        Rule::new("B1", "S", recipe(&[&[(1, 1), (2, 1), (2, 2)]]), &["PREF", "SUB"]),
        Rule::new("B2", "SUB", recipe(&[&[(1, 1)], &[(2, 1)]]), &["NP", "INF_iv"])
            .with_scheme(Scheme::default().direct(2, 1)),
        Rule::new(
            "B3",
            "SUB",
            recipe(&[&[(1, 1), (2, 1)], &[(3, 1)]]),
            &["NP", "NP", "INF_tv"],
        )
        .with_scheme(Scheme::default().direct(3, 1)),
        Rule::new(
            "B4",
            "SUB",
            recipe(&[&[(1, 1), (3, 1)], &[(2, 1), (3, 2)]]),
            &["NP", "RV", "SUB"],
        )
        .with_scheme(Scheme::default().direct(2, 1)),
    ];
    g
}

/// Looks up a built-in grammar by id (`control` or `raising`).
pub fn by_id(id: &str) -> Option<Grammar> {
    match id {
        "control" => Some(control_grammar()),
        "raising" => Some(raising_grammar()),
        _ => None,
    }
}
