use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{Grammar, Marking, PassValue, Rule, SubjectSource, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    ZeroArity,
    DuplicateName,
    UnknownSymbol,
    BadSubtype,
    BadStart,
    ConstantArity,
    EmptyCoordinate,
    BadInner,
    DuplicateLabel,
    RecipeArity,
    CoordOutOfRange,
    Linearity,
    BadScheme,
    MissingScheme,
    Unreachable,
    NonProductive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Result of [`Grammar::validate`]. Violations break an invariant; warnings
/// flag unreachable or non-productive non-terminals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.violations
            .iter()
            .chain(&self.warnings)
            .any(|d| d.kind == kind)
    }

    fn violation(&mut self, kind: DiagnosticKind, message: String) {
        self.violations.push(Diagnostic { kind, message });
    }

    fn warning(&mut self, kind: DiagnosticKind, message: String) {
        self.warnings.push(Diagnostic { kind, message });
    }
}

/// Non-terminals that receive an understood subject from some scheme.
pub(crate) fn clause_valued(g: &Grammar) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for rule in &g.rules {
        for scheme in &rule.schemes {
            for p in &scheme.passes {
                if let Some(sym) = rule.rhs.get(p.target) {
                    out.insert(sym.name.clone());
                }
            }
        }
    }
    out
}

/// All concrete right-hand sides a rule can be instantiated with.
pub(crate) fn rhs_combinations(g: &Grammar, rule: &Rule) -> Vec<Vec<Symbol>> {
    let mut combos: Vec<Vec<Symbol>> = vec![Vec::new()];
    for sym in &rule.rhs {
        let options: Vec<Symbol> = match (&sym.subtype, g.nonterminal(&sym.name)) {
            (None, Some(nt)) => nt.symbols(),
            _ => vec![sym.clone()],
        };
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut next = prefix.clone();
                    next.push(o.clone());
                    next
                })
            })
            .collect();
    }
    combos
}

fn check_symbol(g: &Grammar, sym: &Symbol, pinned: bool, ctx: &str, report: &mut ValidationReport) -> bool {
    let Some(nt) = g.nonterminal(&sym.name) else {
        report.violation(
            DiagnosticKind::UnknownSymbol,
            format!("{ctx}: unknown non-terminal `{}`", sym.name),
        );
        return false;
    };
    match &sym.subtype {
        Some(t) if !nt.subtypes.contains(t) => {
            report.violation(
                DiagnosticKind::BadSubtype,
                format!("{ctx}: `{}` has no subtype `{t}`", sym.name),
            );
            false
        }
        None if pinned && !nt.subtypes.is_empty() => {
            report.violation(
                DiagnosticKind::BadSubtype,
                format!("{ctx}: subtyped `{}` must name a subtype", sym.name),
            );
            false
        }
        _ => true,
    }
}

pub(crate) fn validate(g: &Grammar) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    for nt in &g.nonterminals {
        if nt.arity == 0 {
            report.violation(
                DiagnosticKind::ZeroArity,
                format!("non-terminal `{}` has arity 0", nt.name),
            );
        }
        if !seen.insert(nt.name.as_str()) {
            report.violation(
                DiagnosticKind::DuplicateName,
                format!("non-terminal `{}` declared twice", nt.name),
            );
        }
        let tags: HashSet<_> = nt.subtypes.iter().collect();
        if tags.len() != nt.subtypes.len() {
            report.violation(
                DiagnosticKind::BadSubtype,
                format!("non-terminal `{}` repeats a subtype", nt.name),
            );
        }
        if nt.inner.is_some() && (nt.arity != 1 || nt.marking != Marking::Unmarked) {
            report.violation(
                DiagnosticKind::BadInner,
                format!("`{}`: inner phrases need an unmarked arity-1 category", nt.name),
            );
        }
    }

    match g.nonterminal(&g.start) {
        None => report.violation(
            DiagnosticKind::BadStart,
            format!("start symbol `{}` is not declared", g.start),
        ),
        Some(nt) if nt.arity != 1 => report.violation(
            DiagnosticKind::BadStart,
            format!("start symbol `{}` has arity {}, expected 1", g.start, nt.arity),
        ),
        _ => {}
    }

    for (sym, values) in &g.constants {
        let ctx = format!("constants of {sym}");
        if !check_symbol(g, sym, true, &ctx, &mut report) {
            continue;
        }
        let nt = g.nonterminal(&sym.name).expect("checked");
        for v in values {
            if v.arity() != nt.arity {
                report.violation(
                    DiagnosticKind::ConstantArity,
                    format!("{ctx}: {v} has {} coordinates, expected {}", v.arity(), nt.arity),
                );
            }
            if v.coords().iter().any(Vec::is_empty) {
                report.violation(
                    DiagnosticKind::EmptyCoordinate,
                    format!("{ctx}: {v} has an empty coordinate"),
                );
            }
            if nt.inner.is_some() && v.words().count() < 2 {
                report.violation(
                    DiagnosticKind::BadInner,
                    format!("{ctx}: {v} needs a noun phrase and a verb"),
                );
            }
        }
    }

    let clauses = clause_valued(g);
    let mut labels = HashSet::new();
    for rule in &g.rules {
        let ctx = format!("rule {}", rule.label);
        if !labels.insert(rule.label.as_str()) {
            report.violation(DiagnosticKind::DuplicateLabel, format!("{ctx}: label used twice"));
        }
        let mut symbols_ok = check_symbol(g, &rule.lhs, true, &ctx, &mut report);
        for sym in &rule.rhs {
            symbols_ok &= check_symbol(g, sym, false, &ctx, &mut report);
        }
        if !symbols_ok {
            continue;
        }
        check_recipe(g, rule, &ctx, &mut report);
        check_schemes(g, rule, &clauses, &ctx, &mut report);
    }

    reachability(g, &mut report);
    productivity(g, &mut report);
    report
}

fn check_recipe(g: &Grammar, rule: &Rule, ctx: &str, report: &mut ValidationReport) {
    let lhs_arity = g.nonterminal(&rule.lhs.name).map_or(0, |n| n.arity);
    if rule.recipe.len() != lhs_arity {
        report.violation(
            DiagnosticKind::RecipeArity,
            format!(
                "{ctx}: recipe has {} coordinates, `{}` has arity {lhs_arity}",
                rule.recipe.len(),
                rule.lhs.name
            ),
        );
    }
    if rule.recipe.iter().any(Vec::is_empty) {
        report.violation(DiagnosticKind::EmptyCoordinate, format!("{ctx}: empty recipe coordinate"));
    }
    let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
    for r in rule.recipe.iter().flatten() {
        let Some(sym) = rule.rhs.get(r.arg) else {
            report.violation(
                DiagnosticKind::CoordOutOfRange,
                format!("{ctx}: x{}.{} refers past the right-hand side", r.arg + 1, r.coord + 1),
            );
            continue;
        };
        let arity = g.nonterminal(&sym.name).map_or(0, |n| n.arity);
        if r.coord >= arity {
            report.violation(
                DiagnosticKind::CoordOutOfRange,
                format!("{ctx}: x{}.{} but `{}` has arity {arity}", r.arg + 1, r.coord + 1, sym.name),
            );
            continue;
        }
        *uses.entry((r.arg, r.coord)).or_default() += 1;
    }
    for (i, sym) in rule.rhs.iter().enumerate() {
        let arity = g.nonterminal(&sym.name).map_or(0, |n| n.arity);
        for k in 0..arity {
            match uses.get(&(i, k)).copied().unwrap_or(0) {
                1 => {}
                0 => report.violation(
                    DiagnosticKind::Linearity,
                    format!("{ctx}: coordinate x{}.{} is never used", i + 1, k + 1),
                ),
                n => report.violation(
                    DiagnosticKind::Linearity,
                    format!("{ctx}: coordinate x{}.{} is used {n} times", i + 1, k + 1),
                ),
            }
        }
    }
}

fn check_schemes(
    g: &Grammar,
    rule: &Rule,
    clauses: &BTreeSet<String>,
    ctx: &str,
    report: &mut ValidationReport,
) {
    let marking = |pos: usize| rule.rhs.get(pos).map(|s| g.marking(&s.name));
    let lhs_clause = clauses.contains(&rule.lhs.name);

    for scheme in &rule.schemes {
        for (pos, tag) in &scheme.when {
            let ok = rule
                .rhs
                .get(*pos)
                .and_then(|s| g.nonterminal(&s.name))
                .is_some_and(|nt| nt.subtypes.contains(tag));
            if !ok {
                report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: condition {}={tag} does not name a subtype", pos + 1),
                );
            }
        }
        for s in &scheme.subjects {
            if marking(s.position) != Some(Marking::Verb) {
                report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: subject given for non-verbal position {}", s.position + 1),
                );
            }
            match s.source {
                SubjectSource::Direct(np) if marking(np) != Some(Marking::Noun) => {
                    report.violation(
                        DiagnosticKind::BadScheme,
                        format!("{ctx}: np({}) is not a noun-marked position", np + 1),
                    );
                }
                SubjectSource::Incoming if !lhs_clause => report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: `incoming` on a rule whose left-hand side receives nothing"),
                ),
                _ => {}
            }
        }
        for p in &scheme.passes {
            if marking(p.target) != Some(Marking::Unmarked) {
                report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: pass to marked or missing position {}", p.target + 1),
                );
            }
            match p.value {
                PassValue::Np(np) if marking(np) != Some(Marking::Noun) => report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: np({}) is not a noun-marked position", np + 1),
                ),
                PassValue::SameAsIncoming if !lhs_clause => report.violation(
                    DiagnosticKind::BadScheme,
                    format!("{ctx}: `incoming` on a rule whose left-hand side receives nothing"),
                ),
                _ => {}
            }
        }
    }

    let verbal: Vec<usize> = (0..rule.rhs.len())
        .filter(|&i| marking(i) == Some(Marking::Verb))
        .collect();
    let clause_children: Vec<usize> = (0..rule.rhs.len())
        .filter(|&i| clauses.contains(&rule.rhs[i].name))
        .collect();
    if verbal.is_empty() && clause_children.is_empty() {
        return;
    }
    for combo in rhs_combinations(g, rule) {
        let shown: Vec<String> = combo.iter().map(Symbol::to_string).collect();
        let Some(scheme) = rule.scheme_for(&combo) else {
            report.violation(
                DiagnosticKind::MissingScheme,
                format!("{ctx}: no inheritance scheme for {}", shown.join(" ")),
            );
            continue;
        };
        for &v in &verbal {
            if scheme.subject_of(v).is_none() {
                report.violation(
                    DiagnosticKind::MissingScheme,
                    format!("{ctx}: verb at {} has no subject under {}", v + 1, shown.join(" ")),
                );
            }
        }
        for &c in &clause_children {
            if scheme.pass_to(c).is_none() {
                report.violation(
                    DiagnosticKind::MissingScheme,
                    format!("{ctx}: clause at {} receives nothing under {}", c + 1, shown.join(" ")),
                );
            }
        }
    }
}

fn reachability(g: &Grammar, report: &mut ValidationReport) {
    let mut reached: HashSet<&str> = HashSet::new();
    let mut stack = vec![g.start.as_str()];
    while let Some(n) = stack.pop() {
        if !reached.insert(n) {
            continue;
        }
        for rule in g.rules.iter().filter(|r| r.lhs.name == n) {
            stack.extend(rule.rhs.iter().map(|s| s.name.as_str()));
        }
    }
    for nt in &g.nonterminals {
        if !reached.contains(nt.name.as_str()) {
            report.warning(
                DiagnosticKind::Unreachable,
                format!("`{}` is unreachable from `{}`", nt.name, g.start),
            );
        }
    }
}

fn productivity(g: &Grammar, report: &mut ValidationReport) {
    let mut productive: HashSet<&str> = g
        .constants
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(s, _)| s.name.as_str())
        .collect();
    loop {
        let before = productive.len();
        for rule in &g.rules {
            if rule.rhs.iter().all(|s| productive.contains(s.name.as_str())) {
                productive.insert(rule.lhs.name.as_str());
            }
        }
        if productive.len() == before {
            break;
        }
    }
    for nt in &g.nonterminals {
        if !productive.contains(nt.name.as_str()) {
            report.warning(
                DiagnosticKind::NonProductive,
                format!("`{}` derives no string", nt.name),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn tiny() -> Grammar {
        let mut g = Grammar::new("tiny", "S");
        g.nonterminals.push(NonTerminal::new("S", 1));
        g.nonterminals.push(NonTerminal::new("A", 1).noun());
        g.add_constant(Symbol::plain("A"), StringTuple::from_strs(&["a"]));
        g.rules
            .push(Rule::new("R1", "S", recipe(&[&[(1, 1), (2, 1)]]), &["A", "A"]));
        g
    }

    #[test]
    fn tiny_grammar_is_valid() {
        let r = tiny().validate();
        assert!(r.is_valid(), "{:?}", r.violations);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn duplicated_coordinate_is_a_linearity_violation() {
        let mut g = tiny();
        g.rules[0].recipe = recipe(&[&[(1, 1), (1, 1), (2, 1)]]);
        let r = g.validate();
        assert!(r.violations.iter().any(|d| d.kind == DiagnosticKind::Linearity));
    }

    #[test]
    fn deleted_coordinate_is_a_linearity_violation() {
        let mut g = tiny();
        g.rules[0].recipe = recipe(&[&[(1, 1)]]);
        assert!(g.validate().has(DiagnosticKind::Linearity));
    }

    #[test]
    fn vacuous_nonterminal_is_flagged_non_productive() {
        let mut g = tiny();
        g.nonterminals.push(NonTerminal::new("X", 1));
        let r = g.validate();
        assert!(r.is_valid());
        assert!(r
            .warnings
            .iter()
            .any(|d| d.kind == DiagnosticKind::NonProductive && d.message.contains("`X`")));
        assert!(r.warnings.iter().any(|d| d.kind == DiagnosticKind::Unreachable));
    }

    #[test]
    fn constant_arity_and_empty_coordinates() {
        let mut g = tiny();
        g.add_constant(Symbol::plain("A"), StringTuple::from_strs(&["b", "c"]));
        g.add_constant(Symbol::plain("A"), StringTuple(vec![vec![]]));
        let r = g.validate();
        assert!(r.has(DiagnosticKind::ConstantArity));
        assert!(r.has(DiagnosticKind::EmptyCoordinate));
    }

    #[test]
    fn start_must_have_arity_one() {
        let mut g = tiny();
        g.nonterminals[0].arity = 2;
        assert!(g.validate().has(DiagnosticKind::BadStart));
    }

    #[test]
    fn out_of_range_reference() {
        let mut g = tiny();
        g.rules[0].recipe = recipe(&[&[(1, 1), (2, 1), (2, 2)]]);
        assert!(g.validate().has(DiagnosticKind::CoordOutOfRange));
    }
}
