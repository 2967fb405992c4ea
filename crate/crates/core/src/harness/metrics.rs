//! Accuracy breakdowns, consistency and the random baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::AnnotatedSample;
use crate::probe::PredictionRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction for {sentence} verb {verb} has no rule label")]
    MissingRule { sentence: String, verb: usize },
    #[error("prediction for {sentence} has {verbs} verbs but no candidate nouns")]
    NoNouns { sentence: String, verbs: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    NNouns,
    Depth,
    Rule,
    Scope,
}

impl GroupKey {
    pub const ALL: [GroupKey; 4] = [GroupKey::NNouns, GroupKey::Depth, GroupKey::Rule, GroupKey::Scope];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "n_nouns" | "nouns" => Some(GroupKey::NNouns),
            "depth" => Some(GroupKey::Depth),
            "rule" => Some(GroupKey::Rule),
            "scope" => Some(GroupKey::Scope),
            _ => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            GroupKey::NNouns => "By number of nouns",
            GroupKey::Depth => "By tree depth",
            GroupKey::Rule => "By rule",
            GroupKey::Scope => "By control scope",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Correct verb predictions over all verb predictions; `None` when there
/// are no verbs.
pub fn accuracy(preds: &[PredictionRecord]) -> Option<f64> {
    let (c, t) = counts(preds);
    (t > 0).then(|| c as f64 / t as f64)
}

fn counts(preds: &[PredictionRecord]) -> (usize, usize) {
    preds.iter().flat_map(|p| &p.verbs).fold((0, 0), |(c, t), v| (c + usize::from(v.correct()), t + 1))
}

/// Maps adverb variants (`A1^m`, `A1^i`) and their base rule to a combined
/// `A1^X` label, for every base that has variants among `labels`.
pub fn variant_aliases<'a>(labels: impl IntoIterator<Item = &'a str>) -> HashMap<String, String> {
    let labels: BTreeSet<&str> = labels.into_iter().collect();
    let bases: BTreeSet<&str> = labels.iter().filter_map(|l| l.split_once('^').map(|(b, _)| b)).collect();
    labels
        .iter()
        .filter_map(|&l| {
            let base = l.split('^').next().unwrap_or(l);
            bases.contains(base).then(|| (l.to_owned(), format!("{base}^X")))
        })
        .collect()
}

/// Sort key keeping numeric groups numeric and scopes in a fixed order.
fn order(key: GroupKey, label: &str) -> (usize, String) {
    match key {
        GroupKey::NNouns | GroupKey::Depth => (label.parse().unwrap_or(usize::MAX), String::new()),
        GroupKey::Scope => (
            match label {
                "subject" => 0,
                "object" => 1,
                _ => 2,
            },
            String::new(),
        ),
        GroupKey::Rule => (0, label.to_owned()),
    }
}

/// Per-group accuracy and counts, in display order.
pub fn grouped_accuracy(preds: &[PredictionRecord], key: GroupKey, aggregate_variants: bool) -> Result<Vec<GroupRow>, MetricsError> {
    let aliases = if aggregate_variants && key == GroupKey::Rule {
        variant_aliases(preds.iter().flat_map(|p| p.verbs.iter().map(|v| v.rule.as_str())))
    } else {
        HashMap::new()
    };
    let mut groups: BTreeMap<(usize, String), (String, usize, usize)> = BTreeMap::new();
    for p in preds {
        for (i, v) in p.verbs.iter().enumerate() {
            let label = match key {
                GroupKey::NNouns => p.n_nouns.to_string(),
                GroupKey::Depth => p.depth.to_string(),
                GroupKey::Scope => v.scope.as_str().to_owned(),
                GroupKey::Rule => {
                    if v.rule.is_empty() {
                        return Err(MetricsError::MissingRule {
                            sentence: p.sentence_id.clone(),
                            verb: i,
                        });
                    }
                    aliases.get(&v.rule).cloned().unwrap_or_else(|| v.rule.clone())
                }
            };
            let e = groups.entry(order(key, &label)).or_insert((label, 0, 0));
            e.1 += usize::from(v.correct());
            e.2 += 1;
        }
    }
    Ok(groups
        .into_values()
        .map(|(group, correct, total)| GroupRow {
            group,
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
        .collect())
}

/// Frequency of the most common value.
pub fn modal_frequency(values: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0) as f64 / values.len().max(1) as f64
}

/// Mean over contexts (tree, verb position) of the modal prediction's
/// frequency across realizations. Predictions compare by noun index.
pub fn consistency(preds: &[PredictionRecord]) -> Option<f64> {
    let mut contexts: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for p in preds {
        for (i, v) in p.verbs.iter().enumerate() {
            contexts.entry((p.tree_id, i)).or_default().push(v.predicted);
        }
    }
    (!contexts.is_empty()).then(|| contexts.values().map(|v| modal_frequency(v)).sum::<f64>() / contexts.len() as f64)
}

/// Mean over verb occurrences of 1 / (nouns in the sentence).
pub fn random_baseline(samples: &[AnnotatedSample]) -> Option<f64> {
    mean_inverse(samples.iter().map(|s| (s.n_verbs(), s.n_nouns)))
}

/// The same quantity computed from prediction records.
pub fn random_baseline_of(preds: &[PredictionRecord]) -> Option<f64> {
    mean_inverse(preds.iter().map(|p| (p.verbs.len(), p.n_nouns)))
}

fn mean_inverse(items: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (verbs, nouns) in items {
        if verbs > 0 {
            sum += verbs as f64 / nouns as f64;
            n += verbs;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub provider: Option<String>,
    pub notes: Vec<String>,
    pub overall: Option<f64>,
    pub correct: usize,
    pub total: usize,
    pub by_n_nouns: Vec<GroupRow>,
    pub by_depth: Vec<GroupRow>,
    pub by_rule: Vec<GroupRow>,
    pub by_scope: Vec<GroupRow>,
    pub consistency: Option<f64>,
    pub random_baseline: Option<f64>,
}

impl MetricsReport {
    pub fn build(preds: &[PredictionRecord], aggregate_variants: bool, provider: Option<&str>) -> Result<Self, MetricsError> {
        if let Some(p) = preds.iter().find(|p| p.n_nouns == 0 && !p.verbs.is_empty()) {
            return Err(MetricsError::NoNouns {
                sentence: p.sentence_id.clone(),
                verbs: p.verbs.len(),
            });
        }
        let (correct, total) = counts(preds);
        let mut notes = vec!["training and evaluation data are generated splits; no treebank data is used".to_owned()];
        if provider.is_some_and(|p| ["positional", "oracle", "random-fixed"].contains(&p)) {
            notes.push("embeddings come from a synthetic provider, not a language model".to_owned());
        }
        Ok(MetricsReport {
            provider: provider.map(str::to_owned),
            notes,
            overall: accuracy(preds),
            correct,
            total,
            by_n_nouns: grouped_accuracy(preds, GroupKey::NNouns, aggregate_variants)?,
            by_depth: grouped_accuracy(preds, GroupKey::Depth, aggregate_variants)?,
            by_rule: grouped_accuracy(preds, GroupKey::Rule, aggregate_variants)?,
            by_scope: grouped_accuracy(preds, GroupKey::Scope, aggregate_variants)?,
            consistency: consistency(preds),
            random_baseline: random_baseline_of(preds),
        })
    }

    pub fn group(&self, key: GroupKey) -> &[GroupRow] {
        match key {
            GroupKey::NNouns => &self.by_n_nouns,
            GroupKey::Depth => &self.by_depth,
            GroupKey::Rule => &self.by_rule,
            GroupKey::Scope => &self.by_scope,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables, one per requested grouping.
    pub fn to_text(&self, keys: &[GroupKey]) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
        let mut out = String::new();
        if let Some(p) = &self.provider {
            writeln!(out, "provider: {p}").unwrap();
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        writeln!(out, "{:<18}{}  ({} of {} verbs)", "accuracy", fmt(self.overall), self.correct, self.total).unwrap();
        writeln!(out, "{:<18}{}", "random baseline", fmt(self.random_baseline)).unwrap();
        writeln!(out, "{:<18}{}", "consistency", fmt(self.consistency)).unwrap();
        for &k in keys {
            writeln!(out, "\n{}", k.title()).unwrap();
            writeln!(out, "  {:<10}{:>10}{:>10}{:>10}", "group", "accuracy", "correct", "total").unwrap();
            for r in self.group(k) {
                writeln!(out, "  {:<10}{:>10.4}{:>10}{:>10}", r.group, r.accuracy, r.correct, r.total).unwrap();
            }
        }
        out
    }
}

/// Largest deviation between overall accuracy and the count-weighted mean
/// of each grouping.
pub fn coherence_gap(r: &MetricsReport) -> f64 {
    let Some(overall) = r.overall else { return 0.0 };
    GroupKey::ALL
        .iter()
        .map(|&k| {
            let rows = r.group(k);
            let total: usize = rows.iter().map(|g| g.total).sum();
            let weighted: f64 = rows.iter().map(|g| g.accuracy * g.total as f64).sum::<f64>() / total as f64;
            (weighted - overall).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Scope;
    use crate::probe::VerbPrediction;

    fn rec(tree: usize, depth: usize, n_nouns: usize, verbs: &[(usize, usize, &str, Scope)]) -> PredictionRecord {
        PredictionRecord {
            sentence_id: format!("s{tree}-{depth}"),
            tree_id: tree,
            depth,
            n_nouns,
            verbs: verbs
                .iter()
                .map(|&(predicted, gold, rule, scope)| VerbPrediction {
                    probs: vec![1.0 / n_nouns as f64; n_nouns],
                    predicted,
                    gold,
                    rule: rule.into(),
                    scope,
                })
                .collect(),
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[]), None);
        let p = rec(0, 2, 2, &[(0, 0, "B1", Scope::None), (1, 1, "B2", Scope::None), (0, 0, "B1", Scope::None), (0, 1, "B3", Scope::None)]);
        assert_eq!(accuracy(&[p]), Some(0.75));
    }

    #[test]
    fn grouped_by_depth() {
        let preds = vec![
            rec(0, 2, 2, &[(0, 0, "A1", Scope::None)]),
            rec(1, 3, 2, &[(1, 0, "A3", Scope::Subject)]),
        ];
        let rows = grouped_accuracy(&preds, GroupKey::Depth, true).unwrap();
        let view: Vec<(&str, f64)> = rows.iter().map(|r| (r.group.as_str(), r.accuracy)).collect();
        assert_eq!(view, vec![("2", 1.0), ("3", 0.0)]);
    }

    #[test]
    fn variants_aggregate_with_their_base() {
        let preds = vec![rec(
            0,
            2,
            3,
            &[
                (0, 0, "A1", Scope::None),
                (0, 0, "A1^m", Scope::None),
                (1, 0, "A1^i", Scope::None),
                (0, 0, "A3", Scope::Subject),
                (0, 0, "A10", Scope::None),
            ],
        )];
        let rows = grouped_accuracy(&preds, GroupKey::Rule, true).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(names, vec!["A10", "A1^X", "A3"]);
        assert_eq!(rows[1].total, 3);
        assert_eq!(rows[1].correct, 2);
        let raw = grouped_accuracy(&preds, GroupKey::Rule, false).unwrap();
        assert_eq!(raw.len(), 5);
    }

    #[test]
    fn missing_rule_is_an_error() {
        let preds = vec![rec(0, 2, 2, &[(0, 0, "", Scope::None)])];
        assert!(grouped_accuracy(&preds, GroupKey::Rule, true).is_err());
    }

    #[test]
    fn modal_frequency_example() {
        assert_eq!(modal_frequency(&[1, 1, 1, 2, 3, 1, 1, 1, 2, 1]), 0.7);
    }

    #[test]
    fn consistency_averages_contexts_unweighted() {
        let preds = vec![
            rec(0, 2, 2, &[(0, 0, "B1", Scope::None), (1, 1, "B2", Scope::None)]),
            rec(0, 2, 2, &[(0, 0, "B1", Scope::None), (0, 1, "B2", Scope::None)]),
            rec(1, 2, 3, &[(2, 0, "B1", Scope::None)]),
        ];
        // contexts: (0,0) -> 1.0, (0,1) -> 0.5, (1,0) -> 1.0
        assert!((consistency(&preds).unwrap() - 2.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_baseline_mixes_by_verb() {
        let preds = vec![
            rec(0, 2, 2, &[(0, 0, "B1", Scope::None)]),
            rec(1, 2, 4, &[(0, 0, "B1", Scope::None)]),
        ];
        assert_eq!(random_baseline_of(&preds), Some(0.375));
    }

    #[test]
    fn report_is_coherent_and_stable() {
        let preds = vec![
            rec(0, 2, 2, &[(0, 0, "A1^i", Scope::None), (1, 0, "A3", Scope::Subject)]),
            rec(1, 3, 4, &[(0, 0, "A2^m", Scope::None), (2, 2, "A4", Scope::Object), (3, 2, "A2", Scope::Object)]),
        ];
        let r = MetricsReport::build(&preds, true, Some("positional")).unwrap();
        assert!(coherence_gap(&r) < 1e-12);
        assert_eq!(r.to_json(), MetricsReport::build(&preds, true, Some("positional")).unwrap().to_json());
        let text = r.to_text(&GroupKey::ALL);
        for needle in ["A1^X", "A2^X", "A3", "A4", "subject", "object", "By tree depth"] {
            assert!(text.contains(needle), "{needle} missing from\n{text}");
        }
    }
}
