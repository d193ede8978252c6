use crate::classify::tokenize;
use crate::model::NeighborhoodId;

use super::geometry::NeighborhoodSet;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Target {
    District(NeighborhoodId),
    City,
}

/// Place-name lookup: district names and aliases plus city-level aliases,
/// each stored as a token phrase.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<(Vec<String>, Target)>,
}

/// Words introducing a place ("robbery near 5th and market").
const LOCATIVES: &[&str] = &[
    "at", "in", "near", "on", "around", "by", "outside", "off", "across", "behind",
];
const MAX_PLACE_TOKENS: usize = 6;

impl Gazetteer {
    pub fn new<'a>(
        set: &NeighborhoodSet,
        district_aliases: impl IntoIterator<Item = (&'a str, NeighborhoodId)>,
        city_aliases: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut entries: Vec<(Vec<String>, Target)> = Vec::new();
        let mut push = |tokens: Vec<String>, target: Target| {
            if !tokens.is_empty() && !entries.iter().any(|(t, _)| *t == tokens) {
                entries.push((tokens, target));
            }
        };
        for n in set.iter() {
            push(tokenize(&n.display_name), Target::District(n.id.clone()));
        }
        for (phrase, id) in district_aliases {
            if set.position(&id).is_some() {
                push(tokenize(phrase), Target::District(id));
            }
        }
        for alias in city_aliases {
            push(tokenize(alias), Target::City);
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outcome of scanning one text for place names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentionResult {
    /// Distinct districts, ordered by first occurrence.
    pub mentions: Vec<NeighborhoodId>,
    /// A city alias matched and no district did.
    pub city_level: bool,
    /// Token span `(start, len)` of the first city alias match.
    pub city_span: Option<(usize, usize)>,
    pub tokens: Vec<String>,
}

impl MentionResult {
    /// The phrase to geocode for a city-level mention: the words between the
    /// nearest preceding locative and the alias, followed by the alias.
    /// `None` when the alias stands alone.
    pub fn place_phrase(&self) -> Option<String> {
        let (start, len) = self.city_span?;
        let mut end = start;
        while end > 0 && LOCATIVES.contains(&self.tokens[end - 1].as_str()) {
            end -= 1;
        }
        let mut begin = end;
        while begin > 0
            && end - begin < MAX_PLACE_TOKENS
            && !LOCATIVES.contains(&self.tokens[begin - 1].as_str())
        {
            begin -= 1;
        }
        if begin == end {
            return None;
        }
        let mut words: Vec<&str> = self.tokens[begin..end].iter().map(String::as_str).collect();
        words.extend(self.tokens[start..start + len].iter().map(String::as_str));
        Some(words.join(" "))
    }
}

/// Case-insensitive whole-phrase matching on token boundaries. Where matches
/// overlap the longest wins (then the earliest).
pub fn match_mentions(text: &str, gazetteer: &Gazetteer) -> MentionResult {
    let tokens = tokenize(text);
    let mut found: Vec<(usize, usize, &Target)> = Vec::new();
    for (phrase, target) in &gazetteer.entries {
        if phrase.len() > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - phrase.len() {
            if tokens[start..start + phrase.len()] == phrase[..] {
                found.push((start, phrase.len(), target));
            }
        }
    }
    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut taken = vec![false; tokens.len()];
    let mut selected = Vec::new();
    for (start, len, target) in found {
        if taken[start..start + len].iter().any(|t| *t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        selected.push((start, len, target));
    }
    selected.sort_by_key(|(start, _, _)| *start);

    let mut mentions: Vec<NeighborhoodId> = Vec::new();
    let mut city_span = None;
    for (start, len, target) in selected {
        match target {
            Target::District(id) => {
                if !mentions.contains(id) {
                    mentions.push(id.clone());
                }
            }
            Target::City => {
                city_span.get_or_insert((start, len));
            }
        }
    }
    MentionResult {
        city_level: city_span.is_some() && mentions.is_empty(),
        mentions,
        city_span,
        tokens,
    }
}
