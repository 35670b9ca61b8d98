//! Empirical-formula parsing.
//!
//! Supported grammar: element symbols with optional decimal subscripts,
//! parenthesized (or bracketed) groups with multipliers, hydration parts
//! separated by a middle dot (or `*`) with a leading multiplier, and
//! oxidation-state / charge markers such as `Fe3+` or `Na+`, which are
//! stripped. Whitespace is ignored.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{is_element_symbol, ElementComposition};

/// Element counts plus the derived atom fractions.
#[derive(Debug, Clone)]
pub struct ParsedFormula {
    pub counts: BTreeMap<String, f64>,
    pub composition: ElementComposition,
}

pub fn parse_formula(text: &str) -> Result<ParsedFormula> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() {
        return Err(Error::Formula("empty formula".into()));
    }
    let mut counts = BTreeMap::new();
    // Hydration / adduct parts: "CaSO4·2H2O" is CaSO4 plus 2 x H2O.
    for part in cleaned.split(['·', '⋅', '*']) {
        if part.is_empty() {
            return Err(Error::Formula("empty formula part".into()));
        }
        let mut parser = Parser { chars: part.chars().collect(), at: 0 };
        let multiplier = parser.number().unwrap_or(1.0);
        let part_counts = parser.group_body(0)?;
        if !parser.done() {
            return Err(Error::Formula(format!(
                "unexpected `{}` in `{part}`",
                parser.rest()
            )));
        }
        for (element, n) in part_counts {
            *counts.entry(element).or_insert(0.0) += multiplier * n;
        }
    }
    if counts.is_empty() {
        return Err(Error::Formula(format!("no elements in `{text}`")));
    }
    let composition =
        ElementComposition::from_weights(counts.iter().map(|(k, v)| (k.clone(), *v)))?;
    Ok(ParsedFormula { counts, composition })
}

struct Parser {
    chars: Vec<char>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.at += 1;
        }
        c
    }

    fn done(&self) -> bool {
        self.at >= self.chars.len()
    }

    fn rest(&self) -> String {
        self.chars[self.at..].iter().collect()
    }

    /// A decimal number: digits with an optional fractional part.
    fn number(&mut self) -> Option<f64> {
        let start = self.at;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.at += 1;
        }
        if self.peek() == Some('.') && self.chars.get(self.at + 1).is_some_and(|c| c.is_ascii_digit())
        {
            self.at += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.at += 1;
            }
        }
        if self.at == start {
            return None;
        }
        let text: String = self.chars[start..self.at].iter().collect();
        text.parse().ok()
    }

    /// Parse groups until the closing bracket of `depth` (or end of input).
    fn group_body(&mut self, depth: usize) -> Result<BTreeMap<String, f64>> {
        let mut counts = BTreeMap::new();
        loop {
            match self.peek() {
                None => {
                    if depth > 0 {
                        return Err(Error::Formula("unbalanced parentheses".into()));
                    }
                    return Ok(counts);
                }
                Some(')') | Some(']') => {
                    if depth == 0 {
                        return Err(Error::Formula("unbalanced parentheses".into()));
                    }
                    return Ok(counts);
                }
                Some('(') | Some('[') => {
                    self.bump();
                    let inner = self.group_body(depth + 1)?;
                    match self.bump() {
                        Some(')') | Some(']') => {}
                        _ => return Err(Error::Formula("unbalanced parentheses".into())),
                    }
                    let mult = self.number().unwrap_or(1.0);
                    for (element, n) in inner {
                        *counts.entry(element).or_insert(0.0) += mult * n;
                    }
                }
                Some(c) if c.is_ascii_uppercase() => {
                    let (element, count) = self.element()?;
                    *counts.entry(element).or_insert(0.0) += count;
                }
                Some(c) => {
                    return Err(Error::Formula(format!("unexpected character `{c}`")));
                }
            }
        }
    }

    /// One element with optional charge marker and subscript.
    fn element(&mut self) -> Result<(String, f64)> {
        let mut symbol = String::new();
        symbol.push(self.bump().expect("caller checked uppercase"));
        // Longest valid symbol wins: try two lowercase letters, then one.
        let mut tail = String::new();
        while tail.len() < 2 && self.peek().is_some_and(|c| c.is_ascii_lowercase()) {
            tail.push(self.bump().unwrap());
        }
        let full = loop {
            let candidate = format!("{symbol}{tail}");
            if is_element_symbol(&candidate) {
                break candidate;
            }
            if tail.is_empty() {
                return Err(Error::Formula(format!("unknown element symbol `{candidate}`")));
            }
            self.at -= 1;
            tail.pop();
        };

        // Oxidation-state marker: integer digits directly followed by +/-
        // ("Fe3+"), or a bare +/- ("Na+"). Stripped; a subscript may follow.
        let save = self.at;
        let leading = self.number();
        match (leading, self.peek()) {
            (Some(n), Some('+' | '-')) if n.fract() == 0.0 => {
                self.bump();
                let count = self.number().unwrap_or(1.0);
                Ok((full, count))
            }
            (None, Some('+' | '-')) => {
                self.bump();
                let count = self.number().unwrap_or(1.0);
                Ok((full, count))
            }
            (Some(n), _) => Ok((full, n)),
            (None, _) => {
                self.at = save;
                Ok((full, 1.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(text: &str) -> BTreeMap<String, f64> {
        parse_formula(text).unwrap().counts
    }

    fn count_of(text: &str, element: &str) -> f64 {
        counts(text).get(element).copied().unwrap_or(0.0)
    }

    #[test]
    fn quartz() {
        let p = parse_formula("SiO2").unwrap();
        assert_eq!(p.counts.get("Si"), Some(&1.0));
        assert_eq!(p.counts.get("O"), Some(&2.0));
        assert!((p.composition.fraction("Si") - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.composition.fraction("O") - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn forsterite() {
        let p = parse_formula("Mg2SiO4").unwrap();
        assert!((p.composition.fraction("Mg") - 2.0 / 7.0).abs() < 1e-12);
        assert!((p.composition.fraction("Si") - 1.0 / 7.0).abs() < 1e-12);
        assert!((p.composition.fraction("O") - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn dolomite_parentheses() {
        let c = counts("CaMg(CO3)2");
        assert_eq!(c.get("Ca"), Some(&1.0));
        assert_eq!(c.get("Mg"), Some(&1.0));
        assert_eq!(c.get("C"), Some(&2.0));
        assert_eq!(c.get("O"), Some(&6.0));
    }

    #[test]
    fn gypsum_hydrate() {
        let c = counts("CaSO4·2H2O");
        assert_eq!(c.get("Ca"), Some(&1.0));
        assert_eq!(c.get("S"), Some(&1.0));
        assert_eq!(c.get("O"), Some(&6.0));
        assert_eq!(c.get("H"), Some(&4.0));
    }

    #[test]
    fn magnetite_charge_markers() {
        // Fe(2+) Fe(3+)2 O4
        let c = counts("Fe2+Fe3+2O4");
        assert_eq!(c.get("Fe"), Some(&3.0));
        assert_eq!(c.get("O"), Some(&4.0));
    }

    #[test]
    fn bare_charges_stripped() {
        assert_eq!(count_of("Na+Cl-", "Na"), 1.0);
        assert_eq!(count_of("Na+Cl-", "Cl"), 1.0);
    }

    #[test]
    fn decimal_subscripts() {
        let c = counts("Fe1.5Mg0.5SiO4");
        assert_eq!(c.get("Fe"), Some(&1.5));
        assert_eq!(c.get("Mg"), Some(&0.5));
    }

    #[test]
    fn nested_groups_and_brackets() {
        let c = counts("Al2[Si2O5](OH)4"); // kaolinite
        assert_eq!(c.get("Al"), Some(&2.0));
        assert_eq!(c.get("Si"), Some(&2.0));
        assert_eq!(c.get("O"), Some(&9.0));
        assert_eq!(c.get("H"), Some(&4.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_formula("Xx2"), Err(Error::Formula(_))));
        assert!(matches!(parse_formula("Ca(CO3"), Err(Error::Formula(_))));
        assert!(matches!(parse_formula("Ca)CO3("), Err(Error::Formula(_))));
        assert!(matches!(parse_formula(""), Err(Error::Formula(_))));
        assert!(matches!(parse_formula("2"), Err(Error::Formula(_))));
    }

    #[test]
    fn twenty_formula_golden_set() {
        // Hand-counted expectations: (formula, [(element, count)]).
        let golden: Vec<(&str, Vec<(&str, f64)>)> = vec![
            ("SiO2", vec![("Si", 1.0), ("O", 2.0)]),
            ("Mg2SiO4", vec![("Mg", 2.0), ("Si", 1.0), ("O", 4.0)]),
            ("Fe2SiO4", vec![("Fe", 2.0), ("Si", 1.0), ("O", 4.0)]),
            ("CaCO3", vec![("Ca", 1.0), ("C", 1.0), ("O", 3.0)]),
            ("CaMg(CO3)2", vec![("Ca", 1.0), ("Mg", 1.0), ("C", 2.0), ("O", 6.0)]),
            ("Al2O3", vec![("Al", 2.0), ("O", 3.0)]),
            ("TiO2", vec![("Ti", 1.0), ("O", 2.0)]),
            ("Fe2O3", vec![("Fe", 2.0), ("O", 3.0)]),
            ("Fe2+Fe3+2O4", vec![("Fe", 3.0), ("O", 4.0)]),
            ("CaSO4·2H2O", vec![("Ca", 1.0), ("S", 1.0), ("O", 6.0), ("H", 4.0)]),
            ("NaAlSi3O8", vec![("Na", 1.0), ("Al", 1.0), ("Si", 3.0), ("O", 8.0)]),
            ("KAlSi3O8", vec![("K", 1.0), ("Al", 1.0), ("Si", 3.0), ("O", 8.0)]),
            ("Mg(OH)2", vec![("Mg", 1.0), ("O", 2.0), ("H", 2.0)]),
            ("Ca(OH)2", vec![("Ca", 1.0), ("O", 2.0), ("H", 2.0)]),
            ("LiAlSi2O6", vec![("Li", 1.0), ("Al", 1.0), ("Si", 2.0), ("O", 6.0)]),
            ("CaSiO3", vec![("Ca", 1.0), ("Si", 1.0), ("O", 3.0)]),
            ("FeTiO3", vec![("Fe", 1.0), ("Ti", 1.0), ("O", 3.0)]),
            (
                "Al2[Si2O5](OH)4",
                vec![("Al", 2.0), ("Si", 2.0), ("O", 9.0), ("H", 4.0)],
            ),
            (
                "Fe1.5Mg0.5SiO4",
                vec![("Fe", 1.5), ("Mg", 0.5), ("Si", 1.0), ("O", 4.0)],
            ),
            (
                "Na2+2Mg3Al2[Si8O22](OH)2",
                vec![
                    ("Na", 2.0),
                    ("Mg", 3.0),
                    ("Al", 2.0),
                    ("Si", 8.0),
                    ("O", 24.0),
                    ("H", 2.0),
                ],
            ),
        ];
        assert_eq!(golden.len(), 20);
        for (formula, expected) in golden {
            let got = counts(formula);
            assert_eq!(got.len(), expected.len(), "{formula}: {got:?}");
            let total: f64 = expected.iter().map(|(_, n)| n).sum();
            let parsed = parse_formula(formula).unwrap();
            for (element, n) in expected {
                assert_eq!(got.get(element), Some(&n), "{formula} / {element}");
                assert!(
                    (parsed.composition.fraction(element) - n / total).abs() < 1e-12,
                    "{formula} fraction of {element}"
                );
            }
        }
    }
}
