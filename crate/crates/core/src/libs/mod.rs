//! LIBS element-composition estimation.
//!
//! Laser-induced breakdown spectra carry atomic emission lines rather than
//! molecular bands, so this path estimates *elemental* composition and turns
//! it into a mineral prediction by comparing against compositions computed
//! from empirical formulas.

mod cnn;
mod estimate;
mod formula;
mod peaks;
mod synth;

pub use cnn::{predict_libs_cnn, train_libs_cnn, LibsCnnConfig};
pub use estimate::{
    element_weight_vectors, estimate_composition_cosine, match_mineral_by_composition,
    SIMILARITY_FLOOR, WEIGHT_BIN_NM,
};
pub use formula::{parse_formula, ParsedFormula};
pub use peaks::{detect_peaks, Peak, PeakList, MIN_PEAK_HEIGHT, MIN_PEAK_PROMINENCE};
pub use synth::{random_composition, synth_libs_raw, synth_libs_spectrum, MissingLinePolicy};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 118 element symbols, in atomic-number order.
pub const ELEMENT_SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn is_element_symbol(s: &str) -> bool {
    ELEMENT_SYMBOLS.contains(&s)
}

/// An L1-normalized atom-fraction map over chemical elements. Zero entries
/// are dropped, so "present" means "nonzero fraction".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementComposition {
    fractions: BTreeMap<String, f64>,
}

impl ElementComposition {
    /// Normalize nonnegative weights into fractions.
    pub fn from_weights<I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, f64)>,
    {
        let mut fractions = BTreeMap::new();
        let mut total = 0.0;
        for (element, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Formula(format!("invalid weight for {element}")));
            }
            if w > 0.0 {
                *fractions.entry(element).or_insert(0.0) += w;
                total += w;
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroVector);
        }
        for v in fractions.values_mut() {
            *v /= total;
        }
        Ok(Self { fractions })
    }

    pub fn fraction(&self, element: &str) -> f64 {
        self.fractions.get(element).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.fractions.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.fractions.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Cosine similarity over the union of elements.
    pub fn cosine(&self, other: &Self) -> f64 {
        let mut dot = 0.0;
        for (e, v) in self.iter() {
            dot += v * other.fraction(e);
        }
        let na: f64 = self.fractions.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.fractions.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// One emission line of one element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionLine {
    pub element: String,
    /// Ionization stage (1 = neutral).
    pub stage: u8,
    pub wavelength_nm: f64,
    pub intensity: f64,
}

/// Emission lines grouped by element.
#[derive(Debug, Clone, Default)]
pub struct LineTable {
    lines: Vec<EmissionLine>,
    by_element: BTreeMap<String, Vec<usize>>,
}

impl LineTable {
    pub fn new(lines: Vec<EmissionLine>) -> Result<Self> {
        let mut by_element: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, line) in lines.iter().enumerate() {
            if !is_element_symbol(&line.element) {
                return Err(Error::Parse(format!("unknown element symbol `{}`", line.element)));
            }
            if !(line.wavelength_nm > 0.0) || !(line.intensity >= 0.0) {
                return Err(Error::Parse(format!(
                    "bad line for {}: wavelength {}, intensity {}",
                    line.element, line.wavelength_nm, line.intensity
                )));
            }
            by_element.entry(line.element.clone()).or_default().push(i);
        }
        Ok(Self { lines, by_element })
    }

    /// Parse the CSV interchange format
    /// `element,stage,wavelength_nm,rel_intensity` (header row required).
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(format!("line table: {e}")))?;
            if record.len() != 4 {
                return Err(Error::Parse(format!(
                    "line table row has {} fields, expected 4",
                    record.len()
                )));
            }
            lines.push(EmissionLine {
                element: record[0].to_string(),
                stage: record[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad stage `{}`", &record[1])))?,
                wavelength_nm: record[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad wavelength `{}`", &record[2])))?,
                intensity: record[3]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad intensity `{}`", &record[3])))?,
            });
        }
        if lines.is_empty() {
            return Err(Error::Parse("line table is empty".into()));
        }
        Self::new(lines)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv(&std::fs::read(path)?)
    }

    pub fn lines(&self) -> &[EmissionLine] {
        &self.lines
    }

    pub fn lines_for(&self, element: &str) -> impl Iterator<Item = &EmissionLine> {
        self.by_element
            .get(element)
            .into_iter()
            .flat_map(|idx| idx.iter().map(|&i| &self.lines[i]))
    }

    pub fn has_element(&self, element: &str) -> bool {
        self.by_element.contains_key(element)
    }

    /// Elements present in the table, alphabetically.
    pub fn elements(&self) -> Vec<String> {
        self.by_element.keys().cloned().collect()
    }

    /// Elements with at least one line inside `[lo, hi]` nm.
    pub fn elements_within(&self, lo: f64, hi: f64) -> Vec<String> {
        self.by_element
            .iter()
            .filter(|(_, idx)| {
                idx.iter().any(|&i| {
                    let wl = self.lines[i].wavelength_nm;
                    wl >= lo && wl <= hi
                })
            })
            .map(|(e, _)| e.clone())
            .collect()
    }
}

/// A mineral table: display name plus composition from its formula.
pub type MineralTable = Vec<(String, ElementComposition)>;

/// Parse the CSV interchange format `name,formula` (header row required).
pub fn mineral_table_from_csv(bytes: &[u8]) -> Result<MineralTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("mineral table: {e}")))?;
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "mineral table row has {} fields, expected 2",
                record.len()
            )));
        }
        let name = record[0].to_string();
        let parsed = parse_formula(&record[1])
            .map_err(|e| Error::Formula(format!("{name}: {e}")))?;
        out.push((name, parsed.composition));
    }
    if out.is_empty() {
        return Err(Error::Parse("mineral table is empty".into()));
    }
    Ok(out)
}

pub fn load_mineral_table<P: AsRef<Path>>(path: P) -> Result<MineralTable> {
    mineral_table_from_csv(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_normalizes_and_drops_zeros() {
        let comp = ElementComposition::from_weights(vec![
            ("Si".to_string(), 1.0),
            ("O".to_string(), 2.0),
            ("Fe".to_string(), 0.0),
        ])
        .unwrap();
        assert_eq!(comp.len(), 2);
        assert!((comp.fraction("Si") - 1.0 / 3.0).abs() < 1e-12);
        assert!((comp.fraction("O") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(comp.fraction("Fe"), 0.0);
        let total: f64 = comp.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn composition_cosine_cases() {
        let a = ElementComposition::from_weights(vec![("Si".to_string(), 1.0)]).unwrap();
        let b = ElementComposition::from_weights(vec![("O".to_string(), 1.0)]).unwrap();
        assert_eq!(a.cosine(&b), 0.0);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_table_csv_roundtrip() {
        let csv = "element,stage,wavelength_nm,rel_intensity\nNa,1,588.995,8000\nNa,1,589.592,4000\nCa,2,393.366,9000\n";
        let table = LineTable::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(table.elements(), vec!["Ca".to_string(), "Na".to_string()]);
        assert_eq!(table.lines_for("Na").count(), 2);
        assert!(table.has_element("Ca"));
        assert!(!table.has_element("Fe"));
    }

    #[test]
    fn line_table_rejects_bad_rows() {
        assert!(LineTable::from_csv(b"element,stage,wavelength_nm,rel_intensity\nXx,1,500,10\n").is_err());
        assert!(LineTable::from_csv(b"element,stage,wavelength_nm,rel_intensity\nNa,1,-5,10\n").is_err());
        assert!(LineTable::from_csv(b"element,stage,wavelength_nm,rel_intensity\n").is_err());
    }

    #[test]
    fn mineral_table_parses_formulas() {
        let csv = "name,formula\nQuartz,SiO2\nForsterite,Mg2SiO4\n";
        let table = mineral_table_from_csv(csv.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].0, "Quartz");
        assert!((table[1].1.fraction("Mg") - 2.0 / 7.0).abs() < 1e-12);
    }
}
