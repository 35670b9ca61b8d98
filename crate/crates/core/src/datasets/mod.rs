//! Dataset assembly, split protocols and multimodal pairing.

mod manifest;
mod parse;
pub mod synthetic;

pub use manifest::{build_dataset, Manifest, ManifestEntry};
pub use parse::{parse_csv_xy, parse_rruff_text};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, sample_indices};
use crate::spectra::{GridSpec, Spectrum, SpectrumKind};

/// Species names are matched across databases case-insensitively and
/// whitespace-trimmed.
pub fn normalize_species(name: &str) -> String {
    name.trim().to_lowercase()
}

/// A collection of preprocessed fixed-length spectra with species labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    kind: SpectrumKind,
    grid: GridSpec,
    /// Species id -> display name; ids are assigned by first appearance.
    species: Vec<String>,
    samples: Vec<(Spectrum, usize)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabeledDataset {
    pub fn new(kind: SpectrumKind, grid: GridSpec) -> Self {
        Self { kind, grid, species: Vec::new(), samples: Vec::new(), index: HashMap::new() }
    }

    /// An empty dataset with a fixed species index, so class ids line up
    /// with an external list even when some species have no samples yet.
    pub fn with_species(kind: SpectrumKind, grid: GridSpec, species: Vec<String>) -> Self {
        let index = species
            .iter()
            .enumerate()
            .map(|(id, name)| (normalize_species(name), id))
            .collect();
        Self { kind, grid, species, samples: Vec::new(), index }
    }

    /// Append a spectrum, assigning a species id by first appearance of the
    /// normalized name.
    pub fn push(&mut self, spectrum: Spectrum, species: &str) -> Result<usize> {
        if spectrum.grid() != &self.grid {
            return Err(Error::InvalidSpectrum("sample grid differs from dataset grid".into()));
        }
        if spectrum.kind() != self.kind {
            return Err(Error::Manifest(format!(
                "mixed kinds: dataset is {}, sample is {}",
                self.kind,
                spectrum.kind()
            )));
        }
        let key = normalize_species(species);
        let id = match self.index.get(&key) {
            Some(&id) => id,
            None => {
                let id = self.species.len();
                self.species.push(species.trim().to_string());
                self.index.insert(key, id);
                id
            }
        };
        self.samples.push((spectrum, id));
        Ok(id)
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species
    }

    pub fn species_name(&self, id: usize) -> &str {
        &self.species[id]
    }

    pub fn species_id(&self, name: &str) -> Option<usize> {
        self.index.get(&normalize_species(name)).copied()
    }

    pub fn sample(&self, i: usize) -> (&Spectrum, usize) {
        let (s, id) = &self.samples[i];
        (s, *id)
    }

    pub fn samples(&self) -> impl Iterator<Item = (&Spectrum, usize)> {
        self.samples.iter().map(|(s, id)| (s, *id))
    }

    /// Sample indices grouped by species id.
    pub fn indices_by_species(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.species.len()];
        for (i, (_, id)) in self.samples.iter().enumerate() {
            groups[*id].push(i);
        }
        groups
    }

    /// A new dataset holding only `indices`, with the full species index kept
    /// so class ids stay stable across splits.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self {
            kind: self.kind,
            grid: self.grid,
            species: self.species.clone(),
            samples: Vec::with_capacity(indices.len()),
            index: self.index.clone(),
        };
        for &i in indices {
            out.samples.push(self.samples[i].clone());
        }
        out
    }

    /// Flat feature matrix view: one row per sample.
    pub fn rows(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|(s, _)| s.values()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|(_, id)| *id).collect()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut ds: LabeledDataset = serde_json::from_slice(&bytes)?;
        ds.rebuild_index()?;
        Ok(ds)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (id, name) in self.species.iter().enumerate() {
            if self.index.insert(normalize_species(name), id).is_some() {
                return Err(Error::Manifest(format!("duplicate species name `{name}`")));
            }
        }
        for (_, id) in &self.samples {
            if *id >= self.species.len() {
                return Err(Error::Manifest(format!("species id {id} out of range")));
            }
        }
        Ok(())
    }
}

/// How a train/test split was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProtocol {
    /// Three training spectra per species at random, remainder to test.
    ThreePerSpecies,
    /// One random test spectrum per species, remainder to train.
    #[serde(alias = "loo")]
    LeaveOneOutPerSpecies,
}

/// A reproducible train/test partition of a dataset's sample indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitPlan {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Train and test must be disjoint and jointly cover `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n {
                return Err(Error::Config(format!("split index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Config(format!("split index {i} appears twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("split does not cover all samples".into()));
        }
        Ok(())
    }
}

/// Select three training spectra per species at random; the remainder tests.
///
/// Species with three or fewer spectra contribute everything to training and
/// nothing to testing: they cannot be both trained on and fairly tested.
pub fn split_three_per_species(ds: &LabeledDataset, seed: u64) -> SplitPlan {
    split_per_species(ds, seed, SplitProtocol::ThreePerSpecies)
}

/// Hold out one random spectrum per species for testing; singleton species
/// go entirely to training.
pub fn split_leave_one_out(ds: &LabeledDataset, seed: u64) -> SplitPlan {
    split_per_species(ds, seed, SplitProtocol::LeaveOneOutPerSpecies)
}

fn split_per_species(ds: &LabeledDataset, seed: u64, protocol: SplitProtocol) -> SplitPlan {
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in ds.indices_by_species() {
        let mut idx = group;
        idx.shuffle(&mut rng);
        let n_train = match protocol {
            SplitProtocol::ThreePerSpecies => idx.len().min(3),
            SplitProtocol::LeaveOneOutPerSpecies => {
                if idx.len() >= 2 {
                    idx.len() - 1
                } else {
                    idx.len()
                }
            }
        };
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    SplitPlan { protocol, seed, train_indices: train, test_indices: test }
}

/// Two spectra of the same species, one per modality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedSample {
    pub spectrum_a: Spectrum,
    pub spectrum_b: Spectrum,
    pub species_id: usize,
    /// Index of each side in its source dataset, for deduplication.
    pub a_index: usize,
    pub b_index: usize,
}

/// Synthetic multimodal samples built by pairing two datasets by species.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedDataset {
    /// Species id -> name, over the species common to both sources.
    pub species: Vec<String>,
    pub pairs: Vec<PairedSample>,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn indices_by_species(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.species.len()];
        for (i, p) in self.pairs.iter().enumerate() {
            groups[p.species_id].push(i);
        }
        groups
    }
}

/// Pair every `a` spectrum with every `b` spectrum of the same species,
/// subsampling without replacement to `max_pairs_per_species` when the
/// Cartesian product is larger.
pub fn pair_by_species(
    ds_a: &LabeledDataset,
    ds_b: &LabeledDataset,
    max_pairs_per_species: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if ds_a.is_empty() || ds_b.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let groups_a = ds_a.indices_by_species();
    let groups_b = ds_b.indices_by_species();
    let mut species = Vec::new();
    let mut pairs = Vec::new();
    for (id_a, name) in ds_a.species_names().iter().enumerate() {
        let Some(id_b) = ds_b.species_id(name) else { continue };
        let (ia, ib) = (&groups_a[id_a], &groups_b[id_b]);
        if ia.is_empty() || ib.is_empty() {
            continue;
        }
        let paired_id = species.len();
        species.push(name.clone());
        let product: Vec<(usize, usize)> = ia
            .iter()
            .flat_map(|&a| ib.iter().map(move |&b| (a, b)))
            .collect();
        let chosen = cap_pairs(product, max_pairs_per_species, seed, paired_id as u64);
        for (a, b) in chosen {
            pairs.push(PairedSample {
                spectrum_a: ds_a.sample(a).0.clone(),
                spectrum_b: ds_b.sample(b).0.clone(),
                species_id: paired_id,
                a_index: a,
                b_index: b,
            });
        }
    }
    if species.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(PairedDataset { species, pairs })
}

/// Control-experiment pairing: two different spectra of the same species from
/// one dataset (ordered pairs, self-pairs excluded). Singleton species
/// contribute no pairs.
pub fn pair_same_modality(
    ds: &LabeledDataset,
    seed: u64,
    max_pairs_per_species: usize,
) -> Result<PairedDataset> {
    if ds.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let groups = ds.indices_by_species();
    let mut species = Vec::new();
    let mut pairs = Vec::new();
    for (id, name) in ds.species_names().iter().enumerate() {
        let idx = &groups[id];
        if idx.len() < 2 {
            continue;
        }
        let paired_id = species.len();
        species.push(name.clone());
        let product: Vec<(usize, usize)> = idx
            .iter()
            .flat_map(|&a| idx.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
            .collect();
        let chosen = cap_pairs(product, max_pairs_per_species, seed, paired_id as u64);
        for (a, b) in chosen {
            pairs.push(PairedSample {
                spectrum_a: ds.sample(a).0.clone(),
                spectrum_b: ds.sample(b).0.clone(),
                species_id: paired_id,
                a_index: a,
                b_index: b,
            });
        }
    }
    if species.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(PairedDataset { species, pairs })
}

fn cap_pairs(
    product: Vec<(usize, usize)>,
    cap: usize,
    seed: u64,
    stream: u64,
) -> Vec<(usize, usize)> {
    if product.len() <= cap {
        return product;
    }
    let mut rng = rng_from_seed(derive_seed(seed, stream));
    let mut picked: Vec<(usize, usize)> = sample_indices(&mut rng, product.len(), cap)
        .into_iter()
        .map(|i| product[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Default cap on pairs per species, bounding the Cartesian blow-up.
pub const DEFAULT_PAIR_CAP: usize = 50;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Meta;

    fn tiny_spectrum(grid: &GridSpec, peak: usize) -> Spectrum {
        let mut v = vec![0.0; grid.n_points];
        v[peak % grid.n_points] = 1.0;
        Spectrum::new(*grid, v, SpectrumKind::Raman, Meta::new()).unwrap()
    }

    fn dataset(counts: &[(&str, usize)]) -> LabeledDataset {
        let grid = GridSpec::new(0.0, 9.0, 10).unwrap();
        let mut ds = LabeledDataset::new(SpectrumKind::Raman, grid);
        for (name, n) in counts {
            for i in 0..*n {
                ds.push(tiny_spectrum(&grid, i), name).unwrap();
            }
        }
        ds
    }

    #[test]
    fn species_ids_by_first_appearance() {
        let ds = dataset(&[("B", 1), ("A", 1), ("B", 1)]);
        assert_eq!(ds.species_names(), &["B".to_string(), "A".to_string()]);
        assert_eq!(ds.species_id("b"), Some(0));
        assert_eq!(ds.species_id(" a "), Some(1));
        assert_eq!(ds.n_species(), 2);
    }

    #[test]
    fn three_per_species_counts() {
        let ds = dataset(&[("A", 5), ("B", 2), ("C", 3)]);
        let plan = split_three_per_species(&ds, 9);
        plan.validate(ds.len()).unwrap();
        let groups = ds.indices_by_species();
        let count = |ids: &[usize], set: &[usize]| ids.iter().filter(|i| set.contains(i)).count();
        assert_eq!(count(&groups[0], &plan.train_indices), 3);
        assert_eq!(count(&groups[0], &plan.test_indices), 2);
        assert_eq!(count(&groups[1], &plan.train_indices), 2);
        assert_eq!(count(&groups[1], &plan.test_indices), 0);
        assert_eq!(count(&groups[2], &plan.train_indices), 3);
        assert_eq!(count(&groups[2], &plan.test_indices), 0);
    }

    #[test]
    fn leave_one_out_counts() {
        let ds = dataset(&[("A", 4), ("B", 1)]);
        let plan = split_leave_one_out(&ds, 3);
        plan.validate(ds.len()).unwrap();
        assert_eq!(plan.test_indices.len(), 1);
        assert_eq!(plan.train_indices.len(), 4);
        // The singleton went to training.
        let (_, b_id) = ds.sample(4);
        assert_eq!(b_id, 1);
        assert!(plan.train_indices.contains(&4));
    }

    #[test]
    fn splits_are_deterministic() {
        let ds = dataset(&[("A", 7), ("B", 4), ("C", 1)]);
        for seed in [0u64, 1, 99] {
            let p1 = split_three_per_species(&ds, seed);
            let p2 = split_three_per_species(&ds, seed);
            assert_eq!(p1.train_indices, p2.train_indices);
            assert_eq!(p1.test_indices, p2.test_indices);
            let l1 = split_leave_one_out(&ds, seed);
            let l2 = split_leave_one_out(&ds, seed);
            assert_eq!(l1.train_indices, l2.train_indices);
            assert_eq!(l1.test_indices, l2.test_indices);
        }
    }

    #[test]
    fn pairing_product_and_cap() {
        let grid = GridSpec::new(0.0, 9.0, 10).unwrap();
        let mut ds_a = LabeledDataset::new(SpectrumKind::Raman, grid);
        let mut ds_b = LabeledDataset::new(SpectrumKind::Raman, grid);
        for i in 0..2 {
            ds_a.push(tiny_spectrum(&grid, i), "Olivine").unwrap();
        }
        for i in 0..3 {
            ds_b.push(tiny_spectrum(&grid, i), "OLIVINE ").unwrap();
        }
        let paired = pair_by_species(&ds_a, &ds_b, 50, 0).unwrap();
        assert_eq!(paired.len(), 6);
        assert_eq!(paired.species, vec!["Olivine".to_string()]);

        let capped = pair_by_species(&ds_a, &ds_b, 4, 123).unwrap();
        assert_eq!(capped.len(), 4);
        let again = pair_by_species(&ds_a, &ds_b, 4, 123).unwrap();
        let key = |p: &PairedDataset| -> Vec<(usize, usize)> {
            p.pairs.iter().map(|s| (s.a_index, s.b_index)).collect()
        };
        assert_eq!(key(&capped), key(&again));
    }

    #[test]
    fn pairing_disjoint_species_fails() {
        let ds_a = dataset(&[("A", 2)]);
        let ds_b = dataset(&[("B", 2)]);
        assert!(matches!(pair_by_species(&ds_a, &ds_b, 10, 0), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn same_modality_pairs_exclude_self() {
        let ds = dataset(&[("A", 3), ("B", 1)]);
        let paired = pair_same_modality(&ds, 0, 100).unwrap();
        // 3 * 2 ordered pairs for A, none for singleton B.
        assert_eq!(paired.len(), 6);
        assert!(paired.pairs.iter().all(|p| p.a_index != p.b_index));
        assert_eq!(paired.species.len(), 1);
    }

    #[test]
    fn paired_labels_agree_with_members() {
        let ds = dataset(&[("A", 2), ("B", 2)]);
        let paired = pair_same_modality(&ds, 5, 100).unwrap();
        for p in &paired.pairs {
            let (_, la) = ds.sample(p.a_index);
            let (_, lb) = ds.sample(p.b_index);
            assert_eq!(la, lb);
            assert_eq!(
                normalize_species(&paired.species[p.species_id]),
                normalize_species(ds.species_name(la))
            );
        }
    }

    #[test]
    fn split_partition_property_over_seeds() {
        let ds = dataset(&[("A", 6), ("B", 3), ("C", 2), ("D", 1), ("E", 9)]);
        for seed in 0..100u64 {
            for plan in [split_three_per_species(&ds, seed), split_leave_one_out(&ds, seed)] {
                plan.validate(ds.len()).unwrap();
                let groups = ds.indices_by_species();
                for g in &groups {
                    let in_train = g.iter().filter(|i| plan.train_indices.contains(i)).count();
                    match plan.protocol {
                        SplitProtocol::ThreePerSpecies => {
                            assert_eq!(in_train, g.len().min(3));
                        }
                        SplitProtocol::LeaveOneOutPerSpecies => {
                            let expect = if g.len() >= 2 { g.len() - 1 } else { g.len() };
                            assert_eq!(in_train, expect);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn subset_keeps_species_index() {
        let ds = dataset(&[("A", 2), ("B", 2)]);
        let sub = ds.subset(&[2, 3]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.n_species(), 2);
        assert_eq!(sub.sample(0).1, 1);
    }

    #[test]
    fn dataset_roundtrip() {
        let ds = dataset(&[("A", 2), ("B", 1)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        ds.save(&path).unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.species_names(), ds.species_names());
        assert_eq!(back.species_id("b"), Some(1));
        assert_eq!(back.sample(0).0.values(), ds.sample(0).0.values());
    }
}
