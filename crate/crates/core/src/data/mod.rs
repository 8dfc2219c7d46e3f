//! Panel choice data and the semi-synthetic scenario generator.
//!
//! A [`ChoiceDataset`] holds `N` decision-makers, each with `T_n` choice
//! occasions over a constant set of `J` alternatives. Attributes are split
//! into fixed-parameter columns (`L`, possibly zero) and random-parameter
//! columns (`K ≥ 1`), stored row-major with one row per alternative.

mod io;
mod scenario;

pub use io::{load_dataset, save_dataset, DatasetFile, DatasetMeta, SCHEMA_VERSION};
pub use scenario::{
    build_true_population, calibrate_attribute_scale, default_attribute_scale, generate_dataset,
    generate_validation, measure_error_rate, ScenarioConfig, TruePopulation,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDataset {
    num_alternatives: usize,
    fixed_names: Vec<String>,
    random_names: Vec<String>,
    occasion_offsets: Vec<usize>,
    fixed: Vec<f64>,
    random: Vec<f64>,
    choices: Vec<usize>,
}

/// One choice occasion: `J × L` fixed attributes, `J × K` random attributes
/// (both row-major) and the chosen alternative (0-based).
#[derive(Clone, Copy, Debug)]
pub struct Occasion<'a> {
    pub fixed: &'a [f64],
    pub random: &'a [f64],
    pub chosen: usize,
    pub num_alternatives: usize,
}

impl Occasion<'_> {
    pub fn num_fixed(&self) -> usize {
        self.fixed.len() / self.num_alternatives
    }

    pub fn num_random(&self) -> usize {
        self.random.len() / self.num_alternatives
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Individual<'a> {
    pub fixed: &'a [f64],
    pub random: &'a [f64],
    pub choices: &'a [usize],
    pub num_alternatives: usize,
    pub num_fixed: usize,
    pub num_random: usize,
}

impl<'a> Individual<'a> {
    pub fn num_occasions(&self) -> usize {
        self.choices.len()
    }

    pub fn occasion(&self, t: usize) -> Occasion<'a> {
        let j = self.num_alternatives;
        let (l, k) = (self.num_fixed, self.num_random);
        Occasion {
            fixed: &self.fixed[t * j * l..(t + 1) * j * l],
            random: &self.random[t * j * k..(t + 1) * j * k],
            chosen: self.choices[t],
            num_alternatives: j,
        }
    }

    pub fn occasions(&self) -> impl Iterator<Item = Occasion<'a>> + '_ {
        (0..self.num_occasions()).map(move |t| self.occasion(t))
    }
}

impl ChoiceDataset {
    /// Builds a dataset from flat row-major attribute blocks.
    ///
    /// `occasions_per_individual[n]` is `T_n`; attribute blocks hold
    /// `Σ T_n · J` rows; `choices` holds one 0-based index per occasion.
    pub fn new(
        num_alternatives: usize,
        fixed_names: Vec<String>,
        random_names: Vec<String>,
        occasions_per_individual: &[usize],
        fixed: Vec<f64>,
        random: Vec<f64>,
        choices: Vec<usize>,
    ) -> Result<Self> {
        if num_alternatives == 0 {
            return Err(Error::InvalidArgument("at least one alternative is required".into()));
        }
        if random_names.is_empty() {
            return Err(Error::InvalidArgument("at least one random-parameter attribute is required".into()));
        }
        let mut occasion_offsets = Vec::with_capacity(occasions_per_individual.len() + 1);
        occasion_offsets.push(0);
        let mut total = 0;
        for &t in occasions_per_individual {
            total += t;
            occasion_offsets.push(total);
        }
        if choices.len() != total {
            return Err(Error::dims("choices", total, choices.len()));
        }
        let rows = total * num_alternatives;
        if fixed.len() != rows * fixed_names.len() {
            return Err(Error::dims("fixed attributes", rows * fixed_names.len(), fixed.len()));
        }
        if random.len() != rows * random_names.len() {
            return Err(Error::dims("random attributes", rows * random_names.len(), random.len()));
        }
        if let Some(&bad) = choices.iter().find(|&&c| c >= num_alternatives) {
            return Err(Error::InvalidArgument(format!(
                "choice index {} outside 1..={num_alternatives}",
                bad + 1
            )));
        }
        if fixed.iter().chain(&random).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("attribute values must be finite".into()));
        }
        Ok(Self {
            num_alternatives,
            fixed_names,
            random_names,
            occasion_offsets,
            fixed,
            random,
            choices,
        })
    }

    pub fn num_individuals(&self) -> usize {
        self.occasion_offsets.len() - 1
    }

    pub fn num_alternatives(&self) -> usize {
        self.num_alternatives
    }

    /// `L`, the number of fixed-parameter attributes.
    pub fn num_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    /// `K`, the number of random-parameter attributes.
    pub fn num_random(&self) -> usize {
        self.random_names.len()
    }

    pub fn fixed_names(&self) -> &[String] {
        &self.fixed_names
    }

    pub fn random_names(&self) -> &[String] {
        &self.random_names
    }

    pub fn total_occasions(&self) -> usize {
        self.choices.len()
    }

    pub fn total_rows(&self) -> usize {
        self.choices.len() * self.num_alternatives
    }

    pub fn occasions_of(&self, n: usize) -> usize {
        self.occasion_offsets[n + 1] - self.occasion_offsets[n]
    }

    pub fn occasion_counts(&self) -> Vec<usize> {
        (0..self.num_individuals()).map(|n| self.occasions_of(n)).collect()
    }

    /// Global index of the first occasion of individual `n`.
    pub fn occasion_offset(&self, n: usize) -> usize {
        self.occasion_offsets[n]
    }

    pub fn individual(&self, n: usize) -> Individual<'_> {
        let (start, end) = (self.occasion_offsets[n], self.occasion_offsets[n + 1]);
        let j = self.num_alternatives;
        let (l, k) = (self.num_fixed(), self.num_random());
        Individual {
            fixed: &self.fixed[start * j * l..end * j * l],
            random: &self.random[start * j * k..end * j * k],
            choices: &self.choices[start..end],
            num_alternatives: j,
            num_fixed: l,
            num_random: k,
        }
    }

    pub fn individuals(&self) -> impl Iterator<Item = Individual<'_>> + '_ {
        (0..self.num_individuals()).map(move |n| self.individual(n))
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn fixed_block(&self) -> &[f64] {
        &self.fixed
    }

    pub fn random_block(&self) -> &[f64] {
        &self.random
    }

    /// Copy with every individual's occasions removed (prior-only runs).
    pub fn without_occasions(&self) -> ChoiceDataset {
        ChoiceDataset {
            num_alternatives: self.num_alternatives,
            fixed_names: self.fixed_names.clone(),
            random_names: self.random_names.clone(),
            occasion_offsets: vec![0; self.num_individuals() + 1],
            fixed: Vec::new(),
            random: Vec::new(),
            choices: Vec::new(),
        }
    }
}
