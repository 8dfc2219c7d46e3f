use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ChoiceDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::{tag, SeedStream};

const ZETA: [f64; 4] = [-1.0430, 1.5700, 0.7720, -0.5260];
const SIGMA: [f64; 4] = [1.1305, 1.0328, 1.1673, 1.2225];
const ALPHA: [f64; 7] = [-0.3280, -0.3390, -0.3900, -0.9460, -0.5840, -1.2790, -0.4520];

#[rustfmt::skip]
const PSI_LOW: [f64; 16] = [
     1.0000, -0.2398, -0.1834,  0.2229,
    -0.2398,  1.0000,  0.2550, -0.2703,
    -0.1834,  0.2550,  1.0000, -0.3119,
     0.2229, -0.2703, -0.3119,  1.0000,
];

#[rustfmt::skip]
const PSI_HIGH: [f64; 16] = [
     1.0000, -0.5000, -0.5000,  0.4000,
    -0.5000,  1.0000,  0.4000, -0.4000,
    -0.5000,  0.4000,  1.0000, -0.4000,
     0.4000, -0.4000, -0.4000,  1.0000,
];

pub const RANDOM_ATTRIBUTES: [&str; 4] = ["operating_cost", "engine_power", "co2_emissions", "fuel_availability"];
pub const FIXED_ATTRIBUTES: [&str; 7] =
    ["gasoline", "hybrid", "lpg_cng", "biofuel", "hydrogen", "electric", "purchase_price"];

/// Alternative `j` carries fuel type `j` in the order gasoline, diesel,
/// hybrid, LPG/CNG, biofuel, hydrogen, electric; diesel is the base level.
const DUMMY_ALTERNATIVE: [usize; 6] = [0, 2, 3, 4, 5, 6];

/// Attribute scale per scenario that puts the error rate near 50%; found by
/// [`calibrate_attribute_scale`] with N = 20000, T = 5, seed 1 (see the
/// `calibrate` example).
pub fn default_attribute_scale(scenario: u8) -> f64 {
    match scenario {
        1 => 0.548,
        2 => 0.559,
        3 => 0.509,
        _ => 0.525,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub num_individuals: usize,
    pub occasions: usize,
    pub num_alternatives: usize,
    pub seed: u64,
    /// Multiplies every generated attribute column.
    pub attribute_scale: f64,
    /// Scale of the Gumbel disturbance; 1 is the standard model.
    pub noise_scale: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: u8, num_individuals: usize, occasions: usize, seed: u64) -> Result<Self> {
        if !(1..=4).contains(&scenario) {
            return Err(Error::UnknownScenario(scenario));
        }
        Ok(Self {
            scenario,
            num_individuals,
            occasions,
            num_alternatives: 7,
            seed,
            attribute_scale: default_attribute_scale(scenario),
            noise_scale: 1.0,
        })
    }

    pub fn has_fixed(&self) -> bool {
        matches!(self.scenario, 3 | 4)
    }

    pub fn high_correlation(&self) -> bool {
        matches!(self.scenario, 2 | 4)
    }

    pub fn num_fixed(&self) -> usize {
        if self.has_fixed() {
            ALPHA.len()
        } else {
            0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.scenario) {
            return Err(Error::UnknownScenario(self.scenario));
        }
        if self.num_alternatives == 0 {
            return Err(Error::InvalidArgument("num_alternatives must be positive".into()));
        }
        if self.has_fixed() && self.num_alternatives != 7 {
            return Err(Error::InvalidArgument(
                "scenarios with fixed parameters use seven fuel-type alternatives".into(),
            ));
        }
        if !(self.attribute_scale.is_finite() && self.attribute_scale > 0.0) {
            return Err(Error::InvalidArgument("attribute_scale must be positive".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ground-truth population parameters together with the realized
/// individual-level tastes and their sample moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruePopulation {
    #[serde(with = "crate::serde_mat::vector")]
    pub alpha: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub zeta: DVector<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub sigma: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub psi: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub omega: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vectors")]
    pub betas: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_mat::vector")]
    pub sample_mean: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub sample_cov: DMatrix<f64>,
}

impl TruePopulation {
    pub fn from_parts(
        alpha: DVector<f64>,
        zeta: DVector<f64>,
        sigma: DVector<f64>,
        psi: DMatrix<f64>,
        num_individuals: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = zeta.len();
        let omega = DMatrix::from_fn(k, k, |i, j| (sigma[i] * sigma[j]) * psi[(i, j)]);
        let chol = linalg::chol_lower(&omega, "population covariance")?;
        let betas: Vec<DVector<f64>> = (0..num_individuals)
            .map(|_| {
                let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                &zeta + &chol * z
            })
            .collect();
        let (sample_mean, sample_cov) = sample_moments(&betas, k);
        Ok(Self {
            alpha,
            zeta,
            sigma,
            psi,
            omega,
            betas,
            sample_mean,
            sample_cov,
        })
    }

    pub fn num_fixed(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_random(&self) -> usize {
        self.zeta.len()
    }
}

/// Sample mean and (1/N) sample covariance.
pub(crate) fn sample_moments(betas: &[DVector<f64>], k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = betas.len();
    if n == 0 {
        return (DVector::zeros(k), DMatrix::zeros(k, k));
    }
    let mut mean = DVector::zeros(k);
    for b in betas {
        mean += b;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(k, k);
    for b in betas {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    cov /= n as f64;
    linalg::symmetrize(&mut cov);
    (mean, cov)
}

pub fn build_true_population(config: &ScenarioConfig) -> Result<TruePopulation> {
    config.validate()?;
    let alpha = if config.has_fixed() {
        DVector::from_column_slice(&ALPHA)
    } else {
        DVector::zeros(0)
    };
    let psi = if config.high_correlation() {
        DMatrix::from_row_slice(4, 4, &PSI_HIGH)
    } else {
        DMatrix::from_row_slice(4, 4, &PSI_LOW)
    };
    let mut rng = SeedStream::new(config.seed).rng(&[tag::POPULATION]);
    TruePopulation::from_parts(
        alpha,
        DVector::from_column_slice(&ZETA),
        DVector::from_column_slice(&SIGMA),
        psi,
        config.num_individuals,
        &mut rng,
    )
}

fn check_population(config: &ScenarioConfig, pop: &TruePopulation) -> Result<()> {
    if pop.num_fixed() != config.num_fixed() {
        return Err(Error::dims("fixed parameters", config.num_fixed(), pop.num_fixed()));
    }
    if pop.num_random() != RANDOM_ATTRIBUTES.len() {
        return Err(Error::dims("random parameters", RANDOM_ATTRIBUTES.len(), pop.num_random()));
    }
    Ok(())
}

/// Draws attributes, Gumbel disturbances and utility-maximizing choices for
/// every individual of `pop`, each individual on its own seeded stream.
pub fn generate_dataset(config: &ScenarioConfig, pop: &TruePopulation) -> Result<ChoiceDataset> {
    config.validate()?;
    check_population(config, pop)?;
    generate_choices(config, pop, &SeedStream::new(config.seed), config.occasions)
}

fn generate_choices(
    config: &ScenarioConfig,
    pop: &TruePopulation,
    seeds: &SeedStream,
    occasions: usize,
) -> Result<ChoiceDataset> {
    let j = config.num_alternatives;
    let l = config.num_fixed();
    let k = pop.num_random();
    let n = pop.betas.len();
    let rows = n * occasions * j;
    let mut fixed = Vec::with_capacity(rows * l);
    let mut random = Vec::with_capacity(rows * k);
    let mut choices = Vec::with_capacity(n * occasions);
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let scale = config.attribute_scale;
    let mut utility = vec![0.0; j];

    for (i, beta) in pop.betas.iter().enumerate() {
        let mut attr_rng = seeds.rng(&[tag::ATTRIBUTES, i as u64]);
        let mut noise_rng = seeds.rng(&[tag::NOISE, i as u64]);
        for _ in 0..occasions {
            for (alt, u) in utility.iter_mut().enumerate() {
                let mut v = 0.0;
                if l > 0 {
                    for (c, &dummy_alt) in DUMMY_ALTERNATIVE.iter().enumerate() {
                        let x = if alt == dummy_alt { 1.0 } else { 0.0 };
                        fixed.push(x);
                        v += x * pop.alpha[c];
                    }
                    let price = scale * attr_rng.sample::<f64, _>(StandardNormal);
                    fixed.push(price);
                    v += price * pop.alpha[l - 1];
                }
                for kk in 0..k {
                    let x = scale * attr_rng.sample::<f64, _>(StandardNormal);
                    random.push(x);
                    v += x * beta[kk];
                }
                let eps: f64 = gumbel.sample(&mut noise_rng);
                *u = v + config.noise_scale * eps;
            }
            choices.push(argmax(&utility));
        }
    }

    let fixed_names = if l > 0 {
        FIXED_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
    } else {
        Vec::new()
    };
    let random_names = RANDOM_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    ChoiceDataset::new(j, fixed_names, random_names, &vec![occasions; n], fixed, random, choices)
}

/// Out-of-sample choice sets: `individuals` fresh decision-makers drawn from
/// the same population, one occasion each.
pub fn generate_validation(
    config: &ScenarioConfig,
    pop: &TruePopulation,
    individuals: usize,
) -> Result<ChoiceDataset> {
    config.validate()?;
    check_population(config, pop)?;
    let seeds = SeedStream::new(config.seed).child(&[tag::VALIDATION]);
    let mut rng = seeds.rng(&[tag::POPULATION]);
    let fresh = TruePopulation::from_parts(
        pop.alpha.clone(),
        pop.zeta.clone(),
        pop.sigma.clone(),
        pop.psi.clone(),
        individuals,
        &mut rng,
    )?;
    generate_choices(config, &fresh, &seeds, 1)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of occasions on which the observed choice differs from the
/// alternative with the highest deterministic utility.
pub fn measure_error_rate(dataset: &ChoiceDataset, pop: &TruePopulation) -> Result<f64> {
    if pop.betas.len() != dataset.num_individuals() {
        return Err(Error::dims("individuals", dataset.num_individuals(), pop.betas.len()));
    }
    if pop.num_fixed() != dataset.num_fixed() {
        return Err(Error::dims("fixed parameters", dataset.num_fixed(), pop.num_fixed()));
    }
    if pop.num_random() != dataset.num_random() {
        return Err(Error::dims("random parameters", dataset.num_random(), pop.num_random()));
    }
    let total = dataset.total_occasions();
    if total == 0 {
        return Ok(0.0);
    }
    let j = dataset.num_alternatives();
    let mut v = vec![0.0; j];
    let mut errors = 0usize;
    for (n, ind) in dataset.individuals().enumerate() {
        for occ in ind.occasions() {
            crate::mnl::utilities(&occ, pop.alpha.as_slice(), pop.betas[n].as_slice(), &mut v);
            if argmax(&v) != occ.chosen {
                errors += 1;
            }
        }
    }
    Ok(errors as f64 / total as f64)
}

/// Bisection on the attribute scale so that the error rate of a large
/// generated sample hits `target`. Random numbers are shared across trial
/// scales, so the error rate is a step function of the scale alone.
pub fn calibrate_attribute_scale(
    scenario: u8,
    target: f64,
    num_individuals: usize,
    occasions: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::InvalidArgument("target error rate must lie in [0, 1)".into()));
    }
    let mut config = ScenarioConfig::new(scenario, num_individuals, occasions, seed)?;
    let pop = build_true_population(&config)?;
    let mut rate_at = |scale: f64| -> Result<f64> {
        config.attribute_scale = scale;
        let ds = generate_dataset(&config, &pop)?;
        measure_error_rate(&ds, &pop)
    };
    let (mut lo, mut hi) = (1e-3_f64, 1e2_f64);
    for _ in 0..50 {
        let mid = (lo * hi).sqrt();
        // Error rate falls as the scale (signal-to-noise) grows.
        if rate_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}
