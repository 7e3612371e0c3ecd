//! Patient covariates: binary encoding and a prevalence model for simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the encoded covariate vector, in order.
pub const COVARIATE_NAMES: [&str; 6] = [
    "night",
    "ambulance",
    "female",
    "age_lt18",
    "age_45_64",
    "age_ge65",
];

/// Age bands; 18-44 is the reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Under18,
    From18To44,
    From45To64,
    Over65,
}

impl AgeGroup {
    pub fn from_age(age: f64) -> Self {
        if age < 18.0 {
            AgeGroup::Under18
        } else if age < 45.0 {
            AgeGroup::From18To44
        } else if age < 65.0 {
            AgeGroup::From45To64
        } else {
            AgeGroup::Over65
        }
    }

    /// Inclusive integer age range used when synthesizing ages.
    pub fn age_range(self) -> (u32, u32) {
        match self {
            AgeGroup::Under18 => (0, 17),
            AgeGroup::From18To44 => (18, 44),
            AgeGroup::From45To64 => (45, 64),
            AgeGroup::Over65 => (65, 95),
        }
    }

    const ALL: [AgeGroup; 4] = [
        AgeGroup::Under18,
        AgeGroup::From18To44,
        AgeGroup::From45To64,
        AgeGroup::Over65,
    ];
}

/// Binary covariates of one patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateEncoding {
    pub night: bool,
    pub ambulance: bool,
    pub female: bool,
    pub age_group: AgeGroup,
}

impl CovariateEncoding {
    /// Night is registration hour in [20:00, 08:00).
    pub fn is_night_hour(hour: u32) -> bool {
        !(8..20).contains(&hour)
    }

    pub fn to_vector(&self) -> [f64; 6] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        [
            b(self.night),
            b(self.ambulance),
            b(self.female),
            b(self.age_group == AgeGroup::Under18),
            b(self.age_group == AgeGroup::From45To64),
            b(self.age_group == AgeGroup::Over65),
        ]
    }
}

/// Independent prevalences of the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateDistribution {
    pub night: f64,
    pub ambulance: f64,
    pub female: f64,
    /// Probabilities of <18, 18-44, 45-64 and >=65.
    pub age_groups: [f64; 4],
}

impl Default for CovariateDistribution {
    fn default() -> Self {
        Self {
            night: 0.30,
            ambulance: 0.26,
            female: 0.48,
            age_groups: [0.26, 0.32, 0.19, 0.23],
        }
    }
}

impl CovariateDistribution {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.night, self.ambulance, self.female];
        if probs
            .iter()
            .chain(self.age_groups.iter())
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::Config("covariate prevalences must lie in [0, 1]".into()));
        }
        let total: f64 = self.age_groups.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("age group probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CovariateEncoding {
        let night = rng.random::<f64>() < self.night;
        let ambulance = rng.random::<f64>() < self.ambulance;
        let female = rng.random::<f64>() < self.female;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut age_group = AgeGroup::Over65;
        for (g, p) in AgeGroup::ALL.iter().zip(self.age_groups) {
            acc += p;
            if u < acc {
                age_group = *g;
                break;
            }
        }
        CovariateEncoding {
            night,
            ambulance,
            female,
            age_group,
        }
    }
}
