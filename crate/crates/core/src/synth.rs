//! Synthetic multi-factor returns with planted sector and country structure.
//!
//! `r_it = beta_market f_t + beta_sector g_{s(i),t} + beta_country(t) h_{c(i),t}
//! + idio_scale e_it`, every factor an independent unit-variance draw.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{next_weekday, previous_weekday, CompanyMeta, ReturnsPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSize {
    pub label: String,
    pub count: usize,
}

impl GroupSize {
    pub fn new(label: impl Into<String>, count: usize) -> Self {
        Self {
            label: label.into(),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// First day index (0-based) using the post-change loading.
    pub change_day: usize,
    pub beta_country_post: f64,
    /// Countries whose loading changes; empty means all of them.
    #[serde(default)]
    pub countries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorModelSpec {
    pub sectors: Vec<GroupSize>,
    pub countries: Vec<GroupSize>,
    pub days: usize,
    pub beta_market: f64,
    pub beta_sector: f64,
    pub beta_country: f64,
    pub idio_scale: f64,
    /// Student-t degrees of freedom; infinite means Gaussian.
    pub tail_dof: f64,
    pub regime: Option<Regime>,
    pub seed: u64,
    /// Multiplies every return, keeping reconstructed prices in a sane range.
    pub scale: f64,
    pub start_date: NaiveDate,
}

impl Default for FactorModelSpec {
    fn default() -> Self {
        Self {
            sectors: [
                "Energy",
                "Financials",
                "Industrials",
                "Materials",
                "Utilities",
            ]
            .into_iter()
            .map(|s| GroupSize::new(s, 12))
            .collect(),
            countries: ["DE", "ES", "FR", "GB"]
                .into_iter()
                .map(|c| GroupSize::new(c, 15))
                .collect(),
            days: 1000,
            beta_market: 0.5,
            beta_sector: 1.0,
            beta_country: 0.4,
            idio_scale: 1.0,
            tail_dof: 3.0,
            regime: None,
            seed: 1,
            scale: 0.01,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 4).expect("valid date"),
        }
    }
}

fn check_groups(kind: &str, groups: &[GroupSize]) -> Result<usize> {
    if groups.is_empty() {
        return Err(Error::Config(format!("synth: no {kind} given")));
    }
    let mut seen = std::collections::HashSet::new();
    for g in groups {
        if g.count == 0 {
            return Err(Error::Config(format!(
                "synth: {kind} `{}` has count 0",
                g.label
            )));
        }
        if g.label.is_empty() || !seen.insert(g.label.as_str()) {
            return Err(Error::Config(format!(
                "synth: {kind} labels must be unique and non-empty (`{}`)",
                g.label
            )));
        }
    }
    Ok(groups.iter().map(|g| g.count).sum())
}

impl FactorModelSpec {
    /// Parses and validates a spec written as a bare TOML table.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_companies(&self) -> usize {
        self.sectors.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n_sector = check_groups("sectors", &self.sectors)?;
        let n_country = check_groups("countries", &self.countries)?;
        if n_sector != n_country {
            return Err(Error::Config(format!(
                "synth: sector counts sum to {n_sector} but country counts to {n_country}"
            )));
        }
        if self.days < 2 {
            return Err(Error::Config("synth: days must be at least 2".into()));
        }
        for (name, v) in [
            ("beta_market", self.beta_market),
            ("beta_sector", self.beta_sector),
            ("beta_country", self.beta_country),
            ("idio_scale", self.idio_scale),
            ("scale", self.scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "synth: {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.tail_dof > 2.0) {
            return Err(Error::Config(format!(
                "synth: tail_dof must exceed 2, got {}",
                self.tail_dof
            )));
        }
        if let Some(r) = &self.regime {
            if r.change_day < 1 || r.change_day >= self.days {
                return Err(Error::Config(format!(
                    "synth: change_day must lie in [1, {}), got {}",
                    self.days, r.change_day
                )));
            }
            if !(r.beta_country_post.is_finite() && r.beta_country_post >= 0.0) {
                return Err(Error::Config(
                    "synth: beta_country_post must be finite and >= 0".into(),
                ));
            }
            if let Some(c) = r
                .countries
                .iter()
                .find(|c| !self.countries.iter().any(|g| &g.label == *c))
            {
                return Err(Error::Config(format!(
                    "synth: regime names unknown country `{c}`"
                )));
            }
        }
        Ok(())
    }

    /// Company labels: sectors fill consecutive blocks, countries are dealt
    /// round-robin across the whole sequence, skipping exhausted ones.
    pub fn metadata(&self) -> Result<Vec<CompanyMeta>> {
        self.validate()?;
        let n = self.n_companies();
        let width = n.to_string().len().max(3);
        let mut remaining: Vec<usize> = self.countries.iter().map(|g| g.count).collect();
        let mut next = 0;
        let mut out = Vec::with_capacity(n);
        for sector in &self.sectors {
            for _ in 0..sector.count {
                while remaining[next] == 0 {
                    next = (next + 1) % remaining.len();
                }
                remaining[next] -= 1;
                let country = &self.countries[next].label;
                next = (next + 1) % remaining.len();
                out.push(CompanyMeta {
                    id: format!("C{:0width$}", out.len() + 1),
                    sector: sector.label.clone(),
                    country: country.clone(),
                    currency: "EUR".into(),
                });
            }
        }
        Ok(out)
    }

    fn country_beta(&self, country: &str, day: usize) -> f64 {
        match &self.regime {
            Some(r)
                if day >= r.change_day
                    && (r.countries.is_empty() || r.countries.iter().any(|c| c == country)) =>
            {
                r.beta_country_post
            }
            _ => self.beta_country,
        }
    }
}

enum Noise {
    Gaussian,
    Student(StudentT<f64>, f64),
}

impl Noise {
    fn new(dof: f64) -> Result<Self> {
        if dof.is_infinite() {
            return Ok(Noise::Gaussian);
        }
        let t = StudentT::new(dof).map_err(|e| Error::Config(format!("synth: {e}")))?;
        Ok(Noise::Student(t, ((dof - 2.0) / dof).sqrt()))
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Noise::Gaussian => StandardNormal.sample(rng),
            Noise::Student(t, norm) => t.sample(rng) * norm,
        }
    }
}

/// Business-day calendar of `len` days starting at `start` (or the next
/// weekday if `start` falls on a weekend).
pub fn weekday_calendar(start: NaiveDate, len: usize) -> Vec<NaiveDate> {
    let mut d = next_weekday(previous_weekday(start));
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(d);
        d = next_weekday(d);
    }
    out
}

/// Draws a panel. Per day the draw order is market, sectors, countries,
/// then one idiosyncratic term per company, all from one seeded stream.
pub fn generate(spec: &FactorModelSpec) -> Result<ReturnsPanel> {
    let meta = spec.metadata()?;
    let noise = Noise::new(spec.tail_dof)?;
    let n = meta.len();
    let sector_of: Vec<usize> = meta
        .iter()
        .map(|m| {
            spec.sectors
                .iter()
                .position(|g| g.label == m.sector)
                .expect("own label")
        })
        .collect();
    let country_of: Vec<usize> = meta
        .iter()
        .map(|m| {
            spec.countries
                .iter()
                .position(|g| g.label == m.country)
                .expect("own label")
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut returns = vec![Vec::with_capacity(spec.days); n];
    let mut g = vec![0.0; spec.sectors.len()];
    let mut h = vec![0.0; spec.countries.len()];
    for day in 0..spec.days {
        let f = noise.draw(&mut rng);
        g.iter_mut().for_each(|v| *v = noise.draw(&mut rng));
        h.iter_mut().for_each(|v| *v = noise.draw(&mut rng));
        let betas: Vec<f64> = spec
            .countries
            .iter()
            .map(|c| spec.country_beta(&c.label, day))
            .collect();
        for i in 0..n {
            let e = noise.draw(&mut rng);
            let r = spec.beta_market * f
                + spec.beta_sector * g[sector_of[i]]
                + betas[country_of[i]] * h[country_of[i]]
                + spec.idio_scale * e;
            returns[i].push(spec.scale * r);
        }
    }
    let companies = meta.iter().map(|m| m.id.clone()).collect();
    ReturnsPanel::new(
        companies,
        weekday_calendar(spec.start_date, spec.days),
        returns,
        meta,
    )
}

/// Generates several panels in parallel; each uses only its own seed.
pub fn generate_many(specs: &[FactorModelSpec]) -> Result<Vec<ReturnsPanel>> {
    specs.par_iter().map(generate).collect()
}

/// Population correlation between two distinct companies with the given
/// co-membership. `post_regime` puts both under the post-change country
/// loading.
pub fn expected_correlation(
    spec: &FactorModelSpec,
    same_sector: bool,
    same_country: bool,
    post_regime: bool,
) -> f64 {
    let bc = match (&spec.regime, post_regime) {
        (Some(r), true) => r.beta_country_post,
        _ => spec.beta_country,
    };
    let (m2, s2, c2, i2) = (
        spec.beta_market.powi(2),
        spec.beta_sector.powi(2),
        bc * bc,
        spec.idio_scale.powi(2),
    );
    let total = m2 + s2 + c2 + i2;
    if total == 0.0 {
        return 0.0;
    }
    let shared = m2 + if same_sector { s2 } else { 0.0 } + if same_country { c2 } else { 0.0 };
    shared / total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_crosses_labels() {
        let spec = FactorModelSpec::default();
        let meta = spec.metadata().unwrap();
        assert_eq!(meta.len(), 60);
        assert_eq!(meta[0].id, "C001");
        for s in &spec.sectors {
            for c in &spec.countries {
                let k = meta
                    .iter()
                    .filter(|m| m.sector == s.label && m.country == c.label)
                    .count();
                assert_eq!(k, 3);
            }
        }
    }

    #[test]
    fn uneven_counts_respect_quotas() {
        let spec = FactorModelSpec {
            sectors: vec![GroupSize::new("A", 5), GroupSize::new("B", 2)],
            countries: vec![GroupSize::new("X", 1), GroupSize::new("Y", 6)],
            ..Default::default()
        };
        let meta = spec.metadata().unwrap();
        assert_eq!(meta.iter().filter(|m| m.country == "X").count(), 1);
        assert_eq!(meta.iter().filter(|m| m.country == "Y").count(), 6);
    }

    #[test]
    fn validation() {
        let ok = FactorModelSpec::default();
        assert!(ok.validate().is_ok());
        let bad = [
            FactorModelSpec {
                days: 1,
                ..ok.clone()
            },
            FactorModelSpec {
                tail_dof: 2.0,
                ..ok.clone()
            },
            FactorModelSpec {
                beta_sector: -1.0,
                ..ok.clone()
            },
            FactorModelSpec {
                countries: vec![GroupSize::new("X", 59)],
                ..ok.clone()
            },
            FactorModelSpec {
                regime: Some(Regime {
                    change_day: 1000,
                    beta_country_post: 1.0,
                    countries: vec![],
                }),
                ..ok.clone()
            },
            FactorModelSpec {
                regime: Some(Regime {
                    change_day: 0,
                    beta_country_post: 1.0,
                    countries: vec![],
                }),
                ..ok.clone()
            },
            FactorModelSpec {
                regime: Some(Regime {
                    change_day: 5,
                    beta_country_post: 1.0,
                    countries: vec!["ZZ".into()],
                }),
                ..ok.clone()
            },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn market_only_makes_identical_series() {
        let spec = FactorModelSpec {
            beta_sector: 0.0,
            beta_country: 0.0,
            idio_scale: 0.0,
            days: 50,
            ..Default::default()
        };
        let p = generate(&spec).unwrap();
        assert!(p.returns.iter().all(|row| row == &p.returns[0]));
    }

    #[test]
    fn same_seed_same_panel() {
        let spec = FactorModelSpec {
            days: 100,
            ..Default::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = FactorModelSpec {
            seed: 2,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn closed_form_values() {
        let spec = FactorModelSpec {
            beta_market: 0.5,
            beta_sector: 1.0,
            beta_country: 0.3,
            idio_scale: 1.0,
            ..Default::default()
        };
        let rho = expected_correlation(&spec, true, false, false);
        assert!((rho - 1.25 / 2.34).abs() < 1e-15);

        let zero = FactorModelSpec {
            beta_market: 0.0,
            beta_sector: 0.0,
            beta_country: 0.0,
            ..Default::default()
        };
        assert_eq!(expected_correlation(&zero, true, true, false), 0.0);

        let no_idio = FactorModelSpec {
            idio_scale: 0.0,
            ..Default::default()
        };
        assert!((expected_correlation(&no_idio, true, true, false) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn calendar_skips_weekends() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 7).unwrap(); // Friday
        let days = weekday_calendar(start, 3);
        assert_eq!(days[1], NaiveDate::from_ymd_opt(2000, 1, 10).unwrap());
        let sat = NaiveDate::from_ymd_opt(2000, 1, 8).unwrap();
        assert_eq!(
            weekday_calendar(sat, 1)[0],
            NaiveDate::from_ymd_opt(2000, 1, 10).unwrap()
        );
    }
}
