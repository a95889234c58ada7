//! Scenario config files.
//!
//! A config is a TOML document naming a preset plus any keys to change:
//!
//! ```toml
//! name = "well_barrier_superposition"
//! grid_n = 4000
//!
//! [geometry]
//! barrier_height = 20.0
//! ```
//!
//! Tables are merged key by key into the preset. A table whose `kind`
//! differs from the preset's (e.g. a different `[time]` sampling) replaces
//! it wholesale. Unknown keys are rejected.

use madelung_core::scenarios::{ScenarioConfig, ScenarioName};
use toml::{Table, Value};

use crate::error::{AppError, AppResult};

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub frames: Option<usize>,
    pub eta: Option<f64>,
    /// Tuning tolerance for configs that tune a barrier, streamline
    /// tolerance otherwise.
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(n) = self.grid_n {
            cfg.grid_n = n;
        }
        if let Some(f) = self.frames {
            cfg.frames = f;
        }
        if let Some(e) = self.eta {
            cfg.eta = e;
        }
        if let Some(t) = self.tol {
            match cfg.tune.as_mut() {
                Some(tune) => tune.tol = t,
                None => cfg.stream_tol = t,
            }
        }
    }
}

pub fn parse_name(name: &str) -> AppResult<ScenarioName> {
    name.parse().map_err(|_| {
        let known: Vec<&str> = ScenarioName::ALL.iter().map(|n| n.as_str()).collect();
        AppError::Config(format!("unknown scenario {name:?}; expected one of {}", known.join(", ")))
    })
}

fn merge(base: &mut Table, patch: Table) {
    for (key, value) in patch {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(p)) if b.get("kind") == p.get("kind") || p.get("kind").is_none() => {
                merge(b, p)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses a config document, merged over its preset, and validates it.
pub fn parse_config(text: &str) -> AppResult<ScenarioConfig> {
    let patch: Table = text.parse().map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))?;
    let name = patch
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| AppError::Config("missing string key `name`".into()))?;
    let preset = ScenarioConfig::preset(parse_name(name)?);
    let mut table = match Value::try_from(&preset).map_err(|e| AppError::Config(e.to_string()))? {
        Value::Table(t) => t,
        _ => unreachable!("configs serialize to tables"),
    };
    merge(&mut table, patch);
    let cfg: ScenarioConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))?;
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> AppResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config(&text)
}

/// Full TOML form of a config (every key spelled out).
pub fn to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("configs serialize to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use madelung_core::scenarios::{Geometry, TimeSampling};

    #[test]
    fn every_preset_round_trips() {
        for n in ScenarioName::ALL {
            let p = ScenarioConfig::preset(n);
            assert_eq!(parse_config(&to_toml(&p)).unwrap(), p, "{n}");
        }
    }

    #[test]
    fn partial_tables_merge_into_the_preset() {
        let cfg = parse_config("name = \"well_barrier_superposition\"\n[geometry]\nbarrier_height = 20.0\n").unwrap();
        assert_eq!(
            cfg.geometry,
            Geometry::WellWithBarrier {
                half_width: 1.0,
                barrier_height: 20.0,
                barrier_width: 0.2
            }
        );
        assert_eq!(cfg.grid_n, ScenarioConfig::preset(cfg.name).grid_n);
    }

    #[test]
    fn a_new_kind_replaces_the_table() {
        let cfg = parse_config("name = \"well_superposition\"\n[time]\nkind = \"window\"\nt_end = 2.0\n").unwrap();
        assert_eq!(cfg.time, TimeSampling::Window { t_end: 2.0 });
    }

    #[test]
    fn bad_documents_are_rejected() {
        for doc in [
            "grid_n = 5",
            "name = \"nope\"",
            "name = \"well_superposition\"\ncolour = 1",
            "name = \"well_superposition\"\n[geometry]\nomega = 1.0",
            "name = \"well_superposition\"\ngrid_n = 2",
            "name = ",
        ] {
            assert!(parse_config(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn tol_targets_the_tuner_when_there_is_one() {
        let o = Overrides {
            tol: Some(0.02),
            ..Default::default()
        };
        let mut mzi = ScenarioConfig::preset(ScenarioName::Mzi1d);
        o.apply(&mut mzi);
        assert_eq!(mzi.tune.unwrap().tol, 0.02);
        let mut well = ScenarioConfig::preset(ScenarioName::WellSuperposition);
        o.apply(&mut well);
        assert_eq!(well.stream_tol, 0.02);
    }
}
