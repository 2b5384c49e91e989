//! Run configuration: a TOML file, or the bundled defaults for a dataset, with
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subcr_core::error::Error;
use subcr_core::injector::InjectionPlan;
use subcr_core::pipeline::{TrainConfig, Variant};
use subcr_core::synth::SynthConfig;

/// Per-dataset defaults shipped with the binary.
const BUNDLED: &[(&str, &str)] = &[
    ("cora", include_str!("../configs/cora.toml")),
    ("citeseer", include_str!("../configs/citeseer.toml")),
    ("pubmed", include_str!("../configs/pubmed.toml")),
    ("blogcatalog", include_str!("../configs/blogcatalog.toml")),
    ("flickr", include_str!("../configs/flickr.toml")),
];

pub const DATA_DIR_ENV: &str = "SUBCR_DATA_DIR";
pub const CACHE_DIR_ENV: &str = "SUBCR_CACHE_DIR";
const DEFAULT_DATA_DIR: &str = "data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// Directory holding `edges.txt`, `attributes.csv` and optionally
    /// `labels.txt`; defaults to `$SUBCR_DATA_DIR/<name>`.
    pub dir: Option<PathBuf>,
    /// Replace attribute values by presence flags.
    pub binarize: bool,
    /// Generator seed for synthetic datasets.
    pub synth_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "cora".into(),
            dir: None,
            binarize: false,
            synth_seed: 0,
        }
    }
}

/// Anomaly injection applied when the dataset has no anomaly labels. Unset
/// fields fall back to the standard count for the dataset name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    /// Total anomalies, split evenly between cliques of 15 and attribute swaps.
    pub anomalies: Option<usize>,
    pub clique_size: Option<usize>,
    pub num_cliques: Option<usize>,
    pub num_attribute_anomalies: Option<usize>,
    pub candidate_pool: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub subgraph_size: Option<Vec<usize>>,
    pub hidden: Option<Vec<usize>>,
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub injection: InjectionConfig,
    pub sweep: SweepConfig,
    /// Defaults to `runs/<dataset>`.
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub dataset_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub rounds: Option<usize>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
    pub diffusion_cache: Option<PathBuf>,
}

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.to_ascii_lowercase();
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn parse(text: &str, origin: &Path) -> Result<RunConfig, Error> {
    toml::from_str(text).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

impl RunConfig {
    /// Config file if given, else the bundled defaults for the dataset named on
    /// the command line, else built-in defaults; then the overrides.
    pub fn resolve(config: Option<&Path>, overrides: &Overrides) -> Result<Self, Error> {
        let mut cfg = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                parse(&text, path)?
            }
            None => match overrides.dataset.as_deref().and_then(bundled) {
                Some(text) => parse(text, Path::new("<bundled>")).expect("bundled configs parse"),
                None => RunConfig::default(),
            },
        };
        cfg.apply(overrides);
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(name) = &o.dataset {
            if !name.eq_ignore_ascii_case(&self.dataset.name) {
                self.dataset.dir = None;
            }
            self.dataset.name = name.clone();
        }
        if let Some(dir) = &o.dataset_dir {
            self.dataset.dir = Some(dir.clone());
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
        }
        if let Some(v) = o.variant {
            self.train.variant = v;
        }
        if let Some(r) = o.rounds {
            self.train.rounds = r;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(c) = &o.diffusion_cache {
            self.cache_dir = Some(c.clone());
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(&self.dataset.name))
    }

    /// `--diffusion-cache`, then `$SUBCR_CACHE_DIR`, then the file's `cache_dir`.
    pub fn cache_dir(&self, flag_given: bool) -> Option<PathBuf> {
        if flag_given {
            return self.cache_dir.clone();
        }
        std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.cache_dir.clone())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.dir.clone().unwrap_or_else(|| {
            let root = std::env::var_os(DATA_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from);
            root.join(&self.dataset.name)
        })
    }

    pub fn synthetic(&self) -> Option<SynthConfig> {
        match self.dataset.name.to_ascii_lowercase().as_str() {
            "synthetic-small" => Some(SynthConfig::small()),
            "synthetic-cora" => Some(SynthConfig::cora_like()),
            "synthetic-citeseer" => Some(SynthConfig::citeseer_like()),
            "synthetic-pubmed" => Some(SynthConfig::pubmed_like()),
            _ => None,
        }
    }

    /// Injection plan seeded with `seed`.
    pub fn injection_plan(&self, seed: u64) -> Result<InjectionPlan, Error> {
        let inj = &self.injection;
        let name = self.dataset.name.to_ascii_lowercase();
        let standard = name.strip_prefix("synthetic-").unwrap_or(&name);
        let base = match inj.anomalies {
            Some(total) => InjectionPlan::even_split(total, seed)?,
            None if standard == "small" => InjectionPlan::even_split(30, seed)?,
            None => InjectionPlan::for_dataset(standard, seed).ok_or_else(|| {
                Error::Config(format!(
                    "no standard anomaly count for dataset {:?}; set injection.anomalies",
                    self.dataset.name
                ))
            })?,
        };
        Ok(InjectionPlan {
            clique_size: inj.clique_size.unwrap_or(base.clique_size),
            num_cliques: inj.num_cliques.unwrap_or(base.num_cliques),
            num_attribute_anomalies: inj.num_attribute_anomalies.unwrap_or(base.num_attribute_anomalies),
            candidate_pool: inj.candidate_pool.unwrap_or(base.candidate_pool),
            seed,
        })
    }

    /// Cartesian product of the sweep grids; absent grids keep the base value.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>, Error> {
        let s = &self.sweep;
        if s.subgraph_size.is_none() && s.hidden.is_none() && s.gamma.is_none() {
            return Err(Error::Usage(
                "sweep needs at least one grid (sweep.subgraph_size, sweep.hidden or sweep.gamma)".into(),
            ));
        }
        for (name, empty) in [
            ("subgraph_size", s.subgraph_size.as_ref().is_some_and(Vec::is_empty)),
            ("hidden", s.hidden.as_ref().is_some_and(Vec::is_empty)),
            ("gamma", s.gamma.as_ref().is_some_and(Vec::is_empty)),
        ] {
            if empty {
                return Err(Error::Usage(format!("sweep grid {name} is empty")));
            }
        }
        let ps = s.subgraph_size.clone().unwrap_or_else(|| vec![self.train.subgraph_size]);
        let ds = s.hidden.clone().unwrap_or_else(|| vec![self.train.hidden]);
        let gs = s.gamma.clone().unwrap_or_else(|| vec![self.train.gamma]);
        let mut points = Vec::with_capacity(ps.len() * ds.len() * gs.len());
        for &subgraph_size in &ps {
            for &hidden in &ds {
                for &gamma in &gs {
                    points.push(SweepPoint {
                        subgraph_size,
                        hidden,
                        gamma,
                    });
                }
            }
        }
        Ok(points)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub subgraph_size: usize,
    pub hidden: usize,
    pub gamma: f64,
}

impl SweepPoint {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            subgraph_size: self.subgraph_size,
            hidden: self.hidden,
            gamma: self.gamma,
            ..base.clone()
        }
    }

    pub fn label(&self) -> String {
        format!("P{}-d{}-g{}", self.subgraph_size, self.hidden, self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_validate() {
        for (name, text) in BUNDLED {
            let cfg = parse(text, Path::new(name)).unwrap();
            cfg.train.validate().unwrap();
            assert_eq!(cfg.dataset.name, *name);
            assert!(cfg.injection_plan(0).is_ok(), "{name}");
        }
    }

    #[test]
    fn bundled_defaults_follow_the_reference_settings() {
        let cfg = |n| parse(bundled(n).unwrap(), Path::new(n)).unwrap().train;
        for n in ["cora", "citeseer", "pubmed", "blogcatalog", "flickr"] {
            let t = cfg(n);
            assert_eq!((t.subgraph_size, t.hidden, t.batch_size, t.rounds), (4, 64, 300, 300), "{n}");
        }
        assert_eq!((cfg("cora").lr, cfg("cora").epochs, cfg("cora").gamma), (0.001, 100, 0.6));
        assert_eq!((cfg("citeseer").lr, cfg("citeseer").epochs, cfg("citeseer").gamma), (0.001, 100, 0.6));
        assert_eq!((cfg("pubmed").lr, cfg("pubmed").epochs, cfg("pubmed").gamma), (0.001, 100, 0.4));
        assert_eq!((cfg("blogcatalog").lr, cfg("blogcatalog").epochs), (0.003, 400));
        assert_eq!((cfg("flickr").lr, cfg("flickr").epochs), (0.001, 400));
    }

    #[test]
    fn overrides_beat_file_values() {
        let mut cfg = parse(bundled("cora").unwrap(), Path::new("cora")).unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            rounds: Some(3),
            variant: Some(Variant::SubWeight),
            ..Overrides::default()
        });
        assert_eq!((cfg.train.seed, cfg.train.rounds, cfg.train.variant), (7, 3, Variant::SubWeight));
        assert_eq!(cfg.train.effective_gamma(), 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[train]\nlearning_rate = 0.1\n", Path::new("x")).is_err());
        assert!(parse("colour = 1\n", Path::new("x")).is_err());
    }

    #[test]
    fn sweep_grid_size_and_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.sweep_points(), Err(Error::Usage(_))));
        cfg.sweep.gamma = Some(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(cfg.sweep_points().unwrap().len(), 6);
        cfg.sweep.subgraph_size = Some(vec![2, 4]);
        assert_eq!(cfg.sweep_points().unwrap().len(), 12);
        cfg.sweep.hidden = Some(vec![]);
        assert!(matches!(cfg.sweep_points(), Err(Error::Usage(_))));
    }

    #[test]
    fn cora_plan_has_150_anomalies() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.injection_plan(1).unwrap().total(), 150);
        let custom = RunConfig {
            dataset: DatasetConfig {
                name: "mine".into(),
                ..DatasetConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(matches!(custom.injection_plan(1), Err(Error::Config(_))));
    }
}
