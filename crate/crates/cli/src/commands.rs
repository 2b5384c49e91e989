use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context as _, Result};
use subcr_core::diffusion::DiffusionMatrix;
use subcr_core::error::Error;
use subcr_core::eval::{compute_roc, emit_report};
use subcr_core::graph::{AttributedGraph, DatasetFiles};
use subcr_core::injector::{inject, write_injection};
use subcr_core::nn::read_checkpoint;
use subcr_core::model::ModelParams;
use subcr_core::pipeline::{
    self, diffusion_with_cache, infer, run_with_diffusion, train_with, write_epoch_log, write_experiment, ScoreReport,
    TrainConfig, CHECKPOINT_FILE, EPOCH_LOG_FILE,
};
use subcr_core::synth::citation_like;

use crate::config::{Overrides, RunConfig, SweepPoint};

pub const EFFECTIVE_CONFIG_FILE: &str = "config.toml";
pub const SWEEP_FILE: &str = "sweep.csv";

pub struct Context {
    cfg: RunConfig,
    overrides: Overrides,
}

impl Context {
    pub fn new(config: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let cfg = RunConfig::resolve(config, &overrides).context("configuration")?;
        Ok(Self { cfg, overrides })
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let out = self.cfg.out_dir();
        std::fs::create_dir_all(&out).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?;
        Ok(out)
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.cfg.cache_dir(self.overrides.diffusion_cache.is_some())
    }

    /// The dataset as stored, or generated for synthetic names.
    fn load_raw(&self) -> Result<AttributedGraph> {
        let g = if let Some(synth) = self.cfg.synthetic() {
            citation_like(&synth, self.cfg.dataset.synth_seed)?
        } else {
            let dir = self.cfg.dataset_dir();
            let files = DatasetFiles::in_dir(&dir);
            for path in [&files.edges, &files.attributes] {
                if !path.exists() {
                    return Err(Error::Io {
                        path: path.clone(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
                    }
                    .into());
                }
            }
            files.load()?
        };
        log::info!(
            "dataset {}: {} nodes, {} edges, {} features",
            self.cfg.dataset.name,
            g.num_nodes(),
            g.num_edges(),
            g.num_features()
        );
        Ok(if self.cfg.dataset.binarize {
            g.binarize_attributes()
        } else {
            g
        })
    }

    /// The dataset with anomaly labels; unlabeled data is injected with `seed`.
    fn labeled_graph(&self, seed: u64) -> Result<AttributedGraph> {
        let g = self.load_raw().context("loading dataset")?;
        if g.labels().is_some_and(|l| l.contains(&1)) {
            return Ok(g);
        }
        let plan = self.cfg.injection_plan(seed)?;
        log::info!("injecting {} anomalies (seed {seed})", plan.total());
        Ok(inject(&g, &plan).context("injection")?.graph)
    }

    fn diffusion(&self, g: &AttributedGraph, train: &TrainConfig) -> Result<DiffusionMatrix> {
        let started = Instant::now();
        let s = diffusion_with_cache(g, &train.diffusion(), self.cache_dir().as_deref()).context("diffusion")?;
        log::info!("diffusion ready in {:.1}s", started.elapsed().as_secs_f64());
        Ok(s)
    }

    fn write_effective_config(&self, dir: &Path) -> Result<()> {
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.cfg.to_toml()).map_err(|source| Error::Io { path, source })?;
        Ok(())
    }

    pub fn inject(&self) -> Result<()> {
        let raw = self.load_raw().context("loading dataset")?;
        let plan = self.cfg.injection_plan(self.cfg.train.seed)?;
        let injection = inject(&raw, &plan).context("injection")?;
        let out = self.out_dir()?;
        write_injection(&raw, &injection, &plan, &out)?;
        println!("{} labeled anomalies written to {}", plan.total(), out.display());
        Ok(())
    }

    pub fn diffuse(&self) -> Result<()> {
        let g = self.labeled_graph(self.cfg.train.seed)?;
        let dir = match self.cache_dir() {
            Some(d) => d,
            None => self.out_dir()?.join("cache"),
        };
        let dcfg = self.cfg.train.diffusion();
        diffusion_with_cache(&g, &dcfg, Some(&dir)).context("diffusion")?;
        println!("{}", pipeline::diffusion_cache_path(&dir, &g, &dcfg).display());
        Ok(())
    }

    pub fn train(&self) -> Result<()> {
        let train = &self.cfg.train;
        let g = self.labeled_graph(train.seed)?;
        let s = self.diffusion(&g, train)?;
        let started = Instant::now();
        let outcome = train_with(train, &g, &s, |e| {
            if e.epoch % 10 == 0 || e.epoch == train.epochs {
                log::info!("epoch {}/{} loss {:.6}", e.epoch, train.epochs, e.loss_total);
            }
        })
        .context("training")?;
        let out = self.out_dir()?;
        let ckpt = outcome
            .params
            .to_checkpoint(serde_json::to_value(train).expect("config serializes"));
        subcr_core::nn::write_checkpoint(&ckpt, &out.join(CHECKPOINT_FILE))?;
        write_epoch_log(&outcome.log, &out.join(EPOCH_LOG_FILE))?;
        self.write_effective_config(&out)?;
        let last = outcome.log.last().map_or(f64::NAN, |e| e.loss_total);
        println!(
            "trained {} epochs in {:.1}s, final loss {last:.6}, checkpoint {}",
            train.epochs,
            started.elapsed().as_secs_f64(),
            out.join(CHECKPOINT_FILE).display()
        );
        Ok(())
    }

    pub fn score(&self, checkpoint: Option<PathBuf>) -> Result<()> {
        let path = match checkpoint {
            Some(p) => p,
            None => self.cfg.out_dir().join(CHECKPOINT_FILE),
        };
        let ckpt = read_checkpoint(&path)?;
        let params = ModelParams::from_checkpoint(&ckpt)?;
        let trained = training_config(&ckpt.metadata, &path)?;
        // the graph is rebuilt exactly as it was for training
        let g = self.labeled_graph(trained.seed)?;
        let mut cfg = trained;
        if let Some(r) = self.overrides.rounds {
            cfg.rounds = r;
        }
        if let Some(seed) = self.overrides.seed {
            cfg.seed = seed;
        }
        let s = self.diffusion(&g, &cfg)?;
        let report = infer(&params, &cfg, &g, &s).context("scoring")?;
        let out = self.out_dir()?;
        report.write(&out)?;
        println!(
            "scored {} nodes over {} rounds{}, report in {}",
            report.num_nodes(),
            cfg.rounds,
            low_round_note(&report),
            out.display()
        );
        Ok(())
    }

    pub fn eval(&self, scores: Option<PathBuf>) -> Result<()> {
        let dir = scores.unwrap_or_else(|| self.cfg.out_dir());
        let report = ScoreReport::load(&dir)?;
        let labels = report
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("{} has no labels to evaluate against", dir.display())))?;
        let roc = compute_roc(&report.combined, labels).context("evaluation")?;
        let out = self.out_dir()?;
        emit_report(&roc, &report, &out)?;
        println!("AUC {:.4}{}", roc.auc, low_round_note(&report));
        Ok(())
    }

    pub fn run(&self) -> Result<()> {
        let train = &self.cfg.train;
        let started = Instant::now();
        let g = self.labeled_graph(train.seed)?;
        let s = self.diffusion(&g, train)?;
        let exp = run_with_diffusion(train, &g, &s).context("pipeline")?;
        let out = self.out_dir()?;
        write_experiment(&exp, &out)?;
        self.write_effective_config(&out)?;
        let auc = exp.auc().map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
        println!(
            "AUC {auc} dataset={} variant={} seed={} rounds={} time={:.1}s{}",
            self.cfg.dataset.name,
            train.variant,
            train.seed,
            train.rounds,
            started.elapsed().as_secs_f64(),
            low_round_note(&exp.report)
        );
        Ok(())
    }

    pub fn sweep(&self, jobs: usize) -> Result<()> {
        let points = self.cfg.sweep_points()?;
        let base = &self.cfg.train;
        let g = self.labeled_graph(base.seed)?;
        // no grid touches alpha, so one diffusion serves every point
        let s = self.diffusion(&g, base)?;
        let out = self.out_dir()?;
        let next = AtomicUsize::new(0);
        let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; points.len()]);
        std::thread::scope(|scope| {
            for _ in 0..jobs.clamp(1, points.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(point) = points.get(i) else { break };
                    let row = run_point(point, base, &g, &s, &out.join("sweep").join(point.label()));
                    match &row.outcome {
                        Ok(auc) => log::info!("{}: AUC {auc:.4}", point.label()),
                        Err(e) => log::warn!("{}: failed: {e}", point.label()),
                    }
                    rows.lock().expect("sweep worker panicked")[i] = Some(row);
                });
            }
        });
        let rows: Vec<SweepRow> = rows
            .into_inner()
            .expect("sweep worker panicked")
            .into_iter()
            .map(|r| r.expect("every point ran"))
            .collect();
        let path = out.join(SWEEP_FILE);
        std::fs::write(&path, sweep_csv(&rows)).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        self.write_effective_config(&out)?;
        let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
        println!("{} points ({failed} failed) written to {}", rows.len(), path.display());
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SweepRow {
    point: SweepPoint,
    outcome: std::result::Result<f64, String>,
    seconds: f64,
}

fn run_point(point: &SweepPoint, base: &TrainConfig, g: &AttributedGraph, s: &DiffusionMatrix, dir: &Path) -> SweepRow {
    let started = Instant::now();
    let attempt = || -> subcr_core::error::Result<f64> {
        let cfg = point.apply(base);
        cfg.validate()?;
        let exp = run_with_diffusion(&cfg, g, s)?;
        write_experiment(&exp, dir)?;
        exp.auc()
            .ok_or_else(|| Error::UndefinedMetric("graph carries no labels".into()))
    };
    let outcome = attempt().map_err(|e| e.to_string());
    SweepRow {
        point: *point,
        outcome,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("subgraph_size,hidden,gamma,auc,runtime_s,error\n");
    for r in rows {
        let (auc, err) = match &r.outcome {
            Ok(a) => (a.to_string(), String::new()),
            Err(e) => (String::new(), format!("\"{}\"", e.replace('"', "\"\""))),
        };
        writeln!(
            s,
            "{},{},{},{auc},{:.3},{err}",
            r.point.subgraph_size, r.point.hidden, r.point.gamma, r.seconds
        )
        .expect("string write");
    }
    s
}

fn training_config(metadata: &str, path: &Path) -> Result<TrainConfig> {
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let meta: serde_json::Value = serde_json::from_str(metadata).map_err(|e| format(e.to_string()))?;
    let run = meta
        .get("run")
        .cloned()
        .ok_or_else(|| format("checkpoint lacks its training configuration".into()))?;
    Ok(serde_json::from_value(run).map_err(|e| format(e.to_string()))?)
}

fn low_round_note(report: &ScoreReport) -> &'static str {
    if report.meta.low_round {
        " (low-round)"
    } else {
        ""
    }
}
