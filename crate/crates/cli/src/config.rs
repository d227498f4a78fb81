//! Experiment configuration: an INI file with `[experiment]`, `[data]`,
//! `[train]` and `[analysis]` sections. Every key is optional except the
//! master seed, which may instead come from `--seed`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;
use nslab::nn::Setup;
use nslab::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Ellipsoid,
    MnistRotation,
}

impl DatasetKind {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::Ellipsoid => "ellipsoid",
            DatasetKind::MnistRotation => "mnist-rotation",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "ellipsoid" => Some(DatasetKind::Ellipsoid),
            "mnist-rotation" => Some(DatasetKind::MnistRotation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DatasetKind,
    /// Ellipsoid training / validation image counts.
    pub train_images: usize,
    pub val_images: usize,
    pub videos: usize,
    /// Light-path step for ellipsoid videos.
    pub step: f64,
    /// MNIST-rotation: templates used (0 = every matching IDX image).
    pub templates: usize,
    pub angles: usize,
    pub val_angles: usize,
    pub max_degrees: f64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub digit: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub setups: Vec<Setup>,
    pub realizations: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub tau_d: f64,
    /// Absolute max-pool split; when unset the split is `split_a_rel` times
    /// the mean window-max input SMP of each realization.
    pub split_a: Option<f64>,
    pub split_a_rel: f64,
    /// ε_zero as a fraction of the layer's largest SMP.
    pub eps_zero_rel: f64,
    pub mc_trials: usize,
    pub hist_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub train: TrainSettings,
    pub analysis: AnalysisConfig,
}

/// Command-line values layered over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paper_scale: bool,
}

pub const DEFAULT_OUT: &str = "nslab-out";

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Desk-scale defaults with the given seed.
    pub fn desk(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            out: PathBuf::from(DEFAULT_OUT),
            data: DataConfig {
                kind: DatasetKind::Ellipsoid,
                train_images: 2000,
                val_images: 200,
                videos: 20,
                step: 0.02,
                templates: 40,
                angles: 50,
                val_angles: 5,
                max_degrees: 30.0,
                idx_images: None,
                idx_labels: None,
                digit: 7,
            },
            train: TrainSettings {
                setups: Setup::ALL.to_vec(),
                realizations: 3,
                epochs: 20,
                batch_size: 64,
                learning_rate: 1e-3,
            },
            analysis: AnalysisConfig {
                tau_d: nslab::nonsmooth::DEFAULT_TAU_D,
                split_a: None,
                split_a_rel: 1.0,
                eps_zero_rel: 1e-6,
                mc_trials: 20,
                hist_bins: 50,
            },
        }
    }

    /// Restores the full dataset, video and realization counts.
    pub fn apply_paper_scale(&mut self) {
        let d = &mut self.data;
        d.train_images = 10_000;
        d.val_images = 1000;
        d.videos = 100;
        d.templates = 0;
        d.angles = 60;
        d.val_angles = 60;
        self.train.realizations = 10;
    }

    /// Defaults, then paper-scale counts if requested, then the file, then
    /// `--seed` / `--out`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let ini = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::MissingInput(vec![p.to_path_buf()]));
                }
                Some(Ini::load_from_file(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        let mut cfg = ExperimentConfig::desk(0);
        if overrides.paper_scale {
            cfg.apply_paper_scale();
        }
        let mut seed = None;
        if let Some(ini) = &ini {
            seed = cfg.apply_ini(ini)?;
        }
        cfg.seed = overrides
            .seed
            .or(seed)
            .ok_or_else(|| config_err("no master seed: set `seed` in [experiment] or pass --seed"))?;
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| config_err(e.to_string()))?;
        let mut cfg = ExperimentConfig::desk(0);
        cfg.seed = cfg.apply_ini(&ini)?.ok_or_else(|| config_err("no master seed"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_ini(&mut self, ini: &Ini) -> Result<Option<u64>> {
        let mut seed = None;
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let value = value.trim();
                let bad = |what: &str| config_err(format!("[{section}] {key} = {value:?}: expected {what}"));
                let int = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
                let real = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("a number"));
                match (section, key) {
                    ("experiment", "seed") => seed = Some(value.parse().map_err(|_| bad("an unsigned 64-bit integer"))?),
                    ("experiment", "out") => self.out = PathBuf::from(value),
                    ("data", "kind") => self.data.kind = DatasetKind::from_tag(value).ok_or_else(|| bad("ellipsoid or mnist-rotation"))?,
                    ("data", "train_images") => self.data.train_images = int()?,
                    ("data", "val_images") => self.data.val_images = int()?,
                    ("data", "videos") => self.data.videos = int()?,
                    ("data", "step") => self.data.step = real()?,
                    ("data", "templates") => self.data.templates = int()?,
                    ("data", "angles") => self.data.angles = int()?,
                    ("data", "val_angles") => self.data.val_angles = int()?,
                    ("data", "max_degrees") => self.data.max_degrees = real()?,
                    ("data", "idx_images") => self.data.idx_images = Some(PathBuf::from(value)),
                    ("data", "idx_labels") => self.data.idx_labels = Some(PathBuf::from(value)),
                    ("data", "digit") => self.data.digit = value.parse().map_err(|_| bad("a digit label"))?,
                    ("train", "setups") => {
                        self.train.setups = value
                            .split(',')
                            .map(|t| Setup::from_tag(t.trim()).ok_or_else(|| bad("relu_maxpool and/or softplus_avepool")))
                            .collect::<Result<_>>()?
                    }
                    ("train", "realizations") => self.train.realizations = int()?,
                    ("train", "epochs") => self.train.epochs = int()?,
                    ("train", "batch_size") => self.train.batch_size = int()?,
                    ("train", "learning_rate") => self.train.learning_rate = real()?,
                    ("analysis", "tau_d") => self.analysis.tau_d = real()?,
                    ("analysis", "split_a") => self.analysis.split_a = Some(real()?),
                    ("analysis", "split_a_rel") => self.analysis.split_a_rel = real()?,
                    ("analysis", "eps_zero_rel") => self.analysis.eps_zero_rel = real()?,
                    ("analysis", "mc_trials") => self.analysis.mc_trials = int()?,
                    ("analysis", "hist_bins") => self.analysis.hist_bins = int()?,
                    _ => return Err(config_err(format!("unknown key `{key}` in [{section}]"))),
                }
            }
        }
        Ok(seed)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let t = &self.train;
        let a = &self.analysis;
        let positive = [
            ("videos", d.videos),
            ("realizations", t.realizations),
            ("epochs", t.epochs),
            ("batch_size", t.batch_size),
            ("mc_trials", a.mc_trials),
            ("hist_bins", a.hist_bins),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config_err(format!("`{name}` must be at least 1")));
        }
        match d.kind {
            DatasetKind::Ellipsoid => {
                if d.train_images == 0 || d.val_images == 0 {
                    return Err(config_err("image counts must be at least 1"));
                }
                if !(d.step > 0.0) {
                    return Err(config_err("`step` must be positive"));
                }
            }
            DatasetKind::MnistRotation => {
                if d.angles == 0 || d.val_angles == 0 {
                    return Err(config_err("angle counts must be at least 1"));
                }
                if d.templates == 0 && d.idx_images.is_none() {
                    return Err(config_err("`templates = 0` (all) needs `idx_images`"));
                }
                if d.idx_labels.is_some() && d.idx_images.is_none() {
                    return Err(config_err("`idx_labels` given without `idx_images`"));
                }
            }
        }
        if t.setups.is_empty() {
            return Err(config_err("`setups` must name at least one setup"));
        }
        if !(t.learning_rate > 0.0) || !(a.tau_d > 0.0) || !a.split_a.is_none_or(|v| v > 0.0) || !(a.split_a_rel > 0.0) || !(a.eps_zero_rel >= 0.0) {
            return Err(config_err("learning_rate, tau_d and the split must be positive; eps_zero_rel non-negative"));
        }
        Ok(())
    }

    /// Deterministic dump of every setting that affects results. The output
    /// directory is left out so a moved run keeps its hash.
    pub fn canonical_text(&self) -> String {
        let d = &self.data;
        let t = &self.train;
        let a = &self.analysis;
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]\nseed={}", self.seed);
        let _ = writeln!(
            s,
            "[data]\nkind={}\ntrain_images={}\nval_images={}\nvideos={}\nstep={}\ntemplates={}\nangles={}\nval_angles={}\nmax_degrees={}\nidx_images={}\nidx_labels={}\ndigit={}",
            d.kind.tag(),
            d.train_images,
            d.val_images,
            d.videos,
            d.step,
            d.templates,
            d.angles,
            d.val_angles,
            d.max_degrees,
            opt(&d.idx_images),
            opt(&d.idx_labels),
            d.digit
        );
        let setups: Vec<&str> = t.setups.iter().map(|s| s.tag()).collect();
        let _ = writeln!(
            s,
            "[train]\nsetups={}\nrealizations={}\nepochs={}\nbatch_size={}\nlearning_rate={}",
            setups.join(","),
            t.realizations,
            t.epochs,
            t.batch_size,
            t.learning_rate
        );
        let _ = writeln!(
            s,
            "[analysis]\ntau_d={}\nsplit_a_rel={}\neps_zero_rel={}\nmc_trials={}\nhist_bins={}",
            a.tau_d, a.split_a_rel, a.eps_zero_rel, a.mc_trials, a.hist_bins
        );
        if let Some(v) = a.split_a {
            let _ = writeln!(s, "split_a={v}");
        }
        s
    }
}
