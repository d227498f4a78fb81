//! Where each artifact lives under the output directory.

use std::path::{Path, PathBuf};

use nslab::nn::Setup;

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_set(&self) -> PathBuf {
        self.root.join("data/train")
    }

    pub fn val_set(&self) -> PathBuf {
        self.root.join("data/val")
    }

    pub fn video(&self, v: usize) -> PathBuf {
        self.root.join(format!("data/videos/v{v:03}"))
    }

    pub fn checkpoint(&self, setup: Setup, r: usize) -> PathBuf {
        self.root.join(format!("models/{}_r{r:02}.nsmn", setup.tag()))
    }

    pub fn loss_csv(&self, setup: Setup, r: usize) -> PathBuf {
        self.root.join(format!("models/{}_r{r:02}_loss.csv", setup.tag()))
    }

    pub fn smp_cache(&self, r: usize, v: usize) -> PathBuf {
        self.root.join(format!("smp/relu_maxpool_r{r:02}_v{v:03}.bin"))
    }

    pub fn channel_params(&self, r: usize) -> PathBuf {
        self.root.join(format!("channels/relu_maxpool_r{r:02}.txt"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn manifest(&self) -> PathBuf {
        self.report("manifest.txt")
    }
}
