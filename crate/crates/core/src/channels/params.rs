use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LinearFit, MaxPoolChannelParams, MixtureBranch, ReluChannelParams, SmallBranch};
use crate::error::{Error, Result};
use crate::synth::store::parse_manifest;

const FORMAT: &str = "nslab-channels";
const VERSION: u32 = 1;

/// Fitted channel parameters of one realization, persisted as `key=value`
/// lines. Unfit branches are simply absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub relu: ReluChannelParams,
    pub maxpool: MaxPoolChannelParams,
    pub w0: Option<f64>,
    /// Real conv output SMP regressed on the actual-weight prediction.
    pub conv_line: Option<LinearFit>,
}

impl ChannelParams {
    pub fn to_text(&self) -> String {
        let mut s = format!("format={FORMAT}\nversion={VERSION}\n");
        let r = &self.relu;
        let _ = writeln!(s, "relu.theta={}\nrelu.sigma={}\nrelu.eps_zero={}", r.theta, r.sigma, r.eps_zero);
        let _ = writeln!(s, "maxpool.a={}", self.maxpool.a);
        if let Some(b) = self.maxpool.small {
            let _ = writeln!(s, "maxpool.mu0={}\nmaxpool.sigma0={}", b.mu0, b.sigma0);
        }
        if let Some(m) = self.maxpool.mixture {
            let _ = writeln!(
                s,
                "maxpool.pi0={}\nmaxpool.sigma1={}\nmaxpool.mu2={}\nmaxpool.sigma2={}",
                m.pi0, m.sigma1, m.mu2, m.sigma2
            );
        }
        if let Some(w0) = self.w0 {
            let _ = writeln!(s, "conv.w0={w0}");
        }
        if let Some(l) = self.conv_line {
            let _ = writeln!(s, "conv.slope={}\nconv.intercept={}", l.slope, l.intercept);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let m = parse_manifest(text);
        let bad = |msg: String| Error::Format {
            what: "channel params".into(),
            offset: 0,
            msg,
        };
        if m.get("format").map(String::as_str) != Some(FORMAT) {
            return Err(bad("missing format line".into()));
        }
        if m.get("version").map(String::as_str) != Some("1") {
            return Err(bad(format!("unsupported version {:?}", m.get("version"))));
        }
        let opt = |key: &str| -> Result<Option<f64>> {
            m.get(key).map(|v| v.parse::<f64>().map_err(|_| bad(format!("invalid `{key}`")))).transpose()
        };
        let req = |key: &str| -> Result<f64> { opt(key)?.ok_or_else(|| bad(format!("missing `{key}`"))) };
        let relu = ReluChannelParams {
            theta: req("relu.theta")?,
            sigma: req("relu.sigma")?,
            eps_zero: req("relu.eps_zero")?,
        };
        relu.validate()?;
        let small = match (opt("maxpool.mu0")?, opt("maxpool.sigma0")?) {
            (Some(mu0), Some(sigma0)) => Some(SmallBranch { mu0, sigma0 }),
            (None, None) => None,
            _ => return Err(bad("incomplete small-input branch".into())),
        };
        let mixture = match (opt("maxpool.pi0")?, opt("maxpool.sigma1")?, opt("maxpool.mu2")?, opt("maxpool.sigma2")?) {
            (Some(pi0), Some(sigma1), Some(mu2), Some(sigma2)) => Some(MixtureBranch { pi0, sigma1, mu2, sigma2 }),
            (None, None, None, None) => None,
            _ => return Err(bad("incomplete mixture branch".into())),
        };
        Ok(ChannelParams {
            relu,
            maxpool: MaxPoolChannelParams {
                a: req("maxpool.a")?,
                small,
                mixture,
            },
            w0: opt("conv.w0")?,
            conv_line: match (opt("conv.slope")?, opt("conv.intercept")?) {
                (Some(slope), Some(intercept)) => Some(LinearFit { slope, intercept }),
                (None, None) => None,
                _ => return Err(bad("incomplete conv line".into())),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(vec![path.to_path_buf()]));
        }
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = ChannelParams {
            relu: ReluChannelParams {
                theta: 0.7123456789012345,
                sigma: 1.0 / 3.0,
                eps_zero: 1e-9,
            },
            maxpool: MaxPoolChannelParams {
                a: 0.0025,
                small: None,
                mixture: Some(MixtureBranch {
                    pi0: 0.6,
                    sigma1: 0.1f64.powi(7),
                    mu2: std::f64::consts::PI,
                    sigma2: 2e-300,
                }),
            },
            w0: Some(0.0123),
            conv_line: Some(LinearFit {
                slope: 0.6000000000000001,
                intercept: -1.5e-5,
            }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.txt");
        p.save(&path).unwrap();
        assert_eq!(ChannelParams::load(&path).unwrap(), p);
    }

    #[test]
    fn rejects_bad_text() {
        assert!(ChannelParams::from_text("version=1\n").is_err());
        assert!(ChannelParams::from_text("format=nslab-channels\nversion=2\n").is_err());
        let partial = "format=nslab-channels\nversion=1\nrelu.theta=0.5\nrelu.sigma=0\nrelu.eps_zero=0\nmaxpool.a=0.1\nmaxpool.mu0=1\n";
        assert!(ChannelParams::from_text(partial).is_err());
        assert!(matches!(ChannelParams::load(Path::new("/nonexistent/p.txt")), Err(Error::MissingInput(_))));
    }
}
