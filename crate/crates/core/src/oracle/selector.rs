//! Textual oracle selectors, as accepted on the command line.
//!
//! ```text
//! toy-attention                 self-attention toy over stored features
//! toy-norm                      smoothed normalized-norm toy over stored features
//! linear:BASE:W0,W1,..[:SLOPE]  linear fragment-mask oracle
//! pixel[:mean|toy-attention|toy-norm]
//!                               mask pixels, 4x4 mean-RGB grid features, inner scorer
//! exec:COMMAND                  external oracle as a child process on stdio
//! tcp:HOST:PORT                 external oracle over TCP
//! ```

use std::str::FromStr;

use super::{
    ExternalOracle, FeatureOracle, GridMeanRgb, LinearMaskOracle, MeanFeatureScorer, Oracle, PixelOracle,
    SmoothedNormScorer, ToyAttentionScorer,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerScorer {
    Mean,
    ToyAttention,
    ToyNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSelector {
    ToyAttention,
    ToyNorm,
    Linear {
        base: f64,
        weights: Vec<f64>,
        frame_slope: f64,
    },
    Pixel(InnerScorer),
    Exec(String),
    Tcp(String),
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Validation(format!("bad {what} `{s}` in linear oracle selector")))
}

impl FromStr for OracleSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("toy-attention", None) => Ok(Self::ToyAttention),
            ("toy-norm", None) => Ok(Self::ToyNorm),
            ("pixel", None) | ("pixel", Some("mean")) => Ok(Self::Pixel(InnerScorer::Mean)),
            ("pixel", Some("toy-attention")) => Ok(Self::Pixel(InnerScorer::ToyAttention)),
            ("pixel", Some("toy-norm")) => Ok(Self::Pixel(InnerScorer::ToyNorm)),
            ("linear", Some(params)) => {
                let parts: Vec<&str> = params.split(':').collect();
                if !(2..=3).contains(&parts.len()) {
                    return Err(Error::Validation(format!(
                        "linear selector wants BASE:W0,W1,..[:SLOPE], got `{params}`"
                    )));
                }
                let base = parse_f64(parts[0], "base")?;
                let weights = parts[1]
                    .split(',')
                    .map(|w| parse_f64(w, "weight"))
                    .collect::<Result<Vec<_>>>()?;
                let frame_slope = match parts.get(2) {
                    Some(p) => parse_f64(p, "slope")?,
                    None => 0.0,
                };
                Ok(Self::Linear {
                    base,
                    weights,
                    frame_slope,
                })
            }
            ("exec", Some(cmd)) if !cmd.trim().is_empty() => Ok(Self::Exec(cmd.to_string())),
            ("tcp", Some(addr)) if !addr.trim().is_empty() => Ok(Self::Tcp(addr.to_string())),
            _ => Err(Error::Validation(format!("unknown oracle selector `{s}`"))),
        }
    }
}

impl OracleSelector {
    pub fn build(&self) -> Result<Box<dyn Oracle>> {
        Ok(match self {
            Self::ToyAttention => Box::new(FeatureOracle::new(ToyAttentionScorer)),
            Self::ToyNorm => Box::new(FeatureOracle::new(SmoothedNormScorer::default())),
            Self::Linear {
                base,
                weights,
                frame_slope,
            } => Box::new(LinearMaskOracle::new(*base, weights.clone())?.with_frame_slope(*frame_slope)),
            Self::Pixel(inner) => match inner {
                InnerScorer::Mean => Box::new(PixelOracle::new(GridMeanRgb::default(), MeanFeatureScorer)),
                InnerScorer::ToyAttention => {
                    Box::new(PixelOracle::new(GridMeanRgb::default(), ToyAttentionScorer))
                }
                InnerScorer::ToyNorm => Box::new(PixelOracle::new(
                    GridMeanRgb::default(),
                    SmoothedNormScorer::default(),
                )),
            },
            Self::Exec(cmd) => Box::new(ExternalOracle::spawn(cmd)?),
            Self::Tcp(addr) => Box::new(ExternalOracle::connect(addr)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_selectors() {
        assert_eq!("toy-attention".parse::<OracleSelector>().unwrap(), OracleSelector::ToyAttention);
        assert_eq!(
            "linear:0.8:0.3,0.1:0.001".parse::<OracleSelector>().unwrap(),
            OracleSelector::Linear {
                base: 0.8,
                weights: vec![0.3, 0.1],
                frame_slope: 0.001
            }
        );
        assert_eq!(
            "pixel".parse::<OracleSelector>().unwrap(),
            OracleSelector::Pixel(InnerScorer::Mean)
        );
        assert_eq!(
            "exec:python3 -m adapter".parse::<OracleSelector>().unwrap(),
            OracleSelector::Exec("python3 -m adapter".into())
        );
        assert_eq!(
            "tcp:127.0.0.1:9000".parse::<OracleSelector>().unwrap(),
            OracleSelector::Tcp("127.0.0.1:9000".into())
        );
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "toy", "linear:x:1", "linear:0.5", "exec:", "pixel:nope"] {
            assert!(bad.parse::<OracleSelector>().is_err(), "{bad}");
        }
    }
}
