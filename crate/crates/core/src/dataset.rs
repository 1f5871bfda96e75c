//! Line-delimited JSON dataset of channel realizations.
//!
//! Line 1 is a header object; every following line is one realization:
//!
//! ```text
//! {"format":"d2d-qgnn-dataset","version":1,"generator":"d2d-qgnn 0.1.0","pairs":4,...}
//! {"split":"train","id":0,"g":[[[re,im],[re,im],...],...]}
//! ```
//!
//! `g[k][m]` is the gain from transmitter `k` to receiver `m`.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_scenario, realize_channels, ChannelRealization, Fading, LinkBudget};
use crate::error::{Error, Result};
use crate::seed;

pub const DATASET_FORMAT: &str = "d2d-qgnn-dataset";
pub const DATASET_VERSION: u32 = 1;

pub fn generator_version() -> String {
    format!("d2d-qgnn {}", env!("CARGO_PKG_VERSION"))
}

/// Geometry of the square deployment region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub pairs: usize,
    pub side: f64,
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub generator: String,
    pub pairs: usize,
    pub side: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub pathloss_exponent: f64,
    pub fading: Fading,
    pub sigma2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub p_max: f64,
    pub seed: u64,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn label(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    split: Split,
    id: usize,
    g: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub train: Vec<ChannelRealization>,
    pub test: Vec<ChannelRealization>,
}

/// Realization `index` of `split`: fresh positions and fading, each from its own
/// derived seed.
pub fn draw_realization(
    geom: &Geometry,
    budget: &LinkBudget,
    seed: u64,
    split: Split,
    index: usize,
) -> Result<ChannelRealization> {
    let path = [split.label(), index as u64];
    let scenario = generate_scenario(
        geom.pairs,
        geom.side,
        geom.d_min,
        geom.d_max,
        seed::derive(seed, &[path[0], path[1], 0]),
    )?;
    realize_channels(&scenario, budget, seed::derive(seed, &[path[0], path[1], 1]))
}

pub fn generate_dataset(geom: &Geometry, budget: &LinkBudget, train: usize, test: usize, seed: u64) -> Result<Dataset> {
    if !budget.alpha.is_empty() {
        Error::check_len(geom.pairs, budget.alpha.len())?;
    }
    let draw =
        |split, n| -> Result<Vec<_>> { (0..n).map(|i| draw_realization(geom, budget, seed, split, i)).collect() };
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        generator: generator_version(),
        pairs: geom.pairs,
        side: geom.side,
        d_min: geom.d_min,
        d_max: geom.d_max,
        pathloss_exponent: budget.pathloss_exponent,
        fading: budget.fading,
        sigma2: vec![budget.sigma2; geom.pairs],
        alpha: budget.weights(geom.pairs),
        p_max: budget.p_max,
        seed,
        train,
        test,
    };
    Ok(Dataset {
        header,
        train: draw(Split::Train, train)?,
        test: draw(Split::Test, test)?,
    })
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        let splits = [(Split::Train, &self.train), (Split::Test, &self.test)];
        for (split, set) in splits {
            for (id, ch) in set.iter().enumerate() {
                let n = ch.pairs();
                let g = (0..n)
                    .map(|k| (0..n).map(|m| [ch.g(k, m).re, ch.g(k, m).im]).collect())
                    .collect();
                out.push_str(&serde_json::to_string(&Record { split, id, g }).expect("record serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Format {
            what: "dataset",
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let header: DatasetHeader = serde_json::from_str(first).map_err(|e| bad(1, e.to_string()))?;
        if header.format != DATASET_FORMAT {
            return Err(bad(1, format!("unknown format {:?}", header.format)));
        }
        if header.version != DATASET_VERSION {
            return Err(bad(1, format!("unsupported version {}", header.version)));
        }
        let n = header.pairs;
        let mut train = Vec::with_capacity(header.train);
        let mut test = Vec::with_capacity(header.test);
        for (i, line) in lines {
            let lineno = i + 1;
            let rec: Record = serde_json::from_str(line).map_err(|e| bad(lineno, e.to_string()))?;
            if rec.g.len() != n || rec.g.iter().any(|row| row.len() != n) {
                return Err(bad(lineno, format!("expected a {n}x{n} gain matrix")));
            }
            let gains = rec.g.iter().flatten().map(|&[re, im]| Complex64::new(re, im)).collect();
            let ch = ChannelRealization::new(n, gains, header.sigma2.clone(), header.alpha.clone(), header.p_max)
                .map_err(|e| bad(lineno, e.to_string()))?;
            let set = match rec.split {
                Split::Train => &mut train,
                Split::Test => &mut test,
            };
            if rec.id != set.len() {
                return Err(bad(lineno, format!("record id {} out of order", rec.id)));
            }
            set.push(ch);
        }
        if train.len() != header.train || test.len() != header.test {
            return Err(bad(
                0,
                format!(
                    "header declares {}/{} train/test records, found {}/{}",
                    header.train,
                    header.test,
                    train.len(),
                    test.len()
                ),
            ));
        }
        Ok(Self { header, train, test })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> Geometry {
        Geometry {
            pairs: 3,
            side: 100.0,
            d_min: 2.0,
            d_max: 10.0,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = generate_dataset(&geom(), &LinkBudget::default(), 5, 2, 42).unwrap();
        let text = ds.to_jsonl();
        assert_eq!(text.lines().count(), 1 + 5 + 2);
        let back = Dataset::from_jsonl(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(&geom(), &LinkBudget::default(), 4, 1, 9).unwrap();
        let b = generate_dataset(&geom(), &LinkBudget::default(), 4, 1, 9).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_ne!(a.train[0], a.train[1]);
        assert_ne!(a.train[0], a.test[0]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let ds = generate_dataset(&geom(), &LinkBudget::default(), 2, 1, 1).unwrap();
        let text = ds.to_jsonl();
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Dataset::from_jsonl(&truncated), Err(Error::Format { .. })));
        let wrong = text.replace(DATASET_FORMAT, "something-else");
        assert!(Dataset::from_jsonl(&wrong).is_err());
        assert!(Dataset::from_jsonl("").is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        assert!(Dataset::from_jsonl(&lines.join("\n")).is_err());
    }
}
