//! Flat `key = value` run configuration. `#` starts a comment; unknown or
//! repeated keys are errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::models::{FractionParam, ModelSpec, SemiSupConfig, Variant, DEFAULT_SUPERVISED_WEIGHT};

pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_PATIENCE: usize = 30;

const KEYS: &[&str] = &[
    "variant",
    "fraction_param",
    "K",
    "input_dim",
    "alpha0",
    "hidden",
    "decoder_hidden",
    "samples",
    "skip_connections",
    "classes",
    "lambda",
    "keep_fraction",
    "seed",
    "batch_size",
    "epochs",
    "patience",
    "learning_rate",
    "images",
    "labels",
    "train_size",
    "valid_size",
    "test_size",
    "binarize",
];

/// Optimization settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 0,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Everything a `train` invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub keep_fraction: f64,
    pub images: PathBuf,
    pub labels: Option<PathBuf>,
    pub split_sizes: (usize, usize, usize),
    pub binarize: bool,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn parse<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|_| {
                let line = self.map[key].0;
                Error::Config(format!("line {line}: invalid value '{v}' for '{key}'"))
            }),
            None => default.ok_or_else(|| Error::Config(format!("missing required key '{key}'"))),
        }
    }

    fn list(&self, key: &str, default: &str) -> Result<Vec<usize>> {
        self.raw(key)
            .unwrap_or(default)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid width list for '{key}'")))
            })
            .collect()
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative data paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
            }
            if map.insert(k.to_string(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        let e = Entries { map };

        let variant: Variant = e.required("variant")?.parse()?;
        let input_dim = e.parse("input_dim", Some(784))?;
        let hidden = e.list("hidden", "500")?;
        let k: usize = e.parse("K", None)?;
        let mut spec = match variant {
            Variant::GaussVae => ModelSpec::gauss_vae(input_dim, k, hidden.clone())?,
            Variant::SbVae => ModelSpec::sb_vae(
                input_dim,
                k,
                e.required("fraction_param")?.parse::<FractionParam>()?,
                e.parse("alpha0", Some(5.0))?,
                hidden.clone(),
            )?,
        };
        if e.raw("decoder_hidden").is_some() {
            spec = spec.with_decoder_hidden(e.list("decoder_hidden", "")?)?;
        }
        spec = spec
            .with_mc_samples(e.parse("samples", Some(1))?)?
            .with_skip_connections(e.parse("skip_connections", Some(false))?);
        let classes: usize = e.parse("classes", Some(0))?;
        if classes > 0 {
            let lambda = e.parse("lambda", Some(DEFAULT_SUPERVISED_WEIGHT))?;
            spec = spec.with_semisup(SemiSupConfig::new(classes, lambda)?);
        } else if e.raw("lambda").is_some() || e.raw("keep_fraction").is_some() {
            return Err(Error::Config("'lambda' and 'keep_fraction' need 'classes'".into()));
        }

        let train = TrainConfig {
            batch_size: e.parse("batch_size", Some(DEFAULT_BATCH_SIZE))?,
            epochs: e.parse("epochs", None)?,
            patience: e.parse("patience", Some(DEFAULT_PATIENCE))?,
            seed: e.parse("seed", Some(0))?,
            adam: AdamConfig {
                learning_rate: e.parse("learning_rate", Some(AdamConfig::default().learning_rate))?,
                ..AdamConfig::default()
            },
        };
        if train.batch_size == 0 {
            return Err(Error::Config("'batch_size' must be at least 1".into()));
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base_dir.join(p) }
        };
        let images = resolve(e.required("images")?);
        let labels = e.raw("labels").map(resolve);
        if classes > 0 && labels.is_none() {
            return Err(Error::Config("missing required key 'labels' for a semi-supervised run".into()));
        }
        let keep_fraction = e.parse("keep_fraction", Some(1.0))?;
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
        }
        Ok(Self {
            spec,
            train,
            keep_fraction,
            images,
            labels,
            split_sizes: (
                e.parse("train_size", Some(45_000))?,
                e.parse("valid_size", Some(5_000))?,
                e.parse("test_size", Some(10_000))?,
            ),
            binarize: e.parse("binarize", Some(false))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# desk run
variant = sb_vae
fraction_param = kumaraswamy
K = 20
alpha0 = 5
hidden = 200,200
seed = 7
epochs = 30
images = data/x.idx
labels = /abs/y.idx
train_size = 5000
valid_size = 1000
test_size = 1000
";

    #[test]
    fn parses_basic_config() {
        let c = RunConfig::parse(BASIC, Path::new("/cfg")).unwrap();
        assert_eq!(c.spec.latent_dim(), 20);
        assert_eq!(c.spec.encoder_hidden(), &[200, 200]);
        assert_eq!(c.spec.fraction_param(), Some(FractionParam::Kumaraswamy));
        assert_eq!(c.train.batch_size, 100);
        assert_eq!(c.train.patience, 30);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.images, PathBuf::from("/cfg/data/x.idx"));
        assert_eq!(c.labels, Some(PathBuf::from("/abs/y.idx")));
        assert_eq!(c.split_sizes, (5000, 1000, 1000));
        assert!(!c.binarize);
        assert_eq!(c.spec.classes(), 0);
    }

    #[test]
    fn semi_supervised_keys() {
        let text = format!("{BASIC}classes = 10\nkeep_fraction = 0.1\n");
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(c.spec.classes(), 10);
        assert_eq!(c.spec.semisup().unwrap().supervised_weight(), 0.375);
        assert_eq!(c.keep_fraction, 0.1);
    }

    #[test]
    fn rejects_unknown_duplicate_and_missing_keys() {
        let err = RunConfig::parse(&format!("{BASIC}colour = red\n"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown key 'colour'"));
        let err = RunConfig::parse(&format!("{BASIC}K = 3\n"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("duplicate key 'K'"));
        let no_images: String = BASIC.lines().filter(|l| !l.starts_with("images")).map(|l| format!("{l}\n")).collect();
        let err = RunConfig::parse(&no_images, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("'images'"), "{err}");
        let err = RunConfig::parse(&BASIC.replace("K = 20", "K = twenty"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("'K'"));
        assert!(RunConfig::parse(&format!("{BASIC}lambda = 0.5\n"), Path::new(".")).is_err());
    }
}
