use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, MlpConfig};
use crate::stick::GemPrior;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    GaussVae,
    SbVae,
}

/// Reparameterizable family used for the stick fractions of an SB-VAE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FractionParam {
    Kumaraswamy,
    Gamma,
    GaussLogit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatentPrior {
    StandardNormal,
    Gem(GemPrior),
}

/// M2-style semi-supervision: `C` classes and the weight λ given to the
/// labeled part of each minibatch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiSupConfig {
    classes: usize,
    supervised_weight: f64,
}

/// λ used for MNIST-class data.
pub const DEFAULT_SUPERVISED_WEIGHT: f64 = 0.375;

impl SemiSupConfig {
    pub fn new(classes: usize, supervised_weight: f64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("semi-supervised model needs at least one class".into()));
        }
        if !(supervised_weight > 0.0 && supervised_weight < 1.0) {
            return Err(Error::Config(format!(
                "supervised weight must lie in (0, 1), got {supervised_weight}"
            )));
        }
        Ok(Self { classes, supervised_weight })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn supervised_weight(&self) -> f64 {
        self.supervised_weight
    }
}

macro_rules! string_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+ $(,)?) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(Variant, "variant", GaussVae => "gauss_vae", SbVae => "sb_vae");
string_enum!(
    FractionParam,
    "fraction parametrization",
    Kumaraswamy => "kumaraswamy",
    Gamma => "gamma",
    GaussLogit => "gauss_logit",
);

/// Everything that fixes a model's shape. The classifier of a
/// semi-supervised model shares the encoder trunk: its logits are the last
/// `C` encoder outputs, and the decoder reads the latent concatenated with a
/// one-hot label.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    variant: Variant,
    fraction_param: Option<FractionParam>,
    latent_dim: usize,
    prior: LatentPrior,
    input_dim: usize,
    encoder_hidden: Vec<usize>,
    decoder_hidden: Vec<usize>,
    skip_connections: bool,
    semisup: Option<SemiSupConfig>,
    mc_samples: usize,
}

impl ModelSpec {
    pub fn gauss_vae(input_dim: usize, latent_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        Self {
            variant: Variant::GaussVae,
            fraction_param: None,
            latent_dim,
            prior: LatentPrior::StandardNormal,
            input_dim,
            encoder_hidden: hidden.clone(),
            decoder_hidden: hidden,
            skip_connections: false,
            semisup: None,
            mc_samples: 1,
        }
        .validated()
    }

    /// SB-VAE with truncation `K = truncation` and a GEM(α₀) prior.
    pub fn sb_vae(
        input_dim: usize,
        truncation: usize,
        fraction_param: FractionParam,
        alpha0: f64,
        hidden: Vec<usize>,
    ) -> Result<Self> {
        Self {
            variant: Variant::SbVae,
            fraction_param: Some(fraction_param),
            latent_dim: truncation,
            prior: LatentPrior::Gem(GemPrior::new(alpha0)?),
            input_dim,
            encoder_hidden: hidden.clone(),
            decoder_hidden: hidden,
            skip_connections: false,
            semisup: None,
            mc_samples: 1,
        }
        .validated()
    }

    pub fn with_semisup(mut self, cfg: SemiSupConfig) -> Self {
        self.semisup = Some(cfg);
        self
    }

    pub fn with_mc_samples(mut self, samples: usize) -> Result<Self> {
        self.mc_samples = samples;
        self.validated()
    }

    pub fn with_decoder_hidden(mut self, hidden: Vec<usize>) -> Result<Self> {
        self.decoder_hidden = hidden;
        self.validated()
    }

    /// Identity skip connections between consecutive equal-width hidden
    /// layers of both networks.
    pub fn with_skip_connections(mut self, on: bool) -> Self {
        self.skip_connections = on;
        self
    }

    fn validated(self) -> Result<Self> {
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("need at least one Monte Carlo sample".into()));
        }
        if self.encoder_hidden.is_empty() || self.decoder_hidden.is_empty() {
            return Err(Error::Config("encoder and decoder need a hidden layer".into()));
        }
        match self.variant {
            Variant::GaussVae if self.latent_dim == 0 => {
                Err(Error::Config("latent dimension must be positive".into()))
            }
            Variant::SbVae if self.latent_dim < 2 => Err(Error::Config(format!(
                "truncation level must be at least 2, got {}",
                self.latent_dim
            ))),
            _ => Ok(self),
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn fraction_param(&self) -> Option<FractionParam> {
        self.fraction_param
    }

    /// Latent width: Gaussian dimension, or truncation `K` of the stick.
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn prior(&self) -> LatentPrior {
        self.prior
    }

    pub fn alpha0(&self) -> Option<f64> {
        match self.prior {
            LatentPrior::Gem(g) => Some(g.alpha0()),
            LatentPrior::StandardNormal => None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn encoder_hidden(&self) -> &[usize] {
        &self.encoder_hidden
    }

    pub fn decoder_hidden(&self) -> &[usize] {
        &self.decoder_hidden
    }

    pub fn skip_connections(&self) -> bool {
        self.skip_connections
    }

    pub fn semisup(&self) -> Option<SemiSupConfig> {
        self.semisup
    }

    pub fn classes(&self) -> usize {
        self.semisup.map_or(0, |s| s.classes)
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    /// Number of latent coordinates that carry a variational distribution:
    /// `K` Gaussian dimensions or `K − 1` stick fractions.
    pub fn stochastic_dim(&self) -> usize {
        match self.variant {
            Variant::GaussVae => self.latent_dim,
            Variant::SbVae => self.latent_dim - 1,
        }
    }

    /// Columns of per-row noise consumed by one latent sample.
    pub fn noise_dim(&self) -> usize {
        match self.fraction_param {
            Some(FractionParam::Gamma) => 2 * self.stochastic_dim(),
            _ => self.stochastic_dim(),
        }
    }

    pub fn encoder_config(&self) -> MlpConfig {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.encoder_hidden);
        widths.push(2 * self.stochastic_dim() + self.classes());
        self.mlp(widths)
    }

    pub fn decoder_config(&self) -> MlpConfig {
        let mut widths = vec![self.latent_dim + self.classes()];
        widths.extend(&self.decoder_hidden);
        widths.push(self.input_dim);
        self.mlp(widths)
    }

    fn mlp(&self, widths: Vec<usize>) -> MlpConfig {
        let skip = (1..widths.len() - 1)
            .map(|i| self.skip_connections && i > 1 && widths[i - 1] == widths[i])
            .collect();
        MlpConfig::new(widths, Activation::Relu, skip).expect("widths validated by ModelSpec")
    }

    /// Plain-text `key=value` description stored in checkpoints.
    pub fn to_header(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s += &format!("variant={}\n", self.variant);
        if let Some(f) = self.fraction_param {
            s += &format!("fraction_param={f}\n");
        }
        s += &format!("K={}\n", self.latent_dim);
        if let Some(a) = self.alpha0() {
            s += &format!("alpha0={a:?}\n");
        }
        s += &format!("samples={}\n", self.mc_samples);
        s += &format!("input_dim={}\n", self.input_dim);
        s += &format!("encoder_hidden={}\n", list(&self.encoder_hidden));
        s += &format!("decoder_hidden={}\n", list(&self.decoder_hidden));
        s += &format!("skip={}\n", self.skip_connections);
        if let Some(ss) = self.semisup {
            s += &format!("classes={}\n", ss.classes);
            s += &format!("lambda={:?}\n", ss.supervised_weight);
        }
        s
    }

    pub fn from_header(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed header line '{line}'")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("model header lacks '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Config(format!("bad integer for '{k}'")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Config(format!("bad number for '{k}'")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad list for '{k}'"))))
                .collect()
        };
        let hidden = list("encoder_hidden")?;
        let spec = match get("variant")?.parse()? {
            Variant::GaussVae => Self::gauss_vae(num("input_dim")?, num("K")?, hidden)?,
            Variant::SbVae => Self::sb_vae(
                num("input_dim")?,
                num("K")?,
                get("fraction_param")?.parse()?,
                real("alpha0")?,
                hidden,
            )?,
        };
        let mut spec = spec
            .with_decoder_hidden(list("decoder_hidden")?)?
            .with_mc_samples(num("samples")?)?
            .with_skip_connections(get("skip")? == "true");
        if map.contains_key("classes") {
            spec = spec.with_semisup(SemiSupConfig::new(num("classes")?, real("lambda")?)?);
        }
        Ok(spec)
    }
}
