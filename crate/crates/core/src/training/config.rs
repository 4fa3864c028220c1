use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RewardMap;
use crate::discriminator::{HeadLayout, LossWeights};
use crate::encoder::ModelDims;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::nn::AdamConfig;

/// Which training recipe to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `2K` head, all four loss terms, alternating rounds.
    Full,
    /// `K + 1` head with a single fake class.
    ThreeClass,
    /// No supervised generator term (`β = 0`).
    Beta0,
    /// Supervised pre-training only, no adversarial rounds.
    NoGan,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::ThreeClass => "v1",
            Variant::Beta0 => "v2",
            Variant::NoGan => "v3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "v1" | "v1-threeclass" => Ok(Variant::ThreeClass),
            "v2" | "v2-beta0" => Ok(Variant::Beta0),
            "v3" | "v3-nogan" => Ok(Variant::NoGan),
            other => Err(Error::config(format!(
                "unknown variant `{other}` (expected full, v1, v2 or v3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n: usize,
    pub k: usize,
    pub embed: usize,
    pub feedback: usize,
    pub hidden: usize,
    pub action: usize,
    pub head_hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub d_steps: usize,
    pub g_steps: usize,
    pub gen_pretrain_epochs: usize,
    pub disc_pretrain_epochs: usize,
    pub rounds: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Target positive share of the training stream; 0 disables up-sampling.
    pub upsample_ratio: f64,
    pub early_stop: bool,
    pub early_stop_patience: usize,
    pub early_stop_delta: f64,
    /// Size of the validation sample drawn from the training split.
    pub validation_size: usize,
    pub rewards: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        Self {
            n: dims.n,
            k: dims.k,
            embed: dims.embed,
            feedback: dims.feedback,
            hidden: dims.hidden,
            action: dims.action,
            head_hidden: dims.head_hidden,
            lr: 0.001,
            batch_size: 500,
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.3,
            d_steps: 1,
            g_steps: 1,
            gen_pretrain_epochs: 5,
            disc_pretrain_epochs: 5,
            rounds: 50,
            seed: 0,
            variant: Variant::Full,
            upsample_ratio: 0.5,
            early_stop: false,
            early_stop_patience: 5,
            early_stop_delta: 0.001,
            validation_size: 1000,
            rewards: RewardMap::default_for(2).values().to_vec(),
        }
    }
}

fn parse_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid number `{v}` in `{raw}`")))
        })
        .collect()
}

impl TrainConfig {
    /// Parses flat `key=value` text; missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        kv.take_into("n", &mut c.n)?;
        kv.take_into("k", &mut c.k)?;
        kv.take_into("embed", &mut c.embed)?;
        kv.take_into("feedback", &mut c.feedback)?;
        kv.take_into("hidden", &mut c.hidden)?;
        kv.take_into("action", &mut c.action)?;
        kv.take_into("head_hidden", &mut c.head_hidden)?;
        kv.take_into("lr", &mut c.lr)?;
        kv.take_into("batch_size", &mut c.batch_size)?;
        kv.take_into("alpha", &mut c.alpha)?;
        let explicit_beta = kv.take::<f64>("beta")?.map(|v| c.beta = v).is_some();
        kv.take_into("lambda", &mut c.lambda)?;
        kv.take_into("d_steps", &mut c.d_steps)?;
        kv.take_into("g_steps", &mut c.g_steps)?;
        kv.take_into("gen_pretrain_epochs", &mut c.gen_pretrain_epochs)?;
        kv.take_into("disc_pretrain_epochs", &mut c.disc_pretrain_epochs)?;
        let explicit_rounds = kv.take::<usize>("rounds")?.map(|v| c.rounds = v).is_some();
        kv.take_into("seed", &mut c.seed)?;
        kv.take_into("variant", &mut c.variant)?;
        kv.take_into("upsample_ratio", &mut c.upsample_ratio)?;
        kv.take_into("early_stop", &mut c.early_stop)?;
        kv.take_into("early_stop_patience", &mut c.early_stop_patience)?;
        kv.take_into("early_stop_delta", &mut c.early_stop_delta)?;
        kv.take_into("validation_size", &mut c.validation_size)?;
        let explicit_rewards = match kv.take::<String>("rewards")? {
            Some(raw) => {
                c.rewards = parse_list(&raw)?;
                true
            }
            None => false,
        };
        kv.finish()?;
        if !explicit_rewards {
            c.rewards = RewardMap::default_for(c.k).values().to_vec();
        }
        // a variant tag implies its overrides unless the file states them
        if c.variant == Variant::Beta0 && !explicit_beta {
            c.beta = 0.0;
        }
        if c.variant == Variant::NoGan && !explicit_rounds {
            c.rounds = 0;
        }
        c.validate()?;
        Ok(c)
    }

    /// Renders every field as `key=value` lines that [`TrainConfig::from_kv`]
    /// reads back unchanged.
    pub fn to_kv(&self) -> String {
        let rewards: Vec<String> = self.rewards.iter().map(|v| v.to_string()).collect();
        let lines = [
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("embed", self.embed.to_string()),
            ("feedback", self.feedback.to_string()),
            ("hidden", self.hidden.to_string()),
            ("action", self.action.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("lambda", self.lambda.to_string()),
            ("d_steps", self.d_steps.to_string()),
            ("g_steps", self.g_steps.to_string()),
            ("gen_pretrain_epochs", self.gen_pretrain_epochs.to_string()),
            ("disc_pretrain_epochs", self.disc_pretrain_epochs.to_string()),
            ("rounds", self.rounds.to_string()),
            ("seed", self.seed.to_string()),
            ("variant", self.variant.to_string()),
            ("upsample_ratio", self.upsample_ratio.to_string()),
            ("early_stop", self.early_stop.to_string()),
            ("early_stop_patience", self.early_stop_patience.to_string()),
            ("early_stop_delta", self.early_stop_delta.to_string()),
            ("validation_size", self.validation_size.to_string()),
            ("rewards", rewards.join(",")),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n", self.n),
            ("embed", self.embed),
            ("feedback", self.feedback),
            ("hidden", self.hidden),
            ("action", self.action),
            ("head_hidden", self.head_hidden),
            ("batch_size", self.batch_size),
            ("early_stop_patience", self.early_stop_patience),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.k < 2 || self.k > u8::MAX as usize {
            return Err(Error::config(format!("k must be in 2..=255, got {}", self.k)));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.upsample_ratio) {
            return Err(Error::config(format!(
                "upsample_ratio must be in [0, 1), got {}",
                self.upsample_ratio
            )));
        }
        if self.early_stop_delta.is_nan() || self.early_stop_delta < 0.0 {
            return Err(Error::config("early_stop_delta must be >= 0"));
        }
        if self.rewards.len() != self.k {
            return Err(Error::config(format!(
                "rewards has {} values, K is {}",
                self.rewards.len(),
                self.k
            )));
        }
        RewardMap::new(self.rewards.clone())?;
        if self.variant == Variant::Beta0 && self.beta != 0.0 {
            return Err(Error::config("variant v2 requires beta=0 (apply_variant sets it)"));
        }
        if self.variant == Variant::NoGan && self.rounds != 0 {
            return Err(Error::config("variant v3 requires rounds=0 (apply_variant sets it)"));
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n: self.n,
            k: self.k,
            embed: self.embed,
            feedback: self.feedback,
            hidden: self.hidden,
            action: self.action,
            head_hidden: self.head_hidden,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }

    pub fn disc_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            lambda: self.lambda,
        }
    }

    pub fn reward_map(&self) -> Result<RewardMap> {
        RewardMap::new(self.rewards.clone())
    }

    /// Head layout implied by the variant.
    pub fn layout(&self) -> HeadLayout {
        match self.variant {
            Variant::ThreeClass => HeadLayout::SingleFake,
            _ => HeadLayout::Full,
        }
    }

    /// Stable hex digest of the configuration, used to tag reports.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_kv().as_bytes()))[..16].to_string()
    }
}

/// Returns the effective configuration for `variant` and the head layout it
/// wires up.
pub fn apply_variant(config: &TrainConfig, variant: Variant) -> Result<(TrainConfig, HeadLayout)> {
    let mut c = config.clone();
    c.variant = variant;
    match variant {
        Variant::Full | Variant::ThreeClass => {}
        Variant::Beta0 => c.beta = 0.0,
        Variant::NoGan => c.rounds = 0,
    }
    c.validate()?;
    let layout = c.layout();
    Ok((c, layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.n, c.k, c.embed, c.feedback, c.hidden), (20, 2, 20, 10, 128));
        assert_eq!((c.lr, c.batch_size), (0.001, 500));
        assert_eq!((c.alpha, c.beta, c.lambda), (1.0, 1.0, 0.3));
        assert_eq!(c.rewards, vec![0.0, 1.0]);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig::from_kv("n=5\nlambda=0.1\nvariant=v1\nrewards=0,2.5\nearly_stop=true").unwrap();
        assert_eq!(c.n, 5);
        assert_eq!(c.variant, Variant::ThreeClass);
        assert_eq!(c.rewards, vec![0.0, 2.5]);
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert_eq!(c.hash(), TrainConfig::from_kv(&c.to_kv()).unwrap().hash());
        assert_ne!(c.hash(), TrainConfig::default().hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(TrainConfig::from_kv("bogus=1"), Err(Error::Config(_))));
        assert!(TrainConfig::from_kv("lr=0").is_err());
        assert!(TrainConfig::from_kv("batch_size=0").is_err());
        assert!(TrainConfig::from_kv("lambda=-1").is_err());
        assert!(TrainConfig::from_kv("variant=v9").is_err());
        assert!(TrainConfig::from_kv("k=3\nrewards=0,1").is_err());
        assert_eq!(TrainConfig::from_kv("k=3").unwrap().rewards, vec![0.0, 0.5, 1.0]);
        assert_eq!(TrainConfig::from_kv("variant=v2").unwrap().beta, 0.0);
        assert!(TrainConfig::from_kv("variant=v2\nbeta=0.5").is_err());
        assert_eq!(TrainConfig::from_kv("variant=v3").unwrap().rounds, 0);
    }

    #[test]
    fn variants() {
        let base = TrainConfig::default();
        let (full, layout) = apply_variant(&base, Variant::Full).unwrap();
        assert_eq!(full, base);
        assert_eq!(layout, HeadLayout::Full);
        let (v1, layout) = apply_variant(&base, Variant::ThreeClass).unwrap();
        assert_eq!(layout, HeadLayout::SingleFake);
        assert_eq!(layout.outputs(v1.k), 3);
        let (v2, _) = apply_variant(&base, Variant::Beta0).unwrap();
        assert_eq!(v2.beta, 0.0);
        let (v3, _) = apply_variant(&base, Variant::NoGan).unwrap();
        assert_eq!(v3.rounds, 0);
        assert_eq!("v3-nogan".parse::<Variant>().unwrap(), Variant::NoGan);
    }
}
