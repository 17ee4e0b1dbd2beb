use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::WorldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YawSign {
    /// Each image faces left or right with equal probability.
    Mixed,
    /// Every image has non-negative yaw, so the flip rule never triggers.
    Positive,
}

impl fmt::Display for YawSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            YawSign::Mixed => "mixed",
            YawSign::Positive => "positive",
        })
    }
}

impl FromStr for YawSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(YawSign::Mixed),
            "positive" => Ok(YawSign::Positive),
            other => Err(format!("expected mixed or positive, got {other:?}")),
        }
    }
}

/// Parameters of a synthetic embedding world.
///
/// Noise vectors are drawn from `N(0, I / dim)`, so the scales are in units of
/// the (unit) identity prototype length regardless of `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorldConfig {
    pub n_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub seed: u64,
    /// Largest |yaw| of a generated image, in degrees.
    pub pose_range_deg: f64,
    /// Smallest |yaw| of a generated image, in degrees.
    pub min_abs_yaw_deg: f64,
    pub yaw_sign: YawSign,
    /// Pose distortion per degree of |yaw| (κ_p). Also scales how quickly
    /// observation noise grows away from frontal.
    pub pose_noise_scale: f64,
    /// How far the animator moves the source pose toward the driving pose (α).
    pub animator_fidelity: f64,
    /// Length of the world-level bias added to every animated embedding (κ_b).
    pub animator_bias_scale: f64,
    /// Observation noise (σ).
    pub obs_noise_scale: f64,
    pub pair_count_same: usize,
    pub pair_count_diff: usize,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            n_identities: 200,
            samples_per_identity: 6,
            dim: 64,
            seed: 0,
            pose_range_deg: 90.0,
            min_abs_yaw_deg: 0.0,
            yaw_sign: YawSign::Mixed,
            pose_noise_scale: 0.05,
            animator_fidelity: 0.8,
            animator_bias_scale: 2.5,
            obs_noise_scale: 0.9,
            pair_count_same: 3000,
            pair_count_diff: 3000,
        }
    }
}

pub const CONFIG_KEYS: [&str; 13] = [
    "n_identities",
    "samples_per_identity",
    "dim",
    "seed",
    "pose_range_deg",
    "min_abs_yaw_deg",
    "yaw_sign",
    "pose_noise_scale",
    "animator_fidelity",
    "animator_bias_scale",
    "obs_noise_scale",
    "pair_count_same",
    "pair_count_diff",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, WorldError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| WorldError::InvalidConfig(format!("{key}: cannot parse {value:?}: {e}")))
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |msg: String| Err(WorldError::InvalidConfig(msg));
        if self.dim < 8 {
            return bad(format!("dim must be at least 8, got {}", self.dim));
        }
        if self.n_identities == 0 || self.samples_per_identity == 0 {
            return bad("need at least one identity with one sample".into());
        }
        if self.pair_count_same + self.pair_count_diff == 0 {
            return bad("no pairs requested".into());
        }
        if self.pair_count_same > 0 && self.samples_per_identity < 2 {
            return bad("same-identity pairs need samples_per_identity >= 2".into());
        }
        if self.pair_count_diff > 0 && self.n_identities < 2 {
            return bad("different-identity pairs need n_identities >= 2".into());
        }
        for (name, v) in [
            ("pose_noise_scale", self.pose_noise_scale),
            ("animator_bias_scale", self.animator_bias_scale),
            ("obs_noise_scale", self.obs_noise_scale),
            ("pose_range_deg", self.pose_range_deg),
            ("min_abs_yaw_deg", self.min_abs_yaw_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.animator_fidelity) {
            return bad(format!("animator_fidelity must lie in [0, 1], got {}", self.animator_fidelity));
        }
        if self.pose_range_deg > 180.0 || self.min_abs_yaw_deg > self.pose_range_deg {
            return bad(format!(
                "need 0 <= min_abs_yaw_deg ({}) <= pose_range_deg ({}) <= 180",
                self.min_abs_yaw_deg, self.pose_range_deg
            ));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), WorldError> {
        let value = value.trim();
        match key.trim() {
            "n_identities" => self.n_identities = parse_value(key, value)?,
            "samples_per_identity" => self.samples_per_identity = parse_value(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "pose_range_deg" => self.pose_range_deg = parse_value(key, value)?,
            "min_abs_yaw_deg" => self.min_abs_yaw_deg = parse_value(key, value)?,
            "yaw_sign" => self.yaw_sign = parse_value(key, value)?,
            "pose_noise_scale" => self.pose_noise_scale = parse_value(key, value)?,
            "animator_fidelity" => self.animator_fidelity = parse_value(key, value)?,
            "animator_bias_scale" => self.animator_bias_scale = parse_value(key, value)?,
            "obs_noise_scale" => self.obs_noise_scale = parse_value(key, value)?,
            "pair_count_same" => self.pair_count_same = parse_value(key, value)?,
            "pair_count_diff" => self.pair_count_diff = parse_value(key, value)?,
            other => return Err(WorldError::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), WorldError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| WorldError::InvalidConfig(format!("expected key=value, got {assignment:?}")))?;
        self.set(k, v)
    }

    /// Parses a plain-text `key = value` file on top of the defaults. Blank
    /// lines and `#` comments are ignored; a key may appear only once.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WorldError::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(WorldError::InvalidConfig(format!("line {}: duplicate key {k:?}", i + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| WorldError::InvalidConfig(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("n_identities", self.n_identities.to_string());
        m.insert("samples_per_identity", self.samples_per_identity.to_string());
        m.insert("dim", self.dim.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("pose_range_deg", self.pose_range_deg.to_string());
        m.insert("min_abs_yaw_deg", self.min_abs_yaw_deg.to_string());
        m.insert("yaw_sign", self.yaw_sign.to_string());
        m.insert("pose_noise_scale", self.pose_noise_scale.to_string());
        m.insert("animator_fidelity", self.animator_fidelity.to_string());
        m.insert("animator_bias_scale", self.animator_bias_scale.to_string());
        m.insert("obs_noise_scale", self.obs_noise_scale.to_string());
        m.insert("pair_count_same", self.pair_count_same.to_string());
        m.insert("pair_count_diff", self.pair_count_diff.to_string());
        m
    }

    /// Serializes to the `key = value` text format, one key per line.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.entries()[k]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SyntheticWorldConfig::default().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let cfg = SyntheticWorldConfig {
            seed: 42,
            yaw_sign: YawSign::Positive,
            obs_noise_scale: 0.125,
            ..Default::default()
        };
        assert_eq!(SyntheticWorldConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_overrides_and_errors() {
        let cfg = SyntheticWorldConfig::parse("# world\n dim = 16 # small\n\nseed=3\n").unwrap();
        assert_eq!((cfg.dim, cfg.seed), (16, 3));
        assert!(SyntheticWorldConfig::parse("dim = 16\ndim = 32\n").is_err());
        assert!(SyntheticWorldConfig::parse("colour = blue\n").is_err());
        assert!(SyntheticWorldConfig::parse("dim 16\n").is_err());
        assert!(SyntheticWorldConfig::parse("dim = -3\n").is_err());
        let mut cfg = SyntheticWorldConfig::default();
        cfg.apply_override("animator_fidelity=0.5").unwrap();
        assert_eq!(cfg.animator_fidelity, 0.5);
        assert!(cfg.apply_override("animator_fidelity").is_err());
    }

    #[test]
    fn invalid_values() {
        let check = |f: &dyn Fn(&mut SyntheticWorldConfig)| {
            let mut c = SyntheticWorldConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(check(&|c| c.dim = 4).is_err());
        assert!(check(&|c| c.animator_fidelity = 1.5).is_err());
        assert!(check(&|c| c.obs_noise_scale = -0.1).is_err());
        assert!(check(&|c| c.min_abs_yaw_deg = 100.0).is_err());
        assert!(check(&|c| c.pose_range_deg = 200.0).is_err());
        assert!(check(&|c| c.samples_per_identity = 1).is_err());
        assert!(check(&|c| {
            c.samples_per_identity = 1;
            c.pair_count_same = 0;
        })
        .is_ok());
    }
}
