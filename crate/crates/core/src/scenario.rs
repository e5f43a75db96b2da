//! Random instances from a path-loss model, plus the fitted utility presets.
//!
//! Gains follow `128.1 + 37.6·log10(d_km)` dB of path loss plus Gaussian
//! shadowing in dB. Users are drawn one after another from a ChaCha20
//! stream, so the first `k` users of an instance do not depend on `n_users`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UeeError};
use crate::model::{ProblemInstance, UserParams};
use crate::utility::UtilitySpec;

pub fn dbm_to_watts(v: f64) -> f64 {
    10f64.powf((v - 30.0) / 10.0)
}

pub fn db_to_linear(v: f64) -> f64 {
    10f64.powf(v / 10.0)
}

/// Linear gain after path loss and shadowing (`shadow_db` adds loss).
pub fn channel_gain(distance_km: f64, shadow_db: f64) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return domain(format!("distance must be positive, got {distance_km}"));
    }
    let loss_db = 128.1 + 37.6 * distance_km.log10() + shadow_db;
    Ok(db_to_linear(-loss_db))
}

/// A value given once for everybody, per contiguous group, or per user.
///
/// Groups split the users into contiguous blocks whose sizes differ by at
/// most one, earlier groups taking the extra users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser<T> {
    Groups { groups: Vec<T> },
    Users { users: Vec<T> },
    Uniform(T),
}

impl<T> PerUser<T> {
    pub fn get(&self, n: usize, n_users: usize) -> Result<&T> {
        match self {
            PerUser::Uniform(v) => Ok(v),
            PerUser::Groups { groups } => {
                if groups.is_empty() {
                    return domain("empty group list");
                }
                Ok(&groups[group_of(n, n_users, groups.len())])
            }
            PerUser::Users { users } => users.get(n).ok_or(UeeError::Dimension {
                expected: n_users,
                got: users.len(),
            }),
        }
    }
}

/// Group index of user `n` when `n_users` users are split into `groups`
/// contiguous blocks.
pub fn group_of(n: usize, n_users: usize, groups: usize) -> usize {
    let base = n_users / groups;
    let extra = n_users % groups;
    let cut = extra * (base + 1);
    if n < cut {
        n / (base + 1)
    } else {
        extra + (n - cut) / base.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UtilityChoice {
    Preset { preset: String },
    Spec(UtilitySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_users: usize,
    /// Hz.
    pub b_total: f64,
    /// km, `[near, far]`.
    pub distance_range: (f64, f64),
    pub shadow_std_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_cir_dbm: f64,
    pub r_min_bps: f64,
    pub r_e_bps: PerUser<f64>,
    pub weights: PerUser<f64>,
    pub utility: PerUser<UtilityChoice>,
    /// Normalized resolution plugged into the video presets.
    pub netflix_y: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_users: 30,
            b_total: 20e6,
            distance_range: (0.1, 0.5),
            shadow_std_db: 8.0,
            noise_psd_dbm_hz: -174.0,
            p_cir_dbm: 2.0,
            r_min_bps: 2e4,
            r_e_bps: PerUser::Uniform(2e4),
            weights: PerUser::Uniform(1.0),
            utility: PerUser::Uniform(UtilityChoice::Spec(UtilitySpec::type3(1.0, 0.5, 0.0))),
            netflix_y: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return domain("n_users must be at least 1");
        }
        let (near, far) = self.distance_range;
        if !(near > 0.0 && far >= near && far.is_finite()) {
            return domain(format!("bad distance range ({near}, {far})"));
        }
        if !(self.b_total > 0.0 && self.r_min_bps > 0.0 && self.shadow_std_db >= 0.0) {
            return domain("b_total and r_min_bps must be positive, shadow_std_db >= 0");
        }
        Ok(())
    }

    fn utility_for(&self, n: usize) -> Result<UtilitySpec> {
        match self.utility.get(n, self.n_users)? {
            UtilityChoice::Spec(s) => Ok(s.clone()),
            UtilityChoice::Preset { preset } => {
                Ok(preset_utility_with(preset, self.netflix_y)?.spec)
            }
        }
    }
}

/// Builds an instance; deterministic in `spec` (seed included).
pub fn generate(spec: &ScenarioSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let shadow = Normal::new(0.0, spec.shadow_std_db)
        .map_err(|e| UeeError::Domain(format!("shadowing distribution: {e}")))?;
    let sigma2 = dbm_to_watts(spec.noise_psd_dbm_hz);
    let p_cir = dbm_to_watts(spec.p_cir_dbm);
    let (near, far) = spec.distance_range;
    let mut users = Vec::with_capacity(spec.n_users);
    for n in 0..spec.n_users {
        let d = if far > near {
            rng.random_range(near..far)
        } else {
            near
        };
        let s = shadow.sample(&mut rng);
        users.push(UserParams {
            g: channel_gain(d, s)?,
            sigma2,
            p_cir,
            r_min: spec.r_min_bps,
            r_e: *spec.r_e_bps.get(n, spec.n_users)?,
            c: *spec.weights.get(n, spec.n_users)?,
            utility: spec.utility_for(n)?,
        });
    }
    ProblemInstance::new(users, spec.b_total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityPreset {
    pub name: &'static str,
    /// Coefficients as fitted against the normalized bitrate.
    pub fitted: UtilitySpec,
    /// bit/s that map to a normalized bitrate of 1.
    pub divisor: f64,
    /// `fitted` rewritten to take the secrecy rate in bit/s.
    pub spec: UtilitySpec,
}

pub const PRESET_NAMES: [&str; 6] = [
    "ssv360_user1_seated",
    "ssv360_user2_seated",
    "ssv360_user1_standing",
    "netflix_elfuente1",
    "netflix_bigbuckbunny",
    "netflix_birdsincage",
];

const SSV360_MAX_BPS: f64 = 15.94e6;
const NETFLIX_MAX_BPS: f64 = 15e6;

/// Preset with the video resolution fixed at 1.
pub fn preset_utility(name: &str) -> Result<UtilityPreset> {
    preset_utility_with(name, 1.0)
}

/// Preset with a chosen normalized resolution `y` for the video presets.
pub fn preset_utility_with(name: &str, y: f64) -> Result<UtilityPreset> {
    let (name, fitted, divisor) = match name {
        "ssv360_user1_seated" => (
            "ssv360_user1_seated",
            UtilitySpec::type1(0.5424, 37.2965, 1.0),
            SSV360_MAX_BPS,
        ),
        "ssv360_user2_seated" => (
            "ssv360_user2_seated",
            UtilitySpec::type2(2.9351, 2.1224, 0.0),
            SSV360_MAX_BPS,
        ),
        "ssv360_user1_standing" => (
            "ssv360_user1_standing",
            UtilitySpec::type3(3.2956, 0.2733, 0.0),
            SSV360_MAX_BPS,
        ),
        "netflix_elfuente1" => (
            "netflix_elfuente1",
            UtilitySpec::type1(33.4215, 0.784, 1.0 + 10.0826 * y),
            NETFLIX_MAX_BPS,
        ),
        "netflix_bigbuckbunny" => (
            "netflix_bigbuckbunny",
            UtilitySpec::type2(103.3464, 0.23166, -2.9792 * y),
            NETFLIX_MAX_BPS,
        ),
        "netflix_birdsincage" => (
            "netflix_birdsincage",
            UtilitySpec::type3(61.8622, 0.5301, y / 1.1664),
            NETFLIX_MAX_BPS,
        ),
        other => return Err(UeeError::UnknownPreset(other.to_string())),
    };
    let spec = rescale(&fitted, divisor);
    Ok(UtilityPreset {
        name,
        fitted,
        divisor,
        spec,
    })
}

/// Rewrites `f(x/D)` as a member of the same family in `x`.
fn rescale(s: &UtilitySpec, divisor: f64) -> UtilitySpec {
    match *s {
        UtilitySpec::Type1 { kappa, a, b } => UtilitySpec::type1(kappa, a / divisor, b),
        UtilitySpec::Type2 { kappa, a, c } => UtilitySpec::type2(kappa, a / divisor, c),
        UtilitySpec::Type3 { kappa, a, d } => {
            UtilitySpec::type3(kappa * divisor.powf(-a), a, d * divisor)
        }
        UtilitySpec::Custom(_) => s.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::validate_spec;
    use approx::assert_relative_eq;

    #[test]
    fn unit_conversions() {
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3);
        assert_relative_eq!(dbm_to_watts(2.0), 1.585e-3, max_relative = 1e-3);
        assert_relative_eq!(dbm_to_watts(-174.0), 3.98e-21, max_relative = 1e-3);
        assert_relative_eq!(db_to_linear(10.0), 10.0);
    }

    #[test]
    fn gain_examples() {
        assert_relative_eq!(
            channel_gain(1.0, 0.0).unwrap(),
            10f64.powf(-12.81),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            channel_gain(0.1, 0.0).unwrap(),
            10f64.powf(-9.05),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            channel_gain(0.3, 8.0).unwrap() / channel_gain(0.3, 0.0).unwrap(),
            10f64.powf(-0.8),
            max_relative = 1e-14
        );
        assert!(channel_gain(0.0, 0.0).is_err());
    }

    #[test]
    fn default_spec_matches_setup() {
        let inst = generate(&ScenarioSpec::default()).unwrap();
        assert_eq!(inst.n(), 30);
        assert_eq!(inst.b_total, 2e7);
        for u in &inst.users {
            assert_relative_eq!(u.p_cir, 1.585e-3, max_relative = 1e-3);
            assert_eq!(u.r_min, 2e4);
            assert_eq!(u.r_e, 2e4);
            assert_eq!(u.utility, UtilitySpec::type3(1.0, 0.5, 0.0));
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = ScenarioSpec {
            seed: 7,
            ..Default::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn prefix_stable_in_n() {
        let small = generate(&ScenarioSpec {
            n_users: 10,
            ..Default::default()
        })
        .unwrap();
        let big = generate(&ScenarioSpec {
            n_users: 50,
            ..Default::default()
        })
        .unwrap();
        for (a, b) in small.users.iter().zip(&big.users) {
            assert_eq!(a.g, b.g);
        }
    }

    #[test]
    fn two_group_eavesdropper_override() {
        let spec = ScenarioSpec {
            r_e_bps: PerUser::Groups {
                groups: vec![0.0, 1e4],
            },
            ..Default::default()
        };
        let inst = generate(&spec).unwrap();
        assert!(inst.users[..15].iter().all(|u| u.r_e == 0.0));
        assert!(inst.users[15..].iter().all(|u| u.r_e == 1e4));
    }

    #[test]
    fn groups_are_balanced() {
        let sizes = |n: usize, g: usize| {
            let mut s = vec![0; g];
            (0..n).for_each(|k| s[group_of(k, n, g)] += 1);
            s
        };
        assert_eq!(sizes(30, 3), vec![10, 10, 10]);
        assert_eq!(sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(sizes(2, 3), vec![1, 1, 0]);
    }

    #[test]
    fn preset_values() {
        let p = preset_utility("ssv360_user1_seated").unwrap();
        assert_eq!(p.spec.eval(0.0).unwrap(), 0.0);
        let p = preset_utility("ssv360_user1_standing").unwrap();
        assert_relative_eq!(p.spec.eval(15.94e6).unwrap(), 3.2956, max_relative = 1e-13);
        let p = preset_utility("netflix_elfuente1").unwrap();
        assert_relative_eq!(
            p.spec.eval(0.0).unwrap(),
            33.4215 * 11.0826f64.ln(),
            max_relative = 1e-14
        );
        let p = preset_utility("netflix_birdsincage").unwrap();
        assert_relative_eq!(
            p.spec.eval(15e6).unwrap(),
            61.8622 * (1.0 + 1.0 / 1.1664f64).powf(0.5301),
            max_relative = 1e-13
        );
        assert!(matches!(
            preset_utility("nope"),
            Err(UeeError::UnknownPreset(_))
        ));
    }

    #[test]
    fn presets_pass_validation() {
        for name in PRESET_NAMES {
            let p = preset_utility(name).unwrap();
            let rep = validate_spec(&p.spec);
            assert!(rep.passed(), "{name}: {:?}", rep.failures.first());
        }
    }

    #[test]
    fn spec_parses_from_json() {
        let j = r#"{"n_users": 4, "weights": {"groups": [100, 10]},
                    "utility": {"groups": [{"preset": "ssv360_user1_seated"},
                                           {"type": "type3", "kappa": 1, "a": 0.5, "d": 0}]}}"#;
        let spec: ScenarioSpec = serde_json::from_str(j).unwrap();
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.users[0].c, 100.0);
        assert_eq!(inst.users[3].c, 10.0);
        assert_eq!(inst.users[3].utility, UtilitySpec::type3(1.0, 0.5, 0.0));
    }
}
