//! Configuration resolution: a JSON config file overlaid with command-line
//! flags, model shorthands expanded, then deserialized into the typed
//! configuration of one subcommand.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use kelly_core::ct_models::CtModel;
use kelly_core::hf_compound::HfDriver;
use kelly_core::ModelSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Environment variable holding the default base seed.
pub const SEED_ENV: &str = "KELLY_SEED";

/// Largest admissible betting fraction.
pub const MAX_FRACTION: f64 = 1.0 - 1e-9;

/// Invalid input; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Maps a parameter error from model construction to a usage error.
pub fn invalid_input(e: kelly_core::Error) -> anyhow::Error {
    match e {
        kelly_core::Error::InvalidParameter { .. } | kelly_core::Error::InvalidFraction(_) => usage(e.to_string()),
        other => other.into(),
    }
}

/// Settings that live outside the per-command configuration.
#[derive(Debug, Default)]
pub struct Envelope {
    pub output: Option<PathBuf>,
}

/// Raw key/value configuration before typing.
#[derive(Debug, Default, Clone)]
pub struct RawConfig(pub Map<String, Value>);

impl RawConfig {
    /// Reads `path`, which must hold a JSON object. The keys `command` and
    /// `output` are taken out; `command` must name `subcommand`.
    pub fn load(path: Option<&Path>, subcommand: &str) -> anyhow::Result<(Self, Envelope)> {
        let Some(path) = path else {
            return Ok((Self::default(), Envelope::default()));
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut map) = value else {
            return Err(usage(format!("config {} must be a JSON object", path.display())));
        };
        if let Some(c) = map.remove("command") {
            if c.as_str() != Some(subcommand) {
                return Err(usage(format!("config is for command {c}, not `{subcommand}`")));
            }
        }
        let output = match map.remove("output") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(other) => return Err(usage(format!("invalid value for field `output`: {other}"))),
        };
        Ok((Self(map), Envelope { output }))
    }

    /// Flags override file values; unset flags leave them alone.
    pub fn overlay<A: Serialize>(mut self, flags: &A) -> anyhow::Result<Self> {
        let Value::Object(map) = serde_json::to_value(flags)? else {
            unreachable!("flag structs serialize to objects");
        };
        for (k, v) in map {
            if !v.is_null() {
                self.0.insert(k, v);
            }
        }
        Ok(self)
    }

    /// Falls back to `KELLY_SEED` when no seed was given.
    pub fn seed_from_env(mut self) -> anyhow::Result<Self> {
        if !self.0.contains_key("seed") {
            if let Ok(s) = std::env::var(SEED_ENV) {
                let seed: u64 = s.trim().parse().map_err(|_| usage(format!("{SEED_ENV}={s} is not an unsigned integer")))?;
                self.0.insert("seed".into(), seed.into());
            }
        }
        Ok(self)
    }

    pub fn require_seed(&self) -> anyhow::Result<()> {
        if self.0.get("seed").is_none_or(Value::is_null) {
            return Err(usage(format!("missing field `seed`: pass --seed or set {SEED_ENV}")));
        }
        Ok(())
    }

    /// Rewrites field `key` through `expand`: strings are shorthands and
    /// objects are canonicalized.
    pub fn expand(mut self, key: &str, expand: fn(&str) -> anyhow::Result<Value>) -> anyhow::Result<Self> {
        let text = match self.0.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(v @ Value::Object(_)) => v.to_string(),
            _ => return Ok(self),
        };
        let v = expand(&text).map_err(|e| usage(format!("invalid value for field `{key}`: {e}")))?;
        self.0.insert(key.into(), v);
        Ok(self)
    }

    pub fn resolve<T: DeserializeOwned>(self) -> anyhow::Result<T> {
        serde_json::from_value(Value::Object(self.0)).map_err(|e| usage(format!("invalid configuration: {e}")))
    }
}

fn parse_json(s: &str) -> anyhow::Result<Value> {
    Ok(serde_json::from_str(s)?)
}

/// `bernoulli:0.75`, `squared-cauchy`, `squared-t3`, or JSON.
pub fn closed_form_model(s: &str) -> anyhow::Result<Value> {
    let spec = ModelSpec::from_str(s)?;
    Ok(serde_json::to_value(spec)?)
}

fn ct_defaults(name: &str) -> Option<Value> {
    let v = match name {
        "gbm" => json!({"model": "gbm", "mu": 0.05, "sigma": 0.2}),
        "vasicek" | "vasicek_rate" => {
            json!({"model": "vasicek_rate", "a": 1.0, "b": 0.1, "mu": 0.02, "sigma": 0.2, "rho_bar": 0.0})
        }
        "cir" | "cir_rate" => json!({"model": "cir_rate", "a": 1.0, "b": 0.1, "mu": 0.03, "sigma": 0.2, "rho_bar": 0.0}),
        "heston" | "heston_vol" => {
            json!({"model": "heston_vol", "mu": 0.02, "kappa": 2.0, "sigma2": 0.04, "beta": 0.3, "rho_bar": 0.0})
        }
        "logistic_rate" => json!({"model": "logistic_rate", "a_l": 1.0, "b_l": 0.5, "mu": 0.05, "sigma": 0.2, "r0": 0.025}),
        "logistic_price" => json!({"model": "logistic_price", "mu_l": 1.0, "M": 2.0, "sigma": 1.0}),
        _ => return None,
    };
    Some(v)
}

/// `name[:key=value,...]` with defaults per model (`cir:sigma=0.3`), or
/// JSON.
pub fn ct_model(s: &str) -> anyhow::Result<Value> {
    let s = s.trim();
    let value = if s.starts_with('{') {
        parse_json(s)?
    } else {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let name = name.to_ascii_lowercase().replace('-', "_");
        let mut v = ct_defaults(&name).ok_or_else(|| anyhow::anyhow!("unrecognised continuous-time model `{name}`"))?;
        for kv in args.split(',').filter(|a| !a.trim().is_empty()) {
            let (k, x) = kv.split_once('=').ok_or_else(|| anyhow::anyhow!("expected key=value, got `{kv}`"))?;
            let k = k.trim();
            if !v.as_object().is_some_and(|o| o.contains_key(k)) || k == "model" {
                anyhow::bail!("unknown parameter `{k}` for model `{name}`");
            }
            let x: f64 = x.trim().parse().map_err(|_| anyhow::anyhow!("parameter `{k}`: `{x}` is not a number"))?;
            v[k] = x.into();
        }
        v
    };
    // typed round trip rejects unknown or missing parameters
    let model: CtModel = serde_json::from_value(value)?;
    Ok(serde_json::to_value(model)?)
}

/// Two-state chain descriptor used by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    TwoStateChain { p: f64, q: f64 },
}

/// Any source of log-wealth paths: iid closed-form returns, the two-state
/// chain, or a continuous-time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Ct(CtModel),
    Chain(ChainSpec),
    Iid(ModelSpec),
}

/// Shorthands of [`closed_form_model`] and [`ct_model`], plus
/// `chain:p,q`.
pub fn source_model(s: &str) -> anyhow::Result<Value> {
    let t = s.trim();
    if t.starts_with('{') {
        let v = parse_json(t)?;
        let spec = if v.get("model").is_some() {
            SourceSpec::Ct(serde_json::from_value(v)?)
        } else if v.get("kind").and_then(Value::as_str) == Some("two_state_chain") {
            SourceSpec::Chain(serde_json::from_value(v)?)
        } else {
            SourceSpec::Iid(serde_json::from_value(v)?)
        };
        return Ok(serde_json::to_value(spec)?);
    }
    if let Some(rest) = t.strip_prefix("chain:") {
        let (p, q) = rest.split_once(',').ok_or_else(|| anyhow::anyhow!("expected chain:p,q"))?;
        let (p, q): (f64, f64) = (p.trim().parse()?, q.trim().parse()?);
        return Ok(serde_json::to_value(ChainSpec::TwoStateChain { p, q })?);
    }
    match closed_form_model(t) {
        Ok(v) => Ok(v),
        Err(_) => ct_model(t),
    }
}

/// `gaussian`, `exponential`, `bernoulli:p`, `ar1:a`, or JSON.
pub fn hf_driver(s: &str) -> anyhow::Result<Value> {
    let t = s.trim();
    let driver = if t.starts_with('{') {
        serde_json::from_str(t)?
    } else {
        let (name, arg) = t.split_once(':').map_or((t, None), |(a, b)| (a, Some(b)));
        let arg = |what: &str| -> anyhow::Result<f64> {
            let a = arg.ok_or_else(|| anyhow::anyhow!("driver `{name}` needs a parameter ({what})"))?;
            a.trim().parse().map_err(|_| anyhow::anyhow!("`{a}` is not a number"))
        };
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "normal" => HfDriver::Gaussian,
            "exponential" | "standardized_exponential" => HfDriver::StandardizedExponential,
            "bernoulli" | "standardized_bernoulli" => HfDriver::StandardizedBernoulli { p: arg("p")? },
            "ar1" => HfDriver::Ar1 { a: arg("a")? },
            other => anyhow::bail!("unrecognised driver `{other}`"),
        }
    };
    Ok(serde_json::to_value::<HfDriver>(driver)?)
}

/// Fraction grid: `lo:hi:step`, a comma list, or a JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Text(String),
    List(Vec<f64>),
}

impl GridSpec {
    pub fn points(&self) -> anyhow::Result<Vec<f64>> {
        let pts = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Text(s) => parse_grid(s)?,
        };
        if pts.is_empty() {
            return Err(usage("invalid value for field `grid`: the grid is empty"));
        }
        if let Some(bad) = pts.iter().find(|f| !(0.0..=MAX_FRACTION).contains(*f)) {
            return Err(usage(format!("invalid value for field `grid`: {bad} is outside [0, 1 - 1e-9]")));
        }
        Ok(pts)
    }
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let num = |x: &str| -> anyhow::Result<f64> {
        x.trim().parse().map_err(|_| usage(format!("invalid value for field `grid`: `{x}` is not a number")))
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts[..] else {
            return Err(usage("invalid value for field `grid`: expected lo:hi:step"));
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0 && step.is_finite()) {
            return Err(usage("invalid value for field `grid`: step must be positive"));
        }
        if hi < lo {
            return Ok(Vec::new());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // snap to 12 decimals so 0.1 * 3 prints as 0.3
        return Ok((0..n).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    s.split(',').map(num).collect()
}
