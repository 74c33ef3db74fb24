//! Kernel factories addressed by name, as in `uniform_rank1(n=2)` or
//! `sine(64, 8.0)`.
//!
//! Arguments may be keyword (`n=2`) or positional, in the order listed by
//! [`FACTORIES`]; a config may also pass them as a `params` object. Array
//! arguments such as diagonal values are written as positional lists,
//! `diagonal(0.3, 0.5)`.

use std::collections::BTreeMap;

use dppcond::kernel::factory;
use dppcond::sampling::trial_rng;
use dppcond::verification::corpus::{random_kernel, CorpusClass};
use dppcond::{GroundSet, KernelMatrix};
use serde_json::Value;

use crate::{CliError, CliResult};

/// Factory names with their positional parameter order.
pub const FACTORIES: &[(&str, &[&str])] = &[
    ("uniform_rank1", &["n"]),
    ("identity", &["n"]),
    ("zero", &["n"]),
    ("diagonal", &["values"]),
    ("random_projection", &["n", "rank", "seed"]),
    ("random_contraction", &["n", "seed"]),
    ("random_complex", &["n", "seed"]),
    ("sine", &["n", "length"]),
    ("bergman", &["rings", "sectors", "radius"]),
];

/// A factory call: its name and arguments by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoryCall {
    pub name: String,
    pub args: BTreeMap<String, Value>,
}

/// Parses `name`, `name(a, b)` or `name(k=v, ...)`; `params` fill in
/// anything the string leaves out.
pub fn parse_factory(spec: &str, params: Option<&BTreeMap<String, Value>>) -> CliResult<FactoryCall> {
    let spec = spec.trim();
    let (name, inner) = match spec.find('(') {
        Some(open) => {
            if !spec.ends_with(')') {
                return Err(CliError::Config(format!("factory {spec:?} is missing a closing parenthesis")));
            }
            (spec[..open].trim(), &spec[open + 1..spec.len() - 1])
        }
        None => (spec, ""),
    };
    let order = FACTORIES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, order)| *order)
        .ok_or_else(|| CliError::Config(format!("unknown factory {name:?}")))?;

    let mut args = BTreeMap::new();
    let mut positional = Vec::new();
    for piece in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match piece.split_once('=') {
            Some((key, value)) => {
                let key = key.trim();
                if !order.contains(&key) {
                    return Err(CliError::Config(format!("factory {name} has no parameter {key:?}")));
                }
                args.insert(key.to_string(), parse_value(value.trim())?);
            }
            None => positional.push(parse_value(piece)?),
        }
    }
    if order == ["values"] {
        if !positional.is_empty() {
            args.insert("values".into(), Value::Array(positional));
        }
    } else {
        if positional.len() > order.len() {
            return Err(CliError::Config(format!("factory {name} takes at most {} arguments", order.len())));
        }
        for (key, value) in order.iter().zip(positional) {
            if args.insert(key.to_string(), value).is_some() {
                return Err(CliError::Config(format!("factory {name}: {key} given twice")));
            }
        }
    }
    if let Some(params) = params {
        for (key, value) in params {
            if !order.contains(&key.as_str()) {
                return Err(CliError::Config(format!("factory {name} has no parameter {key:?}")));
            }
            args.entry(key.clone()).or_insert_with(|| value.clone());
        }
    }
    Ok(FactoryCall { name: name.to_string(), args })
}

fn parse_value(text: &str) -> CliResult<Value> {
    serde_json::from_str(text).map_err(|_| CliError::Config(format!("cannot parse factory argument {text:?}")))
}

impl FactoryCall {
    fn get(&self, key: &str) -> CliResult<&Value> {
        self.args.get(key).ok_or_else(|| CliError::Config(format!("factory {} needs parameter {key}", self.name)))
    }

    fn usize(&self, key: &str) -> CliResult<usize> {
        self.get(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| CliError::Config(format!("factory {}: {key} must be a nonnegative integer", self.name)))
    }

    fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        match self.args.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().ok_or_else(|| CliError::Config(format!("factory {}: {key} must be an integer", self.name))),
        }
    }

    fn f64(&self, key: &str) -> CliResult<f64> {
        self.get(key)?.as_f64().ok_or_else(|| CliError::Config(format!("factory {}: {key} must be a number", self.name)))
    }

    /// Builds the kernel, with its ground set when the factory has one.
    pub fn build(&self) -> CliResult<(KernelMatrix, Option<GroundSet>)> {
        let plain = |k: KernelMatrix| Ok((k, None));
        match self.name.as_str() {
            "uniform_rank1" => plain(factory::uniform_rank1(self.usize("n")?)?),
            "identity" => plain(factory::identity(self.usize("n")?)),
            "zero" => plain(factory::zero(self.usize("n")?)),
            "diagonal" => {
                let values: Vec<f64> = self
                    .get("values")?
                    .as_array()
                    .and_then(|a| a.iter().map(Value::as_f64).collect())
                    .ok_or_else(|| CliError::Config("diagonal values must be numbers".into()))?;
                plain(factory::diagonal(&values)?)
            }
            "random_projection" => {
                let mut rng = trial_rng(self.u64_or("seed", 0)?, 0);
                plain(factory::random_projection(self.usize("n")?, self.usize("rank")?, &mut rng)?)
            }
            "random_contraction" => {
                let mut rng = trial_rng(self.u64_or("seed", 0)?, 0);
                plain(factory::random_contraction(self.usize("n")?, &mut rng)?)
            }
            "random_complex" => {
                let mut rng = trial_rng(self.u64_or("seed", 0)?, 0);
                plain(random_kernel(CorpusClass::Complex, self.usize("n")?, &mut rng)?)
            }
            "sine" => {
                let (k, g) = factory::sine_kernel(self.usize("n")?, self.f64("length")?)?;
                Ok((k, Some(g)))
            }
            "bergman" => {
                let (k, g) = factory::bergman_kernel(self.usize("rings")?, self.usize("sectors")?, self.f64("radius")?)?;
                Ok((k, Some(g)))
            }
            other => Err(CliError::Config(format!("unknown factory {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_and_positional_forms() {
        let a = parse_factory("uniform_rank1(n=2)", None).unwrap();
        let b = parse_factory("uniform_rank1(2)", None).unwrap();
        assert_eq!(a, b);
        let (k, _) = a.build().unwrap();
        assert!(k.is_projection());
        let d = parse_factory("diagonal(0.3, 0.5)", None).unwrap();
        assert!((d.build().unwrap().0.trace() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn params_fill_gaps() {
        let params: BTreeMap<String, Value> = serde_json::from_str(r#"{"n": 32, "length": 4.0}"#).unwrap();
        let call = parse_factory("sine", Some(&params)).unwrap();
        let (k, g) = call.build().unwrap();
        assert_eq!(k.n(), 32);
        assert!(g.is_some());
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(parse_factory("banana(3)", None).is_err());
        assert!(parse_factory("identity(m=3)", None).is_err());
        assert!(parse_factory("identity(3", None).is_err());
        assert!(parse_factory("identity", None).unwrap().build().is_err());
    }
}
