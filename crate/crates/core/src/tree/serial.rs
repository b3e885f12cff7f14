//! Versioned text format for trained tree ensembles.
//!
//! ```text
//! droughtcast-model 1
//! kind boost                       | kind forest
//! inputs <columns>
//! config key=value ...
//! steps <horizon>
//! step <k> base <f64> trees <count> | step <k> trees <count>
//! mse <f64> ...                    (boost only: training MSE per stage)
//! tree <node count>
//! S <feature> <threshold> <left> <right> <gain>
//! L <value> <weight>
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a model read back is
//! bit-identical to the one written.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use super::boost::{BoostConfig, BoostModel, BoostedStep};
use super::cart::{Node, RegressionTree};
use super::forest::{ForestConfig, ForestModel};
use crate::{Error, Result};

const MAGIC: &str = "droughtcast-model 1";

fn write_tree(out: &mut String, tree: &RegressionTree) {
    let _ = writeln!(out, "tree {}", tree.nodes().len());
    for n in tree.nodes() {
        let _ = match *n {
            Node::Split { feature, threshold, left, right, gain } => {
                writeln!(out, "S {feature} {threshold:?} {left} {right} {gain:?}")
            }
            Node::Leaf { value, weight } => writeln!(out, "L {value:?} {weight:?}"),
        };
    }
}

pub fn boost_to_text(model: &BoostModel) -> String {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\nkind boost\ninputs {}", model.n_inputs);
    let _ = writeln!(
        out,
        "config n_estimators={} max_depth={} learning_rate={:?} leaf_penalty={:?} min_leaf={} seed={}",
        c.n_estimators, c.max_depth, c.learning_rate, c.leaf_penalty, c.min_leaf, c.seed
    );
    let _ = writeln!(out, "steps {}", model.steps.len());
    for (k, step) in model.steps.iter().enumerate() {
        let _ = writeln!(out, "step {k} base {:?} trees {}", step.base, step.trees.len());
        out.push_str("mse");
        for m in &step.train_mse {
            let _ = write!(out, " {m:?}");
        }
        out.push('\n');
        for t in &step.trees {
            write_tree(&mut out, t);
        }
    }
    out.push_str("end\n");
    out
}

pub fn forest_to_text(model: &ForestModel) -> String {
    let c = &model.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\nkind forest\ninputs {}", model.n_inputs);
    let _ = writeln!(
        out,
        "config n_trees={} max_depth={} min_leaf={} bootstrap_fraction={:?} feature_fraction={:?} seed={}",
        c.n_trees, c.max_depth, c.min_leaf, c.bootstrap_fraction, c.feature_fraction, c.seed
    );
    let _ = writeln!(out, "steps {}", model.steps.len());
    for (k, trees) in model.steps.iter().enumerate() {
        let _ = writeln!(out, "step {k} trees {}", trees.len());
        for t in trees {
            write_tree(&mut out, t);
        }
    }
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: core::iter::Enumerate<core::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), line: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse { line: self.line, reason: reason.into() }
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        loop {
            let (i, l) = self.lines.next().ok_or(Error::Parse { line: self.line + 1, reason: "unexpected end".into() })?;
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace().collect());
            }
        }
    }

    /// Next line, which must start with `keyword`; returns the remaining tokens.
    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let tokens = self.next()?;
        if tokens.first() != Some(&keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(tokens[1..].to_vec())
    }

    fn parse<T: FromStr>(&self, token: Option<&&str>) -> Result<T> {
        token.and_then(|t| t.parse().ok()).ok_or_else(|| self.err("bad or missing value"))
    }

    fn config(&self, tokens: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>> {
        tokens.iter().map(|t| t.split_once('=').ok_or_else(|| self.err(format!("bad config entry `{t}`")))).collect()
    }

    fn tree(&mut self, n_inputs: usize) -> Result<RegressionTree> {
        let head = self.expect("tree")?;
        let count: usize = self.parse(head.first())?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let t = self.next()?;
            nodes.push(match t.first() {
                Some(&"S") => Node::Split {
                    feature: self.parse(t.get(1))?,
                    threshold: self.parse(t.get(2))?,
                    left: self.parse(t.get(3))?,
                    right: self.parse(t.get(4))?,
                    gain: self.parse(t.get(5))?,
                },
                Some(&"L") => Node::Leaf { value: self.parse(t.get(1))?, weight: self.parse(t.get(2))? },
                _ => return Err(self.err("expected node line")),
            });
        }
        RegressionTree::from_nodes(nodes, n_inputs).map_err(|e| self.err(e.to_string()))
    }

    fn header(&mut self, kind: &str) -> Result<(usize, Vec<(&'a str, &'a str)>, usize)> {
        let magic = self.next()?;
        if magic.join(" ") != MAGIC {
            return Err(self.err("not a droughtcast model file"));
        }
        let k = self.expect("kind")?;
        if k.first() != Some(&kind) {
            return Err(self.err(format!("expected kind {kind}")));
        }
        let inputs = self.expect("inputs")?;
        let inputs = self.parse(inputs.first())?;
        let config = self.expect("config")?;
        let config = self.config(&config)?;
        let steps = self.expect("steps")?;
        Ok((inputs, config, self.parse(steps.first())?))
    }
}

fn lookup<T: FromStr>(entries: &[(&str, &str)], key: &str) -> Result<T> {
    entries
        .iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::Parse { line: 4, reason: format!("config key `{key}` missing or invalid") })
}

pub fn boost_from_text(text: &str) -> Result<BoostModel> {
    let mut r = Reader::new(text);
    let (n_inputs, cfg, n_steps) = r.header("boost")?;
    let config = BoostConfig {
        n_estimators: lookup(&cfg, "n_estimators")?,
        max_depth: lookup(&cfg, "max_depth")?,
        learning_rate: lookup(&cfg, "learning_rate")?,
        leaf_penalty: lookup(&cfg, "leaf_penalty")?,
        min_leaf: lookup(&cfg, "min_leaf")?,
        seed: lookup(&cfg, "seed")?,
    };
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let head = r.expect("step")?;
        let base = r.parse(head.get(2))?;
        let n_trees: usize = r.parse(head.get(4))?;
        let mse = r.expect("mse")?;
        let train_mse = mse.iter().map(|t| t.parse().map_err(|_| r.err("bad mse"))).collect::<Result<_>>()?;
        let trees = (0..n_trees).map(|_| r.tree(n_inputs)).collect::<Result<_>>()?;
        steps.push(BoostedStep { base, learning_rate: config.learning_rate, trees, train_mse });
    }
    r.expect("end")?;
    Ok(BoostModel { config, n_inputs, steps })
}

pub fn forest_from_text(text: &str) -> Result<ForestModel> {
    let mut r = Reader::new(text);
    let (n_inputs, cfg, n_steps) = r.header("forest")?;
    let config = ForestConfig {
        n_trees: lookup(&cfg, "n_trees")?,
        max_depth: lookup(&cfg, "max_depth")?,
        min_leaf: lookup(&cfg, "min_leaf")?,
        bootstrap_fraction: lookup(&cfg, "bootstrap_fraction")?,
        feature_fraction: lookup(&cfg, "feature_fraction")?,
        seed: lookup(&cfg, "seed")?,
    };
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let head = r.expect("step")?;
        let n_trees: usize = r.parse(head.get(2))?;
        steps.push((0..n_trees).map(|_| r.tree(n_inputs)).collect::<Result<_>>()?);
    }
    r.expect("end")?;
    Ok(ForestModel { config, n_inputs, steps })
}
