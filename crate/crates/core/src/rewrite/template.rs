use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Strategy, TaskFamily};
use crate::error::{Error, Result};

pub const INPUT_PLACEHOLDER: &str = "{input}";

/// Which side of the collection a template rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Corpus,
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub strategy: Strategy,
    pub task_family: TaskFamily,
    pub side: Side,
    pub system_text: String,
    pub user_text: String,
    pub max_output_tokens: u32,
}

#[derive(Deserialize)]
struct FrontMatter {
    template_id: String,
    strategy: Strategy,
    task_family: TaskFamily,
    #[serde(default = "default_side")]
    side: Side,
    #[serde(default = "default_max_tokens")]
    max_output_tokens: u32,
}

fn default_side() -> Side {
    Side::Corpus
}

fn default_max_tokens() -> u32 {
    512
}

impl PromptTemplate {
    /// Parses a template file: TOML front matter between `+++` lines, then a
    /// body with `### system` and `### user` sections.
    pub fn parse(source: &str) -> Result<Self> {
        let rest = source
            .strip_prefix("+++\n")
            .ok_or_else(|| Error::config("template must start with a +++ front-matter block"))?;
        let (front, body) = rest
            .split_once("\n+++\n")
            .ok_or_else(|| Error::config("unterminated template front matter"))?;
        let fm: FrontMatter =
            toml::from_str(front).map_err(|e| Error::config(format!("template front matter: {e}")))?;
        if fm.strategy == Strategy::Baseline {
            return Err(Error::config(format!("template {} targets Baseline", fm.template_id)));
        }
        let body = body
            .strip_prefix("### system\n")
            .ok_or_else(|| Error::config(format!("template {}: body must open with '### system'", fm.template_id)))?;
        let (system, user) = body
            .split_once("\n### user\n")
            .ok_or_else(|| Error::config(format!("template {}: missing '### user' section", fm.template_id)))?;
        let t = PromptTemplate {
            template_id: fm.template_id,
            strategy: fm.strategy,
            task_family: fm.task_family,
            side: fm.side,
            system_text: system.trim().to_string(),
            user_text: user.trim_end().to_string(),
            max_output_tokens: fm.max_output_tokens,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.user_text.matches(INPUT_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::config(format!(
                "template {}: user text must contain exactly one {INPUT_PLACEHOLDER} placeholder, found {n}",
                self.template_id
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::config(format!("template {}: max_output_tokens must be positive", self.template_id)));
        }
        Ok(())
    }

    pub fn render_user(&self, input: &str) -> String {
        self.user_text.replacen(INPUT_PLACEHOLDER, input, 1)
    }
}

const BUILTIN: [&str; 12] = [
    include_str!("../../templates/rephrase-code2code-corpus-v1.md"),
    include_str!("../../templates/pseudo-code2code-corpus-v1.md"),
    include_str!("../../templates/nl-code2code-corpus-v1.md"),
    include_str!("../../templates/rephrase-text2code-corpus-v1.md"),
    include_str!("../../templates/pseudo-text2code-corpus-v1.md"),
    include_str!("../../templates/nl-text2code-corpus-v1.md"),
    include_str!("../../templates/rephrase-hybrid-corpus-v1.md"),
    include_str!("../../templates/pseudo-hybrid-corpus-v1.md"),
    include_str!("../../templates/nl-hybrid-corpus-v1.md"),
    include_str!("../../templates/rephrase-text2code-query-v1.md"),
    include_str!("../../templates/pseudo-text2code-query-v1.md"),
    include_str!("../../templates/nl-text2code-query-v1.md"),
];

/// Templates indexed by (strategy, task family, side).
#[derive(Debug, Clone, Default)]
pub struct TemplateCatalog {
    by_slot: BTreeMap<(Strategy, TaskFamily, Side), PromptTemplate>,
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        let mut c = Self::default();
        for src in BUILTIN {
            c.insert(PromptTemplate::parse(src).expect("builtin templates are valid"));
        }
        c
    }

    /// Loads every `*.md` file in `dir`. A template replaces any earlier one
    /// for the same slot.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut c = Self::default();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "md"))
            .collect();
        paths.sort();
        for p in paths {
            let src = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let t = PromptTemplate::parse(&src).map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
            c.insert(t);
        }
        Ok(c)
    }

    pub fn insert(&mut self, t: PromptTemplate) {
        self.by_slot.insert((t.strategy, t.task_family, t.side), t);
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.by_slot.values()
    }

    pub fn len(&self) -> usize {
        self.by_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_slot.is_empty()
    }

    /// Template for rewriting one side of a task. Only text-to-code queries
    /// have their own generate-the-target-form templates; code and hybrid
    /// queries are transcribed like documents.
    pub fn lookup(&self, strategy: Strategy, family: TaskFamily, side: Side) -> Result<&PromptTemplate> {
        let side = match (side, family) {
            (Side::Query, TaskFamily::TextToCode) => Side::Query,
            _ => Side::Corpus,
        };
        self.by_slot.get(&(strategy, family, side)).ok_or_else(|| {
            Error::config(format!(
                "no {} template for strategy {strategy}, task family {family}",
                match side {
                    Side::Corpus => "corpus",
                    Side::Query => "query",
                }
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_is_complete() {
        let c = TemplateCatalog::builtin();
        assert_eq!(c.len(), 12);
        for s in Strategy::REWRITES {
            for f in [TaskFamily::CodeToCode, TaskFamily::TextToCode, TaskFamily::Hybrid] {
                for side in [Side::Corpus, Side::Query] {
                    let t = c.lookup(s, f, side).unwrap();
                    assert_eq!(t.strategy, s);
                    assert_eq!(t.max_output_tokens, 512);
                }
            }
        }
        let q = c.lookup(Strategy::NL, TaskFamily::TextToCode, Side::Query).unwrap();
        assert_eq!(q.template_id, "nl-text2code-query-v1");
        let q = c.lookup(Strategy::NL, TaskFamily::CodeToCode, Side::Query).unwrap();
        assert_eq!(q.template_id, "nl-code2code-corpus-v1");
    }

    #[test]
    fn placeholder_must_appear_once() {
        let src = "+++\ntemplate_id = \"x\"\nstrategy = \"NL\"\ntask_family = \"Hybrid\"\n+++\n### system\ns\n### user\n{input} and {input}\n";
        assert!(PromptTemplate::parse(src).is_err());
        let src = src.replace("{input} and {input}", "describe: {input}");
        let t = PromptTemplate::parse(&src).unwrap();
        assert_eq!(t.render_user("abc"), "describe: abc");
        assert_eq!(t.side, Side::Corpus);
    }

    #[test]
    fn missing_slot_is_config_error() {
        let c = TemplateCatalog::default();
        assert!(matches!(
            c.lookup(Strategy::NL, TaskFamily::Hybrid, Side::Corpus),
            Err(Error::Config(_))
        ));
    }
}
