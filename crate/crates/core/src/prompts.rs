//! Conditional prompt sets and their expansion into editing instructions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GenMixError, Result};
use crate::hash::RngStream;

pub const INSTRUCTION_TEMPLATE_PREFIX: &str = "A transformed version of image into ";

const IN_DOMAIN: [&str; 9] = [
    "autumn",
    "snowy",
    "sunset",
    "watercolor art",
    "rainbow",
    "aurora",
    "mosaic",
    "ukiyo-e",
    "a sketch with crayon",
];

const DOMAIN_ADAPTATION: [&str; 6] = [
    "graffiti",
    "retro comic",
    "chalk drawing",
    "watercolor painting",
    "digital art",
    "cartoon style",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    InDomain,
    DomainAdaptation,
}

impl fmt::Display for PromptTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptTask::InDomain => "in-domain",
            PromptTask::DomainAdaptation => "domain-adaptation",
        })
    }
}

impl FromStr for PromptTask {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-domain" | "in_domain" => Ok(PromptTask::InDomain),
            "domain-adaptation" | "domain_adaptation" => Ok(PromptTask::DomainAdaptation),
            other => Err(GenMixError::Config(format!(
                "unknown prompt task {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub text: String,
    pub task: PromptTask,
}

impl Prompt {
    pub fn new(id: impl Into<String>, text: impl Into<String>, task: PromptTask) -> Result<Self> {
        let p = Prompt {
            id: id.into(),
            text: text.into(),
            task,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\', '\n', '\r']) {
            return Err(GenMixError::InvalidPrompt(format!("bad id {:?}", self.id)));
        }
        if self.text.trim().is_empty() || self.text.contains(['\n', '\r']) {
            return Err(GenMixError::InvalidPrompt(format!(
                "prompt {:?} has empty or multi-line text",
                self.id
            )));
        }
        Ok(())
    }

    /// The editing instruction sent to the backend.
    pub fn instruction(&self) -> String {
        expand_prompt(self)
    }
}

/// `"A transformed version of image into <text>"`
pub fn expand_prompt(p: &Prompt) -> String {
    format!("{INSTRUCTION_TEMPLATE_PREFIX}{}", p.text)
}

/// Derive a file-safe id from prompt text: lowercase, spaces to `_`.
pub fn prompt_slug(text: &str) -> String {
    text.trim()
        .chars()
        .map(|c| {
            if c.is_whitespace() {
                '_'
            } else {
                c.to_ascii_lowercase()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    task: PromptTask,
    prompts: Vec<Prompt>,
}

impl PromptSet {
    pub fn task(&self) -> PromptTask {
        self.task
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Prompt> {
        self.prompts.iter().find(|p| p.id == id)
    }
}

/// The built-in prompts for `task`, in their canonical order.
pub fn builtin_prompts(task: PromptTask) -> Vec<Prompt> {
    let texts: &[&str] = match task {
        PromptTask::InDomain => &IN_DOMAIN,
        PromptTask::DomainAdaptation => &DOMAIN_ADAPTATION,
    };
    texts
        .iter()
        .map(|t| Prompt {
            id: prompt_slug(t),
            text: (*t).to_string(),
            task,
        })
        .collect()
}

/// Built-in prompts plus user extensions appended after them.
///
/// Built-ins cannot be removed or shadowed: an extension reusing a built-in
/// id or text is rejected.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    extensions: Vec<Prompt>,
}

impl PromptLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_extensions(extensions: Vec<Prompt>) -> Result<Self> {
        let mut lib = Self::new();
        for p in extensions {
            lib.add(p)?;
        }
        Ok(lib)
    }

    pub fn add(&mut self, prompt: Prompt) -> Result<()> {
        prompt.validate()?;
        let current = self.list_prompts(prompt.task);
        let ids: HashSet<_> = current.prompts.iter().map(|p| p.id.as_str()).collect();
        let texts: HashSet<_> = current.prompts.iter().map(|p| p.text.as_str()).collect();
        if ids.contains(prompt.id.as_str()) || texts.contains(prompt.text.as_str()) {
            return Err(GenMixError::InvalidPrompt(format!(
                "prompt {:?} duplicates an existing prompt",
                prompt.id
            )));
        }
        self.extensions.push(prompt);
        Ok(())
    }

    pub fn list_prompts(&self, task: PromptTask) -> PromptSet {
        let mut prompts = builtin_prompts(task);
        prompts.extend(self.extensions.iter().filter(|p| p.task == task).cloned());
        PromptSet { task, prompts }
    }
}

/// Uniform i.i.d. draw from the set.
pub fn sample_prompt<'a>(rng: &mut RngStream, set: &'a PromptSet) -> &'a Prompt {
    &set.prompts[rng.index(set.prompts.len())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_domain_set_in_order() {
        let set = PromptLibrary::new().list_prompts(PromptTask::InDomain);
        let texts: Vec<_> = set.prompts().iter().map(|p| p.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "autumn",
                "snowy",
                "sunset",
                "watercolor art",
                "rainbow",
                "aurora",
                "mosaic",
                "ukiyo-e",
                "a sketch with crayon"
            ]
        );
    }

    #[test]
    fn domain_adaptation_set_in_order() {
        let set = PromptLibrary::new().list_prompts(PromptTask::DomainAdaptation);
        let texts: Vec<_> = set.prompts().iter().map(|p| p.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "graffiti",
                "retro comic",
                "chalk drawing",
                "watercolor painting",
                "digital art",
                "cartoon style"
            ]
        );
    }

    #[test]
    fn listing_is_stable() {
        let lib = PromptLibrary::new();
        assert_eq!(
            lib.list_prompts(PromptTask::InDomain),
            lib.list_prompts(PromptTask::InDomain)
        );
    }

    #[test]
    fn template_expansion() {
        let lib = PromptLibrary::new();
        let set = lib.list_prompts(PromptTask::InDomain);
        assert_eq!(
            set.get("sunset").unwrap().instruction(),
            "A transformed version of image into sunset"
        );
        assert_eq!(
            set.get("ukiyo-e").unwrap().instruction(),
            "A transformed version of image into ukiyo-e"
        );
        assert_eq!(
            set.get("a_sketch_with_crayon").unwrap().text,
            "a sketch with crayon"
        );
    }

    #[test]
    fn empty_or_multiline_text_rejected() {
        assert!(Prompt::new("x", "", PromptTask::InDomain).is_err());
        assert!(Prompt::new("x", "two\nlines", PromptTask::InDomain).is_err());
    }

    #[test]
    fn extensions_append_and_cannot_shadow() {
        let mut lib = PromptLibrary::new();
        lib.add(Prompt::new("neon", "neon lights", PromptTask::InDomain).unwrap())
            .unwrap();
        let set = lib.list_prompts(PromptTask::InDomain);
        assert_eq!(set.len(), 10);
        assert_eq!(set.prompts()[9].id, "neon");
        assert_eq!(lib.list_prompts(PromptTask::DomainAdaptation).len(), 6);
        assert!(lib
            .add(Prompt::new("sunset", "something else", PromptTask::InDomain).unwrap())
            .is_err());
        assert!(lib
            .add(Prompt::new("dusk", "sunset", PromptTask::InDomain).unwrap())
            .is_err());
    }

    #[test]
    fn expansion_is_injective() {
        let lib = PromptLibrary::new();
        for task in [PromptTask::InDomain, PromptTask::DomainAdaptation] {
            let set = lib.list_prompts(task);
            let all: HashSet<_> = set.prompts().iter().map(expand_prompt).collect();
            assert_eq!(all.len(), set.len());
        }
    }

    #[test]
    fn singleton_always_drawn() {
        let set = PromptSet {
            task: PromptTask::InDomain,
            prompts: vec![Prompt::new("only", "only", PromptTask::InDomain).unwrap()],
        };
        let mut rng = RngStream::from_seed(3);
        for _ in 0..20 {
            assert_eq!(sample_prompt(&mut rng, &set).id, "only");
        }
    }

    #[test]
    fn identical_streams_identical_draws() {
        let set = PromptLibrary::new().list_prompts(PromptTask::InDomain);
        let mut a = RngStream::from_seed(2024);
        let mut b = RngStream::from_seed(2024);
        for _ in 0..100 {
            assert_eq!(
                sample_prompt(&mut a, &set).id,
                sample_prompt(&mut b, &set).id
            );
        }
    }

    #[test]
    fn draws_are_uniform() {
        let set = PromptLibrary::new().list_prompts(PromptTask::InDomain);
        let mut rng = RngStream::from_seed(11);
        let n = 90_000;
        let mut counts = vec![0usize; set.len()];
        for _ in 0..n {
            let p = sample_prompt(&mut rng, &set);
            counts[set.prompts().iter().position(|q| q.id == p.id).unwrap()] += 1;
        }
        let expected = n as f64 / 9.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 8 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 26.12, "chi2 {chi2}");
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 9.0).abs() <= 0.006);
        }
    }
}
