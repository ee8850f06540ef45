//! Versioned prompt templates. Placeholders are written `{name}`.

pub const CAPTION_VIEW: &str = include_str!("../assets/prompts/caption_view.v1.txt");
pub const SYNTHESIZE: &str = include_str!("../assets/prompts/synthesize.v1.txt");
pub const RELATION: &str = include_str!("../assets/prompts/relation.v1.txt");
pub const RAG_ANSWER: &str = include_str!("../assets/prompts/rag_answer.v1.txt");
pub const TARGET_TERMS: &str = include_str!("../assets/prompts/target_terms.v1.txt");

pub const VERSION: &str = "v1";

/// A text-generation backend. `task` names the prompt template in use so a
/// backend can route or log by purpose.
pub trait TextGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, task: &str, prompt: &str) -> crate::Result<String>;
}

/// Pulls the first balanced `{...}` block out of model output, which often
/// wraps JSON in prose or code fences.
pub fn extract_json_block(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
