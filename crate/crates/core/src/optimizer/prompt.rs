//! Optimization prompt assembly.
//!
//! Layout, in order: task instructions, the original query, the retrieved
//! documents (omitted when expansion is off), the best scored rephrasings so
//! far (omitted when there are none), and the output-format instruction.

use sha2::{Digest, Sha256};

use crate::alignment::QueryBucketEntry;
use crate::analyzer::truncate_tokens;
use crate::corpus::{Document, QueryRecord};

pub const TEMPLATE_VERSION: &str = "qoqa-prompt-v1";

const INSTRUCTIONS: &str = include_str!("../../templates/prompt_v1_instructions.txt");
const OUTPUT_FORMAT: &str = include_str!("../../templates/prompt_v1_output.txt");

pub const ORIGINAL_QUERY_LABEL: &str = "Original query: ";
pub const DOCUMENTS_HEADER: &str = "Retrieved documents:";
pub const SCORES_HEADER: &str = "Rephrased queries and scores:";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptOptions {
    pub include_documents: bool,
    /// Document bodies are cut after this many analyzer tokens.
    pub max_doc_tokens: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            include_documents: true,
            max_doc_tokens: 512,
        }
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn build_prompt(
    original: &QueryRecord,
    docs: &[&Document],
    top_entries: &[QueryBucketEntry],
    count: usize,
    opts: &PromptOptions,
) -> String {
    let mut p = String::new();
    p.push_str(INSTRUCTIONS.trim_end());
    p.push_str("\n\n");
    p.push_str(ORIGINAL_QUERY_LABEL);
    p.push_str(&one_line(&original.text));
    p.push_str("\n\n");

    if opts.include_documents && !docs.is_empty() {
        p.push_str(DOCUMENTS_HEADER);
        p.push('\n');
        for (i, doc) in docs.iter().enumerate() {
            p.push_str(&format!("Document {}: {}\n", i + 1, one_line(&doc.title)));
            p.push_str(&one_line(truncate_tokens(&doc.text, opts.max_doc_tokens)));
            p.push_str("\n\n");
        }
    }

    if !top_entries.is_empty() {
        p.push_str(SCORES_HEADER);
        p.push('\n');
        for e in top_entries {
            p.push_str(&format!("Query: {}\nScore: {:.4}\n", one_line(&e.text), e.score));
        }
        p.push('\n');
    }

    let noun = if count == 1 { "query" } else { "queries" };
    p.push_str(
        OUTPUT_FORMAT
            .trim_end()
            .replace("{count}", &count.to_string())
            .replace("{queries}", noun)
            .as_str(),
    );
    p.push('\n');
    p
}

/// Recovers the original query from a prompt produced by [`build_prompt`].
pub fn original_query(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(ORIGINAL_QUERY_LABEL))
        .map(str::trim)
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
